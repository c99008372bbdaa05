//! ADMM solvers for the regularized empirical-risk problem
//!
//! ```text
//! min_w  (1/n) sum_i loss(y_i <w, x_i>) + lambda ||w||_1 + R(w)
//! ```
//!
//! with `R` one of: nothing (Lasso), `gamma/2 ||w||^2` (Elastic-net),
//! `gamma/2 sum_j sum_{k in N_j} (w_j - w_k)^2` (GraphNet) or
//! `gamma sum_j sum_{k in N_j} |w_j - w_k|` (fused Lasso).
//!
//! Structured problems use the split `YXw = v_a, w = v_b, C~ v_d = v_c,
//! A w = v_d`. Splitting `C w = v_c` directly on the unaugmented
//! coordinates would need `(C^T C + I)^{-1}` for an irregular Laplacian; the
//! zero-padded `v_d` is what makes that inverse an FFT.

mod elastic;
mod lemma;
mod structured;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::connectome::{
    build_augmentation, spatial_penalty, AugmentationMap, ConnectomeVector, GridParcellation,
};
use crate::error::{Error, Result};
use crate::prox::LossKind;
use crate::spectral::{build_kernel, SpectralKernel};

pub use elastic::{fit_elasticnet, fit_elasticnet_from, fit_elasticnet_with};
pub(crate) use elastic::shift_for as elasticnet_shift;
pub use lemma::{precompute_h, InversionLemma};
pub use structured::{fit_structured, fit_structured_from, fit_structured_with, SolverState};

/// Coefficients with magnitude at or below this count as zero.
pub const NNZ_TOL: f64 = 1e-8;

/// Any block norm above this aborts the fit.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    Lasso,
    #[serde(alias = "enet")]
    ElasticNet,
    #[serde(alias = "gnet")]
    Graphnet,
    #[serde(alias = "flasso")]
    FusedLasso,
}

impl Regularizer {
    pub const ALL: [Regularizer; 4] =
        [Regularizer::Lasso, Regularizer::ElasticNet, Regularizer::Graphnet, Regularizer::FusedLasso];

    pub fn is_structured(self) -> bool {
        matches!(self, Regularizer::Graphnet | Regularizer::FusedLasso)
    }

    /// Exponent of the spatial penalty (1 for fused Lasso, 2 for GraphNet).
    pub fn q(self) -> Option<u32> {
        match self {
            Regularizer::FusedLasso => Some(1),
            Regularizer::Graphnet => Some(2),
            _ => None,
        }
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::Lasso => "lasso",
            Regularizer::ElasticNet => "enet",
            Regularizer::Graphnet => "graphnet",
            Regularizer::FusedLasso => "flasso",
        })
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lasso" => Regularizer::Lasso,
            "enet" | "elastic_net" => Regularizer::ElasticNet,
            "graphnet" | "gnet" => Regularizer::Graphnet,
            "flasso" | "fused_lasso" => Regularizer::FusedLasso,
            _ => return Err(Error::Config(format!("unknown regularizer '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub regularizer: Regularizer,
    pub lambda: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate the objective after every iteration.
    #[serde(default = "defaults::record_objective")]
    pub record_objective: bool,
}

mod defaults {
    pub fn rho() -> f64 {
        1.0
    }
    pub fn epsilon() -> f64 {
        4e-3
    }
    pub fn max_iters() -> usize {
        400
    }
    pub fn record_objective() -> bool {
        true
    }
}

impl SolverConfig {
    pub fn new(regularizer: Regularizer, lambda: f64, gamma: f64) -> Self {
        Self {
            regularizer,
            lambda,
            gamma,
            rho: defaults::rho(),
            loss: LossKind::Hinge,
            epsilon: defaults::epsilon(),
            max_iters: defaults::max_iters(),
            seed: 0,
            record_objective: true,
        }
    }

    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_tolerance(mut self, epsilon: f64, max_iters: usize) -> Self {
        self.epsilon = epsilon;
        self.max_iters = max_iters;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    /// `gamma` actually used: Lasso ignores it.
    pub fn effective_gamma(&self) -> f64 {
        if self.regularizer == Regularizer::Lasso {
            0.0
        } else {
            self.gamma
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::Domain(format!("{what} must be finite and >= 0, got {v}"));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(bad("lambda", self.lambda));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(bad("gamma", self.gamma));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Domain(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(Error::Domain("max_iters must be >= 1".into()));
        }
        self.loss.validate()
    }
}

/// Design matrix (rows are connectome vectors) and `+1/-1` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl TrainingSet {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::structural(format!("{} rows but {} labels", x.nrows(), y.len())));
        }
        if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(Error::structural(format!("labels must be +1 or -1, got {bad}")));
        }
        Ok(Self { x, y })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>, p: usize) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::structural(format!("row of length {} but p = {p}", r.len())));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(x, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> TrainingSet {
        TrainingSet {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub(crate) fn check_fit(&self, p: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::structural("cannot fit on an empty training set"));
        }
        if self.p() != p {
            return Err(Error::structural(format!(
                "design has {} columns, parcellation has p = {p}",
                self.p()
            )));
        }
        Ok(())
    }
}

/// Parcellation plus everything derived from it that the structured solvers
/// need; build once and share across fits.
#[derive(Debug, Clone)]
pub struct Structure {
    pub parc: GridParcellation,
    pub map: AugmentationMap,
    pub kernel: SpectralKernel,
}

impl Structure {
    pub fn new(parc: GridParcellation) -> Self {
        let map = build_augmentation(&parc);
        let kernel = build_kernel(&map);
        Self { parc, map, kernel }
    }

    pub fn p(&self) -> usize {
        self.parc.feature_dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: SolverConfig,
    pub w: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub nnz: usize,
    #[serde(default)]
    pub objective_trace: Vec<f64>,
}

impl Model {
    pub fn new(config: SolverConfig, w: Vec<f64>, iterations_run: usize, converged: bool, trace: Vec<f64>) -> Self {
        let nnz = count_nnz(&w);
        Self { config, w, iterations_run, converged, nnz, objective_trace: trace }
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        decision_value(self, x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        predict(self, x)
    }
}

pub fn count_nnz(w: &[f64]) -> usize {
    w.iter().filter(|v| v.abs() > NNZ_TOL).count()
}

pub fn decision_value(model: &Model, x: &[f64]) -> Result<f64> {
    if x.len() != model.w.len() {
        return Err(Error::structural(format!(
            "feature vector has length {}, model has {}",
            x.len(),
            model.w.len()
        )));
    }
    Ok(model.w.iter().zip(x).map(|(w, x)| w * x).sum())
}

/// `sign(<w, x>)`, with `sign(0) = +1`.
pub fn predict(model: &Model, x: &[f64]) -> Result<f64> {
    Ok(if decision_value(model, x)? >= 0.0 { 1.0 } else { -1.0 })
}

pub fn predict_connectome(model: &Model, x: &ConnectomeVector) -> Result<f64> {
    predict(model, &x.values)
}

/// Average margin loss `(1/n) sum_i loss(y_i <w, x_i>)`.
pub fn empirical_risk(w: &[f64], data: &TrainingSet, loss: LossKind) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let margins = &data.x * DVector::from_column_slice(w);
    margins.iter().zip(&data.y).map(|(m, y)| loss.value(y * m)).sum::<f64>() / data.n() as f64
}

/// Full objective of `config.regularizer` at `w`. Structured regularizers
/// need `structure`.
pub fn objective(w: &[f64], data: &TrainingSet, structure: Option<&Structure>, config: &SolverConfig) -> Result<f64> {
    if w.len() != data.p() {
        return Err(Error::structural(format!("w has length {}, data has p = {}", w.len(), data.p())));
    }
    let risk = empirical_risk(w, data, config.loss);
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let gamma = config.effective_gamma();
    let extra = match config.regularizer {
        Regularizer::Lasso => 0.0,
        Regularizer::ElasticNet => 0.5 * gamma * w.iter().map(|v| v * v).sum::<f64>(),
        reg => {
            let s = structure.ok_or_else(|| Error::structural(format!("{reg} objective needs the grid structure")))?;
            let q = reg.q().expect("structured");
            gamma / q as f64 * spatial_penalty(w, &s.map, q)?
        }
    };
    Ok(risk + config.lambda * l1 + extra)
}

/// Dispatches to the solver for `config.regularizer`.
pub fn fit(data: &TrainingSet, structure: Option<&Structure>, config: &SolverConfig) -> Result<Model> {
    if config.regularizer.is_structured() {
        let s = structure.ok_or_else(|| {
            Error::structural(format!("{} needs a grid parcellation", config.regularizer))
        })?;
        fit_structured(data, s, config)
    } else {
        fit_elasticnet(data, config)
    }
}

pub(crate) fn check_finite(iteration: usize, blocks: &[(&str, &[f64])]) -> Result<()> {
    for (name, v) in blocks {
        let sq: f64 = v.iter().map(|x| x * x).sum();
        if !sq.is_finite() {
            return Err(Error::Divergence { iteration, reason: format!("non-finite values in {name}") });
        }
        if sq.sqrt() > DIVERGENCE_NORM {
            return Err(Error::Divergence {
                iteration,
                reason: format!("norm of {name} exceeded {DIVERGENCE_NORM:e}"),
            });
        }
    }
    Ok(())
}

/// Relative-change stopping rule. `iteration` counts completed iterations
/// (1-based); the first one is never tested since `w` starts at zero.
pub(crate) fn should_stop(iteration: usize, prev: &[f64], next: &[f64], epsilon: f64) -> bool {
    if iteration < 2 {
        return false;
    }
    let mut diff = 0.0;
    let mut base = 0.0;
    for (a, b) in prev.iter().zip(next) {
        diff += (b - a) * (b - a);
        base += a * a;
    }
    if base == 0.0 {
        return next.iter().all(|&v| v == 0.0);
    }
    diff.sqrt() <= epsilon * base.sqrt()
}
