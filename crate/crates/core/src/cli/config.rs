use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::connectome::GridParcellation;
use crate::error::{Error, Result};
use crate::eval::GridSpec;
use crate::prox::LossKind;
use crate::simulate::{
    default_profile, SimulationParams, DEFAULT_CLUSTER_A, DEFAULT_CLUSTER_B, DEFAULT_EFFECT_SIZE, PROFILE_SEED,
};
use crate::solver::{Regularizer, SolverConfig};

pub const TOOL_VERSION: &str = concat!("ssvm ", env!("CARGO_PKG_VERSION"));

/// Everything a run depends on. Missing keys take defaults; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Parcellation JSON; the 66-node slice when absent.
    pub parcellation: Option<PathBuf>,
    pub simulation: SimulationSection,
    pub solver: SolverSection,
    pub grid: GridSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub effect_size: f64,
    pub cluster_a: Vec<usize>,
    pub cluster_b: Vec<usize>,
    /// Seed of the edge mean/sd profile (not of the subjects).
    pub profile_seed: u64,
    pub n_control: usize,
    pub n_patient: usize,
    pub n_test_control: usize,
    pub n_test_patient: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub regularizer: Regularizer,
    pub lambda: f64,
    pub gamma: f64,
    pub rho: f64,
    pub loss: LossKind,
    pub epsilon: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Defaults to the simulation grid.
    pub lambdas: Option<Vec<f64>>,
    pub gammas: Option<Vec<f64>>,
    pub folds: usize,
    pub warm_start: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            parcellation: None,
            simulation: SimulationSection::default(),
            solver: SolverSection::default(),
            grid: GridSection::default(),
        }
    }
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            effect_size: DEFAULT_EFFECT_SIZE,
            cluster_a: DEFAULT_CLUSTER_A.to_vec(),
            cluster_b: DEFAULT_CLUSTER_B.to_vec(),
            profile_seed: PROFILE_SEED,
            n_control: 50,
            n_patient: 50,
            n_test_control: 250,
            n_test_patient: 250,
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let base = SolverConfig::new(Regularizer::FusedLasso, 2f64.powi(-6), 2f64.powi(-10));
        Self {
            regularizer: base.regularizer,
            lambda: base.lambda,
            gamma: base.gamma,
            rho: base.rho,
            loss: base.loss,
            epsilon: base.epsilon,
            max_iters: base.max_iters,
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        Self { lambdas: None, gammas: None, folds: 5, warm_start: true }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Hex SHA-256 of the canonical JSON of this config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { tool: TOOL_VERSION.to_string(), config_hash: self.hash(), config: self.clone() }
    }

    pub fn parcellation(&self) -> Result<GridParcellation> {
        match &self.parcellation {
            None => Ok(GridParcellation::slice66()),
            Some(path) => {
                let text = fs::read_to_string(path)?;
                GridParcellation::from_json(&text)
                    .map_err(|e| Error::Config(format!("parcellation {}: {e}", path.display())))
            }
        }
    }

    pub fn simulation_params(&self, seed: u64) -> Result<SimulationParams> {
        let parc = self.parcellation()?;
        let (mu, sigma) = default_profile(&parc, self.simulation.profile_seed);
        let params = SimulationParams {
            parc,
            mu,
            sigma,
            cluster_a: self.simulation.cluster_a.clone(),
            cluster_b: self.simulation.cluster_b.clone(),
            effect_size: self.simulation.effect_size,
            seed,
        };
        params.validate().map_err(|e| Error::Config(format!("simulation: {e}")))?;
        Ok(params)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let s = &self.solver;
        let config = SolverConfig {
            regularizer: s.regularizer,
            lambda: s.lambda,
            gamma: s.gamma,
            rho: s.rho,
            loss: s.loss,
            epsilon: s.epsilon,
            max_iters: s.max_iters,
            seed: self.seed,
            record_objective: true,
        };
        config.validate().map_err(|e| Error::Config(format!("solver: {e}")))?;
        Ok(config)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let reg = self.solver.regularizer;
        let mut spec = GridSpec::new(
            self.grid.lambdas.clone().unwrap_or_else(GridSpec::simulation_lambdas),
            self.grid.gammas.clone().unwrap_or_else(|| GridSpec::simulation_gammas(reg)),
            self.grid.folds,
            self.seed,
        );
        spec.warm_start = self.grid.warm_start;
        spec.validate().map_err(|e| Error::Config(format!("grid: {e}")))?;
        Ok(spec)
    }
}

/// Embedded in every JSON output; CSVs carry the hash in a `#` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub config_hash: String,
    pub config: RunConfig,
}

impl Provenance {
    pub fn csv_comment(&self) -> String {
        format!("# {} config={}", self.tool, self.config_hash)
    }
}
