//! Cross-validation, regularization grid search, edge-recovery ROC and
//! weight summaries.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectome::GridParcellation;
use crate::error::{Error, Result};
use crate::solver::{
    self, count_nnz, elasticnet_shift, fit_elasticnet_from, fit_structured_from, InversionLemma, Model,
    Regularizer, SolverConfig, SolverState, Structure, TrainingSet, NNZ_TOL,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validate: Vec<usize>,
}

/// Stratified `k`-fold partition: each class is shuffled with `seed` and
/// dealt round-robin, continuing the deal across classes so fold sizes
/// differ by at most one.
pub fn kfold_split(n: usize, k: usize, labels: &[f64], seed: u64) -> Result<Vec<Fold>> {
    if k < 2 || k > n {
        return Err(Error::structural(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    if labels.len() != n {
        return Err(Error::structural(format!("{} labels for n = {n}", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negatives: Vec<usize> = (0..n).filter(|&i| labels[i] < 0.0).collect();
    let mut positives: Vec<usize> = (0..n).filter(|&i| labels[i] >= 0.0).collect();
    negatives.shuffle(&mut rng);
    positives.shuffle(&mut rng);

    let mut validate = vec![Vec::new(); k];
    for (slot, i) in negatives.into_iter().chain(positives).enumerate() {
        validate[slot % k].push(i);
    }
    Ok(validate
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            let train = (0..n).filter(|i| v.binary_search(i).is_err()).collect();
            Fold { train, validate: v }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    /// Start each fit from its neighbor's ADMM state along the lambda path.
    #[serde(default = "default_warm_start")]
    pub warm_start: bool,
}

fn default_warm_start() -> bool {
    true
}

/// `2^start, 2^(start+step), ..., 2^stop`.
pub fn log2_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| (start + i as f64 * step).exp2()).collect()
}

impl GridSpec {
    pub fn new(lambdas: Vec<f64>, gammas: Vec<f64>, folds: usize, seed: u64) -> Self {
        Self { lambdas, gammas, folds, seed, warm_start: true }
    }

    /// Default lambda range, shared by every regularizer.
    pub fn simulation_lambdas() -> Vec<f64> {
        log2_grid(-11.0, -3.5, 0.25)
    }

    /// Default gamma range for `reg` (a single zero for Lasso).
    pub fn simulation_gammas(reg: Regularizer) -> Vec<f64> {
        match reg {
            Regularizer::Lasso => vec![0.0],
            Regularizer::FusedLasso => log2_grid(-16.0, -5.0, 0.5),
            Regularizer::ElasticNet | Regularizer::Graphnet => log2_grid(-16.0, 2.0, 0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("lambda", &self.lambdas), ("gamma", &self.gammas)] {
            if g.is_empty() {
                return Err(Error::structural(format!("{name} grid is empty")));
            }
            if g.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::structural(format!("{name} grid must be strictly increasing")));
            }
            if g.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::structural(format!("{name} grid entries must be finite and >= 0")));
            }
        }
        if self.folds < 2 {
            return Err(Error::structural(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// `accuracy[i][j]` at `(lambdas[i], gammas[j])`, pooled over folds.
    pub accuracy: Vec<Vec<f64>>,
    pub mean_nnz: Vec<Vec<f64>>,
    pub best_cell: (usize, usize),
}

impl GridResult {
    pub fn best_params(&self) -> (f64, f64) {
        (self.lambdas[self.best_cell.0], self.gammas[self.best_cell.1])
    }

    pub fn best_accuracy(&self) -> f64 {
        self.accuracy[self.best_cell.0][self.best_cell.1]
    }

    /// Highest accuracy among cells with `mean_nnz <= budget`, same
    /// tie-break as `best_cell`.
    pub fn best_within_budget(&self, budget: f64) -> Option<(usize, usize)> {
        best_cell(&self.accuracy, |i, j| self.mean_nnz[i][j] <= budget)
    }
}

/// Argmax of `acc` over admissible cells; ties go to larger lambda, then
/// larger gamma.
fn best_cell(acc: &[Vec<f64>], admissible: impl Fn(usize, usize) -> bool) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (i, row) in acc.iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            if !admissible(i, j) {
                continue;
            }
            match best {
                Some((bi, bj)) if acc[bi][bj] > a => {}
                Some((bi, bj)) if acc[bi][bj] == a && (bi, bj) > (i, j) => {}
                _ => best = Some((i, j)),
            }
        }
    }
    best
}

enum Cache {
    /// One shift-2 cache per fold.
    Structured(Vec<InversionLemma>),
    /// One cache per (fold, gamma).
    ElasticNet(Vec<Vec<InversionLemma>>),
}

fn fit_cached(
    data: &TrainingSet,
    structure: Option<&Structure>,
    lemma: &InversionLemma,
    config: &SolverConfig,
    init: Option<&SolverState>,
) -> Result<(Model, SolverState)> {
    if config.regularizer.is_structured() {
        let s = structure.ok_or_else(|| Error::structural("structured regularizer needs a parcellation"))?;
        fit_structured_from(data, s, lemma, config, init)
    } else {
        fit_elasticnet_from(data, lemma, config, init)
    }
}

/// `k`-fold CV accuracy and mean sparsity over the `(lambda, gamma)` grid.
/// `base` supplies the regularizer, loss and stopping rule.
///
/// Each (fold, gamma) pair is one job that walks the lambda grid from the
/// largest value down; with `grid.warm_start` every fit starts from the
/// ADMM state of the previous (sparser) one.
pub fn grid_search(
    data: &TrainingSet,
    structure: Option<&Structure>,
    grid: &GridSpec,
    base: &SolverConfig,
) -> Result<GridResult> {
    grid.validate()?;
    let folds = kfold_split(data.n(), grid.folds, &data.y, grid.seed)?;
    let subsets: Vec<(TrainingSet, TrainingSet)> =
        folds.iter().map(|f| (data.subset(&f.train), data.subset(&f.validate))).collect();

    let config_for = |lambda: f64, gamma: f64| {
        let mut c = base.clone();
        c.lambda = lambda;
        c.gamma = gamma;
        c.record_objective = false;
        c
    };
    let cache = if base.regularizer.is_structured() {
        Cache::Structured(
            subsets.par_iter().map(|(tr, _)| InversionLemma::new(&tr.x, 2.0)).collect::<Result<_>>()?,
        )
    } else {
        Cache::ElasticNet(
            subsets
                .par_iter()
                .map(|(tr, _)| {
                    grid.gammas
                        .iter()
                        .map(|&g| InversionLemma::new(&tr.x, elasticnet_shift(&config_for(0.0, g))))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?,
        )
    };

    let (nl, ng, nf) = (grid.lambdas.len(), grid.gammas.len(), folds.len());
    let chains: Vec<(usize, usize)> = (0..ng).flat_map(|j| (0..nf).map(move |f| (j, f))).collect();
    let outcomes: Vec<Vec<(usize, usize)>> = chains
        .par_iter()
        .map(|&(j, f)| {
            let lemma = match &cache {
                Cache::Structured(c) => &c[f],
                Cache::ElasticNet(c) => &c[f][j],
            };
            let (train, val) = &subsets[f];
            let mut state: Option<SolverState> = None;
            let mut per_lambda = vec![(0, 0); nl];
            for i in (0..nl).rev() {
                let (lambda, gamma) = (grid.lambdas[i], grid.gammas[j]);
                let init = if grid.warm_start { state.as_ref() } else { None };
                let (model, next) = fit_cached(train, structure, lemma, &config_for(lambda, gamma), init)
                    .map_err(|e| Error::GridCell { lambda, gamma, source: Box::new(e) })?;
                per_lambda[i] = (correct_count(&model, val)?, model.nnz);
                state = Some(next);
            }
            Ok(per_lambda)
        })
        .collect::<Result<_>>()?;

    let mut accuracy = vec![vec![0.0; ng]; nl];
    let mut mean_nnz = vec![vec![0.0; ng]; nl];
    for (&(j, _), per_lambda) in chains.iter().zip(&outcomes) {
        for (i, &(correct, nnz)) in per_lambda.iter().enumerate() {
            accuracy[i][j] += correct as f64;
            mean_nnz[i][j] += nnz as f64;
        }
    }
    for i in 0..nl {
        for j in 0..ng {
            accuracy[i][j] /= data.n() as f64;
            mean_nnz[i][j] /= nf as f64;
        }
    }
    let best_cell = best_cell(&accuracy, |_, _| true).expect("grid is non-empty");
    Ok(GridResult { lambdas: grid.lambdas.clone(), gammas: grid.gammas.clone(), accuracy, mean_nnz, best_cell })
}

/// Grid search, then refit on all of `data` at the best cell.
pub fn tune_and_fit(
    data: &TrainingSet,
    structure: Option<&Structure>,
    grid: &GridSpec,
    base: &SolverConfig,
) -> Result<(GridResult, Model)> {
    let result = grid_search(data, structure, grid, base)?;
    let (lambda, gamma) = result.best_params();
    let mut config = base.clone();
    config.lambda = lambda;
    config.gamma = gamma;
    let model = solver::fit(data, structure, &config)?;
    Ok((result, model))
}

/// One model per CV fold at a fixed configuration.
pub fn fold_models(
    data: &TrainingSet,
    structure: Option<&Structure>,
    config: &SolverConfig,
    folds: usize,
    seed: u64,
) -> Result<Vec<Model>> {
    kfold_split(data.n(), folds, &data.y, seed)?
        .par_iter()
        .map(|f| solver::fit(&data.subset(&f.train), structure, config))
        .collect()
}

fn correct_count(model: &Model, data: &TrainingSet) -> Result<usize> {
    let mut correct = 0;
    for i in 0..data.n() {
        let row: Vec<f64> = data.x.row(i).iter().copied().collect();
        if model.predict(&row)? == data.y[i] {
            correct += 1;
        }
    }
    Ok(correct)
}

/// Fraction of correctly classified rows.
pub fn accuracy(model: &Model, test: &TrainingSet) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::structural("accuracy of an empty test set"));
    }
    Ok(correct_count(model, test)? as f64 / test.n() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC of recovering `truth` by thresholding `|w|`. Points run from
/// `(0, 0)` (threshold `+inf`) down through every distinct `|w|`; tied scores
/// move both rates at once, so the trapezoid AUC equals the Mann-Whitney
/// statistic with ties counted as one half.
pub fn roc_edge_recovery(w: &[f64], truth: &[bool]) -> Result<Roc> {
    if w.len() != truth.len() {
        return Err(Error::structural(format!("{} weights but {} truth flags", w.len(), truth.len())));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::structural("truth support must be non-empty and not cover every coordinate"));
    }
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()));

    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut idx = 0;
    while idx < order.len() {
        let score = w[order[idx]].abs();
        while idx < order.len() && w[order[idx]].abs() == score {
            if truth[order[idx]] {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        let prev = *points.last().expect("non-empty");
        let point = RocPoint {
            threshold: score,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        };
        auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) / 2.0;
        points.push(point);
    }
    Ok(Roc { points, auc })
}

/// Elementwise median; even counts average the two central values.
pub fn median_weight(weights: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = weights.first().ok_or_else(|| Error::structural("median of no weight vectors"))?;
    let p = first.len();
    if weights.iter().any(|w| w.len() != p) {
        return Err(Error::structural("weight vectors differ in length"));
    }
    let m = weights.len();
    let mut column = vec![0.0; m];
    Ok((0..p)
        .map(|j| {
            for (c, w) in column.iter_mut().zip(weights) {
                *c = w[j];
            }
            column.sort_by(f64::total_cmp);
            if m % 2 == 1 {
                column[m / 2]
            } else {
                0.5 * (column[m / 2 - 1] + column[m / 2])
            }
        })
        .collect())
}

/// Number of selected edges incident to each node.
pub fn node_degree(w: &[f64], parc: &GridParcellation) -> Result<Vec<usize>> {
    if w.len() != parc.feature_dim() {
        return Err(Error::structural(format!("w has length {}, p = {}", w.len(), parc.feature_dim())));
    }
    let mut degree = vec![0; parc.node_count()];
    for (j, v) in w.iter().enumerate() {
        if v.abs() > NNZ_TOL {
            let (a, b) = parc.edge_nodes(j)?;
            degree[a] += 1;
            degree[b] += 1;
        }
    }
    Ok(degree)
}

pub fn nnz(w: &[f64]) -> usize {
    count_nnz(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_ten_into_five() {
        let labels: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let folds = kfold_split(10, 5, &labels, 3).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!(f.validate.len(), 2);
            assert_eq!(f.validate.iter().filter(|&&i| labels[i] > 0.0).count(), 1);
            assert_eq!(f.train.len(), 8);
        }
        assert_eq!(folds, kfold_split(10, 5, &labels, 3).unwrap());
    }

    #[test]
    fn hundred_into_five_folds_of_twenty() {
        let labels: Vec<f64> = (0..100).map(|i| if i < 50 { -1.0 } else { 1.0 }).collect();
        let folds = kfold_split(100, 5, &labels, 0).unwrap();
        assert!(folds.iter().all(|f| f.validate.len() == 20));
    }

    #[test]
    fn too_many_folds() {
        assert!(kfold_split(3, 4, &[1.0, -1.0, 1.0], 0).is_err());
        assert!(kfold_split(3, 1, &[1.0, -1.0, 1.0], 0).is_err());
    }

    #[test]
    fn log2_grid_endpoints() {
        let l = GridSpec::simulation_lambdas();
        assert_eq!(l.len(), 31);
        assert_eq!(l[0], 2f64.powf(-11.0));
        assert!((l[30] - 2f64.powf(-3.5)).abs() < 1e-15);
        assert_eq!(GridSpec::simulation_gammas(Regularizer::FusedLasso).len(), 23);
        assert_eq!(GridSpec::simulation_gammas(Regularizer::Graphnet).len(), 37);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(vec![], vec![0.0], 5, 0).validate().is_err());
        assert!(GridSpec::new(vec![1.0, 1.0], vec![0.0], 5, 0).validate().is_err());
        assert!(GridSpec::new(vec![1.0], vec![0.0], 1, 0).validate().is_err());
        assert!(GridSpec::new(vec![1.0, 2.0], vec![0.0], 2, 0).validate().is_ok());
    }

    #[test]
    fn best_cell_tie_break_prefers_sparser() {
        let acc = vec![vec![0.8, 0.9], vec![0.9, 0.7], vec![0.9, 0.9]];
        assert_eq!(best_cell(&acc, |_, _| true), Some((2, 1)));
        assert_eq!(best_cell(&acc, |i, _| i < 2), Some((1, 0)));
    }

    #[test]
    fn roc_perfect_and_inverted() {
        let truth = vec![true, false, false, true, false];
        let w = vec![1.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(roc_edge_recovery(&w, &truth).unwrap().auc, 1.0);
        let inv: Vec<f64> = truth.iter().map(|&t| if t { 0.0 } else { 1.0 }).collect();
        assert_eq!(roc_edge_recovery(&inv, &truth).unwrap().auc, 0.0);
        let flat = vec![0.3; 5];
        assert_eq!(roc_edge_recovery(&flat, &truth).unwrap().auc, 0.5);
    }

    #[test]
    fn roc_degenerate_truth() {
        assert!(roc_edge_recovery(&[1.0, 2.0], &[false, false]).is_err());
        assert!(roc_edge_recovery(&[1.0, 2.0], &[true, true]).is_err());
        assert!(roc_edge_recovery(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_weight(&[vec![1.0, -2.0]]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(
            median_weight(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]]).unwrap(),
            vec![2.0, 3.0]
        );
        assert_eq!(median_weight(&[vec![0.0], vec![2.0]]).unwrap(), vec![1.0]);
        let sparse = [vec![0.0, 1.0], vec![0.0, 2.0], vec![5.0, 3.0]];
        assert_eq!(median_weight(&sparse).unwrap()[0], 0.0);
        assert!(median_weight(&[]).is_err());
        assert!(median_weight(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn degree_examples() {
        let parc = GridParcellation::full([2, 2, 1]).unwrap();
        assert_eq!(node_degree(&[0.0; 6], &parc).unwrap(), vec![0; 4]);
        let mut w = vec![0.0; 6];
        let j = parc.edge_index(3, 1).unwrap();
        w[j] = -0.5;
        assert_eq!(node_degree(&w, &parc).unwrap(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn all_positive_model_on_balanced_set() {
        let data = TrainingSet::from_rows(
            &[vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            vec![1.0, -1.0, 1.0, -1.0],
            1,
        )
        .unwrap();
        let model = Model::new(SolverConfig::new(Regularizer::Lasso, 1.0, 0.0), vec![0.0], 0, true, vec![]);
        assert_eq!(accuracy(&model, &data).unwrap(), 0.5);
        assert!(accuracy(&model, &data.subset(&[])).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition(n in 2usize..60, k in 2usize..8, seed in any::<u64>(), bits in any::<u64>()) {
            prop_assume!(k <= n);
            let labels: Vec<f64> = (0..n).map(|i| if bits >> (i % 64) & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let folds = kfold_split(n, k, &labels, seed).unwrap();
            let mut seen = vec![0; n];
            for f in &folds {
                for &i in &f.validate { seen[i] += 1; }
                prop_assert_eq!(f.train.len() + f.validate.len(), n);
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = folds.iter().map(|f| f.validate.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn auc_invariant_to_monotone_rescaling(w in prop::collection::vec(-3.0f64..3.0, 12), bits in 1u16..4095) {
            let truth: Vec<bool> = (0..12).map(|i| bits >> i & 1 == 1).collect();
            let a = roc_edge_recovery(&w, &truth).unwrap().auc;
            let scaled: Vec<f64> = w.iter().map(|v| (v.abs() * 2.0).powi(3) + 0.1).collect();
            let b = roc_edge_recovery(&scaled, &truth).unwrap().auc;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn median_commutes_with_permutation(ws in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 1..6), rot in 0usize..6) {
            let m = median_weight(&ws).unwrap();
            let permuted: Vec<Vec<f64>> = ws.iter().map(|w| { let mut v = w.clone(); v.rotate_left(rot); v }).collect();
            let mut expect = m.clone();
            expect.rotate_left(rot);
            prop_assert_eq!(median_weight(&permuted).unwrap(), expect);
        }
    }
}
