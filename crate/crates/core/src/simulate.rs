//! Synthetic control/patient connectome cohorts with a planted bipartite
//! cluster of anomalous edges.
//!
//! Every edge is drawn independently in the Fisher (arctanh) domain as
//! `Normal(mu_k, sigma_k^2)` and mapped back with `tanh`. Patient draws add
//! `d * sigma_k` to the mean of every edge joining the two anomalous node
//! clusters.
//!
//! Randomness comes from ChaCha8 seeded with the cohort seed; subject `i`
//! draws from stream `i`, so cohorts are reproducible bit-for-bit on every
//! platform and independent of thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::connectome::{ConnectomeVector, GridParcellation, ParcellationFile};
use crate::error::{Error, Result};
use crate::solver::TrainingSet;

/// Seed of the shipped `mu`/`sigma` profile.
pub const PROFILE_SEED: u64 = 0x5EED_C0BE_2014;
pub const DEFAULT_EFFECT_SIZE: f64 = 0.6;
/// 0-based node indices of the two anomalous clusters on the 66-node slice.
pub const DEFAULT_CLUSTER_A: [usize; 5] = [7, 13, 14, 15, 22];
pub const DEFAULT_CLUSTER_B: [usize; 5] = [40, 47, 48, 49, 55];

#[derive(Debug, Clone)]
pub struct SimulationParams {
    pub parc: GridParcellation,
    /// Fisher-domain edge means.
    pub mu: Vec<f64>,
    /// Fisher-domain edge standard deviations, all `> 0`.
    pub sigma: Vec<f64>,
    pub cluster_a: Vec<usize>,
    pub cluster_b: Vec<usize>,
    pub effect_size: f64,
    pub seed: u64,
}

/// Default edge profile for a parcellation: `mu ~ Normal(0, 0.3^2)`,
/// `sigma ~ Uniform[0.15, 0.35]`, drawn once from `profile_seed`.
pub fn default_profile(parc: &GridParcellation, profile_seed: u64) -> (Vec<f64>, Vec<f64>) {
    let p = parc.feature_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(profile_seed);
    let mu_dist = Normal::new(0.0, 0.3).expect("valid normal");
    let sigma_dist = Uniform::new_inclusive(0.15, 0.35);
    let mu = (0..p).map(|_| mu_dist.sample(&mut rng)).collect();
    let sigma = (0..p).map(|_| sigma_dist.sample(&mut rng)).collect();
    (mu, sigma)
}

impl SimulationParams {
    /// The 66-node slice, the shipped profile and the default clusters.
    pub fn default_slice(seed: u64) -> Self {
        let parc = GridParcellation::slice66();
        let (mu, sigma) = default_profile(&parc, PROFILE_SEED);
        Self {
            parc,
            mu,
            sigma,
            cluster_a: DEFAULT_CLUSTER_A.to_vec(),
            cluster_b: DEFAULT_CLUSTER_B.to_vec(),
            effect_size: DEFAULT_EFFECT_SIZE,
            seed,
        }
    }

    pub fn with_effect_size(mut self, d: f64) -> Self {
        self.effect_size = d;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.parc.feature_dim();
        if self.mu.len() != p || self.sigma.len() != p {
            return Err(Error::structural(format!(
                "profile lengths (mu {}, sigma {}) do not match p = {p}",
                self.mu.len(),
                self.sigma.len()
            )));
        }
        if let Some(s) = self.sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Domain(format!("sigma entries must be > 0, got {s}")));
        }
        if !self.effect_size.is_finite() {
            return Err(Error::Domain("effect size must be finite".into()));
        }
        anomalous_edges(self).map(|_| ())
    }
}

/// Edge indices of the complete bipartite graph between the two clusters.
pub fn anomalous_edges(params: &SimulationParams) -> Result<Vec<usize>> {
    let d = params.parc.node_count();
    for &node in params.cluster_a.iter().chain(&params.cluster_b) {
        if node >= d {
            return Err(Error::structural(format!("cluster node {node} out of range ({d} nodes)")));
        }
    }
    if let Some(shared) = params.cluster_a.iter().find(|a| params.cluster_b.contains(a)) {
        return Err(Error::structural(format!("node {shared} is in both clusters")));
    }
    let mut edges = Vec::with_capacity(params.cluster_a.len() * params.cluster_b.len());
    for &a in &params.cluster_a {
        for &b in &params.cluster_b {
            edges.push(params.parc.edge_index(a, b)?);
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

fn sample<R: Rng + ?Sized>(params: &SimulationParams, anomalous: &[bool], shift: f64, rng: &mut R) -> ConnectomeVector {
    let values = params
        .mu
        .iter()
        .zip(&params.sigma)
        .zip(anomalous)
        .map(|((&mu, &sigma), &hit)| {
            let z: f64 = rng.sample(StandardNormal);
            let mean = if hit { mu + shift * sigma } else { mu };
            (mean + sigma * z).tanh()
        })
        .collect();
    ConnectomeVector::new(values, params.parc.node_count()).expect("profile length checked")
}

fn indicator(params: &SimulationParams) -> Result<Vec<bool>> {
    let mut mask = vec![false; params.parc.feature_dim()];
    for k in anomalous_edges(params)? {
        mask[k] = true;
    }
    Ok(mask)
}

pub fn sample_control<R: Rng + ?Sized>(params: &SimulationParams, rng: &mut R) -> Result<ConnectomeVector> {
    params.validate()?;
    Ok(sample(params, &indicator(params)?, 0.0, rng))
}

pub fn sample_patient<R: Rng + ?Sized>(params: &SimulationParams, rng: &mut R) -> Result<ConnectomeVector> {
    params.validate()?;
    Ok(sample(params, &indicator(params)?, params.effect_size, rng))
}

fn subject_rng(seed: u64, subject: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64);
    rng
}

/// Derives an independent seed for a named sub-cohort (e.g. `"test"`).
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// A labeled synthetic cohort and the planted support.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub data: TrainingSet,
    /// `true` at the anomalous edges.
    pub truth: Vec<bool>,
}

impl SyntheticCohort {
    pub fn truth_indices(&self) -> Vec<usize> {
        self.truth.iter().enumerate().filter(|(_, &t)| t).map(|(k, _)| k).collect()
    }
}

/// `n_control` rows labeled `-1` followed by `n_patient` rows labeled `+1`.
pub fn generate_dataset(params: &SimulationParams, n_control: usize, n_patient: usize) -> Result<SyntheticCohort> {
    params.validate()?;
    let truth = indicator(params)?;
    let total = n_control + n_patient;
    let rows: Vec<ConnectomeVector> = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut rng = subject_rng(params.seed, i);
            let shift = if i < n_control { 0.0 } else { params.effect_size };
            sample(params, &truth, shift, &mut rng)
        })
        .collect();
    let p = params.parc.feature_dim();
    let x = nalgebra::DMatrix::from_fn(total, p, |i, j| rows[i].values[j]);
    let y = (0..total).map(|i| if i < n_control { -1.0 } else { 1.0 }).collect();
    Ok(SyntheticCohort { data: TrainingSet::new(x, y)?, truth })
}

/// JSON sidecar describing a generated cohort.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortSidecar {
    pub params: ParamsRecord,
    pub ground_truth_support: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub parcellation: ParcellationFile,
    pub cluster_a: Vec<usize>,
    pub cluster_b: Vec<usize>,
    pub effect_size: f64,
    pub seed: u64,
    pub n_control: usize,
    pub n_patient: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl CohortSidecar {
    pub fn new(params: &SimulationParams, n_control: usize, n_patient: usize) -> Result<Self> {
        Ok(Self {
            params: ParamsRecord {
                parcellation: params.parc.to_file(),
                cluster_a: params.cluster_a.clone(),
                cluster_b: params.cluster_b.clone(),
                effect_size: params.effect_size,
                seed: params.seed,
                n_control,
                n_patient,
                mu: params.mu.clone(),
                sigma: params.sigma.clone(),
            },
            ground_truth_support: anomalous_edges(params)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_clusters_give_25_edges() {
        let params = SimulationParams::default_slice(1);
        assert_eq!(anomalous_edges(&params).unwrap().len(), 25);
    }

    #[test]
    fn singleton_and_empty_clusters() {
        let mut params = SimulationParams::default_slice(1);
        params.cluster_a = vec![3];
        params.cluster_b = vec![9];
        assert_eq!(anomalous_edges(&params).unwrap(), vec![params.parc.edge_index(9, 3).unwrap()]);

        params.cluster_a.clear();
        assert!(anomalous_edges(&params).unwrap().is_empty());
        let mut r1 = subject_rng(5, 0);
        let mut r2 = subject_rng(5, 0);
        assert_eq!(sample_control(&params, &mut r1).unwrap(), sample_patient(&params, &mut r2).unwrap());
    }

    #[test]
    fn overlapping_clusters_rejected() {
        let mut params = SimulationParams::default_slice(1);
        params.cluster_b.push(params.cluster_a[0]);
        assert!(matches!(anomalous_edges(&params), Err(Error::Structural(_))));
        params.cluster_b = vec![66];
        assert!(anomalous_edges(&params).is_err());
    }

    #[test]
    fn zero_effect_makes_classes_identical() {
        let params = SimulationParams::default_slice(3).with_effect_size(0.0);
        let mut r1 = subject_rng(11, 4);
        let mut r2 = subject_rng(11, 4);
        assert_eq!(sample_control(&params, &mut r1).unwrap(), sample_patient(&params, &mut r2).unwrap());
    }

    #[test]
    fn tiny_sigma_and_zero_mean_collapse_to_zero() {
        let mut params = SimulationParams::default_slice(3);
        params.mu.iter_mut().for_each(|m| *m = 0.0);
        params.sigma.iter_mut().for_each(|s| *s = 1e-12);
        let x = sample_control(&params, &mut subject_rng(0, 0)).unwrap();
        assert!(x.values.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn cohort_shapes_and_labels() {
        let params = SimulationParams::default_slice(9);
        let c = generate_dataset(&params, 50, 50).unwrap();
        assert_eq!(c.data.n(), 100);
        assert_eq!(c.data.p(), 2145);
        assert_eq!(c.data.y.iter().filter(|&&y| y > 0.0).count(), 50);
        assert_eq!(c.truth_indices().len(), 25);
        assert!(c.data.x.iter().all(|v| v.abs() < 1.0));

        let empty = generate_dataset(&params, 0, 0).unwrap();
        assert!(empty.data.is_empty());
        assert_eq!(empty.truth_indices().len(), 25);
    }

    #[test]
    fn cohorts_are_seed_deterministic() {
        let params = SimulationParams::default_slice(21);
        let a = generate_dataset(&params, 4, 3).unwrap();
        let b = generate_dataset(&params, 4, 3).unwrap();
        assert_eq!(a.data, b.data);
        let c = generate_dataset(&params.clone().with_seed(22), 4, 3).unwrap();
        assert_ne!(a.data, c.data);
        assert_ne!(derive_seed(21, "test"), derive_seed(21, "train"));
    }

    #[test]
    fn invalid_sigma_rejected() {
        let mut params = SimulationParams::default_slice(1);
        params.sigma[0] = 0.0;
        assert!(matches!(params.validate(), Err(Error::Domain(_))));
    }
}
