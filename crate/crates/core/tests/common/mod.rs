//! Independent oracles shared by the integration and acceptance tests. None
//! of these go through the augmented array or the FFT.

#![allow(dead_code)]

use connectome_ssvm::prox::{loss_value, LossKind};
use connectome_ssvm::solver::{Regularizer, SolverConfig, TrainingSet};
use connectome_ssvm::GridParcellation;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Lower-triangular column-major edge index of nodes `a > b` among `d`.
pub fn edge_of(d: usize, a: usize, b: usize) -> usize {
    b * d - b * (b + 1) / 2 + (a - b - 1)
}

/// Row-major lattice coordinates of every node (nodes in scan order).
pub fn node_coords(parc: &GridParcellation) -> Vec<[i64; 3]> {
    let [nx, ny, nz] = parc.dims();
    let mut out = Vec::new();
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                if parc.support()[(x * ny + y) * nz + z] {
                    out.push([x as i64, y as i64, z as i64]);
                }
            }
        }
    }
    out
}

/// Unordered neighbor pairs `(j, k)`, `j < k`, of edges: one endpoint moves
/// one lattice step, both edges strictly below the diagonal.
pub fn neighbor_pairs(parc: &GridParcellation) -> Vec<(usize, usize)> {
    let coords = node_coords(parc);
    let d = coords.len();
    let adjacent = |u: usize, v: usize| {
        coords[u].iter().zip(&coords[v]).map(|(a, b)| (a - b).abs()).sum::<i64>() == 1
    };
    let mut pairs = Vec::new();
    for a in 0..d {
        for b in 0..a {
            let j = edge_of(d, a, b);
            for a2 in 0..d {
                if a2 > b && adjacent(a, a2) {
                    let k = edge_of(d, a2, b);
                    if j < k {
                        pairs.push((j, k));
                    }
                }
            }
            for b2 in 0..d {
                if a > b2 && adjacent(b, b2) {
                    let k = edge_of(d, a, b2);
                    if j < k {
                        pairs.push((j, k));
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// `sum_j sum_{k in N_j} |w_j - w_k|^q`, every unordered pair counted twice.
pub fn direct_double_sum(w: &[f64], pairs: &[(usize, usize)], q: i32) -> f64 {
    2.0 * pairs.iter().map(|&(j, k)| (w[j] - w[k]).abs().powi(q)).sum::<f64>()
}

/// Full objective written out directly.
pub fn direct_objective(w: &[f64], data: &TrainingSet, pairs: &[(usize, usize)], cfg: &SolverConfig) -> f64 {
    let n = data.n() as f64;
    let risk: f64 = (0..data.n())
        .map(|i| {
            let m: f64 = data.y[i] * (0..data.p()).map(|j| data.x[(i, j)] * w[j]).sum::<f64>();
            loss_value(cfg.loss, m)
        })
        .sum::<f64>()
        / n;
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let g = cfg.gamma;
    let extra = match cfg.regularizer {
        Regularizer::Lasso => 0.0,
        Regularizer::ElasticNet => 0.5 * g * w.iter().map(|v| v * v).sum::<f64>(),
        Regularizer::Graphnet => 0.5 * g * direct_double_sum(w, pairs, 2),
        Regularizer::FusedLasso => g * direct_double_sum(w, pairs, 1),
    };
    risk + cfg.lambda * l1 + extra
}

fn loss_derivative(kind: LossKind, m: f64) -> f64 {
    match kind {
        LossKind::Hinge => {
            if m < 1.0 {
                -1.0
            } else {
                0.0
            }
        }
        LossKind::TruncatedLeastSquares => -2.0 * (1.0 - m).max(0.0),
        LossKind::HuberizedHinge { delta } => {
            if m > 1.0 {
                0.0
            } else if m >= 1.0 - delta {
                -(1.0 - m) / delta
            } else {
                -1.0
            }
        }
    }
}

/// How close to a kink an argument must be to count as sitting on it.
#[derive(Debug, Clone, Copy)]
pub struct KinkTolerance {
    /// `|y_i <x_i, w> - 1|` for the hinge.
    pub margin: f64,
    /// `|w_j|` for the `l1` term.
    pub zero: f64,
    /// `|w_j - w_k|` for the fused term.
    pub tie: f64,
}

pub const KINK: KinkTolerance = KinkTolerance { margin: 1e-2, zero: 1e-8, tie: 1e-2 };

/// Smallest achievable `max_j |g_j|` over subgradients `g` of the objective
/// at `w`. Nonsmooth terms whose argument is within tolerance of a kink
/// contribute a free interval; the interval weights are chosen by projected
/// coordinate descent on `||g||^2`.
pub fn subgradient_residual(
    w: &[f64],
    data: &TrainingSet,
    pairs: &[(usize, usize)],
    cfg: &SolverConfig,
    tol: KinkTolerance,
) -> f64 {
    let (n, p) = (data.n(), data.p());
    let mut fixed = vec![0.0; p];
    // free columns: (direction, lo, hi)
    let mut free: Vec<(Vec<f64>, f64, f64)> = Vec::new();

    for i in 0..n {
        let m: f64 = data.y[i] * (0..p).map(|j| data.x[(i, j)] * w[j]).sum::<f64>();
        let col: Vec<f64> = (0..p).map(|j| data.y[i] * data.x[(i, j)] / n as f64).collect();
        if cfg.loss == LossKind::Hinge && (m - 1.0).abs() <= tol.margin {
            free.push((col, -1.0, 0.0));
        } else {
            let g = loss_derivative(cfg.loss, m);
            for j in 0..p {
                fixed[j] += g * col[j];
            }
        }
    }
    for j in 0..p {
        if w[j].abs() <= tol.zero {
            let mut col = vec![0.0; p];
            col[j] = cfg.lambda;
            free.push((col, -1.0, 1.0));
        } else {
            fixed[j] += cfg.lambda * w[j].signum();
        }
    }
    let g = cfg.gamma;
    match cfg.regularizer {
        Regularizer::Lasso => {}
        Regularizer::ElasticNet => {
            for j in 0..p {
                fixed[j] += g * w[j];
            }
        }
        Regularizer::Graphnet => {
            for &(j, k) in pairs {
                let t = 2.0 * g * (w[j] - w[k]);
                fixed[j] += t;
                fixed[k] -= t;
            }
        }
        Regularizer::FusedLasso => {
            for &(j, k) in pairs {
                let diff = w[j] - w[k];
                if diff.abs() <= tol.tie {
                    let mut col = vec![0.0; p];
                    col[j] = 2.0 * g;
                    col[k] = -2.0 * g;
                    free.push((col, -1.0, 1.0));
                } else {
                    let t = 2.0 * g * diff.signum();
                    fixed[j] += t;
                    fixed[k] -= t;
                }
            }
        }
    }

    let mut z: Vec<f64> = free.iter().map(|(_, lo, hi)| 0.5 * (lo + hi)).collect();
    let mut r = fixed.clone();
    for ((col, _, _), &zi) in free.iter().zip(&z) {
        for j in 0..p {
            r[j] += zi * col[j];
        }
    }
    let norms: Vec<f64> = free.iter().map(|(c, _, _)| c.iter().map(|v| v * v).sum()).collect();
    for _sweep in 0..20_000 {
        let mut moved = 0.0f64;
        for (idx, (col, lo, hi)) in free.iter().enumerate() {
            if norms[idx] == 0.0 {
                continue;
            }
            let dot: f64 = col.iter().zip(&r).map(|(c, ri)| c * ri).sum();
            let next = (z[idx] - dot / norms[idx]).clamp(*lo, *hi);
            let step = next - z[idx];
            if step != 0.0 {
                for j in 0..p {
                    r[j] += step * col[j];
                }
                z[idx] = next;
                moved = moved.max(step.abs());
            }
        }
        if moved < 1e-14 {
            break;
        }
    }
    r.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Dense `(C^T C + I)` of the periodic forward-difference operator on a 6-D
/// torus of the given shape, built entry by entry.
pub fn dense_q(shape: [usize; 6]) -> DMatrix<f64> {
    let len: usize = shape.iter().product();
    let mut strides = [1usize; 6];
    for a in (0..5).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let mut c = DMatrix::zeros(6 * len, len);
    for axis in 0..6 {
        let n = shape[axis];
        for i in 0..len {
            let coord = (i / strides[axis]) % n;
            let next = i - coord * strides[axis] + ((coord + 1) % n) * strides[axis];
            c[(axis * len + i, next)] += 1.0;
            c[(axis * len + i, i)] -= 1.0;
        }
    }
    c.transpose() * &c + DMatrix::identity(len, len)
}

pub struct TinyInstance {
    pub parc: GridParcellation,
    pub data: TrainingSet,
    pub config: SolverConfig,
}

/// Connected 2-D slices with at most 6 nodes (`p <= 15`).
pub fn tiny_parcellation(rng: &mut ChaCha8Rng) -> GridParcellation {
    match rng.gen_range(0..4) {
        0 => GridParcellation::full([2, 2, 1]).unwrap(),
        1 => GridParcellation::full([2, 3, 1]).unwrap(),
        2 => GridParcellation::full([1, 5, 1]).unwrap(),
        _ => GridParcellation::new([3, 2, 1], vec![true, true, true, false, true, true], 3.0).unwrap(),
    }
}

pub fn random_loss(rng: &mut ChaCha8Rng) -> LossKind {
    match rng.gen_range(0..3) {
        0 => LossKind::Hinge,
        1 => LossKind::TruncatedLeastSquares,
        _ => LossKind::HuberizedHinge { delta: rng.gen_range(0.2..1.0) },
    }
}

pub fn tiny_instance(rng: &mut ChaCha8Rng, regularizer: Regularizer) -> TinyInstance {
    let parc = tiny_parcellation(rng);
    let p = parc.feature_dim();
    let n = rng.gen_range(4..=10);
    let w_true: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let row: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s: f64 = row.iter().zip(&w_true).map(|(a, b)| a * b).sum();
        // keep both classes present
        let label = if i == 0 { 1.0 } else if i == 1 { -1.0 } else if s + rng.gen_range(-0.3..0.3) >= 0.0 { 1.0 } else { -1.0 };
        rows.push(row);
        y.push(label);
    }
    let data = TrainingSet::from_rows(&rows, y, p).unwrap();
    let lambda = 2f64.powf(rng.gen_range(-7.0..-2.0));
    let gamma = 2f64.powf(rng.gen_range(-6.0..-1.0));
    let config = SolverConfig::new(regularizer, lambda, gamma)
        .with_loss(random_loss(rng))
        .with_tolerance(1e-6, 5000);
    TinyInstance { parc, data, config }
}

pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    a.clone().lu().solve(&DVector::from_column_slice(b)).expect("nonsingular").as_slice().to_vec()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
    num / den
}
