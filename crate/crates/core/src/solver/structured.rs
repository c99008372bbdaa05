use nalgebra::DVector;
use rustfft::num_complex::Complex;

use super::lemma::InversionLemma;
use super::{check_finite, objective, should_stop, Model, SolverConfig, Structure, TrainingSet};
use crate::connectome::DIRECTED_PAIR_MULTIPLICITY;
use crate::error::{Error, Result};
use crate::prox::{prox_unchecked, soft_threshold};

/// Primal and scaled-dual blocks of the structured ADMM split.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub w: DVector<f64>,
    /// `Y X w`
    pub v_a: Vec<f64>,
    /// `w`, soft-thresholded copy
    pub v_b: Vec<f64>,
    /// `C~ v_d`
    pub v_c: Vec<f64>,
    /// `A w`, augmented copy
    pub v_d: Vec<f64>,
    pub u_a: Vec<f64>,
    pub u_b: Vec<f64>,
    pub u_c: Vec<f64>,
    pub u_d: Vec<f64>,
    pub iter: usize,
}

impl SolverState {
    pub(crate) fn zeros(n: usize, p: usize, p_aug: usize, e_aug: usize) -> Self {
        Self {
            w: DVector::zeros(p),
            v_a: vec![0.0; n],
            v_b: vec![0.0; p],
            v_c: vec![0.0; e_aug],
            v_d: vec![0.0; p_aug],
            u_a: vec![0.0; n],
            u_b: vec![0.0; p],
            u_c: vec![0.0; e_aug],
            u_d: vec![0.0; p_aug],
            iter: 0,
        }
    }
}

/// Fused Lasso (`q = 1`) or GraphNet (`q = 2`) by ADMM.
pub fn fit_structured(data: &TrainingSet, structure: &Structure, config: &SolverConfig) -> Result<Model> {
    data.check_fit(structure.p())?;
    let lemma = InversionLemma::new(&data.x, 2.0)?;
    fit_structured_with(data, structure, &lemma, config).map(|(m, _)| m)
}

/// As [`fit_structured`], reusing a precomputed `H` (shift 2) for `data.x`,
/// and returning the final ADMM state.
pub fn fit_structured_with(
    data: &TrainingSet,
    structure: &Structure,
    lemma: &InversionLemma,
    config: &SolverConfig,
) -> Result<(Model, SolverState)> {
    fit_structured_from(data, structure, lemma, config, None)
}

/// Starts from `init` (e.g. the state of a neighboring grid cell) instead of
/// zero. The iteration counter restarts.
pub fn fit_structured_from(
    data: &TrainingSet,
    structure: &Structure,
    lemma: &InversionLemma,
    config: &SolverConfig,
    init: Option<&SolverState>,
) -> Result<(Model, SolverState)> {
    config.validate()?;
    data.check_fit(structure.p())?;
    let q = config.regularizer.q().ok_or_else(|| {
        Error::structural(format!("{} is not a structured regularizer", config.regularizer))
    })?;
    if lemma.shift() != 2.0 || lemma.h().nrows() != data.p() || lemma.h().ncols() != data.n() {
        return Err(Error::structural("inversion-lemma cache does not match the design"));
    }

    let map = &structure.map;
    let kernel = &structure.kernel;
    let (n, p) = (data.n(), data.p());
    let (p_aug, e_aug) = (map.augmented_dim(), map.difference_dim());
    let x = &data.x;
    let y = &data.y;
    let rho = config.rho;
    let tau_loss = 1.0 / (n as f64 * rho);
    let tau_l1 = config.lambda / rho;
    // the masked rows carry both directed terms of each neighbor pair
    let gamma_rows = DIRECTED_PAIR_MULTIPLICITY * config.gamma;
    let mask = map.mask();

    let mut st = match init {
        Some(s0) => {
            if s0.w.len() != p || s0.v_a.len() != n || s0.v_d.len() != p_aug || s0.v_c.len() != e_aug {
                return Err(Error::structural("warm-start state does not match the problem"));
            }
            SolverState { iter: 0, ..s0.clone() }
        }
        None => SolverState::zeros(n, p, p_aug, e_aug),
    };
    // C~ v_d, carried between iterations
    let mut cvd = vec![0.0; e_aug];
    map.difference_into(&st.v_d, &mut cvd);
    let mut w_prev = DVector::zeros(p);
    let mut varrho = DVector::zeros(p);
    let mut tmp_n = DVector::zeros(n);
    let mut margins = DVector::zeros(n);
    let mut gather = vec![0.0; p];
    let mut work_aug = vec![0.0; p_aug];
    let mut work_diff = vec![0.0; e_aug];
    let mut fft_scratch: Vec<Complex<f64>> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;

    while st.iter < config.max_iters {
        // ---- w-update: (X^T X + 2I)^{-1} (X^T Y (v_a - u_a) + (v_b - u_b) + A^T (v_d - u_d))
        for i in 0..n {
            tmp_n[i] = y[i] * (st.v_a[i] - st.u_a[i]);
        }
        varrho.gemv_tr(1.0, x, &tmp_n, 0.0);
        for (k, r) in work_aug.iter_mut().enumerate() {
            *r = st.v_d[k] - st.u_d[k];
        }
        map.gather_into(&work_aug, &mut gather);
        for j in 0..p {
            varrho[j] += st.v_b[j] - st.u_b[j] + gather[j];
        }
        w_prev.copy_from(&st.w);
        lemma.apply_into(x, &varrho, &mut tmp_n, &mut st.w);

        // ---- v_c-update: masked shrinkage of zeta = C~ v_d - u_c
        match q {
            1 => {
                let thr = gamma_rows / rho;
                for k in 0..e_aug {
                    let zeta = cvd[k] - st.u_c[k];
                    st.v_c[k] = if mask[k] { soft_threshold(zeta, thr) } else { zeta };
                }
            }
            _ => {
                let scale = rho / (gamma_rows + rho);
                for k in 0..e_aug {
                    let zeta = cvd[k] - st.u_c[k];
                    st.v_c[k] = if mask[k] { scale * zeta } else { zeta };
                }
            }
        }

        // ---- v_a, v_b: scalar proximal maps
        margins.gemv(1.0, x, &st.w, 0.0);
        for i in 0..n {
            margins[i] *= y[i];
            st.v_a[i] = prox_unchecked(config.loss, margins[i] + st.u_a[i], tau_loss);
        }
        for j in 0..p {
            st.v_b[j] = soft_threshold(st.w[j] + st.u_b[j], tau_l1);
        }

        // ---- v_d-update: Q^{-1} (C~^T (v_c + u_c) + A w + u_d) by FFT
        for k in 0..e_aug {
            work_diff[k] = st.v_c[k] + st.u_c[k];
        }
        map.difference_adjoint_into(&work_diff, &mut work_aug);
        map.add_augmented(st.w.as_slice(), &mut work_aug);
        for k in 0..p_aug {
            work_aug[k] += st.u_d[k];
        }
        kernel.solve_into(&work_aug, &mut st.v_d, &mut fft_scratch).map_err(|e| match e {
            Error::Numerical(reason) => Error::Divergence { iteration: st.iter + 1, reason },
            other => other,
        })?;

        // ---- dual ascent
        for i in 0..n {
            st.u_a[i] += margins[i] - st.v_a[i];
        }
        for j in 0..p {
            st.u_b[j] += st.w[j] - st.v_b[j];
        }
        map.difference_into(&st.v_d, &mut cvd);
        for k in 0..e_aug {
            st.u_c[k] += st.v_c[k] - cvd[k];
        }
        work_aug.fill(0.0);
        map.add_augmented(st.w.as_slice(), &mut work_aug);
        for k in 0..p_aug {
            st.u_d[k] += work_aug[k] - st.v_d[k];
        }

        st.iter += 1;
        check_finite(
            st.iter,
            &[
                ("w", st.w.as_slice()),
                ("v_a", &st.v_a),
                ("v_c", &st.v_c),
                ("v_d", &st.v_d),
                ("u_a", &st.u_a),
                ("u_b", &st.u_b),
                ("u_c", &st.u_c),
                ("u_d", &st.u_d),
            ],
        )?;
        if config.record_objective {
            trace.push(objective(st.w.as_slice(), data, Some(structure), config)?);
        }
        if should_stop(st.iter, w_prev.as_slice(), st.w.as_slice(), config.epsilon) {
            converged = true;
            break;
        }
    }

    let model = Model::new(config.clone(), st.v_b.clone(), st.iter, converged, trace);
    Ok((model, st))
}
