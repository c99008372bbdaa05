use nalgebra::DVector;

use super::lemma::InversionLemma;
use super::structured::SolverState;
use super::{check_finite, objective, should_stop, Model, Regularizer, SolverConfig, TrainingSet};
use crate::error::{Error, Result};
use crate::prox::{prox_unchecked, soft_threshold};

/// Elastic-net (Lasso when `gamma = 0`) by three-block ADMM on
/// `Y X w = v_a, w = v_b`.
pub fn fit_elasticnet(data: &TrainingSet, config: &SolverConfig) -> Result<Model> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::structural("cannot fit on an empty training set"));
    }
    let lemma = InversionLemma::new(&data.x, shift_for(config))?;
    fit_elasticnet_with(data, &lemma, config)
}

pub fn fit_elasticnet_with(data: &TrainingSet, lemma: &InversionLemma, config: &SolverConfig) -> Result<Model> {
    fit_elasticnet_from(data, lemma, config, None).map(|(m, _)| m)
}

/// Diagonal shift `(gamma + rho) / rho` of the normalized `w`-system.
pub(crate) fn shift_for(config: &SolverConfig) -> f64 {
    (config.effective_gamma() + config.rho) / config.rho
}

/// Warm-startable form; only the `w`, `v_a`, `v_b`, `u_a`, `u_b` blocks of
/// the state are used.
pub fn fit_elasticnet_from(
    data: &TrainingSet,
    lemma: &InversionLemma,
    config: &SolverConfig,
    init: Option<&SolverState>,
) -> Result<(Model, SolverState)> {
    config.validate()?;
    if !matches!(config.regularizer, Regularizer::Lasso | Regularizer::ElasticNet) {
        return Err(Error::structural(format!("{} is not an Elastic-net family regularizer", config.regularizer)));
    }
    if data.is_empty() {
        return Err(Error::structural("cannot fit on an empty training set"));
    }
    if lemma.shift() != shift_for(config) || lemma.h().ncols() != data.n() || lemma.h().nrows() != data.p() {
        return Err(Error::structural("inversion-lemma cache does not match the design/config"));
    }
    let (n, p) = (data.n(), data.p());
    let x = &data.x;
    let y = &data.y;
    let rho = config.rho;
    let tau_loss = 1.0 / (n as f64 * rho);
    let tau_l1 = config.lambda / rho;

    let mut st = match init {
        Some(s0) => {
            if s0.w.len() != p || s0.v_a.len() != n {
                return Err(Error::structural("warm-start state does not match the problem"));
            }
            SolverState { iter: 0, ..s0.clone() }
        }
        None => SolverState::zeros(n, p, 0, 0),
    };
    let SolverState { w, v_a, v_b, u_a, u_b, .. } = &mut st;
    let mut w_prev = DVector::zeros(p);
    let mut r = DVector::zeros(p);
    let mut tmp_n = DVector::zeros(n);
    let mut margins = DVector::zeros(n);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iter = 0;

    while iter < config.max_iters {
        // (rho X^T X + (gamma + rho) I) w = rho X^T Y (v_a - u_a) + rho (v_b - u_b)
        for i in 0..n {
            tmp_n[i] = y[i] * (v_a[i] - u_a[i]);
        }
        r.gemv_tr(1.0, x, &tmp_n, 0.0);
        for j in 0..p {
            r[j] += v_b[j] - u_b[j];
        }
        w_prev.copy_from(&w);
        lemma.apply_into(x, &r, &mut tmp_n, w);

        margins.gemv(1.0, x, &w, 0.0);
        for i in 0..n {
            margins[i] *= y[i];
            v_a[i] = prox_unchecked(config.loss, margins[i] + u_a[i], tau_loss);
        }
        for j in 0..p {
            v_b[j] = soft_threshold(w[j] + u_b[j], tau_l1);
        }
        for i in 0..n {
            u_a[i] += margins[i] - v_a[i];
        }
        for j in 0..p {
            u_b[j] += w[j] - v_b[j];
        }

        iter += 1;
        check_finite(iter, &[("w", w.as_slice()), ("v_a", &v_a), ("u_a", &u_a), ("u_b", &u_b)])?;
        if config.record_objective {
            trace.push(objective(w.as_slice(), data, None, config)?);
        }
        if should_stop(iter, w_prev.as_slice(), w.as_slice(), config.epsilon) {
            converged = true;
            break;
        }
    }

    let model = Model::new(config.clone(), v_b.clone(), iter, converged, trace);
    st.iter = iter;
    Ok((model, st))
}
