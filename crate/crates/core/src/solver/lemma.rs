use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `(X^T X + c I_p)^{-1}` applied through the matrix inversion lemma:
///
/// ```text
/// (X^T X + c I)^{-1} = I / c - X^T (I_n + X X^T / c)^{-1} X / c^2
/// ```
///
/// so only the `n x n` system is factored and the `p x n` matrix
/// `H = X^T (I_n + X X^T / c)^{-1} / c^2` is cached.
#[derive(Debug, Clone)]
pub struct InversionLemma {
    h: DMatrix<f64>,
    shift: f64,
}

impl InversionLemma {
    pub fn new(x: &DMatrix<f64>, shift: f64) -> Result<Self> {
        if !(shift > 0.0 && shift.is_finite()) {
            return Err(Error::Domain(format!("diagonal shift must be > 0, got {shift}")));
        }
        let n = x.nrows();
        let mut k = x * x.transpose();
        k /= shift;
        for i in 0..n {
            k[(i, i)] += 1.0;
        }
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::Numerical("I + X X^T / c is not positive definite".into()))?;
        // H^T = K^{-1} X / c^2   (K symmetric)
        let mut ht = chol.solve(x);
        ht /= shift * shift;
        let h = ht.transpose();
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite entries in the inversion-lemma cache".into()));
        }
        Ok(Self { h, shift })
    }

    /// The cached `p x n` matrix.
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `(X^T X + c I)^{-1} r`; `x` must be the design the cache was built from.
    pub fn apply(&self, x: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(r.len());
        let mut tmp = DVector::zeros(x.nrows());
        self.apply_into(x, r, &mut tmp, &mut out);
        out
    }

    pub(crate) fn apply_into(
        &self,
        x: &DMatrix<f64>,
        r: &DVector<f64>,
        tmp: &mut DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        tmp.gemv(1.0, x, r, 0.0);
        out.copy_from(r);
        out.gemv(-1.0, &self.h, tmp, 1.0 / self.shift);
    }
}

/// `H = X^T (I_n + X X^T / 2)^{-1} / 4`, the cache used by the structured
/// `w`-update `(X^T X + 2 I)^{-1} v = v / 2 - H X v`.
pub fn precompute_h(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(InversionLemma::new(x, 2.0)?.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(x: &DMatrix<f64>, shift: f64, v: &DVector<f64>) -> DVector<f64> {
        let p = x.ncols();
        let m = x.transpose() * x + DMatrix::identity(p, p) * shift;
        m.lu().solve(v).unwrap()
    }

    #[test]
    fn zero_design_gives_half_identity() {
        let x = DMatrix::zeros(3, 4);
        let h = precompute_h(&x).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        let lemma = InversionLemma::new(&x, 2.0).unwrap();
        let v = DVector::from_vec(vec![1.0, -2.0, 4.0, 0.5]);
        assert_eq!(lemma.apply(&x, &v), &v * 0.5);
    }

    #[test]
    fn random_small_design_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(3, 5, |_, _| rng.gen_range(-1.0..1.0));
        let v = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        for shift in [2.0, 0.7, 13.0] {
            let lemma = InversionLemma::new(&x, shift).unwrap();
            let got = lemma.apply(&x, &v);
            let want = dense_solve(&x, shift, &v);
            assert!((got - want).amax() < 1e-10);
        }
    }

    #[test]
    fn rank_one_all_ones_closed_form() {
        // (1 1^T + 2 I)^{-1} = I/2 - 1 1^T / (2 (2 + p))
        let p = 4;
        let x = DMatrix::from_element(1, p, 1.0);
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let got = InversionLemma::new(&x, 2.0).unwrap().apply(&x, &v);
        let s: f64 = v.sum();
        for i in 0..p {
            let want = v[i] / 2.0 - s / (2.0 * (2.0 + p as f64));
            assert!((got[i] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_shift() {
        assert!(InversionLemma::new(&DMatrix::zeros(1, 1), 0.0).is_err());
    }
}
