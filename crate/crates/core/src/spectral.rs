//! FFT diagonalization of `Q = C~^T C~ + I` on the augmented 6-D torus.
//!
//! Every axis contributes the symbol `|1 - e^{-i w}|^2 = 2 (1 - cos w)` of its
//! periodic forward difference, so `Q` has eigenvalues
//! `1 + sum_axis 2 (1 - cos(2 pi k_axis / N_axis))` on the DFT basis and
//! `Q^{-1} b = ifft(fft(b) / phi)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::connectome::AugmentationMap;
use crate::error::{Error, Result};

/// Imaginary residue tolerated after the inverse transform, relative to the
/// largest real magnitude.
const IMAG_RESIDUE_TOL: f64 = 1e-8;

#[derive(Clone)]
pub struct SpectralKernel {
    phi: Vec<f64>,
    shape: [usize; 6],
    strides: [usize; 6],
    forward: Vec<Option<Arc<dyn Fft<f64>>>>,
    inverse: Vec<Option<Arc<dyn Fft<f64>>>>,
}

impl fmt::Debug for SpectralKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralKernel").field("shape", &self.shape).finish_non_exhaustive()
    }
}

fn strides_of(shape: &[usize; 6]) -> [usize; 6] {
    let mut s = [1usize; 6];
    for a in (0..5).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}

/// Builds `phi` from the closed-form per-axis symbol.
pub fn build_kernel(map: &AugmentationMap) -> SpectralKernel {
    SpectralKernel::from_shape(map.shape())
}

impl SpectralKernel {
    pub fn from_shape(shape: [usize; 6]) -> Self {
        let strides = strides_of(&shape);
        let len: usize = shape.iter().product();
        let symbols: Vec<Vec<f64>> = shape
            .iter()
            .map(|&n| (0..n).map(|k| 2.0 * (1.0 - (2.0 * PI * k as f64 / n as f64).cos())).collect())
            .collect();
        let phi = (0..len)
            .map(|i| {
                1.0 + (0..6).map(|a| symbols[a][(i / strides[a]) % shape[a]]).sum::<f64>()
            })
            .collect();

        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| (n > 1).then(|| planner.plan_fft_forward(n))).collect();
        let inverse = shape.iter().map(|&n| (n > 1).then(|| planner.plan_fft_inverse(n))).collect();
        Self { phi, shape, strides, forward, inverse }
    }

    /// Builds `phi` as the 6-D DFT of the first column of `Q`, with `Q`
    /// applied through the difference operator and its adjoint.
    pub fn from_first_column(map: &AugmentationMap) -> Result<Self> {
        let mut kernel = Self::from_shape(map.shape());
        let mut e0 = vec![0.0; map.augmented_dim()];
        e0[0] = 1.0;
        let ctc = map.apply_difference_adjoint(&map.apply_difference(&e0)?)?;
        let mut col: Vec<Complex<f64>> =
            ctc.iter().zip(&e0).map(|(&a, &b)| Complex::new(a + b, 0.0)).collect();
        kernel.transform(&mut col, true);
        let scale = col.iter().map(|c| c.re.abs()).fold(1.0, f64::max);
        if let Some(c) = col.iter().find(|c| c.im.abs() > IMAG_RESIDUE_TOL * scale) {
            return Err(Error::Numerical(format!(
                "first-column spectrum is not real (imaginary residue {})",
                c.im
            )));
        }
        kernel.phi = col.iter().map(|c| c.re).collect();
        Ok(kernel)
    }

    /// Eigenvalues of `Q` in DFT order.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn shape(&self) -> [usize; 6] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    fn transform(&self, data: &mut [Complex<f64>], forward: bool) {
        let plans = if forward { &self.forward } else { &self.inverse };
        let len = data.len();
        let mut lines: Vec<Complex<f64>> = Vec::new();
        let mut scratch: Vec<Complex<f64>> = Vec::new();
        for axis in 0..6 {
            let Some(plan) = &plans[axis] else { continue };
            let (n, s) = (self.shape[axis], self.strides[axis]);
            scratch.resize(plan.get_inplace_scratch_len(), Complex::default());
            if s == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            // transpose each (n x s) block into s contiguous lines, batch, transpose back
            let block = n * s;
            lines.resize(block, Complex::default());
            for base in (0..len).step_by(block) {
                let src = &data[base..base + block];
                for c in 0..n {
                    for t in 0..s {
                        lines[t * n + c] = src[c * s + t];
                    }
                }
                plan.process_with_scratch(&mut lines, &mut scratch);
                let dst = &mut data[base..base + block];
                for c in 0..n {
                    for t in 0..s {
                        dst[c * s + t] = lines[t * n + c];
                    }
                }
            }
        }
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; b.len()];
        let mut scratch = Vec::new();
        self.solve_into(b, &mut out, &mut scratch)?;
        Ok(out)
    }

    pub(crate) fn solve_into(
        &self,
        b: &[f64],
        out: &mut [f64],
        scratch: &mut Vec<Complex<f64>>,
    ) -> Result<()> {
        if b.len() != self.phi.len() || out.len() != b.len() {
            return Err(Error::structural(format!(
                "solve_laplacian: expected length {}, got {}",
                self.phi.len(),
                b.len()
            )));
        }
        scratch.clear();
        scratch.extend(b.iter().map(|&v| Complex::new(v, 0.0)));
        self.transform(scratch, true);
        let norm = 1.0 / self.phi.len() as f64;
        for (z, &ev) in scratch.iter_mut().zip(&self.phi) {
            *z *= norm / ev;
        }
        self.transform(scratch, false);

        let mut max_re = 0.0f64;
        let mut max_im = 0.0f64;
        for (o, z) in out.iter_mut().zip(scratch.iter()) {
            *o = z.re;
            max_re = max_re.max(z.re.abs());
            max_im = max_im.max(z.im.abs());
        }
        if max_im > IMAG_RESIDUE_TOL * max_re.max(f64::MIN_POSITIVE) && max_im > 1e-300 {
            return Err(Error::Numerical(format!(
                "FFT solve left imaginary residue {max_im:e} (real scale {max_re:e})"
            )));
        }
        Ok(())
    }
}

/// `Q^{-1} b` via the 6-D FFT.
pub fn solve_laplacian(b: &[f64], kernel: &SpectralKernel) -> Result<Vec<f64>> {
    kernel.solve(b)
}
