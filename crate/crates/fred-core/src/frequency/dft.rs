//! Orthonormal real 2D DFT with a documented real-valued packing.
//!
//! The complex spectrum of a real image is conjugate-symmetric, so only one
//! representative per conjugate pair is stored. Packing rules for the
//! (H, W) real output:
//!
//! * self-conjugate cells (DC and the Nyquist corners) hold the real part
//!   of the coefficient unscaled;
//! * for every other conjugate pair, the lexicographically smaller cell
//!   holds sqrt(2) * Re and its partner holds sqrt(2) * Im.
//!
//! The sqrt(2) factor makes the packed map orthonormal, so Parseval holds
//! exactly on the packed reals and the adjoint equals the forward map.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub(crate) const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Conjugate partner of (u, v) on an H x W grid.
#[inline]
pub fn partner(u: usize, v: usize, h: usize, w: usize) -> (usize, usize) {
    ((h - u) % h, (w - v) % w)
}

/// Whether (u, v) is the stored representative of its conjugate pair.
#[inline]
pub fn is_canonical(u: usize, v: usize, h: usize, w: usize) -> bool {
    (u, v) <= partner(u, v, h, w)
}

pub(crate) struct DftPlan {
    h: usize,
    w: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

pub(crate) struct DftScratch {
    grid: Vec<Complex<f64>>,
    col: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
}

impl DftPlan {
    pub fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            h,
            w,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    pub fn scratch(&self) -> DftScratch {
        let len = [&self.row_fwd, &self.row_inv, &self.col_fwd, &self.col_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap();
        DftScratch {
            grid: vec![Complex::default(); self.h * self.w],
            col: vec![Complex::default(); self.h],
            fft: vec![Complex::default(); len],
        }
    }

    fn fft_2d(&self, s: &mut DftScratch, inverse: bool) {
        let (h, w) = (self.h, self.w);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for i in 0..h {
            row.process_with_scratch(&mut s.grid[i * w..(i + 1) * w], &mut s.fft);
        }
        for j in 0..w {
            for i in 0..h {
                s.col[i] = s.grid[i * w + j];
            }
            col.process_with_scratch(&mut s.col, &mut s.fft);
            for i in 0..h {
                s.grid[i * w + j] = s.col[i];
            }
        }
    }

    /// Real plane -> packed real spectrum.
    pub fn forward(&self, x: &[f64], out: &mut [f64], s: &mut DftScratch) {
        let (h, w) = (self.h, self.w);
        let norm = 1.0 / ((h * w) as f64).sqrt();
        for (g, &v) in s.grid.iter_mut().zip(x) {
            *g = Complex::new(v * norm, 0.0);
        }
        self.fft_2d(s, false);
        for u in 0..h {
            for v in 0..w {
                let (pu, pv) = partner(u, v, h, w);
                let f = s.grid[u * w + v];
                if (pu, pv) == (u, v) {
                    out[u * w + v] = f.re;
                } else if (u, v) < (pu, pv) {
                    out[u * w + v] = SQRT2 * f.re;
                    out[pu * w + pv] = SQRT2 * f.im;
                }
            }
        }
    }

    /// Packed real spectrum -> real plane.
    pub fn inverse(&self, packed: &[f64], out: &mut [f64], s: &mut DftScratch) {
        let (h, w) = (self.h, self.w);
        for u in 0..h {
            for v in 0..w {
                let (pu, pv) = partner(u, v, h, w);
                if (pu, pv) == (u, v) {
                    s.grid[u * w + v] = Complex::new(packed[u * w + v], 0.0);
                } else if (u, v) < (pu, pv) {
                    let re = packed[u * w + v] / SQRT2;
                    let im = packed[pu * w + pv] / SQRT2;
                    s.grid[u * w + v] = Complex::new(re, im);
                    s.grid[pu * w + pv] = Complex::new(re, -im);
                }
            }
        }
        self.fft_2d(s, true);
        let norm = 1.0 / ((h * w) as f64).sqrt();
        for (o, g) in out.iter_mut().zip(&s.grid) {
            *o = g.re * norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partner_pairs_are_involutive() {
        for (h, w) in [(4, 4), (3, 5), (2, 6)] {
            for u in 0..h {
                for v in 0..w {
                    let (pu, pv) = partner(u, v, h, w);
                    assert_eq!(partner(pu, pv, h, w), (u, v));
                }
            }
        }
    }

    #[test]
    fn roundtrip_and_parseval() {
        let (h, w) = (6, 4);
        let x: Vec<f64> = (0..h * w).map(|i| ((i * 37 + 5) % 11) as f64 - 5.0).collect();
        let plan = DftPlan::new(h, w);
        let mut s = plan.scratch();
        let mut packed = vec![0.0; h * w];
        plan.forward(&x, &mut packed, &mut s);
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ef: f64 = packed.iter().map(|v| v * v).sum();
        assert!((ex - ef).abs() < 1e-10 * ex);
        let mut back = vec![0.0; h * w];
        plan.inverse(&packed, &mut back, &mut s);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
