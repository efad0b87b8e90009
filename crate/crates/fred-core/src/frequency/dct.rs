//! Orthonormal 1D DCT-II / DCT-III kernels, direct and FFT-backed.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Orthonormal scale factors: s(0) = sqrt(1/N), s(k>0) = sqrt(2/N).
fn ortho_scales(n: usize) -> Vec<f64> {
    let mut s = vec![(2.0 / n as f64).sqrt(); n];
    s[0] = (1.0 / n as f64).sqrt();
    s
}

/// Dense orthonormal DCT-II matrix; `fwd[k * n + a] = s(k) cos(pi (2a+1) k / 2N)`.
pub(crate) struct DctMatrix {
    n: usize,
    fwd: Vec<f64>,
}

impl DctMatrix {
    pub fn new(n: usize) -> Self {
        let s = ortho_scales(n);
        let mut fwd = vec![0.0; n * n];
        for k in 0..n {
            for a in 0..n {
                fwd[k * n + a] =
                    s[k] * (std::f64::consts::PI * (2 * a + 1) as f64 * k as f64 / (2 * n) as f64).cos();
            }
        }
        Self { n, fwd }
    }

    /// Forward transform: out[k] = sum_a fwd[k][a] x[a].
    pub fn dct2(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..self.n {
            let row = &self.fwd[k * self.n..(k + 1) * self.n];
            out[k] = row.iter().zip(x).map(|(b, v)| b * v).sum();
        }
    }

    /// Inverse (transpose) transform: out[a] = sum_k fwd[k][a] f[k].
    pub fn dct3(&self, f: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for k in 0..self.n {
            let fk = f[k];
            if fk == 0.0 {
                continue;
            }
            let row = &self.fwd[k * self.n..(k + 1) * self.n];
            for (o, b) in out.iter_mut().zip(row) {
                *o += fk * b;
            }
        }
    }
}

/// FFT-backed orthonormal DCT-II / DCT-III for one length, O(N log N).
///
/// Uses the mirrored 2N-point FFT identity: with x~ = [x, reverse(x)],
/// FFT_2N(x~)[k] = 2 e^{i pi k / 2N} C[k] where C is the raw cosine sum.
pub(crate) struct DctPlan {
    n: usize,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    /// e^{-i pi k / 2N} for k < N.
    phase: Vec<Complex<f64>>,
    scales: Vec<f64>,
}

/// Scratch buffers reused across rows/columns of one plane.
pub(crate) struct DctScratch {
    buf: Vec<Complex<f64>>,
    fft_scratch: Vec<Complex<f64>>,
}

impl DctPlan {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(2 * n);
        let fft_inv = planner.plan_fft_inverse(2 * n);
        let phase = (0..n)
            .map(|k| {
                Complex::from_polar(1.0, -std::f64::consts::PI * k as f64 / (2 * n) as f64)
            })
            .collect();
        Self {
            n,
            fft_fwd,
            fft_inv,
            phase,
            scales: ortho_scales(n),
        }
    }

    pub fn scratch(&self) -> DctScratch {
        let len = self
            .fft_fwd
            .get_inplace_scratch_len()
            .max(self.fft_inv.get_inplace_scratch_len());
        DctScratch {
            buf: vec![Complex::default(); 2 * self.n],
            fft_scratch: vec![Complex::default(); len],
        }
    }

    pub fn dct2(&self, x: &[f64], out: &mut [f64], s: &mut DctScratch) {
        let n = self.n;
        for a in 0..n {
            s.buf[a] = Complex::new(x[a], 0.0);
            s.buf[2 * n - 1 - a] = Complex::new(x[a], 0.0);
        }
        self.fft_fwd.process_with_scratch(&mut s.buf, &mut s.fft_scratch);
        for k in 0..n {
            out[k] = self.scales[k] * 0.5 * (self.phase[k] * s.buf[k]).re;
        }
    }

    pub fn dct3(&self, f: &[f64], out: &mut [f64], s: &mut DctScratch) {
        let n = self.n;
        // Rebuild the mirrored spectrum E[m] = 2 C[m] e^{i pi m / 2N} with
        // C[m] = f[m] / s(m), C[N] = 0, C[2N - m] = -C[m].
        s.buf[0] = Complex::new(2.0 * f[0] / self.scales[0], 0.0);
        for m in 1..n {
            let c = f[m] / self.scales[m];
            s.buf[m] = 2.0 * c * self.phase[m].conj();
            // conjugate symmetry of the mirrored real signal: E[2N-m] = conj(E[m])
            s.buf[2 * n - m] = 2.0 * c * self.phase[m];
        }
        s.buf[n] = Complex::default();
        self.fft_inv.process_with_scratch(&mut s.buf, &mut s.fft_scratch);
        let inv_len = 1.0 / (2 * n) as f64;
        for a in 0..n {
            out[a] = s.buf[a].re * inv_len;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        // xorshift; plenty for kernel cross-checks
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn fft_path_matches_direct_path() {
        for &n in &[1usize, 2, 3, 4, 5, 7, 8, 16, 28, 32, 63, 64, 100, 128] {
            let m = DctMatrix::new(n);
            let p = DctPlan::new(n);
            let mut sc = p.scratch();
            let x = rand_vec(n, n as u64 + 1);
            let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
            m.dct2(&x, &mut a);
            p.dct2(&x, &mut b, &mut sc);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-11, "dct2 mismatch at n={n}: {u} vs {v}");
            }
            let (mut ia, mut ib) = (vec![0.0; n], vec![0.0; n]);
            m.dct3(&a, &mut ia);
            p.dct3(&a, &mut ib, &mut sc);
            for ((u, v), orig) in ia.iter().zip(&ib).zip(&x) {
                assert!((u - v).abs() < 1e-11, "dct3 mismatch at n={n}");
                assert!((u - orig).abs() < 1e-11, "roundtrip mismatch at n={n}");
            }
        }
    }

    #[test]
    fn constant_signal_concentrates_in_dc() {
        let p = DctPlan::new(4);
        let mut sc = p.scratch();
        let mut out = vec![0.0; 4];
        p.dct2(&[1.0, 1.0, 1.0, 1.0], &mut out, &mut sc);
        assert!((out[0] - 2.0).abs() < 1e-12);
        for &v in &out[1..] {
            assert!(v.abs() < 1e-12);
        }
    }
}
