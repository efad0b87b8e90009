//! Orthonormal 2D frequency transforms applied channel-wise to (N, C, H, W)
//! batches: DCT-II/III (default), a packed real DFT, and a multilevel Haar
//! DWT. All three are real orthonormal maps, so energy is preserved and the
//! adjoint of the inverse equals the forward transform.

mod dct;
mod dft;
mod dwt;

pub use dft::{is_canonical, partner};

use crate::error::{FredError, Result};
use crate::mask::Mask;
use crate::tensor::Tensor4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which frequency transform to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum TransformKind {
    Dct,
    Dft,
    Dwt { levels: u32 },
}

impl TransformKind {
    /// Stored scalars per selected frequency dimension (complex costs two).
    pub fn scalars_per_dim(&self) -> usize {
        match self {
            TransformKind::Dft => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransformKind::Dct => write!(f, "dct"),
            TransformKind::Dft => write!(f, "dft"),
            TransformKind::Dwt { levels } => write!(f, "dwt{levels}"),
        }
    }
}

/// 1D DCT kernel selection. `Auto` uses the dense kernel up to length 64
/// and the FFT-backed kernel above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DctBackend {
    #[default]
    Auto,
    Direct,
    Fft,
}

const DIRECT_MAX: usize = 64;

enum DctKernel {
    Direct(dct::DctMatrix),
    Fft(dct::DctPlan),
}

impl DctKernel {
    fn new(n: usize, backend: DctBackend) -> Self {
        let fft = match backend {
            DctBackend::Auto => n > DIRECT_MAX,
            DctBackend::Direct => false,
            DctBackend::Fft => true,
        };
        if fft {
            DctKernel::Fft(dct::DctPlan::new(n))
        } else {
            DctKernel::Direct(dct::DctMatrix::new(n))
        }
    }
}

struct DctKernelScratch(Option<dct::DctScratch>);

impl DctKernel {
    fn scratch(&self) -> DctKernelScratch {
        match self {
            DctKernel::Direct(_) => DctKernelScratch(None),
            DctKernel::Fft(p) => DctKernelScratch(Some(p.scratch())),
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64], inverse: bool, s: &mut DctKernelScratch) {
        match self {
            DctKernel::Direct(m) => {
                if inverse {
                    m.dct3(x, out)
                } else {
                    m.dct2(x, out)
                }
            }
            DctKernel::Fft(p) => {
                let sc = s.0.as_mut().expect("fft scratch");
                if inverse {
                    p.dct3(x, out, sc)
                } else {
                    p.dct2(x, out, sc)
                }
            }
        }
    }
}

/// Separable 2D DCT over one plane: 1D passes over rows, then columns.
fn dct2d_plane(
    src: &[f64],
    dst: &mut [f64],
    h: usize,
    w: usize,
    row_k: &DctKernel,
    col_k: &DctKernel,
    inverse: bool,
) {
    let mut row_s = row_k.scratch();
    let mut col_s = col_k.scratch();
    let mut out_row = vec![0.0; w];
    for i in 0..h {
        row_k.apply(&src[i * w..(i + 1) * w], &mut out_row, inverse, &mut row_s);
        dst[i * w..(i + 1) * w].copy_from_slice(&out_row);
    }
    let mut col_in = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for j in 0..w {
        for i in 0..h {
            col_in[i] = dst[i * w + j];
        }
        col_k.apply(&col_in, &mut col_out, inverse, &mut col_s);
        for i in 0..h {
            dst[i * w + j] = col_out[i];
        }
    }
}

fn validate_input(x: &Tensor4, kind: TransformKind) -> Result<()> {
    if !x.is_finite() {
        return Err(FredError::InvalidInput(
            "transform input contains non-finite values".into(),
        ));
    }
    if let TransformKind::Dwt { levels } = kind {
        dwt::check_dwt_shape(x.height(), x.width(), levels)?;
    }
    Ok(())
}

fn transform(x: &Tensor4, kind: TransformKind, backend: DctBackend, inverse: bool) -> Result<Tensor4> {
    validate_input(x, kind)?;
    let (n, c, h, w) = x.shape();
    let planes = n * c;
    let mut out = vec![0.0; planes * h * w];

    match kind {
        TransformKind::Dct => {
            let row_k = DctKernel::new(w, backend);
            let col_k = if h == w {
                None
            } else {
                Some(DctKernel::new(h, backend))
            };
            let col_ref = col_k.as_ref().unwrap_or(&row_k);
            out.par_chunks_mut(h * w).enumerate().for_each(|(p, dst)| {
                let src = &x.as_slice()[p * h * w..(p + 1) * h * w];
                dct2d_plane(src, dst, h, w, &row_k, col_ref, inverse);
            });
        }
        TransformKind::Dft => {
            let plan = dft::DftPlan::new(h, w);
            out.par_chunks_mut(h * w).enumerate().for_each(|(p, dst)| {
                let src = &x.as_slice()[p * h * w..(p + 1) * h * w];
                let mut s = plan.scratch();
                if inverse {
                    plan.inverse(src, dst, &mut s);
                } else {
                    plan.forward(src, dst, &mut s);
                }
            });
        }
        TransformKind::Dwt { levels } => {
            out.copy_from_slice(x.as_slice());
            out.par_chunks_mut(h * w).for_each(|dst| {
                if inverse {
                    dwt::dwt2_inverse(dst, h, w, levels);
                } else {
                    dwt::dwt2_forward(dst, h, w, levels);
                }
            });
        }
    }
    Ok(Tensor4::from_parts(n, c, h, w, out))
}

/// Channel-wise forward transform of a spatial batch.
pub fn forward(x: &Tensor4, kind: TransformKind) -> Result<Tensor4> {
    transform(x, kind, DctBackend::Auto, false)
}

/// `forward` with an explicit DCT kernel choice (benchmarks force `Fft`).
pub fn forward_with(x: &Tensor4, kind: TransformKind, backend: DctBackend) -> Result<Tensor4> {
    transform(x, kind, backend, false)
}

/// Channel-wise inverse transform of a frequency batch.
pub fn inverse(f: &Tensor4, kind: TransformKind) -> Result<Tensor4> {
    transform(f, kind, DctBackend::Auto, true)
}

pub fn inverse_with(f: &Tensor4, kind: TransformKind, backend: DctBackend) -> Result<Tensor4> {
    transform(f, kind, backend, true)
}

/// Adjoint of `inverse`: routes spatial-domain gradients back to frequency
/// coefficients. All transforms here are orthonormal, so this is `forward`.
pub fn adjoint_forward(g: &Tensor4, kind: TransformKind) -> Result<Tensor4> {
    forward(g, kind)
}

/// L2 reconstruction error after keeping only the masked coefficients:
/// `|| x - inverse(mask .* forward(x)) ||_2`.
pub fn truncation_error(x: &Tensor4, mask: &Mask, kind: TransformKind) -> Result<f64> {
    if mask.height() != x.height() || mask.width() != x.width() {
        return Err(FredError::ShapeError(format!(
            "mask {}x{} does not match tensor {}x{}",
            mask.height(),
            mask.width(),
            x.height(),
            x.width()
        )));
    }
    let mut f = forward(x, kind)?;
    let (n, c, _, _) = f.shape();
    for ni in 0..n {
        for ci in 0..c {
            mask.apply_to_plane(f.plane_mut(ni, ci));
        }
    }
    let recon = inverse(&f, kind)?;
    let err2: f64 = x
        .as_slice()
        .iter()
        .zip(recon.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(err2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor4::new(n, c, h, w, data).unwrap()
    }

    /// Naive double-sum DCT with the orthonormal cosine basis, O(d^2).
    pub(crate) fn naive_dct2d(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
        let su = |k: usize, n: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        let mut out = vec![0.0; h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = 0.0;
                for a in 0..h {
                    for b in 0..w {
                        let basis = (std::f64::consts::PI * (2 * a + 1) as f64 * u as f64
                            / (2 * h) as f64)
                            .cos()
                            * (std::f64::consts::PI * (2 * b + 1) as f64 * v as f64
                                / (2 * w) as f64)
                                .cos();
                        acc += plane[a * w + b] * basis;
                    }
                }
                out[u * w + v] = su(u, h) * su(v, w) * acc;
            }
        }
        out
    }

    #[test]
    fn dct_matches_naive_double_sum() {
        for seed in 0..20 {
            let x = random_tensor(1, 1, 8, 8, seed);
            let fast = forward(&x, TransformKind::Dct).unwrap();
            let naive = naive_dct2d(x.plane(0, 0), 8, 8);
            for (a, b) in fast.plane(0, 0).iter().zip(&naive) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        // non-square, fft path on one axis
        let x = random_tensor(1, 1, 4, 100, 7);
        let fast = forward(&x, TransformKind::Dct).unwrap();
        let naive = naive_dct2d(x.plane(0, 0), 4, 100);
        for (a, b) in fast.plane(0, 0).iter().zip(&naive) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn parseval_and_roundtrip_all_kinds() {
        for kind in [
            TransformKind::Dct,
            TransformKind::Dft,
            TransformKind::Dwt { levels: 3 },
        ] {
            let x = random_tensor(2, 3, 32, 32, 11);
            let f = forward(&x, kind).unwrap();
            for ni in 0..2 {
                for ci in 0..3 {
                    let ex: f64 = x.plane(ni, ci).iter().map(|v| v * v).sum();
                    let ef: f64 = f.plane(ni, ci).iter().map(|v| v * v).sum();
                    assert!((ex - ef).abs() <= 1e-10 * ex.max(1.0), "{kind}: per-channel energy");
                }
            }
            let back = inverse(&f, kind).unwrap();
            let err = x
                .as_slice()
                .iter()
                .zip(back.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "{kind}: roundtrip max err {err}");
        }
    }

    #[test]
    fn forward_norm_is_preserved() {
        let x = random_tensor(1, 1, 16, 16, 3);
        let f = forward(&x, TransformKind::Dct).unwrap();
        assert!((x.norm2() - f.norm2()).abs() < 1e-10);
    }

    #[test]
    fn linearity() {
        let x = random_tensor(1, 1, 16, 16, 5);
        let y = random_tensor(1, 1, 16, 16, 6);
        let (a, b) = (0.7, -1.3);
        let combo = Tensor4::new(
            1,
            1,
            16,
            16,
            x.as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(u, v)| a * u + b * v)
                .collect(),
        )
        .unwrap();
        for kind in [TransformKind::Dct, TransformKind::Dft, TransformKind::Dwt { levels: 2 }] {
            let fc = forward(&combo, kind).unwrap();
            let fx = forward(&x, kind).unwrap();
            let fy = forward(&y, kind).unwrap();
            for ((c, u), v) in fc.as_slice().iter().zip(fx.as_slice()).zip(fy.as_slice()) {
                assert!((c - (a * u + b * v)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn adjoint_identity_inner_products() {
        for kind in [TransformKind::Dct, TransformKind::Dft, TransformKind::Dwt { levels: 2 }] {
            let f = random_tensor(1, 1, 16, 16, 21);
            let g = random_tensor(1, 1, 16, 16, 22);
            let lhs: f64 = inverse(&f, kind)
                .unwrap()
                .as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(a, b)| a * b)
                .sum();
            let rhs: f64 = f
                .as_slice()
                .iter()
                .zip(adjoint_forward(&g, kind).unwrap().as_slice())
                .map(|(a, b)| a * b)
                .sum();
            assert!((lhs - rhs).abs() < 1e-9, "{kind}: <F^-1 f, g> = <f, A g>");
        }
    }

    #[test]
    fn adjoint_equals_forward_for_dct() {
        let g = random_tensor(1, 1, 8, 8, 9);
        let a = adjoint_forward(&g, TransformKind::Dct).unwrap();
        let f = forward(&g, TransformKind::Dct).unwrap();
        assert_eq!(a.as_slice(), f.as_slice());
    }

    #[test]
    fn zero_spectrum_inverts_to_zero_and_dc_to_constant() {
        let z = Tensor4::zeros(1, 1, 8, 8);
        let back = inverse(&z, TransformKind::Dct).unwrap();
        assert!(back.as_slice().iter().all(|&v| v == 0.0));

        let mut dc = Tensor4::zeros(1, 1, 8, 8);
        *dc.at_mut(0, 0, 0, 0) = 3.0;
        let img = inverse(&dc, TransformKind::Dct).unwrap();
        let expect = 3.0 / 64.0_f64.sqrt();
        for &v in img.as_slice() {
            assert!((v - expect).abs() < 1e-12);
        }
        // cross-check against the naive forward of the constant image
        let naive = naive_dct2d(img.plane(0, 0), 8, 8);
        assert!((naive[0] - 3.0).abs() < 1e-10);
        assert!(naive[1..].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn truncation_error_equals_dropped_energy() {
        let x = random_tensor(1, 1, 16, 16, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut idx: Vec<u32> = (0..256).collect();
        idx.shuffle(&mut rng);
        let mask = Mask::from_indices(16, 16, &idx[..64]).unwrap();
        let err = truncation_error(&x, &mask, TransformKind::Dct).unwrap();
        let f = forward(&x, TransformKind::Dct).unwrap();
        let dropped: f64 = f.plane(0, 0)
            .iter()
            .enumerate()
            .filter(|(i, _)| !mask.as_bools()[*i])
            .map(|(_, v)| v * v)
            .sum();
        assert!((err - dropped.sqrt()).abs() < 1e-9);

        assert!(truncation_error(&x, &Mask::full(16, 16), TransformKind::Dct).unwrap() < 1e-12);
        let full = truncation_error(&x, &Mask::empty(16, 16), TransformKind::Dct).unwrap();
        assert!((full - x.norm2()).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_finite_and_bad_dwt_shape() {
        let mut x = Tensor4::zeros(1, 1, 4, 4);
        x.as_mut_slice()[0] = f64::INFINITY;
        assert!(matches!(
            forward(&x, TransformKind::Dct),
            Err(FredError::InvalidInput(_))
        ));
        let y = Tensor4::zeros(1, 1, 6, 6);
        assert!(matches!(
            forward(&y, TransformKind::Dwt { levels: 1 }),
            Err(FredError::ShapeError(_))
        ));
    }

    #[test]
    fn backends_agree() {
        let x = random_tensor(1, 1, 32, 32, 50);
        let a = forward_with(&x, TransformKind::Dct, DctBackend::Direct).unwrap();
        let b = forward_with(&x, TransformKind::Dct, DctBackend::Fft).unwrap();
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() < 1e-11);
        }
        let ia = inverse_with(&a, TransformKind::Dct, DctBackend::Direct).unwrap();
        let ib = inverse_with(&a, TransformKind::Dct, DctBackend::Fft).unwrap();
        for (u, v) in ia.as_slice().iter().zip(ib.as_slice()) {
            assert!((u - v).abs() < 1e-11);
        }
    }
}
