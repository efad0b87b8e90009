//! Multilevel 2D Haar wavelet transform with orthonormal filters.
//!
//! Subbands use the usual pyramid layout: each level rewrites the current
//! low-pass block in place as [LL LH; HL HH] and recurses on LL, so the
//! level-L approximation ends up in the top-left (H/2^L) x (W/2^L) corner.

use crate::error::{FredError, Result};

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub(crate) fn check_dwt_shape(h: usize, w: usize, levels: u32) -> Result<()> {
    if levels == 0 {
        return Err(FredError::InvalidInput("dwt levels must be >= 1".into()));
    }
    if !h.is_power_of_two() || !w.is_power_of_two() {
        return Err(FredError::ShapeError(format!(
            "dwt requires power-of-two extents, got {h}x{w}"
        )));
    }
    let max = h.min(w).trailing_zeros();
    if levels > max {
        return Err(FredError::InvalidInput(format!(
            "dwt levels {levels} exceed log2(min({h}, {w})) = {max}"
        )));
    }
    Ok(())
}

fn haar_rows(block: &mut [f64], rows: usize, cols: usize, stride: usize, tmp: &mut [f64]) {
    let half = cols / 2;
    for r in 0..rows {
        let row = &mut block[r * stride..r * stride + cols];
        for j in 0..half {
            tmp[j] = (row[2 * j] + row[2 * j + 1]) * INV_SQRT2;
            tmp[half + j] = (row[2 * j] - row[2 * j + 1]) * INV_SQRT2;
        }
        row.copy_from_slice(&tmp[..cols]);
    }
}

fn haar_rows_inv(block: &mut [f64], rows: usize, cols: usize, stride: usize, tmp: &mut [f64]) {
    let half = cols / 2;
    for r in 0..rows {
        let row = &mut block[r * stride..r * stride + cols];
        for j in 0..half {
            tmp[2 * j] = (row[j] + row[half + j]) * INV_SQRT2;
            tmp[2 * j + 1] = (row[j] - row[half + j]) * INV_SQRT2;
        }
        row.copy_from_slice(&tmp[..cols]);
    }
}

fn haar_cols(block: &mut [f64], rows: usize, cols: usize, stride: usize, tmp: &mut [f64]) {
    let half = rows / 2;
    for c in 0..cols {
        for i in 0..half {
            let a = block[2 * i * stride + c];
            let b = block[(2 * i + 1) * stride + c];
            tmp[i] = (a + b) * INV_SQRT2;
            tmp[half + i] = (a - b) * INV_SQRT2;
        }
        for i in 0..rows {
            block[i * stride + c] = tmp[i];
        }
    }
}

fn haar_cols_inv(block: &mut [f64], rows: usize, cols: usize, stride: usize, tmp: &mut [f64]) {
    let half = rows / 2;
    for c in 0..cols {
        for i in 0..half {
            let a = block[i * stride + c];
            let d = block[(half + i) * stride + c];
            tmp[2 * i] = (a + d) * INV_SQRT2;
            tmp[2 * i + 1] = (a - d) * INV_SQRT2;
        }
        for i in 0..rows {
            block[i * stride + c] = tmp[i];
        }
    }
}

/// In-place multilevel forward transform of one (H, W) plane.
pub(crate) fn dwt2_forward(plane: &mut [f64], h: usize, w: usize, levels: u32) {
    let mut tmp = vec![0.0; h.max(w)];
    let (mut ch, mut cw) = (h, w);
    for _ in 0..levels {
        haar_rows(plane, ch, cw, w, &mut tmp);
        haar_cols(plane, ch, cw, w, &mut tmp);
        ch /= 2;
        cw /= 2;
    }
}

/// In-place multilevel inverse transform of one (H, W) plane.
pub(crate) fn dwt2_inverse(plane: &mut [f64], h: usize, w: usize, levels: u32) {
    let mut tmp = vec![0.0; h.max(w)];
    for level in (0..levels).rev() {
        let ch = h >> level;
        let cw = w >> level;
        haar_cols_inv(plane, ch, cw, w, &mut tmp);
        haar_rows_inv(plane, ch, cw, w, &mut tmp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_haar_on_2x2() {
        // [1 2; 3 4]: LL = mean * 2, details carry the differences
        let mut p = vec![1.0, 2.0, 3.0, 4.0];
        dwt2_forward(&mut p, 2, 2, 1);
        assert!((p[0] - 5.0).abs() < 1e-12); // (1+2+3+4)/2
        assert!((p[1] - -1.0).abs() < 1e-12); // row-diff average
        assert!((p[2] - -2.0).abs() < 1e-12); // col-diff average
        assert!((p[3] - 0.0).abs() < 1e-12);
        dwt2_inverse(&mut p, 2, 2, 1);
        for (a, b) in p.iter().zip(&[1.0, 2.0, 3.0, 4.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn multilevel_roundtrip_preserves_energy() {
        let (h, w) = (8, 16);
        let x: Vec<f64> = (0..h * w).map(|i| ((i * 29 + 3) % 13) as f64 - 6.0).collect();
        for levels in 1..=3 {
            let mut p = x.clone();
            dwt2_forward(&mut p, h, w, levels);
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ef: f64 = p.iter().map(|v| v * v).sum();
            assert!((ex - ef).abs() < 1e-10 * ex);
            dwt2_inverse(&mut p, h, w, levels);
            for (a, b) in p.iter().zip(&x) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn shape_checks() {
        assert!(check_dwt_shape(8, 8, 3).is_ok());
        assert!(check_dwt_shape(8, 8, 4).is_err());
        assert!(check_dwt_shape(6, 8, 1).is_err());
        assert!(check_dwt_shape(8, 8, 0).is_err());
    }
}
