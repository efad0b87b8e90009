//! Dense 4-dimensional tensors in row-major (N, C, H, W) layout.

use crate::error::{FredError, Result};

/// A batch of real-valued images or spectra, stored row-major as
/// (instances, channels, height, width).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    /// Builds a tensor from raw data, checking length and finiteness.
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(FredError::ShapeError(format!(
                "height and width must be >= 1, got {h}x{w}"
            )));
        }
        let expected = n * c * h * w;
        if data.len() != expected {
            return Err(FredError::ShapeError(format!(
                "data length {} does not match shape ({n}, {c}, {h}, {w}) = {expected}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(FredError::InvalidInput(
                "tensor contains non-finite values".into(),
            ));
        }
        Ok(Self { n, c, h, w, data })
    }

    /// Internal constructor for values produced by trusted computations.
    pub(crate) fn from_parts(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * c * h * w);
        Self { n, c, h, w, data }
    }

    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn instances(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    /// Scalars per instance (C * H * W).
    pub fn instance_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, i: usize, j: usize) -> f64 {
        self.data[((n * self.c + c) * self.h + i) * self.w + j]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, i: usize, j: usize) -> &mut f64 {
        &mut self.data[((n * self.c + c) * self.h + i) * self.w + j]
    }

    /// Read-only view of one (instance, channel) plane of H*W scalars.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let start = (n * self.c + c) * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let start = (n * self.c + c) * self.h * self.w;
        let len = self.h * self.w;
        &mut self.data[start..start + len]
    }

    /// Read-only view of one instance (C*H*W scalars).
    pub fn instance(&self, n: usize) -> &[f64] {
        let len = self.instance_len();
        &self.data[n * len..(n + 1) * len]
    }

    /// Copies a subset of instances into a new tensor, in the given order.
    pub fn select_instances(&self, idx: &[usize]) -> Tensor4 {
        let len = self.instance_len();
        let mut data = Vec::with_capacity(idx.len() * len);
        for &i in idx {
            data.extend_from_slice(self.instance(i));
        }
        Tensor4::from_parts(idx.len(), self.c, self.h, self.w, data)
    }

    /// Euclidean norm over all entries.
    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Checks that two tensors share (C, H, W); instance counts may differ.
    pub fn same_geometry(&self, other: &Tensor4) -> bool {
        self.c == other.c && self.h == other.h && self.w == other.w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_length() {
        assert!(matches!(
            Tensor4::new(1, 1, 2, 2, vec![0.0; 3]),
            Err(FredError::ShapeError(_))
        ));
    }

    #[test]
    fn new_rejects_non_finite() {
        assert!(matches!(
            Tensor4::new(1, 1, 1, 2, vec![0.0, f64::NAN]),
            Err(FredError::InvalidInput(_))
        ));
    }

    #[test]
    fn new_rejects_zero_extent() {
        assert!(Tensor4::new(1, 1, 0, 2, vec![]).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::new(1, 2, 2, 3, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(t.at(0, 0, 0, 2), 2.0);
        assert_eq!(t.at(0, 1, 0, 0), 6.0);
        assert_eq!(t.at(0, 1, 1, 2), 11.0);
        assert_eq!(t.plane(0, 1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn select_instances_copies_in_order() {
        let t = Tensor4::new(3, 1, 1, 2, (0..6).map(f64::from).collect()).unwrap();
        let s = t.select_instances(&[2, 0]);
        assert_eq!(s.as_slice(), &[4.0, 5.0, 0.0, 1.0]);
    }
}
