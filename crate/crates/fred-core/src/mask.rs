//! Binary frequency masks over an (H, W) grid.

use crate::error::{FredError, Result};

/// A binary (H, W) mask selecting a subset of frequency dimensions.
///
/// The selected cells are also kept as a sorted index list (`u * W + v`),
/// which fixes the storage and gradient-routing order for those cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    h: usize,
    w: usize,
    on: Vec<bool>,
}

impl Mask {
    pub fn from_bools(h: usize, w: usize, on: Vec<bool>) -> Result<Self> {
        if on.len() != h * w {
            return Err(FredError::ShapeError(format!(
                "mask length {} does not match {h}x{w}",
                on.len()
            )));
        }
        Ok(Self { h, w, on })
    }

    /// Builds a mask from a sorted-or-not list of flat indices.
    pub fn from_indices(h: usize, w: usize, indices: &[u32]) -> Result<Self> {
        let mut on = vec![false; h * w];
        for &ix in indices {
            let ix = ix as usize;
            if ix >= h * w {
                return Err(FredError::ShapeError(format!(
                    "mask index {ix} out of range for {h}x{w}"
                )));
            }
            if on[ix] {
                return Err(FredError::InvalidInput(format!("duplicate mask index {ix}")));
            }
            on[ix] = true;
        }
        Ok(Self { h, w, on })
    }

    pub fn full(h: usize, w: usize) -> Self {
        Self { h, w, on: vec![true; h * w] }
    }

    pub fn empty(h: usize, w: usize) -> Self {
        Self { h, w, on: vec![false; h * w] }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.on[u * self.w + v]
    }

    pub fn ones(&self) -> usize {
        self.on.iter().filter(|&&b| b).count()
    }

    pub fn as_bools(&self) -> &[bool] {
        &self.on
    }

    /// Sorted flat indices (u * W + v) of the selected cells.
    pub fn index_list(&self) -> Vec<u32> {
        self.on
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i as u32))
            .collect()
    }

    /// Zeroes the cells of `plane` where the mask is off.
    pub fn apply_to_plane(&self, plane: &mut [f64]) {
        debug_assert_eq!(plane.len(), self.on.len());
        for (p, &keep) in plane.iter_mut().zip(&self.on) {
            if !keep {
                *p = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_list_is_sorted_flat_indices() {
        let m = Mask::from_indices(2, 3, &[4, 1]).unwrap();
        assert_eq!(m.index_list(), vec![1, 4]);
        assert!(m.get(0, 1));
        assert!(m.get(1, 1));
        assert!(!m.get(0, 0));
    }

    #[test]
    fn rejects_out_of_range_and_duplicates() {
        assert!(Mask::from_indices(2, 2, &[4]).is_err());
        assert!(Mask::from_indices(2, 2, &[1, 1]).is_err());
    }

    #[test]
    fn apply_zeroes_unselected() {
        let m = Mask::from_indices(1, 3, &[1]).unwrap();
        let mut p = vec![5.0, 6.0, 7.0];
        m.apply_to_plane(&mut p);
        assert_eq!(p, vec![0.0, 6.0, 0.0]);
    }
}
