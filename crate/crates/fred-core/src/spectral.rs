//! Per-class variance statistics in the frequency domain, explained
//! variance ratios, and binary mask construction.

use crate::error::{FredError, Result};
use crate::frequency::{self, TransformKind};
use crate::mask::Mask;
use crate::tensor::Tensor4;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Explained variance ratio map of one class over an (H, W) grid.
///
/// `variance` is the population variance of each frequency dimension over
/// the class members, averaged across channels; `eta` is `variance`
/// normalized to sum to one. When the class has zero total variance the
/// map is flagged degenerate and `eta` is uniform.
#[derive(Debug, Clone)]
pub struct EvrMap {
    pub class_id: usize,
    h: usize,
    w: usize,
    pub eta: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean_abs: Vec<f64>,
    pub sample_count: usize,
    pub degenerate: bool,
}

impl EvrMap {
    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }
}

/// Criterion used to pick the k kept dimensions of each class mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskStrategy {
    Evr,
    LowPass,
    HighPass,
    BandStop,
    Random,
    Amplitude,
}

impl std::fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MaskStrategy::Evr => "evr",
            MaskStrategy::LowPass => "low",
            MaskStrategy::HighPass => "high",
            MaskStrategy::BandStop => "band",
            MaskStrategy::Random => "random",
            MaskStrategy::Amplitude => "amplitude",
        };
        write!(f, "{s}")
    }
}

/// Whether EVR statistics are computed per class or once over the whole
/// dataset (shared mask for every class).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvrScope {
    PerClass,
    Global,
}

/// Per-class binary masks with exactly `k` ones each.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    h: usize,
    w: usize,
    k: usize,
    strategy: MaskStrategy,
    masks: Vec<Mask>,
    index_lists: Vec<Vec<u32>>,
}

impl MaskSet {
    pub fn new(masks: Vec<Mask>, k: usize, strategy: MaskStrategy) -> Result<Self> {
        let first = masks.first().ok_or_else(|| {
            FredError::InvalidInput("mask set needs at least one class".into())
        })?;
        let (h, w) = (first.height(), first.width());
        for (c, m) in masks.iter().enumerate() {
            if m.height() != h || m.width() != w {
                return Err(FredError::ShapeError(format!(
                    "mask for class {c} has shape {}x{}, expected {h}x{w}",
                    m.height(),
                    m.width()
                )));
            }
            if m.ones() != k {
                return Err(FredError::InvalidInput(format!(
                    "mask for class {c} has {} ones, expected {k}",
                    m.ones()
                )));
            }
        }
        let index_lists = masks.iter().map(|m| m.index_list()).collect();
        Ok(Self { h, w, k, strategy, masks, index_lists })
    }

    pub fn classes(&self) -> usize {
        self.masks.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn strategy(&self) -> MaskStrategy {
        self.strategy
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn class_mask(&self, class: usize) -> &Mask {
        &self.masks[class]
    }

    /// Sorted flat indices of the kept dimensions of one class.
    pub fn index_list(&self, class: usize) -> &[u32] {
        &self.index_lists[class]
    }
}

/// Deterministic sum: accumulates in the slice's sorted order so the result
/// does not depend on how callers ordered the inputs.
fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

/// Per-cell population variance and mean |value|, averaged over channels,
/// for the instance subset `idx`. Sums are order-stable, so the result is
/// invariant to instance permutations.
fn cell_stats(t: &Tensor4, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let (_, c, h, w) = t.shape();
    let cells = h * w;
    let n = idx.len() as f64;
    let mut variance = vec![0.0; cells];
    let mut mean_abs = vec![0.0; cells];
    let mut buf = vec![0.0; idx.len()];
    let mut dev = vec![0.0; idx.len()];
    for cell in 0..cells {
        let (mut var_acc, mut abs_acc) = (0.0, 0.0);
        for ch in 0..c {
            for (b, &i) in buf.iter_mut().zip(idx) {
                *b = t.plane(i, ch)[cell];
            }
            let mean = stable_sum(&mut buf) / n;
            for (d, b) in dev.iter_mut().zip(&buf) {
                *d = (b - mean) * (b - mean);
            }
            var_acc += stable_sum(&mut dev) / n;
            for (d, b) in dev.iter_mut().zip(&buf) {
                *d = b.abs();
            }
            abs_acc += stable_sum(&mut dev) / n;
        }
        variance[cell] = var_acc / c as f64;
        mean_abs[cell] = abs_acc / c as f64;
    }
    (variance, mean_abs)
}

fn evr_from_stats(
    class_id: usize,
    h: usize,
    w: usize,
    variance: Vec<f64>,
    mean_abs: Vec<f64>,
    sample_count: usize,
) -> EvrMap {
    let total: f64 = variance.iter().sum();
    let cells = h * w;
    let (eta, degenerate) = if total > 0.0 {
        (variance.iter().map(|v| v / total).collect(), false)
    } else {
        (vec![1.0 / cells as f64; cells], true)
    };
    EvrMap { class_id, h, w, eta, variance, mean_abs, sample_count, degenerate }
}

/// Explained variance ratio of each frequency dimension over the members
/// of `class_id`. `spectra` holds forward-transformed images.
pub fn compute_evr(spectra: &Tensor4, labels: &[usize], class_id: usize) -> Result<EvrMap> {
    if labels.len() != spectra.instances() {
        return Err(FredError::ShapeError(format!(
            "{} labels for {} instances",
            labels.len(),
            spectra.instances()
        )));
    }
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class_id).collect();
    if idx.len() < 2 {
        return Err(FredError::InsufficientData(format!(
            "class {class_id} has {} samples, need at least 2",
            idx.len()
        )));
    }
    let (h, w) = (spectra.height(), spectra.width());
    let (variance, mean_abs) = cell_stats(spectra, &idx);
    Ok(evr_from_stats(class_id, h, w, variance, mean_abs, idx.len()))
}

/// EVR over every instance regardless of label (global-mask mode).
pub fn compute_evr_global(spectra: &Tensor4) -> Result<EvrMap> {
    if spectra.instances() < 2 {
        return Err(FredError::InsufficientData(format!(
            "{} samples, need at least 2",
            spectra.instances()
        )));
    }
    let idx: Vec<usize> = (0..spectra.instances()).collect();
    let (h, w) = (spectra.height(), spectra.width());
    let (variance, mean_abs) = cell_stats(spectra, &idx);
    Ok(evr_from_stats(usize::MAX, h, w, variance, mean_abs, idx.len()))
}

#[inline]
fn cell_uv(ix: usize, w: usize) -> (usize, usize) {
    (ix / w, ix % w)
}

/// Lexicographic frequency order used to break ties deterministically:
/// (u + v, u, v) ascending.
#[inline]
fn freq_key(ix: usize, w: usize) -> (usize, usize, usize) {
    let (u, v) = cell_uv(ix, w);
    (u + v, u, v)
}

fn pick_top<F>(eligible: &[usize], w: usize, k: usize, score: F) -> Vec<usize>
where
    F: Fn(usize) -> f64,
{
    let mut order: Vec<usize> = eligible.to_vec();
    order.sort_unstable_by(|&a, &b| {
        score(b)
            .total_cmp(&score(a))
            .then_with(|| freq_key(a, w).cmp(&freq_key(b, w)))
    });
    order.truncate(k);
    order
}

fn build_mask_impl(
    evr: &EvrMap,
    k: usize,
    strategy: MaskStrategy,
    seed: u64,
    eligible: Option<&[bool]>,
) -> Result<Mask> {
    let (h, w) = (evr.h, evr.w);
    let cells = h * w;
    if k == 0 || k > cells {
        return Err(FredError::InvalidBudget(format!(
            "k = {k} outside 1..={cells}"
        )));
    }
    let eligible: Vec<usize> = match eligible {
        Some(e) => {
            debug_assert_eq!(e.len(), cells);
            (0..cells).filter(|&i| e[i]).collect()
        }
        None => (0..cells).collect(),
    };
    if k > eligible.len() {
        return Err(FredError::InvalidBudget(format!(
            "k = {k} exceeds the {} selectable dimensions",
            eligible.len()
        )));
    }

    let chosen: Vec<usize> = match strategy {
        MaskStrategy::Evr => pick_top(&eligible, w, k, |i| evr.eta[i]),
        MaskStrategy::Amplitude => pick_top(&eligible, w, k, |i| evr.mean_abs[i]),
        MaskStrategy::LowPass => {
            let mut order = eligible;
            order.sort_unstable_by_key(|&i| freq_key(i, w));
            order.truncate(k);
            order
        }
        MaskStrategy::HighPass => {
            let mut order = eligible;
            order.sort_unstable_by(|&a, &b| {
                let (sa, ua, va) = freq_key(a, w);
                let (sb, ub, vb) = freq_key(b, w);
                sb.cmp(&sa).then((ua, va).cmp(&(ub, vb)))
            });
            order.truncate(k);
            order
        }
        MaskStrategy::BandStop => {
            // drop the middle band h/4 <= u+v < 3h/4, fill from the
            // extremes lowest-frequency-first, overflowing into the band
            // only if the extremes cannot supply k cells
            let lo = h / 4;
            let hi = 3 * h / 4;
            let (mut outside, mut band): (Vec<usize>, Vec<usize>) = (Vec::new(), Vec::new());
            for &i in &eligible {
                let (s, _, _) = freq_key(i, w);
                if s >= lo && s < hi {
                    band.push(i);
                } else {
                    outside.push(i);
                }
            }
            outside.sort_unstable_by_key(|&i| freq_key(i, w));
            band.sort_unstable_by_key(|&i| freq_key(i, w));
            outside.extend(band);
            outside.truncate(k);
            outside
        }
        MaskStrategy::Random => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut order = eligible;
            order.shuffle(&mut rng);
            order.truncate(k);
            order
        }
    };

    let indices: Vec<u32> = chosen.iter().map(|&i| i as u32).collect();
    Mask::from_indices(h, w, &indices)
}

/// Builds one class mask with exactly `k` ones under the given strategy.
pub fn build_mask(evr: &EvrMap, k: usize, strategy: MaskStrategy, seed: u64) -> Result<Mask> {
    build_mask_impl(evr, k, strategy, seed, None)
}

/// `build_mask` restricted to an eligible subset of cells (used by the
/// packed DFT, whose selectable dimensions are the canonical half).
pub fn build_mask_within(
    evr: &EvrMap,
    k: usize,
    strategy: MaskStrategy,
    seed: u64,
    eligible: &[bool],
) -> Result<Mask> {
    build_mask_impl(evr, k, strategy, seed, Some(eligible))
}

/// Sum of eta over the selected cells.
pub fn masked_variance_sum(evr: &EvrMap, mask: &Mask) -> Result<f64> {
    if mask.height() != evr.h || mask.width() != evr.w {
        return Err(FredError::ShapeError(format!(
            "mask {}x{} does not match evr {}x{}",
            mask.height(),
            mask.width(),
            evr.h,
            evr.w
        )));
    }
    Ok(evr
        .eta
        .iter()
        .zip(mask.as_bools())
        .filter(|(_, &on)| on)
        .map(|(e, _)| e)
        .sum())
}

/// All-ones mask over the level-`levels` low-pass subband (DWT masking).
pub fn subband_ll_mask(h: usize, w: usize, levels: u32) -> Mask {
    let (sh, sw) = (h >> levels, w >> levels);
    let mut on = vec![false; h * w];
    for u in 0..sh {
        for v in 0..sw {
            on[u * w + v] = true;
        }
    }
    Mask::from_bools(h, w, on).expect("subband mask shape")
}

/// Both sides of the masked-variance identity for an orthonormal transform.
#[derive(Debug, Clone, Serialize)]
pub struct Prop1Report {
    pub freq_side: f64,
    pub spatial_side: f64,
    pub abs_diff: f64,
}

/// Compares the masked variance sum in the frequency domain against the
/// total variance of the mask-truncated reconstructions.
pub fn check_prop1(images: &Tensor4, mask: &Mask, kind: TransformKind) -> Result<Prop1Report> {
    if images.instances() < 2 {
        return Err(FredError::InsufficientData(format!(
            "{} images, need at least 2",
            images.instances()
        )));
    }
    if mask.height() != images.height() || mask.width() != images.width() {
        return Err(FredError::ShapeError("mask does not match image shape".into()));
    }
    let idx: Vec<usize> = (0..images.instances()).collect();
    let mut spectra = frequency::forward(images, kind)?;

    // channel-summed variance keeps both sides in the same (trace) units
    let c = images.channels();
    let (var_freq, _) = cell_stats(&spectra, &idx);
    let freq_side: f64 = var_freq
        .iter()
        .zip(mask.as_bools())
        .filter(|(_, &on)| on)
        .map(|(v, _)| v * c as f64)
        .sum();

    for n in 0..spectra.instances() {
        for ch in 0..c {
            mask.apply_to_plane(spectra.plane_mut(n, ch));
        }
    }
    let recon = frequency::inverse(&spectra, kind)?;
    let (var_spatial, _) = cell_stats(&recon, &idx);
    let spatial_side: f64 = var_spatial.iter().map(|v| v * c as f64).sum();

    Ok(Prop1Report {
        freq_side,
        spatial_side,
        abs_diff: (freq_side - spatial_side).abs(),
    })
}

/// Top-k explained variance in the DCT domain vs. over raw pixel dims.
#[derive(Debug, Clone, Serialize)]
pub struct Corollary1Report {
    pub evr_dct: f64,
    pub evr_spatial: f64,
}

fn top_k_eta_sum(t: &Tensor4, k: usize) -> f64 {
    let idx: Vec<usize> = (0..t.instances()).collect();
    let (variance, _) = cell_stats(t, &idx);
    let total: f64 = variance.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut v = variance;
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v[..k].iter().sum::<f64>() / total
}

/// Measures how much faster EVR mass accumulates in the DCT domain than in
/// the raw pixel domain at budget `k`.
pub fn check_corollary1(images: &Tensor4, k: usize) -> Result<Corollary1Report> {
    if images.instances() < 2 {
        return Err(FredError::InsufficientData(format!(
            "{} images, need at least 2",
            images.instances()
        )));
    }
    let d = images.height() * images.width();
    if k == 0 || k > d {
        return Err(FredError::InvalidBudget(format!("k = {k} outside 1..={d}")));
    }
    let spectra = frequency::forward(images, TransformKind::Dct)?;
    Ok(Corollary1Report {
        evr_dct: top_k_eta_sum(&spectra, k),
        evr_spatial: top_k_eta_sum(images, k),
    })
}

/// Per-class masks for a full dataset under one transform.
///
/// DCT masks follow the requested strategy on each class's EVR map. DFT
/// restricts selection to the canonical packed cells and folds each
/// conjugate pair's variance onto its representative. DWT ignores the
/// strategy and keeps the level-L low-pass subband, which must have
/// exactly k cells.
pub fn build_class_masks(
    spectra: &Tensor4,
    labels: &[usize],
    class_count: usize,
    k: usize,
    strategy: MaskStrategy,
    seed: u64,
    kind: TransformKind,
    scope: EvrScope,
) -> Result<MaskSet> {
    let (h, w) = (spectra.height(), spectra.width());
    if let TransformKind::Dwt { levels } = kind {
        let ll = subband_ll_mask(h, w, levels);
        if ll.ones() != k {
            return Err(FredError::InvalidBudget(format!(
                "dwt with {levels} levels keeps {} dims, but k = {k}",
                ll.ones()
            )));
        }
        let masks = vec![ll; class_count];
        return MaskSet::new(masks, k, strategy);
    }

    let eligible_dft: Option<Vec<bool>> = match kind {
        TransformKind::Dft => Some(
            (0..h * w)
                .map(|ix| {
                    let (u, v) = cell_uv(ix, w);
                    frequency::is_canonical(u, v, h, w)
                })
                .collect(),
        ),
        _ => None,
    };

    let global_evr = match scope {
        EvrScope::Global => Some(compute_evr_global(spectra)?),
        EvrScope::PerClass => None,
    };

    let mut masks = Vec::with_capacity(class_count);
    for class in 0..class_count {
        let mut evr = match &global_evr {
            Some(g) => g.clone(),
            None => compute_evr(spectra, labels, class)?,
        };
        if kind == TransformKind::Dft {
            fold_conjugate_pairs(&mut evr);
        }
        let class_seed = seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mask = match &eligible_dft {
            Some(e) => build_mask_within(&evr, k, strategy, class_seed, e)?,
            None => build_mask(&evr, k, strategy, class_seed)?,
        };
        masks.push(mask);
    }
    MaskSet::new(masks, k, strategy)
}

/// Folds each conjugate pair's statistics onto the canonical cell so a
/// packed-DFT dimension is ranked by the full complex coefficient.
fn fold_conjugate_pairs(evr: &mut EvrMap) {
    let (h, w) = (evr.h, evr.w);
    for u in 0..h {
        for v in 0..w {
            let (pu, pv) = frequency::partner(u, v, h, w);
            if (u, v) < (pu, pv) {
                let a = u * w + v;
                let b = pu * w + pv;
                evr.variance[a] += evr.variance[b];
                evr.variance[b] = 0.0;
                evr.eta[a] += evr.eta[b];
                evr.eta[b] = 0.0;
                // modulus bound: rank pairs by combined magnitude
                evr.mean_abs[a] = (evr.mean_abs[a] * evr.mean_abs[a]
                    + evr.mean_abs[b] * evr.mean_abs[b])
                    .sqrt();
                evr.mean_abs[b] = 0.0;
            }
        }
    }
}
