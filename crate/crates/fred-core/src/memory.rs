//! The synthetic frequency memory: budget arithmetic, masked-coefficient
//! storage, decoding, and the FRED1 container format.
//!
//! # Container layout (FRED1, little-endian)
//!
//! ```text
//! offset 0   magic: 46 52 45 44 31 00 ("FRED1\0")
//! offset 6   u32 x 10: classes, decoded_per_class, channels, H, W, k,
//!            transform_tag, seed_lo, seed_hi, ipc
//!            transform_tag: byte0 = kind (0 dct, 1 dft, 2 dwt),
//!                           byte1 = dwt levels (0 otherwise)
//! then       per class: k sorted u32 cell indices (u * W + v)
//! then       f32 coefficients, class-major over instances, channel-major
//!            within an instance, index-list order within a channel
//!            (DFT stores re, im per index)
//! ```
//!
//! Labels are implicit: instances are stored class-major, so instance `i`
//! belongs to class `i / decoded_per_class`.

use crate::data::LabeledDataset;
use crate::error::{FredError, Result};
use crate::frequency::{self, partner, TransformKind};
use crate::rng::derive_seed;
use crate::spectral::MaskSet;
use crate::tensor::Tensor4;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 6] = *b"FRED1\0";

/// Storage budget for one distillation run.
///
/// The budget equals `ipc` full-resolution instances per class; keeping
/// `k` of the `d = H * W` dims per channel lets the same budget decode
/// `floor(ipc * d / k)` instances per class (halved for the DFT, whose
/// coefficients cost two scalars).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BudgetSpec {
    pub ipc: usize,
    pub h: usize,
    pub w: usize,
    pub channels: usize,
    pub k: usize,
    pub transform: TransformKind,
}

impl BudgetSpec {
    /// Spatial dims per channel (d = H * W).
    pub fn spatial_dim(&self) -> usize {
        self.h * self.w
    }

    /// Stored scalars per kept dimension (2 for DFT).
    pub fn scalars_per_dim(&self) -> usize {
        self.transform.scalars_per_dim()
    }

    /// Synthetic instances the budget affords per class.
    pub fn decoded_per_class(&self) -> usize {
        self.ipc * self.spatial_dim() / (self.k * self.scalars_per_dim())
    }

    /// Instance-count multiplier relative to input-sized storage,
    /// d / (k * scalars_per_dim).
    pub fn instance_increment(&self) -> f64 {
        self.spatial_dim() as f64 / (self.k * self.scalars_per_dim()) as f64
    }

    /// Stored coefficient scalars per decoded instance.
    pub fn scalars_per_instance(&self) -> usize {
        self.channels * self.k * self.scalars_per_dim()
    }

    /// Coefficient scalars actually stored per class.
    pub fn stored_scalars_per_class(&self) -> usize {
        self.decoded_per_class() * self.scalars_per_instance()
    }

    /// The reference budget: ipc input-sized instances per class.
    pub fn budget_scalars_per_class(&self) -> usize {
        self.ipc * self.channels * self.spatial_dim()
    }
}

/// Validates and constructs a [`BudgetSpec`].
pub fn plan_budget(
    ipc: usize,
    h: usize,
    w: usize,
    channels: usize,
    k: usize,
    transform: TransformKind,
) -> Result<BudgetSpec> {
    if ipc == 0 || h == 0 || w == 0 || channels == 0 {
        return Err(FredError::InvalidBudget(
            "ipc, H, W, and channels must be positive".into(),
        ));
    }
    let d = h * w;
    if k == 0 || k > d {
        return Err(FredError::InvalidBudget(format!("k = {k} outside 1..={d}")));
    }
    let spec = BudgetSpec { ipc, h, w, channels, k, transform };
    if spec.decoded_per_class() == 0 {
        return Err(FredError::InvalidBudget(format!(
            "budget of {ipc} instance(s) cannot decode a single instance at k = {k} under {transform}"
        )));
    }
    debug_assert!(spec.stored_scalars_per_class() <= spec.budget_scalars_per_class());
    Ok(spec)
}

/// The learnable frequency memory: per-instance coefficient vectors plus
/// fixed labels, masks, and budget metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMemory {
    budget: BudgetSpec,
    mask_set: MaskSet,
    classes: usize,
    /// class-major instances, channel-major within an instance,
    /// index-list order within a channel
    coefficients: Vec<f64>,
    seed: u64,
}

impl SyntheticMemory {
    pub fn budget(&self) -> &BudgetSpec {
        &self.budget
    }

    pub fn mask_set(&self) -> &MaskSet {
        &self.mask_set
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn instance_count(&self) -> usize {
        self.classes * self.budget.decoded_per_class()
    }

    /// Fixed label of instance `i` (instances are class-major).
    pub fn label_of(&self, i: usize) -> usize {
        i / self.budget.decoded_per_class()
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.instance_count()).map(|i| self.label_of(i)).collect()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn instance_coefficients(&self, i: usize) -> &[f64] {
        let len = self.budget.scalars_per_instance();
        &self.coefficients[i * len..(i + 1) * len]
    }

    pub fn instance_coefficients_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.budget.scalars_per_instance();
        &mut self.coefficients[i * len..(i + 1) * len]
    }

    fn check_consistent(&self) -> Result<()> {
        let expect = self.instance_count() * self.budget.scalars_per_instance();
        if self.coefficients.len() != expect {
            return Err(FredError::CorruptMemory(format!(
                "{} coefficients, expected {expect}",
                self.coefficients.len()
            )));
        }
        if self.mask_set.classes() != self.classes {
            return Err(FredError::CorruptMemory(format!(
                "{} masks for {} classes",
                self.mask_set.classes(),
                self.classes
            )));
        }
        if self.mask_set.k() != self.budget.k {
            return Err(FredError::CorruptMemory(format!(
                "mask k = {} but budget k = {}",
                self.mask_set.k(),
                self.budget.k
            )));
        }
        if self.mask_set.shape() != (self.budget.h, self.budget.w) {
            return Err(FredError::CorruptMemory("mask shape != budget shape".into()));
        }
        if !self.coefficients.iter().all(|v| v.is_finite()) {
            return Err(FredError::CorruptMemory("non-finite coefficient".into()));
        }
        Ok(())
    }
}

/// Gathers the masked cells of a dense spectrum plane into slot order.
pub(crate) fn gather_plane(
    plane: &[f64],
    index_list: &[u32],
    transform: TransformKind,
    h: usize,
    w: usize,
    out: &mut [f64],
) {
    match transform {
        TransformKind::Dft => {
            for (j, &ix) in index_list.iter().enumerate() {
                let (u, v) = (ix as usize / w, ix as usize % w);
                let (pu, pv) = partner(u, v, h, w);
                out[2 * j] = plane[ix as usize];
                out[2 * j + 1] = if (pu, pv) == (u, v) { 0.0 } else { plane[pu * w + pv] };
            }
        }
        _ => {
            for (j, &ix) in index_list.iter().enumerate() {
                out[j] = plane[ix as usize];
            }
        }
    }
}

/// Scatters slot-ordered coefficients into a zeroed dense spectrum plane.
pub(crate) fn scatter_plane(
    coeffs: &[f64],
    index_list: &[u32],
    transform: TransformKind,
    h: usize,
    w: usize,
    plane: &mut [f64],
) {
    plane.fill(0.0);
    match transform {
        TransformKind::Dft => {
            for (j, &ix) in index_list.iter().enumerate() {
                let (u, v) = (ix as usize / w, ix as usize % w);
                let (pu, pv) = partner(u, v, h, w);
                plane[ix as usize] = coeffs[2 * j];
                if (pu, pv) != (u, v) {
                    plane[pu * w + pv] = coeffs[2 * j + 1];
                }
            }
        }
        _ => {
            for (j, &ix) in index_list.iter().enumerate() {
                plane[ix as usize] = coeffs[j];
            }
        }
    }
}

/// Initializes the memory with masked spectra of real samples drawn
/// without replacement per class.
pub fn init_memory(
    dataset: &LabeledDataset,
    mask_set: &MaskSet,
    budget: &BudgetSpec,
    seed: u64,
) -> Result<SyntheticMemory> {
    let (_, c, h, w) = dataset.images.shape();
    if (c, h, w) != (budget.channels, budget.h, budget.w) {
        return Err(FredError::ShapeError(format!(
            "dataset ({c}, {h}, {w}) does not match budget ({}, {}, {})",
            budget.channels, budget.h, budget.w
        )));
    }
    if mask_set.classes() != dataset.class_count {
        return Err(FredError::ShapeError(format!(
            "{} masks for {} classes",
            mask_set.classes(),
            dataset.class_count
        )));
    }
    if mask_set.k() != budget.k || mask_set.shape() != (h, w) {
        return Err(FredError::InvalidInput("mask set does not match budget".into()));
    }

    let per_class = budget.decoded_per_class();
    let mut picked = Vec::with_capacity(dataset.class_count * per_class);
    for class in 0..dataset.class_count {
        let mut idx = dataset.class_indices(class);
        if idx.len() < per_class {
            return Err(FredError::InsufficientData(format!(
                "class {class} has {} samples, needs {per_class}",
                idx.len()
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, class as u64));
        idx.shuffle(&mut rng);
        idx.truncate(per_class);
        picked.extend(idx);
    }

    let sampled = dataset.images.select_instances(&picked);
    let spectra = frequency::forward(&sampled, budget.transform)?;
    let slots = budget.k * budget.scalars_per_dim();
    let mut coefficients = vec![0.0; picked.len() * budget.channels * slots];
    for (i, _) in picked.iter().enumerate() {
        let class = i / per_class;
        let ixs = mask_set.index_list(class);
        for ch in 0..budget.channels {
            let off = (i * budget.channels + ch) * slots;
            gather_plane(
                spectra.plane(i, ch),
                ixs,
                budget.transform,
                h,
                w,
                &mut coefficients[off..off + slots],
            );
        }
    }

    let memory = SyntheticMemory {
        budget: *budget,
        mask_set: mask_set.clone(),
        classes: dataset.class_count,
        coefficients,
        seed,
    };
    memory.check_consistent()?;
    Ok(memory)
}

/// Scatters every coefficient vector into a dense spectrum and applies the
/// inverse transform. Returns the decoded batch with its fixed labels.
pub fn decode(memory: &SyntheticMemory) -> Result<(Tensor4, Vec<usize>)> {
    memory.check_consistent()?;
    let b = &memory.budget;
    let n = memory.instance_count();
    let slots = b.k * b.scalars_per_dim();
    let mut spectra = Tensor4::zeros(n, b.channels, b.h, b.w);
    for i in 0..n {
        let class = memory.label_of(i);
        let ixs = memory.mask_set.index_list(class);
        for ch in 0..b.channels {
            let off = (i * b.channels + ch) * slots;
            scatter_plane(
                &memory.coefficients[off..off + slots],
                ixs,
                b.transform,
                b.h,
                b.w,
                spectra.plane_mut(i, ch),
            );
        }
    }
    let images = frequency::inverse(&spectra, b.transform)?;
    Ok((images, memory.labels()))
}

/// Builds a memory directly from coefficient data (tests, baselines).
pub fn memory_from_parts(
    budget: BudgetSpec,
    mask_set: MaskSet,
    classes: usize,
    coefficients: Vec<f64>,
    seed: u64,
) -> Result<SyntheticMemory> {
    let memory = SyntheticMemory { budget, mask_set, classes, coefficients, seed };
    memory.check_consistent()?;
    Ok(memory)
}

fn transform_tag(kind: TransformKind) -> u32 {
    match kind {
        TransformKind::Dct => 0,
        TransformKind::Dft => 1,
        TransformKind::Dwt { levels } => 2 | (levels << 8),
    }
}

fn parse_transform_tag(tag: u32, offset: u64) -> Result<TransformKind> {
    let levels = (tag >> 8) & 0xFF;
    match (tag & 0xFF, tag >> 16) {
        (0, 0) if levels == 0 => Ok(TransformKind::Dct),
        (1, 0) if levels == 0 => Ok(TransformKind::Dft),
        (2, 0) if levels >= 1 => Ok(TransformKind::Dwt { levels }),
        _ => Err(FredError::format_at(offset, format!("bad transform tag {tag:#x}"))),
    }
}

/// Serializes the memory in the FRED1 container format.
pub fn save(memory: &SyntheticMemory, path: &Path) -> Result<()> {
    memory.check_consistent()?;
    let b = &memory.budget;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&MAGIC)?;
    for v in [
        memory.classes as u32,
        b.decoded_per_class() as u32,
        b.channels as u32,
        b.h as u32,
        b.w as u32,
        b.k as u32,
        transform_tag(b.transform),
        (memory.seed & 0xFFFF_FFFF) as u32,
        (memory.seed >> 32) as u32,
        b.ipc as u32,
    ] {
        out.write_u32::<LittleEndian>(v)?;
    }
    for class in 0..memory.classes {
        for &ix in memory.mask_set.index_list(class) {
            out.write_u32::<LittleEndian>(ix)?;
        }
    }
    for &v in &memory.coefficients {
        out.write_f32::<LittleEndian>(v as f32)?;
    }
    out.flush()?;
    Ok(())
}

struct CountingReader<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> CountingReader<R> {
    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let at = self.pos;
        let v = self
            .inner
            .read_u32::<LittleEndian>()
            .map_err(|_| FredError::format_at(at, format!("truncated while reading {what}")))?;
        self.pos += 4;
        Ok(v)
    }

    fn read_f32(&mut self, what: &str) -> Result<f32> {
        let at = self.pos;
        let v = self
            .inner
            .read_f32::<LittleEndian>()
            .map_err(|_| FredError::format_at(at, format!("truncated while reading {what}")))?;
        self.pos += 4;
        Ok(v)
    }
}

/// Reads a FRED1 container back into a [`SyntheticMemory`].
pub fn load(path: &Path) -> Result<SyntheticMemory> {
    let mut r = CountingReader { inner: BufReader::new(File::open(path)?), pos: 0 };
    let mut magic = [0u8; 6];
    r.inner
        .read_exact(&mut magic)
        .map_err(|_| FredError::format_at(0, "truncated magic"))?;
    r.pos += 6;
    if magic != MAGIC {
        return Err(FredError::format_at(0, format!("bad magic {magic:02x?}")));
    }

    let classes = r.read_u32("classes")? as usize;
    let decoded = r.read_u32("decoded_per_class")? as usize;
    let channels = r.read_u32("channels")? as usize;
    let h = r.read_u32("height")? as usize;
    let w = r.read_u32("width")? as usize;
    let k = r.read_u32("k")? as usize;
    let tag_at = r.pos;
    let tag = r.read_u32("transform tag")?;
    let seed_lo = r.read_u32("seed low")? as u64;
    let seed_hi = r.read_u32("seed high")? as u64;
    let ipc = r.read_u32("ipc")? as usize;
    let transform = parse_transform_tag(tag, tag_at)?;

    if classes == 0 || decoded == 0 || channels == 0 || h == 0 || w == 0 {
        return Err(FredError::format_at(6, "zero-sized header field"));
    }
    if k == 0 || k > h * w {
        return Err(FredError::format_at(26, format!("k = {k} outside 1..={}", h * w)));
    }
    if let TransformKind::Dwt { levels } = transform {
        if !h.is_power_of_two() || !w.is_power_of_two() || levels > h.min(w).trailing_zeros() {
            return Err(FredError::format_at(tag_at, "dwt levels incompatible with shape"));
        }
    }
    let budget = BudgetSpec { ipc, h, w, channels, k, transform };
    if plan_budget(ipc, h, w, channels, k, transform).is_err()
        || budget.decoded_per_class() != decoded
    {
        return Err(FredError::format_at(
            10,
            format!(
                "decoded_per_class {decoded} inconsistent with ipc {ipc}, d {}, k {k}",
                h * w
            ),
        ));
    }

    // guards against absurd sizes from corrupted headers before allocating
    let slots = k * transform.scalars_per_dim();
    let coeff_count = classes
        .checked_mul(decoded)
        .and_then(|v| v.checked_mul(channels))
        .and_then(|v| v.checked_mul(slots))
        .ok_or_else(|| FredError::format_at(6, "coefficient count overflows"))?;
    const MAX_COEFFS: usize = 1 << 30;
    if coeff_count > MAX_COEFFS {
        return Err(FredError::format_at(6, format!("{coeff_count} coefficients exceed limit")));
    }

    let mut masks = Vec::with_capacity(classes);
    for class in 0..classes {
        let mut prev: Option<u32> = None;
        let mut ixs = Vec::with_capacity(k);
        for j in 0..k {
            let at = r.pos;
            let ix = r.read_u32(&format!("index {j} of class {class}"))?;
            if ix as usize >= h * w {
                return Err(FredError::format_at(at, format!("index {ix} out of range")));
            }
            if let Some(p) = prev {
                if ix <= p {
                    return Err(FredError::format_at(at, format!("index {ix} not ascending")));
                }
            }
            prev = Some(ix);
            ixs.push(ix);
        }
        masks.push(
            crate::mask::Mask::from_indices(h, w, &ixs)
                .map_err(|e| FredError::format_at(r.pos, format!("bad index list: {e}")))?,
        );
    }
    let mask_set = MaskSet::new(masks, k, crate::spectral::MaskStrategy::Evr)
        .map_err(|e| FredError::format_at(r.pos, format!("bad mask set: {e}")))?;

    let mut coefficients = Vec::with_capacity(coeff_count);
    for i in 0..coeff_count {
        let at = r.pos;
        let v = r.read_f32(&format!("coefficient {i}"))?;
        if !v.is_finite() {
            return Err(FredError::format_at(at, format!("non-finite coefficient {v}")));
        }
        coefficients.push(v as f64);
    }
    let mut trailing = [0u8; 1];
    match r.inner.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => {
            return Err(FredError::format_at(r.pos, "trailing bytes after coefficients"))
        }
        Err(e) => return Err(e.into()),
    }

    let memory = SyntheticMemory {
        budget,
        mask_set,
        classes,
        coefficients,
        seed: seed_lo | (seed_hi << 32),
    };
    memory.check_consistent()?;
    Ok(memory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_class_masks, EvrScope, MaskStrategy};

    fn planted_dataset() -> LabeledDataset {
        crate::data::gen_planted(&crate::data::PlantedSpec {
            classes: 2,
            per_class: 40,
            h: 8,
            w: 8,
            dims_per_class: 6,
            noise_sigma: 0.02,
            seed: 3,
        })
        .unwrap()
        .0
    }

    fn mask_set_for(ds: &LabeledDataset, k: usize, kind: TransformKind) -> MaskSet {
        let spectra = frequency::forward(&ds.images, kind).unwrap();
        build_class_masks(
            &spectra,
            &ds.labels,
            ds.class_count,
            k,
            MaskStrategy::Evr,
            0,
            kind,
            EvrScope::PerClass,
        )
        .unwrap()
    }

    #[test]
    fn budget_examples() {
        let b = plan_budget(1, 32, 32, 3, 64, TransformKind::Dct).unwrap();
        assert_eq!(b.decoded_per_class(), 16);
        let b = plan_budget(10, 32, 32, 3, 160, TransformKind::Dct).unwrap();
        assert_eq!(b.decoded_per_class(), 64);
        let b = plan_budget(1, 64, 64, 3, 512, TransformKind::Dct).unwrap();
        assert_eq!(b.decoded_per_class(), 8);
        // complex coefficients halve the decoded count
        let b = plan_budget(1, 32, 32, 3, 64, TransformKind::Dft).unwrap();
        assert_eq!(b.decoded_per_class(), 8);
    }

    #[test]
    fn budget_never_exceeded() {
        for (ipc, h, w, c, k) in [(1, 32, 32, 3, 64), (10, 32, 32, 3, 160), (3, 16, 16, 1, 7)] {
            for t in [TransformKind::Dct, TransformKind::Dft] {
                let b = plan_budget(ipc, h, w, c, k, t).unwrap();
                assert!(b.stored_scalars_per_class() <= b.budget_scalars_per_class());
            }
        }
    }

    #[test]
    fn invalid_budgets_rejected() {
        assert!(matches!(
            plan_budget(1, 32, 32, 3, 2048, TransformKind::Dct),
            Err(FredError::InvalidBudget(_))
        ));
        assert!(plan_budget(0, 32, 32, 3, 64, TransformKind::Dct).is_err());
        // DFT at k close to d cannot afford one instance
        assert!(plan_budget(1, 4, 4, 1, 16, TransformKind::Dft).is_err());
    }

    #[test]
    fn init_is_masked_transform_of_real_samples() {
        let ds = planted_dataset();
        let budget = plan_budget(1, 8, 8, 1, 16, TransformKind::Dct).unwrap();
        let masks = mask_set_for(&ds, 16, TransformKind::Dct);
        let mem = init_memory(&ds, &masks, &budget, 7).unwrap();
        assert_eq!(mem.instance_count(), 2 * 4);
        let (decoded, labels) = decode(&mem).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        // decoded images differ from any real image by at most the
        // truncation error of their mask; verify against the best match
        for i in 0..decoded.instances() {
            let img = decoded.instance(i);
            let best = (0..ds.len())
                .map(|j| {
                    ds.images
                        .instance(j)
                        .iter()
                        .zip(img)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1.0, "instance {i} nowhere near the dataset: {best}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let ds = planted_dataset();
        let budget = plan_budget(1, 8, 8, 1, 16, TransformKind::Dct).unwrap();
        let masks = mask_set_for(&ds, 16, TransformKind::Dct);
        let a = init_memory(&ds, &masks, &budget, 42).unwrap();
        let b = init_memory(&ds, &masks, &budget, 42).unwrap();
        assert_eq!(a, b);
        let c = init_memory(&ds, &masks, &budget, 43).unwrap();
        assert_ne!(a.coefficients, c.coefficients);
    }

    #[test]
    fn full_mask_roundtrips_real_images() {
        let ds = planted_dataset();
        let budget = plan_budget(1, 8, 8, 1, 64, TransformKind::Dct).unwrap();
        assert_eq!(budget.decoded_per_class(), 1);
        let masks = mask_set_for(&ds, 64, TransformKind::Dct);
        let mem = init_memory(&ds, &masks, &budget, 5).unwrap();
        let (decoded, _) = decode(&mem).unwrap();
        // with k = d the decode must reproduce the sampled originals
        for i in 0..decoded.instances() {
            let img = decoded.instance(i);
            let best = (0..ds.len())
                .map(|j| {
                    ds.images
                        .instance(j)
                        .iter()
                        .zip(img)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9, "instance {i}: max err {best}");
        }
    }

    #[test]
    fn zero_coefficients_decode_to_zero_images() {
        let ds = planted_dataset();
        let budget = plan_budget(1, 8, 8, 1, 16, TransformKind::Dct).unwrap();
        let masks = mask_set_for(&ds, 16, TransformKind::Dct);
        let mut mem = init_memory(&ds, &masks, &budget, 7).unwrap();
        mem.coefficients_mut().fill(0.0);
        let (decoded, _) = decode(&mem).unwrap();
        assert!(decoded.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scatter_then_gather_is_identity() {
        for kind in [TransformKind::Dct, TransformKind::Dft] {
            let (h, w) = (6, 6);
            // DFT: restrict to canonical cells with a distinct partner, so
            // every slot is live (self-conjugate cells have no imag slot)
            let eligible: Vec<u32> = (0..36u32)
                .filter(|&ix| {
                    let (u, v) = (ix as usize / w, ix as usize % w);
                    kind != TransformKind::Dft
                        || (frequency::is_canonical(u, v, h, w) && partner(u, v, h, w) != (u, v))
                })
                .collect();
            let ixs: Vec<u32> = eligible.into_iter().step_by(2).take(8).collect();
            let slots = ixs.len() * kind.scalars_per_dim();
            let coeffs: Vec<f64> = (0..slots).map(|i| i as f64 + 0.5).collect();
            let mut plane = vec![0.0; h * w];
            scatter_plane(&coeffs, &ixs, kind, h, w, &mut plane);
            let mut back = vec![0.0; slots];
            gather_plane(&plane, &ixs, kind, h, w, &mut back);
            assert_eq!(coeffs, back, "{kind}");
        }
    }

    #[test]
    fn self_conjugate_imag_slot_reads_back_zero() {
        let (h, w) = (4, 4);
        let ixs = vec![0u32]; // DC cell is its own conjugate partner
        let coeffs = vec![2.5, 9.9]; // imag slot is dead
        let mut plane = vec![0.0; h * w];
        scatter_plane(&coeffs, &ixs, TransformKind::Dft, h, w, &mut plane);
        let mut back = vec![0.0; 2];
        gather_plane(&plane, &ixs, TransformKind::Dft, h, w, &mut back);
        assert_eq!(back, vec![2.5, 0.0]);
    }

    #[test]
    fn container_roundtrip_preserves_f32_clean_memories() {
        let dir = std::env::temp_dir().join(format!("fred-mem-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let ds = planted_dataset();
        let budget = plan_budget(1, 8, 8, 1, 16, TransformKind::Dct).unwrap();
        let masks = mask_set_for(&ds, 16, TransformKind::Dct);
        let mut mem = init_memory(&ds, &masks, &budget, 99).unwrap();
        // container stores f32; make the in-memory values f32-representable
        for v in mem.coefficients_mut() {
            *v = *v as f32 as f64;
        }
        let path = dir.join("m.fred");
        save(&mem, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(mem, loaded);

        // size: magic + 10 u32 header + classes*k u32 + coeffs f32
        let size = std::fs::metadata(&path).unwrap().len();
        let expect = 6 + 40 + (2 * 16 * 4) + (mem.coefficients().len() * 4) as u64;
        assert_eq!(size, expect);
    }

    #[test]
    fn corrupted_magic_is_format_error_at_zero() {
        let dir = std::env::temp_dir().join(format!("fred-mem2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.fred");
        std::fs::write(&path, b"NOTFRED??").unwrap();
        match load(&path) {
            Err(FredError::FormatError { offset: 0, .. }) => {}
            other => panic!("expected format error at 0, got {other:?}"),
        }
    }
}
