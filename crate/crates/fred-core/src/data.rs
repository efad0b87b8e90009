//! Dataset ingestion and export: IDX files, a deterministic
//! planted-spectrum generator for oracle tests, and PGM/PPM tile grids.

use crate::error::{FredError, Result};
use crate::frequency::{self, TransformKind};
use crate::rng::{derive_seed, standard_normal};
use crate::spectral::EvrMap;
use crate::tensor::Tensor4;
use byteorder::{BigEndian, ReadBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// A labeled image set with pixels scaled to [0, 1].
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Tensor4,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub name: String,
    /// SHA-256 over shape, pixel bits, and labels; stable across platforms.
    pub hash: String,
}

impl LabeledDataset {
    pub fn new(
        images: Tensor4,
        labels: Vec<usize>,
        class_count: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if labels.len() != images.instances() {
            return Err(FredError::ShapeError(format!(
                "{} labels for {} images",
                labels.len(),
                images.instances()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(FredError::InvalidInput(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        let hash = content_hash(&images, &labels, class_count);
        Ok(Self {
            images,
            labels,
            class_count,
            name: name.into(),
            hash,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Instance indices belonging to one class, in dataset order.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == class)
            .collect()
    }

    pub fn per_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// A new dataset containing at most `cap` instances of each class,
    /// keeping dataset order.
    pub fn cap_per_class(&self, cap: usize, name: impl Into<String>) -> Result<LabeledDataset> {
        let mut counts = vec![0usize; self.class_count];
        let mut keep = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if counts[l] < cap {
                counts[l] += 1;
                keep.push(i);
            }
        }
        let images = self.images.select_instances(&keep);
        let labels = keep.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset::new(images, labels, self.class_count, name)
    }

    /// The first `n` instances, keeping dataset order.
    pub fn take(&self, n: usize, name: impl Into<String>) -> Result<LabeledDataset> {
        let keep: Vec<usize> = (0..n.min(self.len())).collect();
        let images = self.images.select_instances(&keep);
        let labels = keep.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset::new(images, labels, self.class_count, name)
    }
}

fn content_hash(images: &Tensor4, labels: &[usize], class_count: usize) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"fred-dataset-v1");
    let (n, c, h, w) = images.shape();
    for dim in [n, c, h, w, class_count] {
        hasher.update((dim as u64).to_le_bytes());
    }
    for v in images.as_slice() {
        hasher.update(v.to_le_bytes());
    }
    for &l in labels {
        hasher.update((l as u32).to_le_bytes());
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

struct TrackedReader<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> TrackedReader<R> {
    fn new(inner: R) -> Self {
        Self { inner, pos: 0 }
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let at = self.pos;
        let v = self
            .inner
            .read_u32::<BigEndian>()
            .map_err(|_| FredError::format_at(at, format!("truncated while reading {what}")))?;
        self.pos += 4;
        Ok(v)
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.pos;
        self.inner
            .read_exact(buf)
            .map_err(|_| FredError::format_at(at, format!("truncated while reading {what}")))?;
        self.pos += buf.len() as u64;
        Ok(())
    }
}

/// Loads a classic big-endian IDX image/label file pair; pixels come out
/// scaled by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let mut ir = TrackedReader::new(BufReader::new(File::open(images_path)?));
    let magic = ir.read_u32("image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(FredError::format_at(
            0,
            format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let n = ir.read_u32("image count")? as usize;
    let h = ir.read_u32("image height")? as usize;
    let w = ir.read_u32("image width")? as usize;
    if h == 0 || w == 0 {
        return Err(FredError::format_at(8, format!("degenerate image dims {h}x{w}")));
    }
    let mut raw = vec![0u8; n * h * w];
    ir.read_exact(&mut raw, "pixel data")?;

    let mut lr = TrackedReader::new(BufReader::new(File::open(labels_path)?));
    let magic = lr.read_u32("label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(FredError::format_at(
            0,
            format!("bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let ln = lr.read_u32("label count")? as usize;
    if ln != n {
        return Err(FredError::format_at(
            4,
            format!("label count {ln} does not match image count {n}"),
        ));
    }
    let mut label_bytes = vec![0u8; ln];
    lr.read_exact(&mut label_bytes, "label data")?;

    let data: Vec<f64> = raw.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().copied().max().map_or(1, |m| m + 1);
    let images = Tensor4::new(n, 1, h, w, data)?;
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    LabeledDataset::new(images, labels, class_count, name)
}

/// Writes a single-channel dataset back out as an IDX pair, quantizing
/// pixels to bytes.
pub fn save_idx(ds: &LabeledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (n, c, h, w) = ds.images.shape();
    if c != 1 {
        return Err(FredError::InvalidInput(format!(
            "idx export supports 1 channel, got {c}"
        )));
    }
    let mut iw = BufWriter::new(File::create(images_path)?);
    iw.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    iw.write_all(&(n as u32).to_be_bytes())?;
    iw.write_all(&(h as u32).to_be_bytes())?;
    iw.write_all(&(w as u32).to_be_bytes())?;
    let bytes: Vec<u8> = ds
        .images
        .as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    iw.write_all(&bytes)?;
    iw.flush()?;

    let mut lw = BufWriter::new(File::create(labels_path)?);
    lw.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    lw.write_all(&(n as u32).to_be_bytes())?;
    let labels: Vec<u8> = ds.labels.iter().map(|&l| l as u8).collect();
    lw.write_all(&labels)?;
    lw.flush()?;
    Ok(())
}

/// Parameters of the planted-spectrum synthetic dataset.
#[derive(Debug, Clone, Copy)]
pub struct PlantedSpec {
    pub classes: usize,
    pub per_class: usize,
    pub h: usize,
    pub w: usize,
    pub dims_per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            classes: 2,
            per_class: 100,
            h: 16,
            w: 16,
            dims_per_class: 8,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

/// Deterministic synthetic dataset whose per-class spectra have unit
/// variance on a known set of planted dimensions.
///
/// Each instance is the inverse DCT of coefficients placed on the class's
/// planted dims (a fixed per-class mean plus a unit-variance draw), plus
/// spatial white noise of standard deviation `noise_sigma`. Returns the
/// planted (u, v) lists as ground truth.
pub fn gen_planted(spec: &PlantedSpec) -> Result<(LabeledDataset, Vec<Vec<(usize, usize)>>)> {
    let PlantedSpec { classes, per_class, h, w, dims_per_class, noise_sigma, seed } = *spec;
    if dims_per_class > h * w {
        return Err(FredError::InvalidInput(format!(
            "{dims_per_class} planted dims do not fit in {h}x{w}"
        )));
    }
    let n = classes * per_class;
    let mut spectra = Tensor4::zeros(n, 1, h, w);
    let mut labels = Vec::with_capacity(n);
    let mut planted = Vec::with_capacity(classes);

    for class in 0..classes {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, class as u64));
        let mut cells: Vec<usize> = (0..h * w).collect();
        cells.shuffle(&mut rng);
        cells.truncate(dims_per_class);
        cells.sort_unstable();
        planted.push(cells.iter().map(|&ix| (ix / w, ix % w)).collect::<Vec<_>>());

        // fixed class mean per planted dim; instances deviate with variance 1
        let means: Vec<f64> = (0..dims_per_class)
            .map(|_| 3.0 * standard_normal(&mut rng))
            .collect();
        for i in 0..per_class {
            let inst = class * per_class + i;
            labels.push(class);
            let plane = spectra.plane_mut(inst, 0);
            for (d, &ix) in cells.iter().enumerate() {
                plane[ix] = means[d] + standard_normal(&mut rng);
            }
        }
    }

    let mut images = frequency::inverse(&spectra, TransformKind::Dct)?;
    if noise_sigma > 0.0 {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 0xFFFF_FFFF));
        for v in images.as_mut_slice() {
            *v += noise_sigma * standard_normal(&mut rng);
        }
    }
    let ds = LabeledDataset::new(images, labels, classes, format!("planted-{seed}"))?;
    Ok((ds, planted))
}

/// Writes a tile grid of images as binary PGM (1 channel) or PPM (3
/// channels), `cols` tiles per row, values clamped to [0, 1].
pub fn export_grid(images: &Tensor4, cols: usize, path: &Path) -> Result<()> {
    let (n, c, h, w) = images.shape();
    if c != 1 && c != 3 {
        return Err(FredError::InvalidInput(format!(
            "grid export supports 1 or 3 channels, got {c}"
        )));
    }
    if n == 0 || cols == 0 {
        return Err(FredError::InvalidInput("empty grid".into()));
    }
    let rows = n.div_ceil(cols);
    let (gh, gw) = (rows * h, cols * w);
    let mut canvas = vec![0u8; gh * gw * c];
    for i in 0..n {
        let (r0, c0) = (i / cols * h, i % cols * w);
        for ch in 0..c {
            let plane = images.plane(i, ch);
            for y in 0..h {
                for x in 0..w {
                    let byte = (plane[y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8;
                    canvas[((r0 + y) * gw + c0 + x) * c + ch] = byte;
                }
            }
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    let tag = if c == 1 { "P5" } else { "P6" };
    write!(out, "{tag}\n{gw} {gh}\n255\n")?;
    out.write_all(&canvas)?;
    out.flush()?;
    Ok(())
}

/// Writes an EVR map as a plain-text float grid with an `EVR H W class`
/// header line.
pub fn write_evr_text(evr: &EvrMap, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "EVR {} {} {}", evr.height(), evr.width(), evr.class_id)?;
    for u in 0..evr.height() {
        let row: Vec<String> = (0..evr.width())
            .map(|v| format!("{}", evr.eta[u * evr.width() + v]))
            .collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    out.flush()?;
    Ok(())
}
