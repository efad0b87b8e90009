//! Randomly initialized convolutional embedders with manual
//! backpropagation: forward features, exact input-gradients (VJP), and
//! exact parameter gradients for cross-entropy training.
//!
//! Architecture: `depth` blocks of [3x3 conv (pad 1, no bias), instance
//! norm (eps 1e-5, no affine), ReLU, 2x2 average pool stride 2], then a
//! linear head. The embedding is the flattened output of the last pool;
//! the head only participates in classification.

use crate::error::{FredError, Result};
use crate::rng::standard_normal;
use crate::tensor::Tensor4;
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

const EPS: f64 = 1e-5;
/// Instances accumulated per parallel work unit; grads are reduced in
/// fixed chunk order so results do not depend on thread scheduling.
const CHUNK: usize = 16;

/// Architecture description of one embedder/classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetSpec {
    pub depth: usize,
    pub filters: usize,
    /// (C, H, W) of the expected input.
    pub in_shape: (usize, usize, usize),
    pub classes: usize,
}

/// Block count used for a given resolution: one extra pooling stage per
/// doubling above 32 pixels.
pub fn default_depth(h: usize) -> usize {
    match h {
        0..=32 => 3,
        33..=64 => 4,
        65..=128 => 5,
        _ => 6,
    }
}

impl NetSpec {
    pub fn new(depth: usize, filters: usize, in_shape: (usize, usize, usize), classes: usize) -> Result<Self> {
        if depth == 0 || filters == 0 || classes == 0 {
            return Err(FredError::InvalidInput(
                "depth, filters, and classes must be positive".into(),
            ));
        }
        let spec = Self { depth, filters, in_shape, classes };
        spec.feat_shape()?; // must survive `depth` poolings
        Ok(spec)
    }

    /// (channels, height, width) after the final pooling stage.
    pub fn feat_shape(&self) -> Result<(usize, usize, usize)> {
        let (_, mut h, mut w) = self.in_shape;
        for _ in 0..self.depth {
            h /= 2;
            w /= 2;
            if h == 0 || w == 0 {
                return Err(FredError::InvalidInput(format!(
                    "depth {} pools a {}x{} input away",
                    self.depth, self.in_shape.1, self.in_shape.2
                )));
            }
        }
        Ok((self.filters, h, w))
    }

    pub fn feat_dim(&self) -> usize {
        let (c, h, w) = self.feat_shape().expect("validated at construction");
        c * h * w
    }

    fn conv_in_channels(&self, layer: usize) -> usize {
        if layer == 0 {
            self.in_shape.0
        } else {
            self.filters
        }
    }

    fn conv_len(&self, layer: usize) -> usize {
        self.filters * self.conv_in_channels(layer) * 9
    }

    pub fn param_count(&self) -> usize {
        let convs: usize = (0..self.depth).map(|l| self.conv_len(l)).sum();
        convs + self.classes * self.feat_dim() + self.classes
    }
}

/// Flat f64 parameter store with a layout table over conv layers and the
/// linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    spec: NetSpec,
    data: Vec<f64>,
    conv_offsets: Vec<usize>,
    head_w_offset: usize,
    head_b_offset: usize,
}

impl NetParams {
    fn layout(spec: &NetSpec) -> (Vec<usize>, usize, usize) {
        let mut conv_offsets = Vec::with_capacity(spec.depth);
        let mut at = 0;
        for l in 0..spec.depth {
            conv_offsets.push(at);
            at += spec.conv_len(l);
        }
        (conv_offsets, at, at + spec.classes * spec.feat_dim())
    }

    pub fn zeros(spec: &NetSpec) -> Self {
        let (conv_offsets, head_w_offset, head_b_offset) = Self::layout(spec);
        Self {
            spec: *spec,
            data: vec![0.0; spec.param_count()],
            conv_offsets,
            head_w_offset,
            head_b_offset,
        }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn conv(&self, layer: usize) -> &[f64] {
        let off = self.conv_offsets[layer];
        &self.data[off..off + self.spec.conv_len(layer)]
    }

    fn head_w(&self) -> &[f64] {
        &self.data[self.head_w_offset..self.head_b_offset]
    }

    fn head_b(&self) -> &[f64] {
        &self.data[self.head_b_offset..]
    }
}

/// He-initialized parameters: conv weights are fan-in scaled Gaussians,
/// the head weight is 1/sqrt(feat_dim) Gaussian, the head bias is zero.
pub fn init_params(spec: &NetSpec, seed: u64) -> NetParams {
    let mut params = NetParams::zeros(spec);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for l in 0..spec.depth {
        let fan_in = (spec.conv_in_channels(l) * 9) as f64;
        let std = (2.0 / fan_in).sqrt();
        let off = params.conv_offsets[l];
        for i in 0..spec.conv_len(l) {
            params.data[off + i] = std * standard_normal(&mut rng);
        }
    }
    let std = (1.0 / spec.feat_dim() as f64).sqrt();
    for i in params.head_w_offset..params.head_b_offset {
        params.data[i] = std * standard_normal(&mut rng);
    }
    params
}

/// Cached activations of one instance's pass through the conv blocks.
struct BlockCache {
    /// conv input planes (C_in x H x W)
    input: Vec<f64>,
    /// normalized pre-ReLU activations (F x H x W)
    xhat: Vec<f64>,
    /// per-channel 1 / sqrt(var + eps)
    inv_s: Vec<f64>,
    h: usize,
    w: usize,
}

struct InstanceCache {
    blocks: Vec<BlockCache>,
    feat: Vec<f64>,
}

/// 3x3 same-padding im2col: (C_in * 9, H * W) column matrix.
fn im2col(input: &[f64], c_in: usize, h: usize, w: usize) -> Array2<f64> {
    let mut cols = Array2::zeros((c_in * 9, h * w));
    for c in 0..c_in {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for p in 0..3usize {
            for q in 0..3usize {
                let row = c * 9 + p * 3 + q;
                let mut out_row = cols.row_mut(row);
                let out = out_row.as_slice_mut().expect("contiguous row");
                for y in 0..h {
                    let sy = y as isize + p as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut out[y * w..(y + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + q as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            dst[x] = src[sx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of `im2col`: scatter-adds column gradients back to the input.
fn col2im(cols: &Array2<f64>, c_in: usize, h: usize, w: usize, out: &mut [f64]) {
    out.fill(0.0);
    for c in 0..c_in {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for p in 0..3usize {
            for q in 0..3usize {
                let row = cols.row(c * 9 + p * 3 + q);
                let row = row.as_slice().expect("contiguous row");
                for y in 0..h {
                    let sy = y as isize + p as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let src = &row[y * w..(y + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + q as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += src[x];
                        }
                    }
                }
            }
        }
    }
}

fn forward_instance(params: &NetParams, instance: &[f64], keep_cache: bool) -> InstanceCache {
    let spec = &params.spec;
    let (c0, h0, w0) = spec.in_shape;
    let f = spec.filters;
    let mut cur = instance.to_vec();
    let (mut c_in, mut h, mut w) = (c0, h0, w0);
    let mut blocks = Vec::with_capacity(if keep_cache { spec.depth } else { 0 });

    for l in 0..spec.depth {
        let wmat = ArrayView2::from_shape((f, c_in * 9), params.conv(l)).expect("conv layout");
        let cols = im2col(&cur, c_in, h, w);
        let conv = wmat.dot(&cols); // (F, H*W)
        let conv = conv.into_raw_vec();

        // instance norm + ReLU, caching xhat and the channel scales
        let hw = h * w;
        let mut xhat = conv;
        let mut inv_s = vec![0.0; f];
        for ch in 0..f {
            let plane = &mut xhat[ch * hw..(ch + 1) * hw];
            let mean = plane.iter().sum::<f64>() / hw as f64;
            let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
            let s = 1.0 / (var + EPS).sqrt();
            inv_s[ch] = s;
            for v in plane.iter_mut() {
                *v = (*v - mean) * s;
            }
        }

        // ReLU then 2x2/2 average pool
        let (ph, pw) = (h / 2, w / 2);
        let mut pooled = vec![0.0; f * ph * pw];
        for ch in 0..f {
            let plane = &xhat[ch * hw..(ch + 1) * hw];
            let out = &mut pooled[ch * ph * pw..(ch + 1) * ph * pw];
            for y in 0..ph {
                for x in 0..pw {
                    let mut acc = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            acc += plane[(2 * y + dy) * w + 2 * x + dx].max(0.0);
                        }
                    }
                    out[y * pw + x] = acc / 4.0;
                }
            }
        }

        if keep_cache {
            blocks.push(BlockCache { input: std::mem::take(&mut cur), xhat, inv_s, h, w });
        }
        cur = pooled;
        c_in = f;
        h = ph;
        w = pw;
    }

    InstanceCache { blocks, feat: cur }
}

/// Backward through the conv blocks for one instance. `dfeat` is the
/// gradient w.r.t. the flattened embedding; returns the input gradient
/// and, when `param_grads` is given, accumulates conv weight gradients.
fn backward_instance(
    params: &NetParams,
    cache: &InstanceCache,
    dfeat: &[f64],
    mut param_grads: Option<&mut [f64]>,
) -> Vec<f64> {
    let spec = &params.spec;
    let f = spec.filters;
    let mut grad = dfeat.to_vec();

    for l in (0..spec.depth).rev() {
        let bc = &cache.blocks[l];
        let (h, w) = (bc.h, bc.w);
        let hw = h * w;
        let (ph, pw) = (h / 2, w / 2);

        // unpool (each output cell spreads grad/4) + ReLU mask
        let mut dxhat = vec![0.0; f * hw];
        for ch in 0..f {
            let gplane = &grad[ch * ph * pw..(ch + 1) * ph * pw];
            let xplane = &bc.xhat[ch * hw..(ch + 1) * hw];
            let dplane = &mut dxhat[ch * hw..(ch + 1) * hw];
            for y in 0..ph {
                for x in 0..pw {
                    let g = gplane[y * pw + x] / 4.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let ix = (2 * y + dy) * w + 2 * x + dx;
                            if xplane[ix] > 0.0 {
                                dplane[ix] = g;
                            }
                        }
                    }
                }
            }
        }

        // instance-norm backward: dz = (g - mean(g) - xhat * mean(g*xhat)) * inv_s
        let mut dz = dxhat;
        for ch in 0..f {
            let xplane = &bc.xhat[ch * hw..(ch + 1) * hw];
            let dplane = &mut dz[ch * hw..(ch + 1) * hw];
            let m = hw as f64;
            let g_mean = dplane.iter().sum::<f64>() / m;
            let gx_mean = dplane.iter().zip(xplane).map(|(g, x)| g * x).sum::<f64>() / m;
            let s = bc.inv_s[ch];
            for (d, x) in dplane.iter_mut().zip(xplane) {
                *d = (*d - g_mean - x * gx_mean) * s;
            }
        }

        // conv backward
        let c_in = spec.conv_in_channels(l);
        let dout = ArrayView2::from_shape((f, hw), &dz).expect("dz layout");
        let wmat = ArrayView2::from_shape((f, c_in * 9), params.conv(l)).expect("conv layout");
        if let Some(grads) = param_grads.as_deref_mut() {
            let cols = im2col(&bc.input, c_in, h, w);
            let dw = dout.dot(&cols.t()); // (F, C_in*9)
            let off = params.conv_offsets[l];
            for (g, d) in grads[off..off + spec.conv_len(l)].iter_mut().zip(dw.iter()) {
                *g += d;
            }
        }
        let dcols = wmat.t().dot(&dout); // (C_in*9, H*W)
        let mut dinput = vec![0.0; c_in * hw];
        col2im(&dcols, c_in, h, w, &mut dinput);
        grad = dinput;
    }
    grad
}

fn check_input(params: &NetParams, x: &Tensor4) -> Result<()> {
    let (c, h, w) = params.spec.in_shape;
    let (_, xc, xh, xw) = x.shape();
    if (xc, xh, xw) != (c, h, w) {
        return Err(FredError::ShapeError(format!(
            "input ({xc}, {xh}, {xw}) does not match net input ({c}, {h}, {w})"
        )));
    }
    if !x.is_finite() {
        return Err(FredError::InvalidInput("non-finite network input".into()));
    }
    Ok(())
}

/// Embeds a batch: features are the flattened final pooling stage,
/// one row per instance.
pub fn embed(params: &NetParams, x: &Tensor4) -> Result<Array2<f64>> {
    check_input(params, x)?;
    let n = x.instances();
    let dim = params.spec.feat_dim();
    let mut out = Array2::zeros((n, dim));
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| forward_instance(params, x.instance(i), false).feat)
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        out.row_mut(i).as_slice_mut().unwrap().copy_from_slice(&row);
    }
    Ok(out)
}

/// Exact vector-Jacobian product of `embed` w.r.t. the input batch.
pub fn embed_vjp(params: &NetParams, x: &Tensor4, upstream: &Array2<f64>) -> Result<Tensor4> {
    check_input(params, x)?;
    let n = x.instances();
    let dim = params.spec.feat_dim();
    if upstream.dim() != (n, dim) {
        return Err(FredError::ShapeError(format!(
            "upstream {:?} does not match ({n}, {dim})",
            upstream.dim()
        )));
    }
    let grads: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cache = forward_instance(params, x.instance(i), true);
            let up = upstream.row(i);
            backward_instance(params, &cache, up.as_slice().unwrap(), None)
        })
        .collect();
    let (c, h, w) = params.spec.in_shape;
    let mut data = Vec::with_capacity(n * c * h * w);
    for g in grads {
        data.extend_from_slice(&g);
    }
    Ok(Tensor4::from_parts(n, c, h, w, data))
}

/// Loss, exact parameter gradients, and softmax predictions of one
/// cross-entropy training step.
pub struct TrainStep {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub predictions: Array2<f64>,
}

/// Mean cross-entropy over the batch with exact parameter gradients by
/// manual backpropagation.
pub fn classify_forward_backward(
    params: &NetParams,
    x: &Tensor4,
    labels: &[usize],
) -> Result<TrainStep> {
    check_input(params, x)?;
    let n = x.instances();
    if labels.len() != n {
        return Err(FredError::ShapeError(format!("{} labels for {n} instances", labels.len())));
    }
    let classes = params.spec.classes;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(FredError::InvalidInput(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let dim = params.spec.feat_dim();
    let head_w = ArrayView2::from_shape((classes, dim), params.head_w()).expect("head layout");
    let head_b = params.head_b();

    // chunked so gradient reduction happens in fixed chunk order
    let chunks: Vec<(usize, Vec<usize>)> = (0..n)
        .collect::<Vec<_>>()
        .chunks(CHUNK)
        .map(|c| (c[0], c.to_vec()))
        .collect();

    struct ChunkOut {
        first: usize,
        loss: f64,
        grads: Vec<f64>,
        probs: Vec<Vec<f64>>,
    }

    let mut outs: Vec<ChunkOut> = chunks
        .into_par_iter()
        .map(|(first, idx)| {
            let mut grads = vec![0.0; params.data.len()];
            let mut loss = 0.0;
            let mut probs_out = Vec::with_capacity(idx.len());
            for &i in &idx {
                let cache = forward_instance(params, x.instance(i), true);

                // head forward: logits = W f + b
                let mut logits = vec![0.0; classes];
                for cc in 0..classes {
                    let row = head_w.row(cc);
                    let row = row.as_slice().unwrap();
                    logits[cc] =
                        head_b[cc] + row.iter().zip(&cache.feat).map(|(a, b)| a * b).sum::<f64>();
                }
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
                let z: f64 = exp.iter().sum();
                let probs: Vec<f64> = exp.iter().map(|e| e / z).collect();
                loss += -(probs[labels[i]].max(f64::MIN_POSITIVE)).ln();

                // dlogits = (p - onehot) / n
                let mut dlogits = probs.clone();
                dlogits[labels[i]] -= 1.0;
                for d in dlogits.iter_mut() {
                    *d /= n as f64;
                }

                // head grads and feature grad
                let mut dfeat = vec![0.0; dim];
                for cc in 0..classes {
                    let dw = &mut grads
                        [params.head_w_offset + cc * dim..params.head_w_offset + (cc + 1) * dim];
                    let row = head_w.row(cc);
                    let row = row.as_slice().unwrap();
                    for j in 0..dim {
                        dw[j] += dlogits[cc] * cache.feat[j];
                        dfeat[j] += dlogits[cc] * row[j];
                    }
                    grads[params.head_b_offset + cc] += dlogits[cc];
                }

                backward_instance(params, &cache, &dfeat, Some(&mut grads));
                probs_out.push(probs);
            }
            ChunkOut { first, loss, grads, probs: probs_out }
        })
        .collect();

    outs.sort_by_key(|o| o.first);
    let mut grads = vec![0.0; params.data.len()];
    let mut loss = 0.0;
    let mut predictions = Array2::zeros((n, classes));
    let mut row = 0;
    for o in outs {
        loss += o.loss;
        for (g, d) in grads.iter_mut().zip(&o.grads) {
            *g += d;
        }
        for p in o.probs {
            predictions.row_mut(row).as_slice_mut().unwrap().copy_from_slice(&p);
            row += 1;
        }
    }
    Ok(TrainStep { loss: loss / n as f64, grads, predictions })
}
