//! Forward pass of the multimodal cross-attention (MMCA) unit and the
//! two-step tri-modal composition (TUMM).
//!
//! Blocks are single-head, pre-normalized, with a 4x GELU feed-forward and no
//! positional encoding, so every operation is equivariant to permuting the
//! frames of all inputs together. All operations are generic over [`Real`] so
//! the same code yields exact input gradients through [`Dual`] numbers.

mod mat;
mod real;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub use mat::Mat;
pub use real::{Dual, Real};

const LAYER_NORM_EPS: f64 = 1e-5;

/// `N x d` per-frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Mat<f64>,
}

impl FeatureSequence {
    pub fn new(data: Mat<f64>) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::validation(
                "feature sequence needs N >= 1 and d >= 1",
            ));
        }
        if !data.data().iter().all(|v| v.is_finite()) {
            return Err(Error::validation("feature sequence has non-finite entries"));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::validation(format!(
                "feature row {i} has {} entries, expected {d}",
                rows[i].len()
            )));
        }
        Self::new(Mat::from_vec(rows.len(), d, rows.concat())?)
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> Mat<f64> {
        self.data
    }
}

/// Receives the row sums of every softmax evaluated during a forward pass.
pub trait Probe {
    fn softmax_rows(&mut self, sums: &[f64]);
}

impl Probe for () {
    fn softmax_rows(&mut self, _: &[f64]) {}
}

/// Records how far softmax row sums stray from 1.
#[derive(Debug, Clone, Default)]
pub struct RowSumProbe {
    pub calls: usize,
    pub rows: usize,
    pub max_deviation: f64,
}

impl Probe for RowSumProbe {
    fn softmax_rows(&mut self, sums: &[f64]) {
        self.calls += 1;
        self.rows += sums.len();
        for s in sums {
            self.max_deviation = self.max_deviation.max((s - 1.0).abs());
        }
    }
}

/// Projections of one attention layer, applied to row vectors (`x · W`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub wq: Mat<f64>,
    pub wk: Mat<f64>,
    pub wv: Mat<f64>,
    pub wo: Mat<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormWeights {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

/// `d -> 4d -> d` with GELU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardWeights {
    pub w1: Mat<f64>,
    pub b1: Vec<f64>,
    pub w2: Mat<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub norm1: LayerNormWeights,
    pub attn: AttentionWeights,
    pub norm2: LayerNormWeights,
    pub ffn: FeedForwardWeights,
}

/// One MMCA unit: an encoder per branch and two cross-attention layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MmcaWeights {
    /// Query-side (3D) branch.
    pub encoder_query: EncoderWeights,
    /// Key/value-side branch.
    pub encoder_context: EncoderWeights,
    pub cross1: AttentionWeights,
    pub cross2: AttentionWeights,
}

/// The three MMCA units of the tri-modal composition.
#[derive(Debug, Clone, PartialEq)]
pub struct TummWeights {
    pub lidar_rgb: MmcaWeights,
    pub lidar_event: MmcaWeights,
    pub fuse: MmcaWeights,
}

impl AttentionWeights {
    fn matrices(&self) -> [&Mat<f64>; 4] {
        [&self.wq, &self.wk, &self.wv, &self.wo]
    }

    fn matrices_mut(&mut self) -> [&mut Mat<f64>; 4] {
        [&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wo]
    }
}

impl EncoderWeights {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.norm1.gain, &self.norm1.bias];
        out.extend(self.attn.matrices().map(|m| m.data()));
        out.extend([&self.norm2.gain[..], &self.norm2.bias]);
        out.extend([
            self.ffn.w1.data(),
            &self.ffn.b1,
            self.ffn.w2.data(),
            &self.ffn.b2,
        ]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.norm1.gain, &mut self.norm1.bias];
        out.extend(self.attn.matrices_mut().map(|m| m.data_mut()));
        out.extend([&mut self.norm2.gain[..], &mut self.norm2.bias]);
        let FeedForwardWeights { w1, b1, w2, b2 } = &mut self.ffn;
        out.extend([w1.data_mut(), &mut b1[..], w2.data_mut(), &mut b2[..]]);
        out
    }

    fn check(&self, d: usize) -> Result<()> {
        let sizes = [
            d,
            d,
            d * d,
            d * d,
            d * d,
            d * d,
            d,
            d,
            4 * d * d,
            4 * d,
            4 * d * d,
            d,
        ];
        let shapes_ok = self.tensors().iter().zip(sizes).all(|(t, n)| t.len() == n)
            && self.ffn.w1.rows() == d
            && self.ffn.w2.cols() == d
            && self.attn.matrices().iter().all(|m| m.rows() == d);
        if !shapes_ok {
            return Err(Error::validation(format!(
                "encoder weights do not match d = {d}"
            )));
        }
        Ok(())
    }
}

impl MmcaWeights {
    pub fn dim(&self) -> usize {
        self.cross1.wq.rows()
    }

    /// Every parameter tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.encoder_query.tensors();
        out.extend(self.encoder_context.tensors());
        out.extend(self.cross1.matrices().map(|m| m.data()));
        out.extend(self.cross2.matrices().map(|m| m.data()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder_query.tensors_mut();
        out.extend(self.encoder_context.tensors_mut());
        out.extend(self.cross1.matrices_mut().map(|m| m.data_mut()));
        out.extend(self.cross2.matrices_mut().map(|m| m.data_mut()));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::validation("MMCA weights need d >= 1"));
        }
        self.encoder_query.check(d)?;
        self.encoder_context.check(d)?;
        let square = |m: &Mat<f64>| m.rows() == d && m.cols() == d;
        if !self
            .cross1
            .matrices()
            .into_iter()
            .chain(self.cross2.matrices())
            .all(square)
        {
            return Err(Error::validation(format!(
                "cross-attention weights do not match d = {d}"
            )));
        }
        if !self
            .tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
        {
            return Err(Error::validation("MMCA weights have non-finite entries"));
        }
        Ok(())
    }

    /// Zeroes the output projections of every residual sub-block and of the
    /// second cross-attention layer, turning each stage into the identity on
    /// its query-side input.
    pub fn zero_residual_outputs(&mut self) {
        for e in [&mut self.encoder_query, &mut self.encoder_context] {
            zero(e.attn.wo.data_mut());
            zero(e.ffn.w2.data_mut());
            zero(&mut e.ffn.b2);
        }
        zero(self.cross2.wo.data_mut());
    }
}

fn zero(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = 0.0);
}

impl TummWeights {
    pub fn dim(&self) -> usize {
        self.fuse.dim()
    }

    pub fn units(&self) -> [&MmcaWeights; 3] {
        [&self.lidar_rgb, &self.lidar_event, &self.fuse]
    }

    pub fn units_mut(&mut self) -> [&mut MmcaWeights; 3] {
        [&mut self.lidar_rgb, &mut self.lidar_event, &mut self.fuse]
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for u in self.units() {
            u.validate()?;
            if u.dim() != d {
                return Err(Error::validation("TUMM units disagree on d"));
            }
        }
        Ok(())
    }

    pub fn zero_residual_outputs(&mut self) {
        for u in self.units_mut() {
            u.zero_residual_outputs();
        }
    }
}

/// Weights for channel count `d`: matrix entries are `N(0, 1) / sqrt(d)`,
/// feed-forward biases zero, normalization gains one and biases zero.
pub fn init_weights(d: usize, seed: u64) -> Result<MmcaWeights> {
    if d == 0 {
        return Err(Error::validation("init_weights needs d >= 1"));
    }
    Ok(init_with(d, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Three independently seeded units drawn from one stream per unit.
pub fn init_tumm_weights(d: usize, seed: u64) -> Result<TummWeights> {
    if d == 0 {
        return Err(Error::validation("init_tumm_weights needs d >= 1"));
    }
    let unit = |stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        init_with(d, &mut rng)
    };
    Ok(TummWeights {
        lidar_rgb: unit(0),
        lidar_event: unit(1),
        fuse: unit(2),
    })
}

fn init_with(d: usize, rng: &mut ChaCha8Rng) -> MmcaWeights {
    let scale = 1.0 / (d as f64).sqrt();
    let mut mat = |rows: usize, cols: usize| {
        Mat::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
    };
    let mut attention = || AttentionWeights {
        wq: mat(d, d),
        wk: mat(d, d),
        wv: mat(d, d),
        wo: mat(d, d),
    };
    let norm = || LayerNormWeights {
        gain: vec![1.0; d],
        bias: vec![0.0; d],
    };
    let encoder_query_attn = attention();
    let encoder_context_attn = attention();
    let cross1 = attention();
    let cross2 = attention();
    let mut ffn = || FeedForwardWeights {
        w1: mat(d, 4 * d),
        b1: vec![0.0; 4 * d],
        w2: mat(4 * d, d),
        b2: vec![0.0; d],
    };
    let ffn_query = ffn();
    let ffn_context = ffn();
    MmcaWeights {
        encoder_query: EncoderWeights {
            norm1: norm(),
            attn: encoder_query_attn,
            norm2: norm(),
            ffn: ffn_query,
        },
        encoder_context: EncoderWeights {
            norm1: norm(),
            attn: encoder_context_attn,
            norm2: norm(),
            ffn: ffn_context,
        },
        cross1,
        cross2,
    }
}

/// `softmax(q kᵀ / sqrt(d)) v` with a row-wise, max-shifted softmax.
pub fn attention<T: Real>(
    q: &Mat<T>,
    k: &Mat<T>,
    v: &Mat<T>,
    probe: &mut dyn Probe,
) -> Result<Mat<T>> {
    let d = q.cols();
    if d == 0 || k.cols() != d || k.rows() != v.rows() || k.rows() == 0 {
        return Err(Error::validation(format!(
            "attention shapes q {}x{}, k {}x{}, v {}x{} are inconsistent",
            q.rows(),
            q.cols(),
            k.rows(),
            k.cols(),
            v.rows(),
            v.cols()
        )));
    }
    let scale = T::from_f64(1.0 / (d as f64).sqrt());
    let scores = q.mul_transpose(k);
    let mut out = Mat::zeros(q.rows(), v.cols());
    let mut sums = Vec::with_capacity(q.rows());
    let mut weights = Vec::with_capacity(k.rows());
    for r in 0..q.rows() {
        let row = scores.row(r);
        let max = row
            .iter()
            .map(|s| s.value())
            .fold(f64::NEG_INFINITY, f64::max);
        weights.clear();
        weights.extend(
            row.iter()
                .map(|&s| (s * scale - T::from_f64(max * scale.value())).exp()),
        );
        let total = weights.iter().fold(T::from_f64(0.0), |a, &b| a + b);
        weights.iter_mut().for_each(|w| *w = *w / total);
        sums.push(weights.iter().map(|w| w.value()).sum());
        let dst = &mut out.data_mut()[r * v.cols()..(r + 1) * v.cols()];
        for (j, &w) in weights.iter().enumerate() {
            for (o, &x) in dst.iter_mut().zip(v.row(j)) {
                *o = *o + w * x;
            }
        }
    }
    probe.softmax_rows(&sums);
    Ok(out)
}

/// Attention with learned projections: `attention(q Wq, kv_k Wk, kv_v Wv) Wo`.
fn projected<T: Real>(
    q: &Mat<T>,
    k: &Mat<T>,
    v: &Mat<T>,
    w: &AttentionWeights,
    probe: &mut dyn Probe,
) -> Result<Mat<T>> {
    Ok(attention(
        &q.mul_const(&w.wq),
        &k.mul_const(&w.wk),
        &v.mul_const(&w.wv),
        probe,
    )?
    .mul_const(&w.wo))
}

fn layer_norm<T: Real>(x: &Mat<T>, w: &LayerNormWeights) -> Mat<T> {
    let d = x.cols();
    let n = T::from_f64(d as f64);
    let mut out = Mat::zeros(x.rows(), d);
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().fold(T::from_f64(0.0), |a, &b| a + b) / n;
        let var = row
            .iter()
            .fold(T::from_f64(0.0), |a, &b| a + (b - mean) * (b - mean))
            / n;
        let inv = T::from_f64(1.0) / (var + T::from_f64(LAYER_NORM_EPS)).sqrt();
        for (c, &v) in row.iter().enumerate() {
            out.data_mut()[r * d + c] =
                (v - mean) * inv * T::from_f64(w.gain[c]) + T::from_f64(w.bias[c]);
        }
    }
    out
}

/// Tanh approximation of GELU.
fn gelu<T: Real>(x: T) -> T {
    let c = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    T::from_f64(0.5) * x * (T::from_f64(1.0) + (c * (x + T::from_f64(0.044715) * x * x * x)).tanh())
}

/// Pre-normalized residual block: `y = x + SelfAttn(LN1(x))`, then
/// `y + FFN(LN2(y))`.
pub fn encoder<T: Real>(x: &Mat<T>, w: &EncoderWeights, probe: &mut dyn Probe) -> Result<Mat<T>> {
    w.check(x.cols())?;
    let h = layer_norm(x, &w.norm1);
    let y = x.add(&projected(&h, &h, &h, &w.attn, probe)?);
    let h = layer_norm(&y, &w.norm2);
    let hidden = h.mul_const(&w.ffn.w1).add_row(&w.ffn.b1).map(gelu);
    Ok(y.add(&hidden.mul_const(&w.ffn.w2).add_row(&w.ffn.b2)))
}

/// One MMCA unit. Layer 1 attends from the encoded query branch to the
/// encoded context branch; layer 2 keeps the same queries and values but
/// uses layer 1's output as keys. The result is added to `query`.
pub fn mmca<T: Real>(
    query: &Mat<T>,
    context: &Mat<T>,
    w: &MmcaWeights,
    probe: &mut dyn Probe,
) -> Result<Mat<T>> {
    if query.rows() != context.rows() || query.cols() != context.cols() {
        return Err(Error::validation(format!(
            "MMCA inputs differ in shape: {}x{} vs {}x{}",
            query.rows(),
            query.cols(),
            context.rows(),
            context.cols()
        )));
    }
    if w.dim() != query.cols() {
        return Err(Error::validation(format!(
            "MMCA weights are for d = {}, features have d = {}",
            w.dim(),
            query.cols()
        )));
    }
    let eq = encoder(query, &w.encoder_query, probe)?;
    let ec = encoder(context, &w.encoder_context, probe)?;
    let layer1 = projected(&eq, &ec, &ec, &w.cross1, probe)?;
    let layer2 = projected(&eq, &layer1, &ec, &w.cross2, probe)?;
    Ok(query.add(&layer2))
}

/// LiDAR-RGB and LiDAR-event units, then a third unit fusing the two
/// results with the second one as a 3D context branch.
pub fn tumm<T: Real>(
    lidar: &Mat<T>,
    rgb: &Mat<T>,
    event: &Mat<T>,
    w: &TummWeights,
    probe: &mut dyn Probe,
) -> Result<Mat<T>> {
    let a = mmca(lidar, rgb, &w.lidar_rgb, probe)?;
    let b = mmca(lidar, event, &w.lidar_event, probe)?;
    mmca(&a, &b, &w.fuse, probe)
}

pub fn scaled_dot_attention(q: &Mat<f64>, k: &Mat<f64>, v: &Mat<f64>) -> Result<Mat<f64>> {
    attention(q, k, v, &mut ())
}

pub fn encoder_block(x: &FeatureSequence, w: &EncoderWeights) -> Result<FeatureSequence> {
    Ok(FeatureSequence {
        data: encoder(&x.data, w, &mut ())?,
    })
}

pub fn mmca_forward(
    f3d: &FeatureSequence,
    f2d: &FeatureSequence,
    w: &MmcaWeights,
) -> Result<FeatureSequence> {
    Ok(FeatureSequence {
        data: mmca(&f3d.data, &f2d.data, w, &mut ())?,
    })
}

pub fn tumm_forward(
    lidar: &FeatureSequence,
    rgb: &FeatureSequence,
    event: &FeatureSequence,
    w: &TummWeights,
) -> Result<FeatureSequence> {
    tumm_forward_probed(lidar, rgb, event, w, &mut ())
}

pub fn tumm_forward_probed(
    lidar: &FeatureSequence,
    rgb: &FeatureSequence,
    event: &FeatureSequence,
    w: &TummWeights,
    probe: &mut dyn Probe,
) -> Result<FeatureSequence> {
    if rgb.frames() != lidar.frames() || event.frames() != lidar.frames() {
        return Err(Error::validation("TUMM inputs differ in frame count"));
    }
    Ok(FeatureSequence {
        data: tumm(&lidar.data, &rgb.data, &event.data, w, probe)?,
    })
}

/// Gradient of the sum of all `mmca_forward` outputs with respect to each
/// entry of `f3d`, one dual-number pass per entry.
pub fn mmca_gradient_query(
    f3d: &FeatureSequence,
    f2d: &FeatureSequence,
    w: &MmcaWeights,
) -> Result<Mat<f64>> {
    let base = f3d.data.map(Dual::constant);
    let context = f2d.data.map(Dual::constant);
    let (n, d) = (f3d.frames(), f3d.dim());
    let mut grad = Vec::with_capacity(n * d);
    for k in 0..n * d {
        let mut q = base.clone();
        q.data_mut()[k].eps = 1.0;
        let out = mmca(&q, &context, w, &mut ())?;
        grad.push(out.data().iter().map(|v| v.eps).sum());
    }
    Mat::from_vec(n, d, grad)
}

#[cfg(test)]
mod tests;
