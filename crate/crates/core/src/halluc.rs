//! Hallucination streams trained against sketched ground-truth descriptors.
//!
//! Each stream mean-pools the `b × 7` backbone block over time, applies one
//! affine layer, SigmE and a fixed count sketch. The HAF stream has the same
//! shape but no target. The fused vector goes through an affine PredNet and
//! the whole model is trained on
//!
//! ```text
//! loss = (α/|H|) Σ_i mean_batch ‖ψ̃'_i − ψ'_i‖² + ℓ(PredNet(ψ'_tot), y)
//! ```
//!
//! by plain SGD with hand-written gradients.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::argmax;
use crate::error::{check_finite, check_len, Error, Result};
use crate::fusion::{self, BetaSearch, FusionSpec, Group, SearchPolicy, SearchSettings, HAF};
use crate::pn::{self, PnConfig, PnVariant};
use crate::rng;
use crate::sketch::CountSketch;

/// Temporal length of the backbone block.
pub const TEMPORAL_LEN: usize = 7;

pub const HALLUCINATION_STREAMS: [&str; 10] = [
    "fv1", "fv2", "bow", "off", "det1", "det2", "det3", "det4", "sal1", "sal2",
];

const CHECKPOINT_MAGIC: &[u8; 4] = b"HAL1";
const CHECKPOINT_VERSION: u32 = 1;

/// Which pooling group a stream id belongs to.
pub fn stream_group(id: &str) -> Group {
    if id.starts_with("det") {
        Group::Det
    } else if id.starts_with("sal") {
        Group::Sal
    } else {
        Group::Top
    }
}

/// Backbone block `X ∈ R^{b×7}`, stored column by column. This is the only
/// input inference accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneFeatures {
    dim: usize,
    data: Vec<f64>,
}

impl BackboneFeatures {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument(
                "backbone dimension must be positive".into(),
            ));
        }
        check_len("backbone block", dim * TEMPORAL_LEN, data.len())?;
        check_finite("backbone block", &data)?;
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * TEMPORAL_LEN],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn mean_pool(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for t in 0..TEMPORAL_LEN {
            for (o, x) in out.iter_mut().zip(self.column(t)) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= TEMPORAL_LEN as f64);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub features: BackboneFeatures,
    /// Sketched targets `ψ'_i` keyed by stream id.
    pub ground_truth: BTreeMap<String, Vec<f64>>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamUnit {
    pub stream_id: String,
    /// `m × b`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub pn: PnConfig,
    pub sketch: CountSketch,
}

/// Intermediate values of one stream on one video.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamTrace {
    /// Affine output before PN.
    pub lin: Vec<f64>,
    pub pre: Vec<f64>,
    pub out: Vec<f64>,
}

impl StreamUnit {
    /// Weights drawn from `N(0, 1/b)` with seed `derive_seed(seed,
    /// "init/<id>")`, zero bias, sketch seeded by `"stream/<id>"`.
    pub fn init(
        id: &str,
        b: usize,
        m: usize,
        d_prime: usize,
        pn: PnConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut r = rng::seeded(rng::derive_seed(seed, &format!("init/{id}")));
        let scale = 1.0 / (b as f64).sqrt();
        let weights = (0..m * b).map(|_| scale * rng::normal(&mut r)).collect();
        let sketch = CountSketch::new(m, d_prime, rng::derive_seed(seed, &format!("stream/{id}")))?;
        Self::from_parts(id, m, weights, vec![0.0; m], pn, sketch)
    }

    pub fn from_parts(
        id: &str,
        m: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        pn: PnConfig,
        sketch: CountSketch,
    ) -> Result<Self> {
        if m == 0 || !weights.len().is_multiple_of(m) || weights.is_empty() {
            return Err(Error::Shape {
                what: "stream weights",
                expected: m,
                actual: weights.len(),
            });
        }
        check_len("stream bias", m, bias.len())?;
        check_len("stream sketch input", m, sketch.input_dim())?;
        if pn.variant != PnVariant::Sigme {
            return Err(Error::Argument(
                "streams use SigmE power normalisation".into(),
            ));
        }
        pn.validate()?;
        Ok(Self {
            stream_id: id.to_string(),
            weights,
            bias,
            pn,
            sketch,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.len() / self.bias.len()
    }

    pub fn pre_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn output_dim(&self) -> usize {
        self.sketch.output_dim()
    }

    /// Forward pass on an already mean-pooled input.
    pub fn forward_pooled(&self, xbar: &[f64]) -> Result<StreamTrace> {
        let b = self.input_dim();
        check_len("stream input", b, xbar.len())?;
        let lin: Vec<f64> = self
            .weights
            .chunks_exact(b)
            .zip(&self.bias)
            .map(|(row, bias)| bias + row.iter().zip(xbar).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        let pre = pn::sigme(&lin, &self.pn)?;
        let out = self.sketch.project(&pre)?;
        Ok(StreamTrace { lin, pre, out })
    }

    /// Pulls `∂L/∂out` back to weight and bias gradients, accumulating
    /// `scale ×` the result.
    fn backward(
        &self,
        xbar: &[f64],
        trace: &StreamTrace,
        g_out: &[f64],
        scale: f64,
        grad: &mut ParamGrad,
    ) -> Result<()> {
        let g_pre = self.sketch.project_transpose(g_out)?;
        let g_lin = pn::sigme_grad(&trace.lin, &g_pre, &self.pn)?;
        let b = xbar.len();
        for (i, g) in g_lin.iter().enumerate() {
            let gs = scale * g;
            grad.bias[i] += gs;
            for (w, x) in grad.weights[i * b..(i + 1) * b].iter_mut().zip(xbar) {
                *w += gs * x;
            }
        }
        Ok(())
    }
}

/// Returns `(pre, out)` for one video.
pub fn stream_forward(unit: &StreamUnit, x: &BackboneFeatures) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = unit.forward_pooled(&x.mean_pool())?;
    Ok((t.pre, t.out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredNet {
    /// `classes × d'`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PredNet {
    pub fn init(classes: usize, d_prime: usize, seed: u64) -> Self {
        let mut r = rng::seeded(rng::derive_seed(seed, "init/prednet"));
        let scale = 1.0 / (d_prime as f64).sqrt();
        Self {
            weights: (0..classes * d_prime)
                .map(|_| scale * rng::normal(&mut r))
                .collect(),
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.len() / self.bias.len()
    }

    pub fn logits(&self, tot: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        check_len("prednet input", d, tot.len())?;
        Ok(self
            .weights
            .chunks_exact(d)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(tot).map(|(w, x)| w * x).sum::<f64>())
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLoss {
    #[default]
    Softmax,
    /// Independent per-class sigmoid cross-entropy (multi-label setting).
    SigmoidBce,
}

impl ClassLoss {
    /// Loss and `∂ℓ/∂logits` for a single label.
    fn eval(self, logits: &[f64], label: usize) -> (f64, Vec<f64>) {
        match self {
            ClassLoss::Softmax => {
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                let loss = total.ln() + max - logits[label];
                let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
                grad[label] -= 1.0;
                (loss, grad)
            }
            ClassLoss::SigmoidBce => {
                let mut loss = 0.0;
                let mut grad = Vec::with_capacity(logits.len());
                for (k, &z) in logits.iter().enumerate() {
                    let y = if k == label { 1.0 } else { 0.0 };
                    // log(1 + e^z) - y z, computed stably
                    loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
                    grad.push(1.0 / (1.0 + (-z).exp()) - y);
                }
                (loss, grad)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub backbone_dim: usize,
    pub pre_sketch_dim: usize,
    pub sketch_dim: usize,
    /// Enable flag per hallucination stream.
    pub streams: BTreeMap<String, bool>,
    pub val_fraction: f64,
    pub pn: PnConfig,
    pub class_loss: ClassLoss,
    pub rho: f64,
    /// Defaults to `1/(|H*|+1)`.
    pub haf_weight: Option<f64>,
    /// Skips the ridge accuracy estimate when given.
    pub raw_weights: Option<BTreeMap<String, f64>>,
    pub search: SearchSettings,
    pub ridge_lambda: f64,
    /// Training videos used for ridge fits.
    pub selection_subset: usize,
    /// 1 is bit-deterministic; more shards each batch across workers.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            backbone_dim: 128,
            pre_sketch_dim: 128,
            sketch_dim: 64,
            streams: HALLUCINATION_STREAMS
                .iter()
                .map(|s| (s.to_string(), true))
                .collect(),
            val_fraction: 0.25,
            pn: PnConfig::default(),
            class_loss: ClassLoss::Softmax,
            rho: 0.1,
            haf_weight: None,
            raw_weights: None,
            search: SearchSettings::default(),
            ridge_lambda: 1.0,
            selection_subset: 256,
            threads: 1,
        }
    }
}

impl TrainConfig {
    /// Enabled streams in canonical order.
    pub fn enabled_streams(&self) -> Vec<String> {
        HALLUCINATION_STREAMS
            .iter()
            .filter(|s| self.streams.get(**s).copied().unwrap_or(false))
            .map(|s| s.to_string())
            .collect()
    }

    pub fn with_streams(mut self, enabled: &[&str]) -> Self {
        for (k, v) in self.streams.iter_mut() {
            *v = enabled.contains(&k.as_str());
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Error::Config {
            field: format!("train.{field}"),
            msg,
        };
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(bad("alpha", format!("{} must be non-negative", self.alpha)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(bad(
                "learning_rate",
                format!("{} must be positive", self.learning_rate),
            ));
        }
        for (f, v) in [
            ("batch_size", self.batch_size),
            ("backbone_dim", self.backbone_dim),
            ("pre_sketch_dim", self.pre_sketch_dim),
            ("sketch_dim", self.sketch_dim),
            ("threads", self.threads),
        ] {
            if v == 0 {
                return Err(bad(f, "must be positive".into()));
            }
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(bad(
                "val_fraction",
                format!("{} not in (0, 1)", self.val_fraction),
            ));
        }
        if !(self.ridge_lambda > 0.0) {
            return Err(bad("ridge_lambda", "must be positive".into()));
        }
        if self.selection_subset == 0 {
            return Err(bad("selection_subset", "must be positive".into()));
        }
        for k in self.streams.keys() {
            if !HALLUCINATION_STREAMS.contains(&k.as_str()) {
                return Err(bad(&format!("streams.{k}"), "unknown stream".into()));
            }
        }
        if self.pn.variant != PnVariant::Sigme {
            return Err(bad("pn.variant", "streams use sigme".into()));
        }
        self.pn.validate().map_err(|e| bad("pn", e.to_string()))?;
        if !(self.search.lo < self.search.hi) || self.search.lo < 0.0 {
            return Err(bad("search", "need 0 <= lo < hi".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    /// Enabled hallucination streams in canonical order.
    pub units: Vec<StreamUnit>,
    pub haf: StreamUnit,
    pub prednet: PredNet,
    pub spec: FusionSpec,
    pub alpha: f64,
    pub class_loss: ClassLoss,
}

/// Full forward pass of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub xbar: Vec<f64>,
    pub streams: Vec<StreamTrace>,
    pub haf: StreamTrace,
    pub tot: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    /// PredNet logits.
    pub scores: Vec<f64>,
    pub hallucinated: BTreeMap<String, Vec<f64>>,
}

impl Inference {
    pub fn predicted(&self) -> usize {
        argmax(&self.scores)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub loss: f64,
    pub per_stream_mse: BTreeMap<String, f64>,
    pub class_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamGrad {
    fn zeros(weights: usize, bias: usize) -> Self {
        Self {
            weights: vec![0.0; weights],
            bias: vec![0.0; bias],
        }
    }

    fn add_scaled(&mut self, other: &ParamGrad, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += scale * b;
        }
    }
}

/// Gradients of the objective, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub units: Vec<ParamGrad>,
    pub haf: ParamGrad,
    pub prednet: ParamGrad,
}

impl Gradients {
    fn zeros(model: &Model) -> Self {
        let z = |u: &StreamUnit| ParamGrad::zeros(u.weights.len(), u.bias.len());
        Self {
            units: model.units.iter().map(z).collect(),
            haf: z(&model.haf),
            prednet: ParamGrad::zeros(model.prednet.weights.len(), model.prednet.bias.len()),
        }
    }

    fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.units.iter_mut().zip(&other.units) {
            a.add_scaled(b, scale);
        }
        self.haf.add_scaled(&other.haf, scale);
        self.prednet.add_scaled(&other.prednet, scale);
    }
}

impl Model {
    /// Fresh model for `spec`. Every stream named in the spec's groups gets
    /// a unit.
    pub fn init(cfg: &TrainConfig, spec: FusionSpec, classes: usize) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        if classes < 2 {
            return Err(Error::Argument("need at least two classes".into()));
        }
        let ids: Vec<String> = spec.leaves().into_iter().filter(|s| s != HAF).collect();
        let expected = cfg.enabled_streams();
        if ids.iter().any(|s| !expected.contains(s)) || ids.len() != expected.len() {
            return Err(Error::Config {
                field: "train.streams".into(),
                msg: "fusion groups do not match enabled streams".into(),
            });
        }
        let unit = |id: &str| {
            StreamUnit::init(
                id,
                cfg.backbone_dim,
                cfg.pre_sketch_dim,
                cfg.sketch_dim,
                cfg.pn,
                cfg.seed,
            )
        };
        Ok(Self {
            units: expected.iter().map(|id| unit(id)).collect::<Result<_>>()?,
            haf: unit(HAF)?,
            prednet: PredNet::init(classes, cfg.sketch_dim, cfg.seed),
            spec,
            alpha: cfg.alpha,
            class_loss: cfg.class_loss,
        })
    }

    pub fn classes(&self) -> usize {
        self.prednet.classes()
    }

    pub fn backbone_dim(&self) -> usize {
        self.haf.input_dim()
    }

    pub fn stream_ids(&self) -> Vec<String> {
        self.units.iter().map(|u| u.stream_id.clone()).collect()
    }

    fn fused(
        &self,
        streams: &[StreamTrace],
        haf: &StreamTrace,
        spec: &FusionSpec,
    ) -> Result<Vec<f64>> {
        let mut map: BTreeMap<String, Vec<f64>> = self
            .units
            .iter()
            .zip(streams)
            .map(|(u, t)| (u.stream_id.clone(), t.out.clone()))
            .collect();
        map.insert(HAF.to_string(), haf.out.clone());
        fusion::fuse(&map, spec)
    }

    pub fn forward(&self, x: &BackboneFeatures) -> Result<Forward> {
        check_len("backbone dim", self.backbone_dim(), x.dim())?;
        let xbar = x.mean_pool();
        let streams = self
            .units
            .iter()
            .map(|u| u.forward_pooled(&xbar))
            .collect::<Result<Vec<_>>>()?;
        let haf = self.haf.forward_pooled(&xbar)?;
        let tot = self.fused(&streams, &haf, &self.spec)?;
        let logits = self.prednet.logits(&tot)?;
        Ok(Forward {
            xbar,
            streams,
            haf,
            tot,
            logits,
        })
    }

    fn apply(&mut self, grads: &Gradients, lr: f64) {
        let step = |p: &mut [f64], g: &[f64]| {
            for (a, b) in p.iter_mut().zip(g) {
                *a -= lr * b;
            }
        };
        for (u, g) in self.units.iter_mut().zip(&grads.units) {
            step(&mut u.weights, &g.weights);
            step(&mut u.bias, &g.bias);
        }
        step(&mut self.haf.weights, &grads.haf.weights);
        step(&mut self.haf.bias, &grads.haf.bias);
        step(&mut self.prednet.weights, &grads.prednet.weights);
        step(&mut self.prednet.bias, &grads.prednet.bias);
    }
}

/// Test-time pass: only backbone features go in.
pub fn infer(model: &Model, video_features: &BackboneFeatures) -> Result<Inference> {
    let f = model.forward(video_features)?;
    Ok(Inference {
        scores: f.logits,
        hallucinated: model
            .units
            .iter()
            .zip(f.streams)
            .map(|(u, t)| (u.stream_id.clone(), t.out))
            .collect(),
    })
}

fn target<'a>(video: &'a SyntheticVideo, unit: &StreamUnit) -> Result<&'a [f64]> {
    let t = video
        .ground_truth
        .get(&unit.stream_id)
        .ok_or_else(|| Error::Missing(format!("target for stream `{}`", unit.stream_id)))?;
    check_len("stream target", unit.output_dim(), t.len())?;
    Ok(t)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn combine(model: &Model, mse_sum: &[f64], class_sum: f64, n: usize) -> ObjectiveValue {
    let n = n as f64;
    let per_stream_mse: BTreeMap<String, f64> = model
        .units
        .iter()
        .zip(mse_sum)
        .map(|(u, s)| (u.stream_id.clone(), s / n))
        .collect();
    let class_loss = class_sum / n;
    let mse_term = if model.units.is_empty() {
        0.0
    } else {
        model.alpha / model.units.len() as f64 * per_stream_mse.values().sum::<f64>()
    };
    ObjectiveValue {
        loss: mse_term + class_loss,
        per_stream_mse,
        class_loss,
    }
}

/// Objective value on a batch.
pub fn objective(batch: &[SyntheticVideo], model: &Model) -> Result<ObjectiveValue> {
    if batch.is_empty() {
        return Err(Error::Empty("objective needs a non-empty batch".into()));
    }
    let mut mse = vec![0.0; model.units.len()];
    let mut class = 0.0;
    for v in batch {
        let f = model.forward(&v.features)?;
        for (k, (u, t)) in model.units.iter().zip(&f.streams).enumerate() {
            mse[k] += sq_dist(&t.out, target(v, u)?);
        }
        check_label(model, v.label)?;
        class += model.class_loss.eval(&f.logits, v.label).0;
    }
    Ok(combine(model, &mse, class, batch.len()))
}

fn check_label(model: &Model, label: usize) -> Result<()> {
    if label >= model.classes() {
        return Err(Error::InputRange(format!(
            "label {label} outside {} classes",
            model.classes()
        )));
    }
    Ok(())
}

/// Objective value and its gradient with respect to every trainable block.
pub fn objective_with_gradients(
    batch: &[SyntheticVideo],
    model: &Model,
) -> Result<(ObjectiveValue, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("objective needs a non-empty batch".into()));
    }
    let coeffs = model.spec.coefficients()?;
    let unit_coeff: Vec<f64> = model
        .units
        .iter()
        .map(|u| coeffs.get(&u.stream_id).copied().unwrap_or(0.0))
        .collect();
    let haf_coeff = coeffs[HAF];
    let n = batch.len() as f64;
    let mse_scale = if model.units.is_empty() {
        0.0
    } else {
        model.alpha / model.units.len() as f64
    };
    let d_in = model.prednet.input_dim();

    let mut grads = Gradients::zeros(model);
    let mut mse = vec![0.0; model.units.len()];
    let mut class = 0.0;
    for v in batch {
        check_label(model, v.label)?;
        let f = model.forward(&v.features)?;
        let (l, g_logits) = model.class_loss.eval(&f.logits, v.label);
        class += l;

        let mut g_tot = vec![0.0; d_in];
        for (k, g) in g_logits.iter().enumerate() {
            let gs = g / n;
            grads.prednet.bias[k] += gs;
            let row = &model.prednet.weights[k * d_in..(k + 1) * d_in];
            for (j, (w, x)) in row.iter().zip(&f.tot).enumerate() {
                grads.prednet.weights[k * d_in + j] += gs * x;
                g_tot[j] += gs * w;
            }
        }

        for (k, u) in model.units.iter().enumerate() {
            let t = &f.streams[k];
            let tgt = target(v, u)?;
            mse[k] += sq_dist(&t.out, tgt);
            let g_out: Vec<f64> = t
                .out
                .iter()
                .zip(tgt)
                .zip(&g_tot)
                .map(|((o, y), gt)| unit_coeff[k] * gt + mse_scale * 2.0 * (o - y) / n)
                .collect();
            u.backward(&f.xbar, t, &g_out, 1.0, &mut grads.units[k])?;
        }
        let g_haf: Vec<f64> = g_tot.iter().map(|g| haf_coeff * g).collect();
        model
            .haf
            .backward(&f.xbar, &f.haf, &g_haf, 1.0, &mut grads.haf)?;
    }
    Ok((combine(model, &mse, class, batch.len()), grads))
}

/// Deterministic split into training and validation indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

pub fn split(n: usize, val_fraction: f64, seed: u64) -> Result<Split> {
    if n < 2 {
        return Err(Error::Empty("need at least two videos to split".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(rng::derive_seed(seed, "split")));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    Ok(Split { train: idx, val })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub mse: BTreeMap<String, f64>,
    pub val_acc: f64,
    pub beta: crate::fusion::Betas,
    pub beta_lo: f64,
    pub beta_hi: f64,
}

pub fn metrics_csv(streams: &[String], rows: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,loss");
    for s in streams {
        out.push_str(&format!(",mse_{s}"));
    }
    out.push_str(",val_acc,beta_lo,beta_hi\n");
    for r in rows {
        out.push_str(&format!("{},{}", r.epoch, r.loss));
        for s in streams {
            out.push_str(&format!(",{}", r.mse[s]));
        }
        out.push_str(&format!(",{},{},{}\n", r.val_acc, r.beta_lo, r.beta_hi));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
    pub split: Split,
}

/// Number of classes implied by the labels.
pub fn class_count(dataset: &[SyntheticVideo]) -> usize {
    dataset.iter().map(|v| v.label + 1).max().unwrap_or(0)
}

fn refs(vs: &[Vec<f64>]) -> Vec<&[f64]> {
    vs.iter().map(|v| v.as_slice()).collect()
}

/// Ridge validation accuracy of each enabled stream's ground truth, plus the
/// `det` and `sal` composites pooled at β = 0.
pub fn stream_accuracies(
    dataset: &[SyntheticVideo],
    split: &Split,
    base: &FusionSpec,
    classes: usize,
    lambda: f64,
    subset: usize,
) -> Result<BTreeMap<String, f64>> {
    let train: Vec<&SyntheticVideo> = split
        .train
        .iter()
        .take(subset)
        .map(|&i| &dataset[i])
        .collect();
    let val: Vec<&SyntheticVideo> = split.val.iter().map(|&i| &dataset[i]).collect();
    let ty: Vec<usize> = train.iter().map(|v| v.label).collect();
    let vy: Vec<usize> = val.iter().map(|v| v.label).collect();
    let mut spec = base.clone();
    spec.beta = fusion::Betas::shared(0.0);
    let score = |feat: &dyn Fn(&SyntheticVideo) -> Result<Vec<f64>>| -> Result<f64> {
        let tx = train.iter().map(|v| feat(v)).collect::<Result<Vec<_>>>()?;
        let vx = val.iter().map(|v| feat(v)).collect::<Result<Vec<_>>>()?;
        crate::classifier::holdout_accuracy(&refs(&tx), &ty, &refs(&vx), &vy, classes, lambda)
    };
    let mut out = BTreeMap::new();
    for id in spec.leaves().into_iter().filter(|s| s != HAF) {
        let acc = score(&|v: &SyntheticVideo| {
            v.ground_truth
                .get(&id)
                .cloned()
                .ok_or_else(|| Error::Missing(format!("target for stream `{id}`")))
        })?;
        out.insert(id, acc);
    }
    for (name, group) in [(fusion::DET, Group::Det), (fusion::SAL, Group::Sal)] {
        if spec.members(group).is_empty() {
            continue;
        }
        let acc = score(&|v: &SyntheticVideo| fusion::pooled(&v.ground_truth, &spec, group))?;
        out.insert(name.to_string(), acc);
    }
    Ok(out)
}

/// Unit-weight spec with every stream placed in its group.
pub fn default_spec(streams: &[String]) -> FusionSpec {
    let pick = |g: Group| -> Vec<String> {
        streams
            .iter()
            .filter(|s| stream_group(s) == g)
            .cloned()
            .collect()
    };
    FusionSpec::new(pick(Group::Det), pick(Group::Sal), pick(Group::Top))
}

/// Fusion spec for the enabled streams, with raw weights either given or
/// estimated on the ground truth.
pub fn build_spec(
    dataset: &[SyntheticVideo],
    split: &Split,
    cfg: &TrainConfig,
    classes: usize,
) -> Result<FusionSpec> {
    let mut spec = default_spec(&cfg.enabled_streams());
    spec.rho = cfg.rho;
    spec.search = cfg.search;
    if let Some(w) = cfg.haf_weight {
        spec.haf_weight = w;
    }
    let raw = match &cfg.raw_weights {
        Some(w) => w.clone(),
        None => stream_accuracies(
            dataset,
            split,
            &spec,
            classes,
            cfg.ridge_lambda,
            cfg.selection_subset,
        )?,
    };
    for (k, v) in spec.raw_weights.iter_mut() {
        *v = *raw
            .get(k)
            .ok_or_else(|| Error::Missing(format!("raw weight for stream `{k}`")))?;
    }
    spec.validate()?;
    Ok(spec)
}

/// Hallucinated stream outputs of a set of videos under the current model.
fn hallucinate(
    model: &Model,
    videos: &[&SyntheticVideo],
) -> Result<Vec<BTreeMap<String, Vec<f64>>>> {
    videos
        .iter()
        .map(|v| {
            let f = model.forward(&v.features)?;
            let mut m: BTreeMap<String, Vec<f64>> = model
                .units
                .iter()
                .zip(f.streams)
                .map(|(u, t)| (u.stream_id.clone(), t.out))
                .collect();
            m.insert(HAF.to_string(), f.haf.out);
            Ok(m)
        })
        .collect()
}

/// Scores candidate β values: ridge on fused hallucinated train vectors,
/// accuracy on validation.
pub struct SelectionSet {
    train: Vec<BTreeMap<String, Vec<f64>>>,
    train_y: Vec<usize>,
    val: Vec<BTreeMap<String, Vec<f64>>>,
    val_y: Vec<usize>,
    classes: usize,
    lambda: f64,
}

impl SelectionSet {
    pub fn new(
        model: &Model,
        dataset: &[SyntheticVideo],
        split: &Split,
        subset: usize,
        lambda: f64,
    ) -> Result<Self> {
        let train: Vec<&SyntheticVideo> = split
            .train
            .iter()
            .take(subset)
            .map(|&i| &dataset[i])
            .collect();
        let val: Vec<&SyntheticVideo> = split.val.iter().map(|&i| &dataset[i]).collect();
        Ok(Self {
            train: hallucinate(model, &train)?,
            train_y: train.iter().map(|v| v.label).collect(),
            val: hallucinate(model, &val)?,
            val_y: val.iter().map(|v| v.label).collect(),
            classes: model.classes(),
            lambda,
        })
    }

    pub fn score(&self, spec: &FusionSpec) -> Result<f64> {
        let fuse = |set: &[BTreeMap<String, Vec<f64>>]| {
            set.iter()
                .map(|m| fusion::fuse(m, spec))
                .collect::<Result<Vec<_>>>()
        };
        let tx = fuse(&self.train)?;
        let vx = fuse(&self.val)?;
        crate::classifier::holdout_accuracy(
            &refs(&tx),
            &self.train_y,
            &refs(&vx),
            &self.val_y,
            self.classes,
            self.lambda,
        )
    }
}

/// PredNet accuracy on the given videos.
pub fn accuracy(model: &Model, videos: &[&BackboneFeatures], labels: &[usize]) -> Result<f64> {
    check_len("labels", videos.len(), labels.len())?;
    if videos.is_empty() {
        return Err(Error::Empty("no videos to score".into()));
    }
    let mut hits = 0;
    for (x, &y) in videos.iter().zip(labels) {
        if infer(model, x)?.predicted() == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / videos.len() as f64)
}

fn batch_gradients(
    batch: &[SyntheticVideo],
    model: &Model,
    threads: usize,
) -> Result<(ObjectiveValue, Gradients)> {
    if threads <= 1 || batch.len() < 2 {
        return objective_with_gradients(batch, model);
    }
    let chunk = batch.len().div_ceil(threads);
    let parts = batch
        .par_chunks(chunk)
        .map(|c| objective_with_gradients(c, model).map(|r| (c.len(), r)))
        .collect::<Result<Vec<_>>>()?;
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros(model);
    let mut loss = 0.0;
    for (len, (v, g)) in &parts {
        grads.add_scaled(g, *len as f64 / n);
        loss += v.loss * *len as f64 / n;
    }
    Ok((
        ObjectiveValue {
            loss,
            per_stream_mse: BTreeMap::new(),
            class_loss: f64::NAN,
        },
        grads,
    ))
}

fn divergence(epoch: usize, what: &str, v: f64) -> Error {
    Error::Divergence {
        epoch,
        msg: format!("{what} became {v}"),
    }
}

/// Trains from scratch. The first 10 epochs run at β = 0; afterwards every
/// epoch takes one golden-section step on the validation selection score.
pub fn train(dataset: &[SyntheticVideo], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training set has no videos".into()));
    }
    for v in dataset {
        check_len("backbone dim", cfg.backbone_dim, v.features.dim())?;
    }
    let classes = class_count(dataset);
    let split = split(dataset.len(), cfg.val_fraction, cfg.seed)?;
    let spec = build_spec(dataset, &split, cfg, classes)?;
    let mut model = Model::init(cfg, spec, classes)?;
    for v in dataset {
        for u in &model.units {
            target(v, u)?;
        }
    }

    let train_videos: Vec<SyntheticVideo> =
        split.train.iter().map(|&i| dataset[i].clone()).collect();
    let val_x: Vec<&BackboneFeatures> = split.val.iter().map(|&i| &dataset[i].features).collect();
    let val_y: Vec<usize> = split.val.iter().map(|&i| dataset[i].label).collect();
    let groups = [Group::Det, Group::Sal, Group::Top];
    let mut shared = BetaSearch::new(cfg.search.lo, cfg.search.hi)?;
    let mut per_group = [shared; 3];
    let mut metrics = Vec::with_capacity(cfg.epochs);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;

    for epoch in 1..=cfg.epochs {
        let mut order = train_videos.clone();
        order.shuffle(&mut rng::seeded(rng::derive_seed(
            cfg.seed,
            &format!("epoch/{epoch}"),
        )));
        for batch in order.chunks(cfg.batch_size) {
            let (value, grads) = pool.install(|| batch_gradients(batch, &model, cfg.threads))?;
            if !value.loss.is_finite() {
                return Err(divergence(epoch, "batch loss", value.loss));
            }
            model.apply(&grads, cfg.learning_rate);
        }

        let (lo, hi) = match fusion::beta_schedule(epoch) {
            SearchPolicy::Fixed(b) => {
                model.spec.beta = fusion::Betas::shared(b);
                (shared.bracket.lo, shared.bracket.hi())
            }
            SearchPolicy::GoldenStep => {
                let sel = SelectionSet::new(
                    &model,
                    dataset,
                    &split,
                    cfg.selection_subset,
                    cfg.ridge_lambda,
                )?;
                let mut trial = model.spec.clone();
                let mut failure = None;
                let mut eval = |trial: &FusionSpec| match sel.score(trial) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                };
                let stepped = if cfg.search.per_group {
                    let mut r = Ok((0.0, 0.0));
                    for (k, g) in groups.iter().enumerate() {
                        if *g != Group::Top && model.spec.members(*g).is_empty() {
                            continue;
                        }
                        r = per_group[k].step(|b| {
                            trial.beta.set(*g, b);
                            eval(&trial)
                        });
                        if r.is_err() {
                            break;
                        }
                        trial.beta.set(*g, per_group[k].beta());
                    }
                    r
                } else {
                    let r = shared.step(|b| {
                        trial.beta = fusion::Betas::shared(b);
                        eval(&trial)
                    });
                    trial.beta = fusion::Betas::shared(shared.beta());
                    r
                };
                if let Some(e) = failure {
                    return Err(e);
                }
                stepped?;
                model.spec.beta = trial.beta;
                let b = if cfg.search.per_group {
                    per_group[2].bracket
                } else {
                    shared.bracket
                };
                (b.lo, b.hi())
            }
        };

        let value = objective(&train_videos, &model)?;
        if !value.loss.is_finite() {
            return Err(divergence(epoch, "training loss", value.loss));
        }
        metrics.push(EpochMetrics {
            epoch,
            loss: value.loss,
            mse: value.per_stream_mse,
            val_acc: accuracy(&model, &val_x, &val_y)?,
            beta: model.spec.beta,
            beta_lo: lo,
            beta_hi: hi,
        });
    }
    Ok(TrainOutcome {
        model,
        metrics,
        split,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    alpha: f64,
    class_loss: ClassLoss,
    classes: usize,
    backbone_dim: usize,
    pre_sketch_dim: usize,
    sketch_dim: usize,
    pn: PnConfig,
    streams: Vec<String>,
    spec: FusionSpec,
}

fn write_f32<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_f32<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 4 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Format {
        format: "HAL1",
        msg: msg.into(),
    }
}

impl Model {
    /// `HAL1` checkpoint: magic, version, JSON header, then per stream (HAF
    /// last) f32 weights, f32 bias and the CSK1 sketch, then PredNet.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = CheckpointHeader {
            alpha: self.alpha,
            class_loss: self.class_loss,
            classes: self.classes(),
            backbone_dim: self.backbone_dim(),
            pre_sketch_dim: self.haf.pre_dim(),
            sketch_dim: self.haf.output_dim(),
            pn: self.haf.pn,
            streams: self.stream_ids(),
            spec: self.spec.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| ckpt_err(e.to_string()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for u in self.units.iter().chain(std::iter::once(&self.haf)) {
            write_f32(&mut w, &u.weights)?;
            write_f32(&mut w, &u.bias)?;
            u.sketch.write_to(&mut w)?;
        }
        write_f32(&mut w, &self.prednet.weights)?;
        write_f32(&mut w, &self.prednet.bias)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(ckpt_err("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(ckpt_err(format!("unsupported version {version}")));
        }
        let len = read_u32(&mut r)? as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let h: CheckpointHeader =
            serde_json::from_slice(&json).map_err(|e| ckpt_err(e.to_string()))?;
        let (b, m) = (h.backbone_dim, h.pre_sketch_dim);
        let mut read_unit = |id: &str| -> Result<StreamUnit> {
            let weights = read_f32(&mut r, m * b)?;
            let bias = read_f32(&mut r, m)?;
            let sketch = CountSketch::read_from(&mut r)?;
            if sketch.output_dim() != h.sketch_dim {
                return Err(ckpt_err("sketch dimension mismatch"));
            }
            StreamUnit::from_parts(id, m, weights, bias, h.pn, sketch)
        };
        let units = h
            .streams
            .iter()
            .map(|id| read_unit(id))
            .collect::<Result<Vec<_>>>()?;
        let haf = read_unit(HAF)?;
        let prednet = PredNet {
            weights: read_f32(&mut r, h.classes * h.sketch_dim)?,
            bias: read_f32(&mut r, h.classes)?,
        };
        h.spec.validate()?;
        Ok(Self {
            units,
            haf,
            prednet,
            spec: h.spec,
            alpha: h.alpha,
            class_loss: h.class_loss,
        })
    }
}
