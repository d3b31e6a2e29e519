//! Seeded synthetic video corpus.
//!
//! Every video draws a latent `z ~ N(0, I)`, rejection-sampled so that a
//! fixed random teacher `argmax V tanh(G z + c)` assigns its class. The
//! backbone block is a noisy random linear image of `z`. `det1` detections
//! and `sal1` saliency maps are driven by the teacher features and the class;
//! the remaining streams see an independent latent, so their targets carry
//! no label information. Targets are real ODF/SDF descriptors (or Gaussian
//! stand-ins for FV/BoW/OFF), power-normalised with SigmE and count-sketched
//! with the per-stream ground-truth sketch.

use std::collections::BTreeMap;

use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Group;
use crate::halluc::{
    stream_group, BackboneFeatures, SyntheticVideo, HALLUCINATION_STREAMS, TEMPORAL_LEN,
};
use crate::odf::{self, DetectionRecord, OdfConfig};
use crate::pn::{self, PnConfig};
use crate::rng;
use crate::sdf::{self, SaliencyFrame, SdfConfig};
use crate::sketch::CountSketch;

const TEACHER_WIDTH: usize = 8;
const MAX_REJECTIONS: usize = 100_000;

/// Streams whose targets carry the class signal.
pub const INFORMATIVE_STREAMS: [&str; 2] = ["det1", "sal1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub videos: usize,
    pub classes: usize,
    pub seed: u64,
    pub backbone_dim: usize,
    pub sketch_dim: usize,
    pub latent_dim: usize,
    /// Scale of the class prototypes in latent space.
    pub class_separation: f64,
    /// Within-class latent standard deviation.
    pub within_class: f64,
    /// Per-video backbone noise, not reduced by temporal pooling.
    pub static_noise: f64,
    /// Per-column backbone noise.
    pub temporal_noise: f64,
    pub min_detections: usize,
    pub max_detections: usize,
    /// Video length τ seen by the detector.
    pub video_frames: usize,
    /// Saliency frames per video.
    pub saliency_frames: usize,
    pub saliency_size: usize,
    /// Length of the FV/BoW/OFF stand-in descriptors.
    pub generic_dim: usize,
    pub odf: OdfConfig,
    pub sdf: SdfConfig,
    /// PN applied to descriptors before sketching.
    pub pn: PnConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            videos: 512,
            classes: 8,
            seed: 0,
            backbone_dim: 128,
            sketch_dim: 64,
            latent_dim: 8,
            class_separation: 1.0,
            within_class: 0.5,
            static_noise: 0.3,
            temporal_noise: 1.0,
            min_detections: 8,
            max_detections: 24,
            video_frames: 16,
            saliency_frames: 6,
            saliency_size: 24,
            generic_dim: 256,
            odf: OdfConfig::default(),
            sdf: SdfConfig::default(),
            pn: PnConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Error::Config {
            field: format!("synth.{field}"),
            msg: msg.into(),
        };
        if self.videos < 2 {
            return Err(bad("videos", "need at least two videos"));
        }
        if self.classes < 2 {
            return Err(bad("classes", "need at least two classes"));
        }
        for (f, v) in [
            ("backbone_dim", self.backbone_dim),
            ("sketch_dim", self.sketch_dim),
            ("latent_dim", self.latent_dim),
            ("video_frames", self.video_frames),
            ("saliency_frames", self.saliency_frames),
            ("generic_dim", self.generic_dim),
            ("min_detections", self.min_detections),
        ] {
            if v == 0 {
                return Err(bad(f, "must be positive"));
            }
        }
        if self.latent_dim < 7 {
            return Err(bad(
                "latent_dim",
                "at least 7 latent coordinates drive the records",
            ));
        }
        if self.saliency_size < 2 {
            return Err(bad("saliency_size", "frames need at least 2x2 pixels"));
        }
        if self.max_detections < self.min_detections {
            return Err(bad("max_detections", "below min_detections"));
        }
        for (f, v) in [
            ("class_separation", self.class_separation),
            ("within_class", self.within_class),
            ("static_noise", self.static_noise),
            ("temporal_noise", self.temporal_noise),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(bad(f, "must be finite and non-negative"));
            }
        }
        self.pn.validate()
    }

    /// Flattened descriptor length fed to a stream's ground-truth sketch.
    pub fn descriptor_len(&self, stream: &str) -> usize {
        match stream_group(stream) {
            Group::Det => self.odf.descriptor_len(),
            Group::Sal => self.sdf.descriptor_len(),
            Group::Top => self.generic_dim,
        }
    }
}

/// Ground-truth sketch `P_i` for a stream.
pub fn ground_truth_sketch(cfg: &SynthConfig, stream: &str) -> Result<CountSketch> {
    CountSketch::new(
        cfg.descriptor_len(stream),
        cfg.sketch_dim,
        rng::derive_seed(cfg.seed, &format!("gt/{stream}")),
    )
}

/// Fixed random quantities shared by all videos.
struct World {
    /// Teacher hidden layer `h(z) = tanh(G z + β)`, `H × k`.
    teacher: Vec<f64>,
    teacher_bias: Vec<f64>,
    /// Class scores `V h`, `C × H`.
    readout: Vec<f64>,
    /// `b × k`, row-major.
    mixing: Vec<f64>,
    /// Preferred joint labels per class.
    class_objects: Vec<[u32; 3]>,
    /// `1001 × k` ImageNet logit map.
    imagenet_map: Vec<f64>,
}

impl World {
    fn new(cfg: &SynthConfig) -> Self {
        let k = cfg.latent_dim;
        let mut r = rng::seeded(rng::derive_seed(cfg.seed, "world"));
        let scale = 1.0 / (k as f64).sqrt();
        let teacher = rng::normal_vec(&mut r, TEACHER_WIDTH * k)
            .into_iter()
            .map(|v| v * scale * cfg.class_separation)
            .collect();
        let teacher_bias = rng::normal_vec(&mut r, TEACHER_WIDTH)
            .into_iter()
            .map(|v| 0.5 * v)
            .collect();
        let readout = rng::normal_vec(&mut r, cfg.classes * TEACHER_WIDTH);
        let mixing = rng::normal_vec(&mut r, cfg.backbone_dim * k)
            .into_iter()
            .map(|v| v * scale)
            .collect();
        let labels = cfg.odf.class_space_size as u32;
        let class_objects = (0..cfg.classes)
            .map(|_| {
                [
                    1 + rng::below(&mut r, labels),
                    1 + rng::below(&mut r, labels),
                    1 + rng::below(&mut r, labels),
                ]
            })
            .collect();
        let imagenet_map = rng::normal_vec(&mut r, cfg.odf.imagenet_size * TEACHER_WIDTH)
            .into_iter()
            .map(|v| 4.0 * v / (TEACHER_WIDTH as f64).sqrt())
            .collect();
        Self {
            teacher,
            teacher_bias,
            readout,
            mixing,
            class_objects,
            imagenet_map,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl World {
    fn hidden(&self, z: &[f64]) -> Vec<f64> {
        self.teacher
            .chunks_exact(z.len())
            .zip(&self.teacher_bias)
            .map(|(row, b)| (b + row.iter().zip(z).map(|(g, x)| g * x).sum::<f64>()).tanh())
            .collect()
    }

    fn class_of(&self, h: &[f64]) -> usize {
        let scores: Vec<f64> = self
            .readout
            .chunks_exact(h.len())
            .map(|row| row.iter().zip(h).map(|(v, x)| v * x).sum())
            .collect();
        crate::classifier::argmax(&scores)
    }
}

/// Rejection-samples `z ~ N(0, I)` until the teacher assigns `class`.
fn latent(world: &World, class: usize, cfg: &SynthConfig, r: &mut SplitMix64) -> Result<Vec<f64>> {
    for _ in 0..MAX_REJECTIONS {
        let z = rng::normal_vec(r, cfg.latent_dim);
        if world.class_of(&world.hidden(&z)) == class {
            return Ok(z);
        }
    }
    Err(Error::Numeric(format!(
        "class {class} is too rare under the teacher; try another seed"
    )))
}

/// Detections driven by the teacher features `h`. With a class the records
/// are a deterministic function of `(class, h)`; without one, labels, frames
/// and offsets are random.
fn detections(
    world: &World,
    cfg: &SynthConfig,
    h: &[f64],
    class: Option<usize>,
    r: &mut SplitMix64,
) -> Result<Vec<DetectionRecord>> {
    let n = match class {
        Some(_) => (cfg.min_detections + cfg.max_detections) / 2,
        None => {
            let span = (cfg.max_detections - cfg.min_detections + 1) as u32;
            cfg.min_detections + rng::below(r, span) as usize
        }
    };
    let logits: Vec<f64> = world
        .imagenet_map
        .chunks_exact(h.len())
        .map(|row| row.iter().zip(h).map(|(a, b)| a * b).sum())
        .collect();
    let scores = softmax(&logits);
    let labels = cfg.odf.class_space_size as u32;
    (0..n)
        .map(|j| {
            let (label, frame, offset) = match class {
                Some(c) => (
                    world.class_objects[c][j % 3],
                    1 + j * cfg.video_frames / n,
                    0.05 * (j as f64).sin(),
                ),
                None => (
                    1 + rng::below(r, labels),
                    1 + rng::below(r, cfg.video_frames as u32) as usize,
                    0.05 * rng::normal(r),
                ),
            };
            let cx = (0.5 + 0.3 * h[1] + offset).clamp(0.1, 0.9);
            let cy = (0.5 + 0.3 * h[2] - offset).clamp(0.1, 0.9);
            let half = 0.05 + 0.05 * sigmoid(2.0 * h[3]);
            let rec = DetectionRecord {
                frame_index: frame,
                class_label: label,
                confidence: sigmoid(2.0 * h[0] + 4.0 * offset),
                bbox: [cx - half, cy - half, cx + half, cy + half],
                imagenet_scores: scores.clone(),
            };
            rec.validated(&cfg.odf)
        })
        .collect()
}

/// Saliency frames with one anisotropic blob placed and oriented by `h`.
fn saliency(
    cfg: &SynthConfig,
    h: &[f64],
    noisy: bool,
    r: &mut SplitMix64,
) -> Result<Vec<SaliencyFrame>> {
    let size = cfg.saliency_size;
    let cx = 0.5 + 0.25 * h[4];
    let cy = 0.5 + 0.25 * h[5];
    let theta = std::f64::consts::PI * h[6];
    let (c, s) = (theta.cos(), theta.sin());
    (0..cfg.saliency_frames)
        .map(|j| {
            let drift = 0.02 * j as f64;
            let wobble = if noisy { 0.05 * rng::normal(r) } else { 0.0 };
            let (fx, fy) = (cx + drift + wobble, cy);
            SaliencyFrame::from_fn(size, size, |row, col| {
                let x = col as f64 / (size - 1) as f64 - fx;
                let y = row as f64 / (size - 1) as f64 - fy;
                let u = c * x + s * y;
                let v = -s * x + c * y;
                (-(u * u) / 0.02 - (v * v) / 0.004).exp()
            })
        })
        .collect()
}

/// SigmE and the ground-truth sketch.
fn sketched(descriptor: &[f64], pn_cfg: &PnConfig, sketch: &CountSketch) -> Result<Vec<f64>> {
    sketch.project(&pn::sigme(descriptor, pn_cfg)?)
}

/// Generates the corpus. Identical configs give identical videos.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SyntheticVideo>> {
    cfg.validate()?;
    let world = World::new(cfg);
    let sketches: BTreeMap<&str, CountSketch> = HALLUCINATION_STREAMS
        .iter()
        .map(|s| ground_truth_sketch(cfg, s).map(|p| (*s, p)))
        .collect::<Result<_>>()?;
    let b = cfg.backbone_dim;
    let k = cfg.latent_dim;
    (0..cfg.videos)
        .map(|v| {
            let mut r = rng::seeded(rng::derive_seed(cfg.seed, &format!("video/{v}")));
            let label = v % cfg.classes;
            let z = latent(&world, label, cfg, &mut r)?;
            let signal: Vec<f64> = world
                .mixing
                .chunks_exact(k)
                .map(|row| {
                    row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
                        + cfg.static_noise * rng::normal(&mut r)
                })
                .collect();
            let mut data = Vec::with_capacity(b * TEMPORAL_LEN);
            for _ in 0..TEMPORAL_LEN {
                data.extend(
                    signal
                        .iter()
                        .map(|s| s + cfg.temporal_noise * rng::normal(&mut r)),
                );
            }
            let features = BackboneFeatures::new(b, data)?;

            let mut ground_truth = BTreeMap::new();
            for stream in HALLUCINATION_STREAMS {
                let mut sr =
                    rng::seeded(rng::derive_seed(cfg.seed, &format!("video/{v}/{stream}")));
                let informative = INFORMATIVE_STREAMS.contains(&stream);
                let zs = if informative {
                    world.hidden(&z)
                } else {
                    world.hidden(&rng::normal_vec(&mut sr, k))
                };
                let descriptor = match stream_group(stream) {
                    Group::Det => {
                        let class = informative.then_some(label);
                        let recs = detections(&world, cfg, &zs, class, &mut sr)?;
                        odf::odf_descriptor(&recs, cfg.video_frames, &cfg.odf)?.flatten()
                    }
                    Group::Sal => {
                        sdf::sdf_descriptor(&saliency(cfg, &zs, !informative, &mut sr)?, &cfg.sdf)?
                            .flatten()
                    }
                    Group::Top => rng::normal_vec(&mut sr, cfg.generic_dim),
                };
                ground_truth.insert(
                    stream.to_string(),
                    sketched(&descriptor, &cfg.pn, &sketches[stream])?,
                );
            }
            Ok(SyntheticVideo {
                features,
                ground_truth,
                label,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SynthConfig {
        SynthConfig {
            videos: 6,
            classes: 3,
            backbone_dim: 10,
            sketch_dim: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn shapes_and_labels() {
        let cfg = tiny();
        let data = generate(&cfg).unwrap();
        assert_eq!(data.len(), 6);
        for (i, v) in data.iter().enumerate() {
            assert_eq!(v.label, i % 3);
            assert_eq!(v.features.dim(), 10);
            assert_eq!(v.ground_truth.len(), 10);
            assert!(v.ground_truth.values().all(|t| t.len() == 8));
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&tiny()).unwrap(), generate(&tiny()).unwrap());
        let other = SynthConfig { seed: 1, ..tiny() };
        assert_ne!(generate(&tiny()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn targets_are_sketched_descriptors() {
        let cfg = tiny();
        assert_eq!(cfg.descriptor_len("det3"), 8498);
        assert_eq!(cfg.descriptor_len("sal2"), 3892);
        assert_eq!(cfg.descriptor_len("bow"), 256);
        let p = ground_truth_sketch(&cfg, "det1").unwrap();
        assert_eq!((p.input_dim(), p.output_dim()), (8498, 8));
    }

    #[test]
    fn validation() {
        assert!(SynthConfig {
            classes: 1,
            ..tiny()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            latent_dim: 3,
            ..tiny()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            max_detections: 2,
            ..tiny()
        }
        .validate()
        .is_err());
    }
}
