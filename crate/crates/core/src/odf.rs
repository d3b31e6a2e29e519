//! Object detection features.
//!
//! Each bounding box becomes
//! `[one_hot(label); imagenet_scores; φ(conf); φ(v1); φ(v2); φ(v3); φ(v4); φ((t-1)/(τ-1))]`
//! and the boxes of one video from one detector are summarised by the
//! multi-moment descriptor, grouped by frame.
//!
//! Labels live in a joint 171-class space: COCO ids `1..=91` map to
//! themselves and AVA ids `1..=80` map to `92..=171` (see [`JointLabel`]).
//! With the default `Z = 7` map a box vector has 171 + 1001 + 6·7 = 1214
//! entries; without the RBF embedding the six scalars are kept raw (1178).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{feature_map_into, FeatureMapConfig};
use crate::moments::{multi_moment_with, FeatureBag, MomentOptions, MultiMomentDescriptor};

pub const COCO_CLASSES: usize = 91;
pub const AVA_CLASSES: usize = 80;
pub const JOINT_CLASSES: usize = COCO_CLASSES + AVA_CLASSES;
pub const IMAGENET_CLASSES: usize = 1001;
const SCORE_TOLERANCE: f64 = 1e-6;

/// Label in the joint detector space, `1..=171`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointLabel(u32);

impl JointLabel {
    pub fn new(label: u32) -> Result<Self> {
        if (1..=JOINT_CLASSES as u32).contains(&label) {
            Ok(Self(label))
        } else {
            Err(Error::InputRange(format!(
                "class label {label} outside 1..={JOINT_CLASSES}"
            )))
        }
    }

    pub fn coco(id: u32) -> Result<Self> {
        if (1..=COCO_CLASSES as u32).contains(&id) {
            Ok(Self(id))
        } else {
            Err(Error::InputRange(format!(
                "COCO id {id} outside 1..={COCO_CLASSES}"
            )))
        }
    }

    pub fn ava(id: u32) -> Result<Self> {
        if (1..=AVA_CLASSES as u32).contains(&id) {
            Ok(Self(COCO_CLASSES as u32 + id))
        } else {
            Err(Error::InputRange(format!(
                "AVA id {id} outside 1..={AVA_CLASSES}"
            )))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    /// 1-based frame index `t`.
    pub frame_index: usize,
    /// 1-based joint label.
    pub class_label: u32,
    pub confidence: f64,
    /// Normalised `(x1, y1, x2, y2)`, top-left then bottom-right.
    pub bbox: [f64; 4],
    /// ℓ1-normalised ImageNet scores.
    pub imagenet_scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    #[default]
    Strict,
    /// Clamp coordinates and confidence into `[0, 1]`, order box corners and
    /// renormalise scores instead of failing.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdfConfig {
    pub use_rbf_embedding: bool,
    pub scalar_map: FeatureMapConfig,
    pub n_prime: usize,
    pub class_space_size: usize,
    pub imagenet_size: usize,
    #[serde(default)]
    pub validation: Validation,
}

impl Default for OdfConfig {
    fn default() -> Self {
        Self {
            use_rbf_embedding: true,
            scalar_map: FeatureMapConfig::interval(7, 0.5).expect("valid default map"),
            n_prime: 3,
            class_space_size: JOINT_CLASSES,
            imagenet_size: IMAGENET_CLASSES,
            validation: Validation::Strict,
        }
    }
}

impl OdfConfig {
    fn scalar_width(&self) -> usize {
        if self.use_rbf_embedding {
            self.scalar_map.pivot_count
        } else {
            1
        }
    }

    /// Length of one box vector.
    pub fn box_dim(&self) -> usize {
        self.class_space_size + self.imagenet_size + 6 * self.scalar_width()
    }

    pub fn descriptor_len(&self) -> usize {
        self.box_dim() * (4 + self.n_prime)
    }
}

impl DetectionRecord {
    /// Checks the record against `cfg`, returning a (possibly repaired) copy.
    pub fn validated(&self, cfg: &OdfConfig) -> Result<DetectionRecord> {
        let mut rec = self.clone();
        if rec.class_label == 0 || rec.class_label as usize > cfg.class_space_size {
            return Err(Error::InputRange(format!(
                "class label {} outside 1..={}",
                rec.class_label, cfg.class_space_size
            )));
        }
        if rec.imagenet_scores.len() != cfg.imagenet_size {
            return Err(Error::Shape {
                what: "imagenet scores",
                expected: cfg.imagenet_size,
                actual: rec.imagenet_scores.len(),
            });
        }
        let finite = rec.confidence.is_finite()
            && rec.bbox.iter().all(|v| v.is_finite())
            && rec.imagenet_scores.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric(
                "detection record has non-finite fields".into(),
            ));
        }
        match cfg.validation {
            Validation::Strict => {
                if !(0.0..=1.0).contains(&rec.confidence) {
                    return Err(Error::InputRange(format!(
                        "confidence {} outside [0, 1]",
                        rec.confidence
                    )));
                }
                let [x1, y1, x2, y2] = rec.bbox;
                if rec.bbox.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InputRange(format!(
                        "box {:?} has coordinates outside [0, 1]",
                        rec.bbox
                    )));
                }
                if x1 > x2 || y1 > y2 {
                    return Err(Error::InputRange(format!(
                        "box {:?} corners out of order",
                        rec.bbox
                    )));
                }
                if rec.imagenet_scores.iter().any(|v| *v < 0.0) {
                    return Err(Error::InputRange("negative ImageNet score".into()));
                }
                let sum: f64 = rec.imagenet_scores.iter().sum();
                if (sum - 1.0).abs() > SCORE_TOLERANCE {
                    return Err(Error::InputRange(format!(
                        "ImageNet scores sum to {sum}, expected 1"
                    )));
                }
            }
            Validation::Lenient => {
                rec.confidence = rec.confidence.clamp(0.0, 1.0);
                for v in &mut rec.bbox {
                    *v = v.clamp(0.0, 1.0);
                }
                if rec.bbox[0] > rec.bbox[2] {
                    rec.bbox.swap(0, 2);
                }
                if rec.bbox[1] > rec.bbox[3] {
                    rec.bbox.swap(1, 3);
                }
                for v in &mut rec.imagenet_scores {
                    *v = v.max(0.0);
                }
                let sum: f64 = rec.imagenet_scores.iter().sum();
                let n = rec.imagenet_scores.len() as f64;
                for v in &mut rec.imagenet_scores {
                    *v = if sum > 0.0 { *v / sum } else { 1.0 / n };
                }
            }
        }
        Ok(rec)
    }
}

/// Normalised frame position `(t-1)/(τ-1)`, defined as 0 for a one-frame video.
pub fn frame_position(frame_index: usize, tau: usize) -> Result<f64> {
    if tau == 0 || frame_index == 0 || frame_index > tau {
        return Err(Error::InputRange(format!(
            "frame index {frame_index} outside 1..={tau}"
        )));
    }
    Ok(if tau == 1 {
        0.0
    } else {
        (frame_index - 1) as f64 / (tau - 1) as f64
    })
}

pub fn encode_box(rec: &DetectionRecord, tau: usize, cfg: &OdfConfig) -> Result<Vec<f64>> {
    let rec = rec.validated(cfg)?;
    let pos = frame_position(rec.frame_index, tau)?;

    let mut out = vec![0.0; cfg.box_dim()];
    out[rec.class_label as usize - 1] = 1.0;
    let inet_start = cfg.class_space_size;
    out[inet_start..inet_start + cfg.imagenet_size].copy_from_slice(&rec.imagenet_scores);

    let scalars = [
        rec.confidence,
        rec.bbox[0],
        rec.bbox[1],
        rec.bbox[2],
        rec.bbox[3],
        pos,
    ];
    let width = cfg.scalar_width();
    let tail = &mut out[inet_start + cfg.imagenet_size..];
    for (slot, x) in tail.chunks_exact_mut(width).zip(scalars) {
        if cfg.use_rbf_embedding {
            feature_map_into(x, &cfg.scalar_map, slot)?;
        } else {
            slot[0] = x;
        }
    }
    Ok(out)
}

/// Groups `records` into `τ` frames and encodes every box.
pub fn feature_bag(records: &[DetectionRecord], tau: usize, cfg: &OdfConfig) -> Result<FeatureBag> {
    if records.is_empty() {
        return Err(Error::Empty("detector produced no records".into()));
    }
    if tau == 0 {
        return Err(Error::InputRange(
            "video length tau must be at least 1".into(),
        ));
    }
    let mut frames: Vec<Vec<Vec<f64>>> = vec![Vec::new(); tau];
    for rec in records {
        let v = encode_box(rec, tau, cfg)?;
        frames[rec.frame_index - 1].push(v);
    }
    FeatureBag::new(cfg.box_dim(), frames)
}

pub fn odf_descriptor(
    records: &[DetectionRecord],
    tau: usize,
    cfg: &OdfConfig,
) -> Result<MultiMomentDescriptor> {
    let bag = feature_bag(records, tau, cfg)?;
    multi_moment_with(&bag, &MomentOptions::with_n_prime(cfg.n_prime))
}
