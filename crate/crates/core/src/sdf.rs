//! Saliency detection features.
//!
//! A saliency frame is described by a spatio-angular histogram of its
//! gradients and a coarse intensity gist:
//!
//! * `υ' = Σ_pixels Λ · φ_ring(θ/2π) ⊗ φ(x) ⊗ φ(y)`, with 12 ring pivots for the
//!   orientation and 5 interval pivots for each normalised coordinate
//!   (`x = col/(W-1)`, `y = row/(H-1)`). Entry `a·25 + x·5 + y` holds angular
//!   pivot `a`, column pivot `x` and row pivot `y`.
//! * `gist`: the frame average-pooled onto a 16 × 16 grid (row-major), with
//!   fractional pixel overlaps weighted by area.
//!
//! The frame vector is `[υ'/‖υ'‖₂; gist/‖gist‖₁]` (300 + 256 = 556 entries) and
//! a video is summarised by the multi-moment descriptor over its frames.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kernel::{feature_map, feature_map_into, FeatureMapConfig};
use crate::moments::{multi_moment_with, FeatureBag, MomentOptions, MultiMomentDescriptor};

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyFrame {
    width: usize,
    height: usize,
    /// Row-major `height × width`, every value in `[0, 1]`.
    values: Vec<f64>,
}

impl SaliencyFrame {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Argument(format!(
                "saliency frame must be at least 2×2, got {width}×{height}"
            )));
        }
        check_len("saliency values", width * height, values.len())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InputRange(format!(
                "saliency value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Frame filled with `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn transposed(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let values = (0..w)
            .flat_map(|r| (0..h).map(move |c| (r, c)))
            .map(|(r, c)| self.at(c, r))
            .collect();
        Self {
            width: h,
            height: w,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdfConfig {
    pub angular_map: FeatureMapConfig,
    pub spatial_map: FeatureMapConfig,
    pub gist_size: usize,
    pub n_dagger: usize,
    /// Guard for the two block normalisations.
    pub eps: f64,
}

impl Default for SdfConfig {
    fn default() -> Self {
        Self {
            angular_map: FeatureMapConfig::ring(12, 1.0 / 12.0).expect("valid default map"),
            spatial_map: FeatureMapConfig::interval(5, 0.25).expect("valid default map"),
            gist_size: 16,
            n_dagger: 3,
            eps: 1e-12,
        }
    }
}

impl SdfConfig {
    pub fn gradient_dim(&self) -> usize {
        self.angular_map.pivot_count * self.spatial_map.pivot_count * self.spatial_map.pivot_count
    }

    pub fn frame_dim(&self) -> usize {
        self.gradient_dim() + self.gist_size * self.gist_size
    }

    pub fn descriptor_len(&self) -> usize {
        self.frame_dim() * (4 + self.n_dagger)
    }
}

/// Gradient amplitude `Λ` and orientation `θ/2π ∈ [0, 1)`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub amplitude: Vec<f64>,
    pub orientation: Vec<f64>,
}

/// `[-1, 0, 1]` and its transpose with replicated borders.
pub fn gradients(frame: &SaliencyFrame) -> GradientField {
    let (w, h) = (frame.width, frame.height);
    let mut amplitude = Vec::with_capacity(w * h);
    let mut orientation = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let gx = frame.at(r, (c + 1).min(w - 1)) - frame.at(r, c.saturating_sub(1));
            let gy = frame.at((r + 1).min(h - 1), c) - frame.at(r.saturating_sub(1), c);
            let amp = (gx * gx + gy * gy).sqrt();
            let theta = if amp == 0.0 {
                0.0
            } else {
                let mut t = gy.atan2(gx) / std::f64::consts::TAU;
                if t < 0.0 {
                    t += 1.0;
                }
                if t >= 1.0 {
                    t -= 1.0;
                }
                t
            };
            amplitude.push(amp);
            orientation.push(theta);
        }
    }
    GradientField {
        width: w,
        height: h,
        amplitude,
        orientation,
    }
}

/// The unnormalised 300-entry spatio-angular block for a gradient field.
pub fn encode_gradient_field(field: &GradientField, cfg: &SdfConfig) -> Result<Vec<f64>> {
    let (w, h) = (field.width, field.height);
    check_len("gradient amplitude", w * h, field.amplitude.len())?;
    check_len("gradient orientation", w * h, field.orientation.len())?;
    if w < 2 || h < 2 {
        return Err(Error::Argument(
            "gradient field must be at least 2×2".into(),
        ));
    }
    let za = cfg.angular_map.pivot_count;
    let zs = cfg.spatial_map.pivot_count;
    let col_maps = (0..w)
        .map(|c| feature_map(c as f64 / (w - 1) as f64, &cfg.spatial_map))
        .collect::<Result<Vec<_>>>()?;
    let row_maps = (0..h)
        .map(|r| feature_map(r as f64 / (h - 1) as f64, &cfg.spatial_map))
        .collect::<Result<Vec<_>>>()?;

    let mut out = vec![0.0; za * zs * zs];
    let mut ang = vec![0.0; za];
    let mut spatial = vec![0.0; zs * zs];
    for r in 0..h {
        for c in 0..w {
            let amp = field.amplitude[r * w + c];
            if amp == 0.0 {
                continue;
            }
            feature_map_into(field.orientation[r * w + c], &cfg.angular_map, &mut ang)?;
            for (x, fx) in col_maps[c].iter().enumerate() {
                for (y, fy) in row_maps[r].iter().enumerate() {
                    spatial[x * zs + y] = amp * fx * fy;
                }
            }
            for (a, fa) in ang.iter().enumerate() {
                let block = &mut out[a * zs * zs..(a + 1) * zs * zs];
                for (o, s) in block.iter_mut().zip(&spatial) {
                    *o += fa * s;
                }
            }
        }
    }
    Ok(out)
}

/// Overlap weights of `n` unit pixels with `g` equal bins covering `[0, n)`,
/// each row normalised to sum to one.
fn pooling_weights(n: usize, g: usize) -> Vec<Vec<f64>> {
    let bin = n as f64 / g as f64;
    (0..g)
        .map(|p| {
            let (lo, hi) = (p as f64 * bin, (p + 1) as f64 * bin);
            (0..n)
                .map(|i| {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    overlap / bin
                })
                .collect()
        })
        .collect()
}

/// `gist_size × gist_size` area-weighted average pooling, row-major.
pub fn gist(frame: &SaliencyFrame, gist_size: usize) -> Vec<f64> {
    let rows = pooling_weights(frame.height, gist_size);
    let cols = pooling_weights(frame.width, gist_size);
    let mut out = Vec::with_capacity(gist_size * gist_size);
    for ry in &rows {
        // row-pooled line of length width
        let mut line = vec![0.0; frame.width];
        for (r, wy) in ry.iter().enumerate() {
            if *wy == 0.0 {
                continue;
            }
            for (l, v) in line
                .iter_mut()
                .zip(&frame.values[r * frame.width..(r + 1) * frame.width])
            {
                *l += wy * v;
            }
        }
        for cx in &cols {
            out.push(cx.iter().zip(&line).map(|(a, b)| a * b).sum());
        }
    }
    out
}

pub fn encode_frame(frame: &SaliencyFrame, cfg: &SdfConfig) -> Result<Vec<f64>> {
    let grad = encode_gradient_field(&gradients(frame), cfg)?;
    let pooled = gist(frame, cfg.gist_size);
    let l2 = grad.iter().map(|x| x * x).sum::<f64>().sqrt().max(cfg.eps);
    let l1 = pooled.iter().map(|x| x.abs()).sum::<f64>().max(cfg.eps);
    let mut out = Vec::with_capacity(cfg.frame_dim());
    out.extend(grad.iter().map(|x| x / l2));
    out.extend(pooled.iter().map(|x| x / l1));
    Ok(out)
}

pub fn sdf_descriptor(frames: &[SaliencyFrame], cfg: &SdfConfig) -> Result<MultiMomentDescriptor> {
    if frames.is_empty() {
        return Err(Error::Empty("saliency video has no frames".into()));
    }
    let vectors = frames
        .iter()
        .map(|f| encode_frame(f, cfg))
        .collect::<Result<Vec<_>>>()?;
    let bag = FeatureBag::from_vectors(cfg.frame_dim(), vectors)?;
    multi_moment_with(&bag, &MomentOptions::with_n_prime(cfg.n_dagger))
}
