//! Gaussian feature maps over equispaced pivots.
//!
//! A scalar `x` is embedded as the vector of Gaussian responses
//! `exp(-dist(x, ζ_i)² / σ²)` at `Z` fixed pivots. Each response is a Gaussian of
//! bandwidth `σ/√2`, so the inner product of two embeddings approximates the
//! RBF kernel `G_σ(x - x') = exp(-(x - x')² / 2σ²)` up to a constant `c`
//! (see [`kernel_fit`]).
//!
//! Two domains are supported: the closed unit interval with pivots at
//! `(i-1)/(Z-1)`, and the unit ring `[0, 1)` with pivots at `(i-1)/Z` and
//! wrap-around distance, used for angles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Closed interval `[0, 1]`.
    IntervalUnit,
    /// Ring `[0, 1)`; distances wrap around.
    RingUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapConfig {
    pub pivot_count: usize,
    /// Bandwidth of the approximated kernel; each pivot response uses `σ/√2`.
    pub sigma: f64,
    pub domain: Domain,
}

impl FeatureMapConfig {
    pub fn new(pivot_count: usize, sigma: f64, domain: Domain) -> Result<Self> {
        let cfg = Self {
            pivot_count,
            sigma,
            domain,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn interval(pivot_count: usize, sigma: f64) -> Result<Self> {
        Self::new(pivot_count, sigma, Domain::IntervalUnit)
    }

    pub fn ring(pivot_count: usize, sigma: f64) -> Result<Self> {
        Self::new(pivot_count, sigma, Domain::RingUnit)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pivot_count == 0 {
            return Err(Error::Argument("pivot_count must be at least 1".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Argument(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn pivots(&self) -> Vec<f64> {
        let z = self.pivot_count;
        match self.domain {
            Domain::IntervalUnit if z == 1 => vec![0.5],
            Domain::IntervalUnit => (0..z).map(|i| i as f64 / (z - 1) as f64).collect(),
            Domain::RingUnit => (0..z).map(|i| i as f64 / z as f64).collect(),
        }
    }

    fn distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        match self.domain {
            Domain::IntervalUnit => d,
            Domain::RingUnit => d.min(1.0 - d),
        }
    }

    fn check_input(&self, x: f64) -> Result<()> {
        let ok = match self.domain {
            Domain::IntervalUnit => (0.0..=1.0).contains(&x),
            Domain::RingUnit => (0.0..1.0).contains(&x),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InputRange(format!(
                "{x} is outside the {:?} feature-map domain",
                self.domain
            )))
        }
    }

    /// The approximated kernel `G_σ` evaluated with this domain's distance.
    pub fn target_kernel(&self, x: f64, y: f64) -> f64 {
        let d = self.distance(x, y);
        (-d * d / (2.0 * self.sigma * self.sigma)).exp()
    }
}

pub fn feature_map(x: f64, cfg: &FeatureMapConfig) -> Result<Vec<f64>> {
    let mut out = vec![0.0; cfg.pivot_count];
    feature_map_into(x, cfg, &mut out)?;
    Ok(out)
}

/// Writes the embedding of `x` into `out` (length `cfg.pivot_count`).
pub fn feature_map_into(x: f64, cfg: &FeatureMapConfig, out: &mut [f64]) -> Result<()> {
    cfg.check_input(x)?;
    crate::error::check_len("feature map output", cfg.pivot_count, out.len())?;
    let inv = 1.0 / (cfg.sigma * cfg.sigma);
    for (o, p) in out.iter_mut().zip(cfg.pivots()) {
        let d = cfg.distance(x, p);
        *o = (-d * d * inv).exp();
    }
    Ok(())
}

/// Least-squares scale for the linearised kernel and its residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelFit {
    pub c: f64,
    /// `sqrt(Σ (c·k - t)² / Σ t²)` over the grid.
    pub relative_rms: f64,
}

/// Fits `c` minimising `Σ (c·⟨φ(x), φ(x')⟩ - G_σ(x - x'))²` over a uniform
/// `grid_size × grid_size` grid of the domain.
///
/// Interval grids include both endpoints; ring grids are `k / grid_size`.
pub fn kernel_fit(cfg: &FeatureMapConfig, grid_size: usize) -> Result<KernelFit> {
    cfg.validate()?;
    if grid_size < 2 {
        return Err(Error::Argument("grid_size must be at least 2".into()));
    }
    let xs: Vec<f64> = match cfg.domain {
        Domain::IntervalUnit => (0..grid_size)
            .map(|k| k as f64 / (grid_size - 1) as f64)
            .collect(),
        Domain::RingUnit => (0..grid_size)
            .map(|k| k as f64 / grid_size as f64)
            .collect(),
    };
    let maps = xs
        .iter()
        .map(|&x| feature_map(x, cfg))
        .collect::<Result<Vec<_>>>()?;

    let (mut kt, mut kk, mut tt) = (0.0, 0.0, 0.0);
    let mut pairs = Vec::with_capacity(grid_size * grid_size);
    for (a, pa) in xs.iter().zip(&maps) {
        for (b, pb) in xs.iter().zip(&maps) {
            let k: f64 = pa.iter().zip(pb).map(|(u, v)| u * v).sum();
            let t = cfg.target_kernel(*a, *b);
            kt += k * t;
            kk += k * k;
            tt += t * t;
            pairs.push((k, t));
        }
    }
    if kk == 0.0 || !kk.is_finite() {
        return Err(Error::Numeric(
            "feature-map inner products vanish on the grid".into(),
        ));
    }
    let c = kt / kk;
    let sse: f64 = pairs.iter().map(|(k, t)| (c * k - t).powi(2)).sum();
    Ok(KernelFit {
        c,
        relative_rms: (sse / tt).sqrt(),
    })
}

pub fn kernel_approx_constant(cfg: &FeatureMapConfig, grid_size: usize) -> Result<f64> {
    kernel_fit(cfg, grid_size).map(|f| f.c)
}
