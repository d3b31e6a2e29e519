//! Stream reweighting, three-level weighted pooling and golden-section search
//! over the reweighting exponent β.
//!
//! For a group `T` with accuracies `w'` normalised so that `max w' = 1`,
//!
//! ```text
//! r_i = max(w'_i^β, ρ) / Σ_j max(w'_j^β, ρ),      w_i = r_i / |T|
//! ```
//!
//! `β = 0` equalises the streams; large β concentrates the weight on the best
//! stream down to the floor ρ. Pooling happens on three levels: detector
//! streams into `det`, saliency streams into `sal`, and the top level over
//! the remaining streams, `det`, `sal` and the HAF stream:
//!
//! ```text
//! det = (1/|D|) Σ_{i∈D} w_i ψ_i            sal = (1/|S|) Σ_{i∈S} w_i ψ_i
//! tot = (1/(|H*|+1)) (w_haf ψ_haf + Σ_{i∈H*} w_i ψ_i)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(√5 - 1) / 2`.
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;
pub const HAF: &str = "haf";
pub const DET: &str = "det";
pub const SAL: &str = "sal";
/// Epochs trained with `β = 0` before the search starts.
pub const WARMUP_EPOCHS: usize = 10;
pub const DEFAULT_BRACKET: (f64, f64) = (0.0, 50.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Det,
    Sal,
    Top,
}

/// Normalised ratios `r_i`; they sum to one.
pub fn eq9_ratios(w_prime: &[f64], beta: f64, rho: f64) -> Result<Vec<f64>> {
    if w_prime.is_empty() {
        return Err(Error::Empty("weight group has no streams".into()));
    }
    if let Some(bad) = w_prime.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::Argument(format!(
            "raw weight {bad} must be non-negative"
        )));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Argument(format!("beta {beta} must be non-negative")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Argument(format!("rho {rho} must lie in (0, 1]")));
    }
    let floored: Vec<f64> = w_prime.iter().map(|w| w.powf(beta).max(rho)).collect();
    let total: f64 = floored.iter().sum();
    Ok(floored.into_iter().map(|v| v / total).collect())
}

/// Stream weights `w_i = r_i / |T|`.
pub fn eq9_weights(w_prime: &[f64], beta: f64, rho: f64) -> Result<Vec<f64>> {
    let n = w_prime.len() as f64;
    Ok(eq9_ratios(w_prime, beta, rho)?
        .into_iter()
        .map(|r| r / n)
        .collect())
}

/// Divides by the group maximum so the best stream has `w' = 1`.
pub fn normalize_by_max(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        raw.iter().map(|w| w / max).collect()
    } else {
        raw.to_vec()
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn winner(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Groups {
    pub det: Vec<String>,
    pub sal: Vec<String>,
    /// Top-level members; `"det"` and `"sal"` stand for the pooled groups.
    pub top: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Betas {
    pub det: f64,
    pub sal: f64,
    pub top: f64,
}

impl Betas {
    pub fn shared(beta: f64) -> Self {
        Self {
            det: beta,
            sal: beta,
            top: beta,
        }
    }

    pub fn get(&self, group: Group) -> f64 {
        match group {
            Group::Det => self.det,
            Group::Sal => self.sal,
            Group::Top => self.top,
        }
    }

    pub fn set(&mut self, group: Group, beta: f64) {
        match group {
            Group::Det => self.det = beta,
            Group::Sal => self.sal = beta,
            Group::Top => self.top = beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub lo: f64,
    pub hi: f64,
    /// Search a separate β per group instead of one shared value.
    #[serde(default)]
    pub per_group: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            lo: DEFAULT_BRACKET.0,
            hi: DEFAULT_BRACKET.1,
            per_group: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub rho: f64,
    pub haf_weight: f64,
    pub groups: Groups,
    /// Raw (unnormalised) accuracies keyed by stream id, including `"det"`
    /// and `"sal"` for the top level.
    pub raw_weights: BTreeMap<String, f64>,
    pub beta: Betas,
    #[serde(default)]
    pub search: SearchSettings,
}

impl FusionSpec {
    /// Spec with unit raw weights, `β = 0`, `ρ = 0.1` and
    /// `w_haf = 1/(|H*|+1)`. Empty detector or saliency groups are left out of
    /// the top level.
    pub fn new(det: Vec<String>, sal: Vec<String>, others: Vec<String>) -> Self {
        let mut top = others;
        if !det.is_empty() {
            top.push(DET.into());
        }
        if !sal.is_empty() {
            top.push(SAL.into());
        }
        let raw_weights = det
            .iter()
            .chain(&sal)
            .chain(&top)
            .map(|s| (s.clone(), 1.0))
            .collect();
        Self {
            rho: 0.1,
            haf_weight: 1.0 / (top.len() + 1) as f64,
            groups: Groups { det, sal, top },
            raw_weights,
            beta: Betas::shared(0.0),
            search: SearchSettings::default(),
        }
    }

    pub fn members(&self, group: Group) -> &[String] {
        match group {
            Group::Det => &self.groups.det,
            Group::Sal => &self.groups.sal,
            Group::Top => &self.groups.top,
        }
    }

    /// Every stream that feeds the pooling directly, HAF last.
    pub fn leaves(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .groups
            .det
            .iter()
            .chain(&self.groups.sal)
            .cloned()
            .collect();
        out.extend(
            self.groups
                .top
                .iter()
                .filter(|s| s.as_str() != DET && s.as_str() != SAL)
                .cloned(),
        );
        out.push(HAF.into());
        out
    }

    fn raw(&self, id: &str) -> Result<f64> {
        self.raw_weights
            .get(id)
            .copied()
            .ok_or_else(|| Error::Missing(format!("raw weight for stream `{id}`")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config {
                field: "fusion.rho".into(),
                msg: format!("{} not in (0, 1]", self.rho),
            });
        }
        for (g, b) in [
            ("det", self.beta.det),
            ("sal", self.beta.sal),
            ("top", self.beta.top),
        ] {
            if !(b >= 0.0) {
                return Err(Error::Config {
                    field: format!("fusion.beta.{g}"),
                    msg: format!("{b} is negative"),
                });
            }
        }
        for id in self
            .groups
            .det
            .iter()
            .chain(&self.groups.sal)
            .chain(&self.groups.top)
        {
            let w = self.raw(id).map_err(|e| Error::Config {
                field: format!("fusion.raw_weights.{id}"),
                msg: e.to_string(),
            })?;
            if !(w >= 0.0) {
                return Err(Error::Config {
                    field: format!("fusion.raw_weights.{id}"),
                    msg: format!("{w} is negative"),
                });
            }
        }
        if !(self.search.lo < self.search.hi) {
            return Err(Error::Config {
                field: "fusion.search".into(),
                msg: "lo must be below hi".into(),
            });
        }
        Ok(())
    }

    /// Normalised `w'` of a group, in member order.
    pub fn normalized(&self, group: Group) -> Result<Vec<f64>> {
        let raw = self
            .members(group)
            .iter()
            .map(|id| self.raw(id))
            .collect::<Result<Vec<_>>>()?;
        Ok(normalize_by_max(&raw))
    }

    /// Weights `w_i` of a group's members at that group's β.
    pub fn group_weights(&self, group: Group) -> Result<Vec<f64>> {
        if self.members(group).is_empty() {
            return Ok(Vec::new());
        }
        eq9_weights(&self.normalized(group)?, self.beta.get(group), self.rho)
    }

    /// Linear coefficient of every leaf stream (including HAF) in the
    /// top-level pooled vector.
    pub fn coefficients(&self) -> Result<BTreeMap<String, f64>> {
        let top_scale = 1.0 / (self.groups.top.len() + 1) as f64;
        let mut out = BTreeMap::new();
        out.insert(HAF.to_string(), top_scale * self.haf_weight);
        let top_w = self.group_weights(Group::Top)?;
        for (id, w) in self.groups.top.iter().zip(top_w) {
            let sub = match id.as_str() {
                DET => Some(Group::Det),
                SAL => Some(Group::Sal),
                _ => None,
            };
            match sub {
                None => {
                    out.insert(id.clone(), top_scale * w);
                }
                Some(g) => {
                    let members = self.members(g);
                    let inner = self.group_weights(g)?;
                    let n = members.len() as f64;
                    for (m, wi) in members.iter().zip(inner) {
                        out.insert(m.clone(), top_scale * w * wi / n);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format {
            format: "fusion toml",
            msg: e.to_string(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config {
            field: "fusion".into(),
            msg: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

fn fetch<'a>(streams: &'a BTreeMap<String, Vec<f64>>, id: &str) -> Result<&'a Vec<f64>> {
    streams
        .get(id)
        .ok_or_else(|| Error::Missing(format!("stream `{id}`")))
}

fn accumulate(out: &mut Option<Vec<f64>>, v: &[f64], scale: f64) -> Result<()> {
    match out {
        None => *out = Some(v.iter().map(|x| x * scale).collect()),
        Some(acc) => {
            crate::error::check_len("pooled stream", acc.len(), v.len())?;
            for (a, x) in acc.iter_mut().zip(v) {
                *a += scale * x;
            }
        }
    }
    Ok(())
}

/// Weighted mean pooling of one group. For [`Group::Top`], entries `"det"`
/// and `"sal"` are taken from `streams` when present and pooled from their
/// members otherwise; `"haf"` is required.
pub fn pooled(
    streams: &BTreeMap<String, Vec<f64>>,
    spec: &FusionSpec,
    group: Group,
) -> Result<Vec<f64>> {
    let members = spec.members(group);
    let weights = spec.group_weights(group)?;
    let mut acc = None;
    match group {
        Group::Det | Group::Sal => {
            let n = members.len() as f64;
            for (id, w) in members.iter().zip(weights) {
                accumulate(&mut acc, fetch(streams, id)?, w / n)?;
            }
        }
        Group::Top => {
            let scale = 1.0 / (members.len() + 1) as f64;
            accumulate(&mut acc, fetch(streams, HAF)?, scale * spec.haf_weight)?;
            for (id, w) in members.iter().zip(weights) {
                let sub = match id.as_str() {
                    DET => Some(Group::Det),
                    SAL => Some(Group::Sal),
                    _ => None,
                };
                match (streams.get(id), sub) {
                    (Some(v), _) => accumulate(&mut acc, v, scale * w)?,
                    (None, Some(g)) => accumulate(&mut acc, &pooled(streams, spec, g)?, scale * w)?,
                    (None, None) => return Err(Error::Missing(format!("stream `{id}`"))),
                }
            }
        }
    }
    acc.ok_or_else(|| Error::Empty("pooling group has no streams".into()))
}

/// Full three-level pooling.
pub fn fuse(streams: &BTreeMap<String, Vec<f64>>, spec: &FusionSpec) -> Result<Vec<f64>> {
    pooled(streams, spec, Group::Top)
}

/// Single-level alternative: one weighting over every non-HAF leaf stream,
/// with raw weights normalised by the global maximum and `β_top`.
pub fn pooled_flat(streams: &BTreeMap<String, Vec<f64>>, spec: &FusionSpec) -> Result<Vec<f64>> {
    let leaves: Vec<String> = spec.leaves().into_iter().filter(|s| s != HAF).collect();
    let raw = leaves
        .iter()
        .map(|id| spec.raw(id))
        .collect::<Result<Vec<_>>>()?;
    let weights = eq9_weights(&normalize_by_max(&raw), spec.beta.top, spec.rho)?;
    let scale = 1.0 / (leaves.len() + 1) as f64;
    let mut acc = None;
    accumulate(&mut acc, fetch(streams, HAF)?, scale * spec.haf_weight)?;
    for (id, w) in leaves.iter().zip(weights) {
        accumulate(&mut acc, fetch(streams, id)?, scale * w)?;
    }
    Ok(acc.expect("HAF term present"))
}

/// Search interval stored as `(lo, width)` so each golden step scales the
/// width by exactly [`GOLDEN`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub width: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Argument(format!("invalid bracket [{lo}, {hi}]")));
        }
        Ok(Self { lo, width: hi - lo })
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.width
    }

    pub fn midpoint(&self) -> f64 {
        self.lo + 0.5 * self.width
    }

    /// The two interior probes `lo + g²w` and `lo + g·w`.
    pub fn probes(&self) -> (f64, f64) {
        (
            self.lo + GOLDEN * GOLDEN * self.width,
            self.lo + GOLDEN * self.width,
        )
    }

    /// Keeps `[lo, lo + g·w]` when `keep_left`, else `[lo + g²w, hi]`.
    fn shrink(&mut self, keep_left: bool) {
        if !keep_left {
            self.lo += GOLDEN * GOLDEN * self.width;
        }
        self.width *= GOLDEN;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenResult {
    pub beta_star: f64,
    pub f_star: f64,
    pub bracket: Bracket,
}

fn eval(f: &mut impl FnMut(f64) -> f64, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("objective returned {v} at {x}")))
    }
}

/// Golden-section maximisation of `f` on `[lo, hi]` for `iters` eliminations,
/// reusing one interior evaluation per step. Returns the final bracket's
/// midpoint and `f` there.
pub fn golden_section_max(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    iters: usize,
) -> Result<GoldenResult> {
    if iters == 0 {
        return Err(Error::Argument("at least one iteration required".into()));
    }
    let mut bracket = Bracket::new(lo, hi)?;
    let (mut x1, mut x2) = bracket.probes();
    let mut f1 = eval(&mut f, x1)?;
    let mut f2 = eval(&mut f, x2)?;
    for _ in 0..iters {
        let keep_left = f1 >= f2;
        bracket.shrink(keep_left);
        let (p1, p2) = bracket.probes();
        if keep_left {
            // old x1 becomes the new upper probe
            x2 = x1;
            f2 = f1;
            x1 = p1;
            f1 = eval(&mut f, x1)?;
        } else {
            x1 = x2;
            f1 = f2;
            x2 = p2;
            f2 = eval(&mut f, x2)?;
        }
    }
    let beta_star = bracket.midpoint();
    Ok(GoldenResult {
        beta_star,
        f_star: eval(&mut f, beta_star)?,
        bracket,
    })
}

/// What the trainer does with β in a given epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchPolicy {
    Fixed(f64),
    /// One golden-section elimination on the carried bracket.
    GoldenStep,
}

/// β is held at 0 for the first [`WARMUP_EPOCHS`] epochs (1-based), then
/// searched one step per epoch.
pub fn beta_schedule(epoch: usize) -> SearchPolicy {
    if epoch <= WARMUP_EPOCHS {
        SearchPolicy::Fixed(0.0)
    } else {
        SearchPolicy::GoldenStep
    }
}

/// Per-epoch golden-section state. The objective changes between epochs, so
/// both probes are re-evaluated at every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSearch {
    pub bracket: Bracket,
}

impl BetaSearch {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        Ok(Self {
            bracket: Bracket::new(lo, hi)?,
        })
    }

    pub fn beta(&self) -> f64 {
        self.bracket.midpoint()
    }

    pub fn step(&mut self, mut f: impl FnMut(f64) -> f64) -> Result<(f64, f64)> {
        let (x1, x2) = self.bracket.probes();
        let f1 = eval(&mut f, x1)?;
        let f2 = eval(&mut f, x2)?;
        self.bracket.shrink(f1 >= f2);
        Ok((f1, f2))
    }
}

impl Default for BetaSearch {
    fn default() -> Self {
        Self::new(DEFAULT_BRACKET.0, DEFAULT_BRACKET.1).expect("valid default bracket")
    }
}
