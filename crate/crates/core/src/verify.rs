//! Property suites behind `momhal verify`. Each check reports the measured
//! statistics alongside its pass/fail verdict.

use std::fmt;

use crate::error::{Error, Result};
use crate::halluc::{
    default_spec, objective, objective_with_gradients, BackboneFeatures, ClassLoss, Model,
    SyntheticVideo, TrainConfig, TEMPORAL_LEN,
};
use crate::kernel::{kernel_fit, FeatureMapConfig};
use crate::moments::{
    multi_moment_with, FeatureBag, MomentOptions, MultiMomentDescriptor, SvdRoute,
};
use crate::pn::{self, PnConfig};
use crate::rng;
use crate::sketch::unbiasedness_check;

/// Relative RMS of the 101² grid fit at `Z = 7, σ = 0.5`, from a separate
/// brute-force evaluation.
pub const KERNEL_ORACLE_RMS: f64 = 0.080_605_661_614_338_59;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Sketch,
    Kernel,
    Gradients,
    Moments,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Sketch,
        Suite::Kernel,
        Suite::Gradients,
        Suite::Moments,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Sketch => "sketch",
            Suite::Kernel => "kernel",
            Suite::Gradients => "gradients",
            Suite::Moments => "moments",
        }
    }

    pub fn parse(name: &str) -> Result<Vec<Suite>> {
        if name == "all" {
            return Ok(Self::ALL.to_vec());
        }
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .map(|s| vec![s])
            .ok_or_else(|| Error::Argument(format!("unknown suite `{name}`")))
    }

    pub fn run(self, seed: u64) -> Result<Vec<Check>> {
        match self {
            Suite::Sketch => sketch_suite(seed),
            Suite::Kernel => kernel_suite(),
            Suite::Gradients => gradient_suite(seed),
            Suite::Moments => moments_suite(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub stats: Vec<(&'static str, f64)>,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name
        )?;
        for (k, v) in &self.stats {
            write!(f, " {k}={v:.6e}")?;
        }
        Ok(())
    }
}

pub const SKETCH_TRIALS: usize = 20_000;

pub fn sketch_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut variances = Vec::new();
    for dp in [8, 16, 32] {
        let r = unbiasedness_check(64, dp, SKETCH_TRIALS, seed)?;
        let se = (r.empirical_variance / r.trials as f64).sqrt();
        let ratio = r.empirical_variance / r.variance_bound;
        variances.push(r.empirical_variance);
        checks.push(Check {
            name: format!("sketch d=64 d'={dp}"),
            passed: r.mean_error < 4.0 * se && ratio <= 1.1,
            stats: vec![
                ("mean_error", r.mean_error),
                ("standard_error", se),
                ("variance", r.empirical_variance),
                ("variance_bound_ratio", ratio),
            ],
        });
    }
    checks.push(Check {
        name: "sketch variance decreases with d'".into(),
        passed: variances.windows(2).all(|w| w[1] < w[0]),
        stats: vec![
            ("var_8", variances[0]),
            ("var_16", variances[1]),
            ("var_32", variances[2]),
        ],
    });
    Ok(checks)
}

pub fn kernel_suite() -> Result<Vec<Check>> {
    let mut errs = Vec::new();
    for z in [3, 5, 7] {
        errs.push(kernel_fit(&FeatureMapConfig::interval(z, 0.5)?, 101)?.relative_rms);
    }
    Ok(vec![
        Check {
            name: "kernel Z=7 sigma=0.5 within oracle +10%".into(),
            passed: errs[2] < KERNEL_ORACLE_RMS * 1.1,
            stats: vec![("relative_rms", errs[2]), ("oracle", KERNEL_ORACLE_RMS)],
        },
        Check {
            name: "kernel error decreases over Z=3,5,7".into(),
            passed: errs.windows(2).all(|w| w[1] < w[0]),
            stats: vec![("rms_3", errs[0]), ("rms_5", errs[1]), ("rms_7", errs[2])],
        },
    ])
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Small random model and batch for gradient checks.
pub fn gradient_instance(seed: u64) -> Result<(Model, Vec<SyntheticVideo>)> {
    let mut r = rng::seeded(rng::derive_seed(seed, "gradcheck"));
    let streams = ["fv2", "bow", "det1", "det2", "sal1", "sal2"];
    let cfg = TrainConfig {
        backbone_dim: 5,
        pre_sketch_dim: 6,
        sketch_dim: 4,
        seed,
        alpha: 0.5 + rng::uniform(&mut r),
        class_loss: if seed.is_multiple_of(2) {
            ClassLoss::Softmax
        } else {
            ClassLoss::SigmoidBce
        },
        ..TrainConfig::default()
    }
    .with_streams(&streams);
    let classes = 3;
    let mut spec = default_spec(&cfg.enabled_streams());
    for w in spec.raw_weights.values_mut() {
        *w = 0.2 + 0.8 * rng::uniform(&mut r);
    }
    spec.beta = crate::fusion::Betas::shared(3.0 * rng::uniform(&mut r));
    let mut model = Model::init(&cfg, spec, classes)?;
    for u in model
        .units
        .iter_mut()
        .chain(std::iter::once(&mut model.haf))
    {
        u.bias = rng::normal_vec(&mut r, u.bias.len())
            .iter()
            .map(|b| 0.2 * b)
            .collect();
    }
    let batch = (0..3)
        .map(|i| {
            let features = BackboneFeatures::new(
                cfg.backbone_dim,
                rng::normal_vec(&mut r, cfg.backbone_dim * TEMPORAL_LEN),
            )?;
            let ground_truth = streams
                .iter()
                .map(|s| (s.to_string(), rng::normal_vec(&mut r, cfg.sketch_dim)))
                .collect();
            Ok(SyntheticVideo {
                features,
                ground_truth,
                label: i % classes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((model, batch))
}

fn param_mut(m: &mut Model, block: usize, bias: bool) -> &mut Vec<f64> {
    let n = m.units.len();
    match (block, bias) {
        (b, false) if b < n => &mut m.units[b].weights,
        (b, true) if b < n => &mut m.units[b].bias,
        (b, false) if b == n => &mut m.haf.weights,
        (b, true) if b == n => &mut m.haf.bias,
        (_, false) => &mut m.prednet.weights,
        (_, true) => &mut m.prednet.bias,
    }
}

/// Largest relative error between the analytic gradient and central finite
/// differences with step `h`, over every parameter.
pub fn model_gradient_error(model: &Model, batch: &[SyntheticVideo], h: f64) -> Result<f64> {
    let (_, g) = objective_with_gradients(batch, model)?;
    let n = model.units.len();
    let mut worst = 0.0f64;
    // every unit, then HAF, then PredNet
    for block in 0..=n + 1 {
        for bias in [false, true] {
            let analytic = match block {
                b if b < n => &g.units[b],
                b if b == n => &g.haf,
                _ => &g.prednet,
            };
            let analytic = if bias {
                &analytic.bias
            } else {
                &analytic.weights
            };
            for (i, a) in analytic.iter().enumerate() {
                let mut plus = model.clone();
                param_mut(&mut plus, block, bias)[i] += h;
                let mut minus = model.clone();
                param_mut(&mut minus, block, bias)[i] -= h;
                let fd =
                    (objective(batch, &plus)?.loss - objective(batch, &minus)?.loss) / (2.0 * h);
                worst = worst.max(relative_error(*a, fd));
            }
        }
    }
    Ok(worst)
}

/// Largest relative error of the SigmE vector-Jacobian product.
pub fn sigme_gradient_error(seed: u64, h: f64) -> Result<f64> {
    let mut r = rng::seeded(rng::derive_seed(seed, "sigme"));
    let cfg = PnConfig::default();
    let psi = rng::normal_vec(&mut r, 9);
    let up = rng::normal_vec(&mut r, 9);
    let analytic = pn::sigme_grad(&psi, &up, &cfg)?;
    let f = |x: &[f64]| -> Result<f64> {
        Ok(pn::sigme(x, &cfg)?
            .iter()
            .zip(&up)
            .map(|(a, b)| a * b)
            .sum())
    };
    let mut worst = 0.0f64;
    for i in 0..psi.len() {
        let mut p = psi.clone();
        p[i] += h;
        let mut m = psi.clone();
        m[i] -= h;
        let fd = (f(&p)? - f(&m)?) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], fd));
    }
    Ok(worst)
}

pub const GRADIENT_INSTANCES: u64 = 20;

pub fn gradient_suite(seed: u64) -> Result<Vec<Check>> {
    let mut model_err = 0.0f64;
    let mut sigme_err = 0.0f64;
    for k in 0..GRADIENT_INSTANCES {
        let s = rng::derive_seed(seed, &format!("instance/{k}"));
        let (model, batch) = gradient_instance(s)?;
        model_err = model_err.max(model_gradient_error(&model, &batch, 1e-5)?);
        sigme_err = sigme_err.max(sigme_gradient_error(s, 1e-6)?);
    }
    Ok(vec![
        Check {
            name: format!("objective gradients on {GRADIENT_INSTANCES} instances"),
            passed: model_err < 1e-4,
            stats: vec![("max_relative_error", model_err)],
        },
        Check {
            name: format!("sigme vjp on {GRADIENT_INSTANCES} instances"),
            passed: sigme_err < 1e-4,
            stats: vec![("max_relative_error", sigme_err)],
        },
    ])
}

/// Random bag with `d ≤ 32`, `N ≤ 50` vectors spread over a few frames.
pub fn random_bag(seed: u64) -> Result<FeatureBag> {
    let mut r = rng::seeded(rng::derive_seed(seed, "bag"));
    let d = 2 + rng::below(&mut r, 31) as usize;
    let n = 1 + rng::below(&mut r, 50) as usize;
    let frames = 1 + rng::below(&mut r, 6) as usize;
    let mut bag = vec![Vec::new(); frames];
    for _ in 0..n {
        let f = rng::below(&mut r, frames as u32) as usize;
        bag[f].push(rng::normal_vec(&mut r, d));
    }
    FeatureBag::new(d, bag)
}

fn descriptor_gap(a: &MultiMomentDescriptor, b: &MultiMomentDescriptor) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn moments_suite(seed: u64) -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    let mut mixed = [0usize; 2];
    for k in 0..100 {
        let bag = random_bag(rng::derive_seed(seed, &format!("bag/{k}")))?;
        mixed[usize::from(bag.len() < bag.dim())] += 1;
        let opts = |route| MomentOptions {
            route,
            ..MomentOptions::with_n_prime(3)
        };
        let gram = multi_moment_with(&bag, &opts(SvdRoute::Gram))?;
        let scatter = multi_moment_with(&bag, &opts(SvdRoute::Scatter))?;
        worst = worst.max(descriptor_gap(&gram, &scatter));
    }
    Ok(vec![Check {
        name: "moments gram and scatter routes agree on 100 bags".into(),
        passed: worst < 1e-8 && mixed.iter().all(|c| *c > 0),
        stats: vec![
            ("max_abs_diff", worst),
            ("bags_n_ge_d", mixed[0] as f64),
            ("bags_n_lt_d", mixed[1] as f64),
        ],
    }])
}
