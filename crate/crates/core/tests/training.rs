use std::sync::OnceLock;

use momhal::halluc::{self, objective_with_gradients, Model, SyntheticVideo, TrainConfig};
use momhal::synth::{self, SynthConfig};

fn default_corpus() -> &'static [SyntheticVideo] {
    static DATA: OnceLock<Vec<SyntheticVideo>> = OnceLock::new();
    DATA.get_or_init(|| synth::generate(&SynthConfig::default()).unwrap())
}

#[test]
fn per_stream_mse_falls_over_the_first_epochs() {
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let out = halluc::train(default_corpus(), &cfg).unwrap();
    assert_eq!(out.metrics.len(), 5);
    for s in cfg.enabled_streams() {
        let series: Vec<f64> = out.metrics.iter().map(|m| m.mse[&s]).collect();
        for w in series.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{s}: {series:?}");
        }
    }
}

#[test]
fn batch_gradient_is_the_mean_of_single_gradients() {
    let data = &default_corpus()[..5];
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let model = halluc::train(data, &cfg).unwrap().model;
    let (whole_value, whole) = objective_with_gradients(data, &model).unwrap();
    let singles: Vec<_> = data
        .iter()
        .map(|v| objective_with_gradients(std::slice::from_ref(v), &model).unwrap())
        .collect();
    let mean_loss = singles.iter().map(|(v, _)| v.loss).sum::<f64>() / 5.0;
    assert!((whole_value.loss - mean_loss).abs() < 1e-10 * mean_loss.abs().max(1.0));

    let flat = |g: &halluc::Gradients| -> Vec<f64> {
        let mut out = Vec::new();
        for u in g.units.iter().chain([&g.haf, &g.prednet]) {
            out.extend(&u.weights);
            out.extend(&u.bias);
        }
        out
    };
    let want = singles
        .iter()
        .fold(vec![0.0; flat(&whole).len()], |mut acc, (_, g)| {
            for (a, x) in acc.iter_mut().zip(flat(g)) {
                *a += x / 5.0;
            }
            acc
        });
    for (a, b) in flat(&whole).iter().zip(&want) {
        assert!((a - b).abs() < 1e-12 + 1e-9 * b.abs(), "{a} vs {b}");
    }
}

#[test]
fn training_is_deterministic() {
    let data = &default_corpus()[..64];
    let cfg = TrainConfig {
        epochs: 12,
        selection_subset: 16,
        ..TrainConfig::default()
    };
    let a = halluc::train(data, &cfg).unwrap();
    let b = halluc::train(data, &cfg).unwrap();
    assert_eq!(a.model.to_bytes(), b.model.to_bytes());
    let streams = cfg.enabled_streams();
    assert_eq!(
        halluc::metrics_csv(&streams, &a.metrics),
        halluc::metrics_csv(&streams, &b.metrics)
    );
    let back = Model::read_from(a.model.to_bytes().as_slice()).unwrap();
    assert_eq!(back.to_bytes(), a.model.to_bytes());
}

#[test]
fn warm_up_holds_beta_then_brackets_shrink() {
    let data = &default_corpus()[..64];
    let cfg = TrainConfig {
        epochs: 13,
        selection_subset: 16,
        ..TrainConfig::default()
    };
    let out = halluc::train(data, &cfg).unwrap();
    for m in &out.metrics[..10] {
        assert_eq!(m.beta.top, 0.0);
        assert_eq!((m.beta_lo, m.beta_hi), (0.0, 50.0));
    }
    let widths: Vec<f64> = out.metrics[10..]
        .iter()
        .map(|m| m.beta_hi - m.beta_lo)
        .collect();
    for (k, w) in widths.iter().enumerate() {
        let want = 50.0 * momhal::fusion::GOLDEN.powi(k as i32 + 1);
        assert!((w - want).abs() < 1e-9, "{widths:?}");
    }
}
