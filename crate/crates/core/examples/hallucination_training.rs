//! Trains on a small synthetic corpus and compares against HAF alone.

use momhal::halluc::{self, TrainConfig};
use momhal::synth::{self, SynthConfig};

fn main() -> momhal::Result<()> {
    let data = synth::generate(&SynthConfig {
        videos: 128,
        classes: 4,
        ..SynthConfig::default()
    })?;
    let cfg = TrainConfig {
        epochs: 14,
        ..TrainConfig::default()
    };

    for (name, c) in [
        ("all streams", cfg.clone()),
        ("det1 + sal1", cfg.clone().with_streams(&["det1", "sal1"])),
        ("haf only", cfg.clone().with_streams(&[])),
    ] {
        let out = halluc::train(&data, &c)?;
        let last = out.metrics.last().expect("at least one epoch");
        println!(
            "{name:<12} loss {:8.3}  val acc {:.3}  beta {:.3}",
            last.loss, last.val_acc, last.beta.top
        );
    }

    // inference sees backbone features only
    let out = halluc::train(&data, &cfg.with_streams(&["det1"]))?;
    let inf = halluc::infer(&out.model, &data[0].features)?;
    println!(
        "video 0: predicted {} (label {}), hallucinated {:?}",
        inf.predicted(),
        data[0].label,
        inf.hallucinated.keys().collect::<Vec<_>>()
    );
    Ok(())
}
