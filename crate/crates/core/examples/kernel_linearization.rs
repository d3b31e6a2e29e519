//! Fits the RBF feature map to the Gaussian kernel for a few pivot counts.

use momhal::kernel::{feature_map, kernel_fit, FeatureMapConfig};

fn main() -> momhal::Result<()> {
    for z in [3, 5, 7, 9] {
        let cfg = FeatureMapConfig::interval(z, 0.5)?;
        let fit = kernel_fit(&cfg, 101)?;
        println!(
            "Z={z:<2} sigma=0.5  c={:.4}  relative rms={:.4}",
            fit.c, fit.relative_rms
        );
    }

    let cfg = FeatureMapConfig::interval(7, 0.5)?;
    let c = kernel_fit(&cfg, 101)?.c;
    let (x, y) = (0.2, 0.55);
    let approx: f64 = feature_map(x, &cfg)?
        .iter()
        .zip(feature_map(y, &cfg)?)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * c;
    println!(
        "G(0.2, 0.55) = {:.4}, linearised {:.4}",
        cfg.target_kernel(x, y),
        approx
    );

    let ring = FeatureMapConfig::ring(12, 1.0 / 12.0)?;
    let phi = feature_map(0.95, &ring)?;
    println!(
        "ring embedding of 0.95: {:?}",
        phi.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
    );
    Ok(())
}
