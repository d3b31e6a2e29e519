//! Multi-moment descriptor of a small bag spread over frames.

use momhal::moments::{multi_moment, FeatureBag};
use momhal::rng;

fn main() -> momhal::Result<()> {
    let mut r = rng::seeded(3);
    let d = 6;
    // three frames with 1, 4 and 2 detections
    let frames = [1, 4, 2]
        .iter()
        .map(|&k| (0..k).map(|_| rng::normal_vec(&mut r, d)).collect())
        .collect();
    let bag = FeatureBag::new(d, frames)?;
    let m = multi_moment(&bag, 2, 1e-12)?;

    let show = |name: &str, v: &[f64]| {
        println!(
            "{name:<10} {}",
            v.iter()
                .map(|x| format!("{x:+.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        )
    };
    show("mean dir", &m.mean_dir);
    for (i, u) in m.eigvecs.iter().enumerate() {
        show(&format!("u{}", i + 1), u);
    }
    show("skewness", &m.skewness);
    show("kurtosis", &m.kurtosis);
    show("spectrum", &m.eig_spectrum);
    println!("flat length {} = {d} x (4 + {})", m.flat_len(), m.n_prime());
    Ok(())
}
