//! Three-level weighted pooling at β = 0 and at a larger β.

use std::collections::BTreeMap;

use momhal::fusion::{self, Betas, FusionSpec};

fn main() -> momhal::Result<()> {
    let det: Vec<String> = ["det1", "det2"].map(String::from).to_vec();
    let sal = vec!["sal1".to_string()];
    let mut spec = FusionSpec::new(det, sal, vec!["fv1".into(), "bow".into()]);
    for (id, acc) in [
        ("det1", 0.62),
        ("det2", 0.41),
        ("sal1", 0.55),
        ("fv1", 0.30),
        ("bow", 0.28),
        ("det", 0.64),
        ("sal", 0.55),
    ] {
        spec.raw_weights.insert(id.into(), acc);
    }

    let streams: BTreeMap<String, Vec<f64>> = ["haf", "det1", "det2", "sal1", "fv1", "bow"]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            (
                s.to_string(),
                (0..4).map(|k| if k == i % 4 { 1.0 } else { 0.0 }).collect(),
            )
        })
        .collect();

    for beta in [0.0, 4.0] {
        spec.beta = Betas::shared(beta);
        println!("beta = {beta}");
        for (id, c) in spec.coefficients()? {
            println!("  {id:<5} {c:.5}");
        }
        println!("  fused = {:?}", fusion::fuse(&streams, &spec)?);
    }
    println!("{}", spec.to_toml()?);
    Ok(())
}
