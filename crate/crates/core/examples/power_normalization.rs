//! SigmE and MaxExp on a vector with a few bursty coordinates.

use momhal::pn::{self, PnConfig, PnVariant};

fn main() -> momhal::Result<()> {
    let psi = vec![0.0, 0.01, 0.05, 0.2, 3.0, -1.5];
    for eta in [5.0, 20.0, 100.0] {
        let cfg = PnConfig {
            eta,
            ..PnConfig::default()
        };
        let out = pn::sigme(&psi, &cfg)?;
        println!("sigme eta'={eta:<5} {}", fmt(&out));
    }

    let counts = vec![0.0, 0.1, 0.3, 0.6, 0.9, 1.0];
    let cfg = PnConfig {
        variant: PnVariant::Maxexp,
        maxexp_eta: 4.0,
        ..PnConfig::default()
    };
    println!("maxexp eta=4      {}", fmt(&cfg.apply(&counts)?));
    Ok(())
}

fn fmt(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:+.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}
