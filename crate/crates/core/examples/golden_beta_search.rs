//! Golden-section search of β, once in one go and once per epoch.

use momhal::fusion::{self, beta_schedule, golden_section_max, BetaSearch, SearchPolicy};

fn main() -> momhal::Result<()> {
    // a stand-in for validation accuracy: prefers a moderate preference for
    // the first of three streams
    let score = |beta: f64| {
        let r = fusion::eq9_ratios(&[1.0, 0.7, 0.4], beta, 0.1).unwrap();
        -(r[0] - 0.6).powi(2)
    };
    let res = golden_section_max(score, 0.0, 50.0, 40)?;
    println!(
        "beta* = {:.6}, bracket width {:.3e}",
        res.beta_star, res.bracket.width
    );

    let mut search = BetaSearch::default();
    for epoch in 1..=16 {
        match beta_schedule(epoch) {
            SearchPolicy::Fixed(b) => println!("epoch {epoch:>2}: beta fixed at {b}"),
            SearchPolicy::GoldenStep => {
                search.step(score)?;
                let b = search.bracket;
                println!(
                    "epoch {epoch:>2}: bracket [{:.3}, {:.3}] beta {:.3}",
                    b.lo,
                    b.hi(),
                    search.beta()
                );
            }
        }
    }
    Ok(())
}
