//! Sketching preserves inner products on average; variance shrinks with d'.

use momhal::sketch::{unbiasedness_check, CountSketch};

fn main() -> momhal::Result<()> {
    let sk = CountSketch::new(12, 4, 42)?;
    let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
    println!("h = {:?}", sk.hashes());
    println!("s = {:?}", sk.signs());
    println!("P x = {:?}", sk.project(&x)?);

    for dp in [8, 16, 32, 64] {
        let r = unbiasedness_check(64, dp, 5_000, 1)?;
        println!(
            "d'={dp:<3} exact={:+.3} mean={:+.3} var={:.3} bound={:.3}",
            r.exact, r.mean, r.empirical_variance, r.variance_bound
        );
    }

    let bytes = sk.to_bytes();
    let back = CountSketch::read_from(bytes.as_slice())?;
    assert_eq!(back, sk);
    println!("CSK1 round trip: {} bytes", bytes.len());
    Ok(())
}
