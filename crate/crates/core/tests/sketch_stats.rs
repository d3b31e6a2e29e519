use momhal::rng;
use momhal::sketch::{unbiasedness_check, CountSketch};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn bucket_assignment_is_uniform() {
    let (d, dp) = (20_000, 16);
    let sk = CountSketch::new(d, dp, 4).unwrap();
    let mut counts = vec![0.0f64; dp];
    for &h in sk.hashes() {
        counts[h as usize] += 1.0;
    }
    let expected = d as f64 / dp as f64;
    let chi2: f64 = counts
        .iter()
        .map(|c| (c - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new((dp - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 1e-3, "chi2 {chi2}, p {p}");

    let plus = sk.signs().iter().filter(|&&s| s > 0).count() as f64;
    let z = (plus - d as f64 / 2.0) / (d as f64 / 4.0).sqrt();
    assert!(z.abs() < 4.0, "sign imbalance z={z}");
}

#[test]
fn sketched_inner_product_is_unbiased() {
    let mut variances = Vec::new();
    for dp in [8, 16, 32] {
        let r = unbiasedness_check(64, dp, 20_000, 1).unwrap();
        let se = (r.empirical_variance / r.trials as f64).sqrt();
        assert!(r.mean_error < 4.0 * se, "d'={dp}: {r:?}");
        assert!(
            r.empirical_variance <= 1.1 * r.variance_bound,
            "d'={dp}: {r:?}"
        );
        variances.push(r.empirical_variance);
    }
    assert!(variances.windows(2).all(|w| w[1] < w[0]), "{variances:?}");
}

proptest! {
    #[test]
    fn projection_is_linear(seed in any::<u64>(), a in -2.0f64..2.0) {
        let mut r = rng::seeded(seed);
        let sk = CountSketch::new(30, 7, seed).unwrap();
        let x = rng::normal_vec(&mut r, 30);
        let y = rng::normal_vec(&mut r, 30);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p + a * q).collect();
        let px = sk.project(&x).unwrap();
        let py = sk.project(&y).unwrap();
        let pm = sk.project(&mix).unwrap();
        for ((m, p), q) in pm.iter().zip(&px).zip(&py) {
            prop_assert!((m - p - a * q).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_is_adjoint(seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let sk = CountSketch::new(25, 6, seed).unwrap();
        let x = rng::normal_vec(&mut r, 25);
        let g = rng::normal_vec(&mut r, 6);
        let lhs: f64 = sk.project(&x).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = sk.project_transpose(&g).unwrap().iter().zip(&x).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn serialisation_round_trips(seed in any::<u64>(), d in 1usize..50, dp in 1usize..20) {
        let sk = CountSketch::new(d, dp, seed).unwrap();
        let back = CountSketch::read_from(sk.to_bytes().as_slice()).unwrap();
        prop_assert_eq!(back, sk);
    }
}
