//! Power normalisation.
//!
//! [`maxexp`] is `1 - (1 - ψ)^η` on `[0, 1]`; [`sigme`] is its smooth, signed
//! extension `2 / (1 + exp(-η'ψ / (‖ψ‖₂ + ε'))) - 1`, which equals
//! `tanh(η'ψ / 2(‖ψ‖₂ + ε'))`. For the zero vector the denominator is `ε'`
//! and the output is exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PnVariant {
    Sigme,
    Maxexp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnConfig {
    /// SigmE slope `η'`.
    pub eta: f64,
    /// SigmE norm guard `ε'`.
    pub epsilon: f64,
    pub variant: PnVariant,
    /// MaxExp exponent `η > 1`.
    pub maxexp_eta: f64,
}

impl Default for PnConfig {
    fn default() -> Self {
        Self {
            eta: 20.0,
            epsilon: 1e-12,
            variant: PnVariant::Sigme,
            maxexp_eta: 2.0,
        }
    }
}

impl PnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Argument(format!(
                "eta' must be positive, got {}",
                self.eta
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Argument(format!(
                "epsilon' must be positive, got {}",
                self.epsilon
            )));
        }
        if self.variant == PnVariant::Maxexp && !(self.maxexp_eta > 1.0) {
            return Err(Error::Argument(format!(
                "MaxExp eta must exceed 1, got {}",
                self.maxexp_eta
            )));
        }
        Ok(())
    }

    /// Applies the configured variant.
    pub fn apply(&self, psi: &[f64]) -> Result<Vec<f64>> {
        match self.variant {
            PnVariant::Sigme => sigme(psi, self),
            PnVariant::Maxexp => maxexp(psi, self),
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sigme(psi: &[f64], cfg: &PnConfig) -> Result<Vec<f64>> {
    check_finite("sigme input", psi)?;
    let scale = cfg.eta / (l2(psi) + cfg.epsilon);
    // 2σ(a) - 1 = tanh(a/2), evaluated in the stable tanh form
    Ok(psi.iter().map(|p| (0.5 * scale * p).tanh()).collect())
}

/// Vector-Jacobian product of [`sigme`] at `psi` with `upstream`, including
/// the dependence of `‖ψ‖₂` on `ψ`.
pub fn sigme_grad(psi: &[f64], upstream: &[f64], cfg: &PnConfig) -> Result<Vec<f64>> {
    check_len("sigme_grad upstream", psi.len(), upstream.len())?;
    check_finite("sigme_grad input", psi)?;
    let norm = l2(psi);
    let denom = norm + cfg.epsilon;
    let scale = cfg.eta / denom;

    // dg/da = (1 - g²)/2 with a = scale·ψ
    let gu: Vec<f64> = psi
        .iter()
        .zip(upstream)
        .map(|(p, u)| {
            let g = (0.5 * scale * p).tanh();
            u * 0.5 * (1.0 - g * g)
        })
        .collect();

    let mut out: Vec<f64> = gu.iter().map(|v| v * scale).collect();
    if norm > 0.0 {
        let proj: f64 = gu.iter().zip(psi).map(|(v, p)| v * p).sum();
        let coef = cfg.eta * proj / (norm * denom * denom);
        for (o, p) in out.iter_mut().zip(psi) {
            *o -= coef * p;
        }
    }
    Ok(out)
}

pub fn maxexp(psi: &[f64], cfg: &PnConfig) -> Result<Vec<f64>> {
    if !(cfg.maxexp_eta > 1.0) {
        return Err(Error::Argument(format!(
            "MaxExp eta must exceed 1, got {}",
            cfg.maxexp_eta
        )));
    }
    if let Some(bad) = psi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InputRange(format!(
            "MaxExp input {bad} outside [0, 1]"
        )));
    }
    Ok(psi
        .iter()
        .map(|p| 1.0 - (1.0 - p).powf(cfg.maxexp_eta))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_vector_maps_to_zero() {
        let cfg = PnConfig::default();
        assert_eq!(sigme(&[0.0; 5], &cfg).unwrap(), vec![0.0; 5]);
        assert!(sigme(&[], &cfg).unwrap().is_empty());
    }

    #[test]
    fn odd_symmetry() {
        let cfg = PnConfig::default();
        let psi = [0.3, -1.2, 4.0, 0.0];
        let neg: Vec<f64> = psi.iter().map(|v| -v).collect();
        let a = sigme(&psi, &cfg).unwrap();
        let b = sigme(&neg, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn three_four_matches_tanh_closed_form() {
        let cfg = PnConfig::default();
        let g = sigme(&[3.0, 4.0], &cfg).unwrap();
        // ‖ψ‖ = 5, η' = 20: 2σ(12) - 1 = tanh(6), 2σ(16) - 1 = tanh(8)
        let direct = |a: f64| 2.0 / (1.0 + (-a).exp()) - 1.0;
        assert!((g[0] - 6f64.tanh()).abs() < 1e-12);
        assert!((g[1] - 8f64.tanh()).abs() < 1e-12);
        assert!((g[0] - direct(12.0)).abs() < 1e-12);
        assert!((g[1] - direct(16.0)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let cfg = PnConfig::default();
        assert!(matches!(
            sigme(&[1.0, f64::NAN], &cfg),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            sigme(&[f64::INFINITY], &cfg),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn grad_at_origin_is_diagonal() {
        let cfg = PnConfig {
            eta: 2.0,
            epsilon: 1e-3,
            ..PnConfig::default()
        };
        let g = sigme_grad(&[0.0; 4], &[1.0, 0.0, 0.0, 0.0], &cfg).unwrap();
        assert!((g[0] - cfg.eta / cfg.epsilon * 0.5).abs() < 1e-9);
        assert_eq!(&g[1..], &[0.0; 3]);
    }

    #[test]
    fn grad_is_linear_in_upstream() {
        let cfg = PnConfig::default();
        let psi = [0.2, -0.7, 0.1];
        assert_eq!(sigme_grad(&psi, &[0.0; 3], &cfg).unwrap(), vec![0.0; 3]);
        assert!(sigme_grad(&psi, &[0.0; 2], &cfg).is_err());
    }

    fn fd_jacobian_check(psi: &[f64], cfg: &PnConfig) -> f64 {
        let n = psi.len();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let analytic = sigme_grad(psi, &e, cfg).unwrap();
            for (j, a) in analytic.iter().enumerate() {
                let mut p = psi.to_vec();
                let mut m = psi.to_vec();
                p[j] += h;
                m[j] -= h;
                let fd = (sigme(&p, cfg).unwrap()[k] - sigme(&m, cfg).unwrap()[k]) / (2.0 * h);
                worst = worst.max((fd - a).abs());
            }
        }
        worst
    }

    #[test]
    fn grad_matches_central_differences() {
        let cfg = PnConfig::default();
        let mut r = rng::seeded(11);
        for _ in 0..5 {
            let psi: Vec<f64> = (0..32).map(|_| 2.0 * rng::uniform(&mut r) - 1.0).collect();
            let worst = fd_jacobian_check(&psi, &cfg);
            assert!(worst < 1e-5, "max deviation {worst}");
        }
    }

    #[test]
    fn maxexp_examples() {
        let cfg = PnConfig {
            variant: PnVariant::Maxexp,
            maxexp_eta: 2.0,
            ..PnConfig::default()
        };
        assert_eq!(
            maxexp(&[0.0, 1.0, 0.5], &cfg).unwrap(),
            vec![0.0, 1.0, 0.75]
        );
        assert_eq!(cfg.apply(&[0.5]).unwrap(), vec![0.75]);
        assert!(matches!(maxexp(&[1.5], &cfg), Err(Error::InputRange(_))));
        assert!(matches!(maxexp(&[-0.1], &cfg), Err(Error::InputRange(_))));
        let near_identity = PnConfig {
            maxexp_eta: 1.0 + 1e-9,
            ..cfg
        };
        for (p, g) in [0.1, 0.4, 0.9]
            .iter()
            .zip(maxexp(&[0.1, 0.4, 0.9], &near_identity).unwrap())
        {
            assert!((p - g).abs() < 1e-8);
        }
        let bad = PnConfig {
            maxexp_eta: 1.0,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn sigme_bounded_and_sign_preserving(psi in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let g = sigme(&psi, &PnConfig::default()).unwrap();
            for (p, v) in psi.iter().zip(&g) {
                prop_assert!(*v > -1.0 - 1e-15 && *v < 1.0 + 1e-15);
                prop_assert!(v.abs() <= 1.0);
                if *p > 0.0 { prop_assert!(*v >= 0.0); }
                if *p < 0.0 { prop_assert!(*v <= 0.0); }
            }
        }

        #[test]
        fn maxexp_dominates_identity(psi in prop::collection::vec(0.0f64..=1.0, 1..20), eta in 1.0001f64..8.0) {
            let cfg = PnConfig { variant: PnVariant::Maxexp, maxexp_eta: eta, ..PnConfig::default() };
            let g = maxexp(&psi, &cfg).unwrap();
            for (p, v) in psi.iter().zip(&g) {
                prop_assert!(*v >= *p - 1e-15);
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
