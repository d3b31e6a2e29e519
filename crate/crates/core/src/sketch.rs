//! Count sketch projection.
//!
//! A sketch maps `R^d → R^d'` by sending coordinate `i` to bucket `h[i]` with
//! sign `s[i]`. As a matrix `P ∈ {-1, 0, 1}^{d'×d}` every column has exactly one
//! non-zero. Only `(h, s)` is stored. Bucket indices are zero-based here and
//! in the serialised form.
//!
//! # Binary layout (`CSK1`)
//!
//! ```text
//! offset  size     field
//! 0       4        magic "CSK1"
//! 4       4        d      (u32 LE)
//! 8       4        d'     (u32 LE)
//! 12      8        seed   (u64 LE)
//! 20      4·d      h      (u32 LE each, 0-based bucket)
//! 20+4d   d        s      (i8, +1 or -1)
//! ```

use std::io::{Read, Write};

use crate::error::{check_len, Error, Result};
use crate::rng::{self, SplitMix64};

pub const MAGIC: &[u8; 4] = b"CSK1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSketch {
    input_dim: usize,
    output_dim: usize,
    h: Vec<u32>,
    s: Vec<i8>,
    seed: u64,
}

impl CountSketch {
    /// Draws `h` uniformly from `0..d'` and `s` uniformly from `{-1, +1}` with
    /// a SplitMix64 stream seeded by `seed`: all `h` first, then all `s`.
    pub fn new(d: usize, d_prime: usize, seed: u64) -> Result<Self> {
        if d == 0 || d_prime == 0 {
            return Err(Error::Argument(format!(
                "sketch dimensions must be positive, got d={d}, d'={d_prime}"
            )));
        }
        let out = u32::try_from(d_prime)
            .map_err(|_| Error::Argument(format!("d'={d_prime} exceeds u32")))?;
        u32::try_from(d).map_err(|_| Error::Argument(format!("d={d} exceeds u32")))?;
        let mut r: SplitMix64 = rng::seeded(seed);
        let h = (0..d).map(|_| rng::below(&mut r, out)).collect();
        let s = (0..d).map(|_| rng::sign(&mut r)).collect();
        Ok(Self {
            input_dim: d,
            output_dim: d_prime,
            h,
            s,
            seed,
        })
    }

    /// Builds a sketch from explicit hashes and signs (seed recorded as given).
    pub fn from_parts(output_dim: usize, h: Vec<u32>, s: Vec<i8>, seed: u64) -> Result<Self> {
        check_len("sketch signs", h.len(), s.len())?;
        if h.is_empty() || output_dim == 0 {
            return Err(Error::Argument("sketch dimensions must be positive".into()));
        }
        if let Some(bad) = h.iter().find(|&&b| b as usize >= output_dim) {
            return Err(Error::Argument(format!(
                "bucket {bad} out of range for d'={output_dim}"
            )));
        }
        if let Some(bad) = s.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::Argument(format!("sign {bad} is not ±1")));
        }
        Ok(Self {
            input_dim: h.len(),
            output_dim,
            h,
            s,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hashes(&self) -> &[u32] {
        &self.h
    }

    pub fn signs(&self) -> &[i8] {
        &self.s
    }

    /// `out[j] = Σ_{i: h[i] = j} s[i]·ψ[i]`.
    pub fn project(&self, psi: &[f64]) -> Result<Vec<f64>> {
        check_len("sketch input", self.input_dim, psi.len())?;
        let mut out = vec![0.0; self.output_dim];
        for ((&b, &s), &p) in self.h.iter().zip(&self.s).zip(psi) {
            out[b as usize] += f64::from(s) * p;
        }
        Ok(out)
    }

    /// `Pᵀ·g`: the gradient of `⟨g, Pψ⟩` with respect to `ψ`.
    pub fn project_transpose(&self, grad: &[f64]) -> Result<Vec<f64>> {
        check_len("sketch adjoint input", self.output_dim, grad.len())?;
        Ok(self
            .h
            .iter()
            .zip(&self.s)
            .map(|(&b, &s)| f64::from(s) * grad[b as usize])
            .collect())
    }

    /// Dense `d' × d` matrix, row-major. Intended for inspection and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.input_dim]; self.output_dim];
        for (i, (&b, &s)) in self.h.iter().zip(&self.s).enumerate() {
            m[b as usize][i] = f64::from(s);
        }
        m
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.input_dim as u32).to_le_bytes())?;
        w.write_all(&(self.output_dim as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for b in &self.h {
            w.write_all(&b.to_le_bytes())?;
        }
        let signs: Vec<u8> = self.s.iter().map(|&v| v as u8).collect();
        w.write_all(&signs)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + 5 * self.input_dim);
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: String| Error::Format {
            format: "CSK1",
            msg,
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad(format!("wrong magic {magic:?}")));
        }
        let mut u4 = [0u8; 4];
        let mut u8b = [0u8; 8];
        r.read_exact(&mut u4)?;
        let d = u32::from_le_bytes(u4) as usize;
        r.read_exact(&mut u4)?;
        let d_prime = u32::from_le_bytes(u4) as usize;
        r.read_exact(&mut u8b)?;
        let seed = u64::from_le_bytes(u8b);
        let mut hbytes = vec![0u8; 4 * d];
        r.read_exact(&mut hbytes)?;
        let h = hbytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut sbytes = vec![0u8; d];
        r.read_exact(&mut sbytes)?;
        let s = sbytes.into_iter().map(|b| b as i8).collect();
        Self::from_parts(d_prime, h, s, seed).map_err(|e| bad(e.to_string()))
    }
}

/// Monte-Carlo statistics of the sketched inner product `⟨Pψ, Pψ'⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnbiasednessReport {
    pub exact: f64,
    pub mean: f64,
    /// `|mean - ⟨ψ, ψ'⟩|`.
    pub mean_error: f64,
    /// Unbiased sample variance over trials.
    pub empirical_variance: f64,
    /// `(⟨ψ,ψ'⟩² + ‖ψ‖²‖ψ'‖²) / d'`.
    pub variance_bound: f64,
    pub trials: usize,
}

impl UnbiasednessReport {
    /// Standard error of the Monte-Carlo mean implied by the variance bound.
    pub fn bound_standard_error(&self) -> f64 {
        (self.variance_bound / self.trials as f64).sqrt()
    }
}

/// Draws `trials` sketches with seeds `derive_seed(seed, "trial/<k>")` and
/// measures the sketched inner product of `psi` and `psi2`.
pub fn unbiasedness_check_with(
    psi: &[f64],
    psi2: &[f64],
    d_prime: usize,
    trials: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    check_len("second vector", psi.len(), psi2.len())?;
    if trials < 1000 {
        return Err(Error::Argument(format!(
            "at least 1000 trials required, got {trials}"
        )));
    }
    let d = psi.len();
    let exact: f64 = psi.iter().zip(psi2).map(|(a, b)| a * b).sum();
    let n1: f64 = psi.iter().map(|a| a * a).sum();
    let n2: f64 = psi2.iter().map(|a| a * a).sum();

    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..trials {
        let sk = CountSketch::new(d, d_prime, rng::derive_seed(seed, &format!("trial/{k}")))?;
        let a = sk.project(psi)?;
        let b = sk.project(psi2)?;
        let v: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        // Welford
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    Ok(UnbiasednessReport {
        exact,
        mean,
        mean_error: (mean - exact).abs(),
        empirical_variance: m2 / (trials - 1) as f64,
        variance_bound: (exact * exact + n1 * n2) / d_prime as f64,
        trials,
    })
}

/// As [`unbiasedness_check_with`] on a pair of standard-normal vectors of
/// length `d` drawn from `seed`.
pub fn unbiasedness_check(
    d: usize,
    d_prime: usize,
    trials: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    if d == 0 {
        return Err(Error::Argument("d must be positive".into()));
    }
    let mut r = rng::seeded(rng::derive_seed(seed, "vectors"));
    let psi = rng::normal_vec(&mut r, d);
    let psi2 = rng::normal_vec(&mut r, d);
    unbiasedness_check_with(&psi, &psi2, d_prime, trials, seed)
}
