#![allow(dead_code)]

//! Independent reference implementations shared by the integration tests.

use momhal::moments::FeatureBag;

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns the
/// eigenvalues and the matching eigenvectors (one `Vec` per eigenpair).
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = a
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    let vectors = (0..n)
        .map(|k| v.iter().map(|row| row[k]).collect())
        .collect();
    (values, vectors)
}

fn sign_fixed(mut u: Vec<f64>) -> Vec<f64> {
    let mut best = 0.0;
    let mut sign = 1.0;
    for &x in &u {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
    u
}

/// Flattened multi-moment descriptor computed the slow way: explicit
/// `N × N` Gram eigenproblem and direct cumulant sums.
pub fn brute_descriptor(bag: &FeatureBag, n_prime: usize, eps: f64) -> Vec<f64> {
    let d = bag.dim();
    let j_total = bag.frame_count() as f64;
    let mut cols = Vec::new();
    let mut vecs = Vec::new();
    for frame in bag.frames() {
        for v in frame {
            vecs.push(v.clone());
            cols.push(1.0 / (j_total * frame.len() as f64));
        }
    }
    let n = vecs.len();
    let mu: Vec<f64> = (0..d)
        .map(|k| vecs.iter().map(|v| v[k]).sum::<f64>() / n as f64)
        .collect();
    let norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out: Vec<f64> = if norm < eps {
        vec![0.0; d]
    } else {
        mu.iter().map(|x| x / norm).collect()
    };

    let centred: Vec<Vec<f64>> = vecs
        .iter()
        .zip(&cols)
        .map(|(v, w)| v.iter().zip(&mu).map(|(x, m)| (x - m) * w).collect())
        .collect();
    let gram: Vec<Vec<f64>> = centred
        .iter()
        .map(|a| {
            centred
                .iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    let (vals, evs) = jacobi_eigen(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let top = vals[order[0]].max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&k| vals[k] > 1e-10 * top && vals[k] > 1e-24)
        .take(d.min(n))
        .collect();
    let mut eigvecs: Vec<Vec<f64>> = kept
        .iter()
        .map(|&k| {
            let s = vals[k].sqrt();
            let u: Vec<f64> = (0..d)
                .map(|r| {
                    centred
                        .iter()
                        .zip(&evs[k])
                        .map(|(c, e)| c[r] * e)
                        .sum::<f64>()
                        / s
                })
                .collect();
            sign_fixed(u)
        })
        .collect();
    eigvecs.truncate(n_prime);
    eigvecs.resize(n_prime, vec![0.0; d]);
    for u in &eigvecs {
        out.extend_from_slice(u);
    }

    let mut skew = vec![0.0; d];
    let mut kurt = vec![0.0; d];
    for k in 0..d {
        let c: Vec<f64> = vecs.iter().map(|v| v[k] - mu[k]).collect();
        let m = |p: i32| c.iter().map(|x| x.powi(p)).sum::<f64>() / n as f64;
        let k2 = m(2).max(eps);
        skew[k] = m(3) / k2.powf(1.5);
        kurt[k] = m(4) / (k2 * k2);
    }
    out.extend(skew);
    out.extend(kurt);

    let total: f64 = kept.iter().map(|&k| vals[k]).sum();
    let mut spectrum = vec![0.0; d];
    for (s, &k) in spectrum.iter_mut().zip(&kept) {
        *s = vals[k] / total;
    }
    out.extend(spectrum);
    out
}

/// Pooled group vector built straight from the weighting formulas:
/// `w' = raw / max raw`, `r = max(w'^β, ρ) / Σ`, `w = r / |G|`, then
/// `(1/|G|) Σ w_i ψ_i`.
pub fn group_pool(raw: &[f64], beta: f64, rho: f64, streams: &[Vec<f64>]) -> Vec<f64> {
    let max = raw.iter().cloned().fold(f64::MIN, f64::max);
    let floored: Vec<f64> = raw.iter().map(|w| (w / max).powf(beta).max(rho)).collect();
    let total: f64 = floored.iter().sum();
    let g = raw.len() as f64;
    let mut out = vec![0.0; streams[0].len()];
    for (f, s) in floored.iter().zip(streams) {
        let w = f / total / g;
        for (o, x) in out.iter_mut().zip(s) {
            *o += w * x / g;
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
