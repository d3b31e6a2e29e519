//! Multi-moment descriptor of a bag of feature vectors.
//!
//! For vectors `υ_ij` (detection `i` of frame `j`) with mean `μ`, the
//! descriptor concatenates
//!
//! 1. the mean direction `μ / ‖μ‖₂`,
//! 2. the `n'` leading left singular vectors of the frame-weighted centred
//!    matrix `Υ` whose columns are `(υ_ij - μ) / (J·K_j)`,
//! 3. per-coordinate skewness `κ³ / (κ²)^{3/2}`,
//! 4. per-coordinate kurtosis `κ⁴ / (κ²)²` (non-excess),
//! 5. the trace-normalised spectrum `λ² / Σλ²`, zero-padded to `d`,
//!
//! for a flat length of `d·(4 + n')`.
//!
//! Singular vectors are sign-fixed so that their largest-magnitude component
//! is positive. Ranks that are numerically zero yield zero vectors.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_finite, check_len, Error, Result};

pub const MAGIC: &[u8; 4] = b"MMD1";

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBag {
    dim: usize,
    frames: Vec<Vec<Vec<f64>>>,
}

impl FeatureBag {
    pub fn new(dim: usize, frames: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Empty("feature bag has no frames".into()));
        }
        for frame in &frames {
            for v in frame {
                check_len("feature vector", dim, v.len())?;
            }
        }
        Ok(Self { dim, frames })
    }

    /// One vector per frame (`K_j = 1`).
    pub fn from_vectors(dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(dim, vectors.into_iter().map(|v| vec![v]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Vec<Vec<f64>>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.frames.iter().flatten().map(Vec::as_slice)
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Empty("feature bag has no vectors".into()));
        }
        let mut mu = vec![0.0; self.dim];
        for v in self.vectors() {
            for (m, x) in mu.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mu {
            *m /= n as f64;
        }
        Ok(mu)
    }
}

/// How per-coordinate cumulants weight the centred vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CumulantWeighting {
    /// Plain average over all `N` vectors.
    #[default]
    Unweighted,
    /// Weights `1 / (J'·K_j)` over the `J'` non-empty frames, matching the
    /// column weights of `Υ` (renormalised to sum to one).
    FrameWeighted,
}

/// Which decomposition produces the singular vectors of `Υ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvdRoute {
    /// The `N × N` Gram matrix when `N < d`, otherwise the `d × d` scatter.
    #[default]
    Auto,
    Gram,
    Scatter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOptions {
    pub n_prime: usize,
    pub eps: f64,
    pub cumulants: CumulantWeighting,
    pub route: SvdRoute,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            n_prime: 3,
            eps: 1e-12,
            cumulants: CumulantWeighting::Unweighted,
            route: SvdRoute::Auto,
        }
    }
}

impl MomentOptions {
    pub fn with_n_prime(n_prime: usize) -> Self {
        Self {
            n_prime,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiMomentDescriptor {
    pub mean_dir: Vec<f64>,
    pub eigvecs: Vec<Vec<f64>>,
    pub skewness: Vec<f64>,
    pub kurtosis: Vec<f64>,
    pub eig_spectrum: Vec<f64>,
}

impl MultiMomentDescriptor {
    pub fn dim(&self) -> usize {
        self.mean_dir.len()
    }

    pub fn n_prime(&self) -> usize {
        self.eigvecs.len()
    }

    pub fn flat_len(&self) -> usize {
        self.dim() * (4 + self.n_prime())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        out.extend_from_slice(&self.mean_dir);
        for u in &self.eigvecs {
            out.extend_from_slice(u);
        }
        out.extend_from_slice(&self.skewness);
        out.extend_from_slice(&self.kurtosis);
        out.extend_from_slice(&self.eig_spectrum);
        out
    }

    /// `MMD1`, then `d` and `n'` as u32 LE, then the flattened blocks as f32 LE.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.n_prime() as u32).to_le_bytes())?;
        for v in self.flatten() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + 4 * self.flat_len());
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 12];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(Error::Format {
                format: "MMD1",
                msg: format!("wrong magic {:?}", &head[..4]),
            });
        }
        let d = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let mut body = vec![0u8; 4 * d * (4 + n)];
        r.read_exact(&mut body)?;
        let flat: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let mut blocks = flat.chunks_exact(d.max(1));
        let mut next = || blocks.next().map(<[f64]>::to_vec).unwrap_or_default();
        let mean_dir = next();
        let eigvecs = (0..n).map(|_| next()).collect();
        Ok(Self {
            mean_dir,
            eigvecs,
            skewness: next(),
            kurtosis: next(),
            eig_spectrum: next(),
        })
    }
}

/// Centred matrix `Υ` (`d × N`, frame-major columns): column for detection `i`
/// of frame `j` is `(υ_ij - μ) / (J·K_j)`. Empty frames add no columns but
/// still count towards `J`.
pub fn assemble_upsilon(bag: &FeatureBag, mu: &[f64]) -> Result<DMatrix<f64>> {
    check_len("mean vector", bag.dim(), mu.len())?;
    let j_total = bag.frame_count() as f64;
    let d = bag.dim();
    let mut data = Vec::with_capacity(d * bag.len());
    for frame in bag.frames() {
        if frame.is_empty() {
            continue;
        }
        let w = 1.0 / (j_total * frame.len() as f64);
        for v in frame {
            data.extend(v.iter().zip(mu).map(|(x, m)| (x - m) * w));
        }
    }
    Ok(DMatrix::from_vec(d, bag.len(), data))
}

/// Left singular vectors and squared singular values of `upsilon`, in
/// descending order. Ranks whose squared singular value is below
/// `RANK_TOLERANCE` times the largest, or below `floor`, are dropped.
pub fn left_singular(
    upsilon: &DMatrix<f64>,
    route: SvdRoute,
    floor: f64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (d, n) = upsilon.shape();
    if d == 0 || n == 0 {
        return (Vec::new(), Vec::new());
    }
    let use_gram = match route {
        SvdRoute::Auto => n < d,
        SvdRoute::Gram => true,
        SvdRoute::Scatter => false,
    };
    let gram = if use_gram {
        upsilon.transpose() * upsilon
    } else {
        upsilon * upsilon.transpose()
    };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let top = order.first().map_or(0.0, |&k| eig.eigenvalues[k]);
    let tol = (top * RANK_TOLERANCE).max(floor).max(f64::MIN_POSITIVE);

    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for k in order {
        let lambda2 = eig.eigenvalues[k];
        if lambda2 <= tol || values.len() == d.min(n) {
            break;
        }
        let col = eig.eigenvectors.column(k);
        let mut u: Vec<f64> = if use_gram {
            let uv = upsilon * col;
            let s = lambda2.sqrt();
            uv.iter().map(|x| x / s).collect()
        } else {
            col.iter().copied().collect()
        };
        fix_sign(&mut u);
        values.push(lambda2);
        vectors.push(u);
    }
    (values, vectors)
}

/// Squared Frobenius norm that centring round-off alone can put into `Υ`.
fn rounding_floor(bag: &FeatureBag) -> f64 {
    let scale = bag
        .vectors()
        .flat_map(|v| v.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let j = bag.frame_count() as f64;
    let weight_sq: f64 = bag
        .frames()
        .iter()
        .map(|f| f.len() as f64 / (j * f.len() as f64).powi(2))
        .filter(|w| w.is_finite())
        .sum();
    let unit = 16.0 * f64::EPSILON * scale;
    bag.dim() as f64 * weight_sq * unit * unit
}

/// Flips `u` so its first largest-magnitude component is positive.
pub fn fix_sign(u: &mut [f64]) {
    let mut best = 0.0;
    let mut sign = 1.0;
    for &x in u.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        for x in u.iter_mut() {
            *x = -*x;
        }
    }
}

pub fn multi_moment(bag: &FeatureBag, n_prime: usize, eps: f64) -> Result<MultiMomentDescriptor> {
    multi_moment_with(
        bag,
        &MomentOptions {
            n_prime,
            eps,
            ..MomentOptions::default()
        },
    )
}

pub fn multi_moment_with(bag: &FeatureBag, opts: &MomentOptions) -> Result<MultiMomentDescriptor> {
    if opts.n_prime == 0 {
        return Err(Error::Argument("n' must be at least 1".into()));
    }
    if !(opts.eps > 0.0) {
        return Err(Error::Argument(format!(
            "eps must be positive, got {}",
            opts.eps
        )));
    }
    if bag.is_empty() {
        return Err(Error::Empty("feature bag has no vectors".into()));
    }
    for v in bag.vectors() {
        check_finite("feature vector", v)?;
    }
    let d = bag.dim();
    let mu = bag.mean()?;

    let norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mean_dir = if norm < opts.eps {
        vec![0.0; d]
    } else {
        mu.iter().map(|x| x / norm.max(opts.eps)).collect()
    };

    let upsilon = assemble_upsilon(bag, &mu)?;
    let (lambda2, mut vectors) = left_singular(&upsilon, opts.route, rounding_floor(bag));
    vectors.truncate(opts.n_prime);
    vectors.resize(opts.n_prime, vec![0.0; d]);

    let total: f64 = lambda2.iter().sum();
    let mut eig_spectrum = vec![0.0; d];
    if total > 0.0 {
        for (s, l) in eig_spectrum.iter_mut().zip(&lambda2) {
            *s = l / total;
        }
    }

    let (k2, k3, k4) = cumulants(bag, &mu, opts.cumulants);
    let skewness = k2
        .iter()
        .zip(&k3)
        .map(|(c2, c3)| c3 / c2.max(opts.eps).powf(1.5))
        .collect();
    let kurtosis = k2
        .iter()
        .zip(&k4)
        .map(|(c2, c4)| c4 / c2.max(opts.eps).powi(2))
        .collect();

    Ok(MultiMomentDescriptor {
        mean_dir,
        eigvecs: vectors,
        skewness,
        kurtosis,
        eig_spectrum,
    })
}

/// Diagonal centred moments of order 2, 3 and 4.
fn cumulants(
    bag: &FeatureBag,
    mu: &[f64],
    weighting: CumulantWeighting,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = bag.dim();
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let nonempty = bag.frames().iter().filter(|f| !f.is_empty()).count() as f64;
    let n = bag.len() as f64;
    for frame in bag.frames() {
        let w = match weighting {
            CumulantWeighting::Unweighted => 1.0 / n,
            CumulantWeighting::FrameWeighted => 1.0 / (nonempty * frame.len() as f64),
        };
        for v in frame {
            for k in 0..d {
                let c = v[k] - mu[k];
                let c2 = c * c;
                k2[k] += w * c2;
                k3[k] += w * c2 * c;
                k4[k] += w * c2 * c2;
            }
        }
    }
    (k2, k3, k4)
}
