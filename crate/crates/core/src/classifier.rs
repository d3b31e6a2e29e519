//! Closed-form ridge regression onto one-hot labels, used as the cheap
//! stand-in for per-stream SVMs when setting stream accuracies and scoring β.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeClassifier {
    dim: usize,
    classes: usize,
    /// `(dim + 1) × classes`, bias row last.
    weights: DMatrix<f64>,
}

impl RidgeClassifier {
    pub fn fit(features: &[&[f64]], labels: &[usize], classes: usize, lambda: f64) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Empty("ridge fit needs at least one sample".into()));
        }
        check_len("ridge labels", features.len(), labels.len())?;
        if classes == 0 {
            return Err(Error::Argument("ridge fit needs at least one class".into()));
        }
        if !(lambda > 0.0) {
            return Err(Error::Argument(format!(
                "ridge lambda {lambda} must be positive"
            )));
        }
        let dim = features[0].len();
        let n = features.len();
        let mut x = DMatrix::zeros(n, dim + 1);
        let mut y = DMatrix::zeros(n, classes);
        for (i, (f, &l)) in features.iter().zip(labels).enumerate() {
            check_len("ridge feature", dim, f.len())?;
            if l >= classes {
                return Err(Error::InputRange(format!("label {l} >= {classes} classes")));
            }
            for (j, v) in f.iter().enumerate() {
                x[(i, j)] = *v;
            }
            x[(i, dim)] = 1.0;
            y[(i, l)] = 1.0;
        }
        let mut gram = x.transpose() * &x;
        for j in 0..dim {
            gram[(j, j)] += lambda;
        }
        // keep the bias identifiable without shrinking it
        gram[(dim, dim)] += 1e-9;
        let rhs = x.transpose() * y;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numeric("ridge system is not positive definite".into()))?;
        Ok(Self {
            dim,
            classes,
            weights: chol.solve(&rhs),
        })
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("ridge input", self.dim, x.len())?;
        let mut v = DVector::from_column_slice(x).push(1.0);
        v = self.weights.transpose() * v;
        Ok(v.iter().copied().collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }

    pub fn accuracy(&self, features: &[&[f64]], labels: &[usize]) -> Result<f64> {
        check_len("ridge labels", features.len(), labels.len())?;
        if features.is_empty() {
            return Err(Error::Empty("no samples to score".into()));
        }
        let mut hits = 0usize;
        for (f, &l) in features.iter().zip(labels) {
            if self.predict(f)? == l {
                hits += 1;
            }
        }
        Ok(hits as f64 / features.len() as f64)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Fits on `(train_x, train_y)` and reports accuracy on `(val_x, val_y)`.
pub fn holdout_accuracy(
    train_x: &[&[f64]],
    train_y: &[usize],
    val_x: &[&[f64]],
    val_y: &[usize],
    classes: usize,
    lambda: f64,
) -> Result<f64> {
    RidgeClassifier::fit(train_x, train_y, classes, lambda)?.accuracy(val_x, val_y)
}
