//! Stagewise non-linear regression with a linear inner learner.
//!
//! Stage 1 is ridge regression on the features. Every later stage refits
//! ridge on the features plus a fixed scalar basis of the previous stage's
//! prediction, so the composition becomes non-linear while each fit stays
//! linear. A stage that would raise the training error is replaced by a
//! pass-through, keeping training error non-increasing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ridge::{fit_ridge, Standardizer};
use crate::{Error, Result};

pub const BASIS_DIMS: usize = 4;

/// `{p, p², max(p, 0)·p, ln(1 + |p|)}`.
pub fn basis(p: f64) -> [f64; BASIS_DIMS] {
    [p, p * p, p.max(0.0) * p, p.abs().ln_1p()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    /// Normalisation of the basis columns; `None` for the first stage.
    pub basis_norm: Option<Standardizer>,
    /// Weights on standardised features followed by the basis columns.
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Penalty used after regularisation retries.
    pub lambda: f64,
    /// The stage returns its input unchanged.
    pub passthrough: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagewiseRegressor {
    pub lambda: f64,
    pub x_norm: Standardizer,
    pub stages: Vec<Stage>,
    /// Training RMSE after each stage.
    pub train_rmse: Vec<f64>,
}

impl StagewiseRegressor {
    pub fn dim(&self) -> usize {
        self.x_norm.mean.len()
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Prediction for one feature row using the first `stages` stages.
    pub fn predict_row_with(&self, row: &[f64], stages: usize) -> f64 {
        assert_eq!(row.len(), self.dim(), "feature row length");
        let mut p = 0.0;
        for (k, st) in self.stages.iter().take(stages).enumerate() {
            if st.passthrough {
                continue;
            }
            let mut acc = st.bias;
            for (j, &v) in row.iter().enumerate() {
                acc += st.weights[j] * (v - self.x_norm.mean[j]) / self.x_norm.scale[j];
            }
            if k > 0 {
                let norm = st.basis_norm.as_ref().expect("basis normalisation");
                for (i, b) in basis(p).into_iter().enumerate() {
                    acc += st.weights[row.len() + i] * (b - norm.mean[i]) / norm.scale[i];
                }
            }
            p = acc;
        }
        p
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_row_with(row, self.stages.len())
    }

    /// Predictions for every row of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.predict_with(x, self.stages.len())
    }

    pub fn predict_with(&self, x: &DMatrix<f64>, stages: usize) -> Vec<f64> {
        let z = self.x_norm.apply(x);
        let mut p = DVector::zeros(x.nrows());
        for (k, st) in self.stages.iter().take(stages).enumerate() {
            if st.passthrough {
                continue;
            }
            p = stage_output(&z, &p, k, st);
        }
        p.as_slice().to_vec()
    }
}

fn basis_matrix(p: &DVector<f64>) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(p.len(), BASIS_DIMS);
    for (i, &v) in p.iter().enumerate() {
        for (j, e) in basis(v).into_iter().enumerate() {
            b[(i, j)] = e;
        }
    }
    b
}

fn augment(z: &DMatrix<f64>, extra: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = z.shape();
    let mut a = DMatrix::zeros(n, d + extra.ncols());
    a.columns_mut(0, d).copy_from(z);
    a.columns_mut(d, extra.ncols()).copy_from(extra);
    a
}

fn stage_output(z: &DMatrix<f64>, prev: &DVector<f64>, k: usize, st: &Stage) -> DVector<f64> {
    let w = DVector::from_column_slice(&st.weights);
    if k == 0 {
        return (z * w).add_scalar(st.bias);
    }
    let norm = st.basis_norm.as_ref().expect("basis normalisation");
    let a = augment(z, &norm.apply(&basis_matrix(prev)));
    (a * w).add_scalar(st.bias)
}

fn sse(p: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (p - y).norm_squared()
}

/// Fit `n_stages` stages with ridge penalty `lambda` on standardised columns.
pub fn train_stagewise(x: &DMatrix<f64>, y: &DVector<f64>, n_stages: usize, lambda: f64) -> Result<StagewiseRegressor> {
    if n_stages == 0 {
        return Err(Error::InvalidArgument("n_stages must be at least 1".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument("row count mismatch".into()));
    }
    if y.is_empty() {
        return Err(Error::EmptyData("training targets"));
    }
    if x.nrows() < 10 * x.ncols() {
        log::warn!(
            "only {} samples for {} features; fit may be poorly determined",
            x.nrows(),
            x.ncols()
        );
    }
    let x_norm = Standardizer::fit(x);
    let z = x_norm.apply(x);
    let n = y.len() as f64;

    let first = fit_ridge(&z, y, lambda)?;
    let stage = Stage {
        basis_norm: None,
        weights: first.weights.as_slice().to_vec(),
        bias: first.bias,
        lambda: first.lambda,
        passthrough: false,
    };
    let mut p = stage_output(&z, &DVector::zeros(0), 0, &stage);
    let mut err = sse(&p, y);
    let mut stages = vec![stage];
    let mut train_rmse = vec![(err / n).sqrt()];

    for k in 1..n_stages {
        let raw = basis_matrix(&p);
        let norm = Standardizer::fit(&raw);
        let a = augment(&z, &norm.apply(&raw));
        let candidate = match fit_ridge(&a, y, lambda) {
            Ok(fit) => {
                let st = Stage {
                    basis_norm: Some(norm),
                    weights: fit.weights.as_slice().to_vec(),
                    bias: fit.bias,
                    lambda: fit.lambda,
                    passthrough: false,
                };
                let q = stage_output(&z, &p, k, &st);
                let e = sse(&q, y);
                (e <= err).then_some((st, q, e))
            }
            Err(Error::Singular { .. }) => None,
            Err(e) => return Err(e),
        };
        match candidate {
            Some((st, q, e)) => {
                stages.push(st);
                p = q;
                err = e;
            }
            None => {
                log::debug!("stage {} would not reduce training error; passing through", k + 1);
                stages.push(Stage {
                    basis_norm: None,
                    weights: Vec::new(),
                    bias: 0.0,
                    lambda,
                    passthrough: true,
                });
            }
        }
        train_rmse.push((err / n).sqrt());
    }

    Ok(StagewiseRegressor {
        lambda,
        x_norm,
        stages,
        train_rmse,
    })
}
