use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Columns whose spread falls below this are treated as constant.
const MIN_SCALE: f64 = 1e-12;
/// Extra attempts, each with 10× the penalty, before giving up.
const RETRIES: usize = 3;

/// Per-column affine normalisation to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            scale.push(if s > MIN_SCALE { s } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        z
    }
}

/// Ridge solution on standardised columns with an unpenalised intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub weights: DVector<f64>,
    pub bias: f64,
    /// Penalty actually used after any regularisation retries.
    pub lambda: f64,
}

/// Rejects factorisations whose pivots span more than twelve decades in
/// squared magnitude; the solve would be dominated by round-off.
fn well_conditioned(ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let diag = ch.l_dirty().diagonal();
    let max = diag.max();
    let min = diag.min();
    max > 0.0 && min * min >= 1e-12 * max * max
}

/// Minimise ‖y − b − Z w‖² + λ‖w‖² for zero-mean columns `z`.
///
/// When the normal equations are not positive definite the penalty is raised
/// tenfold up to three times before reporting [`Error::Singular`].
pub fn fit_ridge(z: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<RidgeFit> {
    if z.nrows() != y.len() {
        return Err(Error::InvalidArgument("row count mismatch".into()));
    }
    if y.is_empty() {
        return Err(Error::EmptyData("ridge targets"));
    }
    let bias = y.mean();
    let yc = y.add_scalar(-bias);
    let gram = z.tr_mul(z);
    let rhs = z.tr_mul(&yc);
    let mut lam = lambda.max(0.0);
    for attempt in 0..=RETRIES {
        if attempt > 0 {
            lam = if lam > 0.0 { lam * 10.0 } else { 1e-6 };
        }
        let mut a = gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lam;
        }
        if let Some(ch) = a.cholesky().filter(well_conditioned) {
            let w = ch.solve(&rhs);
            if w.iter().all(|v| v.is_finite()) {
                return Ok(RidgeFit {
                    weights: w,
                    bias,
                    lambda: lam,
                });
            }
        }
        log::debug!("ridge system not positive definite at lambda={lam}");
    }
    Err(Error::Singular { lambda: lam })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_centres_and_scales() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0, 5.0]);
        let s = Standardizer::fit(&x);
        let z = s.apply(&x);
        assert!(z.column(0).sum().abs() < 1e-12);
        assert!((z.column(0).norm_squared() / 4.0 - 1.0).abs() < 1e-12);
        // Constant column keeps scale 1 and becomes zero.
        assert_eq!(s.scale[1], 1.0);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_fit_without_penalty() {
        let x = DMatrix::from_row_slice(5, 1, &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![-3.0, -1.0, 1.0, 3.0, 5.0]);
        let f = fit_ridge(&x, &y, 0.0).unwrap();
        assert!((f.weights[0] - 2.0).abs() < 1e-12);
        assert!((f.bias - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_regularised() {
        // Duplicate column: rank deficient without a penalty.
        let x = DMatrix::from_row_slice(3, 2, &[-1.0, -1.0, 0.0, 0.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        let f = fit_ridge(&x, &y, 0.0).unwrap();
        assert!(f.lambda > 0.0);
        assert!((f.weights[0] - f.weights[1]).abs() < 1e-9);
    }

    #[test]
    fn hopeless_system_errors() {
        let x = DMatrix::from_element(3, 1, f64::NAN);
        let y = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        assert!(matches!(fit_ridge(&x, &y, 1.0), Err(Error::Singular { .. })));
    }
}
