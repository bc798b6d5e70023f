use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_xy, RegressionError};

/// Ridge term added to the standardized Gram matrix when it is singular.
pub const RIDGE_LAMBDA: f64 = 1e-8;
const PIVOT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Ridge penalty used when the normal equations were singular.
    #[serde(default)]
    pub ridge: Option<f64>,
    pub cap_lo: f64,
    pub cap_hi: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Ordinary least squares via the normal equations.
///
/// Columns are centred and scaled to unit norm first, so the Gram matrix is
/// a correlation matrix. If its Cholesky factor has a pivot below 1e-10 the
/// system is solved again with [`RIDGE_LAMBDA`] on the diagonal. Constant
/// columns get a zero coefficient.
pub fn fit_linear(feature_names: &[String], x: &[Vec<f64>], y: &[f64]) -> Result<LinearModel, RegressionError> {
    let d = check_xy(x, y)?;
    if feature_names.len() != d {
        return Err(RegressionError::SchemaMismatch {
            expected: feature_names.len(),
            found: d,
        });
    }
    let n = x.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let norms: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>().sqrt())
        .collect();
    let active: Vec<usize> = (0..d).filter(|&j| norms[j] > 0.0).collect();

    let mut coefficients = vec![0.0; d];
    let mut ridge = None;
    if !active.is_empty() {
        let k = active.len();
        let z = DMatrix::from_fn(n, k, |i, c| {
            let j = active[c];
            (x[i][j] - means[j]) / norms[j]
        });
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let gram = z.transpose() * &z;
        let rhs = z.transpose() * yc;
        let solve = |g: DMatrix<f64>| {
            g.cholesky().and_then(|c| {
                let pivots_ok = c.l_dirty().diagonal().iter().all(|p| p * p > PIVOT_FLOOR);
                pivots_ok.then(|| c.solve(&rhs))
            })
        };
        let beta = match solve(gram.clone()) {
            Some(b) => b,
            None => {
                log::debug!("normal equations singular; adding ridge {RIDGE_LAMBDA}");
                ridge = Some(RIDGE_LAMBDA);
                let g = gram + DMatrix::identity(k, k) * RIDGE_LAMBDA;
                g.cholesky()
                    .map(|c| c.solve(&rhs))
                    .ok_or_else(|| RegressionError::InvalidParams("ridge system not positive definite".into()))?
            }
        };
        for (c, &j) in active.iter().enumerate() {
            coefficients[j] = beta[c] / norms[j];
        }
    }
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    Ok(LinearModel {
        feature_names: feature_names.to_vec(),
        coefficients,
        intercept,
        ridge,
        cap_lo: 2.0,
        cap_hi: 99.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("f{j}")).collect()
    }

    #[test]
    fn exact_line() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.7]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let m = fit_linear(&names(1), &x, &y).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((m.intercept - 1.0).abs() < 1e-10);
        assert_eq!(m.ridge, None);
    }

    #[test]
    fn constant_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random(), rng.random()]).collect();
        let m = fit_linear(&names(2), &x, &[7.0; 20]).unwrap();
        assert!((m.intercept - 7.0).abs() < 1e-10);
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-10));
    }

    #[test]
    fn duplicated_column_matches_deduplicated_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]).collect();
        let y: Vec<f64> = base.iter().map(|r| 3.0 * r[0] - r[1] + rng.random_range(-0.5..0.5)).collect();
        let dup: Vec<Vec<f64>> = base.iter().map(|r| vec![r[0], r[1], r[0]]).collect();
        let oracle = fit_linear(&names(2), &base, &y).unwrap();
        let m = fit_linear(&names(3), &dup, &y).unwrap();
        assert_eq!(m.ridge, Some(RIDGE_LAMBDA));
        assert!(m.coefficients.iter().all(|c| c.is_finite()));
        for (a, b) in base.iter().zip(&dup) {
            assert!((oracle.predict_row(a) - m.predict_row(b)).abs() < 1e-6);
        }
    }

    #[test]
    fn fewer_rows_than_features_still_fits() {
        let x = vec![vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.0]];
        let m = fit_linear(&names(3), &x, &[5.0, 6.0]).unwrap();
        assert!(m.coefficients.iter().all(|c| c.is_finite()));
        assert!((m.predict_row(&x[0]) - 5.0).abs() < 1e-4);
    }
}
