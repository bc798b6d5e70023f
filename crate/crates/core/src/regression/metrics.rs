use serde::{Deserialize, Serialize};

use super::RegressionError;

/// Targets with magnitude below this are left out of MAPE.
const MAPE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
}

impl EvalMetrics {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self, RegressionError> {
        Ok(Self {
            rmse: rmse(y, yhat)?,
            mape: mape(y, yhat)?,
        })
    }

    /// Arithmetic mean of several metric rows.
    pub fn mean(rows: &[EvalMetrics]) -> Self {
        let n = rows.len() as f64;
        Self {
            rmse: rows.iter().map(|m| m.rmse).sum::<f64>() / n,
            mape: rows.iter().map(|m| m.mape).sum::<f64>() / n,
        }
    }
}

fn check(y: &[f64], yhat: &[f64]) -> Result<(), RegressionError> {
    if y.len() != yhat.len() {
        return Err(RegressionError::LengthMismatch);
    }
    if y.is_empty() {
        return Err(RegressionError::EmptyData);
    }
    Ok(())
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, RegressionError> {
    check(y, yhat)?;
    let mse = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

/// `100 * mean(|y - yhat| / |y|)` over rows with non-negligible targets.
pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64, RegressionError> {
    check(y, yhat)?;
    let (sum, n) = y
        .iter()
        .zip(yhat)
        .filter(|(a, _)| a.abs() >= MAPE_FLOOR)
        .fold((0.0, 0usize), |(s, n), (a, b)| (s + ((a - b) / a).abs(), n + 1));
    if n == 0 {
        return Err(RegressionError::ZeroTarget);
    }
    Ok(100.0 * sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap(), 1.0);
        assert!((mape(&[100.0, 50.0], &[110.0, 45.0]).unwrap() - 10.0).abs() < 1e-12);
        let m = EvalMetrics::compute(&[3.0, 4.0], &[3.0, 4.0]).unwrap();
        assert_eq!((m.rmse, m.mape), (0.0, 0.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(RegressionError::LengthMismatch)));
        assert!(matches!(mape(&[0.0, 0.0], &[1.0, 2.0]), Err(RegressionError::ZeroTarget)));
        assert!(matches!(rmse(&[], &[]), Err(RegressionError::EmptyData)));
    }

    #[test]
    fn zero_targets_skipped_in_mape() {
        assert!((mape(&[0.0, 10.0], &[5.0, 11.0]).unwrap() - 10.0).abs() < 1e-12);
    }
}
