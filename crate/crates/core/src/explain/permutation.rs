use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::regression::{mape, rmse, Model};
use crate::{exec, seed};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Mape,
    Rmse,
}

impl Metric {
    pub fn eval(self, y: &[f64], yhat: &[f64]) -> Result<f64, ExplainError> {
        Ok(match self {
            Metric::Mape => mape(y, yhat)?,
            Metric::Rmse => rmse(y, yhat)?,
        })
    }
}

/// Mean increase of `metric` (on capped predictions) when column `j` is
/// shuffled, for every feature. Shuffle `r` of feature `j` uses the stream
/// `(seed, j, r)`.
pub fn permutation_importance(
    model: &Model,
    x: &[Vec<f64>],
    y: &[f64],
    metric: Metric,
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>, ExplainError> {
    if repeats == 0 {
        return Err(ExplainError::NoRepeats);
    }
    let d = model.feature_names().len();
    let baseline = metric.eval(y, &model.predict(x)?)?;
    let scores = exec::try_map_range(d, |j| {
        let mut total = 0.0;
        for r in 0..repeats {
            let mut rng = seed::rng(seed, &[seed::label("permutation"), j as u64, r as u64]);
            let mut column: Vec<f64> = x.iter().map(|row| row[j]).collect();
            column.shuffle(&mut rng);
            let shuffled: Vec<Vec<f64>> = x
                .iter()
                .zip(&column)
                .map(|(row, &v)| {
                    let mut row = row.clone();
                    row[j] = v;
                    row
                })
                .collect();
            total += metric.eval(y, &model.predict(&shuffled)?)? - baseline;
        }
        Ok::<_, ExplainError>(total / repeats as f64)
    })?;
    Ok(scores)
}
