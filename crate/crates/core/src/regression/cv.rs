use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{design_matrix, fit_model, Algo, EvalMetrics, HyperParams, RegressionError};
use crate::data::{FeatureRow, MonthYear};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFold {
    pub fold: usize,
    pub validation_months: Vec<MonthYear>,
    pub rmse: f64,
    pub mape: f64,
}

/// Per-fold metrics plus their mean, one report per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: String,
    pub folds: Vec<CvFold>,
    pub mean: EvalMetrics,
}

/// Partitions `months` (sorted, distinct) into `k` contiguous blocks. Sizes
/// differ by at most one, larger blocks first.
pub fn kfold_blocks(months: &[MonthYear], k: usize) -> Result<Vec<Vec<MonthYear>>, RegressionError> {
    if k < 2 || months.len() < k {
        return Err(RegressionError::InsufficientMonths {
            needed: k.max(2),
            found: months.len(),
        });
    }
    let base = months.len() / k;
    let extra = months.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(months[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Blocked k-fold cross-validation over calendar months. Fold `i` validates
/// on block `i` and trains on every other month; metrics use capped
/// predictions.
pub fn kfold_cv(
    rows: &[FeatureRow],
    feature_names: &[String],
    k: usize,
    algo: Algo,
    params: &HyperParams,
    seed: u64,
) -> Result<CvReport, RegressionError> {
    let months: Vec<MonthYear> = rows.iter().map(|r| r.month).collect::<BTreeSet<_>>().into_iter().collect();
    let blocks = kfold_blocks(&months, k)?;
    let mut folds = Vec::with_capacity(k);
    for (i, block) in blocks.into_iter().enumerate() {
        let held: BTreeSet<MonthYear> = block.iter().copied().collect();
        let (valid, train): (Vec<FeatureRow>, Vec<FeatureRow>) =
            rows.iter().cloned().partition(|r| held.contains(&r.month));
        let (xt, yt) = design_matrix(&train)?;
        let (xv, yv) = design_matrix(&valid)?;
        let fold_seed = seed::derive(seed, &[seed::label("cv"), i as u64]);
        let model = fit_model(algo, feature_names, &xt, &yt, params, fold_seed)?;
        let m = EvalMetrics::compute(&yv, &model.predict(&xv)?)?;
        folds.push(CvFold {
            fold: i + 1,
            validation_months: block,
            rmse: m.rmse,
            mape: m.mape,
        });
    }
    let mean = EvalMetrics::mean(
        &folds
            .iter()
            .map(|f| EvalMetrics { rmse: f.rmse, mape: f.mape })
            .collect::<Vec<_>>(),
    );
    Ok(CvReport {
        model: algo.label().to_owned(),
        folds,
        mean,
    })
}
