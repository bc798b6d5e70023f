//! Market-share regressors: OLS baseline, CART, bagged random forest and
//! squared-loss gradient boosting, with time-ordered splits, blocked k-fold
//! CV, random search and impurity importance.
//!
//! Design matrices are row-major `&[Vec<f64>]`. Every model predicts through
//! [`Model::predict`], which clamps to `[cap_lo, cap_hi]`; the raw output is
//! available separately for attribution.

mod cv;
mod forest;
mod linear;
mod metrics;
mod model;
mod params;
mod search;
mod split;
mod tree;

use std::path::PathBuf;

use thiserror::Error;

pub use cv::{kfold_blocks, kfold_cv, CvFold, CvReport};
pub use forest::{fit_forest, fit_gbm, ForestKind, ForestModel};
pub use linear::{fit_linear, LinearModel, RIDGE_LAMBDA};
pub use metrics::{mape, rmse, EvalMetrics};
pub use model::{fit_model, impurity_feature_importance, Algo, Model};
pub use params::HyperParams;
pub use search::{random_search, SearchResult, SearchSpace, Trial};
pub use split::{design_matrix, time_split};
pub use tree::{fit_tree, Node, Split, Tree};

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("need {needed} distinct months, found {found}")]
    InsufficientMonths { needed: usize, found: usize },
    #[error("no training rows")]
    EmptyData,
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("feature schema mismatch: model has {expected} features, input has {found}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("feature names differ from the model's at column {0}")]
    FeatureNameMismatch(usize),
    #[error("targets and predictions differ in length")]
    LengthMismatch,
    #[error("every target is zero; MAPE undefined")]
    ZeroTarget,
    #[error("row {0} has no target")]
    MissingTarget(usize),
    #[error("search space is empty: {0}")]
    EmptySpace(String),
    #[error("model has no trees")]
    UntrainedModel,
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Checks that `x` is a non-empty rectangular matrix matching `y`.
pub(crate) fn check_xy(x: &[Vec<f64>], y: &[f64]) -> Result<usize, RegressionError> {
    if x.is_empty() {
        return Err(RegressionError::EmptyData);
    }
    if x.len() != y.len() {
        return Err(RegressionError::LengthMismatch);
    }
    let d = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(RegressionError::SchemaMismatch {
            expected: d,
            found: row.len(),
        });
    }
    Ok(d)
}
