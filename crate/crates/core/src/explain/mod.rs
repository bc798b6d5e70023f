//! Attribution of market-share predictions: permutation importance,
//! brute-force interventional Shapley values, path-dependent Tree SHAP,
//! facility-level aggregation, feature groups and beeswarm export.

mod aggregate;
mod beeswarm;
mod brute;
mod groups;
mod permutation;
mod treeshap;

use std::path::PathBuf;

use thiserror::Error;

use crate::regression::RegressionError;

pub use aggregate::{aggregate_shap, top_k_drivers, AggregateLevel, AggregatedShap, Driver, DriverReport, ScopeKey};
pub use beeswarm::{beeswarm_export, read_beeswarm_csv, write_beeswarm_csv, BeeswarmRecord};
pub use brute::{brute_force_shapley, MAX_BRUTE_FORCE_FEATURES};
pub use groups::{FeatureGroupMap, DEFAULT_GROUPS, OTHER_GROUP};
pub use permutation::{permutation_importance, Metric};
pub use treeshap::{tree_shap, tree_shap_single, ShapMatrix};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("brute-force Shapley needs at most {max} features, got {found}")]
    TooManyFeatures { max: usize, found: usize },
    #[error("tree {tree} node {node} has no cover")]
    MissingCover { tree: usize, node: usize },
    #[error("attributions have {found} rows but {expected} feature rows were given")]
    AlignmentMismatch { expected: usize, found: usize },
    #[error("input has {found} features, model expects {expected}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("feature {feature:?} is in groups {first:?} and {second:?}")]
    DuplicateMember {
        feature: String,
        first: String,
        second: String,
    },
    #[error("permutation repeats must be at least 1")]
    NoRepeats,
    #[error(transparent)]
    Regression(#[from] RegressionError),
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
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path} line {line}: {reason}")]
    MalformedRow { path: PathBuf, line: u64, reason: String },
}
