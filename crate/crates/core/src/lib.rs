//! Competitor-pool discovery, market-share regression and Shapley attribution
//! for healthcare facilities.
//!
//! The crate is organised the way the pipeline runs:
//!
//! * [`data`] loads or synthesises encounter facts and facility profiles,
//!   engineers the modelling features and computes market-share targets.
//! * [`graph`] builds distance-filtered partial-correlation graphs per service
//!   line and extracts competitor pools from their connected components.
//! * [`regression`] trains the OLS baseline, CART, random forest and boosted
//!   trees with time-ordered splits, random search and blocked k-fold CV.
//! * [`explain`] computes permutation importance, brute-force Shapley values
//!   and path-dependent Tree SHAP, plus facility-level driver reports.
//! * [`pipeline`] stitches the stages together and writes the report bundle.
//!
//! Data-parallel loops (pairwise correlations, per-tree training, per-row
//! SHAP, permutation repeats) run on rayon when the default `parallel`
//! feature is enabled and fall back to plain iterators otherwise. Results are
//! always merged in index order, so output never depends on scheduling.

pub mod data;
pub mod exec;
pub mod explain;
pub mod graph;
pub mod pipeline;
pub mod regression;
pub mod seed;

pub use data::{
    EncounterFact, FacilityId, FacilityProfile, FeatureRow, FeatureTable, MonthYear,
    SyntheticConfig,
};
pub use graph::{CompetitorAssignment, CorrelationEdge, FacilityGraph, Scope, Thresholds};
pub use regression::{EvalMetrics, ForestModel, HyperParams, LinearModel, Model};
