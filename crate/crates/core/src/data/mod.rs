//! Encounter facts, facility profiles, the synthetic generator, feature
//! engineering and market-share targets.

mod features;
mod month;
mod schema;
mod synth;
mod target;

use std::path::PathBuf;

use thiserror::Error;

pub use features::{engineer_features, FeatureRow, FeatureTable, DEFAULT_TOP_N};
pub use month::MonthYear;
pub use schema::{
    load_facts, load_profiles, write_facts, write_profiles, BaseClass, EncounterFact, FacilityId,
    FacilityProfile, FactTable, FACT_COLUMNS, PROFILE_COLUMNS,
};
pub use synth::{
    generate_synthetic, load_ground_truth, write_ground_truth, SyntheticConfig, SyntheticData,
    AGE_BUCKETS, PAYOR_GROUPS, SERVICE_LINES,
};
pub use target::{compute_market_share, Denominator, ShareTargets};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate key at line {line} (first seen at line {first})")]
    DuplicateKey { line: u64, first: u64 },
    #[error("invalid synthetic config: {0}")]
    ConfigInvalid(String),
    #[error("no encounter facts")]
    EmptyFacts,
    #[error("facts reference facility {0} which has no profile")]
    UnknownFacility(FacilityId),
    #[error("facility {0} belongs to no component")]
    Unassigned(FacilityId),
    #[error("facility {0} belongs to more than one component")]
    MultipleComponents(FacilityId),
}
