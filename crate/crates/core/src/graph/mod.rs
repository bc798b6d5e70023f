//! Competitor identification: distances, partial-correlation edges,
//! per-scope facility graphs, connected components and ranked competitors.

mod competitors;
mod edges;
mod geo;
mod partial;
mod structure;

use thiserror::Error;

use crate::data::FacilityId;

pub use competitors::{extract_competitors, CompetitorAssignment, NeighborMode, Volumes};
pub use edges::{
    correlation_edges, scope_series, ControlSet, CorrelationEdge, EdgeReport, ExclusionList, Scope, ScopeSeries,
    Thresholds,
};
pub use geo::{haversine_km, GeoPoint, EARTH_RADIUS_KM};
pub use partial::partial_correlation;
pub use structure::{
    adjusted_rand_index, build_graph, connected_components, pooled_components, write_dot, EdgeAttrs, FacilityGraph,
};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("series lengths differ")]
    LengthMismatch,
    #[error("series of length {n} too short; need at least {needed}")]
    TooShort { n: usize, needed: usize },
    #[error("series has zero variance after removing controls")]
    DegenerateSeries,
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("facility {0} has invalid coordinates")]
    InvalidCoordinates(FacilityId),
    #[error("facility {0} has no profile")]
    UnknownFacility(FacilityId),
    #[error("edge {a}-{b} submitted twice with different weights ({first} vs {second})")]
    ConflictingEdge {
        a: FacilityId,
        b: FacilityId,
        first: f64,
        second: f64,
    },
    #[error("self-loop on {0}")]
    SelfLoop(FacilityId),
    #[error("edge scope {found} does not match graph scope {expected}")]
    ScopeMismatch { expected: Scope, found: Scope },
    #[error("no volume entry for facility {0}")]
    MissingVolume(FacilityId),
    #[error("{path}: {source}")]
    Csv {
        path: std::path::PathBuf,
        #[source]
        source: csv::Error,
    },
}
