use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FacilityGraph, GraphError, Scope};
use crate::data::{FacilityId, MonthYear};

/// Which graph neighbors count as competitors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborMode {
    #[default]
    Negative,
    All,
}

impl std::str::FromStr for NeighborMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "negative" => Ok(Self::Negative),
            "all" => Ok(Self::All),
            other => Err(format!("unknown neighbor mode {other:?}; expected negative or all")),
        }
    }
}

/// Monthly encounter totals per facility.
pub type Volumes = BTreeMap<FacilityId, BTreeMap<MonthYear, f64>>;

/// One row of the competitor list: `facility -> [(competitor, weight), ..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorAssignment {
    #[serde(rename = "facility")]
    pub facility_id: FacilityId,
    pub service_line: Scope,
    pub month: MonthYear,
    pub competitors: Vec<(FacilityId, f64)>,
}

/// Ranks each node's competitors for every month in `volumes`.
///
/// Competitors are neighbors (negative edges only, or all edges) ordered by
/// their own encounter volume that month, descending, then by id. The weight
/// is `|rho|` of the connecting edge.
pub fn extract_competitors(
    g: &FacilityGraph,
    volumes: &Volumes,
    mode: NeighborMode,
) -> Result<Vec<CompetitorAssignment>, GraphError> {
    for id in &g.nodes {
        if !volumes.contains_key(id) {
            return Err(GraphError::MissingVolume(id.clone()));
        }
    }
    let mut out = Vec::new();
    for id in &g.nodes {
        let neighbors: Vec<(&FacilityId, f64)> = g
            .neighbors(id)
            .filter(|(n, e)| *n != id && (mode == NeighborMode::All || e.rho < 0.0))
            .map(|(n, e)| (n, e.rho.abs()))
            .collect();
        for &month in volumes[id].keys() {
            let vol = |f: &FacilityId| volumes[f].get(&month).copied().unwrap_or(0.0);
            let mut ranked = neighbors.clone();
            ranked.sort_by(|a, b| vol(b.0).total_cmp(&vol(a.0)).then_with(|| a.0.cmp(b.0)));
            out.push(CompetitorAssignment {
                facility_id: id.clone(),
                service_line: g.scope.clone(),
                month,
                competitors: ranked.into_iter().map(|(n, w)| (n.clone(), w)).collect(),
            });
        }
    }
    Ok(out)
}
