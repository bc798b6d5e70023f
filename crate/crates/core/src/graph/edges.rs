use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{haversine_km, partial_correlation, GeoPoint, GraphError};
use crate::data::{FacilityId, FacilityProfile, FactTable, MonthYear};
use crate::exec;

/// A graph is built for all service lines together and for each one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Overall,
    ServiceLine(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Overall => f.write_str("OVERALL"),
            Scope::ServiceLine(s) => f.write_str(s),
        }
    }
}

impl Serialize for Scope {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == "OVERALL" { Scope::Overall } else { Scope::ServiceLine(s) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub rho_hi: f64,
    pub rho_lo: f64,
    pub max_km: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rho_hi: 0.8,
            rho_lo: -0.7,
            max_km: 100.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.rho_lo < 0.0 && 0.0 < self.rho_hi) {
            return Err(GraphError::InvalidThresholds(format!(
                "need rho_lo < 0 < rho_hi, got {} and {}",
                self.rho_lo, self.rho_hi
            )));
        }
        if !(self.max_km >= 0.0) {
            return Err(GraphError::InvalidThresholds(format!("max_km {} must be >= 0", self.max_km)));
        }
        Ok(())
    }

    /// Correlation strong enough to form an edge.
    pub fn passes(&self, rho: f64) -> bool {
        rho > self.rho_hi || rho < self.rho_lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEdge {
    pub a: FacilityId,
    pub b: FacilityId,
    pub scope: Scope,
    pub rho: f64,
    pub distance_km: f64,
}

/// Which series are held fixed when correlating a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSet {
    /// Plain Pearson correlation.
    None,
    /// Up to `max` other in-scope facilities within `max_km` of either
    /// endpoint, largest total volume first.
    Nearby { max: usize },
}

impl Default for ControlSet {
    fn default() -> Self {
        ControlSet::Nearby { max: 3 }
    }
}

/// Facility pairs that must never be linked (referral partners and the like).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExclusionList {
    pairs: BTreeSet<(FacilityId, FacilityId)>,
}

fn ordered(a: &FacilityId, b: &FacilityId) -> (FacilityId, FacilityId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl ExclusionList {
    pub fn insert(&mut self, a: &FacilityId, b: &FacilityId) {
        self.pairs.insert(ordered(a, b));
    }

    pub fn contains(&self, a: &FacilityId, b: &FacilityId) -> bool {
        self.pairs.contains(&ordered(a, b))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Two-column CSV of facility ids; an optional `facility_a,facility_b`
    /// header and `#` comment lines are skipped.
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let err = |source| GraphError::Csv {
            path: path.to_owned(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(err)?;
        let mut out = Self::default();
        for rec in reader.records() {
            let rec = rec.map_err(err)?;
            if rec.len() < 2 || (&rec[0] == "facility_a" && &rec[1] == "facility_b") {
                continue;
            }
            out.insert(&FacilityId::new(&rec[0]), &FacilityId::new(&rec[1]));
        }
        Ok(out)
    }
}

/// Monthly encounter series of every in-scope facility over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeSeries {
    pub scope: Scope,
    pub months: Vec<MonthYear>,
    pub series: BTreeMap<FacilityId, Vec<f64>>,
}

impl ScopeSeries {
    pub fn total(&self, id: &FacilityId) -> f64 {
        self.series.get(id).map_or(0.0, |s| s.iter().sum())
    }
}

/// Builds the OVERALL series and one per service line over `months`.
/// A facility is in scope when it has at least one encounter there.
pub fn scope_series(facts: &FactTable, months: &[MonthYear]) -> Vec<ScopeSeries> {
    let pos: HashMap<MonthYear, usize> = months.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    let mut by_scope: BTreeMap<Scope, BTreeMap<FacilityId, Vec<f64>>> = BTreeMap::new();
    for f in &facts.facts {
        let Some(&t) = pos.get(&f.month) else { continue };
        for scope in [Scope::Overall, Scope::ServiceLine(f.service_line.clone())] {
            let s = by_scope
                .entry(scope)
                .or_default()
                .entry(f.facility_id.clone())
                .or_insert_with(|| vec![0.0; months.len()]);
            s[t] += f.count as f64;
        }
    }
    by_scope
        .into_iter()
        .map(|(scope, mut series)| {
            series.retain(|_, s| s.iter().any(|&v| v > 0.0));
            ScopeSeries {
                scope,
                months: months.to_vec(),
                series,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeReport {
    pub edges: Vec<CorrelationEdge>,
    /// Candidate pairs whose correlation was undefined.
    pub skipped: Vec<(FacilityId, FacilityId, String)>,
}

/// Correlates every eligible facility pair of one scope and keeps the pairs
/// whose partial correlation clears the thresholds.
///
/// A pair is eligible when the facilities are at most `max_km` apart, belong
/// to different systems and are not excluded. Output is in sorted-pair order.
pub fn correlation_edges(
    scope: &ScopeSeries,
    profiles: &[FacilityProfile],
    thresholds: &Thresholds,
    controls: ControlSet,
    exclusions: &ExclusionList,
) -> Result<EdgeReport, GraphError> {
    thresholds.validate()?;
    let by_id: HashMap<&FacilityId, &FacilityProfile> = profiles.iter().map(|p| (&p.facility_id, p)).collect();
    let ids: Vec<&FacilityId> = scope.series.keys().collect();
    let mut points = Vec::with_capacity(ids.len());
    for id in &ids {
        let p = by_id.get(id).ok_or_else(|| GraphError::UnknownFacility((*id).clone()))?;
        points.push(GeoPoint::new(p.latitude, p.longitude).ok_or_else(|| GraphError::InvalidCoordinates((*id).clone()))?);
    }
    let n = ids.len();
    let dist: Vec<Vec<f64>> = exec::map_range(n, |i| (0..n).map(|j| haversine_km(points[i], points[j])).collect());

    // Controls are ranked by volume once per scope.
    let mut by_volume: Vec<usize> = (0..n).collect();
    let totals: Vec<f64> = ids.iter().map(|id| scope.total(id)).collect();
    by_volume.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then_with(|| ids[a].cmp(ids[b])));

    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let eligible = dist[i][j] <= thresholds.max_km
                && by_id[ids[i]].system_id != by_id[ids[j]].system_id
                && !exclusions.contains(ids[i], ids[j]);
            if eligible {
                pairs.push((i, j));
            }
        }
    }

    let months = scope.months.len();
    let results = exec::map_slice(&pairs, |&(i, j)| {
        let control_idx: Vec<usize> = match controls {
            ControlSet::None => Vec::new(),
            ControlSet::Nearby { max } => by_volume
                .iter()
                .copied()
                .filter(|&k| k != i && k != j)
                .filter(|&k| dist[i][k] <= thresholds.max_km || dist[j][k] <= thresholds.max_km)
                .take(max.min(months.saturating_sub(3)))
                .collect(),
        };
        let z: Vec<&[f64]> = control_idx.iter().map(|&k| scope.series[ids[k]].as_slice()).collect();
        partial_correlation(&scope.series[ids[i]], &scope.series[ids[j]], &z)
    });

    let mut report = EdgeReport::default();
    for (&(i, j), res) in pairs.iter().zip(results) {
        match res {
            Ok(rho) if thresholds.passes(rho) => report.edges.push(CorrelationEdge {
                a: ids[i].clone(),
                b: ids[j].clone(),
                scope: scope.scope.clone(),
                rho,
                distance_km: dist[i][j],
            }),
            Ok(_) => {}
            Err(e) => {
                log::debug!("{}: skipping {}-{}: {e}", scope.scope, ids[i], ids[j]);
                report.skipped.push((ids[i].clone(), ids[j].clone(), e.to_string()));
            }
        }
    }
    Ok(report)
}
