use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExplainError, FeatureGroupMap, ShapMatrix};
use crate::data::{FacilityId, FeatureRow, MonthYear};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregateLevel {
    #[default]
    #[serde(rename = "facility")]
    Facility,
    #[serde(rename = "facility-month")]
    FacilityMonth,
}

impl std::str::FromStr for AggregateLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "facility" => Ok(Self::Facility),
            "facility-month" | "facility_month" => Ok(Self::FacilityMonth),
            other => Err(format!("unknown level {other:?}; expected facility or facility-month")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScopeKey {
    pub facility: FacilityId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub month: Option<MonthYear>,
}

/// Mean |phi| per scope (facility or facility-month) and column (feature or
/// group). Scopes are sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedShap {
    pub level: AggregateLevel,
    pub columns: Vec<String>,
    pub scopes: Vec<ScopeKey>,
    pub scores: Vec<Vec<f64>>,
}

/// Averages |phi| over the rows of each scope. With `groups`, a group's
/// score is the sum of its members' mean |phi|.
pub fn aggregate_shap(
    shap: &ShapMatrix,
    rows: &[FeatureRow],
    groups: Option<&FeatureGroupMap>,
    level: AggregateLevel,
) -> Result<AggregatedShap, ExplainError> {
    if shap.values.len() != rows.len() {
        return Err(ExplainError::AlignmentMismatch {
            expected: rows.len(),
            found: shap.values.len(),
        });
    }
    let d = shap.feature_names.len();
    let mut acc: BTreeMap<ScopeKey, (Vec<f64>, usize)> = BTreeMap::new();
    for (row, phi) in rows.iter().zip(&shap.values) {
        if phi.len() != d {
            return Err(ExplainError::SchemaMismatch { expected: d, found: phi.len() });
        }
        let key = ScopeKey {
            facility: row.facility_id.clone(),
            month: (level == AggregateLevel::FacilityMonth).then_some(row.month),
        };
        let e = acc.entry(key).or_insert_with(|| (vec![0.0; d], 0));
        for (s, v) in e.0.iter_mut().zip(phi) {
            *s += v.abs();
        }
        e.1 += 1;
    }
    let (columns, owner) = match groups {
        Some(g) => g.columns(&shap.feature_names),
        None => (shap.feature_names.clone(), (0..d).collect()),
    };
    let mut scopes = Vec::with_capacity(acc.len());
    let mut scores = Vec::with_capacity(acc.len());
    for (key, (sums, n)) in acc {
        let mut out = vec![0.0; columns.len()];
        for (j, s) in sums.iter().enumerate() {
            out[owner[j]] += s / n as f64;
        }
        scopes.push(key);
        scores.push(out);
    }
    Ok(AggregatedShap {
        level,
        columns,
        scopes,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Driver {
    pub rank: usize,
    pub name: String,
    pub mean_abs_shap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverReport {
    pub facility: FacilityId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub month: Option<MonthYear>,
    pub drivers: Vec<Driver>,
}

/// The `k` highest-scoring columns per scope, ties broken alphabetically.
pub fn top_k_drivers(agg: &AggregatedShap, k: usize) -> Vec<DriverReport> {
    agg.scopes
        .iter()
        .zip(&agg.scores)
        .map(|(key, scores)| {
            let mut order: Vec<usize> = (0..agg.columns.len()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| agg.columns[a].cmp(&agg.columns[b])));
            DriverReport {
                facility: key.facility.clone(),
                month: key.month,
                drivers: order
                    .into_iter()
                    .take(k)
                    .enumerate()
                    .map(|(r, j)| Driver {
                        rank: r + 1,
                        name: agg.columns[j].clone(),
                        mean_abs_shap: scores[j],
                    })
                    .collect(),
            }
        })
        .collect()
}
