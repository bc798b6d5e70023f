use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExplainError, ShapMatrix};
use crate::data::{FacilityId, FeatureRow, MonthYear};

/// One point of a beeswarm plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmRecord {
    pub feature: String,
    pub feature_value: f64,
    pub shap: f64,
    pub facility: FacilityId,
    pub month: MonthYear,
}

/// Long-format export: features ordered by global mean |phi| descending
/// (ties alphabetical), rows in input order within each feature.
pub fn beeswarm_export(shap: &ShapMatrix, rows: &[FeatureRow]) -> Result<Vec<BeeswarmRecord>, ExplainError> {
    if shap.values.len() != rows.len() {
        return Err(ExplainError::AlignmentMismatch {
            expected: rows.len(),
            found: shap.values.len(),
        });
    }
    let d = shap.feature_names.len();
    if let Some(r) = rows.iter().find(|r| r.values.len() != d) {
        return Err(ExplainError::SchemaMismatch { expected: d, found: r.values.len() });
    }
    let importance = shap.mean_abs();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        importance[b]
            .total_cmp(&importance[a])
            .then_with(|| shap.feature_names[a].cmp(&shap.feature_names[b]))
    });
    let mut out = Vec::with_capacity(d * rows.len());
    for j in order {
        for (row, phi) in rows.iter().zip(&shap.values) {
            out.push(BeeswarmRecord {
                feature: shap.feature_names[j].clone(),
                feature_value: row.values[j],
                shap: phi[j],
                facility: row.facility_id.clone(),
                month: row.month,
            });
        }
    }
    Ok(out)
}

pub fn write_beeswarm_csv(path: &Path, records: &[BeeswarmRecord]) -> Result<(), ExplainError> {
    let err = |source| ExplainError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in records {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|source| ExplainError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_beeswarm_csv(path: &Path) -> Result<Vec<BeeswarmRecord>, ExplainError> {
    let mut r = csv::Reader::from_path(path).map_err(|source| ExplainError::Csv {
        path: path.to_owned(),
        source,
    })?;
    r.deserialize()
        .map(|rec| {
            rec.map_err(|source| ExplainError::Csv {
                path: path.to_owned(),
                source,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (ShapMatrix, Vec<FeatureRow>) {
        let names = vec!["small".to_string(), "big".to_string(), "mid".to_string()];
        let rows: Vec<FeatureRow> = (1..=4)
            .map(|m| FeatureRow {
                facility_id: "F1".into(),
                month: MonthYear::new(2021, m).unwrap(),
                values: vec![m as f64, 0.1 * m as f64, 1.0 / 3.0],
                target: None,
            })
            .collect();
        let values = (1..=4)
            .map(|m| vec![0.001 * m as f64, -7.25 / m as f64, 0.3 + 1e-17 * m as f64])
            .collect();
        (ShapMatrix { feature_names: names, base_value: 1.0, values }, rows)
    }

    #[test]
    fn cardinality_and_order() {
        let (s, rows) = fixture();
        let rec = beeswarm_export(&s, &rows).unwrap();
        assert_eq!(rec.len(), 12);
        assert_eq!(rec[0].feature, "big");
        assert_eq!(rec[4].feature, "mid");
        assert_eq!(rec[8].feature, "small");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let (s, rows) = fixture();
        let rec = beeswarm_export(&s, &rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("beeswarm.csv");
        write_beeswarm_csv(&p, &rec).unwrap();
        let back = read_beeswarm_csv(&p).unwrap();
        assert_eq!(back, rec);
        for r in &back {
            let i = (r.month.month() - 1) as usize;
            let j = s.feature_names.iter().position(|f| *f == r.feature).unwrap();
            assert_eq!(r.shap.to_bits(), s.values[i][j].to_bits());
        }
    }
}
