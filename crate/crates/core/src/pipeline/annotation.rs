//! Agreement of annotators scoring competitor components on a 1-5 scale.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("component {0} has fewer than 2 scores")]
    TooFewAnnotators(String),
    #[error("line {line}: score {value:?} is not an integer from 1 to 5")]
    InvalidScore { line: u64, value: String },
    #[error("duplicate component {0}")]
    DuplicateComponent(String),
    #[error("sheet header must start with component_id, found {0:?}")]
    BadHeader(Vec<String>),
    #[error("sheet has no components")]
    Empty,
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Scores per component, one column per annotator; `None` where an
/// annotator did not score the component.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSheet {
    pub category: String,
    pub annotators: Vec<String>,
    pub rows: Vec<(String, Vec<Option<u8>>)>,
}

impl AnnotationSheet {
    /// Reads `component_id,annotator_1,..` with blank or `-` for absent.
    pub fn load(path: &Path, category: &str) -> Result<Self, AnnotationError> {
        let err = |source| AnnotationError::Csv {
            path: path.to_owned(),
            source,
        };
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(false)
            .from_path(path)
            .map_err(err)?;
        let header = r.headers().map_err(err)?.clone();
        if header.get(0) != Some("component_id") {
            return Err(AnnotationError::BadHeader(header.iter().map(str::to_owned).collect()));
        }
        let annotators: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(err)?;
            let line = rec.position().map_or(0, |p| p.line());
            let scores = rec
                .iter()
                .skip(1)
                .map(|v| match v {
                    "" | "-" => Ok(None),
                    v => v
                        .parse::<u8>()
                        .ok()
                        .filter(|s| (1..=5).contains(s))
                        .map(Some)
                        .ok_or_else(|| AnnotationError::InvalidScore {
                            line,
                            value: v.to_owned(),
                        }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((rec[0].to_owned(), scores));
        }
        Ok(Self {
            category: category.to_owned(),
            annotators,
            rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMean {
    pub id: String,
    pub mean: f64,
    pub n_scores: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub category: String,
    /// Sorted by component id (numeric ids numerically).
    pub components: Vec<ScoreMean>,
    /// Sorted by annotator name; annotators without scores are omitted.
    pub annotators: Vec<ScoreMean>,
    /// Unweighted mean of the component means.
    pub overall: f64,
}

fn id_key(id: &str) -> (Option<u64>, String) {
    (id.parse().ok(), id.to_owned())
}

fn mean(v: &[u8]) -> f64 {
    v.iter().map(|&s| f64::from(s)).sum::<f64>() / v.len() as f64
}

pub fn annotation_agreement(sheet: &AnnotationSheet) -> Result<AgreementReport, AnnotationError> {
    if sheet.rows.is_empty() {
        return Err(AnnotationError::Empty);
    }
    let mut components: BTreeMap<(Option<u64>, String), Vec<u8>> = BTreeMap::new();
    let mut annotators: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for (id, scores) in &sheet.rows {
        let present: Vec<u8> = scores.iter().flatten().copied().collect();
        if present.len() < 2 {
            return Err(AnnotationError::TooFewAnnotators(id.clone()));
        }
        if components.insert(id_key(id), present).is_some() {
            return Err(AnnotationError::DuplicateComponent(id.clone()));
        }
        for (name, s) in sheet.annotators.iter().zip(scores) {
            if let Some(s) = s {
                annotators.entry(name).or_default().push(*s);
            }
        }
    }
    let components: Vec<ScoreMean> = components
        .into_iter()
        .map(|((_, id), s)| ScoreMean {
            id,
            mean: mean(&s),
            n_scores: s.len(),
        })
        .collect();
    let overall = components.iter().map(|c| c.mean).sum::<f64>() / components.len() as f64;
    Ok(AgreementReport {
        category: sheet.category.clone(),
        components,
        annotators: annotators
            .into_iter()
            .map(|(name, s)| ScoreMean {
                id: name.to_owned(),
                mean: mean(&s),
                n_scores: s.len(),
            })
            .collect(),
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn sheet(rows: &[(&str, [Option<u8>; 3])]) -> AnnotationSheet {
        AnnotationSheet {
            category: "overall facility level".into(),
            annotators: vec!["annotator_1".into(), "annotator_2".into(), "annotator_3".into()],
            rows: rows.iter().map(|(id, s)| ((*id).to_owned(), s.to_vec())).collect(),
        }
    }

    #[test]
    fn worked_rows() {
        let r = annotation_agreement(&sheet(&[
            ("1", [Some(4), Some(3), None]),
            ("2", [Some(3), Some(2), Some(3)]),
            ("3", [None, Some(5), Some(4)]),
        ]))
        .unwrap();
        let means: Vec<String> = r.components.iter().map(|c| format!("{:.2}", c.mean)).collect();
        assert_eq!(means, vec!["3.50", "2.67", "4.50"]);
        assert_eq!(r.annotators[0].mean, 3.5);
        assert_eq!(r.annotators[1].mean, 10.0 / 3.0);
        assert!((r.overall - (3.5 + 8.0 / 3.0 + 4.5) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_fives() {
        let r = annotation_agreement(&sheet(&[("a", [Some(5); 3]), ("b", [Some(5), Some(5), None])])).unwrap();
        assert_eq!(r.overall, 5.0);
    }

    #[test]
    fn single_score_rejected() {
        assert!(matches!(
            annotation_agreement(&sheet(&[("7", [Some(4), None, None])])),
            Err(AnnotationError::TooFewAnnotators(id)) if id == "7"
        ));
    }

    #[test]
    fn order_invariant() {
        let a = sheet(&[("1", [Some(4), Some(3), None]), ("2", [Some(3), Some(2), Some(3)])]);
        let mut b = sheet(&[("2", [Some(3), Some(3), Some(2)]), ("1", [Some(4), None, Some(3)])]);
        b.annotators = vec!["annotator_1".into(), "annotator_3".into(), "annotator_2".into()];
        assert_eq!(annotation_agreement(&a).unwrap(), annotation_agreement(&b).unwrap());
    }

    #[test]
    fn csv_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("annotation_sheet.csv");
        let mut f = std::fs::File::create(&p).unwrap();
        writeln!(f, "component_id,annotator_1,annotator_2,annotator_3\n1,4,3,\n2,3,2,3\n3,-,5,4").unwrap();
        let s = AnnotationSheet::load(&p, "service line level").unwrap();
        assert_eq!(s.rows[0].1, vec![Some(4), Some(3), None]);
        assert_eq!(s.rows[2].1, vec![None, Some(5), Some(4)]);

        std::fs::write(&p, "component_id,annotator_1,annotator_2\n1,6,3\n").unwrap();
        assert!(matches!(AnnotationSheet::load(&p, "x"), Err(AnnotationError::InvalidScore { line: 2, .. })));
        std::fs::write(&p, "component_id,annotator_1,annotator_2\n1,2.5,3\n").unwrap();
        assert!(matches!(AnnotationSheet::load(&p, "x"), Err(AnnotationError::InvalidScore { .. })));
    }
}
