use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fit_forest, fit_gbm, fit_linear, ForestModel, HyperParams, LinearModel, RegressionError};
use crate::exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Lr,
    Rf,
    Gbm,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Lr, Algo::Rf, Algo::Gbm];

    /// Report label.
    pub fn label(self) -> &'static str {
        match self {
            Algo::Lr => "LR",
            Algo::Rf => "RF",
            Algo::Gbm => "GBM (XGB-analog)",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Algo::Lr => "lr",
            Algo::Rf => "rf",
            Algo::Gbm => "gbm",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(Algo::Lr),
            "rf" => Ok(Algo::Rf),
            "gbm" | "xgb" => Ok(Algo::Gbm),
            other => Err(format!("unknown algorithm {other:?}; expected lr, rf or gbm")),
        }
    }
}

/// A trained regressor. Serialized with a `"type"` tag: `linear` or `forest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Forest(ForestModel),
}

impl Model {
    pub fn feature_names(&self) -> &[String] {
        match self {
            Model::Linear(m) => &m.feature_names,
            Model::Forest(m) => &m.feature_names,
        }
    }

    pub fn caps(&self) -> (f64, f64) {
        match self {
            Model::Linear(m) => (m.cap_lo, m.cap_hi),
            Model::Forest(m) => (m.params.cap_lo, m.params.cap_hi),
        }
    }

    pub fn raw_predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.predict_row(x),
            Model::Forest(m) => m.raw_predict_row(x),
        }
    }

    /// Errors unless `names` equals the training feature list.
    pub fn check_names(&self, names: &[String]) -> Result<(), RegressionError> {
        let own = self.feature_names();
        if own.len() != names.len() {
            return Err(RegressionError::SchemaMismatch {
                expected: own.len(),
                found: names.len(),
            });
        }
        match own.iter().zip(names).position(|(a, b)| a != b) {
            Some(i) => Err(RegressionError::FeatureNameMismatch(i)),
            None => Ok(()),
        }
    }

    fn check_rows(&self, x: &[Vec<f64>]) -> Result<(), RegressionError> {
        let d = self.feature_names().len();
        match x.iter().find(|r| r.len() != d) {
            Some(r) => Err(RegressionError::SchemaMismatch {
                expected: d,
                found: r.len(),
            }),
            None => Ok(()),
        }
    }

    /// Uncapped predictions.
    pub fn predict_raw(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, RegressionError> {
        self.check_rows(x)?;
        Ok(exec::map_slice(x, |r| self.raw_predict_row(r)))
    }

    /// Predictions clamped to `[cap_lo, cap_hi]`.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, RegressionError> {
        let (lo, hi) = self.caps();
        Ok(self.predict_raw(x)?.into_iter().map(|v| v.clamp(lo, hi)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn save(&self, path: &Path) -> Result<(), RegressionError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| RegressionError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RegressionError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegressionError::Io {
            path: path.to_owned(),
            source,
        })?;
        let model: Model = serde_json::from_str(&text).map_err(|source| RegressionError::Json {
            path: path.to_owned(),
            source,
        })?;
        match &model {
            Model::Forest(f) => f.validate()?,
            Model::Linear(l) if l.coefficients.len() != l.feature_names.len() => {
                return Err(RegressionError::MalformedModel("coefficient count differs from feature count".into()))
            }
            Model::Linear(_) => {}
        }
        Ok(model)
    }
}

/// Fits `algo` with `params`. The linear model only uses the caps.
pub fn fit_model(
    algo: Algo,
    feature_names: &[String],
    x: &[Vec<f64>],
    y: &[f64],
    params: &HyperParams,
    seed: u64,
) -> Result<Model, RegressionError> {
    Ok(match algo {
        Algo::Lr => {
            params.validate()?;
            let mut m = fit_linear(feature_names, x, y)?;
            m.cap_lo = params.cap_lo;
            m.cap_hi = params.cap_hi;
            Model::Linear(m)
        }
        Algo::Rf => Model::Forest(fit_forest(feature_names, x, y, params, seed)?),
        Algo::Gbm => Model::Forest(fit_gbm(feature_names, x, y, params, seed)?),
    })
}

/// Per-feature importance normalized to sum to 1. Forests use the total SSE
/// reduction of the splits on each feature; the linear model uses
/// `|coefficient|`. A model without any split scores all zeros.
pub fn impurity_feature_importance(model: &Model) -> Result<Vec<f64>, RegressionError> {
    let raw = match model {
        Model::Linear(m) => m.coefficients.iter().map(|c| c.abs()).collect::<Vec<_>>(),
        Model::Forest(f) => {
            if f.trees.is_empty() {
                return Err(RegressionError::UntrainedModel);
            }
            let mut s = vec![0.0; f.feature_names.len()];
            for t in &f.trees {
                for n in &t.nodes {
                    if let Some(sp) = n.split {
                        s[sp.feature_index] += sp.gain.max(0.0);
                    }
                }
            }
            s
        }
    };
    let total: f64 = raw.iter().sum();
    Ok(if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        raw
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{ForestKind, Node, Split, Tree};

    fn stub(value_left: f64, value_right: f64) -> Model {
        let tree = Tree {
            nodes: vec![
                Node {
                    value: 0.5 * (value_left + value_right),
                    cover: Some(2.0),
                    split: Some(Split {
                        feature_index: 1,
                        threshold: 0.0,
                        left: 1,
                        right: 2,
                        gain: 3.0,
                    }),
                },
                Node { value: value_left, cover: Some(1.0), split: None },
                Node { value: value_right, cover: Some(1.0), split: None },
            ],
        };
        Model::Forest(ForestModel {
            kind: ForestKind::Bagged,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            params: HyperParams::default(),
            seed: 0,
            trees: vec![tree],
        })
    }

    #[test]
    fn capping_at_prediction_time() {
        let m = stub(0.5, 120.0);
        let p = m.predict(&[vec![0.0, -1.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(p, vec![2.0, 99.0]);
        let raw = m.predict_raw(&[vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(raw, vec![120.0]);
        assert_eq!(stub(50.0, 50.0).predict(&[vec![0.0; 3]]).unwrap(), vec![50.0]);
    }

    #[test]
    fn schema_checked() {
        let m = stub(1.0, 2.0);
        assert!(matches!(m.predict(&[vec![0.0]]), Err(RegressionError::SchemaMismatch { .. })));
        assert!(matches!(
            m.check_names(&["a".into(), "x".into(), "c".into()]),
            Err(RegressionError::FeatureNameMismatch(1))
        ));
    }

    #[test]
    fn single_split_importance_is_one() {
        let imp = impurity_feature_importance(&stub(1.0, 2.0)).unwrap();
        assert_eq!(imp, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn linear_importance_from_coefficients() {
        let m = Model::Linear(LinearModel {
            feature_names: vec!["a".into(), "b".into()],
            coefficients: vec![-3.0, 1.0],
            intercept: 0.0,
            ridge: None,
            cap_lo: 2.0,
            cap_hi: 99.0,
        });
        assert_eq!(impurity_feature_importance(&m).unwrap(), vec![0.75, 0.25]);
    }

    #[test]
    fn json_round_trip_through_file() {
        let m = stub(4.0, 9.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        assert_eq!(Model::load(&path).unwrap(), m);
        std::fs::write(&path, r#"{"type":"forest","kind":{"kind":"bagged"},"feature_names":[],"params":{},"seed":0,"trees":[]}"#).unwrap();
        assert!(matches!(Model::load(&path), Err(RegressionError::UntrainedModel)));
    }

    #[test]
    fn algo_parsing() {
        assert_eq!("RF".parse::<Algo>().unwrap(), Algo::Rf);
        assert_eq!("xgb".parse::<Algo>().unwrap(), Algo::Gbm);
        assert!("svm".parse::<Algo>().is_err());
    }
}
