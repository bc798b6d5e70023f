use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::data::{Denominator, SyntheticConfig, DEFAULT_TOP_N};
use crate::explain::{AggregateLevel, Metric};
use crate::graph::{ControlSet, NeighborMode, Thresholds};
use crate::regression::{Algo, HyperParams, SearchSpace};

/// Where facts and profiles come from. Exactly one source per config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    Synthetic(SyntheticConfig),
    Files {
        encounters: PathBuf,
        facilities: PathBuf,
        #[serde(default)]
        ground_truth: Option<PathBuf>,
    },
}

/// Which graphs define the pools used as market-share denominators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolGraphs {
    /// Union of the OVERALL and every service-line graph.
    #[default]
    Union,
    /// OVERALL graph only.
    Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompetitorConfig {
    pub thresholds: Thresholds,
    pub controls: ControlSet,
    pub neighbor_mode: NeighborMode,
    pub exclusions: Option<PathBuf>,
    pub pools: PoolGraphs,
    pub denominator: Denominator,
}

impl Default for CompetitorConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            controls: ControlSet::default(),
            neighbor_mode: NeighborMode::default(),
            exclusions: None,
            pools: PoolGraphs::default(),
            denominator: Denominator::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algos: Vec<Algo>,
    pub train_months: usize,
    pub test_months: usize,
    pub rf_params: HyperParams,
    pub gbm_params: HyperParams,
    /// Random-search iterations per tree model; 0 keeps the fixed params.
    pub tune_iterations: usize,
    /// Trailing months of the training window used to score search trials.
    pub validation_months: usize,
    pub search_space: SearchSpace,
    /// Blocked CV folds over all months; 0 skips CV.
    pub cv_folds: usize,
    pub permutation_repeats: usize,
    pub permutation_metric: Metric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algos: Algo::ALL.to_vec(),
            train_months: 24,
            test_months: 3,
            rf_params: HyperParams::default(),
            gbm_params: HyperParams {
                n_trees: 100,
                max_depth: Some(4),
                min_samples_leaf: 2,
                max_features_fraction: 1.0,
                bootstrap: false,
                learning_rate: 0.1,
                ..HyperParams::default()
            },
            tune_iterations: 6,
            validation_months: 3,
            search_space: SearchSpace::default(),
            cv_folds: 5,
            permutation_repeats: 3,
            permutation_metric: Metric::Mape,
        }
    }
}

impl TrainConfig {
    pub fn params_for(&self, algo: Algo) -> &HyperParams {
        match algo {
            Algo::Gbm => &self.gbm_params,
            Algo::Lr | Algo::Rf => &self.rf_params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Model to attribute; must be a tree model.
    pub algo: Algo,
    pub level: AggregateLevel,
    pub top_k: usize,
    pub groups: Option<PathBuf>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Rf,
            level: AggregateLevel::Facility,
            top_k: 15,
            groups: None,
        }
    }
}

/// One JSON document drives a run. `seed` is mandatory and seeds every
/// random choice, including the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub input: InputConfig,
    #[serde(default)]
    pub competitors: CompetitorConfig,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_top_n() -> usize {
    DEFAULT_TOP_N
}

impl PipelineConfig {
    /// Synthetic defaults with the given seed.
    pub fn synthetic(seed: u64) -> Self {
        Self {
            seed,
            input: InputConfig::Synthetic(SyntheticConfig::default()),
            competitors: CompetitorConfig::default(),
            top_n: DEFAULT_TOP_N,
            train: TrainConfig::default(),
            explain: ExplainConfig::default(),
            output_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        // Relative input paths are taken relative to the config file.
        if let Some(dir) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            if let InputConfig::Files {
                encounters,
                facilities,
                ground_truth,
            } = &mut cfg.input
            {
                fix(encounters);
                fix(facilities);
                ground_truth.iter_mut().for_each(fix);
            }
            cfg.competitors.exclusions.iter_mut().for_each(fix);
            cfg.explain.groups.iter_mut().for_each(fix);
        }
        Ok(cfg)
    }

    /// Pushes the master seed into the synthetic generator and checks
    /// cross-field constraints.
    pub fn normalized(mut self) -> Result<Self, PipelineError> {
        if let InputConfig::Synthetic(s) = &mut self.input {
            s.seed = self.seed;
            s.validate().map_err(PipelineError::Ingest)?;
        }
        self.competitors
            .thresholds
            .validate()
            .map_err(PipelineError::Competitors)?;
        let t = &self.train;
        if t.algos.is_empty() {
            return Err(PipelineError::Config("train.algos is empty".into()));
        }
        if t.tune_iterations > 0 && t.validation_months >= t.train_months {
            return Err(PipelineError::Config("validation_months must be below train_months".into()));
        }
        if self.explain.top_k == 0 {
            return Err(PipelineError::Config("explain.top_k must be at least 1".into()));
        }
        if self.explain.algo == Algo::Lr {
            return Err(PipelineError::Config("explain.algo must be a tree model (rf or gbm)".into()));
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"seed": 7, "input": {"synthetic": {}}}"#).unwrap();
        let cfg = cfg.normalized().unwrap();
        match &cfg.input {
            InputConfig::Synthetic(s) => assert_eq!((s.seed, s.n_facilities), (7, 30)),
            InputConfig::Files { .. } => panic!("expected synthetic"),
        }
        assert_eq!(cfg.train.train_months, 24);
        assert_eq!(cfg.competitors.thresholds.rho_hi, 0.8);
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"input": {"synthetic": {}}}"#).is_err());
    }

    #[test]
    fn one_input_source() {
        let both = r#"{"seed": 1, "input": {"synthetic": {}, "files": {"encounters": "a", "facilities": "b"}}}"#;
        assert!(serde_json::from_str::<PipelineConfig>(both).is_err());
        let files = r#"{"seed": 1, "input": {"files": {"encounters": "a.csv", "facilities": "b.csv"}}}"#;
        assert!(matches!(
            serde_json::from_str::<PipelineConfig>(files).unwrap().input,
            InputConfig::Files { .. }
        ));
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"seed": 1, "input": {"files": {"encounters": "e.csv", "facilities": "f.csv"}}}"#).unwrap();
        let cfg = PipelineConfig::load(&p).unwrap();
        let InputConfig::Files { encounters, .. } = cfg.input else { panic!() };
        assert_eq!(encounters, dir.path().join("e.csv"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::synthetic(1);
        assert_eq!(a.sha256(), PipelineConfig::synthetic(1).sha256());
        assert_ne!(a.sha256(), PipelineConfig::synthetic(2).sha256());
        assert_eq!(a.sha256().len(), 64);
    }
}
