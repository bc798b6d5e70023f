//! End-to-end orchestration: ingest or synthesize, identify competitors,
//! compute targets and features, train and evaluate, explain, and write the
//! report bundle.
//!
//! Stage order is fixed because targets depend on the competitor pools.
//! Every file of a run is written into a staging directory inside the
//! output directory and moved into place only after all stages succeed.

mod annotation;
mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    compute_market_share, engineer_features, generate_synthetic, load_facts, load_ground_truth, load_profiles,
    write_facts, write_ground_truth, write_profiles, FacilityId, FacilityProfile, FactTable, FeatureTable,
    IngestError, MonthYear, ShareTargets,
};
use crate::explain::{
    aggregate_shap, beeswarm_export, permutation_importance, top_k_drivers, tree_shap, write_beeswarm_csv,
    AggregateLevel, BeeswarmRecord, DriverReport, ExplainError, FeatureGroupMap, ShapMatrix,
};
use crate::graph::{
    adjusted_rand_index, build_graph, connected_components, correlation_edges, extract_competitors,
    pooled_components, scope_series, write_dot, CompetitorAssignment, ExclusionList, FacilityGraph, GraphError,
    Volumes,
};
use crate::regression::{
    design_matrix, fit_model, impurity_feature_importance, kfold_cv, random_search, time_split, Algo, CvReport,
    EvalMetrics, Model, RegressionError, SearchResult,
};
use crate::{exec, seed};

pub use annotation::{annotation_agreement, AgreementReport, AnnotationError, AnnotationSheet, ScoreMean};
pub use config::{CompetitorConfig, ExplainConfig, InputConfig, PipelineConfig, PoolGraphs, TrainConfig};
pub use report::{
    agreement_table, cv_table, drivers_table, importance_table, metrics_table, ImportanceRow, MetricRow,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("ingest: {0}")]
    Ingest(#[source] IngestError),
    #[error("competitors: {0}")]
    Competitors(#[source] GraphError),
    #[error("targets: {0}")]
    Targets(#[source] IngestError),
    #[error("features: {0}")]
    Features(#[source] IngestError),
    #[error("train: {0}")]
    Train(#[source] RegressionError),
    #[error("explain: {0}")]
    Explain(#[source] ExplainError),
    #[error("agreement: {0}")]
    Agreement(#[source] AnnotationError),
    #[error("output {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub struct Inputs {
    pub facts: FactTable,
    pub profiles: Vec<FacilityProfile>,
    pub ground_truth: Option<BTreeMap<FacilityId, usize>>,
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs, PipelineError> {
    match &cfg.input {
        InputConfig::Synthetic(s) => {
            let d = generate_synthetic(s).map_err(PipelineError::Ingest)?;
            Ok(Inputs {
                facts: d.facts,
                profiles: d.profiles,
                ground_truth: Some(d.ground_truth),
            })
        }
        InputConfig::Files {
            encounters,
            facilities,
            ground_truth,
        } => Ok(Inputs {
            facts: load_facts(encounters).map_err(PipelineError::Ingest)?,
            profiles: load_profiles(facilities).map_err(PipelineError::Ingest)?,
            ground_truth: ground_truth
                .as_deref()
                .map(load_ground_truth)
                .transpose()
                .map_err(PipelineError::Ingest)?,
        }),
    }
}

pub struct CompetitorOutput {
    pub graphs: Vec<FacilityGraph>,
    pub skipped_pairs: usize,
    pub components: Vec<BTreeSet<FacilityId>>,
    pub assignments: Vec<CompetitorAssignment>,
    /// Agreement of the pools with planted clusters, when known.
    pub ari: Option<f64>,
}

fn distinct_months(facts: &FactTable) -> Vec<MonthYear> {
    facts.facts.iter().map(|f| f.month).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Correlation graphs over the training window, competitor pools and
/// ranked competitor lists for every scope and month.
pub fn identify_competitors(cfg: &PipelineConfig, inputs: &Inputs) -> Result<CompetitorOutput, PipelineError> {
    let cc = &cfg.competitors;
    let months = distinct_months(&inputs.facts);
    let window = &months[..cfg.train.train_months.min(months.len())];
    let exclusions = match &cc.exclusions {
        Some(p) => ExclusionList::load(p).map_err(PipelineError::Competitors)?,
        None => ExclusionList::default(),
    };

    let mut graphs = Vec::new();
    let mut skipped_pairs = 0;
    for s in scope_series(&inputs.facts, window) {
        let report = correlation_edges(&s, &inputs.profiles, &cc.thresholds, cc.controls, &exclusions)
            .map_err(PipelineError::Competitors)?;
        skipped_pairs += report.skipped.len();
        graphs.push(build_graph(&report.edges, &s.scope, s.series.keys()).map_err(PipelineError::Competitors)?);
    }

    // Monthly volumes per scope over every month, for ranking.
    let all = scope_series(&inputs.facts, &months);
    let mut assignments = Vec::new();
    for g in &graphs {
        let series = all.iter().find(|s| s.scope == g.scope).expect("window scopes are a subset");
        let volumes: Volumes = g
            .nodes
            .iter()
            .map(|id| {
                let monthly = match series.series.get(id) {
                    Some(v) => months.iter().copied().zip(v.iter().copied()).collect(),
                    None => BTreeMap::new(),
                };
                (id.clone(), monthly)
            })
            .collect();
        assignments.extend(extract_competitors(g, &volumes, cc.neighbor_mode).map_err(PipelineError::Competitors)?);
    }

    let mut components = match cc.pools {
        PoolGraphs::Union => pooled_components(&graphs),
        PoolGraphs::Overall => graphs
            .iter()
            .find(|g| g.scope == crate::graph::Scope::Overall)
            .map(connected_components)
            .unwrap_or_default(),
    };
    let covered: BTreeSet<FacilityId> = components.iter().flatten().cloned().collect();
    let missing: BTreeSet<FacilityId> = inputs
        .facts
        .facts
        .iter()
        .map(|f| f.facility_id.clone())
        .filter(|id| !covered.contains(id))
        .collect();
    components.extend(missing.into_iter().map(|id| BTreeSet::from([id])));
    components.sort_by(|a, b| a.first().cmp(&b.first()));

    let ari = inputs.ground_truth.as_ref().map(|truth| {
        let ids: Vec<&FacilityId> = truth.keys().collect();
        let planted: Vec<usize> = ids.iter().map(|id| truth[*id]).collect();
        let found: Vec<usize> = ids
            .iter()
            .map(|id| components.iter().position(|c| c.contains(*id)).unwrap_or(usize::MAX))
            .collect();
        adjusted_rand_index(&planted, &found)
    });

    Ok(CompetitorOutput {
        graphs,
        skipped_pairs,
        components,
        assignments,
        ari,
    })
}

/// Market-share targets over the pools and the modelling table.
pub fn build_features(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    components: &[BTreeSet<FacilityId>],
) -> Result<(FeatureTable, ShareTargets), PipelineError> {
    let share = compute_market_share(&inputs.facts, components, cfg.competitors.denominator)
        .map_err(PipelineError::Targets)?;
    let table = engineer_features(&inputs.facts, &inputs.profiles, cfg.top_n)
        .map_err(PipelineError::Features)?
        .with_targets(&share.targets);
    Ok((table, share))
}

pub struct TrainOutput {
    pub models: Vec<(Algo, Model)>,
    pub metrics: Vec<MetricRow>,
    pub cv: Vec<CvReport>,
    pub searches: Vec<SearchResult>,
    pub importance: Vec<ImportanceRow>,
    pub permutation: Vec<ImportanceRow>,
}

fn ranked(model: &str, names: &[String], scores: &[f64]) -> Vec<ImportanceRow> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| names[a].cmp(&names[b])));
    order
        .into_iter()
        .enumerate()
        .map(|(r, j)| ImportanceRow {
            rank: r + 1,
            model: model.to_owned(),
            feature: names[j].clone(),
            score: scores[j],
        })
        .collect()
}

/// Time-split training, optional random search, test metrics, blocked CV
/// and importance for every configured algorithm.
pub fn train_models(train: &TrainConfig, table: &FeatureTable, master: u64) -> Result<TrainOutput, PipelineError> {
    let err = PipelineError::Train;
    let names = &table.feature_names;
    let (train_rows, test_rows) = time_split(&table.rows, train.train_months, train.test_months).map_err(err)?;
    let (xt, yt) = design_matrix(&train_rows).map_err(err)?;
    let (xs, ys) = design_matrix(&test_rows).map_err(err)?;
    let mut out = TrainOutput {
        models: Vec::new(),
        metrics: Vec::new(),
        cv: Vec::new(),
        searches: Vec::new(),
        importance: Vec::new(),
        permutation: Vec::new(),
    };
    for &algo in &train.algos {
        let algo_seed = seed::derive(master, &[seed::label(algo.key())]);
        let mut params = train.params_for(algo).clone();
        if algo != Algo::Lr && train.tune_iterations > 0 {
            let inner = train.train_months - train.validation_months;
            let (fit_rows, valid_rows) = time_split(&train_rows, inner, train.validation_months).map_err(err)?;
            let (xf, yf) = design_matrix(&fit_rows).map_err(err)?;
            let (xv, yv) = design_matrix(&valid_rows).map_err(err)?;
            let search = random_search(
                &train.search_space,
                &params,
                train.tune_iterations,
                algo,
                names,
                (&xf, &yf),
                (&xv, &yv),
                seed::derive(algo_seed, &[seed::label("search")]),
            )
            .map_err(err)?;
            params = search.best.clone();
            out.searches.push(search);
        }
        let model = fit_model(algo, names, &xt, &yt, &params, algo_seed).map_err(err)?;
        for (split, x, y) in [("train", &xt, &yt), ("test", &xs, &ys)] {
            let m = EvalMetrics::compute(y, &model.predict(x).map_err(err)?).map_err(err)?;
            out.metrics.push(MetricRow {
                model: algo.label().to_owned(),
                split: split.to_owned(),
                rmse: m.rmse,
                mape: m.mape,
            });
        }
        if train.cv_folds > 0 {
            let cv_seed = seed::derive(algo_seed, &[seed::label("cv")]);
            out.cv
                .push(kfold_cv(&table.rows, names, train.cv_folds, algo, &params, cv_seed).map_err(err)?);
        }
        let imp = impurity_feature_importance(&model).map_err(err)?;
        out.importance.extend(ranked(algo.label(), names, &imp));
        if train.permutation_repeats > 0 {
            let perm_seed = seed::derive(algo_seed, &[seed::label("permutation")]);
            let p = permutation_importance(&model, &xs, &ys, train.permutation_metric, train.permutation_repeats, perm_seed)
                .map_err(PipelineError::Explain)?;
            out.permutation.extend(ranked(algo.label(), names, &p));
        }
        out.models.push((algo, model));
    }
    Ok(out)
}

/// Contents of `shap_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapReport {
    pub model: String,
    pub base_value: f64,
    pub level: AggregateLevel,
    pub top_k: usize,
    pub rows_explained: usize,
    /// Rows whose displayed (capped) prediction differs from the raw output
    /// the attributions explain.
    pub capped_predictions: usize,
    pub features: Vec<DriverReport>,
    pub groups: Vec<DriverReport>,
}

pub struct ExplainOutput {
    pub shap: ShapMatrix,
    pub report: ShapReport,
    pub groups: FeatureGroupMap,
    pub beeswarm: Vec<BeeswarmRecord>,
}

/// Tree SHAP over every row of `table`, facility-level driver rankings by
/// feature and by group, and the beeswarm export.
pub fn explain_model(
    cfg: &ExplainConfig,
    model: &Model,
    table: &FeatureTable,
    groups: Option<FeatureGroupMap>,
) -> Result<ExplainOutput, PipelineError> {
    let err = PipelineError::Explain;
    model
        .check_names(&table.feature_names)
        .map_err(|e| err(ExplainError::Regression(e)))?;
    let Model::Forest(forest) = model else {
        return Err(PipelineError::Config("attribution needs a tree model".into()));
    };
    let x: Vec<Vec<f64>> = table.rows.iter().map(|r| r.values.clone()).collect();
    let shap = tree_shap(forest, &x).map_err(err)?;
    let raw = model.predict_raw(&x).map_err(|e| err(e.into()))?;
    let (lo, hi) = model.caps();
    let capped_predictions = raw.iter().filter(|v| **v < lo || **v > hi).count();
    let groups = groups.unwrap_or_else(|| FeatureGroupMap::defaults_for(&table.feature_names));
    groups.validate().map_err(err)?;
    let by_feature = aggregate_shap(&shap, &table.rows, None, cfg.level).map_err(err)?;
    let by_group = aggregate_shap(&shap, &table.rows, Some(&groups), cfg.level).map_err(err)?;
    let beeswarm = beeswarm_export(&shap, &table.rows).map_err(err)?;
    let report = ShapReport {
        model: if matches!(forest.kind, crate::regression::ForestKind::Bagged) {
            Algo::Rf.label().to_owned()
        } else {
            Algo::Gbm.label().to_owned()
        },
        base_value: shap.base_value,
        level: cfg.level,
        top_k: cfg.top_k,
        rows_explained: x.len(),
        capped_predictions,
        features: top_k_drivers(&by_feature, cfg.top_k),
        groups: top_k_drivers(&by_group, cfg.top_k),
    };
    Ok(ExplainOutput {
        shap,
        report,
        groups,
        beeswarm,
    })
}

/// Files written into a hidden directory under `out` and moved into `out`
/// by [`Staging::commit`]. Dropping without committing removes them.
pub struct Staging {
    out: PathBuf,
    dir: tempfile::TempDir,
    names: Vec<String>,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self, PipelineError> {
        let io = |source| PipelineError::Io {
            path: out.to_owned(),
            source,
        };
        std::fs::create_dir_all(out).map_err(io)?;
        let dir = tempfile::Builder::new().prefix(".staging-").tempdir_in(out).map_err(io)?;
        Ok(Self {
            out: out.to_owned(),
            dir,
            names: Vec::new(),
        })
    }

    /// Path inside the staging area; the file is committed under `name`.
    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.names.iter().any(|n| n == name) {
            self.names.push(name.to_owned());
        }
        self.dir.path().join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), PipelineError> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|source| PipelineError::Io { path, source })
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(value).expect("report types serialize") + "\n";
        self.write(name, &text)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), PipelineError> {
        let path = self.path(name);
        let io = |e: csv::Error| PipelineError::Io {
            path: path.clone(),
            source: std::io::Error::other(e),
        };
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush().map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Moves every staged file into the output directory.
    pub fn commit(self) -> Result<Vec<PathBuf>, PipelineError> {
        let mut out = Vec::with_capacity(self.names.len());
        for name in &self.names {
            let from = self.dir.path().join(name);
            let to = self.out.join(name);
            std::fs::rename(&from, &to).map_err(|source| PipelineError::Io { path: to.clone(), source })?;
            out.push(to);
        }
        Ok(out)
    }
}

/// Competitor lists as a JSON array with one record per line.
pub fn competitors_json(rows: &[CompetitorAssignment]) -> String {
    let body: Vec<String> = rows
        .iter()
        .map(|r| serde_json::to_string(r).expect("assignments serialize"))
        .collect();
    format!("[\n{}\n]\n", body.join(",\n"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentsReport {
    pub components: Vec<BTreeSet<FacilityId>>,
    pub skipped_pairs: usize,
    pub edges_per_scope: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjusted_rand_index: Option<f64>,
}

pub fn components_report(c: &CompetitorOutput) -> ComponentsReport {
    ComponentsReport {
        components: c.components.clone(),
        skipped_pairs: c.skipped_pairs,
        edges_per_scope: c.graphs.iter().map(|g| (g.scope.to_string(), g.edges.len())).collect(),
        adjusted_rand_index: c.ari,
    }
}

/// `run_manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub seed: u64,
    pub parallel: bool,
    pub stage_timings_ms: Vec<(String, f64)>,
    pub outputs: Vec<String>,
}

pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub ari: Option<f64>,
    pub metrics: Vec<MetricRow>,
}

/// Plain-text summary with reals at two decimals.
pub fn text_report(
    metrics: &[MetricRow],
    cv: &[CvReport],
    importance: &[ImportanceRow],
    shap: Option<&ShapReport>,
) -> String {
    let mut out = String::from("Prediction error\n");
    out += &metrics_table(metrics);
    if !cv.is_empty() {
        out += "\nBlocked k-fold cross-validation\n";
        out += &cv_table(cv);
    }
    out += "\nTop 15 features per model\n";
    out += &importance_table(importance, 15);
    if let Some(s) = shap {
        out += &format!("\nTop {} drivers by mean |SHAP| ({})\n", s.top_k, s.model);
        out += &drivers_table(&s.features);
        out += "\nTop driver groups\n";
        out += &drivers_table(&s.groups);
    }
    out
}

/// Runs every stage and writes the bundle into `out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<RunSummary, PipelineError> {
    let cfg = cfg.clone().normalized()?;
    let mut timings: Vec<(String, f64)> = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        timings.push((name.to_owned(), clock.elapsed().as_secs_f64() * 1e3));
        clock = Instant::now();
    };
    let mut stage = Staging::new(out_dir)?;
    stage.write("config.json", &(cfg.to_json() + "\n"))?;

    let inputs = load_inputs(&cfg)?;
    if let InputConfig::Synthetic(_) = cfg.input {
        let p = stage.path("encounters.csv");
        write_facts(&p, &inputs.facts).map_err(PipelineError::Ingest)?;
        let p = stage.path("facilities.csv");
        write_profiles(&p, &inputs.profiles).map_err(PipelineError::Ingest)?;
        if let Some(t) = &inputs.ground_truth {
            let p = stage.path("ground_truth_clusters.json");
            write_ground_truth(&p, t).map_err(PipelineError::Ingest)?;
        }
    }
    lap("ingest", &mut timings);

    let comp = identify_competitors(&cfg, &inputs)?;
    stage.write("competitors.json", &competitors_json(&comp.assignments))?;
    stage.write("graph.dot", &write_dot(&comp.graphs))?;
    stage.write_json("components.json", &components_report(&comp))?;
    lap("competitors", &mut timings);

    let (table, share) = build_features(&cfg, &inputs, &comp.components)?;
    if !share.dropped.is_empty() {
        log::warn!("{} facility-months dropped for empty pools", share.dropped.len());
    }
    let p = stage.path("features.csv");
    table.write_csv(&p).map_err(PipelineError::Features)?;
    lap("targets", &mut timings);

    let trained = train_models(&cfg.train, &table, cfg.seed)?;
    stage.write_json("metrics.json", &trained.metrics)?;
    stage.write_json("cv_metrics.json", &trained.cv)?;
    stage.write_json("search_log.json", &trained.searches)?;
    stage.write_csv("importance.csv", &trained.importance)?;
    stage.write_csv("permutation_importance.csv", &trained.permutation)?;
    for (algo, model) in &trained.models {
        stage.write(&format!("model_{}.json", algo.key()), &(model.to_json() + "\n"))?;
    }
    lap("train", &mut timings);

    let explained = match trained.models.iter().find(|(a, _)| *a == cfg.explain.algo) {
        Some((_, model)) => {
            let groups = match &cfg.explain.groups {
                Some(p) => Some(FeatureGroupMap::load(p).map_err(PipelineError::Explain)?),
                None => None,
            };
            let e = explain_model(&cfg.explain, model, &table, groups)?;
            stage.write_json("shap_report.json", &e.report)?;
            let p = stage.path("beeswarm.csv");
            write_beeswarm_csv(&p, &e.beeswarm).map_err(PipelineError::Explain)?;
            stage.write("groups.json", &(e.groups.to_json() + "\n"))?;
            Some(e)
        }
        None => {
            log::warn!("{} was not trained; skipping attribution", cfg.explain.algo.label());
            None
        }
    };
    lap("explain", &mut timings);

    stage.write(
        "report.txt",
        &text_report(&trained.metrics, &trained.cv, &trained.importance, explained.as_ref().map(|e| &e.report)),
    )?;
    let mut outputs: Vec<String> = stage.names().to_vec();
    outputs.push("run_manifest.json".into());
    let manifest = RunManifest {
        config_sha256: cfg.sha256(),
        seed: cfg.seed,
        parallel: exec::is_parallel(),
        stage_timings_ms: timings,
        outputs,
    };
    stage.write_json("run_manifest.json", &manifest)?;
    stage.commit()?;
    Ok(RunSummary {
        out_dir: out_dir.to_owned(),
        manifest,
        ari: comp.ari,
        metrics: trained.metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_input_leaves_no_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::synthetic(1);
        cfg.input = InputConfig::Files {
            encounters: dir.path().join("nope.csv"),
            facilities: dir.path().join("nope2.csv"),
            ground_truth: None,
        };
        let out = dir.path().join("out");
        let err = run_pipeline(&cfg, &out).err().unwrap();
        assert!(err.to_string().starts_with("ingest:"), "{err}");
        assert_eq!(std::fs::read_dir(&out).unwrap().count(), 0);
    }

    #[test]
    fn staging_commit_and_drop() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Staging::new(dir.path()).unwrap();
            s.write("a.txt", "x").unwrap();
        }
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
        let mut s = Staging::new(dir.path()).unwrap();
        s.write("a.txt", "x").unwrap();
        s.commit().unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("a.txt")).unwrap(), "x");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
