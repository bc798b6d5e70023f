use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use marketshare::data::{write_facts, write_ground_truth, write_profiles, FeatureTable};
use marketshare::explain::{write_beeswarm_csv, AggregateLevel, FeatureGroupMap};
use marketshare::graph::{write_dot, NeighborMode};
use marketshare::pipeline::{
    agreement_table, annotation_agreement, build_features, competitors_json, components_report, explain_model,
    identify_competitors, load_inputs, run_pipeline, text_report, train_models, AnnotationSheet, ImportanceRow,
    InputConfig, MetricRow, PipelineConfig, ShapReport, Staging,
};
use marketshare::regression::{Algo, CvReport, Model};

/// Competitor pools, market-share models and driver attribution for
/// healthcare facilities.
#[derive(Parser)]
#[command(name = "marketshare", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config (JSON). Without it the synthetic defaults are used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct GraphFlags {
    #[arg(long, allow_hyphen_values = true)]
    rho_hi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho_lo: Option<f64>,
    #[arg(long)]
    max_km: Option<f64>,
    /// negative or all
    #[arg(long)]
    neighbor_mode: Option<NeighborMode>,
    /// CSV of facility pairs that may never be competitors.
    #[arg(long)]
    exclusions: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct TrainFlags {
    /// lr, rf or gbm; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<Algo>,
    #[arg(long)]
    train_months: Option<usize>,
    #[arg(long)]
    test_months: Option<usize>,
    /// Random-search iterations per tree model (0 disables tuning).
    #[arg(long)]
    tune: Option<usize>,
    /// Blocked CV folds (0 disables CV).
    #[arg(long)]
    cv: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted competitor clusters.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Build correlation graphs, competitor lists, pools and targets.
    Competitors {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        graph: GraphFlags,
    },
    /// Train and evaluate regressors on a feature table.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
        /// features.csv with targets; built from the config inputs if absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Tree SHAP attribution and driver reports for a saved model.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// facility or facility-month
        #[arg(long)]
        level: Option<AggregateLevel>,
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Render report.txt from the JSON and CSV outputs in a directory.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory holding metrics.json and friends (defaults to --out).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Mean annotation scores per component and annotator.
    Agreement {
        #[command(flatten)]
        common: Common,
        /// annotation_sheet.csv
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "overall facility level")]
        category: String,
    },
    /// Run every stage and write the full report bundle.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        graph: GraphFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
}

fn config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match (&common.config, common.seed) {
        (Some(p), _) => PipelineConfig::load(p)?,
        (None, Some(seed)) => PipelineConfig::synthetic(seed),
        (None, None) => bail!("a seed is required: pass --seed or --config"),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &PipelineConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn apply_graph(cfg: &mut PipelineConfig, g: &GraphFlags) {
    let c = &mut cfg.competitors;
    if let Some(v) = g.rho_hi {
        c.thresholds.rho_hi = v;
    }
    if let Some(v) = g.rho_lo {
        c.thresholds.rho_lo = v;
    }
    if let Some(v) = g.max_km {
        c.thresholds.max_km = v;
    }
    if let Some(v) = g.neighbor_mode {
        c.neighbor_mode = v;
    }
    if let Some(v) = &g.exclusions {
        c.exclusions = Some(v.clone());
    }
}

fn apply_train(cfg: &mut PipelineConfig, t: &TrainFlags) {
    let c = &mut cfg.train;
    if !t.algo.is_empty() {
        c.algos = t.algo.clone();
        if !c.algos.contains(&cfg.explain.algo) {
            if let Some(a) = c.algos.iter().find(|a| **a != Algo::Lr) {
                cfg.explain.algo = *a;
            }
        }
    }
    if let Some(v) = t.train_months {
        c.train_months = v;
    }
    if let Some(v) = t.test_months {
        c.test_months = v;
    }
    if let Some(v) = t.tune {
        c.tune_iterations = v;
    }
    if let Some(v) = t.cv {
        c.cv_folds = v;
    }
}

fn synth(common: &Common) -> Result<()> {
    let cfg = config(common)?.normalized()?;
    let InputConfig::Synthetic(s) = &cfg.input else {
        bail!("synth needs a synthetic input config");
    };
    let data = marketshare::data::generate_synthetic(s)?;
    let out = out_dir(common, &cfg);
    let mut stage = Staging::new(&out)?;
    write_facts(&stage.path("encounters.csv"), &data.facts)?;
    write_profiles(&stage.path("facilities.csv"), &data.profiles)?;
    write_ground_truth(&stage.path("ground_truth_clusters.json"), &data.ground_truth)?;
    stage.write_json("synthetic_config.json", s)?;
    stage.commit()?;
    println!(
        "{} facts, {} facilities written to {}",
        data.facts.len(),
        data.profiles.len(),
        out.display()
    );
    Ok(())
}

fn competitors(common: &Common, graph: &GraphFlags) -> Result<()> {
    let mut cfg = config(common)?;
    apply_graph(&mut cfg, graph);
    let cfg = cfg.normalized()?;
    let inputs = load_inputs(&cfg)?;
    let comp = identify_competitors(&cfg, &inputs)?;
    let (table, _) = build_features(&cfg, &inputs, &comp.components)?;
    let out = out_dir(common, &cfg);
    let mut stage = Staging::new(&out)?;
    stage.write("competitors.json", &competitors_json(&comp.assignments))?;
    stage.write("graph.dot", &write_dot(&comp.graphs))?;
    stage.write_json("components.json", &components_report(&comp))?;
    table.write_csv(&stage.path("features.csv"))?;
    stage.commit()?;
    println!("{} pools, {} competitor rows", comp.components.len(), comp.assignments.len());
    if let Some(ari) = comp.ari {
        println!("adjusted Rand index vs planted clusters: {ari:.2}");
    }
    Ok(())
}

fn train(common: &Common, flags: &TrainFlags, data: Option<&Path>) -> Result<()> {
    let mut cfg = config(common)?;
    apply_train(&mut cfg, flags);
    let cfg = cfg.normalized()?;
    let table = match data {
        Some(p) => FeatureTable::read_csv(p)?,
        None => {
            let inputs = load_inputs(&cfg)?;
            let comp = identify_competitors(&cfg, &inputs)?;
            build_features(&cfg, &inputs, &comp.components)?.0
        }
    };
    let t = train_models(&cfg.train, &table, cfg.seed)?;
    let mut stage = Staging::new(&out_dir(common, &cfg))?;
    stage.write_json("metrics.json", &t.metrics)?;
    stage.write_json("cv_metrics.json", &t.cv)?;
    stage.write_json("search_log.json", &t.searches)?;
    stage.write_csv("importance.csv", &t.importance)?;
    stage.write_csv("permutation_importance.csv", &t.permutation)?;
    for (algo, model) in &t.models {
        stage.write(&format!("model_{}.json", algo.key()), &(model.to_json() + "\n"))?;
    }
    stage.commit()?;
    print!("{}", text_report(&t.metrics, &t.cv, &t.importance, None));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn explain(
    common: &Common,
    model: &Path,
    data: &Path,
    level: Option<AggregateLevel>,
    groups: Option<&Path>,
    top_k: Option<usize>,
) -> Result<()> {
    // The explain stage needs only its own settings, so a seed is optional.
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::synthetic(common.seed.unwrap_or(0)),
    };
    let e = &mut cfg.explain;
    if let Some(v) = level {
        e.level = v;
    }
    if let Some(v) = top_k {
        e.top_k = v;
    }
    if let Some(v) = groups {
        e.groups = Some(v.to_owned());
    }
    if e.top_k == 0 {
        bail!("--top-k must be at least 1");
    }
    let model = Model::load(model)?;
    let table = FeatureTable::read_csv(data)?;
    let groups = e.groups.as_deref().map(FeatureGroupMap::load).transpose()?;
    let x = explain_model(e, &model, &table, groups)?;
    let mut stage = Staging::new(&out_dir(common, &cfg))?;
    stage.write_json("shap_report.json", &x.report)?;
    write_beeswarm_csv(&stage.path("beeswarm.csv"), &x.beeswarm)?;
    stage.write("groups.json", &(x.groups.to_json() + "\n"))?;
    stage.commit()?;
    print!("{}", marketshare::pipeline::drivers_table(&x.report.features));
    if x.report.capped_predictions > 0 {
        println!("{} predictions were changed by capping", x.report.capped_predictions);
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn report(common: &Common, data: Option<&Path>) -> Result<()> {
    let dir = data
        .map(Path::to_owned)
        .or_else(|| common.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let metrics: Vec<MetricRow> = read_json(&dir.join("metrics.json"))?;
    let cv_path = dir.join("cv_metrics.json");
    let cv: Vec<CvReport> = if cv_path.exists() { read_json(&cv_path)? } else { Vec::new() };
    let imp_path = dir.join("importance.csv");
    let importance: Vec<ImportanceRow> = if imp_path.exists() {
        csv::Reader::from_path(&imp_path)?
            .deserialize()
            .collect::<Result<_, _>>()
            .with_context(|| format!("parsing {}", imp_path.display()))?
    } else {
        Vec::new()
    };
    let shap_path = dir.join("shap_report.json");
    let shap: Option<ShapReport> = if shap_path.exists() { Some(read_json(&shap_path)?) } else { None };
    let text = text_report(&metrics, &cv, &importance, shap.as_ref());
    let out = common.out.clone().unwrap_or(dir);
    let mut stage = Staging::new(&out)?;
    stage.write("report.txt", &text)?;
    stage.commit()?;
    print!("{text}");
    Ok(())
}

fn agreement(common: &Common, data: &Path, category: &str) -> Result<()> {
    let sheet = AnnotationSheet::load(data, category)?;
    let r = annotation_agreement(&sheet)?;
    if let Some(out) = &common.out {
        let mut stage = Staging::new(out)?;
        stage.write_json("agreement.json", &r)?;
        stage.commit()?;
    }
    print!("{}", agreement_table(&r));
    Ok(())
}

fn pipeline(common: &Common, graph: &GraphFlags, train: &TrainFlags) -> Result<()> {
    let mut cfg = config(common)?;
    apply_graph(&mut cfg, graph);
    apply_train(&mut cfg, train);
    let out = out_dir(common, &cfg);
    let s = run_pipeline(&cfg, &out)?;
    print!("{}", marketshare::pipeline::metrics_table(&s.metrics));
    if let Some(ari) = s.ari {
        println!("adjusted Rand index vs planted clusters: {ari:.2}");
    }
    let total: f64 = s.manifest.stage_timings_ms.iter().map(|(_, ms)| ms).sum();
    println!("{} files written to {} in {:.2} s", s.manifest.outputs.len(), out.display(), total / 1e3);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth { common } => synth(common),
        Command::Competitors { common, graph } => competitors(common, graph),
        Command::Train { common, train: t, data } => train(common, t, data.as_deref()),
        Command::Explain {
            common,
            model,
            data,
            level,
            groups,
            top_k,
        } => explain(common, model, data, *level, groups.as_deref(), *top_k),
        Command::Report { common, data } => report(common, data.as_deref()),
        Command::Agreement { common, data, category } => agreement(common, data, category),
        Command::Pipeline { common, graph, train: t } => pipeline(common, graph, t),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
