//! `gesd` command-line front end.
//!
//! Every command computes all of its outputs in memory before touching the
//! output directory, so a failed run leaves nothing behind.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Seeds};
use crate::dataset::{load_csv, split, TabularDataset};
use crate::error::{ErrorKind, GesdError, Result};
use crate::metrics::{mann_whitney_u, MannWhitney};
use crate::models::{train, Classifier, ModelKind, TrainConfig};
use crate::moea::{audit_seeds, evaluate_model, nsga2_run, FeuProblem, FrontEntry, GenerationStats, Individual, ModelMetrics};
use crate::selection::{select, RawObjectives, Selection, SelectionMethod, SelectionWeights};
use crate::stability::{Channel, GesdReport};
use crate::svg;

#[derive(Debug, Parser)]
#[command(name = "gesd", version, about = "Explanation-stability fairness audits and FEU model search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Audit one model: utility, outcome fairness and GESD on the test split.
    Audit {
        #[command(flatten)]
        common: Common,
        /// Model JSON to audit.
        #[arg(long, conflicts_with = "train_inline")]
        model: Option<PathBuf>,
        /// Train a model from the `[train]` block instead of loading one.
        #[arg(long)]
        train_inline: bool,
    },
    /// Run the NSGA-II search and write the final front.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Pick one model from a front, retrain it and re-audit at full size.
    Select {
        #[command(flatten)]
        common: Common,
        /// `front.json` written by `optimize`.
        #[arg(long)]
        front: PathBuf,
        /// chebyshev, linear, elbow or hypervolume.
        #[arg(long)]
        method: Option<String>,
        /// Comma-separated weights on AUC, DP, GESD.
        #[arg(long)]
        weights: Option<String>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
/// Failures print one line `error: kind=<k> exit=<n> message=<json string>`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            return report_error(ErrorKind::Config, first.trim_start_matches("error: "));
        }
    };
    match execute(cli) {
        Ok(dir) => {
            log::info!("outputs written to {}", dir.display());
            0
        }
        Err(e) => report_error(e.kind(), &e.to_string()),
    }
}

fn report_error(kind: ErrorKind, message: &str) -> i32 {
    let code = kind.exit_code();
    let msg = serde_json::to_string(message).unwrap_or_else(|_| "\"\"".into());
    eprintln!("error: kind={} exit={code} message={msg}", kind.name());
    code
}

pub fn execute(cli: Cli) -> Result<PathBuf> {
    let common = match &cli.command {
        Command::Audit { common, .. } | Command::Optimize { common } | Command::Select { common, .. } => common,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(GesdError::InvalidConfig("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| GesdError::InvalidConfig(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Audit {
            common,
            model,
            train_inline,
        } => {
            let cfg = resolve_config(common, None)?;
            let source = match (model, train_inline) {
                (Some(p), false) => ModelSource::File(p.clone()),
                (None, true) => ModelSource::Inline,
                _ => return Err(GesdError::InvalidConfig("audit needs exactly one of --model or --train-inline".into())),
            };
            let files = cmd_audit(&cfg, &source)?;
            write_outputs(&out_dir(common, &cfg), files)
        }
        Command::Optimize { common } => {
            let cfg = resolve_config(common, None)?;
            let files = cmd_optimize(&cfg, common.threads)?;
            write_outputs(&out_dir(common, &cfg), files)
        }
        Command::Select {
            common,
            front,
            method,
            weights,
        } => {
            let front_file = read_front(front)?;
            let cfg = resolve_config(common, Some(&front_file.config))?;
            let method = match method {
                Some(m) => m.parse()?,
                None => cfg.selection.method,
            };
            let weights = match weights {
                Some(w) => parse_weights(w)?,
                None => cfg.selection_weights(),
            };
            let files = cmd_select(&cfg, &front_file, front, method, weights)?;
            write_outputs(&out_dir(common, &cfg), files)
        }
    })
}

fn resolve_config(common: &Common, fallback: Option<&ExperimentConfig>) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, fallback) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(c)) => {
            c.validate()?;
            c.clone()
        }
        (None, None) => return Err(GesdError::InvalidConfig("--config is required".into())),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("gesd-out"))
}

pub fn parse_weights(text: &str) -> Result<SelectionWeights> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| GesdError::InvalidConfig(format!("cannot parse weights `{text}`: {e}")))?;
    let w: [f64; 3] = parts
        .try_into()
        .map_err(|_| GesdError::InvalidConfig(format!("expected three weights, got `{text}`")))?;
    SelectionWeights::new(w)
}

/// Writes each `(file name, contents)` via a temporary file and rename.
fn write_outputs(dir: &Path, files: Vec<(String, String)>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| GesdError::io(dir, e))?;
    for (name, contents) in files {
        let target = dir.join(&name);
        let tmp = dir.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, contents).map_err(|e| GesdError::io(&tmp, e))?;
        std::fs::rename(&tmp, &target).map_err(|e| GesdError::io(&target, e))?;
    }
    Ok(dir.to_path_buf())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Loads the configured CSV and applies the configured split.
pub fn load_split(cfg: &ExperimentConfig) -> Result<(TabularDataset, TabularDataset)> {
    let ds = load_csv(&cfg.dataset.path, &cfg.dataset.load_options())?;
    split(&ds, &cfg.dataset.split)
}

pub enum ModelSource {
    File(PathBuf),
    Inline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub source: String,
    pub path: Option<PathBuf>,
    pub kind: ModelKind,
    pub architecture: Vec<usize>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyRow {
    pub channel: Channel,
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Layout of `audit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFile {
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub model: ModelInfo,
    pub metrics: ModelMetrics,
    pub mann_whitney: Vec<MannWhitneyRow>,
    pub gesd: GesdReport,
}

/// Pairwise Mann–Whitney tests of the per-group stability samples, per channel.
pub fn mann_whitney_rows(report: &GesdReport) -> Result<Vec<MannWhitneyRow>> {
    let mut rows = Vec::new();
    for channel in Channel::ALL {
        let samples = report.samples(channel);
        for a in 0..samples.len() {
            for b in a + 1..samples.len() {
                let MannWhitney { u, p_value, exact } = mann_whitney_u(&samples[a], &samples[b])?;
                rows.push(MannWhitneyRow {
                    channel,
                    group_a: report.group_values[a].clone(),
                    group_b: report.group_values[b].clone(),
                    n_a: samples[a].len(),
                    n_b: samples[b].len(),
                    u,
                    p_value,
                    exact,
                });
            }
        }
    }
    Ok(rows)
}

fn stability_svg(report: &GesdReport) -> String {
    let panels: Vec<(String, Vec<Vec<f64>>)> = Channel::ALL
        .iter()
        .map(|&c| (format!("{} stability", c.name()), report.samples(c)))
        .collect();
    svg::histograms(&panels, &report.group_values, 20)
}

/// Audits `model` on the test split and assembles the `audit.json` contents.
pub fn audit_file(
    cfg: &ExperimentConfig,
    model: &Classifier,
    path: Option<PathBuf>,
    train_set: &TabularDataset,
    test_set: &TabularDataset,
) -> Result<AuditFile> {
    if model.input_dim() != train_set.n_features() {
        return Err(GesdError::DimensionMismatch {
            expected: train_set.n_features(),
            got: model.input_dim(),
        });
    }
    let (evaluation, report) = evaluate_model(
        model,
        model.threshold,
        train_set,
        test_set,
        &cfg.perturbation(),
        &cfg.explainer(),
        cfg.metrics.eod_variant,
    )?;
    Ok(AuditFile {
        config: cfg.clone(),
        seeds: cfg.seeds(),
        model: ModelInfo {
            source: if path.is_some() { "file" } else { "inline" }.into(),
            path,
            kind: model.kind,
            architecture: model.architecture.clone(),
            threshold: model.threshold,
        },
        metrics: evaluation.metrics.expect("successful evaluation has metrics"),
        mann_whitney: mann_whitney_rows(&report)?,
        gesd: report,
    })
}

pub fn cmd_audit(cfg: &ExperimentConfig, source: &ModelSource) -> Result<Vec<(String, String)>> {
    let seeds = cfg.seeds();
    let (train_set, test_set) = load_split(cfg)?;
    let (model, path) = match source {
        ModelSource::File(p) => (Classifier::load_json(p)?, Some(p.clone())),
        ModelSource::Inline => {
            let tc = TrainConfig {
                learning_rate: cfg.train.learning_rate,
                epochs: cfg.train.epochs,
                batch_size: cfg.model.batch_size,
                seed: seeds.train,
                l2_penalty: cfg.model.l2_penalty,
            };
            let m = train(&cfg.model.spec(), &train_set, &tc)?.with_threshold(cfg.train.threshold)?;
            (m, None)
        }
    };
    let audit = audit_file(cfg, &model, path, &train_set, &test_set)?;
    let mut files = vec![
        ("audit.json".to_string(), to_json(&audit)?),
        ("stability_hist.svg".to_string(), stability_svg(&audit.gesd)),
    ];
    if matches!(source, ModelSource::Inline) {
        files.push(("model.json".into(), to_json(&model)?));
    }
    Ok(files)
}

/// Layout of `front.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontFile {
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    /// Audited rows per evaluation during the search.
    pub in_loop_sample_size: usize,
    pub front: Vec<FrontEntry>,
}

fn read_front(path: &Path) -> Result<FrontFile> {
    let text = std::fs::read_to_string(path).map_err(|e| GesdError::io(path, e))?;
    let f: FrontFile = serde_json::from_str(&text)?;
    if f.front.is_empty() {
        return Err(GesdError::InvalidDataset(format!("{} holds an empty front", path.display())));
    }
    Ok(f)
}

pub fn history_csv(history: &[GenerationStats]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| GesdError::InvalidDataset(format!("cannot write history: {e}"));
    w.write_record([
        "generation",
        "evaluations",
        "best_dp",
        "best_gesd",
        "best_auc",
        "mean_dp",
        "mean_gesd",
        "mean_auc",
        "front_size",
        "hypervolume",
        "failures",
    ])
    .map_err(csv_err)?;
    for h in history {
        w.write_record([
            h.generation.to_string(),
            h.evaluations.to_string(),
            h.best.dp.to_string(),
            h.best.gesd.to_string(),
            h.best.auc().to_string(),
            h.mean.dp.to_string(),
            h.mean.gesd.to_string(),
            h.mean.auc().to_string(),
            h.front_size.to_string(),
            h.hypervolume.to_string(),
            h.failures.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| GesdError::InvalidDataset(format!("cannot write history: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn pareto_svg(front: &[Individual], population: &[Individual]) -> String {
    let pts = |v: &[Individual]| -> Vec<[f64; 3]> {
        v.iter()
            .map(|i| {
                let o = i.evaluation.objectives;
                [o.dp, o.gesd, o.auc()]
            })
            .collect()
    };
    let rest: Vec<Individual> = population.iter().filter(|i| i.rank > 0).cloned().collect();
    svg::scatter_panels(
        &[
            ("DP vs AUC", "DP", "AUC", 0, 2),
            ("GESD vs AUC", "GESD", "AUC", 1, 2),
            ("DP vs GESD", "DP", "GESD", 0, 1),
        ],
        &pts(front),
        &pts(&rest),
        ["Pareto front", "dominated"],
    )
}

pub fn problem<'a>(cfg: &ExperimentConfig, train_set: &'a TabularDataset, test_set: &'a TabularDataset) -> FeuProblem<'a> {
    FeuProblem {
        train: train_set,
        test: test_set,
        model: cfg.model.spec(),
        batch_size: cfg.model.batch_size,
        l2_penalty: cfg.model.l2_penalty,
        perturbation: cfg.in_loop_perturbation(),
        explainer: cfg.explainer.explainer(0),
        eod_variant: cfg.metrics.eod_variant,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Timing {
    seconds: f64,
    evaluations: usize,
    threads: usize,
}

pub fn cmd_optimize(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<(String, String)>> {
    let start = Instant::now();
    let (train_set, test_set) = load_split(cfg)?;
    let run = nsga2_run(&cfg.moea(), &problem(cfg, &train_set, &test_set))?;
    let front = FrontFile {
        config: cfg.clone(),
        seeds: cfg.seeds(),
        in_loop_sample_size: cfg.moea.in_loop_sample_size,
        front: run.front.iter().map(FrontEntry::from).collect(),
    };
    let timing = Timing {
        seconds: start.elapsed().as_secs_f64(),
        evaluations: run.history.last().map_or(0, |h| h.evaluations),
        threads: threads.unwrap_or_else(rayon::current_num_threads),
    };
    Ok(vec![
        ("front.json".into(), to_json(&front)?),
        ("history.csv".into(), history_csv(&run.history)?),
        ("pareto.svg".into(), pareto_svg(&run.front, &run.population)),
        ("timing.json".into(), to_json(&timing)?),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReauditSeeds {
    pub eval_seed: u64,
    pub perturbation: u64,
    pub explainer: u64,
}

/// Layout of `selected.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFile {
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub reaudit_seeds: ReauditSeeds,
    pub front_path: PathBuf,
    pub selection: Selection,
    pub chosen: FrontEntry,
    pub in_loop_sample_size: usize,
    pub in_loop_gesd: f64,
    pub final_sample_size: usize,
    /// Metrics of the retrained model with GESD re-audited at full size.
    pub metrics: ModelMetrics,
    pub gesd: GesdReport,
    pub mann_whitney: Vec<MannWhitneyRow>,
    pub model_file: String,
}

pub fn cmd_select(
    cfg: &ExperimentConfig,
    front_file: &FrontFile,
    front_path: &Path,
    method: SelectionMethod,
    weights: SelectionWeights,
) -> Result<Vec<(String, String)>> {
    let raw: Vec<RawObjectives> = front_file
        .front
        .iter()
        .map(|e| RawObjectives {
            auc: e.objectives.auc,
            dp: e.objectives.dp,
            gesd: e.objectives.gesd,
        })
        .collect();
    let selection = select(&raw, method, weights, cfg.selection.ideal, cfg.selection.reference)?;
    let chosen = front_file.front[selection.index].clone();
    let (train_set, test_set) = load_split(cfg)?;
    let full = cfg.gesd.perturbation(0);
    let (model, evaluation, report) = problem(cfg, &train_set, &test_set).audit(&chosen.genome, chosen.eval_seed, &full)?;
    let (perturbation, explainer) = audit_seeds(chosen.eval_seed);
    let selected = SelectedFile {
        config: cfg.clone(),
        seeds: cfg.seeds(),
        reaudit_seeds: ReauditSeeds {
            eval_seed: chosen.eval_seed,
            perturbation,
            explainer,
        },
        front_path: front_path.to_path_buf(),
        selection,
        in_loop_sample_size: front_file.in_loop_sample_size,
        in_loop_gesd: chosen.objectives.gesd,
        chosen,
        final_sample_size: full.sample_size,
        metrics: evaluation.metrics.expect("successful evaluation has metrics"),
        mann_whitney: mann_whitney_rows(&report)?,
        gesd: report,
        model_file: "model.json".into(),
    };
    Ok(vec![
        ("selected.json".into(), to_json(&selected)?),
        ("model.json".into(), to_json(&model)?),
        ("stability_hist.svg".into(), stability_svg(&selected.gesd)),
    ])
}
