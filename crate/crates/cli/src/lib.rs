//! Subcommands of the `freespan` executable.
//!
//! ```text
//! freespan simulate --config exp.json --out data/ --seed 42
//! freespan train    --config exp.json --data-dir data/ --model-dir models/
//! freespan score    --model-dir models/ --data-dir data/ --out out/report.csv
//! freespan evaluate --report out/report.csv --out out/evaluation.json
//! ```
//!
//! Every output directory receives a `manifest.json` describing the run, and
//! file outputs get a `<stem>.manifest.json` next to them. All files are
//! written to a temporary name and renamed into place.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use freespan_core::dasio::{list_trials, read_metadata, read_trial, write_atomic, write_trial, AnomalyReport, TrialMetadata};
use freespan_core::ocsvm::SectionModel;
use freespan_core::pipeline::{
    evaluate, grid_jobs, prepare_trial, score_all, split_trials, train_all, ExperimentConfig, HasMetadata,
    TrainedModels,
};
use freespan_core::pls::PlsModel;
use freespan_core::simulator::simulate_trial_with;
use freespan_core::Exec;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const DEFAULT_SEED: u64 = 42;
pub const PLS_FILE: &str = "pls.json";
pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "freespan", version, about = "Free-span exposure-length anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the experimental grid into .das/.json trial pairs.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Fit the PLS extractor and one detector per section.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        model_dir: PathBuf,
    },
    /// Score the held-out trials and write the report CSV.
    Score {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute correlation, significance, effect sizes and classification metrics.
    Evaluate {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Provenance written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub input_paths: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl RunManifest {
    fn new(command: &str, config_path: Option<&Path>, input_paths: Vec<PathBuf>, output_dir: &Path, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.into(),
            config_path: config_path.map(Path::to_path_buf),
            input_paths,
            output_dir: output_dir.to_path_buf(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Parent directory of a file path, `.` for a bare file name.
fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// `<dir>/<stem>.<suffix>` for a file output.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
    parent_dir(path).join(format!("{stem}.{suffix}"))
}

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => ExperimentConfig::from_json(&read_text(p)?).with_context(|| format!("config {}", p.display())),
    }
}

pub fn section_file(section_id: &str) -> String {
    format!("{section_id}.svm.json")
}

pub fn cmd_simulate(config: Option<&Path>, out: &Path, seed: u64) -> Result<usize> {
    let cfg = load_config(config)?;
    let jobs = grid_jobs(&cfg, seed)?;
    create_dir(out)?;
    log::info!("simulating {} trials into {}", jobs.len(), out.display());
    Exec::default().try_map_range(jobs.len(), |i| {
        let (record, meta) = simulate_trial_with(Exec::Sequential, &jobs[i])?;
        log::debug!("writing {}", meta.trial_id);
        write_trial(&record, &meta, &out.join(&meta.trial_id))
    })?;
    RunManifest::new("simulate", config, Vec::new(), out, Some(seed)).write(&out.join(MANIFEST_FILE))?;
    Ok(jobs.len())
}

struct TrialFile {
    base: PathBuf,
    meta: TrialMetadata,
}

impl HasMetadata for TrialFile {
    fn metadata(&self) -> &TrialMetadata {
        &self.meta
    }
}

/// Splits the trials in `data_dir` into training and evaluation file lists.
fn split_dir(data_dir: &Path, cfg: &ExperimentConfig) -> Result<(Vec<TrialFile>, Vec<TrialFile>)> {
    let bases = list_trials(data_dir)?;
    if bases.is_empty() {
        bail!("no trials found in {}", data_dir.display());
    }
    let files = bases
        .into_iter()
        .map(|base| Ok(TrialFile { meta: read_metadata(&base)?, base }))
        .collect::<Result<Vec<_>>>()?;
    Ok(split_trials(files, cfg.train_trial_index)?)
}

fn prepare_files(files: &[TrialFile], cfg: &ExperimentConfig) -> Result<Vec<freespan_core::pipeline::PreparedTrial>> {
    Ok(Exec::default().try_map_range(files.len(), |i| {
        let (record, meta) = read_trial(&files[i].base)?;
        prepare_trial(Exec::Sequential, &record, meta, cfg)
    })?)
}

pub fn cmd_train(config: Option<&Path>, data_dir: &Path, model_dir: &Path) -> Result<TrainedModels> {
    let cfg = load_config(config)?;
    let (train, _) = split_dir(data_dir, &cfg)?;
    log::info!("training on {} trials", train.len());
    let prepared = prepare_files(&train, &cfg)?;
    let models = train_all(&prepared, &cfg)?;
    log::info!("PLS uses {} components", models.pls.n_components());

    create_dir(model_dir)?;
    write_atomic(&model_dir.join(PLS_FILE), models.pls.to_json()?.as_bytes())?;
    for m in &models.sections {
        write_atomic(&model_dir.join(section_file(&m.section_id)), m.to_json()?.as_bytes())?;
    }
    write_atomic(&model_dir.join(CONFIG_FILE), cfg.to_json()?.as_bytes())?;
    let inputs = train.iter().map(|t| t.base.clone()).collect();
    RunManifest::new("train", config, inputs, model_dir, None).write(&model_dir.join(MANIFEST_FILE))?;
    Ok(models)
}

/// Reads the config, PLS model and every section detector from `model_dir`.
pub fn load_models(model_dir: &Path) -> Result<(ExperimentConfig, TrainedModels)> {
    let cfg = ExperimentConfig::from_json(&read_text(&model_dir.join(CONFIG_FILE))?)?;
    let pls = PlsModel::from_json(&read_text(&model_dir.join(PLS_FILE))?)?;
    let sections = cfg
        .sections
        .iter()
        .map(|s| Ok(SectionModel::from_json(&read_text(&model_dir.join(section_file(&s.section_id)))?)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((cfg, TrainedModels { pls, sections }))
}

pub fn cmd_score(model_dir: &Path, data_dir: &Path, out: &Path) -> Result<AnomalyReport> {
    let (cfg, models) = load_models(model_dir)?;
    let (_, eval) = split_dir(data_dir, &cfg)?;
    log::info!("scoring {} trials", eval.len());
    let prepared = prepare_files(&eval, &cfg)?;
    let report = score_all(Exec::default(), &models, &prepared)?;

    create_dir(&parent_dir(out))?;
    write_atomic(out, &report.to_csv()?)?;
    write_json(&sibling(out, "summary.json"), &report.summary())?;
    let mut inputs = vec![model_dir.to_path_buf()];
    inputs.extend(eval.iter().map(|t| t.base.clone()));
    RunManifest::new("score", None, inputs, &parent_dir(out), None).write(&sibling(out, "manifest.json"))?;
    Ok(report)
}

pub fn cmd_evaluate(report_path: &Path, out: &Path) -> Result<()> {
    let bytes = fs::read(report_path).with_context(|| format!("reading {}", report_path.display()))?;
    let report = AnomalyReport::from_csv(&bytes)?;
    let evaluation = evaluate(&report).with_context(|| format!("evaluating {}", report_path.display()))?;
    create_dir(&parent_dir(out))?;
    write_json(out, &evaluation)?;
    let inputs = vec![report_path.to_path_buf()];
    RunManifest::new("evaluate", None, inputs, &parent_dir(out), None).write(&sibling(out, "manifest.json"))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let n = cmd_simulate(config.as_deref(), &out, seed)?;
            log::info!("wrote {n} trials");
        }
        Command::Train {
            config,
            data_dir,
            model_dir,
        } => {
            cmd_train(config.as_deref(), &data_dir, &model_dir)?;
        }
        Command::Score { model_dir, data_dir, out } => {
            let report = cmd_score(&model_dir, &data_dir, &out)?;
            log::info!("scored {} windows", report.rows.len());
        }
        Command::Evaluate { report, out } => cmd_evaluate(&report, &out)?,
    }
    Ok(())
}
