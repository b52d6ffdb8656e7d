//! Command line front end and its JSON run configuration.
//!
//! ```json
//! {
//!   "dataset": { "path": "bios.csv", "name": "bias_in_bios", "annotation_source": "claude" },
//!   "grid": { "experiment": "vary_expert", "points": [0.02, 0.1, 0.5], "reps": 250, "base_seed": 7 },
//!   "estimators": { "ppi": { "lambda_mode": "fixed" }, "dsl": { "folds": 5 } },
//!   "output_dir": "out"
//! }
//! ```
//!
//! `synth` may replace `dataset`. Without `name` or `spec`, the dataset file
//! is read as a canonical corpus (numeric feature columns).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::datasets::{
    balance_subset, load_canonical, load_corpus, write_canonical_csv, AnnotationSource, DatasetName, DatasetSpec,
};
use crate::error::{Error, Result};
use crate::harness::{
    cost_breakeven, emit_results, resolve_parallelism, run_estimator, run_experiment, CostModel, EstimatorConfigs,
    ExperimentGrid, PARALLELISM_ENV,
};
use crate::metrics::{correlation_r2, prune_collinear, CorrelationReport, DEFAULT_PRUNE_THRESHOLD};
use crate::model::{AnnotatedCorpus, EstimatorKind};
use crate::synth::{generate, SynthSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub name: Option<DatasetName>,
    #[serde(default)]
    pub annotation_source: Option<AnnotationSource>,
    /// Full recipe; overrides `name`.
    #[serde(default)]
    pub spec: Option<DatasetSpec>,
    /// Downsample the majority gold class before use.
    #[serde(default)]
    pub balance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub estimator: EstimatorKind,
    /// Hide all but this many gold labels first (fully labeled input only).
    #[serde(default)]
    pub n_expert: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_label: Option<String>,
    pub dataset: Option<DatasetConfig>,
    pub synth: Option<SynthSpec>,
    pub grid: Option<ExperimentGrid>,
    pub estimators: EstimatorConfigs,
    pub estimate: Option<EstimateConfig>,
    pub cost: Option<CostModel>,
    pub n_docs: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    /// r^2 threshold; prune features before estimating.
    pub prune_collinear: Option<f64>,
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.dataset_label {
            return l.clone();
        }
        match (&self.dataset, &self.synth) {
            (Some(d), _) => d
                .path
                .file_stem()
                .map_or("dataset".into(), |s| s.to_string_lossy().into_owned()),
            (None, Some(_)) => "synthetic".into(),
            _ => "dataset".into(),
        }
    }

    /// Loads or generates the corpus, then balances and prunes as configured.
    pub fn corpus(&self) -> Result<(AnnotatedCorpus, Option<CorrelationReport>)> {
        let corpus = match (&self.dataset, &self.synth) {
            (Some(_), Some(_)) => return Err(Error::Config("give either dataset or synth, not both".into())),
            (None, None) => return Err(Error::Config("config needs a dataset or synth section".into())),
            (None, Some(spec)) => {
                let spec = match self.seed {
                    Some(s) => spec.with_seed(s),
                    None => spec.clone(),
                };
                generate(&spec)?
            }
            (Some(d), None) => {
                let spec = match (&d.spec, &d.name) {
                    (Some(spec), _) => Some(spec.clone()),
                    (None, Some(name)) => {
                        let source = d
                            .annotation_source
                            .clone()
                            .ok_or_else(|| Error::Config("dataset.name needs dataset.annotation_source".into()))?;
                        Some(DatasetSpec::preset(name.clone(), source).map_err(|e| Error::Config(e.to_string()))?)
                    }
                    (None, None) => None,
                };
                let c = match spec {
                    Some(spec) => load_corpus(&d.path, &spec)?,
                    None => load_canonical(&d.path)?,
                };
                if d.balance {
                    balance_subset(&c, self.seed.unwrap_or(0))?
                } else {
                    c
                }
            }
        };
        match self.prune_collinear {
            Some(t) => {
                let (pruned, report) = prune_collinear(&corpus, t)?;
                Ok((pruned, Some(report)))
            }
            None => Ok((corpus, None)),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "debias", version, about = "Debiased logistic regression from LLM and expert annotations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed (grid base seed, synth seed, split seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured repetition count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Output directory (experiment) or file (estimate, synth, features).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = PARALLELISM_ENV)]
    pub parallelism: Option<usize>,
    /// Drop the latter feature of every pair with r^2 above the threshold (default 0.9).
    #[arg(long, num_args = 0..=1, default_missing_value = "0.9")]
    pub prune_collinear: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one estimator on one corpus.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// Overrides the configured estimator.
        #[arg(long)]
        estimator: Option<EstimatorKind>,
        /// Overrides the configured expert subset size.
        #[arg(long)]
        n_expert: Option<usize>,
    },
    /// Run a full experiment grid and write results.jsonl and results_wide.csv.
    Experiment {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate a synthetic corpus as canonical CSV.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Derive features and print the correlation report.
    Features {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Annotation budget break-even.
    Cost {
        #[command(flatten)]
        common: CommonArgs,
        /// Price preset: phi4, deepseek or claude.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        n_docs: Option<u64>,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if let Some(reps) = common.reps {
        if let Some(g) = cfg.grid.as_mut() {
            g.reps = reps;
        }
    }
    if let Some(seed) = cfg.seed {
        if let Some(g) = cfg.grid.as_mut() {
            g.base_seed = seed;
        }
    }
    if common.out.is_some() {
        cfg.output_dir = common.out.clone();
    }
    if common.parallelism.is_some() {
        cfg.parallelism = common.parallelism;
    }
    if common.prune_collinear.is_some() {
        cfg.prune_collinear = common.prune_collinear;
    }
    Ok(cfg)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, text)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn source_name(corpus_cfg: &RunConfig) -> String {
    corpus_cfg
        .dataset
        .as_ref()
        .and_then(|d| {
            d.spec
                .as_ref()
                .map(|s| s.annotation_source.column())
                .or_else(|| d.annotation_source.as_ref().map(AnnotationSource::column))
        })
        .map_or("synth".into(), |c| c.trim_start_matches("y_llm_").to_string())
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate {
            common,
            estimator,
            n_expert,
        } => {
            let cfg = load_config(&common)?;
            let mut est = cfg.estimate.clone();
            if let Some(kind) = estimator {
                est = Some(EstimateConfig {
                    estimator: kind,
                    n_expert: est.and_then(|e| e.n_expert),
                });
            }
            let mut est = est.ok_or_else(|| Error::Config("no estimator given (--estimator or config.estimate)".into()))?;
            if n_expert.is_some() {
                est.n_expert = n_expert;
            }
            let (corpus, _) = cfg.corpus()?;
            let seed = cfg.seed.unwrap_or(0);
            let corpus = match est.n_expert {
                Some(n) if est.estimator != EstimatorKind::Reference => corpus.split_expert_subset(n, seed)?,
                _ => corpus,
            };
            let report = run_estimator(est.estimator, &corpus, &cfg.estimators, seed)?;
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            write_or_print(cfg.output_dir.as_deref(), &text)
        }
        Command::Experiment { common } => {
            let cfg = load_config(&common)?;
            let grid = cfg
                .grid
                .clone()
                .ok_or_else(|| Error::Config("experiment needs a grid section".into()))?;
            let out = cfg
                .output_dir
                .clone()
                .ok_or_else(|| Error::Config("experiment needs --out or output_dir".into()))?;
            let threads = resolve_parallelism(cfg.parallelism)?;
            let (corpus, _) = cfg.corpus()?;
            let records = run_experiment(&corpus, &grid, &cfg.estimators, &cfg.label(), threads)?;
            let (jsonl, wide) = emit_results(&records, &out)?;
            eprintln!("wrote {} and {}", jsonl.display(), wide.display());
            Ok(())
        }
        Command::Synth { common } => {
            let cfg = load_config(&common)?;
            if cfg.synth.is_none() {
                return Err(Error::Config("synth needs a synth section".into()));
            }
            let (corpus, _) = cfg.corpus()?;
            let mut buf = Vec::new();
            write_canonical_csv(&corpus, "synth", &mut buf)?;
            write_or_print(cfg.output_dir.as_deref(), &String::from_utf8_lossy(&buf))
        }
        Command::Features { common } => {
            let cfg = load_config(&common)?;
            let raw = RunConfig {
                prune_collinear: None,
                ..cfg.clone()
            };
            let (corpus, _) = raw.corpus()?;
            let threshold = cfg.prune_collinear.unwrap_or(DEFAULT_PRUNE_THRESHOLD);
            let (pruned, report) = if cfg.prune_collinear.is_some() {
                prune_collinear(&corpus, threshold)?
            } else {
                let r2 = correlation_r2(&corpus)?;
                let all: Vec<usize> = (1..=corpus.p()).collect();
                let report = CorrelationReport {
                    feature_names: corpus.feature_names().to_vec(),
                    r2,
                    pruned: Vec::new(),
                    retained: all,
                };
                (corpus.clone(), report)
            };
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            print!("{text}");
            if let Some(out) = &cfg.output_dir {
                let mut buf = Vec::new();
                write_canonical_csv(&pruned, &source_name(&cfg), &mut buf)?;
                write_or_print(Some(out), &String::from_utf8_lossy(&buf))?;
            }
            Ok(())
        }
        Command::Cost { common, preset, n_docs } => {
            let cfg = load_config(&common)?;
            let model = match preset.as_deref() {
                Some("phi4") => CostModel::phi4(),
                Some("deepseek") => CostModel::deepseek_v3(),
                Some("claude") => CostModel::claude_sonnet(),
                Some(other) => return Err(Error::Config(format!("unknown cost preset '{other}'"))),
                None => cfg
                    .cost
                    .ok_or_else(|| Error::Config("cost needs --preset or a cost section".into()))?,
            };
            let n = n_docs
                .or(cfg.n_docs)
                .ok_or_else(|| Error::Config("cost needs --n-docs or n_docs".into()))?;
            let result = cost_breakeven(&model, n)?;
            let mut text = serde_json::to_string_pretty(&result)?;
            text.push('\n');
            write_or_print(cfg.output_dir.as_deref(), &text)
        }
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
