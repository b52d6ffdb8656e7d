use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{run_estimator, with_pool, EstimatorConfigs};
use crate::baseline::ReferenceCache;
use crate::error::{Error, Result};
use crate::metrics::{srmse, standardized_bias, Aggregation, Metric, MetricSummary};
use crate::model::{AnnotatedCorpus, CoefficientVector, EstimatorKind, Row};
use crate::seed;

/// Below this many expert labels the debiasing estimators are unstable.
pub const MIN_EXPERT_LABELS: usize = 200;
pub const DEFAULT_REPS: usize = 250;
pub const DEFAULT_GRID_POINTS: usize = 8;

const SPLIT_STREAM: u64 = 1;
const ESTIMATOR_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Fixed corpus, grid over the expert-labeled proportion `n / N`.
    VaryExpert,
    /// Fixed expert budget, grid over the corpus size as a proportion of
    /// the available rows.
    VaryTotal,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::VaryExpert => "vary_expert",
            ExperimentKind::VaryTotal => "vary_total",
        }
    }
}

fn default_reps() -> usize {
    DEFAULT_REPS
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Classical, EstimatorKind::Ppi, EstimatorKind::Dsl]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub experiment: ExperimentKind,
    /// Proportions in `(0, 1]`.
    pub points: Vec<f64>,
    /// Fixed expert budget; required for `vary_total`.
    #[serde(default)]
    pub n_expert: Option<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// How standardized errors are pooled across coefficients.
    #[serde(default)]
    pub aggregation: Aggregation,
}

/// `k` geometrically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..k)
                .map(|i| {
                    if i + 1 == k {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (k - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

impl ExperimentGrid {
    /// Experiment 1 on a corpus of `total` rows: 8 proportions from the
    /// stability floor up to full labeling.
    pub fn vary_expert(total: usize, base_seed: u64) -> Self {
        let lo = (MIN_EXPERT_LABELS as f64 / total as f64).min(1.0);
        Self {
            experiment: ExperimentKind::VaryExpert,
            points: log_spaced(lo, 1.0, DEFAULT_GRID_POINTS),
            n_expert: None,
            reps: DEFAULT_REPS,
            base_seed,
            estimators: default_estimators(),
            aggregation: Aggregation::Pooled,
        }
    }

    /// Experiment 2 with `n_expert` labels on a corpus of `available` rows:
    /// 8 corpus sizes from `n_expert` up to every row.
    pub fn vary_total(n_expert: usize, available: usize, base_seed: u64) -> Self {
        let lo = (n_expert as f64 / available as f64).min(1.0);
        Self {
            experiment: ExperimentKind::VaryTotal,
            points: log_spaced(lo, 1.0, DEFAULT_GRID_POINTS),
            n_expert: Some(n_expert),
            reps: DEFAULT_REPS,
            base_seed,
            estimators: default_estimators(),
            aggregation: Aggregation::Pooled,
        }
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn with_estimators(mut self, estimators: Vec<EstimatorKind>) -> Self {
        self.estimators = estimators;
        self
    }

    /// `(n_expert, n_total)` at every grid point for a corpus of `available` rows.
    pub fn cell_sizes(&self, available: usize) -> Result<Vec<(usize, usize)>> {
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.points.is_empty() {
            return Err(Error::invalid("grid has no points"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("grid lists no estimators"));
        }
        let scaled = |p: f64| -> Result<usize> {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!("grid point {p} is outside (0, 1]")));
            }
            Ok((p * available as f64).round() as usize)
        };
        self.points
            .iter()
            .map(|&p| {
                let (n, total) = match self.experiment {
                    ExperimentKind::VaryExpert => {
                        if self.n_expert.is_some() {
                            return Err(Error::invalid("vary_expert takes no fixed n_expert"));
                        }
                        (scaled(p)?, available)
                    }
                    ExperimentKind::VaryTotal => {
                        let n = self
                            .n_expert
                            .ok_or_else(|| Error::invalid("vary_total needs a fixed n_expert"))?;
                        let total = scaled(p)?;
                        if total < n {
                            return Err(Error::invalid(format!(
                                "grid point {p} gives {total} rows, fewer than the {n} expert labels"
                            )));
                        }
                        (n, total)
                    }
                };
                if n < MIN_EXPERT_LABELS {
                    return Err(Error::invalid(format!(
                        "grid point {p} gives {n} expert labels, below the floor of {MIN_EXPERT_LABELS}"
                    )));
                }
                Ok((n, total))
            })
            .collect()
    }
}

/// One aggregated metric for one estimator at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset: String,
    pub experiment: ExperimentKind,
    pub estimator: EstimatorKind,
    pub grid_point: f64,
    pub n_expert: usize,
    pub n_total: usize,
    pub metric: Metric,
    pub aggregation: Aggregation,
    /// `None` when every repetition failed.
    pub value: Option<f64>,
    pub mc_halfwidth_2sigma: Option<f64>,
    /// Successful repetitions.
    pub n_reps: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub config_fingerprint: String,
}

impl ResultRecord {
    pub fn summary(&self) -> Option<MetricSummary> {
        let mut grid_point = BTreeMap::new();
        grid_point.insert("point".into(), self.grid_point);
        grid_point.insert("n_expert".into(), self.n_expert as f64);
        grid_point.insert("n_total".into(), self.n_total as f64);
        Some(MetricSummary {
            metric: self.metric,
            value: self.value?,
            mc_halfwidth_2sigma: self.mc_halfwidth_2sigma?,
            n_reps: self.n_reps,
            grid_point,
        })
    }
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    corpus: String,
    grid: &'a ExperimentGrid,
    configs: &'a EstimatorConfigs,
}

fn config_fingerprint(corpus: &AnnotatedCorpus, grid: &ExperimentGrid, configs: &EstimatorConfigs) -> String {
    let input = FingerprintInput {
        corpus: corpus.fingerprint(),
        grid,
        configs,
    };
    let json = serde_json::to_vec(&input).expect("fingerprint input serializes");
    hex::encode(Sha256::digest(json))
}

/// Errors that invalidate the whole run rather than one repetition.
fn aborts(e: &Error) -> bool {
    matches!(e, Error::InvalidArgument(_) | Error::Config(_))
}

type CellOutcome = Vec<Result<CoefficientVector>>;

/// Builds the split corpus for one cell.
fn cell_corpus(
    corpus: &AnnotatedCorpus,
    grid: &ExperimentGrid,
    point: f64,
    rep: u64,
    (n, total): (usize, usize),
) -> Result<AnnotatedCorpus> {
    match grid.experiment {
        ExperimentKind::VaryExpert => {
            corpus.split_expert_subset(n, seed::derive(&[grid.base_seed, SPLIT_STREAM, point.to_bits(), rep]))
        }
        ExperimentKind::VaryTotal => {
            // One permutation per repetition, shared by every grid point:
            // the expert rows are its first n entries and the corpus is its
            // first `total`, so expert sets are identical across corpus sizes.
            let mut order: Vec<usize> = (0..corpus.len()).collect();
            order.shuffle(&mut seed::rng(seed::derive(&[grid.base_seed, SPLIT_STREAM, rep])));
            let mut chosen: Vec<(usize, bool)> = order[..total].iter().enumerate().map(|(k, &i)| (i, k < n)).collect();
            chosen.sort_unstable();
            let rows: Vec<Row> = chosen
                .into_iter()
                .map(|(i, expert)| {
                    let r = &corpus.rows()[i];
                    Row {
                        y_expert: if expert { r.y_expert } else { None },
                        ..r.clone()
                    }
                })
                .collect();
            AnnotatedCorpus::with_feature_names(rows, corpus.feature_names().to_vec())
        }
    }
}

/// Runs Experiment 1 or 2 on a fully gold-labeled corpus.
///
/// Each `(grid point, repetition)` cell is independent and seeded from
/// `(base_seed, point, rep)`, so results do not depend on `parallelism`.
pub fn run_experiment(
    corpus: &AnnotatedCorpus,
    grid: &ExperimentGrid,
    configs: &EstimatorConfigs,
    dataset: &str,
    parallelism: usize,
) -> Result<Vec<ResultRecord>> {
    if !corpus.fully_labeled() {
        return Err(Error::invalid("experiments need gold labels on every row"));
    }
    configs.solver.validate()?;
    configs.ppi.validate()?;
    let sizes = grid.cell_sizes(corpus.len())?;
    let reference = ReferenceCache::new().get_or_fit(corpus, &configs.solver)?.theta;
    let fingerprint = config_fingerprint(corpus, grid, configs);

    let cells: Vec<(usize, u64)> = (0..grid.points.len())
        .flat_map(|g| (0..grid.reps as u64).map(move |r| (g, r)))
        .collect();
    let run_cell = |&(g, rep): &(usize, u64)| -> Result<CellOutcome> {
        let point = grid.points[g];
        let split = cell_corpus(corpus, grid, point, rep, sizes[g])?;
        let est_seed = seed::derive(&[grid.base_seed, ESTIMATOR_STREAM, point.to_bits(), rep]);
        grid.estimators
            .iter()
            .map(|&kind| {
                if kind == EstimatorKind::Reference {
                    return Ok(Ok(reference.clone()));
                }
                match run_estimator(kind, &split, configs, est_seed) {
                    Ok(report) => Ok(Ok(report.theta)),
                    Err(e) if aborts(&e) => Err(e),
                    Err(e) => Ok(Err(e)),
                }
            })
            .collect()
    };
    let outcomes: Vec<CellOutcome> =
        with_pool(parallelism, || cells.par_iter().map(run_cell).collect::<Result<Vec<_>>>())??;

    let mut records = Vec::new();
    for (g, &point) in grid.points.iter().enumerate() {
        let cell_block = &outcomes[g * grid.reps..(g + 1) * grid.reps];
        for (e, &kind) in grid.estimators.iter().enumerate() {
            let thetas: Vec<CoefficientVector> = cell_block
                .iter()
                .filter_map(|cell| cell[e].as_ref().ok().cloned())
                .collect();
            let failures = grid.reps - thetas.len();
            let summaries = if thetas.is_empty() {
                vec![(Metric::Srmse, None), (Metric::StdBias, None)]
            } else {
                vec![
                    (Metric::Srmse, Some(srmse(&thetas, &reference, grid.aggregation)?)),
                    (Metric::StdBias, Some(standardized_bias(&thetas, &reference, grid.aggregation)?)),
                ]
            };
            for (metric, summary) in summaries {
                records.push(ResultRecord {
                    dataset: dataset.to_string(),
                    experiment: grid.experiment,
                    estimator: kind,
                    grid_point: point,
                    n_expert: sizes[g].0,
                    n_total: sizes[g].1,
                    metric,
                    aggregation: grid.aggregation,
                    value: summary.as_ref().map(|s| s.value),
                    mc_halfwidth_2sigma: summary.as_ref().map(|s| s.mc_halfwidth_2sigma),
                    n_reps: thetas.len(),
                    failures,
                    failure_rate: failures as f64 / grid.reps as f64,
                    config_fingerprint: fingerprint.clone(),
                });
            }
        }
    }
    Ok(records)
}
