//! Benchmark protocols, Monte-Carlo drivers, cost arithmetic and result files.

mod cost;
mod experiment;
mod montecarlo;
mod output;

pub use cost::{cost_breakeven, CostBreakeven, CostModel};
pub use experiment::{
    log_spaced, run_experiment, ExperimentGrid, ExperimentKind, ResultRecord, DEFAULT_GRID_POINTS, DEFAULT_REPS,
    MIN_EXPERT_LABELS,
};
pub use montecarlo::{run_monte_carlo, MonteCarloOutcome, MonteCarloSpec};
pub use output::{emit_results, read_jsonl, to_jsonl, to_wide_csv};

use serde::{Deserialize, Serialize};

use crate::baseline::{estimate_classical, estimate_imputation, estimate_reference};
use crate::dsl::{estimate_dsl, DslConfig};
use crate::error::{Error, Result};
use crate::glm::SolverConfig;
use crate::model::{AnnotatedCorpus, EstimateReport, EstimatorKind};
use crate::ppi::{estimate_ppi, PpiConfig};

/// Environment variable holding the default worker count.
pub const PARALLELISM_ENV: &str = "DEBIAS_PARALLELISM";

/// Settings shared by every estimator call in a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfigs {
    pub solver: SolverConfig,
    pub ppi: PpiConfig,
    pub dsl: DslConfig,
}

/// Runs one estimator on a split corpus. `seed` drives DSL's fold assignment.
pub fn run_estimator(
    kind: EstimatorKind,
    corpus: &AnnotatedCorpus,
    configs: &EstimatorConfigs,
    seed: u64,
) -> Result<EstimateReport> {
    match kind {
        EstimatorKind::Classical => estimate_classical(corpus, &configs.solver),
        EstimatorKind::Imputation => estimate_imputation(corpus, &configs.solver),
        EstimatorKind::Reference => estimate_reference(corpus, &configs.solver),
        EstimatorKind::Ppi => estimate_ppi(corpus, &configs.ppi),
        EstimatorKind::Dsl => estimate_dsl(corpus, &configs.dsl, seed),
    }
}

/// Worker count: the explicit value, else `DEBIAS_PARALLELISM`, else all cores.
pub fn resolve_parallelism(explicit: Option<usize>) -> Result<usize> {
    if let Some(n) = explicit {
        return if n == 0 {
            Err(Error::Config("parallelism must be at least 1".into()))
        } else {
            Ok(n)
        };
    }
    match std::env::var(PARALLELISM_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{PARALLELISM_ENV}='{v}' is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub(crate) fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
