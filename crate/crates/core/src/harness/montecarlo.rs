use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_estimator, with_pool, EstimatorConfigs};
use crate::error::{Error, Result};
use crate::metrics::{srmse, standardized_bias, Aggregation, MetricSummary};
use crate::model::{CoefficientVector, EstimateReport, EstimatorKind};
use crate::seed;
use crate::synth::{generate, SynthSpec};

/// Repeated draws of a synthetic corpus, scored against the generating
/// coefficients instead of a reference fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSpec {
    pub synth: SynthSpec,
    pub n_expert: usize,
    pub reps: usize,
    pub base_seed: u64,
    pub estimators: Vec<EstimatorKind>,
}

#[derive(Debug, Clone)]
pub struct MonteCarloOutcome {
    pub estimator: EstimatorKind,
    pub truth: CoefficientVector,
    /// Successful repetitions, in repetition order.
    pub estimates: Vec<EstimateReport>,
    pub failures: usize,
}

impl MonteCarloOutcome {
    fn thetas(&self) -> Vec<CoefficientVector> {
        self.estimates.iter().map(|r| r.theta.clone()).collect()
    }

    /// Share of repetitions whose 2-sigma interval covers the truth, per coefficient.
    pub fn coverage(&self) -> Vec<f64> {
        let m = self.estimates.len() as f64;
        let mut hits = vec![0usize; self.truth.len()];
        for r in &self.estimates {
            for (h, c) in hits.iter_mut().zip(r.covers(&self.truth)) {
                *h += c as usize;
            }
        }
        hits.into_iter().map(|h| h as f64 / m).collect()
    }

    pub fn srmse(&self, agg: Aggregation) -> Result<MetricSummary> {
        srmse(&self.thetas(), &self.truth, agg)
    }

    pub fn standardized_bias(&self, agg: Aggregation) -> Result<MetricSummary> {
        standardized_bias(&self.thetas(), &self.truth, agg)
    }

    /// Across-repetition mean of each coefficient.
    pub fn mean_theta(&self) -> Vec<f64> {
        let m = self.estimates.len() as f64;
        (0..self.truth.len())
            .map(|k| crate::metrics::compensated_sum(self.estimates.iter().map(|r| r.theta[k])) / m)
            .collect()
    }
}

/// Draws `reps` corpora, splits each, and fits every listed estimator.
/// The reference estimator is fit on the full gold labels of each draw.
pub fn run_monte_carlo(
    spec: &MonteCarloSpec,
    configs: &EstimatorConfigs,
    parallelism: usize,
) -> Result<Vec<MonteCarloOutcome>> {
    if spec.reps == 0 || spec.estimators.is_empty() {
        return Err(Error::invalid("monte carlo needs at least one repetition and one estimator"));
    }
    let truth = CoefficientVector::new(spec.synth.theta_true.clone())?;
    let run_rep = |rep: u64| -> Result<Vec<Result<EstimateReport>>> {
        let full = generate(&spec.synth.with_seed(seed::derive(&[spec.base_seed, 0, rep])))?;
        let split = full.split_expert_subset(spec.n_expert, seed::derive(&[spec.base_seed, 1, rep]))?;
        let est_seed = seed::derive(&[spec.base_seed, 2, rep]);
        Ok(spec
            .estimators
            .iter()
            .map(|&kind| {
                let corpus = if kind == EstimatorKind::Reference { &full } else { &split };
                run_estimator(kind, corpus, configs, est_seed)
            })
            .collect())
    };
    let reps: Vec<Vec<Result<EstimateReport>>> = with_pool(parallelism, || {
        (0..spec.reps as u64).into_par_iter().map(run_rep).collect::<Result<Vec<_>>>()
    })??;

    Ok(spec
        .estimators
        .iter()
        .enumerate()
        .map(|(e, &kind)| {
            let estimates: Vec<EstimateReport> = reps.iter().filter_map(|r| r[e].as_ref().ok().cloned()).collect();
            MonteCarloOutcome {
                estimator: kind,
                truth: truth.clone(),
                failures: spec.reps - estimates.len(),
                estimates,
            }
        })
        .collect())
}
