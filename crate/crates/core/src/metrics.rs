//! Standardized error metrics and feature-correlation analysis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotatedCorpus, CoefficientVector};

/// Reference coefficients at or below this magnitude cannot standardize.
pub const EPSILON_REF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Srmse,
    StdBias,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Srmse => "srmse",
            Metric::StdBias => "std_bias",
        }
    }
}

/// How standardized errors are pooled across coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Average over repetitions and all coefficients, intercept included.
    #[default]
    Pooled,
    /// A single coefficient (index into theta, 0 = intercept).
    Coefficient(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub value: f64,
    /// Two Monte-Carlo standard errors.
    pub mc_halfwidth_2sigma: f64,
    pub n_reps: usize,
    pub grid_point: BTreeMap<String, f64>,
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let sd = (ss / (m - 1.0)).sqrt();
    (mean, sd / m.sqrt())
}

/// Per-repetition standardized errors `(theta_k - ref_k) / ref_k` over the
/// selected coefficients.
fn standardized_errors(
    samples: &[CoefficientVector],
    reference: &CoefficientVector,
    agg: Aggregation,
) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to summarize"));
    }
    let coords: Vec<usize> = match agg {
        Aggregation::Pooled => (0..reference.len()).collect(),
        Aggregation::Coefficient(k) if k < reference.len() => vec![k],
        Aggregation::Coefficient(k) => {
            return Err(Error::invalid(format!("coefficient {k} out of range")));
        }
    };
    for &k in &coords {
        if reference[k].abs() <= EPSILON_REF {
            return Err(Error::DegenerateReference { index: k, value: reference[k] });
        }
    }
    samples
        .iter()
        .map(|s| {
            if s.len() != reference.len() {
                return Err(Error::invalid("sample and reference lengths differ"));
            }
            Ok(coords.iter().map(|&k| (s[k] - reference[k]) / reference[k]).collect())
        })
        .collect()
}

/// `sqrt(mean over reps and coefficients of ((theta - ref) / ref)^2)`.
///
/// The half-width is the delta-method image of two standard errors of the
/// per-repetition mean squared error.
pub fn srmse(samples: &[CoefficientVector], reference: &CoefficientVector, agg: Aggregation) -> Result<MetricSummary> {
    let errs = standardized_errors(samples, reference, agg)?;
    let per_rep: Vec<f64> = errs
        .iter()
        .map(|e| compensated_sum(e.iter().map(|v| v * v)) / e.len() as f64)
        .collect();
    let (mse, se) = mean_and_se(&per_rep);
    let value = mse.sqrt();
    let halfwidth = if value > 0.0 { 2.0 * se / (2.0 * value) } else { 0.0 };
    Ok(MetricSummary {
        metric: Metric::Srmse,
        value,
        mc_halfwidth_2sigma: halfwidth,
        n_reps: samples.len(),
        grid_point: BTreeMap::new(),
    })
}

/// Signed mean of the standardized errors.
pub fn standardized_bias(
    samples: &[CoefficientVector],
    reference: &CoefficientVector,
    agg: Aggregation,
) -> Result<MetricSummary> {
    let errs = standardized_errors(samples, reference, agg)?;
    let per_rep: Vec<f64> = errs
        .iter()
        .map(|e| compensated_sum(e.iter().copied()) / e.len() as f64)
        .collect();
    let (value, se) = mean_and_se(&per_rep);
    Ok(MetricSummary {
        metric: Metric::StdBias,
        value,
        mc_halfwidth_2sigma: 2.0 * se,
        n_reps: samples.len(),
        grid_point: BTreeMap::new(),
    })
}

/// Pairwise Pearson r^2 between feature columns, and the columns pruned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub feature_names: Vec<String>,
    /// `p x p`, indexed by 0-based feature position.
    pub r2: Vec<Vec<f64>>,
    /// Removed features as design-column indices (1-based: feature `x_j` is column `j`).
    pub pruned: Vec<usize>,
    /// Design-column indices kept, in order.
    pub retained: Vec<usize>,
}

pub fn correlation_r2(corpus: &AnnotatedCorpus) -> Result<Vec<Vec<f64>>> {
    let p = corpus.p();
    let n = corpus.len() as f64;
    let cols: Vec<Vec<f64>> = (0..p).map(|j| corpus.rows().iter().map(|r| r.x[j]).collect()).collect();
    let mut centered = Vec::with_capacity(p);
    for (j, col) in cols.iter().enumerate() {
        let mean = compensated_sum(col.iter().copied()) / n;
        let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let ss = compensated_sum(c.iter().map(|v| v * v));
        if !(ss > 0.0) {
            return Err(Error::UndefinedCorrelation(corpus.feature_names()[j].clone()));
        }
        centered.push((c, ss));
    }
    let mut r2 = vec![vec![0.0; p]; p];
    for a in 0..p {
        r2[a][a] = 1.0;
        for b in (a + 1)..p {
            let (ca, sa) = &centered[a];
            let (cb, sb) = &centered[b];
            let cross = compensated_sum(ca.iter().zip(cb).map(|(x, y)| x * y));
            let v = (cross * cross / (sa * sb)).clamp(0.0, 1.0);
            r2[a][b] = v;
            r2[b][a] = v;
        }
    }
    Ok(r2)
}

/// Removes the latter feature of every pair with `r^2 > threshold`,
/// scanning pairs `(j, k)`, `j < k`, in ascending index order.
/// The intercept is never touched.
pub fn prune_collinear(corpus: &AnnotatedCorpus, threshold: f64) -> Result<(AnnotatedCorpus, CorrelationReport)> {
    let p = corpus.p();
    if p == 0 {
        return Err(Error::invalid("collinearity pruning needs at least one feature"));
    }
    let r2 = correlation_r2(corpus)?;
    let mut removed = vec![false; p];
    for (j, row) in r2.iter().enumerate() {
        for k in (j + 1)..p {
            if !removed[k] && row[k] > threshold {
                removed[k] = true;
            }
        }
    }
    let keep: Vec<usize> = (0..p).filter(|&j| !removed[j]).collect();
    let pruned_corpus = corpus.select_features(&keep)?;
    let report = CorrelationReport {
        feature_names: corpus.feature_names().to_vec(),
        r2,
        pruned: (0..p).filter(|&j| removed[j]).map(|j| j + 1).collect(),
        retained: keep.iter().map(|&j| j + 1).collect(),
    };
    Ok((pruned_corpus, report))
}

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.9;
