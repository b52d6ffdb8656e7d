//! Classical, imputation and reference estimators.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::{sandwich_covariance, solve_moment, MomentProblem, SolverConfig};
use crate::model::{AnnotatedCorpus, EstimateReport, EstimatorKind};

/// Plain logistic fit with sandwich covariance.
pub(crate) fn fit_logistic(
    kind: EstimatorKind,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &SolverConfig,
) -> Result<EstimateReport> {
    let problem = MomentProblem::new(x, y, None)?;
    let sol = solve_moment(&problem, config)?;
    let cov = sandwich_covariance(&problem, &sol.theta)?;
    let mut diag = BTreeMap::new();
    diag.insert("iterations".into(), sol.iterations as f64);
    diag.insert("moment_norm".into(), sol.moment_norm);
    diag.insert("solver_tol".into(), config.tol);
    diag.insert("rows".into(), x.nrows() as f64);
    EstimateReport::new(kind, sol.theta, cov, diag)
}

/// Fit on the expert-labeled rows only.
pub fn estimate_classical(corpus: &AnnotatedCorpus, config: &SolverConfig) -> Result<EstimateReport> {
    let design = corpus.design_matrix()?;
    let idx = design.selected();
    let need = corpus.p() + 2;
    if idx.len() < need {
        return Err(Error::insufficient(format!(
            "classical estimator needs at least {need} labeled rows, found {}",
            idx.len()
        )));
    }
    let (x, y) = design.labeled_part(&idx);
    fit_logistic(EstimatorKind::Classical, &x, &y, config)
}

/// Fit on all rows with the LLM labels as the outcome.
pub fn estimate_imputation(corpus: &AnnotatedCorpus, config: &SolverConfig) -> Result<EstimateReport> {
    let need = corpus.p() + 2;
    if corpus.len() < need {
        return Err(Error::insufficient(format!(
            "imputation estimator needs at least {need} rows, found {}",
            corpus.len()
        )));
    }
    let design = corpus.design_matrix()?;
    fit_logistic(EstimatorKind::Imputation, &design.x, &design.y_llm, config)
}

/// Fit on gold labels for every row. Errors if any row lacks one.
pub fn estimate_reference(corpus: &AnnotatedCorpus, config: &SolverConfig) -> Result<EstimateReport> {
    if let Some(row) = corpus.rows().iter().find(|r| !r.selected()) {
        return Err(Error::invalid(format!(
            "reference estimator needs gold labels on every row; row {} has none",
            row.id
        )));
    }
    let design = corpus.design_matrix()?;
    let idx: Vec<usize> = (0..corpus.len()).collect();
    let (x, y) = design.labeled_part(&idx);
    fit_logistic(EstimatorKind::Reference, &x, &y, config)
}

/// Reference fits keyed by corpus fingerprint and solver settings.
#[derive(Debug, Default, Clone)]
pub struct ReferenceCache {
    inner: Arc<Mutex<HashMap<String, EstimateReport>>>,
}

impl ReferenceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_fit(&self, corpus: &AnnotatedCorpus, config: &SolverConfig) -> Result<EstimateReport> {
        let key = format!(
            "{}:{:e}:{}:{:e}",
            corpus.fingerprint(),
            config.tol,
            config.max_iter,
            config.ridge
        );
        if let Some(hit) = self.inner.lock().expect("reference cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let report = estimate_reference(corpus, config)?;
        self.inner
            .lock()
            .expect("reference cache poisoned")
            .insert(key, report.clone());
        Ok(report)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("reference cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
