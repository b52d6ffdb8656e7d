//! Design-based supervised learning.
//!
//! A model `g` of the gold label given the LLM label and the features is
//! cross-fitted on the labeled rows. Each row gets the pseudo-outcome
//!
//! ```text
//! y_tilde = g(y_llm, x) + (b / pi) * (y_expert - g(y_llm, x))
//! ```
//!
//! whose expectation over the known selection design equals the gold label
//! whatever `g` is. The logistic moment equation is then solved with
//! `y_tilde` as the response over all rows.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{sandwich_covariance, sigmoid, solve_moment, MomentProblem, SolverConfig};
use crate::model::{AnnotatedCorpus, DesignMatrix, EstimateReport, EstimatorKind, SelectionDesign};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GLearner {
    /// Logistic regression of the gold label on `(1, y_llm, x_1..x_p)`.
    LogisticOnYgenAndX,
    /// Mean gold label within each LLM-label class.
    MeanByYgen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DslConfig {
    pub folds: usize,
    pub g_learner: GLearner,
    pub solver: SolverConfig,
    /// Selection design; `None` uses the uniform design realized by the
    /// corpus split, `pi = n / N`.
    pub design: Option<SelectionDesign>,
}

impl Default for DslConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            g_learner: GLearner::LogisticOnYgenAndX,
            solver: SolverConfig::default(),
            design: None,
        }
    }
}

/// Pseudo-outcomes plus the cross-fitting bookkeeping that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOutcomes {
    pub y_tilde: Vec<f64>,
    pub g_hat: Vec<f64>,
    pub fold_of: Vec<usize>,
    /// Row indices each fold's model was trained on.
    pub trained_on: Vec<Vec<usize>>,
    /// Folds whose primary learner failed and used the class-mean fallback.
    pub fallback_folds: Vec<usize>,
    pub pi: f64,
}

impl PseudoOutcomes {
    pub fn fraction_outside_unit(&self) -> f64 {
        let out = self.y_tilde.iter().filter(|&&v| !(0.0..=1.0).contains(&v)).count();
        out as f64 / self.y_tilde.len() as f64
    }
}

/// `g + (b / pi) (y - g)`; `y_expert` is ignored when the row is not selected.
pub fn pseudo_outcome(g: f64, y_expert: Option<f64>, pi: f64) -> f64 {
    match y_expert {
        Some(y) => g + (y - g) / pi,
        None => g,
    }
}

/// A fitted outcome model for one fold.
#[derive(Debug, Clone)]
enum FittedG {
    Logistic(DVector<f64>),
    ClassMean { given_0: f64, given_1: f64 },
}

impl FittedG {
    fn predict(&self, y_llm: f64, x: nalgebra::MatrixView<'_, f64, nalgebra::U1, nalgebra::Dyn, nalgebra::U1, nalgebra::Dyn>) -> f64 {
        match self {
            FittedG::Logistic(beta) => {
                // Learner features: (1, y_llm, x_1..x_p); x here includes the intercept.
                let mut eta = beta[0] + beta[1] * y_llm;
                for j in 1..x.len() {
                    eta += beta[j + 1] * x[j];
                }
                sigmoid(eta)
            }
            FittedG::ClassMean { given_0, given_1 } => {
                if y_llm > 0.5 {
                    *given_1
                } else {
                    *given_0
                }
            }
        }
    }
}

fn fit_class_mean(design: &DesignMatrix, train: &[usize]) -> FittedG {
    let mut sums = [0.0; 2];
    let mut counts = [0.0; 2];
    let mut total = 0.0;
    for &i in train {
        let c = (design.y_llm[i] > 0.5) as usize;
        let y = design.y_expert[i].expect("training rows are labeled");
        sums[c] += y;
        counts[c] += 1.0;
        total += y;
    }
    let overall = total / train.len() as f64;
    let mean = |c: usize| if counts[c] > 0.0 { sums[c] / counts[c] } else { overall };
    FittedG::ClassMean {
        given_0: mean(0),
        given_1: mean(1),
    }
}

fn fit_logistic_g(design: &DesignMatrix, train: &[usize], solver: &SolverConfig) -> Result<FittedG> {
    let k = design.x.ncols();
    let x = DMatrix::from_fn(train.len(), k + 1, |r, j| {
        let i = train[r];
        match j {
            0 => 1.0,
            1 => design.y_llm[i],
            _ => design.x[(i, j - 1)],
        }
    });
    let y = DVector::from_iterator(train.len(), train.iter().map(|&i| design.y_expert[i].expect("labeled")));
    let problem = MomentProblem::new(&x, &y, None)?;
    let sol = solve_moment(&problem, solver)?;
    Ok(FittedG::Logistic(sol.theta.as_dvector()))
}

fn assign_folds(design: &DesignMatrix, folds: usize, seed_value: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed_value);
    let mut labeled: Vec<usize> = Vec::new();
    let mut unlabeled: Vec<usize> = Vec::new();
    for (i, y) in design.y_expert.iter().enumerate() {
        if y.is_some() {
            labeled.push(i);
        } else {
            unlabeled.push(i);
        }
    }
    labeled.shuffle(&mut rng);
    unlabeled.shuffle(&mut rng);
    let mut fold_of = vec![0; design.nrows()];
    for (pos, &i) in labeled.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    for (pos, &i) in unlabeled.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    fold_of
}

/// Cross-fits the outcome model and forms the pseudo-outcomes.
pub fn crossfit_g(corpus: &AnnotatedCorpus, config: &DslConfig, seed_value: u64) -> Result<PseudoOutcomes> {
    config.solver.validate()?;
    let design = corpus.design_matrix()?;
    let n = corpus.n_selected();
    let k = config.folds;
    if k < 2 {
        return Err(Error::invalid("DSL needs at least 2 folds"));
    }
    if k > n {
        return Err(Error::insufficient(format!("{k} folds for {n} labeled rows")));
    }
    let selection = match config.design {
        Some(d) => d,
        None => SelectionDesign::from_corpus(corpus)?,
    };
    let pi = selection.uniform_pi();

    let fold_of = assign_folds(&design, k, seed_value);
    let need = corpus.p() + 3;
    let trained_on: Vec<Vec<usize>> = (0..k)
        .map(|f| {
            (0..design.nrows())
                .filter(|&i| design.y_expert[i].is_some() && fold_of[i] != f)
                .collect()
        })
        .collect();
    if let Some((f, t)) = trained_on.iter().enumerate().find(|(_, t)| t.len() < need) {
        return Err(Error::insufficient(format!(
            "fold {f} trains on {} labeled rows, need at least {need}",
            t.len()
        )));
    }

    let models: Vec<(FittedG, bool)> = trained_on
        .par_iter()
        .map(|train| match config.g_learner {
            GLearner::MeanByYgen => (fit_class_mean(&design, train), false),
            GLearner::LogisticOnYgenAndX => match fit_logistic_g(&design, train, &config.solver) {
                Ok(m) => (m, false),
                Err(_) => (fit_class_mean(&design, train), true),
            },
        })
        .collect();

    let mut g_hat = vec![0.0; design.nrows()];
    let mut y_tilde = vec![0.0; design.nrows()];
    for i in 0..design.nrows() {
        let (model, _) = &models[fold_of[i]];
        let g = model.predict(design.y_llm[i], design.x.row(i));
        g_hat[i] = g;
        y_tilde[i] = pseudo_outcome(g, design.y_expert[i], pi);
    }
    if y_tilde.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoRoot("non-finite pseudo-outcome".into()));
    }
    let fallback_folds = models
        .iter()
        .enumerate()
        .filter_map(|(f, (_, fb))| fb.then_some(f))
        .collect();
    Ok(PseudoOutcomes {
        y_tilde,
        g_hat,
        fold_of,
        trained_on,
        fallback_folds,
        pi,
    })
}

pub fn estimate_dsl(corpus: &AnnotatedCorpus, config: &DslConfig, seed_value: u64) -> Result<EstimateReport> {
    let pseudo = crossfit_g(corpus, config, seed_value)?;
    let design = corpus.design_matrix()?;
    let y = DVector::from_column_slice(&pseudo.y_tilde);
    let problem = MomentProblem::new(&design.x, &y, None)?;
    let sol = solve_moment(&problem, &config.solver).map_err(|e| match e {
        Error::NoRoot(msg) => Error::NoRoot(format!("{msg}; {}", fold_summary(&pseudo))),
        other => other,
    })?;
    let cov = sandwich_covariance(&problem, &sol.theta)?;

    let mut diag = BTreeMap::new();
    diag.insert("folds".into(), config.folds as f64);
    diag.insert(
        "learner_logistic".into(),
        f64::from(config.g_learner == GLearner::LogisticOnYgenAndX),
    );
    diag.insert("fallback_folds".into(), pseudo.fallback_folds.len() as f64);
    diag.insert("fraction_outside_unit".into(), pseudo.fraction_outside_unit());
    diag.insert("pi".into(), pseudo.pi);
    diag.insert("iterations".into(), sol.iterations as f64);
    diag.insert("rows".into(), corpus.len() as f64);
    diag.insert("labeled_rows".into(), corpus.n_selected() as f64);
    diag.insert("solver_tol".into(), config.solver.tol);
    EstimateReport::new(EstimatorKind::Dsl, sol.theta, cov, diag)
}

fn fold_summary(p: &PseudoOutcomes) -> String {
    let k = p.trained_on.len();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (i, &f) in p.fold_of.iter().enumerate() {
        sums[f] += p.y_tilde[i];
        counts[f] += 1;
    }
    let means: Vec<String> = (0..k)
        .map(|f| format!("fold {f}: mean y_tilde {:.4} over {} rows", sums[f] / counts[f].max(1) as f64, counts[f]))
        .collect();
    means.join(", ")
}
