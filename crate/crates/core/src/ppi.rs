//! Prediction-powered inference for logistic coefficients.
//!
//! The imputation fit `theta_tilde` on all LLM labels is corrected by the
//! rectifier, the mean gap between the expert-label and LLM-label loss
//! gradients on the labeled rows. By default the estimate is the root of the
//! rectified estimating equation. [`PpiStep::OneStep`] instead maps the gap
//! to parameter space with the inverse Hessian of the imputation loss at
//! `theta_tilde`, which is the first Newton step towards that root.
//!
//! For the logistic loss the rectifier does not depend on `theta`, so the
//! rectified equation is again a logistic moment equation, with responses
//! shifted on the labeled rows.
//!
//! Two weightings are available:
//!
//! - [`LambdaMode::Fixed`]: `G_N(theta) + lambda r = 0`; `lambda = 0` is the
//!   imputation estimator and `lambda = 1` classic PPI.
//! - [`LambdaMode::Tuned`]: power tuning. The LLM gradients enter with a
//!   weight `lambda` chosen to minimize the trace of the asymptotic
//!   covariance, and the estimator interpolates between classical
//!   (`lambda = 0`) and classic PPI (`lambda = 1`). Unbiased for any `lambda`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{sigmoid, solve_moment, spd_inverse, spd_solve, weighted_gram, MomentProblem, Solution, SolverConfig};
use crate::model::{AnnotatedCorpus, CoefficientVector, DesignMatrix, EstimateReport, EstimatorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    #[serde(alias = "fixed_one")]
    Fixed,
    Tuned,
}

/// How the rectified equation is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PpiStep {
    /// Solve to the root.
    #[default]
    Root,
    /// A single Newton step from `theta_tilde`. Biased when the imputation
    /// fit is far from the truth.
    OneStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpiConfig {
    pub lambda_mode: LambdaMode,
    /// Rectifier weight in `[0, 1]`, used in fixed mode.
    pub lambda_value: f64,
    pub step: PpiStep,
    pub solver: SolverConfig,
}

/// Power tuning by default, as in the reference PPI package.
impl Default for PpiConfig {
    fn default() -> Self {
        Self {
            lambda_mode: LambdaMode::Tuned,
            lambda_value: 1.0,
            step: PpiStep::Root,
            solver: SolverConfig::default(),
        }
    }
}

impl PpiConfig {
    pub fn tuned() -> Self {
        Self {
            lambda_mode: LambdaMode::Tuned,
            ..Self::default()
        }
    }

    /// Fixed rectifier weight; `with_lambda(1.0)` is classic PPI.
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda_mode: LambdaMode::Fixed,
            lambda_value: lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_value) {
            return Err(Error::invalid(format!(
                "lambda_value {} is outside [0, 1]",
                self.lambda_value
            )));
        }
        self.solver.validate()
    }
}

/// Per-row loss gradients `(sigmoid(x'theta) - y) x` stacked as rows.
fn gradient_rows(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * theta;
    let mut g = x.clone();
    for (j, mut col) in g.column_iter_mut().enumerate() {
        for i in 0..col.len() {
            col[i] = (sigmoid(eta[i]) - y[i]) * x[(i, j)];
        }
    }
    g
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).mean())
}

/// Centered cross-covariance `(1/m) sum (a_i - a_bar)(b_i - b_bar)'` of row samples.
fn cross_cov(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows() as f64;
    let ma = column_means(a);
    let mb = column_means(b);
    let mut ca = a.clone();
    let mut cb = b.clone();
    for j in 0..a.ncols() {
        ca.column_mut(j).add_scalar_mut(-ma[j]);
        cb.column_mut(j).add_scalar_mut(-mb[j]);
    }
    ca.tr_mul(&cb) / m
}

/// Labeled row indices with their design rows, gold labels and LLM labels.
type LabeledRows = (Vec<usize>, DMatrix<f64>, DVector<f64>, DVector<f64>);

fn labeled_rows(design: &DesignMatrix) -> Result<LabeledRows> {
    let idx = design.selected();
    if idx.is_empty() {
        return Err(Error::insufficient("rectifier needs at least one labeled row"));
    }
    let (x, y_exp) = design.labeled_part(&idx);
    let y_llm = DVector::from_iterator(idx.len(), idx.iter().map(|&i| design.y_llm[i]));
    Ok((idx, x, y_exp, y_llm))
}

/// `(1/n) sum_selected [grad l(x, y_expert) - grad l(x, y_llm)]` at `theta`.
pub fn rectifier(corpus: &AnnotatedCorpus, theta: &CoefficientVector) -> Result<DVector<f64>> {
    let design = corpus.design_matrix()?;
    if theta.len() != design.x.ncols() {
        return Err(Error::invalid("theta length does not match the corpus"));
    }
    let (_, x, y_exp, y_llm) = labeled_rows(&design)?;
    Ok(rectifier_at(&x, &y_exp, &y_llm, &theta.as_dvector()))
}

fn rectifier_at(x: &DMatrix<f64>, y_exp: &DVector<f64>, y_llm: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
    let ge = gradient_rows(x, y_exp, theta);
    let gl = gradient_rows(x, y_llm, theta);
    column_means(&(ge - gl))
}

/// The logistic rectifier does not depend on `theta`: `(1/n) sum (y_llm - y_expert) x`.
pub fn rectifier_closed_form(corpus: &AnnotatedCorpus) -> Result<DVector<f64>> {
    let design = corpus.design_matrix()?;
    let (_, x, y_exp, y_llm) = labeled_rows(&design)?;
    let n = x.nrows() as f64;
    Ok(x.tr_mul(&(y_llm - y_exp)) / n)
}

/// Weights of the PPI estimating equation
/// `full * G_N(theta) + labeled * G_n(theta) + rect * r = 0`, where `G_N`
/// and `G_n` are the mean LLM-label loss gradients over all rows and over
/// the labeled rows.
#[derive(Debug, Clone, Copy)]
struct Weighting {
    full: f64,
    labeled: f64,
    rect: f64,
}

fn trace_sandwich(h_inv: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    (h_inv * m * h_inv).trace()
}

pub fn estimate_ppi(corpus: &AnnotatedCorpus, config: &PpiConfig) -> Result<EstimateReport> {
    config.validate()?;
    let need = corpus.p() + 2;
    let big_n = corpus.len();
    if big_n < need {
        return Err(Error::insufficient(format!("PPI needs at least {need} rows, found {big_n}")));
    }
    let design = corpus.design_matrix()?;
    let (idx, xl, y_exp, y_llm_l) = labeled_rows(&design)?;
    let n = xl.nrows();
    if n < need {
        return Err(Error::insufficient(format!(
            "PPI needs at least {need} labeled rows, found {n}"
        )));
    }

    let all = MomentProblem::new(&design.x, &design.y_llm, None)?;
    let imputed = solve_moment(&all, &config.solver)?;
    let theta_tilde = imputed.theta.as_dvector();
    let labeled = MomentProblem::new(&xl, &y_llm_l, None)?;

    let rect = rectifier_at(&xl, &y_exp, &y_llm_l, &theta_tilde);
    let h_full = all.hessian(&theta_tilde);

    let weighting = match config.lambda_mode {
        LambdaMode::Fixed => Weighting {
            full: 1.0,
            labeled: 0.0,
            rect: config.lambda_value,
        },
        LambdaMode::Tuned => {
            let u_all = gradient_rows(&design.x, &design.y_llm, &theta_tilde);
            let u_lab = gradient_rows(&xl, &y_llm_l, &theta_tilde);
            let e_lab = gradient_rows(&xl, &y_exp, &theta_tilde);
            let c = cross_cov(&u_lab, &e_lab);
            let v_u = cross_cov(&u_all, &u_all);
            let h_inv = spd_inverse(&h_full)?;
            let denom = 2.0 * trace_sandwich(&h_inv, &v_u);
            let lambda = if denom > 0.0 {
                (trace_sandwich(&h_inv, &(&c + c.transpose())) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            Weighting {
                full: lambda,
                labeled: 1.0 - lambda,
                rect: 1.0,
            }
        }
    };

    let (theta_hat, correction_iterations) = match config.step {
        PpiStep::OneStep => {
            // One Newton step on the weighted equation from theta_tilde, where G_N vanishes.
            let h_lab = labeled.hessian(&theta_tilde);
            let jac = &h_full * weighting.full + &h_lab * weighting.labeled;
            let g_lab = -labeled.mean_moment(&theta_tilde);
            let value = &g_lab * weighting.labeled + &rect * weighting.rect;
            (&theta_tilde - spd_solve(&jac, &value)?, 1)
        }
        PpiStep::Root => {
            let sol = solve_rectified(&design, &idx, &y_exp, weighting, &config.solver)?;
            (sol.theta.as_dvector(), sol.iterations)
        }
    };
    let theta = CoefficientVector::from_dvector(&theta_hat)?;

    let covariance = ppi_covariance(&design.x, &design.y_llm, &xl, &y_exp, &y_llm_l, &theta_hat, weighting)?;

    let mut diag = BTreeMap::new();
    let lambda = match config.lambda_mode {
        LambdaMode::Fixed => weighting.rect,
        LambdaMode::Tuned => weighting.full,
    };
    diag.insert("lambda".into(), lambda);
    diag.insert("lambda_tuned".into(), f64::from(config.lambda_mode == LambdaMode::Tuned));
    diag.insert("rectifier_norm".into(), rect.norm());
    diag.insert("iterations".into(), imputed.iterations as f64);
    diag.insert("correction_iterations".into(), correction_iterations as f64);
    diag.insert("one_step".into(), f64::from(config.step == PpiStep::OneStep));
    diag.insert("labeled_rows".into(), n as f64);
    diag.insert("rows".into(), big_n as f64);
    diag.insert("solver_tol".into(), config.solver.tol);
    EstimateReport::new(EstimatorKind::Ppi, theta, covariance, diag)
}

/// Root of `full G_N + labeled G_n + rect r = 0` as a weighted logistic
/// moment equation. Row `i` gets weight `full / N + b_i labeled / n` and a
/// response that absorbs the rectifier on the labeled rows.
fn solve_rectified(
    design: &DesignMatrix,
    idx: &[usize],
    y_exp: &DVector<f64>,
    w: Weighting,
    solver: &SolverConfig,
) -> Result<Solution> {
    let big_n = design.nrows() as f64;
    let n = idx.len() as f64;
    let mut y = design.y_llm.clone();
    let sol = if w.labeled == 0.0 {
        // Equal weights: y_i = y_llm - rect (N / n) b_i (y_llm - y_expert).
        let scale = w.rect * big_n / n;
        for (k, &i) in idx.iter().enumerate() {
            y[i] -= scale * (design.y_llm[i] - y_exp[k]);
        }
        solve_moment(&MomentProblem::new(&design.x, &y, None)?, solver)?
    } else {
        let mut weights = DVector::from_element(design.nrows(), w.full / big_n);
        for (k, &i) in idx.iter().enumerate() {
            let wi = weights[i] + w.labeled / n;
            let mass = w.full / big_n * design.y_llm[i] + (w.labeled - w.rect) / n * design.y_llm[i]
                + w.rect / n * y_exp[k];
            weights[i] = wi;
            y[i] = mass / wi;
        }
        // Only the root matters; unit mean weight keeps the solver tolerance meaningful.
        let mean_w = weights.mean();
        weights /= mean_w;
        solve_moment(&MomentProblem::new(&design.x, &y, Some(&weights))?, solver)?
    };
    Ok(sol)
}

/// Delta-method covariance of the weighted PPI equation at `theta`.
///
/// With `u` the LLM-label gradients (all rows) and
/// `z = labeled * u + rect * (e - u)` on the labeled rows, the equation's
/// variance is `full^2 V_u / N + V_z / n + 2 full sym(C_uz) / N`; the cross
/// term is present because the labeled rows are a subset of all rows.
fn ppi_covariance(
    x: &DMatrix<f64>,
    y_llm: &DVector<f64>,
    xl: &DMatrix<f64>,
    y_exp: &DVector<f64>,
    y_llm_l: &DVector<f64>,
    theta: &DVector<f64>,
    w: Weighting,
) -> Result<DMatrix<f64>> {
    let big_n = x.nrows() as f64;
    let n = xl.nrows() as f64;
    let u_all = gradient_rows(x, y_llm, theta);
    let u_lab = gradient_rows(xl, y_llm_l, theta);
    let e_lab = gradient_rows(xl, y_exp, theta);
    let z = &u_lab * (w.labeled - w.rect) + &e_lab * w.rect;

    let c_uz = cross_cov(&u_lab, &z);
    let meat = cross_cov(&u_all, &u_all) * (w.full * w.full / big_n)
        + cross_cov(&z, &z) / n
        + (&c_uz + c_uz.transpose()) * (w.full / big_n);

    let eta_all = x * theta;
    let eta_lab = xl * theta;
    let s_all = DVector::from_fn(x.nrows(), |i, _| {
        let p = sigmoid(eta_all[i]);
        p * (1.0 - p) / big_n
    });
    let s_lab = DVector::from_fn(xl.nrows(), |i, _| {
        let p = sigmoid(eta_lab[i]);
        p * (1.0 - p) / n
    });
    let jac = weighted_gram(x, &s_all) * w.full + weighted_gram(xl, &s_lab) * w.labeled;
    let jac_inv = spd_inverse(&jac)?;
    let cov = &jac_inv * meat * &jac_inv;
    Ok((&cov + cov.transpose()) * 0.5)
}
