//! Logistic estimating-equation solver and sandwich covariance.
//!
//! The moment is `m(y, x; theta) = (y - sigmoid(x'theta)) x`. Its mean over
//! the rows is minus the gradient of the convex objective
//! `(1/N) sum w (softplus(x'theta) - y x'theta)`, which is well defined for
//! any real `y`. That is what lets the same Newton iteration fit binary
//! labels and the real-valued pseudo-outcomes used by DSL.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IterationRecord, Result};
use crate::model::CoefficientVector;

/// `||theta||_inf` beyond which the fit is declared separated.
pub const SEPARATION_BOUND: f64 = 1e4;

/// Relative Newton step below which a small moment counts as converged.
const STEP_TOL: f64 = 1e-6;

const RANK_TOL: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;
const ARMIJO_C: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Bound on the max-norm of the mean moment vector.
    pub tol: f64,
    pub max_iter: usize,
    /// L2 penalty on all coefficients. Diagnostic use only; benchmarks keep it at 0.
    pub ridge: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            ridge: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("solver tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("solver max_iter must be at least 1"));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::invalid("solver ridge must be nonnegative"));
        }
        Ok(())
    }
}

/// Rows `x`, responses `y` and optional nonnegative row weights.
#[derive(Debug, Clone, Copy)]
pub struct MomentProblem<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    weights: Option<&'a DVector<f64>>,
}

impl<'a> MomentProblem<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, weights: Option<&'a DVector<f64>>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("moment problem with an empty design"));
        }
        if y.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "response has {} entries for {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("response has non-finite entries"));
        }
        if let Some(w) = weights {
            if w.len() != x.nrows() {
                return Err(Error::invalid("weights length does not match rows"));
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid("weights must be finite and nonnegative"));
            }
            if !(w.sum() > 0.0) {
                return Err(Error::invalid("weights sum to zero"));
            }
        }
        Ok(Self { x, y, weights })
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn linear_predictor(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.x * theta
    }

    /// `(1/N) sum w_i (y_i - sigmoid(x_i'theta)) x_i`.
    pub fn mean_moment(&self, theta: &DVector<f64>) -> DVector<f64> {
        let eta = self.linear_predictor(theta);
        let n = self.nrows() as f64;
        let r = DVector::from_fn(self.nrows(), |i, _| self.weight(i) * (self.y[i] - sigmoid(eta[i])) / n);
        self.x.tr_mul(&r)
    }

    /// `(1/N) sum w_i sigmoid'(x_i'theta) x_i x_i'`, the negated moment Jacobian.
    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.linear_predictor(theta);
        let n = self.nrows() as f64;
        let s = DVector::from_fn(self.nrows(), |i, _| {
            let p = sigmoid(eta[i]);
            self.weight(i) * p * (1.0 - p) / n
        });
        weighted_gram(self.x, &s)
    }

    /// Jacobian of the mean moment, `-hessian`.
    pub fn moment_jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        -self.hessian(theta)
    }

    /// Mean quasi-likelihood loss whose gradient is minus the mean moment.
    pub fn loss(&self, theta: &DVector<f64>) -> f64 {
        let eta = self.linear_predictor(theta);
        let n = self.nrows() as f64;
        let mut acc = 0.0;
        for i in 0..self.nrows() {
            acc += self.weight(i) * (softplus(eta[i]) - self.y[i] * eta[i]);
        }
        acc / n
    }

    fn responses_binary(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    fn weighted_mean_response(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.nrows() {
            let w = self.weight(i);
            num += w * self.y[i];
            den += w;
        }
        num / den
    }

    fn has_intercept(&self) -> bool {
        self.ncols() > 0 && self.x.column(0).iter().all(|&v| v == 1.0)
    }

    /// Fails with `SingularDesign` when the weighted design is (numerically)
    /// rank deficient.
    pub fn check_rank(&self) -> Result<()> {
        let active: Vec<usize> = (0..self.nrows()).filter(|&i| self.weight(i) > 0.0).collect();
        let k = self.ncols();
        if active.len() < k {
            return Err(Error::SingularDesign(format!(
                "{} weighted rows for {k} coefficients",
                active.len()
            )));
        }
        let xa = self.x.select_rows(&active);
        let mut normalized = xa.clone();
        for (j, mut col) in normalized.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm == 0.0 {
                return Err(Error::SingularDesign(format!("column {j} is identically zero")));
            }
            col /= norm;
        }
        let gram = normalized.tr_mul(&normalized);
        let eig = gram.symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        if !(min > RANK_TOL * max) {
            return Err(Error::SingularDesign(format!(
                "design is rank deficient (eigenvalue ratio {:e})",
                min / max
            )));
        }
        Ok(())
    }
}

/// Converged root of the estimating equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub theta: CoefficientVector,
    pub iterations: usize,
    pub moment_norm: f64,
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// `sum_i s_i x_i x_i'` computed column-by-column.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let k = x.ncols();
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        let ca = x.column(a);
        for b in a..k {
            let cb = x.column(b);
            let mut acc = 0.0;
            for i in 0..x.nrows() {
                acc += s[i] * ca[i] * cb[i];
            }
            out[(a, b)] = acc;
            out[(b, a)] = acc;
        }
    }
    out
}

/// Solves `A z = b` for symmetric positive definite `A`.
pub(crate) fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularDesign("moment Jacobian is singular".into()))
}

pub(crate) fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.inverse());
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularDesign("moment Jacobian is singular".into()))
}

/// Finds `theta` with `||mean_moment(theta)||_inf <= tol` by damped Newton.
pub fn solve_moment(problem: &MomentProblem<'_>, config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    problem.check_rank()?;
    let k = problem.ncols();
    let ridge = config.ridge;

    if ridge == 0.0 && problem.has_intercept() {
        let mean = problem.weighted_mean_response();
        if !(mean > 0.0 && mean < 1.0) {
            return Err(Error::NoRoot(format!(
                "weighted mean response {mean} is outside (0, 1)"
            )));
        }
    }

    let mut theta = DVector::zeros(k);
    if problem.has_intercept() {
        let mean = problem.weighted_mean_response().clamp(1e-6, 1.0 - 1e-6);
        theta[0] = logit(mean);
    }

    let penalized_moment = |t: &DVector<f64>| {
        let mut g = problem.mean_moment(t);
        if ridge > 0.0 {
            g -= t * ridge;
        }
        g
    };
    let penalized_loss = |t: &DVector<f64>| problem.loss(t) + 0.5 * ridge * t.norm_squared();

    let mut trace = Vec::new();
    let mut g = penalized_moment(&theta);
    let mut loss = penalized_loss(&theta);
    for iteration in 0..config.max_iter {
        let moment_norm = g.amax();
        let mut h = problem.hessian(&theta);
        if ridge > 0.0 {
            for j in 0..k {
                h[(j, j)] += ridge;
            }
        }
        let delta = match spd_solve(&h, &g) {
            Ok(d) => d,
            // A Hessian that degenerates mid-run means the iterates ran off.
            Err(_) if iteration > 0 => return Err(diverged(problem, trace)),
            Err(e) => return Err(e),
        };
        // Under separation the moment vanishes while Newton steps stay
        // large, so a small moment alone is not convergence.
        if moment_norm <= config.tol && delta.amax() <= STEP_TOL * (1.0 + theta.amax()) {
            return Ok(Solution {
                theta: CoefficientVector::from_dvector(&theta)?,
                iterations: iteration,
                moment_norm,
            });
        }
        let decrease = g.dot(&delta);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = &theta + &delta * step;
            let cand_loss = penalized_loss(&cand);
            let cand_g = penalized_moment(&cand);
            if cand_loss.is_finite()
                && (cand_loss <= loss - ARMIJO_C * step * decrease || cand_g.amax() < moment_norm)
            {
                accepted = Some((cand, cand_loss, cand_g));
                break;
            }
            step *= 0.5;
        }
        let theta_norm = theta.amax();
        trace.push(IterationRecord {
            iteration,
            moment_norm,
            theta_norm,
            step,
        });
        let Some((cand, cand_loss, cand_g)) = accepted else {
            return Err(Error::NonConvergence {
                reason: "line search failed to reduce the loss".into(),
                trace,
            });
        };
        theta = cand;
        loss = cand_loss;
        g = cand_g;
        if theta.amax() > SEPARATION_BOUND {
            return Err(diverged(problem, trace));
        }
    }
    if g.amax() <= config.tol {
        return Err(diverged(problem, trace));
    }
    Err(Error::NonConvergence {
        reason: format!("moment norm {:e} above tol after max_iter", g.amax()),
        trace,
    })
}

fn diverged(problem: &MomentProblem<'_>, trace: Vec<IterationRecord>) -> Error {
    if problem.responses_binary() {
        Error::NonConvergence {
            reason: "separation: coefficients diverge while the moment vanishes".into(),
            trace,
        }
    } else {
        Error::NoRoot("coefficients diverge with real-valued responses".into())
    }
}

/// `(1/N) A^-1 B A^-T` with `A = (1/N) sum dm/dtheta`, `B = (1/N) sum m m'`.
pub fn sandwich_covariance(problem: &MomentProblem<'_>, theta: &CoefficientVector) -> Result<DMatrix<f64>> {
    let t = theta.as_dvector();
    if t.len() != problem.ncols() {
        return Err(Error::invalid("theta length does not match design columns"));
    }
    let n = problem.nrows() as f64;
    let bread = problem.hessian(&t);
    let bread_inv = spd_inverse(&bread)?;
    let eta = problem.linear_predictor(&t);
    let s = DVector::from_fn(problem.nrows(), |i, _| {
        let r = problem.weight(i) * (problem.y[i] - sigmoid(eta[i]));
        r * r / n
    });
    let meat = weighted_gram(problem.x, &s);
    let cov = &bread_inv * meat * &bread_inv / n;
    Ok((&cov + cov.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn intercept_only(y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        (DMatrix::from_element(y.len(), 1, 1.0), DVector::from_column_slice(y))
    }

    #[test]
    fn intercept_only_constant_half() {
        let (x, y) = intercept_only(&[0.5; 10]);
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        let sol = solve_moment(&prob, &SolverConfig::default()).unwrap();
        assert!(sol.theta[0].abs() < 1e-10);
    }

    #[test]
    fn intercept_only_closed_form() {
        for c in [0.1, 0.3, 0.77, 0.95] {
            let (x, y) = intercept_only(&[c; 25]);
            let prob = MomentProblem::new(&x, &y, None).unwrap();
            let sol = solve_moment(&prob, &SolverConfig::default()).unwrap();
            assert!((sol.theta[0] - logit(c)).abs() < 1e-7, "c = {c}");
        }
    }

    #[test]
    fn no_root_when_mean_outside_unit_interval() {
        let (x, y) = intercept_only(&[1.2, 1.5, 0.9]);
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        assert!(matches!(solve_moment(&prob, &SolverConfig::default()), Err(Error::NoRoot(_))));
        let (x, y) = intercept_only(&[1.0; 4]);
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        assert!(matches!(solve_moment(&prob, &SolverConfig::default()), Err(Error::NoRoot(_))));
    }

    #[test]
    fn separation_is_reported() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_column_slice(&[0.0, 0.0, 1.0, 1.0]);
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        match solve_moment(&prob, &SolverConfig::default()) {
            Err(Error::NonConvergence { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, 2.0, 1.0, 2.0, 4.0, 1.0, 3.0, 6.0, 1.0, 4.0, 8.0]);
        let y = DVector::from_column_slice(&[0.0, 1.0, 0.0, 1.0]);
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        assert!(matches!(solve_moment(&prob, &SolverConfig::default()), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn invalid_config_rejected() {
        let (x, y) = intercept_only(&[0.0, 1.0]);
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        let bad = SolverConfig { tol: 0.0, ..Default::default() };
        assert!(solve_moment(&prob, &bad).is_err());
        let bad = SolverConfig { max_iter: 0, ..Default::default() };
        assert!(solve_moment(&prob, &bad).is_err());
    }

    #[test]
    fn zero_weights_sum_rejected() {
        let (x, y) = intercept_only(&[0.0, 1.0]);
        let w = DVector::zeros(2);
        assert!(MomentProblem::new(&x, &y, Some(&w)).is_err());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = seed::rng(11);
        for _ in 0..10 {
            let n = 20;
            let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
            let y = DVector::from_fn(n, |_, _| rng.random_range(-0.5..1.5));
            let theta = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let prob = MomentProblem::new(&x, &y, None).unwrap();
            let jac = prob.moment_jacobian(&theta);
            let h = 1e-5;
            for j in 0..3 {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (prob.mean_moment(&up) - prob.mean_moment(&dn)) / (2.0 * h);
                for i in 0..3 {
                    let rel = (fd[i] - jac[(i, j)]).abs() / jac[(i, j)].abs().max(1e-3);
                    assert!(rel < 1e-6, "rel err {rel}");
                }
            }
        }
    }

    #[test]
    fn rescaling_a_column_rescales_its_coefficient() {
        let mut rng = seed::rng(5);
        let n = 200;
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
        let y = DVector::from_fn(n, |i, _| {
            let p = sigmoid(0.3 + 0.8 * x[(i, 1)] - 0.5 * x[(i, 2)]);
            f64::from(rng.random::<f64>() < p)
        });
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        let base = solve_moment(&prob, &SolverConfig::default()).unwrap();
        let c = 7.5;
        let mut xs = x.clone();
        xs.column_mut(2).scale_mut(c);
        let probs = MomentProblem::new(&xs, &y, None).unwrap();
        let scaled = solve_moment(&probs, &SolverConfig::default()).unwrap();
        assert!((scaled.theta[2] - base.theta[2] / c).abs() < 1e-7);
        assert!((scaled.theta[1] - base.theta[1]).abs() < 1e-7);
        let p0 = &x * base.theta.as_dvector();
        let p1 = &xs * scaled.theta.as_dvector();
        assert!((p0 - p1).amax() < 1e-6);
    }

    #[test]
    fn real_valued_responses_solve() {
        // Pseudo-outcomes can leave [0, 1] while their mean stays inside.
        let x = DMatrix::from_row_slice(6, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 1.0, 1.0, -0.5, 1.0, 0.5, 1.0, 2.0]);
        let y = DVector::from_column_slice(&[-0.2, 0.3, 1.2, 0.1, 0.9, 0.6]);
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        let sol = solve_moment(&prob, &SolverConfig::default()).unwrap();
        assert!(prob.mean_moment(&sol.theta.as_dvector()).amax() <= 1e-8);
    }

    #[test]
    fn unbounded_real_valued_loss_has_no_root() {
        // Along theta = (0, t) the quasi-loss decreases without bound.
        let x = DMatrix::from_row_slice(6, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 1.0, 1.0, -0.5, 1.0, 0.5, 1.0, 2.0]);
        let y = DVector::from_column_slice(&[-1.5, 0.2, 2.5, 0.0, 1.0, 0.4]);
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        assert!(matches!(solve_moment(&prob, &SolverConfig::default()), Err(Error::NoRoot(_))));
    }

    #[test]
    fn sandwich_vanishes_with_zero_residuals() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let theta = CoefficientVector::new(vec![0.2, 0.7]).unwrap();
        let y = DVector::from_fn(4, |i, _| sigmoid(0.2 + 0.7 * x[(i, 1)]));
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        let cov = sandwich_covariance(&prob, &theta).unwrap();
        assert!(cov.amax() < 1e-30);
    }

    #[test]
    fn sandwich_invariant_under_sign_flip() {
        // Balanced two-point design: flipping x1 maps the data onto itself.
        let x = DMatrix::from_row_slice(8, 2, &[1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_column_slice(&[0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        let prob = MomentProblem::new(&x, &y, None).unwrap();
        let sol = solve_moment(&prob, &SolverConfig::default()).unwrap();
        let cov = sandwich_covariance(&prob, &sol.theta).unwrap();
        let mut xf = x.clone();
        xf.column_mut(1).neg_mut();
        let probf = MomentProblem::new(&xf, &y, None).unwrap();
        let solf = solve_moment(&probf, &SolverConfig::default()).unwrap();
        let covf = sandwich_covariance(&probf, &solf.theta).unwrap();
        assert!((cov - covf).amax() < 1e-12);
    }
}
