//! Synthetic annotated corpora with known coefficients.
//!
//! Features come from a Gaussian copula, so count-valued columns can still
//! carry a requested pairwise correlation. Gold labels follow the logistic
//! model at `theta_true`; LLM labels are gold labels passed through an
//! [`ErrorModel`].

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{logit, sigmoid};
use crate::metrics::correlation_r2;
use crate::model::{AnnotatedCorpus, Row};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureDist {
    StandardNormal,
    Normal { mean: f64, sd: f64 },
    /// Integers spread uniformly over `min..=max` at the copula level.
    IntegerCount { min: i64, max: i64 },
}

impl FeatureDist {
    fn is_uniform_like(&self) -> bool {
        matches!(self, FeatureDist::IntegerCount { .. })
    }

    fn transform(&self, z: f64) -> f64 {
        match *self {
            FeatureDist::StandardNormal => z,
            FeatureDist::Normal { mean, sd } => mean + sd * z,
            FeatureDist::IntegerCount { min, max } => {
                let width = (max - min + 1) as f64;
                let u = normal_cdf(z);
                let k = (u * width).floor().clamp(0.0, width - 1.0);
                min as f64 + k
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ErrorModel {
    /// Flip every label with probability `q`.
    SymmetricFlip { q: f64 },
    /// Flip with a probability that depends on the gold class.
    ClassConditionalFlip { flip_given_0: f64, flip_given_1: f64 },
    /// Flip with probability `sigmoid(logit(base) + direction . x)`.
    CovariateDependentFlip { base: f64, direction: Vec<f64> },
}

impl ErrorModel {
    fn validate(&self, p: usize) -> Result<()> {
        let unit = |v: f64, name: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} is not a probability")))
            }
        };
        match self {
            ErrorModel::SymmetricFlip { q } => unit(*q, "q"),
            ErrorModel::ClassConditionalFlip { flip_given_0, flip_given_1 } => {
                unit(*flip_given_0, "flip_given_0")?;
                unit(*flip_given_1, "flip_given_1")
            }
            ErrorModel::CovariateDependentFlip { base, direction } => {
                if !(*base > 0.0 && *base < 1.0) {
                    return Err(Error::invalid(format!("base = {base} must lie in (0, 1)")));
                }
                if direction.len() != p {
                    return Err(Error::invalid(format!(
                        "direction has {} entries for {p} features",
                        direction.len()
                    )));
                }
                Ok(())
            }
        }
    }

    fn flip_probability(&self, y: bool, x: &[f64]) -> f64 {
        match self {
            ErrorModel::SymmetricFlip { q } => *q,
            ErrorModel::ClassConditionalFlip { flip_given_0, flip_given_1 } => {
                if y {
                    *flip_given_1
                } else {
                    *flip_given_0
                }
            }
            ErrorModel::CovariateDependentFlip { base, direction } => {
                let shift: f64 = direction.iter().zip(x).map(|(d, v)| d * v).sum();
                sigmoid(logit(*base) + shift)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Number of rows.
    pub n: usize,
    /// `beta_0..beta_p`.
    pub theta_true: Vec<f64>,
    pub features: Vec<FeatureDist>,
    /// `(j, k, r2)` with 1-based feature indices; unlisted pairs are independent.
    #[serde(default)]
    pub collinear_pairs: Vec<(usize, usize, f64)>,
    pub llm_error: ErrorModel,
    pub seed: u64,
}

impl SynthSpec {
    /// Standard-normal features, no collinearity.
    pub fn gaussian(n: usize, theta_true: Vec<f64>, llm_error: ErrorModel, seed: u64) -> Self {
        let p = theta_true.len().saturating_sub(1);
        Self {
            n,
            theta_true,
            features: vec![FeatureDist::StandardNormal; p],
            collinear_pairs: Vec::new(),
            llm_error,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_rows(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn p(&self) -> usize {
        self.features.len()
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("synthetic corpus needs at least one row"));
        }
        if self.theta_true.len() != self.p() + 1 {
            return Err(Error::invalid(format!(
                "theta_true has {} entries for {} features",
                self.theta_true.len(),
                self.p()
            )));
        }
        if self.theta_true.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta_true has non-finite entries"));
        }
        for f in &self.features {
            match *f {
                FeatureDist::Normal { sd, .. } if !(sd > 0.0) => {
                    return Err(Error::invalid("normal feature needs sd > 0"));
                }
                FeatureDist::IntegerCount { min, max } if max <= min => {
                    return Err(Error::invalid("integer feature needs max > min"));
                }
                _ => {}
            }
        }
        for &(j, k, r2) in &self.collinear_pairs {
            if j == 0 || k == 0 || j > self.p() || k > self.p() || j == k {
                return Err(Error::invalid(format!("collinear pair ({j}, {k}) is out of range")));
            }
            if !(0.0..1.0).contains(&r2) {
                return Err(Error::invalid(format!("target r2 {r2} must lie in [0, 1)")));
            }
        }
        self.llm_error.validate(self.p())
    }

    /// Latent Gaussian correlation that yields roughly the requested Pearson
    /// correlation after the marginal transforms.
    fn latent_correlation(&self, j: usize, k: usize, r2: f64) -> f64 {
        let target = r2.sqrt();
        let (a, b) = (&self.features[j], &self.features[k]);
        let latent = match (a.is_uniform_like(), b.is_uniform_like()) {
            (false, false) => target,
            (true, true) => 2.0 * (std::f64::consts::PI * target / 6.0).sin(),
            _ => target / (3.0 / std::f64::consts::PI).sqrt(),
        };
        latent.min(0.9999)
    }

    fn correlation_factor(&self) -> Result<DMatrix<f64>> {
        let p = self.p();
        let mut r = DMatrix::identity(p, p);
        for &(j, k, r2) in &self.collinear_pairs {
            let c = self.latent_correlation(j - 1, k - 1, r2);
            r[(j - 1, k - 1)] = c;
            r[(k - 1, j - 1)] = c;
        }
        r.cholesky()
            .map(|ch| ch.l())
            .ok_or_else(|| Error::invalid("requested correlation structure is not positive definite"))
    }
}

/// Draws a fully gold-labeled corpus from `spec`.
pub fn generate(spec: &SynthSpec) -> Result<AnnotatedCorpus> {
    spec.validate()?;
    let p = spec.p();
    let factor = spec.correlation_factor()?;
    let mut rng = seed::rng(spec.seed);
    let mut eps = vec![0.0; p];
    let mut rows = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        let x: Vec<f64> = (0..p)
            .map(|j| {
                let z: f64 = (0..=j).map(|m| factor[(j, m)] * eps[m]).sum();
                spec.features[j].transform(z)
            })
            .collect();
        let eta = spec.theta_true[0] + x.iter().zip(&spec.theta_true[1..]).map(|(a, b)| a * b).sum::<f64>();
        let y = rng.random::<f64>() < sigmoid(eta);
        let flip = rng.random::<f64>() < spec.llm_error.flip_probability(y, &x);
        rows.push(Row {
            id: format!("synth-{i}"),
            x,
            y_expert: Some(y),
            y_llm: y ^ flip,
        });
    }
    let mut corpus = AnnotatedCorpus::new(rows)?;
    if !spec.collinear_pairs.is_empty() && spec.n > 1 {
        if let Ok(r2) = correlation_r2(&corpus) {
            for &(j, k, _) in &spec.collinear_pairs {
                corpus = corpus.with_metadata(format!("achieved_r2_x{j}_x{k}"), r2[j - 1][k - 1]);
            }
        }
    }
    Ok(corpus)
}

/// Standard normal CDF via a rational erfc approximation (relative error
/// below 1.2e-7).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
