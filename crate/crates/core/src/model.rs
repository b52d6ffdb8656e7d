//! Shared data model: annotated corpora, design matrices, coefficient vectors
//! and estimate reports.

use std::collections::BTreeMap;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed;

/// One document: its features, the LLM label and (if it was sent to an
/// expert) the gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub x: Vec<f64>,
    pub y_expert: Option<bool>,
    pub y_llm: bool,
}

impl Row {
    /// The expert-selection indicator. A row is selected exactly when it
    /// carries a gold label.
    pub fn selected(&self) -> bool {
        self.y_expert.is_some()
    }
}

/// A corpus of `N` rows sharing the same feature dimension `p`.
///
/// Immutable once built; every transformation returns a new corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedCorpus {
    rows: Vec<Row>,
    feature_names: Vec<String>,
    metadata: BTreeMap<String, f64>,
}

impl AnnotatedCorpus {
    /// Builds a corpus with default feature names `x1..xp`.
    pub fn new(rows: Vec<Row>) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.x.len());
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::with_feature_names(rows, names)
    }

    pub fn with_feature_names(rows: Vec<Row>, feature_names: Vec<String>) -> Result<Self> {
        let p = feature_names.len();
        for row in &rows {
            if row.x.len() != p {
                return Err(Error::invalid(format!(
                    "row {} has {} features, expected {p}",
                    row.id,
                    row.x.len()
                )));
            }
            if row.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {} has a non-finite feature", row.id)));
            }
        }
        Ok(Self {
            rows,
            feature_names,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: f64) -> Self {
        self.metadata.insert(key.into(), value);
        self
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn metadata(&self) -> &BTreeMap<String, f64> {
        &self.metadata
    }

    /// Total number of rows `N`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Feature dimension `p` (excluding the intercept).
    pub fn p(&self) -> usize {
        self.feature_names.len()
    }

    /// Number of expert-labeled rows `n`.
    pub fn n_selected(&self) -> usize {
        self.rows.iter().filter(|r| r.selected()).count()
    }

    pub fn fully_labeled(&self) -> bool {
        self.rows.iter().all(Row::selected)
    }

    /// Hides all but `n` gold labels, chosen uniformly without replacement.
    ///
    /// The hidden labels are dropped from the returned corpus, not masked.
    pub fn split_expert_subset(&self, n: usize, seed: u64) -> Result<Self> {
        let total = self.len();
        if n == 0 {
            return Err(Error::invalid("expert subset size must be positive"));
        }
        if n > total {
            return Err(Error::invalid(format!(
                "expert subset size {n} exceeds corpus size {total}"
            )));
        }
        if let Some(row) = self.rows.iter().find(|r| !r.selected()) {
            return Err(Error::invalid(format!(
                "row {} has no gold label; splitting needs a fully labeled corpus",
                row.id
            )));
        }
        let mut keep = vec![false; total];
        let mut rng = seed::rng(seed);
        for i in rand::seq::index::sample(&mut rng, total, n) {
            keep[i] = true;
        }
        let rows = self
            .rows
            .iter()
            .zip(&keep)
            .map(|(row, &k)| Row {
                y_expert: if k { row.y_expert } else { None },
                ..row.clone()
            })
            .collect();
        Ok(Self {
            rows,
            feature_names: self.feature_names.clone(),
            metadata: self.metadata.clone(),
        })
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices
            .iter()
            .map(|&i| {
                self.rows
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("row index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows,
            feature_names: self.feature_names.clone(),
            metadata: self.metadata.clone(),
        })
    }

    /// Keeps only the feature columns at the given 0-based feature indices.
    pub fn select_features(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&j) = keep.iter().find(|&&j| j >= self.p()) {
            return Err(Error::invalid(format!("feature index {j} out of range")));
        }
        let rows = self
            .rows
            .iter()
            .map(|r| Row {
                x: keep.iter().map(|&j| r.x[j]).collect(),
                ..r.clone()
            })
            .collect();
        let names = keep.iter().map(|&j| self.feature_names[j].clone()).collect();
        let mut out = Self::with_feature_names(rows, names)?;
        out.metadata = self.metadata.clone();
        Ok(out)
    }

    /// Copy with the LLM label replaced by the gold label wherever one is present.
    pub fn with_llm_from_expert(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| Row {
                y_llm: r.y_expert.unwrap_or(r.y_llm),
                ..r.clone()
            })
            .collect();
        Self { rows, ..self.clone() }
    }

    pub fn design_matrix(&self) -> Result<DesignMatrix> {
        DesignMatrix::from_corpus(self)
    }

    /// SHA-256 over ids, feature bits and labels; metadata is excluded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.p() as u64).to_le_bytes());
        for name in &self.feature_names {
            h.update(name.as_bytes());
            h.update([0]);
        }
        for row in &self.rows {
            h.update(row.id.as_bytes());
            h.update([0]);
            for v in &row.x {
                h.update(v.to_bits().to_le_bytes());
            }
            let e = match row.y_expert {
                None => 2u8,
                Some(y) => y as u8,
            };
            h.update([e, row.y_llm as u8]);
        }
        hex::encode(h.finalize())
    }
}

/// `N x (p+1)` design matrix with the intercept in column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y_llm: DVector<f64>,
    /// Gold labels; `None` where the row was not sent to an expert.
    pub y_expert: Vec<Option<f64>>,
}

impl DesignMatrix {
    pub fn from_corpus(corpus: &AnnotatedCorpus) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid("design matrix of an empty corpus"));
        }
        let rows = corpus.rows();
        let p = corpus.p();
        let x = DMatrix::from_fn(rows.len(), p + 1, |i, j| if j == 0 { 1.0 } else { rows[i].x[j - 1] });
        let y_llm = DVector::from_iterator(rows.len(), rows.iter().map(|r| f64::from(r.y_llm as u8)));
        let y_expert = rows
            .iter()
            .map(|r| r.y_expert.map(|y| f64::from(y as u8)))
            .collect();
        Ok(Self { x, y_llm, y_expert })
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    /// Indices of rows carrying a gold label.
    pub fn selected(&self) -> Vec<usize> {
        self.y_expert
            .iter()
            .enumerate()
            .filter_map(|(i, y)| y.map(|_| i))
            .collect()
    }

    /// Rows at `idx` as a dense matrix, plus their gold labels.
    pub fn labeled_part(&self, idx: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let x = self.x.select_rows(idx);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y_expert[i].unwrap_or(f64::NAN)));
        (x, y)
    }
}

/// Logistic coefficients `beta_0..beta_p`, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefficientVector(Vec<f64>);

impl CoefficientVector {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("coefficient vector has non-finite entries"));
        }
        Ok(Self(beta))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        Self::new(v.iter().copied().collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for CoefficientVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Classical,
    Imputation,
    Reference,
    Ppi,
    Dsl,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Classical => "classical",
            EstimatorKind::Imputation => "imputation",
            EstimatorKind::Reference => "reference",
            EstimatorKind::Ppi => "ppi",
            EstimatorKind::Dsl => "dsl",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "classical" => EstimatorKind::Classical,
            "imputation" => EstimatorKind::Imputation,
            "reference" => EstimatorKind::Reference,
            "ppi" => EstimatorKind::Ppi,
            "dsl" => EstimatorKind::Dsl,
            other => return Err(Error::invalid(format!("unknown estimator '{other}'"))),
        })
    }
}

const SYMMETRY_TOL: f64 = 1e-8;

/// Point estimate with its covariance and `theta +/- 2 sd` intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator_kind: EstimatorKind,
    pub theta: CoefficientVector,
    pub covariance: DMatrix<f64>,
    pub ci_2sigma: Vec<[f64; 2]>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub fn new(
        estimator_kind: EstimatorKind,
        theta: CoefficientVector,
        covariance: DMatrix<f64>,
        diagnostics: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let k = theta.len();
        if covariance.shape() != (k, k) {
            return Err(Error::invalid(format!(
                "covariance is {:?}, expected {k}x{k}",
                covariance.shape()
            )));
        }
        let scale = covariance.amax().max(1.0);
        if (&covariance - covariance.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        let ci_2sigma = theta
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let half = 2.0 * covariance[(j, j)].max(0.0).sqrt();
                [t - half, t + half]
            })
            .collect();
        Ok(Self {
            estimator_kind,
            theta,
            covariance,
            ci_2sigma,
            diagnostics,
        })
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.theta.len())
            .map(|j| self.covariance[(j, j)].max(0.0).sqrt())
            .collect()
    }

    /// Whether every `ci_2sigma[k]` interval contains `truth[k]`, per coordinate.
    pub fn covers(&self, truth: &[f64]) -> Vec<bool> {
        self.ci_2sigma
            .iter()
            .zip(truth)
            .map(|(ci, &t)| ci[0] <= t && t <= ci[1])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    UniformWithoutReplacement,
}

/// Known expert-selection probabilities. Only the uniform design is
/// supported, for which `pi = n / N` on every row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionDesign {
    pub kind: DesignKind,
    pi: f64,
}

impl SelectionDesign {
    pub fn uniform(n: usize, total: usize) -> Result<Self> {
        if n == 0 || n > total {
            return Err(Error::invalid(format!(
                "uniform design needs 0 < n <= N, got n = {n}, N = {total}"
            )));
        }
        Ok(Self {
            kind: DesignKind::UniformWithoutReplacement,
            pi: n as f64 / total as f64,
        })
    }

    /// The design realized by a split: `n_selected / N`.
    pub fn from_corpus(corpus: &AnnotatedCorpus) -> Result<Self> {
        Self::uniform(corpus.n_selected(), corpus.len())
    }

    pub fn pi(&self, _row: &Row) -> f64 {
        self.pi
    }

    pub fn uniform_pi(&self) -> f64 {
        self.pi
    }
}
