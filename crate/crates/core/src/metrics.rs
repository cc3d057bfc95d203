//! Pairwise and corpus-level comparison of action vectors.
//!
//! "Unnecessary" actions are set by the model but not by the reference
//! (false positives); "missed" actions are set by the reference only (false
//! negatives). Similarity is `1 - hamming / n` for `n` actions. All averages
//! are exact rationals.

use serde::Serialize;
use thiserror::Error;

use crate::exact::{self, Exact};
use crate::gateway::ModelRun;
use crate::taxonomy::{ActionTaxonomy, ActionVector};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("vectors belong to taxonomies {0:?} and {1:?}")]
    TaxonomyMismatch(String, String),
    #[error("{0} and {1} have no incidents in common")]
    NoOverlap(String, String),
    #[error("weights: {0}")]
    BadWeights(String),
    #[error("need at least {needed} runs, got {got}")]
    TooFewRuns { needed: usize, got: usize },
}

fn check_pair(u: &ActionVector, v: &ActionVector) -> Result<(), MetricsError> {
    if u.len() != v.len() {
        return Err(MetricsError::LengthMismatch(u.len(), v.len()));
    }
    if u.taxonomy_version() != v.taxonomy_version() {
        return Err(MetricsError::TaxonomyMismatch(
            u.taxonomy_version().to_string(),
            v.taxonomy_version().to_string(),
        ));
    }
    Ok(())
}

/// Number of positions at which `u` and `v` differ.
pub fn hamming(u: &ActionVector, v: &ActionVector) -> Result<usize, MetricsError> {
    check_pair(u, v)?;
    Ok(u.bits().iter().zip(v.bits()).filter(|(a, b)| a != b).count())
}

/// `1 - hamming / n`.
pub fn similarity(u: &ActionVector, v: &ActionVector) -> Result<Exact, MetricsError> {
    let h = hamming(u, v)? as u64;
    let n = u.len() as u64;
    if n == 0 {
        return Ok(Exact::from_integer(1));
    }
    Ok(Exact::new(n - h, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairMetrics {
    pub hamming: usize,
    #[serde(with = "exact::serde_exact")]
    pub similarity: Exact,
    pub unnecessary: usize,
    pub missed: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Confusion counts of `model` against the `manual` reference.
pub fn pair_metrics(model: &ActionVector, manual: &ActionVector) -> Result<PairMetrics, MetricsError> {
    check_pair(model, manual)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (m, r) in model.bits().iter().zip(manual.bits()) {
        match (m, r) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    let n = model.len() as u64;
    let hamming = fp + fn_;
    let pm = PairMetrics {
        hamming,
        similarity: if n == 0 {
            Exact::from_integer(1)
        } else {
            Exact::new(n - hamming as u64, n)
        },
        unnecessary: fp,
        missed: fn_,
        tp,
        fp,
        tn,
        fn_,
    };
    debug_assert_eq!(pm.tp + pm.fp + pm.tn + pm.fn_, model.len());
    Ok(pm)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusMetrics {
    pub model_name: String,
    pub n_actions: usize,
    pub n_scored: usize,
    /// Incidents the run failed on, or scored without a reference vector.
    pub n_excluded: usize,
    #[serde(with = "exact::serde_exact")]
    pub avg_hamming: Exact,
    #[serde(with = "exact::serde_exact")]
    pub mean_similarity: Exact,
    pub total_unnecessary: usize,
    pub total_missed: usize,
    pub total_tp: usize,
    pub total_tn: usize,
    #[serde(with = "exact::serde_exact")]
    pub mean_tp: Exact,
    #[serde(with = "exact::serde_exact")]
    pub mean_fp: Exact,
    #[serde(with = "exact::serde_exact")]
    pub mean_tn: Exact,
    #[serde(with = "exact::serde_exact")]
    pub mean_fn: Exact,
}

impl CorpusMetrics {
    /// Builds the aggregate from integer totals.
    pub fn from_totals(
        model_name: impl Into<String>,
        n_actions: usize,
        n_scored: usize,
        n_excluded: usize,
        totals: [usize; 4],
    ) -> Result<Self, MetricsError> {
        let model_name = model_name.into();
        if n_scored == 0 {
            return Err(MetricsError::NoOverlap(model_name, "Manual".into()));
        }
        let [tp, fp, tn, fn_] = totals;
        let n = n_scored as u64;
        let mean = |x: usize| Exact::new(x as u64, n);
        let hamming_total = (fp + fn_) as u64;
        let mean_similarity = if n_actions == 0 {
            Exact::from_integer(1)
        } else {
            Exact::from_integer(1) - Exact::new(hamming_total, n * n_actions as u64)
        };
        Ok(Self {
            model_name,
            n_actions,
            n_scored,
            n_excluded,
            avg_hamming: Exact::new(hamming_total, n),
            mean_similarity,
            total_unnecessary: fp,
            total_missed: fn_,
            total_tp: tp,
            total_tn: tn,
            mean_tp: mean(tp),
            mean_fp: mean(fp),
            mean_tn: mean(tn),
            mean_fn: mean(fn_),
        })
    }

    /// `avg_hamming * n_scored == unnecessary + missed`, checked exactly.
    pub fn check_identity(&self) -> Result<(), String> {
        let lhs = self.avg_hamming * Exact::from_integer(self.n_scored as u64);
        let rhs = Exact::from_integer((self.total_unnecessary + self.total_missed) as u64);
        if lhs != rhs {
            return Err(format!(
                "{}: avg_hamming {} x {} != {} + {}",
                self.model_name,
                exact::exact_string(&self.avg_hamming),
                self.n_scored,
                self.total_unnecessary,
                self.total_missed
            ));
        }
        let cells = self.total_tp + self.total_unnecessary + self.total_tn + self.total_missed;
        if cells != self.n_scored * self.n_actions {
            return Err(format!(
                "{}: confusion cells sum to {cells}, expected {}",
                self.model_name,
                self.n_scored * self.n_actions
            ));
        }
        let sim = Exact::from_integer(1) - self.avg_hamming / Exact::from_integer(self.n_actions.max(1) as u64);
        if self.n_actions > 0 && sim != self.mean_similarity {
            return Err(format!("{}: mean similarity disagrees with avg hamming", self.model_name));
        }
        Ok(())
    }
}

/// Aggregates [`pair_metrics`] over incidents scored by both runs.
pub fn corpus_metrics(run: &ModelRun, manual: &ModelRun) -> Result<CorpusMetrics, MetricsError> {
    let mut totals = [0usize; 4];
    let mut n_scored = 0;
    let mut without_reference = 0;
    let mut n_actions = 0;
    for (id, v) in &run.vectors {
        let Some(r) = manual.vector(*id) else {
            without_reference += 1;
            continue;
        };
        let pm = pair_metrics(v, r)?;
        n_actions = v.len();
        totals[0] += pm.tp;
        totals[1] += pm.fp;
        totals[2] += pm.tn;
        totals[3] += pm.fn_;
        n_scored += 1;
    }
    if n_scored == 0 {
        return Err(MetricsError::NoOverlap(
            run.model_name.clone(),
            manual.model_name.clone(),
        ));
    }
    CorpusMetrics::from_totals(
        run.model_name.clone(),
        n_actions,
        n_scored,
        run.failures.len() + without_reference,
        totals,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgreementCell {
    #[serde(with = "exact::serde_exact")]
    pub similarity: Exact,
    pub n_common: usize,
}

/// Mean pairwise similarity between runs. Cells of pairs without common
/// incidents are `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgreementMatrix {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<Option<AgreementCell>>>,
}

impl AgreementMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<&AgreementCell> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        self.cells[i][j].as_ref()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.labels.len();
        (0..n).all(|i| (0..n).all(|j| self.cells[i][j] == self.cells[j][i]))
    }
}

fn mean_similarity(a: &ModelRun, b: &ModelRun) -> Result<Option<AgreementCell>, MetricsError> {
    let mut n_common = 0u64;
    let mut hamming_total = 0u64;
    let mut n_actions = 0u64;
    for (id, u) in &a.vectors {
        if let Some(v) = b.vector(*id) {
            hamming_total += hamming(u, v)? as u64;
            n_actions = u.len() as u64;
            n_common += 1;
        }
    }
    if n_common == 0 {
        return Ok(None);
    }
    let similarity = if n_actions == 0 {
        Exact::from_integer(1)
    } else {
        Exact::from_integer(1) - Exact::new(hamming_total, n_common * n_actions)
    };
    Ok(Some(AgreementCell {
        similarity,
        n_common: n_common as usize,
    }))
}

pub fn agreement_matrix(runs: &[&ModelRun]) -> Result<AgreementMatrix, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::TooFewRuns {
            needed: 2,
            got: runs.len(),
        });
    }
    let n = runs.len();
    let mut cells = vec![vec![None; n]; n];
    for i in 0..n {
        cells[i][i] = Some(AgreementCell {
            similarity: Exact::from_integer(1),
            n_common: runs[i].vectors.len(),
        });
        for j in i + 1..n {
            let cell = mean_similarity(runs[i], runs[j])?;
            cells[i][j] = cell.clone();
            cells[j][i] = cell;
        }
    }
    Ok(AgreementMatrix {
        labels: runs.iter().map(|r| r.model_name.clone()).collect(),
        cells,
    })
}

/// Per-action count of 1-bits for each run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyTable {
    pub actions: Vec<String>,
    pub models: Vec<String>,
    pub n_scored: Vec<usize>,
    /// `counts[action][model]`.
    pub counts: Vec<Vec<usize>>,
}

impl FrequencyTable {
    pub fn count(&self, action: &str, model: &str) -> Option<usize> {
        let i = self.actions.iter().position(|a| a == action)?;
        let j = self.models.iter().position(|m| m == model)?;
        Some(self.counts[i][j])
    }
}

pub fn action_frequencies(
    runs: &[&ModelRun],
    taxonomy: &ActionTaxonomy,
) -> Result<FrequencyTable, MetricsError> {
    let mut counts = vec![vec![0usize; runs.len()]; taxonomy.len()];
    for (j, run) in runs.iter().enumerate() {
        for v in run.vectors.values() {
            if v.len() != taxonomy.len() {
                return Err(MetricsError::LengthMismatch(v.len(), taxonomy.len()));
            }
            for (i, b) in v.bits().iter().enumerate() {
                counts[i][j] += usize::from(*b);
            }
        }
    }
    Ok(FrequencyTable {
        actions: taxonomy.actions().to_vec(),
        models: runs.iter().map(|r| r.model_name.clone()).collect(),
        n_scored: runs.iter().map(|r| r.vectors.len()).collect(),
        counts,
    })
}

/// `sum_i w_i * |u_i - v_i|` for non-negative weights summing to exactly 1.
pub fn weighted_difference(
    u: &ActionVector,
    v: &ActionVector,
    weights: &[Exact],
) -> Result<Exact, MetricsError> {
    check_pair(u, v)?;
    if weights.len() != u.len() {
        return Err(MetricsError::BadWeights(format!(
            "{} weights for {} actions",
            weights.len(),
            u.len()
        )));
    }
    let total: Exact = weights.iter().copied().sum();
    if total != Exact::from_integer(1) {
        return Err(MetricsError::BadWeights(format!(
            "weights sum to {}, not 1",
            exact::exact_string(&total)
        )));
    }
    Ok(u.bits()
        .iter()
        .zip(v.bits())
        .zip(weights)
        .filter(|((a, b), _)| a != b)
        .map(|(_, w)| *w)
        .sum())
}

/// Parses weights given one per line or comma-separated, as decimals or
/// `a/b` fractions. Negative values are rejected.
pub fn parse_weights(text: &str) -> Result<Vec<Exact>, MetricsError> {
    text.split([',', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            exact::parse_exact(s)
                .ok_or_else(|| MetricsError::BadWeights(format!("{s:?} is not a non-negative number")))
        })
        .collect()
}

pub fn uniform_weights(n: usize) -> Vec<Exact> {
    vec![Exact::new(1, n as u64); n]
}
