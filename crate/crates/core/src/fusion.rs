//! Late fusion and majority-vote ensembles.
//!
//! Fusing `m` vectors averages them position-wise and keeps a bit when the
//! average exceeds 1/2. An average of exactly 1/2 (possible only for even
//! `m`) is resolved by [`TieRule`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{self, Exact};
use crate::gateway::ModelRun;
use crate::metrics::pair_metrics;
use crate::taxonomy::ActionVector;

/// Largest model count enumerated exhaustively without a size filter.
pub const MAX_EXHAUSTIVE_MODELS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FusionError {
    #[error("nothing to fuse")]
    EmptyInput,
    #[error("vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("vectors belong to taxonomies {0:?} and {1:?}")]
    TaxonomyMismatch(String, String),
    #[error("no runs to ensemble")]
    NoRuns,
    #[error("duplicate model name {0:?}")]
    DuplicateName(String),
    #[error("{0} models exceed the exhaustive limit of {MAX_EXHAUSTIVE_MODELS}; pass explicit sizes")]
    TooManyModels(usize),
    #[error("ensemble size {size} is outside 1..={models}")]
    BadSize { size: usize, models: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TieRule {
    /// Average exactly 1/2 gives 0 (strict majority).
    #[default]
    TiesToZero,
    TiesToOne,
}

impl fmt::Display for TieRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieRule::TiesToZero => "zero",
            TieRule::TiesToOne => "one",
        })
    }
}

impl FromStr for TieRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(TieRule::TiesToZero),
            "one" => Ok(TieRule::TiesToOne),
            other => Err(format!("unknown tie rule {other:?} (expected zero or one)")),
        }
    }
}

impl TieRule {
    fn keep(self, votes: usize, m: usize) -> bool {
        match self {
            TieRule::TiesToZero => 2 * votes > m,
            TieRule::TiesToOne => 2 * votes >= m,
        }
    }
}

/// Position-wise average of `vectors`, thresholded at 1/2.
pub fn fuse(vectors: &[ActionVector], tie: TieRule) -> Result<ActionVector, FusionError> {
    let refs: Vec<&ActionVector> = vectors.iter().collect();
    fuse_refs(&refs, tie)
}

pub fn fuse_refs(vectors: &[&ActionVector], tie: TieRule) -> Result<ActionVector, FusionError> {
    let first = *vectors.first().ok_or(FusionError::EmptyInput)?;
    let n = first.len();
    let mut votes = vec![0usize; n];
    for v in vectors {
        if v.len() != n {
            return Err(FusionError::LengthMismatch(n, v.len()));
        }
        if v.taxonomy_version() != first.taxonomy_version() {
            return Err(FusionError::TaxonomyMismatch(
                first.taxonomy_version().to_string(),
                v.taxonomy_version().to_string(),
            ));
        }
        for (c, b) in votes.iter_mut().zip(v.bits()) {
            *c += usize::from(*b);
        }
    }
    let m = vectors.len();
    let bits = votes.iter().map(|c| u8::from(tie.keep(*c, m))).collect();
    Ok(ActionVector::new(bits, first.taxonomy_version()).expect("bits are binary"))
}

/// How ensembles treat an incident that some member has no vector for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MissingPolicy {
    /// Leave the incident out for that ensemble.
    #[default]
    Skip,
    /// Count the absent member as voting 0 everywhere.
    TreatAsZero,
}

/// Majority vote of `runs` for one incident; `None` when it must be skipped.
pub fn majority_vote(
    runs: &[&ModelRun],
    incident_id: u64,
    tie: TieRule,
    missing: MissingPolicy,
) -> Option<ActionVector> {
    let present: Vec<&ActionVector> = runs.iter().filter_map(|r| r.vector(incident_id)).collect();
    if present.is_empty() || (present.len() < runs.len() && missing == MissingPolicy::Skip) {
        return None;
    }
    let zeros;
    let mut members = present.clone();
    if members.len() < runs.len() {
        zeros = ActionVector::new(vec![0; present[0].len()], present[0].taxonomy_version())
            .expect("zeros");
        members.resize(runs.len(), &zeros);
    }
    fuse_refs(&members, tie).ok()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub tie_rule: TieRule,
    pub missing: MissingPolicy,
    /// Restrict enumeration to these ensemble sizes.
    pub sizes: Option<Vec<usize>>,
}

/// Statistics of one member combination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CombinationStat {
    pub members: Vec<String>,
    pub n_incidents: usize,
    pub n_skipped: usize,
    #[serde(with = "exact::serde_exact")]
    pub mean_similarity: Exact,
    #[serde(with = "exact::serde_exact")]
    pub mean_tp: Exact,
    #[serde(with = "exact::serde_exact")]
    pub mean_fp: Exact,
    #[serde(with = "exact::serde_exact")]
    pub mean_tn: Exact,
    #[serde(with = "exact::serde_exact")]
    pub mean_fn: Exact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnsembleResult {
    #[serde(flatten)]
    pub stat: CombinationStat,
    #[serde(serialize_with = "serialize_exact_map")]
    pub per_incident_similarity: BTreeMap<u64, Exact>,
}

fn serialize_exact_map<S: serde::Serializer>(
    m: &BTreeMap<u64, Exact>,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_map(m.iter().map(|(k, v)| (k, exact::exact_string(v))))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SizeSummary {
    pub size: usize,
    pub n_combinations: usize,
    /// Combinations with at least one scored incident.
    pub n_evaluated: usize,
    /// Mean of the combinations' mean similarities.
    #[serde(serialize_with = "serialize_big")]
    pub mean: Option<BigRational>,
    pub best: Option<EnsembleResult>,
    pub distribution: Vec<CombinationStat>,
}

fn serialize_big<S: serde::Serializer>(r: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_some(&exact::big_exact_string(r)),
        None => s.serialize_none(),
    }
}

fn evaluate(
    members: &[&ModelRun],
    manual: &ModelRun,
    opts: &EnsembleOptions,
    keep_per_incident: bool,
) -> (CombinationStat, BTreeMap<u64, Exact>) {
    let mut per_incident = BTreeMap::new();
    let mut totals = [0u64; 4];
    let mut hamming_total = 0u64;
    let mut n = 0u64;
    let mut skipped = 0usize;
    let mut n_actions = 0u64;
    for (id, reference) in &manual.vectors {
        let Some(voted) = majority_vote(members, *id, opts.tie_rule, opts.missing) else {
            skipped += 1;
            continue;
        };
        let Ok(pm) = pair_metrics(&voted, reference) else {
            skipped += 1;
            continue;
        };
        n_actions = reference.len() as u64;
        totals[0] += pm.tp as u64;
        totals[1] += pm.fp as u64;
        totals[2] += pm.tn as u64;
        totals[3] += pm.fn_ as u64;
        hamming_total += pm.hamming as u64;
        n += 1;
        if keep_per_incident {
            per_incident.insert(*id, pm.similarity);
        }
    }
    let names = members.iter().map(|r| r.model_name.clone()).collect();
    let stat = make_stat(names, n, skipped, n_actions, hamming_total, totals);
    (stat, per_incident)
}

fn make_stat(
    members: Vec<String>,
    n: u64,
    skipped: usize,
    n_actions: u64,
    hamming_total: u64,
    totals: [u64; 4],
) -> CombinationStat {
    let mean = |x: u64| if n == 0 { Exact::zero() } else { Exact::new(x, n) };
    let mean_similarity = if n == 0 || n_actions == 0 {
        Exact::zero()
    } else {
        Exact::from_integer(1) - Exact::new(hamming_total, n * n_actions)
    };
    CombinationStat {
        members,
        n_incidents: n as usize,
        n_skipped: skipped,
        mean_similarity,
        mean_tp: mean(totals[0]),
        mean_fp: mean(totals[1]),
        mean_tn: mean(totals[2]),
        mean_fn: mean(totals[3]),
    }
}

/// Bit-packed view of the runs for fast subset scoring: for every manual
/// incident and action, a mask of the models voting 1.
struct Packed {
    n_actions: usize,
    /// `(present, ones_by_action, manual_bits)` per manual incident.
    incidents: Vec<(u32, Vec<u32>, u64)>,
}

impl Packed {
    fn build(sorted: &[&ModelRun], manual: &ModelRun) -> Option<Self> {
        let n_actions = manual.vectors.values().next().map_or(0, ActionVector::len);
        if sorted.len() > 32 || n_actions > 64 {
            return None;
        }
        let version = &manual.taxonomy_version;
        let fits = |v: &ActionVector| v.len() == n_actions && v.taxonomy_version() == version;
        let all_fit = manual.vectors.values().all(fits)
            && sorted.iter().all(|r| r.vectors.values().all(fits));
        if !all_fit {
            return None;
        }
        let incidents = manual
            .vectors
            .iter()
            .map(|(id, reference)| {
                let mut present = 0u32;
                let mut ones = vec![0u32; n_actions];
                for (j, run) in sorted.iter().enumerate() {
                    if let Some(v) = run.vector(*id) {
                        present |= 1 << j;
                        for (i, b) in v.bits().iter().enumerate() {
                            ones[i] |= u32::from(*b) << j;
                        }
                    }
                }
                let manual_bits = reference
                    .bits()
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, b)| acc | (u64::from(*b) << i));
                (present, ones, manual_bits)
            })
            .collect();
        Some(Self {
            n_actions,
            incidents,
        })
    }

    fn evaluate(&self, subset: u32, names: Vec<String>, opts: &EnsembleOptions) -> CombinationStat {
        let m = subset.count_ones() as usize;
        let full = if self.n_actions == 64 { u64::MAX } else { (1u64 << self.n_actions) - 1 };
        let mut totals = [0u64; 4];
        let mut hamming_total = 0u64;
        let mut n = 0u64;
        let mut skipped = 0usize;
        for (present, ones, reference) in &self.incidents {
            let here = present & subset;
            if here == 0 || (here != subset && opts.missing == MissingPolicy::Skip) {
                skipped += 1;
                continue;
            }
            let voted = ones.iter().enumerate().fold(0u64, |acc, (i, mask)| {
                let votes = (mask & subset).count_ones() as usize;
                acc | (u64::from(opts.tie_rule.keep(votes, m)) << i)
            });
            totals[0] += u64::from((voted & reference).count_ones());
            totals[1] += u64::from((voted & !reference).count_ones());
            totals[2] += u64::from((!voted & !reference & full).count_ones());
            totals[3] += u64::from((!voted & reference).count_ones());
            hamming_total += u64::from((voted ^ reference).count_ones());
            n += 1;
        }
        make_stat(names, n, skipped, self.n_actions as u64, hamming_total, totals)
    }
}

/// Scores one ensemble against the manual reference.
pub fn evaluate_ensemble(
    members: &[&ModelRun],
    manual: &ModelRun,
    opts: &EnsembleOptions,
) -> EnsembleResult {
    let (stat, per_incident_similarity) = evaluate(members, manual, opts, true);
    EnsembleResult {
        stat,
        per_incident_similarity,
    }
}

/// Number of `k`-subsets of `n` items.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Scores every non-empty subset of `runs` (or every subset of the requested
/// sizes) by majority vote against `manual`, grouped by subset size.
///
/// Runs are ordered by model name first, so the output does not depend on
/// the order they are supplied in. Ties for best are broken by the
/// lexicographically smallest member list.
pub fn enumerate_ensembles(
    runs: &[&ModelRun],
    manual: &ModelRun,
    opts: &EnsembleOptions,
) -> Result<Vec<SizeSummary>, FusionError> {
    if runs.is_empty() {
        return Err(FusionError::NoRuns);
    }
    let mut sorted: Vec<&ModelRun> = runs.to_vec();
    sorted.sort_by(|a, b| a.model_name.cmp(&b.model_name));
    if let Some(w) = sorted.windows(2).find(|w| w[0].model_name == w[1].model_name) {
        return Err(FusionError::DuplicateName(w[0].model_name.clone()));
    }
    let m = sorted.len();
    let sizes: BTreeSet<usize> = match &opts.sizes {
        Some(sizes) => {
            for &size in sizes {
                if size == 0 || size > m {
                    return Err(FusionError::BadSize { size, models: m });
                }
            }
            sizes.iter().copied().collect()
        }
        None if m > MAX_EXHAUSTIVE_MODELS => return Err(FusionError::TooManyModels(m)),
        None => (1..=m).collect(),
    };

    let packed = Packed::build(&sorted, manual);
    let mut out = Vec::with_capacity(sizes.len());
    for size in sizes {
        let combos: Vec<Vec<usize>> = (0..m).combinations(size).collect();
        let distribution: Vec<CombinationStat> = combos
            .par_iter()
            .map(|idx| match &packed {
                Some(p) => {
                    let subset = idx.iter().fold(0u32, |acc, &i| acc | (1 << i));
                    let names = idx.iter().map(|&i| sorted[i].model_name.clone()).collect();
                    p.evaluate(subset, names, opts)
                }
                None => {
                    let members: Vec<&ModelRun> = idx.iter().map(|&i| sorted[i]).collect();
                    evaluate(&members, manual, opts, false).0
                }
            })
            .collect();
        let evaluated: Vec<(usize, &CombinationStat)> = distribution
            .iter()
            .enumerate()
            .filter(|(_, s)| s.n_incidents > 0)
            .collect();
        let mean = (!evaluated.is_empty()).then(|| {
            let sum = evaluated
                .iter()
                .fold(BigRational::zero(), |acc, (_, s)| acc + exact::to_big(&s.mean_similarity));
            sum / BigRational::from_integer(BigInt::from(evaluated.len()))
        });
        // first maximum in lexicographic member order
        let best_idx = evaluated
            .iter()
            .fold(None::<(usize, &CombinationStat)>, |best, &(i, s)| match best {
                Some((_, b)) if b.mean_similarity >= s.mean_similarity => best,
                _ => Some((i, s)),
            })
            .map(|(i, _)| i);
        let best = best_idx.map(|i| {
            let members: Vec<&ModelRun> = combos[i].iter().map(|&j| sorted[j]).collect();
            evaluate_ensemble(&members, manual, opts)
        });
        out.push(SizeSummary {
            size,
            n_combinations: combos.len(),
            n_evaluated: evaluated.len(),
            mean,
            best,
            distribution,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{default_taxonomy, ActionTaxonomy};

    fn v(bits: &[u8]) -> ActionVector {
        ActionVector::new(bits.to_vec(), "toy").unwrap()
    }

    #[test]
    fn worked_example() {
        let r = [v(&[1, 0, 1, 1, 0]), v(&[1, 1, 0, 1, 1]), v(&[0, 1, 1, 0, 0])];
        assert_eq!(fuse(&r, TieRule::TiesToZero).unwrap(), v(&[1, 1, 1, 1, 0]));
    }

    #[test]
    fn single_and_empty() {
        let a = v(&[1, 0, 1]);
        assert_eq!(fuse(std::slice::from_ref(&a), TieRule::TiesToZero).unwrap(), a);
        assert_eq!(fuse(&[], TieRule::TiesToZero), Err(FusionError::EmptyInput));
        assert_eq!(
            fuse(&[v(&[1]), v(&[1, 0])], TieRule::TiesToZero),
            Err(FusionError::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn ties() {
        let r = [v(&[1, 1, 0]), v(&[0, 1, 0])];
        assert_eq!(fuse(&r, TieRule::TiesToZero).unwrap(), v(&[0, 1, 0]));
        assert_eq!(fuse(&r, TieRule::TiesToOne).unwrap(), v(&[1, 1, 0]));
        assert_eq!("zero".parse::<TieRule>(), Ok(TieRule::TiesToZero));
        assert!("half".parse::<TieRule>().is_err());
    }

    #[test]
    fn majority_vote_skips_or_zero_fills() {
        let t = ActionTaxonomy::new("toy", ["a", "b", "c"]).unwrap();
        let a = ModelRun::from_vectors("a", &t, [(1, v(&[1, 1, 0])), (2, v(&[1, 1, 1]))]);
        let b = ModelRun::from_vectors("b", &t, [(1, v(&[1, 0, 0]))]);
        let c = ModelRun::from_vectors("c", &t, [(1, v(&[0, 1, 0])), (2, v(&[1, 0, 1]))]);
        let runs = [&a, &b, &c];
        assert_eq!(
            majority_vote(&runs, 1, TieRule::TiesToZero, MissingPolicy::Skip),
            Some(v(&[1, 1, 0]))
        );
        assert_eq!(majority_vote(&runs, 2, TieRule::TiesToZero, MissingPolicy::Skip), None);
        assert_eq!(
            majority_vote(&runs, 2, TieRule::TiesToZero, MissingPolicy::TreatAsZero),
            Some(v(&[1, 0, 1]))
        );
        assert_eq!(majority_vote(&runs, 3, TieRule::TiesToZero, MissingPolicy::TreatAsZero), None);
    }

    #[test]
    fn binomials() {
        assert_eq!((1..=6).map(|k| binomial(6, k)).collect::<Vec<_>>(), [6, 15, 20, 15, 6, 1]);
        assert_eq!(binomial(20, 10), 184_756);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn enumeration_errors() {
        let t = default_taxonomy();
        let manual = ModelRun::from_vectors("Manual", &t, [(1, t.zeros())]);
        let a = ModelRun::from_vectors("a", &t, [(1, t.zeros())]);
        let opts = EnsembleOptions::default();
        assert_eq!(enumerate_ensembles(&[], &manual, &opts), Err(FusionError::NoRuns));
        assert_eq!(
            enumerate_ensembles(&[&a, &a], &manual, &opts),
            Err(FusionError::DuplicateName("a".into()))
        );
        let bad = EnsembleOptions {
            sizes: Some(vec![2]),
            ..Default::default()
        };
        assert_eq!(
            enumerate_ensembles(&[&a], &manual, &bad),
            Err(FusionError::BadSize { size: 2, models: 1 })
        );
        let many: Vec<ModelRun> = (0..21)
            .map(|i| ModelRun::from_vectors(format!("m{i:02}"), &t, [(1, t.zeros())]))
            .collect();
        let refs: Vec<&ModelRun> = many.iter().collect();
        assert_eq!(
            enumerate_ensembles(&refs, &manual, &opts),
            Err(FusionError::TooManyModels(21))
        );
        let capped = EnsembleOptions {
            sizes: Some(vec![21]),
            ..Default::default()
        };
        let out = enumerate_ensembles(&refs, &manual, &capped).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].n_combinations, 1);
    }

    #[test]
    fn best_tie_breaks_lexicographically() {
        let t = default_taxonomy();
        let manual = ModelRun::from_vectors("Manual", &t, [(1, t.zeros())]);
        let runs: Vec<ModelRun> = ["c", "a", "b"]
            .iter()
            .map(|n| ModelRun::from_vectors(*n, &t, [(1, t.zeros())]))
            .collect();
        let refs: Vec<&ModelRun> = runs.iter().collect();
        let out = enumerate_ensembles(&refs, &manual, &EnsembleOptions::default()).unwrap();
        assert_eq!(out[0].best.as_ref().unwrap().stat.members, ["a"]);
        assert_eq!(out[1].best.as_ref().unwrap().stat.members, ["a", "b"]);
        assert_eq!(
            out[0].distribution.iter().map(|s| s.members[0].as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
    }

    proptest::proptest! {
        #[test]
        fn packed_scoring_matches_reference(
            votes in proptest::collection::vec(
                proptest::collection::vec(proptest::option::weighted(0.8, proptest::collection::vec(0u8..=1, 21)), 6),
                4,
            ),
            manual in proptest::collection::vec(proptest::collection::vec(0u8..=1, 21), 6),
            subset in 1u32..16,
            tie_one in proptest::bool::ANY,
            zero_fill in proptest::bool::ANY,
        ) {
            let t = default_taxonomy();
            let runs: Vec<ModelRun> = votes
                .into_iter()
                .enumerate()
                .map(|(j, vs)| {
                    let vectors = vs.into_iter().enumerate().filter_map(|(i, b)| {
                        b.map(|b| (i as u64, t.vector_from_bits(b).unwrap()))
                    });
                    ModelRun::from_vectors(format!("m{j}"), &t, vectors)
                })
                .collect();
            let manual = ModelRun::from_vectors(
                "Manual",
                &t,
                manual.into_iter().enumerate().map(|(i, b)| (i as u64, t.vector_from_bits(b).unwrap())),
            );
            let opts = EnsembleOptions {
                tie_rule: if tie_one { TieRule::TiesToOne } else { TieRule::TiesToZero },
                missing: if zero_fill { MissingPolicy::TreatAsZero } else { MissingPolicy::Skip },
                sizes: None,
            };
            let sorted: Vec<&ModelRun> = runs.iter().collect();
            let packed = Packed::build(&sorted, &manual).unwrap();
            let members: Vec<&ModelRun> = (0..4).filter(|j| subset & (1 << j) != 0).map(|j| sorted[j]).collect();
            let names = members.iter().map(|r| r.model_name.clone()).collect();
            proptest::prop_assert_eq!(packed.evaluate(subset, names, &opts), evaluate(&members, &manual, &opts, false).0);
        }
    }
}
