//! Rank transformation, popularity weighting and aggregation.
//!
//! A rank `r` is turned into a score by the sharpness-controlled transformer
//! `r^(-alpha)`, optionally rescaled affinely so that rank 1 maps to exactly 1
//! and rank `|E|` to exactly 0:
//!
//! ```text
//! raw(r)    = r^(-alpha)
//! affine(r) = (raw(r) - 1) / (1 - |E|^(-alpha)) + 1
//!           = (raw(r) - |E|^(-alpha)) / (1 - |E|^(-alpha))
//! ```
//!
//! Each query is weighted by the training popularity `delta` of its gold
//! entity, `w = (epsilon + delta)^(-beta)`, and the model score is the
//! weighted mean `sum(w * c) / sum(w)`. With `alpha = 1`, `beta = 0` and the
//! raw transformer this is exactly MRR.
//!
//! All reductions run through [`CompensatedSum`] in record order, so scores do
//! not depend on how the transform step is split across threads.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::RankRecord;
use crate::scalar::Scalar;
use crate::sum::CompensatedSum;

/// Records per rayon task in the transform step.
const MIN_PAR_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig<T = f64> {
    /// Sharpness: larger values punish non-top ranks harder.
    pub alpha: T,
    /// Popularity-bias robustness: larger values down-weight popular gold entities.
    pub beta: T,
    /// Added to the popularity before exponentiation; keeps zero-popularity
    /// weights finite.
    pub epsilon: T,
    /// Use the affine transformer (scores in `[0, 1]`).
    pub affine: bool,
    /// |E|; required (at least 2) in affine mode.
    pub entity_count: u64,
}

impl<T: Scalar> Default for MetricConfig<T> {
    fn default() -> Self {
        MetricConfig {
            alpha: T::one(),
            beta: T::zero(),
            epsilon: T::one(),
            affine: true,
            entity_count: 0,
        }
    }
}

impl<T: Scalar> MetricConfig<T> {
    /// Defaults (`alpha = 1`, `beta = 0`, `epsilon = 1`, affine) for a graph
    /// with `entity_count` entities.
    pub fn new(entity_count: u64) -> Self {
        MetricConfig {
            entity_count,
            ..Self::default()
        }
    }

    pub fn with_alpha(mut self, alpha: T) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: T) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_affine(mut self, affine: bool) -> Self {
        self.affine = affine;
        self
    }

    /// Checks every field constraint needed by [`probe_score`].
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > T::zero()) {
            return Err(Error::Config(format!(
                "alpha must be > 0 (got {}); negative sharpness is not an anti-monotone transformer",
                self.alpha
            )));
        }
        if !(self.beta.is_finite() && self.beta >= T::zero()) {
            return Err(Error::Config(format!(
                "beta must be >= 0 (got {})",
                self.beta
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > T::zero()) {
            return Err(Error::Config(format!(
                "epsilon must be > 0 (got {})",
                self.epsilon
            )));
        }
        if self.affine && self.entity_count < 2 {
            return Err(Error::Config(format!(
                "the affine transformer needs at least 2 entities (got {})",
                self.entity_count
            )));
        }
        Ok(())
    }

    fn cast<U: Scalar>(&self) -> MetricConfig<U> {
        MetricConfig {
            alpha: U::of(self.alpha.as_f64()),
            beta: U::of(self.beta.as_f64()),
            epsilon: U::of(self.epsilon.as_f64()),
            affine: self.affine,
            entity_count: self.entity_count,
        }
    }
}

impl MetricConfig<f32> {
    pub fn to_f64(&self) -> MetricConfig<f64> {
        self.cast()
    }
}

/// `rank^(-alpha)`. Any finite alpha is accepted here, so `alpha = -1` gives
/// back the rank itself (mean rank) and `alpha = 1` its reciprocal (MRR).
pub fn rt_raw<T: Scalar>(rank: u64, alpha: T) -> Result<T> {
    if rank < 1 {
        return Err(Error::Domain("rank must be at least 1".into()));
    }
    if !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be finite (got {alpha})")));
    }
    Ok(T::of_u64(rank).powf(-alpha))
}

/// Slope and intercept `(a, b)` with `rt_affine(r) = a * rt_raw(r) + b`.
pub fn affine_coefficients<T: Scalar>(alpha: T, entity_count: u64) -> Result<(T, T)> {
    let spread = affine_spread(alpha, entity_count)?;
    let a = T::one() / spread;
    Ok((a, T::one() - a))
}

/// `1 - |E|^(-alpha)`, the width of the raw score range, computed as
/// `-expm1(-alpha ln |E|)` so small alphas keep full precision.
fn affine_spread<T: Scalar>(alpha: T, entity_count: u64) -> Result<T> {
    if !(alpha.is_finite() && alpha > T::zero()) {
        return Err(Error::Domain(format!(
            "the affine transformer requires alpha > 0 (got {alpha})"
        )));
    }
    if entity_count < 2 {
        return Err(Error::Domain(format!(
            "the affine transformer requires at least 2 entities (got {entity_count})"
        )));
    }
    let spread = -(-alpha * T::of_u64(entity_count).ln()).exp_m1();
    // negated so that NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(spread > T::zero()) {
        return Err(Error::Domain(format!(
            "alpha {alpha} is too small to separate rank 1 from rank {entity_count} at this precision"
        )));
    }
    Ok(spread)
}

/// Affinely rescaled transformer: exactly 1 at rank 1 and 0 at rank `|E|`.
///
/// Evaluated as `r^(-alpha) * (1 - (r/|E|)^alpha) / spread` with `expm1` and
/// `ln_1p`, which keeps full relative precision near rank `|E|` where the
/// textbook form cancels.
pub fn rt_affine<T: Scalar>(rank: u64, alpha: T, entity_count: u64) -> Result<T> {
    let spread = affine_spread(alpha, entity_count)?;
    if rank < 1 {
        return Err(Error::Domain("rank must be at least 1".into()));
    }
    if rank > entity_count {
        return Err(Error::Domain(format!(
            "rank {rank} exceeds the entity count {entity_count}"
        )));
    }
    if rank == 1 {
        return Ok(T::one());
    }
    let e = T::of_u64(entity_count);
    // ln(r / |E|) = ln_1p((r - |E|) / |E|); the difference is exact
    let log_ratio = (-T::of_u64(entity_count - rank) / e).ln_1p();
    let gap = -(alpha * log_ratio).exp_m1();
    Ok(rt_raw(rank, alpha)? * gap / spread)
}

/// Query weight `(epsilon + delta)^(-beta)`.
pub fn weight<T: Scalar>(delta: u64, beta: T, epsilon: T) -> Result<T> {
    if !(epsilon.is_finite() && epsilon > T::zero()) {
        return Err(Error::Config(format!(
            "epsilon must be > 0 (got {epsilon})"
        )));
    }
    if !(beta.is_finite() && beta >= T::zero()) {
        return Err(Error::Config(format!("beta must be >= 0 (got {beta})")));
    }
    Ok((epsilon + T::of_u64(delta)).powf(-beta))
}

/// Transformed scores with their aggregation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet<T = f64> {
    scores: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> ScoreSet<T> {
    pub fn new(scores: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if scores.len() != weights.len() {
            return Err(Error::Input(format!(
                "{} scores but {} weights",
                scores.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > T::zero())) {
            return Err(Error::Input(format!(
                "weights must be positive and finite (got {w})"
            )));
        }
        if let Some(c) = scores.iter().find(|c| !c.is_finite()) {
            return Err(Error::Input(format!("non-finite score {c}")));
        }
        Ok(ScoreSet { scores, weights })
    }

    /// Every score with weight 1.
    pub fn unweighted(scores: Vec<T>) -> Result<Self> {
        let weights = vec![T::one(); scores.len()];
        Self::new(scores, weights)
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Weighted mean `sum(w * c) / sum(w)`, clamped to `[min c, max c]`.
pub fn aggregate<T: Scalar>(set: &ScoreSet<T>) -> Result<T> {
    if set.is_empty() {
        return Err(Error::Input("cannot aggregate an empty score set".into()));
    }
    let mut numerator = CompensatedSum::new();
    let mut total = CompensatedSum::new();
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for (&c, &w) in set.scores.iter().zip(&set.weights) {
        numerator.add(w * c);
        total.add(w);
        lo = lo.min(c);
        hi = hi.max(c);
    }
    let mean = numerator.value() / total.value();
    Ok(mean.max(lo).min(hi))
}

/// Score of a single rank under `config` (affine or raw).
pub fn transform<T: Scalar>(rank: u64, config: &MetricConfig<T>) -> Result<T> {
    if config.affine {
        rt_affine(rank, config.alpha, config.entity_count)
    } else {
        rt_raw(rank, config.alpha)
    }
}

/// Transformed scores and weights for every record, in record order.
pub fn score_set<T: Scalar>(
    records: &[RankRecord],
    config: &MetricConfig<T>,
) -> Result<ScoreSet<T>> {
    config.validate()?;
    let pairs: Vec<(T, T)> = records
        .par_iter()
        .with_min_len(MIN_PAR_CHUNK)
        .map(|r| {
            Ok((
                transform(r.rank, config)?,
                weight(r.gold_popularity, config.beta, config.epsilon)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (scores, weights) = pairs.into_iter().unzip();
    ScoreSet::new(scores, weights)
}

/// Transform every rank, weight it by popularity and aggregate.
pub fn probe_score<T: Scalar>(records: &[RankRecord], config: &MetricConfig<T>) -> Result<T> {
    if records.is_empty() {
        return Err(Error::Input("no rank records to score".into()));
    }
    aggregate(&score_set(records, config)?)
}

fn non_empty(records: &[RankRecord]) -> Result<()> {
    if records.is_empty() {
        Err(Error::Input("no rank records to score".into()))
    } else {
        Ok(())
    }
}

/// Mean rank.
pub fn mr<T: Scalar>(records: &[RankRecord]) -> Result<T> {
    non_empty(records)?;
    let sum: CompensatedSum<T> = records.iter().map(|r| T::of_u64(r.rank)).collect();
    Ok(sum.value() / T::of_u64(records.len() as u64))
}

/// Mean reciprocal rank.
pub fn mrr<T: Scalar>(records: &[RankRecord]) -> Result<T> {
    non_empty(records)?;
    let sum: CompensatedSum<T> = records.iter().map(|r| T::of_u64(r.rank).recip()).collect();
    Ok(sum.value() / T::of_u64(records.len() as u64))
}

/// Fraction of records ranked within the top `k`.
pub fn hits_at_k<T: Scalar>(records: &[RankRecord], k: u64) -> Result<T> {
    non_empty(records)?;
    if k < 1 {
        return Err(Error::Config("hits@k needs k >= 1".into()));
    }
    let hits = records.iter().filter(|r| r.rank <= k).count();
    Ok(T::of_u64(hits as u64) / T::of_u64(records.len() as u64))
}

pub const DEFAULT_HITS: [u64; 3] = [1, 3, 10];

/// One popularity bucket `[lo, hi)`; `hi = None` is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum<T = f64> {
    pub lo: u64,
    pub hi: Option<u64>,
    pub count: usize,
    /// `None` for an empty bucket.
    pub score: Option<T>,
}

/// Powers of two from 0 up to the first power of two at or above `delta_max`.
pub fn default_strata_edges(delta_max: u64) -> Vec<u64> {
    let mut edges = vec![0, 1];
    let mut p = 1u64;
    while p < delta_max {
        p = p.saturating_mul(2);
        edges.push(p);
    }
    edges
}

fn check_edges(edges: &[u64], first: u64, what: &str) -> Result<()> {
    if edges.first() != Some(&first) {
        return Err(Error::Config(format!("{what} edges must start at {first}")));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "{what} edges must be strictly ascending"
        )));
    }
    Ok(())
}

/// Bucket index of `value` in half-open bins starting at `edges[0]`.
pub(crate) fn bucket_of(edges: &[u64], value: u64) -> Option<usize> {
    edges.partition_point(|&e| e <= value).checked_sub(1)
}

/// Partitions records by gold popularity and scores each bucket with
/// `beta = 0`, so the breakdown shows plain per-group accuracy.
pub fn stratified_breakdown<T: Scalar>(
    records: &[RankRecord],
    edges: &[u64],
    config: &MetricConfig<T>,
) -> Result<Vec<Stratum<T>>> {
    check_edges(edges, 0, "popularity")?;
    let unweighted = config.with_beta(T::zero());
    unweighted.validate()?;
    let mut buckets: Vec<Vec<RankRecord>> = vec![Vec::new(); edges.len()];
    for r in records {
        let b = bucket_of(edges, r.gold_popularity).expect("edges start at 0");
        buckets[b].push(r.clone());
    }
    buckets
        .iter()
        .enumerate()
        .map(|(i, bucket)| {
            Ok(Stratum {
                lo: edges[i],
                hi: edges.get(i + 1).copied(),
                count: bucket.len(),
                score: if bucket.is_empty() {
                    None
                } else {
                    Some(probe_score(bucket, &unweighted)?)
                },
            })
        })
        .collect()
}

/// Everything `eval` reports for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T = f64> {
    pub probe: T,
    pub mr: T,
    pub mrr: T,
    pub hits: BTreeMap<u64, T>,
    pub strata: Vec<Stratum<T>>,
    pub records: usize,
    pub config: MetricConfig<T>,
}

pub fn evaluate<T: Scalar>(
    records: &[RankRecord],
    config: &MetricConfig<T>,
    hits: &[u64],
    strata_edges: &[u64],
) -> Result<MetricReport<T>> {
    Ok(MetricReport {
        probe: probe_score(records, config)?,
        mr: mr(records)?,
        mrr: mrr(records)?,
        hits: hits
            .iter()
            .map(|&k| Ok((k, hits_at_k(records, k)?)))
            .collect::<Result<_>>()?,
        strata: stratified_breakdown(records, strata_edges, config)?,
        records: records.len(),
        config: *config,
    })
}
