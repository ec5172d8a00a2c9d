//! Synthetic rank-record fixtures and an independent scoring oracle.
//!
//! Profiles are JSON documents, for example
//!
//! ```json
//! {"kind": "mixture", "p1": 0.6, "max_rank": 10000,
//!  "tail": {"kind": "point", "rank": 100},
//!  "popularity": [{"min_rank": 1, "max_rank": 1, "draw": {"constant": 500}},
//!                 {"min_rank": 2, "draw": {"range": {"lo": 0, "hi": 9}}}]}
//! ```
//!
//! or an explicit list `{"kind": "explicit", "records": [{"rank": 1, "popularity": 3}]}`.
//! Record `i` always gets the query key `(s{i}, synthetic, o{i}, tail)`, so two
//! profiles generated with the same `n` describe the same query set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg_data::{PopularityCounting, PopularityIndex, Vocab};
use crate::metrics::MetricConfig;
use crate::ranking::{Direction, QueryKey, RankRecord};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplicitRecord {
    pub rank: u64,
    #[serde(default)]
    pub popularity: u64,
}

/// Distribution of ranks >= 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Tail {
    /// Every miss lands on one rank.
    Point { rank: u64 },
    /// `P(2 + k) ∝ p (1 - p)^k`, truncated at `max_rank`.
    Geometric { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopularityDraw {
    Constant(u64),
    /// Uniform over `lo..=hi`.
    Range {
        lo: u64,
        hi: u64,
    },
}

/// Popularity assigned to records whose rank lies in `min_rank..=max_rank`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopularityRule {
    pub min_rank: u64,
    #[serde(default)]
    pub max_rank: Option<u64>,
    pub draw: PopularityDraw,
}

impl PopularityRule {
    fn covers(&self, rank: u64) -> bool {
        rank >= self.min_rank && self.max_rank.is_none_or(|hi| rank <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureProfile {
    /// Probability of rank 1.
    pub p1: f64,
    pub tail: Tail,
    /// Largest possible rank (|E|).
    pub max_rank: u64,
    /// First matching rule wins; unmatched records get popularity 0.
    #[serde(default)]
    pub popularity: Vec<PopularityRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RankProfile {
    Explicit { records: Vec<ExplicitRecord> },
    Mixture(MixtureProfile),
}

impl RankProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            RankProfile::Explicit { records } => {
                if records.is_empty() {
                    return Err(Error::Config("explicit profile has no records".into()));
                }
                if records.iter().any(|r| r.rank < 1) {
                    return Err(Error::Config("explicit ranks must be at least 1".into()));
                }
            }
            RankProfile::Mixture(m) => {
                if !(0.0..=1.0).contains(&m.p1) {
                    return Err(Error::Config(format!(
                        "p1 must lie in [0, 1] (got {})",
                        m.p1
                    )));
                }
                if m.max_rank < 1 {
                    return Err(Error::Config("max_rank must be at least 1".into()));
                }
                if m.p1 < 1.0 {
                    match m.tail {
                        Tail::Point { rank } if rank < 2 || rank > m.max_rank => {
                            return Err(Error::Config(format!(
                                "tail rank {rank} outside 2..={}",
                                m.max_rank
                            )))
                        }
                        Tail::Geometric { p } if !(p > 0.0 && p <= 1.0) => {
                            return Err(Error::Config(format!(
                                "geometric p must lie in (0, 1] (got {p})"
                            )))
                        }
                        Tail::Geometric { .. } if m.max_rank < 2 => {
                            return Err(Error::Config(
                                "a geometric tail needs max_rank >= 2".into(),
                            ))
                        }
                        _ => {}
                    }
                }
                for rule in &m.popularity {
                    if let PopularityDraw::Range { lo, hi } = rule.draw {
                        if lo > hi {
                            return Err(Error::Config(format!(
                                "popularity range {lo}..={hi} is empty"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl MixtureProfile {
    /// Probability of drawing `rank`.
    pub fn pmf(&self, rank: u64) -> f64 {
        if rank == 1 {
            return self.p1;
        }
        if rank > self.max_rank || rank < 2 {
            return 0.0;
        }
        let miss = 1.0 - self.p1;
        match self.tail {
            Tail::Point { rank: r } => {
                if r == rank {
                    miss
                } else {
                    0.0
                }
            }
            Tail::Geometric { p } => {
                let q = 1.0 - p;
                let support = (self.max_rank - 1) as f64;
                let k = (rank - 2) as f64;
                miss * p * q.powf(k) / (1.0 - q.powf(support))
            }
        }
    }

    fn sample_tail(&self, rng: &mut SeededRng) -> u64 {
        match self.tail {
            Tail::Point { rank } => rank,
            Tail::Geometric { p } => {
                if p >= 1.0 {
                    return 2;
                }
                let q = 1.0 - p;
                let support = self.max_rank - 1;
                let mass = 1.0 - q.powf(support as f64);
                let u = rng.unit_f64();
                let k = ((1.0 - u * mass).ln() / q.ln()).floor();
                2 + (k.max(0.0) as u64).min(support - 1)
            }
        }
    }

    fn popularity(&self, rank: u64, rng: &mut SeededRng) -> u64 {
        match self
            .popularity
            .iter()
            .find(|r| r.covers(rank))
            .map(|r| r.draw)
        {
            None => 0,
            Some(PopularityDraw::Constant(v)) => v,
            Some(PopularityDraw::Range { lo, hi }) => lo + rng.up_to(hi - lo),
        }
    }
}

pub fn synthetic_key(index: usize) -> QueryKey {
    QueryKey {
        head: format!("s{index}"),
        relation: "synthetic".into(),
        tail: format!("o{index}"),
        direction: Direction::Tail,
    }
}

/// `n` records drawn from `profile`; a pure function of its arguments.
/// Explicit profiles are replayed in order, cycling when `n` exceeds them.
pub fn generate(profile: &RankProfile, n: usize, seed: u64) -> Result<Vec<RankRecord>> {
    profile.validate()?;
    if n < 1 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let records = (0..n)
        .map(|i| {
            let (rank, gold_popularity) = match profile {
                RankProfile::Explicit { records } => {
                    let r = records[i % records.len()];
                    (r.rank, r.popularity)
                }
                RankProfile::Mixture(m) => {
                    let rank = if rng.unit_f64() < m.p1 {
                        1
                    } else {
                        m.sample_tail(&mut rng)
                    };
                    (rank, m.popularity(rank, &mut rng))
                }
            };
            RankRecord {
                key: synthetic_key(i),
                gold_popularity,
                rank,
            }
        })
        .collect();
    Ok(records)
}

/// Gold-entity popularity of `records` as a label table, in first-seen order.
/// Fails if one label is given two different popularities.
pub fn popularity_table(records: &[RankRecord]) -> Result<(Vocab, PopularityIndex)> {
    let mut vocab = Vocab::new();
    let mut counts: Vec<u64> = Vec::new();
    for r in records {
        let label = r.key.gold();
        match vocab.id(label) {
            Some(id) if counts[id as usize] != r.gold_popularity => {
                return Err(Error::Input(format!(
                    "gold entity `{label}` has popularity {} and {}",
                    counts[id as usize], r.gold_popularity
                )))
            }
            Some(_) => {}
            None => {
                vocab.intern(label);
                counts.push(r.gold_popularity);
            }
        }
    }
    Ok((
        vocab,
        PopularityIndex::from_counts(counts, PopularityCounting::default()),
    ))
}

/// Direct single-loop evaluation of the popularity-weighted score with naive
/// left-to-right summation. Shares no code with [`crate::metrics`]: it uses
/// `1 / r^a` for the transformer, the min-max form
/// `(raw - |E|^-a) / (1 - |E|^-a)` for the rescaling, and `exp(-b ln(eps + d))`
/// for the weights.
pub fn oracle_probe(records: &[RankRecord], config: &MetricConfig<f64>) -> Result<f64> {
    let MetricConfig {
        alpha,
        beta,
        epsilon,
        affine,
        entity_count,
    } = *config;
    if records.is_empty() {
        return Err(Error::Input("no records".into()));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(alpha > 0.0) || !(beta >= 0.0) || !(epsilon > 0.0) {
        return Err(Error::Config(
            "oracle needs alpha > 0, beta >= 0, epsilon > 0".into(),
        ));
    }
    if affine && entity_count < 2 {
        return Err(Error::Config(
            "affine oracle needs at least 2 entities".into(),
        ));
    }
    let floor = (entity_count as f64).powf(alpha).recip();
    let mut weighted = 0.0f64;
    let mut total = 0.0f64;
    for r in records {
        if r.rank < 1 || (affine && r.rank > entity_count) {
            return Err(Error::Domain(format!("rank {} out of range", r.rank)));
        }
        let raw = 1.0 / (r.rank as f64).powf(alpha);
        let c = if affine {
            (raw - floor) / (1.0 - floor)
        } else {
            raw
        };
        let w = (-beta * (epsilon + r.gold_popularity as f64).ln()).exp();
        weighted += w * c;
        total += w;
    }
    Ok(weighted / total)
}
