//! Rank-based evaluation for knowledge graph completion.
//!
//! Ranks of the gold entity are turned into scores by a transformer whose
//! sharpness `alpha` decides how hard non-top ranks are penalised, then
//! averaged with weights that shrink for popular gold entities (`beta`).
//! `alpha = 1, beta = 0` with the raw transformer is plain MRR.
//!
//! - [`kg_data`]: triple files, vocabularies, popularity, dataset statistics
//! - [`ranking`]: queries, filtered ranks with tie policies, rank/score files
//! - [`metrics`]: transformers, weights, aggregation, MR/MRR/Hits@K, strata
//! - [`sweep`]: (alpha, beta) grids, ranking flips, histogram and surface data
//! - [`synthetic`]: fixture generator and an independent scoring oracle
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pin the common instantiations.

pub mod error;
pub mod kg_data;
pub mod metrics;
pub mod ranking;
pub mod rng;
pub mod scalar;
pub mod sum;
pub mod sweep;
pub mod synthetic;

pub use error::{Error, Result};
pub use kg_data::{
    build_graph, compute_popularity, compute_popularity_with, dataset_stats, load_dataset,
    load_popularity_table, load_split, DatasetPaths, DatasetStats, IdTriple, KnowledgeGraph,
    PopularityCounting, PopularityIndex, Split, Triple, TripleSet, Vocab,
};
pub use metrics::{
    aggregate, hits_at_k, mr, mrr, probe_score, rt_affine, rt_raw, stratified_breakdown, weight,
};
pub use ranking::{
    filter_set, load_rank_file, make_queries, rank_of_gold, Direction, FilterIndex, FilterSet,
    LabelPopularity, Query, QueryKey, RankRecord, RankingOptions, TiePolicy,
};
pub use scalar::Scalar;
pub use sweep::{rank_histogram, run_sweep, surface_export, PairOrder, RankHistogram};
pub use synthetic::{generate, oracle_probe, popularity_table, RankProfile};

pub type MetricConfigF64 = metrics::MetricConfig<f64>;
pub type MetricConfigF32 = metrics::MetricConfig<f32>;
pub type ScoreSetF64 = metrics::ScoreSet<f64>;
pub type ScoreSetF32 = metrics::ScoreSet<f32>;
pub type ScoreRowF64 = ranking::ScoreRow<f64>;
pub type ScoreRowF32 = ranking::ScoreRow<f32>;
pub type MetricReportF64 = metrics::MetricReport<f64>;
pub type SweepGridF64 = sweep::SweepGrid<f64>;
pub type SweepResultF64 = sweep::SweepResult<f64>;
pub type SweepResultF32 = sweep::SweepResult<f32>;
