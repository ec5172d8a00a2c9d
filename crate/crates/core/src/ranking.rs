//! Query generation, filtered ranking of the gold entity, and rank/score file I/O.
//!
//! Every test triple `(h, r, t)` yields two queries: the head-masked `(?, r, t)`
//! with gold `h` and the tail-masked `(h, r, ?)` with gold `t`. A query's rank
//! is one plus the number of candidates scored above the gold entity, after
//! removing the other known-true answers (the filtered setting), plus a
//! tie adjustment chosen by [`TiePolicy`].

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg_data::{IdTriple, KnowledgeGraph, PopularityIndex, Vocab};
use crate::rng::{derive_seed, SeededRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `(?, r, t)`: the head is missing.
    Head,
    /// `(h, r, ?)`: the tail is missing.
    Tail,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Head => "head",
            Direction::Tail => "tail",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head" => Ok(Direction::Head),
            "tail" => Ok(Direction::Tail),
            other => Err(Error::Input(format!(
                "direction must be `head` or `tail`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Query {
    pub triple: IdTriple,
    pub direction: Direction,
    pub gold: u32,
    pub gold_popularity: u64,
}

impl Query {
    pub fn new(triple: IdTriple, direction: Direction, pop: &PopularityIndex) -> Self {
        let gold = match direction {
            Direction::Head => triple.head,
            Direction::Tail => triple.tail,
        };
        Query {
            triple,
            direction,
            gold,
            gold_popularity: pop.get(gold),
        }
    }

    pub fn key(&self, graph: &KnowledgeGraph) -> QueryKey {
        let t = graph.label_triple(&self.triple);
        QueryKey {
            head: t.head,
            relation: t.relation,
            tail: t.tail,
            direction: self.direction,
        }
    }
}

/// Label-level identity of a query, as written in rank and score files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryKey {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub direction: Direction,
}

impl QueryKey {
    pub fn gold(&self) -> &str {
        match self.direction {
            Direction::Head => &self.head,
            Direction::Tail => &self.tail,
        }
    }
}

impl fmt::Display for QueryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.direction {
            Direction::Head => write!(f, "(?, {}, {})", self.relation, self.tail),
            Direction::Tail => write!(f, "({}, {}, ?)", self.head, self.relation),
        }
    }
}

/// Two queries per test triple, head-masked first, in test order.
pub fn make_queries(test: &[IdTriple], pop: &PopularityIndex) -> Vec<Query> {
    test.iter()
        .flat_map(|&t| {
            [
                Query::new(t, Direction::Head, pop),
                Query::new(t, Direction::Tail, pop),
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow<T = f64> {
    pub query: Query,
    /// Score of every entity, indexed by entity id.
    pub scores: Vec<T>,
}

/// One evaluated query.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankRecord {
    pub key: QueryKey,
    pub gold_popularity: u64,
    pub rank: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "policy")]
pub enum TiePolicy {
    /// The gold entity goes ahead of every tied candidate.
    Optimistic,
    /// The gold entity goes behind every tied candidate.
    Pessimistic,
    /// Midpoint of the tied block, rounded half-up.
    #[default]
    Average,
    /// Uniform position inside the tied block.
    Random { seed: u64 },
}

impl TiePolicy {
    /// Parses a policy name; `random` requires a seed.
    pub fn parse(name: &str, seed: Option<u64>) -> Result<Self> {
        match name {
            "optimistic" => Ok(TiePolicy::Optimistic),
            "pessimistic" => Ok(TiePolicy::Pessimistic),
            "average" => Ok(TiePolicy::Average),
            "random" => seed.map(|seed| TiePolicy::Random { seed }).ok_or_else(|| {
                Error::Config("the random tie policy requires an explicit seed".into())
            }),
            other => Err(Error::Config(format!(
                "unknown tie policy `{other}` (expected optimistic, pessimistic, average or random)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TiePolicy::Optimistic => "optimistic",
            TiePolicy::Pessimistic => "pessimistic",
            TiePolicy::Average => "average",
            TiePolicy::Random { .. } => "random",
        }
    }

    /// Policy for the `index`-th query of a batch. Random policies get a
    /// per-query seed so results do not depend on processing order.
    pub fn for_query(self, index: u64) -> Self {
        match self {
            TiePolicy::Random { seed } => TiePolicy::Random {
                seed: derive_seed(seed, index),
            },
            other => other,
        }
    }

    /// Offset added to the optimistic rank when `ties` candidates share the
    /// gold entity's score.
    pub fn offset(self, ties: u64) -> u64 {
        match self {
            TiePolicy::Optimistic => 0,
            TiePolicy::Pessimistic => ties,
            TiePolicy::Average => ties.div_ceil(2),
            TiePolicy::Random { seed } => SeededRng::new(seed).up_to(ties),
        }
    }
}

/// Sorted, duplicate-free candidate ids excluded from ranking.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterSet(Vec<u32>);

impl FilterSet {
    pub fn empty() -> Self {
        FilterSet(Vec::new())
    }

    pub fn contains(&self, id: u32) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }
}

impl FromIterator<u32> for FilterSet {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        let mut ids: Vec<u32> = iter.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        FilterSet(ids)
    }
}

/// Entities other than the gold that complete the query into a known triple
/// of any split. Scans the whole graph; use [`FilterIndex`] for batches.
pub fn filter_set(query: &Query, graph: &KnowledgeGraph) -> FilterSet {
    let t = query.triple;
    graph
        .all_triples()
        .filter_map(|c| match query.direction {
            Direction::Head if c.relation == t.relation && c.tail == t.tail => Some(c.head),
            Direction::Tail if c.relation == t.relation && c.head == t.head => Some(c.tail),
            _ => None,
        })
        .filter(|&e| e != query.gold)
        .collect()
}

/// Precomputed known answers for every `(relation, anchor)` pair.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    heads: HashMap<(u32, u32), Vec<u32>>,
    tails: HashMap<(u32, u32), Vec<u32>>,
}

impl FilterIndex {
    pub fn new(graph: &KnowledgeGraph) -> Self {
        let mut index = FilterIndex::default();
        for t in graph.all_triples() {
            index
                .heads
                .entry((t.relation, t.tail))
                .or_default()
                .push(t.head);
            index
                .tails
                .entry((t.head, t.relation))
                .or_default()
                .push(t.tail);
        }
        index
    }

    pub fn filter_for(&self, query: &Query) -> FilterSet {
        let t = query.triple;
        let known = match query.direction {
            Direction::Head => self.heads.get(&(t.relation, t.tail)),
            Direction::Tail => self.tails.get(&(t.head, t.relation)),
        };
        known
            .into_iter()
            .flatten()
            .copied()
            .filter(|&e| e != query.gold)
            .collect()
    }
}

/// Rank of `gold` among `scores` (higher is better), ignoring `filter`.
pub fn rank_in_scores<T: Scalar>(
    scores: &[T],
    gold: u32,
    filter: &FilterSet,
    tie: TiePolicy,
) -> Result<u64> {
    let gold_idx = gold as usize;
    let Some(&gold_score) = scores.get(gold_idx) else {
        return Err(Error::Input(format!(
            "gold entity {gold} outside a score row of length {}",
            scores.len()
        )));
    };
    let mut greater = 0u64;
    let mut equal = 0u64;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::Input(format!("non-finite score {s} for entity {i}")));
        }
        if s > gold_score {
            greater += 1;
        } else if s == gold_score && i != gold_idx {
            equal += 1;
        }
    }
    for &f in filter.ids() {
        if f == gold {
            return Err(Error::Contract(format!(
                "gold entity {gold} is in its own filter set"
            )));
        }
        let Some(&s) = scores.get(f as usize) else {
            return Err(Error::Input(format!(
                "filtered entity {f} outside a score row of length {}",
                scores.len()
            )));
        };
        if s > gold_score {
            greater -= 1;
        } else if s == gold_score {
            equal -= 1;
        }
    }
    Ok(1 + greater + tie.offset(equal))
}

pub fn rank_of_gold<T: Scalar>(
    row: &ScoreRow<T>,
    filter: &FilterSet,
    tie: TiePolicy,
) -> Result<u64> {
    rank_in_scores(&row.scores, row.query.gold, filter, tie)
}

/// Entity popularity by label; unknown labels read as 0.
#[derive(Debug, Clone, Copy)]
pub struct LabelPopularity<'a> {
    source: Option<(&'a Vocab, &'a PopularityIndex)>,
}

impl<'a> LabelPopularity<'a> {
    pub fn new(graph: &'a KnowledgeGraph, pop: &'a PopularityIndex) -> Self {
        Self::from_vocab(&graph.entities, pop)
    }

    pub fn from_vocab(vocab: &'a Vocab, pop: &'a PopularityIndex) -> Self {
        LabelPopularity {
            source: Some((vocab, pop)),
        }
    }

    /// Every entity has popularity 0.
    pub fn none() -> Self {
        LabelPopularity { source: None }
    }

    pub fn lookup(&self, label: &str) -> Option<u64> {
        let (vocab, pop) = self.source?;
        vocab.id(label).map(|id| pop.get(id))
    }
}

pub fn parse_rank_records<R: BufRead>(
    reader: R,
    source_name: &str,
    popularity: &LabelPopularity<'_>,
) -> Result<Vec<RankRecord>> {
    let mut records = Vec::new();
    let mut unknown = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("expected 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        let direction: Direction = fields[3]
            .parse()
            .map_err(|e: Error| Error::parse(source_name, lineno, e.to_string()))?;
        let rank: u64 = fields[4].trim().parse().map_err(|_| {
            Error::parse(
                source_name,
                lineno,
                format!("rank `{}` is not an integer", fields[4]),
            )
        })?;
        if rank < 1 {
            return Err(Error::Validation(format!(
                "{source_name}:{lineno}: rank must be at least 1"
            )));
        }
        let key = QueryKey {
            head: fields[0].to_owned(),
            relation: fields[1].to_owned(),
            tail: fields[2].to_owned(),
            direction,
        };
        let gold_popularity = popularity.lookup(key.gold()).unwrap_or_else(|| {
            unknown += 1;
            0
        });
        records.push(RankRecord {
            key,
            gold_popularity,
            rank,
        });
    }
    if unknown > 0 && popularity.source.is_some() {
        log::warn!(
            "{source_name}: {unknown} record(s) name an unknown gold entity; popularity set to 0"
        );
    }
    Ok(records)
}

pub fn load_rank_file(
    path: impl AsRef<Path>,
    popularity: &LabelPopularity<'_>,
) -> Result<Vec<RankRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_rank_records(
        BufReader::new(file),
        &path.display().to_string(),
        popularity,
    )
}

pub fn write_rank_records<W: Write>(mut out: W, records: &[RankRecord]) -> std::io::Result<()> {
    for r in records {
        let k = &r.key;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            k.head, k.relation, k.tail, k.direction, r.rank
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankingOptions {
    /// Remove other known-true answers before ranking.
    pub filtered: bool,
    pub tie: TiePolicy,
}

impl Default for RankingOptions {
    fn default() -> Self {
        RankingOptions {
            filtered: true,
            tie: TiePolicy::Average,
        }
    }
}

/// One line of a JSON-lines score file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreLine<T> {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub direction: Direction,
    pub scores: Vec<T>,
}

const SCORE_BATCH: usize = 256;

/// Ranks every test query from a JSON-lines score stream.
///
/// Records come back in [`make_queries`] order. Every test query must appear
/// exactly once; lines for queries outside the test split are rejected.
pub fn rank_score_lines<T, R>(
    reader: R,
    source_name: &str,
    graph: &KnowledgeGraph,
    pop: &PopularityIndex,
    options: RankingOptions,
) -> Result<Vec<RankRecord>>
where
    T: Scalar + DeserializeOwned,
    R: BufRead,
{
    let queries = make_queries(&graph.test, pop);
    let position: HashMap<(IdTriple, Direction), usize> = queries
        .iter()
        .enumerate()
        .map(|(i, q)| ((q.triple, q.direction), i))
        .collect();
    let filters = options.filtered.then(|| FilterIndex::new(graph));
    let n_entities = graph.entity_count();
    let mut ranks: Vec<Option<u64>> = vec![None; queries.len()];

    let rank_line = |lineno: usize, text: &str| -> Result<Option<(usize, u64)>> {
        if text.trim().is_empty() {
            return Ok(None);
        }
        let line: ScoreLine<T> = serde_json::from_str(text)
            .map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        let unknown = |what: &str, label: &str| {
            Error::Input(format!("{source_name}:{lineno}: unknown {what} `{label}`"))
        };
        let triple = IdTriple {
            head: graph
                .entities
                .id(&line.head)
                .ok_or_else(|| unknown("entity", &line.head))?,
            relation: graph
                .relations
                .id(&line.relation)
                .ok_or_else(|| unknown("relation", &line.relation))?,
            tail: graph
                .entities
                .id(&line.tail)
                .ok_or_else(|| unknown("entity", &line.tail))?,
        };
        let Some(&index) = position.get(&(triple, line.direction)) else {
            return Err(Error::Input(format!(
                "{source_name}:{lineno}: ({}, {}, {}) is not a test triple",
                line.head, line.relation, line.tail
            )));
        };
        if line.scores.len() != n_entities {
            return Err(Error::Input(format!(
                "{source_name}:{lineno}: {} scores for {} entities",
                line.scores.len(),
                n_entities
            )));
        }
        let query = queries[index];
        let filter = filters
            .as_ref()
            .map(|f| f.filter_for(&query))
            .unwrap_or_default();
        let rank = rank_in_scores(
            &line.scores,
            query.gold,
            &filter,
            options.tie.for_query(index as u64),
        )
        .map_err(|e| Error::Input(format!("{source_name}:{lineno}: {e}")))?;
        Ok(Some((index, rank)))
    };

    let mut lines = reader.lines().enumerate();
    loop {
        let mut batch = Vec::with_capacity(SCORE_BATCH);
        for (idx, line) in lines.by_ref().take(SCORE_BATCH) {
            batch.push((idx + 1, line.map_err(|e| Error::io(source_name, e))?));
        }
        if batch.is_empty() {
            break;
        }
        let ranked: Vec<Result<Option<(usize, u64)>>> = batch
            .par_iter()
            .map(|(lineno, text)| rank_line(*lineno, text))
            .collect();
        for (result, (lineno, _)) in ranked.into_iter().zip(&batch) {
            if let Some((index, rank)) = result? {
                if ranks[index].replace(rank).is_some() {
                    return Err(Error::Input(format!(
                        "{source_name}:{lineno}: duplicate score row for {}",
                        queries[index].key(graph)
                    )));
                }
            }
        }
    }

    let missing = ranks.iter().filter(|r| r.is_none()).count();
    if let Some(first) = ranks.iter().position(Option::is_none) {
        return Err(Error::Validation(format!(
            "{missing} test quer{} without a score row, first {}",
            if missing == 1 { "y" } else { "ies" },
            queries[first].key(graph)
        )));
    }
    Ok(queries
        .iter()
        .zip(ranks)
        .map(|(q, rank)| RankRecord {
            key: q.key(graph),
            gold_popularity: q.gold_popularity,
            rank: rank.expect("checked above"),
        })
        .collect())
}

pub fn rank_score_file<T: Scalar + DeserializeOwned>(
    path: impl AsRef<Path>,
    graph: &KnowledgeGraph,
    pop: &PopularityIndex,
    options: RankingOptions,
) -> Result<Vec<RankRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    rank_score_lines::<T, _>(
        BufReader::new(file),
        &path.display().to_string(),
        graph,
        pop,
        options,
    )
}
