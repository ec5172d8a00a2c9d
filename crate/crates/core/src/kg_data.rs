//! Triple files, vocabularies, training-set popularity and dataset statistics.
//!
//! Triple files are the three-column TSV layout used by the FB15k-237 and
//! WN18RR distributions: `head<TAB>relation<TAB>tail`, one fact per line.
//! Labels are opaque: they are compared byte for byte and never normalised.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    /// Conventional file name inside a dataset directory.
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.txt",
            Split::Valid => "valid.txt",
            Split::Test => "test.txt",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    /// Builds a triple, rejecting labels that are empty after trimming.
    pub fn new(
        head: impl Into<String>,
        relation: impl Into<String>,
        tail: impl Into<String>,
    ) -> Result<Self> {
        let triple = Triple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        };
        for (name, label) in [
            ("head", &triple.head),
            ("relation", &triple.relation),
            ("tail", &triple.tail),
        ] {
            if label.trim().is_empty() {
                return Err(Error::Input(format!("empty {name} label")));
            }
        }
        Ok(triple)
    }
}

/// The triples of one split in file order, duplicates removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleSet {
    pub split: Split,
    pub triples: Vec<Triple>,
    /// Number of repeated lines that were dropped.
    pub duplicates: usize,
}

impl TripleSet {
    pub fn empty(split: Split) -> Self {
        TripleSet {
            split,
            triples: Vec::new(),
            duplicates: 0,
        }
    }

    /// Keeps the first occurrence of every triple.
    pub fn from_triples(split: Split, triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut duplicates = 0;
        for t in triples {
            if seen.contains(&t) {
                duplicates += 1;
            } else {
                seen.insert(t.clone());
                kept.push(t);
            }
        }
        TripleSet {
            split,
            triples: kept,
            duplicates,
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Parses tab-separated triples from a reader. `source_name` is only used in
/// error messages.
pub fn parse_triples<R: BufRead>(reader: R, split: Split, source_name: &str) -> Result<TripleSet> {
    let mut triples = Vec::new();
    for (idx, line) in reader.split(b'\n').enumerate() {
        let lineno = idx + 1;
        let raw = line.map_err(|e| Error::io(source_name, e))?;
        let raw = raw.strip_suffix(b"\r").unwrap_or(&raw);
        let text = std::str::from_utf8(raw)
            .map_err(|_| Error::parse(source_name, lineno, "line is not valid UTF-8"))?;
        if text.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let triple = Triple::new(fields[0], fields[1], fields[2])
            .map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        triples.push(triple);
    }
    let set = TripleSet::from_triples(split, triples);
    if set.duplicates > 0 {
        log::warn!(
            "{source_name}: dropped {} duplicate triple line(s)",
            set.duplicates
        );
    }
    Ok(set)
}

pub fn load_split(path: impl AsRef<Path>, split: Split) -> Result<TripleSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_triples(BufReader::new(file), split, &path.display().to_string())
}

pub fn write_triples<W: Write>(mut out: W, set: &TripleSet) -> std::io::Result<()> {
    for t in &set.triples {
        writeln!(out, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
    }
    Ok(())
}

/// Dense label ↔ id mapping; ids follow first-insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `label`, assigning the next free id if unseen.
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = u32::try_from(self.labels.len()).expect("vocabulary exceeds u32 ids");
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn id(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `label<TAB>id` per line, in id order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, label) in self.labels.iter().enumerate() {
            writeln!(out, "{label}\t{id}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdTriple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub entities: Vocab,
    pub relations: Vocab,
    pub train: Vec<IdTriple>,
    pub valid: Vec<IdTriple>,
    pub test: Vec<IdTriple>,
}

impl KnowledgeGraph {
    pub fn split(&self, split: Split) -> &[IdTriple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    /// All triples of every split, train first.
    pub fn all_triples(&self) -> impl Iterator<Item = &IdTriple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn label_triple(&self, t: &IdTriple) -> Triple {
        Triple {
            head: self.entities.labels[t.head as usize].clone(),
            relation: self.relations.labels[t.relation as usize].clone(),
            tail: self.entities.labels[t.tail as usize].clone(),
        }
    }
}

/// Interns every label in train, then valid, then test order and stores the
/// splits as id triples (duplicates within a split dropped).
pub fn build_graph(train: &TripleSet, valid: &TripleSet, test: &TripleSet) -> KnowledgeGraph {
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let mut encode = |set: &TripleSet| {
        let mut seen = HashSet::with_capacity(set.len());
        let mut out = Vec::with_capacity(set.len());
        for t in &set.triples {
            let id = IdTriple {
                head: entities.intern(&t.head),
                relation: relations.intern(&t.relation),
                tail: entities.intern(&t.tail),
            };
            if seen.insert(id) {
                out.push(id);
            }
        }
        out
    };
    let train = encode(train);
    let valid = encode(valid);
    let test = encode(test);
    KnowledgeGraph {
        entities,
        relations,
        train,
        valid,
        test,
    }
}

/// File locations of a dataset's three splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

impl DatasetPaths {
    /// `train.txt`, `valid.txt` and `test.txt` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            train: dir.join(Split::Train.file_name()),
            valid: dir.join(Split::Valid.file_name()),
            test: dir.join(Split::Test.file_name()),
        }
    }

    pub fn get(&self, split: Split) -> &Path {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}

/// Parses the three splits (concurrently) and builds the graph.
pub fn load_dataset(paths: &DatasetPaths) -> Result<KnowledgeGraph> {
    let (train, (valid, test)) = rayon::join(
        || load_split(&paths.train, Split::Train),
        || {
            rayon::join(
                || load_split(&paths.valid, Split::Valid),
                || load_split(&paths.test, Split::Test),
            )
        },
    );
    Ok(build_graph(&train?, &valid?, &test?))
}

/// How an entity's training-set popularity is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopularityCounting {
    /// Head and tail slot occurrences: a self-loop contributes 2. This is the
    /// entity degree, and it reproduces the published FB15k-237 and WN18RR
    /// popularity statistics.
    #[default]
    Slots,
    /// Training triples mentioning the entity: a self-loop contributes 1.
    Triples,
}

/// Per-entity training popularity, indexed by entity id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PopularityIndex {
    counts: Vec<u64>,
    counting: PopularityCounting,
}

impl PopularityIndex {
    pub fn from_counts(counts: Vec<u64>, counting: PopularityCounting) -> Self {
        PopularityIndex { counts, counting }
    }

    /// Popularity of an entity; ids outside the index have popularity 0.
    pub fn get(&self, entity: u32) -> u64 {
        self.counts.get(entity as usize).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn counting(&self) -> PopularityCounting {
        self.counting
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn max(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Writes `label<TAB>popularity` per entity, in id order.
pub fn write_popularity_table<W: Write>(
    mut out: W,
    vocab: &Vocab,
    pop: &PopularityIndex,
) -> std::io::Result<()> {
    for (id, label) in vocab.labels().iter().enumerate() {
        writeln!(out, "{label}\t{}", pop.get(id as u32))?;
    }
    Ok(())
}

/// Reads a table written by [`write_popularity_table`]. Lets rank files that
/// do not come from a dataset (synthetic fixtures) carry gold popularity.
pub fn parse_popularity_table<R: BufRead>(
    reader: R,
    source_name: &str,
) -> Result<(Vocab, PopularityIndex)> {
    let mut vocab = Vocab::new();
    let mut counts = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let Some((label, count)) = line.split_once('\t') else {
            return Err(Error::parse(
                source_name,
                lineno,
                "expected `label<TAB>count`",
            ));
        };
        let count: u64 = count.trim().parse().map_err(|_| {
            Error::parse(
                source_name,
                lineno,
                format!("count `{count}` is not a non-negative integer"),
            )
        })?;
        if vocab.id(label).is_some() {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("duplicate label `{label}`"),
            ));
        }
        vocab.intern(label);
        counts.push(count);
    }
    Ok((
        vocab,
        PopularityIndex::from_counts(counts, PopularityCounting::default()),
    ))
}

pub fn load_popularity_table(path: impl AsRef<Path>) -> Result<(Vocab, PopularityIndex)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_popularity_table(BufReader::new(file), &path.display().to_string())
}

pub fn compute_popularity(graph: &KnowledgeGraph) -> PopularityIndex {
    compute_popularity_with(graph, PopularityCounting::default())
}

pub fn compute_popularity_with(
    graph: &KnowledgeGraph,
    counting: PopularityCounting,
) -> PopularityIndex {
    let mut counts = vec![0u64; graph.entity_count()];
    for t in &graph.train {
        counts[t.head as usize] += 1;
        if t.tail != t.head || counting == PopularityCounting::Slots {
            counts[t.tail as usize] += 1;
        }
    }
    PopularityIndex { counts, counting }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// |E| over all splits.
    pub n_entities: usize,
    /// |R| over all splits.
    pub n_relations: usize,
    /// Training triples.
    pub n_triples: usize,
    /// Mean popularity over the entities that occur in training. Unrounded.
    pub delta_avg: f64,
    pub delta_max: u64,
    /// Sum of all popularity counts.
    pub popularity_mass: u64,
    /// Entities with non-zero training popularity (the `delta_avg` denominator).
    pub n_train_entities: usize,
    /// False when no entity occurs in training, in which case `delta_avg` is 0.
    pub delta_avg_defined: bool,
}

pub fn dataset_stats(graph: &KnowledgeGraph, pop: &PopularityIndex) -> DatasetStats {
    let mass = pop.total();
    let n_train_entities = pop.counts().iter().filter(|&&c| c > 0).count();
    let defined = n_train_entities > 0;
    DatasetStats {
        n_entities: graph.entity_count(),
        n_relations: graph.relations.len(),
        n_triples: graph.train.len(),
        delta_avg: if defined {
            mass as f64 / n_train_entities as f64
        } else {
            0.0
        },
        delta_max: pop.max(),
        popularity_mass: mass,
        n_train_entities,
        delta_avg_defined: defined,
    }
}

impl fmt::Display for DatasetStats {
    /// Aligned two-column text; `delta_avg` rounded to one decimal.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let avg = if self.delta_avg_defined {
            format!("{:.1}", self.delta_avg)
        } else {
            "undefined".to_owned()
        };
        let rows = [
            ("n_entities", self.n_entities.to_string()),
            ("n_relations", self.n_relations.to_string()),
            ("n_triples", self.n_triples.to_string()),
            ("delta_avg", avg),
            ("delta_max", self.delta_max.to_string()),
        ];
        for (name, value) in rows {
            writeln!(f, "{name:<12}{value:>12}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(split: Split, rows: &[(&str, &str, &str)]) -> TripleSet {
        TripleSet::from_triples(
            split,
            rows.iter()
                .map(|(h, r, t)| Triple::new(*h, *r, *t).unwrap()),
        )
    }

    fn graph(train: &[(&str, &str, &str)], test: &[(&str, &str, &str)]) -> KnowledgeGraph {
        build_graph(
            &set(Split::Train, train),
            &TripleSet::empty(Split::Valid),
            &set(Split::Test, test),
        )
    }

    #[test]
    fn parses_two_lines() {
        let s = parse_triples("a\tr1\tb\nb\tr1\tc".as_bytes(), Split::Train, "mem").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.triples[1], Triple::new("b", "r1", "c").unwrap());
    }

    #[test]
    fn empty_input_is_empty_set() {
        let s = parse_triples("".as_bytes(), Split::Test, "mem").unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn accepts_crlf_and_blank_lines() {
        let s =
            parse_triples("a\tr\tb\r\n\r\nc\tr\td\r\n".as_bytes(), Split::Train, "mem").unwrap();
        assert_eq!(s.triples[0].tail, "b");
        assert_eq!(s.triples[1].tail, "d");
    }

    #[test]
    fn wrong_field_count_reports_line_number() {
        let err =
            parse_triples("a\tr\tb\nbroken line\n".as_bytes(), Split::Train, "f.txt").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn whitespace_label_rejected() {
        assert!(parse_triples("a\t \tb\n".as_bytes(), Split::Train, "f").is_err());
    }

    #[test]
    fn duplicates_dropped_and_counted() {
        let s = parse_triples("a\tr\tb\na\tr\tb\nb\tr\ta\n".as_bytes(), Split::Train, "f").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.duplicates, 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_split("/nonexistent/train.txt", Split::Train).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn vocab_counts_span_splits() {
        let g = graph(&[("a", "r", "b")], &[("a", "r", "c")]);
        assert_eq!(g.entities.len(), 3);
        assert_eq!(g.relations.len(), 1);
        assert_eq!(g.entities.labels(), &["a", "b", "c"]);
    }

    #[test]
    fn empty_graph() {
        let g = graph(&[], &[]);
        assert_eq!(g.entity_count(), 0);
        assert_eq!(g.relations.len(), 0);
        let stats = dataset_stats(&g, &compute_popularity(&g));
        assert!(!stats.delta_avg_defined);
        assert_eq!(stats.delta_avg, 0.0);
    }

    #[test]
    fn popularity_counts() {
        let g = graph(&[("a", "r", "b"), ("a", "r", "c")], &[("d", "r", "a")]);
        let pop = compute_popularity(&g);
        let id = |l| g.entities.id(l).unwrap();
        assert_eq!(pop.get(id("a")), 2);
        assert_eq!(pop.get(id("b")), 1);
        assert_eq!(pop.get(id("c")), 1);
        assert_eq!(pop.get(id("d")), 0);
    }

    #[test]
    fn self_loop_counting_modes() {
        let g = graph(&[("a", "r", "a")], &[]);
        assert_eq!(
            compute_popularity_with(&g, PopularityCounting::Triples).get(0),
            1
        );
        assert_eq!(
            compute_popularity_with(&g, PopularityCounting::Slots).get(0),
            2
        );
    }

    #[test]
    fn single_triple_stats() {
        let g = graph(&[("a", "r", "b")], &[]);
        let stats = dataset_stats(&g, &compute_popularity(&g));
        assert_eq!(
            (
                stats.n_entities,
                stats.n_relations,
                stats.n_triples,
                stats.delta_max
            ),
            (2, 1, 1, 1)
        );
        assert_eq!(stats.delta_avg, 1.0);
    }

    #[test]
    fn stats_text_is_aligned() {
        let g = graph(&[("a", "r", "b"), ("a", "r", "c")], &[]);
        let text = dataset_stats(&g, &compute_popularity(&g)).to_string();
        assert!(text.contains("delta_avg            1.3"));
        assert!(text.lines().all(|l| l.len() == 24));
    }

    #[test]
    fn vocab_export() {
        let g = graph(&[("x", "r", "y")], &[]);
        let mut buf = Vec::new();
        g.entities.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x\t0\ny\t1\n");
    }

    #[test]
    fn popularity_table_round_trip() {
        let mut vocab = Vocab::new();
        for l in ["x", "y", "z"] {
            vocab.intern(l);
        }
        let pop = PopularityIndex::from_counts(vec![4, 0, 12], PopularityCounting::Slots);
        let mut buf = Vec::new();
        write_popularity_table(&mut buf, &vocab, &pop).unwrap();
        assert_eq!(buf, b"x\t4\ny\t0\nz\t12\n");
        let (v2, p2) = parse_popularity_table(buf.as_slice(), "table").unwrap();
        assert_eq!((v2, p2), (vocab, pop));
        assert!(parse_popularity_table(&b"x\t1\nx\t2\n"[..], "table").is_err());
        assert!(parse_popularity_table(&b"x\t-1\n"[..], "table").is_err());
    }
}
