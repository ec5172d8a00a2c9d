use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kgceval::{
    compute_popularity_with, load_dataset, load_popularity_table, load_rank_file, DatasetPaths,
    KnowledgeGraph, LabelPopularity, PopularityCounting, PopularityIndex, RankRecord, Split,
    TiePolicy, Vocab,
};

use crate::args::{Counting, DatasetArgs, SourceArgs, TieArgs};
use crate::CliError;

impl From<Counting> for PopularityCounting {
    fn from(c: Counting) -> Self {
        match c {
            Counting::Slots => PopularityCounting::Slots,
            Counting::Triples => PopularityCounting::Triples,
        }
    }
}

impl DatasetArgs {
    /// `None` when no split was named at all.
    pub fn paths(&self) -> Result<Option<DatasetPaths>, CliError> {
        let base = self.dataset.as_ref().map(DatasetPaths::in_dir);
        let pick = |flag: &Option<PathBuf>, split: Split| -> Option<PathBuf> {
            flag.clone()
                .or_else(|| base.as_ref().map(|b| b.get(split).to_path_buf()))
        };
        let (train, valid, test) = (
            pick(&self.train, Split::Train),
            pick(&self.valid, Split::Valid),
            pick(&self.test, Split::Test),
        );
        match (train, valid, test) {
            (Some(train), Some(valid), Some(test)) => Ok(Some(DatasetPaths { train, valid, test })),
            (None, None, None) => Ok(None),
            _ => Err(CliError::Usage(
                "give --dataset DIR or all three of --train, --valid and --test".into(),
            )),
        }
    }

    pub fn require(&self) -> Result<DatasetPaths, CliError> {
        self.paths()?
            .ok_or_else(|| CliError::Usage("a dataset is required (--dataset DIR)".into()))
    }
}

pub fn load_graph(paths: &DatasetPaths) -> Result<KnowledgeGraph, CliError> {
    Ok(load_dataset(paths)?)
}

/// Entity count and gold popularity for rank files.
pub struct Context {
    pub entity_count: u64,
    pub popularity: Option<(Vocab, PopularityIndex)>,
    /// Files read to build the context, for the manifest.
    pub inputs: Vec<PathBuf>,
}

impl Context {
    pub fn resolve(args: &SourceArgs) -> Result<Context, CliError> {
        if let Some(paths) = args.data.paths()? {
            if args.entities.is_some() {
                return Err(CliError::Usage(
                    "--entities cannot be combined with a dataset".into(),
                ));
            }
            let graph = load_graph(&paths)?;
            let pop = compute_popularity_with(&graph, args.data.counting.into());
            return Ok(Context {
                entity_count: graph.entity_count() as u64,
                popularity: Some((graph.entities, pop)),
                inputs: vec![paths.train, paths.valid, paths.test],
            });
        }
        let mut inputs = Vec::new();
        let popularity = match &args.popularity {
            Some(path) => {
                inputs.push(path.clone());
                Some(load_popularity_table(path)?)
            }
            None => None,
        };
        Ok(Context {
            entity_count: args.entities.unwrap_or(0),
            popularity,
            inputs,
        })
    }

    pub fn lookup(&self) -> LabelPopularity<'_> {
        match &self.popularity {
            Some((vocab, pop)) => LabelPopularity::from_vocab(vocab, pop),
            None => LabelPopularity::none(),
        }
    }

    pub fn max_popularity(&self) -> u64 {
        self.popularity.as_ref().map_or(0, |(_, p)| p.max())
    }

    pub fn load_ranks(&self, path: &Path) -> Result<Vec<RankRecord>, CliError> {
        let records = load_rank_file(path, &self.lookup())?;
        if records.is_empty() {
            return Err(
                kgceval::Error::Input(format!("{} holds no rank records", path.display())).into(),
            );
        }
        Ok(records)
    }
}

impl TieArgs {
    pub fn policy(&self) -> Result<TiePolicy, CliError> {
        Ok(TiePolicy::parse(
            self.tie.as_deref().unwrap_or("average"),
            self.seed,
        )?)
    }

    pub fn any_set(&self) -> bool {
        self.tie.is_some() || self.seed.is_some() || self.raw
    }
}

/// Parses `name=path` model arguments; names must be unique and CSV-safe.
pub fn model_files(specs: &[String]) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let mut out = BTreeMap::new();
    for spec in specs {
        let Some((name, path)) = spec.split_once('=') else {
            return Err(CliError::Usage(format!("expected NAME=FILE, got `{spec}`")));
        };
        if name.is_empty() || path.is_empty() {
            return Err(CliError::Usage(format!("expected NAME=FILE, got `{spec}`")));
        }
        if name.contains([',', '"', '\n', '\r']) {
            return Err(CliError::Usage(format!(
                "model name `{name}` may not contain commas, quotes or newlines"
            )));
        }
        if out.insert(name.to_owned(), PathBuf::from(path)).is_some() {
            return Err(CliError::Usage(format!("model `{name}` is given twice")));
        }
    }
    Ok(out)
}

/// Ascending popularity strata edges from `auto` or a comma list.
pub fn strata_edges(spec: &str, max_popularity: u64) -> Result<Vec<u64>, CliError> {
    if spec == "auto" {
        return Ok(kgceval::metrics::default_strata_edges(max_popularity));
    }
    spec.split(',')
        .map(|s| {
            s.trim().parse::<u64>().map_err(|_| {
                CliError::Usage(format!("--strata: `{s}` is not a non-negative integer"))
            })
        })
        .collect()
}

pub fn parse_pair(spec: &str, flag: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("{flag} expects two numbers `a,b`, got `{spec}`"));
    let (a, b) = spec.split_once(',').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}
