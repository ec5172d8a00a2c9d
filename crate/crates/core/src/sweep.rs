//! (alpha, beta) grid sweeps, ranking-flip detection and plot-ready exports.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bucket_of, probe_score, MetricConfig};
use crate::ranking::{QueryKey, RankRecord};
use crate::scalar::Scalar;

/// Absolute score difference at or below which two models are tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid<T = f64> {
    pub alphas: Vec<T>,
    pub betas: Vec<T>,
    /// Reference cell `(alpha, beta)` that flips are measured against.
    pub base: (T, T),
}

impl<T: Scalar> Default for SweepGrid<T> {
    /// alpha in {0.25, 0.5, 1, 2}, beta in {0, 0.2, 0.4, 0.8}, base (1, 0):
    /// the base cell is the conventional MRR-like perspective.
    fn default() -> Self {
        SweepGrid {
            alphas: [0.25, 0.5, 1.0, 2.0].map(T::of).to_vec(),
            betas: [0.0, 0.2, 0.4, 0.8].map(T::of).to_vec(),
            base: (T::one(), T::zero()),
        }
    }
}

impl<T: Scalar> SweepGrid<T> {
    pub fn validate(&self) -> Result<()> {
        if self
            .alphas
            .iter()
            .any(|a| !(a.is_finite() && *a > T::zero()))
        {
            return Err(Error::Config("sweep alphas must be finite and > 0".into()));
        }
        if self
            .betas
            .iter()
            .any(|b| !(b.is_finite() && *b >= T::zero()))
        {
            return Err(Error::Config("sweep betas must be finite and >= 0".into()));
        }
        if self.alphas.windows(2).any(|w| w[0] >= w[1])
            || self.betas.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(
                "sweep alphas and betas must be strictly ascending".into(),
            ));
        }
        if !self.alphas.contains(&self.base.0) || !self.betas.contains(&self.base.1) {
            return Err(Error::Config(format!(
                "base cell ({}, {}) is not on the grid",
                self.base.0, self.base.1
            )));
        }
        Ok(())
    }

    /// Cells in alpha-major order.
    pub fn cells(&self) -> Vec<(T, T)> {
        self.alphas
            .iter()
            .flat_map(|&a| self.betas.iter().map(move |&b| (a, b)))
            .collect()
    }
}

/// Relative order of an ordered model pair `(first, second)` in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrder {
    FirstAhead,
    SecondAhead,
    Tied,
}

impl PairOrder {
    pub fn of<T: Scalar>(first: T, second: T) -> Self {
        let diff = (first - second).as_f64();
        if diff.abs() <= TIE_TOLERANCE {
            PairOrder::Tied
        } else if diff > 0.0 {
            PairOrder::FirstAhead
        } else {
            PairOrder::SecondAhead
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell<T = f64> {
    pub alpha: T,
    pub beta: T,
    /// Score per model, keyed by model name.
    pub scores: BTreeMap<String, T>,
    /// Best first; tied models in lexicographic order.
    pub ranking: Vec<String>,
    /// Model pairs (lexicographically ordered) whose scores tie.
    pub ties: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flip<T = f64> {
    pub alpha: T,
    pub beta: T,
    pub first: String,
    pub second: String,
    pub base_order: PairOrder,
    pub cell_order: PairOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult<T = f64> {
    /// Model names, sorted.
    pub models: Vec<String>,
    pub grid: SweepGrid<T>,
    /// One entry per grid cell, alpha-major.
    pub cells: Vec<SweepCell<T>>,
    pub flips: Vec<Flip<T>>,
}

impl<T: Scalar> SweepResult<T> {
    pub fn cell(&self, alpha: T, beta: T) -> Option<&SweepCell<T>> {
        self.cells
            .iter()
            .find(|c| c.alpha == alpha && c.beta == beta)
    }

    pub fn score(&self, model: &str, alpha: T, beta: T) -> Option<T> {
        self.cell(alpha, beta)?.scores.get(model).copied()
    }

    pub fn base_cell(&self) -> Option<&SweepCell<T>> {
        self.cell(self.grid.base.0, self.grid.base.1)
    }
}

fn sorted_keys(records: &[RankRecord]) -> Vec<&QueryKey> {
    let mut keys: Vec<&QueryKey> = records.iter().map(|r| &r.key).collect();
    keys.sort_unstable();
    keys
}

/// Fails unless every model ranks the same multiset of queries.
fn check_same_queries(models: &BTreeMap<String, Vec<RankRecord>>) -> Result<()> {
    let mut iter = models.iter();
    let Some((ref_name, ref_records)) = iter.next() else {
        return Ok(());
    };
    let reference = sorted_keys(ref_records);
    for (name, records) in iter {
        if records.len() != reference.len() {
            return Err(Error::Validation(format!(
                "model `{name}` has {} records but `{ref_name}` has {}",
                records.len(),
                reference.len()
            )));
        }
        let keys = sorted_keys(records);
        if let Some((a, b)) = reference.iter().zip(&keys).find(|(a, b)| a != b) {
            return Err(Error::Validation(format!(
                "query sets differ: `{ref_name}` has {a} where `{name}` has {b}"
            )));
        }
    }
    Ok(())
}

/// Models ordered best-first; runs of scores within [`TIE_TOLERANCE`] of their
/// neighbour form a tie group ordered by name.
fn rank_models<T: Scalar>(scores: &BTreeMap<String, T>) -> (Vec<String>, Vec<(String, String)>) {
    let mut by_score: Vec<(&String, T)> = scores.iter().map(|(m, &s)| (m, s)).collect();
    by_score.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite scores")
            .then_with(|| a.0.cmp(b.0))
    });
    let mut ranking = Vec::with_capacity(by_score.len());
    let mut group: Vec<(&String, T)> = Vec::new();
    let flush = |group: &mut Vec<(&String, T)>, ranking: &mut Vec<String>| {
        group.sort_by(|a, b| a.0.cmp(b.0));
        ranking.extend(group.drain(..).map(|(m, _)| m.clone()));
    };
    for entry in by_score {
        if let Some(last) = group.last() {
            if PairOrder::of(last.1, entry.1) != PairOrder::Tied {
                flush(&mut group, &mut ranking);
            }
        }
        group.push(entry);
    }
    flush(&mut group, &mut ranking);

    let names: Vec<(&String, T)> = scores.iter().map(|(m, &s)| (m, s)).collect();
    let mut ties = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            if PairOrder::of(a.1, b.1) == PairOrder::Tied {
                ties.push((a.0.clone(), b.0.clone()));
            }
        }
    }
    (ranking, ties)
}

/// Scores every model at every grid cell, varying only alpha and beta of
/// `base_config`, and lists the model pairs whose order differs from the
/// base cell. Ties are never counted as flips.
pub fn run_sweep<T: Scalar>(
    models: &BTreeMap<String, Vec<RankRecord>>,
    grid: &SweepGrid<T>,
    base_config: &MetricConfig<T>,
) -> Result<SweepResult<T>> {
    grid.validate()?;
    if models.is_empty() {
        return Err(Error::Input("a sweep needs at least one model".into()));
    }
    check_same_queries(models)?;

    let cells = grid.cells();
    let jobs: Vec<(usize, &String, &Vec<RankRecord>)> = (0..cells.len())
        .flat_map(|c| models.iter().map(move |(m, r)| (c, m, r)))
        .collect();
    let scored: Vec<T> = jobs
        .par_iter()
        .map(|&(c, _, records)| {
            let (alpha, beta) = cells[c];
            probe_score(records, &base_config.with_alpha(alpha).with_beta(beta))
        })
        .collect::<Result<_>>()?;

    let mut per_cell: Vec<BTreeMap<String, T>> = vec![BTreeMap::new(); cells.len()];
    for (&(c, model, _), score) in jobs.iter().zip(scored) {
        per_cell[c].insert(model.clone(), score);
    }
    let sweep_cells: Vec<SweepCell<T>> = cells
        .iter()
        .zip(per_cell)
        .map(|(&(alpha, beta), scores)| {
            let (ranking, ties) = rank_models(&scores);
            SweepCell {
                alpha,
                beta,
                scores,
                ranking,
                ties,
            }
        })
        .collect();

    let names: Vec<String> = models.keys().cloned().collect();
    let base = sweep_cells
        .iter()
        .find(|c| (c.alpha, c.beta) == grid.base)
        .expect("validated base cell");
    let mut flips = Vec::new();
    for cell in &sweep_cells {
        if (cell.alpha, cell.beta) == grid.base {
            continue;
        }
        for (i, first) in names.iter().enumerate() {
            for second in &names[i + 1..] {
                let base_order = PairOrder::of(base.scores[first], base.scores[second]);
                let cell_order = PairOrder::of(cell.scores[first], cell.scores[second]);
                if base_order != PairOrder::Tied
                    && cell_order != PairOrder::Tied
                    && base_order != cell_order
                {
                    flips.push(Flip {
                        alpha: cell.alpha,
                        beta: cell.beta,
                        first: first.clone(),
                        second: second.clone(),
                        base_order,
                        cell_order,
                    });
                }
            }
        }
    }

    Ok(SweepResult {
        models: names,
        grid: grid.clone(),
        cells: sweep_cells,
        flips,
    })
}

/// Record counts per half-open rank bin plus an overflow bin `[last, inf)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub edges: Vec<u64>,
    /// `counts[i]` covers `[edges[i], edges[i + 1])`.
    pub counts: Vec<usize>,
    pub overflow: usize,
}

impl RankHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.overflow
    }
}

/// Rank 1; 2-5; 6-10; 11-100; then everything above 100.
pub const DEFAULT_RANK_BINS: [u64; 5] = [1, 2, 6, 11, 101];

pub fn rank_histogram(records: &[RankRecord], edges: &[u64]) -> Result<RankHistogram> {
    if edges.first() != Some(&1) {
        return Err(Error::Config("rank bin edges must start at 1".into()));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "rank bin edges must be strictly ascending".into(),
        ));
    }
    let mut counts = vec![0usize; edges.len()];
    for r in records {
        let b = bucket_of(edges, r.rank)
            .ok_or_else(|| Error::Input(format!("rank {} is below 1", r.rank)))?;
        counts[b] += 1;
    }
    let overflow = counts.pop().unwrap_or(0);
    Ok(RankHistogram {
        edges: edges.to_vec(),
        counts,
        overflow,
    })
}

/// One row of the long-format surface file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint<T = f64> {
    pub model: String,
    pub alpha: T,
    pub beta: T,
    pub score: T,
}

/// Writes `model,alpha,beta,score` rows sorted by model, alpha, beta. Scores
/// carry 17 significant digits so they parse back bit-exactly.
pub fn write_surface<T: Scalar, W: Write>(out: W, result: &SweepResult<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Input(format!("surface export: {e}"));
    w.write_record(["model", "alpha", "beta", "score"])
        .map_err(csv_err)?;
    for model in &result.models {
        for &alpha in &result.grid.alphas {
            for &beta in &result.grid.betas {
                let Some(score) = result.score(model, alpha, beta) else {
                    continue;
                };
                w.write_record([
                    model.clone(),
                    alpha.to_string(),
                    beta.to_string(),
                    format!("{score:.16e}"),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("surface output", e))?;
    Ok(())
}

pub fn surface_export<T: Scalar>(result: &SweepResult<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_surface(BufWriter::new(file), result).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_surface<T: Scalar, R: Read>(input: R) -> Result<Vec<SurfacePoint<T>>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut points = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let lineno = i + 2;
        let row = row.map_err(|e| Error::parse("surface", lineno, e.to_string()))?;
        if row.len() != 4 {
            return Err(Error::parse("surface", lineno, "expected 4 columns"));
        }
        let num = |s: &str| {
            s.parse::<T>()
                .map_err(|_| Error::parse("surface", lineno, format!("`{s}` is not a number")))
        };
        points.push(SurfacePoint {
            model: row[0].to_owned(),
            alpha: num(&row[1])?,
            beta: num(&row[2])?,
            score: num(&row[3])?,
        });
    }
    Ok(points)
}
