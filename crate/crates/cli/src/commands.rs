use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kgceval::kg_data::write_popularity_table;
use kgceval::metrics::{evaluate, MetricConfig, MetricReport};
use kgceval::ranking::{rank_score_file, write_rank_records};
use kgceval::sweep::{surface_export, SweepGrid};
use kgceval::{
    compute_popularity_with, dataset_stats, generate, popularity_table, rank_histogram, run_sweep,
    Error, PairOrder, RankProfile, RankRecord, RankingOptions,
};
use serde_json::json;

use crate::args::{
    CompareArgs, EvalArgs, Format, MetricArgs, RankArgs, SharedMetricArgs, StatsArgs, SweepArgs,
    SynthArgs,
};
use crate::inputs::{load_graph, model_files, parse_pair, strata_edges, Context};
use crate::manifest::{sidecar, RunManifest};
use crate::output::{self, emit, write_file, Comparison};
use crate::CliError;

fn counting_name(c: crate::args::Counting) -> &'static str {
    match c {
        crate::args::Counting::Slots => "slots",
        crate::args::Counting::Triples => "triples",
    }
}

fn rank_bytes(records: &[RankRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rank_records(&mut buf, records).expect("writing to memory");
    buf
}

fn shared_config(entity_count: u64, shared: &SharedMetricArgs) -> MetricConfig {
    MetricConfig::new(entity_count)
        .with_epsilon(shared.epsilon)
        .with_affine(!shared.no_affine)
}

fn metric_config(entity_count: u64, m: &MetricArgs) -> Result<MetricConfig, CliError> {
    let cfg = shared_config(entity_count, &m.shared)
        .with_alpha(m.alpha)
        .with_beta(m.beta);
    cfg.validate()?;
    Ok(cfg)
}

pub fn stats(args: &StatsArgs) -> Result<(), CliError> {
    let paths = args.data.require()?;
    let graph = load_graph(&paths)?;
    let pop = compute_popularity_with(&graph, args.data.counting.into());
    let stats = dataset_stats(&graph, &pop);
    let counting = counting_name(args.data.counting);

    let mut written: Vec<&Path> = Vec::new();
    if let Some(path) = &args.vocab_out {
        let mut buf = Vec::new();
        graph
            .entities
            .write_tsv(&mut buf)
            .expect("writing to memory");
        write_file(path, &buf)?;
        written.push(path);
    }
    if let Some(path) = &args.popularity_out {
        let mut buf = Vec::new();
        write_popularity_table(&mut buf, &graph.entities, &pop).expect("writing to memory");
        write_file(path, &buf)?;
        written.push(path);
    }
    if !written.is_empty() {
        let inputs = [paths.train.clone(), paths.valid.clone(), paths.test.clone()];
        let config = json!({ "counting": counting, "stats": stats });
        let manifest = RunManifest::new("stats", config, &inputs)?.with_outputs(&written);
        for path in &written {
            manifest.write(&sidecar(path))?;
        }
    }
    emit(None, &output::stats(&stats, counting, args.format))
}

pub fn rank(args: &RankArgs) -> Result<(), CliError> {
    let paths = args.data.require()?;
    let options = RankingOptions {
        filtered: !args.tie.raw,
        tie: args.tie.policy()?,
    };
    let graph = load_graph(&paths)?;
    let pop = compute_popularity_with(&graph, args.data.counting.into());
    let records = rank_score_file::<f64>(&args.scores, &graph, &pop, options)?;
    write_file(&args.out, &rank_bytes(&records))?;

    let config = json!({
        "tie": options.tie,
        "filtered": options.filtered,
        "entity_count": graph.entity_count(),
        "queries": records.len(),
    });
    let inputs = [paths.train, paths.valid, paths.test, args.scores.clone()];
    RunManifest::new("rank", config, &inputs)?
        .with_outputs(&[&args.out])
        .write(&sidecar(&args.out))
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let (ctx, records, mut inputs, ranking) = if let Some(scores) = &args.scores {
        let paths = args.source.data.require()?;
        if args.source.entities.is_some() {
            return Err(CliError::Usage(
                "--entities cannot be combined with a dataset".into(),
            ));
        }
        let options = RankingOptions {
            filtered: !args.tie.raw,
            tie: args.tie.policy()?,
        };
        let graph = load_graph(&paths)?;
        let pop = compute_popularity_with(&graph, args.source.data.counting.into());
        let records = rank_score_file::<f64>(scores, &graph, &pop, options)?;
        let ctx = Context {
            entity_count: graph.entity_count() as u64,
            popularity: Some((graph.entities, pop)),
            inputs: vec![paths.train, paths.valid, paths.test],
        };
        let ranking = json!({ "tie": options.tie, "filtered": options.filtered });
        (ctx, records, vec![scores.clone()], Some(ranking))
    } else {
        let ranks = args.ranks.as_ref().expect("clap requires ranks or scores");
        if args.tie.any_set() {
            log::warn!("--tie, --seed and --raw only apply to --scores input; ignored");
        }
        let ctx = Context::resolve(&args.source)?;
        let records = ctx.load_ranks(ranks)?;
        (ctx, records, vec![ranks.clone()], None)
    };
    inputs.extend(ctx.inputs.iter().cloned());

    let cfg = metric_config(ctx.entity_count, &args.metric)?;
    let edges = strata_edges(&args.report.strata, ctx.max_popularity())?;
    let report = evaluate(&records, &cfg, &args.report.hits, &edges)?;

    let csv_out = args
        .out
        .as_ref()
        .and_then(|p| p.extension())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let format = args
        .format
        .unwrap_or(if csv_out { Format::Csv } else { Format::Json });
    emit(args.out.as_deref(), &output::report(&report, format))?;

    if let Some(out) = &args.out {
        let config = json!({
            "metric": cfg,
            "hits": args.report.hits,
            "strata_edges": edges,
            "ranking": ranking,
            "counting": counting_name(args.source.data.counting),
            "format": format!("{format:?}").to_lowercase(),
        });
        RunManifest::new("eval", config, &inputs)?
            .with_outputs(&[out])
            .write(&sidecar(out))?;
    }
    Ok(())
}

type Models = BTreeMap<String, Vec<RankRecord>>;

fn load_models(ctx: &Context, specs: &[String]) -> Result<(Models, Vec<PathBuf>), CliError> {
    let files = model_files(specs)?;
    let mut models = BTreeMap::new();
    for (name, path) in &files {
        models.insert(name.clone(), ctx.load_ranks(path)?);
    }
    Ok((models, files.into_values().collect()))
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let ctx = Context::resolve(&args.source)?;
    let (models, mut inputs) = load_models(&ctx, &args.ranks)?;
    inputs.extend(ctx.inputs.iter().cloned());
    let grid = SweepGrid {
        alphas: args.alphas.clone(),
        betas: args.betas.clone(),
        base: parse_pair(&args.base, "--base")?,
    };
    let base = shared_config(ctx.entity_count, &args.shared);
    let result = run_sweep(&models, &grid, &base)?;
    let hists = models
        .iter()
        .map(|(name, records)| Ok((name.as_str(), rank_histogram(records, &args.bins)?)))
        .collect::<Result<Vec<_>, Error>>()?;

    let dir = &args.out;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let surface = dir.join("surface.csv");
    let rankings = dir.join("rankings.json");
    let flips = dir.join("flips.json");
    let histogram = dir.join("histogram.csv");

    surface_export(&result, &surface)?;
    log::info!("wrote {}", surface.display());
    write_file(
        &rankings,
        output::json(&json!({ "models": result.models, "base": grid.base, "cells": result.cells }))
            .as_bytes(),
    )?;
    write_file(
        &flips,
        output::json(&json!({ "models": result.models, "base": grid.base, "flips": result.flips }))
            .as_bytes(),
    )?;
    write_file(
        &histogram,
        output::histograms(hists.iter().map(|(m, h)| (*m, h))).as_bytes(),
    )?;
    if result.flips.is_empty() {
        log::info!("no ranking flips relative to the base cell");
    } else {
        log::info!(
            "{} ranking flip(s) relative to the base cell",
            result.flips.len()
        );
    }

    let config = json!({
        "grid": grid,
        "base_metric": base,
        "bins": args.bins,
        "counting": counting_name(args.source.data.counting),
        "models": model_files(&args.ranks)?,
    });
    RunManifest::new("sweep", config, &inputs)?
        .with_outputs(&[&surface, &rankings, &flips, &histogram])
        .write(&dir.join("manifest.json"))
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let ctx = Context::resolve(&args.source)?;
    let (models, mut inputs) = load_models(&ctx, &args.ranks)?;
    inputs.extend(ctx.inputs.iter().cloned());
    // keep the command-line order for the table columns
    let names: Vec<String> = args
        .ranks
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(n, _)| n.to_owned())
                .unwrap_or_default()
        })
        .collect();
    let cfg = metric_config(ctx.entity_count, &args.metric)?;
    let edges = strata_edges(&args.report.strata, ctx.max_popularity())?;
    let reports: Vec<MetricReport> = names
        .iter()
        .map(|n| evaluate(&models[n], &cfg, &args.report.hits, &edges))
        .collect::<Result<_, _>>()?;
    if models[&names[0]].len() != models[&names[1]].len() {
        log::warn!("the two rank files hold different numbers of records");
    }
    let leader = match PairOrder::of(reports[0].probe, reports[1].probe) {
        PairOrder::FirstAhead => Some(names[0].as_str()),
        PairOrder::SecondAhead => Some(names[1].as_str()),
        PairOrder::Tied => None,
    };
    let cmp = Comparison {
        models: [&names[0], &names[1]],
        leader,
        reports: [&reports[0], &reports[1]],
    };
    emit(args.out.as_deref(), &output::comparison(&cmp, args.format))?;
    if let Some(out) = &args.out {
        let config = json!({ "metric": cfg, "hits": args.report.hits, "strata_edges": edges });
        RunManifest::new("compare", config, &inputs)?
            .with_outputs(&[out])
            .write(&sidecar(out))?;
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let path = &args.profile;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let profile: RankProfile = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))?;
    let records = generate(&profile, args.n, args.seed)?;
    write_file(&args.out, &rank_bytes(&records))?;
    let mut outputs: Vec<&Path> = vec![&args.out];
    if let Some(pop_out) = &args.popularity_out {
        let (vocab, pop) = popularity_table(&records)?;
        let mut buf = Vec::new();
        write_popularity_table(&mut buf, &vocab, &pop).expect("writing to memory");
        write_file(pop_out, &buf)?;
        outputs.push(pop_out);
    }
    let config = json!({ "profile": profile, "n": args.n, "seed": args.seed });
    let manifest =
        RunManifest::new("synth", config, std::slice::from_ref(path))?.with_outputs(&outputs);
    for out in &outputs {
        manifest.write(&sidecar(out))?;
    }
    Ok(())
}
