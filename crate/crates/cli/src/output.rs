//! Rendering of reports as JSON, CSV or aligned text.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use kgceval::metrics::{MetricReport, Stratum};
use kgceval::sweep::RankHistogram;
use kgceval::{DatasetStats, Error};
use serde::Serialize;

use crate::args::Format;
use crate::CliError;

pub fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    text
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Writes to `path`, or to stdout when there is none.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, contents.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))?;
            Ok(())
        }
    }
}

fn bound(hi: Option<u64>) -> String {
    hi.map_or_else(String::new, |h| h.to_string())
}

fn stratum_label(s: &Stratum) -> String {
    match s.hi {
        Some(hi) => format!("[{}, {})", s.lo, hi),
        None => format!("[{}, inf)", s.lo),
    }
}

pub fn stats(stats: &DatasetStats, counting: &str, format: Format) -> String {
    match format {
        Format::Text => format!("{stats}"),
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                counting: &'a str,
                #[serde(flatten)]
                stats: &'a DatasetStats,
            }
            json(&Out { counting, stats })
        }
        Format::Csv => {
            let mut s = String::from("statistic,value\n");
            let rows: [(&str, String); 8] = [
                ("n_entities", stats.n_entities.to_string()),
                ("n_relations", stats.n_relations.to_string()),
                ("n_triples", stats.n_triples.to_string()),
                ("delta_avg", stats.delta_avg.to_string()),
                ("delta_max", stats.delta_max.to_string()),
                ("popularity_mass", stats.popularity_mass.to_string()),
                ("n_train_entities", stats.n_train_entities.to_string()),
                ("counting", counting.to_owned()),
            ];
            for (k, v) in rows {
                let _ = writeln!(s, "{k},{v}");
            }
            s
        }
    }
}

/// Long format: `metric,lo,hi,count,value`; strata rows fill `lo`/`hi`.
fn report_csv(report: &MetricReport) -> String {
    let mut s = String::from("metric,lo,hi,count,value\n");
    let n = report.records;
    let _ = writeln!(s, "probe,,,{n},{}", report.probe);
    let _ = writeln!(s, "mr,,,{n},{}", report.mr);
    let _ = writeln!(s, "mrr,,,{n},{}", report.mrr);
    for (k, v) in &report.hits {
        let _ = writeln!(s, "hits@{k},,,{n},{v}");
    }
    for st in &report.strata {
        let score = st.score.map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(s, "stratum,{},{},{},{score}", st.lo, bound(st.hi), st.count);
    }
    s
}

fn report_text(report: &MetricReport) -> String {
    let c = &report.config;
    let mut s = format!(
        "alpha {}  beta {}  epsilon {}  {}  |E| {}  records {}\n\n",
        c.alpha,
        c.beta,
        c.epsilon,
        if c.affine { "affine" } else { "raw" },
        c.entity_count,
        report.records
    );
    let _ = writeln!(s, "{:<12}{:>14}", "probe", format!("{:.6}", report.probe));
    let _ = writeln!(s, "{:<12}{:>14}", "mr", format!("{:.3}", report.mr));
    let _ = writeln!(s, "{:<12}{:>14}", "mrr", format!("{:.6}", report.mrr));
    for (k, v) in &report.hits {
        let _ = writeln!(s, "{:<12}{:>14}", format!("hits@{k}"), format!("{v:.6}"));
    }
    let _ = writeln!(
        s,
        "\n{:<18}{:>10}{:>14}",
        "popularity", "count", "score (b=0)"
    );
    for st in &report.strata {
        let score = st
            .score
            .map_or_else(|| "-".to_owned(), |v| format!("{v:.6}"));
        let _ = writeln!(s, "{:<18}{:>10}{:>14}", stratum_label(st), st.count, score);
    }
    s
}

pub fn report(report: &MetricReport, format: Format) -> String {
    match format {
        Format::Json => json(report),
        Format::Csv => report_csv(report),
        Format::Text => report_text(report),
    }
}

#[derive(Serialize)]
pub struct Comparison<'a> {
    pub models: [&'a str; 2],
    /// Model ahead on the probe score, or `null` for a tie.
    pub leader: Option<&'a str>,
    pub reports: [&'a MetricReport; 2],
}

fn compare_rows(c: &Comparison) -> Vec<(String, Option<f64>, Option<f64>)> {
    let [a, b] = c.reports;
    let mut rows = vec![
        ("probe".to_owned(), Some(a.probe), Some(b.probe)),
        ("mr".to_owned(), Some(a.mr), Some(b.mr)),
        ("mrr".to_owned(), Some(a.mrr), Some(b.mrr)),
    ];
    for (k, v) in &a.hits {
        rows.push((format!("hits@{k}"), Some(*v), b.hits.get(k).copied()));
    }
    for (sa, sb) in a.strata.iter().zip(&b.strata) {
        rows.push((
            format!("stratum {} n={}", stratum_label(sa), sa.count),
            sa.score,
            sb.score,
        ));
    }
    rows
}

pub fn comparison(c: &Comparison, format: Format) -> String {
    let [na, nb] = c.models;
    match format {
        Format::Json => json(c),
        Format::Csv => {
            let mut s = format!("metric,{na},{nb},difference\n");
            for (m, a, b) in compare_rows(c) {
                let cell = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
                let diff = a.zip(b).map(|(a, b)| a - b);
                let _ = writeln!(s, "\"{m}\",{},{},{}", cell(a), cell(b), cell(diff));
            }
            s
        }
        Format::Text => {
            let cfg = &c.reports[0].config;
            let mut s = format!(
                "alpha {}  beta {}  epsilon {}  {}  |E| {}\n\n",
                cfg.alpha,
                cfg.beta,
                cfg.epsilon,
                if cfg.affine { "affine" } else { "raw" },
                cfg.entity_count
            );
            let diff_head = format!("{na} - {nb}");
            let width = na.len().max(nb.len()).max(diff_head.len()).max(12) + 2;
            let _ = writeln!(
                s,
                "{:<28}{:>width$}{:>width$}{:>width$}",
                "metric", na, nb, diff_head
            );
            for (m, a, b) in compare_rows(c) {
                let cell = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.6}"));
                let diff = a
                    .zip(b)
                    .map_or_else(|| "-".to_owned(), |(a, b)| format!("{:+.6}", a - b));
                let _ = writeln!(
                    s,
                    "{:<28}{:>width$}{:>width$}{:>width$}",
                    m,
                    cell(a),
                    cell(b),
                    diff
                );
            }
            let _ = writeln!(s, "\nahead on probe: {}", c.leader.unwrap_or("tie"));
            s
        }
    }
}

/// `model,lo,hi,count`; the overflow bin has an empty `hi`.
pub fn histograms<'a>(hists: impl IntoIterator<Item = (&'a str, &'a RankHistogram)>) -> String {
    let mut s = String::from("model,lo,hi,count\n");
    for (model, h) in hists {
        for (i, count) in h.counts.iter().enumerate() {
            let _ = writeln!(s, "{model},{},{},{count}", h.edges[i], h.edges[i + 1]);
        }
        let _ = writeln!(s, "{model},{},,{}", h.edges[h.edges.len() - 1], h.overflow);
    }
    s
}
