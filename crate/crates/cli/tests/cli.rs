use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_kgceval");

fn kgceval(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Four entities on a chain, one test triple `a r d`.
fn tiny_dataset(dir: &Path) {
    fs::write(dir.join("train.txt"), "a\tr\tb\nb\tr\tc\nc\tr\td\n").unwrap();
    fs::write(dir.join("valid.txt"), "a\tr\tc\n").unwrap();
    fs::write(dir.join("test.txt"), "a\tr\td\n").unwrap();
    let scores = concat!(
        r#"{"head":"a","relation":"r","tail":"d","direction":"head","scores":[0.5,0.9,0.95,0.1]}"#,
        "\n",
        r#"{"head":"a","relation":"r","tail":"d","direction":"tail","scores":[0.2,0.8,0.7,0.6]}"#,
        "\n"
    );
    fs::write(dir.join("scores.jsonl"), scores).unwrap();
}

#[test]
fn rank_applies_the_filter_and_writes_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    tiny_dataset(d);
    let out = d.join("ranks.tsv");
    let run = kgceval(&[
        "rank",
        "--dataset",
        p(d),
        "--scores",
        p(&d.join("scores.jsonl")),
        "--out",
        p(&out),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("a\tr\td\thead\t2\n"), "{text}");
    assert!(text.contains("a\tr\td\ttail\t1\n"), "{text}");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("ranks.tsv.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "rank");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 4);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let raw_out = d.join("raw.tsv");
    let run = kgceval(&[
        "rank",
        "--dataset",
        p(d),
        "--scores",
        p(&d.join("scores.jsonl")),
        "--raw",
        "--out",
        p(&raw_out),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let text = fs::read_to_string(&raw_out).unwrap();
    assert!(
        text.contains("head\t3\n") && text.contains("tail\t3\n"),
        "{text}"
    );
}

#[test]
fn eval_from_scores_matches_eval_from_ranks() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    tiny_dataset(d);
    let scores = d.join("scores.jsonl");
    let ranks = d.join("ranks.tsv");
    assert!(kgceval(&[
        "rank",
        "--dataset",
        p(d),
        "--scores",
        p(&scores),
        "--out",
        p(&ranks)
    ])
    .status
    .success());

    let a = kgceval(&[
        "eval",
        "--dataset",
        p(d),
        "--scores",
        p(&scores),
        "--alpha",
        "0.5",
    ]);
    let b = kgceval(&[
        "eval",
        "--dataset",
        p(d),
        "--ranks",
        p(&ranks),
        "--alpha",
        "0.5",
    ]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(b.status.success(), "{}", stderr(&b));
    let va: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let vb: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(va["probe"], vb["probe"]);
    assert_eq!(va["mrr"].as_f64().unwrap(), 0.75);
}

#[test]
fn exit_codes_and_error_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    tiny_dataset(d);

    let help = kgceval(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert_eq!(kgceval(&["--version"]).status.code(), Some(0));

    let unknown = kgceval(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(stderr(&unknown).starts_with("error[usage]: "));

    let missing = kgceval(&[
        "eval",
        "--ranks",
        p(&d.join("nope.tsv")),
        "--entities",
        "10",
    ]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).starts_with("error[io]: "));

    fs::write(d.join("r.tsv"), "x\tr\ty\ttail\t1\n").unwrap();
    let bad_alpha = kgceval(&[
        "eval",
        "--ranks",
        p(&d.join("r.tsv")),
        "--entities",
        "10",
        "--alpha",
        "-1",
    ]);
    assert_eq!(bad_alpha.status.code(), Some(1));
    assert!(stderr(&bad_alpha).starts_with("error[config]: "));
    assert_eq!(stderr(&bad_alpha).lines().count(), 1);

    fs::write(d.join("bad.tsv"), "x\tr\ty\tsideways\t1\n").unwrap();
    let parse = kgceval(&["eval", "--ranks", p(&d.join("bad.tsv")), "--entities", "10"]);
    assert_eq!(parse.status.code(), Some(1));
    assert!(stderr(&parse).starts_with("error[parse]: "));

    let zero_threads = kgceval(&[
        "--threads",
        "0",
        "eval",
        "--ranks",
        p(&d.join("r.tsv")),
        "--entities",
        "10",
    ]);
    assert_eq!(zero_threads.status.code(), Some(1));
}

#[test]
fn synth_and_sweep_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let profile = d.join("p.json");
    fs::write(
        &profile,
        r#"{"kind":"mixture","p1":0.3,"max_rank":500,"tail":{"kind":"geometric","p":0.05}}"#,
    )
    .unwrap();
    let mut runs = Vec::new();
    for i in 0..2 {
        let ranks = d.join(format!("m{i}.tsv"));
        let s = kgceval(&[
            "synth",
            "--profile",
            p(&profile),
            "--n",
            "300",
            "--seed",
            "7",
            "--out",
            p(&ranks),
        ]);
        assert!(s.status.success(), "{}", stderr(&s));
        let dir = d.join(format!("sweep{i}"));
        let spec = format!("m={}", ranks.display());
        let s = kgceval(&[
            "sweep",
            "--ranks",
            &spec,
            "--entities",
            "500",
            "--out",
            p(&dir),
        ]);
        assert!(s.status.success(), "{}", stderr(&s));
        assert!(dir.join("manifest.json").is_file());
        runs.push((
            fs::read(&ranks).unwrap(),
            fs::read(dir.join("surface.csv")).unwrap(),
        ));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn stats_formats_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    tiny_dataset(d);
    let json = kgceval(&["stats", "--dataset", p(d), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["n_entities"], 4);
    assert_eq!(v["n_triples"], 3);
    let csv = String::from_utf8(kgceval(&["stats", "--dataset", p(d), "--format", "csv"]).stdout)
        .unwrap();
    assert!(csv.contains("n_entities,4\n"), "{csv}");
}
