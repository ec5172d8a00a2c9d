use std::io::Cursor;

use kgceval::ranking::{parse_rank_records, rank_in_scores, rank_score_lines, write_rank_records};
use kgceval::rng::SeededRng;
use kgceval::{
    build_graph, compute_popularity, filter_set, make_queries, Direction, Error, FilterIndex,
    FilterSet, KnowledgeGraph, LabelPopularity, RankingOptions, Split, TiePolicy, Triple,
    TripleSet,
};
use proptest::prelude::*;

/// Rank by sorting: the gold's 1-based position after a stable sort in which
/// candidates with the gold's score are placed after the gold (optimistic),
/// before it (pessimistic), and so on.
fn sort_rank(scores: &[f64], gold: usize, filter: &[u32], tie: TiePolicy) -> u64 {
    let kept: Vec<(usize, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|(i, _)| !filter.contains(&(*i as u32)))
        .collect();
    let mut order = kept.clone();
    order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then((a.0 != gold).cmp(&(b.0 != gold)))
    });
    let best = order.iter().position(|&(i, _)| i == gold).unwrap() as u64 + 1;
    order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then((a.0 == gold).cmp(&(b.0 == gold)))
    });
    let worst = order.iter().position(|&(i, _)| i == gold).unwrap() as u64 + 1;
    match tie {
        TiePolicy::Optimistic => best,
        TiePolicy::Pessimistic => worst,
        TiePolicy::Average => best + (worst - best).div_ceil(2),
        TiePolicy::Random { seed } => best + SeededRng::new(seed).up_to(worst - best),
    }
}

fn policies(seed: u64) -> [TiePolicy; 4] {
    [
        TiePolicy::Optimistic,
        TiePolicy::Pessimistic,
        TiePolicy::Average,
        TiePolicy::Random { seed },
    ]
}

/// Scores drawn from a handful of levels so that ties are common.
fn score_row() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u8..6, 2..60)
        .prop_map(|v| v.into_iter().map(|x| x as f64 * 0.5 - 1.0).collect())
}

fn set(split: Split, rows: &[(String, String, String)]) -> TripleSet {
    TripleSet::from_triples(
        split,
        rows.iter().map(|(h, r, t)| Triple::new(h, r, t).unwrap()),
    )
}

/// A small graph over `e0..e{n}` and two relations, test split taken from the
/// tail of the generated rows.
fn small_graph() -> impl Strategy<Value = KnowledgeGraph> {
    prop::collection::vec((0u8..10, 0u8..2, 0u8..10), 4..50).prop_map(|rows| {
        let rows: Vec<(String, String, String)> = rows
            .into_iter()
            .map(|(h, r, t)| (format!("e{h}"), format!("r{r}"), format!("e{t}")))
            .collect();
        let cut = rows.len() * 3 / 4;
        let cut_valid = rows.len() * 7 / 8;
        build_graph(
            &set(Split::Train, &rows[..cut]),
            &set(Split::Valid, &rows[cut..cut_valid]),
            &set(Split::Test, &rows[cut_valid..]),
        )
    })
}

fn sample_graph() -> KnowledgeGraph {
    let s = |rows: &[(&str, &str, &str)]| -> Vec<(String, String, String)> {
        rows.iter()
            .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
            .collect()
    };
    build_graph(
        &set(
            Split::Train,
            &s(&[("a", "r", "b"), ("c", "r", "b"), ("a", "r", "d")]),
        ),
        &set(Split::Valid, &s(&[("d", "r", "b")])),
        &set(Split::Test, &s(&[("a", "r", "c"), ("c", "r", "d")])),
    )
}

fn score_lines(g: &KnowledgeGraph, scores: impl Fn(usize) -> Vec<f64>) -> String {
    let pop = compute_popularity(g);
    make_queries(&g.test, &pop)
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let k = q.key(g);
            format!(
                "{{\"head\":\"{}\",\"relation\":\"{}\",\"tail\":\"{}\",\"direction\":\"{}\",\"scores\":{:?}}}\n",
                k.head, k.relation, k.tail, k.direction, scores(i)
            )
        })
        .collect()
}

#[test]
fn worked_tie_example() {
    // gold 0.7; one candidate above, two tied
    let scores = [0.7, 0.9, 0.7, 0.1, 0.7];
    let f = FilterSet::empty();
    assert_eq!(
        rank_in_scores(&scores, 0, &f, TiePolicy::Optimistic).unwrap(),
        2
    );
    assert_eq!(
        rank_in_scores(&scores, 0, &f, TiePolicy::Pessimistic).unwrap(),
        4
    );
    assert_eq!(
        rank_in_scores(&scores, 0, &f, TiePolicy::Average).unwrap(),
        3
    );
    let filtered: FilterSet = [1, 2].into_iter().collect();
    assert_eq!(
        rank_in_scores(&scores, 0, &filtered, TiePolicy::Pessimistic).unwrap(),
        2
    );
}

#[test]
fn average_policy_rounds_half_up() {
    // one tie: positions 1 or 2, midpoint 1.5 rounds to 2
    let scores = [1.0f64, 1.0];
    assert_eq!(
        rank_in_scores(&scores, 0, &FilterSet::empty(), TiePolicy::Average).unwrap(),
        2
    );
}

#[test]
fn non_finite_scores_and_self_filtering_fail() {
    let scores = [0.5, f64::NAN];
    assert!(matches!(
        rank_in_scores(&scores, 0, &FilterSet::empty(), TiePolicy::Average),
        Err(Error::Input(_))
    ));
    let own: FilterSet = [0].into_iter().collect();
    assert!(matches!(
        rank_in_scores(&[0.5, 0.1], 0, &own, TiePolicy::Average),
        Err(Error::Contract(_))
    ));
}

#[test]
fn random_policy_needs_a_seed() {
    assert!(matches!(
        TiePolicy::parse("random", None),
        Err(Error::Config(_))
    ));
    assert_eq!(
        TiePolicy::parse("random", Some(9)).unwrap(),
        TiePolicy::Random { seed: 9 }
    );
    assert!(TiePolicy::parse("lucky", None).is_err());
}

#[test]
fn score_file_ranks_every_test_query() {
    let g = sample_graph();
    let pop = compute_popularity(&g);
    let n = g.entity_count();
    let text = score_lines(&g, |i| {
        (0..n).map(|e| ((e * 7 + i * 3) % 5) as f64).collect()
    });
    let records = rank_score_lines::<f64, _>(
        Cursor::new(text.clone()),
        "inline",
        &g,
        &pop,
        RankingOptions::default(),
    )
    .unwrap();
    assert_eq!(records.len(), 4);
    let queries = make_queries(&g.test, &pop);
    let index = FilterIndex::new(&g);
    for ((q, r), i) in queries.iter().zip(&records).zip(0..) {
        assert_eq!(r.key, q.key(&g));
        assert_eq!(r.gold_popularity, q.gold_popularity);
        let scores: Vec<f64> = (0..n).map(|e| ((e * 7 + i * 3) % 5) as f64).collect();
        let expected =
            rank_in_scores(&scores, q.gold, &index.filter_for(q), TiePolicy::Average).unwrap();
        assert_eq!(r.rank, expected);
    }

    // shuffled input gives the same records back in query order
    let mut lines: Vec<&str> = text.lines().collect();
    lines.reverse();
    let reversed = lines.join("\n");
    let again = rank_score_lines::<f64, _>(
        Cursor::new(reversed),
        "inline",
        &g,
        &pop,
        RankingOptions::default(),
    )
    .unwrap();
    assert_eq!(again, records);
}

#[test]
fn score_file_contract_violations() {
    let g = sample_graph();
    let pop = compute_popularity(&g);
    let n = g.entity_count();
    let opts = RankingOptions::default();
    let full = score_lines(&g, |_| vec![0.0; n]);
    let run =
        |text: String| rank_score_lines::<f64, _>(Cursor::new(text), "inline", &g, &pop, opts);

    let missing: String = full.lines().skip(1).map(|l| format!("{l}\n")).collect();
    assert!(matches!(run(missing), Err(Error::Validation(_))));

    let first = full.lines().next().unwrap();
    assert!(matches!(
        run(format!("{full}{first}\n")),
        Err(Error::Input(_))
    ));

    let short = score_lines(&g, |_| vec![0.0; n - 1]);
    assert!(matches!(run(short), Err(Error::Input(_))));

    let stranger = first.replace("\"tail\":\"c\"", "\"tail\":\"zz\"");
    assert!(matches!(run(stranger), Err(Error::Input(_))));

    assert!(matches!(
        run("{not json\n".into()),
        Err(Error::Parse { .. })
    ));
}

#[test]
fn rank_files_round_trip() {
    let g = sample_graph();
    let pop = compute_popularity(&g);
    let text = "a\tr\tc\thead\t3\na\tr\tc\ttail\t1\n";
    let records =
        parse_rank_records(Cursor::new(text), "ranks", &LabelPopularity::new(&g, &pop)).unwrap();
    assert_eq!(records[0].key.direction, Direction::Head);
    assert_eq!(records[0].gold_popularity, 2);
    assert_eq!(records[1].gold_popularity, 1);
    let mut out = Vec::new();
    write_rank_records(&mut out, &records).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), text);

    let zero = parse_rank_records(
        Cursor::new("a\tr\tc\thead\t0\n"),
        "ranks",
        &LabelPopularity::none(),
    );
    assert!(matches!(zero, Err(Error::Validation(_))));
    let bad = parse_rank_records(
        Cursor::new("a\tr\tc\tsideways\t2\n"),
        "ranks",
        &LabelPopularity::none(),
    );
    assert!(matches!(bad, Err(Error::Parse { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn counting_rank_matches_sorting(
        scores in score_row(),
        gold_pick in any::<prop::sample::Index>(),
        mask in prop::collection::vec(any::<bool>(), 60),
        seed in any::<u64>(),
    ) {
        let gold = gold_pick.index(scores.len());
        let filter: Vec<u32> = (0..scores.len() as u32)
            .filter(|&i| mask[i as usize] && i as usize != gold)
            .collect();
        let fs: FilterSet = filter.iter().copied().collect();
        for tie in policies(seed) {
            let got = rank_in_scores(&scores, gold as u32, &fs, tie).unwrap();
            prop_assert_eq!(got, sort_rank(&scores, gold, &filter, tie), "{:?}", tie);
        }
    }

    #[test]
    fn tie_policies_are_ordered(scores in score_row(), seed in any::<u64>()) {
        let f = FilterSet::empty();
        let opt = rank_in_scores(&scores, 0, &f, TiePolicy::Optimistic).unwrap();
        let avg = rank_in_scores(&scores, 0, &f, TiePolicy::Average).unwrap();
        let pess = rank_in_scores(&scores, 0, &f, TiePolicy::Pessimistic).unwrap();
        let rnd = rank_in_scores(&scores, 0, &f, TiePolicy::Random { seed }).unwrap();
        prop_assert!(opt <= avg && avg <= pess);
        prop_assert!(opt <= rnd && rnd <= pess);
        prop_assert!(pess <= scores.len() as u64);
    }

    #[test]
    fn filtering_never_worsens_a_rank(
        scores in score_row(),
        mask in prop::collection::vec(any::<bool>(), 60),
    ) {
        let filter: FilterSet = (1..scores.len() as u32).filter(|&i| mask[i as usize]).collect();
        for tie in [TiePolicy::Optimistic, TiePolicy::Pessimistic, TiePolicy::Average] {
            let raw = rank_in_scores(&scores, 0, &FilterSet::empty(), tie).unwrap();
            let filtered = rank_in_scores(&scores, 0, &filter, tie).unwrap();
            prop_assert!(filtered <= raw);
        }
    }

    #[test]
    fn filter_matches_brute_force_substitution(g in small_graph()) {
        let pop = compute_popularity(&g);
        let index = FilterIndex::new(&g);
        let known: Vec<_> = g.all_triples().copied().collect();
        for q in make_queries(&g.test, &pop) {
            let brute: FilterSet = (0..g.entity_count() as u32)
                .filter(|&e| e != q.gold)
                .filter(|&e| {
                    let mut t = q.triple;
                    match q.direction {
                        Direction::Head => t.head = e,
                        Direction::Tail => t.tail = e,
                    }
                    known.contains(&t)
                })
                .collect();
            prop_assert_eq!(&filter_set(&q, &g), &brute);
            prop_assert_eq!(&index.filter_for(&q), &brute);
        }
    }
}
