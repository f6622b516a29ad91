use mill_core::corpus::{analyze, AnalyzerConfig, Document};
use mill_core::index::{Bm25Params, PostingsIndex};
use proptest::prelude::*;

fn toy() -> PostingsIndex {
    PostingsIndex::build(
        vec![
            Document::new("D1", "the cat sat"),
            Document::new("D2", "dogs bark"),
            Document::new("D3", "cat cat cat"),
        ],
        AnalyzerConfig::default(),
    )
    .unwrap()
}

/// Textbook BM25 for one document, computed from raw counts.
fn reference_score(docs: &[Vec<String>], doc: usize, query: &[String], p: &Bm25Params) -> f64 {
    let n = docs.len() as f64;
    let avg = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    let mut distinct: Vec<&String> = query.iter().collect();
    distinct.sort();
    distinct.dedup();
    let mut total = 0.0;
    for t in distinct {
        let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
        let tf = docs[doc].iter().filter(|w| *w == t).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let qtf = query.iter().filter(|w| *w == t).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let len = docs[doc].len() as f64;
        let tf_part = tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * len / avg));
        let q_part = (p.k3 + 1.0) * qtf / (p.k3 + qtf);
        total += idf * tf_part * q_part;
    }
    total
}

#[test]
fn toy_corpus_ranking() {
    let idx = toy();
    let p = Bm25Params::default();
    let r = idx.search("q", &idx.analyze("cat"), 10, &p).unwrap();
    let ids: Vec<_> = r.doc_ids().collect();
    assert_eq!(ids, ["D3", "D1"]);
    let twice = idx.search("q", &idx.analyze("cat cat"), 10, &p).unwrap();
    assert_eq!(twice.doc_ids().collect::<Vec<_>>(), ids);
    for (a, b) in r.entries.iter().zip(&twice.entries) {
        assert!((b.score / a.score - 1.8).abs() < 1e-9);
    }
}

#[test]
fn scores_match_reference_formula() {
    let texts = [
        "ranking functions score documents",
        "documents contain terms and terms repeat terms",
        "short",
        "a ranking of documents by score",
    ];
    let cfg = AnalyzerConfig::default();
    let idx = PostingsIndex::build(
        texts.iter().enumerate().map(|(i, t)| Document::new(format!("d{i}"), *t)),
        cfg.clone(),
    )
    .unwrap();
    let tokenized: Vec<Vec<String>> = texts.iter().map(|t| analyze(t, &cfg).iter().map(String::from).collect()).collect();
    let p = Bm25Params { k1: 0.9, b: 0.4, k3: 8.0 };
    let q = analyze("documents terms score score", &cfg);
    let qv: Vec<String> = q.iter().map(String::from).collect();
    let r = idx.search("q", &q, 10, &p).unwrap();
    for e in &r.entries {
        let i: usize = e.doc_id[1..].parse().unwrap();
        assert!((e.score - reference_score(&tokenized, i, &qv, &p)).abs() < 1e-9, "{}", e.doc_id);
    }
}

#[test]
fn saved_index_answers_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.idx");
    let idx = toy();
    idx.save(&path).unwrap();
    let back = PostingsIndex::load(&path).unwrap();
    let p = Bm25Params::default();
    for q in ["cat", "dogs bark", "the sat cat"] {
        assert_eq!(idx.search("q", &idx.analyze(q), 10, &p).unwrap(), back.search("q", &back.analyze(q), 10, &p).unwrap());
    }
}

fn corpus() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(proptest::collection::vec("(alpha|beta|gamma|delta|omega|sigma)", 1..12), 1..20)
        .prop_map(|docs| docs.into_iter().map(|w| w.join(" ")).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn adding_a_matching_occurrence_never_lowers_the_score(
        docs in corpus(),
        pick in any::<prop::sample::Index>(),
        term in "(alpha|beta|gamma)",
    ) {
        let which = pick.index(docs.len());
        let cfg = AnalyzerConfig::default();
        let before = PostingsIndex::build(docs.iter().enumerate().map(|(i, t)| Document::new(format!("d{i}"), t.as_str())), cfg.clone()).unwrap();
        let mut grown = docs.clone();
        grown[which] = format!("{} {}", grown[which], term);
        let after = PostingsIndex::build(grown.iter().enumerate().map(|(i, t)| Document::new(format!("d{i}"), t.as_str())), cfg).unwrap();
        // only meaningful with length normalization off, so that the change
        // in average length cannot move other factors
        let p = Bm25Params { b: 0.0, ..Bm25Params::default() };
        let q = before.analyze(&term);
        let id = format!("d{which}");
        let score = |idx: &PostingsIndex| idx.search("q", &q, docs.len(), &p).unwrap().entries.iter().find(|e| e.doc_id == id).map_or(0.0, |e| e.score);
        let df_before = before.document_frequency(&q.iter().next().unwrap().to_string());
        let df_after = after.document_frequency(&q.iter().next().unwrap().to_string());
        if df_before == df_after {
            prop_assert!(score(&after) >= score(&before));
        }
    }

    #[test]
    fn top_k_is_a_prefix_of_top_k_plus_one(docs in corpus(), query in "(alpha|beta|gamma|omega)( (alpha|sigma|delta))*", k in 1usize..15) {
        let idx = PostingsIndex::build(docs.iter().enumerate().map(|(i, t)| Document::new(format!("d{i}"), t.as_str())), AnalyzerConfig::default()).unwrap();
        let p = Bm25Params::default();
        let q = idx.analyze(&query);
        let small = idx.search("q", &q, k, &p).unwrap();
        let big = idx.search("q", &q, k + 1, &p).unwrap();
        prop_assert_eq!(&big.entries[..small.entries.len()], &small.entries[..]);
        for w in big.entries.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].doc_id < w[1].doc_id));
        }
    }

    #[test]
    fn repeating_a_single_term_query_scales_by_qtf_factor(docs in corpus(), term in "(alpha|beta|gamma)", reps in 2usize..6) {
        let idx = PostingsIndex::build(docs.iter().enumerate().map(|(i, t)| Document::new(format!("d{i}"), t.as_str())), AnalyzerConfig::default()).unwrap();
        let p = Bm25Params::default();
        let once = idx.search("q", &idx.analyze(&term), 50, &p).unwrap();
        let many = idx.search("q", &idx.analyze(&vec![term.as_str(); reps].join(" ")), 50, &p).unwrap();
        let factor = (p.k3 + 1.0) * reps as f64 / (p.k3 + reps as f64);
        prop_assert_eq!(once.doc_ids().collect::<Vec<_>>(), many.doc_ids().collect::<Vec<_>>());
        for (a, b) in once.entries.iter().zip(&many.entries) {
            prop_assert!((b.score - a.score * factor).abs() < 1e-9);
        }
    }
}
