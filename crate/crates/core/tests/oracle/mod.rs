//! Slow reference implementations, written independently of the library, and
//! random instance generators for comparing against it.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;

/// One query's raw run lines `(doc_id, score)` in file order.
pub type RawRun = BTreeMap<String, Vec<(String, f64)>>;
/// query -> doc -> grade
pub type RawQrels = BTreeMap<String, BTreeMap<String, u32>>;

pub const CUTOFFS: [usize; 3] = [10, 100, 1000];

/// Orders by score descending then doc id ascending and drops repeats.
pub fn ordered(lines: &[(String, f64)]) -> Vec<String> {
    let mut v = lines.to_vec();
    v.sort_by(|a, b| {
        if a.1 > b.1 {
            std::cmp::Ordering::Less
        } else if a.1 < b.1 {
            std::cmp::Ordering::Greater
        } else {
            a.0.cmp(&b.0)
        }
    });
    let mut seen = BTreeSet::new();
    v.into_iter().filter(|(d, _)| seen.insert(d.clone())).map(|(d, _)| d).collect()
}

fn grade(q: Option<&BTreeMap<String, u32>>, d: &str) -> u32 {
    q.and_then(|m| m.get(d)).copied().unwrap_or(0)
}

fn relevant_count(q: Option<&BTreeMap<String, u32>>, thr: u32) -> usize {
    q.map_or(0, |m| m.values().filter(|&&g| g >= thr.max(1)).count())
}

pub fn ndcg(ranked: &[String], q: Option<&BTreeMap<String, u32>>, n: usize) -> f64 {
    let mut dcg = 0.0;
    for (i, d) in ranked.iter().enumerate() {
        if i >= n {
            break;
        }
        dcg += grade(q, d) as f64 * std::f64::consts::LN_2 / ((i + 2) as f64).ln();
    }
    let mut grades: Vec<u32> = q.map_or(vec![], |m| m.values().copied().collect());
    grades.sort();
    grades.reverse();
    let mut idcg = 0.0;
    for (i, g) in grades.iter().enumerate() {
        if i >= n {
            break;
        }
        idcg += *g as f64 * std::f64::consts::LN_2 / ((i + 2) as f64).ln();
    }
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

/// Precision at every relevant position, recounted from scratch each time.
pub fn ap(ranked: &[String], q: Option<&BTreeMap<String, u32>>, n: usize, thr: u32) -> f64 {
    let r = relevant_count(q, thr);
    if r == 0 {
        return 0.0;
    }
    let top: Vec<&String> = ranked.iter().take(n).collect();
    let mut total = 0.0;
    for k in 1..=top.len() {
        if grade(q, top[k - 1]) >= thr.max(1) {
            let hits = top[..k].iter().filter(|d| grade(q, d) >= thr.max(1)).count();
            total += hits as f64 / k as f64;
        }
    }
    total / r as f64
}

pub fn recall(ranked: &[String], q: Option<&BTreeMap<String, u32>>, n: usize, thr: u32) -> f64 {
    let r = relevant_count(q, thr);
    if r == 0 {
        return 0.0;
    }
    let hits = ranked.iter().take(n).filter(|d| grade(q, d) >= thr.max(1)).count();
    hits as f64 / r as f64
}

pub fn mrr(ranked: &[String], q: Option<&BTreeMap<String, u32>>, n: usize, thr: u32) -> f64 {
    for (i, d) in ranked.iter().take(n).enumerate() {
        if grade(q, d) >= thr.max(1) {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

/// `"ndcg@10"`-style key -> mean over qrels queries.
pub fn evaluate(run: &RawRun, qrels: &RawQrels, thr: u32) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for (qid, judged) in qrels {
        let ranked = run.get(qid).map(|l| ordered(l)).unwrap_or_default();
        let q = Some(judged);
        for n in CUTOFFS {
            *sums.entry(format!("ndcg@{n}")).or_default() += ndcg(&ranked, q, n);
            *sums.entry(format!("map@{n}")).or_default() += ap(&ranked, q, n, thr);
            *sums.entry(format!("recall@{n}")).or_default() += recall(&ranked, q, n, thr);
            *sums.entry(format!("mrr@{n}")).or_default() += mrr(&ranked, q, n, thr);
        }
    }
    let count = qrels.len().max(1) as f64;
    sums.into_iter().map(|(k, v)| (k, v / count)).collect()
}

/// Random instance with at most 20 queries and 50 documents. Scores come
/// from a small set so ties occur; some run queries are unjudged and some
/// judged queries are absent from the run.
pub fn random_instance<R: Rng>(rng: &mut R) -> (RawRun, RawQrels) {
    let n_docs = rng.random_range(1..=50);
    let n_queries = rng.random_range(1..=20);
    let docs: Vec<String> = (0..n_docs).map(|i| format!("d{i}")).collect();
    let mut run = RawRun::new();
    let mut qrels = RawQrels::new();
    for qi in 0..n_queries {
        let qid = format!("q{qi}");
        if rng.random_bool(0.85) {
            let mut pool = docs.clone();
            pool.shuffle(rng);
            let take = rng.random_range(0..=n_docs);
            let lines = pool
                .into_iter()
                .take(take)
                .map(|d| (d, rng.random_range(0..12) as f64 * 0.25))
                .collect();
            run.insert(qid.clone(), lines);
        }
        if rng.random_bool(0.9) {
            let mut judged = BTreeMap::new();
            for d in &docs {
                if rng.random_bool(0.3) {
                    judged.insert(d.clone(), rng.random_range(0..=3));
                }
            }
            if judged.is_empty() {
                judged.insert(docs[0].clone(), rng.random_range(0..=3));
            }
            qrels.insert(qid, judged);
        }
    }
    if qrels.is_empty() {
        qrels.insert("q0".into(), BTreeMap::from([(docs[0].clone(), 1)]));
    }
    (run, qrels)
}

/// TREC text for a raw run, lines shuffled across queries. Ranks are
/// deliberately arbitrary.
pub fn run_text<R: Rng>(run: &RawRun, rng: &mut R) -> String {
    let mut lines = Vec::new();
    for (qid, entries) in run {
        for (i, (d, s)) in entries.iter().enumerate() {
            lines.push(format!("{qid} Q0 {d} {} {s} sys", i + 1));
        }
    }
    lines.shuffle(rng);
    lines.join("\n")
}

pub fn qrels_text(qrels: &RawQrels) -> String {
    let mut out = String::new();
    for (qid, m) in qrels {
        for (d, g) in m {
            out.push_str(&format!("{qid} 0 {d} {g}\n"));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Reciprocal verification
// ---------------------------------------------------------------------------

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub struct GridOracle {
    pub grid: Vec<Vec<f64>>,
    pub llm_scores: Vec<f64>,
    pub prf_scores: Vec<f64>,
}

pub fn grid_oracle(llm: &[Vec<f64>], prf: &[Vec<f64>]) -> GridOracle {
    let grid: Vec<Vec<f64>> = llm.iter().map(|l| prf.iter().map(|p| cosine(l, p)).collect()).collect();
    let llm_scores = grid.iter().map(|row| row.iter().sum()).collect();
    let prf_scores = (0..prf.len()).map(|j| grid.iter().map(|row| row[j]).sum()).collect();
    GridOracle {
        grid,
        llm_scores,
        prf_scores,
    }
}

/// Index `i` is kept when fewer than `m` entries beat it, where `j` beats
/// `i` on a higher score, or an equal score and a lower index.
pub fn select_indices(scores: &[f64], m: usize) -> BTreeSet<usize> {
    (0..scores.len())
        .filter(|&i| {
            let beaten_by = (0..scores.len())
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count();
            beaten_by < m
        })
        .collect()
}

pub fn random_vectors<R: Rng>(rng: &mut R, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            if v.iter().any(|x| x.abs() > 1e-3) {
                break v;
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Student t with 4 degrees of freedom
// ---------------------------------------------------------------------------

fn t4_density(x: f64) -> f64 {
    0.375 * (1.0 + x * x / 4.0).powf(-2.5)
}

/// Two-sided tail probability for df = 4, by composite Simpson integration
/// of the density over `[0, |t|]`.
pub fn t4_two_sided(t: f64) -> f64 {
    let steps = 20_000;
    let h = t.abs() / steps as f64;
    let mut acc = t4_density(0.0) + t4_density(t.abs());
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * t4_density(i as f64 * h);
    }
    let central = acc * h / 3.0;
    1.0 - 2.0 * central
}

pub fn t_statistic(diffs: &[f64]) -> f64 {
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let ss: f64 = diffs.iter().map(|d| (d - mean) * (d - mean)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    mean / (sd / n.sqrt())
}

pub fn to_hash(m: &BTreeMap<String, u32>) -> HashMap<String, u32> {
    m.iter().map(|(k, v)| (k.clone(), *v)).collect()
}
