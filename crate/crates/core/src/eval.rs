//! TREC-style evaluation: qrels and run I/O, rank metrics at cutoffs, macro
//! averaging and a paired two-sided t-test.
//!
//! Conventions:
//! - NDCG uses linear gain, `grade / log2(rank + 1)`, with the ideal ranking
//!   built from every judged grade of the query.
//! - AP, Recall and MRR treat `grade >= rel_threshold` as relevant. AP and
//!   Recall divide by the total number of relevant documents `R`, not by
//!   `min(R, n)`.
//! - Means are taken over every query in the qrels; a query the run does not
//!   cover scores 0.
//! - Run entries are re-ranked by descending score, ties by ascending doc id;
//!   the rank column is informational.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, RecordError, Result};
use crate::index::{rank_order, RankedList, ScoredDoc};

pub const DEFAULT_CUTOFFS: [usize; 3] = [10, 100, 1000];
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

// ---------------------------------------------------------------------------
// Qrels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QrelSet {
    judgments: BTreeMap<String, HashMap<String, u32>>,
}

impl QrelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a judgment; returns the previous grade if the pair repeats.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Option<u32> {
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(query_id)?.get(doc_id).copied()
    }

    pub fn query(&self, query_id: &str) -> Option<&HashMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn from_reader(path: &Path, reader: impl BufRead) -> Result<Self> {
        let mut set = QrelSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::record(
                    path,
                    RecordError::new(line_no, format!("expected 4 columns, found {}", fields.len())),
                ));
            }
            let grade: u32 = fields[3].parse().map_err(|_| {
                Error::record(
                    path,
                    RecordError::new(line_no, format!("grade must be a non-negative integer, got {:?}", fields[3])),
                )
            })?;
            if let Some(prev) = set.insert(fields[0], fields[2], grade) {
                tracing::warn!(
                    path = %path.display(),
                    line = line_no,
                    "duplicate judgment for ({}, {}): {prev} replaced by {grade}",
                    fields[0],
                    fields[2]
                );
            }
        }
        Ok(set)
    }
}

pub fn parse_qrels(path: &Path) -> Result<QrelSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    QrelSet::from_reader(path, BufReader::new(file))
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    rankings: BTreeMap<String, Vec<ScoredDoc>>,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one entry. Call [`Run::normalize`] after the last insertion.
    pub fn push(&mut self, query_id: &str, doc_id: &str, score: f64) {
        self.rankings
            .entry(query_id.to_string())
            .or_default()
            .push(ScoredDoc {
                doc_id: doc_id.to_string(),
                score,
            });
    }

    /// Sorts each ranking and drops repeated documents, keeping the
    /// best-scored occurrence.
    pub fn normalize(&mut self) {
        for (qid, list) in self.rankings.iter_mut() {
            list.sort_by(rank_order);
            let before = list.len();
            let mut seen = std::collections::HashSet::new();
            list.retain(|e| seen.insert(e.doc_id.clone()));
            if list.len() != before {
                tracing::warn!(query_id = %qid, dropped = before - list.len(), "duplicate documents in run");
            }
        }
    }

    pub fn from_ranked_lists<'a>(lists: impl IntoIterator<Item = &'a RankedList>) -> Self {
        let mut run = Run::new();
        for l in lists {
            let entry = run.rankings.entry(l.query_id.clone()).or_default();
            entry.extend(l.entries.iter().cloned());
        }
        run.normalize();
        run
    }

    pub fn ranking(&self, query_id: &str) -> &[ScoredDoc] {
        self.rankings.get(query_id).map_or(&[], Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    pub fn from_reader(path: &Path, reader: impl BufRead) -> Result<Self> {
        let mut run = Run::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: String| Error::record(path, RecordError::new(line_no, msg));
            if f.len() != 6 {
                return Err(bad(format!("expected 6 columns, found {}", f.len())));
            }
            f[3].parse::<u64>()
                .map_err(|_| bad(format!("rank must be a positive integer, got {:?}", f[3])))?;
            let score: f64 = f[4]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| bad(format!("score must be a finite number, got {:?}", f[4])))?;
            run.push(f[0], f[2], score);
        }
        run.normalize();
        Ok(run)
    }
}

pub fn parse_run(path: &Path) -> Result<Run> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Run::from_reader(path, BufReader::new(file))
}

/// Writes TREC 6-column lines `qid Q0 docid rank score tag`. Scores use the
/// shortest representation that parses back to the same value.
pub fn write_run<W: Write>(mut w: W, list: &RankedList, tag: &str) -> std::io::Result<()> {
    for (i, e) in list.entries.iter().enumerate() {
        writeln!(w, "{} Q0 {} {} {} {}", list.query_id, e.doc_id, i + 1, e.score, tag)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Ndcg,
    Ap,
    Recall,
    Mrr,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Ndcg, Metric::Ap, Metric::Recall, Metric::Mrr];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Ndcg => "ndcg",
            Metric::Ap => "map",
            Metric::Recall => "recall",
            Metric::Mrr => "mrr",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ndcg" => Ok(Metric::Ndcg),
            "map" | "ap" => Ok(Metric::Ap),
            "recall" => Ok(Metric::Recall),
            "mrr" | "rr" => Ok(Metric::Mrr),
            other => Err(invalid(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetricKey {
    pub metric: Metric,
    pub cutoff: usize,
}

impl fmt::Display for MetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.metric, self.cutoff)
    }
}

impl FromStr for MetricKey {
    type Err = Error;

    /// Parses `ndcg@10` style keys.
    fn from_str(s: &str) -> Result<Self> {
        let (m, c) = s
            .split_once('@')
            .ok_or_else(|| invalid(format!("expected metric@cutoff, got {s:?}")))?;
        let cutoff = c
            .parse()
            .ok()
            .filter(|&c: &usize| c >= 1)
            .ok_or_else(|| invalid(format!("bad cutoff in {s:?}")))?;
        Ok(MetricKey {
            metric: m.parse()?,
            cutoff,
        })
    }
}

impl Serialize for MetricKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Judgments of a single query, with the binary relevance threshold.
#[derive(Debug, Clone, Copy)]
pub struct Judged<'a> {
    pub grades: Option<&'a HashMap<String, u32>>,
    pub rel_threshold: u32,
}

impl<'a> Judged<'a> {
    pub fn new(qrels: &'a QrelSet, query_id: &str, rel_threshold: u32) -> Self {
        Self {
            grades: qrels.query(query_id),
            rel_threshold,
        }
    }

    fn grade(&self, doc_id: &str) -> u32 {
        self.grades.and_then(|g| g.get(doc_id)).copied().unwrap_or(0)
    }

    fn relevant(&self, doc_id: &str) -> bool {
        self.rel_threshold.max(1) <= self.grade(doc_id)
    }

    fn relevant_total(&self) -> usize {
        let t = self.rel_threshold.max(1);
        self.grades.map_or(0, |g| g.values().filter(|&&v| v >= t).count())
    }
}

fn log2_discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

pub fn ndcg_at(ranking: &[ScoredDoc], judged: &Judged<'_>, n: usize) -> f64 {
    let dcg: f64 = ranking
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, e)| f64::from(judged.grade(&e.doc_id)) / log2_discount(i + 1))
        .sum();
    let mut ideal: Vec<u32> = judged
        .grades
        .map(|g| g.values().copied().filter(|&v| v > 0).collect())
        .unwrap_or_default();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, &g)| f64::from(g) / log2_discount(i + 1))
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn ap_at(ranking: &[ScoredDoc], judged: &Judged<'_>, n: usize) -> f64 {
    let r = judged.relevant_total();
    if r == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, e) in ranking.iter().take(n).enumerate() {
        if judged.relevant(&e.doc_id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / r as f64
}

pub fn recall_at(ranking: &[ScoredDoc], judged: &Judged<'_>, n: usize) -> f64 {
    let r = judged.relevant_total();
    if r == 0 {
        return 0.0;
    }
    let found = ranking.iter().take(n).filter(|e| judged.relevant(&e.doc_id)).count();
    found as f64 / r as f64
}

pub fn mrr_at(ranking: &[ScoredDoc], judged: &Judged<'_>, n: usize) -> f64 {
    ranking
        .iter()
        .take(n)
        .position(|e| judged.relevant(&e.doc_id))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

pub fn metric_at(metric: Metric, ranking: &[ScoredDoc], judged: &Judged<'_>, n: usize) -> f64 {
    match metric {
        Metric::Ndcg => ndcg_at(ranking, judged, n),
        Metric::Ap => ap_at(ranking, judged, n),
        Metric::Recall => recall_at(ranking, judged, n),
        Metric::Mrr => mrr_at(ranking, judged, n),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub keys: Vec<MetricKey>,
    pub per_query: BTreeMap<String, BTreeMap<MetricKey, f64>>,
    pub mean: BTreeMap<MetricKey, f64>,
}

impl MetricReport {
    pub fn value(&self, query_id: &str, key: MetricKey) -> Option<f64> {
        self.per_query.get(query_id)?.get(&key).copied()
    }

    /// Values of `key` for every query, in query id order.
    pub fn column(&self, key: MetricKey) -> Vec<(String, f64)> {
        self.per_query
            .iter()
            .map(|(q, m)| (q.clone(), m.get(&key).copied().unwrap_or(0.0)))
            .collect()
    }

    /// `metric@cutoff<TAB>qid<TAB>value` rows, per query then `all`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (qid, values) in &self.per_query {
            for key in &self.keys {
                writeln!(w, "{key}\t{qid}\t{:.6}", values[key])?;
            }
        }
        for key in &self.keys {
            writeln!(w, "{key}\tall\t{:.6}", self.mean[key])?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "per_query": self.per_query,
            "mean": self.mean,
        })
    }
}

pub fn metric_keys(cutoffs: &[usize]) -> Vec<MetricKey> {
    Metric::ALL
        .iter()
        .flat_map(|&metric| cutoffs.iter().map(move |&cutoff| MetricKey { metric, cutoff }))
        .collect()
}

pub fn evaluate(run: &Run, qrels: &QrelSet, cutoffs: &[usize], rel_threshold: u32) -> Result<MetricReport> {
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(invalid("cutoffs must be a non-empty list of positive integers"));
    }
    let keys = metric_keys(cutoffs);
    let mut per_query = BTreeMap::new();
    for qid in qrels.query_ids() {
        let judged = Judged::new(qrels, qid, rel_threshold);
        let ranking = run.ranking(qid);
        let row: BTreeMap<MetricKey, f64> = keys
            .iter()
            .map(|&k| (k, metric_at(k.metric, ranking, &judged, k.cutoff)))
            .collect();
        per_query.insert(qid.to_string(), row);
    }
    let count = per_query.len().max(1) as f64;
    let mean = keys
        .iter()
        .map(|&k| (k, per_query.values().map(|r: &BTreeMap<MetricKey, f64>| r[&k]).sum::<f64>() / count))
        .collect();
    Ok(MetricReport {
        keys,
        per_query,
        mean,
    })
}

pub fn evaluate_files(run_path: &Path, qrels_path: &Path, cutoffs: &[usize], rel_threshold: u32) -> Result<MetricReport> {
    let qrels = parse_qrels(qrels_path)?;
    let run = parse_run(run_path)?;
    evaluate(&run, &qrels, cutoffs, rel_threshold)
}

// ---------------------------------------------------------------------------
// Significance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
}

/// Two-sided paired t-test on `a[i] - b[i]`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(invalid(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(invalid("paired t-test needs at least two pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(Error::DegenerateVariance {
            identical: diffs.iter().all(|&d| d == 0.0),
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| invalid(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p, df, mean_diff: mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Significant,
    NotSignificant,
    Identical,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Significant => "significant",
            Verdict::NotSignificant => "not significant",
            Verdict::Identical => "identical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub key: MetricKey,
    pub mean_a: f64,
    pub mean_b: f64,
    pub test: Option<TTest>,
    pub verdict: Verdict,
}

/// Paired comparison of two runs on one metric over the qrels queries.
/// Both runs must cover the same set of queries.
pub fn compare_runs(run_a: &Run, run_b: &Run, qrels: &QrelSet, key: MetricKey, rel_threshold: u32) -> Result<Comparison> {
    let qa: BTreeSet<&str> = run_a.query_ids().collect();
    let qb: BTreeSet<&str> = run_b.query_ids().collect();
    if qa != qb {
        return Err(Error::QuerySetMismatch {
            missing_in_a: qb.difference(&qa).map(|s| s.to_string()).collect(),
            missing_in_b: qa.difference(&qb).map(|s| s.to_string()).collect(),
        });
    }
    let ra = evaluate(run_a, qrels, &[key.cutoff], rel_threshold)?;
    let rb = evaluate(run_b, qrels, &[key.cutoff], rel_threshold)?;
    let a: Vec<f64> = ra.column(key).into_iter().map(|(_, v)| v).collect();
    let b: Vec<f64> = rb.column(key).into_iter().map(|(_, v)| v).collect();
    let (test, verdict) = match paired_ttest(&a, &b) {
        Ok(t) => {
            let v = if t.p < SIGNIFICANCE_LEVEL {
                Verdict::Significant
            } else {
                Verdict::NotSignificant
            };
            (Some(t), v)
        }
        Err(Error::DegenerateVariance { identical: true }) => (None, Verdict::Identical),
        Err(Error::DegenerateVariance { identical: false }) => {
            // constant non-zero difference on every query
            (None, Verdict::Significant)
        }
        Err(e) => return Err(e),
    };
    Ok(Comparison {
        key,
        mean_a: ra.mean[&key],
        mean_b: rb.mean[&key],
        test,
        verdict,
    })
}
