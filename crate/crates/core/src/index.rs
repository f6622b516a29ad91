//! Immutable in-memory inverted index with BM25 ranking.
//!
//! The on-disk form is a single file: a text header
//! (`MILLIDX` magic line, then `version=… analyzer=… docs=…`) followed by a
//! bincode body. The analyzer fingerprint in the header lets readers refuse
//! an index whose tokenization does not match the query-time analyzer.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{analyze, AnalyzerConfig, Document, TokenStream};
use crate::error::{invalid, Error, Result};

pub const INDEX_MAGIC: &str = "MILLIDX";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub k3: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: 1.2,
            b: 0.75,
            k3: 8.0,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k1.is_finite()
            && self.k3.is_finite()
            && self.k1 >= 0.0
            && self.k3 >= 0.0
            && (0.0..=1.0).contains(&self.b);
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("BM25 parameters out of range: {self:?}")))
        }
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`; positive whenever `df <= N`.
pub fn idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Contribution of one query term to one document's score.
pub fn term_weight(idf: f64, tf: f64, doc_len: f64, avg_len: f64, qtf: f64, p: &Bm25Params) -> f64 {
    let norm = p.k1 * (1.0 - p.b + p.b * doc_len / avg_len);
    let doc_part = (p.k1 + 1.0) * tf / (norm + tf);
    let query_part = (p.k3 + 1.0) * qtf / (p.k3 + qtf);
    idf * doc_part * query_part
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Descending score, ties broken by ascending doc id.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<ScoredDoc>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredIndex {
    analyzer: AnalyzerConfig,
    doc_ids: Vec<String>,
    doc_texts: Vec<String>,
    doc_lengths: Vec<u32>,
    terms: Vec<(String, Vec<Posting>)>,
}

#[derive(Debug, Clone)]
pub struct PostingsIndex {
    analyzer: AnalyzerConfig,
    doc_ids: Vec<String>,
    doc_texts: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: HashMap<String, Vec<Posting>>,
    lookup: HashMap<String, u32>,
}

impl PostingsIndex {
    /// Builds the index. Document ordinals follow input order, so every
    /// postings list is sorted by ordinal.
    pub fn build<I>(docs: I, analyzer: AnalyzerConfig) -> Result<Self>
    where
        I: IntoIterator<Item = Document>,
    {
        let mut doc_ids = Vec::new();
        let mut doc_texts = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut lookup = HashMap::new();
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut tf: HashMap<String, u32> = HashMap::new();

        for doc in docs {
            let ord = u32::try_from(doc_ids.len())
                .map_err(|_| invalid("corpus exceeds u32::MAX documents"))?;
            if lookup.insert(doc.doc_id.clone(), ord).is_some() {
                return Err(Error::DuplicateDocId(doc.doc_id));
            }
            let tokens = analyze(&doc.text, &analyzer);
            tf.clear();
            for t in tokens.tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            let len: u32 = tf.values().sum();
            for (term, &count) in &tf {
                postings
                    .entry(term.clone())
                    .or_default()
                    .push(Posting { doc: ord, tf: count });
            }
            doc_ids.push(doc.doc_id);
            doc_texts.push(doc.text);
            doc_lengths.push(len);
        }
        if doc_ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self::assemble(analyzer, doc_ids, doc_texts, doc_lengths, postings, lookup))
    }

    fn assemble(
        analyzer: AnalyzerConfig,
        doc_ids: Vec<String>,
        doc_texts: Vec<String>,
        doc_lengths: Vec<u32>,
        postings: HashMap<String, Vec<Posting>>,
        lookup: HashMap<String, u32>,
    ) -> Self {
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Self {
            analyzer,
            doc_ids,
            doc_texts,
            doc_lengths,
            avg_doc_length,
            postings,
            lookup,
        }
    }

    pub fn analyzer(&self) -> &AnalyzerConfig {
        &self.analyzer
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.lookup.get(doc_id).map(|&o| self.doc_lengths[o as usize])
    }

    pub fn doc_text(&self, doc_id: &str) -> Option<&str> {
        self.lookup.get(doc_id).map(|&o| self.doc_texts[o as usize].as_str())
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_ids.iter().map(String::as_str)
    }

    /// Analyzes `text` with the index's own analyzer.
    pub fn analyze(&self, text: &str) -> TokenStream {
        analyze(text, &self.analyzer)
    }

    /// Top-`k` BM25 search. Only documents containing at least one query
    /// term are returned.
    pub fn search(&self, query_id: &str, query: &TokenStream, k: usize, params: &Bm25Params) -> Result<RankedList> {
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        params.validate()?;

        // unique terms in first-occurrence order, with query term frequency
        let mut qtf: Vec<(&str, u32)> = Vec::new();
        let mut slot_of: HashMap<&str, usize> = HashMap::new();
        for t in query.iter() {
            match slot_of.get(t) {
                Some(&i) => qtf[i].1 += 1,
                None => {
                    slot_of.insert(t, qtf.len());
                    qtf.push((t, 1));
                }
            }
        }

        let n = self.doc_count();
        let mut acc = vec![0.0f64; n];
        let mut touched = Vec::new();
        for (term, count) in qtf {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let w = idf(n, list.len());
            for p in list {
                let slot = &mut acc[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += term_weight(
                    w,
                    f64::from(p.tf),
                    f64::from(self.doc_lengths[p.doc as usize]),
                    self.avg_doc_length,
                    f64::from(count),
                    params,
                );
            }
        }

        let order = |a: &u32, b: &u32| {
            acc[*b as usize]
                .total_cmp(&acc[*a as usize])
                .then_with(|| self.doc_ids[*a as usize].cmp(&self.doc_ids[*b as usize]))
        };
        if touched.len() > k {
            touched.select_nth_unstable_by(k - 1, order);
            touched.truncate(k);
        }
        touched.sort_by(order);
        let hits = touched
            .into_iter()
            .map(|d| ScoredDoc {
                doc_id: self.doc_ids[d as usize].clone(),
                score: acc[d as usize],
            })
            .collect();
        Ok(RankedList {
            query_id: query_id.to_string(),
            entries: hits,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut terms: Vec<(String, Vec<Posting>)> =
            self.postings.iter().map(|(t, p)| (t.clone(), p.clone())).collect();
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let stored = StoredIndex {
            analyzer: self.analyzer,
            doc_ids: self.doc_ids.clone(),
            doc_texts: self.doc_texts.clone(),
            doc_lengths: self.doc_lengths.clone(),
            terms,
        };
        let header = format!(
            "{INDEX_MAGIC}\nversion={INDEX_VERSION} analyzer={:016x} docs={}\n",
            self.analyzer.fingerprint(),
            self.doc_count()
        );
        w.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
        bincode::serialize_into(&mut w, &stored).map_err(|e| Error::IndexFormat(e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = String::new();
        r.read_line(&mut magic).map_err(|e| Error::io(path, e))?;
        if magic.trim_end() != INDEX_MAGIC {
            return Err(Error::IndexFormat(format!("{}: not an index file", path.display())));
        }
        let mut header = String::new();
        r.read_line(&mut header).map_err(|e| Error::io(path, e))?;
        let fields: HashMap<&str, &str> = header
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let version: u32 = fields
            .get("version")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::IndexFormat("missing version".into()))?;
        if version != INDEX_VERSION {
            return Err(Error::IndexFormat(format!(
                "unsupported version {version} (expected {INDEX_VERSION})"
            )));
        }
        let fingerprint = fields
            .get("analyzer")
            .and_then(|v| u64::from_str_radix(v, 16).ok())
            .ok_or_else(|| Error::IndexFormat("missing analyzer fingerprint".into()))?;

        let mut body = Vec::new();
        r.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
        let stored: StoredIndex =
            bincode::deserialize(&body).map_err(|e| Error::IndexFormat(e.to_string()))?;
        if stored.analyzer.fingerprint() != fingerprint {
            return Err(Error::IndexFormat(
                "analyzer fingerprint mismatch: the index was built with a different analysis chain".into(),
            ));
        }
        let n = stored.doc_ids.len();
        if n == 0 || stored.doc_texts.len() != n || stored.doc_lengths.len() != n {
            return Err(Error::IndexFormat("inconsistent document tables".into()));
        }
        let lookup = stored
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Ok(Self::assemble(
            stored.analyzer,
            stored.doc_ids,
            stored.doc_texts,
            stored.doc_lengths,
            stored.terms.into_iter().collect(),
            lookup,
        ))
    }
}
