//! Corpus, query and text-analysis primitives.
//!
//! Documents come from BEIR-style JSONL (`_id`, `title`, `text`) or from
//! two-column TSV (`doc_id<TAB>text`). Queries use `qid<TAB>text` or JSONL
//! with `_id` and `text`. Readers yield one `Result` per line so callers can
//! decide whether a bad record aborts the load or is skipped.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, RecordError, Result};
use crate::hash::fnv1a64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            title: String::new(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

impl Query {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputFormat {
    Jsonl,
    Tsv,
}

impl InputFormat {
    /// `.jsonl` / `.json` are JSONL, everything else is TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => InputFormat::Jsonl,
            _ => InputFormat::Tsv,
        }
    }
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(InputFormat::Jsonl),
            "tsv" => Ok(InputFormat::Tsv),
            other => Err(Error::InvalidArgument(format!("unknown format {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Analysis chain
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub lowercase: bool,
    pub stopwords: bool,
    pub stemming: bool,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            stopwords: true,
            stemming: true,
        }
    }
}

impl AnalyzerConfig {
    pub fn plain() -> Self {
        Self {
            lowercase: true,
            stopwords: false,
            stemming: false,
        }
    }

    /// Stable digest of everything that influences tokenization, including
    /// the shipped stopword list. Stored in index headers.
    pub fn fingerprint(&self) -> u64 {
        let desc = format!(
            "lowercase={};stopwords={};stemming=porter:{};list={:016x}",
            self.lowercase,
            self.stopwords,
            self.stemming,
            fnv1a64(STOPWORDS_EN.as_bytes())
        );
        fnv1a64(desc.as_bytes())
    }
}

const STOPWORDS_EN: &str = include_str!("stopwords_en.txt");

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_EN
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .collect()
    })
}

/// Normalized terms produced by [`analyze`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<String>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

impl<'a> IntoIterator for &'a TokenStream {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.tokens.iter()
    }
}

/// Lowercase, split on non-alphanumerics, drop stopwords, Porter-stem.
pub fn analyze(text: &str, config: &AnalyzerConfig) -> TokenStream {
    let stop = config.stopwords.then(stopwords);
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|raw| !raw.is_empty())
        .filter_map(|raw| {
            let term = if config.lowercase {
                raw.to_lowercase()
            } else {
                raw.to_string()
            };
            if let Some(stop) = stop {
                if stop.contains(term.as_str()) {
                    return None;
                }
            }
            // the stemmer is defined over ASCII letters only
            let term = if config.stemming && term.bytes().all(|b| b.is_ascii_lowercase()) {
                porter_stemmer::stem(&term)
            } else {
                term
            };
            (!term.is_empty()).then_some(term)
        })
        .collect();
    TokenStream { tokens }
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Line reader shared by the document and query parsers. Blank lines are
/// skipped and do not count as records; line numbers are 1-based.
struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R) -> Self {
        Self {
            inner: reader.lines(),
            line_no: 0,
        }
    }

    fn next_line(&mut self) -> Option<(usize, std::result::Result<String, RecordError>)> {
        loop {
            let line = self.inner.next()?;
            self.line_no += 1;
            match line {
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => return Some((self.line_no, Ok(l))),
                Err(e) => return Some((self.line_no, Err(RecordError::new(self.line_no, e.to_string())))),
            }
        }
    }
}

fn json_id(obj: &serde_json::Map<String, Value>, line: usize) -> std::result::Result<String, RecordError> {
    match obj.get("_id") {
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(RecordError::new(line, "`_id` must be a non-empty string")),
        None => Err(RecordError::new(line, "missing `_id`")),
    }
}

fn json_str<'a>(obj: &'a serde_json::Map<String, Value>, field: &str) -> Option<&'a str> {
    obj.get(field).and_then(Value::as_str)
}

fn parse_jsonl_document(line: &str, line_no: usize) -> std::result::Result<Document, RecordError> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| RecordError::new(line_no, format!("malformed JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| RecordError::new(line_no, "expected a JSON object"))?;
    let doc_id = json_id(obj, line_no)?;
    let title = json_str(obj, "title").unwrap_or("").to_string();
    let body = json_str(obj, "text")
        .ok_or_else(|| RecordError::new(line_no, "missing `text`"))?;
    let text = if title.is_empty() {
        body.to_string()
    } else {
        format!("{title} {body}")
    };
    if text.trim().is_empty() {
        return Err(RecordError::new(line_no, "empty text"));
    }
    Ok(Document { doc_id, title, text })
}

fn parse_tsv_pair(line: &str, line_no: usize) -> std::result::Result<(String, String), RecordError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 2 {
        return Err(RecordError::new(
            line_no,
            format!("expected 2 tab-separated columns, found {}", fields.len()),
        ));
    }
    let (id, text) = (fields[0].trim(), fields[1].trim_end_matches('\r'));
    if id.is_empty() {
        return Err(RecordError::new(line_no, "empty id"));
    }
    if text.trim().is_empty() {
        return Err(RecordError::new(line_no, "empty text"));
    }
    Ok((id.to_string(), text.to_string()))
}

/// Streaming document reader over any buffered source.
pub struct DocumentReader<R> {
    lines: Lines<R>,
    format: InputFormat,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R, format: InputFormat) -> Self {
        Self {
            lines: Lines::new(reader),
            format,
        }
    }
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = std::result::Result<Document, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line_no, line) = self.lines.next_line()?;
        Some(line.and_then(|l| match self.format {
            InputFormat::Jsonl => parse_jsonl_document(&l, line_no),
            InputFormat::Tsv => parse_tsv_pair(&l, line_no).map(|(id, text)| Document::new(id, text)),
        }))
    }
}

pub fn ingest_jsonl(path: &Path) -> Result<DocumentReader<BufReader<File>>> {
    Ok(DocumentReader::new(open(path)?, InputFormat::Jsonl))
}

pub fn ingest_tsv(path: &Path) -> Result<DocumentReader<BufReader<File>>> {
    Ok(DocumentReader::new(open(path)?, InputFormat::Tsv))
}

/// Drains a record stream. In strict mode the first bad record aborts;
/// otherwise bad records are logged and skipped.
pub fn collect_records<T>(
    path: &Path,
    records: impl Iterator<Item = std::result::Result<T, RecordError>>,
    strict: bool,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut skipped = 0usize;
    for rec in records {
        match rec {
            Ok(v) => out.push(v),
            Err(e) if strict => return Err(Error::record(path, e)),
            Err(e) => {
                skipped += 1;
                tracing::warn!(path = %path.display(), "skipping record: {e}");
            }
        }
    }
    if skipped > 0 {
        tracing::warn!(path = %path.display(), skipped, "skipped malformed records");
    }
    Ok(out)
}

pub fn read_documents(path: &Path, format: InputFormat, strict: bool) -> Result<Vec<Document>> {
    let reader = DocumentReader::new(open(path)?, format);
    collect_records(path, reader, strict)
}

/// Query reader; TSV `qid<TAB>text` or JSONL with `_id` and `text`.
pub struct QueryReader<R> {
    lines: Lines<R>,
    format: InputFormat,
}

impl<R: BufRead> QueryReader<R> {
    pub fn new(reader: R, format: InputFormat) -> Self {
        Self {
            lines: Lines::new(reader),
            format,
        }
    }
}

impl<R: BufRead> Iterator for QueryReader<R> {
    type Item = std::result::Result<Query, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line_no, line) = self.lines.next_line()?;
        Some(line.and_then(|l| match self.format {
            InputFormat::Tsv => parse_tsv_pair(&l, line_no).map(|(id, text)| Query::new(id, text)),
            InputFormat::Jsonl => {
                let value: Value = serde_json::from_str(&l)
                    .map_err(|e| RecordError::new(line_no, format!("malformed JSON: {e}")))?;
                let obj = value
                    .as_object()
                    .ok_or_else(|| RecordError::new(line_no, "expected a JSON object"))?;
                let id = json_id(obj, line_no)?;
                match json_str(obj, "text") {
                    Some(t) if !t.trim().is_empty() => Ok(Query::new(id, t)),
                    _ => Err(RecordError::new(line_no, "missing or empty `text`")),
                }
            }
        }))
    }
}

/// Reads a query set, rejecting duplicate query ids.
pub fn read_queries(path: &Path, format: InputFormat, strict: bool) -> Result<Vec<Query>> {
    let reader = QueryReader::new(open(path)?, format);
    let queries = collect_records(path, reader, strict)?;
    let mut seen = HashSet::new();
    for q in &queries {
        if !seen.insert(q.query_id.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "{}: duplicate query id {:?}",
                path.display(),
                q.query_id
            )));
        }
    }
    Ok(queries)
}
