//! Prompt templates for query-query-document generation and the LLM-based
//! expansion baselines.
//!
//! Layouts for the baselines follow one convention: instruction line, a
//! blank line, a `Context:` block, a blank line, then `query: …` and the
//! completion cue. The zero-shot templates are single instructions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const QQD_SUBQUERY_INSTRUCTION: &str = "what sub-queries should be searched to answer the following query:";
pub const QQD_PASSAGE_INSTRUCTION: &str =
    "Please generate the sub-queries and write passages to answer these generated queries.";
pub const QUERY2TERM_INSTRUCTION: &str = "Write some keywords for the given query:";
pub const QUERY2DOC_INSTRUCTION: &str = "Write a passage answer the following query:";
pub const COT_INSTRUCTION: &str = "Answer the following query:";
pub const COT_RATIONALE: &str = "Give the rationale before answering.";

/// Number of few-shot examples and of PRF documents the templates take.
pub const TEMPLATE_SLOTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptKind {
    #[serde(rename = "qqd")]
    Qqd,
    #[serde(rename = "query2term")]
    Query2Term,
    #[serde(rename = "query2term-fs")]
    Query2TermFs,
    #[serde(rename = "query2term-prf")]
    Query2TermPrf,
    #[serde(rename = "query2doc")]
    Query2Doc,
    #[serde(rename = "query2doc-fs")]
    Query2DocFs,
    #[serde(rename = "query2doc-prf")]
    Query2DocPrf,
    #[serde(rename = "cot")]
    Cot,
    #[serde(rename = "cot-prf")]
    CotPrf,
}

impl PromptKind {
    pub const ALL: [PromptKind; 9] = [
        PromptKind::Qqd,
        PromptKind::Query2Term,
        PromptKind::Query2TermFs,
        PromptKind::Query2TermPrf,
        PromptKind::Query2Doc,
        PromptKind::Query2DocFs,
        PromptKind::Query2DocPrf,
        PromptKind::Cot,
        PromptKind::CotPrf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PromptKind::Qqd => "qqd",
            PromptKind::Query2Term => "query2term",
            PromptKind::Query2TermFs => "query2term-fs",
            PromptKind::Query2TermPrf => "query2term-prf",
            PromptKind::Query2Doc => "query2doc",
            PromptKind::Query2DocFs => "query2doc-fs",
            PromptKind::Query2DocPrf => "query2doc-prf",
            PromptKind::Cot => "cot",
            PromptKind::CotPrf => "cot-prf",
        }
    }

    pub fn needs_shots(&self) -> bool {
        matches!(self, PromptKind::Query2TermFs | PromptKind::Query2DocFs)
    }

    pub fn needs_prf(&self) -> bool {
        matches!(self, PromptKind::Query2TermPrf | PromptKind::Query2DocPrf | PromptKind::CotPrf)
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        PromptKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| invalid(format!("unknown prompt kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub query: String,
    /// Keywords or a passage, depending on the template.
    pub completion: String,
}

impl FewShotExample {
    pub fn new(query: impl Into<String>, completion: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            completion: completion.into(),
        }
    }
}

/// Placeholder keyword shots. These are generic examples written for this
/// crate; supply task-specific shots for real experiments.
pub fn default_keyword_shots() -> Vec<FewShotExample> {
    vec![
        FewShotExample::new("how do solar panels work", "photovoltaic cells, sunlight, electricity, semiconductor, inverter"),
        FewShotExample::new("symptoms of vitamin d deficiency", "fatigue, bone pain, muscle weakness, mood changes, sunlight"),
        FewShotExample::new("what is a mortgage", "home loan, lender, interest rate, down payment, property"),
    ]
}

/// Placeholder passage shots; same caveat as [`default_keyword_shots`].
pub fn default_passage_shots() -> Vec<FewShotExample> {
    vec![
        FewShotExample::new(
            "how do solar panels work",
            "Solar panels contain photovoltaic cells made of semiconductor material. When sunlight strikes the cells it frees electrons, producing direct current that an inverter converts to household alternating current.",
        ),
        FewShotExample::new(
            "symptoms of vitamin d deficiency",
            "Vitamin D deficiency often causes fatigue, bone pain and muscle weakness. Because the body makes vitamin D from sunlight, people who spend little time outdoors are at higher risk.",
        ),
        FewShotExample::new(
            "what is a mortgage",
            "A mortgage is a loan used to buy property. The borrower repays the lender over many years with interest, and the property serves as collateral until the loan is paid off.",
        ),
    ]
}

/// Shots matching the completion style of `kind`.
pub fn default_shots(kind: PromptKind) -> Vec<FewShotExample> {
    match kind {
        PromptKind::Query2TermFs => default_keyword_shots(),
        PromptKind::Query2DocFs => default_passage_shots(),
        _ => Vec::new(),
    }
}

fn check_slots<T>(kind: PromptKind, what: &str, items: &[T]) -> Result<()> {
    if items.len() != TEMPLATE_SLOTS {
        return Err(invalid(format!(
            "{kind} prompt requires exactly {TEMPLATE_SLOTS} {what}, got {}",
            items.len()
        )));
    }
    Ok(())
}

fn few_shot(instruction: &str, cue: &str, query: &str, shots: &[FewShotExample]) -> String {
    let mut s = format!("{instruction}\n\nContext:\n");
    for shot in shots {
        s.push_str(&format!("query: {}\n{cue} {}\n", shot.query, shot.completion));
    }
    s.push_str(&format!("\nquery: {query}\n{cue}"));
    s
}

fn with_prf(instruction: &str, trailer: &str, query: &str, docs: &[String]) -> String {
    let mut s = format!("{instruction}\n\nContext:\n");
    for d in docs {
        s.push_str(d);
        s.push('\n');
    }
    s.push_str(&format!("\nquery: {query}\n{trailer}"));
    s
}

/// Fills the template for `kind`. Few-shot kinds need exactly three shots
/// and PRF kinds exactly three documents; other kinds ignore both lists.
pub fn build_prompt(kind: PromptKind, query: &str, shots: &[FewShotExample], prf_docs: &[String]) -> Result<String> {
    if kind.needs_shots() {
        check_slots(kind, "few-shot examples", shots)?;
        if shots.iter().any(|s| s.query.trim().is_empty() || s.completion.trim().is_empty()) {
            return Err(invalid("few-shot examples must have non-empty query and completion"));
        }
    }
    if kind.needs_prf() {
        check_slots(kind, "PRF documents", prf_docs)?;
    }
    let prompt = match kind {
        PromptKind::Qqd => format!("{QQD_SUBQUERY_INSTRUCTION} {query}.\n{QQD_PASSAGE_INSTRUCTION}"),
        PromptKind::Query2Term => format!("{QUERY2TERM_INSTRUCTION} {query}"),
        PromptKind::Query2TermFs => few_shot(QUERY2TERM_INSTRUCTION, "keywords:", query, shots),
        PromptKind::Query2TermPrf => with_prf(QUERY2TERM_INSTRUCTION, "keywords:", query, prf_docs),
        PromptKind::Query2Doc => format!("{QUERY2DOC_INSTRUCTION} {query}"),
        PromptKind::Query2DocFs => few_shot(QUERY2DOC_INSTRUCTION, "passage:", query, shots),
        PromptKind::Query2DocPrf => with_prf(QUERY2DOC_INSTRUCTION, "passage:", query, prf_docs),
        PromptKind::Cot => format!("{COT_INSTRUCTION} {query}\n{COT_RATIONALE}"),
        PromptKind::CotPrf => with_prf(COT_INSTRUCTION, COT_RATIONALE, query, prf_docs),
    };
    Ok(prompt)
}

/// Positions of sequential item markers `1.`, `2.`, … that start the text
/// or follow whitespace and are followed by whitespace or the end.
fn item_markers(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut markers = Vec::new();
    let mut expected = 1u64;
    let mut i = 0;
    while i < bytes.len() {
        let at_boundary = i == 0 || bytes[i - 1].is_ascii_whitespace();
        if at_boundary && bytes[i].is_ascii_digit() {
            let start = i;
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            let followed = j + 1 >= bytes.len() || bytes[j + 1].is_ascii_whitespace();
            if j < bytes.len() && bytes[j] == b'.' && followed && text[start..j].parse() == Ok(expected) {
                markers.push((start, j + 1));
                expected += 1;
                i = j + 1;
                continue;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    markers
}

/// Splits a query-query-document completion into `(sub_query, passage)`
/// pairs for display. Within an item the first sentence ending in `?` is
/// the sub-query; an item without one yields `(item, "")`. Text with no
/// numbered items becomes a single pair with an empty passage.
pub fn parse_qqd(completion: &str) -> Vec<(String, String)> {
    let markers = item_markers(completion);
    if markers.is_empty() {
        return vec![(completion.trim().to_string(), String::new())];
    }
    markers
        .iter()
        .enumerate()
        .map(|(n, &(_, body_start))| {
            let end = markers.get(n + 1).map_or(completion.len(), |m| m.0);
            let item = completion[body_start..end].trim();
            match item.find('?') {
                Some(q) => (item[..=q].trim().to_string(), item[q + 1..].trim().to_string()),
                None => (item.to_string(), String::new()),
            }
        })
        .collect()
}
