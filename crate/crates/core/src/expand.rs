//! Expanded-query composition and the per-query expansion pipelines.
//!
//! An expanded query is the original query repeated `query_repeats` times,
//! then the selected retrieved documents, then the selected generated
//! documents, all joined by single spaces. Baselines put their generated
//! completions after the repeated query; ensembled baselines additionally
//! append top-retrieved documents.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Query;
use crate::embed::Embedder;
use crate::error::{invalid, Error, Result};
use crate::index::{Bm25Params, PostingsIndex};
use crate::llm::{Gateway, GenerationRequest, DEFAULT_MAX_TOKENS};
use crate::prompts::{build_prompt, default_shots, FewShotExample, PromptKind, TEMPLATE_SLOTS};
use crate::verify::{mutual_verify, ContextualDocument, Source, VerificationResult, DEFAULT_MAX_EMBED_CHARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mill,
    WithoutPrf,
    WithoutMv,
    WithoutQqd,
    Baseline(PromptKind),
    Ensembled(PromptKind),
    NoExpansion,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mill => f.write_str("mill"),
            Method::WithoutPrf => f.write_str("wo-prf"),
            Method::WithoutMv => f.write_str("wo-mv"),
            Method::WithoutQqd => f.write_str("wo-qqd"),
            Method::Baseline(k) => write!(f, "{k}"),
            Method::Ensembled(k) => write!(f, "{k}*"),
            Method::NoExpansion => f.write_str("none"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `mill`, `wo-prf`, `wo-mv`, `wo-qqd` (also `w/o_prf` style),
    /// `none` / `no-expansion`, a prompt kind name for a baseline, and a
    /// prompt kind name followed by `*` for its ensembled variant.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace("w/o", "wo").replace('_', "-");
        match norm.as_str() {
            "mill" => Ok(Method::Mill),
            "wo-prf" => Ok(Method::WithoutPrf),
            "wo-mv" => Ok(Method::WithoutMv),
            "wo-qqd" => Ok(Method::WithoutQqd),
            "none" | "no-expansion" | "bm25" => Ok(Method::NoExpansion),
            other => match other.strip_suffix('*') {
                Some(kind) => Ok(Method::Ensembled(kind.parse()?)),
                None => Ok(Method::Baseline(other.parse()?)),
            },
        }
        .map_err(|_: Error| invalid(format!("unknown expansion method {s:?}")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    pub method: Method,
    pub n_candidates: usize,
    pub k_candidates: usize,
    pub n_select: usize,
    pub k_select: usize,
    pub query_repeats: usize,
    pub baseline_samples: usize,
    pub ensembled_prf: usize,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub bm25: Bm25Params,
    pub max_embed_chars: usize,
    /// Few-shot examples for the `-fs` baselines; built-in placeholders
    /// are used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<Vec<FewShotExample>>,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            method: Method::Mill,
            n_candidates: 5,
            k_candidates: 5,
            n_select: 3,
            k_select: 3,
            query_repeats: 5,
            baseline_samples: 3,
            ensembled_prf: 3,
            model: "gpt-3.5-turbo-instruct".to_string(),
            temperature: 0.7,
            top_p: 1.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            bm25: Bm25Params::default(),
            max_embed_chars: DEFAULT_MAX_EMBED_CHARS,
            shots: None,
        }
    }
}

impl ExpansionConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_candidates", self.n_candidates),
            ("k_candidates", self.k_candidates),
            ("n_select", self.n_select),
            ("k_select", self.k_select),
            ("query_repeats", self.query_repeats),
            ("baseline_samples", self.baseline_samples),
            ("max_embed_chars", self.max_embed_chars),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(invalid(format!("{name} must be at least 1")));
            }
        }
        if self.n_select > self.n_candidates {
            return Err(invalid("n_select must not exceed n_candidates"));
        }
        if self.k_select > self.k_candidates {
            return Err(invalid("k_select must not exceed k_candidates"));
        }
        if let Some(shots) = &self.shots {
            if shots.len() != TEMPLATE_SLOTS {
                return Err(invalid(format!("expected {TEMPLATE_SLOTS} few-shot examples, got {}", shots.len())));
            }
        }
        self.bm25.validate()?;
        self.request_template("").validate()
    }

    fn request_template(&self, prompt: &str) -> GenerationRequest {
        GenerationRequest {
            prompt: prompt.to_string(),
            model: self.model.clone(),
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            seed_tag: "s0".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentSource {
    Query,
    Prf,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub source: ComponentSource,
    /// Query id, retrieved doc id, or generation sample tag.
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub original_query: String,
    pub repeats: usize,
    pub prf_ids: Vec<String>,
    pub llm_tags: Vec<String>,
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub query_id: String,
    pub text: String,
    pub provenance: Provenance,
}

fn squash(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn doc_component(d: &ContextualDocument) -> Component {
    Component {
        source: match d.source {
            Source::Llm => ComponentSource::Llm,
            Source::Prf => ComponentSource::Prf,
        },
        id: d.id.clone(),
        text: squash(&d.text),
    }
}

fn assemble(q: &Query, repeats: usize, method: &str, docs: &[&ContextualDocument]) -> ExpandedQuery {
    let query_text = squash(&q.text);
    let mut components: Vec<Component> = (0..repeats)
        .map(|_| Component {
            source: ComponentSource::Query,
            id: q.query_id.clone(),
            text: query_text.clone(),
        })
        .collect();
    components.extend(docs.iter().map(|d| doc_component(d)));
    components.retain(|c| !c.text.is_empty());
    let text = components.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" ");
    let ids = |src: ComponentSource| {
        components
            .iter()
            .filter(|c| c.source == src)
            .map(|c| c.id.clone())
            .collect::<Vec<_>>()
    };
    ExpandedQuery {
        query_id: q.query_id.clone(),
        text,
        provenance: Provenance {
            method: method.to_string(),
            original_query: q.text.clone(),
            repeats,
            prf_ids: ids(ComponentSource::Prf),
            llm_tags: ids(ComponentSource::Llm),
            components,
        },
    }
}

/// Original query `repeats` times, then retrieved, then generated documents,
/// each list in the given order. Internal whitespace runs collapse to one
/// space so the result is a single line.
pub fn compose(q: &Query, prf_sel: &[ContextualDocument], llm_sel: &[ContextualDocument], repeats: usize) -> ExpandedQuery {
    let docs: Vec<&ContextualDocument> = prf_sel.iter().chain(llm_sel).collect();
    assemble(q, repeats.max(1), "mill", &docs)
}

/// Extension point for query expanders, including ones outside this crate
/// (e.g. classic PRF term-reweighting models).
pub trait QueryExpander: Send + Sync {
    fn name(&self) -> String;
    fn expand(&self, q: &Query) -> Result<ExpandedQuery>;
}

/// Everything an expansion produced, for diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionTrace {
    pub expanded: ExpandedQuery,
    pub generated: Vec<ContextualDocument>,
    pub retrieved: Vec<ContextualDocument>,
    pub verification: Option<VerificationResult>,
    pub fell_back_to_generation_only: bool,
}

pub struct Expander<'a> {
    pub index: &'a PostingsIndex,
    pub gateway: &'a Gateway,
    pub embedder: &'a Embedder,
    pub config: &'a ExpansionConfig,
}

impl<'a> Expander<'a> {
    pub fn new(index: &'a PostingsIndex, gateway: &'a Gateway, embedder: &'a Embedder, config: &'a ExpansionConfig) -> Self {
        Self {
            index,
            gateway,
            embedder,
            config,
        }
    }

    /// Top-`k` retrieved documents for the unexpanded query.
    pub fn retrieve_prf(&self, q: &Query, k: usize) -> Result<Vec<ContextualDocument>> {
        let tokens = self.index.analyze(&q.text);
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        let hits = self.index.search(&q.query_id, &tokens, k, &self.config.bm25)?;
        Ok(hits
            .entries
            .iter()
            .enumerate()
            .map(|(rank, hit)| {
                let text = self.index.doc_text(&hit.doc_id).unwrap_or_default();
                ContextualDocument::retrieved(hit.doc_id.clone(), text, rank)
            })
            .collect())
    }

    /// Draws `n` samples of `prompt` tagged `s0..s{n-1}`.
    pub fn generate(&self, prompt: &str, n: usize) -> Result<Vec<ContextualDocument>> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let tag = format!("s{i}");
                let req = self.config.request_template(prompt).with_seed_tag(tag.clone());
                let resp = self.gateway.generate(&req)?;
                Ok(ContextualDocument::generated(tag, resp.text, i))
            })
            .collect()
    }

    fn baseline_prompt(&self, kind: PromptKind, q: &Query) -> Result<String> {
        let shots = match (&self.config.shots, kind.needs_shots()) {
            (Some(s), true) => s.clone(),
            (None, true) => default_shots(kind),
            _ => Vec::new(),
        };
        let prf_docs: Vec<String> = if kind.needs_prf() {
            let docs = self.retrieve_prf(q, TEMPLATE_SLOTS)?;
            if docs.len() < TEMPLATE_SLOTS {
                return Err(invalid(format!(
                    "{kind} needs {TEMPLATE_SLOTS} retrieved documents, found {}",
                    docs.len()
                )));
            }
            docs.into_iter().map(|d| squash(&d.text)).collect()
        } else {
            Vec::new()
        };
        build_prompt(kind, &q.text, &shots, &prf_docs)
    }

    pub fn expand_traced(&self, q: &Query) -> Result<ExpansionTrace> {
        self.run(q).map_err(|e| e.for_query(&q.query_id))
    }

    fn run(&self, q: &Query) -> Result<ExpansionTrace> {
        let cfg = self.config;
        let method = cfg.method;
        let label = method.to_string();
        let mut trace = ExpansionTrace {
            expanded: assemble(q, 1, &label, &[]),
            generated: Vec::new(),
            retrieved: Vec::new(),
            verification: None,
            fell_back_to_generation_only: false,
        };

        match method {
            Method::NoExpansion => {}
            Method::Mill | Method::WithoutQqd => {
                let kind = if method == Method::Mill { PromptKind::Qqd } else { PromptKind::Query2Doc };
                let prompt = build_prompt(kind, &q.text, &[], &[])?;
                trace.generated = self.generate(&prompt, cfg.n_candidates)?;
                trace.retrieved = self.retrieve_prf(q, cfg.k_candidates)?;
                if trace.retrieved.is_empty() {
                    tracing::warn!(query_id = %q.query_id, "no retrieved documents; using generated documents only");
                    trace.fell_back_to_generation_only = true;
                    let llm: Vec<_> = trace.generated.iter().take(cfg.n_select).collect();
                    trace.expanded = assemble(q, cfg.query_repeats, &label, &llm);
                } else {
                    let v = mutual_verify(
                        &trace.generated,
                        &trace.retrieved,
                        cfg.n_select,
                        cfg.k_select,
                        self.embedder,
                        cfg.max_embed_chars,
                    )?;
                    let docs: Vec<_> = v.selected_prf.iter().chain(&v.selected_llm).collect();
                    trace.expanded = assemble(q, cfg.query_repeats, &label, &docs);
                    trace.verification = Some(v);
                }
            }
            Method::WithoutPrf => {
                let prompt = build_prompt(PromptKind::Qqd, &q.text, &[], &[])?;
                trace.generated = self.generate(&prompt, cfg.n_candidates)?;
                let llm: Vec<_> = trace.generated.iter().take(cfg.n_select).collect();
                trace.expanded = assemble(q, cfg.query_repeats, &label, &llm);
            }
            Method::WithoutMv => {
                let prompt = build_prompt(PromptKind::Qqd, &q.text, &[], &[])?;
                trace.generated = self.generate(&prompt, cfg.n_select)?;
                trace.retrieved = self.retrieve_prf(q, cfg.k_select)?;
                let docs: Vec<_> = trace.retrieved.iter().chain(&trace.generated).collect();
                trace.expanded = assemble(q, cfg.query_repeats, &label, &docs);
            }
            Method::Baseline(kind) | Method::Ensembled(kind) => {
                let prompt = self.baseline_prompt(kind, q)?;
                trace.generated = self.generate(&prompt, cfg.baseline_samples)?;
                if matches!(method, Method::Ensembled(_)) && cfg.ensembled_prf > 0 {
                    trace.retrieved = self.retrieve_prf(q, cfg.ensembled_prf)?;
                }
                let docs: Vec<_> = trace.generated.iter().chain(&trace.retrieved).collect();
                trace.expanded = assemble(q, cfg.query_repeats, &label, &docs);
            }
        }
        Ok(trace)
    }
}

impl QueryExpander for Expander<'_> {
    fn name(&self) -> String {
        self.config.method.to_string()
    }

    fn expand(&self, q: &Query) -> Result<ExpandedQuery> {
        self.expand_traced(q).map(|t| t.expanded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> Query {
        Query::new("q1", "cat")
    }

    #[test]
    fn compose_repeats_then_prf_then_llm() {
        let e = compose(
            &q(),
            &[ContextualDocument::retrieved("d1", "a", 0)],
            &[ContextualDocument::generated("s0", "b", 0)],
            5,
        );
        assert_eq!(e.text, "cat cat cat cat cat a b");
        assert_eq!(e.provenance.prf_ids, vec!["d1"]);
        assert_eq!(e.provenance.llm_tags, vec!["s0"]);
    }

    #[test]
    fn compose_identity() {
        assert_eq!(compose(&q(), &[], &[], 1).text, "cat");
    }

    #[test]
    fn compose_without_generated() {
        let e = compose(&q(), &[ContextualDocument::retrieved("d", "x y", 0)], &[], 2);
        assert_eq!(e.text, "cat cat x y");
        assert!(e.provenance.llm_tags.is_empty());
    }

    #[test]
    fn compose_flattens_whitespace() {
        let e = compose(&q(), &[], &[ContextualDocument::generated("s0", "1. A?\n\tB.", 0)], 1);
        assert_eq!(e.text, "cat 1. A? B.");
    }

    #[test]
    fn components_rebuild_text() {
        let e = compose(
            &q(),
            &[ContextualDocument::retrieved("d1", "alpha", 0), ContextualDocument::retrieved("d2", "beta", 1)],
            &[ContextualDocument::generated("s2", "gamma", 2)],
            3,
        );
        let rebuilt: Vec<_> = e.provenance.components.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(rebuilt.join(" "), e.text);
    }

    #[test]
    fn method_names() {
        for (s, m) in [
            ("mill", Method::Mill),
            ("w/o_PRF", Method::WithoutPrf),
            ("wo-mv", Method::WithoutMv),
            ("w/o_QQD", Method::WithoutQqd),
            ("none", Method::NoExpansion),
            ("query2doc", Method::Baseline(PromptKind::Query2Doc)),
            ("cot-prf*", Method::Ensembled(PromptKind::CotPrf)),
        ] {
            assert_eq!(s.parse::<Method>().unwrap(), m, "{s}");
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("rm3".parse::<Method>().is_err());
    }

    #[test]
    fn config_validation() {
        let ok = ExpansionConfig::default();
        ok.validate().unwrap();
        let bad = ExpansionConfig { n_select: 6, ..ExpansionConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ExpansionConfig { query_repeats: 0, ..ExpansionConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_fills_missing_fields_with_defaults() {
        let cfg: ExpansionConfig = serde_json::from_str(r#"{"method":"cot*","k_select":2}"#).unwrap();
        assert_eq!(cfg.method, Method::Ensembled(PromptKind::Cot));
        assert_eq!(cfg.k_select, 2);
        assert_eq!(cfg.n_candidates, 5);
    }
}
