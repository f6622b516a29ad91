//! Mutual verification between generated and retrieved contextual documents.
//!
//! Every generated document is scored by the sum of its cosine similarities
//! to all retrieved documents, and every retrieved document by the sum of its
//! similarities to all generated ones. The top-scored documents of each side
//! are kept.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{cosine_sim, Embedder, EmbeddingVector};
use crate::error::{invalid, Result};

pub const DEFAULT_MAX_EMBED_CHARS: usize = 8000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Llm,
    Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualDocument {
    /// Sample tag for generated documents, doc id for retrieved ones.
    pub id: String,
    pub text: String,
    pub source: Source,
    /// Sample index for generated documents, 0-based retrieval rank for
    /// retrieved ones.
    pub origin_rank: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub embedding: Option<EmbeddingVector>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
}

impl ContextualDocument {
    pub fn generated(tag: impl Into<String>, text: impl Into<String>, sample: usize) -> Self {
        Self {
            id: tag.into(),
            text: text.into(),
            source: Source::Llm,
            origin_rank: sample,
            embedding: None,
            score: None,
        }
    }

    pub fn retrieved(doc_id: impl Into<String>, text: impl Into<String>, rank: usize) -> Self {
        Self {
            id: doc_id.into(),
            text: text.into(),
            source: Source::Prf,
            origin_rank: rank,
            embedding: None,
            score: None,
        }
    }

    pub fn with_embedding(mut self, v: EmbeddingVector) -> Self {
        self.embedding = Some(v);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub selected_llm: Vec<ContextualDocument>,
    pub selected_prf: Vec<ContextualDocument>,
    /// Candidates in input order, each with its score attached.
    pub llm_candidates: Vec<ContextualDocument>,
    pub prf_candidates: Vec<ContextualDocument>,
    /// `grid[n][k]` = similarity of generated document n and retrieved
    /// document k.
    pub grid: Vec<Vec<f64>>,
}

impl VerificationResult {
    pub fn llm_scores(&self) -> Vec<f64> {
        self.llm_candidates.iter().filter_map(|d| d.score).collect()
    }

    pub fn prf_scores(&self) -> Vec<f64> {
        self.prf_candidates.iter().filter_map(|d| d.score).collect()
    }

    pub fn filtered_llm(&self) -> Vec<&ContextualDocument> {
        filtered(&self.llm_candidates, &self.selected_llm)
    }

    pub fn filtered_prf(&self) -> Vec<&ContextualDocument> {
        filtered(&self.prf_candidates, &self.selected_prf)
    }
}

fn filtered<'a>(all: &'a [ContextualDocument], kept: &[ContextualDocument]) -> Vec<&'a ContextualDocument> {
    all.iter()
        .filter(|c| !kept.iter().any(|k| k.origin_rank == c.origin_rank))
        .collect()
}

/// `scores[i] = Σ_j sim(rows[i], others[j])`.
fn similarity_sums(rows: &[EmbeddingVector], others: &[EmbeddingVector]) -> Result<Vec<f64>> {
    if others.is_empty() {
        return Err(invalid("mutual verification needs at least one document on each side"));
    }
    rows.iter()
        .map(|r| others.iter().map(|o| cosine_sim(r, o)).sum::<Result<f64>>())
        .collect()
}

/// Score of each generated document against all retrieved documents.
pub fn score_generated(llm_vecs: &[EmbeddingVector], prf_vecs: &[EmbeddingVector]) -> Result<Vec<f64>> {
    similarity_sums(llm_vecs, prf_vecs)
}

/// Score of each retrieved document against all generated documents.
pub fn score_prf(prf_vecs: &[EmbeddingVector], llm_vecs: &[EmbeddingVector]) -> Result<Vec<f64>> {
    similarity_sums(prf_vecs, llm_vecs)
}

fn by_score_then_rank(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// The `min(m, len)` highest-scored documents, best first; equal scores keep
/// the lower `origin_rank` first. Returned documents carry their score.
pub fn select_top(docs: &[ContextualDocument], scores: &[f64], m: usize) -> Result<Vec<ContextualDocument>> {
    if docs.len() != scores.len() {
        return Err(invalid(format!("{} documents but {} scores", docs.len(), scores.len())));
    }
    if m == 0 {
        return Err(invalid("selection size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&i, &j| by_score_then_rank(&(scores[i], docs[i].origin_rank), &(scores[j], docs[j].origin_rank)));
    Ok(order
        .into_iter()
        .take(m)
        .map(|i| {
            let mut d = docs[i].clone();
            d.score = Some(scores[i]);
            d
        })
        .collect())
}

/// Keeps the leading `max_chars` characters.
pub fn truncate_chars(text: &str, max_chars: usize) -> &str {
    match text.char_indices().nth(max_chars) {
        Some((byte, _)) => &text[..byte],
        None => text,
    }
}

fn ensure_embedded(docs: &[ContextualDocument], embedder: &Embedder, max_chars: usize) -> Result<Vec<EmbeddingVector>> {
    docs.par_iter()
        .map(|d| match &d.embedding {
            Some(v) => Ok(v.clone()),
            None => embedder.embed(truncate_chars(&d.text, max_chars)),
        })
        .collect()
}

/// Embeds any candidate without a vector, scores both sides against each
/// other and keeps the top `n_select` generated and `k_select` retrieved
/// documents.
pub fn mutual_verify(
    llm_docs: &[ContextualDocument],
    prf_docs: &[ContextualDocument],
    n_select: usize,
    k_select: usize,
    embedder: &Embedder,
    max_chars: usize,
) -> Result<VerificationResult> {
    if llm_docs.is_empty() || prf_docs.is_empty() {
        return Err(invalid("mutual verification needs at least one document on each side"));
    }
    if n_select == 0 || k_select == 0 {
        return Err(invalid("selection sizes must be at least 1"));
    }
    let llm_vecs = ensure_embedded(llm_docs, embedder, max_chars)?;
    let prf_vecs = ensure_embedded(prf_docs, embedder, max_chars)?;

    let llm_scores = score_generated(&llm_vecs, &prf_vecs)?;
    let prf_scores = score_prf(&prf_vecs, &llm_vecs)?;
    let grid = llm_vecs
        .iter()
        .map(|l| prf_vecs.iter().map(|p| cosine_sim(l, p)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let attach = |docs: &[ContextualDocument], vecs: Vec<EmbeddingVector>, scores: &[f64]| {
        docs.iter()
            .zip(vecs)
            .zip(scores)
            .map(|((d, v), &s)| {
                let mut d = d.clone();
                d.embedding = Some(v);
                d.score = Some(s);
                d
            })
            .collect::<Vec<_>>()
    };
    let llm_candidates = attach(llm_docs, llm_vecs, &llm_scores);
    let prf_candidates = attach(prf_docs, prf_vecs, &prf_scores);

    Ok(VerificationResult {
        selected_llm: select_top(&llm_candidates, &llm_scores, n_select)?,
        selected_prf: select_top(&prf_candidates, &prf_scores, k_select)?,
        llm_candidates,
        prf_candidates,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector(xs.to_vec())
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn generated_scores() {
        let prf = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        assert!(close(&score_generated(&[v(&[1.0, 0.0])], &prf).unwrap(), &[1.0]));
        assert!(close(&score_generated(&[v(&[0.0, 1.0])], &prf).unwrap(), &[1.0]));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(&score_generated(&[v(&[h, h])], &prf).unwrap(), &[std::f64::consts::SQRT_2]));
    }

    #[test]
    fn prf_scores() {
        assert!(close(&score_prf(&[v(&[1.0, 0.0])], &[v(&[1.0, 0.0])]).unwrap(), &[1.0]));
        assert!(close(
            &score_prf(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], &[v(&[1.0, 0.0])]).unwrap(),
            &[1.0, 0.0]
        ));
        assert!(close(&score_prf(&[v(&[3.0, 4.0])], &[v(&[3.0, 4.0])]).unwrap(), &[1.0]));
    }

    #[test]
    fn empty_other_side_is_an_error() {
        assert!(score_generated(&[v(&[1.0])], &[]).is_err());
    }

    fn docs(n: usize) -> Vec<ContextualDocument> {
        (0..n).map(|i| ContextualDocument::generated(format!("s{i}"), "t", i)).collect()
    }

    fn ranks(sel: &[ContextualDocument]) -> Vec<usize> {
        sel.iter().map(|d| d.origin_rank).collect()
    }

    #[test]
    fn select_orders_by_score() {
        assert_eq!(ranks(&select_top(&docs(3), &[0.9, 0.1, 0.5], 2).unwrap()), vec![0, 2]);
    }

    #[test]
    fn select_breaks_ties_by_rank() {
        assert_eq!(ranks(&select_top(&docs(2), &[0.5, 0.5], 1).unwrap()), vec![0]);
    }

    #[test]
    fn select_saturates() {
        let sel = select_top(&docs(3), &[0.1, 0.3, 0.2], 10).unwrap();
        assert_eq!(ranks(&sel), vec![1, 2, 0]);
        assert_eq!(sel[0].score, Some(0.3));
    }

    #[test]
    fn select_length_mismatch() {
        assert!(select_top(&docs(2), &[1.0], 1).is_err());
        assert!(select_top(&docs(1), &[1.0], 0).is_err());
    }

    #[test]
    fn truncation_is_char_safe() {
        assert_eq!(truncate_chars("héllo", 2), "hé");
        assert_eq!(truncate_chars("abc", 10), "abc");
    }

    #[test]
    fn single_candidates_always_selected() {
        let e = Embedder::mock(16);
        let llm = vec![ContextualDocument::generated("s0", "x", 0).with_embedding(v(&[1.0, 0.0]))];
        let prf = vec![ContextualDocument::retrieved("d", "y", 0).with_embedding(v(&[0.0, 1.0]))];
        let r = mutual_verify(&llm, &prf, 3, 3, &e, DEFAULT_MAX_EMBED_CHARS).unwrap();
        assert_eq!(r.selected_llm.len(), 1);
        assert_eq!(r.selected_prf.len(), 1);
        assert!(r.filtered_llm().is_empty());
    }

    #[test]
    fn full_selection_is_reordered() {
        let e = Embedder::mock(16);
        let llm = vec![
            ContextualDocument::generated("s0", "x", 0).with_embedding(v(&[0.0, 1.0])),
            ContextualDocument::generated("s1", "x", 1).with_embedding(v(&[1.0, 0.0])),
        ];
        let prf = vec![
            ContextualDocument::retrieved("a", "y", 0).with_embedding(v(&[0.2, 1.0])),
            ContextualDocument::retrieved("b", "y", 1).with_embedding(v(&[1.0, 0.0])),
        ];
        let r = mutual_verify(&llm, &prf, 2, 2, &e, DEFAULT_MAX_EMBED_CHARS).unwrap();
        assert_eq!(ranks(&r.selected_llm), vec![1, 0]);
        assert_eq!(r.selected_prf.len(), 2);
        assert_eq!(r.grid.len(), 2);
        assert_eq!(r.grid[0].len(), 2);
    }

    #[test]
    fn embeds_text_when_vectors_missing() {
        let e = Embedder::mock(64);
        let llm = vec![ContextualDocument::generated("s0", "solar energy panels", 0)];
        let prf = vec![
            ContextualDocument::retrieved("a", "solar panels on roofs", 0),
            ContextualDocument::retrieved("b", "medieval castle architecture", 1),
        ];
        let r = mutual_verify(&llm, &prf, 1, 1, &e, DEFAULT_MAX_EMBED_CHARS).unwrap();
        assert_eq!(r.selected_prf[0].id, "a");
        assert_eq!(r.filtered_prf()[0].id, "b");
        assert_eq!(e.cache().len(), 3);
    }

    #[test]
    fn empty_side_rejected() {
        let e = Embedder::mock(16);
        assert!(mutual_verify(&docs(1), &[], 1, 1, &e, 10).is_err());
    }
}
