//! Query expansion that combines LLM-generated passages with pseudo-relevance
//! feedback documents, filtered by reciprocal embedding similarity, plus the
//! BM25 retrieval and TREC-style evaluation around it.

pub mod cache;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod expand;
pub mod hash;
pub mod http;
pub mod index;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod verify;

pub use cache::{BackendKind, JsonlCache};
pub use corpus::{analyze, AnalyzerConfig, Document, InputFormat, Query, TokenStream};
pub use embed::{cosine_sim, mock_embed, Embedder, EmbeddingVector};
pub use error::{Error, ErrorKind, Result};
pub use eval::{evaluate, paired_ttest, Metric, MetricKey, MetricReport, QrelSet, Run, Verdict};
pub use expand::{compose, ExpandedQuery, Expander, ExpansionConfig, Method, QueryExpander};
pub use index::{Bm25Params, PostingsIndex, RankedList, ScoredDoc};
pub use llm::{Gateway, GenerationRequest, GenerationResponse};
pub use pipeline::{run_batch, BatchOptions};
pub use prompts::{build_prompt, PromptKind};
pub use verify::{mutual_verify, ContextualDocument, Source, VerificationResult};
