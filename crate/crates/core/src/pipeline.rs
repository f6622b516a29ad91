//! Batch driver: expand each query, search the expanded text, and collect
//! results in input order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Query;
use crate::error::{invalid, Error, Result};
use crate::expand::{ExpandedQuery, QueryExpander};
use crate::index::{Bm25Params, PostingsIndex, RankedList};

pub const RUN_DEPTH: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchOptions {
    pub depth: usize,
    /// Worker threads; 0 means one per CPU.
    pub threads: usize,
    /// Abort on the first failed query instead of skipping it.
    pub strict: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            depth: RUN_DEPTH,
            threads: 0,
            strict: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub expanded: ExpandedQuery,
    pub ranking: RankedList,
}

#[derive(Debug, Default)]
pub struct BatchOutput {
    /// Successful queries, in input order.
    pub results: Vec<QueryResult>,
    pub failures: Vec<Error>,
}

pub fn process_query(
    expander: &dyn QueryExpander,
    index: &PostingsIndex,
    params: &Bm25Params,
    q: &Query,
    depth: usize,
) -> Result<QueryResult> {
    let expanded = expander.expand(q)?;
    let tokens = index.analyze(&expanded.text);
    let ranking = index
        .search(&q.query_id, &tokens, depth, params)
        .map_err(|e| e.for_query(&q.query_id))?;
    Ok(QueryResult { expanded, ranking })
}

pub fn run_batch(
    expander: &dyn QueryExpander,
    index: &PostingsIndex,
    params: &Bm25Params,
    queries: &[Query],
    opts: &BatchOptions,
) -> Result<BatchOutput> {
    if opts.depth == 0 {
        return Err(invalid("retrieval depth must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<QueryResult>> = pool.install(|| {
        queries
            .par_iter()
            .map(|q| process_query(expander, index, params, q, opts.depth))
            .collect()
    });

    let mut out = BatchOutput::default();
    for r in outcomes {
        match r {
            Ok(res) => out.results.push(res),
            Err(e) if opts.strict => return Err(e),
            Err(e) => {
                tracing::error!("{e}; query skipped");
                out.failures.push(e);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnalyzerConfig, Document};
    use crate::expand::{ExpansionConfig, Expander, Method};
    use crate::{Embedder, Gateway};

    fn index() -> PostingsIndex {
        let docs = vec![
            Document::new("D1", "the cat sat"),
            Document::new("D2", "dogs bark"),
            Document::new("D3", "cat cat cat"),
        ];
        PostingsIndex::build(docs, AnalyzerConfig::default()).unwrap()
    }

    struct Failing;

    impl QueryExpander for Failing {
        fn name(&self) -> String {
            "failing".into()
        }

        fn expand(&self, q: &Query) -> Result<ExpandedQuery> {
            Err(Error::EmptyGeneration.for_query(&q.query_id))
        }
    }

    #[test]
    fn no_expansion_matches_plain_search() {
        let idx = index();
        let gw = Gateway::mock(vec!["x".into()], 1);
        let emb = Embedder::mock(64);
        let cfg = ExpansionConfig::default().with_method(Method::NoExpansion);
        let ex = Expander::new(&idx, &gw, &emb, &cfg);
        let queries = vec![Query::new("a", "cat"), Query::new("b", "dogs"), Query::new("c", "cat dogs")];
        let out = run_batch(&ex, &idx, &Bm25Params::default(), &queries, &BatchOptions::default()).unwrap();
        let ids: Vec<_> = out.results.iter().map(|r| r.ranking.query_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        for (q, r) in queries.iter().zip(&out.results) {
            let plain = idx.search(&q.query_id, &idx.analyze(&q.text), RUN_DEPTH, &Bm25Params::default()).unwrap();
            assert_eq!(plain, r.ranking);
        }
    }

    #[test]
    fn failures_skip_or_abort() {
        let idx = index();
        let queries = vec![Query::new("a", "cat")];
        let out = run_batch(&Failing, &idx, &Bm25Params::default(), &queries, &BatchOptions::default()).unwrap();
        assert!(out.results.is_empty());
        assert_eq!(out.failures.len(), 1);
        let strict = BatchOptions { strict: true, ..Default::default() };
        assert!(run_batch(&Failing, &idx, &Bm25Params::default(), &queries, &strict).is_err());
    }
}
