use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mill_core::cache::{BackendKind, JsonlCache};
use mill_core::corpus::{read_documents, read_queries, AnalyzerConfig, InputFormat, Query};
use mill_core::embed::{Embedder, RemoteEmbedder};
use mill_core::eval::{self, write_run, Metric, MetricKey};
use mill_core::http::{JsonClient, RetryPolicy};
use mill_core::llm::{default_mock_vocab, Gateway, MockGenerator, RemoteGenerator};
use mill_core::pipeline::{run_batch, BatchOptions};
use mill_core::prompts::parse_qqd;
use mill_core::{Error, Expander, PostingsIndex};

use crate::config::{existing, read_vocab, ExperimentConfig};
use crate::{CaseArgs, CompareArgs, EvalArgs, ExperimentArgs, Failure, IndexArgs};

pub const RUN_FILE: &str = "run.trec";
pub const PROVENANCE_FILE: &str = "provenance.jsonl";
pub const EXPANDED_FILE: &str = "expanded.tsv";

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Core(Error::io(path, e)))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Core(Error::io(path, e))
}

pub fn index(a: &IndexArgs) -> Result<(), Failure> {
    let corpus = existing(Some(&a.corpus), "corpus")?;
    if a.output.exists() && !a.force {
        return Err(Failure::Config(format!(
            "{} already exists; pass --force to rebuild",
            a.output.display()
        )));
    }
    let format = match &a.format {
        Some(f) => f.parse()?,
        None => InputFormat::from_path(&corpus),
    };
    let analyzer = AnalyzerConfig {
        stemming: !a.no_stemming,
        stopwords: !a.no_stopwords,
        ..AnalyzerConfig::default()
    };
    let docs = read_documents(&corpus, format, a.strict)?;
    let idx = PostingsIndex::build(docs, analyzer)?;
    idx.save(&a.output)?;
    println!("documents\t{}", idx.doc_count());
    println!("terms\t{}", idx.term_count());
    println!("avg_doc_length\t{:.4}", idx.avg_doc_length());
    println!("index\t{}", a.output.display());
    Ok(())
}

/// Config file merged with flags; flags win.
fn resolve(a: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(&existing(Some(p), "config file")?)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! over {
        ($flag:expr => $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    over!(a.index.as_ref().map(|p| Some(p.clone())) => cfg.index);
    over!(a.corpus.as_ref().map(|p| Some(p.clone())) => cfg.corpus);
    over!(a.corpus_format.as_ref().map(|p| Some(p.clone())) => cfg.corpus_format);
    over!(a.queries.as_ref().map(|p| Some(p.clone())) => cfg.queries);
    over!(a.output_dir.as_ref().map(|p| Some(p.clone())) => cfg.output_dir);
    over!(a.tag.as_ref().map(|p| Some(p.clone())) => cfg.tag);
    over!(a.cache_dir.as_ref().map(|p| Some(p.clone())) => cfg.backend.cache_dir);
    over!(a.mock_vocab.as_ref().map(|p| Some(p.clone())) => cfg.backend.mock_vocab);
    over!(a.method => cfg.expansion.method);
    over!(a.backend => cfg.backend.kind);
    over!(a.seed => cfg.seed);
    over!(a.threads => cfg.threads);
    cfg.strict |= a.strict;
    cfg.expansion.validate()?;
    Ok(cfg)
}

fn load_index(cfg: &ExperimentConfig) -> Result<PostingsIndex, Failure> {
    if let Some(p) = &cfg.index {
        if p.exists() {
            return Ok(PostingsIndex::load(p)?);
        }
        if cfg.corpus.is_none() {
            return Err(Failure::Config(format!("index {} does not exist", p.display())));
        }
    }
    let corpus = existing(cfg.corpus.as_ref(), "corpus")?;
    let docs = read_documents(&corpus, cfg.corpus_format(&corpus)?, cfg.strict)?;
    Ok(PostingsIndex::build(docs, AnalyzerConfig::default())?)
}

fn load_queries(cfg: &ExperimentConfig) -> Result<Vec<Query>, Failure> {
    let path = existing(cfg.queries.as_ref(), "queries file")?;
    Ok(read_queries(&path, InputFormat::from_path(&path), cfg.strict)?)
}

fn open_cache<V: serde::Serialize + serde::de::DeserializeOwned + Clone>(
    dir: Option<&PathBuf>,
    file: &str,
) -> Result<JsonlCache<V>, Failure> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(io_err(d))?;
            Ok(JsonlCache::open(&d.join(file))?)
        }
        None => Ok(JsonlCache::in_memory()),
    }
}

fn backends(cfg: &ExperimentConfig) -> Result<(Gateway, Embedder), Failure> {
    let b = &cfg.backend;
    let cache_dir = b.cache_dir.as_ref();
    match b.kind {
        BackendKind::Mock => {
            let vocab = match &b.mock_vocab {
                Some(p) => read_vocab(&existing(Some(p), "mock vocabulary")?)?,
                None => default_mock_vocab(),
            };
            let gen = MockGenerator::new(vocab, cfg.seed);
            let gw = Gateway::new(Box::new(gen), open_cache(cache_dir, "completions.mock.jsonl")?, b.max_in_flight);
            let emb = Embedder::new(
                Box::new(mill_core::embed::MockEmbedder { dim: b.mock_dim }),
                open_cache(cache_dir, "embeddings.mock.jsonl")?,
                b.max_in_flight,
            );
            Ok((gw, emb))
        }
        BackendKind::Remote => {
            let retry = RetryPolicy::default();
            let gen = RemoteGenerator::new(JsonClient::from_env(b.completion_endpoint.as_str(), retry)?);
            let embed = RemoteEmbedder::new(
                JsonClient::from_env(b.embedding_endpoint.as_str(), retry)?,
                b.embedding_model.as_str(),
            );
            let gw = Gateway::new(Box::new(gen), open_cache(cache_dir, "completions.jsonl")?, b.max_in_flight);
            let emb = Embedder::new(Box::new(embed), open_cache(cache_dir, "embeddings.jsonl")?, b.max_in_flight);
            Ok((gw, emb))
        }
    }
}

pub fn run(a: &ExperimentArgs) -> Result<(), Failure> {
    let cfg = resolve(a)?;
    let out_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Failure::Config("no output directory given".into()))?;
    let queries = load_queries(&cfg)?;
    let idx = load_index(&cfg)?;
    let (gw, emb) = backends(&cfg)?;
    std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;

    let expander = Expander::new(&idx, &gw, &emb, &cfg.expansion);
    let opts = BatchOptions {
        threads: cfg.threads,
        strict: cfg.strict,
        ..BatchOptions::default()
    };
    let out = run_batch(&expander, &idx, &cfg.expansion.bm25, &queries, &opts)?;

    let tag = cfg.tag.clone().unwrap_or_else(|| cfg.expansion.method.to_string());
    let run_path = out_dir.join(RUN_FILE);
    let prov_path = out_dir.join(PROVENANCE_FILE);
    let exp_path = out_dir.join(EXPANDED_FILE);
    let mut run_w = create(&run_path)?;
    let mut prov_w = create(&prov_path)?;
    let mut exp_w = create(&exp_path)?;
    for r in &out.results {
        write_run(&mut run_w, &r.ranking, &tag).map_err(io_err(&run_path))?;
        let line = serde_json::to_string(&r.expanded).expect("expanded query serializes");
        writeln!(prov_w, "{line}").map_err(io_err(&prov_path))?;
        writeln!(exp_w, "{}\t{}", r.expanded.query_id, r.expanded.text).map_err(io_err(&exp_path))?;
    }
    run_w.flush().map_err(io_err(&run_path))?;
    prov_w.flush().map_err(io_err(&prov_path))?;
    exp_w.flush().map_err(io_err(&exp_path))?;

    println!("queries\t{}", queries.len());
    println!("completed\t{}", out.results.len());
    println!("skipped\t{}", out.failures.len());
    println!("run\t{}", run_path.display());
    println!("provenance\t{}", prov_path.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let run = existing(Some(&a.run), "run file")?;
    let qrels = existing(Some(&a.qrels), "qrels file")?;
    let report = eval::evaluate_files(&run, &qrels, &a.cutoffs, a.rel_threshold)?;
    let mut buf = Vec::new();
    match a.format.as_str() {
        "tsv" => report.write_tsv(&mut buf).expect("write to memory"),
        "json" => {
            serde_json::to_writer_pretty(&mut buf, &report.to_json()).expect("write to memory");
            buf.push(b'\n');
        }
        other => return Err(Failure::Config(format!("unknown report format {other:?}"))),
    }
    match &a.output {
        Some(p) => std::fs::write(p, &buf).map_err(io_err(p))?,
        None => std::io::stdout().write_all(&buf).map_err(io_err(Path::new("<stdout>")))?,
    }
    Ok(())
}

pub fn compare(a: &CompareArgs) -> Result<(), Failure> {
    let key = MetricKey {
        metric: a.metric.parse::<Metric>()?,
        cutoff: a.cutoff,
    };
    if a.cutoff == 0 {
        return Err(Failure::Config("cutoff must be at least 1".into()));
    }
    let qrels = eval::parse_qrels(&existing(Some(&a.qrels), "qrels file")?)?;
    let run_a = eval::parse_run(&existing(Some(&a.run_a), "run file")?)?;
    let run_b = eval::parse_run(&existing(Some(&a.run_b), "run file")?)?;
    let c = eval::compare_runs(&run_a, &run_b, &qrels, key, a.rel_threshold)?;
    println!("metric\t{}", c.key);
    println!("mean_a\t{:.6}", c.mean_a);
    println!("mean_b\t{:.6}", c.mean_b);
    match &c.test {
        Some(t) => {
            println!("t\t{:.6}", t.t);
            println!("p\t{:.6}", t.p);
        }
        None => {
            println!("t\tnan");
            println!("p\tnan");
        }
    }
    println!("verdict\t{}", c.verdict);
    Ok(())
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn case(a: &CaseArgs) -> Result<(), Failure> {
    let cfg = resolve(&a.experiment)?;
    let queries = load_queries(&cfg)?;
    let q = queries
        .iter()
        .find(|q| q.query_id == a.query_id)
        .ok_or_else(|| Failure::Config(format!("query {:?} not in the queries file", a.query_id)))?;
    let idx = load_index(&cfg)?;
    let (gw, emb) = backends(&cfg)?;
    let trace = Expander::new(&idx, &gw, &emb, &cfg.expansion).expand_traced(q)?;

    println!("query {}: {}", q.query_id, q.text);
    println!("method: {}", cfg.expansion.method);
    let (scored_llm, scored_prf) = match &trace.verification {
        Some(v) => (v.llm_candidates.clone(), v.prf_candidates.clone()),
        None => (trace.generated.clone(), trace.retrieved.clone()),
    };
    let prov = &trace.expanded.provenance;
    let mark = |kept: bool| if kept { "selected" } else { "filtered" };

    println!("\ngenerated documents ({}):", scored_llm.len());
    for d in &scored_llm {
        let kept = prov.llm_tags.contains(&d.id);
        let score = d.score.map_or(String::new(), |s| format!(" score={s:.4}"));
        println!("  [{}] {}{score}", mark(kept), d.id);
        let pairs = parse_qqd(&d.text);
        if pairs.len() > 1 || pairs.iter().any(|(_, p)| !p.is_empty()) {
            for (i, (sub, passage)) in pairs.iter().enumerate() {
                println!("      {}. {}", i + 1, sub);
                if !passage.is_empty() {
                    println!("         {}", one_line(passage));
                }
            }
        } else {
            println!("      {}", one_line(&d.text));
        }
    }
    println!("\nretrieved documents ({}):", scored_prf.len());
    for d in &scored_prf {
        let kept = prov.prf_ids.contains(&d.id);
        let score = d.score.map_or(String::new(), |s| format!(" score={s:.4}"));
        println!("  [{}] {} (rank {}){score}", mark(kept), d.id, d.origin_rank + 1);
        println!("      {}", one_line(&d.text));
    }
    if trace.fell_back_to_generation_only {
        println!("\nno documents retrieved; generated documents used alone");
    }
    println!("\nselected: {} generated, {} retrieved", prov.llm_tags.len(), prov.prf_ids.len());
    println!("\nexpanded query:\n{}", trace.expanded.text);
    Ok(())
}
