//! Synthetic inputs for the benchmarks.

use mill_core::corpus::Document;
use mill_core::embed::EmbeddingVector;
use mill_core::eval::{QrelSet, Run};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Zipf-ish vocabulary draw so a few terms have long posting lists.
fn word<R: Rng>(rng: &mut R, vocab: usize) -> String {
    let u: f64 = rng.random_range(0.0..1.0);
    let rank = ((vocab as f64).powf(u) as usize).min(vocab - 1);
    format!("w{rank}")
}

pub fn corpus(docs: usize, avg_len: usize, vocab: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|i| {
            let len = rng.random_range(avg_len / 2..=avg_len * 3 / 2);
            let text: Vec<String> = (0..len).map(|_| word(&mut rng, vocab)).collect();
            Document::new(format!("d{i}"), text.join(" "))
        })
        .collect()
}

pub fn queries(count: usize, len: usize, vocab: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..len).map(|_| word(&mut rng, vocab)).collect::<Vec<_>>().join(" "))
        .collect()
}

pub fn unit_vectors(count: usize, dim: usize, seed: u64) -> Vec<EmbeddingVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            EmbeddingVector(v.into_iter().map(|x| x / n).collect())
        })
        .collect()
}

/// A run of `depth` documents per query and qrels marking about 5% of
/// them relevant with grades 1 to 3.
pub fn run_and_qrels(queries: usize, depth: usize, seed: u64) -> (Run, QrelSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = Run::new();
    let mut qrels = QrelSet::new();
    for q in 0..queries {
        let qid = format!("q{q}");
        for d in 0..depth {
            let doc = format!("d{d}");
            run.push(&qid, &doc, rng.random_range(0.0..100.0));
            if rng.random_bool(0.05) {
                qrels.insert(&qid, &doc, rng.random_range(1..=3));
            }
        }
    }
    run.normalize();
    (run, qrels)
}
