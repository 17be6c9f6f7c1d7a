//! Corpus BLEU and the per-word F-score breakdown by training frequency.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whitespace tokenization used by every metric and the file pipeline.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_owned).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU in [0, 100]: modified n-gram precision up to `max_n`
/// with a brevity penalty and no smoothing, so any order with zero matches
/// zeroes the score.
pub fn corpus_bleu(outputs: &[Vec<String>], references: &[Vec<String>], max_n: usize) -> Result<f64> {
    if outputs.len() != references.len() {
        return Err(Error::dim("corpus_bleu", outputs.len(), references.len()));
    }
    if outputs.is_empty() {
        return Err(Error::Argument("corpus_bleu needs at least one sentence".into()));
    }
    if max_n == 0 {
        return Err(Error::Argument("max_n must be positive".into()));
    }

    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (out, reference) in outputs.iter().zip(references) {
            total += out.len().saturating_sub(n - 1);
            let ref_counts = ngram_counts(reference, n);
            for (gram, &c) in &ngram_counts(out, n) {
                matched += c.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
        }
        if matched == 0 || total == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / total as f64).ln();
    }

    let out_len: usize = outputs.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    let brevity = if out_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / out_len as f64).exp()
    };
    Ok(100.0 * brevity * (log_sum / max_n as f64).exp())
}

/// Scores for one word across the corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordScore {
    pub word: String,
    /// Occurrences in the training corpus (zero if never seen there).
    pub frequency: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Aggregate over the words whose training frequency falls in [lo, hi).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyBucket {
    pub lo: u64,
    /// Open-ended final bucket when absent.
    pub hi: Option<u64>,
    pub word_count: usize,
    /// Unweighted mean F1 of the member words; zero for an empty bucket.
    pub mean_f1: f64,
}

/// Per-word F-scores plus the frequency-bucket breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FScoreReport {
    pub words: Vec<WordScore>,
    pub buckets: Vec<FrequencyBucket>,
}

impl FScoreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Sentence-level co-occurrence F-scores: for each word, precision is the
/// fraction of output sentences containing it whose reference also does,
/// recall the fraction of reference sentences containing it whose output
/// also does, F1 their harmonic mean (zero when both are zero). Buckets
/// cover [edge_i, edge_{i+1}) plus an open-ended tail from the last edge;
/// words rarer than the first edge stay unbucketed.
pub fn word_fscore_breakdown(
    outputs: &[Vec<String>],
    references: &[Vec<String>],
    train_freq: &HashMap<String, u64>,
    bucket_edges: &[u64],
) -> Result<FScoreReport> {
    if outputs.len() != references.len() {
        return Err(Error::Argument(format!(
            "sentence counts differ: {} outputs vs {} references",
            outputs.len(),
            references.len()
        )));
    }
    if bucket_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("bucket edges must be strictly increasing".into()));
    }

    // in_out[w] = sentences whose output contains w, both[w] likewise for
    // co-occurrence; BTreeMap keeps the report order deterministic.
    let mut in_out: BTreeMap<&str, usize> = BTreeMap::new();
    let mut in_ref: BTreeMap<&str, usize> = BTreeMap::new();
    let mut both: BTreeMap<&str, usize> = BTreeMap::new();
    for (out, reference) in outputs.iter().zip(references) {
        let out_set: std::collections::BTreeSet<&str> =
            out.iter().map(String::as_str).collect();
        let ref_set: std::collections::BTreeSet<&str> =
            reference.iter().map(String::as_str).collect();
        for &w in &out_set {
            *in_out.entry(w).or_insert(0) += 1;
            if ref_set.contains(w) {
                *both.entry(w).or_insert(0) += 1;
            }
        }
        for &w in &ref_set {
            *in_ref.entry(w).or_insert(0) += 1;
        }
    }

    let mut vocabulary: BTreeMap<&str, ()> = BTreeMap::new();
    for w in in_out.keys().chain(in_ref.keys()) {
        vocabulary.insert(w, ());
    }

    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let words: Vec<WordScore> = vocabulary
        .keys()
        .map(|&w| {
            let hits = both.get(w).copied().unwrap_or(0);
            let precision = ratio(hits, in_out.get(w).copied().unwrap_or(0));
            let recall = ratio(hits, in_ref.get(w).copied().unwrap_or(0));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            WordScore {
                word: w.to_owned(),
                frequency: train_freq.get(w).copied().unwrap_or(0),
                precision,
                recall,
                f1,
            }
        })
        .collect();

    let ranges: Vec<(u64, Option<u64>)> = if bucket_edges.is_empty() {
        vec![(0, None)]
    } else {
        let mut r: Vec<(u64, Option<u64>)> = bucket_edges
            .windows(2)
            .map(|w| (w[0], Some(w[1])))
            .collect();
        r.push((*bucket_edges.last().unwrap(), None));
        r
    };
    let buckets = ranges
        .into_iter()
        .map(|(lo, hi)| {
            let member = |f: u64| f >= lo && hi.is_none_or(|h| f < h);
            let f1s: Vec<f64> = words
                .iter()
                .filter(|w| member(w.frequency))
                .map(|w| w.f1)
                .collect();
            FrequencyBucket {
                lo,
                hi,
                word_count: f1s.len(),
                mean_f1: if f1s.is_empty() {
                    0.0
                } else {
                    f1s.iter().sum::<f64>() / f1s.len() as f64
                },
            }
        })
        .collect();

    Ok(FScoreReport { words, buckets })
}
