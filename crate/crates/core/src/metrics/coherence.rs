//! Sliding-window co-occurrence statistics and topic coherence scores.
//!
//! A window of size `W` slides over each document's token stream with
//! stride 1. Documents shorter than `W` form a single window and empty
//! documents contribute none. Probabilities are document-window counts
//! divided by the total number of windows.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::Corpus;

/// Floor applied to joint probabilities before taking logarithms.
pub const DEFAULT_EPS: f64 = 1e-12;
/// Window size for the UCI and NPMI measures.
pub const UCI_WINDOW: usize = 10;
/// Window size for the context-vector measure.
pub const CV_WINDOW: usize = 110;

/// Word and word-pair window counts.
#[derive(Debug, Clone)]
pub struct CooccurrenceStats {
    window_size: usize,
    index: HashMap<String, usize>,
    words: Vec<String>,
    word_counts: Vec<u64>,
    pair_counts: HashMap<(usize, usize), u64>,
    n_windows: u64,
}

impl CooccurrenceStats {
    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn n_windows(&self) -> u64 {
        self.n_windows
    }

    /// Words seen in at least one window.
    pub fn vocabulary(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    fn id(&self, word: &str) -> Result<usize> {
        self.index
            .get(word)
            .copied()
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    /// Fraction of windows containing `word`.
    pub fn p_word(&self, word: &str) -> Result<f64> {
        let id = self.id(word)?;
        Ok(self.word_counts[id] as f64 / self.n_windows as f64)
    }

    /// Fraction of windows containing both words. `p_pair(w, w) = p_word(w)`.
    pub fn p_pair(&self, w1: &str, w2: &str) -> Result<f64> {
        let (a, b) = (self.id(w1)?, self.id(w2)?);
        if a == b {
            return Ok(self.word_counts[a] as f64 / self.n_windows as f64);
        }
        let key = (a.min(b), a.max(b));
        let count = self.pair_counts.get(&key).copied().unwrap_or(0);
        Ok(count as f64 / self.n_windows as f64)
    }
}

/// Counts every word of the corpus.
pub fn build_cooccurrence(corpus: &Corpus, window_size: usize) -> Result<CooccurrenceStats> {
    build(corpus, window_size, None)
}

/// Counts only `words`. Other tokens still occupy window positions.
pub fn build_cooccurrence_for<S: AsRef<str>>(
    corpus: &Corpus,
    window_size: usize,
    words: &[S],
) -> Result<CooccurrenceStats> {
    let keep: HashSet<&str> = words.iter().map(AsRef::as_ref).collect();
    build(corpus, window_size, Some(&keep))
}

fn build(
    corpus: &Corpus,
    window_size: usize,
    keep: Option<&HashSet<&str>>,
) -> Result<CooccurrenceStats> {
    if window_size == 0 {
        return Err(Error::InvalidArgument("window size must be >= 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut words: Vec<String> = Vec::new();
    let mut word_counts: Vec<u64> = Vec::new();
    let mut pair_counts: HashMap<(usize, usize), u64> = HashMap::new();
    let mut n_windows = 0u64;

    for tokens in corpus.tokens() {
        if tokens.is_empty() {
            continue;
        }
        let ids: Vec<Option<usize>> = tokens
            .iter()
            .map(|t| {
                if keep.is_some_and(|k| !k.contains(t.as_str())) {
                    return None;
                }
                Some(*index.entry(t.clone()).or_insert_with(|| {
                    words.push(t.clone());
                    word_counts.push(0);
                    words.len() - 1
                }))
            })
            .collect();
        let starts = if ids.len() <= window_size {
            1
        } else {
            ids.len() - window_size + 1
        };
        let mut present: HashMap<usize, u32> = HashMap::new();
        for id in ids.iter().take(window_size).flatten() {
            *present.entry(*id).or_insert(0) += 1;
        }
        let mut distinct: Vec<usize> = Vec::new();
        for s in 0..starts {
            if s > 0 {
                if let Some(out) = ids[s - 1] {
                    let c = present.get_mut(&out).expect("tracked id");
                    *c -= 1;
                    if *c == 0 {
                        present.remove(&out);
                    }
                }
                if let Some(inc) = ids[s + window_size - 1] {
                    *present.entry(inc).or_insert(0) += 1;
                }
            }
            n_windows += 1;
            distinct.clear();
            distinct.extend(present.keys().copied());
            distinct.sort_unstable();
            for (i, &a) in distinct.iter().enumerate() {
                word_counts[a] += 1;
                for &b in &distinct[i + 1..] {
                    *pair_counts.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
    }
    if n_windows == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(CooccurrenceStats {
        window_size,
        index,
        words,
        word_counts,
        pair_counts,
        n_windows,
    })
}

/// `ln(max(P(w1,w2), eps) / (P(w1) P(w2)))`.
pub fn pmi(stats: &CooccurrenceStats, w1: &str, w2: &str, eps: f64) -> Result<f64> {
    let joint = stats.p_pair(w1, w2)?.max(eps);
    Ok((joint / (stats.p_word(w1)? * stats.p_word(w2)?)).ln())
}

/// PMI normalized by `-ln P(w1,w2)` and clamped to `[-1, 1]`. A pair that
/// co-occurs in every window scores 1.
pub fn npmi(stats: &CooccurrenceStats, w1: &str, w2: &str, eps: f64) -> Result<f64> {
    let joint = stats.p_pair(w1, w2)?.max(eps);
    let value = pmi(stats, w1, w2, eps)?;
    let denom = -joint.ln();
    if denom <= 0.0 {
        return Ok(1.0);
    }
    Ok((value / denom).clamp(-1.0, 1.0))
}

/// The coherence measures reported by the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Uci,
    Npmi,
    Cv,
}

fn known_words<'a>(
    words: &'a [String],
    stats: &CooccurrenceStats,
    topic: usize,
) -> Result<Vec<&'a str>> {
    let known: Vec<&str> = words
        .iter()
        .map(String::as_str)
        .filter(|w| {
            let ok = stats.contains(w);
            if !ok {
                log::warn!(
                    "topic {topic}: word {w:?} never occurs in the reference windows; skipped"
                );
            }
            ok
        })
        .collect();
    if known.len() < 2 {
        return Err(Error::TooFewTopicWords { topic });
    }
    Ok(known)
}

fn mean_pairwise(words: &[&str], mut f: impl FnMut(&str, &str) -> Result<f64>) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            sum += f(words[i], words[j])?;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Coherence of one topic's word list. `topic` only labels diagnostics.
pub fn topic_coherence(
    words: &[String],
    stats: &CooccurrenceStats,
    measure: Measure,
    eps: f64,
    topic: usize,
) -> Result<f64> {
    let words = known_words(words, stats, topic)?;
    match measure {
        Measure::Uci => mean_pairwise(&words, |a, b| pmi(stats, a, b, eps)),
        Measure::Npmi => mean_pairwise(&words, |a, b| npmi(stats, a, b, eps)),
        Measure::Cv => {
            let vectors: Vec<Vec<f64>> = words
                .iter()
                .map(|a| words.iter().map(|b| npmi(stats, a, b, eps)).collect())
                .collect::<Result<_>>()?;
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in 0..vectors.len() {
                for j in (i + 1)..vectors.len() {
                    sum += cosine(&vectors[i], &vectors[j]).unwrap_or_else(|| {
                        log::warn!("topic {topic}: zero context vector; similarity taken as 0");
                        0.0
                    });
                    count += 1;
                }
            }
            Ok(sum / count as f64)
        }
    }
}

/// Mean coherence over topics.
pub fn coherence(
    topics: &[Vec<String>],
    stats: &CooccurrenceStats,
    measure: Measure,
    eps: f64,
) -> Result<f64> {
    if topics.is_empty() {
        return Err(Error::InvalidArgument("no topics to score".into()));
    }
    let mut sum = 0.0;
    for (t, words) in topics.iter().enumerate() {
        sum += topic_coherence(words, stats, measure, eps, t)?;
    }
    Ok(sum / topics.len() as f64)
}

pub fn coherence_uci(topics: &[Vec<String>], stats: &CooccurrenceStats, eps: f64) -> Result<f64> {
    coherence(topics, stats, Measure::Uci, eps)
}

pub fn coherence_npmi(topics: &[Vec<String>], stats: &CooccurrenceStats, eps: f64) -> Result<f64> {
    coherence(topics, stats, Measure::Npmi, eps)
}

pub fn coherence_cv(topics: &[Vec<String>], stats: &CooccurrenceStats, eps: f64) -> Result<f64> {
    coherence(topics, stats, Measure::Cv, eps)
}
