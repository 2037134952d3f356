//! Word-level topic summaries: frequency lists, contrastive keywords,
//! topic matching and gold-label composition.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use super::partition::Partition;
use crate::error::{Error, Result};
use crate::io::Corpus;

/// Smoothing constant added to document frequencies in the contrastive score.
pub const DELTA_TFIDF_SMOOTHING: f64 = 0.5;

/// Per-topic `(word, score)` lists in descending score order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicWords {
    pub topics: Vec<Vec<(String, f64)>>,
}

impl TopicWords {
    pub fn k(&self) -> usize {
        self.topics.len()
    }

    /// Words of each topic without scores.
    pub fn word_lists(&self) -> Vec<Vec<String>> {
        self.topics
            .iter()
            .map(|t| t.iter().map(|(w, _)| w.clone()).collect())
            .collect()
    }
}

fn check_lengths(corpus: &Corpus, labels: &Partition) -> Result<()> {
    if corpus.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: corpus.len(),
            right: labels.len(),
        });
    }
    Ok(())
}

fn sorted_desc(counts: HashMap<&str, f64>, n: usize) -> Vec<(String, f64)> {
    let mut list: Vec<(&str, f64)> = counts.into_iter().collect();
    list.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    list.truncate(n);
    list.into_iter().map(|(w, c)| (w.to_string(), c)).collect()
}

/// Token counts per topic, truncated to the `n` most frequent words. Ties
/// are broken alphabetically. Empty topics get an empty list.
pub fn top_words(corpus: &Corpus, labels: &Partition, n: usize) -> Result<TopicWords> {
    if n == 0 {
        return Err(Error::InvalidArgument("top-word count must be >= 1".into()));
    }
    check_lengths(corpus, labels)?;
    let mut counts: Vec<HashMap<&str, f64>> = vec![HashMap::new(); labels.k()];
    for (tokens, &t) in corpus.tokens().iter().zip(labels.labels()) {
        for tok in tokens {
            *counts[t].entry(tok.as_str()).or_insert(0.0) += 1.0;
        }
    }
    let topics = counts
        .into_iter()
        .enumerate()
        .map(|(t, c)| {
            if c.is_empty() {
                log::warn!("topic {t} has no tokens");
            }
            sorted_desc(c, n)
        })
        .collect();
    Ok(TopicWords { topics })
}

/// Full term-frequency vectors per topic.
pub fn term_frequencies(corpus: &Corpus, labels: &Partition) -> Result<TopicWords> {
    top_words(corpus, labels, usize::MAX)
}

/// Words most characteristic of `topic` relative to the remaining
/// documents. Each word occurring in the topic scores
/// `tf · ln(((df_t + s) / N_t) / ((df_r + s) / N_r))`, where `tf` is its
/// token count inside the topic, `df_t`, `df_r` are document frequencies
/// inside and outside, and `N_t`, `N_r` the document counts.
pub fn delta_tfidf(
    corpus: &Corpus,
    labels: &Partition,
    topic: usize,
    n: usize,
) -> Result<Vec<(String, f64)>> {
    if n == 0 {
        return Err(Error::InvalidArgument("top-word count must be >= 1".into()));
    }
    check_lengths(corpus, labels)?;
    if topic >= labels.k() {
        return Err(Error::InvalidArgument(format!(
            "topic {topic} out of range for K = {}",
            labels.k()
        )));
    }
    let n_topic = labels.labels().iter().filter(|&&l| l == topic).count();
    let n_rest = labels.len() - n_topic;
    if n_topic == 0 {
        return Err(Error::EmptyTopic(topic));
    }
    if n_rest == 0 {
        return Err(Error::InvalidArgument(format!(
            "every document belongs to topic {topic}; nothing to contrast against"
        )));
    }
    let mut tf: HashMap<&str, f64> = HashMap::new();
    let mut df_topic: HashMap<&str, f64> = HashMap::new();
    let mut df_rest: HashMap<&str, f64> = HashMap::new();
    for (tokens, &l) in corpus.tokens().iter().zip(labels.labels()) {
        let inside = l == topic;
        let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
        if inside {
            for w in &seen {
                *tf.entry(w).or_insert(0.0) += 1.0;
            }
        }
        seen.sort_unstable();
        seen.dedup();
        let df = if inside { &mut df_topic } else { &mut df_rest };
        for w in seen {
            *df.entry(w).or_insert(0.0) += 1.0;
        }
    }
    let s = DELTA_TFIDF_SMOOTHING;
    let scores: HashMap<&str, f64> = tf
        .iter()
        .map(|(&w, &count)| {
            let inside = (df_topic.get(w).copied().unwrap_or(0.0) + s) / n_topic as f64;
            let outside = (df_rest.get(w).copied().unwrap_or(0.0) + s) / n_rest as f64;
            (w, count * (inside / outside).ln())
        })
        .collect();
    Ok(sorted_desc(scores, n))
}

/// One pairing produced by [`greedy_match`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TopicMatch {
    pub a: usize,
    pub b: usize,
    pub similarity: f64,
}

fn sparse_vector(topic: &[(String, f64)]) -> Vec<(&str, f64)> {
    let mut v: Vec<(&str, f64)> = topic.iter().map(|(w, s)| (w.as_str(), *s)).collect();
    v.sort_by(|a, b| a.0.cmp(b.0));
    v
}

fn cosine_sparse(x: &[(&str, f64)], y: &[(&str, f64)]) -> f64 {
    let nx = x.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return 0.0;
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < x.len() && j < y.len() {
        match x[i].0.cmp(y[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += x[i].1 * y[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    dot / (nx * ny)
}

/// Pairs topics of two models by repeatedly taking the most similar
/// unmatched pair. Each topic is treated as the sparse vector of its word
/// scores and compared by cosine similarity; ties go to the lowest `(a, b)`.
/// Returns `min(K_a, K_b)` matches in selection order.
pub fn greedy_match(a: &TopicWords, b: &TopicWords) -> Result<Vec<TopicMatch>> {
    if a.k() == 0 || b.k() == 0 {
        return Err(Error::InvalidArgument(
            "both models need at least one topic".into(),
        ));
    }
    let ra: Vec<Vec<(&str, f64)>> = a.topics.iter().map(|t| sparse_vector(t)).collect();
    let rb: Vec<Vec<(&str, f64)>> = b.topics.iter().map(|t| sparse_vector(t)).collect();

    let mut pairs: Vec<TopicMatch> = Vec::with_capacity(a.k() * b.k());
    for (i, x) in ra.iter().enumerate() {
        for (j, y) in rb.iter().enumerate() {
            pairs.push(TopicMatch {
                a: i,
                b: j,
                similarity: cosine_sparse(x, y),
            });
        }
    }
    pairs.sort_by(|p, q| {
        q.similarity
            .total_cmp(&p.similarity)
            .then(p.a.cmp(&q.a))
            .then(p.b.cmp(&q.b))
    });
    let mut used_a = vec![false; a.k()];
    let mut used_b = vec![false; b.k()];
    let mut out = Vec::with_capacity(a.k().min(b.k()));
    for p in pairs {
        if !used_a[p.a] && !used_b[p.b] {
            used_a[p.a] = true;
            used_b[p.b] = true;
            out.push(p);
        }
    }
    Ok(out)
}

/// Row-normalized `K × L` matrix: entry `(t, l)` is the fraction of topic
/// `t`'s documents whose gold label is `l`. Empty topics give zero rows.
pub fn composition_matrix(topics: &Partition, gold: &Partition) -> Result<DMatrix<f64>> {
    if topics.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: topics.len(),
            right: gold.len(),
        });
    }
    let mut m = DMatrix::zeros(topics.k(), gold.k());
    for (&t, &l) in topics.labels().iter().zip(gold.labels()) {
        m[(t, l)] += 1.0;
    }
    for t in 0..topics.k() {
        let total: f64 = m.row(t).sum();
        if total == 0.0 {
            log::warn!("topic {t} is empty; composition row left at zero");
            continue;
        }
        let mut row = m.row_mut(t);
        row /= total;
    }
    Ok(m)
}
