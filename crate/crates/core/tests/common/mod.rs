//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use topiclear::{EmbeddingMatrix, Stage};

/// Gaussian blobs with unit spread. Center `c` sits at `offset · e_c`, so
/// any two centers are `offset · √2` apart. Labels are shuffled.
pub struct Blobs {
    pub x: EmbeddingMatrix,
    pub labels: Vec<usize>,
}

pub fn blobs(n: usize, k: usize, dim: usize, separation: f64, seed: u64) -> Blobs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = separation / 2f64.sqrt();
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let data = DMatrix::from_fn(n, dim, |_, _| StandardNormal.sample(&mut rng));
    let mut data: DMatrix<f64> = data;
    for (i, &c) in labels.iter().enumerate() {
        data[(i, c)] += offset;
    }
    Blobs {
        x: EmbeddingMatrix::new(data, Stage::Raw).unwrap(),
        labels,
    }
}

/// Short documents drawn from a per-label vocabulary plus shared filler.
pub fn label_texts(labels: &[usize], seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels
        .iter()
        .map(|&c| {
            (0..12)
                .map(|_| {
                    if rng.random_bool(0.7) {
                        format!("topic{c}word{}", rng.random_range(0..8))
                    } else {
                        format!("filler{}", rng.random_range(0..20))
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// Writes a JSONL corpus; `labels` and `names` are optional.
pub fn write_corpus(
    path: &Path,
    texts: &[String],
    labels: Option<&[usize]>,
    names: Option<&[&str]>,
) {
    let mut f = std::fs::File::create(path).unwrap();
    for (i, t) in texts.iter().enumerate() {
        let mut rec = serde_json::json!({ "doc_id": format!("d{i}"), "text": t });
        if let Some(l) = labels {
            rec["gold_label"] = l[i].into();
            if let Some(n) = names {
                rec["label_name"] = n[l[i]].into();
            }
        }
        writeln!(f, "{rec}").unwrap();
    }
}
