//! Uniform label noise and the robustness study built on it: corrupt the
//! gold labels at increasing rates and watch how each measure responds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coherence::{
    build_cooccurrence_for, coherence, Measure, CV_WINDOW, DEFAULT_EPS, UCI_WINDOW,
};
use super::partition::{ami, ari, Partition};
use super::rank::spearman_rho;
use super::words::top_words;
use crate::error::{Error, Result};
use crate::io::Corpus;
use crate::seed::derive_seed;

/// Replaces each label, with probability `p_n`, by a uniform draw over
/// `0..k` (which may return the original label). The result has
/// `max(k, u.k())` clusters.
pub fn apply_label_noise(u: &Partition, p_n: f64, k: usize, seed: u64) -> Result<Partition> {
    if !(0.0..=1.0).contains(&p_n) {
        return Err(Error::NoiseOutOfRange(p_n));
    }
    if k == 0 {
        return Err(Error::InvalidArgument(
            "noise needs at least one label".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = u
        .labels()
        .iter()
        .map(|&l| {
            if rng.random::<f64>() < p_n {
                rng.random_range(0..k)
            } else {
                l
            }
        })
        .collect();
    Partition::new(labels, k.max(u.k()))
}

/// Fraction of items carrying the same label in both partitions.
pub fn agreement(u: &Partition, v: &Partition) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let same = u
        .labels()
        .iter()
        .zip(v.labels())
        .filter(|(a, b)| a == b)
        .count();
    Ok(same as f64 / u.len() as f64)
}

/// Expected agreement after noise at rate `p_n` over `k` labels.
pub fn expected_agreement(p_n: f64, k: usize) -> f64 {
    1.0 - (k as f64 - 1.0) / k as f64 * p_n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudyOptions {
    pub p_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    /// Words per topic used for coherence.
    pub top_n: usize,
    pub eps: f64,
}

impl Default for NoiseStudyOptions {
    fn default() -> Self {
        Self {
            p_grid: (0..=8).map(|i| i as f64 / 10.0).collect(),
            replicates: 40,
            seed: 0,
            top_n: 10,
            eps: DEFAULT_EPS,
        }
    }
}

/// One `(p_n, replicate)` evaluation against the clean labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub p_n: f64,
    pub replicate: usize,
    pub ari: f64,
    pub ami: f64,
    pub c_uci: f64,
    pub c_npmi: f64,
    pub c_v: f64,
    #[serde(skip)]
    pub agreement: f64,
}

/// Measures averaged over the replicates of one noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseLevelMean {
    pub p_n: f64,
    pub ari: f64,
    pub ami: f64,
    pub c_uci: f64,
    pub c_npmi: f64,
    pub c_v: f64,
    pub agreement: f64,
    pub expected_agreement: f64,
}

/// Spearman correlation between `p_n` and each measure over all rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseCorrelations {
    pub ari: f64,
    pub ami: f64,
    pub c_uci: f64,
    pub c_npmi: f64,
    pub c_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSummary {
    pub n_docs: usize,
    pub k: usize,
    pub replicates: usize,
    pub seed: u64,
    pub spearman: NoiseCorrelations,
    pub by_level: Vec<NoiseLevelMean>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStudy {
    /// Rows in `(p_n, replicate)` order.
    pub rows: Vec<NoiseRow>,
    pub summary: NoiseSummary,
}

fn correlation_or_nan(x: &[f64], y: &[f64], name: &str) -> Result<f64> {
    match spearman_rho(x, y) {
        Ok(r) => Ok(r),
        Err(Error::ConstantInput) => {
            log::warn!("{name} is constant across the study; correlation undefined");
            Ok(f64::NAN)
        }
        Err(e) => Err(e),
    }
}

/// Runs the label-noise study. Replicate `r` at grid position `i` uses seed
/// `derive_seed(derive_seed(seed, i), r)`, so results do not depend on the
/// thread count. Coherence is scored on the top words of each noised
/// assignment against co-occurrence statistics of the whole corpus.
pub fn noise_study(
    corpus: &Corpus,
    gold: &Partition,
    opts: &NoiseStudyOptions,
) -> Result<NoiseStudy> {
    if corpus.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: corpus.len(),
            right: gold.len(),
        });
    }
    if opts.replicates == 0 || opts.p_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "noise study needs a grid and at least one replicate".into(),
        ));
    }
    if let Some(&p) = opts.p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::NoiseOutOfRange(p));
    }
    let k = gold.k();
    let jobs: Vec<(usize, usize)> = (0..opts.p_grid.len())
        .flat_map(|i| (0..opts.replicates).map(move |r| (i, r)))
        .collect();

    struct Replicate {
        ari: f64,
        ami: f64,
        agreement: f64,
        words: Vec<Vec<String>>,
    }
    let replicates: Vec<Replicate> = jobs
        .par_iter()
        .map(|&(i, r)| -> Result<Replicate> {
            let seed = derive_seed(derive_seed(opts.seed, i as u64), r as u64);
            let noised = apply_label_noise(gold, opts.p_grid[i], k, seed)?;
            Ok(Replicate {
                ari: ari(gold, &noised)?,
                ami: ami(gold, &noised)?,
                agreement: agreement(gold, &noised)?,
                words: top_words(corpus, &noised, opts.top_n)?.word_lists(),
            })
        })
        .collect::<Result<_>>()?;

    let mut vocab: Vec<&str> = replicates
        .iter()
        .flat_map(|r| r.words.iter().flatten().map(String::as_str))
        .collect();
    vocab.sort_unstable();
    vocab.dedup();
    let uci_stats = build_cooccurrence_for(corpus, UCI_WINDOW, &vocab)?;
    let cv_stats = build_cooccurrence_for(corpus, CV_WINDOW, &vocab)?;

    let rows: Vec<NoiseRow> = jobs
        .par_iter()
        .zip(replicates.par_iter())
        .map(|(&(i, r), rep)| -> Result<NoiseRow> {
            Ok(NoiseRow {
                p_n: opts.p_grid[i],
                replicate: r,
                ari: rep.ari,
                ami: rep.ami,
                c_uci: coherence(&rep.words, &uci_stats, Measure::Uci, opts.eps)?,
                c_npmi: coherence(&rep.words, &uci_stats, Measure::Npmi, opts.eps)?,
                c_v: coherence(&rep.words, &cv_stats, Measure::Cv, opts.eps)?,
                agreement: rep.agreement,
            })
        })
        .collect::<Result<_>>()?;

    let col = |f: fn(&NoiseRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let p = col(|r| r.p_n);
    let spearman = NoiseCorrelations {
        ari: correlation_or_nan(&p, &col(|r| r.ari), "ARI")?,
        ami: correlation_or_nan(&p, &col(|r| r.ami), "AMI")?,
        c_uci: correlation_or_nan(&p, &col(|r| r.c_uci), "C_UCI")?,
        c_npmi: correlation_or_nan(&p, &col(|r| r.c_npmi), "C_NPMI")?,
        c_v: correlation_or_nan(&p, &col(|r| r.c_v), "C_v")?,
    };
    let by_level = rows
        .chunks(opts.replicates)
        .map(|chunk| {
            let mean =
                |f: fn(&NoiseRow) -> f64| chunk.iter().map(f).sum::<f64>() / chunk.len() as f64;
            NoiseLevelMean {
                p_n: chunk[0].p_n,
                ari: mean(|r| r.ari),
                ami: mean(|r| r.ami),
                c_uci: mean(|r| r.c_uci),
                c_npmi: mean(|r| r.c_npmi),
                c_v: mean(|r| r.c_v),
                agreement: mean(|r| r.agreement),
                expected_agreement: expected_agreement(chunk[0].p_n, k),
            }
        })
        .collect();
    Ok(NoiseStudy {
        rows,
        summary: NoiseSummary {
            n_docs: gold.len(),
            k,
            replicates: opts.replicates,
            seed: opts.seed,
            spearman,
            by_level,
        },
    })
}
