//! Acceptance checks. Each criterion prints one PASS/FAIL line; the run
//! fails if any criterion fails.

mod common;

use std::fs;
use std::time::{Duration, Instant};

use clap::Parser;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use topiclear::cli::{run, Cli};
use topiclear::io::write_embeddings;
use topiclear::metrics::partition::{expected_mutual_information, Contingency};
use topiclear::metrics::{
    ari, expected_agreement, noise_study, rand_index_components, NoiseStudyOptions, Partition,
};
use topiclear::reduction::{lda_fit, Ridge};
use topiclear::{extract_topics, Corpus, EmbeddingMatrix, PipelineConfig, Stage, TopicAssignment};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    println!(
        "{} {name}: {} [{:.1}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
    o.pass
}

/// Pair counts `(together in both, apart in both, together only in u,
/// together only in v)` by enumerating every pair.
fn pair_counts(u: &[usize], v: &[usize]) -> (u64, u64, u64, u64) {
    let (mut n11, mut n00, mut n10, mut n01) = (0, 0, 0, 0);
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            match (u[i] == u[j], v[i] == v[j]) {
                (true, true) => n11 += 1,
                (false, false) => n00 += 1,
                (true, false) => n10 += 1,
                (false, true) => n01 += 1,
            }
        }
    }
    (n11, n00, n10, n01)
}

/// ARI from pair counts in the Hubert-Arabie form.
fn ari_from_pairs(n11: u64, n00: u64, n10: u64, n01: u64) -> f64 {
    let (n11, n00, n10, n01) = (n11 as f64, n00 as f64, n10 as f64, n01 as f64);
    let den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if den == 0.0 {
        return 1.0;
    }
    2.0 * (n00 * n11 - n01 * n10) / den
}

fn mutual_information_dense(
    u: &[usize],
    v: &[usize],
    ku: usize,
    kv: usize,
    table: &mut [u32],
) -> f64 {
    table.iter_mut().for_each(|c| *c = 0);
    let mut rows = [0u32; 8];
    let mut cols = [0u32; 8];
    for (&a, &b) in u.iter().zip(v) {
        table[a * kv + b] += 1;
        rows[a] += 1;
        cols[b] += 1;
    }
    let n = u.len() as f64;
    let mut mi = 0.0;
    for a in 0..ku {
        for b in 0..kv {
            let c = table[a * kv + b];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (rows[a] as f64 * cols[b] as f64)).ln();
            }
        }
    }
    mi
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases: Vec<(Vec<usize>, Vec<usize>, u64)> = (0..200)
        .map(|_| {
            let n = rng.random_range(2..=30);
            let ku = rng.random_range(1..=5);
            let kv = rng.random_range(1..=5);
            let u = (0..n).map(|_| rng.random_range(0..ku)).collect();
            let v = (0..n).map(|_| rng.random_range(0..kv)).collect();
            (u, v, rng.random())
        })
        .collect();
    let results: Vec<(bool, f64, f64)> = cases
        .par_iter()
        .map(|(u, v, seed)| {
            let pu = Partition::from_labels(u.clone()).unwrap();
            let pv = Partition::from_labels(v.clone()).unwrap();
            let (n11, n00, n10, n01) = pair_counts(u, v);
            let rc = rand_index_components(&pu, &pv).unwrap();
            let counts_exact = rc.a == n11 && rc.b == n00 && rc.n_pair == n11 + n00 + n10 + n01;
            let ari_err = (ari(&pu, &pv).unwrap() - ari_from_pairs(n11, n00, n10, n01)).abs();

            let t = Contingency::new(&pu, &pv).unwrap();
            let emi = expected_mutual_information(&t.row_sums, &t.col_sums, t.n);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut shuffled = v.clone();
            let mut table = vec![0u32; pu.k() * pv.k()];
            let samples = 100_000;
            let mut acc = 0.0;
            for _ in 0..samples {
                shuffled.shuffle(&mut rng);
                acc += mutual_information_dense(u, &shuffled, pu.k(), pv.k(), &mut table);
            }
            (counts_exact, ari_err, (emi - acc / samples as f64).abs())
        })
        .collect();
    let elapsed = start.elapsed();
    let counts_ok = results.iter().all(|r| r.0);
    let max_ari_err = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_emi_err = results.iter().map(|r| r.2).fold(0.0, f64::max);
    Outcome {
        pass: counts_ok && max_ari_err <= 1e-12 && max_emi_err <= 0.02 && elapsed < Duration::from_secs(60),
        detail: format!(
            "200 pairs; pair counts exact: {counts_ok}; max |ARI - pair-count ARI| = {max_ari_err:.1e}; \
             max |E[MI] - permutation mean| = {max_emi_err:.4} (tol 0.02); {:.1}s (limit 60s)",
            elapsed.as_secs_f64()
        ),
    }
}

/// `n` documents of 12 tokens. With `topical`, tokens favor a per-label
/// vocabulary; otherwise every token is uniform over one shared vocabulary.
fn synthetic_corpus(labels: &[usize], topical: bool, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texts: Vec<String> = labels
        .iter()
        .map(|&c| {
            (0..12)
                .map(|_| {
                    if topical && rng.random_bool(0.6) {
                        format!("t{c}w{}", rng.random_range(0..15))
                    } else {
                        format!("w{}", rng.random_range(0..60))
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    Corpus::from_texts(&texts)
}

fn synthetic_labels(n: usize, k: usize, seed: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Partition::new((0..n).map(|_| rng.random_range(0..k)).collect(), k).unwrap()
}

fn study_options(seed: u64) -> NoiseStudyOptions {
    NoiseStudyOptions {
        p_grid: (0..=8).map(|i| i as f64 / 10.0).collect(),
        replicates: 40,
        seed,
        ..NoiseStudyOptions::default()
    }
}

fn noise_replication() -> Outcome {
    let start = Instant::now();
    let gold = synthetic_labels(5000, 6, 1);
    let corpus = synthetic_corpus(gold.labels(), true, 2);
    let study = noise_study(&corpus, &gold, &study_options(3)).unwrap();
    let elapsed = start.elapsed();
    let rho = study.summary.spearman;
    let worst_agreement = study
        .summary
        .by_level
        .iter()
        .map(|l| (l.agreement - expected_agreement(l.p_n, 6)).abs())
        .fold(0.0, f64::max);
    let rows_ok = study.rows.len() == 9 * 40;
    Outcome {
        pass: rows_ok
            && rho.ari <= -0.95
            && rho.ami <= -0.95
            && worst_agreement <= 0.01
            && elapsed < Duration::from_secs(120),
        detail: format!(
            "N=5000 K=6, 9 levels x 40 replicates; rho(ARI) = {:.4}, rho(AMI) = {:.4} (need <= -0.95); \
             max |mean agreement - (1 - 5p/6)| = {worst_agreement:.4} (tol 0.01); {:.1}s (limit 120s)",
            rho.ari,
            rho.ami,
            elapsed.as_secs_f64()
        ),
    }
}

fn coherence_insensitivity() -> Outcome {
    let gold = synthetic_labels(5000, 6, 4);
    let corpus = synthetic_corpus(gold.labels(), false, 5);
    let study = noise_study(&corpus, &gold, &study_options(6)).unwrap();
    let rho = study.summary.spearman;
    Outcome {
        pass: rho.c_npmi > -0.5 && rho.ari <= -0.95,
        detail: format!(
            "uniform vocabulary; rho(C_NPMI) = {:.4} (need > -0.5), rho(ARI) = {:.4} (need <= -0.95); \
             rho(C_UCI) = {:.4}, rho(C_v) = {:.4}",
            rho.c_npmi, rho.ari, rho.c_uci, rho.c_v
        ),
    }
}

fn pipeline_recovery() -> Outcome {
    let b = common::blobs(2000, 6, 384, 8.0, 7);
    let start = Instant::now();
    let cfg = PipelineConfig {
        seed: 42,
        ..PipelineConfig::new(6)
    };
    let r = extract_topics(&b.x, &cfg).unwrap();
    let elapsed = start.elapsed();
    let gold = Partition::from_labels(b.labels.clone()).unwrap();
    let got = Partition::new(r.assignment.h().to_vec(), 6).unwrap();
    let score = ari(&gold, &got).unwrap();
    let traces = std::iter::once(&r.seed_gmm.log_likelihood_trace)
        .chain(r.history.iter().map(|h| &h.gmm.log_likelihood_trace));
    let worst_step = traces
        .flat_map(|t| t.windows(2).map(|w| w[1] - w[0]))
        .fold(f64::INFINITY, f64::min);
    Outcome {
        pass: score >= 0.99
            && r.converged
            && r.iterations <= 10
            && worst_step >= -1e-8
            && elapsed < Duration::from_secs(60),
        detail: format!(
            "K=6, 384-D, separation 8 sd, N=2000; ARI = {score:.4} (need >= 0.99); converged = {} after {} \
             iteration(s); smallest EM log-likelihood step = {worst_step:.2e} (need >= -1e-8); {:.1}s (limit 60s)",
            r.converged,
            r.iterations,
            elapsed.as_secs_f64()
        ),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let b = common::blobs(2000, 6, 384, 8.0, 8);
    common::write_corpus(
        &dir.path().join("c.jsonl"),
        &common::label_texts(&b.labels, 9),
        Some(&b.labels),
        None,
    );
    write_embeddings(&b.x, dir.path().join("e.bin")).unwrap();
    let run_once = |name: &str| {
        let out = dir.path().join(name);
        let corpus = dir.path().join("c.jsonl");
        let embeddings = dir.path().join("e.bin");
        let args = [
            "topiclear",
            "--threads",
            "1",
            "extract",
            "--corpus",
            corpus.to_str().unwrap(),
            "--embeddings",
            embeddings.to_str().unwrap(),
            "--seed",
            "123",
            "--out",
            out.to_str().unwrap(),
        ];
        run(Cli::try_parse_from(args).unwrap()).unwrap();
        (
            fs::read(out.join("assignment.csv")).unwrap(),
            fs::read(out.join("result.json")).unwrap(),
        )
    };
    let (a1, r1) = run_once("first");
    let (a2, r2) = run_once("second");
    Outcome {
        pass: a1 == a2 && r1 == r2,
        detail: format!(
            "assignment.csv identical: {} ({} bytes); result.json identical: {} ({} bytes)",
            a1 == a2,
            a1.len(),
            r1 == r2,
            r1.len()
        ),
    }
}

fn lda_direction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    let mut worst_default: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(2..=20);
        let mixing: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let shift = DVector::from_fn(d, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            2.0 * z
        });
        let sizes = [rng.random_range(d + 5..=60), rng.random_range(d + 5..=60)];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                let z: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let mut x = &mixing * z;
                if c == 1 {
                    x += &shift;
                }
                rows.push(x.iter().copied().collect::<Vec<f64>>());
                labels.push(c);
            }
        }
        let y = EmbeddingMatrix::from_rows(&rows, Stage::Raw).unwrap();
        let h = TopicAssignment::new(labels.clone(), None, 2).unwrap();

        let mean = |c: usize| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            let mut m = DVector::zeros(d);
            for &i in &idx {
                m += y.data().row(i).transpose();
            }
            m / idx.len() as f64
        };
        let (m0, m1) = (mean(0), mean(1));
        let mut sw = DMatrix::zeros(d, d);
        for (i, &c) in labels.iter().enumerate() {
            let diff = y.data().row(i).transpose() - if c == 0 { &m0 } else { &m1 };
            sw += &diff * diff.transpose();
        }
        let fisher = sw.lu().solve(&(m0 - m1)).unwrap();
        let angle = |v: DVector<f64>| {
            (v.dot(&fisher) / (v.norm() * fisher.norm()))
                .abs()
                .min(1.0)
                .acos()
        };
        let exact = lda_fit(&y, &h, Ridge::Absolute(0.0)).unwrap();
        worst = worst.max(angle(exact.projection.column(0).into_owned()));
        let default = lda_fit(&y, &h, Ridge::default()).unwrap();
        worst_default = worst_default.max(angle(default.projection.column(0).into_owned()));
    }
    Outcome {
        pass: worst <= 1e-4,
        detail: format!(
            "50 random 2-class problems (D in 2..=20); max angle to S_W^-1 (mu1 - mu2) = {worst:.2e} rad \
             (tol 1e-4); with the default ridge: {worst_default:.2e} rad"
        ),
    }
}

fn main() {
    let results = [
        report("metric oracle equivalence", metric_oracle),
        report("noise-study replication", noise_replication),
        report("coherence insensitivity", coherence_insensitivity),
        report("synthetic pipeline recovery", pipeline_recovery),
        report("determinism", determinism),
        report("discriminant direction", lda_direction),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
