//! Full-covariance Gaussian mixture fitted by expectation-maximization.
//!
//! Initialization runs seeded k-means (k-means++ seeding, 10 Lloyd steps)
//! and turns the hard labels into a first M-step. Every M-step adds
//! `reg_covar` to each covariance diagonal. Responsibilities are computed
//! in log space with per-row max subtraction.
//!
//! The E-step is row-parallel; every row is computed independently and all
//! reductions run sequentially in row order, so results do not depend on
//! the worker count.

pub mod kmeans;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{argmax, EmbeddingMatrix, TopicAssignment};
use crate::seed::derive_seed;

const KMEANS_ITERATIONS: usize = 10;
/// Responsibility mass below which a component is considered empty.
const EMPTY_COMPONENT_MASS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GmmOptions {
    pub max_iter: usize,
    /// Convergence threshold on the change of the mean log-likelihood.
    pub tol: f64,
    pub reg_covar: f64,
    pub n_init: usize,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-3,
            reg_covar: 1e-6,
            n_init: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    /// `k × d`.
    pub means: DMatrix<f64>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Mean log-likelihood of the data under the initial parameters and
    /// after every M-step.
    pub log_likelihood_trace: Vec<f64>,
    pub n_iter: usize,
    pub converged: bool,
    pub seed: u64,
    /// Number of times an empty component was re-seeded.
    pub reseeded: usize,
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// Mean log-likelihood under the final parameters.
    pub fn final_log_likelihood(&self) -> f64 {
        *self
            .log_likelihood_trace
            .last()
            .unwrap_or(&f64::NEG_INFINITY)
    }
}

/// Cholesky factors and log-determinants for fast density evaluation.
struct Prepared {
    log_weights: Vec<f64>,
    chol: Vec<DMatrix<f64>>,
    log_det: Vec<f64>,
}

fn prepare(weights: &[f64], covariances: &[DMatrix<f64>]) -> Result<Prepared> {
    let mut chol = Vec::with_capacity(covariances.len());
    let mut log_det = Vec::with_capacity(covariances.len());
    for (k, cov) in covariances.iter().enumerate() {
        let l = cov
            .clone()
            .cholesky()
            .ok_or_else(|| {
                Error::Numerical(format!(
                    "covariance of component {k} is not positive definite"
                ))
            })?
            .l();
        log_det.push(2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>());
        chol.push(l);
    }
    Ok(Prepared {
        log_weights: weights.iter().map(|w| w.ln()).collect(),
        chol,
        log_det,
    })
}

/// `log π_k + log N(x_n; μ_k, Σ_k)` for all rows and components.
fn weighted_log_prob(x: &DMatrix<f64>, means: &DMatrix<f64>, p: &Prepared) -> Vec<Vec<f64>> {
    let d = x.ncols();
    let k = means.nrows();
    let log_norm = d as f64 * (2.0 * PI).ln();
    (0..x.nrows())
        .into_par_iter()
        .map(|n| {
            let mut z = vec![0.0; d];
            (0..k)
                .map(|c| {
                    let l = &p.chol[c];
                    // forward substitution L z = x - μ
                    let mut maha = 0.0;
                    for i in 0..d {
                        let mut v = x[(n, i)] - means[(c, i)];
                        for j in 0..i {
                            v -= l[(i, j)] * z[j];
                        }
                        z[i] = v / l[(i, i)];
                        maha += z[i] * z[i];
                    }
                    p.log_weights[c] - 0.5 * (log_norm + p.log_det[c] + maha)
                })
                .collect()
        })
        .collect()
}

/// Normalizes weighted log-probabilities into log-responsibilities and
/// returns the mean log-likelihood.
fn normalize_rows(mut lp: Vec<Vec<f64>>) -> (f64, Vec<Vec<f64>>) {
    let mut total = 0.0;
    for row in lp.iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
        total += lse;
    }
    let n = lp.len().max(1) as f64;
    (total / n, lp)
}

struct Params {
    weights: Vec<f64>,
    means: DMatrix<f64>,
    covariances: Vec<DMatrix<f64>>,
}

fn pooled_covariance(x: &DMatrix<f64>, reg: f64) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut r in c.row_iter_mut() {
        r -= &mean;
    }
    let mut cov = c.transpose() * c / n;
    for i in 0..cov.nrows() {
        cov[(i, i)] += reg;
    }
    cov
}

/// M-step. Components whose responsibility mass vanished are re-seeded at
/// the worst-explained points with the pooled covariance.
fn m_step(x: &DMatrix<f64>, resp: &DMatrix<f64>, reg: f64, reseeded: &mut usize) -> Params {
    let (n, d) = (x.nrows(), x.ncols());
    let k = resp.ncols();
    let eps10 = 10.0 * f64::EPSILON;
    let mut nk: Vec<f64> = (0..k).map(|c| resp.column(c).sum() + eps10).collect();
    let mut means = DMatrix::zeros(k, d);
    let mut covariances = Vec::with_capacity(k);

    let empty: Vec<usize> = (0..k).filter(|&c| nk[c] < EMPTY_COMPONENT_MASS).collect();
    let mut reseed_rows = Vec::new();
    if !empty.is_empty() {
        let mut by_confidence: Vec<(usize, f64)> = (0..n)
            .map(|i| {
                (
                    i,
                    resp.row(i)
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max),
                )
            })
            .collect();
        by_confidence.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        reseed_rows = by_confidence
            .iter()
            .take(empty.len())
            .map(|p| p.0)
            .collect();
    }
    let pooled = (!empty.is_empty()).then(|| pooled_covariance(x, reg));

    for c in 0..k {
        if let Some(slot) = empty.iter().position(|&e| e == c) {
            let row = reseed_rows[slot % reseed_rows.len()];
            means.set_row(c, &x.row(row));
            covariances.push(pooled.clone().expect("pooled covariance computed"));
            nk[c] = 1.0;
            *reseeded += 1;
            log::debug!("re-seeded empty mixture component {c} at row {row}");
            continue;
        }
        let w = resp.column(c);
        let mean = x.tr_mul(&w) / nk[c];
        means.set_row(c, &mean.transpose());
        let mut diff = x.clone();
        for (i, mut r) in diff.row_iter_mut().enumerate() {
            r -= mean.transpose();
            r *= w[i].sqrt();
        }
        let mut cov = diff.tr_mul(&diff) / nk[c];
        for i in 0..d {
            cov[(i, i)] += reg;
        }
        covariances.push((&cov + cov.transpose()) * 0.5);
    }
    let total: f64 = nk.iter().sum();
    let weights = nk.iter().map(|v| v / total).collect();
    Params {
        weights,
        means,
        covariances,
    }
}

fn resp_matrix(log_resp: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(log_resp.len(), k, |i, j| log_resp[i][j].exp())
}

fn fit_once(x: &DMatrix<f64>, k: usize, seed: u64, opts: &GmmOptions) -> Result<GmmModel> {
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = kmeans::kmeans_labels(x, k, KMEANS_ITERATIONS, &mut rng);
    let mut reseeded = 0;
    let init = DMatrix::from_fn(n, k, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
    let mut params = m_step(x, &init, opts.reg_covar, &mut reseeded);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut n_iter = 0;
    let mut prev = f64::NEG_INFINITY;
    for iter in 1..=opts.max_iter {
        n_iter = iter;
        let prepared = prepare(&params.weights, &params.covariances)?;
        let (ll, log_resp) = normalize_rows(weighted_log_prob(x, &params.means, &prepared));
        if !ll.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite log-likelihood at EM iteration {iter}"
            )));
        }
        trace.push(ll);
        params = m_step(x, &resp_matrix(&log_resp, k), opts.reg_covar, &mut reseeded);
        if (ll - prev).abs() < opts.tol {
            converged = true;
            break;
        }
        prev = ll;
    }
    let prepared = prepare(&params.weights, &params.covariances)?;
    let (ll, _) = normalize_rows(weighted_log_prob(x, &params.means, &prepared));
    if !ll.is_finite() {
        return Err(Error::Numerical("non-finite final log-likelihood".into()));
    }
    trace.push(ll);

    Ok(GmmModel {
        k,
        weights: params.weights,
        means: params.means,
        covariances: params.covariances,
        log_likelihood_trace: trace,
        n_iter,
        converged,
        seed,
        reseeded,
    })
}

/// Fits a `k`-component mixture. With `n_init > 1` every restart uses a
/// seed derived from `seed` and the restart with the highest final mean
/// log-likelihood wins (first on ties).
pub fn gmm_fit(y: &EmbeddingMatrix, k: usize, seed: u64, opts: &GmmOptions) -> Result<GmmModel> {
    if k == 0 || k > y.n_docs() {
        return Err(Error::InvalidArgument(format!(
            "component count {k} must lie in [1, {}]",
            y.n_docs()
        )));
    }
    if y.dim() == 0 {
        return Err(Error::InvalidArgument("data has zero columns".into()));
    }
    if opts.max_iter == 0
        || opts.n_init == 0
        || opts.reg_covar.is_nan()
        || opts.reg_covar < 0.0
        || opts.tol.is_nan()
        || opts.tol < 0.0
    {
        return Err(Error::InvalidArgument(format!(
            "invalid mixture options {opts:?}"
        )));
    }
    let mut best: Option<GmmModel> = None;
    for restart in 0..opts.n_init {
        let s = if opts.n_init == 1 {
            seed
        } else {
            derive_seed(seed, restart as u64)
        };
        let model = fit_once(y.data(), k, s, opts)?;
        if best
            .as_ref()
            .is_none_or(|b| model.final_log_likelihood() > b.final_log_likelihood())
        {
            best = Some(model);
        }
    }
    let mut model = best.expect("n_init >= 1");
    model.seed = seed;
    Ok(model)
}

/// Posterior responsibilities and maximum-posterior hard assignment.
pub fn gmm_posteriors(model: &GmmModel, y: &EmbeddingMatrix) -> Result<TopicAssignment> {
    if y.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: y.dim(),
        });
    }
    let prepared = prepare(&model.weights, &model.covariances)?;
    let (_, log_resp) = normalize_rows(weighted_log_prob(y.data(), &model.means, &prepared));
    let k = model.k;
    let mut gamma = resp_matrix(&log_resp, k);
    let mut h = Vec::with_capacity(y.n_docs());
    for mut row in gamma.row_iter_mut() {
        let s: f64 = row.iter().sum();
        row /= s;
        h.push(argmax(row.iter().copied()));
    }
    TopicAssignment::new(h, Some(gamma), k)
}

/// Mean log-likelihood of `y` under `model`.
pub fn mean_log_likelihood(model: &GmmModel, y: &EmbeddingMatrix) -> Result<f64> {
    let prepared = prepare(&model.weights, &model.covariances)?;
    Ok(normalize_rows(weighted_log_prob(y.data(), &model.means, &prepared)).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::Stage;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn emb(data: DMatrix<f64>) -> EmbeddingMatrix {
        EmbeddingMatrix::new(data, Stage::FeatureK1).unwrap()
    }

    fn normal_density(x: f64, mu: f64, var: f64) -> f64 {
        (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    #[test]
    fn single_component_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(60, 3, |_, j| rng.random::<f64>() * (j + 1) as f64);
        let m = gmm_fit(&emb(x.clone()), 1, 0, &GmmOptions::default()).unwrap();
        assert_eq!(m.weights, vec![1.0]);
        let mean = x.row_mean();
        assert!((m.means.row(0) - &mean).abs().max() < 1e-8);
        let mut c = x.clone();
        for mut r in c.row_iter_mut() {
            r -= &mean;
        }
        let cov = c.transpose() * c / 60.0 + DMatrix::identity(3, 3) * 1e-6;
        assert!((&m.covariances[0] - cov).abs().max() < 1e-8);
    }

    fn two_blobs(seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut truth = Vec::new();
        let x = DMatrix::from_fn(200, 2, |i, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if i < 100 {
                z
            } else {
                100.0 + z
            }
        });
        for i in 0..200 {
            truth.push(usize::from(i >= 100));
        }
        (x, truth)
    }

    #[test]
    fn recovers_two_far_blobs() {
        let (x, truth) = two_blobs(2);
        let m = gmm_fit(&emb(x.clone()), 2, 7, &GmmOptions::default()).unwrap();
        let post = gmm_posteriors(&m, &emb(x)).unwrap();
        let h = post.h();
        let same = h.iter().zip(&truth).all(|(a, b)| a == b);
        let flipped = h.iter().zip(&truth).all(|(a, b)| *a != *b);
        assert!(same || flipped);
        for c in 0..2 {
            let near_origin = m.means.row(c).norm() < 0.5;
            let near_far = (m.means.row(c) - DMatrix::from_element(1, 2, 100.0)).norm() < 0.5;
            assert!(near_origin || near_far, "mean {c}: {}", m.means.row(c));
        }
    }

    #[test]
    fn log_likelihood_is_monotone() {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40 + (seed as usize % 5) * 20;
            let d = 1 + seed as usize % 3;
            let k = 2 + seed as usize % 3;
            let x = DMatrix::from_fn(n, d, |i, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + (i % k) as f64 * 2.0
            });
            let opts = GmmOptions {
                tol: 1e-10,
                ..GmmOptions::default()
            };
            let m = gmm_fit(&emb(x), k, seed, &opts).unwrap();
            for w in m.log_likelihood_trace.windows(2) {
                assert!(w[1] - w[0] >= -1e-8, "seed {seed}: {} -> {}", w[0], w[1]);
            }
            assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for c in &m.covariances {
                assert!((c - c.transpose()).abs().max() < 1e-9);
                assert!(c.clone().cholesky().is_some());
            }
        }
    }

    #[test]
    fn posterior_one_hot_at_separated_mean() {
        let (x, _) = two_blobs(3);
        let m = gmm_fit(&emb(x), 2, 1, &GmmOptions::default()).unwrap();
        let at_mean = emb(m.means.clone());
        let post = gmm_posteriors(&m, &at_mean).unwrap();
        let g = post.gamma().unwrap();
        for j in 0..2 {
            assert!(g[(j, j)] > 0.999);
            assert_eq!(post.h()[j], j);
        }
    }

    #[test]
    fn identical_components_give_uniform_posteriors() {
        let model = GmmModel {
            k: 3,
            weights: vec![1.0 / 3.0; 3],
            means: DMatrix::from_element(3, 2, 0.5),
            covariances: vec![DMatrix::identity(2, 2); 3],
            log_likelihood_trace: vec![],
            n_iter: 0,
            converged: true,
            seed: 0,
            reseeded: 0,
        };
        let y = emb(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 5.0, -3.0]));
        let post = gmm_posteriors(&model, &y).unwrap();
        for v in post.gamma().unwrap().iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(post.h(), &[0, 0]);
    }

    #[test]
    fn posteriors_match_direct_density_formula() {
        let model = GmmModel {
            k: 2,
            weights: vec![0.3, 0.7],
            means: DMatrix::from_row_slice(2, 1, &[-1.0, 2.0]),
            covariances: vec![
                DMatrix::from_element(1, 1, 0.5),
                DMatrix::from_element(1, 1, 2.0),
            ],
            log_likelihood_trace: vec![],
            n_iter: 0,
            converged: true,
            seed: 0,
            reseeded: 0,
        };
        let xs = [-3.0, -1.0, 0.0, 0.4, 1.0, 2.5, 6.0];
        let y = emb(DMatrix::from_row_slice(xs.len(), 1, &xs));
        let post = gmm_posteriors(&model, &y).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let a = 0.3 * normal_density(x, -1.0, 0.5);
            let b = 0.7 * normal_density(x, 2.0, 2.0);
            let g = post.gamma().unwrap();
            assert!((g[(i, 0)] - a / (a + b)).abs() < 1e-10);
            assert!((g[(i, 1)] - b / (a + b)).abs() < 1e-10);
        }
    }

    #[test]
    fn permuting_rows_permutes_posteriors() {
        let (x, _) = two_blobs(4);
        let m = gmm_fit(&emb(x.clone()), 2, 3, &GmmOptions::default()).unwrap();
        let perm: Vec<usize> = (0..200).rev().collect();
        let xp = DMatrix::from_fn(200, 2, |i, j| x[(perm[i], j)]);
        let a = gmm_posteriors(&m, &emb(x)).unwrap();
        let b = gmm_posteriors(&m, &emb(xp)).unwrap();
        for i in 0..200 {
            assert_eq!(a.h()[perm[i]], b.h()[i]);
            assert_eq!(a.gamma().unwrap().row(perm[i]), b.gamma().unwrap().row(i));
        }
    }

    #[test]
    fn fit_is_reproducible_and_restarts_pick_best() {
        let (x, _) = two_blobs(5);
        let a = gmm_fit(&emb(x.clone()), 3, 11, &GmmOptions::default()).unwrap();
        let b = gmm_fit(&emb(x.clone()), 3, 11, &GmmOptions::default()).unwrap();
        assert_eq!(a, b);
        let opts = GmmOptions {
            n_init: 4,
            ..GmmOptions::default()
        };
        let best = gmm_fit(&emb(x.clone()), 3, 11, &opts).unwrap();
        for r in 0..4 {
            let single = fit_once(&x, 3, derive_seed(11, r), &opts).unwrap();
            assert!(best.final_log_likelihood() >= single.final_log_likelihood());
        }
    }

    #[test]
    fn empty_component_is_reseeded() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.1, 50.0, 50.1]);
        // responsibilities that leave component 2 empty
        let resp = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 0.0, 0.6, 0.4, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        );
        let mut reseeded = 0;
        let p = m_step(&x, &resp, 1e-6, &mut reseeded);
        assert_eq!(reseeded, 1);
        // row 1 has the lowest max-posterior
        assert_eq!(p.means[(2, 0)], 0.1);
        assert!(p.weights.iter().all(|&w| w > 0.0));
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_arguments() {
        let x = emb(DMatrix::zeros(3, 2));
        assert!(gmm_fit(&x, 4, 0, &GmmOptions::default()).is_err());
        assert!(gmm_fit(&x, 0, 0, &GmmOptions::default()).is_err());
        let m = gmm_fit(
            &emb(DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0])),
            1,
            0,
            &GmmOptions::default(),
        )
        .unwrap();
        assert!(gmm_posteriors(&m, &x).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn posteriors_are_distributions(
                n in 6usize..30,
                k in 1usize..4,
                values in prop::collection::vec(-5.0f64..5.0, 60),
                seed in 0u64..1000,
            ) {
                let data = DMatrix::from_fn(n, 2, |i, j| values[(i * 2 + j) % values.len()] + i as f64 * 0.01);
                let y = EmbeddingMatrix::new(data, Stage::FeatureK1).unwrap();
                let model = gmm_fit(&y, k, seed, &GmmOptions::default()).unwrap();
                let a = gmm_posteriors(&model, &y).unwrap();
                let g = a.gamma().unwrap();
                for i in 0..n {
                    prop_assert!((g.row(i).sum() - 1.0).abs() < 1e-9);
                    prop_assert!(g.row(i).iter().all(|&p| (0.0..=1.0).contains(&p)));
                }
                prop_assert!((model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(model.log_likelihood_trace.windows(2).all(|w| w[1] - w[0] >= -1e-8));
            }
        }
    }
}
