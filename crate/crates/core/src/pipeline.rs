//! Topic extraction driver: PCA to `D` dimensions, row normalization, a
//! PCA seed to `K-1` dimensions clustered by a mixture, then alternating
//! discriminant projection and re-clustering (adaptive dimension
//! reduction) until the assignment stops changing.
//!
//! Mixture component indices are arbitrary across independent fits, so
//! assignments are compared up to relabeling. Every mixture fit is a cold
//! start whose seed is derived from the configured seed and the iteration
//! index (0 for the seeding fit).

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gmm::{gmm_fit, gmm_posteriors, GmmModel, GmmOptions};
use crate::io::{EmbeddingMatrix, Stage, TopicAssignment};
use crate::metrics::same_up_to_relabeling;
use crate::reduction::{
    l2_normalize, lda_fit, lda_transform, pca_fit, pca_transform, LdaModel, PcaModel, Ridge,
};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct PipelineConfig {
    /// Topic count K.
    pub k: usize,
    /// Intermediate feature dimension D.
    pub d: usize,
    pub max_adr_iter: usize,
    pub seed: u64,
    pub gmm: GmmOptions,
    pub lda_reg: Ridge,
}

impl PipelineConfig {
    pub const DEFAULT_D: usize = 64;
    pub const DEFAULT_MAX_ADR_ITER: usize = 10;

    pub fn new(k: usize) -> Self {
        Self {
            k,
            d: Self::DEFAULT_D,
            max_adr_iter: Self::DEFAULT_MAX_ADR_ITER,
            seed: 0,
            gmm: GmmOptions::default(),
            lda_reg: Ridge::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!(
                "K = {} must be at least 2",
                self.k
            )));
        }
        if self.d < self.k {
            return Err(Error::InvalidArgument(format!(
                "D = {} must be at least K = {}",
                self.d, self.k
            )));
        }
        if self.max_adr_iter == 0 {
            return Err(Error::InvalidArgument(
                "max_adr_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics of one mixture fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmDiagnostics {
    pub seed: u64,
    pub n_iter: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub log_likelihood_trace: Vec<f64>,
    pub reseeded_components: usize,
}

impl From<&GmmModel> for GmmDiagnostics {
    fn from(m: &GmmModel) -> Self {
        Self {
            seed: m.seed,
            n_iter: m.n_iter,
            converged: m.converged,
            log_likelihood: m.final_log_likelihood(),
            log_likelihood_trace: m.log_likelihood_trace.clone(),
            reseeded_components: m.reseeded,
        }
    }
}

/// One discriminant-projection + re-clustering round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Documents whose topic changed, after aligning labels with the
    /// previous assignment.
    pub changed_count: usize,
    pub gmm_log_likelihood: f64,
    pub trace_ratio: f64,
    pub gmm: GmmDiagnostics,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// Final topics, relabeled by descending topic size.
    pub assignment: TopicAssignment,
    pub iterations: usize,
    pub converged: bool,
    pub seed_gmm: GmmDiagnostics,
    pub history: Vec<IterationRecord>,
    pub pca: PcaModel,
    pub seed_pca: PcaModel,
    /// Last discriminant projection.
    pub lda: LdaModel,
    /// Last mixture, components permuted to match `assignment`.
    pub gmm: GmmModel,
}

/// Number of documents outside a greedy one-to-one alignment of the labels
/// of `prev` and `next` (largest overlaps first). Zero iff the two agree up
/// to relabeling.
pub fn changed_count(prev: &[usize], next: &[usize], k: usize) -> usize {
    let mut table = vec![vec![0usize; k]; k];
    for (&a, &b) in prev.iter().zip(next) {
        table[a][b] += 1;
    }
    let mut cells: Vec<(usize, usize, usize)> = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .map(|(a, b)| (table[a][b], a, b))
        .filter(|c| c.0 > 0)
        .collect();
    cells.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (vec![false; k], vec![false; k]);
    let mut matched = 0;
    for (count, a, b) in cells {
        if !used_a[a] && !used_b[b] {
            used_a[a] = true;
            used_b[b] = true;
            matched += count;
        }
    }
    prev.len() - matched
}

/// Permutation mapping old topic index to new index so that topics are
/// ordered by descending size, ties by first appearance.
fn size_order(h: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; k];
    let mut first = vec![usize::MAX; k];
    for (i, &t) in h.iter().enumerate() {
        sizes[t] += 1;
        first[t] = first[t].min(i);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(first[a].cmp(&first[b])));
    let mut new_of_old = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        new_of_old[old] = new;
    }
    new_of_old
}

fn relabel(a: &TopicAssignment, gmm: &GmmModel) -> Result<(TopicAssignment, GmmModel)> {
    let k = a.k();
    let new_of_old = size_order(a.h(), k);
    let h = a.h().iter().map(|&t| new_of_old[t]).collect();
    let gamma = a.gamma().map(|g| {
        let mut out = DMatrix::zeros(g.nrows(), k);
        for old in 0..k {
            out.set_column(new_of_old[old], &g.column(old));
        }
        out
    });
    let mut model = gmm.clone();
    for old in 0..k {
        let new = new_of_old[old];
        model.weights[new] = gmm.weights[old];
        model.means.set_row(new, &gmm.means.row(old));
        model.covariances[new] = gmm.covariances[old].clone();
    }
    Ok((TopicAssignment::new(h, gamma, k)?, model))
}

/// Output of one discriminant + mixture round.
#[derive(Debug, Clone)]
pub struct AdrStep {
    pub lda: LdaModel,
    pub features: EmbeddingMatrix,
    pub gmm: GmmModel,
    pub assignment: TopicAssignment,
}

/// One round: discriminant projection of `y_d` under `h`, then a fresh
/// mixture fit seeded for `iteration`.
pub fn adr_step(
    y_d: &EmbeddingMatrix,
    h: &TopicAssignment,
    cfg: &PipelineConfig,
    iteration: usize,
) -> Result<AdrStep> {
    let lda = lda_fit(y_d, h, cfg.lda_reg)?;
    let features = lda_transform(&lda, y_d)?;
    let gmm = gmm_fit(
        &features,
        cfg.k,
        derive_seed(cfg.seed, iteration as u64),
        &cfg.gmm,
    )?;
    let assignment = gmm_posteriors(&gmm, &features)?;
    Ok(AdrStep {
        lda,
        features,
        gmm,
        assignment,
    })
}

/// Normalized `D`-dimensional features `Y_D` and the PCA that produced them.
pub fn normalized_features(
    x_raw: &EmbeddingMatrix,
    d: usize,
) -> Result<(PcaModel, EmbeddingMatrix)> {
    let pca = pca_fit(x_raw, d)?;
    let x_d = pca_transform(&pca, x_raw)?;
    Ok((pca, l2_normalize(&x_d)?))
}

/// Runs the full extraction on raw document embeddings.
pub fn extract_topics(x_raw: &EmbeddingMatrix, cfg: &PipelineConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    if x_raw.stage() != Stage::Raw {
        return Err(Error::InvalidArgument(format!(
            "expected raw embeddings, found stage {:?}",
            x_raw.stage()
        )));
    }
    if x_raw.n_docs() < cfg.k {
        return Err(Error::InvalidArgument(format!(
            "{} documents cannot fill K = {} topics",
            x_raw.n_docs(),
            cfg.k
        )));
    }
    if x_raw.dim() < cfg.d {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension {} is below D = {}",
            x_raw.dim(),
            cfg.d
        )));
    }

    let (pca, y_d) = normalized_features(x_raw, cfg.d)?;
    let seed_pca = pca_fit(&y_d, cfg.k - 1)?;
    let y_seed = pca_transform(&seed_pca, &y_d)?.with_stage(Stage::FeatureK1)?;
    let mut gmm = gmm_fit(&y_seed, cfg.k, derive_seed(cfg.seed, 0), &cfg.gmm)?;
    let mut h = gmm_posteriors(&gmm, &y_seed)?;
    let seed_gmm = GmmDiagnostics::from(&gmm);
    log::info!(
        "seed mixture: {} EM iterations, log-likelihood {:.6}",
        gmm.n_iter,
        gmm.final_log_likelihood()
    );

    let mut history = Vec::new();
    let mut lda = None;
    let mut converged = false;
    for iteration in 1..=cfg.max_adr_iter {
        let step = adr_step(&y_d, &h, cfg, iteration)?;
        let changed = changed_count(h.h(), step.assignment.h(), cfg.k);
        let same = same_up_to_relabeling(h.h(), step.assignment.h());
        history.push(IterationRecord {
            iteration,
            changed_count: changed,
            gmm_log_likelihood: step.gmm.final_log_likelihood(),
            trace_ratio: step.lda.trace_ratio,
            gmm: GmmDiagnostics::from(&step.gmm),
        });
        log::info!("iteration {iteration}: {changed} documents changed topic");
        h = step.assignment;
        gmm = step.gmm;
        lda = Some(step.lda);
        if same {
            converged = true;
            break;
        }
    }
    let (assignment, gmm) = relabel(&h, &gmm)?;
    Ok(PipelineResult {
        assignment,
        iterations: history.len(),
        converged,
        seed_gmm,
        history,
        pca,
        seed_pca,
        lda: lda.expect("max_adr_iter >= 1"),
        gmm,
    })
}
