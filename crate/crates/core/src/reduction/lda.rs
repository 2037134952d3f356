use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::pca::fix_column_signs;
use crate::error::{Error, Result};
use crate::io::{EmbeddingMatrix, Stage, TopicAssignment};

/// Ridge added to the within-class scatter before solving.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Ridge {
    /// `reg · I`.
    Absolute(f64),
    /// `factor · trace(S_W) / D · I`.
    RelativeToTrace(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::RelativeToTrace(1e-6)
    }
}

/// Fitted Fisher discriminant projection.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// `D × (K-1)`; columns are generalized eigenvectors of
    /// `(S_W + reg·I, S_B)` in descending eigenvalue order.
    pub projection: DMatrix<f64>,
    pub k: usize,
    /// Absolute ridge actually added to `S_W`.
    pub regularization: f64,
    /// Generalized eigenvalues for the retained columns.
    pub eigenvalues: Vec<f64>,
    /// `tr(WᵀS_B W) / tr(WᵀS_W W)` at the returned projection.
    pub trace_ratio: f64,
    pub populated_classes: usize,
}

/// Within-class and between-class scatter of `y` under labels `h`.
#[derive(Debug, Clone)]
pub struct Scatter {
    pub within: DMatrix<f64>,
    pub between: DMatrix<f64>,
    pub class_sizes: Vec<usize>,
}

/// Accumulates S_W and S_B over the populated classes of `h`.
pub fn scatter_matrices(y: &DMatrix<f64>, h: &[usize], k: usize) -> Result<Scatter> {
    let (n, d) = (y.nrows(), y.ncols());
    if h.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: h.len(),
        });
    }
    let mut sizes = vec![0usize; k];
    let mut sums = DMatrix::zeros(k, d);
    for (row, &c) in h.iter().enumerate() {
        if c >= k {
            return Err(Error::TopicOutOfRange { topic: c, row, k });
        }
        sizes[c] += 1;
        let mut s = sums.row_mut(c);
        s += y.row(row);
    }
    let global: DVector<f64> = y.row_mean().transpose();
    let mut centered = y.clone();
    for (row, &c) in h.iter().enumerate() {
        let mean = sums.row(c) / sizes[c] as f64;
        let mut r = centered.row_mut(row);
        r -= mean;
    }
    let within = centered.transpose() * &centered;

    let mut between = DMatrix::zeros(d, d);
    for c in (0..k).filter(|&c| sizes[c] > 0) {
        let diff: DVector<f64> = (sums.row(c) / sizes[c] as f64).transpose() - &global;
        between.ger(sizes[c] as f64, &diff, &diff, 1.0);
    }
    if within.iter().chain(between.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite scatter matrix".into()));
    }
    Ok(Scatter {
        within,
        between,
        class_sizes: sizes,
    })
}

/// Trace ratio `tr(WᵀS_B W) / tr(WᵀS_W W)`.
pub fn trace_ratio(w: &DMatrix<f64>, within: &DMatrix<f64>, between: &DMatrix<f64>) -> f64 {
    let num = (w.transpose() * between * w).trace();
    let den = (w.transpose() * within * w).trace();
    num / den
}

/// Fits the discriminant projection to `K-1` dimensions.
///
/// Solved as the symmetric-definite problem `S_B v = λ (S_W + reg·I) v`
/// through a Cholesky reduction. Columns are scaled so the pooled
/// within-class covariance of the projected data is the identity, and
/// sign-fixed so each column's largest-magnitude entry is positive.
/// Empty classes are skipped; with fewer than `K` populated classes the
/// trailing columns come from the next (near-zero) eigenvalues.
pub fn lda_fit(y: &EmbeddingMatrix, h: &TopicAssignment, ridge: Ridge) -> Result<LdaModel> {
    let k = h.k();
    let d = y.dim();
    if h.len() != y.n_docs() {
        return Err(Error::LengthMismatch {
            left: y.n_docs(),
            right: h.len(),
        });
    }
    if k < 2 || k - 1 > d {
        return Err(Error::InvalidArgument(format!(
            "discriminant needs 2 <= K <= D + 1 (K = {k}, D = {d})"
        )));
    }
    let scatter = scatter_matrices(y.data(), h.h(), k)?;
    let populated = scatter.class_sizes.iter().filter(|&&s| s > 0).count();
    if populated < 2 {
        return Err(Error::SinglePopulatedClass { populated, k });
    }

    let reg = match ridge {
        Ridge::Absolute(r) => r,
        Ridge::RelativeToTrace(f) => f * scatter.within.trace() / d as f64,
    };
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge {reg} must be finite and >= 0"
        )));
    }
    let mut a = scatter.within.clone();
    for i in 0..d {
        a[(i, i)] += reg;
    }
    let chol = a.cholesky().ok_or_else(|| {
        Error::Numerical("within-class scatter is not positive definite; increase the ridge".into())
    })?;
    let l = chol.l();
    let diag = l.diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    if (lo / hi).powi(2) < d as f64 * f64::EPSILON {
        return Err(Error::Numerical(
            "within-class scatter is numerically singular; increase the ridge".into(),
        ));
    }

    // C = L⁻¹ S_B L⁻ᵀ
    let m = l
        .solve_lower_triangular(&scatter.between)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&m.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let n_out = k - 1;
    let mut u = DMatrix::zeros(d, n_out);
    let mut eigenvalues = Vec::with_capacity(n_out);
    for (col, &src) in order.iter().take(n_out).enumerate() {
        u.set_column(col, &eig.eigenvectors.column(src));
        eigenvalues.push(eig.eigenvalues[src]);
    }
    // v = L⁻ᵀ u gives vᵀ(S_W + reg·I)v = 1
    let mut projection = l
        .tr_solve_lower_triangular(&u)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let dof = y.n_docs().saturating_sub(populated).max(1) as f64;
    projection *= dof.sqrt();
    fix_column_signs(&mut projection);

    let trace_ratio = trace_ratio(&projection, &scatter.within, &scatter.between);
    Ok(LdaModel {
        projection,
        k,
        regularization: reg,
        eigenvalues,
        trace_ratio,
        populated_classes: populated,
    })
}

/// Projects rows onto the discriminant directions. The result has stage
/// `FeatureK1`.
pub fn lda_transform(model: &LdaModel, y: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if y.dim() != model.projection.nrows() {
        return Err(Error::DimensionMismatch {
            expected: model.projection.nrows(),
            found: y.dim(),
        });
    }
    EmbeddingMatrix::new(y.data() * &model.projection, Stage::FeatureK1)
}
