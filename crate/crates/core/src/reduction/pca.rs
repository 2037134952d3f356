use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::io::{EmbeddingMatrix, Stage};

/// Principal directions of a centered data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `dim × d_out`, orthonormal columns.
    pub components: DMatrix<f64>,
    /// Per-component variance (`n - 1` denominator), non-increasing.
    pub explained_variance: DVector<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.components.ncols()
    }

    /// Maps projected coordinates back into the input space.
    pub fn inverse_transform(&self, coords: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if coords.ncols() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                found: coords.ncols(),
            });
        }
        let mut out = coords * self.components.transpose();
        for mut row in out.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(out)
    }
}

/// Flips each column so that its largest-magnitude entry (first on ties)
/// is positive.
pub(crate) fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn centered(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

/// Fits PCA through the SVD of the centered data matrix.
pub fn pca_fit(x: &EmbeddingMatrix, d_out: usize) -> Result<PcaModel> {
    let (n, dim) = (x.n_docs(), x.dim());
    if n < 2 {
        return Err(Error::TooFewItems);
    }
    if d_out == 0 || d_out > n.min(dim) {
        return Err(Error::InvalidArgument(format!(
            "PCA output dimension {d_out} must lie in [1, {}]",
            n.min(dim)
        )));
    }
    let data = x.data();
    let mean = data.row_mean().transpose();
    let c = centered(data, &mean);

    let svd = SVD::new(c, false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let mut components = DMatrix::zeros(dim, d_out);
    let mut explained_variance = DVector::zeros(d_out);
    for (j, &src) in order.iter().take(d_out).enumerate() {
        components.set_column(j, &v_t.row(src).transpose());
        let s = svd.singular_values[src];
        explained_variance[j] = s * s / (n as f64 - 1.0);
    }
    fix_column_signs(&mut components);
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

/// Projects centered rows onto the principal directions. The result has
/// stage `PcaD`.
pub fn pca_transform(model: &PcaModel, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if x.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: x.dim(),
        });
    }
    let projected = centered(x.data(), &model.mean) * &model.components;
    EmbeddingMatrix::new(projected, Stage::PcaD)
}

/// Divides every row by its L2 norm.
pub fn l2_normalize(x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = x.data().clone();
    for (row, mut r) in data.row_iter_mut().enumerate() {
        let norm = r.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm { row });
        }
        r /= norm;
    }
    EmbeddingMatrix::new(data, Stage::Normalized)
}
