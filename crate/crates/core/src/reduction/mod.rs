//! Linear feature extraction: PCA, row normalization and the Fisher
//! discriminant projection.

mod lda;
mod pca;

pub use lda::{lda_fit, lda_transform, scatter_matrices, trace_ratio, LdaModel, Ridge, Scatter};
pub use pca::{l2_normalize, pca_fit, pca_transform, PcaModel};
