//! Topic extraction from precomputed document embeddings by alternating
//! discriminant projection and Gaussian-mixture clustering, with the
//! measures used to evaluate the resulting topics.

pub mod cli;
pub mod error;
pub mod gmm;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod reduction;
pub mod seed;
pub mod text;

pub use error::{Error, Result};
pub use io::{Corpus, Document, EmbeddingMatrix, Stage, TopicAssignment};
pub use pipeline::{extract_topics, PipelineConfig, PipelineResult};
