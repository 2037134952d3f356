//! Evaluation measures: partition agreement, topic coherence, label-noise
//! robustness and word-level topic summaries.

pub mod coherence;
pub mod noise;
pub mod partition;
pub mod rank;
pub mod words;

pub use coherence::{
    build_cooccurrence, build_cooccurrence_for, coherence, coherence_cv, coherence_npmi,
    coherence_uci, npmi, pmi, topic_coherence, CooccurrenceStats, Measure, CV_WINDOW, DEFAULT_EPS,
    UCI_WINDOW,
};
pub use noise::{
    agreement, apply_label_noise, expected_agreement, noise_study, NoiseRow, NoiseStudy,
    NoiseStudyOptions, NoiseSummary,
};
pub use partition::{
    ami, ari, canonical_labels, expected_mutual_information, rand_index_components,
    same_up_to_relabeling, Partition, RandIndexComponents,
};
pub use rank::spearman_rho;
pub use words::{
    composition_matrix, delta_tfidf, greedy_match, term_frequencies, top_words, TopicMatch,
    TopicWords,
};
