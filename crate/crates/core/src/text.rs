//! Tokenization shared by coherence, top-word and contrastive word scoring.
//!
//! Text is lowercased and split on every non-alphanumeric character; empty
//! tokens are dropped. No stop words are removed.

/// Splits `text` into lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}
