//! Tweet cleaning and word-level tokenization.

mod clean;
mod emoji;
mod vocab;

pub use clean::{preprocess, strip_entities};
pub use emoji::{is_emoji_char, transliterate_emojis, EmojiTable};
pub use vocab::{EncodedText, TokenizedExample, Vocab, CLS, CLS_ID, PAD, PAD_ID, SEP, SEP_ID, UNK, UNK_ID};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("emoji table line {line}: {reason}")]
    EmojiTable { line: usize, reason: String },
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid vocabulary: {0}")]
    Vocab(String),
    #[error("max_len must be at least 3, got {0}")]
    MaxLen(usize),
}
