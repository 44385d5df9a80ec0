use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TextError;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;

const RESERVED: [&str; 4] = [PAD, UNK, CLS, SEP];

/// Word-level vocabulary. Ids `0..4` are `[PAD] [UNK] [CLS] [SEP]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self, TextError> {
        for (id, want) in RESERVED.iter().enumerate() {
            if tokens.get(id).map(String::as_str) != Some(*want) {
                return Err(TextError::Vocab(format!(
                    "id {id} must be {want}, found {:?}",
                    tokens.get(id)
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(TextError::Vocab(format!("invalid token {tok:?} at id {id}")));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(TextError::Vocab(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Counts whitespace tokens and admits those seen at least `min_count`
    /// times, most frequent first, ties broken lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Self, TextError> {
        if corpus.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in corpus {
            for tok in doc.as_ref().split_whitespace() {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut admitted: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(tok, c)| c >= min_count && !RESERVED.contains(&tok))
            .collect();
        admitted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(admitted.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self, TextError> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    /// `[CLS] t1 .. tk [SEP] [PAD]..` with `k <= max_len - 2`.
    pub fn encode(&self, text: &str, max_len: usize) -> Result<EncodedText, TextError> {
        if max_len < 3 {
            return Err(TextError::MaxLen(max_len));
        }
        let mut ids = Vec::with_capacity(max_len);
        ids.push(CLS_ID);
        ids.extend(
            text.split_whitespace()
                .take(max_len - 2)
                .map(|w| self.id(w).unwrap_or(UNK_ID)),
        );
        ids.push(SEP_ID);
        let attention_len = ids.len();
        ids.resize(max_len, PAD_ID);
        Ok(EncodedText { ids, attention_len })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedText {
    pub ids: Vec<usize>,
    pub attention_len: usize,
}

/// Fixed-length token ids with their label and disease tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub ids: Vec<usize>,
    pub attention_len: usize,
    pub label: usize,
    pub disease: String,
}

impl TokenizedExample {
    pub fn new(encoded: EncodedText, label: usize, disease: impl Into<String>) -> Self {
        Self {
            ids: encoded.ids,
            attention_len: encoded.attention_len,
            label,
            disease: disease.into(),
        }
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// The non-PAD prefix, `[CLS] .. [SEP]`.
    pub fn active_ids(&self) -> &[usize] {
        &self.ids[..self.attention_len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_ordering() {
        let v = Vocab::build(&["a a b"], 1).unwrap();
        assert_eq!(v.tokens(), &["[PAD]", "[UNK]", "[CLS]", "[SEP]", "a", "b"]);
        let v = Vocab::build(&["a a b"], 2).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), None);
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = Vocab::build(&["b a"], 1).unwrap();
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), Some(5));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let empty: [&str; 0] = [];
        assert_eq!(Vocab::build(&empty, 1), Err(TextError::EmptyCorpus));
    }

    #[test]
    fn text_round_trip_and_validation() {
        let v = Vocab::build(&["fever cough fever", "cough"], 1).unwrap();
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocab::from_text("[PAD]\n[CLS]\n").is_err());
        assert!(Vocab::from_text("[PAD]\n[UNK]\n[CLS]\n[SEP]\nx\nx\n").is_err());
    }

    #[test]
    fn encode_examples() {
        let v = Vocab::build(&["fever"], 1).unwrap();
        let fever = v.id("fever").unwrap();
        let e = v.encode("", 5).unwrap();
        assert_eq!(e.ids, vec![CLS_ID, SEP_ID, PAD_ID, PAD_ID, PAD_ID]);
        assert_eq!(e.attention_len, 2);
        let e = v.encode("fever", 5).unwrap();
        assert_eq!(e.ids, vec![CLS_ID, fever, SEP_ID, PAD_ID, PAD_ID]);
        let e = v.encode("fever chills", 5).unwrap();
        assert_eq!(e.ids[2], UNK_ID);
        assert!(v.encode("x", 2).is_err());
    }

    #[test]
    fn long_text_is_truncated() {
        let v = Vocab::build(&["w"], 1).unwrap();
        let text = vec!["w"; 100].join(" ");
        let e = v.encode(&text, 64).unwrap();
        assert_eq!(e.ids.len(), 64);
        assert_eq!(e.attention_len, 64);
        assert_eq!(e.ids[63], SEP_ID);
        assert_eq!(e.ids[1..63].iter().filter(|&&i| i == 4).count(), 62);
    }
}
