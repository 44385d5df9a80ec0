//! Corpus records, splitting, statistics and a synthetic corpus generator.

mod corpus;
mod split;
mod stats;
mod synth;

pub use corpus::{
    load_corpus, parse_corpus, write_corpus, CorpusReport, MalformedLine, MAX_MALFORMED_FRACTION,
};
pub use split::{stratified_split, Split, SplitSpec};
pub use stats::{dataset_stats, expand_counts, DatasetStats};
pub use synth::{synthesize_corpus, SynthSpec};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::{preprocess, EmojiTable, TextError, TokenizedExample, Vocab};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{bad} of {total} lines are malformed (first: line {first_line}: {first_reason})")]
    TooManyMalformed {
        bad: usize,
        total: usize,
        first_line: usize,
        first_reason: String,
    },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("no examples")]
    Empty,
    #[error("stats table line {line}: {reason}")]
    Stats { line: usize, reason: String },
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    HealthMention,
    NonHealthMention,
    FigurativeMention,
}

impl Label {
    pub const ALL: [Label; 3] = [
        Label::HealthMention,
        Label::NonHealthMention,
        Label::FigurativeMention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::HealthMention => "health_mention",
            Label::NonHealthMention => "non_health_mention",
            Label::FigurativeMention => "figurative_mention",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disease {
    Alzheimers,
    Cancer,
    Cough,
    Depression,
    Fever,
    Headache,
    HeartAttack,
    Migraine,
    Parkinsons,
    Stroke,
    Synthetic,
}

impl Disease {
    /// The ten real categories, in table order.
    pub const TEN: [Disease; 10] = [
        Disease::Alzheimers,
        Disease::Cancer,
        Disease::Cough,
        Disease::Depression,
        Disease::Fever,
        Disease::Headache,
        Disease::HeartAttack,
        Disease::Migraine,
        Disease::Parkinsons,
        Disease::Stroke,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Disease::Alzheimers => "alzheimers",
            Disease::Cancer => "cancer",
            Disease::Cough => "cough",
            Disease::Depression => "depression",
            Disease::Fever => "fever",
            Disease::Headache => "headache",
            Disease::HeartAttack => "heart_attack",
            Disease::Migraine => "migraine",
            Disease::Parkinsons => "parkinsons",
            Disease::Stroke => "stroke",
            Disease::Synthetic => "synthetic",
        }
    }

    /// Row name used in the statistics table.
    pub fn display_name(self) -> &'static str {
        match self {
            Disease::Alzheimers => "Alzheimer's",
            Disease::Cancer => "Cancer",
            Disease::Cough => "Cough",
            Disease::Depression => "Depression",
            Disease::Fever => "Fever",
            Disease::Headache => "Headache",
            Disease::HeartAttack => "Heart attack",
            Disease::Migraine => "Migraine",
            Disease::Parkinsons => "Parkinson's",
            Disease::Stroke => "Stroke",
            Disease::Synthetic => "Synthetic",
        }
    }

    pub fn all() -> impl Iterator<Item = Disease> {
        Disease::TEN.into_iter().chain([Disease::Synthetic])
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Disease {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

impl FromStr for Disease {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Disease::all()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown disease {s:?}"))
    }
}

/// One labelled text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    #[serde(rename = "text")]
    pub raw_text: String,
    pub label: Label,
    pub disease: Disease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    /// Health mention is 1; non-health and figurative mentions are 0.
    #[default]
    Binary,
    /// Health 0, non-health 1, figurative 2.
    ThreeClass,
}

impl LabelScheme {
    pub fn n_classes(self) -> usize {
        match self {
            LabelScheme::Binary => 2,
            LabelScheme::ThreeClass => 3,
        }
    }
}

impl FromStr for LabelScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(Self::Binary),
            "three_class" => Ok(Self::ThreeClass),
            _ => Err(format!("unknown label scheme {s:?}")),
        }
    }
}

pub fn label_map(label: Label, scheme: LabelScheme) -> usize {
    match scheme {
        LabelScheme::Binary => usize::from(label == Label::HealthMention),
        LabelScheme::ThreeClass => label as usize,
    }
}

/// Preprocesses every text.
pub fn clean_texts(examples: &[Example], emojis: &EmojiTable) -> Vec<String> {
    examples
        .iter()
        .map(|ex| preprocess(&ex.raw_text, emojis))
        .collect()
}

/// Preprocesses, encodes and labels every example.
pub fn tokenize_corpus(
    examples: &[Example],
    vocab: &Vocab,
    emojis: &EmojiTable,
    max_len: usize,
    scheme: LabelScheme,
) -> Result<Vec<TokenizedExample>, DataError> {
    examples
        .iter()
        .map(|ex| {
            let enc = vocab.encode(&preprocess(&ex.raw_text, emojis), max_len)?;
            Ok(TokenizedExample::new(
                enc,
                label_map(ex.label, scheme),
                ex.disease.as_str(),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_mapping() {
        assert_eq!(label_map(Label::FigurativeMention, LabelScheme::Binary), 0);
        assert_eq!(label_map(Label::NonHealthMention, LabelScheme::Binary), 0);
        assert_eq!(label_map(Label::HealthMention, LabelScheme::Binary), 1);
    }

    #[test]
    fn three_class_is_a_bijection() {
        let mut ids: Vec<usize> = Label::ALL
            .iter()
            .map(|&l| label_map(l, LabelScheme::ThreeClass))
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn names_parse_back() {
        for d in Disease::all() {
            assert_eq!(d.as_str().parse::<Disease>().unwrap(), d);
        }
        for l in Label::ALL {
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
        }
        assert!("flu".parse::<Disease>().is_err());
    }
}
