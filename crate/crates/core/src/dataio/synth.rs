use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Disease, Example, Label};

/// Knobs for [`synthesize_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Share of health mentions.
    pub health_fraction: f64,
    /// Share of figurative mentions; the rest are non-health mentions.
    pub figurative_fraction: f64,
    /// Probability of appending an emoji.
    pub emoji_rate: f64,
    /// Probability of each decoration (mention, URL, hashtag).
    pub noise_rate: f64,
}

impl Default for SynthSpec {
    /// Label shares of the extended PHM2017 corpus (4,228 and 4,192 of
    /// 15,742).
    fn default() -> Self {
        Self {
            health_fraction: 4_228.0 / 15_742.0,
            figurative_fraction: 4_192.0 / 15_742.0,
            emoji_rate: 0.35,
            noise_rate: 0.2,
        }
    }
}

const HEALTH: &[&str] = &[
    "i have had {d} since last night and nothing helps",
    "finally went to the doctor about my {d} today",
    "my dad was diagnosed with {d} last week",
    "stuck in bed with {d} again",
    "day three of this {d} and i feel awful",
    "my grandma is fighting {d} please keep her in your prayers",
    "took two pills for my {d} hope it works",
    "the nurse said my {d} should clear up soon",
];

const FIGURATIVE: &[&str] = &[
    "this traffic is giving me {d} lol",
    "that exam was pure {d} for my brain",
    "monday mornings are basically {d}",
    "watching my team defend gives me {d} every week",
    "this song is so bad it is {d} for the ears",
    "my wallet has {d} after this weekend",
    "that plot twist nearly gave me {d}",
];

const NON_HEALTH: &[&str] = &[
    "new study links coffee to lower {d} risk",
    "join our walk this sunday to raise money for {d} research",
    "learn the early warning signs of {d} at the link",
    "the charity gala for {d} awareness was a success",
    "podcast episode on the history of {d} treatment out now",
    "scientists discover a protein that may explain {d}",
    "city council funds a new {d} screening program",
];

const OPENERS: &[&str] = &["honestly", "ugh", "wow", "so", "today", "ok"];

const HEALTH_EMOJI: &[&str] = &["😷", "🤒", "🤕", "🤧", "😫", "😢", "💊", "🛌", "🙏"];
const FIGURATIVE_EMOJI: &[&str] = &["😂", "🤣", "🙄", "😤", "😩", "💀", "🔥"];
const NON_HEALTH_EMOJI: &[&str] = &["👍", "💪", "🎉", "🧠", "❤️", "🙏", "💯"];

fn disease_word(d: Disease) -> &'static str {
    match d {
        Disease::Alzheimers => "alzheimer's",
        Disease::Cancer => "cancer",
        Disease::Cough => "a cough",
        Disease::Depression => "depression",
        Disease::Fever => "a fever",
        Disease::Headache => "a headache",
        Disease::HeartAttack => "a heart attack",
        Disease::Migraine => "a migraine",
        Disease::Parkinsons => "parkinson's",
        Disease::Stroke => "a stroke",
        Disease::Synthetic => "an illness",
    }
}

fn hashtag(d: Disease) -> String {
    format!("#{}", d.as_str().replace('_', ""))
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

fn sentence(rng: &mut ChaCha8Rng, label: Label, disease: Disease, spec: &SynthSpec) -> String {
    let (templates, emojis) = match label {
        Label::HealthMention => (HEALTH, HEALTH_EMOJI),
        Label::FigurativeMention => (FIGURATIVE, FIGURATIVE_EMOJI),
        Label::NonHealthMention => (NON_HEALTH, NON_HEALTH_EMOJI),
    };
    let word = disease_word(disease);
    // "my a fever" reads badly; the article only belongs after verbs
    let body = pick(rng, templates)
        .replace("{d}", word)
        .replace("my a ", "my ")
        .replace("this a ", "this ");
    let mut parts: Vec<String> = Vec::new();
    if rng.gen_bool(spec.noise_rate) {
        parts.push(format!("@user{}", rng.gen_range(1..500)));
    }
    if rng.gen_bool(0.3) {
        parts.push(pick(rng, OPENERS).to_string());
    }
    parts.push(body);
    if rng.gen_bool(spec.noise_rate) {
        parts.push(hashtag(disease));
    }
    if rng.gen_bool(spec.emoji_rate) {
        parts.push(pick(rng, emojis).to_string());
    }
    if rng.gen_bool(spec.noise_rate) {
        parts.push(format!("https://t.co/{:08x}", rng.gen::<u32>()));
    }
    parts.join(" ")
}

/// Templated labelled texts over the ten disease categories.
///
/// Class counts are the rounded shares of `spec`; diseases, templates and
/// decorations are drawn from a ChaCha8 generator seeded with `seed`, and
/// the examples are shuffled, so the corpus depends only on `(n, seed,
/// spec)`.
pub fn synthesize_corpus(n: usize, seed: u64, spec: &SynthSpec) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_health = (spec.health_fraction * n as f64).round() as usize;
    let n_fig = ((spec.figurative_fraction * n as f64).round() as usize).min(n - n_health.min(n));
    let mut labels = Vec::with_capacity(n);
    labels.extend(std::iter::repeat_n(Label::HealthMention, n_health.min(n)));
    labels.extend(std::iter::repeat_n(Label::FigurativeMention, n_fig));
    labels.resize(n, Label::NonHealthMention);
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .map(|label| {
            let disease = Disease::TEN[rng.gen_range(0..10)];
            Example {
                raw_text: sentence(&mut rng, label, disease, spec),
                label,
                disease,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{label_map, LabelScheme};
    use crate::textprep::{preprocess, EmojiTable};

    #[test]
    fn deterministic() {
        let s = SynthSpec::default();
        assert_eq!(synthesize_corpus(300, 9, &s), synthesize_corpus(300, 9, &s));
        assert_ne!(synthesize_corpus(300, 9, &s), synthesize_corpus(300, 10, &s));
    }

    #[test]
    fn positive_share() {
        let c = synthesize_corpus(1000, 1, &SynthSpec::default());
        let pos = c
            .iter()
            .filter(|e| label_map(e.label, LabelScheme::Binary) == 1)
            .count() as f64
            / 1000.0;
        assert!((pos - 0.27).abs() <= 0.03, "{pos}");
    }

    #[test]
    fn texts_survive_preprocessing() {
        let table = EmojiTable::builtin();
        let c = synthesize_corpus(500, 2, &SynthSpec::default());
        let mut emoji_seen = false;
        for ex in &c {
            let clean = preprocess(&ex.raw_text, &table);
            assert!(!clean.is_empty(), "{:?}", ex.raw_text);
            assert!(!clean.contains("http"), "{clean}");
            emoji_seen |= clean.contains("_face") || clean.contains("pill");
        }
        assert!(emoji_seen);
        let diseases: std::collections::HashSet<_> = c.iter().map(|e| e.disease).collect();
        assert_eq!(diseases.len(), 10);
    }
}
