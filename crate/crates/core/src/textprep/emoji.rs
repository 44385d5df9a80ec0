use std::collections::HashMap;

use super::TextError;

const BUILTIN_TABLE: &str = include_str!("../../fixtures/emoji.tsv");

/// Emoji sequence to lowercase underscore-joined name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmojiTable {
    entries: HashMap<Vec<char>, String>,
    longest: usize,
}

impl EmojiTable {
    /// The shipped table of health-relevant and common emojis.
    pub fn builtin() -> Self {
        Self::from_tsv(BUILTIN_TABLE).expect("bundled emoji table is valid")
    }

    /// Parses `emoji<TAB>name` lines. Blank lines are skipped.
    pub fn from_tsv(text: &str) -> Result<Self, TextError> {
        let mut entries = HashMap::new();
        let mut longest = 0;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| TextError::EmojiTable {
                line: line_no,
                reason: reason.to_string(),
            };
            let (emoji, name) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            if emoji.is_empty() {
                return Err(bad("empty emoji"));
            }
            if name.is_empty()
                || !name
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            {
                return Err(bad("name must be nonempty [a-z0-9_]"));
            }
            let key: Vec<char> = emoji.chars().collect();
            longest = longest.max(key.len());
            if entries.insert(key, name.to_string()).is_some() {
                return Err(bad("duplicate emoji"));
            }
        }
        Ok(Self { entries, longest })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, emoji: &str) -> Option<&str> {
        let key: Vec<char> = emoji.chars().collect();
        self.entries.get(&key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (String, &str)> {
        self.entries
            .iter()
            .map(|(k, v)| (k.iter().collect::<String>(), v.as_str()))
    }

    /// Canonical TSV, sorted by name.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<_> = self.iter().collect();
        rows.sort_by(|a, b| a.1.cmp(b.1).then_with(|| a.0.cmp(&b.0)));
        rows.iter().map(|(e, n)| format!("{e}\t{n}\n")).collect()
    }

    /// Longest table entry starting at `chars[0]`, as (chars consumed, name).
    fn longest_match(&self, chars: &[char]) -> Option<(usize, &str)> {
        let max = self.longest.min(chars.len());
        (1..=max)
            .rev()
            .find_map(|n| self.entries.get(&chars[..n]).map(|name| (n, name.as_str())))
    }
}

/// Codepoints treated as emoji (or emoji modifiers/joiners) when they are
/// not covered by the table.
pub fn is_emoji_char(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2300..=0x23FF
        | 0x2600..=0x27BF
        | 0x2B00..=0x2BFF
        | 0x200D
        | 0x20E3
        | 0xFE0E..=0xFE0F
        | 0xE0020..=0xE007F)
}

/// Replaces every known emoji with its name, surrounded by single spaces
/// where the neighbouring text is not already whitespace. Unknown emojis
/// are dropped; all other characters pass through unchanged.
pub fn transliterate_emojis(text: &str, table: &EmojiTable) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    let mut i = 0;
    while i < chars.len() {
        if let Some((consumed, name)) = table.longest_match(&chars[i..]) {
            if out.chars().next_back().is_some_and(|c| !c.is_whitespace()) {
                out.push(' ');
            }
            out.push_str(name);
            pending_space = true;
            i += consumed;
            continue;
        }
        let c = chars[i];
        i += 1;
        if is_emoji_char(c) {
            continue;
        }
        if pending_space && !c.is_whitespace() {
            out.push(' ');
        }
        pending_space = false;
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_is_well_formed() {
        let t = EmojiTable::builtin();
        assert!(t.len() >= 60, "{}", t.len());
        assert_eq!(t.name("😷"), Some("face_with_medical_mask"));
        for (_, name) in t.iter() {
            assert!(!name.is_empty());
            assert!(name
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'));
        }
    }

    #[test]
    fn tsv_round_trip() {
        let t = EmojiTable::builtin();
        assert_eq!(EmojiTable::from_tsv(&t.to_tsv()).unwrap(), t);
    }

    #[test]
    fn table_errors_carry_line_numbers() {
        let err = EmojiTable::from_tsv("😷\tok\n\n🤒\tBad Name\n").unwrap_err();
        assert_eq!(
            err,
            TextError::EmojiTable {
                line: 3,
                reason: "name must be nonempty [a-z0-9_]".into()
            }
        );
        assert!(EmojiTable::from_tsv("😷\ta\n😷\tb\n").is_err());
        assert!(EmojiTable::from_tsv("no tab here\n").is_err());
    }

    #[test]
    fn fixture_examples() {
        let t = EmojiTable::builtin();
        assert_eq!(
            transliterate_emojis("ok 😷 then", &t),
            "ok face_with_medical_mask then"
        );
        assert_eq!(transliterate_emojis("no emojis here", &t), "no emojis here");
        assert_eq!(transliterate_emojis("😷", &t), "face_with_medical_mask");
    }

    #[test]
    fn adjacent_emojis_and_text_are_separated() {
        let t = EmojiTable::builtin();
        assert_eq!(
            transliterate_emojis("sick😷🤒again", &t),
            "sick face_with_medical_mask face_with_thermometer again"
        );
    }

    #[test]
    fn longest_sequence_wins_and_unknown_emojis_vanish() {
        let t = EmojiTable::builtin();
        assert_eq!(transliterate_emojis("🏳️‍🌈", &t), "rainbow_flag");
        assert_eq!(transliterate_emojis("a🦄b", &t), "ab");
        // trailing variation selector on a known base emoji is dropped
        assert_eq!(transliterate_emojis("❤\u{FE0F} x", &t), "red_heart x");
    }
}
