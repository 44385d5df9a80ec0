use super::emoji::{transliterate_emojis, EmojiTable};

fn is_kept_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '\''
}

fn is_url(token: &str) -> bool {
    token.starts_with("http://") || token.starts_with("https://") || token.starts_with("www.")
}

/// Lowercases, drops mentions and URLs, keeps hashtag words without the
/// `#`, removes every character outside `[a-z0-9_']`, and collapses
/// whitespace to single spaces.
pub fn strip_entities(text: &str) -> String {
    let lowered = text.to_lowercase();
    let mut words: Vec<String> = Vec::new();
    for token in lowered.split_whitespace() {
        if token.starts_with('@') || is_url(token) {
            continue;
        }
        let cleaned: String = token
            .trim_start_matches('#')
            .chars()
            .filter(|&c| is_kept_char(c))
            .collect();
        if !cleaned.is_empty() {
            words.push(cleaned);
        }
    }
    words.join(" ")
}

/// Emoji transliteration followed by entity stripping.
pub fn preprocess(text: &str, table: &EmojiTable) -> String {
    strip_entities(&transliterate_emojis(text, table))
}
