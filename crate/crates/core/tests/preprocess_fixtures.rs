use contradv::textprep::{preprocess, EmojiTable};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    input: String,
    expected: String,
}

fn cases() -> Vec<Case> {
    include_str!("../fixtures/preprocess_cases.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn curated_cases_are_bit_exact() {
    let table = EmojiTable::builtin();
    let cases = cases();
    assert_eq!(cases.len(), 25);
    for c in &cases {
        assert_eq!(preprocess(&c.input, &table), c.expected, "input {:?}", c.input);
    }
}

#[test]
fn curated_cases_are_idempotent() {
    let table = EmojiTable::builtin();
    for c in cases() {
        let once = preprocess(&c.input, &table);
        assert_eq!(preprocess(&once, &table), once, "input {:?}", c.input);
    }
}
