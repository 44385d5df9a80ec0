//! JSON-lines corpus files.
//!
//! One record per line: `{"text": ..., "label": ..., "disease": ...}`.
//! Newlines inside a text are written as the JSON escape `\n`, so a record
//! never spans lines. Blank lines are ignored.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{DataError, Example};

/// Loading aborts when more than this fraction of records is malformed.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    /// 1-based.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusReport {
    pub examples: Vec<Example>,
    pub malformed: Vec<MalformedLine>,
}

fn parse_line(line: &str) -> Result<Example, String> {
    let ex: Example = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if ex.raw_text.trim().is_empty() {
        return Err("empty text".into());
    }
    Ok(ex)
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<CorpusReport, DataError> {
    let mut report = CorpusReport::default();
    let mut total = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match parse_line(&line) {
            Ok(ex) => report.examples.push(ex),
            Err(reason) => {
                log::warn!("line {}: {reason}", i + 1);
                report.malformed.push(MalformedLine { line: i + 1, reason });
            }
        }
    }
    let bad = report.malformed.len();
    if bad as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        let first = &report.malformed[0];
        return Err(DataError::TooManyMalformed {
            bad,
            total,
            first_line: first.line,
            first_reason: first.reason.clone(),
        });
    }
    Ok(report)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusReport, DataError> {
    let file = std::fs::File::open(path)?;
    parse_corpus(BufReader::new(file))
}

/// Canonical writer: fields in `text, label, disease` order, one per line.
pub fn write_corpus<W: Write>(mut w: W, examples: &[Example]) -> Result<(), DataError> {
    for ex in examples {
        let line = serde_json::to_string(ex).map_err(std::io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Disease, Label};

    fn parse(s: &str) -> Result<CorpusReport, DataError> {
        parse_corpus(s.as_bytes())
    }

    #[test]
    fn empty_and_single() {
        assert!(parse("").unwrap().examples.is_empty());
        let r = parse(r#"{"text":"my head hurts","label":"health_mention","disease":"headache"}"#).unwrap();
        assert_eq!(
            r.examples,
            vec![Example {
                raw_text: "my head hurts".into(),
                label: Label::HealthMention,
                disease: Disease::Headache,
            }]
        );
    }

    #[test]
    fn unknown_label_is_reported_with_line_number() {
        let mut text = String::new();
        for _ in 0..10 {
            text.push_str(r#"{"text":"a","label":"non_health_mention","disease":"cough"}"#);
            text.push('\n');
        }
        text.push_str(r#"{"text":"b","label":"sarcasm","disease":"cough"}"#);
        let r = parse(&text).unwrap();
        assert_eq!(r.examples.len(), 10);
        assert_eq!(r.malformed.len(), 1);
        assert_eq!(r.malformed[0].line, 11);
        assert!(r.malformed[0].reason.contains("sarcasm"));
    }

    #[test]
    fn too_many_malformed_aborts() {
        let text = "{\"text\":\"a\",\"label\":\"health_mention\",\"disease\":\"fever\"}\nnot json\n";
        match parse(text) {
            Err(DataError::TooManyMalformed {
                bad: 1,
                total: 2,
                first_line: 2,
                ..
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn canonical_round_trip() {
        let examples = vec![
            Example {
                raw_text: "two\nlines \"quoted\" 😷".into(),
                label: Label::FigurativeMention,
                disease: Disease::HeartAttack,
            },
            Example {
                raw_text: "x".into(),
                label: Label::NonHealthMention,
                disease: Disease::Synthetic,
            },
        ];
        let mut buf = Vec::new();
        write_corpus(&mut buf, &examples).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("{\"text\":"));
        let back = parse(&text).unwrap().examples;
        assert_eq!(back, examples);
        let mut again = Vec::new();
        write_corpus(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }
}
