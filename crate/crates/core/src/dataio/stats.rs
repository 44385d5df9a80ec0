use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DataError, Disease, Example, Label};

const HEADER: [&str; 5] = [
    "Disease",
    "Tweet Count",
    "Health Mention",
    "Non-Health Mention",
    "Figurative Mention",
];

/// Counts per disease and label, in [`Label::ALL`] order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub rows: Vec<(Disease, [usize; 3])>,
}

impl DatasetStats {
    /// Counts of the extended PHM2017 corpus.
    pub fn table1() -> Self {
        use Disease::*;
        Self {
            rows: vec![
                (Alzheimers, [249, 1_374, 92]),
                (Cancer, [302, 1_239, 150]),
                (Cough, [331, 433, 688]),
                (Depression, [517, 711, 351]),
                (Fever, [517, 342, 625]),
                (Headache, [791, 112, 526]),
                (HeartAttack, [209, 349, 1_060]),
                (Migraine, [904, 400, 215]),
                (Parkinsons, [153, 1_362, 53]),
                (Stroke, [255, 1_000, 432]),
            ],
        }
    }

    /// Per-label totals.
    pub fn label_totals(&self) -> [usize; 3] {
        let mut t = [0; 3];
        for (_, c) in &self.rows {
            for k in 0..3 {
                t[k] += c[k];
            }
        }
        t
    }

    pub fn total(&self) -> usize {
        self.label_totals().iter().sum()
    }

    pub fn count(&self, disease: Disease, label: Label) -> usize {
        self.rows
            .iter()
            .find(|(d, _)| *d == disease)
            .map_or(0, |(_, c)| c[label as usize])
    }

    /// Aligned text table: one row per disease, then a total row.
    pub fn render(&self) -> String {
        let mut lines: Vec<[String; 5]> = vec![HEADER.map(String::from)];
        let row = |name: &str, c: [usize; 3]| -> [String; 5] {
            [
                name.to_string(),
                c.iter().sum::<usize>().to_string(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
            ]
        };
        for (d, c) in &self.rows {
            lines.push(row(d.display_name(), *c));
        }
        lines.push(row("Total", self.label_totals()));
        let widths: Vec<usize> = (0..5)
            .map(|j| lines.iter().map(|l| l[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let _ = write!(out, "{:<w$}", l[0], w = widths[0]);
            for j in 1..5 {
                let _ = write!(out, "  {:>w$}", l[j], w = widths[j]);
            }
            out.push('\n');
        }
        out
    }

    /// Reads a table written by [`render`](Self::render). Row counts must
    /// add up to their tweet count and the total row must match the rows.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let err = |line: usize, reason: String| DataError::Stats { line, reason };
        let mut rows = Vec::new();
        let mut total = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line
                .split("  ")
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .collect();
            if cells.len() != 5 {
                return Err(err(n, format!("expected 5 columns, found {}", cells.len())));
            }
            if cells[0] == HEADER[0] {
                continue;
            }
            let mut nums = [0usize; 4];
            for (k, c) in cells[1..].iter().enumerate() {
                nums[k] = c
                    .replace(',', "")
                    .parse()
                    .map_err(|_| err(n, format!("not a count: {c:?}")))?;
            }
            let counts = [nums[1], nums[2], nums[3]];
            if counts.iter().sum::<usize>() != nums[0] {
                return Err(err(n, "label counts do not add up to the tweet count".into()));
            }
            if cells[0] == "Total" {
                total = Some((n, counts));
                continue;
            }
            let disease = Disease::all()
                .find(|d| d.display_name() == cells[0] || d.as_str() == cells[0])
                .ok_or_else(|| err(n, format!("unknown disease {:?}", cells[0])))?;
            rows.push((disease, counts));
        }
        let stats = Self { rows };
        if let Some((n, t)) = total {
            if t != stats.label_totals() {
                return Err(err(n, "total row does not match the disease rows".into()));
            }
        }
        Ok(stats)
    }
}

/// Counts per (disease, label). The ten categories are always listed;
/// synthetic examples add their own row.
pub fn dataset_stats(examples: &[Example]) -> DatasetStats {
    let mut rows: Vec<(Disease, [usize; 3])> = Disease::all().map(|d| (d, [0; 3])).collect();
    for ex in examples {
        rows[ex.disease as usize].1[ex.label as usize] += 1;
    }
    if rows[Disease::Synthetic as usize].1 == [0; 3] {
        rows.pop();
    }
    DatasetStats { rows }
}

/// Placeholder examples reproducing the given counts, for exercising the
/// split and fold arithmetic without the original texts.
pub fn expand_counts(stats: &DatasetStats) -> Vec<Example> {
    let mut out = Vec::with_capacity(stats.total());
    for (d, counts) in &stats.rows {
        for (label, &c) in Label::ALL.iter().zip(counts) {
            for i in 0..c {
                out.push(Example {
                    raw_text: format!("{} {} {i}", d.as_str(), label.as_str()),
                    label: *label,
                    disease: *d,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = include_str!("../../fixtures/table1_counts.txt");

    #[test]
    fn fixture_round_trips_with_table_totals() {
        let stats = DatasetStats::parse(FIXTURE).unwrap();
        assert_eq!(stats, DatasetStats::table1());
        assert_eq!(stats.total(), 15_742);
        assert_eq!(stats.label_totals(), [4_228, 7_322, 4_192]);
        assert_eq!(stats.render(), FIXTURE);
    }

    #[test]
    fn counts_of_expanded_examples() {
        let t = DatasetStats::table1();
        let ex = expand_counts(&t);
        assert_eq!(dataset_stats(&ex), t);
        assert_eq!(t.count(Disease::HeartAttack, Label::FigurativeMention), 1_060);
    }

    #[test]
    fn empty_input_is_all_zero() {
        let s = dataset_stats(&[]);
        assert_eq!(s.rows.len(), 10);
        assert_eq!(s.total(), 0);
        assert_eq!(DatasetStats::parse(&s.render()).unwrap(), s);
    }

    #[test]
    fn totals_are_row_sums() {
        let t = DatasetStats::table1();
        let row_sum: usize = t.rows.iter().map(|(_, c)| c.iter().sum::<usize>()).sum();
        assert_eq!(row_sum, t.total());
    }

    #[test]
    fn inconsistent_tables_are_rejected() {
        let bad = FIXTURE.replace("15742", "15743");
        assert!(DatasetStats::parse(&bad).is_err());
        let bad = FIXTURE.replace("Cancer", "Gout  ");
        assert!(DatasetStats::parse(&bad).is_err());
    }
}
