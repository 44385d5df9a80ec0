use super::Attribution;

/// Terminal and HTML renderings of one attribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub ansi: String,
    pub html: String,
}

/// Background colour for a score; `None` leaves the token uncoloured.
/// Positive scores shade towards pure green and negative towards pure red,
/// in proportion to `|score| / max |score|`.
fn shade(score: f64, max_abs: f64) -> Option<(u8, u8, u8)> {
    if score == 0.0 || max_abs == 0.0 {
        return None;
    }
    let t = (score.abs() / max_abs).min(1.0);
    let fade = (255.0 * (1.0 - t)).round() as u8;
    Some(if score > 0.0 {
        (fade, 255, fade)
    } else {
        (255, fade, fade)
    })
}

fn max_abs(a: &Attribution) -> f64 {
    a.scores.iter().fold(0.0, |m: f64, s| m.max(s.abs()))
}

/// 24-bit ANSI background colours, black text on coloured tokens.
pub fn render_ansi(a: &Attribution) -> String {
    let m = max_abs(a);
    a.tokens
        .iter()
        .zip(&a.scores)
        .map(|(tok, &s)| match shade(s, m) {
            Some((r, g, b)) => format!("\x1b[30;48;2;{r};{g};{b}m{tok}\x1b[0m"),
            None => tok.clone(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn render_html(a: &Attribution) -> String {
    let m = max_abs(a);
    a.tokens
        .iter()
        .zip(&a.scores)
        .map(|(tok, &s)| match shade(s, m) {
            Some((r, g, b)) => format!(
                "<span style=\"background-color:rgb({r},{g},{b})\" title=\"{s:.6}\">{}</span>",
                escape(tok)
            ),
            None => escape(tok),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_attribution(a: &Attribution) -> Rendered {
    Rendered {
        ansi: render_ansi(a),
        html: render_html(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(tokens: &[&str], scores: &[f64]) -> Attribution {
        Attribution {
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            scores: scores.to_vec(),
            target: 1,
            predicted: 1,
            label: 1,
            output_delta: scores.iter().sum(),
            completeness_gap: 0.0,
        }
    }

    #[test]
    fn zero_scores_are_plain() {
        let r = render_attribution(&attr(&["a", "<b>"], &[0.0, 0.0]));
        assert_eq!(r.ansi, "a <b>");
        assert_eq!(r.html, "a &lt;b&gt;");
    }

    #[test]
    fn single_positive_is_full_green() {
        let r = render_attribution(&attr(&["sick", "today"], &[0.7, 0.0]));
        assert_eq!(r.ansi, "\x1b[30;48;2;0;255;0msick\x1b[0m today");
        assert!(r
            .html
            .starts_with("<span style=\"background-color:rgb(0,255,0)\""));
        assert!(r.html.ends_with("sick</span> today"));
    }

    #[test]
    fn negative_half_intensity_is_light_red() {
        let r = render_ansi(&attr(&["a", "b"], &[1.0, -0.5]));
        assert!(r.contains("48;2;255;128;128mb"), "{r}");
        let a = attr(&["x", "y"], &[0.2, -0.9]);
        assert_eq!(render_attribution(&a), render_attribution(&a));
    }
}
