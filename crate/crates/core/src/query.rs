//! Entity extraction from free-text queries: part ranges, pair keys, file
//! paths, reset requests and a few analysis knobs.

use std::sync::LazyLock;

use regex::Regex;

use crate::blade::{PairKey, PartRange};

static RANGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bparts?\s+(\d+)\s*(?:to|through|thru|-|\u{2013}|\u{2014}|\.\.)\s*(\d+)\b").unwrap()
});
static SINGLE_PART: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bparts?\s+(\d+)\b").unwrap());
static PAIR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d+)\s*\+\s*(\d+)\b").unwrap());
static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"'([^'\s][^']*)'|"([^"\s][^"]*)""#).unwrap());
static BARE_PATH: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:^|\s)((?:\.{0,2}/)?[\w./\-]+\.(?:csv|tsv|jsonl|json|png|jpe?g|tiff?|bmp))\b").unwrap()
});
static TARGET: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:target\s+part|at\s+part|for\s+part|next\s+part)\s*(\d+)\b").unwrap()
});
static THETA: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:\btilt\s*(?:of|=|at)?\s*(\d+(?:\.\d+)?))|(?:(\d+(?:\.\d+)?)\s*(?:\u{b0}|deg\b|degrees\b))").unwrap()
});
static LIMIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\blimit\s*(?:of|=)?\s*(\d*\.\d+|\d+)\s*(?:in\b|inch(?:es)?\b)?").unwrap());
static HINTS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[tools:\s*([^\]]*)\]").unwrap());
static NOTES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{critic:[^}]*\}").unwrap());

/// "parts A to B", "parts A-B", "parts A\u{2013}B" or "part A". Reversed
/// bounds are swapped; part 0 is not a part.
pub fn part_range(text: &str) -> Option<PartRange> {
    if let Some(c) = RANGE.captures(text) {
        let a: u32 = c[1].parse().ok()?;
        let b: u32 = c[2].parse().ok()?;
        return PartRange::new(a.min(b), a.max(b)).ok();
    }
    let c = SINGLE_PART.captures(text)?;
    let a: u32 = c[1].parse().ok()?;
    PartRange::new(a, a).ok()
}

/// Valid pair keys in order of appearance, deduplicated.
pub fn pair_keys(text: &str) -> Vec<PairKey> {
    let mut out: Vec<PairKey> = Vec::new();
    for c in PAIR.captures_iter(text) {
        if let Ok(k) = format!("{}+{}", &c[1], &c[2]).parse::<PairKey>() {
            if !out.contains(&k) {
                out.push(k);
            }
        }
    }
    out
}

/// Quoted strings that look like paths, then bare tokens with a known data
/// extension. Every result is a verbatim substring of `text`.
pub fn file_paths(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in QUOTED.captures_iter(text) {
        let s = c.get(1).or_else(|| c.get(2)).unwrap().as_str();
        if (s.contains('/') || s.contains('\\') || s.rsplit_once('.').is_some_and(|(_, e)| !e.is_empty() && e.len() <= 5 && e.chars().all(char::is_alphanumeric)))
            && !out.iter().any(|o| o == s) {
                out.push(s.to_string());
            }
    }
    let unquoted = QUOTED.replace_all(text, " ");
    for c in BARE_PATH.captures_iter(&unquoted) {
        let s = c[1].to_string();
        if text.contains(&s) && !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

pub fn reset_flag(text: &str) -> bool {
    let t = text.trim().to_lowercase();
    let t = t.trim_end_matches(['.', '!']);
    matches!(t, "reset" | "reset session" | "reset the session" | "clear session" | "start over")
}

pub fn target_part(text: &str) -> Option<u32> {
    TARGET.captures(text).and_then(|c| c[1].parse().ok()).filter(|&n| n > 0)
}

/// Tilt angle in degrees when the text states one.
pub fn theta(text: &str) -> Option<f64> {
    let c = THETA.captures(text)?;
    c.get(1).or_else(|| c.get(2))?.as_str().parse().ok()
}

/// Correction strategy named in the text, if any.
pub fn strategy(text: &str) -> Option<&'static str> {
    let t = text.to_lowercase();
    if t.contains("drift-at-target") || t.contains("drift at target") || t.contains("drift at the target") {
        Some("drift-at-target")
    } else if t.contains("bounded-residual") || t.contains("bounded residual") || t.contains("bounded strategy") {
        Some("bounded-residual")
    } else if t.contains("mean-deviation") || t.contains("mean deviation") {
        Some("mean-deviation")
    } else {
        None
    }
}

/// Residual clip in inches ("limit 0.008 in").
pub fn limit(text: &str) -> Option<f64> {
    LIMIT.captures(text).and_then(|c| c[1].parse().ok()).filter(|x: &f64| *x > 0.0)
}

/// Tool names from the last `[tools: a, b]` block.
pub fn tool_hints(text: &str) -> Option<Vec<String>> {
    let c = HINTS.captures_iter(text).last()?;
    Some(
        c[1].split([',', ' ', '\n'])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
    )
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `text` without `[tools: ...]` blocks or `{critic: ...}` notes: the part
/// entities are extracted from.
pub fn strip_hints(text: &str) -> String {
    collapse(&NOTES.replace_all(&HINTS.replace_all(text, ""), ""))
}

/// Replace the tool-hint block, keeping any critic note.
pub fn with_hints(text: &str, tools: &[String]) -> String {
    format!("{} [tools: {}]", collapse(&HINTS.replace_all(text, "")), tools.join(", "))
}

/// Append a critic note. Notes are shown to backends but ignored by entity
/// extraction, so quantity ids inside them do not narrow the request.
pub fn with_note(text: &str, note: &str) -> String {
    format!("{} {{critic: {}}}", collapse(&NOTES.replace_all(text, "")), note.replace('}', ")"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        let r = |s| part_range(s).map(|r| (r.start, r.end));
        assert_eq!(r("give me compensation for parts 4 to 16"), Some((4, 16)));
        assert_eq!(r("analyze the tool wear percentage ranges (parts 4 to 20)"), Some((4, 20)));
        assert_eq!(r("parts 3\u{2013}9"), Some((3, 9)));
        assert_eq!(r("parts 3-9"), Some((3, 9)));
        assert_eq!(r("part 7 only"), Some((7, 7)));
        assert_eq!(r("parts 9 to 3"), Some((3, 9)));
        assert_eq!(r("part 0"), None);
        assert_eq!(r("partial results"), None);
    }

    #[test]
    fn paths_are_verbatim() {
        let q = "load './Inspection_Aggregated.csv' and give me compensation for parts 4 to 16";
        assert_eq!(file_paths(q), ["./Inspection_Aggregated.csv"]);
        let q = "load data/pathing_export.csv then kg/global.tsv";
        assert_eq!(file_paths(q), ["data/pathing_export.csv", "kg/global.tsv"]);
        assert!(file_paths("compensation for parts 4 to 16").is_empty());
        for p in file_paths("open \"my dir/a.csv\" and 'x'") {
            assert!("open \"my dir/a.csv\" and 'x'".contains(&p));
        }
    }

    #[test]
    fn keys_and_flags() {
        assert_eq!(pair_keys("pairs 2+17, 3 + 18 and 2+18").iter().map(|k| k.to_string()).collect::<Vec<_>>(), ["2+17", "3+18"]);
        assert!(reset_flag("reset"));
        assert!(reset_flag(" Reset. "));
        assert!(!reset_flag("reset the offsets for pair 2+17"));
        assert_eq!(target_part("predict at part 20"), Some(20));
        assert_eq!(theta("use a tilt of 30"), Some(30.0));
        assert_eq!(theta("at 25\u{b0}"), Some(25.0));
        assert_eq!(strategy("use the bounded strategy"), Some("bounded-residual"));
        assert_eq!(limit("bounded residual strategy with limit 0.0105 in"), Some(0.0105));
        assert_eq!(limit("no limit here"), None);
    }

    #[test]
    fn hint_blocks() {
        let t = "compensation for parts 4 to 16 [tools: compute_inspection_pairs, rb_compute_pair_tool_comp]";
        assert_eq!(tool_hints(t).unwrap(), ["compute_inspection_pairs", "rb_compute_pair_tool_comp"]);
        assert_eq!(strip_hints(t), "compensation for parts 4 to 16");
        assert_eq!(tool_hints("x [tools: ]").unwrap(), Vec::<String>::new());
        assert!(tool_hints("no hints").is_none());
        let noted = with_note(t, "recompute Trc[2+17]");
        assert_eq!(strip_hints(&noted), "compensation for parts 4 to 16");
        assert!(with_hints(&noted, &[]).contains("{critic: recompute Trc[2+17]}"));
        let again = with_hints(t, &["a".to_string()]);
        assert_eq!(tool_hints(&again).unwrap(), ["a"]);
    }
}
