//! Five-field triple lines:
//!
//! `ENTITY_1<TAB>RELATIONSHIP_TYPE<TAB>ENTITY_2<TAB>"RELATIONSHIP_DESCRIPTION"<TAB>FIGURE_REFERENCE`
//!
//! [`parse_line`] accepts strict lines as-is and repairs three classes of
//! minor damage: stray double quotes, a missing (empty) figure reference,
//! and doubled tabs. Anything else is rejected.

use serde::{Deserialize, Serialize};

pub const FORMAT_LINE: &str =
    "ENTITY_1\tRELATIONSHIP_TYPE\tENTITY_2\t\"RELATIONSHIP_DESCRIPTION\"\tFIGURE_REFERENCE";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TsvTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    /// Description without its surrounding quotes.
    pub description: String,
    pub figure_ref: String,
}

impl TsvTriple {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t\"{}\"\t{}",
            self.subject, self.relation, self.object, self.description, self.figure_ref
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Repair {
    StrayQuotes,
    MissingFigureRef,
    DoubledTabs,
}

impl Repair {
    pub fn note(self) -> &'static str {
        match self {
            Self::StrayQuotes => "normalized stray quotes",
            Self::MissingFigureRef => "added empty figure reference",
            Self::DoubledTabs => "collapsed doubled tabs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum LineStatus {
    Valid,
    Repaired { repairs: Vec<Repair> },
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTripleLine {
    pub line: String,
    pub status: LineStatus,
    pub repair_note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parsed {
    Valid(TsvTriple),
    Repaired(TsvTriple, Vec<Repair>),
    Rejected(String),
}

impl Parsed {
    pub fn triple(&self) -> Option<&TsvTriple> {
        match self {
            Self::Valid(t) | Self::Repaired(t, _) => Some(t),
            Self::Rejected(_) => None,
        }
    }

    pub fn to_raw(&self, line: &str) -> RawTripleLine {
        let (status, repair_note) = match self {
            Self::Valid(_) => (LineStatus::Valid, String::new()),
            Self::Repaired(_, r) => (
                LineStatus::Repaired { repairs: r.clone() },
                r.iter().map(|x| x.note()).collect::<Vec<_>>().join("; "),
            ),
            Self::Rejected(reason) => (LineStatus::Rejected { reason: reason.clone() }, String::new()),
        };
        RawTripleLine { line: line.to_string(), status, repair_note }
    }
}

fn is_quoted(s: &str) -> bool {
    s.len() >= 2 && s.starts_with('"') && s.ends_with('"')
}

pub fn parse_line(line: &str) -> Parsed {
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.trim().is_empty() {
        return Parsed::Rejected("blank line".into());
    }
    if !line.contains('\t') {
        return Parsed::Rejected("no tab separators".into());
    }
    let mut repairs = Vec::new();
    let mut fields: Vec<&str> = line.split('\t').collect();

    if fields.len() > 5 {
        // Empty interior fields come from doubled tabs; the last field may
        // legitimately be an empty figure reference.
        let last = fields.len() - 1;
        let kept: Vec<&str> = fields
            .iter()
            .enumerate()
            .filter(|&(i, f)| i == last || !f.is_empty())
            .map(|(_, f)| *f)
            .collect();
        if kept.len() < fields.len() {
            repairs.push(Repair::DoubledTabs);
            fields = kept;
        }
        if fields.len() == 6 && fields[5].is_empty() {
            // trailing tab after a complete figure reference
            fields.pop();
        }
    }
    if fields.len() == 4 {
        repairs.push(Repair::MissingFigureRef);
        fields.push("");
    }
    if fields.len() != 5 {
        return Parsed::Rejected(format!("expected 5 tab-separated fields, found {}", fields.len()));
    }

    let mut out = [String::new(), String::new(), String::new(), String::new(), String::new()];
    let mut stray = false;
    for (i, f) in fields.iter().enumerate() {
        if i == 3 {
            if is_quoted(f) && !f[1..f.len() - 1].is_empty() {
                out[i] = f[1..f.len() - 1].to_string();
            } else {
                let inner = f.trim_matches('"');
                if inner.is_empty() {
                    return Parsed::Rejected("empty relationship description".into());
                }
                stray = true;
                out[i] = inner.to_string();
            }
        } else {
            if f.contains('"') {
                stray = true;
            }
            out[i] = f.replace('"', "");
        }
    }
    let names = ["entity 1", "relationship type", "entity 2"];
    for (i, name) in names.iter().enumerate() {
        if out[i].trim().is_empty() {
            return Parsed::Rejected(format!("empty {name}"));
        }
    }
    if out[..3].iter().any(|f| f != f.trim()) {
        return Parsed::Rejected("padded entity field".into());
    }
    if stray {
        repairs.push(Repair::StrayQuotes);
    }
    if out[0] == "ENTITY_1" && out[1] == "RELATIONSHIP_TYPE" {
        return Parsed::Rejected("format header".into());
    }
    let [subject, relation, object, description, figure_ref] = out;
    let t = TsvTriple { subject, relation, object, description, figure_ref };
    if repairs.is_empty() {
        Parsed::Valid(t)
    } else {
        repairs.sort_by_key(|r| *r as u8);
        repairs.dedup();
        Parsed::Repaired(t, repairs)
    }
}

/// Parse every non-blank line of a document.
pub fn parse_document(text: &str) -> Vec<(String, Parsed)> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| (l.to_string(), parse_line(l)))
        .collect()
}

pub fn write_lines<'a>(triples: impl IntoIterator<Item = &'a TsvTriple>) -> String {
    let mut s = String::new();
    for t in triples {
        s.push_str(&t.to_line());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn valid_line() {
        let line = "Ti-6Al-4V\tHAS_PROPERTY\tlow thermal conductivity\t\"reduces heat dissipation\"\tFigure 3";
        match parse_line(line) {
            Parsed::Valid(t) => {
                assert_eq!(t.description, "reduces heat dissipation");
                assert_eq!(t.figure_ref, "Figure 3");
                assert_eq!(t.to_line(), line);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_figure_ref_is_valid() {
        let line = "a\tR\tb\t\"d\"\t";
        assert!(matches!(parse_line(line), Parsed::Valid(_)));
    }

    #[test]
    fn four_fields_get_empty_figure_ref() {
        match parse_line("a\tR\tb\t\"d\"") {
            Parsed::Repaired(t, r) => {
                assert_eq!(r, vec![Repair::MissingFigureRef]);
                assert_eq!(t.to_line(), "a\tR\tb\t\"d\"\t");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stray_quotes() {
        for line in ["\"a\"\tR\tb\t\"d\"\tTable 1", "a\tR\tb\td\tTable 1", "a\tR\tb\t\"d\tTable 1"] {
            match parse_line(line) {
                Parsed::Repaired(t, r) => {
                    assert_eq!(r, vec![Repair::StrayQuotes], "{line}");
                    assert_eq!(t.to_line(), "a\tR\tb\t\"d\"\tTable 1");
                }
                other => panic!("{line}: {other:?}"),
            }
        }
    }

    #[test]
    fn doubled_tabs() {
        match parse_line("a\t\tR\tb\t\t\"d\"\tFig. 2") {
            Parsed::Repaired(t, r) => {
                assert_eq!(r, vec![Repair::DoubledTabs]);
                assert_eq!(t.to_line(), "a\tR\tb\t\"d\"\tFig. 2");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects() {
        for line in [
            "The alloy has low conductivity.",
            "a\tb",
            "a\tR\tb\tc\td\te\tf",
            "\tR\tb\t\"d\"\t",
            "a\tR\tb\t\"\"\t",
            FORMAT_LINE,
        ] {
            assert!(matches!(parse_line(line), Parsed::Rejected(_)), "{line:?}");
        }
    }

    proptest! {
        #[test]
        fn round_trip(
            s in "[A-Za-z0-9][A-Za-z0-9 ._-]{0,20}[A-Za-z0-9]",
            r in "[A-Z_]{1,12}",
            o in "[A-Za-z0-9][A-Za-z0-9 ._-]{0,20}[A-Za-z0-9]",
            d in "[A-Za-z0-9 ,.()%-]{1,40}",
            f in prop_oneof![Just(String::new()), "(Table|Figure) [0-9]{1,2}"],
        ) {
            let t = TsvTriple { subject: s, relation: r, object: o, description: d, figure_ref: f };
            let line = t.to_line();
            prop_assert_eq!(parse_line(&line), Parsed::Valid(t.clone()));
            prop_assert_eq!(parse_line(&line).triple().unwrap().to_line(), line);
        }
    }
}
