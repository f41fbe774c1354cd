//! Quantitative QA scoring, seeded multiple-choice generation and paired
//! KG / no-KG runs.

use std::sync::LazyLock;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::gateway::{Backend, Role};
use crate::kg::KgContext;
use crate::kgagent::answer_query;

pub const DEFAULT_ITEMS: &str = include_str!("../../benchmarks/kg_qa/items.jsonl");

/// The bundled machining corpus the QA bank is written against, as
/// (document id, five-field TSV).
pub const FIXTURE_CORPUS: [(&str, &str); 4] = [
    ("compensation_practice", include_str!("../../fixtures/kg/compensation_practice.tsv")),
    ("deflection_thin_walls", include_str!("../../fixtures/kg/deflection_thin_walls.tsv")),
    ("machining_titanium", include_str!("../../fixtures/kg/machining_titanium.tsv")),
    ("superalloy_guidance", include_str!("../../fixtures/kg/superalloy_guidance.tsv")),
];

pub fn fixture_context(config: crate::kg::RetrievalConfig) -> KgContext {
    let e = crate::kg::HashEmbedder::default();
    let mut store = crate::kg::TripleStore::default();
    for (doc, tsv) in FIXTURE_CORPUS {
        store.ingest_triples(tsv, doc, &e).expect("bundled corpus ingests");
    }
    KgContext::new(store, std::sync::Arc::new(e), config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QaFormat {
    Open,
    Mcq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericTarget {
    pub value: f64,
    /// Absolute tolerance in the target's unit.
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub format: QaFormat,
    pub prompt: String,
    #[serde(default)]
    pub numeric_targets: Vec<NumericTarget>,
    #[serde(default)]
    pub required_terms: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

pub fn parse_items(text: &str) -> Result<Vec<QaItem>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Format(format!("qa line {}: {e}", i + 1))))
        .collect()
}

pub fn default_items() -> Vec<QaItem> {
    parse_items(DEFAULT_ITEMS).expect("bundled QA bank parses")
}

// (spelling, dimension, factor to the dimension's base unit). Longest
// spellings first so "m/min" wins over "m".
const UNITS: &[(&str, &str, f64)] = &[
    ("mm/rev", "feed", 1.0),
    ("in/rev", "feed", 25.4),
    ("ft/min", "speed", 0.3048),
    ("m/min", "speed", 1.0),
    ("m/s", "speed", 60.0),
    ("sfm", "speed", 0.3048),
    ("rpm", "rotation", 1.0),
    ("khz", "frequency", 1000.0),
    ("hz", "frequency", 1.0),
    ("gpa", "stress", 1000.0),
    ("mpa", "stress", 1.0),
    ("kn", "force", 1000.0),
    ("n", "force", 1.0),
    ("microns", "length", 0.001),
    ("micron", "length", 0.001),
    ("µm", "length", 0.001),
    ("um", "length", 0.001),
    ("mm", "length", 1.0),
    ("inches", "length", 25.4),
    ("inch", "length", 25.4),
    ("in", "length", 25.4),
    ("°c", "temperature", 1.0),
    ("c", "temperature", 1.0),
    ("%", "percent", 1.0),
];

fn unit_info(u: &str) -> Option<(&'static str, f64)> {
    let u = u.trim().to_lowercase();
    UNITS.iter().find(|(s, _, _)| *s == u).map(|(_, d, f)| (*d, *f))
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    let units: Vec<String> = UNITS.iter().map(|(s, _, _)| regex::escape(s)).collect();
    Regex::new(&format!(
        r"(?i)(-?(?:\d{{1,3}}(?:,\d{{3}})+|\d+)(?:\.\d+)?(?:e[-+]?\d+)?)\s*(?:({})(?:\b|$|[^a-z]))?",
        units.join("|")
    ))
    .unwrap()
});

/// Numbers in `text` with their unit when one follows directly.
pub fn extract_numbers(text: &str) -> Vec<(f64, Option<String>)> {
    NUMBER
        .captures_iter(text)
        .filter_map(|c| {
            let x: f64 = c[1].replace(',', "").parse().ok()?;
            Some((x, c.get(2).map(|m| m.as_str().to_lowercase())))
        })
        .collect()
}

fn matches_target(t: &NumericTarget, found: &[(f64, Option<String>)]) -> bool {
    let want = t.unit.as_deref().and_then(unit_info);
    found.iter().any(|(x, u)| {
        let x = match (want, u.as_deref().and_then(unit_info)) {
            (Some((d, f)), Some((d2, f2))) if d == d2 => x * f2 / f,
            (Some(_), Some(_)) => return false,
            _ => *x,
        };
        (x - t.value).abs() <= t.tolerance
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaScore {
    pub score: f64,
    pub numeric_fraction: f64,
    pub term_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    pub unparseable: bool,
}

static OPTION_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:option|answer|choice)\s*(?:is\s*)?[:(]?\s*\(?([a-z])\b").unwrap());
static OPTION_LEAD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\(?([A-Za-z])(?:[).:\s]|$)").unwrap());

/// The option letter an answer picks, as a 0-based index.
pub fn parse_option(answer: &str, n_options: usize) -> Option<usize> {
    let idx = |c: &str| {
        let i = (c.to_ascii_uppercase().as_bytes()[0] - b'A') as usize;
        (i < n_options).then_some(i)
    };
    OPTION_WORD
        .captures(answer)
        .and_then(|c| idx(&c[1]))
        .or_else(|| OPTION_LEAD.captures(answer).and_then(|c| idx(&c[1])))
}

pub fn option_letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// Open items: half for numeric targets matched within tolerance, half for
/// required terms present (case-folded); a component with no entries is
/// left out. MCQ items: exact option match.
pub fn score_qa(item: &QaItem, answer: &str) -> QaScore {
    if answer.trim().is_empty() {
        return QaScore { score: 0.0, numeric_fraction: 0.0, term_fraction: 0.0, correct: None, unparseable: true };
    }
    match item.format {
        QaFormat::Mcq => match (parse_option(answer, item.options.len()), item.correct) {
            (Some(i), Some(c)) => {
                let ok = i == c;
                QaScore {
                    score: if ok { 1.0 } else { 0.0 },
                    numeric_fraction: 0.0,
                    term_fraction: 0.0,
                    correct: Some(ok),
                    unparseable: false,
                }
            }
            _ => QaScore { score: 0.0, numeric_fraction: 0.0, term_fraction: 0.0, correct: Some(false), unparseable: true },
        },
        QaFormat::Open => {
            let found = extract_numbers(answer);
            let lower = answer.to_lowercase();
            let frac = |hit: usize, n: usize| if n == 0 { None } else { Some(hit as f64 / n as f64) };
            let num = frac(item.numeric_targets.iter().filter(|t| matches_target(t, &found)).count(), item.numeric_targets.len());
            let terms =
                frac(item.required_terms.iter().filter(|t| lower.contains(&t.to_lowercase())).count(), item.required_terms.len());
            let score = match (num, terms) {
                (Some(a), Some(b)) => 0.5 * a + 0.5 * b,
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => 0.0,
            };
            QaScore { score, numeric_fraction: num.unwrap_or(0.0), term_fraction: terms.unwrap_or(0.0), correct: None, unparseable: false }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{id}: skipped ({reason})")]
pub struct McqSkip {
    pub id: String,
    pub reason: String,
}

fn fmt_number(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn id_key(id: &str) -> u64 {
    // FNV-1a; only needs to be stable.
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Multiple-choice version of an open item: the first numeric target plus
/// three distractors scaled by seeded factors from ±10/25/50 %, each pushed
/// outward to the next magnitude until it leaves the tolerance band.
pub fn generate_mcq(item: &QaItem, seed: u64) -> Result<QaItem, McqSkip> {
    let skip = |reason: &str| McqSkip { id: item.id.clone(), reason: reason.into() };
    let t = item.numeric_targets.first().ok_or_else(|| skip("no numeric target"))?;
    if t.value == 0.0 || !t.value.is_finite() {
        return Err(skip("zero target cannot be scaled"));
    }
    const LEVELS: [f64; 3] = [0.10, 0.25, 0.50];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ id_key(&item.id));
    let mut signed: Vec<(f64, usize)> = (0..3).flat_map(|l| [(1.0, l), (-1.0, l)]).collect();
    signed.shuffle(&mut rng);
    let unit = t.unit.as_deref().map(|u| format!(" {u}")).unwrap_or_default();
    let correct_text = format!("{}{unit}", fmt_number(t.value));
    let mut distractors: Vec<String> = Vec::new();
    for (sign, start) in signed {
        let Some(m) = LEVELS[start..].iter().find(|m| (t.value * *m).abs() > t.tolerance) else { continue };
        let text = format!("{}{unit}", fmt_number(t.value * (1.0 + sign * m)));
        if text != correct_text && !distractors.contains(&text) {
            distractors.push(text);
        }
        if distractors.len() == 3 {
            break;
        }
    }
    if distractors.len() < 3 {
        return Err(skip("tolerance covers the perturbation range"));
    }
    let mut options = distractors;
    options.push(correct_text.clone());
    options.shuffle(&mut rng);
    let correct = options.iter().position(|o| *o == correct_text);
    Ok(QaItem {
        id: format!("{}-mcq", item.id),
        format: QaFormat::Mcq,
        prompt: item.prompt.clone(),
        numeric_targets: item.numeric_targets.clone(),
        required_terms: item.required_terms.clone(),
        options,
        correct,
        seed,
    })
}

/// Prompt text for an MCQ item, options lettered.
pub fn mcq_prompt(item: &QaItem) -> String {
    let mut s = format!("{}\n", item.prompt);
    for (i, o) in item.options.iter().enumerate() {
        s.push_str(&format!("{}. {o}\n", option_letter(i)));
    }
    s.push_str("Answer with the option letter.\n");
    s
}

/// Pick the option closest to any number in `evidence`, in relative
/// terms and compatible units.
pub fn choose_option(item: &QaItem, evidence: &str) -> Option<usize> {
    let unit = item.numeric_targets.first().and_then(|t| t.unit.as_deref()).and_then(unit_info);
    let mut found = extract_numbers(evidence);
    // Numbers carrying the target's dimension outrank bare numbers.
    if let Some((d, _)) = unit {
        if found.iter().any(|(_, u)| u.as_deref().and_then(unit_info).is_some_and(|(d2, _)| d2 == d)) {
            found.retain(|(_, u)| u.as_deref().and_then(unit_info).is_some_and(|(d2, _)| d2 == d));
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, o) in item.options.iter().enumerate() {
        let Some(&(x, _)) = extract_numbers(o).first() else { continue };
        for (y, u) in &found {
            let y = match (unit, u.as_deref().and_then(unit_info)) {
                (Some((d, f)), Some((d2, f2))) if d == d2 => y * f2 / f,
                (Some(_), Some(_)) => continue,
                _ => *y,
            };
            let err = (x - y).abs() / x.abs().max(f64::MIN_POSITIVE);
            if best.is_none_or(|(e, _)| err < e) {
                best = Some((err, i));
            }
        }
    }
    best.map(|(_, i)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaResult {
    pub id: String,
    pub condition: String,
    pub format: QaFormat,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    pub seconds: f64,
}

/// Answer and score every item, timing each answer.
pub fn run_qa(items: &[QaItem], condition: &str, answer: &mut dyn FnMut(&QaItem) -> String) -> Vec<QaResult> {
    items
        .iter()
        .map(|item| {
            let t0 = Instant::now();
            let text = answer(item);
            let seconds = t0.elapsed().as_secs_f64();
            let s = score_qa(item, &text);
            QaResult { id: item.id.clone(), condition: condition.into(), format: item.format, score: s.score, correct: s.correct, seconds }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaSummary {
    pub condition: String,
    pub format: QaFormat,
    pub items: usize,
    /// Mean score for open items, accuracy for MCQ items.
    pub mean_score: f64,
    pub mean_seconds: f64,
}

pub fn summarize(results: &[QaResult]) -> Vec<QaSummary> {
    let mut keys: Vec<(String, QaFormat)> = Vec::new();
    for r in results {
        if !keys.iter().any(|(c, f)| *c == r.condition && *f == r.format) {
            keys.push((r.condition.clone(), r.format));
        }
    }
    keys.into_iter()
        .map(|(condition, format)| {
            let rs: Vec<&QaResult> = results.iter().filter(|r| r.condition == condition && r.format == format).collect();
            let n = rs.len() as f64;
            QaSummary {
                condition,
                format,
                items: rs.len(),
                mean_score: rs.iter().map(|r| r.score).sum::<f64>() / n,
                mean_seconds: rs.iter().map(|r| r.seconds).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn qa_csv(results: &[QaResult]) -> String {
    let mut s = String::from("id,condition,format,score,correct,seconds\n");
    for r in results {
        s.push_str(&format!(
            "{},{},{},{:.4},{},{:.6}\n",
            r.id,
            r.condition,
            if r.format == QaFormat::Open { "open" } else { "mcq" },
            r.score,
            r.correct.map(|c| c.to_string()).unwrap_or_default(),
            r.seconds
        ));
    }
    s
}

/// Answers with knowledge-graph retrieval: the synthesized narrative for
/// open items, the option nearest the retrieved evidence for MCQ items.
pub fn kg_answer(item: &QaItem, backend: &dyn Backend, ctx: &KgContext) -> String {
    match item.format {
        QaFormat::Open => answer_query(&item.prompt, None, backend, ctx).map(|a| a.narrative).unwrap_or_default(),
        QaFormat::Mcq => {
            let Ok(r) = ctx.retrieve(&item.prompt) else { return String::new() };
            let evidence: String = r
                .evidence_ids()
                .filter_map(|id| ctx.store.get(id))
                .map(|t| format!("{}\n", t.context))
                .collect();
            match choose_option(item, &evidence) {
                Some(i) => format!("Answer: {}", option_letter(i)),
                None => backend.complete(Role::KgSynthesizer, &mcq_prompt(item)).unwrap_or_default(),
            }
        }
    }
}

/// Answers from the backend alone.
pub fn plain_answer(item: &QaItem, backend: &dyn Backend) -> String {
    let prompt = match item.format {
        QaFormat::Open => item.prompt.clone(),
        QaFormat::Mcq => mcq_prompt(item),
    };
    backend.complete(Role::KgSynthesizer, &prompt).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgQaReport {
    pub results: Vec<QaResult>,
    pub summary: Vec<QaSummary>,
    pub skipped: Vec<McqSkip>,
}

impl KgQaReport {
    pub fn to_csv(&self) -> String {
        let mut s = qa_csv(&self.results);
        for m in &self.summary {
            s.push_str(&format!(
                "# {} {} items={} mean_score={:.4} mean_seconds={:.6}\n",
                m.condition,
                if m.format == QaFormat::Open { "open" } else { "mcq" },
                m.items,
                m.mean_score,
                m.mean_seconds
            ));
        }
        for k in &self.skipped {
            s.push_str(&format!("# skipped {k}\n"));
        }
        s
    }
}

/// Paired KG / no-KG run over the open items and their generated MCQ
/// versions.
pub fn run_kg_qa(items: &[QaItem], mcq_seed: u64, backend: &dyn Backend, ctx: &KgContext) -> KgQaReport {
    let mut all: Vec<QaItem> = items.to_vec();
    let mut skipped = Vec::new();
    for it in items.iter().filter(|i| i.format == QaFormat::Open) {
        match generate_mcq(it, mcq_seed) {
            Ok(m) => all.push(m),
            Err(e) => skipped.push(e),
        }
    }
    let mut results = run_qa(&all, "kg", &mut |i| kg_answer(i, backend, ctx));
    results.extend(run_qa(&all, "no-kg", &mut |i| plain_answer(i, backend)));
    let summary = summarize(&results);
    KgQaReport { results, summary, skipped }
}
