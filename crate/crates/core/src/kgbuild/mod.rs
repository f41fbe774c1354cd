//! Offline construction of the triple corpus from markdown documents:
//! windowing, prompt assembly, five-field parsing with repair, table
//! reference propagation and aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Backend, Role};
use crate::kg::store::entity_key;
use crate::kg::tsv::{parse_line, Parsed, RawTripleLine, TsvTriple, FORMAT_LINE};

pub mod chunk;

pub use chunk::{char_slice, chunk_document, ChunkWindow};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("extraction failed for window {window}: {reason}")]
    Extraction { window: String, reason: String },
    #[error("transcript line {line}: {reason}")]
    Transcript { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn build_prompt(window: &ChunkWindow, text: &str) -> String {
    let (b0, b1) = window.context_before();
    let (m0, m1) = window.main_span();
    let (a0, a1) = window.context_after();
    format!(
        "Extract knowledge-graph triples from a technical document.\n\
         Triples are extracted from CHUNK_MAIN only. CONTEXT_BEFORE and CONTEXT_AFTER are given \
         only to resolve references to tables and figures.\n\
         Write one triple per line, tab-separated, in exactly this format:\n\
         {FORMAT_LINE}\n\
         Quote the description with double quotes. Leave FIGURE_REFERENCE empty when none applies. \
         Output nothing else.\n\n\
         CONTEXT_BEFORE:\n{}\n\n\
         CHUNK_MAIN:\n{}\n\n\
         CONTEXT_AFTER:\n{}\n",
        char_slice(text, b0, b1),
        char_slice(text, m0, m1),
        char_slice(text, a0, a1),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleDraft {
    pub doc_id: String,
    pub window_id: String,
    pub triple: TsvTriple,
    pub repaired: bool,
    pub repair_note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub drafts: Vec<TripleDraft>,
    pub rejects: Vec<RawTripleLine>,
}

/// Split a model response into drafts and rejected lines. Blank lines are
/// ignored; every other line is either a draft or a reject.
pub fn parse_triples(model_output: &str, doc_id: &str, window_id: &str) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    for line in model_output.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_line(line);
        let raw = parsed.to_raw(line);
        match parsed {
            Parsed::Valid(t) | Parsed::Repaired(t, _) => out.drafts.push(TripleDraft {
                doc_id: doc_id.to_string(),
                window_id: window_id.to_string(),
                triple: t,
                repaired: !raw.repair_note.is_empty(),
                repair_note: raw.repair_note,
            }),
            Parsed::Rejected(_) => out.rejects.push(raw),
        }
    }
    out
}

fn is_schema(t: &TsvTriple) -> bool {
    t.figure_ref.trim_start().starts_with("Table")
}

/// Cell triples with an empty figure reference inherit the reference of a
/// schema triple (one citing a table) with the same subject in the same
/// window. Conflicting schema references leave the draft unchanged and
/// produce a warning.
pub fn propagate_table_refs(mut drafts: Vec<TripleDraft>) -> (Vec<TripleDraft>, Vec<String>) {
    let mut refs: HashMap<(String, String), BTreeSet<String>> = HashMap::new();
    for d in drafts.iter().filter(|d| is_schema(&d.triple)) {
        refs.entry((d.window_id.clone(), entity_key(&d.triple.subject)))
            .or_default()
            .insert(d.triple.figure_ref.clone());
    }
    let mut warnings = Vec::new();
    for d in drafts.iter_mut().filter(|d| d.triple.figure_ref.is_empty()) {
        let key = (d.window_id.clone(), entity_key(&d.triple.subject));
        match refs.get(&key) {
            Some(set) if set.len() == 1 => {
                d.triple.figure_ref = set.iter().next().unwrap().clone();
            }
            Some(set) => warnings.push(format!(
                "{}: subject {:?} has conflicting table references {}",
                d.window_id,
                d.triple.subject,
                set.iter().cloned().collect::<Vec<_>>().join(", ")
            )),
            None => {}
        }
    }
    (drafts, warnings)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocOutput {
    pub doc_id: String,
    pub windows: usize,
    pub drafts: Vec<TripleDraft>,
    pub rejects: Vec<RawTripleLine>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub triples: usize,
    pub unique_entities: usize,
    pub unique_relations: usize,
    pub per_document: BTreeMap<String, usize>,
}

/// Raw counts with no deduplication; entities and relations are counted
/// case-folded.
pub fn summarize(docs: &[DocOutput]) -> CorpusSummary {
    let mut entities = BTreeSet::new();
    let mut relations = BTreeSet::new();
    let mut per_document = BTreeMap::new();
    let mut triples = 0;
    for d in docs {
        *per_document.entry(d.doc_id.clone()).or_insert(0) += d.drafts.len();
        triples += d.drafts.len();
        for t in d.drafts.iter().map(|x| &x.triple) {
            entities.insert(entity_key(&t.subject));
            entities.insert(entity_key(&t.object));
            relations.insert(entity_key(&t.relation));
        }
    }
    CorpusSummary { triples, unique_entities: entities.len(), unique_relations: relations.len(), per_document }
}

/// Write `docs/<doc>.tsv`, `global.tsv`, `global.sources` (one document id
/// per line of `global.tsv`) and `summary.json`.
pub fn aggregate(docs: &[DocOutput], out_dir: impl AsRef<Path>) -> Result<CorpusSummary, BuildError> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out.join("docs"))?;
    let mut global = String::new();
    let mut sources = String::new();
    for d in docs {
        let mut body = String::new();
        for t in &d.drafts {
            body.push_str(&t.triple.to_line());
            body.push('\n');
            sources.push_str(&d.doc_id);
            sources.push('\n');
        }
        std::fs::write(out.join("docs").join(format!("{}.tsv", d.doc_id)), &body)?;
        global.push_str(&body);
    }
    std::fs::write(out.join("global.tsv"), global)?;
    std::fs::write(out.join("global.sources"), sources)?;
    let summary = summarize(docs);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(out.join("summary.json"), json + "\n")?;
    Ok(summary)
}

/// Recorded extraction responses keyed by window id, stored as JSON lines
/// `{"window_id": ..., "text": ...}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct TranscriptLine {
    window_id: String,
    text: String,
}

impl Transcript {
    pub fn from_jsonl(text: &str) -> Result<Self, BuildError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: TranscriptLine = serde_json::from_str(line)
                .map_err(|e| BuildError::Transcript { line: i + 1, reason: e.to_string() })?;
            entries.insert(rec.window_id, rec.text);
        }
        Ok(Self { entries })
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|(w, t)| {
                serde_json::to_string(&TranscriptLine { window_id: w.clone(), text: t.clone() }).unwrap() + "\n"
            })
            .collect()
    }
}

/// Anything that turns an extraction prompt into model output.
pub trait ExtractionSource: Sync {
    fn extract(&self, window_id: &str, prompt: &str) -> Result<String, BuildError>;
}

impl ExtractionSource for Transcript {
    fn extract(&self, window_id: &str, _prompt: &str) -> Result<String, BuildError> {
        self.entries.get(window_id).cloned().ok_or_else(|| BuildError::Extraction {
            window: window_id.to_string(),
            reason: "no transcript entry".into(),
        })
    }
}

/// Live extraction through a model backend with the extractor role.
pub struct BackendExtractor<'a>(pub &'a dyn Backend);

impl ExtractionSource for BackendExtractor<'_> {
    fn extract(&self, window_id: &str, prompt: &str) -> Result<String, BuildError> {
        self.0
            .complete(Role::Extractor, prompt)
            .map_err(|e| BuildError::Extraction { window: window_id.to_string(), reason: e.to_string() })
    }
}

/// Run every window of one document through `source`. Returns the
/// per-window responses alongside so a live run can be saved as a
/// transcript.
pub fn build_document(
    doc_id: &str,
    text: &str,
    source: &dyn ExtractionSource,
) -> Result<(DocOutput, Vec<(String, String)>), BuildError> {
    let windows = chunk_document(doc_id, text);
    let mut drafts = Vec::new();
    let mut rejects = Vec::new();
    let mut responses = Vec::new();
    for w in &windows {
        let id = w.id();
        let response = source.extract(&id, &build_prompt(w, text))?;
        let parsed = parse_triples(&response, doc_id, &id);
        drafts.extend(parsed.drafts);
        rejects.extend(parsed.rejects);
        responses.push((id, response));
    }
    let (drafts, warnings) = propagate_table_refs(drafts);
    Ok((DocOutput { doc_id: doc_id.to_string(), windows: windows.len(), drafts, rejects, warnings }, responses))
}

/// Process documents concurrently; outputs keep input order.
pub fn build_corpus(
    docs: &[(String, String)],
    source: &dyn ExtractionSource,
) -> Result<(Vec<DocOutput>, Transcript), BuildError> {
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = docs
            .iter()
            .map(|(id, text)| s.spawn(move || build_document(id, text, source)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("document worker panicked")).collect()
    });
    let mut outputs = Vec::new();
    let mut transcript = Transcript::default();
    for r in results {
        let (doc, responses) = r?;
        transcript.entries.extend(responses);
        outputs.push(doc);
    }
    Ok((outputs, transcript))
}
