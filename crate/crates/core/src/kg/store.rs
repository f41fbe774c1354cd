//! File-backed triple store.
//!
//! Directory layout:
//!
//! ```text
//! <dir>/triples.jsonl    one TripleRecord (without embeddings) per line, append-only
//! <dir>/embeddings.bin   "KGEM", u32 dim, u64 count, then per record v then u as f64 LE
//! <dir>/meta.json        {"embedder": ..., "dim": ...}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::Embedder;
use super::tsv::{parse_line, Parsed, TsvTriple};
use super::KgError;
use crate::digest::{sha256_hex, short};
use crate::session::ProvenanceIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub id: String,
    pub subject: String,
    pub relation: String,
    pub object: String,
    /// Relationship description, used as the triple's context text.
    pub context: String,
    pub figure_ref: String,
    pub source_doc: String,
    #[serde(skip)]
    pub v_embedding: Vec<f64>,
    #[serde(skip)]
    pub u_embedding: Vec<f64>,
}

impl TripleRecord {
    pub fn tsv(&self) -> TsvTriple {
        TsvTriple {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
            object: self.object.clone(),
            description: self.context.clone(),
            figure_ref: self.figure_ref.clone(),
        }
    }

    /// Text embedded into `v`: the triple plus its context.
    pub fn triple_text(&self) -> String {
        format!("{} {} {} {}", self.subject, self.relation.replace('_', " "), self.object, self.context)
    }
}

/// Stable id from document, ordinal within the document and line content.
pub fn triple_id(source_doc: &str, ordinal: usize, line: &str) -> String {
    let h = sha256_hex(format!("{source_doc}\u{0}{ordinal}\u{0}{line}").as_bytes());
    format!("t-{}", short(&h, 16))
}

/// Case-folded, whitespace-collapsed entity text used for adjacency.
pub fn entity_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowReject {
    pub line_no: usize,
    pub line: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub source_doc: String,
    pub added: Vec<String>,
    pub already_present: usize,
    pub repaired: usize,
    pub rejects: Vec<RowReject>,
}

#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    records: Vec<TripleRecord>,
    by_id: HashMap<String, usize>,
    adjacency: HashMap<String, Vec<usize>>,
    dim: usize,
    embedder: String,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    embedder: String,
    dim: usize,
}

const MAGIC: &[u8; 4] = b"KGEM";

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[TripleRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&TripleRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Indices of triples sharing a subject or object entity with `idx`.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let r = &self.records[idx];
        let a = self.adjacency.get(&entity_key(&r.subject)).into_iter().flatten();
        let b = self.adjacency.get(&entity_key(&r.object)).into_iter().flatten();
        a.chain(b).copied().filter(move |&j| j != idx)
    }

    fn check_embedder(&mut self, embedder: &dyn Embedder) -> Result<(), KgError> {
        if self.records.is_empty() && self.embedder.is_empty() {
            self.dim = embedder.dim();
            self.embedder = embedder.name();
            return Ok(());
        }
        if self.dim != embedder.dim() || self.embedder != embedder.name() {
            return Err(KgError::EmbedderMismatch {
                store: format!("{} ({})", self.embedder, self.dim),
                offered: format!("{} ({})", embedder.name(), embedder.dim()),
            });
        }
        Ok(())
    }

    fn push(&mut self, rec: TripleRecord) {
        let idx = self.records.len();
        self.by_id.insert(rec.id.clone(), idx);
        let s = entity_key(&rec.subject);
        let o = entity_key(&rec.object);
        self.adjacency.entry(s.clone()).or_default().push(idx);
        if o != s {
            self.adjacency.entry(o).or_default().push(idx);
        }
        self.records.push(rec);
    }

    /// Parse (with repair), embed and append every row of a five-field file.
    /// Rows already present under the same id are skipped, so re-ingesting
    /// a file is a no-op.
    pub fn ingest_triples(
        &mut self,
        tsv: &str,
        source_doc: &str,
        embedder: &dyn Embedder,
    ) -> Result<IngestReport, KgError> {
        self.check_embedder(embedder)?;
        let mut report = IngestReport { source_doc: source_doc.to_string(), ..Default::default() };
        let mut ordinal = 0;
        for (i, line) in tsv.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t = match parse_line(line) {
                Parsed::Valid(t) => t,
                Parsed::Repaired(t, _) => {
                    report.repaired += 1;
                    t
                }
                Parsed::Rejected(reason) => {
                    report.rejects.push(RowReject { line_no: i + 1, line: line.to_string(), reason });
                    continue;
                }
            };
            ordinal += 1;
            let id = triple_id(source_doc, ordinal, &t.to_line());
            if self.by_id.contains_key(&id) {
                report.already_present += 1;
                continue;
            }
            let mut rec = TripleRecord {
                id: id.clone(),
                subject: t.subject,
                relation: t.relation,
                object: t.object,
                context: t.description,
                figure_ref: t.figure_ref,
                source_doc: source_doc.to_string(),
                v_embedding: Vec::new(),
                u_embedding: Vec::new(),
            };
            rec.v_embedding = embedder.embed(&rec.triple_text())?;
            rec.u_embedding = embedder.embed(&rec.context)?;
            self.push(rec);
            report.added.push(id);
        }
        Ok(report)
    }

    /// Write the whole store. Records are append-only, so this rewrites
    /// the files with the same prefix plus any new rows.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), KgError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut jsonl = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut jsonl, r).map_err(|e| KgError::Format(e.to_string()))?;
            jsonl.push(b'\n');
        }
        std::fs::write(dir.join("triples.jsonl"), jsonl)?;

        let mut bin = Vec::with_capacity(16 + self.records.len() * self.dim * 16);
        bin.extend_from_slice(MAGIC);
        bin.extend_from_slice(&(self.dim as u32).to_le_bytes());
        bin.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            for x in r.v_embedding.iter().chain(&r.u_embedding) {
                bin.extend_from_slice(&x.to_le_bytes());
            }
        }
        std::fs::write(dir.join("embeddings.bin"), bin)?;
        let meta = Meta { embedder: self.embedder.clone(), dim: self.dim };
        let mut f = std::fs::File::create(dir.join("meta.json"))?;
        serde_json::to_writer_pretty(&mut f, &meta).map_err(|e| KgError::Format(e.to_string()))?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, KgError> {
        let dir = dir.as_ref();
        let meta: Meta = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)
            .map_err(|e| KgError::Format(format!("meta.json: {e}")))?;
        let file = std::fs::File::open(dir.join("triples.jsonl"))?;
        let mut records = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: TripleRecord = serde_json::from_str(&line)
                .map_err(|e| KgError::Format(format!("triples.jsonl line {}: {e}", i + 1)))?;
            records.push(r);
        }
        let bin = std::fs::read(dir.join("embeddings.bin"))?;
        if bin.len() < 16 || &bin[..4] != MAGIC {
            return Err(KgError::Format("embeddings.bin: bad header".into()));
        }
        let dim = u32::from_le_bytes(bin[4..8].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bin[8..16].try_into().unwrap()) as usize;
        if dim != meta.dim || count != records.len() || bin.len() != 16 + count * dim * 16 {
            return Err(KgError::Format(format!(
                "embeddings.bin: {count} x {dim} does not match {} records of dim {}",
                records.len(),
                meta.dim
            )));
        }
        let mut floats = bin[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut store = Self { dim, embedder: meta.embedder, ..Default::default() };
        for mut r in records {
            r.v_embedding = floats.by_ref().take(dim).collect();
            r.u_embedding = floats.by_ref().take(dim).collect();
            store.push(r);
        }
        Ok(store)
    }

    /// Counts of triples, distinct case-folded entities and relations.
    pub fn summary(&self) -> (usize, usize, usize) {
        let mut entities = std::collections::BTreeSet::new();
        let mut relations = std::collections::BTreeSet::new();
        for r in &self.records {
            entities.insert(entity_key(&r.subject));
            entities.insert(entity_key(&r.object));
            relations.insert(entity_key(&r.relation));
        }
        (self.records.len(), entities.len(), relations.len())
    }

    pub fn per_document_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.source_doc.clone()).or_default() += 1;
        }
        m
    }
}

impl ProvenanceIndex for TripleStore {
    fn has_output_field(&self, _call: usize, _field: &str) -> bool {
        false
    }
    fn has_triple(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }
}
