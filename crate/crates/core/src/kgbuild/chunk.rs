//! Overlapping character windows with a central extraction region.

use serde::{Deserialize, Serialize};

pub const WINDOW: usize = 1000;
pub const OVERLAP: usize = 500;
pub const STRIDE: usize = WINDOW - OVERLAP;

/// Offsets are in characters, half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkWindow {
    pub doc_id: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub main_start: usize,
    pub main_end: usize,
}

impl ChunkWindow {
    pub fn id(&self) -> String {
        format!("{}#{}", self.doc_id, self.index)
    }

    pub fn main_span(&self) -> (usize, usize) {
        (self.main_start, self.main_end)
    }

    pub fn context_before(&self) -> (usize, usize) {
        (self.start, self.main_start)
    }

    pub fn context_after(&self) -> (usize, usize) {
        (self.main_end, self.end)
    }
}

/// Windows start every 500 characters until one reaches the end of the
/// text. Each main span is the part of its window not shared with a
/// neighbour's centre: `[s + 250, s + 750)`, widened to 0 for the first
/// window and to the end of text for the last.
pub fn chunk_document(doc_id: &str, text: &str) -> Vec<ChunkWindow> {
    let len = text.chars().count();
    if len == 0 {
        return Vec::new();
    }
    let mut starts = vec![0];
    while starts.last().unwrap() + WINDOW < len {
        starts.push(starts.last().unwrap() + STRIDE);
    }
    let last = starts.len() - 1;
    let margin = OVERLAP / 2;
    starts
        .iter()
        .enumerate()
        .map(|(i, &start)| ChunkWindow {
            doc_id: doc_id.to_string(),
            index: i,
            start,
            end: (start + WINDOW).min(len),
            main_start: if i == 0 { 0 } else { start + margin },
            main_end: if i == last { len } else { start + WINDOW - margin },
        })
        .collect()
}

/// Slice `text` by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut idx = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let b0 = idx.nth(start).unwrap_or(text.len());
    let b1 = if end > start {
        idx.nth(end - start - 1).unwrap_or(text.len())
    } else {
        b0
    };
    &text[b0..b1]
}
