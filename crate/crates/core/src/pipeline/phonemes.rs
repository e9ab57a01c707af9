use std::collections::BTreeMap;
use std::path::Path;

use crate::dsp::{frame_count, HOP, WIN_LEN};
use crate::error::{Error, Result};

/// Name of the catch-all class for symbols missing from the folding table.
pub const OTHER: &str = "other";

const DEFAULT_TABLE: &str = include_str!("../../data/timit_61_to_39.txt");

/// Maps source phone symbols onto folded class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct PhonemeFolding {
    map: BTreeMap<String, usize>,
    classes: Vec<String>,
}

impl PhonemeFolding {
    /// The standard TIMIT 61 -> 39 folding plus `other`.
    pub fn timit() -> Self {
        Self::parse(DEFAULT_TABLE).expect("built-in folding table")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// `source target` lines; lines starting with `#` are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut classes: Vec<String> = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [src, dst] = fields[..] else {
                return Err(Error::Format(format!("folding table line {}: expected `source target`", no + 1)));
            };
            let id = match classes.iter().position(|c| c == dst) {
                Some(i) => i,
                None => {
                    classes.push(dst.to_string());
                    classes.len() - 1
                }
            };
            if map.insert(src.to_string(), id).is_some() {
                return Err(Error::Format(format!("folding table line {}: `{}` mapped twice", no + 1, src)));
            }
        }
        if !classes.iter().any(|c| c == OTHER) {
            classes.push(OTHER.to_string());
        }
        Ok(PhonemeFolding { map, classes })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_name(&self, id: usize) -> &str {
        &self.classes[id]
    }

    pub fn other(&self) -> usize {
        self.classes.iter().position(|c| c == OTHER).expect("other class")
    }

    /// Folded id of a source symbol; unknown symbols go to `other`.
    pub fn fold(&self, symbol: &str) -> usize {
        self.map.get(symbol).copied().unwrap_or_else(|| self.other())
    }
}

/// One `start end symbol` line of a label file (sample offsets, end exclusive).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhoneSpan {
    pub start: usize,
    pub end: usize,
    pub symbol: String,
}

pub fn parse_phn(text: &str, origin: &str) -> Result<Vec<PhoneSpan>> {
    let mut spans = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("{}:{}: expected `start end phoneme`", origin, no + 1));
        let mut it = line.split_whitespace();
        let start = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let end = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let symbol = it.next().ok_or_else(bad)?.to_string();
        if end < start {
            return Err(Error::Format(format!("{}:{}: span ends before it starts", origin, no + 1)));
        }
        spans.push(PhoneSpan { start, end, symbol });
    }
    Ok(spans)
}

pub fn read_phn(path: impl AsRef<Path>) -> Result<Vec<PhoneSpan>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_phn(&text, &path.display().to_string())
}

pub fn format_phn(spans: &[PhoneSpan]) -> String {
    spans.iter().map(|s| format!("{} {} {}\n", s.start, s.end, s.symbol)).collect()
}

/// Folded class per STFT frame: the span covering the frame's centre sample.
///
/// Frames whose centre no span covers are labelled `other`.
pub fn frame_labels(spans: &[PhoneSpan], signal_len: usize, folding: &PhonemeFolding) -> Vec<usize> {
    (0..frame_count(signal_len))
        .map(|t| {
            let centre = t * HOP + WIN_LEN / 2;
            spans
                .iter()
                .find(|s| s.start <= centre && centre < s.end)
                .map(|s| folding.fold(&s.symbol))
                .unwrap_or_else(|| folding.other())
        })
        .collect()
}
