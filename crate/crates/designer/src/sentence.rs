use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, DesignError, Result};

pub const BINARY_MAGIC: &[u8; 5] = b"ICBE1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Task,
    Corpus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSentence {
    pub id: String,
    pub tokens: Vec<u32>,
    /// Unit norm after ingestion.
    pub vector: Vec<f64>,
    pub source: Source,
}

impl EmbeddedSentence {
    /// Normalizes `vector`; fails on empty tokens or a zero vector.
    pub fn new(id: impl Into<String>, tokens: Vec<u32>, vector: Vec<f64>, source: Source) -> Result<Self> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(DesignError::EmptyTokens(id));
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(DesignError::ZeroVector(id));
        }
        if !norm.is_finite() {
            return Err(DesignError::InvalidParameter(format!("record {id:?} has a non-finite vector")));
        }
        let vector = vector.into_iter().map(|x| x / norm).collect();
        Ok(Self { id, tokens, vector, source })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Binary,
}

impl InputFormat {
    /// Binary if the file starts with the magic bytes.
    pub fn detect(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Ok(if bytes.starts_with(BINARY_MAGIC) { Self::Binary } else { Self::Jsonl })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    tokens: Vec<u32>,
    vector: Vec<f64>,
}

pub fn ingest_embeddings(path: &Path, format: InputFormat, source: Source) -> Result<Vec<EmbeddedSentence>> {
    let raw = match format {
        InputFormat::Jsonl => read_jsonl(path)?,
        InputFormat::Binary => read_binary(path)?,
    };
    let mut seen = HashSet::new();
    let mut dim = None;
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        if !seen.insert(r.id.clone()) {
            return Err(DesignError::DuplicateId(r.id));
        }
        let d = *dim.get_or_insert(r.vector.len());
        if r.vector.len() != d {
            return Err(DesignError::DimensionMismatch { id: r.id, expected: d, found: r.vector.len() });
        }
        out.push(EmbeddedSentence::new(r.id, r.tokens, r.vector, source)?);
    }
    Ok(out)
}

fn read_jsonl(path: &Path) -> Result<Vec<RawRecord>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| DesignError::Parse { path: path.to_path_buf(), line: i + 1, msg: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

fn read_binary(path: &Path) -> Result<Vec<RawRecord>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    // `line` in errors is the 1-based record index; 0 is the header
    let fail = |record: usize, msg: &str| DesignError::Parse { path: path.to_path_buf(), line: record, msg: msg.to_string() };
    if !bytes.starts_with(BINARY_MAGIC) {
        return Err(fail(0, "missing ICBE1 magic"));
    }
    let mut cur = Cursor { bytes: &bytes, pos: BINARY_MAGIC.len() };
    let dim = cur.u32().ok_or_else(|| fail(0, "truncated header"))? as usize;
    let mut out = Vec::new();
    let mut record = 0;
    while cur.pos < bytes.len() {
        record += 1;
        let rec = cur.record(dim).ok_or_else(|| fail(record, "truncated record"))?;
        let id = String::from_utf8(rec.0).map_err(|_| fail(record, "id is not UTF-8"))?;
        out.push(RawRecord { id, tokens: rec.1, vector: rec.2 });
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|s| u32::from_le_bytes(s.try_into().expect("4 bytes")))
    }

    fn record(&mut self, dim: usize) -> Option<(Vec<u8>, Vec<u32>, Vec<f64>)> {
        let id_len = self.u32()? as usize;
        let id = self.take(id_len)?.to_vec();
        let count = self.u32()? as usize;
        let tokens = self.take(count.checked_mul(4)?)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let vector = self.take(dim.checked_mul(4)?)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
        Some((id, tokens, vector))
    }
}

/// Writes the binary columnar format. All vectors must share one dimension.
pub fn write_binary(path: &Path, sentences: &[EmbeddedSentence]) -> Result<()> {
    let dim = sentences.first().map_or(0, |s| s.vector.len());
    let mut buf = Vec::new();
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for s in sentences {
        if s.vector.len() != dim {
            return Err(DesignError::DimensionMismatch { id: s.id.clone(), expected: dim, found: s.vector.len() });
        }
        buf.extend_from_slice(&(s.id.len() as u32).to_le_bytes());
        buf.extend_from_slice(s.id.as_bytes());
        buf.extend_from_slice(&(s.tokens.len() as u32).to_le_bytes());
        for t in &s.tokens {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        for &x in &s.vector {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

/// Splits on whitespace and assigns ids in first-seen order, starting at
/// `first_id` so that lower ids stay free for separators.
#[derive(Debug, Clone)]
pub struct WhitespaceTokenizer {
    vocab: HashMap<String, u32>,
    next: u32,
}

impl WhitespaceTokenizer {
    pub fn new(first_id: u32) -> Self {
        Self { vocab: HashMap::new(), next: first_id }
    }

    pub fn encode(&mut self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .map(|w| {
                *self.vocab.entry(w.to_string()).or_insert_with(|| {
                    self.next += 1;
                    self.next - 1
                })
            })
            .collect()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

impl Default for WhitespaceTokenizer {
    fn default() -> Self {
        Self::new(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_on_construction() {
        let s = EmbeddedSentence::new("a", vec![1], vec![3.0, 4.0], Source::Task).unwrap();
        assert_eq!(s.vector, vec![0.6, 0.8]);
    }

    #[test]
    fn rejects_zero_vector_and_empty_tokens() {
        assert!(matches!(EmbeddedSentence::new("z", vec![1], vec![0.0; 3], Source::Corpus), Err(DesignError::ZeroVector(_))));
        assert!(matches!(EmbeddedSentence::new("e", vec![], vec![1.0], Source::Corpus), Err(DesignError::EmptyTokens(_))));
    }

    #[test]
    fn tokenizer_reuses_ids() {
        let mut t = WhitespaceTokenizer::new(2);
        assert_eq!(t.encode("the cat  the\tdog"), vec![2, 3, 2, 4]);
        assert_eq!(t.vocab_size(), 3);
    }
}
