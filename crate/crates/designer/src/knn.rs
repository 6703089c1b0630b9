use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DesignError, Result};
use crate::sentence::EmbeddedSentence;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub id: String,
    /// Position in the searched corpus.
    pub index: usize,
    pub cosine: f64,
}

/// Entries sorted by cosine descending, then id ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborList {
    pub query_id: String,
    pub entries: Vec<Neighbor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    pub threshold: f64,
    /// Corpus rows scanned per parallel task. Does not affect results.
    pub shard_size: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 10, threshold: crate::DEFAULT_THRESHOLD, shard_size: 1024 }
    }
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(DesignError::InvalidParameter(format!("threshold must lie in [-1, 1], got {}", self.threshold)));
        }
        if self.shard_size == 0 {
            return Err(DesignError::InvalidParameter("shard_size must be positive".into()));
        }
        Ok(())
    }
}

fn rank_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.cosine.total_cmp(&a.cosine).then_with(|| a.id.cmp(&b.id))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

fn merge_top(mut a: Vec<Neighbor>, b: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    a.extend(b);
    a.sort_by(rank_order);
    a.truncate(k);
    a
}

fn check_dims(queries: &[EmbeddedSentence], corpus: &[EmbeddedSentence]) -> Result<()> {
    let Some(d) = queries.first().or(corpus.first()).map(|s| s.vector.len()) else { return Ok(()) };
    for s in queries.iter().chain(corpus) {
        if s.vector.len() != d {
            return Err(DesignError::DimensionMismatch { id: s.id.clone(), expected: d, found: s.vector.len() });
        }
    }
    Ok(())
}

/// Exact brute-force cosine search. Each query's scan is split into corpus
/// shards whose top-k lists are merged; the tie-break makes the merge
/// order-independent, so results do not depend on sharding or threads.
pub fn knn_search(queries: &[EmbeddedSentence], corpus: &[EmbeddedSentence], params: &KnnParams) -> Result<Vec<NeighborList>> {
    params.validate()?;
    check_dims(queries, corpus)?;
    let k = params.k;
    Ok(queries
        .par_iter()
        .map(|q| {
            let entries = corpus
                .par_chunks(params.shard_size)
                .enumerate()
                .map(|(shard, chunk)| {
                    let base = shard * params.shard_size;
                    let local = chunk
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| c.id != q.id)
                        .map(|(i, c)| Neighbor { id: c.id.clone(), index: base + i, cosine: cosine(&q.vector, &c.vector) })
                        .filter(|n| n.cosine >= params.threshold)
                        .collect();
                    merge_top(local, Vec::new(), k)
                })
                .reduce(Vec::new, |a, b| merge_top(a, b, k));
            NeighborList { query_id: q.id.clone(), entries }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Navigable small-world graph over a borrowed corpus. Nodes are inserted in
/// corpus order with node 0 as the entry point, so the graph is deterministic.
#[derive(Debug, Clone)]
pub struct NswIndex<'a> {
    corpus: &'a [EmbeddedSentence],
    links: Vec<Vec<usize>>,
    ef: usize,
}

impl<'a> NswIndex<'a> {
    pub fn build(corpus: &'a [EmbeddedSentence], m: usize, ef: usize) -> Result<Self> {
        if m == 0 || ef == 0 {
            return Err(DesignError::InvalidParameter("m and ef must be positive".into()));
        }
        check_dims(&[], corpus)?;
        let mut index = Self { corpus, links: vec![Vec::new(); corpus.len()], ef };
        for i in 1..corpus.len() {
            let found = index.beam(&corpus[i].vector, ef.max(m), i);
            for &Cand(_, j) in found.iter().take(m) {
                index.links[i].push(j);
                index.links[j].push(i);
            }
        }
        Ok(index)
    }

    /// Best-first search over nodes `0..limit`, returning up to `ef` nodes by
    /// similarity descending.
    fn beam(&self, q: &[f64], ef: usize, limit: usize) -> Vec<Cand> {
        if limit == 0 {
            return Vec::new();
        }
        let mut visited = vec![false; limit];
        let start = Cand(cosine(q, &self.corpus[0].vector), 0);
        visited[0] = true;
        let mut frontier = BinaryHeap::from([start]);
        // min-heap of the current best `ef`
        let mut best = BinaryHeap::from([std::cmp::Reverse(start)]);
        while let Some(c) = frontier.pop() {
            if best.len() >= ef && c < best.peek().expect("nonempty").0 {
                break;
            }
            for &n in &self.links[c.1] {
                if n >= limit || visited[n] {
                    continue;
                }
                visited[n] = true;
                let cand = Cand(cosine(q, &self.corpus[n].vector), n);
                if best.len() < ef || cand > best.peek().expect("nonempty").0 {
                    frontier.push(cand);
                    best.push(std::cmp::Reverse(cand));
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out: Vec<Cand> = best.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    pub fn search(&self, query: &EmbeddedSentence, params: &KnnParams) -> Result<NeighborList> {
        params.validate()?;
        check_dims(std::slice::from_ref(query), self.corpus)?;
        let found = self.beam(&query.vector, self.ef.max(params.k + 1), self.corpus.len());
        let mut entries: Vec<Neighbor> = found
            .into_iter()
            .filter(|c| self.corpus[c.1].id != query.id && c.0 >= params.threshold)
            .map(|Cand(cos, i)| Neighbor { id: self.corpus[i].id.clone(), index: i, cosine: cos })
            .collect();
        entries.sort_by(rank_order);
        entries.truncate(params.k);
        Ok(NeighborList { query_id: query.id.clone(), entries })
    }
}

/// Fraction of exact neighbor ids recovered by `approx`; 1 when `exact` is empty.
pub fn recall(approx: &[NeighborList], exact: &[NeighborList]) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (a, e) in approx.iter().zip(exact) {
        let got: HashSet<&str> = a.entries.iter().map(|n| n.id.as_str()).collect();
        total += e.entries.len();
        hit += e.entries.iter().filter(|n| got.contains(n.id.as_str())).count();
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}
