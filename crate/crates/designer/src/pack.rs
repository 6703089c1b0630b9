use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::knn::{knn_search, KnnParams, NeighborList, NswIndex};
use crate::sentence::EmbeddedSentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrangement {
    NeighborsInContext,
    RandomInContext,
    NeighborsInBatch,
    RandomInBatch,
    Plain,
}

impl Arrangement {
    pub const ALL: [Arrangement; 5] =
        [Arrangement::NeighborsInContext, Arrangement::RandomInContext, Arrangement::NeighborsInBatch, Arrangement::RandomInBatch, Arrangement::Plain];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NeighborsInContext => "neighbors_in_context",
            Self::RandomInContext => "random_in_context",
            Self::NeighborsInBatch => "neighbors_in_batch",
            Self::RandomInBatch => "random_in_batch",
            Self::Plain => "plain",
        }
    }

    /// The four layouts built from retrieved neighbors.
    pub fn uses_neighbors(self) -> bool {
        self != Self::Plain
    }
}

impl fmt::Display for Arrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arrangement {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| DesignError::InvalidParameter(format!("unknown arrangement {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrainingExample {
    /// `ex-{group:06}-{k:02}`
    pub example_id: String,
    pub group: usize,
    pub arrangement: Arrangement,
    pub members: Vec<String>,
    pub tokens: Vec<u32>,
}

impl TrainingExample {
    pub fn total_tokens(&self) -> usize {
        self.tokens.len()
    }
}

/// Result of packing one anchor with its neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packed {
    pub members: Vec<String>,
    pub tokens: Vec<u32>,
}

/// Greedily appends neighbors in list order, each after one separator,
/// stopping before the first one that would push the total past `budget`.
pub fn pack_example<'a>(
    anchor: &EmbeddedSentence,
    neighbors: &NeighborList,
    resolve: impl Fn(&str) -> Option<&'a EmbeddedSentence>,
    budget: usize,
    sep: u32,
) -> Result<Packed> {
    if anchor.len() > budget {
        return Err(DesignError::AnchorTooLong { id: anchor.id.clone(), tokens: anchor.len(), budget });
    }
    let mut members = vec![anchor.id.clone()];
    let mut tokens = anchor.tokens.clone();
    for n in &neighbors.entries {
        let s = resolve(&n.id).ok_or_else(|| DesignError::UnknownId(n.id.clone()))?;
        if tokens.len() + 1 + s.len() > budget {
            break;
        }
        tokens.push(sep);
        tokens.extend_from_slice(&s.tokens);
        members.push(s.id.clone());
    }
    Ok(Packed { members, tokens })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchIndex {
    #[default]
    Exact,
    /// Small-world graph with `m` links per insertion and beam width `ef`.
    Nsw { m: usize, ef: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetParams {
    pub knn: KnnParams,
    pub budget: usize,
    pub sep: u32,
    pub seed: u64,
    /// Drop neighbors already packed for an earlier anchor.
    pub dedup: bool,
    /// Search task sentences as well as the corpus.
    pub anchors_as_neighbors: bool,
    pub index: SearchIndex,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self { knn: KnnParams::default(), budget: crate::DEFAULT_BUDGET, sep: 0, seed: 0, dedup: false, anchors_as_neighbors: true, index: SearchIndex::Exact }
    }
}

fn example_id(group: usize, k: usize) -> String {
    format!("ex-{group:06}-{k:02}")
}

fn join<'a>(ids: impl IntoIterator<Item = &'a EmbeddedSentence>, sep: u32) -> Packed {
    let mut members = Vec::new();
    let mut tokens = Vec::new();
    for s in ids {
        if !members.is_empty() {
            tokens.push(sep);
        }
        tokens.extend_from_slice(&s.tokens);
        members.push(s.id.clone());
    }
    Packed { members, tokens }
}

/// Builds one arrangement. All four neighbor layouts contain the same
/// multiset of sentences: the anchors plus every neighbor the greedy packer
/// kept for them.
pub fn build_dataset(
    arrangement: Arrangement,
    tasks: &[EmbeddedSentence],
    corpus: &[EmbeddedSentence],
    params: &DatasetParams,
) -> Result<Vec<TrainingExample>> {
    if params.budget == 0 {
        return Err(DesignError::InvalidParameter("budget must be positive".into()));
    }
    let mut pool: Vec<EmbeddedSentence> = corpus.to_vec();
    if params.anchors_as_neighbors {
        pool.extend_from_slice(tasks);
    }
    let mut seen = HashSet::new();
    for s in tasks.iter().chain(corpus) {
        if !seen.insert(s.id.as_str()) {
            return Err(DesignError::DuplicateId(s.id.clone()));
        }
    }
    for a in tasks {
        if a.len() > params.budget {
            return Err(DesignError::AnchorTooLong { id: a.id.clone(), tokens: a.len(), budget: params.budget });
        }
    }
    let make =
        |group: usize, k: usize, p: Packed| TrainingExample { example_id: example_id(group, k), group, arrangement, members: p.members, tokens: p.tokens };
    if arrangement == Arrangement::Plain {
        return Ok(tasks.iter().enumerate().map(|(g, a)| make(g, 0, join([a], params.sep))).collect());
    }

    let by_id: HashMap<&str, &EmbeddedSentence> = pool.iter().map(|s| (s.id.as_str(), s)).collect();
    let resolve = |id: &str| by_id.get(id).copied();
    let lists = match params.index {
        SearchIndex::Exact => knn_search(tasks, &pool, &params.knn)?,
        SearchIndex::Nsw { m, ef } => {
            let index = NswIndex::build(&pool, m, ef)?;
            tasks.par_iter().map(|t| index.search(t, &params.knn)).collect::<Result<_>>()?
        }
    };
    let mut used: HashSet<String> = HashSet::new();
    let mut kept: Vec<Vec<&EmbeddedSentence>> = Vec::with_capacity(tasks.len());
    for (anchor, list) in tasks.iter().zip(lists) {
        let list = if params.dedup {
            NeighborList { query_id: list.query_id, entries: list.entries.into_iter().filter(|n| !used.contains(&n.id)).collect() }
        } else {
            list
        };
        let packed = pack_example(anchor, &list, resolve, params.budget, params.sep)?;
        let members: Vec<&EmbeddedSentence> = packed.members[1..].iter().map(|id| by_id[id.as_str()]).collect();
        if params.dedup {
            used.extend(members.iter().map(|s| s.id.clone()));
        }
        kept.push(members);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut shuffled: Vec<&EmbeddedSentence> = kept.iter().flatten().copied().collect();
    shuffled.shuffle(&mut rng);

    let mut out = Vec::new();
    match arrangement {
        Arrangement::NeighborsInContext => {
            for (g, (a, ns)) in tasks.iter().zip(&kept).enumerate() {
                out.push(make(g, 0, join(std::iter::once(a).chain(ns.iter().copied()), params.sep)));
            }
        }
        Arrangement::NeighborsInBatch => {
            for (g, (a, ns)) in tasks.iter().zip(&kept).enumerate() {
                for (k, s) in std::iter::once(a).chain(ns.iter().copied()).enumerate() {
                    out.push(make(g, k, join([s], params.sep)));
                }
            }
        }
        Arrangement::RandomInBatch => {
            let mut it = shuffled.into_iter();
            for (g, (a, ns)) in tasks.iter().zip(&kept).enumerate() {
                out.push(make(g, 0, join([a], params.sep)));
                for k in 1..=ns.len() {
                    out.push(make(g, k, join([it.next().expect("pool covers every slot")], params.sep)));
                }
            }
        }
        Arrangement::RandomInContext => {
            // first-fit dealing: each anchor takes as many pooled sentences as
            // it kept neighbors, subject to the budget
            let mut slots: Vec<usize> = kept.iter().map(Vec::len).collect();
            let mut room: Vec<usize> = tasks.iter().map(|a| params.budget - a.len()).collect();
            let mut dealt: Vec<Vec<&EmbeddedSentence>> = vec![Vec::new(); tasks.len()];
            let mut leftover = Vec::new();
            for s in shuffled {
                match (0..tasks.len()).find(|&g| slots[g] > 0 && room[g] > s.len()) {
                    Some(g) => {
                        slots[g] -= 1;
                        room[g] -= s.len() + 1;
                        dealt[g].push(s);
                    }
                    None => leftover.push(s),
                }
            }
            for (g, (a, ns)) in tasks.iter().zip(&dealt).enumerate() {
                out.push(make(g, 0, join(std::iter::once(a).chain(ns.iter().copied()), params.sep)));
            }
            for (i, s) in leftover.into_iter().enumerate() {
                out.push(make(tasks.len() + i, 0, join([s], params.sep)));
            }
        }
        Arrangement::Plain => unreachable!("handled above"),
    }
    Ok(out)
}
