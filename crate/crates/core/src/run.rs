//! Ranked lists per query ([`Run`]) and positive relevance judgments ([`Qrels`]).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// One retrieved document at a 1-based rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    DuplicateDoc { query_id: String, doc_id: String },
    /// Ranks of one query do not form `1..=L`.
    NonContiguousRanks { query_id: String },
    ScoreIncrease { query_id: String, rank: u32 },
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateDoc { query_id, doc_id } => {
                write!(f, "duplicate document {doc_id} in ranking of query {query_id}")
            }
            Self::NonContiguousRanks { query_id } => {
                write!(f, "ranks of query {query_id} are not contiguous from 1")
            }
            Self::ScoreIncrease { query_id, rank } => {
                write!(f, "score increases at rank {rank} of query {query_id}")
            }
        }
    }
}

impl core::error::Error for RunError {}

/// Per-query ordered document lists, keyed by query id.
///
/// Ranks are always `1..=L` in list order and no document appears twice in
/// one list. Queries iterate in ascending id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    lists: BTreeMap<String, Vec<RunEntry>>,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `ranked` (best first) for `query_id`, assigning ranks from 1.
    ///
    /// Scores must be non-increasing. An existing list for the query is replaced.
    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        ranked: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<(), RunError> {
        let query_id = query_id.into();
        let mut seen = BTreeSet::new();
        let mut entries: Vec<RunEntry> = Vec::new();
        for (doc_id, score) in ranked {
            if !seen.insert(doc_id.clone()) {
                return Err(RunError::DuplicateDoc { query_id, doc_id });
            }
            let rank = entries.len() as u32 + 1;
            if let Some(prev) = entries.last() {
                if score > prev.score {
                    return Err(RunError::ScoreIncrease { query_id, rank });
                }
            }
            entries.push(RunEntry { doc_id, score, rank });
        }
        self.lists.insert(query_id, entries);
        Ok(())
    }

    /// Stores entries whose rank field is authoritative; they are reordered by
    /// rank and must cover `1..=L` exactly once. Scores are not checked.
    pub fn insert_by_rank(
        &mut self,
        query_id: impl Into<String>,
        mut entries: Vec<RunEntry>,
    ) -> Result<(), RunError> {
        let query_id = query_id.into();
        entries.sort_by_key(|e| e.rank);
        let mut seen = BTreeSet::new();
        for (pos, entry) in entries.iter().enumerate() {
            if entry.rank as usize != pos + 1 {
                return Err(RunError::NonContiguousRanks { query_id });
            }
            if !seen.insert(entry.doc_id.as_str()) {
                return Err(RunError::DuplicateDoc {
                    query_id,
                    doc_id: entry.doc_id.clone(),
                });
            }
        }
        self.lists.insert(query_id, entries);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.lists.get(query_id).map(Vec::as_slice)
    }

    /// Document ids of the first `depth` entries for `query_id`.
    pub fn top_ids(&self, query_id: &str, depth: usize) -> impl Iterator<Item = &str> {
        self.get(query_id)
            .unwrap_or(&[])
            .iter()
            .take(depth)
            .map(|e| e.doc_id.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.lists.iter().map(|(q, l)| (q.as_str(), l.as_slice()))
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.lists.keys().map(String::as_str)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.lists.contains_key(query_id)
    }

    /// Number of queries.
    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

/// Positive relevance judgments: query id to the set of relevant document ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>) {
        self.judgments
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into());
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.judgments.get(query_id)
    }

    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> bool {
        self.judgments
            .get(query_id)
            .is_some_and(|docs| docs.contains(doc_id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.judgments.iter().map(|(q, d)| (q.as_str(), d))
    }

    /// Number of judged queries.
    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}
