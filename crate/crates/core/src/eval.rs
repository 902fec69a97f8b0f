//! MRR@k and Recall@k over a [`Run`] and [`Qrels`].
//!
//! Means are taken over the judged queries (every query in the qrels has at
//! least one relevant document, since only positive judgments are stored).
//! A judged query missing from the run scores 0; run queries without
//! judgments are ignored.

use alloc::vec::Vec;
use core::fmt;

use crate::run::{Qrels, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Mrr,
    Recall,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mrr => "mrr",
            Metric::Recall => "recall",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    EmptyQrels,
    ZeroCutoff,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyQrels => f.write_str("qrels contain no judged queries"),
            Self::ZeroCutoff => f.write_str("metric cutoff must be at least 1"),
        }
    }
}

impl core::error::Error for EvalError {}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: Metric,
    pub cutoff: usize,
    /// Mean over evaluated queries, in `[0, 1]`.
    pub value: f64,
    pub queries: usize,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.metric.name(), self.cutoff)
    }
}

fn mean_over_qrels(
    qrels: &Qrels,
    k: usize,
    metric: Metric,
    per_query: impl Fn(&str, usize) -> f64,
) -> Result<MetricReport, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    if qrels.is_empty() {
        return Err(EvalError::EmptyQrels);
    }
    let mut total = 0.0;
    let mut queries = 0;
    for (query_id, relevant) in qrels.iter() {
        if relevant.is_empty() {
            continue;
        }
        total += per_query(query_id, k);
        queries += 1;
    }
    if queries == 0 {
        return Err(EvalError::EmptyQrels);
    }
    Ok(MetricReport {
        metric,
        cutoff: k,
        value: total / queries as f64,
        queries,
    })
}

/// Mean reciprocal rank of the first relevant document within the top `k`.
pub fn mrr_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricReport, EvalError> {
    mean_over_qrels(qrels, k, Metric::Mrr, |query_id, k| {
        run.top_ids(query_id, k)
            .position(|doc| qrels.is_relevant(query_id, doc))
            .map_or(0.0, |pos| 1.0 / (pos + 1) as f64)
    })
}

/// Mean fraction of each query's relevant documents found in its top `k`.
pub fn recall_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricReport, EvalError> {
    mean_over_qrels(qrels, k, Metric::Recall, |query_id, k| {
        let relevant = qrels.relevant(query_id).map_or(0, |r| r.len());
        let found = run
            .top_ids(query_id, k)
            .filter(|doc| qrels.is_relevant(query_id, doc))
            .count();
        found as f64 / relevant as f64
    })
}

/// Recall at each depth, in the order given.
pub fn recall_curve(run: &Run, qrels: &Qrels, depths: &[usize]) -> Result<Vec<MetricReport>, EvalError> {
    depths.iter().map(|&k| recall_at_k(run, qrels, k)).collect()
}
