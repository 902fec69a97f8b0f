//! Batch retrieval over a store with the document rows split into shards
//! that are scanned in parallel and heap-merged.

use std::collections::HashSet;
use std::time::Instant;

use densedex_core::mips::{merge_topk, search_rows, shard_ranges, Hit, VectorMatrix};
use densedex_core::Run;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Per-query wall-clock latency of a batch search, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencySummary {
    pub queries: usize,
    pub shards: usize,
    pub k: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub total_ms: f64,
}

impl LatencySummary {
    pub fn from_samples(samples_ms: &[f64], shards: usize, k: usize, total_ms: f64) -> Self {
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean_ms = if sorted.is_empty() { 0.0 } else { sorted.iter().sum::<f64>() / sorted.len() as f64 };
        Self {
            queries: sorted.len(),
            shards,
            k,
            mean_ms,
            p50_ms: percentile(&sorted, 0.50),
            p99_ms: percentile(&sorted, 0.99),
            max_ms: sorted.last().copied().unwrap_or(0.0),
            total_ms,
        }
    }
}

/// Nearest-rank percentile of ascending `sorted`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Top-`k` for one query, shards scanned on the current rayon pool.
pub fn search_one<'a>(query: &[f32], matrix: &VectorMatrix<'a>, k: usize, shards: usize) -> Result<Vec<Hit<'a>>> {
    let ranges = shard_ranges(matrix.len(), shards)?;
    if ranges.len() == 1 {
        return Ok(search_rows(query, matrix, 0..matrix.len(), k)?);
    }
    let parts = ranges
        .into_par_iter()
        .map(|range| search_rows(query, matrix, range, k))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(merge_topk(&parts, k))
}

/// Runs every query against `matrix`. The resulting run depends only on
/// `(queries, matrix, k)`; `shards` changes the work split, not the output.
pub fn batch_search(
    queries: &[(String, Vec<f32>)],
    matrix: &VectorMatrix<'_>,
    k: usize,
    shards: usize,
) -> Result<(Run, LatencySummary)> {
    let mut seen = HashSet::new();
    for (qid, _) in queries {
        if !seen.insert(qid.as_str()) {
            return Err(Error::Usage(format!("query id {qid} appears more than once")));
        }
    }
    let mut run = Run::new();
    let mut samples = Vec::with_capacity(queries.len());
    let started = Instant::now();
    for (qid, vector) in queries {
        let t = Instant::now();
        let hits = search_one(vector, matrix, k, shards)?;
        samples.push(t.elapsed().as_secs_f64() * 1e3);
        run.insert(qid.clone(), hits.into_iter().map(|h| (h.id.to_owned(), h.score)))
            .map_err(|e| Error::Invariant(format!("search produced an invalid ranking: {e}")))?;
    }
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok((run, LatencySummary::from_samples(&samples, shards, k, total_ms)))
}
