//! Exact maximum inner product search by linear scan.
//!
//! Every stored vector is scored against the query and the best `k` are kept
//! in a bounded heap. Products are accumulated in `f64`; ties in score are
//! broken by ascending document id so that results do not depend on scan
//! order. That makes the per-shard results of [`search_rows`] mergeable with
//! [`merge_topk`] into exactly the list [`search_topk`] would produce.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MipsError {
    DimMismatch { expected: usize, got: usize },
    ZeroK,
    ZeroShards,
    /// Vector block length is not `ids.len() * dim`.
    MalformedMatrix { values: usize, rows: usize, dim: usize },
}

impl fmt::Display for MipsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimMismatch { expected, got } => {
                write!(f, "query has {got} dimensions, store has {expected}")
            }
            Self::ZeroK => f.write_str("k must be at least 1"),
            Self::ZeroShards => f.write_str("shard count must be at least 1"),
            Self::MalformedMatrix { values, rows, dim } => {
                write!(f, "{values} values cannot hold {rows} rows of dimension {dim}")
            }
        }
    }
}

impl core::error::Error for MipsError {}

/// Borrowed row-major `f32` matrix with one external id per row.
#[derive(Debug, Clone, Copy)]
pub struct VectorMatrix<'a> {
    values: &'a [f32],
    dim: usize,
    ids: &'a [String],
}

impl<'a> VectorMatrix<'a> {
    pub fn new(values: &'a [f32], dim: usize, ids: &'a [String]) -> Result<Self, MipsError> {
        if dim == 0 || values.len() != ids.len() * dim {
            return Err(MipsError::MalformedMatrix {
                values: values.len(),
                rows: ids.len(),
                dim,
            });
        }
        Ok(Self { values, dim, ids })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, index: usize) -> &'a [f32] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }

    pub fn id(&self, index: usize) -> &'a str {
        &self.ids[index]
    }
}

/// A scored row. `row` indexes the matrix the hit came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<'a> {
    pub id: &'a str,
    pub row: usize,
    pub score: f64,
}

impl Hit<'_> {
    /// Result-list order: higher score first, then ascending id.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.id.cmp(other.id))
    }
}

// Heap wrapper whose maximum is the worst-ranked hit.
struct Worst<'a>(Hit<'a>);

impl PartialEq for Worst<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Worst<'_> {}

impl PartialOrd for Worst<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Worst<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Inner product accumulated in `f64`, in index order.
///
/// A negative zero result is reported as `+0.0` so that all zero scores tie.
#[inline]
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc + 0.0
}

fn check(query: &[f32], matrix: &VectorMatrix<'_>, k: usize) -> Result<(), MipsError> {
    if k == 0 {
        return Err(MipsError::ZeroK);
    }
    if query.len() != matrix.dim() {
        return Err(MipsError::DimMismatch {
            expected: matrix.dim(),
            got: query.len(),
        });
    }
    Ok(())
}

/// The `k` best rows of `rows`, sorted best first.
pub fn search_rows<'a>(
    query: &[f32],
    matrix: &VectorMatrix<'a>,
    rows: Range<usize>,
    k: usize,
) -> Result<Vec<Hit<'a>>, MipsError> {
    check(query, matrix, k)?;
    let rows = rows.start.min(matrix.len())..rows.end.min(matrix.len());
    let mut heap: BinaryHeap<Worst<'a>> = BinaryHeap::with_capacity(k.min(rows.len()) + 1);
    for row in rows {
        let hit = Hit {
            id: matrix.id(row),
            row,
            score: dot_f64(query, matrix.row(row)),
        };
        if heap.len() < k {
            heap.push(Worst(hit));
        } else if let Some(mut worst) = heap.peek_mut() {
            if hit.rank_cmp(&worst.0) == Ordering::Less {
                *worst = Worst(hit);
            }
        }
    }
    // Ascending by `Worst` order is best first.
    Ok(heap.into_sorted_vec().into_iter().map(|w| w.0).collect())
}

/// The `k` largest inner products over the whole matrix, best first.
pub fn search_topk<'a>(
    query: &[f32],
    matrix: &VectorMatrix<'a>,
    k: usize,
) -> Result<Vec<Hit<'a>>, MipsError> {
    search_rows(query, matrix, 0..matrix.len(), k)
}

/// Splits `0..count` into `shards` contiguous ranges of near-equal size.
pub fn shard_ranges(count: usize, shards: usize) -> Result<Vec<Range<usize>>, MipsError> {
    if shards == 0 {
        return Err(MipsError::ZeroShards);
    }
    let base = count / shards;
    let extra = count % shards;
    let mut start = 0;
    Ok((0..shards)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let range = start..start + len;
            start += len;
            range
        })
        .collect())
}

struct Head<'a> {
    hit: Hit<'a>,
    part: usize,
    next: usize,
}

impl PartialEq for Head<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Head<'_> {}

impl PartialOrd for Head<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Head<'_> {
    // Max-heap on best hit.
    fn cmp(&self, other: &Self) -> Ordering {
        other.hit.rank_cmp(&self.hit)
    }
}

/// k-way merge of per-shard result lists, each already sorted best first.
pub fn merge_topk<'a>(parts: &[Vec<Hit<'a>>], k: usize) -> Vec<Hit<'a>> {
    let mut heap: BinaryHeap<Head<'a>> = parts
        .iter()
        .enumerate()
        .filter_map(|(part, hits)| {
            hits.first().map(|&hit| Head { hit, part, next: 1 })
        })
        .collect();
    let mut out = Vec::with_capacity(k.min(parts.iter().map(Vec::len).sum()));
    while out.len() < k {
        let Some(head) = heap.pop() else { break };
        out.push(head.hit);
        if let Some(&hit) = parts[head.part].get(head.next) {
            heap.push(Head {
                hit,
                part: head.part,
                next: head.next + 1,
            });
        }
    }
    out
}

/// Top-k over `shards` contiguous row ranges, merged. Equal to [`search_topk`]
/// for every shard count.
pub fn search_sharded<'a>(
    query: &[f32],
    matrix: &VectorMatrix<'a>,
    k: usize,
    shards: usize,
) -> Result<Vec<Hit<'a>>, MipsError> {
    let parts = shard_ranges(matrix.len(), shards)?
        .into_iter()
        .map(|range| search_rows(query, matrix, range, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(merge_topk(&parts, k))
}
