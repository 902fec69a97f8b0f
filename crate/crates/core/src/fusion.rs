//! Alternating merge of two ranked lists and the consistency factor between
//! a retriever and a reference retriever.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::run::Run;

/// Depth of the reference list in [`consistency_factor`].
pub const REFERENCE_DEPTH: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum FusionError {
    /// A single input list names the same document twice.
    DuplicateInList { doc_id: String },
    InvalidConfig(&'static str),
    ZeroDepth,
    NoCommonQueries,
}

impl fmt::Display for FusionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateInList { doc_id } => write!(f, "document {doc_id} appears twice in one input list"),
            Self::InvalidConfig(why) => write!(f, "invalid fusion config: {why}"),
            Self::ZeroDepth => f.write_str("depth must be at least 1"),
            Self::NoCommonQueries => f.write_str("runs share no query with a non-empty list"),
        }
    }
}

impl core::error::Error for FusionError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionConfig {
    /// Entries read from each input list.
    pub depth_in: usize,
    /// Length the fused list is truncated to.
    pub depth_out: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { depth_in: 1000, depth_out: 1000 }
    }
}

impl FusionConfig {
    pub fn new(depth_in: usize, depth_out: usize) -> Result<Self, FusionError> {
        let config = Self { depth_in, depth_out };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), FusionError> {
        if self.depth_in == 0 {
            return Err(FusionError::InvalidConfig("depth_in must be at least 1"));
        }
        if self.depth_out == 0 {
            return Err(FusionError::InvalidConfig("depth_out must be at least 1"));
        }
        Ok(())
    }
}

fn check_unique<T: Ord + Clone + fmt::Display>(list: &[T]) -> Result<(), FusionError> {
    let mut seen = BTreeSet::new();
    for item in list {
        if !seen.insert(item) {
            return Err(FusionError::DuplicateInList { doc_id: alloc::format!("{item}") });
        }
    }
    Ok(())
}

/// Interleaves `a[0], b[0], a[1], b[1], …` up to `depth_in` entries of each
/// list (a shorter list simply runs out), keeps only the first occurrence of
/// every id, and truncates to `depth_out`.
///
/// `alternating_merge(a, b)` and `alternating_merge(b, a)` differ in general.
pub fn alternating_merge<T: Ord + Clone + fmt::Display>(
    a: &[T],
    b: &[T],
    config: &FusionConfig,
) -> Result<Vec<T>, FusionError> {
    config.validate()?;
    check_unique(a)?;
    check_unique(b)?;
    let a = &a[..a.len().min(config.depth_in)];
    let b = &b[..b.len().min(config.depth_in)];
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(config.depth_out.min(a.len() + b.len()));
    let interleaved = (0..a.len().max(b.len())).flat_map(|i| a.get(i).into_iter().chain(b.get(i)));
    for item in interleaved {
        if out.len() == config.depth_out {
            break;
        }
        if seen.insert(item) {
            out.push(item.clone());
        }
    }
    Ok(out)
}

/// Applies [`alternating_merge`] per query. A query found in only one run
/// keeps that run's list, deduplicated and truncated the same way. Output
/// scores are `1 / rank`.
pub fn fuse_runs(run_a: &Run, run_b: &Run, config: &FusionConfig) -> Result<Run, FusionError> {
    config.validate()?;
    let queries: BTreeSet<&str> = run_a.query_ids().chain(run_b.query_ids()).collect();
    let mut fused = Run::new();
    for query_id in queries {
        let a: Vec<&str> = run_a.top_ids(query_id, usize::MAX).collect();
        let b: Vec<&str> = run_b.top_ids(query_id, usize::MAX).collect();
        let merged = alternating_merge(&a, &b, config)?;
        let ranked = merged
            .into_iter()
            .enumerate()
            .map(|(i, doc)| (String::from(doc), 1.0 / (i + 1) as f64));
        fused
            .insert(query_id, ranked)
            .expect("merged list is duplicate-free with decreasing scores");
    }
    Ok(fused)
}

/// Mean over queries of the share of `run`'s top-`n` found in the top
/// [`REFERENCE_DEPTH`] of `reference`.
///
/// Only queries present in both runs count. The denominator is the actual
/// length of the top-`n` list; queries with an empty list are skipped.
pub fn consistency_factor(run: &Run, reference: &Run, n: usize) -> Result<f64, FusionError> {
    if n == 0 {
        return Err(FusionError::ZeroDepth);
    }
    let mut total = 0.0;
    let mut queries = 0usize;
    for (query_id, entries) in run.iter() {
        if !reference.contains_query(query_id) || entries.is_empty() {
            continue;
        }
        let reference_top: BTreeSet<&str> = reference.top_ids(query_id, REFERENCE_DEPTH).collect();
        let top = &entries[..entries.len().min(n)];
        let shared = top
            .iter()
            .filter(|e| reference_top.contains(e.doc_id.as_str()))
            .count();
        total += shared as f64 / top.len() as f64;
        queries += 1;
    }
    if queries == 0 {
        return Err(FusionError::NoCommonQueries);
    }
    Ok(total / queries as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn merge(a: &[&str], b: &[&str], config: FusionConfig) -> Vec<String> {
        alternating_merge(a, b, &config)
            .unwrap()
            .into_iter()
            .map(str::to_string)
            .collect()
    }

    fn run_of(lists: &[(&str, Vec<String>)]) -> Run {
        let mut run = Run::new();
        for (q, docs) in lists {
            run.insert(*q, docs.iter().enumerate().map(|(i, d)| (d.clone(), -(i as f64))))
                .unwrap();
        }
        run
    }

    fn ids(prefix: &str, range: core::ops::Range<usize>) -> Vec<String> {
        range.map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn worked_example() {
        assert_eq!(merge(&["a", "c", "d"], &["b", "a", "c"], FusionConfig::default()), ["a", "b", "c", "d"]);
    }

    #[test]
    fn self_fusion_and_ragged_lists() {
        assert_eq!(merge(&["x", "y", "z"], &["x", "y", "z"], FusionConfig::default()), ["x", "y", "z"]);
        assert_eq!(merge(&["p", "q"], &["r"], FusionConfig::default()), ["p", "r", "q"]);
        assert_eq!(merge(&[], &["r"], FusionConfig::default()), ["r"]);
    }

    #[test]
    fn order_of_inputs_matters() {
        let ab = merge(&["a", "b"], &["c", "a"], FusionConfig::default());
        let ba = merge(&["c", "a"], &["a", "b"], FusionConfig::default());
        assert_eq!(ab, ["a", "c", "b"]);
        assert_eq!(ba, ["c", "a", "b"]);
    }

    #[test]
    fn depths_apply() {
        let config = FusionConfig::new(2, 3).unwrap();
        assert_eq!(merge(&["a", "b", "c"], &["d", "e", "f"], config), ["a", "d", "b"]);
        let config = FusionConfig::new(1, 10).unwrap();
        assert_eq!(merge(&["a", "b"], &["c", "d"], config), ["a", "c"]);
        assert!(FusionConfig::new(0, 1).is_err());
        assert!(FusionConfig::new(1, 0).is_err());
    }

    #[test]
    fn duplicate_input_rejected() {
        let err = alternating_merge(&["a", "a"], &["b"], &FusionConfig::default()).unwrap_err();
        assert_eq!(err, FusionError::DuplicateInList { doc_id: "a".into() });
    }

    #[test]
    fn disjoint_thousand_lists_take_five_hundred_each() {
        let a = ids("a", 0..1000);
        let b = ids("b", 0..1000);
        let run = fuse_runs(&run_of(&[("q", a.clone())]), &run_of(&[("q", b.clone())]), &FusionConfig::default()).unwrap();
        let fused: Vec<&str> = run.top_ids("q", usize::MAX).collect();
        assert_eq!(fused.len(), 1000);
        for i in 0..500 {
            assert_eq!(fused[2 * i], a[i]);
            assert_eq!(fused[2 * i + 1], b[i]);
        }
        let entries = run.get("q").unwrap();
        assert_eq!(entries[3].rank, 4);
        assert_eq!(entries[3].score, 0.25);
    }

    #[test]
    fn untruncated_fusion_keeps_everything() {
        let a = ids("a", 0..1000);
        let mut b = ids("b", 0..700);
        b.extend(ids("a", 300..600));
        let config = FusionConfig::new(1000, 2000).unwrap();
        let run = fuse_runs(&run_of(&[("q", a.clone())]), &run_of(&[("q", b.clone())]), &config).unwrap();
        let fused: BTreeSet<&str> = run.top_ids("q", usize::MAX).collect();
        let union: BTreeSet<&str> = a.iter().chain(&b).map(String::as_str).collect();
        assert_eq!(fused, union);
    }

    #[test]
    fn one_sided_queries_are_kept() {
        let a = run_of(&[("q1", ids("a", 0..5)), ("q2", ids("x", 0..3))]);
        let b = run_of(&[("q1", ids("b", 0..5))]);
        let config = FusionConfig::new(1000, 2).unwrap();
        let fused = fuse_runs(&a, &b, &config).unwrap();
        assert_eq!(fused.top_ids("q2", 10).collect::<Vec<_>>(), ["x0", "x1"]);
        assert_eq!(fused.top_ids("q1", 10).collect::<Vec<_>>(), ["a0", "b0"]);
    }

    #[test]
    fn consistency_boundaries() {
        let reference = run_of(&[("q", ids("d", 0..1000))]);
        let subset = run_of(&[("q", ids("d", 100..110))]);
        assert_eq!(consistency_factor(&subset, &reference, 10).unwrap(), 1.0);
        let disjoint = run_of(&[("q", ids("z", 0..10))]);
        assert_eq!(consistency_factor(&disjoint, &reference, 10).unwrap(), 0.0);
        let half = run_of(&[("q", vec!["d1".into(), "z1".into(), "d2".into(), "z2".into()])]);
        assert_eq!(consistency_factor(&half, &reference, 4).unwrap(), 0.5);
    }

    #[test]
    fn consistency_uses_reference_top_thousand_only() {
        let reference = run_of(&[("q", ids("d", 0..1500))]);
        let beyond = run_of(&[("q", ids("d", 1000..1010))]);
        assert_eq!(consistency_factor(&beyond, &reference, 10).unwrap(), 0.0);
    }

    #[test]
    fn consistency_short_list_denominator_and_errors() {
        let reference = run_of(&[("q", ids("d", 0..3))]);
        let short = run_of(&[("q", vec!["d0".into(), "z".into()]), ("other", ids("d", 0..3))]);
        assert_eq!(consistency_factor(&short, &reference, 100).unwrap(), 0.5);
        let unrelated = run_of(&[("p", ids("d", 0..3))]);
        assert_eq!(consistency_factor(&unrelated, &reference, 10), Err(FusionError::NoCommonQueries));
        assert_eq!(consistency_factor(&short, &reference, 0), Err(FusionError::ZeroDepth));
    }

    fn unique_list() -> impl Strategy<Value = Vec<String>> {
        prop::collection::btree_set(0u16..60, 0..30)
            .prop_map(|s| s.into_iter().map(|i| format!("d{i}")).collect::<Vec<_>>())
            .prop_shuffle()
    }

    proptest! {
        #[test]
        fn fused_lists_are_unique_bounded_subsets(
            a in unique_list(),
            b in unique_list(),
            depth_in in 1usize..40,
            depth_out in 1usize..70,
        ) {
            let config = FusionConfig::new(depth_in, depth_out).unwrap();
            let fused = alternating_merge(&a, &b, &config).unwrap();
            prop_assert!(fused.len() <= depth_out);
            let unique: BTreeSet<&String> = fused.iter().collect();
            prop_assert_eq!(unique.len(), fused.len());
            prop_assert!(fused.iter().all(|d| a.contains(d) || b.contains(d)));

            let self_fused = alternating_merge(&a, &a, &config).unwrap();
            let expected: Vec<String> = a.iter().take(depth_in.min(depth_out)).cloned().collect();
            prop_assert_eq!(self_fused, expected);
        }

        #[test]
        fn consistency_stays_in_unit_interval(
            f in prop::collection::vec(unique_list(), 1..4),
            r in prop::collection::vec(unique_list(), 1..4),
            n in 1usize..40,
        ) {
            let run = run_of(&f.iter().enumerate().map(|(i, l)| (["q0", "q1", "q2", "q3"][i], l.clone())).collect::<Vec<_>>());
            let reference = run_of(&r.iter().enumerate().map(|(i, l)| (["q0", "q1", "q2", "q3"][i], l.clone())).collect::<Vec<_>>());
            if let Ok(c) = consistency_factor(&run, &reference, n) {
                prop_assert!((0.0..=1.0).contains(&c));
            }
            if let Ok(c) = consistency_factor(&run, &run, n) {
                prop_assert_eq!(c, 1.0);
            }
        }
    }
}
