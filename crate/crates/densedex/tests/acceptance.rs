//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Oracles here are written independently of the library code paths they
//! check: full sorts for top-k, central differences for gradients, and
//! hand-evaluated fixtures.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use densedex::formats::{render_run, RunFormat};
use densedex::pipeline::{cmd_pipeline_end_to_end, PipelineConfig};
use densedex::search::batch_search;
use densedex::{build_store, EmbeddingStore, Error};
use densedex_core::mips::{search_topk, VectorMatrix};
use densedex_core::store_format::StoreFormatError;
use densedex_core::{
    alternating_merge, batch_loss, build_score_matrix, consistency_factor, loss_gradient, margin_loss, mrr_at_k,
    recall_at_k, recall_curve, FusionConfig, Qrels, Role, Run, TokenSeq, ToyEncoderParams, TrainingBatch,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<f32>, Vec<String>) {
    let values = (0..n * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let ids = (0..n).map(|i| format!("doc{i}")).collect();
    (values, ids)
}

// ---------------------------------------------------------------------------

fn fusion_ground_truth() -> Outcome {
    let a = ["a", "c", "d"];
    let b = ["b", "a", "c"];
    let merged = alternating_merge(&a, &b, &FusionConfig::default()).map_err(|e| e.to_string())?;
    ensure(merged == ["a", "b", "c", "d"], || format!("got {merged:?}"))?;
    Ok(format!("{merged:?}"))
}

/// Every row scored in f64 and fully sorted: descending score, ascending id.
fn full_sort_oracle(query: &[f32], values: &[f32], ids: &[String], dim: usize, k: usize) -> Vec<String> {
    let mut scored: Vec<(f64, &str)> = values
        .chunks(dim)
        .zip(ids)
        .map(|(row, id)| {
            let s: f64 = row.iter().zip(query).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
            (s, id.as_str())
        })
        .collect();
    scored.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal).then_with(|| x.1.cmp(y.1)));
    scored.into_iter().take(k).map(|(_, id)| id.to_owned()).collect()
}

fn mips_oracle_equivalence() -> Outcome {
    let (instances, n, dim, k) = (200, 10_000, 64, 100);
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for instance in 0..instances {
        let (values, ids) = random_matrix(&mut rng, n, dim);
        let matrix = VectorMatrix::new(&values, dim, &ids).map_err(|e| e.to_string())?;
        let query: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got: Vec<String> = search_topk(&query, &matrix, k)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|h| h.id.to_owned())
            .collect();
        let expected = full_sort_oracle(&query, &values, &ids, dim, k);
        ensure(got == expected, || format!("instance {instance}: top-{k} differs from the full sort"))?;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{instances} instances, N={n}, dim={dim}, k={k}, {secs:.1}s"))
}

fn shard_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, dim, k) = (20_000, 64, 1000);
    let (values, ids) = random_matrix(&mut rng, n, dim);
    let matrix = VectorMatrix::new(&values, dim, &ids).map_err(|e| e.to_string())?;
    let queries: Vec<(String, Vec<f32>)> = (0..20)
        .map(|i| (format!("q{i}"), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let mut rendered = Vec::new();
    for shards in [1, 2, 4, 8] {
        let (run, _) = batch_search(&queries, &matrix, k, shards).map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        render_run(&run, RunFormat::Trec, "densedex", &mut bytes).map_err(|e| e.to_string())?;
        rendered.push((shards, bytes));
    }
    for (shards, bytes) in &rendered[1..] {
        ensure(*bytes == rendered[0].1, || format!("shards={shards} differs from shards=1"))?;
    }
    Ok(format!("shards 1/2/4/8 byte-identical ({} bytes, N={n}, k={k})", rendered[0].1.len()))
}

// ---------------------------------------------------------------------------

const GRAD_V: usize = 16;
const GRAD_D: usize = 4;
const GRAD_B: usize = 3;
const FD_STEP: f64 = 1e-4;
const KINK_GAP: f64 = 1e-3;
const REL_TOL: f64 = 1e-4;
// relative error denominator floor; see the decisions ledger
const REL_FLOOR: f64 = 1e-4;

fn random_seq(rng: &mut ChaCha8Rng, role: Role) -> TokenSeq {
    let len = rng.gen_range(1..=4);
    TokenSeq::new((0..len).map(|_| rng.gen_range(0..GRAD_V as u32)).collect(), role).expect("non-empty")
}

fn loss_at(batch: &TrainingBatch, values: Vec<f64>) -> f64 {
    let params = ToyEncoderParams::from_values(GRAD_V, GRAD_D, values).expect("finite");
    batch_loss(&build_score_matrix(batch, &params).expect("valid ids")).expect("valid batch")
}

fn min_kink_distance(batch: &TrainingBatch, params: &ToyEncoderParams) -> f64 {
    let m = build_score_matrix(batch, params).expect("valid ids");
    let mut gap = f64::INFINITY;
    for i in 0..m.rows() {
        for p in (0..m.cols()).filter(|&p| m.is_positive(i, p)) {
            for q in (0..m.cols()).filter(|&q| !m.is_positive(i, q)) {
                gap = gap.min((1.0 - (m.score(i, p) - m.score(i, q))).abs());
            }
        }
    }
    gap
}

/// Returns the worst relative error, or `None` if the instance sits within
/// `KINK_GAP` of a hinge kink.
fn gradient_instance(batch: &TrainingBatch, params: &ToyEncoderParams) -> Result<Option<f64>, String> {
    if min_kink_distance(batch, params) <= KINK_GAP {
        return Ok(None);
    }
    let (_, grad) = loss_gradient(batch, params).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for c in 0..params.values().len() {
        let mut plus = params.values().to_vec();
        let mut minus = plus.clone();
        plus[c] += FD_STEP;
        minus[c] -= FD_STEP;
        let numeric = (loss_at(batch, plus) - loss_at(batch, minus)) / (2.0 * FD_STEP);
        let analytic = grad.values()[c];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    Ok(Some(worst))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut checked, mut skipped, mut worst, mut active) = (0, 0, 0.0f64, 0usize);
    while checked < 100 {
        let queries = (0..GRAD_B).map(|_| random_seq(&mut rng, Role::Query)).collect();
        let docs = (0..GRAD_B).map(|_| random_seq(&mut rng, Role::Document)).collect();
        let diagonal = (0..GRAD_B * GRAD_B).map(|i| i / GRAD_B == i % GRAD_B).collect();
        let batch = TrainingBatch::new(queries, docs, diagonal).map_err(|e| e.to_string())?;
        let values = (0..ToyEncoderParams::value_count(GRAD_V, GRAD_D)).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let params = ToyEncoderParams::from_values(GRAD_V, GRAD_D, values).map_err(|e| e.to_string())?;
        // the same instance again with every parameter halved
        let mut halved = params.clone();
        halved.scale(0.5);
        for p in [&params, &halved] {
            match gradient_instance(&batch, p)? {
                Some(rel) => {
                    checked += 1;
                    worst = worst.max(rel);
                    if loss_at(&batch, p.values().to_vec()) > 0.0 {
                        active += 1;
                    }
                }
                None => skipped += 1,
            }
        }
        ensure(skipped < 1000, || "too many instances near a kink".into())?;
    }
    ensure(worst < REL_TOL, || format!("worst relative error {worst:e}"))?;
    ensure(active > checked / 2, || format!("only {active}/{checked} instances had active hinges"))?;
    Ok(format!("{checked} instances (B=3, d=4, V=16), {skipped} near-kink skipped, worst rel err {worst:.2e}"))
}

fn loss_fixtures() -> Outcome {
    let cases: [(&[f64], &[usize], f64); 3] = [
        (&[2.0, 0.5], &[0], 0.0),
        (&[1.0, 0.8], &[0], 0.4),
        (&[1.0, 1.0, 1.0], &[1, 2], 2.0 / 3.0),
    ];
    for (scores, positives, expected) in cases {
        let got = margin_loss(scores, positives).map_err(|e| e.to_string())?;
        ensure((got - expected).abs() <= 1e-12, || format!("{scores:?} {positives:?}: {got} != {expected}"))?;
    }
    Ok("0.0 / 0.4 / 0.666667 within 1e-12".into())
}

// ---------------------------------------------------------------------------

fn end_to_end_toy_retrieval() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = PipelineConfig::default();
    ensure(config.train.batch_size == 26 && config.train.steps >= 2000 && config.train.dim == 64, || {
        format!("unexpected defaults {:?}", config.train)
    })?;
    let started = Instant::now();
    let report = cmd_pipeline_end_to_end(&config, dir.path()).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let mrr = report.metrics["mrr@10"];
    let recall = report.metrics["recall@100"];
    ensure(report.queries == 50 && report.documents == 500, || format!("corpus {report:?}"))?;
    ensure(mrr >= 0.90, || format!("MRR@10 = {mrr}"))?;
    ensure(recall == 1.0, || format!("Recall@100 = {recall}"))?;
    ensure(secs < 300.0, || format!("took {secs:.1}s"))?;
    Ok(format!("MRR@10 = {mrr:.3}, Recall@100 = {recall:.3}, {} steps, {secs:.1}s", report.steps))
}

fn run_of(lists: &[(&str, &[&str])]) -> Run {
    let mut run = Run::new();
    for (q, docs) in lists {
        let n = docs.len() as f64;
        run.insert(*q, docs.iter().enumerate().map(|(i, d)| (d.to_string(), n - i as f64))).expect("valid list");
    }
    run
}

fn qrels_of(pairs: &[(&str, &str)]) -> Qrels {
    let mut q = Qrels::new();
    for (query, doc) in pairs {
        q.insert(*query, *doc);
    }
    q
}

fn metric_fixtures() -> Outcome {
    // first relevant at ranks 1 and 4
    let run = run_of(&[("q1", &["r1", "x", "y"]), ("q2", &["x", "y", "z", "r2", "w"])]);
    let qrels = qrels_of(&[("q1", "r1"), ("q2", "r2")]);
    let mrr = mrr_at_k(&run, &qrels, 10).map_err(|e| e.to_string())?.value;
    ensure((mrr - 0.625).abs() <= 1e-12, || format!("MRR@10 = {mrr}"))?;

    // per-query recall@2 of 1, 0.5 and 0
    let run = run_of(&[("q1", &["a", "x"]), ("q2", &["b", "x", "c"]), ("q3", &["x", "y", "d"])]);
    let qrels = qrels_of(&[("q1", "a"), ("q2", "b"), ("q2", "c"), ("q3", "d")]);
    let recall = recall_at_k(&run, &qrels, 2).map_err(|e| e.to_string())?.value;
    ensure((recall - 0.5).abs() <= 1e-12, || format!("Recall@2 = {recall}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let depths = [1, 2, 3, 5, 8, 10, 20, 50, 100, 200];
    for trial in 0..100 {
        let mut run = Run::new();
        let mut qrels = Qrels::new();
        for q in 0..rng.gen_range(1..8) {
            let qid = format!("q{q}");
            let mut docs: Vec<String> = (0..200).map(|d| format!("d{d}")).collect();
            docs.shuffle(&mut rng);
            let len = rng.gen_range(0..=150);
            for d in docs.iter().take(rng.gen_range(1..6)) {
                qrels.insert(qid.clone(), d.clone());
            }
            docs.shuffle(&mut rng);
            if len > 0 {
                run.insert(qid, docs.into_iter().take(len).enumerate().map(|(i, d)| (d, -(i as f64))))
                    .map_err(|e| e.to_string())?;
            }
        }
        let curve = recall_curve(&run, &qrels, &depths).map_err(|e| e.to_string())?;
        ensure(curve.windows(2).all(|w| w[0].value <= w[1].value), || format!("trial {trial}: not monotone"))?;
    }
    Ok("MRR@10 = 0.625, Recall = 0.5, recall_curve monotone on 100 runs".into())
}

fn consistency_boundaries() -> Outcome {
    let reference_docs: Vec<String> = (0..1000).map(|i| format!("r{i}")).collect();
    let mut reference = Run::new();
    reference
        .insert("q", reference_docs.iter().enumerate().map(|(i, d)| (d.clone(), -(i as f64))))
        .map_err(|e| e.to_string())?;

    let mut subset = Run::new();
    subset
        .insert("q", reference_docs.iter().rev().take(50).enumerate().map(|(i, d)| (d.clone(), -(i as f64))))
        .map_err(|e| e.to_string())?;
    let c = consistency_factor(&subset, &reference, 50).map_err(|e| e.to_string())?;
    ensure(c == 1.0, || format!("subset: {c}"))?;

    let mut disjoint = Run::new();
    disjoint.insert("q", (0..50).map(|i| (format!("x{i}"), -(i as f64)))).map_err(|e| e.to_string())?;
    let c = consistency_factor(&disjoint, &reference, 50).map_err(|e| e.to_string())?;
    ensure(c == 0.0, || format!("disjoint: {c}"))?;

    let half = run_of(&[("q", &["r5", "x1", "r900", "x2"])]);
    let c = consistency_factor(&half, &reference, 4).map_err(|e| e.to_string())?;
    ensure(c == 0.5, || format!("half overlap: {c}"))?;
    Ok("subset 1.0, disjoint 0.0, half overlap 0.5".into())
}

fn store_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("vectors.ddex");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, dim) = (1000, 128);
    let rows: Vec<(String, Vec<f32>)> = (0..n)
        .map(|i| (format!("p{i}"), (0..dim).map(|_| f32::from_bits(random_finite_bits(&mut rng))).collect()))
        .collect();
    build_store(rows.iter().cloned().map(Ok), dim, &path).map_err(|e| e.to_string())?;
    let store = EmbeddingStore::open(&path).map_err(|e| e.to_string())?;
    ensure(store.len() == n && store.dim() == dim, || "header mismatch".into())?;
    for (id, v) in &rows {
        let got = store.get(id).ok_or_else(|| format!("{id} missing"))?;
        let same = got.iter().zip(v).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("{id} not bit-exact"))?;
    }
    drop(store);

    let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let at = 20 + 4 * rng.gen_range(0..n * dim);
    bytes[at] ^= 0x10;
    let damaged = dir.path().join("damaged.ddex");
    std::fs::write(&damaged, &bytes).map_err(|e| e.to_string())?;
    match EmbeddingStore::open(&damaged) {
        Err(Error::Store { source: StoreFormatError::ChecksumMismatch { .. }, .. }) => {}
        other => return Err(format!("corrupted byte at {at} not rejected by checksum: {other:?}")),
    }
    Ok(format!("{n} x {dim} bit-exact; flipped byte {at} rejected by checksum"))
}

// any finite f32, including subnormals and signed zeros
fn random_finite_bits(rng: &mut ChaCha8Rng) -> u32 {
    loop {
        let bits: u32 = rng.gen();
        if f32::from_bits(bits).is_finite() {
            return bits;
        }
    }
}

fn performance_report() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let (n, dim, k) = (100_000, 128, 1000);
    let (values, ids) = random_matrix(&mut rng, n, dim);
    let matrix = VectorMatrix::new(&values, dim, &ids).map_err(|e| e.to_string())?;
    let queries: Vec<(String, Vec<f32>)> = (0..10)
        .map(|i| (format!("q{i}"), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let shards = rayon::current_num_threads();
    let (_, latency) = batch_search(&queries, &matrix, k, shards).map_err(|e| e.to_string())?;
    Ok(format!(
        "N={n}, dim={dim}, k={k}, shards={shards}: mean {:.2} ms/query, p50 {:.2} ms, max {:.2} ms (not asserted{})",
        latency.mean_ms,
        latency.p50_ms,
        latency.max_ms,
        if cfg!(debug_assertions) { ", unoptimized build" } else { "" }
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("fusion ground truth", fusion_ground_truth),
        ("MIPS oracle equivalence", mips_oracle_equivalence),
        ("shard invariance", shard_invariance),
        ("gradient check", gradient_check),
        ("loss fixtures", loss_fixtures),
        ("end-to-end toy retrieval", end_to_end_toy_retrieval),
        ("metric fixtures", metric_fixtures),
        ("consistency-factor boundaries", consistency_boundaries),
        ("store round-trip", store_round_trip),
        ("performance report", performance_report),
    ];
    let mut failed = BTreeSet::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                println!("FAIL  {name}: {why}");
                failed.insert(name);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed.len(), criteria.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
