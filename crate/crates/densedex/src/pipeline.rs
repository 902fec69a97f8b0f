//! Training-data assembly and the synth → train → encode → index → search
//! → eval pipeline.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use densedex_core::tokenize::tokenize;
use densedex_core::{
    mrr_at_k, recall_at_k, train, Qrels, Role, ToyEncoderParams, TrainConfig, TrainingExample,
};
use serde::Serialize;

use crate::encode::{encode_records, save_params};
use crate::error::{Error, Result};
use crate::formats::{write_run, write_text, PairRecord, RunFormat, TextRecord};
use crate::search::batch_search;
use crate::store::{build_store, EmbeddingStore};
use crate::synth::{cmd_synth, SynthConfig};

/// Joins id-based pairs with query and document text.
pub fn build_examples(
    pairs: &[PairRecord],
    queries: &[TextRecord],
    collection: &[TextRecord],
    vocab_size: usize,
    with_negatives: bool,
) -> Result<Vec<TrainingExample>> {
    let vocab = u32::try_from(vocab_size).map_err(|_| Error::Usage(format!("vocab size {vocab_size} too large")))?;
    let queries: HashMap<&str, &str> = queries.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
    let docs: HashMap<&str, &str> = collection.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
    let doc_seq = |id: &str| {
        docs.get(id)
            .map(|text| tokenize(text, Role::Document, vocab, Role::Document.default_max_len()))
            .ok_or_else(|| Error::Usage(format!("pair references unknown document {id}")))
    };
    pairs
        .iter()
        .map(|p| {
            let text = queries
                .get(p.query_id.as_str())
                .ok_or_else(|| Error::Usage(format!("pair references unknown query {}", p.query_id)))?;
            let negative = match (&p.negative_id, with_negatives) {
                (Some(n), true) => Some((n.clone(), doc_seq(n)?)),
                (None, true) => {
                    return Err(Error::Usage(format!(
                        "pair {} {} has no negative column",
                        p.query_id, p.doc_id
                    )))
                }
                (_, false) => None,
            };
            Ok(TrainingExample {
                query_id: p.query_id.clone(),
                query: tokenize(text, Role::Query, vocab, Role::Query.default_max_len()),
                doc_id: p.doc_id.clone(),
                doc: doc_seq(&p.doc_id)?,
                negative,
            })
        })
        .collect()
}

/// Writes a loss curve as `step,loss` CSV.
pub fn write_loss_csv(losses: &[f64], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "step,loss")?;
    for (step, loss) in losses.iter().enumerate() {
        writeln!(out, "{step},{loss}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub skip_train: bool,
    pub k: usize,
    pub shards: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let train = TrainConfig { vocab_size: synth.vocab_size, dim: synth.dim, ..TrainConfig::default() };
        Self { synth, train, skip_train: false, k: 100, shards: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub queries: usize,
    pub documents: usize,
    pub dim: usize,
    pub seed: u64,
    pub steps: usize,
    pub trained: bool,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
}

/// Runs every stage, leaving its artifacts in `work_dir`.
pub fn cmd_pipeline_end_to_end(config: &PipelineConfig, work_dir: &Path) -> Result<PipelineReport> {
    let synth = SynthConfig {
        vocab_size: config.train.vocab_size,
        dim: config.train.dim,
        ..config.synth.clone()
    };
    let corpus = cmd_synth(&synth, work_dir)?;

    let (params, losses) = if config.skip_train {
        (config.train.initial_params()?, Vec::new())
    } else {
        let examples = build_examples(
            &corpus.pairs,
            &corpus.queries,
            &corpus.collection,
            config.train.vocab_size,
            config.train.use_pair_negatives,
        )?;
        let outcome = train(&examples, Some(&corpus.qrels), &config.train)?;
        write_text(&work_dir.join("loss.csv"), |out| write_loss_csv(&outcome.losses, out))?;
        (outcome.params, outcome.losses)
    };
    save_params(&params, &work_dir.join("params.denc"))?;

    let run = retrieve(&params, &corpus.queries, &corpus.collection, work_dir, config.k, config.shards)?;
    write_run(&run, &work_dir.join("run.txt"), RunFormat::MsMarco, "densedex")?;
    let metrics = headline_metrics(&run, &corpus.qrels)?;

    let report = PipelineReport {
        queries: corpus.queries.len(),
        documents: corpus.collection.len(),
        dim: params.dim(),
        seed: config.train.seed,
        steps: if config.skip_train { 0 } else { config.train.steps },
        trained: !config.skip_train,
        initial_loss: losses.first().copied(),
        final_loss: losses.last().copied(),
        metrics,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&work_dir.join("metrics.json"), |out| writeln!(out, "{json}"))?;
    Ok(report)
}

fn retrieve(
    params: &ToyEncoderParams,
    queries: &[TextRecord],
    collection: &[TextRecord],
    work_dir: &Path,
    k: usize,
    shards: usize,
) -> Result<densedex_core::Run> {
    let store_path = work_dir.join("docs.ddex");
    let docs = encode_records(params, collection, Role::Document, Role::Document.default_max_len())?;
    build_store(docs.into_iter().map(Ok), params.dim(), &store_path)?;
    let store = EmbeddingStore::open(&store_path)?;
    let query_vectors = encode_records(params, queries, Role::Query, Role::Query.default_max_len())?;
    let (run, _) = batch_search(&query_vectors, &store.matrix(), k, shards)?;
    Ok(run)
}

fn headline_metrics(run: &densedex_core::Run, qrels: &Qrels) -> Result<BTreeMap<String, f64>> {
    let mut metrics = BTreeMap::new();
    for report in [mrr_at_k(run, qrels, 10)?, recall_at_k(run, qrels, 100)?] {
        metrics.insert(report.to_string(), report.value);
    }
    Ok(metrics)
}
