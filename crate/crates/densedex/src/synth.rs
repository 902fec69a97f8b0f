//! Synthetic corpus with planted relevance.
//!
//! Every query owns a marker word that appears in its relevant documents and
//! nowhere else. All other words come from a shared filler vocabulary, so
//! an encoder that keys on the markers ranks every relevant document first.

use std::collections::HashSet;
use std::path::Path;

use densedex_core::tokenize::token_id;
use densedex_core::Qrels;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{write_pairs, write_qrels, write_text, write_tsv_collection, PairRecord, TextRecord};

pub const COLLECTION_FILE: &str = "collection.tsv";
pub const QUERIES_FILE: &str = "queries.tsv";
pub const QRELS_FILE: &str = "qrels.tsv";
pub const PAIRS_FILE: &str = "pairs.tsv";
pub const MANIFEST_FILE: &str = "synth.json";

const FILLER_WORDS: usize = 400;
const MAX_RELEVANT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_queries: usize,
    pub num_docs: usize,
    /// Embedding width the corpus is meant for; recorded in the manifest.
    pub dim: usize,
    pub seed: u64,
    /// Hash vocabulary under which marker and filler words are collision-free.
    pub vocab_size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { num_queries: 50, num_docs: 500, dim: 64, seed: 0, vocab_size: 1 << 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthCorpus {
    pub collection: Vec<TextRecord>,
    pub queries: Vec<TextRecord>,
    pub qrels: Qrels,
    pub pairs: Vec<PairRecord>,
}

struct WordGen {
    seen_words: HashSet<String>,
    seen_ids: HashSet<u32>,
    vocab: u32,
}

impl WordGen {
    /// A fresh lowercase word whose token id no earlier word uses.
    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let len = rng.gen_range(5..=8);
            let word: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
            let id = token_id(&word, self.vocab);
            if !self.seen_words.contains(&word) && self.seen_ids.insert(id) {
                self.seen_words.insert(word.clone());
                return word;
            }
        }
    }
}

fn filler_text(rng: &mut ChaCha8Rng, filler: &[String], n: usize) -> Vec<String> {
    (0..n).map(|_| filler.choose(rng).expect("filler is non-empty").clone()).collect()
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    let SynthConfig { num_queries, num_docs, vocab_size, .. } = *config;
    if num_queries == 0 {
        return Err(Error::Usage("synth needs at least one query".into()));
    }
    if num_docs < num_queries {
        return Err(Error::Usage(format!(
            "synth needs at least one document per query ({num_docs} docs < {num_queries} queries)"
        )));
    }
    let distinct = num_queries + FILLER_WORDS;
    if vocab_size < 2 || ((vocab_size - 1) as u64) < 4 * distinct as u64 || vocab_size > u32::MAX as usize {
        return Err(Error::Usage(format!("vocab size {vocab_size} is too small for {distinct} distinct words")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut words = WordGen { seen_words: HashSet::new(), seen_ids: HashSet::new(), vocab: vocab_size as u32 };
    let filler: Vec<String> = (0..FILLER_WORDS).map(|_| words.fresh(&mut rng)).collect();
    let markers: Vec<String> = (0..num_queries).map(|_| words.fresh(&mut rng)).collect();

    // Relevant-document count per query, leaving one document for every later query.
    let mut counts = Vec::with_capacity(num_queries);
    let mut left = num_docs;
    for q in 0..num_queries {
        let reserve = num_queries - q - 1;
        let n = rng.gen_range(1..=MAX_RELEVANT).min(left - reserve);
        counts.push(n);
        left -= n;
    }
    // owner[slot] = Some(query) for relevant slots, None for distractors.
    let mut owner: Vec<Option<usize>> = counts
        .iter()
        .enumerate()
        .flat_map(|(q, &n)| std::iter::repeat_n(Some(q), n))
        .collect();
    owner.resize(num_docs, None);
    owner.shuffle(&mut rng);

    let mut qrels = Qrels::new();
    let mut collection = Vec::with_capacity(num_docs);
    let mut distractors = Vec::new();
    for (d, slot) in owner.iter().enumerate() {
        let id = format!("d{d}");
        let n = rng.gen_range(8..=16);
        let mut text = filler_text(&mut rng, &filler, n);
        match *slot {
            Some(q) => {
                let at = rng.gen_range(0..=text.len());
                text.insert(at, markers[q].clone());
                qrels.insert(format!("q{q}"), id.clone());
            }
            None => distractors.push(id.clone()),
        }
        collection.push(TextRecord { id, text: text.join(" ") });
    }

    let mut queries = Vec::with_capacity(num_queries);
    for (q, marker) in markers.iter().enumerate() {
        let n = rng.gen_range(2..=4);
        let mut text = filler_text(&mut rng, &filler, n);
        let at = rng.gen_range(0..=text.len());
        text.insert(at, marker.clone());
        queries.push(TextRecord { id: format!("q{q}"), text: text.join(" ") });
    }

    let mut pairs = Vec::new();
    for (query_id, docs) in qrels.iter() {
        for doc in docs {
            let negative = if distractors.is_empty() {
                None
            } else {
                Some(distractors[rng.gen_range(0..distractors.len())].clone())
            };
            pairs.push(PairRecord { query_id: query_id.to_owned(), doc_id: doc.clone(), negative_id: negative });
        }
    }
    Ok(SynthCorpus { collection, queries, qrels, pairs })
}

/// Generates the corpus and writes its files into `out_dir`.
pub fn cmd_synth(config: &SynthConfig, out_dir: &Path) -> Result<SynthCorpus> {
    let corpus = generate(config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_tsv_collection(&corpus.collection, &out_dir.join(COLLECTION_FILE))?;
    write_tsv_collection(&corpus.queries, &out_dir.join(QUERIES_FILE))?;
    write_qrels(&corpus.qrels, &out_dir.join(QRELS_FILE))?;
    write_pairs(&corpus.pairs, &out_dir.join(PAIRS_FILE))?;
    let manifest = serde_json::to_string_pretty(config).expect("config serializes");
    write_text(&out_dir.join(MANIFEST_FILE), |out| writeln!(out, "{manifest}"))?;
    Ok(corpus)
}
