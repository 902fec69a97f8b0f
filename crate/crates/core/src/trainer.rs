//! Margin-ranking objective with in-batch negatives, its analytic gradient,
//! and a plain SGD loop for [`ToyEncoderParams`].
//!
//! For one query row with scores `s` over `n` candidate documents, positive
//! set `P` and negative set `N`, the loss is
//!
//! ```text
//! L = (1/n) * Σ_{p∈P, m∈N} max(0, 1 - (s_p - s_m))
//! ```
//!
//! In a batch of `B` (query, positive document) pairs every query is scored
//! against all `B` documents; the documents of the other pairs act as
//! negatives unless qrels mark them relevant. The batch loss is the mean of
//! the row losses.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{relevance, EncodeError, ToyEncoderParams};
use crate::run::Qrels;
use crate::tokenize::{Role, TokenSeq};

/// Settings of the BERT-base fine-tuning run this trainer is a scaled-down
/// version of. Only `BATCH_SIZE` and `ACCUMULATION_STEPS` are used as
/// defaults here; the optimizer values are kept for anyone porting to ADAM.
pub mod bert_finetune {
    pub const BATCH_SIZE: usize = 26;
    pub const ACCUMULATION_STEPS: usize = 2;
    pub const TOTAL_STEPS: usize = 350_000;
    pub const WARMUP_STEPS: usize = 10_000;
    pub const ADAM_LEARNING_RATE: f64 = 3e-6;
    pub const ADAM_BETA1: f64 = 0.9;
    pub const ADAM_BETA2: f64 = 0.999;
    pub const WEIGHT_DECAY: f64 = 0.01;
    pub const DROPOUT: f64 = 0.1;
}

/// Hinge margin between a positive and a negative score.
pub const MARGIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub enum LossError {
    NoPositives,
    NoNegatives,
    IndexOutOfRange { index: usize, len: usize },
    /// In-batch negatives need at least two pairs.
    BatchTooSmall { size: usize },
    /// Positives mask missing its diagonal or of the wrong shape.
    InvalidMask,
    /// Fewer candidate documents than queries.
    MissingDocuments { queries: usize, docs: usize },
}

impl fmt::Display for LossError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoPositives => f.write_str("margin loss needs at least one positive"),
            Self::NoNegatives => f.write_str("margin loss needs at least one negative"),
            Self::IndexOutOfRange { index, len } => {
                write!(f, "positive index {index} out of range for {len} scores")
            }
            Self::BatchTooSmall { size } => {
                write!(f, "batch of {size} pairs; in-batch negatives need at least 2")
            }
            Self::InvalidMask => f.write_str("positives mask must be rows x docs with a true diagonal"),
            Self::MissingDocuments { queries, docs } => {
                write!(f, "{queries} queries but only {docs} documents")
            }
        }
    }
}

impl core::error::Error for LossError {}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Config(&'static str),
    DatasetTooSmall { examples: usize, batch_size: usize },
    NonFiniteLoss { step: usize },
    Encode(EncodeError),
    Loss(LossError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(why) => write!(f, "invalid training config: {why}"),
            Self::DatasetTooSmall { examples, batch_size } => {
                write!(f, "{examples} training pairs cannot fill a batch of {batch_size}")
            }
            Self::NonFiniteLoss { step } => write!(f, "loss became non-finite at step {step}"),
            Self::Encode(e) => write!(f, "{e}"),
            Self::Loss(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<EncodeError> for TrainError {
    fn from(e: EncodeError) -> Self {
        Self::Encode(e)
    }
}

impl From<LossError> for TrainError {
    fn from(e: LossError) -> Self {
        Self::Loss(e)
    }
}

/// A (query, relevant document) pair, optionally with a sampled negative.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub query_id: String,
    pub query: TokenSeq,
    pub doc_id: String,
    pub doc: TokenSeq,
    pub negative: Option<(String, TokenSeq)>,
}

/// `B` queries scored against `B` (or `2B` with pair negatives) documents.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    queries: Vec<TokenSeq>,
    docs: Vec<TokenSeq>,
    positives: Vec<bool>,
}

impl TrainingBatch {
    /// `positives` is row-major `queries.len() × docs.len()`; document `i` must
    /// be a positive of query `i`.
    pub fn new(
        queries: Vec<TokenSeq>,
        docs: Vec<TokenSeq>,
        positives: Vec<bool>,
    ) -> Result<Self, LossError> {
        let b = queries.len();
        if b < 2 {
            return Err(LossError::BatchTooSmall { size: b });
        }
        if docs.len() < b {
            return Err(LossError::MissingDocuments { queries: b, docs: docs.len() });
        }
        if positives.len() != b * docs.len() || (0..b).any(|i| !positives[i * docs.len() + i]) {
            return Err(LossError::InvalidMask);
        }
        Ok(Self { queries, docs, positives })
    }

    /// In-batch construction from pairs. Without qrels only the diagonal is
    /// positive; with qrels, document `j` is also positive for query `i` when
    /// judged relevant. With `use_pair_negatives`, each pair's sampled negative
    /// becomes document column `B + i`.
    pub fn from_examples(
        examples: &[&TrainingExample],
        qrels: Option<&Qrels>,
        use_pair_negatives: bool,
    ) -> Result<Self, LossError> {
        let mut doc_ids: Vec<&str> = examples.iter().map(|e| e.doc_id.as_str()).collect();
        let mut docs: Vec<TokenSeq> = examples.iter().map(|e| e.doc.clone()).collect();
        if use_pair_negatives {
            for e in examples {
                if let Some((id, seq)) = &e.negative {
                    doc_ids.push(id);
                    docs.push(seq.clone());
                }
            }
        }
        let cols = docs.len();
        let mut positives = vec![false; examples.len() * cols];
        for (i, e) in examples.iter().enumerate() {
            positives[i * cols + i] = true;
            if let Some(qrels) = qrels {
                for (j, doc_id) in doc_ids.iter().enumerate() {
                    if qrels.is_relevant(&e.query_id, doc_id) {
                        positives[i * cols + j] = true;
                    }
                }
            }
        }
        let queries = examples.iter().map(|e| e.query.clone()).collect();
        Self::new(queries, docs, positives)
    }

    /// Number of query rows, `B`.
    pub fn size(&self) -> usize {
        self.queries.len()
    }

    /// Number of candidate documents per row, `n`.
    pub fn candidates(&self) -> usize {
        self.docs.len()
    }

    pub fn queries(&self) -> &[TokenSeq] {
        &self.queries
    }

    pub fn docs(&self) -> &[TokenSeq] {
        &self.docs
    }

    pub fn is_positive(&self, query: usize, doc: usize) -> bool {
        self.positives[query * self.docs.len() + doc]
    }
}

/// Relevance of every batch query against every batch document.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
    positives: Vec<bool>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, scores: Vec<f64>, positives: Vec<bool>) -> Result<Self, LossError> {
        if scores.len() != rows * cols || positives.len() != rows * cols {
            return Err(LossError::InvalidMask);
        }
        Ok(Self { rows, cols, scores, positives })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn score(&self, query: usize, doc: usize) -> f64 {
        self.scores[query * self.cols + doc]
    }

    pub fn row(&self, query: usize) -> &[f64] {
        &self.scores[query * self.cols..(query + 1) * self.cols]
    }

    pub fn positives_row(&self, query: usize) -> &[bool] {
        &self.positives[query * self.cols..(query + 1) * self.cols]
    }

    pub fn is_positive(&self, query: usize, doc: usize) -> bool {
        self.positives[query * self.cols + doc]
    }
}

struct Encoded {
    queries: Vec<Vec<f64>>,
    docs: Vec<Vec<f64>>,
    matrix: ScoreMatrix,
}

fn encode_batch(batch: &TrainingBatch, params: &ToyEncoderParams) -> Result<Encoded, EncodeError> {
    let queries = batch
        .queries
        .iter()
        .map(|q| params.encode(q))
        .collect::<Result<Vec<_>, _>>()?;
    let docs = batch
        .docs
        .iter()
        .map(|d| params.encode(d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut scores = Vec::with_capacity(queries.len() * docs.len());
    for q in &queries {
        for d in &docs {
            scores.push(relevance(q, d)?);
        }
    }
    let matrix = ScoreMatrix {
        rows: queries.len(),
        cols: docs.len(),
        scores,
        positives: batch.positives.clone(),
    };
    Ok(Encoded { queries, docs, matrix })
}

pub fn build_score_matrix(batch: &TrainingBatch, params: &ToyEncoderParams) -> Result<ScoreMatrix, EncodeError> {
    encode_batch(batch, params).map(|e| e.matrix)
}

// Sum of active hinges of one row, without the 1/n factor.
fn row_hinge_sum(scores: &[f64], positives: &[bool]) -> f64 {
    let mut sum = 0.0;
    for (p, &sp) in scores.iter().enumerate() {
        if !positives[p] {
            continue;
        }
        for (m, &sm) in scores.iter().enumerate() {
            if positives[m] {
                continue;
            }
            let hinge = MARGIN - (sp - sm);
            if hinge > 0.0 {
                sum += hinge;
            }
        }
    }
    sum
}

/// Margin loss of one query row. `positives` are indices into `scores`;
/// the remaining indices are negatives, and `n = scores.len()`.
pub fn margin_loss(scores: &[f64], positives: &[usize]) -> Result<f64, LossError> {
    let mut mask = vec![false; scores.len()];
    for &index in positives {
        if index >= scores.len() {
            return Err(LossError::IndexOutOfRange { index, len: scores.len() });
        }
        mask[index] = true;
    }
    let count = mask.iter().filter(|&&p| p).count();
    if count == 0 {
        return Err(LossError::NoPositives);
    }
    if count == scores.len() {
        return Err(LossError::NoNegatives);
    }
    Ok(row_hinge_sum(scores, &mask) / scores.len() as f64)
}

/// Mean row loss over the batch. A row whose candidates are all positive has
/// no pair to rank and contributes zero.
pub fn batch_loss(matrix: &ScoreMatrix) -> Result<f64, LossError> {
    if matrix.rows < 2 {
        return Err(LossError::BatchTooSmall { size: matrix.rows });
    }
    let n = matrix.cols as f64;
    let total: f64 = (0..matrix.rows)
        .map(|i| row_hinge_sum(matrix.row(i), matrix.positives_row(i)) / n)
        .sum();
    Ok(total / matrix.rows as f64)
}

/// Batch loss and its gradient with respect to every parameter.
///
/// At a hinge kink (`1 - (s_p - s_m) == 0`) the subgradient 0 is used.
pub fn loss_gradient(
    batch: &TrainingBatch,
    params: &ToyEncoderParams,
) -> Result<(f64, ToyEncoderParams), TrainError> {
    let mut grad = ToyEncoderParams::zeros(params.vocab_size(), params.dim())?;
    let loss = add_loss_gradient(batch, params, &mut grad, &mut Vec::new())?;
    Ok((loss, grad))
}

// Adds the batch gradient into `grad` and appends every token id it touched
// (possibly repeated) to `touched`. Returns the batch loss.
fn add_loss_gradient(
    batch: &TrainingBatch,
    params: &ToyEncoderParams,
    grad: &mut ToyEncoderParams,
    touched: &mut Vec<u32>,
) -> Result<f64, TrainError> {
    let Encoded { queries, docs, matrix } = encode_batch(batch, params)?;
    let (rows, cols, dim) = (matrix.rows, matrix.cols, params.dim());
    let scale = 1.0 / (cols as f64 * rows as f64);

    // d loss / d score
    let mut score_grad = vec![0.0; rows * cols];
    let mut loss = 0.0;
    for i in 0..rows {
        let scores = matrix.row(i);
        let positives = matrix.positives_row(i);
        let grad_row = &mut score_grad[i * cols..(i + 1) * cols];
        for p in (0..cols).filter(|&p| positives[p]) {
            for m in (0..cols).filter(|&m| !positives[m]) {
                let hinge = MARGIN - (scores[p] - scores[m]);
                if hinge > 0.0 {
                    loss += hinge;
                    grad_row[p] -= scale;
                    grad_row[m] += scale;
                }
            }
        }
    }
    loss *= scale;

    let mut emb_grad = vec![0.0; dim];
    for (i, seq) in batch.queries.iter().enumerate() {
        emb_grad.iter_mut().for_each(|g| *g = 0.0);
        for (j, d) in docs.iter().enumerate() {
            let g = score_grad[i * cols + j];
            if g != 0.0 {
                emb_grad.iter_mut().zip(d).for_each(|(e, x)| *e += g * x);
            }
        }
        backprop_embedding(grad, seq, &emb_grad);
        touched.extend_from_slice(seq.ids());
    }
    for (j, seq) in batch.docs.iter().enumerate() {
        emb_grad.iter_mut().for_each(|g| *g = 0.0);
        for (i, q) in queries.iter().enumerate() {
            let g = score_grad[i * cols + j];
            if g != 0.0 {
                emb_grad.iter_mut().zip(q).for_each(|(e, x)| *e += g * x);
            }
        }
        backprop_embedding(grad, seq, &emb_grad);
        touched.extend_from_slice(seq.ids());
    }
    Ok(loss)
}

// Pushes d loss / d embedding of `seq` into the token rows and segment vector.
fn backprop_embedding(grad: &mut ToyEncoderParams, seq: &TokenSeq, emb_grad: &[f64]) {
    for (s, e) in grad.segment_mut(seq.role()).iter_mut().zip(emb_grad) {
        *s += e;
    }
    let inv_len = 1.0 / seq.len() as f64;
    for &id in seq.ids() {
        // ids were validated by encode
        let row = grad.token_row_mut(id).expect("token id checked during encoding");
        for (r, e) in row.iter_mut().zip(emb_grad) {
            *r += e * inv_len;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub batch_size: usize,
    /// Batches whose gradients are averaged into one update.
    pub accumulation_steps: usize,
    /// Optimizer updates.
    pub steps: usize,
    /// Peak learning rate.
    pub learning_rate: f64,
    /// Linear warmup length; `None` scales the reference 10k-of-350k ratio.
    pub warmup_steps: Option<usize>,
    pub seed: u64,
    /// Score each pair's sampled negative as an extra column.
    pub use_pair_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            vocab_size: 1 << 16,
            dim: 64,
            batch_size: bert_finetune::BATCH_SIZE,
            accumulation_steps: bert_finetune::ACCUMULATION_STEPS,
            steps: 2_000,
            learning_rate: 2.0,
            warmup_steps: None,
            seed: 0,
            use_pair_negatives: false,
        }
    }
}

impl TrainConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_steps.unwrap_or(
            self.steps * bert_finetune::WARMUP_STEPS / bert_finetune::TOTAL_STEPS,
        )
    }

    /// Learning rate of update `step` (0-based): linear warmup to the peak,
    /// then linear decay reaching zero after the last step.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let warmup = self.warmup().min(self.steps);
        if step < warmup {
            self.learning_rate * (step + 1) as f64 / warmup as f64
        } else {
            let remaining = self.steps.saturating_sub(step) as f64;
            self.learning_rate * remaining / (self.steps - warmup) as f64
        }
    }

    /// Initial parameters derived from the seed.
    pub fn initial_params(&self) -> Result<ToyEncoderParams, EncodeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(INIT_STREAM);
        ToyEncoderParams::random(self.vocab_size, self.dim, &mut rng)
    }

    fn validate(&self, examples: usize) -> Result<(), TrainError> {
        if self.batch_size < 2 {
            return Err(TrainError::Config("batch size must be at least 2"));
        }
        if self.accumulation_steps == 0 {
            return Err(TrainError::Config("accumulation steps must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainError::Config("learning rate must be finite and non-negative"));
        }
        if examples < self.batch_size {
            return Err(TrainError::DatasetTooSmall { examples, batch_size: self.batch_size });
        }
        Ok(())
    }
}

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ToyEncoderParams,
    /// Mean batch loss of each update, measured before the update.
    pub losses: Vec<f64>,
}

/// Epoch-wise shuffled batches; a tail shorter than the batch is dropped.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(len: usize, batch_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SHUFFLE_STREAM);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self { order, cursor: 0, batch_size, rng }
    }

    fn next_batch(&mut self) -> &[usize] {
        if self.cursor + self.batch_size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let batch = &self.order[self.cursor..self.cursor + self.batch_size];
        self.cursor += self.batch_size;
        batch
    }
}

/// Trains from the seed-derived initialization. Deterministic in `config`.
pub fn train(
    examples: &[TrainingExample],
    qrels: Option<&Qrels>,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate(examples.len())?;
    let params = config.initial_params()?;
    train_from(params, examples, qrels, config)
}

/// Trains starting from `params`; `config.vocab_size`/`dim` are ignored.
pub fn train_from(
    mut params: ToyEncoderParams,
    examples: &[TrainingExample],
    qrels: Option<&Qrels>,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate(examples.len())?;
    let mut sampler = BatchSampler::new(examples.len(), config.batch_size, config.seed);
    let mut losses = Vec::with_capacity(config.steps);
    // Token rows are updated sparsely: only rows some batch touched are
    // applied and reset. Segment vectors are always touched.
    let mut accumulated = ToyEncoderParams::zeros(params.vocab_size(), params.dim())?;
    let mut touched: Vec<u32> = Vec::new();
    let inv_accum = 1.0 / config.accumulation_steps as f64;

    for step in 0..config.steps {
        touched.clear();
        let mut step_loss = 0.0;
        for _ in 0..config.accumulation_steps {
            let picked: Vec<&TrainingExample> =
                sampler.next_batch().iter().map(|&i| &examples[i]).collect();
            let batch = TrainingBatch::from_examples(&picked, qrels, config.use_pair_negatives)?;
            step_loss += add_loss_gradient(&batch, &params, &mut accumulated, &mut touched)?;
        }
        step_loss *= inv_accum;
        if !step_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { step });
        }
        losses.push(step_loss);

        touched.sort_unstable();
        touched.dedup();
        let lr = config.learning_rate_at(step);
        let factor = lr * inv_accum;
        let mut finite = true;
        let mut apply = |p: &mut [f64], g: &mut [f64]| {
            for (p, g) in p.iter_mut().zip(g.iter_mut()) {
                if lr != 0.0 {
                    *p -= factor * *g;
                    finite &= p.is_finite();
                }
                *g = 0.0;
            }
        };
        for &id in &touched {
            // ids were validated by encode
            let (p, g) = (params.token_row_mut(id), accumulated.token_row_mut(id));
            apply(p.expect("token id checked during encoding"), g.expect("token id checked during encoding"));
        }
        for role in [Role::Query, Role::Document] {
            apply(params.segment_mut(role), accumulated.segment_mut(role));
        }
        if !finite {
            return Err(TrainError::NonFiniteLoss { step });
        }
    }
    Ok(TrainOutcome { params, losses })
}
