//! Allocation-only core of the `densedex` dense retrieval engine.
//!
//! Queries and documents are represented by fixed-length embeddings and
//! ranked by raw inner product. Everything here is pure computation over
//! in-memory data; file IO, threading and the command line live in the
//! `densedex` crate.
//!
//! | module | contents |
//! |--------|----------|
//! | [`run`] | [`Run`] and [`Qrels`], the ranked-list and judgment types |
//! | [`mips`] | exact top-k maximum inner product search and shard merging |
//! | [`tokenize`] | hashing tokenizer and [`TokenSeq`] |
//! | [`encoder`] | bag-of-embeddings encoder with segment vectors |
//! | [`trainer`] | margin loss with in-batch negatives, gradients, SGD loop |
//! | [`eval`] | MRR@k, Recall@k, recall curves |
//! | [`fusion`] | alternating merge of two runs, consistency factor |
//! | [`store_format`] | binary layout of the embedding store |
//! | [`params_format`] | binary layout of encoder parameters |

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod encoder;
pub mod eval;
pub mod fusion;
pub mod mips;
pub mod params_format;
pub mod run;
pub mod store_format;
pub mod tokenize;
pub mod trainer;

pub use encoder::{relevance, EncodeError, ToyEncoderParams};
pub use eval::{mrr_at_k, recall_at_k, recall_curve, EvalError, Metric, MetricReport};
pub use fusion::{alternating_merge, consistency_factor, fuse_runs, FusionConfig, FusionError};
pub use mips::{search_topk, Hit, MipsError, VectorMatrix};
pub use run::{Qrels, Run, RunEntry, RunError};
pub use tokenize::{tokenize, Role, TokenSeq};
pub use trainer::{
    batch_loss, build_score_matrix, loss_gradient, margin_loss, train, LossError, ScoreMatrix,
    TrainConfig, TrainError, TrainingBatch, TrainingExample,
};
