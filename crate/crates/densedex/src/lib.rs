//! File formats, the memory-mapped embedding store, parallel search and the
//! `densedex` command line, built on [`densedex_core`].

pub mod cli;
pub mod encode;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod search;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use store::{build_store, BuildSummary, EmbeddingStore};
