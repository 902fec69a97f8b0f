//! Bag-of-embeddings text encoder shared by queries and documents.
//!
//! An embedding is the mean of the token rows of the sequence plus the
//! segment vector of its role (`seg_query` for segment 0, `seg_doc` for
//! segment 1). One parameter set serves both roles; the same text encoded
//! as a query and as a document differs by exactly `seg_query - seg_doc`.
//! Mean pooling makes the encoding invariant to token order.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::Rng;

use crate::tokenize::{Role, TokenSeq};

#[derive(Debug, Clone, PartialEq)]
pub enum EncodeError {
    TokenOutOfRange { id: u32, vocab_size: usize },
    DimMismatch { left: usize, right: usize },
    /// Shape or contents unusable as parameters.
    InvalidParams(&'static str),
}

impl fmt::Display for EncodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TokenOutOfRange { id, vocab_size } => {
                write!(f, "token id {id} outside vocabulary of size {vocab_size}")
            }
            Self::DimMismatch { left, right } => {
                write!(f, "embedding dimensions differ: {left} vs {right}")
            }
            Self::InvalidParams(why) => write!(f, "invalid encoder parameters: {why}"),
        }
    }
}

impl core::error::Error for EncodeError {}

/// Trainable encoder state, stored flat as `[token_table | seg_query | seg_doc]`.
///
/// `token_table` is `vocab_size × dim`, row-major. Row 0 is the
/// out-of-vocabulary token.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams {
    vocab_size: usize,
    dim: usize,
    values: Vec<f64>,
}

impl ToyEncoderParams {
    fn check_shape(vocab_size: usize, dim: usize) -> Result<(), EncodeError> {
        if vocab_size < 2 {
            return Err(EncodeError::InvalidParams("vocabulary size must be at least 2"));
        }
        if dim == 0 {
            return Err(EncodeError::InvalidParams("dimension must be positive"));
        }
        if vocab_size > u32::MAX as usize {
            return Err(EncodeError::InvalidParams("vocabulary size exceeds u32 ids"));
        }
        Ok(())
    }

    /// Number of `f64` values for a given shape.
    pub fn value_count(vocab_size: usize, dim: usize) -> usize {
        (vocab_size + 2) * dim
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Result<Self, EncodeError> {
        Self::check_shape(vocab_size, dim)?;
        Ok(Self {
            vocab_size,
            dim,
            values: vec![0.0; Self::value_count(vocab_size, dim)],
        })
    }

    /// Token rows uniform in `[-0.5/dim, 0.5/dim]`, segment vectors zero.
    pub fn random<R: Rng + ?Sized>(
        vocab_size: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self, EncodeError> {
        let mut params = Self::zeros(vocab_size, dim)?;
        let bound = 0.5 / dim as f64;
        for v in params.token_table_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
        Ok(params)
    }

    /// Builds parameters from the flat layout. All values must be finite.
    pub fn from_values(vocab_size: usize, dim: usize, values: Vec<f64>) -> Result<Self, EncodeError> {
        Self::check_shape(vocab_size, dim)?;
        if values.len() != Self::value_count(vocab_size, dim) {
            return Err(EncodeError::InvalidParams("value count does not match shape"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(EncodeError::InvalidParams("non-finite value"));
        }
        Ok(Self { vocab_size, dim, values })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Flat mutable view; callers are responsible for keeping values finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn token_table(&self) -> &[f64] {
        &self.values[..self.vocab_size * self.dim]
    }

    pub fn token_table_mut(&mut self) -> &mut [f64] {
        let n = self.vocab_size * self.dim;
        &mut self.values[..n]
    }

    pub fn token_row(&self, id: u32) -> Option<&[f64]> {
        let id = id as usize;
        (id < self.vocab_size).then(|| &self.values[id * self.dim..(id + 1) * self.dim])
    }

    pub fn token_row_mut(&mut self, id: u32) -> Option<&mut [f64]> {
        let id = id as usize;
        let dim = self.dim;
        (id < self.vocab_size).then(move || &mut self.values[id * dim..(id + 1) * dim])
    }

    pub fn segment(&self, role: Role) -> &[f64] {
        let start = self.segment_offset(role);
        &self.values[start..start + self.dim]
    }

    pub fn segment_mut(&mut self, role: Role) -> &mut [f64] {
        let start = self.segment_offset(role);
        let dim = self.dim;
        &mut self.values[start..start + dim]
    }

    pub(crate) fn segment_offset(&self, role: Role) -> usize {
        (self.vocab_size + usize::from(role.segment())) * self.dim
    }

    pub fn seg_query(&self) -> &[f64] {
        self.segment(Role::Query)
    }

    pub fn seg_doc(&self) -> &[f64] {
        self.segment(Role::Document)
    }

    /// Mean of the token rows of `seq` plus the segment vector of its role.
    pub fn encode(&self, seq: &TokenSeq) -> Result<Vec<f64>, EncodeError> {
        let mut out = vec![0.0; self.dim];
        for &id in seq.ids() {
            let row = self.token_row(id).ok_or(EncodeError::TokenOutOfRange {
                id,
                vocab_size: self.vocab_size,
            })?;
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv_len = 1.0 / seq.len() as f64;
        for (o, s) in out.iter_mut().zip(self.segment(seq.role())) {
            *o = *o * inv_len + s;
        }
        Ok(out)
    }

    /// Multiplies every parameter by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }
}

/// Inner product of two embeddings, accumulated in `f64`.
pub fn relevance(query: &[f64], doc: &[f64]) -> Result<f64, EncodeError> {
    if query.len() != doc.len() {
        return Err(EncodeError::DimMismatch {
            left: query.len(),
            right: doc.len(),
        });
    }
    Ok(query.iter().zip(doc).map(|(a, b)| a * b).fold(0.0, |acc, x| acc + x))
}
