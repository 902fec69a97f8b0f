//! Encoding text records with [`ToyEncoderParams`], and parameter files.

use std::io::Write;
use std::path::Path;

use densedex_core::params_format::{decode_params, encode_params};
use densedex_core::{tokenize, Role, ToyEncoderParams};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formats::{write_atomically, TextRecord};

pub fn load_params(path: &Path) -> Result<ToyEncoderParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes).map_err(|source| Error::Params { path: path.to_path_buf(), source })
}

pub fn save_params(params: &ToyEncoderParams, path: &Path) -> Result<()> {
    let bytes = encode_params(params);
    write_atomically(path, |file| file.write_all(&bytes).map_err(|e| Error::io(path, e)))
}

/// Embeds one text as `f64`.
pub fn embed_text(params: &ToyEncoderParams, text: &str, role: Role, max_len: usize) -> Result<Vec<f64>> {
    let seq = tokenize(text, role, params.vocab_size() as u32, max_len);
    Ok(params.encode(&seq)?)
}

/// Embeds every record in parallel, preserving order. Outputs are narrowed
/// to `f32`, the storage precision.
pub fn encode_records(
    params: &ToyEncoderParams,
    records: &[TextRecord],
    role: Role,
    max_len: usize,
) -> Result<Vec<(String, Vec<f32>)>> {
    records
        .par_iter()
        .map(|r| {
            let v = embed_text(params, &r.text, role, max_len)?;
            Ok((r.id.clone(), v.into_iter().map(|x| x as f32).collect()))
        })
        .collect()
}
