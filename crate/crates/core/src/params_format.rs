//! Binary layout of [`ToyEncoderParams`].
//!
//! `"DENC"`, version (u32 LE), vocab size (u32 LE), dim (u32 LE), then
//! `(vocab + 2) * dim` f64 LE values in the flat parameter order
//! (token table, query segment, document segment), then a CRC32 (u32 LE) of
//! every preceding byte.

use alloc::vec::Vec;
use core::fmt;

use crate::encoder::{EncodeError, ToyEncoderParams};

pub const MAGIC: [u8; 4] = *b"DENC";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum ParamsFormatError {
    BadMagic,
    UnsupportedVersion(u32),
    UnexpectedEof,
    TrailingBytes(usize),
    ChecksumMismatch { stored: u32, computed: u32 },
    Invalid(EncodeError),
}

impl fmt::Display for ParamsFormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadMagic => f.write_str("not a densedex encoder parameter file"),
            Self::UnsupportedVersion(v) => write!(f, "unsupported parameter format version {v}"),
            Self::UnexpectedEof => f.write_str("unexpected EOF"),
            Self::TrailingBytes(n) => write!(f, "{n} unexpected trailing bytes"),
            Self::ChecksumMismatch { stored, computed } => {
                write!(f, "checksum mismatch: stored {stored:08x}, computed {computed:08x}")
            }
            Self::Invalid(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ParamsFormatError {}

pub fn encode_params(params: &ToyEncoderParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + params.values().len() * 8 + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.vocab_size() as u32).to_le_bytes());
    out.extend_from_slice(&(params.dim() as u32).to_le_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<ToyEncoderParams, ParamsFormatError> {
    let u32_at = |pos: usize| u32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes"));
    if bytes.len() < 4 {
        return Err(ParamsFormatError::UnexpectedEof);
    }
    if bytes[..4] != MAGIC {
        return Err(ParamsFormatError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(ParamsFormatError::UnexpectedEof);
    }
    let version = u32_at(4);
    if version != VERSION {
        return Err(ParamsFormatError::UnsupportedVersion(version));
    }
    let vocab_size = u32_at(8) as usize;
    let dim = u32_at(12) as usize;
    let body = ToyEncoderParams::value_count(vocab_size, dim)
        .checked_mul(8)
        .ok_or(ParamsFormatError::UnexpectedEof)?;
    let end = HEADER_LEN + body;
    if bytes.len() < end + 4 {
        return Err(ParamsFormatError::UnexpectedEof);
    }
    if bytes.len() > end + 4 {
        return Err(ParamsFormatError::TrailingBytes(bytes.len() - end - 4));
    }
    let stored = u32_at(end);
    let computed = crc32fast::hash(&bytes[..end]);
    if stored != computed {
        return Err(ParamsFormatError::ChecksumMismatch { stored, computed });
    }
    let values = bytes[HEADER_LEN..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ToyEncoderParams::from_values(vocab_size, dim, values).map_err(ParamsFormatError::Invalid)
}
