//! Binary layout of an embedding store.
//!
//! ```text
//! offset  size            field
//! 0       4               magic "DDEX"
//! 4       4               format version (u32 LE)
//! 8       4               dim (u32 LE)
//! 12      8               count (u64 LE)
//! 20      count*dim*4     vectors, row-major f32 LE
//! ..      per id          u32 LE byte length, then UTF-8 bytes
//! end-4   4               CRC32 of every preceding byte (u32 LE)
//! ```
//!
//! The vector block starts at a 4-byte aligned offset so a mapped file can be
//! viewed as `&[f32]` directly on little-endian hosts.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

pub const MAGIC: [u8; 4] = *b"DDEX";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
pub const CHECKSUM_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreFormatError {
    BadMagic,
    UnsupportedVersion(u32),
    UnexpectedEof,
    ChecksumMismatch { stored: u32, computed: u32 },
    TrailingBytes(usize),
    ZeroDim,
    InvalidId { index: usize },
    DuplicateId(String),
    DimMismatch { id: String, expected: usize, got: usize },
    TooLarge,
}

impl fmt::Display for StoreFormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadMagic => f.write_str("not a densedex store"),
            Self::UnsupportedVersion(v) => write!(f, "unsupported store format version {v}"),
            Self::UnexpectedEof => f.write_str("unexpected EOF"),
            Self::ChecksumMismatch { stored, computed } => {
                write!(f, "checksum mismatch: stored {stored:08x}, computed {computed:08x}")
            }
            Self::TrailingBytes(n) => write!(f, "{n} unexpected bytes after id table"),
            Self::ZeroDim => f.write_str("dimension must be positive"),
            Self::InvalidId { index } => write!(f, "id #{index} is empty, not UTF-8, or contains tab/newline"),
            Self::DuplicateId(id) => write!(f, "duplicate id {id}"),
            Self::DimMismatch { id, expected, got } => {
                write!(f, "dim mismatch at id={id}: expected {expected}, got {got}")
            }
            Self::TooLarge => f.write_str("store dimensions overflow addressable size"),
        }
    }
}

impl core::error::Error for StoreFormatError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreHeader {
    pub dim: u32,
    pub count: u64,
}

impl StoreHeader {
    pub fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&VERSION.to_le_bytes());
        out[8..12].copy_from_slice(&self.dim.to_le_bytes());
        out[12..20].copy_from_slice(&self.count.to_le_bytes());
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, StoreFormatError> {
        if bytes.len() < MAGIC.len() {
            return Err(StoreFormatError::UnexpectedEof);
        }
        if bytes[0..4] != MAGIC {
            return Err(StoreFormatError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(StoreFormatError::UnexpectedEof);
        }
        let version = read_u32(&bytes[4..8]);
        if version != VERSION {
            return Err(StoreFormatError::UnsupportedVersion(version));
        }
        let dim = read_u32(&bytes[8..12]);
        if dim == 0 {
            return Err(StoreFormatError::ZeroDim);
        }
        let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        Ok(Self { dim, count })
    }

    /// Byte length of the vector block.
    pub fn vector_bytes(&self) -> Result<usize, StoreFormatError> {
        usize::try_from(self.count)
            .ok()
            .and_then(|c| c.checked_mul(self.dim as usize))
            .and_then(|n| n.checked_mul(4))
            .ok_or(StoreFormatError::TooLarge)
    }
}

fn read_u32(bytes: &[u8]) -> u32 {
    u32::from_le_bytes(bytes.try_into().expect("4 bytes"))
}

/// Ids become run-file fields, so they must be non-empty and free of tabs,
/// newlines and spaces.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && !id.contains(['\t', '\n', '\r', ' '])
}

/// Appends one id-table entry.
pub fn encode_id(id: &str, out: &mut Vec<u8>) {
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id.as_bytes());
}

/// A verified store: header fields, byte range of the vector block, ids in row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreLayout {
    pub dim: usize,
    pub count: usize,
    pub vectors: Range<usize>,
    pub ids: Vec<String>,
}

impl StoreLayout {
    /// Parses and verifies a complete store file.
    pub fn parse(bytes: &[u8]) -> Result<Self, StoreFormatError> {
        let header = StoreHeader::parse(bytes)?;
        let vector_end = HEADER_LEN
            .checked_add(header.vector_bytes()?)
            .ok_or(StoreFormatError::TooLarge)?;
        if bytes.len() < vector_end {
            return Err(StoreFormatError::UnexpectedEof);
        }
        let count = header.count as usize;
        let mut ids = Vec::with_capacity(count.min(bytes.len() / 4));
        let mut seen = BTreeSet::new();
        let mut pos = vector_end;
        for index in 0..count {
            let len_bytes = bytes.get(pos..pos + 4).ok_or(StoreFormatError::UnexpectedEof)?;
            let len = read_u32(len_bytes) as usize;
            pos += 4;
            let raw = bytes.get(pos..pos + len).ok_or(StoreFormatError::UnexpectedEof)?;
            pos += len;
            let id = core::str::from_utf8(raw)
                .ok()
                .filter(|id| is_valid_id(id))
                .ok_or(StoreFormatError::InvalidId { index })?;
            if !seen.insert(id) {
                return Err(StoreFormatError::DuplicateId(id.into()));
            }
            ids.push(String::from(id));
        }
        let remaining = bytes.len() - pos;
        if remaining < CHECKSUM_LEN {
            return Err(StoreFormatError::UnexpectedEof);
        }
        if remaining > CHECKSUM_LEN {
            return Err(StoreFormatError::TrailingBytes(remaining - CHECKSUM_LEN));
        }
        let stored = read_u32(&bytes[pos..]);
        let computed = crc32fast::hash(&bytes[..pos]);
        if stored != computed {
            return Err(StoreFormatError::ChecksumMismatch { stored, computed });
        }
        Ok(Self {
            dim: header.dim as usize,
            count,
            vectors: HEADER_LEN..vector_end,
            ids,
        })
    }

    /// Decodes the vector block into owned floats.
    pub fn decode_vectors(&self, bytes: &[u8]) -> Vec<f32> {
        bytes[self.vectors.clone()]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect()
    }
}

/// Serializes a whole store in memory.
pub fn encode_store<'a>(
    dim: usize,
    rows: impl IntoIterator<Item = (&'a str, &'a [f32])>,
) -> Result<Vec<u8>, StoreFormatError> {
    let dim32 = u32::try_from(dim).map_err(|_| StoreFormatError::TooLarge)?;
    if dim32 == 0 {
        return Err(StoreFormatError::ZeroDim);
    }
    let mut body = Vec::new();
    let mut ids = Vec::new();
    let mut seen = BTreeSet::new();
    for (index, (id, vector)) in rows.into_iter().enumerate() {
        if !is_valid_id(id) {
            return Err(StoreFormatError::InvalidId { index });
        }
        if vector.len() != dim {
            return Err(StoreFormatError::DimMismatch { id: id.into(), expected: dim, got: vector.len() });
        }
        if !seen.insert(id) {
            return Err(StoreFormatError::DuplicateId(id.into()));
        }
        for v in vector {
            body.extend_from_slice(&v.to_le_bytes());
        }
        ids.push(id);
    }
    let header = StoreHeader { dim: dim32, count: ids.len() as u64 };
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + CHECKSUM_LEN);
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&body);
    for id in ids {
        encode_id(id, &mut out);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}
