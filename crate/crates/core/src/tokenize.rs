//! Hashing tokenizer.
//!
//! Text is lowercased and split into maximal runs of alphanumeric
//! characters; everything else (whitespace, punctuation, symbols) separates
//! tokens and is dropped. Each token maps to `1 + fnv1a64(token) % (V - 1)`,
//! leaving id 0 for out-of-vocabulary input. No `[CLS]`/`[SEP]` ids are
//! emitted: under mean pooling a constant token only adds a constant vector,
//! which the segment vectors already supply.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Query tokens beyond this are dropped by default.
pub const DEFAULT_QUERY_MAX_LEN: usize = 20;
/// Document tokens beyond this are dropped by default.
pub const DEFAULT_DOC_MAX_LEN: usize = 256;

/// Reserved token id for empty or unknown input.
pub const OOV_ID: u32 = 0;

/// Whether a sequence is encoded as a query (segment 0) or a document (segment 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Query,
    Document,
}

impl Role {
    pub fn segment(self) -> u8 {
        match self {
            Role::Query => 0,
            Role::Document => 1,
        }
    }

    pub fn default_max_len(self) -> usize {
        match self {
            Role::Query => DEFAULT_QUERY_MAX_LEN,
            Role::Document => DEFAULT_DOC_MAX_LEN,
        }
    }
}

/// Token ids of one text plus the role they will be encoded under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    ids: Vec<u32>,
    role: Role,
}

impl TokenSeq {
    /// Returns `None` for an empty id list.
    pub fn new(ids: Vec<u32>, role: Role) -> Option<Self> {
        (!ids.is_empty()).then_some(Self { ids, role })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Maps a normalized token to an id in `[1, vocab_size)`.
pub fn token_id(token: &str, vocab_size: u32) -> u32 {
    debug_assert!(vocab_size >= 2);
    1 + (fnv1a64(token.as_bytes()) % u64::from(vocab_size - 1)) as u32
}

/// Lowercased alphanumeric runs of `text`, in order.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    let mut chars = text.chars().peekable();
    core::iter::from_fn(move || {
        while chars.next_if(|c| !c.is_alphanumeric()).is_some() {}
        let mut word = String::new();
        while let Some(c) = chars.next_if(|c| c.is_alphanumeric()) {
            word.extend(c.to_lowercase());
        }
        (!word.is_empty()).then_some(word)
    })
}

/// Tokenizes `text` for `role`, keeping at most `max_len` tokens.
///
/// Text without any alphanumeric character yields the single id [`OOV_ID`].
/// `vocab_size` must be at least 2 and `max_len` at least 1.
pub fn tokenize(text: &str, role: Role, vocab_size: u32, max_len: usize) -> TokenSeq {
    assert!(vocab_size >= 2, "vocabulary needs room for the OOV id");
    let max_len = max_len.max(1);
    let mut ids: Vec<u32> = words(text)
        .take(max_len)
        .map(|w| token_id(&w, vocab_size))
        .collect();
    if ids.is_empty() {
        ids = vec![OOV_ID];
    }
    TokenSeq { ids, role }
}
