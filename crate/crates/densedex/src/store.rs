//! Writing and memory-mapping embedding stores.
//!
//! See [`densedex_core::store_format`] for the byte layout.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use densedex_core::mips::VectorMatrix;
use densedex_core::store_format::{encode_id, is_valid_id, StoreFormatError, StoreHeader, StoreLayout, HEADER_LEN};
use memmap2::Mmap;

use crate::error::{Error, Result};
use crate::formats::write_atomically;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildSummary {
    pub count: u64,
    pub bytes: u64,
}

/// Streams `(id, vector)` records into a new store at `out_path`.
///
/// The file is assembled under a temporary name and only renamed into place
/// once every record has been validated.
pub fn build_store<I>(records: I, dim: usize, out_path: &Path) -> Result<BuildSummary>
where
    I: IntoIterator<Item = Result<(String, Vec<f32>)>>,
{
    let store_err = |source| Error::Store { path: out_path.to_path_buf(), source };
    let dim32 = u32::try_from(dim).map_err(|_| store_err(StoreFormatError::TooLarge))?;
    if dim32 == 0 {
        return Err(store_err(StoreFormatError::ZeroDim));
    }
    write_atomically(out_path, |file| {
        let io_err = |e| Error::io(out_path, e);
        let mut out = BufWriter::new(&mut *file);
        out.write_all(&StoreHeader { dim: dim32, count: 0 }.to_bytes()).map_err(io_err)?;

        // CRC of everything after the header; the header CRC is combined in at the end.
        let mut body_crc = crc32fast::Hasher::new();
        let mut ids: Vec<String> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        let mut row = Vec::with_capacity(dim * 4);
        for record in records {
            let (id, vector) = record?;
            if !is_valid_id(&id) {
                return Err(store_err(StoreFormatError::InvalidId { index: ids.len() }));
            }
            if vector.len() != dim {
                return Err(store_err(StoreFormatError::DimMismatch { id, expected: dim, got: vector.len() }));
            }
            if !seen.insert(id.clone()) {
                return Err(store_err(StoreFormatError::DuplicateId(id)));
            }
            row.clear();
            for v in &vector {
                row.extend_from_slice(&v.to_le_bytes());
            }
            body_crc.update(&row);
            out.write_all(&row).map_err(io_err)?;
            ids.push(id);
        }
        let mut table = Vec::new();
        for id in &ids {
            table.clear();
            encode_id(id, &mut table);
            body_crc.update(&table);
            out.write_all(&table).map_err(io_err)?;
        }

        let header = StoreHeader { dim: dim32, count: ids.len() as u64 }.to_bytes();
        let mut crc = crc32fast::Hasher::new();
        crc.update(&header);
        crc.combine(&body_crc);
        out.write_all(&crc.finalize().to_le_bytes()).map_err(io_err)?;
        out.flush().map_err(io_err)?;
        drop(out);

        file.seek(SeekFrom::Start(0)).map_err(io_err)?;
        file.write_all(&header).map_err(io_err)?;
        let bytes = file.seek(SeekFrom::End(0)).map_err(io_err)?;
        Ok(BuildSummary { count: ids.len() as u64, bytes })
    })
}

enum Vectors {
    /// Aligned little-endian view straight into the mapping.
    Mapped,
    Owned(Vec<f32>),
}

/// A read-only, memory-mapped embedding store.
pub struct EmbeddingStore {
    map: Mmap,
    layout: StoreLayout,
    vectors: Vectors,
    index: HashMap<String, usize>,
}

impl std::fmt::Debug for EmbeddingStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingStore")
            .field("dim", &self.layout.dim)
            .field("count", &self.layout.count)
            .finish_non_exhaustive()
    }
}

impl EmbeddingStore {
    /// Maps `path` and verifies header, id table and checksum.
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if len < HEADER_LEN as u64 {
            // also avoids mapping an empty file
            let mut head = Vec::new();
            std::io::Read::read_to_end(&mut &file, &mut head).map_err(|e| Error::io(path, e))?;
            let source = StoreLayout::parse(&head).expect_err("shorter than a header");
            return Err(Error::Store { path: path.to_path_buf(), source });
        }
        // SAFETY: stores are immutable once written; the mapping is read-only
        // and not expected to be modified while open.
        let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
        let layout = StoreLayout::parse(&map).map_err(|source| Error::Store { path: path.to_path_buf(), source })?;
        let vectors = if cfg!(target_endian = "little")
            && bytemuck::try_cast_slice::<u8, f32>(&map[layout.vectors.clone()]).is_ok()
        {
            Vectors::Mapped
        } else {
            Vectors::Owned(layout.decode_vectors(&map))
        };
        let index = layout.ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Ok(Self { map, layout, vectors, index })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn len(&self) -> usize {
        self.layout.count
    }

    pub fn is_empty(&self) -> bool {
        self.layout.count == 0
    }

    pub fn ids(&self) -> &[String] {
        &self.layout.ids
    }

    /// Row-major vector block.
    pub fn vectors(&self) -> &[f32] {
        match &self.vectors {
            Vectors::Mapped => bytemuck::cast_slice(&self.map[self.layout.vectors.clone()]),
            Vectors::Owned(v) => v,
        }
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// The stored vector for `id`, bit-exact.
    pub fn get(&self, id: &str) -> Option<&[f32]> {
        let row = self.row_of(id)?;
        let dim = self.dim();
        Some(&self.vectors()[row * dim..(row + 1) * dim])
    }

    pub fn matrix(&self) -> VectorMatrix<'_> {
        VectorMatrix::new(self.vectors(), self.dim(), self.ids()).expect("layout verified on open")
    }

    /// Loads every row into memory as `(id, vector)` pairs.
    pub fn to_rows(&self) -> Vec<(String, Vec<f32>)> {
        let m = self.matrix();
        (0..m.len()).map(|i| (m.id(i).to_owned(), m.row(i).to_vec())).collect()
    }
}
