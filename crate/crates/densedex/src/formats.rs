//! Text formats: `id<TAB>text` collections, qrels, run files, training pairs
//! and vector TSVs.
//!
//! Readers accept LF or CRLF line endings, skip blank lines, and reject
//! invalid UTF-8. Writers emit LF and go through a temporary file that is
//! renamed into place, so a failed write never leaves a partial output.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use densedex_core::store_format::is_valid_id;
use densedex_core::{Qrels, Run, RunEntry};

use crate::error::{Error, Result};

/// Writes `path` via a sibling temporary file renamed on success.
pub fn write_atomically<T>(path: &Path, write: impl FnOnce(&mut File) -> Result<T>) -> Result<T> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    let value = write(tmp.as_file_mut())?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(value)
}

/// Buffered text output through [`write_atomically`].
pub fn write_text(path: &Path, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    write_atomically(path, |file| {
        let mut out = BufWriter::new(file);
        write(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
    })
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Numbered, UTF-8 checked lines with the line terminator removed.
pub struct Lines<R> {
    reader: R,
    path: PathBuf,
    line: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> Lines<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>) -> Self {
        Self { reader, path: path.into(), line: 0, buf: Vec::new() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::parse(&self.path, line, message)
    }
}

impl<R: BufRead> Iterator for Lines<R> {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            }
            self.line += 1;
            if self.buf.last() == Some(&b'\n') {
                self.buf.pop();
            }
            if self.buf.last() == Some(&b'\r') {
                self.buf.pop();
            }
            if self.buf.is_empty() {
                continue;
            }
            return Some(match std::str::from_utf8(&self.buf) {
                Ok(s) => Ok((self.line, s.to_owned())),
                Err(e) => Err(self.error(self.line, format!("invalid UTF-8: {e}"))),
            });
        }
    }
}

/// One line of a collection or query file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
}

/// Streaming reader of `id<TAB>text` lines. Remembers ids to reject duplicates.
pub struct CollectionReader<R> {
    lines: Lines<R>,
    seen: HashSet<String>,
}

impl<R: BufRead> CollectionReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>) -> Self {
        Self { lines: Lines::new(reader, path), seen: HashSet::new() }
    }
}

impl<R: BufRead> Iterator for CollectionReader<R> {
    type Item = Result<TextRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line, content) = match self.lines.next()? {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let fields: Vec<&str> = content.split('\t').collect();
        if fields.len() != 2 {
            return Some(Err(self.lines.error(
                line,
                format!("expected 2 tab-separated fields, found {}", fields.len()),
            )));
        }
        let (id, text) = (fields[0], fields[1]);
        if !is_valid_id(id) {
            return Some(Err(self.lines.error(line, format!("invalid id {id:?}"))));
        }
        if !self.seen.insert(id.to_owned()) {
            return Some(Err(self.lines.error(line, format!("duplicate id {id}"))));
        }
        Some(Ok(TextRecord { id: id.to_owned(), text: text.to_owned() }))
    }
}

pub fn read_tsv_collection(path: &Path) -> Result<CollectionReader<BufReader<File>>> {
    Ok(CollectionReader::new(open(path)?, path))
}

pub fn write_tsv_collection<'a>(
    records: impl IntoIterator<Item = &'a TextRecord>,
    path: &Path,
) -> Result<()> {
    let records: Vec<&TextRecord> = records.into_iter().collect();
    for r in &records {
        if !is_valid_id(&r.id) || r.text.contains(['\t', '\n', '\r']) {
            return Err(Error::Usage(format!("record {:?} cannot be written as TSV", r.id)));
        }
    }
    write_text(path, |out| {
        for r in records {
            writeln!(out, "{}\t{}", r.id, r.text)?;
        }
        Ok(())
    })
}

/// Parses `qid 0 docid rel` lines (tabs or any whitespace). Only `rel >= 1`
/// is kept.
pub fn parse_qrels<R: BufRead>(reader: R, path: impl Into<PathBuf>) -> Result<Qrels> {
    let mut lines = Lines::new(reader, path);
    let mut qrels = Qrels::new();
    while let Some(next) = lines.next() {
        let (line, content) = next?;
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(lines.error(line, format!("expected 4 fields, found {}", fields.len())));
        }
        let rel: i64 = fields[3]
            .parse()
            .map_err(|_| lines.error(line, format!("relevance {:?} is not an integer", fields[3])))?;
        if rel >= 1 {
            qrels.insert(fields[0], fields[2]);
        }
    }
    Ok(qrels)
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    parse_qrels(open(path)?, path)
}

/// Writes `qid<TAB>0<TAB>docid<TAB>1` lines.
pub fn write_qrels(qrels: &Qrels, path: &Path) -> Result<()> {
    write_text(path, |out| {
        for (query_id, docs) in qrels.iter() {
            for doc in docs {
                writeln!(out, "{query_id}\t0\t{doc}\t1")?;
            }
        }
        Ok(())
    })
}

/// Column convention of a run file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunFormat {
    /// `qid<TAB>docid<TAB>rank`
    #[default]
    MsMarco,
    /// `qid Q0 docid rank score tag`
    Trec,
}

/// Parses a run in either column convention, detected per line by field
/// count (3 or 6). Rank is authoritative; MS MARCO lines carry no score and
/// get `1 / rank`.
pub fn parse_run<R: BufRead>(reader: R, path: impl Into<PathBuf>) -> Result<Run> {
    let mut lines = Lines::new(reader, path);
    let mut lists: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
    while let Some(next) = lines.next() {
        let (line, content) = next?;
        let fields: Vec<&str> = content.split_whitespace().collect();
        let (query_id, doc_id, rank, score) = match fields.as_slice() {
            [q, d, r] => (*q, *d, *r, None),
            [q, _, d, r, s, _] => (*q, *d, *r, Some(*s)),
            _ => {
                return Err(lines.error(line, format!("expected 3 or 6 fields, found {}", fields.len())))
            }
        };
        let rank: u32 = rank
            .parse()
            .ok()
            .filter(|r| *r >= 1)
            .ok_or_else(|| lines.error(line, format!("rank {rank:?} is not a positive integer")))?;
        let score = match score {
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|s| s.is_finite())
                .ok_or_else(|| lines.error(line, format!("score {s:?} is not a finite number")))?,
            None => 1.0 / f64::from(rank),
        };
        lists.entry(query_id.to_owned()).or_default().push(RunEntry {
            doc_id: doc_id.to_owned(),
            score,
            rank,
        });
    }
    let mut run = Run::new();
    for (query_id, entries) in lists {
        run.insert_by_rank(query_id, entries).map_err(|e| lines.error(0, e.to_string()))?;
    }
    Ok(run)
}

pub fn read_run(path: &Path) -> Result<Run> {
    parse_run(open(path)?, path)
}

/// Rounds to 6 significant digits and prints the shortest representation
/// of the rounded value.
pub fn format_score(score: f64) -> String {
    let rounded: f64 = format!("{score:.5e}").parse().expect("scientific notation parses");
    format!("{rounded}")
}

pub fn render_run(run: &Run, format: RunFormat, tag: &str, out: &mut dyn Write) -> io::Result<()> {
    for (query_id, entries) in run.iter() {
        for e in entries {
            match format {
                RunFormat::MsMarco => writeln!(out, "{query_id}\t{}\t{}", e.doc_id, e.rank)?,
                RunFormat::Trec => writeln!(
                    out,
                    "{query_id} Q0 {} {} {} {tag}",
                    e.doc_id,
                    e.rank,
                    format_score(e.score)
                )?,
            }
        }
    }
    Ok(())
}

pub fn write_run(run: &Run, path: &Path, format: RunFormat, tag: &str) -> Result<()> {
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(Error::Usage(format!("run tag {tag:?} must be one non-empty word")));
    }
    write_text(path, |out| render_run(run, format, tag, out))
}

/// A training pair `qid<TAB>docid[<TAB>negative docid]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub query_id: String,
    pub doc_id: String,
    pub negative_id: Option<String>,
}

pub fn parse_pairs<R: BufRead>(reader: R, path: impl Into<PathBuf>) -> Result<Vec<PairRecord>> {
    let mut lines = Lines::new(reader, path);
    let mut pairs = Vec::new();
    while let Some(next) = lines.next() {
        let (line, content) = next?;
        let fields: Vec<&str> = content.split('\t').collect();
        match fields.as_slice() {
            [q, d] => pairs.push(PairRecord { query_id: (*q).into(), doc_id: (*d).into(), negative_id: None }),
            [q, d, n] => pairs.push(PairRecord {
                query_id: (*q).into(),
                doc_id: (*d).into(),
                negative_id: Some((*n).into()),
            }),
            _ => return Err(lines.error(line, format!("expected 2 or 3 tab-separated fields, found {}", fields.len()))),
        }
    }
    Ok(pairs)
}

pub fn read_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    parse_pairs(open(path)?, path)
}

pub fn write_pairs(pairs: &[PairRecord], path: &Path) -> Result<()> {
    write_text(path, |out| {
        for p in pairs {
            match &p.negative_id {
                Some(n) => writeln!(out, "{}\t{}\t{n}", p.query_id, p.doc_id)?,
                None => writeln!(out, "{}\t{}", p.query_id, p.doc_id)?,
            }
        }
        Ok(())
    })
}

/// Streaming reader of `id<TAB>v1 v2 … vd` vector lines.
pub struct VectorReader<R> {
    lines: Lines<R>,
}

impl<R: BufRead> VectorReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>) -> Self {
        Self { lines: Lines::new(reader, path) }
    }
}

impl<R: BufRead> Iterator for VectorReader<R> {
    type Item = Result<(String, Vec<f32>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line, content) = match self.lines.next()? {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let Some((id, values)) = content.split_once('\t') else {
            return Some(Err(self.lines.error(line, "expected id<TAB>values")));
        };
        let parsed: std::result::Result<Vec<f32>, _> =
            values.split_whitespace().map(str::parse::<f32>).collect();
        Some(match parsed {
            Ok(v) => Ok((id.to_owned(), v)),
            Err(e) => Err(self.lines.error(line, format!("bad vector value: {e}"))),
        })
    }
}

pub fn read_vector_tsv(path: &Path) -> Result<VectorReader<BufReader<File>>> {
    Ok(VectorReader::new(open(path)?, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn collection(text: &str) -> Vec<Result<TextRecord>> {
        CollectionReader::new(text.as_bytes(), "mem").collect()
    }

    #[test]
    fn collection_lines() {
        let recs = collection("7\thello world\r\n8\tx, y!\n");
        let recs: Vec<TextRecord> = recs.into_iter().map(Result::unwrap).collect();
        assert_eq!(recs[0], TextRecord { id: "7".into(), text: "hello world".into() });
        assert_eq!(recs[1].text, "x, y!");
        assert!(collection("").is_empty());
    }

    #[test]
    fn collection_errors_name_the_line() {
        let err = collection("1\ta\tb\n").pop().unwrap().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let recs = collection("1\ta\n1\tb\n");
        assert!(matches!(recs[1], Err(Error::Parse { line: 2, .. })));
        let recs: Vec<_> = CollectionReader::new(&b"1\tok\n2\t\xff\n"[..], "mem").collect();
        assert!(matches!(recs[1], Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn qrels_formats() {
        let q = parse_qrels("q1 0 d3 1\n".as_bytes(), "mem").unwrap();
        assert!(q.is_relevant("q1", "d3"));
        let q = parse_qrels("q1\t0\td3\t0\n".as_bytes(), "mem").unwrap();
        assert!(q.is_empty());
        let q = parse_qrels("q1 0 d3 1\nq1\t0\td3\t1\n".as_bytes(), "mem").unwrap();
        assert_eq!(q.relevant("q1").unwrap().len(), 1);
        let err = parse_qrels("q1 0 d3 1\nq1 0 d4 yes\n".as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    fn sample_run() -> Run {
        let mut run = Run::new();
        run.insert("q1", [("d2".to_string(), 0.9), ("d5".to_string(), 0.1)]).unwrap();
        run
    }

    fn render(run: &Run, format: RunFormat) -> String {
        let mut out = Vec::new();
        render_run(run, format, "densedex", &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn run_renderings() {
        assert_eq!(render(&sample_run(), RunFormat::MsMarco), "q1\td2\t1\nq1\td5\t2\n");
        assert_eq!(
            render(&sample_run(), RunFormat::Trec),
            "q1 Q0 d2 1 0.9 densedex\nq1 Q0 d5 2 0.1 densedex\n"
        );
    }

    #[test]
    fn run_read_errors() {
        assert!(parse_run("q d1 1\nq d2 3\n".as_bytes(), "mem").is_err());
        assert!(parse_run("q d1 1\nq d2 1\n".as_bytes(), "mem").is_err());
        assert!(parse_run("q d1 1\nq d1 2\n".as_bytes(), "mem").is_err());
        assert!(parse_run("q d1 0\n".as_bytes(), "mem").is_err());
        assert!(parse_run("q d1\n".as_bytes(), "mem").is_err());
    }

    #[test]
    fn run_rank_is_authoritative() {
        let run = parse_run("q Q0 b 2 5.0 t\nq Q0 a 1 5.0 t\n".as_bytes(), "mem").unwrap();
        assert_eq!(run.top_ids("q", 5).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn score_formatting() {
        assert_eq!(format_score(0.9), "0.9");
        assert_eq!(format_score(0.123456789), "0.123457");
        assert_eq!(format_score(-1234567.0), "-1234570");
        assert_eq!(format_score(0.0), "0");
    }

    #[test]
    fn pairs_and_vectors() {
        let p = parse_pairs("q1\td1\nq2\td2\td9\n".as_bytes(), "mem").unwrap();
        assert_eq!(p[1].negative_id.as_deref(), Some("d9"));
        assert!(parse_pairs("q1\n".as_bytes(), "mem").is_err());
        let v: Vec<_> = VectorReader::new("a\t1 2.5 -3\n".as_bytes(), "mem").collect();
        assert_eq!(v[0].as_ref().unwrap().1, vec![1.0, 2.5, -3.0]);
        let v: Vec<_> = VectorReader::new("a\t1 x\n".as_bytes(), "mem").collect();
        assert!(v[0].is_err());
    }

    fn arb_run() -> impl Strategy<Value = Run> {
        prop::collection::btree_map(
            "[a-z][a-z0-9]{0,5}",
            prop::collection::btree_map("[a-z0-9_.-]{1,8}", -1e6f64..1e6, 1..20),
            0..6,
        )
        .prop_map(|queries| {
            let mut run = Run::new();
            for (q, docs) in queries {
                let mut ranked: Vec<(String, f64)> = docs.into_iter().collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
                run.insert(q, ranked).unwrap();
            }
            run
        })
    }

    fn lists(run: &Run) -> Vec<(String, Vec<(String, u32)>)> {
        run.iter()
            .map(|(q, l)| (q.to_string(), l.iter().map(|e| (e.doc_id.clone(), e.rank)).collect()))
            .collect()
    }

    proptest! {
        #[test]
        fn run_round_trips(run in arb_run()) {
            for format in [RunFormat::MsMarco, RunFormat::Trec] {
                let text = render(&run, format);
                let back = parse_run(text.as_bytes(), "mem").unwrap();
                prop_assert_eq!(lists(&back), lists(&run));
                if format == RunFormat::Trec {
                    for ((_, a), (_, b)) in back.iter().zip(run.iter()) {
                        for (x, y) in a.iter().zip(b) {
                            prop_assert_eq!(x.score.to_string(), format_score(y.score));
                        }
                    }
                    // written scores read back unchanged on a second pass
                    prop_assert_eq!(render(&back, format), text);
                }
            }
        }
    }
}
