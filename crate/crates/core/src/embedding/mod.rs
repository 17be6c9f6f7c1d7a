//! Embedding text IO, vocabulary construction, and table initialization.

mod table;
mod vocab;

pub use table::{init_embedding_table, EmbeddingTable};
pub use vocab::{build_vocabulary, Vocabulary, BOS_ID, EOS_ID, PAD_ID, SPECIAL_COUNT, UNK_ID};

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Vector;

/// On-disk layout of an embedding text file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbFormat {
    /// First line is "count dim" (word2vec text output).
    Header,
    /// Rows only; the dimension is inferred from the first line (GloVe).
    Headerless,
}

/// A word -> vector table read from disk. Iteration order is insertion
/// order, so writing is deterministic.
#[derive(Debug, Clone)]
pub struct PretrainedEmbeddings {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vector>,
    index: HashMap<String, usize>,
}

impl PretrainedEmbeddings {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("embedding dimension must be positive".into()));
        }
        Ok(Self { dim, words: Vec::new(), vectors: Vec::new(), index: HashMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Inserts an entry; a duplicate word keeps the first vector and logs a
    /// warning, matching lenient readers of real embedding dumps.
    pub fn insert(&mut self, word: &str, vector: Vector) -> Result<()> {
        if vector.dim() != self.dim {
            return Err(Error::dim("embedding insert", vector.dim(), self.dim));
        }
        if word.chars().any(char::is_whitespace) || word.is_empty() {
            return Err(Error::Argument(format!("invalid embedding word {word:?}")));
        }
        if self.index.contains_key(word) {
            log::warn!("duplicate embedding entry for {word:?}; keeping the first");
            return Ok(());
        }
        self.index.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        self.vectors.push(vector);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&Vector> {
        self.index.get(word).map(|&i| &self.vectors[i])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &Vector)> {
        self.words.iter().map(String::as_str).zip(self.vectors.iter())
    }
}

/// Reads an embedding text file. Malformed lines fail hard with their line
/// number; silent skipping would corrupt downstream statistics.
pub fn parse_embedding_text(path: &Path, format: EmbFormat) -> Result<PretrainedEmbeddings> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let mut lines = text.lines().enumerate();

    let mut expected: Option<(usize, usize)> = None;
    if format == EmbFormat::Header {
        let (lineno, header) = lines
            .next()
            .ok_or_else(|| parse_err(path, 1, "empty file, expected \"count dim\" header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parsed = if fields.len() == 2 {
            fields[0].parse::<usize>().ok().zip(fields[1].parse::<usize>().ok())
        } else {
            None
        };
        let (count, dim) = parsed
            .ok_or_else(|| parse_err(path, lineno + 1, "malformed header, expected \"count dim\""))?;
        if dim == 0 {
            return Err(parse_err(path, lineno + 1, "header declares dimension 0"));
        }
        expected = Some((count, dim));
    }

    let mut emb: Option<PretrainedEmbeddings> = expected
        .map(|(_, dim)| PretrainedEmbeddings::new(dim))
        .transpose()?;
    let mut data_lines = 0usize;

    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line has a first field");
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, lineno, &format!("not a number: {f:?}")))
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(parse_err(path, lineno, "row has a word but no values"));
        }
        if emb.is_none() {
            emb = Some(PretrainedEmbeddings::new(values.len())?);
        }
        let emb = emb.as_mut().expect("just initialized");
        if values.len() != emb.dim() {
            return Err(parse_err(
                path,
                lineno,
                &format!("expected {} values, found {}", emb.dim(), values.len()),
            ));
        }
        emb.insert(word, Vector::new(values))?;
        data_lines += 1;
    }

    let emb = emb.ok_or_else(|| parse_err(path, 1, "no embedding rows"))?;
    if let Some((count, _)) = expected {
        if count != data_lines {
            return Err(parse_err(
                path,
                1,
                &format!("header declares {count} rows but file has {data_lines}"),
            ));
        }
    }
    Ok(emb)
}

/// Writes entries as embedding text. Values are printed with 17 significant
/// digits so a parse of the output is bitwise identical.
pub fn write_embedding_text<'a, I>(entries: I, dim: usize, path: &Path, format: EmbFormat) -> Result<()>
where
    I: ExactSizeIterator<Item = (&'a str, &'a [f64])>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display(), e);

    if format == EmbFormat::Header {
        writeln!(w, "{} {}", entries.len(), dim).map_err(io_err)?;
    }
    for (word, values) in entries {
        debug_assert_eq!(values.len(), dim);
        write!(w, "{word}").map_err(io_err)?;
        for v in values {
            write!(w, " {v:.16e}").map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn parse_err(path: &Path, line: usize, msg: &str) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_header_format() {
        let f = write_tmp("2 3\nthe 0.1 0.2 0.3\ncat 0.4 0.5 0.6\n");
        let emb = parse_embedding_text(f.path(), EmbFormat::Header).unwrap();
        assert_eq!(emb.len(), 2);
        assert_eq!(emb.dim(), 3);
        assert_eq!(emb.get("cat").unwrap().as_slice(), &[0.4, 0.5, 0.6]);
    }

    #[test]
    fn headerless_infers_dim_from_first_line() {
        let f = write_tmp("a 1.0 2.0\n");
        let emb = parse_embedding_text(f.path(), EmbFormat::Headerless).unwrap();
        assert_eq!(emb.dim(), 2);
        assert_eq!(emb.len(), 1);
    }

    #[test]
    fn short_row_reports_its_line_number() {
        let f = write_tmp("2 3\nthe 0.1 0.2 0.3\ncat 0.4 0.5\n");
        let err = parse_embedding_text(f.path(), EmbFormat::Header).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }

    #[test]
    fn bad_float_reports_its_line_number() {
        let f = write_tmp("dog 0.1 x\n");
        let err = parse_embedding_text(f.path(), EmbFormat::Headerless).unwrap_err().to_string();
        assert!(err.contains(":1:") && err.contains('x'), "{err}");
    }

    #[test]
    fn header_count_mismatch_is_an_error() {
        let f = write_tmp("3 2\na 1 2\nb 3 4\n");
        assert!(parse_embedding_text(f.path(), EmbFormat::Header).is_err());
    }

    #[test]
    fn duplicate_word_keeps_the_first_vector() {
        let f = write_tmp("a 1.0\na 2.0\n");
        let emb = parse_embedding_text(f.path(), EmbFormat::Headerless).unwrap();
        assert_eq!(emb.len(), 1);
        assert_eq!(emb.get("a").unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn round_trip_is_bitwise_exact_in_both_formats() {
        let mut emb = PretrainedEmbeddings::new(3).unwrap();
        emb.insert("pi", Vector::new(vec![1.0 / 3.0, -1e-17, 123456.789012345])).unwrap();
        emb.insert("neg", Vector::new(vec![-0.0, f64::MIN_POSITIVE, 2.0_f64.powi(-40)])).unwrap();

        for format in [EmbFormat::Header, EmbFormat::Headerless] {
            let f = tempfile::NamedTempFile::new().unwrap();
            write_embedding_text(
                emb.iter().map(|(w, v)| (w, v.as_slice())),
                emb.dim(),
                f.path(),
                format,
            )
            .unwrap();
            let back = parse_embedding_text(f.path(), format).unwrap();
            assert_eq!(back.len(), emb.len());
            for (w, v) in emb.iter() {
                let got = back.get(w).unwrap();
                for (a, b) in got.as_slice().iter().zip(v.as_slice()) {
                    assert_eq!(a.to_bits(), b.to_bits(), "word {w}");
                }
            }
        }
    }

    #[test]
    fn empty_table_writes_zero_count_header() {
        let emb = PretrainedEmbeddings::new(3).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_embedding_text(
            emb.iter().map(|(w, v)| (w, v.as_slice())),
            3,
            f.path(),
            EmbFormat::Header,
        )
        .unwrap();
        assert_eq!(std::fs::read_to_string(f.path()).unwrap(), "0 3\n");
    }

    #[test]
    fn line_count_matches_entries_plus_header() {
        let mut emb = PretrainedEmbeddings::new(2).unwrap();
        for i in 0..10 {
            emb.insert(&format!("w{i}"), Vector::new(vec![i as f64, 0.0])).unwrap();
        }
        let f = tempfile::NamedTempFile::new().unwrap();
        write_embedding_text(
            emb.iter().map(|(w, v)| (w, v.as_slice())),
            2,
            f.path(),
            EmbFormat::Header,
        )
        .unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(text.lines().count(), 11);
    }
}
