//! Low-level CSV machinery shared by registration, the in-situ scanner, and
//! the bulk loader.
//!
//! Dialect: comma delimiter, optional double-quote quoting with `""` as the
//! escaped quote, no embedded newlines, optional header row. Files without
//! any quote character take a memchr fast path.

use std::borrow::Cow;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { has_header: false }
    }
}

/// Byte image of a raw file, either owned or memory-mapped.
pub struct RawFile {
    data: Data,
}

enum Data {
    Owned(Vec<u8>),
    Mapped(memmap2::Mmap),
}

impl RawFile {
    pub fn read(path: &Path) -> Result<RawFile> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(RawFile { data: Data::Owned(bytes) })
    }

    /// Maps the file read-only, falling back to [`RawFile::read`] when the
    /// platform refuses (empty file, unusual filesystem). Scans then share
    /// the page cache instead of each copying the whole file.
    pub fn map(path: &Path) -> Result<RawFile> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        // Safety: the mapping is read-only and the catalog treats raw files
        // as immutable while registered; a concurrent truncation would be a
        // catalog-contract violation.
        match unsafe { memmap2::Mmap::map(&file) } {
            Ok(m) => Ok(RawFile { data: Data::Mapped(m) }),
            Err(_) => RawFile::read(path),
        }
    }

    pub fn bytes(&self) -> &[u8] {
        match &self.data {
            Data::Owned(v) => v,
            Data::Mapped(m) => m,
        }
    }

    /// Whether the file contains any quote character, which disables the
    /// field walker's memchr fast path. Full scan of the image.
    pub fn detect_quoted(&self) -> bool {
        memchr::memchr(b'"', self.bytes()).is_some()
    }
}

/// Iterates (line_number, start, end) spans of data rows. Line numbers are
/// 1-based over the whole file; the header line, when present, is skipped
/// but still counted.
pub fn row_spans(bytes: &[u8], opts: CsvOptions) -> RowSpans<'_> {
    RowSpans { bytes, pos: 0, line: 0, skip_first: opts.has_header }
}

pub struct RowSpans<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    skip_first: bool,
}

impl Iterator for RowSpans<'_> {
    type Item = (usize, usize, usize);

    fn next(&mut self) -> Option<(usize, usize, usize)> {
        loop {
            if self.pos >= self.bytes.len() {
                return None;
            }
            let start = self.pos;
            let end = match memchr::memchr(b'\n', &self.bytes[start..]) {
                Some(i) => start + i,
                None => self.bytes.len(),
            };
            self.pos = end + 1;
            self.line += 1;
            let mut end = end;
            if end > start && self.bytes[end - 1] == b'\r' {
                end -= 1;
            }
            if self.skip_first {
                self.skip_first = false;
                continue;
            }
            return Some((self.line, start, end));
        }
    }
}

/// Walks the fields of one row, yielding the byte span of each raw
/// (still-quoted) field.
pub struct FieldWalker<'a> {
    row: &'a [u8],
    pos: usize,
    done: bool,
    quoted: bool,
}

impl<'a> FieldWalker<'a> {
    /// A row always has `comma_count + 1` fields; an empty row is one empty
    /// field.
    pub fn new(row: &'a [u8], quoted: bool) -> FieldWalker<'a> {
        FieldWalker { row, pos: 0, done: false, quoted }
    }

    /// Starts mid-row at a known field offset (from a positional map).
    /// `offset == row.len()` is a trailing empty field.
    pub fn at(row: &'a [u8], offset: usize, quoted: bool) -> FieldWalker<'a> {
        FieldWalker { row, pos: offset, done: offset > row.len(), quoted }
    }
}

impl<'a> Iterator for FieldWalker<'a> {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        if self.done {
            return None;
        }
        let start = self.pos;
        let end = if self.quoted && self.row.get(start) == Some(&b'"') {
            let mut i = start + 1;
            loop {
                match memchr::memchr(b'"', &self.row[i..]) {
                    Some(off) => {
                        let q = i + off;
                        if self.row.get(q + 1) == Some(&b'"') {
                            i = q + 2; // escaped quote
                        } else {
                            // field runs to the delimiter after the close quote
                            break match memchr::memchr(b',', &self.row[q + 1..]) {
                                Some(d) => q + 1 + d,
                                None => self.row.len(),
                            };
                        }
                    }
                    None => break self.row.len(), // unterminated quote: take rest
                }
            }
        } else {
            match memchr::memchr(b',', &self.row[start..]) {
                Some(off) => start + off,
                None => self.row.len(),
            }
        };
        if end >= self.row.len() {
            self.done = true;
            self.pos = self.row.len();
        } else {
            self.pos = end + 1;
        }
        Some((start, end))
    }
}

/// Decodes a raw field span into its text value, removing quoting.
pub fn decode_field(raw: &[u8]) -> Cow<'_, str> {
    if raw.first() == Some(&b'"') {
        let inner = &raw[1..];
        let inner = match inner.last() {
            Some(&b'"') => &inner[..inner.len() - 1],
            _ => inner,
        };
        let text = String::from_utf8_lossy(inner);
        if text.contains("\"\"") {
            Cow::Owned(text.replace("\"\"", "\""))
        } else {
            Cow::Owned(text.into_owned())
        }
    } else {
        String::from_utf8_lossy(raw)
    }
}

/// Counts data rows, checking that every row has exactly `arity` fields.
pub fn count_rows_checked(path: &Path, arity: usize, opts: CsvOptions) -> Result<u64> {
    let file = RawFile::map(path)?;
    let bytes = file.bytes();
    let quoted = file.detect_quoted();
    let mut rows = 0u64;
    for (line, start, end) in row_spans(bytes, opts) {
        let row = &bytes[start..end];
        let found = FieldWalker::new(row, quoted).count();
        if found != arity {
            return Err(Error::Schema(format!(
                "arity mismatch at {} line {line}: expected {arity} fields, found {found}",
                path.display()
            )));
        }
        rows += 1;
    }
    Ok(rows)
}

/// Encodes one field for CSV output, quoting only when needed.
pub fn encode_field(value: &str) -> Cow<'_, str> {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        Cow::Owned(format!("\"{}\"", value.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(value)
    }
}
