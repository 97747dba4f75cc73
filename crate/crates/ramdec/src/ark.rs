//! Kaldi-style `ark` archives of float matrices and int32 vectors.
//!
//! Each entry is `<key> <value>`. A value is binary when the two bytes after
//! the key's space are `\0B`:
//!
//! ```text
//! matrix:  key ' ' \0 B 'F' 'M' ' ' 0x04 <rows:i32le> 0x04 <cols:i32le> <f32le * rows*cols>
//! vector:  key ' ' \0 B 0x04 0x04 <size:i32le> <i32le * size>
//! ```
//!
//! Text matrices are `key  [\n  v v\n  v v ]\n`, text vectors `key v v v\n`.
//! Readers stream one entry at a time.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::marker::PhantomData;
use std::path::Path;

use ramdec_core::{fmt_f32, AlignmentVector, FeatureMatrix, Matrix, UtteranceKey};

use crate::{Error, Result};

const BINARY_MARKER: [u8; 2] = [0x00, b'B'];
const INT32_WIDTH: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Binary,
    Text,
}

mod private {
    /// Byte source that tracks its position for error messages.
    pub struct Cursor<R> {
        pub(super) inner: R,
        pub(super) offset: u64,
        pub(super) key: Option<String>,
    }
}
use private::Cursor;

impl<R: BufRead> Cursor<R> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Archive { offset: self.offset, key: self.key.clone(), message: message.into() }
    }

    fn peek(&mut self) -> Result<Option<u8>> {
        Ok(self.inner.fill_buf()?.first().copied())
    }

    fn byte(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.exact(&mut b)?;
        Ok(b[0])
    }

    fn exact(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(self.err("truncated entry")),
            Err(e) => Err(e.into()),
        }
    }

    fn skip_whitespace(&mut self) -> Result<()> {
        while let Some(b) = self.peek()? {
            if !b.is_ascii_whitespace() {
                break;
            }
            self.inner.consume(1);
            self.offset += 1;
        }
        Ok(())
    }

    /// Bytes up to (not including) `delim`, which is consumed.
    fn until(&mut self, delim: u8) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        let n = self.inner.read_until(delim, &mut buf)?;
        self.offset += n as u64;
        if buf.last() == Some(&delim) {
            buf.pop();
        }
        Ok(buf)
    }

    /// Key bytes up to the first space or newline; a terminating space is
    /// consumed, a newline is left for the value parser.
    fn key_token(&mut self) -> Result<Vec<u8>> {
        let mut key = Vec::new();
        loop {
            let buf = self.inner.fill_buf()?;
            if buf.is_empty() {
                break;
            }
            match buf.iter().position(|&b| b == b' ' || b == b'\n') {
                Some(i) => {
                    key.extend_from_slice(&buf[..i]);
                    let space = buf[i] == b' ';
                    let used = i + usize::from(space);
                    self.inner.consume(used);
                    self.offset += used as u64;
                    break;
                }
                None => {
                    let n = buf.len();
                    key.extend_from_slice(buf);
                    self.inner.consume(n);
                    self.offset += n as u64;
                }
            }
        }
        Ok(key)
    }

    fn line(&mut self) -> Result<String> {
        let bytes = self.until(b'\n')?;
        String::from_utf8(bytes).map_err(|_| self.err("text entry is not UTF-8"))
    }

    fn expect(&mut self, expected: u8, what: &str) -> Result<()> {
        let b = self.byte()?;
        if b != expected {
            return Err(self.err(format!("expected {what}, found byte {b:#04x}")));
        }
        Ok(())
    }

    /// Reads a payload of `len` bytes without trusting `len` for the
    /// allocation up front.
    fn payload(&mut self, len: usize) -> Result<Vec<u8>> {
        if len > isize::MAX as usize {
            return Err(self.err(format!("payload of {len} bytes is too large")));
        }
        let mut buf = Vec::with_capacity(len.min(1 << 20));
        let got = (&mut self.inner).take(len as u64).read_to_end(&mut buf)?;
        self.offset += got as u64;
        if got < len {
            return Err(self.err(format!("truncated entry ({got} of {len} payload bytes)")));
        }
        Ok(buf)
    }

    fn i32_le(&mut self) -> Result<i32> {
        let mut b = [0u8; 4];
        self.exact(&mut b)?;
        Ok(i32::from_le_bytes(b))
    }

    /// `0x04 <i32 le>` size field, rejecting negatives.
    fn size_field(&mut self, what: &str) -> Result<usize> {
        self.expect(INT32_WIDTH, &format!("int32 width before {what}"))?;
        let v = self.i32_le()?;
        usize::try_from(v).map_err(|_| self.err(format!("negative {what} {v}")))
    }
}

/// A value type that can live in an archive.
pub trait ArkValue: Sized {
    fn read_binary<R: BufRead>(cur: &mut Cursor<R>, key: UtteranceKey) -> Result<Self>;
    fn read_text<R: BufRead>(cur: &mut Cursor<R>, key: UtteranceKey) -> Result<Self>;
    fn key(&self) -> &UtteranceKey;
    /// Checks the value can be written; called for every entry before any
    /// byte of an archive is emitted.
    fn check_writable(&self) -> Result<()> {
        Ok(())
    }
    fn write_value<W: Write>(&self, w: &mut W, mode: Mode) -> std::io::Result<()>;
}

impl ArkValue for FeatureMatrix {
    fn read_binary<R: BufRead>(cur: &mut Cursor<R>, key: UtteranceKey) -> Result<Self> {
        let token = cur.until(b' ')?;
        match token.as_slice() {
            b"FM" => {}
            b"DM" => return Err(cur.err("double-precision matrices are not supported")),
            b"CM" | b"CM2" | b"CM3" => return Err(cur.err("compressed matrices are not supported")),
            other => {
                return Err(cur.err(format!("unknown object token {:?}", String::from_utf8_lossy(other))))
            }
        }
        let rows = cur.size_field("row count")?;
        let cols = cur.size_field("column count")?;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| cur.err(format!("matrix size {rows}x{cols} overflows")))?;
        let bytes = cur.payload(len)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let data = Matrix::new(rows, cols, data)?;
        Ok(FeatureMatrix::new(key, data))
    }

    fn read_text<R: BufRead>(cur: &mut Cursor<R>, key: UtteranceKey) -> Result<Self> {
        cur.skip_whitespace()?;
        cur.expect(b'[', "'[' opening a text matrix")?;
        let mut rows: Vec<Vec<f32>> = Vec::new();
        loop {
            let line = cur.line()?;
            let (body, closed) = match line.find(']') {
                Some(i) => {
                    if !line[i + 1..].trim().is_empty() {
                        return Err(cur.err("unexpected text after ']'"));
                    }
                    (&line[..i], true)
                }
                None => (line.as_str(), false),
            };
            let values = body
                .split_whitespace()
                .map(|t| match t.parse::<f32>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(cur.err(format!("bad matrix value {t:?}"))),
                })
                .collect::<Result<Vec<f32>>>()?;
            if !values.is_empty() {
                rows.push(values);
            }
            if closed {
                break;
            }
            if cur.peek()?.is_none() {
                return Err(cur.err("truncated text matrix"));
            }
        }
        let data = Matrix::from_rows(&rows).map_err(|_| cur.err("ragged text matrix"))?;
        Ok(FeatureMatrix::new(key, data))
    }

    fn key(&self) -> &UtteranceKey {
        &self.key
    }

    fn check_writable(&self) -> Result<()> {
        self.data.check_finite()?;
        if i32::try_from(self.data.rows()).is_err() || i32::try_from(self.data.cols()).is_err() {
            return Err(Error::Other(format!("{}: matrix too large for an archive", self.key)));
        }
        Ok(())
    }

    fn write_value<W: Write>(&self, w: &mut W, mode: Mode) -> std::io::Result<()> {
        let m = &self.data;
        match mode {
            Mode::Binary => {
                w.write_all(&BINARY_MARKER)?;
                w.write_all(b"FM ")?;
                w.write_all(&[INT32_WIDTH])?;
                w.write_all(&(m.rows() as i32).to_le_bytes())?;
                w.write_all(&[INT32_WIDTH])?;
                w.write_all(&(m.cols() as i32).to_le_bytes())?;
                for v in m.as_slice() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            Mode::Text => {
                w.write_all(b" [")?;
                for r in 0..m.rows() {
                    w.write_all(b"\n ")?;
                    for v in m.row(r) {
                        write!(w, " {}", fmt_f32(*v))?;
                    }
                }
                w.write_all(b" ]\n")?;
            }
        }
        Ok(())
    }
}

impl ArkValue for AlignmentVector {
    fn read_binary<R: BufRead>(cur: &mut Cursor<R>, key: UtteranceKey) -> Result<Self> {
        cur.expect(INT32_WIDTH, "int32 element width")?;
        let size = cur.size_field("vector size")?;
        let bytes = cur.payload(size.checked_mul(4).ok_or_else(|| cur.err("vector size overflows"))?)?;
        let pdf_ids = bytes
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect::<Vec<_>>();
        if let Some(v) = pdf_ids.iter().find(|&&v| v < 0) {
            return Err(cur.err(format!("negative element {v}")));
        }
        Ok(AlignmentVector::new(key, pdf_ids))
    }

    fn read_text<R: BufRead>(cur: &mut Cursor<R>, key: UtteranceKey) -> Result<Self> {
        let line = cur.line()?;
        let pdf_ids = line
            .split_whitespace()
            .map(|t| match t.parse::<i32>() {
                Ok(v) if v >= 0 => Ok(v),
                _ => Err(cur.err(format!("bad vector element {t:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AlignmentVector::new(key, pdf_ids))
    }

    fn key(&self) -> &UtteranceKey {
        &self.key
    }

    fn check_writable(&self) -> Result<()> {
        if let Some(v) = self.pdf_ids.iter().find(|&&v| v < 0) {
            return Err(Error::Other(format!("{}: negative element {v}", self.key)));
        }
        Ok(())
    }

    fn write_value<W: Write>(&self, w: &mut W, mode: Mode) -> std::io::Result<()> {
        match mode {
            Mode::Binary => {
                w.write_all(&BINARY_MARKER)?;
                w.write_all(&[INT32_WIDTH, INT32_WIDTH])?;
                w.write_all(&(self.pdf_ids.len() as i32).to_le_bytes())?;
                for v in &self.pdf_ids {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            Mode::Text => {
                for v in &self.pdf_ids {
                    write!(w, " {v}")?;
                }
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Streaming archive reader; yields entries in file order.
pub struct ArkReader<R, T> {
    cur: Cursor<R>,
    seen: HashSet<String>,
    done: bool,
    _value: PhantomData<T>,
}

pub type MatrixReader<R> = ArkReader<R, FeatureMatrix>;
pub type IntVectorReader<R> = ArkReader<R, AlignmentVector>;

impl<R: BufRead, T: ArkValue> ArkReader<R, T> {
    pub fn new(inner: R) -> Self {
        Self {
            cur: Cursor { inner, offset: 0, key: None },
            seen: HashSet::new(),
            done: false,
            _value: PhantomData,
        }
    }

    fn next_entry(&mut self) -> Result<Option<T>> {
        self.cur.key = None;
        self.cur.skip_whitespace()?;
        if self.cur.peek()?.is_none() {
            return Ok(None);
        }
        let start = self.cur.offset;
        let raw = self.cur.key_token()?;
        let text = String::from_utf8(raw).map_err(|_| self.cur.err("key is not UTF-8"))?;
        let key = UtteranceKey::new(text.clone()).map_err(|_| Error::Archive {
            offset: start,
            key: Some(text.clone()),
            message: "invalid key".into(),
        })?;
        self.cur.key = Some(text.clone());
        if !self.seen.insert(text.clone()) {
            log::warn!("duplicate archive key {text} at byte {start}");
        }
        let binary = {
            let buf = self.cur.inner.fill_buf()?;
            buf.len() >= 2 && buf[..2] == BINARY_MARKER
        };
        if binary {
            self.cur.exact(&mut [0u8; 2])?;
            T::read_binary(&mut self.cur, key).map(Some)
        } else {
            T::read_text(&mut self.cur, key).map(Some)
        }
    }
}

impl<R: BufRead, T: ArkValue> Iterator for ArkReader<R, T> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_entry().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

pub fn open<T: ArkValue>(path: &Path) -> Result<ArkReader<BufReader<File>, T>> {
    let file = File::open(path).map_err(Error::io(path))?;
    Ok(ArkReader::new(BufReader::new(file)))
}

pub fn read_matrix_archive<R: Read>(stream: R) -> Result<Vec<FeatureMatrix>> {
    ArkReader::new(BufReader::new(stream)).collect()
}

pub fn read_int_vector_archive<R: Read>(stream: R) -> Result<Vec<AlignmentVector>> {
    ArkReader::new(BufReader::new(stream)).collect()
}

/// Writes one entry.
pub fn write_entry<W: Write, T: ArkValue>(w: &mut W, value: &T, mode: Mode) -> Result<()> {
    value.check_writable()?;
    w.write_all(value.key().as_str().as_bytes())?;
    w.write_all(b" ")?;
    value.write_value(w, mode)?;
    Ok(())
}

/// Validates every entry, then writes them all.
pub fn write_archive<W: Write, T: ArkValue>(mut w: W, entries: &[T], mode: Mode) -> Result<()> {
    for e in entries {
        e.check_writable()?;
    }
    for e in entries {
        write_entry(&mut w, e, mode)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_archive<W: Write>(w: W, entries: &[FeatureMatrix], mode: Mode) -> Result<()> {
    write_archive(w, entries, mode)
}

pub fn write_int_vector_archive<W: Write>(w: W, entries: &[AlignmentVector], mode: Mode) -> Result<()> {
    write_archive(w, entries, mode)
}

pub fn write_archive_file<T: ArkValue>(path: &Path, entries: &[T], mode: Mode) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    write_archive(BufWriter::new(file), entries, mode)
}
