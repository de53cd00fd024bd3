//! Little-endian field codecs and the `TWBL` bulk-load file format.
//!
//! A bulk file is `"TWBL"`, `u16` version (1), `u8` table id, `u64` row
//! count, then exactly that many rows and nothing else. Row fields are
//! fixed-width little-endian integers, `i64` epoch seconds for timestamps,
//! `u32` length-prefixed UTF-8 for strings, a `0`/`1` presence byte before
//! optional values, IEEE-754 binary64 for coordinates and one byte per bool.

use std::cmp::Ordering;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const BULK_MAGIC: &[u8; 4] = b"TWBL";
pub const BULK_VERSION: u16 = 1;
pub const BULK_HEADER_LEN: usize = 4 + 2 + 1 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TableId {
    Tweet = 1,
    UserSnapshot = 2,
    Mention = 3,
    Retweet = 4,
    ClusterSummary = 5,
    User = 6,
    UserUpdate = 7,
}

impl TableId {
    pub const ALL: [TableId; 7] = [
        TableId::Tweet,
        TableId::UserSnapshot,
        TableId::Mention,
        TableId::Retweet,
        TableId::ClusterSummary,
        TableId::User,
        TableId::UserUpdate,
    ];

    pub fn from_u8(v: u8) -> Option<TableId> {
        TableId::ALL.into_iter().find(|t| *t as u8 == v)
    }

    pub fn name(self) -> &'static str {
        match self {
            TableId::Tweet => "tweet",
            TableId::UserSnapshot => "user_snapshot",
            TableId::Mention => "mention",
            TableId::Retweet => "retweet",
            TableId::ClusterSummary => "cluster_summary",
            TableId::User => "user",
            TableId::UserUpdate => "user_update",
        }
    }

    pub fn from_name(name: &str) -> Result<TableId> {
        TableId::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    /// Tables that arrive through bulk files. `user` and `user_update` are
    /// derived during merge.
    pub fn is_loadable(self) -> bool {
        !matches!(self, TableId::User | TableId::UserUpdate)
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Clustered key, zero-padded to four integer parts.
pub type Key = [i128; 4];

/// Compare the leading `prefix.len()` parts of `key` against `prefix`.
pub fn prefix_cmp(key: &Key, prefix: &[i128]) -> Ordering {
    key[..prefix.len()].cmp(prefix)
}

/// A row type stored in a warehouse table.
pub trait Record: Clone + Send + Sync + Sized + 'static {
    const TABLE: TableId;

    fn key(&self) -> Key;

    fn encode(&self, out: &mut Vec<u8>);

    fn decode(r: &mut Reader<'_>) -> Result<Self>;

    /// Append the canonical TSV line (without the trailing newline).
    fn write_tsv(&self, out: &mut String);

    /// Secondary ordering among rows sharing a clustered key. Rows that
    /// compare equal here as well are duplicates.
    fn tie_cmp(&self, _other: &Self) -> Ordering {
        Ordering::Equal
    }

    /// Pick the surviving row among duplicates. Must be commutative so that
    /// the outcome never depends on arrival order.
    fn resolve(a: Self, b: Self) -> Self {
        let (mut ea, mut eb) = (Vec::new(), Vec::new());
        a.encode(&mut ea);
        b.encode(&mut eb);
        if eb < ea {
            b
        } else {
            a
        }
    }

    fn row_cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key()).then_with(|| self.tie_cmp(other))
    }
}

pub fn put_u8(out: &mut Vec<u8>, v: u8) {
    out.push(v);
}
pub fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}
pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}
pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}
pub fn put_i64(out: &mut Vec<u8>, v: i64) {
    out.extend_from_slice(&v.to_le_bytes());
}
pub fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}
pub fn put_bool(out: &mut Vec<u8>, v: bool) {
    out.push(v as u8);
}
pub fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}
pub fn put_opt_u64(out: &mut Vec<u8>, v: Option<u64>) {
    match v {
        Some(v) => {
            out.push(1);
            put_u64(out, v);
        }
        None => out.push(0),
    }
}
pub fn put_opt_f64(out: &mut Vec<u8>, v: Option<f64>) {
    match v {
        Some(v) => {
            out.push(1);
            put_f64(out, v);
        }
        None => out.push(0),
    }
}

/// Cursor over an encoded byte slice.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "truncated record: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.bytes(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array()?))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    pub fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("invalid bool byte {b}"))),
        }
    }
    pub fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.bytes(len)?;
        String::from_utf8(raw.to_vec()).map_err(|e| Error::Format(format!("invalid UTF-8: {e}")))
    }
    fn presence(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("invalid presence flag {b}"))),
        }
    }
    pub fn opt_u64(&mut self) -> Result<Option<u64>> {
        Ok(if self.presence()? { Some(self.u64()?) } else { None })
    }
    pub fn opt_f64(&mut self) -> Result<Option<f64>> {
        Ok(if self.presence()? { Some(self.f64()?) } else { None })
    }
}

/// Write rows of one table to a TWBL file. The row count in the header is
/// patched when the writer is finished.
pub struct BulkWriter {
    path: PathBuf,
    out: BufWriter<File>,
    rows: u64,
    scratch: Vec<u8>,
}

impl BulkWriter {
    pub fn create(path: impl AsRef<Path>, table: TableId) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(Error::at(&path))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        let mut header = Vec::with_capacity(BULK_HEADER_LEN);
        header.extend_from_slice(BULK_MAGIC);
        put_u16(&mut header, BULK_VERSION);
        put_u8(&mut header, table as u8);
        put_u64(&mut header, 0);
        out.write_all(&header).map_err(Error::at(&path))?;
        Ok(BulkWriter { path, out, rows: 0, scratch: Vec::new() })
    }

    pub fn push<R: Record>(&mut self, row: &R) -> Result<()> {
        self.scratch.clear();
        row.encode(&mut self.scratch);
        self.out.write_all(&self.scratch).map_err(Error::at(&self.path))?;
        self.rows += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<u64> {
        let path = self.path;
        let mut file = self.out.into_inner().map_err(|e| Error::IoAt {
            path: path.clone(),
            source: e.into_error(),
        })?;
        file.seek(SeekFrom::Start(7)).map_err(Error::at(&path))?;
        file.write_all(&self.rows.to_le_bytes()).map_err(Error::at(&path))?;
        file.sync_all().map_err(Error::at(&path))?;
        Ok(self.rows)
    }
}

/// Write a whole slice of rows as one TWBL file.
pub fn write_bulk_file<R: Record>(path: impl AsRef<Path>, rows: &[R]) -> Result<u64> {
    let mut w = BulkWriter::create(path, R::TABLE)?;
    for row in rows {
        w.push(row)?;
    }
    w.finish()
}

/// Parse a TWBL header, returning the table and declared row count.
pub fn read_bulk_header(buf: &[u8]) -> Result<(TableId, u64)> {
    let mut r = Reader::new(buf);
    let magic = r.bytes(4).map_err(|_| Error::Format("file shorter than TWBL header".into()))?;
    if magic != BULK_MAGIC {
        return Err(Error::Format("bad magic, expected TWBL".into()));
    }
    let version = r.u16()?;
    if version != BULK_VERSION {
        return Err(Error::Format(format!("unsupported TWBL version {version}")));
    }
    let raw = r.u8()?;
    let table = TableId::from_u8(raw).ok_or_else(|| Error::Format(format!("unknown table id {raw}")))?;
    let rows = r.u64()?;
    Ok((table, rows))
}

/// Decode every row of a TWBL buffer, verifying the table id, the declared
/// row count and that no bytes trail the last row.
pub fn decode_bulk<R: Record>(buf: &[u8]) -> Result<Vec<R>> {
    let (table, rows) = read_bulk_header(buf)?;
    if table != R::TABLE {
        return Err(Error::Format(format!("table mismatch: file holds {table}, expected {}", R::TABLE)));
    }
    let mut r = Reader::new(&buf[BULK_HEADER_LEN..]);
    let mut out = Vec::with_capacity(rows.min(1 << 24) as usize);
    for i in 0..rows {
        let row = R::decode(&mut r).map_err(|e| Error::Format(format!("row {i}: {e}")))?;
        out.push(row);
    }
    if !r.is_empty() {
        return Err(Error::Format(format!("{} bytes trail the declared {rows} rows", r.remaining())));
    }
    Ok(out)
}

pub fn read_bulk_file<R: Record>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(Error::at(path))?;
    decode_bulk(&buf).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Escape a string for a TSV field: backslash, tab, newline and carriage return.
pub fn tsv_escape(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

pub(crate) fn tsv_opt<T: fmt::Display>(v: &Option<T>, out: &mut String) {
    use fmt::Write;
    match v {
        Some(v) => {
            let _ = write!(out, "{v}");
        }
        None => out.push_str("\\N"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_ids_round_trip() {
        for t in TableId::ALL {
            assert_eq!(TableId::from_u8(t as u8), Some(t));
            assert_eq!(TableId::from_name(t.name()).unwrap(), t);
        }
        assert!(TableId::from_u8(0).is_none());
        assert!(TableId::from_name("follower").is_err());
    }

    #[test]
    fn reader_rejects_truncation_and_bad_flags() {
        let mut buf = Vec::new();
        put_str(&mut buf, "héllo");
        let mut r = Reader::new(&buf[..4]);
        assert!(r.string().is_err());
        let mut r = Reader::new(&[2u8, 0, 0]);
        assert!(r.opt_u64().is_err());
        let mut r = Reader::new(&[3u8]);
        assert!(r.bool().is_err());
    }

    #[test]
    fn header_checks() {
        assert!(read_bulk_header(b"TWB").is_err());
        assert!(read_bulk_header(b"XXXX\x01\x00\x01\0\0\0\0\0\0\0\0").is_err());
        assert!(read_bulk_header(b"TWBL\x02\x00\x01\0\0\0\0\0\0\0\0").is_err());
        assert!(read_bulk_header(b"TWBL\x01\x00\x09\0\0\0\0\0\0\0\0").is_err());
        let (t, n) = read_bulk_header(b"TWBL\x01\x00\x03\x05\0\0\0\0\0\0\0").unwrap();
        assert_eq!((t, n), (TableId::Mention, 5));
    }

    #[test]
    fn tsv_escaping() {
        let mut s = String::new();
        tsv_escape("a\tb\nc\\d\re", &mut s);
        assert_eq!(s, "a\\tb\\nc\\\\d\\re");
    }
}
