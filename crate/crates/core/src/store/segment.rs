//! Segment files (`.twseg`).
//!
//! Layout: header (`"TWSG"`, `u16` version, `u8` table id), then frames,
//! then a sparse frame index, then a fixed-size footer. A frame holds about
//! 1 MiB of concatenated row encodings, deflate-compressed, preceded by
//! `u32` compressed length, `u32` raw length, `u32` row count and the
//! CRC-32 of the raw bytes. Each index entry records the frame's file
//! offset, its first row ordinal, its row count and its first key.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::marker::PhantomData;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::codec::{Key, Reader, Record, TableId};
use crate::error::{Error, Result};

pub const SEGMENT_MAGIC: &[u8; 4] = b"TWSG";
const FOOTER_MAGIC: &[u8; 4] = b"TWSF";
pub const SEGMENT_VERSION: u16 = 1;
pub const FRAME_TARGET_BYTES: usize = 1 << 20;
const HEADER_LEN: u64 = 7;
const FRAME_HEADER_LEN: usize = 16;
const INDEX_ENTRY_LEN: usize = 8 + 8 + 4 + 64;
const FOOTER_LEN: usize = 8 * 3 + 64 * 2 + 1 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameEntry {
    pub offset: u64,
    pub first_row: u64,
    pub rows: u32,
    pub first_key: Key,
}

fn put_key(out: &mut Vec<u8>, k: &Key) {
    for part in k {
        out.extend_from_slice(&part.to_le_bytes());
    }
}

fn read_key(r: &mut Reader<'_>) -> Result<Key> {
    let mut k = [0i128; 4];
    for part in k.iter_mut() {
        *part = i128::from_le_bytes(r.bytes(16)?.try_into().expect("16 bytes"));
    }
    Ok(k)
}

/// Summary of a finished segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentInfo {
    pub path: PathBuf,
    pub rows: u64,
    pub bytes: u64,
    pub min_key: Option<Key>,
    pub max_key: Option<Key>,
}

/// Streams rows into a new segment. The file is written under a temporary
/// name and renamed into place by [`SegmentWriter::finish`].
pub struct SegmentWriter<R: Record> {
    path: PathBuf,
    tmp: PathBuf,
    out: BufWriter<File>,
    sorted: bool,
    frame: Vec<u8>,
    frame_rows: u32,
    frame_first: Key,
    index: Vec<FrameEntry>,
    offset: u64,
    rows: u64,
    min_key: Option<Key>,
    max_key: Option<Key>,
    _row: PhantomData<R>,
}

impl<R: Record> SegmentWriter<R> {
    pub fn create(path: impl AsRef<Path>, sorted: bool) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(Error::at(dir))?;
        }
        let mut tmp = path.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let file = File::create(&tmp).map_err(Error::at(&tmp))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        let mut head = Vec::with_capacity(HEADER_LEN as usize);
        head.extend_from_slice(SEGMENT_MAGIC);
        head.extend_from_slice(&SEGMENT_VERSION.to_le_bytes());
        head.push(R::TABLE as u8);
        out.write_all(&head).map_err(Error::at(&tmp))?;
        Ok(SegmentWriter {
            path,
            tmp,
            out,
            sorted,
            frame: Vec::with_capacity(FRAME_TARGET_BYTES + 4096),
            frame_rows: 0,
            frame_first: [0; 4],
            index: Vec::new(),
            offset: HEADER_LEN,
            rows: 0,
            min_key: None,
            max_key: None,
            _row: PhantomData,
        })
    }

    pub fn push(&mut self, row: &R) -> Result<()> {
        let key = row.key();
        if self.frame_rows == 0 {
            self.frame_first = key;
        }
        if self.sorted {
            if self.min_key.is_none() {
                self.min_key = Some(key);
            }
            self.max_key = Some(key);
        } else {
            self.min_key = Some(self.min_key.map_or(key, |m| m.min(key)));
            self.max_key = Some(self.max_key.map_or(key, |m| m.max(key)));
        }
        row.encode(&mut self.frame);
        self.frame_rows += 1;
        self.rows += 1;
        if self.frame.len() >= FRAME_TARGET_BYTES {
            self.flush_frame()?;
        }
        Ok(())
    }

    fn flush_frame(&mut self) -> Result<()> {
        if self.frame_rows == 0 {
            return Ok(());
        }
        let crc = crc32fast::hash(&self.frame);
        let mut enc = DeflateEncoder::new(Vec::with_capacity(self.frame.len() / 2), Compression::fast());
        enc.write_all(&self.frame)?;
        let compressed = enc.finish()?;
        let mut head = [0u8; FRAME_HEADER_LEN];
        head[0..4].copy_from_slice(&(compressed.len() as u32).to_le_bytes());
        head[4..8].copy_from_slice(&(self.frame.len() as u32).to_le_bytes());
        head[8..12].copy_from_slice(&self.frame_rows.to_le_bytes());
        head[12..16].copy_from_slice(&crc.to_le_bytes());
        self.out.write_all(&head).map_err(Error::at(&self.tmp))?;
        self.out.write_all(&compressed).map_err(Error::at(&self.tmp))?;
        self.index.push(FrameEntry {
            offset: self.offset,
            first_row: self.rows - self.frame_rows as u64,
            rows: self.frame_rows,
            first_key: self.frame_first,
        });
        self.offset += (FRAME_HEADER_LEN + compressed.len()) as u64;
        self.frame.clear();
        self.frame_rows = 0;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<SegmentInfo> {
        self.flush_frame()?;
        let index_offset = self.offset;
        let mut tail = Vec::with_capacity(self.index.len() * INDEX_ENTRY_LEN + FOOTER_LEN);
        for e in &self.index {
            tail.extend_from_slice(&e.offset.to_le_bytes());
            tail.extend_from_slice(&e.first_row.to_le_bytes());
            tail.extend_from_slice(&e.rows.to_le_bytes());
            put_key(&mut tail, &e.first_key);
        }
        tail.extend_from_slice(&index_offset.to_le_bytes());
        tail.extend_from_slice(&self.rows.to_le_bytes());
        tail.extend_from_slice(&(self.index.len() as u64).to_le_bytes());
        put_key(&mut tail, &self.min_key.unwrap_or_default());
        put_key(&mut tail, &self.max_key.unwrap_or_default());
        tail.push(self.sorted as u8);
        tail.extend_from_slice(FOOTER_MAGIC);
        self.out.write_all(&tail).map_err(Error::at(&self.tmp))?;
        let file = self.out.into_inner().map_err(|e| Error::IoAt { path: self.tmp.clone(), source: e.into_error() })?;
        file.sync_all().map_err(Error::at(&self.tmp))?;
        let bytes = file.metadata().map_err(Error::at(&self.tmp))?.len();
        drop(file);
        fs::rename(&self.tmp, &self.path).map_err(Error::at(&self.path))?;
        Ok(SegmentInfo { path: self.path, rows: self.rows, bytes, min_key: self.min_key, max_key: self.max_key })
    }
}

/// Write a whole slice of rows as one segment.
pub fn write_segment<R: Record>(path: impl AsRef<Path>, rows: &[R], sorted: bool) -> Result<SegmentInfo> {
    let mut w = SegmentWriter::<R>::create(path, sorted)?;
    for r in rows {
        w.push(r)?;
    }
    w.finish()
}

#[derive(Debug)]
struct SegmentInner {
    path: PathBuf,
    file: File,
    table: TableId,
    sorted: bool,
    rows: u64,
    bytes: u64,
    min_key: Option<Key>,
    max_key: Option<Key>,
    frames: Vec<FrameEntry>,
}

/// An open, immutable segment. Cloning shares the file handle, so a reader
/// keeps working after the file is unlinked.
#[derive(Clone, Debug)]
pub struct Segment(Arc<SegmentInner>);

impl Segment {
    pub fn open(path: impl AsRef<Path>) -> Result<Segment> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(Error::at(&path))?;
        let bytes = file.metadata().map_err(Error::at(&path))?.len();
        let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));
        if bytes < HEADER_LEN + FOOTER_LEN as u64 {
            return Err(bad("too short for a segment"));
        }
        let mut head = [0u8; HEADER_LEN as usize];
        file.read_exact_at(&mut head, 0).map_err(Error::at(&path))?;
        if &head[..4] != SEGMENT_MAGIC {
            return Err(bad("bad magic, expected TWSG"));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != SEGMENT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let table = TableId::from_u8(head[6]).ok_or_else(|| bad("unknown table id"))?;
        let mut foot = vec![0u8; FOOTER_LEN];
        file.read_exact_at(&mut foot, bytes - FOOTER_LEN as u64).map_err(Error::at(&path))?;
        if &foot[FOOTER_LEN - 4..] != FOOTER_MAGIC {
            return Err(bad("missing footer (incomplete write?)"));
        }
        let mut r = Reader::new(&foot);
        let index_offset = r.u64()?;
        let rows = r.u64()?;
        let frame_count = r.u64()?;
        let min_key = read_key(&mut r)?;
        let max_key = read_key(&mut r)?;
        let sorted = r.bool()?;
        let index_len = frame_count as usize * INDEX_ENTRY_LEN;
        if index_offset + index_len as u64 + FOOTER_LEN as u64 != bytes {
            return Err(bad("index does not match footer"));
        }
        let mut idx = vec![0u8; index_len];
        file.read_exact_at(&mut idx, index_offset).map_err(Error::at(&path))?;
        let mut r = Reader::new(&idx);
        let mut frames = Vec::with_capacity(frame_count as usize);
        for _ in 0..frame_count {
            frames.push(FrameEntry { offset: r.u64()?, first_row: r.u64()?, rows: r.u32()?, first_key: read_key(&mut r)? });
        }
        let (min_key, max_key) = if rows == 0 { (None, None) } else { (Some(min_key), Some(max_key)) };
        Ok(Segment(Arc::new(SegmentInner { path, file, table, sorted, rows, bytes, min_key, max_key, frames })))
    }

    pub fn path(&self) -> &Path {
        &self.0.path
    }

    pub fn table(&self) -> TableId {
        self.0.table
    }

    pub fn sorted(&self) -> bool {
        self.0.sorted
    }

    pub fn rows(&self) -> u64 {
        self.0.rows
    }

    pub fn bytes(&self) -> u64 {
        self.0.bytes
    }

    pub fn min_key(&self) -> Option<Key> {
        self.0.min_key
    }

    pub fn max_key(&self) -> Option<Key> {
        self.0.max_key
    }

    pub fn frames(&self) -> &[FrameEntry] {
        &self.0.frames
    }

    fn check_table<R: Record>(&self) -> Result<()> {
        if R::TABLE != self.0.table {
            return Err(Error::Format(format!(
                "{}: holds {} rows, read as {}",
                self.0.path.display(),
                self.0.table,
                R::TABLE
            )));
        }
        Ok(())
    }

    /// Decompressed bytes of frame `i`, verified against its checksum.
    pub fn frame_bytes(&self, i: usize) -> Result<Vec<u8>> {
        let e = &self.0.frames[i];
        let path = &self.0.path;
        let mut head = [0u8; FRAME_HEADER_LEN];
        self.0.file.read_exact_at(&mut head, e.offset).map_err(Error::at(path))?;
        let clen = u32::from_le_bytes(head[0..4].try_into().expect("4")) as usize;
        let rlen = u32::from_le_bytes(head[4..8].try_into().expect("4")) as usize;
        let rows = u32::from_le_bytes(head[8..12].try_into().expect("4"));
        let crc = u32::from_le_bytes(head[12..16].try_into().expect("4"));
        if rows != e.rows {
            return Err(Error::Format(format!("{}: frame {i} row count mismatch", path.display())));
        }
        let mut compressed = vec![0u8; clen];
        self.0.file.read_exact_at(&mut compressed, e.offset + FRAME_HEADER_LEN as u64).map_err(Error::at(path))?;
        let mut raw = Vec::with_capacity(rlen);
        DeflateDecoder::new(&compressed[..])
            .read_to_end(&mut raw)
            .map_err(|err| Error::Format(format!("{}: frame {i}: {err}", path.display())))?;
        if raw.len() != rlen || crc32fast::hash(&raw) != crc {
            return Err(Error::Format(format!("{}: frame {i} checksum mismatch", path.display())));
        }
        Ok(raw)
    }

    /// All rows of frame `i`.
    pub fn frame_rows<R: Record>(&self, i: usize) -> Result<Vec<R>> {
        self.check_table::<R>()?;
        let raw = self.frame_bytes(i)?;
        let mut r = Reader::new(&raw);
        let mut out = Vec::with_capacity(self.0.frames[i].rows as usize);
        for _ in 0..self.0.frames[i].rows {
            out.push(R::decode(&mut r)?);
        }
        if !r.is_empty() {
            return Err(Error::Format(format!("{}: trailing bytes in frame {i}", self.0.path.display())));
        }
        Ok(out)
    }

    /// Every row, in file order.
    pub fn iter<R: Record>(&self) -> SegmentIter<R> {
        SegmentIter::new(self.clone(), 0, None)
    }

    /// Rows with key ≥ `lo` (sorted segments only), in order.
    pub fn iter_from<R: Record>(&self, lo: &Key) -> SegmentIter<R> {
        let start = self.0.frames.partition_point(|f| f.first_key < *lo).saturating_sub(1);
        SegmentIter::new(self.clone(), start, Some(*lo))
    }

    pub fn read_all<R: Record>(&self) -> Result<Vec<R>> {
        self.iter().collect()
    }

    /// Row by ordinal within this segment.
    pub fn row_at<R: Record>(&self, ordinal: u64) -> Result<R> {
        let i = self.0.frames.partition_point(|f| f.first_row <= ordinal);
        if i == 0 || ordinal >= self.0.rows {
            return Err(Error::Invalid(format!("row {ordinal} out of range in {}", self.0.path.display())));
        }
        let rows = self.frame_rows::<R>(i - 1)?;
        Ok(rows[(ordinal - self.0.frames[i - 1].first_row) as usize].clone())
    }
}

/// Streaming row iterator over a segment.
pub struct SegmentIter<R: Record> {
    seg: Segment,
    next_frame: usize,
    rows: std::vec::IntoIter<R>,
    skip_below: Option<Key>,
    failed: bool,
}

impl<R: Record> SegmentIter<R> {
    fn new(seg: Segment, start: usize, skip_below: Option<Key>) -> Self {
        SegmentIter { seg, next_frame: start, rows: Vec::new().into_iter(), skip_below, failed: false }
    }
}

impl<R: Record> Iterator for SegmentIter<R> {
    type Item = Result<R>;

    fn next(&mut self) -> Option<Result<R>> {
        loop {
            if self.failed {
                return None;
            }
            if let Some(row) = self.rows.next() {
                if let Some(lo) = &self.skip_below {
                    if row.key() < *lo {
                        continue;
                    }
                    self.skip_below = None;
                }
                return Some(Ok(row));
            }
            if self.next_frame >= self.seg.frames().len() {
                return None;
            }
            match self.seg.frame_rows::<R>(self.next_frame) {
                Ok(rows) => {
                    self.rows = rows.into_iter();
                    self.next_frame += 1;
                }
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MentionEdge;

    fn edge(i: u64) -> MentionEdge {
        MentionEdge { run_id: 1, tweet_id: i, source_user_id: i / 3 + 1, mentioned_user_id: 7, created_at: i as i64 }
    }

    #[test]
    fn round_trip_many_frames() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows: Vec<MentionEdge> = (1..=80_000).map(edge).collect();
        rows.sort_by_key(|r| r.key());
        let info = write_segment(dir.path().join("a.twseg"), &rows, true).unwrap();
        assert_eq!(info.rows, rows.len() as u64);
        let seg = Segment::open(&info.path).unwrap();
        assert!(seg.frames().len() > 1);
        assert_eq!(seg.read_all::<MentionEdge>().unwrap(), rows);
        assert_eq!(seg.min_key(), Some(rows[0].key()));
        assert_eq!(seg.max_key(), Some(rows.last().unwrap().key()));
        let lo = rows[50_000].key();
        let tail: Vec<MentionEdge> = seg.iter_from(&lo).collect::<Result<_>>().unwrap();
        assert_eq!(tail, rows[50_000..]);
        assert_eq!(seg.row_at::<MentionEdge>(61_234).unwrap(), rows[61_234]);
        assert!(seg.row_at::<MentionEdge>(80_000).is_err());
    }

    #[test]
    fn empty_segment() {
        let dir = tempfile::tempdir().unwrap();
        let info = write_segment::<MentionEdge>(dir.path().join("e.twseg"), &[], true).unwrap();
        let seg = Segment::open(&info.path).unwrap();
        assert_eq!(seg.rows(), 0);
        assert!(seg.min_key().is_none());
        assert!(seg.read_all::<MentionEdge>().unwrap().is_empty());
    }

    #[test]
    fn corruption_detected() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<MentionEdge> = (1..=100).map(edge).collect();
        let info = write_segment(dir.path().join("c.twseg"), &rows, false).unwrap();
        let mut bytes = fs::read(&info.path).unwrap();
        bytes[HEADER_LEN as usize + FRAME_HEADER_LEN + 5] ^= 0xff;
        fs::write(&info.path, &bytes).unwrap();
        let seg = Segment::open(&info.path).unwrap();
        assert!(seg.read_all::<MentionEdge>().is_err());
        fs::write(&info.path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(Segment::open(&info.path).is_err());
    }

    #[test]
    fn wrong_row_type_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let info = write_segment(dir.path().join("m.twseg"), &[edge(1)], true).unwrap();
        let seg = Segment::open(&info.path).unwrap();
        assert!(seg.read_all::<crate::model::RetweetEdge>().is_err());
    }
}
