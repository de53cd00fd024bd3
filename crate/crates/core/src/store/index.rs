//! Secondary index files (`.twix`): fixed-width entries sorted by the
//! index key, behind a `"TWIX"` magic, a kind byte and a `u64` count.
//!
//! Entries point at base rows through a locator: the segment's position in
//! the manifest list in the high 24 bits and the row ordinal in the low 40.

use std::cmp::Ordering;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::Path;

use crate::codec::Reader;
use crate::error::{Error, Result};
use crate::store::manifest::IndexKind;

pub const INDEX_MAGIC: &[u8; 4] = b"TWIX";
const HEADER_LEN: usize = 4 + 1 + 8;
const ROW_BITS: u32 = 40;

pub fn locator(segment: usize, row: u64) -> u64 {
    ((segment as u64) << ROW_BITS) | row
}

pub fn split_locator(loc: u64) -> (usize, u64) {
    ((loc >> ROW_BITS) as usize, loc & ((1 << ROW_BITS) - 1))
}

pub trait IndexEntry: Copy + Send + Sync + 'static {
    const KIND: IndexKind;
    const SIZE: usize;
    fn encode(&self, out: &mut Vec<u8>);
    fn decode(r: &mut Reader<'_>) -> Result<Self>;
    fn index_cmp(&self, other: &Self) -> Ordering;
}

/// tweet rows by author and time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ByUserEntry {
    pub user_id: u64,
    pub created_at: i64,
    pub run_id: u32,
    pub tweet_id: u64,
    pub locator: u64,
}

impl IndexEntry for ByUserEntry {
    const KIND: IndexKind = IndexKind::TweetByUser;
    const SIZE: usize = 8 + 8 + 4 + 8 + 8;

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.user_id.to_le_bytes());
        out.extend_from_slice(&self.created_at.to_le_bytes());
        out.extend_from_slice(&self.run_id.to_le_bytes());
        out.extend_from_slice(&self.tweet_id.to_le_bytes());
        out.extend_from_slice(&self.locator.to_le_bytes());
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(ByUserEntry { user_id: r.u64()?, created_at: r.i64()?, run_id: r.u32()?, tweet_id: r.u64()?, locator: r.u64()? })
    }

    fn index_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
}

/// Geo-tagged tweet rows by run and trixel, covering the coordinates and
/// timestamp so circle queries never touch the base table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ByHtmEntry {
    pub run_id: u32,
    pub htm_id: u64,
    pub tweet_id: u64,
    pub locator: u64,
    pub user_id: u64,
    pub created_at: i64,
    pub lon: f64,
    pub lat: f64,
}

impl IndexEntry for ByHtmEntry {
    const KIND: IndexKind = IndexKind::TweetByHtm;
    const SIZE: usize = 4 + 8 * 7;

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.run_id.to_le_bytes());
        out.extend_from_slice(&self.htm_id.to_le_bytes());
        out.extend_from_slice(&self.tweet_id.to_le_bytes());
        out.extend_from_slice(&self.locator.to_le_bytes());
        out.extend_from_slice(&self.user_id.to_le_bytes());
        out.extend_from_slice(&self.created_at.to_le_bytes());
        out.extend_from_slice(&self.lon.to_le_bytes());
        out.extend_from_slice(&self.lat.to_le_bytes());
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(ByHtmEntry {
            run_id: r.u32()?,
            htm_id: r.u64()?,
            tweet_id: r.u64()?,
            locator: r.u64()?,
            user_id: r.u64()?,
            created_at: r.i64()?,
            lon: r.f64()?,
            lat: r.f64()?,
        })
    }

    fn index_cmp(&self, other: &Self) -> Ordering {
        (self.run_id, self.htm_id, self.tweet_id).cmp(&(other.run_id, other.htm_id, other.tweet_id))
    }
}

/// Mention edges ordered by target first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MentionInvEntry {
    pub run_id: u32,
    pub mentioned_user_id: u64,
    pub source_user_id: u64,
    pub tweet_id: u64,
    pub created_at: i64,
}

impl IndexEntry for MentionInvEntry {
    const KIND: IndexKind = IndexKind::MentionInverse;
    const SIZE: usize = 4 + 8 * 4;

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.run_id.to_le_bytes());
        out.extend_from_slice(&self.mentioned_user_id.to_le_bytes());
        out.extend_from_slice(&self.source_user_id.to_le_bytes());
        out.extend_from_slice(&self.tweet_id.to_le_bytes());
        out.extend_from_slice(&self.created_at.to_le_bytes());
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(MentionInvEntry {
            run_id: r.u32()?,
            mentioned_user_id: r.u64()?,
            source_user_id: r.u64()?,
            tweet_id: r.u64()?,
            created_at: r.i64()?,
        })
    }

    fn index_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
}

/// Retweet edges ordered by retweeter first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RetweetInvEntry {
    pub run_id: u32,
    pub source_user_id: u64,
    pub original_user_id: u64,
    pub tweet_id: u64,
    pub original_tweet_id: u64,
    pub created_at: i64,
}

impl IndexEntry for RetweetInvEntry {
    const KIND: IndexKind = IndexKind::RetweetInverse;
    const SIZE: usize = 4 + 8 * 5;

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.run_id.to_le_bytes());
        out.extend_from_slice(&self.source_user_id.to_le_bytes());
        out.extend_from_slice(&self.original_user_id.to_le_bytes());
        out.extend_from_slice(&self.tweet_id.to_le_bytes());
        out.extend_from_slice(&self.original_tweet_id.to_le_bytes());
        out.extend_from_slice(&self.created_at.to_le_bytes());
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(RetweetInvEntry {
            run_id: r.u32()?,
            source_user_id: r.u64()?,
            original_user_id: r.u64()?,
            tweet_id: r.u64()?,
            original_tweet_id: r.u64()?,
            created_at: r.i64()?,
        })
    }

    fn index_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
}

fn kind_byte(kind: IndexKind) -> u8 {
    IndexKind::ALL.iter().position(|k| *k == kind).expect("listed kind") as u8
}

/// Sort `entries` and write them to `path` (via a temporary file).
pub fn write_index<E: IndexEntry>(path: &Path, entries: &mut [E]) -> Result<u64> {
    entries.sort_unstable_by(|a, b| a.index_cmp(b));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(Error::at(&tmp))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let mut buf = Vec::with_capacity(HEADER_LEN.max(E::SIZE * 1024));
    buf.extend_from_slice(INDEX_MAGIC);
    buf.push(kind_byte(E::KIND));
    buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for chunk in entries.chunks(1024) {
        for e in chunk {
            e.encode(&mut buf);
        }
        w.write_all(&buf).map_err(Error::at(&tmp))?;
        buf.clear();
    }
    w.write_all(&buf).map_err(Error::at(&tmp))?;
    let file = w.into_inner().map_err(|e| Error::IoAt { path: tmp.clone(), source: e.into_error() })?;
    file.sync_all().map_err(Error::at(&tmp))?;
    fs::rename(&tmp, path).map_err(Error::at(path))?;
    Ok(entries.len() as u64)
}

/// Read every entry of an open index file.
pub fn read_index<E: IndexEntry>(file: &File, path: &Path) -> Result<Vec<E>> {
    let len = file.metadata().map_err(Error::at(path))?.len() as usize;
    let mut buf = vec![0u8; len];
    file.read_exact_at(&mut buf, 0).map_err(Error::at(path))?;
    if len < HEADER_LEN || &buf[..4] != INDEX_MAGIC {
        return Err(Error::Format(format!("{}: bad magic, expected TWIX", path.display())));
    }
    if buf[4] != kind_byte(E::KIND) {
        return Err(Error::Format(format!("{}: not a {} index", path.display(), E::KIND.name())));
    }
    let count = u64::from_le_bytes(buf[5..13].try_into().expect("8")) as usize;
    if len != HEADER_LEN + count * E::SIZE {
        return Err(Error::Format(format!("{}: size does not match entry count", path.display())));
    }
    let mut r = Reader::new(&buf[HEADER_LEN..]);
    (0..count).map(|_| E::decode(&mut r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locator_packing() {
        assert_eq!(split_locator(locator(3, 12345)), (3, 12345));
        assert_eq!(split_locator(locator(0, (1 << 40) - 1)), (0, (1 << 40) - 1));
    }

    #[test]
    fn index_round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.twix");
        let mut entries: Vec<ByUserEntry> = (0..1000u64)
            .rev()
            .map(|i| ByUserEntry { user_id: i % 7, created_at: i as i64, run_id: 1, tweet_id: i, locator: i })
            .collect();
        write_index(&path, &mut entries).unwrap();
        let f = File::open(&path).unwrap();
        let back: Vec<ByUserEntry> = read_index(&f, &path).unwrap();
        assert!(back.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(back.len(), 1000);
        assert!(read_index::<MentionInvEntry>(&f, &path).is_err());
    }
}
