//! Newline-delimited JSON status streams: chunking, parsing into row
//! bundles, and writing bulk-load files.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::Deserialize;

use crate::codec::{BulkWriter, Record, TableId};
use crate::error::{Error, Result};
use crate::htm::{latlon_to_htm, MAX_LEVEL};
use crate::langid::Identifier;
use crate::model::{Lang, MentionEdge, RetweetEdge, TweetRow, UserSnapshot};

pub const MAX_TEXT_CHARS: usize = 140;
pub const DEFAULT_CHUNK_DOCS: usize = 100_000;
const LEGACY_FORMAT: &str = "%a %b %d %H:%M:%S %z %Y";

/// Rows parsed from one or more documents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StatusBundle {
    pub tweets: Vec<TweetRow>,
    pub users: Vec<UserSnapshot>,
    pub mentions: Vec<MentionEdge>,
    pub retweets: Vec<RetweetEdge>,
    /// Byte offset of the rejected document and the reason.
    pub rejects: Vec<(u64, String)>,
    /// Documents seen, accepted or not.
    pub documents: u64,
}

impl StatusBundle {
    pub fn accepted(&self) -> u64 {
        self.documents - self.rejects.len() as u64
    }

    pub fn append(&mut self, mut other: StatusBundle) {
        self.tweets.append(&mut other.tweets);
        self.users.append(&mut other.users);
        self.mentions.append(&mut other.mentions);
        self.retweets.append(&mut other.retweets);
        self.rejects.append(&mut other.rejects);
        self.documents += other.documents;
    }

    pub fn is_empty(&self) -> bool {
        self.documents == 0
    }
}

/// Parse a timestamp in the legacy stream format or ISO-8601.
pub fn parse_created_at(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_str(s, LEGACY_FORMAT) {
        return Ok(t.timestamp());
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.timestamp());
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Ok(t.and_utc().timestamp());
    }
    Err(Error::Timestamp(s.to_string()))
}

/// Format epoch seconds in the legacy stream format.
pub fn format_created_at(t: i64) -> String {
    DateTime::from_timestamp(t, 0)
        .unwrap_or_default()
        .format("%a %b %d %H:%M:%S +0000 %Y")
        .to_string()
}

#[derive(Deserialize)]
struct RawUser {
    id: Option<u64>,
    screen_name: Option<String>,
    location: Option<String>,
    created_at: Option<String>,
    statuses_count: Option<i64>,
    friends_count: Option<i64>,
    followers_count: Option<i64>,
}

#[derive(Deserialize)]
struct RawPoint {
    coordinates: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMention {
    id: Option<u64>,
}

#[derive(Deserialize)]
struct RawEntities {
    #[serde(default)]
    user_mentions: Vec<RawMention>,
}

#[derive(Deserialize)]
struct RawStatus {
    id: Option<u64>,
    text: Option<String>,
    created_at: Option<String>,
    user: Option<RawUser>,
    coordinates: Option<RawPoint>,
    in_reply_to_status_id: Option<u64>,
    in_reply_to_user_id: Option<u64>,
    retweeted_status: Option<Box<RawStatus>>,
    entities: Option<RawEntities>,
}

/// Parses documents for one collection run.
pub struct StatusParser<'a> {
    run_id: u32,
    langid: &'a dyn Identifier,
}

impl<'a> StatusParser<'a> {
    pub fn new(run_id: u32, langid: &'a dyn Identifier) -> Self {
        StatusParser { run_id, langid }
    }

    /// Parse one document; a rejected document yields the reason.
    pub fn parse_status(&self, doc: &str) -> std::result::Result<StatusBundle, String> {
        let raw: RawStatus = serde_json::from_str(doc).map_err(|e| format!("malformed JSON: {e}"))?;
        if raw.text.is_none() {
            return Err("non-status".into());
        }
        let mut out = StatusBundle { documents: 1, ..StatusBundle::default() };
        let (tweet, user) = self.convert(&raw, false)?;
        if let Some(entities) = &raw.entities {
            for m in &entities.user_mentions {
                let mentioned = m.id.filter(|&id| id > 0).ok_or("mention without user id")?;
                out.mentions.push(MentionEdge {
                    run_id: self.run_id,
                    tweet_id: tweet.tweet_id,
                    source_user_id: tweet.user_id,
                    mentioned_user_id: mentioned,
                    created_at: tweet.created_at,
                });
            }
        }
        if let Some(inner) = &raw.retweeted_status {
            if inner.text.is_none() {
                return Err("retweeted_status: non-status".into());
            }
            let (orig, orig_user) = self.convert(inner, true).map_err(|e| format!("retweeted_status: {e}"))?;
            if orig.tweet_id == tweet.tweet_id {
                return Err("retweet of itself".into());
            }
            out.retweets.push(RetweetEdge {
                run_id: self.run_id,
                tweet_id: tweet.tweet_id,
                original_tweet_id: orig.tweet_id,
                source_user_id: tweet.user_id,
                original_user_id: orig.user_id,
                created_at: tweet.created_at,
            });
            out.tweets.push(tweet);
            out.users.push(user);
            out.tweets.push(orig);
            out.users.push(orig_user);
        } else {
            out.tweets.push(tweet);
            out.users.push(user);
        }
        Ok(out)
    }

    fn convert(&self, raw: &RawStatus, embedded: bool) -> std::result::Result<(TweetRow, UserSnapshot), String> {
        let tweet_id = raw.id.filter(|&id| id > 0).ok_or("missing id")?;
        let text = raw.text.as_deref().ok_or("missing text")?;
        let created_at = parse_created_at(raw.created_at.as_deref().ok_or("missing created_at")?)
            .map_err(|e| e.to_string())?;
        let user = raw.user.as_ref().ok_or("missing user.id")?;
        let user_id = user.id.filter(|&id| id > 0).ok_or("missing user.id")?;
        if text.chars().count() > MAX_TEXT_CHARS {
            return Err(format!("text longer than {MAX_TEXT_CHARS} characters"));
        }
        let (lon, lat, htm_id) = match &raw.coordinates {
            None => (None, None, None),
            Some(p) => {
                let [mut lon, lat] = p.coordinates[..] else {
                    return Err("coordinates must be [lon, lat]".into());
                };
                if lon == 180.0 {
                    lon = -180.0;
                }
                if !(-180.0..180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
                    return Err(format!("coordinates out of range: [{lon}, {lat}]"));
                }
                let id = latlon_to_htm(lon, lat, MAX_LEVEL).map_err(|e| e.to_string())?;
                (Some(lon), Some(lat), Some(id.raw()))
            }
        };
        let lang = self.langid.identify(text).map(|(l, _)| l).unwrap_or(Lang::UND);
        let count = |v: Option<i64>, name: &str| match v {
            Some(n) if n < 0 => Err(format!("negative user.{name}")),
            Some(n) => Ok(n as u64),
            None => Ok(0),
        };
        let account_created_at = match &user.created_at {
            Some(s) => parse_created_at(s).map_err(|e| format!("user.created_at: {e}"))?,
            None => 0,
        };
        if created_at < account_created_at {
            log::debug!("user {user_id} observed at {created_at} before account creation {account_created_at}");
        }
        let snapshot = UserSnapshot {
            user_id,
            screen_name: user.screen_name.clone().unwrap_or_default(),
            location: user.location.clone().unwrap_or_default(),
            account_created_at,
            statuses_count: count(user.statuses_count, "statuses_count")?,
            friends_count: count(user.friends_count, "friends_count")?,
            followers_count: count(user.followers_count, "followers_count")?,
            observed_at: created_at,
        };
        let tweet = TweetRow {
            tweet_id,
            run_id: self.run_id,
            created_at,
            user_id,
            text: text.to_string(),
            in_reply_to_tweet_id: raw.in_reply_to_status_id.filter(|&id| id > 0),
            in_reply_to_user_id: raw.in_reply_to_user_id.filter(|&id| id > 0),
            lon,
            lat,
            htm_id,
            lang,
            embedded,
        };
        Ok((tweet, snapshot))
    }

    /// Parse every non-blank line of a chunk. `base_offset` is the chunk's
    /// position in the whole stream, so reject offsets are stream-absolute.
    pub fn parse_chunk(&self, bytes: &[u8], base_offset: u64) -> StatusBundle {
        let mut out = StatusBundle::default();
        let mut offset = 0usize;
        for line in bytes.split_inclusive(|&b| b == b'\n') {
            let at = base_offset + offset as u64;
            offset += line.len();
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let parsed = std::str::from_utf8(line)
                .map_err(|_| "invalid UTF-8".to_string())
                .and_then(|doc| self.parse_status(doc));
            match parsed {
                Ok(b) => out.append(b),
                Err(reason) => {
                    out.documents += 1;
                    out.rejects.push((at, reason));
                }
            }
        }
        out
    }
}

/// Result of chunking a stream.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitReport {
    pub chunks: Vec<PathBuf>,
    pub documents: u64,
    pub bytes: u64,
    /// The last document had no terminating newline.
    pub truncated_final: bool,
}

struct CountingReader<R> {
    inner: R,
    count: u64,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.count += n as u64;
        Ok(n)
    }
}

/// Copy a newline-delimited stream into chunk files of at most
/// `max_docs_per_chunk` documents each (`chunk-000000.jsonl`, ...). Gzip
/// input is detected by its magic bytes.
pub fn split_stream(input: impl Read, max_docs_per_chunk: usize, out_dir: impl AsRef<Path>) -> Result<SplitReport> {
    if max_docs_per_chunk == 0 {
        return Err(Error::Invalid("max_docs_per_chunk must be positive".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(Error::at(out_dir))?;
    let mut raw = BufReader::with_capacity(1 << 20, input);
    let gzip = raw.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    let compressed = std::rc::Rc::new(std::cell::Cell::new(0u64));
    let mut reader: Box<dyn BufRead> = if gzip {
        let counting = CountingReader { inner: raw, count: 0 };
        Box::new(BufReader::with_capacity(1 << 20, GzTracker { inner: MultiGzDecoder::new(counting), pos: compressed.clone() }))
    } else {
        Box::new(raw)
    };
    let mut report = SplitReport::default();
    let mut writer: Option<BufWriter<File>> = None;
    let mut in_chunk = 0usize;
    let mut line = Vec::with_capacity(4096);
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line).map_err(|e| {
            if gzip {
                Error::Gzip { offset: compressed.get(), source: e }
            } else {
                Error::Io(e)
            }
        })?;
        if n == 0 {
            break;
        }
        if writer.is_none() || in_chunk == max_docs_per_chunk {
            if let Some(w) = writer.take() {
                finish_chunk(w, report.chunks.last().expect("open chunk"))?;
            }
            let path = out_dir.join(format!("chunk-{:06}.jsonl", report.chunks.len()));
            writer = Some(BufWriter::with_capacity(1 << 20, File::create(&path).map_err(Error::at(&path))?));
            report.chunks.push(path);
            in_chunk = 0;
        }
        let w = writer.as_mut().expect("open chunk");
        w.write_all(&line).map_err(Error::at(report.chunks.last().expect("open chunk")))?;
        report.bytes += n as u64;
        report.documents += 1;
        in_chunk += 1;
        report.truncated_final = line.last() != Some(&b'\n');
    }
    if let Some(w) = writer.take() {
        finish_chunk(w, report.chunks.last().expect("open chunk"))?;
    }
    Ok(report)
}

struct GzTracker<R> {
    inner: MultiGzDecoder<CountingReader<R>>,
    pos: std::rc::Rc<std::cell::Cell<u64>>,
}

impl<R: Read> Read for GzTracker<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let r = self.inner.read(buf);
        self.pos.set(self.inner.get_ref().count);
        r
    }
}

fn finish_chunk(w: BufWriter<File>, path: &Path) -> Result<()> {
    let f = w.into_inner().map_err(|e| Error::IoAt { path: path.to_path_buf(), source: e.into_error() })?;
    f.sync_all().map_err(Error::at(path))
}

/// Bulk files written for one bundle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BulkFiles {
    pub files: Vec<(TableId, PathBuf, u64)>,
}

pub fn bulk_file_name(table: TableId) -> String {
    format!("{}.twbl", table.name())
}

/// Write one bulk file per stream table into `dir`. Partial files are
/// removed when any write fails.
pub fn write_bulkload(bundle: &StatusBundle, dir: impl AsRef<Path>) -> Result<BulkFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(Error::at(dir))?;
    let mut written = Vec::new();
    let result = (|| {
        write_table(dir, &bundle.tweets, &mut written)?;
        write_table(dir, &bundle.users, &mut written)?;
        write_table(dir, &bundle.mentions, &mut written)?;
        write_table(dir, &bundle.retweets, &mut written)
    })();
    match result {
        Ok(()) => Ok(BulkFiles { files: written }),
        Err(e) => {
            for (_, p, _) in &written {
                let _ = fs::remove_file(p);
            }
            for t in [TableId::Tweet, TableId::UserSnapshot, TableId::Mention, TableId::Retweet] {
                let _ = fs::remove_file(dir.join(bulk_file_name(t)));
            }
            Err(e)
        }
    }
}

fn write_table<R: Record>(dir: &Path, rows: &[R], written: &mut Vec<(TableId, PathBuf, u64)>) -> Result<()> {
    let path = dir.join(bulk_file_name(R::TABLE));
    let mut w = BulkWriter::create(&path, R::TABLE)?;
    for r in rows {
        w.push(r)?;
    }
    let n = w.finish()?;
    written.push((R::TABLE, path, n));
    Ok(())
}

/// Outcome of [`ingest`].
#[derive(Clone, Debug, Default)]
pub struct IngestReport {
    pub documents: u64,
    pub accepted: u64,
    pub rejects: Vec<(u64, String)>,
    /// Bulk-file directories, one per chunk, in chunk order.
    pub bulk_dirs: Vec<PathBuf>,
    pub rows: [u64; 4],
}

/// Split `input` into chunks under `out/chunks`, parse chunks in parallel and
/// write per-chunk bulk files under `out/bulk/chunk-NNNNNN`.
pub fn ingest(
    input: impl AsRef<Path>,
    run_id: u32,
    out: impl AsRef<Path>,
    chunk_docs: usize,
    langid: &(dyn Identifier + Sync),
) -> Result<IngestReport> {
    let input = input.as_ref();
    let out = out.as_ref();
    let file = File::open(input).map_err(Error::at(input))?;
    let split = split_stream(file, chunk_docs, out.join("chunks"))?;
    ingest_chunks(&split.chunks, run_id, &out.join("bulk"), langid)
}

/// Parse existing chunk files and write their bulk files.
pub fn ingest_chunks(
    chunks: &[PathBuf],
    run_id: u32,
    bulk_root: &Path,
    langid: &(dyn Identifier + Sync),
) -> Result<IngestReport> {
    let mut offsets = Vec::with_capacity(chunks.len());
    let mut total = 0u64;
    for c in chunks {
        offsets.push(total);
        total += fs::metadata(c).map_err(Error::at(c))?.len();
    }
    let results: Vec<Result<(PathBuf, StatusBundle, BulkFiles)>> = chunks
        .par_iter()
        .zip(offsets.par_iter())
        .map(|(chunk, &base)| {
            let bytes = fs::read(chunk).map_err(Error::at(chunk))?;
            let parser = StatusParser::new(run_id, langid);
            let mut bundle = parser.parse_chunk(&bytes, base);
            let stem = chunk.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let dir = bulk_root.join(stem);
            let files = write_bulkload(&bundle, &dir)?;
            bundle.tweets = Vec::new();
            bundle.users = Vec::new();
            bundle.mentions = Vec::new();
            bundle.retweets = Vec::new();
            Ok((dir, bundle, files))
        })
        .collect();
    let mut report = IngestReport::default();
    for r in results {
        let (dir, bundle, files) = r?;
        report.documents += bundle.documents;
        report.accepted += bundle.accepted();
        report.rejects.extend(bundle.rejects);
        for (i, (_, _, n)) in files.files.iter().enumerate() {
            report.rows[i] += n;
        }
        report.bulk_dirs.push(dir);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::read_bulk_file;
    use crate::langid::LanguageId;
    use chrono::{NaiveDate, NaiveTime};

    fn doc(id: u64, user: u64, extra: &str) -> String {
        format!(
            r#"{{"id":{id},"text":"hello there friends","created_at":"Wed Aug 27 13:08:45 +0000 2008","user":{{"id":{user},"screen_name":"u{user}","location":"here","created_at":"Mon Jan 01 00:00:00 +0000 2007","statuses_count":3,"friends_count":4,"followers_count":5}}{extra}}}"#
        )
    }

    #[test]
    fn timestamps() {
        assert_eq!(parse_created_at("Thu Jan 01 00:00:00 +0000 1970").unwrap(), 0);
        assert_eq!(parse_created_at("1970-01-01T00:00:01Z").unwrap(), 1);
        let oracle = NaiveDate::from_ymd_opt(2008, 8, 27)
            .unwrap()
            .and_time(NaiveTime::from_hms_opt(13, 8, 45).unwrap())
            .and_utc()
            .timestamp();
        // days since epoch: 38 years incl. 9 leap days (1972..2004), plus Jan..Jul 2008 (leap) and 26 days
        let days = 38 * 365 + 9 + (31 + 29 + 31 + 30 + 31 + 30 + 31) + 26;
        assert_eq!(oracle, days * 86400 + 13 * 3600 + 8 * 60 + 45);
        assert_eq!(parse_created_at("Wed Aug 27 13:08:45 +0000 2008").unwrap(), oracle);
        assert_eq!(parse_created_at("Wed Aug 27 15:08:45 +0200 2008").unwrap(), oracle);
        let err = parse_created_at("yesterday").unwrap_err().to_string();
        assert!(err.contains("legacy") && err.contains("ISO-8601"));
        assert_eq!(parse_created_at(&format_created_at(oracle)).unwrap(), oracle);
    }

    #[test]
    fn retweet_yields_two_rows() {
        let lid = LanguageId::seeded();
        let p = StatusParser::new(1, &lid);
        let inner = doc(5, 20, "");
        let outer = doc(9, 10, &format!(r#","retweeted_status":{inner},"entities":{{"user_mentions":[]}}"#));
        let b = p.parse_status(&outer).unwrap();
        assert_eq!(b.tweets.len(), 2);
        assert_eq!(b.users.len(), 2);
        assert_eq!(b.retweets.len(), 1);
        assert!(b.mentions.is_empty());
        assert!(!b.tweets[0].embedded && b.tweets[1].embedded);
        let rt = &b.retweets[0];
        assert_eq!((rt.tweet_id, rt.original_tweet_id, rt.source_user_id, rt.original_user_id), (9, 5, 10, 20));
    }

    #[test]
    fn mentions_and_geo() {
        let lid = LanguageId::seeded();
        let p = StatusParser::new(3, &lid);
        let d = doc(
            7,
            1,
            r#","coordinates":{"type":"Point","coordinates":[-74.0,40.72]},"entities":{"user_mentions":[{"id":2},{"id":1}]},"in_reply_to_status_id":4,"in_reply_to_user_id":2"#,
        );
        let b = p.parse_status(&d).unwrap();
        assert_eq!(b.mentions.len(), 2);
        assert_eq!(b.mentions[1].mentioned_user_id, 1);
        let t = &b.tweets[0];
        assert_eq!(t.htm_id, Some(latlon_to_htm(-74.0, 40.72, 20).unwrap().raw()));
        assert_eq!((t.in_reply_to_tweet_id, t.in_reply_to_user_id), (Some(4), Some(2)));
    }

    #[test]
    fn rejects_are_counted() {
        let lid = LanguageId::seeded();
        let p = StatusParser::new(1, &lid);
        let long = "x".repeat(141);
        let input = format!(
            "{}\n{{\"delete\":{{\"status\":{{\"id\":1}}}}}}\nnot json\n\n{}\n{}\n{{\"id\":1,\"text\":\"a\",\"created_at\":\"bad\",\"user\":{{\"id\":1}}}}",
            doc(1, 1, ""),
            doc(2, 0, ""),
            doc(3, 1, "").replace("hello there friends", &long)
        );
        let b = p.parse_chunk(input.as_bytes(), 100);
        assert_eq!(b.documents, 6);
        assert_eq!(b.accepted(), 1);
        let reasons: Vec<&str> = b.rejects.iter().map(|(_, r)| r.as_str()).collect();
        assert_eq!(reasons[0], "non-status");
        assert!(reasons[1].starts_with("malformed JSON"));
        assert_eq!(reasons[2], "missing user.id");
        assert!(reasons[3].contains("longer than 140"));
        assert!(reasons[4].contains("unparseable timestamp"));
        let first_line = doc(1, 1, "").len() as u64 + 1;
        assert_eq!(b.rejects[0].0, 100 + first_line);
    }

    #[test]
    fn arbitrary_bytes_never_abort() {
        let lid = LanguageId::seeded();
        let p = StatusParser::new(1, &lid);
        let junk: Vec<u8> = (0..5000u32).map(|i| (i.wrapping_mul(2654435761) >> 13) as u8).collect();
        let b = p.parse_chunk(&junk, 0);
        assert_eq!(b.accepted() + b.rejects.len() as u64, b.documents);
    }

    #[test]
    fn split_counts() {
        let dir = tempfile::tempdir().unwrap();
        let input: String = (1..=10).map(|i| doc(i, 1, "") + "\n").collect();
        let r = split_stream(input.as_bytes(), 4, dir.path().join("c")).unwrap();
        let sizes: Vec<usize> =
            r.chunks.iter().map(|c| fs::read_to_string(c).unwrap().lines().count()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert!(!r.truncated_final);
        let joined: Vec<u8> = r.chunks.iter().flat_map(|c| fs::read(c).unwrap()).collect();
        assert_eq!(joined, input.as_bytes());
        let empty = split_stream(&b""[..], 4, dir.path().join("e")).unwrap();
        assert!(empty.chunks.is_empty());
        let t = split_stream(&b"{}\n{\"id\""[..], 4, dir.path().join("t")).unwrap();
        assert!(t.truncated_final);
        assert_eq!(t.documents, 2);
    }

    #[test]
    fn gzip_input() {
        use flate2::{write::GzEncoder, Compression};
        let dir = tempfile::tempdir().unwrap();
        let input: String = (1..=5).map(|i| doc(i, 1, "") + "\n").collect();
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(input.as_bytes()).unwrap();
        let gz = enc.finish().unwrap();
        let r = split_stream(&gz[..], 2, dir.path().join("g")).unwrap();
        assert_eq!(r.documents, 5);
        let joined: Vec<u8> = r.chunks.iter().flat_map(|c| fs::read(c).unwrap()).collect();
        assert_eq!(joined, input.as_bytes());
        let mut broken = gz.clone();
        let mid = broken.len() / 2;
        broken[mid..].iter_mut().for_each(|b| *b ^= 0x5a);
        assert!(matches!(split_stream(&broken[..], 2, dir.path().join("b")), Err(Error::Gzip { .. })));
    }

    #[test]
    fn bulk_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lid = LanguageId::seeded();
        let p = StatusParser::new(1, &lid);
        let empty = write_bulkload(&StatusBundle::default(), dir.path().join("e")).unwrap();
        assert_eq!(empty.files.len(), 4);
        assert!(empty.files.iter().all(|f| f.2 == 0));
        let inner = doc(5, 20, "");
        let b = p.parse_status(&doc(9, 10, &format!(r#","retweeted_status":{inner}"#))).unwrap();
        let files = write_bulkload(&b, dir.path().join("r")).unwrap();
        assert_eq!(files.files[0].2, 2);
        let tweets: Vec<TweetRow> = read_bulk_file(&files.files[0].1).unwrap();
        assert_eq!(tweets, b.tweets);
        let users: Vec<UserSnapshot> = read_bulk_file(&files.files[1].1).unwrap();
        assert_eq!(users, b.users);
    }
}
