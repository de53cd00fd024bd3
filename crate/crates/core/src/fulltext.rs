//! Tokenizer, noise-word filter and a per-segment inverted index.
//!
//! The filter drops tokens shorter than four code points, tokens holding a
//! digit, tokens with any code point at or above the high-unicode threshold
//! (CJK and beyond by default), and tokens where one character repeats three
//! or more times in a row. Rules are checked in that order and the first hit
//! is recorded. Postings are kept once per tweet, whatever the in-tweet
//! frequency.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use unicode_general_category::{get_general_category, GeneralCategory};

use crate::codec::Reader;
use crate::error::{Error, Result};
use crate::model::TweetRow;

pub const TEXT_INDEX_MAGIC: &[u8; 4] = b"TWFT";
/// Start of the CJK radicals block.
pub const DEFAULT_HIGH_UNICODE: u32 = 0x2E80;
const POSTING_BYTES: u64 = 8 + 8 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DropReason {
    TooShort,
    HasDigit,
    HighUnicode,
    RepeatRun,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::TooShort => "too_short",
            DropReason::HasDigit => "has_digit",
            DropReason::HighUnicode => "high_unicode",
            DropReason::RepeatRun => "repeat_run",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub kept: bool,
    pub drop_reason: Option<DropReason>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterConfig {
    /// When false every token is kept (the unfiltered baseline).
    pub enabled: bool,
    pub min_chars: usize,
    pub high_unicode: u32,
    /// Longest allowed run of one repeated character.
    pub max_run: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { enabled: true, min_chars: 4, high_unicode: DEFAULT_HIGH_UNICODE, max_run: 2 }
    }
}

impl FilterConfig {
    pub fn unfiltered() -> Self {
        FilterConfig { enabled: false, ..FilterConfig::default() }
    }

    pub fn check(&self, token: &str) -> Option<DropReason> {
        if !self.enabled {
            return None;
        }
        if token.chars().count() < self.min_chars {
            return Some(DropReason::TooShort);
        }
        if token.chars().any(|c| get_general_category(c) == GeneralCategory::DecimalNumber) {
            return Some(DropReason::HasDigit);
        }
        if token.chars().any(|c| c as u32 >= self.high_unicode) {
            return Some(DropReason::HighUnicode);
        }
        let mut run = 0;
        let mut prev = None;
        for c in token.chars() {
            run = if Some(c) == prev { run + 1 } else { 1 };
            if run > self.max_run {
                return Some(DropReason::RepeatRun);
            }
            prev = Some(c);
        }
        None
    }
}

fn is_separator(c: char) -> bool {
    if c.is_whitespace() {
        return true;
    }
    if matches!(c, '#' | '@' | '_') {
        return false;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Split on whitespace and punctuation (keeping `#`, `@`, `_`) and lowercase.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_separator(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else {
            cur.extend(c.to_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn noise_filter(token: &str) -> Token {
    noise_filter_with(token, &FilterConfig::default())
}

pub fn noise_filter_with(token: &str, cfg: &FilterConfig) -> Token {
    let drop_reason = cfg.check(token);
    Token { text: token.to_string(), kept: drop_reason.is_none(), drop_reason }
}

/// Distinct kept terms of one text.
pub fn kept_terms(text: &str, cfg: &FilterConfig) -> BTreeSet<String> {
    tokenize(text).into_iter().filter(|t| cfg.check(t).is_none()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Posting {
    pub tweet_id: u64,
    pub run_id: u32,
    pub created_at: i64,
}

/// In-memory postings, mergeable across workers.
#[derive(Clone, Debug, Default)]
pub struct TextIndexBuilder {
    cfg: FilterConfig,
    terms: BTreeMap<String, Vec<Posting>>,
}

impl TextIndexBuilder {
    pub fn new(cfg: FilterConfig) -> Self {
        TextIndexBuilder { cfg, terms: BTreeMap::new() }
    }

    pub fn add(&mut self, row: &TweetRow) {
        let posting = Posting { tweet_id: row.tweet_id, run_id: row.run_id, created_at: row.created_at };
        for term in kept_terms(&row.text, &self.cfg) {
            self.terms.entry(term).or_default().push(posting);
        }
    }

    pub fn merge(mut self, other: TextIndexBuilder) -> Self {
        for (term, mut postings) in other.terms {
            self.terms.entry(term).or_default().append(&mut postings);
        }
        self
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Write a `TWFT` posting file: magic, flags (bit 0: filtered), `u32`
    /// high-unicode threshold, `u64` term count, then per term in sorted
    /// order the length-prefixed term, `u64` posting count and postings of
    /// (`u64` tweet id, `i64` created_at, `u32` run id) ordered by tweet id.
    pub fn write(mut self, path: impl AsRef<Path>) -> Result<u64> {
        let path = path.as_ref();
        let file = File::create(path).map_err(Error::at(path))?;
        let mut w = BufWriter::with_capacity(1 << 20, file);
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(TEXT_INDEX_MAGIC);
        buf.push(self.cfg.enabled as u8);
        buf.extend_from_slice(&self.cfg.high_unicode.to_le_bytes());
        buf.extend_from_slice(&(self.terms.len() as u64).to_le_bytes());
        w.write_all(&buf).map_err(Error::at(path))?;
        let mut total = 0u64;
        for (term, postings) in self.terms.iter_mut() {
            postings.sort_unstable_by_key(|p| (p.tweet_id, p.run_id));
            postings.dedup_by_key(|p| (p.tweet_id, p.run_id));
            buf.clear();
            buf.extend_from_slice(&(term.len() as u32).to_le_bytes());
            buf.extend_from_slice(term.as_bytes());
            buf.extend_from_slice(&(postings.len() as u64).to_le_bytes());
            for p in postings.iter() {
                buf.extend_from_slice(&p.tweet_id.to_le_bytes());
                buf.extend_from_slice(&p.created_at.to_le_bytes());
                buf.extend_from_slice(&p.run_id.to_le_bytes());
            }
            w.write_all(&buf).map_err(Error::at(path))?;
            total += postings.len() as u64;
        }
        let file = w.into_inner().map_err(|e| Error::IoAt { path: path.to_path_buf(), source: e.into_error() })?;
        file.sync_all().map_err(Error::at(path))?;
        Ok(total)
    }
}

/// Build the postings for a batch of tweet rows.
pub fn index_segment<'a>(rows: impl IntoIterator<Item = &'a TweetRow>, cfg: FilterConfig) -> TextIndexBuilder {
    let mut b = TextIndexBuilder::new(cfg);
    for r in rows {
        b.add(r);
    }
    b
}

/// Read side of a posting file. The term directory is loaded on open;
/// postings are read on demand.
#[derive(Debug)]
pub struct TextIndex {
    path: PathBuf,
    file: File,
    cfg: FilterConfig,
    directory: HashMap<String, (u64, u64)>,
}

impl TextIndex {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(Error::at(&path))?;
        TextIndex::from_file(file, path)
    }

    /// Use an already open handle; `path` is only used in messages.
    pub fn from_file(file: File, path: PathBuf) -> Result<Self> {
        let mut r = BufReader::with_capacity(1 << 16, &file);
        let mut head = [0u8; 17];
        r.read_exact(&mut head).map_err(Error::at(&path))?;
        if &head[..4] != TEXT_INDEX_MAGIC {
            return Err(Error::Format(format!("{}: bad magic, expected TWFT", path.display())));
        }
        let mut hr = Reader::new(&head[4..]);
        let enabled = hr.u8()? != 0;
        let high_unicode = hr.u32()?;
        let terms = hr.u64()?;
        let cfg = FilterConfig { enabled, high_unicode, ..FilterConfig::default() };
        let mut directory = HashMap::with_capacity(terms as usize);
        let mut offset = head.len() as u64;
        for _ in 0..terms {
            let mut len = [0u8; 4];
            r.read_exact(&mut len).map_err(Error::at(&path))?;
            let len = u32::from_le_bytes(len) as usize;
            let mut term = vec![0u8; len];
            r.read_exact(&mut term).map_err(Error::at(&path))?;
            let mut count = [0u8; 8];
            r.read_exact(&mut count).map_err(Error::at(&path))?;
            let count = u64::from_le_bytes(count);
            let term = String::from_utf8(term).map_err(|_| Error::Format("term not UTF-8".into()))?;
            let start = offset + 4 + len as u64 + 8;
            directory.insert(term, (start, count));
            r.seek_relative((count * POSTING_BYTES) as i64).map_err(Error::at(&path))?;
            offset = start + count * POSTING_BYTES;
        }
        drop(r);
        Ok(TextIndex { path, file, cfg, directory })
    }

    pub fn filter(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn term_count(&self) -> usize {
        self.directory.len()
    }

    pub fn posting_total(&self) -> u64 {
        self.directory.values().map(|v| v.1).sum()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.directory.keys().map(String::as_str)
    }

    pub fn postings(&self, term: &str) -> Result<Vec<Posting>> {
        let Some(&(offset, count)) = self.directory.get(term) else {
            return Ok(Vec::new());
        };
        let mut buf = vec![0u8; (count * POSTING_BYTES) as usize];
        self.file.read_exact_at(&mut buf, offset).map_err(Error::at(&self.path))?;
        let mut r = Reader::new(&buf);
        let mut out = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let tweet_id = r.u64()?;
            let created_at = r.i64()?;
            let run_id = r.u32()?;
            out.push(Posting { tweet_id, run_id, created_at });
        }
        Ok(out)
    }

    /// Normalize a query term the way indexed text was normalized.
    pub fn normalize_term(&self, term: &str) -> Result<String> {
        normalize_query(term, &self.cfg)
    }

    /// Tweets of `run_id` whose kept-token set contains `term`, by tweet id.
    pub fn search(&self, term: &str, run_id: u32) -> Result<Vec<(u64, i64)>> {
        let term = self.normalize_term(term)?;
        Ok(self
            .postings(&term)?
            .into_iter()
            .filter(|p| p.run_id == run_id)
            .map(|p| (p.tweet_id, p.created_at))
            .collect())
    }
}

pub fn normalize_query(term: &str, cfg: &FilterConfig) -> Result<String> {
    let mut tokens = tokenize(term);
    if tokens.len() != 1 {
        return Err(Error::Invalid(format!("query {term:?} must be exactly one token, got {}", tokens.len())));
    }
    let token = tokens.pop().expect("one token");
    if let Some(reason) = cfg.check(&token) {
        return Err(Error::FilteredTerm { term: token, reason });
    }
    Ok(token)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Lang;
    use proptest::prelude::*;

    fn tweet(id: u64, run: u32, text: &str) -> TweetRow {
        TweetRow {
            tweet_id: id,
            run_id: run,
            created_at: id as i64 * 100,
            user_id: 1,
            text: text.into(),
            in_reply_to_tweet_id: None,
            in_reply_to_user_id: None,
            lon: None,
            lat: None,
            htm_id: None,
            lang: Lang::UND,
            embedded: false,
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Hello, world!"), vec!["hello", "world"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("#Rust @dev_team: snake_case\u{2014}yes"), vec!["#rust", "@dev_team", "snake_case", "yes"]);
    }

    #[test]
    fn filter_rules() {
        assert_eq!(noise_filter("the").drop_reason, Some(DropReason::TooShort));
        assert_eq!(noise_filter("abc123").drop_reason, Some(DropReason::HasDigit));
        assert_eq!(noise_filter("loooove").drop_reason, Some(DropReason::RepeatRun));
        assert_eq!(noise_filter("東京タワー").drop_reason, Some(DropReason::HighUnicode));
        let kept = noise_filter("network");
        assert!(kept.kept && kept.drop_reason.is_none());
        assert!(noise_filter("look").kept);
        // first matching rule wins
        assert_eq!(noise_filter("a1").drop_reason, Some(DropReason::TooShort));
        assert_eq!(noise_filter("1111x").drop_reason, Some(DropReason::HasDigit));
        // only decimal digits count: Arabic-Indic yes, vulgar fractions no
        assert_eq!(noise_filter("abc\u{0663}d").drop_reason, Some(DropReason::HasDigit));
        assert!(noise_filter("half\u{00BD}").kept);
        assert!(noise_filter_with("the", &FilterConfig::unfiltered()).kept);
    }

    #[test]
    fn one_posting_per_tweet() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.twft");
        let rows = vec![tweet(1, 7, "network network"), tweet(2, 7, "Network!"), tweet(3, 8, "network")];
        index_segment(&rows, FilterConfig::default()).write(&path).unwrap();
        let idx = TextIndex::open(&path).unwrap();
        assert_eq!(idx.postings("network").unwrap().len(), 3);
        assert_eq!(idx.search("network", 7).unwrap(), vec![(1, 100), (2, 200)]);
        assert_eq!(idx.search("NETWORK", 8).unwrap(), vec![(3, 300)]);
        assert!(idx.search("unseen", 7).unwrap().is_empty());
        assert!(matches!(idx.search("the", 7), Err(Error::FilteredTerm { reason: DropReason::TooShort, .. })));
        assert!(idx.search("two words", 7).is_err());
    }

    #[test]
    fn empty_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.twft");
        index_segment(&[], FilterConfig::default()).write(&path).unwrap();
        let idx = TextIndex::open(&path).unwrap();
        assert_eq!(idx.terms().count(), 0);
    }

    proptest! {
        #[test]
        fn tokens_rejoined_retokenize_identically(s in "\\PC{0,60}") {
            let toks = tokenize(&s);
            let joined = toks.join(" ");
            prop_assert_eq!(tokenize(&joined), toks);
        }

        #[test]
        fn kept_tokens_satisfy_rules(s in "\\PC{0,30}") {
            for t in tokenize(&s) {
                let tok = noise_filter(&t);
                if tok.kept {
                    prop_assert!(t.chars().count() >= 4);
                    prop_assert!(!t.chars().any(|c| get_general_category(c) == GeneralCategory::DecimalNumber));
                    prop_assert!(t.chars().all(|c| (c as u32) < DEFAULT_HIGH_UNICODE));
                }
                prop_assert_eq!(tok.kept, tok.drop_reason.is_none());
            }
        }
    }
}
