//! Row types shared by every table.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};

use crate::codec::*;
use crate::error::{Error, Result};

/// Three-byte language code: ISO 639-1 codes are space padded, `und` marks
/// unknown.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lang([u8; 3]);

impl Lang {
    pub const UND: Lang = Lang(*b"und");

    pub fn new(code: &str) -> Result<Lang> {
        let b = code.as_bytes();
        if !(2..=3).contains(&b.len()) || !b.iter().all(|c| c.is_ascii_lowercase()) {
            return Err(Error::Invalid(format!("language code {code:?} is not 2-3 lowercase letters")));
        }
        let mut out = [b' '; 3];
        out[..b.len()].copy_from_slice(b);
        Ok(Lang(out))
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).unwrap_or("und").trim_end()
    }

    pub fn bytes(&self) -> [u8; 3] {
        self.0
    }

    pub fn from_bytes(b: [u8; 3]) -> Result<Lang> {
        let s = std::str::from_utf8(&b).map_err(|_| Error::Format("non-ASCII language code".into()))?;
        Lang::new(s.trim_end())
    }
}

impl fmt::Debug for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Lang({})", self.as_str())
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One normalized status.
#[derive(Clone, Debug, PartialEq)]
pub struct TweetRow {
    pub tweet_id: u64,
    pub run_id: u32,
    pub created_at: i64,
    pub user_id: u64,
    pub text: String,
    pub in_reply_to_tweet_id: Option<u64>,
    pub in_reply_to_user_id: Option<u64>,
    pub lon: Option<f64>,
    pub lat: Option<f64>,
    pub htm_id: Option<u64>,
    pub lang: Lang,
    /// Extracted from a `retweeted_status`.
    pub embedded: bool,
}

impl TweetRow {
    pub fn coords(&self) -> Option<(f64, f64)> {
        Some((self.lon?, self.lat?))
    }
}

impl Record for TweetRow {
    const TABLE: TableId = TableId::Tweet;

    fn key(&self) -> Key {
        [self.run_id as i128, self.tweet_id as i128, 0, 0]
    }

    fn encode(&self, out: &mut Vec<u8>) {
        put_u64(out, self.tweet_id);
        put_u32(out, self.run_id);
        put_i64(out, self.created_at);
        put_u64(out, self.user_id);
        put_str(out, &self.text);
        put_opt_u64(out, self.in_reply_to_tweet_id);
        put_opt_u64(out, self.in_reply_to_user_id);
        put_opt_f64(out, self.lon);
        put_opt_f64(out, self.lat);
        put_opt_u64(out, self.htm_id);
        out.extend_from_slice(&self.lang.bytes());
        put_bool(out, self.embedded);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(TweetRow {
            tweet_id: r.u64()?,
            run_id: r.u32()?,
            created_at: r.i64()?,
            user_id: r.u64()?,
            text: r.string()?,
            in_reply_to_tweet_id: r.opt_u64()?,
            in_reply_to_user_id: r.opt_u64()?,
            lon: r.opt_f64()?,
            lat: r.opt_f64()?,
            htm_id: r.opt_u64()?,
            lang: Lang::from_bytes(r.bytes(3)?.try_into().expect("3 bytes"))?,
            embedded: r.bool()?,
        })
    }

    fn write_tsv(&self, out: &mut String) {
        let _ = write!(out, "{}\t{}\t{}\t{}\t", self.run_id, self.tweet_id, self.created_at, self.user_id);
        tsv_opt(&self.in_reply_to_tweet_id, out);
        out.push('\t');
        tsv_opt(&self.in_reply_to_user_id, out);
        out.push('\t');
        tsv_opt(&self.lon, out);
        out.push('\t');
        tsv_opt(&self.lat, out);
        out.push('\t');
        tsv_opt(&self.htm_id, out);
        let _ = write!(out, "\t{}\t{}\t", self.lang, self.embedded as u8);
        tsv_escape(&self.text, out);
    }

    /// A directly observed tweet beats a copy embedded in a retweet.
    fn resolve(a: Self, b: Self) -> Self {
        match (a.embedded, b.embedded) {
            (false, true) => a,
            (true, false) => b,
            _ => {
                let (mut ea, mut eb) = (Vec::new(), Vec::new());
                a.encode(&mut ea);
                b.encode(&mut eb);
                if eb < ea {
                    b
                } else {
                    a
                }
            }
        }
    }
}

/// A user profile as carried by one status.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserSnapshot {
    pub user_id: u64,
    pub screen_name: String,
    pub location: String,
    pub account_created_at: i64,
    pub statuses_count: u64,
    pub friends_count: u64,
    pub followers_count: u64,
    /// `created_at` of the status object holding this user object.
    pub observed_at: i64,
}

impl UserSnapshot {
    /// Compare everything except identity and observation time.
    pub fn profile_cmp(&self, other: &Self) -> Ordering {
        (&self.screen_name, &self.location, self.account_created_at)
            .cmp(&(&other.screen_name, &other.location, other.account_created_at))
            .then(self.statuses_count.cmp(&other.statuses_count))
            .then(self.friends_count.cmp(&other.friends_count))
            .then(self.followers_count.cmp(&other.followers_count))
    }

    pub fn same_profile(&self, other: &Self) -> bool {
        self.profile_cmp(other) == Ordering::Equal
    }

    fn encode_fields(&self, out: &mut Vec<u8>) {
        put_u64(out, self.user_id);
        put_str(out, &self.screen_name);
        put_str(out, &self.location);
        put_i64(out, self.account_created_at);
        put_u64(out, self.statuses_count);
        put_u64(out, self.friends_count);
        put_u64(out, self.followers_count);
        put_i64(out, self.observed_at);
    }

    fn decode_fields(r: &mut Reader<'_>) -> Result<Self> {
        Ok(UserSnapshot {
            user_id: r.u64()?,
            screen_name: r.string()?,
            location: r.string()?,
            account_created_at: r.i64()?,
            statuses_count: r.u64()?,
            friends_count: r.u64()?,
            followers_count: r.u64()?,
            observed_at: r.i64()?,
        })
    }

    fn tsv_fields(&self, out: &mut String) {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t",
            self.account_created_at, self.statuses_count, self.friends_count, self.followers_count, self.observed_at
        );
        tsv_escape(&self.screen_name, out);
        out.push('\t');
        tsv_escape(&self.location, out);
    }
}

impl Record for UserSnapshot {
    const TABLE: TableId = TableId::UserSnapshot;

    fn key(&self) -> Key {
        [self.user_id as i128, self.observed_at as i128, 0, 0]
    }

    fn encode(&self, out: &mut Vec<u8>) {
        self.encode_fields(out);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        UserSnapshot::decode_fields(r)
    }

    fn write_tsv(&self, out: &mut String) {
        let _ = write!(out, "{}\t", self.user_id);
        self.tsv_fields(out);
    }

    fn tie_cmp(&self, other: &Self) -> Ordering {
        self.profile_cmp(other)
    }
}

/// Last known profile of a user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserRow {
    /// Snapshot with the greatest `observed_at`.
    pub latest: UserSnapshot,
    pub first_seen_at: i64,
}

impl UserRow {
    pub fn user_id(&self) -> u64 {
        self.latest.user_id
    }
}

impl Record for UserRow {
    const TABLE: TableId = TableId::User;

    fn key(&self) -> Key {
        [self.latest.user_id as i128, 0, 0, 0]
    }

    fn encode(&self, out: &mut Vec<u8>) {
        self.latest.encode_fields(out);
        put_i64(out, self.first_seen_at);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(UserRow { latest: UserSnapshot::decode_fields(r)?, first_seen_at: r.i64()? })
    }

    fn write_tsv(&self, out: &mut String) {
        let _ = write!(out, "{}\t{}\t", self.latest.user_id, self.first_seen_at);
        self.latest.tsv_fields(out);
    }
}

/// One detected profile change: `prior` is the profile that was replaced at
/// `observed_at`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserUpdateRow {
    pub user_id: u64,
    pub observed_at: i64,
    /// Position of this change in the user's history, from 0.
    pub seq: u32,
    pub prior: UserSnapshot,
}

impl Record for UserUpdateRow {
    const TABLE: TableId = TableId::UserUpdate;

    fn key(&self) -> Key {
        [self.user_id as i128, self.observed_at as i128, self.seq as i128, 0]
    }

    fn encode(&self, out: &mut Vec<u8>) {
        put_u64(out, self.user_id);
        put_i64(out, self.observed_at);
        put_u32(out, self.seq);
        self.prior.encode_fields(out);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(UserUpdateRow { user_id: r.u64()?, observed_at: r.i64()?, seq: r.u32()?, prior: UserSnapshot::decode_fields(r)? })
    }

    fn write_tsv(&self, out: &mut String) {
        let _ = write!(out, "{}\t{}\t{}\t", self.user_id, self.observed_at, self.seq);
        self.prior.tsv_fields(out);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MentionEdge {
    pub run_id: u32,
    pub tweet_id: u64,
    pub source_user_id: u64,
    pub mentioned_user_id: u64,
    pub created_at: i64,
}

impl Record for MentionEdge {
    const TABLE: TableId = TableId::Mention;

    fn key(&self) -> Key {
        [self.run_id as i128, self.source_user_id as i128, self.mentioned_user_id as i128, self.tweet_id as i128]
    }

    fn encode(&self, out: &mut Vec<u8>) {
        put_u32(out, self.run_id);
        put_u64(out, self.tweet_id);
        put_u64(out, self.source_user_id);
        put_u64(out, self.mentioned_user_id);
        put_i64(out, self.created_at);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(MentionEdge {
            run_id: r.u32()?,
            tweet_id: r.u64()?,
            source_user_id: r.u64()?,
            mentioned_user_id: r.u64()?,
            created_at: r.i64()?,
        })
    }

    fn write_tsv(&self, out: &mut String) {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            self.run_id, self.source_user_id, self.mentioned_user_id, self.tweet_id, self.created_at
        );
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RetweetEdge {
    pub run_id: u32,
    /// The retweet itself.
    pub tweet_id: u64,
    pub original_tweet_id: u64,
    /// The retweeting user.
    pub source_user_id: u64,
    pub original_user_id: u64,
    pub created_at: i64,
}

impl Record for RetweetEdge {
    const TABLE: TableId = TableId::Retweet;

    fn key(&self) -> Key {
        [self.run_id as i128, self.original_user_id as i128, self.source_user_id as i128, self.tweet_id as i128]
    }

    fn encode(&self, out: &mut Vec<u8>) {
        put_u32(out, self.run_id);
        put_u64(out, self.tweet_id);
        put_u64(out, self.original_tweet_id);
        put_u64(out, self.source_user_id);
        put_u64(out, self.original_user_id);
        put_i64(out, self.created_at);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(RetweetEdge {
            run_id: r.u32()?,
            tweet_id: r.u64()?,
            original_tweet_id: r.u64()?,
            source_user_id: r.u64()?,
            original_user_id: r.u64()?,
            created_at: r.i64()?,
        })
    }

    fn write_tsv(&self, out: &mut String) {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.run_id, self.original_user_id, self.source_user_id, self.tweet_id, self.original_tweet_id, self.created_at
        );
    }
}

/// A location cluster of one user.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSummary {
    pub user_id: u64,
    /// 1-based rank by cardinality.
    pub rank: u8,
    pub lon: f64,
    pub lat: f64,
    /// RMS distance of kept points to the centroid, km.
    pub sigma_km: f64,
    pub cardinality_total: u64,
    pub cardinality_kept: u64,
    /// Circular mean of longitude-derived local hour, absent when undefined.
    pub mean_local_hour: Option<f64>,
    pub htm_id: u64,
    pub region_id: Option<u64>,
}

impl Record for ClusterSummary {
    const TABLE: TableId = TableId::ClusterSummary;

    fn key(&self) -> Key {
        [self.user_id as i128, self.rank as i128, 0, 0]
    }

    fn encode(&self, out: &mut Vec<u8>) {
        put_u64(out, self.user_id);
        put_u8(out, self.rank);
        put_f64(out, self.lon);
        put_f64(out, self.lat);
        put_f64(out, self.sigma_km);
        put_u64(out, self.cardinality_total);
        put_u64(out, self.cardinality_kept);
        put_opt_f64(out, self.mean_local_hour);
        put_u64(out, self.htm_id);
        put_opt_u64(out, self.region_id);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        Ok(ClusterSummary {
            user_id: r.u64()?,
            rank: r.u8()?,
            lon: r.f64()?,
            lat: r.f64()?,
            sigma_km: r.f64()?,
            cardinality_total: r.u64()?,
            cardinality_kept: r.u64()?,
            mean_local_hour: r.opt_f64()?,
            htm_id: r.u64()?,
            region_id: r.opt_u64()?,
        })
    }

    fn write_tsv(&self, out: &mut String) {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t",
            self.user_id, self.rank, self.lon, self.lat, self.sigma_km, self.cardinality_total, self.cardinality_kept
        );
        tsv_opt(&self.mean_local_hour, out);
        let _ = write!(out, "\t{}\t", self.htm_id);
        tsv_opt(&self.region_id, out);
    }
}
