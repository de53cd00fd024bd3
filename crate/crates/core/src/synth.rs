//! Seeded synthetic status streams with a ground-truth manifest.
//!
//! Users arrive along `1 - exp(-t/t0)` plus a uniform tail; each user's first
//! status is at their arrival time. Geo users tweet from up to five planted
//! clusters, one of them optionally near New York. Retweets embed historical
//! originals whose ids interleave with the stream's ids. Some users change
//! their follower count once at a planted time; every other profile field is
//! constant. Delete notices and malformed lines are mixed in.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::htm::EARTH_RADIUS_KM;
use crate::jsonstream::{format_created_at, MAX_TEXT_CHARS};
use crate::query::{utc_date, utc_hour};

pub const NYC: (f64, f64) = (-74.0, 40.72);
/// The term whose daily counts the manifest records.
pub const TRACKED_TERM: &str = "network";
const ID_BASE: u64 = 1_000_000_000;
const USER_ID_BASE: u64 = 10_000;
const DAY: i64 = 86_400;

const SYLLABLES: &[&str] = &[
    "ka", "ri", "mo", "tel", "san", "bo", "lu", "ven", "dra", "shi", "po", "mer", "qua", "zen", "li", "tor", "fa",
    "ne", "gru", "vi", "sol", "pen", "da", "ro", "mi", "kel", "tha", "ber", "cu", "wen",
];
const NOISE_WORDS: &[&str] = &["the", "and", "lol", "ok", "2day", "gr8", "sooo", "looool", "東京", "café", "yes!!!"];
const LOCATIONS: &[&str] = &["", "NYC", "London", "somewhere", "Tokyo", "Budapest", "Baltimore", "the moon"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub n_users: usize,
    /// Top-level statuses, retweets included.
    pub n_tweets: usize,
    /// Fraction of users whose own statuses carry coordinates.
    pub geo_fraction: f64,
    /// Upper bound on planted clusters per geo user, 1..=5.
    pub clusters_per_user: u8,
    pub cluster_sigma_km: f64,
    /// Fraction of geo users with a cluster near New York.
    pub nyc_fraction: f64,
    pub mention_zipf_exponent: f64,
    pub vocabulary: usize,
    pub retweet_fraction: f64,
    pub reply_fraction: f64,
    /// Replies that omit `in_reply_to_user_id`.
    pub reply_without_user_fraction: f64,
    /// Statuses containing the tracked term.
    pub term_fraction: f64,
    pub arrival_t0_days: f64,
    /// Users arriving on the exponential curve; the rest arrive uniformly.
    pub burst_fraction: f64,
    pub profile_change_fraction: f64,
    /// Extra delete notices per status.
    pub delete_fraction: f64,
    /// Extra malformed lines per status.
    pub malformed_fraction: f64,
    /// Statuses stamped in ISO-8601 instead of the legacy format.
    pub iso_time_fraction: f64,
    pub start: i64,
    pub end: i64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 1,
            n_users: 1000,
            n_tweets: 10_000,
            geo_fraction: 0.3,
            clusters_per_user: 3,
            cluster_sigma_km: 0.2,
            nyc_fraction: 0.2,
            mention_zipf_exponent: 1.1,
            vocabulary: 5000,
            retweet_fraction: 0.15,
            reply_fraction: 0.1,
            reply_without_user_fraction: 0.2,
            term_fraction: 0.05,
            arrival_t0_days: 3.0,
            burst_fraction: 0.7,
            profile_change_fraction: 0.1,
            delete_fraction: 0.01,
            malformed_fraction: 0.005,
            iso_time_fraction: 0.1,
            // 2012-01-01T00:00:00Z
            start: 1_325_376_000,
            end: 1_325_376_000 + 30 * DAY,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        for (name, v) in [
            ("geo_fraction", self.geo_fraction),
            ("nyc_fraction", self.nyc_fraction),
            ("retweet_fraction", self.retweet_fraction),
            ("reply_fraction", self.reply_fraction),
            ("reply_without_user_fraction", self.reply_without_user_fraction),
            ("term_fraction", self.term_fraction),
            ("burst_fraction", self.burst_fraction),
            ("profile_change_fraction", self.profile_change_fraction),
            ("delete_fraction", self.delete_fraction),
            ("malformed_fraction", self.malformed_fraction),
            ("iso_time_fraction", self.iso_time_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if self.retweet_fraction + self.reply_fraction > 1.0 {
            return bad("retweet_fraction + reply_fraction exceeds 1".into());
        }
        if !(1..=5).contains(&self.clusters_per_user) {
            return bad(format!("clusters_per_user = {} is outside 1..=5", self.clusters_per_user));
        }
        if !(self.cluster_sigma_km > 0.0) {
            return bad("cluster_sigma_km must be positive".into());
        }
        if !(self.mention_zipf_exponent > 0.0) {
            return bad("mention_zipf_exponent must be positive".into());
        }
        if !(self.arrival_t0_days > 0.0) {
            return bad("arrival_t0_days must be positive".into());
        }
        if self.vocabulary == 0 {
            return bad("vocabulary must be at least 1".into());
        }
        if self.end <= self.start {
            return bad("end must be after start".into());
        }
        if self.n_tweets > 0 && self.n_users == 0 {
            return bad("n_tweets > 0 needs at least one user".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantedUser {
    pub user_id: u64,
    /// (lon, lat, statuses emitted there)
    pub centroids: Vec<(f64, f64, u64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantedChange {
    pub user_id: u64,
    pub at: i64,
    pub followers_before: u64,
    pub followers_after: u64,
    /// Snapshots exist on both sides of the change, so it yields an update row.
    pub observed: bool,
}

/// What parsing and querying the generated stream must give.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GenConfig,
    pub documents: u64,
    pub statuses: u64,
    pub deletes: u64,
    pub malformed: u64,
    /// Rows as parsed, before dedup.
    pub tweet_rows: u64,
    pub user_snapshot_rows: u64,
    pub mention_rows: u64,
    pub retweet_rows: u64,
    /// Tweets after dedup of repeated historical originals.
    pub distinct_tweets: u64,
    pub embedded_distinct: u64,
    pub distinct_users: u64,
    pub geo_statuses: u64,
    pub reply_events: u64,
    pub replies_without_user: u64,
    /// Top-level statuses per UTC hour.
    pub hourly: Vec<u64>,
    /// Distinct tweets with the tracked term per UTC date.
    pub term_daily: BTreeMap<String, u64>,
    /// (degree, users) of mention out-degree, events mode.
    pub mention_out_degree: Vec<(u64, u64)>,
    pub mention_in_degree: Vec<(u64, u64)>,
    pub profile_changes: Vec<PlantedChange>,
    pub update_rows: u64,
    /// user id -> followers count of the latest snapshot.
    pub latest_followers: BTreeMap<u64, u64>,
    /// user id -> first observed time.
    pub first_seen: BTreeMap<u64, i64>,
    pub planted_clusters: Vec<PlantedUser>,
}

struct User {
    id: u64,
    arrival: i64,
    account_created_at: i64,
    statuses_count: u64,
    friends_count: u64,
    followers: u64,
    change: Option<(i64, u64)>,
    location: &'static str,
    /// (lon, lat, weight)
    centroids: Vec<(f64, f64, f64)>,
}

impl User {
    fn followers_at(&self, t: i64) -> u64 {
        match self.change {
            Some((at, after)) if t >= at => after,
            _ => self.followers,
        }
    }

    fn json(&self, t: i64) -> Value {
        json!({
            "id": self.id,
            "screen_name": format!("u{}", self.id),
            "location": self.location,
            "created_at": format_created_at(self.account_created_at),
            "statuses_count": self.statuses_count,
            "friends_count": self.friends_count,
            "followers_count": self.followers_at(t),
        })
    }
}

struct Historical {
    id: u64,
    user: usize,
    created_at: i64,
    text: String,
}

fn pseudo_words(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < n * 50 {
        attempts += 1;
        let k = rng.random_range(2..=4);
        let w: String = (0..k).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect();
        if w != TRACKED_TERM && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Offset (lon, lat) by east/north kilometres on a local tangent plane.
fn offset_km(lon: f64, lat: f64, east: f64, north: f64) -> (f64, f64) {
    let lat2 = (lat + (north / EARTH_RADIUS_KM).to_degrees()).clamp(-89.9, 89.9);
    let mut lon2 = lon + (east / (EARTH_RADIUS_KM * lat.to_radians().cos())).to_degrees();
    if lon2 >= 180.0 {
        lon2 -= 360.0;
    } else if lon2 < -180.0 {
        lon2 += 360.0;
    }
    (lon2, lat2)
}

struct TextGen {
    vocab: Vec<String>,
    zipf: Zipf<f64>,
    term_fraction: f64,
}

impl TextGen {
    fn text(&self, prefix: &str, rng: &mut ChaCha8Rng) -> String {
        let mut s = prefix.to_string();
        let mut len = s.chars().count();
        let mut words: Vec<&str> = Vec::new();
        let n = rng.random_range(3..=12);
        for _ in 0..n {
            let w = if rng.random_bool(0.08) {
                NOISE_WORDS[rng.random_range(0..NOISE_WORDS.len())]
            } else {
                let r = self.zipf.sample(rng) as usize;
                self.vocab[(r - 1).min(self.vocab.len() - 1)].as_str()
            };
            words.push(w);
        }
        if rng.random_bool(self.term_fraction) {
            let at = rng.random_range(0..=words.len());
            words.insert(at, TRACKED_TERM);
        }
        for w in words {
            let wl = w.chars().count() + usize::from(!s.is_empty());
            if len + wl > MAX_TEXT_CHARS {
                break;
            }
            if !s.is_empty() {
                s.push(' ');
            }
            s.push_str(w);
            len += wl;
        }
        s
    }
}

fn has_term(text: &str) -> bool {
    text.split(' ').any(|w| w == TRACKED_TERM)
}

/// Text of a retweet: "RT @name: " followed by whole words of the original.
fn retweet_text(author: u64, original: &str) -> String {
    let mut s = format!("RT @u{author}:");
    let mut len = s.chars().count();
    for w in original.split(' ') {
        let wl = w.chars().count() + 1;
        if len + wl > MAX_TEXT_CHARS {
            break;
        }
        s.push(' ');
        s.push_str(w);
        len += wl;
    }
    s
}

struct Event {
    t: i64,
    user: usize,
}

/// Write the stream for `cfg` to `out` and return its ground truth.
/// Invalid configurations fail before anything is written.
pub fn gen_synthetic(cfg: &GenConfig, out: &mut dyn Write) -> Result<GroundTruth> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gt = GroundTruth { config: cfg.clone(), hourly: vec![0; 24], ..GroundTruth::default() };
    if cfg.n_tweets == 0 {
        return Ok(gt);
    }
    let span = cfg.end - cfg.start;
    let t0 = cfg.arrival_t0_days * DAY as f64;
    let trunc = 1.0 - (-(span as f64) / t0).exp();
    let gauss = Normal::new(0.0, cfg.cluster_sigma_km).expect("sigma validated");
    let nyc_jitter = Normal::new(0.0, 2.0).expect("constant");

    let mut users: Vec<User> = Vec::with_capacity(cfg.n_users);
    for i in 0..cfg.n_users {
        let arrival = if rng.random_bool(cfg.burst_fraction) {
            let u: f64 = rng.random();
            cfg.start + ((-(1.0 - u * trunc).ln()) * t0) as i64
        } else {
            rng.random_range(cfg.start..cfg.end)
        };
        let followers = rng.random_range(0..5000);
        let change = if rng.random_bool(cfg.profile_change_fraction) && arrival + 1 < cfg.end {
            Some((rng.random_range(arrival + 1..cfg.end), followers + rng.random_range(1..500)))
        } else {
            None
        };
        let mut centroids = Vec::new();
        if rng.random_bool(cfg.geo_fraction) {
            let k = rng.random_range(1..=cfg.clusters_per_user);
            for c in 0..k {
                let (lon, lat) = if c == 0 && rng.random_bool(cfg.nyc_fraction) {
                    offset_km(NYC.0, NYC.1, nyc_jitter.sample(&mut rng), nyc_jitter.sample(&mut rng))
                } else {
                    (rng.random_range(-179.0..179.0), rng.random_range(-60.0..70.0))
                };
                centroids.push((lon, lat, rng.random_range(1.0..4.0)));
            }
        }
        users.push(User {
            id: USER_ID_BASE + i as u64 * 7,
            arrival,
            account_created_at: cfg.start - rng.random_range(DAY..2000 * DAY),
            statuses_count: rng.random_range(1..20_000),
            friends_count: rng.random_range(0..2000),
            followers,
            change,
            location: LOCATIONS[rng.random_range(0..LOCATIONS.len())],
            centroids,
        });
    }

    // one status at each user's arrival, the rest spread after arrival
    let mut events: Vec<Event> = Vec::with_capacity(cfg.n_tweets);
    let mut order: Vec<usize> = (0..cfg.n_users).collect();
    order.shuffle(&mut rng);
    for &u in order.iter().take(cfg.n_tweets) {
        events.push(Event { t: users[u].arrival, user: u });
    }
    while events.len() < cfg.n_tweets {
        let u = rng.random_range(0..cfg.n_users);
        let t = rng.random_range(users[u].arrival..cfg.end);
        events.push(Event { t, user: u });
    }
    events.sort_by_key(|e| (e.t, e.user));

    let vocab = pseudo_words(cfg.vocabulary, &mut rng);
    let text_gen = TextGen {
        zipf: Zipf::new(vocab.len() as f64, 1.0).expect("vocabulary non-empty"),
        vocab,
        term_fraction: cfg.term_fraction,
    };
    let mention_zipf = Zipf::new(cfg.n_users as f64, cfg.mention_zipf_exponent).expect("validated");
    let mut mention_rank: Vec<usize> = (0..cfg.n_users).collect();
    mention_rank.shuffle(&mut rng);

    // historical originals, ids odd and spread over the stream's id range
    let n_hist = (cfg.n_tweets / 20).max(1);
    let mut hist_ids = BTreeSet::new();
    while hist_ids.len() < n_hist {
        hist_ids.insert(2 * (ID_BASE + rng.random_range(0..cfg.n_tweets as u64)) + 1);
    }
    let historical: Vec<Historical> = hist_ids
        .into_iter()
        .map(|id| Historical {
            id,
            user: rng.random_range(0..cfg.n_users),
            created_at: cfg.start - rng.random_range(DAY..365 * DAY),
            text: text_gen.text("", &mut rng),
        })
        .collect();

    let mut first_seen: HashMap<usize, i64> = HashMap::new();
    let mut last_seen: HashMap<usize, i64> = HashMap::new();
    let mut seen_before_change: HashMap<usize, bool> = HashMap::new();
    let mut seen_after_change: HashMap<usize, bool> = HashMap::new();
    let mut observe = |u: usize, t: i64, users: &[User]| {
        first_seen.entry(u).and_modify(|f| *f = (*f).min(t)).or_insert(t);
        last_seen.entry(u).and_modify(|f| *f = (*f).max(t)).or_insert(t);
        if let Some((at, _)) = users[u].change {
            if t >= at {
                seen_after_change.insert(u, true);
            } else {
                seen_before_change.insert(u, true);
            }
        }
    };
    let mut embedded_used: BTreeSet<usize> = BTreeSet::new();
    let mut term_days: BTreeMap<String, u64> = BTreeMap::new();
    let mut out_deg: HashMap<u64, u64> = HashMap::new();
    let mut in_deg: HashMap<u64, u64> = HashMap::new();
    let mut planted_counts: HashMap<(usize, usize), u64> = HashMap::new();
    let mut authors: Vec<usize> = Vec::with_capacity(events.len());
    let mut line = Vec::with_capacity(512);

    for (k, ev) in events.iter().enumerate() {
        let user = &users[ev.user];
        let id = 2 * (ID_BASE + k as u64);
        authors.push(ev.user);

        if rng.random_bool(cfg.delete_fraction) && k > 0 {
            let j = rng.random_range(0..k);
            let doc = json!({"delete": {"status": {"id": 2 * (ID_BASE + j as u64), "user_id": users[authors[j]].id}}});
            writeln!(out, "{doc}")?;
            gt.deletes += 1;
        }
        if rng.random_bool(cfg.malformed_fraction) {
            writeln!(out, "{{\"id\": {id}, \"text\": \"unterminated")?;
            gt.malformed += 1;
        }

        let created = if rng.random_bool(cfg.iso_time_fraction) {
            chrono::DateTime::from_timestamp(ev.t, 0).unwrap_or_default().format("%Y-%m-%dT%H:%M:%SZ").to_string()
        } else {
            format_created_at(ev.t)
        };

        let mut mentioned = BTreeSet::new();
        let n_mentions = match rng.random_range(0..100) {
            0..50 => 0,
            50..80 => 1,
            80..95 => 2,
            _ => 3,
        };
        for _ in 0..n_mentions {
            let r = mention_zipf.sample(&mut rng) as usize;
            mentioned.insert(users[mention_rank[(r - 1).min(cfg.n_users - 1)]].id);
        }
        let prefix: String = mentioned.iter().map(|m| format!("@u{m} ")).collect();
        let roll: f64 = rng.random();
        let mut doc = serde_json::Map::new();
        doc.insert("id".into(), json!(id));
        doc.insert("created_at".into(), json!(created));
        doc.insert("user".into(), user.json(ev.t));
        doc.insert(
            "entities".into(),
            json!({"user_mentions": mentioned.iter().map(|m| json!({"id": m, "screen_name": format!("u{m}")})).collect::<Vec<_>>()}),
        );
        let text;
        if roll < cfg.retweet_fraction {
            let h = rng.random_range(0..historical.len());
            let orig = &historical[h];
            let author = &users[orig.user];
            text = retweet_text(author.id, &orig.text);
            doc.insert(
                "retweeted_status".into(),
                json!({
                    "id": orig.id,
                    "text": orig.text,
                    "created_at": format_created_at(orig.created_at),
                    "user": author.json(orig.created_at),
                }),
            );
            gt.retweet_rows += 1;
            gt.tweet_rows += 1;
            gt.user_snapshot_rows += 1;
            observe(orig.user, orig.created_at, &users);
            if embedded_used.insert(h) && has_term(&orig.text) {
                *term_days.entry(utc_date(orig.created_at).to_string()).or_default() += 1;
            }
        } else {
            text = text_gen.text(prefix.trim_end(), &mut rng);
            if roll < cfg.retweet_fraction + cfg.reply_fraction && k > 0 {
                let j = rng.random_range(0..k);
                doc.insert("in_reply_to_status_id".into(), json!(2 * (ID_BASE + j as u64)));
                if rng.random_bool(cfg.reply_without_user_fraction) {
                    doc.insert("in_reply_to_user_id".into(), Value::Null);
                    gt.replies_without_user += 1;
                } else {
                    doc.insert("in_reply_to_user_id".into(), json!(users[authors[j]].id));
                }
                gt.reply_events += 1;
            }
            if !user.centroids.is_empty() {
                let total: f64 = user.centroids.iter().map(|c| c.2).sum();
                let mut pick = rng.random_range(0.0..total);
                let mut ci = 0;
                for (i, c) in user.centroids.iter().enumerate() {
                    if pick < c.2 {
                        ci = i;
                        break;
                    }
                    pick -= c.2;
                }
                let (clon, clat, _) = user.centroids[ci];
                let (lon, lat) = offset_km(clon, clat, gauss.sample(&mut rng), gauss.sample(&mut rng));
                doc.insert("coordinates".into(), json!({"type": "Point", "coordinates": [lon, lat]}));
                *planted_counts.entry((ev.user, ci)).or_default() += 1;
                gt.geo_statuses += 1;
            }
        }
        if has_term(&text) {
            *term_days.entry(utc_date(ev.t).to_string()).or_default() += 1;
        }
        doc.insert("text".into(), json!(text));
        for m in &mentioned {
            *out_deg.entry(user.id).or_default() += 1;
            *in_deg.entry(*m).or_default() += 1;
        }
        gt.mention_rows += mentioned.len() as u64;
        gt.tweet_rows += 1;
        gt.user_snapshot_rows += 1;
        gt.statuses += 1;
        gt.hourly[utc_hour(ev.t) as usize] += 1;
        observe(ev.user, ev.t, &users);

        line.clear();
        serde_json::to_writer(&mut line, &Value::Object(doc)).map_err(|e| Error::Invalid(e.to_string()))?;
        line.push(b'\n');
        out.write_all(&line)?;
    }

    gt.documents = gt.statuses + gt.deletes + gt.malformed;
    gt.embedded_distinct = embedded_used.len() as u64;
    gt.distinct_tweets = gt.statuses + gt.embedded_distinct;
    gt.distinct_users = first_seen.len() as u64;
    gt.term_daily = term_days;
    gt.mention_out_degree = degree_counts(&out_deg);
    gt.mention_in_degree = degree_counts(&in_deg);
    for (i, u) in users.iter().enumerate() {
        if let Some((at, after)) = u.change {
            let observed = seen_before_change.contains_key(&i) && seen_after_change.contains_key(&i);
            gt.update_rows += u64::from(observed);
            gt.profile_changes.push(PlantedChange {
                user_id: u.id,
                at,
                followers_before: u.followers,
                followers_after: after,
                observed,
            });
        }
        if let (Some(&f), Some(&l)) = (first_seen.get(&i), last_seen.get(&i)) {
            gt.first_seen.insert(u.id, f);
            gt.latest_followers.insert(u.id, u.followers_at(l));
        }
        if !u.centroids.is_empty() {
            let centroids: Vec<(f64, f64, u64)> = u
                .centroids
                .iter()
                .enumerate()
                .map(|(ci, c)| (c.0, c.1, planted_counts.get(&(i, ci)).copied().unwrap_or(0)))
                .collect();
            if centroids.iter().any(|c| c.2 > 0) {
                gt.planted_clusters.push(PlantedUser { user_id: u.id, centroids });
            }
        }
    }
    Ok(gt)
}

fn degree_counts(per_user: &HashMap<u64, u64>) -> Vec<(u64, u64)> {
    let mut h: BTreeMap<u64, u64> = BTreeMap::new();
    for &d in per_user.values() {
        *h.entry(d).or_default() += 1;
    }
    h.into_iter().collect()
}

/// Generate into memory.
pub fn gen_to_vec(cfg: &GenConfig) -> Result<(Vec<u8>, GroundTruth)> {
    let mut buf = Vec::new();
    let gt = gen_synthetic(cfg, &mut buf)?;
    Ok((buf, gt))
}
