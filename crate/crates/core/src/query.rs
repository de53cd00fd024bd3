//! Network views and statistics over a committed snapshot: hourly and
//! per-term daily histograms, degree distributions, circle counts and the
//! user-discovery series with its saturation fit.
//!
//! All time buckets are UTC.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate};
use serde_json::json;

use crate::codec::{Key, TableId};
use crate::error::{Error, Result};
use crate::htm::{angular_distance, cover_circle_with, CoverConfig, HtmRange};
use crate::model::{MentionEdge, RetweetEdge, TweetRow};
use crate::store::{ByHtmEntry, Snapshot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Mention,
    Reply,
    Retweet,
}

impl FromStr for EdgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mention" => Ok(EdgeKind::Mention),
            "reply" => Ok(EdgeKind::Reply),
            "retweet" => Ok(EdgeKind::Retweet),
            _ => Err(Error::Invalid(format!("unknown edge kind {s:?} (mention, reply, retweet)"))),
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Mention => "mention",
            EdgeKind::Reply => "reply",
            EdgeKind::Retweet => "retweet",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    Directed,
    Undirected,
    Mutual,
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "directed" => Ok(View::Directed),
            "undirected" | "undirected_weighted" => Ok(View::Undirected),
            "mutual" => Ok(View::Mutual),
            _ => Err(Error::Invalid(format!("unknown view {s:?} (directed, undirected, mutual)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "out" => Ok(Direction::Out),
            "in" => Ok(Direction::In),
            _ => Err(Error::Invalid(format!("unknown direction {s:?} (out, in)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DegreeMode {
    /// Edge events per user, like `COUNT(*) GROUP BY user`.
    #[default]
    Events,
    /// Distinct neighbours per user.
    Distinct,
}

impl FromStr for DegreeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "events" => Ok(DegreeMode::Events),
            "distinct" => Ok(DegreeMode::Distinct),
            _ => Err(Error::Invalid(format!("unknown degree mode {s:?} (events, distinct)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CircleMode {
    /// Everything whose HTM id falls in the cover.
    #[default]
    Range,
    /// Range hits within the radius.
    Exact,
}

impl FromStr for CircleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "range" => Ok(CircleMode::Range),
            "exact" => Ok(CircleMode::Exact),
            _ => Err(Error::Invalid(format!("unknown circle mode {s:?} (range, exact)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NetworkEdge {
    pub src_user_id: u64,
    pub dst_user_id: u64,
    pub created_at: i64,
    pub kind: EdgeKind,
}

/// Unordered pair with `a <= b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeightedPair {
    pub a: u64,
    pub b: u64,
    pub weight: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    Directed(Vec<NetworkEdge>),
    Undirected(Vec<WeightedPair>),
    Mutual(Vec<(u64, u64)>),
}

impl Network {
    pub fn len(&self) -> usize {
        match self {
            Network::Directed(v) => v.len(),
            Network::Undirected(v) => v.len(),
            Network::Mutual(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One TSV line per edge or pair.
    pub fn write_tsv(&self, out: &mut dyn Write) -> Result<()> {
        match self {
            Network::Directed(v) => {
                for e in v {
                    writeln!(out, "{}\t{}\t{}\t{}", e.src_user_id, e.dst_user_id, e.created_at, e.kind)?;
                }
            }
            Network::Undirected(v) => {
                for p in v {
                    writeln!(out, "{}\t{}\t{}", p.a, p.b, p.weight)?;
                }
            }
            Network::Mutual(v) => {
                for (a, b) in v {
                    writeln!(out, "{a}\t{b}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeResult {
    pub network: Network,
    /// Reply events whose target user could not be found.
    pub unresolved: u64,
}

fn run_range(run_id: u32) -> std::ops::Range<Key> {
    [run_id as i128, i128::MIN, i128::MIN, i128::MIN]..[run_id as i128 + 1, i128::MIN, i128::MIN, i128::MIN]
}

/// Every directed edge event of `kind` in run `run_id`, sorted. Replies
/// come from non-embedded tweets; a reply without a stored target user is
/// resolved through the tweet table by the replied-to tweet id.
pub fn directed_edges(snap: &Snapshot, kind: EdgeKind, run_id: u32) -> Result<(Vec<NetworkEdge>, u64)> {
    let mut out = Vec::new();
    let mut unresolved = 0;
    match kind {
        EdgeKind::Mention => {
            for m in snap.scan::<MentionEdge>(run_range(run_id)) {
                let m = m?;
                out.push(NetworkEdge {
                    src_user_id: m.source_user_id,
                    dst_user_id: m.mentioned_user_id,
                    created_at: m.created_at,
                    kind,
                });
            }
        }
        EdgeKind::Retweet => {
            for r in snap.scan::<RetweetEdge>(run_range(run_id)) {
                let r = r?;
                out.push(NetworkEdge {
                    src_user_id: r.source_user_id,
                    dst_user_id: r.original_user_id,
                    created_at: r.created_at,
                    kind,
                });
            }
        }
        EdgeKind::Reply => {
            let mut pending: Vec<(u64, i64, u64)> = Vec::new();
            for t in snap.scan::<TweetRow>(run_range(run_id)) {
                let t = t?;
                if t.embedded {
                    continue;
                }
                match (t.in_reply_to_user_id, t.in_reply_to_tweet_id) {
                    (Some(dst), _) => out.push(NetworkEdge {
                        src_user_id: t.user_id,
                        dst_user_id: dst,
                        created_at: t.created_at,
                        kind,
                    }),
                    (None, Some(target)) => pending.push((t.user_id, t.created_at, target)),
                    (None, None) => {}
                }
            }
            if !pending.is_empty() {
                let wanted: HashSet<u64> = pending.iter().map(|p| p.2).collect();
                let mut authors: HashMap<u64, u64> = HashMap::new();
                for t in snap.scan_all::<TweetRow>() {
                    let t = t?;
                    if wanted.contains(&t.tweet_id) {
                        authors.entry(t.tweet_id).or_insert(t.user_id);
                    }
                }
                for (src, created_at, target) in pending {
                    match authors.get(&target) {
                        Some(&dst) => out.push(NetworkEdge { src_user_id: src, dst_user_id: dst, created_at, kind }),
                        None => unresolved += 1,
                    }
                }
            }
        }
    }
    out.sort_unstable();
    Ok((out, unresolved))
}

/// Per unordered pair, the number of events in either direction.
pub fn undirected_weighted(edges: &[NetworkEdge]) -> Vec<WeightedPair> {
    let mut w: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for e in edges {
        let (a, b) = (e.src_user_id.min(e.dst_user_id), e.src_user_id.max(e.dst_user_id));
        *w.entry((a, b)).or_default() += 1;
    }
    w.into_iter().map(|((a, b), weight)| WeightedPair { a, b, weight }).collect()
}

/// Unordered pairs with events in both directions. Self-loops are not pairs.
pub fn mutual_pairs(edges: &[NetworkEdge]) -> Vec<(u64, u64)> {
    let directed: HashSet<(u64, u64)> = edges.iter().map(|e| (e.src_user_id, e.dst_user_id)).collect();
    let mut out: Vec<(u64, u64)> =
        directed.iter().filter(|&&(a, b)| a < b && directed.contains(&(b, a))).copied().collect();
    out.sort_unstable();
    out
}

pub fn network_edges(snap: &Snapshot, kind: EdgeKind, view: View, run_id: u32) -> Result<EdgeResult> {
    let (edges, unresolved) = directed_edges(snap, kind, run_id)?;
    let network = match view {
        View::Directed => Network::Directed(edges),
        View::Undirected => Network::Undirected(undirected_weighted(&edges)),
        View::Mutual => Network::Mutual(mutual_pairs(&edges)),
    };
    Ok(EdgeResult { network, unresolved })
}

/// Tweets of the run per UTC hour, embedded tweets excluded. Empty hours
/// are omitted.
pub fn hourly_histogram(snap: &Snapshot, run_id: u32) -> Result<Vec<(u8, u64)>> {
    let parts = snap.par_frames::<TweetRow, [u64; 24]>(|rows| {
        let mut h = [0u64; 24];
        for t in rows.iter().filter(|t| t.run_id == run_id && !t.embedded) {
            h[utc_hour(t.created_at) as usize] += 1;
        }
        Ok(h)
    })?;
    let mut total = [0u64; 24];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    Ok((0u8..24).zip(total).filter(|&(_, c)| c > 0).collect())
}

pub fn utc_hour(t: i64) -> u8 {
    (t.rem_euclid(86_400) / 3600) as u8
}

pub fn utc_date(t: i64) -> NaiveDate {
    DateTime::from_timestamp(t, 0).map(|d| d.date_naive()).unwrap_or_default()
}

/// Tweets of the run containing `term` per UTC date, via the filtered text
/// index. Counts tweets, embedded originals included.
pub fn term_daily_histogram(snap: &Snapshot, run_id: u32, term: &str) -> Result<Vec<(NaiveDate, u64)>> {
    let idx = snap.text_index(true)?;
    let mut days: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    for (_, created_at) in idx.search(term, run_id)? {
        *days.entry(utc_date(created_at)).or_default() += 1;
    }
    Ok(days.into_iter().collect())
}

/// Number of users per degree value.
pub fn degree_histogram(edges: &[NetworkEdge], direction: Direction, mode: DegreeMode) -> Vec<(u64, u64)> {
    let mut per_user: HashMap<u64, (u64, HashSet<u64>)> = HashMap::new();
    for e in edges {
        let (u, v) = match direction {
            Direction::Out => (e.src_user_id, e.dst_user_id),
            Direction::In => (e.dst_user_id, e.src_user_id),
        };
        let slot = per_user.entry(u).or_default();
        slot.0 += 1;
        if mode == DegreeMode::Distinct {
            slot.1.insert(v);
        }
    }
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for (events, neigh) in per_user.values() {
        let d = match mode {
            DegreeMode::Events => *events,
            DegreeMode::Distinct => neigh.len() as u64,
        };
        *hist.entry(d).or_default() += 1;
    }
    hist.into_iter().collect()
}

pub fn degree_distribution(
    snap: &Snapshot,
    run_id: u32,
    kind: EdgeKind,
    direction: Direction,
    mode: DegreeMode,
) -> Result<Vec<(u64, u64)>> {
    let (edges, _) = directed_edges(snap, kind, run_id)?;
    Ok(degree_histogram(&edges, direction, mode))
}

fn circle_cover(lon: f64, lat: f64, radius_arcmin: f64) -> Result<Vec<HtmRange>> {
    cover_circle_with(lon, lat, radius_arcmin, &CoverConfig::default())
}

/// HTM index entries of the run inside the cover of the circle, in index
/// order; with `Exact` only those within the radius.
pub fn circle_points(
    snap: &Snapshot,
    run_id: u32,
    lon: f64,
    lat: f64,
    radius_arcmin: f64,
    mode: CircleMode,
) -> Result<Vec<ByHtmEntry>> {
    let cover = circle_cover(lon, lat, radius_arcmin)?;
    let entries: Vec<ByHtmEntry> = snap.read_index()?;
    let radius_rad = (radius_arcmin / 60.0).to_radians();
    let mut out = Vec::new();
    for r in &cover {
        let lo = entries.partition_point(|e| (e.run_id, e.htm_id) < (run_id, r.start));
        let hi = entries.partition_point(|e| (e.run_id, e.htm_id) <= (run_id, r.end));
        for e in &entries[lo..hi] {
            if mode == CircleMode::Range || angular_distance(lon, lat, e.lon, e.lat).0 <= radius_rad {
                out.push(*e);
            }
        }
    }
    Ok(out)
}

pub fn circle_count(
    snap: &Snapshot,
    run_id: u32,
    lon: f64,
    lat: f64,
    radius_arcmin: f64,
    mode: CircleMode,
) -> Result<u64> {
    Ok(circle_points(snap, run_id, lon, lat, radius_arcmin, mode)?.len() as u64)
}

/// GeoJSON FeatureCollection of the given points.
pub fn points_geojson(points: &[ByHtmEntry]) -> String {
    let features: Vec<_> = points
        .iter()
        .map(|e| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [e.lon, e.lat]},
                "properties": {
                    "tweet_id": e.tweet_id,
                    "user_id": e.user_id,
                    "created_at": e.created_at,
                    "htm_id": e.htm_id,
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features}).to_string()
}

/// First-seen times of every user, sorted.
pub fn first_seen_times(snap: &Snapshot) -> Result<Vec<i64>> {
    let mut out = Vec::with_capacity(snap.row_count(TableId::User) as usize);
    for u in snap.users() {
        out.push(u?.first_seen_at);
    }
    out.sort_unstable();
    Ok(out)
}

/// Cumulative number of distinct users by the UTC date they were first seen.
/// Users known only from retweeted historical tweets are included.
pub fn user_discovery_series(snap: &Snapshot) -> Result<Vec<(NaiveDate, u64)>> {
    Ok(cumulative_by_date(&first_seen_times(snap)?))
}

pub fn cumulative_by_date(sorted_times: &[i64]) -> Vec<(NaiveDate, u64)> {
    let mut out: Vec<(NaiveDate, u64)> = Vec::new();
    for (i, &t) in sorted_times.iter().enumerate() {
        let d = utc_date(t);
        match out.last_mut() {
            Some((last, n)) if *last == d => *n = i as u64 + 1,
            _ => out.push((d, i as u64 + 1)),
        }
    }
    out
}

/// `N(t) = c + a (1 - exp(-t / t0)) + b t`, t in days.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscoveryFit {
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub t0_days: f64,
    pub rms: f64,
}

impl DiscoveryFit {
    pub fn eval(&self, t_days: f64) -> f64 {
        self.c + self.a * (1.0 - (-t_days / self.t0_days).exp()) + self.b * t_days
    }
}

/// Least-squares fit of (t_days, N) samples. Linear in (c, a, b) for fixed
/// t0; t0 is found by golden-section search on log t0 after a coarse scan.
pub fn fit_discovery_curve(samples: &[(f64, f64)]) -> Result<DiscoveryFit> {
    if samples.len() < 4 {
        return Err(Error::Invalid(format!("discovery fit needs at least 4 samples, got {}", samples.len())));
    }
    let span = samples.iter().map(|s| s.0).fold(f64::MIN, f64::max) - samples.iter().map(|s| s.0).fold(f64::MAX, f64::min);
    if !(span > 0.0) {
        return Err(Error::Invalid("discovery fit needs samples at distinct times".into()));
    }
    let sse = |log_t0: f64| solve_linear(samples, log_t0.exp()).map_or(f64::INFINITY, |f| f.1);
    let (lo, hi) = ((span * 1e-3).ln(), (span * 10.0).ln());
    let steps = 200;
    let mut best = (f64::INFINITY, lo);
    for i in 0..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let s = sse(x);
        if s < best.0 {
            best = (s, x);
        }
    }
    let h = (hi - lo) / steps as f64;
    let (mut a, mut b) = ((best.1 - h).max(lo), (best.1 + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (sse(x1), sse(x2));
    for _ in 0..100 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = sse(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = sse(x2);
        }
    }
    let t0 = ((a + b) / 2.0).exp();
    let (coef, err) = solve_linear(samples, t0)
        .ok_or_else(|| Error::Invalid("discovery fit is degenerate".into()))?;
    Ok(DiscoveryFit { c: coef[0], a: coef[1], b: coef[2], t0_days: t0, rms: (err / samples.len() as f64).sqrt() })
}

/// Normal equations for (c, a, b) at fixed t0; returns coefficients and SSE.
fn solve_linear(samples: &[(f64, f64)], t0: f64) -> Option<([f64; 3], f64)> {
    let mut m = [[0.0f64; 4]; 3];
    for &(t, y) in samples {
        let x = [1.0, 1.0 - (-t / t0).exp(), t];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += x[i] * x[j];
            }
            m[i][3] += x[i] * y;
        }
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                let pivot = m[col];
                for (x, p) in m[r].iter_mut().zip(pivot).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    let coef = [m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]];
    let err = samples
        .iter()
        .map(|&(t, y)| {
            let p = coef[0] + coef[1] * (1.0 - (-t / t0).exp()) + coef[2] * t;
            (p - y).powi(2)
        })
        .sum();
    Some((coef, err))
}

/// Samples of the discovery curve for fitting: cumulative users at each
/// `step_secs` boundary from `start` to `end`, with t in days since `start`.
/// Users first seen before `start` form the constant term.
pub fn discovery_samples(sorted_times: &[i64], start: i64, end: i64, step_secs: i64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut t = start;
    while t <= end {
        let n = sorted_times.partition_point(|&x| x <= t);
        out.push(((t - start) as f64 / 86_400.0, n as f64));
        t += step_secs.max(1);
    }
    out
}

/// Write `(bucket, count)` rows as TSV.
pub fn write_histogram<K: fmt::Display>(rows: &[(K, u64)], out: &mut dyn Write) -> Result<()> {
    for (k, c) in rows {
        writeln!(out, "{k}\t{c}")?;
    }
    Ok(())
}

/// Distinct users seen in the run as tweet authors, embedded included.
pub fn run_users(snap: &Snapshot, run_id: u32) -> Result<BTreeSet<u64>> {
    let mut out = BTreeSet::new();
    for t in snap.scan::<TweetRow>(run_range(run_id)) {
        out.insert(t?.user_id);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e(src: u64, dst: u64) -> NetworkEdge {
        NetworkEdge { src_user_id: src, dst_user_id: dst, created_at: 0, kind: EdgeKind::Mention }
    }

    #[test]
    fn views_on_small_graphs() {
        let edges = vec![e(1, 2), e(1, 2), e(2, 1)];
        assert_eq!(undirected_weighted(&edges), vec![WeightedPair { a: 1, b: 2, weight: 3 }]);
        assert_eq!(mutual_pairs(&edges), vec![(1, 2)]);
        assert!(mutual_pairs(&[e(1, 2)]).is_empty());
        assert!(mutual_pairs(&[e(3, 3)]).is_empty());
    }

    #[test]
    fn views_match_hash_join_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let edges: Vec<NetworkEdge> = (0..10_000).map(|_| e(rng.random_range(1..60), rng.random_range(1..60))).collect();
        // oracle: self-join of the directed list on reversed endpoints
        let mut by_pair: HashMap<(u64, u64), u64> = HashMap::new();
        for x in &edges {
            *by_pair.entry((x.src_user_id, x.dst_user_id)).or_default() += 1;
        }
        let mut want_mutual = Vec::new();
        let mut want_und = BTreeMap::new();
        for (&(a, b), &n) in &by_pair {
            let back = if a == b { 0 } else { by_pair.get(&(b, a)).copied().unwrap_or(0) };
            if a < b && back > 0 {
                want_mutual.push((a, b));
            }
            if a <= b {
                want_und.insert((a, b), n + back);
            } else if back == 0 {
                want_und.insert((b, a), n);
            }
        }
        want_mutual.sort_unstable();
        let und = undirected_weighted(&edges);
        assert_eq!(und.iter().map(|p| ((p.a, p.b), p.weight)).collect::<BTreeMap<_, _>>(), want_und);
        let mutual = mutual_pairs(&edges);
        assert_eq!(mutual, want_mutual);
        let und_map: HashMap<(u64, u64), u64> = und.iter().map(|p| ((p.a, p.b), p.weight)).collect();
        for p in &mutual {
            assert!(und_map[p] >= 2);
        }
    }

    #[test]
    fn degree_modes() {
        let edges = vec![e(1, 2), e(1, 3), e(2, 3)];
        assert_eq!(degree_histogram(&edges, Direction::Out, DegreeMode::Events), vec![(1, 1), (2, 1)]);
        assert_eq!(degree_histogram(&edges, Direction::In, DegreeMode::Events), vec![(1, 1), (2, 1)]);
        let twice = vec![e(1, 2), e(1, 2)];
        assert_eq!(degree_histogram(&twice, Direction::Out, DegreeMode::Events), vec![(2, 1)]);
        assert_eq!(degree_histogram(&twice, Direction::Out, DegreeMode::Distinct), vec![(1, 1)]);
    }

    #[test]
    fn degree_accounting_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let edges: Vec<NetworkEdge> = (0..5000).map(|_| e(rng.random_range(1..300), rng.random_range(1..300))).collect();
        for dir in [Direction::Out, Direction::In] {
            let h = degree_histogram(&edges, dir, DegreeMode::Events);
            assert_eq!(h.iter().map(|(d, c)| d * c).sum::<u64>(), edges.len() as u64);
        }
    }

    #[test]
    fn hours_and_dates() {
        // 2009-06-01 05:10, 05:59 and 17:00 UTC
        let day = 1_243_814_400;
        let hours: Vec<u8> = [day + 5 * 3600 + 600, day + 5 * 3600 + 3540, day + 17 * 3600].map(utc_hour).to_vec();
        assert_eq!(hours, vec![5, 5, 17]);
        assert_eq!(utc_date(day).to_string(), "2009-06-01");
        assert_eq!(utc_hour(-1), 23);
        assert_eq!(cumulative_by_date(&[day]), vec![(utc_date(day), 1)]);
        let series = cumulative_by_date(&[day, day + 10, day + 86_400 * 3]);
        assert_eq!(series.iter().map(|r| r.1).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn fit_recovers_planted_curve() {
        let truth = DiscoveryFit { c: 50.0, a: 1000.0, b: 20.0, t0_days: 3.0, rms: 0.0 };
        let samples: Vec<(f64, f64)> = (0..=300).map(|i| i as f64 * 0.1).map(|t| (t, truth.eval(t))).collect();
        let fit = fit_discovery_curve(&samples).unwrap();
        assert!((fit.t0_days - 3.0).abs() < 1e-3, "{fit:?}");
        assert!((fit.a - 1000.0).abs() < 0.1 && (fit.b - 20.0).abs() < 0.01 && (fit.c - 50.0).abs() < 0.1);
        assert!(fit_discovery_curve(&samples[..3]).is_err());
    }

    #[test]
    fn parse_enums() {
        assert_eq!("mutual".parse::<View>().unwrap(), View::Mutual);
        assert_eq!("reply".parse::<EdgeKind>().unwrap(), EdgeKind::Reply);
        assert!("sideways".parse::<Direction>().is_err());
        assert_eq!(CircleMode::default(), CircleMode::Range);
        assert_eq!(DegreeMode::default(), DegreeMode::Events);
    }
}
