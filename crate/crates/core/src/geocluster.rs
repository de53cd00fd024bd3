//! Per-user location clustering: friend-of-friend grouping of GPS points,
//! iterative 3σ trimming, top-k selection and mean local tweeting hour.
//!
//! Local time is approximated from longitude (lon/15 hours), not political
//! time zones.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::path::Path;

use rayon::prelude::*;

use crate::codec::BulkWriter;
use crate::error::Result;
use crate::htm::{angular_distance, latlon_to_htm, Vec3, EARTH_RADIUS_KM, MAX_LEVEL};
use crate::model::ClusterSummary;
use crate::store::{ByHtmEntry, ByUserEntry, Snapshot};

pub const DEFAULT_LINKING_KM: f64 = 1.0;
pub const DEFAULT_TOP_K: usize = 3;
/// Above this many points a spatial grid replaces the all-pairs scan.
pub const BRUTE_FORCE_MAX: usize = 256;
pub const MAX_TRIM_ITERATIONS: usize = 100;
const HOUR_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
    pub created_at: i64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64, created_at: i64) -> Self {
        GeoPoint { lon, lat, created_at }
    }

    pub fn unit(&self) -> Vec3 {
        Vec3::from_lonlat(self.lon, self.lat)
    }
}

fn dist_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    angular_distance(a.lon, a.lat, b.lon, b.lat).1
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Friend-of-friend partition: points closer than `linking_km` (strictly)
/// are linked, clusters are the connected components. Each cluster lists
/// point indices ascending; clusters are ordered by their smallest index.
pub fn fof_cluster(points: &[GeoPoint], linking_km: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut uf = UnionFind::new(n);
    if n <= BRUTE_FORCE_MAX {
        for i in 0..n {
            for j in i + 1..n {
                if dist_km(&points[i], &points[j]) < linking_km {
                    uf.union(i, j);
                }
            }
        }
    } else {
        // Bucket unit vectors on a 3-D grid whose cell edge is the chord of
        // the linking angle; linked pairs are then in adjacent cells.
        let theta = (linking_km / EARTH_RADIUS_KM).min(std::f64::consts::PI);
        let cell = 2.0 * (theta / 2.0).sin() * (1.0 + 1e-9);
        let key = |v: Vec3| ((v.x / cell).floor() as i64, (v.y / cell).floor() as i64, (v.z / cell).floor() as i64);
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        let units: Vec<Vec3> = points.iter().map(GeoPoint::unit).collect();
        for (i, v) in units.iter().enumerate() {
            grid.entry(key(*v)).or_default().push(i);
        }
        for (i, v) in units.iter().enumerate() {
            let (cx, cy, cz) = key(*v);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else { continue };
                        for &j in bucket {
                            if j > i && dist_km(&points[i], &points[j]) < linking_km {
                                uf.union(i, j);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Result of [`trim_and_moments`].
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub lon: f64,
    pub lat: f64,
    pub sigma_km: f64,
    /// Indices (into the input slice) of points that survived trimming.
    pub kept: Vec<usize>,
    pub iterations: usize,
}

fn centroid_of(points: &[GeoPoint], idx: &[usize]) -> Vec3 {
    let sum = idx.iter().fold(Vec3::new(0.0, 0.0, 0.0), |acc, &i| acc + points[i].unit());
    if sum.norm() < 1e-15 {
        points[idx[0]].unit()
    } else {
        sum.normalized()
    }
}

/// Centroid (normalized mean unit vector) and RMS radius, trimming points
/// beyond 3σ until none are removed, at most three remain, σ is zero, or
/// the iteration cap is hit.
///
/// # Panics
/// If `points` is empty.
pub fn trim_and_moments(points: &[GeoPoint]) -> Moments {
    assert!(!points.is_empty(), "trim_and_moments needs at least one point");
    let mut kept: Vec<usize> = (0..points.len()).collect();
    let mut iterations = 0;
    loop {
        let p0 = points[kept[0]];
        if kept.iter().all(|&i| points[i].lon == p0.lon && points[i].lat == p0.lat) {
            return Moments { lon: p0.lon, lat: p0.lat, sigma_km: 0.0, kept, iterations };
        }
        let c = centroid_of(points, &kept);
        let (clon, clat) = c.to_lonlat();
        let center = GeoPoint::new(clon, clat, 0);
        let d: Vec<f64> = kept.iter().map(|&i| dist_km(&center, &points[i])).collect();
        let sigma = (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt();
        if kept.len() <= 3 || sigma == 0.0 || iterations >= MAX_TRIM_ITERATIONS {
            return Moments { lon: clon, lat: clat, sigma_km: sigma, kept, iterations };
        }
        let next: Vec<usize> =
            kept.iter().zip(&d).filter(|(_, &di)| di <= 3.0 * sigma).map(|(&i, _)| i).collect();
        if next.len() == kept.len() {
            return Moments { lon: clon, lat: clat, sigma_km: sigma, kept, iterations };
        }
        kept = next;
        iterations += 1;
    }
}

/// Local solar hour of one timestamp at a longitude, in [0, 24).
pub fn local_hour(created_at: i64, lon: f64) -> f64 {
    let utc = created_at.rem_euclid(86_400) as f64 / 3600.0;
    (utc + lon / 15.0).rem_euclid(24.0)
}

/// Circular mean of local hours; `None` when the phasors cancel.
pub fn mean_local_hour(points: &[GeoPoint]) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let (mut s, mut c) = (0.0, 0.0);
    for p in points {
        let a = local_hour(p.created_at, p.lon) * TAU / 24.0;
        s += a.sin();
        c += a.cos();
    }
    let n = points.len() as f64;
    if (s / n).hypot(c / n) < HOUR_EPS {
        return None;
    }
    let mut h = s.atan2(c) * 24.0 / TAU;
    if h < 0.0 {
        h += 24.0;
    }
    if h >= 24.0 - HOUR_EPS {
        h = 0.0;
    }
    Some(h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterConfig {
    pub linking_km: f64,
    pub k: usize,
    /// Restrict [`cluster_all_users`] to an inclusive user-id range.
    pub user_range: Option<(u64, u64)>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { linking_km: DEFAULT_LINKING_KM, k: DEFAULT_TOP_K, user_range: None }
    }
}

/// Summaries of the `k` largest clusters: by total size, then earliest
/// first tweet, then smaller centroid HTM id. Ranks run from 1.
pub fn top_clusters(user_id: u64, points: &[GeoPoint], clusters: &[Vec<usize>], k: usize) -> Vec<ClusterSummary> {
    let mut cands: Vec<(ClusterSummary, i64)> = clusters
        .iter()
        .map(|members| {
            let pts: Vec<GeoPoint> = members.iter().map(|&i| points[i]).collect();
            let m = trim_and_moments(&pts);
            let kept: Vec<GeoPoint> = m.kept.iter().map(|&i| pts[i]).collect();
            let first = pts.iter().map(|p| p.created_at).min().expect("non-empty cluster");
            let htm_id = latlon_to_htm(m.lon, m.lat, MAX_LEVEL).expect("centroid is a valid point").raw();
            let s = ClusterSummary {
                user_id,
                rank: 0,
                lon: m.lon,
                lat: m.lat,
                sigma_km: m.sigma_km,
                cardinality_total: pts.len() as u64,
                cardinality_kept: kept.len() as u64,
                mean_local_hour: mean_local_hour(&kept),
                htm_id,
                region_id: None,
            };
            (s, first)
        })
        .collect();
    cands.sort_by(|(a, fa), (b, fb)| {
        b.cardinality_total.cmp(&a.cardinality_total).then(fa.cmp(fb)).then(a.htm_id.cmp(&b.htm_id))
    });
    cands
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (mut s, _))| {
            s.rank = (i + 1) as u8;
            s
        })
        .collect()
}

/// Cluster one user's points end to end.
pub fn cluster_user(user_id: u64, points: &[GeoPoint], cfg: &ClusterConfig) -> Vec<ClusterSummary> {
    if points.is_empty() {
        return Vec::new();
    }
    let clusters = fof_cluster(points, cfg.linking_km);
    top_clusters(user_id, points, &clusters, cfg.k)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClusterReport {
    pub users: u64,
    pub rows: u64,
}

/// Geo points of every user, walking the tweet-by-user index in user order
/// and taking coordinates from the covering HTM index. A tweet present in
/// several runs counts once.
pub fn user_points(snap: &Snapshot, range: Option<(u64, u64)>) -> Result<Vec<(u64, Vec<GeoPoint>)>> {
    let by_user: Vec<ByUserEntry> = snap.read_index()?;
    let geo: HashMap<u64, (f64, f64)> =
        snap.read_index::<ByHtmEntry>()?.into_iter().map(|e| (e.locator, (e.lon, e.lat))).collect();
    let mut out: Vec<(u64, Vec<GeoPoint>)> = Vec::new();
    let mut last_tweet: Option<(u64, u64)> = None;
    for e in by_user {
        if range.is_some_and(|(lo, hi)| e.user_id < lo || e.user_id > hi) {
            continue;
        }
        let Some(&(lon, lat)) = geo.get(&e.locator) else { continue };
        if out.last().is_none_or(|(u, _)| *u != e.user_id) {
            out.push((e.user_id, Vec::new()));
        }
        if last_tweet == Some((e.user_id, e.tweet_id)) {
            continue;
        }
        last_tweet = Some((e.user_id, e.tweet_id));
        out.last_mut().expect("pushed").1.push(GeoPoint::new(lon, lat, e.created_at));
    }
    Ok(out)
}

/// Cluster every geo-tagged user and write the summaries as a
/// `cluster_summary` bulk file.
pub fn cluster_all_users(snap: &Snapshot, cfg: &ClusterConfig, out: impl AsRef<Path>) -> Result<ClusterReport> {
    let users = user_points(snap, cfg.user_range)?;
    let summaries: Vec<Vec<ClusterSummary>> = users.par_iter().map(|(u, pts)| cluster_user(*u, pts, cfg)).collect();
    let mut w = BulkWriter::create(out, crate::codec::TableId::ClusterSummary)?;
    for s in summaries.iter().flatten() {
        w.push(s)?;
    }
    let rows = w.finish()?;
    Ok(ClusterReport { users: users.len() as u64, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Offset a point by (east, north) kilometres.
    fn offset(lon: f64, lat: f64, east_km: f64, north_km: f64) -> (f64, f64) {
        let dlat = north_km / EARTH_RADIUS_KM;
        let dlon = east_km / (EARTH_RADIUS_KM * lat.to_radians().cos());
        (lon + dlon.to_degrees(), lat + dlat.to_degrees())
    }

    fn oracle_partition(points: &[GeoPoint], link: f64) -> Vec<Vec<usize>> {
        // transitive closure by repeated relabeling
        let n = points.len();
        let mut label: Vec<usize> = (0..n).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                for j in 0..n {
                    if i != j && label[j] < label[i] && dist_km(&points[i], &points[j]) < link {
                        label[i] = label[j];
                        changed = true;
                    }
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, l) in label.into_iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        groups.into_values().collect()
    }

    #[test]
    fn direct_and_chained_links() {
        let (b_lon, b_lat) = offset(10.0, 50.0, 0.9, 0.0);
        let (c_lon, c_lat) = offset(10.0, 50.0, 1.8, 0.0);
        let pts = [GeoPoint::new(10.0, 50.0, 0), GeoPoint::new(b_lon, b_lat, 0), GeoPoint::new(c_lon, c_lat, 0)];
        assert_eq!(fof_cluster(&pts[..2], 1.0), vec![vec![0, 1]]);
        assert_eq!(fof_cluster(&pts, 1.0), vec![vec![0, 1, 2]]);
        let far = [GeoPoint::new(10.0, 50.0, 0), GeoPoint::new(c_lon, c_lat, 0)];
        assert_eq!(fof_cluster(&far, 1.0).len(), 2);
    }

    #[test]
    fn fof_matches_closure_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let pts: Vec<GeoPoint> = (0..500)
                .map(|_| {
                    let (lon, lat) = offset(-74.0, 40.7, rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
                    GeoPoint::new(lon, lat, 0)
                })
                .collect();
            assert_eq!(fof_cluster(&pts, 1.0), oracle_partition(&pts, 1.0));
        }
    }

    #[test]
    fn grid_path_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<GeoPoint> = (0..BRUTE_FORCE_MAX + 900)
            .map(|_| {
                let (lon, lat) = offset(179.9, -16.0, rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
                let lon = if lon >= 180.0 { lon - 360.0 } else { lon };
                GeoPoint::new(lon, lat, 0)
            })
            .collect();
        let grid = fof_cluster(&pts, 1.0);
        let mut uf = UnionFind::new(pts.len());
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if dist_km(&pts[i], &pts[j]) < 1.0 {
                    uf.union(i, j);
                }
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..pts.len() {
            let r = uf.find(i);
            groups.entry(r).or_default().push(i);
        }
        let mut brute: Vec<Vec<usize>> = groups.into_values().collect();
        brute.sort_by_key(|g| g[0]);
        assert_eq!(grid, brute);
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<GeoPoint> = (0..300)
            .map(|_| {
                let (lon, lat) = offset(2.35, 48.85, rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                GeoPoint::new(lon, lat, 0)
            })
            .collect();
        let base = fof_cluster(&pts, 1.0);
        let perm: Vec<usize> = (0..pts.len()).rev().collect();
        let shuffled: Vec<GeoPoint> = perm.iter().map(|&i| pts[i]).collect();
        let mut mapped: Vec<Vec<usize>> = fof_cluster(&shuffled, 1.0)
            .into_iter()
            .map(|g| {
                let mut g: Vec<usize> = g.into_iter().map(|i| perm[i]).collect();
                g.sort();
                g
            })
            .collect();
        mapped.sort_by_key(|g| g[0]);
        assert_eq!(mapped, base);
    }

    #[test]
    fn trimming_cases() {
        let same = vec![GeoPoint::new(1.0, 2.0, 0); 5];
        let m = trim_and_moments(&same);
        assert!((m.lon - 1.0).abs() < 1e-9 && (m.lat - 2.0).abs() < 1e-9);
        assert!(m.sigma_km < 1e-9);
        assert_eq!(m.kept.len(), 5);
        let one = trim_and_moments(&[GeoPoint::new(-3.0, 7.0, 0)]);
        assert_eq!((one.kept.len(), one.sigma_km), (1, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts: Vec<GeoPoint> = (0..30)
            .map(|_| {
                let r = 0.1 * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..TAU);
                let (lon, lat) = offset(13.4, 52.5, r * a.cos(), r * a.sin());
                GeoPoint::new(lon, lat, 0)
            })
            .collect();
        let (olon, olat) = offset(13.4, 52.5, 10.0, 0.0);
        pts.push(GeoPoint::new(olon, olat, 0));
        let m = trim_and_moments(&pts);
        assert_eq!(m.kept.len(), 30);
        assert!(!m.kept.contains(&30));
        assert!(dist_km(&GeoPoint::new(m.lon, m.lat, 0), &GeoPoint::new(13.4, 52.5, 0)) < 0.1);
        assert!(m.sigma_km <= 0.1);
    }

    #[test]
    fn local_hours() {
        assert_eq!(mean_local_hour(&[GeoPoint::new(0.0, 0.0, 12 * 3600)]), Some(12.0));
        let h = mean_local_hour(&[GeoPoint::new(0.0, 0.0, 23 * 3600), GeoPoint::new(0.0, 0.0, 3600)]).unwrap();
        assert!(h.abs() < 1e-9, "{h}");
        assert_eq!(mean_local_hour(&[GeoPoint::new(0.0, 0.0, 0), GeoPoint::new(0.0, 0.0, 12 * 3600)]), None);
        // 12:00 UTC at 90°E is 18:00 local
        assert!((mean_local_hour(&[GeoPoint::new(90.0, 0.0, 12 * 3600)]).unwrap() - 18.0).abs() < 1e-9);
        assert!((local_hour(-3600, -15.0) - 22.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_and_ties() {
        let a = GeoPoint::new(0.0, 0.0, 50);
        let b = GeoPoint::new(1.0, 0.0, 10);
        let pts = [a, b];
        let s = cluster_user(1, &pts, &ClusterConfig::default());
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].lon.round(), 1.0, "earlier first tweet ranks first");
        assert_eq!((s[0].rank, s[1].rank), (1, 2));
        let many: Vec<GeoPoint> = (0..6).map(|i| GeoPoint::new(i as f64, 0.0, 0)).collect();
        let s = cluster_user(2, &many, &ClusterConfig { k: 3, ..ClusterConfig::default() });
        assert_eq!(s.len(), 3);
        assert!(s.windows(2).all(|w| w[0].htm_id < w[1].htm_id));
        assert!(cluster_user(3, &[], &ClusterConfig::default()).is_empty());
    }
}
