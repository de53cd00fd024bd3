//! Administrative regions from GeoJSON: loading, boundary simplification
//! and assignment of points to the containing region.
//!
//! Containment is a planar even-odd test in lon/lat. Rings that cross the
//! antimeridian are unwrapped and clipped into an eastern and a western
//! part so every stored ring lies within [-180, 180].

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::htm::{arc_distance, Vec3, EARTH_RADIUS_KM};
use crate::model::ClusterSummary;

pub type Ring = Vec<(f64, f64)>;

pub const DEFAULT_SIMPLIFY_KM: f64 = 1.0;
const BOUNDARY_EPS: f64 = 1e-12;
const GRID_DEG: f64 = 1.0;

/// Longitude/latitude box; `min_lon > max_lon` means it wraps across the
/// antimeridian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    fn of_ring(ring: &[(f64, f64)]) -> BBox {
        let mut b = BBox { min_lon: f64::MAX, min_lat: f64::MAX, max_lon: f64::MIN, max_lat: f64::MIN };
        for &(lon, lat) in ring {
            b.min_lon = b.min_lon.min(lon);
            b.max_lon = b.max_lon.max(lon);
            b.min_lat = b.min_lat.min(lat);
            b.max_lat = b.max_lat.max(lat);
        }
        b
    }

    pub fn wraps(&self) -> bool {
        self.min_lon > self.max_lon
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        if lat < self.min_lat || lat > self.max_lat {
            return false;
        }
        if self.wraps() {
            lon >= self.min_lon || lon <= self.max_lon
        } else {
            lon >= self.min_lon && lon <= self.max_lon
        }
    }

    /// Smallest (possibly wrapping) box holding all `parts`.
    fn union(parts: &[BBox]) -> BBox {
        let min_lat = parts.iter().map(|b| b.min_lat).fold(f64::MAX, f64::min);
        let max_lat = parts.iter().map(|b| b.max_lat).fold(f64::MIN, f64::max);
        let mut spans: Vec<(f64, f64)> = parts.iter().map(|b| (b.min_lon, b.max_lon)).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (lo, hi) in spans {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        // the box is the complement of the widest longitude gap on the circle
        let first = merged[0];
        let last = *merged.last().expect("non-empty");
        let mut best_gap = first.0 + 360.0 - last.1;
        let (mut min_lon, mut max_lon) = (first.0, last.1);
        for w in merged.windows(2) {
            let gap = w[1].0 - w[0].1;
            if gap > best_gap {
                best_gap = gap;
                min_lon = w[1].0;
                max_lon = w[0].1;
            }
        }
        BBox { min_lon, min_lat, max_lon, max_lat }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub outer: Ring,
    pub holes: Vec<Ring>,
    pub bbox: BBox,
}

impl Polygon {
    fn new(outer: Ring, holes: Vec<Ring>) -> Polygon {
        let bbox = BBox::of_ring(&outer);
        Polygon { outer, holes, bbox }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub region_id: u64,
    pub name: String,
    /// 0 country, 1 state, 2 county.
    pub level: u8,
    pub parent: Option<u64>,
    pub polygons: Vec<Polygon>,
    pub bbox: BBox,
}

impl Region {
    pub fn new(region_id: u64, name: impl Into<String>, level: u8, polygons: Vec<Polygon>) -> Region {
        let bbox = BBox::union(&polygons.iter().map(|p| p.bbox).collect::<Vec<_>>());
        Region { region_id, name: name.into(), level, parent: None, polygons, bbox }
    }

    pub fn outer_ring_count(&self) -> usize {
        self.polygons.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.polygons.iter().map(|p| p.outer.len() + p.holes.iter().map(Vec::len).sum::<usize>()).sum()
    }

    /// Simplify every ring.
    pub fn simplified(&self, tolerance_km: f64) -> Region {
        let polygons = self
            .polygons
            .iter()
            .map(|p| {
                Polygon::new(
                    simplify_polygon(&p.outer, tolerance_km),
                    p.holes.iter().map(|h| simplify_polygon(h, tolerance_km)).collect(),
                )
            })
            .collect();
        Region { polygons, ..self.clone() }
    }
}

fn on_segment(lon: f64, lat: f64, a: (f64, f64), b: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (lat - a.1) - (b.1 - a.1) * (lon - a.0);
    let scale = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1.0);
    if cross.abs() > BOUNDARY_EPS * scale {
        return false;
    }
    lon >= a.0.min(b.0) - BOUNDARY_EPS
        && lon <= a.0.max(b.0) + BOUNDARY_EPS
        && lat >= a.1.min(b.1) - BOUNDARY_EPS
        && lat <= a.1.max(b.1) + BOUNDARY_EPS
}

fn on_ring(lon: f64, lat: f64, ring: &[(f64, f64)]) -> bool {
    ring.windows(2).any(|w| on_segment(lon, lat, w[0], w[1]))
}

/// Even-odd ray cast towards +lon.
fn inside_ring(lon: f64, lat: f64, ring: &[(f64, f64)]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let ((x1, y1), (x2, y2)) = (w[0], w[1]);
        if (y1 > lat) != (y2 > lat) {
            let x = x1 + (lat - y1) * (x2 - x1) / (y2 - y1);
            if lon < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn in_polygon(lon: f64, lat: f64, p: &Polygon) -> bool {
    if !p.bbox.contains(lon, lat) {
        return false;
    }
    if on_ring(lon, lat, &p.outer) {
        return true;
    }
    if !inside_ring(lon, lat, &p.outer) {
        return false;
    }
    for h in &p.holes {
        if on_ring(lon, lat, h) {
            return true;
        }
        if inside_ring(lon, lat, h) {
            return false;
        }
    }
    true
}

/// Inside an outer ring and outside its holes; boundaries count as inside.
pub fn point_in_region(lon: f64, lat: f64, region: &Region) -> bool {
    region.bbox.contains(lon, lat) && region.polygons.iter().any(|p| in_polygon(lon, lat, p))
}

/// Douglas–Peucker on the sphere: a vertex survives when its angular
/// distance from the simplified arc exceeds `tolerance_km / R`. The ring
/// stays closed with at least four vertices, and tolerance 0 returns it
/// unchanged.
pub fn simplify_polygon(ring: &[(f64, f64)], tolerance_km: f64) -> Ring {
    let n = ring.len();
    if tolerance_km <= 0.0 || n <= 4 {
        return ring.to_vec();
    }
    let tol = tolerance_km / EARTH_RADIUS_KM;
    let v: Vec<Vec3> = ring.iter().map(|&(lon, lat)| Vec3::from_lonlat(lon, lat)).collect();
    let last = n - 1;
    let far = (1..last).max_by(|&a, &b| v[0].angle_to(v[a]).total_cmp(&v[0].angle_to(v[b]))).expect("n > 4");
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[far] = true;
    keep[last] = true;
    let mut stack = vec![(0, far), (far, last)];
    while let Some((a, b)) = stack.pop() {
        if b <= a + 1 {
            continue;
        }
        let (mut worst, mut dmax) = (a, -1.0);
        for i in a + 1..b {
            let d = arc_distance(v[i], v[a], v[b]);
            if d > dmax {
                dmax = d;
                worst = i;
            }
        }
        if dmax > tol {
            keep[worst] = true;
            stack.push((a, worst));
            stack.push((worst, b));
        }
    }
    // a ring needs three distinct corners
    while keep.iter().filter(|k| **k).count() < 4 {
        let kept: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
        let mut best = None;
        for w in kept.windows(2) {
            for i in w[0] + 1..w[1] {
                let d = arc_distance(v[i], v[w[0]], v[w[1]]);
                if best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((i, d));
                }
            }
        }
        match best {
            Some((i, _)) => keep[i] = true,
            None => break,
        }
    }
    (0..n).filter(|&i| keep[i]).map(|i| ring[i]).collect()
}

/// Unwrap longitudes so consecutive vertices differ by at most 180°.
fn unwrap(ring: &[(f64, f64)]) -> Ring {
    let mut out = Vec::with_capacity(ring.len());
    let mut prev: Option<f64> = None;
    for &(lon, lat) in ring {
        let mut l = lon;
        if let Some(p) = prev {
            while l - p > 180.0 {
                l -= 360.0;
            }
            while l - p < -180.0 {
                l += 360.0;
            }
        }
        out.push((l, lat));
        prev = Some(l);
    }
    out
}

/// Sutherland–Hodgman against the half-plane `lon <= x` (or `>= x`).
fn clip(ring: &[(f64, f64)], x: f64, keep_below: bool) -> Ring {
    let inside = |p: (f64, f64)| if keep_below { p.0 <= x } else { p.0 >= x };
    let mut out: Ring = Vec::new();
    let pts = &ring[..ring.len() - 1];
    for i in 0..pts.len() {
        let cur = pts[i];
        let prev = pts[(i + pts.len() - 1) % pts.len()];
        let cross = |a: (f64, f64), b: (f64, f64)| {
            let t = (x - a.0) / (b.0 - a.0);
            (x, a.1 + t * (b.1 - a.1))
        };
        match (inside(prev), inside(cur)) {
            (true, true) => out.push(cur),
            (true, false) => out.push(cross(prev, cur)),
            (false, true) => {
                out.push(cross(prev, cur));
                out.push(cur);
            }
            (false, false) => {}
        }
    }
    out.dedup();
    if let Some(&f) = out.first() {
        out.push(f);
    }
    out
}

fn shift(ring: Ring, by: f64) -> Ring {
    ring.into_iter().map(|(lon, lat)| (lon + by, lat)).collect()
}

/// Split rings that cross ±180 into parts inside [-180, 180].
fn split_antimeridian(outer: &[(f64, f64)], holes: &[Ring]) -> Vec<Polygon> {
    let o = unwrap(outer);
    let anchor = o[0].0;
    let hs: Vec<Ring> = holes
        .iter()
        .map(|h| {
            let u = unwrap(h);
            let k = ((anchor - u[0].0) / 360.0).round() * 360.0;
            shift(u, k)
        })
        .collect();
    let min = o.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    let max = o.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let (edge, wrap) = if max > 180.0 {
        (180.0, -360.0)
    } else if min < -180.0 {
        (-180.0, 360.0)
    } else {
        return vec![Polygon::new(o, hs)];
    };
    // the part on the far side of `edge` is shifted back by one turn
    let far_is_above = edge > 0.0;
    let mut parts = Vec::new();
    for (keep_below, by) in [(true, 0.0), (false, wrap)] {
        let (keep_below, by) = if far_is_above { (keep_below, by) } else { (!keep_below, by) };
        let outer_part = clip(&o, edge, keep_below);
        if outer_part.len() < 4 {
            continue;
        }
        let holes_part: Vec<Ring> =
            hs.iter().map(|h| clip(h, edge, keep_below)).filter(|h| h.len() >= 4).map(|h| shift(h, by)).collect();
        parts.push(Polygon::new(shift(outer_part, by), holes_part));
    }
    parts
}

/// Regions of one admin level with a 1° grid over polygon boxes.
#[derive(Clone, Debug, Default)]
pub struct RegionSet {
    regions: Vec<Region>,
    grid: HashMap<(i32, i32), Vec<usize>>,
}

fn cell(lon: f64, lat: f64) -> (i32, i32) {
    ((lon / GRID_DEG).floor() as i32, (lat / GRID_DEG).floor() as i32)
}

impl RegionSet {
    pub fn new(mut regions: Vec<Region>) -> RegionSet {
        regions.sort_by_key(|r| r.region_id);
        let mut grid: HashMap<(i32, i32), Vec<usize>> = HashMap::new();
        for (ri, r) in regions.iter().enumerate() {
            for p in &r.polygons {
                let (x0, y0) = cell(p.bbox.min_lon, p.bbox.min_lat);
                let (x1, y1) = cell(p.bbox.max_lon, p.bbox.max_lat);
                for x in x0..=x1 {
                    for y in y0..=y1 {
                        let v = grid.entry((x, y)).or_default();
                        if v.last() != Some(&ri) {
                            v.push(ri);
                        }
                    }
                }
            }
        }
        RegionSet { regions, grid }
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn simplified(&self, tolerance_km: f64) -> RegionSet {
        RegionSet::new(self.regions.iter().map(|r| r.simplified(tolerance_km)).collect())
    }

    /// Smallest id of a region containing the point.
    pub fn locate(&self, lon: f64, lat: f64) -> Option<u64> {
        let mut cands: BTreeSet<usize> = BTreeSet::new();
        let (cx, cy) = cell(lon, lat);
        // points on a cell edge may belong to a box stored in the neighbor
        for dx in -1..=0 {
            for dy in -1..=0 {
                if let Some(v) = self.grid.get(&(cx + dx, cy + dy)) {
                    cands.extend(v.iter().copied());
                }
            }
        }
        cands.into_iter().find(|&i| point_in_region(lon, lat, &self.regions[i])).map(|i| self.regions[i].region_id)
    }
}

/// Set `region_id` on each summary (cleared when no region contains it).
pub fn assign_regions(summaries: &[ClusterSummary], set: &RegionSet) -> Vec<ClusterSummary> {
    summaries
        .par_iter()
        .map(|s| ClusterSummary { region_id: set.locate(s.lon, s.lat), ..s.clone() })
        .collect()
}

/// Features skipped by [`load_regions`], with reasons.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: Vec<String>,
}

fn parse_ring(v: &Value) -> std::result::Result<Ring, String> {
    let pts = v.as_array().ok_or("ring is not an array")?;
    let mut ring = Vec::with_capacity(pts.len() + 1);
    for p in pts {
        let c = p.as_array().ok_or("position is not an array")?;
        let (Some(lon), Some(lat)) = (c.first().and_then(Value::as_f64), c.get(1).and_then(Value::as_f64)) else {
            return Err("position needs numeric lon and lat".into());
        };
        if !lon.is_finite() || !(-90.0..=90.0).contains(&lat) || !(-540.0..=540.0).contains(&lon) {
            return Err(format!("position out of range: [{lon}, {lat}]"));
        }
        ring.push((lon, lat));
    }
    if ring.first() != ring.last() {
        let f = ring[0];
        ring.push(f);
    }
    if ring.len() < 4 {
        return Err(format!("ring has {} vertices, need at least 4", ring.len()));
    }
    Ok(ring)
}

fn parse_polygon(v: &Value) -> std::result::Result<Vec<Polygon>, String> {
    let rings = v.as_array().ok_or("polygon is not an array of rings")?;
    let outer = parse_ring(rings.first().ok_or("polygon without rings")?)?;
    let holes = rings[1..].iter().map(parse_ring).collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(split_antimeridian(&outer, &holes))
}

fn parse_id(v: &Value) -> Option<u64> {
    v.as_u64().or_else(|| v.as_str().and_then(|s| s.parse().ok()))
}

fn parse_feature(f: &Value, level: u8) -> std::result::Result<Region, String> {
    let props = f.get("properties").cloned().unwrap_or(Value::Null);
    let id = f
        .get("id")
        .and_then(parse_id)
        .or_else(|| props.get("id").and_then(parse_id))
        .ok_or("missing numeric id")?;
    let name = props.get("name").and_then(Value::as_str).unwrap_or_default().to_string();
    let geom = f.get("geometry").ok_or("missing geometry")?;
    let coords = geom.get("coordinates").ok_or("geometry without coordinates")?;
    let polygons = match geom.get("type").and_then(Value::as_str) {
        Some("Polygon") => parse_polygon(coords)?,
        Some("MultiPolygon") => {
            let mut all = Vec::new();
            for p in coords.as_array().ok_or("multipolygon is not an array")? {
                all.extend(parse_polygon(p)?);
            }
            all
        }
        other => return Err(format!("unsupported geometry type {other:?}")),
    };
    if polygons.is_empty() {
        return Err("no polygon parts".into());
    }
    let mut r = Region::new(id, name, level, polygons);
    r.parent = props.get("parent").and_then(parse_id);
    Ok(r)
}

/// Parse a GeoJSON FeatureCollection of Polygon/MultiPolygon features.
pub fn parse_regions(text: &str, level: u8) -> Result<(RegionSet, LoadReport)> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Format(format!("GeoJSON: {e}")))?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Format("GeoJSON: expected a FeatureCollection".into()))?;
    let mut regions = Vec::new();
    let mut report = LoadReport::default();
    for (i, f) in features.iter().enumerate() {
        match parse_feature(f, level) {
            Ok(r) => regions.push(r),
            Err(e) => report.skipped.push(format!("feature {i}: {e}")),
        }
    }
    report.loaded = regions.len();
    Ok((RegionSet::new(regions), report))
}

pub fn load_regions(path: impl AsRef<Path>, level: u8) -> Result<(RegionSet, LoadReport)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::at(path))?;
    parse_regions(&text, level)
}

/// A GeoJSON FeatureCollection of axis-aligned square cells, `n` × `n`
/// starting at (`lon0`, `lat0`), ids from 1 in row-major order.
pub fn grid_geojson(lon0: f64, lat0: f64, size_deg: f64, n: usize) -> String {
    let mut features = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let (x, y) = (lon0 + col as f64 * size_deg, lat0 + row as f64 * size_deg);
            let ring = vec![[x, y], [x + size_deg, y], [x + size_deg, y + size_deg], [x, y + size_deg], [x, y]];
            features.push(serde_json::json!({
                "type": "Feature",
                "id": row * n + col + 1,
                "properties": {"name": format!("cell-{row}-{col}")},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }));
        }
    }
    serde_json::json!({"type": "FeatureCollection", "features": features}).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Ring {
        vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
    }

    /// Winding number by summed signed angles.
    fn winding(lon: f64, lat: f64, ring: &[(f64, f64)]) -> i32 {
        let mut total = 0.0;
        for w in ring.windows(2) {
            let a = (w[0].1 - lat).atan2(w[0].0 - lon);
            let b = (w[1].1 - lat).atan2(w[1].0 - lon);
            let mut d = b - a;
            while d > std::f64::consts::PI {
                d -= std::f64::consts::TAU;
            }
            while d < -std::f64::consts::PI {
                d += std::f64::consts::TAU;
            }
            total += d;
        }
        (total / std::f64::consts::TAU).round() as i32
    }

    #[test]
    fn square_containment() {
        let r = Region::new(1, "sq", 0, vec![Polygon::new(square(0.0, 0.0, 10.0, 10.0), vec![])]);
        assert_eq!(r.bbox, BBox { min_lon: 0.0, min_lat: 0.0, max_lon: 10.0, max_lat: 10.0 });
        assert!(point_in_region(5.0, 5.0, &r));
        assert!(!point_in_region(15.0, 5.0, &r));
        assert!(point_in_region(10.0, 5.0, &r), "edge counts as inside");
        assert!(point_in_region(0.0, 0.0, &r), "vertex counts as inside");
        let holed = Region::new(2, "h", 0, vec![Polygon::new(square(0.0, 0.0, 10.0, 10.0), vec![square(4.0, 4.0, 6.0, 6.0)])]);
        assert!(!point_in_region(5.0, 5.0, &holed));
        assert!(point_in_region(4.0, 5.0, &holed));
        assert!(point_in_region(2.0, 5.0, &holed));
    }

    #[test]
    fn even_odd_matches_winding_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // a star-shaped simple polygon
        let ring: Ring = (0..=24)
            .map(|i| {
                let a = (i % 24) as f64 / 24.0 * std::f64::consts::TAU;
                let r = if i % 2 == 0 { 10.0 } else { 4.0 };
                (20.0 + r * a.cos(), 30.0 + r * a.sin())
            })
            .collect();
        let region = Region::new(1, "star", 0, vec![Polygon::new(ring.clone(), vec![])]);
        for _ in 0..10_000 {
            let (lon, lat) = (rng.random_range(8.0..32.0), rng.random_range(18.0..42.0));
            assert_eq!(point_in_region(lon, lat, &region), winding(lon, lat, &ring) != 0, "({lon}, {lat})");
        }
    }

    #[test]
    fn geojson_loading() {
        let (set, rep) = parse_regions(r#"{"type":"FeatureCollection","features":[]}"#, 0).unwrap();
        assert!(set.is_empty() && rep.skipped.is_empty());
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","id":7,"properties":{"name":"two"},"geometry":{"type":"MultiPolygon","coordinates":[
                [[[0,0],[1,0],[1,1],[0,1],[0,0]]],
                [[[5,5],[6,5],[6,6],[5,6],[5,5]]]]}},
            {"type":"Feature","properties":{"id":"8","name":"bad"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,1]]]}},
            {"type":"Feature","properties":{"name":"noid"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,0]]]}},
            {"type":"Feature","id":9,"properties":{"parent":7},"geometry":{"type":"Point","coordinates":[0,0]}}
        ]}"#;
        let (set, rep) = parse_regions(text, 1).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.regions()[0].outer_ring_count(), 2);
        assert_eq!(set.regions()[0].level, 1);
        assert_eq!(rep.skipped.len(), 3);
        assert_eq!(set.locate(5.5, 5.5), Some(7));
        assert_eq!(set.locate(3.0, 3.0), None);
        assert!(parse_regions("[1,2]", 0).is_err());
    }

    #[test]
    fn antimeridian_split() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","id":1,"properties":{},"geometry":{"type":"Polygon","coordinates":[[[170,-10],[-170,-10],[-170,10],[170,10],[170,-10]]]}}]}"#;
        let (set, _) = parse_regions(text, 0).unwrap();
        let r = &set.regions()[0];
        assert_eq!(r.polygons.len(), 2);
        for p in &r.polygons {
            assert!(p.outer.iter().all(|&(lon, _)| (-180.0..=180.0).contains(&lon)));
        }
        assert!(r.bbox.wraps());
        assert_eq!((r.bbox.min_lon, r.bbox.max_lon), (170.0, -170.0));
        assert_eq!(set.locate(175.0, 0.0), Some(1));
        assert_eq!(set.locate(-175.0, 5.0), Some(1));
        assert_eq!(set.locate(-180.0, 5.0), Some(1));
        assert_eq!(set.locate(0.0, 0.0), None);
        assert_eq!(set.locate(-160.0, 0.0), None);
    }

    #[test]
    fn simplification() {
        let ring = square(0.0, 0.0, 1.0, 1.0);
        assert_eq!(simplify_polygon(&ring, 0.0), ring);
        // densified square: extra vertices lie on the edges
        let mut dense: Ring = Vec::new();
        for w in ring.windows(2) {
            for k in 0..10 {
                let t = k as f64 / 10.0;
                dense.push((w[0].0 + t * (w[1].0 - w[0].0), w[0].1 + t * (w[1].1 - w[0].1)));
            }
        }
        dense.push(dense[0]);
        let s = simplify_polygon(&dense, 0.001);
        assert!(s.len() < dense.len());
        assert!(s.len() >= 4);
        assert_eq!(s.first(), s.last());
        // great-circle collinear points along the equator vanish
        let eq: Ring = vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (3.0, 3.0), (0.0, 3.0), (0.0, 0.0)];
        let s = simplify_polygon(&eq, 1e-6);
        assert!(!s.contains(&(1.0, 0.0)) && !s.contains(&(2.0, 0.0)));
        // tiny triangle-ish ring keeps four vertices
        let tiny = vec![(0.0, 0.0), (1e-6, 0.0), (2e-6, 0.0), (1e-6, 1e-6), (0.0, 0.0)];
        assert!(simplify_polygon(&tiny, 100.0).len() >= 4);
    }

    #[test]
    fn simplification_deviation_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 400;
        let ring: Ring = (0..=n)
            .map(|i| {
                let a = (i % n) as f64 / n as f64 * std::f64::consts::TAU;
                let r = 1.0 + 0.05 * rng.random::<f64>();
                (10.0 + r * a.cos(), 45.0 + r * a.sin())
            })
            .collect();
        let tol_km = 2.0;
        let s = simplify_polygon(&ring, tol_km);
        assert!(s.len() < ring.len());
        let vs: Vec<Vec3> = s.iter().map(|&(lon, lat)| Vec3::from_lonlat(lon, lat)).collect();
        for &(lon, lat) in &ring {
            let p = Vec3::from_lonlat(lon, lat);
            let d = vs.windows(2).map(|w| arc_distance(p, w[0], w[1])).fold(f64::MAX, f64::min);
            assert!(d * EARTH_RADIUS_KM <= tol_km + 1e-9);
        }
        // subsequence of the input
        let mut it = ring.iter();
        assert!(s.iter().all(|v| it.any(|x| x == v)));
    }

    #[test]
    fn grid_assignment() {
        let (set, rep) = parse_regions(&grid_geojson(-10.0, 20.0, 1.0, 10), 2).unwrap();
        assert_eq!((set.len(), rep.skipped.len()), (100, 0));
        let summaries: Vec<ClusterSummary> = (0..100)
            .map(|i| ClusterSummary {
                user_id: i,
                rank: 1,
                lon: -10.0 + (i % 10) as f64 + 0.5,
                lat: 20.0 + (i / 10) as f64 + 0.5,
                sigma_km: 0.0,
                cardinality_total: 1,
                cardinality_kept: 1,
                mean_local_hour: None,
                htm_id: 0,
                region_id: None,
            })
            .collect();
        let out = assign_regions(&summaries, &set);
        for s in &out {
            assert_eq!(s.region_id, Some(s.user_id + 1));
        }
        // shared edge: smallest id wins
        assert_eq!(set.locate(-9.0, 20.5), Some(1));
    }
}
