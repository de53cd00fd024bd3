//! Hierarchical Triangular Mesh: point lookup, trixel geometry and circle
//! covers expressed as ranges of level-20 IDs.
//!
//! The sphere starts as an octahedron with eight root trixels numbered 8..15
//! (S0..S3, N0..N3). Every trixel splits into four children through the
//! normalized midpoints of its edges; a child ID is the parent ID shifted
//! left by two bits plus the child index. A level-`L` ID therefore has a
//! leading `1` bit, three root bits and `2 L` path bits.
//!
//! Lookups test containment in enumeration order and take the first hit, so
//! points on shared edges and vertices resolve deterministically.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub const MAX_LEVEL: u8 = 20;
/// Mean Earth radius (IUGG), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;
/// Slack for the inclusive half-space tests.
pub const CONTAINS_EPS: f64 = 1e-12;
pub const DEFAULT_COVER_LEVEL: u8 = 14;
pub const DEFAULT_MAX_RANGES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    /// Unit vector for a longitude/latitude pair in degrees.
    pub fn from_lonlat(lon: f64, lat: f64) -> Self {
        let (lon, lat) = (lon.to_radians(), lat.to_radians());
        let (slat, clat) = lat.sin_cos();
        let (slon, clon) = lon.sin_cos();
        Vec3::new(clat * clon, clat * slon, slat)
    }

    /// Longitude in [-180, 180) and latitude in degrees.
    pub fn to_lonlat(self) -> (f64, f64) {
        let lat = self.z.atan2((self.x * self.x + self.y * self.y).sqrt()).to_degrees();
        let mut lon = self.y.atan2(self.x).to_degrees();
        if lon >= 180.0 {
            lon -= 360.0;
        }
        (lon, lat)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    /// Angle between two unit vectors, radians. Accurate at all separations.
    pub fn angle_to(self, o: Vec3) -> f64 {
        self.cross(o).norm().atan2(self.dot(o))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

const V0: Vec3 = Vec3::new(0.0, 0.0, 1.0);
const V1: Vec3 = Vec3::new(1.0, 0.0, 0.0);
const V2: Vec3 = Vec3::new(0.0, 1.0, 0.0);
const V3: Vec3 = Vec3::new(-1.0, 0.0, 0.0);
const V4: Vec3 = Vec3::new(0.0, -1.0, 0.0);
const V5: Vec3 = Vec3::new(0.0, 0.0, -1.0);

/// Root trixels in enumeration order; index `i` has ID `8 + i`.
const ROOTS: [[Vec3; 3]; 8] = [
    [V1, V5, V2], // S0
    [V2, V5, V3], // S1
    [V3, V5, V4], // S2
    [V4, V5, V1], // S3
    [V1, V0, V4], // N0
    [V4, V0, V3], // N1
    [V3, V0, V2], // N2
    [V2, V0, V1], // N3
];

/// A spherical triangle with counter-clockwise unit-vector corners.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trixel {
    pub v: [Vec3; 3],
}

impl Trixel {
    pub fn root(index: usize) -> Trixel {
        Trixel { v: ROOTS[index] }
    }

    /// Children 0..3: `(v0,w2,w1)`, `(v1,w0,w2)`, `(v2,w1,w0)`, `(w0,w1,w2)`
    /// where `wk` is the normalized midpoint of the edge opposite `vk`.
    pub fn children(&self) -> [Trixel; 4] {
        let [v0, v1, v2] = self.v;
        let w0 = (v1 + v2).normalized();
        let w1 = (v0 + v2).normalized();
        let w2 = (v0 + v1).normalized();
        [
            Trixel { v: [v0, w2, w1] },
            Trixel { v: [v1, w0, w2] },
            Trixel { v: [v2, w1, w0] },
            Trixel { v: [w0, w1, w2] },
        ]
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.min_side(p) >= -CONTAINS_EPS
    }

    /// Smallest signed angle-like distance of `p` from the three edge
    /// planes; non-negative inside. Edge normals are unit length so the
    /// tolerance means the same at every level.
    fn min_side(&self, p: Vec3) -> f64 {
        let [v0, v1, v2] = self.v;
        let side = |a: Vec3, b: Vec3| p.dot(a.cross(b).normalized());
        side(v0, v1).min(side(v1, v2)).min(side(v2, v0))
    }

    pub fn centroid(&self) -> Vec3 {
        (self.v[0] + self.v[1] + self.v[2]).normalized()
    }

    /// Solid angle in steradians (spherical excess).
    pub fn area(&self) -> f64 {
        let [a, b, c] = self.v;
        let num = a.dot(b.cross(c)).abs();
        let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
        2.0 * num.atan2(den)
    }

    /// Longest edge as an angle, radians.
    pub fn max_edge(&self) -> f64 {
        let [a, b, c] = self.v;
        a.angle_to(b).max(b.angle_to(c)).max(c.angle_to(a))
    }
}

/// Inclusive half-space containment test with `CONTAINS_EPS` slack.
pub fn trixel_contains(t: &Trixel, p: Vec3) -> bool {
    t.contains(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HtmId(u64);

impl HtmId {
    /// Validate a raw ID: a leading one bit at an even offset of at least
    /// three, root bits forming 8..15, level at most 20.
    pub fn new(raw: u64) -> Result<HtmId> {
        if raw < 8 {
            return Err(Error::Invalid(format!("HTM ID {raw} lacks the root prefix")));
        }
        let bits = 64 - raw.leading_zeros();
        if !(bits - 4).is_multiple_of(2) || (bits - 4) / 2 > MAX_LEVEL as u32 {
            return Err(Error::Invalid(format!("HTM ID {raw} has a malformed bit length {bits}")));
        }
        Ok(HtmId(raw))
    }

    pub fn root(index: usize) -> HtmId {
        HtmId(8 + index as u64)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn level(self) -> u8 {
        ((64 - self.0.leading_zeros() - 4) / 2) as u8
    }

    pub fn child(self, k: u64) -> HtmId {
        debug_assert!(k < 4 && self.level() < MAX_LEVEL);
        HtmId((self.0 << 2) | k)
    }

    pub fn parent(self) -> Option<HtmId> {
        (self.level() > 0).then_some(HtmId(self.0 >> 2))
    }

    /// Ancestor at `level`, which must not exceed the ID's own level.
    pub fn ancestor(self, level: u8) -> HtmId {
        HtmId(self.0 >> (2 * (self.level() - level)))
    }

    pub fn range(self) -> HtmRange {
        range_of(self)
    }

    /// Corners obtained by replaying the subdivision path from the root.
    pub fn trixel(self) -> Trixel {
        let level = self.level();
        let mut t = Trixel::root((self.0 >> (2 * level)) as usize - 8);
        for l in (0..level).rev() {
            let k = ((self.0 >> (2 * l)) & 3) as usize;
            t = t.children()[k];
        }
        t
    }
}

/// Inclusive interval of level-20 IDs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HtmRange {
    pub start: u64,
    pub end: u64,
}

impl HtmRange {
    pub fn contains(&self, id: u64) -> bool {
        self.start <= id && id <= self.end
    }

    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Decompose into the fewest aligned trixels whose ranges tile the interval.
    pub fn trixels(&self) -> Vec<HtmId> {
        let mut out = Vec::new();
        let mut s = self.start;
        while s <= self.end {
            let mut shift = 0u32;
            while shift < 2 * MAX_LEVEL as u32 {
                let next = shift + 2;
                let aligned = s & ((1u64 << next) - 1) == 0;
                if !aligned || s + (1u64 << next) - 1 > self.end {
                    break;
                }
                shift = next;
            }
            out.push(HtmId(s >> shift));
            match s.checked_add(1u64 << shift) {
                Some(n) => s = n,
                None => break,
            }
        }
        out
    }
}

fn check_coords(lon: f64, lat: f64) -> Result<()> {
    if !lon.is_finite() || !lat.is_finite() {
        return Err(Error::Invalid(format!("non-finite coordinate ({lon}, {lat})")));
    }
    if !(-90.0..=90.0).contains(&lat) {
        return Err(Error::Invalid(format!("latitude {lat} outside [-90, 90]")));
    }
    Ok(())
}

/// Level-`level` trixel containing the point. Longitude is taken modulo 360.
pub fn latlon_to_htm(lon: f64, lat: f64, level: u8) -> Result<HtmId> {
    check_coords(lon, lat)?;
    if level > MAX_LEVEL {
        return Err(Error::Invalid(format!("HTM level {level} exceeds {MAX_LEVEL}")));
    }
    Ok(lookup(Vec3::from_lonlat(lon.rem_euclid(360.0), lat), level))
}

/// First containing trixel in enumeration order at each step. If rounding
/// leaves a point outside all candidates, the least-violated one is taken.
pub fn lookup(p: Vec3, level: u8) -> HtmId {
    let roots: [Trixel; 8] = std::array::from_fn(Trixel::root);
    let mut k = pick(&roots, p);
    let mut id = HtmId::root(k);
    let mut t = roots[k];
    for _ in 0..level {
        let children = t.children();
        k = pick(&children, p);
        id = id.child(k as u64);
        t = children[k];
    }
    id
}

fn pick(candidates: &[Trixel], p: Vec3) -> usize {
    if let Some(i) = candidates.iter().position(|t| t.contains(p)) {
        return i;
    }
    let mut best = 0;
    let mut best_side = f64::NEG_INFINITY;
    for (i, t) in candidates.iter().enumerate() {
        let s = t.min_side(p);
        if s > best_side {
            best = i;
            best_side = s;
        }
    }
    best
}

pub fn htm_to_trixel(id: HtmId) -> Trixel {
    id.trixel()
}

/// Leaf-level interval spanned by a trixel.
pub fn range_of(id: HtmId) -> HtmRange {
    let shift = 2 * (MAX_LEVEL - id.level()) as u32;
    HtmRange { start: id.0 << shift, end: ((id.0 + 1) << shift) - 1 }
}

/// Great-circle separation by the haversine formula: (radians, km).
pub fn angular_distance(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> (f64, f64) {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    let a = a.clamp(0.0, 1.0);
    let rad = 2.0 * a.sqrt().atan2((1.0 - a).sqrt());
    (rad, rad * EARTH_RADIUS_KM)
}

/// Minimum angle from `c` to the minor great-circle arc `a`→`b`.
pub fn arc_distance(c: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ends = c.angle_to(a).min(c.angle_to(b));
    let n = a.cross(b);
    let nn = n.norm();
    if nn < 1e-300 {
        return ends;
    }
    let n = n * (1.0 / nn);
    let s = c.dot(n);
    let p = c - n * s;
    if p.norm() < 1e-15 {
        return ends;
    }
    if a.cross(p).dot(n) >= 0.0 && p.cross(b).dot(n) >= 0.0 {
        s.abs().clamp(0.0, 1.0).asin().min(ends)
    } else {
        ends
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CoverConfig {
    /// Deepest level at which partially covered trixels are still split.
    pub max_level: u8,
    pub max_ranges: usize,
}

impl Default for CoverConfig {
    fn default() -> Self {
        CoverConfig { max_level: DEFAULT_COVER_LEVEL, max_ranges: DEFAULT_MAX_RANGES }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Overlap {
    Disjoint,
    Partial,
    Full,
}

struct Cap {
    center: Vec3,
    radius: f64,
}

impl Cap {
    // Conservative: `Partial` whenever intersection cannot be ruled out.
    fn classify(&self, t: &Trixel) -> Overlap {
        let slack = self.radius + 1e-12;
        let inside = t.v.iter().filter(|v| self.center.angle_to(**v) <= slack).count();
        if inside == 3 && self.radius < PI / 2.0 {
            return Overlap::Full;
        }
        if inside > 0 || t.contains(self.center) {
            return Overlap::Partial;
        }
        let [a, b, c] = t.v;
        if arc_distance(self.center, a, b) <= slack
            || arc_distance(self.center, b, c) <= slack
            || arc_distance(self.center, c, a) <= slack
        {
            return Overlap::Partial;
        }
        Overlap::Disjoint
    }
}

/// Level-20 ranges jointly containing every trixel that meets the cap of
/// `radius_arcmin` around (`lon`, `lat`). Uses the default recursion depth.
pub fn cover_circle(lon: f64, lat: f64, radius_arcmin: f64, max_ranges: usize) -> Result<Vec<HtmRange>> {
    cover_circle_with(lon, lat, radius_arcmin, &CoverConfig { max_ranges, ..CoverConfig::default() })
}

pub fn cover_circle_with(lon: f64, lat: f64, radius_arcmin: f64, cfg: &CoverConfig) -> Result<Vec<HtmRange>> {
    check_coords(lon, lat)?;
    if !(radius_arcmin > 0.0) {
        return Err(Error::Invalid(format!("cover radius {radius_arcmin} must be positive")));
    }
    if cfg.max_ranges == 0 {
        return Err(Error::Invalid("max_ranges must be at least 1".into()));
    }
    if radius_arcmin >= 180.0 * 60.0 {
        return Ok(vec![HtmRange { start: 8 << 40, end: (16 << 40) - 1 }]);
    }
    let cap = Cap { center: Vec3::from_lonlat(lon.rem_euclid(360.0), lat), radius: (radius_arcmin / 60.0).to_radians() };
    let max_level = cfg.max_level.min(MAX_LEVEL);
    let mut ranges = Vec::new();
    let mut stack: Vec<(HtmId, Trixel)> = (0..8).rev().map(|i| (HtmId::root(i), Trixel::root(i))).collect();
    while let Some((id, t)) = stack.pop() {
        match cap.classify(&t) {
            Overlap::Disjoint => {}
            Overlap::Full => ranges.push(range_of(id)),
            Overlap::Partial if id.level() >= max_level => ranges.push(range_of(id)),
            Overlap::Partial => {
                let children = t.children();
                for k in (0..4).rev() {
                    stack.push((id.child(k as u64), children[k]));
                }
            }
        }
    }
    Ok(coarsen(merge_ranges(ranges), cfg.max_ranges))
}

/// Sort, then join overlapping or adjacent ranges.
pub fn merge_ranges(mut ranges: Vec<HtmRange>) -> Vec<HtmRange> {
    ranges.sort_unstable();
    let mut out: Vec<HtmRange> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match out.last_mut() {
            Some(last) if r.start <= last.end.saturating_add(1) => last.end = last.end.max(r.end),
            _ => out.push(r),
        }
    }
    out
}

/// Close the smallest gaps until at most `max_ranges` remain. Ties go to the
/// lower position.
fn coarsen(ranges: Vec<HtmRange>, max_ranges: usize) -> Vec<HtmRange> {
    if ranges.len() <= max_ranges {
        return ranges;
    }
    let mut gaps: Vec<(u64, usize)> =
        ranges.windows(2).enumerate().map(|(i, w)| (w[1].start - w[0].end, i)).collect();
    gaps.sort_unstable();
    let mut close = vec![false; ranges.len()];
    for &(_, i) in gaps.iter().take(ranges.len() - max_ranges) {
        close[i] = true;
    }
    let mut out: Vec<HtmRange> = Vec::with_capacity(max_ranges);
    let mut joining = false;
    for (i, r) in ranges.iter().enumerate() {
        if joining {
            out.last_mut().expect("open range").end = r.end;
        } else {
            out.push(*r);
        }
        joining = close[i];
    }
    out
}

/// Is a level-20 ID inside any of the sorted, disjoint ranges?
pub fn ranges_contain(ranges: &[HtmRange], id: u64) -> bool {
    let i = ranges.partition_point(|r| r.end < id);
    i < ranges.len() && ranges[i].start <= id
}
