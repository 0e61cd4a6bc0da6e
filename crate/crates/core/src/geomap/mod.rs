//! Map geometry: named polygonal regions with optional traffic-flow headings.
//!
//! Headings are radians measured counterclockwise with 0 pointing along +Y.
//! Region polygons are triangulated on load; every geometric query below
//! works on the triangles, so a region clipped to the ego's visible disc
//! behaves exactly like the full region restricted to the kept triangles.

mod triangulate;
pub mod synthetic;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use triangulate::{polygon_area, signed_area2};

/// Tolerance used for closed point-in-triangle tests.
pub const CONTAINS_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map schema error: {0}")]
    Schema(String),
    #[error("degenerate geometry in region `{region}`: {reason}")]
    DegenerateGeometry { region: String, reason: String },
    #[error("no mapped triangle lies within {radius} m of ({x}, {y})")]
    EmptyVisibleMap { x: f64, y: f64, radius: f64 },
    #[error("cannot read map {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        self.sub(o).norm()
    }

    /// Rotates counterclockwise by `angle` radians.
    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(self.x * c - self.y * s, self.x * s + self.y * c)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a.add(ab.scale(t)))
}

/// Even-odd ray casting test. Points on the boundary may land on either side.
pub fn point_in_polygon(ring: &[Point2], p: Point2) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub v0: Point2,
    pub v1: Point2,
    pub v2: Point2,
}

impl Triangle {
    pub fn new(v0: Point2, v1: Point2, v2: Point2) -> Self {
        Self { v0, v1, v2 }
    }

    pub fn signed_area(&self) -> f64 {
        ((self.v1.x - self.v0.x) * (self.v2.y - self.v0.y)
            - (self.v2.x - self.v0.x) * (self.v1.y - self.v0.y))
            / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Barycentric parameters `(s, t)` with `p = v0 + (v1 - v0) s + (v2 - v0) t`.
    pub fn barycentric(&self, p: Point2) -> (f64, f64) {
        let e1 = self.v1.sub(self.v0);
        let e2 = self.v2.sub(self.v0);
        let d = p.sub(self.v0);
        let det = e1.x * e2.y - e2.x * e1.y;
        let s = (d.x * e2.y - e2.x * d.y) / det;
        let t = (e1.x * d.y - d.x * e1.y) / det;
        (s, t)
    }

    /// Closed containment test (boundary counts as inside).
    pub fn contains(&self, p: Point2) -> bool {
        self.distance_to(p) <= CONTAINS_EPS
    }

    pub fn point_at(&self, s: f64, t: f64) -> Point2 {
        self.v0
            .add(self.v1.sub(self.v0).scale(s))
            .add(self.v2.sub(self.v0).scale(t))
    }

    /// Euclidean distance from `p` to the closed triangle (zero inside).
    pub fn distance_to(&self, p: Point2) -> f64 {
        let (s, t) = self.barycentric(p);
        if s >= 0.0 && t >= 0.0 && s + t <= 1.0 {
            return 0.0;
        }
        point_segment_distance(p, self.v0, self.v1)
            .min(point_segment_distance(p, self.v1, self.v2))
            .min(point_segment_distance(p, self.v2, self.v0))
    }

    pub fn vertices(&self) -> [Point2; 3] {
        [self.v0, self.v1, self.v2]
    }

    /// Largest distance between the centroid and a vertex.
    pub fn extent(&self) -> f64 {
        let c = self.v0.add(self.v1).add(self.v2).scale(1.0 / 3.0);
        self.vertices().iter().map(|v| v.dist(c)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Road,
    Lane,
    Intersection,
    Curb,
    Sidewalk,
    Other,
}

impl RegionKind {
    pub const ALL: [RegionKind; 6] = [
        RegionKind::Road,
        RegionKind::Lane,
        RegionKind::Intersection,
        RegionKind::Curb,
        RegionKind::Sidewalk,
        RegionKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionKind::Road => "road",
            RegionKind::Lane => "lane",
            RegionKind::Intersection => "intersection",
            RegionKind::Curb => "curb",
            RegionKind::Sidewalk => "sidewalk",
            RegionKind::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<RegionKind> {
        RegionKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Which map regions a program-level region expression denotes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegionSel {
    /// Every region of the map (`workspace`).
    All,
    Kind(RegionKind),
    Named(String),
}

impl fmt::Display for RegionSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionSel::All => f.write_str("workspace"),
            RegionSel::Kind(k) => f.write_str(k.as_str()),
            RegionSel::Named(n) => write!(f, "region({n:?})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    pub kind: RegionKind,
    pub polygon: Vec<Point2>,
    pub flow_heading: Option<f64>,
    pub triangles: Vec<Triangle>,
    area: f64,
}

impl Region {
    pub fn new(
        name: impl Into<String>,
        kind: RegionKind,
        polygon: Vec<Point2>,
        flow_heading: Option<f64>,
    ) -> Result<Self, MapError> {
        let name = name.into();
        let triangles = triangulate::triangulate_named(&name, &polygon)?;
        let area = polygon_area(&triangulate::normalize_ring(&name, &polygon)?);
        if let Some(h) = flow_heading {
            if !h.is_finite() {
                return Err(MapError::Schema(format!("region `{name}`: non-finite flow_heading")));
            }
        }
        Ok(Self {
            name,
            kind,
            polygon,
            flow_heading,
            triangles,
            area,
        })
    }

    /// Area of the source polygon (not of the possibly clipped triangle set).
    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.triangles.iter().any(|t| t.contains(p))
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        self.triangles
            .iter()
            .map(|t| t.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn matches(&self, sel: &RegionSel) -> bool {
        match sel {
            RegionSel::All => true,
            RegionSel::Kind(k) => self.kind == *k,
            RegionSel::Named(n) => &self.name == n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point2::new(f64::INFINITY, f64::INFINITY),
            max: Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y
    }

    pub fn include(&mut self, p: Point2) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn inflate(&self, by: f64) -> Aabb {
        Aabb {
            min: Point2::new(self.min.x - by, self.min.y - by),
            max: Point2::new(self.max.x + by, self.max.y + by),
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.max.dist(self.min)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadMap {
    pub regions: Vec<Region>,
    pub bounds: Aabb,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionFile {
    name: String,
    kind: String,
    polygon: Vec<Point2>,
    #[serde(default)]
    flow_heading: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    regions: Vec<RegionFile>,
}

impl RoadMap {
    pub fn new(regions: Vec<Region>) -> Result<Self, MapError> {
        let mut names = BTreeSet::new();
        for r in &regions {
            if !names.insert(r.name.clone()) {
                return Err(MapError::Schema(format!("duplicate region name `{}`", r.name)));
            }
        }
        let bounds = bounds_of(&regions);
        Ok(Self { regions, bounds })
    }

    pub fn from_json(text: &str) -> Result<Self, MapError> {
        let file: MapFile =
            serde_json::from_str(text).map_err(|e| MapError::Schema(e.to_string()))?;
        let regions = file
            .regions
            .into_iter()
            .map(|r| {
                let kind = RegionKind::parse(&r.kind).ok_or_else(|| {
                    MapError::Schema(format!("region `{}`: unknown kind `{}`", r.name, r.kind))
                })?;
                Region::new(r.name, kind, r.polygon, r.flow_heading)
            })
            .collect::<Result<Vec<_>, _>>()?;
        RoadMap::new(regions)
    }

    pub fn to_json(&self) -> String {
        let file = MapFile {
            regions: self
                .regions
                .iter()
                .map(|r| RegionFile {
                    name: r.name.clone(),
                    kind: r.kind.as_str().to_string(),
                    polygon: r.polygon.clone(),
                    flow_heading: r.flow_heading,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("map serializes")
    }

    pub fn triangle_count(&self) -> usize {
        self.regions.iter().map(|r| r.triangles.len()).sum()
    }

    pub fn select<'a>(&'a self, sel: &'a RegionSel) -> impl Iterator<Item = &'a Region> + 'a {
        self.regions.iter().filter(move |r| r.matches(sel))
    }

    /// Flow heading of the smallest-area region containing `p` among those
    /// that carry one, or `None`.
    pub fn road_dir_at(&self, p: Point2) -> Option<f64> {
        orientation_among(self.regions.iter(), p)
    }

    /// Like [`RoadMap::road_dir_at`] but restricted to the selected regions.
    pub fn orientation_at(&self, sel: &RegionSel, p: Point2) -> Option<f64> {
        orientation_among(self.select(sel), p)
    }

    /// Whether every selected region carries a flow heading (and at least one exists).
    pub fn is_oriented(&self, sel: &RegionSel) -> bool {
        let mut any = false;
        for r in self.select(sel) {
            any = true;
            if r.flow_heading.is_none() {
                return false;
            }
        }
        any
    }

    pub fn contains(&self, sel: &RegionSel, p: Point2) -> bool {
        self.select(sel).any(|r| r.contains(p))
    }

    pub fn distance_to(&self, sel: &RegionSel, p: Point2) -> f64 {
        self.select(sel)
            .map(|r| r.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Keeps exactly the triangles whose closed area comes within `radius`
    /// of `center`. Regions left without triangles are dropped.
    pub fn clip_to_visible(&self, center: Point2, radius: f64) -> Result<RoadMap, MapError> {
        assert!(radius > 0.0, "visible radius must be positive");
        let regions: Vec<Region> = self
            .regions
            .iter()
            .filter_map(|r| {
                let kept: Vec<Triangle> = r
                    .triangles
                    .iter()
                    .filter(|t| t.distance_to(center) <= radius)
                    .copied()
                    .collect();
                if kept.is_empty() {
                    None
                } else {
                    Some(Region {
                        triangles: kept,
                        ..r.clone()
                    })
                }
            })
            .collect();
        if regions.is_empty() {
            return Err(MapError::EmptyVisibleMap {
                x: center.x,
                y: center.y,
                radius,
            });
        }
        let bounds = bounds_of(&regions);
        Ok(RoadMap { regions, bounds })
    }
}

fn bounds_of(regions: &[Region]) -> Aabb {
    let mut b = Aabb::empty();
    for r in regions {
        for t in &r.triangles {
            for v in t.vertices() {
                b.include(v);
            }
        }
    }
    b
}

fn orientation_among<'a>(regions: impl Iterator<Item = &'a Region>, p: Point2) -> Option<f64> {
    regions
        .filter(|r| r.flow_heading.is_some() && r.contains(p))
        .min_by(|a, b| a.area().total_cmp(&b.area()))
        .and_then(|r| r.flow_heading)
}

pub fn load_map(path: impl AsRef<Path>) -> Result<RoadMap, MapError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MapError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RoadMap::from_json(&text)
}

/// Triangulates a simple polygon without holes.
pub fn triangulate(polygon: &[Point2]) -> Result<Vec<Triangle>, MapError> {
    triangulate::triangulate_named("<polygon>", polygon)
}
