//! Ear-clipping triangulation for simple polygons without holes.

use super::{MapError, Point2, Triangle};

const COLLINEAR_EPS: f64 = 1e-12;

/// Signed doubled area of the ring (positive for counterclockwise).
pub fn signed_area2(ring: &[Point2]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            a.x * b.y - b.x * a.y
        })
        .sum()
}

/// Shoelace area of a ring.
pub fn polygon_area(ring: &[Point2]) -> f64 {
    signed_area2(ring).abs() / 2.0
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

/// Checks the ring for repeated consecutive vertices, zero area and
/// self-intersections. Returns the ring in counterclockwise order with an
/// explicit closing vertex stripped.
pub fn normalize_ring(name: &str, polygon: &[Point2]) -> Result<Vec<Point2>, MapError> {
    let degenerate = |reason: String| MapError::DegenerateGeometry {
        region: name.to_string(),
        reason,
    };
    let mut ring: Vec<Point2> = polygon.to_vec();
    if ring.len() > 3 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(degenerate(format!("ring has {} vertices, need at least 3", ring.len())));
    }
    if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(degenerate("non-finite coordinate".into()));
    }
    let n = ring.len();
    for i in 0..n {
        if ring[i] == ring[(i + 1) % n] {
            return Err(degenerate(format!("vertex {i} repeated consecutively")));
        }
    }
    if polygon_area(&ring) <= f64::EPSILON {
        return Err(degenerate("zero area".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            // adjacent edges share an endpoint
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                return Err(degenerate(format!("edges {i} and {j} intersect")));
            }
        }
    }
    if signed_area2(&ring) < 0.0 {
        ring.reverse();
    }
    Ok(ring)
}

fn point_in_triangle_strict(p: Point2, a: Point2, b: Point2, c: Point2) -> bool {
    // closed test on a ccw triangle; vertices of the ear itself are excluded by the caller
    cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
}

/// Triangulates a simple polygon by ear clipping. Collinear vertices are
/// dropped first, so the result has `n - 2` triangles for `n` corner vertices.
pub fn triangulate_named(name: &str, polygon: &[Point2]) -> Result<Vec<Triangle>, MapError> {
    let ring = normalize_ring(name, polygon)?;
    let mut idx: Vec<usize> = (0..ring.len()).collect();

    // drop collinear (180 degree) vertices; they would produce zero-area ears
    let mut changed = true;
    while changed && idx.len() > 3 {
        changed = false;
        for k in 0..idx.len() {
            let m = idx.len();
            let (a, b, c) = (ring[idx[(k + m - 1) % m]], ring[idx[k]], ring[idx[(k + 1) % m]]);
            let scale = (b.x - a.x).hypot(b.y - a.y) * (c.x - b.x).hypot(c.y - b.y);
            if cross(a, b, c).abs() <= COLLINEAR_EPS * scale.max(1.0) {
                idx.remove(k);
                changed = true;
                break;
            }
        }
    }

    let mut triangles = Vec::with_capacity(idx.len().saturating_sub(2));
    let mut guard = 0usize;
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let ia = idx[(k + m - 1) % m];
            let ib = idx[k];
            let ic = idx[(k + 1) % m];
            let (a, b, c) = (ring[ia], ring[ib], ring[ic]);
            if cross(a, b, c) <= 0.0 {
                continue; // reflex or flat
            }
            let blocked = idx.iter().any(|&j| {
                j != ia && j != ib && j != ic && point_in_triangle_strict(ring[j], a, b, c)
            });
            if blocked {
                continue;
            }
            triangles.push(Triangle::new(a, b, c));
            idx.remove(k);
            clipped = true;
            break;
        }
        guard += 1;
        if !clipped || guard > 4 * ring.len() {
            return Err(MapError::DegenerateGeometry {
                region: name.to_string(),
                reason: "ear clipping found no ear".into(),
            });
        }
    }
    let (a, b, c) = (ring[idx[0]], ring[idx[1]], ring[idx[2]]);
    if cross(a, b, c).abs() <= f64::EPSILON {
        return Err(MapError::DegenerateGeometry {
            region: name.to_string(),
            reason: "final triangle is degenerate".into(),
        });
    }
    triangles.push(Triangle::new(a, b, c));
    Ok(triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point2> {
        v.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    #[test]
    fn bowtie_is_rejected() {
        let ring = pts(&[(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]);
        assert!(matches!(
            triangulate_named("bowtie", &ring),
            Err(MapError::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn clockwise_input_is_accepted() {
        let ring = pts(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]);
        let tris = triangulate_named("cw", &ring).unwrap();
        assert_eq!(tris.len(), 2);
        assert!(tris.iter().all(|t| t.signed_area() > 0.0));
    }

    #[test]
    fn collinear_vertex_is_dropped() {
        let ring = pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 1.0), (0.0, 1.0)]);
        let tris = triangulate_named("strip", &ring).unwrap();
        assert_eq!(tris.len(), 2);
        let area: f64 = tris.iter().map(Triangle::area).sum();
        assert!((area - 2.0).abs() < 1e-12);
    }

    #[test]
    fn closing_vertex_is_stripped() {
        let ring = pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)]);
        assert_eq!(triangulate_named("closed", &ring).unwrap().len(), 2);
    }
}
