//! Synthetic maps used by tests, the sampler harness and the benchmark.

use super::{Point2, Region, RegionKind, RoadMap};

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    vec![
        Point2::new(x0, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ]
}

/// A straight road of the given length and width along +Y, centered on the
/// origin, cut into segments of `segment` meters. Traffic flows along +Y.
pub fn straight_strip(length: f64, width: f64, segment: f64) -> RoadMap {
    let n = (length / segment).ceil() as usize;
    let y0 = -length / 2.0;
    let regions = (0..n)
        .map(|k| {
            let a = y0 + k as f64 * segment;
            let b = (a + segment).min(y0 + length);
            Region::new(
                format!("road_{k}"),
                RegionKind::Road,
                rect(-width / 2.0, a, width / 2.0, b),
                Some(0.0),
            )
            .expect("valid rectangle")
        })
        .collect();
    RoadMap::new(regions).expect("unique names")
}

/// A one-way, two-lane street 600 m long running along +Y with sidewalks,
/// a parking curb strip inside the left lane and two intersections.
///
/// * road: x in [-10, 10], flow 0
/// * lanes: x in [-10, 0] and [0, 10], flow 0
/// * curb: x in [-8, -6], flow 0
/// * sidewalks: x in [-14, -10] and [10, 14], no flow
/// * intersections: y in [100, 120] and [-140, -120], no flow
pub fn town() -> RoadMap {
    let mut regions = Vec::new();
    let seg = 20.0;
    for k in 0..30 {
        let a = -300.0 + k as f64 * seg;
        let b = a + seg;
        let mut push = |name: String, kind, poly, flow| {
            regions.push(Region::new(name, kind, poly, flow).expect("valid rectangle"));
        };
        push(format!("road_{k}"), RegionKind::Road, rect(-10.0, a, 10.0, b), Some(0.0));
        push(format!("lane_left_{k}"), RegionKind::Lane, rect(-10.0, a, 0.0, b), Some(0.0));
        push(format!("lane_right_{k}"), RegionKind::Lane, rect(0.0, a, 10.0, b), Some(0.0));
        push(format!("curb_{k}"), RegionKind::Curb, rect(-8.0, a, -6.0, b), Some(0.0));
        push(format!("sidewalk_west_{k}"), RegionKind::Sidewalk, rect(-14.0, a, -10.0, b), None);
        push(format!("sidewalk_east_{k}"), RegionKind::Sidewalk, rect(10.0, a, 14.0, b), None);
    }
    regions.push(
        Region::new("intersection_north", RegionKind::Intersection, rect(-10.0, 100.0, 10.0, 120.0), None)
            .expect("valid rectangle"),
    );
    regions.push(
        Region::new("intersection_south", RegionKind::Intersection, rect(-10.0, -140.0, 10.0, -120.0), None)
            .expect("valid rectangle"),
    );
    RoadMap::new(regions).expect("unique names")
}
