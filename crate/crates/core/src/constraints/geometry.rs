//! Geometric predicates and vector operators over symbolic terms.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

use super::formula::{Formula, Term, VarRole, VarTable, EQ_EPS};
use crate::geomap::{Point2, Triangle};
use crate::interval::Interval;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("region `{0}` has no triangles inside the visible map")]
    EmptyRegion(String),
}

/// A symbolic 2D vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TVec {
    pub x: Term,
    pub y: Term,
}

impl TVec {
    pub fn new(x: Term, y: Term) -> Self {
        Self { x, y }
    }

    pub fn c(p: Point2) -> Self {
        Self::new(Term::c(p.x), Term::c(p.y))
    }

    pub fn as_const(&self) -> Option<Point2> {
        Some(Point2::new(self.x.as_const()?, self.y.as_const()?))
    }

    pub fn add(&self, o: &TVec) -> TVec {
        TVec::new(&self.x + &o.x, &self.y + &o.y)
    }

    pub fn sub(&self, o: &TVec) -> TVec {
        TVec::new(&self.x - &o.x, &self.y - &o.y)
    }

    pub fn scale(&self, k: &Term) -> TVec {
        TVec::new(&self.x * k, &self.y * k)
    }

    pub fn eval(&self, env: &[f64]) -> Point2 {
        Point2::new(self.x.eval(env), self.y.eval(env))
    }

    /// Interval enclosure of the vector over the variable bounds.
    pub fn bounds(&self, vars: &VarTable) -> (Interval, Interval) {
        let dom = vars.bounds();
        (self.x.eval_interval(&dom), self.y.eval_interval(&dom))
    }
}

/// `<x cos t - y sin t, x sin t + y cos t>`
pub fn rotate(v: &TVec, theta: &Term) -> TVec {
    let (s, c) = (Term::sin(theta.clone()), Term::cos(theta.clone()));
    TVec::new(&v.x * &c - &v.y * &s, &v.x * &s + &v.y * &c)
}

/// `pos + rotate(v, heading)`: `v` in the local frame of an oriented point.
pub fn offset_local(pos: &TVec, heading: &Term, v: &TVec) -> TVec {
    pos.add(&rotate(v, heading))
}

fn cross(v1: &TVec, v2: &TVec, p: &TVec) -> Term {
    let d = v2.sub(v1);
    let t = p.sub(v1);
    &d.x * &t.y - &d.y * &t.x
}

/// Strictly left of the directed line `v1 -> v2`.
pub fn left_of_line(v1: &TVec, v2: &TVec, p: &TVec) -> Formula {
    Formula::lt0(-cross(v1, v2, p))
}

/// Strictly right of the directed line `v1 -> v2`.
pub fn right_of_line(v1: &TVec, v2: &TVec, p: &TVec) -> Formula {
    Formula::lt0(cross(v1, v2, p))
}

/// Closed disc of radius `r` around `c`.
pub fn disc_contains(c: &TVec, r: &Term, p: &TVec) -> Formula {
    let d = p.sub(c);
    Formula::le0(Term::sqr(d.x) + Term::sqr(d.y) - Term::sqr(r.clone()))
}

/// Sector of radius `r` and aperture `a` centred on heading `h`.
pub fn sector_contains(c: &TVec, r: &Term, h: &Term, a: f64, p: &TVec) -> Formula {
    let disc = disc_contains(c, r, p);
    if a >= TAU {
        return disc;
    }
    let ray = TVec::new(Term::c(0.0), r.clone());
    let v1 = offset_local(c, &(h - a / 2.0), &ray);
    let v2 = offset_local(c, &(h + a / 2.0), &ray);
    let inside_right_edge = left_of_line(c, &v1, p);
    let inside_left_edge = right_of_line(c, &v2, p);
    let wedge = if a <= PI {
        Formula::and(vec![inside_right_edge, inside_left_edge])
    } else {
        Formula::or(vec![inside_right_edge, inside_left_edge])
    };
    Formula::and(vec![disc, wedge])
}

/// What an observer sees: a sector for oriented observers, else a disc.
#[derive(Debug, Clone)]
pub struct Viewer {
    pub position: TVec,
    pub heading: Option<Term>,
    pub view_distance: f64,
    pub view_angle: f64,
}

pub fn visible_region_contains(v: &Viewer, p: &TVec) -> Formula {
    let r = Term::c(v.view_distance);
    match &v.heading {
        Some(h) => sector_contains(&v.position, &r, h, v.view_angle, p),
        None => disc_contains(&v.position, &r, p),
    }
}

fn may_touch(tri: &Triangle, px: Interval, py: Interval) -> bool {
    let vs = tri.vertices();
    let lo_x = vs.iter().map(|v| v.x).fold(f64::INFINITY, f64::min) - EQ_EPS;
    let hi_x = vs.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max) + EQ_EPS;
    let lo_y = vs.iter().map(|v| v.y).fold(f64::INFINITY, f64::min) - EQ_EPS;
    let hi_y = vs.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max) + EQ_EPS;
    px.hi >= lo_x && px.lo <= hi_x && py.hi >= lo_y && py.lo <= hi_y
}

/// Closed triangle membership through barycentric coordinates `s, t` held
/// in fresh variables. Constant points and triangles out of reach of the
/// point's bounds fold to a truth value.
pub fn triangle_contains(tri: &Triangle, p: &TVec, vars: &mut VarTable) -> Formula {
    if let Some(q) = p.as_const() {
        return if tri.distance_to(q) <= EQ_EPS {
            Formula::True
        } else {
            Formula::False
        };
    }
    let (bx, by) = p.bounds(vars);
    if !may_touch(tri, bx, by) {
        return Formula::False;
    }
    let s = vars.fresh("tri_s", VarRole::Aux, 0.0, 1.0);
    let t = vars.fresh("tri_t", VarRole::Aux, 0.0, 1.0);
    let e1 = tri.v1.sub(tri.v0);
    let e2 = tri.v2.sub(tri.v0);
    let x = Term::c(tri.v0.x) + &s * e1.x + &t * e2.x;
    let y = Term::c(tri.v0.y) + &s * e1.y +&t * e2.y;
    Formula::and(vec![
        Formula::eq(p.x.clone(), x),
        Formula::eq(p.y.clone(), y),
        Formula::le(&s + &t, Term::c(1.0)),
    ])
}

/// Disjunction of triangle memberships over a region's triangulation.
pub fn region_contains<'a>(
    name: &str,
    triangles: impl IntoIterator<Item = &'a Triangle>,
    p: &TVec,
    vars: &mut VarTable,
) -> Result<Formula, GeometryError> {
    let mut any = false;
    let mut parts = Vec::new();
    for tri in triangles {
        any = true;
        let f = triangle_contains(tri, p, vars);
        if f == Formula::True {
            return Ok(Formula::True);
        }
        parts.push(f);
    }
    if !any {
        return Err(GeometryError::EmptyRegion(name.to_string()));
    }
    Ok(Formula::or(parts))
}

/// Slope of the segment, `None` when vertical.
pub fn slope(v1: Point2, v2: Point2) -> Option<f64> {
    if (v2.x - v1.x).abs() <= f64::EPSILON * v1.x.abs().max(v2.x.abs()).max(1.0) {
        None
    } else {
        Some((v2.y - v1.y) / (v2.x - v1.x))
    }
}

/// Intercept of the segment's line, `None` when vertical.
pub fn offset(v1: Point2, v2: Point2) -> Option<f64> {
    slope(v1, v2).map(|m| v1.y - m * v1.x)
}

/// Point on the closed segment: `y = slope x + offset` inside the x and y
/// ranges, or `x = const` for vertical segments.
pub fn line_seg(v1: Point2, v2: Point2, p: &TVec) -> Formula {
    let (min_x, max_x) = (v1.x.min(v2.x), v1.x.max(v2.x));
    let (min_y, max_y) = (v1.y.min(v2.y), v1.y.max(v2.y));
    let ranges = Formula::and(vec![
        Formula::le(Term::c(min_x - EQ_EPS), p.x.clone()),
        Formula::le(p.x.clone(), Term::c(max_x + EQ_EPS)),
        Formula::le(Term::c(min_y - EQ_EPS), p.y.clone()),
        Formula::le(p.y.clone(), Term::c(max_y + EQ_EPS)),
    ]);
    let on_line = match (slope(v1, v2), offset(v1, v2)) {
        (Some(m), Some(b)) => Formula::eq(p.y.clone(), &p.x * m + b),
        _ => Formula::eq(p.x.clone(), Term::c(v1.x)),
    };
    Formula::and(vec![on_line, ranges])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn pt(x: f64, y: f64) -> TVec {
        TVec::c(Point2::new(x, y))
    }

    fn close(a: &TVec, x: f64, y: f64) -> bool {
        let p = a.as_const().unwrap();
        (p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12
    }

    #[test]
    fn rotation_and_local_offsets() {
        assert!(close(&rotate(&pt(1.0, 0.0), &Term::c(FRAC_PI_2)), 0.0, 1.0));
        assert!(close(&offset_local(&pt(0.0, 0.0), &Term::c(0.0), &pt(0.0, 7.0)), 0.0, 7.0));
        assert!(close(&offset_local(&pt(1.0, 1.0), &Term::c(FRAC_PI_2), &pt(0.0, 1.0)), 0.0, 1.0));
    }

    #[test]
    fn line_side_and_disc() {
        let (a, b) = (pt(0.0, 0.0), pt(0.0, 1.0));
        assert_eq!(left_of_line(&a, &b, &pt(-1.0, 0.5)), Formula::True);
        assert_eq!(left_of_line(&a, &b, &pt(0.0, 0.5)), Formula::False);
        assert_eq!(right_of_line(&a, &b, &pt(1.0, 0.5)), Formula::True);
        let c = pt(0.0, 0.0);
        let r = Term::c(2.0);
        assert_eq!(disc_contains(&c, &r, &pt(1.0, 1.0)), Formula::True);
        assert_eq!(disc_contains(&c, &r, &pt(2.0, 2.0)), Formula::False);
        assert_eq!(disc_contains(&c, &r, &pt(2.0, 0.0)), Formula::True);
    }

    #[test]
    fn sector_examples() {
        let c = pt(0.0, 0.0);
        let r = Term::c(10.0);
        let h = Term::c(0.0);
        assert_eq!(sector_contains(&c, &r, &h, FRAC_PI_2, &pt(0.0, 5.0)), Formula::True);
        assert_eq!(sector_contains(&c, &r, &h, FRAC_PI_2, &pt(5.0, 0.0)), Formula::False);
        assert_eq!(sector_contains(&c, &r, &h, 3.0 * FRAC_PI_2, &pt(5.0, 0.0)), Formula::True);
        assert_eq!(sector_contains(&c, &r, &h, 3.0 * FRAC_PI_2, &pt(0.0, -5.0)), Formula::False);
    }

    #[test]
    fn constant_triangle_and_segment() {
        let tri = Triangle::new(Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(0.0, 2.0));
        let mut vars = VarTable::new();
        assert_eq!(triangle_contains(&tri, &pt(0.5, 0.5), &mut vars), Formula::True);
        assert_eq!(triangle_contains(&tri, &pt(2.0, 2.0), &mut vars), Formula::False);
        assert_eq!(triangle_contains(&tri, &pt(0.0, 0.0), &mut vars), Formula::True);
        assert!(region_contains("r", &[], &pt(0.0, 0.0), &mut vars).is_err());
        let (a, b) = (Point2::new(0.0, 0.0), Point2::new(2.0, 2.0));
        assert_eq!(line_seg(a, b, &pt(1.0, 1.0)), Formula::True);
        assert_eq!(line_seg(a, b, &pt(3.0, 3.0)), Formula::False);
        let v = Point2::new(0.0, 2.0);
        assert_eq!(slope(a, v), None);
        assert_eq!(line_seg(a, v, &pt(0.0, 1.0)), Formula::True);
    }

    #[test]
    fn symbolic_triangle_uses_barycentric_helpers() {
        let tri = Triangle::new(Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(0.0, 2.0));
        let mut vars = VarTable::new();
        let x = vars.fresh("x", VarRole::Aux, -5.0, 5.0);
        let y = vars.fresh("y", VarRole::Aux, -5.0, 5.0);
        let f = triangle_contains(&tri, &TVec::new(x, y), &mut vars);
        assert_eq!(vars.len(), 4);
        // (x, y, s, t) = (1, 0.5, 0.5, 0.25)
        assert!(f.eval(&[1.0, 0.5, 0.5, 0.25]));
        assert!(!f.eval(&[1.0, 0.5, 0.25, 0.25]));
    }
}
