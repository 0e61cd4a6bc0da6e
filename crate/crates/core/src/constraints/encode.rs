//! Translation of expression trees into solver formulas.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use thiserror::Error;

use super::formula::{Formula, Term, VarRole, VarTable};
use super::geometry::{offset_local, region_contains, visible_region_contains, TVec, Viewer};
use crate::dsl::CmpOp;
use crate::eval::{angle_of, wrap_angle};
use crate::forest::{ExpressionForest, Node, RegionNode, SlotKey, Value, ViewerNode};
use crate::geomap::{Aabb, RegionSel, RoadMap, Triangle};
use crate::interval::Interval;

/// Heading tolerance of label equalities, in radians.
pub const HEADING_EPS: f64 = 1e-6;
const MAX_WRAP_TURNS: i64 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("cannot encode {0}")]
    Unsupported(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("slot `{0}` is undefined")]
    Missing(SlotKey),
}

/// Symbolic value of a tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Sym {
    Scalar(Term),
    Vector(TVec),
    Bool(Formula),
}

impl Sym {
    fn of(v: Value) -> Sym {
        match v {
            Value::Scalar(x) => Sym::Scalar(Term::c(x)),
            Value::Vector(p) => Sym::Vector(TVec::c(p)),
            Value::Bool(b) => Sym::Bool(if b { Formula::True } else { Formula::False }),
        }
    }
}

/// A finished query: the conjunction of all constraints and the variables
/// they range over.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub formula: Formula,
    pub vars: VarTable,
    /// Map or program issues met while encoding (e.g. empty regions).
    pub anomalies: Vec<String>,
}

/// Encodes slots of a forest on demand, sharing each slot's symbolic value
/// between all trees that reference it.
pub struct Encoder<'a> {
    ef: &'a ExpressionForest,
    map: &'a RoadMap,
    vars: VarTable,
    constraints: Vec<Formula>,
    cache: BTreeMap<SlotKey, Sym>,
    anomalies: Vec<String>,
    /// Name prefix for fresh variables: the slot being encoded.
    scope: String,
}

fn scalar(s: Sym, what: &str) -> Result<Term, EncodeError> {
    match s {
        Sym::Scalar(t) => Ok(t),
        _ => Err(EncodeError::Type(format!("{what}: expected a number"))),
    }
}

fn vector(s: Sym, what: &str) -> Result<TVec, EncodeError> {
    match s {
        Sym::Vector(v) => Ok(v),
        _ => Err(EncodeError::Type(format!("{what}: expected a vector"))),
    }
}

fn boolean(s: Sym, what: &str) -> Result<Formula, EncodeError> {
    match s {
        Sym::Bool(f) => Ok(f),
        _ => Err(EncodeError::Type(format!("{what}: expected a boolean"))),
    }
}

fn tri_box<'t>(tris: impl IntoIterator<Item = &'t Triangle>) -> Aabb {
    let mut b = Aabb::empty();
    for t in tris {
        for v in t.vertices() {
            b.include(v);
        }
    }
    b
}

impl<'a> Encoder<'a> {
    pub fn new(ef: &'a ExpressionForest, map: &'a RoadMap) -> Self {
        Self {
            ef,
            map,
            vars: VarTable::new(),
            constraints: Vec::new(),
            cache: BTreeMap::new(),
            anomalies: Vec::new(),
            scope: String::new(),
        }
    }

    pub fn vars(&self) -> &VarTable {
        &self.vars
    }

    pub fn assert(&mut self, f: Formula) {
        self.constraints.push(f);
    }

    pub fn finish(self) -> Encoding {
        Encoding {
            formula: Formula::and(self.constraints),
            vars: self.vars,
            anomalies: self.anomalies,
        }
    }

    fn bounds(&self, t: &Term) -> Interval {
        t.eval_interval(&self.vars.bounds())
    }

    fn fresh(&mut self, suffix: &str, role: VarRole, iv: Interval) -> Result<Term, EncodeError> {
        if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.is_empty() {
            return Err(EncodeError::Unsupported(format!(
                "unbounded value in `{}` ({suffix})",
                self.scope
            )));
        }
        let name = format!("{}_{suffix}", self.scope);
        Ok(self.vars.fresh(&name, role, iv.lo, iv.hi))
    }

    /// Symbolic value of a slot; conditioned slots are constants.
    pub fn slot(&mut self, key: &SlotKey) -> Result<Sym, EncodeError> {
        if let Some(v) = self.ef.conditioned(key) {
            return Ok(Sym::of(v));
        }
        if let Some(s) = self.cache.get(key) {
            return Ok(s.clone());
        }
        let tree = self.ef.tree(key).ok_or_else(|| EncodeError::Missing(key.clone()))?;
        let outer = std::mem::replace(&mut self.scope, key.to_string());
        let s = self.node(tree);
        self.scope = outer;
        let s = s?;
        self.cache.insert(key.clone(), s.clone());
        Ok(s)
    }

    /// Asserts that a slot takes an observed value.
    pub fn require_value(&mut self, key: &SlotKey, v: Value, is_heading: bool) -> Result<(), EncodeError> {
        let s = self.slot(key)?;
        let f = match (s, v) {
            (Sym::Scalar(t), Value::Scalar(x)) if is_heading => Formula::heading_eq(t, Term::c(x), HEADING_EPS),
            (Sym::Scalar(t), Value::Scalar(x)) => Formula::eq(t, Term::c(x)),
            (Sym::Vector(p), Value::Vector(q)) => {
                Formula::and(vec![Formula::eq(p.x, Term::c(q.x)), Formula::eq(p.y, Term::c(q.y))])
            }
            (Sym::Bool(f), Value::Bool(true)) => f,
            (Sym::Bool(f), Value::Bool(false)) => f.not(),
            _ => return Err(EncodeError::Type(format!("label value for `{key}` has the wrong type"))),
        };
        self.constraints.push(f);
        Ok(())
    }

    /// Encodes a boolean tree (a requirement) as a formula.
    pub fn condition(&mut self, n: &Node) -> Result<Formula, EncodeError> {
        let outer = std::mem::replace(&mut self.scope, "require".into());
        let s = self.node(n);
        self.scope = outer;
        boolean(s?, "requirement")
    }

    fn triangles(&mut self, sel: &RegionSel) -> Vec<Triangle> {
        let tris: Vec<Triangle> = self.map.select(sel).flat_map(|r| r.triangles.iter().copied()).collect();
        if tris.is_empty() {
            let msg = format!("region {sel} is empty on the map");
            if !self.anomalies.contains(&msg) {
                self.anomalies.push(msg);
            }
        }
        tris
    }

    fn viewer(&mut self, v: &ViewerNode) -> Result<Viewer, EncodeError> {
        let position = vector(self.node(&v.position)?, "viewer position")?;
        let heading = match &v.heading {
            Some(h) => Some(scalar(self.node(h)?, "viewer heading")?),
            None => None,
        };
        Ok(Viewer {
            position,
            heading,
            view_distance: v.view_distance,
            view_angle: v.view_angle,
        })
    }

    /// Membership of `p` in a region node.
    fn in_region(&mut self, r: &RegionNode, p: &TVec) -> Result<Formula, EncodeError> {
        Ok(match r {
            RegionNode::Map(sel) => {
                let tris = self.triangles(sel);
                region_contains(&sel.to_string(), &tris, p, &mut self.vars).unwrap_or(Formula::False)
            }
            RegionNode::Visible { base, viewer } => {
                let v = self.viewer(viewer)?;
                let seen = visible_region_contains(&v, p);
                match base {
                    None => seen,
                    Some(sel) => {
                        let tris = self.visible_triangles(sel, &v);
                        let inside = region_contains(&sel.to_string(), &tris, p, &mut self.vars)
                            .unwrap_or(Formula::False);
                        Formula::and(vec![inside, seen])
                    }
                }
            }
        })
    }

    /// Triangles of `sel` that can intersect the viewer's disc.
    fn visible_triangles(&mut self, sel: &RegionSel, v: &Viewer) -> Vec<Triangle> {
        let (bx, by) = v.position.bounds(&self.vars);
        let reach = v.view_distance;
        self.triangles(sel)
            .into_iter()
            .filter(|t| {
                let b = tri_box([t]);
                b.min.x <= bx.hi + reach && b.max.x >= bx.lo - reach && b.min.y <= by.hi + reach && b.max.y >= by.lo - reach
            })
            .collect()
    }

    fn uniform_in(&mut self, r: &RegionNode) -> Result<Sym, EncodeError> {
        let (bbox, constraint_tris) = match r {
            RegionNode::Map(sel) => {
                let tris = self.triangles(sel);
                (tri_box(&tris), Some((sel.clone(), tris)))
            }
            RegionNode::Visible { base, viewer } => {
                let v = self.viewer(viewer)?;
                let (bx, by) = v.position.bounds(&self.vars);
                let reach = v.view_distance;
                let mut disc = Aabb::empty();
                disc.include(crate::geomap::Point2::new(bx.lo - reach, by.lo - reach));
                disc.include(crate::geomap::Point2::new(bx.hi + reach, by.hi + reach));
                match base {
                    None => (disc, None),
                    Some(sel) => {
                        let tris = self.visible_triangles(sel, &v);
                        let b = tri_box(&tris);
                        let clipped = Aabb {
                            min: crate::geomap::Point2::new(b.min.x.max(disc.min.x), b.min.y.max(disc.min.y)),
                            max: crate::geomap::Point2::new(b.max.x.min(disc.max.x), b.max.y.min(disc.max.y)),
                        };
                        (clipped, Some((sel.clone(), tris)))
                    }
                }
            }
        };
        if bbox.is_empty() || bbox.min.x > bbox.max.x || bbox.min.y > bbox.max.y {
            self.constraints.push(Formula::False);
            return Ok(Sym::Vector(TVec::c(crate::geomap::Point2::new(0.0, 0.0))));
        }
        let role = VarRole::Point(self.scope.clone());
        let x = self.fresh("x", role.clone(), Interval::new(bbox.min.x, bbox.max.x))?;
        let y = self.fresh("y", role, Interval::new(bbox.min.y, bbox.max.y))?;
        let p = TVec::new(x, y);
        let membership = match constraint_tris {
            Some((sel, tris)) => region_contains(&sel.to_string(), &tris, &p, &mut self.vars).unwrap_or(Formula::False),
            None => Formula::True,
        };
        self.constraints.push(membership);
        if let RegionNode::Visible { viewer, .. } = r {
            let v = self.viewer(viewer)?;
            self.constraints.push(visible_region_contains(&v, &p));
        }
        Ok(Sym::Vector(p))
    }

    /// Traffic direction at `p` among the flow regions selected by `sel`
    /// (all flow regions when `sel` is `None` or selects none with a flow).
    fn flow_at(&mut self, sel: Option<&RegionSel>, p: &TVec) -> Result<Term, EncodeError> {
        if let Some(q) = p.as_const() {
            let h = sel
                .and_then(|s| self.map.orientation_at(s, q))
                .or_else(|| self.map.road_dir_at(q));
            return Ok(match h {
                Some(h) => Term::c(h),
                None => {
                    self.constraints.push(Formula::False);
                    Term::c(0.0)
                }
            });
        }
        let map: &RoadMap = self.map;
        let mut regions: Vec<_> = match sel {
            Some(s) => map.select(s).filter(|r| r.flow_heading.is_some()).collect(),
            None => Vec::new(),
        };
        if regions.is_empty() {
            regions = map.regions.iter().filter(|r| r.flow_heading.is_some()).collect();
        }
        // regions sharing a flow heading form one disjunct
        let mut groups: Vec<(f64, Vec<Triangle>)> = Vec::new();
        for r in regions {
            let f = r.flow_heading.expect("filtered on flow");
            match groups.iter_mut().find(|(g, _)| *g == f) {
                Some((_, tris)) => tris.extend(r.triangles.iter().copied()),
                None => groups.push((f, r.triangles.clone())),
            }
        }
        if groups.is_empty() {
            self.constraints.push(Formula::False);
            return Ok(Term::c(0.0));
        }
        if groups.len() == 1 {
            let (f, tris) = &groups[0];
            let inside = region_contains("flow", tris, p, &mut self.vars).unwrap_or(Formula::False);
            self.constraints.push(inside);
            return Ok(Term::c(*f));
        }
        let lo = groups.iter().map(|g| g.0).fold(f64::INFINITY, f64::min);
        let hi = groups.iter().map(|g| g.0).fold(f64::NEG_INFINITY, f64::max);
        let h = self.fresh("flow", VarRole::Orientation(self.scope.clone()), Interval::new(lo, hi))?;
        let mut parts = Vec::new();
        for (f, tris) in groups {
            let inside = region_contains("flow", &tris, p, &mut self.vars).unwrap_or(Formula::False);
            parts.push(Formula::and(vec![inside, Formula::eq(h.clone(), Term::c(f))]));
        }
        self.constraints.push(Formula::or(parts));
        Ok(h)
    }

    /// Polar form of `to - from`: the angle `t` and radius `r` satisfy
    /// `dx = -r sin t` and `dy = r cos t`.
    fn angle_to(&mut self, from: &TVec, to: &TVec) -> Result<Term, EncodeError> {
        let d = to.sub(from);
        if let Some(q) = d.as_const() {
            return Ok(Term::c(angle_of(q)));
        }
        let (bx, by) = d.bounds(&self.vars);
        let rmax = bx.lo.abs().max(bx.hi.abs()).hypot(by.lo.abs().max(by.hi.abs()));
        let t = self.fresh("angle", VarRole::Aux, Interval::new(-PI, PI))?;
        let r = self.fresh("radius", VarRole::Aux, Interval::new(0.0, rmax))?;
        self.constraints.push(Formula::and(vec![
            Formula::eq(Term::sqr(r.clone()), Term::sqr(d.x.clone()) + Term::sqr(d.y.clone())),
            Formula::eq(-(&r * &Term::sin(t.clone())), d.x),
            Formula::eq(&r * &Term::cos(t.clone()), d.y),
        ]));
        Ok(t)
    }

    fn distance(&mut self, a: &TVec, b: &TVec) -> Result<Term, EncodeError> {
        let d = b.sub(a);
        if let Some(q) = d.as_const() {
            return Ok(Term::c(q.norm()));
        }
        let (bx, by) = d.bounds(&self.vars);
        let rmax = bx.lo.abs().max(bx.hi.abs()).hypot(by.lo.abs().max(by.hi.abs()));
        let r = self.fresh("dist", VarRole::Aux, Interval::new(0.0, rmax))?;
        self.constraints.push(Formula::eq(
            Term::sqr(r.clone()),
            Term::sqr(d.x) + Term::sqr(d.y),
        ));
        Ok(r)
    }

    fn wrap(&mut self, a: Term) -> Result<Term, EncodeError> {
        if let Some(x) = a.as_const() {
            return Ok(Term::c(wrap_angle(x)));
        }
        let iv = self.bounds(&a);
        if !(iv.lo.is_finite() && iv.hi.is_finite()) {
            return Err(EncodeError::Unsupported(format!("wrap of an unbounded angle in `{}`", self.scope)));
        }
        let kmin = ((iv.lo - PI) / TAU).floor() as i64;
        let kmax = ((iv.hi + PI) / TAU).ceil() as i64;
        if kmax - kmin > MAX_WRAP_TURNS {
            return Err(EncodeError::Unsupported(format!("wrap over too many turns in `{}`", self.scope)));
        }
        if kmin == 0 && kmax == 0 {
            return Ok(a);
        }
        let w = self.fresh("wrap", VarRole::Aux, Interval::new(-PI, PI))?;
        let parts = (kmin..=kmax)
            .map(|k| Formula::eq(&a - TAU * k as f64, w.clone()))
            .collect();
        self.constraints.push(Formula::or(parts));
        Ok(w)
    }

    fn node(&mut self, n: &Node) -> Result<Sym, EncodeError> {
        use Node::*;
        let what = || crate::forest::show(n);
        Ok(match n {
            Num(x) => Sym::Scalar(Term::c(*x)),
            Bool(b) => Sym::Bool(if *b { Formula::True } else { Formula::False }),
            Slot(k) => self.slot(k)?,
            Vec2(a, b) => Sym::Vector(TVec::new(
                scalar(self.node(a)?, &what())?,
                scalar(self.node(b)?, &what())?,
            )),
            X(a) => Sym::Scalar(vector(self.node(a)?, &what())?.x),
            Y(a) => Sym::Scalar(vector(self.node(a)?, &what())?.y),
            Neg(a) => match self.node(a)? {
                Sym::Scalar(t) => Sym::Scalar(-t),
                Sym::Vector(v) => Sym::Vector(TVec::new(-v.x, -v.y)),
                Sym::Bool(_) => return Err(EncodeError::Type("negated boolean".into())),
            },
            Add(a, b) | Sub(a, b) => {
                let (x, y) = (self.node(a)?, self.node(b)?);
                let add = matches!(n, Add(..));
                match (x, y) {
                    (Sym::Scalar(x), Sym::Scalar(y)) => Sym::Scalar(if add { x + y } else { x - y }),
                    (Sym::Vector(p), Sym::Vector(q)) => Sym::Vector(if add { p.add(&q) } else { p.sub(&q) }),
                    _ => return Err(EncodeError::Type(format!("{}: mismatched operands", what()))),
                }
            }
            Mul(a, b) => match (self.node(a)?, self.node(b)?) {
                (Sym::Scalar(x), Sym::Scalar(y)) => Sym::Scalar(x * y),
                (Sym::Scalar(k), Sym::Vector(p)) | (Sym::Vector(p), Sym::Scalar(k)) => Sym::Vector(p.scale(&k)),
                _ => return Err(EncodeError::Type(format!("{}: mismatched operands", what()))),
            },
            Div(a, b) => {
                let x = scalar(self.node(a)?, &what())?;
                let y = scalar(self.node(b)?, &what())?;
                match y.as_const() {
                    Some(0.0) => return Err(EncodeError::Unsupported("division by zero".into())),
                    Some(d) => Sym::Scalar(x * (1.0 / d)),
                    None => {
                        let q = self.bounds(&x).div(&self.bounds(&y)).ok_or_else(|| {
                            EncodeError::Unsupported(format!("{}: divisor may be zero", what()))
                        })?;
                        let z = self.fresh("quot", VarRole::Aux, q)?;
                        self.constraints.push(Formula::eq(&z * &y, x));
                        Sym::Scalar(z)
                    }
                }
            }
            Range(a, b) => {
                let lo = scalar(self.node(a)?, &what())?;
                let hi = scalar(self.node(b)?, &what())?;
                let iv = Interval::new(self.bounds(&lo).lo, self.bounds(&hi).hi);
                let z = self.fresh("draw", VarRole::Draw(what()), iv)?;
                if lo.as_const().is_none() {
                    self.constraints.push(Formula::le(lo, z.clone()));
                }
                if hi.as_const().is_none() {
                    self.constraints.push(Formula::le(z.clone(), hi));
                }
                Sym::Scalar(z)
            }
            Normal(m, s) => {
                let m = scalar(self.node(m)?, &what())?;
                let s = scalar(self.node(s)?, &what())?;
                let (m, s) = (self.bounds(&m), self.bounds(&s));
                let spread = 10.0 * s.lo.abs().max(s.hi.abs());
                let z = self.fresh("draw", VarRole::Draw(what()), Interval::new(m.lo - spread, m.hi + spread))?;
                Sym::Scalar(z)
            }
            Options(xs) => {
                let syms = xs.iter().map(|x| self.node(x)).collect::<Result<Vec<_>, _>>()?;
                match syms.first() {
                    Some(Sym::Scalar(_)) => {
                        let ts: Vec<Term> = syms.into_iter().map(|s| scalar(s, "option")).collect::<Result<_, _>>()?;
                        let iv = ts.iter().map(|t| self.bounds(t)).reduce(|a, b| a.hull(&b)).expect("nonempty");
                        let z = self.fresh("draw", VarRole::Draw(what()), iv)?;
                        let parts = ts.into_iter().map(|t| Formula::eq(z.clone(), t)).collect();
                        self.constraints.push(Formula::or(parts));
                        Sym::Scalar(z)
                    }
                    Some(Sym::Vector(_)) => {
                        let vs: Vec<TVec> = syms.into_iter().map(|s| vector(s, "option")).collect::<Result<_, _>>()?;
                        let bs: Vec<(Interval, Interval)> = vs.iter().map(|v| v.bounds(&self.vars)).collect();
                        let ix = bs.iter().map(|b| b.0).reduce(|a, b| a.hull(&b)).expect("nonempty");
                        let iy = bs.iter().map(|b| b.1).reduce(|a, b| a.hull(&b)).expect("nonempty");
                        let x = self.fresh("draw_x", VarRole::Draw(what()), ix)?;
                        let y = self.fresh("draw_y", VarRole::Draw(what()), iy)?;
                        let parts = vs
                            .into_iter()
                            .map(|v| Formula::and(vec![Formula::eq(x.clone(), v.x), Formula::eq(y.clone(), v.y)]))
                            .collect();
                        self.constraints.push(Formula::or(parts));
                        Sym::Vector(TVec::new(x, y))
                    }
                    _ => return Err(EncodeError::Unsupported(format!("{}: options must be numbers or vectors", what()))),
                }
            }
            UniformIn(r) => self.uniform_in(r)?,
            OffsetLocal { pos, heading, offset } => {
                let p = vector(self.node(pos)?, &what())?;
                let h = scalar(self.node(heading)?, &what())?;
                let o = vector(self.node(offset)?, &what())?;
                Sym::Vector(offset_local(&p, &h, &o))
            }
            FieldAt(p) => {
                let p = vector(self.node(p)?, &what())?;
                Sym::Scalar(self.flow_at(None, &p)?)
            }
            Orientation(sel, p) => {
                let p = vector(self.node(p)?, &what())?;
                Sym::Scalar(self.flow_at(Some(sel), &p)?)
            }
            Distance(a, b) => {
                let (p, q) = (vector(self.node(a)?, &what())?, vector(self.node(b)?, &what())?);
                Sym::Scalar(self.distance(&p, &q)?)
            }
            DistanceToRegion(a, r) => {
                let p = vector(self.node(a)?, &what())?;
                match (p.as_const(), r) {
                    (Some(q), RegionNode::Map(sel)) => Sym::Scalar(Term::c(self.map.distance_to(sel, q))),
                    _ => return Err(EncodeError::Unsupported(format!("{} with a symbolic point", what()))),
                }
            }
            AngleTo(a, b) => {
                let (p, q) = (vector(self.node(a)?, &what())?, vector(self.node(b)?, &what())?);
                Sym::Scalar(self.angle_to(&p, &q)?)
            }
            Wrap(a) => {
                let t = scalar(self.node(a)?, &what())?;
                Sym::Scalar(self.wrap(t)?)
            }
            InRegion(a, r) => {
                let p = vector(self.node(a)?, &what())?;
                Sym::Bool(self.in_region(r, &p)?)
            }
            CanSee(v, t) => {
                let v = self.viewer(v)?;
                let p = vector(self.node(t)?, &what())?;
                Sym::Bool(visible_region_contains(&v, &p))
            }
            Cmp(op, a, b) => {
                let x = scalar(self.node(a)?, &what())?;
                let y = scalar(self.node(b)?, &what())?;
                Sym::Bool(match op {
                    CmpOp::Lt => Formula::lt(x, y),
                    CmpOp::Le => Formula::le(x, y),
                    CmpOp::Gt => Formula::gt(x, y),
                    CmpOp::Ge => Formula::ge(x, y),
                    CmpOp::Eq => Formula::eq(x, y),
                    CmpOp::Ne => Formula::eq(x, y).not(),
                })
            }
            Not(a) => Sym::Bool(boolean(self.node(a)?, &what())?.not()),
            And(a, b) => Sym::Bool(Formula::and(vec![
                boolean(self.node(a)?, &what())?,
                boolean(self.node(b)?, &what())?,
            ])),
            Or(a, b) => Sym::Bool(Formula::or(vec![
                boolean(self.node(a)?, &what())?,
                boolean(self.node(b)?, &what())?,
            ])),
        })
    }
}
