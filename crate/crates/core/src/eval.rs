//! Concrete evaluation of expression trees over a road map.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::dsl::CmpOp;
use crate::forest::{ExpressionForest, Node, RegionNode, SlotKey, Value, ViewerNode};
use crate::geomap::{Point2, Region, RegionSel, RoadMap, Triangle};

/// Tolerance of `==` between evaluated scalars.
pub const CMP_EPS: f64 = 1e-9;
const VISIBLE_TRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no traffic direction at {0}")]
    NoFlow(Point2),
    #[error("region `{0}` has no area on this map")]
    EmptyRegion(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("`{0}` needs a random draw")]
    Random(String),
    #[error("slot `{0}` is undefined")]
    Missing(SlotKey),
    #[error("division by zero")]
    DivByZero,
}

/// Source of randomness for distribution nodes.
pub trait Draws {
    /// Uniform in [0, 1).
    fn uniform(&mut self) -> f64;
    /// Standard normal.
    fn std_normal(&mut self) -> f64;
}

/// Angle of a direction vector: 0 along +y, counterclockwise.
pub fn angle_of(v: Point2) -> f64 {
    (-v.x).atan2(v.y)
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a - TAU * ((a + PI) / TAU).floor();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// A viewer with concrete pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sight {
    pub position: Point2,
    pub heading: Option<f64>,
    pub view_distance: f64,
    pub view_angle: f64,
}

impl Sight {
    pub fn sees(&self, p: Point2) -> bool {
        let d = p.sub(self.position);
        if d.norm() > self.view_distance {
            return false;
        }
        match self.heading {
            Some(h) if self.view_angle < TAU && d.norm() > 0.0 => {
                wrap_angle(angle_of(d) - h).abs() <= self.view_angle / 2.0
            }
            _ => true,
        }
    }
}

/// A region with its concrete parameters resolved.
#[derive(Debug, Clone)]
pub enum ConcreteRegion<'m> {
    Map(RegionSel, Vec<&'m Region>),
    Visible {
        base: Option<(RegionSel, Vec<&'m Region>)>,
        sight: Sight,
    },
}

impl ConcreteRegion<'_> {
    pub fn contains(&self, p: Point2) -> bool {
        match self {
            ConcreteRegion::Map(_, rs) => rs.iter().any(|r| r.contains(p)),
            ConcreteRegion::Visible { base, sight } => {
                sight.sees(p) && base.as_ref().is_none_or(|(_, rs)| rs.iter().any(|r| r.contains(p)))
            }
        }
    }

    /// Distance to the region; for visible parts this is the distance to
    /// the underlying map region, or zero when the point is seen.
    pub fn distance_to(&self, p: Point2) -> f64 {
        match self {
            ConcreteRegion::Map(_, rs) => rs.iter().map(|r| r.distance_to(p)).fold(f64::INFINITY, f64::min),
            ConcreteRegion::Visible { base, sight } => {
                if self.contains(p) {
                    return 0.0;
                }
                let to_disc = (p.dist(sight.position) - sight.view_distance).max(0.0);
                match base {
                    Some((_, rs)) => rs
                        .iter()
                        .map(|r| r.distance_to(p))
                        .fold(f64::INFINITY, f64::min)
                        .max(to_disc),
                    None => to_disc,
                }
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ConcreteRegion::Map(sel, _) => sel.to_string(),
            ConcreteRegion::Visible { base: Some((sel, _)), .. } => format!("visible {sel}"),
            ConcreteRegion::Visible { base: None, .. } => "visible plane".into(),
        }
    }

    /// A uniformly random point of the region.
    pub fn sample(&self, draws: &mut dyn Draws) -> Result<Point2, EvalError> {
        match self {
            ConcreteRegion::Map(sel, rs) => {
                let tris: Vec<&Triangle> = rs.iter().flat_map(|r| r.triangles.iter()).collect();
                sample_triangles(&tris, draws).ok_or_else(|| EvalError::EmptyRegion(sel.to_string()))
            }
            ConcreteRegion::Visible { base: None, sight } => {
                let r = sight.view_distance * draws.uniform().sqrt();
                let theta = match sight.heading {
                    Some(h) if sight.view_angle < TAU => h + (draws.uniform() - 0.5) * sight.view_angle,
                    _ => draws.uniform() * TAU,
                };
                Ok(sight.position.add(Point2::new(0.0, r).rotate(theta)))
            }
            ConcreteRegion::Visible { base: Some((sel, rs)), sight } => {
                let tris: Vec<&Triangle> = rs
                    .iter()
                    .flat_map(|r| r.triangles.iter())
                    .filter(|t| t.distance_to(sight.position) <= sight.view_distance)
                    .collect();
                for _ in 0..VISIBLE_TRIES {
                    let Some(p) = sample_triangles(&tris, draws) else { break };
                    if sight.sees(p) {
                        return Ok(p);
                    }
                }
                Err(EvalError::EmptyRegion(format!("visible {sel}")))
            }
        }
    }
}

/// Area-weighted triangle choice followed by a uniform point inside it.
pub fn sample_triangles(tris: &[&Triangle], draws: &mut dyn Draws) -> Option<Point2> {
    let total: f64 = tris.iter().map(|t| t.area()).sum();
    if tris.is_empty() || !(total > 0.0) {
        return None;
    }
    let mut pick = draws.uniform() * total;
    let mut chosen = tris[tris.len() - 1];
    for t in tris {
        if pick < t.area() {
            chosen = t;
            break;
        }
        pick -= t.area();
    }
    let (mut s, mut t) = (draws.uniform(), draws.uniform());
    if s + t > 1.0 {
        s = 1.0 - s;
        t = 1.0 - t;
    }
    Some(chosen.point_at(s, t))
}

fn scalar(v: Value, what: &str) -> Result<f64, EvalError> {
    match v {
        Value::Scalar(x) => Ok(x),
        other => Err(EvalError::Type(format!("{what}: expected a number, got {other}"))),
    }
}

fn vector(v: Value, what: &str) -> Result<Point2, EvalError> {
    match v {
        Value::Vector(p) => Ok(p),
        other => Err(EvalError::Type(format!("{what}: expected a vector, got {other}"))),
    }
}

fn boolean(v: Value, what: &str) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(EvalError::Type(format!("{what}: expected a boolean, got {other}"))),
    }
}

/// Evaluates the slots of a forest, memoising each slot once. Conditioned
/// slots evaluate to their observed values.
pub struct Evaluator<'a> {
    ef: &'a ExpressionForest,
    map: &'a RoadMap,
    values: BTreeMap<SlotKey, Value>,
}

impl<'a> Evaluator<'a> {
    pub fn new(ef: &'a ExpressionForest, map: &'a RoadMap) -> Self {
        Self {
            ef,
            map,
            values: ef.conditioning().clone(),
        }
    }

    pub fn values(&self) -> &BTreeMap<SlotKey, Value> {
        &self.values
    }

    pub fn into_values(self) -> BTreeMap<SlotKey, Value> {
        self.values
    }

    /// Evaluates every slot in dependency order.
    pub fn eval_all(&mut self, draws: &mut dyn Draws) -> Result<(), EvalError> {
        for k in &self.ef.order {
            self.slot(k, Some(draws))?;
        }
        Ok(())
    }

    pub fn slot(&mut self, key: &SlotKey, draws: Option<&mut dyn Draws>) -> Result<Value, EvalError> {
        if let Some(v) = self.values.get(key) {
            return Ok(*v);
        }
        let tree = self.ef.tree(key).ok_or_else(|| EvalError::Missing(key.clone()))?;
        let mut draws = draws;
        let v = self.node(tree, &mut draws)?;
        self.values.insert(key.clone(), v);
        Ok(v)
    }

    /// Evaluates a boolean tree without drawing randomness.
    pub fn check(&mut self, n: &Node) -> Result<bool, EvalError> {
        boolean(self.node(n, &mut None)?, "condition")
    }

    pub fn region(
        &mut self,
        r: &RegionNode,
        draws: &mut Option<&mut dyn Draws>,
    ) -> Result<ConcreteRegion<'a>, EvalError> {
        let map: &'a RoadMap = self.map;
        let select = |sel: &RegionSel| (sel.clone(), map.regions.iter().filter(|r| r.matches(sel)).collect::<Vec<_>>());
        Ok(match r {
            RegionNode::Map(sel) => {
                let (sel, rs) = select(sel);
                ConcreteRegion::Map(sel, rs)
            }
            RegionNode::Visible { base, viewer } => ConcreteRegion::Visible {
                base: base.as_ref().map(select),
                sight: self.viewer(viewer, draws)?,
            },
        })
    }

    fn viewer(&mut self, v: &ViewerNode, draws: &mut Option<&mut dyn Draws>) -> Result<Sight, EvalError> {
        let position = vector(self.node(&v.position, draws)?, "viewer position")?;
        let heading = match &v.heading {
            Some(h) => Some(scalar(self.node(h, draws)?, "viewer heading")?),
            None => None,
        };
        Ok(Sight {
            position,
            heading,
            view_distance: v.view_distance,
            view_angle: v.view_angle,
        })
    }

    fn draw<'d>(draws: &'d mut Option<&mut dyn Draws>, what: &str) -> Result<&'d mut dyn Draws, EvalError> {
        match draws {
            Some(d) => Ok(&mut **d),
            None => Err(EvalError::Random(what.to_string())),
        }
    }

    pub fn node(&mut self, n: &Node, draws: &mut Option<&mut dyn Draws>) -> Result<Value, EvalError> {
        use Node::*;
        let num = |s: &mut Self, a: &Node, d: &mut Option<&mut dyn Draws>| -> Result<f64, EvalError> {
            scalar(s.node(a, d)?, &crate::forest::show(a))
        };
        let vec = |s: &mut Self, a: &Node, d: &mut Option<&mut dyn Draws>| -> Result<Point2, EvalError> {
            vector(s.node(a, d)?, &crate::forest::show(a))
        };
        Ok(match n {
            Num(x) => Value::Scalar(*x),
            Bool(b) => Value::Bool(*b),
            Slot(k) => {
                if let Some(v) = self.values.get(k) {
                    return Ok(*v);
                }
                let tree = self.ef.tree(k).ok_or_else(|| EvalError::Missing(k.clone()))?;
                let v = self.node(tree, draws)?;
                self.values.insert(k.clone(), v);
                v
            }
            Vec2(a, b) => Value::Vector(Point2::new(num(self, a, draws)?, num(self, b, draws)?)),
            X(a) => Value::Scalar(vec(self, a, draws)?.x),
            Y(a) => Value::Scalar(vec(self, a, draws)?.y),
            Neg(a) => match self.node(a, draws)? {
                Value::Scalar(x) => Value::Scalar(-x),
                Value::Vector(p) => Value::Vector(p.scale(-1.0)),
                Value::Bool(_) => return Err(EvalError::Type("negated boolean".into())),
            },
            Add(a, b) | Sub(a, b) => {
                let sign = if matches!(n, Add(..)) { 1.0 } else { -1.0 };
                match (self.node(a, draws)?, self.node(b, draws)?) {
                    (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(x + sign * y),
                    (Value::Vector(p), Value::Vector(q)) => Value::Vector(p.add(q.scale(sign))),
                    (x, y) => return Err(EvalError::Type(format!("cannot combine {x} and {y}"))),
                }
            }
            Mul(a, b) => match (self.node(a, draws)?, self.node(b, draws)?) {
                (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(x * y),
                (Value::Scalar(k), Value::Vector(p)) | (Value::Vector(p), Value::Scalar(k)) => {
                    Value::Vector(p.scale(k))
                }
                (x, y) => return Err(EvalError::Type(format!("cannot multiply {x} and {y}"))),
            },
            Div(a, b) => {
                let d = num(self, b, draws)?;
                if d == 0.0 {
                    return Err(EvalError::DivByZero);
                }
                match self.node(a, draws)? {
                    Value::Scalar(x) => Value::Scalar(x / d),
                    Value::Vector(p) => Value::Vector(p.scale(1.0 / d)),
                    Value::Bool(_) => return Err(EvalError::Type("divided boolean".into())),
                }
            }
            Range(a, b) => {
                let (lo, hi) = (num(self, a, draws)?, num(self, b, draws)?);
                let u = Self::draw(draws, "Range")?.uniform();
                Value::Scalar(lo + u * (hi - lo))
            }
            Normal(a, b) => {
                let (m, s) = (num(self, a, draws)?, num(self, b, draws)?);
                let z = Self::draw(draws, "Normal")?.std_normal();
                if z.abs() > 10.0 {
                    log::debug!("normal draw {z} clamped to 10 standard deviations");
                }
                Value::Scalar(m + s * z.clamp(-10.0, 10.0))
            }
            Options(xs) => {
                let u = Self::draw(draws, "Options")?.uniform();
                let i = ((u * xs.len() as f64) as usize).min(xs.len() - 1);
                self.node(&xs[i], draws)?
            }
            UniformIn(r) => {
                let region = self.region(r, draws)?;
                Value::Vector(region.sample(Self::draw(draws, "uniform point")?)?)
            }
            OffsetLocal { pos, heading, offset } => {
                let p = vec(self, pos, draws)?;
                let h = num(self, heading, draws)?;
                let o = vec(self, offset, draws)?;
                Value::Vector(p.add(o.rotate(h)))
            }
            FieldAt(p) => {
                let p = vec(self, p, draws)?;
                Value::Scalar(self.map.road_dir_at(p).ok_or(EvalError::NoFlow(p))?)
            }
            Orientation(sel, p) => {
                let p = vec(self, p, draws)?;
                let h = self.map.orientation_at(sel, p).or_else(|| self.map.road_dir_at(p));
                Value::Scalar(h.ok_or(EvalError::NoFlow(p))?)
            }
            Distance(a, b) => Value::Scalar(vec(self, a, draws)?.dist(vec(self, b, draws)?)),
            DistanceToRegion(a, r) => {
                let p = vec(self, a, draws)?;
                Value::Scalar(self.region(r, draws)?.distance_to(p))
            }
            AngleTo(a, b) => {
                let (p, q) = (vec(self, a, draws)?, vec(self, b, draws)?);
                Value::Scalar(angle_of(q.sub(p)))
            }
            Wrap(a) => Value::Scalar(wrap_angle(num(self, a, draws)?)),
            InRegion(a, r) => {
                let p = vec(self, a, draws)?;
                Value::Bool(self.region(r, draws)?.contains(p))
            }
            CanSee(v, t) => {
                let sight = self.viewer(v, draws)?;
                Value::Bool(sight.sees(vec(self, t, draws)?))
            }
            Cmp(op, a, b) => {
                let (x, y) = (num(self, a, draws)?, num(self, b, draws)?);
                Value::Bool(match op {
                    CmpOp::Lt => x < y,
                    CmpOp::Le => x <= y,
                    CmpOp::Gt => x > y,
                    CmpOp::Ge => x >= y,
                    CmpOp::Eq => (x - y).abs() <= CMP_EPS,
                    CmpOp::Ne => (x - y).abs() > CMP_EPS,
                })
            }
            Not(a) => Value::Bool(!boolean(self.node(a, draws)?, "not")?),
            And(a, b) => Value::Bool(boolean(self.node(a, draws)?, "and")? && boolean(self.node(b, draws)?, "and")?),
            Or(a, b) => Value::Bool(boolean(self.node(a, draws)?, "or")? || boolean(self.node(b, draws)?, "or")?),
        })
    }
}
