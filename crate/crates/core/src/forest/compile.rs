//! Lowering of an elaborated program into expression trees.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{CompileError, Entity, ExpressionForest, Field, Node, RegionNode, SlotKey, ViewerNode};
use crate::dsl::{BinOp, DefBody, Expr, ObjectClass, ObjectDef, ScenarioAst, SpecifierKind};
use crate::geomap::{RegionKind, RegionSel};

pub const DEFAULT_VIEW_DISTANCE: f64 = 50.0;
pub const DEFAULT_VIEW_ANGLE: f64 = 2.0 * PI / 3.0;

enum Def<'a> {
    Entity(Entity),
    Value,
    Region(&'a Expr),
    Field(&'a Expr),
}

struct Ctx<'a> {
    defs: BTreeMap<&'a str, Def<'a>>,
}

fn unsupported<T>(msg: impl Into<String>) -> Result<T, CompileError> {
    Err(CompileError::Unsupported(msg.into()))
}

fn b(n: Node) -> Box<Node> {
    Box::new(n)
}

impl<'a> Ctx<'a> {
    fn entity(&self, name: &str) -> Option<&Entity> {
        match self.defs.get(name) {
            Some(Def::Entity(e)) => Some(e),
            _ => None,
        }
    }

    fn oriented(&self, e: &Expr) -> Option<&Entity> {
        match e {
            Expr::Ident(n) => self.entity(n).filter(|e| e.is_oriented()),
            _ => None,
        }
    }

    fn is_region(&self, e: &Expr) -> bool {
        match e {
            Expr::Region(_) | Expr::Visible(_) => true,
            Expr::Ident(n) => matches!(self.defs.get(n.as_str()), Some(Def::Region(_))),
            _ => false,
        }
    }

    fn is_field(&self, e: &Expr) -> bool {
        match e {
            Expr::RoadDirection => true,
            Expr::Ident(n) => matches!(self.defs.get(n.as_str()), Some(Def::Field(_))),
            _ => false,
        }
    }

    fn viewer(&self, e: Option<&Expr>) -> Result<ViewerNode, CompileError> {
        let ego = Expr::Ident("ego".into());
        let e = e.unwrap_or(&ego);
        if let Expr::Ident(n) = e {
            if let Some(ent) = self.entity(n) {
                return Ok(ViewerNode {
                    position: b(Node::Slot(SlotKey::position(n))),
                    heading: ent.is_oriented().then(|| b(Node::Slot(SlotKey::heading(n)))),
                    view_distance: ent.view_distance,
                    view_angle: ent.view_angle,
                });
            }
        }
        Ok(ViewerNode {
            position: b(self.expr(e, None)?),
            heading: None,
            view_distance: DEFAULT_VIEW_DISTANCE,
            view_angle: DEFAULT_VIEW_ANGLE,
        })
    }

    fn region(&self, e: &Expr) -> Result<RegionNode, CompileError> {
        match e {
            Expr::Region(sel) => Ok(RegionNode::Map(sel.clone())),
            Expr::Visible(r) => match self.region(r)? {
                RegionNode::Map(sel) => Ok(RegionNode::Visible {
                    base: Some(sel),
                    viewer: self.viewer(None)?,
                }),
                RegionNode::Visible { .. } => unsupported("`visible` applied twice"),
            },
            Expr::Ident(n) => match self.defs.get(n.as_str()) {
                Some(Def::Region(inner)) => self.region(inner),
                Some(_) => unsupported(format!("`{n}` is not a region")),
                None => Err(CompileError::Unresolved(n.clone())),
            },
            _ => unsupported("expected a region"),
        }
    }

    /// Traffic direction at `at`.
    fn field_at(&self, f: &Expr, at: Node) -> Result<Node, CompileError> {
        match f {
            Expr::RoadDirection => Ok(Node::FieldAt(b(at))),
            Expr::Ident(n) => match self.defs.get(n.as_str()) {
                Some(Def::Field(inner)) => self.field_at(inner, at),
                _ => unsupported(format!("`{n}` is not a vector field")),
            },
            _ => unsupported("expected a vector field"),
        }
    }

    /// A heading-valued expression; fields are read at `at`.
    fn heading(&self, e: &Expr, at: Option<&Node>) -> Result<Node, CompileError> {
        if self.is_field(e) {
            return match at {
                Some(p) => self.field_at(e, p.clone()),
                None => unsupported("a vector field needs a position to be read at"),
            };
        }
        if let Expr::RelativeTo(x, f) = e {
            if self.is_field(f) {
                return Ok(Node::Add(b(self.expr(x, at)?), b(self.heading(f, at)?)));
            }
        }
        if let Some(ent) = self.oriented(e) {
            return Ok(Node::Slot(SlotKey::heading(&ent.name)));
        }
        self.expr(e, at)
    }

    /// Value of an expression. `at` is the position of the object being
    /// defined, where bare vector fields are evaluated.
    fn expr(&self, e: &Expr, at: Option<&Node>) -> Result<Node, CompileError> {
        let ego = Expr::Ident("ego".into());
        Ok(match e {
            Expr::Number(x) => Node::Num(*x),
            Expr::Bool(v) => Node::Bool(*v),
            Expr::Ident(n) => match self.defs.get(n.as_str()) {
                Some(Def::Entity(_)) => Node::Slot(SlotKey::position(n)),
                Some(Def::Value) => Node::Slot(SlotKey::value(n)),
                Some(Def::Region(_)) => return unsupported(format!("region `{n}` used as a value")),
                Some(Def::Field(inner)) => return self.heading(inner, at),
                None => return Err(CompileError::Unresolved(n.clone())),
            },
            Expr::Region(_) | Expr::Visible(_) => return unsupported("region used as a value"),
            Expr::RoadDirection => return self.heading(e, at),
            Expr::Vector(x, y) => Node::Vec2(b(self.expr(x, at)?), b(self.expr(y, at)?)),
            Expr::Attr(a, name) => {
                if let Expr::Ident(n) = a.as_ref() {
                    if let Some(ent) = self.entity(n) {
                        return Ok(match name.as_str() {
                            "position" => Node::Slot(SlotKey::position(n)),
                            "heading" => Node::Slot(SlotKey::heading(n)),
                            "width" => Node::Num(ent.width),
                            "length" => Node::Num(ent.length),
                            "viewDistance" => Node::Num(ent.view_distance),
                            "viewAngle" => Node::Num(ent.view_angle),
                            p if ent.extras.iter().any(|x| x == p) => {
                                Node::Slot(SlotKey::new(n, Field::Extra(p.to_string())))
                            }
                            p => return unsupported(format!("`{n}` has no property `{p}`")),
                        });
                    }
                }
                let v = self.expr(a, at)?;
                match name.as_str() {
                    "x" => Node::X(b(v)),
                    "y" => Node::Y(b(v)),
                    p => return unsupported(format!("unknown component `{p}`")),
                }
            }
            Expr::Neg(a) => Node::Neg(b(self.expr(a, at)?)),
            Expr::Binary(op, x, y) => {
                let (x, y) = (b(self.expr(x, at)?), b(self.expr(y, at)?));
                match op {
                    BinOp::Add => Node::Add(x, y),
                    BinOp::Sub => Node::Sub(x, y),
                    BinOp::Mul => Node::Mul(x, y),
                    BinOp::Div => Node::Div(x, y),
                }
            }
            Expr::Range(x, y) => Node::Range(b(self.expr(x, at)?), b(self.expr(y, at)?)),
            Expr::Normal(x, y) => Node::Normal(b(self.expr(x, at)?), b(self.expr(y, at)?)),
            Expr::Options(xs) => Node::Options(xs.iter().map(|x| self.expr(x, at)).collect::<Result<_, _>>()?),
            Expr::RelativeTo(x, r) => {
                if self.is_field(r) {
                    return self.heading(e, at);
                }
                match self.oriented(r) {
                    Some(ent) => Node::OffsetLocal {
                        pos: b(Node::Slot(SlotKey::position(&ent.name))),
                        heading: b(Node::Slot(SlotKey::heading(&ent.name))),
                        offset: b(self.expr(x, at)?),
                    },
                    None => Node::Add(b(self.expr(x, at)?), b(self.expr(r, at)?)),
                }
            }
            Expr::OffsetBy(x, y) => Node::Add(b(self.expr(x, at)?), b(self.expr(y, at)?)),
            Expr::OffsetAlong(x, h, v) => {
                let base = self.expr(x, at)?;
                Node::OffsetLocal {
                    heading: b(self.heading(h, Some(&base))?),
                    pos: b(base),
                    offset: b(self.expr(v, at)?),
                }
            }
            Expr::DistanceTo { from, to } => {
                let from = self.expr(from.as_deref().unwrap_or(&ego), at)?;
                if self.is_region(to) {
                    Node::DistanceToRegion(b(from), self.region(to)?)
                } else {
                    Node::Distance(b(from), b(self.expr(to, at)?))
                }
            }
            Expr::AngleTo { from, to } => Node::AngleTo(
                b(self.expr(from.as_deref().unwrap_or(&ego), at)?),
                b(self.expr(to, at)?),
            ),
            Expr::RelativeHeading { of, from } => Node::Wrap(b(Node::Sub(
                b(self.heading(of, at)?),
                b(self.heading(from.as_deref().unwrap_or(&ego), at)?),
            ))),
            Expr::ApparentHeading { of, from } => Node::Wrap(b(Node::Sub(
                b(self.heading(of, at)?),
                b(Node::AngleTo(
                    b(self.expr(from.as_deref().unwrap_or(&ego), at)?),
                    b(self.expr(of, at)?),
                )),
            ))),
            Expr::FieldAt(f, v) => self.field_at(f, self.expr(v, at)?)?,
            Expr::Front(o) | Expr::Back(o) => {
                let Some(ent) = self.oriented(o) else {
                    return unsupported("`front of`/`back of` needs an object");
                };
                let half = if matches!(e, Expr::Front(_)) { ent.length / 2.0 } else { -ent.length / 2.0 };
                Node::OffsetLocal {
                    pos: b(Node::Slot(SlotKey::position(&ent.name))),
                    heading: b(Node::Slot(SlotKey::heading(&ent.name))),
                    offset: b(Node::Vec2(b(Node::Num(0.0)), b(Node::Num(half)))),
                }
            }
            Expr::CanSee(x, y) => Node::CanSee(self.viewer(Some(x))?, b(self.expr(y, at)?)),
            Expr::In(x, r) => Node::InRegion(b(self.expr(x, at)?), self.region(r)?),
            Expr::Compare(op, x, y) => Node::Cmp(*op, b(self.expr(x, at)?), b(self.expr(y, at)?)),
            Expr::Not(x) => Node::Not(b(self.expr(x, at)?)),
            Expr::And(x, y) => Node::And(b(self.expr(x, at)?), b(self.expr(y, at)?)),
            Expr::Or(x, y) => Node::Or(b(self.expr(x, at)?), b(self.expr(y, at)?)),
        })
    }

    fn entity_for(name: &str, o: &ObjectDef) -> Entity {
        let (mut width, mut length) = o.class.dimensions();
        let mut view_distance = DEFAULT_VIEW_DISTANCE;
        let mut view_angle = DEFAULT_VIEW_ANGLE;
        let mut extras = Vec::new();
        for s in &o.specifiers {
            if let SpecifierKind::With(p, v) = &s.kind {
                let num = match v {
                    Expr::Number(x) => Some(*x),
                    _ => None,
                };
                match (p.as_str(), num) {
                    ("width", Some(x)) => width = x,
                    ("length", Some(x)) => length = x,
                    ("viewDistance", Some(x)) => view_distance = x,
                    ("viewAngle", Some(x)) => view_angle = x,
                    _ => extras.push(p.clone()),
                }
            }
        }
        Entity {
            name: name.to_string(),
            class: Some(o.class),
            width,
            length,
            view_distance,
            view_angle,
            extras,
        }
    }

    fn position(&self, me: &Entity, o: &ObjectDef) -> Result<Node, CompileError> {
        use SpecifierKind::*;
        let ego = Expr::Ident("ego".into());
        let Some(spec) = o.specifiers.iter().find(|s| s.kind.determines_position()) else {
            let sel = if o.class.is_vehicle() {
                Some(RegionKind::Road)
            } else if o.class == ObjectClass::Pedestrian {
                Some(RegionKind::Sidewalk)
            } else {
                None
            };
            return Ok(match sel {
                Some(k) => Node::UniformIn(RegionNode::Map(RegionSel::Kind(k))),
                None => Node::Vec2(b(Node::Num(0.0)), b(Node::Num(0.0))),
            });
        };
        let relative = |r: &Expr, offset: Node| -> Result<Node, CompileError> {
            let Some(ent) = self.oriented(r) else {
                return unsupported("relative position specifiers need an oriented reference");
            };
            Ok(Node::OffsetLocal {
                pos: b(Node::Slot(SlotKey::position(&ent.name))),
                heading: b(Node::Slot(SlotKey::heading(&ent.name))),
                offset: b(offset),
            })
        };
        let dist = |d: &Option<Expr>| -> Result<Node, CompileError> {
            match d {
                Some(d) => self.expr(d, None),
                None => Ok(Node::Num(0.0)),
            }
        };
        let zero = || b(Node::Num(0.0));
        let half_width = Node::Num(me.width / 2.0);
        Ok(match &spec.kind {
            At(v) => self.expr(v, None)?,
            On(r) => Node::UniformIn(self.region(r)?),
            AheadOf(r, d) => relative(r, Node::Vec2(zero(), b(dist(d)?)))?,
            Behind(r, d) => relative(r, Node::Vec2(zero(), b(Node::Neg(b(dist(d)?)))))?,
            LeftOf(r, d) => relative(r, Node::Vec2(b(Node::Neg(b(Node::Add(b(dist(d)?), b(half_width))))), zero()))?,
            RightOf(r, d) => relative(r, Node::Vec2(b(Node::Add(b(dist(d)?), b(half_width))), zero()))?,
            OffsetBy(v) => relative(&ego, self.expr(v, None)?)?,
            OffsetAlong(h, v) => {
                let base = Node::Slot(SlotKey::position("ego"));
                Node::OffsetLocal {
                    heading: b(self.heading(h, Some(&base))?),
                    pos: b(base),
                    offset: b(self.expr(v, None)?),
                }
            }
            Beyond { target, offset, from } => {
                let t = self.expr(target, None)?;
                let f = self.expr(from.as_ref().unwrap_or(&ego), None)?;
                let off = match offset {
                    Expr::Vector(..) => self.expr(offset, None)?,
                    o if self.oriented(o).is_none() && !matches!(o, Expr::Ident(_)) => {
                        Node::Vec2(zero(), b(self.expr(o, None)?))
                    }
                    o => self.expr(o, None)?,
                };
                Node::OffsetLocal {
                    heading: b(Node::AngleTo(b(f), b(t.clone()))),
                    pos: b(t),
                    offset: b(off),
                }
            }
            Visible(from) => Node::UniformIn(RegionNode::Visible {
                base: None,
                viewer: self.viewer(from.as_ref())?,
            }),
            _ => unreachable!("position specifiers only"),
        })
    }

    fn heading_tree(&self, me: &Entity, o: &ObjectDef) -> Result<Node, CompileError> {
        use SpecifierKind::*;
        let ego = Expr::Ident("ego".into());
        let pos = Node::Slot(SlotKey::position(&me.name));
        if let Some(spec) = o.specifiers.iter().find(|s| s.kind.determines_heading()) {
            return Ok(match &spec.kind {
                Facing(h) => self.heading(h, Some(&pos))?,
                FacingToward(v) => Node::AngleTo(b(pos), b(self.expr(v, None)?)),
                FacingAwayFrom(v) => Node::AngleTo(b(self.expr(v, None)?), b(pos)),
                ApparentlyFacing(h, from) => Node::Add(
                    b(self.expr(h, None)?),
                    b(Node::AngleTo(b(self.expr(from.as_ref().unwrap_or(&ego), None)?), b(pos))),
                ),
                _ => unreachable!("heading specifiers only"),
            });
        }
        // `on R` orients the object along R when R carries a traffic direction
        if let Some(SpecifierKind::On(r)) = o.specifiers.iter().map(|s| &s.kind).find(|k| k.determines_position()) {
            let sel = match self.region(r)? {
                RegionNode::Map(sel) => Some(sel),
                RegionNode::Visible { base, .. } => base,
            };
            if let Some(sel) = sel {
                let oriented = match &sel {
                    RegionSel::Kind(k) => matches!(k, RegionKind::Road | RegionKind::Lane | RegionKind::Curb),
                    _ => false,
                };
                if oriented {
                    return Ok(Node::Orientation(sel, b(pos)));
                }
            }
        }
        Ok(if o.class.is_vehicle() {
            Node::FieldAt(b(pos))
        } else if o.class == ObjectClass::Pedestrian {
            Node::Range(b(Node::Num(-PI)), b(Node::Num(PI)))
        } else {
            Node::Num(0.0)
        })
    }
}

fn topo_order(trees: &BTreeMap<SlotKey, Node>, roots: &[SlotKey]) -> Result<Vec<SlotKey>, CompileError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn visit(
        k: &SlotKey,
        trees: &BTreeMap<SlotKey, Node>,
        marks: &mut BTreeMap<SlotKey, Mark>,
        out: &mut Vec<SlotKey>,
    ) -> Result<(), CompileError> {
        match marks.get(k) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Active) => return Err(CompileError::Cycle(k.to_string())),
            None => {}
        }
        marks.insert(k.clone(), Mark::Active);
        let tree = trees.get(k).ok_or_else(|| CompileError::Unresolved(k.to_string()))?;
        let mut refs = Vec::new();
        tree.refs(&mut refs);
        for r in &refs {
            visit(r, trees, marks, out)?;
        }
        marks.insert(k.clone(), Mark::Done);
        out.push(k.clone());
        Ok(())
    }
    let mut marks = BTreeMap::new();
    let mut out = Vec::new();
    for k in roots {
        visit(k, trees, &mut marks, &mut out)?;
    }
    Ok(out)
}

/// Builds the expression forest of a validated program.
pub fn compile(ast: &ScenarioAst) -> Result<ExpressionForest, CompileError> {
    let mut ctx = Ctx { defs: BTreeMap::new() };
    let mut entities = Vec::new();
    let mut trees = BTreeMap::new();
    let mut roots = Vec::new();
    for d in &ast.defs {
        match &d.body {
            DefBody::Value(e) => {
                if ctx.is_region(e) {
                    ctx.defs.insert(&d.name, Def::Region(e));
                    continue;
                }
                if ctx.is_field(e) {
                    ctx.defs.insert(&d.name, Def::Field(e));
                    continue;
                }
                let tree = ctx.expr(e, None)?;
                let key = SlotKey::value(&d.name);
                trees.insert(key.clone(), tree);
                roots.push(key);
                ctx.defs.insert(&d.name, Def::Value);
                entities.push(Entity {
                    name: d.name.clone(),
                    class: None,
                    width: 0.0,
                    length: 0.0,
                    view_distance: DEFAULT_VIEW_DISTANCE,
                    view_angle: DEFAULT_VIEW_ANGLE,
                    extras: Vec::new(),
                });
            }
            DefBody::Object(o) => {
                let me = Ctx::entity_for(&d.name, o);
                // the object's own trees may refer to its position and heading
                ctx.defs.insert(&d.name, Def::Entity(me.clone()));
                let pos = ctx.position(&me, o)?;
                trees.insert(SlotKey::position(&d.name), pos);
                if me.is_oriented() {
                    let h = ctx.heading_tree(&me, o)?;
                    trees.insert(SlotKey::heading(&d.name), h);
                }
                for s in &o.specifiers {
                    if let SpecifierKind::With(p, v) = &s.kind {
                        if me.extras.contains(p) {
                            let t = ctx.expr(v, Some(&Node::Slot(SlotKey::position(&d.name))))?;
                            trees.insert(SlotKey::new(&d.name, Field::Extra(p.clone())), t);
                        }
                    }
                }
                roots.extend(me.slots());
                entities.push(me);
            }
        }
    }
    let requirements = ast
        .requirements
        .iter()
        .map(|r| ctx.expr(&r.cond, None))
        .collect::<Result<Vec<_>, _>>()?;
    let mut req_refs = Vec::new();
    for r in &requirements {
        r.refs(&mut req_refs);
    }
    for k in &req_refs {
        if !trees.contains_key(k) {
            return Err(CompileError::Unresolved(k.to_string()));
        }
    }
    let order = topo_order(&trees, &roots)?;
    Ok(ExpressionForest {
        entities,
        trees,
        order,
        requirements,
        conditioning: BTreeMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    #[test]
    fn two_cars_have_four_feature_trees() {
        let ast = parse(
            "ego = Car on road\notherCar = Car ahead of ego by Range(4, 10)\n\
             require (distance from otherCar to intersection) > 4\n",
        )
        .unwrap();
        let ef = compile(&ast).unwrap();
        let features: Vec<String> = ef.trees.keys().filter(|k| ef.is_feature(k)).map(ToString::to_string).collect();
        assert_eq!(features, ["ego.position", "ego.heading", "otherCar.position", "otherCar.heading"]);
        assert!(matches!(ef.trees[&SlotKey::position("ego")], Node::UniformIn(_)));
        assert!(matches!(ef.trees[&SlotKey::heading("ego")], Node::Orientation(..)));
        assert!(matches!(ef.trees[&SlotKey::heading("otherCar")], Node::FieldAt(_)));
        assert_eq!(ef.requirements.len(), 1);
        let refs = ef.refs(&SlotKey::position("otherCar"));
        assert_eq!(refs, [SlotKey::position("ego"), SlotKey::heading("ego")]);
    }

    #[test]
    fn shared_point_is_an_intermediate() {
        let ast = parse("spot = OrientedPoint on curb\nego = Car right of spot by 0.5\nsideCar = Car left of spot by 0.5\n")
            .unwrap();
        let ef = compile(&ast).unwrap();
        assert!(!ef.is_feature(&SlotKey::position("spot")));
        assert!(ef.refs(&SlotKey::position("ego")).contains(&SlotKey::position("spot")));
        assert!(ef.refs(&SlotKey::position("sideCar")).contains(&SlotKey::heading("spot")));
        let pos = ef.order.iter().position(|k| *k == SlotKey::position("spot")).unwrap();
        let ego = ef.order.iter().position(|k| *k == SlotKey::position("ego")).unwrap();
        assert!(pos < ego);
    }

    #[test]
    fn constant_program() {
        let ef = compile(&parse("ego = Car at (0, 0)\n").unwrap()).unwrap();
        let t = &ef.trees[&SlotKey::position("ego")];
        assert!(!t.has_randomness());
        assert_eq!(*t, Node::Vec2(b(Node::Num(0.0)), b(Node::Num(0.0))));
    }

    #[test]
    fn conditioning_round_trip() {
        let mut ef = compile(&parse("ego = Car at (0, 0)\n").unwrap()).unwrap();
        let fresh = ef.clone();
        ef.uncondition();
        assert_eq!(ef, fresh);
        ef.condition(SlotKey::heading("ego"), super::super::Value::Scalar(0.1));
        assert_ne!(ef, fresh);
        ef.uncondition();
        assert_eq!(ef, fresh);
    }

    #[test]
    fn dump_lists_arrows() {
        let ef = compile(&parse("ego = Car on road\nc = Car behind ego by 5, facing toward ego\n").unwrap()).unwrap();
        let d = ef.dump();
        assert!(d.contains("feature c.position  <- ego.position, ego.heading"), "{d}");
        assert!(d.contains("angle(c.position, ego.position)"), "{d}");
    }
}
