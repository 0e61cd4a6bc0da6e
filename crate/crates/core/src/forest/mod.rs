//! Expression forest: one tree per semantic feature of every scene object,
//! shared intermediate trees, and the dependency analysis that orders
//! feature groups for incremental querying.

mod compile;
mod deps;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{CmpOp, ObjectClass};
use crate::geomap::{Point2, RegionSel};

pub use compile::compile;
pub use deps::{analyze_dependencies, FeatureGroup, SortedFeatures};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("`{0}` is not defined")]
    Unresolved(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("dependency cycle through `{0}`")]
    Cycle(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditionError {
    #[error("label object `{object}` has no value for `{feature}`")]
    MissingLabelValue { object: String, feature: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Position,
    Heading,
    Extra(String),
    /// The value of an intermediate variable.
    Value,
}

impl Field {
    pub fn name(&self) -> &str {
        match self {
            Field::Position => "position",
            Field::Heading => "heading",
            Field::Extra(n) => n,
            Field::Value => "value",
        }
    }
}

/// A tree in the forest: a feature of an object or an intermediate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SlotKey {
    pub entity: String,
    pub field: Field,
}

impl SlotKey {
    pub fn new(entity: &str, field: Field) -> Self {
        Self {
            entity: entity.to_string(),
            field,
        }
    }

    pub fn position(entity: &str) -> Self {
        Self::new(entity, Field::Position)
    }

    pub fn heading(entity: &str) -> Self {
        Self::new(entity, Field::Heading)
    }

    pub fn value(entity: &str) -> Self {
        Self::new(entity, Field::Value)
    }
}

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.field {
            Field::Value => write!(f, "{}", self.entity),
            _ => write!(f, "{}.{}", self.entity, self.field.name()),
        }
    }
}

/// Concrete value of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Vector(Point2),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Scalar(x) => write!(f, "{x}"),
            Value::Vector(p) => write!(f, "{p}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// The observer of a visible region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewerNode {
    pub position: Box<Node>,
    /// `None` for plain points, which see a full disc.
    pub heading: Option<Box<Node>>,
    pub view_distance: f64,
    pub view_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RegionNode {
    Map(RegionSel),
    /// The part of `base` (or of the whole plane) seen by `viewer`.
    Visible {
        base: Option<RegionSel>,
        viewer: ViewerNode,
    },
}

/// Expression tree node. Each distribution node is one random draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Node {
    Num(f64),
    Bool(bool),
    Slot(SlotKey),
    Vec2(Box<Node>, Box<Node>),
    X(Box<Node>),
    Y(Box<Node>),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Range(Box<Node>, Box<Node>),
    Normal(Box<Node>, Box<Node>),
    Options(Vec<Node>),
    /// Uniformly random point of a region.
    UniformIn(RegionNode),
    /// `pos + rotate(offset, heading)`
    OffsetLocal {
        pos: Box<Node>,
        heading: Box<Node>,
        offset: Box<Node>,
    },
    /// Traffic direction at a point.
    FieldAt(Box<Node>),
    /// Orientation of the selected regions at a point.
    Orientation(RegionSel, Box<Node>),
    Distance(Box<Node>, Box<Node>),
    DistanceToRegion(Box<Node>, RegionNode),
    /// Heading of the direction from the first point to the second.
    AngleTo(Box<Node>, Box<Node>),
    /// Angle normalised to [-pi, pi).
    Wrap(Box<Node>),
    InRegion(Box<Node>, RegionNode),
    CanSee(ViewerNode, Box<Node>),
    Cmp(CmpOp, Box<Node>, Box<Node>),
    Not(Box<Node>),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
}

impl Node {
    pub fn b(self) -> Box<Node> {
        Box::new(self)
    }

    pub fn slot(key: SlotKey) -> Node {
        Node::Slot(key)
    }

    /// Children in evaluation order, including those inside regions and viewers.
    pub fn children(&self) -> Vec<&Node> {
        use Node::*;
        match self {
            Num(_) | Bool(_) | Slot(_) => vec![],
            X(a) | Y(a) | Neg(a) | FieldAt(a) | Orientation(_, a) | Wrap(a) | Not(a) => vec![a],
            Vec2(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Range(a, b) | Normal(a, b)
            | Distance(a, b) | AngleTo(a, b) | Cmp(_, a, b) | And(a, b) | Or(a, b) => vec![a, b],
            Options(xs) => xs.iter().collect(),
            UniformIn(r) => r.children(),
            OffsetLocal { pos, heading, offset } => vec![pos, heading, offset],
            DistanceToRegion(a, r) | InRegion(a, r) => {
                let mut v: Vec<&Node> = vec![a];
                v.extend(r.children());
                v
            }
            CanSee(viewer, t) => {
                let mut v = viewer.children();
                v.push(t);
                v
            }
        }
    }

    /// Slots referenced directly by this tree.
    pub fn refs(&self, out: &mut Vec<SlotKey>) {
        if let Node::Slot(k) = self {
            if !out.contains(k) {
                out.push(k.clone());
            }
        }
        for c in self.children() {
            c.refs(out);
        }
    }

    pub fn has_randomness(&self) -> bool {
        matches!(self, Node::Range(..) | Node::Normal(..) | Node::Options(..) | Node::UniformIn(..))
            || self.children().into_iter().any(Node::has_randomness)
    }
}

impl ViewerNode {
    pub fn children(&self) -> Vec<&Node> {
        let mut v: Vec<&Node> = vec![&self.position];
        if let Some(h) = &self.heading {
            v.push(h);
        }
        v
    }
}

impl RegionNode {
    pub fn children(&self) -> Vec<&Node> {
        match self {
            RegionNode::Map(_) => vec![],
            RegionNode::Visible { viewer, .. } => viewer.children(),
        }
    }
}

/// A named definition: scene object, point, oriented point or value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entity {
    pub name: String,
    /// `None` for plain value intermediates.
    pub class: Option<ObjectClass>,
    pub width: f64,
    pub length: f64,
    pub view_distance: f64,
    pub view_angle: f64,
    pub extras: Vec<String>,
}

impl Entity {
    pub fn is_scene_object(&self) -> bool {
        self.class.is_some_and(ObjectClass::is_scene_object)
    }

    pub fn is_oriented(&self) -> bool {
        self.class.is_some_and(|c| c != ObjectClass::Point)
    }

    /// Feature slots carried by this entity.
    pub fn slots(&self) -> Vec<SlotKey> {
        match self.class {
            None => vec![SlotKey::value(&self.name)],
            Some(ObjectClass::Point) => vec![SlotKey::position(&self.name)],
            Some(_) => {
                let mut v = vec![SlotKey::position(&self.name), SlotKey::heading(&self.name)];
                v.extend(self.extras.iter().map(|e| SlotKey::new(&self.name, Field::Extra(e.clone()))));
                v
            }
        }
    }
}

/// Compiled program with per-query conditioning state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpressionForest {
    pub entities: Vec<Entity>,
    pub trees: BTreeMap<SlotKey, Node>,
    /// Every slot, in an order where references precede their users.
    pub order: Vec<SlotKey>,
    pub requirements: Vec<Node>,
    conditioning: BTreeMap<SlotKey, Value>,
}

impl ExpressionForest {
    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }

    /// Scene objects in definition order.
    pub fn scene_objects(&self) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(|e| e.is_scene_object())
    }

    pub fn is_feature(&self, key: &SlotKey) -> bool {
        key.field != Field::Value && self.entity(&key.entity).is_some_and(Entity::is_scene_object)
    }

    pub fn tree(&self, key: &SlotKey) -> Option<&Node> {
        self.trees.get(key)
    }

    pub fn conditioned(&self, key: &SlotKey) -> Option<Value> {
        self.conditioning.get(key).copied()
    }

    pub fn conditioning(&self) -> &BTreeMap<SlotKey, Value> {
        &self.conditioning
    }

    /// Replaces a feature's tree by an observed value for later encodings.
    pub fn condition(&mut self, key: SlotKey, value: Value) {
        self.conditioning.insert(key, value);
    }

    pub fn uncondition(&mut self) {
        self.conditioning.clear();
    }

    /// Direct references of a slot's tree.
    pub fn refs(&self, key: &SlotKey) -> Vec<SlotKey> {
        let mut out = Vec::new();
        if let Some(t) = self.trees.get(key) {
            t.refs(&mut out);
        }
        out
    }

    /// Text dump of tree shapes and dependency arrows.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for key in &self.order {
            let kind = if self.is_feature(key) { "feature" } else { "intermediate" };
            let refs: Vec<String> = self.refs(key).iter().map(ToString::to_string).collect();
            let arrow = if refs.is_empty() {
                String::new()
            } else {
                format!("  <- {}", refs.join(", "))
            };
            writeln!(out, "{kind} {key}{arrow}").expect("string write");
            writeln!(out, "  {}", show(&self.trees[key])).expect("string write");
        }
        for (i, r) in self.requirements.iter().enumerate() {
            writeln!(out, "require[{i}] {}", show(r)).expect("string write");
        }
        out
    }
}

fn show_region(r: &RegionNode) -> String {
    match r {
        RegionNode::Map(sel) => sel.to_string(),
        RegionNode::Visible { base, viewer } => {
            let b = base.as_ref().map(ToString::to_string).unwrap_or_else(|| "plane".into());
            format!("visible({b} from {})", show(&viewer.position))
        }
    }
}

/// Compact prefix rendering of a tree.
pub fn show(n: &Node) -> String {
    use Node::*;
    let two = |name: &str, a: &Node, b: &Node| format!("{name}({}, {})", show(a), show(b));
    match n {
        Num(x) => format!("{x}"),
        Bool(b) => format!("{b}"),
        Slot(k) => k.to_string(),
        Vec2(a, b) => format!("({}, {})", show(a), show(b)),
        X(a) => format!("{}.x", show(a)),
        Y(a) => format!("{}.y", show(a)),
        Neg(a) => format!("-{}", show(a)),
        Add(a, b) => two("add", a, b),
        Sub(a, b) => two("sub", a, b),
        Mul(a, b) => two("mul", a, b),
        Div(a, b) => two("div", a, b),
        Range(a, b) => two("Range", a, b),
        Normal(a, b) => two("Normal", a, b),
        Options(xs) => format!("Options({})", xs.iter().map(show).collect::<Vec<_>>().join(", ")),
        UniformIn(r) => format!("On({})", show_region(r)),
        OffsetLocal { pos, heading, offset } => {
            format!("offsetLocal({}, {}, {})", show(pos), show(heading), show(offset))
        }
        FieldAt(p) => format!("roadDirection({})", show(p)),
        Orientation(sel, p) => format!("orientation({sel}, {})", show(p)),
        Distance(a, b) => two("distance", a, b),
        DistanceToRegion(a, r) => format!("distance({}, {})", show(a), show_region(r)),
        AngleTo(a, b) => two("angle", a, b),
        Wrap(a) => format!("wrap({})", show(a)),
        InRegion(a, r) => format!("in({}, {})", show(a), show_region(r)),
        CanSee(v, t) => format!("canSee({}, {})", show(&v.position), show(t)),
        Cmp(op, a, b) => format!("({} {} {})", show(a), op.symbol(), show(b)),
        Not(a) => format!("not {}", show(a)),
        And(a, b) => format!("({} and {})", show(a), show(b)),
        Or(a, b) => format!("({} or {})", show(a), show(b)),
    }
}
