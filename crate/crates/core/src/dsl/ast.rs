use std::fmt;

use serde::Serialize;

use crate::geomap::RegionSel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

/// Scenario-language expression. After elaboration every `Ident` names a
/// definition of the program (parameters and loop variables are inlined).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Number(f64),
    Bool(bool),
    Ident(String),
    Region(RegionSel),
    RoadDirection,
    Vector(Box<Expr>, Box<Expr>),
    Attr(Box<Expr>, String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Range(Box<Expr>, Box<Expr>),
    Normal(Box<Expr>, Box<Expr>),
    Options(Vec<Expr>),
    RelativeTo(Box<Expr>, Box<Expr>),
    OffsetBy(Box<Expr>, Box<Expr>),
    OffsetAlong(Box<Expr>, Box<Expr>, Box<Expr>),
    DistanceTo {
        from: Option<Box<Expr>>,
        to: Box<Expr>,
    },
    AngleTo {
        from: Option<Box<Expr>>,
        to: Box<Expr>,
    },
    RelativeHeading {
        of: Box<Expr>,
        from: Option<Box<Expr>>,
    },
    ApparentHeading {
        of: Box<Expr>,
        from: Option<Box<Expr>>,
    },
    /// `roadDirection at V`
    FieldAt(Box<Expr>, Box<Expr>),
    Front(Box<Expr>),
    Back(Box<Expr>),
    /// `visible R`: the part of a region visible from ego.
    Visible(Box<Expr>),
    CanSee(Box<Expr>, Box<Expr>),
    In(Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn boxed(self) -> Box<Expr> {
        Box::new(self)
    }

    /// Direct children, in source order.
    pub fn children(&self) -> Vec<&Expr> {
        use Expr::*;
        match self {
            Number(_) | Bool(_) | Ident(_) | Region(_) | RoadDirection => vec![],
            Attr(a, _) | Neg(a) | Front(a) | Back(a) | Visible(a) | Not(a) => vec![a],
            Vector(a, b)
            | Binary(_, a, b)
            | Range(a, b)
            | Normal(a, b)
            | RelativeTo(a, b)
            | OffsetBy(a, b)
            | FieldAt(a, b)
            | CanSee(a, b)
            | In(a, b)
            | Compare(_, a, b)
            | And(a, b)
            | Or(a, b) => vec![a, b],
            OffsetAlong(a, b, c) => vec![a, b, c],
            Options(xs) => xs.iter().collect(),
            DistanceTo { from, to } | AngleTo { from, to } => {
                from.iter().map(|b| b.as_ref()).chain(std::iter::once(to.as_ref())).collect()
            }
            RelativeHeading { of, from } | ApparentHeading { of, from } => std::iter::once(of.as_ref())
                .chain(from.iter().map(|b| b.as_ref()))
                .collect(),
        }
    }

    /// Names of definitions referenced anywhere in this expression.
    pub fn idents(&self, out: &mut Vec<String>) {
        if let Expr::Ident(n) = self {
            if !out.contains(n) {
                out.push(n.clone());
            }
        }
        for c in self.children() {
            c.idents(out);
        }
    }

    pub fn contains_distribution(&self) -> bool {
        matches!(self, Expr::Range(..) | Expr::Normal(..) | Expr::Options(..))
            || self.children().into_iter().any(Expr::contains_distribution)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObjectClass {
    Car,
    Truck,
    Bus,
    Bicycle,
    Motorcycle,
    Pedestrian,
    Object,
    OrientedPoint,
    Point,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 9] = [
        ObjectClass::Car,
        ObjectClass::Truck,
        ObjectClass::Bus,
        ObjectClass::Bicycle,
        ObjectClass::Motorcycle,
        ObjectClass::Pedestrian,
        ObjectClass::Object,
        ObjectClass::OrientedPoint,
        ObjectClass::Point,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ObjectClass::Car => "Car",
            ObjectClass::Truck => "Truck",
            ObjectClass::Bus => "Bus",
            ObjectClass::Bicycle => "Bicycle",
            ObjectClass::Motorcycle => "Motorcycle",
            ObjectClass::Pedestrian => "Pedestrian",
            ObjectClass::Object => "Object",
            ObjectClass::OrientedPoint => "OrientedPoint",
            ObjectClass::Point => "Point",
        }
    }

    pub fn from_keyword(s: &str) -> Option<ObjectClass> {
        ObjectClass::ALL.into_iter().find(|c| c.keyword() == s)
    }

    /// Class tag compared against label object classes.
    pub fn tag(self) -> &'static str {
        match self {
            ObjectClass::Car => "car",
            ObjectClass::Truck => "truck",
            ObjectClass::Bus => "bus",
            ObjectClass::Bicycle => "bicycle",
            ObjectClass::Motorcycle => "motorcycle",
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Object => "object",
            ObjectClass::OrientedPoint => "orientedpoint",
            ObjectClass::Point => "point",
        }
    }

    /// Scene objects appear in labels; points are unobserved intermediates.
    pub fn is_scene_object(self) -> bool {
        !matches!(self, ObjectClass::OrientedPoint | ObjectClass::Point)
    }

    pub fn is_vehicle(self) -> bool {
        matches!(
            self,
            ObjectClass::Car
                | ObjectClass::Truck
                | ObjectClass::Bus
                | ObjectClass::Bicycle
                | ObjectClass::Motorcycle
        )
    }

    /// Default (width, length) in meters.
    pub fn dimensions(self) -> (f64, f64) {
        match self {
            ObjectClass::Car => (2.0, 4.5),
            ObjectClass::Truck => (2.5, 8.0),
            ObjectClass::Bus => (2.5, 12.0),
            ObjectClass::Bicycle | ObjectClass::Motorcycle => (0.8, 2.0),
            ObjectClass::Pedestrian => (0.75, 0.75),
            ObjectClass::Object => (1.0, 1.0),
            ObjectClass::OrientedPoint | ObjectClass::Point => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SpecifierKind {
    At(Expr),
    On(Expr),
    AheadOf(Expr, Option<Expr>),
    Behind(Expr, Option<Expr>),
    LeftOf(Expr, Option<Expr>),
    RightOf(Expr, Option<Expr>),
    OffsetBy(Expr),
    OffsetAlong(Expr, Expr),
    Beyond {
        target: Expr,
        offset: Expr,
        from: Option<Expr>,
    },
    Visible(Option<Expr>),
    Facing(Expr),
    FacingToward(Expr),
    FacingAwayFrom(Expr),
    ApparentlyFacing(Expr, Option<Expr>),
    With(String, Expr),
}

impl SpecifierKind {
    pub fn determines_position(&self) -> bool {
        use SpecifierKind::*;
        matches!(
            self,
            At(_) | On(_) | AheadOf(..) | Behind(..) | LeftOf(..) | RightOf(..) | OffsetBy(_)
                | OffsetAlong(..) | Beyond { .. } | Visible(_)
        )
    }

    pub fn determines_heading(&self) -> bool {
        use SpecifierKind::*;
        matches!(self, Facing(_) | FacingToward(_) | FacingAwayFrom(_) | ApparentlyFacing(..))
    }

    pub fn exprs(&self) -> Vec<&Expr> {
        use SpecifierKind::*;
        match self {
            At(e) | On(e) | OffsetBy(e) | Facing(e) | FacingToward(e) | FacingAwayFrom(e) | With(_, e) => {
                vec![e]
            }
            AheadOf(a, b) | Behind(a, b) | LeftOf(a, b) | RightOf(a, b) | ApparentlyFacing(a, b) => {
                std::iter::once(a).chain(b.iter()).collect()
            }
            OffsetAlong(a, b) => vec![a, b],
            Beyond { target, offset, from } => {
                let mut v = vec![target, offset];
                v.extend(from.iter());
                v
            }
            Visible(from) => from.iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Specifier {
    pub kind: SpecifierKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectDef {
    pub class: ObjectClass,
    pub specifiers: Vec<Specifier>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DefBody {
    /// `name = Class specifiers...`; points and oriented points are intermediates.
    Object(ObjectDef),
    /// `name = expr`: an intermediate variable.
    Value(Expr),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Definition {
    pub name: String,
    pub body: DefBody,
    pub span: Span,
}

impl Definition {
    pub fn object(&self) -> Option<&ObjectDef> {
        match &self.body {
            DefBody::Object(o) => Some(o),
            DefBody::Value(_) => None,
        }
    }

    pub fn is_scene_object(&self) -> bool {
        self.object().is_some_and(|o| o.class.is_scene_object())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Requirement {
    pub cond: Expr,
    pub span: Span,
}

/// A parsed and elaborated scenario program: loops are unrolled, parameters
/// inlined and every definition has a unique name.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ScenarioAst {
    pub params: Vec<(String, f64)>,
    pub defs: Vec<Definition>,
    pub requirements: Vec<Requirement>,
}

impl ScenarioAst {
    /// Scene objects in definition order.
    pub fn objects(&self) -> impl Iterator<Item = &Definition> {
        self.defs.iter().filter(|d| d.is_scene_object())
    }

    /// Intermediate variables (values, points and oriented points).
    pub fn intermediates(&self) -> impl Iterator<Item = &Definition> {
        self.defs.iter().filter(|d| !d.is_scene_object())
    }

    pub fn def(&self, name: &str) -> Option<&Definition> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    /// Copy with every source position zeroed, for structural comparison.
    pub fn without_spans(&self) -> ScenarioAst {
        let mut out = self.clone();
        for d in &mut out.defs {
            d.span = Span::default();
            if let DefBody::Object(o) = &mut d.body {
                for s in &mut o.specifiers {
                    s.span = Span::default();
                }
            }
        }
        for r in &mut out.requirements {
            r.span = Span::default();
        }
        out
    }
}
