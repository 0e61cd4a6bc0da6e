//! Fragment checks beyond the grammar: types, specifier multiplicity and
//! requirement dependencies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Scalar,
    Vector,
    /// A `Point`: position only.
    Point,
    /// An `OrientedPoint`: position and heading.
    Oriented,
    /// A scene object (also oriented).
    Object,
    Region,
    Field,
    /// `H relative to roadDirection`; meaningful only as a facing argument.
    FieldOffset,
    Bool,
    /// Already diagnosed.
    Error,
}

impl Ty {
    fn vector_like(self) -> bool {
        matches!(self, Ty::Vector | Ty::Point | Ty::Oriented | Ty::Object | Ty::Error)
    }

    fn oriented(self) -> bool {
        matches!(self, Ty::Oriented | Ty::Object | Ty::Error)
    }

    fn is(self, t: Ty) -> bool {
        self == t || self == Ty::Error
    }

    fn name(self) -> &'static str {
        match self {
            Ty::Scalar => "a scalar",
            Ty::Vector => "a vector",
            Ty::Point => "a point",
            Ty::Oriented => "an oriented point",
            Ty::Object => "an object",
            Ty::Region => "a region",
            Ty::Field => "a vector field",
            Ty::FieldOffset => "a field offset",
            Ty::Bool => "a boolean",
            Ty::Error => "an invalid expression",
        }
    }
}

/// Built-in numeric properties every object carries.
pub const BUILTIN_PROPERTIES: [&str; 4] = ["width", "length", "viewDistance", "viewAngle"];

struct Checker<'a> {
    types: BTreeMap<&'a str, Ty>,
    extras: BTreeMap<&'a str, BTreeSet<&'a str>>,
    diags: Vec<Diagnostic>,
}

impl<'a> Checker<'a> {
    fn diag(&mut self, span: Span, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            line: span.line,
            col: span.col,
            message: message.into(),
        });
    }

    fn want(&mut self, got: Ty, ok: bool, expected: &str, ctx: &str, span: Span) {
        if !ok {
            self.diag(span, format!("{ctx}: expected {expected}, found {}", got.name()));
        }
    }

    fn ty(&mut self, e: &Expr, span: Span) -> Ty {
        use Expr::*;
        match e {
            Number(_) => Ty::Scalar,
            Bool(_) => Ty::Bool,
            Region(_) => Ty::Region,
            RoadDirection => Ty::Field,
            Ident(n) => self.types.get(n.as_str()).copied().unwrap_or(Ty::Error),
            Vector(a, b) => {
                let (ta, tb) = (self.ty(a, span), self.ty(b, span));
                self.want(ta, ta.is(Ty::Scalar), "a scalar", "vector component", span);
                self.want(tb, tb.is(Ty::Scalar), "a scalar", "vector component", span);
                Ty::Vector
            }
            Attr(a, name) => {
                let t = self.ty(a, span);
                match (t, name.as_str()) {
                    (Ty::Error, _) => Ty::Error,
                    (Ty::Object | Ty::Oriented | Ty::Point, "position") => Ty::Vector,
                    (Ty::Object | Ty::Oriented, "heading") => Ty::Scalar,
                    (Ty::Object | Ty::Oriented, p) if BUILTIN_PROPERTIES.contains(&p) => Ty::Scalar,
                    (Ty::Vector, "x" | "y") => Ty::Scalar,
                    (Ty::Object, p) => {
                        let declared = match a.as_ref() {
                            Ident(o) => self.extras.get(o.as_str()).is_some_and(|s| s.contains(p)),
                            _ => false,
                        };
                        if declared {
                            Ty::Scalar
                        } else {
                            self.diag(span, format!("object has no property `{p}`"));
                            Ty::Error
                        }
                    }
                    (t, p) => {
                        self.diag(span, format!("{} has no property `{p}`", t.name()));
                        Ty::Error
                    }
                }
            }
            Neg(a) => {
                let t = self.ty(a, span);
                if t.is(Ty::Scalar) {
                    Ty::Scalar
                } else if t.vector_like() {
                    Ty::Vector
                } else {
                    self.want(t, false, "a scalar or vector", "negation", span);
                    Ty::Error
                }
            }
            Binary(op, a, b) => {
                let (ta, tb) = (self.ty(a, span), self.ty(b, span));
                if ta == Ty::Error || tb == Ty::Error {
                    return Ty::Error;
                }
                let s = |t: Ty| t == Ty::Scalar;
                let v = |t: Ty| t.vector_like();
                let out = match op {
                    BinOp::Add | BinOp::Sub if s(ta) && s(tb) => Some(Ty::Scalar),
                    BinOp::Add | BinOp::Sub if v(ta) && v(tb) => Some(Ty::Vector),
                    BinOp::Mul if s(ta) && s(tb) => Some(Ty::Scalar),
                    BinOp::Mul if (s(ta) && v(tb)) || (v(ta) && s(tb)) => Some(Ty::Vector),
                    BinOp::Div if s(ta) && s(tb) => Some(Ty::Scalar),
                    BinOp::Div if v(ta) && s(tb) => Some(Ty::Vector),
                    _ => None,
                };
                out.unwrap_or_else(|| {
                    self.diag(
                        span,
                        format!("operator `{}` is not defined on {} and {}", op.symbol(), ta.name(), tb.name()),
                    );
                    Ty::Error
                })
            }
            Range(a, b) | Normal(a, b) => {
                for x in [a, b] {
                    let t = self.ty(x, span);
                    self.want(t, t.is(Ty::Scalar), "a scalar", "distribution parameter", span);
                }
                Ty::Scalar
            }
            Options(xs) => {
                for x in xs {
                    let t = self.ty(x, span);
                    self.want(t, t.is(Ty::Scalar), "a scalar", "option", span);
                }
                Ty::Scalar
            }
            RelativeTo(a, b) => {
                let (ta, tb) = (self.ty(a, span), self.ty(b, span));
                match (ta, tb) {
                    (Ty::Error, _) | (_, Ty::Error) => Ty::Error,
                    (Ty::Scalar, Ty::Scalar) => Ty::Scalar,
                    (Ty::Scalar, Ty::Field) => Ty::FieldOffset,
                    (Ty::Vector, t) if t.oriented() => Ty::Vector,
                    _ => {
                        self.diag(span, format!("`relative to` is not defined on {} and {}", ta.name(), tb.name()));
                        Ty::Error
                    }
                }
            }
            OffsetBy(a, b) => {
                let (ta, tb) = (self.ty(a, span), self.ty(b, span));
                self.want(ta, ta.vector_like(), "a vector", "offset base", span);
                self.want(tb, tb.vector_like(), "a vector", "offset", span);
                Ty::Vector
            }
            OffsetAlong(a, h, b) => {
                let (ta, th, tb) = (self.ty(a, span), self.ty(h, span), self.ty(b, span));
                self.want(ta, ta.vector_like(), "a vector", "offset base", span);
                self.want(th, th.is(Ty::Scalar) || th == Ty::Field, "a heading or field", "offset direction", span);
                self.want(tb, tb.vector_like(), "a vector", "offset", span);
                Ty::Vector
            }
            DistanceTo { from, to } => {
                if let Some(f) = from {
                    let t = self.ty(f, span);
                    self.want(t, t.vector_like(), "a vector", "distance origin", span);
                }
                let t = self.ty(to, span);
                self.want(t, t.vector_like() || t == Ty::Region, "a vector or region", "distance target", span);
                Ty::Scalar
            }
            AngleTo { from, to } => {
                for x in from.iter().chain(std::iter::once(to)) {
                    let t = self.ty(x, span);
                    self.want(t, t.vector_like(), "a vector", "angle operand", span);
                }
                Ty::Scalar
            }
            RelativeHeading { of, from } => {
                for x in std::iter::once(of).chain(from.iter()) {
                    let t = self.ty(x, span);
                    self.want(t, t.is(Ty::Scalar) || t.oriented(), "a heading", "relative heading operand", span);
                }
                Ty::Scalar
            }
            ApparentHeading { of, from } => {
                let t = self.ty(of, span);
                self.want(t, t.oriented(), "an oriented point", "apparent heading", span);
                if let Some(f) = from {
                    let t = self.ty(f, span);
                    self.want(t, t.vector_like(), "a vector", "apparent heading viewer", span);
                }
                Ty::Scalar
            }
            FieldAt(f, v) => {
                let (tf, tv) = (self.ty(f, span), self.ty(v, span));
                self.want(tf, tf.is(Ty::Field), "a vector field", "`at`", span);
                self.want(tv, tv.vector_like(), "a vector", "`at`", span);
                Ty::Scalar
            }
            Front(a) | Back(a) => {
                let t = self.ty(a, span);
                self.want(t, t.is(Ty::Object), "an object", "`front of`/`back of`", span);
                Ty::Vector
            }
            Visible(r) => {
                let t = self.ty(r, span);
                self.want(t, t.is(Ty::Region), "a region", "`visible`", span);
                Ty::Region
            }
            CanSee(a, b) => {
                let (ta, tb) = (self.ty(a, span), self.ty(b, span));
                self.want(ta, ta.vector_like(), "a point or object", "`can see` viewer", span);
                self.want(tb, tb.vector_like(), "a point or object", "`can see` target", span);
                Ty::Bool
            }
            In(a, b) => {
                let (ta, tb) = (self.ty(a, span), self.ty(b, span));
                self.want(ta, ta.vector_like(), "a point or object", "`in`", span);
                self.want(tb, tb.is(Ty::Region), "a region", "`in`", span);
                Ty::Bool
            }
            Compare(_, a, b) => {
                for x in [a, b] {
                    let t = self.ty(x, span);
                    self.want(t, t.is(Ty::Scalar), "a scalar", "comparison", span);
                }
                Ty::Bool
            }
            Not(a) => {
                let t = self.ty(a, span);
                self.want(t, t.is(Ty::Bool), "a boolean", "`not`", span);
                Ty::Bool
            }
            And(a, b) | Or(a, b) => {
                for x in [a, b] {
                    let t = self.ty(x, span);
                    self.want(t, t.is(Ty::Bool), "a boolean", "boolean connective", span);
                }
                Ty::Bool
            }
        }
    }

    fn object(&mut self, name: &str, o: &ObjectDef) {
        use SpecifierKind::*;
        let mut pos: Option<Span> = None;
        let mut head: Option<Span> = None;
        let mut withs = BTreeSet::new();
        for s in &o.specifiers {
            let sp = s.span;
            if s.kind.determines_position() {
                if pos.is_some() {
                    self.diag(sp, format!("`{name}` has more than one position specifier"));
                }
                pos = Some(sp);
            }
            if s.kind.determines_heading() {
                if head.is_some() {
                    self.diag(sp, format!("`{name}` has more than one heading specifier"));
                }
                if o.class == ObjectClass::Point {
                    self.diag(sp, "a Point has no heading");
                }
                head = Some(sp);
            }
            match &s.kind {
                At(v) => {
                    let t = self.ty(v, sp);
                    self.want(t, t.vector_like(), "a vector", "`at`", sp);
                }
                On(r) => {
                    let t = self.ty(r, sp);
                    self.want(t, t.is(Ty::Region), "a region", "`on`", sp);
                }
                AheadOf(r, d) | Behind(r, d) | LeftOf(r, d) | RightOf(r, d) => {
                    let t = self.ty(r, sp);
                    if t == Ty::Vector || t == Ty::Point {
                        self.diag(sp, "relative position specifiers need an oriented reference (vector references are outside the supported fragment)");
                    } else {
                        self.want(t, t.oriented(), "an oriented point or object", "relative position", sp);
                    }
                    if let Some(d) = d {
                        let t = self.ty(d, sp);
                        self.want(t, t.is(Ty::Scalar), "a scalar", "`by`", sp);
                    }
                }
                OffsetBy(v) => {
                    let t = self.ty(v, sp);
                    self.want(t, t.is(Ty::Vector), "a vector", "`offset by`", sp);
                }
                OffsetAlong(h, v) => {
                    let (th, tv) = (self.ty(h, sp), self.ty(v, sp));
                    self.want(th, th.is(Ty::Scalar) || th == Ty::Field, "a heading or field", "`offset along`", sp);
                    self.want(tv, tv.is(Ty::Vector), "a vector", "`offset along`", sp);
                }
                Beyond { target, offset, from } => {
                    let t = self.ty(target, sp);
                    self.want(t, t.vector_like(), "a vector", "`beyond`", sp);
                    let t = self.ty(offset, sp);
                    self.want(t, t.is(Ty::Vector) || t == Ty::Scalar, "a vector or scalar", "`beyond ... by`", sp);
                    if let Some(f) = from {
                        let t = self.ty(f, sp);
                        self.want(t, t.vector_like(), "a vector", "`beyond ... from`", sp);
                    }
                }
                Visible(from) => {
                    if let Some(f) = from {
                        let t = self.ty(f, sp);
                        self.want(t, t.oriented(), "an oriented point or object", "`visible from`", sp);
                    }
                }
                Facing(h) => {
                    let t = self.ty(h, sp);
                    self.want(
                        t,
                        t.is(Ty::Scalar) || t == Ty::Field || t == Ty::FieldOffset,
                        "a heading or vector field",
                        "`facing`",
                        sp,
                    );
                }
                FacingToward(v) | FacingAwayFrom(v) => {
                    let t = self.ty(v, sp);
                    self.want(t, t.vector_like(), "a vector", "`facing toward`/`facing away from`", sp);
                }
                ApparentlyFacing(h, from) => {
                    let t = self.ty(h, sp);
                    self.want(t, t.is(Ty::Scalar), "a heading", "`apparently facing`", sp);
                    if let Some(f) = from {
                        let t = self.ty(f, sp);
                        self.want(t, t.vector_like(), "a vector", "`apparently facing ... from`", sp);
                    }
                }
                With(prop, v) => {
                    if !withs.insert(prop.clone()) {
                        self.diag(sp, format!("property `{prop}` given twice"));
                    }
                    match prop.as_str() {
                        "position" | "heading" => {
                            self.diag(sp, format!("`with {prop}` is not supported; use a {prop} specifier"));
                        }
                        "class" => self.diag(sp, "`with class` is not supported"),
                        p if BUILTIN_PROPERTIES.contains(&p) => {
                            if !matches!(v, Expr::Number(_)) {
                                self.diag(sp, format!("property `{p}` must be a constant number"));
                            }
                        }
                        _ => {
                            let t = self.ty(v, sp);
                            self.want(t, t.is(Ty::Scalar), "a scalar", "extra property", sp);
                            if !o.class.is_scene_object() {
                                self.diag(sp, "extra properties are only supported on scene objects");
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Intermediates (transitively) referenced by `e`, following intermediate
/// definitions but stopping at scene objects.
fn reachable_intermediates<'a>(ast: &'a ScenarioAst, roots: &[&'a Expr]) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<String> = Vec::new();
    for r in roots {
        r.idents(&mut stack);
    }
    while let Some(n) = stack.pop() {
        let Some(d) = ast.def(&n) else { continue };
        if d.is_scene_object() || !seen.insert(d.name.as_str()) {
            continue;
        }
        for e in def_exprs(d) {
            e.idents(&mut stack);
        }
    }
    seen
}

fn def_exprs(d: &Definition) -> Vec<&Expr> {
    match &d.body {
        DefBody::Value(e) => vec![e],
        DefBody::Object(o) => o.specifiers.iter().flat_map(|s| s.kind.exprs()).collect(),
    }
}

/// Whether the intermediate's value is random on its own (not only through
/// scene objects it references).
fn intermediate_is_random(ast: &ScenarioAst, name: &str) -> bool {
    let Some(d) = ast.def(name) else { return false };
    let direct = match &d.body {
        DefBody::Value(e) => e.contains_distribution(),
        DefBody::Object(o) => {
            o.specifiers.iter().any(|s| {
                matches!(s.kind, SpecifierKind::On(_) | SpecifierKind::Visible(_))
                    || s.kind.exprs().iter().any(|e| e.contains_distribution())
            })
        }
    };
    direct
        || def_exprs(d).iter().any(|e| {
            let mut ids = Vec::new();
            e.idents(&mut ids);
            ids.iter().any(|i| {
                ast.def(i)
                    .is_some_and(|x| !x.is_scene_object() && intermediate_is_random(ast, i))
            })
        })
}

pub fn validate(ast: &ScenarioAst) -> Vec<Diagnostic> {
    let mut types = BTreeMap::new();
    let mut extras: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut ck = Checker {
        types: BTreeMap::new(),
        extras: BTreeMap::new(),
        diags: Vec::new(),
    };

    let egos: Vec<&Definition> = ast.defs.iter().filter(|d| d.name == "ego").collect();
    match egos.as_slice() {
        [] => ck.diag(Span { line: 1, col: 1 }, "program does not define `ego`"),
        [d] if !d.is_scene_object() => ck.diag(d.span, "`ego` must be a scene object (e.g. a Car)"),
        _ => {}
    }

    // definitions are checked in order so references see only earlier names
    for d in &ast.defs {
        ck.types = types.clone();
        ck.extras = extras.clone();
        let ty = match &d.body {
            DefBody::Value(e) => {
                let t = ck.ty(e, d.span);
                if matches!(t, Ty::Bool | Ty::FieldOffset) {
                    ck.diag(d.span, format!("intermediate `{}` cannot be {}", d.name, t.name()));
                }
                t
            }
            DefBody::Object(o) => {
                ck.object(&d.name, o);
                let names: BTreeSet<&str> = o
                    .specifiers
                    .iter()
                    .filter_map(|s| match &s.kind {
                        SpecifierKind::With(n, _) if !BUILTIN_PROPERTIES.contains(&n.as_str()) => Some(n.as_str()),
                        _ => None,
                    })
                    .collect();
                extras.insert(d.name.as_str(), names);
                match o.class {
                    ObjectClass::Point => Ty::Point,
                    ObjectClass::OrientedPoint => Ty::Oriented,
                    _ => Ty::Object,
                }
            }
        };
        types.insert(d.name.as_str(), ty);
    }
    ck.types = types;
    ck.extras = extras;

    let feature_roots: Vec<&Expr> = ast.objects().flat_map(def_exprs).collect();
    let shared = reachable_intermediates(ast, &feature_roots);
    for r in &ast.requirements {
        let t = ck.ty(&r.cond, r.span);
        ck.want(t, t.is(Ty::Bool), "a boolean", "requirement", r.span);
        let used = reachable_intermediates(ast, &[&r.cond]);
        let random: Vec<&str> = used
            .iter()
            .copied()
            .filter(|n| intermediate_is_random(ast, n))
            .collect();
        if let Some(n) = random.iter().find(|n| shared.contains(**n)) {
            ck.diag(
                r.span,
                format!("requirement is jointly dependent with object features through intermediate `{n}`"),
            );
        } else if let Some(n) = random.first() {
            ck.diag(r.span, format!("requirement depends on unobserved random intermediate `{n}`"));
        }
    }
    ck.diags
}
