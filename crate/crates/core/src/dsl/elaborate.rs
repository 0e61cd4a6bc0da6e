//! Name resolution, parameter inlining and loop unrolling.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::parser::Stmt;
use super::ParseError;
use crate::geomap::{RegionKind, RegionSel};

#[derive(Debug, Clone)]
enum Binding {
    Def(String),
    Number(f64),
}

/// Names with a fixed meaning that programs may not redefine.
pub fn builtin(name: &str) -> Option<Expr> {
    match name {
        "roadDirection" => Some(Expr::RoadDirection),
        "workspace" | "everywhere" => Some(Expr::Region(RegionSel::All)),
        "lanes" => Some(Expr::Region(RegionSel::Kind(RegionKind::Lane))),
        "roads" => Some(Expr::Region(RegionSel::Kind(RegionKind::Road))),
        "intersections" => Some(Expr::Region(RegionSel::Kind(RegionKind::Intersection))),
        "curbs" => Some(Expr::Region(RegionSel::Kind(RegionKind::Curb))),
        "sidewalks" => Some(Expr::Region(RegionSel::Kind(RegionKind::Sidewalk))),
        _ => RegionKind::parse(name)
            .filter(|k| *k != RegionKind::Other)
            .map(|k| Expr::Region(RegionSel::Kind(k))),
    }
}

struct Elaborator<'a> {
    scope: BTreeMap<String, Binding>,
    used: BTreeSet<String>,
    overrides: &'a BTreeMap<String, f64>,
    applied: BTreeSet<String>,
    anon: usize,
    ast: ScenarioAst,
}

/// Folds literal arithmetic; used for parameters, loop bounds and tidy output.
pub fn const_value(e: &Expr) -> Option<f64> {
    match e {
        Expr::Number(x) => Some(*x),
        Expr::Neg(a) => const_value(a).map(|x| -x),
        Expr::Binary(op, a, b) => {
            let (a, b) = (const_value(a)?, const_value(b)?);
            Some(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            })
        }
        _ => None,
    }
}

fn undefined(span: Span, name: &str) -> ParseError {
    ParseError::UndefinedName {
        line: span.line,
        col: span.col,
        name: name.to_string(),
    }
}

impl Elaborator<'_> {
    fn resolve(&self, e: &Expr, span: Span) -> Result<Expr, ParseError> {
        let r = |x: &Expr| self.resolve(x, span).map(Box::new);
        let ro = |x: &Option<Box<Expr>>| -> Result<Option<Box<Expr>>, ParseError> {
            x.as_ref().map(|x| self.resolve(x, span).map(Box::new)).transpose()
        };
        let out = match e {
            Expr::Ident(name) => match self.scope.get(name) {
                Some(Binding::Def(d)) => Expr::Ident(d.clone()),
                Some(Binding::Number(x)) => Expr::Number(*x),
                None => builtin(name).ok_or_else(|| undefined(span, name))?,
            },
            Expr::Number(_) | Expr::Bool(_) | Expr::Region(_) | Expr::RoadDirection => e.clone(),
            Expr::Vector(a, b) => Expr::Vector(r(a)?, r(b)?),
            Expr::Attr(a, n) => Expr::Attr(r(a)?, n.clone()),
            Expr::Neg(a) => Expr::Neg(r(a)?),
            Expr::Binary(op, a, b) => Expr::Binary(*op, r(a)?, r(b)?),
            Expr::Range(a, b) => Expr::Range(r(a)?, r(b)?),
            Expr::Normal(a, b) => Expr::Normal(r(a)?, r(b)?),
            Expr::Options(xs) => Expr::Options(
                xs.iter().map(|x| self.resolve(x, span)).collect::<Result<_, _>>()?,
            ),
            Expr::RelativeTo(a, b) => Expr::RelativeTo(r(a)?, r(b)?),
            Expr::OffsetBy(a, b) => Expr::OffsetBy(r(a)?, r(b)?),
            Expr::OffsetAlong(a, b, c) => Expr::OffsetAlong(r(a)?, r(b)?, r(c)?),
            Expr::DistanceTo { from, to } => Expr::DistanceTo { from: ro(from)?, to: r(to)? },
            Expr::AngleTo { from, to } => Expr::AngleTo { from: ro(from)?, to: r(to)? },
            Expr::RelativeHeading { of, from } => Expr::RelativeHeading { of: r(of)?, from: ro(from)? },
            Expr::ApparentHeading { of, from } => Expr::ApparentHeading { of: r(of)?, from: ro(from)? },
            Expr::FieldAt(a, b) => Expr::FieldAt(r(a)?, r(b)?),
            Expr::Front(a) => Expr::Front(r(a)?),
            Expr::Back(a) => Expr::Back(r(a)?),
            Expr::Visible(a) => Expr::Visible(r(a)?),
            Expr::CanSee(a, b) => Expr::CanSee(r(a)?, r(b)?),
            Expr::In(a, b) => Expr::In(r(a)?, r(b)?),
            Expr::Compare(op, a, b) => Expr::Compare(*op, r(a)?, r(b)?),
            Expr::Not(a) => Expr::Not(r(a)?),
            Expr::And(a, b) => Expr::And(r(a)?, r(b)?),
            Expr::Or(a, b) => Expr::Or(r(a)?, r(b)?),
        };
        Ok(match const_value(&out) {
            Some(x) if !matches!(out, Expr::Number(_)) => Expr::Number(x),
            _ => out,
        })
    }

    fn resolve_spec(&self, s: &Specifier) -> Result<Specifier, ParseError> {
        use SpecifierKind::*;
        let r = |e: &Expr| self.resolve(e, s.span);
        let ro = |e: &Option<Expr>| e.as_ref().map(|e| self.resolve(e, s.span)).transpose();
        let kind = match &s.kind {
            At(e) => At(r(e)?),
            On(e) => On(r(e)?),
            AheadOf(a, b) => AheadOf(r(a)?, ro(b)?),
            Behind(a, b) => Behind(r(a)?, ro(b)?),
            LeftOf(a, b) => LeftOf(r(a)?, ro(b)?),
            RightOf(a, b) => RightOf(r(a)?, ro(b)?),
            OffsetBy(e) => OffsetBy(r(e)?),
            OffsetAlong(a, b) => OffsetAlong(r(a)?, r(b)?),
            Beyond { target, offset, from } => Beyond {
                target: r(target)?,
                offset: r(offset)?,
                from: ro(from)?,
            },
            Visible(f) => Visible(ro(f)?),
            Facing(e) => Facing(r(e)?),
            FacingToward(e) => FacingToward(r(e)?),
            FacingAwayFrom(e) => FacingAwayFrom(r(e)?),
            ApparentlyFacing(a, b) => ApparentlyFacing(r(a)?, ro(b)?),
            With(n, e) => With(n.clone(), r(e)?),
        };
        Ok(Specifier { kind, span: s.span })
    }

    fn fresh_name(&mut self, base: &str) -> String {
        if !self.used.contains(base) {
            return base.to_string();
        }
        (1..)
            .map(|k| format!("{base}_{k}"))
            .find(|n| !self.used.contains(n))
            .expect("unbounded counter")
    }

    fn define(&mut self, name: &str, body: DefBody, span: Span) -> Result<(), ParseError> {
        if builtin(name).is_some() {
            return Err(ParseError::Syntax {
                line: span.line,
                col: span.col,
                expected: format!("a name other than the builtin `{name}`"),
            });
        }
        if name == "ego" && self.used.contains("ego") {
            return Err(ParseError::Syntax {
                line: span.line,
                col: span.col,
                expected: "a single definition of `ego`".into(),
            });
        }
        let unique = self.fresh_name(name);
        self.used.insert(unique.clone());
        self.scope.insert(name.to_string(), Binding::Def(unique.clone()));
        self.ast.defs.push(Definition { name: unique, body, span });
        Ok(())
    }

    fn constant(&self, e: &Expr, span: Span, what: &str) -> Result<f64, ParseError> {
        let v = self.resolve(e, span)?;
        const_value(&v).ok_or_else(|| ParseError::Syntax {
            line: span.line,
            col: span.col,
            expected: format!("a constant number for {what}"),
        })
    }

    fn stmts(&mut self, stmts: &[Stmt]) -> Result<(), ParseError> {
        for s in stmts {
            match s {
                Stmt::Param { name, value, span } => {
                    let v = match self.overrides.get(name) {
                        Some(&v) => {
                            self.applied.insert(name.clone());
                            v
                        }
                        None => self.constant(value, *span, &format!("parameter `{name}`"))?,
                    };
                    self.scope.insert(name.clone(), Binding::Number(v));
                    match self.ast.params.iter_mut().find(|(n, _)| n == name) {
                        Some(slot) => slot.1 = v,
                        None => self.ast.params.push((name.clone(), v)),
                    }
                }
                Stmt::Assign { name, rhs, span } => match rhs {
                    DefBody::Value(e) => match self.resolve(e, *span)? {
                        // aliases and constants bind the name without a new definition
                        Expr::Ident(target) => {
                            if name == "ego" {
                                return Err(ParseError::Syntax {
                                    line: span.line,
                                    col: span.col,
                                    expected: "an object creation for `ego`".into(),
                                });
                            }
                            self.scope.insert(name.clone(), Binding::Def(target));
                        }
                        Expr::Number(x) => {
                            self.scope.insert(name.clone(), Binding::Number(x));
                        }
                        v => self.define(name, DefBody::Value(v), *span)?,
                    },
                    DefBody::Object(o) => {
                        let specifiers = o
                            .specifiers
                            .iter()
                            .map(|s| self.resolve_spec(s))
                            .collect::<Result<_, _>>()?;
                        let obj = ObjectDef { class: o.class, specifiers };
                        self.define(name, DefBody::Object(obj), *span)?;
                    }
                },
                Stmt::Anonymous { object, span } => {
                    let specifiers = object
                        .specifiers
                        .iter()
                        .map(|s| self.resolve_spec(s))
                        .collect::<Result<_, _>>()?;
                    let base = loop {
                        let n = format!("_{}{}", object.class.tag(), self.anon);
                        self.anon += 1;
                        if !self.used.contains(&n) {
                            break n;
                        }
                    };
                    let obj = ObjectDef { class: object.class, specifiers };
                    self.define(&base, DefBody::Object(obj), *span)?;
                }
                Stmt::Require { cond, span } => {
                    let cond = self.resolve(cond, *span)?;
                    self.ast.requirements.push(Requirement { cond, span: *span });
                }
                Stmt::For { var, start, end, body, span } => {
                    let a = self.constant(start, *span, "the loop start")?;
                    let b = self.constant(end, *span, "the loop bound")?;
                    if a.fract() != 0.0 || b.fract() != 0.0 || !a.is_finite() || !b.is_finite() {
                        return Err(ParseError::Syntax {
                            line: span.line,
                            col: span.col,
                            expected: "integer loop bounds".into(),
                        });
                    }
                    let saved = self.scope.get(var).cloned();
                    let mut k = a;
                    while k < b {
                        self.scope.insert(var.clone(), Binding::Number(k));
                        self.stmts(body)?;
                        k += 1.0;
                    }
                    match saved {
                        Some(b) => self.scope.insert(var.clone(), b),
                        None => self.scope.remove(var),
                    };
                }
            }
        }
        Ok(())
    }
}

pub fn elaborate(stmts: &[Stmt], overrides: &BTreeMap<String, f64>) -> Result<ScenarioAst, ParseError> {
    let mut el = Elaborator {
        scope: BTreeMap::new(),
        used: BTreeSet::new(),
        overrides,
        applied: BTreeSet::new(),
        anon: 0,
        ast: ScenarioAst::default(),
    };
    el.stmts(stmts)?;
    if let Some(name) = overrides.keys().find(|k| !el.applied.contains(*k)) {
        return Err(ParseError::UnknownParam(name.clone()));
    }
    Ok(el.ast)
}
