//! Canonical source rendering of an elaborated program. Compound
//! subexpressions are fully parenthesized so reparsing reproduces the AST.

use std::fmt::Write;

use super::ast::*;

fn number(x: f64) -> String {
    format!("{x:?}")
}

fn opt_from(from: &Option<Box<Expr>>) -> String {
    from.as_ref().map(|f| format!(" from {}", expr(f))).unwrap_or_default()
}

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Number(x) => number(*x),
        Expr::Bool(b) => if *b { "True" } else { "False" }.to_string(),
        Expr::Ident(n) => n.clone(),
        Expr::Region(sel) => sel.to_string(),
        Expr::RoadDirection => "roadDirection".into(),
        Expr::Vector(a, b) => format!("({}, {})", expr(a), expr(b)),
        Expr::Attr(a, n) => match a.as_ref() {
            Expr::Ident(_) => format!("{}.{n}", expr(a)),
            _ => format!("({}).{n}", expr(a)),
        },
        Expr::Neg(a) => format!("(-{})", expr(a)),
        Expr::Binary(op, a, b) => format!("({} {} {})", expr(a), op.symbol(), expr(b)),
        Expr::Range(a, b) => format!("Range({}, {})", expr(a), expr(b)),
        Expr::Normal(a, b) => format!("Normal({}, {})", expr(a), expr(b)),
        Expr::Options(xs) => {
            let items: Vec<String> = xs.iter().map(expr).collect();
            format!("Options([{}])", items.join(", "))
        }
        Expr::RelativeTo(a, b) => format!("({} relative to {})", expr(a), expr(b)),
        Expr::OffsetBy(a, b) => format!("({} offset by {})", expr(a), expr(b)),
        Expr::OffsetAlong(a, h, b) => {
            format!("({} offset along {} by {})", expr(a), expr(h), expr(b))
        }
        Expr::DistanceTo { from, to } => format!("(distance{} to {})", opt_from(from), expr(to)),
        Expr::AngleTo { from, to } => format!("(angle{} to {})", opt_from(from), expr(to)),
        Expr::RelativeHeading { of, from } => {
            format!("(relative heading of {}{})", expr(of), opt_from(from))
        }
        Expr::ApparentHeading { of, from } => {
            format!("(apparent heading of {}{})", expr(of), opt_from(from))
        }
        Expr::FieldAt(f, v) => format!("({} at {})", expr(f), expr(v)),
        Expr::Front(a) => format!("(front of {})", expr(a)),
        Expr::Back(a) => format!("(back of {})", expr(a)),
        Expr::Visible(a) => format!("(visible {})", expr(a)),
        Expr::CanSee(a, b) => format!("({} can see {})", expr(a), expr(b)),
        Expr::In(a, b) => format!("({} in {})", expr(a), expr(b)),
        Expr::Compare(op, a, b) => format!("({} {} {})", expr(a), op.symbol(), expr(b)),
        Expr::Not(a) => format!("(not {})", expr(a)),
        Expr::And(a, b) => format!("({} and {})", expr(a), expr(b)),
        Expr::Or(a, b) => format!("({} or {})", expr(a), expr(b)),
    }
}

fn by(d: &Option<Expr>) -> String {
    d.as_ref().map(|d| format!(" by {}", expr(d))).unwrap_or_default()
}

fn from(d: &Option<Expr>) -> String {
    d.as_ref().map(|d| format!(" from {}", expr(d))).unwrap_or_default()
}

pub fn specifier(s: &SpecifierKind) -> String {
    use SpecifierKind::*;
    match s {
        At(e) => format!("at {}", expr(e)),
        On(e) => format!("on {}", expr(e)),
        AheadOf(r, d) => format!("ahead of {}{}", expr(r), by(d)),
        Behind(r, d) => format!("behind {}{}", expr(r), by(d)),
        LeftOf(r, d) => format!("left of {}{}", expr(r), by(d)),
        RightOf(r, d) => format!("right of {}{}", expr(r), by(d)),
        OffsetBy(v) => format!("offset by {}", expr(v)),
        OffsetAlong(h, v) => format!("offset along {} by {}", expr(h), expr(v)),
        Beyond { target, offset, from: f } => {
            format!("beyond {} by {}{}", expr(target), expr(offset), from(f))
        }
        Visible(f) => format!("visible{}", from(f)),
        Facing(h) => format!("facing {}", expr(h)),
        FacingToward(v) => format!("facing toward {}", expr(v)),
        FacingAwayFrom(v) => format!("facing away from {}", expr(v)),
        ApparentlyFacing(h, f) => format!("apparently facing {}{}", expr(h), from(f)),
        With(n, v) => format!("with {n} {}", expr(v)),
    }
}

pub fn program(ast: &ScenarioAst) -> String {
    let mut out = String::new();
    for (n, v) in &ast.params {
        writeln!(out, "param {n} = {}", number(*v)).expect("string write");
    }
    for d in &ast.defs {
        match &d.body {
            DefBody::Value(e) => writeln!(out, "{} = {}", d.name, expr(e)),
            DefBody::Object(o) => {
                let specs: Vec<String> = o.specifiers.iter().map(|s| specifier(&s.kind)).collect();
                if specs.is_empty() {
                    writeln!(out, "{} = {}", d.name, o.class.keyword())
                } else {
                    writeln!(out, "{} = {} {}", d.name, o.class.keyword(), specs.join(", "))
                }
            }
        }
        .expect("string write");
    }
    for r in &ast.requirements {
        writeln!(out, "require {}", expr(&r.cond)).expect("string write");
    }
    out
}
