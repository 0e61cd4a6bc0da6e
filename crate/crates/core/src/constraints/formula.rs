//! Terms and formulas of quantifier-free nonlinear real arithmetic with
//! `sin` and `atan`, built through constant-folding constructors.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::ops;
use std::sync::Arc;

use serde::Serialize;

use crate::interval::Interval;

/// Default tolerance for encoded equalities.
pub const EQ_EPS: f64 = 1e-6;

#[derive(Debug, PartialEq)]
pub enum TermNode {
    Var(usize),
    Const(f64),
    Add(Term, Term),
    Mul(Term, Term),
    Neg(Term),
    Sin(Term),
    Atan(Term),
}

/// Shared term. Reusing the same `Term` in several places keeps it a single
/// node in the solver's expression DAG.
#[derive(Debug, Clone, PartialEq)]
pub struct Term(Arc<TermNode>);

impl Term {
    pub fn node(&self) -> &TermNode {
        &self.0
    }

    pub fn ptr_eq(&self, other: &Term) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Stable address used to deduplicate shared subterms.
    pub fn addr(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn var(id: usize) -> Term {
        Term(Arc::new(TermNode::Var(id)))
    }

    pub fn c(x: f64) -> Term {
        Term(Arc::new(TermNode::Const(x)))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            TermNode::Const(x) => Some(x),
            _ => None,
        }
    }

    pub fn add(a: Term, b: Term) -> Term {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Term::c(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Term(Arc::new(TermNode::Add(a, b))),
        }
    }

    pub fn mul(a: Term, b: Term) -> Term {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Term::c(x * y),
            (Some(x), _) if x == 0.0 => Term::c(0.0),
            (_, Some(y)) if y == 0.0 => Term::c(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Term::neg(b),
            (_, Some(y)) if y == -1.0 => Term::neg(a),
            _ => Term(Arc::new(TermNode::Mul(a, b))),
        }
    }

    pub fn neg(a: Term) -> Term {
        match a.node() {
            TermNode::Const(x) => Term::c(-x),
            TermNode::Neg(inner) => inner.clone(),
            _ => Term(Arc::new(TermNode::Neg(a))),
        }
    }

    pub fn sub(a: Term, b: Term) -> Term {
        Term::add(a, Term::neg(b))
    }

    pub fn sin(a: Term) -> Term {
        match a.as_const() {
            Some(x) => Term::c(x.sin()),
            None => Term(Arc::new(TermNode::Sin(a))),
        }
    }

    /// `cos(x)` expressed as `sin(x + pi/2)`.
    pub fn cos(a: Term) -> Term {
        match a.as_const() {
            Some(x) => Term::c(x.cos()),
            None => Term::sin(Term::add(a, Term::c(FRAC_PI_2))),
        }
    }

    pub fn atan(a: Term) -> Term {
        match a.as_const() {
            Some(x) => Term::c(x.atan()),
            None => Term(Arc::new(TermNode::Atan(a))),
        }
    }

    /// `a * a` with both factors sharing one node.
    pub fn sqr(a: Term) -> Term {
        Term::mul(a.clone(), a)
    }

    pub fn eval(&self, env: &[f64]) -> f64 {
        match self.node() {
            TermNode::Var(i) => env[*i],
            TermNode::Const(x) => *x,
            TermNode::Add(a, b) => a.eval(env) + b.eval(env),
            TermNode::Mul(a, b) => a.eval(env) * b.eval(env),
            TermNode::Neg(a) => -a.eval(env),
            TermNode::Sin(a) => a.eval(env).sin(),
            TermNode::Atan(a) => a.eval(env).atan(),
        }
    }

    /// Natural interval extension over a box (no sharing-aware caching).
    pub fn eval_interval(&self, dom: &[Interval]) -> Interval {
        match self.node() {
            TermNode::Var(i) => dom[*i],
            TermNode::Const(x) => Interval::point(*x),
            TermNode::Add(a, b) => a.eval_interval(dom).add(&b.eval_interval(dom)),
            TermNode::Mul(a, b) if a.ptr_eq(b) => a.eval_interval(dom).sqr(),
            TermNode::Mul(a, b) => a.eval_interval(dom).mul(&b.eval_interval(dom)),
            TermNode::Neg(a) => a.eval_interval(dom).neg(),
            TermNode::Sin(a) => a.eval_interval(dom).sin(),
            TermNode::Atan(a) => a.eval_interval(dom).atan(),
        }
    }

    pub fn vars(&self, out: &mut Vec<usize>) {
        match self.node() {
            TermNode::Var(i) => {
                if !out.contains(i) {
                    out.push(*i)
                }
            }
            TermNode::Const(_) => {}
            TermNode::Add(a, b) | TermNode::Mul(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            TermNode::Neg(a) | TermNode::Sin(a) | TermNode::Atan(a) => a.vars(out),
        }
    }
}

impl From<f64> for Term {
    fn from(x: f64) -> Term {
        Term::c(x)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $f:path) => {
        impl ops::$tr<Term> for Term {
            type Output = Term;
            fn $m(self, o: Term) -> Term {
                $f(self, o)
            }
        }
        impl ops::$tr<&Term> for &Term {
            type Output = Term;
            fn $m(self, o: &Term) -> Term {
                $f(self.clone(), o.clone())
            }
        }
        impl ops::$tr<f64> for Term {
            type Output = Term;
            fn $m(self, o: f64) -> Term {
                $f(self, Term::c(o))
            }
        }
        impl ops::$tr<f64> for &Term {
            type Output = Term;
            fn $m(self, o: f64) -> Term {
                $f(self.clone(), Term::c(o))
            }
        }
    };
}

binop!(Add, add, Term::add);
binop!(Sub, sub, Term::sub);
binop!(Mul, mul, Term::mul);

impl ops::Neg for Term {
    type Output = Term;
    fn neg(self) -> Term {
        Term::neg(self)
    }
}

impl ops::Neg for &Term {
    type Output = Term;
    fn neg(self) -> Term {
        Term::neg(self.clone())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            TermNode::Var(i) => write!(f, "x{i}"),
            TermNode::Const(x) => write!(f, "{x}"),
            TermNode::Add(a, b) => write!(f, "({a} + {b})"),
            TermNode::Mul(a, b) => write!(f, "({a} * {b})"),
            TermNode::Neg(a) => write!(f, "-{a}"),
            TermNode::Sin(a) => write!(f, "sin({a})"),
            TermNode::Atan(a) => write!(f, "atan({a})"),
        }
    }
}

/// Formula in negation normal form; `not` pushes negation into the atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    False,
    /// `t <= 0`
    Le(Term),
    /// `t < 0`
    Lt(Term),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn le0(t: Term) -> Formula {
        match t.as_const() {
            Some(x) if x <= 0.0 => Formula::True,
            Some(_) => Formula::False,
            None => Formula::Le(t),
        }
    }

    pub fn lt0(t: Term) -> Formula {
        match t.as_const() {
            Some(x) if x < 0.0 => Formula::True,
            Some(_) => Formula::False,
            None => Formula::Lt(t),
        }
    }

    /// `a <= b`
    pub fn le(a: Term, b: Term) -> Formula {
        Formula::le0(a - b)
    }

    /// `a < b`
    pub fn lt(a: Term, b: Term) -> Formula {
        Formula::lt0(a - b)
    }

    pub fn ge(a: Term, b: Term) -> Formula {
        Formula::le(b, a)
    }

    pub fn gt(a: Term, b: Term) -> Formula {
        Formula::lt(b, a)
    }

    /// `|a - b| <= eps`
    pub fn eq_eps(a: Term, b: Term, eps: f64) -> Formula {
        let d = a - b;
        Formula::and(vec![Formula::le0(&d - eps), Formula::le0(-d - eps)])
    }

    pub fn eq(a: Term, b: Term) -> Formula {
        Formula::eq_eps(a, b, EQ_EPS)
    }

    /// Wrap-free heading equality: `|sin((a - b) / 2)| <= eps / 2`.
    pub fn heading_eq(a: Term, b: Term, eps: f64) -> Formula {
        let s = Term::sin((a - b) * 0.5);
        Formula::and(vec![Formula::le0(&s - eps / 2.0), Formula::le0(-s - eps / 2.0)])
    }

    /// `lo <= t <= hi`
    pub fn within(t: &Term, lo: f64, hi: f64) -> Formula {
        Formula::and(vec![Formula::le(Term::c(lo), t.clone()), Formula::le(t.clone(), Term::c(hi))])
    }

    pub fn and(parts: Vec<Formula>) -> Formula {
        let mut out = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(xs) => out.extend(xs),
                p => out.push(p),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().expect("one element"),
            _ => Formula::And(out),
        }
    }

    pub fn or(parts: Vec<Formula>) -> Formula {
        let mut out = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(xs) => out.extend(xs),
                p => out.push(p),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().expect("one element"),
            _ => Formula::Or(out),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Le(t) => Formula::lt0(-t),
            Formula::Lt(t) => Formula::le0(-t),
            Formula::And(xs) => Formula::or(xs.into_iter().map(Formula::not).collect()),
            Formula::Or(xs) => Formula::and(xs.into_iter().map(Formula::not).collect()),
        }
    }

    /// Exact truth at a point.
    pub fn eval(&self, env: &[f64]) -> bool {
        self.eval_slack(env, 0.0)
    }

    /// Truth at a point with every atom relaxed by `slack`.
    pub fn eval_slack(&self, env: &[f64], slack: f64) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Le(t) => t.eval(env) <= slack,
            Formula::Lt(t) => {
                let v = t.eval(env);
                if slack == 0.0 {
                    v < 0.0
                } else {
                    v <= slack
                }
            }
            Formula::And(xs) => xs.iter().all(|x| x.eval_slack(env, slack)),
            Formula::Or(xs) => xs.iter().any(|x| x.eval_slack(env, slack)),
        }
    }

    pub fn vars(&self, out: &mut Vec<usize>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Le(t) | Formula::Lt(t) => t.vars(out),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.vars(out)),
        }
    }

    /// Number of atoms, for diagnostics.
    pub fn size(&self) -> usize {
        match self {
            Formula::True | Formula::False => 0,
            Formula::Le(_) | Formula::Lt(_) => 1,
            Formula::And(xs) | Formula::Or(xs) => xs.iter().map(Formula::size).sum(),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, xs: &[Formula], op: &str| -> fmt::Result {
            write!(f, "(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, ")")
        };
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Le(t) => write!(f, "{t} <= 0"),
            Formula::Lt(t) => write!(f, "{t} < 0"),
            Formula::And(xs) => join(f, xs, "and"),
            Formula::Or(xs) => join(f, xs, "or"),
        }
    }
}

/// What a solver variable stands for.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "of")]
pub enum VarRole {
    /// Coordinate of a sampled point, named after the program slot owning it.
    Point(String),
    /// A distribution draw.
    Draw(String),
    /// Heading read from a region's orientation.
    Orientation(String),
    /// Barycentric coordinate or other existential helper.
    Aux,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarInfo {
    pub name: String,
    pub role: VarRole,
    pub bound: Interval,
}

/// Variables of one query with their roles and finite bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VarTable {
    pub vars: Vec<VarInfo>,
}

fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if s.starts_with(|c: char| c.is_ascii_digit()) || s.is_empty() {
        format!("v{s}")
    } else {
        s
    }
}

impl VarTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a variable; the name is made unique and SMT-LIB safe.
    pub fn fresh(&mut self, name: &str, role: VarRole, lo: f64, hi: f64) -> Term {
        let base = sanitize(name);
        let mut n = base.clone();
        let mut k = 1;
        while self.vars.iter().any(|v| v.name == n) {
            n = format!("{base}_{k}");
            k += 1;
        }
        self.vars.push(VarInfo {
            name: n,
            role,
            bound: Interval::new(lo, hi),
        });
        Term::var(self.vars.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn bounds(&self) -> Vec<Interval> {
        self.vars.iter().map(|v| v.bound).collect()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.vars[i].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_fold_constants() {
        assert_eq!(Term::c(2.0) + Term::c(3.0), Term::c(5.0));
        let x = Term::var(0);
        assert!((&x * 1.0).ptr_eq(&x));
        assert_eq!(&x * 0.0, Term::c(0.0));
        assert!((-(-x.clone())).ptr_eq(&x));
        assert_eq!(Formula::le(Term::c(1.0), Term::c(2.0)), Formula::True);
        assert_eq!(Formula::and(vec![Formula::True, Formula::False]), Formula::False);
        assert_eq!(Formula::or(vec![Formula::False, Formula::False]), Formula::False);
    }

    #[test]
    fn negation_normal_form() {
        let x = Term::var(0);
        let f = Formula::and(vec![Formula::le(x.clone(), Term::c(1.0)), Formula::lt(Term::c(-1.0), x.clone())]);
        let g = f.clone().not();
        for v in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            assert_eq!(f.eval(&[v]), !g.eval(&[v]), "{v}");
        }
    }

    #[test]
    fn heading_equality_wraps() {
        let h = Term::var(0);
        let f = Formula::heading_eq(h, Term::c(std::f64::consts::PI), 1e-6);
        assert!(f.eval(&[-std::f64::consts::PI]));
        assert!(f.eval(&[std::f64::consts::PI]));
        assert!(!f.eval(&[0.0]));
    }

    #[test]
    fn var_names_are_unique_and_safe() {
        let mut t = VarTable::new();
        t.fresh("spot.x", VarRole::Aux, 0.0, 1.0);
        t.fresh("spot.x", VarRole::Aux, 0.0, 1.0);
        t.fresh("0z", VarRole::Aux, 0.0, 1.0);
        assert_eq!(t.name(0), "spot_x");
        assert_eq!(t.name(1), "spot_x_1");
        assert_eq!(t.name(2), "v0z");
    }
}
