//! SMT-LIB 2 (QF_NRA) rendering of formulas and a reader for the same
//! subset, so dumped queries can be solved again.

use std::fmt::Write;

use thiserror::Error;

use super::formula::{Formula, Term, TermNode, VarRole, VarTable};
use crate::interval::Interval;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmtParseError {
    #[error("unbalanced parentheses")]
    Unbalanced,
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("unsupported form `{0}`")]
    Unsupported(String),
    #[error("malformed `{0}`")]
    Malformed(String),
}

fn number(x: f64) -> String {
    let body = format!("{}", x.abs());
    let body = if body.contains('.') || body.contains("inf") {
        body
    } else {
        format!("{body}.0")
    };
    if x < 0.0 {
        format!("(- {body})")
    } else {
        body
    }
}

fn term(t: &Term, vars: &VarTable, out: &mut String) {
    match t.node() {
        TermNode::Var(i) => out.push_str(vars.name(*i)),
        TermNode::Const(x) => out.push_str(&number(*x)),
        TermNode::Add(a, b) => bin("+", a, b, vars, out),
        TermNode::Mul(a, b) => bin("*", a, b, vars, out),
        TermNode::Neg(a) => un("-", a, vars, out),
        TermNode::Sin(a) => un("sin", a, vars, out),
        TermNode::Atan(a) => un("atan", a, vars, out),
    }
}

fn bin(op: &str, a: &Term, b: &Term, vars: &VarTable, out: &mut String) {
    write!(out, "({op} ").expect("string write");
    term(a, vars, out);
    out.push(' ');
    term(b, vars, out);
    out.push(')');
}

fn un(op: &str, a: &Term, vars: &VarTable, out: &mut String) {
    write!(out, "({op} ").expect("string write");
    term(a, vars, out);
    out.push(')');
}

fn formula(f: &Formula, vars: &VarTable, out: &mut String) {
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Le(t) | Formula::Lt(t) => {
            out.push_str(if matches!(f, Formula::Le(_)) { "(<= " } else { "(< " });
            term(t, vars, out);
            out.push_str(" 0.0)");
        }
        Formula::And(xs) | Formula::Or(xs) => {
            out.push_str(if matches!(f, Formula::And(_)) { "(and" } else { "(or" });
            for x in xs {
                out.push(' ');
                formula(x, vars, out);
            }
            out.push(')');
        }
    }
}

/// Renders a complete script with declarations, bounds and `check-sat`.
pub fn to_smtlib(f: &Formula, vars: &VarTable) -> String {
    let mut out = String::from("(set-logic QF_NRA)\n");
    for v in &vars.vars {
        writeln!(out, "(declare-fun {} () Real)", v.name).expect("string write");
    }
    for v in &vars.vars {
        let Interval { lo, hi } = v.bound;
        if lo.is_finite() {
            writeln!(out, "(assert (<= {} {}))", number(lo), v.name).expect("string write");
        }
        if hi.is_finite() {
            writeln!(out, "(assert (<= {} {}))", v.name, number(hi)).expect("string write");
        }
    }
    out.push_str("(assert ");
    formula(f, vars, &mut out);
    out.push_str(")\n(check-sat)\n(exit)\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut toks = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ';' => {
                for d in chars.by_ref() {
                    if d == '\n' {
                        break;
                    }
                }
            }
            '(' | ')' => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
                toks.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    toks.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        toks.push(cur);
    }
    toks
}

fn read(toks: &[String]) -> Result<Vec<Sexp>, SmtParseError> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    for t in toks {
        match t.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack.pop().ok_or(SmtParseError::Unbalanced)?;
                stack.last_mut().ok_or(SmtParseError::Unbalanced)?.push(Sexp::List(done));
            }
            a => stack.last_mut().ok_or(SmtParseError::Unbalanced)?.push(Sexp::Atom(a.to_string())),
        }
    }
    if stack.len() != 1 {
        return Err(SmtParseError::Unbalanced);
    }
    Ok(stack.pop().expect("root"))
}

fn show(s: &Sexp) -> String {
    match s {
        Sexp::Atom(a) => a.clone(),
        Sexp::List(xs) => format!("({})", xs.iter().map(show).collect::<Vec<_>>().join(" ")),
    }
}

fn parse_term(s: &Sexp, vars: &VarTable) -> Result<Term, SmtParseError> {
    match s {
        Sexp::Atom(a) => {
            if let Ok(x) = a.parse::<f64>() {
                return Ok(Term::c(x));
            }
            vars.index_of(a)
                .map(Term::var)
                .ok_or_else(|| SmtParseError::UnknownSymbol(a.clone()))
        }
        Sexp::List(xs) => {
            let (head, args) = match xs.split_first() {
                Some((Sexp::Atom(h), args)) => (h.as_str(), args),
                _ => return Err(SmtParseError::Unsupported(show(s))),
            };
            let ts = args.iter().map(|a| parse_term(a, vars)).collect::<Result<Vec<_>, _>>()?;
            let one = |ts: &[Term]| -> Result<Term, SmtParseError> {
                match ts {
                    [t] => Ok(t.clone()),
                    _ => Err(SmtParseError::Malformed(show(s))),
                }
            };
            match head {
                "+" => ts.into_iter().reduce(Term::add).ok_or_else(|| SmtParseError::Malformed(show(s))),
                "*" => ts.into_iter().reduce(Term::mul).ok_or_else(|| SmtParseError::Malformed(show(s))),
                "-" if ts.len() == 1 => Ok(Term::neg(ts[0].clone())),
                "-" => ts.into_iter().reduce(Term::sub).ok_or_else(|| SmtParseError::Malformed(show(s))),
                "/" => match ts.as_slice() {
                    [a, b] => match b.as_const() {
                        Some(k) if k != 0.0 => Ok(a * (1.0 / k)),
                        _ => Err(SmtParseError::Unsupported(show(s))),
                    },
                    _ => Err(SmtParseError::Malformed(show(s))),
                },
                "sin" => Ok(Term::sin(one(&ts)?)),
                "cos" => Ok(Term::cos(one(&ts)?)),
                "atan" | "arctan" => Ok(Term::atan(one(&ts)?)),
                _ => Err(SmtParseError::Unsupported(show(s))),
            }
        }
    }
}

fn parse_formula(s: &Sexp, vars: &VarTable) -> Result<Formula, SmtParseError> {
    match s {
        Sexp::Atom(a) if a == "true" => Ok(Formula::True),
        Sexp::Atom(a) if a == "false" => Ok(Formula::False),
        Sexp::List(xs) => {
            let (head, args) = match xs.split_first() {
                Some((Sexp::Atom(h), args)) => (h.as_str(), args),
                _ => return Err(SmtParseError::Unsupported(show(s))),
            };
            let sub = || args.iter().map(|a| parse_formula(a, vars)).collect::<Result<Vec<_>, _>>();
            match head {
                "and" => Ok(Formula::and(sub()?)),
                "or" => Ok(Formula::or(sub()?)),
                "not" => match sub()?.as_slice() {
                    [f] => Ok(f.clone().not()),
                    _ => Err(SmtParseError::Malformed(show(s))),
                },
                "=>" => match sub()?.as_slice() {
                    [a, b] => Ok(Formula::or(vec![a.clone().not(), b.clone()])),
                    _ => Err(SmtParseError::Malformed(show(s))),
                },
                "<=" | "<" | ">=" | ">" | "=" => {
                    let ts = args.iter().map(|a| parse_term(a, vars)).collect::<Result<Vec<_>, _>>()?;
                    if ts.len() < 2 {
                        return Err(SmtParseError::Malformed(show(s)));
                    }
                    let parts = ts
                        .windows(2)
                        .map(|w| {
                            let (a, b) = (w[0].clone(), w[1].clone());
                            match head {
                                "<=" => Formula::le(a, b),
                                "<" => Formula::lt(a, b),
                                ">=" => Formula::ge(a, b),
                                ">" => Formula::gt(a, b),
                                _ => Formula::eq_eps(a, b, 0.0),
                            }
                        })
                        .collect();
                    Ok(Formula::and(parts))
                }
                _ => Err(SmtParseError::Unsupported(show(s))),
            }
        }
        Sexp::Atom(a) => Err(SmtParseError::UnknownSymbol(a.clone())),
    }
}

/// Tightens variable bounds from top-level atoms of the form `x <= c` or
/// `c <= x`; the atoms stay in the formula.
fn extract_bounds(f: &Formula, vars: &mut VarTable) {
    let parts: Vec<&Formula> = match f {
        Formula::And(xs) => xs.iter().collect(),
        other => vec![other],
    };
    for p in parts {
        let Formula::Le(t) = p else { continue };
        let (var, sign, k) = match t.node() {
            TermNode::Var(i) => (*i, 1.0, 0.0),
            TermNode::Neg(a) => match a.node() {
                TermNode::Var(i) => (*i, -1.0, 0.0),
                _ => continue,
            },
            TermNode::Add(a, b) => match (a.node(), b.node()) {
                (TermNode::Var(i), TermNode::Const(c)) => (*i, 1.0, *c),
                (TermNode::Const(c), TermNode::Neg(n)) => match n.node() {
                    TermNode::Var(i) => (*i, -1.0, *c),
                    _ => continue,
                },
                _ => continue,
            },
            _ => continue,
        };
        let b = &mut vars.vars[var].bound;
        if sign > 0.0 {
            // x + k <= 0
            b.hi = b.hi.min(-k);
        } else {
            // k - x <= 0
            b.lo = b.lo.max(k);
        }
    }
}

/// Reads a script in the subset written by [`to_smtlib`] (plus the usual
/// comparison sugar). Returns the declared variables and the conjunction of
/// all assertions.
pub fn parse_smtlib(text: &str) -> Result<(VarTable, Formula), SmtParseError> {
    let toks = tokenize(text);
    let cmds = read(&toks)?;
    let mut vars = VarTable::new();
    let mut asserts = Vec::new();
    for c in &cmds {
        let Sexp::List(xs) = c else {
            return Err(SmtParseError::Malformed(show(c)));
        };
        match xs.first() {
            Some(Sexp::Atom(h)) if h == "declare-fun" || h == "declare-const" => {
                let Some(Sexp::Atom(name)) = xs.get(1) else {
                    return Err(SmtParseError::Malformed(show(c)));
                };
                vars.vars.push(super::formula::VarInfo {
                    name: name.clone(),
                    role: VarRole::Aux,
                    bound: Interval::ENTIRE,
                });
            }
            Some(Sexp::Atom(h)) if h == "assert" => match xs.get(1) {
                Some(f) => asserts.push(parse_formula(f, &vars)?),
                None => return Err(SmtParseError::Malformed(show(c))),
            },
            Some(Sexp::Atom(h))
                if matches!(
                    h.as_str(),
                    "set-logic" | "set-info" | "set-option" | "check-sat" | "exit" | "get-model"
                ) => {}
            _ => return Err(SmtParseError::Unsupported(show(c))),
        }
    }
    let f = Formula::and(asserts);
    extract_bounds(&f, &mut vars);
    Ok((vars, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_meaning() {
        let mut vars = VarTable::new();
        let x = vars.fresh("x", VarRole::Aux, -10.0, 10.0);
        let y = vars.fresh("y", VarRole::Aux, 0.0, 3.5);
        let f = Formula::or(vec![
            Formula::and(vec![Formula::le(Term::sqr(x.clone()), Term::c(4.0)), Formula::lt(y.clone(), x.clone())]),
            Formula::eq(Term::sin(x.clone()) + Term::atan(y.clone()), Term::c(-0.25)),
        ]);
        let text = to_smtlib(&f, &vars);
        assert!(text.starts_with("(set-logic QF_NRA)"));
        let (vars2, g) = parse_smtlib(&text).unwrap();
        assert_eq!(vars2.bounds(), vars.bounds());
        for &(a, b) in &[(1.0, 0.5), (3.0, 1.0), (-0.3, 0.05), (0.0, 0.0)] {
            assert_eq!(f.eval(&[a, b]), g.eval(&[a, b]), "{a} {b}");
        }
    }

    #[test]
    fn numbers_are_plain_decimals() {
        assert_eq!(number(3.0), "3.0");
        assert_eq!(number(-0.5), "(- 0.5)");
        assert_eq!(number(1e-7), "0.0000001");
    }

    #[test]
    fn rejects_unknown_symbols() {
        assert!(parse_smtlib("(assert (<= z 1))").is_err());
        assert!(parse_smtlib("(declare-fun z () Real)(assert (<= (exp z) 1))").is_err());
        assert!(parse_smtlib("(assert true").is_err());
    }
}
