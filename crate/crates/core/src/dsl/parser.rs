//! Recursive-descent parser producing unelaborated statements.

use super::ast::*;
use super::lexer::{Tok, Token};
use super::ParseError;

/// A statement before loop unrolling and name resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Param { name: String, value: Expr, span: Span },
    Assign { name: String, rhs: DefBody, span: Span },
    Anonymous { object: ObjectDef, span: Span },
    Require { cond: Expr, span: Span },
    For { var: String, start: Expr, end: Expr, body: Vec<Stmt>, span: Span },
}

/// Statement keywords outside the fragment, with the message reported.
const EXCLUDED_STATEMENTS: &[(&str, &str)] = &[
    ("import", "import of external code"),
    ("from", "import of external code"),
    ("def", "function definitions (general-purpose code)"),
    ("class", "class definitions (general-purpose code)"),
    ("behavior", "dynamic behaviors"),
    ("monitor", "dynamic monitors"),
    ("scenario", "modular scenario definitions"),
    ("simulate", "dynamic simulation statements"),
    ("while", "while loops"),
    ("if", "conditional statements"),
    ("try", "exception handling"),
    ("lambda", "lambda expressions"),
    ("mutate", "mutate statements"),
    ("record", "record statements"),
    ("terminate", "termination conditions"),
    ("override", "dynamic overrides"),
    ("do", "dynamic actions"),
    ("take", "dynamic actions"),
    ("wait", "dynamic actions"),
    ("interrupt", "dynamic interrupts"),
];

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

fn check_arity(args: &[Expr], n: usize, name: &str, span: Span) -> Result<(), ParseError> {
    if args.len() == n {
        return Ok(());
    }
    Err(ParseError::Syntax {
        line: span.line,
        col: span.col,
        expected: format!("{n} arguments to `{name}`, found {}", args.len()),
    })
}

fn is_kw(t: &Tok, kw: &str) -> bool {
    matches!(t, Tok::Ident(s) if s == kw)
}

impl Parser {
    pub fn new(toks: Vec<Token>) -> Self {
        Self { toks, pos: 0 }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        let s = self.span();
        ParseError::Syntax {
            line: s.line,
            col: s.col,
            expected: format!("{expected}, found {}", self.peek().describe()),
        }
    }

    fn unsupported(span: Span, construct: &str) -> ParseError {
        ParseError::Unsupported {
            line: span.line,
            col: span.col,
            construct: construct.to_string(),
        }
    }

    fn at_kw(&self, kw: &str) -> bool {
        is_kw(self.peek(), kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("`{kw}`")))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.error(&t.describe()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.check_following(&s)?;
                self.bump();
                Ok(s)
            }
            _ => Err(self.error("an identifier")),
        }
    }

    fn check_following(&self, word: &str) -> Result<(), ParseError> {
        match word {
            "following" => Err(Self::unsupported(self.span(), "`following F for S` specifier")),
            "follow" => Err(Self::unsupported(self.span(), "`follow F from V for S` operator")),
            _ => Ok(()),
        }
    }

    fn end_of_statement(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof | Tok::Dedent => Ok(()),
            _ => Err(self.error("end of line")),
        }
    }

    pub fn program(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        while *self.peek() != Tok::Eof {
            if self.eat(&Tok::Newline) {
                continue;
            }
            if *self.peek() == Tok::Indent {
                return Err(self.error("a statement at the enclosing indentation"));
            }
            self.statement(&mut out)?;
        }
        Ok(out)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::Newline)?;
        self.expect(Tok::Indent)?;
        let mut out = Vec::new();
        while !matches!(self.peek(), Tok::Dedent | Tok::Eof) {
            if self.eat(&Tok::Newline) {
                continue;
            }
            self.statement(&mut out)?;
        }
        self.eat(&Tok::Dedent);
        Ok(out)
    }

    fn statement(&mut self, out: &mut Vec<Stmt>) -> Result<(), ParseError> {
        let span = self.span();
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.error("a statement")),
        };
        self.check_following(&word)?;
        if let Some((_, what)) = EXCLUDED_STATEMENTS.iter().find(|(k, _)| *k == word) {
            return Err(Self::unsupported(span, what));
        }
        match word.as_str() {
            "model" => {
                // world-model selection carries no constraints here
                self.bump();
                while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
                    self.bump();
                }
                self.end_of_statement()
            }
            "param" => {
                self.bump();
                loop {
                    let span = self.span();
                    let name = self.ident()?;
                    self.expect(Tok::Assign)?;
                    let value = self.expr()?;
                    out.push(Stmt::Param { name, value, span });
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.end_of_statement()
            }
            "require" => {
                self.bump();
                if *self.peek() == Tok::LBracket {
                    return Err(Self::unsupported(span, "probabilistic requirements `require[p]`"));
                }
                let cond = self.expr()?;
                out.push(Stmt::Require { cond, span });
                self.end_of_statement()
            }
            "for" => {
                self.bump();
                let var = self.ident()?;
                self.expect_kw("in")?;
                self.expect_kw("range")?;
                self.expect(Tok::LParen)?;
                let first = self.expr()?;
                let (start, end) = if self.eat(&Tok::Comma) {
                    (first, self.expr()?)
                } else {
                    (Expr::Number(0.0), first)
                };
                self.expect(Tok::RParen)?;
                self.expect(Tok::Colon)?;
                let body = self.block()?;
                out.push(Stmt::For { var, start, end, body, span });
                Ok(())
            }
            _ if *self.peek_at(1) == Tok::Assign => {
                let name = self.ident()?;
                self.bump();
                self.eat_kw("new");
                let rhs = match self.peek() {
                    Tok::Ident(c) if ObjectClass::from_keyword(c).is_some() => {
                        DefBody::Object(self.object_def()?)
                    }
                    _ => DefBody::Value(self.expr()?),
                };
                out.push(Stmt::Assign { name, rhs, span });
                self.end_of_statement()
            }
            _ => {
                self.eat_kw("new");
                match self.peek() {
                    Tok::Ident(c) if ObjectClass::from_keyword(c).is_some() => {
                        let object = self.object_def()?;
                        out.push(Stmt::Anonymous { object, span });
                        self.end_of_statement()
                    }
                    _ => Err(self.error("a definition, `param`, `require` or `for`")),
                }
            }
        }
    }

    fn object_def(&mut self) -> Result<ObjectDef, ParseError> {
        let span = self.span();
        let name = self.ident()?;
        let class = ObjectClass::from_keyword(&name)
            .ok_or_else(|| Self::unsupported(span, &format!("object class `{name}`")))?;
        let mut specifiers = Vec::new();
        if matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent) {
            return Ok(ObjectDef { class, specifiers });
        }
        loop {
            specifiers.push(self.specifier()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(ObjectDef { class, specifiers })
    }

    fn by_clause(&mut self) -> Result<Option<Expr>, ParseError> {
        if self.eat_kw("by") {
            Ok(Some(self.rel_expr()?))
        } else {
            Ok(None)
        }
    }

    fn from_clause(&mut self) -> Result<Option<Expr>, ParseError> {
        if self.eat_kw("from") {
            Ok(Some(self.rel_expr()?))
        } else {
            Ok(None)
        }
    }

    fn specifier(&mut self) -> Result<Specifier, ParseError> {
        let span = self.span();
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.error("a specifier")),
        };
        self.check_following(&word)?;
        self.bump();
        let kind = match word.as_str() {
            "at" => SpecifierKind::At(self.rel_expr()?),
            "on" | "in" => SpecifierKind::On(self.rel_expr()?),
            "ahead" => {
                self.expect_kw("of")?;
                let r = self.rel_expr()?;
                SpecifierKind::AheadOf(r, self.by_clause()?)
            }
            "behind" => {
                let r = self.rel_expr()?;
                SpecifierKind::Behind(r, self.by_clause()?)
            }
            "left" => {
                self.expect_kw("of")?;
                let r = self.rel_expr()?;
                SpecifierKind::LeftOf(r, self.by_clause()?)
            }
            "right" => {
                self.expect_kw("of")?;
                let r = self.rel_expr()?;
                SpecifierKind::RightOf(r, self.by_clause()?)
            }
            "offset" => {
                if self.eat_kw("by") {
                    SpecifierKind::OffsetBy(self.rel_expr()?)
                } else if self.eat_kw("along") {
                    let h = self.rel_expr()?;
                    self.expect_kw("by")?;
                    SpecifierKind::OffsetAlong(h, self.rel_expr()?)
                } else {
                    return Err(self.error("`by` or `along`"));
                }
            }
            "beyond" => {
                let target = self.rel_expr()?;
                self.expect_kw("by")?;
                let offset = self.rel_expr()?;
                let from = self.from_clause()?;
                SpecifierKind::Beyond { target, offset, from }
            }
            "visible" => SpecifierKind::Visible(self.from_clause()?),
            "not" if self.at_kw("visible") => {
                return Err(Self::unsupported(span, "`not visible` specifier"));
            }
            "facing" => {
                if self.eat_kw("toward") {
                    SpecifierKind::FacingToward(self.rel_expr()?)
                } else if self.at_kw("away") && is_kw(self.peek_at(1), "from") {
                    self.bump();
                    self.bump();
                    SpecifierKind::FacingAwayFrom(self.rel_expr()?)
                } else {
                    SpecifierKind::Facing(self.rel_expr()?)
                }
            }
            "apparently" => {
                self.expect_kw("facing")?;
                let h = self.rel_expr()?;
                SpecifierKind::ApparentlyFacing(h, self.from_clause()?)
            }
            "with" => {
                let name = self.ident()?;
                SpecifierKind::With(name, self.rel_expr()?)
            }
            _ => {
                self.pos -= 1;
                return Err(self.error("a specifier"));
            }
        };
        Ok(Specifier { kind, span })
    }

    // ---- expressions -------------------------------------------------

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.eat_kw("or") {
            lhs = Expr::Or(lhs.boxed(), self.and_expr()?.boxed());
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw("and") {
            lhs = Expr::And(lhs.boxed(), self.not_expr()?.boxed());
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_kw("not") {
            return Ok(Expr::Not(self.not_expr()?.boxed()));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.rel_expr()?;
        let op = match self.peek() {
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            Tok::EqEq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Ident(s) if s == "in" => {
                self.bump();
                return Ok(Expr::In(lhs.boxed(), self.rel_expr()?.boxed()));
            }
            Tok::Ident(s) if s == "can" => {
                self.bump();
                self.expect_kw("see")?;
                return Ok(Expr::CanSee(lhs.boxed(), self.rel_expr()?.boxed()));
            }
            _ => return Ok(lhs),
        };
        self.bump();
        Ok(Expr::Compare(op, lhs.boxed(), self.rel_expr()?.boxed()))
    }

    fn rel_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.add_expr()?;
        loop {
            if self.at_kw("relative") && is_kw(self.peek_at(1), "to") {
                self.bump();
                self.bump();
                lhs = Expr::RelativeTo(lhs.boxed(), self.add_expr()?.boxed());
            } else if self.at_kw("offset") && is_kw(self.peek_at(1), "by") {
                self.bump();
                self.bump();
                lhs = Expr::OffsetBy(lhs.boxed(), self.add_expr()?.boxed());
            } else if self.at_kw("offset") && is_kw(self.peek_at(1), "along") {
                self.bump();
                self.bump();
                let h = self.add_expr()?;
                self.expect_kw("by")?;
                lhs = Expr::OffsetAlong(lhs.boxed(), h.boxed(), self.add_expr()?.boxed());
            } else {
                return Ok(lhs);
            }
        }
    }

    fn add_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Binary(op, lhs.boxed(), self.mul_expr()?.boxed());
        }
    }

    fn mul_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Binary(op, lhs.boxed(), self.unary()?.boxed());
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(match self.unary()? {
                Expr::Number(x) => Expr::Number(-x),
                e => Expr::Neg(e.boxed()),
            });
        }
        let lhs = self.prefix()?;
        if self.eat(&Tok::At) {
            return Ok(Expr::Vector(lhs.boxed(), self.prefix()?.boxed()));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.postfix(),
        };
        match word.as_str() {
            "distance" | "angle" if matches!(self.peek_at(1), Tok::Ident(s) if s == "from" || s == "to") => {
                self.bump();
                let from = if self.eat_kw("from") { Some(self.add_expr()?.boxed()) } else { None };
                self.expect_kw("to")?;
                let to = self.add_expr()?.boxed();
                Ok(if word == "distance" {
                    Expr::DistanceTo { from, to }
                } else {
                    Expr::AngleTo { from, to }
                })
            }
            "relative" | "apparent" if is_kw(self.peek_at(1), "heading") => {
                self.bump();
                self.bump();
                self.expect_kw("of")?;
                let of = self.add_expr()?.boxed();
                let from = if self.eat_kw("from") { Some(self.add_expr()?.boxed()) } else { None };
                Ok(if word == "relative" {
                    Expr::RelativeHeading { of, from }
                } else {
                    Expr::ApparentHeading { of, from }
                })
            }
            "front" | "back" if is_kw(self.peek_at(1), "of") => {
                self.bump();
                self.bump();
                let of = self.prefix()?.boxed();
                Ok(if word == "front" { Expr::Front(of) } else { Expr::Back(of) })
            }
            "visible" => {
                self.bump();
                Ok(Expr::Visible(self.prefix()?.boxed()))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        loop {
            if *self.peek() == Tok::Dot {
                self.bump();
                let attr = self.ident()?;
                e = Expr::Attr(e.boxed(), attr);
            } else if self.at_kw("deg") {
                self.bump();
                e = match e {
                    Expr::Number(x) => Expr::Number(x.to_radians()),
                    other => Expr::Binary(
                        BinOp::Mul,
                        other.boxed(),
                        Expr::Number(std::f64::consts::PI / 180.0).boxed(),
                    ),
                };
            } else if matches!(e, Expr::Ident(ref n) if n == "roadDirection") && self.at_kw("at") {
                self.bump();
                e = Expr::FieldAt(e.boxed(), self.add_expr()?.boxed());
            } else {
                return Ok(e);
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Number(x) => {
                self.bump();
                Ok(Expr::Number(x))
            }
            Tok::LParen => {
                self.bump();
                let a = self.expr()?;
                if self.eat(&Tok::Comma) {
                    let b = self.expr()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::Vector(a.boxed(), b.boxed()));
                }
                self.expect(Tok::RParen)?;
                Ok(a)
            }
            Tok::Ident(name) => {
                self.check_following(&name)?;
                if name == "lambda" {
                    return Err(Self::unsupported(span, "lambda expressions"));
                }
                self.bump();
                match name.as_str() {
                    "True" => return Ok(Expr::Bool(true)),
                    "False" => return Ok(Expr::Bool(false)),
                    _ => {}
                }
                if *self.peek() != Tok::LParen {
                    return Ok(Expr::Ident(name));
                }
                self.call(&name, span)
            }
            _ => Err(self.error("an expression")),
        }
    }

    fn call(&mut self, name: &str, span: Span) -> Result<Expr, ParseError> {
        match name {
            "Range" => {
                let mut a = self.args()?;
                check_arity(&a, 2, name, span)?;
                let b = a.pop().expect("arity checked");
                Ok(Expr::Range(a.pop().expect("arity checked").boxed(), b.boxed()))
            }
            "Normal" => {
                let mut a = self.args()?;
                check_arity(&a, 2, name, span)?;
                let b = a.pop().expect("arity checked");
                Ok(Expr::Normal(a.pop().expect("arity checked").boxed(), b.boxed()))
            }
            "Uniform" => {
                let a = self.args()?;
                if a.is_empty() {
                    return Err(ParseError::Syntax {
                        line: span.line,
                        col: span.col,
                        expected: "at least one argument to `Uniform`".into(),
                    });
                }
                Ok(Expr::Options(a))
            }
            "Options" => {
                self.expect(Tok::LParen)?;
                if !self.eat(&Tok::LBracket) {
                    return Err(self.error("`[` (Options takes a list)"));
                }
                let mut items = Vec::new();
                if !self.eat(&Tok::RBracket) {
                    loop {
                        items.push(self.expr()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RBracket)?;
                }
                self.expect(Tok::RParen)?;
                if items.is_empty() {
                    return Err(ParseError::Syntax {
                        line: span.line,
                        col: span.col,
                        expected: "a non-empty option list".into(),
                    });
                }
                Ok(Expr::Options(items))
            }
            "region" => {
                self.expect(Tok::LParen)?;
                let n = match self.bump().tok {
                    Tok::Str(s) => s,
                    _ => return Err(self.error("a region name string")),
                };
                self.expect(Tok::RParen)?;
                Ok(Expr::Region(crate::geomap::RegionSel::Named(n)))
            }
            other => Err(Self::unsupported(span, &format!("call to `{other}`"))),
        }
    }
}
