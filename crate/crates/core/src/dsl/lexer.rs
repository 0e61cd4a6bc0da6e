//! Tokenizer with Python-style indentation tracking.

use super::ast::Span;
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Colon,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    At,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(x) => format!("number {x}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Assign => "`=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::At => "`@`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Indent => "indent".into(),
            Tok::Dedent => "dedent".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn syntax(line: usize, col: usize, expected: &str) -> ParseError {
    ParseError::Syntax {
        line,
        col,
        expected: expected.to_string(),
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut indents = vec![0usize];
    let mut depth = 0usize; // bracket nesting; newlines inside brackets are ignored
    let mut cont = false; // previous line ended with a comma
    let mut last_line = 1;

    for (li, raw) in src.lines().enumerate() {
        let line = li + 1;
        last_line = line;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;

        if depth == 0 && !cont {
            let mut width = 0;
            while i < chars.len() && (chars[i] == ' ' || chars[i] == '\t') {
                width += if chars[i] == '\t' { 8 - width % 8 } else { 1 };
                i += 1;
            }
            if i == chars.len() || chars[i] == '#' {
                continue; // blank or comment-only line
            }
            let span = Span { line, col: i + 1 };
            let top = *indents.last().expect("indent stack never empty");
            if width > top {
                indents.push(width);
                out.push(Token { tok: Tok::Indent, span });
            } else {
                while width < *indents.last().expect("indent stack never empty") {
                    indents.pop();
                    out.push(Token { tok: Tok::Dedent, span });
                }
                if width != *indents.last().expect("indent stack never empty") {
                    return Err(syntax(line, i + 1, "indentation matching an enclosing block"));
                }
            }
        }

        while i < chars.len() {
            let c = chars[i];
            let span = Span { line, col: i + 1 };
            if c == ' ' || c == '\t' || c == '\r' {
                i += 1;
                continue;
            }
            if c == '#' {
                break;
            }
            if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value: f64 = text
                    .parse()
                    .map_err(|_| syntax(line, start + 1, "a decimal number"))?;
                out.push(Token { tok: Tok::Number(value), span });
                continue;
            }
            if c.is_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    span,
                });
                continue;
            }
            if c == '"' || c == '\'' {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i] != c {
                    i += 1;
                }
                if i == chars.len() {
                    return Err(syntax(line, start + 1, "closing quote"));
                }
                out.push(Token {
                    tok: Tok::Str(chars[start + 1..i].iter().collect()),
                    span,
                });
                i += 1;
                continue;
            }
            let next = chars.get(i + 1).copied();
            let (tok, len) = match (c, next) {
                ('<', Some('=')) => (Tok::Le, 2),
                ('>', Some('=')) => (Tok::Ge, 2),
                ('=', Some('=')) => (Tok::EqEq, 2),
                ('!', Some('=')) => (Tok::Ne, 2),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('[', _) => (Tok::LBracket, 1),
                (']', _) => (Tok::RBracket, 1),
                (',', _) => (Tok::Comma, 1),
                ('.', _) => (Tok::Dot, 1),
                (':', _) => (Tok::Colon, 1),
                ('=', _) => (Tok::Assign, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                ('/', _) => (Tok::Slash, 1),
                ('@', _) => (Tok::At, 1),
                ('<', _) => (Tok::Lt, 1),
                ('>', _) => (Tok::Gt, 1),
                _ => return Err(syntax(line, i + 1, "a token")),
            };
            match tok {
                Tok::LParen | Tok::LBracket => depth += 1,
                Tok::RParen | Tok::RBracket => {
                    depth = depth
                        .checked_sub(1)
                        .ok_or_else(|| syntax(line, i + 1, "a matching opening bracket"))?
                }
                _ => {}
            }
            out.push(Token { tok, span });
            i += len;
        }
        if chars.iter().all(|c| c.is_whitespace()) {
            continue;
        }
        cont = out.last().is_some_and(|t| t.tok == Tok::Comma);
        if depth == 0 && !cont && out.last().is_some_and(|t| t.tok != Tok::Newline) {
            out.push(Token {
                tok: Tok::Newline,
                span: Span { line, col: chars.len() + 1 },
            });
        }
    }
    let end = Span { line: last_line + 1, col: 1 };
    if depth != 0 {
        return Err(syntax(end.line, end.col, "closing bracket"));
    }
    while indents.len() > 1 {
        indents.pop();
        out.push(Token { tok: Tok::Dedent, span: end });
    }
    out.push(Token { tok: Tok::Eof, span: end });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn indentation_blocks() {
        let t = toks("for i in range(2):\n    c = 1\nd = 2\n");
        assert!(t.contains(&Tok::Indent));
        assert!(t.contains(&Tok::Dedent));
        assert_eq!(t.last(), Some(&Tok::Eof));
    }

    #[test]
    fn newlines_inside_brackets_are_joined() {
        let t = toks("x = Range(1,\n   2)\n");
        assert_eq!(t.iter().filter(|t| **t == Tok::Newline).count(), 1);
        assert!(!t.contains(&Tok::Indent));
    }

    #[test]
    fn trailing_comma_continues_line() {
        let t = toks("ego = Car on road,\n    facing 0.5\nx = 1\n");
        assert!(!t.contains(&Tok::Indent));
        assert_eq!(t.iter().filter(|t| **t == Tok::Newline).count(), 2);
    }

    #[test]
    fn numbers_and_operators() {
        assert_eq!(
            toks("1.5e-3 <= .5"),
            vec![Tok::Number(1.5e-3), Tok::Le, Tok::Number(0.5), Tok::Newline, Tok::Eof]
        );
    }

    #[test]
    fn bad_dedent_is_reported() {
        let err = tokenize("for i in range(2):\n    c = 1\n  d = 2\n").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 3, .. }));
    }
}
