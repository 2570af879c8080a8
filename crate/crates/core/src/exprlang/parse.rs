use std::fmt;

use thiserror::Error;

use super::{BinOp, Expr, Func, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("parse error at byte {offset}: expected {}, found {found}", expected.join(" or "))]
    Unexpected {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("`{func}` takes {expected} argument(s), got {found} (byte {offset})")]
    ArityMismatch {
        offset: usize,
        func: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid number literal `{text}` at byte {offset}")]
    BadNumber { offset: usize, text: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Unexpected { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::ArityMismatch { offset, .. }
            | ParseError::BadNumber { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Num(&'a str),
    Ident(&'a str),
    Op(char),
    Eof,
}

impl fmt::Display for Tok<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(s) | Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Op(c) => write!(f, "`{c}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    /// Returns the next token and its starting byte offset.
    fn next_token(&mut self) -> Result<(Tok<'a>, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let Some(&c) = bytes.get(start) else {
            return Ok((Tok::Eof, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && matches!(bytes[end], b'e' | b'E') {
                let mut exp = end + 1;
                if exp < bytes.len() && matches!(bytes[exp], b'+' | b'-') {
                    exp += 1;
                }
                if exp < bytes.len() && bytes[exp].is_ascii_digit() {
                    while exp < bytes.len() && bytes[exp].is_ascii_digit() {
                        exp += 1;
                    }
                    end = exp;
                }
            }
            self.pos = end;
            return Ok((Tok::Num(&self.src[start..end]), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Tok::Ident(&self.src[start..end]), start));
        }
        let ch = self.src[start..].chars().next().unwrap_or('\0');
        self.pos += ch.len_utf8();
        Ok((Tok::Op(ch), start))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok<'a>,
    at: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let (tok, at) = lexer.next_token()?;
        Ok(Parser { lexer, tok, at })
    }

    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, at) = self.lexer.next_token()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn unexpected(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError::Unexpected {
            offset: self.at,
            expected,
            found: self.tok.to_string(),
        }
    }

    fn eat_op(&mut self, c: char) -> Result<bool, ParseError> {
        if self.tok == Tok::Op(c) {
            self.bump()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op('-')? {
            Ok(Expr::negate(self.power()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat_op('^')? {
            let exponent = self.power()?;
            Ok(Expr::binary(BinOp::Pow, base, exponent))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.at;
        match self.tok.clone() {
            Tok::Num(text) => {
                let value: f64 = text.parse().map_err(|_| ParseError::BadNumber {
                    offset: at,
                    text: text.to_string(),
                })?;
                self.bump()?;
                Ok(Expr::Num(value))
            }
            Tok::Ident(name) => {
                self.bump()?;
                if let Some(func) = Func::from_name(name) {
                    if !self.eat_op('(')? {
                        return Err(self.unexpected(vec!["`(`"]));
                    }
                    let mut args = vec![self.expr()?];
                    while self.eat_op(',')? {
                        args.push(self.expr()?);
                    }
                    if !self.eat_op(')')? {
                        return Err(self.unexpected(vec!["`,`", "`)`"]));
                    }
                    if args.len() != func.arity() {
                        return Err(ParseError::ArityMismatch {
                            offset: at,
                            func: func.name(),
                            expected: func.arity(),
                            found: args.len(),
                        });
                    }
                    Ok(Expr::call(func, args))
                } else if let Some(var) = Var::from_name(name) {
                    Ok(Expr::Var(var))
                } else {
                    Err(ParseError::UnknownIdentifier {
                        offset: at,
                        name: name.to_string(),
                    })
                }
            }
            Tok::Op('(') => {
                self.bump()?;
                let inner = self.expr()?;
                if !self.eat_op(')')? {
                    return Err(self.unexpected(vec!["`)`"]));
                }
                Ok(inner)
            }
            _ => Err(self.unexpected(vec!["number", "identifier", "`(`"])),
        }
    }
}

/// Parses a full expression; trailing input is an error.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser::new(text)?;
    let expr = parser.expr()?;
    if parser.tok != Tok::Eof {
        return Err(parser.unexpected(vec!["operator", "end of input"]));
    }
    Ok(expr)
}
