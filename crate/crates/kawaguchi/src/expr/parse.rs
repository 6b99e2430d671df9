//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := atom ['^' integer]
//! atom   := number | name | 'x' integer | 'd[' int (',' int)* ']'
//!         | 'sqrt(' expr ')' | 'abs(' expr ')' | '(' expr ')' | '-' atom
//! ```
//!
//! Names resolve to coordinate aliases first, then declared parameters; `x` followed
//! by digits is always the coordinate symbol. Plücker tuples must be written in
//! strictly increasing order — `d[1,0]` is a syntax error, not `-d[0,1]`.

use std::sync::Arc;

use super::{Ast, Expression};
use crate::multivector::{lex_rank, Dims};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("parse error at {line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// Symbols available while parsing: dimensions, parameter names and optional
/// human-readable coordinate aliases.
#[derive(Clone, Debug)]
pub struct ParseContext {
    pub dims: Dims,
    pub params: Vec<String>,
    pub coord_names: Vec<String>,
}

impl ParseContext {
    pub fn new(dims: Dims) -> Self {
        ParseContext {
            dims,
            params: Vec::new(),
            coord_names: Vec::new(),
        }
    }

    pub fn with_params<S: Into<String>>(mut self, params: impl IntoIterator<Item = S>) -> Self {
        self.params = params.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_coord_names<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.coord_names = names.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

type Spanned = (Tok, usize, usize);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_whitespace() {
                self.bump();
                continue;
            }
            let (line, col) = (self.line, self.col);
            let tok = match c {
                b'+' => {
                    self.bump();
                    Tok::Plus
                }
                b'-' => {
                    self.bump();
                    Tok::Minus
                }
                b'*' => {
                    self.bump();
                    Tok::Star
                }
                b'/' => {
                    self.bump();
                    Tok::Slash
                }
                b'^' => {
                    self.bump();
                    Tok::Caret
                }
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'[' => {
                    self.bump();
                    Tok::LBracket
                }
                b']' => {
                    self.bump();
                    Tok::RBracket
                }
                b',' => {
                    self.bump();
                    Tok::Comma
                }
                b'0'..=b'9' | b'.' => self.number()?,
                c if c.is_ascii_alphabetic() || c == b'_' => self.name(),
                other => return Err(self.error(format!("unexpected character '{}'", other as char))),
            };
            out.push((tok, line, col));
        }
        Ok(out)
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.bump();
        }
        // exponent part
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let save = (self.pos, self.line, self.col);
            self.bump();
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                self.bump();
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.bump();
                }
            } else {
                // not an exponent after all (e.g. a name follows); rewind
                (self.pos, self.line, self.col) = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Tok::Num)
            .map_err(|_| self.error(format!("malformed number '{text}'")))
    }

    fn name(&mut self) -> Tok {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.bump();
        }
        Tok::Name(std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string())
    }
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    ctx: &'a ParseContext,
}

impl<'a> Parser<'a> {
    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or_else(|| {
                self.toks
                    .last()
                    .map(|(_, l, c)| (*l, *c + 1))
                    .unwrap_or((1, 1))
            })
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            Some(t) => Err(self.error(format!("expected {what}, found {t:?}"))),
            None => Err(self.error(format!("expected {what}, found end of input"))),
        }
    }

    fn expr(&mut self) -> Result<Arc<Ast>, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = Arc::new(Ast::Add(acc, rhs));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = Arc::new(Ast::Sub(acc, rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Arc<Ast>, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = Arc::new(Ast::Mul(acc, rhs));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = Arc::new(Ast::Div(acc, rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Arc<Ast>, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let neg = if self.peek() == Some(&Tok::Minus) {
                self.pos += 1;
                true
            } else {
                false
            };
            match self.next() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                    let mut k = v as i32;
                    if neg {
                        k = -k;
                    }
                    Ok(Arc::new(Ast::Pow(base, k)))
                }
                _ => Err(self.error("exponent must be an integer constant")),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Arc<Ast>, ParseError> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Arc::new(Ast::Const(v))),
            Some(Tok::Minus) => {
                let inner = self.atom()?;
                Ok(match &*inner {
                    Ast::Const(c) => Arc::new(Ast::Const(-c)),
                    _ => Arc::new(Ast::Neg(inner)),
                })
            }
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Some(Tok::Name(name)) => self.name_atom(name),
            Some(t) => Err(self.error(format!("unexpected token {t:?}"))),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn name_atom(&mut self, name: String) -> Result<Arc<Ast>, ParseError> {
        if name == "d" && self.peek() == Some(&Tok::LBracket) {
            return self.plucker_atom();
        }
        if (name == "sqrt" || name == "abs") && self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(Arc::new(if name == "sqrt" {
                Ast::Sqrt(e)
            } else {
                Ast::Abs(e)
            }));
        }
        // x<digits> is a coordinate symbol
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let mu: usize = rest
                    .parse()
                    .map_err(|_| self.error(format!("bad coordinate index in '{name}'")))?;
                if mu >= self.ctx.dims.coord_count {
                    return Err(self.error(format!(
                        "coordinate x{mu} out of range (max x{})",
                        self.ctx.dims.coord_count - 1
                    )));
                }
                return Ok(Arc::new(Ast::Coord(mu)));
            }
        }
        if let Some(mu) = self.ctx.coord_names.iter().position(|n| *n == name) {
            return Ok(Arc::new(Ast::Coord(mu)));
        }
        if let Some(slot) = self.ctx.params.iter().position(|n| *n == name) {
            return Ok(Arc::new(Ast::Param(slot)));
        }
        Err(self.error(format!("unknown symbol '{name}'")))
    }

    fn plucker_atom(&mut self) -> Result<Arc<Ast>, ParseError> {
        self.expect(Tok::LBracket, "'['")?;
        let mut indices = Vec::new();
        loop {
            match self.next() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && v >= 0.0 => {
                    indices.push(v as usize);
                }
                _ => return Err(self.error("expected a non-negative integer index")),
            }
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RBracket) => break,
                _ => return Err(self.error("expected ',' or ']' in index tuple")),
            }
        }
        let dims = self.ctx.dims;
        if indices.len() != dims.degree {
            return Err(self.error(format!(
                "index tuple has {} entries, expected {}",
                indices.len(),
                dims.degree
            )));
        }
        if let Some(&max) = indices.iter().max() {
            if max >= dims.coord_count {
                return Err(self.error(format!(
                    "index {max} out of range (max {})",
                    dims.coord_count - 1
                )));
            }
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(self.error("indices must be strictly increasing"));
        }
        Ok(Arc::new(Ast::Plucker(lex_rank(dims.coord_count, &indices))))
    }
}

pub(super) fn parse(text: &str, ctx: &ParseContext) -> Result<Expression, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    if toks.is_empty() {
        return Err(ParseError {
            line: 1,
            col: 1,
            message: "empty expression".into(),
        });
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        ctx,
    };
    let ast = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return Err(parser.error("trailing input after expression"));
    }
    Ok(Expression::from_ast(
        ctx.dims,
        Arc::from(ctx.params.clone()),
        ast,
    ))
}
