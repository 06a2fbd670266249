//! Recursive-descent parser for the expression language.
//!
//! Grammar (whitespace insignificant between tokens):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := '-' factor | power
//! power   := primary ('^' factor)?          // right-associative
//! primary := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
//! ```
//!
//! `NUMBER` is a decimal literal with optional fraction and exponent.
//! An `IDENT` followed by `(` must be one of the built-in function names;
//! any other identifier must already be registered in the [`VarTable`].
//! Errors carry the byte offset of the offending token.

use crate::symexpr::expr::{Expr, UnaryFn};
use crate::symexpr::table::VarTable;
use crate::symexpr::SymError;

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    table: &'a VarTable,
}

/// Parse `src` into an [`Expr`] over the variables of `table`.
///
/// # Errors
///
/// [`SymError::Parse`] on malformed syntax, [`SymError::UnknownIdentifier`]
/// when an identifier is not registered in `table`. Both carry byte offsets
/// into `src`.
pub fn parse(src: &str, table: &VarTable) -> Result<Expr, SymError> {
    let mut p = Parser {
        src,
        bytes: src.as_bytes(),
        pos: 0,
        table,
    };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> SymError {
        SymError::Parse {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Consume `c` if it is the next byte; returns whether it was.
    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, SymError> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.term()?;
                acc = Expr::add(&acc, &rhs);
            } else if self.eat(b'-') {
                let rhs = self.term()?;
                acc = Expr::sub(&acc, &rhs);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SymError> {
        let mut acc = self.factor()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.factor()?;
                acc = Expr::mul(&acc, &rhs);
            } else if self.eat(b'/') {
                let rhs = self.factor()?;
                acc = Expr::div(&acc, &rhs);
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, SymError> {
        if self.eat(b'-') {
            let inner = self.factor()?;
            return Ok(Expr::neg(&inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SymError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            // Right-associative: exponent is a factor, so `x^-2` and
            // `x^y^z = x^(y^z)` parse as expected.
            let exp = self.factor()?;
            return Ok(Expr::pow(&base, &exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, SymError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.err("expected a number, identifier, or `(`")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr, SymError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // `2e` / `2e+` with no digits: the `e` belongs to what follows.
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text.parse().map_err(|_| SymError::Parse {
            offset: start,
            message: format!("malformed number `{text}`"),
        })?;
        self.skip_ws();
        Ok(Expr::constant(value))
    }

    fn identifier(&mut self) -> Result<Expr, SymError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        self.skip_ws();
        if self.peek() == Some(b'(') {
            let f = UnaryFn::from_name(name).ok_or_else(|| SymError::Parse {
                offset: start,
                message: format!("unknown function `{name}`"),
            })?;
            self.pos += 1;
            self.skip_ws();
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.err("expected `)` closing function argument"));
            }
            return Ok(Expr::func(f, &arg));
        }
        match self.table.lookup(name) {
            Some(id) => Ok(Expr::var(id)),
            None => Err(SymError::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            }),
        }
    }
}
