//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := '-' factor | power
//! power   := primary ('^' intexp)?
//! intexp  := '-'? digits
//! primary := number | ident | func '(' expr ')' | '(' expr ')'
//! func    := 'sin' | 'cos' | 'tan' | 'exp' | 'ln' | 'sqrt' | 'abs'
//! ```
//!
//! `^` is non-associative and its exponent must be an integer literal;
//! general powers are written through `exp`/`ln`. Every other identifier
//! must name a variable of the enclosing space.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use core::fmt;

use super::{Expr, VariableSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// Byte offset into the source text.
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedEnd,
    /// Found a token where another construct was required.
    Unexpected(String),
    UnknownIdentifier(String),
    BadNumber(String),
    NonIntegerExponent,
    MissingClosingParen,
    TooDeep,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::UnexpectedChar(c) => {
                write!(f, "unexpected character `{c}` at byte {}", self.offset)
            }
            ParseErrorKind::UnexpectedEnd => {
                write!(f, "unexpected end of expression at byte {}", self.offset)
            }
            ParseErrorKind::Unexpected(tok) => {
                write!(f, "unexpected `{tok}` at byte {}", self.offset)
            }
            ParseErrorKind::UnknownIdentifier(name) => {
                write!(f, "unknown identifier `{name}` at byte {}", self.offset)
            }
            ParseErrorKind::BadNumber(text) => {
                write!(f, "malformed number `{text}` at byte {}", self.offset)
            }
            ParseErrorKind::NonIntegerExponent => {
                write!(f, "exponent must be an integer literal at byte {}", self.offset)
            }
            ParseErrorKind::MissingClosingParen => {
                write!(f, "missing `)` at byte {}", self.offset)
            }
            ParseErrorKind::TooDeep => {
                write!(f, "expression too deeply nested at byte {}", self.offset)
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ParseError {}

const MAX_DEPTH: usize = 256;

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    space: &'a Arc<VariableSpace>,
    depth: usize,
}

pub fn parse(text: &str, space: &Arc<VariableSpace>) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: text,
        bytes: text.as_bytes(),
        pos: 0,
        space,
        depth: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(p.err_here(ParseErrorKind::Unexpected(p.peek_token_text())));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn err_here(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.pos,
            kind,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn peek_token_text(&self) -> String {
        let rest = &self.src[self.pos..];
        match rest.chars().next() {
            Some(c) => c.to_string(),
            None => "<end>".to_string(),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err_here(ParseErrorKind::TooDeep));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = lhs.add(&rhs);
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = lhs.sub(&rhs);
                }
                _ => break,
            }
        }
        self.leave();
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = lhs.mul(&rhs);
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = lhs.div(&rhs);
                }
                _ => break,
            }
        }
        self.leave();
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = if self.peek() == Some(b'-') {
            self.pos += 1;
            self.factor()?.neg()
        } else {
            self.power()?
        };
        self.leave();
        Ok(e)
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let n = self.int_exponent()?;
            return Ok(base.powi(n));
        }
        Ok(base)
    }

    fn int_exponent(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let mut negative = false;
        if self.bytes.get(self.pos) == Some(&b'-') {
            negative = true;
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit())
        {
            self.pos += 1;
        }
        if self.pos == digits_start {
            self.pos = start;
            return Err(self.err_here(ParseErrorKind::NonIntegerExponent));
        }
        // A fractional part means the exponent is not an integer.
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos = start;
            return Err(self.err_here(ParseErrorKind::NonIntegerExponent));
        }
        let text = &self.src[digits_start..self.pos];
        let mag: i32 = text.parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::BadNumber(text.to_string()),
        })?;
        Ok(if negative { -mag } else { mag })
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.err_here(ParseErrorKind::UnexpectedEnd)),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err_here(ParseErrorKind::MissingClosingParen));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b) if b.is_ascii_digit() || b == b'.' => self.number(),
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => self.identifier(),
            Some(b) => Err(self.err_here(ParseErrorKind::UnexpectedChar(b as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit() || *b == b'.')
        {
            self.pos += 1;
        }
        // exponent suffix: e or E, optional sign, digits
        if self
            .bytes
            .get(self.pos)
            .is_some_and(|b| *b == b'e' || *b == b'E')
        {
            let mark = self.pos;
            self.pos += 1;
            if self
                .bytes
                .get(self.pos)
                .is_some_and(|b| *b == b'+' || *b == b'-')
            {
                self.pos += 1;
            }
            if self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
                while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // not an exponent after all (e.g. `2*e1` would be caught
                // as an identifier elsewhere); rewind
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text.parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::BadNumber(text.to_string()),
        })?;
        Ok(Expr::constant(self.space, value))
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let is_func = matches!(name, "sin" | "cos" | "tan" | "exp" | "ln" | "sqrt" | "abs");
        if is_func && self.peek() == Some(b'(') {
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.err_here(ParseErrorKind::MissingClosingParen));
            }
            self.pos += 1;
            return Ok(match name {
                "sin" => arg.sin(),
                "cos" => arg.cos(),
                "tan" => arg.tan(),
                "exp" => arg.exp(),
                "ln" => arg.ln(),
                "sqrt" => arg.sqrt(),
                "abs" => arg.abs(),
                _ => unreachable!(),
            });
        }
        match self.space.lookup(name) {
            Some(id) => Ok(Expr::var(self.space, id)),
            None => Err(ParseError {
                offset: start,
                kind: ParseErrorKind::UnknownIdentifier(name.to_string()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::VariableSpace;
    use super::*;
    use alloc::vec;

    fn sp() -> Arc<VariableSpace> {
        VariableSpace::new(vec!["x1", "x2"], vec!["u1"], vec!["p1"]).unwrap()
    }

    #[test]
    fn precedence_and_unary() {
        let sp = sp();
        let e = Expr::parse("-x1^2", &sp).unwrap();
        // -(x1^2), not (-x1)^2
        assert_eq!(e.eval(&[2.0, 0.0, 0.0, 0.0]).unwrap(), -4.0);
        let e = Expr::parse("2+3*4", &sp).unwrap();
        assert_eq!(e.eval(&[0.0; 4]).unwrap(), 14.0);
        let e = Expr::parse("2*-3", &sp).unwrap();
        assert_eq!(e.eval(&[0.0; 4]).unwrap(), -6.0);
        let e = Expr::parse("1 - 2 - 3", &sp).unwrap();
        assert_eq!(e.eval(&[0.0; 4]).unwrap(), -4.0);
    }

    #[test]
    fn numbers() {
        let sp = sp();
        for (text, want) in [
            ("1.5e3", 1500.0),
            (".5", 0.5),
            ("2.", 2.0),
            ("1e-2", 0.01),
            ("3E+4", 30000.0),
        ] {
            let e = Expr::parse(text, &sp).unwrap();
            assert_eq!(e.eval(&[0.0; 4]).unwrap(), want, "{text}");
        }
    }

    #[test]
    fn error_offsets() {
        let sp = sp();
        let err = Expr::parse("x1 + $", &sp).unwrap_err();
        assert_eq!(err.offset, 5);
        assert!(matches!(err.kind, ParseErrorKind::UnexpectedChar('$')));

        let err = Expr::parse("x1 + bogus", &sp).unwrap_err();
        assert_eq!(err.offset, 5);
        assert_eq!(
            err.kind,
            ParseErrorKind::UnknownIdentifier("bogus".into())
        );

        let err = Expr::parse("x1^x2", &sp).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::NonIntegerExponent));

        let err = Expr::parse("x1^2.5", &sp).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::NonIntegerExponent));

        let err = Expr::parse("(x1", &sp).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MissingClosingParen));

        let err = Expr::parse("x1 x2", &sp).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Unexpected(_)));
    }

    #[test]
    fn chained_pow_rejected() {
        let sp = sp();
        assert!(Expr::parse("x1^2^3", &sp).is_err());
    }

    #[test]
    fn function_names_require_parens() {
        // `sin` without parentheses is just an identifier
        let sp = VariableSpace::new(vec!["sin"], Vec::<&str>::new(), vec![]).unwrap();
        let e = Expr::parse("sin + 1", &sp).unwrap();
        assert_eq!(e.eval(&[2.0]).unwrap(), 3.0);
    }

    #[test]
    fn negative_exponent() {
        let sp = sp();
        let e = Expr::parse("x1^-2", &sp).unwrap();
        assert_eq!(e.eval(&[2.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
    }
}
