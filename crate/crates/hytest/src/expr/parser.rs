//! Recursive-descent parser for the expression grammar.
//!
//! Identifiers are `[A-Za-z_][A-Za-z0-9_]*`, literals are decimal with an
//! optional exponent, and the operators are `+ - * / ^ < <= > >= == != && || !`
//! plus function calls and parentheses. Matlab-style `~=`/`~` are normalized to
//! `!=`/`!` while lexing, and single `&`/`|` are accepted for `&&`/`||`.

use super::{BinOp, Expr, UnaryOp};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("syntax error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError {
            position,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    True,
    False,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    And,
    Or,
    Not,
    LParen,
    RParen,
    Comma,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn next_token(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let b = match self.peek_byte() {
            None => return Ok((Tok::Eof, start)),
            Some(b) => b,
        };
        let tok = match b {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'<' => {
                self.pos += 1;
                if self.peek_byte() == Some(b'=') {
                    self.pos += 1;
                    Tok::Le
                } else {
                    Tok::Lt
                }
            }
            b'>' => {
                self.pos += 1;
                if self.peek_byte() == Some(b'=') {
                    self.pos += 1;
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            b'=' => {
                self.pos += 1;
                if self.peek_byte() == Some(b'=') {
                    self.pos += 1;
                    Tok::EqEq
                } else {
                    return Err(ParseError::new(start, "single '=' is not an operator; use '=='"));
                }
            }
            b'!' => {
                self.pos += 1;
                if self.peek_byte() == Some(b'=') {
                    self.pos += 1;
                    Tok::Ne
                } else {
                    Tok::Not
                }
            }
            // Matlab notation: `~=` and `~`.
            b'~' => {
                self.pos += 1;
                if self.peek_byte() == Some(b'=') {
                    self.pos += 1;
                    Tok::Ne
                } else {
                    Tok::Not
                }
            }
            b'&' => {
                self.pos += 1;
                if self.peek_byte() == Some(b'&') {
                    self.pos += 1;
                }
                Tok::And
            }
            b'|' => {
                self.pos += 1;
                if self.peek_byte() == Some(b'|') {
                    self.pos += 1;
                }
                Tok::Or
            }
            b'0'..=b'9' | b'.' => return self.lex_number(start),
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                while self
                    .peek_byte()
                    .map(|c| c.is_ascii_alphanumeric() || c == b'_')
                    .unwrap_or(false)
                {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match word {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word.to_string()),
                }
            }
            other => {
                return Err(ParseError::new(
                    start,
                    format!("unexpected character {:?}", other as char),
                ))
            }
        };
        Ok((tok, start))
    }

    fn lex_number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let mut saw_digit = false;
        while self.peek_byte().map(|c| c.is_ascii_digit()).unwrap_or(false) {
            saw_digit = true;
            self.pos += 1;
        }
        if self.peek_byte() == Some(b'.') {
            self.pos += 1;
            while self.peek_byte().map(|c| c.is_ascii_digit()).unwrap_or(false) {
                saw_digit = true;
                self.pos += 1;
            }
        }
        if !saw_digit {
            return Err(ParseError::new(start, "malformed number"));
        }
        if matches!(self.peek_byte(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek_byte(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.peek_byte().map(|c| c.is_ascii_digit()).unwrap_or(false) {
                while self.peek_byte().map(|c| c.is_ascii_digit()).unwrap_or(false) {
                    self.pos += 1;
                }
            } else {
                // `1e` followed by a non-digit: the `e` belongs to an identifier.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text
            .parse()
            .map_err(|_| ParseError::new(start, format!("malformed number {text:?}")))?;
        Ok((Tok::Num(value), start))
    }
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.idx].0
    }

    fn pos(&self) -> usize {
        self.tokens[self.idx].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.idx].0.clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::new(self.pos(), format!("expected {what}")))
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.not_expr()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Not {
            self.bump();
            let inner = self.not_expr()?;
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(inner)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.add_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Gt => BinOp::Gt,
                Tok::Ge => BinOp::Ge,
                Tok::EqEq => BinOp::Eq,
                Tok::Ne => BinOp::Ne,
                _ => break,
            };
            self.bump();
            let rhs = self.add_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary_expr()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.pow_expr()
    }

    fn pow_expr(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            // Right-associative; the exponent admits a unary sign.
            let exponent = self.unary_expr()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::True => Ok(Expr::Bool(true)),
            Tok::False => Ok(Expr::Bool(false)),
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.or_expr()?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen, "')' closing argument list")?;
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::LParen => {
                let inner = self.or_expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(Expr::Paren(Box::new(inner)))
            }
            other => Err(ParseError::new(pos, format!("unexpected token {other:?}"))),
        }
    }
}

/// Parses `text` into an [`Expr`]. Unknown identifiers are accepted here and
/// rejected later during model validation.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    loop {
        let (tok, pos) = lexer.next_token()?;
        let done = tok == Tok::Eof;
        tokens.push((tok, pos));
        if done {
            break;
        }
    }
    let mut parser = Parser { tokens, idx: 0 };
    let expr = parser.or_expr()?;
    if *parser.peek() != Tok::Eof {
        return Err(ParseError::new(parser.pos(), "unexpected trailing input"));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::BinOp;

    #[test]
    fn pendulum_invariant_shape() {
        let e = parse_expr("abs(z(th,thd)) < u_max").unwrap();
        match &e {
            Expr::Binary(BinOp::Lt, lhs, rhs) => {
                match lhs.as_ref() {
                    Expr::Call(name, args) => {
                        assert_eq!(name, "abs");
                        assert!(matches!(&args[0], Expr::Call(z, zargs)
                            if z == "z" && zargs.len() == 2));
                    }
                    other => panic!("lhs is {other:?}"),
                }
                assert_eq!(rhs.as_ref(), &Expr::var("u_max"));
            }
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn literal_zero() {
        assert_eq!(parse_expr("0").unwrap(), Expr::Num(0.0));
    }

    #[test]
    fn unacceptable_condition_shape() {
        let e = parse_expr("abs(x) > 3").unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinOp::Gt,
                Expr::Call("abs".into(), vec![Expr::var("x")]),
                Expr::Num(3.0)
            )
        );
    }

    #[test]
    fn matlab_notation_normalizes() {
        assert_eq!(parse_expr("x ~= 0").unwrap(), parse_expr("x != 0").unwrap());
        assert_eq!(parse_expr("~(x > 1)").unwrap(), parse_expr("!(x > 1)").unwrap());
        assert_eq!(
            parse_expr("x > 1 & y < 2 | z == 0").unwrap(),
            parse_expr("x > 1 && y < 2 || z == 0").unwrap()
        );
    }

    #[test]
    fn not_binds_below_comparison() {
        // `!a < b` negates the whole comparison under the documented precedence.
        assert_eq!(
            parse_expr("!abs(x) <= 3").unwrap(),
            Expr::not(parse_expr("abs(x) <= 3").unwrap())
        );
    }

    #[test]
    fn numbers_with_exponents() {
        assert_eq!(parse_expr("1.5e-3").unwrap(), Expr::Num(1.5e-3));
        assert_eq!(parse_expr("2E4").unwrap(), Expr::Num(2e4));
        assert_eq!(parse_expr(".5").unwrap(), Expr::Num(0.5));
    }

    #[test]
    fn errors_carry_position() {
        let err = parse_expr("x + ").unwrap_err();
        assert_eq!(err.position, 4);
        let err = parse_expr("x @ y").unwrap_err();
        assert_eq!(err.position, 2);
        let err = parse_expr("x = 2").unwrap_err();
        assert!(err.message.contains("=="));
        assert!(parse_expr("(x > 1").is_err());
        assert!(parse_expr("x > 1)").is_err());
    }

    #[test]
    fn unknown_identifiers_parse_fine() {
        assert!(parse_expr("mystery(a, b) + unknown_var").is_ok());
    }
}
