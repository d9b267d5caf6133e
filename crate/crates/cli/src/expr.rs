//! Arithmetic expressions in `x`, `y`, `t` for load data.
//!
//! Grammar: numbers, the variables `x y t`, the constant `pi`, `+ - * / ^`,
//! parentheses and the functions `sin`, `cos`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("expression `{source_text}`: {msg} at offset {pos}")]
pub struct ExprError {
    pub source_text: String,
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Y,
    T,
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl Node {
    fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            Node::Num(c) => *c,
            Node::X => x,
            Node::Y => y,
            Node::T => t,
            Node::Neg(a) => -a.eval(x, y, t),
            Node::Sin(a) => a.eval(x, y, t).sin(),
            Node::Cos(a) => a.eval(x, y, t).cos(),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, y, t), b.eval(x, y, t));
                match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    Op::Pow => a.powf(b),
                }
            }
        }
    }
}

/// A parsed expression; serializes back to its source text.
#[derive(Clone)]
pub struct Expr {
    text: String,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.text)
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: text,
            bytes: text.as_bytes(),
            pos: 0,
        };
        let root = p.sum()?;
        p.skip_ws();
        if p.pos < p.bytes.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self {
            text: text.to_string(),
            root,
        })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            text: format!("{c:?}"),
            root: Node::Num(c),
        }
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        self.root.eval(x, y, t)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExprRepr {
    Num(f64),
    Text(String),
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ExprRepr::deserialize(d)? {
            ExprRepr::Num(c) => Ok(Expr::constant(c)),
            ExprRepr::Text(s) => Expr::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> ExprError {
        ExprError {
            source_text: self.src.to_string(),
            pos: self.pos,
            msg: msg.to_string(),
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.eat(b'+') {
                Op::Add
            } else if self.eat(b'-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.product()?));
        }
    }

    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat(b'*') {
                Op::Mul
            } else if self.eat(b'/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    // right associative, binds tighter than unary minus on its left
    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                match name {
                    "x" => Ok(Node::X),
                    "y" => Ok(Node::Y),
                    "t" => Ok(Node::T),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "sin" | "cos" => {
                        if !self.eat(b'(') {
                            return Err(self.error("expected `(` after function name"));
                        }
                        let arg = Box::new(self.sum()?);
                        if !self.eat(b')') {
                            return Err(self.error("expected `)`"));
                        }
                        Ok(if name == "sin" { Node::Sin(arg) } else { Node::Cos(arg) })
                    }
                    _ => {
                        self.pos = start;
                        Err(self.error(&format!("unknown identifier `{name}`")))
                    }
                }
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.bytes.len() && p.bytes[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.bytes.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.bytes.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                digits(self);
            } else {
                self.pos = mark;
            }
        }
        self.src[start..self.pos]
            .parse()
            .map(Node::Num)
            .map_err(|_| {
                self.pos = start;
                self.error("malformed number")
            })
    }
}
