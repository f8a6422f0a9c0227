//! Arithmetic expressions over `x`, `y`, `t` for coefficients and data.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | 'x' | 'y' | 't' | 'pi'
//!          | ('sin' | 'cos' | 'exp') '(' expr ')' | '(' expr ')'
//! ```
//! `×` and `−` are accepted as aliases of `*` and `-`.

use crate::error::{Error, Result};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    X,
    Y,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
}

/// A parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            // exponent part
            if i < chars.len() && (chars[i].1 == 'e' || chars[i].1 == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j].1 == '+' || chars[j].1 == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().map(|(_, c)| c).collect();
            let v: f64 = text.parse().map_err(|_| Error::Expression {
                position: pos,
                message: format!("malformed number '{text}'"),
            })?;
            out.push((pos, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().map(|(_, c)| c).collect();
            out.push((pos, Tok::Ident(text)));
        } else {
            let sym = match c {
                '×' => '*',
                '−' => '-',
                '+' | '-' | '*' | '/' | '(' | ')' => c,
                _ => {
                    return Err(Error::Expression {
                        position: pos,
                        message: format!("unexpected character '{c}'"),
                    })
                }
            };
            out.push((pos, Tok::Sym(sym)));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Expression {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym('+')) => Op::Add,
                Some(Tok::Sym('-')) => Op::Sub,
                _ => return Ok(lhs),
            };
            self.at += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym('*')) => Op::Mul,
                Some(Tok::Sym('/')) => Op::Div,
                _ => return Ok(lhs),
            };
            self.at += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek() == Some(&Tok::Sym('-')) {
            self.at += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Node> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.at += 1;
                Ok(Node::Num(v))
            }
            Some(Tok::Sym('(')) => {
                self.at += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                let node = match name.as_str() {
                    "x" => Node::Var(Var::X),
                    "y" => Node::Var(Var::Y),
                    "t" => Node::Var(Var::T),
                    "pi" => Node::Num(std::f64::consts::PI),
                    "sin" | "cos" | "exp" => {
                        let f = match name.as_str() {
                            "sin" => Func::Sin,
                            "cos" => Func::Cos,
                            _ => Func::Exp,
                        };
                        self.at += 1;
                        self.expect('(')?;
                        let arg = self.expr()?;
                        self.expect(')')?;
                        return Ok(Node::Call(f, Box::new(arg)));
                    }
                    other => return self.err(format!("unknown identifier '{other}'")),
                };
                self.at += 1;
                Ok(node)
            }
            Some(Tok::Sym(c)) => self.err(format!("unexpected '{c}'")),
            None => self.err("unexpected end of expression"),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let toks = tokenize(src)?;
        let mut p = Parser {
            toks,
            at: 0,
            end: src.len(),
        };
        let root = p.expr()?;
        if p.at != p.toks.len() {
            return p.err("trailing input");
        }
        Ok(Self {
            source: src.to_string(),
            root,
        })
    }

    pub fn constant(v: f64) -> Self {
        Self {
            source: format!("{v}"),
            root: Node::Num(v),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when the expression does not mention `t`.
    pub fn is_time_independent(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Num(_) => true,
                Node::Var(v) => *v != Var::T,
                Node::Neg(a) | Node::Call(_, a) => walk(a),
                Node::Bin(_, a, b) => walk(a) && walk(b),
            }
        }
        walk(&self.root)
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        fn go(n: &Node, v: [f64; 3]) -> f64 {
            match n {
                Node::Num(c) => *c,
                Node::Var(Var::X) => v[0],
                Node::Var(Var::Y) => v[1],
                Node::Var(Var::T) => v[2],
                Node::Neg(a) => -go(a, v),
                Node::Bin(op, a, b) => {
                    let (a, b) = (go(a, v), go(b, v));
                    match op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        Op::Div => a / b,
                    }
                }
                Node::Call(f, a) => {
                    let a = go(a, v);
                    match f {
                        Func::Sin => a.sin(),
                        Func::Cos => a.cos(),
                        Func::Exp => a.exp(),
                    }
                }
            }
        }
        go(&self.root, [x, y, t])
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn precedence_and_functions() {
        let e = Expr::parse("1 + 2*3 - -4/2").unwrap();
        assert_eq!(e.eval(0.0, 0.0, 0.0), 9.0);
        let e = Expr::parse("sin(pi*x) * exp(-t) + cos(0)").unwrap();
        assert!((e.eval(0.5, 0.0, 0.0) - 2.0).abs() < 1e-15);
        assert!(!e.is_time_independent());
        assert!(Expr::parse("(x + y) × 2 − 1").unwrap().is_time_independent());
        assert_eq!(Expr::parse("2.5e-1").unwrap().eval(0.0, 0.0, 0.0), 0.25);
    }

    #[test]
    fn errors_carry_positions() {
        let cases = [
            ("1 +", 3),
            ("sin x", 4),
            ("2 * z", 4),
            ("(1", 2),
            ("1 $ 2", 2),
            ("1 2", 2),
        ];
        for (src, pos) in cases {
            match Expr::parse(src) {
                Err(Error::Expression { position, .. }) => assert_eq!(position, pos, "{src}"),
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn linear_forms_evaluate(a in -100.0f64..100.0, b in -100.0f64..100.0, x in 0.0f64..1.0) {
            let e = Expr::parse(&format!("({a:e})*x + ({b:e})")).unwrap();
            let v = e.eval(x, 0.0, 0.0);
            prop_assert!((v - (a * x + b)).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
        }
    }
}
