//! Whitelisted arithmetic expressions over `s` and `u = 1 - s`, used for
//! user-supplied binary densities.
//!
//! Grammar: numbers, the variables `s` and `u`, the constants `pi` and `e`,
//! the operators `+ - * / ^`, parentheses, and the functions `sqrt`, `exp`,
//! `log`, `abs`, `sin`, `cos`, `tanh`, `atanh`, `pow(a, b)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    S,
    U,
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sqrt,
    Exp,
    Log,
    Abs,
    Sin,
    Cos,
    Tanh,
    Atanh,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sqrt" => (Func::Sqrt, 1),
            "exp" => (Func::Exp, 1),
            "log" | "ln" => (Func::Log, 1),
            "abs" => (Func::Abs, 1),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tanh" => (Func::Tanh, 1),
            "atanh" => (Func::Atanh, 1),
            "pow" => (Func::Pow, 2),
            _ => return None,
        })
    }
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
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
            let v = text.parse::<f64>().map_err(|_| Error::Config(format!("bad number '{text}' in expression")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            out.push(match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err(Error::Config(format!("character '{c}' not allowed in expression"))),
            });
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            other => Err(Error::Config(format!("expected {t:?}, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "s" => Ok(Node::S),
                "u" => Ok(Node::U),
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "e" => Ok(Node::Num(std::f64::consts::E)),
                _ => {
                    let (f, arity) =
                        Func::lookup(&name).ok_or_else(|| Error::Config(format!("identifier '{name}' not allowed")))?;
                    self.expect(Tok::LParen)?;
                    let mut args = vec![self.expr()?];
                    while let Some(Tok::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    if args.len() != arity {
                        return Err(Error::Config(format!("{name} takes {arity} argument(s)")));
                    }
                    Ok(Node::Call(f, args))
                }
            },
            other => Err(Error::Config(format!("unexpected token {other:?}"))),
        }
    }
}

fn eval(n: &Node, s: f64, u: f64) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::S => s,
        Node::U => u,
        Node::Neg(a) => -eval(a, s, u),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, s, u), eval(b, s, u));
            match op {
                '+' => x + y,
                '-' => x - y,
                '*' => x * y,
                '/' => x / y,
                _ => x.powf(y),
            }
        }
        Node::Call(f, args) => {
            let x = eval(&args[0], s, u);
            match f {
                Func::Sqrt => x.sqrt(),
                Func::Exp => x.exp(),
                Func::Log => x.ln(),
                Func::Abs => x.abs(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tanh => x.tanh(),
                Func::Atanh => x.atanh(),
                Func::Pow => x.powf(eval(&args[1], s, u)),
            }
        }
    }
}

impl Expr {
    /// Parses an expression, rejecting any identifier outside the whitelist.
    pub fn parse(src: &str) -> Result<Expr> {
        let toks = tokenize(src)?;
        if toks.is_empty() {
            return Err(Error::Config("empty expression".into()));
        }
        let mut p = Parser { toks, pos: 0 };
        let root = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(Error::Config(format!("trailing input in expression '{src}'")));
        }
        Ok(Expr { source: src.to_string(), root })
    }

    /// Evaluates at `(s, u)`; callers pass `u = 1 - s` computed accurately.
    pub fn eval(&self, s: f64, u: f64) -> f64 {
        eval(&self.root, s, u)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_power_density() {
        let e = Expr::parse("(s*(1-s))^(-3/2)").unwrap();
        let v = e.eval(0.75, 0.25);
        assert!((v - (0.1875f64).powf(-1.5)).abs() < 1e-12);
    }

    #[test]
    fn precedence_and_functions() {
        let e = Expr::parse("2 + 3*s^2 - sqrt(u) / pow(2, 1)").unwrap();
        let v = e.eval(2.0, 4.0);
        assert!((v - (2.0 + 12.0 - 1.0)).abs() < 1e-14);
        let e = Expr::parse("-s^2").unwrap();
        assert_eq!(e.eval(3.0, 0.0), -9.0);
    }

    #[test]
    fn rejects_unknown_identifiers() {
        assert!(Expr::parse("system(s)").is_err());
        assert!(Expr::parse("s + x").is_err());
        assert!(Expr::parse("s ;").is_err());
        assert!(Expr::parse("").is_err());
    }
}
