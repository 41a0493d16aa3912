//! Arithmetic expression language for the anisotropy weight phi(u): the
//! variables u1, u2, u3, operators + - * / ^, parentheses and decimal
//! literals. Parsed once, evaluated at arbitrary directions.

use crate::error::{Error, Result};
use crate::flow::Weight;
use crate::grid::Grid;

#[derive(Debug, Clone)]
enum Expr {
    Num(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Integer exponents are dispatched to powi so negative bases work.
    PowI(Box<Expr>, i32),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

impl Expr {
    fn eval(&self, u: [f64; 3]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => u[*i],
            Expr::Add(a, b) => a.eval(u) + b.eval(u),
            Expr::Sub(a, b) => a.eval(u) - b.eval(u),
            Expr::Mul(a, b) => a.eval(u) * b.eval(u),
            Expr::Div(a, b) => a.eval(u) / b.eval(u),
            Expr::PowI(a, k) => a.eval(u).powi(*k),
            Expr::Pow(a, b) => a.eval(u).powf(b.eval(u)),
            Expr::Neg(a) => -a.eval(u),
        }
    }
}

/// A parsed, reusable phi expression.
#[derive(Debug, Clone)]
pub struct PhiExpr {
    ast: Expr,
    pub source: String,
}

impl Weight for PhiExpr {
    fn eval(&self, u: [f64; 3]) -> f64 {
        self.ast.eval(u)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::PhiParse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut node = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    node = Expr::Add(Box::new(node), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    node = Expr::Sub(Box::new(node), Box::new(self.term()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut node = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    node = Expr::Mul(Box::new(node), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    node = Expr::Div(Box::new(node), Box::new(self.factor()?));
                }
                _ => return Ok(node),
            }
        }
    }

    // Unary minus binds looser than '^', so -x^2 means -(x^2).
    fn factor(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // Right-associative; the exponent may carry a sign.
            let exp = self.factor()?;
            if let Expr::Num(v) = exp {
                if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 {
                    return Ok(Expr::PowI(Box::new(base), v as i32));
                }
            }
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'u') => {
                self.pos += 1;
                match self.src.get(self.pos) {
                    Some(c @ b'1'..=b'3') => {
                        self.pos += 1;
                        Ok(Expr::Var((c - b'1') as usize))
                    }
                    _ => self.err("expected variable u1, u2 or u3"),
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self
                    .src
                    .get(self.pos)
                    .is_some_and(|c| c.is_ascii_digit() || *c == b'.')
                {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match text.parse::<f64>() {
                    Ok(v) => Ok(Expr::Num(v)),
                    Err(_) => {
                        self.pos = start;
                        self.err(format!("bad numeric literal '{text}'"))
                    }
                }
            }
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
            None => self.err("unexpected end of expression"),
        }
    }
}

pub fn parse_phi(spec: &str) -> Result<PhiExpr> {
    let mut p = Parser {
        src: spec.as_bytes(),
        pos: 0,
    };
    let ast = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(PhiExpr {
        ast,
        source: spec.to_string(),
    })
}

/// Grid-level facts about a weight: minimum value and evenness defect.
pub struct PhiMeta {
    pub min: f64,
    pub even_defect: f64,
}

/// Validate positivity on the grid and measure evenness; fail on the
/// evenness gate only when the caller requires it.
pub fn validate_phi(phi: &PhiExpr, grid: &Grid, require_even: bool) -> Result<PhiMeta> {
    let vals = phi.sample(grid);
    let mut min = f64::INFINITY;
    for (k, &v) in vals.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(k));
        }
        min = min.min(v);
    }
    if !(min > 0.0) {
        return Err(Error::NonPositivePhi(min));
    }
    let even_defect = (0..grid.len())
        .map(|k| (vals[k] - vals[grid.antipode_index(k)]).abs())
        .fold(0.0, f64::max);
    if require_even && even_defect >= 1e-12 {
        return Err(Error::EvennessViolation(even_defect));
    }
    Ok(PhiMeta { min, even_defect })
}
