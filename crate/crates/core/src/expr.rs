//! A small expression language for scalar functions of `(t, x1, …, xn)`.
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = atom [ "^" unary ] ;
//! atom    = number | "pi" | "t" | "x" digit { digit }
//!         | func "(" expr ")" | "(" expr ")" ;
//! func    = "sin" | "cos" | "exp" | "log" | "sqrt" | "tanh" ;
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    const ALL: [(&'static str, Func); 6] = [
        ("sin", Func::Sin),
        ("cos", Func::Cos),
        ("exp", Func::Exp),
        ("log", Func::Log),
        ("sqrt", Func::Sqrt),
        ("tanh", Func::Tanh),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, f)| *f == self).unwrap().0
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Tanh => v.tanh(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Time,
    /// Spatial coordinate `x{k}`, 1-based.
    Coord(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr::Num(c)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::Time => t,
            Expr::Coord(k) => x[k - 1],
            Expr::Neg(e) => -e.eval(t, x),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(t, x), b.eval(t, x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, e) => f.apply(e.eval(t, x)),
        }
    }

    /// Largest spatial coordinate index referenced (0 if none).
    pub fn max_coord(&self) -> usize {
        match self {
            Expr::Coord(k) => *k,
            Expr::Neg(e) | Expr::Call(_, e) => e.max_coord(),
            Expr::Binary(_, a, b) => a.max_coord().max(b.max_coord()),
            _ => 0,
        }
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses_time(),
            Expr::Binary(_, a, b) => a.uses_time() || b.uses_time(),
            _ => false,
        }
    }

    /// Sixth-order central difference of the expression along coordinate
    /// `axis` (0-based) at an arbitrary point, step [`OFFGRID_STEP`].
    pub fn d_dx(&self, t: f64, x: &[f64], axis: usize) -> f64 {
        if self.max_coord() <= axis {
            return 0.0;
        }
        let mut y = x.to_vec();
        central6(
            |s| {
                y[axis] = x[axis] + s;
                self.eval(t, &y)
            },
            OFFGRID_STEP,
        )
    }

    /// Sixth-order central difference in `t`.
    pub fn d_dt(&self, t: f64, x: &[f64]) -> f64 {
        if !self.uses_time() {
            return 0.0;
        }
        central6(|s| self.eval(t + s, x), OFFGRID_STEP)
    }

    /// True when the tree is a literal (no variables).
    pub fn is_constant(&self) -> bool {
        !self.uses_time() && self.max_coord() == 0
    }
}

/// Step used for off-grid differentiation of expressions.
pub const OFFGRID_STEP: f64 = 1e-2;

fn central6(mut f: impl FnMut(f64) -> f64, d: f64) -> f64 {
    let c = [(1.0, 45.0), (2.0, -9.0), (3.0, 1.0)];
    let mut acc = 0.0;
    for (k, w) in c {
        acc += w * (f(k * d) - f(-k * d));
    }
    acc / (60.0 * d)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Time => write!(f, "t"),
            Expr::Coord(k) => write!(f, "x{k}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

impl FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_expression(s)
    }
}

/// Parses `text`, accepting any coordinate `x{k}` with `k ≥ 1`.
pub fn parse_expression(text: &str) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        max_dim: usize::MAX,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.expected(&["operator", "end of input"]));
    }
    Ok(e)
}

/// Parses `text` for an `n`-dimensional chart: `x{k}` with `k > n` is unknown.
pub fn parse_expression_in(text: &str, n: usize) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        max_dim: n,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.expected(&["operator", "end of input"]));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    max_dim: usize,
}

const OPERAND: &[&str] = &["number", "identifier", "(", "-"];

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expected(&self, what: &[&str]) -> Error {
        Error::Parse {
            offset: self.pos,
            expected: what.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.close()?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            _ => Err(self.expected(OPERAND)),
        }
    }

    fn close(&mut self) -> Result<()> {
        if self.peek() == Some(b')') {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.expected(&[")"]))
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| Error::Parse {
                offset: start,
                expected: vec!["number".into()],
            })
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if let Some((_, f)) = Func::ALL.iter().find(|(s, _)| *s == name) {
            if self.peek() != Some(b'(') {
                return Err(self.expected(&["("]));
            }
            self.pos += 1;
            let arg = self.expr()?;
            self.close()?;
            return Ok(Expr::Call(*f, Box::new(arg)));
        }
        match name {
            "t" => return Ok(Expr::Time),
            "pi" => return Ok(Expr::Pi),
            _ => {}
        }
        if let Some(idx) = name.strip_prefix('x') {
            if let Ok(k) = idx.parse::<usize>() {
                if k >= 1 && k <= self.max_dim && !idx.starts_with('0') {
                    return Ok(Expr::Coord(k));
                }
            }
        }
        Err(Error::UnknownIdentifier {
            name: name.to_string(),
            offset: start,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn product_root() {
        let e = parse_expression("sin(x1)*exp(2*x2)").unwrap();
        assert!(matches!(e, Expr::Binary(BinOp::Mul, _, _)));
        let v = e.eval(0.0, &[0.5, 0.25]);
        assert!((v - 0.5f64.sin() * 0.5f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn incomplete_input() {
        match parse_expression("1 +") {
            Err(Error::Parse { offset, expected }) => {
                assert_eq!(offset, 3);
                assert!(expected.contains(&"number".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn evaluates_at_point() {
        let e = parse_expression("0.3*sin(x1)").unwrap();
        assert!((e.eval(0.0, &[PI / 2.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn precedence() {
        let e = parse_expression("-2^2").unwrap();
        assert_eq!(e.eval(0.0, &[]), -4.0);
        let e = parse_expression("2^3^2").unwrap();
        assert_eq!(e.eval(0.0, &[]), 512.0);
        let e = parse_expression("2^-1").unwrap();
        assert_eq!(e.eval(0.0, &[]), 0.5);
        let e = parse_expression("1 - 2 - 3 * 4 / 2").unwrap();
        assert_eq!(e.eval(0.0, &[]), -7.0);
        let e = parse_expression("1.5e1 + t*pi").unwrap();
        assert!((e.eval(2.0, &[]) - (15.0 + 2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn rejects_unknown() {
        assert!(matches!(
            parse_expression("y + 1"),
            Err(Error::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expression_in("x3", 2),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse_expression("x0"),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse_expression("sin x1"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_expression("(1"),
            Err(Error::Parse { offset: 2, .. })
        ));
        assert!(matches!(
            parse_expression("1 2"),
            Err(Error::Parse { offset: 2, .. })
        ));
    }

    #[test]
    fn off_grid_derivatives() {
        let e = parse_expression("exp(0.2*sin(x1))*cos(x2) + t^2").unwrap();
        let (t, x) = (0.3, [0.7f64, -1.1f64]);
        let exact = 0.2 * x[0].cos() * (0.2 * x[0].sin()).exp() * x[1].cos();
        assert!((e.d_dx(t, &x, 0) - exact).abs() < 1e-12);
        assert!((e.d_dt(t, &x) - 2.0 * t).abs() < 1e-12);
        assert_eq!(e.d_dx(t, &x, 2), 0.0);
        assert_eq!(parse_expression("x1").unwrap().d_dt(1.0, &x), 0.0);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-10.0f64..10.0).prop_map(Expr::Num),
            Just(Expr::Pi),
            Just(Expr::Time),
            (1usize..=2).prop_map(Expr::Coord),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            let op = prop_oneof![
                Just(BinOp::Add),
                Just(BinOp::Sub),
                Just(BinOp::Mul),
                Just(BinOp::Div),
                Just(BinOp::Pow),
            ];
            let func = prop_oneof![
                Just(Func::Sin),
                Just(Func::Cos),
                Just(Func::Exp),
                Just(Func::Log),
                Just(Func::Sqrt),
                Just(Func::Tanh),
            ];
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Binary(
                    o,
                    Box::new(a),
                    Box::new(b)
                )),
                (func, inner).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr(), t in -2.0f64..2.0, x1 in -3.0f64..3.0, x2 in -3.0f64..3.0) {
            let printed = e.to_string();
            let back = parse_expression(&printed).unwrap();
            let (a, b) = (e.eval(t, &[x1, x2]), back.eval(t, &[x1, x2]));
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()), "{printed}: {a} vs {b}");
        }
    }
}
