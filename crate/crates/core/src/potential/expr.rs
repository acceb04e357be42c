//! Expression trees over `x` with structural differentiation.

use std::fmt;

use crate::jet::{Jet, C64};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    /// Integer power; negative exponents are reciprocals.
    Pow(Box<Expr>, i32),
    Exp(Box<Expr>),
    /// Polynomial in `x` with coefficients in ascending degree.
    Poly(Vec<f64>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Const(x), _) if *x == 0.0 => b,
            (_, Expr::Const(y)) if *y == 0.0 => a,
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::add(a, Expr::neg(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Const(x), _) | (_, Expr::Const(x)) if *x == 0.0 => Expr::Const(0.0),
            (Expr::Const(x), _) if *x == 1.0 => b,
            (_, Expr::Const(y)) if *y == 1.0 => a,
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn pow(a: Expr, n: i32) -> Expr {
        match (n, &a) {
            (0, _) => Expr::Const(1.0),
            (1, _) => a,
            (_, Expr::Const(c)) => Expr::Const(c.powi(n)),
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    pub fn exp(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(c.exp()),
            other => Expr::Exp(Box::new(other)),
        }
    }

    /// Structural derivative d/dx.
    pub fn derivative(&self) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::X => Expr::Const(1.0),
            Expr::Add(a, b) => Expr::add(a.derivative(), b.derivative()),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(), (**b).clone()),
                Expr::mul((**a).clone(), b.derivative()),
            ),
            Expr::Neg(a) => Expr::neg(a.derivative()),
            Expr::Pow(a, n) => Expr::mul(
                Expr::mul(Expr::Const(*n as f64), Expr::pow((**a).clone(), n - 1)),
                a.derivative(),
            ),
            Expr::Exp(a) => Expr::mul(self.clone(), a.derivative()),
            Expr::Poly(c) => {
                if c.len() <= 1 {
                    Expr::Const(0.0)
                } else {
                    Expr::Poly(c[1..].iter().enumerate().map(|(k, v)| v * (k as f64 + 1.0)).collect())
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Neg(a) => -a.eval(x),
            Expr::Pow(a, n) => a.eval(x).powi(*n),
            Expr::Exp(a) => a.eval(x).exp(),
            Expr::Poly(c) => c.iter().rev().fold(0.0, |acc, v| acc * x + v),
        }
    }

    /// Taylor-mode evaluation: all derivatives up to `order` at `x0`.
    pub fn jet(&self, x0: f64, order: usize) -> Jet {
        match self {
            Expr::Const(c) => Jet::constant(C64::new(*c, 0.0), order),
            Expr::X => Jet::variable(x0, order),
            Expr::Add(a, b) => &a.jet(x0, order) + &b.jet(x0, order),
            Expr::Mul(a, b) => &a.jet(x0, order) * &b.jet(x0, order),
            Expr::Neg(a) => -&a.jet(x0, order),
            Expr::Pow(a, n) => a.jet(x0, order).powi(*n),
            Expr::Exp(a) => a.jet(x0, order).exp(),
            Expr::Poly(c) => {
                let x = Jet::variable(x0, order);
                c.iter().rev().fold(Jet::constant(C64::new(0.0, 0.0), order), |acc, v| {
                    &(&acc * &x) + C64::new(*v, 0.0)
                })
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X => write!(f, "x"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Pow(a, n) => write!(f, "({a})^({n})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Poly(c) => {
                write!(f, "(")?;
                for (k, v) in c.iter().enumerate() {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{v}*x^{k}")?;
                }
                write!(f, ")")
            }
        }
    }
}
