//! Truncated Taylor series ("jets") with complex coefficients.
//!
//! A jet stores normalized coefficients `c[k] = f^(k)(x0) / k!` of a function
//! around a point. Arithmetic truncates to the shorter operand, so every
//! operation is exact up to the stored order.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

pub type C64 = Complex64;

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    coeffs: Vec<C64>,
}

impl Jet {
    pub fn from_coeffs(coeffs: Vec<C64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least one coefficient");
        Jet { coeffs }
    }

    /// Jet of a constant, padded with zeros up to `order`.
    pub fn constant(value: C64, order: usize) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); order + 1];
        coeffs[0] = value;
        Jet { coeffs }
    }

    /// Jet of the identity map expanded at `x0`.
    pub fn variable(x0: f64, order: usize) -> Self {
        let mut j = Jet::constant(C64::new(x0, 0.0), order);
        if order >= 1 {
            j.coeffs[1] = C64::new(1.0, 0.0);
        }
        j
    }

    /// Builds a jet from plain derivatives `[f, f', f'', ...]`.
    pub fn from_derivatives(derivs: &[C64]) -> Self {
        let mut fact = 1.0;
        let coeffs = derivs
            .iter()
            .enumerate()
            .map(|(k, d)| {
                if k > 0 {
                    fact *= k as f64;
                }
                d / fact
            })
            .collect();
        Jet { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn value(&self) -> C64 {
        self.coeffs[0]
    }

    /// k-th derivative at the expansion point; zero beyond the stored order.
    pub fn deriv(&self, k: usize) -> C64 {
        match self.coeffs.get(k) {
            Some(c) => c * factorial(k),
            None => C64::new(0.0, 0.0),
        }
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let n = (order + 1).min(self.coeffs.len());
        Jet { coeffs: self.coeffs[..n].to_vec() }
    }

    /// Jet of f'. Loses one order; a constant jet stays a (zero) constant.
    pub fn derivative(&self) -> Jet {
        if self.coeffs.len() == 1 {
            return Jet::constant(C64::new(0.0, 0.0), 0);
        }
        let coeffs = self.coeffs[1..]
            .iter()
            .enumerate()
            .map(|(k, c)| c * (k as f64 + 1.0))
            .collect();
        Jet { coeffs }
    }

    pub fn nth_derivative(&self, n: usize) -> Jet {
        (0..n).fold(self.clone(), |j, _| j.derivative())
    }

    pub fn conj(&self) -> Jet {
        Jet { coeffs: self.coeffs.iter().map(|c| c.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Jet {
        Jet { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn recip(&self) -> Jet {
        Jet::constant(C64::new(1.0, 0.0), self.order()).div(self)
    }

    pub fn div(&self, rhs: &Jet) -> Jet {
        let n = self.coeffs.len().min(rhs.coeffs.len());
        let b0 = rhs.coeffs[0];
        let mut out: Vec<C64> = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = self.coeffs[k];
            for j in 1..=k {
                acc -= rhs.coeffs[j] * out[k - j];
            }
            out.push(acc / b0);
        }
        Jet { coeffs: out }
    }

    pub fn exp(&self) -> Jet {
        let n = self.coeffs.len();
        let mut out = Vec::with_capacity(n);
        out.push(self.coeffs[0].exp());
        for k in 1..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 1..=k {
                acc += self.coeffs[j] * out[k - j] * (j as f64);
            }
            out.push(acc / (k as f64));
        }
        Jet { coeffs: out }
    }

    pub fn powi(&self, n: i32) -> Jet {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut result = Jet::constant(C64::new(1.0, 0.0), self.order());
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// Evaluates the truncated series at offset `h` from the expansion point.
    pub fn eval_offset(&self, h: f64) -> C64 {
        self.coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * h + c)
    }

    /// Re-expands the truncated polynomial around `x0 + h`.
    pub fn shift(&self, h: f64) -> Jet {
        let mut c = self.coeffs.clone();
        let n = c.len();
        // repeated synthetic division (Taylor shift)
        for i in 0..n {
            for k in (i..n - 1).rev() {
                let next = c[k + 1];
                c[k] += next * h;
            }
        }
        Jet { coeffs: c }
    }

    /// Exact integral of the truncated polynomial over `[x0, x0 + h]`.
    pub fn integrate_step(&self, h: f64) -> C64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, (k, c)| acc * h + c / (k as f64 + 1.0))
            * h
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let n = self.coeffs.len().min(rhs.coeffs.len());
        Jet { coeffs: (0..n).map(|k| self.coeffs[k] + rhs.coeffs[k]).collect() }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let n = self.coeffs.len().min(rhs.coeffs.len());
        Jet { coeffs: (0..n).map(|k| self.coeffs[k] - rhs.coeffs[k]).collect() }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let n = self.coeffs.len().min(rhs.coeffs.len());
        let coeffs = (0..n)
            .map(|k| {
                (0..=k).fold(C64::new(0.0, 0.0), |acc, j| {
                    acc + self.coeffs[j] * rhs.coeffs[k - j]
                })
            })
            .collect();
        Jet { coeffs }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Add<C64> for &Jet {
    type Output = Jet;
    fn add(self, rhs: C64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += rhs;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn product_rule_matches_closed_form() {
        // (x^2)(x^3) at x0 = 2, derivatives of x^5
        let x = Jet::variable(2.0, 6);
        let p = &(&x * &x) * &(&(&x * &x) * &x);
        assert!((p.deriv(0) - c(32.0)).norm() < 1e-12);
        assert!((p.deriv(1) - c(80.0)).norm() < 1e-12);
        assert!((p.deriv(2) - c(160.0)).norm() < 1e-12);
        assert!((p.deriv(5) - c(120.0)).norm() < 1e-10);
        assert!(p.deriv(6).norm() < 1e-10);
    }

    #[test]
    fn exp_and_recip_derivatives() {
        let x = Jet::variable(0.5, 8);
        let e = x.scale(c(2.0)).exp();
        for k in 0..=8 {
            let exact = 2f64.powi(k as i32) * 1f64.exp();
            assert!((e.deriv(k).re - exact).abs() < 1e-9 * exact);
        }
        let r = (&x + c(1.0)).recip(); // 1/(1+x)
        for k in 0..=6 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let exact = sign * factorial(k) / 1.5f64.powi(k as i32 + 1);
            assert!((r.deriv(k).re - exact).abs() < 1e-10 * exact.abs());
        }
    }

    #[test]
    fn shift_reexpands_polynomial() {
        let x = Jet::variable(0.0, 4);
        let p = &(&x * &x) * &x; // x^3
        let s = p.shift(1.5);
        assert!((s.value() - c(3.375)).norm() < 1e-12);
        assert!((s.deriv(1) - c(6.75)).norm() < 1e-12);
        assert!((p.eval_offset(1.5) - c(3.375)).norm() < 1e-12);
        assert!((p.integrate_step(2.0) - c(4.0)).norm() < 1e-12);
    }

    #[test]
    fn negative_power_is_reciprocal() {
        let x = &Jet::variable(1.0, 5) + c(1.0);
        let a = x.powi(-2);
        let b = (&x * &x).recip();
        for k in 0..=5 {
            assert!((a.deriv(k) - b.deriv(k)).norm() < 1e-12);
        }
    }
}
