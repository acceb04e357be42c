//! Potentials as expression trees, their derivatives, and the class-K window test.

pub mod expr;
pub mod parse;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet, C64};
use crate::quad::adaptive_simpson;
pub use expr::Expr;
pub use parse::parse_expr;

/// Relative slack allowed when deciding that the sampled suprema of the
/// growth-control expression have stopped increasing.
pub const PLATEAU_TOLERANCE: f64 = 0.10;

/// Largest ratio of successive suprema increments (per third of the tail in
/// `ln|x|`) still read as convergence to a finite bound.
pub const DECELERATION_RATIO: f64 = 0.9;

/// A real potential `V(x)` together with its class-K constants.
#[derive(Clone, Debug)]
pub struct Potential {
    spec: String,
    expr: Expr,
    d1: Expr,
    d2: Expr,
    pub r0: f64,
    pub eps: f64,
    pub label: String,
}

impl Potential {
    pub fn new(expr: Expr, r0: f64, eps: f64, label: impl Into<String>) -> Self {
        let d1 = expr.derivative();
        let d2 = d1.derivative();
        Potential { spec: expr.to_string(), expr, d1, d2, r0, eps, label: label.into() }
    }

    pub fn parse(spec: &str, r0: f64, eps: f64) -> Result<Self> {
        let mut p = Potential::new(parse_expr(spec)?, r0, eps, spec);
        p.spec = spec.to_string();
        Ok(p)
    }

    pub fn spec(&self) -> &str {
        &self.spec
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// `V`, `V'` or `V''` at `x`.
    pub fn eval(&self, x: f64, deriv_order: u8) -> Result<f64> {
        let v = match deriv_order {
            0 => self.expr.eval(x),
            1 => self.d1.eval(x),
            2 => self.d2.eval(x),
            _ => panic!("deriv_order must be 0, 1 or 2"),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { x })
        }
    }

    /// Taylor jet of `V` at `x` up to `order`.
    pub fn jet(&self, x: f64, order: usize) -> Result<Jet> {
        let j = self.expr.jet(x, order);
        if j.is_finite() {
            Ok(j)
        } else {
            Err(Error::Evaluation { x })
        }
    }

    // Built-in families.

    /// `x^2 + c`.
    pub fn shifted_oscillator(c: f64) -> Self {
        let r0 = (1.0 - c).max(1.0).sqrt();
        Potential::new(Expr::Poly(vec![c, 0.0, 1.0]), r0, 1.0, format!("x^2 + {c}"))
    }

    /// Constant potential `v0 > 0`.
    pub fn constant_well(v0: f64) -> Self {
        Potential::new(Expr::Const(v0), 1.0, v0, format!("{v0}"))
    }

    /// `x^2 + c + a / (1 + x^2)`.
    pub fn rational_plus_quadratic(a: f64, c: f64) -> Self {
        let expr = Expr::add(
            Expr::Poly(vec![c, 0.0, 1.0]),
            Expr::mul(Expr::Const(a), Expr::pow(Expr::Poly(vec![1.0, 0.0, 1.0]), -1)),
        );
        let r0 = (1.0 - c + a.abs()).max(1.0).sqrt();
        Potential::new(expr, r0, 1.0, format!("x^2 + {c} + {a}/(1+x^2)"))
    }

    /// `-a^2 e^{2bx} + 2 a d e^{bx}`: outside class K, kept as a negative fixture.
    pub fn exponential_counterexample(alpha: f64, beta: f64, delta: f64) -> Self {
        let e1 = Expr::exp(Expr::mul(Expr::Const(beta), Expr::X));
        let e2 = Expr::exp(Expr::mul(Expr::Const(2.0 * beta), Expr::X));
        let expr = Expr::add(
            Expr::mul(Expr::Const(-alpha * alpha), e2),
            Expr::mul(Expr::Const(2.0 * alpha * delta), e1),
        );
        Potential::new(expr, 1.0, 1.0, format!("counterexample({alpha},{beta},{delta})"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KVerdict {
    Verified,
    Refuted,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KMembershipReport {
    pub property2_ok: bool,
    pub property3_sup_right: f64,
    pub property3_sup_left: f64,
    pub sample_range: (f64, f64),
    pub verdict: KVerdict,
    /// Point with `V < eps` (or an undefined growth expression) when refuted.
    pub witness: Option<f64>,
}

/// One tail sample: position, `xi = |int_{+-R0}^x sqrt|V||`, and `V, V', V''`.
#[derive(Clone, Copy, Debug)]
pub struct TailSample {
    pub x: f64,
    pub xi: f64,
    pub v: f64,
    pub dv: f64,
    pub d2v: f64,
}

/// Growth-control expression `xi^2 (|V'|^2/|V|^3 + |V''|/|V|^2)`, with `xi = int_0^x sqrt|V|`.
pub fn growth_expression(s: &TailSample) -> f64 {
    let av = s.v.abs();
    s.xi * s.xi * (s.dv * s.dv / (av * av * av) + s.d2v.abs() / (av * av))
}

/// Shared verdict logic for analytic and sampled potentials. Each tail is
/// ordered from `R0` outward.
pub fn classify_tails(
    right: &[TailSample],
    left: &[TailSample],
    eps: f64,
    range: (f64, f64),
) -> KMembershipReport {
    let mut witness = None;
    let mut property2_ok = true;
    for s in right.iter().chain(left.iter()) {
        if !(s.v >= eps) {
            property2_ok = false;
            witness.get_or_insert(s.x);
        }
    }
    // Running suprema over the first third, two thirds and all of the tail,
    // with thirds measured in ln|x|.
    let sup = |tail: &[TailSample]| -> ([f64; 3], Option<f64>) {
        let vals: Vec<f64> = tail.iter().map(growth_expression).collect();
        let bad = tail.iter().zip(&vals).find(|(_, g)| !g.is_finite()).map(|(s, _)| s.x);
        let mut m = [0.0f64; 3];
        if let (Some(first), Some(last)) = (tail.first(), tail.last()) {
            let (a, b) = (first.x.abs().max(1e-300).ln(), last.x.abs().max(1e-300).ln());
            for (s, g) in tail.iter().zip(&vals) {
                let t = if b > a { (s.x.abs().max(1e-300).ln() - a) / (b - a) } else { 1.0 };
                let third = ((t * 3.0).floor() as usize).min(2);
                for slot in m.iter_mut().skip(third) {
                    *slot = slot.max(*g);
                }
            }
        }
        (m, bad)
    };
    let (m_r, bad_r) = sup(right);
    let (m_l, bad_l) = sup(left);
    let (sup_r, sup_l) = (m_r[2], m_l[2]);
    let undefined = bad_r.or(bad_l);
    if let Some(x) = undefined {
        witness.get_or_insert(x);
    }
    // Bounded if the last third adds little, or if its increase is clearly
    // smaller than the middle third's (geometric decay of the increments).
    let settled = |m: [f64; 3]| {
        m[2] <= (1.0 + PLATEAU_TOLERANCE) * m[1] + 1e-12
            || m[2] - m[1] <= DECELERATION_RATIO * (m[1] - m[0]) + 1e-12
    };
    let verdict = if !property2_ok || undefined.is_some() {
        KVerdict::Refuted
    } else if settled(m_r) && settled(m_l) {
        KVerdict::Verified
    } else {
        KVerdict::Inconclusive
    };
    KMembershipReport {
        property2_ok,
        property3_sup_right: sup_r,
        property3_sup_left: sup_l,
        sample_range: range,
        verdict,
        witness,
    }
}

/// Samples property (2) and the growth expression on log-dense points of
/// `[R0, x_max]` and `[-x_max, -R0]`.
pub fn check_class_k(p: &Potential, x_max: f64, n_samples: usize) -> Result<KMembershipReport> {
    if !(x_max > p.r0) {
        return Err(Error::Config(format!("x_max = {x_max} must exceed R0 = {}", p.r0)));
    }
    if n_samples < 100 {
        return Err(Error::Config("check_class_k needs at least 100 samples".into()));
    }
    let ratio = (x_max / p.r0).ln();
    let offsets: Vec<f64> = (0..n_samples)
        .map(|i| p.r0 * (ratio * i as f64 / (n_samples - 1) as f64).exp())
        .collect();
    let sqrt_abs = |x: f64| C64::new(p.expr.eval(x).abs().sqrt(), 0.0);
    // The integral in the growth expression starts at the origin rather than
    // at R0. Shifting the lower limit changes xi by a constant, which does not
    // affect boundedness as xi -> inf, but starting at R0 adds a slow
    // (1 - R0^2/x^2)^2 transient that finite windows cannot see past.
    let tail = |sign: f64| -> Vec<TailSample> {
        let mut xi = adaptive_simpson(&|t: f64| sqrt_abs(sign * t), 0.0, p.r0, 1e-10).re;
        let mut prev = p.r0;
        offsets
            .iter()
            .map(|&r| {
                xi += adaptive_simpson(&|t: f64| sqrt_abs(sign * t), prev, r, 1e-10).re;
                prev = r;
                let x = sign * r;
                TailSample {
                    x,
                    xi,
                    v: p.expr.eval(x),
                    dv: p.d1.eval(x),
                    d2v: p.d2.eval(x),
                }
            })
            .collect()
    };
    let right = tail(1.0);
    let left = tail(-1.0);
    Ok(classify_tails(&right, &left, p.eps, (p.r0, x_max)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let p = Potential::parse("x^2 - 3", 2.0, 1.0).unwrap();
        assert_eq!(p.eval(2.0, 0).unwrap(), 1.0);
        assert_eq!(p.eval(2.0, 2).unwrap(), 2.0);
        let c = Potential::exponential_counterexample(1.0, 1.0, 1.0);
        assert!((c.eval(0.0, 0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eval_reports_non_finite() {
        let p = Potential::parse("1/x", 1.0, 1.0).unwrap();
        match p.eval(0.0, 0) {
            Err(Error::Evaluation { x }) => assert_eq!(x, 0.0),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn jet_agrees_with_symbolic_derivatives() {
        let p = Potential::parse("x^2 + 1/(1 + x^2) - exp(-x)", 1.0, 1.0).unwrap();
        for &x in &[-2.0, -0.3, 0.0, 0.7, 3.1] {
            let j = p.jet(x, 4).unwrap();
            assert!((j.deriv(0).re - p.eval(x, 0).unwrap()).abs() < 1e-12);
            assert!((j.deriv(1).re - p.eval(x, 1).unwrap()).abs() < 1e-12);
            assert!((j.deriv(2).re - p.eval(x, 2).unwrap()).abs() < 1e-11);
        }
    }

    #[test]
    fn class_k_examples() {
        let osc = Potential::parse("x^2 + 1", 2.0, 1.0).unwrap();
        assert_eq!(check_class_k(&osc, 100.0, 400).unwrap().verdict, KVerdict::Verified);

        let c = Potential::exponential_counterexample(1.0, 1.0, 1.0);
        let r = check_class_k(&c, 20.0, 200).unwrap();
        assert_eq!(r.verdict, KVerdict::Refuted);
        let w = r.witness.expect("refutation carries a witness");
        assert!(c.eval(w, 0).unwrap() < c.eps && w.abs() >= c.r0);

        let flat = Potential::constant_well(1.0);
        let r = check_class_k(&flat, 50.0, 100).unwrap();
        assert_eq!(r.verdict, KVerdict::Verified);
        assert_eq!(r.property3_sup_right, 0.0);
        assert_eq!(r.property3_sup_left, 0.0);
    }

    fn synthetic_tail(g: impl Fn(f64) -> f64) -> Vec<TailSample> {
        (0..300)
            .map(|i| {
                let x = 2.0 * (i as f64 / 299.0 * 3.0).exp();
                TailSample { x, xi: x, v: 1.0, dv: 0.0, d2v: g(x) / (x * x) }
            })
            .collect()
    }

    #[test]
    fn deceleration_rule_separates_bounded_from_logarithmic_growth() {
        let bounded = synthetic_tail(|x| 1.5 - 2.0 / x);
        let r = classify_tails(&bounded, &bounded, 0.5, (2.0, 40.0));
        assert_eq!(r.verdict, KVerdict::Verified);
        let slow = synthetic_tail(|x| x.ln());
        let r = classify_tails(&slow, &slow, 0.5, (2.0, 40.0));
        assert_eq!(r.verdict, KVerdict::Inconclusive);
    }

    #[test]
    fn class_k_rejects_bad_inputs() {
        let p = Potential::constant_well(1.0);
        assert!(check_class_k(&p, 0.5, 200).is_err());
        assert!(check_class_k(&p, 10.0, 10).is_err());
    }
}
