//! Leading-order WKB data used to start integrations at the grid ends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::C64;
use crate::potential::Potential;
use crate::quad::adaptive_simpson;

use super::{Decay, Side};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AsymptoticSeed {
    pub side: Side,
    pub decay: Decay,
    pub x_seed: f64,
    pub value: C64,
    pub derivative: C64,
}

/// Principal square root of `V - lambda`, rejecting the branch cut.
pub fn sqrt_v_minus(v: f64, lambda: C64, x: f64) -> Result<C64> {
    let w = C64::new(v, 0.0) - lambda;
    if w.im == 0.0 && w.re <= 0.0 {
        return Err(Error::Branch { x });
    }
    Ok(w.sqrt())
}

/// `xi(x; lambda) = +-int_{+-R0}^x sqrt(V - lambda)`.
pub fn xi_lambda<F: Fn(f64) -> f64>(v: &F, r0: f64, lambda: C64, side: Side, x: f64) -> C64 {
    let start = side.sign() * r0;
    let f = |t: f64| {
        let w = C64::new(v(t), 0.0) - lambda;
        w.sqrt()
    };
    adaptive_simpson(&f, start, x, 1e-12) * side.sign()
}

/// Whether `int dx / sqrt|V|` converges towards this infinity, judged from
/// the local growth exponent of `sqrt|V|` between `x/2` and `x`.
pub fn eta_finite<F: Fn(f64) -> f64>(v: &F, x_end: f64) -> bool {
    let outer = v(x_end).abs().sqrt();
    let inner = v(0.5 * x_end).abs().sqrt();
    if outer <= 0.0 || inner <= 0.0 {
        return false;
    }
    (outer / inner).ln() / std::f64::consts::LN_2 > 1.1
}

/// `int dx / sqrt(V - lambda)` from the reference point (infinity when the
/// integral converges, `+-R0` otherwise) to `x`. The part beyond the grid end
/// uses a power-law continuation of `V`.
fn eta_lambda<F: Fn(f64) -> f64>(v: &F, r0: f64, lambda: C64, side: Side, x: f64) -> C64 {
    let f = |t: f64| (C64::new(v(t), 0.0) - lambda).sqrt().inv();
    if eta_finite(v, x) {
        let outer = v(x).abs().sqrt();
        let inner = v(0.5 * x).abs().sqrt();
        let r = (outer / inner).ln() / std::f64::consts::LN_2;
        // int_x^inf dt / (sqrt V(x) (t/x)^r) = |x| / (sqrt V(x) (r - 1))
        let tail = x.abs() / (outer * (r - 1.0));
        -C64::new(side.sign() * tail, 0.0)
    } else {
        adaptive_simpson(&f, side.sign() * r0, x, 1e-12)
    }
}

/// Leading terms of the order-`n` associated function and its derivative.
/// With `dv` supplied, the derivative is that of the full leading-order
/// expression (prefactor and polynomial included) rather than its leading term.
#[allow(clippy::too_many_arguments)]
pub fn associated_leading<F: Fn(f64) -> f64>(
    v: &F,
    dv: Option<f64>,
    r0: f64,
    lambda: C64,
    side: Side,
    decay: Decay,
    n: usize,
    x: f64,
) -> Result<(C64, C64)> {
    if x.abs() < r0 {
        return Err(Error::Domain(format!("seed point {x} lies inside R0 = {r0}")));
    }
    let root = sqrt_v_minus(v(x), lambda, x)?;
    let q = root.sqrt();
    let xi = xi_lambda(v, r0, lambda, side, x);
    let (e, dsign) = match decay {
        Decay::Decaying => ((-xi).exp(), -side.sign()),
        Decay::Growing => (xi.exp(), side.sign()),
    };
    let sgn = match decay {
        Decay::Decaying => side.sign(),
        Decay::Growing => -side.sign(),
    };
    let mut poly = C64::new(1.0, 0.0);
    let mut base = C64::new(1.0, 0.0);
    if n > 0 {
        base = eta_lambda(v, r0, lambda, side, x) * (0.5 * sgn);
        poly = base.powi(n as i32) / crate::jet::factorial(n);
    }
    let value = poly * e / q;
    let derivative = match dv {
        None => poly * e * q * dsign,
        Some(dv) => {
            let w = C64::new(v(x), 0.0) - lambda;
            let mut logd = root * dsign - dv / (w * 4.0);
            if n > 0 {
                logd += (n as f64) * 0.5 * sgn / (root * base);
            }
            value * logd
        }
    };
    Ok((value, derivative))
}

/// Leading-order seed of the order-0 function on a given side.
pub fn seed_asymptotic(p: &Potential, lambda: C64, side: Side, decay: Decay, x_seed: f64) -> Result<AsymptoticSeed> {
    if !(lambda.im != 0.0 || lambda.re <= 0.0) {
        return Err(Error::Domain(format!("spectral value {lambda} must be <= 0 or non-real")));
    }
    let vf = |x: f64| p.expr().eval(x);
    let (value, derivative) = associated_leading(&vf, None, p.r0, lambda, side, decay, 0, x_seed)?;
    Ok(AsymptoticSeed { side, decay, x_seed, value, derivative })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_potential_seed_is_exact_exponential() {
        let p = Potential::constant_well(1.0);
        let s = seed_asymptotic(&p, C64::new(0.0, 0.0), Side::Plus, Decay::Decaying, 10.0).unwrap();
        assert!((s.value.re - (-9.0f64).exp()).abs() < 1e-14);
        assert!((s.derivative + s.value).norm() < 1e-15);
        let g = seed_asymptotic(&p, C64::new(0.0, 0.0), Side::Plus, Decay::Growing, 10.0).unwrap();
        assert!((g.derivative / g.value - 1.0).norm() < 1e-14);
    }

    #[test]
    fn oscillator_seed_matches_quadrature() {
        let p = Potential::parse("x^2", 1.0, 1.0).unwrap();
        let s = seed_asymptotic(&p, C64::new(-1.0, 0.0), Side::Plus, Decay::Decaying, 8.0).unwrap();
        // closed form of int_1^8 sqrt(x^2 + 1)
        let anti = |x: f64| 0.5 * (x * (x * x + 1.0).sqrt() + x.asinh());
        let xi = anti(8.0) - anti(1.0);
        let expect = 65f64.powf(-0.25) * (-xi).exp();
        assert!((s.value.re - expect).abs() < 1e-10 * expect);
        assert!((s.derivative / s.value + 65f64.sqrt()).norm() < 1e-12);
    }

    #[test]
    fn branch_cut_is_rejected() {
        let p = Potential::parse("x^2", 1.0, 1.0).unwrap();
        let r = seed_asymptotic(&p, C64::new(0.0, 0.0), Side::Minus, Decay::Decaying, -0.0);
        assert!(r.is_err());
        assert!(matches!(sqrt_v_minus(-1.0, C64::new(0.0, 0.0), 3.0), Err(Error::Branch { x }) if x == 3.0));
    }
}
