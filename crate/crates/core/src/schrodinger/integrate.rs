//! Taylor-series integrator for `psi'' = (V - lambda) psi - parent`.

use crate::error::{Error, Result};
use crate::grid::JetField;
use crate::jet::{Jet, C64};

const STEP_TOL: f64 = 1e-15;
const MAX_HALVINGS: u32 = 14;
const OVERFLOW: f64 = 1e150;

/// Series coefficients of the local solution with `c0 = y`, `c1 = yp`, from
/// the recursion `(k+1)(k+2) c_{k+2} = sum_j u_j c_{k-j} - p_k`.
pub fn local_series(u: &Jet, p: Option<&Jet>, y: C64, yp: C64) -> Vec<C64> {
    let m = match p {
        Some(p) => u.order().min(p.order()),
        None => u.order(),
    };
    let uc = u.coeffs();
    let mut c = Vec::with_capacity(m + 3);
    c.push(y);
    c.push(yp);
    for k in 0..=m {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..=k {
            acc += uc[j] * c[k - j];
        }
        if let Some(p) = p {
            acc -= p.coeffs()[k];
        }
        c.push(acc / ((k + 1) as f64 * (k + 2) as f64));
    }
    c
}

/// Solution jets at every node, regenerated from `(psi, psi')` through the
/// recursion so that their order tracks the potential rather than decaying.
pub fn regenerate(v: &JetField, lambda: C64, parent: Option<&JetField>, y: &[(C64, C64)]) -> JetField {
    let jets = (0..v.len())
        .map(|i| {
            let u = &v.jets[i] + (-lambda);
            let c = local_series(&u, parent.map(|p| &p.jets[i]), y[i].0, y[i].1);
            Jet::from_coeffs(c)
        })
        .collect();
    JetField::new(v.grid.clone(), jets)
}

fn eval_series(c: &[C64], s: f64) -> (C64, C64) {
    let mut y = C64::new(0.0, 0.0);
    let mut yp = C64::new(0.0, 0.0);
    for (k, ck) in c.iter().enumerate().rev() {
        y = y * s + ck;
        if k > 0 {
            yp = yp * s + ck * k as f64;
        }
    }
    (y, yp)
}

fn tail_ok(c: &[C64], s: f64) -> bool {
    let n = c.len();
    let mut scale: f64 = 0.0;
    let mut p = 1.0;
    for ck in c {
        scale = scale.max(ck.norm() * p);
        p *= s.abs();
    }
    let t1 = c[n - 1].norm() * s.abs().powi(n as i32 - 1);
    let t2 = c[n - 2].norm() * s.abs().powi(n as i32 - 2);
    t1 + t2 <= STEP_TOL * scale || scale == 0.0
}

/// Advances `(y, yp)` from node `i` to node `i + dir` with adaptive substeps.
fn step(
    v: &JetField,
    lambda: C64,
    parent: Option<&JetField>,
    i: usize,
    dir: isize,
    mut y: C64,
    mut yp: C64,
) -> Result<(C64, C64)> {
    let h = dir as f64 * v.grid.dx();
    let mut off = 0.0;
    while (h - off).abs() > 1e-14 * h.abs() {
        let (vj, pj) = if off == 0.0 {
            (v.jets[i].clone(), parent.map(|p| p.jets[i].clone()))
        } else {
            (v.jets[i].shift(off), parent.map(|p| p.jets[i].shift(off)))
        };
        let u = &vj + (-lambda);
        let c = local_series(&u, pj.as_ref(), y, yp);
        let mut s = h - off;
        let mut halvings = 0;
        while !tail_ok(&c, s) {
            s *= 0.5;
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::Integration(format!(
                    "step size underflow near x = {}",
                    v.grid.x(i) + off
                )));
            }
        }
        let (ny, nyp) = eval_series(&c, s);
        y = ny;
        yp = nyp;
        off += s;
    }
    Ok((y, yp))
}

/// Integrates from node `start` (holding `y0`) to node `end`, inclusive.
/// Entries outside the swept range are left at zero. Homogeneous runs are
/// rescaled on overflow; inhomogeneous ones fail.
pub fn integrate(
    v: &JetField,
    lambda: C64,
    parent: Option<&JetField>,
    start: usize,
    y0: (C64, C64),
    end: usize,
) -> Result<Vec<(C64, C64)>> {
    let n = v.len();
    let zero = C64::new(0.0, 0.0);
    let mut out = vec![(zero, zero); n];
    out[start] = y0;
    let dir: isize = if end >= start { 1 } else { -1 };
    let mut i = start;
    let (mut y, mut yp) = y0;
    while i != end {
        let (ny, nyp) = step(v, lambda, parent, i, dir, y, yp)?;
        y = ny;
        yp = nyp;
        i = (i as isize + dir) as usize;
        if !(y.norm().is_finite() && yp.norm().is_finite()) {
            return Err(Error::Integration(format!("non-finite solution at x = {}", v.grid.x(i))));
        }
        let mag = y.norm().max(yp.norm());
        if mag > OVERFLOW {
            if parent.is_some() {
                return Err(Error::Integration(format!(
                    "overflow of an inhomogeneous solution at x = {}",
                    v.grid.x(i)
                )));
            }
            let s = 1.0 / mag;
            for e in out.iter_mut() {
                e.0 *= s;
                e.1 *= s;
            }
            y *= s;
            yp *= s;
        }
        out[i] = (y, yp);
    }
    Ok(out)
}
