//! Shooting search for bound states below the tails of a potential.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::GridPotential;
use crate::jet::C64;

use super::{shoot, solve_formal, FormalFunction, Side};

const ENERGY_TOL: f64 = 1e-10;
const BRACKET_WIDTH: f64 = 1e-3;

/// Sign changes of a sampled function after rotating out the phase at its
/// largest sample. Exact zeros are skipped.
pub fn count_nodes(values: &[C64]) -> usize {
    let peak = values.iter().cloned().fold(C64::new(0.0, 0.0), |a, v| if v.norm() > a.norm() { v } else { a });
    if peak.norm() == 0.0 {
        return 0;
    }
    let rot = peak.conj() / peak.norm();
    let mut last = 0.0f64;
    let mut n = 0;
    for v in values {
        let r = (v * rot).re;
        if r == 0.0 {
            continue;
        }
        if last != 0.0 && (r > 0.0) != (last > 0.0) {
            n += 1;
        }
        last = r;
    }
    n
}

struct Shot {
    nodes: usize,
    wronskian: f64,
}

fn fire(gp: &Arc<GridPotential>, e: f64) -> Result<Shot> {
    let lambda = C64::new(e, 0.0);
    let m = gp.grid().nearest(0.0);
    let plus = shoot(gp, lambda, Side::Plus, None, 0)?;
    let minus = shoot(gp, lambda, Side::Minus, None, m)?;
    let values: Vec<C64> = plus.iter().map(|p| p.0).collect();
    let (a, b) = (plus[m], minus[m]);
    Ok(Shot { nodes: count_nodes(&values), wronskian: (a.0 * b.1 - a.1 * b.0).re })
}

fn brackets(
    gp: &Arc<GridPotential>,
    a: f64,
    na: usize,
    b: f64,
    nb: usize,
    depth: u32,
    out: &mut Vec<(f64, f64, usize)>,
) -> Result<()> {
    if nb <= na {
        return Ok(());
    }
    if (nb == na + 1 && b - a < BRACKET_WIDTH) || depth > 60 {
        out.push((a, b, na));
        return Ok(());
    }
    let mid = 0.5 * (a + b);
    let nm = fire(gp, mid)?.nodes.clamp(na, nb);
    brackets(gp, a, na, mid, nm, depth + 1, out)?;
    brackets(gp, mid, nm, b, nb, depth + 1, out)
}

fn refine(gp: &Arc<GridPotential>, mut a: f64, mut b: f64, index: usize) -> Result<f64> {
    let wa = fire(gp, a)?.wronskian;
    let wb = fire(gp, b)?.wronskian;
    let by_wronskian = wa * wb < 0.0;
    let mut sa = wa;
    while b - a > ENERGY_TOL {
        let mid = 0.5 * (a + b);
        let s = fire(gp, mid)?;
        let left = if by_wronskian { (s.wronskian > 0.0) == (sa > 0.0) } else { s.nodes <= index };
        if left {
            a = mid;
            sa = s.wronskian;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Bound states with energies in the open window `(e_min, e_max)`, ascending.
/// Each eigenfunction is normalizable at both ends and its node count equals
/// its index in the full spectrum.
pub fn find_bound_states(gp: &Arc<GridPotential>, e_min: f64, e_max: f64) -> Result<Vec<(f64, FormalFunction)>> {
    if !(e_min < e_max) {
        return Err(Error::Domain(format!("empty energy window ({e_min}, {e_max})")));
    }
    let na = fire(gp, e_min)?.nodes;
    let nb = fire(gp, e_max)?.nodes;
    let mut br = Vec::new();
    brackets(gp, e_min, na, e_max, nb, 0, &mut br)?;
    let mut out = Vec::new();
    for (a, b, index) in br {
        let e = refine(gp, a, b, index)?;
        if e <= e_min + ENERGY_TOL || e >= e_max - 10.0 * ENERGY_TOL {
            continue;
        }
        let f = solve_formal(gp, C64::new(e, 0.0), Side::Plus, None)?;
        if !f.is_normalizable_both() {
            return Err(Error::Spectrum(format!("state near E = {e} is not normalizable at both ends")));
        }
        let nodes = count_nodes(&f.values());
        if nodes != index {
            return Err(Error::Spectrum(format!("state at E = {e} has {nodes} nodes, expected {index}")));
        }
        out.push((e, f));
    }
    Ok(out)
}
