//! Formal associated functions of `h = -d^2 + V`: asymptotic seeds,
//! integration, normalizability and bound states.

pub mod bound;
pub mod checks;
pub mod integrate;
pub mod seed;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridPotential, JetField};
use crate::jet::{Jet, C64};

pub use bound::{count_nodes, find_bound_states};
pub use seed::{seed_asymptotic, AsymptoticSeed};

/// Normalized matching Wronskian below which two one-sided solutions are
/// taken to be proportional (a bound energy).
pub const BOUND_MATCH_TOL: f64 = 1e-6;

/// Relative slope band around zero that is too close to call.
pub const SLOPE_TIE_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    Decaying,
    Growing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizability {
    Normalizable,
    Nonnormalizable,
}

/// A spectral value with its algebraic multiplicity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralValue {
    pub lambda: C64,
    pub multiplicity: usize,
}

/// Solution of `(h - lambda) psi_j = psi_{j-1}` (with `psi_{-1} = 0`) on a grid.
#[derive(Clone, Debug)]
pub struct FormalFunction {
    pub lambda: C64,
    pub order: usize,
    pub field: JetField,
    pub norm_plus: Option<Normalizability>,
    pub norm_minus: Option<Normalizability>,
    pub potential: Arc<GridPotential>,
    pub parent: Option<Arc<FormalFunction>>,
}

impl FormalFunction {
    /// Builds a function from node samples `(psi, psi')`, regenerating the
    /// jets from the equation and classifying both tails.
    pub fn from_samples(
        potential: Arc<GridPotential>,
        lambda: C64,
        parent: Option<Arc<FormalFunction>>,
        samples: &[(C64, C64)],
    ) -> Result<Self> {
        let order = parent.as_ref().map_or(0, |p| p.order + 1);
        let field = integrate::regenerate(&potential.v, lambda, parent.as_ref().map(|p| &p.field), samples);
        if let Some(i) = field.first_non_finite() {
            return Err(Error::Integration(format!("non-finite samples at x = {}", field.grid.x(i))));
        }
        let mut f = FormalFunction { lambda, order, field, norm_plus: None, norm_minus: None, potential, parent };
        f.reclassify();
        Ok(f)
    }

    pub fn reclassify(&mut self) {
        self.norm_plus = classify_normalizability(self, Side::Plus).ok();
        self.norm_minus = classify_normalizability(self, Side::Minus).ok();
    }

    pub fn norm(&self, side: Side) -> Option<Normalizability> {
        match side {
            Side::Plus => self.norm_plus,
            Side::Minus => self.norm_minus,
        }
    }

    pub fn is_normalizable_both(&self) -> bool {
        self.norm_plus == Some(Normalizability::Normalizable)
            && self.norm_minus == Some(Normalizability::Normalizable)
    }

    pub fn values(&self) -> Vec<C64> {
        self.field.values()
    }

    pub fn derivs(&self) -> Vec<C64> {
        self.field.deriv_values(1)
    }

    pub fn samples(&self) -> Vec<(C64, C64)> {
        self.field.jets.iter().map(|j| (j.value(), j.deriv(1))).collect()
    }

    /// Scales the function together with its whole parent chain.
    pub fn scaled(&self, s: C64) -> FormalFunction {
        FormalFunction {
            lambda: self.lambda,
            order: self.order,
            field: self.field.scale(s),
            norm_plus: self.norm_plus,
            norm_minus: self.norm_minus,
            potential: self.potential.clone(),
            parent: self.parent.as_ref().map(|p| Arc::new(p.scaled(s))),
        }
    }

    /// Complex conjugate, a formal function for `lambda*` (the potential is real).
    pub fn conjugate(&self) -> FormalFunction {
        FormalFunction {
            lambda: self.lambda.conj(),
            order: self.order,
            field: self.field.conj(),
            norm_plus: self.norm_plus,
            norm_minus: self.norm_minus,
            potential: self.potential.clone(),
            parent: self.parent.as_ref().map(|p| Arc::new(p.conjugate())),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.field.max_abs() == 0.0
    }

    /// `self + c * g` for an eigenfunction `g` at the same spectral value;
    /// the result is associated to the same parent.
    pub fn plus_eigenfunction(&self, g: &FormalFunction, c: C64) -> Result<FormalFunction> {
        if g.order != 0 || (g.lambda - self.lambda).norm() > 1e-12 * (1.0 + self.lambda.norm()) {
            return Err(Error::Domain("can only add an eigenfunction at the same spectral value".into()));
        }
        if !Arc::ptr_eq(&g.potential, &self.potential) {
            return Err(Error::GridMismatch("functions belong to different potentials".into()));
        }
        let mut f = self.clone();
        f.field = self.field.add(&g.field.scale(c));
        f.reclassify();
        Ok(f)
    }

    /// Chain `[psi_0, ..., psi_j]` ending at this function.
    pub fn ladder(&self) -> Vec<FormalFunction> {
        let mut out = vec![self.clone()];
        let mut cur = self.parent.clone();
        while let Some(p) = cur {
            cur = p.parent.clone();
            out.push((*p).clone());
        }
        out.reverse();
        out
    }

    /// `max |(h - lambda) psi - parent| / max |psi|` with `h` applied to the jets.
    pub fn residual(&self) -> f64 {
        let hpsi = self.field.apply_hamiltonian(&self.potential.v, self.lambda);
        let r = match &self.parent {
            Some(p) => hpsi.sub(&p.field),
            None => hpsi,
        };
        r.max_abs() / self.field.max_abs().max(1e-300)
    }

    /// Largest mismatch between the Taylor series at one node evaluated at
    /// the next node and the sample stored there, relative to `max |psi|`.
    pub fn continuity_residual(&self) -> f64 {
        let dx = self.field.grid.dx();
        let scale = self.field.max_abs().max(1e-300);
        self.field
            .jets
            .windows(2)
            .map(|w| (w[0].eval_offset(dx) - w[1].value()).norm() / scale)
            .fold(0.0, f64::max)
    }

    /// CSV dump with columns `x, Re psi, Im psi, Re psi', Im psi'`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "x,re_psi,im_psi,re_dpsi,im_dpsi")?;
        for (i, (y, yp)) in self.samples().iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", self.field.grid.x(i), y.re, y.im, yp.re, yp.im)?;
        }
        Ok(())
    }
}

/// `a b' - a' b` as a jet field.
pub fn wronskian(a: &JetField, b: &JetField) -> JetField {
    a.mul(&b.derivative()).sub(&a.derivative().mul(b))
}

fn end_index(gp: &GridPotential, side: Side) -> usize {
    match side {
        Side::Plus => gp.grid().n - 1,
        Side::Minus => 0,
    }
}

/// Integrates the order-`j` function decaying at `side` across the whole
/// grid, keeping the seed normalization.
fn shoot(
    gp: &Arc<GridPotential>,
    lambda: C64,
    side: Side,
    parent: Option<&FormalFunction>,
    stop: usize,
) -> Result<Vec<(C64, C64)>> {
    let start = end_index(gp, side);
    let x_seed = gp.grid().x(start);
    let vf = |x: f64| gp.value_at(x);
    let j = parent.map_or(0, |p| p.order + 1);
    let dv = Some(gp.deriv(start, 1));
    let (mut y, mut yp) = seed::associated_leading(&vf, dv, gp.r0, lambda, side, Decay::Decaying, j, x_seed)?;
    if let Some(p) = parent {
        let (prev, _) = seed::associated_leading(&vf, dv, gp.r0, lambda, side, Decay::Decaying, j - 1, x_seed)?;
        let at = p.field.jets[start].value();
        if prev.norm() > 0.0 && at.norm() > 0.0 {
            let s = at / prev;
            y *= s;
            yp *= s;
        }
    }
    integrate::integrate(&gp.v, lambda, parent.map(|p| &p.field), start, (y, yp), stop)
}

fn normalized_match(a: (C64, C64), b: (C64, C64)) -> f64 {
    let w = a.0 * b.1 - a.1 * b.0;
    // sine of the angle between the Cauchy data vectors
    let scale = (a.0.norm_sqr() + a.1.norm_sqr()).sqrt() * (b.0.norm_sqr() + b.1.norm_sqr()).sqrt();
    if scale == 0.0 {
        1.0
    } else {
        w.norm() / scale
    }
}

/// Growing components whose share of the center data is below this are
/// taken to be rounding noise and dropped.
pub const GROWING_SNAP_TOL: f64 = 1e-9;

/// Samples of the solution of `(h - lambda) psi = parent` (or of the
/// eigenvalue equation) with Cauchy data `y_c` at the center. Each half is
/// written in the basis of the solution decaying towards that end (shot
/// inward) and one growing towards it (integrated outward), so neither
/// component is swamped by the other. Used to rebuild functions whose tails
/// were computed through cancellation.
pub fn rebuild_from_center(
    gp: &Arc<GridPotential>,
    lambda: C64,
    parent: Option<&FormalFunction>,
    y_c: (C64, C64),
) -> Result<Vec<(C64, C64)>> {
    let g = gp.grid();
    let m = g.nearest(0.0);
    let zero = C64::new(0.0, 0.0);
    let mut out = vec![(zero, zero); g.n];
    let data_scale = y_c.0.norm().max(y_c.1.norm());
    for side in [Side::Plus, Side::Minus] {
        let dec = shoot(gp, lambda, side, None, m)?;
        let part = match parent {
            Some(p) => Some(shoot(gp, lambda, side, Some(p), m)?),
            None => None,
        };
        let (a, ap) = dec[m];
        let grow = integrate::integrate(&gp.v, lambda, None, m, (-ap.conj(), a.conj()), end_index(gp, side))?;
        let p_m = part.as_ref().map_or((zero, zero), |p| p[m]);
        let t = (y_c.0 - p_m.0, y_c.1 - p_m.1);
        let (b, bp) = grow[m];
        let det = a * bp - ap * b;
        if det.norm() == 0.0 {
            return Err(Error::Integration("degenerate basis at the center".into()));
        }
        let alpha = (t.0 * bp - t.1 * b) / det;
        let mut beta = (a * t.1 - ap * t.0) / det;
        if (beta * b).norm().max((beta * bp).norm()) <= GROWING_SNAP_TOL * data_scale {
            beta = zero;
        }
        let range: Vec<usize> = match side {
            Side::Plus => (m..g.n).collect(),
            Side::Minus => (0..=m).collect(),
        };
        for i in range {
            let p = part.as_ref().map_or((zero, zero), |p| p[i]);
            out[i] = (p.0 + alpha * dec[i].0 + beta * grow[i].0, p.1 + alpha * dec[i].1 + beta * grow[i].1);
        }
    }
    Ok(out)
}

/// Formal associated function of order `parent.order + 1` (or an eigenfunction
/// when `parent` is `None`) that decays at `side`. For eigenfunctions at a
/// bound energy the solution decaying at the other end is patched in beyond
/// the center, and the result is scaled to `max |psi| = 1`.
pub fn solve_formal(
    gp: &Arc<GridPotential>,
    lambda: C64,
    side: Side,
    parent: Option<Arc<FormalFunction>>,
) -> Result<FormalFunction> {
    if let Some(p) = &parent {
        if (p.lambda - lambda).norm() > 1e-12 * (1.0 + lambda.norm()) {
            return Err(Error::Domain("parent belongs to a different spectral value".into()));
        }
        if !Arc::ptr_eq(&p.potential, gp) {
            return Err(Error::GridMismatch("parent belongs to a different potential".into()));
        }
    }
    let n = gp.grid().n;
    let other = end_index(gp, side.opposite());
    let mut y = shoot(gp, lambda, side, parent.as_deref(), other)?;
    if parent.is_none() {
        let m = gp.grid().nearest(0.0);
        let z = shoot(gp, lambda, side.opposite(), None, m)?;
        if normalized_match(y[m], z[m]) < BOUND_MATCH_TOL {
            let s = if y[m].0.norm() >= y[m].1.norm() { y[m].0 / z[m].0 } else { y[m].1 / z[m].1 };
            let range: Vec<usize> = match side {
                Side::Plus => (0..m).collect(),
                Side::Minus => (m + 1..n).collect(),
            };
            for i in range {
                y[i] = (z[i].0 * s, z[i].1 * s);
            }
        }
        let mx = y.iter().map(|v| v.0.norm()).fold(0.0, f64::max);
        if mx > 0.0 {
            for v in y.iter_mut() {
                v.0 /= mx;
                v.1 /= mx;
            }
        }
    }
    let mut f = FormalFunction::from_samples(gp.clone(), lambda, parent, &y)?;
    let by_construction = Some(Normalizability::Normalizable);
    match side {
        Side::Plus => f.norm_plus = by_construction,
        Side::Minus => f.norm_minus = by_construction,
    }
    Ok(f)
}

/// Eigenfunction that is nonnormalizable at `side`. Away from bound energies
/// this is the solution decaying at the opposite end; at a bound energy it is
/// the second solution, started at the center with unit Wronskian against the
/// bound state and integrated outward.
pub fn solve_growing(gp: &Arc<GridPotential>, lambda: C64, side: Side) -> Result<FormalFunction> {
    let f = solve_formal(gp, lambda, side.opposite(), None)?;
    if f.norm(side) == Some(Normalizability::Nonnormalizable) {
        return Ok(f);
    }
    second_solution(gp, &f)
}

/// Eigenfunction nonnormalizable at both ends.
pub fn solve_nonnormalizable_both(gp: &Arc<GridPotential>, lambda: C64) -> Result<FormalFunction> {
    let a = solve_formal(gp, lambda, Side::Plus, None)?;
    if a.is_normalizable_both() {
        return second_solution(gp, &a);
    }
    let b = solve_formal(gp, lambda, Side::Minus, None)?;
    let y: Vec<(C64, C64)> = a.samples().iter().zip(b.samples()).map(|(p, q)| (p.0 + q.0, p.1 + q.1)).collect();
    FormalFunction::from_samples(gp.clone(), lambda, None, &y)
}

/// Second eigenfunction with `W(phi, psi) = 1` at the center, integrated
/// outward in both directions and scaled to `max |psi| = 1`.
pub fn second_solution(gp: &Arc<GridPotential>, phi: &FormalFunction) -> Result<FormalFunction> {
    let g = gp.grid();
    let m = g.nearest(0.0);
    let (a, ap) = (phi.field.jets[m].value(), phi.field.jets[m].deriv(1));
    let d = a * a + ap * ap;
    if d.norm() == 0.0 {
        return Err(Error::Integration("degenerate data for the second solution".into()));
    }
    let y0 = (-ap / d, a / d);
    let right = integrate::integrate(&gp.v, phi.lambda, None, m, y0, g.n - 1)?;
    let left = integrate::integrate(&gp.v, phi.lambda, None, m, y0, 0)?;
    // the two halves may have been rescaled independently on overflow
    let sr = if right[m].0.norm() > 0.0 { y0.0 / right[m].0 } else { y0.1 / right[m].1 };
    let sl = if left[m].0.norm() > 0.0 { y0.0 / left[m].0 } else { y0.1 / left[m].1 };
    let mut y: Vec<(C64, C64)> = (0..g.n)
        .map(|i| if i >= m { (right[i].0 * sr, right[i].1 * sr) } else { (left[i].0 * sl, left[i].1 * sl) })
        .collect();
    let mx = y.iter().map(|v| v.0.norm()).fold(0.0, f64::max);
    for v in y.iter_mut() {
        v.0 /= mx;
        v.1 /= mx;
    }
    let mut f = FormalFunction::from_samples(gp.clone(), phi.lambda, None, &y)?;
    if f.norm_plus.is_none() {
        f.norm_plus = Some(Normalizability::Nonnormalizable);
    }
    if f.norm_minus.is_none() {
        f.norm_minus = Some(Normalizability::Nonnormalizable);
    }
    Ok(f)
}

/// Least-squares slope of `ln |f|` against the outward coordinate over the
/// outer 20% of one half of the grid, compared with `+-Re sqrt(V - lambda)`.
pub fn classify_normalizability(f: &FormalFunction, side: Side) -> Result<Normalizability> {
    let g = &f.field.grid;
    let xmax = g.half_width;
    let mut pts = Vec::new();
    let mut kappa = 0.0;
    let mut count = 0usize;
    for i in 0..g.n {
        let x = g.x(i);
        if side.sign() * x < 0.8 * xmax {
            continue;
        }
        let w = C64::new(f.potential.value(i), 0.0) - f.lambda;
        kappa += w.sqrt().re;
        count += 1;
        let a = f.field.jets[i].value().norm();
        if a > 0.0 && a.is_finite() {
            pts.push((x.abs(), a.ln()));
        }
    }
    if pts.len() < 2 {
        // identically zero tail
        return Ok(Normalizability::Normalizable);
    }
    let kappa = kappa / count as f64;
    let np = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / np;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / np;
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let slope = cov / var;
    if slope < -SLOPE_TIE_TOL * kappa && slope < 0.0 {
        Ok(Normalizability::Normalizable)
    } else if slope > SLOPE_TIE_TOL * kappa && slope > 0.0 {
        Ok(Normalizability::Nonnormalizable)
    } else {
        Err(Error::Classification { slope, rate: kappa })
    }
}

/// Jet field of an analytic function given as an expression.
pub fn field_from_expr(grid: &Arc<crate::grid::Grid>, e: &crate::potential::Expr, order: usize) -> JetField {
    JetField::from_fn(grid.clone(), |x| e.jet(x, order))
}

/// Jet field `f` as a plain function of jets at each node (e.g. closed forms).
pub fn field_from_jets<F: Fn(f64) -> Jet>(grid: &Arc<crate::grid::Grid>, f: F) -> JetField {
    JetField::from_fn(grid.clone(), f)
}
