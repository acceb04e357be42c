//! Uniform grids, jet-valued fields on them, and sampled potentials.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet, C64};
use crate::potential::{classify_tails, KMembershipReport, Potential, TailSample};

/// Jet order used when sampling analytic potentials onto a grid.
pub const POTENTIAL_JET_ORDER: usize = 24;

/// Fraction of the half-width at each end excluded from window checks on
/// transformed potentials.
pub const DERIVED_EDGE_MARGIN: f64 = 0.1;

/// Uniform grid on `[-half_width, half_width]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub half_width: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0) || n < 16 {
            return Err(Error::Config(format!(
                "grid needs half_width > 0 and at least 16 points (got {half_width}, {n})"
            )));
        }
        Ok(Grid { half_width, n })
    }

    /// Grid with spacing close to `dx` reaching out to `half_width`.
    pub fn with_spacing(half_width: f64, dx: f64) -> Result<Self> {
        let n = (2.0 * half_width / dx).ceil() as usize + 1;
        Grid::new(half_width, n.max(16))
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x + self.half_width) / self.dx()).round();
        i.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Half-width such that `int_{R0}^{X} sqrt|V| >= target` on both sides.
    pub fn auto_half_width(p: &Potential, target_xi: f64) -> Result<f64> {
        let step = 0.01;
        let mut best: f64 = p.r0 + step;
        for sign in [1.0, -1.0] {
            let mut x = p.r0;
            let mut xi = 0.0;
            while xi < target_xi {
                let v = p.eval(sign * (x + 0.5 * step), 0)?;
                xi += v.abs().sqrt() * step;
                x += step;
                if x > 1e4 {
                    return Err(Error::Config("cannot reach the tail suppression target".into()));
                }
            }
            best = best.max(x);
        }
        Ok(best)
    }
}

/// A jet at every node of a grid.
#[derive(Clone, Debug)]
pub struct JetField {
    pub grid: Arc<Grid>,
    pub jets: Vec<Jet>,
}

impl JetField {
    pub fn new(grid: Arc<Grid>, jets: Vec<Jet>) -> Self {
        assert_eq!(grid.n, jets.len());
        JetField { grid, jets }
    }

    pub fn from_fn<F: Fn(f64) -> Jet>(grid: Arc<Grid>, f: F) -> Self {
        let jets = (0..grid.n).map(|i| f(grid.x(i))).collect();
        JetField { grid, jets }
    }

    pub fn zeros(grid: Arc<Grid>, order: usize) -> Self {
        let jets = vec![Jet::constant(C64::new(0.0, 0.0), order); grid.n];
        JetField { grid, jets }
    }

    pub fn order(&self) -> usize {
        self.jets.iter().map(Jet::order).min().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.jets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jets.is_empty()
    }

    pub fn values(&self) -> Vec<C64> {
        self.jets.iter().map(Jet::value).collect()
    }

    pub fn deriv_values(&self, k: usize) -> Vec<C64> {
        self.jets.iter().map(|j| j.deriv(k)).collect()
    }

    fn check_grid(&self, other: &JetField) {
        assert!(
            Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid,
            "fields live on different grids"
        );
    }

    pub fn zip_with<F: Fn(&Jet, &Jet) -> Jet>(&self, other: &JetField, f: F) -> JetField {
        self.check_grid(other);
        let jets = self.jets.iter().zip(&other.jets).map(|(a, b)| f(a, b)).collect();
        JetField { grid: self.grid.clone(), jets }
    }

    pub fn map<F: Fn(&Jet) -> Jet>(&self, f: F) -> JetField {
        JetField { grid: self.grid.clone(), jets: self.jets.iter().map(f).collect() }
    }

    pub fn add(&self, o: &JetField) -> JetField {
        self.zip_with(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &JetField) -> JetField {
        self.zip_with(o, |a, b| a - b)
    }

    pub fn mul(&self, o: &JetField) -> JetField {
        self.zip_with(o, |a, b| a * b)
    }

    pub fn div(&self, o: &JetField) -> JetField {
        self.zip_with(o, |a, b| a.div(b))
    }

    pub fn scale(&self, s: C64) -> JetField {
        self.map(|j| j.scale(s))
    }

    pub fn conj(&self) -> JetField {
        self.map(Jet::conj)
    }

    pub fn derivative(&self) -> JetField {
        self.map(Jet::derivative)
    }

    pub fn nth_derivative(&self, n: usize) -> JetField {
        self.map(|j| j.nth_derivative(n))
    }

    pub fn truncate(&self, order: usize) -> JetField {
        self.map(|j| j.truncate(order))
    }

    pub fn is_finite(&self) -> bool {
        self.jets.iter().all(Jet::is_finite)
    }

    /// First node whose value is not finite.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.jets.iter().position(|j| !j.is_finite())
    }

    /// Trapezoidal L2 norm of the values.
    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.values(), self.grid.dx())
    }

    pub fn max_abs(&self) -> f64 {
        self.jets.iter().map(|j| j.value().norm()).fold(0.0, f64::max)
    }

    /// Cumulative integral of the field from node `from`, integrating each
    /// cell exactly through the stored Taylor polynomials.
    pub fn cumulative_integral(&self, from: usize) -> Vec<C64> {
        let n = self.len();
        let dx = self.grid.dx();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for i in from + 1..n {
            out[i] = out[i - 1] + self.jets[i - 1].integrate_step(dx);
        }
        for i in (0..from).rev() {
            out[i] = out[i + 1] + self.jets[i + 1].integrate_step(-dx);
        }
        out
    }

    /// `-f'' + V f - lambda f`.
    pub fn apply_hamiltonian(&self, v: &JetField, lambda: C64) -> JetField {
        let d2 = self.nth_derivative(2);
        let vf = v.mul(self);
        vf.sub(&d2).zip_with(self, |a, f| a - &f.scale(lambda))
    }
}

pub fn l2_norm(values: &[C64], dx: f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let mut s: f64 = values.iter().map(|v| v.norm_sqr()).sum();
    s -= 0.5 * (values[0].norm_sqr() + values[n - 1].norm_sqr());
    (s * dx).sqrt()
}

static NEXT_POTENTIAL_ID: AtomicUsize = AtomicUsize::new(0);

/// A potential sampled as jets on a grid (sources and Darboux targets alike).
#[derive(Clone, Debug)]
pub struct GridPotential {
    pub id: usize,
    pub v: JetField,
    pub r0: f64,
    pub eps: f64,
    /// Outer edge of the trusted window. Derived potentials carry a thin
    /// artifact at the grid ends from the seeds' residual growing admixture.
    pub window_end: f64,
    pub label: String,
    /// Construction trail: which factor produced this potential.
    pub provenance: Vec<String>,
}

impl GridPotential {
    pub fn from_potential(p: &Potential, grid: Arc<Grid>) -> Result<Arc<Self>> {
        let mut jets = Vec::with_capacity(grid.n);
        for i in 0..grid.n {
            jets.push(p.jet(grid.x(i), POTENTIAL_JET_ORDER)?);
        }
        let window_end = grid.half_width;
        Ok(Arc::new(GridPotential {
            id: NEXT_POTENTIAL_ID.fetch_add(1, Ordering::Relaxed),
            v: JetField::new(grid, jets),
            r0: p.r0,
            eps: p.eps,
            window_end,
            label: p.label.clone(),
            provenance: vec![format!("sampled from `{}`", p.spec())],
        }))
    }

    /// Potential produced from `source` by a transformation step.
    pub fn derived(v: JetField, source: &GridPotential, step: String) -> Result<Arc<Self>> {
        if let Some(i) = v.first_non_finite() {
            return Err(Error::SingularFactor {
                x: v.grid.x(i),
                what: format!("non-finite transformed potential ({step})"),
            });
        }
        let half_width = v.grid.half_width;
        let mut provenance = source.provenance.clone();
        provenance.push(step);
        let mut gp = GridPotential {
            id: NEXT_POTENTIAL_ID.fetch_add(1, Ordering::Relaxed),
            v,
            r0: source.r0,
            eps: source.eps,
            window_end: source.window_end.min((1.0 - DERIVED_EDGE_MARGIN) * half_width),
            label: format!("{}'", source.label),
            provenance,
        };
        gp.adapt_window_constants();
        Ok(Arc::new(gp))
    }

    /// Derived potentials keep the source R0; when the tails dip lower the
    /// window is pushed outward past the last non-positive node and eps is
    /// lowered to half the tail minimum. R0 is capped at 80% of the trusted
    /// window so some tail is always left to sample.
    fn adapt_window_constants(&mut self) {
        let grid = self.grid().clone();
        let limit = 0.8 * self.window_end;
        let mut r0 = self.r0;
        for i in 0..grid.n {
            let x = grid.x(i);
            if x.abs() >= r0 && x.abs() <= limit && self.value(i) <= 0.0 {
                r0 = r0.max(x.abs() + grid.dx());
            }
        }
        self.r0 = r0.min(limit);
        let tail_min = (0..grid.n)
            .filter(|&i| grid.x(i).abs() >= self.r0)
            .map(|i| self.value(i))
            .fold(f64::INFINITY, f64::min);
        if tail_min > 0.0 && tail_min < self.eps {
            self.eps = 0.5 * tail_min;
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.v.grid
    }

    pub fn value(&self, i: usize) -> f64 {
        self.v.jets[i].value().re
    }

    pub fn deriv(&self, i: usize, k: usize) -> f64 {
        self.v.jets[i].deriv(k).re
    }

    /// `V(x)` anywhere on the grid through the nearest node's Taylor series.
    pub fn value_at(&self, x: f64) -> f64 {
        let g = self.grid();
        let i = g.nearest(x);
        self.v.jets[i].eval_offset(x - g.x(i)).re
    }

    pub fn min_value(&self) -> f64 {
        (0..self.grid().n).map(|i| self.value(i)).fold(f64::INFINITY, f64::min)
    }

    /// Largest imaginary part of the sampled potential (realness audit).
    pub fn max_imag(&self) -> f64 {
        self.v.jets.iter().map(|j| j.value().im.abs()).fold(0.0, f64::max)
    }

    /// Class-K test on the window `R0 <= |x| <= window_end`.
    pub fn check_class_k_window(&self) -> KMembershipReport {
        let g = self.grid();
        let dx = g.dx();
        let sqrt_abs = self.v.map(|j| {
            let a = j.value().norm().sqrt();
            Jet::constant(C64::new(a, 0.0), 0)
        });
        let vals: Vec<f64> = sqrt_abs.values().iter().map(|c| c.re).collect();
        // xi is measured from the origin (see `check_class_k`)
        let m = g.nearest(0.0);
        let mut xi_of = vec![0.0; g.n];
        for i in m + 1..g.n {
            xi_of[i] = xi_of[i - 1] + 0.5 * (vals[i - 1] + vals[i]) * dx;
        }
        for i in (0..m).rev() {
            xi_of[i] = xi_of[i + 1] + 0.5 * (vals[i + 1] + vals[i]) * dx;
        }
        let tail = |indices: Vec<usize>| -> Vec<TailSample> {
            indices
                .into_iter()
                .map(|i| TailSample {
                    x: g.x(i),
                    xi: xi_of[i],
                    v: self.value(i),
                    dv: self.deriv(i, 1),
                    d2v: self.deriv(i, 2),
                })
                .collect()
        };
        let inside = |i: usize| g.x(i).abs() <= self.window_end + 1e-12;
        let right: Vec<usize> = (0..g.n).filter(|&i| g.x(i) >= self.r0 && inside(i)).collect();
        let left: Vec<usize> = (0..g.n).rev().filter(|&i| g.x(i) <= -self.r0 && inside(i)).collect();
        classify_tails(&tail(right), &tail(left), self.eps, (self.r0, self.window_end))
    }

    /// Largest relative mismatch between the stored `V''` and a central
    /// difference of the stored `V` (interior nodes with `|V''|` above a floor).
    pub fn second_derivative_fd_audit(&self) -> f64 {
        let g = self.grid();
        let dx = g.dx();
        let scale = (0..g.n).map(|i| self.deriv(i, 2).abs()).fold(0.0, f64::max).max(1e-300);
        (1..g.n - 1)
            .filter(|&i| g.x(i).abs() <= self.window_end + 1e-12)
            .map(|i| {
                let fd = (self.value(i + 1) - 2.0 * self.value(i) + self.value(i - 1)) / (dx * dx);
                (fd - self.deriv(i, 2)).abs() / scale
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = Grid::new(2.0, 401).unwrap();
        assert!((g.dx() - 0.01).abs() < 1e-15);
        assert_eq!(g.x(0), -2.0);
        assert!((g.x(400) - 2.0).abs() < 1e-12);
        assert_eq!(g.nearest(0.004), 200);
    }

    #[test]
    fn cumulative_integral_of_polynomial_is_exact() {
        let g = Arc::new(Grid::new(1.0, 21).unwrap());
        let f = JetField::from_fn(g.clone(), |x| {
            let j = Jet::variable(x, 4);
            &j * &j
        });
        let c = f.cumulative_integral(10);
        for i in 0..g.n {
            let x = g.x(i);
            assert!((c[i].re - x * x * x / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_oscillator_is_class_k_on_window() {
        let p = Potential::shifted_oscillator(-3.0);
        let g = Arc::new(Grid::new(8.0, 1601).unwrap());
        let gp = GridPotential::from_potential(&p, g).unwrap();
        let r = gp.check_class_k_window();
        assert_eq!(r.verdict, crate::potential::KVerdict::Verified, "{r:?}");
        assert!(gp.second_derivative_fd_audit() < 1e-4);
    }
}
