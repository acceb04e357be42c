//! Reference chains on the shifted oscillator `V = x^2 - 3`, whose levels
//! are `-2, 0, 2, ...`. Used by the tests, the demo run and the acceptance
//! suite.

use std::sync::Arc;

use crate::chain::{extend_ladder, ChainStep, FactorChain, KernelLadder};
use crate::error::{Error, Result};
use crate::grid::{l2_norm, Grid, GridPotential};
use crate::potential::Potential;
use crate::schrodinger::{second_solution, solve_formal, wronskian, FormalFunction, Side};
use crate::C64;

pub const OSCILLATOR_SHIFT: f64 = -3.0;
pub const GROUND: f64 = -2.0;
pub const FIRST_EXCITED: f64 = 0.0;
pub const ONE_SIDED: f64 = -4.0;

pub fn type_one_value() -> C64 {
    C64::new(-1.0, 1.0)
}

pub fn oscillator_potential() -> Potential {
    Potential::shifted_oscillator(OSCILLATOR_SHIFT)
}

/// The oscillator sampled on the automatic window with spacing `dx`.
pub fn oscillator(dx: f64) -> Result<Arc<GridPotential>> {
    oscillator_with_suppression(dx, 25.0)
}

/// Wider window: the window reaches `xi = int sqrt|V|` of `target_xi` past R0.
/// Chains with complex type-I steps push structure further out and need it.
pub fn oscillator_with_suppression(dx: f64, target_xi: f64) -> Result<Arc<GridPotential>> {
    let p = oscillator_potential();
    let x = Grid::auto_half_width(&p, target_xi)?;
    GridPotential::from_potential(&p, Arc::new(Grid::with_spacing(x, dx)?))
}

/// Eigenfunction normalizable at `+inf` (a bound state at the levels).
pub fn eigen(gp: &Arc<GridPotential>, lambda: C64) -> Result<FormalFunction> {
    solve_formal(gp, lambda, Side::Plus, None)
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Top of a Jordan pair `[phi, phi_1]` with `W(phi, phi_1) = ||phi||^2 - int_0^x phi^2`,
/// which has no zeros when `phi` is a bound state. The associated function
/// is nonnormalizable at both ends.
pub fn fused_pair(phi: &FormalFunction) -> Result<FormalFunction> {
    let gp = phi.potential.clone();
    let ext = extend_ladder(phi, 1)?;
    let chi = second_solution(&gp, phi)?;
    let m = gp.grid().nearest(0.0);
    let w0 = wronskian(&phi.field, &chi.field).jets[m].value();
    let beta = re(l2_norm(&phi.values(), gp.grid().dx()).powi(2)) / w0;
    let y: Vec<(C64, C64)> =
        ext.samples().iter().zip(chi.samples()).map(|(a, b)| (a.0 + beta * b.0, a.1 + beta * b.1)).collect();
    let parent = ext.parent.clone().ok_or_else(|| Error::Audit("extension lost its parent".into()))?;
    FormalFunction::from_samples(gp, phi.lambda, Some(parent), &y)
}

fn single(gp: &Arc<GridPotential>, top: FormalFunction, steps: Vec<ChainStep>) -> Result<FactorChain> {
    FactorChain::build(gp.clone(), vec![KernelLadder::from_top(&top)], steps)
}

/// Deletes the ground state: `V -> x^2 - 1`.
pub fn ground_deletion(gp: &Arc<GridPotential>) -> Result<FactorChain> {
    single(gp, eigen(gp, re(GROUND))?, vec![ChainStep::First(0)])
}

/// Adds a level at `lambda` below the ground state from a one-sided kernel.
pub fn one_sided(gp: &Arc<GridPotential>, lambda: f64) -> Result<FactorChain> {
    single(gp, eigen(gp, re(lambda))?, vec![ChainStep::First(0)])
}

/// Ground-state deletion followed by the one-sided kernel at `-4`.
pub fn two_level(gp: &Arc<GridPotential>) -> Result<FactorChain> {
    let ladders = vec![
        KernelLadder::from_top(&eigen(gp, re(GROUND))?),
        KernelLadder::from_top(&eigen(gp, re(ONE_SIDED))?),
    ];
    FactorChain::build(gp.clone(), ladders, vec![ChainStep::First(0), ChainStep::First(1)])
}

/// A single type-I factor at `-1 + i`.
pub fn type_one(gp: &Arc<GridPotential>) -> Result<FactorChain> {
    single(gp, eigen(gp, type_one_value())?, vec![ChainStep::TypeI(0)])
}

/// One real value (`-4`) and one conjugate pair of multiplicity two: `N = 5`.
pub fn mixed(gp: &Arc<GridPotential>) -> Result<FactorChain> {
    let phi = Arc::new(eigen(gp, type_one_value())?);
    let top = solve_formal(gp, type_one_value(), Side::Plus, Some(phi))?;
    let ladders = vec![KernelLadder::from_top(&eigen(gp, re(ONE_SIDED))?), KernelLadder::from_top(&top)];
    FactorChain::build(gp.clone(), ladders, vec![ChainStep::TypeI(1), ChainStep::TypeI(1), ChainStep::First(0)])
}

/// Third-order chain: the one-sided level at `-4`, then a type-I pair.
pub fn order_three(gp: &Arc<GridPotential>) -> Result<FactorChain> {
    let ladders = vec![
        KernelLadder::from_top(&eigen(gp, re(ONE_SIDED))?),
        KernelLadder::from_top(&eigen(gp, type_one_value())?),
    ];
    FactorChain::build(gp.clone(), ladders, vec![ChainStep::First(0), ChainStep::TypeI(1)])
}

/// Isospectral chain of two first-order factors at the ground level.
pub fn isospectral(gp: &Arc<GridPotential>) -> Result<FactorChain> {
    let top = fused_pair(&eigen(gp, re(GROUND))?)?;
    single(gp, top, vec![ChainStep::First(0), ChainStep::First(0)])
}

/// Type-III factor at the first excited level (whose eigenfunction has a zero).
pub fn type_three(gp: &Arc<GridPotential>) -> Result<FactorChain> {
    let top = fused_pair(&eigen(gp, re(FIRST_EXCITED))?)?;
    single(gp, top, vec![ChainStep::Second(0, 0)])
}

/// A chain equal to `q o (h + 2)` up to sign: two Jordan blocks `[2, 1]` at `-2`.
pub fn dressed(gp: &Arc<GridPotential>) -> Result<FactorChain> {
    let phi = eigen(gp, re(GROUND))?;
    let ladders = vec![KernelLadder::from_top(&fused_pair(&phi)?), KernelLadder::from_top(&second_solution(gp, &phi)?)];
    FactorChain::build(gp.clone(), ladders, vec![ChainStep::First(0), ChainStep::First(1), ChainStep::First(0)])
}
