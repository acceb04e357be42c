//! Turns a validated [`RunConfig`] into a sampled potential and a chain.

use std::sync::Arc;

use intertwine_core::chain::{ChainStep, FactorChain, KernelLadder};
use intertwine_core::fixtures;
use intertwine_core::grid::{Grid, GridPotential};
use intertwine_core::potential::Potential;
use intertwine_core::schrodinger::{solve_formal, solve_nonnormalizable_both, FormalFunction, Side};
use intertwine_core::{Error, Result, C64};

use crate::config::{parse_step, EditKind, RunConfig};

const DEFAULT_DX: f64 = 0.01;
const DEFAULT_XI: f64 = 25.0;
/// Type-I pairs push structure further out; the mixed fixture needs more tail.
const WIDE_XI: f64 = 40.0;

/// The continuous source potential of a run.
pub fn potential(cfg: &RunConfig) -> Result<Potential> {
    match (&cfg.fixture, &cfg.potential) {
        (Some(_), _) => Ok(fixtures::oscillator_potential()),
        (None, Some(spec)) => Potential::parse(spec, cfg.r0, cfg.eps),
        (None, None) => Err(Error::Config("no potential given".into())),
    }
}

pub fn grid(cfg: &RunConfig, p: &Potential) -> Result<Grid> {
    let g = &cfg.grid;
    let xi = g.xi.unwrap_or(if cfg.fixture.as_deref() == Some("mixed") { WIDE_XI } else { DEFAULT_XI });
    let x = match g.x {
        Some(x) => x,
        None => Grid::auto_half_width(p, xi)?,
    };
    match g.n {
        Some(n) => Grid::new(x, n),
        None => Grid::with_spacing(x, g.dx.unwrap_or(DEFAULT_DX)),
    }
}

pub fn grid_potential(cfg: &RunConfig) -> Result<Arc<GridPotential>> {
    let p = potential(cfg)?;
    let g = grid(cfg, &p)?;
    GridPotential::from_potential(&p, Arc::new(g))
}

pub fn chain(cfg: &RunConfig, gp: &Arc<GridPotential>) -> Result<FactorChain> {
    if let Some(name) = &cfg.fixture {
        return fixture_chain(name, gp);
    }
    let mut ladders = Vec::new();
    let mut steps = Vec::new();
    for (i, e) in cfg.ladder_edits().into_iter().enumerate() {
        let z = e.lambda.c64();
        let (top, default_steps) = match e.kind {
            EditKind::Kernel | EditKind::Minus => {
                let side = if e.kind == EditKind::Kernel { Side::Plus } else { Side::Minus };
                let top = ladder_top(gp, z, side, e.multiplicity)?;
                let step = if z.im != 0.0 { ChainStep::TypeI(i) } else { ChainStep::First(i) };
                (top, vec![step; e.multiplicity])
            }
            EditKind::Fused => {
                let phi = fixtures::eigen(gp, z)?;
                let st = if has_node(&phi) { vec![ChainStep::Second(i, i)] } else { vec![ChainStep::First(i); 2] };
                (fixtures::fused_pair(&phi)?, st)
            }
            EditKind::Growing => (solve_nonnormalizable_both(gp, z)?, vec![ChainStep::First(i)]),
        };
        ladders.push(KernelLadder::from_top(&top));
        steps.extend(default_steps);
    }
    if !cfg.steps.is_empty() {
        steps = cfg.steps.iter().map(|s| parse_step(s)).collect::<Result<_>>()?;
    }
    FactorChain::build(gp.clone(), ladders, steps)
}

fn ladder_top(gp: &Arc<GridPotential>, z: C64, side: Side, k: usize) -> Result<FormalFunction> {
    let mut f = solve_formal(gp, z, side, None)?;
    for _ in 1..k {
        f = solve_formal(gp, z, side, Some(Arc::new(f)))?;
    }
    Ok(f)
}

/// Sign change of the real part inside the trusted window.
fn has_node(phi: &FormalFunction) -> bool {
    let g = phi.potential.grid();
    let w = phi.potential.window_end;
    let vals = phi.values();
    let inside: Vec<f64> = (0..g.n).filter(|&i| g.x(i).abs() <= w).map(|i| vals[i].re).collect();
    let peak = inside.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    // ignore the decayed tails where the sign is noise
    let big: Vec<f64> = inside.into_iter().filter(|v| v.abs() > 1e-6 * peak).collect();
    big.windows(2).any(|w| w[0].signum() != w[1].signum())
}

pub fn fixture_chain(name: &str, gp: &Arc<GridPotential>) -> Result<FactorChain> {
    match name {
        "ground_deletion" => fixtures::ground_deletion(gp),
        "one_sided" => fixtures::one_sided(gp, fixtures::ONE_SIDED),
        "two_level" => fixtures::two_level(gp),
        "type_one" => fixtures::type_one(gp),
        "mixed" => fixtures::mixed(gp),
        "order_three" => fixtures::order_three(gp),
        "isospectral" => fixtures::isospectral(gp),
        "type_three" => fixtures::type_three(gp),
        "dressed" => fixtures::dressed(gp),
        other => Err(Error::Config(format!("unknown fixture `{other}`"))),
    }
}
