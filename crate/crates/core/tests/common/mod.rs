#![allow(dead_code)]

use std::sync::Arc;

use intertwine_core::grid::{Grid, GridPotential};
use intertwine_core::potential::Potential;
use intertwine_core::C64;

pub fn sampled(p: &Potential, dx: f64) -> Arc<GridPotential> {
    let x = Grid::auto_half_width(p, 25.0).unwrap();
    let g = Arc::new(Grid::with_spacing(x, dx).unwrap());
    GridPotential::from_potential(p, g).unwrap()
}

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Largest `|a_i - b_i|` over nodes with `|x| <= r`.
pub fn max_diff_within(grid: &Grid, a: &[C64], b: &[C64], r: f64) -> f64 {
    (0..grid.n)
        .filter(|&i| grid.x(i).abs() <= r)
        .map(|i| (a[i] - b[i]).norm())
        .fold(0.0, f64::max)
}
