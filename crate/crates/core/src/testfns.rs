//! Seeded smooth, rapidly decaying test functions for operator identities.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Grid, JetField};
use crate::potential::Expr;

pub const TEST_FN_ORDER: usize = 24;

/// `(1 + a1 x + a2 x^2 + a3 x^3) exp(-b (x - x0)^2)` with `b` in `[0.3, 1]`,
/// `x0` in `[-1, 1]` and `a_i` in `[-1, 1]`.
pub fn test_expr(rng: &mut impl Rng) -> Expr {
    let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = rng.gen_range(0.3..1.0);
    let x0 = rng.gen_range(-1.0..1.0);
    let poly = Expr::Poly(vec![1.0, a[0], a[1], a[2]]);
    // -b (x - x0)^2 = -b x0^2 + 2 b x0 x - b x^2
    let arg = Expr::Poly(vec![-b * x0 * x0, 2.0 * b * x0, -b]);
    Expr::mul(poly, Expr::exp(arg))
}

pub fn test_functions(grid: &Arc<Grid>, count: usize, seed: u64) -> Vec<JetField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let e = test_expr(&mut rng);
            JetField::from_fn(grid.clone(), |x| e.jet(x, TEST_FN_ORDER))
        })
        .collect()
}
