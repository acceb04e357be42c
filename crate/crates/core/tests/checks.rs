use std::sync::Arc;

use intertwine_core::grid::{Grid, GridPotential};
use intertwine_core::potential::Potential;
use intertwine_core::schrodinger::checks::{
    asymptotic_match, asymptotic_match_with, counterexample_eigenfunction, counterexample_wronskian,
};
use intertwine_core::schrodinger::seed::xi_lambda;
use intertwine_core::schrodinger::Side;
use intertwine_core::C64;

#[test]
fn counterexample_wronskian_matches_closed_form() {
    let r = counterexample_wronskian(1.0, 1.0, 1.0, (-2.0, 6.0), 0.0025).unwrap();
    assert_eq!(r.lambda, (0.75, -1.0));
    assert!(r.sup_error < 1e-8, "{}", r.sup_error);
    assert!(r.pointwise_error < 1e-8, "{}", r.pointwise_error);
    assert!(r.root.unwrap().abs() < 1e-6);
    // tends to 2 i alpha, not to zero
    assert!(r.w_at_end > 1.9 && r.tail_nondecreasing);
}

#[test]
fn counterexample_eigenfunction_decays_at_plus_infinity() {
    let (_, a, _) = counterexample_eigenfunction(1.0, 1.0, 1.0, 4.0);
    let (_, b, _) = counterexample_eigenfunction(1.0, 1.0, 1.0, 8.0);
    assert!((a.norm() - (-2.0f64).exp()).abs() < 1e-12);
    assert!(b.norm() < a.norm() / 7.0);
}

#[test]
fn other_parameters_follow_the_same_formula() {
    let r = counterexample_wronskian(2.0, 0.5, 1.5, (-3.0, 5.0), 0.0025).unwrap();
    assert!(r.sup_error < 1e-8, "{}", r.sup_error);
    // 2 i (a - d e^{-bx}) vanishes at x = ln(d / a) / b
    let x0 = (1.5f64 / 2.0).ln() / 0.5;
    assert!((r.root.unwrap() - x0).abs() < 1e-6);
}

#[test]
fn decaying_solution_approaches_its_leading_term() {
    let p = Potential::shifted_oscillator(0.0);
    let a = asymptotic_match(&p, C64::new(-1.0, 0.0), Side::Plus, (4.0, 8.0), 24.0, 0.01).unwrap();
    assert!(a.bounded, "{} vs {}", a.inner_max, a.outer_max);
    assert!(a.samples.iter().all(|s| s.2 < 0.01));
    // the error itself shrinks
    assert!(a.samples.last().unwrap().2 < 0.5 * a.samples[0].2);
}

#[test]
fn left_tail_is_checked_the_same_way() {
    let p = Potential::shifted_oscillator(0.0);
    let a = asymptotic_match(&p, C64::new(-1.0, 0.0), Side::Minus, (-8.0, -4.0), 24.0, 0.01).unwrap();
    assert!(a.bounded, "{} vs {}", a.inner_max, a.outer_max);
}

#[test]
fn leading_term_without_the_prefactor_is_rejected() {
    let p = Potential::shifted_oscillator(0.0);
    let gp = GridPotential::from_potential(&p, Arc::new(Grid::with_spacing(24.0, 0.01).unwrap())).unwrap();
    let lambda = C64::new(-1.0, 0.0);
    let vf = |x: f64| p.expr().eval(x);
    let bare = |x: f64| Ok((-xi_lambda(&vf, p.r0, lambda, Side::Plus, x)).exp());
    let a = asymptotic_match_with(&gp, &p, lambda, Side::Plus, (4.0, 8.0), bare).unwrap();
    assert!(!a.bounded, "{} vs {}", a.inner_max, a.outer_max);
}
