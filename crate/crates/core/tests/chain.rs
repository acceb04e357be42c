use intertwine_core::chain::{canonical_basis, inverse_series, ChainStep, FactorChain, KernelLadder};
use intertwine_core::darboux::FactorKind;
use intertwine_core::fixtures;
use intertwine_core::potential::KVerdict;
use intertwine_core::schrodinger::{second_solution, Normalizability};
use intertwine_core::testfns::test_functions;
use intertwine_core::{Error, C64};

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[test]
fn inverse_series_matches_direct_expansion() {
    // 1 / ((E - 1)(E - 3)) at E = 0: 1/3 + 4/9 t + 13/27 t^2
    let d = inverse_series(re(0.0), &[re(1.0), re(3.0)], 2);
    let expect = [1.0 / 3.0, 4.0 / 9.0, 13.0 / 27.0];
    for (a, b) in d.iter().zip(expect) {
        assert!((a - b).norm() < 1e-14);
    }
}

#[test]
fn two_level_chain_annihilates_its_kernel_and_factors_the_polynomial() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let c = fixtures::two_level(&gp).unwrap();
    assert_eq!(c.order(), 2);
    assert_eq!(c.kinds(), vec![FactorKind::FirstOrder, FactorKind::FirstOrder]);
    assert!(c.kernel_residual() < 1e-6);
    let tests = test_functions(gp.grid(), 10, 5);
    let tt = test_functions(c.target.grid(), 10, 6);
    let rep = c.product_identity_check(&tests, &tt);
    assert!(rep.max_residual() < 1e-5, "{rep:?}");
    assert_eq!(c.target.check_class_k_window().verdict, KVerdict::Verified);
    let values: Vec<f64> = c.spectrum.entries.iter().map(|e| e.lambda.0).collect();
    assert_eq!(values, vec![-2.0, -4.0]);
}

#[test]
fn transposed_kernel_is_annihilated_by_the_transpose() {
    let gp = fixtures::oscillator(0.01).unwrap();
    for c in [fixtures::two_level(&gp).unwrap(), fixtures::isospectral(&gp).unwrap()] {
        let dual = c.transposed_kernel().unwrap();
        assert_eq!(dual.iter().map(|l| l.len()).sum::<usize>(), c.order());
        for l in &dual {
            for f in &l.functions {
                let img = c.apply_transpose_field(&f.field);
                assert!(img.l2_norm() < 1e-6 * f.field.l2_norm(), "{}", img.l2_norm() / f.field.l2_norm());
            }
        }
    }
}

#[test]
fn isospectral_chain_keeps_one_jordan_block() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let c = fixtures::isospectral(&gp).unwrap();
    assert_eq!(c.spectrum.entries.len(), 1);
    assert_eq!(c.spectrum.entries[0].jordan_blocks, vec![2]);
    assert!(c.is_minimal());
    let basis = c.canonical_basis().unwrap();
    assert_eq!((basis[0].k_plus, basis[0].k_minus), (1, 1));
    let rep = c.product_identity_check(&test_functions(gp.grid(), 10, 1), &test_functions(c.target.grid(), 10, 2));
    assert!(rep.max_residual() < 1e-5, "{rep:?}");
}

#[test]
fn type_three_factor_accepts_a_kernel_with_a_zero() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let c = fixtures::type_three(&gp).unwrap();
    assert_eq!(c.kinds(), vec![FactorKind::TypeIII]);
    assert!(c.target.v.is_finite());
    assert!(c.kernel_residual() < 1e-6);
}

#[test]
fn complex_chains_have_real_targets() {
    let gp = fixtures::oscillator(0.01).unwrap();
    for c in [fixtures::type_one(&gp).unwrap(), fixtures::mixed(&gp).unwrap(), fixtures::order_three(&gp).unwrap()] {
        assert_eq!(c.target.max_imag(), 0.0);
        assert!(c.kernel_residual() < 1e-6);
        assert!(c.spectrum.pairs().iter().all(|p| p.partner.is_some()));
    }
    let m = fixtures::mixed(&gp).unwrap();
    assert_eq!(m.order(), 5);
    assert_eq!(m.spectrum.multiplicity(fixtures::type_one_value()), 2);
}

#[test]
fn dressed_chain_splits_off_a_polynomial() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let c = fixtures::dressed(&gp).unwrap();
    assert_eq!(c.spectrum.entries[0].jordan_blocks, vec![2, 1]);
    assert!(!c.is_minimal());
    let m = c.minimization();
    assert_eq!(m.p_roots, vec![(-2.0, 0.0)]);
    assert_eq!(m.core, vec![((-2.0, 0.0), 1)]);
    assert!(matches!(c.transposed_kernel(), Err(Error::Audit(_))));
}

#[test]
fn prefix_and_suffix_recompose_the_chain() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let c = fixtures::two_level(&gp).unwrap();
    let head = c.prefix(1).unwrap();
    let tail = c.suffix(1).unwrap();
    assert_eq!(head.order() + tail.order(), c.order());
    assert_eq!(tail.steps, vec![ChainStep::First(0)]);
    let f = &test_functions(gp.grid(), 10, 9)[0];
    let a = c.apply_field(f);
    let b = tail.apply_field(&head.apply_field(f));
    assert!(a.sub(&b).l2_norm() <= 1e-14 * a.l2_norm());
}

#[test]
fn unconsumed_or_overconsumed_ladders_are_rejected() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let phi = fixtures::eigen(&gp, re(-2.0)).unwrap();
    let l = vec![KernelLadder::from_top(&phi)];
    assert!(matches!(FactorChain::build(gp.clone(), l.clone(), vec![]), Err(Error::Spectrum(_))));
    let r = FactorChain::build(gp.clone(), l, vec![ChainStep::First(0), ChainStep::First(0)]);
    assert!(matches!(r, Err(Error::Spectrum(_))));
}

#[test]
fn nonnormalizable_before_normalizable_breaks_the_basis() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let phi = fixtures::eigen(&gp, re(-2.0)).unwrap();
    let chi = second_solution(&gp, &phi).unwrap();
    assert_eq!(chi.norm_plus, Some(Normalizability::Nonnormalizable));
    let bad = KernelLadder { lambda: re(-2.0), functions: vec![chi, phi] };
    assert!(matches!(canonical_basis(&[bad]), Err(Error::BasisOrder(_))));
}

// The type-I ladder is tiny in the bulk next to its left tail once the
// one-sided factor acts first; the image must not be rebuilt from the
// center on that side.
#[test]
fn step_order_does_not_change_the_operator() {
    let gp = fixtures::oscillator_with_suppression(0.01, 40.0).unwrap();
    let a = fixtures::mixed(&gp).unwrap();
    let b = a.reordered(vec![ChainStep::First(0), ChainStep::TypeI(1), ChainStep::TypeI(1)]).unwrap();
    assert!(b.kernel_residual() < 1e-6, "kernel residual {:.3e}", b.kernel_residual());
    let diff = intertwine_core::factorize::operator_residual(&gp, |f| a.apply_field(f), |f| b.apply_field(f));
    assert!(diff < 1e-8, "orderings differ by {diff:.3e}");
    let g = gp.grid();
    let w = a.target.window_end.min(b.target.window_end);
    let gap = (0..g.n).filter(|&i| g.x(i).abs() <= w).map(|i| (a.target.value(i) - b.target.value(i)).abs() / (1.0 + a.target.value(i).abs())).fold(0.0, f64::max);
    assert!(gap < 1e-6, "targets differ by {gap:.3e} (relative) on the window");
}
