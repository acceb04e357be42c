use intertwine_core::factorize::{
    extract_first_order_bottom, extract_type_i, permute_lemma10, permute_lemma9, theorem2_factorize, Group,
    IDENTITY_TOL,
};
use intertwine_core::fixtures;
use intertwine_core::{Error, C64};

const T2: [Group; 3] = [Group::Right, Group::Middle, Group::Left];

fn assert_passed(plan: &intertwine_core::factorize::FactorizationPlan) {
    for c in &plan.certificates {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}

#[test]
fn dressed_factorization_of_ground_state_deletion() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let plan = theorem2_factorize(&fixtures::ground_deletion(&gp).unwrap()).unwrap();
    assert_passed(&plan);
    let p = plan.dressing.as_ref().unwrap();
    assert_eq!((p.n_lower_source, p.n_upper_source, p.n_lower_target, p.n_upper_target), (1, 1, 0, 0));
    assert_eq!(p.degree, 0);
    assert_eq!(plan.group_sizes(T2), (1, 0, 0));
}

#[test]
fn dressed_factorization_of_one_sided_level() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let plan = theorem2_factorize(&fixtures::one_sided(&gp, -4.0).unwrap()).unwrap();
    assert_passed(&plan);
    assert_eq!(plan.dressing.as_ref().unwrap().degree, 0);
    assert_eq!(plan.group_sizes(T2), (0, 1, 0));
}

#[test]
fn dressed_factorization_of_isospectral_pair() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let plan = theorem2_factorize(&fixtures::isospectral(&gp).unwrap()).unwrap();
    assert_passed(&plan);
    assert_eq!(plan.group_sizes(T2), (1, 0, 1));
}

#[test]
fn dressed_factorization_with_a_polynomial_root() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let plan = theorem2_factorize(&fixtures::type_three(&gp).unwrap()).unwrap();
    assert_passed(&plan);
    let p = plan.dressing.as_ref().unwrap();
    assert_eq!(p.degree, 1);
    assert!((p.roots[0].energy + 2.0).abs() < 1e-6);
    assert_eq!(plan.group_sizes(T2), (2, 0, 2));
}

const T3: [Group; 3] = [Group::J1, Group::J2, Group::J3];

#[test]
fn complete_factorization_of_the_mixed_chain() {
    // the final target's wells reach |x| ~ 4.7, so the tail window needs room
    let gp = fixtures::oscillator_with_suppression(0.01, 40.0).unwrap();
    let plan = intertwine_core::factorize::theorem3_factorize(&fixtures::mixed(&gp).unwrap()).unwrap();
    assert_passed(&plan);
    assert_eq!((plan.counts.j1, plan.counts.j2, plan.counts.j3), (2, 1, 0));
    assert_eq!(plan.group_sizes(T3), (2, 1, 0));
    assert_eq!(plan.counts.k_above, 0);
}

#[test]
fn complete_factorization_fuses_levels_above_the_ground() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let plan = intertwine_core::factorize::theorem3_factorize(&fixtures::type_three(&gp).unwrap()).unwrap();
    assert_passed(&plan);
    assert_eq!((plan.counts.j1, plan.counts.j2, plan.counts.j3), (0, 0, 1));
    assert_eq!(plan.counts.k_above, 1);
}

#[test]
fn complete_factorization_below_the_ground_is_all_first_order() {
    let gp = fixtures::oscillator(0.01).unwrap();
    for c in [fixtures::two_level(&gp).unwrap(), fixtures::isospectral(&gp).unwrap()] {
        let plan = intertwine_core::factorize::theorem3_factorize(&c).unwrap();
        assert_passed(&plan);
        assert_eq!(plan.counts.j3, 0);
        assert_eq!(plan.counts.j2, c.order());
    }
}

#[test]
fn type_one_extraction() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let c = fixtures::type_one(&gp).unwrap();
    let x = extract_type_i(&c, fixtures::type_one_value()).unwrap();
    assert!(x.remainder.is_empty());
    assert!(x.residual < 1e-12);

    let c = fixtures::order_three(&gp).unwrap();
    let x = extract_type_i(&c, fixtures::type_one_value().conj()).unwrap();
    assert_eq!(x.remainder.order(), 1);
    assert_eq!(x.remainder.factors[0].lambdas(), vec![C64::new(-4.0, 0.0)]);
    assert!(x.residual < IDENTITY_TOL, "{}", x.residual);
    assert!(x.intermediate_class_k);
    assert_eq!(x.factor.target.max_imag(), 0.0);
    assert!(matches!(extract_type_i(&c, C64::new(-3.0, 1.0)), Err(Error::Spectrum(_))));
}

#[test]
fn first_order_extraction_below_the_target_ground() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let c = fixtures::two_level(&gp).unwrap();
    let x = extract_first_order_bottom(&c).unwrap();
    assert_eq!(x.factor.lambdas(), vec![C64::new(-4.0, 0.0)]);
    assert!(x.residual < IDENTITY_TOL, "{}", x.residual);
    assert!(x.intermediate_class_k);
    assert!(!x.factor.kernel[0].is_normalizable_both());

    let c = fixtures::ground_deletion(&gp).unwrap();
    let x = extract_first_order_bottom(&c).unwrap();
    assert!(x.factor.kernel[0].is_normalizable_both());
}

#[test]
fn first_order_extraction_rejects_levels_above_the_ground() {
    let gp = fixtures::oscillator(0.01).unwrap();
    // the type-III target keeps the level -2 below the chain value 0
    let c = fixtures::type_three(&gp).unwrap();
    assert!(matches!(extract_first_order_bottom(&c), Err(Error::Ordering(_))));
}

#[test]
fn first_order_swap_on_the_oscillator() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let c = fixtures::two_level(&gp).unwrap();
    let (p11, k11) = (&c.factors[0], &c.factors[1]);
    let s = permute_lemma9(p11, k11).unwrap();
    assert!(s.identity_residual < 1e-6, "{}", s.identity_residual);
    assert!(s.h2_residual < 1e-5, "{}", s.h2_residual);
    assert_eq!(s.p12.lambdas(), vec![C64::new(-4.0, 0.0)]);
    assert!((s.k12.lambdas()[0].re + 2.0).abs() < 1e-9);
    assert!(s.k12.kernel[0].is_normalizable_both());
    assert!(s.intermediate_class_k);
    assert!(s.end_potential_diff < 1e-5, "{}", s.end_potential_diff);
}

#[test]
fn third_order_split_on_the_order_three_chain() {
    let gp = fixtures::oscillator(0.01).unwrap();
    let c = fixtures::order_three(&gp).unwrap();
    let s = permute_lemma10(&c, None).unwrap();
    assert!(s.residual < IDENTITY_TOL, "{}", s.residual);
    assert!(s.psi_ratio.unwrap() > 0.0);
    assert_eq!(s.k1_annihilates_psi, Some(true));
    assert!(s.backmap_residual.unwrap() < IDENTITY_TOL, "{:?}", s.backmap_residual);
    assert_eq!(s.kernels_share_normalizability, Some(true));
    assert!(s.spectra_preserved);
    assert!(s.intermediates_class_k);
    assert!(matches!(permute_lemma10(&c, Some(-1.0)), Err(Error::Ordering(_))));
}
