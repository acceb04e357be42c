use std::sync::{Arc, OnceLock};

use intertwine_core::analysis::{
    chain_bases, corollary_audit, index_report, index_report_with, kernel_membership, BoundInventory, LadderPair,
};
use intertwine_core::chain::FactorChain;
use intertwine_core::grid::GridPotential;
use intertwine_core::{fixtures, Error, C64};
use proptest::prelude::*;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn grid() -> Arc<GridPotential> {
    fixtures::oscillator(0.01).unwrap()
}

#[test]
fn ground_state_deletion_balances_at_the_deleted_level() {
    let c = fixtures::ground_deletion(&grid()).unwrap();
    let r = index_report(&c, re(fixtures::GROUND)).unwrap();
    assert_eq!((r.nu_plus, r.n_plus, r.nu_minus, r.n_minus, r.n0), (1, 1, 0, 0, 0));
    assert!(r.balanced && !r.zero_branch);
    assert_eq!((r.lhs(), r.rhs()), (0, 0));
}

#[test]
fn values_off_the_spectrum_count_nothing() {
    let c = fixtures::ground_deletion(&grid()).unwrap();
    let r = index_report(&c, re(-3.3)).unwrap();
    assert_eq!((r.nu_plus, r.n_plus, r.nu_minus, r.n_minus, r.n0), (0, 0, 0, 0, 0));
    assert!(r.holds());
}

#[test]
fn one_sided_kernel_takes_the_zero_branch() {
    let c = fixtures::one_sided(&grid(), fixtures::ONE_SIDED).unwrap();
    let r = index_report(&c, re(fixtures::ONE_SIDED)).unwrap();
    assert_eq!(r.n0, 1);
    assert!(r.zero_branch && r.holds());
    assert_eq!((r.nu_plus, r.nu_minus, r.n_plus, r.n_minus), (0, 0, 0, 0));
}

#[test]
fn positive_real_values_are_rejected() {
    let c = fixtures::ground_deletion(&grid()).unwrap();
    assert!(matches!(index_report(&c, re(0.5)), Err(Error::Domain(_))));
}

#[test]
fn minimizable_chains_are_rejected() {
    let c = fixtures::dressed(&grid()).unwrap();
    assert!(matches!(chain_bases(&c), Err(Error::Domain(_))));
}

#[test]
fn bound_states_in_the_kernel_exactly_when_listed() {
    let gp = grid();
    let deletion = fixtures::ground_deletion(&gp).unwrap();
    let inv = BoundInventory::for_chain(&deletion).unwrap();
    let ground = &inv.source[0].1;
    assert!(kernel_membership(&deletion, ground).unwrap());
    // the excited state and the target's states are not annihilated
    assert!(!kernel_membership(&deletion, &inv.source[1].1).unwrap());
    for (_, psi) in &inv.target {
        assert!(!kernel_membership(&deletion, psi).unwrap());
    }

    let other = fixtures::one_sided(&gp, fixtures::ONE_SIDED).unwrap();
    assert!(!kernel_membership(&other, ground).unwrap());

    // q o (h + 2): the polynomial part annihilates the ground state
    let dressed = fixtures::dressed(&gp).unwrap();
    assert!(dressed.spectrum.contains(re(fixtures::GROUND)));
    assert!(kernel_membership(&dressed, ground).unwrap());
}

#[test]
fn kernel_membership_needs_a_bound_state() {
    let gp = grid();
    let c = fixtures::ground_deletion(&gp).unwrap();
    let f = fixtures::eigen(&gp, re(fixtures::ONE_SIDED)).unwrap();
    assert!(matches!(kernel_membership(&c, &f), Err(Error::Domain(_))));
}

#[test]
fn structural_audits_pass_on_every_nonminimizable_fixture() {
    let gp = grid();
    let wide = fixtures::oscillator_with_suppression(0.01, 40.0).unwrap();
    let chains: Vec<(&str, FactorChain)> = vec![
        ("ground deletion", fixtures::ground_deletion(&gp).unwrap()),
        ("one-sided", fixtures::one_sided(&gp, fixtures::ONE_SIDED).unwrap()),
        ("two-level", fixtures::two_level(&gp).unwrap()),
        ("type I", fixtures::type_one(&gp).unwrap()),
        ("mixed", fixtures::mixed(&wide).unwrap()),
        ("order three", fixtures::order_three(&gp).unwrap()),
        ("isospectral", fixtures::isospectral(&gp).unwrap()),
        ("type III", fixtures::type_three(&gp).unwrap()),
    ];
    for (name, c) in &chains {
        let t = corollary_audit(c).unwrap();
        assert!(t.passed(), "{name}:\n{}", t.render());
        assert!(t.rows.len() >= 10);
    }
}

#[test]
fn type_one_ladders_are_one_sided_on_opposite_ends() {
    let c = fixtures::type_one(&grid()).unwrap();
    let bases = chain_bases(&c).unwrap();
    assert_eq!(bases.len(), 2);
    for p in &bases {
        let (m, q) = (p.minus_flags[0], p.plus_flags[0]);
        assert!(m.0 != m.1 && q.0 != q.1 && m != q);
    }
}

#[test]
fn type_three_transpose_is_a_jordan_pair() {
    let c = fixtures::type_three(&grid()).unwrap();
    let bases = chain_bases(&c).unwrap();
    assert_eq!(bases[0].plus.len(), 2);
    assert_eq!(bases[0].plus.functions[1].order, 1);
    // eigenfunctions bound on both sides, associated functions on neither
    assert_eq!(bases[0].minus_flags, vec![(true, true), (false, false)]);
    assert_eq!(bases[0].plus_flags, vec![(true, true), (false, false)]);
}

struct Shared {
    bases: Vec<LadderPair>,
    inv: BoundInventory,
}

fn shared() -> &'static Shared {
    static S: OnceLock<Shared> = OnceLock::new();
    S.get_or_init(|| {
        let c = fixtures::two_level(&grid()).unwrap();
        Shared { bases: chain_bases(&c).unwrap(), inv: BoundInventory::for_chain(&c).unwrap() }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn balance_holds_off_the_real_axis(re_part in -6.0f64..3.0, im_part in 0.01f64..3.0) {
        let s = shared();
        let r = index_report_with(&s.bases, &s.inv, C64::new(re_part, im_part)).unwrap();
        prop_assert!(r.holds());
        prop_assert_eq!((r.nu_plus, r.nu_minus), (0, 0));
    }

    #[test]
    fn balance_holds_on_the_negative_axis(e in -6.0f64..0.0) {
        let s = shared();
        let r = index_report_with(&s.bases, &s.inv, re(e)).unwrap();
        prop_assert!(r.holds());
    }
}
