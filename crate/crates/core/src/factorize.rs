//! Factorization of chains into first-order and irreducible second-order
//! factors: extraction of a type-I or a bottom first-order factor, the two
//! permutation moves, and the dressed (all first-order) and complete
//! factorization drivers.
//!
//! The drivers work on chains this crate assembled, so the kernel ladders
//! are known and an ordering is realized by rebuilding the chain with its
//! steps rearranged. Every emitted plan is checked end to end against the
//! operator it claims to factor.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::{same_lambda, ChainRecord, ChainStep, FactorChain, KernelLadder};
use crate::darboux::{find_zero, DarbouxFactor, FactorKind};
use crate::error::{Error, Result};
use crate::grid::{GridPotential, JetField};
use crate::potential::KVerdict;
use crate::schrodinger::{find_bound_states, second_solution, FormalFunction, Normalizability, Side};
use crate::testfns::test_functions;
use crate::C64;

/// Bound energies closer than this to a chain eigenvalue count as equal.
pub const LEVEL_MATCH_TOL: f64 = 1e-6;

/// Tolerance of the end-to-end and permutation identity checks.
pub const IDENTITY_TOL: f64 = 1e-5;

pub const TEST_COUNT: usize = 10;
pub const TEST_SEED: u64 = 20;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Bound states of `gp` with energies not exceeding `e_max`.
pub fn bound_states_upto(gp: &Arc<GridPotential>, e_max: f64) -> Result<Vec<(f64, FormalFunction)>> {
    let e_min = gp.min_value() - 1.0;
    if e_max <= e_min {
        return Ok(Vec::new());
    }
    find_bound_states(gp, e_min, e_max + LEVEL_MATCH_TOL)
}

pub fn ground_energy(gp: &Arc<GridPotential>, e_max: f64) -> Result<Option<f64>> {
    Ok(bound_states_upto(gp, e_max)?.first().map(|b| b.0))
}

pub(crate) fn matches(e: f64, lambda: C64) -> bool {
    lambda.im == 0.0 && (e - lambda.re).abs() <= LEVEL_MATCH_TOL * (1.0 + e.abs())
}

/// Whether an end passes the class-K window check.
fn class_k_ok(gp: &GridPotential) -> bool {
    gp.v.is_finite() && gp.check_class_k_window().verdict == KVerdict::Verified
}

/// Largest relative difference `||a(f) - b(f)|| / ||a(f)||` over the standard test functions.
pub fn operator_residual<A, B>(gp: &GridPotential, a: A, b: B) -> f64
where
    A: Fn(&JetField) -> JetField,
    B: Fn(&JetField) -> JetField,
{
    test_functions(gp.grid(), TEST_COUNT, TEST_SEED)
        .iter()
        .map(|f| {
            let x = a(f);
            x.sub(&b(f)).l2_norm() / x.l2_norm()
        })
        .fold(0.0, f64::max)
}

/// `P(h) f = prod (E_i - h) f`.
pub fn apply_dressing(gp: &GridPotential, roots: &[f64], f: &JetField) -> JetField {
    roots.iter().fold(f.clone(), |g, &e| g.apply_hamiltonian(&gp.v, re(e)).scale(re(-1.0)))
}

/// Root of the dressing polynomial: a bound energy below `lambda_1` outside the chain spectrum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DressingRoot {
    pub energy: f64,
    /// Index of the level among the source bound states.
    pub source_index: usize,
    /// Index of the level among the target bound states.
    pub target_index: usize,
}

/// `P(E) = prod (E_i - E)` over the bound energies below `lambda_1` that are
/// not chain eigenvalues, together with the level counts it is built from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DressingPolynomial {
    pub roots: Vec<DressingRoot>,
    pub degree: usize,
    /// Bound states of the source with energy `<= lambda_1`.
    pub n_lower_source: usize,
    /// Bound states of the target with energy `<= lambda_1`.
    pub n_lower_target: usize,
    /// Bound states of the source whose energy is a chain eigenvalue.
    pub n_upper_source: usize,
    /// Bound states of the target whose energy is a chain eigenvalue.
    pub n_upper_target: usize,
    pub source_levels: Vec<f64>,
    pub target_levels: Vec<f64>,
}

impl DressingPolynomial {
    pub fn energies(&self) -> Vec<f64> {
        self.roots.iter().map(|r| r.energy).collect()
    }

    pub fn eval(&self, e: f64) -> f64 {
        self.roots.iter().map(|r| r.energy - e).product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// Kernel normalizable at both ends (dressed factorization, first factors).
    Right,
    /// Kernel normalizable at one end only.
    Middle,
    /// Kernel nonnormalizable at both ends (dressed factorization, last factors).
    Left,
    /// Type-I factors of the complete factorization.
    J1,
    /// First-order factors of the complete factorization.
    J2,
    /// Type II/III factors of the complete factorization.
    J3,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Certificate {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Certificate { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PlanCounts {
    pub n: usize,
    pub j1: usize,
    pub j2: usize,
    pub j3: usize,
    /// `K`, the number of real eigenvalues above the target ground energy.
    pub k_above: usize,
    pub factors: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanFactor {
    pub group: Group,
    pub kind: FactorKind,
    pub lambdas: Vec<(f64, f64)>,
    /// Kernel normalizability at `(-inf, +inf)` for each kernel element.
    pub kernel_norms: Vec<(Option<Normalizability>, Option<Normalizability>)>,
    pub intermediate_class_k: bool,
}

/// An ordered factorization with its group tags and checks. Factors are
/// listed in the order they act (rightmost first).
#[derive(Clone, Debug)]
pub struct FactorizationPlan {
    pub chain: FactorChain,
    pub groups: Vec<Group>,
    pub counts: PlanCounts,
    pub dressing: Option<DressingPolynomial>,
    pub certificates: Vec<Certificate>,
    pub log: Vec<String>,
}

/// Serializable form of a plan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanRecord {
    pub theorem: String,
    pub factors: Vec<PlanFactor>,
    pub counts: PlanCounts,
    pub dressing: Option<DressingPolynomial>,
    pub certificates: Vec<Certificate>,
    pub log: Vec<String>,
    pub chain: ChainRecord,
}

impl FactorizationPlan {
    pub fn passed(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Certificate> {
        self.certificates.iter().filter(|c| !c.passed).collect()
    }

    pub fn group_sizes(&self, groups: [Group; 3]) -> (usize, usize, usize) {
        let count = |g: Group| self.groups.iter().filter(|x| **x == g).count();
        (count(groups[0]), count(groups[1]), count(groups[2]))
    }

    pub fn factors(&self) -> &[DarbouxFactor] {
        &self.chain.factors
    }

    pub fn record(&self, theorem: &str) -> PlanRecord {
        let factors = self
            .chain
            .factors
            .iter()
            .zip(&self.groups)
            .map(|(f, g)| PlanFactor {
                group: *g,
                kind: f.kind,
                lambdas: f.lambdas().iter().map(|l| (l.re, l.im)).collect(),
                kernel_norms: f.kernel.iter().map(|k| (k.norm_minus, k.norm_plus)).collect(),
                intermediate_class_k: class_k_ok(&f.target),
            })
            .collect();
        PlanRecord {
            theorem: theorem.into(),
            factors,
            counts: self.counts.clone(),
            dressing: self.dressing.clone(),
            certificates: self.certificates.clone(),
            log: self.log.clone(),
            chain: self.chain.record(),
        }
    }
}

/// A factor split off the right of a chain.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub factor: DarbouxFactor,
    pub remainder: FactorChain,
    /// The whole chain in its new order.
    pub chain: FactorChain,
    /// `||c f - remainder(factor f)|| / ||c f||` on the test functions.
    pub residual: f64,
    pub intermediate_class_k: bool,
}

fn split_first(c: &FactorChain, steps: Vec<ChainStep>) -> Result<Extraction> {
    let chain = c.reordered(steps)?;
    let factor = chain.factors[0].clone();
    let remainder = chain.suffix(1)?;
    let residual = operator_residual(&c.source, |f| c.apply_field(f), |f| remainder.apply_field(&factor.apply_field(f)));
    let intermediate_class_k = class_k_ok(&factor.target);
    Ok(Extraction { factor, remainder, chain, residual, intermediate_class_k })
}

fn require_minimal(c: &FactorChain) -> Result<()> {
    if c.is_minimal() {
        Ok(())
    } else {
        Err(Error::Spectrum("the chain is minimizable (a value carries two Jordan blocks)".into()))
    }
}

/// Index of the primary ladder at `lambda` (or at its conjugate).
fn ladder_at(c: &FactorChain, lambda: C64) -> Option<usize> {
    c.primary_ladders().iter().position(|l| same_lambda(l.lambda, lambda) || same_lambda(l.lambda, lambda.conj()))
}

/// Moves one consumption of ladder `i` out of the step list. A second-order
/// step that shared it with another ladder degrades to a first-order step.
fn remove_one(steps: &[ChainStep], i: usize) -> Result<Vec<ChainStep>> {
    let pos = steps
        .iter()
        .position(|s| match *s {
            ChainStep::First(a) | ChainStep::TypeI(a) => a == i,
            ChainStep::Second(a, b) => a == i || b == i,
        })
        .ok_or_else(|| Error::Spectrum(format!("no step consumes ladder {i}")))?;
    let mut out = steps.to_vec();
    match steps[pos] {
        ChainStep::First(_) | ChainStep::TypeI(_) => {
            out.remove(pos);
        }
        ChainStep::Second(a, b) => out[pos] = ChainStep::First(if a == i { b } else { a }),
    }
    Ok(out)
}

/// Splits off a type-I factor at `lambda` from the right.
pub fn extract_type_i(c: &FactorChain, lambda: C64) -> Result<Extraction> {
    if lambda.im == 0.0 {
        return Err(Error::Domain(format!("type-I extraction needs a non-real value, got {lambda}")));
    }
    require_minimal(c)?;
    let i = ladder_at(c, lambda).ok_or_else(|| Error::Spectrum(format!("{lambda} is not in the chain spectrum")))?;
    let mut steps = vec![ChainStep::TypeI(i)];
    steps.extend(remove_one(&c.steps, i)?);
    split_first(c, steps)
}

/// Splits off a first-order factor at the least real eigenvalue, which has
/// to lie below the ground energy of the target.
pub fn extract_first_order_bottom(c: &FactorChain) -> Result<Extraction> {
    require_minimal(c)?;
    let lambda = c
        .spectrum
        .real_entries()
        .last()
        .map(|e| e.lambda.0)
        .ok_or_else(|| Error::Spectrum("the chain has no real eigenvalue".into()))?;
    if let Some(e0) = ground_energy(&c.target, lambda)? {
        return Err(Error::Ordering(format!(
            "least real eigenvalue {lambda} is not below the target ground energy {e0}"
        )));
    }
    let i = ladder_at(c, re(lambda)).expect("real entries come from ladders");
    let mut steps = vec![ChainStep::First(i)];
    steps.extend(remove_one(&c.steps, i)?);
    split_first(c, steps)
}

/// Outcome of swapping a ground-state deletion with a following
/// first-order factor whose kernel lies below the ground energy.
#[derive(Clone, Debug)]
pub struct FirstOrderSwap {
    pub p12: DarbouxFactor,
    pub k12: DarbouxFactor,
    /// `p11^t psi`, the kernel of `p12`.
    pub lifted: FormalFunction,
    /// `||k11 p11 f - k12 p12 f|| / ||k11 p11 f||`.
    pub identity_residual: f64,
    /// `||p12 p12^t f - (h_2 - lambda) f|| / ||p12 p12^t f||`.
    pub h2_residual: f64,
    /// Largest difference of the two end potentials on the trusted window.
    pub end_potential_diff: f64,
    pub intermediate_class_k: bool,
}

fn one_sided(f: &FormalFunction) -> bool {
    let n = |s: Side| f.norm(s) == Some(Normalizability::Normalizable);
    n(Side::Plus) != n(Side::Minus)
}

fn window_diff(a: &GridPotential, b: &GridPotential) -> f64 {
    let g = a.grid();
    let w = a.window_end.min(b.window_end);
    (0..g.n).filter(|&i| g.x(i).abs() <= w).map(|i| (a.value(i) - b.value(i)).abs()).fold(0.0, f64::max)
}

/// Given `k11 p11` with `p11` deleting the ground state `phi_0` of its
/// source and `k11` built from a one-sided `psi` below that level, returns
/// the factors of the other order: `p12` from `p11^t psi`, then `k12` from
/// `p12 phi_0`.
pub fn permute_lemma9(p11: &DarbouxFactor, k11: &DarbouxFactor) -> Result<FirstOrderSwap> {
    if p11.kind != FactorKind::FirstOrder || k11.kind != FactorKind::FirstOrder {
        return Err(Error::Domain("both factors must be of first order".into()));
    }
    if !Arc::ptr_eq(&p11.target, &k11.source) {
        return Err(Error::GridMismatch("k11 does not act on the target of p11".into()));
    }
    let phi0 = &p11.kernel[0];
    let e0 = phi0.lambda.re;
    if !phi0.is_normalizable_both() || e0 > 0.0 {
        return Err(Error::Ordering("p11 must delete a ground state at a non-positive energy".into()));
    }
    if ground_energy(&p11.source, e0)?.is_some_and(|g| g < e0 - LEVEL_MATCH_TOL) {
        return Err(Error::Ordering(format!("{e0} is not the ground energy of the source")));
    }
    let psi = &k11.kernel[0];
    let lambda = psi.lambda.re;
    if !(lambda < e0) || !one_sided(psi) {
        return Err(Error::Ordering(format!(
            "k11 needs a kernel below {e0} normalizable at one end only (got lambda = {lambda})"
        )));
    }
    let lifted = p11.transpose().apply(psi)?;
    if let Some(x) = find_zero(&lifted.field) {
        return Err(Error::SingularFactor { x, what: "transposed image p11^t psi".into() });
    }
    let p12 = DarbouxFactor::make_first_order(&lifted)?;
    let ground = p12.apply(phi0)?;
    let k12 = DarbouxFactor::make_first_order(&ground)?;
    let identity_residual = operator_residual(
        &p11.source,
        |f| k11.apply_field(&p11.apply_field(f)),
        |f| k12.apply_field(&p12.apply_field(f)),
    );
    let t12 = p12.transpose();
    let h2_residual = operator_residual(
        &p12.target,
        |f| p12.apply_field(&t12.apply_field(f)),
        |f| f.apply_hamiltonian(&p12.target.v, re(lambda)),
    );
    let end_potential_diff = window_diff(&k11.target, &k12.target);
    let intermediate_class_k = class_k_ok(&p12.target);
    Ok(FirstOrderSwap { p12, k12, lifted, identity_residual, h2_residual, end_potential_diff, intermediate_class_k })
}

/// The two factorizations of a third-order chain around its least real
/// eigenvalue `lambda`: `k2 p1` (first-order factor first) and `k1 p2`.
#[derive(Clone, Debug)]
pub struct ThirdOrderSplit {
    pub lambda: f64,
    /// `k2 p1`.
    pub first_order_right: FactorChain,
    /// `k1 p2`.
    pub first_order_left: FactorChain,
    /// `||k2 p1 f - k1 p2 f|| / ||k2 p1 f||`.
    pub residual: f64,
    /// `||p2 phi|| / ||phi||` for the eigenfunction `phi` at `lambda` (simple `lambda` only).
    pub psi_ratio: Option<f64>,
    /// Whether `k1` annihilates `p2 phi`.
    pub k1_annihilates_psi: Option<bool>,
    /// `||p2^t psi - (lambda - lambda_1)(lambda - lambda_2) phi|| / ||p2^t psi||`.
    pub backmap_residual: Option<f64>,
    /// Whether the kernels of `p1` and `k1` have the same normalizability at each end.
    pub kernels_share_normalizability: Option<bool>,
    pub spectra_preserved: bool,
    pub intermediates_class_k: bool,
}

pub fn permute_lemma10(c3: &FactorChain, lambda: Option<f64>) -> Result<ThirdOrderSplit> {
    if c3.order() != 3 {
        return Err(Error::Domain(format!("expected a third-order chain, got order {}", c3.order())));
    }
    require_minimal(c3)?;
    let least = c3
        .spectrum
        .real_entries()
        .last()
        .map(|e| e.lambda.0)
        .ok_or_else(|| Error::Spectrum("the chain has no real eigenvalue".into()))?;
    let lambda = lambda.unwrap_or(least);
    if !matches(lambda, re(least)) {
        return Err(Error::Ordering(format!("{lambda} is not the least real eigenvalue ({least})")));
    }
    let ladders = c3.primary_ladders();
    let a = ladder_at(c3, re(lambda)).ok_or_else(|| Error::Spectrum(format!("{lambda} is not in the spectrum")))?;
    let second = match ladders.iter().position(|l| !l.is_real()) {
        Some(j) => ChainStep::TypeI(j),
        None => {
            let mut rem = Vec::new();
            for (l, lad) in ladders.iter().enumerate() {
                let k = lad.len() - usize::from(l == a);
                rem.extend(std::iter::repeat(l).take(k));
            }
            ChainStep::Second(rem[0], rem[1])
        }
    };
    let right = c3.reordered(vec![ChainStep::First(a), second])?;
    let left = c3.reordered(vec![second, ChainStep::First(a)])?;
    let residual = operator_residual(&c3.source, |f| right.apply_field(f), |f| left.apply_field(f));

    let (p1, k2) = (&right.factors[0], &right.factors[1]);
    let (p2, k1) = (&left.factors[0], &left.factors[1]);
    let simple = c3.spectrum.multiplicity(re(lambda)) == 1;
    let (mut psi_ratio, mut k1_annihilates_psi, mut backmap_residual, mut kernels_share_normalizability) =
        (None, None, None, None);
    if simple {
        let phi = &ladders[a].functions[0];
        let psi = p2.apply(phi)?;
        psi_ratio = Some(psi.field.l2_norm() / phi.field.l2_norm());
        k1_annihilates_psi = Some(!psi.is_zero() && k1.apply(&psi)?.is_zero());
        let factor: C64 = p2.lambdas().iter().map(|l| re(lambda) - l).product();
        let back = p2.transpose().apply_field(&psi.field);
        backmap_residual = Some(back.sub(&phi.field.scale(factor)).l2_norm() / back.l2_norm());
        let (x, y) = (&p1.kernel[0], &k1.kernel[0]);
        kernels_share_normalizability = Some(x.norm_plus == y.norm_plus && x.norm_minus == y.norm_minus);
    }
    let only = |f: &DarbouxFactor| f.lambdas().len() == 1 && same_lambda(f.lambdas()[0], re(lambda));
    let spectra_preserved = only(p1) && only(k1) && k2.lambdas().len() == 2 && p2.lambdas().len() == 2;
    let intermediates_class_k = class_k_ok(&p1.target) && class_k_ok(&p2.target);
    Ok(ThirdOrderSplit {
        lambda,
        first_order_right: right,
        first_order_left: left,
        residual,
        psi_ratio,
        k1_annihilates_psi,
        backmap_residual,
        kernels_share_normalizability,
        spectra_preserved,
        intermediates_class_k,
    })
}

fn norms_of(f: &FormalFunction) -> (bool, bool) {
    let n = |s: Side| f.norm(s) == Some(Normalizability::Normalizable);
    (n(Side::Minus), n(Side::Plus))
}

fn in_spectrum(c: &FactorChain, e: f64) -> bool {
    c.spectrum.real_entries().iter().any(|x| matches(e, x.value()))
}

/// Bound levels below `lambda_1` on both ends and the polynomial `P` built from them.
pub fn dressing_polynomial(c: &FactorChain) -> Result<(DressingPolynomial, Vec<(f64, FormalFunction)>)> {
    let lambda1 = c
        .spectrum
        .real_entries()
        .first()
        .map(|e| e.lambda.0)
        .ok_or_else(|| Error::Spectrum("the chain has no real eigenvalue".into()))?;
    let src = bound_states_upto(&c.source, lambda1)?;
    let tgt = bound_states_upto(&c.target, lambda1)?;
    let source_levels: Vec<f64> = src.iter().map(|b| b.0).collect();
    let target_levels: Vec<f64> = tgt.iter().map(|b| b.0).collect();
    let mut roots = Vec::new();
    for (i, &e) in source_levels.iter().enumerate() {
        if in_spectrum(c, e) {
            continue;
        }
        let j = target_levels.iter().position(|&t| (t - e).abs() <= LEVEL_MATCH_TOL * (1.0 + e.abs()));
        roots.push(DressingRoot { energy: e, source_index: i, target_index: j.unwrap_or(usize::MAX) });
    }
    let poly = DressingPolynomial {
        degree: roots.len(),
        roots,
        n_lower_source: src.len(),
        n_lower_target: tgt.len(),
        n_upper_source: source_levels.iter().filter(|&&e| in_spectrum(c, e)).count(),
        n_upper_target: target_levels.iter().filter(|&&e| in_spectrum(c, e)).count(),
        source_levels,
        target_levels,
    };
    Ok((poly, src))
}

fn check_intermediates(chain: &FactorChain, certs: &mut Vec<Certificate>) {
    let bad: Vec<usize> = (0..chain.factors.len()).filter(|&s| !class_k_ok(&chain.factors[s].target)).collect();
    certs.push(Certificate::new(
        "intermediate potentials in class K",
        bad.is_empty(),
        if bad.is_empty() { "all verified on the window".to_string() } else { format!("failing after factors {bad:?}") },
    ));
}

/// Factors `c P(h)` into first-order factors: bound states of the source
/// below `lambda_1` first (right group), then the one-sided kernels in
/// increasing order (middle group), then the nonnormalizable kernels at the
/// target levels, highest first (left group).
pub fn theorem2_factorize(c: &FactorChain) -> Result<FactorizationPlan> {
    if !c.spectrum.is_real() {
        return Err(Error::Spectrum("complex eigenvalues; use the complete factorization".into()));
    }
    require_minimal(c)?;
    let (poly, src) = dressing_polynomial(c)?;
    if let Some(l1) = c.spectrum.real_entries().first() {
        if l1.lambda.0 > 0.0 {
            return Err(Error::Spectrum(format!("largest eigenvalue {} is positive", l1.lambda.0)));
        }
    }
    let mut log = Vec::new();
    let mut ladders = c.primary_ladders();
    let n_base = ladders.len();
    let mut root_ladders = Vec::new();
    for r in &poly.roots {
        let bound = src[r.source_index].1.clone();
        let second = second_solution(&c.source, &bound)?;
        root_ladders.push((ladders.len(), ladders.len() + 1));
        ladders.push(KernelLadder::from_top(&bound));
        ladders.push(KernelLadder::from_top(&second));
        log.push(format!("dressing root E = {:.10}: kernel of (E - h) added to the chain kernel", r.energy));
    }
    let base_at = |e: f64| (0..n_base).find(|&l| matches(e, ladders[l].lambda));
    let root_at = |e: f64| poly.roots.iter().position(|r| (r.energy - e).abs() <= LEVEL_MATCH_TOL * (1.0 + e.abs()));
    let mut used = vec![0usize; n_base];
    let mut right = Vec::new();
    for &e in &poly.source_levels {
        match base_at(e) {
            Some(l) => {
                used[l] += 1;
                right.push(ChainStep::First(l));
            }
            None => {
                let r = root_at(e).expect("levels outside the spectrum are dressing roots");
                right.push(ChainStep::First(root_ladders[r].0));
            }
        }
    }
    let mut left = Vec::new();
    for &e in poly.target_levels.iter().rev() {
        match base_at(e) {
            Some(l) => {
                used[l] += 1;
                left.push(ChainStep::First(l));
            }
            None => {
                let r = root_at(e).ok_or_else(|| {
                    Error::Audit(format!("target level {e} is neither a chain eigenvalue nor a source level"))
                })?;
                left.push(ChainStep::First(root_ladders[r].1));
            }
        }
    }
    let mut order: Vec<usize> = (0..n_base).collect();
    order.sort_by(|&a, &b| ladders[a].lambda.re.total_cmp(&ladders[b].lambda.re));
    let mut middle = Vec::new();
    for l in order {
        let k = ladders[l].len();
        if used[l] > k {
            return Err(Error::Audit(format!("ladder at {} is claimed by both end groups", ladders[l].lambda)));
        }
        middle.extend(std::iter::repeat(ChainStep::First(l)).take(k - used[l]));
    }
    let groups: Vec<Group> = std::iter::repeat(Group::Right)
        .take(right.len())
        .chain(std::iter::repeat(Group::Middle).take(middle.len()))
        .chain(std::iter::repeat(Group::Left).take(left.len()))
        .collect();
    log.push(format!("group sizes (right, middle, left) = ({}, {}, {})", right.len(), middle.len(), left.len()));
    let steps: Vec<ChainStep> = right.into_iter().chain(middle).chain(left).collect();
    let chain = FactorChain::build(c.source.clone(), ladders, steps)?;

    let mut certs = Vec::new();
    let same_roots = poly.roots.iter().all(|r| r.target_index != usize::MAX)
        && poly.n_lower_target - poly.n_upper_target == poly.degree;
    certs.push(Certificate::new(
        "dressing polynomials of both ends agree",
        same_roots,
        format!("roots {:?}", poly.energies()),
    ));
    let n = c.order();
    let expected = n + poly.n_lower_source + poly.n_lower_target - poly.n_upper_source - poly.n_upper_target;
    certs.push(Certificate::new(
        "factor count N + N_+ + N_- - N^+ - N^-",
        chain.order() == expected && chain.factors.len() == expected,
        format!("{} factors, expected {expected}", chain.factors.len()),
    ));
    let mut right_ok = true;
    let mut middle_ok = true;
    let mut left_ok = true;
    let mut prev_mid = f64::NEG_INFINITY;
    for (s, (f, g)) in chain.factors.iter().zip(&groups).enumerate() {
        let (lo, hi) = norms_of(&f.kernel[0]);
        let lam = f.lambdas()[0].re;
        match g {
            Group::Right => right_ok &= lo && hi && (lam - poly.source_levels[s]).abs() <= LEVEL_MATCH_TOL * (1.0 + lam.abs()),
            Group::Middle => {
                middle_ok &= lo != hi && lam >= prev_mid;
                prev_mid = lam;
            }
            _ => left_ok &= !lo && !hi,
        }
    }
    certs.push(Certificate::new("right group: bound-state kernels at the source levels", right_ok, ""));
    certs.push(Certificate::new("middle group: one-sided kernels, non-decreasing eigenvalues", middle_ok, ""));
    certs.push(Certificate::new("left group: kernels nonnormalizable at both ends", left_ok, ""));
    check_intermediates(&chain, &mut certs);
    let roots = poly.energies();
    let residual = operator_residual(
        &c.source,
        |f| chain.apply_field(f),
        |f| c.apply_field(&apply_dressing(&c.source, &roots, f)),
    );
    certs.push(Certificate::new(
        "product reproduces c P(h)",
        residual < IDENTITY_TOL,
        format!("relative residual {residual:.3e}"),
    ));
    let counts = PlanCounts { n, factors: chain.factors.len(), ..Default::default() };
    Ok(FactorizationPlan { chain, groups, counts, dressing: Some(poly), certificates: certs, log })
}

/// Ground energy of `gp`, searching upward from the potential minimum.
pub fn ground_state_energy(gp: &Arc<GridPotential>) -> Result<f64> {
    let lo = gp.min_value() - 1.0;
    let mut width = 4.0;
    while width < 1e4 {
        if let Some(b) = find_bound_states(gp, lo, lo + width)?.first() {
            return Ok(b.0);
        }
        width *= 2.0;
    }
    Err(Error::Spectrum("no bound state found above the potential minimum".into()))
}

/// Complete factorization of `c` into type-I factors (first), first-order
/// factors, and fused type II/III factors (last).
pub fn theorem3_factorize(c: &FactorChain) -> Result<FactorizationPlan> {
    require_minimal(c)?;
    if let Some(l1) = c.spectrum.real_entries().first() {
        if l1.lambda.0 > 0.0 {
            return Err(Error::Spectrum(format!("largest real eigenvalue {} is positive", l1.lambda.0)));
        }
    }
    let ladders = c.primary_ladders();
    let ladder_of = |v: C64| ladders.iter().position(|l| same_lambda(l.lambda, v)).expect("spectrum entries have ladders");
    let e0 = ground_state_energy(&c.target)?;
    let real = c.spectrum.real_entries();
    let above: Vec<_> = real.iter().filter(|e| e.lambda.0 > e0 + LEVEL_MATCH_TOL * (1.0 + e0.abs())).collect();
    let k_above = above.len();
    let s: usize = above.iter().map(|e| e.k).sum();
    let n = c.order();
    let j1: usize = c.spectrum.pairs().iter().map(|e| e.k).sum();
    let j3 = s / 2;
    let j2 = n - 2 * j1 - 2 * j3;
    let mut log = vec![format!("target ground energy E_0 = {e0:.10}; K = {k_above}, sum of k_i for i <= K is {s}")];
    let e0_in = in_spectrum(c, e0);
    if s % 2 == 1 && !e0_in {
        return Err(Error::InfeasibleOrdering(format!(
            "{s} eigenvalues (with multiplicity) lie above the target ground energy {e0}, an odd number, \
             but {e0} is not a chain eigenvalue"
        )));
    }

    let mut steps = Vec::new();
    for p in c.spectrum.pairs() {
        let j = ladder_of(p.value());
        steps.extend(std::iter::repeat(ChainStep::TypeI(j)).take(p.k));
        log.push(format!("type-I factors at {} (x{})", p.value(), p.k));
    }
    // first-order group, ascending; with odd parity lambda_K and then E_0 close it
    let mut below: Vec<usize> = Vec::new();
    for e in real.iter().rev().filter(|e| !above.iter().any(|a| std::ptr::eq(**a, **e))) {
        below.extend(std::iter::repeat(ladder_of(e.value())).take(e.k));
    }
    let mut fused: Vec<usize> = Vec::new();
    for e in above.iter().rev() {
        fused.extend(std::iter::repeat(ladder_of(e.value())).take(e.k));
    }
    if s % 2 == 1 {
        let last = below.pop().expect("E_0 is a chain eigenvalue");
        below.push(fused.remove(0));
        below.push(last);
        log.push("odd parity: lambda_K and then E_0 close the first-order group".into());
    }
    steps.extend(below.iter().map(|&l| ChainStep::First(l)));
    for pair in fused.chunks(2) {
        steps.push(ChainStep::Second(pair[0], pair[1]));
        log.push(format!("fused second-order factor at {} and {}", ladders[pair[0]].lambda.re, ladders[pair[1]].lambda.re));
    }
    let groups: Vec<Group> = steps
        .iter()
        .map(|s| match s {
            ChainStep::TypeI(_) => Group::J1,
            ChainStep::First(_) => Group::J2,
            ChainStep::Second(..) => Group::J3,
        })
        .collect();
    let chain = c.reordered(steps)?;

    let mut certs = Vec::new();
    let kinds = chain.kinds();
    let count = |k: &[FactorKind]| kinds.iter().filter(|x| k.contains(x)).count();
    let counted = (count(&[FactorKind::TypeI]), count(&[FactorKind::FirstOrder]), count(&[FactorKind::TypeII, FactorKind::TypeIII]));
    certs.push(Certificate::new(
        "group counts J1, J2, J3",
        counted == (j1, j2, j3),
        format!("built {counted:?}, expected ({j1}, {j2}, {j3})"),
    ));
    let firsts: Vec<f64> = chain.factors.iter().filter(|f| f.kind == FactorKind::FirstOrder).map(|f| f.lambdas()[0].re).collect();
    let sorted_upto = if s % 2 == 1 { firsts.len().saturating_sub(2) } else { firsts.len() };
    let ordered = firsts[..sorted_upto].windows(2).all(|w| w[0] <= w[1] + LEVEL_MATCH_TOL);
    certs.push(Certificate::new("first-order group ordering", ordered, format!("eigenvalues {firsts:?}")));
    let seconds: Vec<(f64, f64)> = chain
        .factors
        .iter()
        .filter(|f| matches!(f.kind, FactorKind::TypeII | FactorKind::TypeIII))
        .map(|f| {
            let l: Vec<f64> = f.lambdas().iter().map(|x| x.re).collect();
            (l.iter().cloned().fold(f64::INFINITY, f64::min), l.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();
    let fused_ordered = seconds.windows(2).all(|w| w[0].1 <= w[1].0 + LEVEL_MATCH_TOL);
    certs.push(Certificate::new("second-order group ordering", fused_ordered, format!("{seconds:?}")));
    let irreducible = chain
        .factors
        .iter()
        .filter(|f| matches!(f.kind, FactorKind::TypeII | FactorKind::TypeIII))
        .all(|f| f.kernel.iter().filter(|k| k.order == 0).all(|k| find_zero(&k.field).is_some()));
    certs.push(Certificate::new("fused factors have kernel eigenfunctions with zeros", irreducible, ""));
    certs.push(Certificate::new(
        "parity of the levels above the target ground energy",
        e0_in || s % 2 == 0,
        format!("sum = {s}, E_0 in spectrum: {e0_in}"),
    ));
    check_intermediates(&chain, &mut certs);
    let residual = operator_residual(&c.source, |f| chain.apply_field(f), |f| c.apply_field(f));
    certs.push(Certificate::new(
        "product reproduces the chain",
        residual < IDENTITY_TOL,
        format!("relative residual {residual:.3e}"),
    ));
    let mut dressing = None;
    if c.spectrum.is_real() {
        let plan2 = theorem2_factorize(c)?;
        let poly = plan2.dressing.clone().expect("dressed plans carry their polynomial");
        let roots = poly.energies();
        let r = operator_residual(
            &c.source,
            |f| plan2.chain.apply_field(f),
            |f| chain.apply_field(&apply_dressing(&c.source, &roots, f)),
        );
        certs.push(Certificate::new(
            "dressed plan equals this plan times P(h)",
            r < IDENTITY_TOL,
            format!("relative residual {r:.3e}"),
        ));
        for root in &poly.roots {
            let r = root_pair_residual(c, root.energy)?;
            certs.push(Certificate::new(
                format!("right and left factors at E = {:.6} multiply to E - h", root.energy),
                r < IDENTITY_TOL,
                format!("relative residual {r:.3e}"),
            ));
        }
        dressing = Some(poly);
    }
    let counts = PlanCounts { n, j1, j2, j3, k_above, factors: chain.factors.len() };
    Ok(FactorizationPlan { chain, groups, counts, dressing, certificates: certs, log })
}

/// Builds the first-order factor `F` deleting the source level `e` and the
/// factor `G` whose kernel is the image of the second solution, and returns
/// `||G F f - (e - h) f|| / ||G F f||`.
pub fn root_pair_residual(c: &FactorChain, e: f64) -> Result<f64> {
    let bound = bound_states_upto(&c.source, e)?
        .into_iter()
        .find(|b| (b.0 - e).abs() <= LEVEL_MATCH_TOL * (1.0 + e.abs()))
        .ok_or_else(|| Error::Spectrum(format!("no source level at {e}")))?
        .1;
    let f = DarbouxFactor::make_first_order(&bound)?;
    let g = DarbouxFactor::make_first_order(&f.apply(&second_solution(&c.source, &bound)?)?)?;
    Ok(operator_residual(
        &c.source,
        |x| g.apply_field(&f.apply_field(x)),
        |x| x.apply_hamiltonian(&c.source.v, re(e)).scale(re(-1.0)),
    ))
}
