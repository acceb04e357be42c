//! Index balance, kernel membership of bound states, and the structural
//! audits relating the kernels of a chain and of its transpose.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::{same_lambda, FactorChain, KernelLadder};
use crate::error::{Error, Result};
use crate::factorize::{bound_states_upto, matches};
use crate::schrodinger::{FormalFunction, Normalizability, Side};
use crate::C64;

/// `||q psi|| / ||psi||` below this counts as annihilation.
pub const MEMBERSHIP_TOL: f64 = 1e-6;

/// Bound states of both endpoint Hamiltonians on `(min V - 1, e_max]`.
#[derive(Clone, Debug)]
pub struct BoundInventory {
    pub e_max: f64,
    pub source: Vec<(f64, FormalFunction)>,
    pub target: Vec<(f64, FormalFunction)>,
}

impl BoundInventory {
    pub fn new(c: &FactorChain, e_max: f64) -> Result<Self> {
        Ok(BoundInventory {
            e_max,
            source: bound_states_upto(&c.source, e_max)?,
            target: bound_states_upto(&c.target, e_max)?,
        })
    }

    /// Inventory covering `lambda <= 0` and every real value of the chain.
    pub fn for_chain(c: &FactorChain) -> Result<Self> {
        let top = c.spectrum.real_entries().iter().map(|e| e.lambda.0).fold(0.0, f64::max);
        Self::new(c, top)
    }

    fn has_level(levels: &[(f64, FormalFunction)], lambda: C64) -> bool {
        levels.iter().any(|(e, _)| matches(*e, lambda))
    }

    pub fn source_has(&self, lambda: C64) -> bool {
        Self::has_level(&self.source, lambda)
    }

    pub fn target_has(&self, lambda: C64) -> bool {
        Self::has_level(&self.target, lambda)
    }
}

/// Normalizability of one kernel function at `(+inf, -inf)`.
fn flags(f: &FormalFunction) -> Result<(bool, bool)> {
    let get = |side: Side| {
        f.norm(side)
            .map(|n| n == Normalizability::Normalizable)
            .ok_or_else(|| Error::Audit(format!("order {} element at lambda = {} is unclassified", f.order, f.lambda)))
    };
    Ok((get(Side::Plus)?, get(Side::Minus)?))
}

/// One spectral value with the ladder flags of `ker q^-` (functions of the
/// source Hamiltonian) and `ker q^+` (functions of the target).
#[derive(Clone, Debug)]
pub struct LadderPair {
    pub lambda: C64,
    pub minus: KernelLadder,
    pub plus: KernelLadder,
    pub minus_flags: Vec<(bool, bool)>,
    pub plus_flags: Vec<(bool, bool)>,
}

impl LadderPair {
    pub fn k(&self) -> usize {
        self.minus.len()
    }
}

/// Kernel ladders of a chain and of its transpose, paired by value.
/// The chain must be nonminimizable (one Jordan block per value).
pub fn chain_bases(c: &FactorChain) -> Result<Vec<LadderPair>> {
    if !c.is_minimal() {
        return Err(Error::Domain("the chain is minimizable; reduce it before the index audits".into()));
    }
    let plus = c.transposed_kernel()?;
    let mut out = Vec::new();
    for minus in &c.ladders {
        let partner = plus
            .iter()
            .find(|p| same_lambda(p.lambda, minus.lambda))
            .ok_or_else(|| Error::Audit(format!("no transposed ladder at lambda = {}", minus.lambda)))?;
        if partner.len() != minus.len() {
            return Err(Error::Audit(format!(
                "ladder lengths differ at lambda = {}: {} vs {}",
                minus.lambda,
                minus.len(),
                partner.len()
            )));
        }
        out.push(LadderPair {
            lambda: minus.lambda,
            minus_flags: minus.functions.iter().map(flags).collect::<Result<_>>()?,
            plus_flags: partner.functions.iter().map(flags).collect::<Result<_>>()?,
            minus: minus.clone(),
            plus: partner.clone(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub lambda: (f64, f64),
    pub nu_plus: u8,
    pub nu_minus: u8,
    pub n_plus: usize,
    pub n_minus: usize,
    pub n0: usize,
    pub balanced: bool,
    /// `n0 > 0`: both sides of the balance must vanish.
    pub zero_branch: bool,
}

impl IndexReport {
    pub fn lhs(&self) -> i64 {
        self.nu_plus as i64 - self.n_plus as i64
    }

    pub fn rhs(&self) -> i64 {
        self.nu_minus as i64 - self.n_minus as i64
    }

    /// Balance plus the vanishing of both sides on the zero branch.
    pub fn holds(&self) -> bool {
        self.balanced && (!self.zero_branch || self.lhs() == 0)
    }
}

fn admissible(lambda: C64) -> Result<()> {
    if lambda.im == 0.0 && lambda.re > 0.0 {
        return Err(Error::Domain(format!("lambda = {lambda} is real and positive; the balance needs lambda <= 0 or Im lambda != 0")));
    }
    Ok(())
}

/// Index balance at `lambda` from precomputed bases and bound states.
///
/// `n_plus` counts both-sides-normalizable functions of `ker q^-` (they
/// live on the source), `n_minus` those of `ker q^+`. `n0` counts the
/// one-sided functions of `ker q^-`.
pub fn index_report_with(bases: &[LadderPair], inv: &BoundInventory, lambda: C64) -> Result<IndexReport> {
    admissible(lambda)?;
    if lambda.im == 0.0 && lambda.re > inv.e_max + 1e-9 {
        return Err(Error::Domain(format!("lambda = {lambda} lies above the bound-state inventory")));
    }
    let real = lambda.im == 0.0;
    let nu_plus = (real && inv.source_has(lambda)) as u8;
    let nu_minus = (real && inv.target_has(lambda)) as u8;
    let (mut n_plus, mut n_minus, mut n0) = (0, 0, 0);
    if let Some(p) = bases.iter().find(|p| same_lambda(p.lambda, lambda)) {
        n_plus = p.minus_flags.iter().filter(|f| f.0 && f.1).count();
        n_minus = p.plus_flags.iter().filter(|f| f.0 && f.1).count();
        n0 = p.minus_flags.iter().filter(|f| f.0 != f.1).count();
    }
    let balanced = nu_plus as i64 - n_plus as i64 == nu_minus as i64 - n_minus as i64;
    Ok(IndexReport { lambda: (lambda.re, lambda.im), nu_plus, nu_minus, n_plus, n_minus, n0, balanced, zero_branch: n0 > 0 })
}

pub fn index_report(c: &FactorChain, lambda: C64) -> Result<IndexReport> {
    admissible(lambda)?;
    let bases = chain_bases(c)?;
    let inv = BoundInventory::for_chain(c)?;
    index_report_with(&bases, &inv, lambda)
}

/// Values worth checking for a chain: its spectrum, the bound levels of
/// both ends, and one value off everything.
pub fn sample_lambdas(c: &FactorChain, inv: &BoundInventory) -> Vec<C64> {
    let mut cands: Vec<C64> = c.spectrum.values();
    cands.extend(inv.source.iter().chain(&inv.target).map(|(e, _)| C64::new(*e, 0.0)));
    let lowest = cands.iter().map(|z| z.re).fold(0.0, f64::min);
    cands.push(C64::new(lowest - 1.5, 0.0));
    cands.push(C64::new(lowest - 0.5, 0.75));
    let mut out: Vec<C64> = Vec::new();
    for z in cands {
        let ok = z.im != 0.0 || z.re <= 0.0;
        if ok && !out.iter().any(|w| (w - z).norm() <= 1e-6 * (1.0 + z.norm())) {
            out.push(z);
        }
    }
    out
}

fn relative_image(c: &FactorChain, psi: &FormalFunction) -> Result<f64> {
    let scale = psi.field.l2_norm();
    if !(scale > 0.0) {
        return Err(Error::Audit("zero bound state".into()));
    }
    let img = if psi.potential.id == c.source.id {
        c.apply_field(&psi.field)
    } else if psi.potential.id == c.target.id {
        c.apply_transpose_field(&psi.field)
    } else {
        return Err(Error::GridMismatch("bound state lives on neither end of the chain".into()));
    };
    Ok(img.l2_norm() / scale)
}

/// Whether a bound state of either end lies in the kernel of the operator
/// acting on it (`q` on the source, `q^t` on the target). The answer must
/// agree with membership of its energy in the chain spectrum; a mismatch is
/// an audit error.
pub fn kernel_membership(c: &FactorChain, bound_state: &FormalFunction) -> Result<bool> {
    if !bound_state.is_normalizable_both() {
        return Err(Error::Domain("kernel membership needs a state normalizable at both ends".into()));
    }
    let ratio = relative_image(c, bound_state)?;
    let annihilated = ratio < MEMBERSHIP_TOL;
    let listed = c.spectrum.contains(bound_state.lambda);
    if annihilated != listed {
        return Err(Error::Audit(format!(
            "bound state at E = {}: relative image {ratio:.3e} but E {} the chain spectrum",
            bound_state.lambda.re,
            if listed { "is in" } else { "is not in" }
        )));
    }
    Ok(annihilated)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub witness: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AuditTable {
    pub rows: Vec<AuditRow>,
}

impl AuditTable {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<&AuditRow> {
        self.rows.iter().filter(|r| !r.passed).collect()
    }

    pub fn row(&self, name: &str) -> Option<&AuditRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Plain-text rendering, one line per row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!("[{}] {}: {}", if r.passed { "pass" } else { "FAIL" }, r.name, r.detail));
            if let Some(w) = &r.witness {
                out.push_str(&format!(" (witness: {w})"));
            }
            out.push('\n');
        }
        out
    }

    fn push(&mut self, name: &str, detail: String, witnesses: Vec<String>) {
        self.rows.push(AuditRow {
            name: name.into(),
            passed: witnesses.is_empty(),
            detail,
            witness: if witnesses.is_empty() { None } else { Some(witnesses.join("; ")) },
        });
    }
}

fn both(f: (bool, bool)) -> bool {
    f.0 && f.1
}

fn neither(f: (bool, bool)) -> bool {
    !f.0 && !f.1
}

fn one_sided(f: (bool, bool)) -> bool {
    f.0 != f.1
}

fn at(lambda: C64, family: &str, j: usize) -> String {
    format!("{family}[{j}] at lambda = {lambda}")
}

/// Normalizability is downward-closed along a ladder at each end.
fn monotone(flags: &[(bool, bool)]) -> Option<usize> {
    (1..flags.len()).find(|&j| (flags[j].0 && !flags[j - 1].0) || (flags[j].1 && !flags[j - 1].1))
}

/// Adds the lower element to every ladder step: another canonical ladder
/// of the same kernel.
fn shifted_ladder(l: &KernelLadder) -> Result<Vec<FormalFunction>> {
    let mut out: Vec<FormalFunction> = vec![l.functions[0].clone()];
    for j in 1..l.len() {
        let (a, b) = (l.functions[j].samples(), l.functions[j - 1].samples());
        let y: Vec<(C64, C64)> = a.iter().zip(&b).map(|(p, q)| (p.0 + q.0, p.1 + q.1)).collect();
        let parent = Arc::new(out[j - 1].clone());
        out.push(FormalFunction::from_samples(l.potential().clone(), l.lambda, Some(parent), &y)?);
    }
    Ok(out)
}

/// Structural audits of a nonminimizable chain: ladder monotonicity, basis
/// independence, the normalizability duality between `ker q^-` and
/// `ker q^+` and its corollaries, kernel membership of bound states, and
/// the index balance on the sample values.
///
/// The real/imaginary splitting of complex-coefficient chains is not
/// audited: no such chain is constructed here.
pub fn corollary_audit(c: &FactorChain) -> Result<AuditTable> {
    let bases = chain_bases(c)?;
    let inv = BoundInventory::for_chain(c)?;
    let mut t = AuditTable::default();

    let mut w = Vec::new();
    for p in &bases {
        for (fam, fl) in [("ker q-", &p.minus_flags), ("ker q+", &p.plus_flags)] {
            if let Some(j) = monotone(fl) {
                w.push(at(p.lambda, fam, j));
            }
        }
    }
    t.push("ladder monotonicity", "normalizable elements precede nonnormalizable ones at each end".into(), w);

    let mut w = Vec::new();
    for p in &bases {
        for (j, g) in shifted_ladder(&p.minus)?.iter().enumerate() {
            if flags(g)? != p.minus_flags[j] {
                w.push(at(p.lambda, "ker q-", j));
            }
        }
    }
    t.push("basis independence", "phi_j + phi_(j-1) keeps the normalizability of phi_j".into(), w);

    let mut w = Vec::new();
    for p in &bases {
        let k = p.k();
        for j in 0..k {
            let (m, q) = (p.minus_flags[j], p.plus_flags[k - j - 1]);
            if m.0 == q.0 || m.1 == q.1 {
                w.push(at(p.lambda, "ker q-", j));
            }
        }
    }
    t.push("transpose duality", "ker q-[j] normalizable at an end iff ker q+[k-j-1] is not".into(), w);

    let mut w = Vec::new();
    for p in &bases {
        let k = p.k();
        for (fam, fl) in [("ker q-", &p.minus_flags), ("ker q+", &p.plus_flags)] {
            for j in 0..k.saturating_sub(1) {
                if neither(fl[j]) {
                    w.push(at(p.lambda, fam, j));
                }
            }
            let middle: Vec<(bool, bool)> = fl.iter().copied().take(k.saturating_sub(1)).skip(1).collect();
            if middle.iter().any(|f| !one_sided(*f)) || middle.windows(2).any(|m| m[0] != m[1]) {
                w.push(format!("{fam} middle elements at lambda = {} are not one-sided on a common end", p.lambda));
            }
        }
        if k >= 3 && p.minus_flags[1].0 == p.plus_flags[1].0 {
            w.push(format!("middle elements at lambda = {} share their normalizable end with the transpose", p.lambda));
        }
    }
    t.push("only the top may be nonnormalizable at both ends", "lower elements are normalizable somewhere; middle ones on one common end, opposite in the transpose".into(), w);

    let mut w = Vec::new();
    for p in &bases {
        for (fam, fl) in [("ker q-", &p.minus_flags), ("ker q+", &p.plus_flags)] {
            if neither(fl[0]) && p.k() != 1 {
                w.push(at(p.lambda, fam, 0));
            }
        }
    }
    t.push("doubly nonnormalizable eigenfunction forces k = 1", String::new(), w);

    let mut w = Vec::new();
    for p in &bases {
        if both(p.minus_flags[0]) && both(p.plus_flags[0]) && p.k() < 2 {
            w.push(format!("lambda = {}", p.lambda));
        }
    }
    t.push("two bound eigenfunctions force k >= 2", String::new(), w);

    let mut w = Vec::new();
    for p in bases.iter().filter(|p| p.lambda.im != 0.0) {
        let m = p.minus_flags[0];
        let q = p.plus_flags[0];
        let same = |fl: &[(bool, bool)], f0: (bool, bool)| fl.iter().all(|f| one_sided(*f) && *f == f0);
        if !same(&p.minus_flags, m) || !same(&p.plus_flags, q) || m == q {
            w.push(format!("lambda = {}", p.lambda));
        }
    }
    t.push("complex values give one-sided ladders on opposite ends", String::new(), w);

    let mut w = Vec::new();
    for p in &bases {
        let k = p.k();
        let real = p.lambda.im == 0.0;
        if (real && inv.source_has(p.lambda)) != neither(p.plus_flags[k - 1]) {
            w.push(format!("source at lambda = {}", p.lambda));
        }
        if (real && inv.target_has(p.lambda)) != neither(p.minus_flags[k - 1]) {
            w.push(format!("target at lambda = {}", p.lambda));
        }
    }
    t.push("bound state at lambda_i iff the transposed top is doubly nonnormalizable", String::new(), w);

    let mut w = Vec::new();
    for (e, psi) in inv.source.iter().chain(&inv.target) {
        if let Err(err) = kernel_membership(c, psi) {
            w.push(format!("E = {e}: {err}"));
        }
    }
    t.push(
        "bound state in the kernel iff its energy is in the spectrum",
        format!("{} source and {} target bound states up to {}", inv.source.len(), inv.target.len(), inv.e_max),
        w,
    );

    let mut w = Vec::new();
    let lambdas = sample_lambdas(c, &inv);
    for z in &lambdas {
        let r = index_report_with(&bases, &inv, *z)?;
        if !r.holds() {
            w.push(format!("lambda = {z}: {} vs {} (n0 = {})", r.lhs(), r.rhs(), r.n0));
        }
    }
    t.push("index balance", format!("{} values", lambdas.len()), w);

    Ok(t)
}
