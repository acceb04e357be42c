//! Ordered products of Darboux factors, their matrix-S spectra and the
//! canonical Jordan bases of their kernels.
//!
//! A chain is assembled from kernel ladders on the source potential: every
//! step takes the lowest not yet annihilated element of one or two ladders,
//! maps it through the factors built so far, and uses the image (an
//! eigenfunction of the current intermediate Hamiltonian) as the kernel of
//! the next factor.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::darboux::{DarbouxFactor, FactorKind, FactorRecord};
use crate::error::{Error, Result};
use crate::grid::{GridPotential, JetField};
use crate::jet::C64;
use crate::schrodinger::{integrate, FormalFunction, Normalizability, Side};

/// Relative size of `chain(phi)` below which a kernel element counts as annihilated.
pub const KERNEL_TOL: f64 = 1e-6;

/// Relative eigen-residual below which `(h - lambda) f` is taken to vanish.
pub const EIGEN_TOL: f64 = 1e-7;

pub fn same_lambda(a: C64, b: C64) -> bool {
    (a - b).norm() <= 1e-9 * (1.0 + a.norm().max(b.norm()))
}

/// Jordan ladder `phi_0, ..., phi_{k-1}` with `(h - lambda) phi_j = phi_{j-1}`.
#[derive(Clone, Debug)]
pub struct KernelLadder {
    pub lambda: C64,
    pub functions: Vec<FormalFunction>,
}

impl KernelLadder {
    /// Ladder ending at `top` (its parent chain supplies the lower elements).
    pub fn from_top(top: &FormalFunction) -> Self {
        KernelLadder { lambda: top.lambda, functions: top.ladder() }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn top(&self) -> &FormalFunction {
        self.functions.last().expect("ladders are never empty")
    }

    pub fn potential(&self) -> &Arc<GridPotential> {
        &self.functions[0].potential
    }

    pub fn conjugate(&self) -> KernelLadder {
        KernelLadder::from_top(&self.top().conjugate())
    }

    pub fn is_real(&self) -> bool {
        self.lambda.im == 0.0
    }

    /// Number of leading elements normalizable at `side`.
    pub fn normalizable_prefix(&self, side: Side) -> usize {
        self.functions.iter().take_while(|f| f.norm(side) == Some(Normalizability::Normalizable)).count()
    }
}

/// One assembly step. Indices refer to the ladder list given to
/// [`FactorChain::build`]; `Second(i, i)` takes two consecutive elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStep {
    First(usize),
    TypeI(usize),
    Second(usize, usize),
}

impl ChainStep {
    pub fn order(&self) -> usize {
        match self {
            ChainStep::First(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub lambda: (f64, f64),
    /// Algebraic multiplicity.
    pub k: usize,
    pub jordan_blocks: Vec<usize>,
    /// Index of the conjugate entry for non-real values.
    pub partner: Option<usize>,
}

impl SpectrumEntry {
    pub fn value(&self) -> C64 {
        C64::new(self.lambda.0, self.lambda.1)
    }
}

/// Eigenvalues of the matrix S with multiplicities and Jordan block sizes.
/// Real entries come first in descending order; each non-real value with
/// positive imaginary part is followed by its conjugate.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MatrixSSpectrum {
    pub entries: Vec<SpectrumEntry>,
}

impl MatrixSSpectrum {
    pub fn from_ladders(ladders: &[KernelLadder]) -> Result<Self> {
        let mut groups: Vec<(C64, Vec<usize>)> = Vec::new();
        for l in ladders {
            match groups.iter_mut().find(|g| same_lambda(g.0, l.lambda)) {
                Some(g) => g.1.push(l.len()),
                None => groups.push((l.lambda, vec![l.len()])),
            }
        }
        for g in groups.iter_mut() {
            g.1.sort_unstable_by(|a, b| b.cmp(a));
        }
        let mut real: Vec<_> = groups.iter().filter(|g| g.0.im == 0.0).cloned().collect();
        real.sort_by(|a, b| b.0.re.total_cmp(&a.0.re));
        let mut upper: Vec<_> = groups.iter().filter(|g| g.0.im > 0.0).cloned().collect();
        upper.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(a.0.im.total_cmp(&b.0.im)));
        let mut entries: Vec<SpectrumEntry> = real
            .into_iter()
            .map(|(l, b)| SpectrumEntry { lambda: (l.re, l.im), k: b.iter().sum(), jordan_blocks: b, partner: None })
            .collect();
        for (l, b) in upper {
            let lower = groups
                .iter()
                .find(|g| same_lambda(g.0, l.conj()))
                .ok_or_else(|| Error::Spectrum(format!("{l} appears without its conjugate")))?;
            if lower.1 != b {
                return Err(Error::Spectrum(format!("{l} and its conjugate have different Jordan structure")));
            }
            let i = entries.len();
            let k = b.iter().sum();
            entries.push(SpectrumEntry { lambda: (l.re, l.im), k, jordan_blocks: b.clone(), partner: Some(i + 1) });
            entries.push(SpectrumEntry { lambda: (l.re, -l.im), k, jordan_blocks: b, partner: Some(i) });
        }
        if groups.iter().any(|g| g.0.im < 0.0 && !groups.iter().any(|h| same_lambda(h.0, g.0.conj()))) {
            return Err(Error::Spectrum("non-real value without its conjugate".into()));
        }
        Ok(MatrixSSpectrum { entries })
    }

    /// `N = sum k_i`.
    pub fn total_order(&self) -> usize {
        self.entries.iter().map(|e| e.k).sum()
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|e| e.lambda.1 == 0.0)
    }

    /// Algebraic multiplicity of `lambda` (zero when absent).
    pub fn multiplicity(&self, lambda: C64) -> usize {
        self.entries.iter().find(|e| same_lambda(e.value(), lambda)).map_or(0, |e| e.k)
    }

    pub fn contains(&self, lambda: C64) -> bool {
        self.multiplicity(lambda) > 0
    }

    /// Real entries in descending order.
    pub fn real_entries(&self) -> Vec<&SpectrumEntry> {
        self.entries.iter().filter(|e| e.lambda.1 == 0.0).collect()
    }

    /// Each conjugate pair once, by its member with positive imaginary part.
    pub fn pairs(&self) -> Vec<&SpectrumEntry> {
        self.entries.iter().filter(|e| e.lambda.1 > 0.0).collect()
    }

    /// All values repeated by multiplicity.
    pub fn values(&self) -> Vec<C64> {
        self.entries.iter().flat_map(|e| std::iter::repeat(e.value()).take(e.k)).collect()
    }
}

/// An ordered product `L_m ... L_1` of Darboux factors (`factors[0]` acts first).
#[derive(Clone, Debug)]
pub struct FactorChain {
    pub factors: Vec<DarbouxFactor>,
    pub steps: Vec<ChainStep>,
    pub spectrum: MatrixSSpectrum,
    pub source: Arc<GridPotential>,
    pub target: Arc<GridPotential>,
    /// Canonical basis of the kernel on the source. Conjugates of the
    /// non-real ladders are appended after the ladders passed to `build`.
    pub ladders: Vec<KernelLadder>,
    /// Index of the conjugate ladder, for non-real ladders.
    pub conj: Vec<Option<usize>>,
    /// `images[s][l]`: top of ladder `l` mapped through the first `s` factors
    /// (`None` once the whole ladder is annihilated).
    images: Vec<Vec<Option<FormalFunction>>>,
}

impl FactorChain {
    /// The identity on `source`.
    pub fn empty(source: Arc<GridPotential>) -> Self {
        FactorChain {
            factors: Vec::new(),
            steps: Vec::new(),
            spectrum: MatrixSSpectrum::default(),
            target: source.clone(),
            source,
            ladders: Vec::new(),
            conj: Vec::new(),
            images: vec![Vec::new()],
        }
    }

    /// Assembles a chain from kernel ladders on `source` and the order in
    /// which they are consumed. Every ladder must be used up by the steps.
    pub fn build(source: Arc<GridPotential>, ladders: Vec<KernelLadder>, steps: Vec<ChainStep>) -> Result<Self> {
        let primary = ladders.len();
        let mut all = ladders;
        let mut conj = vec![None; primary];
        for i in 0..primary {
            if !all[i].is_real() {
                conj[i] = Some(all.len());
                let c = all[i].conjugate();
                all.push(c);
                conj.push(Some(i));
            }
        }
        Self::assemble(source, all, conj, steps, None)
    }

    fn assemble(
        source: Arc<GridPotential>,
        ladders: Vec<KernelLadder>,
        conj: Vec<Option<usize>>,
        steps: Vec<ChainStep>,
        given: Option<Vec<DarbouxFactor>>,
    ) -> Result<Self> {
        for (i, l) in ladders.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::Spectrum(format!("ladder {i} is empty")));
            }
            if !Arc::ptr_eq(l.potential(), &source) {
                return Err(Error::GridMismatch(format!("ladder {i} does not live on the chain source")));
            }
        }
        let mut consumed = vec![0usize; ladders.len()];
        let mut current: Vec<Option<FormalFunction>> = ladders.iter().map(|l| Some(l.top().clone())).collect();
        let mut images = vec![current.clone()];
        let mut factors = Vec::with_capacity(steps.len());
        let lowest = |cur: &[Option<FormalFunction>], i: usize, depth: usize| -> Result<FormalFunction> {
            let top = cur
                .get(i)
                .ok_or_else(|| Error::Spectrum(format!("step refers to unknown ladder {i}")))?
                .as_ref()
                .ok_or_else(|| Error::Spectrum(format!("ladder {i} is already exhausted")))?;
            top.ladder()
                .into_iter()
                .nth(depth)
                .ok_or_else(|| Error::Spectrum(format!("ladder {i} has too few elements left")))
        };
        for (s, step) in steps.iter().enumerate() {
            let prebuilt = given.as_ref().map(|g| g[s].clone());
            let (factor, used): (DarbouxFactor, Vec<usize>) = match *step {
                ChainStep::First(i) => {
                    let f = match prebuilt {
                        Some(f) => f,
                        None => DarbouxFactor::make_first_order(&lowest(&current, i, 0)?)?,
                    };
                    (f, vec![i])
                }
                ChainStep::TypeI(i) => {
                    let c = conj
                        .get(i)
                        .copied()
                        .flatten()
                        .ok_or_else(|| Error::Spectrum(format!("type-I step on the real ladder {i}")))?;
                    let f = match prebuilt {
                        Some(f) => f,
                        None => DarbouxFactor::make_type_i(&lowest(&current, i, 0)?)?,
                    };
                    (f, vec![i, c])
                }
                ChainStep::Second(i, j) => {
                    let f = match prebuilt {
                        Some(f) => f,
                        None => {
                            let a = lowest(&current, i, 0)?;
                            let b = if i == j { lowest(&current, i, 1)? } else { lowest(&current, j, 0)? };
                            DarbouxFactor::make_second_order(&a, &b)?
                        }
                    };
                    (f, vec![i, j])
                }
            };
            for &u in &used {
                consumed[u] += 1;
                if consumed[u] > ladders[u].len() {
                    return Err(Error::Spectrum(format!("step {s} consumes more of ladder {u} than it holds")));
                }
            }
            for (l, cur) in current.iter_mut().enumerate() {
                let Some(top) = cur.as_ref() else { continue };
                let img = factor.apply(top)?;
                let left = ladders[l].len() - consumed[l];
                if left == 0 {
                    if !img.is_zero() {
                        return Err(Error::Audit(format!("step {s} leaves ladder {l} partly alive")));
                    }
                    *cur = None;
                } else {
                    let got = if img.is_zero() { 0 } else { img.order + 1 };
                    if got != left {
                        return Err(Error::Audit(format!(
                            "after step {s} ladder {l} keeps {got} elements instead of {left}"
                        )));
                    }
                    *cur = Some(img);
                }
            }
            images.push(current.clone());
            factors.push(factor);
        }
        if let Some(l) = consumed.iter().zip(&ladders).position(|(c, l)| *c != l.len()) {
            return Err(Error::Spectrum(format!("ladder {l} is not fully consumed by the steps")));
        }
        let spectrum = MatrixSSpectrum::from_ladders(&ladders)?;
        let target = factors.last().map_or(source.clone(), |f: &DarbouxFactor| f.target.clone());
        Ok(FactorChain { factors, steps, spectrum, source, target, ladders, conj, images })
    }

    /// `N`, the sum of the factor orders.
    pub fn order(&self) -> usize {
        self.factors.iter().map(|f| f.order).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Source, every intermediate potential, and the target.
    pub fn potentials(&self) -> Vec<Arc<GridPotential>> {
        let mut out = vec![self.source.clone()];
        out.extend(self.factors.iter().map(|f| f.target.clone()));
        out
    }

    /// Chain made of the factors from position `s` on, acting on the
    /// intermediate potential reached after `s` factors; its kernel ladders
    /// are the images of the ladders not yet annihilated.
    pub fn suffix(&self, s: usize) -> Result<FactorChain> {
        if s > self.factors.len() {
            return Err(Error::Spectrum(format!("chain has only {} factors", self.factors.len())));
        }
        let source = if s == 0 { self.source.clone() } else { self.factors[s - 1].target.clone() };
        let mut map = vec![None; self.ladders.len()];
        let mut ladders = Vec::new();
        for (l, img) in self.images[s].iter().enumerate() {
            if let Some(top) = img {
                map[l] = Some(ladders.len());
                ladders.push(KernelLadder::from_top(top));
            }
        }
        let conj = (0..self.ladders.len())
            .filter(|&l| map[l].is_some())
            .map(|l| self.conj[l].and_then(|c| map[c]))
            .collect();
        let idx = |i: usize| map[i].ok_or_else(|| Error::Spectrum(format!("ladder {i} exhausted before step")));
        let steps = self.steps[s..]
            .iter()
            .map(|st| {
                Ok(match *st {
                    ChainStep::First(i) => ChainStep::First(idx(i)?),
                    ChainStep::TypeI(i) => ChainStep::TypeI(idx(i)?),
                    ChainStep::Second(i, j) => ChainStep::Second(idx(i)?, idx(j)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(source, ladders, conj, steps, Some(self.factors[s..].to_vec()))
    }

    /// Chain made of the first `s` factors, whose kernel is the part of the
    /// ladders they annihilate.
    pub fn prefix(&self, s: usize) -> Result<FactorChain> {
        if s > self.factors.len() {
            return Err(Error::Spectrum(format!("chain has only {} factors", self.factors.len())));
        }
        let mut consumed = vec![0usize; self.ladders.len()];
        for st in &self.steps[..s] {
            match *st {
                ChainStep::First(i) => consumed[i] += 1,
                ChainStep::TypeI(i) => {
                    consumed[i] += 1;
                    consumed[self.conj[i].expect("type-I ladders have conjugates")] += 1;
                }
                ChainStep::Second(i, j) => {
                    consumed[i] += 1;
                    consumed[j] += 1;
                }
            }
        }
        let mut map = vec![None; self.ladders.len()];
        let mut ladders = Vec::new();
        for (l, &c) in consumed.iter().enumerate() {
            if c > 0 {
                map[l] = Some(ladders.len());
                ladders.push(KernelLadder::from_top(&self.ladders[l].functions[c - 1]));
            }
        }
        let conj = (0..self.ladders.len())
            .filter(|&l| map[l].is_some())
            .map(|l| self.conj[l].and_then(|c| map[c]))
            .collect();
        let m = |i: usize| map[i].expect("consumed ladders are kept");
        let steps = self.steps[..s]
            .iter()
            .map(|st| match *st {
                ChainStep::First(i) => ChainStep::First(m(i)),
                ChainStep::TypeI(i) => ChainStep::TypeI(m(i)),
                ChainStep::Second(i, j) => ChainStep::Second(m(i), m(j)),
            })
            .collect();
        Self::assemble(self.source.clone(), ladders, conj, steps, Some(self.factors[..s].to_vec()))
    }
}

/// Taylor coefficients at `E = lambda` of `1 / prod (E - mu)`, up to `t^order`.
pub fn inverse_series(lambda: C64, mus: &[C64], order: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); order + 1];
    out[0] = C64::new(1.0, 0.0);
    for &mu in mus {
        // 1 / (lambda - mu + t) = sum (-1)^n t^n / (lambda - mu)^(n+1)
        let a = (lambda - mu).inv();
        let mut s = Vec::with_capacity(order + 1);
        let mut p = a;
        for _ in 0..=order {
            s.push(p);
            p *= -a;
        }
        let mut next = vec![C64::new(0.0, 0.0); order + 1];
        for i in 0..=order {
            for j in 0..=order - i {
                next[i + j] += out[i] * s[j];
            }
        }
        out = next;
    }
    out
}

/// Extends the ladder ending at `top` by `m` associated orders. Each new
/// element solves `(h - lambda) g = previous` with zero data at the center.
pub fn extend_ladder(top: &FormalFunction, m: usize) -> Result<FormalFunction> {
    let mut cur = top.clone();
    for _ in 0..m {
        let gp = cur.potential.clone();
        let g = gp.grid();
        let c = g.nearest(0.0);
        let zero = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let right = integrate::integrate(&gp.v, cur.lambda, Some(&cur.field), c, zero, g.n - 1)?;
        let left = integrate::integrate(&gp.v, cur.lambda, Some(&cur.field), c, zero, 0)?;
        let y: Vec<(C64, C64)> = (0..g.n).map(|i| if i >= c { right[i] } else { left[i] }).collect();
        let lambda = cur.lambda;
        cur = FormalFunction::from_samples(gp, lambda, Some(Arc::new(cur)), &y)?;
    }
    Ok(cur)
}

/// Given a ladder on the source of `f` (top `g`), returns the top of a
/// ladder `psi` on its target with `f^t psi_j = g_j`, padded below by
/// elements of the kernel of `f^t` at the same value. `None` when every
/// candidate is annihilated.
pub fn lift_through(f: &DarbouxFactor, g: &FormalFunction) -> Result<Option<FormalFunction>> {
    if !Arc::ptr_eq(&g.potential, &f.source) {
        return Err(Error::GridMismatch("lifted function does not live on the factor source".into()));
    }
    let lams = f.lambdas();
    let m = lams.iter().filter(|l| same_lambda(**l, g.lambda)).count();
    let others: Vec<C64> = lams.into_iter().filter(|l| !same_lambda(*l, g.lambda)).collect();
    let ext = extend_ladder(g, m)?.ladder();
    let d = inverse_series(g.lambda, &others, ext.len() - 1);
    let mut parent: Option<Arc<FormalFunction>> = None;
    for jp in 0..ext.len() {
        let mut acc = ext[jp].field.scale(d[0]);
        for k in 1..=jp {
            acc = acc.add(&ext[jp - k].field.scale(d[k]));
        }
        let (img, scale) = crate::darboux::apply_coeffs(&f.coeffs, f.lead, &acc);
        if parent.is_none() && crate::darboux::is_negligible(&img, &scale) {
            continue;
        }
        let samples = crate::darboux::image_samples(&f.target, g.lambda, parent.as_deref(), &img);
        parent = Some(Arc::new(FormalFunction::from_samples(f.target.clone(), g.lambda, parent, &samples)?));
    }
    Ok(parent.map(|p| (*p).clone()))
}

/// Tops of the dual-kernel ladders of a factor, one per spectral value.
fn dual_tops(f: &DarbouxFactor) -> Vec<FormalFunction> {
    let mut tops: Vec<FormalFunction> = Vec::new();
    for k in &f.dual_kernel {
        match tops.iter_mut().find(|t| same_lambda(t.lambda, k.lambda)) {
            Some(t) if t.order < k.order => *t = k.clone(),
            Some(_) => {}
            None => tops.push(k.clone()),
        }
    }
    tops
}

/// Ladder lengths normalizable at each end.
#[derive(Clone, Debug)]
pub struct CanonicalLadder {
    pub lambda: C64,
    pub functions: Vec<FormalFunction>,
    /// Leading elements normalizable at `+inf`.
    pub k_plus: usize,
    /// Leading elements normalizable at `-inf`.
    pub k_minus: usize,
}

/// Checks that every ladder lists its normalizable elements first at each
/// end and records the prefix lengths.
pub fn canonical_basis(ladders: &[KernelLadder]) -> Result<Vec<CanonicalLadder>> {
    ladders
        .iter()
        .map(|l| {
            for (j, f) in l.functions.iter().enumerate() {
                if f.norm_plus.is_none() || f.norm_minus.is_none() {
                    return Err(Error::Audit(format!("element {j} at lambda = {} is unclassified", l.lambda)));
                }
            }
            let k_plus = l.normalizable_prefix(Side::Plus);
            let k_minus = l.normalizable_prefix(Side::Minus);
            for (side, k) in [(Side::Plus, k_plus), (Side::Minus, k_minus)] {
                if l.functions[k..].iter().any(|f| f.norm(side) == Some(Normalizability::Normalizable)) {
                    return Err(Error::BasisOrder(format!(
                        "ladder at lambda = {} has a normalizable element at {:?} after a nonnormalizable one",
                        l.lambda, side
                    )));
                }
            }
            Ok(CanonicalLadder { lambda: l.lambda, functions: l.functions.clone(), k_plus, k_minus })
        })
        .collect()
}

/// Split of a chain spectrum into a nonminimizable core and a polynomial
/// `P(h) = prod (lambda - h)` absorbing repeated Jordan blocks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Minimization {
    pub core: Vec<((f64, f64), usize)>,
    pub p_roots: Vec<(f64, f64)>,
}

impl Minimization {
    pub fn is_minimal(&self) -> bool {
        self.p_roots.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.p_roots.len()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductReport {
    /// `||q^t q f - prod (h - lambda) f|| / ||prod (h - lambda) f||` per test function.
    pub source_residuals: Vec<f64>,
    /// Same for `q q^t` on the target.
    pub target_residuals: Vec<f64>,
}

impl ProductReport {
    pub fn max_residual(&self) -> f64 {
        self.source_residuals.iter().chain(&self.target_residuals).copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainRecord {
    pub order: usize,
    pub steps: Vec<ChainStep>,
    pub factors: Vec<FactorRecord>,
    pub spectrum: MatrixSSpectrum,
    pub source_id: usize,
    pub target_id: usize,
}

impl FactorChain {
    pub fn apply(&self, f: &FormalFunction) -> Result<FormalFunction> {
        let mut g = f.clone();
        for factor in &self.factors {
            if g.is_zero() {
                break;
            }
            g = factor.apply(&g)?;
        }
        if g.is_zero() && !Arc::ptr_eq(&g.potential, &self.target) {
            let zero = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            g = FormalFunction::from_samples(self.target.clone(), f.lambda, None, &vec![zero; self.target.grid().n])?;
        }
        Ok(g)
    }

    pub fn apply_field(&self, f: &JetField) -> JetField {
        self.factors.iter().fold(f.clone(), |g, factor| factor.apply_field(&g))
    }

    /// Factors of `q^t = L_1^t ... L_m^t`, in the order they act.
    pub fn transpose_factors(&self) -> Vec<DarbouxFactor> {
        self.factors.iter().rev().map(|f| f.transpose()).collect()
    }

    pub fn apply_transpose_field(&self, f: &JetField) -> JetField {
        self.transpose_factors().iter().fold(f.clone(), |g, factor| factor.apply_field(&g))
    }

    /// `prod (h - lambda)^k f` over the chain spectrum, with `h` built on `potential`.
    pub fn polynomial_field(&self, potential: &GridPotential, f: &JetField) -> JetField {
        self.spectrum.values().into_iter().fold(f.clone(), |g, l| g.apply_hamiltonian(&potential.v, l))
    }

    /// Relative residuals of `q^t q = prod (h^- - lambda)^k` on the source
    /// and `q q^t = prod (h^+ - lambda)^k` on the target.
    pub fn product_identity_check(&self, source_tests: &[JetField], target_tests: &[JetField]) -> ProductReport {
        let rel = |lhs: JetField, rhs: JetField| lhs.sub(&rhs).l2_norm() / rhs.l2_norm();
        let source_residuals = source_tests
            .iter()
            .map(|f| rel(self.apply_transpose_field(&self.apply_field(f)), self.polynomial_field(&self.source, f)))
            .collect();
        let target_residuals = target_tests
            .iter()
            .map(|f| rel(self.apply_field(&self.apply_transpose_field(f)), self.polynomial_field(&self.target, f)))
            .collect();
        ProductReport { source_residuals, target_residuals }
    }

    /// Largest `||q h^+ f - h^- q f|| / ||f||` over the test functions.
    pub fn intertwining_residual(&self, tests: &[JetField]) -> f64 {
        let zero = C64::new(0.0, 0.0);
        tests
            .iter()
            .map(|f| {
                let lhs = self.apply_field(&f.apply_hamiltonian(&self.source.v, zero));
                let rhs = self.apply_field(f).apply_hamiltonian(&self.target.v, zero);
                lhs.sub(&rhs).l2_norm() / f.l2_norm()
            })
            .fold(0.0, f64::max)
    }

    /// Largest relative size of `q(phi)` over the kernel ladders.
    pub fn kernel_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for l in &self.ladders {
            for f in &l.functions {
                let img = self.apply_field(&f.field);
                let scale = f.field.l2_norm().max(f64::MIN_POSITIVE);
                worst = worst.max(img.l2_norm() / scale);
            }
        }
        worst
    }

    /// Kernel of `q^t` on the target as Jordan ladders, one per spectral
    /// value. Built by lifting the dual kernel of every factor through the
    /// later factors; only defined for chains whose spectrum has a single
    /// Jordan block per value.
    pub fn transposed_kernel(&self) -> Result<Vec<KernelLadder>> {
        let mut found: Vec<FormalFunction> = Vec::new();
        for (s, factor) in self.factors.iter().enumerate() {
            for top in dual_tops(factor) {
                let mut cur = Some(top);
                for later in &self.factors[s + 1..] {
                    cur = match cur {
                        Some(g) => lift_through(later, &g)?,
                        None => None,
                    };
                }
                let Some(t) = cur else { continue };
                match found.iter_mut().find(|f| same_lambda(f.lambda, t.lambda)) {
                    Some(f) if f.order < t.order => *f = t,
                    Some(_) => {}
                    None => found.push(t),
                }
            }
        }
        let mut out = Vec::new();
        for e in &self.spectrum.entries {
            if e.jordan_blocks.len() > 1 {
                return Err(Error::Audit(format!(
                    "lambda = {} carries several Jordan blocks; reduce the chain first",
                    e.value()
                )));
            }
            let top = found
                .iter()
                .find(|f| same_lambda(f.lambda, e.value()))
                .ok_or_else(|| Error::Audit(format!("no transposed kernel found at lambda = {}", e.value())))?;
            if top.order + 1 != e.k {
                return Err(Error::Audit(format!(
                    "transposed kernel ladder at lambda = {} has length {} instead of {}",
                    e.value(),
                    top.order + 1,
                    e.k
                )));
            }
            out.push(KernelLadder::from_top(top));
        }
        Ok(out)
    }

    pub fn canonical_basis(&self) -> Result<Vec<CanonicalLadder>> {
        canonical_basis(&self.ladders)
    }

    /// Moves a block of size `b_2` into the polynomial factor for every value
    /// carrying two Jordan blocks `b_1 >= b_2`.
    pub fn minimization(&self) -> Minimization {
        let mut core = Vec::new();
        let mut p_roots = Vec::new();
        for e in &self.spectrum.entries {
            let b1 = e.jordan_blocks[0];
            let b2 = e.jordan_blocks.get(1).copied().unwrap_or(0);
            p_roots.extend(std::iter::repeat(e.lambda).take(b2));
            if b1 > b2 {
                core.push((e.lambda, b1 - b2));
            }
        }
        Minimization { core, p_roots }
    }

    pub fn is_minimal(&self) -> bool {
        self.spectrum.entries.iter().all(|e| e.jordan_blocks.len() == 1)
    }

    /// Top of ladder `l` after the first `s` factors.
    pub fn image(&self, s: usize, l: usize) -> Option<&FormalFunction> {
        self.images.get(s).and_then(|v| v.get(l)).and_then(|f| f.as_ref())
    }

    pub fn kinds(&self) -> Vec<FactorKind> {
        self.factors.iter().map(|f| f.kind).collect()
    }

    pub fn record(&self) -> ChainRecord {
        ChainRecord {
            order: self.order(),
            steps: self.steps.clone(),
            factors: self.factors.iter().map(|f| f.record()).collect(),
            spectrum: self.spectrum.clone(),
            source_id: self.source.id,
            target_id: self.target.id,
        }
    }
}

impl FactorChain {
    /// Ladders as passed to `build`, without the appended conjugates.
    pub fn primary_ladders(&self) -> Vec<KernelLadder> {
        let p = (0..self.ladders.len()).find(|&l| self.conj[l].is_some_and(|c| c < l)).unwrap_or(self.ladders.len());
        self.ladders[..p].to_vec()
    }

    /// The same operator assembled in another order.
    pub fn reordered(&self, steps: Vec<ChainStep>) -> Result<FactorChain> {
        FactorChain::build(self.source.clone(), self.primary_ladders(), steps)
    }
}
