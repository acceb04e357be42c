//! First- and second-order Darboux factors: construction from kernel
//! functions, application, transposition and transformed potentials.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridPotential, JetField};
use crate::jet::{Jet, C64};
use crate::schrodinger::{rebuild_from_center, wronskian, FormalFunction, SpectralValue};

/// Relative size below which an image counts as the zero function.
pub const ZERO_IMAGE_TOL: f64 = 1e-7;

/// Relative eigen-residual below which a dual kernel function is an
/// eigenfunction of the target.
const DUAL_EIGEN_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    FirstOrder,
    TypeI,
    TypeII,
    TypeIII,
}

/// `L f = sum_k c_k f^(k) + lead f^(r)` mapping functions of `h_source` to
/// functions of `h_target`, with `L h_source = h_target L`.
#[derive(Clone, Debug)]
pub struct DarbouxFactor {
    pub kind: FactorKind,
    pub order: usize,
    /// Kernel on the source side.
    pub kernel: Vec<FormalFunction>,
    /// Kernel of the transpose, living on the target side.
    pub dual_kernel: Vec<FormalFunction>,
    pub coeffs: Vec<JetField>,
    pub lead: C64,
    pub source: Arc<GridPotential>,
    pub target: Arc<GridPotential>,
    pub spectrum: Vec<SpectralValue>,
    pub transposed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorRecord {
    pub order: usize,
    pub kind: FactorKind,
    pub lambdas: Vec<(f64, f64)>,
    pub source_id: usize,
    pub target_id: usize,
    pub transposed: bool,
    pub kernel: Vec<String>,
}

/// First zero of a sampled function. Cells where the phase-rotated real part
/// changes sign are refined through the Taylor series; the crossing is a zero
/// when the modulus there is negligible against the local scale. Samples
/// below `1e-12` of both neighbours also count.
pub fn find_zero(f: &JetField) -> Option<f64> {
    let g = &f.grid;
    let vals = f.values();
    let n = vals.len();
    let peak = vals.iter().cloned().fold(C64::new(0.0, 0.0), |a, v| if v.norm() > a.norm() { v } else { a });
    if peak.norm() == 0.0 {
        return Some(g.x(0));
    }
    let rot = peak.conj() / peak.norm();
    let dx = g.dx();
    for i in 0..n {
        let here = vals[i].norm();
        let nb = if i == 0 {
            vals[1].norm()
        } else if i == n - 1 {
            vals[n - 2].norm()
        } else {
            vals[i - 1].norm().max(vals[i + 1].norm())
        };
        if here <= 1e-12 * nb {
            return Some(g.x(i));
        }
        if i + 1 == n {
            break;
        }
        let r0 = (vals[i] * rot).re;
        let r1 = (vals[i + 1] * rot).re;
        if (r0 > 0.0) == (r1 > 0.0) {
            continue;
        }
        let jet = &f.jets[i];
        let (mut a, mut b) = (0.0, dx);
        for _ in 0..50 {
            let m = 0.5 * (a + b);
            let rm = (jet.eval_offset(m) * rot).re;
            if (rm > 0.0) == (r0 > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        let s = 0.5 * (a + b);
        let w = jet.eval_offset(s).norm();
        let scale = vals[i].norm().max(vals[i + 1].norm()).max(jet.deriv(1).norm() * dx);
        if w <= 1e-6 * scale {
            return Some(g.x(i) + s);
        }
    }
    None
}

/// Applies `sum_k c_k f^(k) + lead f^(r)`; also returns, node by node, the
/// sum of the term magnitudes used as the scale for zero detection.
pub fn apply_coeffs(coeffs: &[JetField], lead: C64, f: &JetField) -> (JetField, Vec<f64>) {
    let r = coeffs.len();
    let mut acc = f.nth_derivative(r).scale(lead);
    let mut scale: Vec<f64> = acc.values().iter().map(|v| v.norm()).collect();
    let mut d = f.clone();
    for c in coeffs {
        let term = c.mul(&d);
        for (s, v) in scale.iter_mut().zip(term.values()) {
            *s += v.norm();
        }
        acc = acc.add(&term);
        d = d.derivative();
    }
    (acc, scale)
}

/// Whether an image is cancellation noise at every node. A pointwise test,
/// since images of growing functions can be exponentially smaller than the
/// terms that produce them near the grid ends.
pub fn is_negligible(img: &JetField, scale: &[f64]) -> bool {
    img.values().iter().zip(scale).all(|(v, s)| v.norm() <= ZERO_IMAGE_TOL * s)
}

/// Agreement required between a rebuilt half and the raw image near the
/// center before the rebuilt tail is trusted.
const REBUILD_AGREE_TOL: f64 = 1e-6;

/// Half-width of the central stretch used for that comparison.
const REBUILD_PROBE: f64 = 1.0;

/// Node samples of an image on `target`, with both tails rebuilt from the
/// center data (see [`rebuild_from_center`]). A half keeps the raw image
/// when the rebuild disagrees with it near the center: that happens when
/// the function is tiny at the center next to its growing tail, so the
/// particular solution shot in from that end swamps the center data. Falls
/// back to the raw image entirely when no decaying solution can be shot.
pub fn image_samples(
    target: &Arc<GridPotential>,
    lambda: C64,
    parent: Option<&FormalFunction>,
    img: &JetField,
) -> Vec<(C64, C64)> {
    let g = &img.grid;
    let m = g.nearest(0.0);
    let raw: Vec<(C64, C64)> = img.jets.iter().map(|j| (j.value(), j.deriv(1))).collect();
    let Ok(mut out) = rebuild_from_center(target, lambda, parent, raw[m]) else { return raw };
    for half in [0..m + 1, m..g.n] {
        let probe: Vec<usize> = half.clone().filter(|&i| g.x(i).abs() <= REBUILD_PROBE).collect();
        let size = probe.iter().map(|&i| raw[i].0.norm().max(raw[i].1.norm())).fold(0.0, f64::max);
        let gap = probe
            .iter()
            .map(|&i| (out[i].0 - raw[i].0).norm().max((out[i].1 - raw[i].1).norm()))
            .fold(0.0, f64::max);
        if gap > REBUILD_AGREE_TOL * size {
            for i in half {
                out[i] = raw[i];
            }
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients of the formal transpose `sum_k (-d)^k c_k`.
pub fn transpose_coeffs(coeffs: &[JetField], lead: C64) -> (Vec<JetField>, C64) {
    let r = coeffs.len();
    let grid = coeffs.first().map(|c| c.grid.clone());
    let mut out = Vec::with_capacity(r);
    for m in 0..r {
        let mut acc: Option<JetField> = None;
        for (k, c) in coeffs.iter().enumerate().skip(m) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let term = c.nth_derivative(k - m).scale(C64::new(sign * binomial(k, m), 0.0));
            acc = Some(match acc {
                Some(a) => a.add(&term),
                None => term,
            });
        }
        // the constant leading coefficient has no derivatives to contribute
        // except for m = r, which is the new lead
        out.push(acc.unwrap_or_else(|| JetField::zeros(grid.clone().unwrap(), 0)));
    }
    let lead_t = if r % 2 == 0 { lead } else { -lead };
    (out, lead_t)
}

/// Residual `(h - lambda) f` through jets.
fn h_minus(v: &JetField, lambda: C64, f: &JetField) -> JetField {
    f.apply_hamiltonian(v, lambda)
}

/// Largest pointwise `|(h - lambda) d - c e|` relative to the size of the
/// terms that cancel in it, over `|x| <= window`. A global ratio is useless
/// here: a growing candidate swamps a bounded residual, and an associated
/// function then passes as an eigenfunction.
fn pointwise_residual(v: &JetField, lambda: C64, d: &JetField, fit: Option<(C64, &JetField)>, window: f64) -> f64 {
    let r = h_minus(v, lambda, d);
    let g = &d.grid;
    let dx = g.dx();
    (0..g.n)
        .filter(|&i| g.x(i).abs() <= window)
        .map(|i| {
            let j = &d.jets[i];
            let mut terms = j.deriv(2).norm() + ((v.jets[i].value() - lambda) * j.value()).norm() + j.deriv(1).norm() * dx;
            let mut res = r.jets[i].value();
            if let Some((c, e)) = fit {
                let ce = c * e.jets[i].value();
                res -= ce;
                terms += ce.norm();
            }
            res.norm() / terms.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// Least-squares coefficient `c` in `a ~ c b`.
fn ls_coeff(a: &JetField, b: &JetField) -> C64 {
    let (av, bv) = (a.values(), b.values());
    let num: C64 = av.iter().zip(&bv).map(|(x, y)| x * y.conj()).sum();
    let den: f64 = bv.iter().map(|y| y.norm_sqr()).sum();
    num / den
}

impl DarbouxFactor {
    /// `f -> f' - (phi'/phi) f` for a real eigenfunction `phi` without zeros.
    pub fn make_first_order(phi: &FormalFunction) -> Result<Self> {
        if phi.order != 0 {
            return Err(Error::Domain("first-order factors need an eigenfunction".into()));
        }
        let im = phi.field.map(|j| Jet::from_coeffs(j.coeffs().iter().map(|c| C64::new(c.im, 0.0)).collect()));
        if im.max_abs() > 1e-10 * phi.field.max_abs() || phi.lambda.im != 0.0 {
            return Err(Error::Domain("first-order factors need a real eigenfunction at a real spectral value".into()));
        }
        if let Some(x) = find_zero(&phi.field) {
            return Err(Error::SingularFactor { x, what: format!("kernel eigenfunction at lambda = {}", phi.lambda) });
        }
        let c0 = phi.field.derivative().div(&phi.field).scale(C64::new(-1.0, 0.0));
        let spectrum = vec![SpectralValue { lambda: phi.lambda, multiplicity: 1 }];
        Self::assemble(FactorKind::FirstOrder, vec![phi.clone()], vec![c0], spectrum)
    }

    /// Type-I factor with kernel `{phi*, phi}` for non-real `lambda`.
    pub fn make_type_i(phi: &FormalFunction) -> Result<Self> {
        if phi.lambda.im == 0.0 {
            return Err(Error::Domain("type-I factors need a non-real spectral value".into()));
        }
        if phi.order != 0 {
            return Err(Error::Domain("type-I factors need an eigenfunction".into()));
        }
        let kernel = vec![phi.conjugate(), phi.clone()];
        let w = wronskian(&kernel[0].field, &kernel[1].field);
        // iW is real and strictly monotone when the kernel is zero-free
        let iw: Vec<f64> = w.values().iter().map(|z| (C64::new(0.0, 1.0) * z).re).collect();
        let sign = phi.lambda.im.signum();
        let monotone = iw.windows(2).all(|p| sign * (p[1] - p[0]) >= -1e-12 * p[0].abs().max(p[1].abs()));
        let crossing = iw.iter().any(|v| v.signum() != iw[0].signum() && *v != 0.0);
        if !monotone || crossing {
            let x = find_zero(&w).unwrap_or(0.0);
            return Err(Error::SingularFactor { x, what: "Wronskian of a type-I kernel".into() });
        }
        let spectrum = vec![
            SpectralValue { lambda: phi.lambda, multiplicity: 1 },
            SpectralValue { lambda: phi.lambda.conj(), multiplicity: 1 },
        ];
        let (coeffs, kernel) = Self::second_order_coeffs(kernel)?;
        // conjugation only permutes the kernel, so the coefficients are real
        let coeffs = real_coeffs(coeffs)?;
        Self::assemble(FactorKind::TypeI, kernel, coeffs, spectrum)
    }

    /// Second-order factor with a real kernel `{a, b}`: two eigenfunctions at
    /// different real values (type II) or one Jordan pair `b -> a` (type III).
    pub fn make_second_order(a: &FormalFunction, b: &FormalFunction) -> Result<Self> {
        if a.lambda.im != 0.0 || b.lambda.im != 0.0 {
            return Err(Error::Domain("type II/III factors need real spectral values".into()));
        }
        let same = (a.lambda - b.lambda).norm() <= 1e-12 * (1.0 + a.lambda.norm());
        let (kind, spectrum) = if same {
            (FactorKind::TypeIII, vec![SpectralValue { lambda: a.lambda, multiplicity: 2 }])
        } else {
            (
                FactorKind::TypeII,
                vec![
                    SpectralValue { lambda: a.lambda, multiplicity: 1 },
                    SpectralValue { lambda: b.lambda, multiplicity: 1 },
                ],
            )
        };
        let (coeffs, kernel) = Self::second_order_coeffs(vec![a.clone(), b.clone()])?;
        let coeffs = real_coeffs(coeffs)?;
        Self::assemble(kind, kernel, coeffs, spectrum)
    }

    fn second_order_coeffs(kernel: Vec<FormalFunction>) -> Result<(Vec<JetField>, Vec<FormalFunction>)> {
        let (a, b) = (&kernel[0].field, &kernel[1].field);
        let w = wronskian(a, b);
        if let Some(x) = find_zero(&w) {
            return Err(Error::SingularFactor { x, what: "Wronskian of a second-order kernel".into() });
        }
        let (a1, b1) = (a.derivative(), b.derivative());
        let (a2, b2) = (a.nth_derivative(2), b.nth_derivative(2));
        let c1 = w.derivative().div(&w).scale(C64::new(-1.0, 0.0));
        let c0 = a1.mul(&b2).sub(&a2.mul(&b1)).div(&w);
        Ok((vec![c0, c1], kernel))
    }

    fn assemble(
        kind: FactorKind,
        kernel: Vec<FormalFunction>,
        coeffs: Vec<JetField>,
        spectrum: Vec<SpectralValue>,
    ) -> Result<Self> {
        let source = kernel[0].potential.clone();
        for k in &kernel {
            if !Arc::ptr_eq(&k.potential, &source) {
                return Err(Error::GridMismatch("kernel functions on different potentials".into()));
            }
        }
        let r = coeffs.len();
        let top = &coeffs[r - 1];
        let v_tgt = source.v.add(&top.derivative().scale(C64::new(2.0, 0.0))).map(real_part);
        let lambdas: Vec<String> = spectrum.iter().map(|s| format!("{}", s.lambda)).collect();
        let step = format!("{kind:?} factor at {}", lambdas.join(", "));
        let target = GridPotential::derived(v_tgt, &source, step)?;
        let mut f = DarbouxFactor {
            kind,
            order: r,
            kernel,
            dual_kernel: Vec::new(),
            coeffs,
            lead: C64::new(1.0, 0.0),
            source,
            target,
            spectrum,
            transposed: false,
        };
        f.dual_kernel = f.compute_dual_kernel()?;
        Ok(f)
    }

    /// Kernel of the transpose: complement Wronskians over `W`, with the
    /// spectral value of each element found from its eigen-residual and
    /// associated elements rescaled so that `(h - lambda) psi_1 = psi_0`.
    fn compute_dual_kernel(&self) -> Result<Vec<FormalFunction>> {
        let mut cands: Vec<JetField> = if self.order == 1 {
            vec![self.kernel[0].field.map(|j| j.recip())]
        } else {
            let w = wronskian(&self.kernel[0].field, &self.kernel[1].field);
            vec![self.kernel[1].field.div(&w), self.kernel[0].field.div(&w)]
        };
        let v = &self.target.v;
        let window = self.target.window_end;
        let lambdas: Vec<C64> = self.spectrum.iter().map(|s| s.lambda).collect();
        let mut best: Vec<(C64, f64)> = cands
            .iter()
            .map(|d| {
                lambdas
                    .iter()
                    .map(|&l| (l, pointwise_residual(v, l, d, None, window)))
                    .fold((lambdas[0], f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
            })
            .collect();
        if cands.len() == 2 && best[0].1 <= DUAL_EIGEN_TOL && best[1].1 > DUAL_EIGEN_TOL {
            cands.swap(0, 1);
            best.swap(0, 1);
        }
        let to_samples = |f: &JetField| -> Vec<(C64, C64)> { f.jets.iter().map(|j| (j.value(), j.deriv(1))).collect() };
        let mut out = Vec::new();
        if cands.len() == 2 && best[0].1 > DUAL_EIGEN_TOL && best[1].1 <= DUAL_EIGEN_TOL {
            // Jordan pair: cands[1] is the eigenfunction, cands[0] the associated one
            let lambda = best[1].0;
            let eig = Arc::new(FormalFunction::from_samples(self.target.clone(), lambda, None, &to_samples(&cands[1]))?);
            let r = h_minus(v, lambda, &cands[0]);
            let c = ls_coeff(&r, &cands[1]);
            let fit = pointwise_residual(v, lambda, &cands[0], Some((c, &cands[1])), window);
            if fit > DUAL_EIGEN_TOL {
                return Err(Error::Audit(format!("dual kernel is not a Jordan pair (fit {fit:.2e})")));
            }
            let assoc = cands[0].scale(C64::new(1.0, 0.0) / c);
            let assoc = FormalFunction::from_samples(self.target.clone(), lambda, Some(eig.clone()), &to_samples(&assoc))?;
            out.push((*eig).clone());
            out.push(assoc);
            return Ok(out);
        }
        for (d, (l, res)) in cands.iter().zip(best.iter_mut()) {
            if *res > DUAL_EIGEN_TOL {
                return Err(Error::Audit(format!("dual kernel element has eigen-residual {res:.2e}")));
            }
            out.push(FormalFunction::from_samples(self.target.clone(), *l, None, &to_samples(d))?);
        }
        Ok(out)
    }

    /// Applies the factor to a test function given as jets.
    pub fn apply_field(&self, f: &JetField) -> JetField {
        apply_coeffs(&self.coeffs, self.lead, f).0
    }

    /// Image of a formal associated function. Images of kernel elements
    /// vanish, so the association order drops by the number of ladder
    /// elements that are annihilated.
    pub fn apply(&self, f: &FormalFunction) -> Result<FormalFunction> {
        if !Arc::ptr_eq(&f.potential, &self.source) {
            return Err(Error::GridMismatch(format!(
                "function lives on potential {} but the factor acts on {}",
                f.potential.id, self.source.id
            )));
        }
        let ladder = f.ladder();
        let mut parent: Option<Arc<FormalFunction>> = None;
        for g in &ladder {
            let (img, scale) = apply_coeffs(&self.coeffs, self.lead, &g.field);
            let zero = is_negligible(&img, &scale);
            if zero && parent.is_none() {
                continue;
            }
            let samples = image_samples(&self.target, f.lambda, parent.as_deref(), &img);
            parent = Some(Arc::new(FormalFunction::from_samples(self.target.clone(), f.lambda, parent, &samples)?));
        }
        match parent {
            Some(p) => Ok((*p).clone()),
            None => {
                let zero = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
                let samples = vec![zero; self.target.grid().n];
                let mut z = FormalFunction::from_samples(self.target.clone(), f.lambda, None, &samples)?;
                z.norm_plus = Some(crate::schrodinger::Normalizability::Normalizable);
                z.norm_minus = Some(crate::schrodinger::Normalizability::Normalizable);
                Ok(z)
            }
        }
    }

    /// The factor intertwining in the opposite direction.
    pub fn transpose(&self) -> DarbouxFactor {
        let (coeffs, lead) = transpose_coeffs(&self.coeffs, self.lead);
        DarbouxFactor {
            kind: self.kind,
            order: self.order,
            kernel: self.dual_kernel.clone(),
            dual_kernel: self.kernel.clone(),
            coeffs,
            lead,
            source: self.target.clone(),
            target: self.source.clone(),
            spectrum: self.spectrum.clone(),
            transposed: !self.transposed,
        }
    }

    /// `||L h_src f - h_tgt L f|| / ||f||`.
    pub fn intertwining_residual(&self, f: &JetField) -> f64 {
        let zero = C64::new(0.0, 0.0);
        let lhs = self.apply_field(&f.apply_hamiltonian(&self.source.v, zero));
        let rhs = self.apply_field(f).apply_hamiltonian(&self.target.v, zero);
        lhs.sub(&rhs).l2_norm() / f.l2_norm()
    }

    /// `prod (h_src - lambda)^k f` over the factor spectrum.
    pub fn polynomial_field(&self, f: &JetField) -> JetField {
        let mut g = f.clone();
        for s in &self.spectrum {
            for _ in 0..s.multiplicity {
                g = g.apply_hamiltonian(&self.source.v, s.lambda);
            }
        }
        g
    }

    /// `||L^t L f - prod (h - lambda) f|| / ||prod (h - lambda) f||`.
    pub fn product_residual(&self, f: &JetField) -> f64 {
        let t = self.transpose();
        let lhs = t.apply_field(&self.apply_field(f));
        let rhs = self.polynomial_field(f);
        lhs.sub(&rhs).l2_norm() / rhs.l2_norm()
    }

    pub fn lambdas(&self) -> Vec<C64> {
        self.spectrum.iter().flat_map(|s| std::iter::repeat(s.lambda).take(s.multiplicity)).collect()
    }

    pub fn record(&self) -> FactorRecord {
        FactorRecord {
            order: self.order,
            kind: self.kind,
            lambdas: self.lambdas().iter().map(|l| (l.re, l.im)).collect(),
            source_id: self.source.id,
            target_id: self.target.id,
            transposed: self.transposed,
            kernel: self
                .kernel
                .iter()
                .map(|k| format!("order {} at lambda = {} ({:?}/{:?})", k.order, k.lambda, k.norm_minus, k.norm_plus))
                .collect(),
        }
    }
}

/// Relative size of the imaginary parts tolerated before dropping them.
pub const REAL_COEFF_TOL: f64 = 1e-8;

fn real_coeffs(coeffs: Vec<JetField>) -> Result<Vec<JetField>> {
    for (k, c) in coeffs.iter().enumerate() {
        let im = c.values().iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if im > REAL_COEFF_TOL * c.max_abs().max(1.0) {
            return Err(Error::Audit(format!("coefficient c_{k} has imaginary part {im:.2e}")));
        }
    }
    Ok(coeffs.into_iter().map(|c| c.map(real_part)).collect())
}

fn real_part(j: &Jet) -> Jet {
    Jet::from_coeffs(j.coeffs().iter().map(|c| C64::new(c.re, 0.0)).collect())
}
