//! The run drivers. Each returns an [`Outcome`]; numeric aborts propagate
//! as errors and become exit code 3 with a diagnostic.

use std::path::Path;
use std::sync::Arc;

use intertwine_core::analysis::{
    chain_bases, corollary_audit, index_report_with, kernel_membership, sample_lambdas, BoundInventory, IndexReport,
};
use intertwine_core::chain::FactorChain;
use intertwine_core::factorize::{theorem2_factorize, theorem3_factorize, FactorizationPlan, Group, PlanRecord, TEST_COUNT, TEST_SEED};
use intertwine_core::grid::GridPotential;
use intertwine_core::schrodinger::checks::{asymptotic_match, counterexample_wronskian};
use intertwine_core::testfns::test_functions;
use intertwine_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::build;
use crate::config::{Driver, RunConfig};
use crate::output::Artifacts;

/// Relative error allowed on the closed-form counterexample Wronskian.
const COUNTEREXAMPLE_TOL: f64 = 1e-8;

pub struct Outcome {
    pub ok: bool,
    pub summary: String,
    pub failures: Vec<String>,
    pub potentials: Vec<Arc<GridPotential>>,
    /// The chain the run produced (the plan chain for factorizations).
    pub chain: Option<FactorChain>,
    pub residuals: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Intertwining residual of the chain as configured.
    pub chain_intertwining: f64,
    /// Same for the reordered chain of the plan.
    pub plan_intertwining: f64,
    /// Per-factor residuals of the plan, in acting order.
    pub factors: Vec<f64>,
    /// `q^t q = P(h)` and `q q^t = P(h)` on the plan chain.
    pub product_identity: f64,
}

impl Residuals {
    fn values(&self) -> Vec<f64> {
        let mut v = vec![self.chain_intertwining, self.plan_intertwining, self.product_identity];
        v.extend(&self.factors);
        v
    }

    /// Largest absolute difference, or `None` when the shapes differ.
    pub fn drift(&self, other: &Residuals) -> Option<f64> {
        let (a, b) = (self.values(), other.values());
        (a.len() == b.len()).then(|| a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }
}

/// Contents of plan.json: enough to rebuild and re-verify the plan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanFile {
    pub driver: Driver,
    pub config: RunConfig,
    pub residuals: Residuals,
    pub plan: PlanRecord,
}

pub fn run(driver: Driver, cfg: &RunConfig, art: &mut Artifacts, replay: Option<&Path>) -> Result<Outcome> {
    match (driver, replay) {
        (Driver::Verify, Some(p)) => replay_plan(p, art),
        (Driver::Factorize2 | Driver::Factorize3, _) => factorize(driver, cfg, art).map(|(o, _)| o),
        (Driver::Index, _) => index(cfg, art, false),
        (Driver::Verify, None) => index(cfg, art, true),
        (Driver::Asymptotics, _) => asymptotics(cfg, art),
    }
}

fn residuals(chain: &FactorChain, plan: &FactorizationPlan) -> Residuals {
    let tests = test_functions(chain.source.grid(), TEST_COUNT, TEST_SEED);
    let back = test_functions(plan.chain.target.grid(), TEST_COUNT, TEST_SEED + 1);
    let factors = plan
        .chain
        .factors
        .iter()
        .map(|f| {
            let t = test_functions(f.source.grid(), TEST_COUNT, TEST_SEED);
            t.iter().map(|x| f.intertwining_residual(x)).fold(0.0, f64::max)
        })
        .collect();
    Residuals {
        chain_intertwining: chain.intertwining_residual(&tests),
        plan_intertwining: plan.chain.intertwining_residual(&tests),
        factors,
        product_identity: plan.chain.product_identity_check(&tests, &back).max_residual(),
    }
}

pub fn factorize(driver: Driver, cfg: &RunConfig, art: &mut Artifacts) -> Result<(Outcome, PlanFile)> {
    let gp = build::grid_potential(cfg)?;
    let chain = build::chain(cfg, &gp)?;
    let (plan, theorem, groups) = match driver {
        Driver::Factorize2 => (theorem2_factorize(&chain)?, "theorem2", [Group::Right, Group::Middle, Group::Left]),
        _ => (theorem3_factorize(&chain)?, "theorem3", [Group::J1, Group::J2, Group::J3]),
    };
    let res = residuals(&chain, &plan);
    let tol = &cfg.tolerances;
    let mut failures: Vec<String> = plan.failures().iter().map(|c| format!("{}: {}", c.name, c.detail)).collect();
    if !(res.plan_intertwining < tol.plan) {
        failures.push(format!("plan intertwining residual {:.3e} exceeds {:.1e}", res.plan_intertwining, tol.plan));
    }
    for (i, r) in res.factors.iter().enumerate() {
        if !(*r < tol.factor) {
            failures.push(format!("factor {i} residual {r:.3e} exceeds {:.1e}", tol.factor));
        }
    }
    let (a, b, c) = plan.group_sizes(groups);
    let record = plan.record(theorem);
    let file = PlanFile { driver, config: cfg.clone(), residuals: res.clone(), plan: record };
    art.json("plan.json", &file)?;
    let certs: String = plan
        .certificates
        .iter()
        .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
        .collect();
    art.json(
        "audit.json",
        &json!({ "certificates": plan.certificates, "counts": plan.counts, "groups": [a, b, c], "residuals": res, "text": certs }),
    )?;
    art.text("audit.txt", &certs)?;
    art.chain_bundle(&plan.chain)?;
    let summary = format!(
        "{}: N = {}, {} factors, groups ({a}, {b}, {c}), plan residual {:.2e}, worst factor {:.2e}",
        driver.name(),
        chain.order(),
        plan.factors().len(),
        res.plan_intertwining,
        res.factors.iter().copied().fold(0.0, f64::max),
    );
    let outcome = Outcome {
        ok: failures.is_empty(),
        summary,
        failures,
        potentials: plan.chain.potentials(),
        chain: Some(plan.chain.clone()),
        residuals: serde_json::to_value(&res)?,
    };
    Ok((outcome, file))
}

fn index(cfg: &RunConfig, art: &mut Artifacts, full: bool) -> Result<Outcome> {
    let gp = build::grid_potential(cfg)?;
    let chain = build::chain(cfg, &gp)?;
    let inv = BoundInventory::for_chain(&chain)?;
    let bases = chain_bases(&chain)?;
    let lambdas = if cfg.index.lambdas.is_empty() {
        sample_lambdas(&chain, &inv)
    } else {
        cfg.index.lambdas.iter().map(|v| v.c64()).collect()
    };
    let reports: Vec<IndexReport> = lambdas.iter().map(|z| index_report_with(&bases, &inv, *z)).collect::<Result<_>>()?;
    let table = corollary_audit(&chain)?;
    let mut failures: Vec<String> = table.failures().iter().map(|r| format!("{}: {}", r.name, r.detail)).collect();
    for r in reports.iter().filter(|r| !r.holds()) {
        failures.push(format!("index balance fails at lambda = ({}, {})", r.lambda.0, r.lambda.1));
    }
    let mut extra = json!(null);
    if full {
        let s = test_functions(chain.source.grid(), TEST_COUNT, TEST_SEED);
        let t = test_functions(chain.target.grid(), TEST_COUNT, TEST_SEED + 1);
        let product = chain.product_identity_check(&s, &t).max_residual();
        let intertwining = chain.intertwining_residual(&s);
        if !(intertwining < cfg.tolerances.plan) {
            failures.push(format!("intertwining residual {intertwining:.3e} exceeds {:.1e}", cfg.tolerances.plan));
        }
        if !(product < cfg.tolerances.plan) {
            failures.push(format!("product identity residual {product:.3e} exceeds {:.1e}", cfg.tolerances.plan));
        }
        let mut membership = Vec::new();
        for (end, levels) in [("source", &inv.source), ("target", &inv.target)] {
            for (e, psi) in levels.iter() {
                match kernel_membership(&chain, psi) {
                    Ok(inside) => membership.push(json!({ "end": end, "energy": e, "in_kernel": inside })),
                    Err(Error::Audit(m)) => failures.push(m),
                    Err(err) => return Err(err),
                }
            }
        }
        extra = json!({ "intertwining": intertwining, "product_identity": product, "membership": membership });
    }
    let mut text = table.render();
    for r in &reports {
        text.push_str(&format!(
            "index at ({:.4}, {:.4}): nu+ {} n+ {} | nu- {} n- {} | n0 {} -> {}\n",
            r.lambda.0,
            r.lambda.1,
            r.nu_plus,
            r.n_plus,
            r.nu_minus,
            r.n_minus,
            r.n0,
            if r.holds() { "balanced" } else { "UNBALANCED" }
        ));
    }
    art.json("audit.json", &json!({ "table": table, "index": reports, "verify": extra, "text": text }))?;
    art.text("audit.txt", &text)?;
    art.chain_bundle(&chain)?;
    let balanced = reports.iter().filter(|r| r.holds()).count();
    let summary = format!(
        "{}: N = {}, index balanced at {balanced}/{} values, {} audit rows, {} failures",
        if full { "verify" } else { "index" },
        chain.order(),
        reports.len(),
        table.rows.len(),
        failures.len()
    );
    let potentials = chain.potentials();
    Ok(Outcome { ok: failures.is_empty(), summary, failures, potentials, chain: Some(chain), residuals: extra })
}

fn asymptotics(cfg: &RunConfig, art: &mut Artifacts) -> Result<Outcome> {
    let a = &cfg.asymptotics;
    let p = build::potential(cfg)?;
    let rep = asymptotic_match(&p, a.lambda.c64(), a.side, (a.range[0], a.range[1]), a.half_width, a.dx)?;
    let mut failures = Vec::new();
    if !rep.bounded {
        failures.push(format!("error * xi grows: {:.4} on the inner half, {:.4} on the outer", rep.inner_max, rep.outer_max));
    }
    let mut rows = String::from("x,xi,rel_error,error_times_xi\n");
    for (x, xi, e, ex) in &rep.samples {
        rows.push_str(&format!("{x},{xi},{e},{ex}\n"));
    }
    art.text("grids/asymptotics.csv", &rows)?;
    let mut cex = None;
    if let Some([alpha, beta, delta]) = a.counterexample {
        let r = counterexample_wronskian(alpha, beta, delta, (a.counterexample_range[0], a.counterexample_range[1]), a.counterexample_dx)?;
        if !(r.sup_error < COUNTEREXAMPLE_TOL && r.pointwise_error < COUNTEREXAMPLE_TOL) {
            failures.push(format!("counterexample Wronskian error {:.3e} (pointwise {:.3e})", r.sup_error, r.pointwise_error));
        }
        let mut rows = String::from("x,im_w,im_w_exact\n");
        for (x, w, we) in &r.samples {
            rows.push_str(&format!("{x},{},{}\n", w.im, we.im));
        }
        art.text("grids/counterexample.csv", &rows)?;
        cex = Some(r);
    }
    art.json("audit.json", &json!({ "asymptotics": rep, "counterexample": cex }))?;
    let summary = format!(
        "asymptotics: error * xi {:.4} inner, {:.4} outer{}",
        rep.inner_max,
        rep.outer_max,
        cex.as_ref().map(|r| format!("; counterexample error {:.2e}, root {:?}", r.sup_error, r.root)).unwrap_or_default()
    );
    let residuals = json!({ "asymptotics_outer": rep.outer_max, "counterexample": cex.as_ref().map(|r| r.sup_error) });
    Ok(Outcome { ok: failures.is_empty(), summary, failures, potentials: Vec::new(), chain: None, residuals })
}

/// Rebuilds a recorded plan from its embedded configuration and compares
/// the residuals.
fn replay_plan(path: &Path, art: &mut Artifacts) -> Result<Outcome> {
    let text = std::fs::read_to_string(path)?;
    let recorded: PlanFile = serde_json::from_str(&text)?;
    recorded.config.validate()?;
    let (mut outcome, fresh) = factorize(recorded.driver, &recorded.config, art)?;
    let tol = recorded.config.tolerances.replay;
    let drift = recorded.residuals.drift(&fresh.residuals);
    let counts_match = recorded.plan.counts.factors == fresh.plan.counts.factors
        && recorded.plan.counts.j1 == fresh.plan.counts.j1
        && recorded.plan.counts.j2 == fresh.plan.counts.j2
        && recorded.plan.counts.j3 == fresh.plan.counts.j3;
    art.json(
        "replay.json",
        &json!({ "source": path, "recorded": recorded.residuals, "replayed": fresh.residuals, "drift": drift, "tolerance": tol }),
    )?;
    match drift {
        Some(d) if d <= tol && counts_match => {}
        Some(d) => outcome.failures.push(format!("replayed residuals drift by {d:.3e} (tolerance {tol:.1e}), counts match: {counts_match}")),
        None => outcome.failures.push("replayed plan has a different number of factors".into()),
    }
    outcome.ok = outcome.failures.is_empty();
    outcome.summary = format!("replay of {}: drift {:?}; {}", path.display(), drift, outcome.summary);
    Ok(outcome)
}
