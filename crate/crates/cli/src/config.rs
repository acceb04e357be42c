//! Run configuration: a TOML file naming the source potential, the grid,
//! the spectral edit list and the tolerances. Everything the run does is
//! determined by this struct, and plan.json embeds a copy so a plan can be
//! replayed.

use std::path::{Path, PathBuf};

use intertwine_core::chain::ChainStep;
use intertwine_core::schrodinger::Side;
use intertwine_core::{Error, Result, C64};
use serde::{Deserialize, Serialize};

/// Built-in reference chains on the shifted oscillator.
pub const FIXTURES: &[&str] = &[
    "ground_deletion",
    "one_sided",
    "two_level",
    "type_one",
    "mixed",
    "order_three",
    "isospectral",
    "type_three",
    "dressed",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    Factorize2,
    Factorize3,
    Index,
    Asymptotics,
    Verify,
}

impl Driver {
    pub fn name(self) -> &'static str {
        match self {
            Driver::Factorize2 => "factorize2",
            Driver::Factorize3 => "factorize3",
            Driver::Index => "index",
            Driver::Asymptotics => "asymptotics",
            Driver::Verify => "verify",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    /// Ladder of solutions decaying at `+inf` (a bound state at a level).
    #[default]
    Kernel,
    /// Ladder decaying at `-inf`.
    Minus,
    /// Jordan pair at a bound level: isospectral or type III.
    Fused,
    /// A solution growing at both ends.
    Growing,
}

/// A spectral value, written either as a real number or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Real(f64),
    Complex([f64; 2]),
}

impl Value {
    pub fn c64(self) -> C64 {
        match self {
            Value::Real(x) => C64::new(x, 0.0),
            Value::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralEdit {
    pub lambda: Value,
    #[serde(default = "one")]
    pub multiplicity: usize,
    #[serde(default)]
    pub kind: EditKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Half-width `X`. Chosen from `xi` when absent.
    pub x: Option<f64>,
    /// Node count. Derived from `dx` when absent.
    pub n: Option<usize>,
    pub dx: Option<f64>,
    /// Target `int_{R0}^{X} sqrt|V|` for the automatic half-width.
    pub xi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Bound on the relative intertwining residual of a plan.
    pub plan: f64,
    /// Bound on the relative per-factor residual.
    pub factor: f64,
    /// Allowed drift between recorded and replayed residuals.
    pub replay: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { plan: 1e-5, factor: 1e-6, replay: 1e-12 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexConfig {
    /// Values at which to evaluate the index balance. Sampled from the
    /// chain when empty.
    #[serde(default)]
    pub lambdas: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymptoticsConfig {
    pub lambda: Value,
    pub side: Side,
    pub range: [f64; 2],
    pub half_width: f64,
    pub dx: f64,
    /// `[alpha, beta, delta]` for the Wronskian counterexample.
    pub counterexample: Option<[f64; 3]>,
    pub counterexample_range: [f64; 2],
    pub counterexample_dx: f64,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        AsymptoticsConfig {
            lambda: Value::Real(-1.0),
            side: Side::Plus,
            range: [4.0, 8.0],
            half_width: 24.0,
            dx: 0.01,
            counterexample: Some([1.0, 1.0, 1.0]),
            counterexample_range: [-2.0, 6.0],
            counterexample_dx: 0.0025,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub driver: Option<Driver>,
    /// One of [`FIXTURES`]; replaces `potential`, `edits` and `steps`.
    pub fixture: Option<String>,
    /// Expression in `x`, e.g. `x^2 - 3`.
    pub potential: Option<String>,
    #[serde(default = "unit")]
    pub r0: f64,
    #[serde(default = "unit")]
    pub eps: f64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub edits: Vec<SpectralEdit>,
    /// Explicit order, e.g. `["type1 1", "first 0", "second 0 0"]`, with
    /// ladder indices counted over the edits (conjugate partners skipped).
    #[serde(default)]
    pub steps: Vec<String>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub index: IndexConfig,
    #[serde(default)]
    pub asymptotics: AsymptoticsConfig,
    pub out: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            driver: None,
            fixture: None,
            potential: None,
            r0: 1.0,
            eps: 1.0,
            grid: GridConfig::default(),
            edits: Vec::new(),
            steps: Vec::new(),
            tolerances: Tolerances::default(),
            index: IndexConfig::default(),
            asymptotics: AsymptoticsConfig::default(),
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn for_fixture(name: &str) -> Self {
        RunConfig { fixture: Some(name.to_string()), ..RunConfig::default() }
    }

    /// Checks everything that can be checked before any numerics run.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.r0 > 0.0) || !(self.eps > 0.0) {
            return bad(format!("r0 and eps must be positive (got {}, {})", self.r0, self.eps));
        }
        if let Some(x) = self.grid.x {
            if !(x > 0.0) {
                return bad(format!("grid.x must be positive (got {x})"));
            }
        }
        if let Some(dx) = self.grid.dx {
            if !(dx > 0.0) {
                return bad(format!("grid.dx must be positive (got {dx})"));
            }
        }
        for (name, t) in [("plan", self.tolerances.plan), ("factor", self.tolerances.factor), ("replay", self.tolerances.replay)] {
            if !(t > 0.0) {
                return bad(format!("tolerances.{name} must be positive (got {t})"));
            }
        }
        if let Some(f) = &self.fixture {
            if !FIXTURES.contains(&f.as_str()) {
                return bad(format!("unknown fixture `{f}`; expected one of {FIXTURES:?}"));
            }
            if self.potential.is_some() || !self.edits.is_empty() || !self.steps.is_empty() {
                return bad("`fixture` excludes `potential`, `edits` and `steps`".into());
            }
            return Ok(());
        }
        if self.potential.is_none() {
            return bad("either `fixture` or `potential` is required".into());
        }
        for e in &self.edits {
            validate_edit(e)?;
        }
        check_pairs(&self.edits)?;
        let ladders = self.ladder_edits().len();
        for s in &self.steps {
            let step = parse_step(s)?;
            let used = match step {
                ChainStep::First(i) | ChainStep::TypeI(i) => i,
                ChainStep::Second(i, j) => i.max(j),
            };
            if used >= ladders {
                return bad(format!("step `{s}` refers to ladder {used} but only {ladders} ladders are defined"));
            }
        }
        Ok(())
    }

    /// Edits that become ladders: the conjugate partner (`Im < 0`) of a
    /// pair is implied by its `Im > 0` member.
    pub fn ladder_edits(&self) -> Vec<&SpectralEdit> {
        self.edits.iter().filter(|e| e.lambda.c64().im >= 0.0).collect()
    }
}

fn validate_edit(e: &SpectralEdit) -> Result<()> {
    let z = e.lambda.c64();
    let bad = |m: String| Err(Error::Config(m));
    if !z.re.is_finite() || !z.im.is_finite() {
        return bad(format!("non-finite spectral value {z}"));
    }
    if z.im == 0.0 && z.re > 0.0 {
        return bad(format!("real spectral value {} must satisfy lambda <= 0", z.re));
    }
    if e.multiplicity == 0 {
        return bad(format!("multiplicity at {z} must be at least 1"));
    }
    match e.kind {
        EditKind::Fused if z.im != 0.0 || e.multiplicity != 2 => {
            bad(format!("fused edit at {z} needs a real value and multiplicity 2"))
        }
        EditKind::Growing if z.im != 0.0 || e.multiplicity != 1 => {
            bad(format!("growing edit at {z} needs a real value and multiplicity 1"))
        }
        _ => Ok(()),
    }
}

/// Non-real values must come with their conjugate at the same multiplicity
/// so that the operator has real coefficients.
fn check_pairs(edits: &[SpectralEdit]) -> Result<()> {
    for e in edits.iter().filter(|e| e.lambda.c64().im != 0.0) {
        let z = e.lambda.c64();
        let partner = edits.iter().filter(|o| (o.lambda.c64() - z.conj()).norm() <= 1e-12 * (1.0 + z.norm())).count();
        let same = edits.iter().filter(|o| (o.lambda.c64() - z).norm() <= 1e-12 * (1.0 + z.norm())).count();
        if partner != 1 || same != 1 {
            return Err(Error::Config(format!("complex value {z} must be listed once together with its conjugate {}", z.conj())));
        }
        let p = edits.iter().find(|o| (o.lambda.c64() - z.conj()).norm() <= 1e-12 * (1.0 + z.norm())).unwrap();
        if p.multiplicity != e.multiplicity || p.kind != e.kind {
            return Err(Error::Config(format!("conjugate pair at {z} has mismatched multiplicity or kind")));
        }
    }
    Ok(())
}

/// Parses `first i`, `type1 i` or `second i j`.
pub fn parse_step(s: &str) -> Result<ChainStep> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let idx = |t: &str| t.parse::<usize>().map_err(|_| Error::Config(format!("bad ladder index `{t}` in step `{s}`")));
    match parts.as_slice() {
        ["first", i] => Ok(ChainStep::First(idx(i)?)),
        ["type1", i] => Ok(ChainStep::TypeI(idx(i)?)),
        ["second", i, j] => Ok(ChainStep::Second(idx(i)?, idx(j)?)),
        _ => Err(Error::Config(format!("cannot parse step `{s}`; expected `first i`, `type1 i` or `second i j`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig::from_toml("potential = \"x^2 - 3\"\n[[edits]]\nlambda = -2.0\n").unwrap()
    }

    #[test]
    fn parses_real_and_complex_values() {
        let c = RunConfig::from_toml(
            "potential = \"x^2 - 3\"\n[[edits]]\nlambda = [-1.0, 1.0]\n[[edits]]\nlambda = [-1.0, -1.0]\n",
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.ladder_edits().len(), 1);
        base().validate().unwrap();
    }

    #[test]
    fn unpaired_complex_value_is_a_config_error() {
        let c = RunConfig::from_toml("potential = \"x^2 - 3\"\n[[edits]]\nlambda = [-1.0, 1.0]\n").unwrap();
        let e = c.validate().unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn positive_real_value_is_rejected() {
        let mut c = base();
        c.edits[0].lambda = Value::Real(0.5);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn steps_parse_and_are_range_checked() {
        assert_eq!(parse_step("second 0 1").unwrap(), ChainStep::Second(0, 1));
        assert!(parse_step("third 0").is_err());
        let mut c = base();
        c.steps = vec!["first 1".into()];
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("potentail = \"x^2\"").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = base();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }
}
