//! TOML scenario files: chart, generator, lapse, evolution settings,
//! tolerances and the requested checks.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pnvflow_core::chart::{build_chart, Boundary, Chart, ChartSpec, MIN_POINTS};
use pnvflow_core::dump::read_tensor;
use pnvflow_core::evolution::{SystemKind, DEFAULT_CFL};
use pnvflow_core::expr::{parse_expression_in, Expr};
use pnvflow_core::fields::{LapseField, TensorField, Valence};
use pnvflow_core::initial_data::{self as generators, InitialData, Provenance, TorusField};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Constraints,
    Evolve,
    Spacetime,
    Spin,
    Convergence,
}

impl Check {
    pub fn as_str(self) -> &'static str {
        match self {
            Check::Constraints => "constraints",
            Check::Evolve => "evolve",
            Check::Spacetime => "spacetime",
            Check::Spin => "spin",
            Check::Convergence => "convergence",
        }
    }
}

/// A chart bound: a number or a constant expression such as `"2*pi"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum Bound {
    Number(f64),
    Expr(String),
}

impl Bound {
    fn value(&self, key: &str) -> Result<f64, ConfigError> {
        match self {
            Bound::Number(v) => Ok(*v),
            Bound::Expr(s) => {
                let e =
                    parse_expression_in(s, 0).map_err(|e| ConfigError::new(key, e.to_string()))?;
                if !e.is_constant() {
                    return Err(ConfigError::new(key, format!("`{s}` is not a constant")));
                }
                Ok(e.eval(0.0, &[]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub extents: Vec<[Bound; 2]>,
    pub points: Vec<usize>,
    pub boundary: Vec<Boundary>,
}

impl ChartConfig {
    pub fn spec(&self) -> Result<ChartSpec, ConfigError> {
        let extents = self
            .extents
            .iter()
            .enumerate()
            .map(|(i, [a, b])| {
                let key = format!("chart.extents[{i}]");
                Ok([a.value(&key)?, b.value(&key)?])
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(ChartSpec::new(
            extents,
            self.points.clone(),
            self.boundary.clone(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TorusFieldConfig {
    /// `U = c e^{−2σ} ∂_θ`.
    Builtin { c: f64 },
    /// `U = f ∂_θ + h ∂_ρ`.
    Explicit { f: String, h: String },
}

/// Initial-data generator and its parameters. Expressions are strings in the
/// expression language described in `docs/formats.md`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// Flat metric, `W = 0`, constant `U = u0`.
    Flat { u0: Vec<f64> },
    /// `g = dx²` on a circle (times a flat torus when `n > 1`) with `W = w dx⊗∂x`.
    CircleCodazzi { w: String },
    /// `g = e^{2σ}(a dθ² + 2b dθdρ + c dρ²)`.
    ConformalTorus {
        sigma: String,
        #[serde(default = "default_abc")]
        abc: [f64; 3],
        field: TorusFieldConfig,
    },
    /// `g = ds² + h(s)² g_flat`, `U = h ∂_s`.
    Warped { h: String },
    /// Flat open box with `W = c n⊗n`.
    OpenCodazzi { n: Vec<f64>, c: f64 },
    /// Fields read from grid dumps; paths are relative to the scenario file.
    Dumps {
        g: PathBuf,
        w: PathBuf,
        big_u: PathBuf,
        u: PathBuf,
    },
}

fn default_abc() -> [f64; 3] {
    [1.0, 0.0, 1.0]
}

impl Generator {
    pub fn kind(&self) -> &'static str {
        match self {
            Generator::Flat { .. } => "flat",
            Generator::CircleCodazzi { .. } => "circle_codazzi",
            Generator::ConformalTorus { .. } => "conformal_torus",
            Generator::Warped { .. } => "warped",
            Generator::OpenCodazzi { .. } => "open_codazzi",
            Generator::Dumps { .. } => "dumps",
        }
    }

    /// Generators whose unit-lapse evolution has the closed form
    /// `g_t = g((1 − tW)²·,·)`.
    pub fn has_codazzi_oracle(&self) -> bool {
        matches!(
            self,
            Generator::Flat { .. }
                | Generator::CircleCodazzi { .. }
                | Generator::OpenCodazzi { .. }
        )
    }

    fn expressions(&self) -> Vec<(&'static str, &str)> {
        match self {
            Generator::CircleCodazzi { w } => vec![("generator.w", w)],
            Generator::ConformalTorus { sigma, field, .. } => {
                let mut v = vec![("generator.sigma", sigma.as_str())];
                if let TorusFieldConfig::Explicit { f, h } = field {
                    v.push(("generator.field.explicit.f", f));
                    v.push(("generator.field.explicit.h", h));
                }
                v
            }
            Generator::Warped { h } => vec![("generator.h", h)],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    #[serde(default = "default_system")]
    pub system: SystemKind,
    pub t_end: f64,
    /// Step size on the scenario grid; defaults to `cfl · h`. Rescaled with
    /// `h` on convergence ladders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// A second system evolved from the same data and compared at `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<SystemKind>,
}

fn default_system() -> SystemKind {
    SystemKind::PnvB
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

/// Pass thresholds. `*_constant` values multiply `h⁴`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub constraint_constant: f64,
    pub identity_constant: f64,
    pub spinor_constant: f64,
    pub nabla_v: f64,
    pub curvature: f64,
    pub spinor: f64,
    pub oracle: f64,
    pub cross_system: f64,
    pub drift_factor: f64,
    pub symmetry: f64,
    pub defect_agreement: f64,
    /// When set, every residual (monitored ones included) must lie below it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub all_residuals: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            constraint_constant: 10.0,
            identity_constant: 10.0,
            spinor_constant: 10.0,
            nabla_v: 1e-5,
            curvature: 1e-4,
            spinor: 1e-4,
            oracle: 1e-6,
            cross_system: 1e-8,
            drift_factor: 10.0,
            symmetry: 1e-12,
            defect_agreement: 1e-10,
            all_residuals: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Points per axis, coarse to fine.
    pub ladder: Vec<usize>,
    pub min_order: f64,
    /// Checks rerun on every grid of the ladder.
    pub checks: Vec<Check>,
    /// Residuals whose order must reach `min_order`, as `name` or `check/name`.
    pub gated: Vec<String>,
    /// Adds Gauss/Codazzi/Mainardi residuals of a seeded random block.
    pub probe: bool,
    pub probe_amplitude: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            ladder: vec![32, 64, 128],
            min_order: 3.5,
            checks: vec![Check::Constraints],
            gated: Vec::new(),
            probe: false,
            probe_amplitude: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write initial and final fields as grid dumps under `fields/`.
    pub dumps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub checks: Vec<Check>,
    pub chart: ChartConfig,
    pub generator: Generator,
    #[serde(default = "default_lapse")]
    pub lapse: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    #[schemars(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_lapse() -> String {
    "1".into()
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let loc = path.display().to_string();
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::new(&loc, e.to_string()))?;
        let mut s = Self::from_toml(&text, &loc)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    /// Parses and validates; `origin` labels errors.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let s: Scenario = toml::from_str(text).map_err(|e| {
            let msg = e.to_string();
            ConfigError::new(origin, msg.trim_end())
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn check_set(&self) -> BTreeSet<Check> {
        self.checks.iter().copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.chart.extents.len()
    }

    pub fn convergence_config(&self) -> ConvergenceConfig {
        self.convergence.clone().unwrap_or_default()
    }

    pub fn evolution_config(&self) -> Result<&EvolutionConfig, ConfigError> {
        self.evolution.as_ref().ok_or_else(|| {
            ConfigError::new("evolution", "the [evolution] table is required to evolve")
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::new(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(ConfigError::new("name", "use letters, digits, `_` or `-`"));
        }
        let spec = self.chart.spec()?;
        build_chart(spec).map_err(|e| ConfigError::new("chart", e.to_string()))?;
        let n = self.dim();
        for (key, text) in self.generator.expressions() {
            parse_expression_in(text, n).map_err(|e| ConfigError::new(key, e.to_string()))?;
        }
        parse_expression_in(&self.lapse, n)
            .map_err(|e| ConfigError::new("lapse", e.to_string()))?;
        if self.checks.is_empty() {
            return Err(ConfigError::new("checks", "request at least one check"));
        }
        self.validate_pipeline(&self.check_set(), "checks")?;
        if let Some(evo) = &self.evolution {
            if !(evo.t_end > 0.0) || !evo.t_end.is_finite() {
                return Err(ConfigError::new("evolution.t_end", "must be positive"));
            }
            if !(evo.cfl > 0.0) {
                return Err(ConfigError::new("evolution.cfl", "must be positive"));
            }
            if matches!(evo.dt, Some(dt) if !(dt > 0.0)) {
                return Err(ConfigError::new("evolution.dt", "must be positive"));
            }
        }
        if self.checks.contains(&Check::Convergence) {
            self.validate_convergence()?;
        }
        Ok(())
    }

    /// Dependencies between checks, shared by the scenario list and the
    /// convergence ladder.
    pub fn validate_pipeline(
        &self,
        checks: &BTreeSet<Check>,
        key: &str,
    ) -> Result<(), ConfigError> {
        let evolve = checks.contains(&Check::Evolve);
        if evolve {
            self.evolution_config()?;
        }
        if checks.contains(&Check::Spacetime) && !evolve {
            return Err(ConfigError::new(key, "`spacetime` requires `evolve`"));
        }
        if checks.contains(&Check::Spin) {
            if self.dim() != 2 {
                return Err(ConfigError::new(
                    key,
                    format!(
                        "`spin` needs a two-dimensional chart, this one has n = {}",
                        self.dim()
                    ),
                ));
            }
            if key == "checks" && !evolve {
                return Err(ConfigError::new(key, "`spin` requires `evolve`"));
            }
            if evolve && self.evolution_config()?.system == SystemKind::RicciFlat {
                return Err(ConfigError::new(key, "`spin` needs a PNV system"));
            }
        }
        Ok(())
    }

    pub fn validate_convergence(&self) -> Result<(), ConfigError> {
        let cfg = self.convergence_config();
        if matches!(self.generator, Generator::Dumps { .. }) {
            return Err(ConfigError::new(
                "convergence",
                "dump-based data cannot be rescaled",
            ));
        }
        if cfg.ladder.len() < 2 || cfg.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::new(
                "convergence.ladder",
                "need at least two increasing sizes",
            ));
        }
        if cfg.ladder[0] < MIN_POINTS {
            return Err(ConfigError::new(
                "convergence.ladder",
                format!("sizes must be at least {MIN_POINTS}"),
            ));
        }
        let checks: BTreeSet<Check> = cfg.checks.iter().copied().collect();
        if checks.contains(&Check::Convergence) {
            return Err(ConfigError::new(
                "convergence.checks",
                "cannot nest `convergence`",
            ));
        }
        self.validate_pipeline(&checks, "convergence.checks")
    }

    pub fn lapse_field(&self) -> Result<LapseField, ConfigError> {
        let e = parse_expression_in(&self.lapse, self.dim())
            .map_err(|e| ConfigError::new("lapse", e.to_string()))?;
        Ok(LapseField::new(e))
    }

    /// True when the lapse is the constant 1.
    pub fn unit_lapse(&self) -> bool {
        matches!(parse_expression_in(&self.lapse, self.dim()), Ok(e) if e.is_constant() && e.eval(0.0, &[]) == 1.0)
    }

    fn expr(&self, key: &str, text: &str) -> Result<Expr, ConfigError> {
        parse_expression_in(text, self.dim()).map_err(|e| ConfigError::new(key, e.to_string()))
    }

    /// Runs the generator on `spec` (the scenario chart or a refinement).
    pub fn build_data(&self, spec: &ChartSpec) -> anyhow::Result<InitialData> {
        let chart = build_chart(spec.clone())?;
        let lapse = self.lapse_field()?;
        let data = match &self.generator {
            Generator::Flat { u0 } => generators::gen_flat(chart, u0, lapse)?,
            Generator::CircleCodazzi { w } => {
                generators::gen_circle_codazzi(chart, &self.expr("generator.w", w)?, lapse)?
            }
            Generator::ConformalTorus { sigma, abc, field } => {
                let field = match field {
                    TorusFieldConfig::Builtin { c } => TorusField::Builtin { c: *c },
                    TorusFieldConfig::Explicit { f, h } => TorusField::Explicit {
                        f: self.expr("generator.field.explicit.f", f)?,
                        h: self.expr("generator.field.explicit.h", h)?,
                    },
                };
                let sigma = self.expr("generator.sigma", sigma)?;
                generators::gen_conformal_torus(chart, &sigma, *abc, &field, lapse)?
            }
            Generator::Warped { h } => {
                generators::gen_warped(chart, &self.expr("generator.h", h)?, lapse)?
            }
            Generator::OpenCodazzi { n, c } => generators::gen_open_codazzi(chart, n, *c, lapse)?,
            Generator::Dumps { g, w, big_u, u } => {
                self.load_dumps(chart, [g, w, big_u, u], lapse)?
            }
        };
        Ok(data)
    }

    fn load_dumps(
        &self,
        chart: Arc<Chart>,
        paths: [&PathBuf; 4],
        lapse: LapseField,
    ) -> anyhow::Result<InitialData> {
        let keys = [
            "generator.g",
            "generator.w",
            "generator.big_u",
            "generator.u",
        ];
        let valences = [
            Valence::BILINEAR,
            Valence::ENDOMORPHISM,
            Valence::VECTOR,
            Valence::SCALAR,
        ];
        let mut fields = Vec::with_capacity(4);
        for ((path, key), valence) in paths.iter().zip(keys).zip(valences) {
            let full = match &self.base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.to_path_buf(),
            };
            let file = File::open(&full)
                .map_err(|e| ConfigError::new(key, format!("{}: {e}", full.display())))?;
            let (header, field) = read_tensor(file)?;
            if &header.chart != chart.spec() {
                return Err(
                    ConfigError::new(key, "dump chart differs from the scenario chart").into(),
                );
            }
            if field.valence != valence {
                return Err(ConfigError::new(
                    key,
                    format!("expected valence ({},{})", valence.up, valence.down),
                )
                .into());
            }
            fields.push(TensorField {
                chart: chart.clone(),
                ..field
            });
        }
        let u = fields.pop().unwrap().comps.remove(0);
        let big_u = fields.pop().unwrap();
        let w = fields.pop().unwrap();
        let g = TensorField::metric(chart.clone(), fields.pop().unwrap().comps)?;
        let data = InitialData {
            chart,
            g,
            w,
            big_u,
            u,
            lapse,
            provenance: Provenance::new("dumps", &[]),
        };
        data.validate()?;
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TORUS: &str = r#"
schema_version = 1
name = "t"
checks = ["constraints", "evolve", "spin"]

[chart]
extents = [[0, "2*pi"], [0, "2*pi"]]
points = [16, 16]
boundary = ["PERIODIC", "PERIODIC"]

[generator]
kind = "conformal_torus"
sigma = "0.2*cos(x1)*cos(x2)"
field = { builtin = { c = 1.0 } }

[evolution]
t_end = 0.5
"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::from_toml(TORUS, "t.toml").unwrap();
        assert_eq!(s.lapse, "1");
        assert!(s.unit_lapse());
        let evo = s.evolution_config().unwrap();
        assert_eq!(evo.system, SystemKind::PnvB);
        assert_eq!(evo.cfl, DEFAULT_CFL);
        let spec = s.chart.spec().unwrap();
        assert!((spec.extents[1][1] - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        let d = s.build_data(&spec).unwrap();
        assert!(d.spinor_seed().is_some());
    }

    #[test]
    fn unknown_key_is_located() {
        let text = TORUS.replace("t_end = 0.5", "t_end = 0.5\ntend = 1");
        let e = Scenario::from_toml(&text, "t.toml").unwrap_err();
        assert!(e.message.contains("tend"), "{e}");
        assert!(e.message.contains("line"), "{e}");
    }

    #[test]
    fn spin_on_circle_rejected() {
        let text = r#"
schema_version = 1
name = "c"
checks = ["constraints", "evolve", "spin"]
[chart]
extents = [[0, "2*pi"]]
points = [32]
boundary = ["PERIODIC"]
[generator]
kind = "circle_codazzi"
w = "0.3*sin(x1)"
[evolution]
t_end = 1
"#;
        let e = Scenario::from_toml(text, "c.toml").unwrap_err();
        assert_eq!(e.location, "checks");
        assert!(e.message.contains("two-dimensional"));
    }

    #[test]
    fn pipeline_dependencies() {
        let text = TORUS.replace(r#"["constraints", "evolve", "spin"]"#, r#"["spacetime"]"#);
        assert!(Scenario::from_toml(&text, "t").is_err());
        let text = TORUS.replace("[evolution]\nt_end = 0.5\n", "");
        assert_eq!(
            Scenario::from_toml(&text, "t").unwrap_err().location,
            "evolution"
        );
    }

    #[test]
    fn bad_expression_and_version() {
        let text = TORUS.replace("0.2*cos(x1)*cos(x2)", "0.2*cos(x3)");
        assert_eq!(
            Scenario::from_toml(&text, "t").unwrap_err().location,
            "generator.sigma"
        );
        let text = TORUS.replace("schema_version = 1", "schema_version = 9");
        assert_eq!(
            Scenario::from_toml(&text, "t").unwrap_err().location,
            "schema_version"
        );
    }
}
