//! Scenario configuration: TOML documents validated against a published schema.

use avglemma_core::fields::{catalog, custom_polynomial, Monomial, CATALOG_NAMES};
use avglemma_core::{Field, ForceField, SmoothForce};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

/// The experiments the front end can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    FitAlpha,
    GammaOpt,
    Decay,
    MeasureBounds,
    AveragingGain,
    ReconstructTest,
    CharacteristicsTest,
    MultiplierCheck,
    CompareExponents,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::FitAlpha => "fit-alpha",
            CommandName::GammaOpt => "gamma-opt",
            CommandName::Decay => "decay",
            CommandName::MeasureBounds => "measure-bounds",
            CommandName::AveragingGain => "averaging-gain",
            CommandName::ReconstructTest => "reconstruct-test",
            CommandName::CharacteristicsTest => "characteristics-test",
            CommandName::MultiplierCheck => "multiplier-check",
            CommandName::CompareExponents => "compare-exponents",
        }
    }
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One scenario. Sections a command does not use are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Must match the subcommand when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandName>,
    /// Mandatory for random pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads; `--threads` and `AVGLEMMA_THREADS` take precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<ForceSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<LowerBoundSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<AnchorSpec>,
    #[serde(default)]
    pub expect: ExpectSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    /// Catalog name: polynomial-curve, identity, circle, constant or custom-polynomial.
    pub name: String,
    /// Space dimension N.
    pub space_dim: usize,
    /// Velocity dimension M.
    pub velocity_dim: usize,
    /// Monomials of a custom polynomial field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<TermSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub component: usize,
    pub coef: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForceSpec {
    /// Constant force in velocity space.
    Constant { values: Vec<f64> },
    /// `F(X, v) = offset + x_coeffs·X + v_coeffs·v` with `X = (t, x)`.
    Affine { offset: Vec<f64>, x_coeffs: Vec<Vec<f64>>, v_coeffs: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub n_x: usize,
    pub n_v: usize,
    pub length_scale: f64,
    pub v_period: f64,
    /// Half-width A of the velocity support box.
    pub amp: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_x: 64, n_v: 128, length_scale: 1.0, v_period: 3.0, amp: 1.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// ε range; the lower end defaults to 1e-6 for M = 1 and 1e-4 otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_min: Option<f64>,
    pub eps_max: f64,
    pub eps_per_decade: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_per_decade: usize,
    /// Largest γ tried; defaults to N + 2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_max: Option<usize>,
    /// γ of the averaging gain; defaults to N + 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<usize>,
    pub sphere_samples: usize,
    /// Half-width of the velocity box for sublevel and non-degeneracy sweeps.
    pub amp: f64,
    /// Highest multiplier derivative checked.
    pub k_max: usize,
    pub y_per_decade: usize,
    pub v_per_axis: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            eps_min: None,
            eps_max: 1e-1,
            eps_per_decade: 4,
            lambda_min: 1.0,
            lambda_max: 1e6,
            lambda_per_decade: 20,
            gamma_max: None,
            gamma: None,
            sphere_samples: 4096,
            amp: 1.0,
            k_max: 3,
            y_per_decade: 256,
            v_per_axis: 33,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum PairModeSpec {
    Random,
    Manufactured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub mode: PairModeSpec,
    /// Lattice radius of a random pair.
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    /// Largest mode index of a manufactured density.
    #[serde(default = "default_max_index")]
    pub max_index: i64,
    /// Velocity width of a manufactured density.
    #[serde(default = "default_width")]
    pub width: f64,
    /// Modes visited by the spectral residual.
    #[serde(default = "default_residual_modes")]
    pub residual_modes: usize,
}

fn default_cutoff() -> f64 {
    32.0
}
fn default_max_index() -> i64 {
    3
}
fn default_width() -> f64 {
    0.2
}
fn default_residual_modes() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhaseSpec {
    /// `scale · u^order` on `[lo, hi]`.
    Monomial { order: usize, #[serde(default = "one")] scale: f64, lo: f64, hi: f64 },
    /// Polynomial with coefficients in increasing degree on `[lo, hi]`.
    Polynomial { coeffs: Vec<f64>, lo: f64, hi: f64 },
    /// `σ_0 + a(u)·σ̃` of the configured field on `[−amp, amp]`.
    Field { direction: Vec<f64> },
    /// `u ↦ B(u)·σ` along a constant force on `[−amp, amp]`.
    ForceLine { direction: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

/// Which bound a decay check compares against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundSpec {
    VanDerCorput { k: usize },
    Corollary { k: usize, delta: f64 },
    Amplitude { k: usize, delta: f64 },
    Partitioned { gamma: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    #[serde(default)]
    pub t0: f64,
    pub x0: Vec<f64>,
    pub w0: Vec<f64>,
    pub radius: f64,
    /// RK4 step counts; two or more give an observed order.
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExpectSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_constant_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_exponent_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slice_exponent_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order_min: Option<f64>,
}

/// `|φ^{(k)}| ≥ δ` on the phase interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundSpec {
    pub k: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub plots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: None, plots: true }
    }
}

/// A configuration problem with the path of the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

fn bad(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.to_string(), message: message.into() }
}

impl ScenarioConfig {
    /// Parses a TOML document, reporting the path of the first schema violation.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| bad("", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            bad(&path, inner.lines().last().unwrap_or_default().trim().to_string())
        })
    }

    /// Semantic checks that the schema cannot express.
    pub fn validate(&self, command: CommandName) -> Result<(), ConfigError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(bad("command", format!("config is for `{c}` but `{command}` was requested")));
            }
        }
        if self.threads == Some(0) {
            return Err(bad("threads", "must be positive"));
        }
        if !matches!(command, CommandName::MeasureBounds | CommandName::Decay) && self.field.is_none() {
            return Err(bad("field", "missing section"));
        }
        if let Some(f) = &self.field {
            if f.space_dim == 0 {
                return Err(bad("field.space_dim", "must be positive"));
            }
            if f.velocity_dim == 0 {
                return Err(bad("field.velocity_dim", "must be positive"));
            }
            if !CATALOG_NAMES.contains(&f.name.as_str()) {
                return Err(bad("field.name", format!("unknown field `{}`; expected one of {CATALOG_NAMES:?}", f.name)));
            }
            if (f.name == "custom-polynomial") != f.terms.is_some() {
                return Err(bad("field.terms", "terms are required for custom-polynomial and only for it"));
            }
        }
        let s = &self.sweep;
        if let Some(lo) = s.eps_min {
            if !(lo > 0.0 && lo < s.eps_max) {
                return Err(bad("sweep.eps_min", "ε range must be nonempty and positive"));
            }
        }
        if !(s.eps_max > 0.0) {
            return Err(bad("sweep.eps_max", "must be positive"));
        }
        if !(s.lambda_min > 0.0 && s.lambda_min < s.lambda_max) {
            return Err(bad("sweep.lambda_min", "λ range must be nonempty and positive"));
        }
        for (path, v) in [
            ("sweep.eps_per_decade", s.eps_per_decade),
            ("sweep.lambda_per_decade", s.lambda_per_decade),
            ("sweep.sphere_samples", s.sphere_samples),
            ("sweep.y_per_decade", s.y_per_decade),
        ] {
            if v == 0 {
                return Err(bad(path, "must be positive"));
            }
        }
        if s.v_per_axis < 2 {
            return Err(bad("sweep.v_per_axis", "must be at least 2"));
        }
        if !(s.amp > 0.0) {
            return Err(bad("sweep.amp", "must be positive"));
        }
        if let Some(p) = &self.pair {
            if p.mode == PairModeSpec::Random && self.seed.is_none() {
                return Err(bad("seed", "mandatory for random pairs"));
            }
            if !(p.cutoff > 0.0) {
                return Err(bad("pair.cutoff", "must be positive"));
            }
            if p.residual_modes == 0 {
                return Err(bad("pair.residual_modes", "must be positive"));
            }
        }
        match command {
            CommandName::AveragingGain | CommandName::ReconstructTest if self.pair.is_none() => Err(bad("pair", "missing section")),
            CommandName::Decay | CommandName::MeasureBounds if self.phase.is_none() => Err(bad("phase", "missing section")),
            CommandName::CharacteristicsTest if self.anchor.is_none() => Err(bad("anchor", "missing section")),
            CommandName::CharacteristicsTest if self.anchor.as_ref().is_some_and(|a| a.steps.is_empty()) => {
                Err(bad("anchor.steps", "needs at least one step count"))
            }
            CommandName::MeasureBounds if self.lower_bound.is_none() => Err(bad("lower_bound", "missing section")),
            CommandName::Decay if self.bound.is_none() => Err(bad("bound", "missing section")),
            _ => Ok(()),
        }
    }

    /// Stable digest of every semantic field; threads and output location are excluded.
    pub fn hash(&self, command: CommandName) -> String {
        let mut semantic = self.clone();
        semantic.command = Some(command);
        semantic.threads = None;
        semantic.output = OutputSpec::default();
        let value = crate::report::canonical(serde_json::to_value(&semantic).expect("config serializes"));
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn field_spec(&self) -> Result<&FieldSpec, ConfigError> {
        self.field.as_ref().ok_or_else(|| bad("field", "missing section"))
    }

    /// The configured field and its suggested constant force.
    pub fn build_field(&self) -> Result<(Field, ForceField), ConfigError> {
        let f = self.field_spec()?;
        let built = match &f.terms {
            Some(terms) => custom_polynomial(
                f.space_dim,
                f.velocity_dim,
                terms.iter().map(|t| Monomial { component: t.component, coef: t.coef, powers: t.powers.clone() }).collect(),
            ),
            None => catalog(&f.name, f.space_dim, f.velocity_dim),
        };
        built.map_err(|e| bad("field", e.to_string()))
    }

    /// Constant force vector, defaulting to the field's suggestion.
    pub fn constant_force(&self, suggested: &ForceField) -> Result<Vec<f64>, ConfigError> {
        match &self.force {
            Some(ForceSpec::Constant { values }) => Ok(values.clone()),
            Some(ForceSpec::Affine { .. }) => Err(bad("force.kind", "this command needs a constant force")),
            None => suggested.as_constant().map(|c| c.to_vec()).map_err(|e| bad("force", e.to_string())),
        }
    }

    /// Smooth force for the characteristics construction.
    pub fn smooth_force(&self, space_dim: usize) -> Result<SmoothForce, ConfigError> {
        match &self.force {
            Some(ForceSpec::Affine { offset, x_coeffs, v_coeffs }) => {
                if x_coeffs.iter().any(|r| r.len() != space_dim + 1) {
                    return Err(bad("force.x_coeffs", format!("rows must have N + 1 = {} entries", space_dim + 1)));
                }
                SmoothForce::affine(offset.clone(), x_coeffs.clone(), v_coeffs.clone()).map_err(|e| bad("force", e.to_string()))
            }
            Some(ForceSpec::Constant { values }) => {
                let m = values.len();
                SmoothForce::affine(values.clone(), vec![vec![0.0; space_dim + 1]; m], vec![vec![0.0; m]; m])
                    .map_err(|e| bad("force", e.to_string()))
            }
            None => Err(bad("force", "missing section")),
        }
    }

    /// ε grid of the sweep.
    pub fn eps_grid(&self, velocity_dim: usize) -> Vec<f64> {
        let lo = self.sweep.eps_min.unwrap_or(if velocity_dim == 1 { 1e-6 } else { 1e-4 });
        avglemma_core::fit::geometric_grid(lo, self.sweep.eps_max, self.sweep.eps_per_decade)
    }

    /// λ grid of the sweep.
    pub fn lambda_grid(&self) -> Vec<f64> {
        avglemma_core::fit::geometric_grid(self.sweep.lambda_min, self.sweep.lambda_max, self.sweep.lambda_per_decade)
    }
}

/// JSON schema of [`ScenarioConfig`].
pub fn schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(ScenarioConfig)).expect("schema serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[field]\nname = \"polynomial-curve\"\nspace_dim = 2\nvelocity_dim = 1\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.grid, GridSpec::default());
        assert_eq!(c.sweep.sphere_samples, 4096);
        c.validate(CommandName::FitAlpha).unwrap();
    }

    #[test]
    fn missing_dimension_names_its_path() {
        let e = ScenarioConfig::from_toml("[field]\nname = \"identity\"\nvelocity_dim = 2\n").unwrap_err();
        assert!(e.to_string().contains("space_dim"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let e = ScenarioConfig::from_toml(&format!("{MINIMAL}[grid]\nnx = 4\n")).unwrap_err();
        assert!(e.path.starts_with("grid"), "{e:?}");
    }

    #[test]
    fn random_pairs_need_a_seed() {
        let c = ScenarioConfig::from_toml(&format!("{MINIMAL}[pair]\nmode = \"random\"\n")).unwrap();
        assert_eq!(c.validate(CommandName::AveragingGain).unwrap_err().path, "seed");
    }

    #[test]
    fn command_must_match() {
        let c = ScenarioConfig::from_toml(&format!("command = \"decay\"\n{MINIMAL}")).unwrap();
        assert_eq!(c.validate(CommandName::FitAlpha).unwrap_err().path, "command");
    }

    #[test]
    fn hash_ignores_threads_and_output_only() {
        let a = ScenarioConfig::from_toml(MINIMAL).unwrap();
        let b = ScenarioConfig::from_toml(&format!("threads = 3\n{MINIMAL}[output]\ndir = \"elsewhere\"\n")).unwrap();
        let c = ScenarioConfig::from_toml(&format!("{MINIMAL}[sweep]\nsphere_samples = 100\n")).unwrap();
        let d = ScenarioConfig::from_toml(&format!("{MINIMAL}[sweep]\nsphere_samples = 4096\n")).unwrap();
        assert_eq!(a.hash(CommandName::FitAlpha), b.hash(CommandName::FitAlpha));
        assert_ne!(a.hash(CommandName::FitAlpha), c.hash(CommandName::FitAlpha));
        assert_eq!(a.hash(CommandName::FitAlpha), d.hash(CommandName::FitAlpha));
        assert_ne!(a.hash(CommandName::FitAlpha), a.hash(CommandName::GammaOpt));
    }

    #[test]
    fn schema_lists_sections() {
        let s = schema();
        let props = s["properties"].as_object().unwrap();
        for key in ["field", "force", "grid", "sweep", "pair", "phase", "bound", "lower_bound", "anchor", "expect", "output", "seed"] {
            assert!(props.contains_key(key), "{key}");
        }
    }
}
