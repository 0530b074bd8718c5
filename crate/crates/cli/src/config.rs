//! Experiment configuration: a TOML document of tables, every key optional.
//!
//! Keys left unset fall back to the defaults listed on each field. A few grid and solver
//! defaults depend on the experiment; they are filled in by [`ExperimentConfig::resolved`].

use pdectl::identities::{DetSlice, IdentityKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    VerifyIdentity,
    NullControl,
    ExactControl,
    SemilinearControl,
    Observability,
    LrConstant,
    Stabilize,
    StochHeat,
    StochIdentity,
    Geometry,
    Kalman,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Self::VerifyIdentity,
        Self::NullControl,
        Self::ExactControl,
        Self::SemilinearControl,
        Self::Observability,
        Self::LrConstant,
        Self::Stabilize,
        Self::StochHeat,
        Self::StochIdentity,
        Self::Geometry,
        Self::Kalman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::VerifyIdentity => "verify-identity",
            Self::NullControl => "null-control",
            Self::ExactControl => "exact-control",
            Self::SemilinearControl => "semilinear-control",
            Self::Observability => "observability",
            Self::LrConstant => "lr-constant",
            Self::Stabilize => "stabilize",
            Self::StochHeat => "stoch-heat",
            Self::StochIdentity => "stoch-identity",
            Self::Geometry => "geometry",
            Self::Kalman => "kalman",
        }
    }
}

/// Top-level configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Default `verify-identity`.
    pub experiment: Experiment,
    /// Global seed; every random stream is derived from it. Default 0.
    pub seed: u64,
    pub grid: GridConfig,
    pub coefficients: CoefficientConfig,
    pub geometry: GeometryConfig,
    pub solver: SolverConfig,
    pub data: DataConfig,
    pub identity: IdentityConfig,
    pub stochastic: StochasticConfig,
    pub semilinear: SemilinearConfig,
    pub observability: ObservabilityConfig,
    pub lr: LrConfig,
    pub stabilization: StabilizationConfig,
    pub kalman: KalmanConfig,
    pub output: OutputConfig,
}

/// Space-time grid on `(0,1)^dim × (0,T)` with `n` interior nodes per axis.
///
/// | experiment | n | T | steps |
/// |---|---|---|---|
/// | null-control, observability (heat) | 100 | 0.5 | 1000 T |
/// | exact-control, observability (wave) | 100 | 2.5 | ⌈T (n+1)⌉ |
/// | semilinear-control | 49 | 0.4 | 1000 T |
/// | observability (stoch-heat) | 49 | 0.2 | 500 T |
/// | stoch-heat | 99 | 0.1 | 2000 T |
/// | stabilize (boundary) | 99 | 10 | 200 T |
/// | stabilize (local) | 99 | 30 | 100 T |
///
/// When only `horizon` is given the step count follows the rule in the last column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// 1 or 2. Default 1.
    pub dim: usize,
    pub n: Option<usize>,
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            n: None,
            horizon: None,
            steps: None,
        }
    }
}

/// Constant coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientConfig {
    /// `p`. Default 1.
    pub diffusivity: f64,
    /// `a`. Default 0.
    pub potential: f64,
    /// Multiplicative noise `c`. Default 1.5 for stoch-heat, 0 otherwise.
    pub noise: Option<f64>,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            diffusivity: 1.0,
            potential: 0.0,
            noise: None,
        }
    }
}

/// Multiplier geometry: exterior point `x0` and collar width `epsilon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Default `-0.1` on every axis.
    pub x0: Option<Vec<f64>>,
    /// Default 0.15.
    pub epsilon: f64,
    /// Box replacing the collar as control region. Default `(0.3, 0.6)` on every axis for
    /// the heat experiments; the collar for exact-control and wave observability.
    pub omega_lo: Option<Vec<f64>>,
    pub omega_hi: Option<Vec<f64>>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            x0: None,
            epsilon: 0.15,
            omega_lo: None,
            omega_hi: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// CG relative tolerance. Default 1e-8 (heat), 1e-3 (wave).
    pub tolerance: Option<f64>,
    /// CG iteration cap. Default 500 (heat), 200 (wave).
    pub max_iter: Option<usize>,
    /// Penalization of the heat problems. Default 1e-8.
    pub epsilon: f64,
    /// Penalizations for the `√ε` law of null-control; empty disables the sweep.
    /// Default `[1e-4, 1e-6, 1e-8]`.
    pub epsilon_sweep: Vec<f64>,
    /// Bound on the relative terminal residual. Default 1e-3 (null-control), 1e-2 otherwise.
    pub residual_threshold: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: None,
            max_iter: None,
            epsilon: 1e-8,
            epsilon_sweep: vec![1e-4, 1e-6, 1e-8],
            residual_threshold: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Dirichlet eigenfunction with indices `mode`.
    #[default]
    Mode,
    Zero,
    /// `Π sin⁸(π x_a)`.
    Sin8,
    /// `Π x_a (1 - x_a)`.
    Parabola,
}

/// Initial position; the initial velocity and the wave target are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Default `mode`.
    pub profile: Profile,
    /// Default `[1]`, repeated for missing axes.
    pub mode: Vec<usize>,
    /// Default 1.
    pub amplitude: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            profile: Profile::Mode,
            mode: vec![1],
            amplitude: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    /// Default: all five kinds.
    pub kinds: Vec<IdentityKind>,
    /// Coefficient slices of the deterministic identity. Default: all three.
    pub slices: Vec<DetSlice>,
    /// Random instances per kind and per slice, 100 points each. Default 200.
    pub instances: usize,
    /// Overrides the per-kind relative tolerance (1e-12, 1e-11, 1e-9, 1e-9, 1e-9).
    pub tolerance: Option<f64>,
    /// Bound on `i`-carrying terms relative to the term scale. Default 1e-12.
    pub i_tolerance: f64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            kinds: IdentityKind::ALL.to_vec(),
            slices: DetSlice::ALL.to_vec(),
            instances: 200,
            tolerance: None,
            i_tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticConfig {
    /// Paths of stoch-heat. Default 8192.
    pub paths: usize,
    /// Allowed relative deviation of `E|z(T)|²` from the modal law. Default 0.05.
    pub moment_tolerance: f64,
    /// Space point of the refinement studies. Default 0.3.
    pub point: f64,
    /// Drift-only study: coarsest step count, halvings, slope bound. Defaults 64, 3, 0.9.
    pub drift_base_steps: usize,
    pub drift_halvings: usize,
    pub drift_slope: f64,
    /// Noisy study: coarsest step count, halvings, paths, slope bound. Defaults 16, 5, 4096, 0.4.
    pub noisy_base_steps: usize,
    pub noisy_halvings: usize,
    pub noisy_paths: usize,
    pub noisy_slope: f64,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        Self {
            paths: 8192,
            moment_tolerance: 0.05,
            point: 0.3,
            drift_base_steps: 64,
            drift_halvings: 3,
            drift_slope: 0.9,
            noisy_base_steps: 16,
            noisy_halvings: 5,
            noisy_paths: 4096,
            noisy_slope: 0.4,
        }
    }
}

/// Focusing nonlinearity `-s lnʳ(1+|s|)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemilinearConfig {
    /// Default 1.2.
    pub r_exponent: f64,
    /// The initial datum is `factor · A* · profile` with `A*` the blow-up amplitude of the
    /// profile. Default 1.1.
    pub amplitude_factor: f64,
    /// Default 1e-6.
    pub outer_tolerance: f64,
    /// Default 20.
    pub max_outer: usize,
}

impl Default for SemilinearConfig {
    fn default() -> Self {
        Self {
            r_exponent: 1.2,
            amplitude_factor: 1.1,
            outer_tolerance: 1e-6,
            max_outer: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    #[default]
    Heat,
    Wave,
    StochHeat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObsMode {
    #[default]
    Initial,
    Terminal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observation {
    #[default]
    Interior,
    Boundary,
}

/// A parameter sweep: `key` is a dotted config path such as `grid.n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<toml::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservabilityConfig {
    /// Default `heat`.
    pub equation: Equation,
    /// Whether data sit at `t = 0` or `t = T`. Default `initial`.
    pub mode: ObsMode,
    /// Wave only. Default `interior`.
    pub observation: Observation,
    /// Wave only: eigenmodes spanning the data. Default `len / 5^dim`.
    pub modes: Option<usize>,
    /// Stoch-heat: candidate data and paths per candidate. Defaults 4 and 512.
    pub candidates: usize,
    pub paths: usize,
    /// Relative shift of the observation Gram matrix. Default 1e-12.
    pub delta_rel: f64,
    pub sweep: Option<Sweep>,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        Self {
            equation: Equation::Heat,
            mode: ObsMode::Initial,
            observation: Observation::Interior,
            modes: None,
            candidates: 4,
            paths: 512,
            delta_rel: 1e-12,
            sweep: None,
        }
    }
}

/// Sums of Dirichlet eigenfunctions of the unit interval or square observed on a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    /// Default `[0.2]` and `[0.4]`.
    pub omega_lo: Vec<f64>,
    pub omega_hi: Vec<f64>,
    /// Largest number of modes. Default 40.
    pub modes: usize,
    /// Lower bound on the `R²` of the growth fit. Default 0.95.
    pub min_r_squared: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            omega_lo: vec![0.2],
            omega_hi: vec![0.4],
            modes: 40,
            min_r_squared: 0.95,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DampingKind {
    #[default]
    Boundary,
    Local,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    /// `conservation` for undamped runs, `decay` otherwise.
    #[default]
    Auto,
    Conservation,
    Decay,
    Extinction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizationConfig {
    /// Default `boundary`.
    pub damping: DampingKind,
    /// Boundary gains; an absent end is Dirichlet. If neither is set the right end has gain 1.
    pub left: Option<f64>,
    pub right: Option<f64>,
    /// Local damping `c0 χ_region(x) y_t`. Default 1.
    pub c0: f64,
    /// Exponent of the nonlinearity `|y|^{q-1} y`; none by default.
    pub power: Option<f64>,
    /// Default `[0.6]` and `[1.0]`, repeated for missing axes.
    pub region_lo: Vec<f64>,
    pub region_hi: Vec<f64>,
    /// Default `auto`.
    pub expect: Expectation,
    /// Relative energy drift allowed when conserving. Default 1e-10.
    pub conservation_tolerance: f64,
    /// Lower bound on the `R²` of the exponential fit. Default 0.95.
    pub min_r_squared: f64,
    /// `E(t) ≤ level · E(0)` for `t ≥ time`. Defaults 2.5 and 1e-6.
    pub extinction_time: f64,
    pub extinction_level: f64,
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        Self {
            damping: DampingKind::Boundary,
            left: None,
            right: None,
            c0: 1.0,
            power: None,
            region_lo: vec![0.6],
            region_hi: vec![1.0],
            expect: Expectation::Auto,
            conservation_tolerance: 1e-10,
            min_r_squared: 0.95,
            extinction_time: 2.5,
            extinction_level: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// Default 100.
    pub systems: usize,
    /// System `i` has `1 + i mod max_dim` states. Default 5.
    pub max_dim: usize,
    /// Gramian horizon. Default 1.
    pub horizon: f64,
    /// `λ_min(W) > threshold` counts as controllable. Default 1e-8.
    pub threshold: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            systems: 100,
            max_dim: 5,
            horizon: 1.0,
            threshold: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// JSON report path; `-` is standard output.
    pub json: Option<String>,
    /// CSV check table path; `-` is standard output.
    pub csv: Option<String>,
    /// Directory for CSV artifacts.
    pub dir: Option<String>,
    /// Write every K-th trajectory snapshot to `trajectory.csv`.
    pub dump_every: Option<usize>,
    /// Write the first deterministic identity instance as polynomial text.
    pub dump_instance: bool,
}

/// Parses a TOML override value; bare words are taken as strings.
pub fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, toml::Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got '{s}'")))?;
    Ok((k.trim().to_string(), parse_value(v.trim())))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("malformed key '{key}'")));
    }
    let mut t = table;
    for p in &parts[..parts.len() - 1] {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("'{p}' in key '{key}' is not a table")))?;
    }
    t.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parses a TOML document; unknown keys are rejected with their location.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Builds a config from an optional TOML document, a forced experiment kind and dotted
    /// `key = value` overrides applied in order.
    pub fn load(
        text: Option<&str>,
        experiment: Option<Experiment>,
        overrides: &[(String, toml::Value)],
    ) -> Result<Self, CliError> {
        let mut table: toml::Table = match text {
            Some(t) => {
                Self::from_toml(t)?;
                toml::from_str(t).map_err(|e| CliError::Usage(format!("config: {e}")))?
            }
            None => toml::Table::new(),
        };
        if let Some(kind) = experiment {
            if let Some(given) = table.get("experiment") {
                if given.as_str() != Some(kind.name()) {
                    return Err(CliError::Usage(format!(
                        "the config is for experiment {given} but the subcommand is {}",
                        kind.name()
                    )));
                }
            }
            table.insert("experiment".into(), toml::Value::String(kind.name().into()));
        }
        for (k, v) in overrides {
            set_path(&mut table, k, v.clone())?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))
    }

    /// A copy with one dotted key replaced.
    pub fn with_override(&self, key: &str, value: toml::Value) -> Result<Self, CliError> {
        let mut table = toml::Table::try_from(self).map_err(|e| CliError::Usage(e.to_string()))?;
        set_path(&mut table, key, value)?;
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| {
                CliError::Usage(format!("override of '{key}': {}", e.message()))
            })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    fn heat_like(&self) -> bool {
        match self.experiment {
            Experiment::NullControl | Experiment::SemilinearControl | Experiment::StochHeat => true,
            Experiment::Observability => self.observability.equation != Equation::Wave,
            _ => false,
        }
    }

    fn is_wave(&self) -> bool {
        self.experiment == Experiment::ExactControl
            || (self.experiment == Experiment::Observability
                && self.observability.equation == Equation::Wave)
    }

    /// Fills the experiment-dependent defaults and validates shapes and ranges.
    pub fn resolved(&self) -> Result<Self, CliError> {
        let mut c = self.clone();
        let usage = |m: String| Err(CliError::Usage(m));
        let dim = c.grid.dim;
        if !(1..=2).contains(&dim) {
            return usage(format!("grid.dim must be 1 or 2, got {dim}"));
        }
        // (n, T, steps rule): `Some(k)` means k steps per unit time, `None` the wave CFL rule
        let (n, t, rule) = match c.experiment {
            Experiment::ExactControl => (100, 2.5, None),
            Experiment::Observability => match c.observability.equation {
                Equation::Heat => (100, 0.5, Some(1000.0)),
                Equation::Wave => (100, 2.5, None),
                Equation::StochHeat => (49, 0.2, Some(500.0)),
            },
            Experiment::SemilinearControl => (49, 0.4, Some(1000.0)),
            Experiment::StochHeat => (99, 0.1, Some(2000.0)),
            Experiment::Stabilize => match c.stabilization.damping {
                DampingKind::Boundary => (99, 10.0, Some(200.0)),
                DampingKind::Local => (99, 30.0, Some(100.0)),
            },
            _ => (100, 0.5, Some(1000.0)),
        };
        let n = *c.grid.n.get_or_insert(n);
        let t = *c.grid.horizon.get_or_insert(t);
        if n < 2 || !(t > 0.0 && t.is_finite()) {
            return usage("grid.n must be at least 2 and grid.horizon positive".into());
        }
        let steps = match rule {
            Some(k) => (k * t).ceil() as usize,
            None => (t * (n + 1) as f64).ceil() as usize,
        };
        if *c.grid.steps.get_or_insert(steps) == 0 {
            return usage("grid.steps must be positive".into());
        }
        if c.coefficients.noise.is_none() {
            c.coefficients.noise = Some(if c.experiment == Experiment::StochHeat {
                1.5
            } else {
                0.0
            });
        }
        if !(c.coefficients.diffusivity > 0.0) {
            return usage("coefficients.diffusivity must be positive".into());
        }
        let x0 = c.geometry.x0.get_or_insert_with(|| vec![-0.1; dim]);
        if x0.len() != dim {
            return usage(format!("geometry.x0 needs {dim} coordinates"));
        }
        match (&c.geometry.omega_lo, &c.geometry.omega_hi) {
            (None, None) if c.heat_like() => {
                c.geometry.omega_lo = Some(vec![0.3; dim]);
                c.geometry.omega_hi = Some(vec![0.6; dim]);
            }
            (None, None) => {}
            (Some(lo), Some(hi)) if lo.len() == dim && hi.len() == dim => {}
            _ => {
                return usage(format!(
                    "geometry.omega_lo and omega_hi must both be given with {dim} entries"
                ))
            }
        }
        let wave = c.is_wave();
        c.solver
            .tolerance
            .get_or_insert(if wave { 1e-3 } else { 1e-8 });
        c.solver
            .max_iter
            .get_or_insert(if wave { 200 } else { 500 });
        c.solver
            .residual_threshold
            .get_or_insert(if c.experiment == Experiment::NullControl {
                1e-3
            } else {
                1e-2
            });
        if c.data.mode.is_empty() || c.data.mode.contains(&0) {
            return usage("data.mode entries must be positive".into());
        }
        while c.data.mode.len() < dim {
            let last = *c.data.mode.last().expect("non-empty");
            c.data.mode.push(last);
        }
        c.data.mode.truncate(dim);
        let s = &mut c.stabilization;
        if s.left.is_none() && s.right.is_none() && s.damping == DampingKind::Boundary {
            s.right = Some(1.0);
        }
        for v in [&mut s.region_lo, &mut s.region_hi] {
            if v.is_empty() {
                return usage("stabilization region bounds must not be empty".into());
            }
            while v.len() < dim {
                let last = *v.last().expect("non-empty");
                v.push(last);
            }
            v.truncate(dim);
        }
        if c.kalman.max_dim == 0 {
            return usage("kalman.max_dim must be positive".into());
        }
        if let Some(sw) = &c.observability.sweep {
            if sw.values.is_empty() {
                return usage("observability.sweep.values must not be empty".into());
            }
            for v in &sw.values {
                c.with_override(&sw.key, v.clone())?;
            }
        }
        Ok(c)
    }
}
