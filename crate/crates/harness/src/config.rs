//! JSON experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use exclusion_core::boundary::{RateModel, EXPONENT_CAP};
use exclusion_core::ldp::LdpOptions;
use exclusion_core::pde::SolverOptions;
use exclusion_core::profile::Profile;
use exclusion_core::sim::replica_rng;
use exclusion_core::testfn::{SpaceBasis, TestFunction};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Pde,
    Stationary,
    HydroCompare,
    TiltCompare,
    LdpCheck,
    ConvergenceStudy,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Pde => "pde",
            ExperimentKind::Stationary => "stationary",
            ExperimentKind::HydroCompare => "hydro-compare",
            ExperimentKind::TiltCompare => "tilt-compare",
            ExperimentKind::LdpCheck => "ldp-check",
            ExperimentKind::ConvergenceStudy => "convergence-study",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// The three-site preset with rates `a`, `b` and optional `a2`.
    L3 {
        a: f64,
        b: f64,
        #[serde(default)]
        a2: Option<f64>,
    },
    /// Plain-text rate table, relative to the config file.
    File { path: PathBuf },
    /// Random irreducible tables drawn from `seed`.
    Random {
        l: usize,
        seed: u64,
        #[serde(default = "default_fill")]
        fill: f64,
        #[serde(default = "default_max_rate")]
        max_rate: f64,
    },
}

fn default_fill() -> f64 {
    0.5
}

fn default_max_rate() -> f64 {
    2.0
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::L3 { a: 1.0, b: 2.0, a2: None }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<RateModel<f64>, HarnessError> {
        let invalid = |field: &str, e: &dyn fmt::Display| HarnessError::Invalid { field: field.into(), message: e.to_string() };
        match self {
            ModelSpec::L3 { a, b, a2 } => RateModel::l3(*a, *b, *a2).map(|(m, _)| m).map_err(|e| invalid("model", &e)),
            ModelSpec::File { path } => RateModel::from_file(path).map_err(|e| invalid("model.path", &format!("{}: {e}", path.display()))),
            ModelSpec::Random { l, seed, fill, max_rate } => {
                let mut rng = replica_rng(*seed, 0, u64::MAX);
                RateModel::random_irreducible(*l, *fill, *max_rate, &mut rng).map_err(|e| invalid("model", &e))
            }
        }
    }
}

/// Spatial test functions addressed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableSpec {
    One,
    X,
    X2,
    Cos {
        #[serde(default = "one_mode")]
        m: usize,
    },
    Sin {
        #[serde(default = "one_mode")]
        m: usize,
    },
    TestFunction { function: TestFunction<f64> },
}

fn one_mode() -> usize {
    1
}

impl ObservableSpec {
    pub fn label(&self) -> String {
        match self {
            ObservableSpec::One => "1".into(),
            ObservableSpec::X => "x".into(),
            ObservableSpec::X2 => "x^2".into(),
            ObservableSpec::Cos { m } => format!("cos({m}pi x)"),
            ObservableSpec::Sin { m } => format!("sin({m}pi x)"),
            ObservableSpec::TestFunction { .. } => "H".into(),
        }
    }

    pub fn build(&self, t_final: f64) -> Result<TestFunction<f64>, HarnessError> {
        let horizon = if t_final > 0.0 { t_final } else { 1.0 };
        let unit = |basis: SpaceBasis, m: usize, idx: usize| {
            let mut c = vec![0.0; basis.len(m)];
            c[idx] = 1.0;
            TestFunction::static_space(basis, 0, m, horizon, &c)
        };
        let h = match self {
            ObservableSpec::One => TestFunction::affine(1.0, 0.0, 0, 1, horizon),
            ObservableSpec::X => TestFunction::affine(0.0, 1.0, 0, 1, horizon),
            ObservableSpec::X2 => TestFunction::static_space(SpaceBasis::Legendre, 0, 2, horizon, &[1.0 / 3.0, 0.5, 1.0 / 6.0]),
            ObservableSpec::Cos { m } => unit(SpaceBasis::Cosine, *m, *m),
            ObservableSpec::Sin { m } if *m >= 1 => unit(SpaceBasis::Sine, *m, *m - 1),
            ObservableSpec::Sin { .. } => return Err(HarnessError::invalid("observables", "sine modes start at m = 1")),
            ObservableSpec::TestFunction { function } => Ok(function.clone()),
        };
        h.map_err(|e| HarnessError::invalid("observables", e))
    }
}

/// Tilt `G` for the perturbed dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TiltSpec {
    /// `c0 + c1 x`.
    Affine { c0: f64, c1: f64 },
    /// `amp sin(m pi x)`.
    Sine {
        amp: f64,
        #[serde(default = "one_mode")]
        m: usize,
    },
    TestFunction { function: TestFunction<f64> },
}

impl TiltSpec {
    pub fn label(&self) -> String {
        match self {
            TiltSpec::Affine { c0, c1 } => format!("{c0}+{c1}x"),
            TiltSpec::Sine { amp, m } => format!("{amp}sin({m}pi x)"),
            TiltSpec::TestFunction { .. } => "G".into(),
        }
    }

    /// Builds `G` with `p` Bernstein degree and space size `j` where the
    /// family allows it.
    pub fn build(&self, p: usize, j: usize, t_final: f64) -> Result<TestFunction<f64>, HarnessError> {
        let horizon = if t_final > 0.0 { t_final } else { 1.0 };
        let g = match self {
            TiltSpec::Affine { c0, c1 } => TestFunction::affine(*c0, *c1, p, j.max(1), horizon),
            TiltSpec::Sine { amp, m } if *m >= 1 => {
                let mut c = vec![0.0; SpaceBasis::Sine.len(*m)];
                c[*m - 1] = *amp;
                TestFunction::static_space(SpaceBasis::Sine, p, *m, horizon, &c)
            }
            TiltSpec::Sine { .. } => return Err(HarnessError::invalid("tilt", "sine modes start at m = 1")),
            TiltSpec::TestFunction { function } => Ok(function.clone()),
        };
        let g = g.map_err(|e| HarnessError::invalid("tilt", e))?;
        if !g.is_time_independent() && t_final > 0.0 && (g.t_final() - t_final).abs() > 1e-12 {
            return Err(HarnessError::invalid("tilt", format!("horizon {} differs from t_final {t_final}", g.t_final())));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    /// Reference PDE resolution.
    pub n: usize,
    /// Time step; the explicit bound `0.4 dx^2` when absent.
    pub dt: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self { n: 512, dt: None, solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpSettings {
    /// PDE resolution of the density paths.
    pub n: usize,
    pub options: LdpOptions,
    pub battery: Vec<TiltSpec>,
}

impl Default for LdpSettings {
    fn default() -> Self {
        Self { n: 128, options: LdpOptions::default(), battery: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarySettings {
    pub resolution: usize,
    pub tol: f64,
    pub classify: bool,
    pub delta: f64,
    pub t_final: f64,
}

impl Default for StationarySettings {
    fn default() -> Self {
        Self { resolution: 10_000, tol: 1e-13, classify: true, delta: 0.02, t_final: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSettings {
    /// Successively doubled PDE grids; each is compared with the next.
    pub grids: Vec<usize>,
    pub t_final: f64,
    /// Initial profile of the grid study.
    pub initial: Profile,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self { grids: vec![32, 64, 128, 256], t_final: 0.1, initial: Profile::Linear { left: 0.2, right: 0.6 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "default_initial")]
    pub initial: Profile,
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    pub t_final: f64,
    /// Number of equally spaced sample times in `[0, T]`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_observables")]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub tilt: Option<TiltSpec>,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub ldp: LdpSettings,
    #[serde(default)]
    pub stationary: StationarySettings,
    #[serde(default)]
    pub convergence: ConvergenceSettings,
    /// Upper bound on the sup-gap at the largest lattice size.
    #[serde(default)]
    pub max_final_gap: Option<f64>,
    /// Record occupation bitstrings at every sample time.
    #[serde(default)]
    pub snapshots: bool,
    /// Record Dynkin martingales of every observable.
    #[serde(default)]
    pub dynkin: bool,
    /// Also write PDE fields in the binary format.
    #[serde(default)]
    pub binary: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_initial() -> Profile {
    Profile::Cosine { mean: 0.5, amp: 0.3 }
}

fn default_replicas() -> usize {
    1
}

fn default_samples() -> usize {
    11
}

fn default_observables() -> Vec<ObservableSpec> {
    vec![ObservableSpec::One, ObservableSpec::X, ObservableSpec::Cos { m: 1 }]
}

impl ExperimentConfig {
    /// Minimal config with defaults for everything but the horizon.
    pub fn new(t_final: f64) -> Self {
        serde_json::from_value(serde_json::json!({ "t_final": t_final })).expect("defaults deserialize")
    }

    /// Parses JSON text; relative model paths resolve against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self, HarnessError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if let (ModelSpec::File { path }, Some(base)) = (&mut cfg.model, base) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent())
    }

    /// Sample times `k T / (samples - 1)`; a single time when `T = 0`.
    pub fn sample_times(&self) -> Vec<f64> {
        if self.t_final == 0.0 || self.samples <= 1 {
            return vec![0.0];
        }
        let m = self.samples - 1;
        (0..=m).map(|k| if k == m { self.t_final } else { self.t_final * k as f64 / m as f64 }).collect()
    }

    /// Checks every constraint that does not need a run and returns the model.
    pub fn validate(&self, kind: ExperimentKind) -> Result<RateModel<f64>, HarnessError> {
        if let Some(k) = self.kind {
            if k != kind {
                return Err(HarnessError::invalid("kind", format!("config is for {k}, subcommand is {kind}")));
            }
        }
        if let ModelSpec::File { path } = &self.model {
            if !path.is_file() {
                return Err(HarnessError::invalid("model.path", format!("{} does not exist", path.display())));
            }
        }
        let model = self.model.build()?;
        let l = model.l();
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(HarnessError::invalid("t_final", "must be finite and nonnegative"));
        }
        if !self.initial.is_admissible() {
            return Err(HarnessError::invalid("initial", "profile leaves [0, 1]"));
        }
        if self.replicas == 0 {
            return Err(HarnessError::invalid("replicas", "need at least one replica"));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n < 2 * l + 3) {
            return Err(HarnessError::invalid("sizes", format!("N = {n} violates N - 1 >= 2l + 2 = {}", 2 * l + 2)));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::invalid("sizes", "lattice sizes must be strictly ascending"));
        }
        let needs_sizes = matches!(kind, ExperimentKind::Simulate | ExperimentKind::HydroCompare | ExperimentKind::TiltCompare);
        if needs_sizes && self.sizes.is_empty() {
            return Err(HarnessError::invalid("sizes", "at least one lattice size is required"));
        }
        if self.observables.is_empty() && needs_sizes {
            return Err(HarnessError::invalid("observables", "at least one observable is required"));
        }
        for h in &self.observables {
            h.build(self.t_final)?;
        }
        if kind == ExperimentKind::TiltCompare && self.tilt.is_none() {
            return Err(HarnessError::invalid("tilt", "tilt-compare needs a tilt"));
        }
        let mut tilts: Vec<(&str, &TiltSpec)> = self.tilt.iter().map(|t| ("tilt", t)).collect();
        tilts.extend(self.ldp.battery.iter().map(|t| ("ldp.battery", t)));
        for (field, spec) in tilts {
            let g = spec.build(self.ldp.options.p, self.ldp.options.j, self.t_final)?;
            let (gsup, _) = g.sup_bounds();
            if gsup * l as f64 > EXPONENT_CAP {
                return Err(HarnessError::invalid(field, format!("sup |G| l = {} exceeds the exponent cap {EXPONENT_CAP}", gsup * l as f64)));
            }
        }
        if self.grid.n < 8 {
            return Err(HarnessError::invalid("grid.n", "need at least 8 cells"));
        }
        if let Some(dt) = self.grid.dt {
            if !(dt > 0.0) {
                return Err(HarnessError::invalid("grid.dt", "must be positive"));
            }
        }
        if kind == ExperimentKind::ConvergenceStudy {
            let c = &self.convergence;
            if c.grids.len() < 3 || c.grids[0] < 8 || c.grids.windows(2).any(|w| w[1] != 2 * w[0]) {
                return Err(HarnessError::invalid("convergence.grids", "need at least three successively doubled grids of at least 8 cells"));
            }
            if !(c.t_final > 0.0) || !c.initial.is_admissible() {
                return Err(HarnessError::invalid("convergence", "needs T > 0 and an admissible profile"));
            }
        }
        if kind == ExperimentKind::LdpCheck && !(self.t_final > 0.0) {
            return Err(HarnessError::invalid("t_final", "ldp-check needs T > 0"));
        }
        if kind == ExperimentKind::Stationary && self.stationary.resolution < 100 {
            return Err(HarnessError::invalid("stationary.resolution", "need at least 100 scan points"));
        }
        Ok(model)
    }
}
