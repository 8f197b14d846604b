//! Experiment configuration: a TOML file with one table per concern, every
//! field defaulted to the reference setup.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use coarse_osc::coarse_map::CoarseMapConfig;
use coarse_osc::continuation::{ContinuationConfig, Direction, Param, ParamBound};
use coarse_osc::network::{ModelParams, DEFAULT_DT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    FreqSweep,
    Correlate,
    Project,
    Speedup,
    FixedPoint,
    Branch,
    FoldCurve,
    HopfCurve,
    SyncScan,
    Walkthrough,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::FreqSweep => "freq-sweep",
            Task::Correlate => "correlate",
            Task::Project => "project",
            Task::Speedup => "speedup",
            Task::FixedPoint => "fixed-point",
            Task::Branch => "branch",
            Task::FoldCurve => "fold-curve",
            Task::HopfCurve => "hopf-curve",
            Task::SyncScan => "sync-scan",
            Task::Walkthrough => "walkthrough",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: Option<Task>,
    pub model: ModelSection,
    pub numerics: NumericsSection,
    pub continuation: ContinuationSection,
    pub simulate: SimulateSection,
    pub freq_sweep: FreqSweepSection,
    pub correlate: CorrelateSection,
    pub project: ProjectSection,
    pub speedup: SpeedupSection,
    pub fixed_point: FixedPointSection,
    pub fold_curve: CurveSection,
    pub hopf_curve: CurveSection,
    pub sync_scan: SyncScanSection,
    pub walkthrough: WalkthroughSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: None,
            model: ModelSection::default(),
            numerics: NumericsSection::default(),
            continuation: ContinuationSection::default(),
            simulate: SimulateSection::default(),
            freq_sweep: FreqSweepSection::default(),
            correlate: CorrelateSection::default(),
            project: ProjectSection::default(),
            speedup: SpeedupSection::default(),
            fixed_point: FixedPointSection::default(),
            fold_curve: CurveSection {
                free2: "amplitude".into(),
                ..CurveSection::default()
            },
            hopf_curve: CurveSection {
                free2: "phi".into(),
                ..CurveSection::default()
            },
            sync_scan: SyncScanSection::default(),
            walkthrough: WalkthroughSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub phi: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub amplitude: f64,
    pub omega: f64,
    pub n_osc: usize,
    /// Replace the network by one oscillator (coarse state `(x, y)`).
    pub single_oscillator: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ModelParams::<f64>::reference();
        Self {
            phi: p.phi,
            beta: p.beta,
            epsilon: p.epsilon,
            amplitude: p.amplitude,
            omega: p.omega,
            n_osc: p.n_osc,
            single_oscillator: false,
        }
    }
}

impl ModelSection {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            phi: self.phi,
            beta: self.beta,
            epsilon: self.epsilon,
            amplitude: self.amplitude,
            omega: self.omega,
            n_osc: if self.single_oscillator {
                1
            } else {
                self.n_osc
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub dt: f64,
    /// Chaos order of the coarse map.
    pub q: usize,
    /// Chaos order used by simulate, correlate and project.
    pub q_projection: usize,
    /// Realizations averaged by the coarse map.
    pub r: usize,
    /// Realization `k` is drawn with seed `seed + k`.
    pub seed: u64,
    pub settle_periods: usize,
    pub observe_periods: usize,
    /// Forcing periods of plain simulation used to find a first guess.
    pub relax_periods: usize,
    pub fd_step: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            q: 1,
            q_projection: 2,
            r: 20,
            seed: 1,
            settle_periods: 50,
            observe_periods: 100,
            relax_periods: 60,
            fd_step: 1e-5,
            newton_tol: 1e-8,
            newton_max_iter: 25,
        }
    }
}

impl NumericsSection {
    pub fn map_config(&self) -> CoarseMapConfig {
        CoarseMapConfig {
            q: self.q,
            realization_seeds: self.seeds(),
            fd_step: self.fd_step,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            dt: self.dt,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.r as u64).map(|k| self.seed + k).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub param: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSection {
    /// Parameter of one-parameter continuation.
    pub free: String,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub corrector_tol: f64,
    pub corrector_max_iter: usize,
    pub max_points: usize,
    /// `forward`, `backward` or `both`.
    pub direction: String,
    pub stop_after_folds: Option<usize>,
    pub outer_fd_step: f64,
    pub fold_tol: f64,
    pub hopf_tol: f64,
    pub bounds: Vec<BoundSpec>,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        let c = ContinuationConfig::default();
        Self {
            free: "omega".into(),
            initial_step: c.initial_step,
            min_step: c.min_step,
            max_step: c.max_step,
            corrector_tol: c.corrector_tol,
            corrector_max_iter: c.corrector_max_iter,
            max_points: c.max_points,
            direction: "both".into(),
            stop_after_folds: None,
            outer_fd_step: c.outer_fd_step,
            fold_tol: c.fold_tol,
            hopf_tol: c.hopf_tol,
            bounds: Vec::new(),
        }
    }
}

impl ContinuationSection {
    /// Resolved config; `direction = "both"` resolves to forward.
    pub fn resolve(&self, fd_step: f64) -> ContinuationConfig {
        ContinuationConfig {
            initial_step: self.initial_step,
            min_step: self.min_step,
            max_step: self.max_step,
            corrector_tol: self.corrector_tol,
            corrector_max_iter: self.corrector_max_iter,
            max_points: self.max_points,
            direction: if self.direction == "backward" {
                Direction::Backward
            } else {
                Direction::Forward
            },
            fd_step,
            outer_fd_step: self.outer_fd_step,
            fold_tol: self.fold_tol,
            hopf_tol: self.hopf_tol,
            stop_after_folds: self.stop_after_folds,
            bounds: self
                .bounds
                .iter()
                .map(|b| ParamBound {
                    param: b.param.parse().expect("validated"),
                    min: b.min,
                    max: b.max,
                })
                .collect(),
        }
    }

    pub fn both(&self) -> bool {
        self.direction == "both"
    }

    pub fn free_param(&self) -> Param {
        self.free.parse().expect("validated")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub duration: f64,
    /// Time between recorded samples.
    pub sample_interval: f64,
    /// Start from uniform random states in `[-2, 2]` instead of `(1, 0)`.
    pub random_initial: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            duration: 100.0,
            sample_interval: 0.5,
            random_initial: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreqSweepSection {
    pub phi_min: f64,
    pub phi_max: f64,
    pub points: usize,
    pub settle_time: f64,
    pub measure_time: f64,
}

impl Default for FreqSweepSection {
    fn default() -> Self {
        Self {
            phi_min: -0.5,
            phi_max: 3.0,
            points: 36,
            settle_time: 500.0,
            measure_time: 200.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelateSection {
    /// Snapshot times; empty means `0, 2 pi / omega, 4 pi / omega`.
    pub times: Vec<f64>,
    /// Seeds of the random initial conditions; empty means `numerics.seed`.
    pub initial_seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectSection {
    pub n_project: usize,
    pub n_inner: usize,
    pub fit_order: usize,
    pub duration: f64,
    /// Draw a new realization at every lift.
    pub fresh_realizations: bool,
    /// Initial `(a_0, b_0)`; higher coefficients start at zero.
    pub initial: [f64; 2],
}

impl Default for ProjectSection {
    fn default() -> Self {
        Self {
            n_project: 1,
            n_inner: 3,
            fit_order: 3,
            duration: 100.0,
            fresh_realizations: true,
            initial: [1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedupSection {
    pub n_project: Vec<usize>,
    pub duration: f64,
    pub repeats: usize,
}

impl Default for SpeedupSection {
    fn default() -> Self {
        Self {
            n_project: vec![0, 1, 2, 5, 10, 20, 40, 71, 100],
            duration: 50.0,
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointSection {
    /// Initial guess (flattened `a` then `b`); empty means relaxation.
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSection {
    /// Second continued parameter; the first is `continuation.free`.
    pub free2: String,
    /// Which bifurcation to start from, counted in increasing order of
    /// `continuation.free`.
    pub index: usize,
    /// Stop with a physics-breakdown record once the median desynchronized
    /// fraction reaches `breakdown_threshold`.
    pub breakdown_policy: bool,
    pub breakdown_threshold: f64,
    /// Probe every accepted point instead of only after repeated corrector
    /// failures.
    pub breakdown_every_point: bool,
    /// Realizations (from the averaged set) used by the desync probe.
    pub probe_realizations: usize,
}

impl Default for CurveSection {
    fn default() -> Self {
        Self {
            free2: "amplitude".into(),
            index: 0,
            breakdown_policy: false,
            breakdown_threshold: 0.01,
            breakdown_every_point: true,
            probe_realizations: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncScanSection {
    pub beta: Vec<f64>,
    pub omega: Vec<f64>,
    /// Realization seeds; empty means `numerics.seed`.
    pub realization_seeds: Vec<u64>,
    /// Strobe periods of the raster output; zero disables it.
    pub raster_periods: usize,
    /// Oscillators with the largest `mu` included in the raster.
    pub raster_top: usize,
}

impl Default for SyncScanSection {
    fn default() -> Self {
        Self {
            beta: vec![0.5, 0.8, 1.0, 1.2],
            omega: vec![0.85],
            realization_seeds: Vec::new(),
            raster_periods: 0,
            raster_top: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkthroughSection {
    /// Fold frequency; computed by continuation when absent.
    pub omega_star: Option<f64>,
    /// Distances `|omega - omega*|` to sample.
    pub offsets: Vec<f64>,
    /// `above` or `below` the fold.
    pub side: String,
    pub budget_periods: usize,
    /// Complete turns of the strobed state needed to report a period.
    pub min_turns: usize,
    /// Realization seeds; empty means `numerics.seed`.
    pub realization_seeds: Vec<u64>,
}

impl Default for WalkthroughSection {
    fn default() -> Self {
        Self {
            omega_star: None,
            offsets: vec![1e-4, 2e-4, 5e-4, 1e-3],
            side: "above".into(),
            budget_periods: 3000,
            min_turns: 3,
            realization_seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// A schema violation, located by its dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "config error: {}", self.message)
        } else {
            write!(f, "config error at `{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses TOML text, applies `key.path=value` overrides and checks the
/// result against the schema.
pub fn load(text: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut value: toml::Value =
        toml::from_str(text).map_err(|e| err("", e.message().to_string()))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        err(
            if path == "." { "" } else { &path },
            e.into_inner().to_string(),
        )
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| err(spec, "override must look like `section.field=value`"))?;
    let key = key.trim();
    // a bare word that is not valid TOML is taken as a string
    let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| err(key, "override path crosses a non-table value"))?;
        if k + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(err(key, "empty override path"))
}

fn check(cond: bool, path: &str, message: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(err(path, message))
    }
}

fn check_param(name: &str, path: &str) -> Result<Param, ConfigError> {
    name.parse::<Param>().map_err(|_| {
        err(
            path,
            format!("unknown parameter `{name}` (omega, amplitude, beta, phi)"),
        )
    })
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        for (name, v) in [
            ("model.phi", m.phi),
            ("model.beta", m.beta),
            ("model.epsilon", m.epsilon),
            ("model.amplitude", m.amplitude),
            ("model.omega", m.omega),
        ] {
            check(v.is_finite(), name, "must be finite")?;
        }
        check(m.epsilon >= 0.0, "model.epsilon", "must be non-negative")?;
        check(
            m.amplitude >= 0.0,
            "model.amplitude",
            "must be non-negative",
        )?;
        check(m.omega > 0.0, "model.omega", "must be positive")?;
        check(m.n_osc >= 1, "model.n_osc", "must be at least 1")?;

        let n = &self.numerics;
        check(
            n.dt > 0.0 && n.dt <= 0.1,
            "numerics.dt",
            "must lie in (0, 0.1]",
        )?;
        check(n.r >= 1, "numerics.r", "need at least one realization")?;
        check(n.q <= 8, "numerics.q", "orders above 8 are not supported")?;
        check(
            n.q_projection <= 8,
            "numerics.q_projection",
            "orders above 8 are not supported",
        )?;
        if !m.single_oscillator {
            check(
                n.q < m.n_osc,
                "numerics.q",
                "needs more oscillators than the chaos order",
            )?;
        }
        check(n.fd_step > 0.0, "numerics.fd_step", "must be positive")?;
        check(
            n.newton_tol > 0.0,
            "numerics.newton_tol",
            "must be positive",
        )?;
        check(
            n.observe_periods >= 20,
            "numerics.observe_periods",
            "must be at least 20",
        )?;

        let c = &self.continuation;
        check_param(&c.free, "continuation.free")?;
        check(
            matches!(c.direction.as_str(), "forward" | "backward" | "both"),
            "continuation.direction",
            "must be forward, backward or both",
        )?;
        check(
            0.0 < c.min_step && c.min_step <= c.initial_step && c.initial_step <= c.max_step,
            "continuation.initial_step",
            "steps must satisfy 0 < min_step <= initial_step <= max_step",
        )?;
        check(
            c.corrector_tol > 0.0,
            "continuation.corrector_tol",
            "must be positive",
        )?;
        check(
            c.max_points >= 2,
            "continuation.max_points",
            "must be at least 2",
        )?;
        for (k, b) in c.bounds.iter().enumerate() {
            let path = format!("continuation.bounds[{k}]");
            check_param(&b.param, &format!("{path}.param"))?;
            check(b.min < b.max, &path, "min must be below max")?;
        }
        for (section, s) in [
            ("fold_curve", &self.fold_curve),
            ("hopf_curve", &self.hopf_curve),
        ] {
            let p2 = check_param(&s.free2, &format!("{section}.free2"))?;
            check(
                p2 != check_param(&c.free, "continuation.free")?,
                &format!("{section}.free2"),
                "must differ from continuation.free",
            )?;
            check(
                (0.0..1.0).contains(&s.breakdown_threshold),
                &format!("{section}.breakdown_threshold"),
                "must lie in [0, 1)",
            )?;
            check(
                s.probe_realizations >= 1,
                &format!("{section}.probe_realizations"),
                "must be positive",
            )?;
        }

        let f = &self.freq_sweep;
        check(
            f.phi_min <= f.phi_max,
            "freq_sweep.phi_max",
            "must not be below phi_min",
        )?;
        check(f.points >= 1, "freq_sweep.points", "must be positive")?;
        check(
            f.settle_time >= 0.0 && f.measure_time > 0.0,
            "freq_sweep.measure_time",
            "must be positive",
        )?;

        check(
            self.simulate.duration > 0.0,
            "simulate.duration",
            "must be positive",
        )?;
        check(
            self.simulate.sample_interval > 0.0,
            "simulate.sample_interval",
            "must be positive",
        )?;
        check(
            self.correlate.times.iter().all(|t| *t >= 0.0)
                && self.correlate.times.windows(2).all(|w| w[0] <= w[1]),
            "correlate.times",
            "must be sorted and non-negative",
        )?;
        let p = &self.project;
        check(p.duration > 0.0, "project.duration", "must be positive")?;
        check(
            p.n_inner >= p.fit_order && p.n_inner >= 1,
            "project.n_inner",
            "must be at least fit_order",
        )?;
        check(
            self.speedup.repeats >= 1,
            "speedup.repeats",
            "must be positive",
        )?;
        check(
            !self.speedup.n_project.is_empty(),
            "speedup.n_project",
            "must not be empty",
        )?;
        check(
            !self.sync_scan.beta.is_empty(),
            "sync_scan.beta",
            "must not be empty",
        )?;
        check(
            !self.sync_scan.omega.iter().any(|w| *w <= 0.0),
            "sync_scan.omega",
            "must be positive",
        )?;
        check(
            !self.sync_scan.omega.is_empty(),
            "sync_scan.omega",
            "must not be empty",
        )?;
        let w = &self.walkthrough;
        check(
            matches!(w.side.as_str(), "above" | "below"),
            "walkthrough.side",
            "must be above or below",
        )?;
        check(
            !w.offsets.is_empty() && w.offsets.iter().all(|o| *o > 0.0),
            "walkthrough.offsets",
            "must be non-empty and positive",
        )?;
        check(
            w.min_turns >= 1,
            "walkthrough.min_turns",
            "must be positive",
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_defaults() {
        let c = load("", &[]).unwrap();
        assert_eq!(c.model.n_osc, 500);
        assert_eq!(c.numerics.r, 20);
        assert_eq!(c.numerics.q_projection, 2);
        assert_eq!(c.model.params(), ModelParams::reference());
    }

    #[test]
    fn unknown_fields_are_reported_with_their_path() {
        let e = load("[model]\nkappa = 1.0\n", &[]).unwrap_err();
        assert_eq!(e.path, "model.kappa");
        assert!(e.message.contains("kappa"));
        let e = load("task = \"dance\"\n", &[]).unwrap_err();
        assert_eq!(e.path, "task");
    }

    #[test]
    fn semantic_checks_name_the_field() {
        let e = load("[model]\nomega = -1.0\n", &[]).unwrap_err();
        assert_eq!(e.path, "model.omega");
        let e = load("[continuation]\nfree = \"kappa\"\n", &[]).unwrap_err();
        assert_eq!(e.path, "continuation.free");
    }

    #[test]
    fn overrides_win_over_the_file() {
        let c = load(
            "[model]\nbeta = 0.1\n",
            &[
                "model.beta=0.5".into(),
                "continuation.direction=forward".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.model.beta, 0.5);
        assert_eq!(c.continuation.direction, "forward");
        let e = load("", &["model.beta=oops".into()]).unwrap_err();
        assert_eq!(e.path, "model.beta");
    }
}
