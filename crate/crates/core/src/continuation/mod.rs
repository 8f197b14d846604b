//! Pseudo-arclength continuation of coarse fixed points, and two-parameter
//! tracking of their fold and Neimark-Sacker (Hopf) bifurcations.

mod palc;
mod problems;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::coarse_map::{eigenvalues, is_stable, CoarseFixedPoint, CoarseMap, Complex64};
use crate::error::{Error, Result};
use crate::network::ModelParams;
use palc::{Accepted, Monitor, Problem, Verdict};
use problems::{FixedPointProblem, FoldProblem, HopfProblem};

/// A model parameter that continuation may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    Omega,
    Amplitude,
    Beta,
    Phi,
}

impl Param {
    pub fn get(self, p: &ModelParams) -> f64 {
        match self {
            Param::Omega => p.omega,
            Param::Amplitude => p.amplitude,
            Param::Beta => p.beta,
            Param::Phi => p.phi,
        }
    }

    pub fn set(self, p: &mut ModelParams, v: f64) {
        match self {
            Param::Omega => p.omega = v,
            Param::Amplitude => p.amplitude = v,
            Param::Beta => p.beta = v,
            Param::Phi => p.phi = v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::Omega => "omega",
            Param::Amplitude => "amplitude",
            Param::Beta => "beta",
            Param::Phi => "phi",
        }
    }

    /// Whether `v` is an admissible value. A zero forcing amplitude is
    /// excluded since it leaves the locked phase undetermined.
    pub fn in_domain(self, v: f64) -> bool {
        v.is_finite()
            && match self {
                Param::Omega | Param::Amplitude => v > 0.0,
                Param::Beta => v >= 0.0,
                Param::Phi => true,
            }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" | "w" => Ok(Param::Omega),
            "amplitude" | "A" | "a" => Ok(Param::Amplitude),
            "beta" => Ok(Param::Beta),
            "phi" => Ok(Param::Phi),
            other => Err(Error::InvalidParameter(format!("unknown parameter `{other}`"))),
        }
    }
}

/// An extra window a continuation run must stay inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBound {
    pub param: Param,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// Start with the primary parameter increasing.
    #[default]
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationConfig {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub corrector_tol: f64,
    pub corrector_max_iter: usize,
    pub max_points: usize,
    pub direction: Direction,
    /// Central-difference step for `J` and `J v`.
    pub fd_step: f64,
    /// Step of the outer differences of the extended fold and Hopf systems.
    pub outer_fd_step: f64,
    /// Refinement stops once `|det(J - I)|` falls below this.
    pub fold_tol: f64,
    /// Refinement stops once `| |lambda|^2 - 1 |` falls below this.
    pub hopf_tol: f64,
    /// Stop a one-parameter branch after this many folds.
    pub stop_after_folds: Option<usize>,
    pub bounds: Vec<ParamBound>,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.01,
            min_step: 1e-6,
            max_step: 0.05,
            corrector_tol: 1e-8,
            corrector_max_iter: 25,
            max_points: 500,
            direction: Direction::Forward,
            fd_step: 1e-5,
            outer_fd_step: 1e-4,
            fold_tol: 1e-8,
            hopf_tol: 1e-8,
            stop_after_folds: None,
            bounds: Vec::new(),
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.min_step && self.min_step <= self.initial_step && self.initial_step <= self.max_step) {
            return Err(Error::InvalidParameter(
                "steps must satisfy 0 < min_step <= initial_step <= max_step".into(),
            ));
        }
        if !(self.corrector_tol > 0.0) || self.corrector_max_iter == 0 || self.max_points < 2 {
            return Err(Error::InvalidParameter(
                "corrector_tol, corrector_max_iter and max_points must be positive".into(),
            ));
        }
        if !(self.fd_step > 0.0 && self.outer_fd_step > 0.0 && self.fold_tol > 0.0 && self.hopf_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "difference steps and test tolerances must be positive".into(),
            ));
        }
        for b in &self.bounds {
            if !(b.min < b.max) {
                return Err(Error::InvalidParameter(format!("empty window for {}", b.param)));
            }
        }
        Ok(())
    }

    pub fn with_direction(&self, direction: Direction) -> Self {
        Self {
            direction,
            ..self.clone()
        }
    }
}

/// Why a continuation run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    MaxPoints,
    ParameterBoundary { param: Param, value: f64 },
    MinStepUnderflow { step: f64 },
    ClosedLoop,
    FoldLimit { count: usize },
    /// The Hopf angle reached `0` or `pi`.
    Resonance { theta: f64 },
    /// The corrector kept failing while a measurable fraction of
    /// oscillators had left the synchronized cluster.
    PhysicsBreakdown { desync_fraction: f64, params: Vec<(Param, f64)> },
    NumericalFailure { reason: String },
}

impl Termination {
    /// Stable machine-readable tag.
    pub fn tag(&self) -> &'static str {
        match self {
            Termination::MaxPoints => "max-points",
            Termination::ParameterBoundary { .. } => "parameter-boundary",
            Termination::MinStepUnderflow { .. } => "min-step-underflow",
            Termination::ClosedLoop => "closed-loop",
            Termination::FoldLimit { .. } => "fold-limit",
            Termination::Resonance { .. } => "resonance",
            Termination::PhysicsBreakdown { .. } => "physics-breakdown",
            Termination::NumericalFailure { .. } => "numerical-failure",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::MaxPoints => write!(f, "max-points"),
            Termination::ParameterBoundary { param, value } => {
                write!(f, "parameter-boundary {param}={value}")
            }
            Termination::MinStepUnderflow { step } => write!(f, "min-step-underflow step={step:e}"),
            Termination::ClosedLoop => write!(f, "closed-loop"),
            Termination::FoldLimit { count } => write!(f, "fold-limit count={count}"),
            Termination::Resonance { theta } => write!(f, "resonance theta={theta}"),
            Termination::PhysicsBreakdown { desync_fraction, params } => {
                write!(f, "physics-breakdown desync={desync_fraction}")?;
                for (p, v) in params {
                    write!(f, " {p}={v}")?;
                }
                Ok(())
            }
            Termination::NumericalFailure { reason } => write!(f, "numerical-failure: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    /// Values of the continued parameters.
    pub params: Vec<(Param, f64)>,
    /// Coarse fixed point.
    pub z: Vec<f64>,
    /// Eigenvalues of the coarse Jacobian, largest modulus first.
    pub eigenvalues: Vec<Complex64>,
    pub stable: bool,
    /// `det(J - I)`.
    pub fold_test: f64,
    /// Product of `|lambda|^2 - 1` over complex pairs; `None` without any.
    pub hopf_test: Option<f64>,
    /// Angle of the critical pair on Hopf curves.
    pub theta: Option<f64>,
    /// Full unknown vector of the continued system.
    pub unknowns: Vec<f64>,
}

impl BranchPoint {
    fn new(params: Vec<(Param, f64)>, z: Vec<f64>, j: &DMatrix<f64>, unknowns: &DVector<f64>) -> Self {
        let ev = eigenvalues(j);
        let n = j.nrows();
        Self {
            params,
            z,
            stable: is_stable(&ev),
            fold_test: (j - DMatrix::identity(n, n)).determinant(),
            hopf_test: hopf_test(&ev),
            theta: None,
            eigenvalues: ev,
            unknowns: unknowns.iter().copied().collect(),
        }
    }

    pub fn param(&self, p: Param) -> Option<f64> {
        self.params.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }

    /// Number of eigenvalues outside the unit disk.
    pub fn n_unstable(&self) -> usize {
        self.eigenvalues.iter().filter(|l| l.norm() > 1.0).count()
    }

    /// Distance of the eigenvalue closest to `+1`.
    pub fn distance_to_unity(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| (l - Complex64::new(1.0, 0.0)).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Complex eigenvalue (positive imaginary part) closest to the unit circle.
    pub fn critical_pair(&self) -> Option<Complex64> {
        self.eigenvalues
            .iter()
            .filter(|l| l.im > COMPLEX_IM_TOL)
            .min_by(|a, b| (a.norm() - 1.0).abs().total_cmp(&(b.norm() - 1.0).abs()))
            .copied()
    }

    /// `params` with this point's continued values applied.
    pub fn apply_to(&self, base: &ModelParams) -> ModelParams {
        let mut p = *base;
        for &(q, v) in &self.params {
            q.set(&mut p, v);
        }
        p
    }
}

const COMPLEX_IM_TOL: f64 = 1e-9;

/// Product over complex-conjugate pairs of `|lambda|^2 - 1`.
pub fn hopf_test(eigenvalues: &[Complex64]) -> Option<f64> {
    let mut pairs = eigenvalues.iter().filter(|l| l.im > COMPLEX_IM_TOL).peekable();
    pairs.peek()?;
    Some(pairs.map(|l| l.norm_sqr() - 1.0).product())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub free: Vec<Param>,
    pub points: Vec<BranchPoint>,
    pub termination: Termination,
}

impl Branch {
    /// Indices `i` with a sign change of the fold test between `i` and `i + 1`.
    pub fn fold_brackets(&self) -> Vec<usize> {
        brackets(&self.points, |p| Some(p.fold_test))
    }

    pub fn hopf_brackets(&self) -> Vec<usize> {
        brackets(&self.points, |p| p.hopf_test)
    }

    pub fn values(&self, p: Param) -> Vec<f64> {
        self.points.iter().filter_map(|b| b.param(p)).collect()
    }

    /// Whether `theta` moves monotonically along the curve.
    pub fn theta_monotone(&self) -> bool {
        let th: Vec<f64> = self.points.iter().filter_map(|p| p.theta).collect();
        th.windows(2).all(|w| w[1] >= w[0]) || th.windows(2).all(|w| w[1] <= w[0])
    }
}

fn brackets(points: &[BranchPoint], f: impl Fn(&BranchPoint) -> Option<f64>) -> Vec<usize> {
    points
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| match (f(&w[0]), f(&w[1])) {
            (Some(a), Some(b)) if a * b < 0.0 => Some(i),
            _ => None,
        })
        .collect()
}

/// Desynchronization check that can end a curve with a physics-breakdown
/// record. By default it is consulted only when the corrector keeps
/// failing; [`BreakdownPolicy::at_every_point`] also probes each accepted
/// point, which matters when the averaged map stays smooth well past the
/// onset of desynchronization.
pub struct BreakdownPolicy<'a> {
    /// Fraction of desynchronized oscillators at or above which the coarse
    /// description counts as broken.
    pub threshold: f64,
    /// Desynchronized fraction at the given parameters.
    pub probe: Box<dyn Fn(&ModelParams) -> Result<f64> + Sync + 'a>,
    pub every_point: bool,
}

impl<'a> BreakdownPolicy<'a> {
    pub fn new(threshold: f64, probe: impl Fn(&ModelParams) -> Result<f64> + Sync + 'a) -> Self {
        Self {
            threshold,
            probe: Box::new(probe),
            every_point: false,
        }
    }

    pub fn at_every_point(mut self) -> Self {
        self.every_point = true;
        self
    }
}

struct BreakdownMonitor<'p, 'a, F> {
    policy: Option<&'p BreakdownPolicy<'a>>,
    params_of: F,
    free: (Param, Param),
    checked: Option<DVector<f64>>,
}

impl<F: Fn(&DVector<f64>) -> ModelParams> BreakdownMonitor<'_, '_, F> {
    fn probe(&mut self, policy: &BreakdownPolicy<'_>, u: &DVector<f64>) -> Verdict {
        // one probe per accepted point
        if self.checked.as_ref() == Some(u) {
            return Verdict::Continue;
        }
        self.checked = Some(u.clone());
        let p = (self.params_of)(u);
        match (policy.probe)(&p) {
            Ok(frac) if frac >= policy.threshold => Verdict::Stop(Termination::PhysicsBreakdown {
                desync_fraction: frac,
                params: vec![(self.free.0, self.free.0.get(&p)), (self.free.1, self.free.1.get(&p))],
            }),
            Ok(_) => Verdict::Continue,
            Err(e) => Verdict::Stop(Termination::NumericalFailure {
                reason: format!("desync probe failed: {e}"),
            }),
        }
    }
}

impl<F: Fn(&DVector<f64>) -> ModelParams> Monitor for BreakdownMonitor<'_, '_, F> {
    fn on_accept(&mut self, point: &Accepted) -> Verdict {
        match self.policy {
            Some(policy) if policy.every_point => self.probe(policy, &point.u),
            _ => Verdict::Continue,
        }
    }

    fn on_repeated_failure(&mut self, last: &Accepted, _failures: usize) -> Verdict {
        match self.policy {
            Some(policy) => self.probe(policy, &last.u),
            None => Verdict::Continue,
        }
    }
}

struct FoldCounter {
    n: usize,
    limit: Option<usize>,
    count: usize,
    last: Option<f64>,
}

impl Monitor for FoldCounter {
    fn on_accept(&mut self, point: &Accepted) -> Verdict {
        let d = point.jac.view((0, 0), (self.n, self.n)).clone_owned().determinant();
        if let Some(prev) = self.last {
            if prev * d < 0.0 {
                self.count += 1;
            }
        }
        self.last = Some(d);
        match self.limit {
            Some(l) if self.count >= l => Verdict::Stop(Termination::FoldLimit { count: self.count }),
            _ => Verdict::Continue,
        }
    }
}

fn j_from_block(jac: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut j = jac.view((0, 0), (n, n)).clone_owned();
    for i in 0..n {
        j[(i, i)] += 1.0;
    }
    j
}

fn fixed_point_problem<'m, M: CoarseMap + ?Sized>(
    map: &'m M,
    params: &ModelParams,
    free: Param,
    config: &ContinuationConfig,
) -> FixedPointProblem<'m, M> {
    FixedPointProblem {
        map,
        base: *params,
        free,
        fd_step: config.fd_step,
        bounds: config.bounds.clone(),
    }
}

fn fixed_point_entry<M: CoarseMap + ?Sized>(
    problem: &FixedPointProblem<'_, M>,
    u: &DVector<f64>,
    jac: &DMatrix<f64>,
) -> BranchPoint {
    let n = problem.dim();
    BranchPoint::new(
        vec![(problem.free, u[n])],
        u.rows(0, n).iter().copied().collect(),
        &j_from_block(jac, n),
        u,
    )
}

/// Traces the branch of coarse fixed points through `start` as `free`
/// varies, starting in the direction of `config.direction`.
pub fn continue_branch<M: CoarseMap + ?Sized>(
    map: &M,
    start: &CoarseFixedPoint,
    params: &ModelParams,
    free: Param,
    config: &ContinuationConfig,
) -> Result<Branch> {
    config.validate()?;
    if free == Param::Omega && params.amplitude == 0.0 {
        return Err(Error::UnsupportedRegime(
            "omega continuation without forcing: locked orbits are not isolated".into(),
        ));
    }
    let mut problem = fixed_point_problem(map, params, free, config);
    let n = problem.dim();
    let z = start.z.to_flat();
    if z.len() != n {
        return Err(Error::Dimension {
            what: "start point",
            expected: n,
            found: z.len(),
        });
    }
    let mut u = DVector::from_vec(z);
    u = u.push(free.get(params));
    let (u, jac) = palc::project_onto_curve(&problem, u, config)?;
    let mut monitor = FoldCounter {
        n,
        limit: config.stop_after_folds,
        count: 0,
        last: None,
    };
    let trace = palc::trace(&mut problem, Accepted { u, jac }, config, &mut monitor)?;
    if trace.points.len() == 1 {
        if let Termination::MinStepUnderflow { .. } = trace.termination {
            return Err(Error::CannotStart("corrector failed on the first step".into()));
        }
    }
    let points = trace
        .points
        .iter()
        .map(|a| fixed_point_entry(&problem, &a.u, &a.jac))
        .collect();
    Ok(Branch {
        free: vec![free],
        points,
        termination: trace.termination,
    })
}

/// Illinois refinement of a sign change of `test` between two points of a
/// curve of `problem`. Intermediate points are corrected on hyperplanes
/// orthogonal to the chord from `a` to `b`.
fn refine_on_chord<P, T>(
    problem: &P,
    a: &DVector<f64>,
    b: &DVector<f64>,
    config: &ContinuationConfig,
    tol: f64,
    test: T,
) -> Result<(DVector<f64>, DMatrix<f64>)>
where
    P: Problem + ?Sized,
    T: Fn(&DVector<f64>, &DMatrix<f64>) -> Result<f64>,
{
    let chord = b - a;
    let length = chord.norm();
    let dir = &chord / length;
    let jac_a = problem.jacobian(a)?;
    let jac_b = problem.jacobian(b)?;
    let (mut sa, mut fa) = (0.0, test(a, &jac_a)?);
    let (mut sb, mut fb) = (1.0, test(b, &jac_b)?);
    let mut best = if fa.abs() < fb.abs() {
        (a.clone(), jac_a.clone(), fa)
    } else {
        (b.clone(), jac_b, fb)
    };
    let mut side = 0i8;
    for _ in 0..60 {
        if best.2.abs() < tol || (sb - sa) < 1e-13 {
            break;
        }
        let s = (sa * fb - sb * fa) / (fb - fa);
        let guess = a + &chord * s;
        let c = palc::correct(problem, guess, a, &dir, s * length, &jac_a, config)?;
        let jac = problem.jacobian(&c.u)?;
        let f = test(&c.u, &jac)?;
        if f.abs() < best.2.abs() {
            best = (c.u.clone(), jac, f);
        }
        if f * fa > 0.0 {
            sa = s;
            fa = f;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            sb = s;
            fb = f;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok((best.0, best.1))
}

fn pair_on_branch<'b>(branch: &'b Branch, index: usize) -> Result<(&'b BranchPoint, &'b BranchPoint)> {
    match (branch.points.get(index), branch.points.get(index + 1)) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::InvalidParameter(format!("no branch segment at index {index}"))),
    }
}

/// Refines the fold between points `index` and `index + 1` of a
/// one-parameter branch.
pub fn detect_fold<M: CoarseMap + ?Sized>(
    map: &M,
    params: &ModelParams,
    branch: &Branch,
    index: usize,
    config: &ContinuationConfig,
) -> Result<BranchPoint> {
    let (a, b) = pair_on_branch(branch, index)?;
    if !(a.fold_test * b.fold_test < 0.0) || branch.free.len() != 1 {
        return Err(Error::NotAFold);
    }
    let problem = fixed_point_problem(map, params, branch.free[0], config);
    let n = problem.dim();
    let (u, jac) = refine_on_chord(
        &problem,
        &DVector::from_column_slice(&a.unknowns),
        &DVector::from_column_slice(&b.unknowns),
        config,
        config.fold_tol,
        |_, jac| Ok(jac.view((0, 0), (n, n)).clone_owned().determinant()),
    )?;
    Ok(fixed_point_entry(&problem, &u, &jac))
}

/// Refines the Neimark-Sacker point between points `index` and `index + 1`.
pub fn detect_hopf<M: CoarseMap + ?Sized>(
    map: &M,
    params: &ModelParams,
    branch: &Branch,
    index: usize,
    config: &ContinuationConfig,
) -> Result<BranchPoint> {
    let (a, b) = pair_on_branch(branch, index)?;
    let signs = a.hopf_test.zip(b.hopf_test).map(|(x, y)| x * y < 0.0);
    if signs != Some(true) || branch.free.len() != 1 {
        return Err(Error::NotAHopf);
    }
    let problem = fixed_point_problem(map, params, branch.free[0], config);
    let n = problem.dim();
    let (u, jac) = refine_on_chord(
        &problem,
        &DVector::from_column_slice(&a.unknowns),
        &DVector::from_column_slice(&b.unknowns),
        config,
        config.hopf_tol,
        |_, jac| {
            let ev = eigenvalues(&j_from_block(jac, n));
            hopf_test(&ev).ok_or_else(|| {
                let theta = ev
                    .iter()
                    .min_by(|x, y| (x.norm() - 1.0).abs().total_cmp(&(y.norm() - 1.0).abs()))
                    .map_or(0.0, |l| l.arg());
                Error::ResonanceAmbiguity { theta }
            })
        },
    )?;
    let mut point = fixed_point_entry(&problem, &u, &jac);
    point.theta = point.critical_pair().map(|l| l.arg());
    Ok(point)
}

/// Refines every fold bracketed on `branch`.
pub fn locate_folds<M: CoarseMap + ?Sized>(
    map: &M,
    params: &ModelParams,
    branch: &Branch,
    config: &ContinuationConfig,
) -> Result<Vec<BranchPoint>> {
    branch
        .fold_brackets()
        .into_iter()
        .map(|i| detect_fold(map, params, branch, i, config))
        .collect()
}

/// Right singular vector of the smallest singular value.
fn smallest_singular_vector(m: DMatrix<f64>) -> DVector<f64> {
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    vt.row(k).transpose().normalize()
}

fn curve_termination(t: Termination, last_theta: Option<f64>) -> Termination {
    match t {
        Termination::MinStepUnderflow { step } => match last_theta {
            Some(th) if th < RESONANCE_MARGIN || th > std::f64::consts::PI - RESONANCE_MARGIN => {
                Termination::Resonance { theta: th }
            }
            _ => Termination::NumericalFailure {
                reason: format!("corrector failed down to step {step:e}"),
            },
        },
        other => other,
    }
}

/// Distance of the Hopf angle from `0` or `pi` within which a corrector
/// breakdown is attributed to the strong resonance.
const RESONANCE_MARGIN: f64 = 0.05;

/// Continues a refined fold in the two parameters `free`.
///
/// With a `policy`, repeated corrector failure at a point where the probe
/// reports a desynchronized fraction at or above the threshold ends the
/// curve with a physics-breakdown record. Failure without desync is
/// recorded as a numerical failure.
pub fn continue_fold_curve<M: CoarseMap + ?Sized>(
    map: &M,
    fold: &BranchPoint,
    params: &ModelParams,
    free: (Param, Param),
    config: &ContinuationConfig,
    policy: Option<&BreakdownPolicy<'_>>,
) -> Result<Branch> {
    config.validate()?;
    let base = fold.apply_to(params);
    let n = map.dim();
    if fold.z.len() != n {
        return Err(Error::Dimension {
            what: "fold point",
            expected: n,
            found: fold.z.len(),
        });
    }
    let j = crate::coarse_map::coarse_jacobian(map, &fold.z, &base, config.fd_step)?;
    let mut v = smallest_singular_vector(j - DMatrix::identity(n, n));
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v = -v;
    }
    let mut u = DVector::zeros(2 * n + 2);
    u.rows_mut(0, n).copy_from_slice(&fold.z);
    u.rows_mut(n, n).copy_from(&v);
    u[2 * n] = free.0.get(&base);
    u[2 * n + 1] = free.1.get(&base);

    let mut problem = FoldProblem {
        map,
        base,
        free,
        fd_step: config.fd_step,
        outer_step: config.outer_fd_step,
        bounds: config.bounds.clone(),
    };
    let (u, jac) = palc::project_onto_curve(&problem, u, config)?;
    let mut monitor = BreakdownMonitor {
        policy,
        params_of: |u: &DVector<f64>| problem_params(&base, free, u[2 * n], u[2 * n + 1]),
        free,
        checked: None,
    };
    let trace = palc::trace(&mut problem, Accepted { u, jac }, config, &mut monitor)?;
    let points = trace
        .points
        .iter()
        .map(|a| {
            BranchPoint::new(
                problem.assignments(&a.u).to_vec(),
                a.u.rows(0, n).iter().copied().collect(),
                &j_from_block(&a.jac, n),
                &a.u,
            )
        })
        .collect();
    Ok(Branch {
        free: vec![free.0, free.1],
        points,
        termination: curve_termination(trace.termination, None),
    })
}

fn problem_params(base: &ModelParams, free: (Param, Param), p1: f64, p2: f64) -> ModelParams {
    let mut p = *base;
    free.0.set(&mut p, p1);
    free.1.set(&mut p, p2);
    p
}

/// Continues a refined Neimark-Sacker point in the two parameters `free`,
/// recording the angle `theta` of the critical pair at every point. The
/// curve ends with a resonance record when `theta` leaves `(0, pi)`.
pub fn continue_hopf_curve<M: CoarseMap + ?Sized>(
    map: &M,
    hopf: &BranchPoint,
    params: &ModelParams,
    free: (Param, Param),
    config: &ContinuationConfig,
    policy: Option<&BreakdownPolicy<'_>>,
) -> Result<Branch> {
    config.validate()?;
    let base = hopf.apply_to(params);
    let n = map.dim();
    if hopf.z.len() != n {
        return Err(Error::Dimension {
            what: "Hopf point",
            expected: n,
            found: hopf.z.len(),
        });
    }
    let j = crate::coarse_map::coarse_jacobian(map, &hopf.z, &base, config.fd_step)?;
    let lambda = eigenvalues(&j)
        .into_iter()
        .filter(|l| l.im > COMPLEX_IM_TOL)
        .min_by(|a, b| (a.norm() - 1.0).abs().total_cmp(&(b.norm() - 1.0).abs()))
        .ok_or(Error::NotAHopf)?;
    let theta = lambda.arg();
    // real form of (J - e^{i theta}) w = 0 with w = wr + i wi
    let (c, s) = (theta.cos(), theta.sin());
    let eye = DMatrix::<f64>::identity(n, n);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&j - &eye * c));
    m.view_mut((0, n), (n, n)).copy_from(&(&eye * s));
    m.view_mut((n, 0), (n, n)).copy_from(&(&eye * -s));
    m.view_mut((n, n), (n, n)).copy_from(&(&j - &eye * c));
    let w = smallest_singular_vector(m);

    let mut u = DVector::zeros(3 * n + 3);
    u.rows_mut(0, n).copy_from_slice(&hopf.z);
    u.rows_mut(n, 2 * n).copy_from(&w);
    u[3 * n] = theta;
    u[3 * n + 1] = free.0.get(&base);
    u[3 * n + 2] = free.1.get(&base);

    let mut problem = HopfProblem {
        map,
        base,
        free,
        fd_step: config.fd_step,
        outer_step: config.outer_fd_step,
        bounds: config.bounds.clone(),
        reference: (w.rows(0, n).iter().copied().collect(), w.rows(n, n).iter().copied().collect()),
    };
    let (u, jac) = palc::project_onto_curve(&problem, u, config)?;
    let k = 3 * n;
    let mut monitor = BreakdownMonitor {
        policy,
        params_of: |u: &DVector<f64>| problem_params(&base, free, u[k + 1], u[k + 2]),
        free,
        checked: None,
    };
    let trace = palc::trace(&mut problem, Accepted { u, jac }, config, &mut monitor)?;
    let points: Vec<BranchPoint> = trace
        .points
        .iter()
        .map(|a| {
            let mut p = BranchPoint::new(
                problem.assignments(&a.u).to_vec(),
                a.u.rows(0, n).iter().copied().collect(),
                &j_from_block(&a.jac, n),
                &a.u,
            );
            p.theta = Some(a.u[k]);
            p
        })
        .collect();
    let last_theta = points.last().and_then(|p| p.theta);
    Ok(Branch {
        free: vec![free.0, free.1],
        points,
        termination: curve_termination(trace.termination, last_theta),
    })
}

/// Runs `run` in both directions from the same start and joins the two
/// halves into one curve ordered by the forward direction. The returned
/// terminations are `(backward end, forward end)`.
pub fn both_directions(
    config: &ContinuationConfig,
    mut run: impl FnMut(&ContinuationConfig) -> Result<Branch>,
) -> Result<(Branch, Termination, Termination)> {
    let fwd = run(&config.with_direction(Direction::Forward))?;
    let bwd = run(&config.with_direction(Direction::Backward))?;
    let mut points: Vec<BranchPoint> = bwd.points.iter().skip(1).rev().cloned().collect();
    points.extend(fwd.points.iter().cloned());
    let joined = Branch {
        free: fwd.free.clone(),
        points,
        termination: fwd.termination.clone(),
    };
    Ok((joined, bwd.termination, fwd.termination))
}
