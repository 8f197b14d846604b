//! The periodically forced, globally coupled network of modified van der
//! Pol oscillators and its fixed-step integrator.
//!
//! Oscillator `i` obeys
//!
//! ```text
//! dx_i/dt = y_i - x_i [x_i^2/3 - (phi + beta mu_i)] + x_i^2/2 - eps (x_i - mean(x))
//! dy_i/dt = -x_i + A sin(omega t)
//! ```
//!
//! The all-to-all coupling `eps/N sum_j (x_i - x_j)` is evaluated through the
//! network mean, which is algebraically the same and costs O(N).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal;

/// Default integration step.
pub const DEFAULT_DT: f64 = 0.005;
/// Any state component exceeding this magnitude aborts integration.
pub const DEFAULT_GUARD: f64 = 1.0e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T = f64> {
    pub phi: T,
    pub beta: T,
    pub epsilon: T,
    pub amplitude: T,
    pub omega: T,
    pub n_osc: usize,
}

impl<T: Scalar> ModelParams<T> {
    /// The locked reference configuration used throughout: `phi = 1`,
    /// `eps = 1`, `A = 0.5`, `omega = 0.85`, `N = 500`, homogeneous.
    pub fn reference() -> Self {
        Self {
            phi: T::one(),
            beta: T::zero(),
            epsilon: T::one(),
            amplitude: T::lit(0.5),
            omega: T::lit(0.85),
            n_osc: 500,
        }
    }

    /// An isolated, unforced oscillator.
    pub fn isolated(phi: T) -> Self {
        Self {
            phi,
            beta: T::zero(),
            epsilon: T::zero(),
            amplitude: T::zero(),
            omega: T::one(),
            n_osc: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_osc == 0 {
            return Err(Error::InvalidParameter("n_osc must be at least 1".into()));
        }
        for (name, v) in [
            ("phi", self.phi),
            ("beta", self.beta),
            ("epsilon", self.epsilon),
            ("amplitude", self.amplitude),
            ("omega", self.omega),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        if self.epsilon < T::zero() {
            return Err(Error::InvalidParameter("epsilon must be non-negative".into()));
        }
        if self.amplitude < T::zero() {
            return Err(Error::InvalidParameter("amplitude must be non-negative".into()));
        }
        Ok(())
    }

    /// One forcing period `2 pi / omega`.
    pub fn forcing_period(&self) -> Result<T> {
        if !(self.omega > T::zero()) {
            return Err(Error::InvalidParameter(
                "omega must be positive for forcing-period operations".into(),
            ));
        }
        Ok(T::TAU() / self.omega)
    }
}

/// One draw of the per-oscillator heterogeneity `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heterogeneity<T = f64> {
    mu: Vec<T>,
    seed: Option<u64>,
}

impl<T: Scalar> Heterogeneity<T> {
    /// `n` i.i.d. standard normal values from a ChaCha8 stream seeded with `seed`.
    pub fn standard_normal(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                T::lit(v)
            })
            .collect();
        Self {
            mu,
            seed: Some(seed),
        }
    }

    pub fn from_values(mu: Vec<T>) -> Self {
        Self { mu, seed: None }
    }

    /// All `mu_i = 0`; used for single oscillators and homogeneous networks.
    pub fn homogeneous(n: usize) -> Self {
        Self {
            mu: vec![T::zero(); n],
            seed: None,
        }
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Microscopic network state `(x_1..x_N, y_1..y_N)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<T = f64> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub t: T,
}

impl<T: Scalar> NetworkState<T> {
    /// Every oscillator at the same point `(x, y)`.
    pub fn uniform(n: usize, x: T, y: T, t: T) -> Self {
        Self {
            x: vec![x; n],
            y: vec![y; n],
            t,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    /// Largest absolute difference over all components.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.y.iter().zip(&other.y))
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    fn check(&self, params: &ModelParams<T>, het: &Heterogeneity<T>) -> Result<()> {
        if self.y.len() != self.x.len() {
            return Err(Error::Dimension {
                what: "state y",
                expected: self.x.len(),
                found: self.y.len(),
            });
        }
        if self.x.len() != params.n_osc {
            return Err(Error::Dimension {
                what: "state",
                expected: params.n_osc,
                found: self.x.len(),
            });
        }
        if het.len() != params.n_osc {
            return Err(Error::Dimension {
                what: "heterogeneity",
                expected: params.n_osc,
                found: het.len(),
            });
        }
        if !self.is_finite() {
            return Err(Error::NonFinite { what: "network state" });
        }
        Ok(())
    }
}

#[inline]
fn eval_field<T: Scalar>(
    x: &[T],
    y: &[T],
    t: T,
    excitability: &[T],
    params: &ModelParams<T>,
    dx: &mut [T],
    dy: &mut [T],
) {
    let n = T::from_usize_lossy(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    let drive = params.amplitude * (params.omega * t).sin();
    let eps = params.epsilon;
    let third = T::lit(1.0 / 3.0);
    let half = T::lit(0.5);
    for i in 0..x.len() {
        let xi = x[i];
        let sq = xi * xi;
        dx[i] = y[i] - xi * (sq * third - excitability[i]) + sq * half - eps * (xi - mean);
        dy[i] = drive - xi;
    }
}

fn excitability<T: Scalar>(params: &ModelParams<T>, het: &Heterogeneity<T>) -> Vec<T> {
    het.mu()
        .iter()
        .map(|&m| params.phi + params.beta * m)
        .collect()
}

/// Time derivative `(dx/dt, dy/dt)` of the network at `state`.
pub fn rhs<T: Scalar>(
    state: &NetworkState<T>,
    params: &ModelParams<T>,
    het: &Heterogeneity<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    params.validate()?;
    state.check(params, het)?;
    let n = state.len();
    let g = excitability(params, het);
    let mut dx = vec![T::zero(); n];
    let mut dy = vec![T::zero(); n];
    eval_field(&state.x, &state.y, state.t, &g, params, &mut dx, &mut dy);
    Ok((dx, dy))
}

/// Classical fourth-order Runge-Kutta with a fixed step and reusable buffers.
#[derive(Debug, Clone)]
pub struct Integrator<T = f64> {
    dt: T,
    guard: T,
    excitability: Vec<T>,
    k: [Vec<T>; 8],
    tx: Vec<T>,
    ty: Vec<T>,
}

impl<T: Scalar> Integrator<T> {
    pub fn new(dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        Ok(Self {
            dt,
            guard: T::lit(DEFAULT_GUARD),
            excitability: Vec::new(),
            k: Default::default(),
            tx: Vec::new(),
            ty: Vec::new(),
        })
    }

    pub fn with_guard(mut self, guard: T) -> Self {
        self.guard = guard;
        self
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    fn prepare(
        &mut self,
        state: &NetworkState<T>,
        params: &ModelParams<T>,
        het: &Heterogeneity<T>,
    ) -> Result<()> {
        params.validate()?;
        state.check(params, het)?;
        let n = state.len();
        self.excitability = excitability(params, het);
        for buf in self.k.iter_mut().chain([&mut self.tx, &mut self.ty]) {
            buf.clear();
            buf.resize(n, T::zero());
        }
        Ok(())
    }

    fn step(&mut self, state: &mut NetworkState<T>, params: &ModelParams<T>, h: T) -> Result<()> {
        let half = h * T::lit(0.5);
        let t = state.t;
        let g = &self.excitability;
        let [k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y] = &mut self.k;
        let (tx, ty) = (&mut self.tx, &mut self.ty);
        let n = state.x.len();

        eval_field(&state.x, &state.y, t, g, params, k1x, k1y);
        for i in 0..n {
            tx[i] = state.x[i] + half * k1x[i];
            ty[i] = state.y[i] + half * k1y[i];
        }
        eval_field(tx, ty, t + half, g, params, k2x, k2y);
        for i in 0..n {
            tx[i] = state.x[i] + half * k2x[i];
            ty[i] = state.y[i] + half * k2y[i];
        }
        eval_field(tx, ty, t + half, g, params, k3x, k3y);
        for i in 0..n {
            tx[i] = state.x[i] + h * k3x[i];
            ty[i] = state.y[i] + h * k3y[i];
        }
        eval_field(tx, ty, t + h, g, params, k4x, k4y);

        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);
        let mut blown = false;
        for i in 0..n {
            let x = state.x[i] + sixth * (k1x[i] + two * (k2x[i] + k3x[i]) + k4x[i]);
            let y = state.y[i] + sixth * (k1y[i] + two * (k2y[i] + k3y[i]) + k4y[i]);
            state.x[i] = x;
            state.y[i] = y;
            // NaN fails both comparisons
            blown |= !(x.abs() <= self.guard && y.abs() <= self.guard);
        }
        state.t = t + h;
        if blown {
            return Err(Error::Divergence {
                time: state.t.as_f64(),
            });
        }
        Ok(())
    }

    /// Takes `n_steps` steps of size `dt`, calling `observer` after each.
    pub fn advance_steps<F>(
        &mut self,
        state: &mut NetworkState<T>,
        params: &ModelParams<T>,
        het: &Heterogeneity<T>,
        n_steps: usize,
        mut observer: F,
    ) -> Result<()>
    where
        F: FnMut(&NetworkState<T>),
    {
        self.prepare(state, params, het)?;
        for _ in 0..n_steps {
            self.step(state, params, self.dt)?;
            observer(state);
        }
        Ok(())
    }

    /// Advances by `duration`. Whole steps of `dt` are taken first; a
    /// remainder longer than `1e-9 dt` is covered by one shortened step so
    /// the state lands exactly on `t + duration`.
    pub fn advance(
        &mut self,
        state: &mut NetworkState<T>,
        params: &ModelParams<T>,
        het: &Heterogeneity<T>,
        duration: T,
    ) -> Result<()> {
        if !(duration >= T::zero()) || !duration.is_finite() {
            return Err(Error::InvalidParameter("duration must be non-negative".into()));
        }
        self.prepare(state, params, het)?;
        let t_end = state.t + duration;
        let (n_full, rem) = split_duration(duration, self.dt);
        for _ in 0..n_full {
            self.step(state, params, self.dt)?;
        }
        if rem > T::zero() {
            self.step(state, params, rem)?;
        }
        state.t = t_end;
        Ok(())
    }
}

/// Splits `duration` into whole steps and a trailing remainder (zero when
/// the remainder is below `1e-9 dt`).
pub(crate) fn split_duration<T: Scalar>(duration: T, dt: T) -> (usize, T) {
    let ratio = duration / dt;
    let mut n = ratio.floor();
    // snap to the nearest integer when within round-off of it
    if (ratio - ratio.round()).abs() < T::lit(1e-9) {
        n = ratio.round();
    }
    let rem = duration - n * dt;
    let n_full = n.to_usize().unwrap_or(0);
    if rem <= dt * T::lit(1e-9) {
        (n_full, T::zero())
    } else {
        (n_full, rem)
    }
}

/// Advances a copy of `state` by `duration` with step `dt`.
pub fn integrate<T: Scalar>(
    state: &NetworkState<T>,
    params: &ModelParams<T>,
    het: &Heterogeneity<T>,
    duration: T,
    dt: T,
) -> Result<NetworkState<T>> {
    let mut out = state.clone();
    Integrator::new(dt)?.advance(&mut out, params, het, duration)?;
    Ok(out)
}

/// The full stroboscopic map: integrates over exactly one forcing period.
pub fn strobe_full<T: Scalar>(
    state: &NetworkState<T>,
    params: &ModelParams<T>,
    het: &Heterogeneity<T>,
    dt: T,
) -> Result<NetworkState<T>> {
    let period = params.forcing_period()?;
    integrate(state, params, het, period, dt)
}

/// Outcome of an oscillation-frequency measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oscillation<T = f64> {
    Oscillating { angular_frequency: T, amplitude: T },
    /// The trajectory relaxed onto a fixed point (fixed-point side of the
    /// Hopf bifurcation).
    Quiescent,
}

impl<T: Scalar> Oscillation<T> {
    pub fn angular_frequency(&self) -> Option<T> {
        match self {
            Oscillation::Oscillating {
                angular_frequency, ..
            } => Some(*angular_frequency),
            Oscillation::Quiescent => None,
        }
    }
}

/// Settings shared by the frequency estimators.
#[derive(Debug, Clone, Copy)]
pub struct FrequencyProbe<T = f64> {
    pub settle_time: T,
    pub measure_time: T,
    pub dt: T,
    /// Peak-to-peak amplitude below which the signal counts as quiescent.
    pub amplitude_floor: T,
}

impl<T: Scalar> Default for FrequencyProbe<T> {
    fn default() -> Self {
        Self {
            settle_time: T::lit(500.0),
            measure_time: T::lit(200.0),
            dt: T::lit(DEFAULT_DT),
            amplitude_floor: T::lit(1e-6),
        }
    }
}

fn record_first_oscillator<T: Scalar>(
    params: &ModelParams<T>,
    het: &Heterogeneity<T>,
    probe: &FrequencyProbe<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    params.validate()?;
    if params.amplitude != T::zero() {
        return Err(Error::InvalidParameter(
            "frequency measurement requires an unforced network (A = 0)".into(),
        ));
    }
    let mut state = NetworkState::uniform(params.n_osc, T::one(), T::zero(), T::zero());
    let mut integ = Integrator::new(probe.dt)?;
    integ.advance(&mut state, params, het, probe.settle_time)?;
    let (n_steps, _) = split_duration(probe.measure_time, probe.dt);
    let mut ts = Vec::with_capacity(n_steps + 1);
    let mut xs = Vec::with_capacity(n_steps + 1);
    ts.push(state.t);
    xs.push(state.x[0]);
    integ.advance_steps(&mut state, params, het, n_steps, |s| {
        ts.push(s.t);
        xs.push(s.x[0]);
    })?;
    Ok((ts, xs))
}

fn classify_signal<T: Scalar>(xs: &[T], floor: T) -> Option<T> {
    let (lo, hi) = xs
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let amplitude = hi - lo;
    if !(amplitude > floor) {
        return None;
    }
    // a decaying transient is not a sustained oscillation
    let q = xs.len() / 4;
    if q > 2 {
        let span = |s: &[T]| {
            let (lo, hi) = s.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            hi - lo
        };
        if span(&xs[xs.len() - q..]) < T::lit(0.5) * span(&xs[..q]) {
            return None;
        }
    }
    Some(amplitude)
}

/// Angular frequency of oscillator 1 from interpolated upward crossings of
/// its mean-removed signal: `2 pi (crossings - 1) / (t_last - t_first)`.
pub fn measure_angular_frequency<T: Scalar>(
    params: &ModelParams<T>,
    het: &Heterogeneity<T>,
    probe: &FrequencyProbe<T>,
) -> Result<Oscillation<T>> {
    let (ts, xs) = record_first_oscillator(params, het, probe)?;
    let Some(amplitude) = classify_signal(&xs, probe.amplitude_floor) else {
        return Ok(Oscillation::Quiescent);
    };
    let mean = xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len());
    let crossings = signal::upward_crossings(&ts, &xs, mean);
    Ok(frequency_from_events(&crossings)
        .map(|w| Oscillation::Oscillating {
            angular_frequency: w,
            amplitude,
        })
        .unwrap_or(Oscillation::Quiescent))
}

/// Same measurement from parabolically interpolated maxima of `x_1`.
pub fn measure_angular_frequency_peaks<T: Scalar>(
    params: &ModelParams<T>,
    het: &Heterogeneity<T>,
    probe: &FrequencyProbe<T>,
) -> Result<Oscillation<T>> {
    let (ts, xs) = record_first_oscillator(params, het, probe)?;
    let Some(amplitude) = classify_signal(&xs, probe.amplitude_floor) else {
        return Ok(Oscillation::Quiescent);
    };
    let peaks = signal::peak_times(&ts, &xs);
    Ok(frequency_from_events(&peaks)
        .map(|w| Oscillation::Oscillating {
            angular_frequency: w,
            amplitude,
        })
        .unwrap_or(Oscillation::Quiescent))
}

fn frequency_from_events<T: Scalar>(events: &[T]) -> Option<T> {
    if events.len() < 2 {
        return None;
    }
    let span = events[events.len() - 1] - events[0];
    Some(T::TAU() * T::from_usize_lossy(events.len() - 1) / span)
}
