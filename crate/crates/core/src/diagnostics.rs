//! Synchrony classification, phase-walkthrough periods and correlation
//! snapshots of the full network.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chaos::{ChaosBasis, ChaosCoeffs};
use crate::error::{Error, Result};
use crate::network::{Heterogeneity, Integrator, ModelParams, NetworkState, DEFAULT_DT};
use crate::signal::median;

/// Runs `periods` whole forcing periods, calling `per_step` after every
/// integrator step and `per_period` at every strobe. Strobe times are kept
/// exact multiples of the period.
fn run_periods(
    integ: &mut Integrator,
    state: &mut NetworkState,
    params: &ModelParams,
    het: &Heterogeneity,
    periods: usize,
    mut per_step: impl FnMut(&NetworkState),
    mut per_period: impl FnMut(&NetworkState),
) -> Result<()> {
    let period = params.forcing_period()?;
    let (n_full, rem) = crate::network::split_duration(period, integ.dt());
    let t0 = state.t;
    for k in 1..=periods {
        integ.advance_steps(state, params, het, n_full, &mut per_step)?;
        if rem > 0.0 {
            integ.advance(state, params, het, rem)?;
            per_step(state);
        }
        state.t = t0 + k as f64 * period;
        per_period(state);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncOptions {
    /// Forcing periods discarded before observing.
    pub settle_periods: usize,
    /// Forcing periods over which oscillations are counted.
    pub observe_periods: usize,
    /// Locking ratio `m:n`: locked oscillators complete `m` cycles per `n`
    /// forcing periods.
    pub ratio: (usize, usize),
    pub dt: f64,
    /// Oscillators whose peak-to-peak swing falls below this are quiescent.
    pub quiescence_swing: f64,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self {
            settle_periods: 50,
            observe_periods: 100,
            ratio: (1, 1),
            dt: DEFAULT_DT,
            quiescence_swing: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncReport {
    /// Size of the largest group of oscillators sharing a winding count.
    pub n_locked_cluster: usize,
    /// Oscillating members outside the cluster.
    pub desync_indices: Vec<usize>,
    /// Oscillators that settled onto a fixed point; neither in the cluster
    /// nor counted as desynchronized.
    pub quiescent_indices: Vec<usize>,
    /// `|desync_indices| / N`.
    pub desync_fraction: f64,
    pub cluster_locked_to_forcing: bool,
    /// Winding count shared by the cluster.
    pub modal_count: usize,
    /// Other counts attaining the same multiplicity as `modal_count`.
    pub modal_ties: Vec<usize>,
    /// Upward crossings of the mean-removed `x_i` over the window.
    pub per_oscillator_rotation: Vec<usize>,
    pub observe_periods: usize,
}

/// Integrates from the uniform state `(x, y) = (1, 0)`, settles, and
/// counts each oscillator's cycles over the observation window.
///
/// Cycles are upward crossings of `x_i` through its temporal mean (taken
/// over the last ten settle periods) with a hysteresis of a tenth of the
/// half-swing, so small ripples are not counted.
pub fn classify_synchrony(
    params: &ModelParams,
    het: &Heterogeneity,
    options: &SyncOptions,
) -> Result<SyncReport> {
    let start = NetworkState::uniform(het.len(), 1.0, 0.0, 0.0);
    classify_synchrony_from(params, het, start, options)
}

pub fn classify_synchrony_from(
    params: &ModelParams,
    het: &Heterogeneity,
    start: NetworkState,
    options: &SyncOptions,
) -> Result<SyncReport> {
    if options.observe_periods < 20 {
        return Err(Error::InvalidParameter(
            "observe_periods must be at least 20 to resolve winding differences".into(),
        ));
    }
    let (m, n_ratio) = options.ratio;
    if m == 0 || n_ratio == 0 {
        return Err(Error::InvalidParameter("locking ratio must be positive".into()));
    }
    let n = het.len();
    let mut integ = Integrator::new(options.dt)?;
    let mut state = start;
    let tail = options.settle_periods.min(10);
    run_periods(
        &mut integ,
        &mut state,
        params,
        het,
        options.settle_periods - tail,
        |_| {},
        |_| {},
    )?;

    let mut sum = vec![0.0; n];
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut samples = 0usize;
    run_periods(
        &mut integ,
        &mut state,
        params,
        het,
        tail.max(1),
        |s| {
            for i in 0..n {
                sum[i] += s.x[i];
                lo[i] = lo[i].min(s.x[i]);
                hi[i] = hi[i].max(s.x[i]);
            }
            samples += 1;
        },
        |_| {},
    )?;
    let mean: Vec<f64> = sum.iter().map(|s| s / samples as f64).collect();
    let band: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.05 * (h - l)).collect();

    let mut counts = vec![0usize; n];
    // +1 above the upper threshold, -1 below the lower one
    let mut side: Vec<i8> = (0..n)
        .map(|i| if state.x[i] >= mean[i] { 1 } else { -1 })
        .collect();
    run_periods(
        &mut integ,
        &mut state,
        params,
        het,
        options.observe_periods,
        |s| {
            for i in 0..n {
                let d = s.x[i] - mean[i];
                if side[i] < 0 && d > band[i] {
                    side[i] = 1;
                    counts[i] += 1;
                } else if side[i] > 0 && d < -band[i] {
                    side[i] = -1;
                }
            }
        },
        |_| {},
    )?;

    let quiescent: Vec<usize> = (0..n)
        .filter(|&i| counts[i] == 0 || hi[i] - lo[i] < options.quiescence_swing)
        .collect();
    let active: Vec<usize> = (0..n).filter(|i| !quiescent.contains(i)).collect();
    let mut freq = std::collections::BTreeMap::<usize, usize>::new();
    for &i in &active {
        *freq.entry(counts[i]).or_default() += 1;
    }
    let expected = options.observe_periods * m / n_ratio;
    let best = freq.values().copied().max().unwrap_or(0);
    let mut modes: Vec<usize> = freq.iter().filter(|(_, &c)| c == best).map(|(&k, _)| k).collect();
    // deterministic choice among ties: the count nearest the forcing
    modes.sort_by_key(|&k| (k as i64 - expected as i64).abs());
    let modal_count = modes.first().copied().unwrap_or(0);
    let modal_ties = modes.iter().skip(1).copied().collect();
    let desync_indices: Vec<usize> = active.iter().copied().filter(|&i| counts[i] != modal_count).collect();
    Ok(SyncReport {
        n_locked_cluster: active.len() - desync_indices.len(),
        desync_fraction: desync_indices.len() as f64 / n as f64,
        desync_indices,
        quiescent_indices: quiescent,
        cluster_locked_to_forcing: best > 0 && modal_count * n_ratio == options.observe_periods * m,
        modal_count,
        modal_ties,
        per_oscillator_rotation: counts,
        observe_periods: options.observe_periods,
    })
}

/// Median desynchronized fraction over `hets` as a function of the
/// parameters; suitable as a continuation breakdown probe. The median keeps
/// one realization that splits into two clusters from dominating.
pub fn desync_probe<'a>(
    hets: &'a [Heterogeneity],
    options: SyncOptions,
) -> impl Fn(&ModelParams) -> Result<f64> + Sync + 'a {
    move |params: &ModelParams| {
        let fr = hets
            .par_iter()
            .map(|h| classify_synchrony(params, h, &options).map(|r| r.desync_fraction))
            .collect::<Result<Vec<f64>>>()?;
        Ok(median(&fr))
    }
}

/// `x_i` at every strobe for every oscillator after settling: rows are
/// strobes, columns oscillators.
pub fn strobe_raster(
    params: &ModelParams,
    het: &Heterogeneity,
    settle_periods: usize,
    periods: usize,
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut integ = Integrator::new(dt)?;
    let mut state = NetworkState::uniform(het.len(), 1.0, 0.0, 0.0);
    run_periods(&mut integ, &mut state, params, het, settle_periods, |_| {}, |_| {})?;
    let mut rows = Vec::with_capacity(periods);
    run_periods(&mut integ, &mut state, params, het, periods, |_| {}, |s| rows.push(s.x.clone()))?;
    Ok(rows)
}

/// Restrictions of the network state at `periods` successive strobes,
/// starting from `z0` lifted onto `basis`.
pub fn strobed_coarse_orbit(
    params: &ModelParams,
    basis: &ChaosBasis,
    z0: &ChaosCoeffs,
    periods: usize,
    dt: f64,
) -> Result<Vec<ChaosCoeffs>> {
    let mut integ = Integrator::new(dt)?;
    let mut state = basis.lift(z0, 0.0)?;
    let het = basis.heterogeneity().clone();
    let mut out = Vec::with_capacity(periods);
    let mut err = None;
    run_periods(&mut integ, &mut state, params, &het, periods, |_| {}, |s| {
        match basis.restrict(s) {
            Ok(z) => out.push(z),
            Err(e) => err = Some(e),
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkthroughOptions {
    pub settle_periods: usize,
    /// Forcing periods observed per frequency.
    pub budget_periods: usize,
    /// Complete turns needed before a period is reported.
    pub min_turns: usize,
    pub dt: f64,
}

impl Default for WalkthroughOptions {
    fn default() -> Self {
        Self {
            settle_periods: 50,
            budget_periods: 3000,
            min_turns: 3,
            dt: DEFAULT_DT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkthroughEstimate {
    pub omega: f64,
    /// Time for the strobed coarse state to go once around its invariant
    /// circle; `None` when the budget held fewer than `min_turns` turns.
    pub period: Option<f64>,
    /// Signed number of turns over the budget.
    pub winding: f64,
    pub exceeded_budget: bool,
}

/// Signed number of turns the planar points make around the centre of
/// their bounding box. The centroid would not do: near a fold the points
/// crowd into the bottleneck and drag it onto the circle. Each step is
/// taken as the shorter rotation, so the strobe must sample the circle
/// finely enough to advance by less than half a turn. Points that come
/// closer to the centre than 5% of their largest distance do not trace a
/// circle around it (a spiral settling onto a fixed point, for example)
/// and count as zero turns.
pub fn winding_number(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    let (cx, cy) = (span(|p| p.0), span(|p| p.1));
    let dist: Vec<f64> = points.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).collect();
    let far = dist.iter().cloned().fold(0.0, f64::max);
    if !(dist.iter().cloned().fold(f64::INFINITY, f64::min) > 0.05 * far) {
        return 0.0;
    }
    let angle = |p: &(f64, f64)| (p.1 - cy).atan2(p.0 - cx);
    let mut total = 0.0;
    let mut prev = angle(&points[0]);
    for p in &points[1..] {
        let a = angle(p);
        let mut d = a - prev;
        if d > PI {
            d -= TAU;
        } else if d < -PI {
            d += TAU;
        }
        total += d;
        prev = a;
    }
    total / TAU
}

/// Phase-walkthrough period for each frequency in `omega_values`: outside
/// the tongue the strobed `(a_0, b_0)` circulates on an invariant circle,
/// and the period is the budget divided by the number of turns.
/// `omega_star` is only checked: every value must lie strictly on one side
/// of it.
pub fn walkthrough_period(
    params: &ModelParams,
    het: &Heterogeneity,
    omega_star: f64,
    omega_values: &[f64],
    options: &WalkthroughOptions,
) -> Result<Vec<WalkthroughEstimate>> {
    let above = omega_values.iter().all(|&w| w > omega_star);
    let below = omega_values.iter().all(|&w| w < omega_star);
    if !(above || below) {
        return Err(Error::InvalidParameter(
            "walkthrough frequencies must all lie on one side of the fold".into(),
        ));
    }
    if options.min_turns == 0 {
        return Err(Error::InvalidParameter("min_turns must be positive".into()));
    }
    let q = if het.mu().windows(2).any(|w| w[0] != w[1]) { 1 } else { 0 };
    let basis = ChaosBasis::new(het.clone(), q)?;
    omega_values
        .par_iter()
        .map(|&omega| {
            let p = ModelParams { omega, ..*params };
            let mut integ = Integrator::new(options.dt)?;
            let mut state = NetworkState::uniform(het.len(), 1.0, 0.0, 0.0);
            run_periods(&mut integ, &mut state, &p, het, options.settle_periods, |_| {}, |_| {})?;
            let mut strobed = Vec::with_capacity(options.budget_periods + 1);
            strobed.push(basis.restrict(&state)?);
            let mut err = None;
            run_periods(&mut integ, &mut state, &p, het, options.budget_periods, |_| {}, |s| {
                match basis.restrict(s) {
                    Ok(z) => strobed.push(z),
                    Err(e) => err = Some(e),
                }
            })?;
            if let Some(e) = err {
                return Err(e);
            }
            let pts: Vec<(f64, f64)> = strobed.iter().map(|z| (z.a[0], z.b[0])).collect();
            let winding = winding_number(&pts);
            let period = if winding.abs() >= options.min_turns as f64 {
                Some(options.budget_periods as f64 * p.forcing_period()? / winding.abs())
            } else {
                None
            };
            Ok(WalkthroughEstimate {
                omega,
                exceeded_budget: period.is_none(),
                period,
                winding,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Standard deviation over mean.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    var.sqrt() / m.abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub mu: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub fit: ChaosCoeffs,
    /// Normalized fit residuals of `x` and `y`.
    pub residual: (f64, f64),
}

/// Integrates from initial conditions drawn uniformly from `[-2, 2]^2`
/// (seeded) and fits the order-`q` expansion at each requested time.
pub fn correlation_snapshot(
    params: &ModelParams,
    het: &Heterogeneity,
    q: usize,
    times: &[f64],
    seed: u64,
    dt: f64,
) -> Result<Vec<Snapshot>> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidParameter("snapshot times must be sorted and non-negative".into()));
    }
    let n = het.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = NetworkState {
        x: (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect(),
        y: (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect(),
        t: 0.0,
    };
    let basis = ChaosBasis::new(het.clone(), q)?;
    let mut integ = Integrator::new(dt)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let gap = t - state.t;
        integ.advance(&mut state, params, het, gap)?;
        state.t = t;
        out.push(Snapshot {
            t,
            mu: het.mu().to_vec(),
            x: state.x.clone(),
            y: state.y.clone(),
            fit: basis.restrict(&state)?,
            residual: basis.fit_residual(&state)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(beta: f64, omega: f64, n: usize) -> ModelParams {
        ModelParams {
            beta,
            omega,
            n_osc: n,
            ..ModelParams::reference()
        }
    }

    #[test]
    fn identical_oscillators_inside_the_tongue_are_one_locked_cluster() {
        let p = small(0.0, 0.85, 8);
        let opts = SyncOptions {
            settle_periods: 30,
            observe_periods: 20,
            ..Default::default()
        };
        let r = classify_synchrony(&p, &Heterogeneity::homogeneous(8), &opts).unwrap();
        assert_eq!(r.desync_fraction, 0.0);
        assert_eq!(r.n_locked_cluster, 8);
        assert!(r.cluster_locked_to_forcing);
        assert_eq!(r.modal_count, 20);
    }

    #[test]
    fn unforced_detuned_oscillators_are_not_locked_to_forcing() {
        let mut p = small(0.0, 0.5, 4);
        p.amplitude = 0.0;
        p.epsilon = 0.0;
        let opts = SyncOptions {
            settle_periods: 10,
            observe_periods: 40,
            ..Default::default()
        };
        let r = classify_synchrony(&p, &Heterogeneity::homogeneous(4), &opts).unwrap();
        assert!(!r.cluster_locked_to_forcing);
        assert_eq!(r.desync_fraction, 0.0);
    }

    #[test]
    fn quiescent_oscillators_form_their_own_category() {
        // phi + beta mu < 0 leaves an uncoupled, unforced oscillator at rest
        let mut p = small(1.0, 1.0, 3);
        p.amplitude = 0.0;
        p.epsilon = 0.0;
        p.phi = 0.0;
        let het = Heterogeneity::from_values(vec![-1.0, 0.5, 0.8]);
        let opts = SyncOptions {
            settle_periods: 300,
            observe_periods: 20,
            ..Default::default()
        };
        let r = classify_synchrony(&p, &het, &opts).unwrap();
        assert_eq!(r.quiescent_indices, vec![0]);
        assert_eq!(r.n_locked_cluster + r.desync_indices.len() + r.quiescent_indices.len(), 3);
    }

    #[test]
    fn short_windows_are_rejected() {
        let p = small(0.0, 0.85, 2);
        let opts = SyncOptions {
            observe_periods: 5,
            ..Default::default()
        };
        assert!(classify_synchrony(&p, &Heterogeneity::homogeneous(2), &opts).is_err());
    }

    #[test]
    fn winding_counts_signed_turns() {
        let circle = |turns: f64, n: usize| -> Vec<(f64, f64)> {
            (0..=n)
                .map(|k| {
                    let a = TAU * turns * k as f64 / n as f64;
                    (3.0 + 0.5 * a.cos(), -1.0 + 2.0 * a.sin())
                })
                .collect()
        };
        assert!((winding_number(&circle(4.0, 400)) - 4.0).abs() < 1e-9);
        assert!((winding_number(&circle(-2.0, 100)) + 2.0).abs() < 1e-9);
        assert_eq!(winding_number(&[(1.0, 1.0)]), 0.0);
        let spiral: Vec<(f64, f64)> = (0..300)
            .map(|k| {
                let r = 0.97f64.powi(k);
                (r * (0.4 * k as f64).cos(), r * (0.4 * k as f64).sin())
            })
            .collect();
        assert_eq!(winding_number(&spiral), 0.0);
    }

    #[test]
    fn locked_oscillator_does_not_walk_through() {
        let p = ModelParams { n_osc: 1, ..ModelParams::reference() };
        let opts = WalkthroughOptions { budget_periods: 200, ..WalkthroughOptions::default() };
        let e = walkthrough_period(&p, &Heterogeneity::homogeneous(1), 0.9, &[0.85], &opts).unwrap();
        assert!(e[0].period.is_none() && e[0].winding.abs() < 1.0, "{:?}", e[0]);
        assert!(walkthrough_period(&p, &Heterogeneity::homogeneous(1), 0.9, &[0.85, 0.95], &opts).is_err());
    }

    #[test]
    fn slope_and_cv() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &y) + 0.5).abs() < 1e-12);
        assert!((coefficient_of_variation(&[1.0, 1.0, 1.0])).abs() < 1e-15);
    }

    #[test]
    fn snapshot_at_zero_is_uncorrelated() {
        let p = small(0.1, 0.85, 200);
        let het = Heterogeneity::standard_normal(200, 3);
        let snaps = correlation_snapshot(&p, &het, 1, &[0.0], 9, DEFAULT_DT).unwrap();
        let (rx, ry) = snaps[0].residual;
        assert!(rx > 0.9 && ry > 0.9, "{rx} {ry}");
    }
}
