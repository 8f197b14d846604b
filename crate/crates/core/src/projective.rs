//! Coarse projective integration: short bursts of full simulation, followed
//! by polynomial extrapolation of the chaos coefficients.

use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chaos::{ChaosBasis, ChaosCoeffs};
use crate::error::{Error, Result};
use crate::network::{Heterogeneity, Integrator, ModelParams, NetworkState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSchedule<T = f64> {
    /// Inner step `dt`.
    pub dt: T,
    /// Burst length in steps.
    pub n_inner: usize,
    /// Projection horizon in steps.
    pub n_project: usize,
    /// Degree of the extrapolating polynomial.
    pub fit_order: usize,
}

impl<T: Scalar> ProjectionSchedule<T> {
    /// Three inner steps of 0.005, cubic extrapolation.
    pub fn cubic(n_project: usize) -> Self {
        Self {
            dt: T::lit(0.005),
            n_inner: 3,
            n_project,
            fit_order: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidParameter("schedule dt must be positive".into()));
        }
        if self.n_inner == 0 || self.n_inner < self.fit_order {
            return Err(Error::InvalidParameter(format!(
                "burst of {} steps cannot support a degree-{} fit",
                self.n_inner, self.fit_order
            )));
        }
        Ok(())
    }
}

/// Where lifting draws its realization from.
#[derive(Debug, Clone)]
pub enum RealizationSource<T = f64> {
    /// One realization reused for every lift.
    Fixed(Heterogeneity<T>),
    /// A fresh standard-normal realization of size `n` for every lift,
    /// drawn from a seed stream.
    Fresh { n: usize, seed: u64 },
}

impl<T: Scalar> RealizationSource<T> {
    fn stream(&self) -> RealizationStream<'_, T> {
        match self {
            RealizationSource::Fixed(h) => RealizationStream::Fixed(h),
            RealizationSource::Fresh { n, seed } => RealizationStream::Fresh {
                n: *n,
                rng: ChaCha8Rng::seed_from_u64(*seed),
            },
        }
    }

    pub fn n_osc(&self) -> usize {
        match self {
            RealizationSource::Fixed(h) => h.len(),
            RealizationSource::Fresh { n, .. } => *n,
        }
    }
}

enum RealizationStream<'a, T> {
    Fixed(&'a Heterogeneity<T>),
    Fresh { n: usize, rng: ChaCha8Rng },
}

impl<T: Scalar> RealizationStream<'_, T> {
    fn next(&mut self) -> Heterogeneity<T> {
        match self {
            RealizationStream::Fixed(h) => (*h).clone(),
            RealizationStream::Fresh { n, rng } => {
                Heterogeneity::standard_normal(*n, rng.next_u64())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    /// Restriction of a fully integrated state.
    Burst,
    /// Extrapolated value that seeded a lift.
    Projected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseSample<T = f64> {
    pub t: T,
    pub z: ChaosCoeffs<T>,
    pub kind: SampleKind,
}

/// Value at `x` of the polynomial interpolating `(xs, ys)`, built from
/// Newton divided differences.
pub fn newton_extrapolate<T: Scalar>(xs: &[T], ys: &[T], x: T) -> T {
    let n = xs.len();
    let mut coef = ys.to_vec();
    for level in 1..n {
        for i in (level..n).rev() {
            coef[i] = (coef[i] - coef[i - 1]) / (xs[i] - xs[i - level]);
        }
    }
    let mut acc = coef[n - 1];
    for i in (0..n - 1).rev() {
        acc = acc * (x - xs[i]) + coef[i];
    }
    acc
}

/// Runs projective integration from `initial` at `t = 0` until `duration`.
///
/// Each cycle lifts the current coarse state onto a realization from
/// `source`, takes `n_inner` steps while restricting after every step,
/// fits each coarse coordinate through the last `fit_order + 1` samples and
/// evaluates the fit `n_project` steps beyond the burst. With
/// `n_project == 0` the extrapolation is unused and the microscopic state
/// is carried over unchanged, so the output equals plain integration.
pub fn projective_integrate<T: Scalar>(
    initial: &ChaosCoeffs<T>,
    params: &ModelParams<T>,
    schedule: &ProjectionSchedule<T>,
    source: &RealizationSource<T>,
    duration: T,
) -> Result<Vec<CoarseSample<T>>> {
    schedule.validate()?;
    params.validate()?;
    if !(duration > T::zero()) {
        return Err(Error::InvalidParameter("duration must be positive".into()));
    }
    if source.n_osc() != params.n_osc {
        return Err(Error::Dimension {
            what: "realization source",
            expected: params.n_osc,
            found: source.n_osc(),
        });
    }
    let q = initial.q();
    let dt = schedule.dt;
    let mut integ = Integrator::new(dt)?;
    let mut stream = source.stream();

    let mut basis = ChaosBasis::new(stream.next(), q)?;
    let mut state = basis.lift(initial, T::zero())?;
    let mut out = vec![CoarseSample {
        t: T::zero(),
        z: basis.restrict(&state)?,
        kind: SampleKind::Burst,
    }];
    let tol = dt * T::lit(1e-9);
    let n_fit = schedule.fit_order + 1;
    let mut cycle = 0usize;

    while state.t < duration - tol {
        let mut window_t: Vec<T> = vec![state.t];
        let mut window_z: Vec<Vec<T>> = vec![out.last().expect("non-empty").z.to_flat()];
        let mut restrict_err = None;
        integ
            .advance_steps(&mut state, params, basis.heterogeneity(), schedule.n_inner, |s| {
                match basis.restrict(s) {
                    Ok(z) => {
                        window_t.push(s.t);
                        window_z.push(z.to_flat());
                        out.push(CoarseSample {
                            t: s.t,
                            z,
                            kind: SampleKind::Burst,
                        });
                    }
                    Err(e) => restrict_err = Some(e),
                }
            })
            .map_err(|e| match e {
                Error::Divergence { time } => Error::BurstDivergence { cycle, time },
                other => other,
            })?;
        if let Some(e) = restrict_err {
            return Err(e);
        }
        if schedule.n_project > 0 {
            let ts = &window_t[window_t.len() - n_fit..];
            let zs = &window_z[window_z.len() - n_fit..];
            let target = state.t + T::from_usize_lossy(schedule.n_project) * dt;
            let projected: Vec<T> = (0..initial.dim())
                .map(|k| {
                    let ys: Vec<T> = zs.iter().map(|z| z[k]).collect();
                    newton_extrapolate(ts, &ys, target)
                })
                .collect();
            if projected.iter().any(|v| !v.is_finite()) {
                return Err(Error::ProjectionOvershoot { cycle });
            }
            let z = ChaosCoeffs::from_flat(&projected)?;
            basis = ChaosBasis::new(stream.next(), q)?;
            state = basis.lift(&z, target)?;
            out.push(CoarseSample {
                t: target,
                z,
                kind: SampleKind::Projected,
            });
        }
        cycle += 1;
    }
    Ok(out)
}

/// Restrictions of plain full integration sampled every `dt`, starting
/// from `initial` lifted onto `het`.
pub fn direct_coarse_trajectory<T: Scalar>(
    initial: &ChaosCoeffs<T>,
    params: &ModelParams<T>,
    het: &Heterogeneity<T>,
    dt: T,
    duration: T,
) -> Result<Vec<CoarseSample<T>>> {
    let basis = ChaosBasis::new(het.clone(), initial.q())?;
    let mut state = basis.lift(initial, T::zero())?;
    let mut out = vec![CoarseSample {
        t: T::zero(),
        z: basis.restrict(&state)?,
        kind: SampleKind::Burst,
    }];
    let (n, _) = crate::network::split_duration(duration, dt);
    let mut err = None;
    Integrator::new(dt)?.advance_steps(&mut state, params, het, n, |s| match basis.restrict(s) {
        Ok(z) => out.push(CoarseSample {
            t: s.t,
            z,
            kind: SampleKind::Burst,
        }),
        Err(e) => err = Some(e),
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupReport {
    pub n_project: usize,
    pub direct: Duration,
    pub projective: Duration,
    pub speedup: f64,
}

/// Wall-clock ratio of direct integration over projective integration
/// across `[0, duration]`. The direct run only integrates; the projective
/// run is charged for all of its lift, restrict and fit work. Each side is
/// timed `repeats` times on the current thread and the median is used.
pub fn measure_speedup<T: Scalar>(
    initial: &ChaosCoeffs<T>,
    params: &ModelParams<T>,
    schedule: &ProjectionSchedule<T>,
    source: &RealizationSource<T>,
    duration: T,
    repeats: usize,
) -> Result<SpeedupReport> {
    schedule.validate()?;
    let repeats = repeats.max(1);
    let het = source.stream().next();
    let basis = ChaosBasis::new(het.clone(), initial.q())?;
    let start = basis.lift(initial, T::zero())?;
    let (n_steps, _) = crate::network::split_duration(duration, schedule.dt);

    let mut direct = Vec::with_capacity(repeats);
    let mut projective = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut state: NetworkState<T> = start.clone();
        let clock = Instant::now();
        Integrator::new(schedule.dt)?.advance_steps(&mut state, params, &het, n_steps, |_| {})?;
        direct.push(clock.elapsed());
        std::hint::black_box(&state);

        let clock = Instant::now();
        let series = projective_integrate(initial, params, schedule, source, duration)?;
        projective.push(clock.elapsed());
        std::hint::black_box(&series);
    }
    direct.sort();
    projective.sort();
    let d = direct[repeats / 2];
    let p = projective[repeats / 2];
    Ok(SpeedupReport {
        n_project: schedule.n_project,
        direct: d,
        projective: p,
        speedup: d.as_secs_f64() / p.as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_extrapolation_is_exact_on_cubics() {
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t - 3.0 * t * t * t;
        let xs = [0.0, 0.1, 0.2, 0.3];
        let ys: Vec<f64> = xs.iter().map(|&t| f(t)).collect();
        assert!((newton_extrapolate(&xs, &ys, 0.65) - f(0.65)).abs() < 1e-12);
        assert!((newton_extrapolate(&xs, &ys, 0.3) - f(0.3)).abs() < 1e-14);
    }

    #[test]
    fn schedule_validation() {
        let mut s = ProjectionSchedule::<f64>::cubic(10);
        assert!(s.validate().is_ok());
        s.n_inner = 2;
        assert!(s.validate().is_err());
        s.n_inner = 3;
        s.dt = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn fresh_source_is_seed_deterministic() {
        let src = RealizationSource::<f64>::Fresh { n: 20, seed: 11 };
        let mut a = src.stream();
        let mut b = src.stream();
        let (a1, a2) = (a.next(), a.next());
        assert_eq!(a1, b.next());
        assert_ne!(a1, a2);
    }

    #[test]
    fn overshoot_and_divergence_are_reported() {
        let mut p = ModelParams::<f64>::reference();
        p.n_osc = 20;
        p.beta = 0.5;
        let src = RealizationSource::Fresh { n: 20, seed: 1 };
        let z = ChaosCoeffs::constant(40.0, 0.0, 1);
        let err = projective_integrate(&z, &p, &ProjectionSchedule::cubic(5), &src, 10.0).unwrap_err();
        assert!(matches!(err, Error::BurstDivergence { .. } | Error::ProjectionOvershoot { .. }));
    }
}
