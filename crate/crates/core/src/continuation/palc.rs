//! Pseudo-arclength continuation engine for an underdetermined system
//! `G(u) = 0`, `G: R^{m+1} -> R^m`.

use nalgebra::{DMatrix, DVector};

use super::{ContinuationConfig, Termination};
use crate::error::{Error, Result};

pub(crate) trait Problem: Sync {
    /// Number of unknowns (one more than the number of equations).
    fn n_unknowns(&self) -> usize;
    fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>>;
    /// Index of the unknown whose increase fixes the initial orientation.
    fn primary_index(&self) -> usize;
    /// Whether `u` lies inside the parameter domain; `Some` names the
    /// boundary that was crossed.
    fn boundary(&self, _u: &DVector<f64>) -> Option<Termination> {
        None
    }
    /// Called for every accepted point.
    fn accept(&mut self, _u: &DVector<f64>) {}
}

#[derive(Debug, Clone)]
pub(crate) struct Accepted {
    pub u: DVector<f64>,
    pub jac: DMatrix<f64>,
}

pub(crate) fn inf_norm(v: &DVector<f64>) -> f64 {
    // NaN must not hide behind f64::max
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) })
}

/// Unit null vector of an `m x (m+1)` matrix, sign fixed so that
/// `t . orient > 0` (or component `primary` positive when no orientation
/// is given).
pub(crate) fn null_vector(
    jac: &DMatrix<f64>,
    orient: Option<&DVector<f64>>,
    primary: usize,
) -> DVector<f64> {
    let n = jac.ncols();
    let mut square = DMatrix::zeros(n, n);
    square.view_mut((0, 0), (jac.nrows(), n)).copy_from(jac);
    let svd = square.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let mut t = vt.row(k).transpose();
    let sign = match orient {
        Some(o) => t.dot(o),
        None => t[primary],
    };
    if sign < 0.0 {
        t = -t;
    }
    t.normalize()
}

/// Initial tangent: solve `[G_u; e_p^T] t = [0; 1]`, i.e. the direction in
/// which a small increase of the primary parameter moves the solution.
/// Falls back to the null vector when that system is singular.
pub(crate) fn initial_tangent(jac: &DMatrix<f64>, primary: usize) -> DVector<f64> {
    let n = jac.ncols();
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (n - 1, n)).copy_from(jac);
    m[(n - 1, primary)] = 1.0;
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    match crate::coarse_map::solve_checked(&m, &rhs) {
        Some(t) if t.iter().all(|v| v.is_finite()) => t.normalize(),
        _ => null_vector(jac, None, primary),
    }
}

pub(crate) struct Corrected {
    pub u: DVector<f64>,
    pub iterations: usize,
}

/// Newton on `[G(u); d.(u - anchor) - s] = 0`. Starts from the supplied
/// Jacobian and refreshes it whenever the residual contracts by less than
/// half per iteration.
pub(crate) fn correct<P: Problem + ?Sized>(
    problem: &P,
    guess: DVector<f64>,
    anchor: &DVector<f64>,
    direction: &DVector<f64>,
    s: f64,
    jac_hint: &DMatrix<f64>,
    config: &ContinuationConfig,
) -> Result<Corrected> {
    let n = problem.n_unknowns();
    let mut u = guess;
    let mut jac = jac_hint.clone();
    let mut fresh = false;
    let mut g = problem.residual(&u)?;
    let mut prev = inf_norm(&g);
    let start = prev;
    for it in 1..=config.corrector_max_iter {
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (n - 1, n)).copy_from(&jac);
        m.set_row(n - 1, &direction.transpose());
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, n - 1).copy_from(&(-&g));
        rhs[n - 1] = s - direction.dot(&(&u - anchor));
        let delta = crate::coarse_map::solve_checked(&m, &rhs).ok_or_else(|| {
            Error::SingularNewton {
                z: u.iter().copied().collect(),
            }
        })?;
        u += &delta;
        g = problem.residual(&u)?;
        let res = inf_norm(&g);
        if !res.is_finite() || res > 1e3 * start.max(config.corrector_tol) {
            return Err(Error::NewtonNoConvergence {
                iterations: it,
                residual: res,
            });
        }
        if res < config.corrector_tol {
            return Ok(Corrected { u, iterations: it });
        }
        if res > 0.5 * prev {
            if fresh && res >= prev {
                return Err(Error::NewtonNoConvergence {
                    iterations: it,
                    residual: res,
                });
            }
            jac = problem.jacobian(&u)?;
            fresh = true;
        } else {
            fresh = false;
        }
        prev = res;
    }
    Err(Error::NewtonNoConvergence {
        iterations: config.corrector_max_iter,
        residual: prev,
    })
}

/// Moves `u` onto the solution curve with minimum-norm Newton steps.
pub(crate) fn project_onto_curve<P: Problem + ?Sized>(
    problem: &P,
    mut u: DVector<f64>,
    config: &ContinuationConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut g = problem.residual(&u)?;
    for _ in 0..config.corrector_max_iter {
        if inf_norm(&g) < config.corrector_tol {
            let jac = problem.jacobian(&u)?;
            return Ok((u, jac));
        }
        let jac = problem.jacobian(&u)?;
        let delta = jac
            .clone()
            .svd(true, true)
            .solve(&(-&g), 1e-13)
            .map_err(|e| Error::CannotStart(e.to_string()))?;
        u += delta;
        g = problem.residual(&u)?;
        if !inf_norm(&g).is_finite() {
            break;
        }
    }
    Err(Error::CannotStart(format!(
        "start point residual {:e} above tolerance",
        inf_norm(&g)
    )))
}

/// Decision of the per-point monitor.
pub(crate) enum Verdict {
    Continue,
    Stop(Termination),
}

pub(crate) struct Trace {
    pub points: Vec<Accepted>,
    pub termination: Termination,
}

/// Hooks consulted while tracing.
pub(crate) trait Monitor {
    /// Called after each accepted point.
    fn on_accept(&mut self, _point: &Accepted) -> Verdict {
        Verdict::Continue
    }
    /// Called after `failures` consecutive corrector failures from `last`.
    fn on_repeated_failure(&mut self, _last: &Accepted, _failures: usize) -> Verdict {
        Verdict::Continue
    }
}


pub(crate) fn trace<P: Problem + ?Sized>(
    problem: &mut P,
    start: Accepted,
    config: &ContinuationConfig,
    monitor: &mut dyn Monitor,
) -> Result<Trace> {
    let primary = problem.primary_index();
    let mut secant = initial_tangent(&start.jac, primary) * config.direction.sign();
    let origin = start.u.clone();
    let origin_tangent = secant.clone();
    problem.accept(&start.u);
    let mut points = vec![start];
    let mut h = config.initial_step;
    let mut failures = 0usize;
    let mut travelled = 0.0;

    let termination = loop {
        if points.len() >= config.max_points {
            break Termination::MaxPoints;
        }
        let last = points.last().expect("non-empty");
        let guess = &last.u + &secant * h;
        match correct(&*problem, guess, &last.u, &secant, h, &last.jac, config) {
            Ok(c) => {
                if let Some(t) = problem.boundary(&c.u) {
                    break t;
                }
                let jac = match problem.jacobian(&c.u) {
                    Ok(j) => j,
                    Err(e) => {
                        break Termination::NumericalFailure {
                            reason: format!("Jacobian at accepted point: {e}"),
                        }
                    }
                };
                let step = &c.u - &last.u;
                let len = step.norm();
                travelled += len;
                secant = step / len;
                failures = 0;
                let accepted = Accepted { u: c.u, jac };
                problem.accept(&accepted.u);
                let verdict = monitor.on_accept(&accepted);
                let back_home = points.len() > 4
                    && travelled > 4.0 * config.max_step
                    && secant.dot(&origin_tangent) > 0.0
                    && passes_near(&points.last().expect("non-empty").u, &accepted.u, &origin);
                points.push(accepted);
                if let Verdict::Stop(t) = verdict {
                    break t;
                }
                if back_home {
                    break Termination::ClosedLoop;
                }
                if c.iterations <= 3 {
                    h = (h * 1.3).min(config.max_step);
                }
            }
            Err(_) => {
                failures += 1;
                if failures >= 2 {
                    if let Verdict::Stop(t) =
                        monitor.on_repeated_failure(points.last().expect("non-empty"), failures)
                    {
                        break t;
                    }
                }
                h *= 0.5;
                if h < config.min_step {
                    break Termination::MinStepUnderflow { step: h };
                }
            }
        }
    };
    Ok(Trace {
        points,
        termination,
    })
}

/// Whether `target` lies within a tenth of the segment length of the
/// segment `a -> b`.
fn passes_near(a: &DVector<f64>, b: &DVector<f64>, target: &DVector<f64>) -> bool {
    let seg = b - a;
    let len2 = seg.norm_squared();
    if len2 == 0.0 {
        return false;
    }
    let tau = (target - a).dot(&seg) / len2;
    if !(0.0..=1.0).contains(&tau) {
        return false;
    }
    (a + &seg * tau - target).norm() < 0.1 * len2.sqrt()
}
