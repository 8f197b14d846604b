//! The coarse stroboscopic map `h` (lift, integrate one forcing period,
//! restrict), its average over several realizations, finite-difference
//! Jacobians and Newton's method for coarse fixed points.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::chaos::{ChaosBasis, ChaosCoeffs};
use crate::error::{Error, Result};
use crate::network::{Heterogeneity, Integrator, ModelParams, NetworkState, DEFAULT_DT};

pub type Complex64 = nalgebra::Complex<f64>;

/// A smooth map on coarse states, parametrised by the model parameters.
///
/// Continuation and Newton solvers only see this trait, so synthetic maps
/// can stand in for the network in tests.
pub trait CoarseMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, z: &[f64], params: &ModelParams) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMapConfig {
    /// Chaos expansion order.
    pub q: usize,
    /// One seed per averaged realization; `r` is the length.
    pub realization_seeds: Vec<u64>,
    pub fd_step: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub dt: f64,
}

impl Default for CoarseMapConfig {
    fn default() -> Self {
        Self {
            q: 1,
            realization_seeds: (1..=20).collect(),
            fd_step: 1e-5,
            newton_tol: 1e-8,
            newton_max_iter: 25,
            dt: DEFAULT_DT,
        }
    }
}

impl CoarseMapConfig {
    /// `r` realizations with seeds `base, base + 1, ..`.
    pub fn with_realizations(mut self, r: usize, base_seed: u64) -> Self {
        self.realization_seeds = (0..r as u64).map(|k| base_seed + k).collect();
        self
    }

    pub fn r(&self) -> usize {
        self.realization_seeds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.realization_seeds.is_empty() {
            return Err(Error::InvalidParameter("need at least one realization".into()));
        }
        if !(self.fd_step > 0.0) || !(self.newton_tol > 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(
                "fd_step, newton_tol and dt must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn newton(&self) -> NewtonSettings {
        NewtonSettings {
            fd_step: self.fd_step,
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub fd_step: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        CoarseMapConfig::default().newton()
    }
}

/// `h` averaged over a fixed list of realizations. Every evaluation uses
/// the same realizations, so the map is a deterministic, smooth function
/// of the coarse state and the parameters.
#[derive(Debug, Clone)]
pub struct AveragedMap {
    members: Vec<ChaosBasis<f64>>,
    seeds: Vec<u64>,
    dt: f64,
    q: usize,
}

impl AveragedMap {
    /// Standard-normal realizations of size `n_osc`, one per seed.
    pub fn new(config: &CoarseMapConfig, n_osc: usize) -> Result<Self> {
        config.validate()?;
        let members = config
            .realization_seeds
            .iter()
            .map(|&s| ChaosBasis::new(Heterogeneity::standard_normal(n_osc, s), config.q))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            members,
            seeds: config.realization_seeds.clone(),
            dt: config.dt,
            q: config.q,
        })
    }

    /// Explicit realizations; seeds default to member indices when a
    /// realization carries none.
    pub fn from_realizations(hets: Vec<Heterogeneity>, q: usize, dt: f64) -> Result<Self> {
        if hets.is_empty() {
            return Err(Error::InvalidParameter("need at least one realization".into()));
        }
        let seeds = hets
            .iter()
            .enumerate()
            .map(|(k, h)| h.seed().unwrap_or(k as u64))
            .collect();
        let members = hets
            .into_iter()
            .map(|h| ChaosBasis::new(h, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            members,
            seeds,
            dt,
            q,
        })
    }

    /// A single oscillator, `q = 0`: the coarse state is `(x, y)` itself.
    pub fn single_oscillator(dt: f64) -> Self {
        Self::from_realizations(vec![Heterogeneity::homogeneous(1)], 0, dt)
            .expect("one oscillator supports q = 0")
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_osc(&self) -> usize {
        self.members[0].heterogeneity().len()
    }

    pub fn members(&self) -> &[ChaosBasis<f64>] {
        &self.members
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    /// Lifted microscopic state of member `k`, before integration.
    pub fn lift_member(&self, k: usize, z: &ChaosCoeffs) -> Result<NetworkState> {
        self.members[k].lift(z, 0.0)
    }

    /// `h(z)` for every member, in member order.
    pub fn member_outputs(&self, z: &[f64], params: &ModelParams) -> Result<Vec<Vec<f64>>> {
        let coeffs = ChaosCoeffs::from_flat(z)?;
        if coeffs.q() != self.q {
            return Err(Error::Dimension {
                what: "coarse state",
                expected: 2 * (self.q + 1),
                found: z.len(),
            });
        }
        if params.n_osc != self.n_osc() {
            return Err(Error::Dimension {
                what: "oscillator count",
                expected: self.n_osc(),
                found: params.n_osc,
            });
        }
        let period = params.forcing_period()?;
        self.members
            .par_iter()
            .zip(self.seeds.par_iter())
            .map(|(basis, &seed)| {
                member_map(basis, &coeffs, params, period, self.dt)
                    .map(|c| c.to_flat())
                    .map_err(|e| Error::member(seed, e))
            })
            .collect()
    }
}

fn member_map(
    basis: &ChaosBasis<f64>,
    z: &ChaosCoeffs,
    params: &ModelParams,
    period: f64,
    dt: f64,
) -> Result<ChaosCoeffs> {
    let mut state = basis.lift(z, 0.0)?;
    Integrator::new(dt)?.advance(&mut state, params, basis.heterogeneity(), period)?;
    basis.restrict(&state)
}

impl CoarseMap for AveragedMap {
    fn dim(&self) -> usize {
        2 * (self.q + 1)
    }

    fn apply(&self, z: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
        let outputs = self.member_outputs(z, params)?;
        let mut mean = vec![0.0; z.len()];
        // fixed summation order keeps results independent of threading
        for out in &outputs {
            for (m, v) in mean.iter_mut().zip(out) {
                *m += v;
            }
        }
        let r = outputs.len() as f64;
        mean.iter_mut().for_each(|m| *m /= r);
        Ok(mean)
    }
}

/// `h` for one realization: lift at `t = 0`, integrate one forcing
/// period, restrict.
pub fn coarse_map(
    z: &ChaosCoeffs,
    params: &ModelParams,
    het: &Heterogeneity,
    dt: f64,
) -> Result<ChaosCoeffs> {
    let basis = ChaosBasis::new(het.clone(), z.q())?;
    member_map(&basis, z, params, params.forcing_period()?, dt)
}

/// `h` averaged over the realizations named in `config`.
pub fn averaged_map(
    z: &ChaosCoeffs,
    params: &ModelParams,
    config: &CoarseMapConfig,
) -> Result<ChaosCoeffs> {
    if z.q() != config.q {
        return Err(Error::Dimension {
            what: "chaos order",
            expected: config.q + 1,
            found: z.q() + 1,
        });
    }
    let map = AveragedMap::new(config, params.n_osc)?;
    ChaosCoeffs::from_flat(&map.apply(&z.to_flat(), params)?)
}

/// Central-difference Jacobian, column `k` = `[h(z + d e_k) - h(z - d e_k)] / 2d`.
pub fn coarse_jacobian<M: CoarseMap + ?Sized>(
    map: &M,
    z: &[f64],
    params: &ModelParams,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    let n = map.dim();
    if z.len() != n {
        return Err(Error::Dimension {
            what: "coarse state",
            expected: n,
            found: z.len(),
        });
    }
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut plus = z.to_vec();
            let mut minus = z.to_vec();
            plus[k] += fd_step;
            minus[k] -= fd_step;
            let hp = map.apply(&plus, params)?;
            let hm = map.apply(&minus, params)?;
            Ok(hp
                .iter()
                .zip(&hm)
                .map(|(a, b)| (a - b) / (2.0 * fd_step))
                .collect())
        })
        .collect::<Result<_>>()?;
    let j = DMatrix::from_fn(n, n, |i, k| columns[k][i]);
    if j.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "coarse Jacobian" });
    }
    Ok(j)
}

/// Eigenvalues of a real matrix, largest modulus first.
pub fn eigenvalues(j: &DMatrix<f64>) -> Vec<Complex64> {
    if j.iter().any(|v| !v.is_finite()) {
        return vec![Complex64::new(f64::NAN, f64::NAN); j.nrows()];
    }
    let mut ev: Vec<Complex64> = j.clone().complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    ev
}

pub fn is_stable(eigenvalues: &[Complex64]) -> bool {
    eigenvalues.iter().all(|l| l.norm() < 1.0)
}

#[derive(Debug, Clone)]
pub struct CoarseFixedPoint {
    pub z: ChaosCoeffs,
    /// `max |h(z) - z|` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    /// `max |h(z) - z|` before each Newton update and after the last.
    pub residual_history: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub jacobian_eigenvalues: Vec<Complex64>,
    pub stable: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) })
}

fn defect<M: CoarseMap + ?Sized>(map: &M, z: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    Ok(map
        .apply(z, params)?
        .iter()
        .zip(z)
        .map(|(h, z)| h - z)
        .collect())
}

/// Newton's method on `F(z) = h(z) - z` with a finite-difference Jacobian.
pub fn newton_fixed_point<M: CoarseMap + ?Sized>(
    map: &M,
    z0: &ChaosCoeffs,
    params: &ModelParams,
    settings: &NewtonSettings,
) -> Result<CoarseFixedPoint> {
    let n = map.dim();
    let mut z = z0.to_flat();
    if z.len() != n {
        return Err(Error::Dimension {
            what: "initial guess",
            expected: n,
            found: z.len(),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "initial guess" });
    }
    let mut f = defect(map, &z, params)?;
    let mut history = vec![inf_norm(&f)];
    let mut iterations = 0;
    while inf_norm(&f) >= settings.tol {
        if iterations == settings.max_iter {
            return Err(Error::NewtonNoConvergence {
                iterations,
                residual: inf_norm(&f),
            });
        }
        let j = coarse_jacobian(map, &z, params, settings.fd_step)?;
        let a = j - DMatrix::identity(n, n);
        let step = solve_checked(&a, &DVector::from_iterator(n, f.iter().map(|v| -v)))
            .ok_or_else(|| Error::SingularNewton { z: z.clone() })?;
        for (zi, di) in z.iter_mut().zip(step.iter()) {
            *zi += di;
        }
        f = defect(map, &z, params)?;
        history.push(inf_norm(&f));
        iterations += 1;
    }
    let jacobian = coarse_jacobian(map, &z, params, settings.fd_step)?;
    let ev = eigenvalues(&jacobian);
    Ok(CoarseFixedPoint {
        z: ChaosCoeffs::from_flat(&z)?,
        residual: inf_norm(&f),
        iterations,
        residual_history: history,
        stable: is_stable(&ev),
        jacobian,
        jacobian_eigenvalues: ev,
    })
}

/// Solves `a x = b`, refusing matrices whose reciprocal condition number
/// falls below `1e-12`.
pub(crate) fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    // SVD iterations need not terminate on NaN input
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min / max < 1e-12 {
        return None;
    }
    a.clone().lu().solve(b)
}

/// Initial guess by relaxation: lift `rough`, run the full system for
/// `periods` forcing periods, restrict.
pub fn relax(
    rough: &ChaosCoeffs,
    params: &ModelParams,
    het: &Heterogeneity,
    periods: usize,
    dt: f64,
) -> Result<ChaosCoeffs> {
    let basis = ChaosBasis::new(het.clone(), rough.q())?;
    let mut state = basis.lift(rough, 0.0)?;
    let period = params.forcing_period()?;
    let mut integ = Integrator::new(dt)?;
    for _ in 0..periods {
        let t = state.t;
        integ.advance(&mut state, params, basis.heterogeneity(), period)?;
        // keep the strobe phase exact
        state.t = t + period;
    }
    basis.restrict(&state)
}

/// Per-oscillator change `(x_i(T) - x_i(0), y_i(T) - y_i(0))` over one
/// forcing period, starting from `z` lifted onto `het`.
pub fn full_state_defect(
    z: &ChaosCoeffs,
    params: &ModelParams,
    het: &Heterogeneity,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let basis = ChaosBasis::new(het.clone(), z.q())?;
    let start = basis.lift(z, 0.0)?;
    let mut end = start.clone();
    Integrator::new(dt)?.advance(&mut end, params, het, params.forcing_period()?)?;
    let dx = end.x.iter().zip(&start.x).map(|(a, b)| a - b).collect();
    let dy = end.y.iter().zip(&start.y).map(|(a, b)| a - b).collect();
    Ok((dx, dy))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `z -> A z + c` with `A` set from the parameters' omega.
    struct Affine {
        a: DMatrix<f64>,
        c: Vec<f64>,
    }

    impl CoarseMap for Affine {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn apply(&self, z: &[f64], _: &ModelParams) -> Result<Vec<f64>> {
            let v = &self.a * DVector::from_column_slice(z);
            Ok(v.iter().zip(&self.c).map(|(a, b)| a + b).collect())
        }
    }

    fn affine() -> Affine {
        Affine {
            a: DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]),
            c: vec![1.0, -2.0],
        }
    }

    #[test]
    fn jacobian_of_affine_map_is_exact() {
        let m = affine();
        let j = coarse_jacobian(&m, &[0.3, 0.7], &ModelParams::reference(), 1e-5).unwrap();
        assert!((j - &m.a).abs().max() < 1e-10);
    }

    #[test]
    fn newton_on_affine_map() {
        let m = affine();
        let p = ModelParams::reference();
        let fp = newton_fixed_point(&m, &ChaosCoeffs::constant(0.0, 0.0, 0), &p, &NewtonSettings::default()).unwrap();
        let z = fp.z.to_flat();
        let hz = m.apply(&z, &p).unwrap();
        assert!(inf_norm(&[hz[0] - z[0], hz[1] - z[1]]) < 1e-10);
        assert!(fp.iterations <= 2);
        assert!(fp.stable);
        // already converged: no update
        let again = newton_fixed_point(&m, &fp.z, &p, &NewtonSettings::default()).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn singular_newton_matrix_is_reported() {
        // identity map: every point fixed except the offset makes F constant
        let m = Affine {
            a: DMatrix::identity(2, 2),
            c: vec![1.0, 0.0],
        };
        let err = newton_fixed_point(&m, &ChaosCoeffs::constant(0.0, 0.0, 0), &ModelParams::reference(), &NewtonSettings::default()).unwrap_err();
        assert!(matches!(err, Error::SingularNewton { .. }));
    }

    #[test]
    fn eigenvalues_sorted_and_conjugate() {
        let j = DMatrix::from_row_slice(3, 3, &[0.0, -0.9, 0.0, 0.9, 0.0, 0.0, 0.0, 0.0, 0.2]);
        let ev = eigenvalues(&j);
        assert_eq!(ev.len(), 3);
        assert!((ev[0].norm() - 0.9).abs() < 1e-12);
        assert!((ev[0].im + ev[1].im).abs() < 1e-12);
        assert!((ev[2].re - 0.2).abs() < 1e-12);
        assert!(is_stable(&ev));
    }

    #[test]
    fn config_validation() {
        let mut c = CoarseMapConfig::default();
        assert_eq!(c.r(), 20);
        c.realization_seeds.clear();
        assert!(c.validate().is_err());
        let c = CoarseMapConfig::default().with_realizations(3, 100);
        assert_eq!(c.realization_seeds, vec![100, 101, 102]);
    }
}
