//! The three continuation problems: coarse fixed points in one parameter,
//! and fold and Neimark-Sacker (Hopf) points of the coarse map in two.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::palc::Problem;
use super::{Param, ParamBound, Termination};
use crate::coarse_map::CoarseMap;
use crate::error::{Error, Result};
use crate::network::ModelParams;

fn with_params(base: &ModelParams, assignments: &[(Param, f64)]) -> ModelParams {
    let mut p = *base;
    for &(param, v) in assignments {
        param.set(&mut p, v);
    }
    p
}

fn boundary_of(assignments: &[(Param, f64)], bounds: &[ParamBound]) -> Option<Termination> {
    for &(param, v) in assignments {
        if !param.in_domain(v) {
            return Some(Termination::ParameterBoundary { param, value: v });
        }
        for b in bounds.iter().filter(|b| b.param == param) {
            if v < b.min || v > b.max {
                return Some(Termination::ParameterBoundary { param, value: v });
            }
        }
    }
    None
}

/// Central-difference columns of `f` for the listed unknown indices.
fn fd_columns<F>(u: &DVector<f64>, cols: &[usize], step: f64, f: F) -> Result<Vec<DVector<f64>>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    cols.par_iter()
        .map(|&k| {
            let mut plus = u.clone();
            let mut minus = u.clone();
            plus[k] += step;
            minus[k] -= step;
            let col = (f(&plus)? - f(&minus)?) / (2.0 * step);
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "extended Jacobian" });
            }
            Ok(col)
        })
        .collect()
}

/// `J v` by a central difference along `v`.
fn directional<M: CoarseMap + ?Sized>(
    map: &M,
    z: &[f64],
    v: &[f64],
    params: &ModelParams,
    step: f64,
) -> Result<Vec<f64>> {
    let plus: Vec<f64> = z.iter().zip(v).map(|(a, b)| a + step * b).collect();
    let minus: Vec<f64> = z.iter().zip(v).map(|(a, b)| a - step * b).collect();
    let (hp, hm) = rayon::join(|| map.apply(&plus, params), || map.apply(&minus, params));
    let (hp, hm) = (hp?, hm?);
    Ok(hp.iter().zip(&hm).map(|(a, b)| (a - b) / (2.0 * step)).collect())
}

/// Unknowns `(z, p)`, equations `h(z; p) - z = 0`.
pub(crate) struct FixedPointProblem<'a, M: ?Sized> {
    pub map: &'a M,
    pub base: ModelParams,
    pub free: Param,
    pub fd_step: f64,
    pub bounds: Vec<ParamBound>,
}

impl<M: CoarseMap + ?Sized> FixedPointProblem<'_, M> {
    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn params_at(&self, u: &DVector<f64>) -> ModelParams {
        with_params(&self.base, &[(self.free, u[self.dim()])])
    }
}

impl<M: CoarseMap + ?Sized> Problem for FixedPointProblem<'_, M> {
    fn n_unknowns(&self) -> usize {
        self.dim() + 1
    }

    fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        let z = &u.as_slice()[..n];
        let h = self.map.apply(z, &self.params_at(u))?;
        Ok(DVector::from_iterator(n, h.iter().zip(z).map(|(a, b)| a - b)))
    }

    fn jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let cols: Vec<usize> = (0..=n).collect();
        let c = fd_columns(u, &cols, self.fd_step, |v| self.residual(v))?;
        Ok(DMatrix::from_columns(&c))
    }

    fn primary_index(&self) -> usize {
        self.dim()
    }

    fn boundary(&self, u: &DVector<f64>) -> Option<Termination> {
        boundary_of(&[(self.free, u[self.dim()])], &self.bounds)
    }
}

/// Unknowns `(z, v, p1, p2)`, equations
/// `h(z) - z = 0`, `(J - I) v = 0`, `(|v|^2 - 1)/2 = 0`.
pub(crate) struct FoldProblem<'a, M: ?Sized> {
    pub map: &'a M,
    pub base: ModelParams,
    pub free: (Param, Param),
    /// Step of the directional difference giving `J v`.
    pub fd_step: f64,
    /// Step of the outer differences of the extended residual.
    pub outer_step: f64,
    pub bounds: Vec<ParamBound>,
}

impl<M: CoarseMap + ?Sized> FoldProblem<'_, M> {
    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn assignments(&self, u: &DVector<f64>) -> [(Param, f64); 2] {
        let n = self.dim();
        [(self.free.0, u[2 * n]), (self.free.1, u[2 * n + 1])]
    }

    pub fn params_at(&self, u: &DVector<f64>) -> ModelParams {
        with_params(&self.base, &self.assignments(u))
    }
}

impl<M: CoarseMap + ?Sized> Problem for FoldProblem<'_, M> {
    fn n_unknowns(&self) -> usize {
        2 * self.dim() + 2
    }

    fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        let s = u.as_slice();
        let (z, v) = (&s[..n], &s[n..2 * n]);
        let p = self.params_at(u);
        let (h, jv) = rayon::join(
            || self.map.apply(z, &p),
            || directional(self.map, z, v, &p, self.fd_step),
        );
        let (h, jv) = (h?, jv?);
        let mut r = DVector::zeros(2 * n + 1);
        for i in 0..n {
            r[i] = h[i] - z[i];
            r[n + i] = jv[i] - v[i];
        }
        r[2 * n] = 0.5 * (v.iter().map(|x| x * x).sum::<f64>() - 1.0);
        Ok(r)
    }

    fn jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut cols: Vec<usize> = (0..n).collect();
        cols.extend([2 * n, 2 * n + 1]);
        let fd = fd_columns(u, &cols, self.outer_step, |w| self.residual(w))?;
        let mut jac = DMatrix::zeros(2 * n + 1, 2 * n + 2);
        for (c, col) in cols.iter().zip(&fd) {
            jac.set_column(*c, col);
        }
        // d/dv: (J - I) in the middle block, v^T in the normalization row;
        // J - I is the top-left block just computed
        let j_minus_i = jac.view((0, 0), (n, n)).clone_owned();
        jac.view_mut((n, n), (n, n)).copy_from(&j_minus_i);
        for i in 0..n {
            jac[(2 * n, n + i)] = u[n + i];
        }
        Ok(jac)
    }

    fn primary_index(&self) -> usize {
        2 * self.dim()
    }

    fn boundary(&self, u: &DVector<f64>) -> Option<Termination> {
        boundary_of(&self.assignments(u), &self.bounds)
    }
}

/// Unknowns `(z, w_re, w_im, theta, p1, p2)`, equations `h(z) - z = 0`,
/// `J w = e^{i theta} w`, `|w| = 1` and `Im(conj(c) . w) = 0` for a
/// reference vector `c` refreshed at every accepted point.
pub(crate) struct HopfProblem<'a, M: ?Sized> {
    pub map: &'a M,
    pub base: ModelParams,
    pub free: (Param, Param),
    pub fd_step: f64,
    pub outer_step: f64,
    pub bounds: Vec<ParamBound>,
    pub reference: (Vec<f64>, Vec<f64>),
}

impl<M: CoarseMap + ?Sized> HopfProblem<'_, M> {
    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn theta_index(&self) -> usize {
        3 * self.dim()
    }

    pub fn assignments(&self, u: &DVector<f64>) -> [(Param, f64); 2] {
        let k = self.theta_index();
        [(self.free.0, u[k + 1]), (self.free.1, u[k + 2])]
    }

    pub fn params_at(&self, u: &DVector<f64>) -> ModelParams {
        with_params(&self.base, &self.assignments(u))
    }
}

impl<M: CoarseMap + ?Sized> Problem for HopfProblem<'_, M> {
    fn n_unknowns(&self) -> usize {
        3 * self.dim() + 3
    }

    fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        let s = u.as_slice();
        let (z, wr, wi) = (&s[..n], &s[n..2 * n], &s[2 * n..3 * n]);
        let theta = s[3 * n];
        let (c, sn) = (theta.cos(), theta.sin());
        let p = self.params_at(u);
        let (h, (jr, ji)) = rayon::join(
            || self.map.apply(z, &p),
            || {
                rayon::join(
                    || directional(self.map, z, wr, &p, self.fd_step),
                    || directional(self.map, z, wi, &p, self.fd_step),
                )
            },
        );
        let (h, jr, ji) = (h?, jr?, ji?);
        let mut r = DVector::zeros(3 * n + 2);
        for i in 0..n {
            r[i] = h[i] - z[i];
            r[n + i] = jr[i] - c * wr[i] + sn * wi[i];
            r[2 * n + i] = ji[i] - sn * wr[i] - c * wi[i];
        }
        let norm2: f64 = wr.iter().chain(wi).map(|x| x * x).sum();
        r[3 * n] = 0.5 * (norm2 - 1.0);
        let (cr, ci) = &self.reference;
        r[3 * n + 1] = cr.iter().zip(wi).map(|(a, b)| a * b).sum::<f64>()
            - ci.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
        Ok(r)
    }

    fn jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let k = self.theta_index();
        let mut cols: Vec<usize> = (0..n).collect();
        cols.extend([k + 1, k + 2]);
        let fd = fd_columns(u, &cols, self.outer_step, |w| self.residual(w))?;
        let mut jac = DMatrix::zeros(3 * n + 2, 3 * n + 3);
        for (c, col) in cols.iter().zip(&fd) {
            jac.set_column(*c, col);
        }
        let mut j = jac.view((0, 0), (n, n)).clone_owned();
        for i in 0..n {
            j[(i, i)] += 1.0;
        }
        let theta = u[k];
        let (c, s) = (theta.cos(), theta.sin());
        let eye = DMatrix::<f64>::identity(n, n);
        let block = &j - &eye * c;
        // d/dw_re
        jac.view_mut((n, n), (n, n)).copy_from(&block);
        jac.view_mut((2 * n, n), (n, n)).copy_from(&(&eye * -s));
        // d/dw_im
        jac.view_mut((n, 2 * n), (n, n)).copy_from(&(&eye * s));
        jac.view_mut((2 * n, 2 * n), (n, n)).copy_from(&block);
        let (cr, ci) = &self.reference;
        for i in 0..n {
            let (wr, wi) = (u[n + i], u[2 * n + i]);
            jac[(3 * n, n + i)] = wr;
            jac[(3 * n, 2 * n + i)] = wi;
            jac[(3 * n + 1, n + i)] = -ci[i];
            jac[(3 * n + 1, 2 * n + i)] = cr[i];
            // d/dtheta
            jac[(n + i, k)] = s * wr + c * wi;
            jac[(2 * n + i, k)] = -c * wr + s * wi;
        }
        Ok(jac)
    }

    fn primary_index(&self) -> usize {
        self.theta_index() + 1
    }

    fn boundary(&self, u: &DVector<f64>) -> Option<Termination> {
        let theta = u[self.theta_index()];
        if !(theta > 0.0 && theta < std::f64::consts::PI) {
            return Some(Termination::Resonance { theta });
        }
        boundary_of(&self.assignments(u), &self.bounds)
    }

    fn accept(&mut self, u: &DVector<f64>) {
        let n = self.dim();
        self.reference = (
            u.rows(n, n).iter().copied().collect(),
            u.rows(2 * n, n).iter().copied().collect(),
        );
    }
}
