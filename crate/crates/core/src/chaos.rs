//! Hermite polynomial chaos: restriction of a network state to expansion
//! coefficients and lifting of coefficients back onto a realization.
//!
//! Physicists' convention, `H_0 = 1`, `H_1 = 2z`, `H_2 = 4z^2 - 2`.
//! Restriction is a linear least-squares fit of `x_i` (and separately
//! `y_i`) against `H_0(mu_i) .. H_q(mu_i)`, solved with a Householder QR of
//! the design matrix. The normal equations would square the condition
//! number of the Hermite columns.

use crate::error::{Error, Result};
use crate::network::{Heterogeneity, NetworkState};
use crate::scalar::Scalar;

/// `H_j(z)` by the three-term recurrence `H_{j+1} = 2z H_j - 2j H_{j-1}`.
pub fn hermite_eval<T: Scalar>(j: usize, z: T) -> T {
    let two = T::lit(2.0);
    let mut prev = T::one();
    if j == 0 {
        return prev;
    }
    let mut cur = two * z;
    for k in 1..j {
        let next = two * z * cur - two * T::from_usize_lossy(k) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_0(z) .. H_q(z)` written into `out` (length `q + 1`).
fn hermite_row<T: Scalar>(z: T, out: &mut [T]) {
    let two = T::lit(2.0);
    out[0] = T::one();
    if out.len() > 1 {
        out[1] = two * z;
    }
    for k in 1..out.len().saturating_sub(1) {
        out[k + 1] = two * z * out[k] - two * T::from_usize_lossy(k) * out[k - 1];
    }
}

/// Row-major `N x (q+1)` matrix with entries `H_j(mu_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `sum_j c_j H_j(mu_i)` for every row.
    pub fn apply(&self, coeffs: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = self
                .row(i)
                .iter()
                .zip(coeffs)
                .fold(T::zero(), |acc, (h, c)| acc + *h * *c);
        }
    }
}

fn distinct_count<T: Scalar>(mu: &[T]) -> usize {
    let mut v: Vec<T> = mu.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.dedup();
    v.len()
}

/// Design matrix for order `q`; needs at least `q + 1` distinct `mu` values.
pub fn design_matrix<T: Scalar>(mu: &[T], q: usize) -> Result<DesignMatrix<T>> {
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite { what: "heterogeneity" });
    }
    let distinct = distinct_count(mu);
    if distinct < q + 1 {
        return Err(Error::IllPosedRestriction {
            distinct,
            needed: q + 1,
        });
    }
    let cols = q + 1;
    let mut data = vec![T::zero(); mu.len() * cols];
    for (i, &m) in mu.iter().enumerate() {
        hermite_row(m, &mut data[i * cols..(i + 1) * cols]);
    }
    Ok(DesignMatrix {
        rows: mu.len(),
        cols,
        data,
    })
}

/// Thin Householder QR of a tall matrix, kept in compact form.
#[derive(Debug, Clone)]
pub struct HouseholderQr<T = f64> {
    rows: usize,
    cols: usize,
    /// Column-major; reflector `k` lives in rows `k..` of column `k`,
    /// the strict upper triangle holds `R`.
    packed: Vec<T>,
    tau: Vec<T>,
    diag: Vec<T>,
}

impl<T: Scalar> HouseholderQr<T> {
    pub fn new(m: &DesignMatrix<T>) -> Result<Self> {
        let (rows, cols) = (m.rows, m.cols);
        let mut packed = vec![T::zero(); rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                packed[j * rows + i] = m.get(i, j);
            }
        }
        let col_norms: Vec<T> = (0..cols)
            .map(|j| norm(&packed[j * rows..(j + 1) * rows]))
            .collect();
        let mut tau = vec![T::zero(); cols];
        let mut diag = vec![T::zero(); cols];
        let rank_tol = T::epsilon() * T::lit(1e3);
        for k in 0..cols {
            let (head, tail) = packed.split_at_mut((k + 1) * rows);
            let col = &mut head[k * rows + k..];
            let alpha_norm = norm(col);
            if !(alpha_norm > rank_tol * col_norms[k]) {
                return Err(Error::IllPosedRestriction {
                    distinct: k,
                    needed: cols,
                });
            }
            let alpha = if col[0] > T::zero() {
                -alpha_norm
            } else {
                alpha_norm
            };
            col[0] = col[0] - alpha;
            let vtv = col.iter().fold(T::zero(), |s, v| s + *v * *v);
            let t = T::lit(2.0) / vtv;
            tau[k] = t;
            diag[k] = alpha;
            for j in (k + 1)..cols {
                let target = &mut tail[(j - k - 1) * rows + k..(j - k) * rows];
                let dot = col.iter().zip(target.iter()).fold(T::zero(), |s, (a, b)| s + *a * *b);
                let f = t * dot;
                for (tv, cv) in target.iter_mut().zip(col.iter()) {
                    *tv = *tv - f * *cv;
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            packed,
            tau,
            diag,
        })
    }

    /// Least-squares coefficients for `rhs` and the residual sum of squares.
    pub fn solve(&self, rhs: &[T]) -> (Vec<T>, T) {
        let (rows, cols) = (self.rows, self.cols);
        let mut b = rhs.to_vec();
        for k in 0..cols {
            let v = &self.packed[k * rows + k..(k + 1) * rows];
            let seg = &mut b[k..];
            let dot = v.iter().zip(seg.iter()).fold(T::zero(), |s, (a, c)| s + *a * *c);
            let f = self.tau[k] * dot;
            for (sv, vv) in seg.iter_mut().zip(v) {
                *sv = *sv - f * *vv;
            }
        }
        let ssr = b[cols..].iter().fold(T::zero(), |s, v| s + *v * *v);
        let mut c = vec![T::zero(); cols];
        for k in (0..cols).rev() {
            let mut acc = b[k];
            for j in (k + 1)..cols {
                acc = acc - self.packed[j * rows + k] * c[j];
            }
            c[k] = acc / self.diag[k];
        }
        (c, ssr)
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    // scaled to avoid overflow for large Hermite values
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let s = v.iter().fold(T::zero(), |acc, x| {
        let r = *x / scale;
        acc + r * r
    });
    scale * s.sqrt()
}

/// Coarse state `Z = (a_0..a_q, b_0..b_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosCoeffs<T = f64> {
    pub a: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> ChaosCoeffs<T> {
    pub fn new(a: Vec<T>, b: Vec<T>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::Dimension {
                what: "chaos coefficients",
                expected: a.len().max(1),
                found: b.len(),
            });
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "chaos coefficients",
            });
        }
        Ok(Self { a, b })
    }

    pub fn zeros(q: usize) -> Self {
        Self {
            a: vec![T::zero(); q + 1],
            b: vec![T::zero(); q + 1],
        }
    }

    /// Only the mean terms set: every oscillator lifts to `(x, y)`.
    pub fn constant(x: T, y: T, q: usize) -> Self {
        let mut c = Self::zeros(q);
        c.a[0] = x;
        c.b[0] = y;
        c
    }

    pub fn q(&self) -> usize {
        self.a.len() - 1
    }

    /// Length `2 (q + 1)` of the flat vector.
    pub fn dim(&self) -> usize {
        2 * self.a.len()
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    pub fn from_flat(z: &[T]) -> Result<Self> {
        if z.is_empty() || z.len() % 2 != 0 {
            return Err(Error::Dimension {
                what: "flat coarse state",
                expected: z.len() + 1,
                found: z.len(),
            });
        }
        let h = z.len() / 2;
        Self::new(z[..h].to_vec(), z[h..].to_vec())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.a
            .iter()
            .zip(&other.a)
            .chain(self.b.iter().zip(&other.b))
            .fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs()))
    }
}

/// A realization together with its factored design matrix, reusable for
/// many lift/restrict calls.
#[derive(Debug, Clone)]
pub struct ChaosBasis<T = f64> {
    het: Heterogeneity<T>,
    design: DesignMatrix<T>,
    qr: HouseholderQr<T>,
}

impl<T: Scalar> ChaosBasis<T> {
    pub fn new(het: Heterogeneity<T>, q: usize) -> Result<Self> {
        let design = design_matrix(het.mu(), q)?;
        let qr = HouseholderQr::new(&design)?;
        Ok(Self { het, design, qr })
    }

    pub fn q(&self) -> usize {
        self.design.cols - 1
    }

    pub fn heterogeneity(&self) -> &Heterogeneity<T> {
        &self.het
    }

    pub fn design(&self) -> &DesignMatrix<T> {
        &self.design
    }

    fn check_q(&self, coeffs: &ChaosCoeffs<T>) -> Result<()> {
        if coeffs.a.len() != self.design.cols || coeffs.b.len() != self.design.cols {
            return Err(Error::Dimension {
                what: "chaos order",
                expected: self.design.cols,
                found: coeffs.a.len(),
            });
        }
        Ok(())
    }

    pub fn lift(&self, coeffs: &ChaosCoeffs<T>, t: T) -> Result<NetworkState<T>> {
        self.check_q(coeffs)?;
        let n = self.design.rows;
        let mut state = NetworkState {
            x: vec![T::zero(); n],
            y: vec![T::zero(); n],
            t,
        };
        self.design.apply(&coeffs.a, &mut state.x);
        self.design.apply(&coeffs.b, &mut state.y);
        Ok(state)
    }

    fn check_state(&self, state: &NetworkState<T>) -> Result<()> {
        if state.x.len() != self.design.rows || state.y.len() != self.design.rows {
            return Err(Error::Dimension {
                what: "state for restriction",
                expected: self.design.rows,
                found: state.x.len(),
            });
        }
        if !state.is_finite() {
            return Err(Error::NonFinite {
                what: "network state",
            });
        }
        Ok(())
    }

    pub fn restrict(&self, state: &NetworkState<T>) -> Result<ChaosCoeffs<T>> {
        self.check_state(state)?;
        let (a, _) = self.qr.solve(&state.x);
        let (b, _) = self.qr.solve(&state.y);
        Ok(ChaosCoeffs { a, b })
    }

    /// Normalized RMS residual of the x and y fits: RMS of the least-squares
    /// residual divided by the standard deviation of the data (0 for data in
    /// the model space, near 1 for data uncorrelated with `mu`; 0 for
    /// constant data).
    pub fn fit_residual(&self, state: &NetworkState<T>) -> Result<(T, T)> {
        self.check_state(state)?;
        let rel = |data: &[T]| {
            let n = T::from_usize_lossy(data.len());
            let mean = data.iter().copied().sum::<T>() / n;
            let var = data.iter().fold(T::zero(), |s, v| s + (*v - mean) * (*v - mean));
            if var == T::zero() {
                return T::zero();
            }
            let (_, ssr) = self.qr.solve(data);
            (ssr.max(T::zero()) / var).sqrt()
        };
        Ok((rel(&state.x), rel(&state.y)))
    }
}

pub fn restrict<T: Scalar>(
    state: &NetworkState<T>,
    het: &Heterogeneity<T>,
    q: usize,
) -> Result<ChaosCoeffs<T>> {
    ChaosBasis::new(het.clone(), q)?.restrict(state)
}

pub fn lift<T: Scalar>(
    coeffs: &ChaosCoeffs<T>,
    het: &Heterogeneity<T>,
    t: T,
) -> Result<NetworkState<T>> {
    ChaosBasis::new(het.clone(), coeffs.q())?.lift(coeffs, t)
}

pub fn fit_residual<T: Scalar>(
    state: &NetworkState<T>,
    het: &Heterogeneity<T>,
    q: usize,
) -> Result<(T, T)> {
    ChaosBasis::new(het.clone(), q)?.fit_residual(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_hermite_values() {
        assert_eq!(hermite_eval(0, 3.7), 1.0);
        assert_eq!(hermite_eval(1, 2.0), 4.0);
        assert_eq!(hermite_eval(2, 1.0), 2.0);
        // H_3 = 8z^3 - 12z, H_4 = 16z^4 - 48z^2 + 12
        assert_eq!(hermite_eval(3, 0.5), 1.0 - 6.0);
        assert_eq!(hermite_eval(4, 1.0), 16.0 - 48.0 + 12.0);
        let mut row = [0.0; 5];
        hermite_row(1.0, &mut row);
        assert_eq!(row, [1.0, 2.0, 2.0, -4.0, -20.0]);
    }

    #[test]
    fn design_rows() {
        let d = design_matrix(&[0.0, 1.0], 1).unwrap();
        assert_eq!(d.row(0), &[1.0, 0.0]);
        assert_eq!(d.row(1), &[1.0, 2.0]);
        let d0 = design_matrix(&[0.3, -1.0, 2.0], 0).unwrap();
        assert!((0..3).all(|i| d0.get(i, 0) == 1.0));
    }

    #[test]
    fn too_few_distinct_values() {
        let err = design_matrix(&[0.5, 0.5, 0.5], 1).unwrap_err();
        assert_eq!(err, Error::IllPosedRestriction { distinct: 1, needed: 2 });
        assert!(design_matrix(&[0.5, 0.5, 1.0], 1).is_ok());
    }

    #[test]
    fn constant_data() {
        let het = Heterogeneity::<f64>::standard_normal(50, 1);
        let s = NetworkState::uniform(50, 5.0, -2.0, 0.0);
        let c = restrict(&s, &het, 1).unwrap();
        assert!((c.a[0] - 5.0).abs() < 1e-13 && c.a[1].abs() < 1e-13);
        assert!((c.b[0] + 2.0).abs() < 1e-13 && c.b[1].abs() < 1e-13);
        assert_eq!(fit_residual(&s, &het, 1).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn data_in_model_space() {
        let het = Heterogeneity::<f64>::standard_normal(40, 2);
        let x: Vec<f64> = het.mu().iter().map(|&m| 3.0 - 0.5 * hermite_eval(1, m)).collect();
        let s = NetworkState { x: x.clone(), y: x, t: 0.0 };
        let c = restrict(&s, &het, 1).unwrap();
        assert!((c.a[0] - 3.0).abs() < 1e-14);
        assert!((c.a[1] + 0.5).abs() < 1e-14);
        let (rx, ry) = fit_residual(&s, &het, 1).unwrap();
        assert!(rx < 1e-12 && ry < 1e-12);
    }

    #[test]
    fn flat_layout() {
        let c = ChaosCoeffs::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(c.to_flat(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ChaosCoeffs::from_flat(&c.to_flat()).unwrap(), c);
        assert!(ChaosCoeffs::<f64>::from_flat(&[1.0, 2.0, 3.0]).is_err());
        assert!(ChaosCoeffs::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn order_mismatch_rejected() {
        let het = Heterogeneity::<f64>::standard_normal(10, 3);
        let basis = ChaosBasis::new(het, 2).unwrap();
        assert!(basis.lift(&ChaosCoeffs::zeros(1), 0.0).is_err());
    }

    #[test]
    fn single_precision_round_trip() {
        let het = Heterogeneity::<f32>::standard_normal(100, 4);
        let z = ChaosCoeffs::new(vec![0.5f32, -0.2, 0.05], vec![1.0, 0.3, -0.1]).unwrap();
        let back = restrict(&lift(&z, &het, 0.0).unwrap(), &het, 2).unwrap();
        assert!(back.max_abs_diff(&z) < 1e-5);
    }
}
