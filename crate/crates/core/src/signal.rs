//! Event detection on sampled scalar signals.

use crate::scalar::Scalar;

/// Linearly interpolated times at which `xs` crosses `level` upwards.
pub fn upward_crossings<T: Scalar>(ts: &[T], xs: &[T], level: T) -> Vec<T> {
    let mut out = Vec::new();
    for k in 1..xs.len().min(ts.len()) {
        let (a, b) = (xs[k - 1] - level, xs[k] - level);
        if a < T::zero() && b >= T::zero() {
            let frac = a / (a - b);
            out.push(ts[k - 1] + frac * (ts[k] - ts[k - 1]));
        }
    }
    out
}

/// Times of strict local maxima, refined by a parabola through the three
/// neighbouring samples. Assumes uniform sampling.
pub fn peak_times<T: Scalar>(ts: &[T], xs: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    let half = T::lit(0.5);
    for k in 1..xs.len().min(ts.len()).saturating_sub(1) {
        let (l, c, r) = (xs[k - 1], xs[k], xs[k + 1]);
        if c > l && c >= r {
            let denom = l - T::lit(2.0) * c + r;
            let shift = if denom != T::zero() {
                half * (l - r) / denom
            } else {
                T::zero()
            };
            let h = ts[k + 1] - ts[k];
            out.push(ts[k] + shift * h);
        }
    }
    out
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Median absolute deviation about the median.
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}
