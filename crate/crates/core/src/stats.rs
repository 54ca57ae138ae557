//! Sample statistics shared by the estimators.

use serde::{Deserialize, Serialize};

use crate::rng::CompensatedSum;

/// Mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss = xs
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .collect::<CompensatedSum>()
        .value();
    (mean, ss / (n - 1) as f64)
}

/// Sample covariance of paired observations.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let (mx, _) = mean_var(&xs[..n]);
    let (my, _) = mean_var(&ys[..n]);
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect::<CompensatedSum>()
        .value()
        / (n - 1) as f64
}

/// Median of a sample (average of the middle pair for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let (mx, vx) = mean_var(&x[..n]);
    let (my, vy) = mean_var(&y[..n]);
    if !(vx > 0.0) {
        return None;
    }
    let cxy = covariance(&x[..n], &y[..n]);
    let slope = cxy / vx;
    let intercept = my - slope * mx;
    let r_squared = if vy > 0.0 {
        (cxy * cxy / (vx * vy)).min(1.0)
    } else {
        1.0
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
        points: n,
    })
}

/// Mean of `(v/scale)^r` and the variance of its terms.
pub fn scaled_power_mean(values: &[f64], r: f64, scale: f64) -> (f64, f64) {
    let terms: Vec<f64> = values.iter().map(|v| (v / scale).powf(r)).collect();
    mean_var(&terms)
}
