//! Gaussian constants and Monte Carlo moments of `B_q(μ)` norms.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::measures::NormBody;
use crate::par::{map_indices, shard_lengths};
use crate::rng::{derive_seed, GaussianStream};
use crate::stats::{covariance, mean_var};

/// Minimum sample count accepted by the moment estimators.
pub const MIN_SAMPLES: usize = 1000;

pub const B_LOWER_RESTARTS: usize = 32;
pub const B_LOWER_STEPS: usize = 200;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
// ζ(2), …, ζ(11)
const ZETA: [f64; 10] = [
    1.644_934_066_848_226_4,
    1.202_056_903_159_594_3,
    1.082_323_233_711_138_2,
    1.036_927_755_143_37,
    1.017_343_061_984_449,
    1.008_349_277_381_922_8,
    1.004_077_356_197_944_3,
    1.002_008_392_826_082_2,
    1.000_994_575_127_818_1,
    1.000_494_188_604_119_5,
];
const SERIES_CUTOFF: f64 = 0.02;

/// `ψ^{(j)}(1/2)`.
fn polygamma_half(j: usize) -> f64 {
    if j == 0 {
        return -EULER_GAMMA - 2.0 * std::f64::consts::LN_2;
    }
    let fact: f64 = (1..=j).map(|k| k as f64).product();
    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
    sign * fact * (2f64.powi(j as i32 + 1) - 1.0) * ZETA[j - 1]
}

/// `σ_p = (E|g_1|^p)^{1/p} = (2^{p/2} Γ((p+1)/2) / √π)^{1/p}`, with
/// `σ_0 = exp(E log|g_1|)`.
pub fn sigma_p(p: f64) -> Result<f64> {
    if !(p >= 0.0) || !p.is_finite() {
        return Err(Error::Domain(format!("sigma_p needs p >= 0, got {p}")));
    }
    if p == 2.0 {
        return Ok(1.0);
    }
    let ln_sigma = if p < SERIES_CUTOFF {
        // log Γ(1/2 + h) − log Γ(1/2) expanded in h = p/2
        let h = 0.5 * p;
        let mut acc = 0.5 * std::f64::consts::LN_2;
        let mut hp = 1.0;
        let mut fact = 1.0;
        for k in 1..=ZETA.len() + 1 {
            fact *= k as f64;
            acc += polygamma_half(k - 1) * hp / (2.0 * fact);
            hp *= h;
        }
        acc
    } else {
        let ln_pi = std::f64::consts::PI.ln();
        (0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (p + 1.0)) - 0.5 * ln_pi) / p
    };
    Ok(ln_sigma.exp())
}

/// `E|g_1|^p = σ_p^p`.
pub fn gaussian_abs_moment(p: f64) -> Result<f64> {
    if p == 0.0 {
        return Ok(1.0);
    }
    Ok((p * sigma_p(p)?.ln()).exp())
}

/// Monte Carlo estimate of `I_r = (E‖X‖^r)^{1/r}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_err: f64,
    pub samples: usize,
    pub r: f64,
    pub seed: u64,
}

/// Runs `f` once per sample on sharded streams and returns the outputs in
/// sample order. `f` receives its shard's stream and a scratch buffer.
pub(crate) fn sharded_samples<T, F>(samples: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut GaussianStream, &mut Vec<f64>) -> T + Sync + Send,
{
    let lengths = shard_lengths(samples);
    map_indices(lengths.len(), |s| {
        let mut g = GaussianStream::new(seed, s as u64);
        let mut scratch = Vec::new();
        (0..lengths[s]).map(|_| f(&mut g, &mut scratch)).collect::<Vec<T>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// `‖X_j‖_{B_q(μ)}` for `samples` independent standard Gaussian `X_j`.
pub fn sample_norms(body: &NormBody, samples: usize, seed: u64) -> Vec<f64> {
    let n = body.dim();
    sharded_samples(samples, seed, |g, x| {
        x.resize(n, 0.0);
        g.fill_gaussian(x);
        body.norm_unchecked(x)
    })
}

/// Reference scale `(σ_q^q n)^{1/q}`, the exact `I_q` of any isotropic body.
pub fn closed_form_iq(body: &NormBody) -> Result<f64> {
    let q = body.q();
    Ok(sigma_p(q)? * (body.dim() as f64).powf(1.0 / q))
}

/// `I_r` from precomputed norms. Terms are rescaled by `scale` before the
/// `r`-th power to stay inside double range; the standard error is the
/// delta-method image of the sample variance of `‖X‖^r`.
pub fn moment_from_norms(norms: &[f64], r: f64, scale: f64, seed: u64) -> Result<MomentEstimate> {
    if norms.len() < 2 {
        return Err(Error::Domain("need at least two samples".into()));
    }
    if norms.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("norm sample is not finite".into()));
    }
    let terms: Vec<f64> = norms.iter().map(|v| (v / scale).powf(r)).collect();
    let (mean, var) = mean_var(&terms);
    if !mean.is_finite() || !var.is_finite() {
        return Err(Error::NonFinite(format!(
            "moment of order {r} overflowed after rescaling"
        )));
    }
    let n = norms.len() as f64;
    let value = scale * mean.powf(1.0 / r);
    let se_mean = (var / n).sqrt();
    let std_err = if mean > 0.0 {
        scale * mean.powf(1.0 / r - 1.0) * se_mean / r
    } else {
        0.0
    };
    Ok(MomentEstimate {
        value,
        std_err,
        samples: norms.len(),
        r,
        seed,
    })
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < MIN_SAMPLES {
        return Err(Error::Domain(format!(
            "moment estimators need at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    Ok(())
}

/// Monte Carlo `I_r(γ_n, B_q(μ))`.
pub fn gaussian_moment(body: &NormBody, r: f64, samples: usize, seed: u64) -> Result<MomentEstimate> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::Domain(format!("moment order must be >= 1, got {r}")));
    }
    check_samples(samples)?;
    let norms = sample_norms(body, samples, seed);
    moment_from_norms(&norms, r, closed_form_iq(body)?, seed)
}

/// Delta-method standard error of `m1^{1/a} / m2^{1/b}` where `m1`, `m2`
/// are means of paired terms.
fn ratio_std_err(t1: &[f64], t2: &[f64], a: f64, b: f64) -> (f64, f64) {
    let (m1, v1) = mean_var(t1);
    let (m2, v2) = mean_var(t2);
    let c12 = covariance(t1, t2);
    let ratio = m1.powf(1.0 / a) / m2.powf(1.0 / b);
    let g1 = ratio / (a * m1);
    let g2 = -ratio / (b * m2);
    let var = (g1 * g1 * v1 + g2 * g2 * v2 + 2.0 * g1 * g2 * c12) / t1.len() as f64;
    (ratio, var.max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRatioCheck {
    pub q: f64,
    pub r: f64,
    /// Monte Carlo `I_{rq} / I_q`.
    pub lhs: f64,
    pub lhs_std_err: f64,
    /// `√(1 + q(r−1) / (σ_q² n^{2/q}))`.
    pub rhs: f64,
    pub pass: bool,
    pub samples: usize,
    pub seed: u64,
}

/// `√(1 + q(r−1)/(σ_q² n^{2/q}))`.
pub fn moment_ratio_bound(n: usize, q: f64, r: f64) -> Result<f64> {
    let s = sigma_p(q)?;
    Ok((1.0 + q * (r - 1.0) / (s * s * (n as f64).powf(2.0 / q))).sqrt())
}

/// Compares `I_{rq}/I_q` with its log-Sobolev bound on shared samples.
pub fn moment_ratio_check(body: &NormBody, r: f64, samples: usize, seed: u64) -> Result<MomentRatioCheck> {
    let q = body.q();
    if q < 2.0 {
        return Err(Error::Regime(format!("moment ratio bound needs q >= 2, got {q}")));
    }
    if !(r >= 1.0) {
        return Err(Error::Domain(format!("r must be >= 1, got {r}")));
    }
    check_samples(samples)?;
    let norms = sample_norms(body, samples, seed);
    moment_ratio_from_norms(body, &norms, r, seed)
}

pub fn moment_ratio_from_norms(body: &NormBody, norms: &[f64], r: f64, seed: u64) -> Result<MomentRatioCheck> {
    let q = body.q();
    let scale = closed_form_iq(body)?;
    let t_hi: Vec<f64> = norms.iter().map(|v| (v / scale).powf(r * q)).collect();
    let t_lo: Vec<f64> = norms.iter().map(|v| (v / scale).powf(q)).collect();
    let (lhs, lhs_std_err) = if r == 1.0 {
        (1.0, 0.0)
    } else {
        ratio_std_err(&t_hi, &t_lo, r * q, q)
    };
    if !lhs.is_finite() {
        return Err(Error::NonFinite("moment ratio overflowed".into()));
    }
    let rhs = moment_ratio_bound(body.dim(), q, r)?;
    Ok(MomentRatioCheck {
        q,
        r,
        lhs,
        lhs_std_err,
        rhs,
        pass: lhs <= rhs + 3.0 * lhs_std_err,
        samples: norms.len(),
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BRegime {
    /// The ascent attained the upper bound.
    ExactB,
    /// Only `b_lower ≤ b ≤ b_upper` is known.
    BoundedB,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalDimensionReport {
    /// `E‖g‖² / b_upper²`.
    pub k_hat: f64,
    /// `E‖g‖² / b_lower²`.
    pub k_hat_at_b_lower: f64,
    pub mean_sq: MomentEstimate,
    pub b_upper: f64,
    pub b_lower: f64,
    pub regime: BRegime,
}

/// Heuristic lower estimate of `b = max_{θ ∈ S^{n-1}} ‖θ‖`: projected
/// gradient ascent from random starts plus the heaviest atoms.
pub fn b_lower_estimate(body: &NormBody, seed: u64) -> Result<f64> {
    let n = body.dim();
    let q = body.q();
    let step = 0.1 / (n as f64).sqrt();
    let compact = body.measure().compact();
    let mut by_mass: Vec<usize> = (0..compact.len()).collect();
    by_mass.sort_by(|a, b| compact.masses()[*b].total_cmp(&compact.masses()[*a]).then(a.cmp(b)));
    let mut best: f64 = 0.0;
    for &i in by_mass.iter().take(B_LOWER_RESTARTS) {
        best = best.max(body.norm(&compact.atom(i))?);
    }
    let starts: Vec<f64> = map_indices(B_LOWER_RESTARTS, |s| {
        let mut g = GaussianStream::new(derive_seed(seed, 0xb10e), s as u64);
        let mut theta = g.unit_vector(n);
        let mut local = body.norm_unchecked(&theta);
        for _ in 0..B_LOWER_STEPS {
            let value = body.norm_unchecked(&theta);
            if value <= 0.0 {
                break;
            }
            let grad = body.norm_pow_gradient_unchecked(&theta);
            let denom = q * value.powf(q - 1.0);
            for (t, gr) in theta.iter_mut().zip(&grad) {
                *t += step * gr / denom;
            }
            let len = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            theta.iter_mut().for_each(|v| *v /= len);
            local = local.max(body.norm_unchecked(&theta));
        }
        local
    });
    Ok(starts.into_iter().fold(best, f64::max))
}

/// Critical dimension `k(X) = E‖g‖² / b(X)²` of `B_q(μ)` for `q ≥ 2`,
/// where `b(X) ≤ 1`.
pub fn critical_dimension(body: &NormBody, samples: usize, seed: u64) -> Result<CriticalDimensionReport> {
    if body.q() < 2.0 {
        return Err(Error::Regime(format!(
            "b(X) <= 1 only holds for q >= 2, got q = {}",
            body.q()
        )));
    }
    let mean_sq = gaussian_moment(body, 2.0, samples, seed)?;
    let b_upper = 1.0;
    let b_lower = b_lower_estimate(body, seed)?.min(b_upper);
    let e2 = mean_sq.value * mean_sq.value;
    let regime = if b_lower >= b_upper * (1.0 - 1e-9) {
        BRegime::ExactB
    } else {
        BRegime::BoundedB
    };
    Ok(CriticalDimensionReport {
        k_hat: e2 / (b_upper * b_upper),
        k_hat_at_b_lower: e2 / (b_lower * b_lower),
        mean_sq,
        b_upper,
        b_lower,
        regime,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSobolevRow {
    pub q: f64,
    /// Monte Carlo `‖f‖_{L_q} / ‖f‖_{L_2}`.
    pub lhs: f64,
    pub lhs_std_err: f64,
    /// `√(1 + (q−2)/k(f))` with `k(f) = ‖f‖_{L_2}²`.
    pub rhs: f64,
    pub k_f: f64,
    pub pass: bool,
}

/// Moment growth of `f = ‖·‖_{B_p(μ)}` (1-Lipschitz for `p ≥ 2`) under
/// the Gaussian measure against the log-Sobolev bound with `ρ = 1`.
pub fn logsob_moment_growth_check(
    body: &NormBody,
    q_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<LogSobolevRow>> {
    if body.q() < 2.0 {
        return Err(Error::Regime("f must be 1-Lipschitz: need p >= 2".into()));
    }
    if let Some(q) = q_grid.iter().find(|q| !(**q >= 2.0)) {
        return Err(Error::Domain(format!("moment orders must be >= 2, got {q}")));
    }
    check_samples(samples)?;
    let norms = sample_norms(body, samples, seed);
    let scale = closed_form_iq(body)?;
    let i2 = moment_from_norms(&norms, 2.0, scale, seed)?;
    let k_f = i2.value * i2.value;
    let t2: Vec<f64> = norms.iter().map(|v| (v / scale).powi(2)).collect();
    q_grid
        .iter()
        .map(|&q| {
            let (lhs, lhs_std_err) = if q == 2.0 {
                (1.0, 0.0)
            } else {
                let tq: Vec<f64> = norms.iter().map(|v| (v / scale).powf(q)).collect();
                ratio_std_err(&tq, &t2, q, 2.0)
            };
            let rhs = (1.0 + (q - 2.0) / k_f).sqrt();
            Ok(LogSobolevRow {
                q,
                lhs,
                lhs_std_err,
                rhs,
                k_f,
                pass: lhs <= rhs + 3.0 * lhs_std_err,
            })
        })
        .collect()
}
