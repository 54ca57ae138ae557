//! Deviation of `‖X‖_{B_p(μ)}` under the Gaussian measure: the two-level
//! rate `ψ`, the moment-growth factor `α`, empirical tail profiles and the
//! moment, gradient and variance checks built on them.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gaussian::{closed_form_iq, sample_norms, sharded_samples, sigma_p};
use crate::lewis::{lewis_position, SubspaceSpec, DEFAULT_FP_TOL, DEFAULT_MAX_ITER};
use crate::measures::NormBody;
use crate::rng::derive_seed;
use crate::stats::{linear_fit, mean_var, median, LinearFit};

/// Cells with fewer hits than this are censored.
pub const CENSOR_COUNT: usize = 10;
/// Minimum hit count for the Gaussian baseline comparison.
pub const BASELINE_MIN_COUNT: usize = 20;
pub const BASELINE_LOG_C: f64 = std::f64::consts::LN_2 * 2.0;
const WILSON_Z: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `t² n / (p 4^p)`
    Quadratic,
    /// `(t n)^{2/p}`
    Power,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiValue {
    pub value: f64,
    pub branch: Branch,
    pub crossover: f64,
}

/// `ψ(n, p, t) = min{t² n / (p 4^p), (t n)^{2/p}}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiFunction {
    pub n: usize,
    pub p: f64,
}

impl PsiFunction {
    pub fn new(n: usize, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("psi needs n >= 1".into()));
        }
        if !(p > 2.0) || !p.is_finite() {
            return Err(Error::Domain(format!("psi needs p > 2, got {p}")));
        }
        Ok(Self { n, p })
    }

    fn log_quadratic_denominator(&self) -> f64 {
        self.p.ln() + self.p * 4f64.ln()
    }

    pub fn quadratic(&self, t: f64) -> f64 {
        (2.0 * t.ln() + (self.n as f64).ln() - self.log_quadratic_denominator()).exp()
    }

    pub fn power(&self, t: f64) -> f64 {
        (t * self.n as f64).powf(2.0 / self.p)
    }

    /// The `t*` where both branches agree; the quadratic branch is active
    /// below it.
    pub fn crossover(&self) -> f64 {
        let p = self.p;
        let log_rhs = self.log_quadratic_denominator() + (2.0 / p - 1.0) * (self.n as f64).ln();
        (log_rhs * p / (2.0 * p - 2.0)).exp()
    }

    pub fn eval(&self, t: f64) -> Result<PsiValue> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("psi needs t > 0, got {t}")));
        }
        let a = self.quadratic(t);
        let b = self.power(t);
        let (value, branch) = if a <= b {
            (a, Branch::Quadratic)
        } else {
            (b, Branch::Power)
        };
        Ok(PsiValue {
            value,
            branch,
            crossover: self.crossover(),
        })
    }
}

pub fn psi(n: usize, p: f64, t: f64) -> Result<PsiValue> {
    PsiFunction::new(n, p)?.eval(t)
}

fn alpha_constant(n: usize, p: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidDimension("alpha needs n >= 1".into()));
    }
    if !(p > 1.0) {
        return Err(Error::Domain(format!("alpha needs p > 1, got {p}")));
    }
    let s = sigma_p(2.0 * p - 2.0)?;
    Ok(((p - 1.0) / (s * s)).powf(0.5 * (p - 1.0)) / (n as f64).sqrt())
}

/// `α(n, p, r) = max{√r, r^{p/2} (p−1)^{(p−1)/2} / (σ_{2p−2}^{p−1} √n)}`.
pub fn alpha(n: usize, p: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("alpha needs r > 0, got {r}")));
    }
    let k = alpha_constant(n, p)?;
    Ok(r.sqrt().max(r.powf(0.5 * p) * k))
}

/// `α^{-1}(n, p, s) = min{s², s^{2/p} n^{1/p} σ_{2p−2}^{(2p−2)/p} / (p−1)^{(p−1)/p}}`.
pub fn alpha_inverse(n: usize, p: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("alpha inverse needs s > 0, got {s}")));
    }
    let sig = sigma_p(2.0 * p - 2.0)?;
    let nf = n as f64;
    let second = s.powf(2.0 / p) * nf.powf(1.0 / p) * sig.powf((2.0 * p - 2.0) / p) / (p - 1.0).powf((p - 1.0) / p);
    Ok((s * s).min(second))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Center {
    /// `(E‖X‖^p)^{1/p}`
    PMean,
    Median,
    Mean,
}

impl Center {
    pub fn as_str(self) -> &'static str {
        match self {
            Center::PMean => "p-mean",
            Center::Median => "median",
            Center::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Center {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p-mean" | "pmean" => Ok(Center::PMean),
            "median" => Ok(Center::Median),
            "mean" => Ok(Center::Mean),
            other => Err(Error::Domain(format!(
                "unknown center '{other}' (expected p-mean, median or mean)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCell {
    pub eps: f64,
    /// Empirical `P(|‖X‖ − c| ≥ ε c)`.
    pub tail: f64,
    /// Binomial standard error.
    pub std_err: f64,
    pub count: u64,
    /// Fewer than [`CENSOR_COUNT`] hits: only `upper_ci` is meaningful.
    pub censored: bool,
    /// One-sided 97.5% Wilson upper bound.
    pub upper_ci: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    pub n: usize,
    pub p: f64,
    pub center: Center,
    pub center_value: f64,
    pub cells: Vec<TailCell>,
    pub samples: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl TailProfile {
    pub fn eps_grid(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.eps).collect()
    }

    /// Tails made nonincreasing in `ε` (running minimum in `ε` order), for
    /// display. The raw cells are untouched.
    pub fn monotone_tails(&self) -> Vec<f64> {
        let mut order: Vec<usize> = (0..self.cells.len()).collect();
        order.sort_by(|a, b| self.cells[*a].eps.total_cmp(&self.cells[*b].eps));
        let mut out = vec![0.0; self.cells.len()];
        let mut running = 1.0f64;
        for i in order {
            running = running.min(self.cells[i].tail);
            out[i] = running;
        }
        out
    }
}

fn wilson_upper(count: u64, total: usize) -> f64 {
    let n = total as f64;
    let phat = count as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let centre = phat + z2 / (2.0 * n);
    let half = WILSON_Z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre + half) / (1.0 + z2 / n)).min(1.0)
}

/// Number of entries of the sorted slice that are `≥ threshold`.
fn count_at_least(sorted: &[f64], threshold: f64) -> u64 {
    (sorted.len() - sorted.partition_point(|v| *v < threshold)) as u64
}

fn tail_cell(sorted_dev: &[f64], eps: f64, scale: f64) -> TailCell {
    let total = sorted_dev.len();
    let count = count_at_least(sorted_dev, eps * scale);
    let tail = count as f64 / total as f64;
    TailCell {
        eps,
        tail,
        std_err: (tail * (1.0 - tail) / total as f64).sqrt(),
        count,
        censored: (count as usize) < CENSOR_COUNT,
        upper_ci: wilson_upper(count, total),
    }
}

fn check_eps(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() {
        return Err(Error::Domain("empty deviation grid".into()));
    }
    if let Some(e) = eps_grid.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(Error::Domain(format!("deviation levels must be >= 0, got {e}")));
    }
    Ok(())
}

fn center_of(norms: &[f64], center: Center, p: f64, scale: f64) -> f64 {
    match center {
        Center::PMean => {
            let terms: Vec<f64> = norms.iter().map(|v| (v / scale).powf(p)).collect();
            scale * mean_var(&terms).0.powf(1.0 / p)
        }
        Center::Median => median(norms),
        Center::Mean => mean_var(norms).0,
    }
}

/// Empirical tail profile from precomputed norms.
pub fn tail_profile_from_norms(
    body: &NormBody,
    norms: &[f64],
    eps_grid: &[f64],
    center: Center,
    seed: u64,
) -> Result<TailProfile> {
    let p = body.q();
    if !(p > 2.0) {
        return Err(Error::Domain(format!("tail profiles need p > 2, got {p}")));
    }
    check_eps(eps_grid)?;
    if norms.len() < 2 {
        return Err(Error::Domain("tail profile needs at least two samples".into()));
    }
    let n = body.dim();
    let mut warnings = Vec::new();
    if (n as f64) <= p.exp() {
        warnings.push(format!(
            "n = {n} does not exceed e^p = {:.1}; the two-level rate is only claimed for larger n",
            p.exp()
        ));
    }
    let c = center_of(norms, center, p, closed_form_iq(body)?);
    let mut dev: Vec<f64> = norms.iter().map(|v| (v - c).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let cells = eps_grid.iter().map(|&e| tail_cell(&dev, e, c)).collect();
    Ok(TailProfile {
        n,
        p,
        center,
        center_value: c,
        cells,
        samples: norms.len(),
        seed,
        warnings,
    })
}

/// Empirical `P(|‖X‖ − c| ≥ ε c)` over `eps_grid` for standard Gaussian `X`.
pub fn tail_profile(
    body: &NormBody,
    eps_grid: &[f64],
    samples: usize,
    seed: u64,
    center: Center,
) -> Result<TailProfile> {
    check_eps(eps_grid)?;
    let norms = sample_norms(body, samples, seed);
    tail_profile_from_norms(body, &norms, eps_grid, center, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitRule {
    /// Split at `t*(n, p)`, which lies inside the resolved range.
    Crossover,
    /// `t*` is outside the resolved range; split at the geometric midpoint
    /// of the resolved levels.
    GeometricMidpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    /// `"eps^2"` or `"eps^(2/p)"`.
    pub regressor: String,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub fit: LinearFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelFit {
    pub crossover: f64,
    pub split_eps: f64,
    pub split_rule: SplitRule,
    pub small: Option<WindowFit>,
    pub large: Option<WindowFit>,
}

fn window_fit(points: &[(f64, f64)], power: f64, regressor: &str) -> Option<WindowFit> {
    if points.len() < 3 {
        return None;
    }
    let x: Vec<f64> = points.iter().map(|(e, _)| e.powf(power)).collect();
    let y: Vec<f64> = points.iter().map(|(_, l)| *l).collect();
    Some(WindowFit {
        regressor: regressor.to_string(),
        eps_lo: points.first()?.0,
        eps_hi: points.last()?.0,
        fit: linear_fit(&x, &y)?,
    })
}

/// Regresses `−log tail` on `ε²` below the split and on `ε^{2/p}` above
/// it, using uncensored cells with `ε > 0` only.
pub fn two_level_fit(profile: &TailProfile) -> Result<TwoLevelFit> {
    let psi = PsiFunction::new(profile.n, profile.p)?;
    let mut pts: Vec<(f64, f64)> = profile
        .cells
        .iter()
        .filter(|c| !c.censored && c.eps > 0.0 && c.tail > 0.0)
        .map(|c| (c.eps, -c.tail.ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let crossover = psi.crossover();
    let (split_eps, split_rule) = match (pts.first(), pts.last()) {
        (Some(lo), Some(hi)) if crossover > lo.0 && crossover < hi.0 => (crossover, SplitRule::Crossover),
        (Some(lo), Some(hi)) => ((lo.0 * hi.0).sqrt(), SplitRule::GeometricMidpoint),
        _ => (crossover, SplitRule::Crossover),
    };
    let small: Vec<(f64, f64)> = pts.iter().copied().filter(|(e, _)| *e <= split_eps).collect();
    let large: Vec<(f64, f64)> = pts.iter().copied().filter(|(e, _)| *e > split_eps).collect();
    Ok(TwoLevelFit {
        crossover,
        split_eps,
        split_rule,
        small: window_fit(&small, 2.0, "eps^2"),
        large: window_fit(&large, 2.0 / profile.p, "eps^(2/p)"),
    })
}

/// Samples `(‖X‖, ‖cX + sY‖)` with `c = ⟨a,b⟩`, `s = √(1 − c²)`, which has
/// the law of `(‖Ga‖, ‖Gb‖)` for an `n×k` standard Gaussian `G`.
fn correlated_pair_values<T, F>(
    body: &NormBody,
    a: &[f64],
    b: &[f64],
    samples: usize,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&NormBody, &[f64], &[f64]) -> T + Sync + Send,
{
    let (c, s) = pair_geometry(a, b)?;
    let n = body.dim();
    Ok(sharded_samples(samples, seed, |g, buf| {
        buf.resize(2 * n, 0.0);
        g.fill_gaussian(buf);
        let (x, y) = buf.split_at_mut(n);
        for (yi, xi) in y.iter_mut().zip(x.iter()) {
            *yi = if s == 0.0 { c * xi } else { c * xi + s * *yi };
        }
        f(body, x, y)
    }))
}

fn pair_geometry(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    for (name, v) in [("a", a), ("b", b)] {
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (len - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("{name} must be a unit vector, has norm {len}")));
        }
    }
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0);
    let s = if a == b || a.iter().zip(b).all(|(x, y)| *x == -*y) {
        0.0
    } else {
        (1.0 - c * c).max(0.0).sqrt()
    };
    let c = if s == 0.0 { c.signum() } else { c };
    Ok((c, s))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentInequalityRow {
    pub n: usize,
    pub p: f64,
    pub r: f64,
    /// `(E|‖Ga‖^p − ‖Gb‖^p|^r)^{1/r}`.
    pub lhs: f64,
    pub lhs_std_err: f64,
    /// `‖a−b‖₂ σ_{2p−2}^{p−1} √n 2^{(p−1)/2} α(n, p, r)`.
    pub normalizer: f64,
    pub ratio: f64,
    pub ratio_std_err: f64,
}

/// `(E|‖Ga‖^p − ‖Gb‖^p|^r)^{1/r}` for each `r`, on shared samples.
pub fn pair_difference_moments(
    body: &NormBody,
    a: &[f64],
    b: &[f64],
    r_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let p = body.q();
    let diffs = correlated_pair_values(body, a, b, samples, seed, |bd, x, y| {
        (bd.norm_pow_unchecked(x) - bd.norm_pow_unchecked(y)).abs()
    })?;
    let sig = sigma_p(2.0 * p - 2.0)?;
    let scale = sig.powf(p - 1.0) * (body.dim() as f64).sqrt();
    let total = diffs.len() as f64;
    r_grid
        .iter()
        .map(|&r| {
            if !(r >= 1.0) {
                return Err(Error::Domain(format!("r must be >= 1, got {r}")));
            }
            let terms: Vec<f64> = diffs.iter().map(|d| (d / scale).powf(r)).collect();
            let (m, v) = mean_var(&terms);
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("moment of order {r} overflowed")));
            }
            if m == 0.0 {
                return Ok((0.0, 0.0));
            }
            let value = scale * m.powf(1.0 / r);
            let se = scale * m.powf(1.0 / r - 1.0) * (v / total).sqrt() / r;
            Ok((value, se))
        })
        .collect()
}

/// Moment growth of `‖Ga‖^p − ‖Gb‖^p` for orthogonal unit `a, b`,
/// normalized by the predicted order `‖a−b‖₂ σ_{2p−2}^{p−1} √n 2^{(p−1)/2} α`.
pub fn moment_inequality_check(
    body: &NormBody,
    r_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<MomentInequalityRow>> {
    let p = body.q();
    if !(p > 1.0) {
        return Err(Error::Domain(format!("moment inequality needs p > 1, got {p}")));
    }
    if let Some(r) = r_grid.iter().find(|r| !(**r >= 2.0)) {
        return Err(Error::Domain(format!("moment inequality needs r >= 2, got {r}")));
    }
    let a = [1.0, 0.0];
    let b = [0.0, 1.0];
    let moments = pair_difference_moments(body, &a, &b, r_grid, samples, seed)?;
    let n = body.dim();
    let base = dist(&a, &b) * sigma_p(2.0 * p - 2.0)?.powf(p - 1.0) * (n as f64).sqrt() * 2f64.powf(0.5 * (p - 1.0));
    r_grid
        .iter()
        .zip(moments)
        .map(|(&r, (lhs, se))| {
            let normalizer = base * alpha(n, p, r)?;
            Ok(MomentInequalityRow {
                n,
                p,
                r,
                lhs,
                lhs_std_err: se,
                normalizer,
                ratio: lhs / normalizer,
                ratio_std_err: se / normalizer,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentInequalityTable {
    pub rows: Vec<MomentInequalityRow>,
    /// Largest ratio observed: the calibrated constant `C`.
    pub c_calibrated: f64,
    /// For each `r`, no ratio exceeds twice the ratio at the smallest `n`.
    pub bounded: bool,
}

/// Runs [`moment_inequality_check`] for several bodies (an `n` grid) and
/// calibrates the constant.
pub fn moment_inequality_table(
    bodies: &[NormBody],
    r_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<MomentInequalityTable> {
    let mut rows = Vec::new();
    for (i, body) in bodies.iter().enumerate() {
        rows.extend(moment_inequality_check(
            body,
            r_grid,
            samples,
            derive_seed(seed, i as u64),
        )?);
    }
    let c_calibrated = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let bounded = rows.iter().all(|r| r.ratio.is_finite())
        && r_grid.iter().all(|&r| {
            let same: Vec<&MomentInequalityRow> = rows.iter().filter(|x| x.r == r).collect();
            match same.iter().min_by_key(|x| x.n) {
                Some(first) => same.iter().all(|x| x.ratio <= 2.0 * first.ratio),
                None => true,
            }
        });
    Ok(MomentInequalityTable {
        rows,
        c_calibrated,
        bounded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PisierCheck {
    /// `E(f(Ga) − f(Gb))²` with `f = ‖·‖^p`.
    pub lhs: f64,
    pub lhs_std_err: f64,
    /// `(π²/4) ‖a−b‖₂² E‖∇f(X)‖₂²`.
    pub rhs: f64,
    pub rhs_std_err: f64,
    pub distance: f64,
    pub pass: bool,
    pub samples: usize,
    pub seed: u64,
}

/// Second-moment comparison for `f = ‖·‖_{B_p(μ)}^p` between `f(Ga) − f(Gb)`
/// and the gradient energy.
pub fn pisier_r2_check(body: &NormBody, a: &[f64], b: &[f64], samples: usize, seed: u64) -> Result<PisierCheck> {
    if !(body.q() > 1.0) {
        return Err(Error::UnsupportedExponent {
            exponent: body.q(),
            reason: "gradient of the p-th power needs p > 1",
        });
    }
    let values = correlated_pair_values(body, a, b, samples, seed, |bd, x, y| {
        let d = bd.norm_pow_unchecked(x) - bd.norm_pow_unchecked(y);
        let g = bd.norm_pow_gradient_unchecked(x);
        (d * d, g.iter().map(|v| v * v).sum::<f64>())
    })?;
    let sq: Vec<f64> = values.iter().map(|v| v.0).collect();
    let grad: Vec<f64> = values.iter().map(|v| v.1).collect();
    let total = values.len() as f64;
    let (lhs, lv) = mean_var(&sq);
    let (ge, gv) = mean_var(&grad);
    let distance = dist(a, b);
    let factor = std::f64::consts::PI.powi(2) / 4.0 * distance * distance;
    let lhs_std_err = (lv / total).sqrt();
    let rhs_std_err = factor * (gv / total).sqrt();
    let rhs = factor * ge;
    Ok(PisierCheck {
        lhs,
        lhs_std_err,
        rhs,
        rhs_std_err,
        distance,
        pass: lhs <= rhs + 3.0 * lhs_std_err.hypot(rhs_std_err),
        samples: values.len(),
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub n: usize,
    pub var_hat: f64,
    pub var_std_err: f64,
    /// `var_hat · n^{1 − 2/p}`.
    pub scaled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceBoundReport {
    pub p: f64,
    pub rows: Vec<VarianceRow>,
    /// Every scaled value is at most twice the one at the smallest `n`.
    pub bounded: bool,
}

/// Sample variance and its standard error.
fn variance_with_err(xs: &[f64]) -> (f64, f64) {
    let (m, v) = mean_var(xs);
    let n = xs.len() as f64;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let se = ((m4 - v * v * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (v, se)
}

/// `Var ‖g‖_{B_p(μ)}` for each spec after moving it to Lewis position.
pub fn variance_bound_check(specs: &[SubspaceSpec], samples: usize, seed: u64) -> Result<VarianceBoundReport> {
    let Some(first) = specs.first() else {
        return Err(Error::Domain("variance check needs at least one spec".into()));
    };
    let p = first.p();
    if !(p >= 2.0) {
        return Err(Error::Regime(format!("variance bound needs p >= 2, got {p}")));
    }
    if specs.iter().any(|s| s.p() != p) {
        return Err(Error::Domain("all specs must share the exponent".into()));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let pos = lewis_position(spec, DEFAULT_FP_TOL, DEFAULT_MAX_ITER)?;
        let body = NormBody::new(pos.measure, p)?;
        let norms = sample_norms(&body, samples, derive_seed(seed, i as u64));
        let (var_hat, var_std_err) = variance_with_err(&norms);
        let n = body.dim();
        rows.push(VarianceRow {
            n,
            var_hat,
            var_std_err,
            scaled: var_hat * (n as f64).powf(1.0 - 2.0 / p),
        });
    }
    let mut by_n: Vec<&VarianceRow> = rows.iter().collect();
    by_n.sort_by_key(|r| r.n);
    let base = by_n[0].scaled;
    let bounded = rows.iter().all(|r| r.scaled.is_finite() && r.scaled <= 2.0 * base);
    Ok(VarianceBoundReport { p, rows, bounded })
}

/// `Var ‖g‖₂ = n − 2 (Γ((n+1)/2) / Γ(n/2))²` for `g ~ N(0, I_n)`.
pub fn chi_variance(n: usize) -> f64 {
    let nf = n as f64;
    let ratio = (ln_gamma(0.5 * (nf + 1.0)) - ln_gamma(0.5 * nf)).exp();
    nf - 2.0 * ratio * ratio
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub t: f64,
    pub tail: f64,
    pub count: u64,
    /// `−log tail`.
    pub neg_log_tail: f64,
    /// `t²/4 − log 4`.
    pub bound: f64,
    /// Whether the row has enough hits to be compared.
    pub checked: bool,
    pub pass: bool,
}

/// Tails of `|‖X‖ − ‖Y‖|` for independent Gaussians against
/// `exp(−t²/4)` with constant 4 (the norm is 1-Lipschitz for `p ≥ 2`).
pub fn gaussian_baseline_check(body: &NormBody, t_grid: &[f64], samples: usize, seed: u64) -> Result<Vec<BaselineRow>> {
    if body.q() < 2.0 {
        return Err(Error::Regime("the norm is 1-Lipschitz only for p >= 2".into()));
    }
    check_eps(t_grid)?;
    let norms = sample_norms(body, 2 * samples, seed);
    let mut dev: Vec<f64> = norms.chunks_exact(2).map(|w| (w[0] - w[1]).abs()).collect();
    dev.sort_by(f64::total_cmp);
    Ok(t_grid
        .iter()
        .map(|&t| {
            let count = count_at_least(&dev, t);
            let tail = count as f64 / dev.len() as f64;
            let neg_log_tail = -tail.ln();
            let bound = t * t / 4.0 - BASELINE_LOG_C;
            let checked = count as usize >= BASELINE_MIN_COUNT;
            BaselineRow {
                t,
                tail,
                count,
                neg_log_tail,
                bound,
                checked,
                pass: !checked || neg_log_tail >= bound,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizationRow {
    /// Absolute deviation level.
    pub t: f64,
    pub median_tail: f64,
    /// `min` over the median and p-mean centers of the tail at `t/2`.
    pub half_tail_min: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizationReport {
    pub median: f64,
    pub p_mean: f64,
    /// `|median − p_mean| / p_mean`.
    pub relative_gap: f64,
    pub rows: Vec<SymmetrizationRow>,
}

/// Compares the median-centered tail at `t` with four times the best
/// half-level tail over the two centers, plus three standard errors.
pub fn median_symmetrization_check(
    body: &NormBody,
    t_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<SymmetrizationReport> {
    check_eps(t_grid)?;
    let norms = sample_norms(body, samples, seed);
    let total = norms.len() as f64;
    let med = median(&norms);
    let pm = center_of(&norms, Center::PMean, body.q(), closed_form_iq(body)?);
    let sorted_dev = |c: f64| {
        let mut d: Vec<f64> = norms.iter().map(|v| (v - c).abs()).collect();
        d.sort_by(f64::total_cmp);
        d
    };
    let dev_med = sorted_dev(med);
    let dev_pm = sorted_dev(pm);
    // strict inequality `>`: count of entries strictly above the level
    let above = |d: &[f64], t: f64| (d.len() - d.partition_point(|v| *v <= t)) as f64 / total;
    let rows = t_grid
        .iter()
        .map(|&t| {
            let median_tail = above(&dev_med, t);
            let h_med = above(&dev_med, 0.5 * t);
            let h_pm = above(&dev_pm, 0.5 * t);
            let half_tail_min = h_med.min(h_pm);
            let se = (4.0 * (half_tail_min * (1.0 - half_tail_min) / total).sqrt())
                .hypot((median_tail * (1.0 - median_tail) / total).sqrt());
            let bound = 4.0 * half_tail_min + 3.0 * se;
            SymmetrizationRow {
                t,
                median_tail,
                half_tail_min,
                bound,
                pass: median_tail <= bound,
            }
        })
        .collect();
    Ok(SymmetrizationReport {
        median: med,
        p_mean: pm,
        relative_gap: (med - pm).abs() / pm,
        rows,
    })
}
