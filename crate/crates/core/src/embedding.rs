//! Random Gaussian maps `ℓ_2^k → X_p(μ)`: nets on the sphere, a posteriori
//! distortion certificates, the multi-level chaining schedule and the sweep
//! over `k` that traces the empirical frontier.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::concentration::psi;
use crate::error::{Error, Result};
use crate::gaussian::{gaussian_moment, sharded_samples, MomentEstimate};
use crate::linalg::singular_values;
use crate::measures::NormBody;
use crate::par::{map_chunks_mut, map_indices};
use crate::rng::{derive_seed, CompensatedSum, GaussianStream};

/// Refuse nets whose `(3/δ)^k` bound exceeds this.
pub const NET_CARDINALITY_GUARD: f64 = 1e7;
pub const GREEDY_CANDIDATES_PER_DIM: usize = 100_000;
pub const RANDOM_REJECTIONS_PER_DIM: usize = 10_000;
pub const COVERING_TEST_POINTS: usize = 100_000;
pub const MAX_REPAIR_ROUNDS: usize = 4;
/// Upper limit on `candidates × net size × k` for one construction.
pub const MAX_NET_WORK: f64 = 4e9;
pub const DEFAULT_PASS_THRESHOLD: f64 = 0.9;
pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_IP_SAMPLES: usize = 20_000;
/// Relative tolerance for the fresh-direction soundness check.
pub const SOUNDNESS_ROUNDOFF: f64 = 1e-12;

const TAG_POOL: u64 = 0x6e65_7470;
const TAG_RANDOM_NET: u64 = 0x6e65_7472;
const TAG_COVER: u64 = 0x636f_7600;
const TAG_MATRIX: u64 = 0x6d61_7478;
const TAG_IP: u64 = 0x6970_0000;
const TAG_NET: u64 = 0x6e65_7400;
const UPDATE_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetMethod {
    GreedyFarthestPoint,
    RandomCertified,
}

impl NetMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            NetMethod::GreedyFarthestPoint => "greedy-farthest-point",
            NetMethod::RandomCertified => "random-certified",
        }
    }
}

impl std::str::FromStr for NetMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" | "greedy-farthest-point" => Ok(NetMethod::GreedyFarthestPoint),
            "random" | "random-certified" => Ok(NetMethod::RandomCertified),
            other => Err(Error::Domain(format!("unknown net method '{other}'"))),
        }
    }
}

/// Sampled covering check of a net.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub test_points: usize,
    /// Largest distance from a test point to the net.
    pub max_distance: f64,
    /// Test points farther than `delta` from the net.
    pub uncovered: usize,
    pub failure_rate: f64,
    /// Points added after the initial construction to close sampled gaps.
    pub repaired: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetOnSphere {
    pub k: usize,
    pub delta: f64,
    pub method: NetMethod,
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
    pub covering: CoveringReport,
}

impl NetOnSphere {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(3/δ)^k`.
    pub fn cardinality_bound(&self) -> f64 {
        (3.0 / self.delta).powi(self.k as i32)
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let m = self.points.len();
        let per_row = map_indices(m, |i| {
            (i + 1..m)
                .map(|j| sq_dist(&self.points[i], &self.points[j]))
                .fold(f64::INFINITY, f64::min)
        });
        per_row.into_iter().fold(f64::INFINITY, f64::min).sqrt()
    }

    /// Distances from fresh uniform points to the net.
    pub fn covering_check(&self, test_points: usize, seed: u64) -> CoveringReport {
        let flat: Vec<f64> = self.points.concat();
        let tests = sharded_samples(test_points, seed, |g, _| g.unit_vector(self.k));
        let dists: Vec<f64> = map_indices(tests.len(), |i| nearest_sq(&flat, self.k, &tests[i]).sqrt());
        let uncovered = dists.iter().filter(|d| **d > self.delta).count();
        CoveringReport {
            test_points,
            max_distance: dists.iter().copied().fold(0.0, f64::max),
            uncovered,
            failure_rate: uncovered as f64 / test_points.max(1) as f64,
            repaired: self.covering.repaired,
        }
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_sq(flat: &[f64], k: usize, x: &[f64]) -> f64 {
    flat.chunks_exact(k)
        .map(|p| sq_dist(p, x))
        .fold(f64::INFINITY, f64::min)
}

/// Lower estimate of a `δ`-net's size: sphere area over the area of a
/// spherical cap of chordal radius `δ`, in the flat approximation.
pub fn covering_lower_estimate(k: usize, delta: f64) -> f64 {
    let kf = k as f64;
    let ln_area = std::f64::consts::LN_2 + 0.5 * kf * std::f64::consts::PI.ln() - ln_gamma(0.5 * kf);
    let ln_cap = 0.5 * (kf - 1.0) * std::f64::consts::PI.ln() - ln_gamma(0.5 * (kf + 1.0)) + (kf - 1.0) * delta.ln();
    (ln_area - ln_cap).exp().max(2.0)
}

/// Expected size of a maximal `δ`-packing: the covering estimate inflated
/// by `2^{(k−1)/2}`, which tracks greedy output for small `k`.
pub fn estimated_net_size(k: usize, delta: f64) -> f64 {
    covering_lower_estimate(k, delta) * 2f64.powf(0.5 * (k as f64 - 1.0))
}

fn work_per_point(k: usize, method: NetMethod) -> f64 {
    let per_dim = match method {
        NetMethod::GreedyFarthestPoint => GREEDY_CANDIDATES_PER_DIM,
        NetMethod::RandomCertified => RANDOM_REJECTIONS_PER_DIM,
    };
    (per_dim * k * k) as f64
}

/// Largest net the construction budget allows for `k`.
pub fn max_net_points(k: usize, method: NetMethod) -> usize {
    (MAX_NET_WORK / work_per_point(k, method)) as usize
}

/// Validates `(k, δ)` against the cardinality and work guards.
pub fn check_net_request(k: usize, delta: f64, method: NetMethod) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidDimension("net dimension must be >= 1".into()));
    }
    if !(delta > 0.0 && delta <= 2.0) {
        return Err(Error::Domain(format!("net mesh must lie in (0, 2], got {delta}")));
    }
    let bound = (3.0 / delta).powf(k as f64);
    if bound > NET_CARDINALITY_GUARD {
        return Err(Error::Scale(format!(
            "(3/delta)^k = {bound:.3e} exceeds {NET_CARDINALITY_GUARD:.0e}; use a larger delta than {delta} or a smaller k than {k}"
        )));
    }
    if method == NetMethod::GreedyFarthestPoint && k > 8 && delta < 0.2 {
        return Err(Error::Scale(format!(
            "greedy nets need k <= 8 or delta >= 0.2 (got k = {k}, delta = {delta})"
        )));
    }
    let estimate = estimated_net_size(k, delta);
    let cap = max_net_points(k, method);
    if estimate > cap as f64 {
        return Err(Error::Scale(format!(
            "a {delta}-net of S^{} needs about {estimate:.0} points, above the budget of {cap}; use a larger delta",
            k - 1
        )));
    }
    Ok(())
}

fn budget_error(k: usize, delta: f64, cap: usize) -> Error {
    Error::Scale(format!(
        "net construction for k = {k}, delta = {delta} passed the budget of {cap} points; use a larger delta"
    ))
}

fn greedy_points(k: usize, delta: f64, seed: u64) -> Result<Vec<f64>> {
    let pool_size = GREEDY_CANDIDATES_PER_DIM * k;
    let pool: Vec<f64> = sharded_samples(pool_size, derive_seed(seed, TAG_POOL), |g, _| g.unit_vector(k)).concat();
    let cap = max_net_points(k, NetMethod::GreedyFarthestPoint);
    let threshold = delta * delta;
    let mut mind = vec![f64::INFINITY; pool_size];
    let mut net: Vec<f64> = Vec::new();
    let mut next = 0usize;
    loop {
        let centre: Vec<f64> = pool[next * k..(next + 1) * k].to_vec();
        net.extend_from_slice(&centre);
        if net.len() / k > cap {
            return Err(budget_error(k, delta, cap));
        }
        let bests = map_chunks_mut(&mut mind, UPDATE_CHUNK, |off, chunk| {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for (j, m) in chunk.iter_mut().enumerate() {
                let idx = off + j;
                let d = sq_dist(&pool[idx * k..(idx + 1) * k], &centre);
                if d < *m {
                    *m = d;
                }
                if *m > best.0 {
                    best = (*m, idx);
                }
            }
            best
        });
        let (far, idx) = bests.into_iter().fold(
            (f64::NEG_INFINITY, usize::MAX),
            |acc, b| if b.0 > acc.0 { b } else { acc },
        );
        if far < threshold {
            return Ok(net);
        }
        next = idx;
    }
}

fn random_points(k: usize, delta: f64, seed: u64) -> Result<Vec<f64>> {
    let mut g = GaussianStream::new(derive_seed(seed, TAG_RANDOM_NET), 0);
    let limit = RANDOM_REJECTIONS_PER_DIM * k;
    let cap = max_net_points(k, NetMethod::RandomCertified);
    let threshold = delta * delta;
    let mut net: Vec<f64> = Vec::new();
    let mut rejections = 0;
    while rejections < limit {
        let x = g.unit_vector(k);
        if nearest_sq(&net, k, &x) >= threshold {
            net.extend_from_slice(&x);
            rejections = 0;
            if net.len() / k > cap {
                return Err(budget_error(k, delta, cap));
            }
        } else {
            rejections += 1;
        }
    }
    Ok(net)
}

/// Adds sampled points that are farther than `δ` from the net until a round
/// of fresh test points is fully covered. Added points keep the packing.
fn repair(net: &mut Vec<f64>, k: usize, delta: f64, seed: u64) -> CoveringReport {
    let mut repaired = 0;
    let threshold = delta * delta;
    let mut report = None;
    for round in 0..MAX_REPAIR_ROUNDS {
        let tests = sharded_samples(
            COVERING_TEST_POINTS,
            derive_seed(seed, TAG_COVER + round as u64),
            |g, _| g.unit_vector(k),
        );
        let snapshot: &[f64] = net;
        let dists: Vec<f64> = map_indices(tests.len(), |i| nearest_sq(snapshot, k, &tests[i]));
        let uncovered: Vec<usize> = (0..tests.len()).filter(|i| dists[*i] > threshold).collect();
        report = Some(CoveringReport {
            test_points: COVERING_TEST_POINTS,
            max_distance: dists.iter().copied().fold(0.0, f64::max).sqrt(),
            uncovered: uncovered.len(),
            failure_rate: uncovered.len() as f64 / COVERING_TEST_POINTS as f64,
            repaired,
        });
        if uncovered.is_empty() {
            break;
        }
        for i in uncovered {
            if nearest_sq(net, k, &tests[i]) > threshold {
                net.extend_from_slice(&tests[i]);
                repaired += 1;
            }
        }
    }
    let mut report = report.expect("at least one repair round");
    report.repaired = repaired;
    report
}

/// A `δ`-net of `S^{k−1}` with pairwise distances at least `δ`.
pub fn build_net(k: usize, delta: f64, method: NetMethod, seed: u64) -> Result<NetOnSphere> {
    check_net_request(k, delta, method)?;
    let mut flat = match method {
        NetMethod::GreedyFarthestPoint => greedy_points(k, delta, seed)?,
        NetMethod::RandomCertified => random_points(k, delta, seed)?,
    };
    let covering = repair(&mut flat, k, delta, seed);
    Ok(NetOnSphere {
        k,
        delta,
        method,
        points: flat.chunks_exact(k).map(|c| c.to_vec()).collect(),
        seed,
        covering,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLevel {
    pub j: usize,
    /// `e^{−j}`
    pub delta: f64,
    /// `j^{p/2} e^{−j} / S_p`
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainingSchedule {
    pub p: f64,
    /// `Σ_{j ≥ 1} j^{p/2} e^{−j}`
    pub s_p: f64,
    pub levels: Vec<ChainLevel>,
}

impl ChainingSchedule {
    pub fn total_t(&self) -> f64 {
        self.levels.iter().map(|l| l.t).collect::<CompensatedSum>().value()
    }
}

fn chain_term(p: f64, j: usize) -> f64 {
    (0.5 * p * (j as f64).ln() - j as f64).exp()
}

/// Levels `δ_j = e^{−j}`, `t_j = j^{p/2} e^{−j}/S_p`, kept while past the
/// peak `t_j ≥ tail_tol`.
pub fn chaining_schedule(p: f64, tail_tol: f64) -> Result<ChainingSchedule> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Domain(format!("chaining schedule needs p > 0, got {p}")));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::Domain(format!(
            "tail tolerance must lie in (0, 1), got {tail_tol}"
        )));
    }
    let peak = 0.5 * p;
    let mut sum = CompensatedSum::new();
    let mut j = 1usize;
    loop {
        let term = chain_term(p, j);
        sum.add(term);
        if j as f64 > peak && term < 1e-17 * sum.value() {
            break;
        }
        j += 1;
    }
    let mut s_p = sum.value();
    let mut levels = Vec::new();
    let mut j = 1usize;
    loop {
        let t = chain_term(p, j) / s_p;
        if j as f64 > peak && t < tail_tol {
            break;
        }
        levels.push(ChainLevel {
            j,
            delta: (-(j as f64)).exp(),
            t,
        });
        j += 1;
    }
    let mut schedule = ChainingSchedule { p, s_p, levels };
    while schedule.total_t() > 1.0 {
        s_p = s_p.next_up();
        schedule.s_p = s_p;
        for l in &mut schedule.levels {
            l.t = chain_term(p, l.j) / s_p;
        }
    }
    Ok(schedule)
}

/// Standard Gaussian `n × k` matrix for `seed`.
pub fn draw_embedding(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut g = GaussianStream::new(derive_seed(seed, TAG_MATRIX), 0);
    DMatrix::from_fn(n, k, |_, _| g.gaussian())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSummary {
    pub k: usize,
    pub delta: f64,
    pub method: NetMethod,
    pub cardinality: usize,
    pub seed: u64,
    pub covering_max_distance: f64,
    pub covering_failure_rate: f64,
}

impl From<&NetOnSphere> for NetSummary {
    fn from(net: &NetOnSphere) -> Self {
        Self {
            k: net.k,
            delta: net.delta,
            method: net.method,
            cardinality: net.len(),
            seed: net.seed,
            covering_max_distance: net.covering.max_distance,
            covering_failure_rate: net.covering.failure_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionCertificate {
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub eps_target: f64,
    pub net: NetSummary,
    /// Monte Carlo `I_p` used for the ratio scale.
    pub ip_hat: f64,
    pub ip_std_err: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Covering radius used for the slack: `max(δ, sampled covering radius)`.
    pub mesh: f64,
    /// Off-net correction on the ratio scale, `h · ratio_max / (1 − h)` for
    /// the mesh `h`; absent when `h ≥ 1`.
    pub lipschitz_slack: Option<f64>,
    /// `(ratio_max + slack)/(ratio_min − slack)` when the denominator is
    /// positive.
    pub distortion_bound: Option<f64>,
    /// `max(1.1(√n + √k + 3), σ_max(G))`, reported only.
    pub operator_norm_estimate: f64,
    pub verdict: bool,
    /// Seed of the Gaussian matrix.
    pub seed: u64,
}

impl DistortionCertificate {
    /// Scale `1/(ratio_min − slack)` of the normalized map `T`.
    pub fn normalization(&self) -> Option<f64> {
        let lower = self.ratio_min - self.lipschitz_slack?;
        (lower > 0.0).then(|| 1.0 / lower)
    }
}

fn norm_of_image(body: &NormBody, g: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let y = g * DVector::from_column_slice(theta);
    body.norm_unchecked(y.as_slice())
}

fn check_embedding_args(body: &NormBody, k: usize, eps_target: f64) -> Result<()> {
    if k == 0 || k > body.dim() {
        return Err(Error::InvalidDimension(format!(
            "embedding dimension must lie in 1..={}, got {k}",
            body.dim()
        )));
    }
    if !(eps_target > 0.0) || !eps_target.is_finite() {
        return Err(Error::Domain(format!(
            "distortion target must be > 0, got {eps_target}"
        )));
    }
    Ok(())
}

/// Certifies one Gaussian matrix against a prebuilt net and `I_p` estimate.
pub fn certify_with_net(
    body: &NormBody,
    net: &NetOnSphere,
    eps_target: f64,
    ip: &MomentEstimate,
    seed: u64,
) -> Result<DistortionCertificate> {
    let k = net.k;
    check_embedding_args(body, k, eps_target)?;
    if ip.std_err > ip.value * eps_target / 10.0 {
        return Err(Error::Precision(format!(
            "I_p relative error {:.3e} exceeds eps/10 = {:.3e}; raise the sample count",
            ip.std_err / ip.value,
            eps_target / 10.0
        )));
    }
    let n = body.dim();
    let g = draw_embedding(n, k, seed);
    let ratios = map_indices(net.len(), |i| norm_of_image(body, &g, &net.points[i]) / ip.value);
    let ratio_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mesh = net.delta.max(net.covering.max_distance);
    let lipschitz_slack = (mesh < 1.0).then(|| mesh * ratio_max / (1.0 - mesh));
    let distortion_bound = lipschitz_slack.and_then(|s| {
        let lower = ratio_min - s;
        (lower > 0.0).then(|| (ratio_max + s) / lower)
    });
    let sigma_max = singular_values(&g).first().copied().unwrap_or(0.0);
    let nk = 1.1 * ((n as f64).sqrt() + (k as f64).sqrt() + 3.0);
    Ok(DistortionCertificate {
        n,
        k,
        p: body.q(),
        eps_target,
        net: NetSummary::from(net),
        ip_hat: ip.value,
        ip_std_err: ip.std_err,
        ratio_min,
        ratio_max,
        mesh,
        lipschitz_slack,
        distortion_bound,
        operator_norm_estimate: nk.max(sigma_max),
        verdict: distortion_bound.is_some_and(|d| d <= 1.0 + eps_target),
        seed,
    })
}

/// Draws `G`, builds a greedy net and certifies `‖Gθ‖` over it.
pub fn distortion_certificate(
    body: &NormBody,
    k: usize,
    eps_target: f64,
    net_delta: f64,
    samples_for_ip: usize,
    seed: u64,
) -> Result<DistortionCertificate> {
    check_embedding_args(body, k, eps_target)?;
    let net = build_net(k, net_delta, NetMethod::GreedyFarthestPoint, derive_seed(seed, TAG_NET))?;
    let ip = gaussian_moment(body, body.q(), samples_for_ip, derive_seed(seed, TAG_IP))?;
    certify_with_net(body, &net, eps_target, &ip, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoundnessReport {
    pub certified: bool,
    pub directions: usize,
    /// Fresh directions whose normalized value left `[1, 1 + ε]`.
    pub violations: usize,
    pub min_normalized: f64,
    pub max_normalized: f64,
}

/// Evaluates `‖Tθ‖` at fresh uniform directions, `T` the normalized map of
/// a certificate. A passing certificate must keep every value in `[1, 1+ε]`.
pub fn fresh_direction_check(
    body: &NormBody,
    cert: &DistortionCertificate,
    directions: usize,
    seed: u64,
) -> Result<SoundnessReport> {
    if body.dim() != cert.n {
        return Err(Error::Shape {
            expected: cert.n,
            actual: body.dim(),
        });
    }
    let g = draw_embedding(cert.n, cert.k, cert.seed);
    let scale = cert.normalization().unwrap_or(f64::NAN);
    let values = sharded_samples(directions, seed, |rng, _| {
        let theta = rng.unit_vector(cert.k);
        norm_of_image(body, &g, &theta) / cert.ip_hat * scale
    });
    let lo = 1.0 - SOUNDNESS_ROUNDOFF;
    let hi = (1.0 + cert.eps_target) * (1.0 + SOUNDNESS_ROUNDOFF);
    Ok(SoundnessReport {
        certified: cert.verdict,
        directions,
        violations: values.iter().filter(|v| !(**v >= lo && **v <= hi)).count(),
        min_normalized: values.iter().copied().fold(f64::INFINITY, f64::min),
        max_normalized: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// `max/min` of `‖Gθ‖` over random directions: an uncertified estimate of
/// the distortion of one draw.
pub fn sampled_distortion(body: &NormBody, k: usize, directions: usize, seed: u64) -> Result<f64> {
    check_embedding_args(body, k, 1.0)?;
    let g = draw_embedding(body.dim(), k, seed);
    let values = sharded_samples(directions, derive_seed(seed, TAG_COVER), |rng, _| {
        norm_of_image(body, &g, &rng.unit_vector(k))
    });
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    Ok(hi / lo)
}

/// Net mesh leaving half of the distortion budget to the sampled spread:
/// `(1+s)/(1−s) = 1 + ε/2` with `s = δ/(1−δ)`.
pub fn default_net_delta(eps: f64) -> f64 {
    eps / (4.0 + 2.0 * eps)
}

/// Best verdict any draw can reach with mesh `δ`: `(1+s)/(1−s)`.
pub fn slack_floor(delta: f64) -> Option<f64> {
    if delta >= 0.5 {
        return None;
    }
    let s = delta / (1.0 - delta);
    Some((1.0 + s) / (1.0 - s))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierOptions {
    pub trials: usize,
    pub pass_threshold: f64,
    pub samples_for_ip: usize,
    /// Net mesh; defaults to [`default_net_delta`] per `ε`.
    pub net_delta: Option<f64>,
    pub method: NetMethod,
}

impl Default for FrontierOptions {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            pass_threshold: DEFAULT_PASS_THRESHOLD,
            samples_for_ip: DEFAULT_IP_SAMPLES,
            net_delta: None,
            method: NetMethod::GreedyFarthestPoint,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub eps: f64,
    /// Largest certified `k`; 0 when even `k = 1` fails.
    pub k_max: usize,
    pub psi: f64,
    /// Pass rate at `k_max` (at `k = 1` when `k_max = 0`).
    pub pass_rate: f64,
    pub trials: usize,
    pub seed_base: u64,
    pub net_delta: f64,
}

struct Sweep<'a> {
    body: &'a NormBody,
    opts: &'a FrontierOptions,
    ip: MomentEstimate,
    seed: u64,
    nets: BTreeMap<(usize, u64), Option<NetOnSphere>>,
}

impl Sweep<'_> {
    fn pass_rate(&mut self, k: usize, eps: f64, delta: f64) -> Result<f64> {
        if k > self.body.dim() || slack_floor(delta).is_none_or(|f| f > 1.0 + eps) {
            return Ok(0.0);
        }
        let key = (k, delta.to_bits());
        if !self.nets.contains_key(&key) {
            let net = match build_net(k, delta, self.opts.method, derive_seed(self.seed, TAG_NET + k as u64)) {
                Ok(net) => Some(net),
                Err(Error::Scale(_)) => None,
                Err(e) => return Err(e),
            };
            self.nets.insert(key, net);
        }
        let Some(net) = self.nets[&key].as_ref() else {
            return Ok(0.0);
        };
        let trial_seed = derive_seed(self.seed, k as u64);
        let verdicts = map_indices(self.opts.trials, |t| {
            certify_with_net(self.body, net, eps, &self.ip, derive_seed(trial_seed, t as u64)).map(|c| c.verdict)
        });
        let mut passes = 0;
        for v in verdicts {
            passes += usize::from(v?);
        }
        Ok(passes as f64 / self.opts.trials as f64)
    }

    fn frontier(&mut self, eps: f64) -> Result<(usize, f64, f64)> {
        let delta = self.opts.net_delta.unwrap_or_else(|| default_net_delta(eps));
        let thr = self.opts.pass_threshold;
        let n = self.body.dim();
        let mut rates = BTreeMap::new();
        let mut rate = |s: &mut Self, k: usize| -> Result<f64> {
            if let Some(r) = rates.get(&k) {
                return Ok(*r);
            }
            let r = s.pass_rate(k, eps, delta)?;
            rates.insert(k, r);
            Ok(r)
        };
        let first = rate(self, 1)?;
        if first < thr {
            return Ok((0, first, delta));
        }
        let mut lo = 1;
        let mut hi = n + 1;
        let mut k = 2;
        while k <= n {
            if rate(self, k)? >= thr {
                lo = k;
                k *= 2;
            } else {
                hi = k;
                break;
            }
        }
        if k > n && hi == n + 1 && lo < n {
            hi = n + 1;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if rate(self, mid)? >= thr {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo, rate(self, lo)?, delta))
    }
}

/// For each `ε`, the largest `k` whose certificate pass rate over
/// `trials` draws reaches the threshold: doubling, then bisection.
pub fn frontier_sweep(
    body: &NormBody,
    eps_grid: &[f64],
    opts: &FrontierOptions,
    seed: u64,
) -> Result<Vec<FrontierRow>> {
    let p = body.q();
    if !(p > 2.0) {
        return Err(Error::Domain(format!("frontier sweep needs p > 2, got {p}")));
    }
    if opts.trials == 0 {
        return Err(Error::Domain("frontier sweep needs at least one trial".into()));
    }
    if let Some(e) = eps_grid.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::Domain(format!("distortion targets must be > 0, got {e}")));
    }
    let ip = gaussian_moment(body, p, opts.samples_for_ip, derive_seed(seed, TAG_IP))?;
    let mut sweep = Sweep {
        body,
        opts,
        ip,
        seed,
        nets: BTreeMap::new(),
    };
    eps_grid
        .iter()
        .map(|&eps| {
            let (k_max, pass_rate, net_delta) = sweep.frontier(eps)?;
            Ok(FrontierRow {
                eps,
                k_max,
                psi: psi(body.dim(), p, eps)?.value,
                pass_rate,
                trials: opts.trials,
                seed_base: seed,
                net_delta,
            })
        })
        .collect()
}
