//! Lewis position of a subspace `{Ax : x ∈ ℝ^n}` of `ℓ_p^m`.
//!
//! The Lewis weights `w ∈ ℝ^m_{>0}` solve
//!
//! ```text
//! w_i = (a_iᵀ M(w)^{-1} a_i)^{p/2},    M(w) = Aᵀ W^{1-2/p} A,
//! ```
//!
//! and the transform `R = M(w)^{-1/2}` sends the subspace to a space
//! `X_p(μ)` with `μ` isotropic: atoms `θ_i = R a_i / ‖R a_i‖_2`, masses `w_i`.
//!
//! The solver runs the multiplicative map in log space,
//! `log w ← (1-η) log w + η log τ(w)`. Its Jacobian is
//! `-(p/2 - 1)·P` with `P` row-stochastic with spectrum in `[0, 1]`, so
//! `η = 1` contracts for `p < 4` and `η = 2/p` contracts for every `p`.
//! For `p ≥ 4` the step is additionally halved whenever the residual grows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_spd, singular_values};
use crate::measures::{AbsPow, DiscreteIsotropicMeasure, NormBody, ISOTROPY_TOL};
use crate::par::map_indices;
use crate::rng::{CompensatedSum, GaussianStream};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;
pub const DEFAULT_FP_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Smallest admissible weight.
pub const WEIGHT_FLOOR: f64 = 1e-300;
/// Rows whose weight falls below this multiple of `n/m` are flagged redundant.
pub const REDUNDANT_FACTOR: f64 = 1e-14;
/// Condition estimate above which the quadratic forms come from a QR factor.
pub const QR_SWITCH_CONDITION: f64 = 1e8;

const ROW_BLOCK: usize = 256;
const MIN_STEP: f64 = 1e-8;

/// A subspace of `ℓ_p^m` given by a full-column-rank `m × n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceSpec {
    matrix: DMatrix<f64>,
    p: f64,
    kept_rows: Vec<usize>,
    original_rows: usize,
}

impl SubspaceSpec {
    pub fn new(matrix: DMatrix<f64>, p: f64) -> Result<Self> {
        Self::with_rank_tol(matrix, p, DEFAULT_RANK_TOL)
    }

    /// Drops exactly-zero rows, then checks `m ≥ n` and
    /// `σ_min > rank_tol · σ_max`.
    pub fn with_rank_tol(matrix: DMatrix<f64>, p: f64, rank_tol: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::UnsupportedExponent {
                exponent: p,
                reason: "subspaces of L_p need 1 <= p < inf",
            });
        }
        let (m0, n) = matrix.shape();
        if n == 0 {
            return Err(Error::InvalidDimension("matrix has no columns".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix has non-finite entries".into()));
        }
        let kept_rows: Vec<usize> = (0..m0).filter(|&i| matrix.row(i).iter().any(|v| *v != 0.0)).collect();
        let matrix = if kept_rows.len() == m0 {
            matrix
        } else {
            matrix.select_rows(kept_rows.iter())
        };
        let m = matrix.nrows();
        if m < n {
            return Err(Error::InvalidDimension(format!(
                "need at least n = {n} nonzero rows, got {m}"
            )));
        }
        let s = singular_values(&matrix);
        let (smax, smin) = (s[0], s[s.len() - 1]);
        if !(smin > rank_tol * smax) {
            return Err(Error::RankDeficient(format!(
                "smallest singular value {smin:e} vs largest {smax:e}"
            )));
        }
        Ok(Self {
            matrix,
            p,
            kept_rows,
            original_rows: m0,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Number of (nonzero) rows `m`.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Indices, in the input matrix, of the rows that were kept.
    pub fn kept_rows(&self) -> &[usize] {
        &self.kept_rows
    }

    pub fn original_rows(&self) -> usize {
        self.original_rows
    }

    /// `‖Ax‖_p`.
    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let y = &self.matrix * DVector::from_column_slice(x);
        let pow = AbsPow::new(self.p);
        let s = y.iter().map(|v| pow.eval(*v)).collect::<CompensatedSum>();
        Ok(s.value().powf(1.0 / self.p))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LewisPosition {
    pub weights: Vec<f64>,
    /// `R = M(w)^{-1/2}`.
    pub transform: DMatrix<f64>,
    pub measure: DiscreteIsotropicMeasure,
    /// Final `max_i |log τ_i(w) − log w_i|`.
    pub residual: f64,
    pub iterations: usize,
    /// Rows whose weight fell below `1e-14 · n/m`.
    pub redundant_rows: Vec<usize>,
    pub residual_trace: Vec<f64>,
}

impl LewisPosition {
    /// `max_i |a_iᵀ M^{-1} a_i − w_i^{2/p}| / w_i^{2/p}` recomputed from scratch.
    pub fn fixed_point_defect(&self, spec: &SubspaceSpec) -> Result<f64> {
        let lev = quadratic_forms(spec.matrix(), &self.weights, spec.p())?;
        Ok(lev
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| {
                let target = w.powf(2.0 / spec.p());
                (t - target).abs() / target
            })
            .fold(0.0, f64::max))
    }
}

/// `τ_i = a_iᵀ (Aᵀ W^{1-2/p} A)^{-1} a_i` for every row.
fn quadratic_forms(a: &DMatrix<f64>, w: &[f64], p: f64) -> Result<Vec<f64>> {
    let (m, n) = a.shape();
    let expo = 0.5 * (1.0 - 2.0 / p);
    let row_scale: Vec<f64> = w.iter().map(|wi| wi.powf(expo)).collect();
    let mut b = a.clone();
    for (i, s) in row_scale.iter().enumerate() {
        b.row_mut(i).scale_mut(*s);
    }
    let gram = b.transpose() * &b;
    // Lower factor F with M = F Fᵀ; then τ_i = ‖F^{-1} a_i‖².
    let factor = match gram.clone().cholesky() {
        Some(ch) => {
            let l = ch.l();
            let d = l.diagonal();
            let ratio = d.max() / d.min();
            if ratio * ratio > QR_SWITCH_CONDITION {
                qr_factor(&b)?
            } else {
                l
            }
        }
        None => qr_factor(&b)?,
    };
    let blocks = m.div_ceil(ROW_BLOCK);
    let out: Vec<Vec<f64>> = map_indices(blocks, |blk| {
        let lo = blk * ROW_BLOCK;
        let hi = (lo + ROW_BLOCK).min(m);
        (lo..hi)
            .map(|i| {
                let rhs = DVector::from_iterator(n, a.row(i).iter().copied());
                factor
                    .solve_lower_triangular(&rhs)
                    .map(|y| y.norm_squared())
                    .unwrap_or(f64::NAN)
            })
            .collect()
    });
    let tau: Vec<f64> = out.into_iter().flatten().collect();
    if tau.iter().any(|t| !t.is_finite() || *t <= 0.0) {
        return Err(Error::RankDeficient(
            "weighted Gram matrix became singular during the iteration".into(),
        ));
    }
    Ok(tau)
}

/// Rᵀ from a thin QR of `b`, so that `bᵀb = Rᵀ R`.
fn qr_factor(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = b.clone().qr().r();
    let d: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let dmax = d.iter().copied().fold(0.0, f64::max);
    if d.iter().any(|v| !(*v > 1e-14 * dmax)) {
        return Err(Error::RankDeficient(
            "triangular factor lost rank during the iteration".into(),
        ));
    }
    Ok(r.transpose())
}

fn log_residual(tau: &[f64], w: &[f64], p: f64) -> f64 {
    tau.iter()
        .zip(w)
        .map(|(t, wi)| (0.5 * p * t.ln() - wi.ln()).abs())
        .fold(0.0, f64::max)
}

/// Computes the Lewis position of `spec`.
///
/// Stops once `max_i |log τ_i(w)^{p/2} − log w_i| ≤ fp_tol · min(1, p/2)`,
/// which also gives `|τ_i − w_i^{2/p}| ≤ fp_tol · w_i^{2/p}` to first order.
pub fn lewis_position(spec: &SubspaceSpec, fp_tol: f64, max_iter: usize) -> Result<LewisPosition> {
    if !(fp_tol >= 1e-14) {
        return Err(Error::Domain(format!(
            "fixed-point tolerance {fp_tol:e} is below 1e-14"
        )));
    }
    let a = spec.matrix();
    let (m, n) = a.shape();
    let p = spec.p();
    let target = fp_tol * (0.5 * p).min(1.0);
    let mut eta = if p < 4.0 { 1.0 } else { 2.0 / p };

    let mut w = vec![n as f64 / m as f64; m];
    let mut tau = quadratic_forms(a, &w, p)?;
    let mut res = log_residual(&tau, &w, p);
    let mut trace = vec![res];
    let mut iterations = 0;

    while res > target {
        if iterations >= max_iter || eta < MIN_STEP {
            return Err(Error::Convergence {
                iterations,
                last: res,
                trace,
            });
        }
        iterations += 1;
        let candidate: Vec<f64> = w
            .iter()
            .zip(&tau)
            .map(|(wi, ti)| {
                let log_t = 0.5 * p * ti.ln();
                ((1.0 - eta) * wi.ln() + eta * log_t).exp().max(WEIGHT_FLOOR)
            })
            .collect();
        let cand_tau = quadratic_forms(a, &candidate, p)?;
        let cand_res = log_residual(&cand_tau, &candidate, p);
        if p >= 4.0 && cand_res > res {
            eta *= 0.5;
            trace.push(res);
            continue;
        }
        w = candidate;
        tau = cand_tau;
        res = cand_res;
        trace.push(res);
    }

    let expo = 1.0 - 2.0 / p;
    let mut gram = DMatrix::zeros(n, n);
    for (i, wi) in w.iter().enumerate() {
        let r = a.row(i);
        gram += wi.powf(expo) * r.transpose() * r;
    }
    let transform = inv_sqrt_spd(&gram)?;
    let mut atoms = Vec::with_capacity(m);
    for i in 0..m {
        let u = &transform * a.row(i).transpose();
        let len = u.norm();
        atoms.push(u.iter().map(|v| v / len).collect::<Vec<f64>>());
    }
    let measure = DiscreteIsotropicMeasure::new(n, &atoms, &w, false)?.symmetrize();
    let cutoff = REDUNDANT_FACTOR * n as f64 / m as f64;
    let redundant_rows = (0..m).filter(|&i| w[i] < cutoff).collect();
    debug_assert!(measure.isotropy_residual() <= ISOTROPY_TOL);

    Ok(LewisPosition {
        weights: w,
        transform,
        measure,
        residual: res,
        iterations,
        redundant_rows,
        residual_trace: trace,
    })
}

/// Largest relative gap `|‖ARx‖_p − ‖x‖_{B_p(μ)}| / ‖x‖_{B_p(μ)}` over
/// `trials` standard Gaussian vectors `x`.
pub fn verify_isometry(pos: &LewisPosition, spec: &SubspaceSpec, trials: usize, seed: u64) -> Result<f64> {
    let n = spec.dim();
    if pos.transform.nrows() != n || pos.measure.dim() != n {
        return Err(Error::Shape {
            expected: n,
            actual: pos.measure.dim(),
        });
    }
    if pos.weights.len() != spec.rows() {
        return Err(Error::Shape {
            expected: spec.rows(),
            actual: pos.weights.len(),
        });
    }
    let body = NormBody::new(pos.measure.clone(), spec.p())?;
    let mut g = GaussianStream::new(seed, 0);
    let mut worst: f64 = 0.0;
    let mut x = vec![0.0; n];
    for _ in 0..trials {
        g.fill_gaussian(&mut x);
        let y = &pos.transform * DVector::from_column_slice(&x);
        let lhs = spec.norm(y.as_slice())?;
        let rhs = body.norm_unchecked(&x);
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gaussian_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut g = GaussianStream::new(seed, 99);
        DMatrix::from_fn(m, n, |_, _| g.gaussian())
    }

    #[test]
    fn identity_is_already_in_lewis_position() {
        for p in [1.0, 2.0, 3.0, 4.0, 6.0] {
            let spec = SubspaceSpec::new(DMatrix::identity(4, 4), p).unwrap();
            let pos = lewis_position(&spec, 1e-12, 100).unwrap();
            assert!(pos.weights.iter().all(|w| (w - 1.0).abs() < 1e-14));
            assert!((pos.transform.clone() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-14);
            assert_eq!(pos.measure, crate::measures::coordinate_measure(4).unwrap());
            assert_eq!(pos.iterations, 0);
            assert!(verify_isometry(&pos, &spec, 200, 1).unwrap() < 1e-14);
        }
    }

    #[test]
    fn stacked_identity_halves_weights() {
        // 2·w^{1-2/p}·w^{2/p}/... fixed point forces w = 1/2
        for p in [1.5, 3.0, 4.0, 5.0] {
            let mut a = DMatrix::zeros(6, 3);
            for i in 0..3 {
                a[(i, i)] = 1.0;
                a[(i + 3, i)] = 1.0;
            }
            let spec = SubspaceSpec::new(a, p).unwrap();
            let pos = lewis_position(&spec, 1e-12, 100).unwrap();
            for w in &pos.weights {
                assert_relative_eq!(*w, 0.5, max_relative = 1e-12);
            }
            assert!(verify_isometry(&pos, &spec, 500, 2).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn random_40x5_p3_postconditions() {
        let spec = SubspaceSpec::new(gaussian_matrix(40, 5, 1), 3.0).unwrap();
        let pos = lewis_position(&spec, 1e-10, 1000).unwrap();
        assert!(pos.residual <= 1e-10);
        assert!(pos.fixed_point_defect(&spec).unwrap() <= 1e-10);
        let total: f64 = pos.weights.iter().sum();
        assert!((total - 5.0).abs() <= 1e-8);
        assert!(pos.measure.isotropy_residual() <= 1e-8);
    }

    #[test]
    fn zero_rows_are_pruned() {
        let mut a = gaussian_matrix(10, 3, 4);
        a.row_mut(2).fill(0.0);
        let spec = SubspaceSpec::new(a, 3.0).unwrap();
        assert_eq!(spec.rows(), 9);
        assert_eq!(spec.original_rows(), 10);
        assert!(!spec.kept_rows().contains(&2));
    }

    #[test]
    fn rank_deficient_rejected() {
        let mut a = gaussian_matrix(10, 3, 5);
        for i in 0..10 {
            a[(i, 2)] = 2.0 * a[(i, 0)] - a[(i, 1)];
        }
        assert!(matches!(SubspaceSpec::new(a, 3.0), Err(Error::RankDeficient(_))));
        assert!(matches!(
            SubspaceSpec::new(gaussian_matrix(2, 3, 1), 3.0),
            Err(Error::InvalidDimension(_))
        ));
        assert!(SubspaceSpec::new(gaussian_matrix(4, 3, 1), 0.5).is_err());
    }

    #[test]
    fn convergence_error_carries_trace() {
        let spec = SubspaceSpec::new(gaussian_matrix(60, 4, 6), 6.0).unwrap();
        match lewis_position(&spec, 1e-12, 2) {
            Err(Error::Convergence { iterations, trace, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(trace.len(), 3);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn tolerance_floor() {
        let spec = SubspaceSpec::new(DMatrix::identity(2, 2), 3.0).unwrap();
        assert!(matches!(lewis_position(&spec, 1e-16, 10), Err(Error::Domain(_))));
    }

    #[test]
    fn large_p_converges() {
        for p in [4.0, 6.0, 10.0] {
            let spec = SubspaceSpec::new(gaussian_matrix(80, 6, 7), p).unwrap();
            let pos = lewis_position(&spec, 1e-10, 5000).unwrap();
            assert!(pos.residual <= 1e-10, "p={p} residual {}", pos.residual);
            assert!(verify_isometry(&pos, &spec, 200, 3).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn ill_conditioned_columns_use_qr_path() {
        let mut a = gaussian_matrix(50, 4, 8);
        for i in 0..50 {
            a[(i, 3)] *= 1e-6;
        }
        let spec = SubspaceSpec::new(a, 3.0).unwrap();
        let pos = lewis_position(&spec, 1e-10, 1000).unwrap();
        assert!(pos.measure.isotropy_residual() <= 1e-8);
        assert!(verify_isometry(&pos, &spec, 200, 4).unwrap() <= 1e-9);
    }
}
