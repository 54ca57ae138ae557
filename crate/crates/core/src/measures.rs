//! Even isotropic measures on the sphere and the norms they induce.
//!
//! A [`DiscreteIsotropicMeasure`] is a finite weighted atom set `{(θ_i, c_i)}`
//! on `S^{n-1}` with `Σ c_i θ_i θ_iᵀ = I_n`. Atoms are stored row-sparse, so
//! coordinate-type measures cost `O(n)` per evaluation instead of `O(n²)`.
//!
//! Evenness is carried in one of two forms:
//!
//! * *compact* (`symmetrized == false`): each stored atom `θ` with mass `c`
//!   stands for the pair `(c/2)(δ_θ + δ_{-θ})`;
//! * *symmetrized* (`symmetrized == true`): atoms are stored explicitly as
//!   adjacent pairs `θ, -θ` with equal masses.
//!
//! Both forms give the same norms, gradients and second-moment matrix; norm
//! evaluation always runs on the compact form.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::inv_sqrt_spd;
use crate::par::{map_indices, shard_lengths};
use crate::rng::{CompensatedSum, GaussianStream};

/// Default tolerance on `‖Σ c_i θ_i θ_iᵀ − I‖_F`.
pub const ISOTROPY_TOL: f64 = 1e-8;
/// Tolerance on `|‖θ_i‖_2 − 1|`.
pub const UNIT_TOL: f64 = 1e-12;
/// Tolerance on `|Σ c_i − n|`.
pub const MASS_TOL: f64 = 1e-8;
/// Atom count above which power sums use compensated accumulation.
pub const COMPENSATED_THRESHOLD: usize = 10_000;

/// Dimension above which the isotropy residual is accumulated sparsely.
const DENSE_SECOND_MOMENT_LIMIT: usize = 2048;

/// `|t|^q` with cheap paths for the exponents used in experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum AbsPow {
    Int(i32),
    HalfInt(i32),
    Real(f64),
}

impl AbsPow {
    pub(crate) fn new(q: f64) -> Self {
        if q.fract() == 0.0 && q.abs() < 64.0 {
            AbsPow::Int(q as i32)
        } else if (2.0 * q).fract() == 0.0 && q > 0.0 && q < 64.0 {
            AbsPow::HalfInt(q.floor() as i32)
        } else {
            AbsPow::Real(q)
        }
    }

    #[inline]
    pub(crate) fn eval(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            AbsPow::Int(k) => a.powi(k),
            AbsPow::HalfInt(k) => a.powi(k) * a.sqrt(),
            AbsPow::Real(q) => a.powf(q),
        }
    }
}

/// Construction options for [`DiscreteIsotropicMeasure::with_options`].
#[derive(Clone, Copy, Debug)]
pub struct MeasureOptions {
    /// `None` skips the isotropy and total-mass checks (diagnostic use).
    pub isotropy_tol: Option<f64>,
    pub symmetrized: bool,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            isotropy_tol: Some(ISOTROPY_TOL),
            symmetrized: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteIsotropicMeasure {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    masses: Vec<f64>,
    symmetrized: bool,
}

impl DiscreteIsotropicMeasure {
    /// Builds a measure from dense atoms, checking every invariant with the
    /// default isotropy tolerance.
    pub fn new(dim: usize, atoms: &[Vec<f64>], masses: &[f64], symmetrized: bool) -> Result<Self> {
        Self::with_options(
            dim,
            atoms,
            masses,
            MeasureOptions {
                symmetrized,
                ..Default::default()
            },
        )
    }

    pub fn with_options(dim: usize, atoms: &[Vec<f64>], masses: &[f64], opts: MeasureOptions) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("dimension must be positive".into()));
        }
        if atoms.len() != masses.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} masses",
                atoms.len(),
                masses.len()
            )));
        }
        let mut indptr = Vec::with_capacity(atoms.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for atom in atoms {
            if atom.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: atom.len(),
                });
            }
            for (j, &v) in atom.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        let measure = Self {
            dim,
            indptr,
            indices,
            values,
            masses: masses.to_vec(),
            symmetrized: opts.symmetrized,
        };
        measure.validate(opts.isotropy_tol)?;
        Ok(measure)
    }

    fn validate(&self, isotropy_tol: Option<f64>) -> Result<()> {
        if self.masses.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        for (i, &c) in self.masses.iter().enumerate() {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "mass of atom {i} is {c}, must be positive"
                )));
            }
            let (_, vals) = self.atom_sparse(i);
            let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidMeasure(format!("atom {i} has Euclidean norm {norm:.17}")));
            }
        }
        if self.symmetrized {
            if !self.len().is_multiple_of(2) {
                return Err(Error::InvalidMeasure(
                    "symmetrized measure needs an even number of atoms".into(),
                ));
            }
            for pair in 0..self.len() / 2 {
                let (a, b) = (2 * pair, 2 * pair + 1);
                if self.masses[a] != self.masses[b] || !self.is_antipodal(a, b) {
                    return Err(Error::InvalidMeasure(format!(
                        "atoms {a} and {b} are not an antipodal pair of equal mass"
                    )));
                }
            }
        }
        if let Some(tol) = isotropy_tol {
            let r = self.isotropy_residual();
            if !(r <= tol) {
                return Err(Error::InvalidMeasure(format!(
                    "isotropy residual {r:e} exceeds {tol:e}"
                )));
            }
            let total = self.total_mass();
            if (total - self.dim as f64).abs() > MASS_TOL.max(tol) {
                return Err(Error::InvalidMeasure(format!(
                    "total mass {total} differs from dimension {}",
                    self.dim
                )));
            }
        }
        Ok(())
    }

    fn is_antipodal(&self, a: usize, b: usize) -> bool {
        let (ia, va) = self.atom_sparse(a);
        let (ib, vb) = self.atom_sparse(b);
        ia == ib && va.iter().zip(vb).all(|(x, y)| *x == -*y)
    }

    /// Atoms `±e_1, …, ±e_n`, each of mass `1/2`.
    pub fn coordinate(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("dimension must be positive".into()));
        }
        let mut indptr = Vec::with_capacity(2 * n + 1);
        let mut indices = Vec::with_capacity(2 * n);
        let mut values = Vec::with_capacity(2 * n);
        indptr.push(0);
        for i in 0..n {
            for s in [1.0, -1.0] {
                indices.push(i);
                values.push(s);
                indptr.push(indices.len());
            }
        }
        Ok(Self {
            dim: n,
            indptr,
            indices,
            values,
            masses: vec![0.5; 2 * n],
            symmetrized: true,
        })
    }

    /// Isotropic measure induced by the rows of a full-column-rank matrix:
    /// with `R = (AᵀA)^{-1/2}`, atoms `R a_i / ‖R a_i‖` carry mass
    /// `‖R a_i‖²`. Zero rows are skipped. Returned in symmetrized form.
    pub fn from_frame(rows: &DMatrix<f64>) -> Result<Self> {
        let n = rows.ncols();
        if n == 0 || rows.nrows() < n {
            return Err(Error::InvalidDimension(format!(
                "frame must have at least as many rows as columns, got {}x{}",
                rows.nrows(),
                n
            )));
        }
        let gram = rows.transpose() * rows;
        let r = inv_sqrt_spd(&gram)?;
        let mut atoms = Vec::with_capacity(rows.nrows());
        let mut masses = Vec::with_capacity(rows.nrows());
        for i in 0..rows.nrows() {
            let a = rows.row(i).transpose();
            if a.iter().all(|v| *v == 0.0) {
                continue;
            }
            let u = &r * a;
            let len = u.norm();
            atoms.push(u.iter().map(|v| v / len).collect::<Vec<f64>>());
            masses.push(len * len);
        }
        Self::new(n, &atoms, &masses, false).map(|m| m.symmetrize())
    }

    /// Random isotropic measure with `pairs` antipodal pairs, from a Gaussian
    /// frame. Requires `pairs ≥ n`.
    pub fn random(n: usize, pairs: usize, seed: u64) -> Result<Self> {
        if n == 0 || pairs < n {
            return Err(Error::InvalidDimension(format!(
                "need at least n = {n} atom pairs, got {pairs}"
            )));
        }
        let mut g = GaussianStream::new(seed, 0);
        let rows = DMatrix::from_fn(pairs, n, |_, _| g.gaussian());
        Self::from_frame(&rows)
    }

    /// Compact form: one atom per antipodal pair with the pair's total mass.
    pub fn compact(&self) -> Self {
        if !self.symmetrized {
            return self.clone();
        }
        let mut out = Self {
            dim: self.dim,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            masses: Vec::with_capacity(self.len() / 2),
            symmetrized: false,
        };
        for pair in 0..self.len() / 2 {
            let (idx, vals) = self.atom_sparse(2 * pair);
            out.indices.extend_from_slice(idx);
            out.values.extend_from_slice(vals);
            out.indptr.push(out.indices.len());
            out.masses.push(2.0 * self.masses[2 * pair]);
        }
        out
    }

    /// Explicit `±` form with half masses.
    pub fn symmetrize(&self) -> Self {
        if self.symmetrized {
            return self.clone();
        }
        let mut out = Self {
            dim: self.dim,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            masses: Vec::with_capacity(2 * self.len()),
            symmetrized: true,
        };
        for i in 0..self.len() {
            let (idx, vals) = self.atom_sparse(i);
            let half = 0.5 * self.masses[i];
            for s in [1.0, -1.0] {
                out.indices.extend_from_slice(idx);
                out.values.extend(vals.iter().map(|v| s * v));
                out.indptr.push(out.indices.len());
                out.masses.push(half);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored atoms.
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn is_symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().copied().collect::<CompensatedSum>().value()
    }

    /// Nonzero pattern and values of atom `i`.
    #[inline]
    pub fn atom_sparse(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn atom(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let (idx, vals) = self.atom_sparse(i);
        for (j, v) in idx.iter().zip(vals) {
            out[*j] = *v;
        }
        out
    }

    pub fn atoms(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.atom(i)).collect()
    }

    /// `⟨x, θ_i⟩`.
    #[inline]
    pub fn project(&self, i: usize, x: &[f64]) -> f64 {
        let (idx, vals) = self.atom_sparse(i);
        idx.iter().zip(vals).map(|(j, v)| x[*j] * v).sum()
    }

    /// `‖Σ c_i θ_i θ_iᵀ − I_n‖_F`.
    pub fn isotropy_residual(&self) -> f64 {
        let n = self.dim;
        if n <= DENSE_SECOND_MOMENT_LIMIT {
            let mut s = vec![0.0; n * n];
            for i in 0..self.len() {
                let c = self.masses[i];
                let (idx, vals) = self.atom_sparse(i);
                for (a, va) in idx.iter().zip(vals) {
                    for (b, vb) in idx.iter().zip(vals) {
                        s[a * n + b] += c * va * vb;
                    }
                }
            }
            for d in 0..n {
                s[d * n + d] -= 1.0;
            }
            s.iter().map(|v| v * v).sum::<f64>().sqrt()
        } else {
            let mut s: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for i in 0..self.len() {
                let c = self.masses[i];
                let (idx, vals) = self.atom_sparse(i);
                for (a, va) in idx.iter().zip(vals) {
                    for (b, vb) in idx.iter().zip(vals) {
                        *s.entry((*a, *b)).or_insert(0.0) += c * va * vb;
                    }
                }
            }
            let mut diag_seen = 0usize;
            let mut acc = 0.0;
            for ((a, b), v) in &s {
                let e = if a == b {
                    diag_seen += 1;
                    v - 1.0
                } else {
                    *v
                };
                acc += e * e;
            }
            acc += (n - diag_seen) as f64;
            acc.sqrt()
        }
    }

    /// `Σ c_i ⟨θ_i, T θ_i⟩`; equals `trace(T)` for isotropic measures.
    pub fn trace_form(&self, t: &DMatrix<f64>) -> Result<f64> {
        if t.nrows() != self.dim || t.ncols() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: t.nrows(),
            });
        }
        let mut acc = CompensatedSum::new();
        for i in 0..self.len() {
            let (idx, vals) = self.atom_sparse(i);
            let mut q = 0.0;
            for (a, va) in idx.iter().zip(vals) {
                for (b, vb) in idx.iter().zip(vals) {
                    q += va * t[(*a, *b)] * vb;
                }
            }
            acc.add(self.masses[i] * q);
        }
        Ok(acc.value())
    }
}

/// Canonical measure whose `X_p` space is `ℓ_p^n`.
pub fn coordinate_measure(n: usize) -> Result<DiscreteIsotropicMeasure> {
    DiscreteIsotropicMeasure::coordinate(n)
}

/// Free-function form of [`DiscreteIsotropicMeasure::isotropy_residual`].
pub fn isotropy_residual(measure: &DiscreteIsotropicMeasure) -> f64 {
    measure.isotropy_residual()
}

/// The body `B_q(μ)`, with norm `‖x‖ = (Σ c_i |⟨x, θ_i⟩|^q)^{1/q}`.
#[derive(Clone, Debug)]
pub struct NormBody {
    measure: DiscreteIsotropicMeasure,
    eval: DiscreteIsotropicMeasure,
    q: f64,
    pow: AbsPow,
}

impl NormBody {
    pub fn new(measure: DiscreteIsotropicMeasure, q: f64) -> Result<Self> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::UnsupportedExponent {
                exponent: q,
                reason: "norm exponent must satisfy 1 <= q < inf",
            });
        }
        let eval = measure.compact();
        Ok(Self {
            measure,
            eval,
            q,
            pow: AbsPow::new(q),
        })
    }

    /// Same measure, different exponent.
    pub fn with_exponent(&self, q: f64) -> Result<Self> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::UnsupportedExponent {
                exponent: q,
                reason: "norm exponent must satisfy 1 <= q < inf",
            });
        }
        Ok(Self {
            measure: self.measure.clone(),
            eval: self.eval.clone(),
            q,
            pow: AbsPow::new(q),
        })
    }

    pub fn measure(&self) -> &DiscreteIsotropicMeasure {
        &self.measure
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `Σ c_i |⟨x, θ_i⟩|^q` without the shape check.
    pub fn norm_pow_unchecked(&self, x: &[f64]) -> f64 {
        let m = &self.eval;
        if m.len() > COMPENSATED_THRESHOLD {
            let mut acc = CompensatedSum::new();
            for i in 0..m.len() {
                acc.add(m.masses[i] * self.pow.eval(m.project(i, x)));
            }
            acc.value()
        } else {
            (0..m.len()).map(|i| m.masses[i] * self.pow.eval(m.project(i, x))).sum()
        }
    }

    #[inline]
    pub fn norm_unchecked(&self, x: &[f64]) -> f64 {
        let s = self.norm_pow_unchecked(x);
        match self.pow {
            AbsPow::Int(2) => s.sqrt(),
            _ => s.powf(1.0 / self.q),
        }
    }

    pub fn norm_pow(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.norm_pow_unchecked(x))
    }

    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.norm_unchecked(x))
    }

    /// Gradient of `x ↦ ‖x‖^q`: `q Σ c_i |t_i|^{q-1} sgn(t_i) θ_i` with
    /// `t_i = ⟨x, θ_i⟩` and `sgn(0) = 0`.
    pub fn norm_pow_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !(self.q > 1.0) {
            return Err(Error::UnsupportedExponent {
                exponent: self.q,
                reason: "gradient of the q-th power requires q > 1",
            });
        }
        self.check_len(x)?;
        Ok(self.norm_pow_gradient_unchecked(x))
    }

    pub(crate) fn norm_pow_gradient_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let m = &self.eval;
        let qm1 = AbsPow::new(self.q - 1.0);
        let mut grad = vec![0.0; self.dim()];
        for i in 0..m.len() {
            let t = m.project(i, x);
            if t == 0.0 {
                continue;
            }
            let w = self.q * m.masses[i] * qm1.eval(t) * t.signum();
            let (idx, vals) = m.atom_sparse(i);
            for (j, v) in idx.iter().zip(vals) {
                grad[*j] += w * v;
            }
        }
        grad
    }

    /// Right-hand side of the gradient bound `‖∇(‖x‖^q)‖_2 ≤ q ‖x‖_{B_{2q-2}}^{q-1}`.
    pub fn gradient_bound(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        let pow = AbsPow::new(2.0 * self.q - 2.0);
        let m = &self.eval;
        let s: f64 = (0..m.len()).map(|i| m.masses[i] * pow.eval(m.project(i, x))).sum();
        // ‖x‖_{2q-2}^{q-1} = (Σ c|t|^{2q-2})^{1/2}
        Ok(self.q * s.sqrt())
    }
}

/// `∇(‖x‖_{B_q(μ)}^q)`.
pub fn norm_p_gradient(body: &NormBody, x: &[f64]) -> Result<Vec<f64>> {
    body.norm_pow_gradient(x)
}

pub fn norm(body: &NormBody, x: &[f64]) -> Result<f64> {
    body.norm(x)
}

/// Volume of the unit ball of `ℓ_p^n`: `2^n Γ(1+1/p)^n / Γ(1+n/p)`.
pub fn lp_ball_volume(n: usize, p: f64) -> f64 {
    let nf = n as f64;
    (nf * (2f64.ln() + ln_gamma(1.0 + 1.0 / p)) - ln_gamma(1.0 + nf / p)).exp()
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VolumeCheck {
    pub estimate: f64,
    pub std_err: f64,
    /// `|B_p^n|`.
    pub reference: f64,
    /// Half-width of the sampling box.
    pub box_radius: f64,
    pub samples: usize,
    pub seed: u64,
    /// `estimate ≤ reference + 3·std_err`.
    pub within_bound: bool,
}

/// Hit-or-miss volume estimate of `B_p(μ)` compared with `|B_p^n|`.
///
/// The box `[-r, r]^n` with `r = max(1, n^{1/2-1/p})` contains the body:
/// for `p ≥ 2` Hölder against the isotropic `p = 2` norm gives
/// `‖θ‖_{B_p} ≥ n^{1/p-1/2}` on the sphere, and for `p < 2` the bound
/// `|⟨θ, z⟩| ≤ 1` gives `‖θ‖_{B_p}^p ≥ ‖θ‖_{B_2}^2 = 1`.
pub fn mc_volume_check(body: &NormBody, samples: usize, seed: u64) -> Result<VolumeCheck> {
    let n = body.dim();
    if n > 4 {
        return Err(Error::Scale(format!(
            "volume Monte Carlo is limited to n <= 4, got n = {n}"
        )));
    }
    if samples < 2 {
        return Err(Error::Domain("need at least two samples".into()));
    }
    let p = body.q();
    let r = (n as f64).powf(0.5 - 1.0 / p).max(1.0) * (1.0 + 1e-9);
    let hits: usize = map_indices(shard_lengths(samples).len(), |s| {
        let len = shard_lengths(samples)[s];
        let mut g = GaussianStream::new(seed, s as u64);
        let mut x = vec![0.0; n];
        let mut h = 0usize;
        for _ in 0..len {
            for v in x.iter_mut() {
                *v = g.uniform_in(-r, r);
            }
            if body.norm_pow_unchecked(&x) <= 1.0 {
                h += 1;
            }
        }
        h
    })
    .into_iter()
    .sum();
    let box_vol = (2.0 * r).powi(n as i32);
    let f = hits as f64 / samples as f64;
    let estimate = box_vol * f;
    let std_err = box_vol * (f * (1.0 - f) / samples as f64).sqrt();
    let reference = lp_ball_volume(n, p);
    Ok(VolumeCheck {
        estimate,
        std_err,
        reference,
        box_radius: r,
        samples,
        seed,
        within_bound: estimate <= reference + 3.0 * std_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn coordinate_measure_layout() {
        let m = coordinate_measure(2).unwrap();
        assert_eq!(m.len(), 4);
        assert!(m.masses().iter().all(|&c| c == 0.5));
        assert_eq!(m.total_mass(), 2.0);
        assert_eq!(m.atom(0), vec![1.0, 0.0]);
        assert_eq!(m.atom(1), vec![-1.0, 0.0]);
        assert!(m.is_symmetrized());
    }

    #[test]
    fn coordinate_measure_is_exactly_isotropic() {
        assert_eq!(coordinate_measure(5).unwrap().isotropy_residual(), 0.0);
        assert_eq!(coordinate_measure(3).unwrap().isotropy_residual(), 0.0);
        assert_eq!(coordinate_measure(3000).unwrap().isotropy_residual(), 0.0);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(coordinate_measure(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn coordinate_norm_values() {
        for p in [1.0, 2.5, 3.0, 7.0] {
            let b = NormBody::new(coordinate_measure(3).unwrap(), p).unwrap();
            assert_relative_eq!(
                b.norm(&[1.0, 1.0, 1.0]).unwrap(),
                3f64.powf(1.0 / p),
                max_relative = 1e-15
            );
        }
        let b = NormBody::new(coordinate_measure(4).unwrap(), 3.0).unwrap();
        assert_eq!(b.norm(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        let b = NormBody::new(coordinate_measure(2).unwrap(), 4.0).unwrap();
        assert_relative_eq!(b.norm(&[1.0, 1.0]).unwrap(), 2f64.powf(0.25), max_relative = 1e-15);
        assert_eq!(b.norm(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn norm_shape_error() {
        let b = NormBody::new(coordinate_measure(3).unwrap(), 3.0).unwrap();
        assert_eq!(b.norm(&[1.0, 2.0]), Err(Error::Shape { expected: 3, actual: 2 }));
    }

    #[test]
    fn perturbed_mass_residual() {
        let m = coordinate_measure(3).unwrap();
        let mut masses = m.masses().to_vec();
        masses[0] = 0.6;
        let atoms = m.atoms();
        let p = DiscreteIsotropicMeasure::with_options(
            3,
            &atoms,
            &masses,
            MeasureOptions {
                isotropy_tol: None,
                symmetrized: false,
            },
        )
        .unwrap();
        assert_relative_eq!(p.isotropy_residual(), 0.1, max_relative = 1e-12);
        // one diagonal entry off by 0.2 when both atoms of the pair move
        masses[1] = 0.6;
        let p = DiscreteIsotropicMeasure::with_options(
            3,
            &atoms,
            &masses,
            MeasureOptions {
                isotropy_tol: None,
                symmetrized: true,
            },
        )
        .unwrap();
        assert_relative_eq!(p.isotropy_residual(), 0.2, max_relative = 1e-12);
        assert!(DiscreteIsotropicMeasure::new(3, &atoms, &masses, true).is_err());
    }

    #[test]
    fn sparse_and_dense_residual_paths_agree() {
        // n above the dense limit with one perturbed mass
        let n = DENSE_SECOND_MOMENT_LIMIT + 3;
        let m = coordinate_measure(n).unwrap().compact();
        let mut masses = m.masses().to_vec();
        masses[7] = 1.25;
        let atoms: Vec<Vec<f64>> = (0..m.len()).map(|i| m.atom(i)).collect();
        let p = DiscreteIsotropicMeasure::with_options(
            n,
            &atoms,
            &masses,
            MeasureOptions {
                isotropy_tol: None,
                symmetrized: false,
            },
        )
        .unwrap();
        assert_relative_eq!(p.isotropy_residual(), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn invalid_measures_rejected() {
        let atoms = vec![vec![1.0, 0.0], vec![0.0, 1.1]];
        assert!(DiscreteIsotropicMeasure::new(2, &atoms, &[1.0, 1.0], false).is_err());
        let atoms = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(DiscreteIsotropicMeasure::new(2, &atoms, &[1.0, -1.0], false).is_err());
        assert!(DiscreteIsotropicMeasure::new(2, &atoms, &[1.0, 1.0], false).is_ok());
        assert!(DiscreteIsotropicMeasure::new(2, &atoms, &[1.0, 0.9], false).is_err());
    }

    #[test]
    fn compact_and_symmetrize_round_trip() {
        let m = DiscreteIsotropicMeasure::random(4, 9, 3).unwrap();
        assert!(m.is_symmetrized());
        let c = m.compact();
        assert_eq!(c.len(), 9);
        assert_eq!(c.symmetrize(), m);
        assert!(c.isotropy_residual() < 1e-12);
        assert_relative_eq!(c.total_mass(), 4.0, max_relative = 1e-13);
    }

    #[test]
    fn trace_identity() {
        let m = DiscreteIsotropicMeasure::random(5, 12, 8).unwrap();
        let t = DMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.7);
        let lhs = t.trace();
        let rhs = m.trace_form(&t).unwrap();
        assert!((lhs - rhs).abs() <= 5.0 * 1e-8);
    }

    #[test]
    fn gradient_at_zero_is_zero() {
        let b = NormBody::new(DiscreteIsotropicMeasure::random(4, 7, 1).unwrap(), 4.0).unwrap();
        assert_eq!(b.norm_pow_gradient(&[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn gradient_requires_q_above_one() {
        let b = NormBody::new(coordinate_measure(3).unwrap(), 1.0).unwrap();
        assert!(matches!(
            b.norm_pow_gradient(&[1.0, 0.0, 0.0]),
            Err(Error::UnsupportedExponent { .. })
        ));
    }

    #[test]
    fn coordinate_gradient_closed_form() {
        // d/dx Σ|x_i|^p = p|x_i|^{p-1} sgn(x_i)
        let p = 3.5;
        let b = NormBody::new(coordinate_measure(4).unwrap(), p).unwrap();
        let x = [0.3, -1.2, 0.0, 2.0];
        let g = b.norm_pow_gradient(&x).unwrap();
        for (gi, xi) in g.iter().zip(x) {
            let expected = p * xi.abs().powf(p - 1.0) * xi.signum() * (xi != 0.0) as i32 as f64;
            assert_relative_eq!(*gi, expected, max_relative = 1e-14);
        }
        let lhs = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(lhs, b.gradient_bound(&x).unwrap(), max_relative = 1e-13);
    }

    #[test]
    fn ball_volume_reference_values() {
        assert_relative_eq!(lp_ball_volume(2, 2.0), std::f64::consts::PI, max_relative = 1e-13);
        assert_relative_eq!(
            lp_ball_volume(3, 2.0),
            4.0 / 3.0 * std::f64::consts::PI,
            max_relative = 1e-13
        );
        assert_relative_eq!(lp_ball_volume(2, 1.0), 2.0, max_relative = 1e-13);
        // 4 Γ(5/4)² / Γ(3/2)
        let g54: f64 = 0.906_402_477_055_477_f64;
        let g32: f64 = 0.886_226_925_452_758_f64;
        assert_relative_eq!(lp_ball_volume(2, 4.0), 4.0 * g54 * g54 / g32, max_relative = 1e-12);
        assert_relative_eq!(lp_ball_volume(2, 4.0), 3.7081, max_relative = 1e-4);
    }

    #[test]
    fn volume_check_refuses_large_dimension() {
        let b = NormBody::new(coordinate_measure(5).unwrap(), 3.0).unwrap();
        assert!(matches!(mc_volume_check(&b, 100, 1), Err(Error::Scale(_))));
    }

    #[test]
    fn volume_check_coordinate_cases() {
        let b = NormBody::new(coordinate_measure(2).unwrap(), 4.0).unwrap();
        let v = mc_volume_check(&b, 200_000, 5).unwrap();
        assert!((v.estimate - v.reference).abs() <= 3.0 * v.std_err, "{v:?}");
        assert!(v.within_bound);
        let b = NormBody::new(coordinate_measure(2).unwrap(), 2.0).unwrap();
        let v = mc_volume_check(&b, 200_000, 6).unwrap();
        assert!((v.estimate - std::f64::consts::PI).abs() <= 3.0 * v.std_err, "{v:?}");
    }

    #[test]
    fn volume_check_random_measure_below_lp_ball() {
        let m = DiscreteIsotropicMeasure::random(2, 3, 21).unwrap();
        assert_eq!(m.len(), 6);
        let b = NormBody::new(m, 3.0).unwrap();
        let v = mc_volume_check(&b, 200_000, 9).unwrap();
        assert!(v.within_bound, "{v:?}");
    }
}
