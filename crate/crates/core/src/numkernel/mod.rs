//! Dense linear-algebra primitives shared by every other module:
//! definiteness tests, positive definite square roots, Lyapunov solves,
//! spectral classification and PBH rank tests.
//!
//! Everything here is a pure function of its inputs.

mod lyapunov;
mod spectrum;

pub use lyapunov::{solve_lyapunov, solve_lyapunov_kron};
pub use spectrum::{
    classify_spectrum, eigen_clusters, eigenvalues, real_schur, EigenCluster, SpectralClass,
    SpectralClassification,
};

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real dense matrix.
pub type Mat = DMatrix<f64>;
/// Complex dense matrix.
pub type CMat = DMatrix<Complex64>;

/// Numerical tolerances used throughout the crate.
///
/// `eig_axis_tol` is relative: the effective distance to the imaginary axis
/// treated as zero is `eig_axis_tol * ‖A‖_F` for the matrix under test.
/// `rank_tol` is a relative singular-value cutoff. `psd_tol`,
/// `residual_tol` and `strict_margin` are absolute unless a call site
/// documents a scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eig_axis_tol: f64,
    pub rank_tol: f64,
    pub psd_tol: f64,
    pub residual_tol: f64,
    pub strict_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eig_axis_tol: 1e-8,
            rank_tol: 1e-10,
            psd_tol: 1e-9,
            residual_tol: 1e-9,
            strict_margin: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn new(
        eig_axis_tol: f64,
        rank_tol: f64,
        psd_tol: f64,
        residual_tol: f64,
        strict_margin: f64,
    ) -> Result<Self> {
        let t = Self {
            eig_axis_tol,
            rank_tol,
            psd_tol,
            residual_tol,
            strict_margin,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("eig_axis_tol", self.eig_axis_tol),
            ("rank_tol", self.rank_tol),
            ("psd_tol", self.psd_tol),
            ("residual_tol", self.residual_tol),
            ("strict_margin", self.strict_margin),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidOption(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Absolute imaginary-axis tolerance for eigenvalues of `a`; the norm is
    /// floored at one so round-off on a zero matrix is not read as a mode.
    pub fn axis_tol_for(&self, a: &Mat) -> f64 {
        self.eig_axis_tol * a.norm().max(1.0)
    }
}

/// `(M + Mᵀ) / 2`.
pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Relative asymmetry `‖M − Mᵀ‖_F / max(1, ‖M‖_F)`.
pub fn asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).norm() / m.norm().max(1.0)
}

pub(crate) fn check_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure(format!(
            "{what} has non-finite entries"
        )))
    }
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    check_square(m, "matrix")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    check_finite(m, "matrix")?;
    let eig = SymmetricEigen::try_new(sym(m), f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Smallest eigenvalue of `sym(m)`; `+∞` for an empty matrix.
pub fn min_sym_eigenvalue(m: &Mat) -> Result<f64> {
    Ok(sym_eigenvalues(m)?
        .first()
        .copied()
        .unwrap_or(f64::INFINITY))
}

/// Largest eigenvalue of `sym(m)`; `−∞` for an empty matrix.
pub fn max_sym_eigenvalue(m: &Mat) -> Result<f64> {
    Ok(sym_eigenvalues(m)?
        .last()
        .copied()
        .unwrap_or(f64::NEG_INFINITY))
}

/// `λ_min(sym(M)) ≥ −psd_tol`.
pub fn is_psd(m: &Mat, tol: &Tolerances) -> bool {
    min_sym_eigenvalue(m).is_ok_and(|l| l >= -tol.psd_tol)
}

/// `λ_min(sym(M)) > psd_tol`.
pub fn is_pd(m: &Mat, tol: &Tolerances) -> bool {
    min_sym_eigenvalue(m).is_ok_and(|l| l > tol.psd_tol)
}

/// `λ_max(sym(M)) ≤ psd_tol`.
pub fn is_nsd(m: &Mat, tol: &Tolerances) -> bool {
    max_sym_eigenvalue(m).is_ok_and(|l| l <= tol.psd_tol)
}

/// `λ_max(sym(M)) < −psd_tol`.
pub fn is_nd(m: &Mat, tol: &Tolerances) -> bool {
    max_sym_eigenvalue(m).is_ok_and(|l| l < -tol.psd_tol)
}

/// Unique symmetric positive definite square root.
pub fn sqrt_pd(m: &Mat, tol: &Tolerances) -> Result<Mat> {
    check_square(m, "matrix")?;
    check_finite(m, "matrix")?;
    if asymmetry(m) > tol.residual_tol {
        return Err(Error::Precondition("matrix is not symmetric".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let eig = SymmetricEigen::try_new(sym(m), f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;
    let min = eig.eigenvalues.min();
    if min <= tol.psd_tol {
        return Err(Error::Precondition(format!(
            "matrix is not positive definite (λ_min = {min:e})"
        )));
    }
    let v = &eig.eigenvectors;
    let d = Mat::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let s = sym(&(v * d * v.transpose()));
    let resid = (&s * &s - m).norm();
    if resid > tol.residual_tol * m.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::NumericalFailure(format!(
            "square root residual {resid:e} above tolerance"
        )));
    }
    Ok(s)
}

/// Singular values of a complex matrix, descending.
pub fn complex_singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = SVD::new(m.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Singular values of a real matrix, descending.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = SVD::new(m.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Smallest singular value of a square matrix (`+∞` when empty).
pub fn sigma_min(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return f64::INFINITY;
    }
    *singular_values(m).last().unwrap_or(&0.0)
}

/// Numerical rank with cutoff `rel_tol * scale`, where `scale` defaults to
/// the largest singular value.
pub fn numerical_rank(m: &Mat, rel_tol: f64, scale: Option<f64>) -> usize {
    let s = singular_values(m);
    let scale = scale.unwrap_or_else(|| s.first().copied().unwrap_or(0.0));
    s.iter().filter(|&&v| v > rel_tol * scale).count()
}

/// `σ_min(M) > rank_tol · scale`, with `scale = max(σ_max(M), floor)`.
pub fn is_nonsingular(m: &Mat, tol: &Tolerances, floor: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let s = singular_values(m);
    let scale = s[0].max(floor);
    *s.last().unwrap() > tol.rank_tol * scale
}

pub(crate) fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Per-eigenvalue PBH verdicts for a triple `(A, B, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PbhMode {
    pub eigenvalue: Complex64,
    pub multiplicity: usize,
    pub controllable: bool,
    pub observable: bool,
}

fn pbh_rank_full(a: &Mat, b: &Mat, lambda: Complex64, tol: &Tolerances) -> bool {
    let n = a.nrows();
    let p = b.ncols();
    let mut m = CMat::zeros(n, n + p);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = Complex64::new(-a[(i, j)], 0.0);
        }
        m[(i, i)] += lambda;
        for j in 0..p {
            m[(i, n + j)] = Complex64::new(b[(i, j)], 0.0);
        }
    }
    let s = complex_singular_values(&m);
    if s.len() < n {
        return false;
    }
    let scale = s[0].max(a.norm()).max(b.norm()).max(f64::MIN_POSITIVE);
    s[n - 1] > tol.rank_tol * scale
}

/// PBH modal report of `(A, B, C)`: for each distinct eigenvalue cluster of
/// `A`, whether `[λI − A, B]` and `[λI − A; C]` have full rank.
pub fn pbh_modes(a: &Mat, b: &Mat, c: &Mat, tol: &Tolerances) -> Result<Vec<PbhMode>> {
    check_square(a, "A")?;
    let n = a.nrows();
    if b.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension("PBH: incompatible A, B, C".into()));
    }
    let clusters = eigen_clusters(a, tol)?;
    let at = a.transpose();
    let ct = c.transpose();
    Ok(clusters
        .into_iter()
        .map(|cl| PbhMode {
            eigenvalue: cl.center,
            multiplicity: cl.multiplicity,
            controllable: pbh_rank_full(a, b, cl.center, tol),
            observable: pbh_rank_full(&at, &ct, cl.center, tol),
        })
        .collect())
}

/// PBH controllability test: `rank [λI − A, B] = n` at every eigenvalue of `A`.
pub fn pbh_controllable(a: &Mat, b: &Mat, tol: &Tolerances) -> bool {
    if a.nrows() != a.ncols() || b.nrows() != a.nrows() {
        return false;
    }
    if a.nrows() == 0 {
        return true;
    }
    match eigen_clusters(a, tol) {
        Ok(cl) => cl.iter().all(|c| pbh_rank_full(a, b, c.center, tol)),
        Err(_) => false,
    }
}

/// PBH observability test: `rank [λI − A; C] = n` at every eigenvalue of `A`.
pub fn pbh_observable(a: &Mat, c: &Mat, tol: &Tolerances) -> bool {
    pbh_controllable(&a.transpose(), &c.transpose(), tol)
}
