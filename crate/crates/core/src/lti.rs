//! State-space models and their transfer-function views: evaluation,
//! relative degree, DC gain, frequency sweeps and minimality.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{
    check_finite, eigenvalues, is_nonsingular, pbh_controllable, pbh_observable, singular_values,
    to_complex, CMat, Mat, Tolerances,
};

/// Continuous-time model `ẋ = A·x + B·u`, `y = C·x + D·u` with as many
/// outputs as inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    a: Mat,
    b: Mat,
    c: Mat,
    d: Mat,
}

impl StateSpaceModel {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                n,
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "B must have {n} rows, got {}",
                b.nrows()
            )));
        }
        let p = b.ncols();
        if c.nrows() != p || c.ncols() != n {
            return Err(Error::Dimension(format!(
                "C must be {p}x{n}, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if d.nrows() != p || d.ncols() != p {
            return Err(Error::Dimension(format!(
                "D must be {p}x{p}, got {}x{}",
                d.nrows(),
                d.ncols()
            )));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&c, "C"), (&d, "D")] {
            check_finite(m, name)?;
        }
        Ok(Self { a, b, c, d })
    }

    /// Strictly proper model (`D = 0`).
    pub fn strictly_proper(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let p = b.ncols();
        Self::new(a, b, c, Mat::zeros(p, p))
    }

    /// Static gain with no states.
    pub fn static_gain(d: Mat) -> Result<Self> {
        let p = d.nrows();
        Self::new(Mat::zeros(0, 0), Mat::zeros(0, p), Mat::zeros(p, 0), d)
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn d(&self) -> &Mat {
        &self.d
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Number of inputs (= outputs).
    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn is_static(&self) -> bool {
        self.n() == 0
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.iter().all(|v| *v == 0.0)
    }

    /// Realization in coordinates `ξ = T·x`: `(T·A·T⁻¹, T·B, C·T⁻¹, D)`.
    pub fn transformed(&self, t: &Mat) -> Result<Self> {
        let ti = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Precondition("state transformation is singular".into()))?;
        Self::new(
            t * &self.a * &ti,
            t * &self.b,
            &self.c * &ti,
            self.d.clone(),
        )
    }

    pub fn into_parts(self) -> (Mat, Mat, Mat, Mat) {
        (self.a, self.b, self.c, self.d)
    }
}

fn nearest(poles: &[Complex64], s: Complex64) -> Option<(Complex64, f64)> {
    poles
        .iter()
        .map(|&l| (l, (l - s).norm()))
        .min_by(|x, y| x.1.total_cmp(&y.1))
}

fn eval_with_poles(
    sys: &StateSpaceModel,
    poles: &[Complex64],
    s: Complex64,
    tol: &Tolerances,
) -> Result<CMat> {
    let n = sys.n();
    if n == 0 {
        return Ok(to_complex(sys.d()));
    }
    let radius = tol.axis_tol_for(sys.a());
    if let Some((l, dist)) = nearest(poles, s) {
        if dist <= radius {
            return Err(Error::PoleEvaluation { s, nearest: l });
        }
    }
    let mut m = -to_complex(sys.a());
    for i in 0..n {
        m[(i, i)] += s;
    }
    let x = m
        .lu()
        .solve(&to_complex(sys.b()))
        .ok_or_else(|| Error::PoleEvaluation {
            s,
            nearest: nearest(poles, s).map(|p| p.0).unwrap_or(s),
        })?;
    Ok(to_complex(sys.c()) * x + to_complex(sys.d()))
}

/// `R(s) = C·(sI − A)⁻¹·B + D`.
pub fn eval_tf(sys: &StateSpaceModel, s: Complex64, tol: &Tolerances) -> Result<CMat> {
    let poles = eigenvalues(sys.a())?;
    eval_with_poles(sys, &poles, s, tol)
}

/// Relative degree of a strictly proper square model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelativeDegree {
    One,
    Two,
}

impl RelativeDegree {
    pub fn as_usize(self) -> usize {
        match self {
            Self::One => 1,
            Self::Two => 2,
        }
    }
}

/// Relative degree one iff `CB` is nonsingular; two iff `CB ≈ 0` and `CAB`
/// is nonsingular. Singularity is judged by the smallest singular value
/// against `rank_tol` times the product of the factor norms.
pub fn relative_degree(sys: &StateSpaceModel, tol: &Tolerances) -> Result<RelativeDegree> {
    if !sys.is_strictly_proper() {
        return Err(Error::Precondition("relative degree requires D = 0".into()));
    }
    let (a, b, c) = (sys.a(), sys.b(), sys.c());
    let cb = c * b;
    let cb_scale = c.norm() * b.norm();
    if sys.p() == 0 {
        return Err(Error::UnsupportedRelativeDegree(
            "model has no inputs".into(),
        ));
    }
    if cb_scale > 0.0 && is_nonsingular(&cb, tol, cb_scale) {
        return Ok(RelativeDegree::One);
    }
    if cb.norm() <= tol.residual_tol * cb_scale.max(1.0) {
        let cab = c * a * b;
        let cab_scale = c.norm() * a.norm() * b.norm();
        if cab_scale > 0.0 && is_nonsingular(&cab, tol, cab_scale) {
            return Ok(RelativeDegree::Two);
        }
        return Err(Error::UnsupportedRelativeDegree(
            "CB = 0 and CAB is singular (relative degree above two or mixed)".into(),
        ));
    }
    Err(Error::UnsupportedRelativeDegree(
        "CB is neither nonsingular nor zero (mixed relative degree)".into(),
    ))
}

/// `R(0) = D − C·A⁻¹·B`.
pub fn dc_gain(sys: &StateSpaceModel, tol: &Tolerances) -> Result<Mat> {
    if sys.is_static() {
        return Ok(sys.d().clone());
    }
    if !is_nonsingular(sys.a(), tol, 0.0) {
        return Err(Error::PoleAtOrigin);
    }
    let x = sys
        .a()
        .clone()
        .lu()
        .solve(sys.b())
        .ok_or(Error::PoleAtOrigin)?;
    Ok(sys.d() - sys.c() * x)
}

/// One point of a frequency response.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySample {
    pub omega: f64,
    pub response: CMat,
}

/// A grid frequency at which `jω` coincides with a pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleHit {
    pub omega: f64,
    pub pole: Complex64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrequencySweep {
    pub samples: Vec<FrequencySample>,
    pub pole_hits: Vec<PoleHit>,
}

/// Evaluate `R(jω)` on a caller-supplied grid. Grid points that land on a
/// pole are returned in `pole_hits` instead of `samples`.
///
/// Each sample depends only on its own ω, so the parallel evaluation is
/// bit-identical to a sequential one.
pub fn freq_sweep(
    sys: &StateSpaceModel,
    omega_grid: &[f64],
    tol: &Tolerances,
) -> Result<FrequencySweep> {
    if omega_grid.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Precondition(
            "frequency grid must be finite and positive".into(),
        ));
    }
    if omega_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "frequency grid must be strictly increasing".into(),
        ));
    }
    let poles = if sys.is_static() {
        Vec::new()
    } else {
        eigenvalues(sys.a())?
    };
    let results: Vec<Result<FrequencySample>> = omega_grid
        .par_iter()
        .map(|&omega| {
            eval_with_poles(sys, &poles, Complex64::new(0.0, omega), tol)
                .map(|response| FrequencySample { omega, response })
        })
        .collect();
    let mut sweep = FrequencySweep::default();
    for (r, &omega) in results.into_iter().zip(omega_grid) {
        match r {
            Ok(s) => sweep.samples.push(s),
            Err(Error::PoleEvaluation { nearest, .. }) => sweep.pole_hits.push(PoleHit {
                omega,
                pole: nearest,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(sweep)
}

/// Logarithmically spaced grid of `points` frequencies from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (l0, l1) = (lo.log10(), hi.log10());
            (0..points)
                .map(|k| 10f64.powf(l0 + (l1 - l0) * k as f64 / (points - 1) as f64))
                .collect()
        }
    }
}

/// Controllable and observable by the PBH tests.
pub fn is_minimal(sys: &StateSpaceModel, tol: &Tolerances) -> bool {
    pbh_controllable(sys.a(), sys.b(), tol) && pbh_observable(sys.a(), sys.c(), tol)
}

/// Monic polynomial (coefficients in descending powers) with the given
/// roots; imaginary parts of the coefficients are discarded.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k] += ck;
            next[k + 1] -= ck * r;
        }
        c = next;
    }
    c.into_iter().map(|z| z.re).collect()
}

/// `det(sI − A)` in descending powers.
pub fn characteristic_polynomial(a: &Mat) -> Result<Vec<f64>> {
    Ok(poly_from_roots(&eigenvalues(a)?))
}

/// Numerator and denominator of a single-input single-output model,
/// descending powers; the numerator has the same length as the denominator.
///
/// Uses `det(sI − A + B·C) = det(sI − A)·(1 + C(sI − A)⁻¹B)`.
pub fn siso_polynomials(sys: &StateSpaceModel) -> Result<(Vec<f64>, Vec<f64>)> {
    if sys.p() != 1 {
        return Err(Error::Dimension(
            "transfer polynomials need a SISO model".into(),
        ));
    }
    let den = characteristic_polynomial(sys.a())?;
    let shifted = characteristic_polynomial(&(sys.a() - sys.b() * sys.c()))?;
    let d = sys.d()[(0, 0)];
    let num = shifted
        .iter()
        .zip(&den)
        .map(|(s, a)| s - a + d * a)
        .collect();
    Ok((num, den))
}

/// Evaluate a polynomial in descending powers.
pub fn polyval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub(crate) fn max_abs_eigenvalue(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Largest singular value.
pub fn norm2(m: &Mat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

#[cfg(test)]
pub(crate) fn dvec(v: &[f64]) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(v)
}
