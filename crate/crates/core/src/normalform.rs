//! Special coordinate basis for relative degree one and two, and the
//! skew/Hurwitz modal split of the zero dynamics.

use nalgebra::SVD;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{relative_degree, RelativeDegree, StateSpaceModel};
use crate::numkernel::{
    classify_spectrum, eigen_clusters, singular_values, to_complex, CMat, Mat, SpectralClass,
    Tolerances,
};

/// Normal form for relative degree one: `[z; y] = T·x`,
/// `ż = A11·z + A12·y`, `ẏ = A21·z + A22·y + CB·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormRD1 {
    pub t: Mat,
    pub t_inv: Mat,
    pub a11: Mat,
    pub a12: Mat,
    pub a21: Mat,
    pub a22: Mat,
    pub cb: Mat,
}

/// Normal form for relative degree two: `[z; x₁; x₂] = T·x`,
/// `ż = A11·z + A12·x₁ + A13·x₂`, `ẋ₁ = x₂`,
/// `ẋ₂ = A31·z + A32·x₁ + A33·x₂ + CAB·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormRD2 {
    pub t: Mat,
    pub t_inv: Mat,
    pub a11: Mat,
    pub a12: Mat,
    pub a13: Mat,
    pub a31: Mat,
    pub a32: Mat,
    pub a33: Mat,
    pub cab: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormalForm {
    Rd1(NormalFormRD1),
    Rd2(NormalFormRD2),
}

impl NormalFormRD1 {
    pub fn m(&self) -> usize {
        self.a11.nrows()
    }
    pub fn p(&self) -> usize {
        self.a22.nrows()
    }

    /// Open-loop realization in normal-form coordinates.
    pub fn realization(&self) -> StateSpaceModel {
        let (m, p) = (self.m(), self.p());
        let mut a = Mat::zeros(m + p, m + p);
        a.view_mut((0, 0), (m, m)).copy_from(&self.a11);
        a.view_mut((0, m), (m, p)).copy_from(&self.a12);
        a.view_mut((m, 0), (p, m)).copy_from(&self.a21);
        a.view_mut((m, m), (p, p)).copy_from(&self.a22);
        let mut b = Mat::zeros(m + p, p);
        b.view_mut((m, 0), (p, p)).copy_from(&self.cb);
        let mut c = Mat::zeros(p, m + p);
        c.view_mut((0, m), (p, p)).fill_with_identity();
        StateSpaceModel::strictly_proper(a, b, c).expect("normal-form blocks are consistent")
    }

    /// Normal form with no internal dynamics (`m = 0`).
    pub fn without_internal_dynamics(a22: Mat, cb: Mat) -> Self {
        let p = a22.nrows();
        Self {
            t: Mat::identity(p, p),
            t_inv: Mat::identity(p, p),
            a11: Mat::zeros(0, 0),
            a12: Mat::zeros(0, p),
            a21: Mat::zeros(p, 0),
            a22,
            cb,
        }
    }
}

impl NormalFormRD2 {
    pub fn m(&self) -> usize {
        self.a11.nrows()
    }
    pub fn p(&self) -> usize {
        self.a33.nrows()
    }

    /// `A11·A13 + A12`, the input matrix of the controllability pair.
    pub fn pair_input(&self) -> Mat {
        &self.a11 * &self.a13 + &self.a12
    }

    /// Open-loop realization in normal-form coordinates.
    pub fn realization(&self) -> StateSpaceModel {
        let (m, p) = (self.m(), self.p());
        let n = m + 2 * p;
        let mut a = Mat::zeros(n, n);
        a.view_mut((0, 0), (m, m)).copy_from(&self.a11);
        a.view_mut((0, m), (m, p)).copy_from(&self.a12);
        a.view_mut((0, m + p), (m, p)).copy_from(&self.a13);
        a.view_mut((m, m + p), (p, p)).fill_with_identity();
        a.view_mut((m + p, 0), (p, m)).copy_from(&self.a31);
        a.view_mut((m + p, m), (p, p)).copy_from(&self.a32);
        a.view_mut((m + p, m + p), (p, p)).copy_from(&self.a33);
        let mut b = Mat::zeros(n, p);
        b.view_mut((m + p, 0), (p, p)).copy_from(&self.cab);
        let mut c = Mat::zeros(p, n);
        c.view_mut((0, m), (p, p)).fill_with_identity();
        StateSpaceModel::strictly_proper(a, b, c).expect("normal-form blocks are consistent")
    }

    /// Normal form with no internal dynamics (`m = 0`).
    pub fn without_internal_dynamics(a32: Mat, a33: Mat, cab: Mat) -> Self {
        let p = a33.nrows();
        Self {
            t: Mat::identity(2 * p, 2 * p),
            t_inv: Mat::identity(2 * p, 2 * p),
            a11: Mat::zeros(0, 0),
            a12: Mat::zeros(0, p),
            a13: Mat::zeros(0, p),
            a31: Mat::zeros(p, 0),
            a32,
            a33,
            cab,
        }
    }
}

impl NormalForm {
    pub fn relative_degree(&self) -> RelativeDegree {
        match self {
            Self::Rd1(_) => RelativeDegree::One,
            Self::Rd2(_) => RelativeDegree::Two,
        }
    }
    pub fn a11(&self) -> &Mat {
        match self {
            Self::Rd1(nf) => &nf.a11,
            Self::Rd2(nf) => &nf.a11,
        }
    }
    pub fn t(&self) -> &Mat {
        match self {
            Self::Rd1(nf) => &nf.t,
            Self::Rd2(nf) => &nf.t,
        }
    }
    pub fn m(&self) -> usize {
        self.a11().nrows()
    }
    pub fn p(&self) -> usize {
        match self {
            Self::Rd1(nf) => nf.p(),
            Self::Rd2(nf) => nf.p(),
        }
    }
    /// Input matrix of the zero-dynamics controllability pair:
    /// `A12` (relative degree one) or `A11·A13 + A12` (two).
    pub fn pair_input(&self) -> Mat {
        match self {
            Self::Rd1(nf) => nf.a12.clone(),
            Self::Rd2(nf) => nf.pair_input(),
        }
    }
    /// Input-channel matrix `CB` or `CAB`.
    pub fn input_matrix(&self) -> &Mat {
        match self {
            Self::Rd1(nf) => &nf.cb,
            Self::Rd2(nf) => &nf.cab,
        }
    }
    pub fn realization(&self) -> StateSpaceModel {
        match self {
            Self::Rd1(nf) => nf.realization(),
            Self::Rd2(nf) => nf.realization(),
        }
    }
}

/// Flip each row so that its largest-magnitude entry is positive.
fn normalize_row_signs(m: &mut Mat) {
    for i in 0..m.nrows() {
        let row = m.row(i);
        let mut best = 0;
        for j in 1..row.len() {
            if row[j].abs() > row[best].abs() + 1e-12 {
                best = j;
            }
        }
        if !row.is_empty() && row[best] < 0.0 {
            m.row_mut(i).neg_mut();
        }
    }
}

/// Orthonormal rows spanning `{w : wᵀ·M = 0}`, ordered by the singular value
/// decomposition of `M`.
pub(crate) fn left_null_basis(m: &Mat, rank_tol: f64) -> Mat {
    let n = m.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let k = m.ncols();
    // pad to at least n columns so that U is n×n
    let mut padded = Mat::zeros(n, n.max(k));
    padded.view_mut((0, 0), (n, k)).copy_from(m);
    let svd = SVD::new(padded, true, false);
    let u = svd.u.expect("U requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = svd.singular_values.max();
    let null: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] <= rank_tol * smax.max(f64::MIN_POSITIVE))
        .collect();
    let mut basis = Mat::zeros(null.len(), n);
    for (r, &i) in null.iter().enumerate() {
        basis.row_mut(r).copy_from(&u.column(i).transpose());
    }
    basis
}

fn check_block(resid: f64, scale: f64, tol: &Tolerances, what: &str) -> Result<()> {
    if resid > tol.residual_tol * scale.max(1.0) {
        return Err(Error::Construction(format!(
            "{what} residual {resid:e} above tolerance"
        )));
    }
    Ok(())
}

fn invert(t: &Mat) -> Result<Mat> {
    t.clone()
        .try_inverse()
        .ok_or_else(|| Error::Construction("state transformation is singular".into()))
}

/// Relative-degree-one normal form. `C_z` is an orthonormal basis of the left
/// null space of `B`.
pub fn to_normal_form_rd1(sys: &StateSpaceModel, tol: &Tolerances) -> Result<NormalFormRD1> {
    if relative_degree(sys, tol)? != RelativeDegree::One {
        return Err(Error::Precondition(
            "system does not have relative degree one".into(),
        ));
    }
    let (n, p) = (sys.n(), sys.p());
    let m = n - p;
    let mut cz = left_null_basis(sys.b(), tol.rank_tol);
    if cz.nrows() != m {
        return Err(Error::Construction(format!(
            "left null space of B has dimension {}, expected {m}",
            cz.nrows()
        )));
    }
    normalize_row_signs(&mut cz);
    let mut t = Mat::zeros(n, n);
    t.view_mut((0, 0), (m, n)).copy_from(&cz);
    t.view_mut((m, 0), (p, n)).copy_from(sys.c());
    let t_inv = invert(&t)?;
    let abar = &t * sys.a() * &t_inv;
    let bbar = &t * sys.b();
    let scale = sys.a().norm() * t.norm() * t_inv.norm();
    check_block(bbar.rows(0, m).norm(), sys.b().norm(), tol, "T·B top block")?;
    let nf = NormalFormRD1 {
        a11: abar.view((0, 0), (m, m)).into_owned(),
        a12: abar.view((0, m), (m, p)).into_owned(),
        a21: abar.view((m, 0), (p, m)).into_owned(),
        a22: abar.view((m, m), (p, p)).into_owned(),
        cb: bbar.rows(m, p).into_owned(),
        t,
        t_inv,
    };
    check_block(
        (sys.c() * &nf.t_inv - nf.realization().c()).norm(),
        1.0,
        tol,
        "C·T⁻¹",
    )?;
    let _ = scale;
    Ok(nf)
}

/// Relative-degree-two normal form. `C_z` is drawn from the left null space
/// of `B`, taking the directions that best complete `[C; CA]` to a basis.
pub fn to_normal_form_rd2(sys: &StateSpaceModel, tol: &Tolerances) -> Result<NormalFormRD2> {
    if relative_degree(sys, tol)? != RelativeDegree::Two {
        return Err(Error::Precondition(
            "system does not have relative degree two".into(),
        ));
    }
    let (n, p) = (sys.n(), sys.p());
    if n < 2 * p {
        return Err(Error::Construction(format!("n = {n} < 2p = {}", 2 * p)));
    }
    let m = n - 2 * p;
    let c = sys.c();
    let ca = c * sys.a();
    let mut cz = Mat::zeros(m, n);
    if m > 0 {
        let null_b = left_null_basis(sys.b(), tol.rank_tol);
        // orthonormal basis of rowspace([C; CA])
        let mut r = Mat::zeros(2 * p, n);
        r.view_mut((0, 0), (p, n)).copy_from(c);
        r.view_mut((p, 0), (p, n)).copy_from(&ca);
        let comp = left_null_basis(&r.transpose(), tol.rank_tol); // rows ⟂ rowspace(R)
        let projector = comp.transpose() * &comp;
        let projected = &null_b * projector;
        let svd = SVD::new(projected.clone(), true, false);
        let u = svd.u.expect("U requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        if order.len() < m || svd.singular_values[order[m - 1]] <= tol.rank_tol * smax.max(1.0) {
            return Err(Error::Construction(
                "no complement of [C; CA] found in the left null space of B".into(),
            ));
        }
        let mut g = Mat::zeros(m, null_b.nrows());
        for (r_i, &k) in order.iter().take(m).enumerate() {
            g.row_mut(r_i).copy_from(&u.column(k).transpose());
        }
        cz = g * null_b;
        normalize_row_signs(&mut cz);
    }
    let mut t = Mat::zeros(n, n);
    t.view_mut((0, 0), (m, n)).copy_from(&cz);
    t.view_mut((m, 0), (p, n)).copy_from(c);
    t.view_mut((m + p, 0), (p, n)).copy_from(&ca);
    let t_inv = invert(&t)?;
    let abar = &t * sys.a() * &t_inv;
    let bbar = &t * sys.b();
    check_block(
        bbar.rows(0, m + p).norm(),
        sys.b().norm(),
        tol,
        "T·B upper blocks",
    )?;
    let mut chain = Mat::zeros(p, n);
    chain.view_mut((0, m + p), (p, p)).fill_with_identity();
    check_block(
        (abar.rows(m, p) - chain).norm(),
        sys.a().norm() * t.norm() * t_inv.norm(),
        tol,
        "chain row ẋ₁ = x₂",
    )?;
    Ok(NormalFormRD2 {
        a11: abar.view((0, 0), (m, m)).into_owned(),
        a12: abar.view((0, m), (m, p)).into_owned(),
        a13: abar.view((0, m + p), (m, p)).into_owned(),
        a31: abar.view((m + p, 0), (p, m)).into_owned(),
        a32: abar.view((m + p, m), (p, p)).into_owned(),
        a33: abar.view((m + p, m + p), (p, p)).into_owned(),
        cab: bbar.rows(m + p, p).into_owned(),
        t,
        t_inv,
    })
}

/// Normal form of either supported relative degree.
pub fn to_normal_form(sys: &StateSpaceModel, tol: &Tolerances) -> Result<NormalForm> {
    match relative_degree(sys, tol)? {
        RelativeDegree::One => to_normal_form_rd1(sys, tol).map(NormalForm::Rd1),
        RelativeDegree::Two => to_normal_form_rd2(sys, tol).map(NormalForm::Rd2),
    }
}

/// `S·A11·S⁻¹ = diag(A11a, A11b)` with `A11a` skew-symmetric (spectrum on
/// `jℝ∖{0}`) and `A11b` Hurwitz.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSplit {
    pub s: Mat,
    pub s_inv: Mat,
    /// Stored exactly as a block diagonal of `[[0, ω], [−ω, 0]]` blocks.
    pub a11a: Mat,
    pub a11b: Mat,
}

impl ModalSplit {
    pub fn m_a(&self) -> usize {
        self.a11a.nrows()
    }
    pub fn m_b(&self) -> usize {
        self.a11b.nrows()
    }
    pub fn m(&self) -> usize {
        self.s.nrows()
    }

    /// `diag(A11a, A11b)`.
    pub fn block_diag(&self) -> Mat {
        let (ma, mb) = (self.m_a(), self.m_b());
        let mut d = Mat::zeros(ma + mb, ma + mb);
        d.view_mut((0, 0), (ma, ma)).copy_from(&self.a11a);
        d.view_mut((ma, ma), (mb, mb)).copy_from(&self.a11b);
        d
    }

    /// `‖S·A11·S⁻¹ − diag(A11a, A11b)‖_F`.
    pub fn residual(&self, a11: &Mat) -> f64 {
        (&self.s * a11 * &self.s_inv - self.block_diag()).norm()
    }

    /// The identity split of an empty or purely Hurwitz block.
    fn trivial(a11: &Mat) -> Self {
        let m = a11.nrows();
        Self {
            s: Mat::identity(m, m),
            s_inv: Mat::identity(m, m),
            a11a: Mat::zeros(0, 0),
            a11b: a11.clone(),
        }
    }
}

/// Real basis `[Re v, Im v]` of the eigenspace of `a` at `jω`, with each
/// complex eigenvector rotated so that its real and imaginary parts are
/// orthogonal.
fn imaginary_eigenspace(a: &Mat, omega: f64, k: usize) -> Result<Mat> {
    let m = a.nrows();
    let mut shifted: CMat = to_complex(a);
    for i in 0..m {
        shifted[(i, i)] -= Complex64::new(0.0, omega);
    }
    let svd = SVD::new(shifted, false, true);
    let v_t = svd.v_t.expect("V requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    let mut out = Mat::zeros(m, 2 * k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        // rows of Vᴴ are conjugated right singular vectors
        let mut v: Vec<Complex64> = v_t.row(idx).iter().map(|z| z.conj()).collect();
        let q: Complex64 = v.iter().map(|z| z * z).sum();
        let rot = Complex64::from_polar(1.0, -0.5 * q.arg());
        for z in v.iter_mut() {
            *z *= rot;
        }
        let xn = v.iter().map(|z| z.re * z.re).sum::<f64>().sqrt();
        let yn = v.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
        if xn < 1e-8 || yn < 1e-8 {
            return Err(Error::NumericalFailure(
                "degenerate eigenvector for an imaginary-axis eigenvalue".into(),
            ));
        }
        for i in 0..m {
            out[(i, 2 * col)] = v[i].re;
            out[(i, 2 * col + 1)] = v[i].im;
        }
    }
    Ok(out)
}

/// Split `A11` into skew-symmetric and Hurwitz parts by a real similarity.
///
/// Each conjugate pair `±jω` becomes the block `[[0, ω], [−ω, 0]]`. The
/// imaginary-axis invariant subspace is spanned by real and imaginary parts
/// of eigenvectors; the Hurwitz invariant subspace is the orthogonal
/// complement of the corresponding left eigenvectors.
pub fn modal_split(a11: &Mat, tol: &Tolerances) -> Result<ModalSplit> {
    let m = a11.nrows();
    if m == 0 {
        return Ok(ModalSplit::trivial(a11));
    }
    let cls = classify_spectrum(a11, tol)?;
    if cls.has_zero() {
        return Err(Error::ZeroAtOrigin(format!("{:?}", cls.eigenvalues)));
    }
    if !cls.is_lyapunov_stable() {
        return Err(Error::NotLyapunovStable(format!("{:?}", cls.eigenvalues)));
    }
    if cls.count(SpectralClass::PurelyImaginaryNonzero) == 0 {
        return Ok(ModalSplit::trivial(a11));
    }
    // positive-frequency imaginary clusters
    let axis = tol.axis_tol_for(a11);
    let clusters: Vec<_> = eigen_clusters(a11, tol)?
        .into_iter()
        .filter(|c| c.center.re.abs() <= axis && c.center.im > 0.0)
        .collect();
    let ma: usize = 2 * clusters.iter().map(|c| c.multiplicity).sum::<usize>();
    let mb = m - ma;
    let mut va = Mat::zeros(m, ma);
    let mut ua = Mat::zeros(m, ma);
    let mut a11a = Mat::zeros(ma, ma);
    let at = a11.transpose();
    let mut col = 0;
    for c in &clusters {
        let omega = c.center.im;
        let k = c.multiplicity;
        va.view_mut((0, col), (m, 2 * k))
            .copy_from(&imaginary_eigenspace(a11, omega, k)?);
        ua.view_mut((0, col), (m, 2 * k))
            .copy_from(&imaginary_eigenspace(&at, omega, k)?);
        for j in 0..k {
            let o = col + 2 * j;
            a11a[(o, o + 1)] = omega;
            a11a[(o + 1, o)] = -omega;
        }
        col += 2 * k;
    }
    let wb = if mb == 0 {
        Mat::zeros(m, 0)
    } else {
        let comp = left_null_basis(&ua, 1e-8);
        if comp.nrows() != mb {
            return Err(Error::NumericalFailure(format!(
                "Hurwitz invariant subspace has dimension {}, expected {mb}",
                comp.nrows()
            )));
        }
        comp.transpose()
    };
    let mut s_inv = Mat::zeros(m, m);
    s_inv.view_mut((0, 0), (m, ma)).copy_from(&va);
    s_inv.view_mut((0, ma), (m, mb)).copy_from(&wb);
    let s = s_inv
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("modal transformation is singular".into()))?;
    let transformed = &s * a11 * &s_inv;
    let a11b: Mat = transformed.view((ma, ma), (mb, mb)).into_owned();
    let split = ModalSplit {
        s,
        s_inv,
        a11a,
        a11b,
    };
    let sv = singular_values(&split.s_inv);
    let cond =
        sv.first().unwrap_or(&1.0) / sv.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let resid = split.residual(a11);
    if resid > tol.residual_tol * a11.norm().max(1.0) * cond {
        return Err(Error::NumericalFailure(format!(
            "modal split residual {resid:e} above tolerance"
        )));
    }
    if mb > 0 && !classify_spectrum(&split.a11b, tol)?.is_hurwitz() {
        return Err(Error::NumericalFailure(
            "Hurwitz block of the modal split is not Hurwitz".into(),
        ));
    }
    Ok(split)
}

/// Outcome of the weak-minimum-phase test on the zero dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum WeakMinimumPhase {
    Pass,
    Fail {
        reason: WmpFailure,
        offending: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WmpFailure {
    RightHalfPlaneZero,
    NonSemisimpleImaginaryZero,
    ZeroAtOrigin,
    EigensolverFailure,
}

impl WeakMinimumPhase {
    pub fn passed(&self) -> bool {
        matches!(self, Self::Pass)
    }
}

/// Zero dynamics Lyapunov stable and without an eigenvalue at the origin.
pub fn check_weakly_minimum_phase(a11: &Mat, tol: &Tolerances) -> WeakMinimumPhase {
    if a11.nrows() == 0 {
        return WeakMinimumPhase::Pass;
    }
    let cls = match classify_spectrum(a11, tol) {
        Ok(c) => c,
        Err(_) => {
            return WeakMinimumPhase::Fail {
                reason: WmpFailure::EigensolverFailure,
                offending: Vec::new(),
            }
        }
    };
    let pick = |pred: &dyn Fn(usize) -> bool| -> Vec<(f64, f64)> {
        (0..cls.eigenvalues.len())
            .filter(|&i| pred(i))
            .map(|i| (cls.eigenvalues[i].re, cls.eigenvalues[i].im))
            .collect()
    };
    let rhp = pick(&|i| cls.classes[i] == SpectralClass::OpenRightHalfPlane);
    if !rhp.is_empty() {
        return WeakMinimumPhase::Fail {
            reason: WmpFailure::RightHalfPlaneZero,
            offending: rhp,
        };
    }
    let zero = pick(&|i| cls.classes[i] == SpectralClass::Zero);
    let defective =
        pick(&|i| cls.classes[i] == SpectralClass::PurelyImaginaryNonzero && !cls.semisimple[i]);
    if !defective.is_empty() {
        return WeakMinimumPhase::Fail {
            reason: WmpFailure::NonSemisimpleImaginaryZero,
            offending: defective,
        };
    }
    if !zero.is_empty() {
        return WeakMinimumPhase::Fail {
            reason: WmpFailure::ZeroAtOrigin,
            offending: zero,
        };
    }
    WeakMinimumPhase::Pass
}

/// `true` iff every eigenvalue of `a11` keeps away from the origin.
pub fn has_zero_at_origin(a11: &Mat, tol: &Tolerances) -> Result<bool> {
    if a11.nrows() == 0 {
        return Ok(false);
    }
    Ok(classify_spectrum(a11, tol)?.has_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::eval_tf;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn example_plant() -> StateSpaceModel {
        StateSpaceModel::strictly_proper(
            Mat::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 1.0, -1.0, 1.0, 0.0, 1.0, -1.0]),
            Mat::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
            Mat::from_row_slice(1, 3, &[0.0, 1.0, 0.0]),
        )
        .unwrap()
    }

    fn s1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn close(a: &Mat, b: &Mat, eps: f64) -> bool {
        a.shape() == b.shape() && (a - b).norm() <= eps
    }

    #[test]
    fn example_rd2_blocks_and_transformation() {
        let nf = to_normal_form_rd2(&example_plant(), &tol()).unwrap();
        assert!(close(&nf.a11, &s1(-1.0), 1e-12));
        assert!(close(&nf.a12, &s1(1.0), 1e-12));
        assert!(close(&nf.a13, &s1(0.0), 1e-12));
        assert!(close(&nf.a31, &s1(0.0), 1e-12));
        assert!(close(&nf.a32, &s1(1.0), 1e-12));
        assert!(close(&nf.a33, &s1(-2.0), 1e-12));
        assert!(close(&nf.cab, &s1(1.0), 1e-12));
        let t = Mat::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, -1.0, 1.0]);
        assert!(close(&nf.t, &t, 1e-12));
    }

    #[test]
    fn rd1_hand_example() {
        let sys = StateSpaceModel::strictly_proper(
            Mat::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -2.0]),
            Mat::from_column_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        let nf = to_normal_form_rd1(&sys, &tol()).unwrap();
        assert_eq!(nf.m(), 1);
        assert!(close(&nf.a11, &s1(-1.0), 1e-12));
        assert!(close(&nf.a12, &s1(0.0), 1e-12));
        assert!(close(&nf.cb, &s1(1.0), 1e-12));
        assert!(close(
            &(&nf.t * sys.b()),
            &Mat::from_column_slice(2, 1, &[0.0, 1.0]),
            1e-12
        ));
    }

    #[test]
    fn rd1_without_internal_dynamics() {
        let sys = StateSpaceModel::strictly_proper(s1(-2.0), s1(1.0), s1(1.0)).unwrap();
        let nf = to_normal_form_rd1(&sys, &tol()).unwrap();
        assert_eq!(nf.m(), 0);
        assert!(close(&nf.a22, &s1(-2.0), 1e-15));
    }

    #[test]
    fn rd2_double_integrator() {
        let sys = StateSpaceModel::strictly_proper(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Mat::from_column_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let nf = to_normal_form_rd2(&sys, &tol()).unwrap();
        assert_eq!(nf.m(), 0);
        assert!(close(&nf.a32, &s1(0.0), 1e-15));
        assert!(close(&nf.a33, &s1(0.0), 1e-15));
        assert!(close(&nf.cab, &s1(1.0), 1e-15));
    }

    #[test]
    fn wrong_relative_degree_is_precondition() {
        assert!(matches!(
            to_normal_form_rd1(&example_plant(), &tol()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn normal_form_preserves_transfer_function() {
        let sys = example_plant();
        let nf = to_normal_form(&sys, &tol()).unwrap();
        let real = nf.realization();
        for s in [
            Complex64::new(0.3, 1.0),
            Complex64::new(-0.2, 4.0),
            Complex64::new(2.0, 0.0),
        ] {
            let r1 = eval_tf(&sys, s, &tol()).unwrap();
            let r2 = eval_tf(&real, s, &tol()).unwrap();
            assert!((r1 - r2).norm() < 1e-12);
        }
    }

    #[test]
    fn modal_split_scalar_hurwitz() {
        let sp = modal_split(&s1(-1.0), &tol()).unwrap();
        assert_eq!((sp.m_a(), sp.m_b()), (0, 1));
        assert!(close(&sp.a11b, &s1(-1.0), 0.0));
        assert!(close(&sp.s, &s1(1.0), 0.0));
    }

    #[test]
    fn modal_split_canonical_skew() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 3.0, -3.0, 0.0]);
        let sp = modal_split(&a, &tol()).unwrap();
        assert_eq!((sp.m_a(), sp.m_b()), (2, 0));
        assert!(close(&sp.a11a, &a, 1e-12));
        assert!(sp.residual(&a) < 1e-12);
        assert!((&sp.a11a + sp.a11a.transpose()).norm() == 0.0);
    }

    #[test]
    fn modal_split_recovers_disguised_blocks() {
        let mut d = Mat::zeros(3, 3);
        d[(0, 1)] = 1.0;
        d[(1, 0)] = -1.0;
        d[(2, 2)] = -2.0;
        let s0 = Mat::from_row_slice(3, 3, &[1.0, 0.4, -0.3, 0.2, 1.1, 0.5, -0.6, 0.1, 0.9]);
        let a = &s0 * d * s0.clone().try_inverse().unwrap();
        let sp = modal_split(&a, &tol()).unwrap();
        assert_eq!((sp.m_a(), sp.m_b()), (2, 1));
        assert!(sp.residual(&a) < 1e-9);
        assert!((sp.a11b[(0, 0)] + 2.0).abs() < 1e-10);
        assert!((sp.a11a[(0, 1)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn modal_split_rejects_unstable_and_zero() {
        assert!(matches!(
            modal_split(&s1(1.0), &tol()),
            Err(Error::NotLyapunovStable(_))
        ));
        let j = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            modal_split(&j, &tol()),
            Err(Error::ZeroAtOrigin(_))
        ));
    }

    #[test]
    fn weak_minimum_phase_examples() {
        assert!(check_weakly_minimum_phase(&s1(-1.0), &tol()).passed());
        assert!(matches!(
            check_weakly_minimum_phase(&s1(1.0), &tol()),
            WeakMinimumPhase::Fail {
                reason: WmpFailure::RightHalfPlaneZero,
                ..
            }
        ));
        let j = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(!check_weakly_minimum_phase(&j, &tol()).passed());
        assert!(check_weakly_minimum_phase(&Mat::zeros(0, 0), &tol()).passed());
    }

    #[test]
    fn left_null_basis_is_orthonormal() {
        let b = Mat::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
        let n = left_null_basis(&b, 1e-10);
        assert_eq!(n.nrows(), 2);
        assert!((&n * &b).norm() < 1e-14);
        assert!((&n * n.transpose() - Mat::identity(2, 2)).norm() < 1e-14);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::fixtures::{random_eligible_plant, random_spec};
    use crate::lti::eval_tf;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn normal_form_preserves_transfer_function(seed in any::<u64>()) {
            let tol = Tolerances::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, 12, 3);
            let sys = random_eligible_plant(&mut rng, &spec);
            let r = to_normal_form(&sys, &tol).unwrap().realization();
            for _ in 0..4 {
                let s = Complex64::new(rng.random_range(0.1..2.0), rng.random_range(-3.0..3.0));
                let want = eval_tf(&sys, s, &tol).unwrap();
                let e = (eval_tf(&r, s, &tol).unwrap() - &want).norm() / want.norm().max(1.0);
                prop_assert!(e < 1e-8, "relative error {e}");
            }
        }
    }
}
