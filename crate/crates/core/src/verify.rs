//! Independent checks of the negative-imaginary property: by Lyapunov
//! certificate, by frequency response, and the DC-gain test for positive
//! feedback interconnections.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lti::{dc_gain, eval_tf, freq_sweep, log_grid, StateSpaceModel};
use crate::numkernel::{
    asymmetry, classify_spectrum, eigenvalues, max_sym_eigenvalue, min_sym_eigenvalue, pbh_modes,
    singular_values, sym, CMat, Mat, SpectralClass, Tolerances,
};

/// One named check: `measured` compared against `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct VerificationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Grid frequencies skipped because `jω` sits on a pole.
    pub pole_warnings: Vec<f64>,
}

impl VerificationReport {
    fn new() -> Self {
        Self {
            passed: true,
            ..Self::default()
        }
    }

    /// `measured ≤ threshold`.
    fn at_most(&mut self, name: &str, measured: f64, threshold: f64) {
        self.push(name, measured, threshold, measured <= threshold);
    }

    /// `measured ≥ threshold`.
    fn at_least(&mut self, name: &str, measured: f64, threshold: f64) {
        self.push(name, measured, threshold, measured >= threshold);
    }

    fn push(&mut self, name: &str, measured: f64, threshold: f64, passed: bool) {
        self.passed &= passed;
        self.checks.push(Check {
            name: name.into(),
            measured,
            threshold,
            passed,
        });
    }

    /// A check that could not be evaluated.
    fn fail(&mut self, name: &str) {
        self.push(name, f64::NAN, f64::NAN, false);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Fold another report into this one.
    pub fn merge(&mut self, other: VerificationReport) {
        self.passed &= other.passed;
        self.checks.extend(other.checks);
        self.pole_warnings.extend(other.pole_warnings);
    }
}

fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)
        .first()
        .copied()
        .unwrap_or(f64::INFINITY)
}

/// `j·(R − R*)`.
pub fn ni_matrix(r: &CMat) -> CMat {
    (r - r.adjoint()) * Complex64::new(0.0, 1.0)
}

fn spectral_radius(a: &Mat) -> f64 {
    eigenvalues(a)
        .map(|ev| ev.iter().map(|l| l.norm()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY)
}

fn dims_ok(report: &mut VerificationReport, sys: &StateSpaceModel, y: &Mat) -> bool {
    let ok = y.nrows() == sys.n() && y.ncols() == sys.n();
    report.push("dimensions", y.nrows() as f64, sys.n() as f64, ok);
    ok
}

fn common_certificate_checks(
    report: &mut VerificationReport,
    sys: &StateSpaceModel,
    y: &Mat,
    tol: &Tolerances,
) -> f64 {
    let (a, b, c) = (sys.a(), sys.b(), sys.c());
    report.at_most(
        "y_symmetric",
        asymmetry(y),
        tol.residual_tol * (1.0 + y.norm()),
    );
    let ys = sym(y);
    if sys.n() > 0 {
        match min_sym_eigenvalue(&ys) {
            Ok(l) => report.push("y_positive_definite", l, tol.psd_tol, l > tol.psd_tol),
            Err(_) => report.fail("y_positive_definite"),
        }
    }
    let lyap = sym(&(a * &ys + &ys * a.transpose()));
    let lmax = if sys.n() == 0 {
        f64::NEG_INFINITY
    } else {
        max_sym_eigenvalue(&lyap).unwrap_or(f64::NAN)
    };
    report.at_most(
        "equality_b_plus_ayct",
        (b + a * &ys * c.transpose()).norm(),
        tol.residual_tol * (1.0 + b.norm()),
    );
    if sys.n() > 0 {
        let sv = singular_values(a);
        let smin = sv.last().copied().unwrap_or(0.0);
        report.push(
            "a_nonsingular",
            smin,
            tol.rank_tol * sv[0].max(1.0),
            smin > tol.rank_tol * sv[0].max(1.0),
        );
    }
    report.at_most("d_symmetric", asymmetry(sys.d()), tol.residual_tol);
    lmax
}

/// Certificate test of the NI property: `Y = Yᵀ ≻ 0`, `AY + YAᵀ ⪯ 0`,
/// `B + AYCᵀ = 0`, `det A ≠ 0`, `D = Dᵀ`, and a minimal realization.
pub fn verify_ni_certificate(
    sys: &StateSpaceModel,
    y: &Mat,
    tol: &Tolerances,
) -> VerificationReport {
    let mut report = VerificationReport::new();
    if !dims_ok(&mut report, sys, y) {
        return report;
    }
    let lmax = common_certificate_checks(&mut report, sys, y, tol);
    report.at_most("lyapunov_inequality", lmax, tol.psd_tol);
    report.push("minimal", 0.0, 0.0, crate::lti::is_minimal(sys, tol));
    report
}

/// Strict certificate test of the SSNI property: as the NI test with
/// `AY + YAᵀ ≺ 0`, plus `A` Hurwitz, full normal rank of `R(s) + R(−s)ᵀ`,
/// and no observable uncontrollable modes.
pub fn verify_ssni_certificate(
    sys: &StateSpaceModel,
    y: &Mat,
    tol: &Tolerances,
) -> VerificationReport {
    let mut report = VerificationReport::new();
    if !dims_ok(&mut report, sys, y) {
        return report;
    }
    let lmax = common_certificate_checks(&mut report, sys, y, tol);
    report.at_most("strict_lyapunov_inequality", lmax, -tol.strict_margin);
    hurwitz_check(&mut report, sys, tol);
    // real s₀ beyond the spectral radius is never a pole, nor is −s₀
    let s0 = 1.3 * (1.0 + spectral_radius(sys.a()));
    match (
        eval_tf(sys, Complex64::new(s0, 0.0), tol),
        eval_tf(sys, Complex64::new(-s0, 0.0), tol),
    ) {
        (Ok(rp), Ok(rm)) => {
            let sum = (rp + rm.transpose()).map(|z| z.re);
            let sv = singular_values(&sum);
            let smin = sv.last().copied().unwrap_or(0.0);
            let thr = tol.rank_tol * sv.first().copied().unwrap_or(0.0).max(1.0);
            report.push("normal_rank_full", smin, thr, smin > thr);
        }
        _ => report.fail("normal_rank_full"),
    }
    match pbh_modes(sys.a(), sys.b(), sys.c(), tol) {
        Ok(modes) => {
            let bad = modes
                .iter()
                .filter(|m| m.observable && !m.controllable)
                .count();
            report.at_most("no_observable_uncontrollable_modes", bad as f64, 0.0);
        }
        Err(_) => report.fail("no_observable_uncontrollable_modes"),
    }
    report
}

fn hurwitz_check(report: &mut VerificationReport, sys: &StateSpaceModel, tol: &Tolerances) {
    if sys.n() == 0 {
        return;
    }
    match classify_spectrum(sys.a(), tol) {
        Ok(cls) => {
            let max_re = cls
                .eigenvalues
                .iter()
                .map(|l| l.re)
                .fold(f64::NEG_INFINITY, f64::max);
            report.push("a_hurwitz", max_re, 0.0, cls.is_hurwitz());
        }
        Err(_) => report.fail("a_hurwitz"),
    }
}

/// Residue estimate `lim_{s→jω₀} (s − jω₀)·R(s)`, averaged over four
/// approach directions so that the first-order error cancels.
fn residue_at(sys: &StateSpaceModel, omega0: f64, tol: &Tolerances) -> Result<CMat> {
    let eps = 1e-4 * omega0.abs().max(1.0);
    let p = sys.p();
    let mut acc = CMat::zeros(p, p);
    for k in 0..4 {
        let d = Complex64::from_polar(
            eps,
            std::f64::consts::FRAC_PI_4 + k as f64 * std::f64::consts::FRAC_PI_2,
        );
        let r = eval_tf(sys, Complex64::new(0.0, omega0) + d, tol)?;
        acc += r * d;
    }
    Ok(acc * Complex64::new(0.25, 0.0))
}

/// Frequency-domain NI test on a grid: no poles in the open right half
/// plane or at the origin, simple imaginary-axis poles with Hermitian
/// positive semidefinite residues of `jR`, and `j(R(jω) − R(jω)*) ⪰ 0`.
pub fn verify_ni_freq(sys: &StateSpaceModel, grid: &[f64], tol: &Tolerances) -> VerificationReport {
    let mut report = VerificationReport::new();
    if sys.n() > 0 {
        match classify_spectrum(sys.a(), tol) {
            Ok(cls) => {
                let rhp = cls.count(SpectralClass::OpenRightHalfPlane);
                let zero = cls.count(SpectralClass::Zero);
                report.at_most("no_rhp_poles", rhp as f64, 0.0);
                report.at_most("no_pole_at_origin", zero as f64, 0.0);
                let defective = (0..cls.eigenvalues.len())
                    .filter(|&i| {
                        cls.classes[i] == SpectralClass::PurelyImaginaryNonzero
                            && !cls.semisimple[i]
                    })
                    .count();
                report.at_most("imaginary_poles_simple", defective as f64, 0.0);
                let mut worst = f64::INFINITY;
                let mut herm = 0.0f64;
                for (i, l) in cls.eigenvalues.iter().enumerate() {
                    if cls.classes[i] == SpectralClass::PurelyImaginaryNonzero && l.im > 0.0 {
                        match residue_at(sys, l.im, tol) {
                            Ok(res) => {
                                let jr = res * Complex64::new(0.0, 1.0);
                                herm = herm.max((&jr - jr.adjoint()).norm());
                                worst = worst.min(min_hermitian_eigenvalue(&jr));
                            }
                            Err(_) => worst = f64::NAN,
                        }
                    }
                }
                if worst.is_finite() || worst.is_nan() {
                    // residue estimates carry O(ε²) error
                    report.at_most(
                        "residue_hermitian",
                        herm,
                        1e-6 * (1.0 + sys.b().norm() * sys.c().norm()),
                    );
                    report.at_least(
                        "residue_psd",
                        worst,
                        -1e-6 * (1.0 + sys.b().norm() * sys.c().norm()),
                    );
                }
            }
            Err(_) => report.fail("spectrum"),
        }
    }
    sweep_checks(&mut report, sys, grid, tol, -tol.psd_tol);
    report
}

/// Grid sweep: Hermitian `M(ω)` and `λ_min(M(ω)) ≥ floor`. Returns the
/// samples' `M(ω)` for further checks.
fn sweep_checks(
    report: &mut VerificationReport,
    sys: &StateSpaceModel,
    grid: &[f64],
    tol: &Tolerances,
    floor: f64,
) -> Vec<(f64, CMat)> {
    let sweep = match freq_sweep(sys, grid, tol) {
        Ok(s) => s,
        Err(_) => {
            report.fail("frequency_grid");
            return Vec::new();
        }
    };
    report
        .pole_warnings
        .extend(sweep.pole_hits.iter().map(|h| h.omega));
    let mut herm = 0.0f64;
    let mut lmin = f64::INFINITY;
    let mut out = Vec::with_capacity(sweep.samples.len());
    for s in sweep.samples {
        let m = ni_matrix(&s.response);
        herm = herm.max((&m - m.adjoint()).norm());
        lmin = lmin.min(min_hermitian_eigenvalue(&m));
        out.push((s.omega, m));
    }
    report.at_most("m_hermitian", herm, tol.residual_tol);
    report.at_least("m_min_eigenvalue", lmin, floor);
    out
}

/// Frequency-domain SSNI test: `A` Hurwitz, `M(ω) ≻ 0` on the grid, and the
/// limits of `ω·M(ω)` as `ω → ∞` and `M(ω)/ω` as `ω → 0` positive definite,
/// both at the grid extremes and in closed form
/// (`CB + BᵀCᵀ` and `CA⁻²B + (CA⁻²B)ᵀ`).
pub fn verify_ssni_freq(
    sys: &StateSpaceModel,
    grid: &[f64],
    tol: &Tolerances,
) -> VerificationReport {
    let mut report = VerificationReport::new();
    hurwitz_check(&mut report, sys, tol);
    let ms = sweep_checks(&mut report, sys, grid, tol, tol.strict_margin);
    if let (Some((w_lo, m_lo)), Some((w_hi, m_hi))) = (ms.first(), ms.last()) {
        report.at_least(
            "limit_high_grid",
            min_hermitian_eigenvalue(&(m_hi * Complex64::new(*w_hi, 0.0))),
            tol.strict_margin,
        );
        report.at_least(
            "limit_low_grid",
            min_hermitian_eigenvalue(&(m_lo / Complex64::new(*w_lo, 0.0))),
            tol.strict_margin,
        );
    }
    if sys.n() > 0 {
        let cb = sys.c() * sys.b();
        let hi = &cb + cb.transpose();
        report.at_least(
            "limit_high",
            min_sym_eigenvalue(&hi).unwrap_or(f64::NAN),
            tol.strict_margin,
        );
        match sys.a().clone().try_inverse() {
            Some(ai) => {
                let g = sys.c() * &ai * &ai * sys.b();
                let lo = &g + g.transpose();
                let r0 = sys.d() - sys.c() * &ai * sys.b();
                report.at_most(
                    "dc_gain_symmetric",
                    asymmetry(&r0),
                    tol.residual_tol * (1.0 + r0.norm()),
                );
                report.at_least(
                    "limit_low",
                    min_sym_eigenvalue(&lo).unwrap_or(f64::NAN),
                    tol.strict_margin,
                );
            }
            None => report.fail("limit_low"),
        }
    }
    report
}

/// `true` when the model's transfer function is identically zero.
fn is_zero_system(sys: &StateSpaceModel) -> bool {
    sys.d().norm() == 0.0 && (sys.n() == 0 || sys.b().norm() == 0.0 || sys.c().norm() == 0.0)
}

/// Strictly-NI sweep used to re-check an uncertainty: `A` Hurwitz and
/// `M(ω) ≻ 0` on the grid.
pub fn verify_sni_freq(
    sys: &StateSpaceModel,
    grid: &[f64],
    tol: &Tolerances,
) -> VerificationReport {
    let mut report = VerificationReport::new();
    hurwitz_check(&mut report, sys, tol);
    sweep_checks(&mut report, sys, grid, tol, tol.strict_margin);
    report
}

/// DC-gain internal-stability test of the positive feedback loop `[R, Δ]`
/// for NI `R` and strictly NI `Δ`: `R(∞)Δ(∞) = 0`, `Δ(∞) ⪰ 0` and
/// `λ_max(R(0)Δ(0)) < 1`.
pub fn dc_gain_stability(
    r: &StateSpaceModel,
    delta: &StateSpaceModel,
    tol: &Tolerances,
) -> VerificationReport {
    let mut report = VerificationReport::new();
    if r.p() != delta.p() {
        report.fail("dimensions");
        return report;
    }
    report.at_most(
        "feedthrough_product_zero",
        (r.d() * delta.d()).norm(),
        tol.residual_tol,
    );
    report.at_most(
        "delta_feedthrough_symmetric",
        asymmetry(delta.d()),
        tol.residual_tol,
    );
    report.at_least(
        "delta_feedthrough_psd",
        min_sym_eigenvalue(&sym(delta.d())).unwrap_or(f64::NAN),
        -tol.psd_tol,
    );
    if is_zero_system(delta) {
        report.at_most("loop_dc_gain", 0.0, 1.0 - tol.eig_axis_tol);
        return report;
    }
    let grid = log_grid(1e-3, 1e3, 500);
    let mut ni = verify_ni_freq(r, &grid, tol);
    ni.checks
        .iter_mut()
        .for_each(|c| c.name = format!("r_{}", c.name));
    report.merge(ni);
    let mut sni = verify_sni_freq(delta, &grid, tol);
    sni.checks
        .iter_mut()
        .for_each(|c| c.name = format!("delta_{}", c.name));
    report.merge(sni);
    let (r0, d0) = match (dc_gain(r, tol), dc_gain(delta, tol)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            report.fail("loop_dc_gain");
            return report;
        }
    };
    let prod: Mat = &r0 * &d0;
    match eigenvalues(&prod) {
        Ok(ev) => {
            let imag = ev.iter().map(|l| l.im.abs()).fold(0.0, f64::max);
            report.at_most(
                "loop_dc_spectrum_real",
                imag,
                tol.residual_tol * (1.0 + prod.norm()),
            );
            let lmax = ev.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
            report.push(
                "loop_dc_gain",
                lmax,
                1.0 - tol.eig_axis_tol,
                lmax < 1.0 - tol.eig_axis_tol,
            );
        }
        Err(_) => report.fail("loop_dc_gain"),
    }
    report
}

/// `λ_max(R(0)·Δ(0))` (real part of the dominant eigenvalue).
pub fn loop_dc_gain(r: &StateSpaceModel, delta: &StateSpaceModel, tol: &Tolerances) -> Result<f64> {
    let prod: DMatrix<f64> = dc_gain(r, tol)? * dc_gain(delta, tol)?;
    Ok(eigenvalues(&prod)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}
