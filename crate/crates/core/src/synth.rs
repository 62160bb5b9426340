//! State-feedback synthesis rendering a plant negative imaginary (NI), or
//! strongly strictly NI (SSNI) for relative degree one, together with the
//! feedback-equivalence gate and a Lyapunov certificate for every result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{relative_degree, RelativeDegree, StateSpaceModel};
use crate::normalform::{
    check_weakly_minimum_phase, modal_split, to_normal_form, ModalSplit, NormalForm, NormalFormRD1,
    NormalFormRD2, WeakMinimumPhase,
};
use crate::numkernel::{
    asymmetry, classify_spectrum, eigenvalues, is_nd, is_pd, min_sym_eigenvalue, pbh_controllable,
    pbh_observable, solve_lyapunov, sqrt_pd, sym, Mat, Tolerances,
};
use crate::verify::{verify_ni_certificate, verify_ssni_certificate, VerificationReport};

/// How the free matrix `H_b` in the Hurwitz-block gain is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HbStrategy {
    /// `H_b = 0` first, then scaled Gaussian draws.
    ZeroFirst { seed: u64, max_tries: usize },
    /// Scaled Gaussian draws only.
    Random { seed: u64, max_tries: usize },
}

impl Default for HbStrategy {
    fn default() -> Self {
        Self::ZeroFirst {
            seed: 0,
            max_tries: 64,
        }
    }
}

/// Free parameters of the construction. `None` selects the default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// `Q_b ≻ 0` for the Hurwitz block; default identity.
    pub qb: Option<Mat>,
    /// Use this `Y₁ᵇ` instead of solving the Lyapunov equation; then
    /// `Q_b = −(A11b·Y₁ᵇ + Y₁ᵇ·A11bᵀ)` must be positive definite.
    pub y1b_override: Option<Mat>,
    /// Scale of the skew-block certificate, `Y₁ᵃ = y1a·I`.
    pub y1a: f64,
    /// Closed-loop DC gain `Y₂ ≻ 0`; default identity.
    pub y2: Option<Mat>,
    /// `K₃` with `K₃ + K₃ᵀ ≺ 0` (relative degree two); default `−I`.
    pub k3: Option<Mat>,
    pub hb_strategy: HbStrategy,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            qb: None,
            y1b_override: None,
            y1a: 1.0,
            y2: None,
            k3: None,
            hb_strategy: HbStrategy::default(),
        }
    }
}

impl SynthesisOptions {
    fn y2_for(&self, p: usize, tol: &Tolerances) -> Result<Mat> {
        let y2 = self.y2.clone().unwrap_or_else(|| Mat::identity(p, p));
        if y2.shape() != (p, p) {
            return Err(Error::InvalidOption(format!("Y2 must be {p}x{p}")));
        }
        if asymmetry(&y2) > tol.residual_tol || !is_pd(&y2, tol) {
            return Err(Error::InvalidOption(
                "Y2 must be symmetric positive definite".into(),
            ));
        }
        Ok(sym(&y2))
    }

    fn k3_for(&self, p: usize, tol: &Tolerances) -> Result<Mat> {
        let k3 = self.k3.clone().unwrap_or_else(|| -Mat::identity(p, p));
        if k3.shape() != (p, p) {
            return Err(Error::InvalidOption(format!("K3 must be {p}x{p}")));
        }
        if !is_nd(&(&k3 + k3.transpose()), tol) {
            return Err(Error::InvalidOption(
                "K3 + K3ᵀ must be negative definite".into(),
            ));
        }
        Ok(k3)
    }

    fn validate_y1a(&self) -> Result<()> {
        if !(self.y1a.is_finite() && self.y1a > 0.0) {
            return Err(Error::InvalidOption("y1a must be positive".into()));
        }
        Ok(())
    }
}

/// Gains of the normal-form closed loop
/// `ẏ = K₁z + K₂y + v` or `ẋ₂ = K₁z + K₂x₁ + K₃x₂ + v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalGains {
    /// `K₁` acting on the normal-form internal state `z` (p×m).
    pub k1: Mat,
    /// `K₁` acting on the modal internal state `S·z`.
    pub k1_modal: Mat,
    pub k2: Mat,
    pub k3: Option<Mat>,
}

impl NormalGains {
    /// `K₀ = K₂` when there are no internal dynamics (relative degree one).
    pub fn k0(&self) -> Option<&Mat> {
        (self.k1.ncols() == 0 && self.k3.is_none()).then_some(&self.k2)
    }
    /// `(K₀₁, K₀₂) = (K₂, K₃)` when there are no internal dynamics
    /// (relative degree two).
    pub fn k01_k02(&self) -> Option<(&Mat, &Mat)> {
        match &self.k3 {
            Some(k3) if self.k1.ncols() == 0 => Some((&self.k2, k3)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisKind {
    Ni,
    Ssni,
    Robust,
}

/// Resolved option values actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedOptions {
    pub qb: Mat,
    pub y1b: Mat,
    pub y1a: f64,
    pub y2: Mat,
    pub k3: Option<Mat>,
    pub hb_strategy: HbStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub kind: SynthesisKind,
    pub relative_degree: RelativeDegree,
    pub gains: NormalGains,
    /// `u = law_normal·ξ + Kv·v` in normal-form coordinates `ξ = T·x`.
    pub law_normal: Mat,
    /// `u = Kx·x + Kv·v` in the original coordinates.
    pub kx: Mat,
    pub kv: Mat,
    /// Certificate for `closed_loop`, in modal normal-form coordinates.
    pub certificate_y: Mat,
    /// Closed loop from the external input to `y`, in modal normal-form
    /// coordinates `ξ̃ = coordinate_map·x`.
    pub closed_loop: StateSpaceModel,
    pub coordinate_map: Mat,
    pub options_used: ResolvedOptions,
    pub hb_used: Mat,
    pub hb_attempts: usize,
    /// `−λ_max(sym(AY + YAᵀ))` for SSNI results.
    pub strict_margin: Option<f64>,
    pub verification: VerificationReport,
}

impl SynthesisResult {
    /// The closed loop realized in the plant's own coordinates:
    /// `(A + B·Kx, B·Kv, C)`.
    pub fn closed_loop_original(&self, plant: &StateSpaceModel) -> Result<StateSpaceModel> {
        StateSpaceModel::strictly_proper(
            plant.a() + plant.b() * &self.kx,
            plant.b() * &self.kv,
            plant.c().clone(),
        )
    }

    /// The certificate expressed in the plant's own coordinates.
    pub fn certificate_original(&self) -> Result<Mat> {
        let mi = self
            .coordinate_map
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("coordinate map is singular".into()))?;
        Ok(sym(&(&mi * &self.certificate_y * mi.transpose())))
    }
}

/// Machine-readable reason a plant is not feedback equivalent to an NI system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateReason {
    BadRelativeDegree,
    Uncontrollable,
    ZeroAtOrigin,
    NotWeaklyMinimumPhase,
}

impl GateReason {
    pub fn code(self) -> &'static str {
        match self {
            Self::BadRelativeDegree => "bad-relative-degree",
            Self::Uncontrollable => "uncontrollable",
            Self::ZeroAtOrigin => "zero-at-origin",
            Self::NotWeaklyMinimumPhase => "not-weakly-minimum-phase",
        }
    }

    fn into_error(self, detail: &str) -> Error {
        match self {
            Self::BadRelativeDegree => Error::UnsupportedRelativeDegree(detail.into()),
            Self::Uncontrollable => Error::Uncontrollable(detail.into()),
            Self::ZeroAtOrigin => Error::ZeroAtOrigin(detail.into()),
            Self::NotWeaklyMinimumPhase => Error::NotLyapunovStable(detail.into()),
        }
    }
}

/// Outcome of the feedback-equivalence gate with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateReport {
    pub eligible: bool,
    pub reason: Option<GateReason>,
    pub detail: String,
    pub relative_degree: Option<usize>,
    pub m: Option<usize>,
    pub controllable_full: Option<bool>,
    pub controllable_pair: Option<bool>,
    pub zero_dynamics_eigenvalues: Vec<(f64, f64)>,
    pub weak_minimum_phase: Option<WeakMinimumPhase>,
    #[serde(skip)]
    pub normal_form: Option<NormalForm>,
}

impl GateReport {
    fn reject(mut self, reason: GateReason, detail: impl Into<String>) -> Self {
        self.eligible = false;
        self.reason = Some(reason);
        self.detail = detail.into();
        self
    }

    pub(crate) fn error(&self) -> Error {
        self.reason
            .map(|r| r.into_error(&self.detail))
            .unwrap_or_else(|| Error::Internal("gate rejected without reason".into()))
    }
}

/// Decide whether state feedback can render `sys` NI: relative degree one
/// or two, controllable (full PBH and the normal-form pair), no zero at the
/// origin, weakly minimum phase.
pub fn gate_feedback_equivalence(sys: &StateSpaceModel, tol: &Tolerances) -> GateReport {
    let mut report = GateReport {
        eligible: true,
        reason: None,
        detail: String::new(),
        relative_degree: None,
        m: None,
        controllable_full: None,
        controllable_pair: None,
        zero_dynamics_eigenvalues: Vec::new(),
        weak_minimum_phase: None,
        normal_form: None,
    };
    if !sys.is_strictly_proper() {
        return report.reject(GateReason::BadRelativeDegree, "nonzero feedthrough D");
    }
    if let Err(e) = relative_degree(sys, tol) {
        return report.reject(GateReason::BadRelativeDegree, e.to_string());
    }
    let nf = match to_normal_form(sys, tol) {
        Ok(nf) => nf,
        Err(e) => return report.reject(GateReason::BadRelativeDegree, e.to_string()),
    };
    report.relative_degree = Some(nf.relative_degree().as_usize());
    report.m = Some(nf.m());
    if let Ok(ev) = eigenvalues(nf.a11()) {
        report.zero_dynamics_eigenvalues = ev.iter().map(|l| (l.re, l.im)).collect();
    }
    let full = pbh_controllable(sys.a(), sys.b(), tol);
    let pair = pbh_controllable(nf.a11(), &nf.pair_input(), tol);
    report.controllable_full = Some(full);
    report.controllable_pair = Some(pair);
    let wmp = check_weakly_minimum_phase(nf.a11(), tol);
    report.weak_minimum_phase = Some(wmp.clone());
    report.normal_form = Some(nf);
    if !(full && pair) {
        let detail = if full != pair {
            format!("PBH tests disagree (full state: {full}, internal pair: {pair})")
        } else {
            "PBH test fails".to_string()
        };
        return report.reject(GateReason::Uncontrollable, detail);
    }
    let nf = report.normal_form.as_ref().expect("set above");
    if nf.m() > 0 {
        match classify_spectrum(nf.a11(), tol) {
            Ok(cls) if cls.has_zero() => {
                return report.reject(GateReason::ZeroAtOrigin, "det(A11) = 0");
            }
            Ok(_) => {}
            Err(e) => return report.reject(GateReason::NotWeaklyMinimumPhase, e.to_string()),
        }
    }
    if !wmp.passed() {
        return report.reject(
            GateReason::NotWeaklyMinimumPhase,
            format!("zero dynamics not Lyapunov stable: {wmp:?}"),
        );
    }
    report
}

/// Internal-dynamics data in modal coordinates, shared by both relative
/// degrees.
struct ModalBlocks {
    split: ModalSplit,
    a12: Mat,
    a13: Option<Mat>,
}

impl ModalBlocks {
    fn new(a11: &Mat, a12: &Mat, a13: Option<&Mat>, tol: &Tolerances) -> Result<Self> {
        let split = modal_split(a11, tol)?;
        Ok(Self {
            a12: &split.s * a12,
            a13: a13.map(|a| &split.s * a),
            split,
        })
    }
}

fn check_pair(a11: &Mat, input: &Mat, tol: &Tolerances) -> Result<()> {
    if a11.nrows() > 0 && !pbh_controllable(a11, input, tol) {
        return Err(Error::Uncontrollable(
            "internal-dynamics pair fails the PBH test".into(),
        ));
    }
    Ok(())
}

fn check_zero_dynamics(a11: &Mat, tol: &Tolerances) -> Result<()> {
    if a11.nrows() == 0 {
        return Ok(());
    }
    let cls = classify_spectrum(a11, tol)?;
    if cls.has_zero() {
        return Err(Error::ZeroAtOrigin("det(A11) = 0".into()));
    }
    if !cls.is_lyapunov_stable() {
        return Err(Error::NotLyapunovStable(format!("{:?}", cls.eigenvalues)));
    }
    Ok(())
}

fn invert(m: &Mat, what: &str) -> Result<Mat> {
    if m.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure(format!("{what} is singular")))
}

/// `(Y₁ᵇ, Q_b)` from the options for the Hurwitz block.
fn hurwitz_block_certificate(
    a11b: &Mat,
    opts: &SynthesisOptions,
    tol: &Tolerances,
) -> Result<(Mat, Mat)> {
    let mb = a11b.nrows();
    if mb == 0 {
        return Ok((Mat::zeros(0, 0), Mat::zeros(0, 0)));
    }
    if let Some(y1b) = &opts.y1b_override {
        if y1b.shape() != (mb, mb) {
            return Err(Error::InvalidOption(format!(
                "Y1b override must be {mb}x{mb}"
            )));
        }
        if asymmetry(y1b) > tol.residual_tol || !is_pd(y1b, tol) {
            return Err(Error::InvalidOption(
                "Y1b override must be symmetric positive definite".into(),
            ));
        }
        let qb = sym(&-(a11b * y1b + y1b * a11b.transpose()));
        if !is_pd(&qb, tol) {
            return Err(Error::InvalidOption(
                "Y1b override does not make A11b·Y1b + Y1b·A11bᵀ negative definite".into(),
            ));
        }
        return Ok((sym(y1b), qb));
    }
    let qb = opts.qb.clone().unwrap_or_else(|| Mat::identity(mb, mb));
    if qb.shape() != (mb, mb) {
        return Err(Error::InvalidOption(format!("Qb must be {mb}x{mb}")));
    }
    if asymmetry(&qb) > tol.residual_tol || !is_pd(&qb, tol) {
        return Err(Error::InvalidOption(
            "Qb must be symmetric positive definite".into(),
        ));
    }
    let y1b = solve_lyapunov(a11b, &qb, tol)?;
    Ok((y1b, sym(&qb)))
}

/// Candidate `H_b` matrices: zero (optionally) then Gaussian draws scaled to
/// `σ_max(H_b)² = bound/2`.
fn hb_candidates(strategy: &HbStrategy, p: usize, mb: usize, bound: f64) -> Vec<Mat> {
    let (seed, tries, zero_first) = match *strategy {
        HbStrategy::ZeroFirst { seed, max_tries } => (seed, max_tries, true),
        HbStrategy::Random { seed, max_tries } => (seed, max_tries, false),
    };
    let mut out = Vec::with_capacity(tries + 1);
    if zero_first || mb == 0 {
        out.push(Mat::zeros(p, mb));
    }
    if mb == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..tries {
        let g = Mat::from_fn(p, mb, |_, _| StandardNormal.sample(&mut rng));
        let smax = crate::lti::norm2(&g);
        if smax > 0.0 {
            out.push(g * ((0.5 * bound).sqrt() / smax));
        }
    }
    out
}

/// Certificate in the form `[[Y₁ + Y₁₂Y₂⁻¹Y₁₂ᵀ, Y₁₂], [Y₁₂ᵀ, Y₂]]` with
/// `Y₁₂ = −Ã11⁻¹Ã12Y₂`, padded with an identity block of size `extra`.
fn assemble_certificate(y1: &Mat, a11_inv: &Mat, a12: &Mat, y2: &Mat, extra: usize) -> Mat {
    let (m, p) = (y1.nrows(), y2.nrows());
    let y12 = -(a11_inv * a12 * y2);
    let y11 = y1 + a11_inv * a12 * y2 * a12.transpose() * a11_inv.transpose();
    let n = m + p + extra;
    let mut y = Mat::zeros(n, n);
    y.view_mut((0, 0), (m, m)).copy_from(&y11);
    y.view_mut((0, m), (m, p)).copy_from(&y12);
    y.view_mut((m, 0), (p, m)).copy_from(&y12.transpose());
    y.view_mut((m, m), (p, p)).copy_from(y2);
    if extra > 0 {
        y.view_mut((m + p, m + p), (extra, extra))
            .fill_with_identity();
    }
    sym(&y)
}

fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (ma, mb) = (a.nrows(), b.nrows());
    let mut d = Mat::zeros(ma + mb, ma + mb);
    d.view_mut((0, 0), (ma, ma)).copy_from(a);
    d.view_mut((ma, ma), (mb, mb)).copy_from(b);
    d
}

/// Modal closed loop for either relative degree.
fn modal_closed_loop(
    split: &ModalSplit,
    a12: &Mat,
    a13: Option<&Mat>,
    k1: &Mat,
    k2: &Mat,
    k3: Option<&Mat>,
) -> Result<StateSpaceModel> {
    let m = split.m();
    let p = k2.nrows();
    let a11 = split.block_diag();
    match (a13, k3) {
        (None, None) => {
            let n = m + p;
            let mut a = Mat::zeros(n, n);
            a.view_mut((0, 0), (m, m)).copy_from(&a11);
            a.view_mut((0, m), (m, p)).copy_from(a12);
            a.view_mut((m, 0), (p, m)).copy_from(k1);
            a.view_mut((m, m), (p, p)).copy_from(k2);
            let mut b = Mat::zeros(n, p);
            b.view_mut((m, 0), (p, p)).fill_with_identity();
            StateSpaceModel::strictly_proper(a, b.clone(), b.transpose())
        }
        (Some(a13), Some(k3)) => {
            let n = m + 2 * p;
            let mut a = Mat::zeros(n, n);
            a.view_mut((0, 0), (m, m)).copy_from(&a11);
            a.view_mut((0, m), (m, p)).copy_from(a12);
            a.view_mut((0, m + p), (m, p)).copy_from(a13);
            a.view_mut((m, m + p), (p, p)).fill_with_identity();
            a.view_mut((m + p, 0), (p, m)).copy_from(k1);
            a.view_mut((m + p, m), (p, p)).copy_from(k2);
            a.view_mut((m + p, m + p), (p, p)).copy_from(k3);
            let mut b = Mat::zeros(n, p);
            b.view_mut((m + p, 0), (p, p)).fill_with_identity();
            let mut c = Mat::zeros(p, n);
            c.view_mut((0, m), (p, p)).fill_with_identity();
            StateSpaceModel::strictly_proper(a, b, c)
        }
        _ => Err(Error::Internal("mismatched relative-degree blocks".into())),
    }
}

/// Shared NI construction. `a13`/`k3` are present for relative degree two.
fn synth_ni_core(
    nf: &NormalForm,
    opts: &SynthesisOptions,
    tol: &Tolerances,
) -> Result<SynthesisResult> {
    opts.validate_y1a()?;
    let p = nf.p();
    let y2 = opts.y2_for(p, tol)?;
    let (a11, a12, a13) = match nf {
        NormalForm::Rd1(f) => (&f.a11, &f.a12, None),
        NormalForm::Rd2(f) => (&f.a11, &f.a12, Some(&f.a13)),
    };
    check_zero_dynamics(a11, tol)?;
    check_pair(a11, &nf.pair_input(), tol)?;
    let k3 = match nf {
        NormalForm::Rd1(_) => None,
        NormalForm::Rd2(_) => Some(opts.k3_for(p, tol)?),
    };
    // E = (−(K₃ + K₃ᵀ))^{1/2}; for relative degree one the role of E·H_b is
    // played by H_b with the looser bound H_bᵀH_b ⪯ 2Q_b.
    let e = match &k3 {
        Some(k3) => Some(sqrt_pd(&-(k3 + k3.transpose()), tol)?),
        None => None,
    };
    let mb_blocks = ModalBlocks::new(a11, a12, a13, tol)?;
    let split = &mb_blocks.split;
    let (ma, mb) = (split.m_a(), split.m_b());
    let (y1b, qb) = hurwitz_block_certificate(&split.a11b, opts, tol)?;
    let y1a = opts.y1a;

    let a12a = mb_blocks.a12.rows(0, ma).into_owned();
    let a12b = mb_blocks.a12.rows(ma, mb).into_owned();
    let a11a_inv_t = invert(&split.a11a, "A11a")?.transpose();
    let a11b_inv_t = invert(&split.a11b, "A11b")?.transpose();

    // skew block: K₁ᵃ·y1a = −A12aᵀA11a⁻ᵀ (− A13aᵀ)
    let mut k1a = -(a12a.transpose() * &a11a_inv_t);
    let mut k1b_fixed = -(a12b.transpose() * &a11b_inv_t);
    if let Some(a13) = &mb_blocks.a13 {
        k1a -= a13.rows(0, ma).transpose();
        k1b_fixed -= a13.rows(ma, mb).transpose();
    }
    k1a /= y1a;
    let y1b_inv = invert(&y1b, "Y1b")?;
    let bound = if mb == 0 {
        0.0
    } else {
        let lq = min_sym_eigenvalue(&qb)?;
        if e.is_some() {
            lq
        } else {
            2.0 * lq
        }
    };
    let a11_modal = split.block_diag();
    let a11_modal_inv = invert(&a11_modal, "A11")?;
    let y2_inv = invert(&y2, "Y2")?;

    let candidates = hb_candidates(&opts.hb_strategy, p, mb, bound);
    let mut attempts = 0;
    let mut chosen = None;
    for hb in candidates {
        attempts += 1;
        let eh = match &e {
            Some(e) => e * &hb,
            None => hb.clone(),
        };
        let k1b = (&k1b_fixed + eh) * &y1b_inv;
        let mut k1 = Mat::zeros(p, ma + mb);
        k1.view_mut((0, 0), (p, ma)).copy_from(&k1a);
        k1.view_mut((0, ma), (p, mb)).copy_from(&k1b);
        if ma + mb == 0 || pbh_observable(&a11_modal, &k1, tol) {
            chosen = Some((hb, k1));
            break;
        }
    }
    let (hb, k1_modal) = chosen.ok_or(Error::SynthesisFailure { attempts })?;
    let k2 = &k1_modal * &a11_modal_inv * &mb_blocks.a12 - &y2_inv;
    let y1 = block_diag(&(Mat::identity(ma, ma) * y1a), &y1b);
    let cert = assemble_certificate(
        &y1,
        &a11_modal_inv,
        &mb_blocks.a12,
        &y2,
        if k3.is_some() { p } else { 0 },
    );
    let closed = modal_closed_loop(
        split,
        &mb_blocks.a12,
        mb_blocks.a13.as_ref(),
        &k1_modal,
        &k2,
        k3.as_ref(),
    )?;
    let gains = NormalGains {
        k1: &k1_modal * &split.s,
        k1_modal,
        k2,
        k3: k3.clone(),
    };
    let (law_normal, kx, kv) = compose_original_feedback(nf, &gains)?;
    let verification = verify_ni_certificate(&closed, &cert, tol);
    if !verification.passed {
        return Err(Error::Internal(format!(
            "constructed certificate failed its own check: {:?}",
            verification.failed_checks()
        )));
    }
    Ok(SynthesisResult {
        kind: SynthesisKind::Ni,
        relative_degree: nf.relative_degree(),
        gains,
        law_normal,
        kx,
        kv,
        certificate_y: cert,
        closed_loop: closed,
        coordinate_map: coordinate_map(nf, split),
        options_used: ResolvedOptions {
            qb,
            y1b,
            y1a,
            y2,
            k3,
            hb_strategy: opts.hb_strategy.clone(),
        },
        hb_used: hb,
        hb_attempts: attempts,
        strict_margin: None,
        verification,
    })
}

/// `diag(S, I)·T`: original coordinates to modal normal-form coordinates.
fn coordinate_map(nf: &NormalForm, split: &ModalSplit) -> Mat {
    let t = nf.t();
    let n = t.nrows();
    let m = split.m();
    let mut d = Mat::identity(n, n);
    d.view_mut((0, 0), (m, m)).copy_from(&split.s);
    d * t
}

/// NI synthesis for a relative-degree-one normal form.
pub fn synth_ni_rd1(
    nf: &NormalFormRD1,
    opts: &SynthesisOptions,
    tol: &Tolerances,
) -> Result<SynthesisResult> {
    synth_ni_core(&NormalForm::Rd1(nf.clone()), opts, tol)
}

/// NI synthesis without internal dynamics, relative degree one:
/// `K₀ = −Y₂⁻¹`, certificate `Y₂`. The closed loop is SSNI.
pub fn synth_ni_rd1_m0(
    a22: &Mat,
    cb: &Mat,
    opts: &SynthesisOptions,
    tol: &Tolerances,
) -> Result<SynthesisResult> {
    synth_ni_rd1(
        &NormalFormRD1::without_internal_dynamics(a22.clone(), cb.clone()),
        opts,
        tol,
    )
}

/// NI synthesis for a relative-degree-two normal form.
pub fn synth_ni_rd2(
    nf: &NormalFormRD2,
    opts: &SynthesisOptions,
    tol: &Tolerances,
) -> Result<SynthesisResult> {
    synth_ni_core(&NormalForm::Rd2(nf.clone()), opts, tol)
}

/// NI synthesis without internal dynamics, relative degree two:
/// `K₀₁ = −Y₂⁻¹`, `K₀₂ = K₃`, certificate `diag(Y₂, I)`.
pub fn synth_ni_rd2_m0(
    a32: &Mat,
    a33: &Mat,
    cab: &Mat,
    opts: &SynthesisOptions,
    tol: &Tolerances,
) -> Result<SynthesisResult> {
    synth_ni_rd2(
        &NormalFormRD2::without_internal_dynamics(a32.clone(), a33.clone(), cab.clone()),
        opts,
        tol,
    )
}

/// SSNI synthesis for relative degree one with Hurwitz zero dynamics:
/// `Y₁` from `A11·Y₁ + Y₁·A11ᵀ = −Q`, `K₁ = −A12ᵀA11⁻ᵀY₁⁻¹`,
/// `K₂ = K₁A11⁻¹A12 − Y₂⁻¹`. `Q` is `opts.qb` (identity by default).
pub fn synth_ssni_rd1(
    nf: &NormalFormRD1,
    opts: &SynthesisOptions,
    tol: &Tolerances,
) -> Result<SynthesisResult> {
    let (m, p) = (nf.m(), nf.p());
    let y2 = opts.y2_for(p, tol)?;
    if m > 0 {
        let cls = classify_spectrum(&nf.a11, tol)?;
        if !cls.is_hurwitz() {
            return Err(Error::NotHurwitz(format!("{:?}", cls.eigenvalues)));
        }
    }
    check_pair(&nf.a11, &nf.a12, tol)?;
    let q = opts.qb.clone().unwrap_or_else(|| Mat::identity(m, m));
    if q.shape() != (m, m) || !is_pd(&q, tol) || asymmetry(&q) > tol.residual_tol {
        return Err(Error::InvalidOption(format!(
            "Q must be a {m}x{m} symmetric positive definite matrix"
        )));
    }
    let y1 = solve_lyapunov(&nf.a11, &q, tol)?;
    let a11_inv = invert(&nf.a11, "A11")?;
    let k1 = -(nf.a12.transpose() * a11_inv.transpose() * invert(&y1, "Y1")?);
    let k2 = &k1 * &a11_inv * &nf.a12 - invert(&y2, "Y2")?;
    let split = ModalSplit {
        s: Mat::identity(m, m),
        s_inv: Mat::identity(m, m),
        a11a: Mat::zeros(0, 0),
        a11b: nf.a11.clone(),
    };
    let cert = assemble_certificate(&y1, &a11_inv, &nf.a12, &y2, 0);
    let closed = modal_closed_loop(&split, &nf.a12, None, &k1, &k2, None)?;
    let nfe = NormalForm::Rd1(nf.clone());
    let gains = NormalGains {
        k1: k1.clone(),
        k1_modal: k1,
        k2,
        k3: None,
    };
    let (law_normal, kx, kv) = compose_original_feedback(&nfe, &gains)?;
    let verification = verify_ssni_certificate(&closed, &cert, tol);
    if !verification.passed {
        return Err(Error::Internal(format!(
            "constructed SSNI certificate failed its own check: {:?}",
            verification.failed_checks()
        )));
    }
    let lmax = crate::numkernel::max_sym_eigenvalue(&sym(
        &(closed.a() * &cert + &cert * closed.a().transpose())
    ))?;
    Ok(SynthesisResult {
        kind: SynthesisKind::Ssni,
        relative_degree: RelativeDegree::One,
        gains,
        law_normal,
        kx,
        kv,
        certificate_y: cert,
        closed_loop: closed,
        coordinate_map: coordinate_map(&nfe, &split),
        options_used: ResolvedOptions {
            qb: q,
            y1b: y1,
            y1a: opts.y1a,
            y2,
            k3: None,
            hb_strategy: opts.hb_strategy.clone(),
        },
        hb_used: Mat::zeros(p, m),
        hb_attempts: 0,
        strict_margin: Some(-lmax),
        verification,
    })
}

/// Why relative-degree-two plants are never rendered SSNI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsniRefusal {
    pub relative_degree: usize,
    pub reason: String,
}

/// Structured refusal for SSNI requests on relative-degree-two plants.
pub fn ssni_rd2_refusal() -> SsniRefusal {
    SsniRefusal {
        relative_degree: 2,
        reason: "with CB = 0 the equality B + AYCᵀ = 0 forces a zero diagonal block in \
                 AY + YAᵀ (the block of the output states), so AY + YAᵀ cannot be negative \
                 definite and ω·M(ω) vanishes as ω → ∞"
            .into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SsniOutcome {
    Synthesized(Box<SynthesisResult>),
    Refused(SsniRefusal),
}

/// Gate, then NI synthesis on the plant.
pub fn synthesize_ni(
    sys: &StateSpaceModel,
    opts: &SynthesisOptions,
    tol: &Tolerances,
) -> Result<SynthesisResult> {
    let gate = gate_feedback_equivalence(sys, tol);
    if !gate.eligible {
        return Err(gate.error());
    }
    let nf = gate
        .normal_form
        .expect("eligible gate carries a normal form");
    synth_ni_core(&nf, opts, tol)
}

/// Gate, then SSNI synthesis (relative degree one) or refusal (two).
pub fn synthesize_ssni(
    sys: &StateSpaceModel,
    opts: &SynthesisOptions,
    tol: &Tolerances,
) -> Result<SsniOutcome> {
    let gate = gate_feedback_equivalence(sys, tol);
    if gate.relative_degree == Some(2) {
        return Ok(SsniOutcome::Refused(ssni_rd2_refusal()));
    }
    if !gate.eligible {
        return Err(gate.error());
    }
    match gate
        .normal_form
        .expect("eligible gate carries a normal form")
    {
        NormalForm::Rd1(nf) => {
            synth_ssni_rd1(&nf, opts, tol).map(|r| SsniOutcome::Synthesized(Box::new(r)))
        }
        NormalForm::Rd2(_) => Ok(SsniOutcome::Refused(ssni_rd2_refusal())),
    }
}

/// Pull the normal-form gains back to a law on the plant input:
/// `u = M⁻¹·(v + (K₁ − A₂₁)z + (K₂ − A₂₂)y)` (relative degree one) or
/// `u = M⁻¹·(v + (K₁ − A₃₁)z + (K₂ − A₃₂)x₁ + (K₃ − A₃₃)x₂)` (two), with
/// `M = CB` or `CAB`. Returns `(law in normal-form coordinates, Kx, Kv)`.
pub fn compose_original_feedback(nf: &NormalForm, gains: &NormalGains) -> Result<(Mat, Mat, Mat)> {
    let (m, p) = (nf.m(), nf.p());
    if gains.k1.shape() != (p, m) || gains.k2.shape() != (p, p) {
        return Err(Error::Dimension(
            "gains do not match the normal form".into(),
        ));
    }
    let minv = invert(nf.input_matrix(), "input-channel matrix")?;
    let law = match nf {
        NormalForm::Rd1(f) => {
            let mut l = Mat::zeros(p, m + p);
            l.view_mut((0, 0), (p, m)).copy_from(&(&gains.k1 - &f.a21));
            l.view_mut((0, m), (p, p)).copy_from(&(&gains.k2 - &f.a22));
            l
        }
        NormalForm::Rd2(f) => {
            let k3 = gains
                .k3
                .as_ref()
                .ok_or_else(|| Error::Dimension("relative degree two needs K3".into()))?;
            if k3.shape() != (p, p) {
                return Err(Error::Dimension("K3 does not match the normal form".into()));
            }
            let mut l = Mat::zeros(p, m + 2 * p);
            l.view_mut((0, 0), (p, m)).copy_from(&(&gains.k1 - &f.a31));
            l.view_mut((0, m), (p, p)).copy_from(&(&gains.k2 - &f.a32));
            l.view_mut((0, m + p), (p, p)).copy_from(&(k3 - &f.a33));
            l
        }
    };
    let law_normal = &minv * law;
    let kx = &law_normal * nf.t();
    Ok((law_normal, kx, minv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{dc_gain, eval_tf, siso_polynomials};
    use crate::normalform::to_normal_form_rd2;
    use num_complex::Complex64;

    fn tol() -> Tolerances {
        Tolerances::default()
    }
    fn s1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }
    fn example_plant() -> StateSpaceModel {
        StateSpaceModel::strictly_proper(
            Mat::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 1.0, -1.0, 1.0, 0.0, 1.0, -1.0]),
            Mat::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
            Mat::from_row_slice(1, 3, &[0.0, 1.0, 0.0]),
        )
        .unwrap()
    }
    fn example_options() -> SynthesisOptions {
        SynthesisOptions {
            y1b_override: Some(s1(1.0)),
            y2: Some(s1(0.5)),
            k3: Some(s1(-1.0)),
            ..Default::default()
        }
    }

    #[test]
    fn worked_example_gains_and_certificate() {
        let nf = to_normal_form_rd2(&example_plant(), &tol()).unwrap();
        let r = synth_ni_rd2(&nf, &example_options(), &tol()).unwrap();
        assert!((r.gains.k1[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((r.gains.k2[(0, 0)] + 3.0).abs() < 1e-12);
        assert!((r.gains.k3.as_ref().unwrap()[(0, 0)] + 1.0).abs() < 1e-12);
        let law = Mat::from_row_slice(1, 3, &[1.0, -4.0, 1.0]);
        assert!((&r.law_normal - law).norm() < 1e-12);
        let y = Mat::from_row_slice(3, 3, &[1.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0]);
        assert!((&r.certificate_y - y).norm() < 1e-12);
        let a = r.closed_loop.a();
        let lyap = a * &r.certificate_y + &r.certificate_y * a.transpose();
        let expect = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![-2.0, 0.0, -2.0]));
        assert!((lyap - expect).norm() < 1e-12);
        let (num, den) = siso_polynomials(&r.closed_loop).unwrap();
        for (x, e) in den.iter().zip([1.0, 2.0, 4.0, 2.0]) {
            assert!((x - e).abs() < 1e-9);
        }
        for (x, e) in num.iter().zip([0.0, 0.0, 1.0, 1.0]) {
            assert!((x - e).abs() < 1e-9);
        }
    }

    #[test]
    fn original_coordinates_gain() {
        let plant = example_plant();
        let r = synthesize_ni(&plant, &example_options(), &tol()).unwrap();
        let kx = Mat::from_row_slice(1, 3, &[2.0, -5.0, 1.0]);
        assert!((&r.kx - kx).norm() < 1e-12);
        let cl = r.closed_loop_original(&plant).unwrap();
        for s in [Complex64::new(0.1, 0.7), Complex64::new(-0.3, 2.0)] {
            let a = eval_tf(&cl, s, &tol()).unwrap();
            let b = eval_tf(&r.closed_loop, s, &tol()).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
        let yx = r.certificate_original().unwrap();
        assert!(verify_ni_certificate(&cl, &yx, &tol()).passed);
    }

    #[test]
    fn rd1_scalar_internal_dynamics() {
        let nf = NormalFormRD1 {
            t: Mat::identity(2, 2),
            t_inv: Mat::identity(2, 2),
            a11: s1(-1.0),
            a12: s1(1.0),
            a21: s1(0.0),
            a22: s1(0.0),
            cb: s1(1.0),
        };
        let opts = SynthesisOptions {
            y1b_override: Some(s1(1.0)),
            ..Default::default()
        };
        let r = synth_ni_rd1(&nf, &opts, &tol()).unwrap();
        assert!((r.gains.k1[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((r.gains.k2[(0, 0)] + 2.0).abs() < 1e-12);
        assert!(r.verification.passed);
    }

    #[test]
    fn rd1_lossless_internal_dynamics() {
        let nf = NormalFormRD1 {
            t: Mat::identity(3, 3),
            t_inv: Mat::identity(3, 3),
            a11: Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            a12: Mat::from_column_slice(2, 1, &[1.0, 0.0]),
            a21: Mat::zeros(1, 2),
            a22: s1(0.0),
            cb: s1(1.0),
        };
        let r = synth_ni_rd1(&nf, &SynthesisOptions::default(), &tol()).unwrap();
        let a = r.closed_loop.a();
        let lyap = a * &r.certificate_y + &r.certificate_y * a.transpose();
        assert!(lyap.view((0, 0), (2, 2)).norm() < 1e-14);
        let rd0 = dc_gain(&r.closed_loop, &tol()).unwrap();
        assert!((rd0[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn y1a_scaling_keeps_certificate() {
        let nf = NormalFormRD1 {
            t: Mat::identity(3, 3),
            t_inv: Mat::identity(3, 3),
            a11: Mat::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]),
            a12: Mat::from_column_slice(2, 1, &[1.0, 0.5]),
            a21: Mat::zeros(1, 2),
            a22: s1(0.3),
            cb: s1(2.0),
        };
        let opts = SynthesisOptions {
            y1a: 3.0,
            ..Default::default()
        };
        assert!(
            synth_ni_rd1(&nf, &opts, &tol())
                .unwrap()
                .verification
                .passed
        );
    }

    #[test]
    fn uncontrollable_pair_is_rejected() {
        let nf = NormalFormRD1 {
            t: Mat::identity(2, 2),
            t_inv: Mat::identity(2, 2),
            a11: s1(-1.0),
            a12: s1(0.0),
            a21: s1(0.0),
            a22: s1(0.0),
            cb: s1(1.0),
        };
        assert!(matches!(
            synth_ni_rd1(&nf, &SynthesisOptions::default(), &tol()),
            Err(Error::Uncontrollable(_))
        ));
    }

    #[test]
    fn m0_cases() {
        let r = synth_ni_rd1_m0(&s1(0.7), &s1(2.0), &SynthesisOptions::default(), &tol()).unwrap();
        assert!((r.gains.k0().unwrap()[(0, 0)] + 1.0).abs() < 1e-15);
        assert!((r.certificate_y[(0, 0)] - 1.0).abs() < 1e-15);
        let y2 = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 2.0]));
        let opts = SynthesisOptions {
            y2: Some(y2),
            ..Default::default()
        };
        let r = synth_ni_rd1_m0(&Mat::zeros(2, 2), &Mat::identity(2, 2), &opts, &tol()).unwrap();
        let k0 = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![-2.0, -0.5]));
        assert!((r.gains.k0().unwrap() - k0).norm() < 1e-14);

        let opts = SynthesisOptions {
            y2: Some(s1(0.5)),
            k3: Some(s1(-2.0)),
            ..Default::default()
        };
        let r = synth_ni_rd2_m0(&s1(0.0), &s1(0.0), &s1(1.0), &opts, &tol()).unwrap();
        let (k01, k02) = r.gains.k01_k02().unwrap();
        assert!((k01[(0, 0)] + 2.0).abs() < 1e-15);
        assert!((k02[(0, 0)] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn ssni_scalar_example() {
        let nf = NormalFormRD1 {
            t: Mat::identity(2, 2),
            t_inv: Mat::identity(2, 2),
            a11: s1(-1.0),
            a12: s1(1.0),
            a21: s1(0.0),
            a22: s1(0.0),
            cb: s1(1.0),
        };
        let r = synth_ssni_rd1(&nf, &SynthesisOptions::default(), &tol()).unwrap();
        assert!((r.gains.k1[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((r.gains.k2[(0, 0)] + 3.0).abs() < 1e-12);
        assert!(r.strict_margin.unwrap() > 0.0);
    }

    #[test]
    fn ssni_requires_hurwitz_zero_dynamics() {
        let nf = NormalFormRD1 {
            t: Mat::identity(3, 3),
            t_inv: Mat::identity(3, 3),
            a11: Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            a12: Mat::from_column_slice(2, 1, &[1.0, 0.0]),
            a21: Mat::zeros(1, 2),
            a22: s1(0.0),
            cb: s1(1.0),
        };
        assert!(matches!(
            synth_ssni_rd1(&nf, &SynthesisOptions::default(), &tol()),
            Err(Error::NotHurwitz(_))
        ));
    }

    #[test]
    fn ssni_routing() {
        assert!(matches!(
            synthesize_ssni(&example_plant(), &SynthesisOptions::default(), &tol()).unwrap(),
            SsniOutcome::Refused(_)
        ));
        let dint = StateSpaceModel::strictly_proper(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Mat::from_column_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        assert!(matches!(
            synthesize_ssni(&dint, &SynthesisOptions::default(), &tol()).unwrap(),
            SsniOutcome::Refused(_)
        ));
        let rd1 = StateSpaceModel::strictly_proper(
            Mat::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]),
            Mat::from_column_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        assert!(matches!(
            synthesize_ssni(&rd1, &SynthesisOptions::default(), &tol()).unwrap(),
            SsniOutcome::Synthesized(_)
        ));
    }

    #[test]
    fn gate_examples() {
        let g = gate_feedback_equivalence(&example_plant(), &tol());
        assert!(g.eligible);
        assert_eq!(g.relative_degree, Some(2));
        // unstable zero dynamics: A11 = +1
        let sys = StateSpaceModel::strictly_proper(
            Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]),
            Mat::from_column_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        assert_eq!(
            gate_feedback_equivalence(&sys, &tol()).reason,
            Some(GateReason::NotWeaklyMinimumPhase)
        );
        // example plant augmented with a disconnected mode
        let p = example_plant();
        let mut a = Mat::zeros(4, 4);
        a.view_mut((0, 0), (3, 3)).copy_from(p.a());
        a[(3, 3)] = -5.0;
        let mut b = Mat::zeros(4, 1);
        b.view_mut((0, 0), (3, 1)).copy_from(p.b());
        let mut c = Mat::zeros(1, 4);
        c.view_mut((0, 0), (1, 3)).copy_from(p.c());
        let aug = StateSpaceModel::strictly_proper(a, b, c).unwrap();
        let g = gate_feedback_equivalence(&aug, &tol());
        assert_eq!(g.reason, Some(GateReason::Uncontrollable));
        assert_eq!(g.controllable_full, Some(false));
    }

    #[test]
    fn invalid_options() {
        let nf = to_normal_form_rd2(&example_plant(), &tol()).unwrap();
        let bad_k3 = SynthesisOptions {
            k3: Some(s1(1.0)),
            ..Default::default()
        };
        assert!(matches!(
            synth_ni_rd2(&nf, &bad_k3, &tol()),
            Err(Error::InvalidOption(_))
        ));
        let bad_y2 = SynthesisOptions {
            y2: Some(s1(-1.0)),
            ..Default::default()
        };
        assert!(matches!(
            synth_ni_rd2(&nf, &bad_y2, &tol()),
            Err(Error::InvalidOption(_))
        ));
    }
}
