//! Robust stabilization against strictly negative imaginary uncertainty:
//! γ-bounded synthesis, the positive feedback interconnection, an
//! uncertainty sampler, and fixed-step simulation.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{max_abs_eigenvalue, StateSpaceModel};
use crate::numkernel::{
    asymmetry, classify_spectrum, is_pd, max_sym_eigenvalue, sqrt_pd, Mat, Tolerances,
};
use crate::synth::{gate_feedback_equivalence, SynthesisKind, SynthesisOptions, SynthesisResult};
use crate::verify::verify_ni_certificate;

/// Plant `ẋ = Ax + B(u + w)`, `y = Cx`, with `w = Δ(s)·y` for some strictly
/// NI `Δ` with `Δ(∞) ⪰ 0` and `λ_max(Δ(0)) ≤ γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainPlant {
    pub nominal: StateSpaceModel,
    pub gamma: f64,
}

impl UncertainPlant {
    pub fn new(nominal: StateSpaceModel, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidOption(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(Self { nominal, gamma })
    }
}

/// γ-bounded NI synthesis. The returned closed loop is the map from the
/// uncertainty input `w` to `y` with `R(0) = Y₂`, and `Kv = I` so that
/// `closed_loop_original` reproduces that map on the plant.
///
/// Because `w` enters through `B`, the loop seen by `Δ` is the NI closed
/// loop post-multiplied by `M = CB` (or `CAB`). The plant is therefore
/// rescaled by `L = M^{1/2}` before synthesis, which requires `M ≻ 0`.
pub fn synth_robust(
    up: &UncertainPlant,
    opts: &SynthesisOptions,
    tol: &Tolerances,
) -> Result<SynthesisResult> {
    let sys = &up.nominal;
    let p = sys.p();
    let bound = 1.0 / up.gamma;
    let y2 = match &opts.y2 {
        Some(y2) => {
            if y2.shape() != (p, p) || asymmetry(y2) > tol.residual_tol || !is_pd(y2, tol) {
                return Err(Error::InvalidOption(
                    "Y2 must be symmetric positive definite".into(),
                ));
            }
            let l = max_sym_eigenvalue(y2)?;
            if l >= bound {
                return Err(Error::InvalidOption(format!(
                    "λ_max(Y2) = {l} violates the bound 1/γ = {bound}"
                )));
            }
            y2.clone()
        }
        None => Mat::identity(p, p) * (0.9 * bound),
    };
    let gate = gate_feedback_equivalence(sys, tol);
    if !gate.eligible {
        return Err(gate.error());
    }
    let nf = gate
        .normal_form
        .expect("eligible gate carries a normal form");
    let m_in = nf.input_matrix().clone();
    if asymmetry(&m_in) > tol.residual_tol * (1.0 + m_in.norm()) || !is_pd(&m_in, tol) {
        return Err(Error::InputChannelNotPositive(format!("{m_in}")));
    }
    let l = sqrt_pd(&m_in, tol)?;
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("input-channel square root is singular".into()))?;
    let scaled =
        StateSpaceModel::strictly_proper(sys.a().clone(), sys.b().clone(), &l_inv * sys.c())?;
    let scaled_opts = SynthesisOptions {
        y2: Some(crate::numkernel::sym(&(&l_inv * &y2 * &l_inv))),
        ..opts.clone()
    };
    let mut r = crate::synth::synthesize_ni(&scaled, &scaled_opts, tol)?;
    // w enters as B·w = B·K̂v·(L·w): input matrix B̂·L, output L·ŷ
    let (a, b, c, _) = r.closed_loop.clone().into_parts();
    r.closed_loop = StateSpaceModel::strictly_proper(a, b * &l, &l * c)?;
    r.kv = Mat::identity(p, p);
    r.kind = SynthesisKind::Robust;
    r.options_used.y2 = y2;
    r.verification = verify_ni_certificate(&r.closed_loop, &r.certificate_y, tol);
    if !r.verification.passed {
        return Err(Error::Internal(format!(
            "robust closed loop failed its certificate: {:?}",
            r.verification.failed_checks()
        )));
    }
    Ok(r)
}

/// Positive feedback loop `w = Δ·y`, `y = R·w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interconnection {
    pub closed_loop: StateSpaceModel,
    pub delta: StateSpaceModel,
    pub combined_a: Mat,
}

impl Interconnection {
    pub fn is_hurwitz(&self, tol: &Tolerances) -> Result<bool> {
        if self.combined_a.nrows() == 0 {
            return Ok(true);
        }
        Ok(classify_spectrum(&self.combined_a, tol)?.is_hurwitz())
    }

    /// Largest real part of the interconnection spectrum.
    pub fn spectral_abscissa(&self) -> Result<f64> {
        Ok(crate::numkernel::eigenvalues(&self.combined_a)?
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

/// State matrix of the positive feedback interconnection of `cl` and
/// `delta`, states ordered `[x_cl; x_Δ]`.
pub fn build_interconnection(
    cl: &StateSpaceModel,
    delta: &StateSpaceModel,
) -> Result<Interconnection> {
    let p = cl.p();
    if delta.p() != p {
        return Err(Error::Dimension(format!(
            "closed loop has {p} channels, uncertainty has {}",
            delta.p()
        )));
    }
    if (cl.d() * delta.d()).norm() > 0.0 {
        return Err(Error::IllPosedLoop("R(∞)·Δ(∞) ≠ 0".into()));
    }
    let (n1, n2) = (cl.n(), delta.n());
    // y = C₁x₁ + D₁C₂x₂, w = C₂x₂ + D₂y
    let y_x1 = cl.c().clone();
    let y_x2 = cl.d() * delta.c();
    let w_x1 = delta.d() * &y_x1;
    let w_x2 = delta.c() + delta.d() * &y_x2;
    let mut a = Mat::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1))
        .copy_from(&(cl.a() + cl.b() * &w_x1));
    a.view_mut((0, n1), (n1, n2)).copy_from(&(cl.b() * &w_x2));
    a.view_mut((n1, 0), (n2, n1))
        .copy_from(&(delta.b() * &y_x1));
    a.view_mut((n1, n1), (n2, n2))
        .copy_from(&(delta.a() + delta.b() * &y_x2));
    Ok(Interconnection {
        closed_loop: cl.clone(),
        delta: delta.clone(),
        combined_a: a,
    })
}

/// Random diagonal sum of first-order lags `Σₖ cₖ/(s + aₖ)` per channel,
/// scaled so that `λ_max(Δ(0)) ≤ γ`. Each channel is strictly NI with
/// `Δ(∞) = 0`.
pub fn sample_sni_uncertainty(p: usize, gamma: f64, seed: u64) -> Result<StateSpaceModel> {
    if p == 0 {
        return Err(Error::Precondition("uncertainty needs p ≥ 1".into()));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidOption(
            "gamma must be finite and non-negative".into(),
        ));
    }
    if gamma == 0.0 {
        return StateSpaceModel::static_gain(Mat::zeros(p, p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lags: Vec<(usize, f64, f64)> = Vec::new();
    let mut dc = vec![0.0; p];
    for (ch, dc_ch) in dc.iter_mut().enumerate() {
        let k = rng.random_range(1..=2);
        for _ in 0..k {
            let a: f64 = rng.random_range(0.2..5.0);
            let c: f64 = rng.random_range(0.1..1.0);
            *dc_ch += c / a;
            lags.push((ch, a, c));
        }
    }
    let peak = dc.iter().copied().fold(0.0, f64::max);
    let target = gamma * rng.random_range(0.5..=1.0);
    let scale = target / peak;
    let n = lags.len();
    let mut am = Mat::zeros(n, n);
    let mut bm = Mat::zeros(n, p);
    let mut cm = Mat::zeros(p, n);
    for (i, &(ch, a, c)) in lags.iter().enumerate() {
        am[(i, i)] = -a;
        bm[(i, ch)] = 1.0;
        cm[(ch, i)] = c * scale;
    }
    StateSpaceModel::strictly_proper(am, bm, cm)
}

/// Sampled trajectory. `diverged_at` is set when a state became non-finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(|v| v.as_slice())
    }
}

/// Default step `10⁻³ / max|λ(A)|`, capped at `10⁻³` for slow systems.
pub fn default_dt(a: &Mat) -> f64 {
    let rho = if a.nrows() == 0 {
        0.0
    } else {
        max_abs_eigenvalue(a).unwrap_or(0.0)
    };
    if rho > 1.0 {
        1e-3 / rho
    } else {
        1e-3
    }
}

/// Fixed-step fourth-order Runge–Kutta integration of `ẋ = Ax + Bu`,
/// `y = Cx + Du`. `input` is `None` for zero input.
pub fn simulate(
    sys: &StateSpaceModel,
    x0: &[f64],
    input: Option<&dyn Fn(f64) -> DVector<f64>>,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    if !(dt.is_finite() && dt > 0.0) || !(horizon.is_finite() && horizon >= dt) {
        return Err(Error::Precondition("need dt > 0 and horizon ≥ dt".into()));
    }
    if x0.len() != sys.n() {
        return Err(Error::Dimension(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            sys.n()
        )));
    }
    let p = sys.p();
    let u_at = |t: f64| -> DVector<f64> {
        match input {
            Some(f) => f(t),
            None => DVector::zeros(p),
        }
    };
    let f = |x: &DVector<f64>, u: &DVector<f64>| sys.a() * x + sys.b() * u;
    // the last step is shortened so that the trajectory ends at `horizon`
    let steps = (horizon / dt - 1e-9).ceil() as usize;
    let mut x = DVector::from_column_slice(x0);
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        diverged_at: None,
    };
    let record = |traj: &mut Trajectory, t: f64, x: &DVector<f64>, u: &DVector<f64>| {
        traj.times.push(t);
        traj.states.push(x.iter().copied().collect());
        traj.outputs
            .push((sys.c() * x + sys.d() * u).iter().copied().collect());
    };
    record(&mut traj, 0.0, &x, &u_at(0.0));
    for k in 0..steps {
        let t = k as f64 * dt;
        let t1 = ((k + 1) as f64 * dt).min(horizon);
        let h = t1 - t;
        let (u0, uh, u1) = (u_at(t), u_at(t + 0.5 * h), u_at(t1));
        let k1 = f(&x, &u0);
        let k2 = f(&(&x + &k1 * (0.5 * h)), &uh);
        let k3 = f(&(&x + &k2 * (0.5 * h)), &uh);
        let k4 = f(&(&x + &k3 * h), &u1);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite()) || x.norm() > 1e150 {
            traj.diverged_at = Some(t1);
            break;
        }
        record(&mut traj, t1, &x, &u1);
    }
    Ok(traj)
}
