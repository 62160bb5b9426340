use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use nifeq_core::lti::{dc_gain, freq_sweep, log_grid, siso_polynomials};
use nifeq_core::normalform::modal_split;
use nifeq_core::numkernel::{eigenvalues, max_sym_eigenvalue};
use nifeq_core::robust::{build_interconnection, default_dt, sample_sni_uncertainty, simulate};
use nifeq_core::synth::{
    gate_feedback_equivalence, synthesize_ni, synthesize_ssni, GateReport, HbStrategy, SsniOutcome,
};
use nifeq_core::verify::{
    dc_gain_stability, loop_dc_gain, verify_ni_certificate, verify_ni_freq,
    verify_ssni_certificate, verify_ssni_freq,
};
use nifeq_core::{
    robust::synth_robust, Mat, StateSpaceModel, SynthesisOptions, SynthesisResult, Tolerances,
    UncertainPlant,
};

use crate::io::{emit, load_certificate, load_system, rows, MatrixSpec, OptionsBlock, SystemFile};
use crate::Failure;

/// Frequency-grid flags shared by `verify` and `bode`.
#[derive(Debug, Clone, clap::Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 1e-2)]
    pub freq_lo: f64,
    #[arg(long, default_value_t = 1e2)]
    pub freq_hi: f64,
    /// Grid size; defaults to 400 points per decade.
    #[arg(long)]
    pub points: Option<usize>,
}

impl GridArgs {
    fn grid(&self) -> Result<Vec<f64>, Failure> {
        let (lo, hi) = (self.freq_lo, self.freq_hi);
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return Err(Failure::input("need 0 < --freq-lo ≤ --freq-hi"));
        }
        let points = match self.points {
            Some(0) => return Err(Failure::input("--points must be at least 1")),
            Some(k) => k,
            None => ((hi / lo).log10() * 400.0).ceil() as usize + 1,
        };
        if points > 1 && hi == lo {
            return Err(Failure::input(
                "--freq-hi must exceed --freq-lo for more than one point",
            ));
        }
        Ok(log_grid(lo, hi, points))
    }
}

fn tol() -> Tolerances {
    Tolerances::default()
}

fn gate_json(g: &GateReport) -> Value {
    let mut v = serde_json::to_value(g).expect("gate report serializes");
    v["reason"] = json!(g.reason.map(|r| r.code()));
    v
}

pub fn analyze(path: &Path, out: Option<&Path>) -> Result<u8, Failure> {
    let sf = load_system(path)?;
    let sys = sf.model()?;
    let g = gate_feedback_equivalence(&sys, &tol());
    let report = json!({
        "command": "analyze",
        "system": sf.name,
        "n": sys.n(),
        "p": sys.p(),
        "gate": gate_json(&g),
    });
    emit(&report, out)?;
    Ok(if g.eligible { 0 } else { 1 })
}

/// Resolve the options block plus flag overrides against the plant's
/// dimensions; scalars expand to multiples of the identity.
fn build_options(
    block: Option<&OptionsBlock>,
    y2: Option<&MatrixSpec>,
    k3: Option<&MatrixSpec>,
    seed: Option<u64>,
    gate: &GateReport,
    p: usize,
) -> Result<SynthesisOptions, Failure> {
    let default = OptionsBlock::default();
    let b = block.unwrap_or(&default);
    let m_b = match &gate.normal_form {
        Some(nf) if nf.m() > 0 => modal_split(nf.a11(), &tol())?.m_b(),
        _ => 0,
    };
    let resolve = |spec: Option<&MatrixSpec>, field: &str, dim: usize| {
        spec.map(|s| s.resolve(field, dim)).transpose()
    };
    let seed = seed.or(b.seed).unwrap_or(0);
    let max_tries = b.max_tries.unwrap_or(64);
    let hb_strategy = match b.hb.as_deref() {
        None | Some("zero") => HbStrategy::ZeroFirst { seed, max_tries },
        Some("random") => HbStrategy::Random { seed, max_tries },
        Some(other) => {
            return Err(Failure::input(format!(
                "options.hb: expected \"zero\" or \"random\", got {other:?}"
            )))
        }
    };
    Ok(SynthesisOptions {
        qb: resolve(b.qb.as_ref(), "options.qb", m_b)?,
        y1b_override: resolve(b.y1b.as_ref(), "options.y1b", m_b)?,
        y1a: b.y1a.unwrap_or(1.0),
        y2: resolve(y2.or(b.y2.as_ref()), "Y2", p)?,
        k3: resolve(k3.or(b.k3.as_ref()), "K3", p)?,
        hb_strategy,
    })
}

/// Report body for a synthesized closed loop, with the loop and its
/// certificate re-expressed and re-checked in the plant's coordinates.
fn result_json(
    r: &SynthesisResult,
    plant: &StateSpaceModel,
    name: Option<String>,
) -> Result<(Value, bool), Failure> {
    let cl = r.closed_loop_original(plant)?;
    let y = r.certificate_original()?;
    let t = tol();
    let mut check = if r.strict_margin.is_some() {
        verify_ssni_certificate(&cl, &y, &t)
    } else {
        verify_ni_certificate(&cl, &y, &t)
    };
    check.merge(verify_ni_freq(&cl, &log_grid(1e-3, 1e3, 601), &t));
    let polys = (cl.p() == 1).then(|| siso_polynomials(&cl)).transpose()?;
    let g = &r.gains;
    let body = json!({
        "kind": r.kind,
        "relative_degree": r.relative_degree.as_usize(),
        "gains": {
            "K1": rows(&g.k1),
            "K1_modal": rows(&g.k1_modal),
            "K2": rows(&g.k2),
            "K3": g.k3.as_ref().map(rows),
        },
        "law_normal": rows(&r.law_normal),
        "Kx": rows(&r.kx),
        "Kv": rows(&r.kv),
        "hb_used": rows(&r.hb_used),
        "hb_attempts": r.hb_attempts,
        "options_used": {
            "qb": rows(&r.options_used.qb),
            "y1b": rows(&r.options_used.y1b),
            "y1a": r.options_used.y1a,
            "y2": rows(&r.options_used.y2),
            "k3": r.options_used.k3.as_ref().map(rows),
            "hb_strategy": r.options_used.hb_strategy,
        },
        "dc_gain": rows(&dc_gain(&cl, &t)?),
        "strict_margin": r.strict_margin,
        "numerator": polys.as_ref().map(|(n, _)| n),
        "denominator": polys.as_ref().map(|(_, d)| d),
        "closed_loop": SystemFile::from_model(&cl, name),
        "certificate_y": rows(&y),
        "modal": {
            "coordinate_map": rows(&r.coordinate_map),
            "closed_loop": SystemFile::from_model(&r.closed_loop, None),
            "certificate_y": rows(&r.certificate_y),
        },
        "verification": {
            "passed": r.verification.passed && check.passed,
            "modal": r.verification,
            "original": check,
        },
    });
    Ok((body, r.verification.passed && check.passed))
}

pub struct SynthArgs<'a> {
    pub ssni: bool,
    pub y2: Option<&'a MatrixSpec>,
    pub k3: Option<&'a MatrixSpec>,
    pub seed: Option<u64>,
}

pub fn synthesize(path: &Path, a: SynthArgs, out: Option<&Path>) -> Result<u8, Failure> {
    let sf = load_system(path)?;
    let sys = sf.model()?;
    let t = tol();
    let gate = gate_feedback_equivalence(&sys, &t);
    let mut report =
        json!({ "command": "synthesize", "system": sf.name, "gate": gate_json(&gate) });
    if a.ssni && gate.relative_degree == Some(2) {
        // refusal does not depend on the options
        if let SsniOutcome::Refused(r) = synthesize_ssni(&sys, &SynthesisOptions::default(), &t)? {
            report["refusal"] = json!(r);
            emit(&report, out)?;
            return Ok(1);
        }
    }
    if !gate.eligible {
        emit(&report, out)?;
        return Ok(1);
    }
    let opts = build_options(sf.options.as_ref(), a.y2, a.k3, a.seed, &gate, sys.p())?;
    let r = if a.ssni {
        match synthesize_ssni(&sys, &opts, &t)? {
            SsniOutcome::Synthesized(r) => *r,
            SsniOutcome::Refused(r) => {
                report["refusal"] = json!(r);
                emit(&report, out)?;
                return Ok(1);
            }
        }
    } else {
        synthesize_ni(&sys, &opts, &t)?
    };
    let (body, ok) = result_json(&r, &sys, sf.name.clone())?;
    merge(&mut report, body);
    emit(&report, out)?;
    Ok(if ok { 0 } else { 3 })
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

pub fn verify(
    path: &Path,
    certificate: Option<&Path>,
    strict: bool,
    grid: &GridArgs,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let sf = load_system(path)?;
    let sys = sf.model()?;
    let t = tol();
    let w = grid.grid()?;
    let cert = match certificate {
        Some(p) => {
            let y = load_certificate(p, sys.n())?;
            Some(if strict {
                verify_ssni_certificate(&sys, &y, &t)
            } else {
                verify_ni_certificate(&sys, &y, &t)
            })
        }
        None => None,
    };
    let freq = if strict {
        verify_ssni_freq(&sys, &w, &t)
    } else {
        verify_ni_freq(&sys, &w, &t)
    };
    let passed = freq.passed && cert.as_ref().is_none_or(|c| c.passed);
    let report = json!({
        "command": "verify",
        "system": sf.name,
        "strict": strict,
        "passed": passed,
        "grid": { "lo": w.first(), "hi": w.last(), "points": w.len() },
        "certificate": cert,
        "frequency": freq,
    });
    emit(&report, out)?;
    Ok(if passed { 0 } else { 1 })
}

pub struct RobustArgs<'a> {
    pub gamma: Option<f64>,
    pub delta: Option<&'a str>,
    pub simulate: bool,
    pub horizon: f64,
    pub trajectory: Option<&'a Path>,
    pub seed: Option<u64>,
    pub y2: Option<&'a MatrixSpec>,
}

fn load_delta(
    spec: &str,
    p: usize,
    gamma: f64,
    seed: Option<u64>,
) -> Result<(StateSpaceModel, Value), Failure> {
    if let Some(rest) = spec.strip_prefix("sample") {
        let seed = match rest.strip_prefix(':') {
            Some(s) => s
                .parse::<u64>()
                .map_err(|_| Failure::input(format!("--delta: bad seed {s:?}")))?,
            None if rest.is_empty() => seed.unwrap_or(0),
            None => {
                return Err(Failure::input(format!(
                    "--delta: expected sample:<seed>, got {spec:?}"
                )))
            }
        };
        let d = sample_sni_uncertainty(p, gamma, seed)?;
        let src =
            json!({ "sampled": true, "seed": seed, "system": SystemFile::from_model(&d, None) });
        return Ok((d, src));
    }
    let sf = load_system(Path::new(spec))?;
    let d = sf.model()?;
    Ok((d, json!({ "sampled": false, "path": spec })))
}

pub fn robust(path: &Path, a: RobustArgs, out: Option<&Path>) -> Result<u8, Failure> {
    let sf = load_system(path)?;
    let sys = sf.model()?;
    let t = tol();
    let gamma = a
        .gamma
        .or(sf.gamma)
        .ok_or_else(|| Failure::input("no gamma: pass --gamma or set it in the system file"))?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Failure::input(format!(
            "--gamma must be positive, got {gamma}"
        )));
    }
    let up = UncertainPlant::new(sys.clone(), gamma)?;
    let gate = gate_feedback_equivalence(&sys, &t);
    let mut report =
        json!({ "command": "robust", "system": sf.name, "gamma": gamma, "gate": gate_json(&gate) });
    if !gate.eligible {
        emit(&report, out)?;
        return Ok(1);
    }
    let opts = build_options(sf.options.as_ref(), a.y2, None, a.seed, &gate, sys.p())?;
    let r = synth_robust(&up, &opts, &t)?;
    let lmax = max_sym_eigenvalue(&r.options_used.y2)?;
    report["bound"] = json!({
        "lambda_max_y2": lmax,
        "one_over_gamma": 1.0 / gamma,
        "margin": 1.0 / gamma - lmax,
    });
    let (body, mut ok) = result_json(&r, &sys, sf.name.clone())?;
    merge(&mut report, body);
    if let Some(spec) = a.delta {
        let (delta, src) = load_delta(spec, sys.p(), gamma, a.seed)?;
        let ic = build_interconnection(&r.closed_loop, &delta)?;
        let hurwitz = ic.is_hurwitz(&t)?;
        let eig: Vec<(f64, f64)> = if ic.combined_a.nrows() == 0 {
            Vec::new()
        } else {
            eigenvalues(&ic.combined_a)?
                .iter()
                .map(|l| (l.re, l.im))
                .collect()
        };
        let mut ir = json!({
            "delta": src,
            "loop_dc_gain": loop_dc_gain(&r.closed_loop, &delta, &t)?,
            "dc_gain_test": dc_gain_stability(&r.closed_loop, &delta, &t),
            "hurwitz": hurwitz,
            "spectral_abscissa": ic.spectral_abscissa()?,
            "eigenvalues": eig,
        });
        ok &= hurwitz;
        if a.simulate {
            let x0 = vec![1.0; ic.combined_a.nrows()];
            let free = StateSpaceModel::strictly_proper(
                ic.combined_a.clone(),
                Mat::zeros(x0.len(), 1),
                Mat::zeros(1, x0.len()),
            )?;
            let dt = default_dt(&ic.combined_a);
            let traj = simulate(&free, &x0, None, dt, a.horizon)?;
            let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if let Some(p) = a.trajectory {
                write_trajectory(p, &traj.times, &traj.states)?;
            }
            ir["simulation"] = json!({
                "x0": x0,
                "dt": dt,
                "horizon": a.horizon,
                "initial_norm": norm(&x0),
                "final_norm": traj.final_state().map(norm),
                "diverged_at": traj.diverged_at,
                "trajectory": a.trajectory,
            });
        }
        report["interconnection"] = ir;
    } else if a.simulate {
        return Err(Failure::input("--simulate needs --delta"));
    }
    emit(&report, out)?;
    Ok(if ok { 0 } else { 1 })
}

fn write_trajectory(path: &Path, times: &[f64], states: &[Vec<f64>]) -> Result<(), Failure> {
    let n = states.first().map_or(0, Vec::len);
    let mut s = String::from("t");
    for i in 1..=n {
        s += &format!(",x{i}");
    }
    s.push('\n');
    for (t, x) in times.iter().zip(states) {
        s += &t.to_string();
        for v in x {
            s += &format!(",{v}");
        }
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Unwrap `next` against `prev` so consecutive phases differ by at most 180°.
fn unwrap_deg(prev: f64, mut next: f64) -> f64 {
    while next - prev > 180.0 {
        next -= 360.0;
    }
    while next - prev < -180.0 {
        next += 360.0;
    }
    next
}

pub fn bode(path: &Path, grid: &GridArgs, out: Option<&PathBuf>) -> Result<u8, Failure> {
    let sys = load_system(path)?.model()?;
    let w = grid.grid()?;
    let sweep = freq_sweep(&sys, &w, &tol())?;
    let p = sys.p();
    let mut header = String::from("omega_rad_s");
    for i in 1..=p {
        for j in 1..=p {
            if p == 1 {
                header += ",magnitude_db,phase_deg";
            } else {
                header += &format!(",magnitude_db_{i}_{j},phase_deg_{i}_{j}");
            }
        }
    }
    let mut csv = header + "\n";
    let mut prev: Vec<Option<f64>> = vec![None; p * p];
    let mut samples = sweep.samples.iter().peekable();
    for &omega in &w {
        csv += &omega.to_string();
        match samples.next_if(|s| s.omega == omega) {
            Some(s) => {
                for (k, r) in s.response.transpose().iter().enumerate() {
                    let mag = 20.0 * r.norm().log10();
                    let principal = r.arg().to_degrees();
                    let ph = prev[k].map_or(principal, |q| unwrap_deg(q, principal));
                    prev[k] = Some(ph);
                    csv += &format!(",{mag},{ph}");
                }
            }
            // jω sits on a pole
            None => csv += &",inf,NaN".repeat(p * p),
        }
        csv.push('\n');
    }
    match out {
        Some(p) => {
            fs::write(p, &csv).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?
        }
        None => crate::io::stdout(&csv),
    }
    Ok(0)
}
