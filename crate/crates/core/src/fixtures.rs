//! Seeded generators of test plants: eligible plants built from a chosen
//! normal form and hidden behind a random change of coordinates, and plants
//! that violate exactly one eligibility hypothesis.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::lti::{RelativeDegree, StateSpaceModel};
use crate::numkernel::{eigenvalues, Mat};

/// Shape of a generated plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantSpec {
    pub relative_degree: RelativeDegree,
    pub p: usize,
    /// Dimension of the lossless part of the zero dynamics (even).
    pub m_a: usize,
    /// Dimension of the Hurwitz part of the zero dynamics.
    pub m_b: usize,
    /// Make `CB` (or `CAB`) symmetric positive definite.
    pub spd_input: bool,
}

impl PlantSpec {
    pub fn m(&self) -> usize {
        self.m_a + self.m_b
    }
    pub fn n(&self) -> usize {
        self.m() + self.relative_degree.as_usize() * self.p
    }
}

/// Which eligibility hypothesis a generated plant violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    RhpZeroDynamics,
    NonSemisimpleImaginary,
    UncontrollablePair,
    ZeroAtOrigin,
}

impl Violation {
    pub const ALL: [Violation; 4] = [
        Violation::RhpZeroDynamics,
        Violation::NonSemisimpleImaginary,
        Violation::UncontrollablePair,
        Violation::ZeroAtOrigin,
    ];
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    gaussian(rng, n, n).qr().q()
}

/// `Q₁·diag(σ)·Q₂` with singular values in `[0.5, 2]`.
pub fn well_conditioned<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    let sv = Mat::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        rng.random_range(0.5..2.0)
    }));
    orthogonal(rng, n) * sv * orthogonal(rng, n)
}

/// Symmetric positive definite with eigenvalues in `[0.5, 2]`.
pub fn spd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    let q = orthogonal(rng, n);
    let d = Mat::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        rng.random_range(0.5..2.0)
    }));
    &q * d * q.transpose()
}

/// Dense Hurwitz matrix with spectral abscissa in `[−1.5, −0.3]`.
pub fn hurwitz<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Mat {
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let g = gaussian(rng, n, n) * (1.0 / (n as f64).sqrt());
    let alpha = eigenvalues(&g)
        .expect("eigenvalues of a finite matrix")
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = alpha + rng.random_range(0.3..1.5);
    g - Mat::identity(n, n) * shift
}

/// Block diagonal of `[[0, ω], [−ω, 0]]` with well-separated frequencies.
pub fn skew_blocks<R: Rng + ?Sized>(rng: &mut R, m_a: usize) -> Mat {
    let mut a = Mat::zeros(m_a, m_a);
    for k in 0..m_a / 2 {
        let w = 0.5 + 0.9 * k as f64 + rng.random_range(0.0..0.5);
        a[(2 * k, 2 * k + 1)] = w;
        a[(2 * k + 1, 2 * k)] = -w;
    }
    a
}

fn block_diag(blocks: &[Mat]) -> Mat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(n, n);
    let mut o = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((o, o), (k, k)).copy_from(b);
        o += k;
    }
    out
}

/// Random plant shape with `n ≤ max_n`, `p ≤ max_p`, mixing lossless and
/// Hurwitz zero dynamics.
pub fn random_spec<R: Rng + ?Sized>(rng: &mut R, max_n: usize, max_p: usize) -> PlantSpec {
    let relative_degree = if rng.random_bool(0.5) {
        RelativeDegree::One
    } else {
        RelativeDegree::Two
    };
    let r = relative_degree.as_usize();
    let p = rng.random_range(1..=max_p.min(max_n / r).max(1));
    let m = rng.random_range(0..=max_n - r * p);
    let m_a = 2 * rng.random_range(0..=(m / 2).min(2));
    PlantSpec {
        relative_degree,
        p,
        m_a,
        m_b: m - m_a,
        spd_input: false,
    }
}

/// Normal-form blocks assembled into `(A, B, C)` and hidden behind a random
/// well-conditioned change of coordinates.
fn assemble<R: Rng + ?Sized>(
    rng: &mut R,
    rd: RelativeDegree,
    p: usize,
    a11: Mat,
    a12: Mat,
    a13: Option<Mat>,
    input: Mat,
) -> StateSpaceModel {
    let m = a11.nrows();
    let r = rd.as_usize();
    let n = m + r * p;
    let mut a = Mat::zeros(n, n);
    a.view_mut((0, 0), (m, m)).copy_from(&a11);
    a.view_mut((0, m), (m, p)).copy_from(&a12);
    if let Some(a13) = a13 {
        a.view_mut((0, m + p), (m, p)).copy_from(&a13);
        a.view_mut((m, m + p), (p, p)).fill_with_identity();
    }
    let last = m + (r - 1) * p;
    a.view_mut((last, 0), (p, n))
        .copy_from(&gaussian(rng, p, n));
    let mut b = Mat::zeros(n, p);
    b.view_mut((last, 0), (p, p)).copy_from(&input);
    let mut c = Mat::zeros(p, n);
    c.view_mut((0, m), (p, p)).fill_with_identity();
    // ξ = T·x
    let t = well_conditioned(rng, n);
    let ti = t.clone().try_inverse().expect("well-conditioned");
    StateSpaceModel::strictly_proper(&ti * a * &t, ti * b, c * t).expect("consistent blocks")
}

fn input_matrix<R: Rng + ?Sized>(rng: &mut R, p: usize, spd_input: bool) -> Mat {
    if spd_input {
        spd(rng, p)
    } else {
        well_conditioned(rng, p)
    }
}

/// Controllable, weakly minimum phase plant with the given shape.
pub fn random_eligible_plant<R: Rng + ?Sized>(rng: &mut R, spec: &PlantSpec) -> StateSpaceModel {
    let m = spec.m();
    let s0 = well_conditioned(rng, m);
    let core = block_diag(&[skew_blocks(rng, spec.m_a), hurwitz(rng, spec.m_b)]);
    let a11 = &s0 * core * s0.clone().try_inverse().expect("well-conditioned");
    let a12 = gaussian(rng, m, spec.p);
    let a13 = (spec.relative_degree == RelativeDegree::Two).then(|| gaussian(rng, m, spec.p));
    let input = input_matrix(rng, spec.p, spec.spd_input);
    assemble(rng, spec.relative_degree, spec.p, a11, a12, a13, input)
}

/// Plant violating exactly `violation`; all other hypotheses hold.
pub fn violating_plant<R: Rng + ?Sized>(rng: &mut R, violation: Violation) -> StateSpaceModel {
    let rd = if rng.random_bool(0.5) {
        RelativeDegree::One
    } else {
        RelativeDegree::Two
    };
    let p = rng.random_range(1..=2);
    let (special, m_rest) = match violation {
        Violation::RhpZeroDynamics => (
            Mat::from_element(1, 1, rng.random_range(0.2..2.0)),
            rng.random_range(0..=3),
        ),
        Violation::ZeroAtOrigin => (Mat::zeros(1, 1), rng.random_range(0..=3)),
        Violation::UncontrollablePair => (
            Mat::from_element(1, 1, -rng.random_range(0.2..2.0)),
            rng.random_range(0..=3),
        ),
        Violation::NonSemisimpleImaginary => {
            let w = rng.random_range(0.5..2.0);
            let mut j = Mat::zeros(4, 4);
            for o in [0, 2] {
                j[(o, o + 1)] = w;
                j[(o + 1, o)] = -w;
            }
            j[(0, 2)] = 1.0;
            j[(1, 3)] = 1.0;
            (j, rng.random_range(0..=2))
        }
    };
    let k = special.nrows();
    let m = k + m_rest;
    let s0 = well_conditioned(rng, m);
    let s0i = s0.clone().try_inverse().expect("well-conditioned");
    let a11 = &s0 * block_diag(&[special, hurwitz(rng, m_rest)]) * &s0i;
    let mut a12 = gaussian(rng, m, p);
    let mut a13 = (rd == RelativeDegree::Two).then(|| gaussian(rng, m, p));
    if violation == Violation::UncontrollablePair {
        // left eigenvector of the special mode annihilates A12 and A13
        let w = s0i.row(0).transpose();
        let ww = w.dot(&w);
        let kill = |x: &Mat| x - &w * (w.transpose() * x) / ww;
        a12 = kill(&a12);
        a13 = a13.map(|a| kill(&a));
    }
    let input = input_matrix(rng, p, false);
    assemble(rng, rd, p, a11, a12, a13, input)
}

/// Random pair `(A, B)` with `n ≤ max_n`; roughly half are uncontrollable by
/// construction (a block-triangular Kalman decomposition in disguise).
pub fn random_pair<R: Rng + ?Sized>(rng: &mut R, max_n: usize) -> (Mat, Mat) {
    let n = rng.random_range(1..=max_n);
    let p = rng.random_range(1..=n.min(3));
    let mut a = gaussian(rng, n, n) * (1.0 / (n as f64).sqrt());
    let mut b = gaussian(rng, n, p);
    if n >= 2 && rng.random_bool(0.5) {
        let nu = rng.random_range(1..n);
        let nc = n - nu;
        // [[A_c, A_cu], [0, A_u]], B = [B_c; 0]
        a.view_mut((nc, 0), (nu, nc)).fill(0.0);
        b.view_mut((nc, 0), (nu, p)).fill(0.0);
        let t = well_conditioned(rng, n);
        let ti = t.clone().try_inverse().expect("well-conditioned");
        a = &ti * a * &t;
        b = ti * b;
    }
    (a, b)
}
