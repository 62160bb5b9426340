use nalgebra::Schur;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    check_finite, check_square, complex_singular_values, to_complex, CMat, Mat, Tolerances,
};
use crate::error::{Error, Result};

/// Location of an eigenvalue relative to the imaginary axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralClass {
    OpenLeftHalfPlane,
    PurelyImaginaryNonzero,
    Zero,
    OpenRightHalfPlane,
}

/// Eigenvalues of a real square matrix, each with a class tag and a
/// semisimplicity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralClassification {
    pub eigenvalues: Vec<Complex64>,
    pub classes: Vec<SpectralClass>,
    pub semisimple: Vec<bool>,
}

impl SpectralClassification {
    /// Every eigenvalue in the open left half-plane.
    pub fn is_hurwitz(&self) -> bool {
        self.classes
            .iter()
            .all(|c| *c == SpectralClass::OpenLeftHalfPlane)
    }

    /// Spectrum in the closed left half-plane with semisimple imaginary-axis
    /// eigenvalues.
    pub fn is_lyapunov_stable(&self) -> bool {
        self.classes
            .iter()
            .zip(&self.semisimple)
            .all(|(c, &ss)| match c {
                SpectralClass::OpenLeftHalfPlane => true,
                SpectralClass::OpenRightHalfPlane => false,
                SpectralClass::Zero | SpectralClass::PurelyImaginaryNonzero => ss,
            })
    }

    pub fn has_zero(&self) -> bool {
        self.classes.contains(&SpectralClass::Zero)
    }

    pub fn count(&self, class: SpectralClass) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }
}

/// A group of numerically coincident eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCluster {
    pub center: Complex64,
    pub multiplicity: usize,
    pub members: Vec<usize>,
}

/// Real Schur decomposition `A = U·T·Uᵀ`; returns `(U, T)` with `T`
/// quasi-upper-triangular and exact zeros below its 1×1/2×2 diagonal blocks.
pub fn real_schur(a: &Mat) -> Result<(Mat, Mat)> {
    check_square(a, "matrix")?;
    check_finite(a, "matrix")?;
    let n = a.nrows();
    if n == 0 {
        return Ok((Mat::zeros(0, 0), Mat::zeros(0, 0)));
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000 * n)
        .ok_or_else(|| Error::NumericalFailure("real Schur iteration did not converge".into()))?;
    Ok(schur.unpack())
}

/// Diagonal block layout `(start, size)` of a quasi-triangular matrix.
pub(crate) fn schur_blocks(t: &Mat) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

fn block_eigenvalues(t: &Mat, start: usize, size: usize, out: &mut Vec<Complex64>) {
    if size == 1 {
        out.push(Complex64::new(t[(start, start)], 0.0));
        return;
    }
    let (a, b) = (t[(start, start)], t[(start, start + 1)]);
    let (c, d) = (t[(start + 1, start)], t[(start + 1, start + 1)]);
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let disc = half_diff * half_diff + b * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        out.push(Complex64::new(half_tr + r, 0.0));
        out.push(Complex64::new(half_tr - r, 0.0));
    } else {
        let r = (-disc).sqrt();
        out.push(Complex64::new(half_tr, r));
        out.push(Complex64::new(half_tr, -r));
    }
}

/// Eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    let (_, t) = real_schur(a)?;
    let mut out = Vec::with_capacity(a.nrows());
    for (start, size) in schur_blocks(&t) {
        block_eigenvalues(&t, start, size, &mut out);
    }
    Ok(out)
}

/// Distance below which two eigenvalues are treated as one multiple
/// eigenvalue. A defective eigenvalue of index k splits by roughly
/// `ε^{1/k}`, so the cluster radius is wider than the axis tolerance.
fn cluster_radius(a: &Mat, tol: &Tolerances) -> f64 {
    tol.axis_tol_for(a).max(1e-6 * a.norm())
}

fn cluster(eigs: &[Complex64], radius: f64) -> Vec<EigenCluster> {
    let n = eigs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let next = p[j];
            p[j] = r;
            j = next;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (eigs[i] - eigs[j]).norm() <= radius {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, members)) => members.push(i),
            None => groups.push((r, vec![i])),
        }
    }
    groups
        .into_iter()
        .map(|(_, members)| {
            let sum: Complex64 = members.iter().map(|&i| eigs[i]).sum();
            EigenCluster {
                center: sum / members.len() as f64,
                multiplicity: members.len(),
                members,
            }
        })
        .collect()
}

/// Eigenvalues of `a` grouped into clusters of numerically repeated values.
pub fn eigen_clusters(a: &Mat, tol: &Tolerances) -> Result<Vec<EigenCluster>> {
    let eigs = eigenvalues(a)?;
    Ok(cluster(&eigs, cluster_radius(a, tol)))
}

/// Dimension of `ker(A − λI)` under the relative rank cutoff.
pub(crate) fn nullity_at(a: &Mat, lambda: Complex64, tol: &Tolerances) -> usize {
    let n = a.nrows();
    let mut m: CMat = -to_complex(a);
    for i in 0..n {
        m[(i, i)] += lambda;
    }
    let s = complex_singular_values(&m);
    let scale = s
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(a.norm())
        .max(f64::MIN_POSITIVE);
    s.iter().filter(|&&v| v <= tol.rank_tol * scale).count()
}

/// Classify the spectrum of `a` and flag semisimple eigenvalues.
///
/// Algebraic multiplicity is the size of the eigenvalue's cluster;
/// geometric multiplicity is the nullity of `A − λI` at the cluster centre.
pub fn classify_spectrum(a: &Mat, tol: &Tolerances) -> Result<SpectralClassification> {
    let eigs = eigenvalues(a)?;
    let axis = tol.axis_tol_for(a);
    let classes = eigs
        .iter()
        .map(|l| {
            if l.norm() <= axis {
                SpectralClass::Zero
            } else if l.re.abs() <= axis {
                SpectralClass::PurelyImaginaryNonzero
            } else if l.re < 0.0 {
                SpectralClass::OpenLeftHalfPlane
            } else {
                SpectralClass::OpenRightHalfPlane
            }
        })
        .collect();
    let mut semisimple = vec![true; eigs.len()];
    for cl in cluster(&eigs, cluster_radius(a, tol)) {
        if cl.multiplicity > 1 && nullity_at(a, cl.center, tol) < cl.multiplicity {
            for &i in &cl.members {
                semisimple[i] = false;
            }
        }
    }
    Ok(SpectralClassification {
        eigenvalues: eigs,
        classes,
        semisimple,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn scalar_stable() {
        let c = classify_spectrum(&Mat::from_element(1, 1, -1.0), &tol()).unwrap();
        assert_eq!(c.eigenvalues, vec![Complex64::new(-1.0, 0.0)]);
        assert_eq!(c.classes, vec![SpectralClass::OpenLeftHalfPlane]);
        assert!(c.is_hurwitz());
        assert!(c.is_lyapunov_stable());
    }

    #[test]
    fn skew_block_is_lyapunov_stable_not_hurwitz() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]);
        let c = classify_spectrum(&a, &tol()).unwrap();
        for l in &c.eigenvalues {
            assert!(l.re.abs() < 1e-14 && (l.im.abs() - 2.0).abs() < 1e-14);
        }
        assert!(c
            .classes
            .iter()
            .all(|k| *k == SpectralClass::PurelyImaginaryNonzero));
        assert!(c.semisimple.iter().all(|&s| s));
        assert!(c.is_lyapunov_stable());
        assert!(!c.is_hurwitz());
    }

    #[test]
    fn jordan_block_not_semisimple() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let c = classify_spectrum(&a, &tol()).unwrap();
        assert_eq!(c.classes, vec![SpectralClass::Zero, SpectralClass::Zero]);
        assert!(c.semisimple.iter().all(|&s| !s));
        assert!(!c.is_lyapunov_stable());
    }

    #[test]
    fn repeated_semisimple_zero_is_lyapunov_stable() {
        let c = classify_spectrum(&Mat::zeros(3, 3), &tol()).unwrap();
        assert!(c.semisimple.iter().all(|&s| s));
        assert!(c.is_lyapunov_stable());
    }

    #[test]
    fn disguised_imaginary_jordan_pair_rejected() {
        // [[Ω, I], [0, Ω]] under a similarity: ±2j each with index 2.
        let mut j = Mat::zeros(4, 4);
        j[(0, 1)] = 2.0;
        j[(1, 0)] = -2.0;
        j[(2, 3)] = 2.0;
        j[(3, 2)] = -2.0;
        j[(0, 2)] = 1.0;
        j[(1, 3)] = 1.0;
        let s = Mat::from_row_slice(
            4,
            4,
            &[
                1.0, 0.2, 0.0, 0.1, 0.0, 1.0, 0.3, 0.0, 0.1, 0.0, 1.0, 0.2, 0.0, 0.1, 0.0, 1.0,
            ],
        );
        let a = &s * j * s.clone().try_inverse().unwrap();
        let c = classify_spectrum(&a, &tol()).unwrap();
        assert!(!c.is_lyapunov_stable());
    }

    #[test]
    fn right_half_plane_tagged() {
        let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -3.0]));
        let c = classify_spectrum(&a, &tol()).unwrap();
        assert_eq!(c.count(SpectralClass::OpenRightHalfPlane), 1);
        assert!(!c.is_lyapunov_stable());
    }

    #[test]
    fn near_axis_eigenvalue_tagged_imaginary() {
        let a = Mat::from_row_slice(2, 2, &[1e-12, 1.0, -1.0, 1e-12]);
        let c = classify_spectrum(&a, &tol()).unwrap();
        assert!(c
            .classes
            .iter()
            .all(|k| *k == SpectralClass::PurelyImaginaryNonzero));
    }

    #[test]
    fn eigenvalues_of_empty_matrix() {
        assert!(eigenvalues(&Mat::zeros(0, 0)).unwrap().is_empty());
    }

    #[test]
    fn non_finite_input_is_numerical_failure() {
        let a = Mat::from_element(1, 1, f64::NAN);
        assert!(matches!(eigenvalues(&a), Err(Error::NumericalFailure(_))));
    }
}
