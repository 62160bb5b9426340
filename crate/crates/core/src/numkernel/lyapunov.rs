use nalgebra::DVector;

use super::spectrum::{eigenvalues, real_schur, schur_blocks};
use super::{asymmetry, check_finite, check_square, is_pd, sym, Mat, Tolerances};
use crate::error::{Error, Result};

fn check_inputs(a: &Mat, q: &Mat, tol: &Tolerances) -> Result<()> {
    check_square(a, "A")?;
    check_square(q, "Q")?;
    if a.nrows() != q.nrows() {
        return Err(Error::Dimension(format!(
            "A is {}x{} but Q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    check_finite(a, "A")?;
    check_finite(q, "Q")?;
    if asymmetry(q) > tol.residual_tol {
        return Err(Error::Precondition("Q is not symmetric".into()));
    }
    if !is_pd(q, tol) {
        return Err(Error::Precondition("Q is not positive definite".into()));
    }
    let axis = tol.axis_tol_for(a);
    if let Some(l) = eigenvalues(a)?.into_iter().find(|l| l.re >= -axis) {
        return Err(Error::Precondition(format!(
            "A is not Hurwitz (eigenvalue {l})"
        )));
    }
    Ok(())
}

fn check_residual(a: &Mat, q: &Mat, y: &Mat, tol: &Tolerances) -> Result<()> {
    let resid = (a * y + y * a.transpose() + q).norm();
    if resid > tol.residual_tol * (1.0 + q.norm()) {
        return Err(Error::NumericalFailure(format!(
            "Lyapunov residual {resid:e} exceeds tolerance"
        )));
    }
    Ok(())
}

/// Solve the small Sylvester equation `T1·X + X·T2ᵀ = R` (blocks of size ≤ 2)
/// through its Kronecker form.
fn solve_small_sylvester(t1: &Mat, t2: &Mat, r: &Mat) -> Result<Mat> {
    let (p, q) = (t1.nrows(), t2.nrows());
    let k = p * q;
    let mut m = Mat::zeros(k, k);
    // column-major vec: X[(i, j)] ↦ i + p·j
    for j in 0..q {
        for i in 0..p {
            let row = i + p * j;
            for l in 0..p {
                m[(row, l + p * j)] += t1[(i, l)];
            }
            for l in 0..q {
                m[(row, i + p * l)] += t2[(j, l)];
            }
        }
    }
    let rhs = DVector::from_column_slice(r.as_slice());
    let sol = m.lu().solve(&rhs).ok_or_else(|| {
        Error::NumericalFailure("singular Sylvester block (A not Hurwitz?)".into())
    })?;
    Ok(Mat::from_column_slice(p, q, sol.as_slice()))
}

/// Solve `A·Y + Y·Aᵀ = −Q` for Hurwitz `A` and symmetric positive definite
/// `Q` by reduction to real Schur form and block back-substitution.
pub fn solve_lyapunov(a: &Mat, q: &Mat, tol: &Tolerances) -> Result<Mat> {
    check_inputs(a, q, tol)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let (u, t) = real_schur(a)?;
    // T·X + X·Tᵀ = C with X = Uᵀ·Y·U, C = −Uᵀ·Q·U
    let c = -(u.transpose() * q * &u);
    let blocks = schur_blocks(&t);
    let mut x = Mat::zeros(n, n);
    for &(ri, si) in blocks.iter().rev() {
        let ei = ri + si;
        for &(rj, sj) in blocks.iter().rev() {
            let ej = rj + sj;
            let mut rhs: Mat = c.view((ri, rj), (si, sj)).into_owned();
            if ei < n {
                rhs -= t.view((ri, ei), (si, n - ei)) * x.view((ei, rj), (n - ei, sj));
            }
            if ej < n {
                rhs -= x.view((ri, ej), (si, n - ej)) * t.view((rj, ej), (sj, n - ej)).transpose();
            }
            let tii = t.view((ri, ri), (si, si)).into_owned();
            let tjj = t.view((rj, rj), (sj, sj)).into_owned();
            let blk = solve_small_sylvester(&tii, &tjj, &rhs)?;
            x.view_mut((ri, rj), (si, sj)).copy_from(&blk);
        }
    }
    let y = sym(&(&u * x * u.transpose()));
    check_finite(&y, "Lyapunov solution")?;
    check_residual(a, q, &y, tol)?;
    Ok(y)
}

/// Dense Kronecker-product solve of `A·Y + Y·Aᵀ = −Q`:
/// `(I ⊗ A + A ⊗ I)·vec(Y) = −vec(Q)`. Intended for `n ≤ 50`.
pub fn solve_lyapunov_kron(a: &Mat, q: &Mat, tol: &Tolerances) -> Result<Mat> {
    check_inputs(a, q, tol)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    if n > 50 {
        return Err(Error::Precondition(format!(
            "Kronecker Lyapunov solve limited to n <= 50, got {n}"
        )));
    }
    let mut k = Mat::zeros(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for l in 0..n {
                k[(row, l + n * j)] += a[(i, l)];
                k[(row, i + n * l)] += a[(j, l)];
            }
        }
    }
    let rhs = -DVector::from_column_slice(q.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("singular Kronecker system".into()))?;
    let y = sym(&Mat::from_column_slice(n, n, sol.as_slice()));
    check_residual(a, q, &y, tol)?;
    Ok(y)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::fixtures::{hurwitz, spd};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn residual_and_symmetry(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = hurwitz(&mut rng, n);
            let q = spd(&mut rng, n);
            let y = solve_lyapunov(&a, &q, &Tolerances::default()).unwrap();
            let res = (&a * &y + &y * a.transpose() + &q).norm();
            prop_assert!(res <= 1e-10 * (1.0 + q.norm() + a.norm() * y.norm()), "residual {res}");
            prop_assert!((&y - y.transpose()).norm() <= 1e-12 * (1.0 + y.norm()));
        }
    }
}
