//! Dense matrix equations for the linear baselines: Lyapunov and algebraic
//! Riccati equations, plus the stabilizing gain used to start Newton–Kleinman.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not Hurwitz (spectral abscissa {0:.3e})")]
    NotHurwitz(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular system in {0}")]
    Singular(&'static str),
    #[error("(A, B) is not controllable; no stabilizing gain could be constructed")]
    Uncontrollable,
    #[error("Newton–Kleinman iteration did not converge (residual {0:.3e})")]
    NewtonDivergence(f64),
}

/// Largest real part of the eigenvalues of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn square(a: &DMatrix<f64>, what: &str) -> Result<usize, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::Dimension(format!("{what} is {}x{}", a.nrows(), a.ncols())));
    }
    Ok(a.nrows())
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Solves `AᵀP + PA = −W` for Hurwitz `A` through the Kronecker form.
pub fn lyap_solve(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = square(a, "A")?;
    if w.shape() != (n, n) {
        return Err(LinalgError::Dimension(format!("W must be {n}x{n}")));
    }
    let abscissa = spectral_abscissa(a);
    if !(abscissa < 0.0) {
        return Err(LinalgError::NotHurwitz(abscissa));
    }
    let p = lyap_kron(a, w)?;
    Ok(symmetrize(&p))
}

// vec(AᵀP + PA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P), column-major vec
fn lyap_kron(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    let at = a.transpose();
    let id = DMatrix::<f64>::identity(n, n);
    let m = id.kronecker(&at) + at.kronecker(&id);
    let rhs = -DMatrix::from_column_slice(n * n, 1, w.as_slice());
    let sol = m.lu().solve(&rhs).ok_or(LinalgError::Singular("Lyapunov equation"))?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F`.
pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let rinv = r
        .clone()
        .try_inverse()
        .unwrap_or_else(|| DMatrix::zeros(r.nrows(), r.ncols()));
    (a.transpose() * p + p * a - p * b * rinv * b.transpose() * p + q).norm()
}

/// A gain `K` with `A − BK` Hurwitz, by Bass's construction.
pub fn stabilizing_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = square(a, "A")?;
    if b.nrows() != n {
        return Err(LinalgError::Dimension(format!("B must have {n} rows")));
    }
    // shift so that −(A + βI) is Hurwitz
    let beta = a.abs().row_sum().max() + 1.0;
    let shifted = -(a + DMatrix::identity(n, n) * beta);
    // (−Ã)Z + Z(−Ã)ᵀ = 2BBᵀ, with Ã = −(A + βI) Hurwitz
    let z = lyap_kron(&shifted.transpose(), &(b * b.transpose() * 2.0))?;
    let z = symmetrize(&z);
    let zinv = z.cholesky().ok_or(LinalgError::Uncontrollable)?.inverse();
    let k = b.transpose() * zinv;
    if spectral_abscissa(&(a - b * &k)) >= 0.0 {
        return Err(LinalgError::Uncontrollable);
    }
    Ok(k)
}

/// Stabilizing solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` by Newton–Kleinman.
pub fn riccati_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LinalgError> {
    let n = square(a, "A")?;
    let k_dim = square(r, "R")?;
    if b.shape() != (n, k_dim) || q.shape() != (n, n) {
        return Err(LinalgError::Dimension("Riccati data".into()));
    }
    let rinv = r.clone().cholesky().ok_or(LinalgError::Singular("R"))?.inverse();
    let mut k = if spectral_abscissa(a) < 0.0 {
        DMatrix::zeros(k_dim, n)
    } else {
        stabilizing_gain(a, b)?
    };
    let scale = 1.0 + q.norm();
    let mut best = f64::INFINITY;
    let mut best_p = None;
    for _ in 0..100 {
        let acl = a - b * &k;
        let p = lyap_solve(&acl, &(q + k.transpose() * r * &k))?;
        let res = riccati_residual(a, b, q, r, &p);
        if res < best {
            best = res;
            best_p = Some(p.clone());
        } else if best <= 1e-12 * scale {
            break;
        }
        if res <= 1e-15 * scale {
            break;
        }
        k = &rinv * b.transpose() * &p;
    }
    match best_p {
        Some(p) if best <= 1e-12 * scale => Ok(p),
        _ => Err(LinalgError::NewtonDivergence(best)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let p = lyap_solve(&a, &DMatrix::identity(2, 2)).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.25, 0.25, 0.25, 0.25]);
        assert!((&p - want).norm() < 1e-13);
        assert!(lyap_solve(&(-a), &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn riccati_double_integrator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::from_element(1, 1, 1.0);
        let p = riccati_solve(&a, &b, &q, &r).unwrap();
        let s3 = 3f64.sqrt();
        let want = DMatrix::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3]);
        assert!((&p - want).norm() < 1e-12);
        assert!(riccati_residual(&a, &b, &q, &r, &p) <= 1e-12);
    }

    #[test]
    fn bass_gain_stabilizes_pendulum() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 19.6, -4.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 40.0]);
        let k = stabilizing_gain(&a, &b).unwrap();
        assert!(spectral_abscissa(&(a - b * k)) < 0.0);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(stabilizing_gain(&a, &b), Err(LinalgError::Uncontrollable));
    }
}
