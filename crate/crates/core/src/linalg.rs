//! Symmetric-matrix helpers: PSD repair and inverse square roots.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalue floor used by [`repair_psd`].
pub const PSD_EPS: f64 = 1e-8;

fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::invalid(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::invalid(format!(
                    "matrix not symmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let e = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numeric("symmetric eigendecomposition did not converge"))?;
    if e.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("eigendecomposition produced non-finite values"));
    }
    Ok(e)
}

/// Nearest-PSD style repair of a symmetric matrix.
///
/// Eigenvalues below [`PSD_EPS`] are raised to it, the matrix is rebuilt and
/// then rescaled `D R D` so the diagonal matches the input again. Inputs that
/// are already PSD with minimum eigenvalue at least `PSD_EPS` are returned
/// unchanged.
pub fn repair_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m, 1e-10)?;
    let sym = symmetrize(m);
    let e = eigen(&sym)?;
    if e.eigenvalues.min() >= PSD_EPS {
        return Ok(m.clone());
    }
    let clipped = e.eigenvalues.map(|v| v.max(PSD_EPS));
    let rebuilt = &e.eigenvectors * DMatrix::from_diagonal(&clipped) * e.eigenvectors.transpose();
    let n = m.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let target = sym[(i, i)];
            let got = rebuilt[(i, i)];
            if target > 0.0 && got > 0.0 {
                (target / got).sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut out = DMatrix::from_fn(n, n, |i, j| rebuilt[(i, j)] * scale[i] * scale[j]);
    // Exact symmetry and diagonal.
    out = symmetrize(&out);
    for i in 0..n {
        if scale[i] != 1.0 {
            out[(i, i)] = sym[(i, i)];
        }
    }
    Ok(out)
}

/// Symmetric inverse square root `M^{-1/2}` of a positive-definite matrix.
///
/// Fails when the smallest eigenvalue is not comfortably positive relative to
/// the largest.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m, 1e-10)?;
    let e = eigen(&symmetrize(m))?;
    let max = e.eigenvalues.max();
    let min = e.eigenvalues.min();
    if !(max > 0.0) || min <= max * 1e-12 {
        return Err(Error::numeric(format!(
            "matrix is singular for whitening (eigenvalues in [{min:e}, {max:e}])"
        )));
    }
    let d = e.eigenvalues.map(|v| 1.0 / v.sqrt());
    Ok(&e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(m, 1e-8)?;
    Ok(eigen(&symmetrize(m))?.eigenvalues.min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn identity_and_psd_inputs_are_untouched() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(repair_psd(&id).unwrap(), id);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let r = repair_psd(&m).unwrap();
        assert!((r - &m).abs().max() <= 1e-12);
    }

    fn with_eigenvalues(vals: &[f64]) -> DMatrix<f64> {
        // A fixed orthonormal basis from the QR of a well-conditioned matrix.
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.5, 0.3, 1.7, -0.4, 0.8, 0.2, 1.1]);
        let q = a.qr().q();
        &q * DMatrix::from_diagonal(&DVector::from_row_slice(vals)) * q.transpose()
    }

    #[test]
    fn indefinite_matrix_is_repaired_minimally() {
        let m = with_eigenvalues(&[1.5, 0.6, -0.1]);
        let r = repair_psd(&m).unwrap();
        assert!(min_eigenvalue(&r).unwrap() >= 0.0);
        for i in 0..3 {
            assert!((r[(i, i)] - m[(i, i)]).abs() < 1e-12);
        }
        assert_eq!(r, r.transpose());
        // Closer to the input than clipping at larger floors.
        let dist = (&r - &m).norm();
        let e = SymmetricEigen::new(m.clone());
        for floor in [1e-4, 1e-2, 0.1] {
            let c = e.eigenvalues.map(|v| v.max(floor));
            let alt = &e.eigenvectors * DMatrix::from_diagonal(&c) * e.eigenvectors.transpose();
            let s: Vec<f64> = (0..3).map(|i| (m[(i, i)] / alt[(i, i)]).sqrt()).collect();
            let alt = DMatrix::from_fn(3, 3, |i, j| alt[(i, j)] * s[i] * s[j]);
            assert!(dist <= (&alt - &m).norm() + 1e-12, "floor {floor}");
        }
    }

    #[test]
    fn repair_is_idempotent() {
        let m = with_eigenvalues(&[2.0, 0.3, -0.4]);
        let once = repair_psd(&m).unwrap();
        let twice = repair_psd(&once).unwrap();
        assert!((&twice - &once).abs().max() < 1e-7);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(repair_psd(&m).is_err());
    }

    #[test]
    fn inverse_square_root() {
        let m = with_eigenvalues(&[4.0, 1.0, 0.25]);
        let w = inv_sqrt_spd(&m).unwrap();
        let id = &w * &m * &w;
        assert!((id - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
        assert!(inv_sqrt_spd(&with_eigenvalues(&[1.0, 1.0, 0.0])).is_err());
    }
}
