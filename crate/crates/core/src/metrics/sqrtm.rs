//! Symmetric PSD matrix square root via eigendecomposition, f64 throughout.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Relative asymmetry allowed on the input.
const SYMMETRY_TOL: f64 = 1e-8;
/// Eigenvalues in [−λ_max·NEG_EIG_TOL, 0] are clamped to zero; anything more
/// negative is an error.
const NEG_EIG_TOL: f64 = 1e-10;
/// Residual bound: ‖S·S − A‖_F ≤ RESIDUAL_TOL · max(1, ‖A‖_F).
const RESIDUAL_TOL: f64 = 1e-8;

pub fn frobenius_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Principal square root of a symmetric PSD matrix.
///
/// Checks symmetry on entry, clamps tiny negative eigenvalues, rejects a
/// significantly negative spectrum, and verifies the squaring residual before
/// returning.
pub fn sqrtm_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { a: n, b: a.ncols() });
    }
    let scale = a.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if max_asym > SYMMETRY_TOL * scale {
        return Err(Error::AsymmetricInput(max_asym));
    }

    // exact symmetrization removes harmless roundoff skew before eigen
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let eig = SymmetricEigen::new(sym);
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let neg_tol = NEG_EIG_TOL * lambda_max.max(1e-300);

    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -neg_tol {
            return Err(Error::NegativeEigenvalue { value: *v, tol: -neg_tol });
        }
        *v = v.max(0.0).sqrt();
    }

    let q = &eig.eigenvectors;
    let mut s = DMatrix::zeros(n, n);
    for k in 0..n {
        let col = q.column(k);
        let r = roots[k];
        if r == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] += r * col[i] * col[j];
            }
        }
    }
    // exact symmetry by construction can still drift a few ulps; tidy it
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = m;
            s[(j, i)] = m;
        }
    }

    let residual = frobenius_norm(&(&s * &s - a));
    let bound = RESIDUAL_TOL * frobenius_norm(a).max(1.0);
    if residual > bound {
        return Err(Error::InvalidArgument(format!(
            "matrix square root residual {residual:.3e} exceeds bound {bound:.3e}"
        )));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng::{item_rng, normal};

    #[test]
    fn diagonal_case() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0]));
        let s = sqrtm_psd(&a).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((s[(1, 1)] - 3.0).abs() < 1e-12);
        assert!(s[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn identity_is_fixed_point() {
        let a = DMatrix::<f64>::identity(8, 8);
        let s = sqrtm_psd(&a).unwrap();
        assert!(frobenius_norm(&(s - a)) < 1e-12);
    }

    #[test]
    fn random_spd_squares_back() {
        // A = B·Bᵀ at d=64; squaring oracle ‖S·S − A‖_F ≤ 1e-8·max(1,‖A‖_F)
        let d = 64;
        let mut rng = item_rng(123, 0, 0);
        let b = DMatrix::from_fn(d, d, |_, _| normal(&mut rng));
        let a = &b * b.transpose();
        let s = sqrtm_psd(&a).unwrap();
        let residual = frobenius_norm(&(&s * &s - &a));
        assert!(residual <= 1e-8 * frobenius_norm(&a).max(1.0), "residual {residual}");
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let mut a = DMatrix::<f64>::identity(3, 3);
        a[(0, 1)] = 0.5;
        assert!(matches!(sqrtm_psd(&a).unwrap_err(), Error::AsymmetricInput(_)));
    }

    #[test]
    fn negative_spectrum_is_rejected() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -0.5]));
        assert!(matches!(sqrtm_psd(&a).unwrap_err(), Error::NegativeEigenvalue { .. }));
    }

    #[test]
    fn tiny_negative_eigenvalues_are_clamped() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1e-12]));
        let s = sqrtm_psd(&a).unwrap();
        assert_eq!(s[(1, 1)], 0.0);
    }
}
