use nalgebra::DMatrix;

use super::gamma::rgamma;
use super::mittag_leffler::{mittag_leffler, MLParams};
use crate::error::{Error, Result};
use crate::linalg::RealEigen;

/// Largest eigenvector condition number accepted before falling back to the power series.
pub const SPECTRAL_GUARD: f64 = 1e8;
/// The power-series fallback is used only for ‖M·scale‖ up to this value.
pub const SERIES_NORM_LIMIT: f64 = 4.0;

/// `E_{α,β}(M·scale)` for a square matrix.
///
/// Diagonalizable matrices with real spectrum and a well-conditioned
/// eigenbasis go through the scalar function on the eigenvalues. Anything
/// else falls back to the truncated power series when ‖M·scale‖ is small.
pub fn mittag_leffler_matrix(p: &MLParams, m: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Contract(format!("matrix must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    if !(scale >= 0.0) {
        return Err(Error::Domain(format!("scale {scale} must be non-negative")));
    }
    if let Some(eig) = RealEigen::new(m, SPECTRAL_GUARD) {
        return mittag_leffler_eigen(p, &eig, scale);
    }
    matrix_series(p, m, scale)
}

/// `E_{α,β}(M·scale)` from a precomputed eigendecomposition of `M`.
pub fn mittag_leffler_eigen(p: &MLParams, eig: &RealEigen, scale: f64) -> Result<DMatrix<f64>> {
    eig.try_apply(|l| mittag_leffler(p, l * scale))
}

/// Truncated power series Σ (M·scale)^k / Γ(αk + β).
pub fn matrix_series(p: &MLParams, m: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let ms = m * scale;
    let norm = ms.norm();
    if norm > SERIES_NORM_LIMIT {
        return Err(Error::numerical(format!(
            "matrix is not safely diagonalizable and ‖M·scale‖ = {norm:.3} is too large for the power series"
        )));
    }
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut sum = power.clone() * rgamma(p.beta);
    for k in 1..400 {
        power = &power * &ms;
        let term = &power * rgamma(p.alpha * k as f64 + p.beta);
        sum += &term;
        let tn = term.norm();
        if tn <= 1e-17 * sum.norm() && p.alpha * k as f64 + p.beta > 2.0 {
            return Ok(sum);
        }
        if tn == 0.0 && power.norm() == 0.0 {
            return Ok(sum);
        }
    }
    Err(Error::numerical("matrix Mittag-Leffler series did not converge"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_gives_scaled_identity() {
        let z = DMatrix::<f64>::zeros(3, 3);
        let e = mittag_leffler_matrix(&MLParams::new(0.6, 0.6), &z, 1.0).unwrap();
        let want = DMatrix::<f64>::identity(3, 3) * rgamma(0.6);
        assert!((e - want).amax() < 1e-15);
    }

    #[test]
    fn diagonal_matches_scalar() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -4.0]));
        let p = MLParams::new(2.0 / 3.0, 1.0);
        let e = mittag_leffler_matrix(&p, &d, 1.0).unwrap();
        assert!((e[(0, 0)] - 0.404_096_547_240_452_54).abs() < 1e-14);
        assert!((e[(1, 1)] - 0.106_641_130_695_203_43).abs() < 1e-14);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn jordan_block_uses_series() {
        // E_{1,1} of [[0,1],[0,0]] t = [[1,t],[0,1]]
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = mittag_leffler_matrix(&MLParams::new(1.0, 1.0), &j, 0.7).unwrap();
        assert!((e - DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.0, 1.0])).amax() < 1e-15);
        let big = DMatrix::from_row_slice(2, 2, &[0.0, 10.0, 0.0, 0.0]);
        assert!(mittag_leffler_matrix(&MLParams::new(1.0, 1.0), &big, 1.0).is_err());
    }
}
