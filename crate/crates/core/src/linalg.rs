//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};

/// Real eigendecomposition `A = V diag(λ) V⁻¹` of a diagonalizable matrix
/// with real spectrum.
#[derive(Debug, Clone)]
pub struct RealEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// 2-norm condition number of `vectors`.
    pub condition: f64,
}

impl RealEigen {
    /// Decompose `a`. Returns `None` when the spectrum is complex, the matrix
    /// looks defective, or the eigenvector matrix is worse conditioned than `guard`.
    pub fn new(a: &DMatrix<f64>, guard: f64) -> Option<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || a.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let scale = a.norm().max(1.0);
        if (a - a.transpose()).amax() <= 1e-14 * scale {
            let sym = SymmetricEigen::new(symmetrize(a));
            let inverse = sym.eigenvectors.transpose();
            return Some(Self { values: sym.eigenvalues, vectors: sym.eigenvectors, inverse, condition: 1.0 });
        }

        let mut eig: Vec<f64> = Schur::new(a.clone()).eigenvalues()?.iter().copied().collect();
        eig.sort_by(f64::total_cmp);

        // Group numerically repeated eigenvalues and take a null-space basis per group.
        let cluster_tol = 1e-8 * scale;
        let mut values = Vec::with_capacity(n);
        let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && eig[j] - eig[j - 1] <= cluster_tol {
                j += 1;
            }
            let mult = j - i;
            let mu = eig[i..j].iter().sum::<f64>() / mult as f64;
            let shifted = a - DMatrix::identity(n, n) * mu;
            let svd = SVD::new(shifted, false, true);
            let vt = svd.v_t?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&p, &q| svd.singular_values[p].total_cmp(&svd.singular_values[q]));
            for &idx in order.iter().take(mult) {
                if svd.singular_values[idx] > 1e-7 * scale {
                    return None;
                }
                values.push(if mult == 1 { eig[i] } else { mu });
                columns.push(vt.row(idx).transpose());
            }
            i = j;
        }
        let vectors = DMatrix::from_columns(&columns);
        let sv = vectors.singular_values();
        let condition = sv.max() / sv.min();
        if !condition.is_finite() || condition > guard {
            return None;
        }
        let inverse = vectors.clone().try_inverse()?;
        Some(Self { values: DVector::from_vec(values), vectors, inverse, condition })
    }

    /// `V diag(f(λ_i)) V⁻¹`.
    pub fn apply(&self, mut f: impl FnMut(f64) -> f64) -> DMatrix<f64> {
        let d: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut scaled = self.vectors.clone();
        for (j, dj) in d.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*dj);
        }
        scaled * &self.inverse
    }

    /// Like [`RealEigen::apply`] but with a fallible scalar function.
    pub fn try_apply<E>(&self, mut f: impl FnMut(f64) -> Result<f64, E>) -> Result<DMatrix<f64>, E> {
        let mut d = Vec::with_capacity(self.values.len());
        for &l in self.values.iter() {
            d.push(f(l)?);
        }
        let mut scaled = self.vectors.clone();
        for (j, dj) in d.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*dj);
        }
        Ok(scaled * &self.inverse)
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest and largest eigenvalue of the symmetric part of `m`.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let e = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    (e.min(), e.max())
}

/// Symmetric to `1e-10` (relative) and no eigenvalue below `-1e-9 · ‖m‖`.
pub fn is_sym_psd(m: &DMatrix<f64>) -> bool {
    let norm = m.norm();
    if norm == 0.0 {
        return true;
    }
    let asym = (m - m.transpose()).amax();
    let (lo, _) = sym_eig_range(m);
    asym <= 1e-10 * norm.max(1.0) && lo >= -1e-9 * norm
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}
