//! Solution operators `S_α(t) = E_α(A t^α)`, `P_α(t) = E_{α,α}(A t^α)` and the
//! weakly singular convolutions built from them.

mod convolve;
pub mod kernel;

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg::RealEigen;
use crate::quadrature::{GaussRule, LeftSingularRule};
use crate::specfun::{matrix_series, mittag_leffler, MLParams, SPECTRAL_GUARD};
use crate::sysmodel::{validate, SystemSpec};

pub use convolve::{convolve_cells, interval_convolutions, singular_convolve};

/// Which operator-valued function of a time offset τ to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    /// `E_α(A τ^α)`
    S,
    /// `E_{α,α}(A τ^α)`
    P,
    /// `τ^α E_{α,α+1}(A τ^α) = ∫_0^τ σ^{α−1} P(σ) dσ`
    F1,
    /// `τ^{α+1} E_{α,α+2}(A τ^α) = ∫_0^τ F1(σ) dσ`
    F2,
}

/// Quadrature rules shared by the kernel routines.
pub(crate) struct Rules {
    /// Gauss–Legendre on [−1, 1] for smooth cells.
    pub cell: GaussRule,
    /// ∫_0^L f(x) dx and ∫_0^L x^{1/α} f(x) dx in x = τ^α, for the cell that
    /// touches the kernel singularity.
    pub end_const: LeftSingularRule,
    pub end_lin: LeftSingularRule,
    /// Panels in x = τ^α.
    pub panel: GaussRule,
    /// ∫_0^L x^{1−1/α} f(x) dx for the first x-panel (α > 1/2 only).
    pub first_panel: Option<LeftSingularRule>,
    /// Fine uniform cells for the Gramian blocks.
    pub gram_cell: GaussRule,
    pub gram_first: Option<LeftSingularRule>,
}

/// Spec-bound evaluator of `S_α`, `P_α` and kernel antiderivatives with a
/// memo table keyed by the exact bits of the time offset.
pub struct OperatorCache {
    spec: SystemSpec,
    eig: Option<RealEigen>,
    memo: Mutex<HashMap<(OpKind, u64), DMatrix<f64>>>,
    rules: OnceLock<Rules>,
    /// Per-interval kernel Gram blocks on the panel route.
    blocks: Mutex<HashMap<usize, DMatrix<f64>>>,
}

impl std::fmt::Debug for OperatorCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorCache").field("alpha", &self.spec.alpha).field("n", &self.spec.n()).finish()
    }
}

impl OperatorCache {
    /// Validates `spec` and prepares the eigendecomposition of A.
    pub fn new(spec: &SystemSpec) -> Result<Self> {
        let spec = validate(spec)?;
        let eig = RealEigen::new(&spec.a, SPECTRAL_GUARD);
        Ok(Self { spec, eig, memo: Mutex::new(HashMap::new()), rules: OnceLock::new(), blocks: Mutex::new(HashMap::new()) })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    /// Whether A went through the eigendecomposition path (otherwise the power series).
    pub fn is_diagonalized(&self) -> bool {
        self.eig.is_some()
    }

    pub(crate) fn rules(&self) -> &Rules {
        self.rules.get_or_init(|| {
            let a = self.spec.alpha;
            Rules {
                cell: GaussRule::legendre(5),
                end_const: LeftSingularRule::new(8, 0.0),
                end_lin: LeftSingularRule::new(8, 1.0 / a),
                panel: GaussRule::legendre(16),
                first_panel: (a > 0.5).then(|| LeftSingularRule::new(16, 1.0 - 1.0 / a)),
                gram_cell: GaussRule::legendre(8),
                gram_first: (a > 0.5).then(|| LeftSingularRule::new(8, 1.0 - 1.0 / a)),
            }
        })
    }

    /// `E_{α,β}(A x)`.
    pub fn ml_power(&self, beta: f64, x: f64) -> Result<DMatrix<f64>> {
        let p = MLParams::new(self.spec.alpha, beta);
        match &self.eig {
            Some(e) => e.try_apply(|l| mittag_leffler(&p, l * x)),
            None => matrix_series(&p, &self.spec.a, x),
        }
    }

    /// Evaluate without touching the memo table.
    pub fn compute(&self, kind: OpKind, tau: f64) -> Result<DMatrix<f64>> {
        let a = self.spec.alpha;
        let x = tau.powf(a);
        Ok(match kind {
            OpKind::S => self.ml_power(1.0, x)?,
            OpKind::P => self.ml_power(a, x)?,
            OpKind::F1 => self.ml_power(a + 1.0, x)? * x,
            OpKind::F2 => self.ml_power(a + 2.0, x)? * (x * tau),
        })
    }

    /// Memoized evaluation.
    pub fn get(&self, kind: OpKind, tau: f64) -> Result<DMatrix<f64>> {
        let key = (kind, tau.to_bits());
        if let Some(m) = self.memo.lock().unwrap().get(&key) {
            return Ok(m.clone());
        }
        let m = self.compute(kind, tau)?;
        self.memo.lock().unwrap().insert(key, m.clone());
        Ok(m)
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().unwrap().len()
    }
}

/// `S_α(t) = E_α(A t^α)`.
pub fn s_alpha(cache: &OperatorCache, t: f64) -> Result<DMatrix<f64>> {
    check_time(t)?;
    cache.get(OpKind::S, t)
}

/// `P_α(t) = E_{α,α}(A t^α)`.
pub fn p_alpha(cache: &OperatorCache, t: f64) -> Result<DMatrix<f64>> {
    check_time(t)?;
    cache.get(OpKind::P, t)
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(crate::Error::Domain(format!("time offset {t} must be finite and non-negative")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::rgamma;
    use nalgebra::DVector;

    fn diag_spec(alpha: f64) -> SystemSpec {
        SystemSpec::new(
            alpha,
            1.0,
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -4.0])),
            DMatrix::identity(2, 2),
        )
    }

    #[test]
    fn zero_offset_values() {
        let c = OperatorCache::new(&diag_spec(0.6)).unwrap();
        assert!((s_alpha(&c, 0.0).unwrap() - DMatrix::identity(2, 2)).amax() < 1e-15);
        let p0 = p_alpha(&c, 0.0).unwrap();
        assert!((p0 - DMatrix::identity(2, 2) * rgamma(0.6)).amax() < 1e-15);
    }

    #[test]
    fn diagonal_values_match_scalar() {
        let c = OperatorCache::new(&diag_spec(2.0 / 3.0)).unwrap();
        let s = s_alpha(&c, 1.0).unwrap();
        assert!((s[(0, 0)] - 0.404_096_547_240_452_54).abs() < 1e-14);
        assert!((s[(1, 1)] - 0.106_641_130_695_203_43).abs() < 1e-14);
    }

    #[test]
    fn order_one_is_exponential() {
        let c = OperatorCache::new(&diag_spec(1.0)).unwrap();
        let p = p_alpha(&c, 0.3).unwrap();
        assert!((p[(1, 1)] - (-1.2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn memo_returns_fresh_values() {
        let c = OperatorCache::new(&diag_spec(0.75)).unwrap();
        let first = c.get(OpKind::F2, 0.37).unwrap();
        assert_eq!(c.memo_len(), 1);
        let again = c.get(OpKind::F2, 0.37).unwrap();
        assert_eq!(first, again);
        assert!((c.compute(OpKind::F2, 0.37).unwrap() - again).amax() <= 1e-13);
    }

    #[test]
    fn negative_time_rejected() {
        let c = OperatorCache::new(&diag_spec(0.75)).unwrap();
        assert!(s_alpha(&c, -1.0).is_err());
    }
}
