use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::solops::kernel::{kernel_value, require_square_integrable};
use crate::solops::{s_alpha, OperatorCache};
use crate::sysmodel::{inner_product_omega, ControlBundle, KernelControl, SystemSpec, TimeGrid};

/// Mild solution of the adjoint system with terminal datum `φ`:
/// on `(t_k, t_{k+1}]`, `p(t) = (t_{k+1}−t)^{α−1} P_α*(t_{k+1}−t) ξ_{k+1}`.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub cache: Arc<OperatorCache>,
    pub phi: DVector<f64>,
    /// `xi[k]` is the coefficient on interval k (so `xi[n] = φ`).
    pub xi: Vec<DVector<f64>>,
    /// `eta[k] = S_α*(t_{k+1} − t_k) ξ_{k+1}`; `eta[0]` is `I^{1−α} p(0⁺)` and
    /// `eta[k]` (k ≥ 1) is the coefficient paired with the k-th impulse control.
    pub eta: Vec<DVector<f64>>,
}

impl AdjointTrajectory {
    /// `p(t)` for `t` inside an interval. The right end of each interval is a
    /// kernel singularity for α < 1 and is assigned to the next interval; at
    /// `t = b` a contract error is returned unless α = 1.
    pub fn costate_at(&self, t: f64) -> Result<DVector<f64>> {
        let spec = self.cache.spec();
        let bp = spec.breakpoints();
        let k = (0..self.xi.len()).find(|&k| t < bp[k + 1]).unwrap_or(self.xi.len() - 1);
        if t >= bp[k + 1] {
            if self.cache.alpha() < 1.0 {
                return Err(Error::Contract(format!("the costate is unbounded at {t}")));
            }
            return Ok(self.xi[k].clone());
        }
        let tau = bp[k + 1] - t;
        let p = self.cache.get(crate::solops::OpKind::P, tau)?;
        Ok(p.tr_mul(&self.xi[k]) * tau.powf(self.cache.alpha() - 1.0))
    }

    /// Costates on grid nodes, `None` where the kernel is singular.
    pub fn sample(&self, grid: &TimeGrid) -> Vec<Option<DVector<f64>>> {
        grid.nodes().iter().map(|&t| self.costate_at(t).ok()).collect()
    }

    /// `I^{1−α} p(0⁺)`, in closed form `S_α*(t_1) ξ_1`.
    pub fn rl_integral_at_zero(&self) -> &DVector<f64> {
        &self.eta[0]
    }

    /// `M*φ` as a control bundle on `grid`: distributed part `mask ⊙ B* p(·)`
    /// in kernel form, impulse parts `E_k* η_k`, terminal part `E_b* φ`.
    pub fn control_bundle(&self, grid: TimeGrid) -> Result<ControlBundle> {
        let spec = self.cache.spec();
        let mut b = ControlBundle::zeros(spec, grid);
        b.kernel = Some(KernelControl { cache: self.cache.clone(), coeffs: self.xi.clone() });
        for (k, imp) in spec.impulses.iter().enumerate() {
            b.v[k] = imp.input.tr_mul(&self.eta[k + 1]);
        }
        b.v_terminal = spec.terminal_input.as_ref().map(|e| e.tr_mul(&self.phi));
        b.check(spec)?;
        Ok(b)
    }

    /// `B* p(s)` restricted by the mask, at `s` inside an interval.
    pub fn control_value(&self, s: f64) -> Result<DVector<f64>> {
        let spec = self.cache.spec();
        let bp = spec.breakpoints();
        let k = (0..self.xi.len()).find(|&k| s < bp[k + 1]).unwrap_or(self.xi.len() - 1);
        kernel_value(&self.cache, k, &self.xi[k], s)
    }
}

pub fn adjoint_solve(spec: &SystemSpec, phi: &DVector<f64>) -> Result<AdjointTrajectory> {
    adjoint_solve_with(Arc::new(OperatorCache::new(spec)?), phi)
}

/// ξ right to left: `ξ_{n+1} = φ`, `η_k = S_α*(Δ_k) ξ_{k+1}`, `ξ_k = (I + D_k*) η_k`.
pub fn adjoint_solve_with(cache: Arc<OperatorCache>, phi: &DVector<f64>) -> Result<AdjointTrajectory> {
    require_square_integrable(&cache)?;
    let spec = cache.spec();
    if phi.len() != spec.n() {
        return Err(Error::Contract(format!("terminal datum has length {}, expected {}", phi.len(), spec.n())));
    }
    let bp = spec.breakpoints();
    let intervals = spec.interval_count();
    let mut xi = vec![DVector::zeros(spec.n()); intervals];
    let mut eta = vec![DVector::zeros(spec.n()); intervals];
    xi[intervals - 1] = phi.clone();
    for k in (0..intervals).rev() {
        eta[k] = s_alpha(&cache, bp[k + 1] - bp[k])?.tr_mul(&xi[k]);
        if k > 0 {
            let d = &spec.impulses[k - 1].jump;
            xi[k - 1] = &eta[k] + d.tr_mul(&eta[k]);
        }
    }
    Ok(AdjointTrajectory { cache, phi: phi.clone(), xi, eta })
}

/// Both sides of the Green-type identity
/// `⟨x(b⁻), φ⟩ − ⟨x0, I^{1−α}p(0⁺)⟩ = Σ_k ∫⟨u, B*p⟩ + Σ_k ⟨v_k, E_k* η_k⟩`.
#[derive(Debug, Clone, Copy)]
pub struct GreenTerms {
    pub lhs: f64,
    pub rhs: f64,
    /// Magnitude of the largest individual term, for relative comparisons.
    pub scale: f64,
}

impl GreenTerms {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.residual()
        } else {
            self.residual() / self.scale
        }
    }
}

pub fn green_terms(spec: &SystemSpec, x0: &DVector<f64>, bundle: &ControlBundle, phi: &DVector<f64>) -> Result<GreenTerms> {
    let cache = Arc::new(OperatorCache::new(spec)?);
    let adj = adjoint_solve_with(cache.clone(), phi)?;
    // x(b⁻): the terminal control is not part of the identity
    let mut forward = bundle.clone();
    forward.v_terminal = None;
    let xb = super::final_state(&cache, x0, &forward)?;
    let lhs_a = xb.dot(phi);
    let lhs_b = x0.dot(adj.rl_integral_at_zero());
    let mut dual = adj.control_bundle(bundle.grid.clone())?;
    dual.v_terminal = None;
    let rhs = inner_product_omega(&forward, &dual)?;
    let scale = lhs_a.abs().max(lhs_b.abs()).max(rhs.abs());
    Ok(GreenTerms { lhs: lhs_a - lhs_b, rhs, scale })
}

/// `|LHS − RHS|` of the Green-type identity.
pub fn green_residual(spec: &SystemSpec, x0: &DVector<f64>, bundle: &ControlBundle, phi: &DVector<f64>) -> Result<f64> {
    Ok(green_terms(spec, x0, bundle, phi)?.residual())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn no_impulses_single_branch() {
        let s = SystemSpec::new(0.75, 1.0, DMatrix::from_element(1, 1, -2.0), DMatrix::from_element(1, 1, 1.0));
        let adj = adjoint_solve(&s, &DVector::from_element(1, 1.5)).unwrap();
        let c = OperatorCache::new(&s).unwrap();
        let t = 0.3;
        let p = adj.costate_at(t).unwrap()[0];
        let want = 0.7f64.powf(-0.25) * crate::solops::p_alpha(&c, 0.7).unwrap()[(0, 0)] * 1.5;
        assert!((p - want).abs() < 1e-14);
        assert!(adj.costate_at(1.0).is_err());
    }

    #[test]
    fn order_one_is_backward_exponential() {
        let s = SystemSpec::new(1.0, 1.0, DMatrix::from_element(1, 1, -0.5), DMatrix::from_element(1, 1, 1.0));
        let adj = adjoint_solve(&s, &DVector::from_element(1, 1.0)).unwrap();
        for t in [0.0, 0.25, 0.9, 1.0] {
            assert!((adj.costate_at(t).unwrap()[0] - (-0.5 * (1.0 - t)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn one_impulse_two_branches() {
        let d = 0.4;
        let s = SystemSpec::new(0.8, 1.0, DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0))
            .with_impulse(0.6, DMatrix::from_element(1, 1, d), DMatrix::from_element(1, 1, 1.0));
        let adj = adjoint_solve(&s, &DVector::from_element(1, 1.0)).unwrap();
        let c = OperatorCache::new(&s).unwrap();
        let sa = |t: f64| s_alpha(&c, t).unwrap()[(0, 0)];
        let pa = |t: f64| crate::solops::p_alpha(&c, t).unwrap()[(0, 0)];
        let xi1 = (1.0 + d) * sa(0.4);
        let t = 0.2;
        assert!((adj.costate_at(t).unwrap()[0] - 0.4f64.powf(-0.2) * pa(0.4) * xi1).abs() < 1e-14);
        assert!((adj.rl_integral_at_zero()[0] - sa(0.6) * xi1).abs() < 1e-14);
    }

    #[test]
    fn low_order_unsupported() {
        let s = SystemSpec::new(0.4, 1.0, DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0));
        assert!(matches!(adjoint_solve(&s, &DVector::from_element(1, 1.0)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn green_identity_trivial_and_classical() {
        let s = SystemSpec::new(1.0, 1.0, DMatrix::from_element(1, 1, -0.7), DMatrix::from_element(1, 1, 1.0))
            .with_impulse(0.5, DMatrix::from_element(1, 1, 0.2), DMatrix::from_element(1, 1, 1.0));
        let g = TimeGrid::uniform(&s, 32).unwrap();
        let zero = ControlBundle::zeros(&s, g.clone());
        let phi = DVector::from_element(1, 1.0);
        assert_eq!(green_residual(&s, &DVector::zeros(1), &zero, &phi).unwrap(), 0.0);
        let mut b = ControlBundle::from_fn(&s, g, |t| DVector::from_element(1, 1.0 + t * t));
        b.v[0][0] = -0.3;
        let r = green_terms(&s, &DVector::from_element(1, 0.5), &b, &phi).unwrap();
        assert!(r.relative() < 1e-10, "{r:?}");
    }

    #[test]
    fn green_identity_fractional() {
        let s = SystemSpec::new(
            0.6,
            1.0,
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.2, -2.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
        )
        .with_impulse(0.4, DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.2, -0.3]), DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
        let phi = DVector::from_vec(vec![0.3, -1.0]);
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        let mut prev = f64::INFINITY;
        for cells in [16, 32, 64] {
            let g = TimeGrid::uniform(&s, cells).unwrap();
            let mut b = ControlBundle::from_fn(&s, g, |t| DVector::from_element(1, (4.0 * t).sin()));
            b.v[0][0] = 0.8;
            let r = green_terms(&s, &x0, &b, &phi).unwrap();
            assert!(r.relative() < 1e-5, "{r:?}");
            assert!(r.residual() <= prev.max(1e-12 * r.scale));
            prev = r.residual();
        }
    }
}
