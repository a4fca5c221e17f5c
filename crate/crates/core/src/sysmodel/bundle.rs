use std::sync::Arc;

use nalgebra::DVector;

use super::{SystemSpec, TimeGrid};
use crate::error::{Error, Result};
use crate::solops::kernel::{kernel_value, lin_kernel_inner, panel_gram};
use crate::solops::OperatorCache;

/// Control of the form `u(s) = mask(s) ⊙ B* (t_{k+1}−s)^{α−1} P_α*(t_{k+1}−s) ξ_{k+1}`
/// on each interval `(t_k, t_{k+1}]`, kept symbolically so the kernel
/// singularity at interval ends is never sampled.
#[derive(Debug, Clone)]
pub struct KernelControl {
    pub cache: Arc<OperatorCache>,
    /// `coeffs[k]` multiplies the kernel on interval k.
    pub coeffs: Vec<DVector<f64>>,
}

impl KernelControl {
    /// Value at `s`, using the half-open convention `(t_k, t_{k+1}]` except that
    /// the right end itself (where the kernel blows up for α < 1) is assigned
    /// to the following interval; at `s = b` the left limit is returned only
    /// for α = 1.
    pub fn value_at(&self, s: f64) -> Result<DVector<f64>> {
        let spec = self.cache.spec();
        let bp = spec.breakpoints();
        let k = (0..self.coeffs.len()).find(|&k| s < bp[k + 1]).unwrap_or(self.coeffs.len() - 1);
        if s >= bp[k + 1] && self.cache.alpha() < 1.0 {
            return Err(Error::Contract(format!("kernel control is unbounded at {s}")));
        }
        if s >= bp[k + 1] {
            let p = self.cache.get(crate::solops::OpKind::P, 0.0)?;
            return Ok((spec.b.transpose() * p.tr_mul(&self.coeffs[k])).component_mul(&spec.mask_at(s)));
        }
        kernel_value(&self.cache, k, &self.coeffs[k], s)
    }

    fn same_model(&self, other: &KernelControl) -> Result<()> {
        if Arc::ptr_eq(&self.cache, &other.cache) || self.cache.spec() == other.cache.spec() {
            Ok(())
        } else {
            Err(Error::Contract("kernel controls belong to different systems".into()))
        }
    }
}

/// Distributed control (piecewise linear on a grid, plus an optional
/// kernel-form part) together with one impulse control per impulse instant
/// and an optional control entering at the horizon.
#[derive(Debug, Clone)]
pub struct ControlBundle {
    pub grid: TimeGrid,
    /// One m-vector per grid node.
    pub u: Vec<DVector<f64>>,
    pub kernel: Option<KernelControl>,
    /// One m-vector per impulse.
    pub v: Vec<DVector<f64>>,
    pub v_terminal: Option<DVector<f64>>,
}

impl ControlBundle {
    pub fn zeros(spec: &SystemSpec, grid: TimeGrid) -> Self {
        let m = spec.m();
        Self {
            u: vec![DVector::zeros(m); grid.len()],
            grid,
            kernel: None,
            v: vec![DVector::zeros(m); spec.impulses.len()],
            v_terminal: None,
        }
    }

    /// Samples `u(t)` at every node; impulse controls start at zero.
    pub fn from_fn(spec: &SystemSpec, grid: TimeGrid, mut u: impl FnMut(f64) -> DVector<f64>) -> Self {
        let mut b = Self::zeros(spec, grid);
        for (slot, &t) in b.u.iter_mut().zip(b.grid.nodes()) {
            *slot = u(t);
        }
        b
    }

    /// Shape checks against `spec`.
    pub fn check(&self, spec: &SystemSpec) -> Result<()> {
        let m = spec.m();
        if self.u.len() != self.grid.len() {
            return Err(Error::Contract(format!("{} samples for {} grid nodes", self.u.len(), self.grid.len())));
        }
        if self.grid.nodes().last() != Some(&spec.horizon) || self.grid.interval_count() != spec.interval_count() {
            return Err(Error::Contract("control grid does not match the system's impulse schedule".into()));
        }
        for (i, &t) in spec.breakpoints().iter().enumerate() {
            if self.grid.nodes()[self.grid.break_index(i)] != t {
                return Err(Error::Contract(format!("control grid misses breakpoint {t}")));
            }
        }
        if self.u.iter().any(|x| x.len() != m) {
            return Err(Error::Contract(format!("distributed control samples must have length {m}")));
        }
        if self.v.len() != spec.impulses.len() || self.v.iter().any(|x| x.len() != m) {
            return Err(Error::Contract(format!(
                "expected {} impulse controls of length {m}",
                spec.impulses.len()
            )));
        }
        if let Some(vt) = &self.v_terminal {
            if vt.len() != m {
                return Err(Error::Contract(format!("terminal control must have length {m}")));
            }
        }
        if let Some(k) = &self.kernel {
            if k.cache.spec() != &super::validate(spec)? {
                return Err(Error::Contract("kernel control belongs to a different system".into()));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            u: self.u.iter().map(|x| x * c).collect(),
            kernel: self.kernel.as_ref().map(|k| KernelControl {
                cache: k.cache.clone(),
                coeffs: k.coeffs.iter().map(|x| x * c).collect(),
            }),
            v: self.v.iter().map(|x| x * c).collect(),
            v_terminal: self.v_terminal.as_ref().map(|x| x * c),
        }
    }

    pub fn added(&self, other: &ControlBundle) -> Result<Self> {
        same_layout(self, other)?;
        let kernel = match (&self.kernel, &other.kernel) {
            (Some(a), Some(b)) => {
                a.same_model(b)?;
                Some(KernelControl {
                    cache: a.cache.clone(),
                    coeffs: a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y).collect(),
                })
            }
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        let v_terminal = match (&self.v_terminal, &other.v_terminal) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        Ok(Self {
            grid: self.grid.clone(),
            u: self.u.iter().zip(&other.u).map(|(x, y)| x + y).collect(),
            kernel,
            v: self.v.iter().zip(&other.v).map(|(x, y)| x + y).collect(),
            v_terminal,
        })
    }

    /// `‖·‖₁` induced by [`inner_product_omega`].
    pub fn norm(&self) -> Result<f64> {
        Ok(inner_product_omega(self, self)?.max(0.0).sqrt())
    }

    /// `‖u‖_{L²}` of the piecewise-linear part only.
    pub fn lin_l2_norm(&self) -> f64 {
        lin_lin(&self.grid, &self.u, &self.u).max(0.0).sqrt()
    }
}

fn same_layout(a: &ControlBundle, b: &ControlBundle) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Contract("control bundles live on different grids".into()));
    }
    if a.v.len() != b.v.len() {
        return Err(Error::Contract(format!("impulse counts differ: {} vs {}", a.v.len(), b.v.len())));
    }
    Ok(())
}

/// Exact `∫ ⟨u, w⟩` for two piecewise-linear functions on the same grid.
fn lin_lin(grid: &TimeGrid, u: &[DVector<f64>], w: &[DVector<f64>]) -> f64 {
    let t = grid.nodes();
    let mut acc = 0.0;
    for j in 0..t.len() - 1 {
        let h = t[j + 1] - t[j];
        let (a0, a1, b0, b1) = (&u[j], &u[j + 1], &w[j], &w[j + 1]);
        acc += h / 6.0 * (2.0 * a0.dot(b0) + a0.dot(b1) + a1.dot(b0) + 2.0 * a1.dot(b1));
    }
    acc
}

fn lin_kernel(grid: &TimeGrid, u: &[DVector<f64>], k: &KernelControl) -> Result<f64> {
    if u.iter().all(|x| x.iter().all(|&v| v == 0.0)) {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (i, xi) in k.coeffs.iter().enumerate() {
        acc += lin_kernel_inner(&k.cache, grid, u, i, xi)?;
    }
    Ok(acc)
}

/// `⟨a, b⟩₁ = ∫_0^b ⟨u_a, u_b⟩ dt + Σ_k ⟨v_{a,k}, v_{b,k}⟩ (+ terminal controls)`.
pub fn inner_product_omega(a: &ControlBundle, b: &ControlBundle) -> Result<f64> {
    same_layout(a, b)?;
    if a.u.len() != a.grid.len() || b.u.len() != b.grid.len() {
        return Err(Error::Contract("sample count does not match the grid".into()));
    }
    let mut acc = lin_lin(&a.grid, &a.u, &b.u);
    if let Some(kb) = &b.kernel {
        acc += lin_kernel(&a.grid, &a.u, kb)?;
    }
    if let Some(ka) = &a.kernel {
        acc += lin_kernel(&b.grid, &b.u, ka)?;
    }
    if let (Some(ka), Some(kb)) = (&a.kernel, &b.kernel) {
        ka.same_model(kb)?;
        for (i, (xa, xb)) in ka.coeffs.iter().zip(&kb.coeffs).enumerate() {
            acc += xa.dot(&(panel_gram(&ka.cache, i)? * xb));
        }
    }
    for (x, y) in a.v.iter().zip(&b.v) {
        if x.len() != y.len() {
            return Err(Error::Contract("impulse control lengths differ".into()));
        }
        acc += x.dot(y);
    }
    if let (Some(x), Some(y)) = (&a.v_terminal, &b.v_terminal) {
        if x.len() != y.len() {
            return Err(Error::Contract("terminal control lengths differ".into()));
        }
        acc += x.dot(y);
    }
    Ok(acc)
}
