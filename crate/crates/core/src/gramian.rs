//! The controllability operator `M`, its adjoint and the Gramian `Γ = M M*`
//! split into distributed and impulsive, last-interval and earlier blocks.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig_range, symmetrize};
use crate::propagator::adjoint_solve_with;
use crate::solops::kernel::{interval_gram, kernel_response_at, require_square_integrable, XRoute};
use crate::solops::{convolve_cells, s_alpha, OperatorCache};
use crate::sysmodel::{ControlBundle, SystemSpec, TimeGrid};

/// Default number of quadrature cells per integration range for the blocks.
pub const DEFAULT_RESOLUTION: usize = 1 << 11;

/// `Γ = Ω + Ψ + Ω̃ + Ψ̃`.
#[derive(Debug, Clone)]
pub struct GramianBundle {
    /// Distributed control on the last interval `(t_n, b]`.
    pub omega: DMatrix<f64>,
    /// Distributed control on the earlier intervals, carried to `b`.
    pub psi: DMatrix<f64>,
    /// Impulse control at `t_n` (and any control entering at `b`).
    pub omega_tilde: DMatrix<f64>,
    /// Impulse controls at `t_1 … t_{n−1}`.
    pub psi_tilde: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    /// Quadrature cells per range used for the distributed blocks.
    pub resolution: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockSummary {
    pub name: &'static str,
    pub min_eig: f64,
    pub max_eig: f64,
    pub trace: f64,
}

impl GramianBundle {
    pub fn blocks(&self) -> [(&'static str, &DMatrix<f64>); 5] {
        [
            ("omega", &self.omega),
            ("psi", &self.psi),
            ("omega_tilde", &self.omega_tilde),
            ("psi_tilde", &self.psi_tilde),
            ("gamma", &self.gamma),
        ]
    }

    pub fn summary(&self) -> Vec<BlockSummary> {
        self.blocks()
            .iter()
            .map(|(name, m)| {
                let (min_eig, max_eig) = sym_eig_range(m);
                BlockSummary { name, min_eig, max_eig, trace: m.trace() }
            })
            .collect()
    }

    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({ "resolution": self.resolution, "blocks": self.summary() });
        serde_json::to_string_pretty(&v).expect("summary serializes")
    }

    /// Upper bound `√λ_max(Γ)` on `‖M‖`, so that
    /// `‖M(u, v)‖ ≤ C (‖u‖_{L²} + Σ‖v_k‖)` with `C` this value.
    pub fn operator_norm_bound(&self) -> f64 {
        sym_eig_range(&self.gamma).1.max(0.0).sqrt()
    }
}

/// Dense matrix as CSV, one row per line.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// `T_k`: left value at the right end of interval `k` to the state at `b⁻`,
/// i.e. `S(Δ_n)(I+D_n) ⋯ S(Δ_{k+1})(I+D_{k+1})`; `T_n = I`.
fn transfers(cache: &OperatorCache) -> Result<Vec<DMatrix<f64>>> {
    let spec = cache.spec();
    let bp = spec.breakpoints();
    let last = spec.interval_count() - 1;
    let n = spec.n();
    let mut t = vec![DMatrix::identity(n, n); last + 1];
    for k in (0..last).rev() {
        let imp = &spec.impulses[k];
        let step = s_alpha(cache, bp[k + 2] - bp[k + 1])? * (DMatrix::identity(n, n) + &imp.jump);
        t[k] = &t[k + 1] * step;
    }
    Ok(t)
}

/// Zero-initial-state endpoint map
/// `M(u, v) = ∫_{t_n}^b K(b−s)Bu + Σ_{k<n} T_k ∫_{I_k} K(t_{k+1}−s)Bu + Σ_k T_k S(Δ_k) E_k v_k (+ E_b v_b)`.
pub fn apply_m(spec: &SystemSpec, bundle: &ControlBundle) -> Result<DVector<f64>> {
    let cache = OperatorCache::new(spec)?;
    apply_m_with(&cache, bundle)
}

pub fn apply_m_with(cache: &OperatorCache, bundle: &ControlBundle) -> Result<DVector<f64>> {
    let spec = cache.spec();
    bundle.check(spec)?;
    let bp = spec.breakpoints();
    let t = transfers(cache)?;
    let grid = &bundle.grid;
    let mut out = DVector::zeros(spec.n());
    for k in 0..spec.interval_count() {
        let r = grid.interval(k);
        let mut c = convolve_cells(cache, grid.nodes(), &bundle.u, *r.start(), *r.end(), bp[k + 1])?;
        if let Some(kc) = &bundle.kernel {
            c += kernel_response_at(&kc.cache, k, &kc.coeffs[k], bp[k + 1])?;
        }
        out += &t[k] * c;
    }
    for (i, imp) in spec.impulses.iter().enumerate() {
        // v_i enters at t_i (= right end of interval i−1), then crosses interval i
        let r = &t[i + 1] * s_alpha(cache, bp[i + 2] - bp[i + 1])?;
        out += r * (&imp.input * &bundle.v[i]);
    }
    if let (Some(e), Some(v)) = (&spec.terminal_input, &bundle.v_terminal) {
        out += e * v;
    }
    Ok(out)
}

/// `M*φ` on `grid`.
pub fn apply_m_star(spec: &SystemSpec, phi: &DVector<f64>, grid: TimeGrid) -> Result<ControlBundle> {
    let cache = Arc::new(OperatorCache::new(spec)?);
    apply_m_star_with(cache, phi, grid)
}

pub fn apply_m_star_with(cache: Arc<OperatorCache>, phi: &DVector<f64>, grid: TimeGrid) -> Result<ControlBundle> {
    adjoint_solve_with(cache, phi)?.control_bundle(grid)
}

pub fn assemble_gramian(spec: &SystemSpec, resolution: usize) -> Result<GramianBundle> {
    let cache = OperatorCache::new(spec)?;
    assemble_gramian_with(&cache, XRoute::Cells(resolution))
}

/// Block assembly with the distributed blocks integrated on `route`.
pub fn assemble_gramian_with(cache: &OperatorCache, route: XRoute) -> Result<GramianBundle> {
    require_square_integrable(cache)?;
    let resolution = match route {
        XRoute::Cells(c) => {
            if c == 0 {
                return Err(Error::validation("resolution", "must be at least 1"));
            }
            c
        }
        XRoute::Panels => 0,
    };
    let spec = cache.spec();
    let n = spec.n();
    let bp = spec.breakpoints();
    let last = spec.interval_count() - 1;
    let t = transfers(cache)?;

    let grams: Vec<Result<DMatrix<f64>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..=last).map(|k| scope.spawn(move || interval_gram(cache, k, route))).collect();
        handles.into_iter().map(|h| h.join().expect("quadrature worker panicked")).collect()
    });
    let grams: Vec<DMatrix<f64>> = grams.into_iter().collect::<Result<_>>()?;

    let omega = grams[last].clone();
    let mut psi = DMatrix::zeros(n, n);
    for k in 0..last {
        psi += &t[k] * &grams[k] * t[k].transpose();
    }
    let mut omega_tilde = DMatrix::zeros(n, n);
    let mut psi_tilde = DMatrix::zeros(n, n);
    for (i, imp) in spec.impulses.iter().enumerate() {
        let r = &t[i + 1] * s_alpha(cache, bp[i + 2] - bp[i + 1])? * &imp.input;
        let term = &r * r.transpose();
        if i + 1 == last {
            omega_tilde += term;
        } else {
            psi_tilde += term;
        }
    }
    if let Some(e) = &spec.terminal_input {
        omega_tilde += e * e.transpose();
    }
    let (omega, psi, omega_tilde, psi_tilde) =
        (symmetrize(&omega), symmetrize(&psi), symmetrize(&omega_tilde), symmetrize(&psi_tilde));
    let gamma = &omega + &psi + &omega_tilde + &psi_tilde;
    Ok(GramianBundle { omega, psi, omega_tilde, psi_tilde, gamma, resolution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::is_sym_psd;
    use crate::propagator::final_state;
    use crate::sysmodel::{heat_demo_spec, inner_product_omega};

    fn two_impulse_spec() -> SystemSpec {
        SystemSpec::new(
            0.75,
            1.0,
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.4, -0.3, -2.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        )
        .with_impulse(0.3, DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, -0.1]), DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))
        .with_impulse(0.7, DMatrix::identity(2, 2) * 0.5, DMatrix::from_row_slice(2, 1, &[1.0, 1.0]))
    }

    #[test]
    fn zero_inputs_give_zero_blocks() {
        let mut s = two_impulse_spec();
        s.b.fill(0.0);
        for i in &mut s.impulses {
            i.input.fill(0.0);
        }
        let g = assemble_gramian(&s, 64).unwrap();
        for (_, m) in g.blocks() {
            assert_eq!(m.amax(), 0.0);
        }
    }

    #[test]
    fn order_one_scalar_closed_form() {
        let a = 0.6;
        let s = SystemSpec::new(1.0, 1.0, DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, 1.0));
        let g = assemble_gramian(&s, 256).unwrap();
        let want = ((2.0 * a).exp() - 1.0) / (2.0 * a);
        assert!((g.omega[(0, 0)] - want).abs() < 1e-13);
        assert_eq!(g.psi[(0, 0)], 0.0);
        assert_eq!(g.omega_tilde[(0, 0)], 0.0);
        assert_eq!(g.psi_tilde[(0, 0)], 0.0);
    }

    #[test]
    fn m_matches_forward_propagation_and_last_impulse_term() {
        let s = two_impulse_spec();
        let cache = OperatorCache::new(&s).unwrap();
        let grid = TimeGrid::uniform(&s, 16).unwrap();
        let mut b = ControlBundle::from_fn(&s, grid.clone(), |t| DVector::from_element(1, (3.0 * t).cos()));
        b.v[0][0] = 0.4;
        b.v[1][0] = -1.1;
        let m = apply_m_with(&cache, &b).unwrap();
        let f = final_state(&cache, &DVector::zeros(2), &b).unwrap();
        assert!((m - f).amax() < 1e-13);

        let mut only = ControlBundle::zeros(&s, grid);
        only.v[1][0] = 2.0;
        let m = apply_m_with(&cache, &only).unwrap();
        let want = s_alpha(&cache, 0.3).unwrap() * (&s.impulses[1].input * 2.0);
        assert!((m - want).amax() < 1e-15);
    }

    #[test]
    fn blocks_are_psd_and_factorize() {
        let s = two_impulse_spec();
        let cache = Arc::new(OperatorCache::new(&s).unwrap());
        let g = assemble_gramian_with(&cache, XRoute::Cells(DEFAULT_RESOLUTION)).unwrap();
        for (name, m) in g.blocks() {
            assert!(is_sym_psd(m), "{name}");
        }
        let grid = TimeGrid::uniform(&s, 8).unwrap();
        let phi = DVector::from_vec(vec![0.7, -0.4]);
        let psi = DVector::from_vec(vec![-0.2, 1.3]);
        let a = apply_m_star_with(cache.clone(), &phi, grid.clone()).unwrap();
        let b = apply_m_star_with(cache, &psi, grid).unwrap();
        let lhs = psi.dot(&(&g.gamma * &phi));
        let rhs = inner_product_omega(&a, &b).unwrap();
        assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()), "{lhs} {rhs}");
    }

    #[test]
    fn no_impulses_only_omega() {
        let mut s = heat_demo_spec(2, false).unwrap();
        s.impulses.clear();
        s.terminal_input = None;
        let g = assemble_gramian(&s, 256).unwrap();
        assert!(g.omega.amax() > 0.0);
        assert_eq!(g.psi.amax() + g.omega_tilde.amax() + g.psi_tilde.amax(), 0.0);
        assert!(g.summary_json().contains("omega_tilde"));
        assert_eq!(matrix_csv(&g.gamma).lines().count(), 2);
    }

    #[test]
    fn single_impulse_has_empty_psi_tilde() {
        let mut s = heat_demo_spec(2, true).unwrap();
        s.terminal_input = None;
        let g = assemble_gramian(&s, 128).unwrap();
        assert_eq!(g.psi_tilde.amax(), 0.0);
        assert!(g.omega_tilde.amax() > 0.0);
    }
}
