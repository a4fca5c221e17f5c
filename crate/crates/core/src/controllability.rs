//! Regularized steering and the controllability certificates.
//!
//! Every verdict here is a statement about the finite-dimensional model that
//! was supplied. For spectral truncations of a PDE it certifies the truncated
//! model only.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gramian::{apply_m_star_with, GramianBundle};
use crate::linalg::symmetrize;
use crate::propagator::final_state;
use crate::solops::{s_alpha, OperatorCache};
use crate::sysmodel::{ControlBundle, SystemSpec, TimeGrid};

/// Label attached to every verdict.
pub const CERTIFICATE_SCOPE: &str = "truncated-model certificate";

/// Relative threshold on eigenvalues of Γ (against trace/n) for strict positivity.
pub const KERNEL_TOL: f64 = 1e-10;

/// Default regularization ladder `10^{-1} … 10^{-8}`.
pub fn default_epsilons() -> Vec<f64> {
    (1..=8).map(|k| 10f64.powi(-k)).collect()
}

/// Steering result for one regularization weight.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub epsilon: f64,
    pub phi_eps: DVector<f64>,
    pub bundle: ControlBundle,
    /// `x_ε(b)` from forward propagation of the synthesized controls.
    pub achieved_final: DVector<f64>,
    /// `‖x_ε(b) − h + ε φ_ε‖`.
    pub terminal_residual: f64,
    pub target: DVector<f64>,
}

/// State reached at `b` with all controls off:
/// `S(b−t_n) (I+D_n) S(Δ_{n−1}) ⋯ (I+D_1) S(t_1) x0`.
pub fn free_final_state(cache: &OperatorCache, x0: &DVector<f64>) -> Result<DVector<f64>> {
    let spec = cache.spec();
    let bp = spec.breakpoints();
    let mut x = x0.clone();
    for k in 0..spec.interval_count() {
        x = s_alpha(cache, bp[k + 1] - bp[k])? * x;
        if let Some(imp) = spec.impulses.get(k) {
            x = &x + &imp.jump * &x;
        }
    }
    Ok(x)
}

/// Solve `(εI + Γ) φ = r` by Cholesky, falling back to a symmetric eigensolve
/// when rounding makes the matrix look indefinite.
pub fn regularized_solve(gamma: &DMatrix<f64>, epsilon: f64, r: &DVector<f64>) -> Result<DVector<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::validation("epsilon", format!("{epsilon} must be positive")));
    }
    let n = gamma.nrows();
    let m = symmetrize(gamma) + DMatrix::identity(n, n) * epsilon;
    if let Some(ch) = m.clone().cholesky() {
        return Ok(ch.solve(r));
    }
    let eig = m.symmetric_eigen();
    let floor = epsilon * 0.5;
    if eig.eigenvalues.iter().any(|&l| l < floor) {
        return Err(Error::numerical(format!(
            "εI + Γ is numerically indefinite (smallest eigenvalue {:.3e})",
            eig.eigenvalues.min()
        )));
    }
    let coeff = eig.eigenvectors.tr_mul(r).component_div(&eig.eigenvalues);
    Ok(&eig.eigenvectors * coeff)
}

/// Synthesize `φ_ε = (εI + Γ)^{-1}(h − free)` and the controls `M*φ_ε`.
/// The controls live on `cells_per_interval` uniform cells per interval.
pub fn synthesize(
    spec: &SystemSpec,
    gramian: &GramianBundle,
    x0: &DVector<f64>,
    h: &DVector<f64>,
    epsilon: f64,
) -> Result<SynthesisResult> {
    let cache = Arc::new(OperatorCache::new(spec)?);
    let grid = TimeGrid::uniform(cache.spec(), 64)?;
    synthesize_with(&cache, gramian, x0, h, epsilon, grid)
}

pub fn synthesize_with(
    cache: &Arc<OperatorCache>,
    gramian: &GramianBundle,
    x0: &DVector<f64>,
    h: &DVector<f64>,
    epsilon: f64,
    grid: TimeGrid,
) -> Result<SynthesisResult> {
    let n = cache.spec().n();
    for (name, v) in [("x0", x0), ("target", h)] {
        if v.len() != n {
            return Err(Error::validation(name, format!("expected {n} entries, got {}", v.len())));
        }
    }
    if gramian.gamma.nrows() != n {
        return Err(Error::Contract("Gramian does not match the system dimension".into()));
    }
    let free = free_final_state(cache, x0)?;
    let phi = regularized_solve(&gramian.gamma, epsilon, &(h - &free))?;
    let bundle = apply_m_star_with(cache.clone(), &phi, grid)?;
    let achieved = final_state(cache, x0, &bundle)?;
    let terminal_residual = (&achieved - h + &phi * epsilon).norm();
    Ok(SynthesisResult { epsilon, phi_eps: phi, bundle, achieved_final: achieved, terminal_residual, target: h.clone() })
}

/// `‖x_ε(b) − h + ε φ_ε‖ / max(ε‖φ_ε‖, ‖h‖)` (0 when both scales vanish).
pub fn verify_terminal_identity(r: &SynthesisResult) -> f64 {
    let scale = (r.epsilon * r.phi_eps.norm()).max(r.target.norm());
    if scale == 0.0 {
        r.terminal_residual
    } else {
        r.terminal_residual / scale
    }
}

/// `J_ε(φ) = ½‖M*φ‖₁² + ε/2 ‖φ‖² − ⟨φ, h − free⟩` with `‖M*φ‖₁² = ⟨Γφ, φ⟩`.
pub fn objective_value(
    spec: &SystemSpec,
    gramian: &GramianBundle,
    x0: &DVector<f64>,
    h: &DVector<f64>,
    phi: &DVector<f64>,
    epsilon: f64,
) -> Result<f64> {
    let cache = OperatorCache::new(spec)?;
    let free = free_final_state(&cache, x0)?;
    Ok(0.5 * phi.dot(&(&gramian.gamma * phi)) + 0.5 * epsilon * phi.norm_squared() - phi.dot(&(h - free)))
}

/// `Γφ + εφ − (h − free)`, the gradient of `J_ε`.
pub fn stationarity_residual(
    spec: &SystemSpec,
    gramian: &GramianBundle,
    x0: &DVector<f64>,
    h: &DVector<f64>,
    phi: &DVector<f64>,
    epsilon: f64,
) -> Result<DVector<f64>> {
    let cache = OperatorCache::new(spec)?;
    let free = free_final_state(&cache, x0)?;
    Ok(&gramian.gamma * phi + phi * epsilon - (h - free))
}

/// `‖ε(εI + Γ)^{-1} h‖` along a decreasing ε ladder.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub epsilons: Vec<f64>,
    pub norms: Vec<f64>,
    /// Final norm at most `1e−3 ‖h‖`.
    pub controllable_indicated: bool,
    /// `‖P_ker h‖`, the ε → 0 limit of the norms.
    pub kernel_projection: f64,
    pub target_norm: f64,
}

impl SweepReport {
    pub fn tail(&self) -> f64 {
        *self.norms.last().unwrap_or(&f64::NAN)
    }

    /// CSV with columns `epsilon, norm, residual`; residuals may be absent.
    pub fn to_csv(&self, residuals: Option<&[f64]>) -> String {
        let mut out = String::from("epsilon,norm,residual\n");
        for (i, (e, n)) in self.epsilons.iter().zip(&self.norms).enumerate() {
            let r = residuals.and_then(|r| r.get(i)).map_or(String::new(), |r| format!("{r:.16e}"));
            let _ = writeln!(out, "{e:.16e},{n:.16e},{r}");
        }
        out
    }
}

pub fn epsilon_sweep(gramian: &GramianBundle, h: &DVector<f64>, epsilons: &[f64]) -> Result<SweepReport> {
    if epsilons.is_empty() {
        return Err(Error::validation("epsilons", "at least one value is required"));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::validation("epsilons", "values must be positive"));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::validation("epsilons", "values must be strictly decreasing"));
    }
    if h.len() != gramian.gamma.nrows() {
        return Err(Error::validation("target", format!("expected {} entries", gramian.gamma.nrows())));
    }
    let norms = epsilons
        .iter()
        .map(|&e| regularized_solve(&gramian.gamma, e, h).map(|x| (x * e).norm()))
        .collect::<Result<Vec<f64>>>()?;
    let target_norm = h.norm();
    let kernel_projection = kernel_projection(&gramian.gamma, h);
    let controllable_indicated = *norms.last().unwrap() <= 1e-3 * target_norm;
    Ok(SweepReport { epsilons: epsilons.to_vec(), norms, controllable_indicated, kernel_projection, target_norm })
}

fn kernel_threshold(gamma: &DMatrix<f64>) -> f64 {
    let n = gamma.nrows().max(1) as f64;
    KERNEL_TOL * (gamma.trace() / n).max(0.0)
}

/// Norm of the projection of `h` onto the numerical null space of Γ.
pub fn kernel_projection(gamma: &DMatrix<f64>, h: &DVector<f64>) -> f64 {
    let eig = symmetrize(gamma).symmetric_eigen();
    let thr = kernel_threshold(gamma);
    let mut acc = 0.0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l <= thr {
            acc += eig.eigenvectors.column(i).dot(h).powi(2);
        }
    }
    acc.sqrt()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelTest {
    pub min_eig: f64,
    /// `√max(min_eig, 0)`, the smallest singular value of `M*`.
    pub min_singular_mstar: f64,
    pub strictly_positive: bool,
}

/// Smallest eigenvalue of Γ and the strict-positivity verdict
/// `min_eig > 1e−10 · trace(Γ)/n`.
pub fn kernel_test(gramian: &GramianBundle) -> KernelTest {
    let g = symmetrize(&gramian.gamma);
    let min_eig = g.symmetric_eigenvalues().min();
    let thr = kernel_threshold(&g);
    KernelTest { min_eig, min_singular_mstar: min_eig.max(0.0).sqrt(), strictly_positive: min_eig > thr && thr > 0.0 }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub controllable: bool,
}

/// `[B, AB, …, A^{n−1}B]`.
pub fn reachability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), b.ncols());
    let mut k = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for i in 0..n {
        k.view_mut((0, i * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    k
}

/// Rank of the reachability matrix by column-pivoted QR with threshold
/// `1e−10 · |R_11|`.
pub fn rank_condition(spec: &SystemSpec) -> RankReport {
    let k = reachability_matrix(&spec.a, &spec.b);
    let n = spec.n();
    let r = k.col_piv_qr().r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    let lead = diag.iter().fold(0.0f64, |acc, &v| acc.max(v));
    let rank = if lead == 0.0 { 0 } else { diag.iter().filter(|&&v| v > 1e-10 * lead).count() };
    RankReport { rank, controllable: rank == n }
}

/// Machine-readable verdict document.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub verdict: &'static str,
    pub scope: &'static str,
    pub min_eig: f64,
    pub rank: usize,
    pub rank_controllable: bool,
    pub sweep_tail_norm: f64,
    pub kernel_projection: f64,
    pub resolutions: Resolutions,
}

#[derive(Debug, Clone, Serialize)]
pub struct Resolutions {
    pub gramian_cells: usize,
    pub control_cells: usize,
}

impl Verdict {
    pub fn new(kt: &KernelTest, rank: &RankReport, sweep: &SweepReport, resolutions: Resolutions) -> Self {
        let positive = kt.strictly_positive && sweep.controllable_indicated;
        Self {
            verdict: if positive { "controllable-indicated" } else { "not-controllable-indicated" },
            scope: CERTIFICATE_SCOPE,
            min_eig: kt.min_eig,
            rank: rank.rank,
            rank_controllable: rank.controllable,
            sweep_tail_norm: sweep.tail(),
            kernel_projection: sweep.kernel_projection,
            resolutions,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}
