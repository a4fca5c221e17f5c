//! Forward mild solutions across impulses and the adjoint (backward) solution.

mod adjoint;

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::solops::kernel::kernel_response_at;
use crate::solops::{convolve_cells, interval_convolutions, s_alpha, OperatorCache};
use crate::sysmodel::{ControlBundle, SystemSpec};

pub use adjoint::{adjoint_solve, adjoint_solve_with, green_residual, green_terms, AdjointTrajectory, GreenTerms};

/// State samples on a grid. `states[j]` is the left value `x(t_j)`; at
/// impulse instants (and at the horizon when a terminal control acts) the
/// right value is stored separately.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: crate::sysmodel::TimeGrid,
    pub states: Vec<DVector<f64>>,
    /// `(node index, x(t⁺))` in time order.
    pub right: Vec<(usize, DVector<f64>)>,
}

impl Trajectory {
    /// State at the horizon after any terminal control.
    pub fn final_state(&self) -> DVector<f64> {
        let last = self.states.len() - 1;
        match self.right.last() {
            Some((j, x)) if *j == last => x.clone(),
            _ => self.states[last].clone(),
        }
    }

    /// `x(t_k⁺)` for the k-th impulse (1-based).
    pub fn post_impulse(&self, k: usize) -> Option<&DVector<f64>> {
        self.right.get(k.checked_sub(1)?).map(|(_, x)| x)
    }

    /// CSV with columns `time, side, x_1 … x_n`; side is `L`/`R` at jump nodes.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut out = String::from("time,side");
        for i in 1..=n {
            let _ = write!(out, ",x_{i}");
        }
        out.push('\n');
        let row = |out: &mut String, t: f64, side: &str, x: &DVector<f64>| {
            let _ = write!(out, "{t:.16e},{side}");
            for v in x.iter() {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        };
        let mut r = self.right.iter().peekable();
        for (j, (&t, x)) in self.grid.nodes().iter().zip(&self.states).enumerate() {
            match r.peek() {
                Some((idx, xr)) if *idx == j => {
                    row(&mut out, t, "L", x);
                    row(&mut out, t, "R", xr);
                    r.next();
                }
                _ => row(&mut out, t, "", x),
            }
        }
        out
    }
}

fn check_inputs(cache: &OperatorCache, x0: &DVector<f64>, bundle: &ControlBundle) -> Result<()> {
    let spec = cache.spec();
    if x0.len() != spec.n() {
        return Err(Error::Contract(format!("initial state has length {}, expected {}", x0.len(), spec.n())));
    }
    bundle.check(spec)
}

fn kernel_part(bundle: &ControlBundle) -> Option<(&Arc<OperatorCache>, &[DVector<f64>])> {
    bundle.kernel.as_ref().map(|k| (&k.cache, k.coeffs.as_slice()))
}

/// Convolution over the whole of interval `k`, evaluated at its right end.
fn interval_drive(cache: &OperatorCache, bundle: &ControlBundle, k: usize) -> Result<DVector<f64>> {
    let r = bundle.grid.interval(k);
    let t = bundle.grid.nodes()[*r.end()];
    let mut c = convolve_cells(cache, bundle.grid.nodes(), &bundle.u, *r.start(), *r.end(), t)?;
    if let Some((kc, xi)) = kernel_part(bundle) {
        c += kernel_response_at(kc, k, &xi[k], t)?;
    }
    Ok(c)
}

fn jump(spec: &SystemSpec, bundle: &ControlBundle, k: usize, left: &DVector<f64>) -> DVector<f64> {
    let imp = &spec.impulses[k - 1];
    left + &imp.jump * left + &imp.input * &bundle.v[k - 1]
}

fn terminal(spec: &SystemSpec, bundle: &ControlBundle) -> Option<DVector<f64>> {
    match (&spec.terminal_input, &bundle.v_terminal) {
        (Some(e), Some(v)) => Some(e * v),
        _ => None,
    }
}

/// `x(t_k⁺)` by the forward recursion (k is 1-based).
pub fn post_impulse_state(spec: &SystemSpec, x0: &DVector<f64>, bundle: &ControlBundle, k: usize) -> Result<DVector<f64>> {
    let cache = OperatorCache::new(spec)?;
    post_impulse_state_with(&cache, x0, bundle, k)
}

pub fn post_impulse_state_with(
    cache: &OperatorCache,
    x0: &DVector<f64>,
    bundle: &ControlBundle,
    k: usize,
) -> Result<DVector<f64>> {
    let spec = cache.spec();
    if k == 0 || k > spec.impulses.len() {
        return Err(Error::Contract(format!("impulse index {k} is not in 1..={}", spec.impulses.len())));
    }
    check_inputs(cache, x0, bundle)?;
    let bp = spec.breakpoints();
    let mut x = x0.clone();
    for i in 0..k {
        let left = s_alpha(cache, bp[i + 1] - bp[i])? * &x + interval_drive(cache, bundle, i)?;
        x = jump(spec, bundle, i + 1, &left);
    }
    Ok(x)
}

/// `x(b)` (after any terminal control) without sampling the interior.
pub fn final_state(cache: &OperatorCache, x0: &DVector<f64>, bundle: &ControlBundle) -> Result<DVector<f64>> {
    check_inputs(cache, x0, bundle)?;
    let spec = cache.spec();
    let bp = spec.breakpoints();
    let mut x = x0.clone();
    for k in 0..spec.interval_count() {
        x = s_alpha(cache, bp[k + 1] - bp[k])? * &x + interval_drive(cache, bundle, k)?;
        if k < spec.impulses.len() {
            x = jump(spec, bundle, k + 1, &x);
        }
    }
    if let Some(e) = terminal(spec, bundle) {
        x += e;
    }
    Ok(x)
}

/// Mild solution on the bundle grid: on each `(t_k, t_{k+1}]`,
/// `x(t) = S_α(t−t_k) x(t_k⁺) + ∫_{t_k}^t (t−s)^{α−1} P_α(t−s) B u(s) ds`.
pub fn propagate(spec: &SystemSpec, x0: &DVector<f64>, bundle: &ControlBundle) -> Result<Trajectory> {
    let cache = OperatorCache::new(spec)?;
    propagate_with(&cache, x0, bundle)
}

pub fn propagate_with(cache: &OperatorCache, x0: &DVector<f64>, bundle: &ControlBundle) -> Result<Trajectory> {
    check_inputs(cache, x0, bundle)?;
    let spec = cache.spec();
    let grid = &bundle.grid;
    let nodes = grid.nodes();
    let mut states = vec![DVector::zeros(spec.n()); grid.len()];
    let mut right = Vec::new();
    states[0] = x0.clone();
    let mut start = x0.clone();
    for k in 0..spec.interval_count() {
        let r = grid.interval(k);
        let (first, last) = (*r.start(), *r.end());
        let conv = interval_convolutions(cache, grid, &bundle.u, k)?;
        for (off, j) in (first + 1..=last).enumerate() {
            let tau = nodes[j] - nodes[first];
            let mut x = s_alpha(cache, tau)? * &start + &conv[off + 1];
            if let Some((kc, xi)) = kernel_part(bundle) {
                x += kernel_response_at(kc, k, &xi[k], nodes[j])?;
            }
            states[j] = x;
        }
        if k < spec.impulses.len() {
            start = jump(spec, bundle, k + 1, &states[last]);
            right.push((last, start.clone()));
        }
    }
    if let Some(e) = terminal(spec, bundle) {
        let last = grid.len() - 1;
        right.push((last, &states[last] + e));
    }
    Ok(Trajectory { grid: grid.clone(), states, right })
}

/// Largest `‖D_k A − A D_k‖` over the impulses.
pub fn commutation_defect(spec: &SystemSpec) -> f64 {
    spec.impulses.iter().map(|i| (&i.jump * &spec.a - &spec.a * &i.jump).amax()).fold(0.0, f64::max)
}

/// Trajectory from the expanded form in which every `(I + D_j)` is moved in
/// front of the solution operators. Requires each `D_k` to commute with A.
///
/// At α = 1 the products of solution operators collapse to a single
/// exponential and the convolutions over earlier intervals are evaluated
/// directly against the kernel anchored at `t`. For α < 1 that collapse is
/// not valid, and the products are kept.
pub fn propagate_commutative(spec: &SystemSpec, x0: &DVector<f64>, bundle: &ControlBundle) -> Result<Trajectory> {
    let defect = commutation_defect(spec);
    if defect > 1e-10 {
        return Err(Error::Contract(format!("impulse maps do not commute with A (defect {defect:.3e})")));
    }
    let cache = OperatorCache::new(spec)?;
    check_inputs(&cache, x0, bundle)?;
    let spec = cache.spec();
    let grid = &bundle.grid;
    let nodes = grid.nodes();
    let bp = spec.breakpoints();
    let n = spec.n();
    let id = DMatrix::<f64>::identity(n, n);
    let literal = spec.alpha == 1.0;

    // jumps[i] = I + D_i (1-based), products taken as needed
    let plus: Vec<DMatrix<f64>> = std::iter::once(id.clone()).chain(spec.impulses.iter().map(|i| &id + &i.jump)).collect();
    let jump_prod = |hi: usize, lo: usize| -> DMatrix<f64> {
        // Π_{j=hi}^{lo} (I + D_j); identity when lo > hi
        (lo..=hi).fold(id.clone(), |acc, j| acc * &plus[j])
    };
    let drives: Vec<DVector<f64>> = if literal {
        Vec::new()
    } else {
        (0..spec.interval_count()).map(|k| interval_drive(&cache, bundle, k)).collect::<Result<_>>()?
    };

    let mut states = vec![DVector::zeros(n); grid.len()];
    let mut right = Vec::new();
    states[0] = x0.clone();
    for k in 0..spec.interval_count() {
        let r = grid.interval(k);
        let (first, last) = (*r.start(), *r.end());
        let conv = interval_convolutions(&cache, grid, &bundle.u, k)?;
        // chain[i] = S(Δ_{k−1}) ⋯ S(Δ_i), i = 0..=k (chain[k] = I)
        let mut chain = vec![id.clone(); k + 1];
        for i in (0..k).rev() {
            chain[i] = &chain[i + 1] * s_alpha(&cache, bp[i + 1] - bp[i])?;
        }
        for (off, j) in (first + 1..=last).enumerate() {
            let t = nodes[j];
            let lead = s_alpha(&cache, t - bp[k])?;
            let mut x;
            if literal {
                x = jump_prod(k, 1) * s_alpha(&cache, t)? * x0;
                for i in 1..=k {
                    let ri = grid.interval(i - 1);
                    let c = convolve_cells(&cache, nodes, &bundle.u, *ri.start(), *ri.end(), t)?;
                    x += jump_prod(k, i) * c;
                    let imp = &spec.impulses[i - 1];
                    x += jump_prod(k, i + 1) * s_alpha(&cache, t - bp[i])? * (&imp.input * &bundle.v[i - 1]);
                }
            } else {
                x = jump_prod(k, 1) * (&lead * (&chain[0] * x0));
                for i in 1..=k {
                    x += jump_prod(k, i) * (&lead * (&chain[i] * &drives[i - 1]));
                    let imp = &spec.impulses[i - 1];
                    x += jump_prod(k, i + 1) * (&lead * (&chain[i] * (&imp.input * &bundle.v[i - 1])));
                }
            }
            x += &conv[off + 1];
            if let Some((kc, xi)) = kernel_part(bundle) {
                if literal && k > 0 {
                    return Err(Error::Unsupported("kernel-form controls on the commutative path".into()));
                }
                x += kernel_response_at(kc, k, &xi[k], t)?;
            }
            states[j] = x;
        }
        if k < spec.impulses.len() {
            right.push((last, jump(spec, bundle, k + 1, &states[last])));
        }
    }
    if let Some(e) = terminal(spec, bundle) {
        let last = grid.len() - 1;
        right.push((last, &states[last] + e));
    }
    Ok(Trajectory { grid: grid.clone(), states, right })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::TimeGrid;

    fn scalar_spec(alpha: f64, d: &[(f64, f64)]) -> SystemSpec {
        let mut s = SystemSpec::new(alpha, 1.0, DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0));
        for &(t, dk) in d {
            s = s.with_impulse(t, DMatrix::from_element(1, 1, dk), DMatrix::from_element(1, 1, 1.0));
        }
        s
    }

    #[test]
    fn free_motion_without_impulses() {
        let s = scalar_spec(0.7, &[]);
        let g = TimeGrid::uniform(&s, 8).unwrap();
        let b = ControlBundle::zeros(&s, g);
        let x0 = DVector::from_element(1, 2.0);
        let tr = propagate(&s, &x0, &b).unwrap();
        let c = OperatorCache::new(&s).unwrap();
        for (t, x) in tr.grid.nodes().iter().zip(&tr.states) {
            assert!((x[0] - 2.0 * s_alpha(&c, *t).unwrap()[(0, 0)]).abs() < 1e-15);
        }
    }

    #[test]
    fn first_impulse_state() {
        let s = scalar_spec(0.8, &[(0.4, 0.0)]);
        let g = TimeGrid::uniform(&s, 8).unwrap();
        let b = ControlBundle::zeros(&s, g);
        let x0 = DVector::from_element(1, 1.5);
        let c = OperatorCache::new(&s).unwrap();
        let mut b2 = b.clone();
        b2.v[0][0] = 0.0;
        let x = post_impulse_state(&s, &x0, &b2, 1).unwrap();
        assert!((x[0] - 1.5 * s_alpha(&c, 0.4).unwrap()[(0, 0)]).abs() < 1e-15);
        assert!(matches!(post_impulse_state(&s, &x0, &b, 2), Err(Error::Contract(_))));
    }

    #[test]
    fn recursion_matches_expanded_product() {
        let s = scalar_spec(0.6, &[(0.3, 0.5), (0.7, -0.2)]);
        let g = TimeGrid::uniform(&s, 4).unwrap();
        let b = ControlBundle::zeros(&s, g);
        let x0 = DVector::from_element(1, 1.0);
        let c = OperatorCache::new(&s).unwrap();
        let x2 = post_impulse_state(&s, &x0, &b, 2).unwrap()[0];
        let sa = |t: f64| s_alpha(&c, t).unwrap()[(0, 0)];
        let want = (1.0 - 0.2) * sa(0.4) * (1.0 + 0.5) * sa(0.3);
        assert!((x2 - want).abs() < 1e-15);
    }

    #[test]
    fn jump_consistency_and_csv() {
        let s = scalar_spec(0.75, &[(0.5, 0.3)]);
        let g = TimeGrid::uniform(&s, 4).unwrap();
        let mut b = ControlBundle::from_fn(&s, g, |t| DVector::from_element(1, t.cos()));
        b.v[0][0] = 0.7;
        let tr = propagate(&s, &DVector::from_element(1, 1.0), &b).unwrap();
        let (j, xr) = &tr.right[0];
        assert!((xr[0] - (1.3 * tr.states[*j][0] + 0.7)).abs() < 1e-12);
        let csv = tr.to_csv();
        assert_eq!(csv.lines().count(), 1 + tr.grid.len() + 1);
        assert!(csv.lines().nth(5).unwrap().contains(",L,"));
        assert!(csv.lines().nth(6).unwrap().contains(",R,"));
        let fin = final_state(&OperatorCache::new(&s).unwrap(), &DVector::from_element(1, 1.0), &b).unwrap();
        assert!((fin - tr.final_state()).amax() < 1e-14);
    }

    #[test]
    fn commutative_path_single_unit_jump_at_order_one() {
        let s = scalar_spec(1.0, &[(0.5, 1.0)]);
        let g = TimeGrid::uniform(&s, 4).unwrap();
        let b = ControlBundle::zeros(&s, g);
        let x0 = DVector::from_element(1, 1.0);
        let tr = propagate_commutative(&s, &x0, &b).unwrap();
        for (t, x) in tr.grid.nodes().iter().zip(&tr.states).skip(5) {
            assert!((x[0] - 2.0 * (-t).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn commutative_path_rejects_non_commuting_jumps() {
        let mut s = SystemSpec::new(
            0.8,
            1.0,
            DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]),
            DMatrix::identity(2, 2),
        );
        s = s.with_impulse(0.5, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]), DMatrix::zeros(2, 2));
        let g = TimeGrid::uniform(&s, 4).unwrap();
        let b = ControlBundle::zeros(&s, g);
        assert!(matches!(propagate_commutative(&s, &DVector::zeros(2), &b), Err(Error::Contract(_))));
    }
}
