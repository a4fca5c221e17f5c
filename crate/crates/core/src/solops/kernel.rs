//! Quadrature for controls of kernel form
//! `u(s) = mask(s) ⊙ B* (c−s)^{α−1} P_α*(c−s) ξ` on an interval ending at `c`.
//!
//! All kernel-squared integrals go through `x = τ^α`, which turns
//! `τ^{2α−2} dτ` into `x^{1−1/α} dx / α` while `P_α` becomes the entire
//! function `E_{α,α}(A x)`. Two independent node sets are provided: uniform
//! fine cells (used for Gramian blocks) and geometric panels (used for inner
//! products and endpoint responses).

use nalgebra::{DMatrix, DVector};

use super::convolve::mask_pieces;
use super::OperatorCache;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_vec, GaussRule};
use crate::sysmodel::TimeGrid;

const PANELS: i32 = 12;

/// Node set in x for a weighted integral `∫ x^{1−1/α} g(x) dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XRoute {
    /// Uniform cells, the given number per range.
    Cells(usize),
    /// Geometric panels toward x = 0.
    Panels,
}

pub(crate) fn require_square_integrable(cache: &OperatorCache) -> Result<()> {
    if cache.alpha() > 0.5 {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "order {} makes the adjoint kernel non square-integrable; α > 1/2 is required",
            cache.alpha()
        )))
    }
}

fn push_gauss(out: &mut Vec<(f64, f64)>, rule: &GaussRule, lo: f64, hi: f64, beta: f64, sign: f64) {
    let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    for (y, w) in rule.nodes.iter().zip(&rule.weights) {
        let x = c + h * y;
        out.push((x, sign * w * h * x.powf(beta)));
    }
}

fn from_zero(cache: &OperatorCache, route: XRoute, x: f64, sign: f64, out: &mut Vec<(f64, f64)>) {
    let r = cache.rules();
    let beta = 1.0 - 1.0 / cache.alpha();
    match route {
        XRoute::Panels => {
            let first = x * 2f64.powi(-PANELS);
            out.extend(r.first_panel.as_ref().unwrap().apply(first).map(|(p, w)| (p, sign * w)));
            for j in 0..PANELS {
                let hi = x * 2f64.powi(-j);
                push_gauss(out, &r.panel, 0.5 * hi, hi, beta, sign);
            }
        }
        XRoute::Cells(cells) => {
            let h = x / cells as f64;
            out.extend(r.gram_first.as_ref().unwrap().apply(h).map(|(p, w)| (p, sign * w)));
            for j in 1..cells {
                push_gauss(out, &r.gram_cell, j as f64 * h, (j + 1) as f64 * h, beta, sign);
            }
        }
    }
}

/// Nodes and weights for `∫_{xlo}^{xhi} x^{1−1/α} g(x) dx`.
pub(crate) fn x_nodes(cache: &OperatorCache, route: XRoute, xlo: f64, xhi: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    if xhi <= xlo {
        return out;
    }
    if xlo <= 0.0 {
        from_zero(cache, route, xhi, 1.0, &mut out);
    } else if xlo < 0.5 * xhi {
        from_zero(cache, route, xhi, 1.0, &mut out);
        from_zero(cache, route, xlo, -1.0, &mut out);
    } else {
        let r = cache.rules();
        let beta = 1.0 - 1.0 / cache.alpha();
        let (rule, cells) = match route {
            XRoute::Panels => (&r.panel, 4),
            XRoute::Cells(c) => (&r.gram_cell, c),
        };
        let h = (xhi - xlo) / cells as f64;
        for j in 0..cells {
            push_gauss(&mut out, rule, xlo + j as f64 * h, xlo + (j + 1) as f64 * h, beta, 1.0);
        }
    }
    out
}

/// `∫_{I_k} K(c−s) B diag(mask(s)) B* K*(c−s) ds` with `K(τ) = τ^{α−1}P_α(τ)`
/// and `c` the right end of interval `k`.
pub fn interval_gram(cache: &OperatorCache, k: usize, route: XRoute) -> Result<DMatrix<f64>> {
    require_square_integrable(cache)?;
    let spec = cache.spec();
    let bp = spec.breakpoints();
    let (lo, hi) = (bp[k], bp[k + 1]);
    let alpha = cache.alpha();
    let n = spec.n();

    // Channels sharing the same active ranges share one weighted B B*.
    let mut groups: Vec<(Vec<(f64, f64)>, DMatrix<f64>)> = Vec::new();
    for c in 0..spec.m() {
        let col = spec.b.column(c);
        if col.iter().all(|&v| v == 0.0) {
            continue;
        }
        let ranges = spec.active_ranges(c, lo, hi);
        if ranges.is_empty() {
            continue;
        }
        let outer = &col * col.transpose();
        match groups.iter_mut().find(|g| g.0 == ranges) {
            Some(g) => g.1 += outer,
            None => groups.push((ranges, outer)),
        }
    }

    let mut w = DMatrix::zeros(n, n);
    for (ranges, bb) in &groups {
        for &(sa, sb) in ranges {
            let (xlo, xhi) = ((hi - sb).powf(alpha), (hi - sa).powf(alpha));
            for (x, wt) in x_nodes(cache, route, xlo, xhi) {
                let p = cache.ml_power(alpha, x)?;
                w += (&p * bb * p.transpose()) * wt;
            }
        }
    }
    w /= alpha;
    Ok(crate::linalg::symmetrize(&w))
}

/// Panel-route Gram block of interval `k`, memoized in the cache.
pub fn panel_gram(cache: &OperatorCache, k: usize) -> Result<DMatrix<f64>> {
    if let Some(w) = cache.blocks.lock().unwrap().get(&k) {
        return Ok(w.clone());
    }
    let w = interval_gram(cache, k, XRoute::Panels)?;
    cache.blocks.lock().unwrap().insert(k, w.clone());
    Ok(w)
}

/// Value of the kernel-form control `mask(s) ⊙ B* (c−s)^{α−1} P_α*(c−s) ξ` at
/// `s` strictly inside interval `k` (or its left end).
pub fn kernel_value(cache: &OperatorCache, k: usize, xi: &DVector<f64>, s: f64) -> Result<DVector<f64>> {
    let spec = cache.spec();
    let c = spec.breakpoints()[k + 1];
    let tau = c - s;
    if tau <= 0.0 {
        return Err(Error::Contract(format!("kernel control is singular at the interval end {c}")));
    }
    let p = cache.get(super::OpKind::P, tau)?;
    let v = spec.b.transpose() * (p.transpose() * xi) * tau.powf(cache.alpha() - 1.0);
    Ok(v.component_mul(&spec.mask_at(s)))
}

/// `∫_{I_k} ⟨u(s), mask(s) ⊙ B* K*(c−s) ξ⟩ ds` for `u` piecewise linear on the grid.
///
/// Cells away from the singular end use Gauss–Legendre in s; the last cell
/// is integrated in `x = τ^α` with the hat functions split into a constant
/// and a `τ`-linear part.
pub fn lin_kernel_inner(
    cache: &OperatorCache,
    grid: &TimeGrid,
    u: &[DVector<f64>],
    k: usize,
    xi: &DVector<f64>,
) -> Result<f64> {
    let spec = cache.spec();
    let alpha = cache.alpha();
    let nodes = grid.nodes();
    let range = grid.interval(k);
    let (first, last) = (*range.start(), *range.end());
    let c = nodes[last];
    let bt = spec.b.transpose();
    let rules = cache.rules();
    let mut total = 0.0;

    for j in first..last {
        let (sj, sj1) = (nodes[j], nodes[j + 1]);
        if u[j].iter().chain(u[j + 1].iter()).all(|&v| v == 0.0) {
            continue;
        }
        let h = sj1 - sj;
        // Coefficients multiplying u_j and u_{j+1}.
        let mut a0 = DVector::zeros(spec.m());
        let mut a1 = DVector::zeros(spec.m());
        for (sa, sb, act) in mask_pieces(cache, sj, sj1) {
            if act.iter().all(|&v| v == 0.0) {
                continue;
            }
            if j + 1 == last {
                // τ = c − s ∈ [c−sb, c−sa]; the hat for u_j is τ/h.
                let mut lin = DVector::zeros(spec.n());
                let mut cst = DVector::zeros(spec.n());
                for (xend, sign) in [(c - sa, 1.0), (c - sb, -1.0)] {
                    if xend <= 0.0 {
                        continue;
                    }
                    let xl = xend.powf(alpha);
                    for (x, w) in rules.end_const.apply(xl) {
                        cst += cache.ml_power(alpha, x)?.tr_mul(xi) * (sign * w);
                    }
                    for (x, w) in rules.end_lin.apply(xl) {
                        lin += cache.ml_power(alpha, x)?.tr_mul(xi) * (sign * w);
                    }
                }
                let lin = (&bt * lin).component_mul(&act) / (alpha * h);
                let cst = (&bt * cst).component_mul(&act) / alpha;
                a1 += &cst - &lin;
                a0 += lin;
            } else {
                let (mid, half) = (0.5 * (sa + sb), 0.5 * (sb - sa));
                for (y, w) in rules.cell.nodes.iter().zip(&rules.cell.weights) {
                    let s = mid + half * y;
                    let tau = c - s;
                    let p = cache.get(super::OpKind::P, tau)?;
                    let val = (&bt * p.tr_mul(xi)).component_mul(&act) * (w * half * tau.powf(alpha - 1.0));
                    let phi1 = (s - sj) / h;
                    a0 += &val * (1.0 - phi1);
                    a1 += val * phi1;
                }
            }
        }
        total += u[j].dot(&a0) + u[j + 1].dot(&a1);
    }
    Ok(total)
}

/// Response `∫_{t_k}^{t} K(t−s) B (mask ⊙ u)(s) ds` of the kernel-form control
/// with coefficient `xi` on interval `k`, for `t` inside the interval.
/// At the right end this is the panel Gram block applied to `xi`.
pub fn kernel_response_at(cache: &OperatorCache, k: usize, xi: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let spec = cache.spec();
    let bp = spec.breakpoints();
    let (lo, c) = (bp[k], bp[k + 1]);
    let n = spec.n();
    if t <= lo {
        return Ok(DVector::zeros(n));
    }
    if t >= c {
        return Ok(panel_gram(cache, k)? * xi);
    }
    require_square_integrable(cache)?;
    let alpha = cache.alpha();
    let d = c - t;
    let mut acc = DVector::zeros(n);
    for ch in 0..spec.m() {
        let b = spec.b.column(ch).into_owned();
        if b.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (sa, sb) in spec.active_ranges(ch, lo, t) {
            // σ = t − s, x = σ^α
            let (xlo, xhi) = ((t - sb).powf(alpha), (t - sa).powf(alpha));
            let mut err = None;
            let f = |x: f64| -> DVector<f64> {
                let sigma = x.powf(1.0 / alpha);
                let tau = d + sigma;
                let inner = match cache.ml_power(alpha, tau.powf(alpha)) {
                    Ok(p) => b.dot(&p.tr_mul(xi)) * tau.powf(alpha - 1.0),
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                };
                match cache.ml_power(alpha, x) {
                    Ok(p) => p * &b * inner,
                    Err(e) => {
                        err.get_or_insert(e);
                        DVector::zeros(n)
                    }
                }
            };
            let v = integrate_vec(f, xlo, xhi, n, 1e-15, 1e-11, 400)?;
            if let Some(e) = err {
                return Err(e);
            }
            acc += v;
        }
    }
    Ok(acc / alpha)
}
