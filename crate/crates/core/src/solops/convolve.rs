//! Product integration of `∫ (t−s)^{α−1} P_α(t−s) B (mask ⊙ u)(s) ds` for
//! piecewise-linear `u`. The kernel is integrated exactly through its first
//! and second antiderivatives `F1`, `F2`, so the only approximation is the
//! piecewise-linear model of the control itself.

use nalgebra::{DMatrix, DVector};

use super::{OpKind, OperatorCache};
use crate::error::{Error, Result};
use crate::sysmodel::TimeGrid;

/// Sub-ranges of `[lo, hi]` on which the mask is constant, with the activity vector.
pub(crate) fn mask_pieces(cache: &OperatorCache, lo: f64, hi: f64) -> Vec<(f64, f64, DVector<f64>)> {
    let spec = cache.spec();
    let mut cuts = vec![lo];
    cuts.extend(spec.mask_breaks(lo, hi));
    cuts.push(hi);
    cuts.windows(2).map(|w| (w[0], w[1], spec.mask_at(0.5 * (w[0] + w[1])))).collect()
}

/// Weights `(W0, W1)` such that the integral over `[sa, sb] ⊆ [sj, sj1]` of
/// `K(t−s)` times the hat functions of the cell equals `W0·y0 + W1·y1`.
fn piece_weights(
    cache: &OperatorCache,
    t: f64,
    sa: f64,
    sb: f64,
    sj: f64,
    sj1: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let h = sj1 - sj;
    let (ta, tb) = (t - sa, t - sb);
    let f1a = cache.get(OpKind::F1, ta)?;
    let f1b = cache.get(OpKind::F1, tb)?;
    let df2 = cache.get(OpKind::F2, ta)? - cache.get(OpKind::F2, tb)?;
    let w0 = (&f1a * (sj1 - sa) - &f1b * (sj1 - sb) - &df2) / h;
    let w1 = (&f1a * (sa - sj) - &f1b * (sb - sj) + &df2) / h;
    Ok((w0, w1))
}

/// `∫_{s_{i0}}^{s_{i1}} (t−s)^{α−1} P_α(t−s) B (mask ⊙ u)(s) ds` for any `t ≥ s_{i1}`,
/// with `u` linear between consecutive nodes.
pub fn convolve_cells(
    cache: &OperatorCache,
    nodes: &[f64],
    u: &[DVector<f64>],
    i0: usize,
    i1: usize,
    t: f64,
) -> Result<DVector<f64>> {
    let spec = cache.spec();
    let mut acc = DVector::zeros(spec.n());
    if i1 <= i0 {
        return Ok(acc);
    }
    if t < nodes[i1] {
        return Err(Error::Contract(format!("evaluation time {t} precedes the window end {}", nodes[i1])));
    }
    for j in i0..i1 {
        let (sj, sj1) = (nodes[j], nodes[j + 1]);
        if u[j].iter().all(|&v| v == 0.0) && u[j + 1].iter().all(|&v| v == 0.0) {
            continue;
        }
        for (sa, sb, act) in mask_pieces(cache, sj, sj1) {
            if act.iter().all(|&v| v == 0.0) {
                continue;
            }
            let (w0, w1) = piece_weights(cache, t, sa, sb, sj, sj1)?;
            let y0 = &spec.b * u[j].component_mul(&act);
            let y1 = &spec.b * u[j + 1].component_mul(&act);
            acc += w0 * y0 + w1 * y1;
        }
    }
    Ok(acc)
}

fn node_index(nodes: &[f64], t: f64) -> Result<usize> {
    nodes
        .binary_search_by(|x| x.total_cmp(&t))
        .map_err(|_| Error::Contract(format!("time {t} is not a grid node")))
}

/// `∫_a^t (t−s)^{α−1} P_α(t−s) B (mask ⊙ u)(s) ds` with `a` and `t` grid nodes.
pub fn singular_convolve(
    cache: &OperatorCache,
    grid: &TimeGrid,
    u: &[DVector<f64>],
    a: f64,
    t: f64,
) -> Result<DVector<f64>> {
    if u.len() != grid.len() {
        return Err(Error::Contract(format!("{} control samples for {} grid nodes", u.len(), grid.len())));
    }
    if t <= a {
        return Ok(DVector::zeros(cache.spec().n()));
    }
    let i0 = node_index(grid.nodes(), a)?;
    let i1 = node_index(grid.nodes(), t)?;
    convolve_cells(cache, grid.nodes(), u, i0, i1, t)
}

/// Convolution from the start of interval `k` to every node of that interval
/// (first entry is zero). Uniform intervals reuse one weight pair per offset.
pub fn interval_convolutions(
    cache: &OperatorCache,
    grid: &TimeGrid,
    u: &[DVector<f64>],
    k: usize,
) -> Result<Vec<DVector<f64>>> {
    let spec = cache.spec();
    let n = spec.n();
    let range = grid.interval(k);
    let (first, last) = (*range.start(), *range.end());
    let nodes = grid.nodes();
    let cells = last - first;
    let mut out = vec![DVector::zeros(n); cells + 1];

    let Some(h) = grid.uniform_step(k) else {
        for r in 1..=cells {
            out[r] = convolve_cells(cache, nodes, u, first, first + r, nodes[first + r])?;
        }
        return Ok(out);
    };

    let active: Vec<bool> = (first..last).map(|j| u[j].iter().chain(u[j + 1].iter()).any(|&v| v != 0.0)).collect();
    if !active.iter().any(|&a| a) {
        return Ok(out);
    }
    let mut f1 = Vec::with_capacity(cells + 1);
    let mut f2 = Vec::with_capacity(cells + 1);
    for m in 0..=cells {
        let tau = m as f64 * h;
        f1.push(cache.get(OpKind::F1, tau)?);
        f2.push(cache.get(OpKind::F2, tau)?);
    }
    // Cell j of the interval seen from node r sits at offset m = r − j.
    let w0: Vec<DMatrix<f64>> =
        (1..=cells).map(|m| (&f1[m] * h - &f2[m] + &f2[m - 1]) / h).collect();
    let w1: Vec<DMatrix<f64>> =
        (1..=cells).map(|m| (&f2[m] - &f2[m - 1] - &f1[m - 1] * h) / h).collect();

    for (jr, &is_active) in active.iter().enumerate() {
        if !is_active {
            continue;
        }
        let j = first + jr;
        let pieces = mask_pieces(cache, nodes[j], nodes[j + 1]);
        if pieces.len() == 1 {
            let act = &pieces[0].2;
            if act.iter().all(|&v| v == 0.0) {
                continue;
            }
            let y0 = &spec.b * u[j].component_mul(act);
            let y1 = &spec.b * u[j + 1].component_mul(act);
            for r in (jr + 1)..=cells {
                let m = r - jr;
                out[r] += &w0[m - 1] * &y0 + &w1[m - 1] * &y1;
            }
        } else {
            for r in (jr + 1)..=cells {
                let t = nodes[first + r];
                out[r] += convolve_cells(cache, nodes, u, j, j + 1, t)?;
            }
        }
    }
    Ok(out)
}
