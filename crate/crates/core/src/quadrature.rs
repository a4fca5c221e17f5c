//! Quadrature building blocks: Gauss–Jacobi rules (Golub–Welsch) and an
//! adaptive Gauss–Kronrod integrator for scalar and vector integrands.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// A quadrature rule on `[-1, 1]` for the weight `(1 - x)^a (1 + x)^b`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Gauss–Legendre rule with `n` points.
    pub fn legendre(n: usize) -> Self {
        Self::jacobi(n, 0.0, 0.0)
    }

    /// Gauss–Jacobi rule with `n` points for the weight `(1-x)^a (1+x)^b`, `a, b > -1`.
    pub fn jacobi(n: usize, a: f64, b: f64) -> Self {
        assert!(n >= 1 && a > -1.0 && b > -1.0);
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let kf = k as f64;
            let s = 2.0 * kf + a + b;
            jac[(k, k)] = if k == 0 {
                (b - a) / (a + b + 2.0)
            } else {
                (b * b - a * a) / (s * (s + 2.0))
            };
            if k + 1 < n {
                let k1 = kf + 1.0;
                let s1 = 2.0 * k1 + a + b;
                let off = if k == 0 {
                    4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b).powi(2) * (3.0 + a + b))
                } else {
                    4.0 * k1 * (k1 + a) * (k1 + b) * (k1 + a + b) / (s1 * s1 * (s1 + 1.0) * (s1 - 1.0))
                };
                jac[(k, k + 1)] = off.sqrt();
                jac[(k + 1, k)] = off.sqrt();
            }
        }
        let mu0 = ((a + b + 1.0) * std::f64::consts::LN_2 + libm::lgamma(a + 1.0) + libm::lgamma(b + 1.0)
            - libm::lgamma(a + b + 2.0))
        .exp();
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        Self { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Rule for `∫_0^L x^β f(x) dx` built from a Gauss–Jacobi rule.
/// Nodes are returned on `[0, 1]`; scale with [`LeftSingularRule::apply`].
#[derive(Debug, Clone)]
pub struct LeftSingularRule {
    pub beta: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl LeftSingularRule {
    pub fn new(n: usize, beta: f64) -> Self {
        let rule = GaussRule::jacobi(n, 0.0, beta);
        // x = (1 + y) / 2, (1 + y)^β = 2^β x^β, dy = 2 dx
        let scale = 2f64.powf(-beta - 1.0);
        Self {
            beta,
            nodes: rule.nodes.iter().map(|y| 0.5 * (1.0 + y)).collect(),
            weights: rule.weights.iter().map(|w| w * scale).collect(),
        }
    }

    /// Points `L * y_i` and weights such that `Σ w_i f(x_i) ≈ ∫_0^L x^β f(x) dx`.
    pub fn apply(&self, length: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let wscale = length.powf(self.beta + 1.0);
        self.nodes.iter().zip(&self.weights).map(move |(y, w)| (length * y, w * wscale))
    }
}

// Gauss–Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        kron += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of a scalar function on `[a, b]`.
///
/// Returns `(value, error_estimate)`. Stops when the summed error estimate is
/// below `max(abs_tol, rel_tol * |value|)` or after `max_intervals` bisections,
/// in which case a [`Error::Numerical`] with the partial value is returned.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (v0, e0) = gk15(&mut f, a, b);
    let mut segments = vec![(a, b, v0, e0)];
    let mut total = v0;
    let mut err = e0;
    // Roundoff floor: asking for less than this is pointless.
    let floor = |total: f64| 50.0 * f64::EPSILON * total.abs();
    while err > abs_tol.max(rel_tol * total.abs()).max(floor(total)) {
        if segments.len() >= max_intervals {
            return Err(Error::Numerical {
                message: format!("adaptive quadrature did not converge on [{a}, {b}] (error estimate {err:.3e})"),
                partial: Some(total),
            });
        }
        let idx = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (sa, sb, sv, se) = segments.swap_remove(idx);
        let mid = 0.5 * (sa + sb);
        let (v1, e1) = gk15(&mut f, sa, mid);
        let (v2, e2) = gk15(&mut f, mid, sb);
        total += v1 + v2 - sv;
        err += e1 + e2 - se;
        segments.push((sa, mid, v1, e1));
        segments.push((mid, sb, v2, e2));
    }
    // Re-sum to shed drift from the running updates.
    let total: f64 = segments.iter().map(|s| s.2).sum();
    let err: f64 = segments.iter().map(|s| s.3).sum();
    Ok((total, err))
}

/// Adaptive Gauss–Kronrod for vector-valued integrands (error measured in the max norm).
pub fn integrate_vec<F: FnMut(f64) -> DVector<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<DVector<f64>> {
    if a == b {
        return Ok(DVector::zeros(dim));
    }
    let mut rule = |lo: f64, hi: f64| -> (DVector<f64>, f64) {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        let fc = f(c);
        let mut kron = &fc * WGK[7];
        let mut gauss = &fc * WG[3];
        for j in 0..7 {
            let dx = h * XGK[j];
            let f1 = f(c - dx);
            let f2 = f(c + dx);
            let s = f1 + f2;
            kron.axpy(WGK[j], &s, 1.0);
            if j % 2 == 1 {
                gauss.axpy(WG[j / 2], &s, 1.0);
            }
        }
        let e = (&kron - &gauss).amax() * h;
        (kron * h, e)
    };
    let (v0, e0) = rule(a, b);
    let mut segments = vec![(a, b, v0, e0)];
    loop {
        let total: DVector<f64> = segments.iter().fold(DVector::zeros(dim), |acc, s| acc + &s.2);
        let err: f64 = segments.iter().map(|s| s.3).sum();
        let scale = total.amax();
        if err <= abs_tol.max(rel_tol * scale).max(50.0 * f64::EPSILON * scale) {
            return Ok(total);
        }
        if segments.len() >= max_intervals {
            return Err(Error::numerical(format!(
                "vector quadrature did not converge on [{a}, {b}] (error estimate {err:.3e})"
            )));
        }
        let idx = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (sa, sb, _, _) = segments.swap_remove(idx);
        let mid = 0.5 * (sa + sb);
        let (v1, e1) = rule(sa, mid);
        let (v2, e2) = rule(mid, sb);
        segments.push((sa, mid, v1, e1));
        segments.push((mid, sb, v2, e2));
    }
}
