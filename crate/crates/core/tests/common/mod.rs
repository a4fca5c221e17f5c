#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracimp::sysmodel::{ChannelWindow, ControlBundle, SystemSpec, TimeGrid};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half_width: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-half_width..half_width))
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half_width..half_width))
}

/// Non-normal matrix with real spectrum in `[lo, hi]`.
pub fn real_spectrum_matrix(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = DMatrix::identity(n, n) + uniform(rng, n, n, 0.4);
    let q_inv = q.clone().try_inverse().expect("perturbed identity is invertible");
    let d = DVector::from_fn(n, |_, _| rng.random_range(lo..hi));
    &q * DMatrix::from_diagonal(&d) * q_inv
}

#[derive(Debug, Clone, Copy)]
pub struct SpecShape {
    pub max_n: usize,
    pub max_m: usize,
    pub max_impulses: usize,
    pub masks: bool,
    pub terminal: bool,
}

/// Random validated spec of order `alpha`.
pub fn random_spec(rng: &mut ChaCha8Rng, alpha: f64, shape: SpecShape) -> SystemSpec {
    let n = rng.random_range(1..=shape.max_n);
    let m = rng.random_range(1..=shape.max_m);
    let horizon = rng.random_range(0.8..2.0);
    let a = if alpha == 1.0 && rng.random_bool(0.3) {
        // complex spectrum allowed for the classical case, kept small for the series path
        uniform(rng, n, n, 0.5 / n as f64)
    } else {
        real_spectrum_matrix(rng, n, -3.0, 0.5)
    };
    let b = uniform(rng, n, m, 1.0);
    let mut spec = SystemSpec::new(alpha, horizon, a, b);
    let k = rng.random_range(0..=shape.max_impulses);
    let mut times: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..0.9) * horizon).collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|x, y| (*x - *y).abs() < 0.05 * horizon);
    for t in times {
        let d = uniform(rng, n, n, 0.5);
        let e = uniform(rng, n, m, 1.0);
        spec = spec.with_impulse(t, d, e);
    }
    if shape.masks {
        for c in 0..m {
            if rng.random_bool(0.5) {
                let s = rng.random_range(0.0..0.6) * horizon;
                let e = (s + rng.random_range(0.2..0.8) * horizon).min(horizon);
                spec.mask.push(ChannelWindow { channel: c, start: s, end: e });
            }
        }
    }
    if shape.terminal && rng.random_bool(0.5) {
        spec.terminal_input = Some(uniform(rng, n, m, 1.0));
    }
    fracimp::sysmodel::validate(&spec).expect("random spec is valid")
}

/// `u_i(t) = a_i (sin(ω_i t + θ_i) + 0.3)`.
#[derive(Debug, Clone)]
pub struct SmoothControl {
    freq: DVector<f64>,
    phase: DVector<f64>,
    amp: DVector<f64>,
}

impl SmoothControl {
    pub fn random(rng: &mut ChaCha8Rng, m: usize) -> Self {
        Self { freq: uniform_vec(rng, m, 6.0), phase: uniform_vec(rng, m, 3.0), amp: uniform_vec(rng, m, 1.0) }
    }

    pub fn sample(&self, spec: &SystemSpec, cells: usize) -> ControlBundle {
        let grid = TimeGrid::uniform(spec, cells).unwrap();
        ControlBundle::from_fn(spec, grid, |t| {
            DVector::from_fn(self.amp.len(), |i, _| self.amp[i] * ((self.freq[i] * t + self.phase[i]).sin() + 0.3))
        })
    }
}

/// Smooth random distributed control plus random impulse controls.
pub fn random_bundle(rng: &mut ChaCha8Rng, spec: &SystemSpec, cells: usize) -> ControlBundle {
    let m = spec.m();
    let mut b = SmoothControl::random(rng, m).sample(spec, cells);
    for v in b.v.iter_mut() {
        *v = uniform_vec(rng, m, 1.0);
    }
    if spec.terminal_input.is_some() {
        b.v_terminal = Some(uniform_vec(rng, m, 1.0));
    }
    b
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.abs().row_sum().max();
    let s = if norm > 0.25 { (norm / 0.25).log2().ceil() as i32 } else { 0 };
    let a = m / 2f64.powi(s);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &a / k as f64;
        sum += &term;
        if term.amax() < 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Exact classical step over `[0, h]` for `x' = Ax + B u`, with `u` linear
/// from `u0` to `u1`, via the exponential of an augmented block matrix.
pub fn van_loan_step(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &DVector<f64>, u0: &DVector<f64>, u1: &DVector<f64>, h: f64) -> DVector<f64> {
    let (n, m) = (a.nrows(), b.ncols());
    let mut big = DMatrix::zeros(n + 2 * m, n + 2 * m);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, m)).copy_from(b);
    big.view_mut((n, n + m), (m, m)).copy_from(&DMatrix::identity(m, m));
    let e = expm(&(big * h));
    let mut z = DVector::zeros(n + 2 * m);
    z.rows_mut(0, n).copy_from(x);
    z.rows_mut(n, m).copy_from(u0);
    z.rows_mut(n + m, m).copy_from(&((u1 - u0) / h));
    (e * z).rows(0, n).into_owned()
}

/// Classical (order one) impulsive solution on the bundle's grid: left values
/// at every node and right values at jump nodes (and at the horizon when a
/// terminal control acts). Masks are not supported here.
pub fn classical_oracle(spec: &SystemSpec, x0: &DVector<f64>, bundle: &ControlBundle) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    assert!(spec.mask.is_empty());
    let nodes = bundle.grid.nodes();
    let mut left = vec![x0.clone()];
    let mut right = Vec::new();
    let mut x = x0.clone();
    let mut next_imp = 0;
    for j in 1..nodes.len() {
        x = van_loan_step(&spec.a, &spec.b, &x, &bundle.u[j - 1], &bundle.u[j], nodes[j] - nodes[j - 1]);
        left.push(x.clone());
        if next_imp < spec.impulses.len() && nodes[j] == spec.impulses[next_imp].time {
            let imp = &spec.impulses[next_imp];
            x = &x + &imp.jump * &x + &imp.input * &bundle.v[next_imp];
            right.push(x.clone());
            next_imp += 1;
        }
    }
    if let (Some(e), Some(v)) = (&spec.terminal_input, &bundle.v_terminal) {
        right.push(&x + e * v);
    }
    (left, right)
}
