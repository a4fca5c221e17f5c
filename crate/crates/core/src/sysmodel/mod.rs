//! System specification, control bundles and config files.

mod bundle;
mod config;
mod grid;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use bundle::{inner_product_omega, ControlBundle, KernelControl};
pub use config::{
    format_bundle, format_config, parse_bundle, parse_config, read_bundle, read_config, write_bundle, write_config,
    ProblemConfig,
};
pub use grid::TimeGrid;

/// A state jump `x(t⁺) = (I + jump) x(t) + input · v` at an interior instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseEvent {
    pub time: f64,
    /// `D_k`, n×n.
    pub jump: DMatrix<f64>,
    /// `E_k`, n×m.
    pub input: DMatrix<f64>,
}

/// Activation window of one control channel (0-based). A channel with one or
/// more windows is active on their union; a channel with none is always active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelWindow {
    pub channel: usize,
    pub start: f64,
    pub end: f64,
}

/// `D^α x = A x + B (mask ⊙ u)` on `[0, b]` with jumps at interior instants.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    /// Fractional order α in (0, 1].
    pub alpha: f64,
    /// Horizon b.
    pub horizon: f64,
    /// Declared bound M ≥ 1 on ‖S_α(t)‖; diagnostics only.
    pub semigroup_bound: f64,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub impulses: Vec<ImpulseEvent>,
    pub mask: Vec<ChannelWindow>,
    /// Optional n×m map for an impulse control that enters additively at the
    /// horizon without being propagated (the heat example's jump at t = b).
    pub terminal_input: Option<DMatrix<f64>>,
}

impl SystemSpec {
    /// Plain spec with no impulses, mask or terminal input.
    pub fn new(alpha: f64, horizon: f64, a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        Self { alpha, horizon, semigroup_bound: 1.0, a, b, impulses: Vec::new(), mask: Vec::new(), terminal_input: None }
    }

    pub fn with_impulse(mut self, time: f64, jump: DMatrix<f64>, input: DMatrix<f64>) -> Self {
        self.impulses.push(ImpulseEvent { time, jump, input });
        self
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `[0, t_1, …, t_n, b]`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.impulses.len() + 2);
        t.push(0.0);
        t.extend(self.impulses.iter().map(|i| i.time));
        t.push(self.horizon);
        t
    }

    pub fn interval_count(&self) -> usize {
        self.impulses.len() + 1
    }

    fn windows_of(&self, channel: usize) -> impl Iterator<Item = &ChannelWindow> {
        self.mask.iter().filter(move |w| w.channel == channel)
    }

    /// Whether `channel` is active at time `s` (windows are closed).
    pub fn channel_active(&self, channel: usize, s: f64) -> bool {
        let mut any = false;
        for w in self.windows_of(channel) {
            any = true;
            if w.start <= s && s <= w.end {
                return true;
            }
        }
        !any
    }

    /// 0/1 activity vector at time `s`.
    pub fn mask_at(&self, s: f64) -> DVector<f64> {
        DVector::from_fn(self.m(), |c, _| if self.channel_active(c, s) { 1.0 } else { 0.0 })
    }

    /// Maximal sub-intervals of `[lo, hi]` on which `channel` is active.
    pub fn active_ranges(&self, channel: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut w: Vec<(f64, f64)> =
            self.windows_of(channel).map(|w| (w.start.max(lo), w.end.min(hi))).filter(|(a, b)| a < b).collect();
        if self.windows_of(channel).next().is_none() {
            return if lo < hi { vec![(lo, hi)] } else { Vec::new() };
        }
        w.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in w {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }

    /// Window endpoints strictly inside `(lo, hi)`, sorted and deduplicated.
    pub fn mask_breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut v: Vec<f64> =
            self.mask.iter().flat_map(|w| [w.start, w.end]).filter(|&t| t > lo && t < hi).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// True when every impulse has `E_k = 0`, there is no terminal input and no mask.
    pub fn is_distributed_only(&self) -> bool {
        self.mask.is_empty()
            && self.terminal_input.as_ref().is_none_or(|e| e.amax() == 0.0)
            && self.impulses.iter().all(|i| i.input.amax() == 0.0)
    }

    /// Copy with control channel `c` removed from B, every E_k and the terminal input
    /// (the column is zeroed so that dimensions are preserved).
    pub fn without_channel(&self, c: usize) -> Self {
        let mut s = self.clone();
        if c < s.m() {
            s.b.column_mut(c).fill(0.0);
            for imp in &mut s.impulses {
                imp.input.column_mut(c).fill(0.0);
            }
            if let Some(e) = s.terminal_input.as_mut() {
                e.column_mut(c).fill(0.0);
            }
        }
        s
    }
}

fn check_finite(field: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation(field, "contains a non-finite entry"))
    }
}

fn check_shape(field: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::validation(
            field,
            format!("expected a {rows}x{cols} matrix, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    check_finite(field, m)
}

/// Check every invariant of a [`SystemSpec`] and return it with impulses sorted by time.
pub fn validate(spec: &SystemSpec) -> Result<SystemSpec> {
    let mut s = spec.clone();
    if !(s.alpha > 0.0 && s.alpha <= 1.0) {
        return Err(Error::validation("alpha", format!("{} is outside (0, 1]", s.alpha)));
    }
    if !(s.horizon > 0.0 && s.horizon.is_finite()) {
        return Err(Error::validation("horizon", format!("{} must be positive and finite", s.horizon)));
    }
    if !(s.semigroup_bound >= 1.0 && s.semigroup_bound.is_finite()) {
        return Err(Error::validation("semigroup_bound", format!("{} must be at least 1", s.semigroup_bound)));
    }
    let n = s.a.nrows();
    if n == 0 {
        return Err(Error::validation("A", "state dimension must be at least 1"));
    }
    check_shape("A", &s.a, n, n)?;
    let m = s.b.ncols();
    if m == 0 {
        return Err(Error::validation("B", "control dimension must be at least 1"));
    }
    check_shape("B", &s.b, n, m)?;
    s.impulses.sort_by(|x, y| x.time.total_cmp(&y.time));
    for (k, imp) in s.impulses.iter().enumerate() {
        if !(imp.time > 0.0 && imp.time < s.horizon) {
            return Err(Error::validation(
                format!("impulses[{k}].time"),
                format!("{} must lie strictly inside (0, {})", imp.time, s.horizon),
            ));
        }
        check_shape(&format!("impulses[{k}].D"), &imp.jump, n, n)?;
        check_shape(&format!("impulses[{k}].E"), &imp.input, n, m)?;
    }
    for (k, pair) in s.impulses.windows(2).enumerate() {
        if pair[0].time >= pair[1].time {
            return Err(Error::validation(
                format!("impulses[{}].time", k + 1),
                format!("impulse times must be distinct, {} repeats", pair[1].time),
            ));
        }
    }
    for (k, w) in s.mask.iter().enumerate() {
        if w.channel >= m {
            return Err(Error::validation(format!("mask[{k}].channel"), format!("no control channel {}", w.channel + 1)));
        }
        if !(w.start >= 0.0 && w.start <= w.end && w.end <= s.horizon) {
            return Err(Error::validation(
                format!("mask[{k}]"),
                format!("window [{}, {}] is not inside [0, {}]", w.start, w.end, s.horizon),
            ));
        }
    }
    if let Some(e) = &s.terminal_input {
        check_shape("terminal_input", e, n, m)?;
    }
    Ok(s)
}

/// Spectral truncation of the one-dimensional heat example: modes k = 1…n
/// with eigenvalues −k², order 2/3, horizon 1 and an identity impulse at 1/2.
///
/// With `with_mask`, channel k (mode k+1 in 1-based terms) is active only on
/// `[1 − 1/(k+1)², 1]`. The jump at t = 1 is carried by `terminal_input = I`.
pub fn heat_demo_spec(n_modes: usize, with_mask: bool) -> Result<SystemSpec> {
    if n_modes == 0 {
        return Err(Error::validation("n_modes", "at least one mode is required"));
    }
    let eig = DVector::from_fn(n_modes, |k, _| -(((k + 1) * (k + 1)) as f64));
    let id = DMatrix::<f64>::identity(n_modes, n_modes);
    let mut spec = SystemSpec::new(2.0 / 3.0, 1.0, DMatrix::from_diagonal(&eig), id.clone())
        .with_impulse(0.5, id.clone(), id.clone());
    spec.terminal_input = Some(id);
    if with_mask {
        spec.mask = (0..n_modes)
            .map(|k| {
                let kk = (k + 1) as f64;
                ChannelWindow { channel: k, start: 1.0 - 1.0 / (kk * kk), end: 1.0 }
            })
            .collect();
    }
    validate(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> SystemSpec {
        SystemSpec::new(
            0.8,
            2.0,
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .with_impulse(1.0, DMatrix::identity(2, 2) * 0.3, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]))
    }

    #[test]
    fn accepts_well_formed_spec() {
        let s = two_state();
        assert_eq!(validate(&s).unwrap(), s);
    }

    #[test]
    fn rejects_impulse_at_horizon() {
        let mut s = two_state();
        s.impulses[0].time = 2.0;
        let err = validate(&s).unwrap_err();
        assert!(err.to_string().contains("impulses[0].time"), "{err}");
    }

    #[test]
    fn rejects_order_above_one() {
        let mut s = two_state();
        s.alpha = 1.2;
        assert!(matches!(validate(&s), Err(Error::Validation { field, .. }) if field == "alpha"));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut s = two_state();
        s.impulses[0].input = DMatrix::zeros(2, 2);
        assert!(matches!(validate(&s), Err(Error::Validation { field, .. }) if field == "impulses[0].E"));
    }

    #[test]
    fn sorts_impulses() {
        let s = two_state().with_impulse(0.5, DMatrix::zeros(2, 2), DMatrix::zeros(2, 1));
        let v = validate(&s).unwrap();
        assert_eq!(v.breakpoints(), vec![0.0, 0.5, 1.0, 2.0]);
        assert_eq!(validate(&v).unwrap(), v);
    }

    #[test]
    fn heat_demo_windows() {
        let s = heat_demo_spec(3, true).unwrap();
        assert_eq!(s.mask[1], ChannelWindow { channel: 1, start: 0.75, end: 1.0 });
        assert!((s.mask[2].start - 8.0 / 9.0).abs() < 1e-16);
        assert_eq!(s.mask[0].start, 0.0);
        assert_eq!(s.impulses[0].time, 0.5);
        assert_eq!(s.impulses[0].jump, DMatrix::identity(3, 3));
        let one = heat_demo_spec(1, false).unwrap();
        assert_eq!(one.a[(0, 0)], -1.0);
        assert!((one.alpha - 2.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn active_ranges_merge_and_clip() {
        let mut s = two_state();
        s.mask = vec![
            ChannelWindow { channel: 0, start: 0.2, end: 0.6 },
            ChannelWindow { channel: 0, start: 0.5, end: 0.9 },
        ];
        assert_eq!(s.active_ranges(0, 0.0, 1.0), vec![(0.2, 0.9)]);
        assert_eq!(s.active_ranges(0, 1.0, 2.0), vec![]);
        assert_eq!(s.mask_breaks(0.0, 1.0), vec![0.2, 0.5, 0.6, 0.9]);
        assert!(!s.channel_active(0, 0.1) && s.channel_active(0, 0.6));
    }
}
