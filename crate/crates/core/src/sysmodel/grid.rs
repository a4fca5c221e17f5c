use std::ops::RangeInclusive;

use super::SystemSpec;
use crate::error::{Error, Result};

/// Strictly increasing time nodes covering `[0, b]` that contain every impulse instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    /// Index of each breakpoint `0, t_1, …, t_n, b` in `nodes`.
    breaks: Vec<usize>,
    /// Per interval: nodes are exactly `t_k + j·h`, which lets callers form
    /// time offsets by index arithmetic.
    uniform: Vec<bool>,
}

fn uniform_nodes(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    let h = (hi - lo) / cells as f64;
    let mut v: Vec<f64> = (0..cells).map(|j| lo + j as f64 * h).collect();
    v.push(hi);
    v
}

impl TimeGrid {
    /// `cells` equal cells on every inter-impulse interval.
    pub fn uniform(spec: &SystemSpec, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::validation("grid", "at least one cell per interval is required"));
        }
        let bp = spec.breakpoints();
        let mut nodes = vec![0.0];
        let mut breaks = vec![0];
        for w in bp.windows(2) {
            nodes.extend_from_slice(&uniform_nodes(w[0], w[1], cells)[1..]);
            breaks.push(nodes.len() - 1);
        }
        Ok(Self { nodes, breaks, uniform: vec![true; bp.len() - 1] })
    }

    /// Grid from explicit nodes; must start at 0, end at b, increase strictly and
    /// contain every impulse time exactly.
    pub fn from_nodes(spec: &SystemSpec, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 || *nodes.last().unwrap() != spec.horizon {
            return Err(Error::validation("grid", format!("nodes must start at 0 and end at {}", spec.horizon)));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::validation("grid", "nodes must be strictly increasing"));
        }
        let bp = spec.breakpoints();
        let mut breaks = Vec::with_capacity(bp.len());
        for &t in &bp {
            match nodes.binary_search_by(|x| x.total_cmp(&t)) {
                Ok(i) => breaks.push(i),
                Err(_) => return Err(Error::validation("grid", format!("impulse time {t} is not a grid node"))),
            }
        }
        let uniform = breaks
            .windows(2)
            .map(|w| {
                let cells = w[1] - w[0];
                uniform_nodes(nodes[w[0]], nodes[w[1]], cells) == nodes[w[0]..=w[1]]
            })
            .collect();
        Ok(Self { nodes, breaks, uniform })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn interval_count(&self) -> usize {
        self.breaks.len() - 1
    }

    /// Node indices of interval k, both ends included.
    pub fn interval(&self, k: usize) -> RangeInclusive<usize> {
        self.breaks[k]..=self.breaks[k + 1]
    }

    pub fn break_index(&self, k: usize) -> usize {
        self.breaks[k]
    }

    /// Cell width when interval k is uniform.
    pub fn uniform_step(&self, k: usize) -> Option<f64> {
        if self.uniform[k] {
            let r = self.interval(k);
            Some((self.nodes[*r.end()] - self.nodes[*r.start()]) / (r.end() - r.start()) as f64)
        } else {
            None
        }
    }

    /// Interval index containing time `t` under the half-open convention `(t_k, t_{k+1}]`
    /// (t = 0 belongs to the first interval).
    pub fn interval_of_time(&self, t: f64) -> usize {
        for k in 0..self.interval_count() {
            if t <= self.nodes[self.breaks[k + 1]] {
                return k;
            }
        }
        self.interval_count() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn spec() -> SystemSpec {
        SystemSpec::new(0.7, 1.0, DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0)).with_impulse(
            0.3,
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        )
    }

    #[test]
    fn uniform_grid_layout() {
        let g = TimeGrid::uniform(&spec(), 4).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.interval(1), 4..=8);
        assert_eq!(g.nodes()[4], 0.3);
        assert!(g.uniform_step(0).is_some());
        let again = TimeGrid::from_nodes(&spec(), g.nodes().to_vec()).unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn explicit_grid_must_contain_impulses() {
        assert!(TimeGrid::from_nodes(&spec(), vec![0.0, 0.5, 1.0]).is_err());
        let g = TimeGrid::from_nodes(&spec(), vec![0.0, 0.1, 0.3, 0.9, 1.0]).unwrap();
        assert!(g.uniform_step(0).is_none());
        assert_eq!(g.interval_of_time(0.3), 0);
        assert_eq!(g.interval_of_time(0.31), 1);
    }
}
