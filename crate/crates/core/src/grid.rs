//! Normalised-time grid and trapezoidal quadrature.
//!
//! Nodes sit at fixed fractions `s_i ∈ [0, 1]` of the horizon, so when the
//! terminal time evolves the physical node times `t0 + s_i (t_f - t0)`
//! stretch while node count and indexing stay fixed.

use std::ops::{AddAssign, Mul};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    s: Vec<f64>,
    t0: f64,
    tf: f64,
}

impl TimeGrid {
    /// Uniform grid with `n` nodes on `[t0, tf]`.
    pub fn uniform(n: usize, t0: f64, tf: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n}")));
        }
        let s = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Self::from_fractions(s, t0, tf)
    }

    /// Grid from arbitrary normalised fractions (`s_0 = 0`, `s_{N-1} = 1`, strictly increasing).
    pub fn from_fractions(s: Vec<f64>, t0: f64, tf: f64) -> Result<Self> {
        if s.len() < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {}", s.len())));
        }
        if s[0] != 0.0 || s[s.len() - 1] != 1.0 || s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("fractions must rise strictly from 0 to 1".into()));
        }
        let mut grid = Self { s, t0, tf: t0 };
        grid.set_tf(tf)?;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn set_tf(&mut self, tf: f64) -> Result<()> {
        if !(tf > self.t0) || !tf.is_finite() {
            return Err(Error::InvalidGrid(format!("terminal time {tf} must exceed t0 = {}", self.t0)));
        }
        self.tf = tf;
        Ok(())
    }

    pub fn fractions(&self) -> &[f64] {
        &self.s
    }

    pub fn fraction(&self, i: usize) -> f64 {
        self.s[i]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.s[i] * (self.tf - self.t0)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Length of interval `i` (between nodes `i` and `i + 1`).
    pub fn spacing(&self, i: usize) -> f64 {
        (self.s[i + 1] - self.s[i]) * (self.tf - self.t0)
    }

    /// Trapezoid weights for nodes `from..=to`; entry `k` belongs to node `from + k`.
    pub fn weights(&self, from: usize, to: usize) -> Result<Vec<f64>> {
        self.check_range(from, to)?;
        let mut w = vec![0.0; to - from + 1];
        for i in from..to {
            let h = 0.5 * self.spacing(i);
            w[i - from] += h;
            w[i + 1 - from] += h;
        }
        Ok(w)
    }

    /// Weight of node `k` in the trapezoid rule over nodes `from..=to`
    /// (zero outside the range).
    pub fn weight(&self, from: usize, to: usize, k: usize) -> f64 {
        if from == to || k < from || k > to {
            return 0.0;
        }
        let mut w = 0.0;
        if k > from {
            w += 0.5 * self.spacing(k - 1);
        }
        if k < to {
            w += 0.5 * self.spacing(k);
        }
        w
    }

    /// Composite trapezoid integral of nodal `values` between nodes `from` and `to`.
    pub fn quad<T>(&self, values: &[T], from: usize, to: usize) -> Result<T>
    where
        T: Clone + AddAssign + Mul<f64, Output = T>,
    {
        self.check_range(from, to)?;
        if values.len() != self.len() {
            return Err(Error::Dimension(format!("{} values for {} nodes", values.len(), self.len())));
        }
        let mut acc = values[from].clone() * 0.0;
        for i in from..to {
            let h = 0.5 * self.spacing(i);
            acc += values[i].clone() * h;
            acc += values[i + 1].clone() * h;
        }
        Ok(acc)
    }

    fn check_range(&self, from: usize, to: usize) -> Result<()> {
        if from > to || to >= self.len() {
            return Err(Error::QuadRange { from, to, len: self.len() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn example_grids() {
        let g = TimeGrid::uniform(41, 0.0, 8.0).unwrap();
        assert_eq!(g.len(), 41);
        assert_abs_diff_eq!(g.time(1), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(g.time(40), 8.0, epsilon = 1e-15);

        let g = TimeGrid::uniform(3, 0.0, 1.0).unwrap();
        assert_eq!(g.times(), vec![0.0, 0.5, 1.0]);

        let g = TimeGrid::uniform(101, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(g.spacing(37), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(TimeGrid::uniform(2, 0.0, 1.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(TimeGrid::uniform(5, 1.0, 1.0), Err(Error::InvalidGrid(_))));
        assert!(matches!(TimeGrid::uniform(5, 1.0, 0.5), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn quad_examples() {
        let g = TimeGrid::uniform(41, 0.0, 8.0).unwrap();
        assert_abs_diff_eq!(g.quad(&vec![1.0; 41], 0, 40).unwrap(), 8.0, epsilon = 1e-13);

        let g = TimeGrid::uniform(11, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(g.quad(&g.times(), 0, 10).unwrap(), 0.5, epsilon = 1e-15);

        let g = TimeGrid::uniform(101, 0.0, std::f64::consts::PI).unwrap();
        let v: Vec<f64> = g.times().iter().map(|t| t.sin()).collect();
        assert_abs_diff_eq!(g.quad(&v, 0, 100).unwrap(), 2.0, epsilon = 1e-3);
    }

    #[test]
    fn quad_range_errors() {
        let g = TimeGrid::uniform(5, 0.0, 1.0).unwrap();
        assert!(matches!(g.quad(&[0.0; 5], 3, 2), Err(Error::QuadRange { .. })));
        assert!(matches!(g.quad(&[0.0; 5], 0, 5), Err(Error::QuadRange { .. })));
        assert_eq!(g.quad(&[3.0; 5], 2, 2).unwrap(), 0.0);
    }

    #[test]
    fn weights_agree_with_weight() {
        let g = TimeGrid::uniform(9, 0.5, 2.0).unwrap();
        let w = g.weights(2, 7).unwrap();
        for k in 0..9 {
            let expect = if (2..=7).contains(&k) { w[k - 2] } else { 0.0 };
            assert_abs_diff_eq!(g.weight(2, 7, k), expect, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(w.iter().sum::<f64>(), g.time(7) - g.time(2), epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn quad_is_additive(n in 3usize..60, tf in 0.1f64..20.0, seed in 0u64..1000) {
            let g = TimeGrid::uniform(n, 0.0, tf).unwrap();
            let v: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 997) as f64 / 97.0 - 5.0).collect();
            let b = n / 2;
            let whole = g.quad(&v, 0, n - 1).unwrap();
            let split = g.quad(&v, 0, b).unwrap() + g.quad(&v, b, n - 1).unwrap();
            prop_assert!((whole - split).abs() <= 1e-12 * (1.0 + whole.abs()));
        }

        #[test]
        fn quad_exact_on_affine(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 3usize..50, tf in 0.5f64..10.0) {
            let g = TimeGrid::uniform(n, 0.0, tf).unwrap();
            let v: Vec<f64> = g.times().iter().map(|t| a + b * t).collect();
            let exact = a * tf + 0.5 * b * tf * tf;
            prop_assert!((g.quad(&v, 0, n - 1).unwrap() - exact).abs() <= 1e-10 * (1.0 + exact.abs()));
        }

        #[test]
        fn weights_nonnegative_and_sum_to_span(n in 3usize..80, tf in 0.1f64..30.0) {
            let g = TimeGrid::uniform(n, 0.0, tf).unwrap();
            let w = g.weights(0, n - 1).unwrap();
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - tf).abs() <= 1e-12 * tf);
        }
    }
}
