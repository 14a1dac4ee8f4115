use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid 0 = t₀ < t₁ < … < t_M = T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 steps, got {steps}"
            )));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, M + 1.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.t(k))
    }

    pub fn ensure_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{what}: (T = {}, M = {}) vs (T = {}, M = {})",
                self.horizon, self.steps, other.horizon, other.steps
            )));
        }
        Ok(())
    }
}

/// Composite Simpson rule on uniformly spaced samples; an odd number of
/// intervals closes with the 3/8 rule on the last three.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let m = values.len().saturating_sub(1);
    match m {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        2 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        3 => 3.0 * h / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3]),
        _ => {
            let even_part = if m.is_multiple_of(2) { m } else { m - 3 };
            let mut acc = values[0] + values[even_part];
            for (i, v) in values.iter().enumerate().take(even_part).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = acc * h / 3.0;
            if even_part < m {
                let w = &values[even_part..];
                total += 3.0 * h / 8.0 * (w[0] + 3.0 * w[1] + 3.0 * w[2] + w[3]);
            }
            total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_exact() {
        let g = TimeGrid::new(10.0, 3).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(3), 10.0);
        assert_eq!(g.len(), 4);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
    }

    #[test]
    fn simpson_exact_on_cubics() {
        for m in [2usize, 3, 4, 5, 8, 9] {
            let h = 1.0 / m as f64;
            let v: Vec<f64> = (0..=m).map(|k| (k as f64 * h).powi(3)).collect();
            assert!((simpson(&v, h) - 0.25).abs() < 1e-14, "m = {m}");
        }
    }
}
