//! Truncated equilibrium distributions on `{0..=T}^2`.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Coordinates {
    /// `(k, l) = (min(Q1, Q2), |Q1 - Q2|)`
    Transformed,
    /// `(Q1, Q2)`
    Original,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityGrid {
    truncation: usize,
    coordinates: Coordinates,
    values: Vec<f64>,
}

impl ProbabilityGrid {
    pub fn zeros(truncation: usize, coordinates: Coordinates) -> Self {
        let n = truncation + 1;
        Self {
            truncation,
            coordinates,
            values: vec![0.0; n * n],
        }
    }

    pub fn from_fn(
        truncation: usize,
        coordinates: Coordinates,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut g = Self::zeros(truncation, coordinates);
        for k in 0..=truncation {
            for l in 0..=truncation {
                g.set(k, l, f(k, l));
            }
        }
        g
    }

    /// Row-major values, `values[k * (T + 1) + l]`.
    pub fn from_values(truncation: usize, coordinates: Coordinates, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), (truncation + 1) * (truncation + 1));
        Self {
            truncation,
            coordinates,
            values,
        }
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn coordinates(&self) -> Coordinates {
        self.coordinates
    }

    pub fn is_transformed(&self) -> bool {
        self.coordinates == Coordinates::Transformed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Zero outside the grid.
    pub fn get(&self, k: usize, l: usize) -> f64 {
        if k > self.truncation || l > self.truncation {
            0.0
        } else {
            self.values[k * (self.truncation + 1) + l]
        }
    }

    pub fn set(&mut self, k: usize, l: usize, v: f64) {
        let n = self.truncation + 1;
        self.values[k * n + l] = v;
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn normalize(&mut self) {
        let s = self.total();
        self.values.iter_mut().for_each(|v| *v /= s);
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Iterates `(k, l, prob)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.truncation + 1;
        self.values
            .iter()
            .enumerate()
            .map(move |(s, &v)| (s / n, s % n, v))
    }

    /// Max-norm distance over the common square of two grids in the same coordinates.
    pub fn max_abs_diff(&self, other: &ProbabilityGrid) -> f64 {
        assert_eq!(self.coordinates, other.coordinates);
        let t = self.truncation.min(other.truncation);
        let mut m = 0.0f64;
        for k in 0..=t {
            for l in 0..=t {
                m = m.max((self.get(k, l) - other.get(k, l)).abs());
            }
        }
        m
    }

    /// Spreads each `(k, l)` with `l > 0` evenly over its two preimages.
    pub fn to_original(&self) -> ProbabilityGrid {
        assert!(self.is_transformed());
        ProbabilityGrid::from_fn(self.truncation, Coordinates::Original, |i, j| {
            let (k, l) = crate::model::transform_state(i, j);
            if l == 0 {
                self.get(k, l)
            } else {
                self.get(k, l) / 2.0
            }
        })
    }

    /// Push-forward of an original-coordinate grid. States whose image leaves
    /// the square are dropped.
    pub fn to_transformed(&self) -> ProbabilityGrid {
        assert!(!self.is_transformed());
        let mut g = ProbabilityGrid::zeros(self.truncation, Coordinates::Transformed);
        for (i, j, v) in self.iter() {
            let (k, l) = crate::model::transform_state(i, j);
            let n = self.truncation + 1;
            g.values[k * n + l] += v;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_original_coordinates() {
        let g = ProbabilityGrid::from_fn(5, Coordinates::Transformed, |k, l| {
            if k + l <= 5 {
                (1 + k * 7 + l) as f64
            } else {
                0.0
            }
        });
        let o = g.to_original();
        for i in 0..=5 {
            for j in 0..=5 {
                assert_eq!(o.get(i, j), o.get(j, i));
            }
        }
        let back = o.to_transformed();
        assert_eq!(back.max_abs_diff(&g), 0.0);
    }

    #[test]
    fn out_of_range_is_zero() {
        let g = ProbabilityGrid::from_fn(2, Coordinates::Transformed, |_, _| 1.0);
        assert_eq!(g.get(3, 0), 0.0);
        assert_eq!(g.total(), 9.0);
    }
}
