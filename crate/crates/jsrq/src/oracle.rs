//! Ground truth by brute force: the chain truncated to `{0..=T}^2` and its
//! stationary vector by GTH state reduction.
//!
//! Steps that would leave the square are turned into self-loops, so rows stay
//! stochastic. Both chains only move one step in each coordinate (two in `l`
//! for the transformed chain), so with row-major state numbering the matrix is
//! banded with half-bandwidth `T + 2` and the reduction never fills outside the
//! band.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Coordinates, ProbabilityGrid};
use crate::model::{transformed_steps, transition_distribution, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    Original,
    Transformed,
}

#[derive(Debug, Clone)]
pub struct TruncatedChain {
    truncation: usize,
    variant: Variant,
    /// Sparse rows: `(destination, probability)`, destinations merged.
    rows: Vec<Vec<(usize, f64)>>,
}

impl TruncatedChain {
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        a * (self.truncation + 1) + b
    }

    pub fn state(&self, s: usize) -> (usize, usize) {
        (s / (self.truncation + 1), s % (self.truncation + 1))
    }

    fn bandwidth(&self) -> usize {
        self.truncation + 2
    }

    /// `pi P` for a row vector `pi`.
    pub fn apply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; pi.len()];
        for (s, row) in self.rows.iter().enumerate() {
            for &(d, w) in row {
                out[d] += pi[s] * w;
            }
        }
        out
    }

    fn coordinates(&self) -> Coordinates {
        match self.variant {
            Variant::Original => Coordinates::Original,
            Variant::Transformed => Coordinates::Transformed,
        }
    }
}

pub fn build(p: &ModelParams, truncation: usize, variant: Variant) -> Result<TruncatedChain> {
    if truncation < 3 {
        return Err(Error::Config(format!(
            "truncation must be at least 3, got {truncation}"
        )));
    }
    let side = truncation + 1;
    let mut rows = Vec::with_capacity(side * side);
    for a in 0..side {
        for b in 0..side {
            let here = a * side + b;
            let moves: Vec<((usize, usize), f64)> = match variant {
                Variant::Original => transition_distribution((a, b), p)
                    .steps
                    .into_iter()
                    .map(|s| {
                        let to = ((a as i64 + s.di) as usize, (b as i64 + s.dj) as usize);
                        (to, s.prob)
                    })
                    .collect(),
                Variant::Transformed => transformed_steps(a, b, p),
            };
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(moves.len());
            for ((x, y), w) in moves {
                let to = if x > truncation || y > truncation {
                    here
                } else {
                    x * side + y
                };
                match row.iter_mut().find(|(d, _)| *d == to) {
                    Some(e) => e.1 += w,
                    None => row.push((to, w)),
                }
            }
            rows.push(row);
        }
    }
    Ok(TruncatedChain {
        truncation,
        variant,
        rows,
    })
}

/// First state from which the origin cannot be reached. States the origin
/// cannot reach are allowed: they are transient and get probability zero.
/// The far corner of the transformed square is always of that kind, since
/// it can only be entered from outside the square.
fn find_trapped(chain: &TruncatedChain) -> Option<usize> {
    let n = chain.len();
    let mut back: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, row) in chain.rows.iter().enumerate() {
        for &(d, w) in row {
            if w > 0.0 && d != s {
                back[d].push(s);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(s) = queue.pop_front() {
        for &d in &back[s] {
            if !seen[d] {
                seen[d] = true;
                queue.push_back(d);
            }
        }
    }
    (0..n).find(|&s| !seen[s])
}

/// States reachable from the origin.
pub fn reachable_from_origin(chain: &TruncatedChain) -> Vec<bool> {
    let n = chain.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(s) = queue.pop_front() {
        for &(d, w) in &chain.rows[s] {
            if w > 0.0 && !seen[d] {
                seen[d] = true;
                queue.push_back(d);
            }
        }
    }
    seen
}

/// Stationary distribution by banded GTH elimination.
pub fn stationary(chain: &TruncatedChain) -> Result<ProbabilityGrid> {
    if let Some(s) = find_trapped(chain) {
        return Err(Error::Reducible(chain.state(s)));
    }
    let n = chain.len();
    let bw = chain.bandwidth();
    let w = 2 * bw + 1;
    let at = |r: usize, c: usize| r * w + c + bw - r;
    let mut a = vec![0.0; n * w];
    for (s, row) in chain.rows.iter().enumerate() {
        for &(d, p) in row {
            if d != s {
                a[at(s, d)] += p;
            }
        }
    }
    let mut out_mass = vec![0.0; n];
    for k in (1..n).rev() {
        let lo = k.saturating_sub(bw);
        let s: f64 = (lo..k).map(|j| a[at(k, j)]).sum();
        if s <= 0.0 {
            return Err(Error::Reducible(chain.state(k)));
        }
        out_mass[k] = s;
        for i in lo..k {
            let f = a[at(i, k)] / s;
            if f == 0.0 {
                continue;
            }
            for j in lo..k {
                if j != i {
                    a[at(i, j)] += f * a[at(k, j)];
                }
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        let lo = k.saturating_sub(bw);
        let inflow: f64 = (lo..k).map(|i| pi[i] * a[at(i, k)]).sum();
        pi[k] = inflow / out_mass[k];
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(ProbabilityGrid::from_values(
        chain.truncation,
        chain.coordinates(),
        pi,
    ))
}

/// Stationary vector by repeated multiplication from the uniform vector.
pub fn power_iteration(chain: &TruncatedChain, iterations: usize) -> Vec<f64> {
    let n = chain.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..iterations {
        pi = chain.apply(&pi);
    }
    pi
}

/// Smallest `T >= 3` with `rho^(2T) < epsilon (1 - rho^2)`.
pub fn choose_truncation(p: &ModelParams, epsilon: f64) -> Result<usize> {
    p.require_stable()?;
    let r2 = p.rho() * p.rho();
    let bound = epsilon * (1.0 - r2);
    let mut t = 3usize;
    while r2.powi(t as i32) >= bound {
        t += 1;
    }
    Ok(t)
}

/// Transformed-chain stationary distribution with the truncation chosen for `epsilon`.
pub fn solve(p: &ModelParams, epsilon: f64) -> Result<ProbabilityGrid> {
    let t = choose_truncation(p, epsilon)?;
    stationary(&build(p, t, Variant::Transformed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_stochastic() {
        let p = ModelParams::new(0.37, 0.41).unwrap();
        for v in [Variant::Original, Variant::Transformed] {
            let c = build(&p, 10, v).unwrap();
            for s in 0..c.len() {
                let sum: f64 = c.row(s).iter().map(|e| e.1).sum();
                assert!((sum - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn truncation_examples() {
        let p = ModelParams::from_rho(0.4, 0.5).unwrap();
        assert_eq!(choose_truncation(&p, 1e-10).unwrap(), 13);
        let p = ModelParams::new(1e-9, 0.5).unwrap();
        assert_eq!(choose_truncation(&p, 1e-10).unwrap(), 3);
        assert!(choose_truncation(&ModelParams::new(0.5, 0.5).unwrap(), 1e-10).is_err());
        assert!(build(&p, 2, Variant::Original).is_err());
    }

    #[test]
    fn stationary_is_invariant() {
        let p = ModelParams::new(0.3, 0.5).unwrap();
        for v in [Variant::Original, Variant::Transformed] {
            let c = build(&p, 12, v).unwrap();
            let g = stationary(&c).unwrap();
            let next = c.apply(g.values());
            let err = next
                .iter()
                .zip(g.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "{v:?}: {err:e}");
        }
    }

    #[test]
    fn nearly_empty_system() {
        let p = ModelParams::new(0.001, 0.5).unwrap();
        let g = solve(&p, 1e-12).unwrap();
        assert!(g.get(0, 0) > 0.99);
    }
}
