//! System parameters, the one-step law of the two-relay chain and the balance
//! equations of its (min, difference) transform.
//!
//! States of the original chain are queue-length pairs `(i, j)`. The
//! transformed chain lives on `(k, l) = (min(i, j), |i - j|)`; because the model
//! is symmetric this loses nothing and turns the walk into a quarter-plane
//! walk with a single horizontal and a single vertical boundary.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ProbabilityGrid;

/// Arrival probability `lambda` and per-relay attempt probability `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    lambda: f64,
    a: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, a: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie strictly inside (0, 1), got {lambda}"
            )));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "a must lie strictly inside (0, 1), got {a}"
            )));
        }
        Ok(Self { lambda, a })
    }

    /// Parameters with load `rho`; the load is linear-fractional in lambda so
    /// this is exact.
    pub fn from_rho(rho: f64, a: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "load must be positive, got {rho}"
            )));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "a must lie strictly inside (0, 1), got {a}"
            )));
        }
        let aa = a * (1.0 - a);
        let s2 = a * a + (1.0 - a) * (1.0 - a);
        Self::new(2.0 * rho * aa / (s2 + 2.0 * rho * aa), a)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn abar(&self) -> f64 {
        1.0 - self.a
    }

    pub fn lbar(&self) -> f64 {
        1.0 - self.lambda
    }

    pub fn rho(&self) -> f64 {
        load(self)
    }

    /// `a(1-a)`: the probability that exactly a given one of two busy relays transmits.
    pub(crate) fn aa(&self) -> f64 {
        self.a * self.abar()
    }

    /// `a^2 + (1-a)^2`: both or neither relay attempts.
    pub(crate) fn s2(&self) -> f64 {
        self.a * self.a + self.abar() * self.abar()
    }

    /// Self-transition probability of the transformed chain in the interior.
    pub(crate) fn p0(&self) -> f64 {
        self.lbar() * self.s2() + self.lambda * self.aa()
    }

    pub(crate) fn require_stable(&self) -> Result<()> {
        if is_stable(self).stable {
            Ok(())
        } else {
            Err(Error::Unstable {
                lambda: self.lambda,
                a: self.a,
                rho: self.rho(),
            })
        }
    }
}

pub fn load(p: &ModelParams) -> f64 {
    p.lambda * p.s2() / (2.0 * p.lbar() * p.aa())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stability {
    pub stable: bool,
    /// `lambda - 2a(1-a)`; negative iff stable.
    pub margin: f64,
}

pub fn is_stable(p: &ModelParams) -> Stability {
    let margin = p.lambda - 2.0 * p.aa();
    Stability {
        stable: margin < 0.0,
        margin,
    }
}

/// Regions of spatial homogeneity of the original chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    /// `i > j > 0`
    H,
    /// `j > i > 0`
    V,
    /// `i > 0 = j`
    Hp,
    /// `j > 0 = i`
    Vp,
    /// `i = j > 0`
    D,
    /// origin
    O,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Step {
    pub di: i64,
    pub dj: i64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionStep {
    pub region: Region,
    pub steps: Vec<Step>,
}

pub fn region_of(i: usize, j: usize) -> Region {
    use std::cmp::Ordering::*;
    match (i.cmp(&j), i, j) {
        (Equal, 0, _) => Region::O,
        (Equal, _, _) => Region::D,
        (Greater, _, 0) => Region::Hp,
        (Greater, _, _) => Region::H,
        (Less, 0, _) => Region::Vp,
        (Less, _, _) => Region::V,
    }
}

fn step(di: i64, dj: i64, prob: f64) -> Step {
    Step { di, dj, prob }
}

/// One-step law of a region, as increments of `(i, j)`.
pub fn region_steps(region: Region, p: &ModelParams) -> RegionStep {
    let (l, lb, a, ab) = (p.lambda, p.lbar(), p.a, p.abar());
    let (aa, s2) = (p.aa(), p.s2());
    let steps = match region {
        Region::H => vec![
            step(0, 1, l * s2),
            step(0, -1, lb * aa),
            step(-1, 0, lb * aa),
            step(-1, 1, l * aa),
            step(0, 0, lb * s2 + l * aa),
        ],
        Region::Hp => vec![
            step(0, 1, l * s2),
            step(-1, 0, lb * a),
            step(-1, 1, l * aa),
            step(0, 0, lb * ab + l * aa),
        ],
        Region::D => vec![
            step(1, 0, l * s2 / 2.0),
            step(0, 1, l * s2 / 2.0),
            step(0, -1, lb * aa),
            step(-1, 0, lb * aa),
            step(1, -1, l * aa / 2.0),
            step(-1, 1, l * aa / 2.0),
            step(0, 0, lb * s2 + l * aa),
        ],
        Region::O => vec![
            step(1, 0, l * ab / 2.0),
            step(0, 1, l * ab / 2.0),
            step(0, 0, lb + l * a),
        ],
        Region::V | Region::Vp => {
            let mirror = if region == Region::V { Region::H } else { Region::Hp };
            region_steps(mirror, p)
                .steps
                .into_iter()
                .map(|s| step(s.dj, s.di, s.prob))
                .collect()
        }
    };
    RegionStep { region, steps }
}

pub fn transition_distribution(state: (usize, usize), p: &ModelParams) -> RegionStep {
    region_steps(region_of(state.0, state.1), p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftVectors {
    pub h: (f64, f64),
    pub v: (f64, f64),
    pub hp: (f64, f64),
    pub vp: (f64, f64),
    pub d: (f64, f64),
}

pub fn drift_vectors(p: &ModelParams) -> DriftVectors {
    let (l, lb, a, ab) = (p.lambda, p.lbar(), p.a, p.abar());
    let aa = p.aa();
    let h = (-aa, l - aa);
    let hp = (-a * (lb + l * ab), l * (p.s2() + aa));
    let d = ((h.0 + h.1) / 2.0, (h.0 + h.1) / 2.0);
    DriftVectors {
        h,
        v: (h.1, h.0),
        hp,
        vp: (hp.1, hp.0),
        d,
    }
}

pub fn transform_state(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.abs_diff(j))
}

/// Outgoing one-step law of the transformed chain from `(k, l)`.
pub fn transformed_steps(k: usize, l: usize, p: &ModelParams) -> Vec<((usize, usize), f64)> {
    let (lm, lb, a, ab) = (p.lambda, p.lbar(), p.a, p.abar());
    let (aa, s2) = (p.aa(), p.s2());
    match (k, l) {
        (0, 0) => vec![((0, 1), lm * ab), ((0, 0), lb + lm * a)],
        (0, 1) => vec![((1, 0), lm * s2), ((0, 0), lb * a), ((0, 1), lb * ab + 2.0 * lm * aa)],
        (0, l) => vec![
            ((1, l - 1), lm * s2),
            ((0, l - 1), lb * a),
            ((1, l - 2), lm * aa),
            ((0, l), lb * ab + lm * aa),
        ],
        (k, 0) => vec![
            ((k, 1), lm * s2),
            ((k - 1, 1), 2.0 * lb * aa),
            ((k - 1, 2), lm * aa),
            ((k, 0), lb * s2 + lm * aa),
        ],
        (k, 1) => vec![
            ((k + 1, 0), lm * s2),
            ((k - 1, 2), lb * aa),
            ((k, 0), lb * aa),
            ((k, 1), lb * s2 + 2.0 * lm * aa),
        ],
        (k, l) => vec![
            ((k + 1, l - 1), lm * s2),
            ((k - 1, l + 1), lb * aa),
            ((k, l - 1), lb * aa),
            ((k + 1, l - 2), lm * aa),
            ((k, l), lb * s2 + lm * aa),
        ],
    }
}

/// Incoming stencil of the balance equation at `(k, l)`: the equation reads
/// `pi(k, l) = sum of prob * pi(source)` over the returned pairs.
pub fn balance_stencil(k: usize, l: usize, p: &ModelParams) -> Vec<((usize, usize), f64)> {
    let (lm, lb, a, ab) = (p.lambda, p.lbar(), p.a, p.abar());
    let (aa, s2, p0) = (p.aa(), p.s2(), p.p0());
    match (k, l) {
        (0, 0) => vec![((0, 0), lb + lm * a), ((0, 1), lb * a)],
        (0, 1) => vec![
            ((0, 1), lb * ab + 2.0 * lm * aa),
            ((0, 2), lb * a),
            ((1, 0), 2.0 * lb * aa),
            ((0, 0), lm * ab),
        ],
        (0, 2) => vec![
            ((0, 2), lb * ab + lm * aa),
            ((0, 3), lb * a),
            ((1, 1), lb * aa),
            ((1, 0), lm * aa),
        ],
        (0, l) => vec![
            ((0, l), lb * ab + lm * aa),
            ((0, l + 1), lb * a),
            ((1, l - 1), lb * aa),
        ],
        (k, 0) => vec![
            ((k, 0), p0),
            ((k, 1), lb * aa),
            ((k - 1, 1), lm * s2),
            ((k - 1, 2), lm * aa),
        ],
        (k, 1) => vec![
            ((k, 1), lb * s2 + 2.0 * lm * aa),
            ((k, 2), lb * aa),
            ((k - 1, 2), lm * s2),
            ((k - 1, 3), lm * aa),
            ((k, 0), lm * s2),
            ((k + 1, 0), 2.0 * lb * aa),
        ],
        (k, 2) => vec![
            ((k, 2), p0),
            ((k, 3), lb * aa),
            ((k - 1, 3), lm * s2),
            ((k - 1, 4), lm * aa),
            ((k + 1, 0), lm * aa),
            ((k + 1, 1), lb * aa),
        ],
        (k, l) => vec![
            ((k, l), p0),
            ((k, l + 1), lb * aa),
            ((k - 1, l + 1), lm * s2),
            ((k - 1, l + 2), lm * aa),
            ((k + 1, l - 1), lb * aa),
        ],
    }
}

/// `pi(k, l) - sum(prob * pi(source))` using `value` for the probabilities.
pub(crate) fn balance_defect(
    k: usize,
    l: usize,
    p: &ModelParams,
    mut value: impl FnMut(usize, usize) -> f64,
) -> f64 {
    let inflow: f64 = balance_stencil(k, l, p)
        .into_iter()
        .map(|((sk, sl), w)| w * value(sk, sl))
        .sum();
    value(k, l) - inflow
}

/// Balance-equation residuals over a transformed-coordinate grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGrid {
    size: usize,
    values: Vec<Option<f64>>,
}

impl ResidualGrid {
    /// `None` where the equation's stencil leaves the grid.
    pub fn get(&self, k: usize, l: usize) -> Option<f64> {
        self.values[k * self.size + l]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, &r| m.max(r))
    }

    /// Largest residual over the states with `k, l <= limit`.
    pub fn max_within(&self, limit: usize) -> f64 {
        let mut m = 0.0f64;
        for k in 0..=limit.min(self.size - 1) {
            for l in 0..=limit.min(self.size - 1) {
                if let Some(r) = self.get(k, l) {
                    m = m.max(r);
                }
            }
        }
        m
    }

    pub fn count(&self) -> usize {
        self.values.iter().flatten().count()
    }
}

pub fn balance_residuals(grid: &ProbabilityGrid, p: &ModelParams) -> Result<ResidualGrid> {
    if !grid.is_transformed() {
        return Err(Error::Dimension(
            "balance residuals need a grid in (min, difference) coordinates".into(),
        ));
    }
    let t = grid.truncation();
    if t < 4 {
        return Err(Error::Dimension(format!(
            "grid with truncation {t} is too small for any interior stencil"
        )));
    }
    let size = t + 1;
    let mut values = vec![None; size * size];
    for k in 0..size {
        for l in 0..size {
            let stencil = balance_stencil(k, l, p);
            if stencil.iter().all(|&((sk, sl), _)| sk <= t && sl <= t) {
                let d = balance_defect(k, l, p, |a, b| grid.get(a, b));
                values[k * size + l] = Some(d.abs());
            }
        }
    }
    Ok(ResidualGrid { size, values })
}
