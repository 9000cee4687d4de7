//! Performance measures from a distribution grid, decay diagnostics and the
//! comparison with a single relay serving the whole load.

use serde::Serialize;

use crate::compensation::{self, CompensationConfig};
use crate::error::{Error, Result};
use crate::grid::ProbabilityGrid;
use crate::model::ModelParams;

/// Tolerance on the total mass of a grid handed to the moment routines.
const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureReport {
    /// `E[Q1 + Q2]`
    pub mean_total: f64,
    /// Expected sojourn time in slots, `E[Q1 + Q2] / lambda`.
    pub sojourn: f64,
    /// Correlation of `Q1` and `Q2`; `None` when the queues have zero variance.
    pub correlation: Option<f64>,
    /// `pi(k+1, l) / pi(k, l)` at `l = 0` near the edge of the grid, if the grid is large enough.
    pub decay_ratio: Option<f64>,
    /// `P(min = k+1) / P(min = k)` near the edge of the grid, if the grid is large enough.
    pub marginal_min_decay: Option<f64>,
}

impl MeasureReport {
    pub fn correlation(&self) -> Result<f64> {
        self.correlation.ok_or(Error::ZeroVariance)
    }
}

fn check_mass(grid: &ProbabilityGrid) -> Result<()> {
    let total = grid.total();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::Unnormalized(total));
    }
    Ok(())
}

fn report(
    e_sum: f64,
    var_q1: f64,
    cov: f64,
    grid: &ProbabilityGrid,
    p: &ModelParams,
) -> MeasureReport {
    let correlation = if var_q1 > 1e-300 {
        Some((cov / var_q1).clamp(-1.0, 1.0))
    } else {
        None
    };
    let (decay_ratio, marginal_min_decay) = match decay_diagnostics(grid, p) {
        Ok(d) => (Some(d.fixed_l_at_edge(0)), Some(d.marginal_at_edge())),
        Err(_) => (None, None),
    };
    MeasureReport {
        mean_total: e_sum,
        sojourn: e_sum / p.lambda(),
        correlation,
        decay_ratio,
        marginal_min_decay,
    }
}

/// Moments of a grid in `(min, difference)` coordinates, using
/// `Q1 + Q2 = 2k + l`, `Q1 Q2 = k(k + l)` and exchange symmetry of the queues.
pub fn moments_from_transformed(grid: &ProbabilityGrid, p: &ModelParams) -> Result<MeasureReport> {
    if !grid.is_transformed() {
        return Err(Error::Dimension("expected a grid in (min, difference) coordinates".into()));
    }
    check_mass(grid)?;
    let (mut e_sum, mut e_prod, mut e_sq) = (0.0, 0.0, 0.0);
    for (k, l, v) in grid.iter() {
        let (k, l) = (k as f64, l as f64);
        e_sum += v * (2.0 * k + l);
        e_prod += v * k * (k + l);
        e_sq += v * (k * k + (k + l) * (k + l));
    }
    let e_q1 = e_sum / 2.0;
    let var_q1 = e_sq / 2.0 - e_q1 * e_q1;
    let cov = e_prod - e_q1 * e_q1;
    Ok(report(e_sum, var_q1, cov, grid, p))
}

/// Moments of a grid in `(Q1, Q2)` coordinates, computed directly.
pub fn moments_from_original(grid: &ProbabilityGrid, p: &ModelParams) -> Result<MeasureReport> {
    if grid.is_transformed() {
        return Err(Error::Dimension("expected a grid in (Q1, Q2) coordinates".into()));
    }
    check_mass(grid)?;
    let (mut m1, mut m2, mut s1, mut s2, mut prod) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, j, v) in grid.iter() {
        let (i, j) = (i as f64, j as f64);
        m1 += v * i;
        m2 += v * j;
        s1 += v * i * i;
        s2 += v * j * j;
        prod += v * i * j;
    }
    let (v1, v2) = (s1 - m1 * m1, s2 - m2 * m2);
    let cov = prod - m1 * m2;
    let correlation = if v1 > 1e-300 && v2 > 1e-300 {
        Some((cov / (v1 * v2).sqrt()).clamp(-1.0, 1.0))
    } else {
        None
    };
    let transformed = grid.to_transformed();
    let (decay_ratio, marginal_min_decay) = match decay_diagnostics(&transformed, p) {
        Ok(d) => (Some(d.fixed_l_at_edge(0)), Some(d.marginal_at_edge())),
        Err(_) => (None, None),
    };
    Ok(MeasureReport {
        mean_total: m1 + m2,
        sojourn: (m1 + m2) / p.lambda(),
        correlation,
        decay_ratio,
        marginal_min_decay,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayDiagnostics {
    /// `rho^2`, the limit of every ratio.
    pub target: f64,
    /// `(l, ratios)` with `ratios[k] = pi(k+1, l) / pi(k, l)`.
    pub fixed_l: Vec<(usize, Vec<f64>)>,
    /// `marginal[k] = P(min = k+1) / P(min = k)`.
    pub marginal: Vec<f64>,
    /// Index `k` at which the edge values are read.
    pub edge: usize,
}

impl DecayDiagnostics {
    pub fn fixed_l_at_edge(&self, l: usize) -> f64 {
        self.fixed_l
            .iter()
            .find(|(x, _)| *x == l)
            .map(|(_, r)| r[self.edge])
            .unwrap_or(f64::NAN)
    }

    pub fn marginal_at_edge(&self) -> f64 {
        self.marginal[self.edge]
    }
}

/// Ratio profiles in `k` for `l = 0..=3` and for the marginal of the minimum.
/// The edge value is read at `k = T - 3`.
pub fn decay_diagnostics(grid: &ProbabilityGrid, p: &ModelParams) -> Result<DecayDiagnostics> {
    if !grid.is_transformed() {
        return Err(Error::Dimension("expected a grid in (min, difference) coordinates".into()));
    }
    let t = grid.truncation();
    if t < 20 {
        return Err(Error::Dimension(format!(
            "decay diagnostics need truncation at least 20, got {t}"
        )));
    }
    let ratio = |a: f64, b: f64| if a == 0.0 { f64::NAN } else { b / a };
    let fixed_l = (0..=3)
        .map(|l| (l, (0..t).map(|k| ratio(grid.get(k, l), grid.get(k + 1, l))).collect()))
        .collect();
    let marg: Vec<f64> = (0..=t).map(|k| (0..=t).map(|l| grid.get(k, l)).sum()).collect();
    let marginal = (0..t).map(|k| ratio(marg[k], marg[k + 1])).collect();
    Ok(DecayDiagnostics {
        target: p.rho() * p.rho(),
        fixed_l,
        marginal,
        edge: t - 3,
    })
}

/// Interval of transmission probabilities for which the system is stable at
/// arrival rate `lambda`: `a` strictly between the two returned values.
pub fn stability_interval(lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    if lambda >= 0.5 {
        return Err(Error::EmptyStabilityRegion(lambda));
    }
    let r = (1.0 - 2.0 * lambda).sqrt();
    Ok(((1.0 - r) / 2.0, (1.0 + r) / 2.0))
}

/// Mean queue length of a single relay with Bernoulli(`lambda`) arrivals at
/// slot start and Bernoulli(`a`) transmissions, from its birth-death chain.
/// `None` when `lambda >= a`.
pub fn single_server_mean(lambda: f64, a: f64) -> Option<f64> {
    if lambda >= a {
        return None;
    }
    // From 0 an arrival may leave in the same slot; from n >= 1 the queue
    // moves up on arrival without transmission and down on transmission
    // without arrival.
    let up = lambda * (1.0 - a);
    let down = (1.0 - lambda) * a;
    let r = up / down;
    let mut pi = vec![1.0f64];
    while *pi.last().unwrap() > 1e-18 * pi[0] && pi.len() < 1_000_000 {
        let last = *pi.last().unwrap();
        pi.push(last * r);
    }
    let total: f64 = pi.iter().sum();
    Some(pi.iter().enumerate().map(|(n, v)| n as f64 * v).sum::<f64>() / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub a: f64,
    pub single_stable: bool,
    pub jsrq_stable: bool,
    pub single_mean: Option<f64>,
    pub jsrq_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleServerComparison {
    pub lambda: f64,
    /// Stability interval `(a-, a+)` of the two-relay system.
    pub interval: (f64, f64),
    pub rows: Vec<ComparisonRow>,
}

/// Expected total queue of the two-relay system, or `None` if unstable.
pub fn jsrq_mean(lambda: f64, a: f64) -> Result<Option<f64>> {
    let p = ModelParams::new(lambda, a)?;
    if !crate::model::is_stable(&p).stable {
        return Ok(None);
    }
    let sol = compensation::solve(&p, &CompensationConfig::default())?;
    Ok(Some(moments_from_transformed(&sol.grid, &p)?.mean_total))
}

pub fn single_server_comparison(lambda: f64, a_grid: &[f64]) -> Result<SingleServerComparison> {
    let interval = stability_interval(lambda)?;
    let rows = a_grid
        .iter()
        .map(|&a| {
            let p = ModelParams::new(lambda, a)?;
            let jsrq_stable = crate::model::is_stable(&p).stable;
            Ok(ComparisonRow {
                a,
                single_stable: lambda < a,
                jsrq_stable,
                single_mean: single_server_mean(lambda, a),
                jsrq_mean: jsrq_mean(lambda, a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SingleServerComparison {
        lambda,
        interval,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Coordinates;

    #[test]
    fn point_mass_has_no_correlation() {
        let p = ModelParams::new(0.3, 0.5).unwrap();
        let mut g = ProbabilityGrid::zeros(4, Coordinates::Transformed);
        g.set(0, 0, 1.0);
        let r = moments_from_transformed(&g, &p).unwrap();
        assert_eq!(r.sojourn, 0.0);
        assert!(matches!(r.correlation(), Err(Error::ZeroVariance)));
    }

    #[test]
    fn unnormalized_grid_is_rejected() {
        let p = ModelParams::new(0.3, 0.5).unwrap();
        let g = ProbabilityGrid::from_fn(4, Coordinates::Transformed, |_, _| 1.0);
        assert!(matches!(moments_from_transformed(&g, &p), Err(Error::Unnormalized(_))));
    }

    #[test]
    fn geometric_toy_grid() {
        let p = ModelParams::new(0.3, 0.5).unwrap();
        let (g, h) = (0.3f64, 0.6f64);
        let grid = ProbabilityGrid::from_fn(30, Coordinates::Transformed, |k, l| {
            (1.0 - g) * g.powi(k as i32) * (1.0 - h) * h.powi(l as i32)
        });
        let d = decay_diagnostics(&grid, &p).unwrap();
        for (_, r) in &d.fixed_l {
            assert!(r.iter().all(|x| (x - g).abs() < 1e-12));
        }
        assert!((d.marginal_at_edge() - g).abs() < 1e-12);
        let small = ProbabilityGrid::zeros(10, Coordinates::Transformed);
        assert!(decay_diagnostics(&small, &p).is_err());
    }

    #[test]
    fn interval_example() {
        let (lo, hi) = stability_interval(0.3).unwrap();
        assert!((lo - (1.0 - 0.4f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((hi - (1.0 + 0.4f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!(matches!(stability_interval(0.5), Err(Error::EmptyStabilityRegion(_))));
    }

    #[test]
    fn single_server_load_identity() {
        // Geometric with ratio lambda(1-a) / ((1-lambda) a): mean r / (1 - r).
        let (l, a) = (0.3, 0.45);
        let r = l * (1.0 - a) / ((1.0 - l) * a);
        assert!((single_server_mean(l, a).unwrap() - r / (1.0 - r)).abs() < 1e-12);
        assert!(single_server_mean(0.3, 0.3).is_none());
    }
}
