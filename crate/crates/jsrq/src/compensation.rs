//! Compensation approach: the equilibrium distribution of the transformed
//! chain as an alternating series of product forms `gamma^k delta^l`.
//!
//! Each term satisfies the interior balance equations by construction (its
//! pair lies on the kernel curve). The leading term `gamma_0 = rho^2` leaves an
//! error on the vertical boundary `k = 0`, which a new term with the same
//! `delta` and the other root `gamma` cancels; that term in turn breaks the
//! horizontal boundary `l <= 2`, repaired by a term with the same `gamma`, and
//! so on. On the rows `l = 0, 1` the horizontal repair also fixes free
//! coefficients `e_{l,i}`, so those rows are pure geometric sums in `k`.
//!
//! The series converges only away from the origin. [`solve`] evaluates it on
//! the outer part of a truncated square and finishes the inner box with a
//! direct solve of the balance equations, using series values as boundary
//! data.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Coordinates, ProbabilityGrid};
use crate::linalg::{solve_dense, BandedLu, BandedMatrix};
use crate::model::{balance_stencil, ModelParams};

/// Left side minus right side of the kernel equation of the interior walk.
pub fn kernel_residual(gamma: f64, delta: f64, p: &ModelParams) -> f64 {
    let (lm, lb, aa, s2) = (p.lambda(), p.lbar(), p.aa(), p.s2());
    (1.0 - p.p0()) * gamma * delta
        - ((lb * aa * gamma + lm * s2) * delta * delta
            + lm * aa * delta.powi(3)
            + lb * aa * gamma * gamma)
}

/// Kernel residual divided by the sum of the absolute values of its monomials.
pub fn kernel_residual_relative(gamma: f64, delta: f64, p: &ModelParams) -> f64 {
    let (lm, lb, aa, s2) = (p.lambda(), p.lbar(), p.aa(), p.s2());
    let scale = (1.0 - p.p0()) * (gamma * delta).abs()
        + (lb * aa * gamma.abs() + lm * s2) * delta * delta
        + lm * aa * delta.abs().powi(3)
        + lb * aa * gamma * gamma;
    if scale == 0.0 {
        0.0
    } else {
        kernel_residual(gamma, delta, p).abs() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelRootPair {
    pub gamma: f64,
    pub delta: f64,
}

pub fn initial_gamma(p: &ModelParams) -> Result<f64> {
    p.require_stable()?;
    Ok(p.rho() * p.rho())
}

/// Bracketed root of `f` on `[lo, hi]`: secant steps, falling back to
/// bisection whenever a step fails to halve the bracket.
fn bracketed_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (mut flo, mut fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let mut bisect = false;
    for _ in 0..300 {
        let width = hi - lo;
        if width <= tol {
            break;
        }
        let mut x = lo - flo * width / (fhi - flo);
        if bisect || !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        if x <= lo || x >= hi {
            break;
        }
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        bisect = hi - lo > 0.5 * width;
    }
    Ok(if flo.abs() < fhi.abs() { lo } else { hi })
}

const ROOT_TOL: f64 = 1e-15;

/// The `delta` paired with `gamma` on the kernel curve, inside `(0, gamma)`.
///
/// Solved for the ratio `delta / gamma`, which keeps the problem well scaled
/// however small `gamma` gets.
pub fn delta_root(gamma: f64, p: &ModelParams) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    let (lm, lb, aa, s2) = (p.lambda(), p.lbar(), p.aa(), p.s2());
    let q = 1.0 - p.p0();
    let f = |z: f64| q * z - (lb * aa * gamma + lm * s2) * z * z - lm * aa * gamma * z.powi(3) - lb * aa;
    let z = bracketed_root(f, 0.0, 0.5, ROOT_TOL)
        .or_else(|_| bracketed_root(f, 0.0, 1.0, ROOT_TOL))
        .map_err(|_| Error::NoSignChange { lo: 0.0, hi: gamma })?;
    Ok(z * gamma)
}

/// The `gamma` paired with `delta` on the kernel curve, inside `(0, delta)`.
pub fn gamma_root(delta: f64, p: &ModelParams) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let (lm, lb, aa, s2) = (p.lambda(), p.lbar(), p.aa(), p.s2());
    let q = 1.0 - p.p0();
    let f = |x: f64| q * x - lb * aa * x * delta - lm * s2 - lm * aa * delta - lb * aa * x * x;
    let x = bracketed_root(f, 0.0, 0.8, ROOT_TOL)
        .or_else(|_| bracketed_root(f, 0.0, 1.0, ROOT_TOL))
        .map_err(|_| Error::NoSignChange { lo: 0.0, hi: delta })?;
    Ok(x * delta)
}

/// Defect of `gamma^k delta^l` in the balance equation of the column `k = 0`,
/// divided by `delta^(l-1)`.
pub(crate) fn vertical_defect(gamma: f64, delta: f64, p: &ModelParams) -> f64 {
    let (lm, lb, a, ab, aa) = (p.lambda(), p.lbar(), p.a(), p.abar(), p.aa());
    delta * (1.0 - lb * ab - lm * aa) - lb * a * delta * delta - lb * aa * gamma
}

/// Coefficient of the term `gamma_{i+1}^k delta_i^l` that cancels the
/// vertical-boundary error of `d_i gamma_i^k delta_i^l`.
pub fn vertical_coefficient(
    gamma_i: f64,
    gamma_ip1: f64,
    delta_i: f64,
    d_i: f64,
    p: &ModelParams,
) -> Result<f64> {
    let num = vertical_defect(gamma_i, delta_i, p);
    let den = vertical_defect(gamma_ip1, delta_i, p);
    if den == 0.0 || !den.is_finite() || (den.abs() < 1e-300) {
        return Err(Error::Degenerate(format!(
            "vertical compensation denominator vanishes at gamma = {gamma_ip1:e}, delta = {delta_i:e}"
        )));
    }
    Ok(-num / den * d_i)
}

/// Rows of the horizontal-boundary equations (`l = 0, 1, 2`) acting on
/// `(e0, e1)`, for rows `l = 0, 1` of the form `e_l gamma^k`.
fn horizontal_a(gamma: f64, p: &ModelParams) -> [[f64; 2]; 3] {
    let (lm, lb, aa, s2) = (p.lambda(), p.lbar(), p.aa(), p.s2());
    let p0 = p.p0();
    let p1 = lb * s2 + 2.0 * lm * aa;
    [
        [gamma * (1.0 - p0), -(gamma * lb * aa + lm * s2)],
        [-(gamma * lm * s2 + 2.0 * gamma * gamma * lb * aa), gamma * (1.0 - p1)],
        [gamma * gamma * lm * aa, gamma * gamma * lb * aa],
    ]
}

/// The same equations acting on a term `x gamma^k delta^l` (`l >= 2`), per unit `x delta^2`.
fn horizontal_b(gamma: f64, delta: f64, p: &ModelParams) -> [f64; 3] {
    let (lm, lb, aa, s2) = (p.lambda(), p.lbar(), p.aa(), p.s2());
    [
        -lm * aa,
        -(gamma * lb * aa + lm * s2 + lm * aa * delta),
        -gamma * (1.0 - p.p0()) + gamma * lb * aa * delta + lm * s2 * delta + lm * aa * delta * delta,
    ]
}

/// Solves the horizontal compensation system for `(e_{0,i+1}, e_{1,i+1}, d_{i+1})`.
pub fn horizontal_coefficients(
    gamma_ip1: f64,
    delta_i: f64,
    delta_ip1: f64,
    c_ip1: f64,
    p: &ModelParams,
) -> Result<(f64, f64, f64)> {
    let a = horizontal_a(gamma_ip1, p);
    let b_new = horizontal_b(gamma_ip1, delta_ip1, p);
    let b_old = horizontal_b(gamma_ip1, delta_i, p);
    // Third unknown is d * delta_{i+1}^2, which keeps the columns comparable.
    let m: Vec<f64> = (0..3)
        .flat_map(|r| [a[r][0], a[r][1], b_new[r]])
        .collect();
    let rhs: Vec<f64> = (0..3).map(|r| -b_old[r] * c_ip1 * delta_i * delta_i).collect();
    let x = solve_dense(3, &m, &rhs).ok_or_else(|| {
        Error::Degenerate(format!(
            "horizontal compensation system singular at gamma = {gamma_ip1:e}, delta = {delta_ip1:e}"
        ))
    })?;
    Ok((x[0], x[1], x[2] / (delta_ip1 * delta_ip1)))
}

/// Roots of the quadratic governing the limiting ratios of the root
/// sequence, `(w, w_hat)` with `|w| < 1 < |w_hat|`.
pub fn asymptotic_ratios(p: &ModelParams) -> Result<(f64, f64)> {
    p.require_stable()?;
    let (lm, lb, aa, s2) = (p.lambda(), p.lbar(), p.aa(), p.s2());
    let (qa, qb, qc) = (lm * s2, -(1.0 - p.p0()), lb * aa);
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return Err(Error::Degenerate(format!(
            "ratio quadratic has no distinct real roots (discriminant {disc:e})"
        )));
    }
    // Stable pairing of the quadratic formula.
    let q = -0.5 * (qb - disc.sqrt());
    let (r1, r2) = (q / qa, qc / q);
    Ok(if r1.abs() < r2.abs() { (r1, r2) } else { (r2, r1) })
}

/// Truncated compensation series through index `N`.
///
/// `gammas` and `c` run one index further than the rest: the last vertical
/// repair `c_{N+1} gamma_{N+1}^k delta_N^l` is kept, its horizontal error is
/// what truncation leaves behind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompensationSeries {
    params: ModelParams,
    /// `gamma_0 ..= gamma_{N+1}`
    pub gammas: Vec<f64>,
    /// `delta_0 ..= delta_N`
    pub deltas: Vec<f64>,
    /// `d_0 ..= d_N`, with `d_0 = 1`
    pub d: Vec<f64>,
    /// `c_1 ..= c_{N+1}`, stored at index `i - 1`
    pub c: Vec<f64>,
    /// `e_{0,0} ..= e_{0,N}`
    pub e0: Vec<f64>,
    /// `e_{1,0} ..= e_{1,N}`
    pub e1: Vec<f64>,
    /// Mismatch of the redundant equation fixing `e_{0,0}, e_{1,0}`. It vanishes
    /// exactly when `gamma_0 = rho^2`, so it is a check on the leading term.
    pub initial_consistency: f64,
}

impl CompensationSeries {
    /// The series with its leading term and first vertical repair (`N = 0`).
    pub fn new(p: &ModelParams) -> Result<Self> {
        let g0 = initial_gamma(p)?;
        let dl0 = delta_root(g0, p)?;
        // The leading term needs its own row-0 and row-1 coefficients: the
        // three horizontal equations in two unknowns are consistent at rho^2.
        let a = horizontal_a(g0, p);
        let b = horizontal_b(g0, dl0, p);
        let rhs: Vec<f64> = b.iter().map(|v| -v * dl0 * dl0).collect();
        let m = [a[0][0], a[0][1], a[2][0], a[2][1]];
        let x = solve_dense(2, &m, &[rhs[0], rhs[2]])
            .ok_or_else(|| Error::Degenerate("leading boundary system singular".into()))?;
        let mismatch = a[1][0] * x[0] + a[1][1] * x[1] - rhs[1];
        let scale = (a[1][0] * x[0]).abs() + (a[1][1] * x[1]).abs() + rhs[1].abs();
        let g1 = gamma_root(dl0, p)?;
        let c1 = vertical_coefficient(g0, g1, dl0, 1.0, p)?;
        Ok(Self {
            params: *p,
            gammas: vec![g0, g1],
            deltas: vec![dl0],
            d: vec![1.0],
            c: vec![c1],
            e0: vec![x[0]],
            e1: vec![x[1]],
            initial_consistency: mismatch.abs() / scale,
        })
    }

    /// Series through index `n`.
    pub fn build(p: &ModelParams, n: usize) -> Result<Self> {
        let mut s = Self::new(p)?;
        for _ in 0..n {
            s.extend()?;
        }
        Ok(s)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Series truncation level `N`.
    pub fn order(&self) -> usize {
        self.d.len() - 1
    }

    /// Adds the next horizontal and vertical repair.
    pub fn extend(&mut self) -> Result<()> {
        let p = self.params;
        let n = self.order();
        let g = self.gammas[n + 1];
        let dl_prev = self.deltas[n];
        let dl = delta_root(g, &p)?;
        let (e0, e1, d) = horizontal_coefficients(g, dl_prev, dl, self.c[n], &p)?;
        let g_next = gamma_root(dl, &p)?;
        let c_next = vertical_coefficient(g, g_next, dl, d, &p)?;
        self.deltas.push(dl);
        self.e0.push(e0);
        self.e1.push(e1);
        self.d.push(d);
        self.gammas.push(g_next);
        self.c.push(c_next);
        Ok(())
    }

    /// Successive root pairs `(gamma_0, delta_0), (gamma_1, delta_0), (gamma_1, delta_1), ...`.
    pub fn root_pairs(&self) -> Vec<KernelRootPair> {
        let mut out = Vec::new();
        for (i, &dl) in self.deltas.iter().enumerate() {
            out.push(KernelRootPair { gamma: self.gammas[i], delta: dl });
            out.push(KernelRootPair { gamma: self.gammas[i + 1], delta: dl });
        }
        out
    }

    /// Whether `(k, l)` is covered by the series forms.
    pub fn in_domain(k: usize, l: usize) -> bool {
        l >= 2 || k >= 1
    }

    /// Unnormalized partial sum at `(k, l)`. The origin and `(0, 1)` are not
    /// covered and come from the inner solve.
    pub fn evaluate(&self, k: usize, l: usize) -> Result<f64> {
        if !Self::in_domain(k, l) {
            return Err(Error::Dimension(format!(
                "state ({k}, {l}) is outside the range of the series"
            )));
        }
        Ok(self.value(k, l))
    }

    /// Individual terms at `(k, l)`, one per index `i`.
    pub fn terms(&self, k: usize, l: usize) -> Vec<f64> {
        let k = k as i32;
        let li = l as i32;
        (0..=self.order())
            .map(|i| match l {
                0 => self.e0[i] * self.gammas[i].powi(k),
                1 => self.e1[i] * self.gammas[i].powi(k),
                _ => {
                    (self.d[i] * self.gammas[i].powi(k) + self.c[i] * self.gammas[i + 1].powi(k))
                        * self.deltas[i].powi(li)
                }
            })
            .collect()
    }

    pub(crate) fn value(&self, k: usize, l: usize) -> f64 {
        self.terms(k, l).iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompensationConfig {
    /// Target precision; clamped from below by `epsilon_floor`.
    pub epsilon: f64,
    pub epsilon_floor: f64,
    pub max_iterations: usize,
    /// Lower bound on the state-space truncation `T`.
    pub min_truncation: usize,
}

impl Default for CompensationConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-12,
            epsilon_floor: 1e-12,
            max_iterations: 200,
            min_truncation: 4,
        }
    }
}

impl CompensationConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompensationSolution {
    pub series: CompensationSeries,
    /// Normalized distribution on `{0..=T}^2`.
    pub grid: ProbabilityGrid,
    /// State-space truncation `T`.
    pub truncation: usize,
    /// Side of the directly solved box `{0..=m}^2`.
    pub inner: usize,
    /// Mass of the unnormalized grid; the series times its inverse is the distribution.
    pub mass: f64,
    pub iterations: usize,
    pub last_change: f64,
    pub epsilon: f64,
    /// Largest relative gap between the series and the grid on row `l = 2`
    /// inside the box, where both are available.
    pub l2_mismatch: f64,
}

/// Smallest box side at which the series terms decay fast on the box boundary.
fn convergent_box(series: &CompensationSeries) -> usize {
    let n = series.order();
    let decays = |k: usize, l: usize| {
        let t = series.terms(k, l);
        (n / 2..n).all(|i| {
            let (a, b) = (t[i].abs(), t[i + 1].abs());
            a == 0.0 || b <= 0.5 * a
        })
    };
    (2..200)
        .find(|&m| decays(m + 1, 0) && decays(m + 1, 1) && decays(0, m + 1) && decays(1, m + 1))
        .unwrap_or(200)
}

struct InnerSolver {
    m: usize,
    lu: BandedLu,
}

impl InnerSolver {
    fn new(p: &ModelParams, m: usize) -> Result<Self> {
        let side = m + 1;
        let idx = |k: usize, l: usize| k * side + l;
        let mut a = BandedMatrix::zeros(side * side, side, side);
        for k in 0..=m {
            for l in 0..=m {
                let r = idx(k, l);
                a.add(r, r, 1.0);
                for ((sk, sl), w) in balance_stencil(k, l, p) {
                    if sk <= m && sl <= m {
                        a.add(r, idx(sk, sl), -w);
                    }
                }
            }
        }
        let lu = a
            .factor()
            .ok_or_else(|| Error::Degenerate("inner-box balance system is singular".into()))?;
        Ok(Self { m, lu })
    }

    /// Inner values given the series outside the box.
    fn solve(&self, p: &ModelParams, series: &CompensationSeries) -> Vec<f64> {
        let m = self.m;
        let side = m + 1;
        let mut b = vec![0.0; side * side];
        for k in 0..=m {
            for l in 0..=m {
                for ((sk, sl), w) in balance_stencil(k, l, p) {
                    if sk > m || sl > m {
                        b[k * side + l] += w * series.value(sk, sl);
                    }
                }
            }
        }
        self.lu.solve(&mut b);
        b
    }
}

fn assemble(
    t: usize,
    inner: &[f64],
    m: usize,
    series: &CompensationSeries,
) -> ProbabilityGrid {
    ProbabilityGrid::from_fn(t, Coordinates::Transformed, |k, l| {
        if k <= m && l <= m {
            inner[k * (m + 1) + l]
        } else {
            series.value(k, l)
        }
    })
}

/// Equilibrium distribution of the transformed chain on a square large enough
/// that the neglected tail is about `epsilon`.
pub fn solve(p: &ModelParams, config: &CompensationConfig) -> Result<CompensationSolution> {
    p.require_stable()?;
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, 1), got {}",
            config.epsilon
        )));
    }
    let eps = config.epsilon.max(config.epsilon_floor);
    let mut series = CompensationSeries::new(p)?;
    let g0 = series.gammas[0];
    let dl0 = series.deltas[0];
    // The tail in k decays like gamma_0^k, slower than delta_0^l.
    let tail = |r: f64| (eps.ln() / r.ln()).ceil() as usize;
    let mut t = tail(g0).max(tail(dl0)).max(config.min_truncation).max(4);

    // Pick the box from a deeper copy of the series so that its boundary
    // sits where the series converges.
    let probe = CompensationSeries::build(p, 16)?;
    let m = (t / 2).max(2).max(convergent_box(&probe));
    t = t.max(2 * m);
    let solver = InnerSolver::new(p, m)?;

    let mut prev_mass: Option<f64> = None;
    let mut change = f64::INFINITY;
    for iter in 0..=config.max_iterations {
        let inner = solver.solve(p, &series);
        let grid = assemble(t, &inner, m, &series);
        let mass = grid.total();
        if let Some(pm) = prev_mass {
            change = ((mass - pm) / mass).abs();
            if change < eps {
                let mut grid = grid;
                grid.normalize();
                let l2_mismatch = (1..=m)
                    .map(|k| {
                        let s = series.value(k, 2);
                        let v = inner[k * (m + 1) + 2];
                        ((s - v) / v.abs().max(f64::MIN_POSITIVE)).abs()
                    })
                    .fold(0.0, f64::max);
                return Ok(CompensationSolution {
                    series,
                    grid,
                    truncation: t,
                    inner: m,
                    mass,
                    iterations: iter,
                    last_change: change,
                    epsilon: eps,
                    l2_mismatch,
                });
            }
        }
        prev_mass = Some(mass);
        if iter < config.max_iterations {
            series.extend()?;
        }
    }
    Err(Error::NotConverged {
        iterations: config.max_iterations,
        last_change: change,
    })
}
