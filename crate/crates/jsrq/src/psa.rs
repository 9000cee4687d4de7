//! Power-series algorithm for `a = 1/2`.
//!
//! With `a = 1/2` the load is `rho = lambda / (1 - lambda)` and every balance
//! equation becomes polynomial in `rho`. Expanding
//! `pi(k, l) = sum_n theta^(n+k+l) u(n, k, l)` in the mapped variable
//! `theta = (1 + G) rho / (1 + G rho)` turns them into recursions for the
//! coefficients `u`. Coefficients are computed shell by shell in the total
//! order `t = n + k + l`; each shell only needs itself and the one before, so
//! only two shells are held in memory.
//!
//! Within a shell the order is: states with `k >= 1` by increasing `n` and
//! decreasing `k`, then the column `k = 0` upward in `l`, and finally
//! `u(t, 0, 0)` from normalization (each shell `t >= 1` sums to zero).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Coordinates, ProbabilityGrid};
use crate::model::ModelParams;

pub fn theta_from_rho(rho: f64, g: f64) -> f64 {
    (1.0 + g) * rho / (1.0 + g * rho)
}

/// Constants of the recursions for a given acceleration parameter.
#[derive(Debug, Clone, Copy)]
struct Weights {
    g: f64,
    /// `1 / (G + 1)`
    r: f64,
}

impl Weights {
    fn new(g: f64) -> Self {
        Self { g, r: 1.0 / (g + 1.0) }
    }
}

/// `u(n, k, l)` for `k >= 1` or `(k, l) = (0, l >= 1)`, given a lookup for
/// already known coefficients (zero at negative indices).
fn coefficient(n: i64, k: i64, l: i64, w: Weights, u: &impl Fn(i64, i64, i64) -> f64) -> f64 {
    let Weights { g, r } = w;
    if k >= 1 {
        let mut v = (g - 1.5) * r * u(n - 1, k, l)
            + 0.5 * u(n - 1, k, l + 1)
            - 0.5 * g * r * u(n - 2, k, l + 1)
            + r * u(n - 1, k - 1, l + 1)
            + 0.5 * r * u(n - 2, k - 1, l + 2);
        match l {
            0 => {}
            1 => {
                // Row l = 1 has its own self-loop weight and the diagonal inflow.
                v = (g - 1.0) * r * u(n - 1, k, 1)
                    + 0.5 * u(n - 1, k, 2)
                    - 0.5 * g * r * u(n - 2, k, 2)
                    + r * u(n - 1, k - 1, 2)
                    + 0.5 * r * u(n - 2, k - 1, 3)
                    + r * u(n, k, 0)
                    + u(n, k + 1, 0)
                    - g * r * u(n - 1, k + 1, 0);
            }
            _ => {
                v += 0.5 * u(n, k + 1, l - 1) - 0.5 * g * r * u(n - 1, k + 1, l - 1);
                if l == 2 {
                    v += 0.5 * r * u(n, k + 1, 0);
                }
            }
        }
        v
    } else {
        debug_assert!(k == 0 && l >= 1);
        match l {
            1 => g * r * u(n - 1, 0, 1) + r * u(n, 0, 0),
            2 => {
                g * r * u(n - 1, 0, 2) + u(n + 1, 0, 1) + (1.0 - g) * r * u(n, 0, 1)
                    - u(n + 1, 1, 0)
                    + g * r * u(n, 1, 0)
                    - r * u(n + 1, 0, 0)
            }
            _ => {
                let mut v = g * r * u(n - 1, 0, l)
                    + u(n + 1, 0, l - 1)
                    + (1.5 - g) * r * u(n, 0, l - 1)
                    - 0.5 * u(n + 1, 1, l - 2)
                    + 0.5 * g * r * u(n, 1, l - 2);
                if l == 3 {
                    v -= 0.5 * r * u(n + 1, 1, 0);
                }
                v
            }
        }
    }
}

/// Sum of shell `t` without `u(t, 0, 0)`, in a fixed order.
fn shell_sum(t: i64, u: &impl Fn(i64, i64, i64) -> f64) -> f64 {
    let mut s = 0.0;
    for k in 0..=t {
        for l in 0..=(t - k) {
            if k + l > 0 {
                s += u(t - k - l, k, l);
            }
        }
    }
    s
}

/// All coefficients of one total order, indexed by `(k, l)` with `k + l <= t`.
#[derive(Debug, Clone)]
struct Shell {
    t: usize,
    data: Vec<f64>,
}

impl Shell {
    fn origin() -> Self {
        Self { t: 0, data: vec![1.0] }
    }

    fn at(&self, k: usize, l: usize) -> f64 {
        if k + l > self.t {
            0.0
        } else {
            self.data[k * (self.t + 1) + l]
        }
    }

    /// Shell `prev.t + 1`. Unset entries start as NaN so that reading one
    /// before it is computed poisons the result.
    fn next(prev: &Shell, w: Weights) -> Shell {
        let t = prev.t + 1;
        let side = t + 1;
        let mut cur = Shell {
            t,
            data: vec![f64::NAN; side * side],
        };
        let ti = t as i64;
        for n in 0..t {
            for k in (1..=(t - n)).rev() {
                let l = t - n - k;
                let v = {
                    let u = |a: i64, b: i64, c: i64| lookup(&cur, prev, ti, a, b, c);
                    coefficient(n as i64, k as i64, l as i64, w, &u)
                };
                cur.data[k * side + l] = v;
            }
        }
        for l in 1..=t {
            let v = {
                let u = |a: i64, b: i64, c: i64| lookup(&cur, prev, ti, a, b, c);
                coefficient((t - l) as i64, 0, l as i64, w, &u)
            };
            cur.data[l] = v;
        }
        let s = {
            let u = |a: i64, b: i64, c: i64| lookup(&cur, prev, ti, a, b, c);
            shell_sum(ti, &u)
        };
        cur.data[0] = -s;
        cur
    }
}

#[inline]
fn lookup(cur: &Shell, prev: &Shell, t: i64, n: i64, k: i64, l: i64) -> f64 {
    if n < 0 || k < 0 || l < 0 {
        return 0.0;
    }
    let s = n + k + l;
    if s == t {
        cur.at(k as usize, l as usize)
    } else if s == t - 1 {
        prev.at(k as usize, l as usize)
    } else {
        panic!("recursion reaches total order {s} from shell {t}")
    }
}

/// Iterator over the coefficient shells `t = 0, 1, 2, ...`.
struct Shells {
    w: Weights,
    cur: Option<Shell>,
}

impl Shells {
    fn new(g: f64) -> Self {
        Self { w: Weights::new(g), cur: None }
    }

    fn advance(&mut self) -> &Shell {
        let next = match &self.cur {
            None => Shell::origin(),
            Some(s) => Shell::next(s, self.w),
        };
        self.cur.insert(next)
    }
}

/// Coefficients `u(n, k, l)` for `n <= N`, `k, l <= T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub g: f64,
    pub n_max: usize,
    pub t_max: usize,
    values: Vec<f64>,
}

impl CoefficientTable {
    pub fn get(&self, n: usize, k: usize, l: usize) -> f64 {
        if n > self.n_max || k > self.t_max || l > self.t_max {
            return 0.0;
        }
        let side = self.t_max + 1;
        self.values[(n * side + k) * side + l]
    }
}

fn check_g(g: f64) -> Result<()> {
    if g >= 0.0 && g.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("G must be a nonnegative number, got {g}")))
    }
}

pub fn compute_coefficients(n_max: usize, t_max: usize, g: f64) -> Result<CoefficientTable> {
    check_g(g)?;
    if n_max > t_max {
        return Err(Error::Config(format!(
            "series order {n_max} exceeds the state truncation {t_max}"
        )));
    }
    let side = t_max + 1;
    let mut values = vec![0.0; (n_max + 1) * side * side];
    let mut shells = Shells::new(g);
    for t in 0..=(n_max + 2 * t_max) {
        let shell = shells.advance();
        for k in 0..=t.min(t_max) {
            for l in 0..=(t - k).min(t_max) {
                let n = t - k - l;
                if n <= n_max {
                    values[(n * side + k) * side + l] = shell.at(k, l);
                }
            }
        }
    }
    Ok(CoefficientTable {
        g,
        n_max,
        t_max,
        values,
    })
}

/// `pi(k, l) = sum_{n <= N} theta^(n+k+l) u(n, k, l)` on `{0..=T}^2`.
pub fn evaluate(rho: f64, table: &CoefficientTable) -> ProbabilityGrid {
    let theta = theta_from_rho(rho, table.g);
    let t = table.t_max;
    ProbabilityGrid::from_fn(t, Coordinates::Transformed, |k, l| {
        (0..=table.n_max)
            .map(|n| theta.powi((n + k + l) as i32) * table.get(n, k, l))
            .sum()
    })
}

/// Coefficients of the plain expansion in `rho` (`G = 0`), from the balance
/// equations written directly in `rho`. Kept separate from the accelerated
/// recursion, which must reduce to this at `G = 0`.
pub fn light_traffic_coefficients(max_order: usize) -> Vec<Vec<Vec<f64>>> {
    let m = max_order;
    // b[n][k][l], zero-initialized; order n+k+l <= m.
    let mut b = vec![vec![vec![0.0f64; m + 1]; m + 1]; m + 1];
    let get = |b: &Vec<Vec<Vec<f64>>>, n: i64, k: i64, l: i64| -> f64 {
        if n < 0 || k < 0 || l < 0 || (n + k + l) as usize > m {
            0.0
        } else {
            b[n as usize][k as usize][l as usize]
        }
    };
    b[0][0][0] = 1.0;
    for t in 1..=m as i64 {
        // Interior rows: (2 + 3 rho) pi(k,l) = pi(k,l+1) + 2 rho pi(k-1,l+1)
        //   + rho pi(k-1,l+2) + pi(k+1,l-1) [+ rho pi(k+1,0) if l = 2].
        for n in 0..t {
            for k in (1..=(t - n)).rev() {
                let l = t - n - k;
                let v = match l {
                    0 => {
                        (-3.0 * get(&b, n - 1, k, 0)
                            + get(&b, n - 1, k, 1)
                            + 2.0 * get(&b, n - 1, k - 1, 1)
                            + get(&b, n - 2, k - 1, 2))
                            / 2.0
                    }
                    1 => {
                        // 2 (1 + rho) pi(k,1) = pi(k,2) + 2 rho pi(k-1,2)
                        //   + rho pi(k-1,3) + 2 rho pi(k,0) + 2 pi(k+1,0)
                        (-2.0 * get(&b, n - 1, k, 1)
                            + get(&b, n - 1, k, 2)
                            + 2.0 * get(&b, n - 1, k - 1, 2)
                            + get(&b, n - 2, k - 1, 3)
                            + 2.0 * get(&b, n, k, 0)
                            + 2.0 * get(&b, n, k + 1, 0))
                            / 2.0
                    }
                    _ => {
                        let mut s = -3.0 * get(&b, n - 1, k, l)
                            + get(&b, n - 1, k, l + 1)
                            + 2.0 * get(&b, n - 1, k - 1, l + 1)
                            + get(&b, n - 2, k - 1, l + 2)
                            + get(&b, n, k + 1, l - 1);
                        if l == 2 {
                            s += get(&b, n, k + 1, 0);
                        }
                        s / 2.0
                    }
                };
                b[n as usize][k as usize][l as usize] = v;
            }
        }
        // Column k = 0, solved upward for the highest l of each equation.
        for l in 1..=t {
            let n = t - l;
            let v = match l {
                // pi(0,1) = rho pi(0,0)
                1 => get(&b, n, 0, 0),
                // pi(0,2) = (1 + rho) pi(0,1) - pi(1,0) - rho pi(0,0)
                2 => get(&b, n + 1, 0, 1) + get(&b, n, 0, 1) - get(&b, n + 1, 1, 0) - get(&b, n + 1, 0, 0),
                // 2 pi(0,l) = (2 + 3 rho) pi(0,l-1) - pi(1,l-2) [- rho pi(1,0) if l = 3]
                _ => {
                    let mut s = 2.0 * get(&b, n + 1, 0, l - 1) + 3.0 * get(&b, n, 0, l - 1)
                        - get(&b, n + 1, 1, l - 2);
                    if l == 3 {
                        s -= get(&b, n + 1, 1, 0);
                    }
                    s / 2.0
                }
            };
            b[n as usize][0][l as usize] = v;
        }
        let mut s = 0.0;
        for k in 0..=t {
            for l in 0..=(t - k) {
                if k + l > 0 {
                    s += get(&b, t - k - l, k, l);
                }
            }
        }
        b[t as usize][0][0] = -s;
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsaConfig {
    pub g: f64,
    /// Target precision; clamped from below by `epsilon_floor`.
    pub epsilon: f64,
    pub epsilon_floor: f64,
    pub max_iterations: usize,
    /// Iterations without a new smallest mass change that count as
    /// stagnation.
    pub divergence_window: usize,
    /// A change this many times the smallest one seen means round-off has
    /// taken over.
    pub blowup_factor: f64,
    /// When the loop stagnates, the best iterate is still accepted if its
    /// change was below this.
    pub accept_change: f64,
}

impl Default for PsaConfig {
    fn default() -> Self {
        Self {
            g: 1.0,
            epsilon: 1e-12,
            epsilon_floor: 1e-12,
            max_iterations: 500,
            divergence_window: 10,
            blowup_factor: 1e3,
            accept_change: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsaSolution {
    pub g: f64,
    pub theta: f64,
    pub rho: f64,
    /// Series order `N`.
    pub order: usize,
    /// State truncation `T`.
    pub truncation: usize,
    pub iterations: usize,
    pub last_change: f64,
    /// Stopped at the best iterate after round-off growth, above epsilon
    /// but below `accept_change`.
    pub precision_limited: bool,
    /// Mass of the truncated series before normalization.
    pub mass: f64,
    /// Normalized distribution on `{0..=T}^2`.
    pub grid: ProbabilityGrid,
    /// Relative mass change at each outer iteration.
    pub history: Vec<f64>,
}

/// Runs the outer loop: order `N` and truncation `T = T_0 + N - 1` grow
/// together until the relative change of the truncated mass drops below
/// epsilon.
pub fn solve(p: &ModelParams, config: &PsaConfig) -> Result<PsaSolution> {
    if p.a() != 0.5 {
        return Err(Error::Unsupported(format!(
            "the power-series recursions are derived for a = 1/2 only, got a = {}",
            p.a()
        )));
    }
    check_g(config.g)?;
    p.require_stable()?;
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, 1), got {}",
            config.epsilon
        )));
    }
    let eps = config.epsilon.max(config.epsilon_floor);
    let rho = p.rho();
    let theta = theta_from_rho(rho, config.g);
    let t0 = ((eps.ln() / (rho * rho).ln()).ceil() as usize).max(3);
    let trunc = |n: usize| t0 + n - 1;
    let reach = |n: usize| n + 2 * trunc(n);

    // contrib[j]: mass first counted at iteration j.
    let mut contrib: Vec<f64> = Vec::new();
    let mut shells = Shells::new(config.g);
    let mut done_shells = 0usize;
    let mut mass = 0.0;
    let mut history = Vec::new();
    let mut change = f64::INFINITY;
    let mut best = (f64::INFINITY, 1usize);
    let mut since_best = 0usize;
    let mut stop: Option<std::result::Result<usize, usize>> = None;

    // The recursion is unstable in floating point: coefficient errors grow
    // geometrically with the shell index, so past some order the change
    // stops shrinking and then explodes. Stop there and fall back to the
    // iterate with the smallest change if that one is good enough, and
    // otherwise report the iterate where the loop gave up.
    for n_iter in 1..=config.max_iterations {
        while done_shells <= reach(n_iter) {
            let t = done_shells;
            let shell = shells.advance();
            let weight = theta.powi(t as i32);
            for k in 0..=t {
                for l in 0..=(t - k) {
                    let n = t - k - l;
                    let first = n.max((k.max(l) + 1).saturating_sub(t0)).max(1);
                    if contrib.len() <= first {
                        contrib.resize(first + 1, 0.0);
                    }
                    contrib[first] += weight * shell.at(k, l);
                }
            }
            done_shells += 1;
        }
        let new_mass = mass + contrib[n_iter];
        if n_iter > 1 {
            let c = ((new_mass - mass) / new_mass).abs();
            history.push(c);
            change = c;
            if c.is_finite() && c < eps {
                mass = new_mass;
                stop = Some(Ok(n_iter));
                break;
            }
            if c.is_finite() && c < best.0 {
                best = (c, n_iter);
                since_best = 0;
            } else {
                since_best += 1;
            }
            if !c.is_finite()
                || c > config.blowup_factor * best.0
                || since_best >= config.divergence_window
            {
                stop = Some(Err(n_iter));
                break;
            }
        }
        mass = new_mass;
    }

    let (order, diverged, precision_limited) = match stop {
        Some(Ok(n)) => (n, false, false),
        Some(Err(_)) if best.0 <= config.accept_change => (best.1, false, true),
        Some(Err(n)) => (n, true, false),
        None => (config.max_iterations, false, false),
    };
    if precision_limited {
        change = best.0;
    }
    let truncation = trunc(order);
    let table = compute_coefficients(order, truncation, config.g)?;
    let mut grid = evaluate(rho, &table);
    let raw = grid.total();
    grid.normalize();
    let solution = PsaSolution {
        g: config.g,
        theta,
        rho,
        order,
        truncation,
        iterations: order,
        last_change: change,
        precision_limited,
        mass: if raw.is_finite() { raw } else { mass },
        grid,
        history,
    };
    if diverged {
        return Err(Error::Diverged {
            iterations: order,
            last_change: change,
            last: Box::new(solution),
        });
    }
    if stop.is_none() {
        return Err(Error::NotConverged {
            iterations: config.max_iterations,
            last_change: change,
        });
    }
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_examples() {
        assert!((theta_from_rho(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(theta_from_rho(0.37, 0.0), 0.37);
        assert!((theta_from_rho(1.0 - 1e-12, 3.0) - 1.0).abs() < 1e-11);
        assert_eq!(theta_from_rho(0.0, 2.0), 0.0);
    }

    #[test]
    fn origin_coefficient() {
        let t = compute_coefficients(2, 4, 1.0).unwrap();
        assert_eq!(t.get(0, 0, 0), 1.0);
        assert!(compute_coefficients(5, 4, 1.0).is_err());
    }

    #[test]
    fn zero_load_is_point_mass() {
        let t = compute_coefficients(3, 5, 1.0).unwrap();
        let g = evaluate(0.0, &t);
        assert_eq!(g.get(0, 0), 1.0);
        assert_eq!(g.total(), 1.0);
    }

    #[test]
    fn accelerated_recursion_reduces_to_plain_one() {
        let m = 8;
        let beta = light_traffic_coefficients(m);
        let table = compute_coefficients(m, m, 0.0).unwrap();
        for n in 0..=m {
            for k in 0..=m - n {
                for l in 0..=m - n - k {
                    let (a, b) = (table.get(n, k, l), beta[n][k][l]);
                    assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "({n},{k},{l}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn shells_never_read_unset_entries() {
        let mut shells = Shells::new(1.0);
        for _ in 0..=40 {
            let s = shells.advance();
            assert!(s.data.iter().enumerate().all(|(i, v)| {
                let side = s.t + 1;
                i / side + i % side > s.t || v.is_finite()
            }));
        }
    }

    /// Memoized top-down evaluation follows dependencies instead of the
    /// shell order, so agreement shows the order only resolves dependencies.
    #[test]
    fn order_independent() {
        use std::cell::RefCell;
        use std::collections::HashMap;

        fn top_down(n: i64, k: i64, l: i64, w: Weights, memo: &RefCell<HashMap<(i64, i64, i64), f64>>) -> f64 {
            if n < 0 || k < 0 || l < 0 {
                return 0.0;
            }
            if let Some(&v) = memo.borrow().get(&(n, k, l)) {
                return v;
            }
            let u = |a, b, c| top_down(a, b, c, w, memo);
            let v = match (n, k, l) {
                (0, 0, 0) => 1.0,
                (t, 0, 0) => -shell_sum(t, &u),
                _ => coefficient(n, k, l, w, &u),
            };
            memo.borrow_mut().insert((n, k, l), v);
            v
        }

        let w = Weights::new(1.0);
        let memo = RefCell::new(HashMap::new());
        let mut shells = Shells::new(1.0);
        for t in 0..=14usize {
            let s = shells.advance();
            for k in 0..=t {
                for l in 0..=(t - k) {
                    let n = t - k - l;
                    let v = top_down(n as i64, k as i64, l as i64, w, &memo);
                    assert_eq!(v.to_bits(), s.at(k, l).to_bits(), "u({n},{k},{l})");
                }
            }
        }
    }

    #[test]
    fn rejects_asymmetric_transmission() {
        let p = ModelParams::new(0.2, 0.4).unwrap();
        assert!(matches!(solve(&p, &PsaConfig::default()), Err(Error::Unsupported(_))));
    }
}
