//! Slot-by-slot simulation of the two relays.
//!
//! A slot runs as follows: a packet arrives with probability `lambda` and joins
//! the shorter queue (fair coin on a tie); then every non-empty relay attempts
//! with probability `a`; a lone attempt succeeds, two attempts collide and
//! nobody leaves.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::grid::{Coordinates, ProbabilityGrid};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub warmup_slots: u64,
    pub measure_slots: u64,
    pub replications: usize,
    /// Side of the empirical distribution grid; larger states are pooled.
    pub grid_cap: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            warmup_slots: 10_000,
            measure_slots: 1_000_000,
            replications: 10,
            grid_cap: 60,
        }
    }
}

/// The uniforms consumed by one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotDraws {
    pub arrival: f64,
    pub tie: f64,
    pub attempt: [f64; 2],
}

impl SlotDraws {
    pub fn sample(rng: &mut impl Rng) -> Self {
        Self {
            arrival: rng.gen(),
            tie: rng.gen(),
            attempt: [rng.gen(), rng.gen()],
        }
    }

    /// The draws that make relay 2 do what relay 1 did and vice versa.
    pub fn swapped(&self) -> Self {
        Self {
            arrival: self.arrival,
            tie: 1.0 - self.tie,
            attempt: [self.attempt[1], self.attempt[0]],
        }
    }
}

/// One slot from `state = [Q1, Q2]`.
pub fn step_with(state: [u64; 2], p: &ModelParams, d: &SlotDraws) -> [u64; 2] {
    let mut q = state;
    if d.arrival < p.lambda() {
        let target = match q[0].cmp(&q[1]) {
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Equal => usize::from(d.tie >= 0.5),
        };
        q[target] += 1;
    }
    let tries = [q[0] > 0 && d.attempt[0] < p.a(), q[1] > 0 && d.attempt[1] < p.a()];
    match tries {
        [true, false] => q[0] -= 1,
        [false, true] => q[1] -= 1,
        _ => {}
    }
    q
}

pub fn step(state: [u64; 2], p: &ModelParams, rng: &mut impl Rng) -> [u64; 2] {
    step_with(state, p, &SlotDraws::sample(rng))
}

fn replication_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Queue lengths after each slot driven by the given draws, starting at `start`.
pub fn sample_path(p: &ModelParams, start: [u64; 2], draws: &[SlotDraws]) -> Vec<[u64; 2]> {
    let mut q = start;
    let mut out = Vec::with_capacity(draws.len() + 1);
    out.push(q);
    for d in draws {
        q = step_with(q, p, d);
        out.push(q);
    }
    out
}

/// Relative frequencies of the increments `(dQ1, dQ2)` over `samples`
/// independent slots started from `state`.
pub fn one_step_frequencies(
    state: [u64; 2],
    p: &ModelParams,
    samples: u64,
    seed: u64,
) -> BTreeMap<(i64, i64), f64> {
    let mut rng = replication_rng(seed, 0);
    let mut counts: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    for _ in 0..samples {
        let q = step(state, p, &mut rng);
        let d = (q[0] as i64 - state[0] as i64, q[1] as i64 - state[1] as i64);
        *counts.entry(d).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / samples as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Half-width of the 95% confidence interval across replications.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub mean_total: Estimate,
    pub sojourn: Estimate,
    /// `None` if some replication saw a queue that never changed.
    pub correlation: Option<Estimate>,
    /// Empirical distribution in `(Q1, Q2)` coordinates up to the cap.
    pub pi: ProbabilityGrid,
    /// Fraction of slots spent outside the grid; adds to `pi` to one.
    pub overflow: f64,
    pub replications: usize,
}

#[derive(Debug, Clone)]
struct RepStats {
    slots: u64,
    sum: [u128; 2],
    sum_sq: [u128; 2],
    sum_prod: u128,
    counts: Vec<u64>,
    overflow: u64,
}

fn run_replication(p: &ModelParams, config: &SimConfig, r: u64) -> RepStats {
    let mut rng = replication_rng(config.seed, r);
    let mut q = [0u64; 2];
    for _ in 0..config.warmup_slots {
        q = step(q, p, &mut rng);
    }
    let side = config.grid_cap + 1;
    let mut st = RepStats {
        slots: config.measure_slots,
        sum: [0; 2],
        sum_sq: [0; 2],
        sum_prod: 0,
        counts: vec![0; side * side],
        overflow: 0,
    };
    for _ in 0..config.measure_slots {
        q = step(q, p, &mut rng);
        let (a, b) = (q[0] as u128, q[1] as u128);
        st.sum[0] += a;
        st.sum[1] += b;
        st.sum_sq[0] += a * a;
        st.sum_sq[1] += b * b;
        st.sum_prod += a * b;
        if q[0] as usize <= config.grid_cap && q[1] as usize <= config.grid_cap {
            st.counts[q[0] as usize * side + q[1] as usize] += 1;
        } else {
            st.overflow += 1;
        }
    }
    st
}

fn confidence(samples: &[f64]) -> Estimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return Estimate {
            mean,
            half_width: f64::INFINITY,
        };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);
    Estimate {
        mean,
        half_width: t * (var / n).sqrt(),
    }
}

pub fn simulate(p: &ModelParams, config: &SimConfig) -> Result<SimResult> {
    if config.measure_slots == 0 || config.replications == 0 {
        return Err(Error::Config(
            "need at least one measured slot and one replication".into(),
        ));
    }
    let reps: Vec<RepStats> = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(p, config, r))
        .collect();

    let mut totals = Vec::new();
    let mut sojourns = Vec::new();
    let mut corrs = Vec::new();
    let side = config.grid_cap + 1;
    let mut counts = vec![0u64; side * side];
    let mut overflow = 0u64;
    for st in &reps {
        let n = st.slots as f64;
        let m = [st.sum[0] as f64 / n, st.sum[1] as f64 / n];
        let v = [
            st.sum_sq[0] as f64 / n - m[0] * m[0],
            st.sum_sq[1] as f64 / n - m[1] * m[1],
        ];
        let cov = st.sum_prod as f64 / n - m[0] * m[1];
        totals.push(m[0] + m[1]);
        sojourns.push((m[0] + m[1]) / p.lambda());
        if v[0] > 0.0 && v[1] > 0.0 {
            corrs.push(cov / (v[0] * v[1]).sqrt());
        }
        counts.iter_mut().zip(&st.counts).for_each(|(a, b)| *a += b);
        overflow += st.overflow;
    }
    let all = (config.measure_slots * config.replications as u64) as f64;
    let pi = ProbabilityGrid::from_values(
        config.grid_cap,
        Coordinates::Original,
        counts.iter().map(|&c| c as f64 / all).collect(),
    );
    Ok(SimResult {
        mean_total: confidence(&totals),
        sojourn: confidence(&sojourns),
        correlation: (corrs.len() == reps.len()).then(|| confidence(&corrs)),
        pi,
        overflow: overflow as f64 / all,
        replications: config.replications,
    })
}

/// Settings for the empirical search of the stability boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundarySearch {
    pub seed: u64,
    /// Slots per classification run, started from the empty system.
    pub horizon: u64,
    pub bisections: usize,
    /// Least-squares growth rate of `Q1 + Q2` per slot above which a run counts as unstable.
    pub slope_threshold: f64,
}

impl Default for BoundarySearch {
    fn default() -> Self {
        Self {
            seed: 1,
            horizon: 400_000,
            bisections: 12,
            slope_threshold: 0.003,
        }
    }
}

/// Least-squares slope of `Q1 + Q2` against time over one run.
pub fn growth_rate(p: &ModelParams, horizon: u64, rng: &mut impl Rng) -> f64 {
    let mut q = [0u64; 2];
    let (mut sy, mut sxy) = (0.0f64, 0.0f64);
    for t in 0..horizon {
        q = step(q, p, rng);
        let y = (q[0] + q[1]) as f64;
        sy += y;
        sxy += t as f64 * y;
    }
    let n = horizon as f64;
    let xbar = (n - 1.0) / 2.0;
    let sxx = n * (n * n - 1.0) / 12.0;
    (sxy - xbar * sy) / sxx
}

/// Arrival rate at which queues start to grow linearly, found by bisection.
pub fn estimate_stability_boundary(a: f64, search: &BoundarySearch) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "a must lie strictly inside (0, 1), got {a}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for i in 0..search.bisections {
        let mid = 0.5 * (lo + hi);
        let p = ModelParams::new(mid, a)?;
        let mut rng = replication_rng(search.seed, i as u64);
        if growth_rate(&p, search.horizon, &mut rng) > search.slope_threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
