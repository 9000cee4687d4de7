use jsrq::compensation::{kernel_residual, CompensationSeries};
use jsrq::model::{drift_vectors, region_of, region_steps, transition_distribution, Region};
use jsrq::simulator::{sample_path, SlotDraws};
use jsrq::ModelParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const REGIONS: [Region; 6] = [Region::H, Region::V, Region::Hp, Region::Vp, Region::D, Region::O];

/// Any `(lambda, a)` in the open unit square.
fn params() -> impl Strategy<Value = ModelParams> {
    (0.001f64..0.999, 0.001f64..0.999).prop_map(|(l, a)| ModelParams::new(l, a).unwrap())
}

/// Stable parameters, away from the boundary.
fn stable() -> impl Strategy<Value = ModelParams> {
    (0.05f64..0.95, 0.02f64..0.98).prop_map(|(a, u)| {
        ModelParams::new(u * 2.0 * a * (1.0 - a), a).unwrap()
    })
}

proptest! {
    #[test]
    fn region_laws_sum_to_one(p in params()) {
        for r in REGIONS {
            let law = region_steps(r, &p);
            let total: f64 = law.steps.iter().map(|s| s.prob).sum();
            prop_assert!((total - 1.0).abs() < 1e-14, "{r:?}: {total}");
            prop_assert!(law.steps.iter().all(|s| s.prob >= 0.0));
        }
    }

    #[test]
    fn drifts_are_step_means(p in params()) {
        let d = drift_vectors(&p);
        let mean = |r| {
            let law = region_steps(r, &p);
            law.steps.iter().fold((0.0, 0.0), |(x, y), s| {
                (x + s.prob * s.di as f64, y + s.prob * s.dj as f64)
            })
        };
        for (r, v) in [(Region::H, d.h), (Region::V, d.v), (Region::Hp, d.hp), (Region::Vp, d.vp), (Region::D, d.d)] {
            let m = mean(r);
            prop_assert!((m.0 - v.0).abs() < 1e-14 && (m.1 - v.1).abs() < 1e-14, "{r:?}");
        }
        // Total drift in the interior is lambda minus the success rate of two busy relays.
        prop_assert!((d.h.0 + d.h.1 - (p.lambda() - 2.0 * p.a() * p.abar())).abs() < 1e-14);
    }

    #[test]
    fn mirrored_states_have_mirrored_laws(p in params(), i in 0usize..6, j in 0usize..6) {
        let a = transition_distribution((i, j), &p);
        let b = transition_distribution((j, i), &p);
        prop_assert_eq!(a.steps.len(), b.steps.len());
        for s in &a.steps {
            let m = b.steps.iter().find(|t| t.di == s.dj && t.dj == s.di).unwrap();
            prop_assert_eq!(m.prob, s.prob);
        }
        prop_assert_eq!(region_of(i, j) == Region::D, i == j && i > 0);
    }

    #[test]
    fn roots_interleave_and_solve_the_kernel(p in stable()) {
        let s = CompensationSeries::build(&p, 12).unwrap();
        for r in s.root_pairs() {
            prop_assert!(kernel_residual(r.gamma, r.delta, &p).abs() < 1e-12);
        }
        for i in 0..=12 {
            prop_assert!(s.gammas[i] > s.deltas[i] && s.deltas[i] > s.gammas[i + 1]);
        }
        prop_assert!(s.initial_consistency < 1e-10);
    }

    #[test]
    fn simulator_is_exchange_symmetric(p in params(), seed in any::<u64>(), q1 in 0u64..5, q2 in 0u64..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<SlotDraws> = (0..300).map(|_| SlotDraws::sample(&mut rng)).collect();
        let swapped: Vec<SlotDraws> = draws.iter().map(SlotDraws::swapped).collect();
        let a = sample_path(&p, [q1, q2], &draws);
        let b = sample_path(&p, [q2, q1], &swapped);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(*x, [y[1], y[0]]);
        }
    }
}
