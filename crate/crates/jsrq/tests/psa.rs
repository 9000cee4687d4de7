use jsrq::compensation::{self, CompensationConfig};
use jsrq::psa::{self, compute_coefficients, evaluate, PsaConfig};
use jsrq::{Error, ModelParams};

#[test]
fn acceleration_parameter_does_not_change_the_answer() {
    let p = ModelParams::from_rho(0.3, 0.5).unwrap();
    let ca = compensation::solve(&p, &CompensationConfig::default()).unwrap().grid;
    for g in [0.0, 0.5, 1.0, 2.0] {
        let s = psa::solve(&p, &PsaConfig { g, ..PsaConfig::default() }).unwrap();
        assert!(s.grid.max_abs_diff(&ca) < 1e-10, "G={g}");
    }
}

#[test]
fn each_shell_past_the_origin_sums_to_zero() {
    let t = compute_coefficients(6, 12, 1.0).unwrap();
    for n in 1..=6 {
        // Only shells that fit entirely in the table.
        let s: f64 = (0..=n)
            .flat_map(|k| (0..=n - k).map(move |l| (k, l)))
            .map(|(k, l)| t.get(n - k - l, k, l))
            .sum();
        assert!(s.abs() < 1e-12, "shell {n}: {s}");
    }
}

#[test]
fn partial_sums_have_unit_mass_at_light_load() {
    let t = compute_coefficients(20, 30, 1.0).unwrap();
    let g = evaluate(0.05, &t);
    assert!((g.total() - 1.0).abs() < 1e-12);
}

#[test]
fn heavy_load_reports_divergence_quickly() {
    let p = ModelParams::from_rho(0.9, 0.5).unwrap();
    let start = std::time::Instant::now();
    match psa::solve(&p, &PsaConfig::default()) {
        Err(Error::Diverged { last, .. }) => assert!(!last.history.is_empty()),
        other => panic!("expected divergence, got {other:?}"),
    }
    assert!(start.elapsed().as_secs() < 10);
}

#[test]
fn round_off_floor_is_flagged() {
    let p = ModelParams::from_rho(0.7, 0.5).unwrap();
    let s = psa::solve(&p, &PsaConfig::default()).unwrap();
    assert!(s.precision_limited);
    assert!(s.last_change <= PsaConfig::default().accept_change);
    let p = ModelParams::from_rho(0.4, 0.5).unwrap();
    assert!(!psa::solve(&p, &PsaConfig::default()).unwrap().precision_limited);
}

#[test]
fn invalid_inputs() {
    let p = ModelParams::from_rho(0.4, 0.5).unwrap();
    let bad_g = PsaConfig { g: -1.0, ..PsaConfig::default() };
    assert!(matches!(psa::solve(&p, &bad_g), Err(Error::Config(_))));
    let unstable = ModelParams::new(0.6, 0.5).unwrap();
    assert!(psa::solve(&unstable, &PsaConfig::default()).unwrap_err().is_stability());
}
