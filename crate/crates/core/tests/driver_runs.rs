use vfp_core::diagnostics::{fit_damping, RateKind};
use vfp_core::driver::BUILTIN_NAMES;
use vfp_core::{run, Error, Integrator, Scenario, Simulation, Splitting};

#[test]
fn every_builtin_builds_an_initial_state() {
    for name in BUILTIN_NAMES {
        let sc = Scenario::builtin(name).unwrap();
        let sim = Simulation::new(sc).unwrap();
        assert!(sim.f.is_finite(), "{name}");
        assert!(sim.f.values.iter().all(|x| *x >= 0.0), "{name}");
    }
}

#[test]
fn runs_are_deterministic() {
    let mut sc = Scenario::builtin("hom-relax").unwrap();
    sc.t_end = 20.0;
    let a = run(&sc).unwrap();
    let b = run(&sc).unwrap();
    assert_eq!(a.final_state, b.final_state);
    assert_eq!(a.summary.rhs_evals, b.summary.rhs_evals);
    assert_eq!(a.records.len(), b.records.len());
}

#[test]
fn collisionless_landau_damps_at_theoretical_rate() {
    let mut sc = Scenario::builtin("landau-1d").unwrap();
    sc.t_end = 40.0;
    sc.cadence = 0.1;
    let out = run(&sc).unwrap();
    let rate = fit_damping(&out.series.times(), &out.series.electric(), (0.0, 40.0), RateKind::Field).unwrap();
    assert!((rate + 0.1533).abs() < 0.01, "{rate}");
    let dev = out.series.deviations();
    let e0 = out.series.rows[0].inv.total;
    assert!(dev.iter().all(|d| d[2].abs() < 1e-11 * e0));
}

#[test]
fn explicit_midpoint_fails_where_chebyshev_survives() {
    let mut sc = Scenario::builtin("beams-2dv").unwrap();
    sc.t_end = 20.0;
    sc.n_x = 4;
    sc.integrator = Integrator::Rk2;
    sc.stages = None;
    let err = run(&sc).unwrap_err();
    assert!(matches!(err, Error::NonFiniteState { .. }), "{err:?}");

    sc.integrator = Integrator::Rkc2;
    sc.stages = Some(5);
    let out = run(&sc).unwrap();
    assert!(out.final_state.is_finite());
    let m: Vec<f64> = out.series.rows.iter().map(|r| r.inv.mass).collect();
    assert!((m.last().unwrap() - m[0]).abs() < 1e-10 * m[0]);
}

#[test]
fn adaptive_rejections_keep_state_finite() {
    let mut sc = Scenario::builtin("hom-relax").unwrap();
    sc.t_end = 5.0;
    // An oversized first step must be rejected rather than accepted.
    sc.dt = 50.0;
    sc.tol = Some(1e-8);
    let out = run(&sc).unwrap();
    assert!(out.summary.rejected >= 1);
    assert!(out.final_state.is_finite());
    assert_eq!(out.final_state.t, 5.0);
}

#[test]
fn toml_overrides_apply_to_base_scenario() {
    let sc = Scenario::from_toml("base = \"landau-1d\"\nnu = 0.05\nsplitting = \"sl-rkc\"\n").unwrap();
    assert_eq!(sc.nu, 0.05);
    assert_eq!(sc.splitting, Splitting::SlRkc);
    assert_eq!(sc.n_x, 128);
    let back = Scenario::from_toml(&sc.to_toml()).unwrap();
    assert_eq!(back, sc);
    assert!(matches!(Scenario::builtin("nope"), Err(Error::UnknownScenario(_))));
}

#[test]
fn resuming_from_a_state_matches_a_single_run() {
    let mut sc = Scenario::builtin("landau-1d").unwrap();
    sc.n_x = 32;
    sc.n_v = 128;
    sc.t_end = 4.0;
    let full = run(&sc).unwrap();

    let mut first = sc.clone();
    first.t_end = 2.0;
    let half = run(&first).unwrap();
    let mut sim = Simulation::from_state(sc.clone(), half.final_state, half.field).unwrap();
    let rest = sim.run().unwrap();
    let diff = full
        .final_state
        .values
        .iter()
        .zip(&rest.final_state.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-13, "{diff}");
}
