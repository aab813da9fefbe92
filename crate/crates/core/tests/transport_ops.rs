use std::f64::consts::PI;

use proptest::prelude::*;
use vfp_core::diagnostics::{invariants, least_squares_slope};
use vfp_core::transport::*;
use vfp_core::{DistState, PhaseGrid, Scenario, Simulation, SpectralPlan};

fn grid(n_x: usize, n_v: usize, v_max: f64) -> PhaseGrid {
    PhaseGrid::build(4.0 * PI, n_x, v_max, n_v, 1).unwrap()
}

fn fill(g: PhaseGrid, f: impl Fn(f64, f64) -> f64) -> DistState {
    let space = g.space.unwrap();
    let cl = g.column_len();
    let mut values = vec![0.0; g.len()];
    for i in 0..g.columns() {
        for c in 0..cl {
            values[i * cl + c] = f(space.node(i), g.velocity_of(c).0);
        }
    }
    DistState::from_values(g, values, 0.0).unwrap()
}

fn plan(g: &PhaseGrid) -> SpectralPlan {
    SpectralPlan::new(&g.space.unwrap())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn g_of_v(v: f64) -> f64 {
    (-v * v / 2.0).exp()
}

#[test]
fn spectral_advection_translates_band_limited_data() {
    let g = grid(32, 64, 6.0);
    let k = 0.5;
    let f = fill(g, |x, v| g_of_v(v) * (k * x).cos());
    let dt = 0.73;
    let out = advect_x(&f, dt, &plan(&g)).unwrap();
    let exact = fill(g, |x, v| g_of_v(v) * (k * (x - v * dt)).cos());
    assert!(max_diff(&out.values, &exact.values) < 1e-12);
}

#[test]
fn spatially_uniform_data_is_unchanged() {
    let g = grid(16, 32, 6.0);
    let f = fill(g, |_, v| g_of_v(v));
    let out = advect_x(&f, 2.0, &plan(&g)).unwrap();
    assert!(max_diff(&out.values, &f.values) < 1e-13);
}

#[test]
fn spline_advection_approximates_translation() {
    let g = grid(64, 32, 4.0);
    let k = 0.5;
    let f = fill(g, |x, v| g_of_v(v) * (1.0 + 0.3 * (k * x).sin()));
    let dt = 0.4;
    let out = advect_x_spline(&f, dt).unwrap();
    let exact = fill(g, |x, v| g_of_v(v) * (1.0 + 0.3 * (k * (x - v * dt)).sin()));
    assert!(max_diff(&out.values, &exact.values) < 1e-5);
    let before = invariants(&f, None).mass;
    assert!((invariants(&out, None).mass - before).abs() < 1e-12 * before);
}

#[test]
fn poisson_field_for_cosine_density() {
    let g = grid(64, 128, 10.0);
    let (k, eps) = (0.5, 0.01);
    let norm = 1.0 / (2.0 * PI).sqrt();
    let f = fill(g, |x, v| norm * g_of_v(v) * (1.0 + eps * (k * x).cos()));
    let e = poisson_field(&f, &plan(&g)).unwrap();
    let space = g.space.unwrap();
    // With ∂_x E = n - 1 the field is the zero-mean antiderivative of ε cos kx.
    let n0 = density(&f).iter().sum::<f64>() / 64.0;
    for (i, ei) in e.iter().enumerate() {
        let exact = n0 * eps / k * (k * space.node(i)).sin();
        assert!((ei - exact).abs() < 1e-12, "{ei} vs {exact}");
    }
    assert!(e.iter().sum::<f64>().abs() < 1e-14);
}

#[test]
fn neutral_plasma_has_no_field() {
    let g = grid(16, 64, 8.0);
    let norm = 1.0 / (2.0 * PI).sqrt();
    let f = fill(g, |_, v| norm * g_of_v(v));
    let rescale = 1.0 / density(&f)[0];
    let f = fill(g, |_, v| rescale * norm * g_of_v(v));
    let e = poisson_field(&f, &plan(&g)).unwrap();
    assert!(e.iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn ampere_trivial_cases() {
    let g = grid(8, 32, 6.0);
    let even = fill(g, |x, v| g_of_v(v) * (2.0 + x.sin()));
    let e0: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
    let e1 = ampere_update(&e0, &even, 0.5);
    assert!(max_diff(&e0, &e1) < 1e-15);
    let shifted = fill(g, |_, v| g_of_v(v - 1.0));
    let j = current(&shifted)[0];
    let e2 = ampere_update(&e0, &shifted, 0.5);
    for (a, b) in e0.iter().zip(&e2) {
        assert!((b - (a - 0.5 * j)).abs() < 1e-15);
    }
}

#[test]
fn upwind_exact_for_linear_data() {
    let n = 41;
    let dv = 0.25;
    let f: Vec<f64> = (0..n).map(|j| 2.0 - 0.7 * j as f64 * dv).collect();
    for speed in [1.0, -1.0] {
        let d = upwind_dv(&f, dv, speed).unwrap();
        // Inflow ghosts are zero, so only the first two downwind-facing
        // nodes at the inflow end differ from the exact slope.
        let range = if speed > 0.0 { 2..n } else { 0..n - 2 };
        for j in range {
            assert!((d[j] + 0.7).abs() < 1e-12, "speed={speed} j={j} {}", d[j]);
        }
    }
}

#[test]
fn upwind_exact_for_cubics_at_interior_nodes() {
    let n = 33;
    let dv = 0.2;
    let v = |j: usize| -3.2 + j as f64 * dv;
    let f: Vec<f64> = (0..n).map(|j| v(j).powi(3) - 2.0 * v(j)).collect();
    for speed in [0.3, -0.3] {
        let d = upwind_dv(&f, dv, speed).unwrap();
        for j in 2..n - 2 {
            let exact = 3.0 * v(j).powi(2) - 2.0;
            assert!((d[j] - exact).abs() < 1e-10, "j={j}");
        }
    }
}

#[test]
fn upwind_sine_converges_at_third_order() {
    for speed in [1.0, -1.0] {
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for n in [40usize, 80, 160, 320] {
            let dv = 2.0 * PI / n as f64;
            let f: Vec<f64> = (0..=n).map(|j| (j as f64 * dv).sin()).collect();
            let d = upwind_dv(&f, dv, speed).unwrap();
            let err = (2..n - 1)
                .map(|j| (d[j] - (j as f64 * dv).cos()).abs())
                .fold(0.0, f64::max);
            hs.push(dv.ln());
            errs.push(err.ln());
        }
        let p = least_squares_slope(&hs, &errs);
        assert!(p >= 2.9, "speed={speed}: {p}");
    }
}

#[test]
fn upwind_rejects_short_lines() {
    assert!(matches!(
        upwind_dv(&[0.0; 5], 0.1, 1.0),
        Err(vfp_core::Error::StencilTooSmall { .. })
    ));
}

#[test]
fn semi_lagrangian_velocity_steps_compose() {
    let g = grid(4, 128, 8.0);
    let f = fill(g, |x, v| g_of_v(v - 0.5) * (1.0 + 0.1 * x.cos()));
    let e = vec![0.3, -0.2, 0.1, 0.05];
    let once = advect_v_sl(&f, &e, 1.0).unwrap();
    let twice = advect_v_sl(&advect_v_sl(&f, &e, 0.5).unwrap(), &e, 0.5).unwrap();
    assert!(max_diff(&once.values, &twice.values) < 1e-5);
    let m0 = invariants(&f, None).mass;
    assert!((invariants(&once, None).mass - m0).abs() < 1e-10 * m0);
}

#[test]
fn midpoint_velocity_stage_conserves_total_energy() {
    let g = grid(32, 128, 10.0);
    let norm = 1.0 / (2.0 * PI).sqrt();
    let f = fill(g, |x, v| norm * g_of_v(v) * (1.0 + 0.05 * (0.5 * x).cos()));
    let e = poisson_field(&f, &plan(&g)).unwrap();
    let before = invariants(&f, Some(&e));
    let (f1, e1) = rk2_velocity_stage(&f, &e, 0.1).unwrap();
    let after = invariants(&f1, Some(&e1));
    assert!((after.total - before.total).abs() < 1e-13 * before.total);
    assert!((after.mass - before.mass).abs() < 1e-13 * before.mass);
}

fn gauss_drift(sim: &Simulation) -> f64 {
    let e = sim.e_field().unwrap();
    let de = spectral_derivative(e, sim.plan().unwrap());
    let n = density(&sim.f);
    de.iter()
        .zip(&n)
        .map(|(d, n)| (d - (n - 1.0)).abs())
        .fold(0.0, f64::max)
}

/// Drift of `∂_x E - (n - 1)` after fixed steps of the two-beam case, at
/// `t = 10` and `t = 20`.
fn two_beam_drift(dt: f64) -> (f64, f64) {
    let mut sc = Scenario::builtin("bump-2beam").unwrap();
    sc.tol = None;
    sc.dt = dt;
    let mut sim = Simulation::new(sc).unwrap();
    assert!(gauss_drift(&sim) < 1e-12);
    let steps = (10.0 / dt).round() as usize;
    let mut marks = Vec::new();
    for _ in 0..2 {
        for _ in 0..steps {
            let trial = sim.trial_step(dt).unwrap();
            sim.commit(trial);
        }
        marks.push(gauss_drift(&sim));
    }
    (marks[0], marks[1])
}

#[test]
fn gauss_law_drift_is_second_order_and_frozen_after_transient() {
    let (coarse, coarse_late) = two_beam_drift(0.5);
    let (fine, fine_late) = two_beam_drift(0.25);
    let p = (coarse / fine).log2();
    assert!(p > 1.6, "{coarse} {fine} order {p}");
    assert!((coarse_late - coarse).abs() < 0.05 * coarse);
    assert!((fine_late - fine).abs() < 0.05 * fine);
}

proptest! {
    #[test]
    fn spectral_advection_is_a_group(a in -2.0f64..2.0, b in -2.0f64..2.0, phase in 0.0f64..6.0) {
        let g = grid(16, 32, 5.0);
        let f = fill(g, |x, v| g_of_v(v) * (2.0 + (0.5 * x + phase).sin() + 0.3 * (1.5 * x).cos()));
        let p = plan(&g);
        let ab = advect_x(&advect_x(&f, a, &p).unwrap(), b, &p).unwrap();
        let direct = advect_x(&f, a + b, &p).unwrap();
        prop_assert!(max_diff(&ab.values, &direct.values) < 1e-12);
        let back = advect_x(&advect_x(&f, a, &p).unwrap(), -a, &p).unwrap();
        prop_assert!(max_diff(&back.values, &f.values) < 1e-12);
    }

    #[test]
    fn advection_keeps_per_velocity_sums(dt in -5.0f64..5.0) {
        let g = grid(16, 16, 4.0);
        let f = fill(g, |x, v| g_of_v(v) * (1.5 + x.sin() * v));
        let out = advect_x(&f, dt, &plan(&g)).unwrap();
        let cl = g.column_len();
        for c in 0..cl {
            let s0: f64 = (0..16).map(|i| f.values[i * cl + c]).sum();
            let s1: f64 = (0..16).map(|i| out.values[i * cl + c]).sum();
            prop_assert!((s0 - s1).abs() < 1e-12);
        }
    }
}
