use std::f64::consts::PI;

use vfp_core::collision::{assemble_frozen_operator, discrete_maxwellian};
use vfp_core::diagnostics::*;
use vfp_core::io::*;
use vfp_core::{DistState, PhaseGrid, VelocityGrid};

fn landau_state() -> DistState {
    let g = PhaseGrid::build(4.0 * PI, 8, 6.0, 32, 1).unwrap();
    let space = g.space.unwrap();
    let cl = g.column_len();
    let mut values = vec![0.0; g.len()];
    for i in 0..g.columns() {
        for c in 0..cl {
            let v = g.velocity_of(c).0;
            values[i * cl + c] = (-v * v / 2.0).exp() / (2.0 * PI).sqrt() * (1.0 + 0.01 * (0.5 * space.node(i)).cos()) + 1e-300;
        }
    }
    DistState::from_values(g, values, 3.25).unwrap()
}

#[test]
fn snapshot_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.snap");
    let f = landau_state();
    let e: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin() / 3.0).collect();
    write_snapshot(&path, &f, Some(&e)).unwrap();
    let back = read_snapshot(&path).unwrap();
    assert_eq!(back.state, f);
    assert_eq!(back.field.as_deref(), Some(&e[..]));
    for (a, b) in back.state.values.iter().zip(&f.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    write_snapshot(&path, &f, None).unwrap();
    assert!(read_snapshot(&path).unwrap().field.is_none());
}

#[test]
fn homogeneous_snapshot_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.snap");
    let vg = VelocityGrid::new(10.0, 50, 1).unwrap();
    let g = PhaseGrid::homogeneous(vg);
    let f = DistState::from_values(g, discrete_maxwellian(1.0, 0.2, 1.3, &vg).unwrap(), 0.0).unwrap();
    write_snapshot(&path, &f, None).unwrap();
    assert_eq!(read_snapshot(&path).unwrap().state, f);
}

#[test]
fn truncated_snapshot_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.snap");
    write_snapshot(&path, &landau_state(), None).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let cut: Vec<&str> = text.lines().take(10).collect();
    std::fs::write(&path, cut.join("\n")).unwrap();
    assert!(matches!(read_snapshot(&path), Err(vfp_core::Error::Parse { .. })));
    assert!(matches!(
        read_snapshot(&dir.path().join("missing")),
        Err(vfp_core::Error::IoFailure { .. })
    ));
}

#[test]
fn frozen_matrix_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.txt");
    let vg = VelocityGrid::new(12.0, 24, 1).unwrap();
    let a = assemble_frozen_operator(1.0, 0.0, 1.88, 0.5, &vg).unwrap();
    write_matrix(&path, 24, &a).unwrap();
    let (n_v, b) = read_matrix(&path).unwrap();
    assert_eq!(n_v, 24);
    assert_eq!(a, b);
}

#[test]
fn empty_series_has_header_only() {
    let s = DiagSeries::new(false);
    assert_eq!(series_csv(&s), format!("{}\n", s.header()));
    let two = DiagSeries::new(true);
    assert!(two.header().contains("momentum_y"));
    assert!(two.deviations().is_empty());
}

#[test]
fn entropy_of_reference_is_mass_and_scales_quadratically() {
    let f = landau_state();
    let m = reference_maxwellian(&f).unwrap();
    let as_state = DistState::from_values(f.grid, m.clone(), 0.0).unwrap();
    let mass = invariants(&as_state, None).mass;
    let h = entropy(&as_state, &m).unwrap();
    assert!((h - mass).abs() < 1e-14 * mass);
    let scaled = DistState::from_values(f.grid, f.values.iter().map(|x| 3.0 * x).collect(), 0.0).unwrap();
    let (h1, h3) = (entropy(&f, &m).unwrap(), entropy(&scaled, &m).unwrap());
    assert!((h3 - 9.0 * h1).abs() < 1e-13 * h3);
    assert_eq!(l2_distance(&as_state, &m), 0.0);
}

#[test]
fn entropy_rejects_nonpositive_reference() {
    let f = landau_state();
    let mut m = reference_maxwellian(&f).unwrap();
    m[3] = 0.0;
    assert!(entropy(&f, &m).is_err());
}

#[test]
fn invariants_of_shifted_maxwellian() {
    let vg = VelocityGrid::new(12.0, 400, 1).unwrap();
    let g = PhaseGrid::homogeneous(vg);
    let f = DistState::from_values(g, discrete_maxwellian(2.0, 0.5, 1.2, &vg).unwrap(), 0.0).unwrap();
    let inv = invariants(&f, None);
    assert!((inv.mass - 2.0).abs() < 1e-8);
    assert!((inv.momentum_x - 1.0).abs() < 1e-8);
    let expected = 0.5 * 2.0 * (1.2 + 0.25);
    assert!((inv.kinetic - expected).abs() < 1e-8, "{} {expected}", inv.kinetic);
    assert_eq!(inv.electric, 0.0);
}

#[test]
fn fit_recovers_rate_of_damped_oscillation() {
    let gamma = -0.153;
    let t: Vec<f64> = (0..3000).map(|i| i as f64 * 0.01).collect();
    let energy: Vec<f64> = t
        .iter()
        .map(|t| {
            let a = (gamma * t).exp() * (1.4 * t).cos();
            a * a
        })
        .collect();
    let r = fit_damping(&t, &energy, (2.0, 28.0), RateKind::Field).unwrap();
    assert!((r - gamma).abs() < 2e-3, "{r}");
    let re = fit_damping(&t, &energy, (2.0, 28.0), RateKind::Energy).unwrap();
    assert!((re - 2.0 * r).abs() < 1e-12);
}
