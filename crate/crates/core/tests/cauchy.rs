use std::f64::consts::PI;

use nhfields::cauchy::{
    constrained_sode_check, evolve, evolve_free, free_sode_check, project_state_onto_constraint, tilde_eta_contract,
    CauchyState, EvolveOptions, StateMode, StateVariation, VColumns,
};
use nhfields::constraint::ConstraintSpec;
use nhfields::grid::{DiffScheme, PeriodicGrid};
use nhfields::models::{ConstraintKind, CubicTransport, LinearTransport, Wave};
use nhfields::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sine_state(nu: usize, amp: f64) -> CauchyState {
    let g = PeriodicGrid::new(1, nu).unwrap();
    let y = (0..nu).map(|j| amp * (2.0 * PI * j as f64 / nu as f64).sin()).collect();
    CauchyState::pde(g, 1, y, vec![0.0; nu]).unwrap()
}

#[test]
fn free_wave_matches_dalembert() {
    let nu = 64;
    let s = sine_state(nu, 1.0);
    let opts = EvolveOptions { dt: 1e-3, steps: 1000, scheme: DiffScheme::Spectral, record_every: 50, ..Default::default() };
    let ev = evolve_free(&Wave::new(1.0, 1, 1), &s, opts).unwrap();
    let mut err: f64 = 0.0;
    for st in &ev.trajectory {
        for j in 0..nu {
            let u = j as f64 / nu as f64;
            let exact = 0.5 * ((2.0 * PI * (u - st.t)).sin() + (2.0 * PI * (u + st.t)).sin());
            err = err.max((st.y[j] - exact).abs());
        }
    }
    assert!(err < 1e-5, "{err}");
    let e0 = ev.diagnostics[0].energy;
    assert!(ev.diagnostics.iter().all(|d| (d.energy - e0).abs() < 1e-8));
    assert!(ev.diagnostics.iter().all(|d| (d.eta_gamma - 1.0).abs() < 1e-12));
}

#[test]
fn free_sode_field_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for mode in [StateMode::Pde, StateMode::FullJet] {
        let s = sine_state(32, 0.5);
        let s = if mode == StateMode::FullJet { s.to_full_jet(DiffScheme::FourthOrder) } else { s };
        let c = free_sode_check(&Wave::new(1.0, 1, 1), &s, DiffScheme::FourthOrder, 20, &mut rng).unwrap();
        assert!((c.eta - 1.0).abs() < 1e-12);
        assert!(c.sode_defect < 1e-12);
        assert!(c.omega_max < 1e-8, "{c:?}");
    }
}

#[test]
fn eta_of_spatial_variation_vanishes() {
    let s = sine_state(16, 0.2).to_full_jet(DiffScheme::FourthOrder);
    let l = s.layout();
    let mut w = StateVariation::zeros(l, s.len());
    for j in 0..s.len() {
        w.at_mut(j)[l.x(1)] = 1.0;
    }
    assert!(tilde_eta_contract(&s, &w, DiffScheme::FourthOrder).unwrap().abs() < 1e-14);
}

fn constrained_start(spec: &ConstraintSpec<ConstraintKind>, amp: f64) -> CauchyState {
    let s = sine_state(32, amp);
    let s = CauchyState::holonomic(s.grid.clone(), 1, s.y.clone(), s.v0.clone(), DiffScheme::FourthOrder).unwrap();
    project_state_onto_constraint(spec, &s, DiffScheme::FourthOrder, VColumns::Auto, 1e-15).unwrap()
}

#[test]
fn cubic_transport_drift_is_fourth_order() {
    let spec = ConstraintSpec::chetaev(ConstraintKind::CubicTransport(CubicTransport { c: 2.0, e: 0.5 }));
    let s = constrained_start(&spec, 0.3);
    let w = Wave::new(1.0, 1, 1);
    let drift: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let steps = (1.0 / dt) as usize;
            let opts = EvolveOptions { dt, steps, drift_ceiling: 1.0, record_every: steps, ..Default::default() };
            let ev = evolve(&w, Some(&spec), &s, opts).unwrap();
            ev.diagnostics.iter().map(|d| d.constraint_drift).fold(0.0, f64::max)
        })
        .collect();
    for pair in drift.windows(2) {
        let r = pair[0] / pair[1];
        assert!((12.0..=20.0).contains(&r), "{drift:?}");
    }
}

#[test]
fn linear_transport_is_conserved() {
    let spec = ConstraintSpec::chetaev(ConstraintKind::LinearTransport(LinearTransport { c: 2.0 }));
    let s = constrained_start(&spec, 0.3);
    let opts = EvolveOptions { dt: 0.01, steps: 50, ..Default::default() };
    let ev = evolve(&Wave::new(1.0, 1, 1), Some(&spec), &s, opts).unwrap();
    assert!(ev.diagnostics.iter().all(|d| d.constraint_drift < 1e-12));
}

#[test]
fn projected_field_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let spec = ConstraintSpec::chetaev(ConstraintKind::CubicTransport(CubicTransport { c: 2.0, e: 0.5 }));
    let s = constrained_start(&spec, 0.3);
    let c = constrained_sode_check(&Wave::new(1.0, 1, 1), &spec, &s, DiffScheme::FourthOrder, 20, &mut rng).unwrap();
    assert!((c.eta - 1.0).abs() < 1e-12);
    assert!(c.annihilated < 1e-7, "{c:?}");
    assert!(c.ansatz_residual < 1e-7 && c.coefficient_mismatch < 1e-7, "{c:?}");
    assert!(c.difference_scale > 1e-3);
}

#[test]
fn off_constraint_start_is_rejected_and_drift_ceiling_aborts() {
    let spec = ConstraintSpec::chetaev(ConstraintKind::LinearTransport(LinearTransport { c: 2.0 }));
    let w = Wave::new(1.0, 1, 1);
    let s = sine_state(16, 0.3).to_full_jet(DiffScheme::FourthOrder);
    assert!(evolve(&w, Some(&spec), &s, EvolveOptions::default()).is_err());

    let cubic = ConstraintSpec::chetaev(ConstraintKind::CubicTransport(CubicTransport { c: 2.0, e: 0.5 }));
    let s = constrained_start(&cubic, 0.3);
    let opts = EvolveOptions { dt: 0.05, steps: 20, drift_ceiling: 1e-9, ..Default::default() };
    assert!(matches!(evolve(&w, Some(&cubic), &s, opts), Err(Error::Drift { .. })));
}
