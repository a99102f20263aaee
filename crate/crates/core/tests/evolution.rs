use std::f64::consts::PI;

use kwe_core::evolution::{evolve, functionals, initial_bump, step, try_step, EvolutionState, StepConfig};
use kwe_core::{KweError, Spectrum};

#[test]
fn moments_of_initial_bump() {
    // int w^{1/2} (1+w)^-3 = B(3/2, 3/2) = pi/8, int w^{3/2} (1+w)^-3 = B(5/2, 1/2) = 3 pi/8.
    let f0 = initial_bump(1.0, -9.2, 9.2, 0.1).unwrap();
    let m = functionals(&f0);
    assert!((m.mass / (PI / 8.0) - 1.0).abs() < 1e-5, "{}", m.mass);
    assert!((m.energy / (3.0 * PI / 8.0) - 1.0).abs() < 1e-4, "{}", m.energy);
    assert!(!m.flags.entropy_partial);
    assert!(!m.flags.mass_at_0 && !m.flags.energy_at_inf);
}

#[test]
fn divergent_moments_are_flagged() {
    let g = kwe_core::LogGrid::default();
    let m = functionals(&Spectrum::kz(g));
    // w^{1/2} w^{-7/6} is integrable at 0 but not at infinity.
    assert!(m.flags.mass_at_inf && m.flags.energy_at_inf);
    assert!(!m.flags.mass_at_0 && !m.flags.energy_at_0);
    assert!(m.mass.is_nan() && m.energy.is_nan());
}

#[test]
fn short_run_conserves_and_dissipates() {
    let f0 = initial_bump(0.1, -9.2, 9.2, 0.2).unwrap();
    let phi = Spectrum::zero(f0.grid());
    let cfg = StepConfig::default();
    let run = evolve(&f0, &phi, 0.2, 2, 1e-2, &cfg, false).unwrap();
    assert_eq!(run.snapshots.len(), 3);
    let a = run.snapshots[0];
    let b = run.snapshots[2];
    assert!((b.t - 0.2).abs() < 1e-14);
    assert!(((b.mass + b.condensate) / (a.mass + a.condensate) - 1.0).abs() < 1e-8);
    assert!((b.energy / a.energy - 1.0).abs() < 1e-8);
    assert!(run.snapshots.windows(2).all(|w| w[1].entropy >= w[0].entropy));
    assert!(b.entropy > a.entropy);
}

#[test]
fn step_lands_on_target() {
    let f0 = initial_bump(0.1, -6.9, 6.9, 0.3).unwrap();
    let phi = Spectrum::zero(f0.grid());
    let cfg = StepConfig::default();
    let s0 = EvolutionState::new(&f0, 0.05, &cfg).unwrap();
    let s1 = step(&s0, &phi, 0.1, &cfg).unwrap();
    assert!((s1.t - 0.1).abs() < 1e-15);
}

#[test]
fn bad_steps_are_rejected() {
    let f0 = initial_bump(0.1, -6.9, 6.9, 0.3).unwrap();
    let phi = Spectrum::zero(f0.grid());
    let cfg = StepConfig::default();
    let s0 = EvolutionState::new(&f0, 0.05, &cfg).unwrap();
    assert!(matches!(try_step(&s0, &phi, 0.0, &cfg), Err(KweError::InvalidRange(_))));
    assert!(matches!(try_step(&s0, &phi, 1e-13, &cfg), Err(KweError::DtUnderflow { .. })));
    assert!(evolve(&f0, &phi, 0.0, 1, 1e-3, &cfg, false).is_err());
}

#[test]
fn oversized_step_is_retried_smaller() {
    let f0 = initial_bump(1.0, -6.9, 6.9, 0.3).unwrap();
    let phi = Spectrum::zero(f0.grid());
    let cfg = StepConfig { tol: 1e-10, ..StepConfig::default() };
    let s0 = EvolutionState::new(&f0, 1.0, &cfg).unwrap();
    let o = try_step(&s0, &phi, 1.0, &cfg).unwrap();
    assert!(!o.accepted);
    assert_eq!(o.state.t, 0.0);
    assert_eq!(o.state.dt, 0.5);
}
