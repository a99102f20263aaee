use kwe_core::collision::expansion_terms;
use kwe_core::fluxes::{kz_constant, reference_config};
use kwe_core::linearized::g0;
use kwe_core::stationary_solver::{
    fit_c1, nonlinear_rhs, nonlinear_terms_at, solve_stationary_with, ForcingSpec, InitialGuess, SolverOptions,
};
use kwe_core::{KweError, LogGrid, QuadratureConfig, Spectrum};

fn j_star() -> f64 {
    kz_constant(&reference_config()).unwrap()
}

#[test]
fn forcing_spec_validation() {
    let g = LogGrid::default();
    let bump = Spectrum::unit_mass_bump(g, 1.0, 2.0, 0.25).unwrap();
    assert!(matches!(ForcingSpec::new(bump.scaled(0.01), 0.1, 0.01, 3.0), Err(KweError::InvalidRange(_))));
    assert!(matches!(ForcingSpec::new(bump.scaled(0.01), 0.04, 0.01, -1.0), Err(KweError::InvalidRange(_))));
    // phi = bump with eps = 1e-4 breaks the smallness bound.
    assert!(matches!(ForcingSpec::new(bump.clone(), 0.04, 1e-4, 3.0), Err(KweError::ForcingTooLarge { .. })));
    let s = ForcingSpec::normalized_bump(&bump, 0.01, 1.0 / 24.0, j_star()).unwrap();
    assert!((s.j_m_inf - (j_star() - 0.01)).abs() < 1e-12);
}

#[test]
fn zero_forcing_gives_kz() {
    let g = LogGrid::new(-13.8, 13.8, 277).unwrap();
    let spec = ForcingSpec::new(Spectrum::zero(g), 1.0 / 24.0, 0.0, j_star()).unwrap();
    let r = solve_stationary_with(&spec, g, &QuadratureConfig::default(), &SolverOptions::default(), &InitialGuess::default())
        .unwrap();
    assert_eq!(r.c, 0.0);
    assert!(r.h.is_zero());
    assert!(r.positivity_ok);
}

#[test]
fn fit_c1_recovers_quadratic() {
    let eps = [0.002, 0.005, 0.01];
    let c: Vec<f64> = eps.iter().map(|e| -0.113 * e + 0.7 * e * e).collect();
    let (c1, c2) = fit_c1(&eps, &c);
    assert!((c1 + 0.113).abs() < 1e-12);
    assert!((c2 - 0.7).abs() < 1e-9);
    let (a, b) = fit_c1(&[0.01], &[-0.00113]);
    assert!((a + 0.113).abs() < 1e-14 && b == 0.0);
}

#[test]
fn seven_terms_match_fused_expansion() {
    let q = QuadratureConfig::default();
    let g = LogGrid::new(-13.8, 13.8, 553).unwrap();
    let h = Spectrum::plateau_bump(g, 0.5, 4.0, 0.25).unwrap().scaled(0.02);
    let c = -0.01;
    let gg = Spectrum::combine(&[(c, &g0(g)), (1.0, &h)]).unwrap();
    let kz = Spectrum::kz(g);
    let fused = nonlinear_rhs(c, &h, &QuadratureConfig::sweep()).unwrap();
    for i in [266, 280, 294] {
        let w = g.omega(i);
        let seven: f64 = nonlinear_terms_at(c, &h, w, &q).unwrap().iter().sum();
        let t = expansion_terms(&kz, &gg, w, &q).unwrap();
        let direct = t.quadratic + t.cubic;
        assert!((seven - direct).abs() < 1e-8 * direct.abs(), "w={w}: {seven} vs {direct}");
        // The solver's sampled correction and sweep layout cost some accuracy.
        let f = fused.at(w);
        assert!((f - direct).abs() < 2e-2 * direct.abs(), "w={w}: {f} vs {direct}");
    }
}

#[test]
fn nonlinear_rhs_of_zero_is_zero() {
    let g = LogGrid::new(-6.9, 6.9, 139).unwrap();
    assert!(nonlinear_rhs(0.0, &Spectrum::zero(g), &QuadratureConfig::sweep()).unwrap().is_zero());
}

#[test]
fn coarse_forced_solve() {
    let g = LogGrid::new(-13.8, 13.8, 277).unwrap();
    let bump = Spectrum::unit_mass_bump(g, 1.0, 2.0, 0.25).unwrap();
    let eps = 0.01;
    let spec = ForcingSpec::normalized_bump(&bump, eps, 1.0 / 24.0, j_star()).unwrap();
    let opts = SolverOptions { flux_dx: 2.0, probes: 4, ..SolverOptions::default() };
    let r = solve_stationary_with(&spec, g, &QuadratureConfig::default(), &opts, &InitialGuess::default()).unwrap();
    let c1 = -1.0 / (3.0 * j_star());
    assert!((r.c / eps / c1 - 1.0).abs() < 0.05, "c/eps = {}", r.c / eps);
    assert!(r.contraction_ratio < 0.1);
    assert!(r.positivity_ok);
    assert!(r.iterations < 10);
    // Warm start from the converged state stops at once.
    let init = InitialGuess { c: r.c, v: r.h.u().to_vec() };
    let again = solve_stationary_with(&spec, g, &QuadratureConfig::default(), &opts, &init).unwrap();
    assert!(again.iterations <= 2);
    assert!((again.c - r.c).abs() < 1e-8);
}
