use kwe_core::fluxes::{kz_constant, reference_config};
use kwe_core::linearized::{
    assemble_matrix, default_table, g0, linearized_apply, root_fit, solve_augmented, symbol, winding_on, KzKernel,
    TailExtension, Toeplitz,
};
use kwe_core::{KweError, LogGrid, QuadratureConfig, Spectrum, KZ_EXPONENT};

const A0: f64 = -72.80964395741071;

#[test]
fn kernel_constant_is_frozen() {
    let k = KzKernel::new(&QuadratureConfig::default()).unwrap();
    assert!((k.a0() - A0).abs() < 1e-9 * A0.abs(), "{}", k.a0());
}

#[test]
fn kernel_is_singular_at_zero_and_decays() {
    let k = KzKernel::new(&QuadratureConfig::default()).unwrap();
    assert!(k.kappa(1e-6) > 1e5);
    assert!(k.kappa(-1e-6) > 1e5);
    assert!((k.kappa(0.5) - 8.695).abs() < 5e-3);
    assert!((k.kappa(-0.5) - 6.026).abs() < 5e-3);
    assert!(k.kappa(20.0).abs() < 1e-3 * k.kappa(0.5));
}

#[test]
fn symbol_values() {
    let q = QuadratureConfig::default();
    let t = default_table(&q).unwrap();
    assert!(t.symbol(KZ_EXPONENT, 0.0).norm() < 1e-4);
    assert!((t.symbol(1.1, 0.0).re + 0.596453).abs() < 1e-4);
    assert!((t.symbol(1.25, 0.0).re - 0.76339).abs() < 1e-4);
    let m = t.symbol(KZ_EXPONENT, 1.0);
    assert!((m.re - 4.679).abs() < 2e-3 && (m.im - 3.042).abs() < 2e-3, "{m}");
    assert!((t.plateau() + A0).abs() < 1e-9 * A0.abs());
    // Real on the real axis, conjugate symmetric.
    let a = t.symbol(1.2, 3.0);
    let b = t.symbol(1.2, -3.0);
    assert!((a - b.conj()).norm() < 1e-10 * a.norm());
    assert!(t.symbol(1.2, 0.0).im.abs() < 1e-12);
}

#[test]
fn symbol_rejects_b_outside_strip() {
    let t = default_table(&QuadratureConfig::default()).unwrap();
    assert!(matches!(symbol(&t, 1.0, 0.0), Err(KweError::InvalidRange(_))));
    assert!(matches!(symbol(&t, 1.6, 0.0), Err(KweError::InvalidRange(_))));
    assert!(symbol(&t, 1.2, 5.0).is_ok());
}

#[test]
fn symbol_slope_at_root_is_three_j_star() {
    // m(z) near 7/6 behaves as 3 j* (z - 7/6).
    let t = default_table(&QuadratureConfig::default()).unwrap();
    let js = kz_constant(&reference_config()).unwrap();
    let d = 1e-3;
    let slope = (t.symbol(KZ_EXPONENT + d, 0.0).re - t.symbol(KZ_EXPONENT - d, 0.0).re) / (2.0 * d);
    assert!((slope / (3.0 * js) - 1.0).abs() < 1e-2, "{slope}");
    let fit = root_fit(&t, 0.05, 11);
    assert!((fit.slope - 8.906).abs() < 1e-2);
}

#[test]
fn winding_counts_the_root() {
    let t = default_table(&QuadratureConfig::default()).unwrap();
    assert_eq!(winding_on(&t, 1.0667, 1.2667, 50.0, 2000).unwrap(), 1);
    assert_eq!(winding_on(&t, 1.05, 1.1, 50.0, 2000).unwrap(), 0);
    assert!(matches!(winding_on(&t, 1.0667, 1.2667, 50.0, 8), Err(KweError::AmbiguousWinding { .. })));
}

#[test]
fn table_symbol_matches_trilinear_operator() {
    // m(b) = w^{b + 1/3} L(w^-b)(w) at w = 1, with L applied through the
    // collision quadrature on a pure power law.
    let q = QuadratureConfig::default();
    let t = default_table(&q).unwrap();
    let grid = LogGrid::default();
    for b in [1.1, 1.2] {
        let g = Spectrum::power_law(1.0, b, grid);
        let direct = linearized_apply(&g, 1.0, &q).unwrap();
        let m = t.symbol(b, 0.0).re;
        assert!((direct - m).abs() < 1e-4 * m.abs().max(1.0), "b={b}: {direct} vs {m}");
    }
}

#[test]
fn kz_direction_is_in_the_kernel() {
    let q = QuadratureConfig::default();
    let kz = Spectrum::kz(LogGrid::default());
    for w in [0.1, 1.0, 10.0] {
        assert!(linearized_apply(&kz, w, &q).unwrap().abs() < 1e-9);
    }
}

#[test]
fn matrix_matches_operator_on_hats() {
    let q = QuadratureConfig::default();
    let grid = LogGrid::new(-2.0, 2.0, 41).unwrap();
    let t = Toeplitz::new(grid.h(), &q).unwrap();
    let m = assemble_matrix(&grid, &t, TailExtension::Zero).unwrap();
    let j = 20;
    let hat = Spectrum::hat(grid, j);
    let scale = m[(j, j)].abs();
    for i in [18, 20, 21, 25] {
        let w = grid.omega(i);
        let direct = w.powf(1.5) * linearized_apply(&hat, w, &q).unwrap();
        assert!((m[(i, j)] - direct).abs() < 1e-6 * scale, "i={i}: {} vs {direct}", m[(i, j)]);
    }
}

#[test]
fn matrix_needs_matching_spacing() {
    let q = QuadratureConfig::default();
    let t = Toeplitz::new(0.1, &q).unwrap();
    let grid = LogGrid::new(-2.0, 2.0, 21).unwrap();
    assert!(assemble_matrix(&grid, &t, TailExtension::Zero).is_err());
}

#[test]
fn discrete_symbol_has_the_root() {
    let t = Toeplitz::new(0.05, &QuadratureConfig::default()).unwrap();
    assert!(t.discrete_symbol(KZ_EXPONENT, 0.0).norm() < 1e-4);
    assert!(t.discrete_symbol(1.25, 0.0).re > 0.5);
}

#[test]
fn augmented_solve_recovers_c1() {
    let q = QuadratureConfig::default();
    let grid = LogGrid::new(-13.8, 13.8, 553).unwrap();
    let bump = Spectrum::unit_mass_bump(grid, 1.0, 2.0, 0.25).unwrap();
    let sol = solve_augmented(&bump, grid, &q).unwrap();
    let expected = -1.0 / (3.0 * kz_constant(&reference_config()).unwrap());
    assert!((sol.c / expected - 1.0).abs() < 2e-3, "{} vs {expected}", sol.c);
    assert!(sol.residual < 1e-3, "residual {}", sol.residual);
}

#[test]
fn augmented_solve_is_linear() {
    let q = QuadratureConfig::default();
    let grid = LogGrid::new(-13.8, 13.8, 277).unwrap();
    let bump = Spectrum::unit_mass_bump(grid, 1.0, 2.0, 0.25).unwrap();
    let a = solve_augmented(&bump, grid, &q).unwrap();
    let b = solve_augmented(&bump.scaled(-2.5), grid, &q).unwrap();
    assert!((b.c + 2.5 * a.c).abs() < 1e-10 * a.c.abs());
}

#[test]
fn g0_profile() {
    let grid = LogGrid::default();
    let g = g0(grid);
    assert_eq!(g.at(0.5), 0.0);
    assert!((g.at(10.0) - 10f64.powf(-KZ_EXPONENT)).abs() < 1e-15);
}
