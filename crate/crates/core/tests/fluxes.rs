use kwe_core::fluxes::{
    cascade_report, energy_injection, flux_components, flux_energy, flux_mass, kz_constant, reference_config,
    strided_nodes, KZ_FLUX_REFERENCE,
};
use kwe_core::{LogGrid, QuadratureConfig, Spectrum};

fn grid() -> LogGrid {
    LogGrid::new(-13.8, 13.8, 277).unwrap()
}

#[test]
fn kz_constant_matches_frozen_reference() {
    let j = kz_constant(&reference_config()).unwrap();
    assert!((j - KZ_FLUX_REFERENCE).abs() < 1e-11 * KZ_FLUX_REFERENCE, "{j}");
    // Cached second call returns the same bits.
    assert_eq!(kz_constant(&reference_config()).unwrap().to_bits(), j.to_bits());
}

#[test]
fn kz_mass_flux_is_scale_free() {
    let q = QuadratureConfig::default();
    let kz = Spectrum::kz(grid());
    let j1 = flux_mass(&kz, 1.0, &q).unwrap();
    assert!(j1 < 0.0);
    for w in [1e-3, 0.2, 50.0] {
        let j = flux_mass(&kz, w, &q).unwrap();
        assert!((j / j1 - 1.0).abs() < 1e-9, "w={w}");
    }
}

#[test]
fn flux_is_cubic_in_amplitude() {
    let q = QuadratureConfig::default();
    let kz = Spectrum::kz(grid());
    let j1 = flux_mass(&kz, 1.0, &q).unwrap();
    let j2 = flux_mass(&kz.scaled(2.0), 1.0, &q).unwrap();
    assert!((j2 / j1 - 8.0).abs() < 1e-12);
}

#[test]
fn mass_flux_combines_components() {
    let q = QuadratureConfig::default();
    let b = Spectrum::plateau_bump(grid(), 0.5, 2.0, 0.25).unwrap();
    let c = flux_components(&b, 1.0, &q).unwrap();
    let m = flux_mass(&b, 1.0, &q).unwrap();
    assert!((c[0] + c[1] - c[2] - c[3] - m).abs() <= 1e-14 * c.iter().map(|x| x.abs()).sum::<f64>());
}

#[test]
fn kz_energy_flux_vanishes() {
    let q = QuadratureConfig::default();
    let kz = Spectrum::kz(grid());
    let j = -flux_mass(&kz, 1.0, &q).unwrap();
    for w in [0.1, 1.0, 10.0] {
        assert!(flux_energy(&kz, w, &q).unwrap().abs() < 1e-8 * w * j);
    }
}

#[test]
fn zero_spectrum_has_zero_fluxes() {
    let q = QuadratureConfig::default();
    let z = Spectrum::zero(grid());
    assert_eq!(flux_mass(&z, 1.0, &q).unwrap(), 0.0);
    assert_eq!(flux_energy(&z, 1.0, &q).unwrap(), 0.0);
}

#[test]
fn energy_injection_of_bump() {
    let g = grid();
    let b = Spectrum::unit_mass_bump(g, 1.0, 2.0, 0.25).unwrap();
    assert_eq!(energy_injection(&b, 0.5).unwrap(), 0.0);
    let full = energy_injection(&b, 10.0).unwrap();
    // int w^{3/2} b over [1, 2] for a unit-mass bump lies between 1 and 2.
    assert!(full > 1.0 && full < 2.0, "{full}");
}

#[test]
fn cascade_report_on_kz() {
    let q = QuadratureConfig::sweep();
    let g = LogGrid::new(-6.9, 6.9, 139).unwrap();
    let kz = Spectrum::kz(g);
    let nodes = strided_nodes(&g, 23);
    assert_eq!(nodes.first(), Some(&0));
    assert_eq!(nodes.last(), Some(&138));
    let p = cascade_report(&kz, &Spectrum::zero(g), &nodes, &q).unwrap();
    assert_eq!(p.jm.len(), nodes.len());
    let j = p.jm[0];
    assert!(p.jm.iter().all(|v| (v / j - 1.0).abs() < 1e-5));
}
