use kwe_core::collision::{collision_sym, collision_with, scaling_check, Admissibility};
use kwe_core::grid_spectra::smoothstep;
use kwe_core::io::fmt17;
use kwe_core::{LogGrid, QuadratureConfig, Spectrum};
use proptest::prelude::*;

fn grid() -> LogGrid {
    LogGrid::new(-13.8, 13.8, 139).unwrap()
}

fn sweep() -> QuadratureConfig {
    QuadratureConfig::sweep()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rayleigh_jeans_cancels(a in 0.1f64..10.0, b in 0.1f64..10.0, lw in -3.0f64..3.0) {
        let rj = Spectrum::rayleigh_jeans(a, b, grid());
        let s = collision_with(&rj, 10f64.powf(lw), &sweep(), Admissibility::PointwiseCancelling).unwrap();
        prop_assert!(s.normalized_residual() < 1e-13);
    }

    #[test]
    fn power_law_dilation(mu in 1.05f64..1.2, lambda in 0.1f64..10.0, lw in -2.0f64..2.0) {
        let f = Spectrum::power_law(1.0, mu, grid());
        let (l, r) = scaling_check(&f, lambda, 10f64.powf(lw), &sweep()).unwrap();
        prop_assert!((l - r).abs() <= 1e-9 * r.abs().max(1e-300));
    }

    #[test]
    fn operator_is_cubic(amp in 0.01f64..100.0, lo in 0.2f64..2.0, width in 0.5f64..5.0) {
        let b = Spectrum::plateau_bump(grid(), lo, lo + width, 0.25).unwrap();
        let w = lo + 0.5 * width;
        let one = collision_sym(&b, &b, &b, w, &sweep()).unwrap();
        let s = b.scaled(amp);
        let big = collision_sym(&s, &s, &s, w, &sweep()).unwrap();
        prop_assert!((big - amp.powi(3) * one).abs() <= 1e-12 * (amp.powi(3) * one).abs().max(1e-300));
    }

    #[test]
    fn smoothstep_is_monotone(a in -1.0f64..2.0, d in 0.0f64..1.0) {
        let (x, y) = (smoothstep(a), smoothstep(a + d));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!(y >= x);
    }

    #[test]
    fn fmt17_roundtrips(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn grid_nodes_are_uniform(lo in -20.0f64..0.0, len in 0.5f64..30.0, n in 2usize..400) {
        let g = LogGrid::new(lo, lo + len, n).unwrap();
        prop_assert!((g.x(0) - lo).abs() < 1e-12);
        prop_assert!((g.x(n - 1) - (lo + len)).abs() < 1e-12);
        prop_assert!((g.h() - len / (n - 1) as f64).abs() < 1e-12);
    }
}
