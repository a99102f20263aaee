use kwe_core::io::{fmt17, read_spectrum_csv, write_json, write_spectrum_csv, write_table, RunConfig};
use kwe_core::{KweError, LogGrid, Spectrum, KZ_EXPONENT};

#[test]
fn spectrum_csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.csv");
    let g = LogGrid::new(-4.0, 4.0, 81).unwrap();
    let f = Spectrum::power_law(2.0, 1.1, g);
    write_spectrum_csv(&p, &f).unwrap();
    let back = read_spectrum_csv(&p).unwrap();
    assert_eq!(back.grid().n(), 81);
    for (a, b) in f.node_values().iter().zip(back.node_values()) {
        assert!((a - b).abs() <= 1e-15 * a.abs());
    }
    let (alpha, beta) = back.effective_exponents();
    assert!((alpha - 1.1).abs() < 1e-6 && (beta - 1.1).abs() < 1e-6);
}

#[test]
fn vanishing_ends_give_zero_tails() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b.csv");
    let g = LogGrid::new(-4.0, 4.0, 81).unwrap();
    write_spectrum_csv(&p, &Spectrum::plateau_bump(g, 1.0, 2.0, 0.25).unwrap()).unwrap();
    let back = read_spectrum_csv(&p).unwrap();
    let t = back.tails();
    assert_eq!((t.c0, t.c_inf), (0.0, 0.0));
    assert_eq!(back.effective_exponents(), (f64::NEG_INFINITY, f64::INFINITY));
}

#[test]
fn noisy_tails_fall_back_to_kz() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("n.csv");
    let g = LogGrid::new(-4.0, 4.0, 81).unwrap();
    let rows: Vec<Vec<f64>> = (0..81).map(|i| vec![g.omega(i), if i % 2 == 0 { 1.0 } else { 3.0 }]).collect();
    kwe_core::io::write_table(&p, &["omega", "f"], &rows).unwrap();
    let back = read_spectrum_csv(&p).unwrap();
    assert_eq!(back.effective_exponents(), (KZ_EXPONENT, KZ_EXPONENT));
}

#[test]
fn malformed_spectrum_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    std::fs::write(&p, "omega,f\n1,2\n2,3\n").unwrap();
    assert!(matches!(read_spectrum_csv(&p), Err(KweError::Parse(_))));
    std::fs::write(&p, "omega,f\n1,1\n2,1\n3,1\n4,1\n5,1\n").unwrap();
    assert!(matches!(read_spectrum_csv(&p), Err(KweError::Parse(_))));
    std::fs::write(&p, "omega,f\n1,1\n2,abc\n4,1\n8,1\n").unwrap();
    assert!(matches!(read_spectrum_csv(&p), Err(KweError::Parse(_))));
    std::fs::write(&p, "omega,f\n-1,1\n2,1\n4,1\n8,1\n").unwrap();
    assert!(read_spectrum_csv(&p).is_err());
    assert!(matches!(read_spectrum_csv(&dir.path().join("missing.csv")), Err(KweError::Csv(_) | KweError::Io(_))));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![vec![1.0 / 3.0, 2e-300], vec![-7.25, 1e17]];
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_table(&a, &["x", "y"], &rows).unwrap();
    write_table(&b, &["x", "y"], &rows).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next(), Some("x,y"));
    for line in text.lines().skip(1) {
        for (cell, want) in line.split(',').zip(if line.starts_with('3') { &rows[0] } else { &rows[1] }) {
            assert_eq!(cell.parse::<f64>().unwrap().to_bits(), want.to_bits());
        }
    }
    let j = dir.path().join("sub/r.json");
    write_json(&j, &RunConfig::default()).unwrap();
    assert!(j.exists());
}

#[test]
fn fmt17_has_seventeen_digits() {
    let s = fmt17(std::f64::consts::PI);
    let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17);
    assert_eq!(s.parse::<f64>().unwrap(), std::f64::consts::PI);
}

#[test]
fn config_parsing() {
    let c = RunConfig::from_toml_str(
        "seed = 7\ntol = 0.5\n[grid]\nx_min = -5.0\nx_max = 5.0\nn = 101\n[quadrature]\ngauss_order = 6\n[c1]\neps_values = [0.01]\n",
    )
    .unwrap();
    assert_eq!(c.seed, 7);
    assert_eq!(c.tol, Some(0.5));
    assert_eq!(c.grid.n, 101);
    assert_eq!(c.quadrature.gauss_order, 6);
    assert_eq!(c.quadrature.panels_per_decade, 10);
    assert_eq!(c.c1.eps_values, vec![0.01]);

    for bad in [
        "[grid]\nn = 1\n",
        "[quadrature]\ngauss_order = 1\n",
        "[forcing]\nlo = 2.0\nhi = 1.0\n",
        "[symbol]\nb_values = [1.6]\n",
        "[winding]\nd1 = 0.3\n",
        "[evolve]\nt_end = -1.0\n",
        "[c1]\neps_values = []\n",
        "tol = -1.0\n",
        "[solver]\nflux_dx = 0.0\n",
        "nonsense = 1\n",
        "[grid\n",
    ] {
        assert!(RunConfig::from_toml_str(bad).is_err(), "{bad:?} accepted");
    }
}

#[test]
fn config_roundtrips_through_toml() {
    let c = RunConfig::default();
    let s = toml::to_string(&c).unwrap();
    let back = RunConfig::from_toml_str(&s).unwrap();
    assert_eq!(back.grid, c.grid);
    assert_eq!(back.forcing, c.forcing);
    assert_eq!(back.evolve, c.evolve);
}
