use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kwe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwe")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&kwe(d.path(), &["--help"])), 0);
    assert_eq!(code(&kwe(d.path(), &[])), 1);
    assert_eq!(code(&kwe(d.path(), &["bogus"])), 1);
    assert_eq!(code(&kwe(d.path(), &["symbol", "--threads", "x"])), 1);
}

#[test]
fn bad_configs_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("c.toml");
    fs::write(&p, "[grid\nn = 3").unwrap();
    assert_eq!(code(&kwe(d.path(), &["--config", "c.toml", "winding"])), 1);
    fs::write(&p, "[grid]\nspacing = 3\n").unwrap();
    assert_eq!(code(&kwe(d.path(), &["--config", "c.toml", "winding"])), 1);
    fs::write(&p, "[forcing]\ndelta = 0.5\n").unwrap();
    let o = kwe(d.path(), &["--config", "c.toml", "winding"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta"));
    assert_eq!(code(&kwe(d.path(), &["--config", "missing.toml", "winding"])), 1);
    assert_eq!(code(&kwe(d.path(), &["--tol", "-1", "winding"])), 1);
    // Nothing was computed.
    assert!(!d.path().join("out").exists());
}

#[test]
fn verify_kz_passes_and_fails_on_coarse_panels() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&kwe(d.path(), &["--out", "good", "verify-kz"])), 0);
    let r = json(&d.path().join("good/verify_kz.json"));
    assert_eq!(r["passed"], true);
    assert!((r["j_star"].as_f64().unwrap() - 2.9495048412772).abs() < 1e-9);

    fs::write(d.path().join("c.toml"), "[quadrature]\npanels_per_decade = 1\ngauss_order = 2\nrefinement_levels = 0\n").unwrap();
    let o = kwe(d.path(), &["--config", "c.toml", "--out", "bad", "verify-kz"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&d.path().join("bad/verify_kz.json"))["passed"], false);
}

#[test]
fn flux_of_zero_spectrum() {
    let d = tempfile::tempdir().unwrap();
    let mut s = String::from("omega,f\n");
    for i in 0..41 {
        s += &format!("{:.16e},0\n", (-2.0 + 0.1 * i as f64).exp());
    }
    fs::write(d.path().join("z.csv"), s).unwrap();
    assert_eq!(code(&kwe(d.path(), &["--out", "o", "flux", "z.csv", "--stride", "5"])), 0);
    let text = fs::read_to_string(d.path().join("o/flux.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("omega,jm,je"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    for r in rows {
        let v: Vec<f64> = r.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!((v[1], v[2]), (0.0, 0.0));
    }
    assert_eq!(json(&d.path().join("o/flux_limits.json"))["jm_limit_0"], 0.0);
    assert_eq!(code(&kwe(d.path(), &["flux", "nope.csv"])), 1);
}

#[test]
fn symbol_and_winding() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.toml"), "[symbol]\ntau_points = 11\n").unwrap();
    assert_eq!(code(&kwe(d.path(), &["--config", "c.toml", "--out", "a", "symbol"])), 0);
    assert_eq!(code(&kwe(d.path(), &["--config", "c.toml", "--out", "b", "symbol"])), 0);
    let a = fs::read(d.path().join("a/symbol.csv")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b/symbol.csv")).unwrap());
    assert_eq!(
        fs::read(d.path().join("a/symbol_summary.json")).unwrap(),
        fs::read(d.path().join("b/symbol_summary.json")).unwrap()
    );
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some("b,tau,re_m,im_m"));
    assert_eq!(text.lines().count(), 1 + 3 * 11);
    let s = json(&d.path().join("a/symbol_summary.json"));
    assert!(s["m_at_root"].as_f64().unwrap() < 1e-4);
    assert_eq!(code(&kwe(d.path(), &["--config", "c.toml", "--tol", "1e-12", "--out", "c", "symbol"])), 2);

    assert_eq!(code(&kwe(d.path(), &["--out", "w", "winding"])), 0);
    assert_eq!(json(&d.path().join("w/winding.json"))["winding"], 1);
    fs::write(d.path().join("few.toml"), "[winding]\nsamples = 8\n").unwrap();
    assert_eq!(code(&kwe(d.path(), &["--config", "few.toml", "--out", "w8", "winding"])), 2);
    assert!(json(&d.path().join("w8/winding.json"))["error"].is_string());
}

#[test]
fn unforced_solve_is_trivial() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.toml"), "[grid]\nn = 277\n[forcing]\neps = 0.0\n").unwrap();
    let o = kwe(d.path(), &["--config", "c.toml", "--out", "o", "solve"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("o/solve_report.json"));
    assert_eq!(r["c"], 0.0);
    assert_eq!(r["iterations"], 0);
    let h = fs::read_to_string(d.path().join("o/h.csv")).unwrap();
    assert!(h.lines().skip(1).all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() == 0.0));
}

#[test]
fn short_evolution() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.toml"),
        "[evolve]\nt_end = 0.05\nsnapshots = 2\namplitude = 0.1\nh = 0.3\nx_min = -6.9\nx_max = 6.9\n",
    )
    .unwrap();
    let o = kwe(d.path(), &["--config", "c.toml", "--out", "o", "evolve"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ts = fs::read_to_string(d.path().join("o/timeseries.csv")).unwrap();
    assert_eq!(ts.lines().next(), Some("t,mass,energy,entropy,condensate,JM_at_xmin,JM_at_xmax"));
    assert_eq!(ts.lines().count(), 4);
    for k in 0..3 {
        assert!(d.path().join(format!("o/snapshot_{k:03}.csv")).exists());
    }
}
