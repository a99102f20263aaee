use std::path::Path;

use anyhow::Result;
use kwe_core::collision::{collision, zakharov_delta1};
use kwe_core::evolution::{evolve as run_evolution, initial_bump, StepConfig};
use kwe_core::fluxes::{cascade_report, flux_energy, flux_mass, kz_constant, reference_config, strided_nodes};
use kwe_core::io::{write_flux_csv, write_json, write_spectrum_csv, write_symbol_csv, write_table, RunConfig};
use kwe_core::linearized::{root_fit, spectral_winding, KernelTable, RootFit, SymbolSample};
use kwe_core::stationary_solver::{extract_c1_with, solve_stationary_with, ForcingSpec, InitialGuess};
use kwe_core::{KweError, Spectrum, KZ_EXPONENT};
use serde::Serialize;

use crate::Outcome;

fn verdict(failures: Vec<String>) -> Outcome {
    if failures.is_empty() {
        Outcome::Pass
    } else {
        Outcome::Fail(failures.join("; "))
    }
}

#[derive(Serialize)]
struct ProbeRow {
    omega: f64,
    value: f64,
    scale: f64,
    relative: f64,
}

#[derive(Serialize)]
struct KzReport {
    tol: f64,
    j_star: f64,
    stationarity: Vec<ProbeRow>,
    mass_flux: Vec<ProbeRow>,
    flux_spread: f64,
    energy_flux: Vec<ProbeRow>,
    zakharov: Vec<(f64, f64)>,
    passed: bool,
}

pub fn verify_kz(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let tol = cfg.tol.unwrap_or(1e-5);
    let q = &cfg.quadrature;
    let grid = cfg.grid.build()?;
    let kz = Spectrum::kz(grid);
    let mut fails = Vec::new();

    let mut stationarity = Vec::new();
    for w in [1e-2, 1e-1, 1.0, 1e1, 1e2] {
        let s = collision(&kz, w, q)?;
        let r = s.normalized_residual();
        if !(r <= tol) {
            fails.push(format!("stationarity residual {r:e} at w={w}"));
        }
        stationarity.push(ProbeRow { omega: w, value: s.total, scale: s.positive, relative: r });
    }

    let mut mass_flux = Vec::new();
    let mut energy_flux = Vec::new();
    for k in 0..5 {
        let w = 10f64.powf(-1.0 + 0.5 * k as f64);
        let jm = flux_mass(&kz, w, q)?;
        mass_flux.push(ProbeRow { omega: w, value: jm, scale: 1.0, relative: 0.0 });
    }
    let js = -mass_flux[2].value;
    let (lo, hi) = mass_flux.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(-r.value), b.max(-r.value)));
    let flux_spread = hi / lo - 1.0;
    if !(js > 0.0) || !(flux_spread <= tol) {
        fails.push(format!("mass flux spread {flux_spread:e}, j*={js}"));
    }
    for r in mass_flux.iter_mut() {
        r.scale = js;
        r.relative = (-r.value / js - 1.0).abs();
    }
    for w in [1e-2, 1e-1, 1.0, 1e1, 1e2] {
        let je = flux_energy(&kz, w, q)?;
        let rel = je.abs() / (w * js);
        if !(rel <= tol) {
            fails.push(format!("energy flux {je:e} at w={w}"));
        }
        energy_flux.push(ProbeRow { omega: w, value: je, scale: w * js, relative: rel });
    }

    let mut zakharov = Vec::new();
    for a in [0.0, -1.0, -KZ_EXPONENT, -1.5] {
        let z = zakharov_delta1(a, 1.0, q)?;
        if !(z.relative() <= 0.1 * tol) {
            fails.push(format!("Zakharov residual {:e} at alpha={a}", z.relative()));
        }
        zakharov.push((a, z.relative()));
    }

    let passed = fails.is_empty();
    write_json(
        &out.join("verify_kz.json"),
        &KzReport { tol, j_star: js, stationarity, mass_flux, flux_spread, energy_flux, zakharov, passed },
    )?;
    Ok(verdict(fails))
}

#[derive(Serialize)]
struct FluxLimits {
    jm_limit_0: f64,
    jm_limit_inf: f64,
    compatibility_defect: f64,
}

pub fn flux(cfg: &RunConfig, out: &Path, spectrum: &Path, stride: usize) -> Result<Outcome> {
    let f = kwe_core::io::read_spectrum_csv(spectrum)?;
    let phi = Spectrum::zero(f.grid());
    let nodes = strided_nodes(&f.grid(), stride);
    let p = if f.is_zero() {
        kwe_core::fluxes::FluxProfile {
            grid: f.grid(),
            nodes: nodes.clone(),
            jm: vec![0.0; nodes.len()],
            je: vec![0.0; nodes.len()],
            jm_limit_0: 0.0,
            jm_limit_inf: 0.0,
            compatibility_defect: f64::NAN,
        }
    } else {
        cascade_report(&f, &phi, &nodes, &cfg.quadrature)?
    };
    write_flux_csv(&out.join("flux.csv"), &p)?;
    write_json(
        &out.join("flux_limits.json"),
        &FluxLimits { jm_limit_0: p.jm_limit_0, jm_limit_inf: p.jm_limit_inf, compatibility_defect: p.compatibility_defect },
    )?;
    Ok(Outcome::Pass)
}

#[derive(Serialize)]
struct SymbolSummary {
    a0: f64,
    plateau: f64,
    m_at_root: f64,
    neighbor_scale: f64,
    tol: f64,
    root_fit: RootFit,
}

pub fn symbol(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let s = &cfg.symbol;
    let table = KernelTable::new(&cfg.quadrature, s.width)?;
    let mut samples = Vec::new();
    for &b in &s.b_values {
        for k in 0..s.tau_points {
            let tau = if s.tau_points == 1 { 0.0 } else { s.tau_max * k as f64 / (s.tau_points - 1) as f64 };
            samples.push(SymbolSample { b, tau, value: table.symbol(b, tau) });
        }
    }
    write_symbol_csv(&out.join("symbol.csv"), &samples)?;
    let m0 = table.symbol(KZ_EXPONENT, 0.0).norm();
    let scale = table.symbol(KZ_EXPONENT - 0.05, 0.0).norm().max(table.symbol(KZ_EXPONENT + 0.05, 0.0).norm());
    let tol = cfg.tol.unwrap_or(1e-3);
    let summary = SymbolSummary {
        a0: table.a0,
        plateau: table.plateau(),
        m_at_root: m0,
        neighbor_scale: scale,
        tol,
        root_fit: root_fit(&table, 0.05, 11),
    };
    write_json(&out.join("symbol_summary.json"), &summary)?;
    Ok(if m0 <= tol * scale {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("|m(7/6)| = {m0:e} exceeds {tol} x {scale:e}"))
    })
}

#[derive(Serialize)]
struct WindingReport {
    d1: f64,
    d2: f64,
    tau_max: f64,
    samples: usize,
    winding: Option<i64>,
    error: Option<String>,
}

pub fn winding(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let w = &cfg.winding;
    let table = KernelTable::new(&cfg.quadrature, cfg.symbol.width)?;
    let res = spectral_winding(&table, w.d1, w.d2, w.tau_max, w.samples);
    let (winding, error) = match &res {
        Ok(n) => (Some(*n), None),
        Err(KweError::AmbiguousWinding { .. }) => (None, Some(res.as_ref().unwrap_err().to_string())),
        Err(_) => return Err(res.unwrap_err().into()),
    };
    write_json(
        &out.join("winding.json"),
        &WindingReport { d1: w.d1, d2: w.d2, tau_max: w.tau_max, samples: w.samples, winding, error: error.clone() },
    )?;
    Ok(match (winding, error) {
        (Some(1), _) => Outcome::Pass,
        (Some(n), _) => Outcome::Fail(format!("winding number {n}, expected 1")),
        (None, e) => Outcome::Fail(e.unwrap_or_default()),
    })
}

fn forcing(cfg: &RunConfig, j_star: f64) -> Result<(ForcingSpec, Spectrum)> {
    let grid = cfg.grid.build()?;
    let fc = &cfg.forcing;
    let bump = Spectrum::unit_mass_bump(grid, fc.lo, fc.hi, fc.ramp)?;
    let phi = if fc.eps == 0.0 { Spectrum::zero(grid) } else { bump.scaled(fc.eps) };
    let j_inf = fc.j_m_inf.unwrap_or(j_star - fc.eps);
    Ok((ForcingSpec::new(phi, fc.delta, fc.eps, j_inf)?, bump))
}

pub fn solve(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let tol = cfg.tol.unwrap_or(1e-2);
    let j_star = kz_constant(&reference_config())?;
    let (spec, _) = forcing(cfg, j_star)?;
    let grid = cfg.grid.build()?;
    let r = solve_stationary_with(&spec, grid, &cfg.quadrature, &cfg.solver, &InitialGuess::default())?;
    write_json(&out.join("solve_report.json"), &r.summary())?;
    write_spectrum_csv(&out.join("f.csv"), &r.f)?;
    write_spectrum_csv(&out.join("h.csv"), &r.h)?;
    let rows: Vec<Vec<f64>> = r.probe_omegas.iter().zip(&r.probe_residuals).map(|(w, v)| vec![*w, *v]).collect();
    write_table(&out.join("residual_probes.csv"), &["omega", "residual"], &rows)?;
    write_flux_csv(&out.join("flux.csv"), &r.flux)?;
    let mut fails = Vec::new();
    if r.mass_balance_defect > tol {
        fails.push(format!("mass balance defect {:e}", r.mass_balance_defect));
    }
    if r.energy_identity_defect > tol {
        fails.push(format!("energy identity defect {:e}", r.energy_identity_defect));
    }
    if !r.positivity_ok {
        fails.push("solution has negative nodes".into());
    }
    if r.contraction_ratio >= 1.0 {
        fails.push(format!("contraction ratio {}", r.contraction_ratio));
    }
    Ok(verdict(fails))
}

#[derive(Serialize)]
struct EvolveSummary {
    mass_drift_per_time: f64,
    energy_drift_per_time: f64,
    min_entropy_step: f64,
    steps: usize,
    rejected: usize,
    tol: f64,
}

pub fn evolve(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let e = &cfg.evolve;
    let f0 = initial_bump(e.amplitude, e.x_min, e.x_max, e.h)?;
    let grid = f0.grid();
    let phi = if e.forcing_eps == 0.0 {
        Spectrum::zero(grid)
    } else {
        let fc = &cfg.forcing;
        Spectrum::unit_mass_bump(grid, fc.lo, fc.hi, fc.ramp)?.scaled(e.forcing_eps)
    };
    let step = StepConfig { tol: e.tol, ..StepConfig::default() };
    let run = run_evolution(&f0, &phi, e.t_end, e.snapshots, e.dt0, &step, true)?;
    let rows: Vec<Vec<f64>> = run
        .snapshots
        .iter()
        .map(|s| vec![s.t, s.mass, s.energy, s.entropy, s.condensate, s.jm_at_xmin, s.jm_at_xmax])
        .collect();
    write_table(
        &out.join("timeseries.csv"),
        &["t", "mass", "energy", "entropy", "condensate", "JM_at_xmin", "JM_at_xmax"],
        &rows,
    )?;
    for (k, s) in run.states.iter().enumerate() {
        write_spectrum_csv(&out.join(format!("snapshot_{k:03}.csv")), &s.f)?;
    }
    let first = run.snapshots.first().unwrap();
    let last = run.snapshots.last().unwrap();
    let m_drift = ((last.mass + last.condensate) - (first.mass + first.condensate)).abs() / first.mass / e.t_end;
    let e_drift = (last.energy - first.energy).abs() / first.energy / e.t_end;
    let min_ds = run.snapshots.windows(2).map(|w| w[1].entropy - w[0].entropy).fold(f64::INFINITY, f64::min);
    let tol = cfg.tol.unwrap_or(1e-6);
    write_json(
        &out.join("evolve_summary.json"),
        &EvolveSummary {
            mass_drift_per_time: m_drift,
            energy_drift_per_time: e_drift,
            min_entropy_step: min_ds,
            steps: last.steps,
            rejected: last.rejected,
            tol,
        },
    )?;
    if e.forcing_eps != 0.0 {
        return Ok(Outcome::Pass);
    }
    let mut fails = Vec::new();
    if m_drift > tol {
        fails.push(format!("mass drift {m_drift:e} per unit time"));
    }
    if e_drift > tol {
        fails.push(format!("energy drift {e_drift:e} per unit time"));
    }
    if min_ds < -e.tol * first.entropy.abs() {
        fails.push(format!("entropy decreased by {min_ds:e}"));
    }
    Ok(verdict(fails))
}

pub fn c1(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let grid = cfg.grid.build()?;
    let fc = &cfg.forcing;
    let bump = Spectrum::unit_mass_bump(grid, fc.lo, fc.hi, fc.ramp)?;
    let (est, _) = extract_c1_with(&bump, &cfg.c1.eps_values, grid, &cfg.quadrature, &cfg.solver, fc.delta)?;
    write_json(&out.join("c1.json"), &est)?;
    let tol = cfg.tol.unwrap_or(0.05);
    Ok(if est.relative_error <= tol {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("c1 = {} vs {} (relative error {:e})", est.c1, est.expected, est.relative_error))
    })
}
