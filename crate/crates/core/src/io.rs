//! Run configuration and CSV/JSON emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KweError, Result};
use crate::fluxes::FluxProfile;
use crate::grid_spectra::{LogGrid, Spectrum, KZ_EXPONENT};
use crate::linearized::SymbolSample;
use crate::quadrature::QuadratureConfig;
use crate::stationary_solver::SolverOptions;

/// Seventeen significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        // Spacing 0.05 on [-13.8, 13.8].
        Self { x_min: -13.8, x_max: 13.8, n: 553 }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<LogGrid> {
        LogGrid::new(self.x_min, self.x_max, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingConfig {
    /// Plateau of the unit-mass bump.
    pub lo: f64,
    pub hi: f64,
    pub ramp: f64,
    pub eps: f64,
    pub delta: f64,
    /// Mass flux from infinity; defaults to j* - eps.
    pub j_m_inf: Option<f64>,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self { lo: 1.0, hi: 2.0, ramp: 0.25, eps: 0.005, delta: 1.0 / 24.0, j_m_inf: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymbolConfig {
    pub b_values: Vec<f64>,
    pub tau_max: f64,
    pub tau_points: usize,
    /// Panel width of the kernel table.
    pub width: f64,
}

impl Default for SymbolConfig {
    fn default() -> Self {
        Self { b_values: vec![1.1, 7.0 / 6.0, 1.25], tau_max: 50.0, tau_points: 101, width: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindingConfig {
    pub d1: f64,
    pub d2: f64,
    pub tau_max: f64,
    pub samples: usize,
}

impl Default for WindingConfig {
    fn default() -> Self {
        Self { d1: 0.1, d2: 0.1, tau_max: 50.0, samples: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub t_end: f64,
    pub snapshots: usize,
    pub tol: f64,
    pub dt0: f64,
    /// Amplitude A of f0 = A / (1 + w)^3.
    pub amplitude: f64,
    /// Spacing of the coarse evolution grid.
    pub h: f64,
    pub x_min: f64,
    pub x_max: f64,
    /// Forcing strength (bump from the forcing block); 0 for unforced runs.
    pub forcing_eps: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            snapshots: 10,
            tol: 1e-8,
            dt0: 1e-3,
            amplitude: 1.0,
            h: 0.1,
            x_min: -9.2,
            x_max: 9.2,
            forcing_eps: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct C1Config {
    pub eps_values: Vec<f64>,
}

impl Default for C1Config {
    fn default() -> Self {
        Self { eps_values: vec![0.002, 0.005, 0.01] }
    }
}

/// Everything a CLI run needs, parsed from TOML.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub quadrature: QuadratureConfig,
    pub forcing: ForcingConfig,
    pub symbol: SymbolConfig,
    pub winding: WindingConfig,
    pub evolve: EvolveConfig,
    pub c1: C1Config,
    pub solver: SolverOptions,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    /// Overrides the pass/fail tolerance of the selected subcommand.
    pub tol: Option<f64>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| KweError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        self.quadrature.validate()?;
        let f = &self.forcing;
        if !(f.lo > 0.0 && f.hi > f.lo && f.ramp > 0.0) {
            return Err(KweError::Config(format!("bad bump [{}, {}] ramp {}", f.lo, f.hi, f.ramp)));
        }
        if !(f.delta > 0.0 && f.delta < 1.0 / 12.0) {
            return Err(KweError::Config(format!("forcing.delta must lie in (0, 1/12), got {}", f.delta)));
        }
        let s = &self.symbol;
        if s.b_values.iter().any(|b| !(*b > 1.0 && *b < 1.5)) || s.tau_points == 0 || !(s.width > 0.0) {
            return Err(KweError::Config("symbol: b in (1, 3/2), tau_points > 0, width > 0".into()));
        }
        let w = &self.winding;
        if !(w.d1 > 0.0 && w.d1 < 1.0 / 6.0 && w.d2 > 0.0 && w.d2 < 1.0 / 6.0 && w.tau_max > 0.0) {
            return Err(KweError::Config("winding: need 0 < d1, d2 < 1/6 and tau_max > 0".into()));
        }
        let e = &self.evolve;
        if !(e.t_end > 0.0 && e.tol > 0.0 && e.dt0 > 0.0 && e.h > 0.0 && e.x_max > e.x_min && e.amplitude >= 0.0) {
            return Err(KweError::Config("evolve: t_end, tol, dt0, h must be positive".into()));
        }
        if self.c1.eps_values.is_empty() || self.c1.eps_values.iter().any(|x| !(*x > 0.0)) {
            return Err(KweError::Config("c1.eps_values must be positive and non-empty".into()));
        }
        self.solver.nonlinear.validate()?;
        self.solver.residual.validate()?;
        self.solver.flux.validate()?;
        if !(self.solver.step_tol > 0.0 && self.solver.flux_dx > 0.0 && self.solver.max_iterations > 0) {
            return Err(KweError::Config("solver: step_tol, flux_dx and max_iterations must be positive".into()));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(KweError::Config(format!("tol must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        if !p.as_os_str().is_empty() {
            fs::create_dir_all(p)?;
        }
    }
    Ok(())
}

/// Write rows of numbers under a header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| fmt17(*x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let s = serde_json::to_string_pretty(value)?;
    fs::write(path, s + "\n")?;
    Ok(())
}

/// `omega,f` at the grid nodes.
pub fn write_spectrum_csv(path: &Path, s: &Spectrum) -> Result<()> {
    let g = s.grid();
    let rows: Vec<Vec<f64>> = s.node_values().iter().enumerate().map(|(i, f)| vec![g.omega(i), *f]).collect();
    write_table(path, &["omega", "f"], &rows)
}

/// Read `omega,f` written on a log grid. Tail exponents come from a fit of
/// the outer nodes when f is positive there, else 7/6 on both sides.
pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum> {
    let mut r = csv::Reader::from_path(path)?;
    let mut om = Vec::new();
    let mut fv = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(KweError::Parse(format!("expected 2 columns, got {}", rec.len())));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| KweError::Parse(format!("{s:?}: {e}")));
        om.push(parse(&rec[0])?);
        fv.push(parse(&rec[1])?);
    }
    if om.len() < 4 {
        return Err(KweError::Parse("spectrum file needs at least 4 rows".into()));
    }
    if om.iter().any(|w| !(*w > 0.0)) || fv.iter().any(|f| !f.is_finite()) {
        return Err(KweError::Parse("frequencies must be positive and values finite".into()));
    }
    let n = om.len();
    let grid = LogGrid::new(om[0].ln(), om[n - 1].ln(), n)?;
    for (i, w) in om.iter().enumerate() {
        if (w.ln() - grid.x(i)).abs() > 1e-9 * (1.0 + grid.x(i).abs()) {
            return Err(KweError::Parse(format!("row {i} is not on a uniform log grid")));
        }
    }
    let u: Vec<f64> = fv.iter().zip(&om).map(|(f, w)| f * w.powf(KZ_EXPONENT)).collect();
    let probe = Spectrum::sampled_with_exponents(grid, u.clone(), KZ_EXPONENT, KZ_EXPONENT)?;
    let (a, b) = match probe.fit_tails(0.05) {
        Ok(fit) if !fit.ill_conditioned && fit.tails.alpha < 1.25 && fit.tails.beta > 1.0 => (fit.tails.alpha, fit.tails.beta),
        _ => (KZ_EXPONENT, KZ_EXPONENT),
    };
    Spectrum::sampled_with_exponents(grid, u, a, b)
}

/// `omega,jm,je` rows of a flux profile.
pub fn write_flux_csv(path: &Path, p: &FluxProfile) -> Result<()> {
    let rows: Vec<Vec<f64>> = p.omegas().iter().zip(&p.jm).zip(&p.je).map(|((w, a), b)| vec![*w, *a, *b]).collect();
    write_table(path, &["omega", "jm", "je"], &rows)
}

/// `b,tau,re_m,im_m` rows of a symbol scan.
pub fn write_symbol_csv(path: &Path, samples: &[SymbolSample]) -> Result<()> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.b, s.tau, s.value.re, s.value.im]).collect();
    write_table(path, &["b", "tau", "re_m", "im_m"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        RunConfig::default().validate().unwrap();
        let c = RunConfig::from_toml_str("[grid]\nn = 277\n").unwrap();
        assert_eq!(c.grid.n, 277);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("[grid]\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml_str("[forcing]\ndelta = 0.2\n").is_err());
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(1.0 / 3.0), "3.3333333333333331e-1");
    }
}
