//! Time integration of d f/dt = C(f) + phi on node values.
//!
//! The state is the vector of f at the grid nodes; between nodes f is the
//! sampled interpolant with fixed tail exponents. Moments are trapezoid
//! sums in x = ln w plus closed-form tails, so that a right-hand side which
//! conserves the discrete moments is conserved exactly by the Runge-Kutta
//! stages.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::collision;
use crate::error::{KweError, Result};
use crate::fluxes::flux_mass;
use crate::grid_spectra::{LogGrid, Spectrum, KZ_EXPONENT};
use crate::quadrature::QuadratureConfig;

pub const DT_MIN: f64 = 1e-12;

/// Which functional diverges through a tail.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DivergenceFlags {
    pub mass_at_0: bool,
    pub mass_at_inf: bool,
    pub energy_at_0: bool,
    pub energy_at_inf: bool,
    /// Entropy is only reported where f > 0 on the window.
    pub entropy_partial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    pub flags: DivergenceFlags,
}

/// Trapezoid weights in x.
fn trapezoid(grid: &LogGrid) -> Vec<f64> {
    let n = grid.n();
    let h = grid.h();
    (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect()
}

/// Window moment sum_i w_i omega_i^{p+1} f_i plus the tail integrals.
fn discrete_moment(f: &Spectrum, vals: &[f64], wts: &[f64], p: f64) -> (f64, bool, bool) {
    let g = f.grid();
    let mut acc = crate::quadrature::Neumaier::new();
    for (i, (v, w)) in vals.iter().zip(wts).enumerate() {
        acc.add(w * g.omega(i).powf(p + 1.0) * v);
    }
    let t = f.tails();
    let (mut d0, mut d1) = (false, false);
    if f.support().is_none() {
        if t.c0 != 0.0 {
            let e = p + 1.0 - t.alpha;
            if e > 0.0 {
                acc.add(t.c0 * g.omega_min().powf(e) / e);
            } else {
                d0 = true;
            }
        }
        if t.c_inf != 0.0 {
            let e = p + 1.0 - t.beta;
            if e < 0.0 {
                acc.add(-t.c_inf * g.omega_max().powf(e) / e);
            } else {
                d1 = true;
            }
        }
    }
    (acc.value(), d0, d1)
}

/// Mass, energy and entropy of f with divergence flags.
pub fn functionals(f: &Spectrum) -> Functionals {
    let g = f.grid();
    let vals = f.node_values();
    let wts = trapezoid(&g);
    let (mass, m0, m1) = discrete_moment(f, &vals, &wts, 0.5);
    let (energy, e0, e1) = discrete_moment(f, &vals, &wts, 1.5);
    let mut ent = crate::quadrature::Neumaier::new();
    let mut partial = false;
    for (i, (v, w)) in vals.iter().zip(&wts).enumerate() {
        if *v > 0.0 {
            ent.add(w * g.omega(i).powf(1.5) * v.ln());
        } else {
            partial = true;
        }
    }
    Functionals {
        mass: if m0 || m1 { f64::NAN } else { mass },
        energy: if e0 || e1 { f64::NAN } else { energy },
        entropy: ent.value(),
        flags: DivergenceFlags { mass_at_0: m0, mass_at_inf: m1, energy_at_0: e0, energy_at_inf: e1, entropy_partial: partial },
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub t: f64,
    pub f: Spectrum,
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    pub condensate_mass: f64,
    /// Step size to try next.
    pub dt: f64,
}

/// Integrator settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StepConfig {
    /// Relative tolerance of the embedded error estimate.
    pub tol: f64,
    /// Tail exponents kept fixed during the run.
    pub alpha: f64,
    pub beta: f64,
    /// Values below this fraction of max f count as round-off in the error norm.
    pub floor: f64,
    pub quadrature: QuadratureConfig,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { tol: 1e-8, alpha: 0.0, beta: 3.0, floor: 1e-6, quadrature: QuadratureConfig::sweep() }
    }
}

impl EvolutionState {
    pub fn new(f0: &Spectrum, dt: f64, cfg: &StepConfig) -> Result<Self> {
        let f = with_values(&f0.grid(), &f0.node_values(), cfg)?;
        let fun = functionals(&f);
        Ok(Self { t: 0.0, f, mass: fun.mass, energy: fun.energy, entropy: fun.entropy, condensate_mass: 0.0, dt })
    }
}

fn with_values(grid: &LogGrid, vals: &[f64], cfg: &StepConfig) -> Result<Spectrum> {
    let u = vals.iter().enumerate().map(|(i, v)| v * grid.omega(i).powf(KZ_EXPONENT)).collect();
    Spectrum::sampled_with_exponents(*grid, u, cfg.alpha, cfg.beta)
}

/// C(f) + phi at every node.
pub fn rate(f: &Spectrum, phi: &Spectrum, q: &QuadratureConfig) -> Result<Vec<f64>> {
    let g = f.grid();
    let out: Vec<Result<f64>> = (0..g.n())
        .into_par_iter()
        .map(|i| {
            let w = g.omega(i);
            Ok(collision(f, w, q)?.total + phi.at(w))
        })
        .collect();
    out.into_iter().collect()
}

/// Accepted or rejected outcome of one attempt.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: EvolutionState,
    pub accepted: bool,
    pub error: f64,
}

/// One Bogacki-Shampine 3(2) attempt of size dt. A rejected attempt returns
/// the old state with dt halved.
pub fn try_step(state: &EvolutionState, phi: &Spectrum, dt: f64, cfg: &StepConfig) -> Result<StepOutcome> {
    if !(dt > 0.0) {
        return Err(KweError::InvalidRange(format!("dt must be positive, got {dt}")));
    }
    if dt < DT_MIN {
        return Err(KweError::DtUnderflow { t: state.t, dt });
    }
    let grid = state.f.grid();
    let q = &cfg.quadrature;
    let y = state.f.node_values();
    let stage = |k: &[&[f64]], c: &[f64]| -> Result<Spectrum> {
        let v: Vec<f64> = (0..y.len())
            .map(|i| y[i] + dt * k.iter().zip(c).map(|(kk, cc)| cc * kk[i]).sum::<f64>())
            .collect();
        with_values(&grid, &v, cfg)
    };
    let k1 = rate(&state.f, phi, q)?;
    let k2 = rate(&stage(&[&k1], &[0.5])?, phi, q)?;
    let k3 = rate(&stage(&[&k2], &[0.75])?, phi, q)?;
    let y3: Vec<f64> = (0..y.len()).map(|i| y[i] + dt * (2.0 / 9.0 * k1[i] + k2[i] / 3.0 + 4.0 / 9.0 * k3[i])).collect();
    let f3 = with_values(&grid, &y3, cfg)?;
    let k4 = rate(&f3, phi, q)?;
    let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut err = 0.0f64;
    for i in 0..y.len() {
        let y2 = y[i] + dt * (7.0 / 24.0 * k1[i] + 0.25 * k2[i] + k3[i] / 3.0 + 0.125 * k4[i]);
        let scale = cfg.tol * y3[i].abs().max(cfg.floor * ymax);
        err = err.max((y3[i] - y2).abs() / scale);
    }
    if !(err <= 1.0) {
        let mut s = state.clone();
        s.dt = 0.5 * dt;
        if s.dt < DT_MIN {
            return Err(KweError::DtUnderflow { t: state.t, dt: s.dt });
        }
        return Ok(StepOutcome { state: s, accepted: false, error: err });
    }
    // Clip negatives in the lowest decade into the condensate.
    let wts = trapezoid(&grid);
    let decade = grid.x_min() + std::f64::consts::LN_10;
    let mut yc = y3;
    let mut removed = 0.0;
    for i in 0..yc.len() {
        if grid.x(i) <= decade && yc[i] < 0.0 {
            removed += wts[i] * grid.omega(i).powf(1.5) * yc[i];
            yc[i] = 0.0;
        }
    }
    let f = with_values(&grid, &yc, cfg)?;
    let fun = functionals(&f);
    let grow = if err > 0.0 { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0) } else { 5.0 };
    Ok(StepOutcome {
        state: EvolutionState {
            t: state.t + dt,
            f,
            mass: fun.mass,
            energy: fun.energy,
            entropy: fun.entropy,
            condensate_mass: state.condensate_mass + removed,
            dt: dt * grow,
        },
        accepted: true,
        error: err,
    })
}

/// Advance by exactly dt, halving on rejection.
pub fn step(state: &EvolutionState, phi: &Spectrum, dt: f64, cfg: &StepConfig) -> Result<EvolutionState> {
    let target = state.t + dt;
    let mut s = state.clone();
    let mut h = dt;
    while s.t < target {
        h = h.min(target - s.t);
        let out = try_step(&s, phi, h, cfg)?;
        if out.accepted {
            let next = out.state.dt;
            s = out.state;
            h = next;
        } else {
            h = out.state.dt;
        }
    }
    s.dt = h;
    Ok(s)
}

/// One row of the time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    pub condensate: f64,
    pub jm_at_xmin: f64,
    pub jm_at_xmax: f64,
    pub steps: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct EvolutionRun {
    pub snapshots: Vec<Snapshot>,
    pub states: Vec<EvolutionState>,
}

/// Adaptive integration to t_end with `snapshots` evenly spaced outputs
/// (plus the initial state). Boundary fluxes are evaluated when `fluxes` is set.
pub fn evolve(
    f0: &Spectrum,
    phi: &Spectrum,
    t_end: f64,
    snapshots: usize,
    dt0: f64,
    cfg: &StepConfig,
    fluxes: bool,
) -> Result<EvolutionRun> {
    if !(t_end > 0.0) {
        return Err(KweError::InvalidRange(format!("t_end must be positive, got {t_end}")));
    }
    let nsnap = snapshots.max(1);
    let mut s = EvolutionState::new(f0, dt0, cfg)?;
    let mut steps = 0;
    let mut rejected = 0;
    let snap = |s: &EvolutionState, steps: usize, rejected: usize| -> Result<Snapshot> {
        let g = s.f.grid();
        let (a, b) = if fluxes {
            (flux_mass(&s.f, g.omega_min(), &cfg.quadrature)?, flux_mass(&s.f, g.omega_max(), &cfg.quadrature)?)
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(Snapshot {
            t: s.t,
            mass: s.mass,
            energy: s.energy,
            entropy: s.entropy,
            condensate: s.condensate_mass,
            jm_at_xmin: a,
            jm_at_xmax: b,
            steps,
            rejected,
        })
    };
    let mut out = vec![snap(&s, 0, 0)?];
    let mut states = vec![s.clone()];
    for k in 1..=nsnap {
        let target = t_end * k as f64 / nsnap as f64;
        while s.t < target * (1.0 - 1e-14) {
            let h = s.dt.min(target - s.t);
            let o = try_step(&s, phi, h, cfg)?;
            if o.accepted {
                steps += 1;
            } else {
                rejected += 1;
            }
            s = o.state;
        }
        out.push(snap(&s, steps, rejected)?);
        states.push(s.clone());
    }
    Ok(EvolutionRun { snapshots: out, states })
}

/// f0 = A / (1 + w)^3 on a grid of spacing h.
pub fn initial_bump(amplitude: f64, x_min: f64, x_max: f64, h: f64) -> Result<Spectrum> {
    let grid = LogGrid::with_spacing(x_min, x_max, h)?;
    let u = grid.omegas().iter().map(|w| amplitude / (1.0 + w).powi(3) * w.powf(KZ_EXPONENT)).collect();
    Spectrum::sampled_with_exponents(grid, u, 0.0, 3.0)
}
