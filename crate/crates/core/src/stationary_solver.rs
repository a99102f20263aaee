//! Forced stationary solutions f = k (f* + c G0 + H) of -C(f) = phi.
//!
//! With k^3 = (j_inf + M(phi)) / j* the problem reduces to L G = Phi + Q(G) + C(G)
//! for G = c G0 + H and Phi = phi / k^3, which is iterated as
//! (c, H) <- l(Phi + N(c, H)) with l the augmented least-squares inverse.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{check_local, collision, collision_sym, expansion_at, union_features, Admissibility, ResonantRule};
use crate::error::{KweError, Result};
use crate::fluxes::{cascade_report, energy_injection, kz_constant, reference_config, strided_nodes, FluxProfile};
use crate::grid_spectra::{LogGrid, Spectrum, WeightedNormSpec, KZ_EXPONENT};
use crate::linearized::{g0, AugmentedSystem, Toeplitz};
use crate::quadrature::QuadratureConfig;

/// Forcing and boundary data of the stationary problem.
#[derive(Debug, Clone)]
pub struct ForcingSpec {
    pub phi: Spectrum,
    pub delta: f64,
    pub eps: f64,
    /// Mass flux arriving from infinity (positive).
    pub j_m_inf: f64,
}

impl ForcingSpec {
    pub fn new(phi: Spectrum, delta: f64, eps: f64, j_m_inf: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0 / 12.0) {
            return Err(KweError::InvalidRange(format!("delta must lie in (0, 1/12), got {delta}")));
        }
        if !(j_m_inf > 0.0) {
            return Err(KweError::InvalidRange(format!("j_m_inf must be positive, got {j_m_inf}")));
        }
        let s = Self { phi, delta, eps, j_m_inf };
        let (norm, bound) = s.smallness()?;
        if norm > bound {
            return Err(KweError::ForcingTooLarge { norm, bound });
        }
        Ok(s)
    }

    /// (||phi||_{3/2-d, 3/2+d}, eps j_m_inf).
    pub fn smallness(&self) -> Result<(f64, f64)> {
        let n = self.phi.weighted_norm(WeightedNormSpec::new(1.5 - self.delta, 1.5 + self.delta))?;
        Ok((n, self.eps.abs() * self.j_m_inf))
    }

    /// phi = eps * bump with j_inf = j* - eps M(bump), so that j_0 = j*.
    pub fn normalized_bump(bump: &Spectrum, eps: f64, delta: f64, j_star: f64) -> Result<Self> {
        let m = bump.mass()?;
        Self::new(bump.scaled(eps), delta, eps, j_star - eps * m)
    }
}

/// Knobs of the Picard iteration and its diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub step_tol: f64,
    /// Quadrature for the nonlinear term inside the iteration.
    pub nonlinear: QuadratureConfig,
    /// Quadrature for the residual probes.
    pub residual: QuadratureConfig,
    /// Quadrature for the flux diagnostics.
    pub flux: QuadratureConfig,
    pub probes: usize,
    /// Spacing in x between flux diagnostic nodes.
    pub flux_dx: f64,
    /// Iterations without decrease before giving up.
    pub patience: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            step_tol: 1e-9,
            nonlinear: QuadratureConfig::sweep(),
            residual: QuadratureConfig::default(),
            flux: QuadratureConfig::sweep(),
            probes: 12,
            flux_dx: 0.6,
            patience: 5,
        }
    }
}

/// Result of a stationary solve with its verification numbers.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub c: f64,
    pub h: Spectrum,
    /// The assembled solution.
    pub f: Spectrum,
    /// Amplitude k with f -> k f* as w -> 0.
    pub amplitude: f64,
    pub iterations: usize,
    pub contraction_history: Vec<f64>,
    /// Largest ratio of consecutive step norms after the first step.
    pub contraction_ratio: f64,
    pub residual_sup: f64,
    pub probe_omegas: Vec<f64>,
    pub probe_residuals: Vec<f64>,
    pub flux: FluxProfile,
    /// Positive mass fluxes j = -lim J_M at 0 and infinity.
    pub jm_limit_0: f64,
    pub jm_limit_inf: f64,
    pub forcing_mass: f64,
    /// |j_0 - j_inf - M(phi)| / |M(phi)|.
    pub mass_balance_defect: f64,
    /// max |J_E(f) - int_0^w s^{3/2} phi| over flux nodes in [0.1, 10], over the total injection.
    pub energy_identity_defect: f64,
    /// |j_inf - j* k^3 (1 + c)^3| / j_inf.
    pub flux_consistency_defect: f64,
    pub tail_c0: f64,
    pub tail_cinf: f64,
    pub tail_alpha: f64,
    pub tail_beta: f64,
    pub tails_consistent: bool,
    pub positivity_ok: bool,
    pub j_star: f64,
}

/// Scalar part of [`SolverReport`] for JSON output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSummary {
    pub c: f64,
    pub amplitude: f64,
    pub iterations: usize,
    pub contraction_history: Vec<f64>,
    pub contraction_ratio: f64,
    pub residual_sup: f64,
    pub jm_limit_0: f64,
    pub jm_limit_inf: f64,
    pub forcing_mass: f64,
    pub mass_balance_defect: f64,
    pub energy_identity_defect: f64,
    pub flux_consistency_defect: f64,
    pub tail_c0: f64,
    pub tail_cinf: f64,
    pub tail_alpha: f64,
    pub tail_beta: f64,
    pub tails_consistent: bool,
    pub positivity_ok: bool,
    pub j_star: f64,
}

impl SolverReport {
    pub fn summary(&self) -> SolverSummary {
        SolverSummary {
            c: self.c,
            amplitude: self.amplitude,
            iterations: self.iterations,
            contraction_history: self.contraction_history.clone(),
            contraction_ratio: self.contraction_ratio,
            residual_sup: self.residual_sup,
            jm_limit_0: self.jm_limit_0,
            jm_limit_inf: self.jm_limit_inf,
            forcing_mass: self.forcing_mass,
            mass_balance_defect: self.mass_balance_defect,
            energy_identity_defect: self.energy_identity_defect,
            flux_consistency_defect: self.flux_consistency_defect,
            tail_c0: self.tail_c0,
            tail_cinf: self.tail_cinf,
            tail_alpha: self.tail_alpha,
            tail_beta: self.tail_beta,
            tails_consistent: self.tails_consistent,
            positivity_ok: self.positivity_ok,
            j_star: self.j_star,
        }
    }
}

/// G = c G0 + H resampled on the grid; focus points are the kinks of G0
/// plus those of H, without the grid ends.
fn correction(c: f64, h: &Spectrum) -> Result<Spectrum> {
    let grid = h.grid();
    let g = g0(grid);
    let mut feats: Vec<f64> = g.features().to_vec();
    feats.extend(h.features().iter().filter(|w| **w > grid.omega_min() && **w < grid.omega_max()));
    Ok(Spectrum::combine(&[(c, &g), (1.0, h)])?.to_sampled().with_features(feats))
}

/// N(c, H) = Q(G) + C(G) at the grid nodes, G = c G0 + H.
pub fn nonlinear_rhs(c: f64, h: &Spectrum, q: &QuadratureConfig) -> Result<Spectrum> {
    let grid = h.grid();
    if c == 0.0 && h.is_zero() {
        return Ok(Spectrum::zero(grid));
    }
    let g = correction(c, h)?;
    let base = Spectrum::kz(grid);
    check_local(&g, Admissibility::Local)?;
    let rr = ResonantRule::new(q)?;
    let feats = union_features(&[&base, &g]);
    let vals: Vec<f64> = (0..grid.n())
        .into_par_iter()
        .map(|i| {
            let t = expansion_at(&rr, &base, &g, grid.omega(i), &feats);
            t.quadratic + t.cubic
        })
        .collect();
    let u = vals.iter().enumerate().map(|(i, v)| v * grid.omega(i).powf(KZ_EXPONENT)).collect();
    Spectrum::sampled_with_exponents(grid, u, 1.5, 1.5)
}

/// The seven trilinear terms of N(c, H) at w, each through the symmetrized form:
/// [c^2 Q(G0), Q(H), 2c Q(G0,H), c^3 C(G0), C(H), 3c^2 C(G0,G0,H), 3c C(G0,H,H)].
pub fn nonlinear_terms_at(c: f64, h: &Spectrum, w: f64, q: &QuadratureConfig) -> Result<[f64; 7]> {
    let grid = h.grid();
    let f = Spectrum::kz(grid);
    let g = g0(grid);
    let s = |a: &Spectrum, b: &Spectrum, d: &Spectrum| collision_sym(a, b, d, w, q);
    Ok([
        c * c * 3.0 * s(&f, &g, &g)?,
        3.0 * s(&f, h, h)?,
        2.0 * c * 3.0 * s(&f, &g, h)?,
        c * c * c * s(&g, &g, &g)?,
        s(h, h, h)?,
        3.0 * c * c * s(&g, &g, h)?,
        3.0 * c * s(&g, h, h)?,
    ])
}

fn step_norm(dc: f64, dv: &[f64], grid: &LogGrid, delta: f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for (i, v) in dv.iter().enumerate() {
        let x = grid.x(i);
        if x < 0.0 {
            lo = lo.max((-delta * x).exp() * v.abs());
        } else {
            hi = hi.max((delta * x).exp() * v.abs());
        }
    }
    dc.abs() + lo + hi
}

/// Initial guess for the Picard iteration.
#[derive(Debug, Clone, Default)]
pub struct InitialGuess {
    pub c: f64,
    /// Node values of v = w^{7/6} H; empty means zero.
    pub v: Vec<f64>,
}

pub fn solve_stationary(spec: &ForcingSpec, grid: LogGrid, q: &QuadratureConfig) -> Result<SolverReport> {
    solve_stationary_with(spec, grid, q, &SolverOptions::default(), &InitialGuess::default())
}

/// Picard iteration with explicit options and starting point; `q` sets the
/// kernel quadrature of the linear solve.
pub fn solve_stationary_with(
    spec: &ForcingSpec,
    grid: LogGrid,
    q: &QuadratureConfig,
    opts: &SolverOptions,
    init: &InitialGuess,
) -> Result<SolverReport> {
    if spec.phi.grid() != grid {
        return Err(KweError::InvalidRange("forcing must live on the solver grid".into()));
    }
    let j_star = kz_constant(&reference_config())?;
    let m_phi = spec.phi.mass()?;
    let j0 = spec.j_m_inf + m_phi;
    if !(j0 > 0.0) {
        return Err(KweError::InvalidRange(format!("j_0 = j_inf + M(phi) = {j0} must be positive")));
    }
    let amp = (j0 / j_star).cbrt();
    let scale = amp.powi(3);
    let phi_nodes: Vec<f64> = spec.phi.node_values().iter().map(|v| v / scale).collect();
    let n = grid.n();
    let phi_feats: Vec<f64> = spec.phi.features().to_vec();

    let mut c = init.c;
    let mut v = if init.v.is_empty() { vec![0.0; n] } else { init.v.clone() };
    if v.len() != n {
        return Err(KweError::InvalidRange(format!("initial guess has {} values, grid has {n}", v.len())));
    }
    let mut history = Vec::new();
    let mut iterations = 0;
    let trivial = phi_nodes.iter().all(|x| *x == 0.0) && c == 0.0 && v.iter().all(|x| *x == 0.0);
    if !trivial {
        let toeplitz = Toeplitz::new(grid.h(), q)?;
        let sys = AugmentedSystem::new(grid, &toeplitz, spec.delta)?;
        let mut stalled = 0;
        loop {
            let h = remainder(grid, &v, spec.delta, &phi_feats)?;
            let nl = nonlinear_rhs(c, &h, &opts.nonlinear)?.node_values();
            let psi: Vec<f64> = phi_nodes.iter().zip(&nl).map(|(a, b)| a + b).collect();
            let sol = sys.solve_values(&psi)?;
            let dv: Vec<f64> = sol.v.iter().zip(&v).map(|(a, b)| a - b).collect();
            let s = step_norm(sol.c - c, &dv, &grid, spec.delta);
            c = sol.c;
            v = sol.v;
            iterations += 1;
            if let Some(prev) = history.last() {
                if s >= *prev {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
            }
            history.push(s);
            if s <= opts.step_tol {
                break;
            }
            if stalled >= opts.patience {
                return Err(KweError::NoContraction(stalled));
            }
            if iterations >= opts.max_iterations {
                break;
            }
        }
    }
    let contraction_ratio = history
        .windows(2)
        .skip(1)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .fold(0.0, f64::max);

    let h = remainder(grid, &v, spec.delta, &phi_feats)?;
    let g = correction(c, &h)?;
    let kz = Spectrum::kz(grid);
    let f = Spectrum::combine(&[(amp, &kz), (amp, &g)])?;
    verify(spec, grid, opts, c, h, f, amp, iterations, history, contraction_ratio, m_phi, j_star)
}

fn remainder(grid: LogGrid, v: &[f64], delta: f64, feats: &[f64]) -> Result<Spectrum> {
    Ok(Spectrum::sampled_with_exponents(grid, v.to_vec(), KZ_EXPONENT - delta, KZ_EXPONENT + delta)?
        .with_features(feats.to_vec()))
}

#[allow(clippy::too_many_arguments)]
fn verify(
    spec: &ForcingSpec,
    grid: LogGrid,
    opts: &SolverOptions,
    c: f64,
    h: Spectrum,
    f: Spectrum,
    amp: f64,
    iterations: usize,
    history: Vec<f64>,
    contraction_ratio: f64,
    m_phi: f64,
    j_star: f64,
) -> Result<SolverReport> {
    // Residual probes log-spaced over the inner part of the window.
    let np = opts.probes.max(2);
    let (a, b) = (grid.x_min() + 0.25 * (grid.x_max() - grid.x_min()), grid.x_max() - 0.25 * (grid.x_max() - grid.x_min()));
    let probe_omegas: Vec<f64> = (0..np).map(|k| (a + (b - a) * k as f64 / (np - 1) as f64).exp()).collect();
    let res: Vec<Result<f64>> = probe_omegas
        .par_iter()
        .map(|&w| {
            let s = collision(&f, w, &opts.residual)?;
            let r = s.total + spec.phi.at(w);
            Ok(if s.positive > 0.0 { r.abs() / s.positive } else { r.abs() })
        })
        .collect();
    let probe_residuals = res.into_iter().collect::<Result<Vec<f64>>>()?;
    let residual_sup = probe_residuals.iter().copied().fold(0.0, f64::max);

    let nodes = strided_nodes(&grid, (opts.flux_dx / grid.h()).round().max(1.0) as usize);
    let flux = cascade_report(&f, &spec.phi, &nodes, &opts.flux)?;
    let jm_limit_0 = -flux.jm_limit_0;
    let jm_limit_inf = -flux.jm_limit_inf;
    let mass_balance_defect = if m_phi != 0.0 {
        (jm_limit_0 - jm_limit_inf - m_phi).abs() / m_phi.abs()
    } else {
        (jm_limit_0 - jm_limit_inf).abs() / j_star
    };
    let total_inj = energy_injection(&spec.phi, grid.omega_max())?;
    let mut e_def = 0.0f64;
    for (k, &i) in nodes.iter().enumerate() {
        let w = grid.omega(i);
        if (0.1..=10.0).contains(&w) {
            e_def = e_def.max((flux.je[k] - energy_injection(&spec.phi, w)?).abs());
        }
    }
    let energy_identity_defect = if total_inj != 0.0 { e_def / total_inj.abs() } else { e_def };
    let flux_consistency_defect =
        (jm_limit_inf - j_star * amp.powi(3) * (1.0 + c).powi(3)).abs() / jm_limit_inf.abs();

    let fit = f.fit_tails(0.05).map_err(|e| KweError::WindowTooSmall(format!("tail fit failed: {e}")))?;
    let t = fit.tails;
    let tails_consistent =
        (t.alpha - KZ_EXPONENT).abs() <= spec.delta && (t.beta - KZ_EXPONENT).abs() <= spec.delta && !fit.ill_conditioned;
    let positivity_ok = f.node_values().iter().all(|x| *x >= 0.0);

    Ok(SolverReport {
        c,
        h,
        f,
        amplitude: amp,
        iterations,
        contraction_history: history,
        contraction_ratio,
        residual_sup,
        probe_omegas,
        probe_residuals,
        flux,
        jm_limit_0,
        jm_limit_inf,
        forcing_mass: m_phi,
        mass_balance_defect,
        energy_identity_defect,
        flux_consistency_defect,
        tail_c0: t.c0,
        tail_cinf: t.c_inf,
        tail_alpha: t.alpha,
        tail_beta: t.beta,
        tails_consistent,
        positivity_ok,
        j_star,
    })
}

/// c_eps fitted as c1 eps + c2 eps^2 over several forcing strengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct C1Estimate {
    pub c1: f64,
    pub c2: f64,
    pub eps: Vec<f64>,
    pub c_eps: Vec<f64>,
    /// -1 / (3 j*).
    pub expected: f64,
    pub relative_error: f64,
    pub flux_consistency: Vec<f64>,
}

/// Least squares of c against (eps, eps^2) through the origin.
pub fn fit_c1(eps: &[f64], c: &[f64]) -> (f64, f64) {
    if eps.len() == 1 {
        return (c[0] / eps[0], 0.0);
    }
    let (mut s2, mut s3, mut s4, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (e, v) in eps.iter().zip(c) {
        s2 += e * e;
        s3 += e * e * e;
        s4 += e * e * e * e;
        y1 += e * v;
        y2 += e * e * v;
    }
    let det = s2 * s4 - s3 * s3;
    ((y1 * s4 - y2 * s3) / det, (s2 * y2 - s3 * y1) / det)
}

/// Run the solver for phi = eps bump, j_inf = j* - eps, and fit c against eps.
pub fn extract_c1(bump: &Spectrum, eps_values: &[f64], grid: LogGrid, q: &QuadratureConfig) -> Result<C1Estimate> {
    extract_c1_with(bump, eps_values, grid, q, &SolverOptions::default(), 1.0 / 24.0).map(|(e, _)| e)
}

pub fn extract_c1_with(
    bump: &Spectrum,
    eps_values: &[f64],
    grid: LogGrid,
    q: &QuadratureConfig,
    opts: &SolverOptions,
    delta: f64,
) -> Result<(C1Estimate, Vec<SolverReport>)> {
    if eps_values.is_empty() || eps_values.iter().any(|e| !(*e > 0.0)) {
        return Err(KweError::InvalidRange("eps values must be positive and non-empty".into()));
    }
    let m = bump.mass()?;
    if (m - 1.0).abs() > 1e-6 {
        return Err(KweError::InvalidRange(format!("bump must have unit mass, got {m}")));
    }
    let j_star = kz_constant(&reference_config())?;
    let mut reports = Vec::new();
    for &e in eps_values {
        let spec = ForcingSpec::normalized_bump(bump, e, delta, j_star)?;
        reports.push(solve_stationary_with(&spec, grid, q, opts, &InitialGuess::default())?);
    }
    let c_eps: Vec<f64> = reports.iter().map(|r| r.c).collect();
    let (c1, c2) = fit_c1(eps_values, &c_eps);
    let expected = -1.0 / (3.0 * j_star);
    Ok((
        C1Estimate {
            c1,
            c2,
            eps: eps_values.to_vec(),
            c_eps,
            expected,
            relative_error: (c1 - expected).abs() / expected.abs(),
            flux_consistency: reports.iter().map(|r| r.flux_consistency_defect).collect(),
        },
        reports,
    ))
}
