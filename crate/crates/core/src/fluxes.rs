//! Mass and energy fluxes.
//!
//! All four flux integrals live on the same box after renaming variables:
//! a in (0, w), b in (0, inf), c in (w, inf), z = b + c - a, with weight
//! min(sqrt a, sqrt b):
//!
//! * J1 = f(a) f(c) f(z)
//! * J2 = f(a) f(b) f(z)
//! * J3 = f(a) f(b) f(c)
//! * J4 = f(b) f(c) f(z)
//!
//! The energy flux follows from Fubini: the integral of J_M over (0, w)
//! becomes a weight (min(w, c) - a)_+ on the same integrand.

use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{check_local, union_features, Admissibility};
use crate::error::{KweError, Result};
use crate::grid_spectra::{LogGrid, Spectrum};
use crate::quadrature::{End, Neumaier, PanelRule, QuadratureConfig};

/// Converged value of j_M* from the refinement study in the test suite.
pub const KZ_FLUX_REFERENCE: f64 = 2.949_504_841_277_2;

/// Which integrand is accumulated on the box.
#[derive(Clone, Copy)]
enum Weighting {
    /// Plain box a < w < c.
    Mass,
    /// Energy flux: a on a < w < c, minus (c - a) on a < c < w.
    Energy,
}

struct BoxRule {
    rule: PanelRule,
    t_low: f64,
    t_high: f64,
}

impl BoxRule {
    fn new(q: &QuadratureConfig) -> Result<Self> {
        q.validate()?;
        Ok(Self { rule: q.rule(), t_low: q.t_low(), t_high: q.t_high() })
    }

    /// Inner integral over b for fixed (a, c) of min(sqrt a, sqrt b) * bracket.
    fn inner<B: Fn(f64, f64) -> [f64; 4]>(&self, a: f64, c: f64, feats: &[f64], bracket: &B, ys: &mut Vec<f64>, ws: &mut Vec<f64>, out: &mut [Neumaier; 4]) {
        let la = a.ln();
        let d = c - a;
        let mut focus: Vec<f64> = Vec::with_capacity(2 + 2 * feats.len());
        focus.push(la);
        focus.push(d.ln());
        for &f in feats {
            focus.push(f.ln());
            if f > d {
                focus.push((f - d).ln());
            }
        }
        ys.clear();
        ws.clear();
        let hi = c.ln().max(la) + self.t_high;
        self.rule.segment(la - self.t_low, hi, End::Free, End::Free, &mut focus, ys, ws);
        let sa = a.sqrt();
        for (&y, &wy) in ys.iter().zip(ws.iter()) {
            let b = y.exp();
            let m = sa.min(b.sqrt());
            let z = b + d;
            let v = bracket(b, z);
            let wt = wy * b * m;
            for k in 0..4 {
                out[k].add(wt * v[k]);
            }
        }
    }

    /// Four component integrals on the box at w, weighted per `mode`.
    fn integrate(&self, f: &Spectrum, w: f64, mode: Weighting) -> [f64; 4] {
        let feats = union_features(&[f]);
        let rule = &self.rule;
        let mut px = Vec::new();
        let mut pw = Vec::new();
        let mut qx = Vec::new();
        let mut qw = Vec::new();
        let mut ys = Vec::new();
        let mut yw = Vec::new();
        let mut total = [Neumaier::new(); 4];

        // a = w e^-p, c = w e^q.
        let mut focus: Vec<f64> = feats.iter().filter(|&&x| x < w).map(|&x| (w / x).ln()).collect();
        rule.segment(0.0, self.t_low, End::Singular, End::Free, &mut focus, &mut px, &mut pw);
        for (&p, &wp) in px.iter().zip(&pw) {
            let a = w * (-p).exp();
            let fa = f.at(a);
            let mut focus: Vec<f64> = Vec::new();
            for &x in &feats {
                if x > w {
                    focus.push((x / w).ln());
                }
                if x + a > w {
                    focus.push(((x + a) / w).ln());
                }
            }
            qx.clear();
            qw.clear();
            rule.segment(0.0, self.t_high, End::Singular, End::Free, &mut focus, &mut qx, &mut qw);
            let wa = match mode {
                Weighting::Mass => 1.0,
                Weighting::Energy => a,
            };
            for (&qv, &wq) in qx.iter().zip(&qw) {
                let c = w * qv.exp();
                let fc = f.at(c);
                let mut acc = [Neumaier::new(); 4];
                let br = |b: f64, z: f64| {
                    let fb = f.at(b);
                    let fz = f.at(z);
                    [fa * fc * fz, fa * fb * fz, fa * fb * fc, fb * fc * fz]
                };
                self.inner(a, c, &feats, &br, &mut ys, &mut yw, &mut acc);
                let jac = wp * wq * a * c * wa;
                for k in 0..4 {
                    total[k].add(jac * acc[k].value());
                }
            }
        }

        if let Weighting::Energy = mode {
            // c = w e^-q, a = c e^-p, weight -(c - a).
            let mut focus: Vec<f64> = feats.iter().filter(|&&x| x < w).map(|&x| (w / x).ln()).collect();
            qx.clear();
            qw.clear();
            rule.segment(0.0, self.t_low, End::Focus, End::Free, &mut focus, &mut qx, &mut qw);
            for (&qv, &wq) in qx.iter().zip(&qw) {
                let c = w * (-qv).exp();
                let fc = f.at(c);
                let mut focus: Vec<f64> = Vec::new();
                for &x in &feats {
                    if x < c {
                        focus.push((c / x).ln());
                        focus.push((c / (c - x)).ln());
                    }
                }
                px.clear();
                pw.clear();
                // Keep a above the global cut so the inner products stay finite.
                let span = (self.t_low - qv).max(1.0);
                rule.segment(0.0, span, End::Singular, End::Free, &mut focus, &mut px, &mut pw);
                for (&p, &wp) in px.iter().zip(&pw) {
                    let a = c * (-p).exp();
                    let fa = f.at(a);
                    let mut acc = [Neumaier::new(); 4];
                    let br = |b: f64, z: f64| {
                        let fb = f.at(b);
                        let fz = f.at(z);
                        [fa * fc * fz, fa * fb * fz, fa * fb * fc, fb * fc * fz]
                    };
                    self.inner(a, c, &feats, &br, &mut ys, &mut yw, &mut acc);
                    let jac = -wp * wq * a * c * (c - a);
                    for k in 0..4 {
                        total[k].add(jac * acc[k].value());
                    }
                }
            }
        }
        [total[0].value(), total[1].value(), total[2].value(), total[3].value()]
    }
}

fn check_flux_args(f: &Spectrum, w: f64) -> Result<()> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(KweError::Domain(format!("flux point must be positive, got {w}")));
    }
    check_local(f, Admissibility::Local)
}

/// J_1 .. J_4 at w.
pub fn flux_components(f: &Spectrum, w: f64, q: &QuadratureConfig) -> Result<[f64; 4]> {
    check_flux_args(f, w)?;
    if f.is_zero() {
        return Ok([0.0; 4]);
    }
    Ok(BoxRule::new(q)?.integrate(f, w, Weighting::Mass))
}

/// A single flux integral J_i, i in 1..=4.
pub fn flux_component(i: usize, f: &Spectrum, w: f64, q: &QuadratureConfig) -> Result<f64> {
    if !(1..=4).contains(&i) {
        return Err(KweError::InvalidRange(format!("flux index must be 1..=4, got {i}")));
    }
    Ok(flux_components(f, w, q)?[i - 1])
}

fn combine_mass(j: [f64; 4]) -> f64 {
    crate::quadrature::compensated_sum(&[j[0], j[1], -j[2], -j[3]])
}

/// J_M = J1 + J2 - J3 - J4.
pub fn flux_mass(f: &Spectrum, w: f64, q: &QuadratureConfig) -> Result<f64> {
    Ok(combine_mass(flux_components(f, w, q)?))
}

/// J_E(w) = w J_M(w) - int_0^w J_M.
pub fn flux_energy(f: &Spectrum, w: f64, q: &QuadratureConfig) -> Result<f64> {
    check_flux_args(f, w)?;
    if f.is_zero() {
        return Ok(0.0);
    }
    Ok(combine_mass(BoxRule::new(q)?.integrate(f, w, Weighting::Energy)))
}

/// High-resolution layout used for j_M*.
pub fn reference_config() -> QuadratureConfig {
    QuadratureConfig { panels_per_decade: 12, refinement_levels: 8, ..QuadratureConfig::default() }
}

static KZ_CACHE: OnceLock<Mutex<Vec<(QuadratureConfig, f64)>>> = OnceLock::new();

/// j_M* = -J_M(w^-7/6)(1), cached per configuration.
pub fn kz_constant(q: &QuadratureConfig) -> Result<f64> {
    let cache = KZ_CACHE.get_or_init(|| Mutex::new(Vec::new()));
    if let Some((_, v)) = cache.lock().unwrap().iter().find(|(c, _)| c == q) {
        return Ok(*v);
    }
    let kz = Spectrum::kz(LogGrid::default());
    let j = -flux_mass(&kz, 1.0, q)?;
    if !(j > 0.0) {
        return Err(KweError::NonPositiveKz(j));
    }
    cache.lock().unwrap().push((q.clone(), j));
    Ok(j)
}

/// Flux profile on a grid with extracted limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluxProfile {
    pub grid: LogGrid,
    /// Node indices at which the fluxes were evaluated.
    pub nodes: Vec<usize>,
    pub jm: Vec<f64>,
    pub je: Vec<f64>,
    pub jm_limit_0: f64,
    pub jm_limit_inf: f64,
    /// |c0^3 - c_inf^3 - M(phi)/j*| from fitted tails; NaN when the fit fails.
    pub compatibility_defect: f64,
}

impl FluxProfile {
    pub fn omegas(&self) -> Vec<f64> {
        self.nodes.iter().map(|&i| self.grid.omega(i)).collect()
    }
}

/// Node indices with stride `stride` that always include both ends.
pub fn strided_nodes(grid: &LogGrid, stride: usize) -> Vec<usize> {
    let n = grid.n();
    let mut v: Vec<usize> = (0..n).step_by(stride.max(1)).collect();
    if *v.last().unwrap() != n - 1 {
        v.push(n - 1);
    }
    v
}

/// J_M and J_E at the given nodes plus limits averaged over the outer decades.
pub fn cascade_report(f: &Spectrum, phi: &Spectrum, nodes: &[usize], q: &QuadratureConfig) -> Result<FluxProfile> {
    let grid = f.grid();
    if nodes.is_empty() {
        return Err(KweError::InvalidRange("no flux nodes requested".into()));
    }
    check_local(f, Admissibility::Local)?;
    let vals: Vec<Result<(f64, f64)>> = nodes
        .par_iter()
        .map(|&i| {
            let w = grid.omega(i);
            Ok((flux_mass(f, w, q)?, flux_energy(f, w, q)?))
        })
        .collect();
    let mut jm = Vec::with_capacity(nodes.len());
    let mut je = Vec::with_capacity(nodes.len());
    for v in vals {
        let (a, b) = v?;
        jm.push(a);
        je.push(b);
    }
    let decade = std::f64::consts::LN_10;
    let avg = |pred: &dyn Fn(f64) -> bool| -> f64 {
        let sel: Vec<f64> = nodes
            .iter()
            .zip(&jm)
            .filter(|(&i, _)| pred(grid.x(i)))
            .map(|(_, v)| *v)
            .collect();
        if sel.is_empty() {
            f64::NAN
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    };
    let jm_limit_0 = avg(&|x| x <= grid.x_min() + decade);
    let jm_limit_inf = avg(&|x| x >= grid.x_max() - decade);
    let compatibility_defect = match (f.fit_tails(0.05), phi.mass()) {
        (Ok(fit), Ok(m)) => {
            let js = kz_constant(&reference_config())?;
            (fit.tails.c0.powi(3) - fit.tails.c_inf.powi(3) - m / js).abs()
        }
        _ => f64::NAN,
    };
    Ok(FluxProfile { grid, nodes: nodes.to_vec(), jm, je, jm_limit_0, jm_limit_inf, compatibility_defect })
}

/// int_0^w s^{3/2} phi(s) ds.
pub fn energy_injection(phi: &Spectrum, w: f64) -> Result<f64> {
    if phi.is_zero() {
        return Ok(0.0);
    }
    let grid = phi.grid();
    let (lo, hi) = match phi.support() {
        Some((l, h)) => (l, h.min(w)),
        None => (grid.omega_min(), w),
    };
    if !(hi > lo) {
        return Ok(0.0);
    }
    let cfg = QuadratureConfig { panels_per_decade: 20, gauss_order: 10, ..QuadratureConfig::default() };
    let mut focus: Vec<f64> = phi.features().iter().map(|x| x.ln()).collect();
    let (xs, ws) = {
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        cfg.rule().segment(lo.ln(), hi.ln(), End::Focus, End::Focus, &mut focus, &mut xs, &mut ws);
        (xs, ws)
    };
    let mut acc = Neumaier::new();
    for (x, wt) in xs.iter().zip(&ws) {
        let s = x.exp();
        acc.add(wt * s.powf(2.5) * phi.at(s));
    }
    if phi.support().is_none() {
        let t = phi.tails();
        if t.c0 != 0.0 {
            let e = 2.5 - t.alpha;
            acc.add(t.c0 * lo.powf(e) / e);
        }
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spectrum_has_zero_flux() {
        let g = LogGrid::default();
        let z = Spectrum::zero(g);
        let q = QuadratureConfig::sweep();
        assert_eq!(flux_mass(&z, 1.0, &q).unwrap(), 0.0);
        assert_eq!(flux_energy(&z, 1.0, &q).unwrap(), 0.0);
    }
}
