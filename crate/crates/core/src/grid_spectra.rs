//! Log-frequency grids, spectra with power-law tails and weighted sup norms.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{KweError, Result};
use crate::quadrature::{End, PanelRule, QuadratureConfig};

/// Exponent of the KZ prefactor used by the sampled representation.
pub const KZ_EXPONENT: f64 = 7.0 / 6.0;

/// Uniform grid in x = ln(omega).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl LogGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || !(x_min < x_max) {
            return Err(KweError::InvalidRange(format!(
                "need x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n < 2 {
            return Err(KweError::InvalidRange(format!("need n >= 2, got {n}")));
        }
        Ok(Self { x_min, x_max, n })
    }

    /// Grid with a prescribed spacing; x_max is moved up to the last full step.
    pub fn with_spacing(x_min: f64, x_max: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(KweError::InvalidRange(format!("spacing must be positive, got {h}")));
        }
        let steps = ((x_max - x_min) / h).round().max(1.0) as usize;
        Self::new(x_min, x_min + steps as f64 * h, steps + 1)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.x_max
        } else {
            self.x_min + i as f64 * self.h()
        }
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.x(i).exp()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.omega(i)).collect()
    }

    pub fn omega_min(&self) -> f64 {
        self.x_min.exp()
    }

    pub fn omega_max(&self) -> f64 {
        self.x_max.exp()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Cell index and local coordinate in [0, 1].
    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        let t = (x - self.x_min) / self.h();
        let i = (t.floor().max(0.0) as usize).min(self.n - 2);
        (i, (t - i as f64).clamp(0.0, 1.0))
    }
}

impl Default for LogGrid {
    fn default() -> Self {
        Self { x_min: -13.8, x_max: 13.8, n: 1201 }
    }
}

/// Power-law asymptotics c0 w^-alpha at 0 and c_inf w^-beta at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub c0: f64,
    pub alpha: f64,
    pub c_inf: f64,
    pub beta: f64,
}

impl TailModel {
    pub fn zero() -> Self {
        Self { c0: 0.0, alpha: 0.0, c_inf: 0.0, beta: 0.0 }
    }

    pub fn power(c: f64, mu: f64) -> Self {
        Self { c0: c, alpha: mu, c_inf: c, beta: mu }
    }

    /// Exponents that actually constrain integrability (zero coefficients impose nothing).
    pub fn effective_exponents(&self) -> (f64, f64) {
        let a = if self.c0 == 0.0 { f64::NEG_INFINITY } else { self.alpha };
        let b = if self.c_inf == 0.0 { f64::INFINITY } else { self.beta };
        (a, b)
    }

    #[inline]
    pub fn low(&self, w: f64) -> f64 {
        if self.c0 == 0.0 {
            0.0
        } else {
            self.c0 * w.powf(-self.alpha)
        }
    }

    #[inline]
    pub fn high(&self, w: f64) -> f64 {
        if self.c_inf == 0.0 {
            0.0
        } else {
            self.c_inf * w.powf(-self.beta)
        }
    }
}

/// Exponents of a weighted sup norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl WeightedNormSpec {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

/// Result of a tail fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub tails: TailModel,
    pub residual_low: f64,
    pub residual_high: f64,
    pub ill_conditioned: bool,
}

pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Profile {
    Sampled { slopes: Vec<f64> },
    PowerLaw { c: f64, mu: f64 },
    Analytic(ProfileFn),
    Combination(Vec<(f64, Spectrum)>),
    Dilated { inner: Spectrum, lambda: f64, amp: f64 },
}

struct Data {
    grid: LogGrid,
    u: Vec<f64>,
    tails: TailModel,
    profile: Profile,
    features: Vec<f64>,
    support: Option<(f64, f64)>,
    label: String,
}

/// A spectrum f(omega) on a log grid.
///
/// Sampled spectra store u_i = w_i^{7/6} f(w_i) and interpolate u with a
/// monotone cubic in x; outside the window the tail model takes over.
/// Closed-form spectra (power laws, bumps, sums of spectra) evaluate their
/// formula on all of (0, inf) and keep the samples for output and norms.
#[derive(Clone)]
pub struct Spectrum(Arc<Data>);

impl fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectrum")
            .field("label", &self.0.label)
            .field("grid", &self.0.grid)
            .field("tails", &self.0.tails)
            .field("features", &self.0.features)
            .finish()
    }
}

fn pchip_slopes(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let mut d = vec![0.0; n];
    if n == 2 {
        let s = (u[1] - u[0]) / h;
        d[0] = s;
        d[1] = s;
        return d;
    }
    let del: Vec<f64> = u.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    for k in 1..n - 1 {
        let (a, b) = (del[k - 1], del[k]);
        d[k] = if a * b <= 0.0 { 0.0 } else { 2.0 * a * b / (a + b) };
    }
    let end = |d0: f64, d1: f64| -> f64 {
        let mut s = (3.0 * d0 - d1) / 2.0;
        if s * d0 <= 0.0 {
            s = 0.0;
        } else if d0 * d1 <= 0.0 && s.abs() > (3.0 * d0).abs() {
            s = 3.0 * d0;
        }
        s
    };
    d[0] = end(del[0], del[1]);
    d[n - 1] = end(del[n - 2], del[n - 3]);
    d
}

impl Spectrum {
    fn build(
        grid: LogGrid,
        u: Vec<f64>,
        tails: TailModel,
        profile: Profile,
        mut features: Vec<f64>,
        support: Option<(f64, f64)>,
        label: impl Into<String>,
    ) -> Self {
        features.retain(|w| w.is_finite() && *w > 0.0);
        features.sort_by(|a, b| a.partial_cmp(b).unwrap());
        features.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
        Spectrum(Arc::new(Data { grid, u, tails, profile, features, support, label: label.into() }))
    }

    /// Sampled spectrum from prefactored values; tails must join continuously.
    pub fn sampled(grid: LogGrid, u: Vec<f64>, tails: TailModel) -> Result<Self> {
        if u.len() != grid.n() {
            return Err(KweError::InvalidRange(format!(
                "expected {} samples, got {}",
                grid.n(),
                u.len()
            )));
        }
        let check = |node: f64, tail: f64, side: &str| -> Result<()> {
            let scale = node.abs().max(tail.abs());
            if (node - tail).abs() > 1e-10 * scale && scale > 0.0 {
                return Err(KweError::Domain(format!(
                    "tail discontinuity at {side} boundary: node {node:e} vs tail {tail:e}"
                )));
            }
            Ok(())
        };
        let w0 = grid.omega_min();
        let w1 = grid.omega_max();
        check(u[0] * w0.powf(-KZ_EXPONENT), tails.low(w0), "lower")?;
        check(u[grid.n() - 1] * w1.powf(-KZ_EXPONENT), tails.high(w1), "upper")?;
        Ok(Self::sampled_unchecked(grid, u, tails, Vec::new(), "sampled"))
    }

    /// Sampled spectrum whose tail coefficients are chosen to match the end nodes.
    pub fn sampled_with_exponents(grid: LogGrid, u: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        if u.len() != grid.n() {
            return Err(KweError::InvalidRange(format!(
                "expected {} samples, got {}",
                grid.n(),
                u.len()
            )));
        }
        let w0 = grid.omega_min();
        let w1 = grid.omega_max();
        let f0 = u[0] * w0.powf(-KZ_EXPONENT);
        let f1 = u[grid.n() - 1] * w1.powf(-KZ_EXPONENT);
        let tails = TailModel { c0: f0 * w0.powf(alpha), alpha, c_inf: f1 * w1.powf(beta), beta };
        Ok(Self::sampled_unchecked(grid, u, tails, Vec::new(), "sampled"))
    }

    fn sampled_unchecked(grid: LogGrid, u: Vec<f64>, tails: TailModel, mut features: Vec<f64>, label: &str) -> Self {
        let slopes = pchip_slopes(&u, grid.h());
        features.push(grid.omega_min());
        features.push(grid.omega_max());
        Self::build(grid, u, tails, Profile::Sampled { slopes }, features, None, label)
    }

    /// c w^-mu, exact on (0, inf).
    pub fn power_law(c: f64, mu: f64, grid: LogGrid) -> Self {
        let u = (0..grid.n()).map(|i| c * (grid.x(i) * (KZ_EXPONENT - mu)).exp()).collect();
        Self::build(grid, u, TailModel::power(c, mu), Profile::PowerLaw { c, mu }, Vec::new(), None, "power_law")
    }

    /// The KZ spectrum w^-7/6.
    pub fn kz(grid: LogGrid) -> Self {
        Self::power_law(1.0, KZ_EXPONENT, grid)
    }

    pub fn zero(grid: LogGrid) -> Self {
        Self::power_law(0.0, 0.0, grid)
    }

    /// Closed-form spectrum. `features` lists frequencies where f has kinks
    /// or a steep change; `support` (if any) is an interval outside which f = 0.
    pub fn analytic(
        grid: LogGrid,
        label: impl Into<String>,
        f: ProfileFn,
        tails: TailModel,
        features: Vec<f64>,
        support: Option<(f64, f64)>,
    ) -> Self {
        let u = (0..grid.n()).map(|i| grid.omega(i).powf(KZ_EXPONENT) * f(grid.omega(i))).collect();
        Self::build(grid, u, tails, Profile::Analytic(f), features, support, label)
    }

    /// Rayleigh–Jeans 1/(a + b w).
    pub fn rayleigh_jeans(a: f64, b: f64, grid: LogGrid) -> Self {
        let f: ProfileFn = Arc::new(move |w| 1.0 / (a + b * w));
        let tails = TailModel { c0: 1.0 / a, alpha: 0.0, c_inf: 1.0 / b, beta: 1.0 };
        Self::analytic(grid, "rayleigh_jeans", f, tails, vec![a / b], None)
    }

    /// Smooth plateau bump: 1 on [lo + r(hi-lo), hi - r(hi-lo)], 0 outside
    /// [lo, hi], quintic smoothstep ramps in between.
    pub fn plateau_bump(grid: LogGrid, lo: f64, hi: f64, ramp: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && ramp > 0.0 && ramp <= 0.5) {
            return Err(KweError::InvalidRange(format!(
                "bump needs 0 < lo < hi and ramp in (0, 1/2], got ({lo}, {hi}, {ramp})"
            )));
        }
        let s = ramp * (hi - lo);
        let f: ProfileFn = Arc::new(move |w| {
            if w <= lo || w >= hi {
                0.0
            } else {
                smoothstep((w - lo) / s) * smoothstep((hi - w) / s)
            }
        });
        Ok(Self::analytic(
            grid,
            "bump",
            f,
            TailModel::zero(),
            vec![lo, lo + s, hi - s, hi],
            Some((lo, hi)),
        ))
    }

    /// Plateau bump rescaled to unit mass.
    pub fn unit_mass_bump(grid: LogGrid, lo: f64, hi: f64, ramp: f64) -> Result<Self> {
        let b = Self::plateau_bump(grid, lo, hi, ramp)?;
        let m = b.moment(0.5)?;
        Ok(b.scaled(1.0 / m))
    }

    /// Envelope w^-a below 1 and w^-b above 1.
    pub fn envelope(alpha: f64, beta: f64, grid: LogGrid) -> Self {
        let f: ProfileFn = Arc::new(move |w| if w < 1.0 { w.powf(-alpha) } else { w.powf(-beta) });
        let tails = TailModel { c0: 1.0, alpha, c_inf: 1.0, beta };
        Self::analytic(grid, "envelope", f, tails, vec![1.0], None)
    }

    /// Piecewise-linear hat in x on the u representation, centred on node j.
    pub fn hat(grid: LogGrid, j: usize) -> Self {
        let h = grid.h();
        let xj = grid.x(j);
        let f: ProfileFn = Arc::new(move |w| {
            let t = (w.ln() - xj).abs() / h;
            if t >= 1.0 {
                0.0
            } else {
                (1.0 - t) * w.powf(-KZ_EXPONENT)
            }
        });
        let lo = (xj - h).exp();
        let hi = (xj + h).exp();
        Self::analytic(grid, "hat", f, TailModel::zero(), vec![lo, xj.exp(), hi], Some((lo, hi)))
    }

    /// Linear combination sum_k a_k s_k.
    pub fn combine(terms: &[(f64, &Spectrum)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| KweError::InvalidRange("empty combination".into()))?;
        let grid = first.1.grid();
        let n = grid.n();
        let mut u = vec![0.0; n];
        let mut features = Vec::new();
        let mut support: Option<(f64, f64)> = Some((f64::INFINITY, 0.0));
        let mut kept = Vec::new();
        for (a, s) in terms {
            if s.grid() != grid {
                return Err(KweError::InvalidRange("combined spectra must share a grid".into()));
            }
            if *a == 0.0 || s.is_zero() {
                continue;
            }
            for (ui, si) in u.iter_mut().zip(s.u()) {
                *ui += a * si;
            }
            features.extend_from_slice(s.features());
            support = match (support, s.support()) {
                (Some((l, h)), Some((l2, h2))) => Some((l.min(l2), h.max(h2))),
                _ => None,
            };
            kept.push((*a, (*s).clone()));
        }
        if kept.is_empty() {
            return Ok(Self::zero(grid));
        }
        let tails = combine_tails(&kept);
        Ok(Self::build(grid, u, tails, Profile::Combination(kept), features, support, "combination"))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::combine(&[(a, self)]).expect("single-term combination")
    }

    pub fn add(&self, other: &Spectrum) -> Result<Self> {
        Self::combine(&[(1.0, self), (1.0, other)])
    }

    /// amp * f(lambda w).
    pub fn dilated(&self, lambda: f64, amp: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(KweError::Domain(format!("dilation factor must be positive, got {lambda}")));
        }
        let grid = self.grid();
        let inner = self.clone();
        let u = (0..grid.n())
            .map(|i| {
                let w = grid.omega(i);
                w.powf(KZ_EXPONENT) * amp * inner.at(lambda * w)
            })
            .collect();
        let t = self.tails();
        let tails = TailModel {
            c0: amp * t.c0 * lambda.powf(-t.alpha),
            alpha: t.alpha,
            c_inf: amp * t.c_inf * lambda.powf(-t.beta),
            beta: t.beta,
        };
        let features = self.features().iter().map(|w| w / lambda).collect();
        let support = self.support().map(|(l, h)| (l / lambda, h / lambda));
        Ok(Self::build(grid, u, tails, Profile::Dilated { inner, lambda, amp }, features, support, "dilated"))
    }

    /// Same spectrum with a replaced list of quadrature focus frequencies.
    pub fn with_features(&self, features: Vec<f64>) -> Self {
        let d = &self.0;
        Self::build(d.grid, d.u.clone(), d.tails, d.profile.clone(), features, d.support, d.label.clone())
    }

    /// Resample on the own grid as a plain sampled spectrum with matched tails.
    pub fn to_sampled(&self) -> Self {
        let t = self.tails();
        Self::sampled_with_exponents(self.grid(), self.u().to_vec(), t.alpha, t.beta)
            .expect("grid-consistent samples")
    }

    pub fn grid(&self) -> LogGrid {
        self.0.grid
    }

    pub fn u(&self) -> &[f64] {
        &self.0.u
    }

    pub fn tails(&self) -> TailModel {
        self.0.tails
    }

    pub fn label(&self) -> &str {
        &self.0.label
    }

    /// Frequencies where the spectrum has kinks; used as quadrature breakpoints.
    pub fn features(&self) -> &[f64] {
        &self.0.features
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        self.0.support
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self.0.profile, Profile::Sampled { .. })
    }

    pub fn is_zero(&self) -> bool {
        match &self.0.profile {
            Profile::PowerLaw { c, .. } => *c == 0.0,
            Profile::Combination(t) => t.is_empty(),
            Profile::Sampled { .. } => {
                self.0.u.iter().all(|v| *v == 0.0) && self.0.tails.c0 == 0.0 && self.0.tails.c_inf == 0.0
            }
            Profile::Analytic(_) | Profile::Dilated { .. } => false,
        }
    }

    /// Values at the grid nodes.
    pub fn node_values(&self) -> Vec<f64> {
        let g = self.grid();
        self.u()
            .iter()
            .enumerate()
            .map(|(i, u)| u * (-KZ_EXPONENT * g.x(i)).exp())
            .collect()
    }

    /// f(w) with a domain check.
    pub fn eval(&self, w: f64) -> Result<f64> {
        if !(w > 0.0) {
            return Err(KweError::Domain(format!("frequency must be positive, got {w}")));
        }
        Ok(self.at(w))
    }

    /// f(w) without checks; w must be positive. Zero for w <= 0.
    #[inline]
    pub fn at(&self, w: f64) -> f64 {
        if !(w > 0.0) {
            return 0.0;
        }
        if let Some((lo, hi)) = self.0.support {
            if w <= lo || w >= hi {
                return 0.0;
            }
        }
        match &self.0.profile {
            Profile::PowerLaw { c, mu } => {
                if *c == 0.0 {
                    0.0
                } else {
                    c * w.powf(-mu)
                }
            }
            Profile::Analytic(f) => f(w),
            Profile::Combination(terms) => terms.iter().map(|(a, s)| a * s.at(w)).sum(),
            Profile::Dilated { inner, lambda, amp } => amp * inner.at(lambda * w),
            Profile::Sampled { slopes } => {
                let g = &self.0.grid;
                if w < g.omega_min() {
                    return self.0.tails.low(w);
                }
                if w > g.omega_max() {
                    return self.0.tails.high(w);
                }
                let x = w.ln();
                let (i, s) = g.locate(x);
                let h = g.h();
                let u = &self.0.u;
                let s2 = s * s;
                let s3 = s2 * s;
                let v = (2.0 * s3 - 3.0 * s2 + 1.0) * u[i]
                    + (s3 - 2.0 * s2 + s) * h * slopes[i]
                    + (-2.0 * s3 + 3.0 * s2) * u[i + 1]
                    + (s3 - s2) * h * slopes[i + 1];
                v * (-KZ_EXPONENT * x).exp()
            }
        }
    }

    /// Exponents that bound the spectrum near 0 and infinity.
    pub fn effective_exponents(&self) -> (f64, f64) {
        if self.support().is_some() {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        self.tails().effective_exponents()
    }

    /// sup_{w<1} w^a |f| + sup_{w>1} w^b |f| over nodes and tail models.
    pub fn weighted_norm(&self, spec: WeightedNormSpec) -> Result<f64> {
        let g = self.grid();
        let t = self.tails();
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for (i, f) in self.node_values().iter().enumerate() {
            let w = g.omega(i);
            if w < 1.0 {
                lo = lo.max(w.powf(spec.alpha) * f.abs());
            } else {
                hi = hi.max(w.powf(spec.beta) * f.abs());
            }
        }
        let w0 = g.omega_min();
        let w1 = g.omega_max();
        // Each tail piece is c w^p on an interval; sup is at an end or infinite.
        let piece = |c: f64, p: f64, a: f64, b: f64| -> Result<f64> {
            if c == 0.0 || !(b > a) {
                return Ok(0.0);
            }
            let at = |w: f64| -> Result<f64> {
                if w == 0.0 {
                    if p > 0.0 {
                        Ok(0.0)
                    } else if p == 0.0 {
                        Ok(c.abs())
                    } else {
                        Err(KweError::DivergentNorm(format!("w^{p} unbounded as w -> 0")))
                    }
                } else if w.is_infinite() {
                    if p < 0.0 {
                        Ok(0.0)
                    } else if p == 0.0 {
                        Ok(c.abs())
                    } else {
                        Err(KweError::DivergentNorm(format!("w^{p} unbounded as w -> inf")))
                    }
                } else {
                    Ok(c.abs() * w.powf(p))
                }
            };
            Ok(at(a)?.max(at(b)?))
        };
        if self.support().is_none() {
            lo = lo.max(piece(t.c0, spec.alpha - t.alpha, 0.0, w0.min(1.0))?);
            lo = lo.max(piece(t.c_inf, spec.alpha - t.beta, w1, 1.0)?);
            hi = hi.max(piece(t.c0, spec.beta - t.alpha, 1.0, w0)?);
            hi = hi.max(piece(t.c_inf, spec.beta - t.beta, w1.max(1.0), f64::INFINITY)?);
        }
        Ok(lo + hi)
    }

    /// Least-squares power-law fit of ln f against x on both ends of the grid.
    pub fn fit_tails(&self, window_fraction: f64) -> Result<TailFit> {
        if !(window_fraction > 0.0 && window_fraction <= 0.25) {
            return Err(KweError::InvalidRange(format!(
                "window_fraction must lie in (0, 0.25], got {window_fraction}"
            )));
        }
        let g = self.grid();
        let n = g.n();
        let m = ((n as f64 * window_fraction).round() as usize).max(2);
        let vals = self.node_values();
        let fit = |idx: std::ops::Range<usize>| -> Result<(f64, f64, f64)> {
            let mut xs = Vec::with_capacity(idx.len());
            let mut ys = Vec::with_capacity(idx.len());
            for i in idx {
                if !(vals[i] > 0.0) {
                    return Err(KweError::NonPositiveSpectrum);
                }
                xs.push(g.x(i));
                ys.push(vals[i].ln());
            }
            let (slope, icept) = linear_fit(&xs, &ys);
            let res = (xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (y - icept - slope * x).powi(2))
                .sum::<f64>()
                / xs.len() as f64)
                .sqrt();
            Ok((slope, icept, res))
        };
        let (s0, i0, r0) = fit(0..m)?;
        let (s1, i1, r1) = fit(n - m..n)?;
        Ok(TailFit {
            tails: TailModel { c0: i0.exp(), alpha: -s0, c_inf: i1.exp(), beta: -s1 },
            residual_low: r0,
            residual_high: r1,
            ill_conditioned: r0.max(r1) > 1e-3,
        })
    }

    /// Integral of w^p f(w) over (0, inf): quadrature over the window plus
    /// closed-form tails.
    pub fn moment(&self, p: f64) -> Result<f64> {
        let g = self.grid();
        let (mut a, mut b) = (g.x_min(), g.x_max());
        let mut tails = self.support().is_none();
        if let Some((lo, hi)) = self.support() {
            a = lo.ln();
            b = hi.ln();
            tails = false;
        }
        let cfg = QuadratureConfig { panels_per_decade: 20, gauss_order: 10, ..QuadratureConfig::default() };
        let rule = PanelRule::new(&cfg);
        let mut focus: Vec<f64> = self.features().iter().map(|w| w.ln()).collect();
        let (xs, ws) = {
            let mut xs = Vec::new();
            let mut ws = Vec::new();
            rule.segment(a, b, End::Focus, End::Focus, &mut focus, &mut xs, &mut ws);
            (xs, ws)
        };
        let mut acc = crate::quadrature::Neumaier::new();
        for (x, w) in xs.iter().zip(&ws) {
            let om = x.exp();
            acc.add(w * om.powf(p + 1.0) * self.at(om));
        }
        if tails {
            let t = self.tails();
            if t.c0 != 0.0 {
                let e = p + 1.0 - t.alpha;
                if e <= 0.0 {
                    return Err(KweError::DivergentNorm(format!("moment {p} diverges at 0")));
                }
                acc.add(t.c0 * g.omega_min().powf(e) / e);
            }
            if t.c_inf != 0.0 {
                let e = p + 1.0 - t.beta;
                if e >= 0.0 {
                    return Err(KweError::DivergentNorm(format!("moment {p} diverges at infinity")));
                }
                acc.add(-t.c_inf * g.omega_max().powf(e) / e);
            }
        }
        Ok(acc.value())
    }

    /// Mass M(f) = int w^{1/2} f.
    pub fn mass(&self) -> Result<f64> {
        self.moment(0.5)
    }
}

fn combine_tails(terms: &[(f64, Spectrum)]) -> TailModel {
    let mut t = TailModel::zero();
    let mut have0 = false;
    let mut have1 = false;
    for (a, s) in terms {
        if s.support().is_some() {
            continue;
        }
        let st = s.tails();
        if st.c0 != 0.0 {
            if !have0 || st.alpha > t.alpha + 1e-12 {
                t.c0 = a * st.c0;
                t.alpha = st.alpha;
                have0 = true;
            } else if (st.alpha - t.alpha).abs() <= 1e-12 {
                t.c0 += a * st.c0;
            }
        }
        if st.c_inf != 0.0 {
            if !have1 || st.beta < t.beta - 1e-12 {
                t.c_inf = a * st.c_inf;
                t.beta = st.beta;
                have1 = true;
            } else if (st.beta - t.beta).abs() <= 1e-12 {
                t.c_inf += a * st.c_inf;
            }
        }
    }
    t
}

/// Quintic smoothstep clamped to [0, 1].
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Ordinary least squares y = slope*x + intercept.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = LogGrid::new(-1.0, 1.0, 3).unwrap();
        assert_eq!(g.xs(), vec![-1.0, 0.0, 1.0]);
        assert!(LogGrid::new(0.0, 0.0, 2).is_err());
        let d = LogGrid::default();
        assert!((d.h() - 0.023).abs() < 1e-12);
    }

    #[test]
    fn pchip_reproduces_lines() {
        let g = LogGrid::new(-2.0, 2.0, 21).unwrap();
        let u: Vec<f64> = g.xs().iter().map(|x| 1.0 + 0.3 * x).collect();
        let s = Spectrum::sampled_with_exponents(g, u, 0.8, 0.9).unwrap();
        let x: f64 = 0.377;
        let w = x.exp();
        let want = (1.0 + 0.3 * x) * w.powf(-KZ_EXPONENT);
        assert!((s.at(w) - want).abs() < 1e-14);
    }

    #[test]
    fn bump_has_unit_plateau() {
        let g = LogGrid::default();
        let b = Spectrum::plateau_bump(g, 1.0, 2.0, 0.25).unwrap();
        assert_eq!(b.at(1.5), 1.0);
        assert_eq!(b.at(0.9), 0.0);
        assert!(b.at(1.1) > 0.0 && b.at(1.1) < 1.0);
    }
}
