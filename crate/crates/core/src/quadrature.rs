//! Gauss–Legendre panels in log variables.
//!
//! Every integral in the crate is a nested product of one-dimensional rules
//! built here. A segment of the integration line is cut into panels whose
//! width starts at `w0` next to "focus" points (kinks, spectrum features,
//! the evaluation scale) and grows geometrically away from them, which is
//! the right shape for integrands that decay like exponentials in log
//! coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{KweError, Result};

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "gauss order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Append the mapped rule for panel [a, b].
    #[inline]
    pub fn push_panel(&self, a: f64, b: f64, xs: &mut Vec<f64>, ws: &mut Vec<f64>) {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            xs.push(c + r * t);
            ws.push(r * w);
        }
    }

    /// Integrate a closure over [a, b] with one panel.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + r * t);
        }
        acc * r
    }
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Panel layout and truncation shared by all collision and flux integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Panels per decade next to a focus point; sets the finest width ln(10)/p.
    pub panels_per_decade: u32,
    pub gauss_order: usize,
    /// Extra halving levels toward singular corners.
    pub refinement_levels: u32,
    /// Lower truncation as a ratio to the evaluation frequency.
    pub omega_cut_low: f64,
    /// Upper truncation as a ratio to the evaluation frequency.
    pub omega_cut_high: f64,
    pub rel_tol: f64,
    /// Geometric growth of panel widths away from focus points.
    pub panel_growth: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            panels_per_decade: 10,
            gauss_order: 8,
            refinement_levels: 6,
            omega_cut_low: 1e-60,
            omega_cut_high: 1e65,
            rel_tol: 1e-8,
            panel_growth: 1.5,
        }
    }
}

impl QuadratureConfig {
    /// Cheaper layout for sweeps over whole grids (nonlinear terms, time stepping).
    pub fn sweep() -> Self {
        Self {
            panels_per_decade: 5,
            gauss_order: 6,
            refinement_levels: 3,
            omega_cut_low: 1e-40,
            omega_cut_high: 1e40,
            rel_tol: 1e-5,
            panel_growth: 1.7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gauss_order < 2 {
            return Err(KweError::Config("gauss_order must be at least 2".into()));
        }
        if self.panels_per_decade == 0 {
            return Err(KweError::Config("panels_per_decade must be positive".into()));
        }
        if !(self.omega_cut_low > 0.0 && self.omega_cut_low < self.omega_cut_high) {
            return Err(KweError::Config(
                "need 0 < omega_cut_low < omega_cut_high".into(),
            ));
        }
        if !(self.omega_cut_low < 1.0 && self.omega_cut_high > 1.0) {
            return Err(KweError::Config(
                "truncation ratios must bracket the evaluation point".into(),
            ));
        }
        if !(self.rel_tol > 0.0) {
            return Err(KweError::Config("rel_tol must be positive".into()));
        }
        if !(self.panel_growth >= 1.0) {
            return Err(KweError::Config("panel_growth must be >= 1".into()));
        }
        Ok(())
    }

    /// Finest panel width in log units.
    pub fn w0(&self) -> f64 {
        std::f64::consts::LN_10 / self.panels_per_decade as f64
    }

    /// Truncation length below the evaluation scale, in log units.
    pub fn t_low(&self) -> f64 {
        -self.omega_cut_low.ln()
    }

    /// Truncation length above the evaluation scale, in log units.
    pub fn t_high(&self) -> f64 {
        self.omega_cut_high.ln()
    }

    pub fn rule(&self) -> PanelRule {
        PanelRule::new(self)
    }
}

/// How a segment end is treated when laying out panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    /// Artificial truncation; panels are widest here.
    Free,
    /// Kink or feature; panels start at the finest width.
    Focus,
    /// Focus plus geometric halving toward the end.
    Singular,
}

/// Builds 1-D rules on segments of a log variable.
#[derive(Debug, Clone)]
pub struct PanelRule {
    gl: GaussLegendre,
    w0: f64,
    growth: f64,
    levels: u32,
}

impl PanelRule {
    pub fn new(cfg: &QuadratureConfig) -> Self {
        Self {
            gl: GaussLegendre::new(cfg.gauss_order),
            w0: cfg.w0(),
            growth: cfg.panel_growth,
            levels: cfg.refinement_levels,
        }
    }

    pub fn gauss(&self) -> &GaussLegendre {
        &self.gl
    }

    /// Append the rule for [lo, hi] cut at `focus` points (sorted or not).
    /// Points outside (lo, hi) are ignored.
    pub fn segment(
        &self,
        lo: f64,
        hi: f64,
        lo_end: End,
        hi_end: End,
        focus: &mut [f64],
        xs: &mut Vec<f64>,
        ws: &mut Vec<f64>,
    ) {
        if !(hi > lo) {
            return;
        }
        focus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let tiny = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        let mut a = lo;
        let mut a_end = lo_end;
        for &p in focus.iter() {
            if p > a + tiny && p < hi - tiny {
                self.piece(a, p, a_end, End::Focus, xs, ws);
                a = p;
                a_end = End::Focus;
            }
        }
        self.piece(a, hi, a_end, hi_end, xs, ws);
    }

    /// Convenience wrapper returning fresh vectors.
    pub fn build(&self, lo: f64, hi: f64, lo_end: End, hi_end: End, focus: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut f = focus.to_vec();
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        self.segment(lo, hi, lo_end, hi_end, &mut f, &mut xs, &mut ws);
        (xs, ws)
    }

    fn piece(&self, a: f64, b: f64, ea: End, eb: End, xs: &mut Vec<f64>, ws: &mut Vec<f64>) {
        let len = b - a;
        if len <= 0.0 {
            return;
        }
        let fa = ea != End::Free;
        let fb = eb != End::Free;
        match (fa, fb) {
            (true, true) => {
                let half = 0.5 * len;
                self.march(a, half, ea == End::Singular, 1.0, xs, ws);
                self.march(b, half, eb == End::Singular, -1.0, xs, ws);
            }
            (true, false) => self.march(a, len, ea == End::Singular, 1.0, xs, ws),
            (false, true) => self.march(b, len, eb == End::Singular, -1.0, xs, ws),
            (false, false) => {
                let n = (len / (4.0 * self.w0)).ceil().max(1.0) as usize;
                let step = len / n as f64;
                for k in 0..n {
                    self.gl.push_panel(a + k as f64 * step, a + (k + 1) as f64 * step, xs, ws);
                }
            }
        }
    }

    /// Panels from `start` over `len` in direction `dir`, finest at `start`.
    fn march(&self, start: f64, len: f64, singular: bool, dir: f64, xs: &mut Vec<f64>, ws: &mut Vec<f64>) {
        let mut pos = 0.0;
        let first = self.w0.min(len);
        if singular && self.levels > 0 {
            let mut edges = Vec::with_capacity(self.levels as usize + 1);
            let mut w = first;
            for _ in 0..self.levels {
                w *= 0.5;
                edges.push(w);
            }
            edges.reverse();
            let mut prev = 0.0;
            for e in edges {
                self.push(start, dir, prev, e, xs, ws);
                prev = e;
            }
            pos = prev;
        }
        let mut w = first;
        while pos < len {
            let mut next = pos + w;
            // Avoid a sliver at the end of the run.
            if next > len || len - next < 0.3 * w {
                next = len;
            }
            self.push(start, dir, pos, next, xs, ws);
            pos = next;
            w *= self.growth;
        }
    }

    #[inline]
    fn push(&self, start: f64, dir: f64, p: f64, q: f64, xs: &mut Vec<f64>, ws: &mut Vec<f64>) {
        if dir > 0.0 {
            self.gl.push_panel(start + p, start + q, xs, ws);
        } else {
            self.gl.push_panel(start - q, start - p, xs, ws);
        }
    }
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::Sum<f64> for Neumaier {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Neumaier::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(values: &[f64]) -> f64 {
    values.iter().copied().sum::<Neumaier>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
    }

    #[test]
    fn segment_covers_interval() {
        let cfg = QuadratureConfig::default();
        let rule = cfg.rule();
        let (xs, ws) = rule.build(-3.0, 40.0, End::Focus, End::Free, &[0.0, 5.0]);
        let total: f64 = ws.iter().sum();
        assert!((total - 43.0).abs() < 1e-12);
        assert!(xs.iter().all(|&x| x > -3.0 && x < 40.0));
    }

    #[test]
    fn singular_end_handles_root_behaviour() {
        let cfg = QuadratureConfig::default();
        let rule = cfg.rule();
        let (xs, ws) = rule.build(0.0, 1.0, End::Singular, End::Focus, &[]);
        let v: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.sqrt()).sum();
        assert!((v - 2.0 / 3.0).abs() < 1e-7);
    }
}
