//! The operator L g = -3 C(f*, f*, g) around f* = w^-7/6.
//!
//! Writing g = w^-7/6 v(x) with x = ln w, homogeneity gives
//! L g = w^-3/2 (A v)(x) with
//!
//!   (A v)(x) = -[a0 v(x) + int kappa(y) v(x + y) dy],
//!
//! a0 = A(1) the multiplicative part and kappa(y) = K(1, e^y) e^{-y/6} the
//! kernel with K = K2 + 2 K3 (g in the omega_2 slot and in one of the
//! omega_3/omega_4 slots). The symbol along z = b + i tau is
//! m(z) = -[a0 + int kappa(y) e^{(7/6 - z) y} dy] and L(w^-z) = m(z) w^{-z-1/3}.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::collision_sym;
use crate::error::{KweError, Result};
use crate::grid_spectra::{linear_fit, smoothstep, LogGrid, ProfileFn, Spectrum, TailModel, KZ_EXPONENT};
use crate::quadrature::{End, GaussLegendre, Neumaier, PanelRule, QuadratureConfig};

#[inline]
fn kz(w: f64) -> f64 {
    w.powf(-KZ_EXPONENT)
}

/// L g (w) = -3 C(f*, f*, g)(w) through the trilinear quadrature.
pub fn linearized_apply(g: &Spectrum, w: f64, q: &QuadratureConfig) -> Result<f64> {
    if g.is_zero() {
        return Ok(0.0);
    }
    let f = Spectrum::kz(g.grid());
    Ok(-3.0 * collision_sym(&f, &f, g, w, q)?)
}

/// One-dimensional slices of the linearization at omega_1 = 1.
pub struct KzKernel {
    rule: PanelRule,
    t: f64,
}

impl KzKernel {
    pub fn new(q: &QuadratureConfig) -> Result<Self> {
        q.validate()?;
        Ok(Self { rule: q.rule(), t: q.t_low().min(q.t_high()) })
    }

    /// int_0^{1+r} W h(w3, w4) dw3 with w1 = 1, w2 = r, w4 = 1 + r - w3,
    /// for h symmetric in (w3, w4).
    fn slot2<H: Fn(f64, f64) -> f64>(&self, r: f64, h: H) -> f64 {
        let m = r.min(1.0);
        let tot = 1.0 + r;
        let (xs, ws) = self.rule.build(0.0, self.t, End::Focus, End::Free, &[]);
        let mut acc = Neumaier::new();
        for (s, w) in xs.iter().zip(&ws) {
            let w3 = m * (-s).exp();
            let w4 = tot - w3;
            acc.add(w * w3 * w3.sqrt() * h(w3, w4));
        }
        let top = (tot / (2.0 * m)).ln();
        if top > 0.0 {
            let (xs, ws) = self.rule.build(0.0, top, End::Focus, End::Focus, &[]);
            let sm = m.sqrt();
            for (t, w) in xs.iter().zip(&ws) {
                let w3 = m * t.exp();
                let w4 = tot - w3;
                acc.add(w * w3 * sm * h(w3, w4));
            }
        }
        2.0 * acc.value()
    }

    /// Multiplicative slice: integrand of a0 at w2 = r.
    pub fn a_slice(&self, r: f64) -> f64 {
        let fr = kz(r);
        self.slot2(r, |a, b| {
            let (fa, fb) = (kz(a), kz(b));
            fa * fb - fr * (fa + fb)
        })
    }

    /// K(1, r) with g in the omega_2 slot.
    pub fn k2(&self, r: f64) -> f64 {
        self.slot2(r, |a, b| {
            let (fa, fb) = (kz(a), kz(b));
            fa * fb - (fa + fb)
        })
    }

    /// K(1, 1 + e) with g in the omega_3 slot; e is passed directly so that
    /// r close to 1 keeps full relative precision.
    pub fn k3(&self, e: f64) -> f64 {
        let r = 1.0 + e;
        let lo = (-e).max(0.0);
        let base2 = e + lo;
        let mut bps: Vec<f64> = [1.0 - lo, 1.0 - e - lo, r - lo].iter().copied().filter(|b| *b > 0.0).collect();
        let sc = r.max(1.0);
        let mut smallest = sc;
        for b in &bps {
            smallest = smallest.min(*b);
        }
        if e != 0.0 {
            smallest = smallest.min(e.abs());
            bps.push(e.abs());
        }
        let mut focus: Vec<f64> = bps.iter().map(|b| b.ln()).collect();
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        self.rule
            .segment(smallest.ln() - self.t, sc.ln() + self.t, End::Free, End::Free, &mut focus, &mut xs, &mut ws);
        let sr = r.sqrt();
        let mut acc = Neumaier::new();
        for (u, w) in xs.iter().zip(&ws) {
            let d = u.exp();
            let w4 = lo + d;
            let w2 = base2 + d;
            let wk = w2.min(w4).min(1.0).sqrt().min(sr);
            let f2 = kz(w2);
            let f4 = kz(w4);
            acc.add(w * d * wk * ((1.0 + f2) * f4 - f2));
        }
        acc.value()
    }

    /// kappa(y) = (K2 + 2 K3)(1, e^y) e^{-y/6}.
    pub fn kappa(&self, y: f64) -> f64 {
        (self.k2(y.exp()) + 2.0 * self.k3(y.exp_m1())) * (-y / 6.0).exp()
    }

    /// a0 = A(1), the integral of the multiplicative slice over w2.
    pub fn a0(&self) -> f64 {
        let mut acc = Neumaier::new();
        for (lo, hi, el, eh) in [(-self.t, 0.0, End::Free, End::Singular), (0.0, self.t, End::Singular, End::Free)] {
            let (xs, ws) = self.rule.build(lo, hi, el, eh, &[]);
            for (y, w) in xs.iter().zip(&ws) {
                let r = y.exp();
                acc.add(w * r * self.a_slice(r));
            }
        }
        acc.value()
    }
}

/// Quadrature of kappa on a fixed set of nodes, reusable for any weight.
#[derive(Clone)]
pub struct KernelTable {
    pub a0: f64,
    ys: Vec<f64>,
    /// Weight times kappa at each node.
    wk: Vec<f64>,
}

/// Half-width of the y range kept for the kernel.
const KERNEL_LEFT: f64 = 60.0;
const KERNEL_RIGHT: f64 = 40.0;

impl KernelTable {
    /// Nodes fine enough for symbol evaluation up to |tau| ~ 0.5 / `width`.
    pub fn new(q: &QuadratureConfig, width: f64) -> Result<Self> {
        let kern = KzKernel::new(q)?;
        let gl = GaussLegendre::new(q.gauss_order.max(8));
        let mut ys = Vec::new();
        let mut wts = Vec::new();
        // |y| < y0: y = +-y0 s^6 removes the |y|^-5/6 singularity.
        let y0 = width.min(0.05);
        let smax = 1.0f64;
        let npan = 8;
        for sgn in [-1.0, 1.0] {
            for k in 0..npan {
                let a = smax * k as f64 / npan as f64;
                let b = smax * (k + 1) as f64 / npan as f64;
                let mut xs = Vec::new();
                let mut ws = Vec::new();
                gl.push_panel(a, b, &mut xs, &mut ws);
                for (s, w) in xs.iter().zip(&ws) {
                    ys.push(sgn * y0 * s.powi(6));
                    wts.push(w * 6.0 * y0 * s.powi(5));
                }
            }
        }
        // Regular panels: `width` out to |y| = 30, doubling beyond.
        for (sgn, end) in [(-1.0, KERNEL_LEFT), (1.0, KERNEL_RIGHT)] {
            let mut a = y0;
            let mut wdt = width;
            while a < end {
                if a > 30.0 {
                    wdt = (2.0 * wdt).min(0.5);
                }
                let b = (a + wdt).min(end);
                let mut xs = Vec::new();
                let mut ws = Vec::new();
                gl.push_panel(a, b, &mut xs, &mut ws);
                for (x, w) in xs.iter().zip(&ws) {
                    ys.push(sgn * x);
                    wts.push(*w);
                }
                a = b;
            }
        }
        let vals: Vec<f64> = ys.par_iter().map(|&y| kern.kappa(y)).collect();
        let wk = vals.iter().zip(&wts).map(|(k, w)| k * w).collect();
        Ok(Self { a0: kern.a0(), ys, wk })
    }

    /// m(b + i tau).
    pub fn symbol(&self, b: f64, tau: f64) -> Complex64 {
        let z = Complex64::new(KZ_EXPONENT - b, -tau);
        let mut re = Neumaier::new();
        let mut im = Neumaier::new();
        for (y, wk) in self.ys.iter().zip(&self.wk) {
            let e = (z * y).exp() * wk;
            re.add(e.re);
            im.add(e.im);
        }
        -(Complex64::new(self.a0, 0.0) + Complex64::new(re.value(), im.value()))
    }

    /// a = -a0, the limit of m along vertical lines.
    pub fn plateau(&self) -> f64 {
        -self.a0
    }
}

/// Symbol sample along a vertical line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolSample {
    pub b: f64,
    pub tau: f64,
    pub value: Complex64,
}

/// Symbol table at the default panel width, shared by the diagnostics.
pub fn default_table(q: &QuadratureConfig) -> Result<KernelTable> {
    KernelTable::new(q, 0.05)
}

/// m(b + i tau) with b inside the analyticity strip (1, 3/2).
pub fn symbol(table: &KernelTable, b: f64, tau: f64) -> Result<SymbolSample> {
    if !(b > 1.0 && b < 1.5) {
        return Err(KweError::InvalidRange(format!("b must lie in (1, 3/2), got {b}")));
    }
    Ok(SymbolSample { b, tau, value: table.symbol(b, tau) })
}

/// Winding number of m around 0 along the rectangle
/// [b_lo, b_hi] x [-tau_max, tau_max], traversed counterclockwise.
pub fn winding_on(table: &KernelTable, b_lo: f64, b_hi: f64, tau_max: f64, samples: usize) -> Result<i64> {
    if !(b_lo < b_hi && b_lo > 1.0 && b_hi < 1.5 && tau_max > 0.0) {
        return Err(KweError::InvalidRange(format!(
            "bad rectangle [{b_lo}, {b_hi}] x [-{tau_max}, {tau_max}]"
        )));
    }
    let path = rectangle_path(b_lo, b_hi, tau_max, samples.max(4));
    let vals: Vec<Complex64> = path.iter().map(|&(b, t)| table.symbol(b, t)).collect();
    let mut total = 0.0;
    for i in 0..vals.len() {
        let a = vals[i];
        let b = vals[(i + 1) % vals.len()];
        let step = (b / a).arg();
        if step.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(KweError::AmbiguousWinding { step, index: i });
        }
        total += step;
    }
    Ok((total / std::f64::consts::TAU).round() as i64)
}

/// Winding over the strip rectangle around the root line b = 7/6.
pub fn spectral_winding(table: &KernelTable, d1: f64, d2: f64, tau_max: f64, samples: usize) -> Result<i64> {
    if !(d1 > 0.0 && d1 < 1.0 / 6.0 && d2 > 0.0 && d2 < 1.0 / 6.0) {
        return Err(KweError::InvalidRange(format!("need 0 < d1, d2 < 1/6, got ({d1}, {d2})")));
    }
    winding_on(table, KZ_EXPONENT - d1, KZ_EXPONENT + d2, tau_max, samples)
}

fn rectangle_path(b_lo: f64, b_hi: f64, tau_max: f64, samples: usize) -> Vec<(f64, f64)> {
    let wdt = b_hi - b_lo;
    let hgt = 2.0 * tau_max;
    let per = 2.0 * (wdt + hgt);
    let nh = ((samples as f64 * wdt / per).round() as usize).max(1);
    let nv = ((samples as f64 * hgt / per).round() as usize).max(1);
    let mut p = Vec::with_capacity(2 * (nh + nv));
    for k in 0..nh {
        p.push((b_lo + wdt * k as f64 / nh as f64, -tau_max));
    }
    for k in 0..nv {
        p.push((b_hi, -tau_max + hgt * k as f64 / nv as f64));
    }
    for k in 0..nh {
        p.push((b_hi - wdt * k as f64 / nh as f64, tau_max));
    }
    for k in 0..nv {
        p.push((b_lo, tau_max - hgt * k as f64 / nv as f64));
    }
    p
}

/// Linear fit of m(7/6 + s, 0) for s in [-half_width, half_width].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootFit {
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
    /// m(7/6) itself.
    pub value_at_root: f64,
    pub passes: bool,
}

pub fn root_fit(table: &KernelTable, half_width: f64, points: usize) -> RootFit {
    let n = points.max(3);
    let ss: Vec<f64> = (0..n).map(|k| -half_width + 2.0 * half_width * k as f64 / (n - 1) as f64).collect();
    let ms: Vec<f64> = ss.iter().map(|s| table.symbol(KZ_EXPONENT + s, 0.0).re).collect();
    let (slope, intercept) = linear_fit(&ss, &ms);
    let value_at_root = table.symbol(KZ_EXPONENT, 0.0).re;
    let passes = slope != 0.0 && intercept.abs() <= 1e-3 * slope.abs() * half_width;
    RootFit { slope, intercept, half_width, value_at_root, passes }
}

/// How the unknown is continued beyond the window in the discrete operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailExtension {
    /// v = 0 outside the window.
    Zero,
    /// v equals its end value outside the window.
    Constant,
}

/// Toeplitz entries T_k = int kappa(y) hat((y - k h)/h) dy.
#[derive(Clone, Serialize, Deserialize)]
pub struct Toeplitz {
    pub h: f64,
    pub a0: f64,
    /// Entries for k = -n_off ..= n_off.
    pub entries: Vec<f64>,
    pub n_off: usize,
}

impl Toeplitz {
    pub fn new(h: f64, q: &QuadratureConfig) -> Result<Self> {
        if !(h > 0.0) {
            return Err(KweError::InvalidRange(format!("spacing must be positive, got {h}")));
        }
        let kern = Arc::new(KzKernel::new(q)?);
        let gl = GaussLegendre::new(q.gauss_order.max(8));
        let left = (KERNEL_LEFT / h).ceil() as i64;
        let right = (KERNEL_RIGHT / h).ceil() as i64;
        let n_off = left.max(right) as usize;
        // Cell j covers [j h, (j + 1) h]; moments (int kappa, int kappa (y - jh)/h).
        let cells: Vec<i64> = (-(n_off as i64) - 1..=n_off as i64).collect();
        let moments: Vec<(f64, f64)> = cells
            .par_iter()
            .map(|&j| {
                let lo = j as f64 * h;
                if j < -left - 1 || j > right {
                    return (0.0, 0.0);
                }
                let mut m0 = 0.0;
                let mut m1 = 0.0;
                if j == 0 || j == -1 {
                    let sgn = if j == 0 { 1.0 } else { -1.0 };
                    for k in 0..2 {
                        let mut xs = Vec::new();
                        let mut ws = Vec::new();
                        gl.push_panel(0.5 * k as f64, 0.5 * (k + 1) as f64, &mut xs, &mut ws);
                        for (s, w) in xs.iter().zip(&ws) {
                            let y = sgn * h * s.powi(6);
                            let kv = kern.kappa(y) * h * 6.0 * s.powi(5) * w;
                            m0 += kv;
                            m1 += kv * (y - lo) / h;
                        }
                    }
                } else {
                    let mut xs = Vec::new();
                    let mut ws = Vec::new();
                    gl.push_panel(lo, lo + h, &mut xs, &mut ws);
                    for (y, w) in xs.iter().zip(&ws) {
                        let kv = kern.kappa(*y) * w;
                        m0 += kv;
                        m1 += kv * (y - lo) / h;
                    }
                }
                (m0, m1)
            })
            .collect();
        let cell = |j: i64| -> (f64, f64) {
            let idx = j + n_off as i64 + 1;
            if idx < 0 || idx as usize >= moments.len() {
                (0.0, 0.0)
            } else {
                moments[idx as usize]
            }
        };
        let entries = (-(n_off as i64)..=n_off as i64)
            .map(|k| {
                let (_, p1) = cell(k - 1);
                let (c0, c1) = cell(k);
                p1 + c0 - c1
            })
            .collect();
        Ok(Self { h, a0: kern.a0(), entries, n_off })
    }

    pub fn get(&self, k: i64) -> f64 {
        let idx = k + self.n_off as i64;
        if idx < 0 || idx as usize >= self.entries.len() {
            0.0
        } else {
            self.entries[idx as usize]
        }
    }

    /// Discrete symbol -[a0 + sum_k T_k e^{(7/6 - z) k h}].
    pub fn discrete_symbol(&self, b: f64, tau: f64) -> Complex64 {
        let z = Complex64::new(KZ_EXPONENT - b, -tau);
        let mut s = Complex64::new(self.a0, 0.0);
        for (i, t) in self.entries.iter().enumerate() {
            let k = i as f64 - self.n_off as f64;
            s += (z * (k * self.h)).exp() * t;
        }
        -s
    }
}

/// Dense matrix of A on hat functions: (M v)_i approximates w_i^{3/2} (L g)(w_i)
/// for g = w^-7/6 sum_j v_j hat_j.
pub fn assemble_matrix(grid: &LogGrid, toeplitz: &Toeplitz, ext: TailExtension) -> Result<DMatrix<f64>> {
    if (grid.h() - toeplitz.h).abs() > 1e-12 * toeplitz.h {
        return Err(KweError::InvalidRange(format!(
            "grid spacing {} does not match kernel spacing {}",
            grid.h(),
            toeplitz.h
        )));
    }
    let n = grid.n();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut v = toeplitz.get(j as i64 - i as i64);
            if i == j {
                v += toeplitz.a0;
            }
            m[(i, j)] = -v;
        }
        if ext == TailExtension::Constant {
            let no = toeplitz.n_off as i64;
            let ii = i as i64;
            let mut left = Neumaier::new();
            for k in -no..=(-1 - ii) {
                left.add(toeplitz.get(k));
            }
            let mut right = Neumaier::new();
            for k in (n as i64 - ii)..=no {
                right.add(toeplitz.get(k));
            }
            m[(i, 0)] -= left.value();
            m[(i, n - 1)] -= right.value();
        }
    }
    Ok(m)
}

/// chi(x) = smoothstep on [0, 1].
pub fn chi(x: f64) -> f64 {
    smoothstep(x)
}

/// G0 = chi(ln w) w^-7/6.
pub fn g0(grid: LogGrid) -> Spectrum {
    let f: ProfileFn = Arc::new(|w: f64| chi(w.ln()) * w.powf(-KZ_EXPONENT));
    let tails = TailModel { c0: 0.0, alpha: 0.0, c_inf: 1.0, beta: KZ_EXPONENT };
    Spectrum::analytic(grid, "g0", f, tails, vec![1.0, std::f64::consts::E], None)
}

/// Output of the augmented solve.
#[derive(Debug, Clone)]
pub struct AugmentedSolution {
    pub c: f64,
    /// Remainder H = w^-7/6 v.
    pub h: Spectrum,
    pub v: Vec<f64>,
    /// Max-norm of the least-squares residual of the augmented system.
    pub residual: f64,
}

/// Prefactored least-squares inverse of the augmented system
/// A (v + c chi) = w^{3/2} Psi, sum of v over the outer decades = 0.
pub struct AugmentedSystem {
    grid: LogGrid,
    matrix: DMatrix<f64>,
    pinv: DMatrix<f64>,
    pub smallest_singular_value: f64,
    /// Exponent margin used for the remainder's tail model.
    pub delta: f64,
}

impl AugmentedSystem {
    pub fn new(grid: LogGrid, toeplitz: &Toeplitz, delta: f64) -> Result<Self> {
        let n = grid.n();
        let decade = std::f64::consts::LN_10;
        if grid.x_max() < 1.0 + decade || grid.x_min() > -decade {
            return Err(KweError::WindowTooSmall(
                "window must contain a decade below 0 and above 1 + ln 10".into(),
            ));
        }
        let a = assemble_matrix(&grid, toeplitz, TailExtension::Constant)?;
        let chiv = DVector::from_iterator(n, grid.xs().into_iter().map(chi));
        let achi = &a * &chiv;
        let mut m = DMatrix::<f64>::zeros(n + 2, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&a);
        m.view_mut((0, n), (n, 1)).copy_from(&achi);
        for j in 0..n {
            let x = grid.x(j);
            if x >= grid.x_max() - decade {
                m[(n, j)] = 1.0;
            }
            if x <= grid.x_min() + decade {
                m[(n + 1, j)] = 1.0;
            }
        }
        let svd = m.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-10 * smax) {
            return Err(KweError::RankDeficient(smin));
        }
        let pinv = svd
            .pseudo_inverse(1e-12 * smax)
            .map_err(|_| KweError::RankDeficient(smin))?;
        Ok(Self { grid, matrix: m, pinv, smallest_singular_value: smin, delta })
    }

    pub fn grid(&self) -> LogGrid {
        self.grid
    }

    /// Solve for node values psi_i = Psi(w_i).
    pub fn solve_values(&self, psi: &[f64]) -> Result<AugmentedSolution> {
        let n = self.grid.n();
        if psi.len() != n {
            return Err(KweError::InvalidRange(format!("expected {n} forcing values, got {}", psi.len())));
        }
        let mut rhs = DVector::<f64>::zeros(n + 2);
        for i in 0..n {
            rhs[i] = self.grid.omega(i).powf(1.5) * psi[i];
        }
        let sol = &self.pinv * &rhs;
        let res = (&self.matrix * &sol - &rhs).amax();
        let v: Vec<f64> = sol.iter().take(n).copied().collect();
        let c = sol[n];
        let h = Spectrum::sampled_with_exponents(self.grid, v.clone(), KZ_EXPONENT - self.delta, KZ_EXPONENT + self.delta)?;
        Ok(AugmentedSolution { c, h, v, residual: res })
    }

    pub fn solve(&self, psi: &Spectrum) -> Result<AugmentedSolution> {
        if psi.grid() != self.grid {
            return Err(KweError::InvalidRange("forcing must live on the solver grid".into()));
        }
        self.solve_values(&psi.node_values())
    }
}

/// One-shot augmented solve: builds the kernel, matrix and factorization.
pub fn solve_augmented(psi: &Spectrum, grid: LogGrid, q: &QuadratureConfig) -> Result<AugmentedSolution> {
    let t = Toeplitz::new(grid.h(), q)?;
    AugmentedSystem::new(grid, &t, 1.0 / 12.0)?.solve(psi)
}
