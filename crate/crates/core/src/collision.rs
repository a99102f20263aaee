//! Cubic collision operator, its trilinear forms and the weak pairing.
//!
//! The resonant set omega_1 + omega_2 = omega_3 + omega_4 is integrated over
//! the ordered half omega_3 < omega_4 and split by which frequency is the
//! smallest. Each piece gets log coordinates in which the kernel W is a
//! plain power and the integrand decays exponentially toward the
//! truncation ends:
//!
//! * region 1 (omega_1 smallest): omega_3 = omega_1 e^s, omega_4 = omega_3 e^t
//! * region 2 (omega_2 smallest): omega_2 = omega_1 e^-s, omega_3 = omega_2 e^t
//! * region 3 (omega_3 smallest): omega_3 = omega_1 e^-s, omega_4 = omega_1 + e^u

use serde::{Deserialize, Serialize};

use crate::error::{KweError, Result};
use crate::grid_spectra::Spectrum;
use crate::quadrature::{End, Neumaier, PanelRule, QuadratureConfig};

/// min(sqrt w_i) / sqrt(w_1).
pub fn kernel_w(w1: f64, w2: f64, w3: f64, w4: f64) -> Result<f64> {
    if w1 < 0.0 || w2 < 0.0 || w3 < 0.0 || w4 < 0.0 {
        return Err(KweError::Domain(format!(
            "negative frequency in kernel: ({w1}, {w2}, {w3}, {w4})"
        )));
    }
    if w1 == 0.0 || w2 == 0.0 || w3 == 0.0 || w4 == 0.0 {
        return Ok(0.0);
    }
    let m = w1.min(w2).min(w3).min(w4);
    Ok((m / w1).sqrt())
}

/// Contributions of the three min-variable regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionSplit {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub total: f64,
    /// Integral of gain plus loss; the scale for normalized residuals.
    pub positive: f64,
}

impl CollisionSplit {
    pub fn zero() -> Self {
        Self { c1: 0.0, c2: 0.0, c3: 0.0, total: 0.0, positive: 0.0 }
    }

    /// |total| / positive, or 0 for an identically vanishing integrand.
    pub fn normalized_residual(&self) -> f64 {
        if self.positive == 0.0 {
            0.0
        } else {
            self.total.abs() / self.positive
        }
    }
}

/// How strictly tail exponents are checked before integrating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admissibility {
    /// Require the locality window alpha < 5/4, beta > 1.
    Local,
    /// Caller asserts the integrand cancels pointwise (RJ and KZ families);
    /// only alpha < 5/4, beta >= 1 is required.
    PointwiseCancelling,
}

pub(crate) fn check_local(s: &Spectrum, adm: Admissibility) -> Result<()> {
    let (a, b) = s.effective_exponents();
    let ok_b = match adm {
        Admissibility::Local => b > 1.0,
        Admissibility::PointwiseCancelling => b >= 1.0,
    };
    if a < 1.25 && ok_b {
        Ok(())
    } else {
        Err(KweError::Locality { alpha: a, beta: b, window: "alpha < 5/4, beta > 1" })
    }
}

pub(crate) fn union_features(spectra: &[&Spectrum]) -> Vec<f64> {
    let mut v: Vec<f64> = spectra.iter().flat_map(|s| s.features().iter().copied()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

/// Reusable quadrature state for resonant-set integrals at one point.
pub struct ResonantRule {
    rule: PanelRule,
    t_low: f64,
    t_high: f64,
}

impl ResonantRule {
    pub fn new(cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { rule: cfg.rule(), t_low: cfg.t_low(), t_high: cfg.t_high() })
    }

    /// Visit every node of the ordered resonant half-plane at `w1`.
    /// The callback gets (region, weight, [w1, w2, w3, w4]); weight carries
    /// the Jacobian and W but not the factor 2 of the ordered form.
    pub fn for_each<V: FnMut(usize, f64, &[f64; 4])>(&self, w1: f64, features: &[f64], mut visit: V) {
        let rule = &self.rule;
        let mut ox = Vec::new();
        let mut ow = Vec::new();
        let mut ix = Vec::new();
        let mut iw = Vec::new();
        let mut focus = Vec::new();

        // Region 1: w1 <= w3 <= w4.
        focus.clear();
        for &f in features {
            if f > w1 {
                focus.push((f / w1).ln());
                focus.push(((f + w1) / (2.0 * w1)).ln());
            }
        }
        ox.clear();
        ow.clear();
        rule.segment(0.0, self.t_high, End::Focus, End::Free, &mut focus, &mut ox, &mut ow);
        for (&s, &ws) in ox.iter().zip(&ow) {
            let w3 = w1 * s.exp();
            focus.clear();
            for &f in features {
                if f > w3 {
                    focus.push((f / w3).ln());
                }
                let g = f + w1 - w3;
                if g > w3 {
                    focus.push((g / w3).ln());
                }
            }
            ix.clear();
            iw.clear();
            rule.segment(0.0, self.t_high, End::Focus, End::Free, &mut focus, &mut ix, &mut iw);
            for (&t, &wt) in ix.iter().zip(&iw) {
                let w4 = w3 * t.exp();
                let w2 = (w3 - w1) + w4;
                visit(0, ws * wt * w3 * w4, &[w1, w2, w3, w4]);
            }
        }

        // Region 2: w2 <= w3 <= w4, w2 <= w1.
        focus.clear();
        for &f in features {
            if f < w1 {
                focus.push((w1 / f).ln());
                let d = 2.0 * f - w1;
                if d > 0.0 {
                    focus.push((w1 / d).ln());
                }
            }
        }
        ox.clear();
        ow.clear();
        rule.segment(0.0, self.t_low, End::Focus, End::Free, &mut focus, &mut ox, &mut ow);
        for (&s, &ws) in ox.iter().zip(&ow) {
            let w2 = w1 * (-s).exp();
            let top = ((w1 + w2) / (2.0 * w2)).ln();
            if !(top > 0.0) {
                continue;
            }
            focus.clear();
            for &f in features {
                if f > w2 {
                    focus.push((f / w2).ln());
                }
                let g = w1 + w2 - f;
                if g > w2 {
                    focus.push((g / w2).ln());
                }
            }
            ix.clear();
            iw.clear();
            rule.segment(0.0, top, End::Focus, End::Focus, &mut focus, &mut ix, &mut iw);
            let kw = (w2 / w1).sqrt();
            for (&t, &wt) in ix.iter().zip(&iw) {
                let w3 = w2 * t.exp();
                let w4 = (w1 - w3) + w2;
                visit(1, ws * wt * w2 * w3 * kw, &[w1, w2, w3, w4]);
            }
        }

        // Region 3: w3 smallest, w4 = w1 + d, w2 = w3 + d.
        focus.clear();
        for &f in features {
            if f < w1 {
                focus.push((w1 / f).ln());
            }
            if f < 2.0 * w1 {
                focus.push((2.0 * w1 / f).ln());
            }
        }
        ox.clear();
        ow.clear();
        rule.segment(0.0, self.t_low, End::Focus, End::Free, &mut focus, &mut ox, &mut ow);
        let l1 = w1.ln();
        for (&s, &ws) in ox.iter().zip(&ow) {
            let w3 = w1 * (-s).exp();
            let l3 = l1 - s;
            focus.clear();
            focus.push(l3);
            focus.push(l1);
            for &f in features {
                if f > w1 {
                    focus.push((f - w1).ln());
                }
                if f > w3 {
                    focus.push((f - w3).ln());
                }
            }
            ix.clear();
            iw.clear();
            rule.segment(l3 - self.t_low, l1 + self.t_high, End::Free, End::Free, &mut focus, &mut ix, &mut iw);
            let kw = (w3 / w1).sqrt();
            for (&u, &wu) in ix.iter().zip(&iw) {
                let d = u.exp();
                visit(2, ws * wu * w3 * d * kw, &[w1, w3 + d, w3, w1 + d]);
            }
        }
    }
}

#[inline]
fn eval4(s: &Spectrum, w: &[f64; 4]) -> [f64; 4] {
    [s.at(w[0]), s.at(w[1]), s.at(w[2]), s.at(w[3])]
}

/// Bracket of the ordered trilinear form: (f1+f2) g3 h4 - (g3+g4) h1 f2.
#[inline]
fn bar_bracket(f: &[f64; 4], g: &[f64; 4], h: &[f64; 4]) -> (f64, f64) {
    let gain = (f[0] + f[1]) * g[2] * h[3];
    let loss = (g[2] + g[3]) * h[0] * f[1];
    (gain, loss)
}

/// Ordered trilinear form with prefactor 2.
pub fn collision_trilinear(f: &Spectrum, g: &Spectrum, h: &Spectrum, w1: f64, q: &QuadratureConfig) -> Result<f64> {
    Ok(trilinear_parts(f, g, h, w1, q)?.0)
}

/// Ordered trilinear form and its absolute-value majorant.
pub fn trilinear_parts(f: &Spectrum, g: &Spectrum, h: &Spectrum, w1: f64, q: &QuadratureConfig) -> Result<(f64, f64)> {
    check_point(w1)?;
    for s in [f, g, h] {
        check_local(s, Admissibility::Local)?;
    }
    if f.is_zero() || g.is_zero() || h.is_zero() {
        return Ok((0.0, 0.0));
    }
    let rr = ResonantRule::new(q)?;
    let feats = union_features(&[f, g, h]);
    let mut val = Neumaier::new();
    let mut pos = Neumaier::new();
    rr.for_each(w1, &feats, |_, wt, w| {
        let (a, b, c) = (eval4(f, w), eval4(g, w), eval4(h, w));
        let (gain, loss) = bar_bracket(&a, &b, &c);
        val.add(wt * (gain - loss));
        pos.add(wt * (gain + loss));
    });
    Ok((2.0 * val.value(), 2.0 * pos.value()))
}

/// Absolute-value majorant of the ordered trilinear form.
pub fn trilinear_positive(f: &Spectrum, g: &Spectrum, h: &Spectrum, w1: f64, q: &QuadratureConfig) -> Result<f64> {
    Ok(trilinear_parts(f, g, h, w1, q)?.1)
}

const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Average of the six permutations of the ordered trilinear form.
pub fn collision_sym(f: &Spectrum, g: &Spectrum, h: &Spectrum, w1: f64, q: &QuadratureConfig) -> Result<f64> {
    check_point(w1)?;
    for s in [f, g, h] {
        check_local(s, Admissibility::Local)?;
    }
    if f.is_zero() || g.is_zero() || h.is_zero() {
        return Ok(0.0);
    }
    let rr = ResonantRule::new(q)?;
    let feats = union_features(&[f, g, h]);
    let mut acc = [Neumaier::new(); 6];
    rr.for_each(w1, &feats, |_, wt, w| {
        let v = [eval4(f, w), eval4(g, w), eval4(h, w)];
        for (k, p) in PERMS.iter().enumerate() {
            let (gain, loss) = bar_bracket(&v[p[0]], &v[p[1]], &v[p[2]]);
            acc[k].add(wt * (gain - loss));
        }
    });
    // Sum permutations in a fixed order so that any argument order gives
    // the same bits.
    let mut vals: Vec<f64> = acc.iter().map(|a| 2.0 * a.value()).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(crate::quadrature::compensated_sum(&vals) / 6.0)
}

fn check_point(w1: f64) -> Result<()> {
    if w1 > 0.0 && w1.is_finite() {
        Ok(())
    } else {
        Err(KweError::Domain(format!("evaluation frequency must be positive, got {w1}")))
    }
}

/// C(f)(w1) with its min-region split.
pub fn collision(f: &Spectrum, w1: f64, q: &QuadratureConfig) -> Result<CollisionSplit> {
    collision_with(f, w1, q, Admissibility::Local)
}

/// As [`collision`] with an explicit admissibility mode.
pub fn collision_with(f: &Spectrum, w1: f64, q: &QuadratureConfig, adm: Admissibility) -> Result<CollisionSplit> {
    check_point(w1)?;
    check_local(f, adm)?;
    if f.is_zero() {
        return Ok(CollisionSplit::zero());
    }
    let rr = ResonantRule::new(q)?;
    let feats = union_features(&[f]);
    let mut parts = [Neumaier::new(); 3];
    let mut pos = Neumaier::new();
    rr.for_each(w1, &feats, |r, wt, w| {
        let v = eval4(f, w);
        let gain = (v[0] + v[1]) * v[2] * v[3];
        let loss = (v[2] + v[3]) * v[0] * v[1];
        parts[r].add(wt * (gain - loss));
        pos.add(wt * (gain + loss));
    });
    let c1 = 2.0 * parts[0].value();
    let c2 = 2.0 * parts[1].value();
    let c3 = 2.0 * parts[2].value();
    Ok(CollisionSplit {
        c1,
        c2,
        c3,
        total: crate::quadrature::compensated_sum(&[c1, c2, c3]),
        positive: 2.0 * pos.value(),
    })
}

/// Collision value with a refinement-based error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckedValue {
    pub split: CollisionSplit,
    pub error_estimate: f64,
    /// Set when error_estimate exceeds rel_tol times the positive part.
    pub tolerance_warning: bool,
}

/// Evaluate at `q` and at half the panel density; the difference is the estimate.
pub fn collision_checked(f: &Spectrum, w1: f64, q: &QuadratureConfig) -> Result<CheckedValue> {
    let fine = collision(f, w1, q)?;
    let coarse_cfg = QuadratureConfig { panels_per_decade: (q.panels_per_decade / 2).max(1), ..q.clone() };
    let coarse = collision(f, w1, &coarse_cfg)?;
    let err = (fine.total - coarse.total).abs();
    Ok(CheckedValue { split: fine, error_estimate: err, tolerance_warning: err > q.rel_tol * fine.positive })
}

/// Terms of C(F + G) of degree one, two and three in G, at w1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpansionTerms {
    /// 3 C(F, F, G)
    pub linear: f64,
    /// 3 C(F, G, G)
    pub quadratic: f64,
    /// C(G, G, G)
    pub cubic: f64,
    pub positive: f64,
}

/// Polynomial expansion of the collision operator around `base`.
pub fn expansion_terms(base: &Spectrum, g: &Spectrum, w1: f64, q: &QuadratureConfig) -> Result<ExpansionTerms> {
    check_point(w1)?;
    check_local(base, Admissibility::PointwiseCancelling)?;
    check_local(g, Admissibility::Local)?;
    let rr = ResonantRule::new(q)?;
    let feats = union_features(&[base, g]);
    Ok(expansion_at(&rr, base, g, w1, &feats))
}

pub(crate) fn expansion_at(rr: &ResonantRule, base: &Spectrum, g: &Spectrum, w1: f64, feats: &[f64]) -> ExpansionTerms {
    let mut lin = Neumaier::new();
    let mut quad = Neumaier::new();
    let mut cub = Neumaier::new();
    let mut pos = Neumaier::new();
    rr.for_each(w1, feats, |_, wt, w| {
        let f = eval4(base, w);
        let h = eval4(g, w);
        let (b1, b2, b3, p) = expansion_brackets(&f, &h);
        lin.add(wt * b1);
        quad.add(wt * b2);
        cub.add(wt * b3);
        pos.add(wt * p);
    });
    ExpansionTerms {
        linear: 2.0 * lin.value(),
        quadratic: 2.0 * quad.value(),
        cubic: 2.0 * cub.value(),
        positive: 2.0 * pos.value(),
    }
}

/// Degree 1, 2, 3 parts of (f1+f2) f3 f4 - (f3+f4) f1 f2 at f = F + G, plus
/// the gain+loss magnitude of the full bracket.
#[inline]
pub(crate) fn expansion_brackets(f: &[f64; 4], g: &[f64; 4]) -> (f64, f64, f64, f64) {
    let (f1, f2, f3, f4) = (f[0], f[1], f[2], f[3]);
    let (g1, g2, g3, g4) = (g[0], g[1], g[2], g[3]);
    let b1 = (g1 + g2) * f3 * f4 + (f1 + f2) * (g3 * f4 + f3 * g4)
        - (g3 + g4) * f1 * f2
        - (f3 + f4) * (g1 * f2 + f1 * g2);
    let b2 = (g1 + g2) * (g3 * f4 + f3 * g4) + (f1 + f2) * g3 * g4
        - (g3 + g4) * (g1 * f2 + f1 * g2)
        - (f3 + f4) * g1 * g2;
    let b3 = (g1 + g2) * g3 * g4 - (g3 + g4) * g1 * g2;
    let (s1, s2, s3, s4) = (f1 + g1, f2 + g2, f3 + g3, f4 + g4);
    let p = ((s1 + s2) * s3 * s4).abs() + ((s3 + s4) * s1 * s2).abs();
    (b1, b2, b3, p)
}

/// (C[f(lambda .)](w), lambda^-2 C[f](lambda w)).
pub fn scaling_check(f: &Spectrum, lambda: f64, w: f64, q: &QuadratureConfig) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(KweError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if lambda == 1.0 {
        let v = collision(f, w, q)?.total;
        return Ok((v, v));
    }
    let fl = f.dilated(lambda, 1.0)?;
    let lhs = collision(&fl, w, q)?.total;
    let rhs = collision(f, lambda * w, q)?.total / (lambda * lambda);
    Ok((lhs, rhs))
}

/// Weak form int sqrt(w) C(f) phi dw, written as
/// 1/2 iiint min(sqrt w_i) f1 f2 (f3 + f4) (phi3 + phi4 - phi1 - phi2).
///
/// Coordinates: E = w1 + w2 = w3 + w4, w1 = (E/2) e^-p, w3 = (E/2) e^-r
/// with w1 <= w2 and w3 <= w4 (the four symmetric copies give a factor 4).
pub fn weak_pairing(f: &Spectrum, phi: &Spectrum, q: &QuadratureConfig) -> Result<f64> {
    let (a, b) = f.effective_exponents();
    if !(a < 1.5 && b > 1.0) {
        return Err(KweError::Locality { alpha: a, beta: b, window: "alpha < 3/2, beta > 1" });
    }
    if f.is_zero() || phi.is_zero() {
        return Ok(0.0);
    }
    q.validate()?;
    let rule = q.rule();
    let feats = union_features(&[f, phi]);
    // The pairing has no preferred scale; centre the E range on the features.
    let centre = if feats.is_empty() { 1.0 } else { (feats[0] * feats[feats.len() - 1]).sqrt() };
    let lc = centre.ln();
    let mut focus: Vec<f64> = Vec::new();
    for &fe in &feats {
        focus.push(fe.ln());
        focus.push((2.0 * fe).ln());
    }
    focus.push(lc);
    let (ex, ew) = {
        let mut x = Vec::new();
        let mut w = Vec::new();
        rule.segment(lc - q.t_low(), lc + q.t_high(), End::Free, End::Free, &mut focus, &mut x, &mut w);
        (x, w)
    };
    let tl = q.t_low();
    let mut px = Vec::new();
    let mut pw = Vec::new();
    let mut rx = Vec::new();
    let mut rw = Vec::new();
    let mut total = Neumaier::new();
    for (&le, &we) in ex.iter().zip(&ew) {
        let e = le.exp();
        let half = 0.5 * e;
        // Breakpoints for a frequency equal to a feature on either side.
        focus.clear();
        for &fe in &feats {
            if fe < half {
                focus.push((half / fe).ln());
            } else if fe < e {
                let o = e - fe;
                if o < half {
                    focus.push((half / o).ln());
                }
            }
        }
        px.clear();
        pw.clear();
        let mut fp = focus.clone();
        rule.segment(0.0, tl, End::Focus, End::Free, &mut fp, &mut px, &mut pw);
        for (&p, &wp) in px.iter().zip(&pw) {
            let w1 = half * (-p).exp();
            let w2 = (half - w1) + half;
            let f1 = f.at(w1);
            let f2 = f.at(w2);
            if f1 == 0.0 || f2 == 0.0 {
                continue;
            }
            let (p1, p2) = (phi.at(w1), phi.at(w2));
            let mut fr = focus.clone();
            fr.push(p);
            rx.clear();
            rw.clear();
            rule.segment(0.0, tl, End::Focus, End::Free, &mut fr, &mut rx, &mut rw);
            let mut inner = Neumaier::new();
            for (&r, &wr) in rx.iter().zip(&rw) {
                let w3 = half * (-r).exp();
                let w4 = (half - w3) + half;
                let dphi = (phi.at(w3) - p1) + (phi.at(w4) - p2);
                if dphi == 0.0 {
                    continue;
                }
                let m = w1.min(w3).sqrt();
                inner.add(wr * w3 * m * (f.at(w3) + f.at(w4)) * dphi);
            }
            total.add(we * e * wp * w1 * f1 * f2 * inner.value());
        }
    }
    Ok(2.0 * total.value())
}

/// Value of the conformally mapped integral over the triangle
/// {w3 + w4 >= w1, w3, w4 <= w1} for f = w^alpha, with its magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZakharovValue {
    pub value: f64,
    /// Integral with the conformal factor replaced by the sum of absolute
    /// values of its four terms.
    pub scale: f64,
}

impl ZakharovValue {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.value.abs() / self.scale
        }
    }
}

/// The triangle is parametrized by p = w2/w1 = e^-s and w3/w1 = p e^t with
/// w3 <= w4, which is half of the symmetric domain.
pub fn zakharov_delta1(alpha: f64, w1: f64, q: &QuadratureConfig) -> Result<ZakharovValue> {
    check_point(w1)?;
    q.validate()?;
    let k = 3.0 * alpha + 3.5;
    let rule = q.rule();
    let (sx, sw) = rule.build(0.0, q.t_low(), End::Focus, End::Free, &[]);
    let mut val = Neumaier::new();
    let mut scl = Neumaier::new();
    let mut tx = Vec::new();
    let mut tw = Vec::new();
    for (&s, &ws) in sx.iter().zip(&sw) {
        let p = (-s).exp();
        let top = ((1.0 + p) / (2.0 * p)).ln();
        if !(top > 0.0) {
            continue;
        }
        tx.clear();
        tw.clear();
        rule.segment(0.0, top, End::Focus, End::Focus, &mut Vec::new(), &mut tx, &mut tw);
        for (&t, &wt) in tx.iter().zip(&tw) {
            let a = p * t.exp();
            let b = (1.0 + p) - a;
            let om = [1.0, p, a, b];
            let wk = p.min(a).sqrt();
            let prod = (om[1] * om[2] * om[3]).powf(alpha);
            let e = |x: f64| x.powf(-alpha);
            let bracket = ((e(1.0) + e(p)) - e(a)) - e(b);
            let r = |x: f64| (1.0 / x).powf(k);
            let conf = ((1.0 + r(p)) - r(a)) - r(b);
            let conf_abs = 1.0 + r(p) + r(a) + r(b);
            let base = ws * wt * p * a * wk * prod;
            val.add(base * bracket * conf);
            scl.add(base * bracket.abs() * conf_abs);
        }
    }
    let h = w1.powf(3.0 * alpha + 2.0);
    Ok(ZakharovValue { value: 2.0 * h * val.value(), scale: 2.0 * h * scl.value() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel_w(1.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(kernel_w(4.0, 1.0, 2.0, 3.0).unwrap(), 0.5);
        assert_eq!(kernel_w(1.0, 4.0, 2.0, 3.0).unwrap(), 1.0);
        assert!(kernel_w(-1.0, 1.0, 1.0, 1.0).is_err());
    }
}
