//! Generalized geodesics on `T_d`, the flow `Φ_τ(c)(t) = c(t + τ)`, and the
//! weighted-integral metrics on `FS(T_d)` and `HFS = FS(T_d) × ℝ`.
//!
//! On `FS(T_d)` the integrand `t ↦ d_T(c1(t), c2(t))` is piecewise linear,
//! so `d_FS` is integrated exactly piece by piece against `e^{-|t|}/2`.

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{d_pow, rat, Rational};
use crate::error::{Error, Result};
use crate::group::{AffineElement, Gamma, GammaElement};
use crate::tree::{act_point, meet_level, point_distance, TreeVertex, TreePoint};
use crate::warped::{self, SpacePoint};

/// Maximal order of a finite subgroup of `BS(1,d)`, which is torsion free.
pub const K_GAMMA: u64 = 1;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeodesicKind {
    Constant,
    Segment { target: TreePoint },
    RayToOmega,
}

/// A map `ℝ → T_d`, constant off `(c_minus, c_plus)` and unit speed on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneralizedGeodesic {
    #[serde(flatten)]
    pub kind: GeodesicKind,
    pub anchor: TreePoint,
    pub c_minus: f64,
    #[serde(with = "extended_real")]
    pub c_plus: f64,
}

mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() {
            s.serialize_str(if *x > 0.0 { "+inf" } else { "-inf" })
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        match serde_json::Value::deserialize(de)? {
            serde_json::Value::String(s) if s == "+inf" || s == "inf" => Ok(f64::INFINITY),
            serde_json::Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| serde::de::Error::custom("bad number")),
            other => Err(serde::de::Error::custom(format!("expected extended real, got {other}"))),
        }
    }
}

impl GeneralizedGeodesic {
    pub fn constant(z: TreePoint) -> Self {
        Self { kind: GeodesicKind::Constant, anchor: z, c_minus: 0.0, c_plus: 0.0 }
    }

    /// Stays at `z` until `start`, then runs up `[z, ω)`.
    pub fn ray(z: TreePoint, start: f64) -> Self {
        Self { kind: GeodesicKind::RayToOmega, anchor: z, c_minus: start, c_plus: f64::INFINITY }
    }

    pub fn segment(from: TreePoint, to: TreePoint, start: f64, d: u64) -> Self {
        let len = point_distance(&from, &to, d);
        Self { kind: GeodesicKind::Segment { target: to }, anchor: from, c_minus: start, c_plus: start + len }
    }

    pub fn validate(&self, d: u64) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.c_minus.is_nan() || self.c_plus.is_nan() || self.c_minus > self.c_plus {
            return bad("need c_minus <= c_plus");
        }
        if self.c_minus == f64::INFINITY || self.c_plus == f64::NEG_INFINITY {
            return bad("c_minus must not be +inf and c_plus must not be -inf");
        }
        match &self.kind {
            GeodesicKind::Constant if self.c_minus != self.c_plus => bad("constant geodesic with a nondegenerate interval"),
            GeodesicKind::RayToOmega if self.c_plus != f64::INFINITY || !self.c_minus.is_finite() => {
                bad("ray needs a finite start and c_plus = +inf")
            }
            GeodesicKind::Segment { target } => {
                let len = point_distance(&self.anchor, target, d);
                if !self.c_minus.is_finite() || ((self.c_plus - self.c_minus) - len).abs() > 1e-9 {
                    return bad("segment interval must match the endpoint distance");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Height of the highest point the geodesic visits on its interval.
    fn turn(&self, d: u64) -> Option<(f64, f64)> {
        match &self.kind {
            GeodesicKind::Segment { target } => {
                let m = meet_level(&self.anchor.base, &target.base, d) as f64;
                let top = m.max(self.anchor.height()).max(target.height());
                Some((self.c_minus + (top - self.anchor.height()), top))
            }
            _ => None,
        }
    }
}

/// `c(t)`.
pub fn evaluate(c: &GeneralizedGeodesic, t: f64, d: u64) -> TreePoint {
    match &c.kind {
        GeodesicKind::Constant => c.anchor.clone(),
        GeodesicKind::RayToOmega => {
            if t <= c.c_minus {
                c.anchor.clone()
            } else {
                c.anchor.ascend(t - c.c_minus, d)
            }
        }
        GeodesicKind::Segment { target } => {
            if t <= c.c_minus {
                return c.anchor.clone();
            }
            if t >= c.c_plus {
                return target.clone();
            }
            let (turn_t, _) = c.turn(d).expect("segment");
            if t <= turn_t {
                c.anchor.ascend(t - c.c_minus, d)
            } else {
                target.ascend(c.c_plus - t, d)
            }
        }
    }
}

/// `Φ_τ(c)`.
pub fn flow(c: &GeneralizedGeodesic, tau: f64) -> GeneralizedGeodesic {
    match c.kind {
        GeodesicKind::Constant => c.clone(),
        _ => GeneralizedGeodesic { c_minus: c.c_minus - tau, c_plus: c.c_plus - tau, ..c.clone() },
    }
}

/// `Ψ(z)`: constant `z` on `(-∞, 0]`, then `[z, ω)` at unit speed.
pub fn psi(z: &TreePoint) -> GeneralizedGeodesic {
    GeneralizedGeodesic::ray(z.clone(), 0.0)
}

/// `Ψ_τ(z) = Φ_τ(Ψ(z))`.
pub fn psi_tau(z: &TreePoint, tau: f64) -> GeneralizedGeodesic {
    flow(&psi(z), tau)
}

pub fn group_act(g: &AffineElement, c: &GeneralizedGeodesic, d: u64) -> GeneralizedGeodesic {
    let kind = match &c.kind {
        GeodesicKind::Segment { target } => GeodesicKind::Segment { target: act_point(g, target, d) },
        k => k.clone(),
    };
    GeneralizedGeodesic { kind, anchor: act_point(g, &c.anchor, d), ..c.clone() }
}

pub fn group_act_gamma(gamma: &Gamma, g: &GammaElement, c: &GeneralizedGeodesic) -> GeneralizedGeodesic {
    group_act(&gamma.to_affine(g), c, gamma.d())
}

/// Times at which the geodesic sits on a vertex or changes direction,
/// restricted to `[lo, hi]`.
fn events(c: &GeneralizedGeodesic, lo: f64, hi: f64, d: u64, out: &mut Vec<f64>) {
    if c.kind == GeodesicKind::Constant {
        return;
    }
    let mut leg = |t0: f64, h0: f64, t1: f64, rising: bool| {
        // integer heights crossed on [t0, t1] starting at height h0
        let (a, b) = (t0.max(lo), t1.min(hi));
        if a > b {
            return;
        }
        let h_at = |t: f64| if rising { h0 + (t - t0) } else { h0 - (t - t0) };
        let (ha, hb) = (h_at(a), h_at(b));
        let (low, high) = (ha.min(hb), ha.max(hb));
        let mut k = low.ceil();
        while k <= high {
            let t = if rising { t0 + (k - h0) } else { t0 + (h0 - k) };
            out.push(t);
            k += 1.0;
        }
        out.push(a);
        out.push(b);
    };
    let h0 = c.anchor.height();
    match &c.kind {
        GeodesicKind::RayToOmega => leg(c.c_minus, h0, hi, true),
        GeodesicKind::Segment { .. } => {
            let (turn_t, top) = c.turn(d).expect("segment");
            leg(c.c_minus, h0, turn_t, true);
            leg(turn_t, top, c.c_plus, false);
        }
        GeodesicKind::Constant => {}
    }
}

fn height_at(c: &GeneralizedGeodesic, t: f64, d: u64) -> f64 {
    evaluate(c, t, d).height()
}

/// Exact piecewise-linear profile of `t ↦ d_T(c1(t), c2(t))`.
#[derive(Debug, Clone)]
pub struct DistanceProfile {
    /// Breakpoints with values, sorted, spanning `[lo, hi]` and containing 0.
    pub knots: Vec<(f64, f64)>,
    /// Slope of the affine tail on `[hi, ∞)`; on `(-∞, lo]` the profile is constant.
    pub right_slope: f64,
}

impl DistanceProfile {
    pub fn slopes(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
    }
}

fn window(c1: &GeneralizedGeodesic, c2: &GeneralizedGeodesic, d: u64) -> (f64, f64) {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    let mut tops = vec![c1.anchor.height(), c2.anchor.height()];
    let ends: Vec<&TreePoint> = [c1, c2]
        .iter()
        .flat_map(|c| match &c.kind {
            GeodesicKind::Segment { target } => vec![&c.anchor, target],
            _ => vec![&c.anchor],
        })
        .collect();
    for a in &ends {
        tops.push(a.height());
        for b in &ends {
            tops.push(meet_level(&a.base, &b.base, d) as f64);
        }
    }
    let top = tops.into_iter().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for c in [c1, c2] {
        if c.kind == GeodesicKind::Constant {
            continue;
        }
        lo = lo.min(c.c_minus);
        hi = hi.max(c.c_minus);
        match c.kind {
            GeodesicKind::RayToOmega => hi = hi.max(c.c_minus + (top - c.anchor.height()).max(0.0)),
            _ => hi = hi.max(c.c_plus),
        }
    }
    (lo - 1.0, hi + 1.0)
}

pub fn distance_profile(c1: &GeneralizedGeodesic, c2: &GeneralizedGeodesic, d: u64) -> DistanceProfile {
    let f = |t: f64| point_distance(&evaluate(c1, t, d), &evaluate(c2, t, d), d);
    let (lo, hi) = window(c1, c2, d);
    let mut ts = vec![lo, hi, 0.0];
    events(c1, lo, hi, d, &mut ts);
    events(c2, lo, hi, d, &mut ts);
    ts.retain(|t| (lo..=hi).contains(t));
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() <= EPS);
    // two points on one edge give |h1 - h2|, with a kink where they cross
    let mut all = Vec::with_capacity(ts.len() * 2);
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        all.push(a);
        let mid = 0.5 * (a + b);
        let (fa, fb, fm) = (f(a), f(b), f(mid));
        if (fm - 0.5 * (fa + fb)).abs() > 1e-9 {
            let ga = height_at(c1, a, d) - height_at(c2, a, d);
            let gb = height_at(c1, b, d) - height_at(c2, b, d);
            if ga != gb {
                let t = a + ga * (b - a) / (ga - gb);
                if t > a + EPS && t < b - EPS {
                    all.push(t);
                }
            }
        }
    }
    all.push(hi);
    let knots: Vec<(f64, f64)> = all.into_iter().map(|t| (t, f(t))).collect();
    let right_slope = f(hi + 1.0) - f(hi);
    DistanceProfile { knots, right_slope }
}

/// `∫_a^b (linear from fa to fb) · e^{-|t|}/2 dt` for `a, b` on one side of 0.
fn weighted_linear(a: f64, fa: f64, b: f64, fb: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let beta = (fb - fa) / (b - a);
    if a >= 0.0 {
        ((fa + beta) * (-a).exp() - (fb + beta) * (-b).exp()) / 2.0
    } else {
        debug_assert!(b <= 0.0);
        ((fb - beta) * b.exp() - (fa - beta) * a.exp()) / 2.0
    }
}

/// `d_FS(c1, c2) = ∫ d_T(c1(t), c2(t)) e^{-|t|}/2 dt`, evaluated exactly.
pub fn fs_tree_distance(c1: &GeneralizedGeodesic, c2: &GeneralizedGeodesic, d: u64) -> f64 {
    let p = distance_profile(c1, c2, d);
    integrate_profile(&p)
}

pub fn integrate_profile(p: &DistanceProfile) -> f64 {
    let (lo, flo) = p.knots[0];
    let (hi, fhi) = *p.knots.last().expect("nonempty");
    let mut total = flo * lo.exp() / 2.0;
    for w in p.knots.windows(2) {
        total += weighted_linear(w[0].0, w[0].1, w[1].0, w[1].1);
    }
    total + (fhi + p.right_slope) * (-hi).exp() / 2.0
}

/// A point of `HFS = FS(T_d) × ℝ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizontalFlowPoint {
    pub geodesic: GeneralizedGeodesic,
    pub w: f64,
}

impl HorizontalFlowPoint {
    /// `Ψ(z, w)`.
    pub fn psi(p: &SpacePoint) -> Self {
        Self { geodesic: psi(&p.z), w: p.w }
    }

    pub fn flow(&self, tau: f64) -> Self {
        Self { geodesic: flow(&self.geodesic, tau), w: self.w }
    }
}

fn simpson(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn rec(
        f: &dyn Fn(f64) -> Result<f64>,
        (a, fa): (f64, f64),
        (m, fm): (f64, f64),
        (b, fb): (f64, f64),
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm)?, f(rm)?);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a) < 1e-9 {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::NonConvergence("adaptive quadrature depth exhausted".into()));
        }
        Ok(rec(f, (a, fa), (lm, flm), (m, fm), left, tol / 2.0, depth - 1)?
            + rec(f, (m, fm), (rm, frm), (b, fb), right, tol / 2.0, depth - 1)?)
    }
    if b <= a {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a)?, f(m)?, f(b)?);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, (a, fa), (m, fm), (b, fb), whole, tol, 40)
}

/// Adaptive quadrature of `t ↦ d_X((c1(t), w1), (c2(t), w2)) e^{-|t|}/2`,
/// split at the tree profile's breakpoints, with a bounded right tail.
pub fn hfs_distance(h1: &HorizontalFlowPoint, h2: &HorizontalFlowPoint, d: u64, tol: f64) -> Result<f64> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let (c1, c2) = (&h1.geodesic, &h2.geodesic);
    let dw = (h1.w - h2.w).abs();
    let x = |t: f64| -> Result<f64> {
        let p = SpacePoint { z: evaluate(c1, t, d), w: h1.w };
        let q = SpacePoint { z: evaluate(c2, t, d), w: h2.w };
        warped::distance(&p, &q, d, tol * 1e-3)
    };
    let weighted = |t: f64| -> Result<f64> { Ok(x(t)? * (-t.abs()).exp() / 2.0) };
    let profile = distance_profile(c1, c2, d);
    let (lo, _) = profile.knots[0];
    let (hi, fhi) = *profile.knots.last().expect("nonempty");

    // d_X <= d_T + fiber leg at c1(t); the fiber leg grows by at most 2 per unit time
    let kappa = warped::kappa(d);
    let h_hi = evaluate(c1, hi, d).height();
    let fiber = 2.0 / kappa * (kappa * dw * (d as f64).powf(h_hi) + 1.0).ln();
    let (a, b) = (fhi + fiber, profile.right_slope.max(0.0) + 2.0);
    let tail = |t: f64| (a + b * (t - hi) + b) * (-t).exp() / 2.0;
    let mut end = hi;
    while tail(end) > tol / 4.0 {
        end += 1.0;
        if end > hi + 1e4 {
            return Err(Error::NonConvergence("tail bound did not decay".into()));
        }
    }

    let mut cuts: Vec<f64> = profile.knots.iter().map(|k| k.0).collect();
    let mut t = hi;
    while t < end {
        t = (t + 4.0).min(end);
        cuts.push(t);
    }
    let budget = tol / 2.0 / cuts.len() as f64;
    let mut total = x(lo)? * lo.exp() / 2.0;
    for w in cuts.windows(2) {
        total += simpson(&weighted, w[0], w[1], budget)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BandReport {
    pub tau: f64,
    pub base: f64,
    pub flowed: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_slack: f64,
    pub upper_slack: f64,
    pub holds: bool,
}

/// `e^{-|τ|} d_FS(c1, c2) ≤ d_FS(Φ_τ c1, Φ_τ c2) ≤ e^{|τ|} d_FS(c1, c2)`.
pub fn flow_band_check(c1: &GeneralizedGeodesic, c2: &GeneralizedGeodesic, tau: f64, d: u64, tol: f64) -> BandReport {
    let base = fs_tree_distance(c1, c2, d);
    let flowed = fs_tree_distance(&flow(c1, tau), &flow(c2, tau), d);
    let (lower, upper) = ((-tau.abs()).exp() * base, tau.abs().exp() * base);
    let lower_slack = flowed - lower;
    let upper_slack = upper - flowed;
    let scale = 1.0 + base.max(flowed);
    BandReport {
        tau,
        base,
        flowed,
        lower,
        upper,
        lower_slack,
        upper_slack,
        holds: lower_slack >= -tol * scale && upper_slack >= -tol * scale,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShrinkSample {
    pub n: u64,
    pub point_distance: f64,
    pub hfs_distance: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShrinkReport {
    pub epsilon: f64,
    pub big_d: f64,
    pub t: f64,
    pub n_bar: u64,
    pub samples: Vec<ShrinkSample>,
    pub holds: bool,
}

/// Ascent time `T = max(1, ln(4/ε))`.
pub fn shrink_time(epsilon: f64) -> f64 {
    1f64.max((4.0 / epsilon).ln())
}

/// The smallest `N̄ ≥ 1` that makes the same-fiber distance at time `T`
/// below `ε/4` for every base point, given `d_X(P_1, Q_1) < D`.
///
/// Ascending `T` multiplies `sinh(κ D / 2)` by `d^T`, and scaling `w` by
/// `1/n` divides it by `n`.
pub fn shrink_threshold(epsilon: f64, big_d: f64, d: u64) -> Result<u64> {
    if !(epsilon > 0.0 && big_d > 0.0) {
        return Err(Error::InvalidParameter("need epsilon > 0 and D > 0".into()));
    }
    let k = warped::kappa(d);
    let t = shrink_time(epsilon);
    let ratio = (k * t).exp() * (k * big_d / 2.0).sinh() / (k * epsilon / 8.0).sinh();
    if !ratio.is_finite() || ratio > 1e15 {
        return Err(Error::InvalidParameter(format!("N̄ overflows for epsilon {epsilon}, D {big_d}")));
    }
    Ok((ratio.floor() as u64).max(1))
}

/// Checks the lemma on a base pair `(z0, w1), (z0, w2)` with `d_X < D`.
pub fn shrink_bound_check(
    epsilon: f64,
    big_d: f64,
    d: u64,
    z0: &TreePoint,
    w1: f64,
    w2: f64,
    tol: f64,
) -> Result<ShrinkReport> {
    let n_bar = shrink_threshold(epsilon, big_d, d)?;
    let d1 = warped::same_fiber_distance(z0, w1, w2, d);
    if d1 >= big_d {
        return Err(Error::Hypothesis(format!("d_X(P_1, Q_1) = {d1} is not below D = {big_d}")));
    }
    let mut samples = Vec::new();
    let mut ns = vec![n_bar + 1, 2 * n_bar, 10 * n_bar];
    ns.dedup();
    for n in ns {
        let nf = n as f64;
        let p = SpacePoint { z: z0.clone(), w: w1 / nf };
        let q = SpacePoint { z: z0.clone(), w: w2 / nf };
        let pd = warped::same_fiber_distance(z0, p.w, q.w, d);
        let hd = hfs_distance(&HorizontalFlowPoint::psi(&p), &HorizontalFlowPoint::psi(&q), d, tol)?;
        let holds = pd < epsilon / 4.0 && hd <= epsilon + tol;
        samples.push(ShrinkSample { n, point_distance: pd, hfs_distance: hd, holds });
    }
    let holds = samples.iter().all(|s| s.holds);
    Ok(ShrinkReport { epsilon, big_d, t: shrink_time(epsilon), n_bar, samples, holds })
}

/// `τ = ln n - ln δ + n`.
pub fn case2_tau(n: u64, delta: f64) -> f64 {
    (n as f64).ln() - delta.ln() + n as f64
}

/// `ε = δ² / (2 n e^n)`.
pub fn case2_epsilon(n: u64, delta: f64) -> f64 {
    delta * delta / (2.0 * n as f64 * (n as f64).exp())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Case2Sample {
    pub subcase: u8,
    pub x1: String,
    pub x2: String,
    pub d_hat: f64,
    pub d1: f64,
    pub d2: f64,
    pub measured: f64,
    pub bound: f64,
    /// The displayed pairing `Ψ_τ(x̄1), Ψ_{τ+d̂}(x̄2)` in subcase 2, kept for comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub literal_pairing: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Case2Report {
    pub n: u64,
    pub delta: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub samples: Vec<Case2Sample>,
    pub holds: bool,
}

/// The chain `d_FS(Ψ_{τ+d̂}(x̄2), Ψ_τ(x̄1)) ≤ ½ d̂ e^{-τ} < δ/2`.
///
/// Subcase 1 puts `x̄1` on `[x̄2, ω)` at distance `d̂ < n`. Subcase 2 uses two
/// rays meeting at `y` with `d1 = d(x̄1, y) ≥ d2 = d(x̄2, y)`, `d1 + d2 < n`,
/// and pairs `Ψ_{τ+d̂}(x̄1)` with `Ψ_τ(x̄2)`, which coincide after `y`. The
/// bound there is `(d1 + d2)/2 · e^{-(τ - d2)} ≤ n / (2 e^{τ - d1})`.
pub fn case2_estimate_check(n: u64, delta: f64, d: u64) -> Result<Case2Report> {
    if n == 0 || !(delta > 0.0) {
        return Err(Error::InvalidParameter("need n >= 1 and delta > 0".into()));
    }
    let tau = case2_tau(n, delta);
    let nf = n as f64;
    let mut samples = Vec::new();

    let bases = [TreeVertex::p(0), TreeVertex::p(-2), crate::tree::vertex_canonicalize(&rat(1, d as i64), 1, d)];
    let mut offsets = vec![0.0, 0.5];
    let mut k = 1.0;
    while k < nf {
        offsets.push(k);
        offsets.push((k + 0.25).min(nf - 1e-3));
        k += 1.0;
    }
    offsets.retain(|&o| o < nf);
    for base in &bases {
        let x2: TreePoint = base.clone().into();
        for &dh in &offsets {
            let x1 = x2.ascend(dh, d);
            let measured = fs_tree_distance(&psi_tau(&x2, tau + dh), &psi_tau(&x1, tau), d);
            let bound = 0.5 * dh * (-tau).exp();
            let holds = measured <= bound * (1.0 + 1e-9) + 1e-300 && bound < delta / 2.0;
            samples.push(Case2Sample {
                subcase: 1,
                x1: describe(&x1),
                x2: describe(&x2),
                d_hat: dh,
                d1: 0.0,
                d2: 0.0,
                measured,
                bound,
                literal_pairing: None,
                holds,
            });
        }
    }

    // two branches below P_0: residues 0 and 1 split at P_0
    for a in 1..n as i64 {
        for b in 1..=a {
            if (a + b) as f64 >= nf {
                continue;
            }
            for &(oa, ob) in &[(0.0, 0.0), (0.5, 0.25), (0.0, 0.5)] {
                let x1 = TreePoint::new(TreeVertex::p(-a), oa)?;
                let x2 = TreePoint::new(crate::tree::vertex_canonicalize(&Rational::one(), -b, d), ob)?;
                let (d1, d2) = (a as f64 - oa, b as f64 - ob);
                if d1 < d2 {
                    continue;
                }
                let dh = d1 - d2;
                let measured = fs_tree_distance(&psi_tau(&x1, tau + dh), &psi_tau(&x2, tau), d);
                let literal = fs_tree_distance(&psi_tau(&x1, tau), &psi_tau(&x2, tau + dh), d);
                let bound = 0.5 * (d1 + d2) * (-(tau - d2)).exp();
                let stated = nf / (2.0 * (tau - d1).exp());
                let holds = measured <= bound * (1.0 + 1e-9) && bound <= stated * (1.0 + 1e-12) && stated < delta / 2.0;
                samples.push(Case2Sample {
                    subcase: 2,
                    x1: describe(&x1),
                    x2: describe(&x2),
                    d_hat: dh,
                    d1,
                    d2,
                    measured,
                    bound,
                    literal_pairing: Some(literal),
                    holds,
                });
            }
        }
    }
    let holds = samples.iter().all(|s| s.holds);
    Ok(Case2Report { n, delta, tau, epsilon: case2_epsilon(n, delta), samples, holds })
}

fn describe(p: &TreePoint) -> String {
    if p.offset == 0.0 {
        p.base.to_string()
    } else {
        format!("{}+{}", p.base, p.offset)
    }
}

/// Number of `x ∈ ℝ/ℤ` with `d^m x ≡ x (mod 1)`, confirmed by checking each
/// candidate `j / (d^m - 1)` exactly and that the candidates are distinct.
pub fn count_periodic(m: u32, d: u64) -> Result<u64> {
    if m == 0 || d < 2 {
        return Err(Error::InvalidParameter("need m >= 1 and d >= 2".into()));
    }
    let dm = d_pow(d, m as i64);
    let n = dm.to_integer() - num_bigint::BigInt::one();
    let count: u64 = n.clone().try_into().map_err(|_| Error::InvalidParameter("d^m too large".into()))?;
    if count > 10_000_000 {
        return Err(Error::InvalidParameter(format!("{count} candidates exceeds the brute-force cap")));
    }
    let mut seen = std::collections::HashSet::with_capacity(count as usize);
    for j in 0..count {
        let x = Rational::new(j.into(), n.clone());
        let shifted = &dm * &x - &x;
        if !shifted.fract().is_zero() || !seen.insert(x) {
            return Err(Error::Certification(format!("candidate {j}/{n} fails")));
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::vertex_canonicalize;
    use proptest::prelude::*;

    fn pt(v: TreeVertex) -> TreePoint {
        v.into()
    }

    /// Composite Simpson on the raw integrand as an independent oracle.
    fn quadrature(c1: &GeneralizedGeodesic, c2: &GeneralizedGeodesic, d: u64) -> f64 {
        let f = |t: f64| point_distance(&evaluate(c1, t, d), &evaluate(c2, t, d), d) * (-t.abs()).exp() / 2.0;
        let g = |t: f64| -> Result<f64> { Ok(f(t)) };
        let mut total = 0.0;
        let mut a = -60.0;
        while a < 60.0 {
            total += simpson(&g, a, a + 0.125, 1e-14).unwrap();
            a += 0.125;
        }
        total
    }

    #[test]
    fn evaluate_examples() {
        let z = pt(TreeVertex::p(0));
        let c = GeneralizedGeodesic::constant(z.clone());
        assert_eq!(evaluate(&c, 17.0, 2), z);
        let r = psi(&z);
        assert_eq!(evaluate(&r, 2.0, 2), pt(TreeVertex::p(2)));
        assert_eq!(evaluate(&r, -5.0, 2), z);
        let to = pt(vertex_canonicalize(&rat(1, 1), -2, 2));
        let s = GeneralizedGeodesic::segment(z.clone(), to.clone(), 1.0, 2);
        assert_eq!(s.c_plus - s.c_minus, 2.0);
        assert_eq!(evaluate(&s, s.c_minus, 2), z);
        assert_eq!(evaluate(&s, s.c_plus, 2), to);
        s.validate(2).unwrap();
        r.validate(2).unwrap();
        let bad = GeneralizedGeodesic { c_minus: 3.0, c_plus: 1.0, ..s.clone() };
        assert!(bad.validate(2).is_err());
        // sibling segment passes through the common parent
        let sib = pt(vertex_canonicalize(&rat(1, 2), 0, 2));
        let s2 = GeneralizedGeodesic::segment(z.clone(), sib.clone(), 0.0, 2);
        assert_eq!(evaluate(&s2, 1.0, 2), pt(TreeVertex::p(1)));
        assert_eq!(evaluate(&s2, 1.5, 2).height(), 0.5);
        assert_eq!(point_distance(&evaluate(&s2, 1.5, 2), &sib, 2), 0.5);
    }

    #[test]
    fn flow_examples() {
        let z = pt(TreeVertex::p(0));
        let c = psi(&z);
        assert_eq!(flow(&c, 0.0), c);
        for (a, b) in [(0.5, 1.25), (-2.0, 3.0)] {
            let lhs = flow(&flow(&c, a), b);
            let rhs = flow(&c, a + b);
            for t in [-3.0, 0.0, 0.7, 4.0] {
                assert_eq!(evaluate(&lhs, t, 2), evaluate(&rhs, t, 2));
                assert_eq!(evaluate(&lhs, t, 2), evaluate(&c, t + a + b, 2));
            }
        }
        // Ψ_τ(z) stays at z until -τ
        let p = psi_tau(&z, 2.0);
        assert_eq!(evaluate(&p, -2.0, 2), z);
        assert_eq!(evaluate(&p, 0.0, 2), pt(TreeVertex::p(2)));
    }

    #[test]
    fn constants_give_tree_distance() {
        for d in [2u64, 3] {
            let a = pt(vertex_canonicalize(&rat(1, 1), -2, d));
            let b = pt(TreeVertex::p(1));
            let want = point_distance(&a, &b, d);
            let got = fs_tree_distance(&GeneralizedGeodesic::constant(a), &GeneralizedGeodesic::constant(b), d);
            assert!((got - want).abs() < 1e-12);
        }
        let z = psi(&pt(TreeVertex::p(0)));
        assert_eq!(fs_tree_distance(&z, &z, 2), 0.0);
    }

    #[test]
    fn ray_and_its_flow_match_quadrature() {
        let z = pt(TreeVertex::p(0));
        let c = psi(&z);
        for tau in [0.5, 2.0, -1.5] {
            let exact = fs_tree_distance(&c, &flow(&c, tau), 2);
            // |τ| on one side, growing linearly through the other
            assert!((exact - quadrature(&c, &flow(&c, tau), 2)).abs() < 1e-10);
        }
        // rays from siblings, with offsets
        let a = TreePoint::new(vertex_canonicalize(&rat(1, 1), -3, 3), 0.25).unwrap();
        let b = TreePoint::new(TreeVertex::p(-1), 0.5).unwrap();
        let (c1, c2) = (psi_tau(&a, 0.3), psi_tau(&b, -1.1));
        let p = distance_profile(&c1, &c2, 3);
        for s in p.slopes() {
            assert!((s - s.round()).abs() < 1e-9 && s.abs() <= 2.0 + 1e-9, "slope {s}");
        }
        assert!((fs_tree_distance(&c1, &c2, 3) - quadrature(&c1, &c2, 3)).abs() < 1e-10);
        // a segment crossing a ray on a shared edge
        let s = GeneralizedGeodesic::segment(pt(TreeVertex::p(2)), pt(TreeVertex::p(-1)), -0.7, 2);
        let r = psi(&pt(TreeVertex::p(-1)));
        assert!((fs_tree_distance(&s, &r, 2) - quadrature(&s, &r, 2)).abs() < 1e-10);
    }

    #[test]
    fn action_is_isometric() {
        let gamma = Gamma::new(2).unwrap();
        let a = psi(&pt(TreeVertex::p(0)));
        let b = psi_tau(&pt(vertex_canonicalize(&rat(1, 1), -1, 2)), 0.75);
        let id = GammaElement::identity();
        assert_eq!(group_act_gamma(&gamma, &id, &a), a);
        for g in [GammaElement::a(), GammaElement::b(), GammaElement::new(rat(3, 4), 2)] {
            let (ga, gb) = (group_act_gamma(&gamma, &g, &a), group_act_gamma(&gamma, &g, &b));
            assert!((fs_tree_distance(&ga, &gb, 2) - fs_tree_distance(&a, &b, 2)).abs() < 1e-12);
            // g·Ψ(z) = Ψ(g·z)
            let gz = act_point(&gamma.to_affine(&g), &a.anchor, 2);
            assert_eq!(ga, psi(&gz));
        }
    }

    #[test]
    fn flow_band_examples() {
        let k = GeneralizedGeodesic::constant(pt(TreeVertex::p(0)));
        let k2 = GeneralizedGeodesic::constant(pt(TreeVertex::p(3)));
        let r = flow_band_check(&k, &k2, 5.0, 2, 1e-9);
        assert!(r.holds && (r.base - r.flowed).abs() < 1e-12);
        let (a, b) = (psi(&pt(TreeVertex::p(0))), psi(&pt(vertex_canonicalize(&rat(1, 1), -1, 2))));
        for tau in [0.5, -0.5, 2.0, -2.0] {
            assert!(flow_band_check(&a, &b, tau, 2, 1e-9).holds);
        }
        let r0 = flow_band_check(&a, &b, 0.0, 2, 1e-9);
        assert_eq!(r0.base, r0.flowed);
    }

    #[test]
    fn hfs_matches_fs_when_fibers_agree() {
        let a = psi(&pt(TreeVertex::p(0)));
        let b = psi_tau(&pt(vertex_canonicalize(&rat(1, 1), -1, 2)), 0.5);
        let h1 = HorizontalFlowPoint { geodesic: a.clone(), w: 0.3 };
        let h2 = HorizontalFlowPoint { geodesic: b.clone(), w: 0.3 };
        let v = hfs_distance(&h1, &h2, 2, 1e-7).unwrap();
        assert!((v - fs_tree_distance(&a, &b, 2)).abs() < 1e-6, "{v}");
        assert_eq!(hfs_distance(&h1, &h1, 2, 1e-7).unwrap(), 0.0);
        // Ψ(P_n), Ψ(Q_n) shrink with n
        let z = pt(TreeVertex::p(0));
        let mut last = f64::INFINITY;
        for n in [1.0, 2.0, 4.0, 8.0] {
            let p = HorizontalFlowPoint::psi(&SpacePoint { z: z.clone(), w: 1.0 / n });
            let q = HorizontalFlowPoint::psi(&SpacePoint { z: z.clone(), w: -1.0 / n });
            let v = hfs_distance(&p, &q, 2, 1e-8).unwrap();
            assert!(v.is_finite() && v < last);
            last = v;
        }
    }

    #[test]
    fn shrink_examples() {
        let z0 = pt(TreeVertex::p(0));
        let r = shrink_bound_check(0.1, 2.0, 2, &z0, 0.5, -0.5, 1e-8).unwrap();
        assert!(r.holds, "{r:?}");
        assert_eq!(r.t, (40f64).ln());
        assert_eq!(shrink_threshold(1e6, 2.0, 2).unwrap(), 1);
        // doubling n never increases the measured distance
        let s = &r.samples;
        assert!(s[1].hfs_distance <= s[0].hfs_distance + 1e-9 || s[1].n < s[0].n);
        assert!(s[2].hfs_distance <= s[1].hfs_distance + 1e-9);
        assert!(shrink_bound_check(0.1, 0.5, 2, &z0, 5.0, -5.0, 1e-8).is_err());
    }

    #[test]
    fn case2_examples() {
        let r = case2_estimate_check(3, 0.25, 2).unwrap();
        assert!(r.holds);
        let one = r.samples.iter().find(|s| s.subcase == 1 && s.d_hat == 1.0).unwrap();
        assert!(one.measured / one.bound < 1.0);
        let zero = r.samples.iter().find(|s| s.subcase == 1 && s.d_hat == 0.0).unwrap();
        assert_eq!(zero.measured, 0.0);
        let sym = r.samples.iter().find(|s| s.subcase == 2 && s.d1 == s.d2).unwrap();
        assert_eq!(sym.d_hat, 0.0);
        // the displayed subcase-2 pairing does not merge when d̂ > 0
        let skew = r.samples.iter().find(|s| s.subcase == 2 && s.d_hat > 0.0).unwrap();
        assert!(skew.literal_pairing.unwrap() > skew.measured);
        assert!(case2_estimate_check(6, 0.1, 3).unwrap().holds);
    }

    #[test]
    fn periodic_counts() {
        assert_eq!(count_periodic(3, 2).unwrap(), 7);
        assert_eq!(count_periodic(1, 2).unwrap(), 1);
        assert_eq!(count_periodic(4, 3).unwrap(), 80);
        assert_eq!(K_GAMMA, 1);
    }

    #[test]
    fn serde_round_trip() {
        let r = psi(&pt(TreeVertex::p(1)));
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"+inf\""), "{s}");
        let back: GeneralizedGeodesic = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    fn geodesic() -> impl proptest::strategy::Strategy<Value = GeneralizedGeodesic> {
        let point = (-8i64..8, 0u32..3, -3i64..3, 0.0f64..0.9).prop_map(|(n, e, k, o)| {
            TreePoint::new(vertex_canonicalize(&rat(n, 2i64.pow(e)), k, 2), o).unwrap()
        });
        (point.clone(), point, 0u8..3, -3.0f64..3.0).prop_map(|(a, b, kind, s)| match kind {
            0 => GeneralizedGeodesic::constant(a),
            1 => GeneralizedGeodesic::ray(a, s),
            _ => GeneralizedGeodesic::segment(a, b, s, 2),
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn triangle_inequality(a in geodesic(), b in geodesic(), c in geodesic()) {
            let (ab, bc, ac) = (fs_tree_distance(&a, &b, 2), fs_tree_distance(&b, &c, 2), fs_tree_distance(&a, &c, 2));
            prop_assert!(ab + bc - ac >= -1e-12);
        }

        #[test]
        fn exact_matches_quadrature(a in geodesic(), b in geodesic()) {
            prop_assert!((fs_tree_distance(&a, &b, 2) - quadrature(&a, &b, 2)).abs() < 1e-9);
        }

        #[test]
        fn flow_band(a in geodesic(), b in geodesic(), tau in -3.0f64..3.0) {
            prop_assert!(flow_band_check(&a, &b, tau, 2, 1e-9).holds);
        }

        #[test]
        fn psi_is_injective(n1 in -8i64..8, n2 in -8i64..8, w1 in -2.0f64..2.0, w2 in -2.0f64..2.0) {
            let p = SpacePoint { z: pt(vertex_canonicalize(&rat(n1, 4), -2, 2)), w: w1 };
            let q = SpacePoint { z: pt(vertex_canonicalize(&rat(n2, 4), -2, 2)), w: w2 };
            prop_assume!(p != q);
            let v = hfs_distance(&HorizontalFlowPoint::psi(&p), &HorizontalFlowPoint::psi(&q), 2, 1e-6).unwrap();
            prop_assert!(v > 0.0);
        }
    }
}
