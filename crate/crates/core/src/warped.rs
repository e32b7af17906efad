//! The warped product `X = T_d × ℝ` with metric `dz² + d^{-2 f_d(z)} dw²`.
//!
//! Each plane `L × ℝ` over a geodesic `L` through `ω` is isometric to the
//! upper half-plane of curvature `-κ²`, `κ = ln d`, via `(u, w) ↦ (κ w, d^u)`
//! with `u = f_d`. In that model
//!
//! ```text
//! sinh²(κD/2) = κ² Δw² d^{-(u1+u2)} / 4 + sinh²(κ (u1 - u2) / 2)
//! ```
//!
//! which is the form used here because it never forms `d^u` directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{busemann, meet_level, point_distance, TreePoint};

/// Default tolerance for numeric distances.
pub const DEFAULT_TOL: f64 = 1e-9;

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const MAX_ITER: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacePoint {
    pub z: TreePoint,
    pub w: f64,
}

impl SpacePoint {
    pub fn new(z: TreePoint, w: f64) -> Result<Self> {
        if !w.is_finite() || !z.offset.is_finite() {
            return Err(Error::InvalidParameter("space points need finite coordinates".into()));
        }
        Ok(Self { z, w })
    }
}

pub fn kappa(d: u64) -> f64 {
    (d as f64).ln()
}

/// Plane distance between `(u1, w1)` and `(u2, w2)` in Busemann coordinates.
pub fn plane_distance(u1: f64, w1: f64, u2: f64, w2: f64, d: u64) -> f64 {
    let k = kappa(d);
    let horiz = 0.5 * k * (w1 - w2).abs() * (-(u1 + u2) * k / 2.0).exp();
    let vert = (k * (u1 - u2) / 2.0).sinh();
    2.0 / k * horiz.hypot(vert).asinh()
}

/// `(2/κ) asinh(κ d^{-u} |Δw| / 2)` on the fiber over `z`.
pub fn same_fiber_distance(z: &TreePoint, w1: f64, w2: f64, d: u64) -> f64 {
    let k = kappa(d);
    let u = busemann(z);
    2.0 / k * (k * (-u * k).exp() * (w1 - w2).abs() / 2.0).asinh()
}

/// Closed form for pairs whose tree points lie on a common ray to `ω`.
pub fn comparable_distance(p1: &SpacePoint, p2: &SpacePoint, d: u64) -> Result<f64> {
    if !p1.z.comparable(&p2.z, d) {
        return Err(Error::NotComparable);
    }
    Ok(plane_distance(busemann(&p1.z), p1.w, busemann(&p2.z), p2.w, d))
}

/// Minimizes a unimodal function on `[lo, hi]`; returns `(argmin, min)`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..MAX_ITER {
        if hi - lo <= tol * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
    }
    let candidates = [(lo, f(lo)), (x1, f1), (x2, f2), (hi, f(hi))];
    candidates.into_iter().fold((lo, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
}

/// Length of the best path through the wall point at Busemann value `uc`,
/// optimized over the wall coordinate `w'`.
fn through_wall(u1: f64, w1: f64, u2: f64, w2: f64, uc: f64, d: u64, tol: f64) -> f64 {
    let f = |w: f64| plane_distance(u1, w1, uc, w, d) + plane_distance(uc, w, u2, w2, d);
    if w1 == w2 {
        return f(w1);
    }
    // both legs grow away from [w1, w2], so the optimum lies inside it
    golden_section(f, w1.min(w2), w1.max(w2), tol * 1e-3).1
}

/// The crossing-height profile `t ↦ min_{w'} (leg1 + leg2)` for a
/// non-comparable pair, where the wall point sits at height `m* + t`.
pub fn crossing_profile(p1: &SpacePoint, p2: &SpacePoint, d: u64, tol: f64) -> impl Fn(f64) -> f64 {
    let m = meet_level(&p1.z.base, &p2.z.base, d) as f64;
    let (u1, w1, u2, w2) = (busemann(&p1.z), p1.w, busemann(&p2.z), p2.w);
    move |t: f64| through_wall(u1, w1, u2, w2, -(m + t), d, tol)
}

/// Distance in `X`. Comparable pairs use the closed form; otherwise every
/// path crosses the ray from the meet vertex `c` to `ω`, and the crossing
/// point is optimized numerically.
pub fn distance(p1: &SpacePoint, p2: &SpacePoint, d: u64, tol: f64) -> Result<f64> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    if p1.z.comparable(&p2.z, d) {
        return comparable_distance(p1, p2, d);
    }
    let f = crossing_profile(p1, p2, d, tol);
    // coarse scan for a bracket, expanding while the profile still decreases
    let mut best = (0.0, f(0.0));
    let mut step = 0.25;
    let mut t = 0.0;
    let mut rising = 0;
    while rising < 3 {
        t += step;
        step *= 1.5;
        let v = f(t);
        if v < best.1 {
            best = (t, v);
            rising = 0;
        } else {
            rising += 1;
        }
        if t > 1e4 {
            return Err(Error::NonConvergence("crossing height diverged".into()));
        }
    }
    let lo = (best.0 - step).max(0.0);
    let hi = best.0 + step;
    let (_, v) = golden_section(&f, lo, hi, tol * 1e-3);
    let v = v.min(best.1);
    if !v.is_finite() {
        return Err(Error::NonConvergence("distance evaluation overflowed".into()));
    }
    Ok(v)
}

/// `d_T(z1, z2)`, a lower bound for [`distance`].
pub fn tree_lower_bound(p1: &SpacePoint, p2: &SpacePoint, d: u64) -> f64 {
    point_distance(&p1.z, &p2.z, d)
}

/// A pair over deep fibers with `d_X < |Δw|`, if one exists on the search grid.
pub fn short_fiber_witness(d: u64) -> Option<(SpacePoint, SpacePoint, f64)> {
    use crate::tree::TreeVertex;
    for depth in 1..=12i64 {
        for dw in [1.0, 10.0, 100.0, 1000.0] {
            let z: TreePoint = TreeVertex::p(-depth).into();
            let (a, b) = (SpacePoint { z: z.clone(), w: 0.0 }, SpacePoint { z, w: dw });
            let dist = same_fiber_distance(&a.z, a.w, b.w, d);
            if dist < dw {
                return Some((a, b, dist));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use crate::tree::{vertex_canonicalize, TreeVertex};
    use proptest::prelude::*;

    fn sp(v: TreeVertex, offset: f64, w: f64) -> SpacePoint {
        SpacePoint { z: TreePoint::new(v, offset).unwrap(), w }
    }

    /// Half-plane oracle: `cosh(κD) = 1 + (κ²Δw² + (Y1 - Y2)²) / (2 Y1 Y2)`.
    fn cosh_oracle(u1: f64, w1: f64, u2: f64, w2: f64, d: u64) -> f64 {
        let k = kappa(d);
        let (y1, y2) = ((d as f64).powf(u1), (d as f64).powf(u2));
        let c = 1.0 + (k * k * (w1 - w2).powi(2) + (y1 - y2).powi(2)) / (2.0 * y1 * y2);
        c.acosh() / k
    }

    #[test]
    fn same_fiber_examples() {
        let z: TreePoint = TreeVertex::p(0).into();
        assert_eq!(same_fiber_distance(&z, 3.0, 3.0, 2), 0.0);
        let v = same_fiber_distance(&z, 0.0, 1.0, 2);
        // (2/ln 2) asinh(ln 2 / 2)
        assert!((v - 0.980_991_614_484_589_7).abs() < 1e-9);
        assert!((v - cosh_oracle(0.0, 0.0, 0.0, 1.0, 2)).abs() < 1e-9);
    }

    #[test]
    fn shrinking_identity() {
        for d in [2u64, 3, 10] {
            let k = kappa(d);
            for depth in [-2i64, 0, 3] {
                let z: TreePoint = TreeVertex::p(depth).into();
                let d1 = same_fiber_distance(&z, 1.5, -2.0, d);
                for n in [1u64, 2, 7, 1000, 1_000_000] {
                    let dn = same_fiber_distance(&z, 1.5 / n as f64, -2.0 / n as f64, d);
                    let lhs = (k / 2.0 * d1).sinh();
                    let rhs = n as f64 * (k / 2.0 * dn).sinh();
                    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs(), "d={d} n={n}");
                    let dn2 = same_fiber_distance(&z, 0.75 / n as f64, -1.0 / n as f64, d);
                    assert!(dn2 < dn);
                }
                let dm = same_fiber_distance(&z, 1.5e-6, -2.0e-6, d);
                // D_n ~ sinh(κ D_1 / 2) / n, so the 1e-5 ratio needs D_1 out of the log regime
                if depth <= 0 {
                    assert!(dm < 1e-5 * d1, "d={d} depth={depth}");
                }
                assert!(dm <= 2.0 / k * (k / 2.0 * d1).sinh() / 1e6 * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn comparable_examples() {
        let a = sp(TreeVertex::p(0), 0.0, 0.0);
        let b = sp(TreeVertex::p(1), 0.0, 0.0);
        // u1 = 0, u2 = -1 (the parent)
        assert!((comparable_distance(&a, &b, 2).unwrap() - 1.0).abs() < 1e-12);
        let c = sp(TreeVertex::p(0), 0.0, 4.0);
        let same = same_fiber_distance(&a.z, 0.0, 4.0, 2);
        assert!((comparable_distance(&a, &c, 2).unwrap() - same).abs() < 1e-12);
        let sib = sp(vertex_canonicalize(&rat(1, 2), 0, 2), 0.0, 0.0);
        assert_eq!(comparable_distance(&a, &sib, 2), Err(Error::NotComparable));
        // asymptotics in Δw
        let far = sp(TreeVertex::p(0), 0.0, 1e6);
        let ratio = comparable_distance(&a, &far, 2).unwrap() / (2.0 / kappa(2) * 1e6f64.ln());
        assert!((ratio - 1.0).abs() < 0.05);
        // general position against the cosh oracle
        let e = sp(TreeVertex::p(2), 0.25, -3.0);
        let want = cosh_oracle(0.0, 4.0, -2.25, -3.0, 2);
        assert!((comparable_distance(&c, &e, 2).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn sibling_distance() {
        let a = sp(TreeVertex::p(0), 0.0, 0.0);
        let b = sp(vertex_canonicalize(&rat(1, 2), 0, 2), 0.0, 0.0);
        let v = distance(&a, &b, 2, 1e-9).unwrap();
        assert!((v - 2.0).abs() < 1e-6);
        assert_eq!(tree_lower_bound(&a, &b, 2), 2.0);
        assert_eq!(distance(&a, &a, 2, 1e-9).unwrap(), 0.0);
        assert_eq!(tree_lower_bound(&a, &sp(TreeVertex::p(0), 0.0, 7.0), 2), 0.0);
        assert!(distance(&a, &b, 2, 0.0).is_err());
    }

    #[test]
    fn short_fiber_witness_exists() {
        for d in [2u64, 3, 6] {
            let (a, b, dist) = short_fiber_witness(d).expect("witness");
            assert!(dist < (a.w - b.w).abs());
        }
    }

    #[test]
    fn wall_objective_is_unimodal_in_w() {
        // grid minimum agrees with golden section for several crossing heights
        for (u1, w1, u2, w2) in [(1.0, 0.0, 2.0, 5.0), (-1.0, -3.0, 0.5, 2.0), (3.0, 1.0, 3.0, 1.5)] {
            for uc in [-0.5, -2.0] {
                let f = |w: f64| plane_distance(u1, w1, uc, w, 2) + plane_distance(uc, w, u2, w2, 2);
                let (lo, hi) = (f64::min(w1, w2), f64::max(w1, w2));
                let grid = (0..=20_000).map(|i| f(lo + (hi - lo) * i as f64 / 20_000.0)).fold(f64::INFINITY, f64::min);
                let gs = through_wall(u1, w1, u2, w2, uc, 2, 1e-9);
                assert!(gs <= grid + 1e-9 && grid - gs < 1e-6);
            }
        }
    }

    fn vertex(d: u64) -> impl proptest::strategy::Strategy<Value = TreeVertex> {
        (-64i64..64, 0u32..4, -3i64..3)
            .prop_map(move |(n, e, k)| vertex_canonicalize(&rat(n, (d as i64).pow(e)), k, d))
    }

    fn point(d: u64) -> impl proptest::strategy::Strategy<Value = SpacePoint> {
        (vertex(d), 0.0f64..0.99, -20.0f64..20.0).prop_map(|(v, o, w)| sp(v, o, w))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn tree_distance_is_a_lower_bound(p in point(2), q in point(2)) {
            let v = distance(&p, &q, 2, 1e-9).unwrap();
            prop_assert!(v >= tree_lower_bound(&p, &q, 2) - 1e-6);
            // equal heights over a common fiber coordinate: equality case
            let q2 = SpacePoint { w: p.w, ..q.clone() };
            let v2 = distance(&p, &q2, 2, 1e-9).unwrap();
            prop_assert!((v2 - tree_lower_bound(&p, &q2, 2)).abs() < 1e-6);
        }

        #[test]
        fn half_vertical_bound(p in point(3), q in point(3)) {
            let v = distance(&p, &q, 3, 1e-9).unwrap();
            let vert = same_fiber_distance(&p.z, p.w, q.w, 3);
            prop_assert!(v >= 0.5 * vert - 1e-6);
        }

        #[test]
        fn fiber_distance_is_strictly_monotone(depth in -4i64..4, w1 in -10.0f64..10.0, a in 0.01f64..5.0, b in 0.01f64..5.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let z: TreePoint = TreeVertex::p(depth).into();
            let (near, far) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(same_fiber_distance(&z, w1, w1 + near, 2) < same_fiber_distance(&z, w1, w1 - far, 2));
        }

        #[test]
        fn symmetric(p in point(2), q in point(2)) {
            let a = distance(&p, &q, 2, 1e-9).unwrap();
            let b = distance(&q, &p, 2, 1e-9).unwrap();
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
