//! Named invariant suites. Each suite is deterministic given its seed and
//! reports pass counts per check.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{d_pow, int, is_prime, rat};
use crate::flow::{self, GeneralizedGeodesic};
use crate::fold;
use crate::group::{mat_mul, AffineElement, Gamma, GammaElement};
use crate::nerve::{self, CoverFixture};
use crate::quotient::{self, ClassType, Enumeration, FiniteSemidirect, FsdElement};
use crate::tree::{self, bfs_ball, TreePoint, TreeVertex};
use crate::warped::{self, SpacePoint};
use crate::{Error, Result};

pub const SUITES: [&str; 10] =
    ["group", "tree", "warped", "flow", "periodic", "number-theory", "classification", "case1", "nerve", "fold"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Check {
    pub name: String,
    pub passed: u64,
    pub total: u64,
    /// Largest observed error or ratio, when the check is numeric.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub holds: bool,
}

impl Check {
    fn new(name: &str) -> Self {
        Check { name: name.into(), passed: 0, total: 0, worst: None, detail: None, holds: true }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else if self.detail.is_none() {
            self.detail = Some(what());
        }
        self.holds = self.passed == self.total;
    }

    fn worst(&mut self, v: f64) {
        self.worst = Some(self.worst.map_or(v, |w| w.max(v)));
    }

    fn single(name: &str, ok: bool, detail: impl FnOnce() -> String) -> Self {
        let mut c = Check::new(name);
        c.record(ok, detail);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passed: u64,
    pub total: u64,
    pub holds: bool,
}

impl SuiteReport {
    fn new(suite: &str, seed: u64, checks: Vec<Check>) -> Self {
        let passed = checks.iter().map(|c| c.passed).sum();
        let total = checks.iter().map(|c| c.total).sum();
        let holds = checks.iter().all(|c| c.holds);
        SuiteReport { suite: suite.into(), seed, checks, passed, total, holds }
    }
}

/// Runs one suite by name.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = match name {
        "group" => group_suite(&mut rng)?,
        "tree" => tree_suite(&mut rng)?,
        "warped" => warped_suite(&mut rng)?,
        "flow" => flow_suite(&mut rng)?,
        "periodic" => periodic_suite()?,
        "number-theory" => number_theory_suite()?,
        "classification" => classification_suite()?,
        "case1" => case1_suite(&mut rng)?,
        "nerve" => nerve_suite()?,
        "fold" => fold_suite()?,
        other => return Err(Error::InvalidParameter(format!("unknown suite {other:?}"))),
    };
    Ok(SuiteReport::new(name, seed, checks))
}

/// Runs every suite in order with the same seed.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    SUITES.iter().map(|s| run_suite(s, seed)).collect()
}

fn random_gamma(rng: &mut ChaCha8Rng, d: u64) -> GammaElement {
    let e = rng.gen_range(0..4u32);
    let x = rat(rng.gen_range(-60..=60), (d as i64).pow(e));
    GammaElement::new(x, rng.gen_range(-5..=5))
}

fn random_vertex(rng: &mut ChaCha8Rng, d: u64) -> TreeVertex {
    let e = rng.gen_range(0..4u32);
    let x = rat(rng.gen_range(-64..64), (d as i64).pow(e));
    tree::vertex_canonicalize(&x, rng.gen_range(-3..3), d)
}

fn random_point(rng: &mut ChaCha8Rng, d: u64) -> TreePoint {
    let v = random_vertex(rng, d);
    let offset = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.99) };
    TreePoint::new(v, offset).expect("offset in range")
}

fn random_unit_affine(rng: &mut ChaCha8Rng, d: u64) -> AffineElement {
    // ±d^n·s1/s2 with s1, s2 coprime to d
    let coprime: Vec<i64> = (1..12).filter(|s| num_integer::gcd(*s as u64, d) == 1).collect();
    let (s1, s2) = (coprime[rng.gen_range(0..coprime.len())], coprime[rng.gen_range(0..coprime.len())]);
    let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
    let u = int(sign * s1) / int(s2) * d_pow(d, rng.gen_range(-2..=2));
    let e = rng.gen_range(0..3u32);
    let b = rat(rng.gen_range(-20..=20), (d as i64).pow(e));
    AffineElement::from_unit(&u, b, d).expect("unit in Z[1/d]^x")
}

fn group_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut relation = Check::new("relation b·a·b^-1 = a^d");
    let mut matrix = Check::new("product matches matrix product");
    for d in [2u64, 3, 5, 6, 10] {
        let gm = Gamma::new(d)?;
        let (a, b) = (GammaElement::a(), GammaElement::b());
        let lhs = gm.mul(&gm.mul(&b, &a), &gm.inv(&b));
        relation.record(lhs == gm.pow(&a, d as i64), || format!("d = {d}"));
    }
    let ds = [2u64, 3, 5, 6, 10];
    for _ in 0..1000 {
        let d = ds[rng.gen_range(0..ds.len())];
        let gm = Gamma::new(d)?;
        let (g, h) = (random_gamma(rng, d), random_gamma(rng, d));
        let ok = gm.to_matrix(&gm.mul(&g, &h)) == mat_mul(&gm.to_matrix(&g), &gm.to_matrix(&h));
        matrix.record(ok, || format!("d = {d}, g = {g}, h = {h}"));
    }
    Ok(vec![relation, matrix])
}

fn tree_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut bfs = Check::new("coordinate distance equals BFS distance on radius-5 balls");
    for d in [2u64, 3, 6] {
        let ball = bfs_ball(&TreeVertex::p(0), 5, d)?;
        for i in 0..ball.len() {
            let depth = ball.distances_from(i);
            let mut ok = true;
            for j in i..ball.len() {
                ok &= tree::tree_distance(&ball.vertices[i], &ball.vertices[j], d) == depth[j] as u64;
            }
            bfs.record(ok, || format!("d = {d}, source {}", ball.vertices[i]));
        }
    }

    let mut busemann = Check::new("busemann of P_n is -n");
    for n in -10..=10 {
        busemann.record(tree::busemann(&TreeVertex::p(n).into()) == -(n as f64), || format!("n = {n}"));
    }

    let mut spheres = Check::new("sphere S(z, l) has d^l members");
    for d in [2u64, 3, 6] {
        for l in 1..=4u32 {
            let z = random_vertex(rng, d);
            let s = tree::sphere(&z, l, d);
            let distinct: HashSet<&TreeVertex> = s.iter().collect();
            let ok = s.len() as u64 == d.pow(l)
                && distinct.len() == s.len()
                && s.iter().all(|w| tree::tree_distance(&z, w, d) == l as u64 && tree::subtree_contains(&z, w, d));
            spheres.record(ok, || format!("d = {d}, z = {z}, l = {l}"));
        }
    }

    let mut isotropy = Check::new("isotropy of P_n is the translations by d^-n·Z_(d)");
    for d in [2u64, 3, 6] {
        for n in -3..=3 {
            let pn = TreeVertex::p(n);
            for s in -6i64..=6 {
                let g = AffineElement::translation(int(s) * d_pow(d, -n));
                isotropy.record(tree::act(&g, &pn, d) == pn, || format!("d = {d}, n = {n}, s = {s}"));
            }
            let g = AffineElement::translation(d_pow(d, -n - 1));
            isotropy.record(tree::act(&g, &pn, d) != pn, || format!("d = {d}, n = {n}: d^(-n-1) fixes P_n"));
        }
    }

    let mut fixes = Check::new("beta_m fixes the horoball B_-m pointwise");
    let mut cycles = Check::new("beta_m cyclically permutes S(z, 1) and has orbits of size d^l on S(z, l)");
    let mut power = Check::new("beta_m^d = beta_(m-1)");
    for d in [2u64, 3] {
        let ball = bfs_ball(&TreeVertex::p(0), 6, d)?;
        for m in -2i64..=2 {
            let beta = AffineElement::translation(d_pow(d, -m));
            for w in ball.vertices.iter().filter(|w| tree::horoball_contains(w, -m)) {
                fixes.record(tree::act(&beta, w, d) == *w, || format!("d = {d}, m = {m}, w = {w}"));
            }
            let mut pow = AffineElement::identity();
            for _ in 0..d {
                pow = pow.mul(&beta, d);
            }
            power.record(pow == AffineElement::translation(d_pow(d, -(m - 1))), || format!("d = {d}, m = {m}"));
            for z in ball.vertices.iter().filter(|z| z.level == m && ball.depth[ball.index[*z]] < 5) {
                let s1 = tree::sphere(z, 1, d);
                let shifted = s1.iter().enumerate().all(|(j, w)| tree::act(&beta, w, d) == s1[(j + 1) % d as usize]);
                let orbits = (1..=2u32).all(|l| {
                    let sl = tree::sphere(z, l, d);
                    sl.iter().all(|w| {
                        let mut size = 1u64;
                        let mut cur = tree::act(&beta, w, d);
                        while cur != *w && size <= d.pow(l) {
                            size += 1;
                            cur = tree::act(&beta, &cur, d);
                        }
                        size == d.pow(l)
                    })
                });
                cycles.record(shifted && orbits, || format!("d = {d}, m = {m}, z = {z}"));
            }
        }
    }

    let mut action = Check::new("act is a group action");
    let mut isometry = Check::new("act preserves distance and shifts busemann by the d-exponent");
    for _ in 0..1000 {
        let d = [2u64, 3, 6][rng.gen_range(0..3)];
        let (g, h) = (random_unit_affine(rng, d), random_unit_affine(rng, d));
        let (v, w) = (random_vertex(rng, d), random_vertex(rng, d));
        let gh = g.mul(&h, d);
        action.record(tree::act(&gh, &v, d) == tree::act(&g, &tree::act(&h, &v, d), d), || {
            format!("d = {d}, v = {v}")
        });
        let (gv, gw) = (tree::act(&g, &v, d), tree::act(&g, &w, d));
        let ok = tree::tree_distance(&gv, &gw, d) == tree::tree_distance(&v, &w, d)
            && tree::busemann_vertex(&gv) == tree::busemann_vertex(&v) + g.n;
        isometry.record(ok, || format!("d = {d}, v = {v}, w = {w}"));
    }
    Ok(vec![bfs, busemann, spheres, isotropy, fixes, cycles, power, action, isometry])
}

fn warped_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    const TOL: f64 = 1e-6;
    let mut identity = Check::new("shrinking identity sinh(κD_1/2) = n·sinh(κD_n/2)");
    let mut decreasing = Check::new("D_2n < D_n and D_n -> 0");
    for d in [2u64, 3, 10] {
        let k = warped::kappa(d);
        for depth in [-2i64, 0] {
            let z: TreePoint = TreeVertex::p(depth).into();
            let (w1, w2) = (rng.gen_range(0.1..3.0), rng.gen_range(-3.0..-0.1));
            let d1 = warped::same_fiber_distance(&z, w1, w2, d);
            let at = |n: f64| warped::same_fiber_distance(&z, w1 / n, w2 / n, d);
            for n in [1u64, 2, 7, 1000, 1_000_000] {
                let dn = at(n as f64);
                let (lhs, rhs) = ((k / 2.0 * d1).sinh(), n as f64 * (k / 2.0 * dn).sinh());
                let rel = (lhs - rhs).abs() / lhs.abs();
                identity.worst(rel);
                identity.record(rel <= 1e-12, || format!("d = {d}, depth = {depth}, n = {n}"));
                decreasing.record(at(2.0 * n as f64) < dn, || format!("d = {d}, n = {n}"));
            }
            decreasing.record(at(1e6) < 1e-5 * d1, || format!("d = {d}, depth = {depth}: D_1e6 too large"));
        }
    }

    let mut lower = Check::new("distance is at least the tree distance");
    let mut half = Check::new("distance is at least half the vertical distance");
    for _ in 0..200 {
        let d = [2u64, 3][rng.gen_range(0..2)];
        let p = SpacePoint { z: random_point(rng, d), w: rng.gen_range(-20.0..20.0) };
        let q = SpacePoint { z: random_point(rng, d), w: rng.gen_range(-20.0..20.0) };
        let v = warped::distance(&p, &q, d, 1e-9)?;
        let lb = warped::tree_lower_bound(&p, &q, d);
        lower.worst(lb - v);
        lower.record(v >= lb - TOL, || format!("d = {d}: {v} < {lb}"));
        let vert = warped::same_fiber_distance(&p.z, p.w, q.w, d);
        half.worst(0.5 * vert - v);
        half.record(v >= 0.5 * vert - TOL, || format!("d = {d}: {v} < {vert}/2"));
    }

    let mut monotone = Check::new("same-fiber distance is strictly increasing in |Δw|");
    for _ in 0..200 {
        let d = [2u64, 3, 6][rng.gen_range(0..3)];
        let z = random_point(rng, d);
        let w1 = rng.gen_range(-10.0..10.0);
        let a: f64 = rng.gen_range(0.01..5.0);
        let b = a + rng.gen_range(1e-3..5.0);
        let near = warped::same_fiber_distance(&z, w1, w1 + a, d);
        let far = warped::same_fiber_distance(&z, w1, w1 - b, d);
        monotone.record(near < far, || format!("d = {d}, w1 = {w1}, a = {a}, b = {b}"));
    }

    let mut witness = Check::new("a pair with distance below |Δw| exists");
    for d in [2u64, 3, 6] {
        let ok = warped::short_fiber_witness(d).is_some_and(|(a, b, dist)| dist < (a.w - b.w).abs());
        witness.record(ok, || format!("d = {d}: no witness"));
    }
    Ok(vec![identity, decreasing, lower, half, monotone, witness])
}

fn random_geodesic(rng: &mut ChaCha8Rng, d: u64) -> GeneralizedGeodesic {
    let (a, b) = (random_point(rng, d), random_point(rng, d));
    let s = rng.gen_range(-3.0..3.0);
    match rng.gen_range(0..3) {
        0 => GeneralizedGeodesic::constant(a),
        1 => GeneralizedGeodesic::ray(a, s),
        _ => GeneralizedGeodesic::segment(a, b, s, d),
    }
}

fn flow_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut constants = Check::new("d_FS between constants equals d_T");
    for _ in 0..100 {
        let d = [2u64, 3][rng.gen_range(0..2)];
        let (a, b): (TreePoint, TreePoint) = (random_vertex(rng, d).into(), random_vertex(rng, d).into());
        let want = tree::point_distance(&a, &b, d);
        let got = flow::fs_tree_distance(&GeneralizedGeodesic::constant(a), &GeneralizedGeodesic::constant(b), d);
        constants.worst((got - want).abs());
        constants.record(got == want, || format!("d = {d}: {got} vs {want}"));
    }

    let mut band = Check::new("flow stays within the e^±|τ| band");
    for _ in 0..100 {
        let d = [2u64, 3][rng.gen_range(0..2)];
        let (c1, c2) = (random_geodesic(rng, d), random_geodesic(rng, d));
        let tau = rng.gen_range(-3.0..3.0);
        let r = flow::flow_band_check(&c1, &c2, tau, d, 1e-9);
        band.worst(-(r.lower_slack.min(r.upper_slack)));
        band.record(r.holds, || format!("d = {d}, τ = {tau}: {} not in [{}, {}]", r.flowed, r.lower, r.upper));
    }

    let mut shrink = Check::new("sampled n above N̄ give horizontal distance at most ε");
    for d in [2u64, 3] {
        for eps in [0.5, 0.1, 0.05] {
            for big_d in [1.0, 2.0, 4.0] {
                let z0: TreePoint = TreeVertex::p(0).into();
                let r = flow::shrink_bound_check(eps, big_d, d, &z0, 0.25, -0.25, 1e-9)?;
                shrink.record(r.holds, || format!("d = {d}, ε = {eps}, D = {big_d}, N̄ = {}", r.n_bar));
            }
        }
    }

    let mut chain = Check::new("flowed rays land within ½·d̂·e^-τ < δ/2");
    for d in [2u64, 3] {
        for n in [2u64, 3, 4, 6] {
            for delta in [0.25, 0.1] {
                let r = flow::case2_estimate_check(n, delta, d)?;
                for s in &r.samples {
                    if s.bound > 0.0 {
                        chain.worst(s.measured / s.bound);
                    }
                    chain.record(s.holds, || format!("d = {d}, n = {n}, δ = {delta}, {} / {}", s.x1, s.x2));
                }
            }
        }
    }
    Ok(vec![constants, band, shrink, chain])
}

fn periodic_suite() -> Result<Vec<Check>> {
    let mut c = Check::new("period-m points of x -> d·x number d^m - 1");
    for d in 2..=5u64 {
        for m in 1..=6u32 {
            let want = d.pow(m) - 1;
            let got = flow::count_periodic(m, d)?;
            // sweep the finer grid j / 2N: x is fixed iff (d^m - 1)·x is an integer
            let grid = 2 * want;
            let swept = (0..grid).filter(|j| (want * j) % grid == 0).count() as u64;
            c.record(got == want && swept == want, || format!("d = {d}, m = {m}: {got}"));
        }
    }
    Ok(vec![c])
}

fn order_by_multiplication(g: u64, m: u64) -> u64 {
    let (mut x, mut n) = (g % m, 1);
    while x != 1 {
        x = x * g % m;
        n += 1;
    }
    n
}

fn number_theory_suite() -> Result<Vec<Check>> {
    let mut orders = Check::new("orders of d modulo q and q^s against repeated multiplication");
    let mut lemma = Check::new("d^(t_1·q^(s-1)) = 1 mod q^s and m_s = t_1, k_s ≤ s - 1");
    for d in [2u64, 3, 5, 6, 10] {
        for q in (2..50).filter(|&q| is_prime(q) && q > d + 1 && d % q != 0) {
            for s in 1..=4u32 {
                let r = quotient::multiplicative_order(d, q, s)?;
                let m = q.pow(s);
                let ok = r.t1 == order_by_multiplication(d, q) && (m > 200_000 || r.ts == order_by_multiplication(d, m));
                orders.record(ok, || format!("d = {d}, q = {q}, s = {s}"));
                let l1 = crate::arith::pow_mod(d, r.t1 * q.pow(s - 1), m) == 1;
                lemma.record(l1 && r.ms == r.t1 && r.ks < s && r.ts == r.ms * q.pow(r.ks), || {
                    format!("d = {d}, q = {q}, s = {s}")
                });
            }
        }
    }
    let r = quotient::multiplicative_order(2, 5, 2)?;
    let example = Check::single("d = 2, q = 5: t_1 = 4, t_2 = 20, k_2 = 1", (r.t1, r.ts, r.ks) == (4, 20, 1), || {
        format!("{r:?}")
    });
    let mut extended = Check::new("⟨-1, p⟩ has order t_s or 2·t_s and is generated by one element");
    for p in [2u64, 3, 5] {
        for q in (3..50).filter(|&q| is_prime(q) && q > p + 1) {
            for s in 1..=2u32 {
                let e = quotient::extended_unit_data(p, q, s)?;
                let m = q.pow(s);
                // oracle: the subgroup generated by -1 and p, by enumeration
                let mut gen: BTreeSet<u64> = BTreeSet::new();
                let mut x = 1;
                loop {
                    gen.insert(x);
                    gen.insert(m - x);
                    x = x * p % m;
                    if x == 1 {
                        break;
                    }
                }
                let ok = (e.ts_prime == e.ts || e.ts_prime == 2 * e.ts)
                    && gen.len() as u64 == e.ts_prime
                    && order_by_multiplication(e.generator, m) == e.ts_prime;
                extended.record(ok, || format!("p = {p}, q = {q}, s = {s}"));
            }
        }
    }
    Ok(vec![orders, lemma, example, extended])
}

fn all_subgroups_by_pairs(f: &FiniteSemidirect) -> BTreeSet<Vec<FsdElement>> {
    // metacyclic groups are 2-generated, so pairs reach every subgroup
    let elems: Vec<FsdElement> = f.elements().collect();
    let mut out = BTreeSet::new();
    let mut seen_cyclic: HashSet<Vec<FsdElement>> = HashSet::new();
    let mut cyclic = Vec::new();
    for x in &elems {
        let h = f.closure(&[*x]).elements;
        if seen_cyclic.insert(h.clone()) {
            cyclic.push((*x, h));
        }
    }
    for (i, (x, hx)) in cyclic.iter().enumerate() {
        out.insert(hx.clone());
        for (y, hy) in &cyclic[i + 1..] {
            if hx.binary_search(y).is_ok() || hy.binary_search(x).is_ok() {
                continue;
            }
            out.insert(f.closure(&[*x, *y]).elements);
        }
    }
    out
}

fn classification_suite() -> Result<Vec<Check>> {
    let f = FiniteSemidirect::plain(2, 5, 2)?;
    let brute = f.enumerate_subgroups(Enumeration::Brute)?;
    let brute_set: BTreeSet<Vec<FsdElement>> = brute.iter().map(|h| h.elements.clone()).collect();
    let oracle = all_subgroups_by_pairs(&f);
    let complete = Check::single("brute enumeration finds every subgroup", brute_set == oracle && brute_set.len() == brute.len(), || {
        format!("brute {} vs generated {}", brute_set.len(), oracle.len())
    });
    let structured: BTreeSet<Vec<FsdElement>> =
        f.enumerate_subgroups(Enumeration::Structured)?.into_iter().map(|h| h.elements).collect();
    let agree = Check::single("structured enumeration agrees with brute force", structured == brute_set, || {
        format!("structured {} vs brute {}", structured.len(), brute_set.len())
    });

    let mut classified = Check::new("hyper-elementary subgroups conjugate into type 1, 2 or 3");
    for h in brute.iter().filter(|h| f.is_hyper_elementary(h).0) {
        let ok = match f.classify(h) {
            Ok(r) => {
                let c = r.conjugator;
                r.deviation.is_none() && h.elements.iter().all(|x| f.in_type(r.type_tag, &f.conj(&c, x)))
            }
            Err(_) => false,
        };
        classified.record(ok, || format!("order {} with generators {:?}", h.order(), h.generators));
    }

    let (t1, ks) = (4u64, 1u32);
    let indices = Check::single(
        "type indices are t_1, q^k_s and q^s",
        f.type_index(ClassType::Type1) == t1
            && f.type_index(ClassType::Type2) == 5u64.pow(ks)
            && f.type_index(ClassType::Type3) == 25,
        || "index mismatch".into(),
    );
    let rep = f.index_dichotomy_check(2)?;
    let mut dichotomy = Check::new("projection indices match the type");
    for c in &rep.cases {
        dichotomy.record(c.index_matches_type, || format!("order {} {} index {}", c.order, c.type_tag, c.index));
    }

    let mut extended = Check::new("extended variant trichotomy");
    for q in [5u64, 7] {
        for s in 1..=2u32 {
            let x = FiniteSemidirect::extended(2, q, s)?;
            let t = x.classification_table(Enumeration::Brute)?;
            let ok = t.classified == t.hyper_elementary && t.verified == t.classified;
            extended.record(ok, || {
                format!("q = {q}, s = {s}: {} of {} classified, {} verified", t.classified, t.hyper_elementary, t.verified)
            });
        }
    }
    Ok(vec![complete, agree, classified, indices, dichotomy, extended])
}

fn case1_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut displacement = Check::new("|Δk| is at most the displacement of P_0");
    let mut contraction = Check::new("with m = 4n², nearby pairs map within 1/n");
    let mut applied = 0u64;
    for i in 0..1000 {
        let d = [2u64, 3, 5][rng.gen_range(0..3)];
        let gm = Gamma::new(d)?;
        let g = random_gamma(rng, d);
        // half the pairs are close, so the contraction clause is exercised
        let h = if i % 2 == 0 {
            random_gamma(rng, d)
        } else {
            let e = GammaElement::new(rat(rng.gen_range(-3..=3), d as i64), rng.gen_range(-2..=2));
            gm.mul(&g, &e)
        };
        let n = rng.gen_range(1..=6u64);
        let r = quotient::case1_contraction_check(&g, &h, d, n, 4 * n * n)?;
        displacement.record(r.displacement_bound_holds, || format!("d = {d}, g = {g}, h = {h}"));
        if r.contraction_applies {
            applied += 1;
            contraction.record(r.contraction_holds, || format!("d = {d}, n = {n}, g = {g}, h = {h}"));
        }
    }
    if applied == 0 {
        contraction.record(false, || "no sampled pair was close".into());
    }
    let g = GammaElement::new(rat(1, 2), 3);
    let h = GammaElement::new(int(0), 1);
    let r = quotient::case1_contraction_check(&g, &h, 2, 3, 36)?;
    let example = Check::single("(1/2, 3) vs (0, 1) is tight at 2", (r.delta_k, r.displacement) == (2, 2), || {
        format!("{r:?}")
    });
    Ok(vec![displacement, contraction, example])
}

fn nerve_suite() -> Result<Vec<Check>> {
    let f = CoverFixture::interval_standard();
    let space = f.metric.build()?;
    let cover = nerve::Cover::new(&space, f.members.clone())?;
    let beta = f.beta.unwrap_or(1.0);
    let r = nerve::lipschitz_check(&space, &cover, beta, Some(2), None)?;
    let mut lipschitz = Check::new("interval fixture: ℓ¹ image distance within (16N²/β)·d");
    lipschitz.worst(r.max_ratio);
    lipschitz.record(r.holds && r.pairs_checked > 0, || format!("max ratio {}", r.max_ratio));

    let mut bookkeeping = Check::new("β = 16N²n² makes the bound below 1/n");
    for big_n in 1..=4usize {
        for n in 1..=10u64 {
            for frac in [0.0, 0.25, 0.5, 0.99] {
                let (_, ok) = nerve::contraction_bookkeeping(big_n, n, frac * n as f64);
                bookkeeping.record(ok, || format!("N = {big_n}, n = {n}, d = {frac}·n"));
            }
        }
    }
    Ok(vec![lipschitz, bookkeeping])
}

fn fold_suite() -> Result<Vec<Check>> {
    let mut folds = Check::new("folding T_p gives T_(p²)");
    for p in [2u64, 3] {
        for radius in [4u32, 5] {
            let r = fold::verify_fold(p, radius)?;
            folds.record(r.holds, || format!("p = {p}, R = {radius}: {r:?}"));
        }
    }
    let steps = fold::iterated_fold(2, 2, 4)?;
    let reached = steps.last().map(|r| r.target);
    let iterated = Check::single(
        "iterated folding reaches T_16 from T_2",
        steps.iter().all(|r| r.holds) && reached == Some(16),
        || format!("reached {reached:?}"),
    );
    let mut diagonal = Check::new("diagonal model is isomorphic to T_d");
    for d in [6u64, 10, 12] {
        let (_, r) = fold::diagonal_model(d, 3)?;
        diagonal.record(r.holds, || format!("d = {d}: {r:?}"));
    }
    Ok(vec![folds, iterated, diagonal])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(matches!(run_suite("nope", 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn check_counts() {
        let mut c = Check::new("x");
        c.record(true, String::new);
        c.record(false, || "second".into());
        c.record(false, || "third".into());
        assert_eq!((c.passed, c.total, c.holds), (1, 3, false));
        assert_eq!(c.detail.as_deref(), Some("second"));
    }

    #[test]
    fn small_suites_pass_and_repeat() {
        for s in ["group", "periodic", "nerve"] {
            let a = run_suite(s, 7).unwrap();
            assert!(a.holds, "{a:?}");
            assert_eq!(a, run_suite(s, 7).unwrap());
        }
    }

    #[test]
    fn pair_generation_finds_small_lattice() {
        let f = FiniteSemidirect::plain(2, 5, 1).unwrap();
        let brute: BTreeSet<Vec<FsdElement>> =
            f.enumerate_subgroups(Enumeration::Brute).unwrap().into_iter().map(|h| h.elements).collect();
        assert_eq!(all_subgroups_by_pairs(&f), brute);
    }
}
