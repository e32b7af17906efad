//! The Bass-Serre tree `T_d`.
//!
//! A vertex at level `k` is a coset `x + d^{-k} Z_(d)` with `x ∈ Z[1/d]`.
//! Its parent is the coset of `d^{-(k+1)} Z_(d)` containing it, so every
//! vertex has one outgoing edge (toward the end `ω`, level `+∞`) and `d`
//! incoming edges. The Busemann function is `f_d = -level`; the line `L_0`
//! consists of the vertices `P_n = (0, n)`.
//!
//! An affine map `w ↦ u w + b` with `u = ±d^n s1/s2` sends the coset at level
//! `k` to the coset `u x + b + d^{-(k-n)} Z_(d)`, which is how `G_d` acts.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{self, d_pow, factorize, fract, int, split_by_base, DValuation, Rational};
use crate::error::{Error, Result};
use crate::group::AffineElement;

/// Default cap on BFS ball radii.
pub const BALL_RADIUS_CAP: u32 = 12;
/// Hard cap on the number of vertices a ball may hold.
pub const BALL_VERTEX_CAP: usize = 2_000_000;

/// A vertex of `T_d`: canonical residue plus level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreeVertex {
    #[serde(with = "crate::group::rational_string")]
    pub residue: Rational,
    pub level: i64,
}

impl fmt::Display for TreeVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.residue, self.level)
    }
}

impl TreeVertex {
    /// `P_n`, the vertex of `L_0` with Busemann value `-n`.
    pub fn p(n: i64) -> Self {
        Self { residue: Rational::zero(), level: n }
    }

    pub fn parse(label: &str) -> Result<Self> {
        let (r, k) = label
            .split_once('@')
            .ok_or_else(|| Error::InvalidParameter(format!("vertex label '{label}' lacks '@'")))?;
        let level = k
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad level in '{label}'")))?;
        Ok(Self { residue: arith::parse_rational(r)?, level })
    }
}

/// Canonical representative of `x + d^{-k} Z_(d)`.
///
/// Writes `x d^k = c + r` with `c ∈ Z_(d)` and `r ∈ Z[1/d] ∩ [0, 1)` and returns
/// `(d^{-k} r, k)`.
pub fn vertex_canonicalize(x: &Rational, k: i64, d: u64) -> TreeVertex {
    let y = x * d_pow(d, k);
    let (b1, b2) = split_by_base(y.denom(), d);
    if b1 == BigInt::from(1) {
        return TreeVertex { residue: Rational::zero(), level: k };
    }
    // u b1 + v b2 = 1, so y = a v / b1 + a u / b2 with a u / b2 ∈ Z_(d)
    let e = b1.extended_gcd(&b2);
    debug_assert_eq!(e.gcd, BigInt::from(1));
    let v = e.y;
    let r = fract(&Rational::new(y.numer() * v, b1));
    TreeVertex { residue: r * d_pow(d, -k), level: k }
}

pub fn parent(v: &TreeVertex, d: u64) -> TreeVertex {
    vertex_canonicalize(&v.residue, v.level + 1, d)
}

/// Ancestor of `v` at `level >= v.level`.
pub fn ancestor(v: &TreeVertex, level: i64, d: u64) -> TreeVertex {
    debug_assert!(level >= v.level);
    vertex_canonicalize(&v.residue, level, d)
}

/// The `d` children, ordered by offset index `j` ascending.
pub fn children(v: &TreeVertex, d: u64) -> Vec<TreeVertex> {
    let step = d_pow(d, -v.level);
    (0..d)
        .map(|j| vertex_canonicalize(&(&v.residue + &step * int(j as i64)), v.level - 1, d))
        .collect()
}

pub fn neighbors(v: &TreeVertex, d: u64) -> Vec<TreeVertex> {
    let mut out = children(v, d);
    out.push(parent(v, d));
    out
}

/// A point on `T_d`: a vertex plus an offset `λ ∈ [0, 1)` along the edge
/// toward the parent, measured from the vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePoint {
    pub base: TreeVertex,
    pub offset: f64,
}

impl From<TreeVertex> for TreePoint {
    fn from(base: TreeVertex) -> Self {
        Self { base, offset: 0.0 }
    }
}

impl TreePoint {
    pub fn new(base: TreeVertex, offset: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&offset) {
            return Err(Error::InvalidParameter(format!("edge offset {offset} outside [0, 1)")));
        }
        Ok(Self { base, offset })
    }

    /// Height `level + λ`; the Busemann value is its negative.
    pub fn height(&self) -> f64 {
        self.base.level as f64 + self.offset
    }

    /// The point at distance `t >= 0` from `self` along `[self, ω)`.
    pub fn ascend(&self, t: f64, d: u64) -> TreePoint {
        debug_assert!(t >= 0.0);
        let total = self.offset + t;
        let mut steps = total.floor();
        let mut lambda = total - steps;
        if lambda >= 1.0 {
            steps += 1.0;
            lambda = 0.0;
        }
        let level = self.base.level + steps as i64;
        let base = if steps == 0.0 { self.base.clone() } else { ancestor(&self.base, level, d) };
        TreePoint { base, offset: lambda }
    }

    /// Whether one of the two points lies on the ray from the other to `ω`.
    pub fn comparable(&self, other: &TreePoint, d: u64) -> bool {
        let m = meet_level(&self.base, &other.base, d) as f64;
        m <= self.height().max(other.height())
    }
}

/// `f_d(p) = -level - λ`.
pub fn busemann(p: &TreePoint) -> f64 {
    -p.height()
}

pub fn busemann_vertex(v: &TreeVertex) -> i64 {
    -v.level
}

fn small_valuation(mut n: u64, p: u64) -> i64 {
    if p == 2 {
        return n.trailing_zeros() as i64;
    }
    let mut c = 0;
    while n % p == 0 {
        n /= p;
        c += 1;
    }
    c
}

/// Calls `f(p, j)` for each `p^j ‖ d` without allocating.
fn for_each_prime_power(mut d: u64, mut f: impl FnMut(u64, u32)) {
    let mut p = 2;
    while p * p <= d {
        let mut j = 0;
        while d % p == 0 {
            d /= p;
            j += 1;
        }
        if j > 0 {
            f(p, j);
        }
        p += 1;
    }
    if d > 1 {
        f(d, 1);
    }
}

/// Exact `val_d(x1 - x2)`, with a machine-integer fast path.
fn gap_valuation(x1: &Rational, x2: &Rational, d: u64) -> DValuation {
    if x1 == x2 {
        return DValuation::Infinite;
    }
    let small = |r: &Rational| Some((r.numer().to_i64()?, r.denom().to_i64()?));
    if let (Some((n1, d1)), Some((n2, d2))) = (small(x1), small(x2)) {
        let num = (n1 as i128 * d2 as i128 - n2 as i128 * d1 as i128).unsigned_abs();
        let den = (d1 as i128 * d2 as i128).unsigned_abs();
        if let (Ok(num), Ok(den)) = (u64::try_from(num), u64::try_from(den)) {
            let mut v = i64::MAX;
            for_each_prime_power(d, |p, j| {
                v = v.min(Integer::div_floor(&(small_valuation(num, p) - small_valuation(den, p)), &(j as i64)));
            });
            return DValuation::Finite(v);
        }
        let v = factorize(d)
            .into_iter()
            .map(|(p, j)| {
                let vp = |mut n: u128| {
                    let mut c = 0i64;
                    while n % p as u128 == 0 {
                        n /= p as u128;
                        c += 1;
                    }
                    c
                };
                Integer::div_floor(&(vp(num) - vp(den)), &(j as i64))
            })
            .min()
            .expect("d >= 2");
        return DValuation::Finite(v);
    }
    arith::val_d(&(x1 - x2), d).expect("d >= 2")
}

/// Level `m* = max(k1, k2, -val_d(x1 - x2))` of the first common vertex of
/// the rays `[v1, ω)` and `[v2, ω)`.
pub fn meet_level(v1: &TreeVertex, v2: &TreeVertex, d: u64) -> i64 {
    let base = v1.level.max(v2.level);
    match gap_valuation(&v1.residue, &v2.residue, d) {
        DValuation::Infinite => base,
        DValuation::Finite(v) => base.max(-v),
    }
}

pub fn meet_toward_omega(v1: &TreeVertex, v2: &TreeVertex, d: u64) -> TreeVertex {
    vertex_canonicalize(&v1.residue, meet_level(v1, v2, d), d)
}

pub fn tree_distance(v1: &TreeVertex, v2: &TreeVertex, d: u64) -> u64 {
    let m = meet_level(v1, v2, d);
    ((m - v1.level) + (m - v2.level)) as u64
}

/// Distance between two points on edges: `2M - h1 - h2` with
/// `M = max(m*, h1, h2)` and `h_i` the heights.
pub fn point_distance(p1: &TreePoint, p2: &TreePoint, d: u64) -> f64 {
    let m = meet_level(&p1.base, &p2.base, d) as f64;
    let (h1, h2) = (p1.height(), p2.height());
    let top = m.max(h1).max(h2);
    (top - h1) + (top - h2)
}

/// Descendants of `z` at depth `l`, in child order.
pub fn sphere(z: &TreeVertex, l: u32, d: u64) -> Vec<TreeVertex> {
    let mut layer = vec![z.clone()];
    for _ in 0..l {
        layer = layer.iter().flat_map(|v| children(v, d)).collect();
    }
    layer
}

/// Whether `v ∈ B_n = f_d^{-1}((-∞, n])`.
pub fn horoball_contains(v: &TreeVertex, n: i64) -> bool {
    busemann_vertex(v) <= n
}

/// Whether `v` lies in the subtree `T_d(z)` rooted at `z` (including `z`).
pub fn subtree_contains(z: &TreeVertex, v: &TreeVertex, d: u64) -> bool {
    v.level <= z.level && ancestor(v, z.level, d) == *z
}

/// `g · v` for `g ∈ G_d`.
pub fn act(g: &AffineElement, v: &TreeVertex, d: u64) -> TreeVertex {
    let x = g.act_on_real(&v.residue, d);
    vertex_canonicalize(&x, v.level - g.n, d)
}

/// The action on points; the edge toward the parent is carried to the edge
/// toward the parent, so the offset is unchanged.
pub fn act_point(g: &AffineElement, p: &TreePoint, d: u64) -> TreePoint {
    TreePoint { base: act(g, &p.base, d), offset: p.offset }
}

/// An explicit finite ball of `T_d`, built by breadth-first search.
#[derive(Debug, Clone)]
pub struct Ball {
    pub d: u64,
    pub radius: u32,
    pub vertices: Vec<TreeVertex>,
    pub index: HashMap<TreeVertex, usize>,
    /// Index of the parent vertex when it lies in the ball.
    pub parent: Vec<Option<usize>>,
    pub adjacency: Vec<Vec<usize>>,
    /// BFS distance from the center (vertex 0).
    pub depth: Vec<u32>,
}

impl Ball {
    pub fn center(&self) -> &TreeVertex {
        &self.vertices[0]
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.iter().filter(|p| p.is_some()).count()
    }

    /// All BFS distances from vertex `src`.
    pub fn distances_from(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adjacency[u] {
                if dist[w] == u32::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Adjacency-list export: one `child parent` edge per line, sorted.
    pub fn export_edges(&self) -> String {
        let mut lines: Vec<String> = self
            .parent
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| format!("{} {}", self.vertices[c], self.vertices[p])))
            .collect();
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// Number of vertices in a ball of radius `r` in a `(d+1)`-regular tree.
pub fn ball_size(d: u64, r: u32) -> u64 {
    1 + (d + 1) * (0..r).map(|i| d.pow(i)).sum::<u64>()
}

pub fn bfs_ball(center: &TreeVertex, radius: u32, d: u64) -> Result<Ball> {
    bfs_ball_capped(center, radius, d, BALL_RADIUS_CAP)
}

pub fn bfs_ball_capped(center: &TreeVertex, radius: u32, d: u64, cap: u32) -> Result<Ball> {
    if d < 2 {
        return Err(Error::InvalidBase(d as i64));
    }
    if radius > cap {
        return Err(Error::RadiusCap { radius, cap });
    }
    let expected = ball_size(d, radius);
    if expected > BALL_VERTEX_CAP as u64 {
        return Err(Error::InvalidParameter(format!(
            "ball of radius {radius} in T_{d} has {expected} vertices"
        )));
    }
    let mut ball = Ball {
        d,
        radius,
        vertices: vec![center.clone()],
        index: HashMap::from([(center.clone(), 0)]),
        parent: vec![None],
        adjacency: vec![Vec::new()],
        depth: vec![0],
    };
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        if ball.depth[u] == radius {
            continue;
        }
        let v = ball.vertices[u].clone();
        for (j, w) in neighbors(&v, d).into_iter().enumerate() {
            let is_parent = j == d as usize;
            let idx = match ball.index.get(&w) {
                Some(&i) => i,
                None => {
                    let i = ball.vertices.len();
                    ball.index.insert(w.clone(), i);
                    ball.vertices.push(w);
                    ball.parent.push(None);
                    ball.adjacency.push(Vec::new());
                    ball.depth.push(ball.depth[u] + 1);
                    queue.push_back(i);
                    i
                }
            };
            if is_parent {
                if ball.parent[u].is_none() {
                    ball.parent[u] = Some(idx);
                    ball.adjacency[u].push(idx);
                    ball.adjacency[idx].push(u);
                }
            } else if ball.parent[idx].is_none() {
                ball.parent[idx] = Some(u);
                ball.adjacency[u].push(idx);
                ball.adjacency[idx].push(u);
            }
        }
    }
    Ok(ball)
}
