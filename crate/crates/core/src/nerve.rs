//! Covers of finite sampled metric spaces, their nerves, and the canonical
//! partition-of-unity map into the nerve with its `ℓ¹` contraction bound.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{bfs_ball, TreeVertex};
use crate::warped::{self, SpacePoint};

/// A finite metric space given by a full distance matrix.
#[derive(Debug, Clone)]
pub struct SampledSpace {
    pub labels: Vec<String>,
    dist: Vec<f64>,
}

impl SampledSpace {
    pub fn from_fn(labels: Vec<String>, metric: impl Fn(usize, usize) -> f64) -> Self {
        let n = labels.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = metric(i, j);
                dist[i * n + j] = v;
                dist[j * n + i] = v;
            }
        }
        Self { labels, dist }
    }

    /// `[lo, hi]` sampled at `step`, endpoints included.
    pub fn interval(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && hi >= lo) {
            return Err(Error::InvalidParameter("interval needs lo <= hi and step > 0".into()));
        }
        let count = ((hi - lo) / step).round() as usize + 1;
        let xs: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
        let labels = xs.iter().map(|x| format!("{x:.6}")).collect();
        Ok(Self::from_fn(labels, |i, j| (xs[i] - xs[j]).abs()))
    }

    /// All vertices of a ball in `T_d`, in breadth-first order.
    pub fn tree_ball(center: &TreeVertex, radius: u32, d: u64) -> Result<Self> {
        let ball = bfs_ball(center, radius, d)?;
        let rows: Vec<Vec<u32>> = (0..ball.len()).map(|i| ball.distances_from(i)).collect();
        let labels = ball.vertices.iter().map(|v| v.to_string()).collect();
        Ok(Self::from_fn(labels, |i, j| rows[i][j] as f64))
    }

    pub fn warped_sample(points: &[SpacePoint], d: u64, tol: f64) -> Result<Self> {
        let n = points.len();
        let mut rows = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                rows[i * n + j] = warped::distance(&points[i], &points[j], d, tol)?;
            }
        }
        let labels = points.iter().map(|p| format!("({}+{}, {})", p.z.base, p.z.offset, p.w)).collect();
        Ok(Self::from_fn(labels, |i, j| rows[i.min(j) * n + i.max(j)]))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    /// Metric axioms on all pairs and triples, with additive slack `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                let v = self.d(i, j);
                if !v.is_finite() || v < 0.0 || (i != j && v == 0.0) || (i == j && v != 0.0) {
                    return Err(Error::Certification(format!("bad distance {v} between {i} and {j}")));
                }
                for k in 0..n {
                    if self.d(i, k) > v + self.d(j, k) + tol {
                        return Err(Error::Certification(format!("triangle inequality fails on ({i}, {j}, {k})")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Member {
    pub id: String,
    pub point_ids: Vec<usize>,
}

/// A cover of a sampled space together with the distance of each point to
/// each member's complement.
#[derive(Debug, Clone)]
pub struct Cover {
    pub members: Vec<Member>,
    sets: Vec<BTreeSet<usize>>,
    /// `to_complement[u][x]`; `+∞` when the member is the whole space.
    to_complement: Vec<Vec<f64>>,
}

impl Cover {
    pub fn new(space: &SampledSpace, members: Vec<Member>) -> Result<Self> {
        let n = space.len();
        let sets: Vec<BTreeSet<usize>> = members.iter().map(|m| m.point_ids.iter().copied().collect()).collect();
        for (m, s) in members.iter().zip(&sets) {
            if let Some(&bad) = s.iter().find(|&&p| p >= n) {
                return Err(Error::InvalidParameter(format!("member {} names point {bad} of {n}", m.id)));
            }
        }
        let mut covered = vec![false; n];
        sets.iter().flatten().for_each(|&p| covered[p] = true);
        if let Some(p) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidParameter(format!("point {p} lies in no member")));
        }
        let to_complement = sets
            .iter()
            .map(|s| {
                (0..n)
                    .map(|x| {
                        if !s.contains(&x) {
                            return 0.0;
                        }
                        (0..n).filter(|y| !s.contains(y)).map(|y| space.d(x, y)).fold(f64::INFINITY, f64::min)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { members, sets, to_complement })
    }

    pub fn contains(&self, member: usize, x: usize) -> bool {
        self.sets[member].contains(&x)
    }

    pub fn distance_to_complement(&self, member: usize, x: usize) -> f64 {
        self.to_complement[member][x]
    }
}

/// The largest `N` with `N + 1` members sharing a sampled point.
pub fn cover_dimension(c: &Cover) -> usize {
    let n = c.to_complement.first().map_or(0, Vec::len);
    (0..n).map(|x| (0..c.members.len()).filter(|&u| c.contains(u, x)).count()).max().unwrap_or(1).saturating_sub(1)
}

/// Every open `β`-ball lies in some member.
pub fn lebesgue_check(space: &SampledSpace, c: &Cover, beta: f64) -> bool {
    (0..space.len()).all(|x| {
        let ball: Vec<usize> = (0..space.len()).filter(|&y| space.d(x, y) < beta).collect();
        (0..c.members.len()).any(|u| ball.iter().all(|&y| c.contains(u, y)))
    })
}

/// Weights on nerve vertices, keyed by member index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycentricPoint {
    pub weights: BTreeMap<usize, f64>,
}

impl BarycentricPoint {
    pub fn l1(&self, other: &Self) -> f64 {
        let keys: BTreeSet<usize> = self.weights.keys().chain(other.weights.keys()).copied().collect();
        keys.into_iter()
            .map(|k| (self.weights.get(&k).unwrap_or(&0.0) - other.weights.get(&k).unwrap_or(&0.0)).abs())
            .sum()
    }
}

/// `ρ(x)_U = dist(x, X∖U) / Σ_V dist(x, X∖V)`. Members equal to the whole
/// space share the weight evenly.
pub fn canonical_map(c: &Cover, x: usize) -> BarycentricPoint {
    let raw: Vec<(usize, f64)> = (0..c.members.len())
        .filter(|&u| c.contains(u, x))
        .map(|u| (u, c.distance_to_complement(u, x)))
        .collect();
    let whole = raw.iter().filter(|r| r.1.is_infinite()).count();
    let weights = if whole > 0 {
        raw.iter().filter(|r| r.1.is_infinite()).map(|r| (r.0, 1.0 / whole as f64)).collect()
    } else {
        let total: f64 = raw.iter().map(|r| r.1).sum();
        raw.iter().map(|r| (r.0, r.1 / total)).collect()
    };
    BarycentricPoint { weights }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LipschitzReport {
    pub beta: f64,
    pub n: usize,
    pub radius: f64,
    pub constant: f64,
    pub pairs_checked: usize,
    pub max_ratio: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub holds: bool,
}

/// Checks `d¹(ρ(x), ρ(y)) ≤ (16N²/β)·d(x, y)` whenever `d(x, y) ≤ β/(4N)`.
/// `n` is the dimension bound; it defaults to `max(cover_dimension, 1)`.
pub fn lipschitz_check(
    space: &SampledSpace,
    c: &Cover,
    beta: f64,
    n: Option<usize>,
    pairs: Option<&[(usize, usize)]>,
) -> Result<LipschitzReport> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive".into()));
    }
    if !lebesgue_check(space, c, beta) {
        return Err(Error::Hypothesis(format!("some {beta}-ball lies in no member")));
    }
    let dim = cover_dimension(c);
    let n = n.unwrap_or(dim.max(1));
    if n < dim.max(1) {
        return Err(Error::Hypothesis(format!("N = {n} is below the cover dimension {dim}")));
    }
    let nf = n as f64;
    let radius = beta / (4.0 * nf);
    let constant = 16.0 * nf * nf / beta;
    let images: Vec<BarycentricPoint> = (0..space.len()).map(|x| canonical_map(c, x)).collect();
    let all: Vec<(usize, usize)>;
    let pairs = match pairs {
        Some(p) => p,
        None => {
            all = (0..space.len()).flat_map(|i| (i..space.len()).map(move |j| (i, j))).collect();
            &all
        }
    };
    let mut report =
        LipschitzReport { beta, n, radius, constant, pairs_checked: 0, max_ratio: 0.0, worst_pair: None, holds: true };
    for &(x, y) in pairs {
        let dxy = space.d(x, y);
        if dxy > radius {
            continue;
        }
        report.pairs_checked += 1;
        let l1 = images[x].l1(&images[y]);
        let ratio = if dxy == 0.0 {
            if l1 == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            l1 / (constant * dxy)
        };
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst_pair = Some((x, y));
        }
    }
    report.holds = report.max_ratio <= 1.0;
    Ok(report)
}

/// The bound `(16N²/β)·d` with `β = 16N²n²` and `d < n`, which is below `1/n`.
pub fn contraction_bookkeeping(big_n: usize, n: u64, dist: f64) -> (f64, bool) {
    let nn = big_n as f64;
    let beta = 16.0 * nn * nn * (n * n) as f64;
    let bound = 16.0 * nn * nn / beta * dist;
    let in_range = dist < n as f64 && (n as f64) <= beta / (4.0 * nn);
    (bound, in_range && bound < 1.0 / n as f64)
}

/// Families of subgroups for stabilizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Trivial,
    Cyclic,
    All,
}

/// A finite group acting on the points by permutations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupAction {
    pub elements: Vec<Vec<usize>>,
    pub family: Family,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FCoverReport {
    pub disjoint_or_equal: bool,
    pub closed_under_action: bool,
    pub stabilizers_in_family: bool,
    pub failure: Option<String>,
    pub holds: bool,
}

fn compose(a: &[usize], b: &[usize]) -> Vec<usize> {
    b.iter().map(|&x| a[x]).collect()
}

/// Checks `gU = U` or `gU ∩ U = ∅`, that translates are members, and that
/// stabilizers lie in the family.
pub fn f_cover_axioms(c: &Cover, action: &GroupAction) -> Result<FCoverReport> {
    let n = c.to_complement.first().map_or(0, Vec::len);
    let elements: BTreeSet<Vec<usize>> = action.elements.iter().cloned().collect();
    for g in &elements {
        let mut sorted = g.clone();
        sorted.sort_unstable();
        if g.len() != n || sorted != (0..n).collect::<Vec<_>>() {
            return Err(Error::InvalidParameter("group elements must be permutations of the points".into()));
        }
        for h in &elements {
            if !elements.contains(&compose(g, h)) {
                return Err(Error::InvalidParameter("group elements are not closed under composition".into()));
            }
        }
    }
    let index: HashMap<&BTreeSet<usize>, usize> = c.sets.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut report = FCoverReport {
        disjoint_or_equal: true,
        closed_under_action: true,
        stabilizers_in_family: true,
        failure: None,
        holds: true,
    };
    for (u, set) in c.sets.iter().enumerate() {
        let mut stabilizer = Vec::new();
        for g in &elements {
            let image: BTreeSet<usize> = set.iter().map(|&x| g[x]).collect();
            if image == *set {
                stabilizer.push(g.clone());
            } else if !image.is_disjoint(set) && report.disjoint_or_equal {
                report.disjoint_or_equal = false;
                report.failure.get_or_insert(format!("a translate of {} overlaps it", c.members[u].id));
            }
            if !index.contains_key(&image) && report.closed_under_action {
                report.closed_under_action = false;
                report.failure.get_or_insert(format!("a translate of {} is not a member", c.members[u].id));
            }
        }
        let ok = match action.family {
            Family::All => true,
            Family::Trivial => stabilizer.len() == 1,
            Family::Cyclic => stabilizer.iter().any(|g| element_order(g) == stabilizer.len()),
        };
        if !ok && report.stabilizers_in_family {
            report.stabilizers_in_family = false;
            report.failure.get_or_insert(format!("stabilizer of {} is outside the family", c.members[u].id));
        }
    }
    report.holds = report.disjoint_or_equal && report.closed_under_action && report.stabilizers_in_family;
    Ok(report)
}

fn element_order(g: &[usize]) -> usize {
    let id: Vec<usize> = (0..g.len()).collect();
    let mut p = g.to_vec();
    let mut k = 1;
    while p != id {
        p = compose(g, &p);
        k += 1;
    }
    k
}

/// Metric named in a fixture file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricSpec {
    Interval { lo: f64, hi: f64, step: f64 },
    TreeBall { d: u64, center: String, radius: u32 },
    WarpedSample { d: u64, points: Vec<SpacePoint> },
}

impl MetricSpec {
    pub fn build(&self) -> Result<SampledSpace> {
        match self {
            MetricSpec::Interval { lo, hi, step } => SampledSpace::interval(*lo, *hi, *step),
            MetricSpec::TreeBall { d, center, radius } => SampledSpace::tree_ball(&TreeVertex::parse(center)?, *radius, *d),
            MetricSpec::WarpedSample { d, points } => SampledSpace::warped_sample(points, *d, warped::DEFAULT_TOL),
        }
    }
}

/// `{metric, members: [{id, pointIds}], beta?, action?}`; points are those
/// of the named metric, indexed in construction order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CoverFixture {
    pub metric: MetricSpec,
    pub members: Vec<Member>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<GroupAction>,
}

impl CoverFixture {
    pub fn load(text: &str) -> Result<(Self, SampledSpace, Cover)> {
        let fixture: CoverFixture =
            serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("fixture: {e}")))?;
        let space = fixture.metric.build()?;
        let cover = Cover::new(&space, fixture.members.clone())?;
        Ok((fixture, space, cover))
    }

    /// `[0, 10]` at step 0.05 covered by the open intervals `(i-1, i+2)`,
    /// `i = 0..9`, with `β = 1`.
    pub fn interval_standard() -> Self {
        let step = 0.05;
        let count = 201;
        let members = (0..10)
            .map(|i| {
                let (a, b) = (i as f64 - 1.0, i as f64 + 2.0);
                let point_ids = (0..count).filter(|&k| (k as f64 * step) > a + 1e-9 && (k as f64 * step) < b - 1e-9).collect();
                Member { id: format!("U{i}"), point_ids }
            })
            .collect();
        Self { metric: MetricSpec::Interval { lo: 0.0, hi: 10.0, step }, members, beta: Some(1.0), action: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard() -> (SampledSpace, Cover) {
        let f = CoverFixture::interval_standard();
        let s = f.metric.build().unwrap();
        let c = Cover::new(&s, f.members).unwrap();
        (s, c)
    }

    fn partition(s: &SampledSpace, cut: usize) -> Cover {
        let n = s.len();
        Cover::new(
            s,
            vec![
                Member { id: "L".into(), point_ids: (0..cut).collect() },
                Member { id: "R".into(), point_ids: (cut..n).collect() },
            ],
        )
        .unwrap()
    }

    fn whole(s: &SampledSpace) -> Cover {
        Cover::new(s, vec![Member { id: "X".into(), point_ids: (0..s.len()).collect() }]).unwrap()
    }

    #[test]
    fn dimensions() {
        let (s, c) = standard();
        assert_eq!(s.len(), 201);
        assert_eq!(cover_dimension(&c), 2);
        assert_eq!(cover_dimension(&partition(&s, 50)), 0);
        assert_eq!(cover_dimension(&whole(&s)), 0);
    }

    #[test]
    fn lebesgue() {
        let (s, c) = standard();
        assert!(lebesgue_check(&s, &c, 1.0));
        assert!(!lebesgue_check(&s, &c, 1.6));
        assert!(lebesgue_check(&s, &whole(&s), 1e6));
    }

    #[test]
    fn canonical_map_examples() {
        let (s, c) = standard();
        let x = (5.5f64 / 0.05).round() as usize;
        let r = canonical_map(&c, x);
        assert!((r.weights.values().sum::<f64>() - 1.0).abs() < 1e-12);
        // (3,6), (4,7), (5,8) contain 5.5 at complement distances 0.5, 1.5, 0.5
        let want = [(4usize, 0.5), (5, 1.5), (6, 0.5)];
        let total: f64 = want.iter().map(|w| w.1).sum();
        for (u, raw) in want {
            assert!((r.weights[&u] - raw / total).abs() < 1e-12, "{u}");
        }
        let p = partition(&s, 100);
        assert_eq!(canonical_map(&p, 3).weights, BTreeMap::from([(0, 1.0)]));
        // two members symmetric about x
        let sym = Cover::new(
            &s,
            vec![
                Member { id: "A".into(), point_ids: (0..120).collect() },
                Member { id: "B".into(), point_ids: (81..201).collect() },
            ],
        )
        .unwrap();
        let mid = canonical_map(&sym, 100);
        assert!((mid.weights[&0] - 0.5).abs() < 1e-12 && (mid.weights[&1] - 0.5).abs() < 1e-12);
        for x in 0..s.len() {
            let r = canonical_map(&c, x);
            assert!((r.weights.values().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.weights.keys().all(|&u| c.contains(u, x)));
        }
    }

    #[test]
    fn lipschitz_on_standard_fixture() {
        let (s, c) = standard();
        let r = lipschitz_check(&s, &c, 1.0, None, None).unwrap();
        assert_eq!(r.n, 2);
        assert_eq!(r.radius, 0.125);
        assert_eq!(r.constant, 64.0);
        assert!(r.holds && r.max_ratio <= 1.0, "{r:?}");
        assert!(r.pairs_checked > s.len());
        let one = whole(&s);
        let r1 = lipschitz_check(&s, &one, 1.0, None, None).unwrap();
        assert_eq!(r1.max_ratio, 0.0);
        assert!(lipschitz_check(&s, &c, 2.0, None, None).is_err());
    }

    #[test]
    fn bookkeeping() {
        for big_n in 1..5 {
            for n in 1..6u64 {
                for frac in [0.0, 0.3, 0.99] {
                    let (bound, ok) = contraction_bookkeeping(big_n, n, frac * n as f64);
                    assert!(ok && bound < 1.0 / n as f64);
                }
            }
        }
    }

    #[test]
    fn f_cover_examples() {
        let s = SampledSpace::interval(-1.0, 1.0, 0.5).unwrap();
        // points -1, -0.5, 0, 0.5, 1; flip x -> -x
        let flip = vec![4, 3, 2, 1, 0];
        let id: Vec<usize> = (0..5).collect();
        let two = Cover::new(
            &s,
            vec![
                Member { id: "L".into(), point_ids: vec![0, 1] },
                Member { id: "R".into(), point_ids: vec![3, 4] },
                Member { id: "M".into(), point_ids: vec![1, 2, 3] },
            ],
        )
        .unwrap();
        let act = GroupAction { elements: vec![id.clone(), flip.clone()], family: Family::Cyclic };
        assert!(f_cover_axioms(&two, &act).unwrap().holds);
        let triv = GroupAction { elements: vec![id.clone(), flip.clone()], family: Family::Trivial };
        assert!(!f_cover_axioms(&two, &triv).unwrap().stabilizers_in_family);
        let only = GroupAction { elements: vec![id.clone()], family: Family::All };
        assert!(f_cover_axioms(&two, &only).unwrap().holds);
        let bad = Cover::new(
            &s,
            vec![Member { id: "A".into(), point_ids: vec![0, 1, 2] }, Member { id: "B".into(), point_ids: vec![2, 3, 4] }, Member { id: "C".into(), point_ids: vec![1, 2] }],
        )
        .unwrap();
        let r = f_cover_axioms(&bad, &act).unwrap();
        assert!(!r.disjoint_or_equal && !r.holds);
    }

    #[test]
    fn spaces_are_metric() {
        SampledSpace::interval(0.0, 2.0, 0.25).unwrap().validate(0.0).unwrap();
        let t = SampledSpace::tree_ball(&TreeVertex::p(0), 2, 2).unwrap();
        assert_eq!(t.len(), 1 + 3 + 6);
        t.validate(0.0).unwrap();
        let pts: Vec<SpacePoint> = (0..4)
            .map(|i| SpacePoint { z: TreeVertex::p(i - 1).into(), w: i as f64 * 0.7 })
            .collect();
        SampledSpace::warped_sample(&pts, 2, 1e-9).unwrap().validate(1e-6).unwrap();
    }

    #[test]
    fn fixture_round_trip() {
        let f = CoverFixture::interval_standard();
        let text = serde_json::to_string(&f).unwrap();
        let (back, s, c) = CoverFixture::load(&text).unwrap();
        assert_eq!(back.members, f.members);
        assert_eq!(s.len(), 201);
        assert_eq!(cover_dimension(&c), 2);
        assert!(CoverFixture::load("{\"metric\":{\"kind\":\"nope\"},\"members\":[]}").is_err());
    }
}
