//! Stallings folding of finite balls of `T_q` into balls of `T_{q²}`, and the
//! product-of-trees model of `T_d` for composite `d`.
//!
//! The fold identifies the edge `P_0P_1` with `Q_1P_1`, `Q_1 = P_0 + 1/q`,
//! and closes the identification under a finite generating set of
//! `G_{q²}` acting partially on the ball.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::arith::{factorize, is_prime, rat, Rational};
use crate::error::{Error, Result};
use crate::group::AffineElement;
use crate::tree::{act, bfs_ball, children, parent, vertex_canonicalize, Ball, TreeVertex};

/// A finite graph with labeled, leveled vertices and a distinguished root.
#[derive(Debug, Clone)]
pub struct FiniteTree {
    pub labels: Vec<String>,
    pub levels: Vec<i64>,
    pub adjacency: Vec<Vec<usize>>,
    pub root: usize,
}

impl FiniteTree {
    pub fn from_ball(ball: &Ball) -> Self {
        Self {
            labels: ball.vertices.iter().map(|v| v.to_string()).collect(),
            levels: ball.vertices.iter().map(|v| v.level).collect(),
            adjacency: ball.adjacency.clone(),
            root: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn distances_from_root(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[self.root] = Some(0);
        let mut queue = VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("visited");
            for &w in &self.adjacency[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Connected, no loops or multi-edges, and `|E| = |V| - 1`.
    pub fn is_tree(&self) -> bool {
        let simple = self.adjacency.iter().enumerate().all(|(v, adj)| {
            let set: HashSet<usize> = adj.iter().copied().collect();
            set.len() == adj.len() && !set.contains(&v)
        });
        simple
            && self.edge_count() + 1 == self.len()
            && self.distances_from_root().iter().all(Option::is_some)
    }

    /// The induced subgraph on vertices within `radius` of the root.
    pub fn ball(&self, radius: usize) -> FiniteTree {
        let dist = self.distances_from_root();
        let keep: Vec<usize> = (0..self.len()).filter(|&v| dist[v].is_some_and(|d| d <= radius)).collect();
        self.induced(&keep)
    }

    fn induced(&self, keep: &[usize]) -> FiniteTree {
        let pos: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        FiniteTree {
            labels: keep.iter().map(|&v| self.labels[v].clone()).collect(),
            levels: keep.iter().map(|&v| self.levels[v]).collect(),
            adjacency: keep
                .iter()
                .map(|&v| self.adjacency[v].iter().filter_map(|w| pos.get(w).copied()).collect())
                .collect(),
            root: pos[&self.root],
        }
    }

    /// Rooted canonical form (AHU): equal strings iff rooted-isomorphic.
    pub fn canonical_form(&self) -> String {
        fn encode(t: &FiniteTree, v: usize, from: Option<usize>) -> String {
            let mut parts: Vec<String> =
                t.adjacency[v].iter().filter(|&&w| Some(w) != from).map(|&w| encode(t, w, Some(v))).collect();
            parts.sort_unstable();
            format!("({})", parts.concat())
        }
        encode(self, self.root, None)
    }

    /// One `a b` line per edge with `a` the lower-level endpoint, sorted.
    pub fn export_edges(&self) -> String {
        let mut lines = Vec::new();
        for (v, adj) in self.adjacency.iter().enumerate() {
            for &w in adj {
                if (self.levels[v], v) < (self.levels[w], w) {
                    lines.push(format!("{} {}", self.labels[v], self.labels[w]));
                }
            }
        }
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}

/// The folded ball: classes of vertices and of edges, and the quotient graph.
/// Edges are named by their child endpoint.
#[derive(Debug, Clone)]
pub struct FoldQuotient {
    pub q: u64,
    pub radius: u32,
    pub ball: Ball,
    pub vertex_class: Vec<usize>,
    pub edge_class: Vec<Option<usize>>,
    pub graph: FiniteTree,
    /// Edges whose endpoints fell into one class.
    pub inversions: usize,
    pub passes: usize,
}

/// Translations by `±q^k` for `|k| ≤ R`, the shifts `q^{±2}`, and a unit `s`
/// coprime to `q` with its inverse.
pub fn fold_generators(q: u64, radius: u32) -> Vec<AffineElement> {
    let mut gens = vec![AffineElement::d_power(2), AffineElement::d_power(-2)];
    let s = (2..).find(|s| num_integer::gcd(*s, q) == 1).expect("exists");
    gens.push(AffineElement::from_unit(&rat(s as i64, 1), Rational::from_integer(0.into()), q).expect("unit"));
    gens.push(AffineElement::from_unit(&rat(1, s as i64), Rational::from_integer(0.into()), q).expect("unit"));
    for k in -(radius as i64)..=(radius as i64) {
        let b = crate::arith::d_pow(q, k);
        gens.push(AffineElement::translation(b.clone()));
        gens.push(AffineElement::translation(-b));
    }
    gens
}

fn close(
    ball: &Ball,
    images: &[Vec<Option<usize>>],
    vdsu: &mut Dsu,
    edsu: &mut Dsu,
) -> usize {
    let n = ball.len();
    let mut passes = 0;
    loop {
        passes += 1;
        let mut changed = false;
        for img in images {
            for e in 0..n {
                let r = edsu.find(e);
                if r != e {
                    if let (Some(ge), Some(gr)) = (img[e], img[r]) {
                        if ball.parent[ge].is_some() && ball.parent[gr].is_some() && edsu.union(ge, gr) {
                            vdsu.union(ge, gr);
                            vdsu.union(ball.parent[ge].unwrap(), ball.parent[gr].unwrap());
                            changed = true;
                        }
                    }
                }
                let rv = vdsu.find(e);
                if rv != e {
                    if let (Some(gv), Some(gw)) = (img[e], img[rv]) {
                        changed |= vdsu.union(gv, gw);
                    }
                }
            }
        }
        if !changed {
            return passes;
        }
    }
}

/// Folds the radius-`R` ball of `T_q` around `P_0` under `generators`.
pub fn fold_step(q: u64, radius: u32, generators: &[AffineElement]) -> Result<FoldQuotient> {
    if radius < 3 {
        return Err(Error::InvalidParameter(format!("fold radius {radius} must be at least 3")));
    }
    let ball = bfs_ball(&TreeVertex::p(0), radius, q)?;
    let n = ball.len();
    let images: Vec<Vec<Option<usize>>> = generators
        .iter()
        .map(|g| ball.vertices.iter().map(|v| ball.index.get(&act(g, v, q)).copied()).collect())
        .collect();
    let (mut vdsu, mut edsu) = (Dsu::new(n), Dsu::new(n));
    let p1 = ball.parent[0].expect("radius >= 1");
    let q1 = ball.index[&vertex_canonicalize(&rat(1, q as i64), 0, q)];
    edsu.union(0, q1);
    vdsu.union(0, q1);
    let passes = close(&ball, &images, &mut vdsu, &mut edsu);
    debug_assert_eq!(vdsu.find(p1), p1.min(vdsu.find(p1)));

    let roots: Vec<usize> = (0..n).map(|v| vdsu.find(v)).collect();
    let mut order: BTreeMap<usize, usize> = BTreeMap::new();
    for &r in &roots {
        let next = order.len();
        order.entry(r).or_insert(next);
    }
    let vertex_class: Vec<usize> = roots.iter().map(|r| order[r]).collect();
    let edge_class: Vec<Option<usize>> =
        (0..n).map(|e| ball.parent[e].map(|_| edsu.find(e))).collect();

    let classes = order.len();
    let mut labels = vec![String::new(); classes];
    let mut levels = vec![i64::MAX; classes];
    for (v, &c) in vertex_class.iter().enumerate() {
        let lv = ball.vertices[v].level;
        if labels[c].is_empty() || lv < levels[c] || (lv == levels[c] && ball.depth[v] == 0) {
            labels[c] = ball.vertices[v].to_string();
            levels[c] = lv;
        }
    }
    let mut adjacency = vec![Vec::new(); classes];
    let mut seen = HashSet::new();
    let mut inversions = 0;
    for e in 0..n {
        if let (Some(p), Some(ec)) = (ball.parent[e], edge_class[e]) {
            let (a, b) = (vertex_class[e], vertex_class[p]);
            if a == b {
                inversions += 1;
                continue;
            }
            if seen.insert(ec) {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
    }
    let graph = FiniteTree { labels, levels, adjacency, root: vertex_class[0] };
    Ok(FoldQuotient { q, radius, ball, vertex_class, edge_class, graph, inversions, passes })
}

impl FoldQuotient {
    /// Re-runs the closure from the current partition; returns the number
    /// of passes and whether anything merged.
    pub fn reclose(&self, generators: &[AffineElement]) -> bool {
        let n = self.ball.len();
        let images: Vec<Vec<Option<usize>>> = generators
            .iter()
            .map(|g| self.ball.vertices.iter().map(|v| self.ball.index.get(&act(g, v, self.q)).copied()).collect())
            .collect();
        let (mut vdsu, mut edsu) = (Dsu::new(n), Dsu::new(n));
        let mut first_v: HashMap<usize, usize> = HashMap::new();
        let mut first_e: HashMap<usize, usize> = HashMap::new();
        for v in 0..n {
            vdsu.union(*first_v.entry(self.vertex_class[v]).or_insert(v), v);
            if let Some(c) = self.edge_class[v] {
                edsu.union(*first_e.entry(c).or_insert(v), v);
            }
        }
        let before = (0..n).map(|v| vdsu.find(v)).collect::<Vec<_>>();
        close(&self.ball, &images, &mut vdsu, &mut edsu);
        (0..n).map(|v| vdsu.find(v)).collect::<Vec<_>>() != before
    }

    /// The quotient restricted to classes meeting the ball of radius `r`.
    pub fn inner(&self, r: u32) -> FiniteTree {
        let mut keep: Vec<usize> =
            (0..self.ball.len()).filter(|&v| self.ball.depth[v] <= r).map(|v| self.vertex_class[v]).collect();
        keep.sort_unstable();
        keep.dedup();
        self.graph.induced(&keep)
    }

    /// Whether `x ∼ y` implies `g x ∼ g y` whenever both images lie in the ball.
    pub fn closure_is_sound(&self, generators: &[AffineElement]) -> bool {
        let mut rep: HashMap<usize, usize> = HashMap::new();
        for v in 0..self.ball.len() {
            rep.entry(self.vertex_class[v]).or_insert(v);
        }
        generators.iter().all(|g| {
            (0..self.ball.len()).all(|v| {
                let r = rep[&self.vertex_class[v]];
                let img = |x: usize| self.ball.index.get(&act(g, &self.ball.vertices[x], self.q)).copied();
                match (img(v), img(r)) {
                    (Some(a), Some(b)) => self.vertex_class[a] == self.vertex_class[b],
                    _ => true,
                }
            })
        })
    }
}

/// Removes every degree-2 vertex, joining its two neighbors. The root is
/// kept even at degree 2.
pub fn suppress_degree2(t: &FiniteTree) -> FiniteTree {
    let n = t.len();
    let mut adj: Vec<HashSet<usize>> = t.adjacency.iter().map(|a| a.iter().copied().collect()).collect();
    let mut alive = vec![true; n];
    let mut stack: Vec<usize> = (0..n).collect();
    while let Some(v) = stack.pop() {
        if !alive[v] || v == t.root || adj[v].len() != 2 {
            continue;
        }
        let mut it = adj[v].iter().copied();
        let (a, c) = (it.next().unwrap(), it.next().unwrap());
        if adj[a].contains(&c) {
            continue;
        }
        alive[v] = false;
        adj[a].remove(&v);
        adj[c].remove(&v);
        adj[a].insert(c);
        adj[c].insert(a);
        adj[v].clear();
        stack.push(a);
        stack.push(c);
    }
    let keep: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
    let merged = FiniteTree {
        adjacency: adj.into_iter().map(|s| {
            let mut v: Vec<usize> = s.into_iter().collect();
            v.sort_unstable();
            v
        }).collect(),
        ..t.clone()
    };
    merged.induced(&keep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FoldReport {
    pub q: u64,
    pub target: u64,
    pub radius: u32,
    pub inner_radius: u32,
    pub compare_radius: u32,
    pub classes: usize,
    pub passes: usize,
    pub inversions: usize,
    pub inner_is_tree: bool,
    pub closure_sound: bool,
    pub valence_ok: bool,
    pub valence_witness: Option<String>,
    pub labels_ok: bool,
    pub label_witness: Option<String>,
    pub isomorphic: bool,
    pub holds: bool,
}

/// Folds the radius-`R` ball of `T_q`, suppresses 2-valent vertices, and
/// compares with the direct `T_{q²}` ball.
///
/// Two checks: rooted isomorphism of the radius-`⌊(R-1)/2⌋` balls, and the
/// coordinate map sending the class of `(x, 2k)` to `(q·x, k)` in `T_{q²}`,
/// which must be a well-defined, injective, edge-preserving labeling on the
/// inner window. The factor `q` is needed because a class consists of the
/// children of the odd vertex `(x, 2k+1)`, i.e. the coset `x + q^{-(2k+1)}Z_(q)`.
pub fn verify_fold(q: u64, radius: u32) -> Result<FoldReport> {
    if radius < 4 {
        return Err(Error::InvalidParameter(format!("verify_fold needs R >= 4, got {radius}")));
    }
    let q2 = q.checked_mul(q).ok_or_else(|| Error::InvalidParameter("q² overflows".into()))?;
    let gens = fold_generators(q, radius);
    let fq = fold_step(q, radius, &gens)?;
    let inner_radius = radius - 2;
    let inner = fq.inner(inner_radius);
    let inner_is_tree = inner.is_tree();

    let compare_radius = (radius - 1) / 2;
    let suppressed = suppress_degree2(&fq.graph);
    let window = suppressed.ball(compare_radius as usize);
    let direct = FiniteTree::from_ball(&bfs_ball(&TreeVertex::p(0), compare_radius, q2)?);
    let isomorphic = window.len() == direct.len() && window.canonical_form() == direct.canonical_form();

    let dist = window.distances_from_root();
    let mut valence_witness = None;
    for v in 0..window.len() {
        if dist[v].is_some_and(|d| d < compare_radius as usize) {
            let full = suppressed.labels.iter().position(|l| *l == window.labels[v]).expect("present");
            if suppressed.degree(full) as u64 != q2 + 1 {
                valence_witness = Some(format!("{} has valence {}", window.labels[v], suppressed.degree(full)));
                break;
            }
        }
    }

    // coordinate labeling on even levels inside the inner window
    let mut label_witness = None;
    let mut class_label: HashMap<usize, TreeVertex> = HashMap::new();
    let mut label_class: HashMap<TreeVertex, usize> = HashMap::new();
    let ball = &fq.ball;
    for v in 0..ball.len() {
        let tv = &ball.vertices[v];
        if ball.depth[v] > inner_radius || tv.level.rem_euclid(2) != 0 {
            continue;
        }
        let image = vertex_canonicalize(&(&tv.residue * rat(q as i64, 1)), tv.level / 2, q2);
        let c = fq.vertex_class[v];
        let clash = match class_label.get(&c) {
            Some(prev) if *prev != image => Some(format!("class of {tv} maps to {prev} and {image}")),
            _ => None,
        }
        .or_else(|| match label_class.get(&image) {
            Some(&pc) if pc != c => Some(format!("{image} is hit by two classes, one containing {tv}")),
            _ => None,
        });
        if clash.is_some() {
            label_witness = clash;
            break;
        }
        class_label.insert(c, image.clone());
        label_class.insert(image, c);
    }
    if label_witness.is_none() {
        // grandparent classes must map to parents in T_{q²}
        for v in 0..ball.len() {
            let tv = &ball.vertices[v];
            if ball.depth[v] + 2 > inner_radius || tv.level.rem_euclid(2) != 0 {
                continue;
            }
            let gp = parent(&parent(tv, q), q);
            if let (Some(&gi), Some(img)) = (ball.index.get(&gp), class_label.get(&fq.vertex_class[v])) {
                if class_label.get(&fq.vertex_class[gi]) != Some(&parent(img, q2)) {
                    label_witness = Some(format!("edge above {tv} is not carried to an edge"));
                    break;
                }
            }
        }
    }
    let labels_ok = label_witness.is_none();
    let valence_ok = valence_witness.is_none();
    let closure_sound = fq.closure_is_sound(&gens);
    let holds = inner_is_tree && closure_sound && valence_ok && labels_ok && isomorphic && fq.inversions == 0;
    Ok(FoldReport {
        q,
        target: q2,
        radius,
        inner_radius,
        compare_radius,
        classes: fq.graph.len(),
        passes: fq.passes,
        inversions: fq.inversions,
        inner_is_tree,
        closure_sound,
        valence_ok,
        valence_witness,
        labels_ok,
        label_witness,
        isomorphic,
        holds,
    })
}

/// Folds `T_p → T_{p²} → T_{p⁴} → …`, `steps` times. Each step after the
/// first starts from the direct model of the previous target, which the
/// previous step certified through the coordinate labeling.
pub fn iterated_fold(p: u64, steps: u32, radius: u32) -> Result<Vec<FoldReport>> {
    let mut q = p;
    let mut out = Vec::new();
    for _ in 0..steps {
        let r = verify_fold(q, radius)?;
        q = r.target;
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagonalReport {
    pub d: u64,
    pub radius: u32,
    pub factors: Vec<u64>,
    pub vertices: usize,
    pub valence: usize,
    pub bijective: bool,
    pub edges_preserved: bool,
    pub isomorphic: bool,
    pub holds: bool,
}

/// Tuples of vertices of `T_{p_l^{j_l}}` at a common level, adjacent when
/// every coordinate moves to its parent or every coordinate to a child.
/// Compared against the direct ball of `T_d` through the coordinate map
/// `(x, k) ↦ (x, k)_l`.
pub fn diagonal_model(d: u64, radius: u32) -> Result<(FiniteTree, DiagonalReport)> {
    if d < 2 || is_prime(d) || factorize(d).len() < 2 {
        return Err(Error::InvalidParameter(format!("{d} is not divisible by two distinct primes")));
    }
    let factors: Vec<u64> = factorize(d).into_iter().map(|(p, j)| p.pow(j)).collect();
    let root: Vec<TreeVertex> = factors.iter().map(|_| TreeVertex::p(0)).collect();

    // breadth-first over tuples
    let mut index: HashMap<Vec<TreeVertex>, usize> = HashMap::from([(root.clone(), 0)]);
    let mut tuples = vec![root];
    let mut depth = vec![0u32];
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new()];
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        if depth[u] == radius {
            continue;
        }
        let cur = tuples[u].clone();
        let up: Vec<TreeVertex> = cur.iter().zip(&factors).map(|(v, &q)| parent(v, q)).collect();
        let mut next = vec![up];
        let mut downs: Vec<Vec<TreeVertex>> = vec![Vec::new()];
        for (v, &q) in cur.iter().zip(&factors) {
            downs = downs
                .into_iter()
                .flat_map(|prefix| {
                    children(v, q).into_iter().map(move |c| {
                        let mut t = prefix.clone();
                        t.push(c);
                        t
                    })
                })
                .collect();
        }
        next.extend(downs);
        for t in next {
            let w = match index.get(&t) {
                Some(&w) => w,
                None => {
                    let w = tuples.len();
                    index.insert(t.clone(), w);
                    tuples.push(t);
                    depth.push(depth[u] + 1);
                    adjacency.push(Vec::new());
                    queue.push_back(w);
                    w
                }
            };
            if !adjacency[u].contains(&w) {
                adjacency[u].push(w);
                adjacency[w].push(u);
            }
        }
    }
    let tree = FiniteTree {
        labels: tuples
            .iter()
            .map(|t| t.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .collect(),
        levels: tuples.iter().map(|t| t[0].level).collect(),
        adjacency,
        root: 0,
    };

    let direct = bfs_ball(&TreeVertex::p(0), radius, d)?;
    let map = |v: &TreeVertex| -> Vec<TreeVertex> {
        factors.iter().map(|&q| vertex_canonicalize(&v.residue, v.level, q)).collect()
    };
    let images: Vec<Option<usize>> = direct.vertices.iter().map(|v| index.get(&map(v)).copied()).collect();
    let distinct: HashSet<usize> = images.iter().flatten().copied().collect();
    let bijective = images.iter().all(Option::is_some) && distinct.len() == tree.len() && tree.len() == direct.len();
    let edges_preserved = bijective
        && (0..direct.len()).all(|c| match direct.parent[c] {
            Some(p) => tree.adjacency[images[c].unwrap()].contains(&images[p].unwrap()),
            None => true,
        });
    let isomorphic = tree.canonical_form() == FiniteTree::from_ball(&direct).canonical_form();
    let valence = tree.degree(0);
    let holds = bijective && edges_preserved && isomorphic && valence as u64 == d + 1 && tree.is_tree();
    let report = DiagonalReport {
        d,
        radius,
        factors,
        vertices: tree.len(),
        valence,
        bijective,
        edges_preserved,
        isomorphic,
        holds,
    };
    Ok((tree, report))
}
