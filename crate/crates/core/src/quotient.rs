//! Finite metacyclic quotients `Z_{q^s} ⋊ Z_t` of `Z[1/d] ⋊ Z` and of
//! `Aff(Z[1/p])`, with subgroup enumeration, hyper-elementarity testing and
//! the type 1 / 2 / 3 classification of hyper-elementary subgroups.
//!
//! Every group here is `Z_{q^s} ⋊ ⟨g⟩` for a unit `g` of order `t`, with
//! `(a,b)(a',b') = (a + g^{-b} a', b + b')`. The plain quotient uses `g = d`;
//! the extended one uses a generator of `⟨-1, p⟩ ⊆ U(Z_{q^s})`.
//!
//! With `t = m q^k`, `gcd(m, q) = 1`, the three target types are
//! `Z_{q^s} ⋊ Z_{q^k}` (`m | b`), `Z_{q^s} ⋊ Z_m` (`q^k | b`) and
//! `{0} ⋊ Z_t` (`a = 0`).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::arith::{factorize, is_prime, mod_inverse, mul_mod, pow_mod, reduce_mod};
use crate::error::{Error, Result};
use crate::group::{AffineElement, Gamma, GammaElement, PairRing};
use crate::tree::{act, tree_distance, TreeVertex};

/// Largest group order accepted by brute-force enumeration.
pub const BRUTE_ORDER_CAP: u64 = 10_000;
/// Largest group order for which subgroup elements are materialized.
pub const MATERIALIZE_ORDER_CAP: u64 = 2_000_000;

/// Multiplicative order of a unit `g` modulo `m`.
pub fn unit_order(g: u64, m: u64) -> Result<u64> {
    if m < 2 || g.gcd(&m) != 1 {
        return Err(Error::InvalidParameter(format!("{g} is not a unit modulo {m}")));
    }
    // Carmichael-free route: start from φ(m) and strip prime factors.
    let phi: u64 = factorize(m).iter().map(|&(p, e)| p.pow(e - 1) * (p - 1)).product();
    let mut n = phi;
    for (p, _) in factorize(phi) {
        while n % p == 0 && pow_mod(g, n / p, m) == 1 {
            n /= p;
        }
    }
    Ok(n)
}

/// `(t_1, t_s, k_s, m_s)` for `d` modulo powers of `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitOrders {
    pub t1: u64,
    pub ts: u64,
    pub ks: u32,
    pub ms: u64,
}

/// Orders of `d` modulo `q` and `q^s`, with the checks `m_s = t_1` and
/// `k_s ≤ s - 1`.
pub fn multiplicative_order(d: u64, q: u64, s: u32) -> Result<UnitOrders> {
    check_prime_power(q, s)?;
    if d.gcd(&q) != 1 {
        return Err(Error::NotCoprime { d, q });
    }
    let t1 = unit_order(d % q, q)?;
    let ts = unit_order(d % q.pow(s), q.pow(s))?;
    let (ms, ks) = split_q_part(ts, q);
    if ms != t1 || ks > s - 1 {
        return Err(Error::Certification(format!(
            "order of {d} mod {q}^{s} is {ts} = {ms}·{q}^{ks}, expected prime-to-{q} part {t1}"
        )));
    }
    Ok(UnitOrders { t1, ts, ks, ms })
}

fn check_prime_power(q: u64, s: u32) -> Result<()> {
    if !is_prime(q) {
        return Err(Error::InvalidParameter(format!("q = {q} is not prime")));
    }
    if s == 0 {
        return Err(Error::InvalidParameter("s must be positive".into()));
    }
    if q.checked_pow(s).map_or(true, |m| m > u32::MAX as u64) {
        return Err(Error::InvalidParameter(format!("{q}^{s} is too large")));
    }
    Ok(())
}

fn split_q_part(mut t: u64, q: u64) -> (u64, u32) {
    let mut k = 0;
    while t % q == 0 {
        t /= q;
        k += 1;
    }
    (t, k)
}

/// Data of `U_{q^s} = ⟨-1, p⟩ ⊆ U(Z_{q^s})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtendedUnitData {
    pub t1_prime: u64,
    pub ts_prime: u64,
    pub generator: u64,
    pub ts: u64,
}

pub fn extended_unit_data(p: u64, q: u64, s: u32) -> Result<ExtendedUnitData> {
    if !is_prime(p) {
        return Err(Error::InvalidParameter(format!("extended variant needs a prime, got {p}")));
    }
    if q == 2 {
        return Err(Error::InvalidParameter("extended variant needs an odd q".into()));
    }
    let orders = multiplicative_order(p, q, s)?;
    let m = q.pow(s);
    let minus_one_inside = orders.ts % 2 == 0 && pow_mod(p, orders.ts / 2, m) == m - 1;
    let ts_prime = if minus_one_inside { orders.ts } else { 2 * orders.ts };
    // first (-1)^i p^j of full order; U(Z_{q^s}) is cyclic so one exists
    let mut generator = None;
    'search: for j in 0..ts_prime {
        let pj = pow_mod(p, j, m);
        for cand in [pj, (m - pj) % m] {
            if unit_order(cand, m)? == ts_prime {
                generator = Some(cand);
                break 'search;
            }
        }
    }
    let generator =
        generator.ok_or_else(|| Error::Certification(format!("⟨-1, {p}⟩ mod {m} is not cyclic")))?;
    let t1_prime = unit_order(generator % q, q)?;
    if ts_prime != t1_prime * q.pow(orders.ks) {
        return Err(Error::Certification(format!(
            "t'_s = {ts_prime} differs from t'_1·q^k_s = {}",
            t1_prime * q.pow(orders.ks)
        )));
    }
    Ok(ExtendedUnitData { t1_prime, ts_prime, generator, ts: orders.ts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Plain,
    Extended,
}

/// An element `(a, b)` with `a mod q^s`, `b mod t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FsdElement {
    pub a: u64,
    pub b: u64,
}

impl fmt::Display for FsdElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

/// The group `Z_{q^s} ⋊ ⟨g⟩`.
#[derive(Debug, Clone)]
pub struct FiniteSemidirect {
    pub d: u64,
    pub q: u64,
    pub s: u32,
    pub variant: Variant,
    modulus: u64,
    g: u64,
    t: u64,
    /// order of `g` modulo `q`
    t1: u64,
    /// `t = m q^k`
    m: u64,
    k: u32,
    /// `g^{-b}` for `b < t`
    twist_tab: Vec<u64>,
}

impl FiniteSemidirect {
    /// `Z_{q^s} ⋊ Z_{t_s}` twisted by `d`.
    pub fn plain(d: u64, q: u64, s: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidBase(d as i64));
        }
        multiplicative_order(d, q, s)?;
        let mut f = Self::with_twist(q, s, d % q.pow(s))?;
        f.d = d;
        Ok(f)
    }

    /// `Z_{q^s} ⋊ U_{q^s}` for a prime `p`.
    pub fn extended(p: u64, q: u64, s: u32) -> Result<Self> {
        let data = extended_unit_data(p, q, s)?;
        let mut f = Self::with_twist(q, s, data.generator)?;
        f.d = p;
        f.variant = Variant::Extended;
        Ok(f)
    }

    /// `Z_{q^s} ⋊ ⟨g⟩` for an arbitrary unit `g`.
    pub fn with_twist(q: u64, s: u32, g: u64) -> Result<Self> {
        check_prime_power(q, s)?;
        let modulus = q.pow(s);
        let t = unit_order(g, modulus)?;
        let t1 = unit_order(g % q, q)?;
        let (m, k) = split_q_part(t, q);
        if m != t1 {
            return Err(Error::Certification(format!("prime-to-q part of {t} is not {t1}")));
        }
        let g_inv = mod_inverse(g, modulus).expect("unit");
        let mut twist_tab = Vec::with_capacity(t as usize);
        let mut cur = 1u64;
        for _ in 0..t {
            twist_tab.push(cur);
            cur = mul_mod(cur, g_inv, modulus);
        }
        Ok(Self { d: g, q, s, variant: Variant::Plain, modulus, g, t, t1, m, k, twist_tab })
    }

    pub fn twist_base(&self) -> u64 {
        self.g
    }
    pub fn modulus(&self) -> u64 {
        self.modulus
    }
    pub fn order_t(&self) -> u64 {
        self.t
    }
    /// Order of the twist unit modulo `q`.
    pub fn t1(&self) -> u64 {
        self.t1
    }
    /// `k` in `t = t_1 q^k`.
    pub fn k(&self) -> u32 {
        self.k
    }
    pub fn order(&self) -> u64 {
        self.modulus * self.t
    }

    pub fn identity(&self) -> FsdElement {
        FsdElement { a: 0, b: 0 }
    }

    pub fn validate(&self, e: &FsdElement) -> Result<()> {
        if e.a < self.modulus && e.b < self.t {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{e} is not reduced mod ({}, {})", self.modulus, self.t)))
        }
    }

    /// `g^{-b}`.
    pub fn twist_unit(&self, b: u64) -> u64 {
        self.twist_tab[(b % self.t) as usize]
    }

    pub fn mul(&self, x: &FsdElement, y: &FsdElement) -> FsdElement {
        let (a, b) = self.pair_mul((&x.a, &x.b), (&y.a, &y.b));
        FsdElement { a, b }
    }

    pub fn inv(&self, x: &FsdElement) -> FsdElement {
        let (a, b) = self.pair_inv((&x.a, &x.b));
        FsdElement { a, b }
    }

    pub fn pow(&self, x: &FsdElement, n: i64) -> FsdElement {
        let (a, b) = self.pair_pow((&x.a, &x.b), n);
        FsdElement { a, b }
    }

    /// `t x t^{-1}`.
    pub fn conj(&self, t: &FsdElement, x: &FsdElement) -> FsdElement {
        let (a, b) = self.pair_conj((&t.a, &t.b), (&x.a, &x.b));
        FsdElement { a, b }
    }

    pub fn element_order(&self, x: &FsdElement) -> u64 {
        let e = self.identity();
        let mut cur = *x;
        let mut n = 1;
        while cur != e {
            cur = self.mul(&cur, x);
            n += 1;
        }
        n
    }

    fn index(&self, x: &FsdElement) -> usize {
        (x.a * self.t + x.b) as usize
    }

    fn element(&self, i: usize) -> FsdElement {
        FsdElement { a: i as u64 / self.t, b: i as u64 % self.t }
    }

    pub fn elements(&self) -> impl Iterator<Item = FsdElement> + '_ {
        (0..self.order() as usize).map(|i| self.element(i))
    }

    /// Whether `x` lies in the target subgroup of the given type.
    pub fn in_type(&self, tag: ClassType, x: &FsdElement) -> bool {
        match tag {
            ClassType::Type1 => x.b % self.m == 0,
            ClassType::Type2 => x.b % self.q.pow(self.k) == 0,
            ClassType::Type3 => x.a == 0,
        }
    }

    /// Index of the image of the type in `Z_t` (for type 3, the bound `q^s`).
    pub fn type_index(&self, tag: ClassType) -> u64 {
        match tag {
            ClassType::Type1 => self.m,
            ClassType::Type2 => self.q.pow(self.k),
            ClassType::Type3 => self.modulus,
        }
    }

    pub fn type_subgroup(&self, tag: ClassType) -> Subgroup {
        let gens = match tag {
            ClassType::Type1 => vec![FsdElement { a: 1 % self.modulus, b: 0 }, FsdElement { a: 0, b: self.m % self.t }],
            ClassType::Type2 => {
                vec![FsdElement { a: 1 % self.modulus, b: 0 }, FsdElement { a: 0, b: self.q.pow(self.k) % self.t }]
            }
            ClassType::Type3 => vec![FsdElement { a: 0, b: 1 % self.t }],
        };
        self.closure(&gens)
    }

    /// Subgroup generated by `gens`.
    pub fn closure(&self, gens: &[FsdElement]) -> Subgroup {
        let bits = self.closure_bits(gens);
        self.subgroup_from_bits(&bits, gens.to_vec())
    }

    fn closure_bits(&self, gens: &[FsdElement]) -> Bits {
        let n = self.order() as usize;
        let mut bits = Bits::new(n);
        let e = self.identity();
        bits.insert(self.index(&e));
        let mut stack = vec![e];
        while let Some(x) = stack.pop() {
            for g in gens {
                let y = self.mul(&x, g);
                if bits.insert(self.index(&y)) {
                    stack.push(y);
                }
            }
        }
        bits
    }

    fn subgroup_from_bits(&self, bits: &Bits, generators: Vec<FsdElement>) -> Subgroup {
        Subgroup { elements: bits.iter().map(|i| self.element(i)).collect(), generators }
    }

    /// `c H c^{-1}`.
    pub fn conjugate_subgroup(&self, c: &FsdElement, h: &Subgroup) -> Subgroup {
        let mut elements: Vec<FsdElement> = h.elements.iter().map(|x| self.conj(c, x)).collect();
        elements.sort();
        Subgroup { elements, generators: h.generators.iter().map(|x| self.conj(c, x)).collect() }
    }

    /// The image of an affine map `w ↦ u w + b` (with `u` a unit of `Z[1/p]`
    /// times a unit coprime to `q`) as `(b mod q^s, e)` with `g^{-e} ≡ u`.
    pub fn delta_affine(&self, x: &AffineElement) -> Result<FsdElement> {
        let u = reduce_mod(&x.unit(self.d), self.modulus)?;
        let e = self
            .twist_tab
            .iter()
            .position(|&v| v == u)
            .ok_or_else(|| Error::InvalidParameter(format!("unit {u} is not a power of the twist {}", self.g)))?;
        Ok(FsdElement { a: reduce_mod(&x.b, self.modulus)?, b: e as u64 })
    }

    /// `Δ` on `Γ`; agrees with [`Gamma::delta_n`] on the plain variant.
    pub fn delta_gamma(&self, g: &GammaElement) -> Result<FsdElement> {
        let gm = Gamma::new(self.d)?;
        self.delta_affine(&gm.to_affine(g))
    }
}

impl PairRing for FiniteSemidirect {
    type Coef = u64;
    type Exp = u64;

    fn coef_zero(&self) -> u64 {
        0
    }
    fn coef_one(&self) -> u64 {
        1 % self.modulus
    }
    fn coef_add(&self, a: &u64, b: &u64) -> u64 {
        (a + b) % self.modulus
    }
    fn coef_neg(&self, a: &u64) -> u64 {
        (self.modulus - a % self.modulus) % self.modulus
    }
    fn coef_mul(&self, a: &u64, b: &u64) -> u64 {
        mul_mod(*a, *b, self.modulus)
    }
    fn exp_zero(&self) -> u64 {
        0
    }
    fn exp_add(&self, a: &u64, b: &u64) -> u64 {
        (a + b) % self.t
    }
    fn exp_neg(&self, a: &u64) -> u64 {
        (self.t - a % self.t) % self.t
    }
    fn exp_scale(&self, a: &u64, n: i64) -> u64 {
        ((*a as i128 * n as i128).rem_euclid(self.t as i128)) as u64
    }
    fn twist(&self, b: &u64) -> u64 {
        self.twist_unit(*b)
    }
}

/// Dense bitset over element indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Self(vec![0; n.div_ceil(64)])
    }
    fn insert(&mut self, i: usize) -> bool {
        let (w, m) = (i / 64, 1u64 << (i % 64));
        let fresh = self.0[w] & m == 0;
        self.0[w] |= m;
        fresh
    }
    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] & (1u64 << (i % 64)) != 0
    }
    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
    fn is_subset(&self, other: &Bits) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & !b == 0)
    }
    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &word)| {
            (0..64).filter(move |j| word & (1u64 << j) != 0).map(move |j| w * 64 + j)
        })
    }
}

/// A subgroup as a sorted element list plus a generating set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgroup {
    pub elements: Vec<FsdElement>,
    pub generators: Vec<FsdElement>,
}

impl Subgroup {
    pub fn len(&self) -> usize {
        self.elements.len()
    }
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
    pub fn order(&self) -> u64 {
        self.elements.len() as u64
    }
    pub fn contains(&self, x: &FsdElement) -> bool {
        self.elements.binary_search(x).is_ok()
    }
    pub fn is_subgroup_of(&self, other: &Subgroup) -> bool {
        self.elements.iter().all(|x| other.contains(x))
    }
    /// Checks identity, closure and inverses against `group`.
    pub fn is_valid_in(&self, group: &FiniteSemidirect) -> bool {
        self.contains(&group.identity())
            && group.order() % self.order() == 0
            && self.elements.iter().all(|x| {
                self.contains(&group.inv(x)) && self.elements.iter().all(|y| self.contains(&group.mul(x, y)))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Enumeration {
    Brute,
    Structured,
}

/// Parameters `(i, e, c)` of the subgroup `⟨(q^i, 0), (c, e)⟩` whose
/// intersection with `Z_{q^s}` is `q^i Z_{q^s}` and whose image in `Z_t` is
/// `e Z_t`; `c` runs over residues mod `q^i` with `(c, e)^{t/e} ∈ q^i Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupParams {
    pub i: u32,
    pub e: u64,
    pub c: u64,
}

impl FiniteSemidirect {
    pub fn structured_parameters(&self) -> Vec<SubgroupParams> {
        let divisors: Vec<u64> = (1..=self.t).filter(|e| self.t % e == 0).collect();
        let mut out = Vec::new();
        for i in 0..=self.s {
            let qi = self.q.pow(i);
            for &e in &divisors {
                for c in 0..qi {
                    let x = FsdElement { a: c, b: e % self.t };
                    if self.pow(&x, (self.t / e) as i64).a % qi == 0 {
                        out.push(SubgroupParams { i, e, c });
                    }
                }
            }
        }
        out
    }

    pub fn materialize(&self, p: &SubgroupParams) -> Subgroup {
        let qi = self.q.pow(p.i);
        let lift = FsdElement { a: p.c, b: p.e % self.t };
        let mut elements = Vec::with_capacity(((self.modulus / qi) * (self.t / p.e)) as usize);
        let mut cur = self.identity();
        for _ in 0..self.t / p.e {
            for alpha in (0..self.modulus).step_by(qi as usize) {
                elements.push(FsdElement { a: (alpha + cur.a) % self.modulus, b: cur.b });
            }
            cur = self.mul(&cur, &lift);
        }
        elements.sort();
        let mut generators = Vec::new();
        if p.i < self.s {
            generators.push(FsdElement { a: qi, b: 0 });
        }
        generators.push(lift);
        Subgroup { elements, generators }
    }

    /// All subgroups, sorted by (order, elements).
    pub fn enumerate_subgroups(&self, strategy: Enumeration) -> Result<Vec<Subgroup>> {
        let mut out = match strategy {
            Enumeration::Brute => self.enumerate_brute()?,
            Enumeration::Structured => {
                if self.order() > MATERIALIZE_ORDER_CAP {
                    return Err(Error::OrderCap { order: self.order(), cap: MATERIALIZE_ORDER_CAP });
                }
                self.structured_parameters().iter().map(|p| self.materialize(p)).collect()
            }
        };
        out.sort_by(|x, y| x.order().cmp(&y.order()).then_with(|| x.elements.cmp(&y.elements)));
        Ok(out)
    }

    /// Every subgroup of a metacyclic group is 2-generated, so joins of pairs
    /// of cyclic subgroups exhaust the lattice.
    fn enumerate_brute(&self) -> Result<Vec<Subgroup>> {
        if self.order() > BRUTE_ORDER_CAP {
            return Err(Error::OrderCap { order: self.order(), cap: BRUTE_ORDER_CAP });
        }
        let mut seen: HashSet<Bits> = HashSet::new();
        let mut cyclic: Vec<(FsdElement, Bits)> = Vec::new();
        for x in self.elements() {
            let bits = self.closure_bits(&[x]);
            if seen.insert(bits.clone()) {
                cyclic.push((x, bits));
            }
        }
        let mut out: Vec<Subgroup> =
            cyclic.iter().map(|(x, b)| self.subgroup_from_bits(b, vec![*x])).collect();
        for i in 0..cyclic.len() {
            for j in i + 1..cyclic.len() {
                let (x, bx) = &cyclic[i];
                let (y, by) = &cyclic[j];
                if bx.is_subset(by) || by.is_subset(bx) {
                    continue;
                }
                let bits = self.closure_bits(&[*x, *y]);
                if !seen.contains(&bits) {
                    out.push(self.subgroup_from_bits(&bits, vec![*x, *y]));
                    seen.insert(bits);
                }
            }
        }
        Ok(out)
    }
}

/// Witness `(C, p)` of hyper-elementarity: `C ◁ H` cyclic, `H / C` a
/// `p`-group, `gcd(|C|, p) = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperWitness {
    pub cyclic_generator: FsdElement,
    pub cyclic_order: u64,
    pub prime: u64,
}

fn prime_power_base(n: u64) -> Option<u64> {
    match factorize(n).as_slice() {
        [] => Some(1),
        [(p, _)] => Some(*p),
        _ => None,
    }
}

impl FiniteSemidirect {
    /// Exhaustive search over normal cyclic subgroups, preferring the largest
    /// `C` and then the smallest prime.
    pub fn is_hyper_elementary(&self, h: &Subgroup) -> (bool, Option<HyperWitness>) {
        let order = h.order();
        let mut seen: HashSet<Bits> = HashSet::new();
        let mut best: Option<HyperWitness> = None;
        for x in &h.elements {
            let bits = self.closure_bits(&[*x]);
            let c = bits.count() as u64;
            if best.as_ref().is_some_and(|b| b.cyclic_order >= c) || !seen.insert(bits.clone()) {
                continue;
            }
            let normal = h.generators.iter().all(|g| bits.contains(self.index(&self.conj(g, x))));
            if !normal {
                continue;
            }
            let prime = match prime_power_base(order / c) {
                Some(1) => (2..).find(|p| is_prime(*p) && c % p != 0).expect("primes are infinite"),
                Some(p) if c % p != 0 => p,
                _ => continue,
            };
            best = Some(HyperWitness { cyclic_generator: *x, cyclic_order: c, prime });
        }
        (best.is_some(), best)
    }

    /// The `(x, 0)` with `(x,0)(a,b)(x,0)^{-1} = (0,b)`.
    pub fn conjugate_to_pure_rotation(&self, e: &FsdElement) -> Result<FsdElement> {
        if e.b % self.t1 == 0 {
            if e.a == 0 {
                return Ok(self.identity());
            }
            return Err(Error::Hypothesis(format!(
                "t_1 = {} divides b = {}, so 1 - d^(-b) is not a unit",
                self.t1, e.b
            )));
        }
        let unit = self.coef_add(&1, &self.coef_neg(&self.twist_unit(e.b)));
        let inv = mod_inverse(unit, self.modulus).expect("unit");
        Ok(FsdElement { a: self.coef_neg(&mul_mod(inv, e.a, self.modulus)), b: 0 })
    }

    /// Generator of `H` if `H` is cyclic.
    pub fn cyclic_generator(&self, h: &Subgroup) -> Option<FsdElement> {
        h.elements.iter().copied().find(|x| self.element_order(x) == h.order())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassType {
    Type1,
    Type2,
    Type3,
}

impl fmt::Display for ClassType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ClassType::Type1 => "type1",
            ClassType::Type2 => "type2",
            ClassType::Type3 => "type3",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassificationResult {
    pub type_tag: ClassType,
    pub conjugator: FsdElement,
    /// Generators of the target subgroup.
    pub target: Vec<FsdElement>,
    /// Which case branch produced the conjugator.
    pub branch: String,
    /// For the extended variant: the conjugation applies to `H ∩ (Z ⋊ Z_{t_s})`
    /// in types 1 and 2.
    pub index_two_part: bool,
    pub verified: bool,
    /// Set when the literal branch failed and a search found the conjugator.
    pub deviation: Option<String>,
}

impl FiniteSemidirect {
    fn target_generators(&self, tag: ClassType) -> Vec<FsdElement> {
        self.type_subgroup(tag).generators
    }

    fn conjugates_into(&self, c: &FsdElement, h: &Subgroup, tag: ClassType) -> bool {
        h.elements.iter().all(|x| self.in_type(tag, &self.conj(c, x)))
    }

    /// The branch for a generator `(0, b)` of `C` after conjugation by `c0`.
    fn rotation_branch(&self, h: &Subgroup, c0: FsdElement) -> Option<(ClassType, FsdElement, &'static str)> {
        let hc = self.conjugate_subgroup(&c0, h);
        if hc.elements.iter().all(|x| x.a == 0) {
            return Some((ClassType::Type3, c0, "C = ⟨(0,b)⟩ and H ⊆ {0}⋊Z_t"));
        }
        let gen = self.cyclic_generator(&hc)?;
        if gen.b % self.t1 != 0 {
            let x = self.conjugate_to_pure_rotation(&gen).ok()?;
            Some((ClassType::Type3, self.mul(&x, &c0), "H cyclic, t_1 ∤ b': rotate generator"))
        } else {
            Some((ClassType::Type1, c0, "H cyclic, t_1 | b'"))
        }
    }

    /// The case analysis on a witness `(C, p)`.
    fn literal_branch(&self, h: &Subgroup, w: &HyperWitness) -> Option<(ClassType, FsdElement, &'static str)> {
        let id = self.identity();
        if w.cyclic_order == 1 {
            if w.prime == self.q {
                return Some((ClassType::Type1, id, "q-group inside the normal Sylow q-subgroup"));
            }
            let gen = self.cyclic_generator(h)?;
            let x = self.conjugate_to_pure_rotation(&gen).ok()?;
            return Some((ClassType::Type3, x, "p-group with p ≠ q: rotate generator"));
        }
        let FsdElement { a, b } = w.cyclic_generator;
        if b == 0 {
            return Some((ClassType::Type2, id, "C ⊆ Z_{q^s}: p-part lies in Z_{t_1}"));
        }
        if a == 0 {
            return self.rotation_branch(h, id);
        }
        if b % self.t1 != 0 {
            let x = self.conjugate_to_pure_rotation(&w.cyclic_generator).ok()?;
            return self.rotation_branch(h, x);
        }
        Some((ClassType::Type1, id, "C a q-group, trivial p-part"))
    }

    fn search_conjugator(&self, h: &Subgroup) -> Option<(ClassType, FsdElement)> {
        for tag in [ClassType::Type1, ClassType::Type2, ClassType::Type3] {
            for c in self.elements() {
                if self.conjugates_into(&c, h, tag) {
                    return Some((tag, c));
                }
            }
        }
        None
    }

    /// Classifies a hyper-elementary subgroup into type 1, 2 or 3.
    pub fn classify(&self, h: &Subgroup) -> Result<ClassificationResult> {
        match self.variant {
            Variant::Plain => self.classify_plain(h),
            Variant::Extended => self.classify_extended(h),
        }
    }

    fn classify_plain(&self, h: &Subgroup) -> Result<ClassificationResult> {
        let (ok, witness) = self.is_hyper_elementary(h);
        let witness = witness.filter(|_| ok).ok_or_else(|| {
            Error::Hypothesis(format!("subgroup of order {} is not hyper-elementary", h.order()))
        })?;
        let literal = self.literal_branch(h, &witness);
        if let Some((tag, c, branch)) = literal {
            if self.conjugates_into(&c, h, tag) {
                return Ok(ClassificationResult {
                    type_tag: tag,
                    conjugator: c,
                    target: self.target_generators(tag),
                    branch: branch.into(),
                    index_two_part: false,
                    verified: true,
                    deviation: None,
                });
            }
        }
        let reason = match literal {
            Some((tag, c, branch)) => format!("branch '{branch}' gave {c} into {tag}, which fails"),
            None => "no branch of the case analysis applies".to_string(),
        };
        let (tag, c) = self
            .search_conjugator(h)
            .ok_or_else(|| Error::Hypothesis(format!("order-{} subgroup fits no type: {reason}", h.order())))?;
        Ok(ClassificationResult {
            type_tag: tag,
            conjugator: c,
            target: self.target_generators(tag),
            branch: "exhaustive search".into(),
            index_two_part: false,
            verified: true,
            deviation: Some(reason),
        })
    }

    /// The index-two subgroup `Z_{q^s} ⋊ Z_{t_s}` as a plain group in its own
    /// right, with the ratio `r = t'_s / t_s` used to embed exponents.
    fn plain_part(&self) -> Result<(FiniteSemidirect, u64)> {
        let ts = multiplicative_order(self.d, self.q, self.s)?.ts;
        let r = self.t / ts;
        let sub = FiniteSemidirect::with_twist(self.q, self.s, pow_mod(self.g, r, self.modulus))?;
        Ok((sub, r))
    }

    fn classify_extended(&self, h: &Subgroup) -> Result<ClassificationResult> {
        let (sub, r) = self.plain_part()?;
        let mut inner: Vec<FsdElement> =
            h.elements.iter().filter(|x| x.b % r == 0).map(|x| FsdElement { a: x.a, b: x.b / r }).collect();
        inner.sort();
        let gens = inner.clone();
        let h_inner = sub.closure(&gens);
        if h_inner.elements != inner {
            return Err(Error::Certification("H ∩ (Z ⋊ Z_{t_s}) is not a subgroup".into()));
        }
        // shrink the generating set so normality checks stay cheap
        let h_inner = Subgroup { generators: minimal_generators(&sub, &h_inner), ..h_inner };
        let inner_result = sub.classify_plain(&h_inner)?;
        let lift = |e: FsdElement| FsdElement { a: e.a, b: e.b * r };
        let c0 = lift(inner_result.conjugator);
        if inner_result.type_tag != ClassType::Type3 {
            let target = inner_result.target.iter().copied().map(lift).collect();
            let verified = h_inner
                .elements
                .iter()
                .all(|x| sub.in_type(inner_result.type_tag, &sub.conj(&inner_result.conjugator, x)));
            return Ok(ClassificationResult {
                target,
                conjugator: c0,
                index_two_part: true,
                verified,
                branch: format!("index-two part: {}", inner_result.branch),
                ..inner_result
            });
        }
        // H' rotates into {0} ⋊ Z_{t_s}; then H is cyclic
        let hc = self.conjugate_subgroup(&c0, h);
        let literal = self.cyclic_generator(&hc).and_then(|gen| {
            if gen.a == 0 {
                Some(c0)
            } else if gen.b % self.t1 != 0 {
                self.conjugate_to_pure_rotation(&gen).ok().map(|x| self.mul(&x, &c0))
            } else {
                None
            }
        });
        let (c, deviation) = match literal.filter(|c| self.conjugates_into(c, h, ClassType::Type3)) {
            Some(c) => (c, inner_result.deviation),
            None => {
                let found = self
                    .elements()
                    .find(|c| self.conjugates_into(c, h, ClassType::Type3))
                    .ok_or_else(|| Error::Hypothesis("H' is of type 3 but H does not rotate".into()))?;
                (found, Some("type-3 lift required a conjugator search".to_string()))
            }
        };
        Ok(ClassificationResult {
            type_tag: ClassType::Type3,
            conjugator: c,
            target: self.target_generators(ClassType::Type3),
            branch: "index-two part of type 3, H cyclic: rotate generator".into(),
            index_two_part: false,
            verified: true,
            deviation,
        })
    }

    /// `[Z_t : π(H)]`.
    pub fn projection_index(&self, h: &Subgroup) -> u64 {
        let image: HashSet<u64> = h.elements.iter().map(|x| x.b).collect();
        self.t / image.len() as u64
    }
}

/// Generators `(q^i, 0)` of `H ∩ Z_{q^s}` and a lift `(c, e)` of a generator of
/// `π(H)`; every subgroup of a metacyclic group is generated this way.
fn minimal_generators(group: &FiniteSemidirect, h: &Subgroup) -> Vec<FsdElement> {
    let mut gens = Vec::new();
    if let Some(a) = h.elements.iter().filter(|x| x.b == 0 && x.a != 0).map(|x| x.a).min() {
        gens.push(FsdElement { a, b: 0 });
    }
    if let Some(lift) = h.elements.iter().filter(|x| x.b != 0).min_by_key(|x| x.b) {
        gens.push(*lift);
    }
    debug_assert_eq!(group.closure(&gens).elements, h.elements);
    gens
}

/// JSON record of one subgroup in a classification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubgroupRecord {
    pub order: u64,
    pub generators: Vec<FsdElement>,
    pub hyper_elementary: bool,
    #[serde(rename = "type")]
    pub type_tag: Option<ClassType>,
    pub conjugator: Option<FsdElement>,
    pub projection_index: u64,
    pub deviation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassificationSummary {
    pub group_order: u64,
    pub subgroups: usize,
    pub hyper_elementary: usize,
    pub classified: usize,
    pub verified: usize,
    pub deviations: usize,
    pub by_type: BTreeMap<String, usize>,
    pub records: Vec<SubgroupRecord>,
}

impl FiniteSemidirect {
    pub fn classification_table(&self, strategy: Enumeration) -> Result<ClassificationSummary> {
        let subgroups = self.enumerate_subgroups(strategy)?;
        let mut records = Vec::with_capacity(subgroups.len());
        let mut by_type: BTreeMap<String, usize> = BTreeMap::new();
        let (mut he, mut classified, mut verified, mut deviations) = (0, 0, 0, 0);
        for h in &subgroups {
            let (is_he, _) = self.is_hyper_elementary(h);
            let mut rec = SubgroupRecord {
                order: h.order(),
                generators: h.generators.clone(),
                hyper_elementary: is_he,
                type_tag: None,
                conjugator: None,
                projection_index: self.projection_index(h),
                deviation: None,
            };
            if is_he {
                he += 1;
                if let Ok(res) = self.classify(h) {
                    classified += 1;
                    verified += res.verified as usize;
                    deviations += res.deviation.is_some() as usize;
                    *by_type.entry(res.type_tag.to_string()).or_default() += 1;
                    rec.type_tag = Some(res.type_tag);
                    rec.conjugator = Some(res.conjugator);
                    rec.deviation = res.deviation;
                }
            }
            records.push(rec);
        }
        Ok(ClassificationSummary {
            group_order: self.order(),
            subgroups: subgroups.len(),
            hyper_elementary: he,
            classified,
            verified,
            deviations,
            by_type,
            records,
        })
    }
}

/// Outcome of the index-or-rotation dichotomy for one subgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexCase {
    pub order: u64,
    pub type_tag: ClassType,
    /// `[Z_t : π(cHc^{-1})]`.
    pub index: u64,
    /// The index guaranteed by the type (`t_1`, `q^k`, or the bound `q^s`).
    pub type_index: u64,
    pub index_matches_type: bool,
    pub case1: bool,
    pub case2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DichotomyReport {
    pub n: u64,
    pub audit_mode: bool,
    pub checked: usize,
    pub satisfied: usize,
    pub index_mismatches: usize,
    pub full_group_hyper_elementary: bool,
    pub cases: Vec<IndexCase>,
    pub pass: bool,
}

impl FiniteSemidirect {
    /// Every hyper-elementary subgroup, after conjugation, has
    /// `[Z_t : π(H)] ≥ n` or lies in `{0} ⋊ Z_t` with `q^s ≥ n`.
    ///
    /// The full claim needs `q > d^n` and `s > q`; otherwise the check runs in
    /// audit mode and only reports.
    pub fn index_dichotomy_check(&self, n: u64) -> Result<DichotomyReport> {
        let full = (self.q as f64) > (self.d as f64).powf(n as f64) && (self.s as u64) > self.q;
        let subgroups = if self.order() <= BRUTE_ORDER_CAP {
            self.enumerate_subgroups(Enumeration::Brute)?
        } else {
            self.enumerate_subgroups(Enumeration::Structured)?
        };
        let mut cases = Vec::new();
        let mut full_group_he = false;
        for h in &subgroups {
            if !self.is_hyper_elementary(h).0 {
                continue;
            }
            full_group_he |= h.order() == self.order();
            let res = self.classify(h)?;
            let conj = self.conjugate_subgroup(&res.conjugator, h);
            let index = self.projection_index(&conj);
            let type_index = self.type_index(res.type_tag);
            let index_matches_type = match res.type_tag {
                ClassType::Type3 => conj.elements.iter().all(|x| x.a == 0),
                _ if res.index_two_part => true,
                _ => index % type_index == 0,
            };
            cases.push(IndexCase {
                order: h.order(),
                type_tag: res.type_tag,
                index,
                type_index,
                index_matches_type,
                case1: index >= n,
                case2: res.type_tag == ClassType::Type3 && self.modulus >= n,
            });
        }
        let satisfied = cases.iter().filter(|c| c.case1 || c.case2).count();
        let index_mismatches = cases.iter().filter(|c| !c.index_matches_type).count();
        let pass = index_mismatches == 0 && (!full || satisfied == cases.len());
        Ok(DichotomyReport {
            n,
            audit_mode: !full,
            checked: cases.len(),
            satisfied,
            index_mismatches,
            full_group_hyper_elementary: full_group_he,
            cases,
            pass,
        })
    }

    /// `Δ(g) ∈ H`.
    pub fn hbar_membership(&self, g: &GammaElement, h: &Subgroup) -> Result<bool> {
        Ok(h.contains(&self.delta_gamma(g)?))
    }
}

/// Report of the case-1 contraction estimate for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Case1Report {
    pub delta_k: u64,
    pub displacement: u64,
    pub displacement_bound_holds: bool,
    pub edge_length: u64,
    pub l1_distance: f64,
    pub contraction_applies: bool,
    pub contraction_holds: bool,
}

/// Barycentric coordinates of `x ∈ ℝ` on the line subdivided at multiples of
/// `m`: `(left vertex, weight on left, weight on right)`.
fn line_barycentric(x: i64, m: u64) -> (i64, f64, f64) {
    let v = x.div_euclid(m as i64);
    let frac = x.rem_euclid(m as i64) as f64 / m as f64;
    (v, 1.0 - frac, frac)
}

/// `ℓ¹` distance between two points of the subdivided line.
pub fn line_l1_distance(x: i64, y: i64, m: u64) -> f64 {
    let (vx, lx, rx) = line_barycentric(x, m);
    let (vy, ly, ry) = line_barycentric(y, m);
    let mut weights: HashMap<i64, f64> = HashMap::new();
    *weights.entry(vx).or_default() += lx;
    *weights.entry(vx + 1).or_default() += rx;
    *weights.entry(vy).or_default() -= ly;
    *weights.entry(vy + 1).or_default() -= ry;
    weights.values().map(|w| w.abs()).sum()
}

/// `f_H(x, k) = k` is contracting: `|k_1 - k_2|` is bounded by the
/// displacement of `P_0` under `h^{-1} g`, and with edge length `m ≥ 4n²`
/// pairs with displacement below `n` land within `1/n` in `ℓ¹`.
pub fn case1_contraction_check(
    g: &GammaElement,
    h: &GammaElement,
    d: u64,
    n: u64,
    edge_length: u64,
) -> Result<Case1Report> {
    let gm = Gamma::new(d)?;
    gm.validate(g)?;
    gm.validate(h)?;
    let moved = act(&gm.to_affine(&gm.mul(&gm.inv(h), g)), &TreeVertex::p(0), d);
    let displacement = tree_distance(&moved, &TreeVertex::p(0), d);
    let delta_k = g.k.abs_diff(h.k);
    let l1 = line_l1_distance(g.k, h.k, edge_length);
    let applies = displacement < n;
    Ok(Case1Report {
        delta_k,
        displacement,
        displacement_bound_holds: delta_k <= displacement,
        edge_length,
        l1_distance: l1,
        contraction_applies: applies,
        contraction_holds: !applies || l1 < 1.0 / n as f64,
    })
}

/// `F_{q^s}` = the action of `diag(q^s, 1)` intertwines `g` and `φ(g)`: checks
/// the matrix identity and the identity on the given sample points.
pub fn fqs_semi_equivariance_check(
    g: &GammaElement,
    qs: u64,
    d: u64,
    samples: &[(TreeVertex, crate::arith::Rational)],
) -> Result<bool> {
    use crate::group::mat_mul;
    let gm = Gamma::new(d)?;
    if qs.gcd(&d) != 1 {
        return Err(Error::NotCoprime { d, q: qs });
    }
    let f = AffineElement::from_unit(&crate::arith::int(qs as i64), crate::arith::int(0), d)?;
    let phi_g = gm.phi_embed(g, qs);
    let lhs = mat_mul(&f.to_matrix(d), &gm.to_matrix(g));
    let rhs = mat_mul(&gm.to_matrix(&phi_g), &f.to_matrix(d));
    if lhs != rhs {
        return Ok(false);
    }
    let (ga, pa) = (gm.to_affine(g), gm.to_affine(&phi_g));
    Ok(samples.iter().all(|(z, w)| {
        let left = (act(&f, &act(&ga, z, d), d), f.act_on_real(&ga.act_on_real(w, d), d));
        let right = (act(&pa, &act(&f, z, d), d), pa.act_on_real(&f.act_on_real(w, d), d));
        left == right
    }))
}
