//! Elements of `Γ = Z[1/d] ⋊ Z`, of the affine group `G_d`, and the maps
//! `φ` and `Δ_n` between them and their finite quotients.
//!
//! The pair formulas
//!
//! ```text
//! (a,b)(a',b')        = (a + d^{-b} a', b + b')
//! (a,b)^n             = ((1 + d^{-b} + … + d^{-(n-1)b}) a, n b)
//! (a,b)^{-1}          = (-d^{b} a, -b)
//! (x,y)(a,b)(x,y)^{-1} = ((1 - d^{-b}) x + d^{-y} a, b)
//! ```
//!
//! are written once in [`PairRing`] and shared by `Γ` (rational coefficients)
//! and by the finite groups `Z_{q^s} ⋊ Z_t` (modular coefficients).

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::arith::{self, d_pow, in_z_inv_d, int, Rational};
use crate::error::{Error, Result};
use crate::quotient::{FiniteSemidirect, FsdElement};

/// Coefficient ring plus exponent group for the semidirect pair formulas.
pub trait PairRing {
    type Coef: Clone + PartialEq + fmt::Debug;
    type Exp: Clone + PartialEq + fmt::Debug;

    fn coef_zero(&self) -> Self::Coef;
    fn coef_one(&self) -> Self::Coef;
    fn coef_add(&self, a: &Self::Coef, b: &Self::Coef) -> Self::Coef;
    fn coef_neg(&self, a: &Self::Coef) -> Self::Coef;
    fn coef_mul(&self, a: &Self::Coef, b: &Self::Coef) -> Self::Coef;

    fn exp_zero(&self) -> Self::Exp;
    fn exp_add(&self, a: &Self::Exp, b: &Self::Exp) -> Self::Exp;
    fn exp_neg(&self, a: &Self::Exp) -> Self::Exp;
    fn exp_scale(&self, a: &Self::Exp, n: i64) -> Self::Exp;

    /// `d^{-b}`.
    fn twist(&self, b: &Self::Exp) -> Self::Coef;

    fn pair_mul(
        &self,
        (a, b): (&Self::Coef, &Self::Exp),
        (a2, b2): (&Self::Coef, &Self::Exp),
    ) -> (Self::Coef, Self::Exp) {
        let moved = self.coef_mul(&self.twist(b), a2);
        (self.coef_add(a, &moved), self.exp_add(b, b2))
    }

    fn pair_inv(&self, (a, b): (&Self::Coef, &Self::Exp)) -> (Self::Coef, Self::Exp) {
        let nb = self.exp_neg(b);
        // d^{b} = twist(-b)
        let c = self.coef_mul(&self.twist(&nb), a);
        (self.coef_neg(&c), nb)
    }

    fn pair_pow(&self, (a, b): (&Self::Coef, &Self::Exp), n: i64) -> (Self::Coef, Self::Exp) {
        if n < 0 {
            let (ia, ib) = self.pair_inv((a, b));
            return self.pair_pow((&ia, &ib), -n);
        }
        let step = self.twist(b);
        let mut term = self.coef_one();
        let mut sum = self.coef_zero();
        for _ in 0..n {
            sum = self.coef_add(&sum, &term);
            term = self.coef_mul(&term, &step);
        }
        (self.coef_mul(&sum, a), self.exp_scale(b, n))
    }

    /// `t · g · t^{-1}`.
    fn pair_conj(
        &self,
        (x, y): (&Self::Coef, &Self::Exp),
        (a, b): (&Self::Coef, &Self::Exp),
    ) -> (Self::Coef, Self::Exp) {
        let one_minus = self.coef_add(&self.coef_one(), &self.coef_neg(&self.twist(b)));
        let left = self.coef_mul(&one_minus, x);
        let right = self.coef_mul(&self.twist(y), a);
        (self.coef_add(&left, &right), b.clone())
    }
}

/// An element `(x, k)` of `Z[1/d] ⋊ Z`, acting as `[[d^{-k}, x], [0, 1]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GammaElement {
    #[serde(with = "rational_string")]
    pub x: Rational,
    pub k: i64,
}

impl GammaElement {
    pub fn new(x: Rational, k: i64) -> Self {
        Self { x, k }
    }

    pub fn identity() -> Self {
        Self { x: Rational::zero(), k: 0 }
    }

    /// The generator `a = (1, 0)`.
    pub fn a() -> Self {
        Self::new(int(1), 0)
    }

    /// The stable letter `b = (0, -1)`, acting as `diag(d, 1)`, so that
    /// `b a b^{-1} = a^d`.
    pub fn b() -> Self {
        Self::new(Rational::zero(), -1)
    }
}

impl fmt::Display for GammaElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.k)
    }
}

pub type Mat2 = [[Rational; 2]; 2];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let e = |i: usize, j: usize| &a[i][0] * &b[0][j] + &a[i][1] * &b[1][j];
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

pub fn mat_identity() -> Mat2 {
    [[int(1), int(0)], [int(0), int(1)]]
}

/// `Γ = Z[1/d] ⋊ Z` for a fixed base `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gamma {
    d: u64,
}

impl PairRing for Gamma {
    type Coef = Rational;
    type Exp = i64;

    fn coef_zero(&self) -> Rational {
        Rational::zero()
    }
    fn coef_one(&self) -> Rational {
        Rational::one()
    }
    fn coef_add(&self, a: &Rational, b: &Rational) -> Rational {
        a + b
    }
    fn coef_neg(&self, a: &Rational) -> Rational {
        -a
    }
    fn coef_mul(&self, a: &Rational, b: &Rational) -> Rational {
        a * b
    }
    fn exp_zero(&self) -> i64 {
        0
    }
    fn exp_add(&self, a: &i64, b: &i64) -> i64 {
        a + b
    }
    fn exp_neg(&self, a: &i64) -> i64 {
        -a
    }
    fn exp_scale(&self, a: &i64, n: i64) -> i64 {
        a * n
    }
    fn twist(&self, b: &i64) -> Rational {
        d_pow(self.d, -b)
    }
}

impl Gamma {
    pub fn new(d: u64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidBase(d as i64));
        }
        Ok(Self { d })
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    /// Checks the `Z[1/d]` condition on `x`.
    pub fn validate(&self, g: &GammaElement) -> Result<()> {
        if in_z_inv_d(&g.x, self.d) {
            Ok(())
        } else {
            Err(Error::NotInRing(g.x.to_string(), self.d))
        }
    }

    pub fn mul(&self, g: &GammaElement, h: &GammaElement) -> GammaElement {
        let (x, k) = self.pair_mul((&g.x, &g.k), (&h.x, &h.k));
        GammaElement { x, k }
    }

    pub fn inv(&self, g: &GammaElement) -> GammaElement {
        let (x, k) = self.pair_inv((&g.x, &g.k));
        GammaElement { x, k }
    }

    pub fn pow(&self, g: &GammaElement, n: i64) -> GammaElement {
        let (x, k) = self.pair_pow((&g.x, &g.k), n);
        GammaElement { x, k }
    }

    /// `t g t^{-1}`.
    pub fn conj(&self, t: &GammaElement, g: &GammaElement) -> GammaElement {
        let (x, k) = self.pair_conj((&t.x, &t.k), (&g.x, &g.k));
        GammaElement { x, k }
    }

    pub fn to_matrix(&self, g: &GammaElement) -> Mat2 {
        [[d_pow(self.d, -g.k), g.x.clone()], [int(0), int(1)]]
    }

    /// Exact check of `M(g h) = M(g) M(h)`.
    pub fn matrix_consistency_check(&self, g: &GammaElement, h: &GammaElement) -> bool {
        self.to_matrix(&self.mul(g, h)) == mat_mul(&self.to_matrix(g), &self.to_matrix(h))
    }

    /// `φ(x, k) = (q^s x, k)`.
    pub fn phi_embed(&self, g: &GammaElement, qs: u64) -> GammaElement {
        GammaElement::new(&g.x * int(qs as i64), g.k)
    }

    pub fn phi_inverse(&self, g: &GammaElement, qs: u64) -> Result<GammaElement> {
        let x = &g.x / int(qs as i64);
        if in_z_inv_d(&x, self.d) {
            Ok(GammaElement::new(x, g.k))
        } else {
            Err(Error::NotInImage(qs))
        }
    }

    /// The quotient map `Γ → Z_{q^s} ⋊ Z_t`, `(x, k) ↦ (x mod q^s, k mod t)`.
    pub fn delta_n(&self, g: &GammaElement, target: &FiniteSemidirect) -> Result<FsdElement> {
        if target.twist_base() != self.d % target.modulus() {
            return Err(Error::InvalidParameter(format!(
                "finite group twists by {} but Γ has d = {}",
                target.twist_base(),
                self.d
            )));
        }
        let a = arith::reduce_mod(&g.x, target.modulus())?;
        let b = g.k.rem_euclid(target.order_t() as i64) as u64;
        Ok(FsdElement { a, b })
    }

    pub fn to_affine(&self, g: &GammaElement) -> AffineElement {
        AffineElement { sign: 1, n: -g.k, s1: 1, s2: 1, b: g.x.clone() }
    }
}

/// An element of `G_d`: the matrix `[[u, b], [0, 1]]` with the unit stored
/// factored as `u = sign · d^n · s1 / s2`, `s1, s2` positive, coprime to `d`
/// and to each other.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffineElement {
    pub sign: i8,
    pub n: i64,
    pub s1: u64,
    pub s2: u64,
    #[serde(with = "rational_string")]
    pub b: Rational,
}

impl AffineElement {
    pub fn identity() -> Self {
        Self { sign: 1, n: 0, s1: 1, s2: 1, b: Rational::zero() }
    }

    /// Translation `w ↦ w + b`.
    pub fn translation(b: Rational) -> Self {
        Self { b, ..Self::identity() }
    }

    /// Pure scaling by `d^n` (a shift along `L_0` by `-n` levels).
    pub fn d_power(n: i64) -> Self {
        Self { n, ..Self::identity() }
    }

    /// Builds an element from an arbitrary nonzero rational unit, pulling every
    /// factor of `d` into the exponent. Fails if the unit is not of the form
    /// `±d^n s1/s2`.
    pub fn from_unit(u: &Rational, b: Rational, d: u64) -> Result<Self> {
        if u.is_zero() {
            return Err(Error::InvalidParameter("unit must be nonzero".into()));
        }
        let sign = if u.is_negative() { -1 } else { 1 };
        let mut num = u.numer().abs();
        let mut den = u.denom().clone();
        let dd = BigInt::from(d);
        let mut n = 0i64;
        loop {
            let (q, r) = num.div_rem(&dd);
            if !r.is_zero() {
                break;
            }
            num = q;
            n += 1;
        }
        loop {
            let (q, r) = den.div_rem(&dd);
            if !r.is_zero() {
                break;
            }
            den = q;
            n -= 1;
        }
        let coprime = |x: &BigInt| x.gcd(&dd).is_one();
        if !coprime(&num) || !coprime(&den) {
            return Err(Error::InvalidParameter(format!(
                "unit {u} is not ±d^n·s1/s2 with s_i coprime to d = {d}"
            )));
        }
        let to_u64 = |x: BigInt| -> Result<u64> {
            u64::try_from(x).map_err(|_| Error::InvalidParameter("unit factor overflows u64".into()))
        };
        Ok(Self { sign, n, s1: to_u64(num)?, s2: to_u64(den)?, b })
    }

    pub fn unit(&self, d: u64) -> Rational {
        Rational::new(BigInt::from(self.sign) * BigInt::from(self.s1), BigInt::from(self.s2))
            * d_pow(d, self.n)
    }

    pub fn validate(&self, d: u64) -> Result<()> {
        let ok = (self.sign == 1 || self.sign == -1)
            && self.s1 > 0
            && self.s2 > 0
            && self.s1.gcd(&d) == 1
            && self.s2.gcd(&d) == 1
            && self.s1.gcd(&self.s2) == 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("malformed affine element {self:?} for d = {d}")))
        }
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Self, d: u64) -> Self {
        let b = self.unit(d) * &other.b + &self.b;
        let (s1, s2) = (self.s1 * other.s1, self.s2 * other.s2);
        let g = s1.gcd(&s2);
        Self { sign: self.sign * other.sign, n: self.n + other.n, s1: s1 / g, s2: s2 / g, b }
    }

    pub fn inv(&self, d: u64) -> Self {
        let inv_unit = Rational::one() / self.unit(d);
        Self { sign: self.sign, n: -self.n, s1: self.s2, s2: self.s1, b: -(inv_unit * &self.b) }
    }

    pub fn to_matrix(&self, d: u64) -> Mat2 {
        [[self.unit(d), self.b.clone()], [int(0), int(1)]]
    }

    /// `w ↦ u w + b`.
    pub fn act_on_real(&self, w: &Rational, d: u64) -> Rational {
        self.unit(d) * w + &self.b
    }

    /// Floating-point version of [`Self::act_on_real`].
    pub fn act_on_real_f64(&self, w: f64, d: u64) -> f64 {
        arith::to_f64(&self.unit(d)) * w + arith::to_f64(&self.b)
    }
}

impl fmt::Display for AffineElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.sign < 0 { "-" } else { "" };
        write!(f, "[{s}d^{}·{}/{}, {}]", self.n, self.s1, self.s2, self.b)
    }
}

pub(crate) mod rational_string {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&x.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(de)?;
        crate::arith::parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::rat;
    use proptest::prelude::*;

    fn g(x: Rational, k: i64) -> GammaElement {
        GammaElement::new(x, k)
    }

    #[test]
    fn multiplication_examples() {
        let gm = Gamma::new(2).unwrap();
        assert_eq!(gm.mul(&g(rat(1, 2), 1), &g(int(1), 0)), g(int(1), 1));
        let h = g(rat(5, 8), -3);
        assert_eq!(gm.mul(&GammaElement::identity(), &h), h);
        assert_eq!(gm.inv(&g(rat(1, 2), 1)), g(int(-1), -1));
    }

    #[test]
    fn product_matches_matrix_oracle() {
        let gm = Gamma::new(2).unwrap();
        let (a, b) = (g(rat(1, 2), 1), g(int(1), 0));
        let m = mat_mul(&gm.to_matrix(&a), &gm.to_matrix(&b));
        assert_eq!(m[0][1], int(1));
        assert_eq!(m[0][0], rat(1, 2));
    }

    #[test]
    fn conjugation_and_powers() {
        let gm = Gamma::new(2).unwrap();
        assert_eq!(gm.conj(&g(int(1), 0), &g(int(0), 1)), g(rat(1, 2), 1));
        assert_eq!(gm.pow(&g(rat(3, 4), 0), 5), g(rat(15, 4), 0));
        let x = g(int(1), 1);
        assert_eq!(gm.pow(&x, 2), g(rat(3, 2), 2));
        assert_eq!(gm.pow(&x, 2), gm.mul(&x, &x));
        assert_eq!(gm.pow(&x, -3), gm.inv(&gm.pow(&x, 3)));
        assert_eq!(gm.pow(&x, 0), GammaElement::identity());
    }

    #[test]
    fn defining_relation_holds() {
        for d in [2u64, 3, 5, 6, 10] {
            let gm = Gamma::new(d).unwrap();
            let (a, b) = (GammaElement::a(), GammaElement::b());
            let lhs = gm.mul(&gm.mul(&b, &a), &gm.inv(&b));
            assert_eq!(lhs, gm.pow(&a, d as i64), "d = {d}");
            // (0, 1) conjugates the other way
            let shift = GammaElement::new(Rational::zero(), 1);
            let rhs = gm.mul(&gm.mul(&gm.inv(&shift), &a), &shift);
            assert_eq!(rhs, gm.pow(&a, d as i64));
        }
    }

    #[test]
    fn matrix_examples() {
        let gm = Gamma::new(3).unwrap();
        assert_eq!(gm.to_matrix(&GammaElement::identity()), mat_identity());
        let m = gm.to_matrix(&g(rat(2, 9), 2));
        assert_eq!(m, [[rat(1, 9), rat(2, 9)], [int(0), int(1)]]);
    }

    #[test]
    fn real_action_examples() {
        let gm = Gamma::new(2).unwrap();
        let e = gm.to_affine(&g(rat(1, 2), 1));
        assert_eq!(e.act_on_real(&int(2), 2), rat(3, 2));
        assert_eq!(AffineElement::identity().act_on_real(&rat(7, 3), 2), rat(7, 3));
        let refl = AffineElement { sign: -1, ..AffineElement::identity() };
        assert_eq!(refl.act_on_real(&int(5), 2), int(-5));
    }

    #[test]
    fn phi_examples() {
        let gm = Gamma::new(2).unwrap();
        let x = g(rat(1, 2), 3);
        let y = gm.phi_embed(&x, 25);
        assert_eq!(y, g(rat(25, 2), 3));
        assert_eq!(gm.phi_inverse(&y, 25).unwrap(), x);
        assert_eq!(gm.phi_inverse(&g(int(1), 0), 25), Err(Error::NotInImage(25)));
        // φ is conjugation by M = diag(q^s, 1)
        let m = [[int(25), int(0)], [int(0), int(1)]];
        let m_inv = [[rat(1, 25), int(0)], [int(0), int(1)]];
        assert_eq!(gm.to_matrix(&y), mat_mul(&mat_mul(&m, &gm.to_matrix(&x)), &m_inv));
    }

    #[test]
    fn delta_examples() {
        let gm = Gamma::new(2).unwrap();
        let f = FiniteSemidirect::plain(2, 5, 1).unwrap();
        assert_eq!(gm.delta_n(&g(rat(1, 2), 3), &f).unwrap(), FsdElement { a: 3, b: 3 });
        assert_eq!(gm.delta_n(&GammaElement::identity(), &f).unwrap(), f.identity());
        assert!(FiniteSemidirect::plain(10, 5, 1).is_err());
    }

    #[test]
    fn affine_from_unit_normalizes() {
        let e = AffineElement::from_unit(&rat(-12, 35), int(0), 2).unwrap();
        assert_eq!((e.sign, e.n, e.s1, e.s2), (-1, 2, 3, 35));
        assert_eq!(e.unit(2), rat(-12, 35));
        assert!(AffineElement::from_unit(&rat(6, 1), int(0), 4).is_err());
    }

    fn gamma_element(d: u64) -> impl Strategy<Value = GammaElement> {
        (-300i64..300, 0u32..6, -6i64..6)
            .prop_map(move |(n, e, k)| g(Rational::new(n.into(), BigInt::from(d).pow(e)), k))
    }

    fn affine_element(d: u64) -> impl Strategy<Value = AffineElement> {
        (prop::bool::ANY, -4i64..4, 1u64..40, 1u64..40, -100i64..100, 1i64..30).prop_filter_map(
            "coprime unit",
            move |(neg, n, s1, s2, bn, bd)| {
                if s1.gcd(&d) != 1 || s2.gcd(&d) != 1 {
                    return None;
                }
                let u = Rational::new(BigInt::from(if neg { -1 } else { 1 } * s1 as i64), BigInt::from(s2))
                    * d_pow(d, n);
                AffineElement::from_unit(&u, rat(bn, bd), d).ok()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn group_axioms(a in gamma_element(6), b in gamma_element(6), c in gamma_element(6)) {
            let gm = Gamma::new(6).unwrap();
            prop_assert_eq!(gm.mul(&gm.mul(&a, &b), &c), gm.mul(&a, &gm.mul(&b, &c)));
            prop_assert_eq!(gm.mul(&a, &gm.inv(&a)), GammaElement::identity());
            prop_assert_eq!(gm.mul(&gm.inv(&a), &a), GammaElement::identity());
            prop_assert_eq!(gm.conj(&b, &a), gm.mul(&gm.mul(&b, &a), &gm.inv(&b)));
        }

        #[test]
        fn matrix_map_is_injective_homomorphism(a in gamma_element(2), b in gamma_element(2)) {
            let gm = Gamma::new(2).unwrap();
            prop_assert!(gm.matrix_consistency_check(&a, &b));
            prop_assert_eq!(gm.to_matrix(&a) == gm.to_matrix(&b), a == b);
        }

        #[test]
        fn powers_match_iterated_products(a in gamma_element(3), n in -8i64..8) {
            let gm = Gamma::new(3).unwrap();
            let mut acc = GammaElement::identity();
            let step = if n >= 0 { a.clone() } else { gm.inv(&a) };
            for _ in 0..n.abs() {
                acc = gm.mul(&acc, &step);
            }
            prop_assert_eq!(gm.pow(&a, n), acc);
        }

        #[test]
        fn real_action_is_group_action(a in affine_element(6), b in affine_element(6), w in -50i64..50) {
            let w = int(w);
            let lhs = a.mul(&b, 6).act_on_real(&w, 6);
            let rhs = a.act_on_real(&b.act_on_real(&w, 6), 6);
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(a.mul(&a.inv(6), 6), AffineElement::identity());
        }

        #[test]
        fn affine_matrix_homomorphism(a in affine_element(10), b in affine_element(10)) {
            prop_assert_eq!(a.mul(&b, 10).to_matrix(10), mat_mul(&a.to_matrix(10), &b.to_matrix(10)));
        }

        #[test]
        fn gamma_embeds_in_affine(a in gamma_element(2), b in gamma_element(2)) {
            let gm = Gamma::new(2).unwrap();
            prop_assert_eq!(gm.to_affine(&gm.mul(&a, &b)), gm.to_affine(&a).mul(&gm.to_affine(&b), 2));
        }

        #[test]
        fn phi_is_monomorphism(a in gamma_element(2), b in gamma_element(2)) {
            let gm = Gamma::new(2).unwrap();
            prop_assert_eq!(gm.phi_embed(&gm.mul(&a, &b), 25), gm.mul(&gm.phi_embed(&a, 25), &gm.phi_embed(&b, 25)));
            prop_assert_eq!(gm.phi_inverse(&gm.phi_embed(&a, 25), 25).unwrap(), a);
        }

        #[test]
        fn delta_is_homomorphism(a in gamma_element(2), b in gamma_element(2)) {
            let gm = Gamma::new(2).unwrap();
            let f = FiniteSemidirect::plain(2, 5, 2).unwrap();
            let lhs = gm.delta_n(&gm.mul(&a, &b), &f).unwrap();
            let rhs = f.mul(&gm.delta_n(&a, &f).unwrap(), &gm.delta_n(&b, &f).unwrap());
            prop_assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn delta_is_surjective_on_small_quotients() {
        for (d, q, s) in [(2u64, 5u64, 1u32), (2, 7, 1), (3, 7, 1), (2, 5, 2)] {
            let gm = Gamma::new(d).unwrap();
            let f = FiniteSemidirect::plain(d, q, s).unwrap();
            let gens = [
                gm.delta_n(&GammaElement::a(), &f).unwrap(),
                gm.delta_n(&GammaElement::b(), &f).unwrap(),
            ];
            assert_eq!(f.closure(&gens).len() as u64, f.order(), "d={d} q={q} s={s}");
        }
    }
}
