//! Sparse bivariate polynomials in (s, t) and the integral operator that
//! drives the kernel iteration.
//!
//! The operator is
//!
//! ```text
//! (P f)(s,t) = 1/3 ∫_0^t ∫_0^s ∫_0^ω (-f_ttt + 3 f_stt - f_t - λ f)(ξ, η) dξ dω dη
//! ```
//!
//! and it is split into four pieces `Pm2 + Pm1 + P0 + P1`, each of which maps
//! a monomial `s^m t^k` to a single monomial (or zero). Because the whole
//! series is built from those images, every coefficient can be produced in
//! closed form without any quadrature.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Coefficients with magnitude below this are dropped from `f64` maps.
pub const DROP_THRESHOLD: f64 = 1e-300;

/// Coefficient ring used by [`Poly2`].
///
/// Implemented for `f64` (the working precision) and for [`BigRational`],
/// which reproduces the series exactly for rational λ.
pub trait Coeff:
    Clone + Debug + PartialEq + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    /// True when the coefficient should not be stored.
    fn negligible(&self) -> bool;
    fn to_f64(&self) -> f64;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn negligible(&self) -> bool {
        self.abs() < DROP_THRESHOLD
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Coeff for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(num.into(), den.into())
    }
    fn negligible(&self) -> bool {
        self.is_zero()
    }
    fn to_f64(&self) -> f64 {
        // numerator and denominator can each overflow f64 while their ratio
        // does not, so rescale by a power of two before converting
        if self.is_zero() {
            return 0.0;
        }
        let r = self.abs();
        let sign = if self.is_negative() { -1.0 } else { 1.0 };
        let num_bits = r.numer().bits() as i64;
        let den_bits = r.denom().bits() as i64;
        let shift = num_bits - den_bits;
        let scaled = if shift > 53 {
            r.clone() / BigRational::from_integer(num_bigint::BigInt::from(1) << (shift - 53) as usize)
        } else {
            r.clone() * BigRational::from_integer(num_bigint::BigInt::from(1) << (53 - shift) as usize)
        };
        let q = scaled.round().to_integer().to_f64().unwrap_or(f64::NAN);
        sign * q * 2f64.powi((shift - 53) as i32)
    }
}

/// Exponent pair keying a term `s^s_exp t^t_exp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub s_exp: u32,
    pub t_exp: u32,
}

impl Monomial {
    pub const fn new(s_exp: u32, t_exp: u32) -> Self {
        Self { s_exp, t_exp }
    }

    pub fn degree(&self) -> u32 {
        self.s_exp + self.t_exp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    S,
    T,
}

/// The four pieces of the integral operator, named by how they shift the
/// exponent of `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    /// `-1/3 ∫∫∫ f_ttt`: s^m t^k -> s^{m+2} t^{k-2}
    Pm2,
    /// `∫∫∫ f_stt`: s^m t^k -> s^{m+1} t^{k-1}
    Pm1,
    /// `-1/3 ∫∫∫ f_t`: s^m t^k -> s^{m+2} t^k
    P0,
    /// `-λ/3 ∫∫∫ f`: s^m t^k -> s^{m+2} t^{k+1}
    P1,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::Pm2, Component::Pm1, Component::P0, Component::P1];
}

/// Sparse polynomial in (s, t); terms are kept sorted by (s_exp, t_exp).
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2<C = f64> {
    terms: BTreeMap<Monomial, C>,
}

impl<C: Coeff> Default for Poly2<C> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<C: Coeff> Poly2<C> {
    pub fn zero() -> Self {
        Self { terms: BTreeMap::new() }
    }

    pub fn monomial(s_exp: u32, t_exp: u32, coeff: C) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::new(s_exp, t_exp), coeff);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, C)>>(terms: I) -> Self {
        let mut p = Self::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    /// Adds `coeff * m`, merging with an existing term and dropping zeros.
    pub fn add_term(&mut self, m: Monomial, coeff: C) {
        if coeff.negligible() {
            return;
        }
        match self.terms.remove(&m) {
            Some(old) => {
                let sum = old + coeff;
                if !sum.negligible() {
                    self.terms.insert(m, sum);
                }
            }
            None => {
                self.terms.insert(m, coeff);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: Monomial) -> Option<&C> {
        self.terms.get(&m)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &C)> {
        self.terms.iter()
    }

    pub fn scale(&self, k: &C) -> Self {
        Self::from_terms(self.terms.iter().map(|(m, c)| (*m, c.clone() * k.clone())))
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Poly2<D> {
        Poly2::from_terms(self.terms.iter().map(|(m, c)| (*m, f(c))))
    }

    pub fn to_f64(&self) -> Poly2<f64> {
        self.map_coeffs(|c| c.to_f64())
    }

    /// Exact partial derivative of the given order.
    pub fn diff(&self, var: Var, order: u32) -> Self {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            let e = match var {
                Var::S => m.s_exp,
                Var::T => m.t_exp,
            };
            if e < order {
                continue;
            }
            let falling: i64 = (0..order).map(|i| (e - i) as i64).product();
            let nm = match var {
                Var::S => Monomial::new(m.s_exp - order, m.t_exp),
                Var::T => Monomial::new(m.s_exp, m.t_exp - order),
            };
            out.add_term(nm, c.clone() * C::from_ratio(falling, 1));
        }
        out
    }

    /// Image of one monomial (with unit coefficient) under one component.
    ///
    /// Returns `Ok(None)` when the case table forces a zero coefficient.
    pub fn component_image(which: Component, m: Monomial, lambda: &C) -> Result<Option<(Monomial, C)>> {
        if m.s_exp == 0 {
            return Err(Error::Precondition(format!(
                "integral operator applied to s^0 t^{} (s exponent must be >= 1)",
                m.t_exp
            )));
        }
        let mm = m.s_exp as i64;
        let k = m.t_exp as i64;
        let image = match which {
            Component::Pm2 => (k > 2).then(|| {
                (Monomial::new(m.s_exp + 2, m.t_exp - 2), C::from_ratio(-k * (k - 1), 3 * (mm + 1) * (mm + 2)))
            }),
            Component::Pm1 => (k > 1).then(|| (Monomial::new(m.s_exp + 1, m.t_exp - 1), C::from_ratio(k, mm + 1))),
            Component::P0 => {
                (k >= 1).then(|| (Monomial::new(m.s_exp + 2, m.t_exp), C::from_ratio(-1, 3 * (mm + 1) * (mm + 2))))
            }
            Component::P1 => {
                let c = lambda.clone() * C::from_ratio(-1, 3 * (mm + 1) * (mm + 2) * (k + 1));
                (!c.negligible()).then(|| (Monomial::new(m.s_exp + 2, m.t_exp + 1), c))
            }
        };
        Ok(image)
    }

    /// One component applied to a single monomial with unit coefficient.
    pub fn apply_component(which: Component, m: Monomial, lambda: &C) -> Result<Self> {
        Ok(match Self::component_image(which, m, lambda)? {
            Some((nm, c)) => Self::monomial(nm.s_exp, nm.t_exp, c),
            None => Self::zero(),
        })
    }

    /// The full operator `P = Pm2 + Pm1 + P0 + P1`, applied term by term.
    pub fn apply_p(&self, lambda: &C) -> Result<Self> {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            for which in Component::ALL {
                if let Some((nm, k)) = Self::component_image(which, *m, lambda)? {
                    out.add_term(nm, c.clone() * k);
                }
            }
        }
        Ok(out)
    }

    /// `Σ |c| L^(s_exp + t_exp)`, which dominates `sup |p|` on the triangle
    /// `s, t >= 0, s + t <= L` (and on the square `[0, L]^2`).
    pub fn sup_bound(&self, length: f64) -> f64 {
        compensated_sum(self.terms.iter().map(|(m, c)| c.to_f64().abs() * length.powi(m.degree() as i32)))
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        compensated_sum(self.terms.iter().map(|(m, c)| c.to_f64() * s.powi(m.s_exp as i32) * t.powi(m.t_exp as i32)))
    }

    /// Substitutes `t = t0`, giving a polynomial in `s`.
    pub fn restrict_t(&self, t0: f64) -> Poly1 {
        let mut coeffs: Vec<Vec<f64>> = Vec::new();
        for (m, c) in &self.terms {
            let i = m.s_exp as usize;
            if coeffs.len() <= i {
                coeffs.resize(i + 1, Vec::new());
            }
            coeffs[i].push(c.to_f64() * t0.powi(m.t_exp as i32));
        }
        Poly1::new(coeffs.into_iter().map(compensated_sum).collect())
    }

    /// Substitutes `s = s0`, giving a polynomial in `t`.
    pub fn restrict_s(&self, s0: f64) -> Poly1 {
        let mut coeffs: Vec<Vec<f64>> = Vec::new();
        for (m, c) in &self.terms {
            let i = m.t_exp as usize;
            if coeffs.len() <= i {
                coeffs.resize(i + 1, Vec::new());
            }
            coeffs[i].push(c.to_f64() * s0.powi(m.s_exp as i32));
        }
        Poly1::new(coeffs.into_iter().map(compensated_sum).collect())
    }

    /// Substitutes `s = a - t`, giving a polynomial in `t`; `(a - t)^j` is
    /// expanded with exact binomial coefficients.
    pub fn along_antidiagonal(&self, a: f64) -> Poly1 {
        let max_deg = self.terms.keys().map(|m| m.degree()).max().unwrap_or(0) as usize;
        let mut parts: Vec<Vec<f64>> = vec![Vec::new(); max_deg + 1];
        for (m, c) in &self.terms {
            let c = c.to_f64();
            let j = m.s_exp;
            let mut binom = 1.0f64;
            for i in 0..=j {
                // term of (a - t)^j: C(j,i) a^(j-i) (-t)^i
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let v = c * binom * sign * a.powi((j - i) as i32);
                parts[(i + m.t_exp) as usize].push(v);
                binom = binom * (j - i) as f64 / (i + 1) as f64;
            }
        }
        Poly1::new(parts.into_iter().map(compensated_sum).collect())
    }
}

impl<C: Coeff> Add for &Poly2<C> {
    type Output = Poly2<C>;
    fn add(self, rhs: Self) -> Poly2<C> {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(*m, c.clone());
        }
        out
    }
}

impl<C: Coeff> Sub for &Poly2<C> {
    type Output = Poly2<C>;
    fn sub(self, rhs: Self) -> Poly2<C> {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(*m, -c.clone());
        }
        out
    }
}

impl<C: Coeff> Mul for &Poly2<C> {
    type Output = Poly2<C>;
    fn mul(self, rhs: Self) -> Poly2<C> {
        let mut out = Poly2::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(Monomial::new(ma.s_exp + mb.s_exp, ma.t_exp + mb.t_exp), ca.clone() * cb.clone());
            }
        }
        out
    }
}

/// Dense univariate polynomial, `coeffs[i]` multiplies `x^i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly1 {
    coeffs: Vec<f64>,
}

impl Poly1 {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last().is_some_and(|c| *c == 0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly1 {
        Poly1::new(self.coeffs.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect())
    }

    /// `∫_0^L q(x)^2 dx`, integrated term by term.
    pub fn int_sq(&self, length: f64) -> Result<f64> {
        if length.is_nan() || length <= 0.0 {
            return Err(Error::Precondition(format!("integration length must be positive, got {length}")));
        }
        let n = self.coeffs.len();
        let mut acc = crate::numeric::CompensatedSum::new();
        for i in 0..n {
            for j in 0..n {
                let p = (i + j + 1) as i32;
                acc.add(self.coeffs[i] * self.coeffs[j] * length.powi(p) / p as f64);
            }
        }
        Ok(acc.value())
    }
}
