//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Monomials are ordered graded-lexicographically: total degree first, ties
//! broken variable-by-variable in ascending byte order of the variable name,
//! where the higher exponent at the first differing variable wins. Uppercase
//! names sort before lowercase ones (plain byte order).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Product of variable powers; exponents strictly positive, names sorted.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Monomial(Vec<(String, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(name: &str) -> Self {
        Monomial(vec![(name.to_string(), 1)])
    }

    /// Builds from (name, exponent) pairs; drops zero exponents, merges repeats.
    pub fn from_pairs<I: IntoIterator<Item = (String, u32)>>(pairs: I) -> Self {
        let mut map: BTreeMap<String, u32> = BTreeMap::new();
        for (v, e) in pairs {
            if e > 0 {
                *map.entry(v).or_insert(0) += e;
            }
        }
        Monomial(map.into_iter().collect())
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| *e).sum()
    }

    pub fn exponent(&self, var: &str) -> u32 {
        self.0
            .iter()
            .find(|(v, _)| v == var)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(v, _)| v.as_str())
    }

    pub fn pairs(&self) -> &[(String, u32)] {
        &self.0
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut map: BTreeMap<&str, u32> = BTreeMap::new();
        for (v, e) in self.0.iter().chain(other.0.iter()) {
            *map.entry(v.as_str()).or_insert(0) += e;
        }
        Monomial(map.into_iter().map(|(v, e)| (v.to_string(), e)).collect())
    }

    /// self / other if other divides self.
    pub fn try_div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::new();
        for (v, e) in &self.0 {
            let oe = other.exponent(v);
            if oe > *e {
                return None;
            }
            if oe < *e {
                out.push((v.clone(), e - oe));
            }
        }
        // Every var of `other` must appear in self with enough multiplicity.
        for (v, e) in &other.0 {
            if self.exponent(v) < *e {
                return None;
            }
        }
        Some(Monomial(out))
    }

    pub fn eval(&self, env: &BTreeMap<String, BigInt>) -> BigInt {
        let mut acc = BigInt::one();
        for (v, e) in &self.0 {
            let base = env.get(v).cloned().unwrap_or_else(BigInt::zero);
            acc *= base.pow(*e);
        }
        acc
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        // Lexicographic: walk the union of variables in ascending name order;
        // at the first mismatch the larger exponent makes the larger monomial.
        let mut a = self.0.iter().peekable();
        let mut b = other.0.iter().peekable();
        loop {
            match (a.peek(), b.peek()) {
                (None, None) => return Ordering::Equal,
                (Some((av, ae)), Some((bv, be))) => match av.cmp(bv) {
                    Ordering::Less => {
                        // self has a positive power at an earlier var: self is larger.
                        let _ = ae;
                        return Ordering::Greater;
                    }
                    Ordering::Greater => return Ordering::Less,
                    Ordering::Equal => {
                        match ae.cmp(be) {
                            Ordering::Equal => {
                                a.next();
                                b.next();
                            }
                            ord => return ord,
                        }
                    }
                },
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for (v, e) in &self.0 {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if *e == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{v}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Sparse polynomial with rational coefficients; no zero entries stored.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn constant_int(c: i64) -> Self {
        Poly::constant(BigRational::from_integer(BigInt::from(c)))
    }

    pub fn var(name: &str) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::var(name), BigRational::one());
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, BigRational)>>(it: I) -> Self {
        let mut p = Poly::zero();
        for (m, c) in it {
            p.add_term(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    /// Graded-lex greatest monomial and its coefficient.
    pub fn leading(&self) -> Option<(&Monomial, &BigRational)> {
        self.terms.iter().next_back()
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for m in self.terms.keys() {
            for v in m.vars() {
                out.insert(v.to_string());
            }
        }
        out
    }

    pub fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, k: &BigRational) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c * k))
                .collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    /// self - k * m * other; the workhorse of reduction loops.
    pub fn sub_scaled_shift(&mut self, k: &BigRational, m: &Monomial, other: &Poly) {
        for (om, oc) in &other.terms {
            self.add_term(m.mul(om), -(k * oc));
        }
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Poly {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(mm, c)| (m.mul(mm), c.clone()))
                .collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut acc = Poly::constant(BigRational::one());
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn eval(&self, env: &BTreeMap<String, BigInt>) -> BigRational {
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            acc += c * BigRational::from_integer(m.eval(env));
        }
        acc
    }

    /// Views the polynomial as univariate in `var` with poly coefficients.
    pub fn by_powers_of(&self, var: &str) -> BTreeMap<u32, Poly> {
        let mut out: BTreeMap<u32, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let e = m.exponent(var);
            let rest = Monomial(
                m.0.iter()
                    .filter(|(v, _)| v != var)
                    .cloned()
                    .collect::<Vec<_>>(),
            );
            out.entry(e).or_insert_with(Poly::zero).add_term(rest, c.clone());
        }
        out.retain(|_, p| !p.is_zero());
        out
    }

    /// Exact division by (var - g) where g does not involve `var`.
    /// Returns the quotient iff the remainder is zero.
    pub fn div_exact_by_monic_linear(&self, var: &str, g: &Poly) -> Option<Poly> {
        debug_assert!(!g.vars().contains(var));
        let coeffs = self.by_powers_of(var);
        let deg = match coeffs.keys().next_back() {
            Some(&d) if d >= 1 => d,
            _ => return None,
        };
        // Synthetic division: q_{i-1} = c_i + g*q_i descending from the top.
        let mut q: BTreeMap<u32, Poly> = BTreeMap::new();
        let mut carry = Poly::zero();
        for i in (1..=deg).rev() {
            let ci = coeffs.get(&i).cloned().unwrap_or_else(Poly::zero);
            let qi = ci.add(&carry);
            carry = qi.mul(g);
            if !qi.is_zero() {
                q.insert(i - 1, qi);
            }
        }
        let c0 = coeffs.get(&0).cloned().unwrap_or_else(Poly::zero);
        let rem = c0.add(&carry);
        if !rem.is_zero() {
            return None;
        }
        let mut out = Poly::zero();
        for (e, p) in q {
            let shift = Monomial::from_pairs([(var.to_string(), e)]);
            out = out.add(&p.mul_monomial(&shift));
        }
        Some(out)
    }

    /// Clears denominators and divides by integer content: primitive integer
    /// form with positive leading coefficient. Zero maps to zero.
    pub fn canonical_integer(&self) -> BTreeMap<Monomial, BigInt> {
        if self.is_zero() {
            return BTreeMap::new();
        }
        let mut denom_lcm = BigInt::one();
        for c in self.terms.values() {
            denom_lcm = num_integer::lcm(denom_lcm, c.denom().clone());
        }
        let mut ints: BTreeMap<Monomial, BigInt> = self
            .terms
            .iter()
            .map(|(m, c)| (m.clone(), (c * BigRational::from_integer(denom_lcm.clone())).to_integer()))
            .collect();
        let mut content = BigInt::zero();
        for v in ints.values() {
            content = num_integer::gcd(content, v.clone());
        }
        if !content.is_one() {
            for v in ints.values_mut() {
                *v /= &content;
            }
        }
        let flip = ints
            .iter()
            .next_back()
            .map(|(_, c)| c.is_negative())
            .unwrap_or(false);
        if flip {
            for v in ints.values_mut() {
                *v = -v.clone();
            }
        }
        ints
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            write_term(f, m, c, first)?;
            first = false;
        }
        Ok(())
    }
}

fn write_term(
    f: &mut fmt::Formatter<'_>,
    m: &Monomial,
    c: &BigRational,
    first: bool,
) -> fmt::Result {
    let neg = c.is_negative();
    if first {
        if neg {
            write!(f, "-")?;
        }
    } else if neg {
        write!(f, " - ")?;
    } else {
        write!(f, " + ")?;
    }
    let a = c.abs();
    let unit = a.is_one();
    if m.is_one() {
        write!(f, "{a}")?;
    } else if unit {
        write!(f, "{m}")?;
    } else if a.is_integer() {
        write!(f, "{}*{m}", a.numer())?;
    } else {
        write!(f, "({a})*{m}")?;
    }
    Ok(())
}

/// Polynomial equality `p = 0` in canonical form: coprime integer
/// coefficients, positive coefficient on the graded-lex greatest monomial.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Equality {
    coeffs: BTreeMap<Monomial, BigInt>,
}

impl Equality {
    /// Canonicalizes; returns None for the zero polynomial.
    pub fn from_poly(p: &Poly) -> Option<Equality> {
        let coeffs = p.canonical_integer();
        if coeffs.is_empty() {
            None
        } else {
            Some(Equality { coeffs })
        }
    }

    pub fn coeffs(&self) -> &BTreeMap<Monomial, BigInt> {
        &self.coeffs
    }

    pub fn to_poly(&self) -> Poly {
        Poly::from_terms(
            self.coeffs
                .iter()
                .map(|(m, c)| (m.clone(), BigRational::from_integer(c.clone()))),
        )
    }

    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn leading_monomial(&self) -> &Monomial {
        self.coeffs
            .keys()
            .next_back()
            .expect("equality is never empty")
    }

    pub fn vars(&self) -> BTreeSet<String> {
        self.to_poly().vars()
    }

    pub fn eval(&self, env: &BTreeMap<String, BigInt>) -> BigInt {
        let mut acc = BigInt::zero();
        for (m, c) in &self.coeffs {
            acc += c * m.eval(env);
        }
        acc
    }
}

impl fmt::Display for Equality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} == 0", self.to_poly())
    }
}
