//! Redundancy elimination. An equality is redundant when it lies in the
//! rational span of multiples of the others (multiplier degrees capped so the
//! products stay within twice the inference degree). An inequality is
//! redundant when the octagon closure of the others — plus any equalities
//! expressible as octagon constraints — already forces its bound.

use crate::ineqinfer::{OctConstraint, OctTerm};
use crate::poly::{Equality, Monomial, Poly};
use num_rational::BigRational;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct InvariantSet {
    pub eqs: BTreeSet<Equality>,
    pub octs: BTreeSet<OctConstraint>,
}

impl InvariantSet {
    pub fn len(&self) -> usize {
        self.eqs.len() + self.octs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eqs.is_empty() && self.octs.is_empty()
    }

    /// All invariants as display strings, equalities first.
    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self.eqs.iter().map(|e| e.to_string()).collect();
        out.extend(self.octs.iter().map(|o| o.to_string()));
        out
    }
}

// ── Equality implication ────────────────────────────────────────────────────

fn monomials_up_to(vars: &[String], degree: u32) -> Vec<Monomial> {
    crate::eqinfer::create_terms(vars, degree)
}

/// Is `cand` a rational combination of `m * e` products (e in `others`,
/// deg(m * e) <= max_degree)?
///
/// Fast path: repeated head reduction — cancel the leading monomial of the
/// remainder with a matching leading-monomial multiple of some other. Head
/// reduction only shrinks the leading monomial, so it terminates; reaching
/// zero is a certificate of membership. Inconclusive reductions fall back to
/// a full sparse span over all admissible products.
pub fn is_implied_eq(others: &[Equality], cand: &Equality, max_degree: u32) -> bool {
    if others.is_empty() {
        return false;
    }
    if cand.degree() > max_degree {
        return false;
    }
    let other_polys: Vec<Poly> = others.iter().map(|e| e.to_poly()).collect();

    // head-reduction accelerator
    let mut rem = cand.to_poly();
    'reduce: while !rem.is_zero() {
        let (lead, lc) = {
            let (m, c) = rem.leading().unwrap();
            (m.clone(), c.clone())
        };
        for (e, p) in others.iter().zip(&other_polys) {
            let elead = e.leading_monomial();
            if let Some(mult) = lead.try_div(elead) {
                if mult.degree() + e.degree() <= max_degree {
                    let ec = p.coeff(elead);
                    let k = &lc / &ec;
                    rem.sub_scaled_shift(&k, &mult, p);
                    continue 'reduce;
                }
            }
        }
        break;
    }
    if rem.is_zero() {
        return true;
    }

    // full span fallback
    let mut vars: BTreeSet<String> = cand.vars();
    for e in others {
        vars.extend(e.vars());
    }
    let vars: Vec<String> = vars.into_iter().collect();
    let mut cols: BTreeSet<Monomial> = BTreeSet::new();
    let mut products: Vec<Poly> = Vec::new();
    for (e, p) in others.iter().zip(&other_polys) {
        let edeg = e.degree();
        if edeg > max_degree {
            continue;
        }
        for m in monomials_up_to(&vars, max_degree - edeg) {
            let prod = p.mul_monomial(&m);
            cols.extend(prod.terms().map(|(mm, _)| mm.clone()));
            products.push(prod);
        }
    }
    cols.extend(cand.coeffs().keys().cloned());
    // greatest monomial first so head reduction and span reduction agree
    let cols: Vec<Monomial> = cols.into_iter().rev().collect();
    let col_of: BTreeMap<&Monomial, u32> = cols
        .iter()
        .enumerate()
        .map(|(i, m)| (m, i as u32))
        .collect();
    let sparse = |p: &Poly| -> crate::linalg::SparseRow {
        let mut row: Vec<(u32, BigRational)> = p
            .terms()
            .map(|(m, c)| (col_of[m], c.clone()))
            .collect();
        row.sort_by_key(|(c, _)| *c);
        row
    };
    let mut reducer = crate::linalg::SpanReducer::new();
    for p in &products {
        reducer.insert(sparse(p));
    }
    reducer.contains(sparse(&cand.to_poly()))
}

// ── Octagon closure ─────────────────────────────────────────────────────────

const INF: i128 = i128::MAX / 4;

fn sat_add(a: i128, b: i128) -> i128 {
    if a >= INF || b >= INF {
        INF
    } else {
        (a + b).min(INF)
    }
}

/// Difference-bound matrix over doubled variables: index 2i stands for +v_i,
/// 2i+1 for -v_i, and entry m[a][b] bounds v'_b - v'_a. The complement of an
/// index is `idx ^ 1`.
pub struct Octagon {
    vars: Vec<String>,
    m: Vec<Vec<i128>>,
}

impl Octagon {
    pub fn new(vars: Vec<String>) -> Octagon {
        let n = 2 * vars.len();
        let mut m = vec![vec![INF; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 0;
        }
        Octagon { vars, m }
    }

    fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    /// Positions (a, b) such that `term <= k` is `v'_b - v'_a <= k'`; for
    /// single-variable terms the encoded bound doubles.
    fn entry_for(&self, term: &OctTerm) -> Option<(usize, usize, bool)> {
        let ((s1, v1), second) = term.parts();
        let i = self.var_index(v1)?;
        match second {
            None => {
                // +x: 2x = v'_{2i} - v'_{2i+1}; -x: v'_{2i+1} - v'_{2i}
                if s1 > 0 {
                    Some((2 * i + 1, 2 * i, true))
                } else {
                    Some((2 * i, 2 * i + 1, true))
                }
            }
            Some((s2, v2)) => {
                let j = self.var_index(v2)?;
                // pick the positive occurrence as the 'b' side
                let (a, b) = match (s1 > 0, s2 > 0) {
                    (true, true) => (2 * j + 1, 2 * i),   // x + y = v'_{2i} - v'_{2j+1}
                    (true, false) => (2 * j, 2 * i),      // x - y = v'_{2i} - v'_{2j}
                    (false, true) => (2 * i, 2 * j),      // -x + y = v'_{2j} - v'_{2i}
                    (false, false) => (2 * i, 2 * j + 1), // -x - y = v'_{2j+1} - v'_{2i}
                };
                Some((a, b, false))
            }
        }
    }

    pub fn add(&mut self, c: &OctConstraint) {
        let Some((a, b, doubled)) = self.entry_for(&c.term) else {
            return;
        };
        let k = if doubled {
            2 * c.k as i128
        } else {
            c.k as i128
        };
        // both coherent entries: v'_b - v'_a and its mirror v'_{a^1} - v'_{b^1}
        if k < self.m[a][b] {
            self.m[a][b] = k;
        }
        if k < self.m[b ^ 1][a ^ 1] {
            self.m[b ^ 1][a ^ 1] = k;
        }
    }

    /// Shortest paths plus the octagon strengthening step
    /// m[a][b] <- m[a][a^1]/2 + m[b^1][b]/2 (floored: variables are integer),
    /// iterated to a fixpoint.
    pub fn close(&mut self) {
        let n = self.m.len();
        loop {
            let mut changed = false;
            for k in 0..n {
                for a in 0..n {
                    if self.m[a][k] >= INF {
                        continue;
                    }
                    for b in 0..n {
                        let via = sat_add(self.m[a][k], self.m[k][b]);
                        if via < self.m[a][b] {
                            self.m[a][b] = via;
                            changed = true;
                        }
                    }
                }
            }
            for a in 0..n {
                for b in 0..n {
                    let half = sat_add(
                        self.m[a][a ^ 1].div_euclid(2),
                        self.m[b ^ 1][b].div_euclid(2),
                    );
                    if half < self.m[a][b] {
                        self.m[a][b] = half;
                        changed = true;
                    }
                }
            }
            if !changed {
                return;
            }
        }
    }

    pub fn is_infeasible(&self) -> bool {
        (0..self.m.len()).any(|i| self.m[i][i] < 0)
    }

    /// Tightest bound the closed octagon places on `term`, or None when the
    /// term involves unknown variables or is unbounded.
    pub fn bound(&self, term: &OctTerm) -> Option<i128> {
        let (a, b, doubled) = self.entry_for(term)?;
        let raw = self.m[a][b];
        if raw >= INF {
            return None;
        }
        Some(if doubled { raw.div_euclid(2) } else { raw })
    }
}

/// Equalities of the shape `±u ± v + c = 0` or `±u + c = 0` translate into a
/// pair of octagon constraints.
pub fn oct_encodable(eq: &Equality) -> Option<[OctConstraint; 2]> {
    let mut vars: Vec<(i8, String)> = Vec::new();
    let mut constant: i64 = 0;
    for (m, c) in eq.coeffs() {
        if m.is_one() {
            constant = i64::try_from(c.clone()).ok()?;
            continue;
        }
        if m.degree() != 1 {
            return None;
        }
        let sign: i8 = match i64::try_from(c.clone()).ok()? {
            1 => 1,
            -1 => -1,
            _ => return None,
        };
        vars.push((sign, m.vars().next().unwrap().to_string()));
    }
    let term = match vars.as_slice() {
        [(s, v)] => OctTerm::single(*s, v),
        [(s1, v1), (s2, v2)] => OctTerm::pair(*s1, v1, *s2, v2),
        _ => return None,
    };
    // term + constant = 0, so term <= -c and -term <= c
    Some([
        OctConstraint {
            term: term.clone(),
            k: -constant,
        },
        OctConstraint {
            term: term.negated(),
            k: constant,
        },
    ])
}

/// Does the context (other inequalities plus octagon-shaped equalities) force
/// `cand`?
pub fn is_implied_oct(eqs: &BTreeSet<Equality>, octs: &[OctConstraint], cand: &OctConstraint) -> bool {
    let mut vars: BTreeSet<String> = cand.term.vars().iter().map(|s| s.to_string()).collect();
    let mut constraints: Vec<OctConstraint> = octs.to_vec();
    for e in eqs {
        if let Some(pair) = oct_encodable(e) {
            constraints.extend(pair);
        }
    }
    for c in &constraints {
        vars.extend(c.term.vars().iter().map(|s| s.to_string()));
    }
    let mut oct = Octagon::new(vars.into_iter().collect());
    for c in &constraints {
        oct.add(c);
    }
    oct.close();
    if oct.is_infeasible() {
        return true;
    }
    match oct.bound(&cand.term) {
        Some(b) => b <= cand.k as i128,
        None => false,
    }
}

/// Greedy redundancy removal. Inequalities go first, in ascending (term,
/// bound) order, each tested against the rest of the current set plus all
/// equalities; then equalities in descending leading-monomial order, each
/// tested against the remaining equalities only. `max_degree` caps the
/// degree of equality products considered (twice the inference degree is the
/// usual choice).
pub fn remove_redundant(invs: &InvariantSet, max_degree: u32) -> InvariantSet {
    let mut octs: Vec<OctConstraint> = invs.octs.iter().cloned().collect();
    let eqs = invs.eqs.clone();
    let mut i = 0;
    while i < octs.len() {
        let cand = octs[i].clone();
        let rest: Vec<OctConstraint> = octs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, c)| c.clone())
            .collect();
        if is_implied_oct(&eqs, &rest, &cand) {
            octs.remove(i);
        } else {
            i += 1;
        }
    }

    let mut kept: Vec<Equality> = eqs.into_iter().collect();
    // descending leading monomial: drop the most complex first
    kept.sort_by(|a, b| b.cmp(a));
    kept.sort_by(|a, b| b.leading_monomial().cmp(a.leading_monomial()));
    let mut i = 0;
    while i < kept.len() {
        let cand = kept[i].clone();
        let rest: Vec<Equality> = kept
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, e)| e.clone())
            .collect();
        if is_implied_eq(&rest, &cand, max_degree) {
            kept.remove(i);
        } else {
            i += 1;
        }
    }

    InvariantSet {
        eqs: kept.into_iter().collect(),
        octs: octs.into_iter().collect(),
    }
}
