//! Equality inference. Candidate invariants at a location are the nullspace
//! of the trace matrix: rows are monomial templates instantiated on recorded
//! states, so a coefficient vector annihilating every row is an equality
//! holding on all observed data. Candidates then face the verifier; its
//! counterexamples become new matrix rows and the loop repeats until the
//! candidate set stabilizes.

use crate::lang::{LangError, LocationId, Span};
use crate::linalg::{nullspace, rank, rref};
use crate::poly::{Equality, Monomial, Poly};
use crate::verify::{CexResult, Verifier};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use std::collections::{BTreeMap, BTreeSet, HashSet};

/// C(n, k), saturating at u128::MAX.
pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.saturating_mul((n - k + i) as u128);
        acc /= i as u128;
    }
    acc
}

/// Largest degree d (at least 1) whose template over `num_vars` variables
/// stays within `alpha` terms: C(v + d, d) <= alpha.
pub fn auto_degree(num_vars: usize, alpha: u64) -> u32 {
    let v = num_vars as u64;
    let mut d: u64 = 1;
    while binomial(v + d + 1, d + 1) <= alpha as u128 {
        d += 1;
    }
    d as u32
}

/// All monomials over `vars` of total degree <= `degree`, grouped by
/// ascending degree; within a degree, combinations-with-replacement order of
/// the variable list (so for vars [r, y, a]: 1, r, y, a, r^2, ry, ra, y^2,
/// ya, a^2).
pub fn create_terms(vars: &[String], degree: u32) -> Vec<Monomial> {
    fn combos(vars: &[String], k: u32, out: &mut Vec<Monomial>, prefix: &[(String, u32)]) {
        if k == 0 {
            out.push(Monomial::from_pairs(prefix.iter().cloned()));
            return;
        }
        for (i, v) in vars.iter().enumerate() {
            let mut p = prefix.to_vec();
            p.push((v.clone(), 1));
            combos(&vars[i..], k - 1, out, &p);
        }
    }
    let mut out = Vec::new();
    for k in 0..=degree {
        combos(vars, k, &mut out, &[]);
    }
    out
}

/// Coefficient template over a fixed variable list.
#[derive(Clone, Debug)]
pub struct Template {
    pub vars: Vec<String>,
    pub terms: Vec<Monomial>,
}

impl Template {
    pub fn new(vars: &[String], degree: u32) -> Template {
        Template {
            vars: vars.to_vec(),
            terms: create_terms(vars, degree),
        }
    }

    /// One matrix row: every term evaluated at the state `row` (aligned with
    /// `self.vars`).
    pub fn instantiate(&self, row: &[BigInt]) -> Vec<BigRational> {
        debug_assert_eq!(row.len(), self.vars.len());
        let env: BTreeMap<String, BigInt> = self
            .vars
            .iter()
            .zip(row)
            .map(|(v, x)| (v.clone(), x.clone()))
            .collect();
        self.terms
            .iter()
            .map(|m| BigRational::from_integer(m.eval(&env)))
            .collect()
    }

    fn matrix(&self, rows: &[Vec<BigInt>]) -> Vec<Vec<BigRational>> {
        rows.iter().map(|r| self.instantiate(r)).collect()
    }

    pub fn rank(&self, rows: &[Vec<BigInt>]) -> usize {
        rank(&self.matrix(rows), self.terms.len())
    }

    /// Nullspace basis of the instantiated matrix. Every returned vector is
    /// re-checked to annihilate every row.
    pub fn solve(&self, rows: &[Vec<BigInt>]) -> Vec<Vec<BigRational>> {
        let m = self.matrix(rows);
        let basis = nullspace(&m, self.terms.len());
        for v in &basis {
            for row in &m {
                let dot: BigRational = row.iter().zip(v).map(|(a, b)| a * b).sum();
                assert!(dot.is_zero(), "nullspace vector fails residual check");
            }
        }
        basis
    }

    /// Coefficient vectors -> canonical equalities, ascending, deduplicated.
    pub fn extract_eqts(&self, basis: &[Vec<BigRational>]) -> Vec<Equality> {
        let mut out = BTreeSet::new();
        for v in basis {
            let p = Poly::from_terms(
                self.terms
                    .iter()
                    .zip(v)
                    .map(|(m, c)| (m.clone(), c.clone())),
            );
            if let Some(e) = Equality::from_poly(&p) {
                out.insert(e);
            }
        }
        out.into_iter().collect()
    }
}

/// Unique reduced basis of the rational span of a set of equalities: rows are
/// reduced with columns ordered by graded-lex greatest monomial first, so the
/// result does not depend on which combination the solver happened to emit.
pub fn canonicalize_eq_basis(eqs: &[Equality]) -> Vec<Equality> {
    if eqs.is_empty() {
        return Vec::new();
    }
    let mut monos: BTreeSet<Monomial> = BTreeSet::new();
    for e in eqs {
        monos.extend(e.coeffs().keys().cloned());
    }
    // greatest monomial = column 0, so reduction eliminates leading terms
    let cols: Vec<Monomial> = monos.into_iter().rev().collect();
    let col_of: BTreeMap<&Monomial, usize> = cols.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut rows: Vec<Vec<BigRational>> = eqs
        .iter()
        .map(|e| {
            let mut row = vec![BigRational::zero(); cols.len()];
            for (m, c) in e.coeffs() {
                row[col_of[m]] = BigRational::from_integer(c.clone());
            }
            row
        })
        .collect();
    rref(&mut rows, cols.len());
    let mut out = BTreeSet::new();
    for row in rows {
        let p = Poly::from_terms(cols.iter().zip(&row).map(|(m, c)| (m.clone(), c.clone())));
        if let Some(e) = Equality::from_poly(&p) {
            out.insert(e);
        }
    }
    out.into_iter().collect()
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum EqStatus {
    /// Survived a complete sweep of the input box.
    ProvedOnBox,
    /// Survived every check the budget allowed.
    AcceptedWithinBudget,
}

#[derive(Clone, Debug)]
pub struct InferredEq {
    pub eq: Equality,
    pub status: EqStatus,
}

#[derive(Clone, Debug, Default)]
pub struct EqStats {
    pub gather_rounds: u32,
    pub refine_iters: u32,
    pub rows_used: usize,
    pub num_terms: usize,
    pub candidates_tried: usize,
    pub disproved: usize,
    /// Degree actually solved at; lower than requested when the box ran out
    /// of inputs before the template was determined.
    pub degree_used: u32,
}

#[derive(Clone, Debug)]
pub enum EqOutcome {
    Invariants { invs: Vec<InferredEq>, stats: EqStats },
    /// Proven: no input in the box reaches the location.
    Unreachable,
    /// The search dried up with fewer rows than template terms and the box
    /// was not exhausted; solving would only overfit.
    NotEnoughTraces { rows: usize, needed: usize },
}

#[derive(Clone, Debug)]
pub struct EqInferConfig {
    pub degree: u32,
    /// Fresh inputs requested per gather round.
    pub batch: usize,
    pub max_iters: u32,
    pub max_cex_returned: usize,
    pub max_gather_rounds: u32,
}

impl Default for EqInferConfig {
    fn default() -> Self {
        EqInferConfig {
            degree: 2,
            batch: 48,
            max_iters: 50,
            max_cex_returned: 16,
            max_gather_rounds: 200,
        }
    }
}

/// Runs the full loop at one location. `vars` restricts the template to a
/// subset of the variables in scope (default: all of them).
pub fn infer_equalities(
    v: &mut Verifier,
    loc: &LocationId,
    vars: Option<&[String]>,
    cfg: &EqInferConfig,
) -> Result<EqOutcome, LangError> {
    let all_vars: Vec<String> = v.cache.program.extract_vars(loc)?.to_vec();
    let vars: Vec<String> = match vars {
        Some(sel) => {
            for name in sel {
                if !all_vars.contains(name) {
                    return Err(LangError::UnknownVariable {
                        name: name.clone(),
                        span: Span::default(),
                    });
                }
            }
            sel.to_vec()
        }
        None => all_vars.clone(),
    };
    let idx: Vec<usize> = vars
        .iter()
        .map(|name| all_vars.iter().position(|w| w == name).unwrap())
        .collect();
    let template = Template::new(&vars, cfg.degree);
    let nterms = template.terms.len();
    let mut stats = EqStats {
        num_terms: nterms,
        degree_used: cfg.degree,
        ..Default::default()
    };

    let project = |ver: &Verifier| -> Vec<Vec<BigInt>> {
        let lt = ver.cache.loc_traces(loc);
        let mut set: BTreeSet<Vec<BigInt>> = BTreeSet::new();
        for id in 0..lt.len() as u32 {
            let full = lt.row(id);
            set.insert(idx.iter().map(|&i| full[i].clone()).collect());
        }
        set.into_iter().collect()
    };

    // Phase 1: gather traces until the matrix is comfortably overdetermined,
    // the box runs out of fresh inputs, or the search dries up.
    let mut known: HashSet<Vec<i64>> = HashSet::new();
    let mut box_exhausted = false;
    let mut dried_up = false;
    loop {
        stats.gather_rounds += 1;
        match v.find_cex(loc, |_| false, &known, cfg.batch) {
            CexResult::Disproved { cexs } => {
                if cexs.is_empty() {
                    box_exhausted = true;
                    break;
                }
                known.extend(cexs);
            }
            CexResult::NoneFound { complete: true, .. } => {
                return Ok(EqOutcome::Unreachable);
            }
            CexResult::NoneFound { complete: false, .. } => {
                dried_up = true;
                break;
            }
        }
        let rows = project(v);
        if rows.len() >= nterms {
            let rk = template.rank(&rows);
            let target = (nterms + 10).max(2 * nterms - rk);
            if rows.len() >= target {
                break;
            }
        }
        if stats.gather_rounds >= cfg.max_gather_rounds {
            break;
        }
    }
    let rows = project(v);
    if rows.is_empty() || (dried_up && rows.len() < nterms) {
        return Ok(EqOutcome::NotEnoughTraces {
            rows: rows.len(),
            needed: nterms,
        });
    }
    let _ = box_exhausted; // with >= 1 row an exhausted box is enough to solve

    // An exhausted box can still leave the template underdetermined; the
    // leftover nullspace is then dominated by artifacts of the box, and the
    // redundancy reduction chokes on it. Lower the degree until the gathered
    // rows can pin the template down.
    let template = {
        let mut degree = cfg.degree;
        let v = vars.len() as u64;
        while degree > 1 && binomial(v + degree as u64, degree as u64) > rows.len() as u128 {
            degree -= 1;
        }
        stats.degree_used = degree;
        if degree == cfg.degree {
            template
        } else {
            let t = Template::new(&vars, degree);
            stats.num_terms = t.terms.len();
            t
        }
    };

    // Phase 2: solve, verify candidates, feed counterexamples back.
    let mut invs: BTreeMap<Equality, EqStatus> = BTreeMap::new();
    let mut disproved: BTreeSet<Equality> = BTreeSet::new();
    loop {
        stats.refine_iters += 1;
        let rows = project(v);
        stats.rows_used = rows.len();
        let basis = template.solve(&rows);
        let candidates: Vec<Equality> = template
            .extract_eqts(&basis)
            .into_iter()
            .filter(|e| !invs.contains_key(e) && !disproved.contains(e))
            .collect();
        if candidates.is_empty() {
            break;
        }
        let mut any_disproved = false;
        for cand in candidates {
            stats.candidates_tried += 1;
            let res = v.find_cex(
                loc,
                |full| {
                    let env: BTreeMap<String, BigInt> = all_vars
                        .iter()
                        .zip(full)
                        .map(|(n, x)| (n.clone(), x.clone()))
                        .collect();
                    cand.eval(&env).is_zero()
                },
                &known,
                cfg.max_cex_returned,
            );
            match res {
                CexResult::NoneFound { complete, .. } => {
                    let status = if complete {
                        EqStatus::ProvedOnBox
                    } else {
                        EqStatus::AcceptedWithinBudget
                    };
                    invs.insert(cand, status);
                }
                CexResult::Disproved { cexs } => {
                    any_disproved = true;
                    disproved.insert(cand);
                    known.extend(cexs);
                }
            }
        }
        stats.disproved = disproved.len();
        if !any_disproved || stats.refine_iters >= cfg.max_iters {
            break;
        }
    }

    // Canonical reduced basis of the surviving span, so output does not
    // depend on solver pivot choices.
    let survivors: Vec<Equality> = invs.keys().cloned().collect();
    let worst = invs
        .values()
        .max()
        .copied()
        .unwrap_or(EqStatus::ProvedOnBox);
    let final_eqs = canonicalize_eq_basis(&survivors);
    let out: Vec<InferredEq> = final_eqs
        .into_iter()
        .map(|eq| {
            let status = invs.get(&eq).copied().unwrap_or(worst);
            InferredEq { eq, status }
        })
        .collect();
    Ok(EqOutcome::Invariants { invs: out, stats })
}
