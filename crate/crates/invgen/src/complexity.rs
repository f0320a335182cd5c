//! Computational-complexity analysis. The program gets a ghost counter `t`
//! (incremented in every loop body), equality inference runs at the exit over
//! the inputs plus `t`, and the best surviving relation is factored into
//! monic-in-t linear factors `t - g(inputs)`. Each `g` is a candidate
//! iteration bound: on every run, `t` equals one of the roots.
//!
//! Root candidates come from local fits: small nearest-neighbor windows of
//! exit observations in input space are individually interpolated (piecewise
//! behavior is contiguous in the input box, so deep-regime windows are pure),
//! and a candidate is kept only when synthetic division of the relation by
//! `t - g` is exact — junk fits cannot pass that gate.

use crate::eqinfer::{
    auto_degree, infer_equalities, EqInferConfig, EqOutcome, EqStats, Template,
};
use crate::exec::{ExecCache, RunOptions};
use crate::lang::{instrument_counter, LangError, LocationId, Program, Stmt};
use crate::poly::{Equality, Poly};
use crate::simplify::{remove_redundant, InvariantSet};
use crate::verify::{Verifier, VerifyBudget};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[derive(Clone, Debug)]
pub struct ComplexityConfig {
    /// Template degree; None picks the largest degree within `alpha` terms,
    /// capped at `degree_cap`.
    pub degree: Option<u32>,
    pub alpha: u64,
    pub degree_cap: u32,
    pub batch: usize,
    /// Nearest-neighbor windows tried for root candidates.
    pub windows: usize,
    pub window_size: usize,
    /// Degree of the window interpolation over the inputs.
    pub fit_degree: u32,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        ComplexityConfig {
            degree: None,
            alpha: 200,
            degree_cap: 5,
            batch: 48,
            windows: 64,
            window_size: 24,
            fit_degree: 2,
        }
    }
}

/// The counter's polynomial relation at the exit mark, together with the
/// exit observations it was inferred from.
#[derive(Clone, Debug)]
pub struct CounterRelation {
    pub exit_loc: LocationId,
    /// The surviving equality over the inputs and `t`.
    pub relation: Equality,
    pub t_degree: u32,
    pub input_vars: Vec<String>,
    /// Deduped exit observations: input values (in `input_vars` order) and `t`.
    pub rows: Vec<(Vec<i64>, BigInt)>,
    pub stats: EqStats,
}

impl CounterRelation {
    pub fn extract_bounds(&self, cfg: &ComplexityConfig, seed: u64) -> BoundExtraction {
        extract_bounds(&self.relation, &self.input_vars, &self.rows, cfg, seed)
    }
}

#[derive(Clone, Debug)]
pub enum RelationOutcome {
    Relation(Box<CounterRelation>),
    /// Inference finished but nothing involving `t` survived.
    NoRelation { stats: EqStats },
    Unreachable,
    NotEnoughTraces { rows: usize, needed: usize },
}

/// Runs counter instrumentation plus relation inference on `program`.
/// Programs already carrying their own `t` and a trailing mark are analyzed
/// as-is; everything else is instrumented.
pub fn infer_counter_relation(
    program: &Program,
    opts: &RunOptions,
    budget: VerifyBudget,
    cfg: &ComplexityConfig,
) -> Result<RelationOutcome, LangError> {
    match instrument_counter(program, false) {
        Ok((iprog, exit_loc)) => {
            let cache = ExecCache::new(&iprog, *opts);
            let mut v = Verifier::new(cache, budget);
            infer_counter_relation_at(&mut v, &exit_loc, cfg)
        }
        Err(LangError::CounterNameTaken) => {
            let Some(Stmt::Mark { loc, .. }) = program.body.stmts.last() else {
                return Err(LangError::CounterNameTaken);
            };
            let exit_loc = loc.clone();
            if !program.extract_vars(&exit_loc)?.contains(&"t".to_string()) {
                return Err(LangError::CounterNameTaken);
            }
            let cache = ExecCache::new(program, *opts);
            let mut v = Verifier::new(cache, budget);
            infer_counter_relation_at(&mut v, &exit_loc, cfg)
        }
        Err(e) => Err(e),
    }
}

/// Relation inference at an exit location whose scope includes the inputs
/// and `t`.
pub fn infer_counter_relation_at(
    v: &mut Verifier,
    exit_loc: &LocationId,
    cfg: &ComplexityConfig,
) -> Result<RelationOutcome, LangError> {
    let mut vars: Vec<String> = v.cache.program.input_names();
    vars.push("t".to_string());
    vars.sort();
    let degree = cfg
        .degree
        .unwrap_or_else(|| auto_degree(vars.len(), cfg.alpha).min(cfg.degree_cap))
        .max(1);

    let eq_cfg = EqInferConfig {
        degree,
        batch: cfg.batch,
        ..Default::default()
    };
    let outcome = infer_equalities(v, exit_loc, Some(&vars), &eq_cfg)?;
    let (invs, stats) = match outcome {
        EqOutcome::Invariants { invs, stats } => (invs, stats),
        EqOutcome::Unreachable => return Ok(RelationOutcome::Unreachable),
        EqOutcome::NotEnoughTraces { rows, needed } => {
            return Ok(RelationOutcome::NotEnoughTraces { rows, needed })
        }
    };

    let mut set = InvariantSet::default();
    set.eqs.extend(invs.into_iter().map(|i| i.eq));
    let set = remove_redundant(&set, 2 * degree);

    // smallest relation that actually mentions t
    let relation = set
        .eqs
        .iter()
        .filter(|e| e.vars().contains("t"))
        .min_by_key(|e| (e.degree(), e.num_terms(), (*e).clone()))
        .cloned();
    let Some(relation) = relation else {
        return Ok(RelationOutcome::NoRelation { stats });
    };
    let t_degree = relation
        .coeffs()
        .keys()
        .map(|m| m.exponent("t"))
        .max()
        .unwrap_or(0);

    // exit observations: (input values, t)
    let input_vars: Vec<String> = v.cache.program.input_names();
    let all_vars: Vec<String> = v.cache.program.extract_vars(exit_loc)?.to_vec();
    let pos = |name: &str| all_vars.iter().position(|w| w == name).unwrap();
    let input_pos: Vec<usize> = input_vars.iter().map(|n| pos(n)).collect();
    let t_pos = pos("t");
    let lt = v.cache.loc_traces(exit_loc);
    let mut rows: Vec<(Vec<i64>, BigInt)> = Vec::new();
    let mut seen = BTreeSet::new();
    for id in 0..lt.len() as u32 {
        let full = lt.row(id);
        let inputs: Vec<i64> = input_pos
            .iter()
            .map(|&i| full[i].to_i64().expect("inputs are immutable box values"))
            .collect();
        let t = full[t_pos].clone();
        if seen.insert((inputs.clone(), t.clone())) {
            rows.push((inputs, t));
        }
    }

    Ok(RelationOutcome::Relation(Box::new(CounterRelation {
        exit_loc: exit_loc.clone(),
        relation,
        t_degree,
        input_vars,
        rows,
        stats,
    })))
}

#[derive(Clone, Debug)]
pub struct BoundExtraction {
    pub roots: Vec<(Poly, u32)>,
    pub residual: Poly,
    pub fully_factored: bool,
}

/// Factors `relation` (viewed in `t`) into monic linear factors using window
/// fits of the exit observations as candidates, plus the zero root. Division
/// is exact synthetic division, and the factorization is re-verified by
/// multiplying everything back together.
pub fn extract_bounds(
    relation: &Equality,
    input_vars: &[String],
    rows: &[(Vec<i64>, BigInt)],
    cfg: &ComplexityConfig,
    seed: u64,
) -> BoundExtraction {
    let rel_poly = relation.to_poly();
    let mut candidates: Vec<Poly> = vec![Poly::zero()];
    candidates.extend(window_fit_candidates(input_vars, rows, cfg, seed));
    candidates.sort_by_key(|p| (p.degree(), p.num_terms(), p.to_string()));
    candidates.dedup();

    let mut quotient = rel_poly.clone();
    let mut roots: Vec<(Poly, u32)> = Vec::new();
    loop {
        if !quotient.vars().contains("t") {
            break;
        }
        let mut progressed = false;
        for g in &candidates {
            if let Some(q) = quotient.div_exact_by_monic_linear("t", g) {
                quotient = q;
                match roots.iter_mut().find(|(r, _)| r == g) {
                    Some((_, mult)) => *mult += 1,
                    None => roots.push((g.clone(), 1)),
                }
                progressed = true;
                break;
            }
        }
        if !progressed {
            break;
        }
    }
    let fully_factored = !quotient.vars().contains("t");

    // re-verify: product of the factors and the residual is the relation
    let mut check = quotient.clone();
    let t = Poly::var("t");
    for (g, mult) in &roots {
        for _ in 0..*mult {
            check = check.mul(&t.sub(g));
        }
    }
    assert_eq!(
        check, rel_poly,
        "factor verification failed: division chain is inconsistent"
    );

    roots.sort_by_key(|(p, _)| (p.degree(), p.num_terms(), p.to_string()));
    BoundExtraction {
        roots,
        residual: quotient,
        fully_factored,
    }
}

/// Interpolates `t` as a polynomial in the inputs over small neighborhoods.
/// Every exact solution on a window is a candidate root.
fn window_fit_candidates(
    input_vars: &[String],
    rows: &[(Vec<i64>, BigInt)],
    cfg: &ComplexityConfig,
    seed: u64,
) -> Vec<Poly> {
    if rows.is_empty() || input_vars.is_empty() {
        return Vec::new();
    }
    let template = Template::new(input_vars, cfg.fit_degree);
    let ncols = template.terms.len() + 1; // terms plus the t column
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut anchor_ids: Vec<usize> = (0..rows.len()).collect();
    anchor_ids.shuffle(&mut rng);
    anchor_ids.truncate(cfg.windows);
    anchor_ids.sort_unstable();

    let mut out: BTreeSet<Vec<(crate::poly::Monomial, BigRational)>> = BTreeSet::new();
    let mut polys = Vec::new();
    for &a in &anchor_ids {
        let anchor = &rows[a].0;
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&i| {
            let d: i128 = rows[i]
                .0
                .iter()
                .zip(anchor)
                .map(|(x, y)| {
                    let d = (*x as i128) - (*y as i128);
                    d * d
                })
                .sum();
            (d, i)
        });
        order.truncate(cfg.window_size.min(rows.len()));
        if order.len() < ncols {
            continue;
        }
        let matrix: Vec<Vec<BigRational>> = order
            .iter()
            .map(|&i| {
                let input_big: Vec<BigInt> =
                    rows[i].0.iter().map(|&v| BigInt::from(v)).collect();
                let mut r = template.instantiate(&input_big);
                r.push(BigRational::from_integer(rows[i].1.clone()));
                r
            })
            .collect();
        for basis in crate::linalg::nullspace(&matrix, ncols) {
            let t_coeff = &basis[ncols - 1];
            if t_coeff.is_zero() {
                continue;
            }
            // c . terms + c_t * t = 0  =>  t = -(c / c_t) . terms
            let g = Poly::from_terms(
                template
                    .terms
                    .iter()
                    .zip(&basis[..ncols - 1])
                    .map(|(m, c)| (m.clone(), -(c / t_coeff))),
            );
            let key: Vec<_> = g.terms().map(|(m, c)| (m.clone(), c.clone())).collect();
            if out.insert(key) {
                polys.push(g);
            }
        }
    }
    polys
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use num_traits::{One, Signed};

    fn run(src: &str, cfg: &ComplexityConfig) -> RelationOutcome {
        let p = parse_program(src).unwrap();
        infer_counter_relation(&p, &RunOptions::default(), VerifyBudget::default(), cfg).unwrap()
    }

    #[test]
    fn single_loop_linear_counter() {
        let cfg = ComplexityConfig {
            degree: Some(2),
            ..Default::default()
        };
        let out = run(
            "inputs n in [0, 30];\nint i = 0;\nwhile (i < n) { i = i + 1; }\n",
            &cfg,
        );
        let RelationOutcome::Relation(r) = out else {
            panic!("{out:?}");
        };
        assert_eq!(r.exit_loc.0, "Lexit");
        assert_eq!(r.relation.to_string(), "n - t == 0");
        assert_eq!(r.t_degree, 1);
        let ext = r.extract_bounds(&cfg, 0);
        assert_eq!(ext.roots.len(), 1);
        assert_eq!(ext.roots[0].0, Poly::var("n"));
        assert_eq!(ext.roots[0].1, 1);
        assert!(ext.fully_factored);
        // residual is the constant -1 (relation is n - t)
        assert!(ext.residual.vars().is_empty());
    }

    #[test]
    fn nested_loop_bilinear_counter() {
        let src = "\
inputs n in [0, 12], m in [0, 12];
int i = 0;
while (i < n) {
  int j = 0;
  while (j < m) { j = j + 1; }
  i = i + 1;
}
";
        let cfg = ComplexityConfig {
            degree: Some(2),
            ..Default::default()
        };
        let out = run(src, &cfg);
        let RelationOutcome::Relation(r) = out else {
            panic!("{out:?}");
        };
        // t = n + n*m
        assert_eq!(r.t_degree, 1);
        let ext = r.extract_bounds(&cfg, 0);
        assert_eq!(ext.roots.len(), 1);
        let expect = Poly::var("n").add(&Poly::var("m").mul(&Poly::var("n")));
        assert_eq!(ext.roots[0].0, expect);
        assert!(ext.fully_factored);
    }

    #[test]
    fn sqrt_counter_has_no_equality_relation() {
        let src = "\
inputs n in [0, 50];
int a = 0;
while ((a + 1) * (a + 1) <= n) { a = a + 1; }
";
        let out = run(
            src,
            &ComplexityConfig {
                degree: Some(2),
                ..Default::default()
            },
        );
        assert!(matches!(out, RelationOutcome::NoRelation { .. }), "{out:?}");
    }

    #[test]
    fn counter_name_conflict_and_preinstrumented_fallback() {
        // pre-instrumented: t in source plus trailing mark works as-is
        let src = "\
inputs n in [0, 10];
int t = 0;
int i = 0;
while (i < n) { i = i + 1; t = t + 1; }
[Lend]
";
        let out = run(
            src,
            &ComplexityConfig {
                degree: Some(1),
                ..Default::default()
            },
        );
        let RelationOutcome::Relation(r) = out else {
            panic!("{out:?}");
        };
        assert_eq!(r.exit_loc.0, "Lend");
        assert_eq!(r.relation.to_string(), "n - t == 0");
        // t in source without a trailing mark: nowhere to observe
        let p = parse_program("int t = 0;\nwhile (t < 3) { t = t + 1; }\n").unwrap();
        assert!(matches!(
            infer_counter_relation(
                &p,
                &RunOptions::default(),
                VerifyBudget::default(),
                &ComplexityConfig::default()
            ),
            Err(LangError::CounterNameTaken)
        ));
    }

    /// The three-regime counter: t is 0 when the outer loop never runs,
    /// N + m + 1 when the innermost loop drives the outer counter past n,
    /// and n - m*N + m*n otherwise. The relation is the degree-4 product of
    /// the three monic factors.
    fn triple_relation() -> (Equality, Poly, Poly) {
        let t = Poly::var("t");
        let a = Poly::var("N")
            .add(&Poly::var("m"))
            .add(&Poly::constant_int(1));
        let b = Poly::var("n")
            .sub(&Poly::var("m").mul(&Poly::var("N")))
            .add(&Poly::var("m").mul(&Poly::var("n")));
        let rel = t.mul(&t.sub(&a)).mul(&t.sub(&b));
        (Equality::from_poly(&rel).unwrap(), a, b)
    }

    fn triple_t(nn: i64, m: i64, n: i64) -> i64 {
        // closed form of the instrumented triple loop
        if n == 0 {
            0
        } else if m == 0 {
            n
        } else if n <= nn + 1 {
            nn + m + 1
        } else {
            n - m * nn + m * n
        }
    }

    #[test]
    fn triple_relation_has_fifteen_terms_and_matches_runtime() {
        let (rel, _, _) = triple_relation();
        assert_eq!(rel.num_terms(), 15);
        assert_eq!(rel.degree(), 4);
        // spot-check the closed form against the relation
        for (nn, m, n) in [(0, 0, 0), (3, 2, 1), (2, 5, 6), (0, 4, 6), (6, 1, 2)] {
            let mut env = std::collections::BTreeMap::new();
            env.insert("N".to_string(), BigInt::from(nn));
            env.insert("m".to_string(), BigInt::from(m));
            env.insert("n".to_string(), BigInt::from(n));
            env.insert("t".to_string(), BigInt::from(triple_t(nn, m, n)));
            assert_eq!(rel.eval(&env), BigInt::zero(), "at {nn},{m},{n}");
        }
    }

    #[test]
    fn triple_roots_recovered_from_windows() {
        let (rel, a, b) = triple_relation();
        let input_vars: Vec<String> = vec!["N".into(), "m".into(), "n".into()];
        let mut rows = Vec::new();
        for nn in 0..=6 {
            for m in 0..=6 {
                for n in 0..=6 {
                    rows.push((vec![nn, m, n], BigInt::from(triple_t(nn, m, n))));
                }
            }
        }
        let cfg = ComplexityConfig::default();
        let ext = extract_bounds(&rel, &input_vars, &rows, &cfg, 7);
        assert!(ext.fully_factored, "residual {} still has t", ext.residual);
        let got: BTreeSet<String> = ext.roots.iter().map(|(p, _)| p.to_string()).collect();
        let want: BTreeSet<String> =
            [Poly::zero().to_string(), a.to_string(), b.to_string()]
                .into_iter()
                .collect();
        assert_eq!(got, want);
        assert!(ext.roots.iter().all(|(_, m)| *m == 1));
        // residual is the unit cofactor
        assert!(ext.residual.vars().is_empty());
        assert!(ext.residual.coeff(&crate::poly::Monomial::one()).abs().is_one());
    }
}
