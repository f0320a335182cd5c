//! Octagonal inequality inference: upper bounds for the terms ±x and ±x±y
//! over the variables in scope, found by binary search over a bound oracle.
//! Each probe asks the verifier whether `term <= k` holds on the box; a
//! refutation reports the largest term value seen among the counterexample
//! traces, which tightens the lower end of the search interval in one step.

use crate::eqinfer::EqStatus;
use crate::lang::{Expr, ExprKind, LangError, LocationId, Span, UnOp};
use crate::verify::{CexResult, Verifier};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use std::collections::{BTreeMap, HashSet};
use std::fmt;

/// `s1*v1` or `s1*v1 + s2*v2` with signs in {+1, -1}; for pairs the variable
/// names are distinct and in ascending byte order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct OctTerm {
    first: (i8, String),
    second: Option<(i8, String)>,
}

impl OctTerm {
    pub fn single(sign: i8, var: &str) -> OctTerm {
        debug_assert!(sign == 1 || sign == -1);
        OctTerm {
            first: (sign, var.to_string()),
            second: None,
        }
    }

    pub fn pair(s1: i8, v1: &str, s2: i8, v2: &str) -> OctTerm {
        debug_assert!(v1 != v2);
        let ((s1, v1), (s2, v2)) = if v1 < v2 {
            ((s1, v1), (s2, v2))
        } else {
            ((s2, v2), (s1, v1))
        };
        OctTerm {
            first: (s1, v1.to_string()),
            second: Some((s2, v2.to_string())),
        }
    }

    pub fn parts(&self) -> ((i8, &str), Option<(i8, &str)>) {
        (
            (self.first.0, self.first.1.as_str()),
            self.second.as_ref().map(|(s, v)| (*s, v.as_str())),
        )
    }

    pub fn negated(&self) -> OctTerm {
        OctTerm {
            first: (-self.first.0, self.first.1.clone()),
            second: self.second.as_ref().map(|(s, v)| (-s, v.clone())),
        }
    }

    pub fn vars(&self) -> Vec<&str> {
        let mut out = vec![self.first.1.as_str()];
        if let Some((_, v)) = &self.second {
            out.push(v.as_str());
        }
        out
    }

    pub fn eval(&self, env: &BTreeMap<String, BigInt>) -> BigInt {
        let look = |v: &str| env.get(v).cloned().unwrap_or_default();
        let mut acc = look(&self.first.1) * BigInt::from(self.first.0);
        if let Some((s, v)) = &self.second {
            acc += look(v) * BigInt::from(*s);
        }
        acc
    }
}

impl fmt::Display for OctTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.first.0 < 0 {
            write!(f, "-")?;
        }
        write!(f, "{}", self.first.1)?;
        if let Some((s, v)) = &self.second {
            write!(f, " {} {v}", if *s < 0 { '-' } else { '+' })?;
        }
        Ok(())
    }
}

/// `term <= k`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct OctConstraint {
    pub term: OctTerm,
    pub k: i64,
}

impl fmt::Display for OctConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <= {}", self.term, self.k)
    }
}

impl OctConstraint {
    pub fn holds(&self, env: &BTreeMap<String, BigInt>) -> bool {
        self.term.eval(env) <= BigInt::from(self.k)
    }

    /// Parses strings like `x - y <= 3` or `-x <= 0`.
    pub fn parse(src: &str) -> Result<OctConstraint, LangError> {
        let expr = crate::lang::parse_expr_str(src)?;
        let bad = || LangError::Syntax {
            span: Span::default(),
            msg: format!("not an octagonal constraint: `{src}`"),
        };
        let ExprKind::Binary(crate::lang::BinOp::Le, lhs, rhs) = &expr.kind else {
            return Err(bad());
        };
        let k = match &rhs.kind {
            ExprKind::Int(v) => *v,
            ExprKind::Unary(UnOp::Neg, inner) => match &inner.kind {
                ExprKind::Int(v) => -*v,
                _ => return Err(bad()),
            },
            _ => return Err(bad()),
        };
        fn signed_var(e: &Expr) -> Option<(i8, String)> {
            match &e.kind {
                ExprKind::Var(v) => Some((1, v.clone())),
                ExprKind::Unary(UnOp::Neg, inner) => match &inner.kind {
                    ExprKind::Var(v) => Some((-1, v.clone())),
                    _ => None,
                },
                _ => None,
            }
        }
        let term = match &lhs.kind {
            ExprKind::Binary(op, a, b)
                if matches!(op, crate::lang::BinOp::Add | crate::lang::BinOp::Sub) =>
            {
                let (s1, v1) = signed_var(a).ok_or_else(bad)?;
                let (mut s2, v2) = signed_var(b).ok_or_else(bad)?;
                if matches!(op, crate::lang::BinOp::Sub) {
                    s2 = -s2;
                }
                if v1 == v2 {
                    return Err(bad());
                }
                OctTerm::pair(s1, &v1, s2, &v2)
            }
            _ => {
                let (s, v) = signed_var(lhs).ok_or_else(bad)?;
                OctTerm::single(s, &v)
            }
        };
        Ok(OctConstraint { term, k })
    }
}

/// 2n single terms then 4*C(n,2) pair terms, in variable-list order.
pub fn enumerate_oct_terms(vars: &[String]) -> Vec<OctTerm> {
    let mut out = Vec::new();
    for v in vars {
        out.push(OctTerm::single(1, v));
        out.push(OctTerm::single(-1, v));
    }
    for i in 0..vars.len() {
        for j in i + 1..vars.len() {
            for (s1, s2) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                out.push(OctTerm::pair(s1, &vars[i], s2, &vars[j]));
            }
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProbeResult {
    /// No counterexample; `complete` means the whole box was swept.
    NoCex { complete: bool },
    /// Bound refuted; greatest term value among the counterexamples' traces.
    Cex { observed_max: i64 },
}

/// Answers `term <= k` queries against some ground truth.
pub trait BoundOracle {
    fn probe(&mut self, term: &OctTerm, k: i64) -> ProbeResult;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct BoundSearch {
    pub probes: u32,
    /// None: no bound within the cap exists (or the term overflows i64).
    pub result: Option<(i64, bool)>, // (bound, proved on box)
}

/// Binary search for the least k in [minv, maxv] with `term <= k` on the box.
/// The interval shrinks from above on unrefuted probes and jumps the lower
/// end to the observed maximum on refuted ones.
pub fn find_upper_bound(
    oracle: &mut dyn BoundOracle,
    term: &OctTerm,
    minv: i64,
    maxv: i64,
) -> BoundSearch {
    let mut out = BoundSearch::default();
    let cap = maxv;
    let mut minv = minv;
    let mut maxv = maxv;
    let mut maxv_proved = false;
    loop {
        if minv == maxv {
            out.result = Some((maxv, maxv_proved));
            return out;
        }
        if maxv - minv == 1 {
            out.probes += 1;
            match oracle.probe(term, minv) {
                ProbeResult::NoCex { complete } => {
                    out.result = Some((minv, complete));
                    return out;
                }
                ProbeResult::Cex { observed_max } => {
                    if observed_max > cap {
                        return out;
                    }
                    out.result = Some((maxv, maxv_proved));
                    return out;
                }
            }
        }
        // ceil((minv + maxv) / 2)
        let midv = (minv + maxv + 1).div_euclid(2);
        out.probes += 1;
        match oracle.probe(term, midv) {
            ProbeResult::NoCex { complete } => {
                maxv = midv;
                maxv_proved = complete;
            }
            ProbeResult::Cex { observed_max } => {
                if observed_max > cap {
                    return out;
                }
                debug_assert!(observed_max > midv || observed_max > minv);
                minv = observed_max.max(minv + 1);
            }
        }
    }
}

/// Greatest k in [minv, maxv] with `k <= term` on the box: the mirror image
/// of [`find_upper_bound`] on the negated term.
pub fn find_lower_bound(
    oracle: &mut dyn BoundOracle,
    term: &OctTerm,
    minv: i64,
    maxv: i64,
) -> BoundSearch {
    let mut s = find_upper_bound(oracle, &term.negated(), -maxv, -minv);
    s.result = s.result.map(|(k, proved)| (-k, proved));
    s
}

/// Oracle backed by the verifier: a probe is a counterexample search for
/// `term <= k` at the location, and the observed maximum scans every trace of
/// every returned counterexample input.
pub struct VerifierOracle<'a, 'p> {
    pub verifier: &'a mut Verifier<'p>,
    pub loc: LocationId,
    pub all_vars: Vec<String>,
    pub max_cex_returned: usize,
}

impl BoundOracle for VerifierOracle<'_, '_> {
    fn probe(&mut self, term: &OctTerm, k: i64) -> ProbeResult {
        let all_vars = self.all_vars.clone();
        let bound = BigInt::from(k);
        let res = self.verifier.find_cex(
            &self.loc,
            |row| {
                let env: BTreeMap<String, BigInt> = all_vars
                    .iter()
                    .zip(row)
                    .map(|(n, x)| (n.clone(), x.clone()))
                    .collect();
                term.eval(&env) <= bound
            },
            &HashSet::new(),
            self.max_cex_returned,
        );
        match res {
            CexResult::NoneFound { complete, .. } => ProbeResult::NoCex { complete },
            CexResult::Disproved { cexs } => {
                let mut observed: Option<BigInt> = None;
                for input in &cexs {
                    let Ok(by_loc) = self.verifier.cache.run(input) else {
                        continue;
                    };
                    let Some(ids) = by_loc.get(&self.loc) else {
                        continue;
                    };
                    for &id in ids {
                        let row = self.verifier.cache.loc_traces(&self.loc).row(id);
                        let env: BTreeMap<String, BigInt> = self
                            .all_vars
                            .iter()
                            .zip(row)
                            .map(|(n, x)| (n.clone(), x.clone()))
                            .collect();
                        let val = term.eval(&env);
                        if observed.as_ref().is_none_or(|o| val > *o) {
                            observed = Some(val);
                        }
                    }
                }
                let observed = observed.expect("a counterexample input visits the location");
                match observed.to_i64() {
                    Some(v) => ProbeResult::Cex { observed_max: v },
                    // saturate: certainly beyond any i64 cap
                    None => ProbeResult::Cex { observed_max: i64::MAX },
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct InferredOct {
    pub c: OctConstraint,
    pub status: EqStatus,
}

#[derive(Clone, Debug, Default)]
pub struct OctStats {
    pub terms_considered: usize,
    pub skipped_prefilter: usize,
    pub dropped: usize,
    pub probes: u32,
}

#[derive(Clone, Debug)]
pub enum OctOutcome {
    Constraints { octs: Vec<InferredOct>, stats: OctStats },
    Unreachable,
    NotEnoughTraces,
}

#[derive(Clone, Copy, Debug)]
pub struct OctInferConfig {
    /// Bounds are searched in [-max_abs, max_abs].
    pub max_abs: i64,
    pub max_cex_returned: usize,
    pub gather_batch: usize,
}

impl Default for OctInferConfig {
    fn default() -> Self {
        OctInferConfig {
            max_abs: 10,
            max_cex_returned: 16,
            gather_batch: 48,
        }
    }
}

/// Upper bounds for every octagonal term over the variables in scope at
/// `loc` (or the `vars` subset). Terms whose already-observed maximum exceeds
/// the cap are skipped without probing; unproven search results get one
/// final verification and are dropped if refuted.
pub fn infer_octagons(
    v: &mut Verifier,
    loc: &LocationId,
    vars: Option<&[String]>,
    cfg: &OctInferConfig,
) -> Result<OctOutcome, LangError> {
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

    // Make sure there is data at the location at all.
    if v.cache.loc_traces(loc).is_empty() {
        match v.find_cex(loc, |_| false, &HashSet::new(), cfg.gather_batch) {
            CexResult::Disproved { .. } => {}
            CexResult::NoneFound { complete: true, .. } => return Ok(OctOutcome::Unreachable),
            CexResult::NoneFound { complete: false, .. } => {
                return Ok(OctOutcome::NotEnoughTraces)
            }
        }
        if v.cache.loc_traces(loc).is_empty() {
            return Ok(OctOutcome::NotEnoughTraces);
        }
    }

    let terms = enumerate_oct_terms(&vars);
    let mut stats = OctStats {
        terms_considered: terms.len(),
        ..Default::default()
    };
    let idx: BTreeMap<&str, usize> = all_vars
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let cap_big = BigInt::from(cfg.max_abs);

    let mut out = Vec::new();
    for term in terms {
        // pre-filter on data already in hand
        let lt = v.cache.loc_traces(loc);
        let mut observed: Option<BigInt> = None;
        for id in 0..lt.len() as u32 {
            let row = lt.row(id);
            let mut val = BigInt::from(term.parts().0 .0) * &row[idx[term.parts().0 .1]];
            if let Some((s, name)) = term.parts().1 {
                val += BigInt::from(s) * &row[idx[name]];
            }
            if observed.as_ref().is_none_or(|o| val > *o) {
                observed = Some(val);
            }
        }
        if observed.as_ref().is_none_or(|o| *o > cap_big) {
            stats.skipped_prefilter += 1;
            continue;
        }

        let mut oracle = VerifierOracle {
            verifier: v,
            loc: loc.clone(),
            all_vars: all_vars.clone(),
            max_cex_returned: cfg.max_cex_returned,
        };
        let search = find_upper_bound(&mut oracle, &term, -cfg.max_abs, cfg.max_abs);
        stats.probes += search.probes;
        let Some((k, proved)) = search.result else {
            stats.dropped += 1;
            continue;
        };
        let status = if proved {
            EqStatus::ProvedOnBox
        } else {
            // one verification pass for bounds the search could not prove
            stats.probes += 1;
            let mut oracle = VerifierOracle {
                verifier: v,
                loc: loc.clone(),
                all_vars: all_vars.clone(),
                max_cex_returned: cfg.max_cex_returned,
            };
            match oracle.probe(&term, k) {
                ProbeResult::NoCex { complete: true } => EqStatus::ProvedOnBox,
                ProbeResult::NoCex { complete: false } => EqStatus::AcceptedWithinBudget,
                ProbeResult::Cex { .. } => {
                    stats.dropped += 1;
                    continue;
                }
            }
        };
        out.push(InferredOct {
            c: OctConstraint { term, k },
            status,
        });
    }
    out.sort_by(|a, b| a.c.cmp(&b.c));
    Ok(OctOutcome::Constraints { octs: out, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{ExecCache, RunOptions};
    use crate::lang::parse_program;
    use crate::verify::VerifyBudget;

    #[test]
    fn term_enumeration_counts_and_order() {
        let v3: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let terms = enumerate_oct_terms(&v3);
        assert_eq!(terms.len(), 18);
        let shown: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
        assert_eq!(&shown[..6], &["a", "-a", "b", "-b", "c", "-c"]);
        assert_eq!(&shown[6..10], &["a + b", "a - b", "-a + b", "-a - b"]);
        let v6: Vec<String> = ["a", "b", "q", "r", "x", "y"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(enumerate_oct_terms(&v6).len(), 72);
    }

    #[test]
    fn pair_terms_canonicalize_variable_order() {
        let t = OctTerm::pair(1, "y", -1, "r");
        assert_eq!(t.to_string(), "-r + y");
        assert_eq!(t.negated().to_string(), "r - y");
    }

    #[test]
    fn constraint_parsing() {
        let c = OctConstraint::parse("x - y <= 3").unwrap();
        assert_eq!(c.to_string(), "x - y <= 3");
        let c = OctConstraint::parse("-x <= 0").unwrap();
        assert_eq!(c.to_string(), "-x <= 0");
        let c = OctConstraint::parse("y - x <= -2").unwrap();
        assert_eq!(c.to_string(), "-x + y <= -2");
        let c = OctConstraint::parse("-q - r <= 10").unwrap();
        assert_eq!(c.to_string(), "-q - r <= 10");
        assert!(OctConstraint::parse("x + x <= 4").is_err());
        assert!(OctConstraint::parse("2 * x <= 4").is_err());
        assert!(OctConstraint::parse("x >= 3").is_err());
        assert!(OctConstraint::parse("x <= y").is_err());
    }

    /// Scripted ground truth: true maximum -1; probes at k < -3 observe -3,
    /// probes in [-3, -2] observe -1.
    struct Scripted {
        log: Vec<i64>,
    }

    impl BoundOracle for Scripted {
        fn probe(&mut self, _term: &OctTerm, k: i64) -> ProbeResult {
            self.log.push(k);
            if k >= -1 {
                ProbeResult::NoCex { complete: true }
            } else if k < -3 {
                ProbeResult::Cex { observed_max: -3 }
            } else {
                ProbeResult::Cex { observed_max: -1 }
            }
        }
    }

    #[test]
    fn binary_search_probe_sequence() {
        let mut oracle = Scripted { log: Vec::new() };
        let term = OctTerm::single(1, "r");
        let search = find_upper_bound(&mut oracle, &term, -10, 10);
        assert_eq!(oracle.log, vec![0, -5, -1, -2]);
        assert_eq!(search.probes, 4);
        assert_eq!(search.result, Some((-1, true)));
    }

    #[test]
    fn lower_bound_mirrors_upper_bound() {
        // ground truth: term ranges over [2, 7]; the greatest lower bound is 2
        struct Floor;
        impl BoundOracle for Floor {
            fn probe(&mut self, t: &OctTerm, k: i64) -> ProbeResult {
                // receives the negated term: -x <= k  <=>  x >= -k
                assert_eq!(t.to_string(), "-x");
                if -k <= 2 {
                    ProbeResult::NoCex { complete: true }
                } else {
                    ProbeResult::Cex { observed_max: -2 }
                }
            }
        }
        let term = OctTerm::single(1, "x");
        let search = find_lower_bound(&mut Floor, &term, -10, 10);
        assert_eq!(search.result, Some((2, true)));
    }

    #[test]
    fn search_detects_bound_beyond_cap() {
        struct Unbounded;
        impl BoundOracle for Unbounded {
            fn probe(&mut self, _t: &OctTerm, _k: i64) -> ProbeResult {
                ProbeResult::Cex { observed_max: 50 }
            }
        }
        let term = OctTerm::single(1, "x");
        let search = find_upper_bound(&mut Unbounded, &term, -10, 10);
        assert_eq!(search.result, None);
        assert_eq!(search.probes, 1);
    }

    #[test]
    fn exact_extrema_on_simple_program() {
        let p = parse_program("inputs x in [0, 8];\nint y = 2 * x;\n[L]\n").unwrap();
        let mut v = Verifier::new(
            ExecCache::new(&p, RunOptions::default()),
            VerifyBudget::default(),
        );
        let out = infer_octagons(
            &mut v,
            &LocationId("L".into()),
            None,
            &OctInferConfig::default(),
        )
        .unwrap();
        let OctOutcome::Constraints { octs, stats } = out else {
            panic!("expected constraints");
        };
        let got: Vec<String> = octs.iter().map(|o| o.c.to_string()).collect();
        assert!(got.contains(&"x <= 8".to_string()), "{got:?}");
        assert!(got.contains(&"-x <= 0".to_string()));
        assert!(got.contains(&"x - y <= 0".to_string()));
        assert!(got.contains(&"-x + y <= 8".to_string()));
        assert!(got.contains(&"-x - y <= 0".to_string()));
        // y alone reaches 16 > 10 and x + y reaches 24: skipped, not
        // reported with a wrong cap
        assert!(!got.iter().any(|s| s.starts_with("y <=")));
        assert_eq!(stats.skipped_prefilter, 2);
        assert!(octs.iter().all(|o| o.status == EqStatus::ProvedOnBox));
    }

    #[test]
    fn negative_bounds_found_exactly() {
        // r - y at the exit of a division loop is in [-y, -1] within the box
        let src = "\
inputs x in [1, 6], y in [1, 6];
int r = x;
while (r >= y) { r = r - y; }
[L2]
";
        let p = parse_program(src).unwrap();
        let mut v = Verifier::new(
            ExecCache::new(&p, RunOptions::default()),
            VerifyBudget::default(),
        );
        let out = infer_octagons(
            &mut v,
            &LocationId("L2".into()),
            None,
            &OctInferConfig::default(),
        )
        .unwrap();
        let OctOutcome::Constraints { octs, .. } = out else {
            panic!()
        };
        let got: Vec<String> = octs.iter().map(|o| o.c.to_string()).collect();
        // r ranges over [0, 5]; r - y over [-6, -1]
        assert!(got.contains(&"r - y <= -1".to_string()), "{got:?}");
        assert!(got.contains(&"-r <= 0".to_string()));
        assert!(got.contains(&"r <= 5".to_string()));
        assert!(got.contains(&"-r + y <= 6".to_string()));
    }
}
