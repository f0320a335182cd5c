//! Counterexample search. A candidate invariant at a location is checked by
//! running inputs from the declared box and evaluating the candidate on every
//! recorded row; an input whose run produces a violating row is a
//! counterexample.
//!
//! Exhaustive mode enumerates the whole box in a fixed order (per coordinate
//! smallest magnitude first, positives before negatives, lexicographic across
//! coordinates) and can therefore *prove* a candidate on the box by sweeping
//! it completely. Random mode samples uniformly with a seeded generator and
//! can only ever refute. Runs are memoized, and the candidate is evaluated at
//! most once per distinct row, so repeated sweeps cost hash lookups.

use crate::exec::ExecCache;
use crate::lang::LocationId;
use num_bigint::BigInt;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SearchMode {
    Exhaustive,
    Random,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyBudget {
    pub mode: SearchMode,
    /// Inputs examined per `find_cex` call.
    pub max_inputs: u64,
    pub seed: u64,
}

impl Default for VerifyBudget {
    fn default() -> Self {
        VerifyBudget {
            mode: SearchMode::Exhaustive,
            max_inputs: 100_000,
            seed: 0,
        }
    }
}

/// Counterexamples returned by one search call.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CexResult {
    /// A violating input exists. `cexs` holds up to `max_return` violating
    /// inputs not in the caller's `known` set, in search order; it is empty
    /// when every violating input found was already known.
    Disproved { cexs: Vec<Vec<i64>> },
    /// No violation. `complete` is true only when the entire box was swept,
    /// which proves the candidate on the box.
    NoneFound { complete: bool, checked: u64 },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ReachResult {
    /// Inputs that reach the location, in search order.
    Reachable(Vec<Vec<i64>>),
    /// Full sweep, nothing reached the location.
    UnreachableProven,
    /// Budget ran out before any reaching input was found.
    Unknown,
}

pub struct Verifier<'p> {
    pub cache: ExecCache<'p>,
    pub budget: VerifyBudget,
    calls: u64,
    pub total_checked: u64,
}

impl<'p> Verifier<'p> {
    pub fn new(cache: ExecCache<'p>, budget: VerifyBudget) -> Self {
        Verifier {
            cache,
            budget,
            calls: 0,
            total_checked: 0,
        }
    }

    /// Number of `find_cex` searches issued so far.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    /// Box size of the cached program, saturating.
    pub fn box_size(&self) -> u128 {
        self.cache
            .program
            .inputs
            .iter()
            .map(|i| (i.hi as i128 - i.lo as i128 + 1) as u128)
            .fold(1u128, |acc, n| acc.saturating_mul(n))
    }

    /// Searches for an input whose run violates `pred` on some row at `loc`.
    /// Stops early once `max_return` fresh counterexamples are in hand.
    pub fn find_cex<F>(
        &mut self,
        loc: &LocationId,
        pred: F,
        known: &HashSet<Vec<i64>>,
        max_return: usize,
    ) -> CexResult
    where
        F: Fn(&[BigInt]) -> bool,
    {
        self.calls += 1;
        let mut memo: Vec<Option<bool>> = Vec::new();
        let mut cexs: Vec<Vec<i64>> = Vec::new();
        let mut stale_violation = false;
        let mut checked: u64 = 0;
        let mut complete = false;

        let consider = |input: &[i64],
                            cache: &mut ExecCache<'p>,
                            memo: &mut Vec<Option<bool>>|
         -> bool {
            // returns true when the input violates the candidate
            let Ok(by_loc) = cache.run(input) else {
                return false;
            };
            let Some(ids) = by_loc.get(loc) else {
                return false;
            };
            ids.iter().any(|&id| {
                let idx = id as usize;
                if idx >= memo.len() {
                    memo.resize(idx + 1, None);
                }
                let ok = *memo[idx].get_or_insert_with(|| pred(cache.loc_traces(loc).row(id)));
                !ok
            })
        };

        match self.budget.mode {
            SearchMode::Exhaustive => {
                let mut iter = BoxIter::new(self.cache.program.inputs.as_slice());
                loop {
                    if checked >= self.budget.max_inputs {
                        break;
                    }
                    let Some(input) = iter.next() else {
                        complete = true;
                        break;
                    };
                    checked += 1;
                    if consider(&input, &mut self.cache, &mut memo) {
                        if known.contains(&input) {
                            stale_violation = true;
                        } else {
                            cexs.push(input);
                            if cexs.len() >= max_return {
                                break;
                            }
                        }
                    }
                }
            }
            SearchMode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.budget.seed ^ self.calls);
                let inputs = self.cache.program.inputs.clone();
                while checked < self.budget.max_inputs {
                    checked += 1;
                    let input: Vec<i64> = inputs
                        .iter()
                        .map(|d| rng.gen_range(d.lo..=d.hi))
                        .collect();
                    if consider(&input, &mut self.cache, &mut memo) {
                        if known.contains(&input) || cexs.contains(&input) {
                            stale_violation = true;
                        } else {
                            cexs.push(input);
                            if cexs.len() >= max_return {
                                break;
                            }
                        }
                    }
                    if inputs.is_empty() {
                        // a single empty tuple is the whole box
                        complete = true;
                        break;
                    }
                }
            }
        }
        self.total_checked += checked;

        if !cexs.is_empty() || stale_violation {
            CexResult::Disproved { cexs }
        } else {
            CexResult::NoneFound { complete, checked }
        }
    }

    /// Reachability of `loc`: searches for inputs that visit it at all.
    pub fn check_reachable(&mut self, loc: &LocationId, max_return: usize) -> ReachResult {
        match self.find_cex(loc, |_| false, &HashSet::new(), max_return) {
            CexResult::Disproved { cexs } => ReachResult::Reachable(cexs),
            CexResult::NoneFound { complete: true, .. } => ReachResult::UnreachableProven,
            CexResult::NoneFound { complete: false, .. } => ReachResult::Unknown,
        }
    }
}

/// Exhaustive box enumeration. Each coordinate is ordered by magnitude
/// (0, 1, -1, 2, -2, ...) clipped to its range; tuples advance
/// lexicographically with the first coordinate most significant.
struct BoxIter {
    values: Vec<Vec<i64>>,
    odometer: Vec<usize>,
    done: bool,
}

impl BoxIter {
    fn new(inputs: &[crate::lang::InputDecl]) -> Self {
        let values: Vec<Vec<i64>> = inputs
            .iter()
            .map(|d| {
                let mut vals: Vec<i64> = (d.lo..=d.hi).collect();
                vals.sort_by_key(|v| (v.unsigned_abs(), *v < 0));
                vals
            })
            .collect();
        BoxIter {
            odometer: vec![0; values.len()],
            values,
            done: false,
        }
    }
}

impl Iterator for BoxIter {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        if self.done {
            return None;
        }
        let item: Vec<i64> = self
            .odometer
            .iter()
            .zip(&self.values)
            .map(|(&i, vals)| vals[i])
            .collect();
        // advance, last coordinate fastest
        let mut k = self.values.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.odometer[k] += 1;
            if self.odometer[k] < self.values[k].len() {
                break;
            }
            self.odometer[k] = 0;
        }
        Some(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::RunOptions;
    use crate::lang::{parse_program, COHENDIV_SRC};
    use num_traits::ToPrimitive;

    fn verifier(src: &str) -> Verifier<'_> {
        // leak: tests only
        let p = Box::leak(Box::new(parse_program(src).unwrap()));
        Verifier::new(
            ExecCache::new(p, RunOptions::default()),
            VerifyBudget::default(),
        )
    }

    #[test]
    fn box_iter_order_magnitude_first() {
        let p = parse_program("inputs x in [-2, 2], y in [0, 1];\n[L]\n").unwrap();
        let order: Vec<Vec<i64>> = BoxIter::new(&p.inputs).collect();
        assert_eq!(order.len(), 10);
        assert_eq!(order[0], vec![0, 0]);
        assert_eq!(order[1], vec![0, 1]);
        assert_eq!(order[2], vec![1, 0]);
        assert_eq!(order[4], vec![-1, 0]);
        assert_eq!(order[9], vec![-2, 1]);
    }

    #[test]
    fn empty_input_box_is_a_single_tuple() {
        let mut v = verifier("int x = 5;\n[L]\n");
        let loc = LocationId("L".into());
        match v.check_reachable(&loc, 8) {
            ReachResult::Reachable(cexs) => assert_eq!(cexs, vec![Vec::<i64>::new()]),
            other => panic!("{other:?}"),
        }
        // the lone input is now known: gathering again exhausts the box
        let known: HashSet<Vec<i64>> = [vec![]].into_iter().collect();
        let r = v.find_cex(&loc, |_| false, &known, 8);
        assert_eq!(r, CexResult::Disproved { cexs: vec![] });
    }

    #[test]
    fn accepts_true_invariant_on_box_and_refutes_false_one() {
        let src = "\
program cohendiv;
inputs x in [1, 8], y in [1, 8];
int q = 0;
int r = x;
while (r >= y) {
  int a = 1;
  int b = y;
  while [L1] (r >= 2 * b) {
    a = 2 * a;
    b = 2 * b;
  }
  r = r - b;
  q = q + a;
}
[L2]
";
        let mut v = verifier(src);
        let l1 = LocationId("L1".into());
        let l2 = LocationId("L2".into());
        // vars at L1: a b q r x y — check b == y*a
        let r = v.find_cex(
            &l1,
            |row| row[1] == &row[5] * &row[0],
            &HashSet::new(),
            16,
        );
        assert_eq!(r, CexResult::NoneFound { complete: true, checked: 64 });
        // at L2 (q r x y): r >= y is false everywhere (r = x mod y < y)
        let r = v.find_cex(&l2, |row| row[1] >= row[3], &HashSet::new(), 16);
        match r {
            CexResult::Disproved { cexs } => {
                assert_eq!(cexs.len(), 16);
                assert_eq!(cexs[0], vec![1, 1]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn known_inputs_are_not_returned_again() {
        let mut v = verifier("inputs x in [0, 5];\n[L]\n");
        let loc = LocationId("L".into());
        let known: HashSet<Vec<i64>> = [vec![0], vec![1]].into_iter().collect();
        let r = v.find_cex(&loc, |_| false, &known, 3);
        assert_eq!(
            r,
            CexResult::Disproved {
                cexs: vec![vec![2], vec![3], vec![4]]
            }
        );
    }

    #[test]
    fn budget_truncation_is_not_a_proof() {
        let mut v = verifier("inputs x in [0, 99];\n[L]\n");
        v.budget.max_inputs = 10;
        let loc = LocationId("L".into());
        let r = v.find_cex(&loc, |_| true, &HashSet::new(), 16);
        assert_eq!(
            r,
            CexResult::NoneFound {
                complete: false,
                checked: 10
            }
        );
    }

    #[test]
    fn unreachable_location_proven_by_full_sweep() {
        let mut v = verifier("inputs x in [0, 9];\nif (x > 100) { [L] }\n[M]\n");
        let loc = LocationId("L".into());
        assert_eq!(v.check_reachable(&loc, 4), ReachResult::UnreachableProven);
    }

    #[test]
    fn random_mode_is_deterministic_and_refutes() {
        let src = "inputs x in [0, 1000];\nint y = x * x;\n[L]\n";
        let p = parse_program(src).unwrap();
        let run = |seed: u64| {
            let cache = ExecCache::new(&p, RunOptions::default());
            let mut v = Verifier::new(
                cache,
                VerifyBudget {
                    mode: SearchMode::Random,
                    max_inputs: 1000,
                    seed,
                },
            );
            let loc = LocationId("L".into());
            // vars: x y — claim y <= 900
            v.find_cex(
                &loc,
                |row| row[1].to_i64().is_some_and(|v| v <= 900),
                &HashSet::new(),
                4,
            )
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a, b);
        assert!(matches!(a, CexResult::Disproved { .. }));
        // random mode cannot prove
        let p2 = parse_program("inputs x in [0, 3];\n[L]\n").unwrap();
        let mut v = Verifier::new(
            ExecCache::new(&p2, RunOptions::default()),
            VerifyBudget {
                mode: SearchMode::Random,
                max_inputs: 50,
                seed: 1,
            },
        );
        let r = v.find_cex(&LocationId("L".into()), |_| true, &HashSet::new(), 4);
        assert!(matches!(r, CexResult::NoneFound { complete: false, .. }));
    }

    #[test]
    fn full_cohendiv_sweep_is_cheap_when_memoized() {
        let p = parse_program(COHENDIV_SRC).unwrap();
        let cache = ExecCache::new(&p, RunOptions::default());
        let mut v = Verifier::new(cache, VerifyBudget::default());
        let l1 = LocationId("L1".into());
        let t = |row: &[BigInt]| row[1] == &row[5] * &row[0];
        let r1 = v.find_cex(&l1, t, &HashSet::new(), 16);
        let runs_after_first = v.cache.executed_runs;
        let r2 = v.find_cex(&l1, t, &HashSet::new(), 16);
        assert_eq!(r1, r2);
        assert_eq!(v.cache.executed_runs, runs_after_first);
        assert_eq!(runs_after_first, 900);
    }
}
