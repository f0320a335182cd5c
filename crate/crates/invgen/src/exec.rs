//! Concrete execution: a big-integer tree-walk interpreter that records the
//! values of in-scope variables at every marked location, plus trace
//! containers, a CSV codec for them, and a memoizing execution cache.
//!
//! Division and modulo truncate toward zero. With `wrap64` set, every
//! arithmetic result wraps into the signed 64-bit range; by default values
//! grow without bound.

use crate::lang::{BinOp, Block, Expr, ExprKind, LocationId, Program, Stmt, UnOp};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Statements + condition evaluations before the run is abandoned.
    pub step_budget: u64,
    /// Per location, per run: rows kept (reservoir-sampled beyond this).
    pub trace_cap: usize,
    pub seed: u64,
    pub wrap64: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            step_budget: 1_000_000,
            trace_cap: 10_000,
            seed: 0,
            wrap64: false,
        }
    }
}

#[derive(Error, Clone, PartialEq, Eq, Debug)]
pub enum RunError {
    #[error("assume violated")]
    AssumeViolated,
    #[error("step budget exhausted")]
    Diverged,
    #[error("division by zero at {0}")]
    DivideByZero(crate::lang::Span),
}

/// All rows one run recorded, in visit order, keyed by location.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Run {
    pub traces: BTreeMap<LocationId, Vec<Vec<BigInt>>>,
    pub steps: u64,
}

#[derive(Clone, Debug)]
enum Value {
    Int(BigInt),
    Bool(bool),
}

impl Value {
    fn int(self) -> BigInt {
        match self {
            Value::Int(v) => v,
            Value::Bool(_) => unreachable!("type checker admits ints only here"),
        }
    }

    fn boolean(self) -> bool {
        match self {
            Value::Bool(b) => b,
            Value::Int(_) => unreachable!("type checker admits bools only here"),
        }
    }
}

fn wrap64(v: BigInt) -> BigInt {
    let two64 = BigInt::from(1u8) << 64u32;
    let r = v.mod_floor(&two64);
    if r >= (BigInt::from(1u8) << 63u32) {
        r - two64
    } else {
        r
    }
}

struct Env {
    frames: Vec<Vec<(String, BigInt)>>,
}

impl Env {
    fn lookup(&self, name: &str) -> &BigInt {
        for frame in self.frames.iter().rev() {
            for (n, v) in frame.iter().rev() {
                if n == name {
                    return v;
                }
            }
        }
        unreachable!("scope checker resolved `{name}`")
    }

    fn set(&mut self, name: &str, value: BigInt) {
        for frame in self.frames.iter_mut().rev() {
            for (n, v) in frame.iter_mut().rev() {
                if n == name {
                    *v = value;
                    return;
                }
            }
        }
        unreachable!("scope checker resolved `{name}`")
    }
}

struct Machine<'p> {
    program: &'p Program,
    opts: RunOptions,
    env: Env,
    run: Run,
    /// rows seen per location this run, for reservoir sampling past the cap
    seen: BTreeMap<LocationId, usize>,
    rng: ChaCha8Rng,
    budget: u64,
}

impl<'p> Machine<'p> {
    fn tick(&mut self) -> Result<(), RunError> {
        if self.budget == 0 {
            return Err(RunError::Diverged);
        }
        self.budget -= 1;
        self.run.steps += 1;
        Ok(())
    }

    fn record(&mut self, loc: &LocationId) {
        let vars = self
            .program
            .extract_vars(loc)
            .expect("marked locations were collected during analysis");
        let row: Vec<BigInt> = vars.iter().map(|v| self.env.lookup(v).clone()).collect();
        let seen = self.seen.entry(loc.clone()).or_insert(0);
        let rows = self.run.traces.entry(loc.clone()).or_default();
        if rows.len() < self.opts.trace_cap {
            rows.push(row);
        } else {
            let j = self.rng.gen_range(0..*seen + 1);
            if j < rows.len() {
                rows[j] = row;
            }
        }
        *seen += 1;
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, RunError> {
        match &e.kind {
            ExprKind::Int(v) => Ok(Value::Int(BigInt::from(*v))),
            ExprKind::Var(name) => Ok(Value::Int(self.env.lookup(name).clone())),
            ExprKind::Unary(UnOp::Neg, inner) => {
                let v = -self.eval(inner)?.int();
                Ok(Value::Int(if self.opts.wrap64 { wrap64(v) } else { v }))
            }
            ExprKind::Unary(UnOp::Not, inner) => {
                let b = self.eval(inner)?.boolean();
                Ok(Value::Bool(!b))
            }
            ExprKind::Binary(op, l, r) => {
                // && and || short-circuit
                match op {
                    BinOp::And => {
                        let lv = self.eval(l)?.boolean();
                        return Ok(Value::Bool(lv && self.eval(r)?.boolean()));
                    }
                    BinOp::Or => {
                        let lv = self.eval(l)?.boolean();
                        return Ok(Value::Bool(lv || self.eval(r)?.boolean()));
                    }
                    _ => {}
                }
                let lv = self.eval(l)?.int();
                let rv = self.eval(r)?.int();
                let arith = |v: BigInt, opts: &RunOptions| {
                    if opts.wrap64 {
                        wrap64(v)
                    } else {
                        v
                    }
                };
                match op {
                    BinOp::Add => Ok(Value::Int(arith(lv + rv, &self.opts))),
                    BinOp::Sub => Ok(Value::Int(arith(lv - rv, &self.opts))),
                    BinOp::Mul => Ok(Value::Int(arith(lv * rv, &self.opts))),
                    BinOp::Div => {
                        if rv.is_zero() {
                            return Err(RunError::DivideByZero(e.span));
                        }
                        Ok(Value::Int(arith(lv / rv, &self.opts)))
                    }
                    BinOp::Mod => {
                        if rv.is_zero() {
                            return Err(RunError::DivideByZero(e.span));
                        }
                        Ok(Value::Int(arith(lv % rv, &self.opts)))
                    }
                    BinOp::Lt => Ok(Value::Bool(lv < rv)),
                    BinOp::Le => Ok(Value::Bool(lv <= rv)),
                    BinOp::Gt => Ok(Value::Bool(lv > rv)),
                    BinOp::Ge => Ok(Value::Bool(lv >= rv)),
                    BinOp::Eq => Ok(Value::Bool(lv == rv)),
                    BinOp::Ne => Ok(Value::Bool(lv != rv)),
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
        }
    }

    fn exec_block(&mut self, b: &Block) -> Result<(), RunError> {
        self.env.frames.push(Vec::new());
        let r = self.exec_stmts(&b.stmts);
        self.env.frames.pop();
        r
    }

    fn exec_stmts(&mut self, stmts: &[Stmt]) -> Result<(), RunError> {
        for s in stmts {
            self.exec_stmt(s)?;
        }
        Ok(())
    }

    fn exec_stmt(&mut self, s: &Stmt) -> Result<(), RunError> {
        self.tick()?;
        match s {
            Stmt::Decl { name, init, .. } => {
                let v = self.eval(init)?.int();
                self.env.frames.last_mut().unwrap().push((name.clone(), v));
                Ok(())
            }
            Stmt::Assign { name, value, .. } => {
                let v = self.eval(value)?.int();
                self.env.set(name, v);
                Ok(())
            }
            Stmt::Assume { cond, .. } => {
                if self.eval(cond)?.boolean() {
                    Ok(())
                } else {
                    Err(RunError::AssumeViolated)
                }
            }
            Stmt::Mark { loc, .. } => {
                self.record(loc);
                Ok(())
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                if self.eval(cond)?.boolean() {
                    self.exec_block(then_branch)
                } else if let Some(e) = else_branch {
                    self.exec_block(e)
                } else {
                    Ok(())
                }
            }
            Stmt::While {
                loc, cond, body, ..
            } => loop {
                // the head mark fires before every condition test, including
                // the failing one
                if let Some(l) = loc {
                    self.record(l);
                }
                self.tick()?;
                if !self.eval(cond)?.boolean() {
                    return Ok(());
                }
                self.exec_block(body)?;
            },
            Stmt::Scope { block, .. } => self.exec_block(block),
        }
    }
}

/// Runs `program` on one input vector (values for `program.inputs` in order).
pub fn exec(program: &Program, input: &[i64], opts: &RunOptions) -> Result<Run, RunError> {
    assert_eq!(
        input.len(),
        program.inputs.len(),
        "input arity mismatch: got {}, program declares {}",
        input.len(),
        program.inputs.len()
    );
    let base: Vec<(String, BigInt)> = program
        .inputs
        .iter()
        .zip(input)
        .map(|(d, v)| (d.name.clone(), BigInt::from(*v)))
        .collect();
    let mut m = Machine {
        program,
        opts: *opts,
        env: Env { frames: vec![base] },
        run: Run::default(),
        seen: BTreeMap::new(),
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        budget: opts.step_budget,
    };
    m.exec_stmts(&program.body.stmts)?;
    Ok(m.run)
}

// ── Trace sets ──────────────────────────────────────────────────────────────

/// Distinct rows observed at one location, with the first input that produced
/// each row. Insertion order is first-seen order.
#[derive(Clone, Debug)]
pub struct TraceSet {
    pub loc: LocationId,
    pub vars: Vec<String>,
    rows: Vec<Vec<BigInt>>,
    index: HashMap<Vec<BigInt>, usize>,
    first_input: Vec<Vec<i64>>,
}

impl TraceSet {
    pub fn new(loc: LocationId, vars: Vec<String>) -> Self {
        TraceSet {
            loc,
            vars,
            rows: Vec::new(),
            index: HashMap::new(),
            first_input: Vec::new(),
        }
    }

    /// Returns true when the row was new.
    pub fn add_row(&mut self, row: Vec<BigInt>, input: &[i64]) -> bool {
        debug_assert_eq!(row.len(), self.vars.len());
        if self.index.contains_key(&row) {
            return false;
        }
        self.index.insert(row.clone(), self.rows.len());
        self.rows.push(row);
        self.first_input.push(input.to_vec());
        true
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<BigInt>] {
        &self.rows
    }

    pub fn first_input(&self, row_idx: usize) -> &[i64] {
        &self.first_input[row_idx]
    }
}

/// Runs every input and merges the recorded rows into per-location trace
/// sets. Failing runs (assume violations, budget, division by zero)
/// contribute nothing.
pub fn exec_many(
    program: &Program,
    inputs: &[Vec<i64>],
    opts: &RunOptions,
) -> BTreeMap<LocationId, TraceSet> {
    let mut out: BTreeMap<LocationId, TraceSet> = program
        .locations()
        .map(|l| {
            let vars = program.extract_vars(l).unwrap().to_vec();
            (l.clone(), TraceSet::new(l.clone(), vars))
        })
        .collect();
    for input in inputs {
        let Ok(run) = exec(program, input, opts) else {
            continue;
        };
        for (loc, rows) in run.traces {
            let ts = out.get_mut(&loc).unwrap();
            for row in rows {
                ts.add_row(row, input);
            }
        }
    }
    out
}

// ── CSV codec ───────────────────────────────────────────────────────────────

#[derive(Error, Clone, PartialEq, Eq, Debug)]
pub enum CsvError {
    #[error("line {0}: empty or malformed header")]
    BadHeader(usize),
    #[error("line {line}: bad integer cell `{cell}`")]
    BadCell { line: usize, cell: String },
    #[error("line {line}: expected {want} cells, found {got}")]
    Ragged { line: usize, want: usize, got: usize },
}

/// Header line of variable names, then one row per line. Arbitrary-precision
/// decimal cells.
pub fn traces_to_csv(ts: &TraceSet) -> String {
    let mut out = String::new();
    out.push_str(&ts.vars.join(","));
    out.push('\n');
    for row in &ts.rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Strict inverse of [`traces_to_csv`]; blank lines are ignored. Duplicate
/// rows collapse. Row provenance is unknown, recorded as empty inputs.
pub fn traces_from_csv(loc: LocationId, text: &str) -> Result<TraceSet, CsvError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(CsvError::BadHeader(1))?;
    let vars: Vec<String> = header.trim().split(',').map(|s| s.trim().to_string()).collect();
    let ident_ok = |s: &str| {
        !s.is_empty()
            && s.bytes().next().is_some_and(|c| c.is_ascii_alphabetic() || c == b'_')
            && s.bytes().all(|c| c.is_ascii_alphanumeric() || c == b'_')
    };
    if vars.is_empty() || !vars.iter().all(|v| ident_ok(v)) {
        return Err(CsvError::BadHeader(1));
    }
    if vars
        .iter()
        .collect::<std::collections::BTreeSet<_>>()
        .len()
        != vars.len()
    {
        return Err(CsvError::BadHeader(1));
    }
    let mut ts = TraceSet::new(loc, vars);
    for (idx, line) in lines {
        let cells: Vec<&str> = line.trim().split(',').map(|s| s.trim()).collect();
        if cells.len() != ts.vars.len() {
            return Err(CsvError::Ragged {
                line: idx + 1,
                want: ts.vars.len(),
                got: cells.len(),
            });
        }
        let mut row = Vec::with_capacity(cells.len());
        for cell in cells {
            let ok = !cell.is_empty()
                && cell != "-"
                && cell
                    .strip_prefix('-')
                    .unwrap_or(cell)
                    .bytes()
                    .all(|c| c.is_ascii_digit());
            if !ok {
                return Err(CsvError::BadCell {
                    line: idx + 1,
                    cell: cell.to_string(),
                });
            }
            row.push(BigInt::parse_bytes(cell.as_bytes(), 10).ok_or_else(|| {
                CsvError::BadCell {
                    line: idx + 1,
                    cell: cell.to_string(),
                }
            })?);
        }
        ts.add_row(row, &[]);
    }
    Ok(ts)
}

// ── Execution cache ─────────────────────────────────────────────────────────

/// Interned distinct rows for one location.
#[derive(Clone, Debug, Default)]
pub struct LocTraces {
    rows: Vec<Vec<BigInt>>,
    ids: HashMap<Vec<BigInt>, u32>,
    first_input: Vec<Vec<i64>>,
}

impl LocTraces {
    fn intern(&mut self, row: Vec<BigInt>, input: &[i64]) -> u32 {
        if let Some(&id) = self.ids.get(&row) {
            return id;
        }
        let id = self.rows.len() as u32;
        self.ids.insert(row.clone(), id);
        self.rows.push(row);
        self.first_input.push(input.to_vec());
        id
    }

    pub fn row(&self, id: u32) -> &[BigInt] {
        &self.rows[id as usize]
    }

    pub fn first_input(&self, id: u32) -> &[i64] {
        &self.first_input[id as usize]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

type RunOutcome = Result<BTreeMap<LocationId, Vec<u32>>, RunError>;

/// Memoizes whole-program runs and interns the distinct rows per location, so
/// repeated sweeps of the input box re-execute nothing and candidate checks
/// evaluate each distinct row once.
pub struct ExecCache<'p> {
    pub program: &'p Program,
    opts: RunOptions,
    runs: HashMap<Vec<i64>, RunOutcome>,
    locs: BTreeMap<LocationId, LocTraces>,
    pub executed_runs: u64,
}

impl<'p> ExecCache<'p> {
    pub fn new(program: &'p Program, opts: RunOptions) -> Self {
        let locs = program
            .locations()
            .map(|l| (l.clone(), LocTraces::default()))
            .collect();
        ExecCache {
            program,
            opts,
            runs: HashMap::new(),
            locs,
            executed_runs: 0,
        }
    }

    pub fn options(&self) -> &RunOptions {
        &self.opts
    }

    /// Distinct-row ids visited by `input` at each location (sorted,
    /// deduplicated), or the run error.
    pub fn run(&mut self, input: &[i64]) -> RunOutcome {
        if let Some(cached) = self.runs.get(input) {
            return cached.clone();
        }
        self.executed_runs += 1;
        let outcome = match exec(self.program, input, &self.opts) {
            Ok(run) => {
                let mut by_loc = BTreeMap::new();
                for (loc, rows) in run.traces {
                    let lt = self.locs.get_mut(&loc).unwrap();
                    let mut ids: Vec<u32> =
                        rows.into_iter().map(|r| lt.intern(r, input)).collect();
                    ids.sort_unstable();
                    ids.dedup();
                    by_loc.insert(loc, ids);
                }
                Ok(by_loc)
            }
            Err(e) => Err(e),
        };
        self.runs.insert(input.to_vec(), outcome.clone());
        outcome
    }

    pub fn loc_traces(&self, loc: &LocationId) -> &LocTraces {
        &self.locs[loc]
    }

    /// Snapshot of everything interned so far at `loc`, as a trace set.
    pub fn trace_set(&self, loc: &LocationId) -> TraceSet {
        let vars = self.program.extract_vars(loc).unwrap().to_vec();
        let lt = &self.locs[loc];
        let mut ts = TraceSet::new(loc.clone(), vars);
        for (i, row) in lt.rows.iter().enumerate() {
            ts.add_row(row.clone(), &lt.first_input[i]);
        }
        ts
    }
}

impl fmt::Display for TraceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}] {}", self.loc, self.vars.join(", "))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(f, "  {}", cells.join(", "))?;
        }
        Ok(())
    }
}

/// Greatest value the polynomial-free octagon machinery can rely on: i64
/// range check helper for CSV-imported rows.
pub fn row_fits_i64(row: &[BigInt]) -> bool {
    row.iter().all(|v| v.to_i64().is_some())
}
