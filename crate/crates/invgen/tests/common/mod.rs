//! Shared test support: an independent interpreter for ground-truth trace
//! generation, plus generators for randomized programs.
//!
//! The interpreter deliberately shares no code with the library's executor —
//! it is written straight from the language's documented semantics (division
//! truncating toward zero, short-circuit booleans, runs discarded wholesale
//! on a violated assume) so that reported invariants are checked against a
//! second opinion.

// each integration-test binary uses its own slice of this module
#![allow(dead_code)]

use invgen::lang::{BinOp, Block, Expr, ExprKind, LocationId, Program, Stmt, UnOp};
use num_bigint::BigInt;
use num_traits::Zero;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::PathBuf;

pub type Row = BTreeMap<String, BigInt>;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn load_corpus_program(name: &str) -> Program {
    let path = corpus_dir().join(format!("{name}.mpl"));
    let src = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    invgen::lang::parse_program(&src).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every trace row at every location from exhaustively running `p` over its
/// declared input box. Runs that violate an assume, divide by zero, or blow
/// the step cap contribute nothing.
pub fn sweep_box(p: &Program) -> BTreeMap<LocationId, Vec<Row>> {
    let mut rows: BTreeMap<LocationId, Vec<Row>> = BTreeMap::new();
    let dims: Vec<(i64, i64)> = p.inputs.iter().map(|i| (i.lo, i.hi)).collect();
    let mut cur: Vec<i64> = dims.iter().map(|d| d.0).collect();
    loop {
        if let Some(got) = run_once(p, &cur) {
            for (loc, rs) in got {
                rows.entry(loc).or_default().extend(rs);
            }
        }
        let mut i = 0;
        loop {
            if i == dims.len() {
                return rows;
            }
            if cur[i] < dims[i].1 {
                cur[i] += 1;
                break;
            }
            cur[i] = dims[i].0;
            i += 1;
        }
    }
}

pub fn run_once(p: &Program, input: &[i64]) -> Option<BTreeMap<LocationId, Vec<Row>>> {
    assert_eq!(input.len(), p.inputs.len());
    let frame: Vec<(String, BigInt)> = p
        .inputs
        .iter()
        .zip(input)
        .map(|(d, &v)| (d.name.clone(), BigInt::from(v)))
        .collect();
    let mut m = Interp {
        frames: vec![frame],
        out: BTreeMap::new(),
        fuel: 10_000_000,
    };
    match m.block(&p.body) {
        Ok(()) => Some(m.out),
        Err(()) => None,
    }
}

struct Interp {
    frames: Vec<Vec<(String, BigInt)>>,
    out: BTreeMap<LocationId, Vec<Row>>,
    fuel: u64,
}

enum V {
    I(BigInt),
    B(bool),
}

impl V {
    fn int(self) -> BigInt {
        match self {
            V::I(v) => v,
            V::B(_) => panic!("int expected"),
        }
    }
    fn boolean(self) -> bool {
        match self {
            V::B(b) => b,
            V::I(_) => panic!("bool expected"),
        }
    }
}

impl Interp {
    fn get(&self, name: &str) -> BigInt {
        for f in self.frames.iter().rev() {
            for (n, v) in f.iter().rev() {
                if n == name {
                    return v.clone();
                }
            }
        }
        panic!("unbound variable {name}")
    }

    fn put(&mut self, name: &str, value: BigInt) {
        for f in self.frames.iter_mut().rev() {
            for (n, v) in f.iter_mut().rev() {
                if n == name {
                    *v = value;
                    return;
                }
            }
        }
        panic!("unbound variable {name}")
    }

    fn visible(&self) -> Row {
        let mut r = Row::new();
        for f in &self.frames {
            for (n, v) in f {
                r.insert(n.clone(), v.clone());
            }
        }
        r
    }

    fn tick(&mut self) -> Result<(), ()> {
        if self.fuel == 0 {
            return Err(());
        }
        self.fuel -= 1;
        Ok(())
    }

    fn eval(&mut self, e: &Expr) -> Result<V, ()> {
        Ok(match &e.kind {
            ExprKind::Int(v) => V::I(BigInt::from(*v)),
            ExprKind::Var(n) => V::I(self.get(n)),
            ExprKind::Unary(UnOp::Neg, x) => V::I(-self.eval(x)?.int()),
            ExprKind::Unary(UnOp::Not, x) => V::B(!self.eval(x)?.boolean()),
            ExprKind::Binary(BinOp::And, l, r) => {
                V::B(self.eval(l)?.boolean() && self.eval(r)?.boolean())
            }
            ExprKind::Binary(BinOp::Or, l, r) => {
                V::B(self.eval(l)?.boolean() || self.eval(r)?.boolean())
            }
            ExprKind::Binary(op, l, r) => {
                let a = self.eval(l)?.int();
                let b = self.eval(r)?.int();
                match op {
                    BinOp::Add => V::I(a + b),
                    BinOp::Sub => V::I(a - b),
                    BinOp::Mul => V::I(a * b),
                    BinOp::Div => {
                        if b.is_zero() {
                            return Err(());
                        }
                        V::I(a / b)
                    }
                    BinOp::Mod => {
                        if b.is_zero() {
                            return Err(());
                        }
                        V::I(a % b)
                    }
                    BinOp::Lt => V::B(a < b),
                    BinOp::Le => V::B(a <= b),
                    BinOp::Gt => V::B(a > b),
                    BinOp::Ge => V::B(a >= b),
                    BinOp::Eq => V::B(a == b),
                    BinOp::Ne => V::B(a != b),
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
        })
    }

    fn block(&mut self, b: &Block) -> Result<(), ()> {
        self.frames.push(Vec::new());
        let r = (|| {
            for s in &b.stmts {
                self.stmt(s)?;
            }
            Ok(())
        })();
        self.frames.pop();
        r
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), ()> {
        self.tick()?;
        match s {
            Stmt::Decl { name, init, .. } => {
                let v = self.eval(init)?.int();
                self.frames.last_mut().unwrap().push((name.clone(), v));
            }
            Stmt::Assign { name, value, .. } => {
                let v = self.eval(value)?.int();
                self.put(name, v);
            }
            Stmt::Assume { cond, .. } => {
                if !self.eval(cond)?.boolean() {
                    return Err(());
                }
            }
            Stmt::Mark { loc, .. } => {
                let row = self.visible();
                self.out.entry(loc.clone()).or_default().push(row);
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                if self.eval(cond)?.boolean() {
                    self.block(then_branch)?;
                } else if let Some(e) = else_branch {
                    self.block(e)?;
                }
            }
            Stmt::While {
                loc, cond, body, ..
            } => loop {
                self.tick()?;
                if let Some(loc) = loc {
                    let row = self.visible();
                    self.out.entry(loc.clone()).or_default().push(row);
                }
                if !self.eval(cond)?.boolean() {
                    break;
                }
                self.block(body)?;
            },
            Stmt::Scope { block, .. } => self.block(block)?,
        }
        Ok(())
    }
}

// ── randomized program generators ───────────────────────────────────────────

/// Straight-line and single-loop programs over small boxes with linear
/// updates only: no division, loops counted up by 1, so every run terminates
/// and every location is reachable.
pub fn random_linear_program(rng: &mut ChaCha8Rng, idx: usize) -> String {
    let mut src = String::new();
    src.push_str(&format!("program rnd{idx};\n"));
    let c = |rng: &mut ChaCha8Rng| rng.gen_range(1..=3);
    if idx % 2 == 0 {
        src.push_str("inputs a in [-3, 3], b in [-3, 3];\n");
        src.push_str(&format!("int x = a + {};\n", c(rng)));
        src.push_str(&format!("int y = b - {};\n", c(rng)));
        let vars = ["x", "y"];
        let others = ["a", "b", "x", "y"];
        for _ in 0..rng.gen_range(2..=4) {
            let v = vars[rng.gen_range(0..vars.len())];
            match rng.gen_range(0..3) {
                0 => src.push_str(&format!("{v} = {v} + {};\n", c(rng))),
                1 => src.push_str(&format!("{v} = {v} - {};\n", c(rng))),
                _ => {
                    let w = others[rng.gen_range(0..others.len())];
                    let op = if rng.gen_bool(0.5) { "+" } else { "-" };
                    src.push_str(&format!("{v} = {v} {op} {w};\n"));
                }
            }
        }
        src.push_str("[L]\n");
    } else {
        src.push_str("inputs n in [0, 5], a in [-3, 3];\n");
        src.push_str("int i = 0;\n");
        src.push_str(&format!("int s = a + {};\n", c(rng)));
        let head_marked = rng.gen_bool(0.5);
        if head_marked {
            src.push_str("while [L] (i < n) {\n");
        } else {
            src.push_str("while (i < n) {\n");
        }
        for _ in 0..rng.gen_range(1..=2) {
            match rng.gen_range(0..3) {
                0 => src.push_str(&format!("  s = s + {};\n", c(rng))),
                1 => src.push_str(&format!("  s = s - {};\n", c(rng))),
                _ => src.push_str("  s = s + i;\n"),
            }
        }
        src.push_str("  i = i + 1;\n}\n");
        if !head_marked {
            src.push_str("[L]\n");
        }
    }
    src
}

/// A program planting `x == g(a, b)` for a random polynomial `g` of the given
/// degree; returns the source and `g` as term text alongside its library form.
pub fn planted_identity_program(
    rng: &mut ChaCha8Rng,
    idx: usize,
    degree: u32,
) -> (String, invgen::poly::Poly) {
    use invgen::poly::Poly;
    let d = degree as i64;
    // exponent pairs: one of full degree, a couple below it
    let mut shapes: Vec<(i64, i64)> = Vec::new();
    let ea = rng.gen_range(0..=d);
    shapes.push((ea, d - ea));
    for _ in 0..rng.gen_range(1..=2) {
        let total = rng.gen_range(1..d.max(2));
        let ea = rng.gen_range(0..=total);
        shapes.push((ea, total - ea));
    }
    shapes.sort_unstable();
    shapes.dedup();

    let mut g = Poly::constant_int(rng.gen_range(-3..=3));
    let mut text_terms: Vec<String> = Vec::new();
    for &(ea, eb) in &shapes {
        let mut coeff = rng.gen_range(1..=3i64);
        if rng.gen_bool(0.5) {
            coeff = -coeff;
        }
        let mut term = Poly::constant_int(coeff);
        let mut words = vec![coeff.abs().to_string()];
        for _ in 0..ea {
            term = term.mul(&Poly::var("a"));
            words.push("a".to_string());
        }
        for _ in 0..eb {
            term = term.mul(&Poly::var("b"));
            words.push("b".to_string());
        }
        g = g.add(&term);
        let sign = if coeff < 0 { " - " } else { " + " };
        text_terms.push(format!("{sign}{}", words.join(" * ")));
    }
    let mut expr = g
        .coeff(&invgen::poly::Monomial::one())
        .to_integer()
        .to_string();
    for t in &text_terms {
        expr.push_str(t);
    }
    let src = format!(
        "program plant{idx};\ninputs a in [-8, 8], b in [-8, 8];\nint x = {expr};\n[L]\n"
    );
    (src, g)
}
