//! The analyzed mini language: C-like integer programs with declared input
//! ranges and named trace locations.
//!
//! ```text
//! program gcd;                     // optional header, default name "program"
//! inputs x in [1, 30], y in [1, 30];
//! assume(x >= y);
//! int q = 0;
//! while [L1] (x >= y) { x = x - y; q = q + 1; }
//! [L2]
//! ```
//!
//! Statements: `int v = e;` (block-scoped declaration), `v = e;`, `if`/`else`,
//! `while` with an optional `[Loc]` head marker, `assume(e);`, bare `[Loc]`
//! marks, and nested `{ }` scopes. Expressions are 64-bit literals, variables,
//! `+ - * / %` (division truncates toward zero), comparisons, `&& || !`.
//!
//! Static rules: declarations initialize; reads and writes must resolve to a
//! declaration or input in scope; inputs are immutable; shadowing a name that
//! is in scope is rejected; each location marker appears exactly once.

use crate::poly::Poly;
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(
    Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct LocationId(pub String);

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 5,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Debug)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub enum ExprKind {
    Int(i64),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, Default)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

#[derive(Clone, Debug)]
pub enum Stmt {
    Decl {
        name: String,
        init: Expr,
        span: Span,
    },
    Assign {
        name: String,
        value: Expr,
        span: Span,
    },
    If {
        cond: Expr,
        then_branch: Block,
        else_branch: Option<Block>,
        span: Span,
    },
    While {
        loc: Option<LocationId>,
        cond: Expr,
        body: Block,
        span: Span,
    },
    Assume {
        cond: Expr,
        span: Span,
    },
    Mark {
        loc: LocationId,
        span: Span,
    },
    Scope {
        block: Block,
        span: Span,
    },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct InputDecl {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Clone, Debug)]
pub struct Program {
    pub name: String,
    pub inputs: Vec<InputDecl>,
    pub body: Block,
    /// Location -> variables in scope at it, ascending byte order.
    loc_vars: BTreeMap<LocationId, Vec<String>>,
}

impl Program {
    pub fn locations(&self) -> impl Iterator<Item = &LocationId> {
        self.loc_vars.keys()
    }

    pub fn has_location(&self, loc: &LocationId) -> bool {
        self.loc_vars.contains_key(loc)
    }

    /// Variables in scope at `loc`, ascending byte order.
    pub fn extract_vars(&self, loc: &LocationId) -> Result<&[String], LangError> {
        self.loc_vars
            .get(loc)
            .map(|v| v.as_slice())
            .ok_or_else(|| LangError::UnknownLocation(loc.clone()))
    }

    pub fn input_names(&self) -> Vec<String> {
        self.inputs.iter().map(|i| i.name.clone()).collect()
    }

    pub fn has_loop(&self) -> bool {
        fn block_has_loop(b: &Block) -> bool {
            b.stmts.iter().any(|s| match s {
                Stmt::While { .. } => true,
                Stmt::If {
                    then_branch,
                    else_branch,
                    ..
                } => {
                    block_has_loop(then_branch)
                        || else_branch.as_ref().is_some_and(block_has_loop)
                }
                Stmt::Scope { block, .. } => block_has_loop(block),
                _ => false,
            })
        }
        block_has_loop(&self.body)
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum LangError {
    #[error("syntax error at {span}: {msg}")]
    Syntax { span: Span, msg: String },
    #[error("integer literal out of range at {0}")]
    LiteralOverflow(Span),
    #[error("duplicate location marker [{0}]")]
    DuplicateLocation(LocationId),
    #[error("unknown location [{0}]")]
    UnknownLocation(LocationId),
    #[error("unknown variable `{name}` at {span}")]
    UnknownVariable { name: String, span: Span },
    #[error("`{name}` at {span} shadows a variable already in scope")]
    Shadowing { name: String, span: Span },
    #[error("cannot assign to input variable `{name}` at {span}")]
    AssignToInput { name: String, span: Span },
    #[error("duplicate input `{0}`")]
    DuplicateInput(String),
    #[error("empty input range for `{name}`: [{lo}, {hi}]")]
    EmptyRange { name: String, lo: i64, hi: i64 },
    #[error("type error at {span}: {msg}")]
    Type { span: Span, msg: String },
    #[error("program has no loop; nothing to count")]
    LoopFree,
    #[error("variable `t` is already used; rename it before counter instrumentation")]
    CounterNameTaken,
}

// ── Lexer ───────────────────────────────────────────────────────────────────

#[derive(Clone, PartialEq, Eq, Debug)]
enum Tok {
    Ident(String),
    Int(i64),
    Kw(&'static str),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(v) => write!(f, "literal `{v}`"),
            Tok::Kw(k) => write!(f, "`{k}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

const KEYWORDS: &[&str] = &["program", "inputs", "in", "int", "if", "else", "while", "assume"];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn span(&self) -> Span {
        Span {
            line: self.line,
            col: self.col,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = *self.src.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'/') if self.peek2() == Some(b'/') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    fn next_tok(&mut self) -> Result<(Tok, Span), LangError> {
        self.skip_trivia();
        let span = self.span();
        let Some(c) = self.peek() else {
            return Ok((Tok::Eof, span));
        };
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == b'_' {
                    self.bump();
                } else {
                    break;
                }
            }
            let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            if let Some(kw) = KEYWORDS.iter().find(|k| **k == word) {
                return Ok((Tok::Kw(kw), span));
            }
            return Ok((Tok::Ident(word.to_string()), span));
        }
        if c.is_ascii_digit() {
            let start = self.pos;
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() {
                    self.bump();
                } else {
                    break;
                }
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let v: i64 = digits
                .parse()
                .map_err(|_| LangError::LiteralOverflow(span))?;
            return Ok((Tok::Int(v), span));
        }
        let two: &[u8] = &self.src[self.pos..(self.pos + 2).min(self.src.len())];
        for p in ["==", "!=", "<=", ">=", "&&", "||"] {
            if two == p.as_bytes() {
                self.bump();
                self.bump();
                return Ok((Tok::Punct(p), span));
            }
        }
        for p in [
            "(", ")", "{", "}", "[", "]", ";", ",", "=", "<", ">", "+", "-", "*", "/", "%", "!",
        ] {
            if c == p.as_bytes()[0] {
                self.bump();
                return Ok((Tok::Punct(p), span));
            }
        }
        Err(LangError::Syntax {
            span,
            msg: format!("unexpected character `{}`", c as char),
        })
    }
}

// ── Parser ──────────────────────────────────────────────────────────────────

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, LangError> {
        Err(LangError::Syntax {
            span: self.peek_span(),
            msg: msg.into(),
        })
    }

    fn expect_punct(&mut self, p: &'static str) -> Result<Span, LangError> {
        match self.peek() {
            Tok::Punct(q) if *q == p => Ok(self.bump().1),
            other => {
                let other = other.clone();
                self.err(format!("expected `{p}`, found {other}"))
            }
        }
    }

    fn expect_kw(&mut self, k: &'static str) -> Result<Span, LangError> {
        match self.peek() {
            Tok::Kw(q) if *q == k => Ok(self.bump().1),
            other => {
                let other = other.clone();
                self.err(format!("expected `{k}`, found {other}"))
            }
        }
    }

    fn eat_punct(&mut self, p: &'static str) -> bool {
        if matches!(self.peek(), Tok::Punct(q) if *q == p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Span), LangError> {
        match self.peek() {
            Tok::Ident(_) => {
                let (tok, span) = self.bump();
                match tok {
                    Tok::Ident(s) => Ok((s, span)),
                    _ => unreachable!(),
                }
            }
            other => {
                let other = other.clone();
                self.err(format!("expected identifier, found {other}"))
            }
        }
    }

    fn expect_int(&mut self) -> Result<i64, LangError> {
        let neg = self.eat_punct("-");
        match self.peek() {
            Tok::Int(_) => {
                let (tok, span) = self.bump();
                match tok {
                    Tok::Int(v) => {
                        if neg {
                            v.checked_neg().ok_or(LangError::LiteralOverflow(span))
                        } else {
                            Ok(v)
                        }
                    }
                    _ => unreachable!(),
                }
            }
            other => {
                let other = other.clone();
                self.err(format!("expected integer, found {other}"))
            }
        }
    }

    fn program(&mut self) -> Result<(String, Vec<InputDecl>, Block), LangError> {
        let mut name = "program".to_string();
        if matches!(self.peek(), Tok::Kw("program")) {
            self.bump();
            name = self.expect_ident()?.0;
            self.expect_punct(";")?;
        }
        let mut inputs = Vec::new();
        if matches!(self.peek(), Tok::Kw("inputs")) {
            self.bump();
            loop {
                let (iname, _) = self.expect_ident()?;
                self.expect_kw("in")?;
                self.expect_punct("[")?;
                let lo = self.expect_int()?;
                self.expect_punct(",")?;
                let hi = self.expect_int()?;
                self.expect_punct("]")?;
                inputs.push(InputDecl { name: iname, lo, hi });
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.expect_punct(";")?;
        }
        let mut stmts = Vec::new();
        while !matches!(self.peek(), Tok::Eof) {
            stmts.push(self.stmt()?);
        }
        Ok((name, inputs, Block { stmts }))
    }

    fn block(&mut self) -> Result<Block, LangError> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !matches!(self.peek(), Tok::Punct("}")) {
            if matches!(self.peek(), Tok::Eof) {
                return self.err("unclosed block");
            }
            stmts.push(self.stmt()?);
        }
        self.expect_punct("}")?;
        Ok(Block { stmts })
    }

    fn stmt(&mut self) -> Result<Stmt, LangError> {
        let span = self.peek_span();
        match self.peek().clone() {
            Tok::Kw("int") => {
                self.bump();
                let (name, _) = self.expect_ident()?;
                self.expect_punct("=")?;
                let init = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Decl { name, init, span })
            }
            Tok::Kw("assume") => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                Ok(Stmt::Assume { cond, span })
            }
            Tok::Kw("if") => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let then_branch = self.block()?;
                let else_branch = if matches!(self.peek(), Tok::Kw("else")) {
                    self.bump();
                    Some(self.block()?)
                } else {
                    None
                };
                Ok(Stmt::If {
                    cond,
                    then_branch,
                    else_branch,
                    span,
                })
            }
            Tok::Kw("while") => {
                self.bump();
                let loc = if self.eat_punct("[") {
                    let (l, _) = self.expect_ident()?;
                    self.expect_punct("]")?;
                    Some(LocationId(l))
                } else {
                    None
                };
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let body = self.block()?;
                Ok(Stmt::While {
                    loc,
                    cond,
                    body,
                    span,
                })
            }
            Tok::Punct("[") => {
                self.bump();
                let (l, _) = self.expect_ident()?;
                self.expect_punct("]")?;
                Ok(Stmt::Mark {
                    loc: LocationId(l),
                    span,
                })
            }
            Tok::Punct("{") => {
                let block = self.block()?;
                Ok(Stmt::Scope { block, span })
            }
            Tok::Ident(name) => {
                self.bump();
                self.expect_punct("=")?;
                let value = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt::Assign { name, value, span })
            }
            other => self.err(format!("expected statement, found {other}")),
        }
    }

    fn expr(&mut self) -> Result<Expr, LangError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, LangError> {
        let mut lhs = self.and_expr()?;
        while matches!(self.peek(), Tok::Punct("||")) {
            let span = self.bump().1;
            let rhs = self.and_expr()?;
            lhs = Expr {
                kind: ExprKind::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, LangError> {
        let mut lhs = self.cmp_expr()?;
        while matches!(self.peek(), Tok::Punct("&&")) {
            let span = self.bump().1;
            let rhs = self.cmp_expr()?;
            lhs = Expr {
                kind: ExprKind::Binary(BinOp::And, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<Expr, LangError> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Punct("<") => Some(BinOp::Lt),
            Tok::Punct("<=") => Some(BinOp::Le),
            Tok::Punct(">") => Some(BinOp::Gt),
            Tok::Punct(">=") => Some(BinOp::Ge),
            Tok::Punct("==") => Some(BinOp::Eq),
            Tok::Punct("!=") => Some(BinOp::Ne),
            _ => None,
        };
        if let Some(op) = op {
            let span = self.bump().1;
            let rhs = self.add_expr()?;
            return Ok(Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            });
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> Result<Expr, LangError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("+") => BinOp::Add,
                Tok::Punct("-") => BinOp::Sub,
                _ => break,
            };
            let span = self.bump().1;
            let rhs = self.mul_expr()?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Expr, LangError> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("*") => BinOp::Mul,
                Tok::Punct("/") => BinOp::Div,
                Tok::Punct("%") => BinOp::Mod,
                _ => break,
            };
            let span = self.bump().1;
            let rhs = self.unary_expr()?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr, LangError> {
        match self.peek() {
            Tok::Punct("-") => {
                let span = self.bump().1;
                let inner = self.unary_expr()?;
                Ok(Expr {
                    kind: ExprKind::Unary(UnOp::Neg, Box::new(inner)),
                    span,
                })
            }
            Tok::Punct("!") => {
                let span = self.bump().1;
                let inner = self.unary_expr()?;
                Ok(Expr {
                    kind: ExprKind::Unary(UnOp::Not, Box::new(inner)),
                    span,
                })
            }
            _ => self.primary_expr(),
        }
    }

    fn primary_expr(&mut self) -> Result<Expr, LangError> {
        let span = self.peek_span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr {
                    kind: ExprKind::Int(v),
                    span,
                })
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Expr {
                    kind: ExprKind::Var(name),
                    span,
                })
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            other => self.err(format!("expected expression, found {other}")),
        }
    }
}

/// Parses program text; runs all static checks; computes the per-location
/// variable scopes. Total and deterministic.
pub fn parse_program(src: &str) -> Result<Program, LangError> {
    let mut lexer = Lexer::new(src);
    let mut toks = Vec::new();
    loop {
        let (t, s) = lexer.next_tok()?;
        let eof = t == Tok::Eof;
        toks.push((t, s));
        if eof {
            break;
        }
    }
    let mut parser = Parser { toks, pos: 0 };
    let (name, inputs, body) = parser.program()?;
    let mut program = Program {
        name,
        inputs,
        body,
        loc_vars: BTreeMap::new(),
    };
    analyze(&mut program)?;
    Ok(program)
}

/// Parses a single expression (used for invariant expectation strings).
pub fn parse_expr_str(src: &str) -> Result<Expr, LangError> {
    let mut lexer = Lexer::new(src);
    let mut toks = Vec::new();
    loop {
        let (t, s) = lexer.next_tok()?;
        let eof = t == Tok::Eof;
        toks.push((t, s));
        if eof {
            break;
        }
    }
    let mut parser = Parser { toks, pos: 0 };
    let e = parser.expr()?;
    if !matches!(parser.peek(), Tok::Eof) {
        return parser.err("trailing input after expression");
    }
    Ok(e)
}

// ── Static analysis ─────────────────────────────────────────────────────────

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Ty {
    Int,
    Bool,
}

struct Scopes {
    frames: Vec<Vec<String>>,
    inputs: BTreeSet<String>,
}

impl Scopes {
    fn in_scope(&self, name: &str) -> bool {
        self.inputs.contains(name) || self.frames.iter().any(|f| f.iter().any(|v| v == name))
    }

    fn visible(&self) -> Vec<String> {
        let mut all: BTreeSet<&str> = self.inputs.iter().map(|s| s.as_str()).collect();
        for f in &self.frames {
            for v in f {
                all.insert(v);
            }
        }
        all.into_iter().map(|s| s.to_string()).collect()
    }
}

fn analyze(p: &mut Program) -> Result<(), LangError> {
    let mut seen_inputs = BTreeSet::new();
    for i in &p.inputs {
        if !seen_inputs.insert(i.name.clone()) {
            return Err(LangError::DuplicateInput(i.name.clone()));
        }
        if i.lo > i.hi {
            return Err(LangError::EmptyRange {
                name: i.name.clone(),
                lo: i.lo,
                hi: i.hi,
            });
        }
    }
    let mut scopes = Scopes {
        frames: vec![Vec::new()],
        inputs: seen_inputs,
    };
    let mut locs = BTreeMap::new();
    check_block_stmts(&p.body, &mut scopes, &mut locs, p)?;
    p.loc_vars = locs;
    Ok(())
}

fn check_block_stmts(
    b: &Block,
    scopes: &mut Scopes,
    locs: &mut BTreeMap<LocationId, Vec<String>>,
    p: &Program,
) -> Result<(), LangError> {
    for s in &b.stmts {
        check_stmt(s, scopes, locs, p)?;
    }
    Ok(())
}

fn enter_block(
    b: &Block,
    scopes: &mut Scopes,
    locs: &mut BTreeMap<LocationId, Vec<String>>,
    p: &Program,
) -> Result<(), LangError> {
    scopes.frames.push(Vec::new());
    let r = check_block_stmts(b, scopes, locs, p);
    scopes.frames.pop();
    r
}

fn record_loc(
    loc: &LocationId,
    scopes: &Scopes,
    locs: &mut BTreeMap<LocationId, Vec<String>>,
) -> Result<(), LangError> {
    if locs.contains_key(loc) {
        return Err(LangError::DuplicateLocation(loc.clone()));
    }
    locs.insert(loc.clone(), scopes.visible());
    Ok(())
}

fn check_stmt(
    s: &Stmt,
    scopes: &mut Scopes,
    locs: &mut BTreeMap<LocationId, Vec<String>>,
    p: &Program,
) -> Result<(), LangError> {
    match s {
        Stmt::Decl { name, init, span } => {
            expect_ty(init, Ty::Int, scopes)?;
            if scopes.in_scope(name) {
                return Err(LangError::Shadowing {
                    name: name.clone(),
                    span: *span,
                });
            }
            scopes.frames.last_mut().unwrap().push(name.clone());
            Ok(())
        }
        Stmt::Assign { name, value, span } => {
            expect_ty(value, Ty::Int, scopes)?;
            if scopes.inputs.contains(name) {
                return Err(LangError::AssignToInput {
                    name: name.clone(),
                    span: *span,
                });
            }
            if !scopes.in_scope(name) {
                return Err(LangError::UnknownVariable {
                    name: name.clone(),
                    span: *span,
                });
            }
            Ok(())
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            expect_ty(cond, Ty::Bool, scopes)?;
            enter_block(then_branch, scopes, locs, p)?;
            if let Some(e) = else_branch {
                enter_block(e, scopes, locs, p)?;
            }
            Ok(())
        }
        Stmt::While {
            loc, cond, body, ..
        } => {
            // The head marker records the enclosing scope: the condition is
            // evaluated there, before any loop-local declaration exists.
            if let Some(l) = loc {
                record_loc(l, scopes, locs)?;
            }
            expect_ty(cond, Ty::Bool, scopes)?;
            enter_block(body, scopes, locs, p)
        }
        Stmt::Assume { cond, .. } => expect_ty(cond, Ty::Bool, scopes),
        Stmt::Mark { loc, .. } => record_loc(loc, scopes, locs),
        Stmt::Scope { block, .. } => enter_block(block, scopes, locs, p),
    }
}

fn infer_ty(e: &Expr, scopes: &Scopes) -> Result<Ty, LangError> {
    match &e.kind {
        ExprKind::Int(_) => Ok(Ty::Int),
        ExprKind::Var(name) => {
            if scopes.in_scope(name) {
                Ok(Ty::Int)
            } else {
                Err(LangError::UnknownVariable {
                    name: name.clone(),
                    span: e.span,
                })
            }
        }
        ExprKind::Unary(UnOp::Neg, inner) => {
            expect_ty(inner, Ty::Int, scopes)?;
            Ok(Ty::Int)
        }
        ExprKind::Unary(UnOp::Not, inner) => {
            expect_ty(inner, Ty::Bool, scopes)?;
            Ok(Ty::Bool)
        }
        ExprKind::Binary(op, l, r) => match op {
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                expect_ty(l, Ty::Int, scopes)?;
                expect_ty(r, Ty::Int, scopes)?;
                Ok(Ty::Int)
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => {
                expect_ty(l, Ty::Int, scopes)?;
                expect_ty(r, Ty::Int, scopes)?;
                Ok(Ty::Bool)
            }
            BinOp::And | BinOp::Or => {
                expect_ty(l, Ty::Bool, scopes)?;
                expect_ty(r, Ty::Bool, scopes)?;
                Ok(Ty::Bool)
            }
        },
    }
}

fn expect_ty(e: &Expr, want: Ty, scopes: &Scopes) -> Result<(), LangError> {
    let got = infer_ty(e, scopes)?;
    if got != want {
        return Err(LangError::Type {
            span: e.span,
            msg: format!("expected {want:?} expression, found {got:?}"),
        });
    }
    Ok(())
}

// ── Pretty printer ──────────────────────────────────────────────────────────

/// Canonical textual form; `parse(pretty(parse(s)))` pretty-prints to the
/// same string.
pub fn pretty(p: &Program) -> String {
    let mut out = String::new();
    if p.name != "program" {
        out.push_str(&format!("program {};\n", p.name));
    }
    if !p.inputs.is_empty() {
        let decls: Vec<String> = p
            .inputs
            .iter()
            .map(|i| format!("{} in [{}, {}]", i.name, i.lo, i.hi))
            .collect();
        out.push_str(&format!("inputs {};\n", decls.join(", ")));
    }
    for s in &p.body.stmts {
        pretty_stmt(s, 0, &mut out);
    }
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn pretty_stmt(s: &Stmt, level: usize, out: &mut String) {
    indent(out, level);
    match s {
        Stmt::Decl { name, init, .. } => {
            out.push_str(&format!("int {name} = {};\n", pretty_expr(init)));
        }
        Stmt::Assign { name, value, .. } => {
            out.push_str(&format!("{name} = {};\n", pretty_expr(value)));
        }
        Stmt::Assume { cond, .. } => {
            out.push_str(&format!("assume({});\n", pretty_expr(cond)));
        }
        Stmt::Mark { loc, .. } => {
            out.push_str(&format!("[{loc}]\n"));
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            out.push_str(&format!("if ({}) {{\n", pretty_expr(cond)));
            for t in &then_branch.stmts {
                pretty_stmt(t, level + 1, out);
            }
            indent(out, level);
            out.push('}');
            if let Some(e) = else_branch {
                out.push_str(" else {\n");
                for t in &e.stmts {
                    pretty_stmt(t, level + 1, out);
                }
                indent(out, level);
                out.push('}');
            }
            out.push('\n');
        }
        Stmt::While {
            loc, cond, body, ..
        } => {
            match loc {
                Some(l) => out.push_str(&format!("while [{l}] ({}) {{\n", pretty_expr(cond))),
                None => out.push_str(&format!("while ({}) {{\n", pretty_expr(cond))),
            }
            for t in &body.stmts {
                pretty_stmt(t, level + 1, out);
            }
            indent(out, level);
            out.push_str("}\n");
        }
        Stmt::Scope { block, .. } => {
            out.push_str("{\n");
            for t in &block.stmts {
                pretty_stmt(t, level + 1, out);
            }
            indent(out, level);
            out.push_str("}\n");
        }
    }
}

pub fn pretty_expr(e: &Expr) -> String {
    pretty_expr_prec(e, 0)
}

fn pretty_expr_prec(e: &Expr, min_prec: u8) -> String {
    match &e.kind {
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Var(v) => v.clone(),
        ExprKind::Unary(op, inner) => {
            let sym = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
            };
            let s = format!("{sym}{}", pretty_expr_prec(inner, 6));
            if min_prec > 6 {
                format!("({s})")
            } else {
                s
            }
        }
        ExprKind::Binary(op, l, r) => {
            let prec = op.precedence();
            let s = format!(
                "{} {} {}",
                pretty_expr_prec(l, prec),
                op.symbol(),
                pretty_expr_prec(r, prec + 1)
            );
            if prec < min_prec {
                format!("({s})")
            } else {
                s
            }
        }
    }
}

// ── Counter instrumentation ─────────────────────────────────────────────────

/// Inserts a ghost iteration counter: `int t = 0;` up front, `t = t + 1;` as
/// the first statement of every loop body, and an exit mark as the final
/// statement when the program does not already end with a mark. Returns the
/// instrumented program and the exit location.
pub fn instrument_counter(
    p: &Program,
    allow_loop_free: bool,
) -> Result<(Program, LocationId), LangError> {
    if !p.has_loop() && !allow_loop_free {
        return Err(LangError::LoopFree);
    }
    if uses_name(p, "t") {
        return Err(LangError::CounterNameTaken);
    }
    let sp = Span::default();
    let mut body = p.body.clone();
    add_counter_increments(&mut body);
    body.stmts.insert(
        0,
        Stmt::Decl {
            name: "t".to_string(),
            init: Expr {
                kind: ExprKind::Int(0),
                span: sp,
            },
            span: sp,
        },
    );
    let exit_loc = match body.stmts.last() {
        Some(Stmt::Mark { loc, .. }) => loc.clone(),
        _ => {
            let mut candidate = "Lexit".to_string();
            let mut n = 1;
            while p.loc_vars.contains_key(&LocationId(candidate.clone())) {
                candidate = format!("Lexit{n}");
                n += 1;
            }
            let loc = LocationId(candidate);
            body.stmts.push(Stmt::Mark {
                loc: loc.clone(),
                span: sp,
            });
            loc
        }
    };
    let mut out = Program {
        name: p.name.clone(),
        inputs: p.inputs.clone(),
        body,
        loc_vars: BTreeMap::new(),
    };
    analyze(&mut out)?;
    Ok((out, exit_loc))
}

fn add_counter_increments(b: &mut Block) {
    for s in &mut b.stmts {
        match s {
            Stmt::While { body, .. } => {
                add_counter_increments(body);
                let sp = Span::default();
                let incr = Stmt::Assign {
                    name: "t".to_string(),
                    value: Expr {
                        kind: ExprKind::Binary(
                            BinOp::Add,
                            Box::new(Expr {
                                kind: ExprKind::Var("t".to_string()),
                                span: sp,
                            }),
                            Box::new(Expr {
                                kind: ExprKind::Int(1),
                                span: sp,
                            }),
                        ),
                        span: sp,
                    },
                    span: sp,
                };
                body.stmts.insert(0, incr);
            }
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => {
                add_counter_increments(then_branch);
                if let Some(e) = else_branch {
                    add_counter_increments(e);
                }
            }
            Stmt::Scope { block, .. } => add_counter_increments(block),
            _ => {}
        }
    }
}

fn uses_name(p: &Program, name: &str) -> bool {
    if p.inputs.iter().any(|i| i.name == name) {
        return true;
    }
    fn expr_uses(e: &Expr, name: &str) -> bool {
        match &e.kind {
            ExprKind::Int(_) => false,
            ExprKind::Var(v) => v == name,
            ExprKind::Unary(_, i) => expr_uses(i, name),
            ExprKind::Binary(_, l, r) => expr_uses(l, name) || expr_uses(r, name),
        }
    }
    fn block_uses(b: &Block, name: &str) -> bool {
        b.stmts.iter().any(|s| match s {
            Stmt::Decl { name: n, init, .. } => n == name || expr_uses(init, name),
            Stmt::Assign { name: n, value, .. } => n == name || expr_uses(value, name),
            Stmt::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                expr_uses(cond, name)
                    || block_uses(then_branch, name)
                    || else_branch.as_ref().is_some_and(|e| block_uses(e, name))
            }
            Stmt::While { cond, body, .. } => expr_uses(cond, name) || block_uses(body, name),
            Stmt::Assume { cond, .. } => expr_uses(cond, name),
            Stmt::Mark { .. } => false,
            Stmt::Scope { block, .. } => block_uses(block, name),
        })
    }
    block_uses(&p.body, name)
}

/// Expands a pure arithmetic expression into a polynomial. Returns None for
/// expressions containing division, modulo, comparisons, or logic.
pub fn expr_to_poly(e: &Expr) -> Option<Poly> {
    match &e.kind {
        ExprKind::Int(v) => Some(Poly::constant(BigRational::from_integer(BigInt::from(*v)))),
        ExprKind::Var(v) => Some(Poly::var(v)),
        ExprKind::Unary(UnOp::Neg, inner) => Some(expr_to_poly(inner)?.neg()),
        ExprKind::Unary(UnOp::Not, _) => None,
        ExprKind::Binary(op, l, r) => {
            let (l, r) = (expr_to_poly(l)?, expr_to_poly(r)?);
            match op {
                BinOp::Add => Some(l.add(&r)),
                BinOp::Sub => Some(l.sub(&r)),
                BinOp::Mul => Some(l.mul(&r)),
                _ => None,
            }
        }
    }
}

#[cfg(test)]
pub(crate) const COHENDIV_SRC: &str = "\
program cohendiv;
inputs x in [1, 30], y in [1, 30];
assume(x > 0 && y > 0);
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
