//! Command-line front end: flag parsing, the per-location inference pipeline,
//! trace-only mode, complexity analysis, and the corpus runner.
//!
//! Exit codes: 0 success, 1 analysis failure (corpus mismatch, nothing
//! analyzable), 2 usage error (bad flags, unreadable or malformed input).

use crate::complexity::{self, ComplexityConfig, RelationOutcome};
use crate::eqinfer::{
    auto_degree, canonicalize_eq_basis, infer_equalities, EqInferConfig, EqOutcome, EqStatus,
    Template,
};
use crate::exec::{traces_from_csv, ExecCache, RunOptions, TraceSet};
use crate::ineqinfer::{
    enumerate_oct_terms, infer_octagons, OctConstraint, OctInferConfig, OctOutcome,
};
use crate::lang::{parse_expr_str, parse_program, BinOp, ExprKind, LocationId, Program};
use crate::lang::expr_to_poly;
use crate::poly::Equality;
use crate::simplify::{is_implied_eq, is_implied_oct, remove_redundant, InvariantSet};
use crate::verify::{SearchMode, Verifier, VerifyBudget};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "invgen",
    version,
    about = "Discovers polynomial equality and octagonal inequality invariants \
             at marked locations of small integer programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Infer invariants at every marked location of a program
    Infer(InferArgs),
    /// One-shot inference from a trace CSV, without verification
    Traces(TracesArgs),
    /// Instrument a loop counter and derive iteration bounds
    Complexity(ComplexityArgs),
    /// Run every .mpl in a directory against its .expected sidecar
    Corpus(CorpusArgs),
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Program file (.mpl)
    path: PathBuf,
    /// Comma-separated location filter, e.g. --locations L1,L2
    #[arg(long, value_delimiter = ',')]
    locations: Vec<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct TracesArgs {
    /// Trace CSV file (header of variable names, one state per line)
    path: PathBuf,
    /// Location label for the report (defaults to the file stem)
    #[arg(long)]
    loc: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct ComplexityArgs {
    /// Program file (.mpl); must contain a loop
    path: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// Directory of .mpl programs with optional .expected sidecars
    dir: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Term-count cap that picks the template degree
    #[arg(long, default_value_t = 200)]
    alpha: u64,
    /// Fixed template degree (overrides alpha)
    #[arg(long)]
    degree: Option<u32>,
    /// Octagonal bounds are searched in [-M, M]
    #[arg(long, default_value_t = 10)]
    oct_range: i64,
    #[arg(long, value_enum, default_value_t = ModeChoice::Auto)]
    mode: ModeChoice,
    /// Inputs examined per verifier search
    #[arg(long, default_value_t = 100_000)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FormatChoice::Text)]
    format: FormatChoice,
    /// Evaluate with wrap-around 64-bit arithmetic
    #[arg(long)]
    wrap64: bool,
    /// Include wall-clock timings in reports (breaks byte-for-byte
    /// reproducibility)
    #[arg(long)]
    emit_timings: bool,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
pub enum ModeChoice {
    /// Exhaustive when the input box has at most 10^6 points, else random
    Auto,
    Exhaustive,
    Random,
}

impl std::fmt::Display for ModeChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModeChoice::Auto => "auto",
            ModeChoice::Exhaustive => "exhaustive",
            ModeChoice::Random => "random",
        })
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
pub enum FormatChoice {
    Text,
    Json,
}

impl std::fmt::Display for FormatChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FormatChoice::Text => "text",
            FormatChoice::Json => "json",
        })
    }
}

/// Everything the pipeline needs; the CLI flags lower into this.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub alpha: u64,
    pub degree: Option<u32>,
    pub oct_range: i64,
    pub mode: ModeChoice,
    pub budget: u64,
    pub seed: u64,
    pub wrap64: bool,
    pub locations: Option<Vec<String>>,
    pub emit_timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 200,
            degree: None,
            oct_range: 10,
            mode: ModeChoice::Auto,
            budget: 100_000,
            seed: 0,
            wrap64: false,
            locations: None,
            emit_timings: false,
        }
    }
}

impl CommonArgs {
    fn to_pipeline(&self, locations: Option<Vec<String>>) -> PipelineConfig {
        PipelineConfig {
            alpha: self.alpha,
            degree: self.degree,
            oct_range: self.oct_range,
            mode: self.mode,
            budget: self.budget,
            seed: self.seed,
            wrap64: self.wrap64,
            locations,
            emit_timings: self.emit_timings,
        }
    }
}

#[derive(Serialize, Clone, Debug)]
pub struct ConfigEcho {
    pub alpha: u64,
    pub degree: Option<u32>,
    pub oct_range: i64,
    /// Resolved mode, not the requested one.
    pub mode: String,
    pub budget: u64,
    pub seed: u64,
    pub wrap64: bool,
}

#[derive(Serialize, Clone, Debug)]
pub struct InvReport {
    pub text: String,
    /// "eq" or "oct"
    pub kind: &'static str,
    /// "proved_on_box", "accepted_within_budget", or "unverified"
    pub status: &'static str,
}

#[derive(Serialize, Clone, Debug, Default)]
pub struct LocStats {
    pub rows: usize,
    pub eq_terms: usize,
    pub eq_candidates: usize,
    pub eq_disproved: usize,
    pub refine_iters: u32,
    pub gather_rounds: u32,
    pub oct_terms: usize,
    pub oct_probes: u32,
    pub oct_dropped: usize,
    pub verifier_calls: u64,
    pub inputs_checked: u64,
}

#[derive(Serialize, Clone, Debug)]
pub struct LocReport {
    pub id: String,
    pub vars: Vec<String>,
    pub degree: u32,
    /// "ok", "unreachable", or "not_enough_traces"
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub invariants: Vec<InvReport>,
    pub stats: LocStats,
    // structured copies for programmatic consumers; the text lines above are
    // their canonical Display forms
    #[serde(skip)]
    pub eqs: Vec<Equality>,
    #[serde(skip)]
    pub octs: Vec<OctConstraint>,
}

#[derive(Serialize, Clone, Debug)]
pub struct Report {
    pub schema_version: u32,
    pub command: &'static str,
    pub program: String,
    pub config: ConfigEcho,
    pub locations: Vec<LocReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, u128>>,
}

#[derive(Serialize, Clone, Debug)]
pub struct BoundReport {
    pub expr: String,
    pub multiplicity: u32,
}

#[derive(Serialize, Clone, Debug)]
pub struct ComplexityReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub program: String,
    pub config: ConfigEcho,
    /// "ok", "no_relation", "unreachable", or "not_enough_traces"
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_location: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_degree: Option<u32>,
    pub bounds: Vec<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fully_factored: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, u128>>,
}

#[derive(Serialize, Clone, Debug)]
pub struct CorpusEntry {
    pub program: String,
    pub file: String,
    /// "pass", "fail", "no_sidecar", or "error"
    pub status: &'static str,
    pub details: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_ms: Option<u128>,
}

#[derive(Serialize, Clone, Debug)]
pub struct CorpusReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub dir: String,
    pub entries: Vec<CorpusEntry>,
}

/// Expected-invariant sidecar (TOML). All fields optional; listed invariants
/// must be implied by the produced set, not string-equal to it.
#[derive(serde::Deserialize, Default, Debug)]
pub struct Sidecar {
    #[serde(default)]
    pub config: SidecarConfig,
    #[serde(default, rename = "location")]
    pub locations: Vec<SidecarLoc>,
}

impl Sidecar {
    pub fn load(path: &Path) -> Result<Sidecar, String> {
        fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|s| toml::from_str(&s).map_err(|e| e.to_string()))
    }

    /// `base` with this sidecar's `[config]` overrides applied.
    pub fn apply(&self, base: &PipelineConfig) -> Result<PipelineConfig, String> {
        let mut cfg = base.clone();
        if let Some(v) = self.config.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.config.degree {
            cfg.degree = Some(v);
        }
        if let Some(v) = self.config.oct_range {
            cfg.oct_range = v;
        }
        if let Some(v) = self.config.budget {
            cfg.budget = v;
        }
        if let Some(v) = self.config.seed {
            cfg.seed = v;
        }
        match self.config.mode.as_deref() {
            None => {}
            Some("auto") => cfg.mode = ModeChoice::Auto,
            Some("exhaustive") => cfg.mode = ModeChoice::Exhaustive,
            Some("random") => cfg.mode = ModeChoice::Random,
            Some(other) => return Err(format!("unknown mode `{other}`")),
        }
        Ok(cfg)
    }
}

#[derive(serde::Deserialize, Default, Debug)]
pub struct SidecarConfig {
    pub alpha: Option<u64>,
    pub degree: Option<u32>,
    pub oct_range: Option<i64>,
    pub mode: Option<String>,
    pub budget: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(serde::Deserialize, Debug)]
pub struct SidecarLoc {
    pub id: String,
    #[serde(default)]
    pub equalities: Vec<String>,
    #[serde(default)]
    pub octagons: Vec<String>,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

fn usage<S: Into<String>>(msg: S) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

fn analysis<S: Into<String>>(msg: S) -> Failure {
    Failure { code: 1, msg: msg.into() }
}

type CmdResult = Result<(i32, String), Failure>;

/// Entry point for the binary: real args, real stdio.
pub fn run() -> i32 {
    let (code, out, err) = run_from(std::env::args());
    print!("{out}");
    eprint!("{err}");
    code
}

/// Testable driver: returns (exit code, stdout, stderr).
pub fn run_from<I, T>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let rendered = e.render().to_string();
            return if code == 0 {
                (0, rendered, String::new())
            } else {
                (2, String::new(), rendered)
            };
        }
    };
    let res = match cli.cmd {
        Cmd::Infer(a) => cmd_infer(a),
        Cmd::Traces(a) => cmd_traces(a),
        Cmd::Complexity(a) => cmd_complexity(a),
        Cmd::Corpus(a) => cmd_corpus(a),
    };
    match res {
        Ok((code, out)) => (code, out, String::new()),
        Err(f) => (f.code, String::new(), format!("error: {}\n", f.msg)),
    }
}

fn read_program(path: &Path) -> Result<Program, Failure> {
    let src = fs::read_to_string(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    parse_program(&src).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn resolve_mode(p: &Program, choice: ModeChoice) -> SearchMode {
    match choice {
        ModeChoice::Exhaustive => SearchMode::Exhaustive,
        ModeChoice::Random => SearchMode::Random,
        ModeChoice::Auto => {
            let size = p
                .inputs
                .iter()
                .map(|i| (i.hi as i128 - i.lo as i128 + 1) as u128)
                .fold(1u128, |a, n| a.saturating_mul(n));
            if size <= 1_000_000 {
                SearchMode::Exhaustive
            } else {
                SearchMode::Random
            }
        }
    }
}

fn mode_name(m: SearchMode) -> &'static str {
    match m {
        SearchMode::Exhaustive => "exhaustive",
        SearchMode::Random => "random",
    }
}

fn status_name(s: EqStatus) -> &'static str {
    match s {
        EqStatus::ProvedOnBox => "proved_on_box",
        EqStatus::AcceptedWithinBudget => "accepted_within_budget",
    }
}

fn echo(cfg: &PipelineConfig, mode: SearchMode) -> ConfigEcho {
    ConfigEcho {
        alpha: cfg.alpha,
        degree: cfg.degree,
        oct_range: cfg.oct_range,
        mode: mode_name(mode).to_string(),
        budget: cfg.budget,
        seed: cfg.seed,
        wrap64: cfg.wrap64,
    }
}

/// Full pipeline on a parsed program: equalities, octagons, and joint
/// simplification at every requested location, sharing one execution cache.
pub fn infer_program(p: &Program, cfg: &PipelineConfig) -> Result<Report, Failure> {
    let locs: Vec<LocationId> = match &cfg.locations {
        None => p.locations().cloned().collect(),
        Some(names) => {
            let mut picked = Vec::new();
            for n in names {
                let l = LocationId(n.clone());
                if !p.has_location(&l) {
                    return Err(usage(format!("unknown location `{n}`")));
                }
                picked.push(l);
            }
            picked
        }
    };
    if locs.is_empty() {
        return Err(analysis(format!(
            "program `{}` has no marked locations",
            p.name
        )));
    }
    let mode = resolve_mode(p, cfg.mode);
    let opts = RunOptions {
        seed: cfg.seed,
        wrap64: cfg.wrap64,
        ..Default::default()
    };
    let budget = VerifyBudget {
        mode,
        max_inputs: cfg.budget,
        seed: cfg.seed,
    };
    let mut v = Verifier::new(ExecCache::new(p, opts), budget);
    let mut locations = Vec::new();
    let mut timings = BTreeMap::new();
    let t0 = Instant::now();
    for loc in &locs {
        let lt = Instant::now();
        locations.push(analyze_location(&mut v, loc, cfg));
        if cfg.emit_timings {
            timings.insert(format!("loc:{loc}"), lt.elapsed().as_millis());
        }
    }
    if cfg.emit_timings {
        timings.insert("total".to_string(), t0.elapsed().as_millis());
    }
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        command: "infer",
        program: p.name.clone(),
        config: echo(cfg, mode),
        locations,
        timings_ms: cfg.emit_timings.then_some(timings),
    })
}

fn analyze_location(v: &mut Verifier, loc: &LocationId, cfg: &PipelineConfig) -> LocReport {
    let vars = v
        .cache
        .program
        .extract_vars(loc)
        .expect("location comes from the program")
        .to_vec();
    let mut degree = cfg
        .degree
        .unwrap_or_else(|| auto_degree(vars.len(), cfg.alpha))
        .max(1);
    let calls0 = v.calls();
    let checked0 = v.total_checked;
    let mut stats = LocStats::default();
    let eq_cfg = EqInferConfig {
        degree,
        ..Default::default()
    };
    let eq_out = infer_equalities(v, loc, None, &eq_cfg).expect("vars unrestricted");
    let (eq_invs, status, note) = match eq_out {
        EqOutcome::Invariants { invs, stats: es } => {
            stats.rows = es.rows_used;
            stats.eq_terms = es.num_terms;
            stats.eq_candidates = es.candidates_tried;
            stats.eq_disproved = es.disproved;
            stats.refine_iters = es.refine_iters;
            stats.gather_rounds = es.gather_rounds;
            degree = es.degree_used;
            (invs, "ok", None)
        }
        EqOutcome::Unreachable => (Vec::new(), "unreachable", None),
        EqOutcome::NotEnoughTraces { rows, needed } => (
            Vec::new(),
            "not_enough_traces",
            Some(format!("gathered {rows} rows, needed {needed}")),
        ),
    };
    let oct_invs = if status == "unreachable" {
        Vec::new()
    } else {
        let oct_cfg = OctInferConfig {
            max_abs: cfg.oct_range,
            ..Default::default()
        };
        match infer_octagons(v, loc, None, &oct_cfg).expect("vars unrestricted") {
            OctOutcome::Constraints { octs, stats: os } => {
                stats.oct_terms = os.terms_considered;
                stats.oct_probes = os.probes;
                stats.oct_dropped = os.dropped;
                octs
            }
            OctOutcome::Unreachable | OctOutcome::NotEnoughTraces => Vec::new(),
        }
    };
    stats.verifier_calls = v.calls() - calls0;
    stats.inputs_checked = v.total_checked - checked0;

    let mut statuses: BTreeMap<String, EqStatus> = BTreeMap::new();
    let mut set = InvariantSet::default();
    for ie in &eq_invs {
        statuses.insert(ie.eq.to_string(), ie.status);
        set.eqs.insert(ie.eq.clone());
    }
    for io in &oct_invs {
        statuses.insert(io.c.to_string(), io.status);
        set.octs.insert(io.c.clone());
    }
    let kept = remove_redundant(&set, 2 * degree);
    let mut invariants = Vec::new();
    let mut eqs = Vec::new();
    let mut octs = Vec::new();
    for e in &kept.eqs {
        let text = e.to_string();
        let status = status_name(statuses[&text]);
        invariants.push(InvReport { text, kind: "eq", status });
        eqs.push(e.clone());
    }
    for c in &kept.octs {
        let text = c.to_string();
        let status = status_name(statuses[&text]);
        invariants.push(InvReport { text, kind: "oct", status });
        octs.push(c.clone());
    }
    LocReport {
        id: loc.to_string(),
        vars,
        degree,
        status,
        note,
        invariants,
        stats,
        eqs,
        octs,
    }
}

fn cmd_infer(a: InferArgs) -> CmdResult {
    let p = read_program(&a.path)?;
    let locations = if a.locations.is_empty() {
        None
    } else {
        Some(a.locations.clone())
    };
    let cfg = a.common.to_pipeline(locations);
    let report = infer_program(&p, &cfg)?;
    let out = match a.common.format {
        FormatChoice::Json => to_json(&report),
        FormatChoice::Text => render_report_text(&report),
    };
    Ok((0, out))
}

/// Trace-only mode: one nullspace solve plus octagonal extrema over the
/// supplied rows. Nothing is verified, so everything is labeled unverified.
fn cmd_traces(a: TracesArgs) -> CmdResult {
    let text = fs::read_to_string(&a.path)
        .map_err(|e| usage(format!("{}: {e}", a.path.display())))?;
    let loc_name = a.loc.clone().unwrap_or_else(|| {
        a.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trace".to_string())
    });
    let ts: TraceSet = traces_from_csv(LocationId(loc_name.clone()), &text)
        .map_err(|e| usage(format!("{}: {e}", a.path.display())))?;
    let cfg = a.common.to_pipeline(None);
    let degree = cfg
        .degree
        .unwrap_or_else(|| auto_degree(ts.vars.len(), cfg.alpha))
        .max(1);
    let template = Template::new(&ts.vars, degree);
    let mut stats = LocStats {
        rows: ts.len(),
        eq_terms: template.terms.len(),
        ..Default::default()
    };
    let (status, note, eqs) = if ts.len() < template.terms.len() {
        (
            "not_enough_traces",
            Some(format!(
                "{} rows, {} needed for degree {}",
                ts.len(),
                template.terms.len(),
                degree
            )),
            Vec::new(),
        )
    } else {
        let basis = template.solve(ts.rows());
        let eqs = canonicalize_eq_basis(&template.extract_eqts(&basis));
        stats.eq_candidates = eqs.len();
        ("ok", None, eqs)
    };

    // extrema of every octagonal term over the rows
    let mut octs = Vec::new();
    for term in enumerate_oct_terms(&ts.vars) {
        let mut max: Option<BigInt> = None;
        for row in ts.rows() {
            let env: BTreeMap<String, BigInt> = ts
                .vars
                .iter()
                .zip(row)
                .map(|(n, x)| (n.clone(), x.clone()))
                .collect();
            let val = term.eval(&env);
            if max.as_ref().is_none_or(|m| val > *m) {
                max = Some(val);
            }
        }
        let Some(max) = max else { continue };
        if max.abs() <= BigInt::from(cfg.oct_range) {
            let k = max.to_i64().expect("within oct range");
            octs.push(OctConstraint { term, k });
        }
    }

    let mut set = InvariantSet::default();
    set.eqs.extend(eqs.iter().cloned());
    set.octs.extend(octs.iter().cloned());
    let kept = remove_redundant(&set, 2 * degree);
    let mut invariants = Vec::new();
    let (mut keqs, mut kocts) = (Vec::new(), Vec::new());
    for e in &kept.eqs {
        invariants.push(InvReport {
            text: e.to_string(),
            kind: "eq",
            status: "unverified",
        });
        keqs.push(e.clone());
    }
    for c in &kept.octs {
        invariants.push(InvReport {
            text: c.to_string(),
            kind: "oct",
            status: "unverified",
        });
        kocts.push(c.clone());
    }
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "traces",
        program: loc_name.clone(),
        config: ConfigEcho {
            alpha: cfg.alpha,
            degree: cfg.degree,
            oct_range: cfg.oct_range,
            mode: "trace-only".to_string(),
            budget: 0,
            seed: cfg.seed,
            wrap64: cfg.wrap64,
        },
        locations: vec![LocReport {
            id: loc_name,
            vars: ts.vars.clone(),
            degree,
            status,
            note,
            invariants,
            stats,
            eqs: keqs,
            octs: kocts,
        }],
        timings_ms: None,
    };
    let out = match a.common.format {
        FormatChoice::Json => to_json(&report),
        FormatChoice::Text => render_report_text(&report),
    };
    Ok((0, out))
}

fn cmd_complexity(a: ComplexityArgs) -> CmdResult {
    let p = read_program(&a.path)?;
    let cfg = a.common.to_pipeline(None);
    let mode = resolve_mode(&p, cfg.mode);
    let opts = RunOptions {
        seed: cfg.seed,
        wrap64: cfg.wrap64,
        ..Default::default()
    };
    let budget = VerifyBudget {
        mode,
        max_inputs: cfg.budget,
        seed: cfg.seed,
    };
    let ccfg = ComplexityConfig {
        degree: cfg.degree,
        alpha: cfg.alpha,
        ..Default::default()
    };
    let t0 = Instant::now();
    let outcome = complexity::infer_counter_relation(&p, &opts, budget, &ccfg)
        .map_err(|e| analysis(e.to_string()))?;
    let mut report = ComplexityReport {
        schema_version: SCHEMA_VERSION,
        command: "complexity",
        program: p.name.clone(),
        config: echo(&cfg, mode),
        status: "ok",
        exit_location: None,
        relation: None,
        t_degree: None,
        bounds: Vec::new(),
        residual: None,
        fully_factored: None,
        timings_ms: None,
    };
    let mut code = 0;
    match outcome {
        RelationOutcome::Relation(r) => {
            let ext = r.extract_bounds(&ccfg, cfg.seed);
            report.exit_location = Some(r.exit_loc.to_string());
            report.relation = Some(r.relation.to_string());
            report.t_degree = Some(r.t_degree);
            report.bounds = ext
                .roots
                .iter()
                .map(|(g, m)| BoundReport {
                    expr: g.to_string(),
                    multiplicity: *m,
                })
                .collect();
            report.residual = Some(ext.residual.to_string());
            report.fully_factored = Some(ext.fully_factored);
        }
        RelationOutcome::NoRelation { .. } => report.status = "no_relation",
        RelationOutcome::Unreachable => {
            report.status = "unreachable";
            code = 1;
        }
        RelationOutcome::NotEnoughTraces { .. } => {
            report.status = "not_enough_traces";
            code = 1;
        }
    }
    if cfg.emit_timings {
        let mut t = BTreeMap::new();
        t.insert("total".to_string(), t0.elapsed().as_millis());
        report.timings_ms = Some(t);
    }
    let out = match a.common.format {
        FormatChoice::Json => to_json(&report),
        FormatChoice::Text => render_complexity_text(&report),
    };
    Ok((code, out))
}

fn cmd_corpus(a: CorpusArgs) -> CmdResult {
    let entries = fs::read_dir(&a.dir)
        .map_err(|e| usage(format!("{}: {e}", a.dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mpl"))
        .collect();
    files.sort();
    let base = a.common.to_pipeline(None);

    let results: Vec<CorpusEntry> = std::thread::scope(|s| {
        let handles: Vec<_> = files
            .iter()
            .map(|f| {
                let base = &base;
                s.spawn(move || run_corpus_entry(f, base))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("corpus worker panicked"))
            .collect()
    });

    let failed = results.iter().any(|r| matches!(r.status, "fail" | "error"));
    let report = CorpusReport {
        schema_version: SCHEMA_VERSION,
        command: "corpus",
        dir: a.dir.display().to_string(),
        entries: results,
    };
    let out = match a.common.format {
        FormatChoice::Json => to_json(&report),
        FormatChoice::Text => render_corpus_text(&report),
    };
    Ok((if failed { 1 } else { 0 }, out))
}

fn run_corpus_entry(file: &Path, base: &PipelineConfig) -> CorpusEntry {
    let file_name = file
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let t0 = Instant::now();
    let fail_entry = |status, details: Vec<String>| CorpusEntry {
        program: stem.clone(),
        file: file_name.clone(),
        status,
        details,
        report: None,
        time_ms: None,
    };
    let p = match fs::read_to_string(file)
        .map_err(|e| e.to_string())
        .and_then(|src| parse_program(&src).map_err(|e| e.to_string()))
    {
        Ok(p) => p,
        Err(e) => return fail_entry("error", vec![e]),
    };
    let sidecar_path = file.with_extension("expected");
    let sidecar: Option<Sidecar> = if sidecar_path.exists() {
        match Sidecar::load(&sidecar_path) {
            Ok(sc) => Some(sc),
            Err(e) => {
                return fail_entry("error", vec![format!("sidecar: {e}")]);
            }
        }
    } else {
        None
    };
    let cfg = match &sidecar {
        Some(sc) => match sc.apply(base) {
            Ok(cfg) => cfg,
            Err(e) => return fail_entry("error", vec![format!("sidecar: {e}")]),
        },
        None => base.clone(),
    };
    let report = match infer_program(&p, &cfg) {
        Ok(r) => r,
        Err(f) => return fail_entry("error", vec![f.msg]),
    };
    let (status, details) = match &sidecar {
        None => ("no_sidecar", vec!["no .expected sidecar".to_string()]),
        Some(sc) => {
            let unmet = check_expectations(&report, sc);
            if unmet.is_empty() {
                ("pass", Vec::new())
            } else {
                ("fail", unmet)
            }
        }
    };
    CorpusEntry {
        program: p.name.clone(),
        file: file_name,
        status,
        details,
        report: Some(report),
        time_ms: base.emit_timings.then(|| t0.elapsed().as_millis()),
    }
}

/// Every sidecar invariant must be implied by the produced set (not merely
/// string-equal). Returns the unmet expectations.
pub fn check_expectations(report: &Report, sc: &Sidecar) -> Vec<String> {
    let mut unmet = Vec::new();
    for sl in &sc.locations {
        let Some(lr) = report.locations.iter().find(|l| l.id == sl.id) else {
            unmet.push(format!("[{}] location not analyzed", sl.id));
            continue;
        };
        let cap = 2 * lr.degree;
        for s in &sl.equalities {
            match parse_equality(s) {
                Err(e) => unmet.push(format!("[{}] bad expected equality `{s}`: {e}", sl.id)),
                Ok(want) => {
                    let ok = lr.eqs.contains(&want)
                        || is_implied_eq(&lr.eqs, &want, cap.max(want.degree()));
                    if !ok {
                        unmet.push(format!("[{}] equality `{s}` not implied", sl.id));
                    }
                }
            }
        }
        let eq_set: BTreeSet<Equality> = lr.eqs.iter().cloned().collect();
        for s in &sl.octagons {
            match OctConstraint::parse(s) {
                Err(e) => unmet.push(format!("[{}] bad expected octagon `{s}`: {e}", sl.id)),
                Ok(want) => {
                    let ok = lr.octs.contains(&want)
                        || is_implied_oct(&eq_set, &lr.octs, &want);
                    if !ok {
                        unmet.push(format!("[{}] octagon `{s}` not implied", sl.id));
                    }
                }
            }
        }
    }
    unmet
}

/// Parses "P == Q" into a canonical equality.
pub fn parse_equality(src: &str) -> Result<Equality, String> {
    let e = parse_expr_str(src).map_err(|e| e.to_string())?;
    let ExprKind::Binary(BinOp::Eq, lhs, rhs) = &e.kind else {
        return Err("expected `<poly> == <poly>`".to_string());
    };
    let l = expr_to_poly(lhs).ok_or("left side is not polynomial")?;
    let r = expr_to_poly(rhs).ok_or("right side is not polynomial")?;
    Equality::from_poly(&l.sub(&r)).ok_or_else(|| "sides are identical".to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn render_report_text(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "program {}", r.program);
    let _ = writeln!(
        out,
        "config: mode {}, seed {}, alpha {}, degree {}, oct-range {}",
        r.config.mode,
        r.config.seed,
        r.config.alpha,
        r.config
            .degree
            .map_or_else(|| "auto".to_string(), |d| d.to_string()),
        r.config.oct_range
    );
    for l in &r.locations {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "[{}] vars {} — degree {}, {}{}",
            l.id,
            l.vars.join(","),
            l.degree,
            l.status,
            l.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
        );
        if l.invariants.is_empty() {
            let _ = writeln!(out, "  (no invariants)");
        }
        for inv in &l.invariants {
            let _ = writeln!(out, "  {}   [{}]", inv.text, inv.status);
        }
        let s = &l.stats;
        let _ = writeln!(
            out,
            "  stats: rows {}, eq candidates {} ({} disproved), oct probes {}, \
             verifier calls {}, inputs checked {}",
            s.rows, s.eq_candidates, s.eq_disproved, s.oct_probes, s.verifier_calls,
            s.inputs_checked
        );
    }
    if let Some(t) = &r.timings_ms {
        for (k, v) in t {
            let _ = writeln!(out, "time {k}: {v} ms");
        }
    }
    out
}

fn render_complexity_text(r: &ComplexityReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "program {}", r.program);
    match r.status {
        "ok" => {
            let _ = writeln!(
                out,
                "exit location {}",
                r.exit_location.as_deref().unwrap_or("?")
            );
            let _ = writeln!(out, "relation: {}", r.relation.as_deref().unwrap_or("?"));
            let _ = writeln!(out, "t-degree: {}", r.t_degree.unwrap_or(0));
            let _ = writeln!(out, "bounds:");
            for b in &r.bounds {
                if b.multiplicity == 1 {
                    let _ = writeln!(out, "  t = {}", b.expr);
                } else {
                    let _ = writeln!(out, "  t = {}   (multiplicity {})", b.expr, b.multiplicity);
                }
            }
            let _ = writeln!(
                out,
                "residual: {}{}",
                r.residual.as_deref().unwrap_or("?"),
                if r.fully_factored == Some(true) {
                    " (fully factored)"
                } else {
                    " (t remains in residual)"
                }
            );
        }
        other => {
            let _ = writeln!(out, "result: {other}");
        }
    }
    if let Some(t) = &r.timings_ms {
        for (k, v) in t {
            let _ = writeln!(out, "time {k}: {v} ms");
        }
    }
    out
}

fn render_corpus_text(r: &CorpusReport) -> String {
    let mut out = String::new();
    let mut pass = 0usize;
    for e in &r.entries {
        let invs: usize = e
            .report
            .as_ref()
            .map(|rep| rep.locations.iter().map(|l| l.invariants.len()).sum())
            .unwrap_or(0);
        let locs = e.report.as_ref().map(|rep| rep.locations.len()).unwrap_or(0);
        if e.status == "pass" {
            pass += 1;
        }
        let time = e
            .time_ms
            .map(|t| format!("  {t} ms"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{:<12} locs {:<2} invs {:<3} {}{}",
            e.program, locs, invs, e.status, time
        );
        for d in &e.details {
            let _ = writeln!(out, "    {d}");
        }
    }
    let _ = writeln!(out, "{}/{} pass", pass, r.entries.len());
    out
}
