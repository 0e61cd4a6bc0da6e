//! The `scenq` command line: querying, sampling, benchmarking and tooling
//! around the scenario query engine.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use scenario_query::constraints::parse_smtlib;
use scenario_query::dsl::{self, ParseError};
use scenario_query::engine::{
    matches, observed_fields, queried_features, CorrespondenceMode, Label, Program, ProgramError, QueryConfig,
    QueryVerdict,
};
use scenario_query::forest::analyze_dependencies;
use scenario_query::geomap::{load_map, synthetic, RoadMap};
use scenario_query::sampler::{perturb, sample_indexed, PerturbKind, SampleConfig, SampleError};
use scenario_query::solver::{format_result, solve, Backend, SolverConfig, DEFAULT_DELTA};

/// Exit status for malformed inputs (program, map, labels, flags).
pub const EXIT_INPUT: i32 = 2;
/// Exit status when the sampler runs out of rejections.
pub const EXIT_REJECTIONS: i32 = 3;

/// Labels processed per parallel batch when streaming JSONL.
const BATCH: usize = 1024;

#[derive(Debug, Parser)]
#[command(name = "scenq", version, about = "Match labelled scenes against scenario programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every label of a JSONL file against a program.
    Query(QueryArgs),
    /// Draw labels from a program.
    Sample(SampleArgs),
    /// Time known- and unknown-correspondence queries over agent counts.
    Bench(BenchArgs),
    /// Check a program (and optionally a map and labels) for errors.
    Validate(ValidateArgs),
    /// Decide an SMT-LIB 2 query with the builtin solver.
    SolveSmt2(SolveArgs),
    /// Print a program's compiled trees and feature groups.
    Explain(ExplainArgs),
    /// Write a built-in synthetic map as JSON.
    SynthMap(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProgramArgs {
    #[arg(long)]
    pub program: PathBuf,
    /// Override a `param` declaration, as name=value.
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// `builtin` or `external:<command>`; the query file is appended to the command.
    #[arg(long, default_value = "builtin", value_parser = parse_backend)]
    pub solver: Backend,
}

impl SolverArgs {
    fn config(&self) -> anyhow::Result<SolverConfig> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(InputError(format!("--delta must be positive, got {}", self.delta)).into());
        }
        Ok(SolverConfig {
            delta: self.delta,
            backend: self.solver.clone(),
            ..SolverConfig::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrespondenceArg {
    /// Search all class-compatible correspondences.
    Search,
    /// Pair objects by position in the label and the program.
    Known,
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 50.0)]
    pub visible_distance: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Require as many label objects as program objects.
    #[arg(long)]
    pub exact_match: bool,
    #[arg(long, value_enum, default_value_t = CorrespondenceArg::Search)]
    pub correspondence: CorrespondenceArg,
    /// Disable prefix pruning of failed correspondences.
    #[arg(long)]
    pub no_pruning: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Verdict JSONL destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write every solver query to this directory.
    #[arg(long)]
    pub emit_smtlib: Option<PathBuf>,
    /// Record per-correspondence outcomes in each verdict.
    #[arg(long)]
    pub explain: bool,
    /// Accepted for symmetry with `sample`; querying is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add wall-clock time to the summary.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    #[arg(long)]
    pub map: PathBuf,
    #[arg(short = 'n', long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = scenario_query::sampler::DEFAULT_MAX_REJECTIONS)]
    pub max_rejections: u32,
    /// Perturb each sample so it no longer matches.
    #[arg(long, value_parser = parse_perturb)]
    pub perturb: Option<PerturbKind>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    #[arg(long)]
    pub map: PathBuf,
    /// Agent counts as `lo..hi` (inclusive) or a comma list.
    #[arg(long, default_value = "2..6", value_parser = parse_agents)]
    pub agents: AgentCounts,
    /// Parameter receiving the agent count; defaults to the program's only param.
    #[arg(long)]
    pub scale_param: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub labels_per_count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200.0)]
    pub visible_distance: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    pub file: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    /// Group only the features this label observes.
    #[arg(long)]
    pub label: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapKind {
    Town,
    Strip,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = MapKind::Town)]
    pub kind: MapKind,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A user-facing input problem; maps to exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    match s {
        "builtin" => Ok(Backend::Builtin),
        _ => match s.strip_prefix("external:") {
            Some(cmd) if !cmd.trim().is_empty() => Ok(Backend::External(cmd.to_string())),
            _ => Err(format!("expected `builtin` or `external:<command>`, got `{s}`")),
        },
    }
}

fn parse_perturb(s: &str) -> Result<PerturbKind, String> {
    s.parse()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentCounts(pub Vec<usize>);

/// Parses `lo..hi` or `a,b,c` into a list of counts.
pub fn parse_agents(s: &str) -> Result<AgentCounts, String> {
    let bad = || format!("expected `lo..hi` or a comma list, got `{s}`");
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok(AgentCounts((a..=b).collect()));
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>().map(AgentCounts)
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| InputError(format!("cannot read {}: {e}", path.display())).into())
}

/// Loads, validates and compiles a program, rendering diagnostics with the
/// file name.
pub fn load_program(args: &ProgramArgs) -> anyhow::Result<Program> {
    let src = read(&args.program)?;
    let params: BTreeMap<String, f64> = args.params.iter().cloned().collect();
    let file = args.program.display().to_string();
    Program::from_source(&src, &params).map_err(|e| {
        let msg = match e {
            ProgramError::Parse(p) => p.with_file(&file),
            ProgramError::Fragment(ds) => ds.iter().map(|d| format!("{file}:{d}")).collect::<Vec<_>>().join("\n"),
            ProgramError::Compile(c) => format!("{file}: {c}"),
        };
        InputError(msg).into()
    })
}

fn map_from(path: &Path) -> anyhow::Result<RoadMap> {
    load_map(path).map_err(|e| InputError(format!("{}: {e}", path.display())).into())
}

fn writer(out: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QuerySummary {
    pub total: u64,
    pub matched: u64,
    pub pruned: u64,
    pub smt_calls: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

fn query_config(a: &QueryArgs) -> anyhow::Result<QueryConfig> {
    if !(a.visible_distance > 0.0) {
        return Err(InputError("--visible-distance must be positive".into()).into());
    }
    if a.jobs == 0 {
        return Err(InputError("--jobs must be at least 1".into()).into());
    }
    Ok(QueryConfig {
        visible_distance: a.visible_distance,
        exact_match: a.exact_match,
        solver: a.solver.config()?,
        pruning: !a.no_pruning,
        mode: match a.correspondence {
            CorrespondenceArg::Search => CorrespondenceMode::Enumerate,
            CorrespondenceArg::Known => CorrespondenceMode::Identity,
        },
        emit_smtlib: a.emit_smtlib.clone(),
        explain: a.explain,
    })
}

/// Streams labels through the engine, writing one verdict per line.
pub fn cmd_query(a: &QueryArgs) -> anyhow::Result<QuerySummary> {
    let start = Instant::now();
    let program = load_program(&a.program)?;
    let map = map_from(&a.map)?;
    let cfg = query_config(a)?;
    let file = File::open(&a.labels).map_err(|e| InputError(format!("cannot read {}: {e}", a.labels.display())))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build()?;
    let mut out = writer(&a.out)?;
    let mut summary = QuerySummary::default();
    let mut lines = BufReader::new(file).lines().enumerate();
    loop {
        let mut batch = Vec::with_capacity(BATCH);
        for (i, line) in lines.by_ref() {
            let line = line.with_context(|| format!("reading {}", a.labels.display()))?;
            if line.trim().is_empty() {
                continue;
            }
            let label = Label::from_json(&line)
                .map_err(|e| InputError(format!("{}:{}: {e}", a.labels.display(), i + 1)))?;
            batch.push(label);
            if batch.len() == BATCH {
                break;
            }
        }
        if batch.is_empty() {
            break;
        }
        let verdicts: Vec<anyhow::Result<QueryVerdict>> = pool.install(|| {
            batch
                .par_iter()
                .map(|l| matches(&program, &map, l, &cfg).with_context(|| format!("label {}", l.scene_id)))
                .collect()
        });
        for v in verdicts {
            let v = v?;
            summary.total += 1;
            summary.matched += v.matches as u64;
            summary.pruned += v.stats.correspondences_pruned;
            summary.smt_calls += v.stats.smt_calls;
            serde_json::to_writer(&mut out, &v)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    if a.timing {
        summary.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    Ok(summary)
}

pub fn cmd_sample(a: &SampleArgs) -> anyhow::Result<()> {
    let program = load_program(&a.program)?;
    let map = map_from(&a.map)?;
    let cfg = SampleConfig {
        seed: a.seed,
        max_rejections: a.max_rejections,
    };
    let mut out = writer(&a.out)?;
    for i in 0..a.count as u64 {
        let mut label = sample_indexed(&program, &map, &cfg, i)?;
        if let Some(kind) = a.perturb {
            label = perturb(&program, &map, &label, kind, &cfg)?;
        }
        writeln!(out, "{}", label.to_json())?;
    }
    out.flush()?;
    Ok(())
}

/// Mean query times for one agent count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub agents: usize,
    pub known_mean_s: f64,
    pub unknown_mean_s: f64,
    pub known_smt_calls: f64,
    pub unknown_smt_calls: f64,
}

/// The program's only parameter, used as the agent count.
pub fn scale_param(program: &Program) -> anyhow::Result<String> {
    match program.ast.params.as_slice() {
        [(name, _)] => Ok(name.clone()),
        _ => Err(InputError("program needs exactly one param, or pass --scale-param".into()).into()),
    }
}

/// What `bench` measures: a program scaled through one parameter.
#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub source: String,
    pub params: BTreeMap<String, f64>,
    pub scale_param: String,
    pub agents: Vec<usize>,
    pub labels_per_count: usize,
    pub seed: u64,
    pub query: QueryConfig,
}

/// Samples labels per agent count and times the engine with the identity
/// correspondence and with shuffled labels.
pub fn bench(plan: &BenchPlan, map: &RoadMap) -> anyhow::Result<Vec<BenchRow>> {
    let (seed, labels, cfg) = (plan.seed, plan.labels_per_count, &plan.query);
    let mut rows = Vec::new();
    for &n in &plan.agents {
        let mut params = plan.params.clone();
        params.insert(plan.scale_param.clone(), n as f64);
        let program = Program::from_source(&plan.source, &params).map_err(|e| InputError(e.to_string()))?;
        let scfg = SampleConfig {
            seed: seed.wrapping_add(n as u64),
            ..SampleConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9e37_79b9));
        let known_cfg = QueryConfig {
            mode: CorrespondenceMode::Identity,
            ..cfg.clone()
        };
        let unknown_cfg = QueryConfig {
            mode: CorrespondenceMode::Enumerate,
            ..cfg.clone()
        };
        if let Some(first) = (labels > 0).then(|| sample_indexed(&program, map, &scfg, 0)).transpose()? {
            // untimed warm-up so the first measurement pays no cold-cache cost
            matches(&program, map, &first, &known_cfg)?;
        }
        let (mut tk, mut tu) = (Duration::ZERO, Duration::ZERO);
        let (mut ck, mut cu) = (0u64, 0u64);
        for i in 0..labels as u64 {
            let label = sample_indexed(&program, map, &scfg, i)?;
            let mut shuffled = label.clone();
            shuffled.objects.shuffle(&mut rng);
            let t = Instant::now();
            let v = matches(&program, map, &label, &known_cfg)?;
            tk += t.elapsed();
            ck += v.stats.smt_calls;
            let t = Instant::now();
            let w = matches(&program, map, &shuffled, &unknown_cfg)?;
            tu += t.elapsed();
            cu += w.stats.smt_calls;
            if !(v.matches && w.matches) {
                log::warn!("sampled label {} did not match with {n} agents", label.scene_id);
            }
        }
        let k = labels.max(1) as f64;
        rows.push(BenchRow {
            agents: n,
            known_mean_s: tk.as_secs_f64() / k,
            unknown_mean_s: tu.as_secs_f64() / k,
            known_smt_calls: ck as f64 / k,
            unknown_smt_calls: cu as f64 / k,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("agents,known_mean_s,unknown_mean_s,known_smt_calls,unknown_smt_calls\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.6},{:.6},{:.1},{:.1}\n",
            r.agents, r.known_mean_s, r.unknown_mean_s, r.known_smt_calls, r.unknown_smt_calls
        ));
    }
    s
}

fn cmd_bench(a: &BenchArgs) -> anyhow::Result<()> {
    let program = load_program(&a.program)?;
    let param = match &a.scale_param {
        Some(p) => p.clone(),
        None => scale_param(&program)?,
    };
    let map = map_from(&a.map)?;
    let source = read(&a.program.program)?;
    let cfg = QueryConfig {
        visible_distance: a.visible_distance,
        solver: a.solver.config()?,
        ..QueryConfig::default()
    };
    let plan = BenchPlan {
        source,
        params: a.program.params.iter().cloned().collect(),
        scale_param: param,
        agents: a.agents.0.clone(),
        labels_per_count: a.labels_per_count,
        seed: a.seed,
        query: cfg,
    };
    let rows = bench(&plan, &map)?;
    let mut out = writer(&a.out)?;
    out.write_all(bench_csv(&rows).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> anyhow::Result<String> {
    let program = load_program(&a.program)?;
    let mut report = format!(
        "{}: ok ({} objects, {} requirements)\n",
        a.program.program.display(),
        program.forest.scene_objects().count(),
        program.forest.requirements.len()
    );
    if let Some(m) = &a.map {
        let map = map_from(m)?;
        report.push_str(&format!(
            "{}: ok ({} regions, {} triangles)\n",
            m.display(),
            map.regions.len(),
            map.triangle_count()
        ));
    }
    if let Some(l) = &a.labels {
        let text = read(l)?;
        let labels = scenario_query::engine::parse_jsonl(&text)
            .map_err(|e| InputError(format!("{}:{e}", l.display())))?;
        report.push_str(&format!("{}: ok ({} labels)\n", l.display(), labels.len()));
    }
    Ok(report)
}

fn cmd_solve(a: &SolveArgs) -> anyhow::Result<String> {
    let text = read(&a.file)?;
    let (vars, f) = parse_smtlib(&text).map_err(|e| InputError(format!("{}: {e}", a.file.display())))?;
    let cfg = SolverConfig {
        delta: a.delta,
        ..SolverConfig::default()
    };
    let r = solve(&f, &vars, &cfg)?;
    Ok(format_result(&r, a.delta))
}

fn cmd_explain(a: &ExplainArgs) -> anyhow::Result<String> {
    let program = load_program(&a.program)?;
    let ef = &program.forest;
    let features = match &a.label {
        Some(p) => {
            let text = read(p)?;
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            let label = Label::from_json(first).map_err(|e| InputError(format!("{}: {e}", p.display())))?;
            log::info!("observed fields: {:?}", observed_fields(&label));
            queried_features(&program, &label)
        }
        None => ef.scene_objects().flat_map(|e| e.slots()).filter(|k| ef.trees.contains_key(k)).collect(),
    };
    let mut s = String::from("# program\n");
    s.push_str(&dsl::pretty_print(&program.ast));
    s.push_str("\n# trees\n");
    s.push_str(&ef.dump());
    s.push_str("\n# feature groups\n");
    for (i, g) in analyze_dependencies(ef, &features).groups.iter().enumerate() {
        let members: Vec<String> = g.members.iter().map(ToString::to_string).collect();
        s.push_str(&format!("{i}: [{}]", members.join(", ")));
        if !g.shared_intermediates.is_empty() {
            let shared: Vec<String> = g.shared_intermediates.iter().map(ToString::to_string).collect();
            s.push_str(&format!(" sharing [{}]", shared.join(", ")));
        }
        s.push('\n');
    }
    Ok(s)
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let map = match a.kind {
        MapKind::Town => synthetic::town(),
        MapKind::Strip => synthetic::straight_strip(400.0, 8.0, 20.0),
    };
    let mut out = writer(&a.out)?;
    out.write_all(map.to_json().as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Runs a command and returns its exit status, printing errors to stderr.
pub fn run(cli: Cli) -> i32 {
    let result: anyhow::Result<()> = (|| {
        match &cli.command {
            Command::Query(a) => {
                let s = cmd_query(a)?;
                eprintln!("{}", serde_json::to_string(&s)?);
            }
            Command::Sample(a) => cmd_sample(a)?,
            Command::Bench(a) => cmd_bench(a)?,
            Command::Validate(a) => print!("{}", cmd_validate(a)?),
            Command::SolveSmt2(a) => print!("{}", cmd_solve(a)?),
            Command::Explain(a) => print!("{}", cmd_explain(a)?),
            Command::SynthMap(a) => cmd_synth(a)?,
        }
        Ok(())
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.is::<InputError>() || cause.is::<ParseError>() {
            return EXIT_INPUT;
        }
        if let Some(s) = cause.downcast_ref::<SampleError>() {
            return match s {
                SampleError::RejectionBudgetExceeded(_) => EXIT_REJECTIONS,
                SampleError::BadConfig | SampleError::NotApplicable { .. } => EXIT_INPUT,
                SampleError::Eval(_) => 1,
            };
        }
    }
    1
}
