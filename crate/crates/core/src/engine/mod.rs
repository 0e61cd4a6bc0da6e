//! The query algorithm: enumerate object correspondences, check feature
//! groups incrementally with the solver, condition on success, remember
//! failing prefixes, and finally validate the program's requirements.

mod correspondence;
mod label;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::constraints::{to_smtlib, EncodeError, Encoder, Encoding};
use crate::dsl::{self, Diagnostic, ParseError, ScenarioAst};
use crate::eval::{EvalError, Evaluator};
use crate::forest::{
    analyze_dependencies, compile, CompileError, ExpressionForest, FeatureGroup, Field, SlotKey, SortedFeatures,
    Value,
};
use crate::geomap::{MapError, RoadMap};
use crate::solver::{solve, SolveError, SolverConfig, Verdict};

pub use correspondence::{BadOcs, Enumerator};
pub use label::{parse_jsonl, Label, LabelError, LabelObject};

/// Program object name to label object id.
pub type Correspondence = BTreeMap<String, String>;

pub const DEFAULT_VISIBLE_DISTANCE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("program is outside the supported fragment:\n{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Fragment(Vec<Diagnostic>),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// A parsed, validated and compiled scenario program.
#[derive(Debug, Clone)]
pub struct Program {
    pub ast: ScenarioAst,
    pub forest: ExpressionForest,
}

impl Program {
    pub fn from_source(source: &str, params: &BTreeMap<String, f64>) -> Result<Program, ProgramError> {
        let ast = dsl::parse_with_params(source, params)?;
        let diags = dsl::validate_fragment(&ast);
        if !diags.is_empty() {
            return Err(ProgramError::Fragment(diags));
        }
        let forest = compile(&ast)?;
        Ok(Program { ast, forest })
    }

    /// Scene objects other than ego, in definition order.
    pub fn others(&self) -> Vec<&str> {
        self.forest
            .scene_objects()
            .filter(|e| e.name != "ego")
            .map(|e| e.name.as_str())
            .collect()
    }

    pub fn has_ego(&self) -> bool {
        self.forest.entity("ego").is_some()
    }

    fn class_tag(&self, name: &str) -> &'static str {
        self.forest
            .entity(name)
            .and_then(|e| e.class)
            .map(|c| c.tag())
            .unwrap_or("object")
    }
}

/// How program objects are matched with label objects.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CorrespondenceMode {
    /// Every injective class-compatible correspondence.
    #[default]
    Enumerate,
    /// The i-th program object (definition order) to the i-th non-ego label object.
    Identity,
    Fixed(Correspondence),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryConfig {
    pub visible_distance: f64,
    pub exact_match: bool,
    pub solver: SolverConfig,
    pub pruning: bool,
    pub mode: CorrespondenceMode,
    /// Directory receiving every solver query as SMT-LIB 2.
    pub emit_smtlib: Option<PathBuf>,
    pub explain: bool,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            visible_distance: DEFAULT_VISIBLE_DISTANCE,
            exact_match: false,
            solver: SolverConfig::default(),
            pruning: true,
            mode: CorrespondenceMode::Enumerate,
            emit_smtlib: None,
            explain: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QueryStats {
    pub correspondences_tried: u64,
    pub correspondences_pruned: u64,
    pub smt_calls: u64,
    pub solver_branches: u64,
    /// Correspondences abandoned because the solver gave no verdict.
    pub undecided: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryVerdict {
    pub scene_id: String,
    pub matches: bool,
    pub correspondence: Option<Correspondence>,
    pub stats: QueryStats,
    pub anomalies: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub explain: Vec<String>,
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("label {0} has no object flagged as ego")]
    NoEgoInLabel(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solver(SolveError),
    #[error("requirement cannot be evaluated: {0}")]
    Requirement(#[from] EvalError),
    #[error("invalid correspondence: {0}")]
    Correspondence(String),
    #[error("cannot write query file: {0}")]
    Io(#[from] std::io::Error),
}

/// Result of one feature-group query.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Sat,
    Unsat,
    /// The solver stopped without a verdict.
    Undecided(String),
}

/// Fields observed on every label object; only those are checked.
pub fn observed_fields(label: &Label) -> BTreeSet<Field> {
    let mut fields = BTreeSet::from([Field::Position]);
    if !label.objects.is_empty() && label.objects.iter().all(|o| o.heading.is_some()) {
        fields.insert(Field::Heading);
    }
    if let Some(first) = label.objects.first() {
        for k in first.extras.keys() {
            if label.objects.iter().all(|o| o.extras.contains_key(k)) {
                fields.insert(Field::Extra(k.clone()));
            }
        }
    }
    fields
}

/// Program features checked against `label`.
pub fn queried_features(program: &Program, label: &Label) -> Vec<SlotKey> {
    let fields = observed_fields(label);
    program
        .forest
        .scene_objects()
        .flat_map(|e| e.slots())
        .filter(|k| fields.contains(&k.field) && program.forest.trees.contains_key(k))
        .collect()
}

/// Label values of the queried features under a correspondence (ego
/// included).
pub fn label_values(
    features: &[SlotKey],
    label: &Label,
    corr: &Correspondence,
) -> Result<BTreeMap<SlotKey, Value>, QueryError> {
    let mut out = BTreeMap::new();
    for k in features {
        let Some(id) = corr.get(&k.entity) else { continue };
        let obj = label
            .object(id)
            .ok_or_else(|| QueryError::Correspondence(format!("no label object `{id}`")))?;
        let v = match &k.field {
            Field::Position => Some(Value::Vector(obj.position)),
            Field::Heading => obj.heading.map(Value::Scalar),
            Field::Extra(n) => obj.extras.get(n).copied().map(Value::Scalar),
            Field::Value => None,
        };
        if let Some(v) = v {
            out.insert(k.clone(), v);
        }
    }
    Ok(out)
}

fn clip_map(map: &RoadMap, label: &Label, radius: f64, anomalies: &mut Vec<String>) -> RoadMap {
    let Some(ego) = label.ego() else { return map.clone() };
    if !map.regions.iter().any(|r| r.contains(ego.position)) {
        anomalies.push(format!("ego at {} lies outside every mapped region", ego.position));
    }
    match map.clip_to_visible(ego.position, radius) {
        Ok(m) => m,
        Err(e @ MapError::EmptyVisibleMap { .. }) => {
            anomalies.push(e.to_string());
            RoadMap::new(Vec::new()).expect("empty map is valid")
        }
        Err(e) => {
            anomalies.push(e.to_string());
            map.clone()
        }
    }
}

/// Encodes one group's trees together with the equalities to its label
/// values and solves the result.
pub fn query_step(
    ef: &ExpressionForest,
    group: &FeatureGroup,
    values: &BTreeMap<SlotKey, Value>,
    map: &RoadMap,
    solver: &SolverConfig,
) -> Result<(StepOutcome, Encoding, u64), QueryError> {
    let mut enc = Encoder::new(ef, map);
    for m in &group.members {
        if let Some(v) = values.get(m) {
            enc.require_value(m, *v, m.field == Field::Heading)?;
        }
    }
    let encoding = enc.finish();
    let (outcome, branches) = match solve(&encoding.formula, &encoding.vars, solver) {
        Ok(r) => (
            match r.verdict {
                Verdict::DeltaSat => StepOutcome::Sat,
                Verdict::Unsat => StepOutcome::Unsat,
            },
            r.stats.branches,
        ),
        Err(e @ (SolveError::BranchBudgetExceeded(_) | SolveError::Inconclusive)) => {
            (StepOutcome::Undecided(e.to_string()), 0)
        }
        Err(e) => return Err(QueryError::Solver(e)),
    };
    Ok((outcome, encoding, branches))
}

/// Evaluates every requirement on a fully conditioned forest.
pub fn check_requirements(ef: &ExpressionForest, map: &RoadMap) -> Result<bool, EvalError> {
    let mut ev = Evaluator::new(ef, map);
    for r in &ef.requirements {
        if !ev.check(r)? {
            return Ok(false);
        }
    }
    Ok(true)
}

struct Setup {
    /// Non-ego program objects in canonical order.
    order: Vec<String>,
    /// Non-ego label object ids in label order.
    others: Vec<String>,
    features: Vec<SlotKey>,
    sorted: SortedFeatures,
    vmap: RoadMap,
    anomalies: Vec<String>,
}

fn setup(program: &Program, map: &RoadMap, label: &Label, cfg: &QueryConfig) -> Result<Setup, QueryError> {
    label.validate()?;
    if program.has_ego() && label.ego().is_none() {
        return Err(QueryError::NoEgoInLabel(label.scene_id.clone()));
    }
    let mut anomalies = Vec::new();
    let vmap = clip_map(map, label, cfg.visible_distance, &mut anomalies);
    let features = queried_features(program, label);
    let sorted = analyze_dependencies(&program.forest, &features);
    let mut order: Vec<String> = sorted.object_order().into_iter().filter(|o| o != "ego").collect();
    for o in program.others() {
        if !order.iter().any(|x| x == o) {
            order.push(o.to_string());
        }
    }
    let others = label.objects.iter().filter(|o| !o.ego).map(|o| o.id.clone()).collect();
    Ok(Setup {
        order,
        others,
        features,
        sorted,
        vmap,
        anomalies,
    })
}

fn to_correspondence(s: &Setup, assign: &[usize], label: &Label) -> Correspondence {
    let mut c: Correspondence = s
        .order
        .iter()
        .zip(assign)
        .map(|(p, &l)| (p.clone(), s.others[l].clone()))
        .collect();
    if let Some(e) = label.ego() {
        c.insert("ego".into(), e.id.clone());
    }
    c
}

fn show_corr(c: &Correspondence) -> String {
    let parts: Vec<String> = c.iter().map(|(p, l)| format!("{p}->{l}")).collect();
    format!("{{{}}}", parts.join(", "))
}

/// FNV-1a hash, keeping query file names apart for labels sharing an id.
fn fingerprint(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Decides whether `label` matches `program`.
pub fn matches(program: &Program, map: &RoadMap, label: &Label, cfg: &QueryConfig) -> Result<QueryVerdict, QueryError> {
    let start = Instant::now();
    let s = setup(program, map, label, cfg)?;
    let mut verdict = QueryVerdict {
        scene_id: label.scene_id.clone(),
        matches: false,
        correspondence: None,
        stats: QueryStats::default(),
        anomalies: s.anomalies.clone(),
        explain: Vec::new(),
    };
    let label_classes: Vec<String> = label
        .objects
        .iter()
        .filter(|o| !o.ego)
        .map(|o| o.class.to_ascii_lowercase())
        .collect();
    if cfg.exact_match && label_classes.len() != s.order.len() {
        if cfg.explain {
            verdict.explain.push(format!(
                "exact match needs {} non-ego objects, label has {}",
                s.order.len(),
                label_classes.len()
            ));
        }
        verdict.stats.wall_time = start.elapsed();
        return Ok(verdict);
    }
    let prog_classes: Vec<&str> = s.order.iter().map(|o| program.class_tag(o)).collect();
    let label_refs: Vec<&str> = label_classes.iter().map(String::as_str).collect();

    // candidate list: every correspondence, or a single fixed one
    let fixed: Option<Vec<usize>> = match &cfg.mode {
        CorrespondenceMode::Enumerate => None,
        CorrespondenceMode::Identity => {
            let defs = program.others();
            let mut a = Vec::new();
            for o in &s.order {
                let i = defs.iter().position(|d| d == o).expect("program object");
                if i >= s.others.len() {
                    return Err(QueryError::Correspondence(format!("no label object for `{o}`")));
                }
                a.push(i);
            }
            Some(a)
        }
        CorrespondenceMode::Fixed(c) => {
            let mut a = Vec::new();
            for o in &s.order {
                let id = c
                    .get(o)
                    .ok_or_else(|| QueryError::Correspondence(format!("`{o}` is not mapped")))?;
                let i = s
                    .others
                    .iter()
                    .position(|x| x == id)
                    .ok_or_else(|| QueryError::Correspondence(format!("no non-ego label object `{id}`")))?;
                if a.contains(&i) {
                    return Err(QueryError::Correspondence(format!("`{id}` is used twice")));
                }
                a.push(i);
            }
            Some(a)
        }
    };
    if let Some(a) = &fixed {
        if a.iter().zip(&prog_classes).any(|(&l, c)| label_refs[l] != *c) {
            if cfg.explain {
                verdict.explain.push("fixed correspondence pairs objects of different classes".into());
            }
            verdict.stats.wall_time = start.elapsed();
            return Ok(verdict);
        }
    }

    let mut enumerator = Enumerator::new(&prog_classes, &label_refs);
    let mut fixed_once = fixed.clone();
    let mut bad = BadOcs::default();
    let no_bad = BadOcs::default();
    let mut ef = program.forest.clone();
    let mut calls = 0u64;
    loop {
        let assign = match &fixed {
            Some(_) => match fixed_once.take() {
                Some(a) => a,
                None => break,
            },
            None => match enumerator.next(if cfg.pruning { &bad } else { &no_bad }) {
                Some(a) => a,
                None => break,
            },
        };
        verdict.stats.correspondences_tried += 1;
        let corr = to_correspondence(&s, &assign, label);
        let values = label_values(&s.features, label, &corr)?;
        ef.uncondition();
        let mut failed = None;
        for (gi, group) in s.sorted.groups.iter().enumerate() {
            let (outcome, encoding, branches) = query_step(&ef, group, &values, &s.vmap, &cfg.solver)?;
            calls += 1;
            verdict.stats.smt_calls += 1;
            verdict.stats.solver_branches += branches;
            for a in encoding.anomalies {
                if !verdict.anomalies.contains(&a) {
                    verdict.anomalies.push(a);
                }
            }
            if let Some(dir) = &cfg.emit_smtlib {
                std::fs::create_dir_all(dir)?;
                let name = format!(
                    "{}_{:016x}_{calls:05}.smt2",
                    label.scene_id.replace(['/', '\\'], "_"),
                    fingerprint(&label.to_json())
                );
                std::fs::write(dir.join(name), to_smtlib(&encoding.formula, &encoding.vars))?;
            }
            match outcome {
                StepOutcome::Sat => {
                    for m in &group.members {
                        if let Some(v) = values.get(m) {
                            ef.condition(m.clone(), *v);
                        }
                    }
                }
                StepOutcome::Unsat => {
                    // prefix up to the latest object of the failing group
                    let depth = group
                        .objects()
                        .iter()
                        .filter_map(|o| s.order.iter().position(|x| x == o))
                        .max()
                        .map_or(0, |i| i + 1);
                    failed = Some((gi, "unsat".to_string()));
                    if fixed.is_none() {
                        if depth == 0 {
                            // fails whatever the correspondence
                            enumerator.abandon(verdict.stats.correspondences_tried);
                        } else {
                            bad.insert(assign[..depth].to_vec());
                        }
                    }
                    break;
                }
                StepOutcome::Undecided(why) => {
                    verdict.stats.undecided += 1;
                    verdict.anomalies.push(format!(
                        "{why} on group {gi} under {}",
                        show_corr(&corr)
                    ));
                    failed = Some((gi, why));
                    break;
                }
            }
        }
        if let Some((gi, why)) = failed {
            if cfg.explain {
                let members: Vec<String> = s.sorted.groups[gi].members.iter().map(ToString::to_string).collect();
                verdict
                    .explain
                    .push(format!("{}: group [{}] {why}", show_corr(&corr), members.join(", ")));
            }
            continue;
        }
        if check_requirements(&ef, map)? {
            if cfg.explain {
                verdict.explain.push(format!("{}: all groups and requirements hold", show_corr(&corr)));
            }
            verdict.matches = true;
            verdict.correspondence = Some(corr);
            break;
        } else if cfg.explain {
            verdict.explain.push(format!("{}: a requirement fails", show_corr(&corr)));
        }
    }
    verdict.stats.correspondences_pruned = enumerator.pruned();
    verdict.stats.wall_time = start.elapsed();
    Ok(verdict)
}

/// One formula for a fixed correspondence: every feature tree, every label
/// equality and the requirements (evaluated on the label values).
pub fn encode_monolithic(
    program: &Program,
    map: &RoadMap,
    label: &Label,
    corr: &Correspondence,
    cfg: &QueryConfig,
) -> Result<Encoding, QueryError> {
    let s = setup(program, map, label, cfg)?;
    let values = label_values(&s.features, label, corr)?;
    let mut ef = program.forest.clone();
    ef.uncondition();
    let mut enc = Encoder::new(&ef, &s.vmap);
    for k in s.sorted.features() {
        if let Some(v) = values.get(k) {
            enc.require_value(k, *v, k.field == Field::Heading)?;
        }
    }
    let mut conditioned = ef.clone();
    for (k, v) in &values {
        conditioned.condition(k.clone(), *v);
    }
    let req = check_requirements(&conditioned, map)?;
    enc.assert(if req {
        crate::constraints::Formula::True
    } else {
        crate::constraints::Formula::False
    });
    let mut e = enc.finish();
    e.anomalies.splice(0..0, s.anomalies);
    Ok(e)
}

/// Solver verdict of the monolithic encoding.
pub fn matches_monolithic(
    program: &Program,
    map: &RoadMap,
    label: &Label,
    corr: &Correspondence,
    cfg: &QueryConfig,
) -> Result<bool, QueryError> {
    let e = encode_monolithic(program, map, label, corr, cfg)?;
    match solve(&e.formula, &e.vars, &cfg.solver) {
        Ok(r) => Ok(r.verdict == Verdict::DeltaSat),
        Err(e) => Err(QueryError::Solver(e)),
    }
}
