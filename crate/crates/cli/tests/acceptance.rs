//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL ...` line.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scenario_query::constraints::{
    disc_contains, left_of_line, line_seg, region_contains, sector_contains, triangle_contains, Formula, TVec, Term,
    TermNode, VarRole, VarTable,
};
use scenario_query::engine::{
    matches, matches_monolithic, Correspondence, CorrespondenceMode, Label, LabelObject, Program, QueryConfig,
};
use scenario_query::geomap::synthetic::town;
use scenario_query::geomap::{triangulate, Point2, RoadMap, Triangle};
use scenario_query::sampler::{perturb, sample_indexed, PerturbKind, SampleConfig, SampleError};
use scenario_query::solver::{solve, SolverConfig, Verdict};

const DELTA: f64 = 0.001;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn source(name: &str) -> String {
    std::fs::read_to_string(data(&format!("programs/{name}.scenic"))).unwrap()
}

fn program(name: &str, params: &[(&str, f64)]) -> Program {
    let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    Program::from_source(&source(name), &p).unwrap()
}

struct Case {
    name: String,
    program: Program,
    cfg: QueryConfig,
}

/// The programs under test with the visible distance each needs: chains of
/// six cars reach past 50 m.
fn cases() -> Vec<Case> {
    let mut out = Vec::new();
    let base = |vd: f64| QueryConfig {
        visible_distance: vd,
        solver: SolverConfig {
            delta: DELTA,
            ..SolverConfig::default()
        },
        ..QueryConfig::default()
    };
    out.push(Case { name: "car_ahead".into(), program: program("car_ahead", &[]), cfg: base(50.0) });
    out.push(Case { name: "parked_pair".into(), program: program("parked_pair", &[]), cfg: base(50.0) });
    for n in [2.0, 4.0, 6.0] {
        out.push(Case {
            name: format!("traffic_chain[numCars={n}]"),
            program: program("traffic_chain", &[("numCars", n)]),
            cfg: base(200.0),
        });
        out.push(Case {
            name: format!("pedestrian_line[numPeds={n}]"),
            program: program("pedestrian_line", &[("numPeds", n)]),
            cfg: base(200.0),
        });
    }
    out
}

fn report(n: u32, ok: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn applicable_kinds(p: &Program, map: &RoadMap, l: &Label) -> Vec<PerturbKind> {
    PerturbKind::ALL
        .into_iter()
        .filter(|&k| !matches!(perturb(p, map, l, k, &SampleConfig::default()), Err(SampleError::NotApplicable { .. })))
        .collect()
}

fn perturbed(p: &Program, map: &RoadMap, l: &Label, i: usize, seed: u64) -> (PerturbKind, Label) {
    let kinds = applicable_kinds(p, map, l);
    let k = kinds[i % kinds.len()];
    let cfg = SampleConfig { seed, ..SampleConfig::default() };
    (k, perturb(p, map, l, k, &cfg).unwrap())
}

#[test]
fn criterion_1_sampled_labels_match() {
    let map = town();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut total = 0;
    for c in cases() {
        let scfg = SampleConfig { seed: 101, ..SampleConfig::default() };
        for i in 0..100 {
            let l = sample_indexed(&c.program, &map, &scfg, i).unwrap();
            total += 1;
            let v = matches(&c.program, &map, &l, &c.cfg).unwrap();
            if !v.matches {
                failures.push(format!("{} {}", c.name, l.to_json()));
            }
        }
    }
    let ok = failures.is_empty();
    report(
        1,
        ok,
        &format!("{} of {total} sampled labels rejected in {:.1}s", failures.len(), start.elapsed().as_secs_f64()),
    );
    assert!(ok, "tolerance escapes: {failures:#?}");
}

#[test]
fn criterion_2_perturbed_labels_fail() {
    let map = town();
    let mut accepts = Vec::new();
    let mut per_kind: BTreeMap<PerturbKind, usize> = BTreeMap::new();
    let mut total = 0;
    for c in cases() {
        let scfg = SampleConfig { seed: 202, ..SampleConfig::default() };
        for i in 0..100 {
            let l = sample_indexed(&c.program, &map, &scfg, i as u64).unwrap();
            let (k, bad) = perturbed(&c.program, &map, &l, i, 202);
            *per_kind.entry(k).or_default() += 1;
            total += 1;
            let v = matches(&c.program, &map, &bad, &c.cfg).unwrap();
            if v.matches {
                accepts.push(format!("{} {k}: {}", c.name, bad.to_json()));
            }
        }
    }
    let ok = accepts.is_empty();
    report(2, ok, &format!("{} false accepts among {total} perturbed labels {per_kind:?}", accepts.len()));
    assert!(ok, "false accepts: {accepts:#?}");
}

fn identity(l: &Label) -> Correspondence {
    l.objects.iter().map(|o| (o.id.clone(), o.id.clone())).collect()
}

#[test]
fn criterion_3_monolithic_equals_incremental() {
    let map = town();
    let mut disagreements = Vec::new();
    let mut checked = 0;
    let mut yes = 0;
    for c in cases().into_iter().filter(|c| c.name == "car_ahead" || c.name == "parked_pair") {
        let scfg = SampleConfig { seed: 303, ..SampleConfig::default() };
        for i in 0..40 {
            let mut l = sample_indexed(&c.program, &map, &scfg, i as u64).unwrap();
            if i >= 20 {
                l = perturbed(&c.program, &map, &l, i, 303).1;
            }
            let corr = identity(&l);
            let cfg = QueryConfig { mode: CorrespondenceMode::Fixed(corr.clone()), ..c.cfg.clone() };
            let inc = matches(&c.program, &map, &l, &cfg).unwrap().matches;
            let mono = matches_monolithic(&c.program, &map, &l, &corr, &c.cfg).unwrap();
            checked += 1;
            yes += inc as usize;
            if inc != mono {
                disagreements.push(format!("{} incremental={inc} monolithic={mono}: {}", c.name, l.to_json()));
            }
        }
    }
    let ok = disagreements.is_empty();
    report(3, ok, &format!("{} disagreements over {checked} instances ({yes} matching)", disagreements.len()));
    assert!(ok, "{disagreements:#?}");
}

/// A sampled three-car chain with one or two extra cars on the road nearby,
/// in shuffled order; every other instance has its chain broken first.
fn crowded_label(p: &Program, map: &RoadMap, i: u64, rng: &mut ChaCha8Rng) -> Label {
    let scfg = SampleConfig { seed: 404, ..SampleConfig::default() };
    let mut l = sample_indexed(p, map, &scfg, i).unwrap();
    if i % 2 == 1 {
        l = perturb(p, map, &l, PerturbKind::DistanceOutOfRange, &scfg).unwrap();
    }
    let ego = l.ego().unwrap().position;
    for j in 0..rng.gen_range(1..=2) {
        l.objects.push(LabelObject {
            id: format!("extra{j}"),
            class: "car".into(),
            position: Point2::new(rng.gen_range(-9.0..9.0), ego.y + rng.gen_range(-20.0..60.0)),
            heading: Some(rng.gen_range(-0.1..0.1)),
            extras: BTreeMap::new(),
            ego: false,
        });
    }
    l.objects.shuffle(rng);
    l
}

#[test]
fn criterion_4_pruning_is_transparent() {
    let map = town();
    let p = program("traffic_chain", &[("numCars", 3.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let on = QueryConfig { visible_distance: 200.0, ..QueryConfig::default() };
    let off = QueryConfig { pruning: false, ..on.clone() };
    let (mut differ, mut more_calls, mut strict) = (Vec::new(), 0, 0);
    let (mut calls_on, mut calls_off) = (0, 0);
    for i in 0..50 {
        let l = crowded_label(&p, &map, i, &mut rng);
        let a = matches(&p, &map, &l, &on).unwrap();
        let b = matches(&p, &map, &l, &off).unwrap();
        if (a.matches, &a.correspondence) != (b.matches, &b.correspondence) {
            differ.push(l.to_json());
        }
        if a.stats.smt_calls > b.stats.smt_calls {
            more_calls += 1;
        }
        if a.stats.smt_calls < b.stats.smt_calls {
            strict += 1;
        }
        calls_on += a.stats.smt_calls;
        calls_off += b.stats.smt_calls;
    }
    let ok = differ.is_empty() && more_calls == 0 && strict > 0;
    report(
        4,
        ok,
        &format!(
            "{} verdict differences, {more_calls} instances with more calls, {strict} strictly cheaper; calls {calls_on} vs {calls_off}",
            differ.len()
        ),
    );
    assert!(ok, "{differ:#?}");
}

// ---- criterion 5: an independent grid and interval oracle ----

#[derive(Clone, Copy, Debug)]
struct Iv {
    lo: f64,
    hi: f64,
}

impl Iv {
    fn widen(self) -> Iv {
        let e = |x: f64| 1e-12 * (1.0 + x.abs());
        Iv { lo: self.lo - e(self.lo), hi: self.hi + e(self.hi) }
    }
}

fn iv_eval(t: &Term, b: &[Iv]) -> Iv {
    let r = match t.node() {
        TermNode::Var(i) => b[*i],
        TermNode::Const(c) => Iv { lo: *c, hi: *c },
        TermNode::Add(x, y) => {
            let (x, y) = (iv_eval(x, b), iv_eval(y, b));
            Iv { lo: x.lo + y.lo, hi: x.hi + y.hi }
        }
        TermNode::Mul(x, y) => {
            let (x, y) = (iv_eval(x, b), iv_eval(y, b));
            let ps = [x.lo * y.lo, x.lo * y.hi, x.hi * y.lo, x.hi * y.hi];
            Iv {
                lo: ps.iter().copied().fold(f64::INFINITY, f64::min),
                hi: ps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        }
        TermNode::Neg(x) => {
            let x = iv_eval(x, b);
            Iv { lo: -x.hi, hi: -x.lo }
        }
        TermNode::Sin(x) => {
            let x = iv_eval(x, b);
            if x.hi - x.lo >= TAU {
                Iv { lo: -1.0, hi: 1.0 }
            } else {
                let (mut lo, mut hi) = (x.lo.sin().min(x.hi.sin()), x.lo.sin().max(x.hi.sin()));
                // peaks at pi/2 + 2k pi, troughs at -pi/2 + 2k pi
                let hits = |c: f64| ((x.lo - c) / TAU).ceil() <= ((x.hi - c) / TAU).floor();
                if hits(PI / 2.0) {
                    hi = 1.0;
                }
                if hits(-PI / 2.0) {
                    lo = -1.0;
                }
                Iv { lo, hi }
            }
        }
        TermNode::Atan(x) => {
            let x = iv_eval(x, b);
            Iv { lo: x.lo.atan(), hi: x.hi.atan() }
        }
    };
    r.widen()
}

/// Whether `f` weakened by `slack` is certainly false on the box.
fn refuted(f: &Formula, b: &[Iv], slack: f64) -> bool {
    match f {
        Formula::True => false,
        Formula::False => true,
        Formula::Le(t) => iv_eval(t, b).lo > slack,
        Formula::Lt(t) => iv_eval(t, b).lo >= slack,
        Formula::And(xs) => xs.iter().any(|x| refuted(x, b, slack)),
        Formula::Or(xs) => xs.iter().all(|x| refuted(x, b, slack)),
    }
}

#[derive(Debug, PartialEq)]
enum Oracle {
    Sat,
    Unsat,
    Unknown,
}

/// Bisects the box down to cells of width `cell`, testing each cell's
/// corners and centre exactly and discarding cells interval evaluation
/// refutes.
fn oracle(f: &Formula, b: Vec<Iv>, slack: f64, cell: f64, budget: &mut u64) -> Oracle {
    let mut stack = vec![b];
    let mut unknown = false;
    while let Some(bx) = stack.pop() {
        if *budget == 0 {
            return Oracle::Unknown;
        }
        *budget -= 1;
        if refuted(f, &bx, slack) {
            continue;
        }
        let mid: Vec<f64> = bx.iter().map(|i| 0.5 * (i.lo + i.hi)).collect();
        if f.eval(&mid) {
            return Oracle::Sat;
        }
        let (w, k) = bx
            .iter()
            .enumerate()
            .map(|(k, i)| (i.hi - i.lo, k))
            .fold((0.0, 0), |a, x| if x.0 > a.0 { x } else { a });
        if w <= cell {
            let n = bx.len();
            for mask in 0..(1u32 << n) {
                let corner: Vec<f64> = (0..n).map(|d| if mask >> d & 1 == 1 { bx[d].hi } else { bx[d].lo }).collect();
                if f.eval(&corner) {
                    return Oracle::Sat;
                }
            }
            unknown = true;
            continue;
        }
        let (mut l, mut r) = (bx.clone(), bx);
        l[k].hi = mid[k];
        r[k].lo = mid[k];
        stack.push(r);
        stack.push(l);
    }
    if unknown {
        Oracle::Unknown
    } else {
        Oracle::Unsat
    }
}

fn random_term(rng: &mut ChaCha8Rng, vars: &[Term], depth: u32) -> Term {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    if leaf {
        return if rng.gen_bool(0.7) {
            vars[rng.gen_range(0..vars.len())].clone()
        } else {
            Term::c(rng.gen_range(-2.0..2.0))
        };
    }
    match rng.gen_range(0..5) {
        0 => random_term(rng, vars, depth - 1) + random_term(rng, vars, depth - 1),
        1 => random_term(rng, vars, depth - 1) * random_term(rng, vars, depth - 1),
        2 => -random_term(rng, vars, depth - 1),
        3 => Term::sin(random_term(rng, vars, depth - 1)),
        _ => Term::atan(random_term(rng, vars, depth - 1)),
    }
}

/// Random formula; `tight` pushes thresholds toward the edge of each
/// term's range so that unsatisfiable draws are common.
fn random_formula(rng: &mut ChaCha8Rng, vars: &[Term], k: usize, tight: bool) -> Formula {
    let whole = vec![Iv { lo: -2.0, hi: 2.0 }; k];
    let atoms: Vec<Formula> = (0..rng.gen_range(1..=3))
        .map(|_| {
            let t = random_term(rng, vars, 3);
            let c = if tight {
                let r = iv_eval(&t, &whole);
                r.lo.max(-50.0) - rng.gen_range(-0.5..1.0)
            } else {
                rng.gen_range(-1.0..1.0)
            };
            let t = t - c;
            if rng.gen_bool(0.5) {
                Formula::le0(t)
            } else {
                Formula::lt0(t)
            }
        })
        .collect();
    if tight || rng.gen_bool(0.5) {
        Formula::and(atoms)
    } else {
        Formula::or(atoms)
    }
}

#[test]
fn criterion_5_solver_agrees_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let cfg = SolverConfig { delta: DELTA, ..SolverConfig::default() };
    let (mut decisive, mut sat, mut unsat, mut disagree, mut unsat_escapes, mut trivial) = (0, 0, 0, Vec::new(), 0, 0);
    let mut generated = 0;
    while generated < 50 {
        let k = rng.gen_range(1..=3);
        let mut vars = VarTable::new();
        let ts: Vec<Term> = (0..k).map(|i| vars.fresh(&format!("x{i}"), VarRole::Aux, -2.0, 2.0)).collect();
        let f = random_formula(&mut rng, &ts, k, generated % 2 == 1);
        if matches!(f, Formula::True | Formula::False) {
            trivial += 1;
            continue;
        }
        generated += 1;
        let bx = vec![Iv { lo: -2.0, hi: 2.0 }; k];
        let Ok(r) = solve(&f, &vars, &cfg) else { continue };
        let mut budget = 2_000_000;
        let o = oracle(&f, bx.clone(), DELTA, DELTA / 10.0, &mut budget);
        if o != Oracle::Unknown {
            decisive += 1;
            let agrees = match o {
                Oracle::Sat => r.verdict == Verdict::DeltaSat,
                Oracle::Unsat => r.verdict == Verdict::Unsat,
                Oracle::Unknown => true,
            };
            if o == Oracle::Sat {
                sat += 1;
            } else {
                unsat += 1;
            }
            if !agrees {
                disagree.push(format!("{f:?}: oracle {o:?}, solver {:?}", r.verdict));
            }
        }
        if r.verdict == Verdict::Unsat {
            let mut budget = 2_000_000;
            if oracle(&f, bx, 0.0, DELTA / 10.0, &mut budget) == Oracle::Sat {
                unsat_escapes += 1;
            }
        }
    }
    let ok = disagree.is_empty() && unsat_escapes == 0;
    report(
        5,
        ok,
        &format!(
            "{} disagreements on {decisive} decisive formulas ({sat} sat, {unsat} unsat) of 50; {unsat_escapes} unsat verdicts with grid witnesses; {trivial} constant formulas redrawn",
            disagree.len()
        ),
    );
    assert!(ok, "{disagree:#?}");
}

// ---- criterion 6: geometry primitives against direct numeric tests ----

const BAND: f64 = 1e-5;

/// Moves `p` to a random spot between `BAND` and 1 cm from the nearest point
/// of segment `a b`, on either side, so boundaries get exercised.
fn near_segment(rng: &mut ChaCha8Rng, a: Point2, b: Point2) -> Point2 {
    let s = rng.gen_range(0.0..1.0);
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = (dx * dx + dy * dy).sqrt();
    let off = rng.gen_range(2.0 * BAND..1e-2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    Point2::new(a.x + s * dx - off * dy / len, a.y + s * dy + off * dx / len)
}

fn seg_dist(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
    ((p.x - a.x - t * dx).powi(2) + (p.y - a.y - t * dy).powi(2)).sqrt()
}

fn cross(a: Point2, b: Point2, p: Point2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

fn in_triangle(t: &[Point2; 3], p: Point2) -> bool {
    let s = [cross(t[0], t[1], p), cross(t[1], t[2], p), cross(t[2], t[0], p)];
    s.iter().all(|&x| x >= 0.0) || s.iter().all(|&x| x <= 0.0)
}

fn ray_cast(ring: &[Point2], p: Point2) -> bool {
    let mut inside = false;
    for i in 0..ring.len() {
        let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x) {
            inside = !inside;
        }
    }
    inside
}

fn pt(rng: &mut ChaCha8Rng, r: f64) -> Point2 {
    Point2::new(rng.gen_range(-r..r), rng.gen_range(-r..r))
}

/// Point held in two variables pinned to it, so encodings cannot fold it.
fn pinned(p: Point2) -> (VarTable, TVec) {
    let mut vars = VarTable::new();
    let x = vars.fresh("px", VarRole::Aux, p.x, p.x);
    let y = vars.fresh("py", VarRole::Aux, p.y, p.y);
    (vars, TVec::new(x, y))
}

fn free_point() -> TVec {
    TVec::new(Term::var(0), Term::var(1))
}

fn decide(f: &Formula, vars: &VarTable) -> bool {
    let cfg = SolverConfig { delta: 1e-7, ..SolverConfig::default() };
    solve(f, vars, &cfg).unwrap().verdict == Verdict::DeltaSat
}

struct Tally {
    name: &'static str,
    compared: usize,
    skipped: usize,
    wrong: Vec<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, compared: 0, skipped: 0, wrong: Vec::new() }
    }

    fn record(&mut self, near_boundary: bool, got: bool, want: bool, what: impl FnOnce() -> String) {
        if near_boundary {
            self.skipped += 1;
        } else {
            self.compared += 1;
            if got != want {
                self.wrong.push(what());
            }
        }
    }
}

#[test]
fn criterion_6_geometry_matches_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut tallies = Vec::new();

    let mut t = Tally::new("triangle");
    while t.compared < 1000 {
        let v = [pt(&mut rng, 10.0), pt(&mut rng, 10.0), pt(&mut rng, 10.0)];
        if cross(v[0], v[1], v[2]).abs() < 1.0 {
            continue;
        }
        let tri = Triangle::new(v[0], v[1], v[2]);
        let e = rng.gen_range(0..3);
        let p = if rng.gen_bool(0.5) { near_segment(&mut rng, v[e], v[(e + 1) % 3]) } else { pt(&mut rng, 11.0) };
        let near = (0..3).any(|i| seg_dist(p, v[i], v[(i + 1) % 3]) < BAND);
        let (mut vars, q) = pinned(p);
        let f = triangle_contains(&tri, &q, &mut vars);
        let got = decide(&f, &vars);
        t.record(near, got, in_triangle(&v, p), || format!("{v:?} {p:?}"));
    }
    tallies.push(t);

    let mut t = Tally::new("disc");
    while t.compared < 1000 {
        let (c, r) = (pt(&mut rng, 5.0), rng.gen_range(0.1..5.0));
        let p = if rng.gen_bool(0.5) {
            let (ang, rad) = (rng.gen_range(0.0..TAU), r + rng.gen_range(-1e-2..1e-2));
            Point2::new(c.x + rad * ang.cos(), c.y + rad * ang.sin())
        } else {
            pt(&mut rng, 10.0)
        };
        let d = ((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt();
        let f = disc_contains(&TVec::c(c), &Term::c(r), &free_point());
        t.record((d - r).abs() < BAND, f.eval(&[p.x, p.y]), d <= r, || format!("{c:?} {r} {p:?}"));
    }
    tallies.push(t);

    let mut t = Tally::new("sector");
    while t.compared < 1000 {
        let (c, r, h, a) = (pt(&mut rng, 5.0), rng.gen_range(0.5..8.0), rng.gen_range(-PI..PI), rng.gen_range(0.2..TAU - 0.2));
        let p = if rng.gen_bool(0.5) {
            // close to one of the straight edges
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let ang = h + side * a / 2.0 + rng.gen_range(-1e-3..1e-3);
            let rad = rng.gen_range(0.1..r);
            Point2::new(c.x - rad * ang.sin(), c.y + rad * ang.cos())
        } else {
            pt(&mut rng, 10.0)
        };
        let (dx, dy) = (p.x - c.x, p.y - c.y);
        let d = (dx * dx + dy * dy).sqrt();
        // bearing with 0 along +y, counterclockwise
        let bearing = (-dx).atan2(dy);
        let mut off = (bearing - h).rem_euclid(TAU);
        if off > PI {
            off -= TAU;
        }
        let want = d <= r && off.abs() <= a / 2.0;
        let edge = (off.abs() - a / 2.0).abs() * d;
        let near = (d - r).abs() < BAND || d < BAND || edge < BAND;
        let f = sector_contains(&TVec::c(c), &Term::c(r), &Term::c(h), a, &free_point());
        t.record(near, f.eval(&[p.x, p.y]), want, || format!("{c:?} r={r} h={h} a={a} {p:?}"));
    }
    tallies.push(t);

    let mut t = Tally::new("leftOfLine");
    while t.compared < 1000 {
        let (a, b) = (pt(&mut rng, 10.0), pt(&mut rng, 10.0));
        let p = if rng.gen_bool(0.5) && a != b { near_segment(&mut rng, a, b) } else { pt(&mut rng, 10.0) };
        let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
        if len < 0.5 {
            continue;
        }
        let side = cross(a, b, p) / len;
        let f = left_of_line(&TVec::c(a), &TVec::c(b), &free_point());
        t.record(side.abs() < BAND, f.eval(&[p.x, p.y]), side > 0.0, || format!("{a:?} {b:?} {p:?}"));
    }
    tallies.push(t);

    let mut t = Tally::new("lineSeg");
    while t.compared < 1000 {
        let (a, b) = (pt(&mut rng, 10.0), pt(&mut rng, 10.0));
        let s: f64 = rng.gen_range(-0.2..1.2);
        let on = Point2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y));
        let p = if rng.gen_bool(0.5) {
            on
        } else {
            Point2::new(on.x + rng.gen_range(-0.5..0.5), on.y + rng.gen_range(-0.5..0.5))
        };
        let d = seg_dist(p, a, b);
        let exact = p == on && (0.0..=1.0).contains(&s);
        let f = line_seg(a, b, &free_point());
        t.record(!exact && d < BAND, f.eval(&[p.x, p.y]), exact, || format!("{a:?} {b:?} {p:?}"));
    }
    tallies.push(t);

    let mut t = Tally::new("regionContains");
    while t.compared < 1000 {
        let n = rng.gen_range(5..10);
        let c = pt(&mut rng, 3.0);
        let ring: Vec<Point2> = (0..n)
            .map(|i| {
                let ang = TAU * (i as f64 + rng.gen_range(0.0..0.8)) / n as f64;
                let rad = rng.gen_range(2.0..8.0);
                Point2::new(c.x + rad * ang.cos(), c.y + rad * ang.sin())
            })
            .collect();
        let Ok(tris) = triangulate(&ring) else { continue };
        for _ in 0..20 {
            let e = rng.gen_range(0..n);
            let p = if rng.gen_bool(0.5) { near_segment(&mut rng, ring[e], ring[(e + 1) % n]) } else { pt(&mut rng, 11.0) };
            let near = (0..n).any(|i| seg_dist(p, ring[i], ring[(i + 1) % n]) < BAND);
            let (mut vars, q) = pinned(p);
            let f = region_contains("poly", &tris, &q, &mut vars).unwrap();
            let got = decide(&f, &vars);
            t.record(near, got, ray_cast(&ring, p), || format!("{ring:?} {p:?}"));
        }
    }
    tallies.push(t);

    let ok = tallies.iter().all(|t| t.wrong.is_empty());
    let summary: Vec<String> = tallies
        .iter()
        .map(|t| format!("{} {}/{} ({} near boundary)", t.name, t.compared - t.wrong.len(), t.compared, t.skipped))
        .collect();
    report(6, ok, &summary.join(", "));
    for t in &tallies {
        assert!(t.wrong.is_empty(), "{}: {:#?}", t.name, &t.wrong[..t.wrong.len().min(5)]);
    }
}

#[test]
fn criterion_7_scaling_shape() {
    let map = town();
    let cfg = QueryConfig { visible_distance: 200.0, ..QueryConfig::default() };
    let plan = scenq::BenchPlan {
        source: source("traffic_chain"),
        params: BTreeMap::new(),
        scale_param: "numCars".into(),
        agents: vec![2, 3, 4, 5, 6],
        labels_per_count: 10,
        seed: 0,
        query: cfg,
    };
    let rows = scenq::bench(&plan, &map).unwrap();
    print!("{}", scenq::bench_csv(&rows));
    let known = |n: usize| rows.iter().find(|r| r.agents == n).unwrap().known_mean_s;
    let unknown = |n: usize| rows.iter().find(|r| r.agents == n).unwrap().unknown_mean_s;
    let growth: Vec<f64> = [2, 3, 4].iter().map(|&n| known(n + 2) / known(n)).collect();
    let ratio = unknown(6) / known(6);
    let ok = growth.iter().all(|&g| g < 3.0) && ratio >= 5.0;
    report(
        7,
        ok,
        &format!("known growth per added pair {growth:.2?} (< 3), unknown/known at 6 agents {ratio:.2} (>= 5)"),
    );
    assert!(ok);
}

#[test]
fn criterion_8_query_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let map = town();
    let p = program("car_ahead", &[]);
    let scfg = SampleConfig { seed: 808, ..SampleConfig::default() };
    let mut lines = String::new();
    for i in 0..20 {
        let l = sample_indexed(&p, &map, &scfg, i).unwrap();
        let l = if i % 2 == 0 { l } else { perturbed(&p, &map, &l, i as usize, 808).1 };
        lines.push_str(&l.to_json());
        lines.push('\n');
    }
    let labels = dir.path().join("labels.jsonl");
    std::fs::write(&labels, lines).unwrap();
    let run = |out: &str| {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_scenq"))
            .args(["query", "--seed", "8", "--jobs", "1", "--program"])
            .arg(data("programs/car_ahead.scenic"))
            .arg("--map")
            .arg(data("maps/town.json"))
            .arg("--labels")
            .arg(&labels)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let (a, b) = (run("a.jsonl"), run("b.jsonl"));
    let ok = a == b && !a.is_empty();
    report(8, ok, &format!("two runs wrote {} and {} bytes, identical: {}", a.len(), b.len(), a == b));
    assert!(ok);
}
