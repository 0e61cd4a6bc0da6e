//! Forward rejection sampling of scenario programs, plus controlled
//! perturbations that turn sampled labels into non-matching ones.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Label, LabelObject, Program};
use crate::eval::{wrap_angle, Draws, EvalError, Evaluator};
use crate::dsl::CmpOp;
use crate::forest::{ExpressionForest, Node, SlotKey, Value};
use crate::geomap::{Point2, RegionSel, RoadMap};

pub const DEFAULT_MAX_REJECTIONS: u32 = 10_000;

/// Translation applied by `DistanceOutOfRange`, in meters.
pub const DISPLACEMENT: f64 = 10.0;
/// Minimum distance between a region-exit ego and every region.
pub const EXIT_CLEARANCE: f64 = 1.0;
/// Minimum slack by which a negated requirement must fail.
pub const REQUIRE_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub seed: u64,
    pub max_rejections: u32,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_rejections: DEFAULT_MAX_REJECTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("no scene satisfied the requirements after {0} rejections")]
    RejectionBudgetExceeded(u32),
    #[error("max_rejections must be at least 1")]
    BadConfig,
    #[error(transparent)]
    Eval(EvalError),
    #[error("perturbation {kind} does not apply: {why}")]
    NotApplicable { kind: PerturbKind, why: String },
}

/// `Draws` backed by a seeded ChaCha stream.
#[derive(Debug, Clone)]
pub struct RngDraws(pub ChaCha8Rng);

impl RngDraws {
    /// Independent stream `index` of `seed`.
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self(rng)
    }
}

impl Draws for RngDraws {
    fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    fn std_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }
}

enum Accept {
    Requirements,
    /// Some requirement fails by at least `REQUIRE_MARGIN`.
    Violation,
}

fn draw_scene(
    ef: &ExpressionForest,
    map: &RoadMap,
    draws: &mut RngDraws,
    max_rejections: u32,
    accept: Accept,
) -> Result<BTreeMap<SlotKey, Value>, SampleError> {
    if max_rejections == 0 {
        return Err(SampleError::BadConfig);
    }
    for _ in 0..=max_rejections {
        let mut ev = Evaluator::new(ef, map);
        match ev.eval_all(draws) {
            Ok(()) => {}
            Err(EvalError::NoFlow(_) | EvalError::EmptyRegion(_)) => continue,
            Err(e) => return Err(SampleError::Eval(e)),
        }
        let ok = match accept {
            Accept::Requirements => all_hold(&mut ev, &ef.requirements)?,
            Accept::Violation => {
                let mut any = false;
                for r in &ef.requirements {
                    if violation_margin(&mut ev, r).map_err(SampleError::Eval)? >= REQUIRE_MARGIN {
                        any = true;
                        break;
                    }
                }
                any
            }
        };
        if ok {
            return Ok(ev.into_values());
        }
    }
    Err(SampleError::RejectionBudgetExceeded(max_rejections))
}

fn all_hold(ev: &mut Evaluator<'_>, reqs: &[Node]) -> Result<bool, SampleError> {
    for r in reqs {
        if !ev.check(r).map_err(SampleError::Eval)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// How far a condition is from holding: 0 when it holds, otherwise the
/// smallest gap of a violated comparison (infinite for non-metric atoms).
fn violation_margin(ev: &mut Evaluator<'_>, n: &Node) -> Result<f64, EvalError> {
    if ev.check(n)? {
        return Ok(0.0);
    }
    Ok(match n {
        Node::Cmp(op, a, b) if !matches!(op, CmpOp::Eq | CmpOp::Ne) => {
            let (Value::Scalar(x), Value::Scalar(y)) = (ev.node(a, &mut None)?, ev.node(b, &mut None)?) else {
                return Ok(f64::INFINITY);
            };
            (x - y).abs()
        }
        // every conjunct that fails gives a witness
        Node::And(a, b) => violation_margin(ev, a)?.max(violation_margin(ev, b)?),
        Node::Or(a, b) => violation_margin(ev, a)?.min(violation_margin(ev, b)?),
        _ => f64::INFINITY,
    })
}

fn to_label(program: &Program, values: &BTreeMap<SlotKey, Value>, scene_id: String) -> Label {
    let mut objects: Vec<LabelObject> = Vec::new();
    for e in program.forest.scene_objects() {
        let pos = match values.get(&SlotKey::position(&e.name)) {
            Some(Value::Vector(p)) => *p,
            _ => continue,
        };
        let heading = match values.get(&SlotKey::heading(&e.name)) {
            Some(Value::Scalar(h)) => Some(wrap_angle(*h)),
            _ => None,
        };
        let extras = e
            .extras
            .iter()
            .filter_map(|x| match values.get(&SlotKey::new(&e.name, crate::forest::Field::Extra(x.clone()))) {
                Some(Value::Scalar(v)) => Some((x.clone(), *v)),
                _ => None,
            })
            .collect();
        let obj = LabelObject {
            id: e.name.clone(),
            class: e.class.map(|c| c.tag()).unwrap_or("object").to_string(),
            position: pos,
            heading,
            extras,
            ego: e.name == "ego",
        };
        if obj.ego {
            objects.insert(0, obj);
        } else {
            objects.push(obj);
        }
    }
    Label { scene_id, objects }
}

/// Draws one scene from the program and renders it as a label whose object
/// ids are the program's object names.
pub fn sample(program: &Program, map: &RoadMap, cfg: &SampleConfig) -> Result<Label, SampleError> {
    sample_indexed(program, map, cfg, 0)
}

/// The `index`-th sample of a seeded batch; batches are reproducible
/// whatever order their members are drawn in.
pub fn sample_indexed(program: &Program, map: &RoadMap, cfg: &SampleConfig, index: u64) -> Result<Label, SampleError> {
    let mut draws = RngDraws::new(cfg.seed, index);
    let values = draw_scene(&program.forest, map, &mut draws, cfg.max_rejections, Accept::Requirements)?;
    Ok(to_label(program, &values, format!("sample-{index:05}")))
}

pub fn sample_n(program: &Program, map: &RoadMap, n: usize, cfg: &SampleConfig) -> Result<Vec<Label>, SampleError> {
    (0..n as u64).map(|i| sample_indexed(program, map, cfg, i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbKind {
    DistanceOutOfRange,
    RegionExit,
    HeadingFlip,
    RequireViolation,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 4] = [
        PerturbKind::DistanceOutOfRange,
        PerturbKind::RegionExit,
        PerturbKind::HeadingFlip,
        PerturbKind::RequireViolation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbKind::DistanceOutOfRange => "distance-out-of-range",
            PerturbKind::RegionExit => "region-exit",
            PerturbKind::HeadingFlip => "heading-flip",
            PerturbKind::RequireViolation => "require-violation",
        }
    }
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PerturbKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown perturbation `{s}`"))
    }
}

fn heading_is_free(tree: Option<&Node>) -> bool {
    match tree {
        Some(Node::Range(a, b)) => match (a.as_ref(), b.as_ref()) {
            (Node::Num(lo), Node::Num(hi)) => hi - lo >= TAU - 1e-9,
            _ => false,
        },
        Some(_) => false,
        None => true,
    }
}

/// Moves one feature of a sampled label outside the set the program allows
/// for it.
///
/// * `DistanceOutOfRange` pushes the last non-ego object `DISPLACEMENT`
///   meters straight away from its nearest labelled neighbour.
/// * `RegionExit` slides ego sideways until it is `EXIT_CLEARANCE` away from
///   every region.
/// * `HeadingFlip` turns the last object with a constrained heading by pi.
/// * `RequireViolation` redraws the scene until a requirement fails by
///   `REQUIRE_MARGIN`.
pub fn perturb(
    program: &Program,
    map: &RoadMap,
    label: &Label,
    kind: PerturbKind,
    cfg: &SampleConfig,
) -> Result<Label, SampleError> {
    let na = |why: &str| SampleError::NotApplicable {
        kind,
        why: why.to_string(),
    };
    let mut out = label.clone();
    match kind {
        PerturbKind::DistanceOutOfRange => {
            let i = out.objects.iter().rposition(|o| !o.ego).ok_or_else(|| na("no non-ego object"))?;
            let p = out.objects[i].position;
            let anchor = out
                .objects
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, o)| o.position)
                .min_by(|a, b| a.dist(p).total_cmp(&b.dist(p)))
                .ok_or_else(|| na("no other object"))?;
            let d = p.sub(anchor);
            let dir = if d.norm() > 1e-9 { d.scale(1.0 / d.norm()) } else { Point2::new(0.0, 1.0) };
            out.objects[i].position = p.add(dir.scale(DISPLACEMENT));
        }
        PerturbKind::RegionExit => {
            let i = out.objects.iter().position(|o| o.ego).ok_or_else(|| na("no ego"))?;
            let o = &out.objects[i];
            let right = Point2::new(1.0, 0.0).rotate(o.heading.unwrap_or(0.0));
            let start = o.position;
            let mut found = None;
            'search: for k in 1..=4000 {
                for side in [1.0, -1.0] {
                    let q = start.add(right.scale(side * 0.5 * k as f64));
                    if map.distance_to(&RegionSel::All, q) >= EXIT_CLEARANCE && !map.contains(&RegionSel::All, q) {
                        found = Some(q);
                        break 'search;
                    }
                }
            }
            out.objects[i].position = found.ok_or_else(|| na("no point outside the map nearby"))?;
        }
        PerturbKind::HeadingFlip => {
            let i = out
                .objects
                .iter()
                .rposition(|o| o.heading.is_some() && !heading_is_free(program.forest.tree(&SlotKey::heading(&o.id))))
                .ok_or_else(|| na("no object with a constrained, labelled heading"))?;
            let h = out.objects[i].heading.expect("checked");
            out.objects[i].heading = Some(wrap_angle(h + PI));
        }
        PerturbKind::RequireViolation => {
            if program.forest.requirements.is_empty() {
                return Err(na("program has no requirements"));
            }
            // a stream disjoint from the positive samples of the same seed
            let mut draws = RngDraws::new(cfg.seed ^ 0x5eed_f00d, label_stream(label));
            let values = draw_scene(&program.forest, map, &mut draws, cfg.max_rejections, Accept::Violation)?;
            out = to_label(program, &values, label.scene_id.clone());
        }
    }
    Ok(out)
}

fn label_stream(label: &Label) -> u64 {
    label
        .scene_id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomap::synthetic::town;

    fn prog(src: &str) -> Program {
        Program::from_source(src, &BTreeMap::new()).unwrap()
    }

    const CAR_AHEAD: &str = "ego = Car on road\notherCar = Car ahead of ego by Range(4, 10)\n\
                        require (distance from otherCar to intersection) > 4\n";

    #[test]
    fn deterministic_program_gives_fixed_label() {
        let l = sample(&prog("ego = Car at (1, 2), facing 0.5\n"), &town(), &SampleConfig::default()).unwrap();
        assert_eq!(l.objects.len(), 1);
        let o = &l.objects[0];
        assert!(o.ego);
        assert_eq!(o.position, Point2::new(1.0, 2.0));
        assert_eq!(o.heading, Some(0.5));
    }

    #[test]
    fn same_seed_same_label() {
        let p = prog(CAR_AHEAD);
        let cfg = SampleConfig { seed: 7, ..SampleConfig::default() };
        assert_eq!(sample(&p, &town(), &cfg).unwrap(), sample(&p, &town(), &cfg).unwrap());
        let other = SampleConfig { seed: 8, ..cfg };
        assert_ne!(sample(&p, &town(), &cfg).unwrap(), sample(&p, &town(), &other).unwrap());
    }

    #[test]
    fn ahead_of_distance_is_within_range() {
        let p = prog(CAR_AHEAD);
        let map = town();
        for l in sample_n(&p, &map, 30, &SampleConfig::default()).unwrap() {
            let (e, c) = (&l.objects[0], &l.objects[1]);
            let gap = c.position.dist(e.position);
            let along = c.position.sub(e.position).dot(Point2::new(0.0, 1.0).rotate(e.heading.unwrap()));
            assert!((4.0 - 1e-9..=10.0 + 1e-9).contains(&gap), "{gap}");
            assert!((along - gap).abs() < 1e-9);
            assert!(map.distance_to(&RegionSel::Kind(crate::geomap::RegionKind::Intersection), c.position) > 4.0);
        }
    }

    #[test]
    fn impossible_requirement_exhausts_budget() {
        let p = prog("ego = Car on road\nrequire (distance from ego to intersection) > 1000\n");
        let cfg = SampleConfig { seed: 1, max_rejections: 20 };
        assert_eq!(sample(&p, &town(), &cfg), Err(SampleError::RejectionBudgetExceeded(20)));
    }

    #[test]
    fn perturbations_change_one_feature() {
        let p = prog(CAR_AHEAD);
        let map = town();
        let cfg = SampleConfig::default();
        let l = sample(&p, &map, &cfg).unwrap();
        let moved = perturb(&p, &map, &l, PerturbKind::DistanceOutOfRange, &cfg).unwrap();
        let before = l.objects[1].position.dist(l.objects[0].position);
        let after = moved.objects[1].position.dist(moved.objects[0].position);
        assert!((after - before - DISPLACEMENT).abs() < 1e-9);
        let out = perturb(&p, &map, &l, PerturbKind::RegionExit, &cfg).unwrap();
        assert!(map.distance_to(&RegionSel::All, out.objects[0].position) >= EXIT_CLEARANCE);
        let flip = perturb(&p, &map, &l, PerturbKind::HeadingFlip, &cfg).unwrap();
        let dh = wrap_angle(flip.objects[1].heading.unwrap() - l.objects[1].heading.unwrap());
        assert!((dh.abs() - PI).abs() < 1e-9);
        let bad = perturb(&p, &map, &l, PerturbKind::RequireViolation, &cfg).unwrap();
        assert!(map.distance_to(&RegionSel::Kind(crate::geomap::RegionKind::Intersection), bad.objects[1].position) <= 4.0 - REQUIRE_MARGIN);
    }

    #[test]
    fn free_headings_are_not_flipped() {
        let p = prog("ego = Pedestrian on sidewalk\n");
        let l = sample(&p, &town(), &SampleConfig::default()).unwrap();
        assert!(matches!(
            perturb(&p, &town(), &l, PerturbKind::HeadingFlip, &SampleConfig::default()),
            Err(SampleError::NotApplicable { .. })
        ));
        assert!(perturb(&p, &town(), &l, PerturbKind::RequireViolation, &SampleConfig::default()).is_err());
    }

    #[test]
    fn kinds_round_trip_through_strings() {
        for k in PerturbKind::ALL {
            assert_eq!(k.as_str().parse::<PerturbKind>().unwrap(), k);
        }
    }
}
