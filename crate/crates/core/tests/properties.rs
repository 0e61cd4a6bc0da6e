//! Property tests over the public API.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use proptest::prelude::*;

use scenario_query::dsl::{parse, pretty_print};
use scenario_query::engine::{matches, Label, LabelObject, Program, QueryConfig};
use scenario_query::eval::wrap_angle;
use scenario_query::geomap::synthetic::town;
use scenario_query::geomap::Point2;
use scenario_query::sampler::{perturb, sample, PerturbKind, SampleConfig};

const CAR_AHEAD: &str = "ego = Car on road\notherCar = Car ahead of ego by Range(4, 10)\n\
                    require (distance from otherCar to intersection) > 4\n";
const PARKED_PAIR: &str = "spot = OrientedPoint on curb\nego = Car right of spot by 0.5\nsideCar = Car left of spot by 0.5\n";

fn object() -> impl Strategy<Value = LabelObject> {
    (
        "[a-z]{1,6}",
        prop::sample::select(vec!["car", "pedestrian", "truck"]),
        -1e4..1e4f64,
        -1e4..1e4f64,
        prop::option::of(-PI..PI),
        prop::collection::btree_map("[a-z]{1,4}", -1e3..1e3f64, 0..3),
    )
        .prop_map(|(id, class, x, y, heading, extras)| LabelObject {
            id,
            class: class.into(),
            position: Point2::new(x, y),
            heading,
            extras,
            ego: false,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn label_json_round_trips(objs in prop::collection::vec(object(), 0..5), id in "[a-z0-9-]{1,10}") {
        let mut objects: Vec<LabelObject> = Vec::new();
        for o in objs {
            if !objects.iter().any(|x| x.id == o.id) {
                objects.push(o);
            }
        }
        if let Some(first) = objects.first_mut() {
            first.ego = true;
        }
        let l = Label { scene_id: id, objects };
        prop_assert_eq!(Label::from_json(&l.to_json()).unwrap(), l);
    }

    #[test]
    fn wrapped_angles_stay_congruent(a in -100.0..100.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        let turns = (a - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn samples_match_and_shuffling_keeps_the_verdict(seed in 0u64..10_000) {
        let map = town();
        let p = Program::from_source(PARKED_PAIR, &BTreeMap::new()).unwrap();
        let cfg = SampleConfig { seed, ..SampleConfig::default() };
        let mut l = sample(&p, &map, &cfg).unwrap();
        let q = QueryConfig::default();
        prop_assert!(matches(&p, &map, &l, &q).unwrap().matches);
        l.objects.reverse();
        prop_assert!(matches(&p, &map, &l, &q).unwrap().matches);
    }

    #[test]
    fn perturbed_samples_never_match(seed in 0u64..10_000, k in 0usize..4) {
        let map = town();
        let p = Program::from_source(CAR_AHEAD, &BTreeMap::new()).unwrap();
        let cfg = SampleConfig { seed, ..SampleConfig::default() };
        let l = sample(&p, &map, &cfg).unwrap();
        let bad = perturb(&p, &map, &l, PerturbKind::ALL[k], &cfg).unwrap();
        prop_assert!(!matches(&p, &map, &bad, &QueryConfig::default()).unwrap().matches);
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>()) {
        let map = town();
        let p = Program::from_source(CAR_AHEAD, &BTreeMap::new()).unwrap();
        let cfg = SampleConfig { seed, ..SampleConfig::default() };
        prop_assert_eq!(sample(&p, &map, &cfg).unwrap(), sample(&p, &map, &cfg).unwrap());
    }

    #[test]
    fn printing_then_parsing_is_stable(lo in 0.0..5.0f64, span in 0.5..5.0f64, d in 0.1..3.0f64) {
        let src = format!(
            "ego = Car on road\nc = Car ahead of ego by Range({lo}, {})\np = Pedestrian left of c by {d}\n",
            lo + span
        );
        let ast = parse(&src).unwrap();
        let again = parse(&pretty_print(&ast)).unwrap();
        prop_assert_eq!(pretty_print(&again), pretty_print(&ast));
    }
}
