use std::collections::BTreeMap;

use scenario_query::engine::{matches, Program, QueryConfig};
use scenario_query::geomap::synthetic::town;
use scenario_query::sampler::{perturb, sample_n, PerturbKind, SampleConfig, SampleError};

fn load(name: &str, params: &[(&str, f64)]) -> Program {
    let path = format!("{}/../../data/programs/{name}.scenic", env!("CARGO_MANIFEST_DIR"));
    let src = std::fs::read_to_string(path).unwrap();
    let params: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    Program::from_source(&src, &params).unwrap()
}

#[test]
fn quick_round_trip() {
    let map = town();
    for (name, params, vd) in [
        ("car_ahead", vec![], 50.0),
        ("parked_pair", vec![], 50.0),
        ("traffic_chain", vec![("numCars", 3.0)], 200.0),
        ("pedestrian_line", vec![("numPeds", 3.0)], 200.0),
    ] {
        let p = load(name, &params);
        let cfg = QueryConfig { visible_distance: vd, ..QueryConfig::default() };
        let scfg = SampleConfig { seed: 3, ..SampleConfig::default() };
        for l in sample_n(&p, &map, 10, &scfg).unwrap() {
            let v = matches(&p, &map, &l, &cfg).unwrap();
            assert!(v.matches, "{name}: {} {:?}", l.to_json(), v);
            for k in PerturbKind::ALL {
                match perturb(&p, &map, &l, k, &scfg) {
                    Ok(bad) => {
                        let v = matches(&p, &map, &bad, &cfg).unwrap();
                        assert!(!v.matches, "{name} {k}: {} {:?}", bad.to_json(), v);
                    }
                    Err(SampleError::NotApplicable { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
}
