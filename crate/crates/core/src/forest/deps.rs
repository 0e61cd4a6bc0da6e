//! Grouping of queried features by shared unobserved intermediates.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{ExpressionForest, SlotKey};

/// Features that must be checked together because they share randomness
/// through intermediates that are not observed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureGroup {
    pub members: Vec<SlotKey>,
    pub shared_intermediates: Vec<SlotKey>,
}

impl FeatureGroup {
    /// Entities owning the members, in member order.
    pub fn objects(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for m in &self.members {
            if !out.contains(&m.entity.as_str()) {
                out.push(&m.entity);
            }
        }
        out
    }
}

/// Feature groups in an order where every group comes after the groups it
/// depends on.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SortedFeatures {
    pub groups: Vec<FeatureGroup>,
}

impl SortedFeatures {
    /// Scene objects by first appearance across the groups.
    pub fn object_order(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for g in &self.groups {
            for o in g.objects() {
                if !out.iter().any(|x| x == o) {
                    out.push(o.to_string());
                }
            }
        }
        out
    }

    pub fn features(&self) -> impl Iterator<Item = &SlotKey> {
        self.groups.iter().flat_map(|g| g.members.iter())
    }
}

/// Walks a feature's tree through unqueried slots, collecting them as its
/// support and noting the queried features it reads.
fn support(
    ef: &ExpressionForest,
    root: &SlotKey,
    queried: &BTreeSet<SlotKey>,
) -> (BTreeSet<SlotKey>, BTreeSet<SlotKey>) {
    let mut supp = BTreeSet::new();
    let mut reads = BTreeSet::new();
    let mut stack = ef.refs(root);
    while let Some(k) = stack.pop() {
        if queried.contains(&k) {
            if k != *root {
                reads.insert(k);
            }
            continue;
        }
        if supp.insert(k.clone()) {
            stack.extend(ef.refs(&k));
        }
    }
    (supp, reads)
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut j = i;
    while parent[j] != r {
        let next = parent[j];
        parent[j] = r;
        j = next;
    }
    r
}

/// Partitions the queried features of `ef` into groups of jointly dependent
/// features and sorts the groups topologically. Ties go to the group whose
/// first member comes earliest by (object definition order, field).
pub fn analyze_dependencies(ef: &ExpressionForest, queried: &[SlotKey]) -> SortedFeatures {
    let obj_index: BTreeMap<&str, usize> = ef
        .entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.name.as_str(), i))
        .collect();
    let rank = |k: &SlotKey| (obj_index.get(k.entity.as_str()).copied().unwrap_or(usize::MAX), k.field.clone());
    let mut feats: Vec<SlotKey> = queried
        .iter()
        .filter(|k| ef.trees.contains_key(k))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    feats.sort_by_key(|k| rank(k));
    let qset: BTreeSet<SlotKey> = feats.iter().cloned().collect();
    let info: Vec<_> = feats.iter().map(|f| support(ef, f, &qset)).collect();

    let n = feats.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if !info[i].0.is_disjoint(&info[j].0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    // group ids by smallest member rank, so ties break on that order
    let mut group_of = vec![0; n];
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let g = match roots.iter().position(|&x| x == r) {
            Some(g) => g,
            None => {
                roots.push(r);
                roots.len() - 1
            }
        };
        group_of[i] = g;
    }
    let ng = roots.len();
    let index_of: BTreeMap<&SlotKey, usize> = feats.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ng];
    let mut indeg = vec![0usize; ng];
    for i in 0..n {
        for r in &info[i].1 {
            let (from, to) = (group_of[index_of[r]], group_of[i]);
            if from != to && edges[from].insert(to) {
                indeg[to] += 1;
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..ng).filter(|&g| indeg[g] == 0).collect();
    let mut sorted = Vec::with_capacity(ng);
    while let Some(g) = ready.pop_first() {
        sorted.push(g);
        for &t in &edges[g] {
            indeg[t] -= 1;
            if indeg[t] == 0 {
                ready.insert(t);
            }
        }
    }
    // the forest is acyclic, so every group is emitted
    debug_assert_eq!(sorted.len(), ng);

    let groups = sorted
        .into_iter()
        .map(|g| {
            let idx: Vec<usize> = (0..n).filter(|&i| group_of[i] == g).collect();
            let members = idx.iter().map(|&i| feats[i].clone()).collect();
            let mut shared = Vec::new();
            if idx.len() > 1 {
                let mut counts: BTreeMap<&SlotKey, usize> = BTreeMap::new();
                for &i in &idx {
                    for s in &info[i].0 {
                        *counts.entry(s).or_default() += 1;
                    }
                }
                let mut s: Vec<SlotKey> = counts.into_iter().filter(|&(_, c)| c > 1).map(|(k, _)| k.clone()).collect();
                s.sort_by_key(|k| rank(k));
                shared = s;
            }
            FeatureGroup {
                members,
                shared_intermediates: shared,
            }
        })
        .collect();
    SortedFeatures { groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::forest::compile;

    fn groups(src: &str) -> Vec<Vec<String>> {
        let ef = compile(&parse(src).unwrap()).unwrap();
        let q: Vec<SlotKey> = ef.trees.keys().filter(|k| ef.is_feature(k)).cloned().collect();
        analyze_dependencies(&ef, &q)
            .groups
            .iter()
            .map(|g| g.members.iter().map(ToString::to_string).collect())
            .collect()
    }

    #[test]
    fn independent_cars_give_singleton_groups() {
        let g = groups("ego = Car on road\notherCar = Car ahead of ego by Range(4, 10)\n");
        assert_eq!(
            g,
            [["ego.position"], ["ego.heading"], ["otherCar.position"], ["otherCar.heading"]]
        );
    }

    #[test]
    fn shared_point_groups_positions() {
        let g = groups("spot = OrientedPoint on curb\nego = Car right of spot by 0.5\nsideCar = Car left of spot by 0.5\n");
        assert_eq!(
            g,
            vec![
                vec!["ego.position".to_string(), "sideCar.position".to_string()],
                vec!["ego.heading".to_string()],
                vec!["sideCar.heading".to_string()],
            ]
        );
        let ef = compile(&parse("spot = OrientedPoint on curb\nego = Car right of spot by 0.5\nsideCar = Car left of spot by 0.5\n").unwrap()).unwrap();
        let q: Vec<SlotKey> = ef.trees.keys().filter(|k| ef.is_feature(k)).cloned().collect();
        let sf = analyze_dependencies(&ef, &q);
        assert_eq!(sf.groups[0].shared_intermediates, [SlotKey::position("spot"), SlotKey::heading("spot")]);
        assert_eq!(sf.object_order(), ["ego", "sideCar"]);
    }

    #[test]
    fn unqueried_heading_acts_as_intermediate() {
        let ef = compile(&parse("ego = Car on road\nc = Car ahead of ego by 5\nd = Car behind ego by 5\n").unwrap()).unwrap();
        let q = [SlotKey::position("ego"), SlotKey::position("c"), SlotKey::position("d")];
        let sf = analyze_dependencies(&ef, &q);
        // the hidden ego.heading ties c and d together
        assert_eq!(sf.groups.len(), 2);
        assert_eq!(sf.groups[0].members, [SlotKey::position("ego")]);
        assert_eq!(sf.groups[1].members, [SlotKey::position("c"), SlotKey::position("d")]);
        assert_eq!(sf.groups[1].shared_intermediates, [SlotKey::heading("ego")]);
    }

    #[test]
    fn every_queried_feature_lands_in_exactly_one_group() {
        let src = "ego = Car on road\na = Car visible\nb = Pedestrian on sidewalk, facing toward a\nc = Car offset by (Range(-3, 3), 10)\n";
        let ef = compile(&parse(src).unwrap()).unwrap();
        let q: Vec<SlotKey> = ef.trees.keys().filter(|k| ef.is_feature(k)).cloned().collect();
        let sf = analyze_dependencies(&ef, &q);
        let mut seen: Vec<SlotKey> = sf.features().cloned().collect();
        seen.sort();
        let mut want = q.clone();
        want.sort();
        assert_eq!(seen, want);
        // dependencies respect the order
        let pos: BTreeMap<&SlotKey, usize> = sf
            .groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.members.iter().map(move |m| (m, i)))
            .collect();
        let qs: BTreeSet<SlotKey> = q.iter().cloned().collect();
        for f in &q {
            for r in support(&ef, f, &qs).1 {
                assert!(pos[&r] <= pos[f], "{r} must precede {f}");
            }
        }
    }
}
