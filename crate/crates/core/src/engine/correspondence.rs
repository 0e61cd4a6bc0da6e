//! Injective, class-compatible assignments of program objects to label
//! objects in lexicographic order, skipping extensions of failed prefixes.

use std::collections::{BTreeMap, BTreeSet};

/// Correspondence prefixes (label indices in canonical program-object
/// order) already shown to fail.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BadOcs {
    prefixes: BTreeSet<Vec<usize>>,
}

impl BadOcs {
    pub fn insert(&mut self, prefix: Vec<usize>) {
        self.prefixes.insert(prefix);
    }

    pub fn contains(&self, prefix: &[usize]) -> bool {
        self.prefixes.contains(prefix)
    }

    pub fn len(&self) -> usize {
        self.prefixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes.is_empty()
    }
}

fn falling(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (n - k + 1..=n).fold(1u64, |acc, x| acc.saturating_mul(x))
}

/// Depth-first enumerator over full correspondences.
#[derive(Debug, Clone)]
pub struct Enumerator {
    program: Vec<String>,
    label: Vec<String>,
    /// Allowed label indices per program object, in label order.
    cands: Vec<Vec<usize>>,
    pos: Vec<usize>,
    assign: Vec<usize>,
    started: bool,
    done: bool,
    pruned: u64,
}

impl Enumerator {
    /// `program` and `label` hold object classes; program objects are in
    /// canonical order.
    pub fn new(program: &[&str], label: &[&str]) -> Self {
        let cands = program
            .iter()
            .map(|c| (0..label.len()).filter(|&j| label[j] == *c).collect())
            .collect();
        Self {
            program: program.iter().map(|s| s.to_string()).collect(),
            label: label.iter().map(|s| s.to_string()).collect(),
            cands,
            pos: Vec::new(),
            assign: Vec::new(),
            started: false,
            done: false,
            pruned: 0,
        }
    }

    /// Number of injective completions of `assign` over depths `assign.len()..`.
    pub fn completions(&self, assign: &[usize]) -> u64 {
        let mut need: BTreeMap<&str, u64> = BTreeMap::new();
        for c in &self.program[assign.len()..] {
            *need.entry(c).or_default() += 1;
        }
        need.into_iter()
            .map(|(c, k)| {
                let avail = (0..self.label.len())
                    .filter(|j| self.label[*j] == c && !assign.contains(j))
                    .count() as u64;
                falling(avail, k)
            })
            .fold(1u64, |a, b| a.saturating_mul(b))
    }

    /// Total number of correspondences without pruning.
    pub fn total(&self) -> u64 {
        self.completions(&[])
    }

    /// Correspondences skipped because they extend a bad prefix.
    pub fn pruned(&self) -> u64 {
        self.pruned
    }

    /// Stops the enumeration, counting everything not yet visited as pruned.
    pub fn abandon(&mut self, visited: u64) {
        if !self.done {
            self.pruned = self.total().saturating_sub(visited);
            self.done = true;
        }
    }

    /// Completions of `assign[..k]` that come after the current assignment.
    fn later_completions(&self, k: usize) -> u64 {
        let mut sum = 0u64;
        for j in k..self.assign.len() {
            let mut prefix = self.assign[..j].to_vec();
            for &l in &self.cands[j][self.pos[j] + 1..] {
                if prefix.contains(&l) {
                    continue;
                }
                prefix.push(l);
                sum = sum.saturating_add(self.completions(&prefix));
                prefix.pop();
            }
        }
        sum
    }

    /// Next correspondence avoiding every bad prefix, including prefixes of
    /// the previous answer added after it was returned.
    pub fn next(&mut self, bad: &BadOcs) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let n = self.cands.len();
        let (mut d, mut start) = if self.started {
            if n == 0 {
                self.done = true;
                return None;
            }
            // a prefix of the last answer may have failed since; jump past it
            let k = (1..=n).find(|&k| bad.contains(&self.assign[..k])).unwrap_or(n);
            self.pruned = self.pruned.saturating_add(self.later_completions(k));
            (k - 1, self.pos[k - 1] + 1)
        } else {
            self.started = true;
            if n == 0 {
                return Some(Vec::new());
            }
            (0, 0)
        };
        loop {
            self.pos.truncate(d);
            self.assign.truncate(d);
            let mut found = None;
            for i in start..self.cands[d].len() {
                let l = self.cands[d][i];
                if self.assign.contains(&l) {
                    continue;
                }
                self.assign.push(l);
                let skip = bad.contains(&self.assign);
                if skip {
                    self.pruned = self.pruned.saturating_add(self.completions(&self.assign));
                }
                self.assign.pop();
                if !skip {
                    found = Some(i);
                    break;
                }
            }
            match found {
                Some(i) => {
                    self.pos.push(i);
                    self.assign.push(self.cands[d][i]);
                    if d + 1 == n {
                        return Some(self.assign.clone());
                    }
                    d += 1;
                    start = 0;
                }
                None => {
                    if d == 0 {
                        self.done = true;
                        return None;
                    }
                    d -= 1;
                    start = self.pos[d] + 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all(e: &mut Enumerator, bad: &BadOcs) -> Vec<Vec<usize>> {
        std::iter::from_fn(|| e.next(bad)).collect()
    }

    #[test]
    fn two_cars_three_labels() {
        let mut e = Enumerator::new(&["car", "car"], &["car", "car", "car"]);
        let got = all(&mut e, &BadOcs::default());
        assert_eq!(got, [[0, 1], [0, 2], [1, 0], [1, 2], [2, 0], [2, 1]]);
        assert_eq!(e.total(), 6);
    }

    #[test]
    fn bad_prefix_skips_its_extensions() {
        let mut bad = BadOcs::default();
        bad.insert(vec![0]);
        let mut e = Enumerator::new(&["car", "car"], &["car", "car", "car"]);
        let got = all(&mut e, &bad);
        assert_eq!(got.len(), 4);
        assert!(got.iter().all(|c| c[0] != 0));
        assert_eq!(e.pruned(), 2);
    }

    #[test]
    fn classes_filter_candidates() {
        let mut e = Enumerator::new(&["car", "pedestrian"], &["pedestrian", "car", "car"]);
        let got = all(&mut e, &BadOcs::default());
        assert_eq!(got, [[1, 0], [2, 0]]);
        let mut none = Enumerator::new(&["truck"], &["car"]);
        assert_eq!(none.next(&BadOcs::default()), None);
        let mut empty = Enumerator::new(&[], &["car"]);
        assert_eq!(all(&mut empty, &BadOcs::default()), [Vec::<usize>::new()]);
    }

    #[test]
    fn prefix_failing_after_the_fact_is_skipped() {
        let mut e = Enumerator::new(&["car", "car", "car"], &["car", "car", "car"]);
        let mut bad = BadOcs::default();
        assert_eq!(e.next(&bad), Some(vec![0, 1, 2]));
        bad.insert(vec![0]);
        assert_eq!(e.next(&bad), Some(vec![1, 0, 2]));
        assert_eq!(e.pruned(), 1);
        bad.insert(vec![1, 0]);
        assert_eq!(e.next(&bad), Some(vec![1, 2, 0]));
        assert_eq!(e.pruned(), 1);
        let rest = all(&mut e, &bad);
        assert_eq!(rest.len(), 2);
        assert_eq!(e.pruned() + 5, e.total());
    }

    fn brute(program: &[&str], label: &[&str]) -> Vec<Vec<usize>> {
        fn go(d: usize, p: &[&str], l: &[&str], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if d == p.len() {
                out.push(cur.clone());
                return;
            }
            for j in 0..l.len() {
                if l[j] == p[d] && !cur.contains(&j) {
                    cur.push(j);
                    go(d + 1, p, l, cur, out);
                    cur.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(0, program, label, &mut Vec::new(), &mut out);
        out
    }

    proptest! {
        #[test]
        fn matches_brute_force_with_pruning(
            p in prop::collection::vec(prop::sample::select(vec!["car", "pedestrian"]), 0..4),
            l in prop::collection::vec(prop::sample::select(vec!["car", "pedestrian"]), 0..6),
            bad_raw in prop::collection::vec(prop::collection::vec(0usize..6, 1..3), 0..4),
        ) {
            let mut bad = BadOcs::default();
            for b in &bad_raw {
                bad.insert(b.clone());
            }
            let expected: Vec<Vec<usize>> = brute(&p, &l)
                .into_iter()
                .filter(|c| !(1..=c.len()).any(|k| bad.contains(&c[..k])))
                .collect();
            let mut e = Enumerator::new(&p, &l);
            let got = all(&mut e, &bad);
            prop_assert_eq!(&got, &expected);
            prop_assert_eq!(e.total(), brute(&p, &l).len() as u64);
            prop_assert_eq!(e.pruned() + got.len() as u64, e.total());
        }

        #[test]
        fn online_pruning_matches_brute_force(
            p in prop::collection::vec(prop::sample::select(vec!["car", "pedestrian"]), 1..4),
            l in prop::collection::vec(prop::sample::select(vec!["car", "pedestrian"]), 0..6),
            fail_at in prop::collection::vec(0usize..4, 0..30),
        ) {
            // every yielded answer may poison one of its prefixes
            let mut bad = BadOcs::default();
            let mut e = Enumerator::new(&p, &l);
            let mut got = Vec::new();
            let mut i = 0;
            while let Some(c) = e.next(&bad) {
                prop_assert!(!(1..=c.len()).any(|k| bad.contains(&c[..k])));
                if let Some(&f) = fail_at.get(i) {
                    bad.insert(c[..(f % c.len()) + 1].to_vec());
                }
                got.push(c);
                i += 1;
            }
            let expected: Vec<Vec<usize>> = brute(&p, &l);
            for c in &expected {
                let yielded = got.contains(c);
                let blocked = (1..=c.len()).any(|k| bad.contains(&c[..k]));
                prop_assert!(yielded || blocked);
            }
            prop_assert_eq!(e.pruned() + got.len() as u64, e.total());
        }
    }
}
