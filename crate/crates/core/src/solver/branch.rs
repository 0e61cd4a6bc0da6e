//! Interval branch-and-prune. Terms are flattened into a DAG shared by all
//! atoms; each atom is contracted with a forward/backward (HC4) pass.
//! Disjunctions branch per live disjunct, conjunctions of atoms bisect the
//! widest unsettled variable.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use super::{SolveError, SolveResult, SolveStats, SolverConfig, Verdict};
use crate::constraints::{Formula, Term, TermNode, VarTable};
use crate::interval::{atan_rev, mul_rev, sin_rev, sqr_rev, Interval};

#[derive(Debug, Clone, Copy)]
enum Op {
    Var(usize),
    Const(f64),
    Add(usize, usize),
    Mul(usize, usize),
    Sqr(usize),
    Neg(usize),
    Sin(usize),
    Atan(usize),
}

#[derive(Debug)]
struct Atom {
    root: usize,
    /// Nodes of the atom's subterm in topological order.
    nodes: Vec<usize>,
    vars: Vec<usize>,
}

#[derive(Debug)]
enum Goal {
    Atom(usize),
    And(Vec<Goal>),
    Or(Vec<Goal>),
    False,
}

#[derive(Default)]
struct Dag {
    ops: Vec<Op>,
    by_addr: HashMap<usize, usize>,
    by_var: HashMap<usize, usize>,
    atoms: Vec<Atom>,
}

impl Dag {
    fn node(&mut self, t: &Term) -> usize {
        if let TermNode::Var(i) = t.node() {
            if let Some(&n) = self.by_var.get(i) {
                return n;
            }
            self.ops.push(Op::Var(*i));
            self.by_var.insert(*i, self.ops.len() - 1);
            return self.ops.len() - 1;
        }
        if let Some(&n) = self.by_addr.get(&t.addr()) {
            return n;
        }
        let op = match t.node() {
            TermNode::Var(_) => unreachable!("handled above"),
            TermNode::Const(x) => Op::Const(*x),
            TermNode::Add(a, b) => Op::Add(self.node(a), self.node(b)),
            TermNode::Mul(a, b) => {
                let (x, y) = (self.node(a), self.node(b));
                if x == y {
                    Op::Sqr(x)
                } else {
                    Op::Mul(x, y)
                }
            }
            TermNode::Neg(a) => Op::Neg(self.node(a)),
            TermNode::Sin(a) => Op::Sin(self.node(a)),
            TermNode::Atan(a) => Op::Atan(self.node(a)),
        };
        self.ops.push(op);
        let n = self.ops.len() - 1;
        self.by_addr.insert(t.addr(), n);
        n
    }

    fn atom(&mut self, t: &Term) -> usize {
        let root = self.node(t);
        let mut seen = vec![root];
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            let kids = match self.ops[n] {
                Op::Var(_) | Op::Const(_) => [None, None],
                Op::Add(a, b) | Op::Mul(a, b) => [Some(a), Some(b)],
                Op::Sqr(a) | Op::Neg(a) | Op::Sin(a) | Op::Atan(a) => [Some(a), None],
            };
            for k in kids.into_iter().flatten() {
                if !seen.contains(&k) {
                    seen.push(k);
                    stack.push(k);
                }
            }
        }
        seen.sort_unstable();
        let vars = seen
            .iter()
            .filter_map(|&n| match self.ops[n] {
                Op::Var(i) => Some(i),
                _ => None,
            })
            .collect();
        self.atoms.push(Atom { root, nodes: seen, vars });
        self.atoms.len() - 1
    }

    fn goal(&mut self, f: &Formula) -> Option<Goal> {
        Some(match f {
            Formula::True => return None,
            Formula::False => Goal::False,
            Formula::Le(t) | Formula::Lt(t) => Goal::Atom(self.atom(t)),
            Formula::And(xs) => Goal::And(xs.iter().filter_map(|x| self.goal(x)).collect()),
            Formula::Or(xs) => {
                let mut out = Vec::new();
                for x in xs {
                    match self.goal(x) {
                        // a trivially true disjunct settles the disjunction
                        None => return None,
                        Some(g) => out.push(g),
                    }
                }
                Goal::Or(out)
            }
        })
    }
}

fn forward(op: Op, vals: &[Interval], dom: &[Interval]) -> Interval {
    match op {
        Op::Var(i) => dom[i],
        Op::Const(x) => Interval::point(x),
        Op::Add(a, b) => vals[a].add(&vals[b]),
        Op::Mul(a, b) => vals[a].mul(&vals[b]),
        Op::Sqr(a) => vals[a].sqr(),
        Op::Neg(a) => vals[a].neg(),
        Op::Sin(a) => vals[a].sin(),
        Op::Atan(a) => vals[a].atan(),
    }
}

struct Search<'a> {
    dag: &'a Dag,
    delta: f64,
    max_branches: u64,
    stats: SolveStats,
    scratch: Vec<Interval>,
    unknown_leaves: u64,
}

enum Outcome {
    Sat(Vec<Interval>),
    Unsat,
}

/// Live constraints at one search node.
struct Node<'g> {
    atoms: Vec<usize>,
    ors: Vec<Vec<&'g Goal>>,
}

impl<'g> Node<'g> {
    /// Adds a goal; returns false when it is literally false.
    fn push(&mut self, g: &'g Goal) -> bool {
        match g {
            Goal::Atom(a) => {
                if !self.atoms.contains(a) {
                    self.atoms.push(*a);
                }
                true
            }
            Goal::And(xs) => xs.iter().all(|x| self.push(x)),
            Goal::Or(xs) => {
                self.ors.push(xs.iter().collect());
                true
            }
            Goal::False => false,
        }
    }
}

impl<'a> Search<'a> {
    fn eval_atom(&mut self, a: usize, dom: &[Interval]) -> Interval {
        let atom = &self.dag.atoms[a];
        for &n in &atom.nodes {
            self.scratch[n] = forward(self.dag.ops[n], &self.scratch, dom);
        }
        self.scratch[atom.root]
    }

    fn refuted_atom(&mut self, a: usize, dom: &[Interval]) -> bool {
        // both `t <= 0` and `t < 0` fail when t is bounded away above 0;
        // for the strict form 0 itself also fails, but keeping it is sound
        self.eval_atom(a, dom).lo > 0.0
    }

    fn satisfied_atom(&mut self, a: usize, dom: &[Interval]) -> bool {
        self.eval_atom(a, dom).hi <= self.delta
    }

    fn refuted(&mut self, g: &Goal, dom: &[Interval]) -> bool {
        match g {
            Goal::Atom(a) => self.refuted_atom(*a, dom),
            Goal::And(xs) => xs.iter().any(|x| self.refuted(x, dom)),
            Goal::Or(xs) => xs.iter().all(|x| self.refuted(x, dom)),
            Goal::False => true,
        }
    }

    fn satisfied(&mut self, g: &Goal, dom: &[Interval]) -> bool {
        match g {
            Goal::Atom(a) => self.satisfied_atom(*a, dom),
            Goal::And(xs) => xs.iter().all(|x| self.satisfied(x, dom)),
            Goal::Or(xs) => xs.iter().any(|x| self.satisfied(x, dom)),
            Goal::False => false,
        }
    }

    /// HC4 revise of one atom; returns false when the box becomes empty.
    fn revise(&mut self, a: usize, dom: &mut [Interval]) -> bool {
        self.stats.prune_steps += 1;
        let root = self.eval_atom(a, dom);
        let root = root.intersect(&Interval::new(f64::NEG_INFINITY, 0.0));
        if root.is_empty() {
            return false;
        }
        let atom = &self.dag.atoms[a];
        self.scratch[atom.root] = root;
        for &n in atom.nodes.iter().rev() {
            let z = self.scratch[n];
            if z.is_empty() {
                return false;
            }
            let s = &mut self.scratch;
            match self.dag.ops[n] {
                Op::Var(i) => {
                    dom[i] = dom[i].intersect(&z);
                    if dom[i].is_empty() {
                        return false;
                    }
                }
                Op::Const(_) => {}
                Op::Add(x, y) => {
                    s[x] = s[x].intersect(&z.sub(&s[y]));
                    s[y] = s[y].intersect(&z.sub(&s[x]));
                }
                Op::Mul(x, y) => {
                    s[x] = mul_rev(&z, &s[y], &s[x]);
                    s[y] = mul_rev(&z, &s[x], &s[y]);
                }
                Op::Sqr(x) => s[x] = sqr_rev(&z, &s[x]),
                Op::Neg(x) => s[x] = s[x].intersect(&z.neg()),
                Op::Sin(x) => s[x] = sin_rev(&z, &s[x]),
                Op::Atan(x) => s[x] = atan_rev(&z, &s[x]),
            }
        }
        true
    }

    /// Contracts the box with all atoms until progress stalls.
    fn contract(&mut self, atoms: &[usize], dom: &mut [Interval]) -> bool {
        for _round in 0..40 {
            let before: Vec<f64> = dom.iter().map(Interval::width).collect();
            for &a in atoms {
                if self.dag.atoms[a].vars.is_empty() {
                    if self.refuted_atom(a, dom) {
                        return false;
                    }
                    continue;
                }
                if !self.revise(a, dom) {
                    return false;
                }
            }
            let progress = dom
                .iter()
                .zip(&before)
                .any(|(d, &w)| w.is_finite() && w > 0.0 && d.width() < w * 0.99);
            if !progress {
                break;
            }
        }
        true
    }

    fn explore(&mut self, mut dom: Vec<Interval>, mut node: Node<'a>) -> Result<Outcome, SolveError> {
        self.stats.branches += 1;
        if self.stats.branches > self.max_branches {
            return Err(SolveError::BranchBudgetExceeded(self.max_branches));
        }
        loop {
            if !self.contract(&node.atoms, &mut dom) {
                return Ok(Outcome::Unsat);
            }
            let mut grew = false;
            let mut ors = Vec::new();
            for or in std::mem::take(&mut node.ors) {
                let live: Vec<&Goal> = or.into_iter().filter(|g| !self.refuted(g, &dom)).collect();
                match live.len() {
                    0 => return Ok(Outcome::Unsat),
                    1 => {
                        grew = true;
                        if !node.push(live[0]) {
                            return Ok(Outcome::Unsat);
                        }
                    }
                    _ => ors.push(live),
                }
            }
            node.ors.extend(ors);
            if !grew {
                break;
            }
        }

        // the whole box satisfies, or its midpoint does
        if self.box_satisfies(&node, &dom) {
            return Ok(Outcome::Sat(dom.iter().map(|d| Interval::point(d.mid())).collect()));
        }
        let mid: Vec<Interval> = dom.iter().map(|d| Interval::point(d.mid())).collect();
        if self.box_satisfies(&node, &mid) {
            return Ok(Outcome::Sat(mid));
        }

        if !node.ors.is_empty() {
            let pick = (0..node.ors.len())
                .min_by_key(|&i| node.ors[i].len())
                .expect("nonempty");
            let choices = node.ors.swap_remove(pick);
            for g in choices {
                let mut child = Node {
                    atoms: node.atoms.clone(),
                    ors: node.ors.clone(),
                };
                if !child.push(g) {
                    continue;
                }
                if let Outcome::Sat(w) = self.explore(dom.clone(), child)? {
                    return Ok(Outcome::Sat(w));
                }
            }
            return Ok(Outcome::Unsat);
        }

        // bisect the widest variable of an unsettled atom
        let mut best: Option<(usize, f64)> = None;
        for &a in &node.atoms {
            if self.satisfied_atom(a, &dom) {
                continue;
            }
            for &v in &self.dag.atoms[a].vars {
                let w = dom[v].width();
                if best.is_none_or(|(bv, bw)| w > bw || (w == bw && v < bv)) {
                    best = Some((v, w));
                }
            }
        }
        let Some((v, w)) = best else {
            return Ok(Outcome::Unsat);
        };
        let d = dom[v];
        let m = d.mid();
        if !(w > 1e-12 * d.lo.abs().max(d.hi.abs()).max(1.0)) || m <= d.lo || m >= d.hi {
            self.unknown_leaves += 1;
            return Ok(Outcome::Unsat);
        }
        let (lo, hi) = d.bisect();
        for half in [lo, hi] {
            let mut child_dom = dom.clone();
            child_dom[v] = half;
            let child = Node {
                atoms: node.atoms.clone(),
                ors: node.ors.clone(),
            };
            if let Outcome::Sat(w) = self.explore(child_dom, child)? {
                return Ok(Outcome::Sat(w));
            }
        }
        Ok(Outcome::Unsat)
    }

    fn box_satisfies(&mut self, node: &Node<'a>, dom: &[Interval]) -> bool {
        for &a in &node.atoms {
            if !self.satisfied_atom(a, dom) {
                return false;
            }
        }
        for or in &node.ors {
            if !or.iter().any(|g| self.satisfied(g, dom)) {
                return false;
            }
        }
        true
    }
}

pub(super) fn solve(f: &Formula, vars: &VarTable, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let mut used = Vec::new();
    f.vars(&mut used);
    for &v in &used {
        let b = vars.vars[v].bound;
        if !b.lo.is_finite() || !b.hi.is_finite() {
            return Err(SolveError::Unbounded(vars.name(v).to_string()));
        }
    }
    let mut dag = Dag::default();
    let goal = dag.goal(f);
    let dom = vars.bounds();
    let mut search = Search {
        dag: &dag,
        delta: cfg.delta,
        max_branches: cfg.max_branches,
        stats: SolveStats::default(),
        scratch: vec![Interval::ENTIRE; dag.ops.len()],
        unknown_leaves: 0,
    };
    let outcome = match &goal {
        None => Outcome::Sat(dom.iter().map(|d| Interval::point(d.mid())).collect()),
        Some(g) => {
            let mut node = Node {
                atoms: Vec::new(),
                ors: Vec::new(),
            };
            if dom.iter().any(Interval::is_empty) || !node.push(g) {
                Outcome::Unsat
            } else {
                search.explore(dom, node)?
            }
        }
    };
    let mut stats = search.stats;
    stats.wall_time = start.elapsed();
    match outcome {
        Outcome::Sat(w) => {
            let witness: BTreeMap<String, Interval> =
                vars.vars.iter().zip(w).map(|(v, iv)| (v.name.clone(), iv)).collect();
            Ok(SolveResult {
                verdict: Verdict::DeltaSat,
                witness: Some(witness),
                stats,
            })
        }
        Outcome::Unsat if search.unknown_leaves > 0 => Err(SolveError::Inconclusive),
        Outcome::Unsat => Ok(SolveResult {
            verdict: Verdict::Unsat,
            witness: None,
            stats,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::VarRole;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn disjunction_picks_feasible_branch() {
        let mut vars = VarTable::new();
        let x = vars.fresh("x", VarRole::Aux, -10.0, 10.0);
        let f = Formula::and(vec![
            Formula::or(vec![Formula::le(x.clone(), Term::c(-5.0)), Formula::ge(x.clone(), Term::c(5.0))]),
            Formula::ge(x.clone(), Term::c(0.0)),
        ]);
        let r = solve(&f, &vars, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::DeltaSat);
        assert!(r.witness.unwrap()["x"].lo >= 5.0 - 1e-3);
    }

    #[test]
    fn circle_line_intersection() {
        let mut vars = VarTable::new();
        let x = vars.fresh("x", VarRole::Aux, -3.0, 3.0);
        let y = vars.fresh("y", VarRole::Aux, -3.0, 3.0);
        let circle = Formula::eq(Term::sqr(x.clone()) + Term::sqr(y.clone()), Term::c(4.0));
        let line = Formula::eq(y.clone(), &x * 2.0 + 5.0);
        // distance from origin to the line is 5 / sqrt(5) > 2
        let r = solve(&Formula::and(vec![circle.clone(), line]), &vars, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Unsat);
        let line = Formula::eq(y.clone(), &x * 2.0 + 1.0);
        let r = solve(&Formula::and(vec![circle, line]), &vars, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::DeltaSat);
        assert!(r.stats.branches >= 1);
    }

    #[test]
    fn trigonometric_equation() {
        let mut vars = VarTable::new();
        let h = vars.fresh("h", VarRole::Aux, -3.5, 3.5);
        let f = Formula::and(vec![
            Formula::eq(Term::sin(h.clone()), Term::c(0.5)),
            Formula::eq(Term::cos(h.clone()), Term::c(-(0.75f64).sqrt())),
        ]);
        let r = solve(&f, &vars, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::DeltaSat);
        let w = r.witness.unwrap()["h"];
        assert!((w.mid() - 5.0 * std::f64::consts::PI / 6.0).abs() < 1e-2, "{w}");
    }

    #[test]
    fn budget_is_reported() {
        let mut vars = VarTable::new();
        let x = vars.fresh("x", VarRole::Aux, -1.0, 1.0);
        let y = vars.fresh("y", VarRole::Aux, -1.0, 1.0);
        // unsat only by a thin margin, forces deep bisection
        let f = Formula::and(vec![
            Formula::le(Term::sqr(x.clone()) + Term::sqr(y.clone()), Term::c(0.5)),
            Formula::ge(&x * &y, Term::c(0.2500001)),
        ]);
        let tight = SolverConfig {
            max_branches: 3,
            ..cfg()
        };
        assert!(matches!(solve(&f, &vars, &tight), Err(SolveError::BranchBudgetExceeded(3))));
    }

    #[test]
    fn deterministic_witness() {
        let mut vars = VarTable::new();
        let x = vars.fresh("x", VarRole::Aux, -10.0, 10.0);
        let y = vars.fresh("y", VarRole::Aux, -10.0, 10.0);
        let f = Formula::and(vec![
            Formula::eq(&x * &y, Term::c(3.0)),
            Formula::le(&x + &y, Term::c(4.5)),
            Formula::ge(x.clone(), Term::c(0.0)),
        ]);
        let a = solve(&f, &vars, &cfg()).unwrap();
        let b = solve(&f, &vars, &cfg()).unwrap();
        assert_eq!(a.witness, b.witness);
        assert_eq!(a.stats.branches, b.stats.branches);
    }
}
