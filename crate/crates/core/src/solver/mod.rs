//! Delta-decision procedures: a built-in interval branch-and-prune search
//! and a driver for external SMT-LIB 2 solvers.

mod branch;
mod external;

use std::collections::BTreeMap;
use std::fmt::Write;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::constraints::{Formula, VarTable};
use crate::interval::Interval;

pub use external::{parse_solver_output, solve_external};

pub const DEFAULT_DELTA: f64 = 0.001;
pub const DEFAULT_MAX_BRANCHES: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Builtin,
    /// Shell command; the query file path is appended as the last argument.
    External(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub delta: f64,
    pub max_branches: u64,
    pub backend: Backend,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            max_branches: DEFAULT_MAX_BRANCHES,
            backend: Backend::Builtin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Unsat,
    DeltaSat,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub branches: u64,
    pub prune_steps: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub verdict: Verdict,
    /// Variable name to an interval of width at most delta; present on delta-sat.
    pub witness: Option<BTreeMap<String, Interval>>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("branch budget of {0} exhausted before a verdict")]
    BranchBudgetExceeded(u64),
    #[error("search reached boxes too small to split without a verdict")]
    Inconclusive,
    #[error("variable `{0}` has no finite bound")]
    Unbounded(String),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("external solver failed: {0}")]
    External(String),
}

/// Decides delta-satisfiability of `f` over the bounded variables in `vars`.
pub fn solve(f: &Formula, vars: &VarTable, cfg: &SolverConfig) -> Result<SolveResult, SolveError> {
    if !(cfg.delta > 0.0) {
        return Err(SolveError::Config(format!("delta must be positive, got {}", cfg.delta)));
    }
    match &cfg.backend {
        Backend::Builtin => branch::solve(f, vars, cfg),
        Backend::External(cmd) => solve_external(f, vars, cmd),
    }
}

/// Solver output in the conventional text form: a verdict line followed by
/// one `name : [lo, hi]` line per witness variable.
pub fn format_result(r: &SolveResult, delta: f64) -> String {
    let mut out = String::new();
    match r.verdict {
        Verdict::Unsat => out.push_str("unsat\n"),
        Verdict::DeltaSat => {
            writeln!(out, "delta-sat with delta = {delta}").expect("string write");
            for (name, iv) in r.witness.iter().flatten() {
                writeln!(out, "{name} : [{:?}, {:?}]", iv.lo, iv.hi).expect("string write");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{Term, VarRole};

    #[test]
    fn square_bound_example() {
        let mut vars = VarTable::new();
        let x = vars.fresh("x", VarRole::Aux, -10.0, 10.0);
        let f = Formula::and(vec![
            Formula::le(Term::sqr(x.clone()), Term::c(4.0)),
            Formula::ge(x.clone(), Term::c(1.0)),
        ]);
        let r = solve(&f, &vars, &SolverConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::DeltaSat);
        let w = r.witness.unwrap()["x"];
        assert!(w.lo >= 1.0 - 1e-3 && w.hi <= 2.0 + 1e-3, "{w}");
    }

    #[test]
    fn sine_out_of_range_is_unsat() {
        let mut vars = VarTable::new();
        let x = vars.fresh("x", VarRole::Aux, -10.0, 10.0);
        let f = Formula::ge(Term::sin(x), Term::c(2.0));
        assert_eq!(solve(&f, &vars, &SolverConfig::default()).unwrap().verdict, Verdict::Unsat);
    }

    #[test]
    fn rejects_bad_delta_and_unbounded_vars() {
        let mut vars = VarTable::new();
        let x = vars.fresh("x", VarRole::Aux, f64::NEG_INFINITY, 1.0);
        let f = Formula::ge(x, Term::c(0.0));
        let cfg = SolverConfig {
            delta: 0.0,
            ..SolverConfig::default()
        };
        assert!(matches!(solve(&f, &vars, &cfg), Err(SolveError::Config(_))));
        assert!(matches!(
            solve(&f, &vars, &SolverConfig::default()),
            Err(SolveError::Unbounded(_))
        ));
    }
}
