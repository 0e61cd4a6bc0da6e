//! Runs an external delta-solver on an SMT-LIB 2 file and reads its verdict.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::Command;
use std::time::Instant;

use super::{SolveError, SolveResult, SolveStats, Verdict};
use crate::constraints::{to_smtlib, Formula, VarTable};
use crate::interval::Interval;

fn parse_model_line(line: &str) -> Option<(String, Interval)> {
    let (name, rest) = line.split_once(':')?;
    let rest = rest.trim().strip_prefix('[')?.strip_suffix(']')?;
    let (lo, hi) = rest.split_once(',')?;
    let lo = lo.trim().parse().ok()?;
    let hi = hi.trim().parse().ok()?;
    Some((name.trim().to_string(), Interval::new(lo, hi)))
}

/// Reads `unsat`, `sat` or `delta-sat ...` followed by optional
/// `name : [lo, hi]` model lines.
pub fn parse_solver_output(text: &str) -> Result<(Verdict, Option<BTreeMap<String, Interval>>), SolveError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines
        .next()
        .ok_or_else(|| SolveError::External("empty solver output".into()))?;
    if first == "unsat" {
        return Ok((Verdict::Unsat, None));
    }
    if first == "sat" || first.starts_with("delta-sat") {
        let model: BTreeMap<String, Interval> = lines.filter_map(parse_model_line).collect();
        let witness = if model.is_empty() { None } else { Some(model) };
        return Ok((Verdict::DeltaSat, witness));
    }
    Err(SolveError::External(format!("unrecognised verdict line `{first}`")))
}

/// Writes the query to a temporary file and runs `command <file>` through
/// the shell.
pub fn solve_external(f: &Formula, vars: &VarTable, command: &str) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let mut file = tempfile::Builder::new()
        .suffix(".smt2")
        .tempfile()
        .map_err(|e| SolveError::External(e.to_string()))?;
    file.write_all(to_smtlib(f, vars).as_bytes())
        .map_err(|e| SolveError::External(e.to_string()))?;
    let path = file.path().to_string_lossy().replace('\'', r"'\''");
    let out = Command::new("sh")
        .arg("-c")
        .arg(format!("{command} '{path}'"))
        .output()
        .map_err(|e| SolveError::External(format!("cannot run `{command}`: {e}")))?;
    if !out.status.success() {
        let err = String::from_utf8_lossy(&out.stderr);
        return Err(SolveError::External(format!("`{command}` exited with {}: {}", out.status, err.trim())));
    }
    let (verdict, witness) = parse_solver_output(&String::from_utf8_lossy(&out.stdout))?;
    Ok(SolveResult {
        verdict,
        witness,
        stats: SolveStats {
            branches: 0,
            prune_steps: 0,
            wall_time: start.elapsed(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_dreal_style_output() {
        let (v, w) = parse_solver_output("delta-sat with delta = 0.001\nz : [6.999, 7.001]\n").unwrap();
        assert_eq!(v, Verdict::DeltaSat);
        assert_eq!(w.unwrap()["z"], Interval::new(6.999, 7.001));
        assert_eq!(parse_solver_output("unsat\n").unwrap(), (Verdict::Unsat, None));
        assert!(parse_solver_output("unknown\n").is_err());
        assert!(parse_solver_output("").is_err());
    }

    #[test]
    fn failing_command_is_an_error() {
        let f = Formula::True;
        let r = solve_external(&f, &VarTable::new(), "false");
        assert!(matches!(r, Err(SolveError::External(_))));
        let r = solve_external(&f, &VarTable::new(), "echo unsat; true");
        assert_eq!(r.unwrap().verdict, Verdict::Unsat);
    }
}
