//! Running an external SMT solver on a script file.

use std::collections::HashMap;
use std::io::{ErrorKind, Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::encode::state_symbol;
use super::sexp::parse_model;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Unsat,
    /// Real-valued assignment reported by the solver.
    Sat(HashMap<String, f64>),
    Unknown,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Unsat => "unsat",
            Verdict::Sat(_) => "sat",
            Verdict::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverRun {
    pub verdict: Verdict,
    pub elapsed: Duration,
}

/// Splits a command such as `"z3 -smt2"` into program and arguments.
fn split_command(cmd: &str) -> Result<(String, Vec<String>)> {
    let mut parts = cmd.split_whitespace().map(str::to_string);
    let program = parts
        .next()
        .ok_or_else(|| Error::SolverNotFound("empty solver command".into()))?;
    Ok((program, parts.collect()))
}

/// Writes `script` to a temporary file, runs `cmd <file>` and parses the
/// verdict. The process is killed once `timeout` elapses.
pub fn run_solver(script: &str, cmd: &str, timeout: Duration) -> Result<SolverRun> {
    let (program, args) = split_command(cmd)?;
    let mut file = tempfile::Builder::new()
        .prefix("moet-query-")
        .suffix(".smt2")
        .tempfile()
        .map_err(|e| Error::io("temporary script", e))?;
    file.write_all(script.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(file.path(), e))?;

    let start = Instant::now();
    let mut child = Command::new(&program)
        .args(&args)
        .arg(file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| match e.kind() {
            ErrorKind::NotFound | ErrorKind::PermissionDenied => Error::SolverNotFound(program.clone()),
            _ => Error::io(&program, e),
        })?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut out = String::new();
        stdout.read_to_string(&mut out).map(|_| out)
    });
    loop {
        match child.try_wait().map_err(|e| Error::io(&program, e))? {
            Some(_) => break,
            None if start.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Timeout(timeout));
            }
            None => std::thread::sleep(Duration::from_millis(2)),
        }
    }
    let elapsed = start.elapsed();
    let output = reader
        .join()
        .expect("reader thread")
        .map_err(|e| Error::io(&program, e))?;
    Ok(SolverRun {
        verdict: parse_output(&output)?,
        elapsed,
    })
}

/// Interprets `check-sat` / `get-model` output.
pub fn parse_output(output: &str) -> Result<Verdict> {
    let trimmed = output.trim_start();
    let (first, rest) = trimmed.split_once('\n').unwrap_or((trimmed, ""));
    match first.trim() {
        "unsat" => Ok(Verdict::Unsat),
        "unknown" => Ok(Verdict::Unknown),
        "sat" => Ok(Verdict::Sat(parse_model(rest)?)),
        other => Err(Error::SolverParse(format!("unexpected solver output: {other}"))),
    }
}

/// Initial state `s_0` of a counterexample, if every component is assigned.
pub fn initial_state(assignment: &HashMap<String, f64>, num_features: usize) -> Option<Vec<f64>> {
    (0..num_features)
        .map(|k| assignment.get(&state_symbol(0, k)).copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_verdicts() {
        assert_eq!(parse_output("unsat\n").unwrap(), Verdict::Unsat);
        assert_eq!(parse_output("unknown\n").unwrap(), Verdict::Unknown);
        let v = parse_output("sat\n(\n  (define-fun s_0_0 () Real\n    (/ 1.0 40.0))\n)\n").unwrap();
        let Verdict::Sat(m) = v else { panic!() };
        assert_eq!(initial_state(&m, 1), Some(vec![0.025]));
        assert_eq!(initial_state(&m, 2), None);
        assert!(matches!(parse_output("(error \"line 1\")"), Err(Error::SolverParse(_))));
        assert!(matches!(parse_output(""), Err(Error::SolverParse(_))));
    }

    #[test]
    fn missing_solver_is_reported() {
        let r = run_solver("(check-sat)\n", "definitely-not-a-solver-binary", Duration::from_secs(5));
        assert!(matches!(r, Err(Error::SolverNotFound(_))));
        assert!(matches!(run_solver("", "  ", Duration::from_secs(1)), Err(Error::SolverNotFound(_))));
    }

    #[test]
    fn slow_solver_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let slow = dir.path().join("slow.sh");
        std::fs::write(&slow, "#!/bin/sh\nexec sleep 5\n").unwrap();
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(&slow, std::fs::Permissions::from_mode(0o755)).unwrap();
            let start = Instant::now();
            let r = run_solver("", slow.to_str().unwrap(), Duration::from_millis(300));
            assert!(matches!(r, Err(Error::Timeout(_))), "{r:?}");
            assert!(start.elapsed() < Duration::from_secs(3));
        }
    }
}
