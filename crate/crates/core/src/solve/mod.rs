//! Discharging obligations: SMT-LIB2 emission for an external solver, a
//! built-in falsifier, and exact replay of witnesses.

mod falsify;
mod replay;
mod smt;

pub use falsify::{constrained_symbols, falsify, Falsification};
pub use replay::{replay, AssertOutcome, ReplayError, Trace, TraceEvent, Witness};
pub use smt::{check_well_formed, emit_smt, parse_model, parse_sexps, real_literal, smt_term, Sexp};

use crate::ir::Program;
use crate::rational::Rational;
use crate::symexec::{explore, AssertObligation, Bounds, ExplorationSummary, ExploreError, SymbolId};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::Instant;
use thiserror::Error;

/// Environment variable holding the default solver command template.
pub const SOLVER_ENV: &str = "ESMCK_SOLVER";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Builtin,
    /// Command template; `{file}` is replaced by the script path, otherwise
    /// the path is appended.
    Smt { command: String },
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Builtin => "builtin",
            Backend::Smt { .. } => "smt",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckConfig {
    pub backend: Backend,
    /// Residual evaluations per obligation for the builtin backend.
    pub budget: u64,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            backend: Backend::Builtin,
            budget: 100_000,
            seed: 0,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Outcome {
    Violated { witness: Witness, trace: Trace },
    HoldsProved,
    Unknown { reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub obligation: usize,
    pub label: String,
    #[serde(flatten)]
    pub outcome: Outcome,
    pub backend: &'static str,
    /// Residual evaluations (builtin) or solver calls (smt).
    pub spent: u64,
}

impl Verdict {
    pub fn is_violated(&self) -> bool {
        matches!(self.outcome, Outcome::Violated { .. })
    }

    pub fn is_proved(&self) -> bool {
        matches!(self.outcome, Outcome::HoldsProved)
    }
}

/// Per-obligation seed so results do not depend on scheduling.
pub fn obligation_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Builds a witness from symbol values and validates it by replay.
pub fn validate_model(
    program: &Program,
    bounds: &Bounds,
    o: &AssertObligation,
    model: &BTreeMap<SymbolId, Rational>,
) -> Result<(Witness, Trace), String> {
    let witness = Witness {
        label: o.label.clone(),
        obligation: o.index,
        bounds: bounds.inputs.clone(),
        assignment: o
            .symbols
            .values()
            .filter_map(|s| model.get(&s.id).map(|v| (s.name.clone(), v.clone())))
            .collect(),
        havoc_order: o.path.havocs.iter().map(|h| o.name_of(*h).to_string()).collect(),
        choices: o.path.choices.clone(),
        target_assert: o.path.assert_ordinal,
    };
    let trace = replay(program, &witness).map_err(|e| format!("replay rejected the model: {e}"))?;
    if !trace.violates(o.path.assert_ordinal, &o.label) {
        return Err(format!("replay does not violate assert `{}`", o.label));
    }
    Ok((witness, trace))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverAnswer {
    Sat(BTreeMap<String, Rational>),
    Unsat,
    Unknown(String),
}

/// Runs an external solver on `script`. Every failure mode is an `Unknown`.
pub fn run_solver(command: &str, script: &str) -> SolverAnswer {
    let mut file = match tempfile::Builder::new().suffix(".smt2").tempfile() {
        Ok(f) => f,
        Err(e) => return SolverAnswer::Unknown(format!("cannot create query file: {e}")),
    };
    if let Err(e) = file.write_all(script.as_bytes()).and_then(|_| file.flush()) {
        return SolverAnswer::Unknown(format!("cannot write query file: {e}"));
    }
    let path = file.path().display().to_string();
    let mut words: Vec<String> = command.split_whitespace().map(str::to_string).collect();
    if words.is_empty() {
        return SolverAnswer::Unknown("solver unavailable".into());
    }
    if words.iter().any(|w| w.contains("{file}")) {
        for w in &mut words {
            *w = w.replace("{file}", &path);
        }
    } else {
        words.push(path);
    }
    let output = match Command::new(&words[0]).args(&words[1..]).output() {
        Ok(o) => o,
        Err(_) => return SolverAnswer::Unknown("solver unavailable".into()),
    };
    let stdout = String::from_utf8_lossy(&output.stdout);
    let mut lines = stdout.lines();
    match lines.next().map(str::trim) {
        Some("sat") => match parse_model(&lines.collect::<Vec<_>>().join("\n")) {
            Ok(m) => SolverAnswer::Sat(m),
            Err(e) => SolverAnswer::Unknown(format!("unparseable model: {e}")),
        },
        Some("unsat") => SolverAnswer::Unsat,
        Some("unknown") => SolverAnswer::Unknown("solver answered unknown".into()),
        other => SolverAnswer::Unknown(format!(
            "unexpected solver output {:?} (exit status {})",
            other.unwrap_or(""),
            output.status
        )),
    }
}

/// Checks one obligation of `program` (already lowered) under `bounds`.
pub fn check_obligation(
    program: &Program,
    bounds: &Bounds,
    o: &AssertObligation,
    config: &CheckConfig,
) -> Verdict {
    let verdict = |outcome, spent| Verdict {
        obligation: o.index,
        label: o.label.clone(),
        outcome,
        backend: config.backend.name(),
        spent,
    };
    match &config.backend {
        Backend::Builtin => {
            let f = falsify(o, config.budget.max(1), obligation_seed(config.seed, o.index));
            let outcome = match f.model {
                Some(model) => match validate_model(program, bounds, o, &model) {
                    Ok((witness, trace)) => Outcome::Violated { witness, trace },
                    Err(reason) => Outcome::Unknown { reason },
                },
                None => Outcome::Unknown { reason: f.note },
            };
            verdict(outcome, f.evaluations)
        }
        Backend::Smt { command } => {
            let outcome = match run_solver(command, &emit_smt(o)) {
                SolverAnswer::Unsat => Outcome::HoldsProved,
                SolverAnswer::Unknown(reason) => Outcome::Unknown { reason },
                SolverAnswer::Sat(model) => {
                    let model = smt::model_for(o, &model);
                    match validate_model(program, bounds, o, &model) {
                        Ok((witness, trace)) => Outcome::Violated { witness, trace },
                        Err(reason) => Outcome::Unknown { reason },
                    }
                }
            };
            verdict(outcome, 1)
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub summary: ExplorationSummary,
    pub verdicts: Vec<Verdict>,
    pub elapsed_ms: u128,
}

impl CheckReport {
    /// First violation in exploration order.
    pub fn first_violation(&self) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.is_violated())
    }

    /// Every obligation proved and exploration complete.
    pub fn verified(&self) -> bool {
        self.summary.complete && self.verdicts.iter().all(Verdict::is_proved)
    }
}

/// Explores `program` (already lowered) and checks every obligation, up to
/// `config.jobs` at a time. Verdicts are in exploration order.
pub fn check_program(program: &Program, bounds: &Bounds, config: &CheckConfig) -> Result<CheckReport, CheckError> {
    let start = Instant::now();
    let exploration = explore(program, bounds)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| CheckError::Pool(e.to_string()))?;
    let verdicts = pool.install(|| {
        exploration
            .obligations
            .par_iter()
            .map(|o| check_obligation(program, bounds, o, config))
            .collect()
    });
    Ok(CheckReport {
        summary: exploration.summary,
        verdicts,
        elapsed_ms: start.elapsed().as_millis(),
    })
}

/// Writes `emit_smt` output for every obligation into `dir` as
/// `obligation_<index>.smt2`; returns the file names.
pub fn write_smt_files(obligations: &[AssertObligation], dir: &Path) -> std::io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for o in obligations {
        let name = format!("obligation_{}.smt2", o.index);
        std::fs::write(dir.join(&name), emit_smt(o))?;
        names.push(name);
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{lower, parse_program};

    fn lowered(src: &str) -> Program {
        lower(&parse_program(src).unwrap()).unwrap()
    }

    #[test]
    fn missing_solver_is_unknown() {
        let p = lowered("input real x; main { assert(x > 0); }");
        let config = CheckConfig {
            backend: Backend::Smt {
                command: "/nonexistent/solver-binary".into(),
            },
            ..Default::default()
        };
        let r = check_program(&p, &Bounds::default(), &config).unwrap();
        assert_eq!(
            r.verdicts[0].outcome,
            Outcome::Unknown {
                reason: "solver unavailable".into()
            }
        );
    }

    #[test]
    fn builtin_violation_is_replay_validated() {
        let p = lowered("input real x; real y; main { havoc y; assume(y > x); assert(y < 10) : \"small\"; }");
        let r = check_program(&p, &Bounds::default(), &CheckConfig::default()).unwrap();
        let v = r.first_violation().expect("violation");
        let Outcome::Violated { witness, trace } = &v.outcome else { unreachable!() };
        assert_eq!(witness.havoc_order, ["y!0"]);
        assert!(trace.violates(0, "small"));
        assert!(!r.verified());
    }

    #[test]
    fn builtin_never_proves() {
        let p = lowered("input real x; main { assume(x > 0); assert(x > 0); }");
        let r = check_program(&p, &Bounds::default(), &CheckConfig::default()).unwrap();
        assert!(matches!(r.verdicts[0].outcome, Outcome::Unknown { .. }));
    }

    #[test]
    fn seeds_differ_per_obligation() {
        assert_ne!(obligation_seed(0, 0), obligation_seed(0, 1));
        assert_eq!(obligation_seed(5, 3), obligation_seed(5, 3));
    }
}
