use crate::ir::{eval_arith, eval_bool, print_expr, EvalError, Expr, Program, Stmt, VarSort};
use crate::rational::{serialize_rational, serialize_rational_map, Rational};
use num_traits::{Signed, ToPrimitive};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Concrete values for one path: symbolic inputs and uninitialized globals
/// by symbol name, havocs in path order, and choice resolutions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub label: String,
    /// Index of the obligation this witness falsifies.
    pub obligation: usize,
    pub bounds: BTreeMap<String, i64>,
    #[serde(serialize_with = "serialize_rational_map")]
    pub assignment: BTreeMap<String, Rational>,
    /// Havoc symbol names in the order the path executes them.
    pub havoc_order: Vec<String>,
    pub choices: Vec<i64>,
    /// Ordinal of the violated assert among the asserts on the path.
    pub target_assert: usize,
}

impl Witness {
    pub fn havoc_values(&self) -> impl Iterator<Item = (&str, Option<&Rational>)> {
        self.havoc_order
            .iter()
            .map(|h| (h.as_str(), self.assignment.get(h)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Assign {
        id: String,
        var: String,
        #[serde(serialize_with = "serialize_rational")]
        value: Rational,
    },
    Havoc {
        id: String,
        var: String,
        #[serde(serialize_with = "serialize_rational")]
        value: Rational,
    },
    Choose {
        id: String,
        var: String,
        value: i64,
    },
    Assume {
        id: String,
    },
    Assert {
        id: String,
        label: String,
        holds: bool,
    },
    Print {
        id: String,
        #[serde(serialize_with = "serialize_rational_map")]
        store: BTreeMap<String, Rational>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AssertOutcome {
    pub id: String,
    pub label: String,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub asserts: Vec<AssertOutcome>,
    #[serde(serialize_with = "serialize_rational_map")]
    pub final_store: BTreeMap<String, Rational>,
    /// Execution stopped after the target assert because the witness
    /// carries no data beyond it.
    pub truncated: bool,
}

impl Trace {
    /// First failing assert, if any.
    pub fn first_violation(&self) -> Option<(usize, &AssertOutcome)> {
        self.asserts.iter().enumerate().find(|(_, a)| !a.holds)
    }

    /// True when the assert at `ordinal` exists, carries `label` and fails.
    pub fn violates(&self, ordinal: usize, label: &str) -> bool {
        self.asserts
            .get(ordinal)
            .is_some_and(|a| !a.holds && a.label == label)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error("witness has no value for {0}")]
    WitnessIncomplete(String),
    #[error("assumption `{cond}` at {id} is violated by the witness")]
    AssumptionViolated { id: String, cond: String },
    #[error("choice {value} at {id} is outside [0, {bound})")]
    InvalidChoice { id: String, value: i64, bound: String },
    #[error("{what} at {id} is not a nonnegative integer")]
    BadCount { id: String, what: &'static str },
    #[error("evaluation failed at {id}: {source}")]
    Eval {
        id: String,
        #[source]
        source: EvalError,
    },
    #[error("program still contains evolve blocks; lower it first")]
    Unlowered,
    #[error("call to unknown function `{0}`")]
    UnknownFunction(String),
}

enum Halt {
    Error(ReplayError),
    /// Out of witness data after the target assert.
    Truncated,
}

impl From<ReplayError> for Halt {
    fn from(e: ReplayError) -> Self {
        Halt::Error(e)
    }
}

struct Replayer<'a> {
    program: &'a Program,
    witness: &'a Witness,
    store: BTreeMap<String, Rational>,
    havocs: usize,
    choices: usize,
    trace: Trace,
}

impl Replayer<'_> {
    fn target_seen(&self) -> bool {
        self.trace.asserts.len() > self.witness.target_assert
    }

    fn fail(&self, e: ReplayError) -> Halt {
        if self.target_seen() {
            Halt::Truncated
        } else {
            Halt::Error(e)
        }
    }

    fn arith(&self, e: &Expr, id: &str) -> Result<Rational, Halt> {
        eval_arith(e, &|v: &String| self.store.get(v).cloned()).map_err(|source| {
            self.fail(ReplayError::Eval {
                id: id.to_string(),
                source,
            })
        })
    }

    fn boolean(&self, e: &Expr, id: &str) -> Result<bool, Halt> {
        eval_bool(e, &|v: &String| self.store.get(v).cloned()).map_err(|source| {
            self.fail(ReplayError::Eval {
                id: id.to_string(),
                source,
            })
        })
    }

    fn count(&self, e: &Expr, id: &str, what: &'static str) -> Result<i64, Halt> {
        let v = self.arith(e, id)?;
        match v.is_integer().then(|| v.to_integer().to_i64()).flatten() {
            Some(n) if n >= 0 => Ok(n),
            _ => Err(self.fail(ReplayError::BadCount {
                id: id.to_string(),
                what,
            })),
        }
    }

    fn block(&mut self, stmts: &[Stmt], prefix: &str) -> Result<(), Halt> {
        for (k, s) in stmts.iter().enumerate() {
            self.stmt(s, &format!("{prefix}.{k}"))?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, id: &str) -> Result<(), Halt> {
        match s {
            Stmt::Assign { var, value } => {
                let v = self.arith(value, id)?;
                self.trace.events.push(TraceEvent::Assign {
                    id: id.to_string(),
                    var: var.clone(),
                    value: v.clone(),
                });
                self.store.insert(var.clone(), v);
            }
            Stmt::Havoc(var) => {
                let k = self.havocs;
                let value = self
                    .witness
                    .havoc_order
                    .get(k)
                    .and_then(|name| self.witness.assignment.get(name))
                    .cloned()
                    .ok_or_else(|| {
                        self.fail(ReplayError::WitnessIncomplete(format!("havoc #{k} of `{var}` at {id}")))
                    })?;
                self.havocs += 1;
                self.trace.events.push(TraceEvent::Havoc {
                    id: id.to_string(),
                    var: var.clone(),
                    value: value.clone(),
                });
                self.store.insert(var.clone(), value);
            }
            Stmt::Assume(c) => {
                if !self.boolean(c, id)? {
                    return Err(self.fail(ReplayError::AssumptionViolated {
                        id: id.to_string(),
                        cond: print_expr(c),
                    }));
                }
                self.trace.events.push(TraceEvent::Assume { id: id.to_string() });
            }
            Stmt::Assert { cond, label } => {
                let holds = self.boolean(cond, id)?;
                self.trace.events.push(TraceEvent::Assert {
                    id: id.to_string(),
                    label: label.clone(),
                    holds,
                });
                self.trace.asserts.push(AssertOutcome {
                    id: id.to_string(),
                    label: label.clone(),
                    holds,
                });
            }
            Stmt::If {
                cond,
                then_block,
                else_block,
            } => {
                if self.boolean(cond, id)? {
                    self.block(then_block, &format!("{id}.then"))?;
                } else {
                    self.block(else_block, &format!("{id}.else"))?;
                }
            }
            Stmt::Seq(b) => self.block(b, id)?,
            Stmt::Choose { var, bound } => {
                let n = self.count(bound, id, "choice bound")?;
                let value = *self.witness.choices.get(self.choices).ok_or_else(|| {
                    self.fail(ReplayError::WitnessIncomplete(format!("choice #{} at {id}", self.choices)))
                })?;
                if value < 0 || value >= n {
                    return Err(self.fail(ReplayError::InvalidChoice {
                        id: id.to_string(),
                        value,
                        bound: n.to_string(),
                    }));
                }
                self.choices += 1;
                self.trace.events.push(TraceEvent::Choose {
                    id: id.to_string(),
                    var: var.clone(),
                    value,
                });
                self.store.insert(var.clone(), Rational::from_integer(value.into()));
            }
            Stmt::For { index, count, body } => {
                let n = self.count(count, id, "loop count")?;
                let shadowed = self.store.get(index).cloned();
                for k in 0..n {
                    self.store.insert(index.clone(), Rational::from_integer(k.into()));
                    self.block(body, &format!("{id}.{k}"))?;
                }
                match shadowed {
                    Some(v) => self.store.insert(index.clone(), v),
                    None => self.store.remove(index),
                };
            }
            Stmt::Evolve(_) => return Err(Halt::Error(ReplayError::Unlowered)),
            Stmt::Call(name) => {
                let f = self
                    .program
                    .function(name)
                    .ok_or_else(|| ReplayError::UnknownFunction(name.clone()))?;
                self.block(&f.body, &format!("{id}.{name}"))?;
            }
            Stmt::Print => self.trace.events.push(TraceEvent::Print {
                id: id.to_string(),
                store: self.store.clone(),
            }),
        }
        Ok(())
    }
}

/// Executes `program` along the path described by `witness` with exact
/// rational arithmetic.
pub fn replay(program: &Program, witness: &Witness) -> Result<Trace, ReplayError> {
    if program.has_evolve() {
        return Err(ReplayError::Unlowered);
    }
    let mut r = Replayer {
        program,
        witness,
        store: BTreeMap::new(),
        havocs: 0,
        choices: 0,
        trace: Trace {
            events: Vec::new(),
            asserts: Vec::new(),
            final_store: BTreeMap::new(),
            truncated: false,
        },
    };
    for input in &program.inputs {
        let value = match (input.sort, witness.bounds.get(&input.name)) {
            (VarSort::Int, Some(b)) => Rational::from_integer((*b).into()),
            _ => witness
                .assignment
                .get(&input.name)
                .cloned()
                .ok_or_else(|| ReplayError::WitnessIncomplete(format!("input `{}`", input.name)))?,
        };
        if input.sort == VarSort::Int && !value.is_integer() {
            return Err(ReplayError::WitnessIncomplete(format!(
                "integer value for input `{}`",
                input.name
            )));
        }
        r.store.insert(input.name.clone(), value);
    }
    for input in &program.inputs {
        if let Some(a) = &input.assume {
            let id = format!("input.{}", input.name);
            match r.boolean(a, &id) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(ReplayError::AssumptionViolated {
                        id,
                        cond: print_expr(a),
                    })
                }
                Err(Halt::Error(e)) => return Err(e),
                Err(Halt::Truncated) => unreachable!("no assert precedes inputs"),
            }
        }
    }
    for g in &program.globals {
        let id = format!("global.{}", g.name);
        let value = match &g.init {
            Some(init) => match r.arith(init, &id) {
                Ok(v) => v,
                Err(Halt::Error(e)) => return Err(e),
                Err(Halt::Truncated) => unreachable!("no assert precedes globals"),
            },
            None => {
                let name = format!("{}!init", g.name);
                // reading an unassigned global without a witness value is
                // reported at the read, not here
                match witness.assignment.get(&name) {
                    Some(v) => v.clone(),
                    None => continue,
                }
            }
        };
        r.store.insert(g.name.clone(), value);
    }
    match r.block(&program.main, "main") {
        Ok(()) => {}
        Err(Halt::Truncated) => r.trace.truncated = true,
        Err(Halt::Error(e)) => return Err(e),
    }
    r.trace.final_store = r.store;
    Ok(r.trace)
}

impl Trace {
    /// Final value of `var`; the store is exact.
    pub fn value(&self, var: &str) -> Option<&Rational> {
        self.final_store.get(var)
    }

    pub fn any_negative(&self, var: &str) -> bool {
        self.value(var).is_some_and(|v| v.is_negative())
    }
}
