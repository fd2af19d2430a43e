//! Bounded symbolic exploration of lowered programs.
//!
//! Every path is explored depth first (then-branch before else-branch,
//! smaller choice values first). Each `assert` reached on a path yields one
//! [`AssertObligation`]: the path condition conjoined with the negated
//! assertion. After an assert the path continues under the asserted
//! condition.

mod simplify;

pub use simplify::simplify;

use crate::ir::{print_expr, Expr, Program, Stmt, VarSort};
use num_traits::{Signed, ToPrimitive};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::ControlFlow;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SymbolId(pub u32);

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

pub type SymExpr = Expr<SymbolId>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Input { name: String },
    /// The `ordinal`-th havoc event along its path.
    Havoc { var: String, ordinal: usize },
    /// Global read before any assignment.
    Uninit { var: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SymbolInfo {
    pub id: SymbolId,
    pub name: String,
    pub sort: VarSort,
    pub origin: Origin,
}

/// Concrete values for integer inputs plus exploration budgets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub inputs: BTreeMap<String, i64>,
    /// Statements executed per path before it is abandoned.
    pub step_budget: u64,
    /// Paths (finished or abandoned) before exploration stops.
    pub path_budget: u64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            inputs: BTreeMap::new(),
            step_budget: 1_000_000,
            path_budget: 1_000_000,
        }
    }
}

impl Bounds {
    pub fn with(pairs: &[(&str, i64)]) -> Self {
        Bounds {
            inputs: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            ..Default::default()
        }
    }
}

/// What a replay needs to follow one path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PathRef {
    pub choices: Vec<i64>,
    pub havocs: Vec<SymbolId>,
    /// Position of the obligation's assert among the asserts on the path.
    pub assert_ordinal: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssertObligation {
    /// Emission order within the exploration.
    pub index: usize,
    pub label: String,
    pub path_condition: Vec<SymExpr>,
    pub negated_assertion: SymExpr,
    /// Symbolic inputs, the path's havocs, and uninitialized globals that
    /// the formulas mention.
    pub symbols: BTreeMap<SymbolId, SymbolInfo>,
    pub path: PathRef,
}

impl AssertObligation {
    pub fn name_of(&self, id: SymbolId) -> &str {
        self.symbols
            .get(&id)
            .map(|s| s.name.as_str())
            .unwrap_or("?")
    }

    /// Renders an expression with symbol names.
    pub fn render(&self, e: &SymExpr) -> String {
        print_expr(&e.map_vars(&mut |id| Expr::<String>::Var(self.name_of(*id).to_string())))
    }

    /// Every formula of the obligation: path conjuncts, then the negation.
    pub fn formulas(&self) -> impl Iterator<Item = &SymExpr> {
        self.path_condition
            .iter()
            .chain(std::iter::once(&self.negated_assertion))
    }
}

impl fmt::Display for AssertObligation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "obligation {} [{}]", self.index, self.label)?;
        for c in &self.path_condition {
            writeln!(f, "  path: {}", self.render(c))?;
        }
        write!(f, "  negated: {}", self.render(&self.negated_assertion))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExplorationSummary {
    /// Paths that reached the end of `main`.
    pub paths: u64,
    pub obligations: u64,
    /// Branches cut because their guard or assumption folded to false.
    pub pruned_infeasible: u64,
    /// Paths dropped because the statement budget ran out.
    pub abandoned: u64,
    /// False when a budget cut exploration short.
    pub complete: bool,
    /// True when the consumer asked to stop early.
    pub stopped: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExploreError {
    #[error("program still contains evolve blocks; lower it first")]
    Unlowered,
    #[error("{what} `{expr}` does not reduce to a concrete integer under the given bounds")]
    SymbolicBound { what: &'static str, expr: String },
    #[error("{what} evaluates to negative value {value}")]
    NegativeBound { what: &'static str, value: String },
    #[error("bound given for `{0}`, which is not an integer input")]
    UnknownBound(String),
    #[error("call to unknown function `{0}`")]
    UnknownFunction(String),
}

#[derive(Clone, Debug)]
enum Frame<'p> {
    Block {
        stmts: &'p [Stmt],
        next: usize,
    },
    Loop {
        index: &'p str,
        body: &'p [Stmt],
        next: i64,
        count: i64,
        shadowed: Option<SymExpr>,
    },
}

#[derive(Clone, Debug)]
struct SymState<'p> {
    store: BTreeMap<String, SymExpr>,
    path: Vec<SymExpr>,
    havocs: Vec<SymbolId>,
    choices: Vec<i64>,
    asserts: usize,
    steps_left: u64,
    frames: Vec<Frame<'p>>,
}

enum Step<'p> {
    Continue,
    Fork(Vec<SymState<'p>>),
    Infeasible,
    Finished,
    OutOfSteps,
    Stop,
}

struct Explorer<'p, F> {
    program: &'p Program,
    bounds: &'p Bounds,
    symbols: BTreeMap<SymbolId, SymbolInfo>,
    /// Symbols shared by every path (inputs, uninitialized globals).
    base_symbols: Vec<SymbolId>,
    havoc_count: u64,
    summary: ExplorationSummary,
    sink: F,
}

impl<'p, F: FnMut(AssertObligation) -> ControlFlow<()>> Explorer<'p, F> {
    fn new_symbol(&mut self, name: String, sort: VarSort, origin: Origin) -> SymbolId {
        let id = SymbolId(self.symbols.len() as u32);
        self.symbols.insert(
            id,
            SymbolInfo {
                id,
                name,
                sort,
                origin,
            },
        );
        id
    }

    fn subst(&self, state: &SymState<'p>, e: &Expr) -> SymExpr {
        simplify(&e.map_vars(&mut |v: &String| {
            state
                .store
                .get(v)
                .cloned()
                .expect("validated program binds every variable")
        }))
    }

    fn concrete(&self, state: &SymState<'p>, e: &Expr, what: &'static str) -> Result<i64, ExploreError> {
        match self.subst(state, e) {
            Expr::Const(c) if c.is_integer() => {
                if c.is_negative() {
                    return Err(ExploreError::NegativeBound {
                        what,
                        value: c.to_string(),
                    });
                }
                c.to_integer().to_i64().ok_or(ExploreError::SymbolicBound {
                    what,
                    expr: print_expr(e),
                })
            }
            _ => Err(ExploreError::SymbolicBound {
                what,
                expr: print_expr(e),
            }),
        }
    }

    fn initial_state(&mut self) -> Result<Option<SymState<'p>>, ExploreError> {
        for name in self.bounds.inputs.keys() {
            match self.program.input(name) {
                Some(i) if i.sort == VarSort::Int => {}
                _ => return Err(ExploreError::UnknownBound(name.clone())),
            }
        }
        let mut state = SymState {
            store: BTreeMap::new(),
            path: Vec::new(),
            havocs: Vec::new(),
            choices: Vec::new(),
            asserts: 0,
            steps_left: self.bounds.step_budget,
            frames: vec![Frame::Block {
                stmts: &self.program.main,
                next: 0,
            }],
        };
        let mut feasible = true;
        for input in &self.program.inputs {
            let value = match self.bounds.inputs.get(&input.name) {
                Some(v) => Expr::int(*v),
                None => {
                    let id = self.new_symbol(
                        input.name.clone(),
                        input.sort,
                        Origin::Input {
                            name: input.name.clone(),
                        },
                    );
                    self.base_symbols.push(id);
                    Expr::Var(id)
                }
            };
            state.store.insert(input.name.clone(), value);
            if let Some(a) = &input.assume {
                match self.subst(&state, a) {
                    Expr::Bool(true) => {}
                    Expr::Bool(false) => feasible = false,
                    g => state.path.push(g),
                }
            }
        }
        for g in &self.program.globals {
            let value = match &g.init {
                Some(init) => self.subst(&state, init),
                None => {
                    let id = self.new_symbol(
                        format!("{}!init", g.name),
                        g.sort,
                        Origin::Uninit { var: g.name.clone() },
                    );
                    self.base_symbols.push(id);
                    Expr::Var(id)
                }
            };
            state.store.insert(g.name.clone(), value);
        }
        if !feasible {
            self.summary.pruned_infeasible += 1;
            return Ok(None);
        }
        Ok(Some(state))
    }

    fn emit(&mut self, state: &SymState<'p>, cond: &SymExpr, label: &str) -> ControlFlow<()> {
        let negated_assertion = simplify(&cond.clone().not());
        let mut referenced = std::collections::BTreeSet::new();
        for f in state.path.iter().chain(std::iter::once(&negated_assertion)) {
            f.for_each_var(&mut |s| {
                referenced.insert(*s);
            });
        }
        let mut symbols = BTreeMap::new();
        for id in self.base_symbols.iter().chain(&state.havocs) {
            let info = &self.symbols[id];
            let uninit = matches!(info.origin, Origin::Uninit { .. });
            if !uninit || referenced.contains(id) {
                symbols.insert(*id, info.clone());
            }
        }
        let obligation = AssertObligation {
            index: self.summary.obligations as usize,
            label: label.to_string(),
            path_condition: state.path.clone(),
            negated_assertion,
            symbols,
            path: PathRef {
                choices: state.choices.clone(),
                havocs: state.havocs.clone(),
                assert_ordinal: state.asserts,
            },
        };
        self.summary.obligations += 1;
        (self.sink)(obligation)
    }

    fn step(&mut self, state: &mut SymState<'p>) -> Result<Step<'p>, ExploreError> {
        let stmt = loop {
            let Some(frame) = state.frames.last_mut() else {
                return Ok(Step::Finished);
            };
            match frame {
                Frame::Block { stmts, next } => {
                    if let Some(s) = stmts.get(*next) {
                        *next += 1;
                        break s;
                    }
                    state.frames.pop();
                }
                Frame::Loop {
                    index,
                    body,
                    next,
                    count,
                    shadowed,
                } => {
                    if *next < *count {
                        let (index, body) = (*index, *body);
                        state.store.insert(index.to_string(), Expr::int(*next));
                        *next += 1;
                        state.frames.push(Frame::Block {
                            stmts: body,
                            next: 0,
                        });
                    } else {
                        let index = index.to_string();
                        match shadowed.take() {
                            Some(old) => state.store.insert(index, old),
                            None => state.store.remove(&index),
                        };
                        state.frames.pop();
                    }
                }
            }
        };

        if state.steps_left == 0 {
            return Ok(Step::OutOfSteps);
        }
        state.steps_left -= 1;

        match stmt {
            Stmt::Assign { var, value } => {
                let v = self.subst(state, value);
                state.store.insert(var.clone(), v);
            }
            Stmt::Havoc(var) => {
                let sort = self.program.sort_of(var).unwrap_or(VarSort::Int);
                let id = self.new_symbol(
                    format!("{var}!{}", self.havoc_count),
                    sort,
                    Origin::Havoc {
                        var: var.clone(),
                        ordinal: state.havocs.len(),
                    },
                );
                self.havoc_count += 1;
                state.havocs.push(id);
                state.store.insert(var.clone(), Expr::Var(id));
            }
            Stmt::Assume(c) => match self.subst(state, c) {
                Expr::Bool(true) => {}
                Expr::Bool(false) => {
                    self.summary.pruned_infeasible += 1;
                    return Ok(Step::Infeasible);
                }
                g => state.path.push(g),
            },
            Stmt::Assert { cond, label } => {
                let g = self.subst(state, cond);
                if self.emit(state, &g, label).is_break() {
                    return Ok(Step::Stop);
                }
                state.asserts += 1;
                match g {
                    Expr::Bool(true) => {}
                    Expr::Bool(false) => return Ok(Step::Infeasible),
                    g => state.path.push(g),
                }
            }
            Stmt::If {
                cond,
                then_block,
                else_block,
            } => match self.subst(state, cond) {
                Expr::Bool(b) => {
                    self.summary.pruned_infeasible += 1;
                    state.frames.push(Frame::Block {
                        stmts: if b { then_block } else { else_block },
                        next: 0,
                    });
                }
                g => {
                    let mut then_state = state.clone();
                    let mut else_state = state.clone();
                    then_state.path.push(g.clone());
                    then_state.frames.push(Frame::Block {
                        stmts: then_block,
                        next: 0,
                    });
                    else_state.path.push(simplify(&g.not()));
                    else_state.frames.push(Frame::Block {
                        stmts: else_block,
                        next: 0,
                    });
                    return Ok(Step::Fork(vec![then_state, else_state]));
                }
            },
            Stmt::Seq(b) => state.frames.push(Frame::Block { stmts: b, next: 0 }),
            Stmt::Choose { var, bound } => {
                let n = self.concrete(state, bound, "choice bound")?;
                if n == 0 {
                    self.summary.pruned_infeasible += 1;
                    return Ok(Step::Infeasible);
                }
                let fork = (0..n)
                    .map(|v| {
                        let mut s = state.clone();
                        s.store.insert(var.clone(), Expr::int(v));
                        s.choices.push(v);
                        s
                    })
                    .collect();
                return Ok(Step::Fork(fork));
            }
            Stmt::For { index, count, body } => {
                let count = self.concrete(state, count, "loop count")?;
                let shadowed = state.store.get(index).cloned();
                state.frames.push(Frame::Loop {
                    index,
                    body,
                    next: 0,
                    count,
                    shadowed,
                });
            }
            Stmt::Evolve(_) => return Err(ExploreError::Unlowered),
            Stmt::Call(name) => {
                let f = self
                    .program
                    .function(name)
                    .ok_or_else(|| ExploreError::UnknownFunction(name.clone()))?;
                state.frames.push(Frame::Block {
                    stmts: &f.body,
                    next: 0,
                });
            }
            Stmt::Print => {}
        }
        Ok(Step::Continue)
    }

    fn run(mut self) -> Result<ExplorationSummary, ExploreError> {
        if self.program.has_evolve() {
            return Err(ExploreError::Unlowered);
        }
        self.summary.complete = true;
        let Some(initial) = self.initial_state()? else {
            return Ok(self.summary);
        };
        let mut stack = vec![initial];
        while let Some(mut state) = stack.pop() {
            if self.summary.paths + self.summary.abandoned >= self.bounds.path_budget {
                self.summary.complete = false;
                break;
            }
            loop {
                match self.step(&mut state)? {
                    Step::Continue => continue,
                    Step::Fork(mut succ) => {
                        // first successor must be explored first
                        succ.reverse();
                        stack.extend(succ);
                        break;
                    }
                    Step::Infeasible => break,
                    Step::Finished => {
                        self.summary.paths += 1;
                        break;
                    }
                    Step::OutOfSteps => {
                        self.summary.abandoned += 1;
                        self.summary.complete = false;
                        break;
                    }
                    Step::Stop => {
                        self.summary.stopped = true;
                        return Ok(self.summary);
                    }
                }
            }
        }
        Ok(self.summary)
    }
}

/// Streams obligations to `sink` in deterministic depth-first order.
/// Returning `ControlFlow::Break` from the sink stops exploration.
pub fn explore_each(
    program: &Program,
    bounds: &Bounds,
    sink: impl FnMut(AssertObligation) -> ControlFlow<()>,
) -> Result<ExplorationSummary, ExploreError> {
    Explorer {
        program,
        bounds,
        symbols: BTreeMap::new(),
        base_symbols: Vec::new(),
        havoc_count: 0,
        summary: ExplorationSummary::default(),
        sink,
    }
    .run()
}

#[derive(Clone, Debug)]
pub struct Exploration {
    pub obligations: Vec<AssertObligation>,
    pub summary: ExplorationSummary,
}

/// Collects every obligation of a lowered program.
pub fn explore(program: &Program, bounds: &Bounds) -> Result<Exploration, ExploreError> {
    let mut obligations = Vec::new();
    let summary = explore_each(program, bounds, |o| {
        obligations.push(o);
        ControlFlow::Continue(())
    })?;
    Ok(Exploration {
        obligations,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{lower, parse_program};

    fn run(src: &str, bounds: &Bounds) -> Exploration {
        let p = lower(&parse_program(src).unwrap()).unwrap();
        explore(&p, bounds).unwrap()
    }

    #[test]
    fn assume_then_assert() {
        let ex = run("input real x; main { assume(x > 0); assert(x > 0); }", &Bounds::default());
        assert_eq!(ex.obligations.len(), 1);
        let o = &ex.obligations[0];
        assert_eq!(o.path_condition.len(), 1);
        assert_eq!(o.render(&o.path_condition[0]), "x > 0");
        assert_eq!(o.render(&o.negated_assertion), "!(x > 0)");
        assert_eq!(ex.summary.paths, 1);
        assert!(ex.summary.complete);
    }

    #[test]
    fn branches_are_explored_then_first() {
        let ex = run(
            "input real x; main { if (x > 0) { assert(x > 1) : \"a\"; } else { assert(x < 1) : \"b\"; } }",
            &Bounds::default(),
        );
        let labels: Vec<_> = ex.obligations.iter().map(|o| o.label.as_str()).collect();
        assert_eq!(labels, ["a", "b"]);
        assert_eq!(ex.obligations[1].render(&ex.obligations[1].path_condition[0]), "!(x > 0)");
        assert_eq!(ex.summary.paths, 2);
    }

    #[test]
    fn constant_guards_prune() {
        let ex = run(
            "real x = 1; main { if (x > 2) { assert(false); } assume(x < 0); assert(true); }",
            &Bounds::default(),
        );
        assert_eq!(ex.obligations.len(), 0);
        assert_eq!(ex.summary.pruned_infeasible, 2);
        assert_eq!(ex.summary.paths, 0);
    }

    #[test]
    fn choices_enumerate_half_open_range() {
        let ex = run(
            "input int M; int m; real x; main { m = choose(M); x = m; assert(x < 2) : \"small\"; }",
            &Bounds::with(&[("M", 3)]),
        );
        let choices: Vec<_> = ex.obligations.iter().map(|o| o.path.choices.clone()).collect();
        assert_eq!(choices, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(ex.obligations[2].negated_assertion, Expr::Bool(true));
        assert_eq!(ex.summary.paths, 2);
    }

    #[test]
    fn havocs_are_fresh_per_path_and_iteration() {
        let ex = run(
            "input int N; real y; main { for i in 0..N { havoc y; assert(y > 0); } }",
            &Bounds::with(&[("N", 3)]),
        );
        let last = ex.obligations.last().unwrap();
        assert_eq!(last.path.havocs.len(), 3);
        let names: Vec<_> = last.path.havocs.iter().map(|h| last.name_of(*h)).collect();
        assert_eq!(names, ["y!0", "y!1", "y!2"]);
    }

    #[test]
    fn symbolic_loop_bound_is_an_error() {
        let p = lower(&parse_program("input int N; main { for i in 0..N { print; } }").unwrap()).unwrap();
        assert!(matches!(
            explore(&p, &Bounds::default()),
            Err(ExploreError::SymbolicBound { .. })
        ));
        assert!(matches!(
            explore(&p, &Bounds::with(&[("Q", 1)])),
            Err(ExploreError::UnknownBound(_))
        ));
    }

    #[test]
    fn step_budget_marks_incomplete() {
        let p = lower(&parse_program("real x; main { for i in 0..100 { x = x + 1; } }").unwrap()).unwrap();
        let b = Bounds {
            step_budget: 10,
            ..Default::default()
        };
        let ex = explore(&p, &b).unwrap();
        assert!(!ex.summary.complete);
        assert_eq!(ex.summary.abandoned, 1);
    }

    #[test]
    fn sink_can_stop_exploration() {
        let p = lower(&parse_program("main { assert(true); assert(true); }").unwrap()).unwrap();
        let mut seen = 0;
        let summary = explore_each(&p, &Bounds::default(), |_| {
            seen += 1;
            ControlFlow::Break(())
        })
        .unwrap();
        assert_eq!(seen, 1);
        assert!(summary.stopped);
    }
}
