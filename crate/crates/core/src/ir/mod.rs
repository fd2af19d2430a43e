//! The hybrid specification language: syntax tree, parser, printer,
//! ODE-block lowering and exact concrete evaluation.

mod eval;
mod lower;
mod parser;
mod printer;

pub use eval::{eval, eval_arith, eval_bool, EvalError, Value};
pub use lower::{inline_calls, lower, lower_evolve};
pub use parser::{parse_expr, parse_program, ParseError};
pub use printer::{print_expr, print_program};

use crate::rational::{self, Rational};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    pub fn holds<T: PartialOrd>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
        }
    }

    /// The operator obtained by swapping the operands.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Gt => CmpOp::Lt,
        }
    }
}

/// Arithmetic or boolean expression. Program text uses variable names as
/// leaves; the symbolic executor instantiates `V` with symbol ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr<V = String> {
    Const(Rational),
    Bool(bool),
    Var(V),
    Neg(Box<Expr<V>>),
    Arith(ArithOp, Box<Expr<V>>, Box<Expr<V>>),
    /// Power with a literal nonnegative exponent.
    Pow(Box<Expr<V>>, u32),
    Cmp(CmpOp, Box<Expr<V>>, Box<Expr<V>>),
    And(Box<Expr<V>>, Box<Expr<V>>),
    Or(Box<Expr<V>>, Box<Expr<V>>),
    Not(Box<Expr<V>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sort {
    Arith,
    Bool,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sort::Arith => "arithmetic",
            Sort::Bool => "boolean",
        })
    }
}

impl<V> Expr<V> {
    pub fn var(v: impl Into<V>) -> Self {
        Expr::Var(v.into())
    }

    pub fn int(n: i64) -> Self {
        Expr::Const(rational::int(n))
    }

    pub fn constant(r: Rational) -> Self {
        Expr::Const(r)
    }

    pub fn pow(self, k: u32) -> Self {
        Expr::Pow(Box::new(self), k)
    }

    pub fn cmp(op: CmpOp, lhs: Self, rhs: Self) -> Self {
        Expr::Cmp(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn lt(self, rhs: Self) -> Self {
        Self::cmp(CmpOp::Lt, self, rhs)
    }

    pub fn le(self, rhs: Self) -> Self {
        Self::cmp(CmpOp::Le, self, rhs)
    }

    pub fn eq_(self, rhs: Self) -> Self {
        Self::cmp(CmpOp::Eq, self, rhs)
    }

    pub fn ge(self, rhs: Self) -> Self {
        Self::cmp(CmpOp::Ge, self, rhs)
    }

    pub fn gt(self, rhs: Self) -> Self {
        Self::cmp(CmpOp::Gt, self, rhs)
    }

    pub fn and(self, rhs: Self) -> Self {
        Expr::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: Self) -> Self {
        Expr::Or(Box::new(self), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        Expr::Not(Box::new(self))
    }

    /// Syntactic sort. Variables are always arithmetic.
    pub fn sort(&self) -> Sort {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Neg(_) | Expr::Arith(..) | Expr::Pow(..) => {
                Sort::Arith
            }
            Expr::Bool(_) | Expr::Cmp(..) | Expr::And(..) | Expr::Or(..) | Expr::Not(_) => {
                Sort::Bool
            }
        }
    }

    /// Checks operand sorts recursively and returns the sort of `self`.
    pub fn check_sorts(&self) -> Result<Sort, Sort> {
        let want = |e: &Expr<V>, s: Sort| -> Result<(), Sort> {
            let got = e.check_sorts()?;
            if got == s {
                Ok(())
            } else {
                Err(got)
            }
        };
        match self {
            Expr::Const(_) | Expr::Var(_) => Ok(Sort::Arith),
            Expr::Bool(_) => Ok(Sort::Bool),
            Expr::Neg(a) | Expr::Pow(a, _) => want(a, Sort::Arith).map(|_| Sort::Arith),
            Expr::Arith(_, a, b) => {
                want(a, Sort::Arith)?;
                want(b, Sort::Arith)?;
                Ok(Sort::Arith)
            }
            Expr::Cmp(_, a, b) => {
                want(a, Sort::Arith)?;
                want(b, Sort::Arith)?;
                Ok(Sort::Bool)
            }
            Expr::And(a, b) | Expr::Or(a, b) => {
                want(a, Sort::Bool)?;
                want(b, Sort::Bool)?;
                Ok(Sort::Bool)
            }
            Expr::Not(a) => want(a, Sort::Bool).map(|_| Sort::Bool),
        }
    }

    /// Visits every variable leaf, left to right.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a V)) {
        match self {
            Expr::Const(_) | Expr::Bool(_) => {}
            Expr::Var(v) => f(v),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Not(a) => a.for_each_var(f),
            Expr::Arith(_, a, b) | Expr::Cmp(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }

    /// Rebuilds the tree with every variable replaced by `f(v)`.
    pub fn map_vars<W>(&self, f: &mut impl FnMut(&V) -> Expr<W>) -> Expr<W> {
        let bx = |e: Expr<W>| Box::new(e);
        match self {
            Expr::Const(c) => Expr::Const(c.clone()),
            Expr::Bool(b) => Expr::Bool(*b),
            Expr::Var(v) => f(v),
            Expr::Neg(a) => Expr::Neg(bx(a.map_vars(f))),
            Expr::Pow(a, k) => Expr::Pow(bx(a.map_vars(f)), *k),
            Expr::Not(a) => Expr::Not(bx(a.map_vars(f))),
            Expr::Arith(op, a, b) => Expr::Arith(*op, bx(a.map_vars(f)), bx(b.map_vars(f))),
            Expr::Cmp(op, a, b) => Expr::Cmp(*op, bx(a.map_vars(f)), bx(b.map_vars(f))),
            Expr::And(a, b) => Expr::And(bx(a.map_vars(f)), bx(b.map_vars(f))),
            Expr::Or(a, b) => Expr::Or(bx(a.map_vars(f)), bx(b.map_vars(f))),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Bool(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Not(a) => 1 + a.size(),
            Expr::Arith(_, a, b) | Expr::Cmp(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                1 + a.size() + b.size()
            }
        }
    }
}

macro_rules! arith_operator {
    ($tr:ident, $method:ident, $op:expr) => {
        impl<V> std::ops::$tr for Expr<V> {
            type Output = Expr<V>;
            fn $method(self, rhs: Expr<V>) -> Expr<V> {
                Expr::Arith($op, Box::new(self), Box::new(rhs))
            }
        }
    };
}

arith_operator!(Add, add, ArithOp::Add);
arith_operator!(Sub, sub, ArithOp::Sub);
arith_operator!(Mul, mul, ArithOp::Mul);
arith_operator!(Div, div, ArithOp::Div);

impl<V> std::ops::Neg for Expr<V> {
    type Output = Expr<V>;
    fn neg(self) -> Expr<V> {
        Expr::Neg(Box::new(self))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarSort {
    Int,
    Real,
}

impl VarSort {
    pub fn keyword(self) -> &'static str {
        match self {
            VarSort::Int => "int",
            VarSort::Real => "real",
        }
    }
}

/// Continuous evolution `v' = rhs` for every listed ODE, integrated for a
/// nondeterministic number of steps of size `dt`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evolve {
    pub time: Option<String>,
    pub odes: Vec<(String, Expr)>,
    pub dt: String,
    pub max_steps: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Assign { var: String, value: Expr },
    Havoc(String),
    Assume(Expr),
    Assert { cond: Expr, label: String },
    If { cond: Expr, then_block: Vec<Stmt>, else_block: Vec<Stmt> },
    Seq(Vec<Stmt>),
    /// Nondeterministic integer in `[0, bound)`.
    Choose { var: String, bound: Expr },
    For { index: String, count: Expr, body: Vec<Stmt> },
    Evolve(Evolve),
    Call(String),
    Print,
}

impl Stmt {
    pub fn assign(var: impl Into<String>, value: Expr) -> Self {
        Stmt::Assign {
            var: var.into(),
            value,
        }
    }

    pub fn assert(cond: Expr, label: impl Into<String>) -> Self {
        Stmt::Assert {
            cond,
            label: label.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputDecl {
    pub name: String,
    pub sort: VarSort,
    pub assume: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalDecl {
    pub name: String,
    pub sort: VarSort,
    pub init: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub body: Vec<Stmt>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub inputs: Vec<InputDecl>,
    pub globals: Vec<GlobalDecl>,
    pub functions: Vec<Function>,
    pub main: Vec<Stmt>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("undeclared variable `{0}`")]
    Undeclared(String),
    #[error("`{0}` is declared more than once")]
    Duplicate(String),
    #[error("call to unknown function `{0}`")]
    UnknownFunction(String),
    #[error("recursive call cycle: {}", .0.join(" -> "))]
    RecursiveCall(Vec<String>),
    #[error("expected a {expected} expression in {context}")]
    SortMismatch { expected: Sort, context: String },
    #[error("assumption on input `{input}` mentions non-input `{var}`")]
    ImpureInputAssumption { input: String, var: String },
    #[error("evolve block references undeclared {role} `{name}`")]
    EvolveUndeclared { role: &'static str, name: String },
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn input(&self, name: &str) -> Option<&InputDecl> {
        self.inputs.iter().find(|i| i.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&GlobalDecl> {
        self.globals.iter().find(|g| g.name == name)
    }

    /// Declared sort of an input or global.
    pub fn sort_of(&self, name: &str) -> Option<VarSort> {
        self.input(name)
            .map(|i| i.sort)
            .or_else(|| self.global(name).map(|g| g.sort))
    }

    /// Every input and global name, in declaration order.
    pub fn declared(&self) -> impl Iterator<Item = &str> {
        self.inputs
            .iter()
            .map(|i| i.name.as_str())
            .chain(self.globals.iter().map(|g| g.name.as_str()))
    }

    /// True when any statement (including function bodies) is an Evolve.
    pub fn has_evolve(&self) -> bool {
        fn any(stmts: &[Stmt]) -> bool {
            stmts.iter().any(|s| match s {
                Stmt::Evolve(_) => true,
                Stmt::If {
                    then_block,
                    else_block,
                    ..
                } => any(then_block) || any(else_block),
                Stmt::Seq(b) | Stmt::For { body: b, .. } => any(b),
                _ => false,
            })
        }
        any(&self.main) || self.functions.iter().any(|f| any(&f.body))
    }

    /// Checks declarations, sorts and the call graph.
    pub fn validate(&self) -> Result<(), IrError> {
        let mut seen = BTreeSet::new();
        for name in self.declared() {
            if !seen.insert(name) {
                return Err(IrError::Duplicate(name.to_string()));
            }
        }
        let mut fnames = BTreeSet::new();
        for f in &self.functions {
            if !fnames.insert(f.name.as_str()) {
                return Err(IrError::Duplicate(f.name.clone()));
            }
        }

        let mut input_names = BTreeSet::new();
        for input in &self.inputs {
            input_names.insert(input.name.as_str());
            if let Some(a) = &input.assume {
                expect_sort(a, Sort::Bool, &format!("assumption on `{}`", input.name))?;
                let mut bad = None;
                a.for_each_var(&mut |v| {
                    if bad.is_none() && !input_names.contains(v.as_str()) {
                        bad = Some(v.clone());
                    }
                });
                if let Some(var) = bad {
                    return Err(if self.sort_of(&var).is_some() {
                        IrError::ImpureInputAssumption {
                            input: input.name.clone(),
                            var,
                        }
                    } else {
                        IrError::Undeclared(var)
                    });
                }
            }
        }

        let globals: BTreeSet<&str> = self.declared().collect();
        for g in &self.globals {
            if let Some(init) = &g.init {
                expect_sort(init, Sort::Arith, &format!("initializer of `{}`", g.name))?;
                check_vars(init, &globals, &[])?;
            }
        }
        let mut scope = Vec::new();
        for f in &self.functions {
            self.check_block(&f.body, &globals, &mut scope)?;
        }
        self.check_block(&self.main, &globals, &mut scope)?;
        self.check_calls()
    }

    fn check_block<'a>(
        &'a self,
        stmts: &'a [Stmt],
        globals: &BTreeSet<&str>,
        scope: &mut Vec<&'a str>,
    ) -> Result<(), IrError> {
        let declared = |v: &str, scope: &[&str]| globals.contains(v) || scope.contains(&v);
        for stmt in stmts {
            match stmt {
                Stmt::Assign { var, value } => {
                    if !declared(var, scope) {
                        return Err(IrError::Undeclared(var.clone()));
                    }
                    expect_sort(value, Sort::Arith, &format!("assignment to `{var}`"))?;
                    check_vars(value, globals, scope)?;
                }
                Stmt::Havoc(var) => {
                    if !declared(var, scope) {
                        return Err(IrError::Undeclared(var.clone()));
                    }
                }
                Stmt::Assume(c) => {
                    expect_sort(c, Sort::Bool, "assume")?;
                    check_vars(c, globals, scope)?;
                }
                Stmt::Assert { cond, .. } => {
                    expect_sort(cond, Sort::Bool, "assert")?;
                    check_vars(cond, globals, scope)?;
                }
                Stmt::If {
                    cond,
                    then_block,
                    else_block,
                } => {
                    expect_sort(cond, Sort::Bool, "if condition")?;
                    check_vars(cond, globals, scope)?;
                    self.check_block(then_block, globals, scope)?;
                    self.check_block(else_block, globals, scope)?;
                }
                Stmt::Seq(b) => self.check_block(b, globals, scope)?,
                Stmt::Choose { var, bound } => {
                    if !declared(var, scope) {
                        return Err(IrError::Undeclared(var.clone()));
                    }
                    expect_sort(bound, Sort::Arith, "choose bound")?;
                    check_vars(bound, globals, scope)?;
                }
                Stmt::For { index, count, body } => {
                    expect_sort(count, Sort::Arith, "loop count")?;
                    check_vars(count, globals, scope)?;
                    scope.push(index);
                    let r = self.check_block(body, globals, scope);
                    scope.pop();
                    r?;
                }
                Stmt::Evolve(ev) => {
                    if !declared(&ev.dt, scope) {
                        return Err(IrError::EvolveUndeclared {
                            role: "time step",
                            name: ev.dt.clone(),
                        });
                    }
                    if let Some(t) = &ev.time {
                        if !declared(t, scope) {
                            return Err(IrError::EvolveUndeclared {
                                role: "time variable",
                                name: t.clone(),
                            });
                        }
                    }
                    expect_sort(&ev.max_steps, Sort::Arith, "evolve step bound")?;
                    let mut missing = None;
                    ev.max_steps.for_each_var(&mut |v| {
                        if missing.is_none() && !declared(v, scope) {
                            missing = Some(v.clone());
                        }
                    });
                    if let Some(name) = missing {
                        return Err(IrError::EvolveUndeclared {
                            role: "step bound",
                            name,
                        });
                    }
                    for (v, rhs) in &ev.odes {
                        if !declared(v, scope) {
                            return Err(IrError::Undeclared(v.clone()));
                        }
                        expect_sort(rhs, Sort::Arith, &format!("derivative of `{v}`"))?;
                        check_vars(rhs, globals, scope)?;
                    }
                }
                Stmt::Call(name) => {
                    if self.function(name).is_none() {
                        return Err(IrError::UnknownFunction(name.clone()));
                    }
                }
                Stmt::Print => {}
            }
        }
        Ok(())
    }

    fn check_calls(&self) -> Result<(), IrError> {
        fn callees(stmts: &[Stmt], out: &mut Vec<String>) {
            for s in stmts {
                match s {
                    Stmt::Call(n) => out.push(n.clone()),
                    Stmt::If {
                        then_block,
                        else_block,
                        ..
                    } => {
                        callees(then_block, out);
                        callees(else_block, out);
                    }
                    Stmt::Seq(b) | Stmt::For { body: b, .. } => callees(b, out),
                    _ => {}
                }
            }
        }
        let graph: BTreeMap<&str, Vec<String>> = self
            .functions
            .iter()
            .map(|f| {
                let mut out = Vec::new();
                callees(&f.body, &mut out);
                (f.name.as_str(), out)
            })
            .collect();

        // 0 = unvisited, 1 = on stack, 2 = done
        let mut color: BTreeMap<&str, u8> = BTreeMap::new();
        fn visit<'a>(
            node: &'a str,
            graph: &'a BTreeMap<&str, Vec<String>>,
            color: &mut BTreeMap<&'a str, u8>,
            stack: &mut Vec<&'a str>,
        ) -> Result<(), IrError> {
            color.insert(node, 1);
            stack.push(node);
            for next in graph.get(node).into_iter().flatten() {
                match color.get(next.as_str()).copied().unwrap_or(0) {
                    1 => {
                        let start = stack.iter().position(|n| *n == next).unwrap_or(0);
                        let mut cycle: Vec<String> =
                            stack[start..].iter().map(|s| s.to_string()).collect();
                        cycle.push(next.clone());
                        return Err(IrError::RecursiveCall(cycle));
                    }
                    0 => visit(next, graph, color, stack)?,
                    _ => {}
                }
            }
            stack.pop();
            color.insert(node, 2);
            Ok(())
        }
        for name in graph.keys() {
            if color.get(name).copied().unwrap_or(0) == 0 {
                visit(name, &graph, &mut color, &mut Vec::new())?;
            }
        }
        Ok(())
    }
}

fn expect_sort(e: &Expr, sort: Sort, context: &str) -> Result<(), IrError> {
    match e.check_sorts() {
        Ok(s) if s == sort => Ok(()),
        Ok(_) => Err(IrError::SortMismatch {
            expected: sort,
            context: context.to_string(),
        }),
        Err(inner) => Err(IrError::SortMismatch {
            expected: if inner == Sort::Arith {
                Sort::Bool
            } else {
                Sort::Arith
            },
            context: context.to_string(),
        }),
    }
}

fn check_vars(e: &Expr, globals: &BTreeSet<&str>, scope: &[&str]) -> Result<(), IrError> {
    let mut missing = None;
    e.for_each_var(&mut |v| {
        if missing.is_none() && !globals.contains(v.as_str()) && !scope.contains(&v.as_str()) {
            missing = Some(v.clone());
        }
    });
    match missing {
        Some(v) => Err(IrError::Undeclared(v)),
        None => Ok(()),
    }
}

impl serde::Serialize for VarSort {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.keyword())
    }
}
