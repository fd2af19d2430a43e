//! Incomplete counterexample search over nonlinear real constraints.
//!
//! Equalities `s == e` are eliminated by substitution, constant bounds on
//! single symbols define a sampling box, and the remaining constraints are
//! compiled to a float tape whose residual is zero exactly on (float)
//! solutions. Latin-hypercube sampling and pattern search minimize the
//! residual; candidates are snapped to small-denominator rationals and
//! checked exactly.

use crate::ir::{eval_arith, eval_bool, ArithOp, CmpOp, Expr, VarSort};
use crate::rational::{from_f64_exact, snap, to_f64, Rational};
use crate::symexec::{simplify, AssertObligation, SymExpr, SymbolId};
use num_traits::One;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Falsification {
    /// Exact values for every symbol of the obligation, satisfying all of
    /// its formulas.
    pub model: Option<BTreeMap<SymbolId, Rational>>,
    /// Residual evaluations spent.
    pub evaluations: u64,
    pub note: String,
}

const ELITE: usize = 8;
const BLOCK: u64 = 64;
const EXACT_ATTEMPTS: usize = 256;

fn flatten(e: SymExpr, out: &mut Vec<SymExpr>) {
    match e {
        Expr::And(a, b) => {
            flatten(*a, out);
            flatten(*b, out);
        }
        Expr::Bool(true) => {}
        e => out.push(e),
    }
}

fn mentions(e: &SymExpr, s: SymbolId) -> bool {
    let mut found = false;
    e.for_each_var(&mut |v| found |= *v == s);
    found
}

fn substitute(e: &SymExpr, s: SymbolId, by: &SymExpr) -> SymExpr {
    e.map_vars(&mut |v| if *v == s { by.clone() } else { Expr::Var(*v) })
}

/// A real symbol defined by a top-level equality.
fn definition(e: &SymExpr, o: &AssertObligation) -> Option<(SymbolId, SymExpr)> {
    let Expr::Cmp(CmpOp::Eq, a, b) = e else { return None };
    let real = |s: &SymbolId| o.symbols.get(s).is_some_and(|i| i.sort == VarSort::Real);
    match (a.as_ref(), b.as_ref()) {
        (Expr::Var(s), rhs) if real(s) && !mentions(rhs, *s) => Some((*s, rhs.clone())),
        (lhs, Expr::Var(s)) if real(s) && !mentions(lhs, *s) => Some((*s, lhs.clone())),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Node {
    Const(u64),
    Sym(u32),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Pow(u32, u32),
}

#[derive(Clone, Debug)]
enum Cond {
    Const(bool),
    Lt(u32, u32),
    Le(u32, u32),
    Eq(u32, u32),
    And(Vec<Cond>),
    Or(Vec<Cond>),
}

/// Hash-consed arithmetic DAG in evaluation order.
#[derive(Default)]
struct Tape {
    nodes: Vec<Node>,
    index: HashMap<Node, u32>,
    dims: BTreeMap<SymbolId, u32>,
}

impl Tape {
    fn intern(&mut self, n: Node) -> u32 {
        if let Some(&i) = self.index.get(&n) {
            return i;
        }
        let i = self.nodes.len() as u32;
        self.nodes.push(n);
        self.index.insert(n, i);
        i
    }

    fn term(&mut self, e: &SymExpr) -> u32 {
        let n = match e {
            Expr::Const(c) => Node::Const(to_f64(c).to_bits()),
            Expr::Var(s) => {
                let next = self.dims.len() as u32;
                Node::Sym(*self.dims.entry(*s).or_insert(next))
            }
            Expr::Neg(a) => Node::Neg(self.term(a)),
            Expr::Arith(op, a, b) => {
                let (a, b) = (self.term(a), self.term(b));
                match op {
                    ArithOp::Add => Node::Add(a, b),
                    ArithOp::Sub => Node::Sub(a, b),
                    ArithOp::Mul => Node::Mul(a, b),
                    ArithOp::Div => Node::Div(a, b),
                }
            }
            Expr::Pow(a, k) => Node::Pow(self.term(a), *k),
            _ => unreachable!("boolean term in arithmetic position"),
        };
        self.intern(n)
    }

    /// Negation-normal form over `<`, `<=`, `==`.
    fn cond(&mut self, e: &SymExpr, positive: bool) -> Cond {
        match e {
            Expr::Bool(b) => Cond::Const(*b == positive),
            Expr::Not(a) => self.cond(a, !positive),
            Expr::And(a, b) | Expr::Or(a, b) => {
                let parts = vec![self.cond(a, positive), self.cond(b, positive)];
                if matches!(e, Expr::And(..)) == positive {
                    Cond::And(parts)
                } else {
                    Cond::Or(parts)
                }
            }
            Expr::Cmp(op, a, b) => {
                let (a, b) = (self.term(a), self.term(b));
                match (op, positive) {
                    (CmpOp::Lt, true) | (CmpOp::Ge, false) => Cond::Lt(a, b),
                    (CmpOp::Le, true) | (CmpOp::Gt, false) => Cond::Le(a, b),
                    (CmpOp::Gt, true) | (CmpOp::Le, false) => Cond::Lt(b, a),
                    (CmpOp::Ge, true) | (CmpOp::Lt, false) => Cond::Le(b, a),
                    (CmpOp::Eq, true) => Cond::Eq(a, b),
                    (CmpOp::Eq, false) => Cond::Or(vec![Cond::Lt(a, b), Cond::Lt(b, a)]),
                }
            }
            _ => unreachable!("arithmetic term in boolean position"),
        }
    }

    fn eval(&self, x: &[f64], vals: &mut Vec<f64>) {
        vals.clear();
        for n in &self.nodes {
            let v = match *n {
                Node::Const(bits) => f64::from_bits(bits),
                Node::Sym(d) => x[d as usize],
                Node::Neg(a) => -vals[a as usize],
                Node::Add(a, b) => vals[a as usize] + vals[b as usize],
                Node::Sub(a, b) => vals[a as usize] - vals[b as usize],
                Node::Mul(a, b) => vals[a as usize] * vals[b as usize],
                Node::Div(a, b) => {
                    let d = vals[b as usize];
                    if d == 0.0 {
                        f64::NAN
                    } else {
                        vals[a as usize] / d
                    }
                }
                Node::Pow(a, k) => vals[a as usize].powi(k as i32),
            };
            vals.push(v);
        }
    }
}

fn residual(c: &Cond, v: &[f64]) -> f64 {
    let r = match c {
        Cond::Const(true) => 0.0,
        Cond::Const(false) => f64::INFINITY,
        Cond::Lt(a, b) => {
            let (a, b) = (v[*a as usize], v[*b as usize]);
            if a < b {
                0.0
            } else {
                (a - b) + f64::EPSILON * (1.0 + a.abs() + b.abs())
            }
        }
        Cond::Le(a, b) => {
            let d = v[*a as usize] - v[*b as usize];
            if d <= 0.0 {
                0.0
            } else {
                d
            }
        }
        Cond::Eq(a, b) => (v[*a as usize] - v[*b as usize]).abs(),
        Cond::And(parts) => parts.iter().map(|p| residual(p, v)).sum(),
        Cond::Or(parts) => parts.iter().map(|p| residual(p, v)).fold(f64::INFINITY, f64::min),
    };
    if r.is_nan() {
        f64::INFINITY
    } else {
        r
    }
}

#[derive(Clone, Debug, Default)]
struct Bound {
    lo: Option<(Rational, bool)>,
    hi: Option<(Rational, bool)>,
}

impl Bound {
    fn lower(&mut self, v: Rational, strict: bool) {
        let tighter = match &self.lo {
            None => true,
            Some((cur, s)) => v > *cur || (v == *cur && strict && !s),
        };
        if tighter {
            self.lo = Some((v, strict));
        }
    }

    fn upper(&mut self, v: Rational, strict: bool) {
        let tighter = match &self.hi {
            None => true,
            Some((cur, s)) => v < *cur || (v == *cur && strict && !s),
        };
        if tighter {
            self.hi = Some((v, strict));
        }
    }

    fn empty(&self) -> bool {
        match (&self.lo, &self.hi) {
            (Some((lo, ls)), Some((hi, hs))) => lo > hi || (lo == hi && (*ls || *hs)),
            _ => false,
        }
    }
}

/// `s op c` bounds from atoms over a single symbol and a constant.
fn collect_bounds(conj: &[SymExpr], bounds: &mut BTreeMap<SymbolId, Bound>) {
    fn atom(e: &SymExpr, positive: bool, bounds: &mut BTreeMap<SymbolId, Bound>) {
        match e {
            Expr::Not(a) => atom(a, !positive, bounds),
            Expr::And(a, b) if positive => {
                atom(a, true, bounds);
                atom(b, true, bounds);
            }
            Expr::Or(a, b) if !positive => {
                atom(a, false, bounds);
                atom(b, false, bounds);
            }
            Expr::Cmp(op, a, b) => {
                let (s, c, op) = match (a.as_ref(), b.as_ref()) {
                    (Expr::Var(s), Expr::Const(c)) => (*s, c.clone(), *op),
                    (Expr::Const(c), Expr::Var(s)) => (*s, c.clone(), op.flip()),
                    _ => return,
                };
                let op = if positive {
                    Some(op)
                } else {
                    match op {
                        CmpOp::Lt => Some(CmpOp::Ge),
                        CmpOp::Le => Some(CmpOp::Gt),
                        CmpOp::Gt => Some(CmpOp::Le),
                        CmpOp::Ge => Some(CmpOp::Lt),
                        CmpOp::Eq => None,
                    }
                };
                let b = bounds.entry(s).or_default();
                match op {
                    Some(CmpOp::Lt) => b.upper(c, true),
                    Some(CmpOp::Le) => b.upper(c, false),
                    Some(CmpOp::Gt) => b.lower(c, true),
                    Some(CmpOp::Ge) => b.lower(c, false),
                    Some(CmpOp::Eq) => {
                        b.lower(c.clone(), false);
                        b.upper(c, false);
                    }
                    None => {}
                }
            }
            _ => {}
        }
    }
    for c in conj {
        atom(c, true, bounds);
    }
}

#[derive(Clone, Copy, Debug)]
enum Sampler {
    Uniform { lo: f64, hi: f64 },
    Above(f64),
    Below(f64),
    Free,
}

impl Sampler {
    fn from_bound(b: Option<&Bound>) -> Self {
        let lo = b.and_then(|b| b.lo.as_ref()).map(|(v, _)| to_f64(v));
        let hi = b.and_then(|b| b.hi.as_ref()).map(|(v, _)| to_f64(v));
        match (lo, hi) {
            (Some(lo), Some(hi)) => Sampler::Uniform { lo, hi },
            (Some(lo), None) => Sampler::Above(lo),
            (None, Some(hi)) => Sampler::Below(hi),
            (None, None) => Sampler::Free,
        }
    }

    fn magnitude(u: f64) -> f64 {
        (-10.0 + 20.0 * u).exp2()
    }

    /// Inverse CDF of the sampling distribution at `u` in [0, 1).
    fn at(self, u: f64) -> f64 {
        match self {
            Sampler::Uniform { lo, hi } => {
                let margin = (hi - lo) * (-20f64).exp2();
                lo + margin + u * (hi - lo - 2.0 * margin)
            }
            Sampler::Above(lo) => lo + Self::magnitude(u),
            Sampler::Below(hi) => hi - Self::magnitude(u),
            Sampler::Free => {
                if u < 0.5 {
                    -Self::magnitude(2.0 * u)
                } else {
                    Self::magnitude(2.0 * u - 1.0)
                }
            }
        }
    }
}

struct Search<'a> {
    o: &'a AssertObligation,
    tape: Tape,
    cond: Cond,
    /// Symbol per tape dimension.
    dim_symbols: Vec<SymbolId>,
    ints: Vec<bool>,
    samplers: Vec<Sampler>,
    /// Eliminated symbols, in elimination order.
    definitions: Vec<(SymbolId, SymExpr)>,
    scratch: Vec<f64>,
    evaluations: u64,
    exact_attempts: usize,
}

impl Search<'_> {
    fn residual(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let mut vals = std::mem::take(&mut self.scratch);
        self.tape.eval(x, &mut vals);
        let r = residual(&self.cond, &vals);
        self.scratch = vals;
        r
    }

    fn round_ints(&self, x: &mut [f64]) {
        for (v, int) in x.iter_mut().zip(&self.ints) {
            if *int {
                *v = v.round();
            }
        }
    }

    /// Snaps `x` to rationals and checks every original formula exactly.
    fn exact(&mut self, x: &[f64]) -> Option<BTreeMap<SymbolId, Rational>> {
        let model = self.exact_at(x, None)?;
        let mut x = x.to_vec();
        Some(self.polish(&mut x, model))
    }

    /// As `exact`, with coordinate `pin.0` fixed to the exact value `pin.1`.
    fn exact_at(&mut self, x: &[f64], pin: Option<(usize, Rational)>) -> Option<BTreeMap<SymbolId, Rational>> {
        if self.exact_attempts >= EXACT_ATTEMPTS {
            return None;
        }
        self.exact_attempts += 1;
        for max_den in [Some(1), Some(100), Some(10_000), Some(1_000_000), None] {
            let mut env: BTreeMap<SymbolId, Rational> = self
                .o
                .symbols
                .keys()
                .map(|s| (*s, Rational::one()))
                .collect();
            let mut ok = true;
            for (d, s) in self.dim_symbols.iter().enumerate() {
                let v = if let Some((_, v)) = pin.as_ref().filter(|(p, _)| *p == d) {
                    Some(v.clone())
                } else if self.ints[d] {
                    from_f64_exact(x[d].round())
                } else {
                    match max_den {
                        Some(den) => snap(x[d], den),
                        None => from_f64_exact(x[d]),
                    }
                };
                match v {
                    Some(v) => {
                        env.insert(*s, v);
                    }
                    None => ok = false,
                }
            }
            if !ok {
                continue;
            }
            for (s, rhs) in self.definitions.iter().rev() {
                match eval_arith(rhs, &|v: &SymbolId| env.get(v).cloned()) {
                    Ok(v) => {
                        env.insert(*s, v);
                    }
                    Err(_) => ok = false,
                }
            }
            if ok
                && self
                    .o
                    .formulas()
                    .all(|f| eval_bool(f, &|v: &SymbolId| env.get(v).cloned()) == Ok(true))
            {
                return Some(env);
            }
        }
        None
    }

    /// Replaces coordinates of a verified point by simpler rationals while
    /// the exact check still passes.
    fn polish(&mut self, x: &mut [f64], mut model: BTreeMap<SymbolId, Rational>) -> BTreeMap<SymbolId, Rational> {
        for d in 0..x.len() {
            if self.ints[d] {
                continue;
            }
            for den in [1, 2, 4, 10, 100, 1000] {
                let Some(simpler) = snap(x[d], den) else { continue };
                if model.get(&self.dim_symbols[d]) == Some(&simpler) {
                    break;
                }
                let saved = x[d];
                x[d] = to_f64(&simpler);
                let attempts = self.exact_attempts;
                self.exact_attempts = 0;
                let checked = self.exact_at(x, Some((d, simpler)));
                self.exact_attempts = attempts;
                match checked {
                    Some(m) => {
                        model = m;
                        break;
                    }
                    None => x[d] = saved,
                }
            }
        }
        model
    }

    /// Pattern search on the residual from `x`.
    fn descend(&mut self, mut x: Vec<f64>, mut r: f64, limit: u64) -> (Vec<f64>, f64) {
        let n = x.len();
        let mut steps: Vec<f64> = x.iter().map(|v| v.abs().max(1e-3) * 0.25).collect();
        let stop = self.evaluations + limit;
        while r > 0.0 && self.evaluations < stop {
            let mut improved = false;
            for d in 0..n {
                for sign in [1.0, -1.0] {
                    let mut y = x.clone();
                    let step = if self.ints[d] { steps[d].max(1.0) } else { steps[d] };
                    y[d] += sign * step;
                    self.round_ints(&mut y);
                    let ry = self.residual(&y);
                    if ry < r {
                        x = y;
                        r = ry;
                        steps[d] *= 2.0;
                        improved = true;
                        break;
                    }
                }
                if r == 0.0 || self.evaluations >= stop {
                    break;
                }
            }
            if !improved {
                let mut active = false;
                for (d, s) in steps.iter_mut().enumerate() {
                    *s *= 0.5;
                    active |= *s > 1e-15 * x[d].abs().max(1.0);
                }
                if !active {
                    break;
                }
            }
        }
        (x, r)
    }
}

fn keep_elite(elite: &mut Vec<(f64, Vec<f64>)>, r: f64, x: &[f64]) {
    if elite.len() == ELITE && r >= elite[ELITE - 1].0 {
        return;
    }
    let at = elite.partition_point(|(e, _)| *e <= r);
    elite.insert(at, (r, x.to_vec()));
    elite.truncate(ELITE);
}

fn infeasible(note: &str) -> Falsification {
    Falsification {
        model: None,
        evaluations: 0,
        note: note.to_string(),
    }
}

/// Searches for an exact assignment satisfying the path condition and the
/// negated assertion of `o`, spending at most `budget` residual
/// evaluations. Never proves absence of a violation.
pub fn falsify(o: &AssertObligation, budget: u64, seed: u64) -> Falsification {
    let mut conj = Vec::new();
    for f in o.formulas() {
        flatten(simplify(f), &mut conj);
    }

    let mut definitions = Vec::new();
    while let Some(i) = conj.iter().position(|c| definition(c, o).is_some()) {
        let (s, rhs) = definition(&conj.remove(i), o).expect("checked");
        let rest = std::mem::take(&mut conj);
        for c in rest {
            flatten(simplify(&substitute(&c, s, &rhs)), &mut conj);
        }
        definitions.push((s, rhs));
    }
    if conj.contains(&Expr::Bool(false)) {
        return infeasible("constraints simplify to false");
    }
    let mut bounds = BTreeMap::new();
    collect_bounds(&conj, &mut bounds);
    if bounds.values().any(Bound::empty) {
        return infeasible("contradictory bounds on a single symbol");
    }

    let mut tape = Tape::default();
    let parts: Vec<Cond> = conj.iter().map(|c| tape.cond(c, true)).collect();
    let mut dim_symbols = vec![SymbolId(0); tape.dims.len()];
    for (s, d) in &tape.dims {
        dim_symbols[*d as usize] = *s;
    }
    let ints = dim_symbols
        .iter()
        .map(|s| o.symbols.get(s).is_some_and(|i| i.sort == VarSort::Int))
        .collect();
    let samplers = dim_symbols
        .iter()
        .map(|s| Sampler::from_bound(bounds.get(s)))
        .collect();

    let mut search = Search {
        o,
        tape,
        cond: Cond::And(parts),
        dim_symbols,
        ints,
        samplers,
        definitions,
        scratch: Vec::new(),
        evaluations: 0,
        exact_attempts: 0,
    };
    let found = |search: &Search, model| Falsification {
        model: Some(model),
        evaluations: search.evaluations,
        note: "witness found".into(),
    };

    let dims = search.dim_symbols.len();
    if dims == 0 {
        if let Some(m) = search.exact(&[]) {
            return found(&search, m);
        }
        return Falsification {
            model: None,
            evaluations: 1,
            note: "constant constraints do not hold".into(),
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_budget = (budget - budget / 5).max(1);
    let mut elite: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut strata: Vec<Vec<u32>> = vec![(0..BLOCK as u32).collect(); dims];
    let mut x = vec![0.0; dims];
    while search.evaluations < sample_budget {
        for perm in &mut strata {
            perm.shuffle(&mut rng);
        }
        let block = BLOCK.min(sample_budget - search.evaluations);
        for k in 0..block as usize {
            for ((xd, perm), sampler) in x.iter_mut().zip(&strata).zip(&search.samplers) {
                let u = (perm[k] as f64 + rng.random::<f64>()) / BLOCK as f64;
                *xd = sampler.at(u);
            }
            search.round_ints(&mut x);
            let r = search.residual(&x);
            if r == 0.0 {
                if let Some(m) = search.exact(&x) {
                    return found(&search, m);
                }
            }
            keep_elite(&mut elite, r, &x);
        }
    }

    let remaining = budget.saturating_sub(search.evaluations);
    let share = (remaining / elite.len().max(1) as u64).max(1);
    for (r, x) in elite {
        if search.evaluations >= budget || !r.is_finite() {
            break;
        }
        let (y, ry) = search.descend(x, r, share);
        if ry == 0.0 {
            if let Some(m) = search.exact(&y) {
                return found(&search, m);
            }
        }
    }
    Falsification {
        model: None,
        evaluations: search.evaluations,
        note: "no witness found within budget".into(),
    }
}

/// Symbols that appear in some formula of the obligation.
pub fn constrained_symbols(o: &AssertObligation) -> BTreeSet<SymbolId> {
    let mut out = BTreeSet::new();
    for f in o.formulas() {
        f.for_each_var(&mut |s| {
            out.insert(*s);
        });
    }
    out
}
