//! SMT-LIB2 emission, model parsing and a small well-formedness checker.

use crate::ir::{ArithOp, CmpOp, Expr, VarSort};
use crate::rational::{parse_decimal, Rational};
use crate::symexec::{AssertObligation, SymExpr, SymbolId};
use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

fn symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{name}|")
    }
}

fn decimal_int(n: &BigInt) -> String {
    format!("{n}.0")
}

/// Real literal: `2.0`, `0.25`, `(- 1.5)`, `(/ 1.0 3.0)`.
pub fn real_literal(c: &Rational) -> String {
    if c.is_negative() {
        return format!("(- {})", real_literal(&-c));
    }
    if c.is_integer() {
        return decimal_int(c.numer());
    }
    match crate::rational::to_decimal(c) {
        Some(d) => d,
        None => format!("(/ {} {})", decimal_int(c.numer()), decimal_int(c.denom())),
    }
}

struct Emitter<'a> {
    o: &'a AssertObligation,
}

impl Emitter<'_> {
    fn term(&self, e: &SymExpr, out: &mut String) {
        match e {
            Expr::Const(c) => out.push_str(&real_literal(c)),
            Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Expr::Var(id) => {
                let info = &self.o.symbols[id];
                let name = symbol(&info.name);
                if info.sort == VarSort::Int {
                    let _ = write!(out, "(to_real {name})");
                } else {
                    out.push_str(&name);
                }
            }
            Expr::Neg(a) => self.app("-", &[a], out),
            Expr::Arith(op, a, b) => {
                let f = match op {
                    ArithOp::Add => "+",
                    ArithOp::Sub => "-",
                    ArithOp::Mul => "*",
                    ArithOp::Div => "/",
                };
                self.app(f, &[a, b], out)
            }
            Expr::Pow(a, k) => match k {
                0 => out.push_str("1.0"),
                1 => self.term(a, out),
                k => {
                    let args: Vec<&SymExpr> = (0..*k).map(|_| a.as_ref()).collect();
                    self.app("*", &args, out)
                }
            },
            Expr::Cmp(op, a, b) => {
                let f = match op {
                    CmpOp::Lt => "<",
                    CmpOp::Le => "<=",
                    CmpOp::Eq => "=",
                    CmpOp::Ge => ">=",
                    CmpOp::Gt => ">",
                };
                self.app(f, &[a, b], out)
            }
            Expr::And(a, b) => self.app("and", &[a, b], out),
            Expr::Or(a, b) => self.app("or", &[a, b], out),
            Expr::Not(a) => self.app("not", &[a], out),
        }
    }

    fn app(&self, f: &str, args: &[&SymExpr], out: &mut String) {
        out.push('(');
        out.push_str(f);
        for a in args {
            out.push(' ');
            self.term(a, out);
        }
        out.push(')');
    }
}

/// Renders one formula of an obligation as an SMT-LIB2 term.
pub fn smt_term(o: &AssertObligation, e: &SymExpr) -> String {
    let mut s = String::new();
    Emitter { o }.term(e, &mut s);
    s
}

/// A complete script: declarations for every symbol of the obligation, one
/// assertion per path conjunct, one for the negated assertion.
pub fn emit_smt(o: &AssertObligation) -> String {
    let has_int = o.symbols.values().any(|s| s.sort == VarSort::Int);
    let mut out = String::new();
    let _ = writeln!(out, "; obligation {} [{}]", o.index, o.label.replace('\n', " "));
    let _ = writeln!(out, "(set-logic {})", if has_int { "QF_NIRA" } else { "QF_NRA" });
    for s in o.symbols.values() {
        let sort = match s.sort {
            VarSort::Int => "Int",
            VarSort::Real => "Real",
        };
        let _ = writeln!(out, "(declare-const {} {sort})", symbol(&s.name));
    }
    for c in &o.path_condition {
        let _ = writeln!(out, "(assert {})", smt_term(o, c));
    }
    let _ = writeln!(out, "(assert {})", smt_term(o, &o.negated_assertion));
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

/// Parses a sequence of s-expressions. `;` comments and `|quoted|` symbols
/// are supported; quotes are stripped.
pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>, String> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut chars = text.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        match c {
            ';' => {
                while chars.peek().is_some_and(|(_, c)| *c != '\n') {
                    chars.next();
                }
            }
            '(' => stack.push(Vec::new()),
            ')' => {
                if stack.len() == 1 {
                    return Err(format!("unbalanced `)` at byte {pos}"));
                }
                let done = stack.pop().expect("nonempty");
                stack.last_mut().expect("nonempty").push(Sexp::List(done));
            }
            '|' => {
                let mut atom = String::new();
                loop {
                    match chars.next() {
                        Some((_, '|')) => break,
                        Some((_, c)) => atom.push(c),
                        None => return Err("unterminated quoted symbol".into()),
                    }
                }
                stack.last_mut().expect("nonempty").push(Sexp::Atom(atom));
            }
            '"' => {
                let mut atom = String::from('"');
                loop {
                    match chars.next() {
                        Some((_, '"')) => break,
                        Some((_, c)) => atom.push(c),
                        None => return Err("unterminated string".into()),
                    }
                }
                atom.push('"');
                stack.last_mut().expect("nonempty").push(Sexp::Atom(atom));
            }
            c if c.is_whitespace() => {}
            c => {
                let mut atom = String::from(c);
                while let Some((_, n)) = chars.peek() {
                    if n.is_whitespace() || "()|;\"".contains(*n) {
                        break;
                    }
                    atom.push(*n);
                    chars.next();
                }
                stack.last_mut().expect("nonempty").push(Sexp::Atom(atom));
            }
        }
    }
    if stack.len() != 1 {
        return Err(format!("{} unclosed `(`", stack.len() - 1));
    }
    Ok(stack.pop().expect("nonempty"))
}

fn literal_value(e: &Sexp) -> Option<Rational> {
    match e {
        Sexp::Atom(a) => parse_decimal(a),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(f), x] if f == "-" => literal_value(x).map(|v| -v),
            [Sexp::Atom(f), x] if f == "to_real" => literal_value(x),
            [Sexp::Atom(f), a, b] if f == "/" => {
                let d = literal_value(b)?;
                (!d.is_zero()).then(|| literal_value(a).map(|n| n / d)).flatten()
            }
            _ => None,
        },
    }
}

/// Extracts `(define-fun name () Sort value)` entries. Values must be
/// rational literals; anything else (e.g. algebraic `root-obj`) is an error
/// naming the symbol.
pub fn parse_model(text: &str) -> Result<BTreeMap<String, Rational>, String> {
    let sexps = parse_sexps(text)?;
    let mut model = BTreeMap::new();
    fn visit(e: &Sexp, model: &mut BTreeMap<String, Rational>) -> Result<(), String> {
        let Sexp::List(items) = e else { return Ok(()) };
        if let [Sexp::Atom(head), Sexp::Atom(name), Sexp::List(args), _sort, value] = items.as_slice() {
            if head == "define-fun" && args.is_empty() {
                let v = literal_value(value).ok_or_else(|| format!("non-rational model value for `{name}`"))?;
                model.insert(name.clone(), v);
                return Ok(());
            }
        }
        items.iter().try_for_each(|i| visit(i, model))
    }
    for e in &sexps {
        visit(e, &mut model)?;
    }
    Ok(model)
}

const BUILTINS: &[&str] = &[
    "+", "-", "*", "/", "<", "<=", "=", ">=", ">", "and", "or", "not", "to_real", "true", "false",
];

/// Balanced parentheses, known commands, every symbol declared before use.
pub fn check_well_formed(script: &str) -> Result<(), String> {
    let sexps = parse_sexps(script)?;
    let mut declared = BTreeSet::new();
    fn uses(e: &Sexp, declared: &BTreeSet<String>) -> Result<(), String> {
        match e {
            Sexp::Atom(a) => {
                if BUILTINS.contains(&a.as_str()) || parse_decimal(a).is_some() || declared.contains(a) {
                    Ok(())
                } else {
                    Err(format!("`{a}` used before declaration"))
                }
            }
            Sexp::List(items) => {
                if items.is_empty() {
                    return Err("empty application".into());
                }
                items.iter().try_for_each(|i| uses(i, declared))
            }
        }
    }
    for e in &sexps {
        let Sexp::List(items) = e else {
            return Err("top-level atom".into());
        };
        match items.as_slice() {
            [Sexp::Atom(c), Sexp::Atom(_)] if c == "set-logic" => {}
            [Sexp::Atom(c), Sexp::Atom(name), Sexp::Atom(sort)] if c == "declare-const" => {
                if sort != "Real" && sort != "Int" {
                    return Err(format!("unknown sort `{sort}`"));
                }
                if !declared.insert(name.clone()) {
                    return Err(format!("`{name}` declared twice"));
                }
            }
            [Sexp::Atom(c), t] if c == "assert" => uses(t, &declared)?,
            [Sexp::Atom(c)] if c == "check-sat" || c == "get-model" => {}
            _ => return Err("unrecognized command".into()),
        }
    }
    Ok(())
}

/// Symbol values from a parsed model, keyed by symbol id. Symbols the
/// solver left out default to zero.
pub fn model_for(o: &AssertObligation, model: &BTreeMap<String, Rational>) -> BTreeMap<SymbolId, Rational> {
    o.symbols
        .values()
        .map(|s| (s.id, model.get(&s.name).cloned().unwrap_or_else(Rational::zero)))
        .collect()
}
