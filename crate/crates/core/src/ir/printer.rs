use super::{ArithOp, Expr, Program, Stmt};
use crate::rational;
use std::fmt::Write;

// Binding strength, loosest first.
const OR: u8 = 1;
const AND: u8 = 2;
const NOT: u8 = 3;
const CMP: u8 = 4;
const ADD: u8 = 5;
const MUL: u8 = 6;
const UNARY: u8 = 7;
const ATOM: u8 = 8;

fn prec<V>(e: &Expr<V>) -> u8 {
    match e {
        Expr::Or(..) => OR,
        Expr::And(..) => AND,
        Expr::Not(_) => NOT,
        Expr::Cmp(..) => CMP,
        Expr::Arith(ArithOp::Add | ArithOp::Sub, ..) => ADD,
        Expr::Arith(ArithOp::Mul | ArithOp::Div, ..) => MUL,
        Expr::Neg(_) => UNARY,
        _ => ATOM,
    }
}

/// Renders an expression with the minimal parentheses needed to reparse it
/// to the same tree.
pub fn print_expr<V: std::fmt::Display>(e: &Expr<V>) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn write_child<V: std::fmt::Display>(out: &mut String, e: &Expr<V>, min: u8) {
    if prec(e) < min {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr<V: std::fmt::Display>(out: &mut String, e: &Expr<V>) {
    match e {
        Expr::Const(c) => match rational::to_decimal(c) {
            Some(d) => out.push_str(&d),
            None if c.is_integer() => {
                let _ = write!(out, "(-{})", -c.numer());
            }
            None => {
                let _ = write!(out, "({}/{})", c.numer(), c.denom());
            }
        },
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Var(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Neg(a) => {
            out.push('-');
            write_child(out, a, UNARY);
        }
        Expr::Arith(op, a, b) => {
            let (p, sym) = match op {
                ArithOp::Add => (ADD, " + "),
                ArithOp::Sub => (ADD, " - "),
                ArithOp::Mul => (MUL, " * "),
                ArithOp::Div => (MUL, " / "),
            };
            write_child(out, a, p);
            out.push_str(sym);
            write_child(out, b, p + 1);
        }
        Expr::Pow(a, k) => {
            out.push_str("pow(");
            write_expr(out, a);
            let _ = write!(out, ", {k})");
        }
        Expr::Cmp(op, a, b) => {
            write_child(out, a, ADD);
            let _ = write!(out, " {} ", op.symbol());
            write_child(out, b, ADD);
        }
        Expr::And(a, b) => {
            write_child(out, a, AND);
            out.push_str(" && ");
            write_child(out, b, AND + 1);
        }
        Expr::Or(a, b) => {
            write_child(out, a, OR);
            out.push_str(" || ");
            write_child(out, b, OR + 1);
        }
        Expr::Not(a) => {
            out.push('!');
            if matches!(**a, Expr::Not(_) | Expr::Bool(_)) {
                write_expr(out, a);
            } else {
                out.push('(');
                write_expr(out, a);
                out.push(')');
            }
        }
    }
}

fn quote(label: &str) -> String {
    // labels cannot hold quotes or newlines in the surface syntax
    label.replace(['"', '\n'], "'")
}

fn write_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        write_stmt(out, s, depth);
    }
}

fn write_stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = "  ".repeat(depth);
    match s {
        Stmt::Assign { var, value } => {
            let _ = writeln!(out, "{pad}{var} = {};", print_expr(value));
        }
        Stmt::Havoc(v) => {
            let _ = writeln!(out, "{pad}havoc {v};");
        }
        Stmt::Assume(c) => {
            let _ = writeln!(out, "{pad}assume({});", print_expr(c));
        }
        Stmt::Assert { cond, label } => {
            let _ = writeln!(out, "{pad}assert({}) : \"{}\";", print_expr(cond), quote(label));
        }
        Stmt::If {
            cond,
            then_block,
            else_block,
        } => {
            let _ = writeln!(out, "{pad}if ({}) {{", print_expr(cond));
            write_block(out, then_block, depth + 1);
            if else_block.is_empty() {
                let _ = writeln!(out, "{pad}}}");
            } else {
                let _ = writeln!(out, "{pad}}} else {{");
                write_block(out, else_block, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
        }
        Stmt::Seq(b) => {
            let _ = writeln!(out, "{pad}{{");
            write_block(out, b, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
        Stmt::Choose { var, bound } => {
            let _ = writeln!(out, "{pad}{var} = choose({});", print_expr(bound));
        }
        Stmt::For { index, count, body } => {
            let _ = writeln!(out, "{pad}for {index} in 0..{} {{", {
                let mut s = String::new();
                write_child(&mut s, count, ADD);
                s
            });
            write_block(out, body, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
        Stmt::Evolve(ev) => {
            let _ = write!(out, "{pad}evolve ");
            if let Some(t) = &ev.time {
                let _ = write!(out, "time {t} ");
            }
            out.push_str("{ ");
            for (v, rhs) in &ev.odes {
                let _ = write!(out, "{v}' = {}; ", print_expr(rhs));
            }
            let _ = writeln!(out, "}} dt {} steps {};", ev.dt, print_expr(&ev.max_steps));
        }
        Stmt::Call(f) => {
            let _ = writeln!(out, "{pad}call {f};");
        }
        Stmt::Print => {
            let _ = writeln!(out, "{pad}print;");
        }
    }
}

/// Renders a program in HSL surface syntax.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for input in &p.inputs {
        let _ = write!(out, "input {} {}", input.sort.keyword(), input.name);
        if let Some(a) = &input.assume {
            let _ = write!(out, " assume({})", print_expr(a));
        }
        out.push_str(";\n");
    }
    for g in &p.globals {
        let _ = write!(out, "{} {}", g.sort.keyword(), g.name);
        if let Some(init) = &g.init {
            let _ = write!(out, " = {}", print_expr(init));
        }
        out.push_str(";\n");
    }
    for f in &p.functions {
        let _ = writeln!(out, "fn {} {{", f.name);
        write_block(&mut out, &f.body, 1);
        out.push_str("}\n");
    }
    out.push_str("main {\n");
    write_block(&mut out, &p.main, 1);
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_expr;
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn minimal_parentheses() {
        for src in [
            "a - (b - c)",
            "a - b - c",
            "a / (b * c)",
            "-(a + b) * c",
            "--a",
            "pow(sigma, 3) * a3",
            "!(a > b && c <= d) || x == 0",
            "(a || b) && c",
        ] {
            let e = parse_expr(src).unwrap();
            assert_eq!(print_expr(&e), src);
        }
    }

    #[test]
    fn constants() {
        let e: Expr = Expr::Const(ratio(1, 3)) + Expr::Const(ratio(-2, 1));
        assert_eq!(print_expr(&e), "(1/3) + (-2)");
        assert_eq!(print_expr(&Expr::<String>::Const(ratio(1, 2))), "0.5");
    }

    #[test]
    fn assume_clause_is_printed() {
        let dt: Expr = Expr::var("dt");
        let p = Program {
            globals: vec![super::super::GlobalDecl {
                name: "dt".into(),
                sort: super::super::VarSort::Real,
                init: None,
            }],
            main: vec![Stmt::Assume(Expr::int(0).lt(dt.clone()).and(dt.lt(Expr::int(1))))],
            ..Default::default()
        };
        assert!(print_program(&p).contains("assume(0 < dt && dt < 1);"));
    }

    #[test]
    fn empty_program() {
        assert_eq!(print_program(&Program::default()), "main {\n}\n");
    }
}
