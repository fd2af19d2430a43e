use super::{print_expr, ArithOp, Expr, Sort};
use crate::rational::Rational;
use num_traits::{One, Zero};
use std::fmt::Display;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Num(Rational),
    Bool(bool),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("expected a {0} expression")]
    Sort(Sort),
}

/// Exact evaluation of an arithmetic expression.
pub fn eval_arith<V: Display>(
    e: &Expr<V>,
    lookup: &impl Fn(&V) -> Option<Rational>,
) -> Result<Rational, EvalError> {
    Ok(match e {
        Expr::Const(c) => c.clone(),
        Expr::Var(v) => lookup(v).ok_or_else(|| EvalError::Unbound(v.to_string()))?,
        Expr::Neg(a) => -eval_arith(a, lookup)?,
        Expr::Arith(op, a, b) => {
            let x = eval_arith(a, lookup)?;
            let y = eval_arith(b, lookup)?;
            match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => {
                    if y.is_zero() {
                        return Err(EvalError::DivisionByZero(print_expr(e)));
                    }
                    x / y
                }
            }
        }
        Expr::Pow(a, k) => {
            let base = eval_arith(a, lookup)?;
            let mut acc = Rational::one();
            for _ in 0..*k {
                acc *= &base;
            }
            acc
        }
        _ => return Err(EvalError::Sort(Sort::Arith)),
    })
}

/// Exact evaluation of a boolean expression. `&&` and `||` do not
/// short-circuit, so a division by zero anywhere is reported.
pub fn eval_bool<V: Display>(
    e: &Expr<V>,
    lookup: &impl Fn(&V) -> Option<Rational>,
) -> Result<bool, EvalError> {
    Ok(match e {
        Expr::Bool(b) => *b,
        Expr::Cmp(op, a, b) => op.holds(&eval_arith(a, lookup)?, &eval_arith(b, lookup)?),
        Expr::And(a, b) => {
            let x = eval_bool(a, lookup)?;
            let y = eval_bool(b, lookup)?;
            x && y
        }
        Expr::Or(a, b) => {
            let x = eval_bool(a, lookup)?;
            let y = eval_bool(b, lookup)?;
            x || y
        }
        Expr::Not(a) => !eval_bool(a, lookup)?,
        _ => return Err(EvalError::Sort(Sort::Bool)),
    })
}

pub fn eval<V: Display>(
    e: &Expr<V>,
    lookup: &impl Fn(&V) -> Option<Rational>,
) -> Result<Value, EvalError> {
    match e.sort() {
        Sort::Arith => eval_arith(e, lookup).map(Value::Num),
        Sort::Bool => eval_bool(e, lookup).map(Value::Bool),
    }
}
