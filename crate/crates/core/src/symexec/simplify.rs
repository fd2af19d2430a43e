use crate::ir::{ArithOp, CmpOp, Expr};
use crate::rational::Rational;
use num_traits::{One, Zero};

fn is_const<V>(e: &Expr<V>, value: i64) -> bool {
    matches!(e, Expr::Const(c) if *c == Rational::from_integer(value.into()))
}

/// Constant folding and identity rewriting, bottom-up. The result agrees
/// with `e` under every assignment for which `e` is defined.
pub fn simplify<V: Clone + PartialEq>(e: &Expr<V>) -> Expr<V> {
    match e {
        Expr::Const(_) | Expr::Bool(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => match simplify(a) {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        },
        Expr::Arith(op, a, b) => arith(*op, simplify(a), simplify(b)),
        Expr::Pow(a, k) => match (simplify(a), *k) {
            (_, 0) => Expr::Const(Rational::one()),
            (a, 1) => a,
            (Expr::Const(c), k) => Expr::Const(num_traits::pow(c, k as usize)),
            (a, k) => Expr::Pow(Box::new(a), k),
        },
        Expr::Cmp(op, a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (&a, &b) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Bool(op.holds(x, y)),
                _ if a == b => Expr::Bool(matches!(op, CmpOp::Le | CmpOp::Eq | CmpOp::Ge)),
                _ => Expr::Cmp(*op, Box::new(a), Box::new(b)),
            }
        }
        Expr::And(a, b) => match (simplify(a), simplify(b)) {
            (Expr::Bool(false), _) | (_, Expr::Bool(false)) => Expr::Bool(false),
            (Expr::Bool(true), x) | (x, Expr::Bool(true)) => x,
            (x, y) => x.and(y),
        },
        Expr::Or(a, b) => match (simplify(a), simplify(b)) {
            (Expr::Bool(true), _) | (_, Expr::Bool(true)) => Expr::Bool(true),
            (Expr::Bool(false), x) | (x, Expr::Bool(false)) => x,
            (x, y) => x.or(y),
        },
        Expr::Not(a) => match simplify(a) {
            Expr::Bool(b) => Expr::Bool(!b),
            Expr::Not(inner) => *inner,
            a => a.not(),
        },
    }
}

fn arith<V: Clone + PartialEq>(op: ArithOp, a: Expr<V>, b: Expr<V>) -> Expr<V> {
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        match op {
            ArithOp::Add => return Expr::Const(x + y),
            ArithOp::Sub => return Expr::Const(x - y),
            ArithOp::Mul => return Expr::Const(x * y),
            ArithOp::Div if !y.is_zero() => return Expr::Const(x / y),
            ArithOp::Div => {}
        }
    }
    match op {
        ArithOp::Add if is_const(&a, 0) => b,
        ArithOp::Add if is_const(&b, 0) => a,
        ArithOp::Sub if is_const(&b, 0) => a,
        ArithOp::Sub if is_const(&a, 0) => simplify(&Expr::Neg(Box::new(b))),
        ArithOp::Sub if a == b => Expr::Const(Rational::zero()),
        ArithOp::Mul if is_const(&a, 0) || is_const(&b, 0) => Expr::Const(Rational::zero()),
        ArithOp::Mul if is_const(&a, 1) => b,
        ArithOp::Mul if is_const(&b, 1) => a,
        ArithOp::Div if is_const(&b, 1) => a,
        // quotient of identical terms, wherever it is defined
        ArithOp::Div if a == b && !is_const(&b, 0) => Expr::Const(Rational::one()),
        _ => Expr::Arith(op, Box::new(a), Box::new(b)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{eval_arith, eval_bool, parse_expr};
    use crate::rational::{int, ratio};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn s(src: &str) -> Expr {
        simplify(&parse_expr(src).unwrap())
    }

    #[test]
    fn folding_and_identities() {
        assert_eq!(s("0 * x"), Expr::int(0));
        assert_eq!(s("0.5 + 1/3"), Expr::Const(ratio(5, 6)));
        assert_eq!(s("x + 0"), Expr::var("x"));
        assert_eq!(s("1 * x"), Expr::var("x"));
        assert_eq!(s("pow(x, 1)"), Expr::var("x"));
        assert_eq!(s("pow(x, 0)"), Expr::int(1));
        assert_eq!(s("--x"), Expr::var("x"));
        assert_eq!(s("2 > 1 && x > 0"), parse_expr("x > 0").unwrap());
        assert_eq!(s("!(1 > 2)"), Expr::Bool(true));
        assert_eq!(s("x / 0"), parse_expr("x / 0").unwrap());
    }

    /// Substitute zCr := zw, then fold.
    #[test]
    fn substituted_sigma_folds_to_one() {
        let sigma = parse_expr("(D - zw)/(D - zCr)").unwrap();
        let substituted: Expr = sigma.map_vars(&mut |v: &String| {
            Expr::var(if v == "zCr" { "zw".to_string() } else { v.clone() })
        });
        assert_eq!(simplify(&substituted), Expr::int(1));
    }

    fn small_rational() -> impl Strategy<Value = Rational> {
        (-20i64..20, 1i64..6).prop_map(|(n, d)| ratio(n, d))
    }

    fn expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            prop::sample::select(vec![-1i64, 0, 1, 2, 3]).prop_map(Expr::int),
            prop::sample::select(vec!["x", "y"]).prop_map(Expr::var),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a / b),
                inner.clone().prop_map(|a| -a),
                (inner, 0u32..4).prop_map(|(a, k)| a.pow(k)),
            ]
        })
    }

    proptest! {
        #[test]
        fn simplify_preserves_defined_values(e in expr(), f in expr(), x in small_rational(), y in small_rational()) {
            let env: BTreeMap<String, Rational> = [("x".to_string(), x), ("y".to_string(), y)].into();
            let look = |v: &String| env.get(v).cloned();
            if let Ok(v) = eval_arith(&e, &look) {
                prop_assert_eq!(eval_arith(&simplify(&e), &look).unwrap(), v);
            }
            let c = e.clone().lt(f.clone()).or(f.le(e).not());
            if let Ok(b) = eval_bool(&c, &look) {
                prop_assert_eq!(eval_bool(&simplify(&c), &look).unwrap(), b);
            }
        }
    }

    #[test]
    fn constant_division_by_zero_is_left_alone() {
        assert_eq!(simplify(&(Expr::<String>::int(1) / Expr::int(0))), Expr::int(1) / Expr::int(0));
        assert_eq!(s("pow(2, 3) - 8"), Expr::Const(int(0)));
    }
}
