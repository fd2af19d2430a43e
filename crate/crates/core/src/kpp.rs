//! K-profile parameterization case study.
//!
//! The model tracks a boundary layer of thickness `h = D - zCr` and the
//! diffusivity `K = h * w * G(sigma)` with the cubic shape function
//! `G(s) = s + a2 s^2 + a3 s^3`. The defective variant includes gradient
//! matching terms `dnu / w` in `a2` and `a3`; `dnu` is unconstrained, so
//! `K` can turn negative from the second iteration on.

use crate::ir::{Evolve, Expr, Function, GlobalDecl, InputDecl, Program, Stmt, VarSort};
use crate::rational::{int, Rational};
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

pub const DEFECTIVE_SOURCE: &str = include_str!("../corpus/kpp_defective.hsl");
pub const REPAIRED_SOURCE: &str = include_str!("../corpus/kpp_repaired.hsl");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KppVariant {
    Defective,
    Repaired,
}

impl KppVariant {
    pub fn source(self) -> &'static str {
        match self {
            KppVariant::Defective => DEFECTIVE_SOURCE,
            KppVariant::Repaired => REPAIRED_SOURCE,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            KppVariant::Defective => "kpp_defective.hsl",
            KppVariant::Repaired => "kpp_repaired.hsl",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KppError {
    #[error("boundary layer thickness is zero (D == zCr)")]
    ZeroThickness,
    #[error("h * w is zero")]
    ZeroScale,
    #[error("w is zero")]
    ZeroVelocity,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KppParams {
    pub dt: Rational,
    pub zw: Rational,
    pub d: Rational,
    pub w: Rational,
}

impl KppParams {
    /// `0 < dt < 1` and `D > 0, D > zw, zw > 0, w > 0`.
    pub fn satisfies_assumptions(&self) -> bool {
        let zero = Rational::zero();
        self.dt > zero
            && self.dt < Rational::one()
            && self.d > zero
            && self.d > self.zw
            && self.zw > zero
            && self.w > zero
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KppState {
    pub t: Rational,
    pub nu: Rational,
    pub dnu: Rational,
    pub h: Rational,
    pub sigma: Rational,
    pub alpha: Rational,
    pub zcr: Rational,
    pub k: Rational,
    pub a2: Rational,
    pub a3: Rational,
}

impl KppState {
    /// State after `initialConditions`: `zCr = zw`, the given `nu` and `K`,
    /// everything else zero.
    pub fn initial(params: &KppParams, nu: Rational, k: Rational) -> Self {
        KppState {
            t: Rational::zero(),
            nu,
            dnu: Rational::zero(),
            h: Rational::zero(),
            sigma: Rational::zero(),
            alpha: Rational::zero(),
            zcr: params.zw.clone(),
            k,
            a2: Rational::zero(),
            a3: Rational::zero(),
        }
    }

    /// The three asserted properties, in order: `K>0`, `zw>=zCr`, `zCr>0`.
    pub fn invariant(&self, params: &KppParams) -> [(&'static str, bool); 3] {
        [
            ("K>0", self.k.is_positive()),
            ("zw>=zCr", params.zw >= self.zcr),
            ("zCr>0", self.zcr.is_positive()),
        ]
    }
}

pub fn g_shape(sigma: &Rational, a2: &Rational, a3: &Rational) -> Rational {
    let s2 = sigma * sigma;
    let s3 = &s2 * sigma;
    sigma + a2 * s2 + a3 * s3
}

/// `(1 - sigma)^2 + r sigma (3 - sigma)`, equal to `G(sigma) / sigma` for
/// the repaired coefficients with `r = nu / (h w)`.
pub fn g_repaired_lower_bound(sigma: &Rational, r: &Rational) -> Rational {
    let one = Rational::one();
    let a = &one - sigma;
    &a * &a + r * sigma * (int(3) - sigma)
}

pub fn compute_bld(state: &KppState, params: &KppParams, alpha: &Rational) -> Result<KppState, KppError> {
    let h = &params.d - &state.zcr;
    if h.is_zero() {
        return Err(KppError::ZeroThickness);
    }
    Ok(KppState {
        sigma: (&params.d - &params.zw) / &h,
        h,
        alpha: alpha.clone(),
        zcr: alpha * &state.zcr,
        ..state.clone()
    })
}

/// Shape coefficients `(a2, a3)` for the current state.
pub fn coefficients(
    state: &KppState,
    params: &KppParams,
    variant: KppVariant,
) -> Result<(Rational, Rational), KppError> {
    let hw = &state.h * &params.w;
    if hw.is_zero() {
        return Err(KppError::ZeroScale);
    }
    let r = &state.nu / &hw;
    let mut a2 = int(-2) + int(3) * &r;
    let mut a3 = Rational::one() - &r;
    if variant == KppVariant::Defective {
        if params.w.is_zero() {
            return Err(KppError::ZeroVelocity);
        }
        let g = &state.dnu / &params.w;
        a2 += &g;
        a3 -= &g;
    }
    Ok((a2, a3))
}

pub fn compute_k(state: &KppState, params: &KppParams, variant: KppVariant) -> Result<KppState, KppError> {
    let (a2, a3) = coefficients(state, params, variant)?;
    let k = &state.h * &params.w * g_shape(&state.sigma, &a2, &a3);
    Ok(KppState {
        a2,
        a3,
        k,
        ..state.clone()
    })
}

/// `m` explicit Euler steps of `zCr' = -zCr`, i.e. `zCr (1 - dt)^m`.
pub fn euler_decay(zcr: &Rational, dt: &Rational, m: u32) -> Rational {
    let factor = Rational::one() - dt;
    zcr * num_traits::pow(factor, m as usize)
}

/// Nondeterministic values consumed by one outer iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IterationChoice {
    pub alpha: Rational,
    pub nu: Rational,
    pub dnu: Rational,
    pub m: u32,
}

/// One outer iteration: computeBLD, computeNu, computeK, then `m` decay
/// steps advancing `t`.
pub fn iterate(
    state: &KppState,
    params: &KppParams,
    choice: &IterationChoice,
    variant: KppVariant,
) -> Result<KppState, KppError> {
    let mut s = compute_bld(state, params, &choice.alpha)?;
    s.nu = choice.nu.clone();
    s.dnu = choice.dnu.clone();
    let mut s = compute_k(&s, params, variant)?;
    s.zcr = euler_decay(&s.zcr, &params.dt, choice.m);
    s.t += &params.dt * int(choice.m as i64);
    Ok(s)
}

/// Builds the model programmatically; equal to parsing the corpus file.
pub fn build_kpp_model(variant: KppVariant) -> Program {
    let v = |n: &str| Expr::var(n);
    let c = Expr::int;

    let input = |name: &str, sort, assume| InputDecl {
        name: name.into(),
        sort,
        assume,
    };
    let inputs = vec![
        input("N", VarSort::Int, None),
        input("M", VarSort::Int, None),
        input("dt", VarSort::Real, Some(c(0).lt(v("dt")).and(v("dt").lt(c(1))))),
        input("zw", VarSort::Real, None),
        input("D", VarSort::Real, None),
        input(
            "w",
            VarSort::Real,
            Some(
                v("D")
                    .gt(c(0))
                    .and(v("D").gt(v("zw")))
                    .and(v("zw").gt(c(0)))
                    .and(v("w").gt(c(0))),
            ),
        ),
    ];

    let mut globals = vec![GlobalDecl {
        name: "t".into(),
        sort: VarSort::Real,
        init: Some(c(0)),
    }];
    let state_vars = ["nu", "dnu", "h", "sigma", "alpha", "zCr", "K", "a2", "a3"];
    globals.extend(state_vars.iter().map(|n| GlobalDecl {
        name: n.to_string(),
        sort: VarSort::Real,
        init: None,
    }));

    let havoc = |n: &str| Stmt::Havoc(n.into());
    let r = || c(3) * v("nu") / (v("h") * v("w"));
    let r1 = || c(1) - v("nu") / (v("h") * v("w"));
    let (a2, a3) = match variant {
        KppVariant::Defective => (-c(2) + r() + v("dnu") / v("w"), r1() - v("dnu") / v("w")),
        KppVariant::Repaired => (-c(2) + r(), r1()),
    };
    let shape = v("sigma") + v("a2") * v("sigma").pow(2) + v("a3") * v("sigma").pow(3);

    let function = |name: &str, body| Function {
        name: name.into(),
        body,
    };
    let functions = vec![
        function(
            "computeNu",
            vec![havoc("nu"), Stmt::Assume(v("nu").gt(c(0))), havoc("dnu")],
        ),
        function(
            "computeBLD",
            vec![
                Stmt::assign("h", v("D") - v("zCr")),
                Stmt::assign("sigma", (v("D") - v("zw")) / v("h")),
                havoc("alpha"),
                Stmt::Assume(c(0).lt(v("alpha")).and(v("alpha").lt(c(1)))),
                Stmt::assign("zCr", v("alpha") * v("zCr")),
            ],
        ),
        function(
            "computeK",
            vec![
                Stmt::assign("a2", a2),
                Stmt::assign("a3", a3),
                Stmt::assign("K", v("h") * v("w") * shape),
            ],
        ),
        function(
            "invariant",
            vec![
                Stmt::assert(v("K").gt(c(0)), "K>0"),
                Stmt::assert(v("zw").ge(v("zCr")), "zw>=zCr"),
                Stmt::assert(v("zCr").gt(c(0)), "zCr>0"),
            ],
        ),
        function("initialConditions", {
            let mut body: Vec<Stmt> = state_vars.iter().map(|n| havoc(n)).collect();
            body.push(Stmt::Assume(c(0).lt(v("nu")).and(v("K").gt(c(0)))));
            body.push(Stmt::Assume(v("zCr").eq_(v("zw"))));
            body
        }),
    ];

    let call = |n: &str| Stmt::Call(n.into());
    let main = vec![
        Stmt::Print,
        call("initialConditions"),
        Stmt::For {
            index: "i".into(),
            count: v("N"),
            body: vec![
                Stmt::Print,
                call("invariant"),
                call("computeBLD"),
                call("computeNu"),
                call("computeK"),
                Stmt::Evolve(Evolve {
                    time: Some("t".into()),
                    odes: vec![("zCr".into(), -v("zCr"))],
                    dt: "dt".into(),
                    max_steps: v("M"),
                }),
            ],
        },
        Stmt::Print,
        call("invariant"),
    ];

    Program {
        inputs,
        globals,
        functions,
        main,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{eval_arith, parse_expr, parse_program};
    use crate::rational::ratio;
    use std::collections::BTreeMap;

    fn params() -> KppParams {
        KppParams {
            dt: ratio(1, 2),
            zw: int(1),
            d: int(2),
            w: int(1),
        }
    }

    #[test]
    fn builder_matches_corpus() {
        for variant in [KppVariant::Defective, KppVariant::Repaired] {
            let parsed = parse_program(variant.source()).unwrap();
            assert_eq!(build_kpp_model(variant), parsed, "{variant:?}");
            assert_eq!(parsed.inputs.len(), 6);
            assert_eq!(parsed.globals.len(), 10);
            assert_eq!(parsed.functions.len(), 5);
        }
    }

    #[test]
    fn shape_values() {
        assert_eq!(g_shape(&int(0), &int(7), &int(-3)), int(0));
        assert_eq!(g_shape(&int(1), &int(-99), &int(100)), int(2));
        // 2/3 - 100*4/9 + 301/3*8/27
        let oracle = ratio(2, 3) - ratio(400, 9) + ratio(301 * 8, 81);
        assert_eq!(oracle, ratio(-1138, 81));
        assert_eq!(g_shape(&ratio(2, 3), &int(-100), &ratio(301, 3)), oracle);

        let env: BTreeMap<String, Rational> = [
            ("sigma".to_string(), ratio(2, 3)),
            ("a2".to_string(), int(-100)),
            ("a3".to_string(), ratio(301, 3)),
        ]
        .into();
        let e = parse_expr("sigma + a2*pow(sigma,2) + a3*pow(sigma,3)").unwrap();
        assert_eq!(eval_arith(&e, &|n: &String| env.get(n).cloned()).unwrap(), oracle);
    }

    #[test]
    fn boundary_layer_update() {
        let p = params();
        let mut s = KppState::initial(&p, int(1), int(1));
        s.zcr = ratio(1, 2);
        let s = compute_bld(&s, &p, &ratio(1, 2)).unwrap();
        assert_eq!((s.h.clone(), s.sigma.clone(), s.zcr.clone()), (ratio(3, 2), ratio(2, 3), ratio(1, 4)));

        let first = compute_bld(&KppState::initial(&p, int(1), int(1)), &p, &ratio(1, 2)).unwrap();
        assert_eq!((first.h, first.sigma, first.zcr), (int(1), int(1), ratio(1, 2)));

        let mut degenerate = KppState::initial(&p, int(1), int(1));
        degenerate.zcr = int(2);
        assert_eq!(compute_bld(&degenerate, &p, &ratio(1, 2)), Err(KppError::ZeroThickness));
    }

    #[test]
    fn diffusivity_in_documented_state() {
        let p = params();
        let s = KppState {
            h: ratio(3, 2),
            sigma: ratio(2, 3),
            nu: int(1),
            dnu: int(-100),
            ..KppState::initial(&p, int(1), int(1))
        };
        let bad = compute_k(&s, &p, KppVariant::Defective).unwrap();
        assert_eq!((bad.a2, bad.a3, bad.k), (int(-100), ratio(301, 3), ratio(-569, 27)));
        let good = compute_k(&s, &p, KppVariant::Repaired).unwrap();
        assert_eq!((good.a2, good.a3, good.k), (int(0), ratio(1, 3), ratio(31, 27)));
    }

    #[test]
    fn unit_sigma_gives_twice_nu() {
        let p = params();
        for variant in [KppVariant::Defective, KppVariant::Repaired] {
            for dnu in [int(-1000), int(0), ratio(7, 3)] {
                let s = KppState {
                    h: ratio(5, 4),
                    sigma: int(1),
                    nu: ratio(3, 7),
                    dnu,
                    ..KppState::initial(&p, int(1), int(1))
                };
                assert_eq!(compute_k(&s, &p, variant).unwrap().k, ratio(6, 7));
            }
        }
    }

    #[test]
    fn decay() {
        assert_eq!(euler_decay(&ratio(1, 2), &ratio(1, 2), 0), ratio(1, 2));
        assert_eq!(euler_decay(&ratio(1, 2), &ratio(1, 2), 1), ratio(1, 4));
        assert_eq!(euler_decay(&int(1), &ratio(1, 3), 3), ratio(8, 27));
    }

    #[test]
    fn lower_bound_identity_examples() {
        assert_eq!(g_repaired_lower_bound(&int(1), &int(1)), int(2));
        assert_eq!(g_shape(&int(1), &int(1), &int(0)), int(2));
        let (s, r) = (ratio(2, 3), ratio(2, 3));
        // 1/9 + (2/3)(2/3)(7/3) = 3/27 + 28/27
        let lhs = g_shape(&s, &(int(-2) + int(3) * &r), &(int(1) - &r)) / &s;
        assert_eq!(lhs, ratio(31, 27));
        assert_eq!(g_repaired_lower_bound(&s, &r), ratio(31, 27));
    }

    #[test]
    fn documented_iterations() {
        let p = params();
        let s0 = KppState::initial(&p, int(1), int(1));
        let first = IterationChoice {
            alpha: ratio(1, 2),
            nu: int(1),
            dnu: int(0),
            m: 0,
        };
        let second = IterationChoice {
            dnu: int(-100),
            ..first.clone()
        };
        for (variant, expected) in [(KppVariant::Defective, ratio(-569, 27)), (KppVariant::Repaired, ratio(31, 27))] {
            let s1 = iterate(&s0, &p, &first, variant).unwrap();
            assert!(s1.invariant(&p).iter().all(|(_, ok)| *ok));
            let s2 = iterate(&s1, &p, &second, variant).unwrap();
            assert_eq!(s2.k, expected);
        }
    }
}
