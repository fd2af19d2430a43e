use esmck_core::ir::{lower, parse_program, Program};
use esmck_core::kpp::KppVariant;
use esmck_core::rational::{int, ratio, Rational};
use esmck_core::solve::{
    check_program, constrained_symbols, replay, Backend, CheckConfig, Outcome, Witness,
};
use esmck_core::symexec::{explore, Bounds};
use std::collections::BTreeMap;
use std::path::Path;

fn model(variant: KppVariant) -> Program {
    lower(&parse_program(variant.source()).unwrap()).unwrap()
}

fn bounds(n: i64, m: i64) -> Bounds {
    Bounds::with(&[("N", n), ("M", m)])
}

fn z3() -> Option<String> {
    ["/usr/local/bin/z3", "/usr/bin/z3"]
        .into_iter()
        .find(|p| Path::new(p).exists())
        .map(str::to_string)
}

/// D=2, zw=1, w=1, dt=1/2, alpha=1/2 and nu=1 on both iterations, K0=1,
/// dnu=-100 on the second iteration, no decay steps.
fn documented_witness() -> Witness {
    let mut assignment: BTreeMap<String, Rational> = BTreeMap::new();
    for (name, value) in [
        ("D", int(2)),
        ("zw", int(1)),
        ("w", int(1)),
        ("dt", ratio(1, 2)),
        ("nu!0", int(1)),
        ("dnu!1", int(0)),
        ("h!2", int(0)),
        ("sigma!3", int(0)),
        ("alpha!4", int(0)),
        ("zCr!5", int(1)),
        ("K!6", int(1)),
        ("a2!7", int(0)),
        ("a3!8", int(0)),
        ("alpha!9", ratio(1, 2)),
        ("nu!10", int(1)),
        ("dnu!11", int(0)),
        ("alpha!12", ratio(1, 2)),
        ("nu!13", int(1)),
        ("dnu!14", int(-100)),
    ] {
        assignment.insert(name.to_string(), value);
    }
    let mut havoc_order: Vec<String> = assignment.keys().filter(|k| k.contains('!')).cloned().collect();
    havoc_order.sort_by_key(|h| h.split('!').nth(1).unwrap().parse::<u32>().unwrap());
    Witness {
        label: "K>0".into(),
        obligation: 0,
        bounds: bounds(2, 1).inputs,
        assignment,
        havoc_order,
        choices: vec![0, 0],
        target_assert: 6,
    }
}

#[test]
fn documented_witness_drives_k_negative_only_in_the_defective_model() {
    let w = documented_witness();
    let defective = replay(&model(KppVariant::Defective), &w).unwrap();
    assert_eq!(defective.value("K"), Some(&ratio(-569, 27)));
    assert!(defective.violates(6, "K>0"));
    assert_eq!(defective.first_violation().unwrap().0, 6);

    let repaired = replay(&model(KppVariant::Repaired), &w).unwrap();
    assert_eq!(repaired.value("K"), Some(&ratio(31, 27)));
    assert!(repaired.first_violation().is_none());
}

#[test]
fn path_and_obligation_counts() {
    for n in 0..=3i64 {
        for m in 0..=3i64 {
            let e = explore(&model(KppVariant::Defective), &bounds(n, m)).unwrap();
            assert_eq!(e.summary.paths, m.pow(n as u32) as u64, "N={n} M={m}");
            let expected: i64 = 3 * (0..=n).map(|k| m.pow(k as u32)).sum::<i64>();
            assert_eq!(e.summary.obligations, expected as u64, "N={n} M={m}");
            assert!(e.summary.complete);
        }
    }
}

#[test]
fn defective_violation_found_at_two_iterations() {
    let config = CheckConfig {
        jobs: 2,
        ..Default::default()
    };
    let report = check_program(&model(KppVariant::Defective), &bounds(2, 1), &config).unwrap();
    let v = report.first_violation().expect("a violation");
    assert_eq!(v.label, "K>0");
    let Outcome::Violated { witness, trace } = &v.outcome else { unreachable!() };
    assert!(trace.violates(witness.target_assert, "K>0"));
    assert!(trace.any_negative("K"));
    // Independent re-replay of the reported witness.
    let again = replay(&model(KppVariant::Defective), witness).unwrap();
    assert_eq!(&again, trace);
}

#[test]
fn no_violation_within_one_iteration() {
    for m in [0, 1] {
        for variant in [KppVariant::Defective, KppVariant::Repaired] {
            let report = check_program(&model(variant), &bounds(1, m), &CheckConfig::default()).unwrap();
            assert!(report.first_violation().is_none(), "{variant:?} N=1 M={m}");
        }
    }
}

#[test]
fn repaired_model_has_no_violation_with_builtin_backend() {
    let config = CheckConfig {
        budget: 20_000,
        jobs: 4,
        ..Default::default()
    };
    let report = check_program(&model(KppVariant::Repaired), &bounds(3, 3), &config).unwrap();
    assert_eq!(report.verdicts.len(), 120);
    assert!(report.first_violation().is_none());
    assert!(report.verdicts.iter().all(|v| matches!(v.outcome, Outcome::Unknown { .. })));
}

#[test]
fn initial_shape_havocs_never_reach_a_formula() {
    let e = explore(&model(KppVariant::Defective), &bounds(2, 2)).unwrap();
    for o in &e.obligations {
        let used: Vec<&str> = constrained_symbols(o).iter().map(|id| o.name_of(*id)).collect();
        for unused in ["h!2", "sigma!3", "a2!7", "a3!8"] {
            assert!(!used.contains(&unused), "{unused} in obligation {}", o.index);
        }
    }
}

#[test]
fn z3_finds_the_defect_and_proves_the_repair() {
    let Some(z3) = z3() else {
        eprintln!("z3 not installed; skipping");
        return;
    };
    let config = CheckConfig {
        backend: Backend::Smt {
            command: format!("{z3} -smt2 {{file}}"),
        },
        jobs: 4,
        ..Default::default()
    };
    let defective = check_program(&model(KppVariant::Defective), &bounds(2, 1), &config).unwrap();
    let v = defective.first_violation().expect("z3 witness");
    assert_eq!(v.label, "K>0");
    assert_eq!(defective.verdicts.iter().filter(|v| v.is_proved()).count(), 8);

    let repaired = check_program(&model(KppVariant::Repaired), &bounds(3, 3), &config).unwrap();
    assert!(repaired.verified(), "{:?}", repaired.verdicts.iter().find(|v| !v.is_proved()));
}
