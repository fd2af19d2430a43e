//! Acceptance suite: one pass/fail line per criterion.

use esmck_core::grid::{
    build_owner_map, check_owner_map, check_topology, halo_exchange, Field, FieldKind, GridSpec, OwnedRef, Owner,
    Stagger, Topology,
};
use esmck_core::ir::{lower, parse_program, print_program};
use esmck_core::kpp::{compute_k, euler_decay, g_repaired_lower_bound, g_shape, KppParams, KppState, KppVariant};
use esmck_core::rational::{int, ratio, Rational};
use esmck_core::runseq::{
    generate_sequence, parse_components, validate_sequence, ComponentDecl, Entry, GenerateError, RunSequence,
};
use esmck_core::solve::{replay, Witness};
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

const DEFECT_TIME_LIMIT: Duration = Duration::from_secs(5);
const FIX_TIME_LIMIT: Duration = Duration::from_secs(60);
const FIX_BUDGET: &str = "100000";
const IDENTITY_SAMPLES: usize = 10_000;
const DNU_BOUND_SAMPLES: usize = 1_000;
const EULER_SAMPLES: usize = 10_000;
const EULER_MAX_STEPS: u32 = 20;
const EXCHANGE_FIELDS: usize = 100;
const SEED: u64 = 0;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus").join(name)
}

fn esmck(args: &[&str]) -> (i32, String, Duration) {
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_esmck"))
        .args(args)
        .env_remove("ESMCK_SOLVER")
        .output()
        .unwrap();
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into_owned(), start.elapsed())
}

fn z3() -> Option<&'static str> {
    ["/usr/local/bin/z3", "/usr/bin/z3"].into_iter().find(|p| Path::new(p).exists())
}

fn rand_ratio(rng: &mut ChaCha8Rng, lo: i64, hi: i64, max_den: i64) -> Rational {
    let q = rng.random_range(1..=max_den);
    ratio(rng.random_range(lo * q..=hi * q), q)
}

fn open_unit(rng: &mut ChaCha8Rng) -> Rational {
    let q = rng.random_range(2..=1000);
    ratio(rng.random_range(1..q), q)
}

fn positive(rng: &mut ChaCha8Rng) -> Rational {
    ratio(rng.random_range(1..=10_000), rng.random_range(1..=1000))
}

fn defect_reproduction() -> Verdict {
    let model = corpus("kpp_defective.hsl");
    let (code, out, elapsed) = esmck(&[
        "check",
        model.to_str().unwrap(),
        "--bound",
        "N=2",
        "--bound",
        "M=1",
        "--backend",
        "builtin",
        "--seed",
        &SEED.to_string(),
        "--format",
        "structured",
    ]);
    ensure(code == 1, format!("exit code {code}, expected 1"))?;
    let json: serde_json::Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    let violated = json["verdicts"]
        .as_array()
        .and_then(|vs| vs.iter().find(|v| v["result"] == "violated"))
        .ok_or("no violated verdict")?;
    ensure(violated["label"] == "K>0", format!("violated assert {}", violated["label"]))?;
    let k = &violated["trace"]["final_store"]["K"];
    let num: i128 = k["num"].as_str().and_then(|s| s.parse().ok()).ok_or("K missing")?;
    ensure(num < 0, format!("witness K = {k}"))?;
    ensure(elapsed < DEFECT_TIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("exit 1, K>0 violated, witness K<0, {:.2} s", elapsed.as_secs_f64()))
}

fn fix_verification() -> Verdict {
    let model = corpus("kpp_repaired.hsl");
    let m = model.to_str().unwrap();
    let base = ["check", m, "--bound", "N=3", "--bound", "M=3"];
    let mut args = base.to_vec();
    args.extend(["--backend", "builtin", "--budget", FIX_BUDGET]);
    let (code, out, elapsed) = esmck(&args);
    ensure(code == 2, format!("builtin exit code {code}, expected 2"))?;
    ensure(out.contains("no violation found"), "report does not say no violation found")?;
    ensure(!out.contains("VIOLATED"), "violation reported")?;
    ensure(elapsed < FIX_TIME_LIMIT, format!("builtin took {elapsed:?}"))?;
    let mut detail = format!("builtin exit 2, 0 violations, {:.1} s", elapsed.as_secs_f64());
    match z3() {
        Some(z3) => {
            let solver = format!("{z3} -smt2 {{file}}");
            let mut args = base.to_vec();
            args.extend(["--backend", "smt", "--solver", &solver]);
            let (code, out, _) = esmck(&args);
            ensure(code == 0, format!("smt exit code {code}, expected 0"))?;
            ensure(out.contains("result: verified, all 120 obligations hold"), "not all obligations unsat")?;
            detail.push_str("; smt exit 0, 120/120 unsat");
        }
        None => detail.push_str("; smt part skipped (no solver installed)"),
    }
    Ok(detail)
}

fn documented_witness() -> Witness {
    let values = [
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
    ];
    Witness {
        label: "K>0".into(),
        obligation: 0,
        bounds: [("N".to_string(), 2), ("M".to_string(), 1)].into_iter().collect(),
        havoc_order: values.iter().skip(4).map(|(n, _)| n.to_string()).collect(),
        assignment: values.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
        choices: vec![0, 0],
        target_assert: 6,
    }
}

fn exact_regression_witness() -> Verdict {
    let w = documented_witness();
    let mut finals = Vec::new();
    for (variant, expected) in [(KppVariant::Defective, ratio(-569, 27)), (KppVariant::Repaired, ratio(31, 27))] {
        let program = lower(&parse_program(variant.source()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let trace = replay(&program, &w).map_err(|e| e.to_string())?;
        let k = trace.value("K").ok_or("K missing")?;
        ensure(*k == expected, format!("{variant:?}: K = {k}, expected {expected}"))?;
        finals.push(k.to_string());
    }
    Ok(format!("K = {} (defective), {} (repaired)", finals[0], finals[1]))
}

fn positivity_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..IDENTITY_SAMPLES {
        let q = rng.random_range(1..=1000);
        let sigma = ratio(rng.random_range(1..=q), q);
        let r = positive(&mut rng);
        let g = g_shape(&sigma, &(int(-2) + int(3) * &r), &(Rational::one() - &r));
        let rhs = &sigma * g_repaired_lower_bound(&sigma, &r);
        ensure(g == rhs, format!("identity fails at sigma={sigma}, r={r}"))?;
        ensure(g.is_positive(), format!("G <= 0 at sigma={sigma}, r={r}"))?;
    }
    for _ in 0..DNU_BOUND_SAMPLES {
        let sigma = open_unit(&mut rng);
        let r = positive(&mut rng);
        let (h, w) = (positive(&mut rng), positive(&mut rng));
        let one = Rational::one();
        let bound = -g_repaired_lower_bound(&sigma, &r) / (&sigma * (&one - &sigma));
        let dnu = (&bound - positive(&mut rng)) * &w;
        let params = KppParams {
            dt: ratio(1, 2),
            zw: &one + &h * (&one - &sigma),
            d: &one + &h,
            w: w.clone(),
        };
        let state = KppState {
            h: h.clone(),
            sigma: sigma.clone(),
            nu: &r * &h * &w,
            dnu,
            ..KppState::initial(&params, one.clone(), one.clone())
        };
        let k = compute_k(&state, &params, KppVariant::Defective).map_err(|e| e.to_string())?.k;
        ensure(k.is_negative(), format!("K = {k} >= 0 at sigma={sigma}, r={r}"))?;
    }
    Ok(format!("{IDENTITY_SAMPLES} identity samples, {DNU_BOUND_SAMPLES} dnu-bound samples"))
}

fn euler_invariant() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    for _ in 0..EULER_SAMPLES {
        let zcr = positive(&mut rng);
        let zw = &zcr + rand_ratio(&mut rng, 0, 10, 10);
        let dt = open_unit(&mut rng);
        let alpha = open_unit(&mut rng);
        let m = rng.random_range(0..=EULER_MAX_STEPS);
        let mut z = &alpha * &zcr;
        for _ in 0..m {
            z = &z + (-&z) * &dt;
        }
        ensure(z == euler_decay(&(&alpha * &zcr), &dt, m), "closed form differs from stepping")?;
        ensure(zw >= z, format!("zw >= zCr fails: zw={zw}, zCr={z}"))?;
        ensure(z.is_positive(), format!("zCr > 0 fails: {z}"))?;
        ensure(!z.is_zero(), "zCr reached zero")?;
    }
    Ok(format!("{EULER_SAMPLES} samples, m <= {EULER_MAX_STEPS}"))
}

fn grid_suite() -> Verdict {
    let mut specs = Vec::new();
    for nx in [4, 6, 8] {
        for ny in [4, 6] {
            for halo in [1, 2] {
                for stagger in Stagger::ALL {
                    specs.push(GridSpec {
                        nx,
                        ny,
                        halo,
                        topology: Topology::Tripolar,
                        stagger,
                    });
                }
            }
        }
    }
    ensure(specs.len() == 48, "spec count")?;
    for spec in &specs {
        let report = check_topology(spec).map_err(|e| e.to_string())?;
        ensure(report.passed(), format!("{spec:?} fails"))?;
    }
    let mut mutations = 0usize;
    for spec in specs.iter().filter(|s| s.nx == 4 && s.ny == 4 && s.halo == 1) {
        let map = build_owner_map(spec).map_err(|e| e.to_string())?;
        for (&p, &owner) in &map {
            let mut variants = vec![Owner::Boundary];
            if let Owner::Owned(r) = owner {
                variants.push(Owner::Owned(OwnedRef { sign: -r.sign, ..r }));
                variants.extend(
                    spec.interior()
                        .filter(|&q| q != (r.i, r.j))
                        .map(|(i, j)| Owner::Owned(OwnedRef { i, j, sign: r.sign })),
                );
            } else {
                variants = vec![Owner::Owned(OwnedRef { i: 0, j: 0, sign: 1 })];
            }
            for v in variants {
                let mut mutated = map.clone();
                mutated.insert(p, v);
                ensure(!check_owner_map(spec, &mutated).passed(), format!("{spec:?}: mutation at {p:?} not caught"))?;
                mutations += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    for k in 0..EXCHANGE_FIELDS {
        let spec = specs[rng.random_range(0..specs.len())];
        let kind = if k % 2 == 0 { FieldKind::Scalar } else { FieldKind::Vector };
        let mut field = Field::from_fn(&spec, kind, |_, _| 0.0);
        for v in field.values.values_mut() {
            *v = rng.random_range(-1e3..1e3);
        }
        let once = halo_exchange(&spec, &field).map_err(|e| e.to_string())?;
        let twice = halo_exchange(&spec, &once).map_err(|e| e.to_string())?;
        ensure(once == twice, format!("exchange not idempotent on {spec:?}"))?;
    }
    Ok(format!("48 specs pass, {mutations} mutations caught, {EXCHANGE_FIELDS} fields idempotent"))
}

fn sequence_for(order: &[usize], decls: &[ComponentDecl]) -> RunSequence {
    let mut entries = Vec::new();
    for &c in order {
        entries.push(Entry::run(&decls[c].name));
        for consumer in decls {
            let fields: Vec<String> = consumer
                .imports
                .keys()
                .filter(|f| decls[c].exports.contains(*f))
                .cloned()
                .collect();
            if !fields.is_empty() {
                entries.push(Entry::Exchange {
                    fields,
                    from: decls[c].name.clone(),
                    to: consumer.name.clone(),
                });
            }
        }
    }
    RunSequence { interval: 3600, entries }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    (0..n).fold(vec![vec![]], |acc, c| {
        acc.into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..=p.len()).map(move |k| {
                    let mut q = p.clone();
                    q.insert(k, c);
                    q
                })
            })
            .collect()
    })
}

fn digits(mut code: usize, len: usize, base: usize) -> Vec<usize> {
    (0..len)
        .map(|_| {
            let d = code % base;
            code /= base;
            d
        })
        .collect()
}

/// Generator result agrees with the all-permutations oracle.
fn oracle_agrees(decls: &[ComponentDecl], perms: &[Vec<usize>]) -> bool {
    let feasible = perms.iter().any(|p| validate_sequence(&sequence_for(p, decls), decls).ok);
    match generate_sequence(decls) {
        Ok(seq) => feasible && validate_sequence(&seq, decls).ok,
        Err(GenerateError::Cycle(_)) => !feasible,
        Err(_) => false,
    }
}

fn runseq_suite() -> Verdict {
    let decls = parse_components(&std::fs::read_to_string(corpus("cesm.components")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let seq = generate_sequence(&decls).map_err(|e| e.to_string())?;
    ensure(validate_sequence(&seq, &decls).ok, "CESM sequence invalid")?;
    ensure(generate_sequence(&decls).ok() == Some(seq.clone()), "generation not deterministic")?;
    ensure(
        seq.entries.first() == Some(&Entry::run("ATM")),
        "ATM does not run first",
    )?;

    // Lagged imports never constrain the order, so unlagged imports suffice;
    // field exporters are enumerated up to relabeling of fields.
    let mut cases = Vec::new();
    for n in 1..=4usize {
        for m in 0..=4usize {
            for ex_code in 0..n.pow(m as u32) {
                let ex = digits(ex_code, m, n);
                if ex.windows(2).any(|w| w[0] > w[1]) {
                    continue;
                }
                for im_code in 0..1usize << (n * m) {
                    let im = digits(im_code, n * m, 2);
                    if im.iter().enumerate().all(|(k, &v)| v == 0 || ex[k % m] != k / m) {
                        cases.push((n, ex.clone(), im));
                    }
                }
            }
        }
    }
    let perms: Vec<Vec<Vec<usize>>> = (0..=4).map(permutations).collect();
    let failures = cases
        .par_iter()
        .filter(|(n, ex, im)| {
            let m = ex.len();
            let decls: Vec<ComponentDecl> = (0..*n)
                .map(|c| {
                    let mut d = ComponentDecl::new(&format!("C{c}"));
                    for f in 0..m {
                        if ex[f] == c {
                            d.exports.insert(format!("f{f}"));
                        }
                        if im[c * m + f] == 1 {
                            d.imports.insert(format!("f{f}"), false);
                        }
                    }
                    d
                })
                .collect();
            !oracle_agrees(&decls, &perms[*n])
        })
        .count();
    ensure(failures == 0, format!("{failures} decl sets disagree with the oracle"))?;

    let cycle = parse_components("A exports y imports x\nB exports x imports y\n").map_err(|e| e.to_string())?;
    match generate_sequence(&cycle) {
        Err(GenerateError::Cycle(r)) => ensure(r.cycle == ["A", "B"], format!("cycle {:?}", r.cycle))?,
        other => return Err(format!("2-cycle not rejected: {other:?}")),
    }
    Ok(format!("CESM example valid, {} decl sets match the oracle, 2-cycle rejected", cases.len()))
}

fn round_trip_and_golden() -> Verdict {
    let dir = corpus("");
    let mut models = 0;
    for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|e| e == "hsl") {
            let src = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
            let parsed = parse_program(&src).map_err(|e| e.to_string())?;
            let reparsed = parse_program(&print_program(&parsed)).map_err(|e| e.to_string())?;
            ensure(reparsed == parsed, format!("{} does not round-trip", path.display()))?;
            models += 1;
        }
    }
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = corpus("kpp_defective.hsl");
    let (code, _, _) = esmck(&[
        "emit-smt",
        model.to_str().unwrap(),
        "--bound",
        "N=2",
        "--bound",
        "M=1",
        "--output",
        out.path().to_str().unwrap(),
    ]);
    ensure(code == 0, format!("emit-smt exit code {code}"))?;
    let golden_dir = corpus("golden/kpp_defective_n2_m1");
    let mut golden: BTreeMap<String, String> = BTreeMap::new();
    for entry in std::fs::read_dir(&golden_dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        golden.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read_to_string(&path).map_err(|e| e.to_string())?,
        );
    }
    ensure(golden.len() == 9, format!("{} golden files, expected 9", golden.len()))?;
    for (name, expected) in &golden {
        let written = std::fs::read_to_string(out.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(&written == expected, format!("{name} differs from golden"))?;
    }
    Ok(format!("{models} models round-trip, 9 golden SMT files match"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("defect reproduction", defect_reproduction),
        ("fix verification", fix_verification),
        ("exact regression witness", exact_regression_witness),
        ("positivity identity", positivity_identity),
        ("euler invariant", euler_invariant),
        ("grid brute force", grid_suite),
        ("run sequences", runseq_suite),
        ("round trip and golden smt", round_trip_and_golden),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {} {name}: {detail}", k + 1),
            Err(why) => {
                println!("FAIL {} {name}: {why}", k + 1);
                failed.push(k + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
