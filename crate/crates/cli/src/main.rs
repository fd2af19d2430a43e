use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use esmck_core::grid::{check_topology, GridConfig, TopologyReport};
use esmck_core::ir::{lower, parse_program, Program, VarSort};
use esmck_core::runseq::{
    generate_sequence, parse_components, parse_run_sequence, validate_sequence, GenerateError, ValidationReport,
};
use esmck_core::solve::{check_program, emit_smt, write_smt_files, Backend, CheckConfig, Outcome, Verdict, SOLVER_ENV};
use esmck_core::symexec::{explore, Bounds, ExplorationSummary};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_UNKNOWN: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "esmck", version, about = "Bounded model checking and structural checks for Earth System Model code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Explore a model and discharge every assert obligation.
    Check(CheckArgs),
    /// Search for a counterexample with the builtin falsifier only.
    Falsify(CheckArgs),
    /// Write one SMT-LIB2 script per obligation.
    EmitSmt(EmitArgs),
    /// Tripolar grid topology checks.
    #[command(subcommand)]
    Grid(GridCommand),
    /// Coupled-model run sequences.
    #[command(subcommand)]
    Runseq(RunseqCommand),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Builtin,
    Smt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    model: PathBuf,
    /// Integer input bound, e.g. `N=2`; repeat for each input.
    #[arg(long = "bound", value_parser = parse_bound)]
    bounds: Vec<(String, i64)>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = BackendKind::Builtin)]
    backend: BackendKind,
    /// Residual evaluations per obligation for the builtin falsifier.
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    budget: u64,
    /// Solver command template; `{file}` marks the script path.
    #[arg(long, env = SOLVER_ENV)]
    solver: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct EmitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Directory for `obligation_<i>.smt2`; scripts go to stdout otherwise.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum GridCommand {
    /// Check every topology law for a grid description.
    Check {
        spec: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Subcommand, Debug)]
enum RunseqCommand {
    /// Validate a run sequence against component declarations.
    Validate {
        components: PathBuf,
        sequence: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Generate a run sequence from component declarations.
    Generate {
        components: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
}

fn parse_bound(s: &str) -> Result<(String, i64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value = value
        .trim()
        .parse::<i64>()
        .map_err(|_| format!("bound `{s}` needs an integer value"))?;
    Ok((name.trim().to_string(), value))
}

/// A finished command: report text and exit code.
struct Report {
    body: String,
    code: u8,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn to_json(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load_model(args: &ModelArgs) -> Result<(Program, Bounds)> {
    let program = parse_program(&read(&args.model)?).with_context(|| format!("in {}", args.model.display()))?;
    let program = lower(&program)?;
    let mut bounds = Bounds::default();
    for (name, value) in &args.bounds {
        match program.input(name) {
            Some(i) if i.sort == VarSort::Int => {}
            _ => bail!("bound given for `{name}`, which is not an integer input"),
        }
        if *value < 0 {
            bail!("bound {name}={value} is negative");
        }
        if bounds.inputs.insert(name.clone(), *value).is_some() {
            bail!("bound for `{name}` given twice");
        }
    }
    for input in program.inputs.iter().filter(|i| i.sort == VarSort::Int) {
        if !bounds.inputs.contains_key(&input.name) {
            bail!("missing bound for integer input `{}` (use --bound {}=<n>)", input.name, input.name);
        }
    }
    Ok((program, bounds))
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    command: &'a str,
    model: String,
    bounds: &'a BTreeMap<String, i64>,
    backend: &'static str,
    seed: u64,
    budget: u64,
    summary: &'a ExplorationSummary,
    result: &'static str,
    verdicts: Vec<&'a Verdict>,
}

fn rational_text(r: &esmck_core::Rational) -> String {
    r.to_string()
}

fn verdict_text(out: &mut String, v: &Verdict) {
    match &v.outcome {
        Outcome::HoldsProved => {
            let _ = writeln!(out, "obligation {} [{}]: holds (proved)", v.obligation, v.label);
        }
        Outcome::Unknown { reason } => {
            let _ = writeln!(out, "obligation {} [{}]: unknown ({reason})", v.obligation, v.label);
        }
        Outcome::Violated { witness, trace } => {
            let _ = writeln!(out, "obligation {} [{}]: VIOLATED", v.obligation, v.label);
            let _ = writeln!(out, "  witness:");
            // Inputs first, then havocs in execution order.
            let havocs: Vec<&String> = witness.havoc_order.iter().collect();
            let others = witness.assignment.keys().filter(|k| !havocs.contains(k));
            for name in others.chain(havocs.iter().copied()) {
                if let Some(value) = witness.assignment.get(name) {
                    let _ = writeln!(out, "    {name} = {}", rational_text(value));
                }
            }
            let choices: Vec<String> = witness.choices.iter().map(i64::to_string).collect();
            let _ = writeln!(out, "  choices: [{}]", choices.join(", "));
            if let Some(a) = trace.asserts.get(witness.target_assert) {
                let _ = writeln!(out, "  failing assert: {} at {}", a.label, a.id);
            }
            let _ = writeln!(out, "  final state:");
            for (name, value) in &trace.final_store {
                let _ = writeln!(out, "    {name} = {}", rational_text(value));
            }
        }
    }
}

fn run_check(args: &CheckArgs, falsify_only: bool) -> Result<Report> {
    let (program, bounds) = load_model(&args.model)?;
    let backend = match (falsify_only, args.backend) {
        (true, _) | (false, BackendKind::Builtin) => Backend::Builtin,
        (false, BackendKind::Smt) => Backend::Smt {
            command: args.solver.clone().unwrap_or_default(),
        },
    };
    let config = CheckConfig {
        backend,
        budget: args.budget,
        seed: args.seed,
        jobs: args.jobs as usize,
    };
    let report = check_program(&program, &bounds, &config)?;
    let violations = report.verdicts.iter().filter(|v| v.is_violated()).count();
    let (code, result) = if violations > 0 {
        (EXIT_VIOLATION, "violation")
    } else if report.verified() {
        (EXIT_OK, "verified")
    } else {
        (EXIT_UNKNOWN, "unknown")
    };
    let command = if falsify_only { "falsify" } else { "check" };
    // Falsification reports only what it found.
    let shown: Vec<&Verdict> = report
        .verdicts
        .iter()
        .filter(|v| !falsify_only || v.is_violated())
        .collect();
    let model = args.model.model.display().to_string();
    let body = match args.out.format {
        Format::Structured => to_json(&CheckOutput {
            command,
            model,
            bounds: &bounds.inputs,
            backend: config.backend.name(),
            seed: args.seed,
            budget: args.budget,
            summary: &report.summary,
            result,
            verdicts: shown,
        })?,
        Format::Text => {
            let mut out = String::new();
            let bound_text: Vec<String> = bounds.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(
                out,
                "{command} {model} [{}] backend={} seed={}",
                bound_text.join(", "),
                config.backend.name(),
                args.seed
            );
            let s = &report.summary;
            let _ = writeln!(
                out,
                "paths: {}, obligations: {}, pruned: {}, abandoned: {}, complete: {}",
                s.paths,
                s.obligations,
                s.pruned_infeasible,
                s.abandoned,
                if s.complete { "yes" } else { "no" }
            );
            for v in shown {
                verdict_text(&mut out, v);
            }
            let proved = report.verdicts.iter().filter(|v| v.is_proved()).count();
            let _ = match code {
                EXIT_VIOLATION => writeln!(out, "result: {violations} violation(s) found"),
                EXIT_OK => writeln!(out, "result: verified, all {proved} obligations hold"),
                _ => writeln!(
                    out,
                    "result: no violation found ({proved} of {} obligations proved)",
                    report.verdicts.len()
                ),
            };
            out
        }
    };
    Ok(Report { body, code })
}

fn run_emit(args: &EmitArgs) -> Result<Report> {
    let (program, bounds) = load_model(&args.model)?;
    let exploration = explore(&program, &bounds)?;
    let body = match &args.output {
        Some(dir) => {
            let names = write_smt_files(&exploration.obligations, dir)
                .with_context(|| format!("cannot write to {}", dir.display()))?;
            let mut out = String::new();
            for n in names {
                let _ = writeln!(out, "{}", dir.join(n).display());
            }
            out
        }
        None => exploration.obligations.iter().map(emit_smt).collect::<Vec<_>>().join("\n"),
    };
    Ok(Report { body, code: EXIT_OK })
}

fn grid_text(reports: &[TopologyReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let s = &r.spec;
        let _ = writeln!(
            out,
            "grid {}x{} halo {} {:?} {:?}: {} positions, {} boundary",
            s.nx, s.ny, s.halo, s.topology, s.stagger, r.positions, r.boundary_positions
        );
        for law in &r.laws {
            let status = if law.passed { "pass" } else { "FAIL" };
            match law.counterexample {
                Some((i, j)) => {
                    let _ = writeln!(out, "  {status} {}: {} at ({i}, {j})", law.law, law.detail);
                }
                None => {
                    let _ = writeln!(out, "  {status} {}: {}", law.law, law.detail);
                }
            }
        }
    }
    out
}

fn run_grid(spec: &Path, out: &OutputArgs) -> Result<Report> {
    let config: GridConfig =
        serde_json::from_str(&read(spec)?).with_context(|| format!("invalid grid description {}", spec.display()))?;
    let reports = config
        .specs()
        .iter()
        .map(check_topology)
        .collect::<Result<Vec<_>, _>>()?;
    let code = if reports.iter().all(TopologyReport::passed) {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    };
    let body = match out.format {
        Format::Structured => to_json(&reports)?,
        Format::Text => grid_text(&reports),
    };
    Ok(Report { body, code })
}

fn validation_text(r: &ValidationReport) -> String {
    let mut out = String::new();
    for v in &r.violations {
        let _ = writeln!(out, "{v}");
    }
    let _ = writeln!(out, "result: {}", if r.ok { "valid" } else { "invalid" });
    out
}

fn run_runseq(command: &RunseqCommand) -> Result<Report> {
    match command {
        RunseqCommand::Validate {
            components,
            sequence,
            out,
        } => {
            let decls = parse_components(&read(components)?).with_context(|| format!("in {}", components.display()))?;
            let seq =
                parse_run_sequence(&read(sequence)?, &decls).with_context(|| format!("in {}", sequence.display()))?;
            let report = validate_sequence(&seq, &decls);
            let body = match out.format {
                Format::Structured => to_json(&report)?,
                Format::Text => validation_text(&report),
            };
            let code = if report.ok { EXIT_OK } else { EXIT_VIOLATION };
            Ok(Report { body, code })
        }
        RunseqCommand::Generate { components, out } => {
            let decls = parse_components(&read(components)?).with_context(|| format!("in {}", components.display()))?;
            match generate_sequence(&decls) {
                Ok(seq) => {
                    let body = match out.format {
                        Format::Structured => to_json(&seq)?,
                        Format::Text => seq.to_string(),
                    };
                    Ok(Report { body, code: EXIT_OK })
                }
                Err(GenerateError::Cycle(cycle)) => {
                    let body = match out.format {
                        Format::Structured => to_json(&cycle)?,
                        Format::Text => format!("unlagged dependency cycle: {}\n", cycle.cycle.join(" -> ")),
                    };
                    Ok(Report {
                        body,
                        code: EXIT_VIOLATION,
                    })
                }
                Err(e) => Err(anyhow!(e)),
            }
        }
    }
}

fn output_path(command: &Command) -> Option<&Path> {
    match command {
        Command::Check(a) | Command::Falsify(a) => a.out.output.as_deref(),
        Command::EmitSmt(_) => None,
        Command::Grid(GridCommand::Check { out, .. })
        | Command::Runseq(RunseqCommand::Validate { out, .. })
        | Command::Runseq(RunseqCommand::Generate { out, .. }) => out.output.as_deref(),
    }
}

fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Check(args) => run_check(args, false),
        Command::Falsify(args) => run_check(args, true),
        Command::EmitSmt(args) => run_emit(args),
        Command::Grid(GridCommand::Check { spec, out }) => run_grid(spec, out),
        Command::Runseq(c) => run_runseq(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("esmck: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match output_path(&cli.command) {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &report.body) {
                eprintln!("esmck: cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_USAGE);
            }
        }
        None => print!("{}", report.body),
    }
    ExitCode::from(report.code)
}
