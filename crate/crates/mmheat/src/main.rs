//! Command-line front end: `run` one configured problem, or `converge` the
//! refinement ladder for the exact-solution preset.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmheat::config::{parse_config, InterfaceMode, ParsedConfig};
use mmheat::driver::{self, RunOptions, DEFAULT_LADDER};
use mmheat::error::RunError;
use mmheat::model::{RunReport, Termination};
use mmheat::output;

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mmheat",
    version,
    about = "Moving-mesh solver for 1-D heat equations driven by traveling point sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configured problem and write trajectory, snapshot, and summary files.
    Run(RunArgs),
    /// Sweep the (N, L) refinement ladder on the exact-solution preset and tabulate errors.
    Converge(ConvergeArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a `key = value` config file.
    config: PathBuf,

    /// Output directory; overrides `out_dir` from the config (default ".").
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Close an absorbing right edge with the one-sided rule instead of the
    /// mirrored left rule.
    #[arg(long)]
    strict_paper_labc: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Keep every accepted step in the trajectory files instead of thinning
    /// them to 500 rows.
    #[arg(long)]
    full_trajectory: bool,

    /// Assert a summary quantity, e.g. `--check blow_up_time=2.0397:1e-2`.
    /// Repeatable; any miss exits with code 4.
    #[arg(long = "check", value_name = "KEY=VALUE:TOL")]
    checks: Vec<String>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: CommonArgs,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Converge(args) => cmd_converge(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mmheat: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load(common: &CommonArgs) -> Result<ParsedConfig, Failure> {
    let text = fs::read_to_string(&common.config).map_err(|e| {
        fail(
            EXIT_CONFIG,
            format!("cannot read {}: {e}", common.config.display()),
        )
    })?;
    let mut parsed = parse_config(&text).map_err(|e| fail(EXIT_CONFIG, e.to_string()))?;
    if common.strict_paper_labc {
        parsed.spec.strict_paper_labc = true;
    }
    Ok(parsed)
}

fn out_dir(common: &CommonArgs, parsed: &ParsedConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| parsed.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn solver_failure(err: RunError) -> Failure {
    match &err {
        RunError::Validation(problems) => {
            let mut msg = String::from("invalid problem:");
            for p in problems {
                let _ = write!(msg, "\n  {p}");
            }
            fail(EXIT_CONFIG, msg)
        }
        _ => fail(EXIT_SOLVER, err.to_string()),
    }
}

fn io_failure(err: io::Error) -> Failure {
    fail(EXIT_IO, format!("writing output: {err}"))
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let parsed = load(&args.common)?;
    let dir = out_dir(&args.common, &parsed);

    let mut opts = RunOptions {
        snapshot_times: parsed.snapshot_times.clone(),
        ..RunOptions::default()
    };
    if args.full_trajectory {
        opts.trajectory_cap = usize::MAX;
    }

    let report = driver::run(&parsed.spec, &opts).map_err(solver_failure)?;

    output::write_mesh_trajectory(&dir, &report.mesh_trajectory).map_err(io_failure)?;
    output::write_source_trajectory(&dir, &report.source_trajectory).map_err(io_failure)?;
    let snaps = output::write_snapshots(&dir, &report.snapshots).map_err(io_failure)?;
    output::write_summary(&dir, &parsed.example, &report).map_err(io_failure)?;

    print_run_summary(&parsed.example, &report);
    println!(
        "wrote mesh_trajectory.dat, source_trajectory.dat, {} snapshot file(s), summary.json in {}",
        snaps.len(),
        dir.display()
    );

    run_checks(&args.checks, &report)
}

fn print_run_summary(example: &str, report: &RunReport) {
    match report.termination {
        Termination::FinalTime => println!(
            "{example}: reached t = {:.12} in {} steps ({} rejected)",
            report.final_state.mesh.time, report.steps, report.rejected_steps
        ),
        Termination::BlowUp => println!(
            "{example}: blow-up detected after {} steps ({} rejected)",
            report.steps, report.rejected_steps
        ),
    }
    if let Some(b) = &report.blow_up {
        let at: Vec<String> = b
            .locations
            .iter()
            .zip(&b.source_indices)
            .map(|(x, i)| format!("x = {x:.15} (source {i})"))
            .collect();
        println!(
            "  blow-up time {:.15}, peak {:.6e}, at {}",
            b.time,
            b.peak,
            at.join(", ")
        );
    }
    println!(
        "  max |u| over run {:.6e}; newton: {} solves, {} iterations total, {} max",
        report.max_u_over_run,
        report.newton.solves,
        report.newton.total_iterations,
        report.newton.max_iterations
    );
    if let Some(e) = &report.errors {
        match e.interface_error {
            Some(ea) => println!(
                "  sup error vs exact {:.6e}, interface error {:.6e}",
                e.sup_error, ea
            ),
            None => println!("  sup error vs exact {:.6e}", e.sup_error),
        }
    }
}

const CHECK_KEYS: [&str; 8] = [
    "final_time",
    "steps",
    "max_u",
    "blow_up_time",
    "blow_up_peak",
    "blow_up_location",
    "e_inf",
    "e_alpha",
];

fn parse_check(raw: &str) -> Result<(String, f64, f64), Failure> {
    let bad = || {
        fail(
            EXIT_CONFIG,
            format!("bad --check '{raw}': expected KEY=VALUE:TOL"),
        )
    };
    let (key, rest) = raw.split_once('=').ok_or_else(bad)?;
    let (value, tol) = rest.split_once(':').ok_or_else(bad)?;
    let key = key.trim().to_string();
    if !CHECK_KEYS.contains(&key.as_str()) {
        return Err(fail(
            EXIT_CONFIG,
            format!(
                "unknown --check key '{key}' (known: {})",
                CHECK_KEYS.join(", ")
            ),
        ));
    }
    let value: f64 = value.trim().parse().map_err(|_| bad())?;
    let tol: f64 = tol.trim().parse().map_err(|_| bad())?;
    Ok((key, value, tol))
}

/// `blow_up_location` compares against the reported location nearest to the
/// expected one, so a symmetric pair of simultaneous peaks can be checked
/// one side at a time.
fn check_value(report: &RunReport, key: &str, want: f64) -> Option<f64> {
    match key {
        "final_time" => Some(report.final_state.mesh.time),
        "steps" => Some(report.steps as f64),
        "max_u" => Some(report.max_u_over_run),
        "blow_up_time" => report.blow_up.as_ref().map(|b| b.time),
        "blow_up_peak" => report.blow_up.as_ref().map(|b| b.peak),
        "blow_up_location" => report.blow_up.as_ref().and_then(|b| {
            b.locations
                .iter()
                .copied()
                .min_by(|a, c| (a - want).abs().total_cmp(&(c - want).abs()))
        }),
        "e_inf" => report.errors.map(|e| e.sup_error),
        "e_alpha" => report.errors.and_then(|e| e.interface_error),
        _ => unreachable!("key vetted in parse_check"),
    }
}

fn run_checks(checks: &[String], report: &RunReport) -> Result<(), Failure> {
    let mut misses = Vec::new();
    for raw in checks {
        let (key, want, tol) = parse_check(raw)?;
        match check_value(report, &key, want) {
            Some(got) if (got - want).abs() <= tol => {
                println!("check {key}: {got:.12e} within {tol:.3e} of {want:.12e}");
            }
            Some(got) => misses.push(format!(
                "{key}: got {got:.12e}, want {want:.12e} within {tol:.3e}"
            )),
            None => misses.push(format!("{key}: not produced by this run")),
        }
    }
    if misses.is_empty() {
        Ok(())
    } else {
        Err(fail(
            EXIT_CHECK,
            format!("checks failed:\n  {}", misses.join("\n  ")),
        ))
    }
}

fn cmd_converge(args: &ConvergeArgs) -> Result<(), Failure> {
    let parsed = load(&args.common)?;
    if parsed.example != "example1" {
        return Err(fail(
            EXIT_CONFIG,
            format!(
                "converge needs the exact-solution preset (example = example1), got '{}'",
                parsed.example
            ),
        ));
    }
    if parsed.mode != InterfaceMode::Exact {
        return Err(fail(
            EXIT_CONFIG,
            "converge sweeps both interface modes itself; drop the `mode` key",
        ));
    }
    let dir = out_dir(&args.common, &parsed);
    let ladder = parsed
        .ladder
        .clone()
        .unwrap_or_else(|| DEFAULT_LADDER.to_vec());

    let rows = driver::converge(&parsed.spec, &ladder).map_err(solver_failure)?;

    let path = output::write_convergence(&dir, &rows).map_err(io_failure)?;
    println!("{}", output::convergence_table(&rows));
    println!("wrote {}", path.display());
    Ok(())
}
