//! `ocsr` — derive and integrate optimal-control extremals.
//!
//! Four subcommands over a JSON problem file:
//!
//! * `derive` — build the unified-space Hamiltonian system and write
//!   `hamiltonian.txt`, `stationarity.txt`, `adjoint.txt`, and
//!   `regularity.txt`;
//! * `chain` — run the tangency/constraint iteration to a verdict and
//!   write `chain.txt` and `chain.json`;
//! * `integrate` — flow the determined field from the declared initial
//!   values and write `trajectory.csv` and `diagnostics.txt`;
//! * `shoot` — additionally solve the two-point boundary problem for the
//!   free initial coordinates before flowing.
//!
//! All randomness (the zero-test sampler) flows from the single `--seed`,
//! so identical invocations produce byte-identical outputs.
//!
//! Exit codes: `0` success (an exhausted or inconsistent chain is still a
//! successful run of `chain`; a warning goes to stderr), `2` input error,
//! `3` derivation error, `4` numerical failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ocsr_core::constraint_engine::{
    chain_json, chain_report, determined_field, run_chain, ChainOptions, ChainStatus,
    ConstraintChain, EngineError,
};
use ocsr_core::integrate::{
    diagnose, diagnostics_text, flow, initial_point, shoot, write_csv, IntegrateError, Projector,
};
use ocsr_core::pontryagin::{build, PontryaginSystem};
use ocsr_core::problem::{Problem, ProblemError};
use ocsr_core::symexpr::{print_canonical, Sampler, SamplerConfig, Truth, DEFAULT_SEED};

#[derive(Parser)]
#[command(
    name = "ocsr",
    version,
    about = "Derive and integrate optimal-control extremals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the Hamiltonian, stationarity, and adjoint structure.
    Derive(Opts),
    /// Run the constraint chain to a verdict.
    Chain(Opts),
    /// Integrate the determined field from the declared initial values.
    Integrate(Opts),
    /// Solve the two-point boundary problem, then integrate.
    Shoot(Opts),
}

#[derive(Args)]
struct Opts {
    /// Problem description (JSON).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Output directory (created if absent).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Seed for the randomized identity tests.
    #[arg(long, value_name = "N", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Integration step size.
    #[arg(long, value_name = "H", default_value_t = 1e-3)]
    h: f64,
    /// Horizon override; defaults to the problem's `T`.
    #[arg(long = "T", value_name = "T")]
    horizon: Option<f64>,
    /// Cap on tangency rounds; defaults to twice the coordinate count.
    #[arg(long, value_name = "K")]
    max_gen: Option<usize>,
    /// Sample points per identity test.
    #[arg(long, value_name = "N", default_value_t = 16)]
    trials: usize,
    /// Relative tolerance for the identity tests.
    #[arg(long, value_name = "X", default_value_t = 1e-9)]
    tol: f64,
}

/// Command failure with its exit code. Module errors are printed verbatim.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn derivation(message: impl Into<String>) -> Failure {
        Failure {
            code: 3,
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>) -> Failure {
        Failure {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<ProblemError> for Failure {
    fn from(e: ProblemError) -> Failure {
        Failure::input(e.to_string())
    }
}

impl From<ocsr_core::pontryagin::PontryaginError> for Failure {
    fn from(e: ocsr_core::pontryagin::PontryaginError) -> Failure {
        Failure::derivation(e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Failure {
        Failure::derivation(e.to_string())
    }
}

impl From<IntegrateError> for Failure {
    fn from(e: IntegrateError) -> Failure {
        match e {
            // Bad or missing user-supplied data is an input problem, not a
            // numerical one.
            IntegrateError::ParameterValue { .. }
            | IntegrateError::UnknownBoundaryName { .. }
            | IntegrateError::NoTargets
            | IntegrateError::BadHorizon => Failure::input(e.to_string()),
            _ => Failure::numerical(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Derive(opts) => cmd_derive(opts),
        Command::Chain(opts) => cmd_chain(opts),
        Command::Integrate(opts) => cmd_integrate(opts),
        Command::Shoot(opts) => cmd_shoot(opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_problem(opts: &Opts) -> Result<Problem, Failure> {
    if !(opts.h > 0.0) {
        return Err(Failure::input("step size --h must be positive"));
    }
    if !(opts.tol > 0.0) {
        return Err(Failure::input("tolerance --tol must be positive"));
    }
    if opts.trials == 0 {
        return Err(Failure::input("--trials must be positive"));
    }
    let text = std::fs::read_to_string(&opts.input).map_err(|e| {
        Failure::input(format!("cannot read {}: {e}", opts.input.display()))
    })?;
    Ok(Problem::from_json_str(&text)?)
}

fn sampler_for(opts: &Opts) -> Sampler {
    Sampler::new(
        opts.seed,
        SamplerConfig {
            trials: opts.trials,
            tol: opts.tol,
        },
    )
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn identity_text(t: Truth) -> &'static str {
    match t {
        Truth::True => "ok",
        Truth::False => "violated",
        Truth::Undecidable => "undecidable",
    }
}

fn build_system(opts: &Opts) -> Result<PontryaginSystem, Failure> {
    let problem = load_problem(opts)?;
    Ok(build(&problem, opts.seed)?)
}

fn run_the_chain(opts: &Opts) -> Result<(ConstraintChain, Sampler), Failure> {
    let sys = build_system(opts)?;
    let mut sampler = sampler_for(opts);
    let chain_opts = ChainOptions {
        max_generations: opts.max_gen,
    };
    let chain = run_chain(&sys, &chain_opts, &mut sampler)?;
    Ok((chain, sampler))
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_derive(opts: &Opts) -> Result<(), Failure> {
    let sys = build_system(opts)?;
    let table = &sys.table;

    let hamiltonian = format!("{}\n", print_canonical(&sys.hamiltonian, table));

    let mut stationarity = String::new();
    for c in &sys.stationarity {
        let _ = writeln!(
            stationarity,
            "{} = 0   where {} := {}",
            c.name,
            c.name,
            print_canonical(&c.expr, table)
        );
    }

    let mut sampler = sampler_for(opts);
    let report = sys.adjoint_equations(&mut sampler)?;
    let mut adjoint = String::new();
    for (sym, rate) in &report.assignments {
        let _ = writeln!(
            adjoint,
            "{} = {}",
            table.name(*sym),
            print_canonical(rate, table)
        );
    }
    for (lam, value) in &report.multipliers {
        match value {
            Some(expr) => {
                let _ = writeln!(
                    adjoint,
                    "{} = {}",
                    table.name(*lam),
                    print_canonical(expr, table)
                );
            }
            None => {
                let _ = writeln!(adjoint, "{} = (undetermined at generation 0)", table.name(*lam));
            }
        }
    }
    let _ = writeln!(adjoint, "identity: {}", identity_text(report.identity));

    let certificate = sys.regularity(&mut sampler)?;

    write_file(&opts.out, "hamiltonian.txt", &hamiltonian)?;
    write_file(&opts.out, "stationarity.txt", &stationarity)?;
    write_file(&opts.out, "adjoint.txt", &adjoint)?;
    write_file(&opts.out, "regularity.txt", &certificate.to_string())?;
    Ok(())
}

fn cmd_chain(opts: &Opts) -> Result<(), Failure> {
    let (chain, _) = run_the_chain(opts)?;
    write_file(&opts.out, "chain.txt", &chain_report(&chain))?;
    let json = serde_json_pretty(&chain_json(&chain));
    write_file(&opts.out, "chain.json", &json)?;
    if chain.status != ChainStatus::Determined {
        eprintln!("warning: chain finished with status {}", chain.status);
    }
    Ok(())
}

fn serde_json_pretty(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("chain report serializes");
    text.push('\n');
    text
}

fn horizon_for(opts: &Opts, problem: &Problem) -> Result<f64, Failure> {
    match opts.horizon.or(problem.boundary.horizon) {
        Some(t) if t > 0.0 => Ok(t),
        Some(_) => Err(Failure::input("horizon T must be positive")),
        None => Err(Failure::input(
            "no horizon: pass --T or declare boundary.T in the problem file",
        )),
    }
}

fn cmd_integrate(opts: &Opts) -> Result<(), Failure> {
    let (chain, mut sampler) = run_the_chain(opts)?;
    let field = determined_field(&chain, &mut sampler)?;
    let horizon = horizon_for(opts, &field.system.problem)?;
    let boundary = field.system.problem.boundary.clone();
    let projector = Projector::new(&field);
    let start = initial_point(&field, &boundary)?;
    let traj = flow(&field, &projector, &start, horizon, opts.h)?;
    let diag = diagnose(&field, &traj, opts.h)?;
    write_file(&opts.out, "trajectory.csv", &write_csv(&field, &traj))?;
    write_file(
        &opts.out,
        "diagnostics.txt",
        &diagnostics_text(&field, &diag, None),
    )?;
    Ok(())
}

fn cmd_shoot(opts: &Opts) -> Result<(), Failure> {
    let (chain, mut sampler) = run_the_chain(opts)?;
    let field = determined_field(&chain, &mut sampler)?;
    let horizon = horizon_for(opts, &field.system.problem)?;
    let boundary = field.system.problem.boundary.clone();
    if boundary.q_final.is_empty() {
        return Err(Failure::input(
            "shoot needs terminal targets: declare boundary.qT in the problem file",
        ));
    }
    let projector = Projector::new(&field);
    let (traj, report) = shoot(&field, &projector, &boundary, horizon, opts.h)?;
    let diag = diagnose(&field, &traj, opts.h)?;
    write_file(&opts.out, "trajectory.csv", &write_csv(&field, &traj))?;
    write_file(
        &opts.out,
        "diagnostics.txt",
        &diagnostics_text(&field, &diag, Some(&report)),
    )?;
    Ok(())
}
