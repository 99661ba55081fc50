//! `pmp`: solve, verify and differentiate contingency-constrained DC OPF cases.
//!
//! Exit codes: 0 converged (or oracle optimal), 1 error or invalid input, 2 iteration
//! limit reached, 3 diverged, 4 infeasible. Thread count follows `RAYON_NUM_THREADS`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pmp_core::devices::ParamField;
use pmp_core::io::{self, CaseFile, GenCaseOptions, GradFile, SolutionFile};
use pmp_core::network::Problem;
use pmp_core::oracle;
use pmp_core::qp::InnerStop;
use pmp_core::sensitivity::{self, Objective, ParameterSelector};
use pmp_core::solver::{self, AdaptiveConfig, SolverConfig, Status};

const EXIT_ERROR: u8 = 1;
const EXIT_MAX_ITER: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

/// Largest monolithic QP the `grad` command solves for its exact baseline.
const ORACLE_BASELINE_VARS: usize = 4000;

#[derive(Parser)]
#[command(
    name = "pmp",
    version,
    about = "Proximal message passing for multi-period, N-1 DC optimal power flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a case by message passing.
    Solve(SolveArgs),
    /// Solve a case exactly with the dense interior-point reference.
    Oracle(OracleArgs),
    /// Sensitivity of the total cost to device parameters.
    Grad(GradArgs),
    /// Write a synthetic case.
    GenCase(GenArgs),
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// Absolute tolerance ε.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    min_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    rho_p: f64,
    #[arg(long, default_value_t = 1.0)]
    rho_theta: f64,
    /// Over-relaxation in [1, 2).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Penalty adaptation interval; 0 keeps the penalties fixed.
    #[arg(long, default_value_t = 10)]
    adapt_every: usize,
    #[arg(long, default_value_t = 2.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.1)]
    gamma: f64,
    /// Inner iterations per prox for battery and generic QP devices.
    #[arg(long, default_value_t = 10)]
    inner_iters: usize,
    /// Accepted for reproducible scripts; the solver itself draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

impl SolverFlags {
    fn config(&self, trace_every: usize) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            min_iter: self.min_iter,
            rho_p: self.rho_p,
            rho_theta: self.rho_theta,
            alpha: self.alpha,
            adaptive: (self.adapt_every > 0).then_some(AdaptiveConfig {
                mu: self.mu,
                gamma: self.gamma,
                every: self.adapt_every,
            }),
            inner: InnerStop::Fixed(self.inner_iters),
            trace_every,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    case: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Solution file of an earlier run to start from.
    #[arg(long)]
    warm: Option<PathBuf>,
    /// Residual trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    trace_every: usize,
    /// Solution JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    case: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradArgs {
    case: PathBuf,
    /// `<group>:<field>[:<d1>,<d2>,...]`, group by name or index, e.g. `generator:p_max`.
    #[arg(long)]
    wrt: String,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Central finite differences instead of the unrolled adjoint.
    #[arg(long)]
    fd: bool,
    /// Relative finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    h: f64,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 24)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    contingencies: usize,
    #[arg(long, default_value_t = 0.6)]
    load_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_case(path: &Path) -> Result<Problem> {
    let case = io::read_case(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(case.problem()?)
}

fn emit<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => {
            let text = serde_json::to_string_pretty(value)?;
            std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn run_solve(args: &SolveArgs) -> Result<u8> {
    let problem = load_case(&args.case)?;
    let trace_every = if args.trace.is_some() {
        args.trace_every.max(1)
    } else {
        0
    };
    let config = args.solver.config(trace_every);
    let warm = match &args.warm {
        Some(p) => {
            let sol = io::read_solution(p).with_context(|| format!("reading {}", p.display()))?;
            Some(
                sol.state
                    .ok_or_else(|| anyhow!("{} carries no solver state", p.display()))?,
            )
        }
        None => None,
    };
    let sol = solver::solve(&problem, &config, warm.as_ref())?;
    if let Some(p) = &args.trace {
        io::write_trace_file(p, &sol.trace).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(
        args.out.as_deref(),
        &SolutionFile::from_solution(&problem, &sol),
    )?;
    eprintln!(
        "{:?} after {} iterations, objective {}",
        sol.status, sol.iterations, sol.objective
    );
    Ok(match sol.status {
        Status::Converged => 0,
        Status::MaxIter => EXIT_MAX_ITER,
        Status::Diverged => EXIT_DIVERGED,
    })
}

fn run_oracle(args: &OracleArgs) -> Result<u8> {
    let problem = load_case(&args.case)?;
    match oracle::solve_problem(&problem, args.tol) {
        Ok((_, sol)) => {
            emit(
                args.out.as_deref(),
                &SolutionFile::from_oracle(&problem, &sol),
            )?;
            eprintln!(
                "optimal after {} iterations, objective {}",
                sol.iterations, sol.objective
            );
            Ok(0)
        }
        Err(pmp_core::Error::Infeasible(detail)) => {
            let report = serde_json::json!({
                "version": io::FORMAT_VERSION,
                "status": "infeasible",
                "detail": detail,
            });
            emit(args.out.as_deref(), &report)?;
            eprintln!("infeasible: {detail}");
            Ok(EXIT_INFEASIBLE)
        }
        Err(e) => Err(e.into()),
    }
}

fn parse_selector(text: &str, problem: &Problem) -> Result<ParameterSelector> {
    let mut parts = text.split(':');
    let group = parts.next().unwrap_or_default();
    let field = parts
        .next()
        .ok_or_else(|| anyhow!("selector '{text}' needs <group>:<field>"))?;
    let group = match group.parse::<usize>() {
        Ok(i) => i,
        Err(_) => problem
            .network
            .groups
            .iter()
            .position(|g| g.name == group)
            .ok_or_else(|| anyhow!("no group named '{group}'"))?,
    };
    let field = ParamField::parse(field).ok_or_else(|| {
        let names: Vec<_> = ParamField::ALL.iter().map(|f| f.name()).collect();
        anyhow!(
            "unknown field '{field}', expected one of {}",
            names.join(", ")
        )
    })?;
    let mut sel = ParameterSelector::new(group, field);
    if let Some(list) = parts.next() {
        let devices = list
            .split(',')
            .map(|d| {
                d.trim()
                    .parse::<usize>()
                    .with_context(|| format!("bad device index '{d}'"))
            })
            .collect::<Result<Vec<_>>>()?;
        sel = sel.with_devices(devices);
    }
    if parts.next().is_some() {
        bail!("selector '{text}' has too many parts");
    }
    sel.resolve(problem)?;
    Ok(sel)
}

fn oracle_baseline(
    problem: &Problem,
    sel: &ParameterSelector,
    devices: &[usize],
) -> Option<Vec<Option<f64>>> {
    let m = oracle::assemble(problem);
    if m.num_vars() > ORACLE_BASELINE_VARS {
        return None;
    }
    let sol = oracle::solve_exact(problem, &m, 1e-9).ok()?;
    Some(
        devices
            .iter()
            .map(|&d| sol.param_gradient(problem, &m, sel.group, d, sel.field))
            .collect(),
    )
}

fn run_grad(args: &GradArgs) -> Result<u8> {
    let problem = load_case(&args.case)?;
    let sel = parse_selector(&args.wrt, &problem)?;
    let (devices, _) = sel.resolve(&problem)?;
    let config = args.solver.config(0);
    let (method, gradient) = if args.fd {
        let g = sensitivity::grad_fd(
            &problem,
            &config,
            &Objective::TotalCost,
            &sel,
            args.h,
            Some(args.iters),
        )?;
        ("finite_difference", g)
    } else {
        let tape =
            sensitivity::solve_with_tape(&problem, &config, args.iters).map_err(|e| match e {
                pmp_core::Error::Unsupported(msg) => anyhow!("{msg}; rerun with --fd"),
                other => other.into(),
            })?;
        (
            "unrolled",
            sensitivity::grad(&tape, &Objective::TotalCost, &sel)?,
        )
    };
    let file = GradFile {
        version: io::FORMAT_VERSION,
        selector: sel.clone(),
        devices: devices.clone(),
        method: method.into(),
        iterations: args.iters,
        step: args.fd.then_some(args.h),
        gradient,
        oracle: oracle_baseline(&problem, &sel, &devices),
    };
    emit(args.out.as_deref(), &file)?;
    Ok(0)
}

fn run_gen(args: &GenArgs) -> Result<u8> {
    if args.nodes == 0 {
        bail!("--nodes must be at least 1");
    }
    let case: CaseFile = io::generate_case(&GenCaseOptions {
        nodes: args.nodes,
        horizon: args.horizon,
        contingencies: args.contingencies,
        load_scale: args.load_scale,
        seed: args.seed,
    });
    match &args.out {
        Some(p) => io::write_case(p, &case).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{}", serde_json::to_string_pretty(&case)?),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Grad(a) => run_grad(a),
        Command::GenCase(a) => run_gen(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
