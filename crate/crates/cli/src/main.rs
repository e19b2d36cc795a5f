//! `offload-opt`: generate scenarios, solve them, sweep delay budgets and
//! bandwidth, and verify solutions against the brute-force oracle.
//!
//! Exit codes: 0 success, 2 input error, 3 solver failure, 4 verification
//! failure. `OFFLOAD_OPT_THREADS` caps the worker count of sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use offload_core::config::{parse_config, ScenarioConfig};
use offload_core::metrics::{bandwidth_tradeoff, sweep_grid, CutoffArgs, SweepError};
use offload_core::optimizer::{allocate_rho, kkt_residuals, solve, KktTolerances, SolverOptions};
use offload_core::oracle::{compare, grid_search, GridSpec};
use offload_core::report::{cutoff_csv, metrics_csv, parse_solution_csv, solution_csv};
use offload_core::scenario::{generate, serialize_scenario};
use offload_core::units::{parse_count_list, parse_list, parse_quantity, parse_range, Quantity};
use offload_core::Scenario;

#[derive(Parser)]
#[command(
    name = "offload-opt",
    version,
    about = "Energy-optimal edge offloading under a delay budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario file generated from a config (or the defaults).
    Gen {
        /// Config file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Placement seed, overriding the config's.
        #[arg(long)]
        seed: Option<u64>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a scenario and print the per-user decision and a summary.
    Solve {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics over a grid of delay budgets and bandwidth fractions.
    Sweep {
        /// Scenario or config file; defaults when omitted.
        input: Option<PathBuf>,
        /// Delay grid `from:to:step`, e.g. `1ms:20ms:1ms`.
        #[arg(long)]
        tmax: String,
        /// Bandwidth fractions, e.g. `0.2,0.4,1.0`.
        #[arg(long, default_value = "1.0")]
        bw: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cut-off delay for every (fraction, user count) pair.
    Cutoff {
        /// Scenario or config file; defaults when omitted.
        input: Option<PathBuf>,
        /// Bandwidth fractions, e.g. `0.2,0.4,1.0`.
        #[arg(long, default_value = "1.0")]
        bw: String,
        /// User counts, e.g. `20,40,60`; the config's count when omitted.
        #[arg(long)]
        n: Option<String>,
        #[command(flatten)]
        grid: CutoffFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a solution against the KKT conditions and, for up to three
    /// users, against exhaustive grid search.
    Verify {
        scenario: PathBuf,
        /// Solution file from `solve`; solved afresh when omitted.
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Share step of the exhaustive grid.
        #[arg(long, default_value = "0.005")]
        grid_step: String,
        /// Also write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CutoffFlags {
    #[arg(long, default_value = "0.05ms")]
    t_start: String,
    #[arg(long, default_value = "50ms")]
    t_end: String,
    #[arg(long, default_value = "0.05ms")]
    step: String,
    #[arg(long, default_value = "1e-6")]
    slope_tol: String,
}

enum Failure {
    Input(String),
    Solver(String),
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Verify(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Solver(m) | Failure::Verify(m) => m,
        }
    }
}

type Outcome = Result<(), Failure>;

fn input<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Input(format!("{context}: {e}"))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(input(path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, text).map_err(input(path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    match path {
        Some(p) => parse_config(&read(p)?).map_err(input(p.display())),
        None => Ok(ScenarioConfig::default()),
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let cfg = load_config(Some(path))?;
    generate(&cfg).map_err(input(path.display()))
}

fn sweep_failure(e: SweepError) -> Failure {
    match e {
        SweepError::Solve { .. } => Failure::Solver(e.to_string()),
        other => Failure::Input(other.to_string()),
    }
}

fn cmd_gen(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Outcome {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let scenario = generate(&cfg).map_err(input("scenario"))?;
    let text = serialize_scenario(&scenario).map_err(input("scenario"))?;
    emit(out, &text)
}

fn cmd_solve(path: &Path, out: Option<&Path>) -> Outcome {
    let scenario = load_scenario(path)?;
    let sol =
        solve(&scenario, &SolverOptions::default()).map_err(|e| Failure::Solver(e.to_string()))?;
    let text = solution_csv(&scenario, &sol).map_err(|e| Failure::Solver(e.to_string()))?;
    emit(out, &text)
}

fn cmd_sweep(path: Option<&Path>, tmax: &str, bw: &str, out: Option<&Path>) -> Outcome {
    let cfg = load_config(path)?;
    let t = parse_range(tmax, Quantity::Time).map_err(input("--tmax"))?;
    let fractions = parse_list(bw, Quantity::Dimensionless).map_err(input("--bw"))?;
    let rows =
        sweep_grid(&cfg, &t, &fractions, &SolverOptions::default()).map_err(sweep_failure)?;
    emit(out, &metrics_csv(&rows))
}

fn cmd_cutoff(
    path: Option<&Path>,
    bw: &str,
    n: Option<&str>,
    flags: &CutoffFlags,
    out: Option<&Path>,
) -> Outcome {
    let cfg = load_config(path)?;
    let fractions = parse_list(bw, Quantity::Dimensionless).map_err(input("--bw"))?;
    let counts = match n {
        Some(list) => parse_count_list(list).map_err(input("--n"))?,
        None => vec![cfg.n_users],
    };
    let args = CutoffArgs {
        t_start: parse_quantity(&flags.t_start, Quantity::Time).map_err(input("--t-start"))?,
        t_end: parse_quantity(&flags.t_end, Quantity::Time).map_err(input("--t-end"))?,
        step: parse_quantity(&flags.step, Quantity::Time).map_err(input("--step"))?,
        slope_tol: parse_quantity(&flags.slope_tol, Quantity::Dimensionless)
            .map_err(input("--slope-tol"))?,
    };
    let cells = bandwidth_tradeoff(&cfg, &fractions, &counts, &args, &SolverOptions::default())
        .map_err(sweep_failure)?;
    emit(out, &cutoff_csv(&cells))
}

fn cmd_verify(
    path: &Path,
    solution: Option<&Path>,
    grid_step: &str,
    report: Option<&Path>,
) -> Outcome {
    let scenario = load_scenario(path)?;
    let opts = SolverOptions::default();
    let step = parse_quantity(grid_step, Quantity::Dimensionless).map_err(input("--grid-step"))?;
    let spec = GridSpec {
        step,
        ..GridSpec::default()
    };
    if !(step > 0.0 && step <= 0.5) {
        return Err(Failure::Input(format!(
            "--grid-step: {step} must lie in (0, 0.5]"
        )));
    }
    let sol = match solution {
        Some(p) => {
            let file = parse_solution_csv(&read(p)?).map_err(input(p.display()))?;
            let ids: Vec<_> = scenario.users.iter().map(|u| u.id).collect();
            if file.ids != ids {
                return Err(Failure::Verify(format!(
                    "{}: user ids do not match the scenario",
                    p.display()
                )));
            }
            file.solution
        }
        None => solve(&scenario, &opts).map_err(|e| Failure::Solver(e.to_string()))?,
    };

    let mut text = String::from("check,value\n");
    let mut problems: Vec<String> = Vec::new();
    match kkt_residuals(&scenario, &sol, &opts) {
        Ok(kkt) => {
            let _ = writeln!(text, "primal_slack,{:e}", kkt.primal_feasibility);
            let _ = writeln!(
                text,
                "max_stationarity_residual_j,{:e}",
                kkt.max_interior_stationarity()
            );
            let _ = writeln!(text, "nu,{:e}", sol.nu);
            let _ = writeln!(text, "nu_slack,{:e}", kkt.nu_slack);
            let _ = writeln!(
                text,
                "max_psi_alpha,{:e}",
                kkt.psi_alpha.iter().fold(0.0f64, |m, p| m.max(p.abs()))
            );
            problems.extend(kkt.violations(&KktTolerances::default()));
        }
        Err(e) => problems.push(e.to_string()),
    }
    match allocate_rho(&scenario, &sol.alpha) {
        Ok(rho) => {
            let worst = rho
                .iter()
                .zip(&sol.rho)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let _ = writeln!(text, "max_rho_mismatch,{worst:e}");
            if worst > 1e-9 {
                problems.push(format!(
                    "server shares differ from the required ones by {worst}"
                ));
            }
        }
        Err(e) => problems.push(e.to_string()),
    }

    let n = scenario.users.len();
    if n > spec.max_users {
        let _ = writeln!(text, "grid,skipped ({n} users exceeds {})", spec.max_users);
    } else {
        let oracle =
            grid_search(&scenario, &spec, &opts).map_err(|e| Failure::Solver(e.to_string()))?;
        let c = compare(&scenario, &sol, &oracle, &spec, &opts)
            .map_err(|e| Failure::Verify(e.to_string()))?;
        let _ = writeln!(text, "oracle_energy_j,{:e}", c.oracle_energy);
        let _ = writeln!(text, "solver_energy_j,{:e}", c.solver_energy);
        let _ = writeln!(text, "energy_gap_j,{:e}", c.energy_gap);
        let _ = writeln!(text, "gap_bound_j,{:e}", c.gap_bound);
        let _ = writeln!(text, "max_alpha_deviation,{:e}", c.max_alpha_deviation);
        let _ = writeln!(text, "oracle_feasible,{}", c.oracle_feasible);
        if !c.within_bounds(&spec) {
            problems.push(format!(
                "oracle disagreement: gap {} (bound {}), interior deviation {}",
                c.energy_gap, c.gap_bound, c.max_interior_deviation
            ));
        }
    }
    let _ = writeln!(
        text,
        "verdict,{}",
        if problems.is_empty() { "pass" } else { "fail" }
    );
    emit(report, &text)?;
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(problems.join("; ")))
    }
}

fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("OFFLOAD_OPT_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Failure::Input(format!(
            "OFFLOAD_OPT_THREADS: `{raw}` is not a positive count"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(input("OFFLOAD_OPT_THREADS"))
}

fn run(cli: Cli) -> Outcome {
    configure_threads()?;
    match &cli.command {
        Command::Gen { config, seed, out } => cmd_gen(config.as_deref(), *seed, out.as_deref()),
        Command::Solve { scenario, out } => cmd_solve(scenario, out.as_deref()),
        Command::Sweep {
            input,
            tmax,
            bw,
            out,
        } => cmd_sweep(input.as_deref(), tmax, bw, out.as_deref()),
        Command::Cutoff {
            input,
            bw,
            n,
            grid,
            out,
        } => cmd_cutoff(input.as_deref(), bw, n.as_deref(), grid, out.as_deref()),
        Command::Verify {
            scenario,
            solution,
            grid_step,
            report,
        } => cmd_verify(scenario, solution.as_deref(), grid_step, report.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("offload-opt: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
