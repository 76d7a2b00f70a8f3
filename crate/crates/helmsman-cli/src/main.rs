//! Command-line front end: TOML config in, CSV/JSON/SVG reports out.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, bad config, bad
//! input files), 2 runtime failure (I/O trouble, unsolvable problem).

mod plot;

use clap::{Args, Parser, Subcommand, ValueEnum};
use helmsman_core::closed_loop::{run_closed_loop, RunError, RunResult, SolverKind};
use helmsman_core::config::{load_config, ConfigFile, ConfigFileError};
use helmsman_core::qp::{solve, QpProblem, SolveStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use helmsman_core::report::{
    write_cells_csv, write_fit_csv, write_summary_json, write_sweep_csv, write_trace_csv,
};
use helmsman_core::sweep::{cell_stats, fit_quadratic, run_sweep, SweepRecord};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Value accepted by `--seed` and the `HELMSMAN_SEED` environment variable.
const SEED_ENV: &str = "HELMSMAN_SEED";

#[derive(Parser)]
#[command(
    name = "helmsman",
    version,
    about = "Shipboard DC microgrid energy-management simulator",
    long_about = "Model-predictive dispatch of a generator/storage DC bus: closed-loop \
                  simulation, Monte-Carlo sweeps, and standalone QP solves.\n\n\
                  The HELMSMAN_SEED environment variable overrides --seed wherever a seed \
                  applies."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation; writes trace.csv and summary.json
    Simulate(SimulateArgs),
    /// Run the Monte-Carlo grid; writes sweep.csv, fit.csv (and cells.csv
    /// when replicates > 1)
    Sweep(SweepArgs),
    /// Solve one quadratic program from a text file and print the solution
    Solve(SolveArgs),
    /// Re-render SVG charts from the CSVs in an output directory
    Report(ReportArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Centralized,
    Admm,
}

impl From<SolverArg> for SolverKind {
    fn from(value: SolverArg) -> Self {
        match value {
            SolverArg::Centralized => SolverKind::Centralized,
            SolverArg::Admm => SolverKind::Admm,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML scenario description
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Directory for trace.csv and summary.json
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Override the solver named in the config
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Override the forecast-noise seed
    #[arg(long)]
    seed: Option<u64>,
    /// Also write supply_vs_load.svg and soc_trace.svg
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML scenario + sweep-plan description
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Directory for sweep.csv and fit.csv
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Override the solver named in the config
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Override the sweep's base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Also write degradation_curve.svg
    #[arg(long)]
    plot: bool,
    /// Worker threads for the grid (default: logical cores)
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file in the plain-text matrix format
    #[arg(value_name = "PROBLEM")]
    problem: PathBuf,
    /// Convergence tolerance on the optimality residuals
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Iteration budget
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding trace.csv and/or sweep.csv
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

enum CliError {
    /// Bad flags, config, or input files: exit 1.
    Validation(String),
    /// The machine failed us at a valid task: exit 2.
    Runtime(String),
}

impl From<ConfigFileError> for CliError {
    fn from(e: ConfigFileError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::Solve(args) => solve_file(args),
        Command::Report(args) => report(args),
    }
}

/// `HELMSMAN_SEED` beats `--seed` beats the config file.
fn effective_seed(flag: Option<u64>) -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(text) => text.parse::<u64>().map(Some).map_err(|_| {
            CliError::Validation(format!(
                "{SEED_ENV} must be an unsigned integer, got \"{text}\""
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => Err(CliError::Validation(format!("{SEED_ENV}: {e}"))),
    }
}

fn load_scenario_config(path: &Path) -> Result<(ConfigFile, PathBuf), CliError> {
    let config = load_config(path)?;
    let base_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    Ok((config, base_dir))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let (config, base_dir) = load_scenario_config(&args.config)?;
    let mut scenario = config.scenario(&base_dir)?;
    if let Some(solver) = args.solver {
        scenario.solver = solver.into();
    }
    if let Some(seed) = effective_seed(args.seed)? {
        scenario.noise.seed = seed;
    }
    ensure_out_dir(&args.out)?;

    let started = std::time::Instant::now();
    let result = run_closed_loop(&scenario)?;
    log::info!(
        "simulated {:.3} s of bus time in {:.2} s wall ({} periods, {} violations, {} failures)",
        scenario.total_time,
        started.elapsed().as_secs_f64(),
        result.steps.len(),
        result.violations,
        result.failures
    );

    write_file(&args.out.join("trace.csv"), &write_trace_csv(&result))?;
    write_file(&args.out.join("summary.json"), &write_summary_json(&result))?;
    if args.plot {
        write_file(
            &args.out.join("supply_vs_load.svg"),
            &plot::render(&supply_chart(&result)),
        )?;
        write_file(
            &args.out.join("soc_trace.svg"),
            &plot::render(&soc_chart(&result, Some(scenario.ems.target_soc))),
        )?;
    }
    println!(
        "wrote {} and {}",
        args.out.join("trace.csv").display(),
        args.out.join("summary.json").display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("cannot size worker pool: {e}")))?;
    }
    let (config, base_dir) = load_scenario_config(&args.config)?;
    let mut template = config.sweep_scenario(&base_dir)?;
    if let Some(solver) = args.solver {
        template.solver = solver.into();
    }
    let mut plan = config.sweep_plan();
    if let Some(seed) = effective_seed(args.seed)? {
        plan.base_seed = seed;
    }
    ensure_out_dir(&args.out)?;

    let started = std::time::Instant::now();
    let records = run_sweep(&plan, &template).map_err(|e| CliError::Validation(e.to_string()))?;
    log::info!(
        "swept {} runs in {:.2} s wall",
        records.len(),
        started.elapsed().as_secs_f64()
    );

    write_file(&args.out.join("sweep.csv"), &write_sweep_csv(&records))?;
    if plan.replicates > 1 {
        write_file(
            &args.out.join("cells.csv"),
            &write_cells_csv(&cell_stats(&records)),
        )?;
    }
    match fit_quadratic(&records) {
        Ok(fits) => {
            write_file(&args.out.join("fit.csv"), &write_fit_csv(&fits))?;
            if args.plot {
                write_file(
                    &args.out.join("degradation_curve.svg"),
                    &plot::render(&degradation_chart(&records)),
                )?;
            }
        }
        Err(e) => log::warn!("quadratic fit skipped: {e}"),
    }
    println!("wrote {}", args.out.join("sweep.csv").display());
    Ok(())
}

fn solve_file(args: SolveArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.problem).map_err(|e| {
        CliError::Validation(format!("cannot read {}: {e}", args.problem.display()))
    })?;
    let qp = QpProblem::parse_text(&text).map_err(|e| {
        CliError::Validation(format!("{}: {e}", args.problem.display()))
    })?;
    let solution = solve(&qp, args.tol, args.max_iter);
    let status = match solution.status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::Infeasible => "infeasible",
    };
    println!("status      {status}");
    println!("objective   {}", solution.objective);
    println!("iterations  {}", solution.iterations);
    println!("residual    {:e}", solution.kkt_residual);
    for (i, v) in solution.x.iter().enumerate() {
        println!("x[{i}] = {v}");
    }
    match solution.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::MaxIter => Err(CliError::Runtime(
            "iteration budget exhausted before convergence".into(),
        )),
        SolveStatus::Infeasible => Err(CliError::Runtime("problem is infeasible".into())),
    }
}

fn report(args: ReportArgs) -> Result<(), CliError> {
    let trace_path = args.out.join("trace.csv");
    let sweep_path = args.out.join("sweep.csv");
    let mut wrote = Vec::new();
    if trace_path.exists() {
        let result = parse_trace(&trace_path)?;
        let supply = args.out.join("supply_vs_load.svg");
        write_file(&supply, &plot::render(&supply_chart(&result)))?;
        let soc = args.out.join("soc_trace.svg");
        write_file(&soc, &plot::render(&soc_chart(&result, None)))?;
        wrote.push(supply);
        wrote.push(soc);
    }
    if sweep_path.exists() {
        let records = parse_sweep(&sweep_path)?;
        let curve = args.out.join("degradation_curve.svg");
        write_file(&curve, &plot::render(&degradation_chart(&records)))?;
        wrote.push(curve);
    }
    if wrote.is_empty() {
        return Err(CliError::Validation(format!(
            "nothing to report: neither {} nor {} exists",
            trace_path.display(),
            sweep_path.display()
        )));
    }
    for path in wrote {
        println!("wrote {}", path.display());
    }
    Ok(())
}

// ---- chart assembly ------------------------------------------------------

fn supply_chart(result: &RunResult) -> plot::Chart {
    let to_mw = 1e-6;
    let series = |label: &str, color: usize, f: &dyn Fn(&helmsman_core::closed_loop::StepRecord) -> f64| {
        plot::Series {
            label: label.to_string(),
            color: plot::PALETTE[color].to_string(),
            points: result.steps.iter().map(|s| (s.t, f(s) * to_mw)).collect(),
        }
    };
    plot::Chart {
        title: "Bus supply vs load".to_string(),
        x_label: "time (s)".to_string(),
        y_label: "power (MW)".to_string(),
        series: vec![
            series("load", 1, &|s| s.load),
            series("supply", 0, &|s| s.p_g + s.p_b),
            series("generator", 2, &|s| s.p_g),
            series("storage", 3, &|s| s.p_b),
        ],
    }
}

fn soc_chart(result: &RunResult, target: Option<f64>) -> plot::Chart {
    let mut series = vec![plot::Series {
        label: "state of charge".to_string(),
        color: plot::PALETTE[0].to_string(),
        points: result.steps.iter().map(|s| (s.t, s.soc)).collect(),
    }];
    if let (Some(q), Some(first), Some(last)) =
        (target, result.steps.first(), result.steps.last())
    {
        series.push(plot::Series {
            label: "set point".to_string(),
            color: plot::PALETTE[1].to_string(),
            points: vec![(first.t, q), (last.t, q)],
        });
    }
    plot::Chart {
        title: "Battery state of charge".to_string(),
        x_label: "time (s)".to_string(),
        y_label: "state of charge".to_string(),
        series,
    }
}

fn degradation_chart(records: &[SweepRecord]) -> plot::Chart {
    let stats = cell_stats(records);
    let mut noise_levels: Vec<f64> = Vec::new();
    for s in &stats {
        if !noise_levels.iter().any(|&n| n == s.noise_percent) {
            noise_levels.push(s.noise_percent);
        }
    }
    let series = noise_levels
        .iter()
        .enumerate()
        .map(|(i, &noise)| {
            let mut points: Vec<(f64, f64)> = stats
                .iter()
                .filter(|s| s.noise_percent == noise)
                .map(|s| (s.target_soc, s.mean_loss))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            plot::Series {
                label: format!("{noise}% noise"),
                color: plot::PALETTE[i % plot::PALETTE.len()].to_string(),
                points,
            }
        })
        .collect();
    plot::Chart {
        title: "Capacity loss vs charge set point".to_string(),
        x_label: "charge set point".to_string(),
        y_label: "capacity loss (%)".to_string(),
        series,
    }
}

// ---- CSV read-back for the report subcommand -----------------------------

fn parse_float(field: &str, path: &Path, line_no: usize) -> Result<f64, CliError> {
    field.parse().map_err(|_| {
        CliError::Validation(format!(
            "{} line {}: \"{}\" is not a number",
            path.display(),
            line_no,
            field
        ))
    })
}

fn check_header(text: &str, expected: &str, path: &Path) -> Result<(), CliError> {
    match text.lines().next() {
        Some(first) if first == expected => Ok(()),
        _ => Err(CliError::Validation(format!(
            "{} line 1: expected header \"{expected}\"",
            path.display()
        ))),
    }
}

/// Minimal trace reader: only the columns the charts need, into a RunResult
/// shell (the terminal figures are not recoverable from the trace).
fn parse_trace(path: &Path) -> Result<RunResult, CliError> {
    use helmsman_core::closed_loop::{StepOutcome, StepRecord};
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    check_header(&text, helmsman_core::report::TRACE_HEADER, path)?;
    let mut steps = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(CliError::Validation(format!(
                "{} line {}: expected 8 columns, got {}",
                path.display(),
                i + 1,
                cols.len()
            )));
        }
        steps.push(StepRecord {
            t: parse_float(cols[0], path, i + 1)?,
            p_g: parse_float(cols[1], path, i + 1)?,
            p_b: parse_float(cols[2], path, i + 1)?,
            load: parse_float(cols[3], path, i + 1)?,
            forecast: parse_float(cols[4], path, i + 1)?,
            soc: parse_float(cols[5], path, i + 1)?,
            mismatch: parse_float(cols[6], path, i + 1)?,
            outcome: StepOutcome::Optimal,
            solve_time: 0.0,
        });
    }
    Ok(RunResult {
        steps,
        ..RunResult::default()
    })
}

fn parse_sweep(path: &Path) -> Result<Vec<SweepRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    check_header(&text, helmsman_core::report::SWEEP_HEADER, path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(CliError::Validation(format!(
                "{} line {}: expected 7 columns, got {}",
                path.display(),
                i + 1,
                cols.len()
            )));
        }
        records.push(SweepRecord {
            noise_percent: parse_float(cols[0], path, i + 1)?,
            target_soc: parse_float(cols[1], path, i + 1)?,
            seed: cols[2].parse().map_err(|_| {
                CliError::Validation(format!(
                    "{} line {}: \"{}\" is not a seed",
                    path.display(),
                    i + 1,
                    cols[2]
                ))
            })?,
            capacity_loss: parse_float(cols[3], path, i + 1)?,
            gen_life: parse_float(cols[4], path, i + 1)?,
            violations: 0,
            failures: 0,
        });
    }
    Ok(records)
}
