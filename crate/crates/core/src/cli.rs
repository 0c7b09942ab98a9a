//! The `pevplan` command line: plan, validate, generate, report, verify.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 no
//! convergence. Failures print one JSON object on stderr. A run directory
//! carries a `.incomplete` marker until every output file is written and
//! the solve converged.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::benders::{run_prepared, solve_monolithic, verify_strong_duality, BendersConfig, BendersStatus, CutMode, IterationRecord};
use crate::error::{Error, Result};
use crate::io::{build_report, generate_synthetic, load_instance, write_report_csv, InstanceFile, SyntheticSizes};
use crate::mip::MibStatus;
use crate::model::{FirstStageDecision, PreparedModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

pub const INCOMPLETE_MARKER: &str = ".incomplete";
pub const SOLUTION_FILE: &str = "solution.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "pevplan", version, about = "Joint PEV charging station and PV planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Benders,
    Monolithic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an instance and write solution.json and report.json to --out.
    Plan {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Benders)]
        mode: Mode,
        #[arg(long, default_value_t = 0.005)]
        eps1: f64,
        #[arg(long, default_value_t = 0.02)]
        eps2: f64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
        /// Relative gap of every branch-and-bound solve.
        #[arg(long, default_value_t = 1e-4)]
        mip_gap: f64,
        /// One value variable and cut per scenario instead of one overall.
        #[arg(long)]
        per_scenario_cuts: bool,
        /// Check each cut at its generating point and at random points.
        #[arg(long)]
        audit_cuts: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an instance file and print the defaults that were applied.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Write a seeded synthetic instance.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Multiplies node, bus and path counts.
        #[arg(long, default_value_t = 1)]
        scale: usize,
        #[arg(long, default_value_t = 2)]
        scenarios: usize,
        #[arg(long, default_value_t = 3)]
        hours: usize,
    },
    /// Re-evaluate a finished run and write its tables.
    Report {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
        format: ReportFormat,
        /// Output directory; defaults to the solution directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Strong-duality and exactness diagnostics at a given first-stage point.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        /// A solution.json or a JSON array of first-stage values.
        #[arg(long)]
        x_hat: PathBuf,
    },
}

/// Contents of `solution.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub format_version: u32,
    /// Absolute path of the instance that was solved.
    pub instance: PathBuf,
    pub mode: Mode,
    pub converged: bool,
    /// Investment plus expected operation cost of `x`, $/year.
    pub objective: f64,
    #[serde(with = "crate::benders::extended_f64")]
    pub lower_bound: f64,
    pub seed: u64,
    pub threads: usize,
    pub eps1: f64,
    pub eps2: f64,
    /// First-stage vector in model layout order.
    pub x: Vec<f64>,
    pub history: Vec<IterationRecord>,
}

impl SolutionFile {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(SOLUTION_FILE))?;
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", dir.join(SOLUTION_FILE).display())))
    }
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Input(_) | Error::Validation { .. } | Error::InfeasibleTrip { .. } | Error::Toml(_) | Error::Csv(_) | Error::Io(_) => EXIT_INVALID,
        Error::NonConvergence(_) => EXIT_NOT_CONVERGED,
        Error::Dimension { .. } | Error::Infeasible(_) | Error::Solver(_) => EXIT_SOLVER,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Input(_) => "input",
        Error::Validation { .. } => "validation",
        Error::InfeasibleTrip { .. } => "infeasible_trip",
        Error::Toml(_) => "schema",
        Error::Csv(_) => "csv",
        Error::Io(_) => "io",
        Error::NonConvergence(_) => "not_converged",
        Error::Dimension { .. } => "dimension",
        Error::Infeasible(_) => "infeasible",
        Error::Solver(_) => "solver",
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return EXIT_OK;
            }
            let report = ErrorReport {
                error: "usage",
                message: e.kind().to_string() + ": " + e.render().to_string().lines().next().unwrap_or("").trim_start_matches("error: "),
                exit_code: EXIT_INVALID,
            };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_default());
            return EXIT_INVALID;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(err) => {
            let code = exit_code(&err);
            let report = ErrorReport {
                error: error_kind(&err),
                message: err.to_string(),
                exit_code: code,
            };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| err.to_string()));
            code
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Input(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Runs one command; errors are mapped to exit codes by [`run`].
pub fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Plan {
            instance,
            mode,
            eps1,
            eps2,
            threads,
            max_iterations,
            mip_gap,
            per_scenario_cuts,
            audit_cuts,
            seed,
            out,
        } => {
            let cfg = BendersConfig {
                eps1: *eps1,
                eps2: *eps2,
                max_iterations: *max_iterations,
                threads: *threads,
                mip_gap: *mip_gap,
                cut_mode: if *per_scenario_cuts { CutMode::PerScenario } else { CutMode::Aggregated },
                audit_cuts: *audit_cuts,
                seed: *seed,
                ..BendersConfig::default()
            };
            cfg.validate()?;
            plan(instance, *mode, &cfg, out)
        }
        Command::Validate { instance } => {
            let text = fs::read_to_string(instance)?;
            let file = InstanceFile::parse(&text)?;
            let inst = load_instance(instance)?;
            println!(
                "ok instance={} transport_nodes={} buses={} classes={} paths={} scenarios={} hours={} pv_candidates={}",
                instance.display(),
                inst.transport.nodes.len(),
                inst.grid.buses.len(),
                inst.classes.len(),
                inst.paths.len(),
                inst.scenarios.len(),
                inst.hours,
                inst.pv.candidates.len()
            );
            let c = &inst.costs;
            println!(
                "costs energy_buy={} energy_sell={} unserved_penalty={} voltage_penalty={} discount_rate={} life_cs_years={} life_pv_years={} dt_hours={} days_per_year={}",
                c.energy_buy, c.energy_sell, c.unserved_penalty, c.voltage_penalty, c.discount_rate, c.life_cs_years, c.life_pv_years, c.dt_hours, c.days_per_year
            );
            println!("sizing alpha={} p_sp_kw={}", inst.sizing.alpha, inst.sizing.p_sp_kw);
            for s in &inst.scenarios {
                println!("scenario id={} probability={} v0_pu={}", s.id, s.probability, s.v0.sqrt());
            }
            for d in file.defaults_applied() {
                println!("default {d}");
            }
            Ok(EXIT_OK)
        }
        Command::Generate {
            seed,
            out,
            scale,
            scenarios,
            hours,
        } => {
            if *scale == 0 {
                return Err(Error::Input("--scale must be positive".into()));
            }
            let base = SyntheticSizes::default();
            let sizes = SyntheticSizes {
                transport_nodes: base.transport_nodes * scale,
                buses: base.buses * scale,
                paths: base.paths * scale,
                scenarios: *scenarios,
                hours: *hours,
                pv_candidates: base.pv_candidates * scale,
            };
            let file = generate_synthetic(*seed, sizes)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(out, file.to_toml()?)?;
            println!("wrote {} seed={seed}", out.display());
            Ok(EXIT_OK)
        }
        Command::Report { solution, format, out } => {
            let sol = SolutionFile::read(solution)?;
            let inst = load_instance(&sol.instance)?;
            let prep = PreparedModel::new(&inst)?;
            let x = FirstStageDecision { values: sol.x.clone() };
            let mut report = build_report(&inst, &prep, &x, sol.threads)?;
            report.history = sol.history;
            let dir = out.clone().unwrap_or_else(|| solution.clone());
            match format {
                ReportFormat::Csv => write_report_csv(&report, &dir)?,
                ReportFormat::Json => {
                    fs::create_dir_all(&dir)?;
                    write_json(&dir.join(REPORT_FILE), &report)?;
                }
            }
            println!("wrote report to {}", dir.display());
            Ok(EXIT_OK)
        }
        Command::Verify { instance, x_hat } => {
            let inst = load_instance(instance)?;
            let prep = PreparedModel::new(&inst)?;
            let text = fs::read_to_string(x_hat)?;
            let x: Vec<f64> = match serde_json::from_str::<SolutionFile>(&text) {
                Ok(s) => s.x,
                Err(_) => serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", x_hat.display())))?,
            };
            if x.len() != prep.layout.dim {
                return Err(Error::Dimension {
                    context: "verify --x-hat",
                    expected: prep.layout.dim,
                    got: x.len(),
                });
            }
            let reports = verify_strong_duality(&inst, &prep, &x)?;
            let mut flagged = 0;
            for r in &reports {
                println!(
                    "slot=\"{}\" primal={:.9e} dual={:.9e} rel_gap={:.3e} strictly_feasible={} exactness_residual={:.3e} exact={} flagged={}",
                    r.label, r.primal, r.dual, r.relative_gap, r.slater.strictly_feasible, r.max_exactness_residual, r.exact, r.flagged
                );
                flagged += r.flagged as usize;
            }
            println!("slots={} flagged={flagged}", reports.len());
            Ok(EXIT_OK)
        }
    }
}

fn plan(instance: &Path, mode: Mode, cfg: &BendersConfig, out: &Path) -> Result<i32> {
    let inst = load_instance(instance)?;
    let prep = PreparedModel::new(&inst)?;
    fs::create_dir_all(out)?;
    let marker = out.join(INCOMPLETE_MARKER);
    fs::write(&marker, "run in progress or stopped early\n")?;

    let (x, converged, lower_bound, history) = match mode {
        Mode::Benders => {
            let (x, state) = run_prepared(&inst, &prep, cfg)?;
            (x, state.status == BendersStatus::Converged, state.lb, state.history)
        }
        Mode::Monolithic => {
            let (x, sol) = solve_monolithic(&inst, &prep, cfg.mip_gap)?;
            (x, sol.status == MibStatus::Optimal, sol.bound, Vec::new())
        }
    };
    let mut report = build_report(&inst, &prep, &x, cfg.threads)?;
    report.history = history.clone();
    let solution = SolutionFile {
        format_version: 1,
        instance: fs::canonicalize(instance)?,
        mode,
        converged,
        objective: report.total,
        lower_bound,
        seed: cfg.seed,
        threads: cfg.threads,
        eps1: cfg.eps1,
        eps2: cfg.eps2,
        x: x.values,
        history,
    };
    write_json(&out.join(SOLUTION_FILE), &solution)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    println!(
        "mode={:?} converged={converged} objective={:.6} lower_bound={:.6} investment={:.6} operating={:.6} unsatisfied_pct={:.4}",
        mode,
        report.total,
        lower_bound,
        report.investment(),
        report.operating,
        report.unsatisfied_pct
    );
    for s in &report.stations {
        println!("station node={} spots={:.3}", s.node, s.spots);
    }
    for p in &report.pv {
        println!("pv bus={} kva={:.3}", p.bus, p.kva);
    }
    if !converged {
        let err = Error::NonConvergence(format!("{:?} stopped before reaching its gap; partial results in {}", mode, out.display()));
        return Err(err);
    }
    fs::remove_file(&marker)?;
    Ok(EXIT_OK)
}
