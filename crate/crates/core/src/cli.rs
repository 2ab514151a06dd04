//! Command-line front end: `check`, `solve`, `simulate` and `sweep`.
//!
//! Each command returns a [`CommandOutcome`] rather than exiting, so the
//! binary stays a thin wrapper and the commands are testable in-process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::dynamics::StrategyMode;
use crate::exec::{self, Execution};
use crate::game::{is_strictly_diagonally_dominant, CostModel};
use crate::oracle::{self, EquilibriumResult, OracleError};
use crate::output::{self, format_number, RunSummary};
use crate::scenario::{self, Scenario, ScenarioError};
use crate::simulation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_IO: i32 = 3;

const VERIFY_GRID: usize = 2001;
const VERIFY_EPS: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(
    name = "nash-seek",
    version,
    about = "Distributed Nash-equilibrium seeking simulator"
)]
pub struct Cli {
    /// Suppress the report on standard output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a scenario and report structural checks.
    Check {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
    },
    /// Compute the equilibrium with the direct solver.
    Solve {
        #[arg(long)]
        scenario: String,
        /// Confirm the result by brute-force unilateral deviations.
        #[arg(long)]
        verify: bool,
    },
    /// Integrate the seeking dynamics and write trajectory and summary.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one simulation per parameter value.
    Sweep {
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Delta,
    StepH,
    Topology,
    GainKAll,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Delta => "delta",
            SweepParam::StepH => "step_h",
            SweepParam::Topology => "topology",
            SweepParam::GainKAll => "gain_k_all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub code: i32,
    pub report: String,
    pub runs: Vec<RunSummary>,
    pub checks: Vec<CheckItem>,
    pub equilibrium: Option<EquilibriumResult>,
}

impl CommandOutcome {
    fn new(code: i32, report: String) -> Self {
        Self {
            code,
            report,
            runs: Vec::new(),
            checks: Vec::new(),
            equilibrium: None,
        }
    }

    pub fn is_success(&self) -> bool {
        self.code == EXIT_OK
    }
}

pub fn run(cli: &Cli) -> CommandOutcome {
    match &cli.command {
        Command::Check { scenario } => cmd_check(scenario),
        Command::Solve { scenario, verify } => cmd_solve(scenario, *verify),
        Command::Simulate { scenario, out } => cmd_simulate(scenario, out),
        Command::Sweep {
            scenario,
            param,
            values,
            out,
        } => cmd_sweep(scenario, *param, values, out, Execution::default()),
    }
}

/// Reads a scenario from `source`: a file path, or a bundled scenario name
/// when no such file exists.
pub fn load_scenario(source: &str) -> Result<Scenario, Box<CommandOutcome>> {
    let path = Path::new(source);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|e| {
            Box::new(CommandOutcome::new(
                EXIT_IO,
                format!("cannot read {source}: {e}\n"),
            ))
        })?
    } else if let Some(text) = scenario::bundled_source(source) {
        text.to_string()
    } else {
        return Err(Box::new(CommandOutcome::new(
            EXIT_IO,
            format!(
                "cannot read {source}: no such file or bundled scenario (bundled: {})\n",
                scenario::BUNDLED.join(", ")
            ),
        )));
    };
    scenario::parse_scenario(&text).map_err(|e| {
        let report = match e {
            ScenarioError::Parse(msg) => format!("invalid scenario {source}: {msg}\n"),
            ScenarioError::Validation(v) => {
                let mut s = format!("invalid scenario {source}:\n");
                for item in &v.violations {
                    let _ = writeln!(s, "  {item}");
                }
                s
            }
        };
        Box::new(CommandOutcome::new(EXIT_VALIDATION, report))
    })
}

/// The oracle matching the scenario's dynamics, or `None` for general cost
/// models where no closed-form solver applies.
pub fn oracle_for(s: &Scenario) -> Option<Result<EquilibriumResult, OracleError>> {
    if !s.game.is_hvac() {
        return None;
    }
    let has_stubborn = s.game.players().iter().any(|p| p.is_stubborn());
    Some(if has_stubborn {
        oracle::stubborn_equilibrium(&s.game)
    } else if s.strategy == StrategyMode::PrimalDual {
        oracle::constrained_equilibrium(&s.game)
    } else {
        oracle::inner_equilibrium(&s.game)
    })
}

fn header(s: &Scenario) -> String {
    format!(
        "scenario {} ({}, {} players, {} edges)\n",
        s.name,
        s.strategy.name(),
        s.game.n(),
        s.graph.edge_count()
    )
}

pub fn cmd_check(source: &str) -> CommandOutcome {
    let s = match load_scenario(source) {
        Ok(s) => s,
        Err(o) => return *o,
    };
    let mut checks = Vec::new();
    let connected = s.graph.is_connected();
    checks.push(CheckItem {
        name: "connected",
        passed: connected,
        detail: if connected {
            "yes"
        } else {
            "graph not connected"
        }
        .into(),
    });
    match s.graph.fiedler_value() {
        Ok(f) => checks.push(CheckItem {
            name: "fiedler",
            passed: s.game.n() == 1 || f > 0.0,
            detail: format_number(f),
        }),
        Err(e) => checks.push(CheckItem {
            name: "fiedler",
            passed: false,
            detail: e.to_string(),
        }),
    }
    if let Some(margin) = s.game.uniqueness_margin() {
        checks.push(CheckItem {
            name: "uniqueness margin",
            passed: margin > 0.0,
            detail: format_number(margin),
        });
    }
    let init = s.initial_state();
    match s.game.jacobian_b(init.l()) {
        Ok(b) => {
            let dominant = is_strictly_diagonally_dominant(&b).unwrap_or(false);
            checks.push(CheckItem {
                name: "B diagonally dominant",
                passed: dominant,
                detail: format!("at initial l: {}", if dominant { "yes" } else { "no" }),
            });
        }
        Err(e) => checks.push(CheckItem {
            name: "B diagonally dominant",
            passed: false,
            detail: e.to_string(),
        }),
    }
    if let CostModel::Hvac(_) = s.game.model() {
        let h = s.game.hessian_q().expect("linear pricing has a potential");
        let dominant = is_strictly_diagonally_dominant(&h).unwrap_or(false);
        checks.push(CheckItem {
            name: "H diagonally dominant",
            passed: dominant,
            detail: if dominant { "yes" } else { "no" }.into(),
        });
        let pd = h.clone().cholesky().is_some();
        let min_eig = h.symmetric_eigenvalues().min();
        checks.push(CheckItem {
            name: "H positive definite",
            passed: pd,
            detail: format!("min eigenvalue {}", format_number(min_eig)),
        });
    }
    let all = checks.iter().all(|c| c.passed);
    let mut report = header(&s);
    for c in &checks {
        let _ = writeln!(
            report,
            "  [{}] {}: {}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    report.push_str(if all {
        "all checks pass\n"
    } else {
        "some checks failed\n"
    });
    CommandOutcome {
        checks,
        ..CommandOutcome::new(if all { EXIT_OK } else { EXIT_VALIDATION }, report)
    }
}

fn oracle_name(s: &Scenario) -> &'static str {
    if s.game.players().iter().any(|p| p.is_stubborn()) {
        "stubborn equilibrium"
    } else if s.strategy == StrategyMode::PrimalDual {
        "constrained equilibrium"
    } else {
        "inner equilibrium"
    }
}

fn list(items: &[usize]) -> String {
    let names: Vec<String> = items.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", names.join(", "))
}

pub fn cmd_solve(source: &str, verify: bool) -> CommandOutcome {
    let s = match load_scenario(source) {
        Ok(s) => s,
        Err(o) => return *o,
    };
    let eq = match oracle_for(&s) {
        None => {
            return CommandOutcome::new(
                EXIT_VALIDATION,
                format!("{}solve requires linear pricing {{a, p0}}\n", header(&s)),
            )
        }
        Some(Err(e)) => {
            return CommandOutcome::new(EXIT_NUMERIC, format!("{}oracle failed: {e}\n", header(&s)))
        }
        Some(Ok(eq)) => eq,
    };
    let mut report = header(&s);
    let _ = writeln!(report, "{}", oracle_name(&s));
    let _ = writeln!(
        report,
        "  player  l*                eta_min       eta_max       status"
    );
    for i in 0..s.game.n() {
        let status = if eq.stubborn.contains(&i) {
            "stubborn"
        } else if eq.active_lower.contains(&i) {
            "lower bound"
        } else if eq.active_upper.contains(&i) {
            "upper bound"
        } else {
            "interior"
        };
        let _ = writeln!(
            report,
            "  {:<6}  {:<16}  {:<12}  {:<12}  {}",
            i + 1,
            format_number(eq.l_star[i]),
            format_number(eq.eta_star[2 * i]),
            format_number(eq.eta_star[2 * i + 1]),
            status
        );
    }
    let _ = writeln!(report, "aggregate {}", format_number(eq.aggregate));
    let _ = writeln!(report, "active lower {}", list(&eq.active_lower));
    let _ = writeln!(report, "active upper {}", list(&eq.active_upper));
    let _ = writeln!(
        report,
        "stationarity residual {}",
        format_number(eq.stationarity_residual)
    );
    let mut code = EXIT_OK;
    if verify {
        match oracle::verify_nash(&s.game, &eq.l_star, VERIFY_GRID, VERIFY_EPS) {
            Ok(check) => {
                let _ = writeln!(
                    report,
                    "verify_nash (grid {VERIFY_GRID}, eps {VERIFY_EPS}): {} (best deviation gain {})",
                    if check.is_nash { "pass" } else { "FAIL" },
                    format_number(check.worst_improvement)
                );
                if !check.is_nash {
                    code = EXIT_NUMERIC;
                }
            }
            Err(e) => {
                let _ = writeln!(report, "verify_nash failed: {e}");
                code = EXIT_NUMERIC;
            }
        }
    }
    CommandOutcome {
        equilibrium: Some(eq),
        ..CommandOutcome::new(code, report)
    }
}

/// Runs one scenario and writes its artifacts into `dir`.
fn run_one(s: &Scenario, dir: &Path) -> Result<RunSummary, Box<CommandOutcome>> {
    let oracle = match oracle_for(s) {
        Some(Ok(eq)) => Some(eq),
        _ => None,
    };
    let start = Instant::now();
    let traj = simulation::simulate(
        &s.game,
        &s.graph,
        s.strategy,
        s.delta,
        &s.initial_state(),
        &s.integrator,
    )
    .map_err(|e| {
        Box::new(CommandOutcome::new(
            EXIT_NUMERIC,
            format!("simulation failed: {e}\n"),
        ))
    })?;
    let wall = start.elapsed().as_secs_f64();
    let summary = RunSummary::new(
        &s.name,
        s.strategy.name(),
        &s.graph,
        &traj,
        oracle.as_ref(),
        wall,
    );
    let io_err = |e: std::io::Error| {
        Box::new(CommandOutcome::new(
            EXIT_IO,
            format!("cannot write to {}: {e}\n", dir.display()),
        ))
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    output::write_trajectory(&traj, &dir.join("trajectory.csv")).map_err(io_err)?;
    output::write_summary(&summary, &dir.join("summary.json")).map_err(io_err)?;
    Ok(summary)
}

fn stop_code(summary: &RunSummary) -> i32 {
    match summary.stop_reason.as_str() {
        "DIVERGED" | "NUMERIC_FAILURE" => EXIT_NUMERIC,
        _ => EXIT_OK,
    }
}

pub fn cmd_simulate(source: &str, out: &Path) -> CommandOutcome {
    let s = match load_scenario(source) {
        Ok(s) => s,
        Err(o) => return *o,
    };
    let summary = match run_one(&s, out) {
        Ok(summary) => summary,
        Err(o) => return *o,
    };
    let mut report = header(&s);
    let _ = writeln!(
        report,
        "stop {} at t = {} after {} steps",
        summary.stop_reason,
        format_number(summary.final_time),
        summary.steps
    );
    let finals: Vec<String> = summary.final_l.iter().map(|&v| format_number(v)).collect();
    let _ = writeln!(report, "final l ({})", finals.join(", "));
    let _ = writeln!(
        report,
        "final aggregate {}",
        format_number(summary.final_aggregate)
    );
    let _ = writeln!(
        report,
        "consensus error {}",
        format_number(summary.consensus_error)
    );
    let _ = writeln!(report, "residual {}", format_number(summary.final_residual));
    if let Some(m) = summary.min_eta {
        let _ = writeln!(report, "min eta {}", format_number(m));
    }
    match &summary.oracle {
        Some(cmp) => {
            let _ = writeln!(
                report,
                "max component error vs {} {}",
                oracle_name(&s),
                format_number(cmp.max_component_error)
            );
        }
        None => {
            let _ = writeln!(report, "no oracle for this scenario");
        }
    }
    let _ = writeln!(report, "wrote {}", out.display());
    CommandOutcome {
        code: stop_code(&summary),
        runs: vec![summary],
        ..CommandOutcome::new(EXIT_OK, report)
    }
}

fn variant(s: &Scenario, param: SweepParam, value: &str) -> Result<Scenario, String> {
    let number = || {
        value
            .parse::<f64>()
            .map_err(|_| format!("{}: {value:?} is not a number", param.name()))
    };
    let result = match param {
        SweepParam::Delta => s.with_delta(number()?),
        SweepParam::StepH => s.with_step_h(number()?),
        SweepParam::GainKAll => s.with_gain_k_all(number()?),
        SweepParam::Topology => s.with_topology(value),
    };
    result.map_err(|e| {
        let msgs: Vec<String> = e.violations.iter().map(ToString::to_string).collect();
        format!("{}={value}: {}", param.name(), msgs.join("; "))
    })
}

/// Directory name for one sweep run; values are sanitized for the filesystem.
pub fn run_dir_name(param: SweepParam, value: &str) -> String {
    let clean: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{}_{clean}", param.name())
}

pub fn cmd_sweep(
    source: &str,
    param: SweepParam,
    values: &[String],
    out: &Path,
    policy: Execution,
) -> CommandOutcome {
    let values: Vec<&str> = values
        .iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return CommandOutcome::new(EXIT_VALIDATION, "sweep needs at least one value\n".into());
    }
    let base = match load_scenario(source) {
        Ok(s) => s,
        Err(o) => return *o,
    };
    let mut variants = Vec::with_capacity(values.len());
    let mut errors = Vec::new();
    for v in &values {
        match variant(&base, param, v) {
            Ok(s) => variants.push((v.to_string(), s)),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        let mut report = format!("invalid sweep values for {}:\n", param.name());
        for e in errors {
            let _ = writeln!(report, "  {e}");
        }
        return CommandOutcome::new(EXIT_VALIDATION, report);
    }

    let results = exec::map(&variants, policy, |(value, s)| {
        run_one(s, &out.join(run_dir_name(param, value)))
    });

    let mut report = header(&base);
    let _ = writeln!(
        report,
        "sweep {} over {} values",
        param.name(),
        values.len()
    );
    let _ = writeln!(
        report,
        "  {:<12}  {:<16}  {:<12}  max error",
        param.name(),
        "stop",
        "time"
    );
    let mut table = format!(
        "{},stop_reason,final_time,max_component_error\n",
        param.name()
    );
    let mut code = EXIT_OK;
    let mut runs = Vec::new();
    for ((value, _), result) in variants.iter().zip(results) {
        match result {
            Ok(summary) => {
                let err = summary
                    .max_component_error()
                    .map(format_number)
                    .unwrap_or_default();
                let _ = writeln!(
                    report,
                    "  {:<12}  {:<16}  {:<12}  {}",
                    value,
                    summary.stop_reason,
                    format_number(summary.final_time),
                    if err.is_empty() { "-" } else { &err }
                );
                let _ = writeln!(
                    table,
                    "{value},{},{},{err}",
                    summary.stop_reason,
                    format_number(summary.final_time)
                );
                code = code.max(stop_code(&summary));
                runs.push(summary);
            }
            Err(o) => {
                let _ = write!(report, "  {value}: {}", o.report);
                code = code.max(o.code.max(EXIT_NUMERIC));
            }
        }
    }
    if let Err(e) = output::write_atomic(&out.join("sweep.csv"), table.as_bytes()) {
        let _ = writeln!(report, "cannot write sweep table: {e}");
        code = code.max(EXIT_IO);
    }
    CommandOutcome {
        code,
        runs,
        ..CommandOutcome::new(EXIT_OK, report)
    }
}
