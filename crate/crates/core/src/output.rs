//! Trajectory CSV and run-summary JSON writers.
//!
//! Every file is written to a temporary sibling first and renamed into place,
//! so a failed run never leaves a partial artifact behind.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::oracle::EquilibriumResult;
use crate::simulation::Trajectory;

/// Rounds to 12 significant digits and prints the shortest representation
/// of the rounded value, in exponent form outside `[1e-5, 1e16)`.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let mag = rounded.abs();
    // also catches -0
    if rounded == 0.0 {
        "0".to_string()
    } else if (1e-5..1e16).contains(&mag) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}

pub fn csv_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("l_{i}")));
    cols.extend((1..=n).map(|i| format!("D_{i}")));
    cols.extend(["aggregate", "price", "Q", "residual"].map(String::from));
    cols.join(",")
}

/// Renders the trajectory as CSV text.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map_or(0, |s| s.n());
    let mut out = csv_header(n);
    out.push('\n');
    for k in 0..traj.len() {
        let s = &traj.states[k];
        let mut row = Vec::with_capacity(2 * n + 5);
        row.push(format_number(traj.times[k]));
        row.extend(s.l().iter().map(|&v| format_number(v)));
        row.extend(s.d().iter().map(|&v| format_number(v)));
        row.push(format_number(traj.aggregate[k]));
        row.push(format_number(traj.price[k]));
        row.push(traj.potential[k].map(format_number).unwrap_or_default());
        row.push(format_number(traj.residual[k]));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Writes `bytes` to `dest` via a temporary file in the same directory.
pub fn write_atomic(dest: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match dest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let file_name = dest.file_name().ok_or_else(|| {
        io::Error::new(io::ErrorKind::InvalidInput, "destination has no file name")
    })?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, dest)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Writes the trajectory CSV and returns the number of data rows.
pub fn write_trajectory(traj: &Trajectory, dest: &Path) -> io::Result<usize> {
    if traj.is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "empty trajectory",
        ));
    }
    write_atomic(dest, trajectory_csv(traj).as_bytes())?;
    Ok(traj.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub l_star: Vec<f64>,
    pub aggregate: f64,
    /// `|l_final − l*|` per player; `None` for stubborn players.
    pub component_error: Vec<Option<f64>>,
    pub stubborn: Vec<usize>,
    /// Largest error over rational players.
    pub max_component_error: f64,
    pub aggregate_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub strategy: String,
    pub stop_reason: String,
    pub final_time: f64,
    pub steps: u64,
    pub samples: usize,
    pub final_l: Vec<f64>,
    pub final_aggregate: f64,
    pub final_residual: f64,
    /// `max_i |D_i − Σ_j l_j|` at the end of the run.
    pub consensus_error: f64,
    /// `|1ᵀκ(T) − 1ᵀκ(0)|`.
    pub kappa_drift: f64,
    /// Algebraic connectivity of the communication graph.
    pub fiedler_value: f64,
    /// Smallest recovered multiplier over all samples (primal-dual runs only).
    pub min_eta: Option<f64>,
    pub oracle: Option<OracleComparison>,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn new(
        scenario: &str,
        strategy: &str,
        graph: &Graph,
        traj: &Trajectory,
        oracle: Option<&EquilibriumResult>,
        wall_time_s: f64,
    ) -> Self {
        let last = traj.final_state();
        let first = &traj.states[0];
        let kappa_sum = |s: &crate::dynamics::SimState| s.kappa().iter().sum::<f64>();
        let min_eta = last.has_multipliers().then(|| {
            traj.states
                .iter()
                .flat_map(|s| s.eta())
                .fold(f64::INFINITY, f64::min)
        });
        let oracle = oracle.map(|eq| {
            let component_error: Vec<Option<f64>> = last
                .l()
                .iter()
                .zip(&eq.l_star)
                .enumerate()
                .map(|(i, (x, y))| (!eq.stubborn.contains(&i)).then(|| (x - y).abs()))
                .collect();
            OracleComparison {
                l_star: eq.l_star.clone(),
                aggregate: eq.aggregate,
                max_component_error: component_error
                    .iter()
                    .flatten()
                    .fold(0.0, |m, &e| f64::max(m, e)),
                component_error,
                stubborn: eq.stubborn.clone(),
                aggregate_error: (last.aggregate() - eq.aggregate).abs(),
            }
        });
        Self {
            scenario: scenario.to_string(),
            strategy: strategy.to_string(),
            stop_reason: traj.stop.name().to_string(),
            final_time: traj.final_time(),
            steps: traj.steps,
            samples: traj.len(),
            final_l: last.l().to_vec(),
            final_aggregate: last.aggregate(),
            final_residual: traj.final_residual(),
            consensus_error: last.consensus_error(),
            kappa_drift: (kappa_sum(last) - kappa_sum(first)).abs(),
            fiedler_value: graph.fiedler_value().unwrap_or(0.0),
            min_eta,
            oracle,
            wall_time_s,
        }
    }

    pub fn max_component_error(&self) -> Option<f64> {
        self.oracle.as_ref().map(|o| o.max_component_error)
    }
}

pub fn write_summary(summary: &RunSummary, dest: &Path) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(dest, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{SimState, StrategyMode};
    use crate::game::table1_game;
    use crate::graph::Topology;
    use crate::ode::{IntegratorConfig, StopReason};
    use crate::oracle;
    use crate::simulation::simulate;

    fn ring5() -> Graph {
        Graph::from_topology(Topology::Ring, 5).unwrap()
    }

    fn run(cfg: IntegratorConfig) -> Trajectory {
        let game = table1_game();
        let graph = Graph::from_topology(Topology::Ring, 5).unwrap();
        let init = SimState::initial(&game, StrategyMode::Inner);
        simulate(&game, &graph, StrategyMode::Inner, 0.05, &init, &cfg).unwrap()
    }

    #[test]
    fn number_format() {
        assert_eq!(format_number(41.5), "41.5");
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(123456789.123456), "123456789.123");
        assert_eq!(format_number(1e-20), "1e-20");
        assert_eq!(format_number(-1.2345678901234e-9), "-1.23456789012e-9");
        assert_eq!(format_number(2.5e17), "2.5e17");
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            csv_header(2),
            "t,l_1,l_2,D_1,D_2,aggregate,price,Q,residual"
        );
    }

    #[test]
    fn single_sample_trajectory() {
        let traj = run(IntegratorConfig {
            t_max: 0.0,
            ..Default::default()
        });
        assert_eq!(traj.stop, StopReason::Horizon);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        assert_eq!(write_trajectory(&traj, &path).unwrap(), 1);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("0,50,55,60,65,70,0,0,0,0,0,300,"));
        // no temp files left behind
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn converged_run_artifacts() {
        let traj = run(IntegratorConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_trajectory(&traj, &a).unwrap();
        write_trajectory(&run(IntegratorConfig::default()), &b).unwrap();
        let text = fs::read(&a).unwrap();
        assert_eq!(text, fs::read(&b).unwrap());

        let last = String::from_utf8(text).unwrap();
        let last = last.lines().last().unwrap();
        let aggregate: f64 = last.split(',').nth(11).unwrap().parse().unwrap();
        assert!((aggregate - 256.7).abs() < 0.2, "{aggregate}");

        let eq = oracle::inner_equilibrium(&table1_game()).unwrap();
        let summary = RunSummary::new("table1_inner", "inner", &ring5(), &traj, Some(&eq), 0.0);
        assert_eq!(summary.stop_reason, "CONVERGED");
        assert!(summary.max_component_error().unwrap() < 0.05);
        assert!(summary.min_eta.is_none());
        assert!((summary.fiedler_value - 1.381966).abs() < 1e-6);
        let path = dir.path().join("summary.json");
        write_summary(&summary, &path).unwrap();
        let back: RunSummary = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, summary);
    }

    #[test]
    fn horizon_limited_summary() {
        let traj = run(IntegratorConfig {
            t_max: 1.0,
            ..Default::default()
        });
        let eq = oracle::inner_equilibrium(&table1_game()).unwrap();
        let summary = RunSummary::new("x", "inner", &ring5(), &traj, Some(&eq), 0.0);
        assert_eq!(summary.stop_reason, "HORIZON");
        assert!(summary.max_component_error().unwrap() > 0.05);
    }

    #[test]
    fn stubborn_components_are_excluded() {
        let game = table1_game();
        let mut players = game.players().to_vec();
        players[4] = players[4].clone().with_stubborn(100.0);
        let game = game.with_players(players).unwrap();
        let graph = Graph::from_topology(Topology::Ring, 5).unwrap();
        let init = SimState::initial(&game, StrategyMode::Inner);
        let traj = simulate(
            &game,
            &graph,
            StrategyMode::Inner,
            0.05,
            &init,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let eq = oracle::stubborn_equilibrium(&game).unwrap();
        let summary = RunSummary::new("s", "inner", &graph, &traj, Some(&eq), 0.0);
        let cmp = summary.oracle.unwrap();
        assert_eq!(cmp.stubborn, vec![4]);
        assert_eq!(cmp.component_error[4], None);
        assert!(cmp.component_error[..4].iter().all(Option::is_some));
        assert!(cmp.max_component_error < 0.1);
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        let mut traj = run(IntegratorConfig {
            t_max: 0.0,
            ..Default::default()
        });
        traj.times.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(write_trajectory(&traj, &dir.path().join("x.csv")).is_err());
    }
}
