//! Runs a seeking strategy through the ODE engine and derives the per-sample
//! series used for reporting.

use thiserror::Error;

use crate::dynamics::{DynamicsError, SeekingFlow, SimState, StrategyMode};
use crate::game::GameSpec;
use crate::graph::Graph;
use crate::ode::{self, IntegratorConfig, OdeError, StopReason};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SimState>,
    /// True aggregate `Σ l` per sample.
    pub aggregate: Vec<f64>,
    /// Unit price at the true aggregate.
    pub price: Vec<f64>,
    /// `costs[k][i]`: cost of player `i` at sample `k`.
    pub costs: Vec<Vec<f64>>,
    /// Potential, when the model has one.
    pub potential: Vec<Option<f64>>,
    pub residual: Vec<f64>,
    pub stop: StopReason,
    pub steps: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &SimState {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn final_residual(&self) -> f64 {
        *self
            .residual
            .last()
            .expect("trajectory has at least one sample")
    }
}

/// Integrates `mode` from `init` and returns the sampled trajectory.
pub fn simulate(
    game: &GameSpec,
    graph: &Graph,
    mode: StrategyMode,
    delta: f64,
    init: &SimState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SimulationError> {
    let flow = SeekingFlow::new(game, graph, mode, delta)?;
    if init.as_slice().len() != flow.state_len() {
        return Err(DynamicsError::StateLayout {
            n: game.n(),
            mode: mode.name(),
        }
        .into());
    }
    let sol = ode::integrate(&flow, init.as_slice(), cfg)?;
    Ok(derive(game, sol))
}

fn derive(game: &GameSpec, sol: ode::Solution) -> Trajectory {
    let n = game.n();
    let states: Vec<SimState> = sol
        .states
        .into_iter()
        .map(|v| SimState::from_vec(n, v).expect("engine preserves the layout"))
        .collect();
    let aggregate: Vec<f64> = states.iter().map(SimState::aggregate).collect();
    let price = aggregate.iter().map(|&x| game.price(x)).collect();
    let costs = states
        .iter()
        .zip(&aggregate)
        .map(|(s, &total)| {
            s.l()
                .iter()
                .enumerate()
                .map(|(i, &x)| game.cost(i, x, total).expect("index in range"))
                .collect()
        })
        .collect();
    let potential = states.iter().map(|s| game.potential(s.l()).ok()).collect();
    Trajectory {
        times: sol.times,
        states,
        aggregate,
        price,
        costs,
        potential,
        residual: sol.residuals,
        stop: sol.stop,
        steps: sol.steps,
    }
}
