//! Vector fields of the consensus-based Nash seeking strategies.
//!
//! Every player `i` carries an action `l_i`, an estimate `D_i` of the aggregate
//! `Σ_j l_j`, and an auxiliary consensus state `κ_i`. The estimator is
//!
//! ```text
//! dD/dt = −D − L·D − L·κ + N·l
//! dκ/dt = L·D
//! ```
//!
//! and actions descend their own cost using `D_i` in place of the unknown
//! aggregate, scaled by the slow-time-scale factor `δ`. In primal-dual mode
//! each player also carries log-multipliers `ζ = log η` for its two box
//! constraints, which keeps `η > 0` for every reachable state.

use thiserror::Error;

use crate::game::GameSpec;
use crate::graph::Graph;
use crate::ode::VectorField;

/// Lower limit for log-multipliers. `exp(-700)` is still a normal `f64`; below
/// the floor the multiplier flow is frozen instead of underflowing to zero.
pub const ZETA_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("graph not connected")]
    NotConnected,
    #[error("delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("strategy {0} requires the HVAC/linear-pricing model")]
    ModelNotPotential(&'static str),
    #[error("graph has {graph} nodes but the game has {players} players")]
    SizeMismatch { graph: usize, players: usize },
    #[error("state layout does not match {n} players in {mode} mode")]
    StateLayout { n: usize, mode: &'static str },
    #[error("drive vector has length {actual}, expected {expected}")]
    DriveLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyMode {
    /// Polynomial cost model, no constraint handling.
    General,
    /// HVAC model with log-space multiplier dynamics for the box constraints.
    PrimalDual,
    /// HVAC model, constraints assumed not to bind.
    Inner,
}

impl StrategyMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "general" => Some(Self::General),
            "primal_dual" => Some(Self::PrimalDual),
            "inner" => Some(Self::Inner),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::General => "general",
            Self::PrimalDual => "primal_dual",
            Self::Inner => "inner",
        }
    }

    pub fn has_multipliers(self) -> bool {
        self == Self::PrimalDual
    }

    pub fn requires_hvac(self) -> bool {
        self != Self::General
    }
}

/// Stacked state `[l | D | κ | ζ]`; `ζ` (length `2N`, ordered
/// `ζ_11, ζ_12, ζ_21, …`) is present only in primal-dual mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    n: usize,
    data: Vec<f64>,
}

impl SimState {
    pub fn zeros(n: usize, with_multipliers: bool) -> Self {
        let len = if with_multipliers { 5 * n } else { 3 * n };
        Self {
            n,
            data: vec![0.0; len],
        }
    }

    /// Wraps a flat vector; `None` if its length is neither `3n` nor `5n`.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Option<Self> {
        (n > 0 && (data.len() == 3 * n || data.len() == 5 * n)).then_some(Self { n, data })
    }

    /// Default initial condition: `l = l̂` (stubborn players at their fixed
    /// value), `D = κ = 0`, and `ζ = 0` (`η = 1`) in primal-dual mode.
    pub fn initial(game: &GameSpec, mode: StrategyMode) -> Self {
        let mut s = Self::zeros(game.n(), mode.has_multipliers());
        for (l, p) in s.l_mut().iter_mut().zip(game.players()) {
            *l = p.stubborn.unwrap_or(p.l_hat);
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_multipliers(&self) -> bool {
        self.data.len() == 5 * self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn l(&self) -> &[f64] {
        &self.data[..self.n]
    }

    pub fn l_mut(&mut self) -> &mut [f64] {
        &mut self.data[..self.n]
    }

    pub fn d(&self) -> &[f64] {
        &self.data[self.n..2 * self.n]
    }

    pub fn d_mut(&mut self) -> &mut [f64] {
        &mut self.data[self.n..2 * self.n]
    }

    pub fn kappa(&self) -> &[f64] {
        &self.data[2 * self.n..3 * self.n]
    }

    pub fn kappa_mut(&mut self) -> &mut [f64] {
        &mut self.data[2 * self.n..3 * self.n]
    }

    /// Log-multipliers (empty outside primal-dual mode).
    pub fn zeta(&self) -> &[f64] {
        &self.data[3 * self.n..]
    }

    pub fn zeta_mut(&mut self) -> &mut [f64] {
        &mut self.data[3 * self.n..]
    }

    /// Recovered multipliers `η = exp(ζ)`.
    pub fn eta(&self) -> Vec<f64> {
        self.zeta().iter().map(|z| z.exp()).collect()
    }

    pub fn aggregate(&self) -> f64 {
        self.l().iter().sum()
    }

    /// `max_i |D_i − Σ_j l_j|`.
    pub fn consensus_error(&self) -> f64 {
        let total = self.aggregate();
        self.d()
            .iter()
            .map(|d| (d - total).abs())
            .fold(0.0, f64::max)
    }
}

/// Writes `dD = −D − L·D − L·κ + drive` and `dκ = L·D` using neighbor sums.
fn consensus_into(
    g: &Graph,
    d: &[f64],
    kappa: &[f64],
    drive: &[f64],
    dd: &mut [f64],
    dk: &mut [f64],
) {
    for i in 0..d.len() {
        let mut ld = 0.0;
        let mut lk = 0.0;
        for &j in g.neighbors(i) {
            ld += d[i] - d[j];
            lk += kappa[i] - kappa[j];
        }
        dd[i] = -d[i] - ld - lk + drive[i];
        dk[i] = ld;
    }
}

/// Dynamic average consensus right-hand side for a given drive `N·l`.
pub fn consensus_rhs(
    g: &Graph,
    state: &SimState,
    drive: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), DynamicsError> {
    g.ensure_connected()
        .map_err(|_| DynamicsError::NotConnected)?;
    let n = state.n();
    if g.node_count() != n {
        return Err(DynamicsError::SizeMismatch {
            graph: g.node_count(),
            players: n,
        });
    }
    if drive.len() != n {
        return Err(DynamicsError::DriveLength {
            expected: n,
            actual: drive.len(),
        });
    }
    let mut dd = vec![0.0; n];
    let mut dk = vec![0.0; n];
    consensus_into(g, state.d(), state.kappa(), drive, &mut dd, &mut dk);
    Ok((dd, dk))
}

/// A seeking strategy bound to a game and graph; evaluates the full stacked
/// vector field.
#[derive(Debug, Clone, Copy)]
pub struct SeekingFlow<'a> {
    game: &'a GameSpec,
    graph: &'a Graph,
    mode: StrategyMode,
    delta: f64,
}

impl<'a> SeekingFlow<'a> {
    pub fn new(
        game: &'a GameSpec,
        graph: &'a Graph,
        mode: StrategyMode,
        delta: f64,
    ) -> Result<Self, DynamicsError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(DynamicsError::NonPositiveDelta(delta));
        }
        if mode.requires_hvac() && !game.is_hvac() {
            return Err(DynamicsError::ModelNotPotential(mode.name()));
        }
        if graph.node_count() != game.n() {
            return Err(DynamicsError::SizeMismatch {
                graph: graph.node_count(),
                players: game.n(),
            });
        }
        graph
            .ensure_connected()
            .map_err(|_| DynamicsError::NotConnected)?;
        Ok(Self {
            game,
            graph,
            mode,
            delta,
        })
    }

    pub fn mode(&self) -> StrategyMode {
        self.mode
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn game(&self) -> &GameSpec {
        self.game
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    pub fn state_len(&self) -> usize {
        if self.mode.has_multipliers() {
            5 * self.game.n()
        } else {
            3 * self.game.n()
        }
    }

    /// Consensus drive `N·l`, with stubborn players contributing `N·l_iˢ`.
    pub fn drive(&self, l: &[f64]) -> Vec<f64> {
        let n = self.game.n() as f64;
        self.game
            .players()
            .iter()
            .zip(l)
            .map(|(p, &x)| n * p.stubborn.unwrap_or(x))
            .collect()
    }

    fn check_state(&self, state: &SimState) -> Result<(), DynamicsError> {
        if state.n() == self.game.n() && state.as_slice().len() == self.state_len() {
            Ok(())
        } else {
            Err(DynamicsError::StateLayout {
                n: self.game.n(),
                mode: self.mode.name(),
            })
        }
    }

    pub fn derivative(&self, state: &SimState) -> Result<SimState, DynamicsError> {
        self.check_state(state)?;
        let mut out = SimState::zeros(state.n(), state.has_multipliers());
        self.eval_scaled(state.as_slice(), out.as_mut_slice(), self.delta);
        Ok(out)
    }

    fn eval_scaled(&self, y: &[f64], dy: &mut [f64], delta: f64) {
        let n = self.game.n();
        let (l, rest) = y.split_at(n);
        let (d, rest) = rest.split_at(n);
        let (kappa, zeta) = rest.split_at(n);
        let (dl, drest) = dy.split_at_mut(n);
        let (dd, drest) = drest.split_at_mut(n);
        let (dk, dzeta) = drest.split_at_mut(n);

        let players = self.game.players();
        let nf = n as f64;
        for i in 0..n {
            let mut ld = 0.0;
            let mut lk = 0.0;
            for &j in self.graph.neighbors(i) {
                ld += d[i] - d[j];
                lk += kappa[i] - kappa[j];
            }
            let drive = nf * players[i].stubborn.unwrap_or(l[i]);
            dd[i] = -d[i] - ld - lk + drive;
            dk[i] = ld;
        }

        for (i, p) in players.iter().enumerate() {
            if p.is_stubborn() {
                dl[i] = 0.0;
                if self.mode.has_multipliers() {
                    dzeta[2 * i] = 0.0;
                    dzeta[2 * i + 1] = 0.0;
                }
                continue;
            }
            // For the HVAC model this bracket is 2w(l − l̂) + P(D) + a·l.
            let mut grad = self.game.pseudo_gradient_unchecked(i, l[i], d[i]);
            if self.mode.has_multipliers() {
                let (z1, z2) = (zeta[2 * i], zeta[2 * i + 1]);
                grad += -z1.exp() + z2.exp();
                dzeta[2 * i] = floored(z1, delta * p.gain_m1 * (p.l_min - l[i]));
                dzeta[2 * i + 1] = floored(z2, delta * p.gain_m2 * (l[i] - p.l_max));
            }
            dl[i] = -delta * p.gain_k * grad;
        }
    }

    /// Euclidean norm of the state velocity with `δ = 1`. Multiplier entries
    /// are measured as `dη/dt = η·dζ/dt`, so constraints that have gone
    /// inactive (`η → 0`) stop contributing.
    pub fn residual(&self, state: &SimState) -> Result<f64, DynamicsError> {
        self.check_state(state)?;
        Ok(self.residual_of(state.as_slice()))
    }

    fn residual_of(&self, y: &[f64]) -> f64 {
        let mut dy = vec![0.0; y.len()];
        self.eval_scaled(y, &mut dy, 1.0);
        let n = self.game.n();
        for (dz, z) in dy[3 * n..].iter_mut().zip(&y[3 * n..]) {
            *dz *= z.exp();
        }
        dy.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn floored(zeta: f64, rate: f64) -> f64 {
    if zeta <= ZETA_FLOOR && rate < 0.0 {
        0.0
    } else {
        rate
    }
}

impl VectorField for SeekingFlow<'_> {
    fn dim(&self) -> usize {
        self.state_len()
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        self.eval_scaled(y, dy, self.delta);
    }

    fn residual(&self, y: &[f64]) -> f64 {
        self.residual_of(y)
    }
}

fn flow_derivative(
    spec: &GameSpec,
    g: &Graph,
    state: &SimState,
    delta: f64,
    mode: StrategyMode,
) -> Result<SimState, DynamicsError> {
    SeekingFlow::new(spec, g, mode, delta)?.derivative(state)
}

/// Full derivative under the general polynomial strategy.
pub fn general_rhs(
    spec: &GameSpec,
    g: &Graph,
    state: &SimState,
    delta: f64,
) -> Result<SimState, DynamicsError> {
    flow_derivative(spec, g, state, delta, StrategyMode::General)
}

/// Full derivative under the primal-dual strategy (log-space multipliers).
pub fn primal_dual_rhs(
    spec: &GameSpec,
    g: &Graph,
    state: &SimState,
    delta: f64,
) -> Result<SimState, DynamicsError> {
    flow_derivative(spec, g, state, delta, StrategyMode::PrimalDual)
}

/// Full derivative under the inner-equilibrium strategy.
pub fn inner_rhs(
    spec: &GameSpec,
    g: &Graph,
    state: &SimState,
    delta: f64,
) -> Result<SimState, DynamicsError> {
    flow_derivative(spec, g, state, delta, StrategyMode::Inner)
}

/// Stopping residual of `state` under `mode`; independent of `δ`.
pub fn residual(
    spec: &GameSpec,
    g: &Graph,
    state: &SimState,
    mode: StrategyMode,
) -> Result<f64, DynamicsError> {
    SeekingFlow::new(spec, g, mode, 1.0)?.residual(state)
}

/// Consensus subsystem with actions frozen: state `[D | κ]`, drive `N·l`.
#[derive(Debug, Clone)]
pub struct FrozenConsensus<'a> {
    graph: &'a Graph,
    drive: Vec<f64>,
}

impl<'a> FrozenConsensus<'a> {
    pub fn new(graph: &'a Graph, l: &[f64]) -> Result<Self, DynamicsError> {
        graph
            .ensure_connected()
            .map_err(|_| DynamicsError::NotConnected)?;
        if l.len() != graph.node_count() {
            return Err(DynamicsError::DriveLength {
                expected: graph.node_count(),
                actual: l.len(),
            });
        }
        let n = l.len() as f64;
        Ok(Self {
            graph,
            drive: l.iter().map(|x| n * x).collect(),
        })
    }
}

impl VectorField for FrozenConsensus<'_> {
    fn dim(&self) -> usize {
        2 * self.graph.node_count()
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let n = self.graph.node_count();
        let (d, kappa) = y.split_at(n);
        let (dd, dk) = dy.split_at_mut(n);
        consensus_into(self.graph, d, kappa, &self.drive, dd, dk);
    }
}

/// Action flow of the inner strategy with exact aggregate information
/// (`D_i ≡ Σ_j l_j`): `dl = −δ·k ⊙ [∂C_i/∂l_i]`.
#[derive(Debug, Clone, Copy)]
pub struct ReducedInnerFlow<'a> {
    game: &'a GameSpec,
    delta: f64,
}

impl<'a> ReducedInnerFlow<'a> {
    pub fn new(game: &'a GameSpec, delta: f64) -> Result<Self, DynamicsError> {
        if !(delta > 0.0) {
            return Err(DynamicsError::NonPositiveDelta(delta));
        }
        if !game.is_hvac() {
            return Err(DynamicsError::ModelNotPotential("inner"));
        }
        Ok(Self { game, delta })
    }
}

impl VectorField for ReducedInnerFlow<'_> {
    fn dim(&self) -> usize {
        self.game.n()
    }

    fn eval(&self, l: &[f64], dl: &mut [f64]) {
        let total: f64 = l.iter().sum();
        for (i, p) in self.game.players().iter().enumerate() {
            dl[i] = if p.is_stubborn() {
                0.0
            } else {
                -self.delta * p.gain_k * self.game.pseudo_gradient_unchecked(i, l[i], total)
            };
        }
    }
}
