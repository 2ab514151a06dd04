//! Equilibria of the HVAC game computed without the seeking dynamics.
//!
//! The HVAC game is a potential game with strictly convex potential whenever
//! the uniqueness condition holds, so its Nash equilibrium is the unique
//! minimizer of the potential over the box. Three routes are provided:
//! a direct linear solve when no bound binds, cyclic projected best response
//! for the box-constrained problem, and a reduced solve with stubborn players
//! pinned. [`verify_nash`] checks any profile by brute-force unilateral
//! deviation and does not depend on the potential structure.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::game::{GameError, GameSpec, PricingSpec};

/// Projected best-response sweeps stop once no coordinate moves more than this.
pub const SWEEP_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("uniqueness condition violated: a = {a} is not below the bound {bound}")]
    ConditionViolated { a: f64, bound: f64 },
    #[error("player {player}: unconstrained equilibrium {value} lies outside [{l_min}, {l_max}]")]
    NotInner {
        player: usize,
        value: f64,
        l_min: f64,
        l_max: f64,
    },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("game has no stubborn player")]
    NoStubbornPlayer,
    #[error("projected best response did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("deviation grid needs at least 2 points, got {0}")]
    InvalidGrid(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub l_star: Vec<f64>,
    pub aggregate: f64,
    /// `[η_11, η_12, η_21, η_22, …]`; zero for inactive bounds and stubborn players.
    pub eta_star: Vec<f64>,
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
    pub stubborn: Vec<usize>,
    /// Largest KKT stationarity violation over rational players.
    pub stationarity_residual: f64,
}

fn hvac_pricing(spec: &GameSpec) -> Result<PricingSpec, OracleError> {
    spec.pricing()
        .ok_or(OracleError::Game(GameError::ModelNotPotential))
}

fn require_uniqueness(spec: &GameSpec) -> Result<PricingSpec, OracleError> {
    let pricing = hvac_pricing(spec)?;
    if spec.check_uniqueness_condition() {
        Ok(pricing)
    } else {
        Err(OracleError::ConditionViolated {
            a: pricing.a,
            bound: spec.uniqueness_bound().unwrap_or(f64::NAN),
        })
    }
}

/// Rational players' game with stubborn consumption folded into the base price.
struct Reduction {
    rational: Vec<usize>,
    game: Option<GameSpec>,
}

fn reduce(spec: &GameSpec, pricing: PricingSpec) -> Reduction {
    let stubborn_total: f64 = spec.players().iter().filter_map(|p| p.stubborn).sum();
    let rational: Vec<usize> = (0..spec.n())
        .filter(|&i| !spec.players()[i].is_stubborn())
        .collect();
    let players = rational
        .iter()
        .map(|&i| spec.players()[i].clone())
        .collect();
    let game = (!rational.is_empty()).then(|| {
        GameSpec::hvac(
            players,
            PricingSpec {
                a: pricing.a,
                p0: pricing.p0 + pricing.a * stubborn_total,
            },
        )
        .expect("sub-game of a valid game is valid")
    });
    Reduction { rational, game }
}

/// Builds the full result from a profile of the rational players, recovering
/// multipliers from stationarity at active bounds.
fn assemble(spec: &GameSpec, reduction: &Reduction, rational_l: &[f64]) -> EquilibriumResult {
    let n = spec.n();
    let mut l_star: Vec<f64> = spec
        .players()
        .iter()
        .map(|p| p.stubborn.unwrap_or(f64::NAN))
        .collect();
    for (&i, &x) in reduction.rational.iter().zip(rational_l) {
        l_star[i] = x;
    }
    let aggregate: f64 = l_star.iter().sum();
    let mut eta_star = vec![0.0; 2 * n];
    let mut active_lower = Vec::new();
    let mut active_upper = Vec::new();
    let mut stationarity_residual: f64 = 0.0;
    for &i in &reduction.rational {
        let p = &spec.players()[i];
        let grad = spec.pseudo_gradient_unchecked(i, l_star[i], aggregate);
        if l_star[i] <= p.l_min {
            active_lower.push(i);
            eta_star[2 * i] = grad.max(0.0);
        } else if l_star[i] >= p.l_max {
            active_upper.push(i);
            eta_star[2 * i + 1] = (-grad).max(0.0);
        }
        let kkt = grad - eta_star[2 * i] + eta_star[2 * i + 1];
        stationarity_residual = stationarity_residual.max(kkt.abs());
    }
    EquilibriumResult {
        l_star,
        aggregate,
        eta_star,
        active_lower,
        active_upper,
        stubborn: (0..n)
            .filter(|&i| spec.players()[i].is_stubborn())
            .collect(),
        stationarity_residual,
    }
}

/// Solves `H·l = b` with `b_i = 2w_i·l̂_i − p0` (stubborn players pinned) and
/// requires the solution to respect every box.
pub fn inner_equilibrium(spec: &GameSpec) -> Result<EquilibriumResult, OracleError> {
    let pricing = require_uniqueness(spec)?;
    let reduction = reduce(spec, pricing);
    let Some(game) = &reduction.game else {
        return Ok(assemble(spec, &reduction, &[]));
    };
    let h = game.hessian_q()?;
    let p0 = game.pricing().expect("reduced game is HVAC").p0;
    let b = DVector::from_iterator(
        game.n(),
        game.players().iter().map(|p| 2.0 * p.w * p.l_hat - p0),
    );
    let solution = h.lu().solve(&b).ok_or(OracleError::SingularSystem)?;
    for (k, p) in game.players().iter().enumerate() {
        let value = solution[k];
        if value < p.l_min || value > p.l_max {
            return Err(OracleError::NotInner {
                player: reduction.rational[k],
                value,
                l_min: p.l_min,
                l_max: p.l_max,
            });
        }
    }
    Ok(assemble(spec, &reduction, solution.as_slice()))
}

/// Minimizes the potential over the box by cyclic projected best response.
/// Stubborn players, if any, are pinned at their fixed consumption.
pub fn constrained_equilibrium(spec: &GameSpec) -> Result<EquilibriumResult, OracleError> {
    let pricing = require_uniqueness(spec)?;
    let reduction = reduce(spec, pricing);
    let rational_l = match &reduction.game {
        Some(game) => projected_best_response(game)?,
        None => Vec::new(),
    };
    Ok(assemble(spec, &reduction, &rational_l))
}

fn projected_best_response(game: &GameSpec) -> Result<Vec<f64>, OracleError> {
    let mut l: Vec<f64> = game
        .players()
        .iter()
        .map(|p| p.l_hat.clamp(p.l_min, p.l_max))
        .collect();
    let mut total: f64 = l.iter().sum();
    for _ in 0..MAX_SWEEPS {
        let mut moved: f64 = 0.0;
        for (i, li) in l.iter_mut().enumerate() {
            let others = total - *li;
            let next = best_response(game, i, others)?;
            moved = moved.max((next - *li).abs());
            total = others + next;
            *li = next;
        }
        // re-sum to keep the running aggregate from drifting
        total = l.iter().sum();
        if moved <= SWEEP_TOL {
            return Ok(l);
        }
    }
    Err(OracleError::NoConvergence(MAX_SWEEPS))
}

/// Best response of player `i` to the others' total consumption:
/// `clamp((2w_i·l̂_i − p0 − a·others_sum) / (2w_i + 2a), l_i^min, l_i^max)`.
/// A stubborn player's best response is its fixed consumption.
pub fn best_response(spec: &GameSpec, i: usize, others_sum: f64) -> Result<f64, OracleError> {
    let PricingSpec { a, p0 } = hvac_pricing(spec)?;
    let p = spec.player(i)?;
    if let Some(fixed) = p.stubborn {
        return Ok(fixed);
    }
    let unconstrained = (2.0 * p.w * p.l_hat - p0 - a * others_sum) / (2.0 * p.w + 2.0 * a);
    Ok(unconstrained.clamp(p.l_min, p.l_max))
}

/// Equilibrium with stubborn players pinned at `l_iˢ` and the remaining
/// players solving the reduced box-constrained game.
pub fn stubborn_equilibrium(spec: &GameSpec) -> Result<EquilibriumResult, OracleError> {
    if !spec.players().iter().any(|p| p.is_stubborn()) {
        return Err(OracleError::NoStubbornPlayer);
    }
    constrained_equilibrium(spec)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashCheck {
    pub is_nash: bool,
    /// Largest cost reduction found over all unilateral deviations (≤ 0 when
    /// no deviation helps).
    pub worst_improvement: f64,
    pub worst_player: Option<usize>,
}

/// Scans `grid_points` equally spaced unilateral deviations across each
/// rational player's box and reports whether any improves that player's cost
/// by more than `eps`.
pub fn verify_nash(
    spec: &GameSpec,
    l: &[f64],
    grid_points: usize,
    eps: f64,
) -> Result<NashCheck, OracleError> {
    if grid_points < 2 {
        return Err(OracleError::InvalidGrid(grid_points));
    }
    if l.len() != spec.n() {
        return Err(GameError::DimensionMismatch {
            expected: spec.n(),
            actual: l.len(),
        }
        .into());
    }
    let total: f64 = l.iter().sum();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_player = None;
    for (i, p) in spec.players().iter().enumerate() {
        if p.is_stubborn() {
            continue;
        }
        let others = total - l[i];
        let current = spec.cost(i, l[i], total)?;
        let span = p.l_max - p.l_min;
        for k in 0..grid_points {
            let x = p.l_min + span * k as f64 / (grid_points - 1) as f64;
            let improvement = current - spec.cost(i, x, others + x)?;
            if improvement > worst {
                worst = improvement;
                worst_player = Some(i);
            }
        }
    }
    Ok(NashCheck {
        is_nash: !(worst > eps),
        worst_improvement: worst,
        worst_player,
    })
}

/// Checks the invariants every [`EquilibriumResult`] must satisfy; returns a
/// description of each violation.
pub fn result_violations(spec: &GameSpec, result: &EquilibriumResult) -> Vec<String> {
    let mut out = Vec::new();
    if result.stationarity_residual >= 1e-8 {
        out.push(format!(
            "stationarity residual {} not below 1e-8",
            result.stationarity_residual
        ));
    }
    let sum: f64 = result.l_star.iter().sum();
    if (sum - result.aggregate).abs() > 1e-9 * sum.abs().max(1.0) {
        out.push("aggregate does not equal the sum of actions".into());
    }
    for (i, p) in spec.players().iter().enumerate() {
        let x = result.l_star[i];
        let (e1, e2) = (result.eta_star[2 * i], result.eta_star[2 * i + 1]);
        if e1 < 0.0 || e2 < 0.0 {
            out.push(format!("player {i}: negative multiplier"));
        }
        if p.is_stubborn() {
            if Some(x) != p.stubborn {
                out.push(format!("player {i}: stubborn value not preserved"));
            }
            continue;
        }
        if x < p.l_min || x > p.l_max {
            out.push(format!(
                "player {i}: {x} outside [{}, {}]",
                p.l_min, p.l_max
            ));
        }
        if e1 > 0.0 && x != p.l_min {
            out.push(format!("player {i}: η_1 > 0 but lower bound inactive"));
        }
        if e2 > 0.0 && x != p.l_max {
            out.push(format!("player {i}: η_2 > 0 but upper bound inactive"));
        }
    }
    out
}

/// `H` restricted to the rational players.
pub fn reduced_hessian(spec: &GameSpec) -> Result<DMatrix<f64>, OracleError> {
    let pricing = hvac_pricing(spec)?;
    match reduce(spec, pricing).game {
        Some(game) => Ok(game.hessian_q()?),
        None => Ok(DMatrix::zeros(0, 0)),
    }
}
