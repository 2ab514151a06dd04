//! The aggregative energy-consumption game.
//!
//! Player `i` chooses a consumption `l_i` and pays
//! `C_i(l_i, l̄) = V_i(l_i) + P(l̄)·l_i`, where `l̄ = Σ_j l_j`. Two cost models
//! are supported:
//!
//! * [`CostModel::Hvac`]: `V_i = w_i (l_i − l̂_i)²` and `P(x) = a·x + p0`. This
//!   model is a potential game and has the oracle in [`crate::oracle`].
//! * [`CostModel::General`]: arbitrary polynomial `V_i` and `P`.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("player index {index} out of range for {n} players")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("expected a vector of length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("operation requires the HVAC/linear-pricing model (no potential for general costs)")]
    ModelNotPotential,
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("multiplier {index} is negative ({value})")]
    NegativeMultiplier { index: usize, value: f64 },
    #[error("game has no players")]
    NoPlayers,
    #[error("player {index}: {reason}")]
    InvalidPlayer { index: usize, reason: String },
    #[error("pricing slope a must be non-negative, got {0}")]
    NegativeSlope(f64),
    #[error(
        "general model needs one curtailment polynomial per player ({expected}), got {actual}"
    )]
    CurtailmentCount { expected: usize, actual: usize },
}

/// Real polynomial with coefficients in ascending order: `c0 + c1·x + c2·x² + …`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `p′(x)` without materializing the derivative polynomial.
    pub fn eval_derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }

    pub fn eval_second_derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + (k * (k - 1)) as f64 * c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSpec {
    /// Curtailment weight `ν_i ξ_i²`.
    pub w: f64,
    /// Comfort target consumption (kWh).
    pub l_hat: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub gain_k: f64,
    pub gain_m1: f64,
    pub gain_m2: f64,
    /// Fixed consumption of a stubborn player; its bounds are ignored.
    pub stubborn: Option<f64>,
}

impl PlayerSpec {
    /// Player with unit gains, no stubbornness and the `[0.8, 1.2]·l̂` box.
    pub fn hvac(w: f64, l_hat: f64) -> Self {
        Self {
            w,
            l_hat,
            l_min: 0.8 * l_hat,
            l_max: 1.2 * l_hat,
            gain_k: 1.0,
            gain_m1: 1.0,
            gain_m2: 1.0,
            stubborn: None,
        }
    }

    pub fn with_bounds(mut self, l_min: f64, l_max: f64) -> Self {
        self.l_min = l_min;
        self.l_max = l_max;
        self
    }

    pub fn with_stubborn(mut self, value: f64) -> Self {
        self.stubborn = Some(value);
        self
    }

    pub fn is_stubborn(&self) -> bool {
        self.stubborn.is_some()
    }

    fn validate(&self, hvac: bool) -> Result<(), String> {
        let finite = [
            self.w,
            self.l_hat,
            self.l_min,
            self.l_max,
            self.gain_k,
            self.gain_m1,
            self.gain_m2,
        ]
        .iter()
        .chain(self.stubborn.iter())
        .all(|v| v.is_finite());
        if !finite {
            return Err("non-finite parameter".into());
        }
        if hvac && self.w <= 0.0 {
            return Err(format!("w must be positive, got {}", self.w));
        }
        if self.stubborn.is_none() && self.l_min >= self.l_max {
            return Err(format!(
                "l_min ({}) must be below l_max ({})",
                self.l_min, self.l_max
            ));
        }
        for (name, g) in [
            ("gain_k", self.gain_k),
            ("gain_m1", self.gain_m1),
            ("gain_m2", self.gain_m2),
        ] {
            if g <= 0.0 {
                return Err(format!("{name} must be positive, got {g}"));
            }
        }
        Ok(())
    }
}

/// Linear pricing `P(x) = a·x + p0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingSpec {
    pub a: f64,
    pub p0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralCostModel {
    pub curtailment: Vec<Polynomial>,
    pub pricing: Polynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    Hvac(PricingSpec),
    General(GeneralCostModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    players: Vec<PlayerSpec>,
    model: CostModel,
}

impl GameSpec {
    pub fn new(players: Vec<PlayerSpec>, model: CostModel) -> Result<Self, GameError> {
        if players.is_empty() {
            return Err(GameError::NoPlayers);
        }
        let hvac = matches!(model, CostModel::Hvac(_));
        for (index, p) in players.iter().enumerate() {
            p.validate(hvac)
                .map_err(|reason| GameError::InvalidPlayer { index, reason })?;
        }
        match &model {
            CostModel::Hvac(pricing) if pricing.a < 0.0 => {
                return Err(GameError::NegativeSlope(pricing.a))
            }
            CostModel::General(general) if general.curtailment.len() != players.len() => {
                return Err(GameError::CurtailmentCount {
                    expected: players.len(),
                    actual: general.curtailment.len(),
                })
            }
            _ => {}
        }
        Ok(Self { players, model })
    }

    pub fn hvac(players: Vec<PlayerSpec>, pricing: PricingSpec) -> Result<Self, GameError> {
        Self::new(players, CostModel::Hvac(pricing))
    }

    pub fn n(&self) -> usize {
        self.players.len()
    }

    pub fn players(&self) -> &[PlayerSpec] {
        &self.players
    }

    pub fn player(&self, i: usize) -> Result<&PlayerSpec, GameError> {
        self.players.get(i).ok_or(GameError::IndexOutOfRange {
            index: i,
            n: self.n(),
        })
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }

    pub fn pricing(&self) -> Option<PricingSpec> {
        match self.model {
            CostModel::Hvac(p) => Some(p),
            CostModel::General(_) => None,
        }
    }

    pub fn is_hvac(&self) -> bool {
        self.pricing().is_some()
    }

    fn require_hvac(&self) -> Result<PricingSpec, GameError> {
        self.pricing().ok_or(GameError::ModelNotPotential)
    }

    fn check_len(&self, v: &[f64]) -> Result<(), GameError> {
        if v.len() == self.n() {
            Ok(())
        } else {
            Err(GameError::DimensionMismatch {
                expected: self.n(),
                actual: v.len(),
            })
        }
    }

    /// Returns a copy of the game with the player list replaced (same model kind).
    pub fn with_players(&self, players: Vec<PlayerSpec>) -> Result<Self, GameError> {
        Self::new(players, self.model.clone())
    }

    /// The same game expressed in the general polynomial form.
    pub fn to_general(&self) -> Self {
        match self.model {
            CostModel::General(_) => self.clone(),
            CostModel::Hvac(PricingSpec { a, p0 }) => {
                let curtailment = self
                    .players
                    .iter()
                    .map(|p| {
                        Polynomial::new(vec![p.w * p.l_hat * p.l_hat, -2.0 * p.w * p.l_hat, p.w])
                    })
                    .collect();
                Self {
                    players: self.players.clone(),
                    model: CostModel::General(GeneralCostModel {
                        curtailment,
                        pricing: Polynomial::new(vec![p0, a]),
                    }),
                }
            }
        }
    }

    fn curtailment(&self, i: usize, l: f64) -> f64 {
        match &self.model {
            CostModel::Hvac(_) => {
                let p = &self.players[i];
                p.w * (l - p.l_hat).powi(2)
            }
            CostModel::General(g) => g.curtailment[i].eval(l),
        }
    }

    fn curtailment_slope(&self, i: usize, l: f64) -> f64 {
        match &self.model {
            CostModel::Hvac(_) => {
                let p = &self.players[i];
                2.0 * p.w * (l - p.l_hat)
            }
            CostModel::General(g) => g.curtailment[i].eval_derivative(l),
        }
    }

    fn curtailment_curvature(&self, i: usize, l: f64) -> f64 {
        match &self.model {
            CostModel::Hvac(_) => 2.0 * self.players[i].w,
            CostModel::General(g) => g.curtailment[i].eval_second_derivative(l),
        }
    }

    /// Unit price `P(x)` at aggregate `x`.
    pub fn price(&self, x: f64) -> f64 {
        match &self.model {
            CostModel::Hvac(p) => p.a * x + p.p0,
            CostModel::General(g) => g.pricing.eval(x),
        }
    }

    fn price_slope(&self, x: f64) -> f64 {
        match &self.model {
            CostModel::Hvac(p) => p.a,
            CostModel::General(g) => g.pricing.eval_derivative(x),
        }
    }

    fn price_curvature(&self, x: f64) -> f64 {
        match &self.model {
            CostModel::Hvac(_) => 0.0,
            CostModel::General(g) => g.pricing.eval_second_derivative(x),
        }
    }

    /// `C_i(l_i, aggregate) = V_i(l_i) + P(aggregate)·l_i`.
    pub fn cost(&self, i: usize, l_i: f64, aggregate: f64) -> Result<f64, GameError> {
        self.player(i)?;
        Ok(self.curtailment(i, l_i) + self.price(aggregate) * l_i)
    }

    /// Seeking direction of player `i` given its own action and its estimate
    /// `d_i` of the aggregate: `V_i′(l_i) + P(d_i) + l_i·P′(d_i)`.
    pub fn pseudo_gradient(&self, i: usize, l_i: f64, d_i: f64) -> Result<f64, GameError> {
        self.player(i)?;
        Ok(self.pseudo_gradient_unchecked(i, l_i, d_i))
    }

    pub(crate) fn pseudo_gradient_unchecked(&self, i: usize, l_i: f64, d_i: f64) -> f64 {
        self.curtailment_slope(i, l_i) + self.price(d_i) + l_i * self.price_slope(d_i)
    }

    /// Exact potential of the HVAC game:
    /// `Q(l) = Σ w_i (l_i − l̂_i)² + (a/2) Σ_i Σ_{j≠i} l_i l_j + Σ_i (a l_i² + p0 l_i)`,
    /// so that `∂Q/∂l_i = ∂C_i/∂l_i` for every player.
    pub fn potential(&self, l: &[f64]) -> Result<f64, GameError> {
        let PricingSpec { a, p0 } = self.require_hvac()?;
        self.check_len(l)?;
        let total: f64 = l.iter().sum();
        let value = self
            .players
            .iter()
            .zip(l)
            .map(|(p, &x)| {
                p.w * (x - p.l_hat).powi(2) + 0.5 * a * (total - x) * x + a * x * x + p0 * x
            })
            .sum();
        Ok(value)
    }

    /// Analytic gradient of [`Self::potential`].
    pub fn potential_gradient(&self, l: &[f64]) -> Result<Vec<f64>, GameError> {
        let PricingSpec { a, p0 } = self.require_hvac()?;
        self.check_len(l)?;
        let total: f64 = l.iter().sum();
        Ok(self
            .players
            .iter()
            .zip(l)
            .map(|(p, &x)| 2.0 * p.w * (x - p.l_hat) + a * total + p0 + a * x)
            .collect())
    }

    /// Upper bound on `a` guaranteeing a unique equilibrium: `min_i 2w_i/(N−3)`,
    /// infinite for `N ≤ 3`. `None` for general models.
    pub fn uniqueness_bound(&self) -> Option<f64> {
        self.pricing()?;
        let n = self.n();
        if n <= 3 {
            return Some(f64::INFINITY);
        }
        let min_w = self
            .players
            .iter()
            .map(|p| p.w)
            .fold(f64::INFINITY, f64::min);
        Some(2.0 * min_w / (n - 3) as f64)
    }

    /// Distance of `a` below the uniqueness bound (positive when satisfied).
    pub fn uniqueness_margin(&self) -> Option<f64> {
        Some(self.uniqueness_bound()? - self.pricing()?.a)
    }

    /// True iff `N ≤ 3` or `a < min_i 2w_i/(N−3)`. Always false for general
    /// models, which carry no uniqueness guarantee.
    pub fn check_uniqueness_condition(&self) -> bool {
        match (self.pricing(), self.uniqueness_bound()) {
            (Some(p), Some(bound)) => self.n() <= 3 || p.a < bound,
            _ => false,
        }
    }

    /// `B_ij = ∂²C_i/∂l_i∂l_j` at profile `l` (aggregate taken as `Σ l`).
    pub fn jacobian_b(&self, l: &[f64]) -> Result<DMatrix<f64>, GameError> {
        self.check_len(l)?;
        let n = self.n();
        let total: f64 = l.iter().sum();
        let slope = self.price_slope(total);
        let curvature = self.price_curvature(total);
        Ok(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.curtailment_curvature(i, l[i]) + 2.0 * slope + l[i] * curvature
            } else {
                slope + l[i] * curvature
            }
        }))
    }

    /// Constant Hessian of the potential: `2w_i + 2a` on the diagonal, `a` off it.
    pub fn hessian_q(&self) -> Result<DMatrix<f64>, GameError> {
        let PricingSpec { a, .. } = self.require_hvac()?;
        let n = self.n();
        Ok(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0 * self.players[i].w + 2.0 * a
            } else {
                a
            }
        }))
    }

    /// `L(l, η) = Q(l) + Σ_i [η_i1 (l_i^min − l_i) + η_i2 (l_i − l_i^max)]`
    /// with `η` laid out as `[η_11, η_12, η_21, η_22, …]`.
    pub fn lagrangian(&self, l: &[f64], eta: &[f64]) -> Result<f64, GameError> {
        let q = self.potential(l)?;
        if eta.len() != 2 * self.n() {
            return Err(GameError::DimensionMismatch {
                expected: 2 * self.n(),
                actual: eta.len(),
            });
        }
        if let Some((index, &value)) = eta.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(GameError::NegativeMultiplier { index, value });
        }
        let penalty: f64 = self
            .players
            .iter()
            .zip(l)
            .zip(eta.chunks_exact(2))
            .map(|((p, &x), e)| e[0] * (p.l_min - x) + e[1] * (x - p.l_max))
            .sum();
        Ok(q + penalty)
    }
}

/// `|M_ii| > Σ_{j≠i} |M_ij|` for every row.
pub fn is_strictly_diagonally_dominant(m: &DMatrix<f64>) -> Result<bool, GameError> {
    if !m.is_square() {
        return Err(GameError::NotSquare(m.nrows(), m.ncols()));
    }
    Ok((0..m.nrows()).all(|i| {
        let off: f64 = (0..m.ncols())
            .filter(|&j| j != i)
            .map(|j| m[(i, j)].abs())
            .sum();
        m[(i, i)].abs() > off
    }))
}

/// The five-user game with the standard parameter table: `w_i = 1`,
/// `l̂ = (50, 55, 60, 65, 70)`, `a = 0.04`, `p0 = 5`, boxes `[0.8, 1.2]·l̂`.
pub fn table1_game() -> GameSpec {
    let players = [50.0, 55.0, 60.0, 65.0, 70.0]
        .into_iter()
        .map(|l_hat| PlayerSpec::hvac(1.0, l_hat))
        .collect();
    GameSpec::hvac(players, PricingSpec { a: 0.04, p0: 5.0 }).expect("reference game is valid")
}
