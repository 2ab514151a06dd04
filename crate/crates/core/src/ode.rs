//! Fixed-step classical Runge–Kutta integration with sampling and stopping rules.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("vector field produced a non-finite derivative")]
    NonFiniteDerivative,
    #[error("initial state is not finite")]
    NonFiniteState,
    #[error("state has length {actual}, vector field expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
}

/// Autonomous vector field `dy/dt = f(y)` on a flat state vector.
pub trait VectorField {
    fn dim(&self) -> usize;

    fn eval(&self, y: &[f64], dy: &mut [f64]);

    /// Stopping residual; defaults to the Euclidean norm of `f(y)`.
    fn residual(&self, y: &[f64]) -> f64 {
        let mut dy = vec![0.0; y.len()];
        self.eval(y, &mut dy);
        norm(&dy)
    }
}

/// Adapts a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        (self.f)(y, dy)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub step_h: f64,
    pub t_max: f64,
    /// Sampling stride in steps; the residual is checked at every sample.
    pub sample_every: usize,
    pub stop_tol: f64,
    pub diverge_bound: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step_h: 1e-3,
            t_max: 2000.0,
            sample_every: 100,
            stop_tol: 1e-8,
            diverge_bound: 1e9,
        }
    }
}

impl IntegratorConfig {
    /// Every violated invariant, as `(field, message)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.step_h > 0.0 && self.step_h.is_finite()) {
            out.push(("step_h", format!("must be positive, got {}", self.step_h)));
        }
        // t_max = 0 is allowed: it echoes the initial state.
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            out.push(("t_max", format!("must be non-negative, got {}", self.t_max)));
        }
        if self.sample_every == 0 {
            out.push(("sample_every", "must be at least 1".to_string()));
        }
        if !(self.stop_tol >= 0.0) {
            out.push((
                "stop_tol",
                format!("must be non-negative, got {}", self.stop_tol),
            ));
        }
        if !(self.diverge_bound > 0.0) {
            out.push((
                "diverge_bound",
                format!("must be positive, got {}", self.diverge_bound),
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((field, msg)) => Err(OdeError::InvalidConfig(format!("{field} {msg}"))),
        }
    }

    fn step_count(&self) -> u64 {
        (self.t_max / self.step_h - 1e-9).ceil().max(0.0) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Horizon,
    Diverged,
    NumericFailure,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converged => "CONVERGED",
            Self::Horizon => "HORIZON",
            Self::Diverged => "DIVERGED",
            Self::NumericFailure => "NUMERIC_FAILURE",
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Self::Diverged | Self::NumericFailure)
    }
}

/// Sampled output of [`integrate`]. The first sample is the initial state and
/// the last sample is the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub stop: StopReason,
    pub steps: u64,
}

impl Solution {
    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("solution has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("solution has at least one sample")
    }
}

/// Scratch buffers for allocation-free RK4 stepping.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `y` in place by one step of size `h`. On failure `y` is left
    /// untouched.
    pub fn step<F: VectorField + ?Sized>(
        &mut self,
        rhs: &F,
        y: &mut [f64],
        h: f64,
    ) -> Result<(), OdeError> {
        let Self {
            k1,
            k2,
            k3,
            k4,
            tmp,
        } = self;
        rhs.eval(y, k1);
        for ((t, &yi), &k) in tmp.iter_mut().zip(y.iter()).zip(k1.iter()) {
            *t = yi + 0.5 * h * k;
        }
        rhs.eval(tmp, k2);
        for ((t, &yi), &k) in tmp.iter_mut().zip(y.iter()).zip(k2.iter()) {
            *t = yi + 0.5 * h * k;
        }
        rhs.eval(tmp, k3);
        for ((t, &yi), &k) in tmp.iter_mut().zip(y.iter()).zip(k3.iter()) {
            *t = yi + h * k;
        }
        rhs.eval(tmp, k4);
        let finite = [&*k1, &*k2, &*k3, &*k4]
            .iter()
            .all(|k| k.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(OdeError::NonFiniteDerivative);
        }
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }
}

/// One classical RK4 step from `state`.
pub fn rk4_step<F: VectorField + ?Sized>(
    rhs: &F,
    state: &[f64],
    h: f64,
) -> Result<Vec<f64>, OdeError> {
    if !(h > 0.0) {
        return Err(OdeError::InvalidConfig(format!(
            "step must be positive, got {h}"
        )));
    }
    let mut y = state.to_vec();
    Rk4::new(state.len()).step(rhs, &mut y, h)?;
    Ok(y)
}

/// Integrates from `state0` until the residual drops below `stop_tol`
/// (checked at every sample), the horizon is reached, the state norm exceeds
/// `diverge_bound`, or a derivative turns non-finite.
pub fn integrate<F: VectorField + ?Sized>(
    rhs: &F,
    state0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Solution, OdeError> {
    cfg.validate()?;
    if state0.len() != rhs.dim() {
        return Err(OdeError::DimensionMismatch {
            expected: rhs.dim(),
            actual: state0.len(),
        });
    }
    if !state0.iter().all(|v| v.is_finite()) {
        return Err(OdeError::NonFiniteState);
    }

    let total = cfg.step_count();
    let stride = cfg.sample_every as u64;
    let mut y = state0.to_vec();
    let mut rk = Rk4::new(y.len());
    let mut sol = Solution {
        times: Vec::new(),
        states: Vec::new(),
        residuals: Vec::new(),
        stop: StopReason::Horizon,
        steps: 0,
    };
    let record = |sol: &mut Solution, k: u64, y: &[f64]| {
        let r = rhs.residual(y);
        sol.times.push(k as f64 * cfg.step_h);
        sol.states.push(y.to_vec());
        sol.residuals.push(r);
        r
    };

    let mut k = 0;
    loop {
        if k % stride == 0 || k == total {
            let r = record(&mut sol, k, &y);
            if r < cfg.stop_tol {
                sol.stop = StopReason::Converged;
                break;
            }
        }
        if k >= total {
            sol.stop = StopReason::Horizon;
            break;
        }
        if rk.step(rhs, &mut y, cfg.step_h).is_err() {
            if *sol.times.last().unwrap() != k as f64 * cfg.step_h {
                record(&mut sol, k, &y);
            }
            sol.stop = StopReason::NumericFailure;
            break;
        }
        k += 1;
        if !(norm(&y) <= cfg.diverge_bound) {
            record(&mut sol, k, &y);
            sol.stop = StopReason::Diverged;
            break;
        }
    }
    sol.steps = k;
    Ok(sol)
}
