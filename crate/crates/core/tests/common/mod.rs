#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nash_seek::game::{GameSpec, PlayerSpec, PricingSpec};
use nash_seek::graph::Graph;
use nash_seek::SimState;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random linear-price game satisfying the uniqueness condition. Boxes are
/// shifted around `l̂` so that some bounds end up active.
pub fn random_game(rng: &mut ChaCha8Rng, n: usize) -> GameSpec {
    let players: Vec<PlayerSpec> = (0..n)
        .map(|_| {
            let w = rng.random_range(0.5..2.0);
            let l_hat = rng.random_range(20.0..100.0);
            let lo = l_hat * rng.random_range(0.3..1.0);
            let hi = lo + l_hat * rng.random_range(0.05..0.6);
            let mut p = PlayerSpec::hvac(w, l_hat).with_bounds(lo, hi);
            p.gain_k = rng.random_range(0.5..2.0);
            p.gain_m1 = rng.random_range(0.5..2.0);
            p.gain_m2 = rng.random_range(0.5..2.0);
            p
        })
        .collect();
    let w_min = players.iter().map(|p| p.w).fold(f64::INFINITY, f64::min);
    let cap = if n <= 3 {
        0.5
    } else {
        (2.0 * w_min / (n as f64 - 3.0)).min(0.5)
    };
    let a = rng.random_range(0.001..0.95) * cap;
    let p0 = rng.random_range(0.0..10.0);
    GameSpec::hvac(players, PricingSpec { a, p0 }).unwrap()
}

/// Random connected graph: a random spanning tree plus extra edges with
/// probability `p`.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.random_range(0..i), i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, &edges).unwrap()
}

/// `κ` with `L·κ = drive − mean(drive)` and `κ_0 = 0`.
pub fn equilibrium_kappa(g: &Graph, drive: &[f64]) -> Vec<f64> {
    let n = g.node_count();
    if n == 1 {
        return vec![0.0];
    }
    let mean = drive.iter().sum::<f64>() / n as f64;
    let rhs: Vec<f64> = drive.iter().map(|v| v - mean).collect();
    let l = g.laplacian();
    let reduced = l.view((1, 1), (n - 1, n - 1)).into_owned();
    let b = DVector::from_column_slice(&rhs[1..]);
    let sol = reduced.lu().solve(&b).unwrap();
    std::iter::once(0.0).chain(sol.iter().copied()).collect()
}

/// Rest point of the consensus subsystem for actions `l`, with optional
/// multipliers in `η` form.
pub fn equilibrium_state(game: &GameSpec, g: &Graph, l: &[f64], eta: Option<&[f64]>) -> SimState {
    let n = game.n();
    let mut s = SimState::zeros(n, eta.is_some());
    s.l_mut().copy_from_slice(l);
    let total: f64 = l.iter().sum();
    s.d_mut().iter_mut().for_each(|d| *d = total);
    let drive: Vec<f64> = l.iter().map(|x| n as f64 * x).collect();
    s.kappa_mut().copy_from_slice(&equilibrium_kappa(g, &drive));
    if let Some(eta) = eta {
        for (z, e) in s.zeta_mut().iter_mut().zip(eta) {
            *z = e.ln();
        }
    }
    s
}

/// System matrix of the consensus subsystem on `[D | κ]`.
pub fn consensus_matrix(g: &Graph) -> DMatrix<f64> {
    let n = g.node_count();
    let l = g.laplacian();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let top_left = -DMatrix::identity(n, n) - &l;
    a.view_mut((0, 0), (n, n)).copy_from(&top_left);
    a.view_mut((0, n), (n, n)).copy_from(&(-&l));
    a.view_mut((n, 0), (n, n)).copy_from(&l);
    a
}

/// Slowest non-zero decay rate of the consensus subsystem, from the
/// complex eigenvalues of its system matrix.
pub fn dominant_consensus_rate(g: &Graph) -> f64 {
    consensus_matrix(g)
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.norm() > 1e-9)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, my - slope * mx, r2)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn manifest_path(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub struct ConsensusRun {
    pub times: Vec<f64>,
    /// `max_i |D_i − Σ l|` per sample.
    pub errors: Vec<f64>,
    pub predicted_rate: f64,
    pub fitted_rate: f64,
    pub r2: f64,
}

impl ConsensusRun {
    pub fn final_error(&self) -> f64 {
        *self.errors.last().unwrap()
    }
}

/// Integrates the frozen-action consensus subsystem from `y0 = [D | κ]` until
/// the slowest mode has decayed well below `1e-6`, then fits a line to the log
/// error once the faster modes have died out.
pub fn consensus_run(g: &Graph, l: &[f64], y0: &[f64]) -> ConsensusRun {
    use nash_seek::dynamics::FrozenConsensus;
    use nash_seek::ode::{integrate, IntegratorConfig};

    let n = g.node_count();
    let total: f64 = l.iter().sum();
    let mut rates: Vec<f64> = consensus_matrix(g)
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.norm() > 1e-9)
        .map(|z| z.re)
        .collect();
    rates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let predicted = rates[0];
    let gap = rates
        .iter()
        .map(|r| predicted - r)
        .find(|&d| d > 1e-6)
        .unwrap_or(1.0);

    let target = 1e-9;
    let scale = y0
        .iter()
        .chain(l)
        .fold(total.abs(), |m, v| m.max(v.abs()))
        .max(1.0);
    let t_max = ((scale * 100.0) / target).ln() / -predicted;
    let cfg = IntegratorConfig {
        step_h: 1e-2,
        t_max: t_max.ceil(),
        sample_every: 10,
        stop_tol: 0.0,
        diverge_bound: 1e12,
    };
    let field = FrozenConsensus::new(g, l).unwrap();
    let sol = integrate(&field, y0, &cfg).unwrap();
    let errors: Vec<f64> = sol
        .states
        .iter()
        .map(|y| y[..n].iter().map(|d| (d - total).abs()).fold(0.0, f64::max))
        .collect();

    let t_start = (1e3f64.ln() / gap).min(0.5 * cfg.t_max);
    let (xs, ys): (Vec<f64>, Vec<f64>) = sol
        .times
        .iter()
        .zip(&errors)
        .filter(|(&t, &e)| t >= t_start && e > 1e-10)
        .map(|(&t, &e)| (t, e.ln()))
        .unzip();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    ConsensusRun {
        times: sol.times,
        errors,
        predicted_rate: predicted,
        fitted_rate: slope,
        r2,
    }
}
