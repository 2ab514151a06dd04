mod common;

use common::*;
use nash_seek::graph::{Graph, Topology};
use rand::Rng;

#[test]
fn path8_decays_at_slow_rate() {
    let g = Graph::from_topology(Topology::Path, 8).unwrap();
    let l: Vec<f64> = (0..8).map(|i| 40.0 + 3.0 * i as f64).collect();
    let run = consensus_run(&g, &l, &[0.0; 16]);
    // slow root of s² + (1+λ)s + λ² for the Fiedler value of the path
    let lam = g.fiedler_value().unwrap();
    let slow = (-(1.0 + lam) + ((1.0 + lam).powi(2) - 4.0 * lam * lam).sqrt()) / 2.0;
    assert!((run.predicted_rate - slow).abs() < 1e-9);
    assert!(run.final_error() < 1e-6);
    assert!(run.r2 > 0.99, "{}", run.r2);
    assert!((run.fitted_rate / run.predicted_rate - 1.0).abs() < 0.2);
}

#[test]
fn complete_graph_rate_is_unit() {
    let g = Graph::from_topology(Topology::Complete, 6).unwrap();
    assert!((dominant_consensus_rate(&g) + 1.0).abs() < 1e-9);
}

#[test]
fn random_graphs_reach_consensus_from_random_start() {
    let mut rng = rng(7);
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let g = random_connected_graph(&mut rng, n, 0.3);
        let l: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..100.0)).collect();
        let y0: Vec<f64> = (0..2 * n)
            .map(|_| rng.random_range(-200.0..200.0))
            .collect();
        let run = consensus_run(&g, &l, &y0);
        assert!(run.final_error() < 1e-6, "n={n} err={}", run.final_error());
        assert!(run.r2 > 0.99, "n={n} r2={}", run.r2);
        let ratio = run.fitted_rate / run.predicted_rate;
        assert!((ratio - 1.0).abs() < 0.2, "n={n} ratio={ratio}");
    }
}
