//! Scenario documents: a single JSON file declaring the game, graph, strategy,
//! integrator settings and initial-condition overrides.
//!
//! Parsing is strict (unknown fields are rejected) and validation is total:
//! every violation is reported with its field path, not just the first one.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{SimState, StrategyMode};
use crate::game::{CostModel, GameSpec, GeneralCostModel, PlayerSpec, Polynomial, PricingSpec};
use crate::graph::{Graph, GraphError, Topology};
use crate::ode::IntegratorConfig;

pub const DEFAULT_DELTA: f64 = 0.05;

const TABLE1_INNER: &str = include_str!("../scenarios/table1_inner.json");
const TABLE1_CONSTRAINED: &str = include_str!("../scenarios/table1_constrained.json");
const TABLE1_STUBBORN: &str = include_str!("../scenarios/table1_stubborn.json");

/// Names of the scenarios compiled into the binary.
pub const BUNDLED: [&str; 3] = ["table1_inner", "table1_constrained", "table1_stubborn"];

pub fn bundled_source(name: &str) -> Option<&'static str> {
    match name {
        "table1_inner" => Some(TABLE1_INNER),
        "table1_constrained" => Some(TABLE1_CONSTRAINED),
        "table1_stubborn" => Some(TABLE1_STUBBORN),
        _ => None,
    }
}

pub fn bundled(name: &str) -> Option<Scenario> {
    bundled_source(name).map(|src| parse_scenario(src).expect("bundled scenarios are valid"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    pub fn mentions(&self, path: &str) -> bool {
        self.violations.iter().any(|v| v.path == path)
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation error(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

// ---- wire format ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub name: String,
    pub players: Vec<PlayerDoc>,
    pub pricing: PricingDoc,
    pub graph: GraphDoc,
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitDoc>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_m1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stubborn: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[i64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diverge_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<f64>>,
    #[serde(default, rename = "D", skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Vec<f64>>,
}

// ---- validated form ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphDecl {
    Topology(Topology),
    Edges(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitOverrides {
    pub l: Option<Vec<f64>>,
    pub d: Option<Vec<f64>>,
    pub kappa: Option<Vec<f64>>,
    pub zeta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub game: GameSpec,
    pub graph_decl: GraphDecl,
    pub graph: Graph,
    pub strategy: StrategyMode,
    pub delta: f64,
    pub integrator: IntegratorConfig,
    pub init: InitOverrides,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc =
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    Ok(Scenario::from_doc(&doc)?)
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn positive(c: &mut Collector, path: String, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        c.push(path, format!("must be positive and finite, got {v}"));
    }
}

fn finite(c: &mut Collector, path: String, v: f64) {
    if !v.is_finite() {
        c.push(path, "must be finite");
    }
}

impl Scenario {
    pub fn from_doc(doc: &ScenarioDoc) -> Result<Self, ValidationError> {
        let mut c = Collector(Vec::new());
        let n = doc.players.len();
        if n == 0 {
            c.push("players", "at least one player is required");
        }

        let strategy = StrategyMode::parse(&doc.strategy);
        if strategy.is_none() {
            c.push(
                "strategy",
                format!(
                    "unknown strategy {:?} (expected general, primal_dual or inner)",
                    doc.strategy
                ),
            );
        }

        // pricing decides the cost model
        let pricing = &doc.pricing;
        let general = pricing.p_coeffs.is_some();
        let mut hvac_pricing = None;
        if general {
            if pricing.a.is_some() || pricing.p0.is_some() {
                c.push("pricing", "give either {a, p0} or {p_coeffs}, not both");
            }
            if let Some(coeffs) = &pricing.p_coeffs {
                if coeffs.iter().any(|v| !v.is_finite()) {
                    c.push("pricing.p_coeffs", "coefficients must be finite");
                }
            }
        } else {
            match (pricing.a, pricing.p0) {
                (Some(a), Some(p0)) => {
                    if !(a >= 0.0 && a.is_finite()) {
                        c.push("pricing.a", format!("must be non-negative, got {a}"));
                    }
                    finite(&mut c, "pricing.p0".into(), p0);
                    hvac_pricing = Some(PricingSpec { a, p0 });
                }
                (a, p0) => {
                    if a.is_none() {
                        c.push("pricing.a", "missing (or give pricing.p_coeffs)");
                    }
                    if p0.is_none() {
                        c.push("pricing.p0", "missing (or give pricing.p_coeffs)");
                    }
                }
            }
        }

        let mut players = Vec::with_capacity(n);
        let mut curtailment = Vec::new();
        for (i, p) in doc.players.iter().enumerate() {
            let path = |f: &str| format!("players[{i}].{f}");
            let stubborn = p.stubborn;
            if let Some(s) = stubborn {
                finite(&mut c, path("stubborn"), s);
            }
            let w = match (p.w, general) {
                (Some(w), _) => {
                    positive(&mut c, path("w"), w);
                    w
                }
                (None, true) => 1.0,
                (None, false) => {
                    c.push(path("w"), "missing");
                    1.0
                }
            };
            let l_hat = match (p.l_hat, general) {
                (Some(v), _) => {
                    finite(&mut c, path("l_hat"), v);
                    v
                }
                (None, true) => 0.0,
                (None, false) => {
                    c.push(path("l_hat"), "missing");
                    0.0
                }
            };
            let (l_min, l_max) = match (p.l_min, p.l_max, stubborn) {
                (Some(lo), Some(hi), _) => {
                    finite(&mut c, path("l_min"), lo);
                    finite(&mut c, path("l_max"), hi);
                    if stubborn.is_none() && !(lo < hi) {
                        c.push(path("l_min"), format!("must be below l_max ({lo} >= {hi})"));
                    }
                    (lo, hi)
                }
                (lo, hi, Some(s)) => (lo.unwrap_or(s), hi.unwrap_or(s)),
                (lo, hi, None) => {
                    if lo.is_none() {
                        c.push(path("l_min"), "missing");
                    }
                    if hi.is_none() {
                        c.push(path("l_max"), "missing");
                    }
                    (0.0, 1.0)
                }
            };
            let mut gain = |name: &str, v: Option<f64>| {
                let v = v.unwrap_or(1.0);
                positive(&mut c, path(name), v);
                v
            };
            let gain_k = gain("gain_k", p.gain_k);
            let gain_m1 = gain("gain_m1", p.gain_m1);
            let gain_m2 = gain("gain_m2", p.gain_m2);
            match (&p.v_coeffs, general) {
                (Some(coeffs), true) => {
                    if coeffs.iter().any(|v| !v.is_finite()) {
                        c.push(path("v_coeffs"), "coefficients must be finite");
                    }
                    curtailment.push(Polynomial::new(coeffs.clone()));
                }
                (None, true) => c.push(path("v_coeffs"), "required with pricing.p_coeffs"),
                (Some(_), false) => c.push(path("v_coeffs"), "only valid with pricing.p_coeffs"),
                (None, false) => {}
            }
            players.push(PlayerSpec {
                w,
                l_hat,
                l_min,
                l_max,
                gain_k,
                gain_m1,
                gain_m2,
                stubborn,
            });
        }

        // graph
        let mut graph_decl = None;
        match (&doc.graph.topology, &doc.graph.edges) {
            (Some(_), Some(_)) => c.push("graph", "give either topology or edges, not both"),
            (None, None) => c.push("graph", "missing topology or edges"),
            (Some(name), None) => match Topology::parse(name) {
                Some(t) => graph_decl = Some(GraphDecl::Topology(t)),
                None => c.push(
                    "graph.topology",
                    format!("unknown topology {name:?} (expected ring, complete or path)"),
                ),
            },
            (None, Some(edges)) => {
                let mut list = Vec::with_capacity(edges.len());
                let mut ok = true;
                for (k, &[i, j]) in edges.iter().enumerate() {
                    let in_range = |v: i64| v >= 0 && (v as usize) < n;
                    if !in_range(i) || !in_range(j) {
                        c.push(
                            format!("graph.edges[{k}]"),
                            format!("node index out of range 0..{n}: [{i}, {j}]"),
                        );
                        ok = false;
                    } else if i == j {
                        c.push(
                            format!("graph.edges[{k}]"),
                            format!("self-loop at node {i}"),
                        );
                        ok = false;
                    } else {
                        list.push((i as usize, j as usize));
                    }
                }
                if ok {
                    graph_decl = Some(GraphDecl::Edges(list));
                }
            }
        }
        let graph = match (&graph_decl, n) {
            (Some(decl), n) if n > 0 => match build_graph(decl, n) {
                Ok(g) if g.is_connected() => Some(g),
                Ok(_) => {
                    c.push("graph", GraphError::NotConnected.to_string());
                    None
                }
                Err(e) => {
                    c.push("graph", e.to_string());
                    None
                }
            },
            _ => None,
        };

        // mode-model compatibility and uniqueness
        if let Some(mode) = strategy {
            if mode.requires_hvac() && general {
                c.push(
                    "strategy",
                    format!("{} requires linear pricing {{a, p0}}", mode.name()),
                );
            }
        }

        let model = if general {
            CostModel::General(GeneralCostModel {
                curtailment,
                pricing: Polynomial::new(pricing.p_coeffs.clone().unwrap_or_default()),
            })
        } else {
            CostModel::Hvac(hvac_pricing.unwrap_or(PricingSpec { a: 0.0, p0: 0.0 }))
        };

        let delta = doc.delta.unwrap_or(DEFAULT_DELTA);
        positive(&mut c, "delta".into(), delta);

        let defaults = IntegratorConfig::default();
        let integrator = match &doc.integrator {
            None => defaults,
            Some(d) => IntegratorConfig {
                step_h: d.step_h.unwrap_or(defaults.step_h),
                t_max: d.t_max.unwrap_or(defaults.t_max),
                sample_every: d.sample_every.unwrap_or(defaults.sample_every),
                stop_tol: d.stop_tol.unwrap_or(defaults.stop_tol),
                diverge_bound: d.diverge_bound.unwrap_or(defaults.diverge_bound),
            },
        };
        for (field, msg) in integrator.violations() {
            c.push(format!("integrator.{field}"), msg);
        }

        let init = doc
            .init
            .as_ref()
            .map(|i| InitOverrides {
                l: i.l.clone(),
                d: i.d.clone(),
                kappa: i.kappa.clone(),
                zeta: i.zeta.clone(),
            })
            .unwrap_or_default();
        for (field, v, len) in [
            ("l", &init.l, n),
            ("D", &init.d, n),
            ("kappa", &init.kappa, n),
            ("zeta", &init.zeta, 2 * n),
        ] {
            if let Some(v) = v {
                if v.len() != len {
                    c.push(
                        format!("init.{field}"),
                        format!("expected {len} entries, got {}", v.len()),
                    );
                }
                if v.iter().any(|x| !x.is_finite()) {
                    c.push(format!("init.{field}"), "entries must be finite");
                }
            }
        }
        if init.zeta.is_some() && strategy != Some(StrategyMode::PrimalDual) {
            c.push("init.zeta", "only valid with strategy primal_dual");
        }

        if !c.0.is_empty() {
            return Err(ValidationError { violations: c.0 });
        }

        let game = match GameSpec::new(players, model) {
            Ok(g) => g,
            Err(e) => {
                return Err(ValidationError {
                    violations: vec![Violation {
                        path: "players".into(),
                        message: e.to_string(),
                    }],
                })
            }
        };
        let strategy = strategy.expect("checked above");
        if strategy.requires_hvac() && !game.check_uniqueness_condition() {
            let bound = game.uniqueness_bound().unwrap_or(f64::NAN);
            return Err(ValidationError {
                violations: vec![Violation {
                    path: "pricing.a".into(),
                    message: format!(
                        "uniqueness bound violated: need a < min_i 2w_i/(N-3) = {bound}, got {}",
                        game.pricing().map_or(f64::NAN, |p| p.a)
                    ),
                }],
            });
        }

        Ok(Self {
            name: doc.name.clone(),
            game,
            graph_decl: graph_decl.expect("checked above"),
            graph: graph.expect("checked above"),
            strategy,
            delta,
            integrator,
            init,
        })
    }

    pub fn to_doc(&self) -> ScenarioDoc {
        let general = match self.game.model() {
            CostModel::General(g) => Some(g),
            CostModel::Hvac(_) => None,
        };
        let players = self
            .game
            .players()
            .iter()
            .enumerate()
            .map(|(i, p)| PlayerDoc {
                w: Some(p.w),
                l_hat: Some(p.l_hat),
                l_min: Some(p.l_min),
                l_max: Some(p.l_max),
                gain_k: Some(p.gain_k),
                gain_m1: Some(p.gain_m1),
                gain_m2: Some(p.gain_m2),
                stubborn: p.stubborn,
                v_coeffs: general.map(|g| g.curtailment[i].coeffs().to_vec()),
            })
            .collect();
        let pricing = match self.game.model() {
            CostModel::Hvac(p) => PricingDoc {
                a: Some(p.a),
                p0: Some(p.p0),
                p_coeffs: None,
            },
            CostModel::General(g) => PricingDoc {
                p_coeffs: Some(g.pricing.coeffs().to_vec()),
                ..Default::default()
            },
        };
        let graph = match &self.graph_decl {
            GraphDecl::Topology(t) => GraphDoc {
                topology: Some(t.name().to_string()),
                edges: None,
            },
            GraphDecl::Edges(e) => GraphDoc {
                topology: None,
                edges: Some(e.iter().map(|&(i, j)| [i as i64, j as i64]).collect()),
            },
        };
        let cfg = &self.integrator;
        let init = &self.init;
        let has_init =
            init.l.is_some() || init.d.is_some() || init.kappa.is_some() || init.zeta.is_some();
        ScenarioDoc {
            name: self.name.clone(),
            players,
            pricing,
            graph,
            strategy: self.strategy.name().to_string(),
            delta: Some(self.delta),
            integrator: Some(IntegratorDoc {
                step_h: Some(cfg.step_h),
                t_max: Some(cfg.t_max),
                sample_every: Some(cfg.sample_every),
                stop_tol: Some(cfg.stop_tol),
                diverge_bound: Some(cfg.diverge_bound),
            }),
            init: has_init.then(|| InitDoc {
                l: init.l.clone(),
                d: init.d.clone(),
                kappa: init.kappa.clone(),
                zeta: init.zeta.clone(),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("scenario serializes")
    }

    /// Initial state: defaults with overrides applied; stubborn players are
    /// always pinned at their fixed consumption.
    pub fn initial_state(&self) -> SimState {
        let mut s = SimState::initial(&self.game, self.strategy);
        if let Some(l) = &self.init.l {
            s.l_mut().copy_from_slice(l);
        }
        if let Some(d) = &self.init.d {
            s.d_mut().copy_from_slice(d);
        }
        if let Some(k) = &self.init.kappa {
            s.kappa_mut().copy_from_slice(k);
        }
        if let Some(z) = &self.init.zeta {
            s.zeta_mut().copy_from_slice(z);
        }
        for (l, p) in s.l_mut().iter_mut().zip(self.game.players()) {
            if let Some(fixed) = p.stubborn {
                *l = fixed;
            }
        }
        s
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self, ValidationError> {
        let mut doc = self.to_doc();
        doc.delta = Some(delta);
        Self::from_doc(&doc)
    }

    pub fn with_step_h(&self, step_h: f64) -> Result<Self, ValidationError> {
        let mut doc = self.to_doc();
        doc.integrator.get_or_insert_with(Default::default).step_h = Some(step_h);
        Self::from_doc(&doc)
    }

    pub fn with_topology(&self, topology: &str) -> Result<Self, ValidationError> {
        let mut doc = self.to_doc();
        doc.graph = GraphDoc {
            topology: Some(topology.to_string()),
            edges: None,
        };
        Self::from_doc(&doc)
    }

    pub fn with_gain_k_all(&self, gain: f64) -> Result<Self, ValidationError> {
        let mut doc = self.to_doc();
        for p in &mut doc.players {
            p.gain_k = Some(gain);
        }
        Self::from_doc(&doc)
    }
}

fn build_graph(decl: &GraphDecl, n: usize) -> Result<Graph, GraphError> {
    match decl {
        GraphDecl::Topology(t) => Graph::from_topology(*t, n),
        GraphDecl::Edges(e) => Graph::new(n, e),
    }
}
