//! Scenario files: JSON documents describing a network, its agents and
//! couplings (or one of the built-in applications), and how to run it.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::apps::counting::{self, CountingProblem, MembershipEvent};
use crate::apps::dispatch::{self, dispatch_agent, DispatchProblem, QuadraticNode};
use crate::apps::observer::{self, ObserverProblem};
use crate::apps::vdp::{self, VdpNetwork};
use crate::decomposition::CouplingMode;
use crate::dynamics::{counting_node_with_value, linear_constant, van_der_pol, AgentDynamics, NetworkSystem};
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::NetworkGraph;
use crate::sample;
use crate::simulate::{Method, SimulationOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub graph: GraphSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<AgentSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app: Option<AppSpec>,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Chain,
    Complete,
    Star,
}

/// Graph on `agents` nodes, either a named topology or one-based weighted
/// edges `[i, j, w]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub agents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<Topology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
}

impl GraphSpec {
    pub fn build(&self) -> Result<NetworkGraph> {
        match (&self.topology, &self.edges) {
            (Some(_), Some(_)) => Err(Error::Config("graph: give either topology or edges, not both".into())),
            (Some(Topology::Chain), None) => NetworkGraph::chain(self.agents),
            (Some(Topology::Complete), None) => NetworkGraph::complete(self.agents),
            (Some(Topology::Star), None) => NetworkGraph::star(self.agents),
            (None, Some(e)) => NetworkGraph::from_one_based(self.agents, e),
            (None, None) => Err(Error::Config("graph: topology or edges required".into())),
        }
    }
}

/// Row-major dense matrix or a shorthand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Dense(Vec<Vec<f64>>),
    Identity { identity: usize },
    ScaledIdentity { scaled_identity: (usize, f64) },
    /// `v vᵀ`
    RankOne { rank_one: Vec<f64> },
}

impl MatrixSpec {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Dense(rows) => {
                let r = rows.len();
                let c = rows.first().map(|x| x.len()).unwrap_or(0);
                if r == 0 || rows.iter().any(|x| x.len() != c) {
                    return Err(Error::Config("matrix rows must be nonempty and of equal length".into()));
                }
                Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
            }
            MatrixSpec::Identity { identity } => Ok(DMatrix::identity(*identity, *identity)),
            MatrixSpec::ScaledIdentity { scaled_identity: (n, s) } => Ok(DMatrix::identity(*n, *n) * *s),
            MatrixSpec::RankOne { rank_one } => {
                let v = DVector::from_column_slice(rank_one);
                Ok(&v * v.transpose())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentSpec {
    /// `x' = A x + b`
    Linear {
        a: MatrixSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<Vec<f64>>,
    },
    VanDerPol { c: f64, w: f64 },
    Counting {
        #[serde(default)]
        anchor: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
    },
    DualGradient(QuadraticNode),
}

impl AgentSpec {
    pub fn build(&self) -> Result<AgentDynamics> {
        match self {
            AgentSpec::Linear { a, b } => {
                let a = a.to_matrix()?;
                let b = b
                    .as_ref()
                    .map(|v| DVector::from_column_slice(v))
                    .unwrap_or_else(|| DVector::zeros(a.nrows()));
                linear_constant(a, b)
            }
            AgentSpec::VanDerPol { c, w } => van_der_pol(*c, *w),
            AgentSpec::Counting { anchor, value } => counting_node_with_value(*anchor, value.unwrap_or(1.0)),
            AgentSpec::DualGradient(node) => dispatch_agent(*node),
        }
    }

    fn state_dim(&self) -> Option<usize> {
        match self {
            AgentSpec::Linear { a, .. } => a.to_matrix().ok().map(|m| m.nrows()),
            AgentSpec::VanDerPol { .. } => Some(2),
            AgentSpec::Counting { .. } | AgentSpec::DualGradient(_) => Some(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    #[serde(default = "default_mode")]
    pub mode: ModeSpec,
    /// One matrix shared by every agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identical: Option<MatrixSpec>,
    /// One matrix per agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<MatrixSpec>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    Input,
    Output,
}

impl From<ModeSpec> for CouplingMode {
    fn from(m: ModeSpec) -> Self {
        match m {
            ModeSpec::Input => CouplingMode::InputSide,
            ModeSpec::Output => CouplingMode::OutputSide,
        }
    }
}

fn default_mode() -> ModeSpec {
    ModeSpec::Input
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AppSpec {
    Counting {
        n_max: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ids: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        events: Vec<MembershipEvent>,
    },
    CountingId { n_max: usize, ids: Vec<usize> },
    Observer {
        s: MatrixSpec,
        outputs: Vec<MatrixSpec>,
        omega0: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tolerance: Option<f64>,
    },
    Dispatch { nodes: Vec<QuadraticNode> },
    Vdp { c: Vec<f64>, w: Vec<f64>, a: f64, b: f64 },
}

impl AppSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AppSpec::Counting { .. } => "counting",
            AppSpec::CountingId { .. } => "counting_id",
            AppSpec::Observer { .. } => "observer",
            AppSpec::Dispatch { .. } => "dispatch",
            AppSpec::Vdp { .. } => "vdp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub t_span: (f64, f64),
    pub rel_tol: f64,
    pub abs_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_list: Option<Vec<f64>>,
    pub seed: u64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    /// Restart times for the integrator.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<f64>,
    /// Initial network state; drawn from the seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_skip: Option<f64>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            t_span: (0.0, 10.0),
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            k: None,
            k_list: None,
            seed: 0,
            method: Method::Adaptive,
            max_step: None,
            events: Vec::new(),
            x0: None,
            t_skip: None,
        }
    }
}

impl SimulationSpec {
    pub fn options(&self) -> SimulationOptions {
        SimulationOptions {
            t0: self.t_span.0,
            t1: self.t_span.1,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            method: self.method,
            seed: self.seed,
            events: self.events.clone(),
            ..SimulationOptions::default()
        }
    }

    /// Configured initial state, or a seeded standard normal draw.
    pub fn initial_state(&self, dim: usize) -> Result<DVector<f64>> {
        match &self.x0 {
            Some(v) if v.len() == dim => Ok(DVector::from_column_slice(v)),
            Some(v) => Err(Error::Config(format!(
                "simulation.x0 has {} entries, the network state has {dim}",
                v.len()
            ))),
            None => Ok(sample::normal_vector(&mut sample::rng(self.seed), dim)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub plot: bool,
}

fn finite_all(name: &str, vals: &[f64], errs: &mut Vec<String>) {
    if vals.iter().any(|v| !v.is_finite()) {
        errs.push(format!("{name}: non-finite value"));
    }
}

fn check_psd(name: &str, m: &DMatrix<f64>, errs: &mut Vec<String>) {
    if !m.is_square() {
        errs.push(format!("{name}: coupling matrix is {}x{}, not square", m.nrows(), m.ncols()));
        return;
    }
    finite_all(name, m.as_slice(), errs);
    if !linalg::is_symmetric(m, 1e-10) {
        errs.push(format!("{name}: coupling matrix is not symmetric"));
        return;
    }
    let ev = linalg::sym_eigenvalues(m);
    let scale = ev.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    if let Some(min) = ev.last() {
        if *min < -1e-10 * scale {
            errs.push(format!(
                "{name}: coupling matrix is not positive semidefinite (eigenvalues {:?})",
                ev
            ));
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("syntax error at line {}, column {}: {e}", e.line(), e.column()))
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    /// Every semantic problem with the scenario, in one list.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let n = self.graph.agents;
        if let Err(e) = self.graph.build() {
            errs.push(format!("graph: {e}"));
        }
        match (&self.agents, &self.app) {
            (Some(_), Some(_)) => errs.push("give either agents or app, not both".into()),
            (None, None) => errs.push("one of agents or app is required".into()),
            _ => {}
        }
        let sim = &self.simulation;
        finite_all("simulation.t_span", &[sim.t_span.0, sim.t_span.1], &mut errs);
        if !(sim.t_span.1 > sim.t_span.0) {
            errs.push("simulation.t_span must be increasing".into());
        }
        if !(sim.rel_tol > 0.0 && sim.abs_tol > 0.0) {
            errs.push("simulation tolerances must be positive".into());
        }
        if let Some(k) = sim.k {
            if !(k.is_finite() && k > 0.0) {
                errs.push(format!("simulation.k must be positive, got {k}"));
            }
        }
        if let Some(ks) = &sim.k_list {
            if ks.is_empty() || ks.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
                errs.push("simulation.k_list must hold positive gains".into());
            } else if ks.windows(2).any(|w| w[1] <= w[0]) {
                errs.push("simulation.k_list must be strictly increasing".into());
            }
        }
        if let Some(x0) = &sim.x0 {
            finite_all("simulation.x0", x0, &mut errs);
        }
        if let Some(h) = sim.max_step {
            if !(h > 0.0 && h.is_finite()) {
                errs.push("simulation.max_step must be positive".into());
            }
        }
        finite_all("simulation.events", &sim.events, &mut errs);

        if let Some(agents) = &self.agents {
            if agents.len() != n {
                errs.push(format!("agents lists {} entries, graph has {n}", agents.len()));
            }
            let dims: Vec<Option<usize>> = agents.iter().map(|a| a.state_dim()).collect();
            for (i, a) in agents.iter().enumerate() {
                if let AgentSpec::Linear { a: m, b } = a {
                    match m.to_matrix() {
                        Ok(m) => {
                            finite_all(&format!("agents[{}].a", i + 1), m.as_slice(), &mut errs);
                            if !m.is_square() {
                                errs.push(format!("agents[{}].a is not square", i + 1));
                            }
                            if let Some(b) = b {
                                finite_all(&format!("agents[{}].b", i + 1), b, &mut errs);
                                if b.len() != m.nrows() {
                                    errs.push(format!("agents[{}].b has the wrong length", i + 1));
                                }
                            }
                        }
                        Err(e) => errs.push(format!("agents[{}].a: {e}", i + 1)),
                    }
                }
                if let AgentSpec::DualGradient(node) = a {
                    if !(node.a > 0.0) || node.lower > node.upper {
                        errs.push(format!("agents[{}]: invalid dual gradient node", i + 1));
                    }
                }
            }
            let first = dims.first().copied().flatten();
            if dims.iter().any(|d| *d != first) {
                errs.push("all agents must share one state dimension".into());
            }
            match &self.coupling {
                None => errs.push("coupling section is required with generic agents".into()),
                Some(c) => {
                    let mats: Vec<(String, &MatrixSpec)> = match (&c.identical, &c.matrices) {
                        (Some(m), None) => vec![("coupling.identical".into(), m)],
                        (None, Some(ms)) => {
                            if ms.len() != n {
                                errs.push(format!("coupling.matrices lists {} entries, graph has {n}", ms.len()));
                            }
                            ms.iter()
                                .enumerate()
                                .map(|(i, m)| (format!("coupling.matrices[{}]", i + 1), m))
                                .collect()
                        }
                        _ => {
                            errs.push("coupling: give exactly one of identical or matrices".into());
                            Vec::new()
                        }
                    };
                    for (name, m) in mats {
                        match m.to_matrix() {
                            Ok(m) => {
                                check_psd(&name, &m, &mut errs);
                                if let Some(d) = first {
                                    if m.nrows() != d {
                                        errs.push(format!("{name}: size {} does not match state dimension {d}", m.nrows()));
                                    }
                                }
                            }
                            Err(e) => errs.push(format!("{name}: {e}")),
                        }
                    }
                }
            }
        } else if self.coupling.is_some() {
            errs.push("coupling section is only used with generic agents".into());
        }

        if let Some(app) = &self.app {
            match app {
                AppSpec::Counting { n_max, ids, events } => {
                    let count = ids.as_ref().map(|v| v.len()).unwrap_or(n);
                    if count != n {
                        errs.push(format!("app.ids lists {count} agents, graph has {n}"));
                    }
                    if n > *n_max {
                        errs.push(format!("app: {n} agents exceed n_max = {n_max}"));
                    }
                    for e in events {
                        if !(e.time > sim.t_span.0 && e.time < sim.t_span.1) {
                            errs.push(format!("app.events: time {} outside the simulation span", e.time));
                        }
                    }
                }
                AppSpec::CountingId { n_max, ids } => {
                    if ids.len() != n {
                        errs.push(format!("app.ids lists {} agents, graph has {n}", ids.len()));
                    }
                    if ids.iter().any(|id| *id == 0 || id > n_max) {
                        errs.push("app.ids must lie in 1..=n_max".into());
                    }
                }
                AppSpec::Observer { s, outputs, omega0, .. } => {
                    if outputs.len() != n {
                        errs.push(format!("app.outputs lists {} nodes, graph has {n}", outputs.len()));
                    }
                    match s.to_matrix() {
                        Ok(s) => {
                            if !s.is_square() {
                                errs.push("app.s is not square".into());
                            }
                            if omega0.len() != s.nrows() {
                                errs.push("app.omega0 length differs from app.s".into());
                            }
                            for (i, g) in outputs.iter().enumerate() {
                                match g.to_matrix() {
                                    Ok(g) if g.ncols() != s.nrows() => {
                                        errs.push(format!("app.outputs[{}] has {} columns", i + 1, g.ncols()))
                                    }
                                    Err(e) => errs.push(format!("app.outputs[{}]: {e}", i + 1)),
                                    _ => {}
                                }
                            }
                        }
                        Err(e) => errs.push(format!("app.s: {e}")),
                    }
                }
                AppSpec::Dispatch { nodes } => {
                    if nodes.len() != n {
                        errs.push(format!("app.nodes lists {} nodes, graph has {n}", nodes.len()));
                    }
                    for (i, node) in nodes.iter().enumerate() {
                        if !(node.a > 0.0) {
                            errs.push(format!("app.nodes[{}]: curvature must be positive", i + 1));
                        }
                        if node.lower > node.upper {
                            errs.push(format!("app.nodes[{}]: lower bound exceeds upper bound", i + 1));
                        }
                    }
                }
                AppSpec::Vdp { c, w, a, b } => {
                    if c.len() != n || w.len() != n {
                        errs.push(format!("app.c and app.w must list {n} oscillators"));
                    }
                    if !(*a > 0.0 && *b > 0.0) {
                        errs.push("app.a and app.b must be positive".into());
                    }
                }
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} problem(s):\n  - {}",
                errs.len(),
                errs.join("\n  - ")
            )))
        }
    }

    /// Network system for generic-agent scenarios.
    pub fn network(&self, k: f64) -> Result<NetworkSystem> {
        let graph = self.graph.build()?;
        let agents = self
            .agents
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no generic agents".into()))?
            .iter()
            .map(|a| a.build())
            .collect::<Result<Vec<_>>>()?;
        let c = self
            .coupling
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no coupling section".into()))?;
        let mats = match (&c.identical, &c.matrices) {
            (Some(m), None) => vec![m.to_matrix()?; agents.len()],
            (None, Some(ms)) => ms.iter().map(|m| m.to_matrix()).collect::<Result<Vec<_>>>()?,
            _ => return Err(Error::Config("coupling: give exactly one of identical or matrices".into())),
        };
        NetworkSystem::new(agents, graph, &mats, c.mode.into(), k)
    }

    /// Network for either the generic section or the application. Counting
    /// scenarios with membership events yield their first segment.
    pub fn build_network(&self, k: f64) -> Result<NetworkSystem> {
        match &self.app {
            None => self.network(k),
            Some(AppSpec::Counting { .. }) => {
                let plan = counting::build_counting(&self.counting_problem()?, k, self.simulation.t_span.1)?;
                Ok(plan.segments[0].system.clone())
            }
            Some(AppSpec::CountingId { n_max, ids }) => {
                counting::build_counting_id_variant(ids, self.graph.build()?, *n_max, k)
            }
            Some(AppSpec::Observer { .. }) => Ok(observer::build_observer(&self.observer_problem()?, k)?.network),
            Some(AppSpec::Dispatch { .. }) => dispatch::build_dispatch(&self.dispatch_problem()?, k),
            Some(AppSpec::Vdp { .. }) => Ok(vdp::build_vdp(&self.vdp_network()?, k)?.network),
        }
    }

    pub fn counting_problem(&self) -> Result<CountingProblem> {
        match &self.app {
            Some(AppSpec::Counting { n_max, ids, events }) => Ok(CountingProblem {
                n_max: *n_max,
                ids: ids.clone().unwrap_or_else(|| (1..=self.graph.agents).collect()),
                graph: self.graph.build()?,
                events: events.clone(),
            }),
            _ => Err(Error::Config("scenario is not a counting app".into())),
        }
    }

    pub fn observer_problem(&self) -> Result<ObserverProblem> {
        match &self.app {
            Some(AppSpec::Observer { s, outputs, omega0, .. }) => Ok(ObserverProblem {
                s: s.to_matrix()?,
                outputs: outputs.iter().map(|g| g.to_matrix()).collect::<Result<Vec<_>>>()?,
                graph: self.graph.build()?,
                omega0: DVector::from_column_slice(omega0),
            }),
            _ => Err(Error::Config("scenario is not an observer app".into())),
        }
    }

    pub fn dispatch_problem(&self) -> Result<DispatchProblem> {
        match &self.app {
            Some(AppSpec::Dispatch { nodes }) => Ok(DispatchProblem {
                nodes: nodes.clone(),
                graph: self.graph.build()?,
            }),
            _ => Err(Error::Config("scenario is not a dispatch app".into())),
        }
    }

    pub fn vdp_network(&self) -> Result<VdpNetwork> {
        match &self.app {
            Some(AppSpec::Vdp { c, w, a, b }) => Ok(VdpNetwork {
                c: c.clone(),
                w: w.clone(),
                a: *a,
                b: *b,
                graph: self.graph.build()?,
            }),
            _ => Err(Error::Config("scenario is not a van der Pol app".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COUNTING: &str = r#"{
        "graph": {"agents": 2, "topology": "chain"},
        "app": {"type": "counting", "n_max": 5}
    }"#;

    #[test]
    fn minimal_counting_parses() {
        let sc = Scenario::from_json(COUNTING).unwrap();
        assert_eq!(sc.graph.agents, 2);
        assert_eq!(sc.counting_problem().unwrap().ids, vec![1, 2]);
    }

    #[test]
    fn negative_eigenvalue_is_reported() {
        let text = r#"{
            "graph": {"agents": 2, "edges": [[1, 2, 1.0]]},
            "agents": [{"kind": "linear", "a": [[-1.0]]}, {"kind": "linear", "a": [[-2.0]]}],
            "coupling": {"mode": "input", "matrices": [[[1.0]], [[-0.5]]]}
        }"#;
        let err = Scenario::from_json(text).unwrap_err().to_string();
        assert!(err.contains("coupling.matrices[2]"), "{err}");
        assert!(err.contains("-0.5"), "{err}");
    }

    #[test]
    fn every_violation_is_listed() {
        let text = r#"{
            "graph": {"agents": 3, "topology": "chain"},
            "agents": [{"kind": "van_der_pol", "c": 1, "w": 1}],
            "coupling": {"identical": {"rank_one": [1.0, 0.0, 0.0]}},
            "simulation": {"t_span": [1.0, 0.0], "k": -1}
        }"#;
        let sc: Scenario = serde_json::from_str(text).unwrap();
        let v = sc.violations();
        assert!(v.len() >= 4, "{v:?}");
    }

    #[test]
    fn syntax_error_has_line() {
        let err = Scenario::from_json("{\n  \"graph\": {\n   \"agents\": 2,,\n}").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn round_trip() {
        let text = r#"{
            "graph": {"agents": 3, "edges": [[1, 2, 1.0], [2, 3, 2.0]]},
            "agents": [
                {"kind": "linear", "a": [[-1.0, 0.5], [0.0, -2.0]], "b": [1.0, 0.0]},
                {"kind": "linear", "a": {"scaled_identity": [2, -1.5]}},
                {"kind": "linear", "a": {"identity": 2}}
            ],
            "coupling": {"mode": "output", "matrices": [{"rank_one": [1.0, 1.0]}, {"identity": 2}, [[2.0, 0.0], [0.0, 0.0]]]},
            "simulation": {"t_span": [0.0, 4.0], "k_list": [10, 100], "seed": 7, "method": "fixed-rk4", "x0": [1, 2, 3, 4, 5, 6]},
            "output": {"dir": "out", "plot": true}
        }"#;
        let sc = Scenario::from_json(text).unwrap();
        let again = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(sc, again);
        let sys = sc.network(5.0).unwrap();
        assert_eq!(sys.total_dim(), 6);
    }

    #[test]
    fn app_sections_round_trip() {
        let text = r#"{
            "graph": {"agents": 3, "topology": "chain"},
            "app": {"type": "counting", "n_max": 5, "events": [{"time": 5, "action": "join", "id": 4}]},
            "simulation": {"t_span": [0, 10], "k": 200}
        }"#;
        let sc = Scenario::from_json(text).unwrap();
        assert_eq!(sc, Scenario::from_json(&sc.to_json()).unwrap());
        let both = r#"{"graph": {"agents": 2, "topology": "chain"},
            "app": {"type": "dispatch", "nodes": []},
            "agents": []}"#;
        assert!(Scenario::from_json(both).is_err());
    }
}
