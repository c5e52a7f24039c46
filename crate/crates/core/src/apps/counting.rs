//! Distributed estimation of the number of attending agents. Agent 1 is the
//! anchor and runs `n' = -n + 1`; everyone else runs `n' = 1`. The network
//! settles near the head count, and agents may join or leave while it runs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::CouplingMode;
use crate::dynamics::{counting_node_with_value, NetworkSystem};
use crate::error::{Error, Result};
use crate::network::NetworkGraph;
use crate::simulate::{simulate_network, SimulationOptions, Trajectory};

/// Identifier of the agent that always attends.
pub const ANCHOR_ID: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum MembershipChange {
    /// A new agent links to `neighbors` (ids). An empty list links it to the
    /// most recently listed agent.
    Join {
        id: usize,
        #[serde(default)]
        neighbors: Vec<usize>,
    },
    Leave { id: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipEvent {
    pub time: f64,
    #[serde(flatten)]
    pub change: MembershipChange,
}

#[derive(Debug, Clone)]
pub struct CountingProblem {
    pub n_max: usize,
    /// Attending ids at the start, in graph order.
    pub ids: Vec<usize>,
    pub graph: NetworkGraph,
    pub events: Vec<MembershipEvent>,
}

impl CountingProblem {
    /// `count` agents on a chain, anchor first, no events.
    pub fn chain(count: usize, n_max: usize) -> Result<Self> {
        Ok(CountingProblem {
            n_max,
            ids: (1..=count).collect(),
            graph: NetworkGraph::chain(count)?,
            events: Vec::new(),
        })
    }
}

/// Smallest gain for which the rounding guarantee holds.
pub fn critical_gain(n_max: usize) -> f64 {
    (n_max as f64).powi(3)
}

/// Time after which every rounded estimate equals the head count, for
/// `k > n_max³` and initial values in `[0, n_max]`.
pub fn settle_time(n_max: usize, k: f64) -> Result<f64> {
    let ks = critical_gain(n_max);
    if !(k > ks) {
        return Err(Error::InvalidParameter(format!(
            "gain {k} does not exceed the critical gain {ks} for n_max = {n_max}"
        )));
    }
    let nm = n_max as f64;
    Ok(4.0 * nm * (2.0 * nm.powf(1.5) * k / (k - ks)).ln())
}

/// `N + (s0 - N) e^{-t/N}`: the blended estimate for `count` agents.
pub fn blended_closed_form(count: usize, s0: f64, t: f64) -> f64 {
    let n = count as f64;
    n + (s0 - n) * (-t / n).exp()
}

#[derive(Debug, Clone)]
pub struct CountingSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub ids: Vec<usize>,
    pub system: NetworkSystem,
}

#[derive(Debug, Clone)]
pub struct CountingPlan {
    pub segments: Vec<CountingSegment>,
    pub k: f64,
    pub k_star: f64,
    /// Guaranteed settling time when `k > k_star`.
    pub settle_time: Option<f64>,
}

fn counting_system(ids: &[usize], graph: NetworkGraph, k: f64, value: impl Fn(usize) -> f64) -> Result<NetworkSystem> {
    let agents = ids
        .iter()
        .map(|id| counting_node_with_value(*id == ANCHOR_ID, value(*id)))
        .collect::<Result<Vec<_>>>()?;
    let couplings = vec![DMatrix::from_element(1, 1, 1.0); ids.len()];
    NetworkSystem::new(agents, graph, &couplings, CouplingMode::InputSide, k)
}

fn check_ids(ids: &[usize], n_max: usize) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if *id == 0 || *id > n_max {
            return Err(Error::InvalidParameter(format!("agent id {id} outside 1..={n_max}")));
        }
        if !seen.insert(*id) {
            return Err(Error::InvalidParameter(format!("duplicate agent id {id}")));
        }
    }
    if !seen.contains(&ANCHOR_ID) {
        return Err(Error::InvalidParameter(format!("anchor agent {ANCHOR_ID} is not attending")));
    }
    if ids.len() < 2 {
        return Err(Error::InvalidParameter("at least two agents must attend".into()));
    }
    Ok(())
}

fn edge_list(graph: &NetworkGraph, ids: &[usize]) -> Vec<(usize, usize, f64)> {
    graph.edges().iter().map(|e| (ids[e.i], ids[e.j], e.weight)).collect()
}

fn graph_from_ids(ids: &[usize], edges: &[(usize, usize, f64)]) -> Result<NetworkGraph> {
    let pos = |id: usize| ids.iter().position(|x| *x == id);
    let local: Vec<_> = edges
        .iter()
        .filter_map(|(a, b, w)| Some((pos(*a)?, pos(*b)?, *w)))
        .collect();
    let g = NetworkGraph::new(ids.len(), &local)?;
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    Ok(g)
}

/// Split the run at membership events into fixed-topology segments.
pub fn build_counting(prob: &CountingProblem, k: f64, t_end: f64) -> Result<CountingPlan> {
    if prob.ids.len() != prob.graph.agent_count() {
        return Err(Error::DimensionMismatch {
            context: "counting ids vs graph",
            expected: prob.graph.agent_count(),
            got: prob.ids.len(),
        });
    }
    check_ids(&prob.ids, prob.n_max)?;
    if !prob.graph.is_connected() {
        return Err(Error::Disconnected);
    }
    let mut events = prob.events.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    for e in &events {
        if !(e.time > 0.0 && e.time < t_end) {
            return Err(Error::InvalidParameter(format!(
                "event time {} outside (0, {t_end})",
                e.time
            )));
        }
    }
    if events.windows(2).any(|w| w[0].time == w[1].time) {
        return Err(Error::InvalidParameter("two membership events share a time".into()));
    }
    let mut ids = prob.ids.clone();
    let mut edges = edge_list(&prob.graph, &ids);
    let mut graph = prob.graph.clone();
    let mut segments = Vec::new();
    let mut t = 0.0;
    for e in &events {
        segments.push(CountingSegment {
            t_start: t,
            t_end: e.time,
            ids: ids.clone(),
            system: counting_system(&ids, graph.clone(), k, |_| 1.0)?,
        });
        match &e.change {
            MembershipChange::Join { id, neighbors } => {
                if ids.contains(id) {
                    return Err(Error::InvalidParameter(format!("agent {id} joins but is already attending")));
                }
                let links = if neighbors.is_empty() {
                    vec![*ids.last().expect("segment has agents")]
                } else {
                    neighbors.clone()
                };
                for nb in links {
                    if !ids.contains(&nb) {
                        return Err(Error::InvalidParameter(format!(
                            "agent {id} links to {nb}, which is not attending"
                        )));
                    }
                    edges.push((*id, nb, 1.0));
                }
                ids.push(*id);
            }
            MembershipChange::Leave { id } => {
                if *id == ANCHOR_ID {
                    return Err(Error::InvalidParameter("the anchor agent cannot leave".into()));
                }
                let Some(p) = ids.iter().position(|x| x == id) else {
                    return Err(Error::InvalidParameter(format!("agent {id} leaves but is not attending")));
                };
                ids.remove(p);
                edges.retain(|(a, b, _)| a != id && b != id);
            }
        }
        check_ids(&ids, prob.n_max)?;
        graph = graph_from_ids(&ids, &edges)?;
        t = e.time;
    }
    segments.push(CountingSegment {
        t_start: t,
        t_end,
        ids: ids.clone(),
        system: counting_system(&ids, graph, k, |_| 1.0)?,
    });
    let k_star = critical_gain(prob.n_max);
    Ok(CountingPlan {
        segments,
        k,
        k_star,
        settle_time: settle_time(prob.n_max, k).ok(),
    })
}

/// One trajectory per segment. Incumbents carry their state across events;
/// newcomers start at zero.
pub fn run_counting(plan: &CountingPlan, x0: &DVector<f64>, opts: &SimulationOptions) -> Result<Vec<Trajectory>> {
    let first = plan
        .segments
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty counting plan".into()))?;
    if x0.len() != first.ids.len() {
        return Err(Error::DimensionMismatch {
            context: "counting initial state",
            expected: first.ids.len(),
            got: x0.len(),
        });
    }
    let mut out = Vec::with_capacity(plan.segments.len());
    let mut state = x0.clone();
    let mut prev_ids = first.ids.clone();
    for seg in &plan.segments {
        let init = DVector::from_iterator(
            seg.ids.len(),
            seg.ids
                .iter()
                .map(|id| prev_ids.iter().position(|p| p == id).map(|p| state[p]).unwrap_or(0.0)),
        );
        let mut o = opts.clone();
        o.t0 = seg.t_start;
        o.t1 = seg.t_end;
        o.events.retain(|t| *t > seg.t_start && *t < seg.t_end);
        o.stop_times.retain(|t| *t > seg.t_start && *t < seg.t_end);
        let tr = simulate_network(&seg.system, &init, &o)?;
        let labels = seg.ids.iter().map(|id| format!("n_{id}")).collect();
        state = tr.final_state();
        prev_ids = seg.ids.clone();
        out.push(tr.with_labels(labels));
    }
    Ok(out)
}

/// Long-format CSV `segment,t,agent,estimate,rounded` across all segments.
pub fn segments_csv(plan: &CountingPlan, runs: &[Trajectory]) -> String {
    let mut s = String::from("segment,t,agent,estimate,rounded\n");
    for (si, (seg, tr)) in plan.segments.iter().zip(runs).enumerate() {
        for (r, t) in tr.times().iter().enumerate() {
            for (c, id) in seg.ids.iter().enumerate() {
                let v = tr.state(r)[c];
                s.push_str(&format!("{},{t:.10e},{id},{v:.10e},{}\n", si + 1, v.round()));
            }
        }
    }
    s
}

/// Identification variant: agent `id` contributes `2^{id-1}`, so the common
/// limit encodes the attending set in binary.
pub fn build_counting_id_variant(ids: &[usize], graph: NetworkGraph, n_max: usize, k: f64) -> Result<NetworkSystem> {
    if ids.len() != graph.agent_count() {
        return Err(Error::DimensionMismatch {
            context: "identification ids vs graph",
            expected: graph.agent_count(),
            got: ids.len(),
        });
    }
    if n_max > 52 {
        return Err(Error::InvalidParameter("n_max above 52 cannot be encoded exactly".into()));
    }
    check_ids(ids, n_max)?;
    counting_system(ids, graph, k, |id| 2f64.powi(id as i32 - 1))
}

/// Expected limit of the identification variant.
pub fn id_fixed_point(ids: &[usize]) -> f64 {
    ids.iter().map(|id| 2f64.powi(*id as i32 - 1)).sum()
}

/// Attending ids encoded in a (rounded) identification value.
pub fn decode_ids(value: f64) -> Vec<usize> {
    let v = value.round();
    if !(v >= 1.0) || v >= 2f64.powi(53) {
        return Vec::new();
    }
    let bits = v as u64;
    (0..64).filter(|b| bits >> b & 1 == 1).map(|b| b as usize + 1).collect()
}
