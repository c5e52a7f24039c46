//! Distributed economic dispatch by dual gradient ascent. Each node keeps a
//! price estimate and only exchanges that price with its neighbours.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::decomposition::CouplingMode;
use crate::dynamics::{dual_gradient, AgentDynamics, JacobianScalar, NetworkSystem};
use crate::error::{Error, Result};
use crate::network::NetworkGraph;

/// Node with cost `a (x - b)²`, generation bounds and local demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticNode {
    pub a: f64,
    pub b: f64,
    pub lower: f64,
    pub upper: f64,
    pub demand: f64,
}

impl QuadraticNode {
    /// Marginal cost `2a(x - b)`.
    pub fn marginal_cost(&self, x: f64) -> f64 {
        2.0 * self.a * (x - self.b)
    }

    /// Cost-minimising output at price `lambda`, clipped to the bounds.
    pub fn theta(&self, lambda: f64) -> f64 {
        let lo = self.marginal_cost(self.lower);
        let hi = self.marginal_cost(self.upper);
        self.b + lambda.clamp(lo, hi) / (2.0 * self.a)
    }

    pub fn theta_slope(&self, lambda: f64) -> f64 {
        let lo = self.marginal_cost(self.lower);
        let hi = self.marginal_cost(self.upper);
        if lambda > lo && lambda < hi {
            1.0 / (2.0 * self.a)
        } else {
            0.0
        }
    }

    fn validate(&self, i: usize) -> Result<()> {
        let vals = [self.a, self.b, self.lower, self.upper, self.demand];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("dispatch node {}", i + 1)));
        }
        if !(self.a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dispatch node {}: cost curvature must be positive",
                i + 1
            )));
        }
        if self.lower > self.upper {
            return Err(Error::InvalidParameter(format!(
                "dispatch node {}: lower bound exceeds upper bound",
                i + 1
            )));
        }
        Ok(())
    }
}

/// Output at price `lambda` for a general strictly convex cost, given its
/// derivative: bisection for `dj(x) = lambda` on `[lower, upper]`.
pub fn theta_by_bisection<D: Fn(f64) -> f64>(dj: D, lower: f64, upper: f64, lambda: f64) -> f64 {
    if lambda <= dj(lower) {
        return lower;
    }
    if lambda >= dj(upper) {
        return upper;
    }
    let (mut lo, mut hi) = (lower, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dj(mid) < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone)]
pub struct DispatchProblem {
    pub nodes: Vec<QuadraticNode>,
    pub graph: NetworkGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchSolution {
    pub lambda_star: f64,
    pub x_star: Vec<f64>,
}

impl DispatchProblem {
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() != self.graph.agent_count() {
            return Err(Error::DimensionMismatch {
                context: "dispatch nodes vs graph",
                expected: self.graph.agent_count(),
                got: self.nodes.len(),
            });
        }
        for (i, n) in self.nodes.iter().enumerate() {
            n.validate(i)?;
        }
        Ok(())
    }

    pub fn total_demand(&self) -> f64 {
        self.nodes.iter().map(|n| n.demand).sum()
    }

    /// Total output at a common price.
    pub fn supply(&self, lambda: f64) -> f64 {
        self.nodes.iter().map(|n| n.theta(lambda)).sum()
    }

    /// Derivative of the dual function: demand minus supply.
    pub fn dual_gradient(&self, lambda: f64) -> f64 {
        self.total_demand() - self.supply(lambda)
    }

    /// Centralised optimum by bisection on the (nondecreasing) supply curve.
    pub fn solve(&self) -> Result<DispatchSolution> {
        self.validate()?;
        let d = self.total_demand();
        let lo_sum: f64 = self.nodes.iter().map(|n| n.lower).sum();
        let hi_sum: f64 = self.nodes.iter().map(|n| n.upper).sum();
        let tol = 1e-12 * d.abs().max(1.0);
        if d < lo_sum - tol || d > hi_sum + tol {
            return Err(Error::Infeasible(format!(
                "total demand {d} outside the generation range [{lo_sum}, {hi_sum}]"
            )));
        }
        let mut lo = self
            .nodes
            .iter()
            .map(|n| n.marginal_cost(n.lower))
            .fold(f64::INFINITY, f64::min);
        let mut hi = self
            .nodes
            .iter()
            .map(|n| n.marginal_cost(n.upper))
            .fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.supply(mid) < d {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * (1.0 + mid.abs()) {
                break;
            }
        }
        let lambda_star = 0.5 * (lo + hi);
        Ok(DispatchSolution {
            lambda_star,
            x_star: self.nodes.iter().map(|n| n.theta(lambda_star)).collect(),
        })
    }
}

/// Price dynamics `λ' = d - θ(λ)` of one node.
pub fn dispatch_agent(node: QuadraticNode) -> Result<AgentDynamics> {
    node.validate(0)?;
    let slope: JacobianScalar = Arc::new(move |l| node.theta_slope(l));
    dual_gradient(move |l| node.theta(l), Some(slope), node.demand)
}

/// Network of price estimates `λ_i' = d_i - θ_i(λ_i) + k Σ (λ_j - λ_i)`.
pub fn build_dispatch(prob: &DispatchProblem, k: f64) -> Result<NetworkSystem> {
    prob.validate()?;
    let agents = prob
        .nodes
        .iter()
        .map(|n| dispatch_agent(*n))
        .collect::<Result<Vec<_>>>()?;
    let couplings = vec![DMatrix::from_element(1, 1, 1.0); prob.nodes.len()];
    NetworkSystem::new(agents, prob.graph.clone(), &couplings, CouplingMode::InputSide, k)
}

/// Two nodes, unit curvature, preferred outputs 1 and 3, demands 2 and 3.
pub fn two_node_example() -> DispatchProblem {
    let node = |b: f64, d: f64| QuadraticNode {
        a: 1.0,
        b,
        lower: -100.0,
        upper: 100.0,
        demand: d,
    };
    DispatchProblem {
        nodes: vec![node(1.0, 2.0), node(3.0, 3.0)],
        graph: NetworkGraph::chain(2).expect("two nodes"),
    }
}
