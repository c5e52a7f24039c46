//! Undirected weighted communication graphs and their Laplacians.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// A weighted undirected edge between two agents (zero-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Weighted undirected graph on `agent_count` nodes.
///
/// Edges are stored once; the adjacency matrix and neighbour lists are
/// symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    agent_count: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl NetworkGraph {
    /// Build a graph from zero-based weighted pairs.
    pub fn new(agent_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if agent_count == 0 {
            return Err(Error::InvalidGraph("agent count must be positive".into()));
        }
        let mut seen = BTreeSet::new();
        let mut stored = Vec::with_capacity(edges.len());
        let mut neighbors = vec![Vec::new(); agent_count];
        for &(i, j, weight) in edges {
            if i >= agent_count || j >= agent_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) out of range for {} agents",
                    i + 1,
                    j + 1,
                    agent_count
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at agent {}", i + 1)));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has nonpositive or non-finite weight {weight}",
                    i + 1,
                    j + 1
                )));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    key.0 + 1,
                    key.1 + 1
                )));
            }
            stored.push(Edge { i, j, weight });
            neighbors[i].push((j, weight));
            neighbors[j].push((i, weight));
        }
        for list in &mut neighbors {
            list.sort_by_key(|(j, _)| *j);
        }
        Ok(NetworkGraph {
            agent_count,
            edges: stored,
            neighbors,
        })
    }

    /// Build a graph from one-based `i j weight` triples, the convention used
    /// in scenario files.
    pub fn from_one_based(agent_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut zero = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            if i == 0 || j == 0 {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) uses index 0; agent indices start at 1"
                )));
            }
            zero.push((i - 1, j - 1, w));
        }
        Self::new(agent_count, &zero)
    }

    /// Path 1 - 2 - ... - N with unit weights.
    pub fn chain(agent_count: usize) -> Result<Self> {
        let edges: Vec<_> = (1..agent_count).map(|i| (i - 1, i, 1.0)).collect();
        Self::new(agent_count, &edges)
    }

    /// Complete graph with unit weights.
    pub fn complete(agent_count: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..agent_count {
            for j in i + 1..agent_count {
                edges.push((i, j, 1.0));
            }
        }
        Self::new(agent_count, &edges)
    }

    /// Star centred on agent 0 with unit weights.
    pub fn star(agent_count: usize) -> Result<Self> {
        let edges: Vec<_> = (1..agent_count).map(|i| (0, i, 1.0)).collect();
        Self::new(agent_count, &edges)
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbours of agent `i` with their weights, sorted by index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.agent_count;
        let mut a = DMatrix::zeros(n, n);
        for e in &self.edges {
            a[(e.i, e.j)] = e.weight;
            a[(e.j, e.i)] = e.weight;
        }
        a
    }

    /// `D - A`, where `D` is the weighted degree matrix.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.agent_count;
        let mut l = DMatrix::zeros(n, n);
        for e in &self.edges {
            l[(e.i, e.j)] -= e.weight;
            l[(e.j, e.i)] -= e.weight;
            l[(e.i, e.i)] += e.weight;
            l[(e.j, e.j)] += e.weight;
        }
        l
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let mut v = linalg::sym_eigenvalues(&self.laplacian());
        v.reverse();
        v
    }

    /// Connectivity by breadth-first traversal.
    pub fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.agent_count];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.neighbors[u] {
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.agent_count
    }

    /// Number of Laplacian eigenvalues below `1e-9 * max eigenvalue`; equals one
    /// exactly when the graph is connected.
    pub fn zero_eigenvalue_multiplicity(&self) -> usize {
        let spec = self.laplacian_spectrum();
        let max = spec.iter().fold(0.0_f64, |m, v| m.max(*v));
        if max == 0.0 {
            return spec.len();
        }
        spec.iter().filter(|v| **v < 1e-9 * max).count()
    }
}

/// Chain difference matrix with rows `e_i - e_{i+1}`; its kernel is spanned by
/// the all-ones vector.
pub fn difference_matrix(agent_count: usize) -> Result<DMatrix<f64>> {
    if agent_count < 2 {
        return Err(Error::InvalidParameter(
            "difference matrix needs at least two agents".into(),
        ));
    }
    let mut d = DMatrix::zeros(agent_count - 1, agent_count);
    for r in 0..agent_count - 1 {
        d[(r, r)] = 1.0;
        d[(r, r + 1)] = -1.0;
    }
    Ok(d)
}
