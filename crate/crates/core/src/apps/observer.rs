//! Distributed state observer for `ω' = S ω` with node measurements
//! `ν_i = G_i ω`, where no node sees enough to estimate `ω` alone.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::decomposition::{assemble, AgentCoupling, CouplingMode};
use crate::dynamics::{linear_constant, NetworkSystem};
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::NetworkGraph;
use crate::simulate::{simulate_network, SimulationOptions, Trajectory};

const STAIRCASE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ObserverProblem {
    pub s: DMatrix<f64>,
    /// Measurement matrix of each node.
    pub outputs: Vec<DMatrix<f64>>,
    pub graph: NetworkGraph,
    /// Initial condition of the observed system.
    pub omega0: DVector<f64>,
}

/// Orthogonal split of one node's state space into the part its own
/// measurement can estimate (`z`) and the undetectable remainder (`w`).
#[derive(Debug, Clone)]
pub struct NodeDecomposition {
    pub z: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// `Zᵀ S Z`
    pub s11: DMatrix<f64>,
    /// `Wᵀ S Z`
    pub s21: DMatrix<f64>,
    /// `Wᵀ S W`
    pub s22: DMatrix<f64>,
    /// `G Z`
    pub g_bar: DMatrix<f64>,
    /// Injection gain on the detectable block.
    pub u_bar: DMatrix<f64>,
    /// `Z Ū`
    pub u: DMatrix<f64>,
    /// Decay margin the gain was designed for.
    pub shift: f64,
}

impl NodeDecomposition {
    pub fn undetectable_dim(&self) -> usize {
        self.w.ncols()
    }

    /// `S̄¹¹ - Ū Ḡ`
    pub fn closed_loop(&self) -> DMatrix<f64> {
        &self.s11 - &self.u_bar * &self.g_bar
    }
}

/// Unobservable subspace of `(g, s)` as an orthonormal basis: the kernel of
/// the observability matrix, each block `G Sᵏ` scaled to unit norm.
pub fn unobservable_subspace(g: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let q = g.nrows();
    if q == 0 {
        return DMatrix::identity(n, n);
    }
    let mut obs = DMatrix::zeros(q * n, n);
    let mut block = g.clone();
    for k in 0..n {
        let nrm = block.norm();
        if nrm > 0.0 {
            obs.view_mut((k * q, 0), (q, n)).copy_from(&(&block / nrm));
            block = &block / nrm * s;
        }
    }
    let mut basis = linalg::kernel_basis(&obs, STAIRCASE_TOL);
    linalg::sign_columns(&mut basis);
    basis
}

/// Undetectable subspace of `(g, s)`: the unstable (including marginal) part
/// of the unobservable subspace.
pub fn undetectable_subspace(g: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    let nu = unobservable_subspace(g, s);
    if nu.ncols() == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let restricted = nu.transpose() * s * &nu;
    let unstable = linalg::unstable_invariant_subspace(&restricted)?;
    if unstable.ncols() == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let mut w = linalg::gram_schmidt(&(&nu * unstable));
    linalg::sign_columns(&mut w);
    Ok(w)
}

/// Injection gain `Ū` making `s11 - Ū g` decay faster than `e^{-shift t}`,
/// from the regulator Riccati equation of the dual pair with identity
/// weights. Falls back to no shift when the shifted pair is not stabilisable.
fn injection_gain(s11: &DMatrix<f64>, g: &DMatrix<f64>, shift: f64) -> Result<(DMatrix<f64>, f64)> {
    let m = s11.nrows();
    if m == 0 {
        return Ok((DMatrix::zeros(0, g.nrows()), shift));
    }
    let attempt = |alpha: f64| -> Result<DMatrix<f64>> {
        let a = (s11 + DMatrix::identity(m, m) * alpha).transpose();
        let b = g.transpose();
        let x = linalg::solve_care(&a, &b, &DMatrix::identity(m, m))?;
        let u_bar = &x * g.transpose();
        let cl = s11 - &u_bar * g;
        let sa = linalg::spectral_abscissa(&cl);
        if sa < -0.5 * alpha || (alpha == 0.0 && sa < 0.0) {
            Ok(u_bar)
        } else {
            Err(Error::Numerical("Riccati gain does not stabilise the detectable block".into()))
        }
    };
    match attempt(shift) {
        Ok(u) => Ok((u, shift)),
        Err(_) => attempt(0.0).map(|u| (u, 0.0)),
    }
}

/// Detectability decomposition and gain design for one node.
pub fn decompose_node(s: &DMatrix<f64>, g: &DMatrix<f64>, shift: f64) -> Result<NodeDecomposition> {
    let n = s.nrows();
    if g.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "measurement matrix columns",
            expected: n,
            got: g.ncols(),
        });
    }
    let w = undetectable_subspace(g, s)?;
    let z = linalg::orthogonal_complement(&w, n)?;
    let s11 = z.transpose() * s * &z;
    let s21 = w.transpose() * s * &z;
    let s22 = w.transpose() * s * &w;
    let g_bar = g * &z;
    let scale = s.norm().max(1.0);
    if (z.transpose() * s * &w).norm() > 1e-8 * scale || (g * &w).norm() > 1e-8 * g.norm().max(1.0) {
        return Err(Error::Numerical(
            "detectability decomposition failed: undetectable subspace is not invariant".into(),
        ));
    }
    let (u_bar, shift) = injection_gain(&s11, &g_bar, shift)?;
    if s11.nrows() > 0 && linalg::spectral_abscissa(&(&s11 - &u_bar * &g_bar)) >= 0.0 {
        return Err(Error::NotDetectable("detectable block could not be stabilised".into()));
    }
    let u = &z * &u_bar;
    Ok(NodeDecomposition {
        z,
        w,
        s11,
        s21,
        s22,
        g_bar,
        u_bar,
        u,
        shift,
    })
}

/// Observer network in error coordinates `x_i = ω̂_i - ω`.
#[derive(Debug, Clone)]
pub struct ObserverSystem {
    pub network: NetworkSystem,
    pub nodes: Vec<NodeDecomposition>,
    pub s: DMatrix<f64>,
    pub omega0: DVector<f64>,
}

impl ObserverSystem {
    /// True state at time `t`.
    pub fn omega(&self, t: f64) -> DVector<f64> {
        (&self.s * t).exp() * &self.omega0
    }

    /// Convert an error-coordinate network trajectory into per-node estimates.
    pub fn estimates(&self, errors: &Trajectory) -> Trajectory {
        let n = self.s.nrows();
        let big_n = self.nodes.len();
        let mut out = Trajectory::new(errors.frame, errors.gain, big_n * n)
            .with_labels(Trajectory::network_labels(big_n, n));
        for (i, t) in errors.times().iter().enumerate() {
            let om = self.omega(*t);
            let dom = &self.s * &om;
            let (x, dx) = (errors.state(i), errors.derivative(i));
            let est: Vec<f64> = (0..big_n * n).map(|c| x[c] + om[c % n]).collect();
            let dest: Vec<f64> = (0..big_n * n).map(|c| dx[c] + dom[c % n]).collect();
            out.push(*t, &est, &dest);
        }
        out
    }
}

/// Build the error-coordinate observer network with gain `k`.
pub fn build_observer(prob: &ObserverProblem, k: f64) -> Result<ObserverSystem> {
    let n = prob.s.nrows();
    if !prob.s.is_square() || n == 0 {
        return Err(Error::InvalidParameter("S must be a nonempty square matrix".into()));
    }
    if prob.omega0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "observer initial state",
            expected: n,
            got: prob.omega0.len(),
        });
    }
    if prob.outputs.len() != prob.graph.agent_count() {
        return Err(Error::DimensionMismatch {
            context: "observer node count",
            expected: prob.graph.agent_count(),
            got: prob.outputs.len(),
        });
    }
    let rows: usize = prob.outputs.iter().map(|g| g.nrows()).sum();
    let mut stacked = DMatrix::zeros(rows, n);
    let mut r = 0;
    for g in &prob.outputs {
        if g.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "measurement matrix columns",
                expected: n,
                got: g.ncols(),
            });
        }
        stacked.view_mut((r, 0), g.shape()).copy_from(g);
        r += g.nrows();
    }
    let joint = undetectable_subspace(&stacked, &prob.s)?;
    if joint.ncols() > 0 {
        return Err(Error::NotDetectable(format!(
            "the joint measurement leaves a {}-dimensional undetectable subspace",
            joint.ncols()
        )));
    }
    let nodes = prob
        .outputs
        .iter()
        .map(|g| decompose_node(&prob.s, g, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let agents = nodes
        .iter()
        .zip(&prob.outputs)
        .map(|(nd, g)| linear_constant(&prob.s - &nd.u * g, DVector::zeros(n)))
        .collect::<Result<Vec<_>>>()?;
    let couplings = nodes
        .iter()
        .map(|nd| {
            let p = nd.w.ncols();
            AgentCoupling::from_factors(nd.w.clone(), nd.z.clone(), DMatrix::identity(p, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let (decomp, transform) = assemble(couplings, &prob.graph, CouplingMode::InputSide)?;
    let network = NetworkSystem::from_parts(agents, Arc::new(decomp), Arc::new(transform), prob.graph.clone(), k)?;
    Ok(ObserverSystem {
        network,
        nodes,
        s: prob.s.clone(),
        omega0: prob.omega0.clone(),
    })
}

/// Two undamped oscillators at frequencies 1 and 2, each measured by one node.
pub fn oscillator_pair() -> ObserverProblem {
    let rot = |w: f64| DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0]);
    let s = linalg::block_diag(&[rot(1.0), rot(2.0)]);
    ObserverProblem {
        s,
        outputs: vec![
            DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(1, 4, &[0.0, 0.0, 1.0, 0.0]),
        ],
        graph: NetworkGraph::chain(2).expect("two nodes"),
        omega0: DVector::from_vec(vec![1.0, 0.0, 0.5, -0.5]),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GainSearch {
    pub k: f64,
    /// `(k, max_i ‖x_i(t_check)‖)` for every gain tried.
    pub history: Vec<(f64, f64)>,
    pub converged: bool,
}

/// Double `k` from `k_start` until every node's estimation error at
/// `t_check` is below `tol`.
pub fn gain_search(
    prob: &ObserverProblem,
    x0: &DVector<f64>,
    t_check: f64,
    tol: f64,
    k_start: f64,
    max_doublings: usize,
) -> Result<GainSearch> {
    if !(k_start > 0.0) {
        return Err(Error::InvalidParameter("starting gain must be positive".into()));
    }
    let base = build_observer(prob, k_start)?;
    let n = prob.s.nrows();
    let mut history = Vec::new();
    let mut k = k_start;
    for _ in 0..=max_doublings {
        let sys = base.network.with_gain(k)?;
        let tr = simulate_network(&sys, x0, &SimulationOptions::span(0.0, t_check))?;
        let xf = tr.final_state();
        let err = (0..sys.agent_count())
            .map(|i| xf.rows(i * n, n).norm())
            .fold(0.0, f64::max);
        history.push((k, err));
        if err <= tol {
            return Ok(GainSearch {
                k,
                history,
                converged: true,
            });
        }
        k *= 2.0;
    }
    Ok(GainSearch {
        k: k / 2.0,
        history,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blended::{BlendedDynamics, BlendedSystem};
    use crate::simulate::Frame;

    #[test]
    fn oscillator_pair_decomposition() {
        let prob = oscillator_pair();
        for (g, seen) in prob.outputs.iter().zip([[0usize, 1], [2, 3]]) {
            let nd = decompose_node(&prob.s, g, 1.0).unwrap();
            assert_eq!(nd.undetectable_dim(), 2);
            // The undetectable part is the other oscillator.
            for c in seen {
                assert!(nd.w.row(c).norm() < 1e-10);
            }
            assert!((nd.z.transpose() * &prob.s * &nd.w).norm() < 1e-10);
            assert!((g * &nd.w).norm() < 1e-12);
            assert!(linalg::spectral_abscissa(&nd.closed_loop()) <= -1.0 + 1e-9);
        }
        let obs = build_observer(&prob, 10.0).unwrap();
        assert_eq!(obs.network.decomposition().p_o, 0);
    }

    #[test]
    fn fully_observable_node_is_plain_luenberger() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let g = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let nd = decompose_node(&s, &g, 1.0).unwrap();
        assert_eq!(nd.undetectable_dim(), 0);
        assert!(linalg::spectral_abscissa(&nd.closed_loop()) < -1.0 + 1e-9);
    }

    #[test]
    fn stable_unobservable_mode_is_detectable() {
        let s = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0]);
        let g = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(unobservable_subspace(&g, &s).ncols(), 1);
        assert_eq!(undetectable_subspace(&g, &s).unwrap().ncols(), 0);
    }

    #[test]
    fn undetectable_joint_pair_is_rejected() {
        let mut prob = oscillator_pair();
        prob.outputs[1] = prob.outputs[0].clone();
        assert!(matches!(build_observer(&prob, 1.0), Err(Error::NotDetectable(_))));
    }

    #[test]
    fn blended_matches_closed_loop_blocks() {
        let prob = oscillator_pair();
        let obs = build_observer(&prob, 10.0).unwrap();
        let bs = BlendedSystem::from_network(&obs.network).unwrap();
        let expected = linalg::block_diag(&obs.nodes.iter().map(|n| n.closed_loop()).collect::<Vec<_>>());
        let j = bs.jacobian(0.0, &vec![0.0; bs.dim()]).unwrap();
        assert!((j - &expected).amax() < 1e-9);
    }

    #[test]
    fn estimates_add_true_state() {
        let prob = oscillator_pair();
        let obs = build_observer(&prob, 5.0).unwrap();
        let t = std::f64::consts::PI;
        let om = obs.omega(t);
        // Frequency-1 oscillator returns to minus itself after half a turn.
        assert!((om[0] + 1.0).abs() < 1e-10 && om[1].abs() < 1e-10);
        let zero = DVector::zeros(8);
        let tr = Trajectory::from_samples(Frame::Network, Some(5.0), vec![0.0, t], vec![zero.clone(), zero]).unwrap();
        let est = obs.estimates(&tr);
        assert!((DVector::from_column_slice(&est.state(1)[4..]) - om).norm() < 1e-12);
    }
}
