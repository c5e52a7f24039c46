//! Agent vector fields and the assembled networked right-hand sides.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::{self, CouplingDecomposition, CouplingMode, TransformPair};
use crate::error::{Error, Result};
use crate::network::NetworkGraph;

/// `f(t, x, out)` writes the vector field into `out`.
pub type FieldFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// `J(t, x)` returns the `n × n` Jacobian of the field in `x`.
pub type JacobianFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    LinearAffine,
    VanDerPol,
    Counting,
    DualGradient,
    Custom,
}

/// A time-varying vector field `f(t, x)` on `R^n`.
#[derive(Clone)]
pub struct AgentDynamics {
    state_dim: usize,
    field: FieldFn,
    jacobian: Option<JacobianFn>,
    kind: DynamicsKind,
}

impl fmt::Debug for AgentDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentDynamics")
            .field("state_dim", &self.state_dim)
            .field("kind", &self.kind)
            .field("has_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl AgentDynamics {
    /// Wrap a user-supplied field. Time-varying inputs belong in the closure's
    /// dependence on `t`.
    pub fn custom<F>(state_dim: usize, field: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        AgentDynamics {
            state_dim,
            field: Arc::new(field),
            jacobian: None,
            kind: DynamicsKind::Custom,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn kind(&self) -> DynamicsKind {
        self.kind
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    #[inline]
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.field)(t, x, out)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.state_dim);
        (self.field)(t, x, out.as_mut_slice());
        out
    }

    /// Analytic Jacobian when available, central differences otherwise.
    pub fn jacobian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(t, x),
            None => self.jacobian_fd(t, x),
        }
    }

    pub fn jacobian_fd(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let n = self.state_dim;
        let mut j = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for c in 0..n {
            let h = 1e-6 * x[c].abs().max(1.0);
            xp[c] = x[c] + h;
            self.eval_into(t, &xp, &mut fp);
            xp[c] = x[c] - h;
            self.eval_into(t, &xp, &mut fm);
            xp[c] = x[c];
            for r in 0..n {
                j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        j
    }
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite")))
    }
}

/// `f(t, x) = A x + g(t)`.
pub fn linear_affine<G>(a: DMatrix<f64>, g: G) -> Result<AgentDynamics>
where
    G: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
{
    if !a.is_square() {
        return Err(Error::InvalidParameter("A must be square".into()));
    }
    check_finite("A", a.as_slice())?;
    let n = a.nrows();
    let a_field = a.clone();
    let field = move |t: f64, x: &[f64], out: &mut [f64]| {
        let g = g(t);
        for r in 0..n {
            let mut s = g[r];
            for c in 0..n {
                s += a_field[(r, c)] * x[c];
            }
            out[r] = s;
        }
    };
    Ok(AgentDynamics {
        state_dim: n,
        field: Arc::new(field),
        jacobian: Some(Arc::new(move |_, _| a.clone())),
        kind: DynamicsKind::LinearAffine,
    })
}

/// `f(t, x) = A x + b` with constant `b`.
pub fn linear_constant(a: DMatrix<f64>, b: DVector<f64>) -> Result<AgentDynamics> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "linear_constant offset",
            expected: a.nrows(),
            got: b.len(),
        });
    }
    check_finite("b", b.as_slice())?;
    linear_affine(a, move |_| b.clone())
}

/// Van der Pol oscillator `(v, c w (1 - x²) v - w² x)`.
pub fn van_der_pol(c: f64, w: f64) -> Result<AgentDynamics> {
    check_finite("van der Pol parameters", &[c, w])?;
    let cw = c * w;
    let w2 = w * w;
    Ok(AgentDynamics {
        state_dim: 2,
        field: Arc::new(move |_, x, out| {
            out[0] = x[1];
            out[1] = cw * (1.0 - x[0] * x[0]) * x[1] - w2 * x[0];
        }),
        jacobian: Some(Arc::new(move |_, x| {
            DMatrix::from_row_slice(
                2,
                2,
                &[0.0, 1.0, -2.0 * cw * x[0] * x[1] - w2, cw * (1.0 - x[0] * x[0])],
            )
        })),
        kind: DynamicsKind::VanDerPol,
    })
}

/// Van der Pol oscillator in the sheared coordinates `(x, r x + v)`, where the
/// output coupling `r x + v` becomes a symmetric rank-one input coupling.
pub fn van_der_pol_sheared(c: f64, w: f64, r: f64) -> Result<AgentDynamics> {
    check_finite("van der Pol parameters", &[c, w, r])?;
    let cw = c * w;
    let w2 = w * w;
    let a21 = -(r * r + cw * r + w2);
    let a22 = r + cw;
    Ok(AgentDynamics {
        state_dim: 2,
        field: Arc::new(move |_, x, out| {
            let (xb, vb) = (x[0], x[1]);
            out[0] = vb - r * xb;
            out[1] = a21 * xb + a22 * vb + cw * xb * xb * (r * xb - vb);
        }),
        jacobian: Some(Arc::new(move |_, x| {
            let (xb, vb) = (x[0], x[1]);
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    -r,
                    1.0,
                    a21 + cw * (3.0 * r * xb * xb - 2.0 * xb * vb),
                    a22 - cw * xb * xb,
                ],
            )
        })),
        kind: DynamicsKind::VanDerPol,
    })
}

/// Scalar node of the agent-counting protocol: the anchor runs
/// `-x + value`, every other node runs the constant `value`.
pub fn counting_node_with_value(is_anchor: bool, value: f64) -> Result<AgentDynamics> {
    check_finite("counting value", &[value])?;
    let (field, slope): (FieldFn, f64) = if is_anchor {
        (Arc::new(move |_, x, out| out[0] = -x[0] + value), -1.0)
    } else {
        (Arc::new(move |_, _, out| out[0] = value), 0.0)
    };
    Ok(AgentDynamics {
        state_dim: 1,
        field,
        jacobian: Some(Arc::new(move |_, _| DMatrix::from_element(1, 1, slope))),
        kind: DynamicsKind::Counting,
    })
}

pub fn counting_node(is_anchor: bool) -> AgentDynamics {
    counting_node_with_value(is_anchor, 1.0).expect("finite constant")
}

/// Dual gradient node `λ' = d - θ(λ)`. `theta_slope` is the derivative of
/// `θ`; when absent the Jacobian falls back to finite differences.
pub fn dual_gradient<T>(theta: T, theta_slope: Option<JacobianScalar>, demand: f64) -> Result<AgentDynamics>
where
    T: Fn(f64) -> f64 + Send + Sync + 'static,
{
    check_finite("demand", &[demand])?;
    let jacobian: Option<JacobianFn> = theta_slope.map(|s| {
        Arc::new(move |_: f64, x: &[f64]| DMatrix::from_element(1, 1, -s(x[0]))) as JacobianFn
    });
    Ok(AgentDynamics {
        state_dim: 1,
        field: Arc::new(move |_, x, out| out[0] = demand - theta(x[0])),
        jacobian,
        kind: DynamicsKind::DualGradient,
    })
}

/// Scalar derivative callback.
pub type JacobianScalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Agents, coupling structure and gain of the networked system
/// `ẋ = F(t, x) - k K x`.
#[derive(Debug, Clone)]
pub struct NetworkSystem {
    agents: Vec<AgentDynamics>,
    decomposition: Arc<CouplingDecomposition>,
    transform: Arc<TransformPair>,
    graph: NetworkGraph,
    gain: f64,
}

impl NetworkSystem {
    /// Decompose the coupling matrices and assemble the system.
    pub fn new(
        agents: Vec<AgentDynamics>,
        graph: NetworkGraph,
        couplings: &[DMatrix<f64>],
        mode: CouplingMode,
        gain: f64,
    ) -> Result<Self> {
        let cs = couplings
            .iter()
            .map(|c| decomposition::decompose_coupling(c, decomposition::DEFAULT_RANK_TOL))
            .collect::<Result<Vec<_>>>()?;
        let (d, t) = decomposition::assemble(cs, &graph, mode)?;
        Self::from_parts(agents, Arc::new(d), Arc::new(t), graph, gain)
    }

    pub fn from_parts(
        agents: Vec<AgentDynamics>,
        decomposition: Arc<CouplingDecomposition>,
        transform: Arc<TransformPair>,
        graph: NetworkGraph,
        gain: f64,
    ) -> Result<Self> {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling gain must be nonnegative and finite, got {gain}"
            )));
        }
        if agents.len() != decomposition.agent_count() {
            return Err(Error::DimensionMismatch {
                context: "number of agent fields",
                expected: decomposition.agent_count(),
                got: agents.len(),
            });
        }
        if graph.agent_count() != decomposition.agent_count() {
            return Err(Error::DimensionMismatch {
                context: "graph agent count",
                expected: decomposition.agent_count(),
                got: graph.agent_count(),
            });
        }
        for a in &agents {
            if a.state_dim() != decomposition.state_dim {
                return Err(Error::DimensionMismatch {
                    context: "agent field dimension",
                    expected: decomposition.state_dim,
                    got: a.state_dim(),
                });
            }
        }
        Ok(NetworkSystem {
            agents,
            decomposition,
            transform,
            graph,
            gain,
        })
    }

    /// Same system with a different coupling gain.
    pub fn with_gain(&self, gain: f64) -> Result<Self> {
        Self::from_parts(
            self.agents.clone(),
            self.decomposition.clone(),
            self.transform.clone(),
            self.graph.clone(),
            gain,
        )
    }

    pub fn agents(&self) -> &[AgentDynamics] {
        &self.agents
    }

    pub fn decomposition(&self) -> &CouplingDecomposition {
        &self.decomposition
    }

    pub fn decomposition_arc(&self) -> Arc<CouplingDecomposition> {
        self.decomposition.clone()
    }

    pub fn transform(&self) -> &TransformPair {
        &self.transform
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn mode(&self) -> CouplingMode {
        self.decomposition.mode
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn state_dim(&self) -> usize {
        self.decomposition.state_dim
    }

    pub fn total_dim(&self) -> usize {
        self.decomposition.total_dim()
    }

    fn check_len(&self, context: &'static str, len: usize) -> Result<()> {
        if len != self.total_dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.total_dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Stacked `F(t, x)` without the coupling term.
    pub fn stacked_field(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let n = self.state_dim();
        for (i, a) in self.agents.iter().enumerate() {
            a.eval_into(t, &x[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
        }
    }

    /// Coupling product `K x` evaluated edge by edge.
    pub fn coupling_product(&self, x: &[f64], out: &mut [f64]) {
        let n = self.state_dim();
        let d = &self.decomposition;
        out.iter_mut().for_each(|v| *v = 0.0);
        match d.mode {
            CouplingMode::InputSide => {
                let mut acc = vec![0.0; x.len()];
                for e in self.graph.edges() {
                    for c in 0..n {
                        let diff = e.weight * (x[e.i * n + c] - x[e.j * n + c]);
                        acc[e.i * n + c] += diff;
                        acc[e.j * n + c] -= diff;
                    }
                }
                for (i, a) in d.agents.iter().enumerate() {
                    for r in 0..n {
                        let mut s = 0.0;
                        for c in 0..n {
                            s += a.matrix[(r, c)] * acc[i * n + c];
                        }
                        out[i * n + r] = s;
                    }
                }
            }
            CouplingMode::OutputSide => {
                let mut y = vec![0.0; x.len()];
                for (i, a) in d.agents.iter().enumerate() {
                    for r in 0..n {
                        let mut s = 0.0;
                        for c in 0..n {
                            s += a.matrix[(r, c)] * x[i * n + c];
                        }
                        y[i * n + r] = s;
                    }
                }
                for e in self.graph.edges() {
                    for c in 0..n {
                        let diff = e.weight * (y[e.i * n + c] - y[e.j * n + c]);
                        out[e.i * n + c] += diff;
                        out[e.j * n + c] -= diff;
                    }
                }
            }
        }
    }

    /// Networked right-hand side `F(t, x) - k K x`.
    pub fn eval_network_rhs(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len("network state", x.len())?;
        self.check_len("network output", out.len())?;
        self.stacked_field(t, x, out);
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "agent {} field at t = {t}",
                i / self.state_dim() + 1
            )));
        }
        if self.gain != 0.0 {
            let mut kx = vec![0.0; x.len()];
            self.coupling_product(x, &mut kx);
            for (o, c) in out.iter_mut().zip(&kx) {
                *o -= self.gain * c;
            }
        }
        Ok(())
    }

    pub fn network_rhs(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(x.len());
        self.eval_network_rhs(t, x.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    /// Right-hand side in `(z, z_o, w)` coordinates:
    /// `P F(t, P⁻¹ y) - k col(0, 0, Q w)`.
    pub fn eval_transformed_rhs(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len("transformed state", y.len())?;
        self.check_len("transformed output", out.len())?;
        let tp = &self.transform;
        let yv = DVector::from_column_slice(y);
        let x = &tp.p_inv * &yv;
        let mut f = DVector::zeros(x.len());
        self.stacked_field(t, x.as_slice(), f.as_mut_slice());
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("agent field at t = {t}")));
        }
        let mut dy = &tp.p * f;
        let s = tp.slow_dim();
        if tp.w_dim > 0 && self.gain != 0.0 {
            let w = yv.rows(s, tp.w_dim);
            let qw = &self.decomposition.q * w;
            for r in 0..tp.w_dim {
                dy[s + r] -= self.gain * qw[r];
            }
        }
        out.copy_from_slice(dy.as_slice());
        Ok(())
    }

    /// Transformed right-hand side with the state given in split form.
    pub fn transformed_rhs(&self, t: f64, z: &[f64], z_o: &[f64], w: &[f64]) -> Result<DVector<f64>> {
        let tp = &self.transform;
        if z.len() != tp.z_dim || z_o.len() != tp.zo_dim || w.len() != tp.w_dim {
            return Err(Error::DimensionMismatch {
                context: "transformed state blocks",
                expected: self.total_dim(),
                got: z.len() + z_o.len() + w.len(),
            });
        }
        let y: Vec<f64> = z.iter().chain(z_o).chain(w).copied().collect();
        let mut out = DVector::zeros(y.len());
        self.eval_transformed_rhs(t, &y, out.as_mut_slice())?;
        Ok(out)
    }

    /// Largest eigenvalue of `Q` (zero when there is no fast subsystem).
    pub fn q_max_eigenvalue(&self) -> f64 {
        crate::linalg::sym_eigenvalues(&self.decomposition.q)
            .first()
            .copied()
            .unwrap_or(0.0)
    }

    pub fn q_min_eigenvalue(&self) -> f64 {
        crate::linalg::sym_eigenvalues(&self.decomposition.q)
            .last()
            .copied()
            .unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use rand::Rng;

    fn scalar_system(k: f64, fields: Vec<AgentDynamics>) -> NetworkSystem {
        let n = fields.len();
        let g = NetworkGraph::chain(n).unwrap();
        let cs = vec![DMatrix::from_element(1, 1, 1.0); n];
        NetworkSystem::new(fields, g, &cs, CouplingMode::InputSide, k).unwrap()
    }

    fn zero_field(n: usize) -> AgentDynamics {
        AgentDynamics::custom(n, |_, _, out| out.iter_mut().for_each(|v| *v = 0.0))
    }

    #[test]
    fn hand_evaluated_two_agents() {
        let sys = scalar_system(3.0, vec![zero_field(1), zero_field(1)]);
        let mut out = [0.0; 2];
        sys.eval_network_rhs(0.0, &[1.0, 0.0], &mut out).unwrap();
        assert_eq!(out, [-3.0, 3.0]);
    }

    #[test]
    fn zero_gain_returns_fields() {
        let sys = scalar_system(0.0, vec![counting_node(true), counting_node(false)]);
        let mut out = [0.0; 2];
        sys.eval_network_rhs(0.0, &[4.0, 7.0], &mut out).unwrap();
        assert_eq!(out, [-3.0, 1.0]);
    }

    #[test]
    fn catalog_examples() {
        assert_eq!(counting_node(true).eval(0.0, &[4.0])[0], -3.0);
        assert_eq!(counting_node(false).eval(0.0, &[123.0])[0], 1.0);
        let v = van_der_pol(1.0, 1.0).unwrap().eval(0.0, &[0.0, 1.0]);
        assert_eq!(v.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn sheared_van_der_pol_matches_change_of_variables() {
        let (c, w, r) = (0.7, 1.3, 0.8);
        let orig = van_der_pol(c, w).unwrap();
        let sh = van_der_pol_sheared(c, w, r).unwrap();
        let mut rng = sample::rng(5);
        for _ in 0..20 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let f = orig.eval(0.0, &x);
            let xb = [x[0], r * x[0] + x[1]];
            let fb = sh.eval(0.0, &xb);
            assert!((fb[0] - f[0]).abs() < 1e-12);
            assert!((fb[1] - (r * f[0] + f[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn synchronized_states_feel_no_coupling() {
        let g = NetworkGraph::complete(3).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let fields = vec![van_der_pol(1.0, 1.0).unwrap(); 3];
        for mode in [CouplingMode::InputSide, CouplingMode::OutputSide] {
            let sys = NetworkSystem::new(fields.clone(), g.clone(), &vec![b.clone(); 3], mode, 50.0).unwrap();
            let x = [0.3, -0.2, 0.3, -0.2, 0.3, -0.2];
            let mut out = [0.0; 6];
            sys.eval_network_rhs(0.0, &x, &mut out).unwrap();
            let f = fields[0].eval(0.0, &[0.3, -0.2]);
            for i in 0..3 {
                assert!((out[2 * i] - f[0]).abs() < 1e-14);
                assert!((out[2 * i + 1] - f[1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn edgewise_coupling_matches_dense_operator() {
        let mut rng = sample::rng(17);
        for mode in [CouplingMode::InputSide, CouplingMode::OutputSide] {
            let g = sample::connected_graph(&mut rng, 4, 0.4);
            let cs: Vec<_> = (0..4).map(|_| sample::psd_coupling(&mut rng, 3, 2, 0.5, 2.0)).collect();
            let sys = NetworkSystem::new(vec![zero_field(3); 4], g, &cs, mode, 1.0).unwrap();
            let x = sample::normal_vector(&mut rng, 12);
            let mut out = vec![0.0; 12];
            sys.coupling_product(x.as_slice(), &mut out);
            let dense = sys.decomposition().coupling_operator() * &x;
            assert!((DVector::from_vec(out) - dense).norm() < 1e-12);
        }
    }

    #[test]
    fn rhs_is_affine_in_gain() {
        let mut rng = sample::rng(2);
        let g = sample::connected_graph(&mut rng, 3, 0.5);
        let cs: Vec<_> = (0..3).map(|_| sample::psd_coupling(&mut rng, 2, 1, 0.5, 2.0)).collect();
        let fields = vec![van_der_pol(1.0, 1.0).unwrap(), van_der_pol(0.5, 2.0).unwrap(), van_der_pol(2.0, 0.3).unwrap()];
        let sys = NetworkSystem::new(fields, g, &cs, CouplingMode::InputSide, 1.0).unwrap();
        let x = sample::normal_vector(&mut rng, 6);
        let (k1, k2) = (3.0, 11.0);
        let r1 = sys.with_gain(k1).unwrap().network_rhs(0.4, &x).unwrap();
        let r2 = sys.with_gain(k2).unwrap().network_rhs(0.4, &x).unwrap();
        let rm = sys.with_gain((k1 + k2) / 2.0).unwrap().network_rhs(0.4, &x).unwrap();
        assert!((r1 + r2 - rm * 2.0).amax() < 1e-12);
    }

    #[test]
    fn transformed_rhs_is_conjugate_of_network_rhs() {
        let mut rng = sample::rng(23);
        for mode in [CouplingMode::InputSide, CouplingMode::OutputSide] {
            for _ in 0..5 {
                let g = sample::connected_graph(&mut rng, 4, 0.3);
                let cs: Vec<_> = (0..4)
                    .map(|_| {
                        let rank = rng.gen_range(1..=2);
                        sample::psd_coupling(&mut rng, 2, rank, 0.5, 2.0)
                    })
                    .collect();
                let fields = (0..4)
                    .map(|_| van_der_pol(rng.gen_range(0.1..2.0), rng.gen_range(0.5..2.0)).unwrap())
                    .collect();
                let sys = NetworkSystem::new(fields, g, &cs, mode, 7.0).unwrap();
                let x = sample::normal_vector(&mut rng, 8);
                let fx = sys.network_rhs(0.1, &x).unwrap();
                let y = &sys.transform().p * &x;
                let mut fy = vec![0.0; 8];
                sys.eval_transformed_rhs(0.1, y.as_slice(), &mut fy).unwrap();
                let lhs = &sys.transform().p * fx;
                assert!((lhs - DVector::from_vec(fy)).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn counting_slow_rate_structure() {
        let sys = scalar_system(10.0, vec![counting_node(true), counting_node(false), counting_node(false)]);
        let mut sys_out = sys.clone();
        for mode in [CouplingMode::InputSide, CouplingMode::OutputSide] {
            if mode == CouplingMode::OutputSide {
                let cs = vec![DMatrix::from_element(1, 1, 1.0); 3];
                sys_out = NetworkSystem::new(sys.agents().to_vec(), sys.graph().clone(), &cs, mode, 10.0).unwrap();
            }
            let x = DVector::from_vec(vec![2.5, 4.0, -1.0]);
            let y = &sys_out.transform().p * &x;
            let mut dy = vec![0.0; 3];
            sys_out.eval_transformed_rhs(0.0, y.as_slice(), &mut dy).unwrap();
            // z has dimension 0 and z_o is the first coordinate.
            assert!((dy[0] - (-2.5 + 3.0) / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = sample::rng(41);
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]);
        let theta = |l: f64| 2.0 + (l.clamp(-1.0, 3.0)) / 2.0;
        let slope: JacobianScalar = Arc::new(|l: f64| if (-1.0..=3.0).contains(&l) { 0.5 } else { 0.0 });
        let catalog = vec![
            linear_affine(a, |t| DVector::from_vec(vec![t.sin(), 1.0])).unwrap(),
            van_der_pol(0.8, 1.7).unwrap(),
            van_der_pol_sheared(-0.3, 1.1, 0.6).unwrap(),
            counting_node(true),
            counting_node(false),
            dual_gradient(theta, Some(slope), 2.5).unwrap(),
        ];
        for dynm in &catalog {
            for _ in 0..20 {
                let x: Vec<f64> = (0..dynm.state_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let t = rng.gen_range(0.0..5.0);
                let ja = dynm.jacobian(t, &x);
                let jf = dynm.jacobian_fd(t, &x);
                let scale = ja.amax().max(1.0);
                assert!((ja - jf).amax() / scale < 1e-5, "{:?}", dynm.kind());
            }
        }
    }

    #[test]
    fn rejects_mismatched_agents() {
        let g = NetworkGraph::chain(2).unwrap();
        let cs = vec![DMatrix::identity(2, 2); 2];
        let r = NetworkSystem::new(vec![counting_node(true), counting_node(false)], g, &cs, CouplingMode::InputSide, 1.0);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn non_finite_field_is_reported() {
        let bad = AgentDynamics::custom(1, |_, _, out| out[0] = f64::NAN);
        let sys = scalar_system(1.0, vec![bad, zero_field(1)]);
        let mut out = [0.0; 2];
        assert!(matches!(sys.eval_network_rhs(0.0, &[0.0, 0.0], &mut out), Err(Error::NonFinite(_))));
    }
}
