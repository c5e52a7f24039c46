//! Blended dynamics: the quasi-steady-state reduction obtained by setting the
//! fast coordinates to zero, its initial-condition map and the reconstruction
//! of the per-agent limiting solutions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::{CouplingDecomposition, CouplingMode};
use crate::dynamics::{AgentDynamics, NetworkSystem};
use crate::error::{Error, Result};
use crate::linalg;
use crate::simulate::{Frame, Trajectory};

/// Common interface of the generic and the closed-form blended systems.
///
/// Every blended system has the shape `s' = S F(t, R s)` with linear maps `S`
/// (the initial-condition map) and `R` (the reconstruction of the stacked
/// limiting states).
pub trait BlendedDynamics: Send + Sync {
    fn label(&self) -> &str;
    fn agent_count(&self) -> usize;
    fn state_dim(&self) -> usize;
    /// Dimension of the blended state.
    fn dim(&self) -> usize;
    fn eval_rhs(&self, t: f64, s: &[f64], out: &mut [f64]) -> Result<()>;
    /// `dim × nN` matrix taking network states to blended states.
    fn init_matrix(&self) -> DMatrix<f64>;
    /// `nN × dim` matrix taking blended states to stacked limiting states.
    fn reconstruct_matrix(&self) -> DMatrix<f64>;
    fn agents(&self) -> &[AgentDynamics];

    fn init_map(&self, x0: &DVector<f64>) -> Result<DVector<f64>> {
        let nn = self.agent_count() * self.state_dim();
        if x0.len() != nn {
            return Err(Error::DimensionMismatch {
                context: "blended init map",
                expected: nn,
                got: x0.len(),
            });
        }
        Ok(self.init_matrix() * x0)
    }

    /// Limiting states `ξ_i` for a blended state.
    fn reconstruct(&self, s: &[f64]) -> Result<Vec<DVector<f64>>> {
        if s.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "blended state",
                expected: self.dim(),
                got: s.len(),
            });
        }
        let x = self.reconstruct_matrix() * DVector::from_column_slice(s);
        let n = self.state_dim();
        Ok((0..self.agent_count())
            .map(|i| x.rows(i * n, n).clone_owned())
            .collect())
    }

    fn rhs(&self, t: f64, s: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim());
        self.eval_rhs(t, s, out.as_mut_slice())?;
        Ok(out)
    }

    /// Jacobian `S diag(J_i(t, ξ_i)) R` from the agents' Jacobians.
    fn jacobian(&self, t: f64, s: &[f64]) -> Result<DMatrix<f64>> {
        let xi = self.reconstruct(s)?;
        let blocks: Vec<_> = self
            .agents()
            .iter()
            .zip(&xi)
            .map(|(a, x)| a.jacobian(t, x.as_slice()))
            .collect();
        Ok(self.init_matrix() * linalg::block_diag(&blocks) * self.reconstruct_matrix())
    }
}

/// Blended dynamics built from the full decomposition, evaluated agent by
/// agent. State layout is `(ẑ_1, ..., ẑ_N, ẑ_o)`.
#[derive(Debug, Clone)]
pub struct BlendedSystem {
    agents: Vec<AgentDynamics>,
    decomposition: Arc<CouplingDecomposition>,
    /// Per agent: `Z_i`.
    z_blocks: Vec<DMatrix<f64>>,
    /// Input side: `-W_i Λ_i L_i`; output side: unused.
    l_terms: Vec<DMatrix<f64>>,
    /// Input side: `M`; output side: `W_i Λ_i⁻¹ V_i`.
    zo_recon: Vec<DMatrix<f64>>,
    /// Input side: `V_iᵀ Λ_i⁻¹ W_iᵀ`; output side: `Λ_i W_iᵀ`.
    rate_maps: Vec<DMatrix<f64>>,
    init: DMatrix<f64>,
    recon: DMatrix<f64>,
}

impl BlendedSystem {
    pub fn new(agents: Vec<AgentDynamics>, decomposition: Arc<CouplingDecomposition>) -> Result<Self> {
        let d = &decomposition;
        if agents.len() != d.agent_count() {
            return Err(Error::DimensionMismatch {
                context: "blended agent count",
                expected: d.agent_count(),
                got: agents.len(),
            });
        }
        let mut z_blocks = Vec::new();
        let mut l_terms = Vec::new();
        let mut zo_recon = Vec::new();
        let mut rate_maps = Vec::new();
        for (i, a) in d.agents.iter().enumerate() {
            z_blocks.push(a.z.clone());
            let vi = d.v_block(i);
            match d.mode {
                CouplingMode::InputSide => {
                    l_terms.push(-(a.w_lambda() * d.l_block(i)));
                    zo_recon.push(d.m.clone());
                    rate_maps.push(vi.transpose() * a.lambda_inv() * a.w.transpose());
                }
                CouplingMode::OutputSide => {
                    zo_recon.push(&a.w * a.lambda_inv() * &vi);
                    rate_maps.push(&a.lambda * a.w.transpose());
                }
            }
        }
        let t = d.transform();
        Ok(BlendedSystem {
            agents,
            init: t.slow_rows(),
            recon: t.slow_cols(),
            decomposition,
            z_blocks,
            l_terms,
            zo_recon,
            rate_maps,
        })
    }

    pub fn from_network(sys: &NetworkSystem) -> Result<Self> {
        Self::new(sys.agents().to_vec(), sys.decomposition_arc())
    }

    pub fn decomposition(&self) -> &CouplingDecomposition {
        &self.decomposition
    }

    pub fn mode(&self) -> CouplingMode {
        self.decomposition.mode
    }

    /// Limiting states computed agent by agent.
    fn limiting_states(&self, s: &[f64]) -> Vec<DVector<f64>> {
        let d = &self.decomposition;
        let zd = d.z_dim();
        let z_all = DVector::from_column_slice(&s[..zd]);
        let zo = DVector::from_column_slice(&s[zd..]);
        (0..self.agents.len())
            .map(|i| {
                let zi = z_all.rows(d.z_offsets[i], self.z_blocks[i].ncols());
                let mut x = &self.z_blocks[i] * zi + &self.zo_recon[i] * &zo;
                if d.mode == CouplingMode::InputSide {
                    x += &self.l_terms[i] * &z_all;
                }
                x
            })
            .collect()
    }
}

impl BlendedDynamics for BlendedSystem {
    fn label(&self) -> &str {
        "generic"
    }

    fn agent_count(&self) -> usize {
        self.agents.len()
    }

    fn state_dim(&self) -> usize {
        self.decomposition.state_dim
    }

    fn dim(&self) -> usize {
        self.decomposition.reduced_dim()
    }

    fn agents(&self) -> &[AgentDynamics] {
        &self.agents
    }

    fn eval_rhs(&self, t: f64, s: &[f64], out: &mut [f64]) -> Result<()> {
        if s.len() != self.dim() || out.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "blended rhs",
                expected: self.dim(),
                got: s.len(),
            });
        }
        let d = &self.decomposition;
        let zd = d.z_dim();
        let xi = self.limiting_states(s);
        let f: Vec<DVector<f64>> = self
            .agents
            .iter()
            .zip(&xi)
            .map(|(a, x)| a.eval(t, x.as_slice()))
            .collect();
        if f.iter().any(|v| v.iter().any(|e| !e.is_finite())) {
            return Err(Error::NonFinite(format!("agent field at t = {t}")));
        }
        let mut zo_rate = DVector::zeros(d.p_o);
        match d.mode {
            CouplingMode::InputSide => {
                for i in 0..self.agents.len() {
                    let zi = self.z_blocks[i].transpose() * &f[i];
                    out[d.z_offsets[i]..d.z_offsets[i] + zi.len()].copy_from_slice(zi.as_slice());
                    zo_rate += &self.rate_maps[i] * &f[i];
                }
            }
            CouplingMode::OutputSide => {
                // g = col(Λ_j W_jᵀ f_j); the z-rates pick up -Lᵀ g.
                let mut g = DVector::zeros(d.p_bar);
                let mut fsum = DVector::zeros(d.state_dim);
                for j in 0..self.agents.len() {
                    let gj = &self.rate_maps[j] * &f[j];
                    g.rows_mut(d.p_offsets[j], gj.len()).copy_from(&gj);
                    fsum += &f[j];
                }
                let corr = d.l.transpose() * g;
                for i in 0..self.agents.len() {
                    let zi = self.z_blocks[i].transpose() * &f[i];
                    let off = d.z_offsets[i];
                    for r in 0..zi.len() {
                        out[off + r] = zi[r] - corr[off + r];
                    }
                }
                zo_rate = d.m.transpose() * fsum;
            }
        }
        out[zd..].copy_from_slice(zo_rate.as_slice());
        Ok(())
    }

    fn init_matrix(&self) -> DMatrix<f64> {
        self.init.clone()
    }

    fn reconstruct_matrix(&self) -> DMatrix<f64> {
        self.recon.clone()
    }

    fn reconstruct(&self, s: &[f64]) -> Result<Vec<DVector<f64>>> {
        if s.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "blended state",
                expected: self.dim(),
                got: s.len(),
            });
        }
        Ok(self.limiting_states(s))
    }
}

/// Coupling structures with closed-form blended dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialCase {
    /// All coupling matrices equal a PSD matrix.
    IdenticalCoupling,
    /// All coupling matrices positive definite.
    PositiveDefinite,
    /// All coupling matrices equal a PD matrix.
    IdenticalPd,
}

impl std::str::FromStr for SpecialCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identical" | "identical_coupling" | "identical-coupling" => Ok(SpecialCase::IdenticalCoupling),
            "positive_definite" | "positive-definite" | "pd" => Ok(SpecialCase::PositiveDefinite),
            "identical_pd" | "identical-pd" => Ok(SpecialCase::IdenticalPd),
            other => Err(Error::InvalidParameter(format!("unknown special case '{other}'"))),
        }
    }
}

/// Closed-form blended system `ŝ' = S F(t, R ŝ)`.
#[derive(Debug, Clone)]
pub struct SpecialBlended {
    case: SpecialCase,
    agents: Vec<AgentDynamics>,
    state_dim: usize,
    s_map: DMatrix<f64>,
    r_map: DMatrix<f64>,
}

impl SpecialBlended {
    pub fn case(&self) -> SpecialCase {
        self.case
    }
}

const CASE_TOL: f64 = 1e-10;

fn identical_couplings(d: &CouplingDecomposition) -> Result<()> {
    let first = &d.agents[0].matrix;
    for (i, a) in d.agents.iter().enumerate().skip(1) {
        let diff = (&a.matrix - first).amax();
        if diff > CASE_TOL * first.amax().max(1.0) {
            return Err(Error::CasePrecondition(format!(
                "coupling of agent {} differs from agent 1 by {diff:e}",
                i + 1
            )));
        }
    }
    Ok(())
}

fn positive_definite(d: &CouplingDecomposition) -> Result<()> {
    for (i, a) in d.agents.iter().enumerate() {
        if a.rank != d.state_dim {
            return Err(Error::CasePrecondition(format!(
                "coupling of agent {} has rank {} < {}",
                i + 1,
                a.rank,
                d.state_dim
            )));
        }
    }
    Ok(())
}

fn inverse(m: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::NotPositiveDefinite {
            name,
            min_eigenvalue: linalg::sym_eigenvalues(m).last().copied().unwrap_or(0.0),
        })
}

/// Build the closed-form blended system for a declared special case. The
/// case is verified against the couplings.
pub fn build_special(sys: &NetworkSystem, case: SpecialCase) -> Result<SpecialBlended> {
    let d = sys.decomposition();
    let n = d.state_dim;
    let big_n = d.agent_count();
    let nn = n * big_n;
    let (s_map, r_map) = match case {
        SpecialCase::IdenticalCoupling => {
            identical_couplings(d)?;
            let a0 = &d.agents[0];
            let (p, q) = (a0.rank, n - a0.rank);
            let (w_o, z_o) = (&a0.w, &a0.z);
            let m = big_n * q + p;
            let mut s = DMatrix::zeros(m, nn);
            let mut r = DMatrix::zeros(nn, m);
            for i in 0..big_n {
                s.view_mut((i * q, i * n), (q, n)).copy_from(&z_o.transpose());
                s.view_mut((big_n * q, i * n), (p, n))
                    .copy_from(&(w_o.transpose() / big_n as f64));
                r.view_mut((i * n, i * q), (n, q)).copy_from(z_o);
                r.view_mut((i * n, big_n * q), (n, p)).copy_from(w_o);
            }
            (s, r)
        }
        SpecialCase::PositiveDefinite => {
            positive_definite(d)?;
            let mats: Vec<_> = d.agents.iter().map(|a| a.matrix.clone()).collect();
            let invs = mats
                .iter()
                .map(|b| inverse(b, "coupling matrix"))
                .collect::<Result<Vec<_>>>()?;
            let sum_inv = invs.iter().fold(DMatrix::zeros(n, n), |acc, b| acc + b);
            let h = inverse(&linalg::symmetrize(&sum_inv), "sum of inverse couplings")?;
            let mut s = DMatrix::zeros(n, nn);
            let mut r = DMatrix::zeros(nn, n);
            for i in 0..big_n {
                match d.mode {
                    CouplingMode::InputSide => {
                        s.view_mut((0, i * n), (n, n)).copy_from(&(&h * &invs[i]));
                        r.view_mut((i * n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
                    }
                    CouplingMode::OutputSide => {
                        s.view_mut((0, i * n), (n, n)).copy_from(&h);
                        r.view_mut((i * n, 0), (n, n)).copy_from(&invs[i]);
                    }
                }
            }
            (s, r)
        }
        SpecialCase::IdenticalPd => {
            identical_couplings(d)?;
            positive_definite(d)?;
            let mut s = DMatrix::zeros(n, nn);
            let mut r = DMatrix::zeros(nn, n);
            for i in 0..big_n {
                s.view_mut((0, i * n), (n, n))
                    .copy_from(&(DMatrix::identity(n, n) / big_n as f64));
                r.view_mut((i * n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
            }
            (s, r)
        }
    };
    Ok(SpecialBlended {
        case,
        agents: sys.agents().to_vec(),
        state_dim: n,
        s_map,
        r_map,
    })
}

impl BlendedDynamics for SpecialBlended {
    fn label(&self) -> &str {
        match self.case {
            SpecialCase::IdenticalCoupling => "identical_coupling",
            SpecialCase::PositiveDefinite => "positive_definite",
            SpecialCase::IdenticalPd => "identical_pd",
        }
    }

    fn agent_count(&self) -> usize {
        self.agents.len()
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn dim(&self) -> usize {
        self.s_map.nrows()
    }

    fn agents(&self) -> &[AgentDynamics] {
        &self.agents
    }

    fn eval_rhs(&self, t: f64, s: &[f64], out: &mut [f64]) -> Result<()> {
        if s.len() != self.dim() || out.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "special blended rhs",
                expected: self.dim(),
                got: s.len(),
            });
        }
        let x = &self.r_map * DVector::from_column_slice(s);
        let n = self.state_dim;
        let mut f = DVector::zeros(x.len());
        for (i, a) in self.agents.iter().enumerate() {
            a.eval_into(t, &x.as_slice()[i * n..(i + 1) * n], &mut f.as_mut_slice()[i * n..(i + 1) * n]);
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("agent field at t = {t}")));
        }
        let ds = &self.s_map * f;
        out.copy_from_slice(ds.as_slice());
        Ok(())
    }

    fn init_matrix(&self) -> DMatrix<f64> {
        self.s_map.clone()
    }

    fn reconstruct_matrix(&self) -> DMatrix<f64> {
        self.r_map.clone()
    }
}

/// Linear map from the generic blended state to the state of another blended
/// system describing the same limiting manifold: `init ∘ reconstruct_generic`.
pub fn identification(generic: &BlendedSystem, other: &dyn BlendedDynamics) -> DMatrix<f64> {
    other.init_matrix() * generic.reconstruct_matrix()
}

/// Map a blended trajectory to the stacked limiting states `ξ(t)`.
pub fn limiting_solution(bs: &dyn BlendedDynamics, blended: &Trajectory) -> Result<Trajectory> {
    if blended.frame != Frame::Blended {
        return Err(Error::FrameMismatch(format!(
            "limiting solution needs a blended trajectory, got {}",
            blended.frame
        )));
    }
    if blended.dim() != bs.dim() {
        return Err(Error::DimensionMismatch {
            context: "blended trajectory dimension",
            expected: bs.dim(),
            got: blended.dim(),
        });
    }
    let tr = blended.map_linear(&bs.reconstruct_matrix(), Frame::Limiting)?;
    Ok(tr.with_labels(Trajectory::network_labels(bs.agent_count(), bs.state_dim())))
}
