//! Coordinate change that puts a diffusively coupled network with
//! rank-deficient symmetric couplings into singular-perturbation form.
//!
//! Each coupling matrix is split as `W Λ² Wᵀ` with `[W Z]` orthogonal. The
//! stacked factors, the kernel basis `V` of `(D ⊗ I_n) W̄ Λ̄`, its complement
//! `V̄`, the fast-mode matrix `Q`, the slow-mode correction `L` and the
//! transform pair `P`/`P⁻¹` are assembled here. Coordinates are ordered as
//! `(z, z_o, w)` with dimensions `(nN - p̄, p_o, p̄ - p_o)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{difference_matrix, NetworkGraph};

/// Default relative threshold for the numerical rank of a coupling matrix.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
/// Relative singular-value threshold for the kernel defining `V`.
pub const KERNEL_TOL: f64 = 1e-9;

/// Which side of the diffusive coupling carries the coupling matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// `ẋ_i = f_i + k B_i Σ α_ij (x_j - x_i)`
    InputSide,
    /// `ẋ_i = f_i + k Σ α_ij (C_j x_j - C_i x_i)`
    OutputSide,
}

impl std::fmt::Display for CouplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CouplingMode::InputSide => write!(f, "input"),
            CouplingMode::OutputSide => write!(f, "output"),
        }
    }
}

/// Factorisation `matrix = W Λ² Wᵀ` of one agent's coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCoupling {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// `n × p` with orthonormal columns spanning the image.
    pub w: DMatrix<f64>,
    /// `n × (n - p)` with orthonormal columns spanning the kernel.
    pub z: DMatrix<f64>,
    /// `p × p` symmetric positive definite.
    pub lambda: DMatrix<f64>,
}

impl AgentCoupling {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Build from explicit factors, e.g. a detectability decomposition. The
    /// coupling matrix is reconstructed as `W Λ² Wᵀ`.
    pub fn from_factors(w: DMatrix<f64>, z: DMatrix<f64>, lambda: DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        let p = w.ncols();
        if z.nrows() != n || z.ncols() + p != n {
            return Err(Error::DimensionMismatch {
                context: "AgentCoupling::from_factors (Z columns)",
                expected: n - p,
                got: z.ncols(),
            });
        }
        if lambda.nrows() != p || lambda.ncols() != p {
            return Err(Error::DimensionMismatch {
                context: "AgentCoupling::from_factors (Λ size)",
                expected: p,
                got: lambda.nrows(),
            });
        }
        let mut wz = DMatrix::zeros(n, n);
        wz.view_mut((0, 0), (n, p)).copy_from(&w);
        wz.view_mut((0, p), (n, n - p)).copy_from(&z);
        if (wz.transpose() * &wz - DMatrix::identity(n, n)).norm() > 1e-10 {
            return Err(Error::InvalidCoupling("[W Z] is not orthogonal".into()));
        }
        if !linalg::is_symmetric(&lambda, 1e-10) {
            return Err(Error::InvalidCoupling("Λ is not symmetric".into()));
        }
        if let Some(min) = linalg::sym_eigenvalues(&lambda).last() {
            if *min <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    name: "Λ",
                    min_eigenvalue: *min,
                });
            }
        }
        let matrix = linalg::symmetrize(&(&w * &lambda * &lambda * w.transpose()));
        Ok(AgentCoupling {
            matrix,
            rank: p,
            w,
            z,
            lambda,
        })
    }

    /// `W Λ`, the factor that appears throughout the transform.
    pub fn w_lambda(&self) -> DMatrix<f64> {
        &self.w * &self.lambda
    }

    pub fn lambda_inv(&self) -> DMatrix<f64> {
        self.lambda
            .clone()
            .try_inverse()
            .unwrap_or_else(|| DMatrix::zeros(self.rank, self.rank))
    }
}

/// Split a symmetric PSD matrix into `W Λ² Wᵀ`. Eigenvalues above
/// `rank_tol · max(λ_max, 1)` are kept; eigenvectors are sorted by decreasing
/// eigenvalue and sign-normalised.
pub fn decompose_coupling(matrix: &DMatrix<f64>, rank_tol: f64) -> Result<AgentCoupling> {
    if !matrix.is_square() {
        return Err(Error::InvalidCoupling("coupling matrix must be square".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCoupling("coupling matrix has non-finite entries".into()));
    }
    if !linalg::is_symmetric(matrix, 1e-10) {
        return Err(Error::InvalidCoupling("coupling matrix is not symmetric".into()));
    }
    let n = matrix.nrows();
    let (vals, vecs) = linalg::sym_eigen_sorted(matrix);
    let scale = vals.first().copied().unwrap_or(0.0).max(1.0);
    let threshold = rank_tol * scale;
    if let Some(min) = vals.last() {
        if *min < -threshold {
            return Err(Error::InvalidCoupling(format!(
                "coupling matrix has negative eigenvalue {min:e}"
            )));
        }
    }
    let p = vals.iter().filter(|v| **v > threshold).count();
    let w = vecs.columns(0, p).clone_owned();
    let z = vecs.columns(p, n - p).clone_owned();
    let lambda = DMatrix::from_diagonal(&DVector::from_iterator(
        p,
        vals.iter().take(p).map(|v| v.sqrt()),
    ));
    Ok(AgentCoupling {
        matrix: linalg::symmetrize(matrix),
        rank: p,
        w,
        z,
        lambda,
    })
}

fn check_dims(couplings: &[AgentCoupling]) -> Result<usize> {
    let n = couplings
        .first()
        .map(|c| c.dim())
        .ok_or_else(|| Error::InvalidParameter("no couplings given".into()))?;
    for c in couplings {
        if c.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "agent state dimension",
                expected: n,
                got: c.dim(),
            });
        }
    }
    Ok(n)
}

/// Stacked block-diagonal `W̄ Λ̄` of size `nN × p̄`.
fn stacked_w_lambda(couplings: &[AgentCoupling]) -> DMatrix<f64> {
    let blocks: Vec<_> = couplings.iter().map(|c| c.w_lambda()).collect();
    linalg::block_diag(&blocks)
}

/// Orthonormal basis `V` of `ker((D ⊗ I_n) W̄ Λ̄)` and its dimension `p_o`.
pub fn build_v(couplings: &[AgentCoupling], d: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let n = check_dims(couplings)?;
    if d.ncols() != couplings.len() {
        return Err(Error::DimensionMismatch {
            context: "difference matrix columns",
            expected: couplings.len(),
            got: d.ncols(),
        });
    }
    let g = stacked_w_lambda(couplings);
    let dk = linalg::kron(d, &DMatrix::identity(n, n));
    let k = dk * g;
    let v = linalg::kernel_basis(&k, KERNEL_TOL);
    let p_o = v.ncols();
    Ok((v, p_o))
}

/// Complete orthonormal `V` to an orthogonal `[V V̄]`.
pub fn complete_basis(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::orthogonal_complement(v, v.nrows())
}

/// All matrices of the coordinate change.
#[derive(Debug, Clone)]
pub struct CouplingDecomposition {
    pub mode: CouplingMode,
    /// Per-agent state dimension `n`.
    pub state_dim: usize,
    pub agents: Vec<AgentCoupling>,
    pub w_bar: DMatrix<f64>,
    pub z_bar: DMatrix<f64>,
    pub lambda_bar: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub v_bar: DMatrix<f64>,
    /// Common value of `W_i Λ_i V_i`, `n × p_o`.
    pub m: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// `(ℒ ⊗ I_n) W̄ Λ̄ V̄ Q⁻¹`, `nN × (p̄ - p_o)`.
    pub theta: DMatrix<f64>,
    pub p_bar: usize,
    pub p_o: usize,
    /// `ℒ ⊗ I_n`, kept for verification and reporting.
    pub laplacian_kron: DMatrix<f64>,
    /// Row offsets of each agent's block inside `p̄` and inside `z`.
    pub p_offsets: Vec<usize>,
    pub z_offsets: Vec<usize>,
}

impl CouplingDecomposition {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn total_dim(&self) -> usize {
        self.state_dim * self.agents.len()
    }

    /// Dimension `m = nN - p̄ + p_o` of the blended dynamics.
    pub fn reduced_dim(&self) -> usize {
        self.total_dim() - self.p_bar + self.p_o
    }

    pub fn z_dim(&self) -> usize {
        self.total_dim() - self.p_bar
    }

    pub fn w_dim(&self) -> usize {
        self.p_bar - self.p_o
    }

    /// Rows of `V` belonging to agent `i`.
    pub fn v_block(&self, i: usize) -> DMatrix<f64> {
        self.v
            .rows(self.p_offsets[i], self.agents[i].rank)
            .clone_owned()
    }

    pub fn v_bar_block(&self, i: usize) -> DMatrix<f64> {
        self.v_bar
            .rows(self.p_offsets[i], self.agents[i].rank)
            .clone_owned()
    }

    /// Rows of `L` belonging to agent `i`.
    pub fn l_block(&self, i: usize) -> DMatrix<f64> {
        self.l
            .rows(self.p_offsets[i], self.agents[i].rank)
            .clone_owned()
    }

    /// Block `L_ji` of `L_j = [L_j1 ... L_jN]`.
    pub fn l_sub_block(&self, j: usize, i: usize) -> DMatrix<f64> {
        self.l
            .view(
                (self.p_offsets[j], self.z_offsets[i]),
                (self.agents[j].rank, self.state_dim - self.agents[i].rank),
            )
            .clone_owned()
    }

    /// Rows of `Θ` belonging to agent `i`.
    pub fn theta_block(&self, i: usize) -> DMatrix<f64> {
        self.theta
            .rows(i * self.state_dim, self.state_dim)
            .clone_owned()
    }

    /// `W̄ Λ̄`.
    pub fn w_lambda_bar(&self) -> DMatrix<f64> {
        &self.w_bar * &self.lambda_bar
    }

    pub fn lambda_bar_inv(&self) -> DMatrix<f64> {
        let blocks: Vec<_> = self.agents.iter().map(|a| a.lambda_inv()).collect();
        linalg::block_diag(&blocks)
    }

    /// Block-diagonal stack of the coupling matrices.
    pub fn coupling_bar(&self) -> DMatrix<f64> {
        let blocks: Vec<_> = self.agents.iter().map(|a| a.matrix.clone()).collect();
        linalg::block_diag(&blocks)
    }

    /// Dense matrix `K` such that the coupling term is `-k K x`.
    pub fn coupling_operator(&self) -> DMatrix<f64> {
        match self.mode {
            CouplingMode::InputSide => self.coupling_bar() * &self.laplacian_kron,
            CouplingMode::OutputSide => &self.laplacian_kron * self.coupling_bar(),
        }
    }

    /// Rebuild with `V` replaced by `V O` for an orthogonal `O`. `V̄`, `Q`, `L`
    /// and `Θ` are unchanged; `M` becomes `M O`.
    pub fn with_rotated_v(&self, o: &DMatrix<f64>) -> Result<Self> {
        if o.nrows() != self.p_o || o.ncols() != self.p_o {
            return Err(Error::DimensionMismatch {
                context: "with_rotated_v",
                expected: self.p_o,
                got: o.nrows(),
            });
        }
        if (o.transpose() * o - DMatrix::identity(self.p_o, self.p_o)).norm() > 1e-10 {
            return Err(Error::InvalidParameter("rotation is not orthogonal".into()));
        }
        let mut out = self.clone();
        out.v = &self.v * o;
        out.m = &self.m * o;
        Ok(out)
    }

    /// Transform pair `P`/`P⁻¹` for the decomposition's coupling mode.
    pub fn transform(&self) -> TransformPair {
        let g = self.w_lambda_bar();
        let z_bar_t = self.z_bar.transpose();
        let nn = self.total_dim();
        let (zd, od, wd) = (self.z_dim(), self.p_o, self.w_dim());
        let mut p = DMatrix::zeros(nn, nn);
        let mut p_inv = DMatrix::zeros(nn, nn);
        match self.mode {
            CouplingMode::InputSide => {
                let zo_rows = self.v.transpose() * self.lambda_bar_inv() * self.w_bar.transpose();
                p.rows_mut(0, zd).copy_from(&z_bar_t);
                p.rows_mut(zd, od).copy_from(&zo_rows);
                p.rows_mut(zd + od, wd).copy_from(&self.theta.transpose());
                p_inv
                    .columns_mut(0, zd)
                    .copy_from(&(&self.z_bar - &g * &self.l));
                p_inv.columns_mut(zd, od).copy_from(&(&g * &self.v));
                p_inv.columns_mut(zd + od, wd).copy_from(&(&g * &self.v_bar));
            }
            CouplingMode::OutputSide => {
                // P_b = P_a^{-T}: rows are the transposed columns of P_a⁻¹ and
                // vice versa.
                let gt = g.transpose();
                p.rows_mut(0, zd)
                    .copy_from(&(&z_bar_t - self.l.transpose() * &gt));
                p.rows_mut(zd, od).copy_from(&(self.v.transpose() * &gt));
                p.rows_mut(zd + od, wd)
                    .copy_from(&(self.v_bar.transpose() * &gt));
                p_inv.columns_mut(0, zd).copy_from(&self.z_bar);
                p_inv
                    .columns_mut(zd, od)
                    .copy_from(&(&self.w_bar * self.lambda_bar_inv() * &self.v));
                p_inv.columns_mut(zd + od, wd).copy_from(&self.theta);
            }
        }
        TransformPair {
            p,
            p_inv,
            z_dim: zd,
            zo_dim: od,
            w_dim: wd,
        }
    }
}

/// Linear map to singular-perturbation coordinates `(z, z_o, w)` and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPair {
    pub p: DMatrix<f64>,
    pub p_inv: DMatrix<f64>,
    pub z_dim: usize,
    pub zo_dim: usize,
    pub w_dim: usize,
}

impl TransformPair {
    /// Number of slow coordinates `(z, z_o)`.
    pub fn slow_dim(&self) -> usize {
        self.z_dim + self.zo_dim
    }

    /// Slow rows of `P` (the blended initial-condition map).
    pub fn slow_rows(&self) -> DMatrix<f64> {
        self.p.rows(0, self.slow_dim()).clone_owned()
    }

    pub fn fast_rows(&self) -> DMatrix<f64> {
        self.p.rows(self.slow_dim(), self.w_dim).clone_owned()
    }

    /// Slow columns of `P⁻¹` (the limiting-solution reconstruction).
    pub fn slow_cols(&self) -> DMatrix<f64> {
        self.p_inv.columns(0, self.slow_dim()).clone_owned()
    }

    pub fn fast_cols(&self) -> DMatrix<f64> {
        self.p_inv.columns(self.slow_dim(), self.w_dim).clone_owned()
    }
}

/// Assemble the decomposition and transform for the given couplings.
pub fn assemble(
    couplings: Vec<AgentCoupling>,
    graph: &NetworkGraph,
    mode: CouplingMode,
) -> Result<(CouplingDecomposition, TransformPair)> {
    let decomp = assemble_decomposition(couplings, graph, mode)?;
    let transform = decomp.transform();
    let resid = block_identity_residual(&decomp, &transform);
    let scale = decomp.q.norm().max(1.0);
    if resid > 1e-9 * scale {
        return Err(Error::Numerical(format!(
            "block identity violated: residual {resid:e}"
        )));
    }
    Ok((decomp, transform))
}

/// Assemble only the decomposition (no transform diagnostic).
pub fn assemble_decomposition(
    couplings: Vec<AgentCoupling>,
    graph: &NetworkGraph,
    mode: CouplingMode,
) -> Result<CouplingDecomposition> {
    let n = check_dims(&couplings)?;
    let agent_count = couplings.len();
    if graph.agent_count() != agent_count {
        return Err(Error::DimensionMismatch {
            context: "graph agent count vs couplings",
            expected: graph.agent_count(),
            got: agent_count,
        });
    }
    if agent_count < 2 {
        return Err(Error::InvalidGraph("at least two agents are required".into()));
    }
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    let d = difference_matrix(agent_count)?;
    let (v, p_o) = build_v(&couplings, &d)?;
    let v_bar = complete_basis(&v)?;

    let mut p_offsets = Vec::with_capacity(agent_count);
    let mut z_offsets = Vec::with_capacity(agent_count);
    let (mut po, mut zo) = (0, 0);
    for c in &couplings {
        p_offsets.push(po);
        z_offsets.push(zo);
        po += c.rank;
        zo += n - c.rank;
    }
    let p_bar = po;

    let w_bar = linalg::block_diag(&couplings.iter().map(|c| c.w.clone()).collect::<Vec<_>>());
    let z_bar = linalg::block_diag(&couplings.iter().map(|c| c.z.clone()).collect::<Vec<_>>());
    let lambda_bar =
        linalg::block_diag(&couplings.iter().map(|c| c.lambda.clone()).collect::<Vec<_>>());
    let g = &w_bar * &lambda_bar;
    let lk = linalg::kron(&graph.laplacian(), &DMatrix::identity(n, n));

    let m = if agent_count > 0 && p_o > 0 {
        let c0 = &couplings[0];
        c0.w_lambda() * v.rows(0, c0.rank)
    } else {
        DMatrix::zeros(n, p_o)
    };

    let gv_bar = &g * &v_bar;
    let q = linalg::symmetrize(&(gv_bar.transpose() * &lk * &gv_bar));
    let w_dim = p_bar - p_o;
    let (q_inv, theta, l) = if w_dim > 0 {
        let min_eig = linalg::sym_eigenvalues(&q).last().copied().unwrap_or(0.0);
        let scale = q.norm().max(1.0);
        if min_eig <= 1e-12 * scale {
            return Err(Error::NotPositiveDefinite {
                name: "Q",
                min_eigenvalue: min_eig,
            });
        }
        let q_inv = q
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite {
                name: "Q",
                min_eigenvalue: min_eig,
            })?
            .inverse();
        let theta = &lk * &gv_bar * &q_inv;
        let l = &v_bar * &q_inv * gv_bar.transpose() * &lk * &z_bar;
        (q_inv, theta, l)
    } else {
        (
            DMatrix::zeros(0, 0),
            DMatrix::zeros(n * agent_count, 0),
            DMatrix::zeros(p_bar, n * agent_count - p_bar),
        )
    };
    let _ = q_inv;

    Ok(CouplingDecomposition {
        mode,
        state_dim: n,
        agents: couplings,
        w_bar,
        z_bar,
        lambda_bar,
        v,
        v_bar,
        m,
        q,
        l,
        theta,
        p_bar,
        p_o,
        laplacian_kron: lk,
        p_offsets,
        z_offsets,
    })
}

/// `‖P K P⁻¹ - diag(0, 0, Q)‖_F` for the mode's coupling operator `K`.
pub fn block_identity_residual(decomp: &CouplingDecomposition, t: &TransformPair) -> f64 {
    let k = decomp.coupling_operator();
    let mut target = DMatrix::zeros(decomp.total_dim(), decomp.total_dim());
    let s = t.slow_dim();
    target
        .view_mut((s, s), (t.w_dim, t.w_dim))
        .copy_from(&decomp.q);
    (&t.p * k * &t.p_inv - target).norm()
}

/// One named diagnostic with its residual and the tolerance it was held to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn upper(name: &str, residual: f64, tolerance: f64) -> Self {
        Check {
            name: name.to_string(),
            residual,
            tolerance,
            passed: residual.is_finite() && residual <= tolerance,
        }
    }

    fn lower(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.to_string(),
            residual: value,
            tolerance: bound,
            passed: value.is_finite() && value > bound,
        }
    }
}

/// Residuals of every structural property of a decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub mode: CouplingMode,
    pub agent_count: usize,
    pub state_dim: usize,
    pub ranks: Vec<usize>,
    pub p_bar: usize,
    pub p_o: usize,
    pub reduced_dim: usize,
    pub q_spectrum: Vec<f64>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    matrices: Vec<(String, DMatrix<f64>)>,
}

impl DecompositionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// Key/value text with matrix dumps.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "agents = {}", self.agent_count);
        let _ = writeln!(s, "state_dim = {}", self.state_dim);
        let _ = writeln!(s, "ranks = {:?}", self.ranks);
        let _ = writeln!(s, "p_bar = {}", self.p_bar);
        let _ = writeln!(s, "p_o = {}", self.p_o);
        let _ = writeln!(s, "blended_dim = {}", self.reduced_dim);
        let _ = writeln!(s, "q_spectrum = {:?}", self.q_spectrum);
        for c in &self.checks {
            let _ = writeln!(
                s,
                "check.{} = {} (residual {:.3e}, tolerance {:.1e})",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.residual,
                c.tolerance
            );
        }
        for (name, m) in &self.matrices {
            let _ = writeln!(s, "matrix.{} = {}x{}", name, m.nrows(), m.ncols());
            for r in 0..m.nrows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.12e}")).collect();
                let _ = writeln!(s, "  [{}]", row.join(", "));
            }
        }
        s
    }
}

/// Check every invariant of the decomposition and transform.
pub fn verify_decomposition(
    decomp: &CouplingDecomposition,
    transform: &TransformPair,
    graph: &NetworkGraph,
) -> DecompositionReport {
    let n = decomp.state_dim;
    let big_n = decomp.agent_count();
    let mut checks = Vec::new();

    let mut orth = 0.0_f64;
    let mut recon = 0.0_f64;
    let mut lam_min = f64::INFINITY;
    for a in &decomp.agents {
        let mut wz = DMatrix::zeros(n, n);
        wz.view_mut((0, 0), (n, a.rank)).copy_from(&a.w);
        wz.view_mut((0, a.rank), (n, n - a.rank)).copy_from(&a.z);
        orth = orth.max((wz.transpose() * &wz - DMatrix::identity(n, n)).norm());
        let r = (&a.w * &a.lambda * &a.lambda * a.w.transpose() - &a.matrix).norm()
            / a.matrix.norm().max(1.0);
        recon = recon.max(r);
        if let Some(min) = linalg::sym_eigenvalues(&a.lambda).last() {
            lam_min = lam_min.min(*min);
        }
    }
    checks.push(Check::upper("wz_orthogonal", orth, 1e-10));
    checks.push(Check::upper("coupling_reconstruction", recon, 1e-10));
    if lam_min.is_finite() {
        checks.push(Check::lower("lambda_positive", lam_min, 0.0));
    }

    let p_o = decomp.p_o;
    checks.push(Check::upper(
        "v_orthonormal",
        (decomp.v.transpose() * &decomp.v - DMatrix::identity(p_o, p_o)).norm(),
        1e-10,
    ));

    let kernel_resid = difference_matrix(big_n)
        .map(|d| (linalg::kron(&d, &DMatrix::identity(n, n)) * decomp.w_lambda_bar() * &decomp.v).norm())
        .unwrap_or(f64::INFINITY);
    checks.push(Check::upper("kernel_residual", kernel_resid, 1e-9));

    let mut m_dist = 0.0_f64;
    for (i, a) in decomp.agents.iter().enumerate() {
        let mi = a.w_lambda() * decomp.v_block(i);
        m_dist = m_dist.max((mi - &decomp.m).norm());
    }
    checks.push(Check::upper("m_common", m_dist, 1e-9));
    let m_rank = linalg::rank(&decomp.m, 1e-9);
    checks.push(Check::upper(
        "m_rank_equals_p_o",
        (m_rank as f64 - p_o as f64).abs(),
        0.0,
    ));
    let min_rank = decomp.agents.iter().map(|a| a.rank).min().unwrap_or(0);
    checks.push(Check::upper(
        "p_o_at_most_min_rank",
        (p_o as f64 - min_rank as f64).max(0.0),
        0.0,
    ));

    let pb = decomp.p_bar;
    let mut vv = DMatrix::zeros(pb, pb);
    vv.columns_mut(0, p_o).copy_from(&decomp.v);
    vv.columns_mut(p_o, pb - p_o).copy_from(&decomp.v_bar);
    checks.push(Check::upper(
        "v_vbar_orthogonal",
        (vv.transpose() * &vv - DMatrix::identity(pb, pb)).norm(),
        1e-10,
    ));

    let q_spectrum = {
        let mut s = linalg::sym_eigenvalues(&decomp.q);
        s.reverse();
        s
    };
    checks.push(Check::upper(
        "q_symmetric",
        (&decomp.q - decomp.q.transpose()).norm(),
        1e-12 * decomp.q.norm().max(1.0),
    ));
    if decomp.w_dim() > 0 {
        checks.push(Check::lower("q_min_eigenvalue", q_spectrum[0], 1e-9));
    }

    let nn = decomp.total_dim();
    checks.push(Check::upper(
        "p_times_p_inv",
        (&transform.p * &transform.p_inv - DMatrix::identity(nn, nn)).norm(),
        1e-9,
    ));
    let q_scale = decomp.q.norm().max(1.0);
    checks.push(Check::upper(
        "block_identity",
        block_identity_residual(decomp, transform),
        1e-9 * q_scale,
    ));
    let k = decomp.coupling_operator();
    let s = transform.slow_dim();
    let top_left = (&transform.p * k * &transform.p_inv).view((0, 0), (s, s)).norm();
    checks.push(Check::upper("block_top_left_zero", top_left, 1e-9 * q_scale));

    let lap_resid = (linalg::kron(&graph.laplacian(), &DMatrix::identity(n, n)) - &decomp.laplacian_kron).norm();
    checks.push(Check::upper("laplacian_consistent", lap_resid, 0.0));

    DecompositionReport {
        mode: decomp.mode,
        agent_count: big_n,
        state_dim: n,
        ranks: decomp.agents.iter().map(|a| a.rank).collect(),
        p_bar: decomp.p_bar,
        p_o,
        reduced_dim: decomp.reduced_dim(),
        q_spectrum,
        checks,
        matrices: vec![
            ("V".into(), decomp.v.clone()),
            ("V_bar".into(), decomp.v_bar.clone()),
            ("M".into(), decomp.m.clone()),
            ("Q".into(), decomp.q.clone()),
            ("L".into(), decomp.l.clone()),
            ("Theta".into(), decomp.theta.clone()),
            ("P".into(), transform.p.clone()),
            ("P_inv".into(), transform.p_inv.clone()),
        ],
    }
}
