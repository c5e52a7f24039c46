//! Convergence, synchronization and stability diagnostics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::blended::{limiting_solution, BlendedDynamics};
use crate::dynamics::NetworkSystem;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sample;
use crate::simulate::{simulate_blended, simulate_network, Frame, SimulationOptions, Trajectory};

/// Merged, sorted sample grid of two trajectories restricted to `[a, b]`.
fn union_grid(x: &Trajectory, y: &Trajectory, a: f64, b: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = x
        .times()
        .iter()
        .chain(y.times())
        .copied()
        .filter(|t| *t >= a && *t <= b)
        .collect();
    ts.push(a);
    ts.push(b);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// Per-agent `sup_t ‖x_i(t) - ξ_i(t)‖` over `t ≥ t_skip`, sampled on the union
/// of both grids with dense output.
pub fn limiting_error(net: &Trajectory, xi: &Trajectory, state_dim: usize, t_skip: f64) -> Result<Vec<f64>> {
    if net.frame != Frame::Network {
        return Err(Error::FrameMismatch(format!("expected a network trajectory, got {}", net.frame)));
    }
    if !matches!(xi.frame, Frame::Limiting | Frame::Network) {
        return Err(Error::FrameMismatch(format!(
            "expected a limiting-solution trajectory, got {}",
            xi.frame
        )));
    }
    if net.dim() != xi.dim() || state_dim == 0 || net.dim() % state_dim != 0 {
        return Err(Error::DimensionMismatch {
            context: "limiting_error trajectories",
            expected: net.dim(),
            got: xi.dim(),
        });
    }
    let a = net.t_start().max(xi.t_start()).max(t_skip);
    let b = net.t_end().min(xi.t_end());
    if !(a <= b) {
        return Err(Error::InvalidParameter(format!(
            "trajectories share no time after t_skip (window [{a}, {b}])"
        )));
    }
    let agents = net.dim() / state_dim;
    let mut err = vec![0.0_f64; agents];
    for t in union_grid(net, xi, a, b) {
        let d = net.interpolate(t)? - xi.interpolate(t)?;
        for (i, e) in err.iter_mut().enumerate() {
            *e = e.max(d.rows(i * state_dim, state_dim).norm());
        }
    }
    Ok(err)
}

/// Default skip time that leaves out the boundary layer of the smallest gain.
pub fn default_t_skip(k_min: f64, q_min_eigenvalue: f64) -> f64 {
    if k_min > 0.0 && q_min_eigenvalue > 0.0 {
        (5.0 / (k_min * q_min_eigenvalue)).max(0.1)
    } else {
        0.1
    }
}

/// Result of one sweep member.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub k: f64,
    /// Per-agent sup errors on `[t_skip, T]`; `None` when the run failed.
    pub errors: Option<Vec<f64>>,
    pub tail_errors: Option<Vec<f64>>,
    pub failure: Option<String>,
}

impl SweepPoint {
    pub fn max_error(&self) -> Option<f64> {
        self.errors.as_ref().map(|e| e.iter().fold(0.0, |m, v| f64::max(m, *v)))
    }

    pub fn max_tail_error(&self) -> Option<f64> {
        self.tail_errors.as_ref().map(|e| e.iter().fold(0.0, |m, v| f64::max(m, *v)))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub points: Vec<SweepPoint>,
    pub t_skip: f64,
    /// `max_i ‖x_i(0) - ξ_i(0)‖`, the error scale before any convergence.
    pub initial_error: f64,
    /// Least-squares slope of `log error` against `log k`; `None` with fewer
    /// than two usable points.
    pub exponent: Option<f64>,
    /// Errors on the full window and on the tail window both decrease in `k`.
    pub uniform: bool,
}

impl ConvergenceReport {
    pub fn k_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.k).collect()
    }

    pub fn max_errors(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.max_error()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,max_error,tail_error,status\n");
        for p in &self.points {
            let fmt = |v: Option<f64>| v.map(|e| format!("{e:.6e}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{}\n",
                p.k,
                fmt(p.max_error()),
                fmt(p.max_tail_error()),
                p.failure.as_deref().unwrap_or("ok").replace(',', ";")
            ));
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("t_skip = {:.4}\n", self.t_skip));
        s.push_str(&format!("initial_error = {:.4e}\n", self.initial_error));
        match self.exponent {
            Some(e) => s.push_str(&format!("decay_exponent = {e:.4}\n")),
            None => s.push_str("decay_exponent = undefined (fewer than two usable points)\n"),
        }
        s.push_str(&format!("uniform_in_time = {}\n", self.uniform));
        for p in &self.points {
            match (p.max_error(), &p.failure) {
                (Some(e), _) => s.push_str(&format!("k = {} : sup error {e:.4e}\n", p.k)),
                (None, Some(f)) => s.push_str(&format!("k = {} : FAILED ({f})\n", p.k)),
                _ => {}
            }
        }
        s
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15)
}

/// Run the network at every gain in `k_list`, concurrently, and compare each
/// run with the limiting solution of `blended`.
pub fn k_sweep(
    sys: &NetworkSystem,
    blended: &dyn BlendedDynamics,
    x0: &DVector<f64>,
    k_list: &[f64],
    opts: &SimulationOptions,
    t_skip: Option<f64>,
) -> Result<ConvergenceReport> {
    if k_list.is_empty() {
        return Err(Error::InvalidParameter("k_list is empty".into()));
    }
    if k_list.windows(2).any(|w| w[1] <= w[0]) || k_list.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::InvalidParameter("k values must be positive and strictly increasing".into()));
    }
    let n = sys.state_dim();
    let t_skip = t_skip.unwrap_or_else(|| default_t_skip(k_list[0], sys.q_min_eigenvalue()));
    let blended_traj = simulate_blended(blended, x0, opts)?;
    let xi = limiting_solution(blended, &blended_traj)?;
    let xi0 = DVector::from_column_slice(xi.state(0));
    let initial_error = (0..sys.agent_count())
        .map(|i| (x0.rows(i * n, n) - xi0.rows(i * n, n)).norm())
        .fold(0.0, f64::max);
    let tail_start = opts.t0 + 0.5 * (opts.t1 - opts.t0);

    let points: Vec<SweepPoint> = k_list
        .par_iter()
        .map(|&k| {
            let run = sys
                .with_gain(k)
                .and_then(|s| simulate_network(&s, x0, opts))
                .and_then(|tr| {
                    let e = limiting_error(&tr, &xi, n, t_skip)?;
                    let tail = limiting_error(&tr, &xi, n, tail_start.max(t_skip))?;
                    Ok((e, tail))
                });
            match run {
                Ok((e, tail)) => SweepPoint {
                    k,
                    errors: Some(e),
                    tail_errors: Some(tail),
                    failure: None,
                },
                Err(err) => SweepPoint {
                    k,
                    errors: None,
                    tail_errors: None,
                    failure: Some(err.to_string()),
                },
            }
        })
        .collect();

    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.max_error().map(|e| (p.k, e)))
        .filter(|(_, e)| *e > 0.0 && *e < initial_error / 2.0)
        .collect();
    let exponent = fit_slope(
        &usable.iter().map(|(k, _)| k.ln()).collect::<Vec<_>>(),
        &usable.iter().map(|(_, e)| e.ln()).collect::<Vec<_>>(),
    );
    let all_ok = points.iter().all(|p| p.errors.is_some());
    let errs: Vec<f64> = points.iter().filter_map(|p| p.max_error()).collect();
    let tails: Vec<f64> = points.iter().filter_map(|p| p.max_tail_error()).collect();
    let uniform = all_ok && points.len() > 1 && non_increasing(&errs) && non_increasing(&tails);
    Ok(ConvergenceReport {
        points,
        t_skip,
        initial_error,
        exponent,
        uniform,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SyncReport {
    pub window: (f64, f64),
    /// `max_{i,j} sup_{t in window} ‖O_i x_i - O_j x_j‖`.
    pub disagreement: f64,
    pub worst_pair: Option<(usize, usize)>,
}

/// Pairwise output disagreement over the final tenth of the trajectory.
pub fn sync_metric(net: &Trajectory, output_maps: &[DMatrix<f64>], state_dim: usize) -> Result<SyncReport> {
    if net.frame != Frame::Network && net.frame != Frame::Limiting {
        return Err(Error::FrameMismatch(format!("expected a network trajectory, got {}", net.frame)));
    }
    let agents = output_maps.len();
    if agents * state_dim != net.dim() {
        return Err(Error::DimensionMismatch {
            context: "sync_metric agent layout",
            expected: net.dim(),
            got: agents * state_dim,
        });
    }
    let q = output_maps.first().map(|o| o.nrows()).unwrap_or(0);
    for o in output_maps {
        if o.ncols() != state_dim || o.nrows() != q {
            return Err(Error::DimensionMismatch {
                context: "output map shape",
                expected: state_dim,
                got: o.ncols(),
            });
        }
    }
    let (t0, t1) = (net.t_start(), net.t_end());
    let a = t1 - 0.1 * (t1 - t0);
    let mut worst = 0.0;
    let mut pair = None;
    for idx in 0..net.len() {
        if net.times()[idx] < a {
            continue;
        }
        let x = net.state(idx);
        let ys: Vec<DVector<f64>> = output_maps
            .iter()
            .enumerate()
            .map(|(i, o)| o * DVector::from_column_slice(&x[i * state_dim..(i + 1) * state_dim]))
            .collect();
        for i in 0..agents {
            for j in i + 1..agents {
                let d = (&ys[i] - &ys[j]).norm();
                if d > worst {
                    worst = d;
                    pair = Some((i, j));
                }
            }
        }
    }
    Ok(SyncReport {
        window: (a, t1),
        disagreement: worst,
        worst_pair: pair,
    })
}

/// Box of blended states (and times) on which contraction is sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub t_range: (f64, f64),
}

impl SampleBox {
    pub fn centered(center: &DVector<f64>, radius: f64, t_range: (f64, f64)) -> Self {
        SampleBox {
            lower: center.map(|c| c - radius),
            upper: center.map(|c| c + radius),
            t_range,
        }
    }

    fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionCertificate {
    /// Symmetric positive definite metric, scaled to unit largest eigenvalue.
    pub h_c: Vec<Vec<f64>>,
    pub lambda_c: f64,
    /// `max λ_max(H_c J + Jᵀ H_c + λ_c H_c)` over the samples.
    pub residual: f64,
    /// `‖P J + Jᵀ P + I‖_F` for the unscaled Lyapunov solution `P`.
    pub lyapunov_residual: f64,
    /// True for an exact linear certificate; false for sampled evidence.
    pub linear: bool,
    pub valid: bool,
    pub samples: String,
    pub spectrum: Vec<(f64, f64)>,
}

impl ContractionCertificate {
    pub fn kind(&self) -> &'static str {
        if self.linear {
            "certificate"
        } else {
            "evidence"
        }
    }

    pub fn h_matrix(&self) -> DMatrix<f64> {
        let m = self.h_c.len();
        DMatrix::from_fn(m, m, |r, c| self.h_c[r][c])
    }
}

/// Tolerance on the sampled contraction inequality.
const CERT_TOL: f64 = 1e-10;

/// Contraction certificate for a blended system. Constant Jacobians give an
/// exact Lyapunov certificate; otherwise the metric from the linearisation at
/// the box centre is tested at `n_samples` random points.
pub fn contraction_certificate(
    bs: &dyn BlendedDynamics,
    sample_box: &SampleBox,
    n_samples: usize,
    seed: u64,
) -> Result<ContractionCertificate> {
    let m = bs.dim();
    if sample_box.lower.len() != m || sample_box.upper.len() != m {
        return Err(Error::DimensionMismatch {
            context: "contraction sample box",
            expected: m,
            got: sample_box.lower.len(),
        });
    }
    let mut rng = sample::rng(seed);
    let (ta, tb) = sample_box.t_range;
    let draw = |rng: &mut sample::SampleRng| -> (f64, DVector<f64>) {
        let t = if tb > ta { rng.gen_range(ta..=tb) } else { ta };
        let s = DVector::from_fn(m, |i, _| {
            let (lo, hi) = (sample_box.lower[i], sample_box.upper[i]);
            if hi > lo {
                rng.gen_range(lo..=hi)
            } else {
                lo
            }
        });
        (t, s)
    };
    let center = sample_box.center();
    let j0 = bs.jacobian(ta, center.as_slice())?;
    let mut linear = true;
    let probes: Vec<(f64, DVector<f64>)> = (0..8).map(|_| draw(&mut rng)).collect();
    for (t, s) in &probes {
        let j = bs.jacobian(*t, s.as_slice())?;
        if (&j - &j0).amax() > 1e-10 * j0.amax().max(1.0) {
            linear = false;
            break;
        }
    }
    let spectrum = linalg::eigenvalues(&j0);
    let abscissa = linalg::spectral_abscissa(&j0);
    if abscissa >= 0.0 {
        return Err(Error::CertificateRefused { abscissa, spectrum });
    }
    let p = linalg::solve_lyapunov(&j0, &DMatrix::identity(m, m))?;
    let lyap_res = (&p * &j0 + j0.transpose() * &p + DMatrix::<f64>::identity(m, m)).norm();
    let p_max = linalg::sym_eigenvalues(&p).first().copied().unwrap_or(1.0);
    let p_min = linalg::sym_eigenvalues(&p).last().copied().unwrap_or(0.0);
    if p_min <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            name: "Lyapunov solution",
            min_eigenvalue: p_min,
        });
    }
    let h = &p / p_max;
    // Exact rate for linear systems; half of it leaves room for curvature.
    let lambda_c = if linear { 1.0 / p_max } else { 0.5 / p_max };
    let test = |j: &DMatrix<f64>| -> f64 {
        let s = &h * j + j.transpose() * &h + &h * lambda_c;
        linalg::sym_eigenvalues(&linalg::symmetrize(&s)).first().copied().unwrap_or(0.0)
    };
    let mut residual = test(&j0);
    let samples = if linear {
        for (t, s) in &probes {
            residual = residual.max(test(&bs.jacobian(*t, s.as_slice())?));
        }
        "constant Jacobian (linear blended dynamics)".to_string()
    } else {
        for _ in 0..n_samples {
            let (t, s) = draw(&mut rng);
            residual = residual.max(test(&bs.jacobian(t, s.as_slice())?));
        }
        format!("{n_samples} uniform samples in the box, seed {seed}")
    };
    Ok(ContractionCertificate {
        h_c: (0..m).map(|r| h.row(r).iter().copied().collect()).collect(),
        lambda_c,
        residual,
        lyapunov_residual: lyap_res,
        linear,
        valid: residual <= CERT_TOL,
        samples,
        spectrum,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryLayerReport {
    /// `k sup_t ‖w(t) - exp(-Q k t) w(0)‖`.
    pub c_fit: f64,
    /// `sup_t ‖w(t) - exp(-Q k t) w(0)‖`.
    pub deviation: f64,
    /// `max_t (‖w(t)‖ - ‖exp(-Q k t) w(0)‖ - c_fit / k)`; nonpositive when the
    /// envelope holds.
    pub max_violation: f64,
    pub samples: usize,
}

/// Compare the fast coordinates of a transformed run with the free decay of
/// the boundary-layer system.
pub fn boundary_layer_check(trans: &Trajectory, q: &DMatrix<f64>, k: f64) -> Result<BoundaryLayerReport> {
    if trans.frame != Frame::Transformed {
        return Err(Error::FrameMismatch(format!("expected a transformed trajectory, got {}", trans.frame)));
    }
    let wd = q.nrows();
    if wd > trans.dim() {
        return Err(Error::DimensionMismatch {
            context: "boundary layer w dimension",
            expected: trans.dim(),
            got: wd,
        });
    }
    let off = trans.dim() - wd;
    let w0 = DVector::from_column_slice(&trans.state(0)[off..]);
    let t0 = trans.t_start();
    let (vals, vecs) = linalg::sym_eigen_sorted(q);
    let free = |t: f64| -> DVector<f64> {
        let d = DVector::from_iterator(wd, vals.iter().map(|v| (-v * k * (t - t0)).exp()));
        &vecs * (d.component_mul(&(vecs.transpose() * &w0)))
    };
    let mut dev = 0.0_f64;
    let mut norms = Vec::with_capacity(trans.len());
    for i in 0..trans.len() {
        let w = DVector::from_column_slice(&trans.state(i)[off..]);
        let e = free(trans.times()[i]);
        dev = dev.max((&w - &e).norm());
        norms.push((w.norm(), e.norm()));
    }
    let c_fit = k * dev;
    let max_violation = norms
        .iter()
        .map(|(w, e)| w - e - dev)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundaryLayerReport {
        c_fit,
        deviation: dev,
        max_violation,
        samples: trans.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub passed: bool,
}

/// Evaluate the fast-coordinate drive `P_w F(t, x)` at user-supplied points of
/// a candidate attractor. It must vanish for the attractor to be invariant
/// for every gain.
pub fn check_fast_invariance(sys: &NetworkSystem, samples: &[(f64, DVector<f64>)]) -> Result<InvarianceReport> {
    let fast = sys.transform().fast_rows();
    let mut residuals = Vec::with_capacity(samples.len());
    for (t, x) in samples {
        if x.len() != sys.total_dim() {
            return Err(Error::DimensionMismatch {
                context: "invariance sample",
                expected: sys.total_dim(),
                got: x.len(),
            });
        }
        let mut f = DVector::zeros(x.len());
        sys.stacked_field(*t, x.as_slice(), f.as_mut_slice());
        residuals.push((&fast * f).norm());
    }
    let max_residual = residuals.iter().fold(0.0, |m: f64, v| m.max(*v));
    Ok(InvarianceReport {
        passed: max_residual <= 1e-8,
        residuals,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blended::{build_special, BlendedSystem, SpecialCase};
    use crate::decomposition::CouplingMode;
    use crate::dynamics::{counting_node, linear_constant, AgentDynamics};
    use crate::network::NetworkGraph;

    fn counting(n: usize, k: f64) -> NetworkSystem {
        let fields = (0..n).map(|i| counting_node(i == 0)).collect();
        NetworkSystem::new(
            fields,
            NetworkGraph::chain(n).unwrap(),
            &vec![DMatrix::from_element(1, 1, 1.0); n],
            CouplingMode::InputSide,
            k,
        )
        .unwrap()
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let sys = counting(3, 50.0);
        let x0 = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        let tr = simulate_network(&sys, &x0, &SimulationOptions::span(0.0, 2.0)).unwrap();
        let e = limiting_error(&tr, &tr, 1, 0.1).unwrap();
        assert!(e.iter().all(|v| *v == 0.0));
        let scaled = tr.map_linear(&(DMatrix::identity(3, 3) * 2.5), Frame::Limiting).unwrap();
        let zero = tr.map_linear(&DMatrix::zeros(3, 3), Frame::Limiting).unwrap();
        let scaled_net = tr.map_linear(&(DMatrix::identity(3, 3) * 2.5), Frame::Network).unwrap();
        let e1 = limiting_error(&tr, &zero, 1, 0.1).unwrap();
        let e2 = limiting_error(&scaled_net, &scaled.map_linear(&DMatrix::zeros(3, 3), Frame::Limiting).unwrap(), 1, 0.1).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            assert!((b - 2.5 * a).abs() < 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn limiting_error_checks_frames_and_spans() {
        let sys = counting(2, 10.0);
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let a = simulate_network(&sys, &x0, &SimulationOptions::span(0.0, 1.0)).unwrap();
        let b = simulate_network(&sys, &x0, &SimulationOptions::span(2.0, 3.0)).unwrap();
        assert!(limiting_error(&a, &b, 1, 0.0).is_err());
        let t = a.map_linear(&DMatrix::identity(2, 2), Frame::Transformed).unwrap();
        assert!(matches!(limiting_error(&t, &a, 1, 0.0), Err(Error::FrameMismatch(_))));
    }

    #[test]
    fn counting_certificate() {
        let sys = counting(3, 10.0);
        let bs = build_special(&sys, SpecialCase::IdenticalPd).unwrap();
        let boxx = SampleBox::centered(&DVector::from_element(1, 3.0), 5.0, (0.0, 10.0));
        let c = contraction_certificate(&bs, &boxx, 20, 1).unwrap();
        assert!(c.linear && c.valid);
        assert!((c.h_c[0][0] - 1.0).abs() < 1e-12);
        assert!((c.lambda_c - 2.0 / 3.0).abs() < 1e-12);
        assert!(c.lyapunov_residual < 1e-8);
        assert_eq!(c.kind(), "certificate");
    }

    #[test]
    fn unstable_jacobian_is_refused() {
        let f = linear_constant(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap();
        let sys = NetworkSystem::new(
            vec![f.clone(), f],
            NetworkGraph::chain(2).unwrap(),
            &vec![DMatrix::from_element(1, 1, 1.0); 2],
            CouplingMode::InputSide,
            1.0,
        )
        .unwrap();
        let bs = BlendedSystem::from_network(&sys).unwrap();
        let boxx = SampleBox::centered(&DVector::zeros(1), 1.0, (0.0, 1.0));
        assert!(matches!(
            contraction_certificate(&bs, &boxx, 10, 0),
            Err(Error::CertificateRefused { .. })
        ));
    }

    #[test]
    fn nonlinear_certificate_is_evidence() {
        // s' = -s - s³ summed over two agents: contracting everywhere.
        let f = AgentDynamics::custom(1, |_, x, o| o[0] = -x[0] - x[0].powi(3));
        let sys = NetworkSystem::new(
            vec![f.clone(), f],
            NetworkGraph::chain(2).unwrap(),
            &vec![DMatrix::from_element(1, 1, 1.0); 2],
            CouplingMode::InputSide,
            1.0,
        )
        .unwrap();
        let bs = build_special(&sys, SpecialCase::IdenticalPd).unwrap();
        let boxx = SampleBox::centered(&DVector::zeros(1), 2.0, (0.0, 1.0));
        let c = contraction_certificate(&bs, &boxx, 50, 3).unwrap();
        assert!(!c.linear);
        assert_eq!(c.kind(), "evidence");
        assert!(c.valid);
    }

    #[test]
    fn sync_of_zero_maps_is_zero() {
        let sys = counting(3, 20.0);
        let x0 = DVector::from_vec(vec![0.0, 5.0, 2.0]);
        let tr = simulate_network(&sys, &x0, &SimulationOptions::span(0.0, 5.0)).unwrap();
        let r = sync_metric(&tr, &vec![DMatrix::zeros(1, 1); 3], 1).unwrap();
        assert_eq!(r.disagreement, 0.0);
        assert!(sync_metric(&tr, &vec![DMatrix::zeros(1, 2); 3], 1).is_err());
    }

    #[test]
    fn boundary_layer_free_decay() {
        // f ≡ 0: w(t) = exp(-Qkt) w(0) exactly.
        let zero = AgentDynamics::custom(2, |_, _, o| o.iter_mut().for_each(|v| *v = 0.0));
        let cs = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]); 3];
        let sys = NetworkSystem::new(vec![zero; 3], NetworkGraph::chain(3).unwrap(), &cs, CouplingMode::InputSide, 4.0).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0, -1.0, 2.0, 0.5, 0.3]);
        let tr = crate::simulate::simulate_transformed(&sys, &x0, &SimulationOptions::span(0.0, 2.0)).unwrap();
        let r = boundary_layer_check(&tr, &sys.decomposition().q, 4.0).unwrap();
        assert!(r.deviation < 1e-7, "{}", r.deviation);
        assert!(r.max_violation <= 1e-12);
    }

    #[test]
    fn invariance_on_sync_manifold() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let f = linear_constant(a, DVector::zeros(2)).unwrap();
        let cs = vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]); 3];
        let sys = NetworkSystem::new(vec![f; 3], NetworkGraph::chain(3).unwrap(), &cs, CouplingMode::InputSide, 1.0).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.7, 0.3, -0.7, 0.3, -0.7]);
        let r = check_fast_invariance(&sys, &[(0.0, x), (1.0, DVector::zeros(6))]).unwrap();
        assert!(r.passed, "{:?}", r.residuals);
        let counting_sys = counting(3, 1.0);
        let at_consensus = DVector::from_element(3, 3.0);
        let r = check_fast_invariance(&counting_sys, &[(0.0, at_consensus)]).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn slope_fit() {
        let k = [10f64, 100.0, 1000.0];
        let e: Vec<f64> = k.iter().map(|k| 3.0 / k).collect();
        let s = fit_slope(&k.map(f64::ln), &e.iter().map(|v| v.ln()).collect::<Vec<_>>()).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
        assert!(fit_slope(&[1.0], &[2.0]).is_none());
    }
}
