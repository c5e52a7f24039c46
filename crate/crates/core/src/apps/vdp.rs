//! Heterogeneous Van der Pol oscillators coupled through the output
//! `a x + b v`. A shear of the state makes the coupling symmetric, identical
//! and rank one.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::decomposition::CouplingMode;
use crate::dynamics::{van_der_pol, van_der_pol_sheared, AgentDynamics, NetworkSystem};
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::NetworkGraph;
use crate::simulate::Trajectory;

#[derive(Debug, Clone)]
pub struct VdpNetwork {
    pub c: Vec<f64>,
    pub w: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub graph: NetworkGraph,
}

/// Averaged oscillator parameters deciding whether the network oscillates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OscillationCondition {
    /// Mean of `c_i w_i`.
    pub mean_cw: f64,
    /// Mean of `w_i²`.
    pub mean_w2: f64,
    pub holds: bool,
}

impl OscillationCondition {
    /// Frequency of the averaged oscillator.
    pub fn w_hat(&self) -> f64 {
        self.mean_w2.max(0.0).sqrt()
    }

    /// Damping `ĉ` of the averaged oscillator, with `ĉ ŵ` equal to the mean
    /// of `c_i w_i`.
    pub fn c_hat(&self) -> f64 {
        let w = self.w_hat();
        if w > 0.0 {
            self.mean_cw / w
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct VdpSystem {
    /// Network in sheared coordinates `(x, (a/b) x + v)`.
    pub network: NetworkSystem,
    pub condition: OscillationCondition,
    pub ratio: f64,
}

impl VdpNetwork {
    pub fn validate(&self) -> Result<()> {
        if self.c.len() != self.w.len() || self.c.len() != self.graph.agent_count() {
            return Err(Error::DimensionMismatch {
                context: "oscillator parameters vs graph",
                expected: self.graph.agent_count(),
                got: self.c.len().min(self.w.len()),
            });
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "output coefficients must be positive (a = {}, b = {})",
                self.a, self.b
            )));
        }
        Ok(())
    }

    pub fn condition(&self) -> OscillationCondition {
        let n = self.c.len().max(1) as f64;
        let mean_cw = self.c.iter().zip(&self.w).map(|(c, w)| c * w).sum::<f64>() / n;
        let mean_w2 = self.w.iter().map(|w| w * w).sum::<f64>() / n;
        OscillationCondition {
            mean_cw,
            mean_w2,
            holds: mean_cw > 0.0 && mean_w2 > 0.0,
        }
    }

    /// Per-agent shear `(x, v) -> (x, r x + v)` with `r = a/b`.
    pub fn shear(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, self.a / self.b, 1.0])
    }

    /// Stacked inverse shear, mapping sheared network states back to `(x, v)`.
    pub fn unshear_stacked(&self) -> DMatrix<f64> {
        let inv = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -self.a / self.b, 1.0]);
        linalg::block_diag(&vec![inv; self.c.len()])
    }

    pub fn shear_stacked(&self) -> DMatrix<f64> {
        linalg::block_diag(&vec![self.shear(); self.c.len()])
    }

    /// Unsheared oscillators, for reference runs in the original coordinates.
    pub fn original_agents(&self) -> Result<Vec<AgentDynamics>> {
        self.c.iter().zip(&self.w).map(|(c, w)| van_der_pol(*c, *w)).collect()
    }

    /// Second-order oscillator the blended dynamics reduces to on its
    /// synchronisation manifold.
    pub fn projected_oscillator(&self) -> Result<AgentDynamics> {
        let cond = self.condition();
        van_der_pol(cond.c_hat(), cond.w_hat())
    }
}

/// Build the sheared network with gain `k`. The condition is evaluated and
/// stored, not enforced.
pub fn build_vdp(net: &VdpNetwork, k: f64) -> Result<VdpSystem> {
    net.validate()?;
    let r = net.a / net.b;
    let agents = net
        .c
        .iter()
        .zip(&net.w)
        .map(|(c, w)| van_der_pol_sheared(*c, *w, r))
        .collect::<Result<Vec<_>>>()?;
    let b_o = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, net.b]);
    let network = NetworkSystem::new(
        agents,
        net.graph.clone(),
        &vec![b_o; net.c.len()],
        CouplingMode::InputSide,
        k,
    )?;
    Ok(VdpSystem {
        network,
        condition: net.condition(),
        ratio: r,
    })
}

impl VdpSystem {
    /// Express a sheared network trajectory in the original `(x, v)` states.
    pub fn to_original(&self, tr: &Trajectory) -> Result<Trajectory> {
        let n = self.network.agent_count();
        let inv = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -self.ratio, 1.0]);
        let m = linalg::block_diag(&vec![inv; n]);
        Ok(tr.map_linear(&m, tr.frame)?.with_labels(
            (1..=n)
                .flat_map(|i| [format!("x_{i}"), format!("v_{i}")])
                .collect(),
        ))
    }

    /// Sheared initial state from original `(x, v)` states.
    pub fn from_original(&self, x0: &DVector<f64>) -> DVector<f64> {
        let n = self.network.agent_count();
        let sh = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, self.ratio, 1.0]);
        linalg::block_diag(&vec![sh; n]) * x0
    }
}

/// Local maxima `(t, value)` of one component after time `after`, refined
/// with the stored derivatives and dense output.
pub fn successive_peaks(tr: &Trajectory, component: usize, after: f64) -> Vec<(f64, f64)> {
    let t = tr.times();
    let y = tr.component(component);
    let mut peaks = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if t[i] < after || !(y[i] > y[i - 1] && y[i] >= y[i + 1]) {
            continue;
        }
        let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        let d = tr.derivative(i)[component];
        // Locate the derivative's zero crossing by linear interpolation.
        let d0 = tr.derivative(i - 1)[component];
        let d1 = tr.derivative(i + 1)[component];
        let (tp, val) = if d >= 0.0 && d1 < 0.0 {
            let tp = t[i] + h1 * d / (d - d1);
            (tp, tr.interpolate(tp).map(|v| v[component]).unwrap_or(y[i]))
        } else if d < 0.0 && d0 > 0.0 {
            let tp = t[i - 1] + h0 * d0 / (d0 - d);
            (tp, tr.interpolate(tp).map(|v| v[component]).unwrap_or(y[i]))
        } else {
            (t[i], y[i])
        };
        peaks.push((tp, val.max(y[i])));
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blended::{build_special, BlendedDynamics, SpecialCase};
    use crate::sample;
    use crate::simulate::Frame;
    use rand::Rng;

    fn example() -> VdpNetwork {
        VdpNetwork {
            c: vec![1.0, 1.0, -0.5],
            w: vec![1.0, 1.0, 1.0],
            a: 1.0,
            b: 1.0,
            graph: NetworkGraph::chain(3).unwrap(),
        }
    }

    #[test]
    fn condition_with_rogue_agent() {
        let c = example().condition();
        assert!((c.mean_cw - 0.5).abs() < 1e-15);
        assert!(c.holds);
        let bad = VdpNetwork {
            c: vec![-1.0, -1.0],
            w: vec![1.0, 1.0],
            a: 1.0,
            b: 1.0,
            graph: NetworkGraph::chain(2).unwrap(),
        };
        assert!(!bad.condition().holds);
        let mut neg = example();
        neg.b = 0.0;
        assert!(build_vdp(&neg, 1.0).is_err());
    }

    #[test]
    fn sheared_network_matches_original() {
        let mut net = example();
        net.a = 0.7;
        net.b = 1.3;
        let sys = build_vdp(&net, 3.0).unwrap();
        let orig = net.original_agents().unwrap();
        let lap = net.graph.laplacian();
        let mut rng = sample::rng(4);
        for _ in 0..10 {
            let x = DVector::from_fn(6, |_, _| rng.gen_range(-2.0..2.0));
            // Original network: v_i' = f_i - k b... with output y = a x + b v.
            let y: Vec<f64> = (0..3).map(|i| net.a * x[2 * i] + net.b * x[2 * i + 1]).collect();
            let mut dx = DVector::zeros(6);
            for i in 0..3 {
                let f = orig[i].eval(0.0, &[x[2 * i], x[2 * i + 1]]);
                let u: f64 = (0..3).map(|j| -lap[(i, j)] * y[j]).sum();
                dx[2 * i] = f[0];
                dx[2 * i + 1] = f[1] + 3.0 * u;
            }
            let xs = sys.from_original(&x);
            let dxs = sys.network.network_rhs(0.0, &xs).unwrap();
            assert!((dxs - net.shear_stacked() * dx).norm() < 1e-12);
        }
    }

    #[test]
    fn blended_z_subsystem() {
        let mut net = example();
        net.a = 2.0;
        let sys = build_vdp(&net, 1.0).unwrap();
        let bs = build_special(&sys.network, SpecialCase::IdenticalCoupling).unwrap();
        assert_eq!(bs.dim(), 4);
        let mut rng = sample::rng(9);
        for _ in 0..20 {
            let s = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
            let r = bs.rhs(0.0, s.as_slice()).unwrap();
            // Sign of the shared coordinate follows the decomposition's basis.
            let sign = bs.reconstruct_matrix()[(1, 3)];
            for i in 0..3 {
                assert!((r[i] - (-2.0 * s[i] + sign * s[3])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn projected_oscillator_parameters() {
        let p = example().projected_oscillator().unwrap();
        let f = p.eval(0.0, &[0.0, 1.0]);
        assert!((f[1] - 0.5).abs() < 1e-15);
        let f = p.eval(0.0, &[1.0, 0.0]);
        assert!((f[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn peaks_of_a_sine() {
        let ts: Vec<f64> = (0..400).map(|i| i as f64 * 0.05).collect();
        let st: Vec<DVector<f64>> = ts.iter().map(|t| DVector::from_element(1, t.sin())).collect();
        let tr = Trajectory::from_samples(Frame::Blended, None, ts, st).unwrap();
        let p = successive_peaks(&tr, 0, 0.0);
        assert_eq!(p.len(), 3);
        for (_, v) in p {
            assert!((v - 1.0).abs() < 1e-3);
        }
    }
}
