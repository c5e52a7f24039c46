//! Explicit integrators and sampled trajectories.
//!
//! The default method is the Dormand-Prince 5(4) embedded pair with
//! first-same-as-last reuse and a max-norm error test. A fixed-step classical
//! Runge-Kutta method is kept as a cross-check. Accepted steps are stored with
//! their derivatives so trajectories can be sampled anywhere by cubic Hermite
//! interpolation.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blended::BlendedDynamics;
use crate::dynamics::NetworkSystem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Adaptive Dormand-Prince 5(4).
    #[serde(alias = "adaptive-explicit", alias = "dopri5")]
    Adaptive,
    /// Classical fourth-order Runge-Kutta with a fixed step.
    #[serde(alias = "fixed-rk4")]
    Rk4,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" | "adaptive-explicit" | "dopri5" => Ok(Method::Adaptive),
            "rk4" | "fixed-rk4" => Ok(Method::Rk4),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationOptions {
    pub t0: f64,
    pub t1: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step; `None` selects it automatically. For the fixed
    /// step method this is the step.
    pub max_step: Option<f64>,
    pub method: Method,
    pub seed: u64,
    /// Times at which integration restarts (the derivative may jump there).
    pub events: Vec<f64>,
    /// Times that steps land on exactly, without restarting.
    pub stop_times: Vec<f64>,
    pub max_steps: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            t0: 0.0,
            t1: 1.0,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: None,
            method: Method::Adaptive,
            seed: 0,
            events: Vec::new(),
            stop_times: Vec::new(),
            max_steps: 20_000_000,
        }
    }
}

impl SimulationOptions {
    pub fn span(t0: f64, t1: f64) -> Self {
        SimulationOptions {
            t0,
            t1,
            ..Default::default()
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = Some(h);
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_stop_times(mut self, times: Vec<f64>) -> Self {
        self.stop_times = times;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t1 > self.t0) {
            problems.push(format!("t_span must satisfy t0 < t1 (got [{}, {}])", self.t0, self.t1));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            problems.push("tolerances must be positive".to_string());
        }
        if let Some(h) = self.max_step {
            if !(h.is_finite() && h > 0.0) {
                problems.push(format!("max_step must be positive (got {h})"));
            }
        }
        if self.events.windows(2).any(|w| w[1] <= w[0]) {
            problems.push("event times must be strictly increasing".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    /// Sorted interior break points: `(time, restart)`.
    fn breakpoints(&self) -> Vec<(f64, bool)> {
        let mut pts: Vec<(f64, bool)> = self
            .events
            .iter()
            .map(|t| (*t, true))
            .chain(self.stop_times.iter().map(|t| (*t, false)))
            .filter(|(t, _)| *t > self.t0 && *t < self.t1)
            .collect();
        pts.push((self.t1, false));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        pts.dedup_by(|b, a| {
            if (a.0 - b.0).abs() <= 1e-14 * a.0.abs().max(1.0) {
                a.1 |= b.1;
                true
            } else {
                false
            }
        });
        pts
    }
}

/// Coordinate frame of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Stacked agent states `x`.
    Network,
    /// `(z, z_o, w)` coordinates.
    Transformed,
    /// Blended-dynamics state.
    Blended,
    /// Limiting solution reconstructed from a blended run, in network layout.
    Limiting,
}

impl std::fmt::Display for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Frame::Network => "network",
            Frame::Transformed => "transformed",
            Frame::Blended => "blended",
            Frame::Limiting => "limiting",
        };
        f.write_str(s)
    }
}

/// Time samples of a solution with derivative data for dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frame: Frame,
    pub gain: Option<f64>,
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    derivs: Vec<f64>,
    /// Right-sided derivatives at restart points, keyed by sample index.
    restarts: Vec<(usize, Vec<f64>)>,
    labels: Vec<String>,
}

impl Trajectory {
    pub fn new(frame: Frame, gain: Option<f64>, dim: usize) -> Self {
        Trajectory {
            frame,
            gain,
            dim,
            times: Vec::new(),
            states: Vec::new(),
            derivs: Vec::new(),
            restarts: Vec::new(),
            labels: (1..=dim).map(|i| format!("y_{i}")).collect(),
        }
    }

    /// Build from samples; derivatives are estimated by finite differences
    /// when absent.
    pub fn from_samples(
        frame: Frame,
        gain: Option<f64>,
        times: Vec<f64>,
        states: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let dim = states.first().map(|s| s.len()).unwrap_or(0);
        if times.len() != states.len() {
            return Err(Error::DimensionMismatch {
                context: "trajectory samples",
                expected: times.len(),
                got: states.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
        }
        let mut tr = Trajectory::new(frame, gain, dim);
        for s in &states {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "trajectory state dimension",
                    expected: dim,
                    got: s.len(),
                });
            }
        }
        let m = times.len();
        for i in 0..m {
            let d = if m < 2 {
                DVector::zeros(dim)
            } else if i == 0 {
                (&states[1] - &states[0]) / (times[1] - times[0])
            } else if i == m - 1 {
                (&states[m - 1] - &states[m - 2]) / (times[m - 1] - times[m - 2])
            } else {
                (&states[i + 1] - &states[i - 1]) / (times[i + 1] - times[i - 1])
            };
            tr.push(times[i], states[i].as_slice(), d.as_slice());
        }
        Ok(tr)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        if labels.len() == self.dim {
            self.labels = labels;
        }
        self
    }

    /// Column labels `x_<agent>_<component>` for a network-layout trajectory.
    pub fn network_labels(agent_count: usize, state_dim: usize) -> Vec<String> {
        (1..=agent_count)
            .flat_map(|i| (1..=state_dim).map(move |c| format!("x_{i}_{c}")))
            .collect()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub(crate) fn push(&mut self, t: f64, x: &[f64], dx: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.derivs.extend_from_slice(dx);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_start(&self) -> f64 {
        self.times.first().copied().unwrap_or(f64::NAN)
    }

    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(f64::NAN)
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn derivative(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_state(&self) -> DVector<f64> {
        DVector::from_column_slice(self.state(self.len() - 1))
    }

    /// `samples × dim` matrix of states.
    pub fn state_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.states)
    }

    /// Time series of one coordinate.
    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.states[i * self.dim + c]).collect()
    }

    /// Dense output at `t` by cubic Hermite interpolation on the step
    /// containing `t`.
    pub fn interpolate(&self, t: f64) -> Result<DVector<f64>> {
        let n = self.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty trajectory".into()));
        }
        let tol = 1e-12 * self.t_end().abs().max(1.0);
        if t < self.t_start() - tol || t > self.t_end() + tol {
            return Err(Error::InvalidParameter(format!(
                "t = {t} outside trajectory span [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        let idx = match self.times.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return Ok(DVector::from_column_slice(self.state(i))),
            Err(i) => i,
        };
        if idx == 0 {
            return Ok(DVector::from_column_slice(self.state(0)));
        }
        if idx >= n {
            return Ok(DVector::from_column_slice(self.state(n - 1)));
        }
        let (i0, i1) = (idx - 1, idx);
        let (t0, t1) = (self.times[i0], self.times[i1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let d0 = self
            .restarts
            .iter()
            .find(|(i, _)| *i == i0)
            .map(|(_, d)| d.as_slice())
            .unwrap_or_else(|| self.derivative(i0));
        let (x0, x1, d1) = (self.state(i0), self.state(i1), self.derivative(i1));
        Ok(DVector::from_fn(self.dim, |r, _| {
            h00 * x0[r] + h10 * h * d0[r] + h01 * x1[r] + h11 * h * d1[r]
        }))
    }

    /// Apply the linear map `m` to every sample and derivative. Cubic Hermite
    /// dense output commutes with linear maps, so the result interpolates
    /// exactly as the mapped original.
    pub fn map_linear(&self, m: &DMatrix<f64>, frame: Frame) -> Result<Trajectory> {
        if m.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "trajectory linear map",
                expected: self.dim,
                got: m.ncols(),
            });
        }
        let mut out = Trajectory::new(frame, self.gain, m.nrows());
        for i in 0..self.len() {
            let x = m * DVector::from_column_slice(self.state(i));
            let d = m * DVector::from_column_slice(self.derivative(i));
            out.push(self.times[i], x.as_slice(), d.as_slice());
        }
        out.restarts = self
            .restarts
            .iter()
            .map(|(i, d)| (*i, (m * DVector::from_column_slice(d)).as_slice().to_vec()))
            .collect();
        Ok(out)
    }

    /// Keep the samples with `t` in `[a, b]`.
    pub fn window(&self, a: f64, b: f64) -> Trajectory {
        let mut out = Trajectory::new(self.frame, self.gain, self.dim);
        out.labels = self.labels.clone();
        for i in 0..self.len() {
            let t = self.times[i];
            if t >= a && t <= b {
                out.push(t, self.state(i), self.derivative(i));
            }
        }
        out
    }

    fn header_comment(&self) -> String {
        match self.gain {
            Some(k) => format!("# frame={} k={}", self.frame, k),
            None => format!("# frame={}", self.frame),
        }
    }

    /// Wide CSV: comment line with frame and gain, then `t,<labels>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.header_comment());
        let _ = writeln!(s, "t,{}", self.labels.join(","));
        for i in 0..self.len() {
            let _ = write!(s, "{:.12e}", self.times[i]);
            for v in self.state(i) {
                let _ = write!(s, ",{v:.12e}");
            }
            s.push('\n');
        }
        s
    }

    /// Long CSV `t,agent,component,value` for network-layout trajectories with
    /// `state_dim` components per agent.
    pub fn to_csv_long(&self, state_dim: usize) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.header_comment());
        s.push_str("t,agent,component,value\n");
        let n = state_dim.max(1);
        for i in 0..self.len() {
            for (c, v) in self.state(i).iter().enumerate() {
                let _ = writeln!(s, "{:.12e},{},{},{:.12e}", self.times[i], c / n + 1, c % n + 1, v);
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Threshold on the state norm above which a solution is declared escaping.
const BLOW_UP: f64 = 1e12;

fn check_state(t: f64, y: &[f64], scale: f64) -> Result<()> {
    let big = y.iter().fold(0.0_f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    if !big.is_finite() || big > BLOW_UP * scale {
        return Err(Error::FiniteEscape { t });
    }
    Ok(())
}

/// Integrate `y' = rhs(t, y)` from `y0` over the option span.
pub fn integrate<F>(mut rhs: F, y0: &[f64], opts: &SimulationOptions, frame: Frame, gain: Option<f64>) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    opts.validate()?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    match opts.method {
        Method::Adaptive => dopri5(&mut rhs, y0, opts, frame, gain),
        Method::Rk4 => rk4(&mut rhs, y0, opts, frame, gain),
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn initial_step<F>(rhs: &mut F, t: f64, y: &[f64], f0: &[f64], opts: &SimulationOptions, h_max: f64) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let sc: Vec<f64> = y.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let norm = |v: &[f64]| v.iter().zip(&sc).fold(0.0_f64, |m, (a, s)| m.max((a / s).abs()));
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(h_max);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    rhs(t + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(h_max))
}

fn dopri5<F>(rhs: &mut F, y0: &[f64], opts: &SimulationOptions, frame: Frame, gain: Option<f64>) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let span = opts.t1 - opts.t0;
    let h_max = opts.max_step.unwrap_or(span).min(span);
    let scale = y0.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut traj = Trajectory::new(frame, gain, n);
    let mut t = opts.t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    rhs(t, &y, &mut k1)?;
    traj.push(t, &y, &k1);
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut yt = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut h = initial_step(rhs, t, &y, &k1, opts, h_max)?;
    let mut steps = 0usize;
    for (stop, restart) in opts.breakpoints() {
        while t < stop {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Numerical(format!("step limit {} reached at t = {t}", opts.max_steps)));
            }
            let remaining = stop - t;
            let proposal = h;
            let mut last = false;
            if h >= remaining * (1.0 - 1e-12) {
                h = remaining;
                last = true;
            }
            let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
            if h < h_min {
                let big = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if big > 1e6 * scale {
                    return Err(Error::FiniteEscape { t });
                }
                return Err(Error::StepSizeUnderflow { t, h });
            }
            for i in 0..n {
                yt[i] = y[i] + h * A21 * k1[i];
            }
            rhs(t + C2 * h, &yt, &mut k2)?;
            for i in 0..n {
                yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            rhs(t + C3 * h, &yt, &mut k3)?;
            for i in 0..n {
                yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            rhs(t + C4 * h, &yt, &mut k4)?;
            for i in 0..n {
                yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            rhs(t + C5 * h, &yt, &mut k5)?;
            for i in 0..n {
                yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if last { stop } else { t + h };
            // A step ending on a restart sees the field from the left.
            let t_eval = if last && restart { stop.next_down() } else { t_new };
            rhs(t_eval, &yt, &mut k6)?;
            for i in 0..n {
                y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            rhs(t_eval, &y_new, &mut k7)?;
            let mut err = 0.0_f64;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                if y_new.iter().all(|v| v.is_finite()) {
                    h *= 0.2;
                    continue;
                }
                check_state(t, &y_new, scale)?;
                h *= 0.2;
                continue;
            }
            if err <= 1.0 {
                check_state(t_new, &y_new, scale)?;
                t = t_new;
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k7);
                traj.push(t, &y, &k1);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = if last {
                    proposal.max(h * fac).min(h_max)
                } else {
                    (h * fac).min(h_max)
                };
            } else {
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        if restart && t < opts.t1 {
            rhs(t, &y, &mut k1)?;
            let idx = traj.len() - 1;
            traj.restarts.push((idx, k1.clone()));
            h = initial_step(rhs, t, &y, &k1, opts, h_max)?;
        }
    }
    Ok(traj)
}

fn rk4<F>(rhs: &mut F, y0: &[f64], opts: &SimulationOptions, frame: Frame, gain: Option<f64>) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let span = opts.t1 - opts.t0;
    let h_nom = opts.max_step.unwrap_or(span / 1000.0).min(span);
    let scale = y0.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut traj = Trajectory::new(frame, gain, n);
    let mut t = opts.t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    rhs(t, &y, &mut k1)?;
    traj.push(t, &y, &k1);
    let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut yt = vec![0.0; n];
    let mut steps = 0usize;
    for (stop, restart) in opts.breakpoints() {
        let seg = stop - t;
        if seg <= 0.0 {
            continue;
        }
        // Equal steps that land on the stop exactly.
        let count = (seg / h_nom * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let t_seg = t;
        for s in 0..count {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Numerical(format!("step limit {} reached at t = {t}", opts.max_steps)));
            }
            let t_next = if s + 1 == count { stop } else { t_seg + seg * (s + 1) as f64 / count as f64 };
            let h = t_next - t;
            for i in 0..n {
                yt[i] = y[i] + 0.5 * h * k1[i];
            }
            rhs(t + 0.5 * h, &yt, &mut k2)?;
            for i in 0..n {
                yt[i] = y[i] + 0.5 * h * k2[i];
            }
            rhs(t + 0.5 * h, &yt, &mut k3)?;
            for i in 0..n {
                yt[i] = y[i] + h * k3[i];
            }
            let t_eval = if restart && s + 1 == count { stop.next_down() } else { t_next };
            rhs(t_eval, &yt, &mut k4)?;
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            check_state(t_next, &y, scale)?;
            t = t_next;
            rhs(t_eval, &y, &mut k1)?;
            traj.push(t, &y, &k1);
        }
        if restart {
            let mut right = vec![0.0; n];
            rhs(t, &y, &mut right)?;
            let idx = traj.len() - 1;
            traj.restarts.push((idx, right.clone()));
            k1 = right;
        }
    }
    Ok(traj)
}

/// Step cap that resolves the boundary layer of the fast coordinates.
pub fn boundary_layer_step_cap(sys: &NetworkSystem) -> Option<f64> {
    let rate = sys.gain() * sys.q_max_eigenvalue();
    if rate > 0.0 {
        Some(1.0 / (2.0 * rate))
    } else {
        None
    }
}

fn capped(opts: &SimulationOptions, sys: &NetworkSystem) -> SimulationOptions {
    let mut o = opts.clone();
    if let Some(cap) = boundary_layer_step_cap(sys) {
        o.max_step = Some(o.max_step.map_or(cap, |h| h.min(cap)));
    }
    o
}

/// Integrate the networked system in the original coordinates.
pub fn simulate_network(sys: &NetworkSystem, x0: &DVector<f64>, opts: &SimulationOptions) -> Result<Trajectory> {
    if x0.len() != sys.total_dim() {
        return Err(Error::DimensionMismatch {
            context: "initial network state",
            expected: sys.total_dim(),
            got: x0.len(),
        });
    }
    let o = capped(opts, sys);
    let traj = integrate(
        |t, x, out| sys.eval_network_rhs(t, x, out),
        x0.as_slice(),
        &o,
        Frame::Network,
        Some(sys.gain()),
    )?;
    Ok(traj.with_labels(Trajectory::network_labels(sys.agent_count(), sys.state_dim())))
}

/// Integrate the system in `(z, z_o, w)` coordinates from `P x0`.
pub fn simulate_transformed(sys: &NetworkSystem, x0: &DVector<f64>, opts: &SimulationOptions) -> Result<Trajectory> {
    if x0.len() != sys.total_dim() {
        return Err(Error::DimensionMismatch {
            context: "initial network state",
            expected: sys.total_dim(),
            got: x0.len(),
        });
    }
    let y0 = &sys.transform().p * x0;
    let o = capped(opts, sys);
    let traj = integrate(
        |t, y, out| sys.eval_transformed_rhs(t, y, out),
        y0.as_slice(),
        &o,
        Frame::Transformed,
        Some(sys.gain()),
    )?;
    let tp = sys.transform();
    let labels = (1..=tp.z_dim)
        .map(|i| format!("z_{i}"))
        .chain((1..=tp.zo_dim).map(|i| format!("zo_{i}")))
        .chain((1..=tp.w_dim).map(|i| format!("w_{i}")))
        .collect();
    Ok(traj.with_labels(labels))
}

/// Integrate a blended system from the image of `x0` under its initial map.
pub fn simulate_blended(bs: &dyn BlendedDynamics, x0: &DVector<f64>, opts: &SimulationOptions) -> Result<Trajectory> {
    let s0 = bs.init_map(x0)?;
    let mut o = opts.clone();
    if o.max_step.is_none() {
        o.max_step = Some((o.t1 - o.t0) / 200.0);
    }
    let traj = integrate(|t, s, out| bs.eval_rhs(t, s, out), s0.as_slice(), &o, Frame::Blended, None)?;
    let labels = (1..=bs.dim()).map(|i| format!("s_{i}")).collect();
    Ok(traj.with_labels(labels))
}
