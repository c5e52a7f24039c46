//! Command-line driver: `decompose`, `blend`, `simulate`, `sweep` and `app`.
//!
//! Exit status is 0 on success, 1 for invalid input and 2 for numerical
//! failures (blow-up, refused certificates, failed checks).

pub mod plot;
pub mod scenario;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::analysis::{contraction_certificate, default_t_skip, k_sweep, limiting_error, sync_metric, SampleBox};
use crate::apps::{counting, dispatch, observer, vdp};
use crate::blended::{build_special, limiting_solution, BlendedDynamics, BlendedSystem, SpecialCase};
use crate::decomposition::verify_decomposition;
use crate::dynamics::NetworkSystem;
use crate::error::{Error, Result};
use crate::sample;
use crate::simulate::{simulate_blended, simulate_network, simulate_transformed, Method, Trajectory};

use plot::{thin, Chart, Series};
use scenario::{AppSpec, Scenario};

#[derive(Debug, Parser)]
#[command(name = "blendsync", version, about = "Blended dynamics of heterogeneous networks with rank-deficient coupling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the coordinate change and check its identities.
    Decompose(CommonArgs),
    /// Build and simulate the blended system, reconstruct the limiting
    /// solution and try to certify contraction.
    Blend(BlendArgs),
    /// Simulate the network at one gain.
    Simulate(SimulateArgs),
    /// Simulate at several gains and fit the error decay.
    Sweep(CommonArgs),
    /// Run the application described in the scenario's app section.
    App(CommonArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory (overrides the scenario's output.dir).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FLOAT")]
    pub k: Option<f64>,
    #[arg(long = "k-list", value_name = "a,b,c", value_delimiter = ',')]
    pub k_list: Option<Vec<f64>>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,
    /// fixed-rk4 or adaptive
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
}

#[derive(Debug, Args, Clone)]
pub struct BlendArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Use a closed-form special case: identical, positive_definite or identical_pd.
    #[arg(long, value_parser = parse_case)]
    pub case: Option<SpecialCase>,
}

#[derive(Debug, Args, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also simulate in the transformed coordinates.
    #[arg(long)]
    pub transformed: bool,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_case(s: &str) -> std::result::Result<SpecialCase, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parse arguments, run, print diagnostics and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(written) => {
            for p in written {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

struct Run {
    sc: Scenario,
    args: CommonArgs,
    dir: PathBuf,
    written: Vec<PathBuf>,
    summary: String,
}

impl Run {
    fn new(args: &CommonArgs) -> Result<Self> {
        let mut sc = Scenario::from_path(&args.config)?;
        if let Some(seed) = args.seed {
            sc.simulation.seed = seed;
        }
        if let Some(m) = args.method {
            sc.simulation.method = m;
        }
        if let Some(k) = args.k {
            sc.simulation.k = Some(k);
        }
        if let Some(ks) = &args.k_list {
            sc.simulation.k_list = Some(ks.clone());
        }
        sc.validate()?;
        let dir = args
            .out
            .clone()
            .or_else(|| sc.output.dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Run {
            sc,
            args: args.clone(),
            dir,
            written: Vec::new(),
            summary: String::new(),
        })
    }

    fn plot(&self) -> bool {
        self.args.plot || self.sc.output.plot
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let p = self.dir.join(name);
        std::fs::write(&p, content).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        self.written.push(p);
        Ok(())
    }

    fn note(&mut self, line: impl AsRef<str>) {
        self.summary.push_str(line.as_ref());
        self.summary.push('\n');
    }

    fn finish(mut self) -> Result<Vec<PathBuf>> {
        let s = std::mem::take(&mut self.summary);
        self.write("summary.txt", &s)?;
        Ok(self.written)
    }

    fn gain(&self, fallback: Option<f64>) -> Result<f64> {
        self.sc
            .simulation
            .k
            .or(fallback)
            .ok_or_else(|| Error::Config("a coupling gain is required (simulation.k or --k)".into()))
    }
}

fn fmt_k(k: f64) -> String {
    format!("{k}")
}

fn trajectory_chart(title: &str, tr: &Trajectory, max_series: usize) -> Chart {
    let mut c = Chart::new(title, "t", "state");
    for (i, label) in tr.labels().iter().enumerate().take(max_series) {
        let pts = tr.times().iter().copied().zip(tr.component(i)).collect();
        c.push(Series::line(label.clone(), thin(pts, 2000)));
    }
    c
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    match &cli.command {
        Command::Decompose(a) => run_decompose(a),
        Command::Blend(a) => run_blend(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::App(a) => run_app(a),
    }
}

fn run_decompose(args: &CommonArgs) -> Result<Vec<PathBuf>> {
    let mut r = Run::new(args)?;
    let sys = r.sc.build_network(r.sc.simulation.k.unwrap_or(1.0))?;
    let report = verify_decomposition(sys.decomposition(), sys.transform(), sys.graph());
    let mut csv = String::from("check,residual,tolerance,passed\n");
    for c in &report.checks {
        let _ = writeln!(csv, "{},{:.6e},{:.3e},{}", c.name, c.residual, c.tolerance, c.passed);
    }
    r.write("report_decompose.csv", &csv)?;
    r.note(report.to_text());
    let failed: Vec<String> = report.failed().iter().map(|c| c.name.clone()).collect();
    let written = r.finish()?;
    if !failed.is_empty() {
        return Err(Error::Numerical(format!("decomposition checks failed: {}", failed.join(", "))));
    }
    Ok(written)
}

fn blended_for(sys: &NetworkSystem, case: Option<SpecialCase>) -> Result<Box<dyn BlendedDynamics>> {
    Ok(match case {
        Some(c) => Box::new(build_special(sys, c)?),
        None => Box::new(BlendedSystem::from_network(sys)?),
    })
}

fn run_blend(args: &BlendArgs) -> Result<Vec<PathBuf>> {
    let mut r = Run::new(&args.common)?;
    let sys = r.sc.build_network(r.sc.simulation.k.unwrap_or(1.0))?;
    let bs = blended_for(&sys, args.case)?;
    let x0 = r.sc.simulation.initial_state(sys.total_dim())?;
    let opts = r.sc.simulation.options();
    let btr = simulate_blended(bs.as_ref(), &x0, &opts)?;
    let xi = limiting_solution(bs.as_ref(), &btr)?;
    r.write("trajectory_blended.csv", &btr.to_csv())?;
    r.write("trajectory_limiting.csv", &xi.to_csv())?;
    if r.plot() {
        r.write("plot_blended.svg", &trajectory_chart("blended state", &btr, 8).to_svg())?;
        r.write("plot_limiting.svg", &trajectory_chart("limiting solution", &xi, 8).to_svg())?;
    }
    r.note(format!("blended system: {} (dimension {})", bs.label(), bs.dim()));
    let m = bs.dim();
    let states = btr.state_matrix();
    let lower = DVector::from_fn(m, |i, _| states.row(i).min());
    let upper = DVector::from_fn(m, |i, _| states.row(i).max());
    let pad = (&upper - &lower).map(|v| 0.1 * v + 0.1);
    let sbox = SampleBox {
        lower: &lower - &pad,
        upper: &upper + &pad,
        t_range: (opts.t0, opts.t1),
    };
    let mut csv = String::from("key,value\n");
    let _ = writeln!(csv, "blended_dim,{m}");
    let _ = writeln!(csv, "blended_kind,{}", bs.label());
    let cert = contraction_certificate(bs.as_ref(), &sbox, 200, r.sc.simulation.seed);
    match &cert {
        Ok(c) => {
            let _ = writeln!(csv, "certificate_kind,{}", c.kind());
            let _ = writeln!(csv, "certificate_valid,{}", c.valid);
            let _ = writeln!(csv, "contraction_rate,{:.12e}", c.lambda_c);
            let _ = writeln!(csv, "contraction_residual,{:.6e}", c.residual);
            let _ = writeln!(csv, "lyapunov_residual,{:.6e}", c.lyapunov_residual);
            r.note(format!(
                "contraction {}: valid = {}, rate = {:.6}, residual = {:.3e} ({})",
                c.kind(),
                c.valid,
                c.lambda_c,
                c.residual,
                c.samples
            ));
        }
        Err(e) => {
            let _ = writeln!(csv, "certificate_kind,refused");
            r.note(format!("contraction certificate refused: {e}"));
        }
    }
    r.write("report_blend.csv", &csv)?;
    let written = r.finish()?;
    cert?;
    Ok(written)
}

fn run_simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    if args.common.k_list.is_some() {
        return Err(Error::Config("--k-list needs the sweep subcommand".into()));
    }
    let mut r = Run::new(&args.common)?;
    if r.sc.simulation.k_list.is_some() && r.sc.simulation.k.is_none() {
        return Err(Error::Config("simulation.k_list is set: use the sweep subcommand or give --k".into()));
    }
    let k = r.gain(None)?;
    let sys = r.sc.build_network(k)?;
    let x0 = r.sc.simulation.initial_state(sys.total_dim())?;
    let opts = r.sc.simulation.options();
    let tr = simulate_network(&sys, &x0, &opts)?;
    r.write(&format!("trajectory_network_{}.csv", fmt_k(k)), &tr.to_csv())?;
    if args.transformed {
        let tt = simulate_transformed(&sys, &x0, &opts)?;
        r.write(&format!("trajectory_transformed_{}.csv", fmt_k(k)), &tt.to_csv())?;
    }
    if r.plot() {
        r.write("plot_network.svg", &trajectory_chart(&format!("network, k = {k}"), &tr, 8).to_svg())?;
    }
    r.note(format!("simulated {} agents, k = {k}, {} samples", sys.agent_count(), tr.len()));
    let mut csv = String::from("agent,limiting_error\n");
    match BlendedSystem::from_network(&sys)
        .and_then(|bs| simulate_blended(&bs, &x0, &opts).and_then(|b| limiting_solution(&bs, &b)))
    {
        Ok(xi) => {
            let t_skip = r
                .sc
                .simulation
                .t_skip
                .unwrap_or_else(|| default_t_skip(k, sys.q_min_eigenvalue()))
                .min(opts.t1);
            let errs = limiting_error(&tr, &xi, sys.state_dim(), t_skip)?;
            for (i, e) in errs.iter().enumerate() {
                let _ = writeln!(csv, "{},{e:.6e}", i + 1);
            }
            r.note(format!(
                "sup distance to the limiting solution for t >= {t_skip:.4}: {:.4e}",
                errs.iter().fold(0.0, |m: f64, v| m.max(*v))
            ));
        }
        Err(e) => r.note(format!("limiting solution unavailable: {e}")),
    }
    r.write("report_simulate.csv", &csv)?;
    r.finish()
}

fn run_sweep(args: &CommonArgs) -> Result<Vec<PathBuf>> {
    let mut r = Run::new(args)?;
    let ks = r
        .sc
        .simulation
        .k_list
        .clone()
        .ok_or_else(|| Error::Config("sweep needs simulation.k_list or --k-list".into()))?;
    let sys = r.sc.build_network(ks[0])?;
    let bs = BlendedSystem::from_network(&sys)?;
    let x0 = r.sc.simulation.initial_state(sys.total_dim())?;
    let report = k_sweep(&sys, &bs, &x0, &ks, &r.sc.simulation.options(), r.sc.simulation.t_skip)?;
    r.write("report_sweep.csv", &report.to_csv())?;
    r.note(report.summary());
    if r.plot() {
        let mut c = Chart::new("distance to the limiting solution", "k", "sup error").log_log();
        let pts = report
            .points
            .iter()
            .filter_map(|p| p.max_error().map(|e| (p.k, e)))
            .collect();
        c.push(Series::line("sup error", pts).with_markers());
        r.write("plot_error.svg", &c.to_svg())?;
    }
    let failures: Vec<String> = report
        .points
        .iter()
        .filter_map(|p| p.failure.as_ref().map(|f| format!("k = {}: {f}", p.k)))
        .collect();
    let written = r.finish()?;
    if !failures.is_empty() {
        return Err(Error::Numerical(format!("sweep members failed: {}", failures.join("; "))));
    }
    Ok(written)
}

fn run_app(args: &CommonArgs) -> Result<Vec<PathBuf>> {
    let r = Run::new(args)?;
    let app = r
        .sc
        .app
        .clone()
        .ok_or_else(|| Error::Config("the scenario has no app section".into()))?;
    match app {
        AppSpec::Counting { n_max, .. } => app_counting(r, n_max),
        AppSpec::CountingId { n_max, ids } => app_counting_id(r, n_max, ids),
        AppSpec::Observer { tolerance, .. } => app_observer(r, tolerance.unwrap_or(1e-3)),
        AppSpec::Dispatch { .. } => app_dispatch(r),
        AppSpec::Vdp { .. } => app_vdp(r),
    }
}

fn app_counting(mut r: Run, n_max: usize) -> Result<Vec<PathBuf>> {
    let k = r.gain(Some(1.6 * counting::critical_gain(n_max)))?;
    let prob = r.sc.counting_problem()?;
    let t_end = r.sc.simulation.t_span.1;
    let plan = counting::build_counting(&prob, k, t_end)?;
    let n0 = prob.ids.len();
    let x0 = match &r.sc.simulation.x0 {
        Some(_) => r.sc.simulation.initial_state(n0)?,
        None => {
            let mut rng = sample::rng(r.sc.simulation.seed);
            DVector::from_fn(n0, |_, _| rng.gen_range(0.0..=n_max as f64))
        }
    };
    let mut opts = r.sc.simulation.options();
    opts.t0 = 0.0;
    let runs = counting::run_counting(&plan, &x0, &opts)?;
    r.write(&format!("trajectory_counting_{}.csv", fmt_k(k)), &counting::segments_csv(&plan, &runs))?;
    r.note(format!("k = {k}, critical gain = {}", plan.k_star));
    match plan.settle_time {
        Some(t) => r.note(format!("guaranteed settling time after each event: {t:.4}")),
        None => r.note("k does not exceed the critical gain: no settling guarantee"),
    }
    let mut csv = String::from("segment,t_start,t_end,agents,final_min,final_max,rounded_all_equal_count\n");
    let mut all_ok = true;
    for (i, (seg, tr)) in plan.segments.iter().zip(&runs).enumerate() {
        let xf = tr.final_state();
        let ok = xf.iter().all(|v| v.round() as usize == seg.ids.len());
        all_ok &= ok;
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.6},{:.6},{ok}",
            i + 1,
            seg.t_start,
            seg.t_end,
            seg.ids.len(),
            xf.min(),
            xf.max()
        );
        r.note(format!(
            "segment {} [{}, {}]: {} agents, final estimates {:?}",
            i + 1,
            seg.t_start,
            seg.t_end,
            seg.ids.len(),
            xf.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>()
        ));
    }
    r.note(format!("every segment ends with the correct rounded count: {all_ok}"));
    r.write("report_app.csv", &csv)?;
    if r.plot() {
        let mut c = Chart::new(format!("agent count estimates, k = {k}"), "t", "estimate");
        for (seg, tr) in plan.segments.iter().zip(&runs) {
            for (j, id) in seg.ids.iter().enumerate() {
                let pts = tr.times().iter().copied().zip(tr.component(j)).collect();
                c.push(Series::line(format!("agent {id} ({:.0}-{:.0})", seg.t_start, seg.t_end), thin(pts, 1500)));
            }
        }
        r.write("plot_counting.svg", &c.to_svg())?;
    }
    r.finish()
}

fn app_counting_id(mut r: Run, n_max: usize, ids: Vec<usize>) -> Result<Vec<PathBuf>> {
    let k = r.gain(Some(1.6 * counting::critical_gain(n_max)))?;
    let sys = counting::build_counting_id_variant(&ids, r.sc.graph.build()?, n_max, k)?;
    let x0 = r.sc.simulation.initial_state(ids.len())?;
    let tr = simulate_network(&sys, &x0, &r.sc.simulation.options())?;
    r.write(&format!("trajectory_network_{}.csv", fmt_k(k)), &tr.to_csv())?;
    let expected = counting::id_fixed_point(&ids);
    let mut csv = String::from("agent,final,decoded,correct\n");
    for (i, v) in tr.final_state().iter().enumerate() {
        let decoded = counting::decode_ids(*v);
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        let _ = writeln!(
            csv,
            "{},{v:.6},{},{}",
            i + 1,
            decoded.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "),
            decoded == sorted
        );
    }
    r.note(format!("expected limit {expected}, attending {ids:?}"));
    r.write("report_app.csv", &csv)?;
    r.finish()
}

fn app_observer(mut r: Run, tol: f64) -> Result<Vec<PathBuf>> {
    let prob = r.sc.observer_problem()?;
    let n = prob.s.nrows();
    let big_n = prob.outputs.len();
    // x0 holds the initial estimates; the network runs on estimation errors.
    let estimates0 = r.sc.simulation.initial_state(n * big_n)?;
    let x0 = DVector::from_fn(n * big_n, |i, _| estimates0[i] - prob.omega0[i % n]);
    let t1 = r.sc.simulation.t_span.1;
    let k = match r.sc.simulation.k {
        Some(k) => k,
        None => {
            let search = observer::gain_search(&prob, &x0, t1, tol, 1.0, 16)?;
            for (k, e) in &search.history {
                r.note(format!("gain search: k = {k}, max error at t = {t1}: {e:.3e}"));
            }
            if !search.converged {
                r.note("gain search did not reach the tolerance");
            }
            search.k
        }
    };
    let obs = observer::build_observer(&prob, k)?;
    let errors = simulate_network(&obs.network, &x0, &r.sc.simulation.options())?;
    let est = obs.estimates(&errors);
    r.write(&format!("trajectory_network_{}.csv", fmt_k(k)), &est.to_csv())?;
    let bs = BlendedSystem::from_network(&obs.network)?;
    let jac = bs.jacobian(0.0, &vec![0.0; bs.dim()])?;
    let abscissa = crate::linalg::spectral_abscissa(&jac);
    r.note(format!("k = {k}"));
    r.note(format!("shared undetectable dimension p_o = {}", obs.network.decomposition().p_o));
    r.note(format!("blended spectral abscissa = {abscissa:.6}"));
    let mut csv = String::from("node,undetectable_dim,final_error\n");
    let xf = errors.final_state();
    for (i, nd) in obs.nodes.iter().enumerate() {
        let e = xf.rows(i * n, n).norm();
        let _ = writeln!(csv, "{},{},{e:.6e}", i + 1, nd.undetectable_dim());
        r.note(format!("node {}: undetectable dimension {}, final error {e:.3e}", i + 1, nd.undetectable_dim()));
    }
    r.write("report_app.csv", &csv)?;
    if r.plot() {
        let mut c = Chart::new("estimation error", "t", "norm").log_log();
        c.log_x = false;
        for i in 0..big_n {
            let pts = errors
                .times()
                .iter()
                .enumerate()
                .map(|(j, t)| (*t, DVector::from_column_slice(&errors.state(j)[i * n..(i + 1) * n]).norm()))
                .collect();
            c.push(Series::line(format!("node {}", i + 1), thin(pts, 2000)));
        }
        r.write("plot_observer.svg", &c.to_svg())?;
    }
    r.finish()
}

fn app_dispatch(mut r: Run) -> Result<Vec<PathBuf>> {
    let k = r.gain(Some(100.0))?;
    let prob = r.sc.dispatch_problem()?;
    let oracle = prob.solve();
    let sys = dispatch::build_dispatch(&prob, k)?;
    let x0 = r.sc.simulation.initial_state(prob.nodes.len())?;
    let tr = simulate_network(&sys, &x0, &r.sc.simulation.options())?;
    r.write(&format!("trajectory_network_{}.csv", fmt_k(k)), &tr.to_csv())?;
    let xf = tr.final_state();
    let mut csv = String::from("node,price,output,oracle_price,oracle_output\n");
    for (i, node) in prob.nodes.iter().enumerate() {
        let (lo, xo) = match &oracle {
            Ok(s) => (format!("{:.10}", s.lambda_star), format!("{:.10}", s.x_star[i])),
            Err(_) => (String::new(), String::new()),
        };
        let _ = writeln!(csv, "{},{:.10},{:.10},{lo},{xo}", i + 1, xf[i], node.theta(xf[i]));
    }
    match &oracle {
        Ok(s) => r.note(format!("oracle price {:.10}, outputs {:?}", s.lambda_star, s.x_star)),
        Err(e) => r.note(format!("oracle: {e}")),
    }
    r.note(format!("final prices {:?}", xf.as_slice()));
    r.write("report_app.csv", &csv)?;
    if r.plot() {
        r.write("plot_dispatch.svg", &trajectory_chart(&format!("prices, k = {k}"), &tr, 8).to_svg())?;
    }
    r.finish()
}

fn app_vdp(mut r: Run) -> Result<Vec<PathBuf>> {
    let k = r.gain(Some(100.0))?;
    let net = r.sc.vdp_network()?;
    let sys = vdp::build_vdp(&net, k)?;
    let big_n = net.c.len();
    let x_orig = r.sc.simulation.initial_state(2 * big_n)?;
    let opts = r.sc.simulation.options();
    let tr = simulate_network(&sys.network, &sys.from_original(&x_orig), &opts)?;
    let orig = sys.to_original(&tr)?;
    r.write(&format!("trajectory_network_{}.csv", fmt_k(k)), &orig.to_csv())?;
    let sync = sync_metric(&orig, &vec![DMatrix::identity(2, 2); big_n], 2)?;
    r.note(format!(
        "condition: mean(c w) = {:.6}, mean(w^2) = {:.6}, holds = {}",
        sys.condition.mean_cw, sys.condition.mean_w2, sys.condition.holds
    ));
    r.note(format!(
        "tail-window pairwise disagreement on [{:.3}, {:.3}]: {:.6e}",
        sync.window.0, sync.window.1, sync.disagreement
    ));
    let mut csv = String::from("key,value\n");
    let _ = writeln!(csv, "mean_cw,{:.12e}", sys.condition.mean_cw);
    let _ = writeln!(csv, "mean_w2,{:.12e}", sys.condition.mean_w2);
    let _ = writeln!(csv, "condition_holds,{}", sys.condition.holds);
    let _ = writeln!(csv, "disagreement,{:.12e}", sync.disagreement);
    if sys.condition.holds {
        let osc = net.projected_oscillator()?;
        let span = opts.t1 - opts.t0;
        let mut po = opts.clone();
        po.events.clear();
        let ptr = crate::simulate::integrate(
            |t, x, out| {
                osc.eval_into(t, x, out);
                Ok(())
            },
            &[2.0, 0.0],
            &po,
            crate::simulate::Frame::Blended,
            None,
        )?;
        let peaks = vdp::successive_peaks(&ptr, 0, opts.t0 + 0.5 * span);
        if let [.., a, b] = peaks.as_slice() {
            let rel = (b.1 - a.1).abs() / a.1.abs().max(1e-12);
            let _ = writeln!(csv, "reduced_peak_amplitude,{:.12e}", b.1);
            let _ = writeln!(csv, "reduced_peak_change,{rel:.6e}");
            r.note(format!("reduced oscillator: last peak {:.6}, relative change {rel:.3e}", b.1));
        }
    }
    r.write("report_app.csv", &csv)?;
    if r.plot() {
        r.write("plot_vdp.svg", &trajectory_chart(&format!("oscillators, k = {k}"), &orig, 2 * big_n).to_svg())?;
    }
    r.finish()
}
