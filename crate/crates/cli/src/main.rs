//! `spqkd`: command-line driver. Results go to stdout as CSV, diagnostics to
//! stderr; failures print a one-line JSON error and exit nonzero.

use std::fmt::Display;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use spqkd::protocol::session::key_digest;
use spqkd::protocol::{bench, run_session, TransportKind};
use spqkd::rates::{
    analytic_qber, analytic_sifted_rate, max_distance, sweep, DeltaPlane, DistanceMethod, DistanceOptions, SweepPoint,
    SweepSpec,
};
use spqkd::rng::{Substreams, SOURCE};
use spqkd::source::{estimate_g2, pn_distribution, simulate_hbt};
use spqkd::{Error, Result, Scenario};

#[derive(Parser)]
#[command(name = "spqkd", version, about = "BB84 single-photon link simulator and key-rate analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full pulse-level session and report counts, QBER and key material.
    Simulate(SimulateArgs),
    /// Evaluate the analytic QBER and key rates of a scenario.
    Analyze(AnalyzeArgs),
    /// Evaluate the analytic model over a grid of one scenario parameter.
    Sweep(SweepArgs),
    /// Maximum fiber length by one of the distance criteria.
    MaxDistance(MaxDistanceArgs),
    /// Measure CASCADE efficiency on random keys with i.i.d. errors.
    CascadeBench(CascadeBenchArgs),
    /// Simulate a pulsed HBT measurement and estimate g2(0).
    Hbt(HbtArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long, short)]
    scenario: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    InProcess,
    ByteStream,
}

impl From<TransportArg> for TransportKind {
    fn from(t: TransportArg) -> Self {
        match t {
            TransportArg::InProcess => TransportKind::InProcess,
            TransportArg::ByteStream => TransportKind::ByteStream,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlaneArg {
    Source,
    Alice,
}

impl From<PlaneArg> for DeltaPlane {
    fn from(p: PlaneArg) -> Self {
        match p {
            PlaneArg::Source => DeltaPlane::Source,
            PlaneArg::Alice => DeltaPlane::AliceOutput,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    EquivalentFlux,
    QberThreshold,
    GllpZero,
}

impl From<MethodArg> for DistanceMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::EquivalentFlux => DistanceMethod::EquivalentFlux,
            MethodArg::QberThreshold => DistanceMethod::QberThreshold,
            MethodArg::GllpZero => DistanceMethod::GllpZero,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum CouplingArg {
    /// The evaluated source shares the reference's collection-to-fiber coupling.
    Shared,
    /// The evaluated source is taken as perfectly coupled.
    Unit,
}

/// Accepts plain integers as well as exact scientific notation such as `1e7`.
fn parse_count<T: TryFrom<u64> + Clone + Send + Sync + 'static>(text: &str) -> std::result::Result<T, String> {
    let value = match text.parse::<u64>() {
        Ok(v) => v,
        Err(_) => {
            let x: f64 = text.parse().map_err(|_| format!("`{text}` is not a count"))?;
            if !(x >= 0.0 && x.fract() == 0.0 && x <= 9.007_199_254_740_992e15) {
                return Err(format!("`{text}` is not a non-negative whole number"));
            }
            x as u64
        }
    };
    T::try_from(value).map_err(|_| format!("`{text}` is out of range"))
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 10_000_000, value_parser = parse_count::<u64>)]
    pulses: u64,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "in-process")]
    transport: TransportArg,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Plane at which mu enters the multi-photon fraction.
    #[arg(long, value_enum, default_value = "source")]
    delta_plane: PlaneArg,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Scenario key to vary (or `mu`).
    #[arg(long)]
    param: String,
    #[arg(long, allow_negative_numbers = true)]
    from: f64,
    #[arg(long, allow_negative_numbers = true)]
    to: f64,
    #[arg(long)]
    steps: usize,
    /// Also run a Monte Carlo session of this many pulses per grid point.
    #[arg(long, value_parser = parse_count::<u64>)]
    mc: Option<u64>,
    #[arg(long, value_enum, default_value = "source")]
    delta_plane: PlaneArg,
}

#[derive(Args)]
struct MaxDistanceArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Reference operating point for the equivalent-flux method.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, value_enum, default_value = "shared")]
    coupling: CouplingArg,
    #[arg(long, value_enum, default_value = "source")]
    delta_plane: PlaneArg,
}

#[derive(Args)]
struct CascadeBenchArgs {
    #[arg(long, default_value_t = 10_000, value_parser = parse_count::<usize>)]
    n: usize,
    /// Error rates to test; repeat or comma-separate.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.02, 0.05, 0.10])]
    q: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "in-process")]
    transport: TransportArg,
}

#[derive(Args)]
struct HbtArgs {
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long, default_value_t = 0.4)]
    g2: f64,
    #[arg(long, default_value_t = 10_000_000, value_parser = parse_count::<usize>)]
    pulses: usize,
    #[arg(long, default_value_t = 0.4)]
    arm_efficiency: f64,
    #[arg(long, default_value_t = 10)]
    max_lag: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    if Path::new(arg).is_file() {
        return std::fs::read_to_string(arg)?.parse();
    }
    Scenario::bundled(arg).ok_or_else(|| {
        Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, format!("no scenario file or bundled scenario `{arg}`")))
    })
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_line(fields: &[String]) {
    println!("{}", fields.join(","));
}

const RATE_COLUMNS: &str =
    "label,param_value,mu,q_analytic,q_mc,r_sifted_hz,r_net_cascade_hz,delta,r_secure_gllp_hz,secure";

fn rate_row(p: &SweepPoint, param_value: Option<f64>) {
    let r = &p.report;
    csv_line(&[
        p.label.clone(),
        opt(param_value),
        p.mu.to_string(),
        r.q.to_string(),
        opt(p.q_mc),
        r.r_sifted_hz.to_string(),
        r.r_net_cascade_hz.to_string(),
        r.delta.to_string(),
        r.r_secure_gllp_hz.to_string(),
        r.secure.to_string(),
    ]);
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let s = load_scenario(&a.scenario.scenario)?;
    let seed = a.seed.unwrap_or(s.seed);
    let started = Instant::now();
    let r = run_session(&s, a.pulses, a.transport.into(), seed)?;
    eprintln!(
        "{}: {} pulses, {} detections, {} sifted bits in {:.2} s",
        s.label,
        r.pulses,
        r.detections,
        r.sifted_bits,
        started.elapsed().as_secs_f64()
    );
    if let Some(reason) = &r.aborted {
        eprintln!("no final key: {reason}");
    }
    let rec = r.reconciliation.as_ref();
    println!(
        "label,seed,pulses,detections,multi_click_pulses,sifted_bits,errors,q_mc,q_compared,q_analytic,\
         r_sifted_mc_hz,r_sifted_analytic_hz,leaked_bits,f_measured,residual_error,final_key_bits,keys_match,\
         alice_key_sha256,bob_key_sha256"
    );
    csv_line(&[
        r.label.clone(),
        seed.to_string(),
        r.pulses.to_string(),
        r.detections.to_string(),
        r.multi_click_pulses.to_string(),
        r.sifted_bits.to_string(),
        r.n_incorrect.to_string(),
        opt(r.qber),
        opt(r.qber_compared),
        analytic_qber(&s)?.to_string(),
        r.sifted_rate_hz.to_string(),
        analytic_sifted_rate(&s)?.to_string(),
        opt(rec.map(|x| x.leaked_bits)),
        opt(rec.map(|x| x.f_measured)),
        opt(rec.map(|x| x.residual_error)),
        r.final_key_len().to_string(),
        r.keys_match().to_string(),
        key_digest(&r.alice_final),
        key_digest(&r.bob_final),
    ]);
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let s = load_scenario(&a.scenario.scenario)?;
    let spec = SweepSpec {
        param: "mu".into(),
        from: s.source.mu(),
        to: s.source.mu(),
        steps: 1,
        mc_pulses: None,
        plane: a.delta_plane.into(),
    };
    let point = spqkd::rates::sweep::evaluate_point(&s, &spec, s.source.mu())?;
    println!("{RATE_COLUMNS}");
    rate_row(&point, None);
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let s = load_scenario(&a.scenario.scenario)?;
    let spec = SweepSpec {
        param: a.param,
        from: a.from,
        to: a.to,
        steps: a.steps,
        mc_pulses: a.mc,
        plane: a.delta_plane.into(),
    };
    let points = sweep(&s, &spec)?;
    println!("{RATE_COLUMNS}");
    for p in &points {
        rate_row(p, Some(p.param_value));
    }
    eprintln!("{}: {} grid points over {}", s.label, points.len(), spec.param);
    Ok(())
}

fn run_max_distance(a: MaxDistanceArgs) -> Result<()> {
    let s = load_scenario(&a.scenario.scenario)?;
    let reference = a.reference.as_deref().map(load_scenario).transpose()?;
    let opts = DistanceOptions {
        reference: reference.as_ref(),
        coupling_unshared: a.coupling == CouplingArg::Unit,
        plane: a.delta_plane.into(),
    };
    let method: DistanceMethod = a.method.into();
    let d = max_distance(&s, method, &opts)?;
    println!("label,method,reference,coupling,distance_km");
    csv_line(&[
        s.label.clone(),
        a.method.to_possible_value().expect("named").get_name().to_string(),
        reference.map(|r| r.label).unwrap_or_default(),
        a.coupling.to_possible_value().expect("named").get_name().to_string(),
        d.to_string(),
    ]);
    Ok(())
}

fn cascade_bench(a: CascadeBenchArgs) -> Result<()> {
    println!("q,n,trials,identical_fraction,residual_errors,mean_errors,mean_leaked_bits,mean_f_measured");
    for &q in &a.q {
        let started = Instant::now();
        let trials = bench(a.n, q, a.trials, a.seed, a.transport.into())?;
        let count = trials.len() as f64;
        let mean = |f: &dyn Fn(&spqkd::protocol::BenchTrial) -> f64| trials.iter().map(f).sum::<f64>() / count;
        csv_line(&[
            q.to_string(),
            a.n.to_string(),
            a.trials.to_string(),
            (trials.iter().filter(|t| t.identical).count() as f64 / count).to_string(),
            trials.iter().filter(|t| t.result.residual_error).count().to_string(),
            mean(&|t| t.errors as f64).to_string(),
            mean(&|t| t.result.leaked_bits as f64).to_string(),
            mean(&|t| t.result.f_measured).to_string(),
        ]);
        eprintln!("q = {q}: {} trials in {:.2} s", a.trials, started.elapsed().as_secs_f64());
    }
    Ok(())
}

fn hbt(a: HbtArgs) -> Result<()> {
    let dist = pn_distribution(a.mu, a.g2)?;
    if !(a.arm_efficiency > 0.0 && a.arm_efficiency <= 1.0) {
        return Err(Error::InvalidParameter(format!("arm efficiency must lie in (0, 1], got {}", a.arm_efficiency)));
    }
    let mut rng = Substreams::new(a.seed).stream(SOURCE);
    let (arm_a, arm_b) = simulate_hbt(&dist, a.pulses, a.arm_efficiency, &mut rng);
    let est = estimate_g2(&arm_a, &arm_b, a.max_lag)?;
    println!("mu,g2_model,arm_efficiency,pulses,max_lag,g2_estimate,std_error,zero_lag_coincidences,side_peak_mean");
    csv_line(&[
        a.mu.to_string(),
        a.g2.to_string(),
        a.arm_efficiency.to_string(),
        a.pulses.to_string(),
        a.max_lag.to_string(),
        est.g2.to_string(),
        est.std_error.to_string(),
        est.zero_lag.to_string(),
        est.side_mean.to_string(),
    ]);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Sweep(a) => run_sweep(a),
        Command::MaxDistance(a) => run_max_distance(a),
        Command::CascadeBench(a) => cascade_bench(a),
        Command::Hbt(a) => hbt(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
