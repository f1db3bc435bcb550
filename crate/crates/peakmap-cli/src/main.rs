//! Command-line surface over the peakmap library: forward peak maps, peak
//! inversion, trajectory simulation, the inverse-method benchmark, posterior
//! fitting, forecasting, and surveillance-derived prior moments.
//!
//! Outputs go to `--out` when given, stdout otherwise; `--json` switches the
//! machine-readable encoding on, plot-ready CSV or aligned text stay the
//! default. Exit codes: 0 success, 1 domain errors (infeasible inputs, bad
//! data files), 2 usage errors (malformed flags, configs, environment).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use peakmap::bench::{run_benchmark, BenchConfig};
use peakmap::dbssm::{
    fit, fit_z_prior, forecast, DbssmConfig, PosteriorSamples, ZInterpretation,
};
use peakmap::ingest::{ili_plus, peak_history, read_surveillance_csv, read_weekly_csv};
use peakmap::invert::{incidence_to_params, prevalence_to_params, InverseMethod};
use peakmap::peak::{peak_incidence, peak_prevalence, PeakIncidence, PeakPrevalence};
use peakmap::sir::{simulate, simulate_discrete, InitialConditions, SirParams, Trajectory};

#[derive(Parser)]
#[command(
    name = "peakmap",
    version,
    about = "SIR peak mapping, peak inversion, and influenza season forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Map rates and an initial state to their peak summaries.
    Forward(ForwardArgs),
    /// Recover rates from an observed peak pair.
    Invert(InvertArgs),
    /// Emit a trajectory as plot-ready CSV.
    Simulate(SimulateArgs),
    /// Compare the four incidence inverse methods on sampled peaks.
    Bench(BenchArgs),
    /// Fit the state-space model to a weekly series.
    Fit(FitArgs),
    /// Posterior-predictive forecast from stored fit output.
    Forecast(ForecastArgs),
    /// Peak-pair prior moments from historical surveillance seasons.
    Zprior(ZpriorArgs),
}

/// Initial compartment proportions, shared by the deterministic subcommands.
#[derive(Args)]
struct InitArgs {
    /// Initial susceptible proportion.
    #[arg(long, default_value_t = 0.9)]
    s0: f64,
    /// Initial infectious proportion.
    #[arg(long, default_value_t = 0.05)]
    i0: f64,
    /// Initial removed proportion.
    #[arg(long, default_value_t = 0.05)]
    r0: f64,
}

impl InitArgs {
    fn build(&self) -> Result<InitialConditions, Failure> {
        Ok(InitialConditions::new(self.s0, self.i0, self.r0)?)
    }
}

#[derive(Args)]
struct ForwardArgs {
    /// Transmission rate.
    #[arg(long)]
    beta: f64,
    /// Recovery rate.
    #[arg(long)]
    gamma: f64,
    #[command(flatten)]
    init: InitArgs,
    /// Emit machine-readable JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Write the output to this path instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InvertArgs {
    /// Observed peak weekly incidence value (with --pit).
    #[arg(long)]
    piv: Option<f64>,
    /// Observed peak incidence week (with --piv).
    #[arg(long)]
    pit: Option<f64>,
    /// Observed peak prevalence value (with --ppt).
    #[arg(long)]
    ppv: Option<f64>,
    /// Observed peak prevalence time in weeks (with --ppv).
    #[arg(long)]
    ppt: Option<f64>,
    /// Inverse method for incidence peaks: compute-integral, taylor,
    /// single-ode, or full-ode.
    #[arg(long, default_value = "compute-integral")]
    method: InverseMethod,
    #[command(flatten)]
    init: InitArgs,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    gamma: f64,
    #[command(flatten)]
    init: InitArgs,
    /// Horizon in weeks.
    #[arg(long, default_value_t = 35.0)]
    horizon: f64,
    /// Integration step in weeks.
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    /// Use the discrete weekly recursion instead of the continuous system.
    #[arg(long)]
    discrete: bool,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Replicate count (overrides the config file).
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Benchmark configuration, TOML or JSON by extension.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Weekly series CSV with a (t,y) header, t starting at 1.
    #[arg(long)]
    data: PathBuf,
    /// Assimilate only the first N weeks (default: the whole file).
    #[arg(long)]
    t_prime: Option<usize>,
    /// Model configuration, TOML or JSON by extension.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sampler seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inverse method override for the peak-to-rates map.
    #[arg(long)]
    method: Option<InverseMethod>,
    /// Read the peak pair as a prevalence peak instead of an incidence peak.
    #[arg(long)]
    prevalence_prior: bool,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    thinning: Option<u64>,
    /// Artifact prefix: writes <out>_draws.csv, <out>_states.csv, and
    /// <out>_diagnostics.json. The fit summary always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ForecastArgs {
    /// Retained-draw CSV produced by `fit`.
    #[arg(long)]
    draws: PathBuf,
    /// Latent-state CSV produced by `fit`.
    #[arg(long)]
    states: PathBuf,
    /// Forecast through this absolute week.
    #[arg(long, default_value_t = 35)]
    horizon: usize,
    /// Predictive-noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ZpriorArgs {
    /// Surveillance CSV with a (season,epi_week,ili,flu_pos) header.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures carry the exit class: domain errors from the library or data
/// files exit 1, malformed invocations exit 2.
enum Failure {
    Domain(String),
    Usage(String),
}

impl From<peakmap::Error> for Failure {
    fn from(e: peakmap::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Domain(format!("serialization failed: {e}"))
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// PEAKMAP_THREADS caps the worker pool used by the benchmark and the
/// sampler's chains.
fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("PEAKMAP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| usage(format!("PEAKMAP_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Domain(format!("worker pool setup failed: {e}")))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Forward(args) => run_forward(&args),
        Command::Invert(args) => run_invert(&args),
        Command::Simulate(args) => run_simulate(&args),
        Command::Bench(args) => run_bench(&args),
        Command::Fit(args) => run_fit(&args),
        Command::Forecast(args) => run_forecast(&args),
        Command::Zprior(args) => run_zprior(&args),
    }
}

/// Write `content` to the `--out` path, or print it.
fn emit(out: Option<&Path>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn to_json_line<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Parse a config file as TOML, or JSON when the extension says so.
fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&raw).map_err(|e| format!("{e}"))
    } else {
        toml::from_str(&raw).map_err(|e| format!("{e}"))
    };
    parsed.map_err(|e| usage(format!("malformed config {}: {e}", path.display())))
}

#[derive(Serialize)]
struct ForwardOutput {
    beta: f64,
    gamma: f64,
    ppv: f64,
    ppt: f64,
    piv: f64,
    pit: f64,
    peak_week: u32,
}

fn run_forward(args: &ForwardArgs) -> Result<(), Failure> {
    let init = args.init.build()?;
    let params = SirParams::new(args.beta, args.gamma)?;
    let prevalence = peak_prevalence(&init, &params)?;
    let incidence = peak_incidence(&init, &params)?;
    let output = ForwardOutput {
        beta: params.beta,
        gamma: params.gamma,
        ppv: prevalence.ppv,
        ppt: prevalence.ppt,
        piv: incidence.piv,
        pit: incidence.pit,
        peak_week: incidence.pit_week(),
    };
    let content = if args.json {
        to_json_line(&output)?
    } else {
        format!(
            "PPV {:.6}  (peak prevalence)\n\
             PPT {:.4}  (weeks)\n\
             PIV {:.6}  (peak weekly incidence)\n\
             PIT {:.4}  (weeks; report week {})\n",
            output.ppv, output.ppt, output.piv, output.pit, output.peak_week
        )
    };
    emit(args.out.as_deref(), &content)
}

#[derive(Serialize)]
struct InvertOutput {
    beta: f64,
    gamma: f64,
    method: String,
    residual_piv: f64,
    residual_pit: f64,
    iterations: u32,
}

fn run_invert(args: &InvertArgs) -> Result<(), Failure> {
    let init = args.init.build()?;
    let incidence_pair = (args.piv, args.pit);
    let prevalence_pair = (args.ppv, args.ppt);
    let content = match (incidence_pair, prevalence_pair) {
        ((Some(piv), Some(pit)), (None, None)) => {
            let res = incidence_to_params(&PeakIncidence::observed(piv, pit), &init, args.method)?;
            let output = InvertOutput {
                beta: res.params.beta,
                gamma: res.params.gamma,
                method: args.method.token().to_string(),
                residual_piv: res.residual_piv,
                residual_pit: res.residual_pit,
                iterations: res.iterations,
            };
            if args.json {
                to_json_line(&output)?
            } else {
                format!(
                    "beta  {:.6}\ngamma {:.6}\nmethod {}\nresiduals ({:.3e}, {:.3e}) in {} iterations\n",
                    output.beta,
                    output.gamma,
                    output.method,
                    output.residual_piv,
                    output.residual_pit,
                    output.iterations
                )
            }
        }
        ((None, None), (Some(ppv), Some(ppt))) => {
            let params = prevalence_to_params(&PeakPrevalence::observed(ppv, ppt), &init)?;
            let output = InvertOutput {
                beta: params.beta,
                gamma: params.gamma,
                method: "prevalence-closed-form".to_string(),
                residual_piv: 0.0,
                residual_pit: 0.0,
                iterations: 0,
            };
            if args.json {
                to_json_line(&output)?
            } else {
                format!("beta  {:.6}\ngamma {:.6}\nmethod {}\n", output.beta, output.gamma, output.method)
            }
        }
        _ => {
            return Err(usage(
                "provide exactly one peak pair: --piv with --pit, or --ppv with --ppt",
            ))
        }
    };
    emit(args.out.as_deref(), &content)
}

#[derive(Serialize)]
struct TrajectoryOutput {
    times: Vec<f64>,
    s: Vec<f64>,
    i: Vec<f64>,
    r: Vec<f64>,
    incidence: Vec<f64>,
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,s,i,r,incidence\n");
    for (k, st) in traj.states.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            traj.times[k], st.s, st.i, st.r, traj.incidence[k]
        );
    }
    out
}

fn run_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let init = args.init.build()?;
    let params = SirParams::new(args.beta, args.gamma)?;
    let traj = if args.discrete {
        let weeks = args.horizon.round();
        if weeks < 1.0 || (weeks - args.horizon).abs() > 1e-9 {
            return Err(usage("--discrete needs a whole-week horizon of at least 1"));
        }
        simulate_discrete(&init, &params, weeks as usize)?
    } else {
        simulate(&init, &params, args.horizon, args.dt)?
    };
    let content = if args.json {
        let (mut s, mut i, mut r) = (Vec::new(), Vec::new(), Vec::new());
        for st in &traj.states {
            s.push(st.s);
            i.push(st.i);
            r.push(st.r);
        }
        to_json_line(&TrajectoryOutput {
            times: traj.times.clone(),
            s,
            i,
            r,
            incidence: traj.incidence.clone(),
        })?
    } else {
        trajectory_csv(&traj)
    };
    emit(args.out.as_deref(), &content)
}

fn run_bench(args: &BenchArgs) -> Result<(), Failure> {
    let mut config: BenchConfig = match &args.config {
        Some(path) => read_config(path)?,
        None => BenchConfig::default(),
    };
    if let Some(reps) = args.reps {
        config.n_reps = reps;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let report = run_benchmark(&config)?;
    let content = if args.json { to_json_line(&report)? } else { report.table() };
    emit(args.out.as_deref(), &content)
}

#[derive(Serialize)]
struct ParamSummary {
    name: String,
    median: f64,
    q025: f64,
    q975: f64,
}

#[derive(Serialize)]
struct FitSummary {
    t_prime: usize,
    retained_draws: usize,
    params: Vec<ParamSummary>,
    split_rhat: Vec<(String, f64)>,
    warnings: Vec<String>,
}

/// Linear-interpolation quantile of an unsorted sample.
fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(samples: &PosteriorSamples) -> FitSummary {
    let scalars: [(&str, fn(&peakmap::dbssm::PosteriorDraw) -> f64); 6] = [
        ("beta", |d| d.beta),
        ("gamma", |d| d.gamma),
        ("lambda", |d| d.lambda),
        ("iota", |d| d.iota),
        ("piv", |d| d.path.z[0]),
        ("pit", |d| d.path.z[1]),
    ];
    let params = scalars
        .into_iter()
        .map(|(name, pick)| {
            let series: Vec<f64> = samples.draws.iter().map(pick).collect();
            ParamSummary {
                name: name.to_string(),
                median: quantile(&series, 0.5),
                q025: quantile(&series, 0.025),
                q975: quantile(&series, 0.975),
            }
        })
        .collect();
    FitSummary {
        t_prime: samples.t_prime,
        retained_draws: samples.draws.len(),
        params,
        split_rhat: samples.diagnostics.split_rhat.clone(),
        warnings: samples.diagnostics.warnings.clone(),
    }
}

fn run_fit(args: &FitArgs) -> Result<(), Failure> {
    let y = read_weekly_csv(&args.data)?;
    let t_prime = args.t_prime.unwrap_or(y.len());
    if !(3..=y.len()).contains(&t_prime) {
        return Err(usage(format!(
            "--t-prime must lie in [3, {}] for this series, got {t_prime}",
            y.len()
        )));
    }
    let mut config: DbssmConfig = match &args.config {
        Some(path) => read_config(path)?,
        None => DbssmConfig::default(),
    };
    if let Some(method) = args.method {
        config.inverse_method = method;
    }
    if args.prevalence_prior {
        config.z_interpretation = ZInterpretation::Prevalence;
    }
    if let Some(chains) = args.chains {
        config.mcmc.chains = chains;
    }
    if let Some(iterations) = args.iterations {
        config.mcmc.iterations = iterations;
    }
    if let Some(burn_in) = args.burn_in {
        config.mcmc.burn_in = burn_in;
    }
    if let Some(thinning) = args.thinning {
        config.mcmc.thinning = thinning;
    }

    let samples = fit(&y[..t_prime], &config, args.seed)?;

    if let Some(prefix) = &args.out {
        let base = prefix.as_os_str().to_string_lossy();
        samples.write_draws_csv(format!("{base}_draws.csv"))?;
        samples.write_states_csv(format!("{base}_states.csv"))?;
        samples.write_diagnostics_json(format!("{base}_diagnostics.json"))?;
    }

    let summary = summarize(&samples);
    if args.json {
        print!("{}", to_json_line(&summary)?);
    } else {
        println!("assimilated {} weeks, {} retained draws", summary.t_prime, summary.retained_draws);
        for p in &summary.params {
            println!("{:<8} median {:>12.6}  95% CI [{:.6}, {:.6}]", p.name, p.median, p.q025, p.q975);
        }
        for (name, rhat) in &summary.split_rhat {
            println!("split R-hat {name:<10} {rhat:.4}");
        }
        for w in &summary.warnings {
            println!("warning: {w}");
        }
    }
    Ok(())
}

fn run_forecast(args: &ForecastArgs) -> Result<(), Failure> {
    let samples = PosteriorSamples::read_csv(&args.draws, &args.states)?;
    let fc = forecast(&samples, args.horizon, args.seed)?;
    let content = if args.json {
        to_json_line(&fc)?
    } else {
        let mut buf = Vec::new();
        fc.write_csv(&mut buf)?;
        String::from_utf8(buf).expect("forecast CSV is UTF-8")
    };
    emit(args.out.as_deref(), &content)
}

#[derive(Serialize)]
struct ZpriorOutput {
    seasons: usize,
    mu: [f64; 2],
    sigma: [[f64; 2]; 2],
    lo: [f64; 2],
    hi: [f64; 2],
    inflated: bool,
}

fn run_zprior(args: &ZpriorArgs) -> Result<(), Failure> {
    let series = read_surveillance_csv(&args.data)?;
    let mut seasons = Vec::with_capacity(series.len());
    for s in &series {
        let season = ili_plus(s)?;
        for w in &season.warnings {
            eprintln!("warning: {w}");
        }
        seasons.push(season);
    }
    let pairs: Vec<(f64, f64)> =
        peak_history(&seasons).into_iter().map(|(v, w)| (v, f64::from(w))).collect();
    let (prior, inflated) = fit_z_prior(&pairs)?;
    if inflated {
        eprintln!("warning: peak history is degenerate; covariance diagonal inflated");
    }
    let output = ZpriorOutput {
        seasons: seasons.len(),
        mu: prior.mu,
        sigma: prior.sigma,
        lo: prior.lo,
        hi: prior.hi,
        inflated,
    };
    let content = if args.json {
        to_json_line(&output)?
    } else {
        format!(
            "seasons {}\nmu    ({:.6}, {:.4})\nsigma [[{:.3e}, {:.3e}], [{:.3e}, {:.3e}]]\nbox   value ({}, {}), week ({}, {})\n",
            output.seasons,
            output.mu[0],
            output.mu[1],
            output.sigma[0][0],
            output.sigma[0][1],
            output.sigma[1][0],
            output.sigma[1][1],
            output.lo[0],
            output.hi[0],
            output.lo[1],
            output.hi[1]
        )
    };
    emit(args.out.as_deref(), &content)
}
