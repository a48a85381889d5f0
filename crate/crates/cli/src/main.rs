use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acmp::experiment::{
    self, ChannelValue, ExperimentConfig, ExperimentError, GraphSource, ModelKind, Models,
    TwoClassSource,
};
use acmp::graph::TwoClassGraphSpec;
use acmp::Method;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

const SEED_ENV: &str = "ACMP_SEED";
const DEFAULT_OUT: &str = "acmp-out";

/// Allen-Cahn message passing simulations on graphs.
#[derive(Debug, Parser)]
#[command(name = "acmp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the configured model(s) and write trajectory, energy and cluster series.
    Simulate(SimulateArgs),
    /// Repeat one simulation over a grid of repulsion strengths.
    SweepBeta(SweepArgs),
    /// Generate a two-class random graph and write it as a bundle directory.
    GenGraph(GenGraphArgs),
    /// Check the bi-cluster flocking condition and compare it with a simulation.
    Flocking(FlockingArgs),
}

#[derive(Debug, Args)]
struct Source {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Embedded configuration: fig2, fig4, fig5, fig6, flocking or trapping.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory [default: config value, then `acmp-out`].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed [fallback: config, then $ACMP_SEED, then 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Comma-separated model list.
    #[arg(long, value_delimiter = ',')]
    model: Option<Vec<String>>,
    /// Diffusion strength, one value or one per channel.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Well depth, one value or one per channel.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    #[arg(long)]
    beta: Option<f64>,
    /// Graph bundle directory or edge list, replacing the configured graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Step size for fixed-step methods.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    sample_every: Option<f64>,
    /// Sup-norm above which a run is flagged as blown up.
    #[arg(long)]
    blowup_bound: Option<f64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
    /// Comma-separated beta grid [default: config `sweep.betas`].
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    /// Parallel simulations [default: available cores].
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct GenGraphArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    /// Class feature means as `low,high`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    means: Option<Vec<f64>>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct FlockingArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    /// Intra-group attraction.
    #[arg(long)]
    s: Option<f64>,
    /// Inter-group repulsion.
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    c_prime: Option<f64>,
    #[arg(long)]
    t_check: Option<f64>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Runtime { kind: &'static str, message: String },
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime {
                kind: e.kind(),
                message: e.to_string(),
            }
        }
    }
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, kind, message) = match self {
            Failure::Config(m) => (2, "config", m),
            Failure::Runtime { kind, message } => (3, kind, message),
        };
        eprintln!(
            "{}",
            json!({ "error": { "kind": kind, "message": message } })
        );
        ExitCode::from(code)
    }
}

fn config_failure(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn load_config(source: &Source, required: bool) -> Result<Option<ExperimentConfig>, Failure> {
    let cfg = match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_failure(format!("{}: {e}", path.display())))?;
            Some(ExperimentConfig::from_json(&text)?)
        }
        (None, Some(name)) => Some(experiment::preset(name)?),
        (None, None) if required => {
            return Err(config_failure("one of --config or --preset is required"))
        }
        (None, None) => None,
    };
    Ok(cfg)
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| config_failure(format!("{SEED_ENV}={v:?} is not a seed: {e}"))),
        Err(_) => Ok(None),
    }
}

/// Flag, then config, then environment, then the library default.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, Failure> {
    Ok(match flag.or(config) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(experiment::DEFAULT_SEED),
    })
}

fn channel_value(v: &[f64]) -> ChannelValue {
    match v {
        [x] => ChannelValue::Scalar(*x),
        _ => ChannelValue::PerChannel(v.to_vec()),
    }
}

fn parse_method(s: &str) -> Result<Method, Failure> {
    serde_json::from_value(json!(s)).map_err(|_| {
        config_failure(format!(
            "unknown method `{s}` (euler, midpoint, rk4, dopri5)"
        ))
    })
}

fn apply_source(cfg: &mut ExperimentConfig, source: &Source) -> Result<PathBuf, Failure> {
    cfg.seed = Some(resolve_seed(source.seed, cfg.seed)?);
    let out = source
        .out
        .clone()
        .or_else(|| cfg.outputs.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    cfg.outputs.dir = Some(out.clone());
    Ok(out)
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<(), Failure> {
    if let Some(models) = &o.model {
        let list = models
            .iter()
            .map(|m| {
                ModelKind::parse(m).ok_or_else(|| config_failure(format!("unknown model `{m}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        cfg.model = match list.as_slice() {
            [one] => Models::One(*one),
            _ => Models::Many(list),
        };
    }
    if let Some(a) = &o.alpha {
        cfg.params.alpha = channel_value(a);
    }
    if let Some(d) = &o.delta {
        cfg.params.delta = channel_value(d);
    }
    if let Some(b) = o.beta {
        cfg.params.beta = b;
    }
    if let Some(g) = &o.graph {
        cfg.graph = Some(GraphSource::File(g.clone()));
    }
    let s = &mut cfg.solver;
    if let Some(m) = &o.method {
        s.method = parse_method(m)?;
    }
    if let Some(t) = o.t_end {
        s.t_end = t;
    }
    if let Some(h) = o.step {
        s.step = h;
    }
    if let Some(a) = o.atol {
        s.atol = a;
    }
    if let Some(r) = o.rtol {
        s.rtol = r;
    }
    if let Some(e) = o.sample_every {
        s.sample_every = Some(e);
    }
    if let Some(b) = o.blowup_bound {
        s.blowup_bound = Some(b);
    }
    Ok(())
}

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serializes")
    );
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.source, true)?.expect("required");
    let out = apply_source(&mut cfg, &args.source)?;
    apply_overrides(&mut cfg, &args.overrides)?;
    cfg.validate()?;
    let report = experiment::simulate(&cfg)?;
    experiment::write_simulation(&report, &out)?;
    let runs: Vec<_> = report.runs.iter().map(|r| &r.summary).collect();
    print_json(&json!({
        "out": out,
        "seed": report.config.seed(),
        "blow_up": report.runs.iter().any(|r| r.trajectory.blew_up()),
        "runs": runs,
    }));
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.source, true)?.expect("required");
    let out = apply_source(&mut cfg, &args.source)?;
    apply_overrides(&mut cfg, &args.overrides)?;
    cfg.validate()?;
    let betas = match (&args.betas, &cfg.sweep) {
        (Some(b), _) => b.clone(),
        (None, Some(s)) => s.betas.clone(),
        (None, None) => {
            return Err(config_failure(
                "no beta grid: pass --betas or set sweep.betas",
            ))
        }
    };
    let jobs = match args.jobs {
        Some(0) => return Err(config_failure("--jobs must be positive")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let rows = experiment::sweep_beta(&cfg, &betas, jobs)?;
    let path = experiment::write_sweep(&rows, &out)?;
    let run_json = json!({ "config": cfg, "seed": cfg.seed(), "betas": betas, "rows": rows });
    write_json(&out.join("run.json"), &run_json)?;
    print_json(&json!({ "out": path, "seed": cfg.seed(), "rows": rows }));
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    std::fs::write(path, text).map_err(|e| Failure::Runtime {
        kind: "io",
        message: format!("{}: {e}", path.display()),
    })
}

fn gen_graph(args: &GenGraphArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.source, false)?;
    let mut tc = match cfg.as_ref().and_then(|c| c.graph.clone()) {
        Some(GraphSource::TwoClass(tc)) => tc,
        Some(GraphSource::File(_)) => {
            return Err(config_failure(
                "gen-graph needs an inline two_class graph spec",
            ))
        }
        None => TwoClassSource::synthetic(),
    };
    if let Some(n) = args.n {
        tc.n = n;
    }
    if let Some(p) = args.p_in {
        tc.p_in = p;
    }
    if let Some(p) = args.p_out {
        tc.p_out = p;
    }
    if let Some(m) = &args.means {
        tc.means = [m[0], m[1]];
    }
    if let Some(s) = args.sigma {
        tc.sigma = s;
    }
    if let Some(d) = args.dim {
        tc.dim = d;
    }
    let config_seed = cfg.as_ref().and_then(|c| c.seed);
    let seed = match (args.source.seed, tc.seed) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => resolve_seed(None, config_seed)?,
    };
    let spec: TwoClassGraphSpec = tc.to_spec(seed);
    spec.validate().map_err(|e| config_failure(e.to_string()))?;
    let out = args
        .source
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.outputs.dir))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let header = experiment::gen_graph(&spec, &out)?;
    print_json(&json!({ "out": out, "header": header }));
    Ok(())
}

fn flocking(args: &FlockingArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.source, true)?.expect("required");
    let out = apply_source(&mut cfg, &args.source)?;
    apply_overrides(&mut cfg, &args.overrides)?;
    let f = cfg
        .flocking
        .as_mut()
        .ok_or_else(|| config_failure("the configuration has no `flocking` section"))?;
    if let Some(v) = args.n1 {
        f.n1 = v;
    }
    if let Some(v) = args.n2 {
        f.n2 = v;
    }
    if let Some(v) = args.s {
        f.s = v;
    }
    if let Some(v) = args.d {
        f.d = v;
    }
    if let Some(v) = args.eta {
        f.eta = v;
    }
    if let Some(v) = args.c_prime {
        f.c_prime = v;
    }
    if let Some(v) = args.t_check {
        f.t_check = Some(v);
    }
    cfg.validate()?;
    let report = experiment::flocking(&cfg)?;
    experiment::write_flocking(&report, &out)?;
    print_json(&report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return Failure::Config(e.render().to_string().trim().to_owned()).report(),
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::SweepBeta(a) => sweep(a),
        Command::GenGraph(a) => gen_graph(a),
        Command::Flocking(a) => flocking(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
