use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{flocking_partition_coupling, AttentionParams, CouplingModel};
use crate::diagnostics::{
    bicluster_check, corner_fraction, cross_energy_bound, dirichlet_energy, energy_series,
    flocking_condition, m2_bound, moments, sign_clusters, write_energy_csv, Bipartition,
    CrossEnergyBound, EnergyReport, FlockingCondition, FlockingVerdict,
};
use crate::dynamics::{rhs_gradient_flow, AcmpParams, AcmpSystem};
use crate::graph::io::{read_bundle, read_edge_list, write_bundle, GraphHeader};
use crate::graph::{generate_two_class_graph, Graph, SignedMatrix, TwoClassGraphSpec};
use crate::ode::{integrate, Outcome, SolverSpec, SolverStats, Trajectory};
use crate::state::FeatureState;

use super::output::{format_clusters_csv, format_sweep_csv, format_trajectory_csv};
use super::{
    config_err, ExperimentConfig, ExperimentError, GraphSource, InitSpec, ModelKind, INIT_STREAM,
};

/// Tolerance used for the near-corner fraction in run summaries.
const CORNER_TOL: f64 = 0.2;

/// A graph with whatever came alongside it.
#[derive(Debug, Clone)]
pub struct ResolvedGraph {
    pub graph: Graph,
    pub features: Option<FeatureState>,
    pub spec: Option<TwoClassGraphSpec>,
}

/// Loads or generates the configured graph. Without a graph source, a
/// flocking config yields the complete graph on both groups, labelled by
/// group.
pub fn resolve_graph(cfg: &ExperimentConfig) -> Result<ResolvedGraph, ExperimentError> {
    match &cfg.graph {
        Some(GraphSource::TwoClass(tc)) => {
            let spec = tc.to_spec(cfg.seed());
            let (graph, x) = generate_two_class_graph(&spec)?;
            Ok(ResolvedGraph {
                graph,
                features: Some(x),
                spec: Some(spec),
            })
        }
        Some(GraphSource::File(path)) if path.is_dir() => {
            let bundle = read_bundle(path)?;
            Ok(ResolvedGraph {
                graph: bundle.graph,
                features: bundle.features,
                spec: bundle.header.spec,
            })
        }
        Some(GraphSource::File(path)) => Ok(ResolvedGraph {
            graph: read_edge_list(path, None)?,
            features: None,
            spec: None,
        }),
        None => match &cfg.flocking {
            Some(f) => {
                let labels = (0..f.n1 + f.n2).map(|i| u32::from(i >= f.n1)).collect();
                Ok(ResolvedGraph {
                    graph: Graph::complete(f.n1 + f.n2)?.with_labels(labels)?,
                    features: None,
                    spec: None,
                })
            }
            None => Err(config_err("no graph source given")),
        },
    }
}

fn init_dim(
    cfg: &ExperimentConfig,
    explicit: Option<usize>,
    features: Option<&FeatureState>,
) -> usize {
    explicit
        .or(features.map(FeatureState::dim))
        .or(cfg.flocking.as_ref().map(|f| f.dim))
        .unwrap_or(1)
}

/// Initial features for `cfg.init`, drawn from the run seed on
/// [`INIT_STREAM`].
pub fn initial_state(
    cfg: &ExperimentConfig,
    resolved: &ResolvedGraph,
) -> Result<FeatureState, ExperimentError> {
    let n = resolved.graph.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    rng.set_stream(INIT_STREAM);
    let features = resolved.features.as_ref();
    let shape_err = |e: crate::state::StateError| config_err(e.to_string());
    match &cfg.init {
        InitSpec::Graph => features.cloned().ok_or_else(|| {
            config_err("init kind `graph` needs a graph source with stored features")
        }),
        InitSpec::Uniform { low, high, dim } => {
            let d = init_dim(cfg, *dim, features);
            let data = (0..n * d).map(|_| rng.random_range(*low..*high)).collect();
            FeatureState::from_vec(n, d, data).map_err(shape_err)
        }
        InitSpec::Wells { margin, dim } => {
            let d = init_dim(cfg, *dim, features);
            let data = (0..n * d)
                .map(|_| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * (1.0 - margin * rng.random::<f64>())
                })
                .collect();
            FeatureState::from_vec(n, d, data).map_err(shape_err)
        }
        InitSpec::Groups {
            centers,
            spread,
            dim,
        } => {
            let d = init_dim(cfg, *dim, features);
            let labels = resolved
                .graph
                .labels()
                .ok_or_else(|| config_err("init kind `groups` needs a labelled graph"))?;
            let mut data = Vec::with_capacity(n * d);
            for &l in labels {
                let c = *centers
                    .get(l as usize)
                    .ok_or_else(|| config_err(format!("label {l} has no group center")))?;
                for _ in 0..d {
                    data.push(c + spread * (2.0 * rng.random::<f64>() - 1.0));
                }
            }
            FeatureState::from_vec(n, d, data).map_err(shape_err)
        }
    }
}

/// ACMP parameters for `kind`; `None` for the plain gradient flow.
pub fn model_params(
    cfg: &ExperimentConfig,
    kind: ModelKind,
    dim: usize,
    beta: f64,
) -> Result<Option<AcmpParams>, ExperimentError> {
    let p = &cfg.params;
    let alpha = p.alpha.resolve("alpha", dim)?;
    let delta = p.delta.resolve("delta", dim)?;
    let params = match kind {
        ModelKind::Grand => AcmpParams::new(alpha, vec![0.0; dim], CouplingModel::gcn(0.0)?),
        ModelKind::AcmpGcn => AcmpParams::new(alpha, delta, CouplingModel::gcn(beta)?),
        ModelKind::AcmpAttn => {
            let seed = p.attention.seed.unwrap_or(cfg.seed());
            let attn = AttentionParams::random(dim, p.attention.proj_dim, seed)?;
            AcmpParams::new(alpha, delta, CouplingModel::attention(attn, beta)?)
        }
        ModelKind::AcmpTrap => {
            AcmpParams::new(alpha, delta, CouplingModel::gcn(beta)?).with_trapping(true)
        }
        ModelKind::GradientFlow => return Ok(None),
    };
    let params = if kind == ModelKind::Grand {
        params
    } else {
        params.with_potential(p.potential.clone())
    };
    params.validate(dim)?;
    Ok(Some(params))
}

/// Integrates one model from `x0`.
pub fn run_model(
    g: &Graph,
    x0: &FeatureState,
    params: Option<&AcmpParams>,
    solver: &SolverSpec,
) -> Result<Trajectory, ExperimentError> {
    let traj = match params {
        Some(p) => {
            let mut sys = AcmpSystem::new(g, p.clone())?;
            integrate(|x, out| sys.eval(x, out), x0, solver)?
        }
        None => integrate(
            |x, out: &mut FeatureState| {
                let dx = rhs_gradient_flow(g, x)?;
                out.as_mut_slice().copy_from_slice(dx.as_slice());
                Ok::<_, crate::dynamics::DynamicsError>(())
            },
            x0,
            solver,
        )?,
    };
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub model: ModelKind,
    pub outcome: Outcome,
    pub stats: SolverStats,
    pub samples: usize,
    pub final_time: f64,
    pub max_abs: f64,
    pub initial_dirichlet: f64,
    pub final_dirichlet: f64,
    pub cluster_count: usize,
    /// Fraction of nodes within 0.2 (sup-norm) of a `{±1}^d` corner.
    pub corner_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct ModelRun {
    pub model: ModelKind,
    pub params: Option<AcmpParams>,
    pub trajectory: Trajectory,
    pub energy: Vec<EnergyReport>,
    pub summary: RunSummary,
    /// Present when the config carries flocking thresholds and the graph has
    /// two labelled groups.
    pub flocking: Option<FlockingVerdict>,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    /// The configuration with the seed resolved.
    pub config: ExperimentConfig,
    pub graph: Graph,
    pub runs: Vec<ModelRun>,
}

impl SimulationReport {
    pub fn run(&self, model: ModelKind) -> Option<&ModelRun> {
        self.runs.iter().find(|r| r.model == model)
    }
}

fn summarize(
    g: &Graph,
    model: ModelKind,
    traj: &Trajectory,
    energy: &[EnergyReport],
) -> Result<RunSummary, ExperimentError> {
    let last = traj.final_state();
    Ok(RunSummary {
        model,
        outcome: traj.outcome,
        stats: traj.stats,
        samples: traj.len(),
        final_time: traj.final_time(),
        max_abs: traj.max_abs(),
        initial_dirichlet: energy.first().map_or(0.0, |e| e.dirichlet),
        final_dirichlet: dirichlet_energy(g, last)?,
        cluster_count: sign_clusters(last)?.count,
        corner_fraction: corner_fraction(last, CORNER_TOL),
    })
}

/// Runs every configured model from the same initial state.
pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulationReport, ExperimentError> {
    cfg.validate()?;
    let mut config = cfg.clone();
    config.seed = Some(cfg.seed());
    let resolved = resolve_graph(&config)?;
    let g = &resolved.graph;
    let x0 = initial_state(&config, &resolved)?;
    let partition = g.labels().and_then(|l| Bipartition::from_labels(l).ok());

    let mut runs = Vec::new();
    for model in config.model.list() {
        let params = model_params(&config, model, x0.dim(), config.params.beta)?;
        let trajectory = run_model(g, &x0, params.as_ref(), &config.solver)?;
        let energy = energy_series(&trajectory, g, params.as_ref())?;
        let summary = summarize(g, model, &trajectory, &energy)?;
        let flocking = match (&config.flocking, &partition) {
            (Some(f), Some(part)) if part.require_both().is_ok() => Some(bicluster_check(
                &trajectory,
                part,
                f.c_prime,
                f.t_check(config.solver.t_end),
            )?),
            _ => None,
        };
        runs.push(ModelRun {
            model,
            params,
            trajectory,
            energy,
            summary,
            flocking,
        });
    }
    Ok(SimulationReport {
        config,
        graph: resolved.graph,
        runs,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(path).map_err(|source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    })
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("report serializes");
    s.push(b'\n');
    s
}

#[derive(Serialize)]
struct RunJson<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    graph: GraphSummary,
    blow_up: bool,
    runs: Vec<&'a RunSummary>,
}

#[derive(Serialize)]
struct GraphSummary {
    nodes: usize,
    edges: usize,
}

/// Writes the selected series under `dir`, one subdirectory per model when
/// several models ran, plus `run.json`. Returns the written paths.
pub fn write_simulation(
    report: &SimulationReport,
    dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    create_dir(dir)?;
    let outputs = &report.config.outputs;
    let mut written = Vec::new();
    let nested = report.runs.len() > 1;
    for run in &report.runs {
        let sub = if nested {
            let sub = dir.join(run.model.name());
            create_dir(&sub)?;
            sub
        } else {
            dir.to_owned()
        };
        let mut emit = |name: &str, bytes: Vec<u8>| -> Result<(), ExperimentError> {
            let path = sub.join(name);
            write_file(&path, &bytes)?;
            written.push(path);
            Ok(())
        };
        if outputs.trajectory {
            emit(
                "trajectory.csv",
                format_trajectory_csv(&run.trajectory).into_bytes(),
            )?;
        }
        if outputs.energy {
            let mut buf = Vec::new();
            write_energy_csv(&mut buf, &run.energy).expect("write to memory");
            emit("energy.csv", buf)?;
        }
        if outputs.clusters {
            emit(
                "clusters.csv",
                format_clusters_csv(&run.trajectory).into_bytes(),
            )?;
        }
        if outputs.flocking {
            if let Some(v) = &run.flocking {
                emit("flocking.json", json(v))?;
            }
        }
    }
    let run_json = RunJson {
        config: &report.config,
        seed: report.config.seed(),
        graph: GraphSummary {
            nodes: report.graph.node_count(),
            edges: report.graph.edge_count(),
        },
        blow_up: report.runs.iter().any(|r| r.trajectory.blew_up()),
        runs: report.runs.iter().map(|r| &r.summary).collect(),
    };
    let path = dir.join("run.json");
    write_file(&path, &json(&run_json))?;
    written.push(path);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub final_dirichlet: f64,
    pub cluster_count: usize,
    /// Euclidean distance between the two class centers of the final
    /// state; requires a two-label graph.
    pub separation: Option<f64>,
    pub blow_up: bool,
    pub max_abs: f64,
    pub final_time: f64,
}

/// One run of the first configured model per `beta`, all from the same seed
/// and initial state, on at most `jobs` threads.
pub fn sweep_beta(
    cfg: &ExperimentConfig,
    betas: &[f64],
    jobs: usize,
) -> Result<Vec<SweepRow>, ExperimentError> {
    cfg.validate()?;
    if betas.is_empty() {
        return Err(config_err("the beta grid is empty"));
    }
    if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(config_err(format!(
            "beta {b} must be finite and non-negative"
        )));
    }
    let model = cfg.model.list()[0];
    if matches!(model, ModelKind::Grand | ModelKind::GradientFlow) {
        return Err(config_err(format!(
            "model `{}` has no repulsion parameter to sweep",
            model.name()
        )));
    }
    let resolved = resolve_graph(cfg)?;
    let g = &resolved.graph;
    let x0 = initial_state(cfg, &resolved)?;
    let partition = g
        .labels()
        .and_then(|l| Bipartition::from_labels(l).ok())
        .filter(|p| p.require_both().is_ok());

    let run_one = |beta: f64| -> Result<SweepRow, ExperimentError> {
        let params = model_params(cfg, model, x0.dim(), beta)?;
        let traj = run_model(g, &x0, params.as_ref(), &cfg.solver)?;
        let last = traj.final_state();
        let separation = match &partition {
            Some(p) => {
                let m = moments(last, p)?;
                let d2: f64 = m.centers[0]
                    .iter()
                    .zip(&m.centers[1])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                Some(d2.sqrt())
            }
            None => None,
        };
        Ok(SweepRow {
            beta,
            final_dirichlet: dirichlet_energy(g, last)?,
            cluster_count: sign_clusters(last)?.count,
            separation,
            blow_up: traj.blew_up(),
            max_abs: traj.max_abs(),
            final_time: traj.final_time(),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| config_err(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| betas.par_iter().map(|&b| run_one(b)).collect())
}

/// Writes `sweep.csv` under `dir`.
pub fn write_sweep(rows: &[SweepRow], dir: &Path) -> Result<PathBuf, ExperimentError> {
    create_dir(dir)?;
    let path = dir.join("sweep.csv");
    write_file(&path, format_sweep_csv(rows).as_bytes())?;
    Ok(path)
}

/// Generates a two-class graph and writes it as a bundle.
pub fn gen_graph(spec: &TwoClassGraphSpec, dir: &Path) -> Result<GraphHeader, ExperimentError> {
    let (g, x) = generate_two_class_graph(spec)?;
    Ok(write_bundle(dir, &g, Some(&x), Some(spec))?)
}

#[derive(Debug, Clone, Serialize)]
pub struct FlockingReport {
    pub config: ExperimentConfig,
    /// Worst channel of the sufficient condition.
    pub condition: FlockingCondition,
    pub verdict: FlockingVerdict,
    /// Cross-group energy of the final state.
    pub cross_energy: CrossEnergyBound,
    /// Per-channel `M₂` bound with `D = max(s, d)`; absent when `δ = 0`.
    pub m2_bound: Option<Vec<f64>>,
    /// Per-channel largest observed `M₂`.
    pub m2_observed_max: Vec<f64>,
    pub outcome: Outcome,
    pub stats: SolverStats,
    pub agreement: String,
    #[serde(skip)]
    pub trajectory: Trajectory,
    #[serde(skip)]
    pub graph: Graph,
    #[serde(skip)]
    pub params: AcmpParams,
}

/// Two groups on the complete graph with attraction `s` inside and
/// repulsion `d` across; compares the sufficient condition with the
/// simulated behavior.
pub fn flocking(cfg: &ExperimentConfig) -> Result<FlockingReport, ExperimentError> {
    cfg.validate()?;
    let f = cfg
        .flocking
        .as_ref()
        .ok_or_else(|| config_err("the flocking command needs a `flocking` section"))?;
    let mut config = cfg.clone();
    config.seed = Some(cfg.seed());
    config.graph = None;
    let n = f.n1 + f.n2;
    let resolved = resolve_graph(&config)?;
    let g = resolved.graph;
    let part = Bipartition::split(f.n1, f.n2);
    let x0 = initial_state(
        &config,
        &ResolvedGraph {
            graph: g.clone(),
            features: None,
            spec: None,
        },
    )?;
    let dim = x0.dim();
    let alpha = config.params.alpha.resolve("alpha", dim)?;
    let delta = config.params.delta.resolve("delta", dim)?;
    let coupling = flocking_partition_coupling(f.n1, f.n2, f.s, f.d)?;
    let params = AcmpParams::new(alpha.clone(), delta.clone(), coupling)
        .with_potential(config.params.potential.clone());
    params.validate(dim)?;

    let matrix =
        SignedMatrix::from_fn(n, |i, j| if (i < f.n1) == (j < f.n1) { f.s } else { -f.d })?;
    let mut condition: Option<FlockingCondition> = None;
    for k in 0..dim {
        let c = flocking_condition(&matrix, &part, alpha[k], delta[k], f.eta)?;
        if condition.as_ref().is_none_or(|w| c.margin < w.margin) {
            condition = Some(c);
        }
    }
    let condition = condition.expect("at least one channel");

    let trajectory = run_model(&g, &x0, Some(&params), &config.solver)?;
    let verdict = bicluster_check(
        &trajectory,
        &part,
        f.c_prime,
        f.t_check(config.solver.t_end),
    )?;
    let cross_energy = cross_energy_bound(&g, trajectory.final_state(), &part)?;

    let m2_0 = moments(&x0, &part)?.m2();
    let m2_bound = (0..dim)
        .map(|k| m2_bound(f.s.max(f.d), (f.n1, f.n2), alpha[k], delta[k], m2_0[k]))
        .collect::<Result<Vec<_>, _>>()
        .ok();
    let mut m2_observed_max = vec![0.0_f64; dim];
    for (_, x) in trajectory.samples() {
        for (m, v) in m2_observed_max.iter_mut().zip(moments(x, &part)?.m2()) {
            *m = m.max(v);
        }
    }

    let agreement = match (condition.holds, verdict.separated) {
        (true, true) => "condition holds and bi-cluster flocking is observed",
        (true, false) => "condition holds but bi-cluster flocking is not observed",
        (false, true) => {
            "condition fails yet bi-cluster flocking is observed; the condition is only sufficient"
        }
        (false, false) => "condition fails and bi-cluster flocking is not observed",
    }
    .to_owned();

    Ok(FlockingReport {
        config,
        condition,
        verdict,
        cross_energy,
        m2_bound,
        m2_observed_max,
        outcome: trajectory.outcome,
        stats: trajectory.stats,
        agreement,
        trajectory,
        graph: g,
        params,
    })
}

/// Writes `flocking.json` and the selected series under `dir`.
pub fn write_flocking(
    report: &FlockingReport,
    dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    create_dir(dir)?;
    let outputs = &report.config.outputs;
    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<(), ExperimentError> {
        let path = dir.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    if outputs.trajectory {
        emit(
            "trajectory.csv",
            format_trajectory_csv(&report.trajectory).into_bytes(),
        )?;
    }
    if outputs.energy {
        let series = energy_series(&report.trajectory, &report.graph, Some(&report.params))?;
        let mut buf = Vec::new();
        write_energy_csv(&mut buf, &series).expect("write to memory");
        emit("energy.csv", buf)?;
    }
    if outputs.clusters {
        emit(
            "clusters.csv",
            format_clusters_csv(&report.trajectory).into_bytes(),
        )?;
    }
    emit("flocking.json", json(report))?;
    Ok(written)
}
