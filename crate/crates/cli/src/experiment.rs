use std::time::Instant;

use clusterobs_core::graph::{erdos_renyi, erdos_renyi_undirected, scale_free};
use clusterobs_core::optimize::{coordinate_descent, initial_constrained_clustering, phi_search};
use clusterobs_core::sim::{default_w0, random_input, simulate, zeta_percent};
use clusterobs_core::system::{check_assumptions, flow_system_from_graph};
use clusterobs_core::{
    AssumptionReport, ClusteredNetworkSystem, Clustering, DescentConfig, DescentResult, Digraph, InputSignal, Matrix,
    NodePartition, ObserverContext, ObserverDesign, PhiSearchConfig, SimResult, Vector,
};
use clusterobs_core::graph::neighbor_set_of_measured;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, GraphModel, GraphSpec, MeasuredSelection, SimulationSpec};
use crate::error::{CliError, CliResult};
use crate::io;

const STREAM_GRAPH: u64 = 1;
const STREAM_MEASURED: u64 = 2;
const STREAM_B: u64 = 3;
const STREAM_X0: u64 = 4;
const STREAM_INPUT: u64 = 5;
const STREAM_RETRY: u64 = 16;
const STREAM_FAMILY: u64 = 1 << 20;

/// Independent sub-seed of `seed` for one purpose.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Everything needed to draw one network instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub graph: GraphSpec,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub measured: MeasuredSelection,
    pub b_density: f64,
    pub b_weight: f64,
    pub max_retries: usize,
    pub require_dominance: bool,
}

impl InstanceSpec {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        InstanceSpec {
            graph: cfg.graph.clone(),
            n: cfg.n,
            m: cfg.m,
            p: cfg.p,
            measured: cfg.measured,
            b_density: cfg.b_density,
            b_weight: cfg.b_weight,
            max_retries: cfg.max_retries,
            require_dominance: cfg.require_dominance,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    /// Seed that produced the accepted draw (after reseeds).
    pub seed: u64,
    pub attempts: usize,
    pub graph: Digraph,
    pub partition: NodePartition,
    pub system: ClusteredNetworkSystem,
    pub report: AssumptionReport,
}

fn draw_graph(spec: &GraphSpec, total: usize, seed: u64) -> CliResult<Digraph> {
    let s = derive_seed(seed, STREAM_GRAPH);
    let g = match spec.model {
        GraphModel::Er if spec.directed => erdos_renyi(total, spec.p_edge, spec.weight_low, spec.weight_high, s)?,
        GraphModel::Er => erdos_renyi_undirected(total, spec.p_edge, spec.weight_low, spec.weight_high, s)?,
        GraphModel::Sf => scale_free(total, spec.bias, spec.edge_count, spec.weight_low, spec.weight_high, s)?,
        GraphModel::File => unreachable!("file graphs are loaded, not drawn"),
    };
    Ok(g)
}

pub fn select_measured(g: &Digraph, m: usize, how: MeasuredSelection, seed: u64) -> Vec<usize> {
    let total = g.node_count();
    let mut ids: Vec<usize> = (0..total).collect();
    match how {
        MeasuredSelection::First => {}
        MeasuredSelection::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_MEASURED));
            ids.shuffle(&mut rng);
        }
        MeasuredSelection::Hubs => {
            let deg = g.undirected_degrees();
            ids.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));
        }
    }
    let mut chosen = ids[..m].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Input matrix indexed by original node id: each channel acts on each node
/// with probability `density`.
pub fn random_b(total: usize, p: usize, density: f64, weight: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_B));
    Matrix::from_fn(total, p, |_, _| if rng.gen_bool(density) { weight } else { 0.0 })
}

fn accept(report: &AssumptionReport, require_dominance: bool) -> bool {
    report.design_ok() && (!require_dominance || report.a2_diagonal_dominance)
}

fn assemble(spec: &InstanceSpec, g: Digraph, partition: NodePartition, seed: u64) -> CliResult<Instance> {
    let b = random_b(g.node_count(), spec.p, spec.b_density, spec.b_weight, seed);
    let system = flow_system_from_graph(&g, &partition, &b)?;
    let report = check_assumptions(&system);
    Ok(Instance { seed, attempts: 1, graph: g, partition, system, report })
}

fn report_json(r: &AssumptionReport) -> String {
    serde_json::to_string(r).unwrap_or_default()
}

/// Draws an instance, reseeding up to `max_retries` times until the system
/// passes the assumption checks.
pub fn build_instance(spec: &InstanceSpec, seed: u64) -> CliResult<Instance> {
    if spec.graph.model == GraphModel::File {
        let path = spec.graph.path.as_ref().ok_or_else(|| CliError::Usage("graph.path missing".into()))?;
        let (g, partition) = io::read_graph(path)?;
        if partition.m() != spec.m || partition.n() != spec.n {
            return Err(CliError::Usage(format!(
                "graph file has m = {}, n = {} but the config asks for m = {}, n = {}",
                partition.m(),
                partition.n(),
                spec.m,
                spec.n
            )));
        }
        let inst = assemble(spec, g, partition, seed)?;
        if !accept(&inst.report, spec.require_dominance) {
            return Err(CliError::Assumptions(report_json(&inst.report)));
        }
        return Ok(inst);
    }
    let total = spec.n + spec.m;
    let mut last = None;
    for attempt in 0..=spec.max_retries {
        let s = if attempt == 0 { seed } else { derive_seed(seed, STREAM_RETRY + attempt as u64) };
        let g = draw_graph(&spec.graph, total, s)?;
        let measured = select_measured(&g, spec.m, spec.measured, s);
        let partition = NodePartition::new(total, measured)?;
        let mut inst = assemble(spec, g, partition, s)?;
        inst.attempts = attempt + 1;
        if accept(&inst.report, spec.require_dominance) {
            return Ok(inst);
        }
        log::debug!("seed {s} rejected: {}", report_json(&inst.report));
        last = Some(inst.report);
    }
    let report = last.expect("at least one attempt");
    Err(CliError::Assumptions(format!("after {} reseeds: {}", spec.max_retries, report_json(&report))))
}

/// Plant initial state (uniform in (0, 1), system ordering) and input signal.
pub fn sim_inputs(sys: &ClusteredNetworkSystem, seed: u64) -> (Vector, InputSignal) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_X0));
    let total = sys.m() + sys.n();
    let x0 = Vector::from_fn(total, |_, _| loop {
        let v: f64 = rng.gen();
        if v > 0.0 {
            break v;
        }
    });
    (x0, random_input(sys.p(), derive_seed(seed, STREAM_INPUT)))
}

pub fn design(sys: &ClusteredNetworkSystem, k: usize, cfg: &DescentConfig, phi: &PhiSearchConfig) -> CliResult<DescentResult> {
    let r = coordinate_descent(sys, k, cfg, phi)?;
    let margin = r.design.hurwitz_margin()?;
    if !(margin < 0.0) {
        return Err(CliError::NotStabilizable(format!("final observer margin {margin}")));
    }
    Ok(r)
}

pub fn run_simulation(
    sys: &ClusteredNetworkSystem,
    c: &Clustering,
    d: &ObserverDesign,
    seed: u64,
    sim: &SimulationSpec,
) -> CliResult<(SimResult, f64)> {
    let (x0, u) = sim_inputs(sys, seed);
    let w0 = default_w0(d, sys, &x0)?;
    let res = simulate(sys, c, d, &x0, &w0, &u, sim.dt, sim.t_end)?;
    let pct = zeta_percent(&res, sim.tail_fraction)?;
    Ok((res, pct))
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub instance: Instance,
    pub descent: DescentResult,
    pub sim: SimResult,
    pub zeta_percent: f64,
}

/// Generate, design and simulate one seeded instance.
pub fn run_pipeline(cfg: &ExperimentConfig, seed: u64) -> CliResult<PipelineOutcome> {
    let instance = build_instance(&InstanceSpec::from_config(cfg), seed)?;
    let descent = design(&instance.system, cfg.k, &cfg.descent, &cfg.phi_search)?;
    let (sim, zeta_percent) =
        run_simulation(&instance.system, &descent.clustering, &descent.design, seed, &cfg.simulation)?;
    Ok(PipelineOutcome { instance, descent, sim, zeta_percent })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Er,
    Sf,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Er => "er",
            Family::Sf => "sf",
        }
    }
}

/// Seed and undirected graph parameters of instance `index` of a family.
pub fn family_instance(cfg: &ExperimentConfig, family: Family, index: usize) -> (u64, InstanceSpec) {
    let cmp = &cfg.compare;
    let tag = match family {
        Family::Er => 0,
        Family::Sf => 1,
    };
    let seed = derive_seed(cfg.seed, STREAM_FAMILY * (tag + 1) + index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = GraphSpec { directed: false, ..cfg.graph.clone() };
    match family {
        Family::Er => {
            graph.model = GraphModel::Er;
            graph.p_edge = rng.gen_range(cmp.p_edge_range[0]..=cmp.p_edge_range[1]);
        }
        Family::Sf => {
            graph.model = GraphModel::Sf;
            graph.bias = rng.gen_range(cmp.bias_range[0]..=cmp.bias_range[1]);
            graph.edge_count = rng.gen_range(cmp.edge_count_range[0]..=cmp.edge_count_range[1]);
        }
    }
    let spec = InstanceSpec {
        graph,
        n: cmp.n,
        m: cmp.m,
        p: cmp.p,
        measured: cmp.measured,
        b_density: cfg.b_density,
        b_weight: cfg.b_weight,
        max_retries: cfg.max_retries,
        require_dominance: cfg.require_dominance,
    };
    (seed, spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    pub zeta_norms: Vec<f64>,
    pub zeta_percent: f64,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct FamilyRun {
    pub family: Family,
    pub index: usize,
    pub seed: u64,
    pub outcome: Result<InstanceResult, String>,
    /// False when the failure was an assumption or stabilizability rejection.
    pub stabilizable: bool,
}

pub fn run_family_instance(cfg: &ExperimentConfig, family: Family, index: usize) -> FamilyRun {
    let (seed, spec) = family_instance(cfg, family, index);
    let sim_spec = SimulationSpec { t_end: cfg.compare.t_end, ..cfg.simulation.clone() };
    let res = build_instance(&spec, seed).and_then(|inst| {
        let d = design(&inst.system, cfg.compare.k, &cfg.descent, &cfg.phi_search)?;
        let (sim, zeta_percent) = run_simulation(&inst.system, &d.clustering, &d.design, inst.seed, &sim_spec)?;
        Ok(InstanceResult { zeta_norms: sim.zeta_norms(), zeta_percent, margin: d.design.hurwitz_margin()? })
    });
    match res {
        Ok(r) => FamilyRun { family, index, seed, outcome: Ok(r), stabilizable: true },
        Err(e) => {
            let stabilizable = !matches!(e, CliError::NotStabilizable(_) | CliError::Assumptions(_));
            FamilyRun { family, index, seed, outcome: Err(e.to_string()), stabilizable }
        }
    }
}

/// Per-sample `(min, max)` over the series, `None` for an empty set.
pub fn envelope(series: &[&Vec<f64>]) -> Option<Vec<(f64, f64)>> {
    let len = series.iter().map(|s| s.len()).min()?;
    Some(
        (0..len)
            .map(|t| {
                series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s[t]), hi.max(s[t])))
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub k: usize,
    pub seconds: f64,
}

/// Wall-clock time of one `phi` search on a prepared problem, best of
/// `repeats`. Instance generation and problem setup are not timed.
pub fn benchmark_point(cfg: &ExperimentConfig, n: usize, k: usize) -> CliResult<BenchRow> {
    let spec = InstanceSpec { n, m: cfg.benchmark.m, ..InstanceSpec::from_config(cfg) };
    let seed = derive_seed(cfg.seed, ((n as u64) << 16) | k as u64);
    let inst = build_instance(&spec, seed)?;
    let ctx = ObserverContext::new(&inst.system)?;
    let nset = neighbor_set_of_measured(inst.system.a12());
    let q = initial_constrained_clustering(inst.system.a22(), &nset, k)?;
    let pp = ctx.phi_problem(&q)?;
    let mut best = f64::INFINITY;
    for _ in 0..cfg.benchmark.repeats {
        let start = Instant::now();
        let r = phi_search(|f| pp.cost(f), |f| pp.is_hurwitz(f), &cfg.phi_search)?;
        let secs = start.elapsed().as_secs_f64();
        std::hint::black_box(r);
        best = best.min(secs);
    }
    Ok(BenchRow { n, k, seconds: best })
}
