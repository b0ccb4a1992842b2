use std::path::{Path, PathBuf};

use clusterobs_core::observer::design_from_gain;
use clusterobs_core::AssumptionReport;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{self, envelope, Family, FamilyRun, Instance, InstanceSpec};
use crate::io::{self, ClusteringFile, DesignFile, GraphSidecar, Meta, MetricsFile, SystemFile};

fn write_instance(out: &Path, inst: &Instance, meta: &Meta) -> CliResult<()> {
    io::write_graph(out, &inst.graph, &inst.partition, meta)?;
    io::write_json(&out.join(io::SYSTEM_JSON), &SystemFile::new(&inst.system, Some(meta.clone())))
}

#[derive(Debug, Clone)]
pub struct GenerateOutcome {
    pub report: AssumptionReport,
    pub seed: u64,
    pub attempts: usize,
}

/// Draws (or loads) a graph, writes `graph.csv`, `graph.json` and `system.json`.
pub fn generate(cfg: &ExperimentConfig, out: &Path) -> CliResult<GenerateOutcome> {
    io::ensure_dir(out)?;
    let inst = experiment::build_instance(&InstanceSpec::from_config(cfg), cfg.seed)?;
    write_instance(out, &inst, &Meta::new("generate", cfg))?;
    Ok(GenerateOutcome { report: inst.report, seed: inst.seed, attempts: inst.attempts })
}

#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub phi_star: Option<f64>,
    pub cost: f64,
    pub cost_trace: Vec<f64>,
    pub clustering: clusterobs_core::Clustering,
}

fn load_or_build_system(
    cfg: &ExperimentConfig,
    out: &Path,
    system: Option<&Path>,
    meta: &Meta,
) -> CliResult<clusterobs_core::ClusteredNetworkSystem> {
    match system {
        Some(p) => {
            let f: SystemFile = io::read_json(p)?;
            f.to_system()
        }
        None => {
            let inst = experiment::build_instance(&InstanceSpec::from_config(cfg), cfg.seed)?;
            write_instance(out, &inst, meta)?;
            Ok(inst.system)
        }
    }
}

/// Runs the coordinate descent and writes clustering, design and cost trace.
pub fn design(cfg: &ExperimentConfig, out: &Path, system: Option<&Path>) -> CliResult<DesignOutcome> {
    io::ensure_dir(out)?;
    let meta = Meta::new("design", cfg);
    let sys = load_or_build_system(cfg, out, system, &meta)?;
    if !clusterobs_core::system::check_assumptions(&sys).design_ok() {
        let r = clusterobs_core::system::check_assumptions(&sys);
        return Err(CliError::Assumptions(serde_json::to_string(&r).unwrap_or_default()));
    }
    let r = experiment::design(&sys, cfg.k, &cfg.descent, &cfg.phi_search)?;
    io::write_json(&out.join(io::CLUSTERING_JSON), &ClusteringFile::new(&r.clustering, Some(meta.clone())))?;
    io::write_json(&out.join(io::DESIGN_JSON), &DesignFile::new(&r.design, r.phi_star, r.psi, Some(meta.clone())))?;
    let rows: Vec<Vec<String>> =
        r.cost_trace.iter().enumerate().map(|(i, c)| vec![(i + 1).to_string(), io::fmt_f64(*c)]).collect();
    io::write_csv(&out.join(io::COST_TRACE_CSV), &["step".into(), "cost".into()], &rows, &meta)?;
    Ok(DesignOutcome { phi_star: r.phi_star, cost: r.cost(), cost_trace: r.cost_trace.clone(), clustering: r.clustering })
}

#[derive(Debug, Clone, Default)]
pub struct SimulateInputs {
    pub system: Option<PathBuf>,
    pub clustering: Option<PathBuf>,
    pub design: Option<PathBuf>,
    /// Externally computed gain; a bare matrix JSON or a design file.
    pub gain: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GainFile {
    Design(Box<DesignFile>),
    Matrix(io::MatrixJson),
}

fn load_gain(path: &Path) -> CliResult<clusterobs_core::Matrix> {
    match io::read_json::<GainFile>(path)? {
        GainFile::Design(d) => d.gain(),
        GainFile::Matrix(m) => m.to_matrix(),
    }
}

/// Simulates plant and observer; writes `trajectory.csv` and `metrics.json`.
pub fn simulate(cfg: &ExperimentConfig, out: &Path, inputs: &SimulateInputs) -> CliResult<MetricsFile> {
    io::ensure_dir(out)?;
    let meta = Meta::new("simulate", cfg);
    let sys = match &inputs.system {
        Some(p) => io::read_json::<SystemFile>(p)?.to_system()?,
        None => {
            let p = out.join(io::SYSTEM_JSON);
            if p.exists() {
                io::read_json::<SystemFile>(&p)?.to_system()?
            } else {
                experiment::build_instance(&InstanceSpec::from_config(cfg), cfg.seed)?.system
            }
        }
    };
    let cpath = inputs.clustering.clone().unwrap_or_else(|| out.join(io::CLUSTERING_JSON));
    let clustering = io::read_json::<ClusteringFile>(&cpath)?.to_clustering()?;
    let l = match (&inputs.gain, &inputs.design) {
        (Some(g), _) => load_gain(g)?,
        (None, Some(d)) => io::read_json::<DesignFile>(d)?.gain()?,
        (None, None) => io::read_json::<DesignFile>(&out.join(io::DESIGN_JSON))?.gain()?,
    };
    let d = design_from_gain(&sys, &clustering, &l)?;
    let (res, pct) = experiment::run_simulation(&sys, &clustering, &d, cfg.seed, &cfg.simulation)?;
    let (header, rows) = io::trajectory_rows(&res);
    io::write_csv(&out.join(io::TRAJECTORY_CSV), &header, &rows, &meta)?;
    let metrics = MetricsFile {
        meta: Some(meta),
        zeta_percent: pct,
        tail_fraction: cfg.simulation.tail_fraction,
        final_zeta_norm: res.zeta.last().map_or(0.0, |z| z.norm()),
        hurwitz_margin: d.hurwitz_margin().ok().and_then(io::finite),
        h2_cost: io::finite(d.h2_cost()),
        samples: res.len(),
    };
    io::write_json(&out.join(io::METRICS_JSON), &metrics)?;
    Ok(metrics)
}

/// Times the `phi` search over the `n x k` grid; writes `benchmark.csv`.
pub fn benchmark(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<experiment::BenchRow>> {
    io::ensure_dir(out)?;
    let meta = Meta::new("benchmark", cfg);
    let mut rows = Vec::new();
    for &n in &cfg.benchmark.n_values {
        for &k in &cfg.benchmark.k_values {
            match experiment::benchmark_point(cfg, n, k) {
                Ok(r) => rows.push(r),
                Err(e) => log::warn!("benchmark point n={n} k={k} skipped: {e}"),
            }
        }
    }
    let text: Vec<Vec<String>> =
        rows.iter().map(|r| vec![r.n.to_string(), r.k.to_string(), format!("{:.9}", r.seconds)]).collect();
    io::write_csv(&out.join(io::BENCHMARK_CSV), &["n".into(), "k".into(), "seconds".into()], &text, &meta)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub requested: usize,
    pub succeeded: usize,
    pub rejected: usize,
    pub failed: usize,
    pub worst_zeta_percent: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareSummary {
    pub meta: Meta,
    pub er: FamilySummary,
    pub sf: FamilySummary,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub summary: CompareSummary,
    pub runs: Vec<FamilyRun>,
    /// `(t, er band, sf band)` per sample.
    pub bands: Vec<(f64, Option<(f64, f64)>, Option<(f64, f64)>)>,
}

fn summarize(runs: &[FamilyRun], family: Family) -> FamilySummary {
    let mine: Vec<&FamilyRun> = runs.iter().filter(|r| r.family == family).collect();
    let ok: Vec<f64> = mine.iter().filter_map(|r| r.outcome.as_ref().ok().map(|o| o.zeta_percent)).collect();
    FamilySummary {
        requested: mine.len(),
        succeeded: ok.len(),
        rejected: mine.iter().filter(|r| r.outcome.is_err() && !r.stabilizable).count(),
        failed: mine.iter().filter(|r| r.outcome.is_err() && r.stabilizable).count(),
        worst_zeta_percent: ok.iter().cloned().fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x)))),
    }
}

/// ER vs SF error bands; writes `bands.csv`, `instances.csv` and `compare.json`.
pub fn compare(cfg: &ExperimentConfig, out: &Path) -> CliResult<CompareOutcome> {
    let cmp = &cfg.compare;
    if cmp.er_count + cmp.sf_count == 0 {
        return Err(CliError::Usage("empty experiment: no ER or SF instances requested".into()));
    }
    io::ensure_dir(out)?;
    let meta = Meta::new("compare", cfg);
    let jobs: Vec<(Family, usize)> = (0..cmp.er_count)
        .map(|i| (Family::Er, i))
        .chain((0..cmp.sf_count).map(|i| (Family::Sf, i)))
        .collect();
    let runs: Vec<FamilyRun> = jobs.par_iter().map(|&(f, i)| experiment::run_family_instance(cfg, f, i)).collect();
    for r in &runs {
        if let Err(e) = &r.outcome {
            log::warn!("{} instance {} (seed {}) skipped: {e}", r.family.name(), r.index, r.seed);
        }
    }
    let band = |family: Family| {
        let series: Vec<&Vec<f64>> =
            runs.iter().filter(|r| r.family == family).filter_map(|r| r.outcome.as_ref().ok().map(|o| &o.zeta_norms)).collect();
        envelope(&series)
    };
    let (er, sf) = (band(Family::Er), band(Family::Sf));
    let len = er.as_ref().map_or(0, |b| b.len()).max(sf.as_ref().map_or(0, |b| b.len()));
    let dt = cfg.simulation.dt;
    let bands: Vec<_> = (0..len)
        .map(|s| {
            let at = |b: &Option<Vec<(f64, f64)>>| b.as_ref().and_then(|v| v.get(s).copied());
            (s as f64 * dt, at(&er), at(&sf))
        })
        .collect();
    let cell = |v: Option<f64>| v.map(io::fmt_f64).unwrap_or_default();
    let rows: Vec<Vec<String>> = bands
        .iter()
        .map(|(t, e, s)| {
            vec![
                io::fmt_f64(*t),
                cell(e.map(|b| b.0)),
                cell(e.map(|b| b.1)),
                cell(s.map(|b| b.0)),
                cell(s.map(|b| b.1)),
            ]
        })
        .collect();
    let header: Vec<String> = ["t", "er_min", "er_max", "sf_min", "sf_max"].iter().map(|s| s.to_string()).collect();
    io::write_csv(&out.join(io::BANDS_CSV), &header, &rows, &meta)?;

    let inst_rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let (status, pct, margin) = match &r.outcome {
                Ok(o) => ("ok", io::fmt_f64(o.zeta_percent), io::fmt_f64(o.margin)),
                Err(_) if !r.stabilizable => ("rejected", String::new(), String::new()),
                Err(_) => ("failed", String::new(), String::new()),
            };
            vec![r.family.name().into(), r.index.to_string(), r.seed.to_string(), status.into(), pct, margin]
        })
        .collect();
    let inst_header: Vec<String> =
        ["family", "index", "seed", "status", "zeta_percent", "margin"].iter().map(|s| s.to_string()).collect();
    io::write_csv(&out.join(io::INSTANCES_CSV), &inst_header, &inst_rows, &meta)?;

    let summary = CompareSummary { meta, er: summarize(&runs, Family::Er), sf: summarize(&runs, Family::Sf) };
    io::write_json(&out.join(io::COMPARE_JSON), &summary)?;
    Ok(CompareOutcome { summary, runs, bands })
}

/// Graph sidecar of a `generate` output directory.
pub fn read_sidecar(dir: &Path) -> CliResult<GraphSidecar> {
    io::read_json(&dir.join(io::GRAPH_SIDECAR))
}
