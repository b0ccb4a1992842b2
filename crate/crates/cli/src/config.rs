use std::path::{Path, PathBuf};

use clusterobs_core::{DescentConfig, PhiSearchConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GraphModel {
    Er,
    Sf,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MeasuredSelection {
    /// Uniformly random node ids.
    Random,
    /// Highest undirected degree first, ties to the lower id.
    Hubs,
    /// Node ids `0..m`.
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSpec {
    pub model: GraphModel,
    pub p_edge: f64,
    /// ER only: draw ordered pairs independently instead of unordered ones.
    pub directed: bool,
    pub bias: f64,
    pub edge_count: usize,
    pub weight_low: f64,
    pub weight_high: f64,
    /// Edge list for `model = "file"`; the sidecar `graph.json` sits next to it.
    pub path: Option<PathBuf>,
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec {
            model: GraphModel::Er,
            p_edge: 0.46,
            directed: true,
            bias: 2.3,
            edge_count: 700,
            weight_low: 0.0,
            weight_high: 1.0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub dt: f64,
    pub t_end: f64,
    pub tail_fraction: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec { dt: 0.01, t_end: 60.0, tail_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    /// Measured nodes in every benchmark instance; must be at least the largest k.
    pub m: usize,
    pub repeats: usize,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec { n_values: vec![200, 400, 800], k_values: vec![2, 5, 10], m: 10, repeats: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    pub er_count: usize,
    pub sf_count: usize,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub p: usize,
    pub p_edge_range: [f64; 2],
    pub bias_range: [f64; 2],
    pub edge_count_range: [usize; 2],
    pub measured: MeasuredSelection,
    /// Horizon of each compare simulation; the other simulation settings are shared.
    pub t_end: f64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec {
            er_count: 20,
            sf_count: 20,
            n: 100,
            m: 5,
            k: 5,
            p: 20,
            p_edge_range: [0.1, 0.25],
            bias_range: [2.0, 2.5],
            edge_count_range: [500, 1000],
            measured: MeasuredSelection::Random,
            t_end: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    /// Unmeasured nodes.
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub p: usize,
    pub measured: MeasuredSelection,
    /// Probability that an input channel acts on a node.
    pub b_density: f64,
    pub b_weight: f64,
    pub seed: u64,
    /// Reseeds allowed when a generated system fails the assumption checks.
    pub max_retries: usize,
    pub require_dominance: bool,
    pub phi_search: PhiSearchConfig,
    pub descent: DescentConfig,
    pub simulation: SimulationSpec,
    pub benchmark: BenchmarkSpec,
    pub compare: CompareSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            graph: GraphSpec::default(),
            n: 100,
            m: 10,
            k: 10,
            p: 20,
            measured: MeasuredSelection::Random,
            b_density: 0.01,
            b_weight: 1.0,
            seed: 1,
            max_retries: 20,
            require_dominance: false,
            phi_search: PhiSearchConfig::default(),
            descent: DescentConfig::default(),
            simulation: SimulationSpec::default(),
            benchmark: BenchmarkSpec::default(),
            compare: CompareSpec::default(),
        }
    }
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn check_cluster_count(k: usize, m: usize, what: &str) -> CliResult<()> {
    if k == 0 {
        return Err(usage(format!("{what}: k must be at least 1")));
    }
    if k > m {
        return Err(usage(format!(
            "{what}: k = {k} exceeds m = {m}; a stabilizable clustering needs k <= m (one measured row per cluster)"
        )));
    }
    Ok(())
}

fn check_range(r: [f64; 2], what: &str) -> CliResult<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(usage(format!("{what}: invalid range [{}, {}]", r[0], r[1])));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s).map_err(|e| usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.m == 0 || self.n == 0 {
            return Err(usage(format!("need m >= 1 and n >= 1, got m = {}, n = {}", self.m, self.n)));
        }
        check_cluster_count(self.k, self.m, "experiment")?;
        if self.k > self.n {
            return Err(usage(format!("k = {} exceeds n = {}", self.k, self.n)));
        }
        if !(0.0..=1.0).contains(&self.b_density) {
            return Err(usage(format!("b_density {} outside [0, 1]", self.b_density)));
        }
        if !self.b_weight.is_finite() {
            return Err(usage("b_weight must be finite".into()));
        }
        if self.graph.model == GraphModel::File && self.graph.path.is_none() {
            return Err(usage("graph.model = file needs graph.path".into()));
        }
        let sim = &self.simulation;
        if !(sim.dt > 0.0 && sim.t_end > 0.0 && sim.dt.is_finite() && sim.t_end.is_finite()) {
            return Err(usage(format!("simulation needs dt > 0 and t_end > 0, got {} and {}", sim.dt, sim.t_end)));
        }
        if !(sim.tail_fraction > 0.0 && sim.tail_fraction <= 1.0) {
            return Err(usage(format!("tail_fraction {} outside (0, 1]", sim.tail_fraction)));
        }
        self.phi_search.validate().map_err(|e| usage(format!("phi_search: {e}")))?;
        self.descent.validate().map_err(|e| usage(format!("descent: {e}")))?;
        if let Some(&kmax) = self.benchmark.k_values.iter().max() {
            check_cluster_count(kmax, self.benchmark.m, "benchmark")?;
        }
        if self.benchmark.k_values.contains(&0) {
            return Err(usage("benchmark: k must be at least 1".into()));
        }
        if self.benchmark.repeats == 0 {
            return Err(usage("benchmark: repeats must be at least 1".into()));
        }
        let cmp = &self.compare;
        check_cluster_count(cmp.k, cmp.m, "compare")?;
        check_range(cmp.p_edge_range, "compare.p_edge_range")?;
        if !(cmp.t_end > 0.0 && cmp.t_end.is_finite()) {
            return Err(usage(format!("compare.t_end must be > 0, got {}", cmp.t_end)));
        }
        check_range(cmp.bias_range, "compare.bias_range")?;
        if cmp.edge_count_range[0] > cmp.edge_count_range[1] {
            return Err(usage("compare.edge_count_range is reversed".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
