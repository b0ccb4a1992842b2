use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clusterobs_core::{ClusteredNetworkSystem, Clustering, Digraph, Edge, Matrix, NodePartition, ObserverDesign, SimResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const GRAPH_CSV: &str = "graph.csv";
pub const GRAPH_SIDECAR: &str = "graph.json";
pub const SYSTEM_JSON: &str = "system.json";
pub const CLUSTERING_JSON: &str = "clustering.json";
pub const DESIGN_JSON: &str = "design.json";
pub const COST_TRACE_CSV: &str = "cost_trace.csv";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const BENCHMARK_CSV: &str = "benchmark.csv";
pub const BANDS_CSV: &str = "bands.csv";
pub const INSTANCES_CSV: &str = "instances.csv";
pub const COMPARE_JSON: &str = "compare.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Meta {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: cfg.hash(),
            seed: cfg.seed,
        }
    }
}

/// Dense matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix> for MatrixJson {
    fn from(m: &Matrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        MatrixJson { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl MatrixJson {
    pub fn to_matrix(&self) -> CliResult<Matrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(CliError::Usage(format!(
                "matrix claims {}x{} but carries {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub a11: MatrixJson,
    pub a12: MatrixJson,
    pub a21: MatrixJson,
    pub a22: MatrixJson,
    pub b1: MatrixJson,
    pub b2: MatrixJson,
}

impl SystemFile {
    pub fn new(sys: &ClusteredNetworkSystem, meta: Option<Meta>) -> Self {
        SystemFile {
            meta,
            m: sys.m(),
            n: sys.n(),
            p: sys.p(),
            a11: sys.a11().into(),
            a12: sys.a12().into(),
            a21: sys.a21().into(),
            a22: sys.a22().into(),
            b1: sys.b1().into(),
            b2: sys.b2().into(),
        }
    }

    pub fn to_system(&self) -> CliResult<ClusteredNetworkSystem> {
        let sys = ClusteredNetworkSystem::from_blocks(
            self.a11.to_matrix()?,
            self.a12.to_matrix()?,
            self.a21.to_matrix()?,
            self.a22.to_matrix()?,
            self.b1.to_matrix()?,
            self.b2.to_matrix()?,
        )?;
        if (sys.m(), sys.n(), sys.p()) != (self.m, self.n, self.p) {
            return Err(CliError::Usage(format!(
                "system header says m={}, n={}, p={} but blocks give m={}, n={}, p={}",
                self.m,
                self.n,
                self.p,
                sys.m(),
                sys.n(),
                sys.p()
            )));
        }
        Ok(sys)
    }
}

/// Graph sidecar: node count and the measured/unmeasured split (0-based ids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
    pub node_count: usize,
    pub measured: Vec<usize>,
    pub unmeasured: Vec<usize>,
}

/// Cluster labels are 1-based on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
    pub k: usize,
    pub labels: Vec<usize>,
}

impl ClusteringFile {
    pub fn new(c: &Clustering, meta: Option<Meta>) -> Self {
        ClusteringFile { meta, k: c.k(), labels: c.one_based_labels() }
    }

    pub fn to_clustering(&self) -> CliResult<Clustering> {
        Ok(Clustering::from_one_based(&self.labels, self.k)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
    pub k: usize,
    pub m: usize,
    /// Absent for injected gains.
    #[serde(default)]
    pub phi_star: Option<f64>,
    #[serde(default)]
    pub psi: Option<f64>,
    #[serde(default)]
    pub h2_cost: Option<f64>,
    #[serde(default)]
    pub hurwitz_margin: Option<f64>,
    pub l: MatrixJson,
    #[serde(default)]
    pub m_l: Option<MatrixJson>,
    #[serde(default)]
    pub k_l: Option<MatrixJson>,
    #[serde(default)]
    pub n_l: Option<MatrixJson>,
    #[serde(default)]
    pub r_l: Option<MatrixJson>,
}

pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl DesignFile {
    pub fn new(design: &ObserverDesign, phi_star: Option<f64>, psi: Option<f64>, meta: Option<Meta>) -> Self {
        DesignFile {
            meta,
            k: design.k(),
            m: design.l().ncols(),
            phi_star: phi_star.and_then(finite),
            psi: psi.and_then(finite),
            h2_cost: finite(design.h2_cost()),
            hurwitz_margin: design.hurwitz_margin().ok().and_then(finite),
            l: design.l().into(),
            m_l: Some(design.m_l().into()),
            k_l: Some(design.k_l().into()),
            n_l: Some(design.n_l().into()),
            r_l: Some(design.r_l().into()),
        }
    }

    pub fn gain(&self) -> CliResult<Matrix> {
        let l = self.l.to_matrix()?;
        if l.shape() != (self.k, self.m) {
            return Err(CliError::Usage(format!("gain is {}x{}, header says {}x{}", l.nrows(), l.ncols(), self.k, self.m)));
        }
        Ok(l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
    pub zeta_percent: f64,
    pub tail_fraction: f64,
    pub final_zeta_norm: f64,
    pub hurwitz_margin: Option<f64>,
    pub h2_cost: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvMeta {
    pub meta: Meta,
    pub columns: Vec<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(anyhow::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes rows under `header` and a `<file>.meta.json` sidecar.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>], meta: &Meta) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header).map_err(anyhow::Error::from)?;
    for r in rows {
        w.write_record(r).map_err(anyhow::Error::from)?;
    }
    w.flush()?;
    write_json(&sidecar_path(path), &CsvMeta { meta: meta.clone(), columns: header.to_vec() })
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn write_graph(dir: &Path, g: &Digraph, partition: &NodePartition, meta: &Meta) -> CliResult<()> {
    let path = dir.join(GRAPH_CSV);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["to", "from", "weight"]).map_err(anyhow::Error::from)?;
    for e in g.edges() {
        w.write_record([e.to.to_string(), e.from.to_string(), fmt_f64(e.weight)]).map_err(anyhow::Error::from)?;
    }
    w.flush()?;
    let side = GraphSidecar {
        meta: Some(meta.clone()),
        node_count: g.node_count(),
        measured: partition.measured().to_vec(),
        unmeasured: partition.unmeasured().to_vec(),
    };
    write_json(&dir.join(GRAPH_SIDECAR), &side)
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    to: usize,
    from: usize,
    weight: f64,
}

/// Reads `path` and the `graph.json` sidecar in the same directory.
pub fn read_graph(path: &Path) -> CliResult<(Digraph, NodePartition)> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let side: GraphSidecar = read_json(&dir.join(GRAPH_SIDECAR))?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut edges = Vec::new();
    for row in rdr.deserialize() {
        let r: EdgeRow = row.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        edges.push(Edge { to: r.to, from: r.from, weight: r.weight });
    }
    let g = Digraph::new(side.node_count, edges)?;
    let partition = NodePartition::from_lists(side.node_count, side.measured, side.unmeasured)?;
    Ok((g, partition))
}

pub fn trajectory_rows(res: &SimResult) -> (Vec<String>, Vec<Vec<String>>) {
    let k = res.z_true.first().map_or(0, |z| z.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("z{i}")));
    header.extend((1..=k).map(|i| format!("zhat{i}")));
    header.push("zeta_norm".into());
    let rows = (0..res.len())
        .map(|s| {
            let mut r = Vec::with_capacity(2 * k + 2);
            r.push(fmt_f64(res.times[s]));
            r.extend(res.z_true[s].iter().map(|&x| fmt_f64(x)));
            r.extend(res.z_hat[s].iter().map(|&x| fmt_f64(x)));
            r.push(fmt_f64(res.zeta[s].norm()));
            r
        })
        .collect();
    (header, rows)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| anyhow!("cannot create {}: {e}", dir.display()).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clusterobs_core::graph::erdos_renyi;

    #[test]
    fn matrix_json_is_row_major() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let j = MatrixJson::from(&m);
        assert_eq!(j.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(j.to_matrix().unwrap(), m);
        let bad = MatrixJson { rows: 2, cols: 2, data: vec![1.0] };
        assert!(bad.to_matrix().is_err());
    }

    #[test]
    fn system_round_trips_exactly() {
        let a = Matrix::from_fn(5, 5, |i, j| if i == j { -1.0 / 3.0 } else { (i * 5 + j) as f64 * 0.1 + 1e-17 });
        let b = Matrix::from_fn(5, 2, |i, j| (i + j) as f64 / 7.0);
        let sys = ClusteredNetworkSystem::from_full(&a, &b, 2).unwrap();
        let text = serde_json::to_string(&SystemFile::new(&sys, None)).unwrap();
        let back: SystemFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_system().unwrap(), sys);
    }

    #[test]
    fn clustering_file_is_one_based() {
        let c = Clustering::new(vec![0, 1, 1, 0], 2).unwrap();
        let f = ClusteringFile::new(&c, None);
        assert_eq!(f.labels, vec![1, 2, 2, 1]);
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(text, r#"{"k":2,"labels":[1,2,2,1]}"#);
        let back: ClusteringFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_clustering().unwrap(), c);
    }

    #[test]
    fn graph_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = erdos_renyi(12, 0.3, 0.0, 1.0, 9).unwrap();
        let part = NodePartition::new(12, vec![3, 7]).unwrap();
        let cfg = ExperimentConfig::default();
        write_graph(dir.path(), &g, &part, &Meta::new("test", &cfg)).unwrap();
        let (g2, part2) = read_graph(&dir.path().join(GRAPH_CSV)).unwrap();
        assert_eq!(g2.edges(), g.edges());
        assert_eq!(part2, part);
        let text = std::fs::read_to_string(dir.path().join(GRAPH_CSV)).unwrap();
        assert!(text.starts_with("to,from,weight\n"));
    }

    #[test]
    fn csv_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let meta = Meta::new("test", &ExperimentConfig::default());
        write_csv(&path, &["a".into(), "b".into()], &[vec!["1".into(), "2".into()]], &meta).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,2\n");
        let side: CsvMeta = read_json(&sidecar_path(&path)).unwrap();
        assert_eq!(side.meta, meta);
        assert_eq!(side.columns, vec!["a", "b"]);
    }
}
