use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clusterobs::commands::{self, SimulateInputs};
use clusterobs::config::{GraphModel, MeasuredSelection};
use clusterobs::error::{CliError, CliResult, EXIT_USAGE};
use clusterobs::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "clusterobs", version, about = "Clustering-based average state observer experiments")]
struct Cli {
    /// JSON experiment config; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "CLUSTEROBS_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for batch commands (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Unmeasured nodes.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Measured nodes.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Clusters.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Input channels.
    #[arg(long, global = true)]
    p: Option<usize>,
    #[arg(long, global = true, value_enum)]
    model: Option<GraphModel>,
    #[arg(long, global = true)]
    p_edge: Option<f64>,
    #[arg(long, global = true)]
    bias: Option<f64>,
    #[arg(long, global = true)]
    edge_count: Option<usize>,
    /// Edge list CSV for `--model file`.
    #[arg(long, global = true)]
    graph_file: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    measured: Option<MeasuredSelection>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    t_end: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a network, write graph.csv, graph.json and system.json.
    Generate,
    /// Search clustering and gain; write clustering.json, design.json, cost_trace.csv.
    Design {
        /// Existing system.json (default: generate from the config).
        #[arg(long)]
        system: Option<PathBuf>,
    },
    /// Simulate plant and observer; write trajectory.csv and metrics.json.
    Simulate {
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        clustering: Option<PathBuf>,
        #[arg(long)]
        design: Option<PathBuf>,
        /// Externally computed gain L (matrix JSON or design JSON).
        #[arg(long)]
        gain: Option<PathBuf>,
    },
    /// Time the phi search over the configured (n, k) grid.
    Benchmark,
    /// ER vs SF error bands over seeded batches.
    Compare {
        #[arg(long)]
        er: Option<usize>,
        #[arg(long)]
        sf: Option<usize>,
    },
}

fn apply(cfg: &mut ExperimentConfig, o: &Overrides) {
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.n {
        cfg.n = v;
    }
    if let Some(v) = o.m {
        cfg.m = v;
    }
    if let Some(v) = o.k {
        cfg.k = v;
    }
    if let Some(v) = o.p {
        cfg.p = v;
    }
    if let Some(v) = o.model {
        cfg.graph.model = v;
    }
    if let Some(v) = o.p_edge {
        cfg.graph.p_edge = v;
    }
    if let Some(v) = o.bias {
        cfg.graph.bias = v;
    }
    if let Some(v) = o.edge_count {
        cfg.graph.edge_count = v;
    }
    if let Some(v) = &o.graph_file {
        cfg.graph.path = Some(v.clone());
    }
    if let Some(v) = o.measured {
        cfg.measured = v;
    }
    if let Some(v) = o.dt {
        cfg.simulation.dt = v;
    }
    if let Some(v) = o.t_end {
        cfg.simulation.t_end = v;
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    apply(&mut cfg, &cli.overrides);
    if let Command::Compare { er, sf } = &cli.command {
        if let Some(v) = er {
            cfg.compare.er_count = *v;
        }
        if let Some(v) = sf {
            cfg.compare.sf_count = *v;
        }
    }
    cfg.validate()?;
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Generate => {
            let g = commands::generate(&cfg, out)?;
            log::info!("accepted seed {} after {} attempt(s)", g.seed, g.attempts);
            print_json(&g.report);
        }
        Command::Design { system } => {
            let d = commands::design(&cfg, out, system.as_deref())?;
            println!(
                "phi_star = {}  cost = {}  steps = {}",
                d.phi_star.map_or("-".into(), |p| p.to_string()),
                d.cost,
                d.cost_trace.len()
            );
        }
        Command::Simulate { system, clustering, design, gain } => {
            let inputs = SimulateInputs {
                system: system.clone(),
                clustering: clustering.clone(),
                design: design.clone(),
                gain: gain.clone(),
            };
            let m = commands::simulate(&cfg, out, &inputs)?;
            print_json(&m);
        }
        Command::Benchmark => {
            for r in commands::benchmark(&cfg, out)? {
                println!("n={:<6} k={:<4} {:.6} s", r.n, r.k, r.seconds);
            }
        }
        Command::Compare { .. } => {
            let c = commands::compare(&cfg, out)?;
            print_json(&c.summary);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
