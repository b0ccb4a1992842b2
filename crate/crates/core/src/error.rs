use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty matrix")]
    EmptyMatrix,

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node id {id} out of range for {node_count} nodes")]
    NodeOutOfRange { id: usize, node_count: usize },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("invalid clustering: {0}")]
    Clustering(String),

    #[error("{routine} did not converge: {detail}")]
    NoConvergence {
        routine: &'static str,
        detail: String,
    },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("unstable error dynamics (Hurwitz margin {margin:e})")]
    UnstableErrorDynamics { margin: f64 },

    #[error("rank(A12) = {rank} < m = {m}: measured rows are not independent")]
    RankDeficient { rank: usize, m: usize },

    #[error("unmeasured subgraph is not weakly connected")]
    NotConnected,

    #[error("not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("unbounded descent: cost still decreasing at phi = {phi}")]
    UnboundedDescent { phi: f64 },

    #[error("infeasible: fewer neighbor nodes than clusters ({available} < {k})")]
    TooFewNeighbors { available: usize, k: usize },

    #[error("state became non-finite at t = {time}")]
    BlowUp { time: f64 },

    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),

    #[error("gain oracle failed: {0}")]
    Oracle(String),
}
