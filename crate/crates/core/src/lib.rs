//! Clustering-based average state observers for large directed network systems.
//!
//! The unmeasured nodes of a network are partitioned into `k` clusters and an
//! order-`k` observer estimates the cluster averages from the measured nodes.
//! The gain is restricted to a one-parameter family `L(phi)` whose scalar is
//! tuned against the H2 cost of the estimation error, while a greedy scheme
//! searches over clusterings.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to pull
//! in the std-backed matrix kernels of `nalgebra`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod clustering;
pub mod error;
pub mod graph;
pub mod numerics;
pub mod observer;
pub mod optimize;
pub mod sim;
pub mod system;

pub use clustering::{Clustering, ProjectedSystem};
pub use error::{Error, Result};
pub use graph::{Digraph, Edge, NodePartition, NodeSet};
pub use numerics::{Matrix, Trajectory, Vector};
pub use observer::{ObserverContext, ObserverDesign, PhiProblem};
pub use optimize::{DescentConfig, DescentResult, PhiSearchConfig, PhiSearchResult, Progress};
pub use sim::{InputSignal, SimResult};
pub use system::{AssumptionReport, ClusteredNetworkSystem};
