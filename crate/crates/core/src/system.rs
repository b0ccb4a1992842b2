//! Block state-space model of a network with measured and unmeasured nodes,
//! plus checks of the standing assumptions used by the observer design.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{generic_rank, pattern_is_weakly_connected, Digraph, NodePartition};
use crate::numerics::{ensure_finite, numeric_rank, Matrix, RANK_TOL};

/// `x1' = A11 x1 + A12 x2 + B1 u`, `x2' = A21 x1 + A22 x2 + B2 u`, `y = x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredNetworkSystem {
    a11: Matrix,
    a12: Matrix,
    a21: Matrix,
    a22: Matrix,
    b1: Matrix,
    b2: Matrix,
}

impl ClusteredNetworkSystem {
    pub fn from_blocks(a11: Matrix, a12: Matrix, a21: Matrix, a22: Matrix, b1: Matrix, b2: Matrix) -> Result<Self> {
        let m = a11.nrows();
        let n = a22.nrows();
        let p = b1.ncols();
        if m == 0 || n == 0 {
            return Err(Error::Dimension("need m >= 1 and n >= 1".into()));
        }
        let check = |name: &str, mat: &Matrix, r: usize, c: usize| {
            if mat.shape() != (r, c) {
                Err(Error::Dimension(format!("{name} is {}x{}, expected {r}x{c}", mat.nrows(), mat.ncols())))
            } else {
                Ok(())
            }
        };
        check("A11", &a11, m, m)?;
        check("A12", &a12, m, n)?;
        check("A21", &a21, n, m)?;
        check("A22", &a22, n, n)?;
        check("B1", &b1, m, p)?;
        check("B2", &b2, n, p)?;
        for (mat, name) in [(&a11, "A11"), (&a12, "A12"), (&a21, "A21"), (&a22, "A22"), (&b1, "B1"), (&b2, "B2")] {
            ensure_finite(mat, name)?;
        }
        Ok(Self { a11, a12, a21, a22, b1, b2 })
    }

    /// Splits a full `(m+n)`-dimensional model whose first `m` states are measured.
    pub fn from_full(a: &Matrix, b: &Matrix, m: usize) -> Result<Self> {
        let total = a.nrows();
        if a.ncols() != total || b.nrows() != total {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if m == 0 || m >= total {
            return Err(Error::Dimension(format!("m = {m} must lie in 1..{total}")));
        }
        let n = total - m;
        let p = b.ncols();
        Self::from_blocks(
            a.view((0, 0), (m, m)).into_owned(),
            a.view((0, m), (m, n)).into_owned(),
            a.view((m, 0), (n, m)).into_owned(),
            a.view((m, m), (n, n)).into_owned(),
            b.view((0, 0), (m, p)).into_owned(),
            b.view((m, 0), (n, p)).into_owned(),
        )
    }

    pub fn m(&self) -> usize {
        self.a11.nrows()
    }

    pub fn n(&self) -> usize {
        self.a22.nrows()
    }

    pub fn p(&self) -> usize {
        self.b1.ncols()
    }

    pub fn a11(&self) -> &Matrix {
        &self.a11
    }

    pub fn a12(&self) -> &Matrix {
        &self.a12
    }

    pub fn a21(&self) -> &Matrix {
        &self.a21
    }

    pub fn a22(&self) -> &Matrix {
        &self.a22
    }

    pub fn b1(&self) -> &Matrix {
        &self.b1
    }

    pub fn b2(&self) -> &Matrix {
        &self.b2
    }

    pub fn a(&self) -> Matrix {
        let (m, n) = (self.m(), self.n());
        let mut a = Matrix::zeros(m + n, m + n);
        a.view_mut((0, 0), (m, m)).copy_from(&self.a11);
        a.view_mut((0, m), (m, n)).copy_from(&self.a12);
        a.view_mut((m, 0), (n, m)).copy_from(&self.a21);
        a.view_mut((m, m), (n, n)).copy_from(&self.a22);
        a
    }

    pub fn b(&self) -> Matrix {
        let (m, n, p) = (self.m(), self.n(), self.p());
        let mut b = Matrix::zeros(m + n, p);
        b.view_mut((0, 0), (m, p)).copy_from(&self.b1);
        b.view_mut((m, 0), (n, p)).copy_from(&self.b2);
        b
    }

    /// Output matrix `[I_m 0]`.
    pub fn c(&self) -> Matrix {
        let mut c = Matrix::zeros(self.m(), self.m() + self.n());
        c.view_mut((0, 0), (self.m(), self.m())).fill_with_identity();
        c
    }
}

/// Builds the flow model `A = Adj - diag(1^T Adj)` and reorders it so the
/// measured nodes come first. `b` is indexed by original node id.
pub fn flow_system_from_graph(g: &Digraph, partition: &NodePartition, b: &Matrix) -> Result<ClusteredNetworkSystem> {
    let total = g.node_count();
    if partition.node_count() != total {
        return Err(Error::Partition(format!(
            "partition covers {} nodes but the graph has {total}",
            partition.node_count()
        )));
    }
    if b.nrows() != total {
        return Err(Error::Dimension(format!("B has {} rows, expected {total}", b.nrows())));
    }
    let adj = g.adjacency();
    let mut a = adj.clone();
    for j in 0..total {
        let out: f64 = adj.column(j).sum();
        a[(j, j)] -= out;
    }
    let order = partition.ordering();
    let a_perm = Matrix::from_fn(total, total, |i, j| a[(order[i], order[j])]);
    let b_perm = Matrix::from_fn(total, b.ncols(), |i, j| b[(order[i], j)]);
    ClusteredNetworkSystem::from_full(&a_perm, &b_perm, partition.m())
}

pub fn validate_metzler(sys: &ClusteredNetworkSystem) -> bool {
    let a = sys.a();
    (0..a.nrows()).all(|i| {
        (0..a.ncols()).all(|j| if i == j { a[(i, j)] <= 0.0 } else { a[(i, j)] >= 0.0 })
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssumptionReport {
    pub a1_rank_ok: bool,
    pub a12_rank: usize,
    pub a12_generic_rank: usize,
    pub a2_connected: bool,
    pub a2_diagonal_dominance: bool,
    /// `s_i`: total weight of edges into and out of unmeasured node `i` within `A22`.
    pub s: Vec<f64>,
    /// `2 |a_ii|` for each unmeasured node.
    pub dominance_bound: Vec<f64>,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.a1_rank_ok && self.a2_connected && self.a2_diagonal_dominance
    }

    /// Rank and connectivity; the dominance condition is reported only.
    pub fn design_ok(&self) -> bool {
        self.a1_rank_ok && self.a2_connected
    }
}

const DOMINANCE_RTOL: f64 = 1e-12;

pub fn check_assumptions(sys: &ClusteredNetworkSystem) -> AssumptionReport {
    let a12_rank = numeric_rank(sys.a12(), RANK_TOL).unwrap_or(0);
    let a22 = sys.a22();
    let n = sys.n();
    let s: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| a22[(i, j)] + a22[(j, i)]).sum())
        .collect();
    let bound: Vec<f64> = (0..n).map(|i| 2.0 * a22[(i, i)].abs()).collect();
    let slack = |i: usize| DOMINANCE_RTOL * bound[i].max(s[i].abs());
    let weak = (0..n).all(|i| s[i] <= bound[i] + slack(i));
    let strict = (0..n).any(|i| s[i] < bound[i] - slack(i));
    AssumptionReport {
        a1_rank_ok: a12_rank == sys.m(),
        a12_rank,
        a12_generic_rank: generic_rank(sys.a12()),
        a2_connected: pattern_is_weakly_connected(a22),
        a2_diagonal_dominance: weak && strict,
        s,
        dominance_bound: bound,
    }
}
