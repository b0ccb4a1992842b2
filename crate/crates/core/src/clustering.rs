//! Partitions of the unmeasured nodes, their characteristic matrices and the
//! projected (aggregated) system.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::NodeSet;
use crate::numerics::{numeric_rank, Matrix, Vector, RANK_TOL};
use crate::system::ClusteredNetworkSystem;

/// Assignment of `n` unmeasured nodes to `k` nonempty clusters.
///
/// Labels are 0-based here; file formats use 1-based labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawClustering", into = "RawClustering"))]
pub struct Clustering {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct RawClustering {
    k: usize,
    labels: Vec<usize>,
}

#[cfg(feature = "serde")]
impl TryFrom<RawClustering> for Clustering {
    type Error = Error;

    fn try_from(raw: RawClustering) -> Result<Self> {
        Clustering::from_one_based(&raw.labels, raw.k)
    }
}

#[cfg(feature = "serde")]
impl From<Clustering> for RawClustering {
    fn from(c: Clustering) -> Self {
        RawClustering { k: c.k(), labels: c.one_based_labels() }
    }
}

impl Clustering {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Clustering("no nodes".into()));
        }
        if k == 0 {
            return Err(Error::Clustering("k must be at least 1".into()));
        }
        let mut sizes = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::Clustering(format!("node {i} has label {l} outside 0..{k}")));
            }
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Clustering(format!("cluster {} is empty", empty + 1)));
        }
        Ok(Self { labels, sizes })
    }

    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&l| l == 0) {
            return Err(Error::Clustering(format!("node {i} has label 0; labels start at 1")));
        }
        Self::new(labels.iter().map(|&l| l - 1).collect(), k)
    }

    /// Builds from explicit member lists (0-based node indices).
    pub fn from_clusters(n: usize, clusters: &[Vec<usize>]) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (alpha, members) in clusters.iter().enumerate() {
            for &i in members {
                if i >= n {
                    return Err(Error::NodeOutOfRange { id: i, node_count: n });
                }
                if labels[i] != usize::MAX {
                    return Err(Error::Clustering(format!("node {i} appears in two clusters")));
                }
                labels[i] = alpha;
            }
        }
        if let Some(i) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::Clustering(format!("node {i} is unassigned")));
        }
        Self::new(labels, clusters.len())
    }

    pub fn singletons(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), n)
    }

    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![0; n], 1)
    }

    /// Uniformly random labels conditioned on every cluster being nonempty:
    /// `k` randomly chosen nodes seed distinct clusters, the rest are uniform.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Clustering(format!("cannot split {n} nodes into {k} nonempty clusters")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut labels = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            labels[i] = if pos < k { pos } else { rng.gen_range(0..k) };
        }
        Self::new(labels, k)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn one_based_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn members(&self, alpha: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == alpha).collect()
    }

    /// Moves node `i` to cluster `to`. `None` if that would empty its cluster
    /// or `to` is its current cluster.
    pub fn with_move(&self, i: usize, to: usize) -> Option<Self> {
        let from = self.labels[i];
        if from == to || to >= self.k() || self.sizes[from] <= 1 {
            return None;
        }
        let mut next = self.clone();
        next.labels[i] = to;
        next.sizes[from] -= 1;
        next.sizes[to] += 1;
        Some(next)
    }

    /// `Q^+ X`: row `alpha` is the mean of the rows of `x` in cluster `alpha`.
    pub fn average_rows(&self, x: &Matrix) -> Matrix {
        debug_assert_eq!(x.nrows(), self.n());
        let mut out = Matrix::zeros(self.k(), x.ncols());
        for (i, &l) in self.labels.iter().enumerate() {
            let mut row = out.row_mut(l);
            row += x.row(i);
        }
        for (alpha, &s) in self.sizes.iter().enumerate() {
            out.row_mut(alpha).scale_mut(1.0 / s as f64);
        }
        out
    }

    /// `X Q`: column `alpha` is the sum of the columns of `x` in cluster `alpha`.
    pub fn sum_columns(&self, x: &Matrix) -> Matrix {
        debug_assert_eq!(x.ncols(), self.n());
        let mut out = Matrix::zeros(x.nrows(), self.k());
        for (j, &l) in self.labels.iter().enumerate() {
            let mut col = out.column_mut(l);
            col += x.column(j);
        }
        out
    }

    /// `Q^+ v` for a vector.
    pub fn average_vector(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.k());
        for (i, &l) in self.labels.iter().enumerate() {
            out[l] += v[i];
        }
        for (alpha, &s) in self.sizes.iter().enumerate() {
            out[alpha] /= s as f64;
        }
        out
    }
}

pub fn characteristic_matrix(c: &Clustering) -> Matrix {
    let mut q = Matrix::zeros(c.n(), c.k());
    for (i, &l) in c.labels().iter().enumerate() {
        q[(i, l)] = 1.0;
    }
    q
}

/// Closed-form left pseudo-inverse of a characteristic matrix:
/// `[Q^+]_{alpha i} = 1 / n_alpha` for members of cluster `alpha`.
pub fn left_pseudo(q: &Matrix) -> Result<Matrix> {
    let (n, k) = q.shape();
    let mut sizes = vec![0usize; k];
    for i in 0..n {
        let mut hits = 0;
        for a in 0..k {
            let v = q[(i, a)];
            if v == 1.0 {
                sizes[a] += 1;
                hits += 1;
            } else if v != 0.0 {
                return Err(Error::Clustering(format!("entry ({i}, {a}) = {v} is not 0 or 1")));
            }
        }
        if hits != 1 {
            return Err(Error::Clustering(format!("row {i} has {hits} ones")));
        }
    }
    if let Some(a) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Clustering(format!("cluster {} is empty", a + 1)));
    }
    Ok(Matrix::from_fn(k, n, |a, i| if q[(i, a)] == 1.0 { 1.0 / sizes[a] as f64 } else { 0.0 }))
}

/// Aggregated model driven by the average deviation `sigma`:
/// `[x1; z]' = E [x1; z] + F sigma + G u`, `y = H [x1; z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSystem {
    pub e11: Matrix,
    pub e12: Matrix,
    pub e21: Matrix,
    pub e22: Matrix,
    pub f1: Matrix,
    pub f2: Matrix,
    pub g1: Matrix,
    pub g2: Matrix,
}

impl ProjectedSystem {
    pub fn m(&self) -> usize {
        self.e11.nrows()
    }

    pub fn k(&self) -> usize {
        self.e22.nrows()
    }

    pub fn e(&self) -> Matrix {
        let (m, k) = (self.m(), self.k());
        let mut e = Matrix::zeros(m + k, m + k);
        e.view_mut((0, 0), (m, m)).copy_from(&self.e11);
        e.view_mut((0, m), (m, k)).copy_from(&self.e12);
        e.view_mut((m, 0), (k, m)).copy_from(&self.e21);
        e.view_mut((m, m), (k, k)).copy_from(&self.e22);
        e
    }

    pub fn f(&self) -> Matrix {
        let (m, k, n) = (self.m(), self.k(), self.f1.ncols());
        let mut f = Matrix::zeros(m + k, n);
        f.view_mut((0, 0), (m, n)).copy_from(&self.f1);
        f.view_mut((m, 0), (k, n)).copy_from(&self.f2);
        f
    }

    pub fn g(&self) -> Matrix {
        let (m, k, p) = (self.m(), self.k(), self.g1.ncols());
        let mut g = Matrix::zeros(m + k, p);
        g.view_mut((0, 0), (m, p)).copy_from(&self.g1);
        g.view_mut((m, 0), (k, p)).copy_from(&self.g2);
        g
    }

    pub fn h(&self) -> Matrix {
        let mut h = Matrix::zeros(self.m(), self.m() + self.k());
        h.view_mut((0, 0), (self.m(), self.m())).fill_with_identity();
        h
    }
}

fn check_n(sys: &ClusteredNetworkSystem, c: &Clustering) -> Result<()> {
    if sys.n() != c.n() {
        return Err(Error::Dimension(format!(
            "clustering covers {} nodes but the system has n = {}",
            c.n(),
            sys.n()
        )));
    }
    Ok(())
}

pub fn project_system(sys: &ClusteredNetworkSystem, c: &Clustering) -> Result<ProjectedSystem> {
    check_n(sys, c)?;
    let f2 = c.average_rows(sys.a22());
    Ok(ProjectedSystem {
        e11: sys.a11().clone(),
        e12: c.sum_columns(sys.a12()),
        e21: c.average_rows(sys.a21()),
        e22: c.sum_columns(&f2),
        f1: sys.a12().clone(),
        f2,
        g1: sys.b1().clone(),
        g2: c.average_rows(sys.b2()),
    })
}

/// `sigma = (I - Q Q^+) x2`: each entry minus its cluster mean.
pub fn deviation(x2: &Vector, c: &Clustering) -> Result<Vector> {
    if x2.len() != c.n() {
        return Err(Error::Dimension(format!("x2 has length {}, expected {}", x2.len(), c.n())));
    }
    let means = c.average_vector(x2);
    Ok(Vector::from_fn(c.n(), |i, _| x2[i] - means[c.label(i)]))
}

/// `rank(A12 Q) = k`.
pub fn stabilizability_rank_ok(a12: &Matrix, c: &Clustering) -> bool {
    if a12.ncols() != c.n() || c.k() > a12.nrows() {
        return false;
    }
    numeric_rank(&c.sum_columns(a12), RANK_TOL).map(|r| r == c.k()).unwrap_or(false)
}

/// Every cluster contains at least one node of `nset`.
pub fn cluster_constraint_ok(c: &Clustering, nset: &NodeSet) -> bool {
    let mut hit = vec![false; c.k()];
    for &i in nset {
        if i < c.n() {
            hit[c.label(i)] = true;
        }
    }
    hit.iter().all(|&h| h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tridiag() -> Matrix {
        Matrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -2.0])
    }

    fn toy_system(a22: Matrix, a12: Matrix) -> ClusteredNetworkSystem {
        let (m, n) = a12.shape();
        ClusteredNetworkSystem::from_blocks(
            Matrix::from_diagonal_element(m, m, -1.0),
            a12,
            Matrix::from_element(n, m, 0.5),
            a22,
            Matrix::from_element(m, 1, 1.0),
            Matrix::from_fn(n, 1, |i, _| i as f64),
        )
        .unwrap()
    }

    #[test]
    fn characteristic_matrix_examples() {
        let c = Clustering::from_one_based(&[1, 1, 2], 2).unwrap();
        assert_eq!(characteristic_matrix(&c), Matrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]));
        assert_eq!(characteristic_matrix(&Clustering::singletons(4).unwrap()), Matrix::identity(4, 4));
        assert_eq!(characteristic_matrix(&Clustering::single(3).unwrap()), Matrix::from_element(3, 1, 1.0));
    }

    #[test]
    fn empty_clusters_are_rejected() {
        assert!(Clustering::new(vec![0, 0, 2], 3).is_err());
        assert!(Clustering::new(vec![0, 3], 2).is_err());
        assert!(Clustering::from_one_based(&[0, 1], 2).is_err());
        assert!(Clustering::from_clusters(3, &[vec![0], vec![1]]).is_err());
        assert!(left_pseudo(&Matrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])).is_err());
    }

    #[test]
    fn left_pseudo_examples() {
        let q = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(left_pseudo(&q).unwrap(), Matrix::from_row_slice(2, 3, &[0.5, 0.5, 0.0, 0.0, 0.0, 1.0]));
        assert_eq!(left_pseudo(&Matrix::identity(3, 3)).unwrap(), Matrix::identity(3, 3));
        assert_eq!(left_pseudo(&Matrix::from_element(4, 1, 1.0)).unwrap(), Matrix::from_element(1, 4, 0.25));
    }

    #[test]
    fn aggregation_helpers_match_dense_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(2..12);
            let k = rng.gen_range(1..=n);
            let c = Clustering::random(n, k, &mut rng).unwrap();
            let q = characteristic_matrix(&c);
            let qp = left_pseudo(&q).unwrap();
            let x = Matrix::from_fn(n, 4, |_, _| rng.gen_range(-1.0..1.0));
            let y = Matrix::from_fn(3, n, |_, _| rng.gen_range(-1.0..1.0));
            assert!((c.average_rows(&x) - &qp * &x).amax() < 1e-14);
            assert!((c.sum_columns(&y) - &y * &q).amax() < 1e-14);
            assert!((&qp * &q - Matrix::identity(k, k)).amax() < 1e-12);
            let proj = &q * &qp;
            assert!((&proj * &proj - &proj).amax() < 1e-12);
        }
    }

    #[test]
    fn projection_examples() {
        let a12 = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let sys = toy_system(tridiag(), a12);
        let ps = project_system(&sys, &Clustering::from_one_based(&[1, 1, 2], 2).unwrap()).unwrap();
        assert_eq!(ps.e22, Matrix::from_row_slice(2, 2, &[-1.0, 0.5, 1.0, -2.0]));
        assert_eq!(ps.e12, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]));

        let ps = project_system(&sys, &Clustering::singletons(3).unwrap()).unwrap();
        assert_eq!(ps.e22, tridiag());
        assert_eq!(ps.f2, tridiag());

        let ps = project_system(&sys, &Clustering::single(3).unwrap()).unwrap();
        assert!((ps.e22[(0, 0)] - tridiag().sum() / 3.0).abs() < 1e-15);
        assert_eq!(ps.e().nrows(), 3);
        assert_eq!(ps.h(), Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));

        assert!(project_system(&sys, &Clustering::single(4).unwrap()).is_err());
    }

    #[test]
    fn relabeling_permutes_e22() {
        let a12 = Matrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let sys = toy_system(tridiag(), a12);
        let a = project_system(&sys, &Clustering::from_one_based(&[1, 1, 2], 2).unwrap()).unwrap();
        let b = project_system(&sys, &Clustering::from_one_based(&[2, 2, 1], 2).unwrap()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a.e22[(i, j)], b.e22[(1 - i, 1 - j)]);
            }
        }
    }

    #[test]
    fn deviation_examples() {
        let c = Clustering::from_one_based(&[1, 1, 2], 2).unwrap();
        let s = deviation(&Vector::from_vec(vec![1.0, 3.0, 5.0]), &c).unwrap();
        assert_eq!(s, Vector::from_vec(vec![-1.0, 1.0, 0.0]));
        let s = deviation(&Vector::from_vec(vec![4.0, 4.0, -2.0]), &c).unwrap();
        assert_eq!(s, Vector::zeros(3));
        let x = Vector::from_vec(vec![0.3, -1.7, 2.2]);
        assert!(c.average_vector(&deviation(&x, &c).unwrap()).amax() < 1e-15);
        assert!(deviation(&Vector::zeros(2), &c).is_err());
    }

    #[test]
    fn stabilizability_examples() {
        let a12 = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(!stabilizability_rank_ok(&a12, &Clustering::from_one_based(&[1, 1, 2], 2).unwrap()));
        assert!(stabilizability_rank_ok(&a12, &Clustering::from_one_based(&[1, 2, 1], 2).unwrap()));
        assert!(!stabilizability_rank_ok(&a12, &Clustering::singletons(3).unwrap()));
    }

    #[test]
    fn constraint_examples() {
        let nset: NodeSet = [0, 1].into_iter().collect();
        assert!(cluster_constraint_ok(&Clustering::from_one_based(&[1, 2, 1], 2).unwrap(), &nset));
        assert!(!cluster_constraint_ok(&Clustering::from_one_based(&[1, 1, 2], 2).unwrap(), &nset));
        assert!(!cluster_constraint_ok(&Clustering::single(3).unwrap(), &NodeSet::new()));
    }

    #[test]
    fn moves_respect_singletons() {
        let c = Clustering::from_one_based(&[1, 2], 2).unwrap();
        assert!(c.with_move(0, 1).is_none());
        let c = Clustering::from_one_based(&[1, 1, 2], 2).unwrap();
        let moved = c.with_move(0, 1).unwrap();
        assert_eq!(moved.sizes(), &[1, 2]);
        assert!(c.with_move(0, 0).is_none());
    }
}
