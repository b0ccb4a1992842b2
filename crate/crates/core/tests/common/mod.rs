#![allow(dead_code)]

use clusterobs_core::clustering::Clustering;
use clusterobs_core::numerics::{numeric_rank, Matrix, RANK_TOL};
use clusterobs_core::system::ClusteredNetworkSystem;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Connected A22 pattern (random tree plus extra edges) with weights in
/// (0.1, 1) and a diagonal that makes `s_i < 2 |a_ii|` for every node.
pub fn dominant_a22(rng: &mut ChaCha8Rng, n: usize, extra_density: f64) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for t in 1..n {
        let parent = rng.gen_range(0..t);
        if rng.gen_bool(0.5) {
            a[(t, parent)] = uniform(rng, 0.1, 1.0);
        } else {
            a[(parent, t)] = uniform(rng, 0.1, 1.0);
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] == 0.0 && rng.gen_bool(extra_density) {
                a[(i, j)] = uniform(rng, 0.1, 1.0);
            }
        }
    }
    for i in 0..n {
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)] + a[(j, i)]).sum();
        a[(i, i)] = -(s / 2.0 + uniform(rng, 0.05, 0.5));
    }
    a
}

/// Nonnegative m x n matrix with full row rank: row `i` owns column `perm[i]`.
pub fn full_rank_a12(rng: &mut ChaCha8Rng, m: usize, n: usize, density: f64) -> Matrix {
    assert!(m <= n);
    loop {
        let mut cols: Vec<usize> = (0..n).collect();
        cols.shuffle(rng);
        let mut a = Matrix::zeros(m, n);
        for i in 0..m {
            a[(i, cols[i])] = uniform(rng, 0.1, 1.0);
            for j in 0..n {
                if a[(i, j)] == 0.0 && rng.gen_bool(density) {
                    a[(i, j)] = uniform(rng, 0.1, 1.0);
                }
            }
        }
        if numeric_rank(&a, RANK_TOL).unwrap() == m {
            return a;
        }
    }
}

fn sparse_nonneg(rng: &mut ChaCha8Rng, r: usize, c: usize, density: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| if rng.gen_bool(density) { uniform(rng, 0.1, 1.0) } else { 0.0 })
}

/// Random system satisfying rank(A12) = m and both parts of the dominance
/// and connectivity assumption.
pub fn random_system(rng: &mut ChaCha8Rng, m: usize, n: usize, p: usize) -> ClusteredNetworkSystem {
    let a22 = dominant_a22(rng, n, 0.2);
    let a12 = full_rank_a12(rng, m, n, 0.2);
    let mut a11 = sparse_nonneg(rng, m, m, 0.3);
    for i in 0..m {
        a11[(i, i)] = -uniform(rng, 0.5, 2.0);
    }
    let a21 = sparse_nonneg(rng, n, m, 0.3);
    let b1 = sparse_nonneg(rng, m, p, 0.3);
    let b2 = sparse_nonneg(rng, n, p, 0.3);
    ClusteredNetworkSystem::from_blocks(a11, a12, a21, a22, b1, b2).unwrap()
}

/// Random clustering in which every cluster contains a node from `nset`.
pub fn random_constrained_clustering(rng: &mut ChaCha8Rng, n: usize, k: usize, nset: &[usize]) -> Clustering {
    assert!(nset.len() >= k);
    let mut seeds = nset.to_vec();
    seeds.shuffle(rng);
    let mut labels = vec![usize::MAX; n];
    for (alpha, &i) in seeds.iter().take(k).enumerate() {
        labels[i] = alpha;
    }
    for l in labels.iter_mut() {
        if *l == usize::MAX {
            *l = rng.gen_range(0..k);
        }
    }
    Clustering::new(labels, k).unwrap()
}
