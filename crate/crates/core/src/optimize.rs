//! Scalar gain search, greedy clustering and the alternating outer loops.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::graph::{neighbor_set_of_measured, NodeSet};
use crate::numerics::Matrix;
use crate::observer::{design_from_gain, h2_cost, v_phi, ObserverContext, ObserverDesign};
use crate::system::ClusteredNetworkSystem;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PhiSearchConfig {
    pub initial_step: f64,
    pub reducer: f64,
    pub tolerance: f64,
    pub initial_phi: f64,
    pub max_expansions: usize,
}

impl Default for PhiSearchConfig {
    fn default() -> Self {
        Self { initial_step: 1.0, reducer: 10.0, tolerance: 1e-8, initial_phi: -1.0, max_expansions: 60 }
    }
}

impl PhiSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("phi search: {what}")));
        if !(self.initial_step > 0.0) || !self.initial_step.is_finite() {
            return bad("initial step must be positive");
        }
        if !(self.reducer >= 2.0) || !self.reducer.is_finite() {
            return bad("reducer must be at least 2");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.initial_phi < 0.0) || !self.initial_phi.is_finite() {
            return bad("initial phi must be negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DescentConfig {
    pub max_outer_iterations: usize,
    pub cost_tolerance: f64,
    pub clustering_tolerance: f64,
    /// Cap on greedy sweeps inside one clustering step.
    pub max_sweeps: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self { max_outer_iterations: 10, cost_tolerance: 1e-8, clustering_tolerance: 1e-6, max_sweeps: 100 }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations == 0 || self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("iteration limits must be positive".into()));
        }
        if !(self.cost_tolerance > 0.0) || !(self.clustering_tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSearchResult {
    pub phi_star: f64,
    /// Detected stability threshold; `-inf` when every probed `phi` was stable.
    pub psi: f64,
    pub cost: f64,
    pub evaluations: usize,
}

/// One line of outer-loop progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub iteration: usize,
    pub cost: f64,
    pub phi: Option<f64>,
}

const PHASE_ITERATION_CAP: usize = 1_000_000;

/// Incremental search for the cost-minimizing `phi` above the stability
/// threshold.
///
/// Phase 1 locates the smallest stable `phi` by stepping up with shrinking
/// steps; phase 2 walks upward from there and refines around the first cost
/// increase.
pub fn phi_search<C, H>(mut cost: C, mut is_hurwitz: H, cfg: &PhiSearchConfig) -> Result<PhiSearchResult>
where
    C: FnMut(f64) -> f64,
    H: FnMut(f64) -> bool,
{
    cfg.validate()?;
    let eta = cfg.reducer;
    let tol = cfg.tolerance;
    let mut evaluations = 0usize;

    // an unstable starting point below the threshold
    let mut phi0 = cfg.initial_phi;
    let mut below_found = !is_hurwitz(phi0);
    let mut probe = phi0;
    for _ in 0..cfg.max_expansions {
        if below_found {
            break;
        }
        probe *= 2.0;
        if !is_hurwitz(probe) {
            phi0 = probe;
            below_found = true;
        }
    }

    let (psi, start) = if below_found {
        // bracket the threshold from above
        let mut lo = phi0;
        let mut hi = None;
        let mut step = cfg.initial_step;
        for _ in 0..=cfg.max_expansions {
            let cand = phi0 + step;
            if is_hurwitz(cand) {
                hi = Some(cand);
                break;
            }
            lo = cand;
            step *= 2.0;
        }
        let hi = hi.ok_or_else(|| {
            Error::NotStabilizable(format!("no stable phi found up to {}", phi0 + step / 2.0))
        })?;

        let mut phi = lo;
        let mut eps1 = hi - lo;
        let mut psi = hi;
        let mut iterations = 0;
        loop {
            if is_hurwitz(phi) {
                psi = phi;
                phi -= eps1;
                eps1 /= eta;
            } else {
                phi += eps1;
            }
            iterations += 1;
            if eta * eps1 <= tol {
                break;
            }
            if iterations > PHASE_ITERATION_CAP {
                return Err(Error::NoConvergence { routine: "phi_search", detail: "threshold search".into() });
            }
        }
        (psi, psi + eps1 * eta)
    } else {
        (f64::NEG_INFINITY, cfg.initial_phi)
    };

    let mut eps = cfg.initial_step;
    let mut phi = start;
    let mut c = cost(phi);
    evaluations += 1;
    let limit = start + 1e6 * cfg.initial_step;
    let mut iterations = 0;
    loop {
        phi += eps;
        let c1 = cost(phi);
        evaluations += 1;
        if c1 > c {
            phi -= 2.0 * eps;
            eps /= eta;
            c = cost(phi);
            evaluations += 1;
        } else {
            c = c1;
        }
        if eta * eps <= tol {
            break;
        }
        if phi > limit {
            return Err(Error::UnboundedDescent { phi });
        }
        iterations += 1;
        if iterations > PHASE_ITERATION_CAP {
            return Err(Error::NoConvergence { routine: "phi_search", detail: "cost descent".into() });
        }
    }
    let phi_star = phi + eps * eta;
    let final_cost = cost(phi_star);
    evaluations += 1;
    Ok(PhiSearchResult { phi_star, psi, cost: final_cost, evaluations })
}

/// Unconstrained greedy clustering; returns the clustering and its cost.
///
/// Nodes are visited in order and each is moved to the cluster with the
/// lowest strictly better cost, never emptying its current cluster.
pub fn greedy_search<F>(initial: &Clustering, mut cost: F, max_sweeps: usize) -> (Clustering, f64)
where
    F: FnMut(&Clustering) -> f64,
{
    let mut current = initial.clone();
    let mut best = cost(&current);
    for _ in 0..max_sweeps {
        let mut moved = false;
        for i in 0..current.n() {
            let mut choice: Option<(Clustering, f64)> = None;
            for theta in 0..current.k() {
                if let Some(cand) = current.with_move(i, theta) {
                    let c = cost(&cand);
                    let bar = choice.as_ref().map_or(best, |(_, v)| *v);
                    if c < bar {
                        choice = Some((cand, c));
                    }
                }
            }
            if let Some((next, c)) = choice {
                current = next;
                best = c;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    (current, best)
}

pub fn greedy_clustering<F>(initial: &Clustering, cost: F, max_sweeps: usize) -> Clustering
where
    F: FnMut(&Clustering) -> f64,
{
    greedy_search(initial, cost, max_sweeps).0
}

fn undirected_neighbors(a22: &Matrix) -> Vec<Vec<usize>> {
    let n = a22.nrows();
    (0..n)
        .map(|i| (0..n).filter(|&j| j != i && (a22[(i, j)] != 0.0 || a22[(j, i)] != 0.0)).collect())
        .collect()
}

/// Initial clustering of the constrained scheme: `nset` is dealt round-robin
/// (in node order) over `k` seeds, then every seed grows by its own
/// breadth-first frontier over the `A22` pattern until all nodes are covered.
pub fn initial_constrained_clustering(a22: &Matrix, nset: &NodeSet, k: usize) -> Result<Clustering> {
    let n = a22.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if let Some(&bad) = nset.iter().find(|&&i| i >= n) {
        return Err(Error::NodeOutOfRange { id: bad, node_count: n });
    }
    if nset.len() < k {
        return Err(Error::TooFewNeighbors { available: nset.len(), k });
    }
    let adj = undirected_neighbors(a22);
    let mut labels = vec![usize::MAX; n];
    let mut frontiers: Vec<VecDeque<usize>> = vec![VecDeque::new(); k];
    for (pos, &i) in nset.iter().enumerate() {
        labels[i] = pos % k;
        frontiers[pos % k].push_back(i);
    }
    let mut assigned = nset.len();
    while assigned < n {
        let mut grew = false;
        for alpha in 0..k {
            let layer: Vec<usize> = frontiers[alpha].drain(..).collect();
            for i in layer {
                for &j in &adj[i] {
                    if labels[j] == usize::MAX {
                        labels[j] = alpha;
                        frontiers[alpha].push_back(j);
                        assigned += 1;
                        grew = true;
                    }
                }
            }
        }
        if !grew {
            return Err(Error::NotConnected);
        }
    }
    Clustering::new(labels, k)
}

/// Greedy moves restricted to nodes outside `nset`, so every cluster keeps its
/// `nset` members. Stops when a sweep improves the cost by less than
/// `cfg.clustering_tolerance` or moves nothing.
pub fn constrained_search<F>(initial: &Clustering, nset: &NodeSet, mut cost: F, cfg: &DescentConfig) -> (Clustering, f64)
where
    F: FnMut(&Clustering) -> f64,
{
    let movable: Vec<usize> = (0..initial.n()).filter(|i| !nset.contains(i)).collect();
    let mut q1 = initial.clone();
    let mut c0 = cost(&q1);
    for _ in 0..cfg.max_sweeps {
        let c1 = c0;
        let mut moved = false;
        for &i in &movable {
            for alpha in 0..q1.k() {
                if let Some(q2) = q1.with_move(i, alpha) {
                    let c2 = cost(&q2);
                    if c2 < c0 {
                        c0 = c2;
                        q1 = q2;
                        moved = true;
                    }
                }
            }
        }
        if !moved || c1 - c0 < cfg.clustering_tolerance {
            break;
        }
    }
    (q1, c0)
}

/// Full constrained clustering: initialization followed by the restricted
/// greedy phase.
pub fn constrained_clustering<F>(a22: &Matrix, nset: &NodeSet, k: usize, cost: F, cfg: &DescentConfig) -> Result<Clustering>
where
    F: FnMut(&Clustering) -> f64,
{
    let initial = initial_constrained_clustering(a22, nset, k)?;
    Ok(constrained_search(&initial, nset, cost, cfg).0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentResult {
    pub clustering: Clustering,
    pub design: ObserverDesign,
    /// `None` for externally supplied gains.
    pub phi_star: Option<f64>,
    pub psi: Option<f64>,
    /// Cost of the incumbent after each outer iteration; non-increasing, and
    /// the last entry is the cost of the returned design.
    pub cost_trace: Vec<f64>,
    pub outer_iterations: usize,
}

impl DescentResult {
    pub fn cost(&self) -> f64 {
        *self.cost_trace.last().expect("trace is never empty")
    }
}

/// Alternates the `phi` search (clustering fixed) with the constrained greedy
/// clustering (`phi` fixed).
pub fn coordinate_descent(
    sys: &ClusteredNetworkSystem,
    k: usize,
    cfg: &DescentConfig,
    phi_cfg: &PhiSearchConfig,
) -> Result<DescentResult> {
    coordinate_descent_with_progress(sys, k, cfg, phi_cfg, &mut |_| {})
}

pub fn coordinate_descent_with_progress(
    sys: &ClusteredNetworkSystem,
    k: usize,
    cfg: &DescentConfig,
    phi_cfg: &PhiSearchConfig,
    on_progress: &mut dyn FnMut(Progress),
) -> Result<DescentResult> {
    cfg.validate()?;
    phi_cfg.validate()?;
    if k == 0 || k > sys.m() {
        return Err(Error::InvalidArgument(format!(
            "number of clusters k = {k} must satisfy 1 <= k <= m = {}",
            sys.m()
        )));
    }
    let ctx = ObserverContext::new(sys)?;
    let nset = neighbor_set_of_measured(sys.a12());
    let mut q = initial_constrained_clustering(sys.a22(), &nset, k)?;

    let mut trace = Vec::new();
    let mut incumbent: Option<(f64, f64)> = None; // (phi, J(phi, q)) carried into the next round
    let mut phi = 0.0;
    let mut psi = f64::NEG_INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_outer_iterations {
        iterations += 1;
        let pp = ctx.phi_problem(&q)?;
        let found = phi_search(|f| pp.cost(f), |f| pp.is_hurwitz(f), phi_cfg);
        let (mut c, new_phi, new_psi) = match (found, incumbent) {
            (Ok(r), _) => (pp.cost(r.phi_star), r.phi_star, r.psi),
            (Err(e), None) => return Err(e),
            (Err(_), Some((p, cost))) => (cost, p, psi),
        };
        phi = new_phi;
        psi = new_psi;
        if let Some((p, cost)) = incumbent {
            if !(c <= cost) {
                phi = p;
                c = cost;
            }
        }
        if !c.is_finite() {
            return Err(Error::NotStabilizable(format!("no finite cost at phi = {phi}")));
        }
        trace.push(c);
        on_progress(Progress { iteration: iterations, cost: c, phi: Some(phi) });

        let (q_star, c_star) = constrained_search(&q, &nset, |cand| ctx.cost_at(cand, phi), cfg);
        if !(c_star < c) {
            break;
        }
        q = q_star;
        incumbent = Some((phi, c_star));
        if c - c_star < cfg.cost_tolerance || iterations == cfg.max_outer_iterations {
            trace.push(c_star);
            on_progress(Progress { iteration: iterations, cost: c_star, phi: Some(phi) });
            break;
        }
    }

    let design = ctx.design_from_v(&q, &v_phi(sys, &q, phi)?)?;
    Ok(DescentResult { clustering: q, design, phi_star: Some(phi), psi: Some(psi), cost_trace: trace, outer_iterations: iterations })
}

/// Outer loop with an injected gain provider and the unconstrained greedy
/// clustering, starting from a random clustering drawn with `seed`.
pub fn coordinate_descent_with_gain_oracle<S>(
    sys: &ClusteredNetworkSystem,
    k: usize,
    solver: S,
    cfg: &DescentConfig,
    seed: u64,
) -> Result<DescentResult>
where
    S: FnMut(&ClusteredNetworkSystem, &Clustering) -> Result<Matrix>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = Clustering::random(sys.n(), k, &mut rng)?;
    descent_with_gain_oracle_from(sys, initial, solver, cfg, &mut |_| {})
}

pub fn descent_with_gain_oracle_from<S>(
    sys: &ClusteredNetworkSystem,
    initial: Clustering,
    mut solver: S,
    cfg: &DescentConfig,
    on_progress: &mut dyn FnMut(Progress),
) -> Result<DescentResult>
where
    S: FnMut(&ClusteredNetworkSystem, &Clustering) -> Result<Matrix>,
{
    cfg.validate()?;
    if initial.n() != sys.n() {
        return Err(Error::Dimension(format!("clustering has {} nodes, system n = {}", initial.n(), sys.n())));
    }
    let gain_cost = |q: &Clustering, l: &Matrix| match design_from_gain(sys, q, l) {
        Ok(d) => h2_cost(d.m_l(), d.r_l()),
        Err(_) => f64::INFINITY,
    };
    let mut q = initial;
    let mut trace = Vec::new();
    let mut incumbent: Option<(Matrix, f64)> = None;
    let mut l = Matrix::zeros(q.k(), sys.m());
    let mut iterations = 0;
    while iterations < cfg.max_outer_iterations {
        iterations += 1;
        let proposed = match solver(sys, &q) {
            Ok(g) => Some(g),
            Err(e) if incumbent.is_none() => return Err(Error::Oracle(format!("{e}"))),
            Err(_) => None,
        };
        let mut c = f64::INFINITY;
        if let Some(g) = proposed {
            c = gain_cost(&q, &g);
            l = g;
        }
        if let Some((prev, cost)) = incumbent.take() {
            if !(c <= cost) {
                l = prev;
                c = cost;
            }
        }
        trace.push(c);
        on_progress(Progress { iteration: iterations, cost: c, phi: None });
        if !c.is_finite() {
            break;
        }

        let gain = l.clone();
        let (q_star, c_star) = greedy_search(&q, |cand| gain_cost(cand, &gain), cfg.max_sweeps);
        if !(c_star < c) {
            break;
        }
        q = q_star;
        incumbent = Some((l.clone(), c_star));
        if c - c_star < cfg.cost_tolerance || iterations == cfg.max_outer_iterations {
            trace.push(c_star);
            on_progress(Progress { iteration: iterations, cost: c_star, phi: None });
            break;
        }
    }
    if l.shape() != (q.k(), sys.m()) {
        return Err(Error::Oracle(format!("gain is {}x{}, expected {}x{}", l.nrows(), l.ncols(), q.k(), sys.m())));
    }
    let design = design_from_gain(sys, &q, &l)?;
    Ok(DescentResult { clustering: q, design, phi_star: None, psi: None, cost_trace: trace, outer_iterations: iterations })
}

/// Gain provider that runs the `phi` search for the given clustering.
pub fn phi_gain_solver(phi_cfg: PhiSearchConfig) -> impl FnMut(&ClusteredNetworkSystem, &Clustering) -> Result<Matrix> {
    move |sys, q| {
        let ctx = ObserverContext::new(sys)?;
        let pp = ctx.phi_problem(q)?;
        let r = phi_search(|f| pp.cost(f), |f| pp.is_hurwitz(f), &phi_cfg)?;
        Ok(pp.gain(r.phi_star))
    }
}
