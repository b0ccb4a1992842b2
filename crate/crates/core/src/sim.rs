//! Joint simulation of a network and its average state observer.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::numerics::{ensure_finite_vec, integrate_lti, Matrix, Vector};
use crate::observer::ObserverDesign;
use crate::system::ClusteredNetworkSystem;

/// `u_g(t) = a_g sin(w_g t + b_g)` per input channel.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InputSignal {
    amplitudes: Vec<f64>,
    frequencies: Vec<f64>,
    phases: Vec<f64>,
}

impl InputSignal {
    pub fn new(amplitudes: Vec<f64>, frequencies: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != frequencies.len() || amplitudes.len() != phases.len() {
            return Err(Error::Dimension(format!(
                "input parameter lengths differ: {}, {}, {}",
                amplitudes.len(),
                frequencies.len(),
                phases.len()
            )));
        }
        if amplitudes.iter().chain(&frequencies).chain(&phases).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input parameters"));
        }
        Ok(Self { amplitudes, frequencies, phases })
    }

    pub fn zero(p: usize) -> Self {
        Self { amplitudes: alloc::vec![0.0; p], frequencies: alloc::vec![0.0; p], phases: alloc::vec![0.0; p] }
    }

    pub fn p(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn eval(&self, t: f64) -> Vector {
        Vector::from_fn(self.p(), |g, _| {
            self.amplitudes[g] * libm::sin(self.frequencies[g] * t + self.phases[g])
        })
    }
}

fn open(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.gen_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

/// Amplitudes in (-0.05, 0.05), frequencies in (0, 0.5) rad/s, phases in (-pi, pi).
pub fn random_input(p: usize, seed: u64) -> InputSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(p);
    let mut w = Vec::with_capacity(p);
    let mut b = Vec::with_capacity(p);
    for _ in 0..p {
        a.push(open(&mut rng, -0.05, 0.05));
        w.push(open(&mut rng, 0.0, 0.5));
        b.push(open(&mut rng, -core::f64::consts::PI, core::f64::consts::PI));
    }
    InputSignal { amplitudes: a, frequencies: w, phases: b }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub times: Vec<f64>,
    /// Cluster averages `Q^+ x2`.
    pub z_true: Vec<Vector>,
    pub z_hat: Vec<Vector>,
    pub zeta: Vec<Vector>,
    pub y: Vec<Vector>,
}

impl SimResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn zeta_norms(&self) -> Vec<f64> {
        self.zeta.iter().map(|z| z.norm()).collect()
    }
}

/// Observer state that makes the initial estimate zero: `w0 = -L y(0)`.
pub fn default_w0(design: &ObserverDesign, sys: &ClusteredNetworkSystem, x0: &Vector) -> Result<Vector> {
    if x0.len() != sys.m() + sys.n() {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), sys.m() + sys.n())));
    }
    Ok(-(design.l() * x0.rows(0, sys.m())))
}

/// Integrates the plant and observer jointly with RK4 on `[x; w]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    sys: &ClusteredNetworkSystem,
    c: &Clustering,
    design: &ObserverDesign,
    x0: &Vector,
    w0: &Vector,
    u: &InputSignal,
    dt: f64,
    t_end: f64,
) -> Result<SimResult> {
    let (m, n, p, k) = (sys.m(), sys.n(), sys.p(), c.k());
    let total = m + n;
    if c.n() != n || design.k() != k || design.l().ncols() != m {
        return Err(Error::Dimension(format!(
            "clustering/design sizes (n = {}, k = {}, L {}x{}) do not match the system (m = {m}, n = {n})",
            c.n(),
            design.k(),
            design.l().nrows(),
            design.l().ncols()
        )));
    }
    if x0.len() != total || w0.len() != k {
        return Err(Error::Dimension(format!(
            "x0 has length {} (expected {total}), w0 has length {} (expected {k})",
            x0.len(),
            w0.len()
        )));
    }
    if u.p() != p {
        return Err(Error::Dimension(format!("input has {} channels, system has p = {p}", u.p())));
    }
    ensure_finite_vec(x0, "x0")?;
    ensure_finite_vec(w0, "w0")?;

    let mut a_aug = Matrix::zeros(total + k, total + k);
    a_aug.view_mut((0, 0), (total, total)).copy_from(&sys.a());
    a_aug.view_mut((total, 0), (k, m)).copy_from(design.k_l());
    a_aug.view_mut((total, total), (k, k)).copy_from(design.m_l());
    let mut b_aug = Matrix::zeros(total + k, p);
    b_aug.view_mut((0, 0), (total, p)).copy_from(&sys.b());
    b_aug.view_mut((total, 0), (k, p)).copy_from(design.n_l());
    let mut s0 = Vector::zeros(total + k);
    s0.rows_mut(0, total).copy_from(x0);
    s0.rows_mut(total, k).copy_from(w0);

    let traj = integrate_lti(&a_aug, &b_aug, |t| u.eval(t), &s0, dt, t_end)?;

    let len = traj.len();
    let mut res = SimResult {
        times: traj.times,
        z_true: Vec::with_capacity(len),
        z_hat: Vec::with_capacity(len),
        zeta: Vec::with_capacity(len),
        y: Vec::with_capacity(len),
    };
    for s in &traj.states {
        let y: Vector = s.rows(0, m).into_owned();
        let x2: Vector = s.rows(m, n).into_owned();
        let w: Vector = s.rows(total, k).into_owned();
        let z = c.average_vector(&x2);
        let z_hat = w + design.l() * &y;
        res.zeta.push(&z - &z_hat);
        res.z_true.push(z);
        res.z_hat.push(z_hat);
        res.y.push(y);
    }
    Ok(res)
}

/// `max ||zeta|| / ||z_true|| * 100` over the final `tail_fraction` of samples.
pub fn zeta_percent(res: &SimResult, tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("tail fraction {tail_fraction} outside (0, 1]")));
    }
    let len = res.len();
    if len == 0 {
        return Err(Error::DegenerateTrajectory("no samples".into()));
    }
    let count = (libm::ceil(len as f64 * tail_fraction) as usize).clamp(1, len);
    let mut worst: f64 = 0.0;
    for i in (len - count)..len {
        let denom = res.z_true[i].norm();
        if !(denom > 0.0) {
            return Err(Error::DegenerateTrajectory(format!(
                "average state vanishes at t = {}",
                res.times[i]
            )));
        }
        worst = worst.max(res.zeta[i].norm() / denom * 100.0);
    }
    Ok(worst)
}
