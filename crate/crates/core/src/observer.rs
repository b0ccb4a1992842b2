//! Average state observer: gain construction, error-system matrices, H2 cost
//! and the tunability test.
//!
//! The observer is `w' = M_L w + K_L y + N_L u`, `z_hat = w + L y`, and the
//! estimation error obeys `zeta' = M_L zeta + R_L sigma`.

use alloc::format;

use crate::clustering::{characteristic_matrix, Clustering};
use crate::error::{Error, Result};
use crate::numerics::{
    ensure_finite, hurwitz_margin, lyapunov_gramian, lyapunov_solve, numeric_rank, pseudoinverse, Matrix,
    HURWITZ_TOL, RANK_TOL,
};
use crate::system::ClusteredNetworkSystem;

/// Gain `L` (k x m) with the derived observer matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDesign {
    l: Matrix,
    m_l: Matrix,
    k_l: Matrix,
    n_l: Matrix,
    r_l: Matrix,
}

impl ObserverDesign {
    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn m_l(&self) -> &Matrix {
        &self.m_l
    }

    pub fn k_l(&self) -> &Matrix {
        &self.k_l
    }

    pub fn n_l(&self) -> &Matrix {
        &self.n_l
    }

    pub fn r_l(&self) -> &Matrix {
        &self.r_l
    }

    pub fn k(&self) -> usize {
        self.l.nrows()
    }

    pub fn hurwitz_margin(&self) -> Result<f64> {
        hurwitz_margin(&self.m_l)
    }

    pub fn h2_cost(&self) -> f64 {
        h2_cost(&self.m_l, &self.r_l)
    }
}

/// Builds the observer for an arbitrary gain `L`.
pub fn design_from_gain(sys: &ClusteredNetworkSystem, c: &Clustering, l: &Matrix) -> Result<ObserverDesign> {
    if sys.n() != c.n() {
        return Err(Error::Dimension(format!("clustering has {} nodes, system n = {}", c.n(), sys.n())));
    }
    if l.shape() != (c.k(), sys.m()) {
        return Err(Error::Dimension(format!(
            "L is {}x{}, expected {}x{}",
            l.nrows(),
            l.ncols(),
            c.k(),
            sys.m()
        )));
    }
    ensure_finite(l, "L")?;
    let f2 = c.average_rows(sys.a22());
    let e22 = c.sum_columns(&f2);
    let e12 = c.sum_columns(sys.a12());
    let e21 = c.average_rows(sys.a21());
    let g2 = c.average_rows(sys.b2());

    let m_l = e22 - l * e12;
    let k_l = e21 - l * sys.a11() + &m_l * l;
    let n_l = g2 - l * sys.b1();
    let r_l = f2 - l * sys.a12();
    Ok(ObserverDesign { l: l.clone(), m_l, k_l, n_l, r_l })
}

/// Cached factors of a system needed by every gain computation: the right
/// inverse `A12^-` and `A22 A12^-`. Construction enforces `rank(A12) = m`.
#[derive(Debug, Clone)]
pub struct ObserverContext<'a> {
    sys: &'a ClusteredNetworkSystem,
    a12_pinv: Matrix,
    a22_a12_pinv: Matrix,
}

impl<'a> ObserverContext<'a> {
    pub fn new(sys: &'a ClusteredNetworkSystem) -> Result<Self> {
        let rank = numeric_rank(sys.a12(), RANK_TOL)?;
        if rank < sys.m() {
            return Err(Error::RankDeficient { rank, m: sys.m() });
        }
        let a12_pinv = pseudoinverse(sys.a12())?;
        let a22_a12_pinv = sys.a22() * &a12_pinv;
        Ok(Self { sys, a12_pinv, a22_a12_pinv })
    }

    pub fn system(&self) -> &'a ClusteredNetworkSystem {
        self.sys
    }

    pub fn a12_pinv(&self) -> &Matrix {
        &self.a12_pinv
    }

    fn check(&self, c: &Clustering) -> Result<()> {
        if c.n() != self.sys.n() {
            return Err(Error::Dimension(format!(
                "clustering has {} nodes, system n = {}",
                c.n(),
                self.sys.n()
            )));
        }
        Ok(())
    }

    /// `L = (Q^+ A22 - V Q^+) A12^-`.
    pub fn gain_from_v(&self, c: &Clustering, v: &Matrix) -> Result<Matrix> {
        self.check(c)?;
        if v.shape() != (c.k(), c.k()) {
            return Err(Error::Dimension(format!("V is {}x{}, expected {k}x{k}", v.nrows(), v.ncols(), k = c.k())));
        }
        Ok(c.average_rows(&self.a22_a12_pinv) - v * c.average_rows(&self.a12_pinv))
    }

    pub fn design_from_v(&self, c: &Clustering, v: &Matrix) -> Result<ObserverDesign> {
        let l = self.gain_from_v(c, v)?;
        design_from_gain(self.sys, c, &l)
    }

    /// `(M_phi, R_phi)` via `R_phi = Q^+ A22 - L_phi A12`.
    pub fn error_matrices(&self, c: &Clustering, phi: f64) -> Result<(Matrix, Matrix)> {
        self.check(c)?;
        let qp_a22 = c.average_rows(self.sys.a22());
        let v = c.sum_columns(&qp_a22) * phi;
        let l = c.average_rows(&self.a22_a12_pinv) - v * c.average_rows(&self.a12_pinv);
        let r = qp_a22 - l * self.sys.a12();
        Ok((c.sum_columns(&r), r))
    }

    /// `J(phi, Q)` with the `+inf` sentinel.
    pub fn cost_at(&self, c: &Clustering, phi: f64) -> f64 {
        match self.error_matrices(c, phi) {
            Ok((m, r)) => h2_cost(&m, &r),
            Err(_) => f64::INFINITY,
        }
    }

    /// Per-clustering precomputation that makes each evaluation of `phi`
    /// independent of `n`.
    pub fn phi_problem(&self, c: &Clustering) -> Result<PhiProblem> {
        self.check(c)?;
        let sys = self.sys;
        let qp_a22 = c.average_rows(sys.a22());
        let v_star = c.sum_columns(&qp_a22);
        let qp_a22_a12p = c.average_rows(&self.a22_a12_pinv);
        let qp_a12p = c.average_rows(&self.a12_pinv);
        // R_phi = Q+A22 - Q+A22 P + phi V* Q+ P, with P = A12^- A12
        let r0 = &qp_a22 - &qp_a22_a12p * sys.a12();
        let c1 = &v_star * (&qp_a12p * sys.a12());
        let m0 = c.sum_columns(&r0);
        let m1 = c.sum_columns(&c1);
        let g00 = &r0 * r0.transpose();
        let g01 = &r0 * c1.transpose();
        let g11 = &c1 * c1.transpose();
        let l1 = -(&v_star * qp_a12p);
        Ok(PhiProblem { m0, m1, g00, g01, g11, l0: qp_a22_a12p, l1, r0, r1: c1, hurwitz_tol: HURWITZ_TOL })
    }
}

/// `phi -> (M_phi, R_phi R_phi^T, L_phi)` as affine/quadratic maps in `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiProblem {
    m0: Matrix,
    m1: Matrix,
    g00: Matrix,
    g01: Matrix,
    g11: Matrix,
    l0: Matrix,
    l1: Matrix,
    r0: Matrix,
    r1: Matrix,
    hurwitz_tol: f64,
}

impl PhiProblem {
    pub fn with_hurwitz_tol(mut self, tol: f64) -> Self {
        self.hurwitz_tol = tol;
        self
    }

    pub fn k(&self) -> usize {
        self.m0.nrows()
    }

    pub fn m_phi(&self, phi: f64) -> Matrix {
        &self.m0 + &self.m1 * phi
    }

    pub fn r_phi(&self, phi: f64) -> Matrix {
        &self.r0 + &self.r1 * phi
    }

    pub fn gain(&self, phi: f64) -> Matrix {
        &self.l0 + &self.l1 * phi
    }

    /// `R_phi R_phi^T` without touching the `n`-sized factors.
    pub fn noise_covariance(&self, phi: f64) -> Matrix {
        let cross = &self.g01 + self.g01.transpose();
        &self.g00 + cross * phi + &self.g11 * (phi * phi)
    }

    pub fn margin(&self, phi: f64) -> f64 {
        hurwitz_margin(&self.m_phi(phi)).unwrap_or(f64::INFINITY)
    }

    pub fn is_hurwitz(&self, phi: f64) -> bool {
        self.margin(phi) < -self.hurwitz_tol
    }

    /// `trace(W_phi)`, or `+inf` when `M_phi` is not Hurwitz.
    pub fn cost(&self, phi: f64) -> f64 {
        match lyapunov_solve(&self.m_phi(phi), &self.noise_covariance(phi), self.hurwitz_tol) {
            Ok(w) => {
                let t = w.trace();
                if t.is_finite() {
                    t
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }
}

/// `V* = Q^+ A22 Q`.
pub fn v_star(sys: &ClusteredNetworkSystem, c: &Clustering) -> Result<Matrix> {
    if sys.n() != c.n() {
        return Err(Error::Dimension(format!("clustering has {} nodes, system n = {}", c.n(), sys.n())));
    }
    Ok(c.sum_columns(&c.average_rows(sys.a22())))
}

pub fn v_phi(sys: &ClusteredNetworkSystem, c: &Clustering, phi: f64) -> Result<Matrix> {
    Ok(v_star(sys, c)? * phi)
}

pub fn design_from_v(sys: &ClusteredNetworkSystem, c: &Clustering, v: &Matrix) -> Result<ObserverDesign> {
    ObserverContext::new(sys)?.design_from_v(c, v)
}

/// Closed form `R_phi = Q^+ A22 (I - (I - phi Q Q^+) A12^- A12)`, `M_phi = R_phi Q`.
pub fn error_matrices_phi(sys: &ClusteredNetworkSystem, c: &Clustering, phi: f64) -> Result<(Matrix, Matrix)> {
    let ctx = ObserverContext::new(sys)?;
    ctx.check(c)?;
    let n = sys.n();
    let q = characteristic_matrix(c);
    let qp = c.average_rows(&Matrix::identity(n, n));
    let p = ctx.a12_pinv() * sys.a12();
    let inner = Matrix::identity(n, n) - (Matrix::identity(n, n) - (&q * &qp) * phi) * p;
    let r = c.average_rows(sys.a22()) * inner;
    let m = &r * q;
    Ok((m, r))
}

/// `trace(W)` of the gramian of `(M, R)`; `+inf` if `M` is not Hurwitz.
pub fn h2_cost(m: &Matrix, r: &Matrix) -> f64 {
    match lyapunov_gramian(m, r) {
        Ok(w) if w.trace().is_finite() => w.trace(),
        _ => f64::INFINITY,
    }
}

/// `rank([A12; Q^+ A22; Q^+]) = rank(A12)`.
pub fn check_tunability(sys: &ClusteredNetworkSystem, c: &Clustering) -> bool {
    if sys.n() != c.n() {
        return false;
    }
    let (m, n, k) = (sys.m(), sys.n(), c.k());
    let mut stacked = Matrix::zeros(m + 2 * k, n);
    stacked.view_mut((0, 0), (m, n)).copy_from(sys.a12());
    stacked.view_mut((m, 0), (k, n)).copy_from(&c.average_rows(sys.a22()));
    stacked.view_mut((m + k, 0), (k, n)).copy_from(&c.average_rows(&Matrix::identity(n, n)));
    match (numeric_rank(&stacked, RANK_TOL), numeric_rank(sys.a12(), RANK_TOL)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}
