//! Dense kernels: pseudoinverse, rank, spectral abscissa, Lyapunov solves and
//! fixed-step RK4 integration of LTI systems.
//!
//! Everything here works on small dense matrices. The error system of an
//! order-`k` observer is `k x k`, so the Lyapunov equation is solved directly
//! through its `k^2 x k^2` Kronecker form.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector, Schur, SVD};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// A matrix is declared Hurwitz when its spectral abscissa is below `-HURWITZ_TOL`.
pub const HURWITZ_TOL: f64 = 1e-9;

/// Relative singular-value cutoff used for rank decisions and pseudoinverses.
pub const RANK_TOL: f64 = 1e-9;

const SVD_MAX_ITER: usize = 10_000;
const SCHUR_MAX_ITER: usize = 10_000;

pub(crate) fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_finite_vec(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// SVD whose factors reproduce `m`. nalgebra can return factors that do not
/// recompose on some rank-deficient inputs at the tightest threshold, so the
/// threshold is relaxed until the recomposition holds.
fn svd(m: &Matrix) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let scale = m.norm();
    let mut eps = f64::EPSILON;
    for _ in 0..12 {
        let dec = SVD::try_new(m.clone(), true, true, eps, SVD_MAX_ITER).ok_or_else(|| Error::NoConvergence {
            routine: "svd",
            detail: format!("{}x{} matrix", m.nrows(), m.ncols()),
        })?;
        let rec = dec.clone().recompose().map_err(|e| Error::InvalidArgument(e.into()))?;
        if (rec - m).norm() <= 1e-10 * scale {
            return Ok(dec);
        }
        eps *= 4.0;
    }
    Err(Error::NoConvergence { routine: "svd", detail: format!("{}x{} matrix does not recompose", m.nrows(), m.ncols()) })
}

/// Moore-Penrose pseudoinverse with the default relative rank tolerance.
pub fn pseudoinverse(m: &Matrix) -> Result<Matrix> {
    pseudoinverse_with_tol(m, RANK_TOL)
}

/// Moore-Penrose pseudoinverse; singular values `<= rtol * sigma_max` are dropped.
pub fn pseudoinverse_with_tol(m: &Matrix, rtol: f64) -> Result<Matrix> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    ensure_finite(m, "pseudoinverse input")?;
    let dec = svd(m)?;
    let smax = dec.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(Matrix::zeros(m.ncols(), m.nrows()));
    }
    dec.pseudo_inverse(rtol * smax)
        .map_err(|e| Error::InvalidArgument(e.into()))
}

/// Singular values in descending order.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    ensure_finite(m, "singular value input")?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    Ok(svd(m)?.singular_values.iter().cloned().collect())
}

/// Number of singular values above `tol * sigma_max`.
pub fn numeric_rank(m: &Matrix, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rank tolerance must be > 0, got {tol}")));
    }
    let sv = singular_values(m)?;
    let smax = sv.first().cloned().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > tol * smax).count())
}

pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    ensure_finite(m, "eigenvalue input")?;
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or_else(|| {
        Error::NoConvergence {
            routine: "schur",
            detail: format!(
                "{}x{} matrix, max |entry| = {:e}",
                m.nrows(),
                m.ncols(),
                m.amax()
            ),
        }
    })?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Largest real part over the spectrum.
pub fn hurwitz_margin(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(m: &Matrix, tol: f64) -> Result<bool> {
    Ok(hurwitz_margin(m)? < -tol)
}

/// Controllability gramian `W` of `(M, R)`: `M W + W M^T + R R^T = 0`.
pub fn lyapunov_gramian(m: &Matrix, r: &Matrix) -> Result<Matrix> {
    if r.nrows() != m.nrows() {
        return Err(Error::Dimension(format!(
            "R has {} rows, M is {}x{}",
            r.nrows(),
            m.nrows(),
            m.ncols()
        )));
    }
    lyapunov_solve(m, &(r * r.transpose()), HURWITZ_TOL)
}

/// Solves `M W + W M^T + S = 0` for symmetric `S` and Hurwitz `M`.
///
/// The Kronecker form `(I (x) M + M (x) I) vec(W) = -vec(S)` is factored once
/// and one step of iterative refinement is applied.
pub fn lyapunov_solve(m: &Matrix, s: &Matrix, hurwitz_tol: f64) -> Result<Matrix> {
    let k = m.nrows();
    if !m.is_square() || s.nrows() != k || s.ncols() != k {
        return Err(Error::Dimension(format!(
            "lyapunov: M is {}x{}, S is {}x{}",
            m.nrows(),
            m.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    ensure_finite(s, "lyapunov right-hand side")?;
    let margin = hurwitz_margin(m)?;
    if !(margin < -hurwitz_tol) {
        return Err(Error::UnstableErrorDynamics { margin });
    }

    let kk = k * k;
    let mut op = Matrix::zeros(kk, kk);
    // vec index of W[(i, j)] is i + j * k (column-major)
    for j in 0..k {
        for i in 0..k {
            let row = i + j * k;
            for l in 0..k {
                op[(row, l + j * k)] += m[(i, l)];
                op[(row, i + l * k)] += m[(j, l)];
            }
        }
    }
    let rhs = Vector::from_iterator(kk, s.iter().map(|v| -v));
    let lu = op.clone().lu();
    let mut w = lu.solve(&rhs).ok_or(Error::Singular("lyapunov"))?;
    let resid = &rhs - &op * &w;
    if let Some(dw) = lu.solve(&resid) {
        w += dw;
    }
    let w = Matrix::from_column_slice(k, k, w.as_slice());
    Ok((&w + w.transpose()) * 0.5)
}

/// Time-stamped states of an integrated ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&Vector> {
        self.states.last()
    }
}

/// Number of RK4 steps so that the last sample lands on `t_end`.
pub fn step_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= dt) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must satisfy T >= dt, got T = {t_end}, dt = {dt}"
        )));
    }
    Ok(libm::round(t_end / dt) as usize)
}

/// Integrates `x' = A x + B u(t)` with classical fixed-step RK4, sampling
/// at `t = 0, dt, ..., T`.
pub fn integrate_lti<F>(a: &Matrix, b: &Matrix, u: F, x0: &Vector, dt: f64, t_end: f64) -> Result<Trajectory>
where
    F: Fn(f64) -> Vector,
{
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::Dimension(format!("A must be square, got {}x{}", n, a.ncols())));
    }
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has length {}, A is {n}x{n}", x0.len())));
    }
    if b.nrows() != n && b.ncols() != 0 {
        return Err(Error::Dimension(format!("B has {} rows, A is {n}x{n}", b.nrows())));
    }
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    ensure_finite_vec(x0, "x0")?;
    let steps = step_count(dt, t_end)?;
    let p = b.ncols();

    let rhs = |t: f64, x: &Vector| -> Result<Vector> {
        let mut dx = a * x;
        if p > 0 {
            let ut = u(t);
            if ut.len() != p {
                return Err(Error::Dimension(format!(
                    "input has length {}, B has {p} columns",
                    ut.len()
                )));
            }
            dx.gemv(1.0, b, &ut, 1.0);
        }
        Ok(dx)
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    times.push(0.0);
    states.push(x.clone());
    let h = dt;
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs(t, &x)?;
        let k2 = rhs(t + 0.5 * h, &(&x + &k1 * (0.5 * h)))?;
        let k3 = rhs(t + 0.5 * h, &(&x + &k2 * (0.5 * h)))?;
        let k4 = rhs(t + h, &(&x + &k3 * h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t_next = (i + 1) as f64 * h;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: t_next });
        }
        times.push(t_next);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}
