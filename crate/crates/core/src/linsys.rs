//! Linear ingredients of the estimator: Lyapunov equation and Hurwitz test.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const HURWITZ_MARGIN: f64 = 1e-12;

/// Largest real part in the spectrum of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// True iff every eigenvalue of `a` has real part below `-1e-12`.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.is_square() && a.iter().all(|v| v.is_finite()) && spectral_abscissa(a) < -HURWITZ_MARGIN
}

/// Solves `A^T P + P A = -Q` for Hurwitz `A` through the vectorized system
/// `(I (x) A^T + A^T (x) I) vec(P) = -vec(Q)`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    if q.shape() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, got: q.nrows() });
    }
    let abscissa = spectral_abscissa(a);
    if !(abscissa < -HURWITZ_MARGIN) {
        return Err(Error::NotHurwitz { max_real: abscissa });
    }

    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(d, d);
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let lu = op.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(Error::SolveFailure)?;
    // one step of iterative refinement
    let r = &rhs - &op * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolveFailure);
    }
    let p = DMatrix::from_column_slice(d, d, x.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// `||A^T P + P A + Q||_F / ||Q||_F`.
pub fn lyapunov_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a.transpose() * p + p * a + q).norm() / q.norm()
}

/// Linear data of the adaptive estimator.
///
/// The plant uses `a`; the estimator's error dynamics use
/// `a_est = a - injection`, which must be Hurwitz.
#[derive(Debug, Clone)]
pub struct EstimatorSystem {
    pub a: DMatrix<f64>,
    pub a_est: DMatrix<f64>,
    pub injection: DMatrix<f64>,
    pub b: DVector<f64>,
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub mu: f64,
    /// Cached `B^T P` as a row.
    bt_p: DVector<f64>,
}

impl EstimatorSystem {
    pub fn new(a: DMatrix<f64>, injection: DMatrix<f64>, b: DVector<f64>, q: DMatrix<f64>, mu: f64) -> Result<Self> {
        let d = a.nrows();
        for (m, name) in [(&a, "A"), (&injection, "L"), (&q, "Q")] {
            if m.shape() != (d, d) {
                return Err(Error::Config(format!("{name} must be {d}x{d}")));
            }
        }
        if b.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: b.len() });
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Config(format!("learning gain mu must be positive, got {mu}")));
        }
        if (&q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
            return Err(Error::Config("Q must be symmetric".into()));
        }
        if q.clone().cholesky().is_none() {
            return Err(Error::Config("Q must be positive definite".into()));
        }
        let a_est = &a - &injection;
        let p = solve_lyapunov(&a_est, &q)?;
        let bt_p = p.transpose() * &b;
        Ok(EstimatorSystem { a, a_est, injection, b, q, p, mu, bt_p })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `B^T P e`.
    pub fn bt_p(&self, e: &[f64]) -> f64 {
        self.bt_p.iter().zip(e).map(|(c, v)| c * v).sum()
    }
}
