//! Regularized and pseudoinverse linear least-squares kernels, real or
//! complex, plus a sparse rank-revealing path in [`sparse`].
//!
//! The ridge solution of `min ||A x - b||^2 + delta ||x||^2` is
//! `(A^H A + delta I)^{-1} A^H b`; with `delta = 0` the truncated-SVD
//! pseudoinverse solution `A^+ b` is returned instead. Ridge solves route
//! through Cholesky on the normal equations when `delta` is large enough
//! relative to `eps * ||A||_F^2` (see [`RIDGE_CHOLESKY_MARGIN`]) and through
//! the SVD otherwise; `ridge_solve_via_cholesky` / `ridge_solve_via_svd`
//! override the routing.

use nalgebra::{Cholesky, ComplexField, DMatrix, Dyn};

use crate::error::{Error, Result};

pub mod sparse;

pub use sparse::{sparse_rank_revealing_solve, SparseMatrix};

/// Ridge / truncation parameters for a least-squares solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeSpec {
    /// Regularization `delta >= 0`. Zero selects the pseudoinverse path.
    pub delta: f64,
    /// Relative singular-value cutoff in [0, 1). Zero selects the default
    /// convention `max(p, q) * machine-epsilon` (times `sigma_max`).
    pub svd_cutoff: f64,
}

impl RidgeSpec {
    pub fn new(delta: f64) -> RidgeSpec {
        RidgeSpec {
            delta,
            svd_cutoff: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must be >= 0, got {}",
                self.delta
            )));
        }
        if !(0.0..1.0).contains(&self.svd_cutoff) {
            return Err(Error::InvalidArgument(format!(
                "svd_cutoff must lie in [0, 1), got {}",
                self.svd_cutoff
            )));
        }
        Ok(())
    }
}

impl Default for RidgeSpec {
    fn default() -> Self {
        RidgeSpec {
            delta: 0.0,
            svd_cutoff: 0.0,
        }
    }
}

/// Relative cutoff actually applied: the requested value, or the
/// `max(p,q) * eps` convention when the request leaves it at zero.
pub fn effective_cutoff(svd_cutoff: f64, p: usize, q: usize) -> f64 {
    if svd_cutoff > 0.0 {
        svd_cutoff
    } else {
        p.max(q) as f64 * f64::EPSILON
    }
}

/// Cholesky is used for the ridge path when
/// `delta >= RIDGE_CHOLESKY_MARGIN * eps * ||A||_F^2`; below that the normal
/// equations lose too much to rounding and the SVD path takes over.
pub const RIDGE_CHOLESKY_MARGIN: f64 = 1e3;

fn check_dims<T: ComplexField>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{} but B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    Ok(())
}

fn frobenius_sq<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    a.iter().map(|x| x.clone().modulus_squared()).sum()
}

/// `(A^H A + delta I)^{-1} A^H B`, or the truncated pseudoinverse solution
/// when `delta = 0`.
pub fn ridge_solve<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    spec: &RidgeSpec,
) -> Result<DMatrix<T>> {
    RidgeFactorization::new(a.clone(), spec)?.solve(b)
}

/// Ridge via Cholesky on the normal equations, regardless of conditioning.
pub fn ridge_solve_via_cholesky<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    spec: &RidgeSpec,
) -> Result<DMatrix<T>> {
    spec.validate()?;
    check_dims(a, b)?;
    let fact = cholesky_factor(a, spec.delta)?;
    Ok(fact.chol.solve(&(a.adjoint() * b)))
}

/// Ridge via the SVD filter `sigma / (sigma^2 + delta)`, regardless of size.
pub fn ridge_solve_via_svd<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    spec: &RidgeSpec,
) -> Result<DMatrix<T>> {
    spec.validate()?;
    check_dims(a, b)?;
    let fact = svd_factor(a.clone(), spec)?;
    fact.solve_inner(b)
}

/// `A^+ B` via SVD, dropping singular values below `svd_cutoff * sigma_max`.
pub fn pinv_apply<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    svd_cutoff: f64,
) -> Result<DMatrix<T>> {
    check_dims(a, b)?;
    if !(0.0..1.0).contains(&svd_cutoff) {
        return Err(Error::InvalidArgument(format!(
            "svd_cutoff must lie in [0, 1), got {svd_cutoff}"
        )));
    }
    let spec = RidgeSpec {
        delta: 0.0,
        svd_cutoff,
    };
    svd_factor(a.clone(), &spec)?.solve_inner(b)
}

struct CholFactor<T: ComplexField> {
    chol: Cholesky<T, Dyn>,
}

fn cholesky_factor<T: ComplexField<RealField = f64>>(
    a: &DMatrix<T>,
    delta: f64,
) -> Result<CholFactor<T>> {
    let q = a.ncols();
    let mut gram = a.adjoint() * a;
    for k in 0..q {
        gram[(k, k)] += T::from_real(delta);
    }
    match Cholesky::new(gram) {
        Some(chol) => Ok(CholFactor { chol }),
        None => Err(Error::Numerical(
            "normal-equations matrix is not positive definite".into(),
        )),
    }
}

struct SvdFactor<T: ComplexField<RealField = f64>> {
    u: DMatrix<T>,
    v_t: DMatrix<T>,
    /// Filter `sigma/(sigma^2+delta)`, or truncated `1/sigma` when `delta = 0`.
    filter: Vec<f64>,
}

impl<T: ComplexField<RealField = f64>> SvdFactor<T> {
    fn solve_inner(&self, b: &DMatrix<T>) -> Result<DMatrix<T>> {
        if self.u.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "factorization has {} rows but B has {}",
                self.u.nrows(),
                b.nrows()
            )));
        }
        let mut ub = self.u.adjoint() * b;
        for (k, f) in self.filter.iter().enumerate() {
            let row = ub.row_mut(k) * T::from_real(*f);
            ub.set_row(k, &row);
        }
        Ok(self.v_t.adjoint() * ub)
    }
}

fn svd_factor<T: ComplexField<RealField = f64>>(
    a: DMatrix<T>,
    spec: &RidgeSpec,
) -> Result<SvdFactor<T>> {
    let (p, q) = (a.nrows(), a.ncols());
    let svd = nalgebra::SVD::try_new(a, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = effective_cutoff(spec.svd_cutoff, p, q) * sigma_max;
    let filter: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| {
            if spec.delta > 0.0 {
                s / (s * s + spec.delta)
            } else if s > cut && s > 0.0 {
                1.0 / s
            } else {
                0.0
            }
        })
        .collect();
    if spec.delta == 0.0 && filter.iter().all(|&f| f == 0.0) {
        return Err(Error::RankDeficient(format!(
            "all {} singular values fall below the cutoff {:.3e}",
            filter.len(),
            cut
        )));
    }
    Ok(SvdFactor { u, v_t, filter })
}

enum FactorInner<T: ComplexField<RealField = f64>> {
    Chol { fact: CholFactor<T>, a: DMatrix<T> },
    Svd(SvdFactor<T>),
}

/// Reusable factorization handle: factor once, solve for many right-hand
/// sides. Immutable after construction and safe to share across threads.
pub struct RidgeFactorization<T: ComplexField<RealField = f64>> {
    inner: FactorInner<T>,
}

impl<T: ComplexField<RealField = f64>> RidgeFactorization<T> {
    pub fn new(a: DMatrix<T>, spec: &RidgeSpec) -> Result<Self> {
        spec.validate()?;
        if spec.delta > 0.0 && spec.delta >= RIDGE_CHOLESKY_MARGIN * f64::EPSILON * frobenius_sq(&a)
        {
            if let Ok(fact) = cholesky_factor(&a, spec.delta) {
                return Ok(RidgeFactorization {
                    inner: FactorInner::Chol { fact, a },
                });
            }
            // otherwise fall through to SVD
        }
        Ok(RidgeFactorization {
            inner: FactorInner::Svd(svd_factor(a, spec)?),
        })
    }

    pub fn solve(&self, b: &DMatrix<T>) -> Result<DMatrix<T>> {
        match &self.inner {
            FactorInner::Chol { fact, a } => {
                check_dims(a, b)?;
                Ok(fact.chol.solve(&(a.adjoint() * b)))
            }
            FactorInner::Svd(f) => f.solve_inner(b),
        }
    }
}
