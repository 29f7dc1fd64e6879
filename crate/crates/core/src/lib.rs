//! Physics-informed random projection time stepping for stiff ODEs.
//!
//! A PI-RPNN step approximates the solution on a window `[t, t+h]` by
//! `u(t) + (t'-t) * sum_j w_j * exp(-a_U * theta_j * (t'-tau_j)^2)` with frozen
//! random shapes `theta_j ~ U[0,1]` and equispaced centers `tau_j`; the output
//! weights `w` are the ridge / pseudoinverse solution of the ODE residual
//! collocated at `M` in-window points. The crate provides:
//!
//! - [`basis`]: the Gaussian feature set and the collocation matrices.
//! - [`lstsq`]: regularized and truncated-SVD least-squares kernels (dense,
//!   real/complex) plus a sparse rank-revealing path.
//! - [`stepper`]: the time integrator (scalar/complex step map, eigen path for
//!   diagonalizable systems, fully coupled path, Gauss-Newton training for
//!   nonlinear right-hand sides, Jordan-block recursion).
//! - [`classical`]: implicit Runge-Kutta comparators with exact linear step
//!   maps and stability functions.
//! - [`stability`]: complex-plane stability scans, the closed-form stability
//!   index limit, and the consistency probe.
//! - [`problems`]: benchmark problems with analytic references.
//! - [`harness`]: convergence / timing experiments and order fitting.
//!
//! Scans and accuracy sweeps are data-parallel; the `parallel` feature
//! (default) maps them over a rayon pool, and every parallel routine has a
//! sequential twin producing bit-identical output.

pub mod basis;
pub mod classical;
pub mod error;
pub mod harness;
pub mod lstsq;
pub mod problems;
pub mod rng;
pub mod stability;
pub mod stepper;

pub(crate) mod par;

pub use error::{Error, Result};

/// Complex scalar used throughout (re-exported from nalgebra to keep one
/// `num_complex` version in play).
pub type Complex64 = nalgebra::Complex<f64>;
