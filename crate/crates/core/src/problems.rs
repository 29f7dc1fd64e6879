//! Benchmark problems with analytic references.
//!
//! Three entries, addressable by name from the CLI: `dahlquist` (scalar test
//! equation), `example1` (stiff non-normal 2x2 system), and `diffreac`
//! (diffusion-reaction PDE `u_t = nu u_xx - lambda u` with Neumann boundary
//! conditions on `[0, pi]`, discretized in space by second-order finite
//! differences with ghost-point closures).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stepper::LinearProblem;

/// Scalar Dahlquist problem `u' = lambda u` with exact solution
/// `u0 e^{lambda t}`.
pub fn dahlquist(
    lambda: f64,
    u0: f64,
    t0: f64,
    t_end: f64,
) -> Result<(LinearProblem, ExactSolution)> {
    let problem = LinearProblem::new(
        DMatrix::from_row_slice(1, 1, &[lambda]),
        DVector::from_column_slice(&[u0]),
        t0,
        t_end,
    )?;
    let exact = ExactSolution::new(move |t: f64| {
        DVector::from_column_slice(&[u0 * (lambda * (t - t0)).exp()])
    });
    Ok((problem, exact))
}

/// Closed-form reference solution of a benchmark problem.
pub struct ExactSolution {
    f: Box<dyn Fn(f64) -> DVector<f64> + Sync>,
}

impl ExactSolution {
    pub fn new(f: impl Fn(f64) -> DVector<f64> + Sync + 'static) -> ExactSolution {
        ExactSolution { f: Box::new(f) }
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        (self.f)(t)
    }
}

/// Stiff non-normal system `u' = A u`, `A = [[-10, 100], [0, -1]]` on
/// `[0, 5]`. The initial state is a documented choice (the source benchmark
/// leaves it open); default `(1, 1)`.
pub fn example1_nonnormal() -> (LinearProblem, ExactSolution) {
    example1_with_u0(DVector::from_column_slice(&[1.0, 1.0]))
}

/// Same matrix, caller-chosen initial state.
pub fn example1_with_u0(u0: DVector<f64>) -> (LinearProblem, ExactSolution) {
    assert_eq!(u0.len(), 2, "example1 is two-dimensional");
    let a = DMatrix::from_row_slice(2, 2, &[-10.0, 100.0, 0.0, -1.0]);
    let problem = LinearProblem::new(a, u0.clone(), 0.0, 5.0).expect("static spans are valid");
    let (u1_0, u2_0) = (u0[0], u0[1]);
    // Triangular system: u2 = e^{-t} u2(0);
    // u1 = e^{-10 t} u1(0) + (100/9)(e^{-t} - e^{-10 t}) u2(0).
    let exact = ExactSolution::new(move |t: f64| {
        let e1 = (-t).exp();
        let e10 = (-10.0 * t).exp();
        DVector::from_column_slice(&[e10 * u1_0 + 100.0 / 9.0 * (e1 - e10) * u2_0, e1 * u2_0])
    });
    (problem, exact)
}

/// Parameters of the diffusion-reaction benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionReactionSpec {
    /// Diffusivity `nu`.
    pub nu: f64,
    /// Reaction rate `lambda`.
    pub lambda_r: f64,
    /// Cosine-mode amplitude of the initial profile.
    pub a_amp: f64,
    /// Constant offset of the initial profile.
    pub c_amp: f64,
    /// Number of interior grid nodes.
    pub n_interior: usize,
    pub t_span: (f64, f64),
}

impl Default for DiffusionReactionSpec {
    fn default() -> Self {
        DiffusionReactionSpec {
            nu: 0.1,
            lambda_r: 10.0,
            a_amp: 0.4,
            c_amp: 1.5,
            n_interior: 100,
            t_span: (0.0, 1.0),
        }
    }
}

impl DiffusionReactionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nu must be > 0, got {}",
                self.nu
            )));
        }
        if self.n_interior < 3 {
            return Err(Error::InvalidArgument("n_interior must be >= 3".into()));
        }
        if !(self.t_span.1 > self.t_span.0) {
            return Err(Error::InvalidArgument("t_span must be ordered".into()));
        }
        Ok(())
    }

    /// Grid spacing `dx = pi / (n + 1)`; interior nodes at `x_i = i dx`.
    pub fn dx(&self) -> f64 {
        std::f64::consts::PI / (self.n_interior as f64 + 1.0)
    }

    pub fn grid(&self) -> Vec<f64> {
        let dx = self.dx();
        (1..=self.n_interior).map(|i| i as f64 * dx).collect()
    }
}

/// Analytic PDE field evaluated on the interior grid:
/// `u(t, x) = a e^{-(4 nu + lambda) t} cos(2x) + c e^{-lambda t}`.
pub fn diffusion_reaction_field(spec: &DiffusionReactionSpec, t: f64) -> DVector<f64> {
    let decay_cos = (-(4.0 * spec.nu + spec.lambda_r) * t).exp();
    let decay_const = (-spec.lambda_r * t).exp();
    DVector::from_iterator(
        spec.n_interior,
        spec.grid()
            .iter()
            .map(|&x| spec.a_amp * decay_cos * (2.0 * x).cos() + spec.c_amp * decay_const),
    )
}

/// Method-of-lines system for the diffusion-reaction PDE: the tridiagonal
/// second-difference operator with the second-order one-sided Neumann
/// closures `u_0 = (4 u_1 - u_2)/3`, `u_{n+1} = (4 u_n - u_{n-1})/3` folded
/// into the first and last rows, scaled by `nu / dx^2`, minus `lambda I`.
/// Returns the linear problem (initial state = the t = 0 field) and the
/// analytic field as reference.
pub fn build_fd_diffusion_reaction(
    spec: &DiffusionReactionSpec,
) -> Result<(LinearProblem, ExactSolution)> {
    spec.validate()?;
    let n = spec.n_interior;
    let dx = spec.dx();
    let scale = spec.nu / (dx * dx);
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -2.0 * scale - spec.lambda_r;
        if i > 0 {
            a[(i, i - 1)] = scale;
        }
        if i + 1 < n {
            a[(i, i + 1)] = scale;
        }
    }
    // Ghost-point Neumann closures.
    a[(0, 0)] += scale * 4.0 / 3.0;
    a[(0, 1)] += scale * (-1.0 / 3.0);
    a[(n - 1, n - 1)] += scale * 4.0 / 3.0;
    a[(n - 1, n - 2)] += scale * (-1.0 / 3.0);

    let u0 = diffusion_reaction_field(spec, 0.0);
    let problem = LinearProblem::new(a, u0, spec.t_span.0, spec.t_span.1)?;
    let spec_for_exact = spec.clone();
    let exact = ExactSolution::new(move |t: f64| diffusion_reaction_field(&spec_for_exact, t));
    Ok((problem, exact))
}

/// Problem registry names understood by the CLI.
pub const PROBLEM_NAMES: [&str; 3] = ["dahlquist", "example1", "diffreac"];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn dahlquist_exact_values() {
        let (p, exact) = dahlquist(-1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(p.dim(), 1);
        assert_relative_eq!(exact.at(1.0)[0], 0.3678794411714423, max_relative = 1e-15);
        let (_, flat) = dahlquist(0.0, 2.5, 0.0, 3.0).unwrap();
        assert_eq!(flat.at(2.0)[0], 2.5);
        let (_, stiff) = dahlquist(-100.0, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(stiff.at(1.0)[0], (-100.0f64).exp(), max_relative = 1e-12);
        assert!(stiff.at(1.0)[0] < 4e-44);
    }

    #[test]
    fn example1_matrix_and_eigenvalues() {
        let (p, _) = example1_nonnormal();
        assert_eq!(p.matrix_a[(0, 0)], -10.0);
        assert_eq!(p.matrix_a[(0, 1)], 100.0);
        assert_eq!(p.matrix_a[(1, 0)], 0.0);
        assert_eq!(p.matrix_a[(1, 1)], -1.0);
        // Triangular: eigenvalues are the diagonal.
        let eigs = p.matrix_a.complex_eigenvalues();
        let mut re: Vec<f64> = eigs.iter().map(|e| e.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(re[0], -10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(re[1], -1.0, epsilon = 1e-12);
        assert_eq!((p.t0, p.t_end), (0.0, 5.0));
    }

    #[test]
    fn example1_closed_form_cross_checked_against_series_exponential() {
        let (p, exact) = example1_nonnormal();
        // expm(A t) u0 by scaling-and-squaring-free plain series (t small
        // enough that the series converges quickly).
        let t = 0.1;
        let mut term = p.u0.clone();
        let mut sum = p.u0.clone();
        for k in 1..60 {
            term = &p.matrix_a * term * (t / k as f64);
            sum += &term;
        }
        let want = exact.at(t);
        assert!(
            (&sum - &want).norm() <= 1e-10 * want.norm(),
            "{sum} vs {want}"
        );
        assert_relative_eq!(want[0], 6.334079184110521, max_relative = 1e-12);
    }

    #[test]
    fn example1_exact_solution_satisfies_the_ode() {
        let (p, exact) = example1_nonnormal();
        let dt = 1e-6;
        for &t in &[0.05, 0.7, 2.3, 4.9] {
            let du = (exact.at(t + dt) - exact.at(t - dt)) / (2.0 * dt);
            let au = &p.matrix_a * exact.at(t);
            assert!((du - &au).norm() <= 1e-5 * (1.0 + au.norm()), "t={t}");
        }
    }

    #[test]
    fn fd_operator_matches_reported_stiffness() {
        let spec = DiffusionReactionSpec::default();
        let (p, _) = build_fd_diffusion_reaction(&spec).unwrap();
        let eigs = p.matrix_a.complex_eigenvalues();
        let max_abs = eigs.iter().map(|e| e.norm()).fold(0.0, f64::max);
        assert_relative_eq!(max_abs, 423.33, max_relative = 0.01);
        // All eigenvalues decay and are essentially real.
        for e in eigs.iter() {
            assert!(e.re < 0.0);
            assert!(e.im.abs() <= 1e-8 * e.norm().max(1.0));
        }
    }

    #[test]
    fn initial_state_is_the_exact_field() {
        let spec = DiffusionReactionSpec::default();
        let (p, exact) = build_fd_diffusion_reaction(&spec).unwrap();
        assert_eq!(p.u0, exact.at(0.0));
        let x = spec.grid();
        for (i, &xi) in x.iter().enumerate() {
            assert_abs_diff_eq!(p.u0[i], 0.4 * (2.0 * xi).cos() + 1.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn fd_operator_approximates_the_field_time_derivative() {
        // A u(0) should match -(4 nu + lambda) a cos(2x) - lambda c to O(dx^2).
        let check = |n: usize| -> f64 {
            let spec = DiffusionReactionSpec {
                n_interior: n,
                ..Default::default()
            };
            let (p, _) = build_fd_diffusion_reaction(&spec).unwrap();
            let got = &p.matrix_a * &p.u0;
            let want = DVector::from_iterator(
                n,
                spec.grid().iter().map(|&x| {
                    -(4.0 * spec.nu + spec.lambda_r) * spec.a_amp * (2.0 * x).cos()
                        - spec.lambda_r * spec.c_amp
                }),
            );
            (got - want).amax()
        };
        let e100 = check(100);
        let e200 = check(200);
        assert!(e100 <= 1e-3, "{e100}");
        // Halving dx should shrink the truncation error by about 4.
        let ratio = e100 / e200;
        assert!(ratio > 2.5 && ratio < 6.0, "ratio {ratio}");
    }

    #[test]
    fn interior_stencil_is_symmetric() {
        let spec = DiffusionReactionSpec {
            n_interior: 10,
            ..Default::default()
        };
        let (p, _) = build_fd_diffusion_reaction(&spec).unwrap();
        for i in 1..9 {
            for j in 1..9 {
                assert_eq!(p.matrix_a[(i, j)], p.matrix_a[(j, i)]);
            }
        }
    }

    #[test]
    fn analytic_field_satisfies_the_pde() {
        // Spot-check u_t = nu u_xx - lambda u by finite differences in t and x.
        let spec = DiffusionReactionSpec::default();
        let u = |t: f64, x: f64| {
            spec.a_amp * (-(4.0 * spec.nu + spec.lambda_r) * t).exp() * (2.0 * x).cos()
                + spec.c_amp * (-spec.lambda_r * t).exp()
        };
        // First derivative tolerates a finer step; the second derivative
        // keeps 1e-4 to stay above f64 cancellation noise.
        let dt = 1e-5;
        let dx = 1e-4;
        for &(t, x) in &[(0.03, 0.5), (0.2, 1.9), (0.6, 2.8)] {
            let ut = (u(t + dt, x) - u(t - dt, x)) / (2.0 * dt);
            let uxx = (u(t, x + dx) - 2.0 * u(t, x) + u(t, x - dx)) / (dx * dx);
            let res = ut - spec.nu * uxx + spec.lambda_r * u(t, x);
            assert!(res.abs() <= 1e-6, "t={t} x={x}: {res}");
        }
    }

    #[test]
    fn neumann_closure_holds_for_the_initial_profile() {
        // The discrete BC u_0 = (4 u_1 - u_2)/3 is consistent with the cosine
        // profile to O(dx^4).
        let spec = DiffusionReactionSpec::default();
        let u0 = diffusion_reaction_field(&spec, 0.0);
        let ghost = (4.0 * u0[0] - u0[1]) / 3.0;
        let exact_at_0 = spec.a_amp + spec.c_amp; // cos(0) = 1
        assert_abs_diff_eq!(ghost, exact_at_0, epsilon = 1e-5);
    }
}
