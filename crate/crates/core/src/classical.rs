//! Implicit Runge-Kutta comparators with exact linear step maps.
//!
//! Each scheme is a Butcher tableau `(a, b, c)`; applied to `u' = A u` a step
//! reduces to one linear stage solve, and the scalar stability function is
//! `R(z) = det(I - z a + z 1 b^T) / det(I - z a)`. Explicit Euler / RK2 / RK3
//! / RK4 tableaux are included for stability-contour comparisons only.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stepper::{LinearProblem, SolverMeta, Trajectory};
use crate::Complex64;

/// One-step Runge-Kutta scheme as a Butcher tableau.
#[derive(Debug, Clone, PartialEq)]
pub struct RkScheme {
    pub name: &'static str,
    pub butcher_a: DMatrix<f64>,
    pub butcher_b: DVector<f64>,
    pub butcher_c: DVector<f64>,
    pub order: usize,
}

impl RkScheme {
    pub fn stages(&self) -> usize {
        self.butcher_b.len()
    }

    pub fn backward_euler() -> RkScheme {
        RkScheme {
            name: "backward-euler",
            butcher_a: DMatrix::from_row_slice(1, 1, &[1.0]),
            butcher_b: DVector::from_column_slice(&[1.0]),
            butcher_c: DVector::from_column_slice(&[1.0]),
            order: 1,
        }
    }

    pub fn implicit_midpoint() -> RkScheme {
        RkScheme {
            name: "implicit-midpoint",
            butcher_a: DMatrix::from_row_slice(1, 1, &[0.5]),
            butcher_b: DVector::from_column_slice(&[1.0]),
            butcher_c: DVector::from_column_slice(&[0.5]),
            order: 2,
        }
    }

    pub fn trapezoidal() -> RkScheme {
        RkScheme {
            name: "trapezoidal",
            butcher_a: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.5]),
            butcher_b: DVector::from_column_slice(&[0.5, 0.5]),
            butcher_c: DVector::from_column_slice(&[0.0, 1.0]),
            order: 2,
        }
    }

    /// 2-stage Gauss-Legendre, order 4.
    pub fn gauss2() -> RkScheme {
        let s3 = 3f64.sqrt();
        RkScheme {
            name: "gauss2",
            butcher_a: DMatrix::from_row_slice(
                2,
                2,
                &[0.25, 0.25 - s3 / 6.0, 0.25 + s3 / 6.0, 0.25],
            ),
            butcher_b: DVector::from_column_slice(&[0.5, 0.5]),
            butcher_c: DVector::from_column_slice(&[0.5 - s3 / 6.0, 0.5 + s3 / 6.0]),
            order: 4,
        }
    }

    /// 2-stage Radau IIA, order 3.
    pub fn radau2() -> RkScheme {
        RkScheme {
            name: "radau2",
            butcher_a: DMatrix::from_row_slice(2, 2, &[5.0 / 12.0, -1.0 / 12.0, 0.75, 0.25]),
            butcher_b: DVector::from_column_slice(&[0.75, 0.25]),
            butcher_c: DVector::from_column_slice(&[1.0 / 3.0, 1.0]),
            order: 3,
        }
    }

    /// 3-stage Radau IIA, order 5.
    pub fn radau3() -> RkScheme {
        let s6 = 6f64.sqrt();
        RkScheme {
            name: "radau3",
            butcher_a: DMatrix::from_row_slice(
                3,
                3,
                &[
                    11.0 / 45.0 - 7.0 * s6 / 360.0,
                    37.0 / 225.0 - 169.0 * s6 / 1800.0,
                    -2.0 / 225.0 + s6 / 75.0,
                    37.0 / 225.0 + 169.0 * s6 / 1800.0,
                    11.0 / 45.0 + 7.0 * s6 / 360.0,
                    -2.0 / 225.0 - s6 / 75.0,
                    4.0 / 9.0 - s6 / 36.0,
                    4.0 / 9.0 + s6 / 36.0,
                    1.0 / 9.0,
                ],
            ),
            butcher_b: DVector::from_column_slice(&[
                4.0 / 9.0 - s6 / 36.0,
                4.0 / 9.0 + s6 / 36.0,
                1.0 / 9.0,
            ]),
            butcher_c: DVector::from_column_slice(&[0.4 - s6 / 10.0, 0.4 + s6 / 10.0, 1.0]),
            order: 5,
        }
    }

    pub fn explicit_euler() -> RkScheme {
        RkScheme {
            name: "explicit-euler",
            butcher_a: DMatrix::from_row_slice(1, 1, &[0.0]),
            butcher_b: DVector::from_column_slice(&[1.0]),
            butcher_c: DVector::from_column_slice(&[0.0]),
            order: 1,
        }
    }

    /// Explicit midpoint (RK2).
    pub fn rk2() -> RkScheme {
        RkScheme {
            name: "rk2",
            butcher_a: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]),
            butcher_b: DVector::from_column_slice(&[0.0, 1.0]),
            butcher_c: DVector::from_column_slice(&[0.0, 0.5]),
            order: 2,
        }
    }

    /// Kutta's third-order scheme.
    pub fn rk3() -> RkScheme {
        RkScheme {
            name: "rk3",
            butcher_a: DMatrix::from_row_slice(
                3,
                3,
                &[0.0, 0.0, 0.0, 0.5, 0.0, 0.0, -1.0, 2.0, 0.0],
            ),
            butcher_b: DVector::from_column_slice(&[1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]),
            butcher_c: DVector::from_column_slice(&[0.0, 0.5, 1.0]),
            order: 3,
        }
    }

    /// Classic RK4.
    pub fn rk4() -> RkScheme {
        RkScheme {
            name: "rk4",
            butcher_a: DMatrix::from_row_slice(
                4,
                4,
                &[
                    0.0, 0.0, 0.0, 0.0, //
                    0.5, 0.0, 0.0, 0.0, //
                    0.0, 0.5, 0.0, 0.0, //
                    0.0, 0.0, 1.0, 0.0,
                ],
            ),
            butcher_b: DVector::from_column_slice(&[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0]),
            butcher_c: DVector::from_column_slice(&[0.0, 0.5, 0.5, 1.0]),
            order: 4,
        }
    }

    /// The six implicit comparators.
    pub fn comparators() -> Vec<RkScheme> {
        vec![
            RkScheme::backward_euler(),
            RkScheme::implicit_midpoint(),
            RkScheme::trapezoidal(),
            RkScheme::gauss2(),
            RkScheme::radau2(),
            RkScheme::radau3(),
        ]
    }

    pub fn by_name(name: &str) -> Result<RkScheme> {
        match name {
            "backward-euler" => Ok(RkScheme::backward_euler()),
            "implicit-midpoint" => Ok(RkScheme::implicit_midpoint()),
            "trapezoidal" => Ok(RkScheme::trapezoidal()),
            "gauss2" => Ok(RkScheme::gauss2()),
            "radau2" => Ok(RkScheme::radau2()),
            "radau3" => Ok(RkScheme::radau3()),
            "explicit-euler" => Ok(RkScheme::explicit_euler()),
            "rk2" => Ok(RkScheme::rk2()),
            "rk3" => Ok(RkScheme::rk3()),
            "rk4" => Ok(RkScheme::rk4()),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// One exact IRK step for `u' = A u`: solve the stage system
/// `(I - h a (x) A) k = 1 (x) (A u)` and update `u + h sum_i b_i k_i`.
pub fn rk_step_linear(
    scheme: &RkScheme,
    a: &DMatrix<f64>,
    u: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let d = a.nrows();
    if a.ncols() != d || u.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, u has {}",
            a.nrows(),
            a.ncols(),
            u.len()
        )));
    }
    let s = scheme.stages();
    let mut stage = DMatrix::<f64>::identity(s * d, s * d);
    for i in 0..s {
        for j in 0..s {
            let w = h * scheme.butcher_a[(i, j)];
            if w != 0.0 {
                for r in 0..d {
                    for c in 0..d {
                        stage[(i * d + r, j * d + c)] -= w * a[(r, c)];
                    }
                }
            }
        }
    }
    let au = a * u;
    let mut rhs = DVector::<f64>::zeros(s * d);
    for i in 0..s {
        rhs.rows_mut(i * d, d).copy_from(&au);
    }
    let k = stage.lu().solve(&rhs).ok_or_else(|| Error::StepFailure {
        t: f64::NAN,
        detail: "singular stage system".into(),
    })?;
    let mut next = u.clone();
    for i in 0..s {
        next += k.rows(i * d, d) * (h * scheme.butcher_b[i]);
    }
    Ok(next)
}

/// Scalar stability function `R(z) = det(I - z a + z 1 b^T) / det(I - z a)`.
/// At a pole of `R` the result is infinite (`is_infinite()` on the modulus).
pub fn stability_function(scheme: &RkScheme, z: Complex64) -> Complex64 {
    let s = scheme.stages();
    let mut den = DMatrix::<Complex64>::identity(s, s);
    for i in 0..s {
        for j in 0..s {
            den[(i, j)] -= z * Complex64::new(scheme.butcher_a[(i, j)], 0.0);
        }
    }
    let mut num = den.clone();
    for i in 0..s {
        for j in 0..s {
            num[(i, j)] += z * Complex64::new(scheme.butcher_b[j], 0.0);
        }
    }
    let dnum = num.determinant();
    let dden = den.determinant();
    if dden == Complex64::new(0.0, 0.0) {
        Complex64::new(f64::INFINITY, 0.0)
    } else {
        dnum / dden
    }
}

/// Integrate `u' = A u` over the problem span with fixed step `h`; the last
/// step is shortened to land on `t_end` exactly.
pub fn rk_integrate(scheme: &RkScheme, problem: &LinearProblem, h: f64) -> Result<Trajectory> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be > 0, got {h}")));
    }
    let started = std::time::Instant::now();
    let span = problem.t_end - problem.t0;
    let n_full = (span / h + 1e-9).floor() as usize;
    let remainder = span - n_full as f64 * h;

    // A, h fixed across steps: precompute the dense one-step propagator by
    // solving with d unit vectors, then march by matrix-vector products.
    let propagator = |hh: f64| -> Result<DMatrix<f64>> {
        let d = problem.dim();
        let mut p = DMatrix::<f64>::zeros(d, d);
        for k in 0..d {
            let e = DVector::from_fn(d, |i, _| if i == k { 1.0 } else { 0.0 });
            let col = rk_step_linear(scheme, &problem.matrix_a, &e, hh)?;
            p.set_column(k, &col);
        }
        Ok(p)
    };
    let p_full = propagator(h)?;

    let mut times = Vec::with_capacity(n_full + 2);
    let mut states = Vec::with_capacity(n_full + 2);
    times.push(problem.t0);
    states.push(problem.u0.clone());
    let mut u = problem.u0.clone();
    for k in 0..n_full {
        u = &p_full * &u;
        times.push(problem.t0 + (k + 1) as f64 * h);
        states.push(u.clone());
    }
    if remainder > 1e-12 * span.max(1.0) {
        let p_rem = propagator(remainder)?;
        u = &p_rem * &u;
        times.push(problem.t_end);
        states.push(u);
    }
    Ok(Trajectory {
        times,
        states,
        wall_time: started.elapsed().as_secs_f64(),
        meta: SolverMeta {
            solver: scheme.name.to_string(),
            config: format!("h={h}"),
        },
    })
}
