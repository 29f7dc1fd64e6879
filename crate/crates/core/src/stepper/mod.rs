//! The PI-RPNN time integrator.
//!
//! One step on `[t, t+h]` writes the solution as
//! `u(t) + (t'-t) * w^T Phi(t')` and picks the output weights `w` so that the
//! ODE residual vanishes (in the ridge / least-squares sense) at `M`
//! equidistant collocation points. For the linear test equation the step
//! collapses to a scalar multiplier per window ([`build_scalar_step`]);
//! diagonalizable systems decouple into scalar problems
//! ([`step_linear_diagonalizable`]); general linear systems solve one coupled
//! ridge system per window ([`step_linear_coupled`]); nonlinear right-hand
//! sides train by damped Gauss-Newton ([`step_nonlinear`]). The Jordan-block
//! recursion ([`jordan_block_step`]) covers non-diagonalizable systems.

use nalgebra::{DMatrix, DVector};

use crate::basis::{
    default_alpha_u, eval_feature_derivs, eval_features, sample_basis, CollocationGrid, RbfBasis,
};
use crate::error::{Error, Result};
use crate::lstsq::{self, RidgeSpec, SparseMatrix};
use crate::rng::derive_seed;
use crate::Complex64;

mod jordan;
mod nonlinear;

pub use jordan::jordan_block_step;
pub use nonlinear::{step_nonlinear, GaussNewtonSpec};

/// Seed used when a config does not specify one.
pub const DEFAULT_SEED: u64 = 42;

/// Eigenvector-matrix condition limit for the decoupled path.
pub const EIGEN_COND_LIMIT: f64 = 1e8;

/// Unknown count `N * d` above which the coupled path assembles its window
/// system sparsely.
pub const SPARSE_ROUTE_THRESHOLD: usize = 512;

/// How the global feature scale `a_U` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaUPolicy {
    /// `a_U = (|lambda|/h) / (N + |lambda|h + (|lambda|h)^2 + (|lambda|h)^3)`.
    DefaultFormula,
    /// A fixed value, independent of `lambda` and `h`.
    Fixed(f64),
}

impl AlphaUPolicy {
    pub fn value(&self, lambda_abs: f64, h: f64, n_features: usize) -> Result<f64> {
        match *self {
            AlphaUPolicy::DefaultFormula => default_alpha_u(lambda_abs, h, n_features),
            AlphaUPolicy::Fixed(v) => {
                if v < 0.0 {
                    Err(Error::InvalidArgument(format!(
                        "fixed alpha_u must be >= 0, got {v}"
                    )))
                } else {
                    Ok(v)
                }
            }
        }
    }
}

/// Per-solver step configuration. Defaults follow the reference experiments:
/// `N = 3 M`, frozen basis, pseudoinverse solve (`delta = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    pub m_colloc: usize,
    pub n_features: usize,
    pub delta: f64,
    pub h: f64,
    pub alpha_u: AlphaUPolicy,
    pub seed: u64,
    pub freeze_basis: bool,
}

impl StepConfig {
    pub fn new(m_colloc: usize, h: f64) -> StepConfig {
        StepConfig {
            m_colloc,
            n_features: 3 * m_colloc,
            delta: 0.0,
            h,
            alpha_u: AlphaUPolicy::DefaultFormula,
            seed: DEFAULT_SEED,
            freeze_basis: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_colloc == 0 || self.n_features == 0 {
            return Err(Error::InvalidArgument(
                "m_colloc and n_features must be >= 1".into(),
            ));
        }
        if !(self.h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "h must be > 0, got {}",
                self.h
            )));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must be >= 0, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Linear constant-coefficient IVP `u' = A u`, `u(t0) = u0` on `[t0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProblem {
    pub matrix_a: DMatrix<f64>,
    pub u0: DVector<f64>,
    pub t0: f64,
    pub t_end: f64,
}

impl LinearProblem {
    pub fn new(
        matrix_a: DMatrix<f64>,
        u0: DVector<f64>,
        t0: f64,
        t_end: f64,
    ) -> Result<LinearProblem> {
        if matrix_a.nrows() != matrix_a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                matrix_a.nrows(),
                matrix_a.ncols()
            )));
        }
        if matrix_a.nrows() != u0.len() || u0.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{} but u0 has {} entries",
                matrix_a.nrows(),
                matrix_a.ncols(),
                u0.len()
            )));
        }
        if !(t_end > t0) {
            return Err(Error::InvalidArgument(format!(
                "t_end ({t_end}) must exceed t0 ({t0})"
            )));
        }
        Ok(LinearProblem {
            matrix_a,
            u0,
            t0,
            t_end,
        })
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }
}

/// Right-hand side `f(t, u)` of a general IVP.
pub type RhsFn = Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Sync>;
/// Jacobian `df/du (t, u)`.
pub type JacobianFn = Box<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Sync>;

/// General IVP `u' = f(t, u)` with an optional Jacobian.
pub struct OdeProblem {
    pub rhs: RhsFn,
    pub jacobian: Option<JacobianFn>,
    pub u0: DVector<f64>,
    pub t0: f64,
    pub t_end: f64,
}

impl OdeProblem {
    pub fn new(
        rhs: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Sync + 'static,
        u0: DVector<f64>,
        t0: f64,
        t_end: f64,
    ) -> Result<OdeProblem> {
        if !(t_end > t0) {
            return Err(Error::InvalidArgument(format!(
                "t_end ({t_end}) must exceed t0 ({t0})"
            )));
        }
        if u0.is_empty() {
            return Err(Error::InvalidArgument("u0 must be nonempty".into()));
        }
        Ok(OdeProblem {
            rhs: Box::new(rhs),
            jacobian: None,
            u0,
            t0,
            t_end,
        })
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(f64, &DVector<f64>) -> DMatrix<f64> + Sync + 'static,
    ) -> OdeProblem {
        self.jacobian = Some(Box::new(jac));
        self
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }
}

/// Precomputed per-window linear map for the scalar test equation: at each
/// collocation fraction `zeta_i`, `u(t + zeta_i h) = multipliers[i] * u(t)`.
#[derive(Debug, Clone)]
pub struct StepOperator {
    pub grid: CollocationGrid,
    pub basis: RbfBasis,
    pub fractions: Vec<f64>,
    pub multipliers: Vec<Complex64>,
}

impl StepOperator {
    /// Multiplier at the window end (fraction 1); this is what propagates the
    /// state to the next window.
    pub fn endpoint(&self) -> Complex64 {
        *self
            .multipliers
            .last()
            .expect("at least one collocation point")
    }
}

/// Solver identification carried by a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverMeta {
    pub solver: String,
    pub config: String,
}

/// Time-indexed states plus bookkeeping.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub wall_time: f64,
    pub meta: SolverMeta,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("nonempty trajectory")
    }
}

/// Compact complex Householder thin QR: reflectors stay implicit, so
/// applying `Q` to a vector costs O(N M) instead of the O(N M^2) a
/// materialized `Q` would.
struct ThinQr {
    /// R in the upper triangle, reflector tails below the diagonal.
    a: DMatrix<Complex64>,
    /// Leading reflector entries (the diagonal slot holds R).
    v0: Vec<Complex64>,
    /// Reflector gains 2 / ||v||^2.
    betas: Vec<f64>,
}

impl ThinQr {
    fn new(mut a: DMatrix<Complex64>) -> ThinQr {
        let (n, m) = a.shape();
        let steps = n.min(m);
        let mut v0 = vec![Complex64::new(0.0, 0.0); steps];
        let mut betas = vec![0.0; steps];
        for k in 0..steps {
            let xnorm = a.view((k, k), (n - k, 1)).norm();
            if xnorm == 0.0 {
                continue;
            }
            let akk = a[(k, k)];
            let phase = if akk == Complex64::new(0.0, 0.0) {
                Complex64::new(1.0, 0.0)
            } else {
                akk / Complex64::new(akk.norm(), 0.0)
            };
            let rkk = -phase * Complex64::new(xnorm, 0.0);
            let vk0 = akk - rkk;
            // ||v||^2 = 2 (||x||^2 + ||x|| |a_kk|)
            let vnorm_sq = 2.0 * (xnorm * xnorm + xnorm * akk.norm());
            if vnorm_sq == 0.0 {
                a[(k, k)] = rkk;
                continue;
            }
            let beta = 2.0 / vnorm_sq;
            v0[k] = vk0;
            betas[k] = beta;
            a[(k, k)] = rkk;
            for j in (k + 1)..m {
                // dot = v^H a[k.., j]
                let mut dot = vk0.conj() * a[(k, j)];
                for i in (k + 1)..n {
                    dot += a[(i, k)].conj() * a[(i, j)];
                }
                let s = Complex64::new(beta, 0.0) * dot;
                a[(k, j)] -= s * vk0;
                for i in (k + 1)..n {
                    let vik = a[(i, k)];
                    a[(i, j)] -= s * vik;
                }
            }
        }
        ThinQr { a, v0, betas }
    }

    fn r(&self) -> DMatrix<Complex64> {
        let m = self.a.ncols().min(self.a.nrows());
        let mut r = DMatrix::zeros(m, self.a.ncols());
        for i in 0..m {
            for j in i..self.a.ncols() {
                r[(i, j)] = self.a[(i, j)];
            }
        }
        r
    }

    /// `Q [g; 0]` for an M-vector `g`.
    fn apply_q(&self, g: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.a.nrows();
        let steps = self.v0.len();
        let mut y = DVector::zeros(n);
        y.rows_mut(0, g.len()).copy_from(g);
        for k in (0..steps).rev() {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let mut dot = self.v0[k].conj() * y[k];
            for i in (k + 1)..n {
                dot += self.a[(i, k)].conj() * y[i];
            }
            let s = Complex64::new(beta, 0.0) * dot;
            y[k] -= s * self.v0[k];
            for i in (k + 1)..n {
                let vik = self.a[(i, k)];
                y[i] -= s * vik;
            }
        }
        y
    }
}

/// Ridge (`delta > 0`) or truncated-pseudoinverse (`delta = 0`) solution of
/// the collocation system `Psi^T w = 1_M`: with the thin QR `Psi = Q R` and
/// the SVD `R = U S V^H`,
///
/// `(Psi Psi^H + delta I)^{-1} Psi 1 = Q U [s/(s^2+delta)] V^H 1`,
///
/// so the filter stays bounded by `1/(2 sqrt(delta))` and `Q` is applied
/// implicitly. Complex least squares conjugates at the end:
/// `w = conj(...)`.
pub(crate) fn collocation_weights(
    psi: DMatrix<Complex64>,
    delta: f64,
) -> Result<DVector<Complex64>> {
    let (n, m) = psi.shape();
    let qr = ThinQr::new(psi);
    let svd = nalgebra::SVD::try_new(qr.r(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of collocation factor did not converge".into()))?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = lstsq::effective_cutoff(0.0, n, m) * smax;
    let mut kept = 0usize;
    let ones = DVector::from_element(m, Complex64::new(1.0, 0.0));
    let mut y = &v_t * ones;
    for k in 0..y.len() {
        let s = svd.singular_values[k];
        let f = if delta > 0.0 {
            s / (s * s + delta)
        } else if s > cut && s > 0.0 {
            kept += 1;
            1.0 / s
        } else {
            0.0
        };
        y[k] *= Complex64::new(f, 0.0);
    }
    if delta == 0.0 && kept == 0 {
        return Err(Error::RankDeficient(format!(
            "all {m} collocation singular values fall below the cutoff"
        )));
    }
    let x = qr.apply_q(&(u * y));
    Ok(x.map(|c| c.conj()))
}

/// All per-fraction multipliers `S_i = 1 + lambda h zeta_i Phi_i^T w` for one
/// window, in one pass over the features.
pub(crate) fn scalar_multipliers(
    basis: &RbfBasis,
    grid: &CollocationGrid,
    lambda: Complex64,
    delta: f64,
) -> Result<Vec<Complex64>> {
    let (phi, dphi) = crate::basis::feature_matrices(basis, grid);
    let psi =
        crate::basis::psi_from_features(&phi, &dphi, &grid.fractions, basis.window_len, lambda);
    let w = collocation_weights(psi, delta)?;
    let h = basis.window_len;
    let mut out = Vec::with_capacity(grid.n_points);
    for (i, &zeta) in grid.fractions.iter().enumerate() {
        let mut dot = Complex64::new(0.0, 0.0);
        for j in 0..basis.n_features {
            dot += Complex64::new(phi[(j, i)], 0.0) * w[j];
        }
        out.push(Complex64::new(1.0, 0.0) + lambda * Complex64::new(h * zeta, 0.0) * dot);
    }
    Ok(out)
}

/// Build the scalar step operator for rate `lambda` on the basis window.
/// `cfg.alpha_u` decides the feature scale (the default formula uses
/// `|lambda|`); `cfg.delta` decides ridge vs pseudoinverse.
pub fn build_scalar_step(
    lambda: Complex64,
    cfg: &StepConfig,
    basis: &RbfBasis,
) -> Result<StepOperator> {
    cfg.validate()?;
    if (basis.window_len - cfg.h).abs() > 1e-12 * cfg.h.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "basis window length {} does not match cfg.h {}",
            basis.window_len, cfg.h
        )));
    }
    let alpha = cfg.alpha_u.value(lambda.norm(), cfg.h, basis.n_features)?;
    let eff = basis.with_alpha_u(alpha);
    let grid = CollocationGrid::equidistant(cfg.m_colloc)?;
    let multipliers = scalar_multipliers(&eff, &grid, lambda, cfg.delta)?;
    Ok(StepOperator {
        fractions: grid.fractions.clone(),
        grid,
        basis: eff,
        multipliers,
    })
}

/// Eigenvalues, eigenvector matrix and its 2-norm condition number for a real
/// matrix, via Schur eigenvalues plus one inverse-iteration pass per
/// eigenvalue. Repeated (defective) eigenvalues surface as an enormous
/// condition number, which the caller turns into the coupled-path error.
pub(crate) fn eigen_decompose(
    a: &DMatrix<f64>,
) -> Result<(Vec<Complex64>, DMatrix<Complex64>, f64)> {
    let d = a.nrows();
    let eigs = a.clone().complex_eigenvalues();
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let mut v = DMatrix::<Complex64>::zeros(d, d);
    for k in 0..d {
        let vec = inverse_iteration(&ac, eigs[k], scale, k as u64)?;
        v.set_column(k, &vec);
    }
    let svd = nalgebra::SVD::try_new(v.clone(), false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of eigenvector matrix did not converge".into()))?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    Ok((eigs.iter().cloned().collect(), v, cond))
}

fn inverse_iteration(
    ac: &DMatrix<Complex64>,
    lambda: Complex64,
    scale: f64,
    index: u64,
) -> Result<DVector<Complex64>> {
    let d = ac.nrows();
    let raw = crate::rng::uniform_vec(derive_seed(0xE16E_7AB1E, index, 0), 2 * d);
    let mut x = DVector::from_fn(d, |i, _| {
        Complex64::new(raw[2 * i] - 0.5, raw[2 * i + 1] - 0.5)
    });
    x /= Complex64::new(x.norm(), 0.0);
    // Floor keeps the shifted matrix away from underflow for tiny or zero A.
    let mut shift_mag = (1e-12 * scale).max(1e-150);
    for _attempt in 0..4 {
        let mu = lambda + Complex64::new(shift_mag, shift_mag);
        let mut b = ac.clone();
        for i in 0..d {
            b[(i, i)] -= mu;
        }
        if let Some(lu) = Some(b.lu()) {
            let mut ok = true;
            let mut y = x.clone();
            for _ in 0..3 {
                match lu.solve(&y) {
                    Some(sol) => {
                        let n = sol.norm();
                        if !(n.is_finite() && n > 0.0) {
                            ok = false;
                            break;
                        }
                        y = sol / Complex64::new(n, 0.0);
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let resid = (ac * &y - &y * lambda).norm();
                if resid <= 1e-6 * scale {
                    return Ok(y);
                }
            }
        }
        shift_mag *= 100.0;
    }
    Err(Error::Numerical(format!(
        "inverse iteration failed for eigenvalue {lambda} (matrix scale {scale:.3e})"
    )))
}

struct StepSchedule {
    n_full: usize,
    remainder: f64,
}

fn schedule(t0: f64, t_end: f64, h: f64) -> StepSchedule {
    let span = t_end - t0;
    let n_full = (span / h + 1e-9).floor() as usize;
    let mut remainder = span - n_full as f64 * h;
    if remainder <= 1e-12 * span.max(1.0) {
        remainder = 0.0;
    }
    StepSchedule { n_full, remainder }
}

/// Integrate a diagonalizable linear system by eigen-decoupling: transform to
/// eigencoordinates, advance every mode with its scalar multiplier, transform
/// back. Requires the eigenvector condition number to stay below
/// [`EIGEN_COND_LIMIT`]; complex modes run in complex arithmetic and the
/// back-transform must leave an imaginary residue below `1e-10` relative.
pub fn step_linear_diagonalizable(problem: &LinearProblem, cfg: &StepConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let (eigs, v, cond) = eigen_decompose(&problem.matrix_a)?;
    if !(cond <= EIGEN_COND_LIMIT) {
        return Err(Error::IllConditionedEigenbasis {
            cond,
            limit: EIGEN_COND_LIMIT,
        });
    }
    let v_lu = v.clone().lu();
    let u0c = problem.u0.map(|x| Complex64::new(x, 0.0));
    let mut z = v_lu
        .solve(&u0c)
        .ok_or_else(|| Error::Numerical("eigenvector matrix is numerically singular".into()))?;

    let sched = schedule(problem.t0, problem.t_end, cfg.h);
    let base = sample_basis(cfg.n_features, 0.0, 0.0, cfg.h, cfg.seed)?;
    let mults_for = |basis: &RbfBasis, h: f64| -> Result<Vec<Complex64>> {
        let grid = CollocationGrid::equidistant(cfg.m_colloc)?;
        eigs.iter()
            .map(|&lam| {
                let alpha = cfg.alpha_u.value(lam.norm(), h, cfg.n_features)?;
                let eff = basis.with_alpha_u(alpha).with_window(0.0, h);
                Ok(*scalar_multipliers(&eff, &grid, lam, cfg.delta)?
                    .last()
                    .unwrap())
            })
            .collect()
    };
    let frozen_mults = if cfg.freeze_basis {
        Some(mults_for(&base, cfg.h)?)
    } else {
        None
    };

    let mut times = Vec::with_capacity(sched.n_full + 2);
    let mut states = Vec::with_capacity(sched.n_full + 2);
    times.push(problem.t0);
    states.push(problem.u0.clone());

    let record = |z: &DVector<Complex64>,
                  t: f64,
                  times: &mut Vec<f64>,
                  states: &mut Vec<DVector<f64>>|
     -> Result<()> {
        let uc = &v * z;
        let scale = uc.iter().map(|c| c.re.abs()).fold(0.0, f64::max).max(1.0);
        let imag = uc.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        if imag > 1e-10 * scale {
            return Err(Error::Numerical(format!(
                "imaginary residue {imag:.3e} exceeds 1e-10 * {scale:.3e} at t = {t}"
            )));
        }
        times.push(t);
        states.push(uc.map(|c| c.re));
        Ok(())
    };

    for k in 0..sched.n_full {
        let mults = match &frozen_mults {
            Some(m) => m.clone(),
            None => {
                let b = sample_basis(
                    cfg.n_features,
                    0.0,
                    0.0,
                    cfg.h,
                    derive_seed(cfg.seed, k as u64, 0),
                )?;
                mults_for(&b, cfg.h)?
            }
        };
        for (i, m) in mults.iter().enumerate() {
            z[i] *= *m;
        }
        record(
            &z,
            problem.t0 + (k + 1) as f64 * cfg.h,
            &mut times,
            &mut states,
        )?;
    }
    if sched.remainder > 0.0 {
        let b = if cfg.freeze_basis {
            base.clone()
        } else {
            sample_basis(
                cfg.n_features,
                0.0,
                0.0,
                cfg.h,
                derive_seed(cfg.seed, sched.n_full as u64, 0),
            )?
        };
        let mults = mults_for(&b.with_window(0.0, sched.remainder), sched.remainder)?;
        for (i, m) in mults.iter().enumerate() {
            z[i] *= *m;
        }
        record(&z, problem.t_end, &mut times, &mut states)?;
    }

    Ok(Trajectory {
        times,
        states,
        wall_time: started.elapsed().as_secs_f64(),
        meta: SolverMeta {
            solver: format!("pirpnn-m{}", cfg.m_colloc),
            config: format!(
                "path=eigen m={} n={} delta={} h={} seed={} freeze={}",
                cfg.m_colloc, cfg.n_features, cfg.delta, cfg.h, cfg.seed, cfg.freeze_basis
            ),
        },
    })
}

/// One-window propagator for the coupled path: `P` with `u_next = P u_prev`.
fn coupled_propagator(
    a: &DMatrix<f64>,
    basis: &RbfBasis,
    grid: &CollocationGrid,
    h: f64,
    delta: f64,
) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let n = basis.n_features;
    let m = grid.n_points;
    // Feature values / residual coefficients per collocation point.
    let mut g_cols = Vec::with_capacity(m);
    let mut d_cols = Vec::with_capacity(m);
    for &zeta in &grid.fractions {
        let s = h * zeta;
        let t = basis.window_start + s;
        let g = eval_features(basis, t);
        let dphi = eval_feature_derivs(basis, t);
        d_cols.push(&g + dphi * s);
        g_cols.push(g);
    }
    // Row block i, column block j of the (M d) x (N d) system:
    //   D_i[j] I - (h zeta_i) G_i[j] A.
    let spec = RidgeSpec::new(delta);
    let mut rhs = DMatrix::<f64>::zeros(m * d, d);
    for i in 0..m {
        rhs.view_mut((i * d, 0), (d, d)).copy_from(a);
    }
    let w_all = if n * d > SPARSE_ROUTE_THRESHOLD {
        let mut triplets = Vec::new();
        for (i, &zeta) in grid.fractions.iter().enumerate() {
            let s = h * zeta;
            for j in 0..n {
                let dij = d_cols[i][j];
                if dij != 0.0 {
                    for r in 0..d {
                        triplets.push((i * d + r, j * d + r, dij));
                    }
                }
                let gij = s * g_cols[i][j];
                if gij != 0.0 {
                    for r in 0..d {
                        for c in 0..d {
                            let val = a[(r, c)];
                            if val != 0.0 {
                                triplets.push((i * d + r, j * d + c, -gij * val));
                            }
                        }
                    }
                }
            }
        }
        let mat = SparseMatrix::from_triplets(m * d, n * d, &triplets)?;
        lstsq::sparse_rank_revealing_solve(&mat, &rhs, &spec)?
    } else {
        let mut mat = DMatrix::<f64>::zeros(m * d, n * d);
        for (i, &zeta) in grid.fractions.iter().enumerate() {
            let s = h * zeta;
            for j in 0..n {
                let dij = d_cols[i][j];
                let gij = s * g_cols[i][j];
                for r in 0..d {
                    mat[(i * d + r, j * d + r)] += dij;
                    for c in 0..d {
                        mat[(i * d + r, j * d + c)] -= gij * a[(r, c)];
                    }
                }
            }
        }
        lstsq::ridge_solve(&mat, &rhs, &spec)?
    };
    // u_next(col k) = e_k + h * X_k G_M with X_k read off column k of w_all.
    let g_end = &g_cols[m - 1];
    let mut p = DMatrix::<f64>::identity(d, d);
    for k in 0..d {
        for j in 0..n {
            let gj = g_end[j];
            if gj != 0.0 {
                for r in 0..d {
                    p[(r, k)] += h * w_all[(j * d + r, k)] * gj;
                }
            }
        }
    }
    Ok(p)
}

/// Integrate a general linear system through the fully coupled per-window
/// ridge solve; no diagonalizability assumption. The window system is
/// assembled sparsely once `N * d` exceeds [`SPARSE_ROUTE_THRESHOLD`].
pub fn step_linear_coupled(problem: &LinearProblem, cfg: &StepConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let grid = CollocationGrid::equidistant(cfg.m_colloc)?;
    // The default scale policy keys off the dominant rate of the system.
    let lambda_abs = problem
        .matrix_a
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max);

    let make_basis = |seed: u64, h: f64| -> Result<RbfBasis> {
        let alpha = cfg.alpha_u.value(lambda_abs, h, cfg.n_features)?;
        Ok(sample_basis(cfg.n_features, 0.0, 0.0, h, seed)?.with_alpha_u(alpha))
    };

    let sched = schedule(problem.t0, problem.t_end, cfg.h);
    let frozen = if cfg.freeze_basis {
        Some(coupled_propagator(
            &problem.matrix_a,
            &make_basis(cfg.seed, cfg.h)?,
            &grid,
            cfg.h,
            cfg.delta,
        )?)
    } else {
        None
    };

    let mut times = Vec::with_capacity(sched.n_full + 2);
    let mut states = Vec::with_capacity(sched.n_full + 2);
    times.push(problem.t0);
    states.push(problem.u0.clone());
    let mut u = problem.u0.clone();
    for k in 0..sched.n_full {
        u = match &frozen {
            Some(p) => p * &u,
            None => {
                let b = make_basis(derive_seed(cfg.seed, k as u64, 0), cfg.h)?;
                &coupled_propagator(&problem.matrix_a, &b, &grid, cfg.h, cfg.delta)? * &u
            }
        };
        times.push(problem.t0 + (k + 1) as f64 * cfg.h);
        states.push(u.clone());
    }
    if sched.remainder > 0.0 {
        let seed = if cfg.freeze_basis {
            cfg.seed
        } else {
            derive_seed(cfg.seed, sched.n_full as u64, 0)
        };
        let b = make_basis(seed, sched.remainder)?;
        let p = coupled_propagator(&problem.matrix_a, &b, &grid, sched.remainder, cfg.delta)?;
        u = &p * &u;
        times.push(problem.t_end);
        states.push(u);
    }

    Ok(Trajectory {
        times,
        states,
        wall_time: started.elapsed().as_secs_f64(),
        meta: SolverMeta {
            solver: format!("pirpnn-m{}", cfg.m_colloc),
            config: format!(
                "path=coupled m={} n={} delta={} h={} seed={} freeze={}",
                cfg.m_colloc, cfg.n_features, cfg.delta, cfg.h, cfg.seed, cfg.freeze_basis
            ),
        },
    })
}
