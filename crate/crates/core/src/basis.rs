//! Gaussian RBF random feature sets and the collocation matrices built from
//! them.
//!
//! A feature set for one step window `[t0, t0+h]` holds `N` Gaussians
//! `phi_j(t) = exp(-a_U * theta_j * (t - tau_j)^2)` with random shapes
//! `theta_j ~ U[0,1]` and deterministic equispaced centers
//! `tau_j = t0 + (j/N) * h` (j = 1..N). Everything downstream (step maps,
//! stability scans, the consistency probe) is assembled from these features
//! and their time derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::uniform_vec;
use crate::Complex64;

/// Sampled Gaussian feature set for one step window.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfBasis {
    /// Number of features `N`.
    pub n_features: usize,
    /// Global scale `a_U >= 0` of the squared-exponential argument.
    pub alpha_u: f64,
    /// Random shapes `theta_j`, i.i.d. uniform on [0,1], reproducible from `seed`.
    pub thetas: Vec<f64>,
    /// Center fractions `xi_j = j/N` for j = 1..N.
    pub center_fractions: Vec<f64>,
    /// Window start `t0`.
    pub window_start: f64,
    /// Window length `h > 0`.
    pub window_len: f64,
    /// Seed the shapes were drawn from.
    pub seed: u64,
}

impl RbfBasis {
    /// Center `tau_j` in absolute time.
    #[inline]
    pub fn center(&self, j: usize) -> f64 {
        self.window_start + self.center_fractions[j] * self.window_len
    }

    /// Same shapes, different global scale. The scale is deterministic (it is
    /// slaved to `|lambda|` by the default policy), so swapping it does not
    /// re-randomize anything.
    pub fn with_alpha_u(&self, alpha_u: f64) -> RbfBasis {
        RbfBasis {
            alpha_u,
            ..self.clone()
        }
    }

    /// Same shapes, shifted window. Features depend on `t - tau_j` only, so a
    /// frozen basis is re-homed to each step window without resampling.
    pub fn with_window(&self, window_start: f64, window_len: f64) -> RbfBasis {
        RbfBasis {
            window_start,
            window_len,
            ..self.clone()
        }
    }
}

/// The `M` equidistant in-window collocation fractions `zeta_i = i/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    pub n_points: usize,
    /// `zeta_i = i/M` for i = 1..M; strictly increasing, last entry exactly 1.
    pub fractions: Vec<f64>,
}

impl CollocationGrid {
    /// Equidistant grid with `m` points; the last point sits on the window end.
    pub fn equidistant(m: usize) -> Result<CollocationGrid> {
        if m == 0 {
            return Err(Error::InvalidArgument(
                "collocation grid needs m >= 1 points".into(),
            ));
        }
        let fractions = (1..=m).map(|i| i as f64 / m as f64).collect();
        Ok(CollocationGrid {
            n_points: m,
            fractions,
        })
    }
}

/// Draw a feature set: `n_features` i.i.d. uniform shapes plus deterministic
/// equispaced centers on the window.
pub fn sample_basis(
    n_features: usize,
    alpha_u: f64,
    window_start: f64,
    window_len: f64,
    seed: u64,
) -> Result<RbfBasis> {
    if n_features == 0 {
        return Err(Error::InvalidArgument("n_features must be >= 1".into()));
    }
    if !(window_len > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "window_len must be > 0, got {window_len}"
        )));
    }
    if !(alpha_u >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha_u must be >= 0, got {alpha_u}"
        )));
    }
    let thetas = uniform_vec(seed, n_features);
    let n = n_features as f64;
    let center_fractions = (1..=n_features).map(|j| j as f64 / n).collect();
    Ok(RbfBasis {
        n_features,
        alpha_u,
        thetas,
        center_fractions,
        window_start,
        window_len,
        seed,
    })
}

/// Feature vector `(phi_1(t), ..., phi_N(t))`; defined for any real `t`.
pub fn eval_features(basis: &RbfBasis, t: f64) -> DVector<f64> {
    DVector::from_fn(basis.n_features, |j, _| {
        let dt = t - basis.center(j);
        (-basis.alpha_u * basis.thetas[j] * dt * dt).exp()
    })
}

/// Time derivatives `phi_j'(t) = -2 a_U theta_j (t - tau_j) phi_j(t)`.
pub fn eval_feature_derivs(basis: &RbfBasis, t: f64) -> DVector<f64> {
    DVector::from_fn(basis.n_features, |j, _| {
        let dt = t - basis.center(j);
        let phi = (-basis.alpha_u * basis.thetas[j] * dt * dt).exp();
        -2.0 * basis.alpha_u * basis.thetas[j] * dt * phi
    })
}

/// Feature values and derivatives at every collocation point: `phi[(j, i)] =
/// phi_j(c_i)` and `dphi[(j, i)] = phi_j'(c_i)`, both N x M.
pub(crate) fn feature_matrices(
    basis: &RbfBasis,
    grid: &CollocationGrid,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = basis.n_features;
    let m = grid.n_points;
    let h = basis.window_len;
    let mut phi = DMatrix::zeros(n, m);
    let mut dphi = DMatrix::zeros(n, m);
    for (i, &zeta) in grid.fractions.iter().enumerate() {
        let t = basis.window_start + h * zeta;
        for j in 0..n {
            let dt = t - basis.center(j);
            let p = (-basis.alpha_u * basis.thetas[j] * dt * dt).exp();
            phi[(j, i)] = p;
            dphi[(j, i)] = -2.0 * basis.alpha_u * basis.thetas[j] * dt * p;
        }
    }
    (phi, dphi)
}

/// Collocation matrix `Psi` (N x M) for the scalar test equation with rate
/// `lambda`:
///
/// `psi_ji = phi_j(c_i) + (c_i - t0) phi_j'(c_i) - lambda (c_i - t0) phi_j(c_i)`
///
/// with `c_i - t0 = h * zeta_i`. A real `lambda` produces exactly zero
/// imaginary parts.
pub fn assemble_psi(
    basis: &RbfBasis,
    grid: &CollocationGrid,
    lambda: Complex64,
) -> DMatrix<Complex64> {
    let (phi, dphi) = feature_matrices(basis, grid);
    psi_from_features(&phi, &dphi, &grid.fractions, basis.window_len, lambda)
}

pub(crate) fn psi_from_features(
    phi: &DMatrix<f64>,
    dphi: &DMatrix<f64>,
    fractions: &[f64],
    h: f64,
    lambda: Complex64,
) -> DMatrix<Complex64> {
    let (n, m) = phi.shape();
    let mut psi = DMatrix::zeros(n, m);
    for (i, &zeta) in fractions.iter().enumerate() {
        let s = h * zeta; // c_i - t0
        for j in 0..n {
            psi[(j, i)] = Complex64::new(phi[(j, i)] + s * dphi[(j, i)], 0.0)
                - lambda * Complex64::new(s * phi[(j, i)], 0.0);
        }
    }
    psi
}

/// Default global scale: `a_U = (|lambda|/h) / (N + |lambda|h + (|lambda|h)^2 + (|lambda|h)^3)`.
///
/// Guarantees `eps = a_U h^2 = |lambda|h / (N + |lambda|h + ...) <= min(1, |lambda|h/N)`.
pub fn default_alpha_u(lambda_abs: f64, h: f64, n_features: usize) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be > 0, got {h}")));
    }
    if n_features == 0 {
        return Err(Error::InvalidArgument("n_features must be >= 1".into()));
    }
    if !(lambda_abs >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "|lambda| must be >= 0, got {lambda_abs}"
        )));
    }
    let zh = lambda_abs * h;
    Ok((lambda_abs / h) / (n_features as f64 + zh + zh * zh + zh * zh * zh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn centers_are_equispaced_fractions() {
        let b = sample_basis(3, 1.0, 0.0, 1.0, 1).unwrap();
        assert_eq!(b.center_fractions, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn same_seed_same_thetas() {
        let a = sample_basis(64, 0.5, 0.0, 1.0, 99).unwrap();
        let b = sample_basis(64, 0.5, 2.0, 3.0, 99).unwrap();
        assert_eq!(a.thetas, b.thetas);
    }

    #[test]
    fn theta_sample_mean_matches_uniform_law() {
        let b = sample_basis(10_000, 0.0, 0.0, 1.0, 2024).unwrap();
        let mean = b.thetas.iter().sum::<f64>() / b.thetas.len() as f64;
        assert!((0.48..=0.52).contains(&mean), "mean {mean}");
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(sample_basis(0, 1.0, 0.0, 1.0, 1).is_err());
        assert!(sample_basis(4, 1.0, 0.0, 0.0, 1).is_err());
        assert!(sample_basis(4, -1.0, 0.0, 1.0, 1).is_err());
        assert!(default_alpha_u(1.0, 0.0, 4).is_err());
        assert!(default_alpha_u(1.0, -1.0, 4).is_err());
    }

    #[test]
    fn feature_is_one_at_its_center() {
        let b = sample_basis(5, 2.0, 1.5, 0.7, 3).unwrap();
        for j in 0..5 {
            let v = eval_features(&b, b.center(j));
            assert_eq!(v[j], 1.0);
            let d = eval_feature_derivs(&b, b.center(j));
            assert_eq!(d[j], 0.0);
        }
    }

    #[test]
    fn zero_scale_gives_flat_features() {
        let b = sample_basis(6, 0.0, 0.0, 2.0, 5).unwrap();
        for &t in &[-1.0, 0.3, 2.0, 10.0] {
            assert!(eval_features(&b, t).iter().all(|&x| x == 1.0));
            assert!(eval_feature_derivs(&b, t).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn unit_gaussian_value() {
        // alpha_u = 1, theta = 1, tau = 0, t = 1 -> e^{-1}
        let mut b = sample_basis(1, 1.0, -1.0, 1.0, 0).unwrap(); // center at t = 0
        b.thetas[0] = 1.0;
        assert_relative_eq!(
            eval_features(&b, 1.0)[0],
            (-1.0f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn psi_flat_features_expansion() {
        // alpha_u = 0: psi_ji = 1 - lambda h zeta_i for every j.
        let b = sample_basis(4, 0.0, 0.0, 0.5, 9).unwrap();
        let g = CollocationGrid::equidistant(3).unwrap();
        let lam = Complex64::new(-2.0, 0.0);
        let psi = assemble_psi(&b, &g, lam);
        for i in 0..3 {
            let want = 1.0 + 2.0 * 0.5 * g.fractions[i];
            for j in 0..4 {
                assert_relative_eq!(psi[(j, i)].re, want, max_relative = 1e-15);
                assert_eq!(psi[(j, i)].im, 0.0);
            }
        }
        // lambda = 0 on top of that: all-ones matrix.
        let psi0 = assemble_psi(&b, &g, Complex64::new(0.0, 0.0));
        assert!(psi0.iter().all(|&x| x == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn psi_matches_direct_feature_evaluation() {
        let b = sample_basis(4, 1.3, 0.2, 0.8, 11).unwrap();
        let g = CollocationGrid::equidistant(2).unwrap();
        let lam = Complex64::new(-0.7, 0.4);
        let psi = assemble_psi(&b, &g, lam);
        for (i, &zeta) in g.fractions.iter().enumerate() {
            let s = zeta * b.window_len;
            let t = b.window_start + s;
            let phi = eval_features(&b, t);
            let dphi = eval_feature_derivs(&b, t);
            for j in 0..4 {
                let want = Complex64::new(phi[j] + s * dphi[j], 0.0)
                    - lam * Complex64::new(s * phi[j], 0.0);
                assert_abs_diff_eq!(psi[(j, i)].re, want.re, epsilon = 1e-14);
                assert_abs_diff_eq!(psi[(j, i)].im, want.im, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn default_alpha_u_examples() {
        assert_relative_eq!(
            default_alpha_u(1.0, 1.0, 9).unwrap(),
            1.0 / 12.0,
            max_relative = 1e-15
        );
        assert_eq!(default_alpha_u(0.0, 0.3, 17).unwrap(), 0.0);
        let a = default_alpha_u(1000.0, 1.0, 30).unwrap();
        let eps = a * 1.0;
        assert_relative_eq!(
            eps,
            1000.0 / (30.0 + 1000.0 + 1e6 + 1e9),
            max_relative = 1e-12
        );
        assert!((eps - 9.99e-7).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn features_lie_in_unit_interval(seed in 0u64..1000, t in -5.0f64..5.0) {
            let b = sample_basis(8, 3.0, -1.0, 2.0, seed).unwrap();
            let v = eval_features(&b, t);
            prop_assert!(v.iter().all(|&x| x > 0.0 && x <= 1.0));
        }

        #[test]
        fn derivative_matches_finite_difference(seed in 0u64..200, t in -2.0f64..3.0) {
            let b = sample_basis(6, 2.5, 0.0, 1.0, seed).unwrap();
            let step = 1e-6;
            let fp = eval_features(&b, t + step);
            let fm = eval_features(&b, t - step);
            let d = eval_feature_derivs(&b, t);
            for j in 0..6 {
                let fd = (fp[j] - fm[j]) / (2.0 * step);
                let scale = d[j].abs().max(1e-3);
                prop_assert!((fd - d[j]).abs() <= 1e-6 * scale, "j={} fd={} d={}", j, fd, d[j]);
            }
        }

        #[test]
        fn psi_is_affine_in_lambda(seed in 0u64..200) {
            // assemble_psi(lam) - assemble_psi(0) = -lam * h * diag-scaled phi matrix
            let b = sample_basis(5, 1.7, 0.1, 0.9, seed).unwrap();
            let g = CollocationGrid::equidistant(4).unwrap();
            let lam = Complex64::new(-3.0, 1.5);
            let p1 = assemble_psi(&b, &g, lam);
            let p0 = assemble_psi(&b, &g, Complex64::new(0.0, 0.0));
            for (i, &zeta) in g.fractions.iter().enumerate() {
                let s = zeta * b.window_len;
                let t = b.window_start + s;
                let phi = eval_features(&b, t);
                for j in 0..5 {
                    let want = -lam * Complex64::new(s * phi[j], 0.0);
                    let got = p1[(j, i)] - p0[(j, i)];
                    prop_assert!((got - want).norm() <= 1e-13 * (1.0 + want.norm()));
                }
            }
        }

        #[test]
        fn default_scale_keeps_eps_small(zh in 0.0f64..1e6, n in 1usize..200) {
            // eps = a_U h^2 <= min(1, |lambda|h / N) for every |lambda|h and N.
            let h = 1.0;
            let a = default_alpha_u(zh, h, n).unwrap();
            let eps = a * h * h;
            prop_assert!(eps <= 1.0 + 1e-15);
            prop_assert!(eps <= zh / n as f64 + 1e-15);
        }
    }
}
