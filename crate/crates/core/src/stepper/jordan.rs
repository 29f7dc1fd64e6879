//! Single-collocation step for one Jordan block.
//!
//! For `y' = J_m y` with eigenvalue `lambda` on the diagonal and ones above
//! it, each component gets its own feature expansion and the residuals at the
//! single collocation point `t = window end` are driven to zero by a backward
//! recursion: with `q = Phi(h)`, `k = Phi(h) + h Phi'(h) - lambda h Phi(h)`
//! and `Lambda = h <k, q> / ||k||^2`, the window map is the upper-triangular
//! matrix with diagonal `1 + lambda Lambda` and entry `(l, c)` equal to
//! `Lambda^{c-l} (1 + lambda Lambda)`. One shared basis serves every
//! component.

use nalgebra::{DMatrix, DVector};

use crate::basis::{eval_feature_derivs, eval_features, sample_basis};
use crate::error::{Error, Result};

use super::StepConfig;

/// Advance one Jordan block of size `m` by a single window of length `cfg.h`.
/// Returns the next state and the upper-triangular transition matrix.
pub fn jordan_block_step(
    lambda: f64,
    m: usize,
    cfg: &StepConfig,
    y_prev: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::InvalidArgument("block size m must be >= 1".into()));
    }
    if y_prev.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "block size {m} but state has {} entries",
            y_prev.len()
        )));
    }
    let h = cfg.h;
    let alpha = cfg.alpha_u.value(lambda.abs(), h, cfg.n_features)?;
    let basis = sample_basis(cfg.n_features, alpha, 0.0, h, cfg.seed)?;

    let q = eval_features(&basis, h);
    let dq = eval_feature_derivs(&basis, h);
    // k_j = phi_j(h) + h phi_j'(h) - lambda h phi_j(h): the single-point
    // collocation column.
    let k = &q + &dq * h - &q * (lambda * h);
    let k_norm_sq = k.dot(&k);
    if !(k_norm_sq > 0.0) {
        return Err(Error::DegenerateFeatures(format!(
            "collocation feature vector vanished (lambda={lambda}, h={h})"
        )));
    }
    let big_lambda = h * k.dot(&q) / k_norm_sq;

    let diag = 1.0 + lambda * big_lambda;
    let mut transition = DMatrix::<f64>::zeros(m, m);
    for l in 0..m {
        transition[(l, l)] = diag;
        let mut chain = 1.0;
        for c in (l + 1)..m {
            chain *= big_lambda;
            transition[(l, c)] = chain * diag;
        }
    }
    let y_next = &transition * y_prev;
    Ok((y_next, transition))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{assemble_psi, CollocationGrid};
    use crate::stepper::collocation_weights;
    use crate::Complex64;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn cfg(n_features: usize, h: f64, seed: u64) -> StepConfig {
        let mut c = StepConfig::new(1, h);
        c.n_features = n_features;
        c.seed = seed;
        c
    }

    #[test]
    fn size_one_block_equals_single_collocation_scalar_scheme() {
        let lambda = -1.7;
        let c = cfg(9, 0.4, 21);
        let y = DVector::from_column_slice(&[1.0]);
        let (y_next, t) = jordan_block_step(lambda, 1, &c, &y).unwrap();
        assert_eq!(t.nrows(), 1);
        assert_abs_diff_eq!(y_next[0], t[(0, 0)], epsilon = 1e-15);

        // Cross-check against the generic collocation solve with M = 1 and
        // the exact pseudoinverse (delta = 0).
        let alpha = c.alpha_u.value(lambda.abs(), c.h, c.n_features).unwrap();
        let basis = sample_basis(c.n_features, alpha, 0.0, c.h, c.seed).unwrap();
        let grid = CollocationGrid::equidistant(1).unwrap();
        let psi = assemble_psi(&basis, &grid, Complex64::new(lambda, 0.0));
        let w = collocation_weights(psi, 0.0).unwrap();
        let phi = eval_features(&basis, c.h);
        let mut dot = 0.0;
        for j in 0..c.n_features {
            dot += phi[j] * w[j].re;
        }
        let s = 1.0 + lambda * c.h * dot;
        assert_relative_eq!(t[(0, 0)], s, max_relative = 1e-12);
    }

    #[test]
    fn transition_tends_to_identity_as_h_shrinks() {
        let y = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        for &h in &[1e-3, 1e-5] {
            let (_, t) = jordan_block_step(-2.0, 3, &cfg(9, h, 3), &y).unwrap();
            let dev = (&t - DMatrix::<f64>::identity(3, 3)).norm();
            assert!(dev <= 20.0 * h, "h={h}: {dev}");
        }
    }

    #[test]
    fn transition_matches_backward_recursion_oracle() {
        // Rebuild y_next from the proof-side objects: solve the residual
        // equations by the backward recursion r_m = alpha_m,
        // r_l = Lambda r_{l+1} + alpha_l, w_l = (r_l/||k||^2) k, then evaluate
        // the per-component expansions at the window end.
        let lambda = -0.9;
        let m = 4;
        let c = cfg(12, 0.3, 77);
        let y0 = DVector::from_column_slice(&[0.3, -1.1, 2.0, 0.7]);
        let (y_next, t) = jordan_block_step(lambda, m, &c, &y0).unwrap();

        let alpha_u = c.alpha_u.value(lambda.abs(), c.h, c.n_features).unwrap();
        let basis = sample_basis(c.n_features, alpha_u, 0.0, c.h, c.seed).unwrap();
        let q = eval_features(&basis, c.h);
        let dq = eval_feature_derivs(&basis, c.h);
        let k = &q + &dq * c.h - &q * (lambda * c.h);
        let kn2 = k.dot(&k);
        let lam_cap = c.h * k.dot(&q) / kn2;

        // alpha_l = lambda y_l + y_{l+1} (alpha_m = lambda y_m).
        let mut alpha = vec![0.0; m];
        for l in 0..m {
            alpha[l] = lambda * y0[l] + if l + 1 < m { y0[l + 1] } else { 0.0 };
        }
        let mut r = vec![0.0; m];
        r[m - 1] = alpha[m - 1];
        for l in (0..m - 1).rev() {
            r[l] = lam_cap * r[l + 1] + alpha[l];
        }
        // y_next_l = y_l + h <w_l, q> = y_l + Lambda r_l.
        for l in 0..m {
            let w_l = &k * (r[l] / kn2);
            let got = y0[l] + c.h * w_l.dot(&q);
            assert_relative_eq!(y_next[l], got, max_relative = 1e-12);
        }
        // Exact upper-triangularity.
        for i in 0..m {
            for j in 0..i {
                assert_eq!(t[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn iterated_blocks_decay_for_negative_rates() {
        for &h in &[0.1, 0.5, 2.0] {
            let mut y = DVector::from_column_slice(&[1.0, 1.0, 1.0]);
            let y0_norm = y.norm();
            for step in 0..200u64 {
                let c = cfg(9, h, crate::rng::derive_seed(5, step, 0));
                let (next, t) = jordan_block_step(-2.0, 3, &c, &y).unwrap();
                assert!(
                    (t[(0, 0)]).abs() < 1.0,
                    "h={h} step={step}: diag {}",
                    t[(0, 0)]
                );
                y = next;
            }
            assert!(y.norm() < 1e-6 * y0_norm, "h={h}: {}", y.norm());
        }
    }

    #[test]
    fn degenerate_state_dimension_is_rejected() {
        let y = DVector::from_column_slice(&[1.0, 2.0]);
        assert!(jordan_block_step(-1.0, 3, &cfg(6, 0.1, 1), &y).is_err());
    }
}
