//! Linear stability analysis machinery.
//!
//! [`stability_index`] evaluates the random per-window multipliers `S_i` for
//! the scalar test equation at a complex `z = lambda h` (with `h` normalized
//! to 1); [`scan_region`] sweeps a non-uniform complex-plane mesh and records
//! the worst `|S_M|` over Monte-Carlo redraws of the feature shapes;
//! [`closed_form_stability_index`] is the deterministic limit of `S_i` as the
//! feature-scale parameter and the ridge weight go to zero; and
//! [`consistency_probe`] measures the local-error factor `A(h)` against its
//! closed-form limit `delta / (M N + delta)`.

use std::io::Write;

use crate::basis::{feature_matrices, psi_from_features, sample_basis, CollocationGrid};
use crate::error::{Error, Result};
use crate::par::{indexed_map, indexed_map_seq};
use crate::rng::derive_seed;
use crate::stepper::{build_scalar_step, collocation_weights, AlphaUPolicy, StepConfig};
use crate::Complex64;

/// Complex-plane scan configuration. Defaults mirror the reference setup:
/// Re in [-100, 16], Im in [-16, 16], about 100 points per axis with
/// geometric densification (ratio 0.7, 12 levels) near zero and near the
/// real-axis stability boundary, 200 Monte-Carlo runs per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub re_range: (f64, f64),
    pub im_range: (f64, f64),
    /// Approximate number of mesh points per axis, refinements included.
    pub points_per_axis: usize,
    pub refine_ratio: f64,
    pub refine_levels: usize,
    pub mc_runs: usize,
    pub m_colloc: usize,
    pub n_features: usize,
    pub delta: f64,
    pub alpha_u: AlphaUPolicy,
}

impl ScanConfig {
    pub fn new(m_colloc: usize) -> ScanConfig {
        ScanConfig {
            re_range: (-100.0, 16.0),
            im_range: (-16.0, 16.0),
            points_per_axis: 100,
            refine_ratio: 0.7,
            refine_levels: 12,
            mc_runs: 200,
            m_colloc,
            n_features: 3 * m_colloc,
            delta: 1e-8,
            alpha_u: AlphaUPolicy::DefaultFormula,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.re_range.0 >= self.re_range.1 || self.im_range.0 >= self.im_range.1 {
            return Err(Error::InvalidArgument("scan ranges must be ordered".into()));
        }
        if self.mc_runs == 0
            || self.points_per_axis < 2
            || self.m_colloc == 0
            || self.n_features == 0
        {
            return Err(Error::InvalidArgument(
                "scan needs runs >= 1, points >= 2, m, n >= 1".into(),
            ));
        }
        if !(0.0 < self.refine_ratio && self.refine_ratio < 1.0) {
            return Err(Error::InvalidArgument(
                "refine_ratio must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    fn step_config(&self) -> StepConfig {
        StepConfig {
            m_colloc: self.m_colloc,
            n_features: self.n_features,
            delta: self.delta,
            h: 1.0,
            alpha_u: self.alpha_u,
            seed: 0, // per-cell seeds are derived explicitly
            freeze_basis: true,
        }
    }
}

/// One evaluated mesh point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanCell {
    pub re: f64,
    pub im: f64,
    /// Worst `|S_M|` over the Monte-Carlo runs; infinite when flagged.
    pub max_abs_s: f64,
    /// 0 = ok, 1 = at least one solve failed at this cell.
    pub flag: u8,
}

/// Seed bookkeeping for reproducing a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunsMeta {
    pub base_seed: u64,
    pub mc_runs: usize,
}

/// Scan output: row-major over (im, re) with the two axes attached.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityScan {
    pub re_axis: Vec<f64>,
    pub im_axis: Vec<f64>,
    pub cells: Vec<ScanCell>,
    pub runs_meta: RunsMeta,
}

impl StabilityScan {
    pub fn cell(&self, i_re: usize, i_im: usize) -> &ScanCell {
        &self.cells[i_im * self.re_axis.len() + i_re]
    }
}

/// Per-fraction stability indices `S_1..S_M` at `z = lambda h` with `h = 1`,
/// for one draw of the feature shapes.
pub fn stability_index(z: Complex64, cfg: &StepConfig, seed: u64) -> Result<Vec<Complex64>> {
    let mut cfg1 = cfg.clone();
    cfg1.h = 1.0;
    cfg1.seed = seed;
    let basis = sample_basis(cfg1.n_features, 0.0, 0.0, 1.0, seed)?;
    let op = build_scalar_step(z, &cfg1, &basis)?;
    Ok(op.multipliers)
}

/// Closed-form limit of the stability index as the feature scale and the
/// ridge weight vanish:
///
/// `S = 1 - zeta * [ (1 + 1/M)/2 - 1/z ] / [ (1 + (3/2)/M + 1/(2 M^2))/3 - (1 + 1/M)/z + 1/z^2 ]`.
///
/// `z = 0` is a pole of the parametrization (the limit value there is 1) and
/// is rejected.
pub fn closed_form_stability_index(z_real: f64, zeta: f64, m: usize) -> Result<f64> {
    if z_real == 0.0 {
        return Err(Error::InvalidArgument(
            "z = 0 has no closed-form index; the limit is 1".into(),
        ));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "zeta must lie in (0, 1], got {zeta}"
        )));
    }
    let minv = 1.0 / m as f64;
    let s = 1.0 / z_real;
    let num = 0.5 * (1.0 + minv) - s;
    let den = (1.0 + 1.5 * minv + 0.5 * minv * minv) / 3.0 - s * (1.0 + minv) + s * s;
    Ok(1.0 - zeta * num / den)
}

/// Non-uniform axis: a coarse uniform grid plus two-sided geometric
/// refinements (ratio/levels from the config) around each anchor, clipped to
/// the range. Roughly `target` points total.
fn axis_mesh(
    lo: f64,
    hi: f64,
    target: usize,
    ratio: f64,
    levels: usize,
    anchors: &[f64],
) -> Vec<f64> {
    let base = (hi - lo) / (target.max(2) as f64 - 1.0);
    let mut refine_count = 0usize;
    for &a in anchors {
        if a - base * 1e-9 > lo {
            refine_count += levels; // room on the left side
        }
        if a + base * 1e-9 < hi {
            refine_count += levels; // room on the right side
        }
    }
    let coarse_n = (target.saturating_sub(refine_count)).max(4);
    let coarse_step = (hi - lo) / (coarse_n - 1) as f64;

    let mut pts: Vec<f64> = (0..coarse_n).map(|k| lo + k as f64 * coarse_step).collect();
    for &a in anchors {
        for k in 0..levels {
            let off = coarse_step * ratio.powi(k as i32 + 1);
            for cand in [a - off, a + off] {
                if cand > lo && cand < hi {
                    pts.push(cand);
                }
            }
        }
        if a > lo && a < hi {
            pts.push(a);
        }
    }
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() <= coarse_step * 1e-12);
    pts
}

/// Real-axis crossing of the closed-form index through `S = 1` (the edge of
/// the positive-real instability pocket); used to anchor mesh refinement.
fn real_axis_crossing(m: usize) -> f64 {
    2.0 * m as f64 / (m as f64 + 1.0)
}

fn scan_cells(cfg: &ScanConfig, base_seed: u64, sequential: bool) -> Result<StabilityScan> {
    cfg.validate()?;
    let step_cfg = cfg.step_config();
    let crossing = real_axis_crossing(cfg.m_colloc);
    let mut re_anchors = vec![0.0];
    if crossing > cfg.re_range.0 && crossing < cfg.re_range.1 {
        re_anchors.push(crossing);
    }
    let re_axis = axis_mesh(
        cfg.re_range.0,
        cfg.re_range.1,
        cfg.points_per_axis,
        cfg.refine_ratio,
        cfg.refine_levels,
        &re_anchors,
    );
    let im_axis = axis_mesh(
        cfg.im_range.0,
        cfg.im_range.1,
        cfg.points_per_axis,
        cfg.refine_ratio,
        cfg.refine_levels,
        &[0.0],
    );

    let n_cells = re_axis.len() * im_axis.len();
    let eval_cell = |idx: usize| -> ScanCell {
        let i_re = idx % re_axis.len();
        let i_im = idx / re_axis.len();
        let z = Complex64::new(re_axis[i_re], im_axis[i_im]);
        let mut worst = 0.0f64;
        let mut flag = 0u8;
        for run in 0..cfg.mc_runs {
            let seed = derive_seed(base_seed, idx as u64, run as u64);
            match stability_index(z, &step_cfg, seed) {
                Ok(s) => {
                    let v = s.last().map(|c| c.norm()).unwrap_or(f64::INFINITY);
                    if v.is_finite() {
                        worst = worst.max(v);
                    } else {
                        worst = f64::INFINITY;
                        flag = 1;
                    }
                }
                Err(_) => {
                    worst = f64::INFINITY;
                    flag = 1;
                }
            }
        }
        ScanCell {
            re: re_axis[i_re],
            im: im_axis[i_im],
            max_abs_s: worst,
            flag,
        }
    };

    let cells = if sequential {
        indexed_map_seq(n_cells, eval_cell)
    } else {
        indexed_map(n_cells, eval_cell)
    };
    Ok(StabilityScan {
        re_axis,
        im_axis,
        cells,
        runs_meta: RunsMeta {
            base_seed,
            mc_runs: cfg.mc_runs,
        },
    })
}

/// Monte-Carlo stability-region scan; parallel over cells when the `parallel`
/// feature is enabled. Per-cell seeds derive deterministically from
/// `base_seed` and the cell index, so the output is identical however the
/// work is scheduled.
pub fn scan_region(cfg: &ScanConfig, base_seed: u64) -> Result<StabilityScan> {
    scan_cells(cfg, base_seed, false)
}

/// Sequential twin of [`scan_region`]; bit-identical output.
pub fn scan_region_seq(cfg: &ScanConfig, base_seed: u64) -> Result<StabilityScan> {
    scan_cells(cfg, base_seed, true)
}

/// Write a scan as CSV: `re,im,max_abs_s,flag`, full float precision.
pub fn write_scan_csv<W: Write>(scan: &StabilityScan, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "re,im,max_abs_s,flag")?;
    for c in &scan.cells {
        writeln!(out, "{},{},{},{}", c.re, c.im, c.max_abs_s, c.flag)?;
    }
    Ok(())
}

/// One row of the consistency table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyRow {
    pub h: f64,
    pub local_error: f64,
    pub local_error_over_h: f64,
    /// Measured `A(h) = 1 - Phi_M^T (Psi Psi^T + delta I)^{-1} Psi 1`.
    pub a_measured: f64,
    /// Limit `A_0 = delta / (M N + delta)`.
    pub a_limit: f64,
}

/// Local-error probe for the scalar test equation on a unit initial state:
/// at each `h` the window-end error `|e^{lambda h} - S_M(h)|` and the
/// measured factor `A(h)`, which tends to `delta / (M N + delta)` as
/// `h -> 0`.
pub fn consistency_probe(
    lambda: f64,
    cfg: &StepConfig,
    h_values: &[f64],
) -> Result<Vec<ConsistencyRow>> {
    cfg.validate()?;
    let a_limit = cfg.delta / ((cfg.m_colloc * cfg.n_features) as f64 + cfg.delta);
    let grid = CollocationGrid::equidistant(cfg.m_colloc)?;
    let mut rows = Vec::with_capacity(h_values.len());
    for &h in h_values {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "h values must be > 0, got {h}"
            )));
        }
        let alpha = cfg.alpha_u.value(lambda.abs(), h, cfg.n_features)?;
        let basis = sample_basis(cfg.n_features, alpha, 0.0, h, cfg.seed)?;
        let (phi, dphi) = feature_matrices(&basis, &grid);
        let psi = psi_from_features(&phi, &dphi, &grid.fractions, h, Complex64::new(lambda, 0.0));
        let w = collocation_weights(psi, cfg.delta)?;
        let m = grid.n_points;
        let mut dot = Complex64::new(0.0, 0.0);
        for j in 0..cfg.n_features {
            dot += Complex64::new(phi[(j, m - 1)], 0.0) * w[j];
        }
        let a_measured = 1.0 - dot.re;
        let s_end = 1.0 + lambda * h * dot.re;
        let local_error = ((lambda * h).exp() - s_end).abs();
        rows.push(ConsistencyRow {
            h,
            local_error,
            local_error_over_h: local_error / h,
            a_measured,
            a_limit,
        });
    }
    Ok(rows)
}
