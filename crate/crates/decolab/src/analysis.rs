//! Observables: basis transforms, moments, purity, coherence-decay fits, and
//! Gaussian pointer-state fits.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::model::{Axis, DensityMatrix, Grid};

// ---- basis transforms ----------------------------------------------------------

/// Double Fourier transform to the momentum representation:
/// rho~(p, p') = (1/2 pi hbar) iint rho(x, x') e^{-i p x/hbar} e^{+i p' x'/hbar} dx dx'.
/// The momentum grid is the dual of the position grid; the trace is preserved
/// up to quadrature error.
pub fn to_momentum(rho: &DensityMatrix, hbar: f64) -> Result<DensityMatrix> {
    if rho.basis != Axis::Position {
        return Err(Error::BasisMismatch { expected: "position" });
    }
    let grid = rho.grid;
    let dual = grid.dual(hbar);
    let n = grid.n;
    let dx = grid.spacing();
    let mut work = rho.values.clone();

    // checkerboard sign implements the frequency shift to the centered grid
    for i in 0..n {
        for j in 0..n {
            if (i + j) % 2 == 1 {
                work[(i, j)] = -work[(i, j)];
            }
        }
    }
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    // rows: x' -> p' with e^{+i p' x'} (inverse transform)
    for mut row in work.rows_mut() {
        inverse.process(row.as_slice_mut().expect("contiguous row"));
    }
    // columns: x -> p with e^{-i p x} (forward transform)
    let mut col = vec![C64::default(); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = work[(i, j)];
        }
        forward.process(&mut col);
        for i in 0..n {
            work[(i, j)] = col[i];
        }
    }
    // phase corrections for x_min != 0 and the absolute normalization
    let scale = dx * dx / (TAU * hbar);
    let ps = dual.points();
    for i in 0..n {
        let phase_i = C64::from_polar(1.0, -ps[i] * grid.min / hbar);
        for j in 0..n {
            let phase_j = C64::from_polar(1.0, ps[j] * grid.min / hbar);
            work[(i, j)] *= phase_i * phase_j * scale;
        }
    }
    Ok(DensityMatrix {
        basis: Axis::Momentum,
        sector: rho.sector,
        grid: dual,
        values: work,
        weight: rho.weight,
    })
}

/// Inverse of [`to_momentum`], back onto the supplied position grid.
pub fn to_position(rho: &DensityMatrix, position_grid: &Grid, hbar: f64) -> Result<DensityMatrix> {
    if rho.basis != Axis::Momentum {
        return Err(Error::BasisMismatch { expected: "momentum" });
    }
    let grid = rho.grid;
    let n = grid.n;
    if position_grid.n != n {
        return Err(Error::ConfigSemantics("grid sizes differ in to_position".into()));
    }
    let dp = grid.spacing();
    let ps = grid.points();
    let mut work = rho.values.clone();
    // undo the output phases first (conjugate order of to_momentum)
    for i in 0..n {
        let phase_i = C64::from_polar(1.0, ps[i] * position_grid.min / hbar);
        for j in 0..n {
            let phase_j = C64::from_polar(1.0, -ps[j] * position_grid.min / hbar);
            work[(i, j)] *= phase_i * phase_j;
        }
    }
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    for mut row in work.rows_mut() {
        forward.process(row.as_slice_mut().expect("contiguous row"));
    }
    let mut col = vec![C64::default(); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = work[(i, j)];
        }
        inverse.process(&mut col);
        for i in 0..n {
            work[(i, j)] = col[i];
        }
    }
    let scale = dp * dp / (TAU * hbar);
    for i in 0..n {
        for j in 0..n {
            let sign = if (i + j) % 2 == 1 { -1.0 } else { 1.0 };
            work[(i, j)] *= sign * scale;
        }
    }
    Ok(DensityMatrix {
        basis: Axis::Position,
        sector: rho.sector,
        grid: *position_grid,
        values: work,
        weight: rho.weight,
    })
}

// ---- scalar observables --------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Moments {
    pub trace: f64,
    pub mean: f64,
    pub variance: f64,
}

/// First and second Riemann moments of the diagonal.
pub fn moments(rho: &DensityMatrix) -> Result<Moments> {
    let dx = rho.grid.spacing();
    let xs = rho.grid.points();
    let mut trace = 0.0;
    let mut mean = 0.0;
    let mut second = 0.0;
    for (i, v) in rho.values.diag().iter().enumerate() {
        trace += v.re * dx;
        mean += xs[i] * v.re * dx;
        second += xs[i] * xs[i] * v.re * dx;
    }
    if trace.abs() < 1e-8 {
        return Err(Error::TraceTooSmall(trace));
    }
    let mean = mean / trace;
    Ok(Moments { trace, mean, variance: second / trace - mean * mean })
}

/// Purity of the unit-Riemann-trace sector state, Tr(rho^2) with the
/// quadrature measure. Basis-invariant up to transform error.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let dx = rho.grid.spacing();
    let mut sum = 0.0;
    let n = rho.grid.n;
    for i in 0..n {
        for j in 0..n {
            sum += (rho.values[(i, j)] * rho.values[(j, i)]).re;
        }
    }
    sum * dx * dx
}

// ---- coherence series ------------------------------------------------------------

/// |rho| at one fixed off-diagonal separation, maximized over the mean
/// coordinate, tracked over time and normalized by the t = 0 value.
#[derive(Debug, Clone, Serialize)]
pub struct CoherenceSeries {
    /// Separation actually probed (snapped to the grid).
    pub separation: f64,
    pub basis: Axis,
    pub times: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

/// Extract the coherence series from trajectory snapshots. The first
/// snapshot must be at t = 0; the separation is snapped to the nearest whole
/// number of grid cells.
pub fn coherence_series(
    snapshots: &[(f64, DensityMatrix)],
    separation: f64,
    basis: Axis,
) -> Result<CoherenceSeries> {
    if snapshots.len() < 4 {
        return Err(Error::FitFailed(format!(
            "need at least 4 snapshots, got {}",
            snapshots.len()
        )));
    }
    let grid = snapshots[0].1.grid;
    if snapshots[0].1.basis != basis {
        return Err(Error::BasisMismatch {
            expected: if basis == Axis::Position { "position" } else { "momentum" },
        });
    }
    let d = grid.spacing();
    let offset = (separation / d).round() as isize;
    if offset < 0 || offset as usize >= grid.n {
        return Err(Error::ConfigSemantics(format!(
            "separation {separation} outside the grid (max {})",
            (grid.n - 1) as f64 * d
        )));
    }
    let offset = offset as usize;
    let max_at = |rho: &DensityMatrix| -> f64 {
        let mut best = 0.0_f64;
        for i in offset..grid.n {
            best = best.max(rho.values[(i, i - offset)].norm());
        }
        best
    };
    let first = max_at(&snapshots[0].1);
    if first <= 0.0 {
        return Err(Error::FitFailed("zero coherence at t = 0".into()));
    }
    let mut times = Vec::with_capacity(snapshots.len());
    let mut magnitudes = Vec::with_capacity(snapshots.len());
    let mut prev = f64::NEG_INFINITY;
    for (t, rho) in snapshots {
        if *t <= prev {
            return Err(Error::ConfigSemantics("snapshot times must increase".into()));
        }
        prev = *t;
        times.push(*t);
        magnitudes.push(max_at(rho) / first);
    }
    Ok(CoherenceSeries { separation: offset as f64 * d, basis, times, magnitudes })
}

// ---- decay fits -------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// ln S = c - rate * t
    ExpT,
    /// ln S = c - rate * t^3
    ExpT3,
    /// ln(-ln S) = ln rate + exponent * ln t
    PowerLaw,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FitReport {
    pub model: FitModel,
    pub rate: f64,
    pub exponent: f64,
    /// RMS misfit in the fit's log space.
    pub residual: f64,
    pub window: (f64, f64),
    pub points_used: usize,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let den = n * sxx - sx * sx;
    if den.abs() < 1e-300 {
        return Err(Error::FitFailed("degenerate abscissa in linear fit".into()));
    }
    let slope = (n * sxy - sx * sy) / den;
    let intercept = (sy - slope * sx) / n;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((slope, intercept, rms))
}

/// Fit a decay law to a coherence series.
///
/// The window runs from the first snapshot after t = 0 to the first snapshot
/// below 1e-3 of the initial value (the late tail is grid noise); a series
/// whose maximum log-drop is below 0.5 is refused. The free-exponent model
/// additionally drops points with S > 0.95, where log(-log S) blows up.
pub fn fit_decay(series: &CoherenceSeries, model: FitModel) -> Result<FitReport> {
    let mut ts = Vec::new();
    let mut lns = Vec::new();
    for (t, s) in series.times.iter().zip(&series.magnitudes).skip(1) {
        if *s <= 0.0 {
            break;
        }
        ts.push(*t);
        lns.push(s.ln());
        if *s < 1e-3 {
            break;
        }
    }
    let max_drop = -lns.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_drop < 0.5 {
        return Err(Error::InsufficientDecay { max_drop });
    }
    if ts.len() < 6 {
        return Err(Error::FitFailed(format!(
            "window has {} points, need at least 6",
            ts.len()
        )));
    }
    let window = (ts[0], *ts.last().unwrap());
    match model {
        FitModel::ExpT => {
            let (slope, _, rms) = linear_fit(&ts, &lns)?;
            Ok(FitReport {
                model,
                rate: -slope,
                exponent: 1.0,
                residual: rms,
                window,
                points_used: ts.len(),
            })
        }
        FitModel::ExpT3 => {
            let cubes: Vec<f64> = ts.iter().map(|t| t * t * t).collect();
            let (slope, _, rms) = linear_fit(&cubes, &lns)?;
            Ok(FitReport {
                model,
                rate: -slope,
                exponent: 3.0,
                residual: rms,
                window,
                points_used: ts.len(),
            })
        }
        FitModel::PowerLaw => {
            let mut lx = Vec::new();
            let mut ly = Vec::new();
            for (t, ln_s) in ts.iter().zip(&lns) {
                if *ln_s < 0.95_f64.ln() && *t > 0.0 {
                    lx.push(t.ln());
                    ly.push((-ln_s).ln());
                }
            }
            if lx.len() < 6 {
                return Err(Error::FitFailed(format!(
                    "free-exponent fit has {} usable points, need at least 6",
                    lx.len()
                )));
            }
            let (slope, intercept, rms) = linear_fit(&lx, &ly)?;
            Ok(FitReport {
                model,
                rate: intercept.exp(),
                exponent: slope,
                residual: rms,
                window: (lx[0].exp(), lx.last().unwrap().exp()),
                points_used: lx.len(),
            })
        }
    }
}

// ---- pointer-state fit -------------------------------------------------------------

/// Least-squares fit of ln rho(R, r) to a complex Gaussian packet:
/// quadratic magnitude in (R, r), phase linear in r and R with an r R chirp.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PointerFit {
    pub center_x: f64,
    pub center_p: f64,
    pub width_x: f64,
    pub width_p: f64,
    /// r R phase-chirp coefficient.
    pub phase_slope: f64,
    /// RMS complex-log misfit / RMS peak-relative log magnitude over the
    /// region |rho| >= 1e-4 max.
    pub relative_residual: f64,
}

/// Solve a small dense least-squares problem via normal equations.
fn solve_normal(design: &[Vec<f64>], target: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, y) in design.iter().zip(target) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
            a[i][k] += row[i] * y;
        }
    }
    // Gaussian elimination with partial pivoting
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-12 * (1.0 + a[col][col].abs()) {
            return Err(Error::FitFailed("singular normal matrix in pointer fit".into()));
        }
        a.swap(col, pivot);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for j in col..=k {
                a[row][j] -= f * a[col][j];
            }
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let mut acc = a[row][k];
        for j in row + 1..k {
            acc -= a[row][j] * x[j];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

fn wrap_phase(mut p: f64) -> f64 {
    while p > PI {
        p -= TAU;
    }
    while p <= -PI {
        p += TAU;
    }
    p
}

/// Fit a drifting Gaussian packet to a position-basis density matrix.
pub fn pointer_fit(rho: &DensityMatrix, hbar: f64) -> Result<PointerFit> {
    if rho.basis != Axis::Position {
        return Err(Error::BasisMismatch { expected: "position" });
    }
    if !rho.sector.is_diagonal() {
        return Err(Error::SectorMismatch("pointer fit needs a diagonal sector".into()));
    }
    let n = rho.grid.n;
    let xs = rho.grid.points();
    let peak = rho.max_abs();
    if peak <= 0.0 {
        return Err(Error::FitFailed("empty state".into()));
    }
    let cutoff = 1e-4 * peak;
    let in_region = |i: usize, j: usize| rho.values[(i, j)].norm() >= cutoff;

    // magnitude: ln|rho/peak| = q0 + q1 R + q2 r + q3 R^2 + q4 r^2 + q5 R r
    let mut design = Vec::new();
    let mut target = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if !in_region(i, j) {
                continue;
            }
            let (mean, rel) = crate::model::position_to_mean_rel(xs[i], xs[j]);
            design.push(vec![1.0, mean, rel, mean * mean, rel * rel, mean * rel]);
            target.push((rho.values[(i, j)].norm() / peak).ln());
        }
    }
    if design.len() < 12 {
        return Err(Error::FitFailed("pointer-fit region too small".into()));
    }
    let q = solve_normal(&design, &target, 6)?;
    if q[3] >= 0.0 || q[4] >= 0.0 {
        return Err(Error::FitFailed("pointer fit is not a localized Gaussian".into()));
    }
    let center_x = -q[1] / (2.0 * q[3]);
    let width_x = (-1.0 / (2.0 * q[3])).sqrt();
    let width_p = hbar * (-2.0 * q[4]).sqrt();

    // phase gradients: phi = u0 + u1 r + u2 R + u3 r R, fitted from wrapped
    // nearest-neighbor phase differences (free of branch cuts)
    let dx = rho.grid.spacing();
    let mut pdesign = Vec::new();
    let mut ptarget = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if !in_region(i, j) {
                continue;
            }
            let phi0 = rho.values[(i, j)].arg();
            if i + 1 < n && in_region(i + 1, j) {
                let dphi = wrap_phase(rho.values[(i + 1, j)].arg() - phi0);
                let (mean, rel) =
                    crate::model::position_to_mean_rel(xs[i] + 0.5 * dx, xs[j]);
                // d phi/dx = u1 + u2/2 + u3 (R + r/2)
                pdesign.push(vec![1.0, 0.5, mean + 0.5 * rel]);
                ptarget.push(dphi / dx);
            }
            if j + 1 < n && in_region(i, j + 1) {
                let dphi = wrap_phase(rho.values[(i, j + 1)].arg() - phi0);
                let (mean, rel) =
                    crate::model::position_to_mean_rel(xs[i], xs[j] + 0.5 * dx);
                // d phi/dx' = -u1 + u2/2 + u3 (-R + r/2)
                pdesign.push(vec![-1.0, 0.5, -mean + 0.5 * rel]);
                ptarget.push(dphi / dx);
            }
        }
    }
    let u = solve_normal(&pdesign, &ptarget, 3)?;
    let center_p = hbar * (u[0] + u[2] * center_x);
    let phase_slope = u[2];

    // residual: complex-log misfit over the region, phases anchored at the peak
    let (pi_peak, pj_peak) = {
        let mut best = (0usize, 0usize);
        let mut best_v = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = rho.values[(i, j)].norm();
                if v > best_v {
                    best_v = v;
                    best = (i, j);
                }
            }
        }
        best
    };
    let (mean_pk, rel_pk) = crate::model::position_to_mean_rel(xs[pi_peak], xs[pj_peak]);
    let phi_model_peak = u[0] * rel_pk + u[1] * mean_pk + u[2] * rel_pk * mean_pk;
    let u0 = wrap_phase(rho.values[(pi_peak, pj_peak)].arg() - phi_model_peak);
    let mut misfit_sq = 0.0;
    let mut mag_sq = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if !in_region(i, j) {
                continue;
            }
            let (mean, rel) = crate::model::position_to_mean_rel(xs[i], xs[j]);
            let ln_mag_model = q[0]
                + q[1] * mean
                + q[2] * rel
                + q[3] * mean * mean
                + q[4] * rel * rel
                + q[5] * mean * rel;
            let ln_mag = (rho.values[(i, j)].norm() / peak).ln();
            let phi_model = u0 + u[0] * rel + u[1] * mean + u[2] * rel * mean;
            let dphi = wrap_phase(rho.values[(i, j)].arg() - phi_model);
            misfit_sq += (ln_mag - ln_mag_model).powi(2) + dphi * dphi;
            mag_sq += ln_mag * ln_mag;
            count += 1;
        }
    }
    let relative_residual = if mag_sq > 0.0 {
        (misfit_sq / count as f64).sqrt() / (mag_sq / count as f64).sqrt()
    } else {
        (misfit_sq / count as f64).sqrt()
    };
    Ok(PointerFit { center_x, center_p, width_x, width_p, phase_slope, relative_residual })
}

/// Integrated magnitude of the spatial diagonal, int |rho(x, x)| dx. For the
/// spin-cross block this tracks the surviving spin coherence.
pub fn diagonal_abs_norm(rho: &DensityMatrix) -> f64 {
    let dx = rho.grid.spacing();
    rho.values.diag().iter().map(|v| v.norm()).sum::<f64>() * dx
}

/// First crossing of value = e^{-1} * value(0), interpolated linearly in
/// (t, ln value). None if the series never decays that far.
pub fn efold_crossing(times: &[f64], values: &[f64]) -> Option<f64> {
    let v0 = *values.first()?;
    if v0 <= 0.0 {
        return None;
    }
    let mut prev_t = times[0];
    let mut prev_ln = 0.0;
    for (t, v) in times.iter().zip(values).skip(1) {
        if *v <= 0.0 {
            return None;
        }
        let ln = (v / v0).ln();
        if ln <= -1.0 {
            let f = (-1.0 - prev_ln) / (ln - prev_ln);
            return Some(prev_t + f * (t - prev_t));
        }
        prev_t = *t;
        prev_ln = ln;
    }
    None
}

/// Largest normalized coherence at a given separation, used to check the
/// pointer-fit precondition (post-decoherence time).
pub fn coherence_at(rho: &DensityMatrix, rho0: &DensityMatrix, separation: f64) -> f64 {
    let d = rho.grid.spacing();
    let offset = ((separation / d).round() as usize).min(rho.grid.n - 1);
    let max_at = |m: &DensityMatrix| -> f64 {
        let mut best = 0.0_f64;
        for i in offset..m.grid.n {
            best = best.max(m.values[(i, i - offset)].norm());
        }
        best
    };
    max_at(rho) / max_at(rho0).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::model::{gaussian_initial_state, PhysicalParams, SpinSector};

    fn acceptance_params() -> PhysicalParams {
        PhysicalParams::natural(0.5, 1e-3, 10.0, 1.0)
    }

    fn initial(n: usize, half: f64) -> (PhysicalParams, DensityMatrix) {
        let p = acceptance_params();
        let grid = Grid::position(n, -half, half).unwrap();
        let rho = gaussian_initial_state(&p, &grid, SpinSector::Plus).unwrap();
        (p, rho)
    }

    #[test]
    fn momentum_transform_of_gaussian() {
        let (p, rho) = initial(256, 10.0);
        let mom = to_momentum(&rho, p.hbar).unwrap();
        assert_eq!(mom.basis, Axis::Momentum);
        // trace preserved
        let t_pos = rho.values_trace();
        let t_mom = mom.values_trace();
        assert!((t_pos - t_mom).norm() < 1e-8, "traces {t_pos} vs {t_mom}");
        // <p^2> = hbar^2 / 2 sigma^2
        let m = moments(&mom).unwrap();
        assert!(m.mean.abs() < 1e-10);
        assert!((m.variance - 0.5).abs() < 1e-6, "momentum variance {}", m.variance);
        assert!(mom.hermiticity_error() < 1e-10);
    }

    #[test]
    fn transform_round_trip_is_identity() {
        let (p, rho) = initial(128, 9.0);
        // add structure: evolve analytically to t = 3
        let evolved =
            analytic::position_matrix(&p, &rho.grid, 3.0, SpinSector::Plus, 1.0).unwrap();
        let mom = to_momentum(&evolved, p.hbar).unwrap();
        let back = to_position(&mom, &evolved.grid, p.hbar).unwrap();
        let linf = evolved
            .values
            .iter()
            .zip(back.values.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(linf < 1e-10, "round trip L_inf {linf:.3e}");
        assert_eq!(back.grid.spacing(), evolved.grid.spacing());
    }

    #[test]
    fn purity_examples() {
        let (p, rho) = initial(256, 10.0);
        assert!((purity(&rho) - 1.0).abs() < 1e-6);
        // basis invariance
        let mom = to_momentum(&rho, p.hbar).unwrap();
        assert!((purity(&mom) - purity(&rho)).abs() < 1e-6);
    }

    #[test]
    fn moments_of_initial_state() {
        let (_, rho) = initial(256, 10.0);
        let m = moments(&rho).unwrap();
        assert!(m.mean.abs() < 1e-12);
        assert!((m.variance - 0.5).abs() < 1e-10);
        let empty = DensityMatrix::zeros(
            Axis::Position,
            SpinSector::Plus,
            rho.grid,
            0.5,
        );
        assert!(matches!(moments(&empty), Err(Error::TraceTooSmall(_))));
    }

    #[test]
    fn moments_invariant_under_global_phase() {
        let (_, mut rho) = initial(128, 9.0);
        let m0 = moments(&rho).unwrap();
        let phase = C64::from_polar(1.0, 1.234);
        rho.values.mapv_inplace(|v| v * phase);
        let m1 = moments(&rho).unwrap();
        assert!((m0.mean - m1.mean).abs() < 1e-12);
        assert!((m0.variance - m1.variance).abs() < 1e-12);
    }

    #[test]
    fn coherence_series_normalization_and_errors() {
        let (p, _) = initial(128, 9.0);
        let grid = Grid::position(128, -9.0, 9.0).unwrap();
        let snaps: Vec<(f64, DensityMatrix)> = [0.0, 1.0, 2.0, 3.0]
            .iter()
            .map(|&t| {
                (
                    t,
                    analytic::position_matrix(&p, &grid, t, SpinSector::Plus, 1.0).unwrap(),
                )
            })
            .collect();
        let series = coherence_series(&snaps, 2.0, Axis::Position).unwrap();
        assert!((series.magnitudes[0] - 1.0).abs() < 1e-15);
        assert!((series.separation - 2.0).abs() <= grid.spacing());
        assert!(coherence_series(&snaps[..3], 2.0, Axis::Position).is_err());
        assert!(coherence_series(&snaps, 1e6, Axis::Position).is_err());
    }

    #[test]
    fn fit_decay_recovers_synthetic_rates() {
        let times: Vec<f64> = (0..40).map(|k| 0.05 * k as f64).collect();
        let rate = 3.7;
        let series = CoherenceSeries {
            separation: 2.0,
            basis: Axis::Position,
            times: times.clone(),
            magnitudes: times.iter().map(|t| (-rate * t).exp()).collect(),
        };
        let fit = fit_decay(&series, FitModel::ExpT).unwrap();
        assert!((fit.rate - rate).abs() < 1e-6 * rate);
        assert!(fit.residual < 1e-10);

        let cubic = CoherenceSeries {
            separation: 2.0,
            basis: Axis::Momentum,
            times: times.clone(),
            magnitudes: times.iter().map(|t| (-0.9 * t * t * t).exp()).collect(),
        };
        let fit3 = fit_decay(&cubic, FitModel::ExpT3).unwrap();
        assert!((fit3.rate - 0.9).abs() < 1e-6);
        let free = fit_decay(&cubic, FitModel::PowerLaw).unwrap();
        assert!((free.exponent - 3.0).abs() < 1e-6);
        assert!((free.rate - 0.9).abs() < 1e-6);
    }

    #[test]
    fn fit_decay_discriminates_models() {
        // the wrong model must carry a much larger residual
        let times: Vec<f64> = (0..40).map(|k| 0.05 * k as f64).collect();
        let cubic = CoherenceSeries {
            separation: 2.0,
            basis: Axis::Momentum,
            times: times.clone(),
            magnitudes: times.iter().map(|t| (-0.9 * t * t * t).exp()).collect(),
        };
        let right = fit_decay(&cubic, FitModel::ExpT3).unwrap();
        let wrong = fit_decay(&cubic, FitModel::ExpT).unwrap();
        assert!(
            wrong.residual > 10.0 * right.residual.max(1e-12),
            "exp_t residual {:.3e} vs exp_t3 {:.3e}",
            wrong.residual,
            right.residual
        );
    }

    #[test]
    fn fit_decay_refuses_flat_series() {
        let times: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
        let series = CoherenceSeries {
            separation: 2.0,
            basis: Axis::Position,
            times: times.clone(),
            magnitudes: times.iter().map(|t| (-0.1 * t).exp()).collect(),
        };
        assert!(matches!(
            fit_decay(&series, FitModel::ExpT),
            Err(Error::InsufficientDecay { .. })
        ));
    }

    #[test]
    fn pointer_fit_on_exact_initial_state() {
        let (p, rho) = initial(256, 10.0);
        let fit = pointer_fit(&rho, p.hbar).unwrap();
        assert!(fit.relative_residual < 1e-8, "residual {:.3e}", fit.relative_residual);
        assert!(fit.center_x.abs() < 1e-9);
        assert!(fit.center_p.abs() < 1e-9);
        let sigma = p.packet_width;
        assert!((fit.width_x - sigma / 2.0_f64.sqrt()).abs() < 1e-6);
        assert!((fit.width_p - p.hbar / (sigma * 2.0_f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn pointer_fit_matches_analytic_shape() {
        // evolved analytic state: centers and widths from the closed form
        let mut p = acceptance_params();
        p.damping = 0.01;
        p.thermal_energy = 20.0;
        p.cutoff_freq = 2.0;
        let grid = Grid::position(256, -12.0, 12.0).unwrap();
        let t = 1.0;
        let rho = analytic::position_matrix(&p, &grid, t, SpinSector::Plus, 1.0).unwrap();
        let fit = pointer_fit(&rho, p.hbar).unwrap();
        let sh = analytic::GaussianShape::at(&p, t);
        assert!(fit.relative_residual < 1e-6, "residual {:.3e}", fit.relative_residual);
        assert!(
            (fit.center_x - sh.center(1.0)).abs() < 1e-3,
            "center {} vs {}",
            fit.center_x,
            sh.center(1.0)
        );
        assert!(
            (fit.center_p - sh.mean_momentum(1.0, p.hbar)).abs()
                < 0.01 * sh.mean_momentum(1.0, p.hbar).abs(),
            "momentum {} vs {}",
            fit.center_p,
            sh.mean_momentum(1.0, p.hbar)
        );
        let predicted_wx = (sh.m_env / 2.0).sqrt();
        assert!(
            (fit.width_x / predicted_wx - 1.0).abs() < 1e-3,
            "width {} vs {}",
            fit.width_x,
            predicted_wx
        );
    }

    #[test]
    fn pointer_fit_rejects_flat_state() {
        let grid = Grid::position(64, -8.0, 8.0).unwrap();
        let mut rho = DensityMatrix::zeros(Axis::Position, SpinSector::Plus, grid, 0.5);
        rho.values.fill(C64::new(1.0, 0.0));
        assert!(pointer_fit(&rho, 1.0).is_err());
    }

    #[test]
    fn momentum_short_time_against_fft() {
        // coherence magnitudes of the transformed short-time position grid
        // vs the direct momentum short-time form, within 10%
        let mut p = acceptance_params();
        p.damping = 0.1;
        p.cutoff_freq = 20.0;
        let t = 0.01;
        let grid = Grid::position(256, -10.0, 10.0).unwrap();
        let mut rho = DensityMatrix::zeros(Axis::Position, SpinSector::Plus, grid, 0.5);
        let xs = grid.points();
        for i in 0..grid.n {
            for j in 0..grid.n {
                rho.values[(i, j)] = analytic::position_short_time(
                    xs[i],
                    xs[j],
                    t,
                    SpinSector::Plus,
                    &p,
                    1.0,
                )
                .unwrap()
                .0;
            }
        }
        let mom = to_momentum(&rho, p.hbar).unwrap();
        let ps = mom.grid.points();
        let n = mom.grid.n;
        // coherence magnitude at each separation: max over the mean momentum
        let mut worst: f64 = 0.0;
        let dp = mom.grid.spacing();
        let max_offset = (2.5 / dp) as usize;
        for offset in 0..=max_offset {
            let mut fft_mag: f64 = 0.0;
            let mut direct_mag: f64 = 0.0;
            for i in offset..n {
                fft_mag = fft_mag.max(mom.values[(i, i - offset)].norm());
                let direct = analytic::momentum_short_time(
                    ps[i],
                    ps[i - offset],
                    t,
                    SpinSector::Plus,
                    &p,
                    1.0,
                )
                .unwrap()
                .0;
                direct_mag = direct_mag.max(direct.norm());
            }
            worst = worst.max((fft_mag / direct_mag - 1.0).abs());
        }
        assert!(worst < 0.1, "max coherence-magnitude mismatch {worst:.3}");
    }
}
