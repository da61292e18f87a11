//! Experiment orchestration. Every run is deterministic: identical configs
//! produce byte-identical reports and CSVs (wall clock aside).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{
    self, coherence_series, fit_decay, moments, pointer_fit, purity, to_momentum, FitModel,
};
use crate::analytic;
use crate::cli::config::{ExperimentConfig, ExperimentKind, SnapshotOutput};
use crate::cli::csv;
use crate::cli::report::{
    ConservationJson, MomentSample, OracleJson, RunReport, Sentinel, SlopeJson,
    SnapshotDeviation, SpinCoherenceJson, SweepJson, SweepPointJson, TimescalesJson,
};
use crate::error::{Error, Result};
use crate::evolve::{self, IntegratorConfig, MasterEquationSpec, Trajectory};
use crate::model::{gaussian_initial_state, Axis, DensityMatrix, Grid, PhysicalParams, SpinSector};

/// Execute one experiment. Artifacts are written under `output_dir` when
/// given; the report is always returned.
pub fn run(config: &ExperimentConfig, output_dir: Option<&Path>) -> Result<RunReport> {
    let started = Instant::now();
    config.validate()?;
    if let Some(dir) = output_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut report = RunReport::new(config);
    let params = config.params.build();
    report.warnings = params.validate()?;

    match config.experiment {
        ExperimentKind::Timescales => run_timescales(config, &params, &mut report)?,
        ExperimentKind::Evaluate => run_evaluate(config, &params, &mut report, output_dir)?,
        ExperimentKind::Evolve => run_evolve(config, &params, &mut report, output_dir)?,
        ExperimentKind::Compare => run_compare(config, &params, &mut report, output_dir)?,
        ExperimentKind::Sweep => run_sweep(config, &mut report, output_dir)?,
    }

    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    if let Some(dir) = output_dir {
        std::fs::write(dir.join("report.json"), report.to_json())?;
    }
    Ok(report)
}

fn run_timescales(
    config: &ExperimentConfig,
    params: &PhysicalParams,
    report: &mut RunReport,
) -> Result<()> {
    let query = config.query()?;
    let ts = analytic::timescales(&query, params)?;
    report.timescales = Some(TimescalesJson::from(&ts));
    Ok(())
}

fn grid_sizing_warning(
    config: &ExperimentConfig,
    params: &PhysicalParams,
    grid: &Grid,
) -> Option<String> {
    let sigma = params.packet_width;
    let drift = params.coupling * config.time.t_final.powi(2) / (2.0 * params.mass);
    let needed = (8.0 * sigma).max(2.0 * drift + 8.0 * sigma);
    (grid.extent() < needed).then(|| {
        format!(
            "grid extent {:.3} is below the sizing rule max(8 sigma, 2 drift + 8 sigma) \
             = {needed:.3}; drifting packets may reach the boundary",
            grid.extent()
        )
    })
}

fn analytic_snapshots(
    params: &PhysicalParams,
    grid: &Grid,
    times: &[f64],
    sector: SpinSector,
) -> Result<Vec<(f64, DensityMatrix)>> {
    times
        .iter()
        .map(|&t| Ok((t, analytic::position_matrix(params, grid, t, sector, 1.0)?)))
        .collect()
}

fn write_snapshots(
    dir: Option<&Path>,
    mode: SnapshotOutput,
    snaps: &[(f64, DensityMatrix)],
) -> Result<()> {
    let Some(dir) = dir else { return Ok(()) };
    let indices: Vec<usize> = match mode {
        SnapshotOutput::None => vec![],
        SnapshotOutput::Final => vec![snaps.len().saturating_sub(1)],
        SnapshotOutput::All => (0..snaps.len()).collect(),
    };
    for k in indices {
        let path = dir.join(format!("snapshot_{k:03}.csv"));
        csv::write_snapshot(&path, &snaps[k].1)?;
    }
    Ok(())
}

fn series_and_fits(
    config: &ExperimentConfig,
    params: &PhysicalParams,
    snaps: &[(f64, DensityMatrix)],
    report: &mut RunReport,
    dir: Option<&Path>,
) -> Result<()> {
    let Some(coh) = &config.coherence else { return Ok(()) };
    let series = match coh.basis {
        Axis::Position => coherence_series(snaps, coh.separation, Axis::Position)?,
        Axis::Momentum => {
            let transformed: Result<Vec<_>> = snaps
                .iter()
                .map(|(t, rho)| Ok((*t, to_momentum(rho, params.hbar)?)))
                .collect();
            coherence_series(&transformed?, coh.separation, Axis::Momentum)?
        }
    };
    if let Some(dir) = dir {
        csv::write_series(&dir.join("coherence.csv"), &series)?;
    }
    if params.damping == 0.0 {
        // control run: report the decay rate (clipped at zero for a series
        // that only grows) instead of fitting a law that is not there
        let lns: Vec<f64> = series.magnitudes.iter().map(|m| m.ln()).collect();
        let slope = linear_slope(&series.times, &lns);
        let decay_rate = (-slope).max(0.0);
        report.add_check("control_no_decay", decay_rate, 1e-8, decay_rate < 1e-8);
        return Ok(());
    }
    match fit_decay(&series, coh.fit_model) {
        Ok(fit) => report.fits.push(fit),
        Err(Error::InsufficientDecay { max_drop }) => {
            report
                .warnings
                .push(format!("decay fit skipped: max log-drop {max_drop:.3} < 0.5"));
        }
        Err(e) => return Err(e),
    }
    // the free-exponent variant discriminates t vs t^3 laws
    if coh.fit_model != FitModel::PowerLaw {
        if let Ok(free) = fit_decay(&series, FitModel::PowerLaw) {
            report.fits.push(free);
        }
    }
    Ok(())
}

fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn moment_samples(
    params: &PhysicalParams,
    snaps: &[(f64, DensityMatrix)],
) -> Result<Vec<MomentSample>> {
    snaps
        .iter()
        .map(|(t, rho)| {
            let mx = moments(rho)?;
            let mom_rep = to_momentum(rho, params.hbar)?;
            let mp = moments(&mom_rep)?;
            Ok(MomentSample {
                t: *t,
                mean_x: mx.mean,
                variance_x: mx.variance,
                mean_p: mp.mean,
                variance_p: mp.variance,
                purity: purity(rho),
            })
        })
        .collect()
}

fn pointer_fit_sample(
    config: &ExperimentConfig,
    params: &PhysicalParams,
    snaps: &[(f64, DensityMatrix)],
    report: &mut RunReport,
) -> Result<()> {
    let Some(t_fit) = config.pointer_fit_at else { return Ok(()) };
    let (_, rho) = snaps
        .iter()
        .min_by(|a, b| {
            (a.0 - t_fit)
                .abs()
                .partial_cmp(&(b.0 - t_fit).abs())
                .unwrap()
        })
        .ok_or_else(|| Error::FitFailed("no snapshots for pointer fit".into()))?;
    let sigma = params.packet_width;
    let coh = analysis::coherence_at(rho, &snaps[0].1, 4.0 * sigma);
    if coh > 1e-2 {
        report.warnings.push(format!(
            "pointer fit at a pre-decoherence time: coherence at 4 sigma is {coh:.3e} > 1e-2"
        ));
    }
    report.pointer_fits.push(pointer_fit(rho, params.hbar)?);
    Ok(())
}

fn run_evaluate(
    config: &ExperimentConfig,
    params: &PhysicalParams,
    report: &mut RunReport,
    dir: Option<&Path>,
) -> Result<()> {
    if config.sector == SpinSector::Cross {
        return Err(Error::SectorMismatch(
            "the analytic engine covers diagonal sectors only".into(),
        ));
    }
    let grid = config.grid.build()?;
    let times = snapshot_times(config, &grid, params)?;
    let snaps = analytic_snapshots(params, &grid, &times, config.sector)?;
    write_snapshots(dir, config.snapshot_output, &snaps)?;
    report.moments = moment_samples(params, &snaps)?;
    series_and_fits(config, params, &snaps, report, dir)?;
    pointer_fit_sample(config, params, &snaps, report)?;
    Ok(())
}

fn snapshot_times(
    config: &ExperimentConfig,
    grid: &Grid,
    params: &PhysicalParams,
) -> Result<Vec<f64>> {
    // reuse the integrator-config plumbing for the snapshot list
    let ic = config.time.build(grid, params)?;
    Ok(ic.snapshot_times)
}

fn run_trajectory(
    config: &ExperimentConfig,
    params: &PhysicalParams,
    report: &mut RunReport,
) -> Result<(Trajectory, IntegratorConfig)> {
    let grid = config.grid.build()?;
    if let Some(w) = grid_sizing_warning(config, params, &grid) {
        report.warnings.push(w);
    }
    report.warnings.extend(evolve::resolution_warnings(&grid, params));
    let ic = config.time.build(&grid, params)?;
    let rho0 = gaussian_initial_state(params, &grid, config.sector)?;
    let traj = if config.sector == SpinSector::Cross {
        evolve::evolve_cross_sector(&rho0, params, &ic)?
    } else {
        let spec = MasterEquationSpec::new(config.sector, *params);
        evolve::evolve(&rho0, &spec, &ic)?
    };
    Ok((traj, ic))
}

fn run_evolve(
    config: &ExperimentConfig,
    params: &PhysicalParams,
    report: &mut RunReport,
    dir: Option<&Path>,
) -> Result<()> {
    let (traj, _) = run_trajectory(config, params, report)?;
    write_snapshots(dir, config.snapshot_output, &traj.snapshots)?;
    report.conservation = Some(ConservationJson {
        max_trace_drift: traj.max_trace_drift,
        max_hermiticity_error: traj.max_hermiticity_error,
        steps_taken: traj.steps_taken,
    });
    report.add_check(
        "trace_conservation",
        traj.max_trace_drift,
        1e-6,
        traj.max_trace_drift <= 1e-6,
    );
    if config.sector.is_diagonal() {
        report.add_check(
            "hermiticity",
            traj.max_hermiticity_error,
            1e-8,
            traj.max_hermiticity_error <= 1e-8,
        );
        report.moments = moment_samples(params, &traj.snapshots)?;
        if params.damping == 0.0 && !report.moments.is_empty() {
            let p0 = report.moments[0].purity;
            let drift = report
                .moments
                .iter()
                .fold(0.0_f64, |m, s| m.max((s.purity - p0).abs()));
            report.add_check("control_purity_drift", drift, 1e-6, drift < 1e-6);
        }
    } else {
        // spin coherence: e-folding time of the integrated diagonal magnitude
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.0).collect();
        let norms: Vec<f64> = traj
            .snapshots
            .iter()
            .map(|s| analysis::diagonal_abs_norm(&s.1))
            .collect();
        let t_efold = analysis::efold_crossing(&times, &norms);
        let formula = analytic::timescales(
            &analytic::TimescaleQuery { delta_x: Some(1.0), delta_p: None },
            params,
        )?
        .spin_coherence;
        report.spin_coherence = Some(SpinCoherenceJson {
            t_efold: t_efold.map(Sentinel),
            formula: Sentinel(formula),
            ratio_to_formula: t_efold.map(|t| Sentinel(t / formula)),
        });
    }
    series_and_fits(config, params, &traj.snapshots, report, dir)?;
    pointer_fit_sample(config, params, &traj.snapshots, report)?;
    Ok(())
}

fn run_compare(
    config: &ExperimentConfig,
    params: &PhysicalParams,
    report: &mut RunReport,
    dir: Option<&Path>,
) -> Result<()> {
    if config.sector == SpinSector::Cross {
        return Err(Error::SectorMismatch(
            "compare needs a diagonal sector (no closed form for the cross block)".into(),
        ));
    }
    let (traj, _) = run_trajectory(config, params, report)?;
    write_snapshots(dir, config.snapshot_output, &traj.snapshots)?;
    let mut per = Vec::new();
    let mut max_linf = 0.0_f64;
    let mut max_rel = 0.0_f64;
    for (t, snap) in &traj.snapshots {
        let exact =
            analytic::position_matrix(params, &snap.grid, *t, config.sector, 1.0)?;
        let mut linf = 0.0_f64;
        let mut peak = 0.0_f64;
        for (a, b) in snap.values.iter().zip(exact.values.iter()) {
            linf = linf.max((a - b).norm());
            peak = peak.max(b.norm());
        }
        let rel = if peak > 0.0 { linf / peak } else { linf };
        max_linf = max_linf.max(linf);
        max_rel = max_rel.max(rel);
        per.push(SnapshotDeviation { t: *t, linf, linf_relative: rel });
    }
    report.oracle = Some(OracleJson {
        per_snapshot: per,
        max_linf,
        max_linf_relative: max_rel,
    });
    report.add_check("oracle_equivalence", max_linf, 1e-4, max_linf <= 1e-4);
    report.conservation = Some(ConservationJson {
        max_trace_drift: traj.max_trace_drift,
        max_hermiticity_error: traj.max_hermiticity_error,
        steps_taken: traj.steps_taken,
    });
    Ok(())
}

fn run_sweep(
    config: &ExperimentConfig,
    report: &mut RunReport,
    dir: Option<&Path>,
) -> Result<()> {
    let sweep = config.sweep.as_ref().expect("validated");
    let results: Vec<Result<(f64, RunReport)>> = sweep
        .values
        .par_iter()
        .enumerate()
        .map(|(k, &value)| {
            let mut point_config = config.with_parameter(&sweep.parameter, value)?;
            point_config.experiment = sweep.experiment;
            point_config.sweep = None;
            let point_dir: Option<PathBuf> =
                dir.map(|d| d.join(format!("point_{k:03}")));
            let rep = run(&point_config, point_dir.as_deref())?;
            Ok((value, rep))
        })
        .collect();

    let mut points = Vec::new();
    for res in results {
        let (value, rep) = res?;
        points.push(SweepPointJson {
            value,
            t_efold: rep.spin_coherence.as_ref().and_then(|s| s.t_efold),
            fits: rep.fits.clone(),
        });
    }
    // log-log slope of the e-folding time against the swept parameter
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for p in &points {
        if let Some(Sentinel(t)) = p.t_efold {
            if t.is_finite() && p.value > 0.0 {
                lx.push(p.value.ln());
                ly.push(t.ln());
            }
        }
    }
    let efold_slope = (lx.len() >= 3).then(|| SlopeJson {
        log_log_slope: linear_slope(&lx, &ly),
        points: lx.len(),
    });
    report.sweep = Some(SweepJson {
        parameter: sweep.parameter.clone(),
        points,
        efold_slope,
    });
    Ok(())
}
