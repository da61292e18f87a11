// Temporary development probe; not part of the deliverable surface.
use decolab::analysis::to_momentum;
use decolab::analytic;
use decolab::evolve;
use decolab::model::{Axis, DensityMatrix, Grid, PhysicalParams, SpinSector};
use num_complex::Complex64 as C64;

fn acceptance() -> PhysicalParams {
    PhysicalParams::natural(0.5, 1e-3, 10.0, 1.0)
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "residual" => residual_scan(),
        "fft" => fft_check(),
        "compare" => compare_scan(),
        "components" => residual_components(),
        "cross" => cross_sweep(),
        _ => {
            residual_scan();
        }
    }
}

fn residual_scan() {
    let params = acceptance();
    for &t in &[1.0, 10.0, 100.0] {
        for &(half, n) in &[
            (6.0, 256usize),
            (8.0, 256),
            (9.0, 256),
            (10.0, 256),
            (12.0, 256),
            (8.0, 512),
            (10.0, 512),
        ] {
            let sh = analytic::GaussianShape::at(&params, t);
            let c = sh.center(1.0);
            let grid = Grid::position(n, c - half, c + half).unwrap();
            for &fd in &[1e-3, 1e-4] {
                match evolve::equation_residual(&params, SpinSector::Plus, &grid, t, fd) {
                    Ok(r) => println!(
                        "t={t:>5} half={half:>4} n={n} fd={fd:.0e}: rel={:.3e}",
                        r.relative_residual
                    ),
                    Err(e) => println!("t={t} half={half} n={n}: {e}"),
                }
            }
        }
        // the adaptive patch
        let patch = evolve::residual_patch(&params, SpinSector::Plus, t, 256);
        let r = evolve::equation_residual(&params, SpinSector::Plus, &patch, t, 2e-5).unwrap();
        println!(
            "t={t:>5} adaptive [{:.3},{:.3}] h={:.4}: rel={:.3e}",
            patch.min,
            patch.max,
            patch.spacing(),
            r.relative_residual
        );
    }
}

fn fft_check() {
    let mut p = acceptance();
    p.damping = 0.1;
    p.cutoff_freq = 20.0;
    let t = 0.01;
    let grid = Grid::position(256, -10.0, 10.0).unwrap();
    let mut rho = DensityMatrix::zeros(Axis::Position, SpinSector::Plus, grid, 0.5);
    let xs = grid.points();
    for i in 0..grid.n {
        for j in 0..grid.n {
            rho.values[(i, j)] =
                analytic::position_short_time(xs[i], xs[j], t, SpinSector::Plus, &p, 1.0)
                    .unwrap()
                    .0;
        }
    }
    let mom = to_momentum(&rho, p.hbar).unwrap();
    let ps = mom.grid.points();
    let peak = mom.max_abs();
    println!("peak fft {peak:.6e}");
    let mut worst = (0.0_f64, 0.0, 0.0, C64::default(), C64::default());
    for i in 0..mom.grid.n {
        for j in 0..mom.grid.n {
            if (ps[i] - ps[j]).abs() > 2.5 {
                continue;
            }
            let direct =
                analytic::momentum_short_time(ps[i], ps[j], t, SpinSector::Plus, &p, 1.0)
                    .unwrap()
                    .0;
            if direct.norm() > 1e-3 * peak {
                let mismatch = (mom.values[(i, j)].norm() / direct.norm() - 1.0).abs();
                if mismatch > worst.0 {
                    worst = (mismatch, ps[i], ps[j], mom.values[(i, j)], direct);
                }
            }
        }
    }
    println!(
        "worst {:.4} at p={:.3} p'={:.3}  fft={:?} direct={:?}",
        worst.0, worst.1, worst.2, worst.3, worst.4
    );
    // also: initial state, fft vs closed momentum form
    let p0 = acceptance();
    let rho0 =
        decolab::model::gaussian_initial_state(&p0, &grid, SpinSector::Plus).unwrap();
    let mom0 = to_momentum(&rho0, p0.hbar).unwrap();
    let mut worst0 = (0.0_f64, 0.0, 0.0);
    for i in 0..grid.n {
        for j in 0..grid.n {
            let direct =
                analytic::momentum_exact(ps[i], ps[j], 0.0, SpinSector::Plus, &p0, 1.0)
                    .unwrap();
            let d = (mom0.values[(i, j)] - direct).norm();
            if d > worst0.0 {
                worst0 = (d, ps[i], ps[j]);
            }
        }
    }
    println!("initial-state fft vs closed form: max abs {:.3e} at ({:.2},{:.2}), peak {:.3e}",
        worst0.0, worst0.1, worst0.2, mom0.max_abs());
}

fn compare_scan() {
    let params = acceptance();
    for &(n, half, t_final) in &[(256usize, 14.0, 2.0), (256, 20.0, 3.0), (256, 30.0, 5.0), (384, 30.0, 5.0)] {
        let grid = Grid::position(n, -half, half).unwrap();
        let rho0 =
            decolab::model::gaussian_initial_state(&params, &grid, SpinSector::Plus).unwrap();
        let spec = evolve::MasterEquationSpec::new(SpinSector::Plus, params);
        let dt = evolve::stable_dt(&grid, &params, 0.1);
        let config = evolve::IntegratorConfig::with_snapshot_count(dt, t_final, 3);
        let traj = evolve::evolve(&rho0, &spec, &config).unwrap();
        for (t, snap) in &traj.snapshots {
            let exact =
                analytic::position_matrix(&params, &grid, *t, SpinSector::Plus, 1.0).unwrap();
            let linf = snap
                .values
                .iter()
                .zip(exact.values.iter())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
            println!("n={n} half={half} t={t}: linf={linf:.3e}");
        }
    }
}

#[allow(dead_code)]
fn residual_components() {
    use decolab::evolve::{master_rhs, MasterEquationSpec};
    let params = acceptance();
    let t = 10.0;
    let sh = analytic::GaussianShape::at(&params, t);
    let c = sh.center(1.0);
    let grid = Grid::position(256, c - 8.0, c + 8.0).unwrap();
    let spec = MasterEquationSpec::new(SpinSector::Plus, params);
    let rho = analytic::position_matrix(&params, &grid, t, SpinSector::Plus, 1.0).unwrap();
    let rhs = master_rhs(&rho, &spec).unwrap();
    let fd = 1e-4;
    let stencil: [(f64, f64); 4] = [(-2.0 * fd, 1.0), (-fd, -8.0), (fd, 8.0), (2.0 * fd, -1.0)];
    let n = grid.n;
    let mut drho = vec![C64::default(); n * n];
    for (offset, w) in stencil {
        let m = analytic::position_matrix(&params, &grid, t + offset, SpinSector::Plus, 1.0)
            .unwrap();
        let w = C64::new(w / (12.0 * fd), 0.0);
        for (d, v) in drho.iter_mut().zip(m.values.iter()) {
            *d += w * v;
        }
    }
    let mut max_diff = (0.0_f64, 0, 0);
    let mut max_drho = 0.0_f64;
    let mut max_rhs = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let a = rhs.values[(i, j)];
            let b = drho[i * n + j];
            let d = (a - b).norm();
            if d > max_diff.0 {
                max_diff = (d, i, j);
            }
            max_drho = max_drho.max(b.norm());
            max_rhs = max_rhs.max(a.norm());
        }
    }
    println!("max|rhs|={max_rhs:.4e} max|drho|={max_drho:.4e} maxdiff={:.4e} at ({}, {})",
        max_diff.0, max_diff.1, max_diff.2);
    let (i, j) = (max_diff.1, max_diff.2);
    let xs = grid.points();
    println!("worst cell x={:.3} x'={:.3} rel={:.3} |rho|={:.4e} rhs={:?} drho={:?}",
        xs[i], xs[j], xs[i]-xs[j], rho.values[(i,j)].norm(), rhs.values[(i,j)], drho[i*n+j]);
    println!("peak |rho| = {:.4e}", rho.max_abs());
}

#[allow(dead_code)]
fn cross_sweep() {
    use decolab::analysis::{diagonal_abs_norm, efold_crossing};
    use decolab::evolve::{evolve_cross_sector, stable_dt, IntegratorConfig};
    use std::time::Instant;
    let eps = 0.5;
    let kbt = 2.0;
    let run_point = |gamma: f64, eps: f64, n: usize, half: f64| -> (f64, f64) {
        let mut params = PhysicalParams::natural(eps, gamma, kbt, 1.0);
        params.cutoff_freq = 200.0 * gamma;
        let grid = Grid::position(n, -half, half).unwrap();
        let mut rho0 =
            decolab::model::gaussian_initial_state(&params, &grid, SpinSector::Plus).unwrap();
        rho0.sector = SpinSector::Cross;
        // rough horizon from the cubic decay law with saturated drift
        let t_guess = (3.0 * gamma / (8.0 * eps * eps * kbt)).cbrt();
        let t_final = 1.6 * t_guess;
        let dt = stable_dt(&grid, &params, 0.1).min(2.2 / (2.0 * gamma * kbt * (2.0 * half).powi(2)));
        let config = IntegratorConfig::with_snapshot_count(dt, t_final, 40);
        let started = Instant::now();
        let traj = evolve_cross_sector(&rho0, &params, &config).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.0).collect();
        let norms: Vec<f64> = traj.snapshots.iter().map(|s| diagonal_abs_norm(&s.1)).collect();
        let t_ef = efold_crossing(&times, &norms).unwrap_or(f64::NAN);
        (t_ef, started.elapsed().as_secs_f64())
    };
    let gammas = [12.0, 26.0, 56.0, 120.0];
    let mut ln_g = Vec::new();
    let mut ln_t = Vec::new();
    for &g in &gammas {
        let (t_ef, secs) = run_point(g, eps, 128, 7.5);
        println!("gamma={g:>6}: t_efold={t_ef:.4}  ({secs:.1} s)");
        ln_g.push(g.ln());
        ln_t.push(t_ef.ln());
    }
    let n = ln_g.len() as f64;
    let sx: f64 = ln_g.iter().sum();
    let sy: f64 = ln_t.iter().sum();
    let sxx: f64 = ln_g.iter().map(|x| x * x).sum();
    let sxy: f64 = ln_g.iter().zip(&ln_t).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    println!("log-log slope = {slope:.4} (want 1/3 +- 0.05)");
    // coupling doubling at gamma = 56
    let (t1, _) = run_point(56.0, eps, 128, 7.5);
    let (t2, s2) = run_point(56.0, 2.0 * eps, 128, 7.5);
    let ratio = t2 / t1;
    let expect = 2.0_f64.powf(-2.0 / 3.0);
    println!(
        "eps doubling: ratio {ratio:.4} vs 2^(-2/3) = {expect:.4} (dev {:+.1}%)  ({s2:.1} s)",
        100.0 * (ratio / expect - 1.0)
    );
}
