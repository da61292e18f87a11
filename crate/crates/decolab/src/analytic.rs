//! Closed-form reduced density matrices and decoherence timescales.
//!
//! The position-basis solution for a diagonal spin sector s = +/-1 is a
//! complex Gaussian in the mean/relative coordinates (R, r):
//!
//! ```text
//! rho_s(R, r, t) = w (pi M)^(-1/2) exp{ -c1 r^2 - i s k1 r
//!                                       - (R + s a - i b r)^2 / M }
//! tau = gamma t, D = 8 m gamma kBT,
//! c1 = e^{-2tau}/(4 s^2) + (m kBT/hbar^2)(1 - e^{-2tau})
//! k1 = (eps/(hbar gamma)) (1 - e^{-tau})
//! a  = (eps/(m gamma^2)) (tau - 1 + e^{-tau})
//! b  = (hbar/(2 s^2 m gamma)) e^{-tau}(1 - e^{-tau})
//!      + (D/(4 m gamma^2 hbar)) (1 - e^{-tau})^2
//! M  = s^2 + (hbar^2/(s^2 m^2 gamma^2))(1 - e^{-tau})^2
//!      + (D/(2 m^2 gamma^3))(2 tau - 3 + 4 e^{-tau} - e^{-2tau})
//! ```
//!
//! This form satisfies the master equation in [`crate::evolve`] exactly; the
//! sector convention is V_s = s eps x, so the sector-s packet drifts to
//! x = -s eps t^2/2m with mean momentum -s eps t. (This flips one sign of the
//! published expression, which is not self-consistent as printed; see the
//! Ehrenfest identity test.) All evaluators are gamma -> 0 safe: the shape
//! factors switch to series forms at small tau, so the decoupled-bath limit
//! needs no special casing.
//!
//! Everything is renormalized so that a sector of weight w has trace w.

use num_complex::Complex64 as C64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{Axis, DensityMatrix, Grid, PhysicalParams, SpinSector};

/// Largest tau for which the short-time evaluators are trustworthy.
pub const SHORT_TIME_TAU_LIMIT: f64 = 0.01;

/// Which evaluator family a computation used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitRegime {
    Exact,
    ShortTime,
}

// ---- small-tau-safe shape factors -------------------------------------------------

/// 1 - e^{-tau}, accurate for all tau >= 0.
fn em1(tau: f64) -> f64 {
    -(-tau).exp_m1()
}

/// (1 - e^{-tau})/tau -> 1 as tau -> 0.
fn phi_linear(tau: f64) -> f64 {
    if tau == 0.0 {
        1.0
    } else {
        em1(tau) / tau
    }
}

/// e^{-tau} (1 - e^{-tau})/tau -> 1 as tau -> 0.
fn phi_damped(tau: f64) -> f64 {
    if tau == 0.0 {
        1.0
    } else {
        (-tau).exp() * em1(tau) / tau
    }
}

/// ((1 - e^{-tau})/tau)^2 -> 1 as tau -> 0.
fn phi_squared(tau: f64) -> f64 {
    let p = phi_linear(tau);
    p * p
}

/// 2 (tau - 1 + e^{-tau}) / tau^2 -> 1 as tau -> 0.
/// Series below tau = 0.1 where the direct form cancels catastrophically.
fn phi_drift(tau: f64) -> f64 {
    if tau < 0.1 {
        // 2 sum_{k>=0} (-tau)^k / (k+2)!
        let mut term = 1.0; // k = 0: 2/2!
        let mut sum = term;
        for k in 1..=9 {
            term *= -tau / (k + 2) as f64;
            sum += term;
        }
        sum
    } else {
        2.0 * (tau - 1.0 + (-tau).exp()) / (tau * tau)
    }
}

/// (2 tau - 3 + 4 e^{-tau} - e^{-2tau}) / tau^3 -> 2/3 as tau -> 0.
fn phi_bath(tau: f64) -> f64 {
    if tau < 0.15 {
        // sum_{k>=3} (4 (-1)^k - (-2)^k) tau^{k-3} / k!
        let mut sum = 0.0;
        let mut tau_pow = 1.0;
        let mut factorial = 6.0; // 3!
        let mut sign = -1.0; // (-1)^3
        let mut two_pow = -8.0; // (-2)^3
        for k in 3..=12 {
            sum += (4.0 * sign - two_pow) * tau_pow / factorial;
            tau_pow *= tau;
            factorial *= (k + 1) as f64;
            sign = -sign;
            two_pow *= -2.0;
        }
        sum
    } else {
        (2.0 * tau - 3.0 + 4.0 * (-tau).exp() - (-2.0 * tau).exp()) / tau.powi(3)
    }
}

// ---- Gaussian shape of the exact solution ------------------------------------------

/// Time-dependent coefficients of the exact position-basis Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct GaussianShape {
    /// Coefficient of -r^2 in the exponent (coherence suppression).
    pub c1: f64,
    /// Momentum phase slope: mean momentum of sector s is -s hbar k1.
    pub k1: f64,
    /// Drift magnitude: sector-s packet center is -s a.
    pub a: f64,
    /// Imaginary r-R cross coupling.
    pub b: f64,
    /// Squared width parameter of the mean-coordinate envelope.
    pub m_env: f64,
}

impl GaussianShape {
    pub fn at(params: &PhysicalParams, t: f64) -> Self {
        let (m, eps, gamma, sigma, hbar) = (
            params.mass,
            params.coupling,
            params.damping,
            params.packet_width,
            params.hbar,
        );
        let kbt = params.thermal_energy;
        let tau = gamma * t;
        let d = params.derived().diffusion;
        let s2 = sigma * sigma;
        let e2 = (-2.0 * tau).exp();
        let c1 = e2 / (4.0 * s2) + (m * kbt / (hbar * hbar)) * (1.0 - e2);
        let k1 = (eps * t / hbar) * phi_linear(tau);
        let a = (eps * t * t / (2.0 * m)) * phi_drift(tau);
        let b = (hbar * t / (2.0 * s2 * m)) * phi_damped(tau)
            + (d * t * t / (4.0 * m * hbar)) * phi_squared(tau);
        let m_env = s2 + (hbar * hbar * t * t / (s2 * m * m)) * phi_squared(tau)
            + (d * t * t * t / (2.0 * m * m)) * phi_bath(tau);
        Self { c1, k1, a, b, m_env }
    }

    /// Sector-s packet center at time t.
    pub fn center(&self, sign: f64) -> f64 {
        -sign * self.a
    }

    /// Sector-s mean momentum at time t (hbar k1 with the sector sign).
    pub fn mean_momentum(&self, sign: f64, hbar: f64) -> f64 {
        -sign * hbar * self.k1
    }

    /// Effective coefficient of -r^2 in ln |rho| after maximizing over R.
    pub fn coherence_coefficient(&self) -> f64 {
        self.c1 - self.b * self.b / self.m_env
    }

    /// Purity of the unit-trace sector state.
    pub fn purity(&self) -> f64 {
        1.0 / (2.0 * (self.m_env * self.coherence_coefficient()).sqrt())
    }
}

/// Squared width parameter M as a function of tau = gamma t.
pub fn m_of_tau(tau: f64, params: &PhysicalParams) -> f64 {
    let t = time_from_tau(tau, params);
    GaussianShape::at(params, t).m_env
}

/// Inverse-squared-width parameter N(tau) of the momentum representation:
/// N = (4 m kBT/hbar^2)(1 - e^{-2tau}) + e^{-2tau}/sigma^2.
pub fn n_of_tau(tau: f64, params: &PhysicalParams) -> f64 {
    let e2 = (-2.0 * tau).exp();
    4.0 * params.mass * params.thermal_energy / (params.hbar * params.hbar) * (1.0 - e2)
        + e2 / (params.packet_width * params.packet_width)
}

fn time_from_tau(tau: f64, params: &PhysicalParams) -> f64 {
    if params.damping == 0.0 {
        if tau != 0.0 {
            // tau = gamma t is identically zero for a decoupled bath
            return f64::NAN;
        }
        0.0
    } else {
        tau / params.damping
    }
}

fn sector_sign(sector: SpinSector) -> Result<f64> {
    sector.sign().ok_or_else(|| {
        Error::SectorMismatch("closed-form solutions exist for diagonal sectors only".into())
    })
}

fn guarded_exp(g: C64) -> Result<C64> {
    if g.re > 700.0 {
        return Err(Error::Instability(format!(
            "exponent overflow: Re = {:.3e}",
            g.re
        )));
    }
    Ok(g.exp())
}

/// Exact sector-s density matrix in mean/relative position coordinates.
pub fn position_exact(
    mean: f64,
    rel: f64,
    t: f64,
    sector: SpinSector,
    params: &PhysicalParams,
    weight: f64,
) -> Result<C64> {
    let s = sector_sign(sector)?;
    let sh = GaussianShape::at(params, t);
    let i = C64::i();
    let inner = C64::new(mean + s * sh.a, -sh.b * rel);
    let g = -C64::new(sh.c1 * rel * rel, 0.0) - i * (s * sh.k1 * rel) - inner * inner / sh.m_env;
    Ok(guarded_exp(g)? * (weight / (PI * sh.m_env).sqrt()))
}

/// Short-time (tau << 1) position form: Gaussian packets of the initial width
/// drifting to -s eps t^2/2m, damped by exp(-2 m gamma kBT r^2 t / hbar^2).
/// The decay exponent uses hbar^2; dimensional consistency with the exact
/// solution requires it even though the published form drops one power.
pub fn position_short_time(
    x: f64,
    xp: f64,
    t: f64,
    sector: SpinSector,
    params: &PhysicalParams,
    weight: f64,
) -> Result<(C64, LimitRegime)> {
    let s = sector_sign(sector)?;
    let (m, eps, gamma, sigma, hbar) = (
        params.mass,
        params.coupling,
        params.damping,
        params.packet_width,
        params.hbar,
    );
    let kbt = params.thermal_energy;
    let d = params.derived().diffusion;
    let s2 = sigma * sigma;
    let rel = x - xp;
    let decay = -2.0 * m * gamma * kbt * rel * rel * t / (hbar * hbar);
    let drift = s * eps * t * t / (2.0 * m);
    let imag_shift = hbar * rel * t / (2.0 * s2 * m) + d * rel * t * t / (4.0 * m * hbar);
    let i = C64::i();
    let ux = C64::new(x + drift, -imag_shift);
    let uxp = C64::new(xp + drift, -imag_shift);
    let g = C64::new(decay, 0.0) - i * (s * eps * x * t / hbar) + i * (s * eps * xp * t / hbar)
        - ux * ux / (2.0 * s2)
        - uxp * uxp / (2.0 * s2);
    let value = guarded_exp(g)? * (weight / (PI * s2).sqrt());
    Ok((value, LimitRegime::ShortTime))
}

/// Exact sector-s density matrix in the momentum basis, with the convention
/// Q = (p - p')/hbar and q = (p + p')/2hbar. The fast-Fourier transform of
/// the position solution is the authoritative momentum representation; this
/// closed form is evaluated for comparison.
pub fn momentum_exact(
    p: f64,
    pp: f64,
    t: f64,
    sector: SpinSector,
    params: &PhysicalParams,
    weight: f64,
) -> Result<C64> {
    let s = sector_sign(sector)?;
    let (m, eps, gamma, sigma, hbar) = (
        params.mass,
        params.coupling,
        params.damping,
        params.packet_width,
        params.hbar,
    );
    let tau = gamma * t;
    let d = params.derived().diffusion;
    let s2 = sigma * sigma;
    let n_tau = n_of_tau(tau, params);
    let q_big = (p - pp) / hbar;
    let q_mean = (p + pp) / (2.0 * hbar);
    let sh = GaussianShape::at(params, t);
    let i = C64::i();
    // mean-momentum center -s hbar k1 and drift phase -s a, shared with the
    // position form
    let center = s * (eps * t / hbar) * phi_linear(tau);
    let imag_shift = hbar * t / (2.0 * s2 * m) * phi_damped(tau)
        - (d * t * t / (4.0 * m * hbar)) * phi_squared(tau);
    let inner = C64::new(q_mean + center, imag_shift * q_big);
    let quad = (hbar * hbar * t * t / (4.0 * s2 * m * m)) * phi_squared(tau) + s2 / 4.0
        + (d * t * t * t / (2.0 * m * m)) * phi_bath(tau);
    let lin = i * (s * sh.a * q_big);
    let g = -inner * inner / n_tau - C64::new(quad * q_big * q_big, 0.0) + lin;
    let norm = weight * 2.0 * (PI / n_tau).sqrt() / (2.0 * PI * hbar);
    Ok(guarded_exp(g)? * norm)
}

/// Short-time momentum form: packets at p = -s eps t with width hbar/sigma,
/// damped by exp(-2 gamma kBT (p-p')^2 t^3 / 3 m hbar^2).
pub fn momentum_short_time(
    p: f64,
    pp: f64,
    t: f64,
    sector: SpinSector,
    params: &PhysicalParams,
    weight: f64,
) -> Result<(C64, LimitRegime)> {
    let s = sector_sign(sector)?;
    let (m, eps, gamma, sigma, hbar) = (
        params.mass,
        params.coupling,
        params.damping,
        params.packet_width,
        params.hbar,
    );
    let kbt = params.thermal_energy;
    let s2 = sigma * sigma;
    let h2 = hbar * hbar;
    let dp = p - pp;
    let decay = -2.0 * gamma * kbt * dp * dp * t * t * t / (3.0 * m * h2);
    let i = C64::i();
    let g = C64::new(decay, 0.0) + i * (s * eps * t * t * p / (2.0 * m * hbar))
        - i * (s * eps * t * t * pp / (2.0 * m * hbar))
        - C64::new(s2 / (2.0 * h2) * (p + s * eps * t).powi(2), 0.0)
        - C64::new(s2 / (2.0 * h2) * (pp + s * eps * t).powi(2), 0.0);
    let norm = weight * 2.0 * sigma * PI.sqrt() / (2.0 * PI * hbar);
    Ok((guarded_exp(g)? * norm, LimitRegime::ShortTime))
}

/// Warn-level check for using the short-time forms outside their regime.
pub fn short_time_warning(params: &PhysicalParams, t: f64) -> Option<String> {
    let tau = params.tau(t);
    (tau > SHORT_TIME_TAU_LIMIT).then(|| {
        format!("short-time form evaluated at tau = {tau:.3e} > {SHORT_TIME_TAU_LIMIT}")
    })
}

/// Fill a density matrix from one of the exact evaluators.
pub fn position_matrix(
    params: &PhysicalParams,
    grid: &Grid,
    t: f64,
    sector: SpinSector,
    weight: f64,
) -> Result<DensityMatrix> {
    if grid.axis != Axis::Position {
        return Err(Error::BasisMismatch { expected: "position" });
    }
    let mut rho = DensityMatrix::zeros(Axis::Position, sector, *grid, weight);
    let xs = grid.points();
    for i in 0..grid.n {
        for j in 0..grid.n {
            let (mean, rel) = crate::model::position_to_mean_rel(xs[i], xs[j]);
            rho.values[(i, j)] = position_exact(mean, rel, t, sector, params, 1.0)?;
        }
    }
    Ok(rho)
}

/// Momentum-basis matrix from the closed momentum form.
pub fn momentum_matrix(
    params: &PhysicalParams,
    grid: &Grid,
    t: f64,
    sector: SpinSector,
    weight: f64,
) -> Result<DensityMatrix> {
    if grid.axis != Axis::Momentum {
        return Err(Error::BasisMismatch { expected: "momentum" });
    }
    let mut rho = DensityMatrix::zeros(Axis::Momentum, sector, *grid, weight);
    let ps = grid.points();
    for i in 0..grid.n {
        for j in 0..grid.n {
            rho.values[(i, j)] = momentum_exact(ps[i], ps[j], t, sector, params, 1.0)?;
        }
    }
    Ok(rho)
}

// ---- timescales --------------------------------------------------------------------

/// Separation(s) at which the timescale formulas are evaluated.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimescaleQuery {
    pub delta_x: Option<f64>,
    pub delta_p: Option<f64>,
}

impl TimescaleQuery {
    pub fn validate(&self) -> Result<()> {
        let ok_x = self.delta_x.map(|v| v > 0.0);
        let ok_p = self.delta_p.map(|v| v > 0.0);
        if ok_x == Some(false) || ok_p == Some(false) {
            return Err(Error::InvalidParams("separations must be positive".into()));
        }
        if ok_x.is_none() && ok_p.is_none() {
            return Err(Error::InvalidParams(
                "timescale query needs at least one of delta_x, delta_p".into(),
            ));
        }
        Ok(())
    }
}

/// The five decoherence/relaxation timescale formulas. Infinities are
/// reported where a formula degenerates (gamma = 0 or eps = 0).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimescaleReport {
    /// Position-separation coherence time, order-of-magnitude form.
    pub position_estimate: Option<f64>,
    /// Spin off-diagonal decay time (3 hbar^2 m gamma / 2 eps^2 kBT)^(1/3).
    pub spin_coherence: f64,
    /// Momentum-separation time in the strong-damping picture,
    /// m gamma / (2 kBT dp^2).
    pub momentum_prior: Option<f64>,
    /// Position-separation coherence time hbar^2/(2 m gamma kBT dx^2);
    /// algebraically identical to `position_estimate`.
    pub position_coherence: Option<f64>,
    /// Momentum-separation coherence time (3 m hbar^2/(2 gamma kBT dp^2))^(1/3).
    pub momentum_coherence: Option<f64>,
}

fn position_decoherence_time(params: &PhysicalParams, dx: f64) -> f64 {
    let denom = 2.0 * params.mass * params.damping * params.thermal_energy * dx * dx;
    if denom == 0.0 {
        f64::INFINITY
    } else {
        params.hbar * params.hbar / denom
    }
}

/// Evaluate the five timescale formulas for one query.
pub fn timescales(query: &TimescaleQuery, params: &PhysicalParams) -> Result<TimescaleReport> {
    query.validate()?;
    let (m, eps, gamma, hbar) = (
        params.mass,
        params.coupling,
        params.damping,
        params.hbar,
    );
    let kbt = params.thermal_energy;
    let position = query.delta_x.map(|dx| position_decoherence_time(params, dx));
    let spin = if eps == 0.0 || kbt == 0.0 {
        f64::INFINITY
    } else {
        (3.0 * hbar * hbar * m * gamma / (2.0 * eps * eps * kbt)).cbrt()
    };
    let momentum_prior = query.delta_p.map(|dp| {
        let denom = 2.0 * kbt * dp * dp;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            m * gamma / denom
        }
    });
    let momentum = query.delta_p.map(|dp| {
        let denom = 2.0 * gamma * kbt * dp * dp;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            (3.0 * m * hbar * hbar / denom).cbrt()
        }
    });
    Ok(TimescaleReport {
        position_estimate: position,
        spin_coherence: spin,
        momentum_prior,
        position_coherence: position,
        momentum_coherence: momentum,
    })
}
