//! Physical parameters, grids, spin sectors, and the density-matrix container.
//!
//! Internal computations run in natural units (`hbar = kB = 1`, user-chosen
//! mass); SI constants are only used for the macroscopic timescale estimate.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// CODATA value of the reduced Planck constant, J s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// CODATA value of the Boltzmann constant, J/K.
pub const KB_SI: f64 = 1.380_649e-23;

/// Default statistical weight of one spin block for an initial equal
/// superposition (|+> + |->)/sqrt(2).
pub const EQUAL_SUPERPOSITION_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitSystem {
    Natural,
    Si,
}

/// All model constants. `coupling` is the coefficient of the x sigma_z term
/// (a force), `damping` the bath coupling rate, `thermal_energy` = kB T.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub mass: f64,
    pub coupling: f64,
    pub damping: f64,
    pub thermal_energy: f64,
    pub packet_width: f64,
    pub hbar: f64,
    pub kb: f64,
    pub cutoff_freq: f64,
    pub unit_system: UnitSystem,
}

impl PhysicalParams {
    /// Natural-unit parameter set (hbar = kB = mass = 1) with the given bath.
    pub fn natural(coupling: f64, damping: f64, thermal_energy: f64, packet_width: f64) -> Self {
        Self {
            mass: 1.0,
            coupling,
            damping,
            thermal_energy,
            packet_width,
            hbar: 1.0,
            kb: 1.0,
            cutoff_freq: 1.0_f64.max(200.0 * damping),
            unit_system: UnitSystem::Natural,
        }
    }

    /// Check invariants. Returns warnings for conditions that are suspicious
    /// but allowed (small bath cutoff).
    pub fn validate(&self) -> Result<Vec<String>> {
        let strictly_positive = [
            ("mass", self.mass),
            ("thermal_energy", self.thermal_energy),
            ("packet_width", self.packet_width),
            ("hbar", self.hbar),
            ("kb", self.kb),
            ("cutoff_freq", self.cutoff_freq),
        ];
        for (name, v) in strictly_positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("coupling", self.coupling), ("damping", self.damping)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be >= 0, got {v}")));
            }
        }
        let mut warnings = Vec::new();
        if self.damping > 0.0 && self.cutoff_freq < 100.0 * self.damping {
            warnings.push(format!(
                "cutoff_freq = {} is below 100 x damping = {}; the Ohmic bath model \
                 assumes a large cutoff",
                self.cutoff_freq,
                100.0 * self.damping
            ));
        }
        Ok(warnings)
    }

    pub fn derived(&self) -> DerivedCoefficients {
        DerivedCoefficients {
            diffusion: 8.0 * self.mass * self.damping * self.thermal_energy,
        }
    }

    /// Dimensionless time tau = damping * t.
    pub fn tau(&self, t: f64) -> f64 {
        self.damping * t
    }
}

/// Coefficients derived from the base parameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DerivedCoefficients {
    /// Momentum-diffusion constant D = 8 m gamma kB T.
    pub diffusion: f64,
}

/// Bath spectral density J(omega) = gamma * omega * exp(-omega/omega_c),
/// linear at small frequencies with a high-frequency cutoff.
pub fn spectral_density(omega: f64, params: &PhysicalParams) -> Result<f64> {
    if omega < 0.0 || !omega.is_finite() {
        return Err(Error::InvalidParams(format!(
            "spectral density requires omega >= 0, got {omega}"
        )));
    }
    Ok(params.damping * omega * (-omega / params.cutoff_freq).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Position,
    Momentum,
}

/// Uniform 1-D grid over one axis, endpoints inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub axis: Axis,
    /// Exact spacing of the conjugate grid this one was derived from, kept so
    /// that dual().dual() reproduces the source spacing bit-for-bit.
    #[serde(skip)]
    source_spacing: Option<f64>,
}

impl Grid {
    pub fn position(n: usize, min: f64, max: f64) -> Result<Self> {
        Self::new(n, min, max, Axis::Position)
    }

    pub fn new(n: usize, min: f64, max: f64, axis: Axis) -> Result<Self> {
        if n < 16 {
            return Err(Error::InvalidParams(format!("grid needs n >= 16, got {n}")));
        }
        if !(max > min) {
            return Err(Error::InvalidParams(format!(
                "grid needs max > min, got [{min}, {max}]"
            )));
        }
        Ok(Self { n, min, max, axis, source_spacing: None })
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    pub fn extent(&self) -> f64 {
        self.max - self.min
    }

    /// Conjugate grid: spacing_p = 2 pi hbar / (n spacing_x), centered on zero.
    /// Applying `dual` twice reproduces the original spacing exactly.
    pub fn dual(&self, hbar: f64) -> Grid {
        let spacing = match self.source_spacing {
            Some(s) => s,
            None => TAU * hbar / (self.n as f64 * self.spacing()),
        };
        let half = (self.n / 2) as f64;
        let min = -half * spacing;
        let max = min + (self.n - 1) as f64 * spacing;
        Grid {
            n: self.n,
            min,
            max,
            axis: match self.axis {
                Axis::Position => Axis::Momentum,
                Axis::Momentum => Axis::Position,
            },
            source_spacing: Some(self.spacing()),
        }
    }
}

/// Spin block of the full density matrix: the two sigma_z eigensectors and
/// the spin-off-diagonal (cross) block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinSector {
    Plus,
    Minus,
    Cross,
}

impl SpinSector {
    /// Sign of sigma_z in this sector; the cross block carries no sign.
    pub fn sign(&self) -> Option<f64> {
        match self {
            SpinSector::Plus => Some(1.0),
            SpinSector::Minus => Some(-1.0),
            SpinSector::Cross => None,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        !matches!(self, SpinSector::Cross)
    }
}

/// Complex matrix over one grid axis: entry (i, j) ~ rho(a_i, a_j).
///
/// `values` is normalized so its Riemann trace is the sector population
/// divided by `weight`; physical traces are `weight` times the Riemann trace.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub basis: Axis,
    pub sector: SpinSector,
    pub grid: Grid,
    pub values: Array2<C64>,
    pub weight: f64,
}

impl DensityMatrix {
    pub fn zeros(basis: Axis, sector: SpinSector, grid: Grid, weight: f64) -> Self {
        let n = grid.n;
        Self { basis, sector, grid, values: Array2::zeros((n, n)), weight }
    }

    /// Riemann trace of `values` (no weight factor).
    pub fn values_trace(&self) -> C64 {
        let dx = self.grid.spacing();
        self.values.diag().iter().sum::<C64>() * dx
    }

    /// Physical trace: Riemann trace times the sector weight.
    pub fn trace(&self) -> C64 {
        self.values_trace() * self.weight
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// max |rho_ij - conj(rho_ji)|, normalized by max |rho|.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.grid.n;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.values[(i, j)] - self.values[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        let scale = self.max_abs();
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    }

    /// Largest |rho| on the outermost grid ring, times spacing^2, relative to
    /// the Riemann trace; used by the boundary-flux watchdog.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.grid.n;
        let dx = self.grid.spacing();
        let mut sum = 0.0;
        for i in 0..n {
            sum += self.values[(0, i)].norm()
                + self.values[(n - 1, i)].norm()
                + self.values[(i, 0)].norm()
                + self.values[(i, n - 1)].norm();
        }
        sum * dx * dx
    }
}

/// Mean and relative coordinates: R = (x + x')/2, r = x - x'.
pub fn position_to_mean_rel(x: f64, xp: f64) -> (f64, f64) {
    ((x + xp) / 2.0, x - xp)
}

/// Inverse of [`position_to_mean_rel`].
pub fn mean_rel_to_position(mean: f64, rel: f64) -> (f64, f64) {
    (mean + rel / 2.0, mean - rel / 2.0)
}

/// Initial Gaussian wave packet of width sigma, zero mean momentum:
/// psi(x) = (pi sigma^2)^(-1/4) exp(-x^2 / 2 sigma^2), so the position
/// variance of |psi|^2 is sigma^2/2. `values` is renormalized to unit
/// Riemann trace; the sector weight defaults to the equal-superposition 1/2.
pub fn gaussian_initial_state(
    params: &PhysicalParams,
    grid: &Grid,
    sector: SpinSector,
) -> Result<DensityMatrix> {
    if grid.axis != Axis::Position {
        return Err(Error::BasisMismatch { expected: "position" });
    }
    let sigma = params.packet_width;
    if grid.extent() < 8.0 * sigma {
        return Err(Error::GridTooSmall(format!(
            "extent {} < 8 sigma = {}",
            grid.extent(),
            8.0 * sigma
        )));
    }
    let xs = grid.points();
    let psi: Vec<f64> = xs
        .iter()
        .map(|&x| (PI * sigma * sigma).powf(-0.25) * (-x * x / (2.0 * sigma * sigma)).exp())
        .collect();
    let dx = grid.spacing();
    let norm: f64 = psi.iter().map(|p| p * p).sum::<f64>() * dx;
    let n = grid.n;
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            values[(i, j)] = C64::new(psi[i] * psi[j] / norm, 0.0);
        }
    }
    let rho = DensityMatrix {
        basis: Axis::Position,
        sector,
        grid: *grid,
        values,
        weight: EQUAL_SUPERPOSITION_WEIGHT,
    };
    // The packet must not touch the outer five cells of the box.
    let peak = rho.max_abs();
    let mut edge: f64 = 0.0;
    for k in 0..5.min(n) {
        for i in 0..n {
            edge = edge
                .max(rho.values[(k, i)].norm())
                .max(rho.values[(n - 1 - k, i)].norm())
                .max(rho.values[(i, k)].norm())
                .max(rho.values[(i, n - 1 - k)].norm());
        }
    }
    if edge > 1e-10 * peak {
        return Err(Error::GridTooSmall(format!(
            "packet support reaches within 5 cells of the boundary (edge/peak = {:.2e})",
            edge / peak
        )));
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PhysicalParams {
        PhysicalParams::natural(0.5, 1e-3, 10.0, 1.0)
    }

    #[test]
    fn spectral_density_examples() {
        let mut p = params();
        p.damping = 1.0;
        p.cutoff_freq = 250.0;
        assert_eq!(spectral_density(0.0, &p).unwrap(), 0.0);
        let at_cutoff = spectral_density(p.cutoff_freq, &p).unwrap();
        assert!((at_cutoff - p.cutoff_freq * (-1.0_f64).exp()).abs() < 1e-12);
        // linear regime at omega << omega_c
        p.damping = 2.0;
        let omega = 1e-3 * p.cutoff_freq;
        let j = spectral_density(omega, &p).unwrap();
        assert!((j / (2.0 * omega) - 1.0).abs() < 1.1e-3);
        assert!(spectral_density(-1.0, &p).is_err());
    }

    #[test]
    fn mean_rel_round_trip() {
        assert_eq!(position_to_mean_rel(1.0, 1.0), (1.0, 0.0));
        assert_eq!(position_to_mean_rel(2.0, 0.0), (1.0, 2.0));
        let (mean, rel) = position_to_mean_rel(0.3, -1.7);
        let (x, xp) = mean_rel_to_position(mean, rel);
        assert!((x - 0.3).abs() < 1e-15 && (xp + 1.7).abs() < 1e-15);
    }

    #[test]
    fn gaussian_state_moments_and_purity() {
        let grid = Grid::position(256, -10.0, 10.0).unwrap();
        let p = params();
        let rho = gaussian_initial_state(&p, &grid, SpinSector::Plus).unwrap();
        let dx = grid.spacing();
        let xs = grid.points();
        let trace: f64 = rho.values.diag().iter().map(|v| v.re).sum::<f64>() * dx;
        assert!((trace - 1.0).abs() < 1e-12);
        let mean: f64 = xs
            .iter()
            .zip(rho.values.diag().iter())
            .map(|(x, v)| x * v.re)
            .sum::<f64>()
            * dx;
        assert!(mean.abs() < 1e-12);
        let var: f64 = xs
            .iter()
            .zip(rho.values.diag().iter())
            .map(|(x, v)| x * x * v.re)
            .sum::<f64>()
            * dx;
        assert!((var - 0.5).abs() < 1e-10, "variance {var} != sigma^2/2");
        let purity: f64 =
            rho.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * dx * dx;
        assert!((purity - 1.0).abs() < 1e-6, "purity {purity}");
        assert!(rho.hermiticity_error() < 1e-12);
    }

    #[test]
    fn gaussian_state_rejects_small_grid() {
        let p = params();
        let grid = Grid::position(32, -3.0, 3.0).unwrap();
        assert!(matches!(
            gaussian_initial_state(&p, &grid, SpinSector::Plus),
            Err(Error::GridTooSmall(_))
        ));
        // extent passes the 8 sigma rule but support still reaches the edge
        let grid = Grid::position(16, -4.0, 4.0).unwrap();
        assert!(gaussian_initial_state(&p, &grid, SpinSector::Plus).is_err());
    }

    #[test]
    fn momentum_grid_spacing() {
        let grid = Grid::position(256, -10.0, 10.0).unwrap();
        let dual = grid.dual(1.0);
        assert_eq!(dual.axis, Axis::Momentum);
        let expected = TAU / (256.0 * grid.spacing());
        assert!((dual.spacing() - expected).abs() < 1e-15 * expected);
    }

    #[test]
    fn dual_round_trip_is_exact() {
        for &(n, min, max) in &[
            (256_usize, -10.0, 10.0),
            (128, -7.3, 11.9),
            (371, -0.013, 0.57),
            (1024, -88.8, 88.8),
        ] {
            let grid = Grid::new(n, min, max, Axis::Position).unwrap();
            let back = grid.dual(1.0).dual(1.0);
            assert_eq!(back.spacing(), grid.spacing(), "n={n} [{min},{max}]");
            assert_eq!(back.axis, Axis::Position);
        }
    }

    #[test]
    fn params_validation() {
        let mut p = params();
        assert!(p.validate().unwrap().is_empty());
        p.cutoff_freq = 10.0 * p.damping;
        assert_eq!(p.validate().unwrap().len(), 1);
        p.mass = -1.0;
        assert!(p.validate().is_err());
        let mut q = params();
        q.damping = 0.0;
        assert!(q.validate().unwrap().is_empty());
        assert_eq!(q.derived().diffusion, 0.0);
    }

    #[test]
    fn derived_diffusion() {
        let p = params();
        assert!((p.derived().diffusion - 8.0 * 1e-3 * 10.0).abs() < 1e-15);
        assert!((p.tau(5.0) - 5e-3).abs() < 1e-18);
    }
}
