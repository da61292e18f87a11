//! Experiment configuration: a single flat JSON document, parsed strictly
//! (unknown keys are rejected).

use serde::{Deserialize, Serialize};

use crate::analysis::FitModel;
use crate::analytic::TimescaleQuery;
use crate::error::{Error, Result};
use crate::evolve::IntegratorConfig;
use crate::model::{Axis, Grid, PhysicalParams, SpinSector, UnitSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Evaluate,
    Evolve,
    Compare,
    Timescales,
    Sweep,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Evaluate => "evaluate",
            ExperimentKind::Evolve => "evolve",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Timescales => "timescales",
            ExperimentKind::Sweep => "sweep",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "half")]
    pub coupling: f64,
    #[serde(default = "milli")]
    pub damping: f64,
    #[serde(default = "ten")]
    pub thermal_energy: f64,
    #[serde(default = "one")]
    pub packet_width: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub kb: f64,
    #[serde(default)]
    pub cutoff_freq: Option<f64>,
    #[serde(default = "natural")]
    pub unit_system: UnitSystem,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn milli() -> f64 {
    1e-3
}
fn ten() -> f64 {
    10.0
}
fn natural() -> UnitSystem {
    UnitSystem::Natural
}

impl Default for ParamsConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl ParamsConfig {
    pub fn build(&self) -> PhysicalParams {
        PhysicalParams {
            mass: self.mass,
            coupling: self.coupling,
            damping: self.damping,
            thermal_energy: self.thermal_energy,
            packet_width: self.packet_width,
            hbar: self.hbar,
            kb: self.kb,
            cutoff_freq: self
                .cutoff_freq
                .unwrap_or_else(|| 1.0_f64.max(200.0 * self.damping)),
            unit_system: self.unit_system,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_min")]
    pub min: f64,
    #[serde(default = "default_max")]
    pub max: f64,
}

fn default_n() -> usize {
    256
}
fn default_min() -> f64 {
    -10.0
}
fn default_max() -> f64 {
    10.0
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: default_n(), min: default_min(), max: default_max() }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::position(self.n, self.min, self.max)
            .map_err(|e| Error::ConfigSemantics(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Upper bound on the integrator step; subdivided to hit snapshots.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "one")]
    pub t_final: f64,
    /// Number of evenly spaced snapshots (including t = 0)...
    #[serde(default)]
    pub snapshots: Option<usize>,
    /// ...or an explicit list of snapshot times.
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { dt: None, t_final: 1.0, snapshots: None, snapshot_times: None }
    }
}

impl TimeConfig {
    pub fn build(&self, grid: &Grid, params: &PhysicalParams) -> Result<IntegratorConfig> {
        let dt = self
            .dt
            .unwrap_or_else(|| crate::evolve::stable_dt(grid, params, 0.05));
        let mut config = match (&self.snapshot_times, self.snapshots) {
            (Some(times), _) => IntegratorConfig::new(dt, self.t_final, times.clone()),
            (None, Some(count)) => {
                IntegratorConfig::with_snapshot_count(dt, self.t_final, count)
            }
            (None, None) => IntegratorConfig::with_snapshot_count(dt, self.t_final, 11),
        };
        config.snapshot_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        config.validate(grid, params)?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceConfig {
    pub separation: f64,
    #[serde(default = "position")]
    pub basis: Axis,
    #[serde(default = "exp_t")]
    pub fit_model: FitModel,
}

fn position() -> Axis {
    Axis::Position
}
fn exp_t() -> FitModel {
    FitModel::ExpT
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct QueryConfig {
    #[serde(default)]
    pub delta_x: Option<f64>,
    #[serde(default)]
    pub delta_p: Option<f64>,
}

/// Which snapshots to dump as CSV when an output directory is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotOutput {
    None,
    #[default]
    Final,
    All,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Swept parameter: one of mass, coupling, damping, thermal_energy,
    /// packet_width.
    pub parameter: String,
    pub values: Vec<f64>,
    /// Experiment to run at each point.
    pub experiment: ExperimentKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default = "default_sector")]
    pub sector: SpinSector,
    #[serde(default)]
    pub coherence: Option<CoherenceConfig>,
    #[serde(default)]
    pub timescale_query: Option<QueryConfig>,
    /// Run a pointer fit on the snapshot nearest this time.
    #[serde(default)]
    pub pointer_fit_at: Option<f64>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub snapshot_output: SnapshotOutput,
    #[serde(default)]
    pub output_dir: Option<String>,
    /// Reserved; deterministic runs do not consume randomness.
    #[serde(default)]
    pub seed: u64,
}

fn default_sector() -> SpinSector {
    SpinSector::Plus
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            Error::ConfigSyntax(e.to_string())
        } else {
            // unknown keys, wrong types, missing required fields
            Error::ConfigSemantics(e.to_string())
        }
    })?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let params = self.params.build();
        params
            .validate()
            .map_err(|e| Error::ConfigSemantics(e.to_string()))?;
        let grid = self.grid.build()?;
        match self.experiment {
            ExperimentKind::Timescales => {
                let q = self.query()?;
                q.validate().map_err(|e| Error::ConfigSemantics(e.to_string()))?;
            }
            ExperimentKind::Sweep => {
                let sweep = self.sweep.as_ref().ok_or_else(|| {
                    Error::ConfigSemantics("sweep experiment needs a sweep block".into())
                })?;
                if sweep.values.is_empty() {
                    return Err(Error::ConfigSemantics("sweep values are empty".into()));
                }
                if sweep.experiment == ExperimentKind::Sweep {
                    return Err(Error::ConfigSemantics("nested sweeps are not supported".into()));
                }
                sweep_parameter(&sweep.parameter)?;
                // each point revalidates with its own parameter value
            }
            ExperimentKind::Evolve | ExperimentKind::Compare => {
                self.time.build(&grid, &params)?;
            }
            ExperimentKind::Evaluate => {}
        }
        Ok(())
    }

    pub fn query(&self) -> Result<TimescaleQuery> {
        let q = self.timescale_query.unwrap_or_default();
        Ok(TimescaleQuery { delta_x: q.delta_x, delta_p: q.delta_p })
    }

    /// Copy of this config with one physical parameter replaced.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<ExperimentConfig> {
        let mut out = self.clone();
        match name {
            "mass" => out.params.mass = value,
            "coupling" => out.params.coupling = value,
            "damping" => out.params.damping = value,
            "thermal_energy" => out.params.thermal_energy = value,
            "packet_width" => out.params.packet_width = value,
            other => {
                return Err(Error::ConfigSemantics(format!(
                    "unknown sweep parameter '{other}'"
                )))
            }
        }
        // keep the cutoff consistent when damping is swept
        if name == "damping" && out.params.cutoff_freq.is_none() {
            out.params.cutoff_freq = None;
        }
        Ok(out)
    }
}

pub fn sweep_parameter(name: &str) -> Result<()> {
    match name {
        "mass" | "coupling" | "damping" | "thermal_energy" | "packet_width" => Ok(()),
        other => Err(Error::ConfigSemantics(format!("unknown sweep parameter '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(r#"{"experiment": "evolve"}"#).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Evolve);
        assert_eq!(cfg.grid.n, 256);
        assert_eq!(cfg.sector, SpinSector::Plus);
        let params = cfg.params.build();
        assert_eq!(params.mass, 1.0);
        assert_eq!(params.damping, 1e-3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config(r#"{"experiment": "evolve", "bogus": 1}"#).unwrap_err();
        assert!(matches!(err, Error::ConfigSemantics(_)), "{err}");
    }

    #[test]
    fn syntax_error_has_its_own_code() {
        let err = parse_config(r#"{"experiment": "#).unwrap_err();
        assert!(matches!(err, Error::ConfigSyntax(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn stability_bound_rejected_with_code_3() {
        let cfg = r#"{
            "experiment": "evolve",
            "grid": {"n": 256, "min": -10.0, "max": 10.0},
            "time": {"dt": 0.5, "t_final": 1.0}
        }"#;
        let err = parse_config(cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }

    #[test]
    fn gamma_zero_accepted() {
        let cfg = parse_config(
            r#"{"experiment": "timescales",
                "params": {"damping": 0.0, "coupling": 0.0},
                "timescale_query": {"delta_x": 1.0}}"#,
        )
        .unwrap();
        let params = cfg.params.build();
        assert_eq!(params.damping, 0.0);
    }
}
