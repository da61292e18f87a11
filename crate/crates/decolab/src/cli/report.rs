//! Machine-readable run report. Struct field order fixes the JSON key order;
//! infinities serialize as the explicit sentinel "+inf".

use serde::{Serialize, Serializer};

use crate::analysis::{FitReport, PointerFit};
use crate::analytic::TimescaleReport;
use crate::cli::config::ExperimentConfig;

/// f64 wrapper whose JSON form is a number when finite and the string
/// "+inf"/"-inf" otherwise.
#[derive(Debug, Clone, Copy)]
pub struct Sentinel(pub f64);

impl Serialize for Sentinel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("+inf")
        } else if self.0 < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }
}

fn opt(v: Option<f64>) -> Option<Sentinel> {
    v.map(Sentinel)
}

#[derive(Debug, Clone, Serialize)]
pub struct TimescalesJson {
    pub position_estimate: Option<Sentinel>,
    pub spin_coherence: Sentinel,
    pub momentum_prior: Option<Sentinel>,
    pub position_coherence: Option<Sentinel>,
    pub momentum_coherence: Option<Sentinel>,
}

impl From<&TimescaleReport> for TimescalesJson {
    fn from(r: &TimescaleReport) -> Self {
        Self {
            position_estimate: opt(r.position_estimate),
            spin_coherence: Sentinel(r.spin_coherence),
            momentum_prior: opt(r.momentum_prior),
            position_coherence: opt(r.position_coherence),
            momentum_coherence: opt(r.momentum_coherence),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivedJson {
    pub diffusion: f64,
    pub tau_final: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SnapshotDeviation {
    pub t: f64,
    pub linf: f64,
    pub linf_relative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleJson {
    pub per_snapshot: Vec<SnapshotDeviation>,
    pub max_linf: f64,
    pub max_linf_relative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConservationJson {
    pub max_trace_drift: f64,
    pub max_hermiticity_error: f64,
    pub steps_taken: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentSample {
    pub t: f64,
    pub mean_x: f64,
    pub variance_x: f64,
    pub mean_p: f64,
    pub variance_p: f64,
    pub purity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpinCoherenceJson {
    /// e-folding time of the integrated diagonal magnitude.
    pub t_efold: Option<Sentinel>,
    /// Closed-form spin coherence timescale for these parameters.
    pub formula: Sentinel,
    pub ratio_to_formula: Option<Sentinel>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPointJson {
    pub value: f64,
    pub t_efold: Option<Sentinel>,
    pub fits: Vec<FitReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeJson {
    /// d ln(t_efold) / d ln(parameter) across the sweep.
    pub log_log_slope: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepJson {
    pub parameter: String,
    pub points: Vec<SweepPointJson>,
    pub efold_slope: Option<SlopeJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckJson {
    pub name: String,
    pub value: Sentinel,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub derived: DerivedJson,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timescales: Option<TimescalesJson>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<FitReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pointer_fits: Vec<PointerFit>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub moments: Vec<MomentSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conservation: Option<ConservationJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spin_coherence: Option<SpinCoherenceJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepJson>,
    pub checks: Vec<CheckJson>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        let params = config.params.build();
        Self {
            experiment: config.experiment.to_string(),
            config: config.clone(),
            derived: DerivedJson {
                diffusion: params.derived().diffusion,
                tau_final: params.tau(config.time.t_final),
            },
            warnings: Vec::new(),
            timescales: None,
            fits: Vec::new(),
            pointer_fits: Vec::new(),
            moments: Vec::new(),
            oracle: None,
            conservation: None,
            spin_coherence: None,
            sweep: None,
            checks: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn add_check(&mut self, name: &str, value: f64, threshold: f64, passed: bool) {
        self.checks.push(CheckJson {
            name: name.to_string(),
            value: Sentinel(value),
            threshold,
            passed,
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
