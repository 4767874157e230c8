//! Residual statistics and the machine-readable conservation report.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::constraint::ConstrainedSystem;
use crate::dynamics::{integrate, IntegrateOptions, Monitor};
use crate::error::Result;
use crate::geometry::TangentState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// Max and mean of absolute residuals over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionStats {
    pub max_residual: f64,
    pub mean_residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub count: usize,
}

impl ConditionStats {
    /// A NaN residual fails; an empty set passes vacuously.
    pub fn from_residuals(residuals: &[f64], tolerance: f64) -> Self {
        let mut max = 0.0f64;
        let mut sum = 0.0;
        let mut nan = false;
        for r in residuals {
            let r = r.abs();
            nan |= r.is_nan();
            max = max.max(r);
            sum += r;
        }
        let mean = if residuals.is_empty() {
            0.0
        } else {
            sum / residuals.len() as f64
        };
        ConditionStats {
            max_residual: if nan { f64::NAN } else { max },
            mean_residual: mean,
            tolerance,
            verdict: Verdict::from_bool(!nan && max <= tolerance),
            count: residuals.len(),
        }
    }
}

/// Integration settings for drift monitoring.
#[derive(Debug, Clone)]
pub struct DriftRun {
    pub initial: TangentState,
    pub t_end: f64,
    pub step: f64,
    pub tolerance: f64,
    pub project_drift: bool,
}

impl DriftRun {
    pub fn new(initial: TangentState, t_end: f64, step: f64, tolerance: f64) -> Self {
        DriftRun {
            initial,
            t_end,
            step,
            tolerance,
            project_drift: false,
        }
    }
}

/// `max_t |ψ(t) − ψ(0)|` along one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftStats {
    pub initial_value: f64,
    pub max_drift: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub t_end: f64,
    pub step: f64,
}

/// Integrates from `run.initial` and measures the drift of `quantity`.
pub fn measure_drift(
    system: &ConstrainedSystem,
    run: &DriftRun,
    quantity: impl Fn(&ConstrainedSystem, &TangentState) -> Result<f64>,
) -> Result<DriftStats> {
    let mut options = IntegrateOptions::new(run.t_end, run.step);
    options.project_drift = run.project_drift;
    options.monitors.push(Monitor::new("quantity", quantity));
    let trajectory = integrate(system, &run.initial, &options)?;
    let max_drift = trajectory.monitor_drift(0);
    Ok(DriftStats {
        initial_value: trajectory.samples[0].monitors[0],
        max_drift,
        tolerance: run.tolerance,
        verdict: Verdict::from_bool(max_drift <= run.tolerance),
        t_end: run.t_end,
        step: run.step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleInfo {
    pub seed: u64,
    pub count: usize,
}

/// Gating conditions and drifts decide the verdict; diagnostics, flags and
/// notes are informational.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub check: String,
    pub subject: String,
    pub verdict: Verdict,
    pub samples: SampleInfo,
    pub conditions: BTreeMap<String, ConditionStats>,
    pub diagnostics: BTreeMap<String, ConditionStats>,
    pub drift: BTreeMap<String, DriftStats>,
    pub flags: BTreeMap<String, bool>,
    pub extra: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
}

impl ConservationReport {
    pub fn new(check: impl Into<String>, subject: impl Into<String>, seed: u64, count: usize) -> Self {
        ConservationReport {
            command: None,
            scenario: None,
            check: check.into(),
            subject: subject.into(),
            verdict: Verdict::Pass,
            samples: SampleInfo { seed, count },
            conditions: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            drift: BTreeMap::new(),
            flags: BTreeMap::new(),
            extra: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn condition(&mut self, name: &str, residuals: &[f64], tolerance: f64) -> &ConditionStats {
        let stats = ConditionStats::from_residuals(residuals, tolerance);
        self.conditions.insert(name.to_string(), stats);
        self.refresh();
        &self.conditions[name]
    }

    pub fn diagnostic(&mut self, name: &str, residuals: &[f64], tolerance: f64) -> &ConditionStats {
        let stats = ConditionStats::from_residuals(residuals, tolerance);
        self.diagnostics.insert(name.to_string(), stats);
        &self.diagnostics[name]
    }

    pub fn add_drift(&mut self, name: &str, stats: DriftStats) {
        self.drift.insert(name.to_string(), stats);
        self.refresh();
    }

    pub fn flag(&mut self, name: &str, value: bool) {
        self.flags.insert(name.to_string(), value);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    pub fn max_of(&self, name: &str) -> Option<f64> {
        self.conditions
            .get(name)
            .or_else(|| self.diagnostics.get(name))
            .map(|s| s.max_residual)
    }

    fn refresh(&mut self) {
        let ok =
            self.conditions.values().all(|c| c.verdict.passed()) && self.drift.values().all(|d| d.verdict.passed());
        self.verdict = Verdict::from_bool(ok);
    }
}

/// "Any two imply the third": when two maxima are within `tol`, the third
/// must be within `3·tol`.
pub fn two_imply_third(maxima: [f64; 3], tol: f64) -> bool {
    (0..3).all(|i| {
        let others_small = (0..3).filter(|&j| j != i).all(|j| maxima[j] <= tol);
        !others_small || maxima[i] <= 3.0 * tol
    })
}
