use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use nonholo_core::conservation::{
    higher_degree_check, noether_triple, quadratic_integral_check, quasi_symmetry_check, reaction_annihilator_test,
    restricted_tensor_check, thm_int_check, ConservationReport, DriftRun, TensorKind, Verdict,
};
use nonholo_core::dynamics::{integrate, IntegrateOptions, Monitor, Trajectory};
use nonholo_core::geometry::derived_flag;
use nonholo_core::scenarios::{builtin, Scenario};
use nonholo_core::{Error, Result};

use crate::Format;

/// Drift allowed for energy, momenta and declared integrals along a run.
pub const INTEGRAL_DRIFT_TOL: f64 = 1e-8;
/// Largest `|v^a|` allowed along a run.
pub const CONSTRAINT_DRIFT_TOL: f64 = 1e-6;
/// Upper bound on the condition number of the `D̃` block.
pub const DTILDE_CONDITION_MAX: f64 = 1e8;

#[derive(Debug, Clone)]
pub enum Source {
    Builtin(String),
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    pub source: Source,
    pub t_end: Option<f64>,
    pub step: Option<f64>,
    pub samples: usize,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub project_drift: bool,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_bool(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

struct Loaded {
    scenario: Scenario,
    seed: u64,
    tol: f64,
    t_end: f64,
    step: f64,
}

impl Loaded {
    fn new(config: &RunConfig) -> Result<Self> {
        let scenario = match &config.source {
            Source::Builtin(name) => builtin(name)?,
            Source::File(path) => Scenario::load(path)?,
        };
        let d = &scenario.defaults;
        Ok(Loaded {
            seed: config.seed.unwrap_or(d.seed),
            tol: config.tol.unwrap_or(d.tol),
            t_end: config.t_end.unwrap_or(d.t_end),
            step: config.step.unwrap_or(d.step),
            scenario,
        })
    }

    fn run(&self, config: &RunConfig) -> DriftRun {
        let mut run = DriftRun::new(self.scenario.initial.clone(), self.t_end, self.step, INTEGRAL_DRIFT_TOL);
        run.project_drift = config.project_drift;
        run
    }
}

fn io_error(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `text` to `path`, or to standard output when there is none.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn report_csv(report: &ConservationReport) -> String {
    let mut out = String::from("kind,name,max_residual,mean_residual,tolerance,verdict\n");
    let verdict = |v: Verdict| if v.passed() { "pass" } else { "fail" };
    for (kind, map) in [("condition", &report.conditions), ("diagnostic", &report.diagnostics)] {
        for (name, c) in map {
            out.push_str(&format!(
                "{kind},{name},{:.16e},{:.16e},{:.16e},{}\n",
                c.max_residual,
                c.mean_residual,
                c.tolerance,
                verdict(c.verdict)
            ));
        }
    }
    for (name, d) in &report.drift {
        out.push_str(&format!(
            "drift,{name},{:.16e},,{:.16e},{}\n",
            d.max_drift,
            d.tolerance,
            verdict(d.verdict)
        ));
    }
    out
}

fn human_summary(report: &ConservationReport) {
    let verdict = |v: Verdict| if v.passed() { "pass" } else { "fail" };
    println!(
        "{} {} on {}: {}",
        report.check,
        report.subject,
        report.scenario.as_deref().unwrap_or("?"),
        verdict(report.verdict)
    );
    for (name, c) in &report.conditions {
        println!(
            "  {name:<24} max {:.3e}  tol {:.1e}  {}",
            c.max_residual,
            c.tolerance,
            verdict(c.verdict)
        );
    }
    for (name, d) in &report.drift {
        println!(
            "  drift {name:<18} max {:.3e}  tol {:.1e}  {}",
            d.max_drift,
            d.tolerance,
            verdict(d.verdict)
        );
    }
}

fn finish(config: &RunConfig, loaded: &Loaded, mut report: ConservationReport) -> Result<Outcome> {
    report.command = Some(config.command.to_string());
    report.scenario = Some(loaded.scenario.name.clone());
    let text = match config.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report),
        Format::Csv => report_csv(&report),
    };
    emit(config.output.as_deref(), &text)?;
    if config.output.is_some() {
        human_summary(&report);
    }
    Ok(Outcome::from_bool(report.passed()))
}

fn unknown(kind: &str, name: &str, available: impl Iterator<Item = String>) -> Error {
    let list: Vec<String> = available.collect();
    Error::Scenario {
        pointer: format!("/{kind}"),
        message: format!("no entry named `{name}`; available: {}", list.join(", ")),
    }
}

pub fn noether(config: &RunConfig, field: &str) -> Result<Outcome> {
    let loaded = Loaded::new(config)?;
    let s = &loaded.scenario;
    let cand = s
        .fields
        .get(field)
        .ok_or_else(|| unknown("fields", field, s.fields.keys().cloned()))?;
    let samples = s.samples(config.samples, loaded.seed)?;
    let off = s.off_samples(config.samples, loaded.seed)?;
    let run = loaded.run(config);
    let mut report = noether_triple(&s.system, cand, &samples, loaded.tol, Some(&run))?;
    let annihilator = reaction_annihilator_test(&s.system, &cand.field, field, &samples, loaded.tol)?;
    let quasi = quasi_symmetry_check(&s.system, cand, &samples, &off, loaded.tol)?;
    report.extra.insert(
        "reaction_annihilator".into(),
        serde_json::to_value(&annihilator).expect("serializable"),
    );
    report.extra.insert(
        "quasi_symmetry".into(),
        serde_json::to_value(&quasi).expect("serializable"),
    );
    finish(config, &loaded, report)
}

pub fn integral(config: &RunConfig, name: &str) -> Result<Outcome> {
    let loaded = Loaded::new(config)?;
    let s = &loaded.scenario;
    let samples = s.samples(config.samples, loaded.seed)?;
    let run = loaded.run(config);
    let tol = loaded.tol;
    let report = if let Some(integral) = s.integrals.get(name) {
        let mut r = thm_int_check(&s.system, &integral.observable, name, &samples, tol, Some(&run))?;
        r.extra.insert("source".into(), json!(integral.source));
        r
    } else if let Some(tensor) = s.tensors.get(name) {
        match (tensor.kind, tensor.degree) {
            (TensorKind::Ambient, _) => restricted_tensor_check(&s.system, tensor, &samples, tol, Some(&run))?,
            (TensorKind::Constrained, 2) => quadratic_integral_check(&s.system, tensor, &samples, tol, Some(&run))?,
            (TensorKind::Constrained, _) => higher_degree_check(&s.system, tensor, &samples, tol, Some(&run))?,
        }
    } else {
        let names = s.integrals.keys().chain(s.tensors.keys()).cloned();
        return Err(unknown("integrals", name, names));
    };
    finish(config, &loaded, report)
}

fn distinct_or_null<T: Ord + Clone + Serialize>(set: &BTreeSet<T>) -> Value {
    if set.len() == 1 {
        serde_json::to_value(set.iter().next().expect("one element")).expect("serializable")
    } else {
        Value::Null
    }
}

pub fn frame(config: &RunConfig) -> Result<Outcome> {
    let loaded = Loaded::new(config)?;
    let s = &loaded.scenario;
    let system = &s.system;
    let (n, m) = (s.n(), s.m());
    let samples = s.samples(config.samples, loaded.seed)?;

    let names = [
        "omega_mixed",
        "omega_distribution",
        "duality",
        "metric_cross",
        "vertical_lift",
        "tangency",
        "pullback",
    ];
    let mut residuals: BTreeMap<&str, Vec<f64>> = names.iter().map(|k| (*k, Vec::new())).collect();
    let mut condition = Vec::new();
    let mut kernel_formula = Vec::new();
    let mut kernel_dims = BTreeSet::new();
    let mut pullback_ranks = BTreeSet::new();
    let mut flags = BTreeSet::new();
    for state in &samples.states {
        let frame = system.adapted_frame(state)?;
        let r = &frame.residuals;
        for (k, v) in names.iter().zip([
            r.omega_mixed,
            r.omega_distribution,
            r.duality,
            r.metric_cross,
            r.vertical_lift,
            r.tangency,
            r.pullback,
        ]) {
            residuals.get_mut(k).expect("known key").push(v);
        }
        condition.push(r.dtilde_condition);
        let kernel = frame.characteristic_kernel();
        kernel_formula.push(kernel.dimension as f64 - ((n - m) as f64 - kernel.rank_omega as f64));
        kernel_dims.insert(kernel.dimension);
        pullback_ranks.insert(frame.pullback_blocks().rank);
        flags.insert(derived_flag(system.distribution(), &state.q, n)?);
    }

    let mut report = ConservationReport::new("frame", &s.name, samples.seed, samples.len());
    for (k, v) in &residuals {
        report.condition(k, v, loaded.tol);
    }
    report.condition("dtilde_condition", &condition, DTILDE_CONDITION_MAX);
    report.condition("kernel_dimension", &kernel_formula, 0.0);
    let nonintegrable = flags.iter().all(|f| f.last() == Some(&n));
    let integrable = flags.iter().all(|f| f.iter().all(|&r| r == m));
    report.flag("maximally_nonintegrable", nonintegrable);
    report.flag("two_step", nonintegrable && flags.iter().all(|f| f.len() <= 2));
    report.flag("integrable", integrable);
    report.extra.insert("n".into(), json!(n));
    report.extra.insert("m".into(), json!(m));
    report
        .extra
        .insert("kernel_dimension".into(), distinct_or_null(&kernel_dims));
    report.extra.insert("kernel_dimensions".into(), json!(kernel_dims));
    report
        .extra
        .insert("pullback_rank".into(), distinct_or_null(&pullback_ranks));
    report.extra.insert("derived_flag".into(), distinct_or_null(&flags));
    report.extra.insert("derived_flags".into(), json!(flags));
    finish(config, &loaded, report)
}

#[derive(Debug, Serialize)]
struct DriftEntry {
    value: f64,
    tolerance: f64,
    verdict: Verdict,
}

impl DriftEntry {
    fn new(value: f64, tolerance: f64) -> Self {
        DriftEntry {
            value,
            tolerance,
            verdict: Verdict::from_bool(value <= tolerance),
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    command: &'static str,
    scenario: String,
    t_end: f64,
    step: f64,
    project_drift: bool,
    rows: usize,
    verdict: Verdict,
    energy_drift: DriftEntry,
    constraint_drift: DriftEntry,
    monitor_drifts: BTreeMap<String, DriftEntry>,
}

impl SimulationSummary {
    fn new(config: &RunConfig, loaded: &Loaded, trajectory: &Trajectory) -> Self {
        let energy_drift = DriftEntry::new(trajectory.energy_drift(), INTEGRAL_DRIFT_TOL);
        let constraint_drift = DriftEntry::new(trajectory.constraint_drift(), CONSTRAINT_DRIFT_TOL);
        let monitor_drifts: BTreeMap<String, DriftEntry> = trajectory
            .monitor_names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                (
                    name.clone(),
                    DriftEntry::new(trajectory.monitor_drift(i), INTEGRAL_DRIFT_TOL),
                )
            })
            .collect();
        let pass = energy_drift.verdict.passed()
            && constraint_drift.verdict.passed()
            && monitor_drifts.values().all(|d| d.verdict.passed());
        SimulationSummary {
            command: config.command,
            scenario: loaded.scenario.name.clone(),
            t_end: loaded.t_end,
            step: loaded.step,
            project_drift: config.project_drift,
            rows: trajectory.samples.len(),
            verdict: Verdict::from_bool(pass),
            energy_drift,
            constraint_drift,
            monitor_drifts,
        }
    }

    fn print(&self) {
        let verdict = |v: Verdict| if v.passed() { "pass" } else { "fail" };
        println!(
            "simulate {} to t = {} (step {}): {}",
            self.scenario,
            self.t_end,
            self.step,
            verdict(self.verdict)
        );
        println!("  energy drift     {:.3e}", self.energy_drift.value);
        println!("  constraint drift {:.3e}", self.constraint_drift.value);
        for (name, d) in &self.monitor_drifts {
            println!("  drift {name:<10} {:.3e}", d.value);
        }
    }
}

fn summary_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

pub fn simulate(config: &RunConfig) -> Result<Outcome> {
    let loaded = Loaded::new(config)?;
    let s = &loaded.scenario;
    let mut options = IntegrateOptions::new(loaded.t_end, loaded.step);
    options.project_drift = config.project_drift;
    for (name, integral) in &s.integrals {
        if name != nonholo_core::scenarios::ENERGY {
            let obs = &integral.observable;
            options
                .monitors
                .push(Monitor::new(name.clone(), move |sys, st| obs.value(sys, st)));
        }
    }
    let trajectory = integrate(&s.system, &s.initial, &options)?;
    let summary = SimulationSummary::new(config, &loaded, &trajectory);

    match config.format.unwrap_or(Format::Csv) {
        Format::Csv => match &config.output {
            Some(path) => {
                let file = File::create(path).map_err(|e| io_error(path, e))?;
                let mut w = BufWriter::new(file);
                trajectory
                    .write_csv(&mut w)
                    .and_then(|_| w.flush())
                    .map_err(|e| io_error(path, e))?;
                emit(Some(&summary_path(path)), &to_json(&summary))?;
                summary.print();
            }
            None => {
                let mut out = BufWriter::new(io::stdout().lock());
                trajectory
                    .write_csv(&mut out)
                    .and_then(|_| out.flush())
                    .map_err(|e| io_error(Path::new("<stdout>"), e))?;
            }
        },
        Format::Json => {
            let columns: Vec<String> = trajectory.csv_header().split(',').map(str::to_string).collect();
            let rows: Vec<Vec<f64>> = trajectory
                .samples
                .iter()
                .map(|r| {
                    std::iter::once(r.t)
                        .chain(r.q.iter().copied())
                        .chain(r.u.iter().copied())
                        .chain(r.v.iter().copied())
                        .chain(std::iter::once(r.energy))
                        .chain(r.lambda.iter().copied())
                        .chain(r.monitors.iter().copied())
                        .collect()
                })
                .collect();
            let doc = json!({
                "summary": summary,
                "trajectory": {"columns": columns, "rows": rows},
            });
            emit(config.output.as_deref(), &to_json(&doc))?;
            if config.output.is_some() {
                summary.print();
            }
        }
    }
    Ok(Outcome::from_bool(summary.verdict.passed()))
}
