//! Scenario files and the built-in benchmark systems.
//!
//! A scenario bundles a constrained system with a sampling box, candidate
//! fields, integrals and tensors, and integration defaults. Built-ins are
//! stored as scenario JSON and go through the same loader as user files.

mod builtin;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;

use crate::conservation::{CTensor, CandidateField, Observable, TensorKind};
use crate::constraint::{ConstrainedSystem, ON_CONSTRAINT_TOL};
use crate::error::{Error, Result};
use crate::expr::{parse, Expr, SymbolTable};
use crate::geometry::sampling::{self, SampleSet, DEFAULT_SEED};
use crate::geometry::{point_values, Distribution, DomainBox, TangentState, VectorField, RANK_TOLERANCE};
use crate::lagrangian::Lagrangian;
use crate::linalg;

pub use builtin::{builtin, builtin_json, BUILTIN_NAMES};

/// Points of the box at which the constraint basis must have full rank.
pub const RANK_SAMPLES: usize = 256;

/// Name under which the energy is always available as an integral.
pub const ENERGY: &str = "energy";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    dimension: usize,
    coordinates: Vec<String>,
    lagrangian: RawLagrangian,
    constraints: RawConstraints,
    domain: RawDomain,
    #[serde(default)]
    fields: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    gauges: BTreeMap<String, String>,
    #[serde(default)]
    integrals: BTreeMap<String, String>,
    #[serde(default)]
    tensors: BTreeMap<String, RawTensor>,
    #[serde(default)]
    defaults: RawDefaults,
    #[serde(default)]
    initial: Option<RawInitial>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum RawLagrangian {
    Expression {
        source: String,
    },
    Mechanical {
        metric: Vec<Vec<String>>,
        potential: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    basis: Vec<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    min: Vec<f64>,
    max: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTensor {
    degree: usize,
    components: BTreeMap<String, String>,
    #[serde(default)]
    f: Option<String>,
    #[serde(default)]
    kind: Option<RawTensorKind>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawTensorKind {
    Constrained,
    Ambient,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefaults {
    t_end: Option<f64>,
    step: Option<f64>,
    seed: Option<u64>,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    q: Vec<f64>,
    u: Vec<f64>,
}

/// Integration and checking defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Defaults {
    pub t_end: f64,
    pub step: f64,
    pub seed: u64,
    pub tol: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            t_end: 10.0,
            step: 1e-3,
            seed: DEFAULT_SEED,
            tol: 1e-9,
        }
    }
}

/// A named scalar integral with its source text.
#[derive(Debug, Clone)]
pub struct Integral {
    pub source: String,
    pub observable: Observable,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub coordinates: Vec<String>,
    pub symbols: SymbolTable,
    pub system: ConstrainedSystem,
    pub domain: DomainBox,
    pub fields: BTreeMap<String, CandidateField>,
    pub integrals: BTreeMap<String, Integral>,
    pub tensors: BTreeMap<String, CTensor>,
    pub defaults: Defaults,
    pub initial: TangentState,
}

fn scenario_error(pointer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Scenario {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn pointer_from(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            serde_path_to_error::Segment::Seq { index } => out.push_str(&format!("/{index}")),
            serde_path_to_error::Segment::Map { key } => out.push_str(&format!("/{}", escape(key))),
            serde_path_to_error::Segment::Enum { variant } => out.push_str(&format!("/{}", escape(variant))),
            serde_path_to_error::Segment::Unknown => {}
        }
    }
    out
}

struct Builder<'a> {
    n: usize,
    symbols: &'a SymbolTable,
}

impl Builder<'_> {
    fn expr(&self, source: &str, pointer: &str) -> Result<Expr> {
        parse(source, self.symbols).map_err(|e| scenario_error(pointer, e.to_string()))
    }

    fn coordinate_expr(&self, source: &str, pointer: &str) -> Result<Expr> {
        let e = self.expr(source, pointer)?;
        if e.uses_any(self.n..2 * self.n) {
            return Err(scenario_error(pointer, "expression must depend on coordinates only"));
        }
        Ok(e)
    }

    fn field(&self, comps: &[String], pointer: &str) -> Result<VectorField> {
        if comps.len() != self.n {
            return Err(scenario_error(
                pointer,
                format!("expected {} components, found {}", self.n, comps.len()),
            ));
        }
        let exprs = comps
            .iter()
            .enumerate()
            .map(|(i, c)| self.coordinate_expr(c, &format!("{pointer}/{i}")))
            .collect::<Result<Vec<_>>>()?;
        VectorField::new(exprs).map_err(|e| scenario_error(pointer, e.to_string()))
    }
}

impl Scenario {
    /// Parses and validates scenario JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = pointer_from(e.path());
            scenario_error(pointer, e.inner().to_string())
        })?;
        Self::build(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn build(raw: RawScenario) -> Result<Self> {
        let n = raw.dimension;
        if n == 0 {
            return Err(scenario_error("/dimension", "dimension must be positive"));
        }
        if raw.coordinates.len() != n {
            return Err(scenario_error(
                "/coordinates",
                format!("expected {n} coordinate names, found {}", raw.coordinates.len()),
            ));
        }
        let symbols = SymbolTable::for_coordinates(&raw.coordinates)
            .map_err(|e| scenario_error("/coordinates", e.to_string()))?;
        let b = Builder { n, symbols: &symbols };

        let domain = DomainBox::new(raw.domain.min.clone(), raw.domain.max.clone())
            .map_err(|e| scenario_error("/domain", e.to_string()))?;
        if domain.dim() != n {
            return Err(scenario_error("/domain", format!("box must have {n} bounds")));
        }
        let points = sampling::points(&domain, RANK_SAMPLES, DEFAULT_SEED);

        let lagrangian = match &raw.lagrangian {
            RawLagrangian::Expression { source } => {
                let e = b.expr(source, "/lagrangian/source")?;
                Lagrangian::general(e, n).map_err(|e| scenario_error("/lagrangian/source", e.to_string()))?
            }
            RawLagrangian::Mechanical { metric, potential } => {
                if metric.len() != n || metric.iter().any(|r| r.len() != n) {
                    return Err(scenario_error("/lagrangian/metric", format!("metric must be {n}x{n}")));
                }
                let rows = metric
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        r.iter()
                            .enumerate()
                            .map(|(j, s)| b.coordinate_expr(s, &format!("/lagrangian/metric/{i}/{j}")))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let phi = b.coordinate_expr(potential, "/lagrangian/potential")?;
                let l =
                    Lagrangian::mechanical(rows, phi, n).map_err(|e| scenario_error("/lagrangian", e.to_string()))?;
                l.require_mechanical()?.validate_at(&points)?;
                l
            }
        };

        if raw.constraints.basis.is_empty() {
            return Err(scenario_error(
                "/constraints/basis",
                "basis must contain at least one vector",
            ));
        }
        let basis = raw
            .constraints
            .basis
            .iter()
            .enumerate()
            .map(|(k, comps)| b.field(comps, &format!("/constraints/basis/{k}")))
            .collect::<Result<Vec<_>>>()?;
        let distribution = Distribution::new(basis).map_err(|e| scenario_error("/constraints/basis", e.to_string()))?;
        let m = distribution.rank();
        if m > n {
            return Err(scenario_error(
                "/constraints/basis",
                format!("{m} vectors exceed dimension {n}"),
            ));
        }
        for q in &points {
            let mat = distribution.matrix_at(&point_values(q))?;
            let rank = linalg::numerical_rank(&mat, RANK_TOLERANCE, 1.0);
            if rank != m {
                return Err(Error::Rank {
                    rank,
                    expected: m,
                    point: q.as_slice().to_vec(),
                });
            }
        }
        let system = ConstrainedSystem::new(lagrangian, distribution)?;
        if let Lagrangian::General(_) = system.lagrangian() {
            let states = sampling::unconstrained(&domain, RANK_SAMPLES, DEFAULT_SEED)?;
            for s in &states.states {
                let g = system.lagrangian().jet(s)?.g;
                if linalg::ill_conditioned(linalg::condition_number(&g)) {
                    return Err(Error::Regularity(format!(
                        "fibre metric is singular at q = {:?}, u = {:?}",
                        s.q.as_slice(),
                        s.u.as_slice()
                    )));
                }
            }
        }

        for key in raw.gauges.keys() {
            if !raw.fields.contains_key(key) {
                return Err(scenario_error(
                    format!("/gauges/{}", escape(key)),
                    "gauge for an undeclared field",
                ));
            }
        }
        let mut fields = BTreeMap::new();
        for (name, comps) in &raw.fields {
            let pointer = format!("/fields/{}", escape(name));
            let field = b.field(comps, &pointer)?;
            let gauge = match raw.gauges.get(name) {
                Some(src) => Some(b.coordinate_expr(src, &format!("/gauges/{}", escape(name)))?),
                None => None,
            };
            let cand =
                CandidateField::new(name.clone(), field, gauge).map_err(|e| scenario_error(&pointer, e.to_string()))?;
            fields.insert(name.clone(), cand);
        }

        let mut integrals = BTreeMap::new();
        for (name, src) in &raw.integrals {
            let pointer = format!("/integrals/{}", escape(name));
            if name == ENERGY {
                return Err(scenario_error(
                    pointer,
                    "`energy` is reserved for the Lagrangian energy",
                ));
            }
            let e = b.expr(src, &pointer)?;
            let observable = Observable::expression(e, n).map_err(|e| scenario_error(&pointer, e.to_string()))?;
            integrals.insert(
                name.clone(),
                Integral {
                    source: src.clone(),
                    observable,
                },
            );
        }
        integrals.insert(
            ENERGY.to_string(),
            Integral {
                source: ENERGY.to_string(),
                observable: Observable::Energy,
            },
        );

        let mut tensors = BTreeMap::new();
        for (name, t) in &raw.tensors {
            let pointer = format!("/tensors/{}", escape(name));
            let kind = match t.kind.unwrap_or(RawTensorKind::Constrained) {
                RawTensorKind::Constrained => TensorKind::Constrained,
                RawTensorKind::Ambient => TensorKind::Ambient,
            };
            let index_dim = if kind == TensorKind::Constrained { m } else { n };
            if t.degree < 2 {
                return Err(scenario_error(format!("{pointer}/degree"), "degree must be at least 2"));
            }
            let mut entries = Vec::new();
            for (key, src) in &t.components {
                let cp = format!("{pointer}/components/{}", escape(key));
                let idx = key
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| scenario_error(&cp, "keys must be comma-separated 1-based indices"))?;
                if idx.len() != t.degree || idx.iter().any(|&i| i == 0 || i > index_dim) {
                    return Err(scenario_error(
                        &cp,
                        format!("expected {} indices in 1..={index_dim}", t.degree),
                    ));
                }
                let e = b.coordinate_expr(src, &cp)?;
                entries.push((idx.iter().map(|i| i - 1).collect(), e));
            }
            let f = match &t.f {
                Some(src) => Some(b.coordinate_expr(src, &format!("{pointer}/f"))?),
                None => None,
            };
            let tensor = CTensor::new(name.clone(), kind, t.degree, index_dim, n, entries, f)
                .map_err(|e| scenario_error(&pointer, e.to_string()))?;
            let asym = tensor.asymmetry(&points)?;
            if asym > 1e-12 {
                return Err(scenario_error(
                    format!("{pointer}/components"),
                    format!("components are not symmetric (max difference {asym:.3e})"),
                ));
            }
            tensors.insert(name.clone(), tensor);
        }

        let mut defaults = Defaults::default();
        let d = &raw.defaults;
        if let Some(v) = d.t_end {
            if !(v > 0.0 && v.is_finite()) {
                return Err(scenario_error("/defaults/t_end", "t_end must be positive"));
            }
            defaults.t_end = v;
        }
        if let Some(v) = d.step {
            if !(v > 0.0 && v.is_finite()) {
                return Err(scenario_error("/defaults/step", "step must be positive"));
            }
            defaults.step = v;
        }
        if let Some(v) = d.tol {
            if !(v > 0.0 && v.is_finite()) {
                return Err(scenario_error("/defaults/tol", "tol must be positive"));
            }
            defaults.tol = v;
        }
        if let Some(v) = d.seed {
            defaults.seed = v;
        }

        let initial = match &raw.initial {
            Some(init) => {
                if init.q.len() != n || init.u.len() != n {
                    return Err(scenario_error("/initial", format!("q and u must have {n} entries")));
                }
                let st = TangentState::from_slices(&init.q, &init.u)?;
                let member = system.membership(&st, ON_CONSTRAINT_TOL * (1.0 + linalg::max_abs_vec(&st.u)))?;
                if !member.on_constraint {
                    return Err(scenario_error(
                        "/initial/u",
                        format!("velocity is not in D (max |v^a| = {:.3e})", member.normal_residual),
                    ));
                }
                st
            }
            None => {
                let center: Vec<f64> = domain.min.iter().zip(&domain.max).map(|(a, b)| 0.5 * (a + b)).collect();
                let q = DVector::from_vec(center);
                let u = system.distribution().matrix_at(&point_values(&q))? * DVector::from_element(m, 1.0);
                TangentState::new(q, u)?
            }
        };

        Ok(Scenario {
            name: raw.name,
            coordinates: raw.coordinates,
            symbols,
            system,
            domain,
            fields,
            integrals,
            tensors,
            defaults,
            initial,
        })
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn m(&self) -> usize {
        self.system.m()
    }

    /// Seeded states of `C` in the box.
    pub fn samples(&self, count: usize, seed: u64) -> Result<SampleSet> {
        sampling::on_constraint(self.system.distribution(), &self.domain, count, seed)
    }

    /// Seeded states of `TQ` in the box.
    pub fn off_samples(&self, count: usize, seed: u64) -> Result<SampleSet> {
        sampling::unconstrained(&self.domain, count, seed)
    }

    /// Parses an expression against the scenario's symbols.
    pub fn parse(&self, source: &str) -> Result<Expr> {
        parse(source, &self.symbols)
    }
}
