//! Momentum-type integrals `Z^V(L) − F` and the reaction-annihilator test.

use nalgebra::DVector;

use super::report::{measure_drift, two_imply_third, ConservationReport, DriftRun};
use crate::constraint::ConstrainedSystem;
use crate::dynamics::gamma_constrained;
use crate::error::{Error, Result};
use crate::expr::{Expr, Scalar};
use crate::geometry::sampling::SampleSet;
use crate::geometry::{TangentState, VectorField};
use crate::linalg;

/// Tolerance on the exact linear identity between the three channels.
pub const IDENTITY_TOL: f64 = 1e-12;

/// A vector field `Z` on `Q` with an optional gauge function `F(q)`.
#[derive(Debug, Clone)]
pub struct CandidateField {
    pub name: String,
    pub field: VectorField,
    gauge: Option<Scalar>,
}

impl CandidateField {
    pub fn new(name: impl Into<String>, field: VectorField, gauge: Option<Expr>) -> Result<Self> {
        let n = field.dim();
        let gauge = match gauge {
            Some(e) => {
                if e.uses_any(n..2 * n) || e.max_slot().is_some_and(|s| s >= 2 * n) {
                    return Err(Error::Precondition(
                        "gauge function must depend on coordinates only".into(),
                    ));
                }
                Some(Scalar::new(e, 2 * n))
            }
            None => None,
        };
        Ok(CandidateField {
            name: name.into(),
            field,
            gauge,
        })
    }

    pub fn has_gauge(&self) -> bool {
        self.gauge.is_some()
    }

    /// `F(q)`, zero without a gauge.
    pub fn gauge_value(&self, state: &TangentState) -> Result<f64> {
        match &self.gauge {
            Some(f) => f.eval(&state.values()),
            None => Ok(0.0),
        }
    }

    /// `Y(F)` for a coordinate vector `y`.
    pub fn gauge_derivative(&self, state: &TangentState, y: &DVector<f64>) -> Result<f64> {
        match &self.gauge {
            Some(f) => {
                let grad = f.gradient(&state.values())?;
                Ok(y.iter().zip(&grad).map(|(a, b)| a * b).sum())
            }
            None => Ok(0.0),
        }
    }

    /// `Ḟ = u^i ∂F/∂q^i`
    pub fn gauge_rate(&self, state: &TangentState) -> Result<f64> {
        self.gauge_derivative(state, &state.u)
    }

    /// The momentum `Z^V(L) − F`.
    pub fn momentum(&self, system: &ConstrainedSystem, state: &TangentState) -> Result<f64> {
        Ok(system.lagrangian().vertical_lift(&self.field, state)? - self.gauge_value(state)?)
    }
}

/// The three quantities of the Noether triple at one state of `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoetherSample {
    /// `Z^C(L) − Ḟ`
    pub complete: f64,
    /// `ε(Z) = g(a − a0, Z)`
    pub reaction: f64,
    /// `Γ(Z^V(L) − F)`, differentiated directly along `(u, a)`.
    pub momentum_rate: f64,
}

impl NoetherSample {
    /// `momentum_rate − complete − reaction`, zero up to rounding.
    pub fn identity_defect(&self) -> f64 {
        self.momentum_rate - self.complete - self.reaction
    }
}

pub fn noether_sample(
    system: &ConstrainedSystem,
    cand: &CandidateField,
    state: &TangentState,
) -> Result<NoetherSample> {
    let local = system.local_on_constraint(state)?;
    let dynamics = gamma_constrained(system, state)?;
    let jet = &local.jet;
    let u = &state.u;
    let z = cand.field.eval(&local.vals)?;
    let jz = cand.field.jacobian_at(&local.vals)?;
    let f_rate = cand.gauge_rate(state)?;
    let complete = jet.complete_lift(&z, &jz, u) - f_rate;
    let reaction = z.dot(&(&jet.g * (&dynamics.a - &dynamics.a0)));
    // d/dt (Z^i ∂L/∂u^i) = (∂_j Z^i L_{u^i} + Z^i L_{u^i q^j}) u^j + Z^i g_ik a^k
    let dq_momentum = jz.transpose() * &jet.du + jet.duq.transpose() * &z;
    let momentum_rate = dq_momentum.dot(u) + z.dot(&(&jet.g * &dynamics.a)) - f_rate;
    Ok(NoetherSample {
        complete,
        reaction,
        momentum_rate,
    })
}

/// Residuals of `Z^C(L) − Ḟ`, `ε(Z)` and `Γ(Z^V(L) − F)` over the samples.
///
/// When a run is supplied the momentum is monitored along it.
pub fn noether_triple(
    system: &ConstrainedSystem,
    cand: &CandidateField,
    samples: &SampleSet,
    tol: f64,
    run: Option<&DriftRun>,
) -> Result<ConservationReport> {
    if samples.is_empty() {
        return Err(Error::Precondition("no on-constraint samples".into()));
    }
    let values = samples
        .states
        .iter()
        .map(|s| noether_sample(system, cand, s))
        .collect::<Result<Vec<_>>>()?;
    let complete: Vec<f64> = values.iter().map(|v| v.complete).collect();
    let reaction: Vec<f64> = values.iter().map(|v| v.reaction).collect();
    let rate: Vec<f64> = values.iter().map(|v| v.momentum_rate).collect();
    let defect: Vec<f64> = values.iter().map(|v| v.identity_defect()).collect();

    let mut report = ConservationReport::new("noether", &cand.name, samples.seed, samples.len());
    let m1 = report.condition("complete_lift", &complete, tol).max_residual;
    let m2 = report.condition("reaction", &reaction, tol).max_residual;
    let m3 = report.condition("momentum_rate", &rate, tol).max_residual;
    report.diagnostic("linear_identity", &defect, IDENTITY_TOL);
    report.flag("two_imply_third", two_imply_third([m1, m2, m3], tol));
    report.flag("gauge", cand.has_gauge());
    if let Some(run) = run {
        let drift = measure_drift(system, run, |s, st| cand.momentum(s, st))?;
        report.add_drift("momentum", drift);
    }
    Ok(report)
}

/// `ε(Z) = 0` across the samples, for `Z` not necessarily in `D`.
pub fn reaction_annihilator_test(
    system: &ConstrainedSystem,
    z: &VectorField,
    name: &str,
    samples: &SampleSet,
    tol: f64,
) -> Result<ConservationReport> {
    let mut residuals = Vec::with_capacity(samples.len());
    let mut normal = Vec::with_capacity(samples.len());
    for state in &samples.states {
        let local = system.local_on_constraint(state)?;
        let dynamics = gamma_constrained(system, state)?;
        let zq = z.eval(&local.vals)?;
        residuals.push(zq.dot(&(&local.jet.g * (&dynamics.a - &dynamics.a0))));
        normal.push(linalg::max_abs_vec(&local.frame.normal_components(&zq)) / (1.0 + linalg::max_abs_vec(&zq)));
    }
    let mut report = ConservationReport::new("reaction_annihilator", name, samples.seed, samples.len());
    report.condition("reaction", &residuals, tol);
    report.diagnostic("normal_component", &normal, tol);
    let in_d = normal.iter().all(|r| *r <= tol);
    report.flag("in_distribution", in_d);
    if in_d {
        report.note("Z lies in D at every sample, so the reaction test holds by the d'Alembert principle");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, SymbolTable};
    use crate::geometry::sampling::on_constraint;
    use crate::geometry::{Distribution, DomainBox};
    use crate::lagrangian::Lagrangian;

    fn p(s: &str) -> Expr {
        parse(s, &SymbolTable::for_coordinates(&["x", "y", "z"]).unwrap()).unwrap()
    }

    fn flat(potential: &str) -> Lagrangian {
        let metric = (0..3)
            .map(|i| (0..3).map(|j| if i == j { p("1") } else { p("0") }).collect())
            .collect();
        Lagrangian::mechanical(metric, p(potential), 3).unwrap()
    }

    fn particle() -> ConstrainedSystem {
        let d = Distribution::new(vec![
            VectorField::new(vec![p("1"), p("0"), p("y")]).unwrap(),
            VectorField::new(vec![p("0"), p("1"), p("0")]).unwrap(),
        ])
        .unwrap();
        ConstrainedSystem::new(flat("0"), d).unwrap()
    }

    fn samples(s: &ConstrainedSystem) -> SampleSet {
        on_constraint(s.distribution(), &DomainBox::cube(3, -1.5, 1.5), 64, 7).unwrap()
    }

    #[test]
    fn particle_y_momentum_is_conserved() {
        let s = particle();
        let cand = CandidateField::new("y", VectorField::constant(&[0.0, 1.0, 0.0]), None).unwrap();
        let r = noether_triple(&s, &cand, &samples(&s), 1e-10, None).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_of("complete_lift"), Some(0.0));
        assert!(r.max_of("reaction").unwrap() < 1e-15);
        assert!(r.flags["two_imply_third"]);
    }

    #[test]
    fn particle_x_momentum_is_not() {
        let s = particle();
        let cand = CandidateField::new("x", VectorField::constant(&[1.0, 0.0, 0.0]), None).unwrap();
        let r = noether_triple(&s, &cand, &samples(&s), 1e-10, None).unwrap();
        assert!(!r.passed());
        assert_eq!(r.max_of("complete_lift"), Some(0.0));
        assert!(r.max_of("reaction").unwrap() > 1e-3);
        assert!(r.max_of("linear_identity").unwrap() < 1e-13);
        let state = TangentState::from_slices(&[0.0, 1.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        let sample = noether_sample(&s, &cand, &state).unwrap();
        // correction (−γy, 0, γ) with γ = 1/2
        assert!((sample.reaction + 0.5).abs() < 1e-15);
    }

    #[test]
    fn free_translations() {
        let s = ConstrainedSystem::unconstrained(flat("0"));
        let cand = CandidateField::new("t", VectorField::constant(&[0.3, -1.0, 2.0]), None).unwrap();
        let r = noether_triple(&s, &cand, &samples(&s), 1e-12, None).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn gauge_is_coordinate_only() {
        let table = SymbolTable::for_coordinates(&["x", "y", "z"]).unwrap();
        let bad = parse("u_x", &table).unwrap();
        assert!(CandidateField::new("z", VectorField::constant(&[1.0, 0.0, 0.0]), Some(bad)).is_err());
    }

    #[test]
    fn gauge_compensates_potential_work() {
        // L = ½|u|² − x, Z = ∂_x, F = −x: Z^C(L) − Ḟ = −1 + u_x
        let s = ConstrainedSystem::unconstrained(flat("x"));
        let cand = CandidateField::new("x", VectorField::constant(&[1.0, 0.0, 0.0]), Some(p("-x"))).unwrap();
        let st = TangentState::from_slices(&[0.2, 0.0, 0.0], &[0.5, 0.0, 0.0]).unwrap();
        let sample = noether_sample(&s, &cand, &st).unwrap();
        assert!((sample.complete - (-1.0 + 0.5)).abs() < 1e-15);
        assert!(sample.identity_defect().abs() < 1e-15);
    }

    #[test]
    fn reaction_annihilator_examples() {
        let s = particle();
        let set = samples(&s);
        let x3 = VectorField::new(vec![p("-y"), p("0"), p("1")]).unwrap();
        let r = reaction_annihilator_test(&s, &x3, "X3", &set, 1e-10).unwrap();
        assert!(!r.passed());
        assert!(!r.flags["in_distribution"]);
        let inside = VectorField::new(vec![p("1"), p("0"), p("y")]).unwrap();
        let r = reaction_annihilator_test(&s, &inside, "X1", &set, 1e-10).unwrap();
        assert!(r.passed() && r.flags["in_distribution"]);
        // closed form ε(X3) = u_x u_y
        let st = TangentState::from_slices(&[0.0, 0.5, 0.0], &[0.7, -0.4, 0.35]).unwrap();
        let one = SampleSet {
            seed: 0,
            states: vec![st],
        };
        let r = reaction_annihilator_test(&s, &x3, "X3", &one, 1.0).unwrap();
        assert!((r.max_of("reaction").unwrap() - 0.28).abs() < 1e-15);
    }
}
