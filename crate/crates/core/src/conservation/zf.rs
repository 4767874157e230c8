//! The field `Z_f` attached to a function on `C`, first-integral tests
//! through `Z_f(E)`, the pairing of two such fields, and the identity
//! `Γ(f) = Z(E) − ε(Z)` for tangent fields with the right defect.

use nalgebra::{DMatrix, DVector};

use super::report::{measure_drift, two_imply_third, ConservationReport, DriftRun};
use crate::constraint::{AdaptedFrame, ConstrainedSystem};
use crate::dynamics::gamma_constrained;
use crate::error::{Error, Result};
use crate::expr::{Expr, Scalar};
use crate::geometry::sampling::SampleSet;
use crate::geometry::TangentState;
use crate::linalg;

/// Tolerance for identities that hold exactly up to rounding.
pub const ZF_TOL: f64 = 1e-9;

/// A function on `C`, given by an expression in `(q, u)` or as the energy.
#[derive(Debug, Clone)]
pub enum Observable {
    Expression(Scalar),
    Energy,
}

impl Observable {
    pub fn expression(expr: Expr, n: usize) -> Result<Self> {
        if expr.max_slot().is_some_and(|s| s >= 2 * n) {
            return Err(Error::Precondition(
                "observable reads a variable outside the chart".into(),
            ));
        }
        Ok(Observable::Expression(Scalar::new(expr, 2 * n)))
    }

    pub fn value(&self, system: &ConstrainedSystem, state: &TangentState) -> Result<f64> {
        match self {
            Observable::Expression(f) => f.eval(&state.values()),
            Observable::Energy => system.lagrangian().energy(state),
        }
    }

    /// `df` as a covector on `TQ`, ordered `(q, u)`.
    pub fn differential(&self, system: &ConstrainedSystem, state: &TangentState) -> Result<DVector<f64>> {
        match self {
            Observable::Expression(f) => Ok(DVector::from_vec(f.gradient(&state.values())?)),
            Observable::Energy => Ok(system.lagrangian().jet(state)?.energy_gradient(&state.u)),
        }
    }
}

/// `Z_f` at one state.
#[derive(Debug, Clone)]
pub struct ZfField {
    pub frame: AdaptedFrame,
    /// Components in `(q, u)` coordinates.
    pub vector: DVector<f64>,
    /// Components in the adapted frame `[X̄_α, X̄_a, Y_α, Y_a]`.
    pub components: DVector<f64>,
    /// `max |ω(Z, V) − df(V)|` over `V ∈ {X̄_α, Y_α}`.
    pub defect: f64,
}

/// `Z = g^{αβ}(df(X̄_β) Y_α − df(Y_β) X̄_α)` from a frame and `df`.
pub fn z_from_frame(frame: &AdaptedFrame, df: &DVector<f64>) -> Result<DVector<f64>> {
    let m = frame.m();
    let ginv = linalg::inverse(&frame.g_distribution, "g restricted to D")?;
    let dx = DVector::from_fn(m, |b, _| df.dot(&frame.x_distribution(b)));
    let dy = DVector::from_fn(m, |b, _| df.dot(&frame.y_distribution(b)));
    let cx = &ginv * dy;
    let cy = &ginv * dx;
    let mut z = DVector::zeros(2 * frame.n());
    for alpha in 0..m {
        z += frame.y_distribution(alpha) * cy[alpha] - frame.x_distribution(alpha) * cx[alpha];
    }
    Ok(z)
}

/// `max |ω(Z, V) − df(V)|` over `V ∈ D̃`.
pub fn defect_on_dtilde(frame: &AdaptedFrame, z: &DVector<f64>, df: &DVector<f64>) -> f64 {
    (0..frame.m())
        .flat_map(|a| [frame.x_distribution(a), frame.y_distribution(a)])
        .map(|v| (frame.omega_of(z, &v) - df.dot(&v)).abs())
        .fold(0.0, f64::max)
}

pub fn z_f_field(system: &ConstrainedSystem, f: &Observable, state: &TangentState) -> Result<ZfField> {
    z_f_from_differential(system, state, &f.differential(system, state)?)
}

fn z_f_from_differential(system: &ConstrainedSystem, state: &TangentState, df: &DVector<f64>) -> Result<ZfField> {
    let frame = system.adapted_frame(state)?;
    let vector = z_from_frame(&frame, df)?;
    let defect = defect_on_dtilde(&frame, &vector, df);
    let components = frame.components(&vector);
    Ok(ZfField {
        frame,
        vector,
        components,
        defect,
    })
}

/// `Z_f` from its defining conditions as one square linear system:
/// `ω(Z, X̄_γ) = df(X̄_γ)`, `ω(Z, Y_γ) = df(Y_γ)` and vanishing
/// `X̄_a`- and `Y_a`-components.
pub fn z_f_solve(system: &ConstrainedSystem, f: &Observable, state: &TangentState) -> Result<DVector<f64>> {
    let frame = system.adapted_frame(state)?;
    let df = f.differential(system, state)?;
    let (n, m) = (frame.n(), frame.m());
    let k = n - m;
    let mut rows = DMatrix::zeros(2 * n, 2 * n);
    let mut rhs = DVector::zeros(2 * n);
    for gamma in 0..m {
        for (r, v) in [
            (gamma, frame.x_distribution(gamma)),
            (m + gamma, frame.y_distribution(gamma)),
        ] {
            rows.set_row(r, &(&frame.omega * &v).transpose());
            rhs[r] = df.dot(&v);
        }
    }
    for a in 0..k {
        rows.set_row(2 * m + a, &frame.coframe.row(m + a));
        rows.set_row(2 * m + k + a, &frame.coframe.row(n + m + a));
    }
    linalg::solve(&rows, &rhs, "Z_f conditions")
}

/// `Γ` at a state of `C` as the vector `(u, a)`.
pub fn dynamics_vector(system: &ConstrainedSystem, state: &TangentState) -> Result<DVector<f64>> {
    let a = gamma_constrained(system, state)?.a;
    let n = state.dim();
    let mut out = DVector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&state.u);
    out.rows_mut(n, n).copy_from(&a);
    Ok(out)
}

/// `max |components of Z_{−E} − components of Γ|` in the adapted frame.
pub fn energy_field_mismatch(system: &ConstrainedSystem, state: &TangentState) -> Result<f64> {
    let de = Observable::Energy.differential(system, state)?;
    let z = z_f_from_differential(system, state, &(-de))?;
    let gamma = z.frame.components(&dynamics_vector(system, state)?);
    Ok(linalg::max_abs_vec(&(z.components - gamma)))
}

/// `Γ(f)` and `Z_f(E)` at one state; they agree identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralSample {
    pub gamma_f: f64,
    pub z_f_energy: f64,
    pub defect: f64,
    /// Disagreement of the two ways of computing `Z_f`.
    pub two_path: f64,
}

pub fn integral_sample(system: &ConstrainedSystem, f: &Observable, state: &TangentState) -> Result<IntegralSample> {
    let z = z_f_field(system, f, state)?;
    let df = f.differential(system, state)?;
    let gamma_f = df.dot(&dynamics_vector(system, state)?);
    let de = Observable::Energy.differential(system, state)?;
    let z_f_energy = de.dot(&z.vector);
    let solved = z_f_solve(system, f, state)?;
    let two_path = linalg::max_abs_vec(&(&solved - &z.vector)) / (1.0 + linalg::max_abs_vec(&z.vector));
    Ok(IntegralSample {
        gamma_f,
        z_f_energy,
        defect: z.defect,
        two_path,
    })
}

/// `f` is a first integral iff `Z_f(E) = 0`; both sides are reported.
pub fn thm_int_check(
    system: &ConstrainedSystem,
    f: &Observable,
    name: &str,
    samples: &SampleSet,
    tol: f64,
    run: Option<&DriftRun>,
) -> Result<ConservationReport> {
    let values = samples
        .states
        .iter()
        .map(|s| integral_sample(system, f, s))
        .collect::<Result<Vec<_>>>()?;
    let gamma_f: Vec<f64> = values.iter().map(|v| v.gamma_f).collect();
    let z_e: Vec<f64> = values.iter().map(|v| v.z_f_energy).collect();
    let diff: Vec<f64> = values.iter().map(|v| v.gamma_f - v.z_f_energy).collect();
    let mut report = ConservationReport::new("first_integral", name, samples.seed, samples.len());
    report.condition("identity", &diff, ZF_TOL);
    report.condition("gamma_f", &gamma_f, tol);
    report.condition("z_f_energy", &z_e, tol);
    report.diagnostic("defect", &values.iter().map(|v| v.defect).collect::<Vec<_>>(), ZF_TOL);
    report.diagnostic(
        "two_path",
        &values.iter().map(|v| v.two_path).collect::<Vec<_>>(),
        ZF_TOL,
    );
    if let Some(run) = run {
        let drift = measure_drift(system, run, |s, st| f.value(s, st))?;
        report.add_drift("integral", drift);
    }
    Ok(report)
}

/// `Z₁(f₂) = −Z₂(f₁) = ω(Z₂, Z₁)` at each sample.
pub fn symmetry_pairing(
    system: &ConstrainedSystem,
    f1: &Observable,
    f2: &Observable,
    name: &str,
    samples: &SampleSet,
) -> Result<ConservationReport> {
    let mut anti = Vec::with_capacity(samples.len());
    let mut pairing = Vec::with_capacity(samples.len());
    let mut values = Vec::with_capacity(samples.len());
    for state in &samples.states {
        let z1 = z_f_field(system, f1, state)?;
        let z2 = z_f_field(system, f2, state)?;
        let z1f2 = f2.differential(system, state)?.dot(&z1.vector);
        let z2f1 = f1.differential(system, state)?.dot(&z2.vector);
        let w = z1.frame.omega_of(&z2.vector, &z1.vector);
        anti.push(z1f2 + z2f1);
        pairing.push(z1f2 - w);
        values.push(z1f2);
    }
    let mut report = ConservationReport::new("symmetry_pairing", name, samples.seed, samples.len());
    report.condition("antisymmetry", &anti, ZF_TOL);
    report.condition("omega_pairing", &pairing, ZF_TOL);
    report.extra.insert(
        "max_abs_pairing".into(),
        serde_json::json!(values.iter().fold(0.0f64, |a, v| a.max(v.abs()))),
    );
    Ok(report)
}

/// A vector field tangent to `C`, evaluated as a `(q, u)` vector given the
/// adapted frame at the state.
pub struct TangentField<'a> {
    pub name: String,
    eval: Box<FieldFn<'a>>,
}

type FieldFn<'a> = dyn Fn(&ConstrainedSystem, &AdaptedFrame, &TangentState) -> Result<DVector<f64>> + 'a;

impl<'a> TangentField<'a> {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(&ConstrainedSystem, &AdaptedFrame, &TangentState) -> Result<DVector<f64>> + 'a,
    ) -> Self {
        TangentField {
            name: name.into(),
            eval: Box::new(eval),
        }
    }

    /// `Z_f` itself.
    pub fn z_f(f: &'a Observable) -> Self {
        TangentField::new("Z_f", move |s, frame, st| z_from_frame(frame, &f.differential(s, st)?))
    }

    /// The constrained dynamics `Γ`.
    pub fn dynamics() -> Self {
        TangentField::new("Gamma", |s, _, st| dynamics_vector(s, st))
    }

    pub fn eval(&self, system: &ConstrainedSystem, frame: &AdaptedFrame, state: &TangentState) -> Result<DVector<f64>> {
        (self.eval)(system, frame, state)
    }
}

/// `Γ(f) = Z(E) − ε(Z)` for a tangent `Z` whose defect `Z⌟ω − df`
/// annihilates `D̃`. The defect is verified first.
pub fn newfasso_check(
    system: &ConstrainedSystem,
    z: &TangentField<'_>,
    f: &Observable,
    name: &str,
    samples: &SampleSet,
    tol: f64,
) -> Result<ConservationReport> {
    let mut identity = Vec::with_capacity(samples.len());
    let mut terms = [Vec::new(), Vec::new(), Vec::new()];
    let mut tangency = Vec::with_capacity(samples.len());
    for state in &samples.states {
        let frame = system.adapted_frame(state)?;
        let zv = z.eval(system, &frame, state)?;
        let df = f.differential(system, state)?;
        let defect = defect_on_dtilde(&frame, &zv, &df);
        if defect > ZF_TOL * (1.0 + linalg::max_abs_vec(&df)) {
            return Err(Error::Precondition(format!(
                "Z⌟ω − df does not annihilate D̃ (residual {defect:.3e})"
            )));
        }
        let n = state.dim();
        let comps = frame.components(&zv);
        tangency.push(linalg::max_abs_vec(
            &comps.rows(n + frame.m(), n - frame.m()).into_owned(),
        ));
        let dynamics = gamma_constrained(system, state)?;
        let jet = system.lagrangian().jet(state)?;
        let gamma_f = df.dot(&dynamics_vector(system, state)?);
        let z_e = jet.energy_gradient(&state.u).dot(&zv);
        let eps = zv.rows(0, n).dot(&(&jet.g * (&dynamics.a - &dynamics.a0)));
        identity.push(gamma_f - z_e + eps);
        terms[0].push(gamma_f);
        terms[1].push(z_e);
        terms[2].push(eps);
    }
    let mut report = ConservationReport::new("newfasso", name, samples.seed, samples.len());
    report.condition("identity", &identity, ZF_TOL);
    let m0 = report.diagnostic("gamma_f", &terms[0], tol).max_residual;
    let m1 = report.diagnostic("z_energy", &terms[1], tol).max_residual;
    let m2 = report.diagnostic("reaction", &terms[2], tol).max_residual;
    report.diagnostic("tangency", &tangency, ZF_TOL);
    report.flag("two_imply_third", two_imply_third([m0, m1, m2], tol));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, SymbolTable};
    use crate::geometry::sampling::on_constraint;
    use crate::geometry::{Distribution, DomainBox, VectorField};
    use crate::lagrangian::Lagrangian;

    fn table() -> SymbolTable {
        SymbolTable::for_coordinates(&["x", "y", "z"]).unwrap()
    }

    fn p(s: &str) -> Expr {
        parse(s, &table()).unwrap()
    }

    fn particle(potential: &str) -> ConstrainedSystem {
        let metric = (0..3)
            .map(|i| (0..3).map(|j| if i == j { p("1") } else { p("0") }).collect())
            .collect();
        let l = Lagrangian::mechanical(metric, p(potential), 3).unwrap();
        let d = Distribution::new(vec![
            VectorField::new(vec![p("1"), p("0"), p("y")]).unwrap(),
            VectorField::new(vec![p("0"), p("1"), p("0")]).unwrap(),
        ])
        .unwrap();
        ConstrainedSystem::new(l, d).unwrap()
    }

    fn samples(s: &ConstrainedSystem) -> SampleSet {
        on_constraint(s.distribution(), &DomainBox::cube(3, -1.5, 1.5), 48, 3).unwrap()
    }

    fn obs(s: &str) -> Observable {
        Observable::expression(p(s), 3).unwrap()
    }

    #[test]
    fn energy_field_is_the_dynamics() {
        let s = particle("0.3*x*z");
        for st in &samples(&s).states {
            assert!(energy_field_mismatch(&s, st).unwrap() < 1e-9);
        }
    }

    #[test]
    fn constant_gives_zero_field() {
        let s = particle("0");
        let st = &samples(&s).states[5];
        let z = z_f_field(&s, &obs("2.5"), st).unwrap();
        assert_eq!(linalg::max_abs_vec(&z.vector), 0.0);
    }

    #[test]
    fn z_f_properties() {
        let s = particle("0");
        let f = obs("u_x*u_y + y*u_z");
        for st in &samples(&s).states {
            let z = z_f_field(&s, &f, st).unwrap();
            assert!(z.defect < 1e-12);
            let m = 2;
            // no X̄_a or Y_a component
            assert!(z.components[m].abs() < 1e-12 && z.components[3 + m].abs() < 1e-12);
            let solved = z_f_solve(&s, &f, st).unwrap();
            assert!((solved - &z.vector).amax() < 1e-10);
        }
    }

    #[test]
    fn first_integral_checks() {
        let s = particle("0");
        let set = samples(&s);
        let r = thm_int_check(&s, &obs("u_y"), "u_y", &set, 1e-10, None).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = thm_int_check(&s, &Observable::Energy, "energy", &set, 1e-10, None).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = thm_int_check(&s, &obs("u_x"), "u_x", &set, 1e-10, None).unwrap();
        assert!(!r.passed());
        assert!(r.conditions["identity"].verdict.passed());
    }

    #[test]
    fn pairing() {
        let s = particle("0");
        let set = samples(&s);
        let r = symmetry_pairing(&s, &obs("u_y"), &Observable::Energy, "p", &set).unwrap();
        assert!(r.passed());
        let r = symmetry_pairing(&s, &obs("u_x*y"), &obs("u_z + x*u_y"), "q", &set).unwrap();
        assert!(r.passed(), "{r:?}");
        let free = ConstrainedSystem::unconstrained(s.lagrangian().clone());
        let set = crate::geometry::sampling::unconstrained(&DomainBox::cube(3, -1.0, 1.0), 16, 1).unwrap();
        let r = symmetry_pairing(&free, &obs("u_x"), &obs("u_y"), "t", &set).unwrap();
        assert!(r.passed());
        assert!(r.extra["max_abs_pairing"].as_f64().unwrap() < 1e-15);
    }

    #[test]
    fn newfasso_variants() {
        let s = particle("0.2*z*x");
        let set = samples(&s);
        let f = obs("u_y");
        let r = newfasso_check(&s, &TangentField::z_f(&f), &f, "z_f", &set, 1e-9).unwrap();
        assert!(r.passed());
        assert!(r.max_of("reaction").unwrap() < 1e-12);
        let flat = particle("0");
        let neg_e = obs("-0.5*(u_x^2 + u_y^2 + u_z^2)");
        let r = newfasso_check(&flat, &TangentField::dynamics(), &neg_e, "gamma", &samples(&flat), 1e-9).unwrap();
        assert!(r.passed() && r.flags["two_imply_third"]);
        assert!(r.max_of("gamma_f").unwrap() < 1e-12 && r.max_of("z_energy").unwrap() < 1e-12);
        let perturbed = TangentField::new("perturbed", |sys, frame, st| {
            let base = z_from_frame(frame, &f.differential(sys, st)?)?;
            Ok(base + frame.x_complement(0) * (0.7 + st.q[0]))
        });
        let r = newfasso_check(&s, &perturbed, &f, "perturbed", &set, 1e-9).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.max_of("reaction").unwrap() > 1e-3);
        let vertical = TangentField::new("vertical", |sys, frame, st| {
            let base = z_from_frame(frame, &f.differential(sys, st)?)?;
            Ok(base + frame.y_distribution(0))
        });
        assert!(matches!(
            newfasso_check(&s, &vertical, &f, "v", &set, 1e-9),
            Err(Error::Precondition(_))
        ));
    }
}
