//! The unconstrained Euler-Lagrange field, the constrained field obtained by
//! fibre-normal projection, reaction forces, and fixed-step integration.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::conservation::mechanical::second_fundamental_form;
use crate::constraint::{ConstrainedSystem, LocalFrame};
use crate::error::{Error, Result};
use crate::geometry::{TangentState, VectorField};
use crate::linalg;

/// Accelerations and reaction data at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSample {
    /// Unconstrained acceleration.
    pub a0: DVector<f64>,
    /// Constrained acceleration.
    pub a: DVector<f64>,
    /// `a − a0 = γ^a X_a`
    pub gamma: DVector<f64>,
    /// `λ_a = g(a − a0, X_a)`
    pub lambda: DVector<f64>,
}

/// Solves `g a0 = ∂L/∂q − (∂²L/∂u∂q) u`.
pub fn gamma0(system: &ConstrainedSystem, state: &TangentState) -> Result<DVector<f64>> {
    let jet = system.lagrangian().jet(state)?;
    unconstrained_acceleration(&jet.g, &jet.dq, &jet.duq, &state.u)
}

fn unconstrained_acceleration(
    g: &DMatrix<f64>,
    dq: &DVector<f64>,
    duq: &DMatrix<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    linalg::solve(g, &(dq - duq * u), "fibre metric")
}

/// Projection algorithm: `a = a0 + γ^a X_a`, with `γ` fixed by requiring
/// the flow to stay tangent to `C`, i.e. `θ^a(a − Σ v^β J_β u) = 0`.
fn project(local: &LocalFrame, u: &DVector<f64>) -> Result<DynamicsSample> {
    let jet = &local.jet;
    let a0 = unconstrained_acceleration(&jet.g, &jet.dq, &jet.duq, u)?;
    let m = local.frame.m();
    let k = local.frame.n() - m;
    let c = local.complement();
    let theta_a = local.frame.coframe().rows(m, k).into_owned();
    let w = local.transport() * u;
    let coeff = &theta_a * &c;
    let gamma = linalg::solve(&coeff, &(-(theta_a * (&a0 - w))), "complement coframe")?;
    let a = &a0 + &c * &gamma;
    let lambda = c.transpose() * (&jet.g * (&a - &a0));
    Ok(DynamicsSample { a0, a, gamma, lambda })
}

/// Constrained dynamics at a state of `C` (projection algorithm).
pub fn gamma_constrained(system: &ConstrainedSystem, state: &TangentState) -> Result<DynamicsSample> {
    project(&system.local_on_constraint(state)?, &state.u)
}

/// Frame algorithm, using only the `D` basis: write
/// `Γ = v^α X_α^C + Γ^α X_α^V` and solve
/// `g_αβ Γ^β = X_α^C(L) − (∂p_α/∂q)·u − g(X_α, w)`,
/// where `p_α = X_α^V(L)` and `w = v^β J_β u`.
/// Returns the acceleration.
pub fn gamma_frame_solve(system: &ConstrainedSystem, state: &TangentState) -> Result<DVector<f64>> {
    let local = system.local_on_constraint(state)?;
    let u = &state.u;
    let jet = &local.jet;
    let b = local.basis();
    let m = b.ncols();
    let w = local.transport() * u;
    let gw = &jet.g * &w;
    let rhs = DVector::from_fn(m, |alpha, _| {
        let x = b.column(alpha).into_owned();
        let jx = &local.jacobians[alpha];
        let complete = x.dot(&jet.dq) + (jx * u).dot(&jet.du);
        // ∂p_α/∂q^j = Σ_i J[i][j] ∂L/∂u^i + X^i ∂²L/∂u^i∂q^j
        let dp = jx.transpose() * &jet.du + jet.duq.transpose() * &x;
        complete - dp.dot(u) - x.dot(&gw)
    });
    let coeffs = linalg::solve(&local.distribution_metric(), &rhs, "g restricted to D")?;
    Ok(w + b * coeffs)
}

/// `ε(Z) = g(a − a0, Z)` at a state of `C`.
pub fn reaction_form(system: &ConstrainedSystem, z: &VectorField, state: &TangentState) -> Result<f64> {
    let local = system.local_on_constraint(state)?;
    let s = project(&local, &state.u)?;
    let zq = z.eval(&local.vals)?;
    Ok(zq.dot(&(&local.jet.g * (&s.a - &s.a0))))
}

/// For a mechanical system and a vector `Y` normal to `D` at `q`, returns
/// `(ε(Y), g(Y, Π(u, u)) + Y(φ))`; the two agree along the constrained flow.
pub fn mechanical_reaction_check(
    system: &ConstrainedSystem,
    y: &DVector<f64>,
    state: &TangentState,
) -> Result<(f64, f64)> {
    let mech = system.lagrangian().require_mechanical()?;
    let local = system.local_on_constraint(state)?;
    let g = &local.jet.g;
    let b = local.basis();
    let gy = g * y;
    let normality = linalg::max_abs_vec(&(b.transpose() * &gy));
    if normality > 1e-9 * (1.0 + linalg::max_abs_vec(&gy) * linalg::max_abs(&b)) {
        return Err(Error::Precondition("Y is not g-normal to D".into()));
    }
    let s = project(&local, &state.u)?;
    let eps = gy.dot(&(&s.a - &s.a0));
    let pi = second_fundamental_form(system, &state.q)?;
    let vd = local.v_distribution();
    let pi_uu = pi.evaluate(&vd);
    let rhs = gy.dot(&pi_uu) + y.dot(&mech.potential_differential(&local.vals)?);
    Ok((eps, rhs))
}

/// A named scalar evaluated at every trajectory sample.
pub struct Monitor<'a> {
    pub name: String,
    eval: Box<MonitorFn<'a>>,
}

type MonitorFn<'a> = dyn Fn(&ConstrainedSystem, &TangentState) -> Result<f64> + 'a;

impl<'a> Monitor<'a> {
    pub fn new(name: impl Into<String>, eval: impl Fn(&ConstrainedSystem, &TangentState) -> Result<f64> + 'a) -> Self {
        Monitor {
            name: name.into(),
            eval: Box::new(eval),
        }
    }

    pub fn value(&self, system: &ConstrainedSystem, state: &TangentState) -> Result<f64> {
        (self.eval)(system, state)
    }
}

impl std::fmt::Debug for Monitor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Monitor")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

#[derive(Debug)]
pub struct IntegrateOptions<'a> {
    pub t_end: f64,
    pub step: f64,
    /// Re-project the velocity onto `D` after every step.
    pub project_drift: bool,
    pub monitors: Vec<Monitor<'a>>,
}

impl IntegrateOptions<'_> {
    pub fn new(t_end: f64, step: f64) -> Self {
        IntegrateOptions {
            t_end,
            step,
            project_drift: false,
            monitors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub q: DVector<f64>,
    pub u: DVector<f64>,
    /// `(v^α, v^a)`
    pub v: DVector<f64>,
    pub energy: f64,
    pub lambda: DVector<f64>,
    pub monitors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    pub monitor_names: Vec<String>,
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn final_state(&self) -> TangentState {
        let s = self.samples.last().expect("trajectories hold at least one sample");
        TangentState {
            q: s.q.clone(),
            u: s.u.clone(),
        }
    }

    /// `max_t |E(t) − E(0)|`
    pub fn energy_drift(&self) -> f64 {
        drift(self.samples.iter().map(|s| s.energy))
    }

    /// `max_t max_a |v^a(t)|`
    pub fn constraint_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| linalg::max_abs_vec(&s.v.rows(self.m, self.n - self.m).into_owned()))
            .fold(0.0, f64::max)
    }

    pub fn monitor_index(&self, name: &str) -> Option<usize> {
        self.monitor_names.iter().position(|n| n == name)
    }

    pub fn monitor_series(&self, index: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.monitors[index]).collect()
    }

    /// `max_t |f(t) − f(0)|` for a monitor.
    pub fn monitor_drift(&self, index: usize) -> f64 {
        drift(self.samples.iter().map(|s| s.monitors[index]))
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.n).map(|i| format!("q_{i}")));
        cols.extend((1..=self.n).map(|i| format!("u_{i}")));
        cols.extend((1..=self.n).map(|i| format!("v_{i}")));
        cols.push("E".into());
        cols.extend((1..=self.n - self.m).map(|i| format!("lambda_{i}")));
        cols.extend(self.monitor_names.iter().cloned());
        cols.join(",")
    }

    /// One row per sample, every number printed with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for s in &self.samples {
            let mut row = String::new();
            let values = std::iter::once(s.t)
                .chain(s.q.iter().copied())
                .chain(s.u.iter().copied())
                .chain(s.v.iter().copied())
                .chain(std::iter::once(s.energy))
                .chain(s.lambda.iter().copied())
                .chain(s.monitors.iter().copied());
            for (i, x) in values.enumerate() {
                if i > 0 {
                    row.push(',');
                }
                row.push_str(&format!("{x:.16e}"));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

fn drift(mut values: impl Iterator<Item = f64>) -> f64 {
    let Some(first) = values.next() else { return 0.0 };
    values.fold(0.0, |acc, x| {
        let d = (x - first).abs();
        if d.is_nan() {
            f64::NAN
        } else {
            acc.max(d)
        }
    })
}

fn stack(q: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let n = q.len();
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(q);
    y.rows_mut(n, n).copy_from(u);
    y
}

fn split(y: &DVector<f64>) -> Result<TangentState> {
    let n = y.len() / 2;
    TangentState::new(y.rows(0, n).into_owned(), y.rows(n, n).into_owned())
}

/// Classical fourth-order Runge-Kutta on `(q, u)` with a fixed step.
///
/// The last step is shortened so that the final sample sits at `t_end`.
pub fn integrate(
    system: &ConstrainedSystem,
    initial: &TangentState,
    options: &IntegrateOptions<'_>,
) -> Result<Trajectory> {
    let IntegrateOptions {
        t_end,
        step,
        project_drift,
        ref monitors,
    } = *options;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Precondition(format!("step must be positive, got {step}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Precondition(format!("t_end must be non-negative, got {t_end}")));
    }
    system.local_on_constraint(initial)?;

    let rhs = |y: &DVector<f64>| -> Result<DVector<f64>> {
        let s = split(y)?;
        let local = system.local(&s)?;
        let a = project(&local, &s.u)?.a;
        Ok(stack(&s.u, &a))
    };
    let record = |t: f64, state: &TangentState| -> Result<TrajectorySample> {
        let local = system.local(state)?;
        let dynamics = project(&local, &state.u)?;
        let monitors = monitors
            .iter()
            .map(|m| m.value(system, state))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectorySample {
            t,
            q: state.q.clone(),
            u: state.u.clone(),
            v: local.v.clone(),
            energy: local.jet.energy(&state.u),
            lambda: dynamics.lambda,
            monitors,
        })
    };
    let at = |t: f64| move |e: Error| Error::Integration { t, source: Box::new(e) };

    let steps = ((t_end / step) - 1e-9).ceil().max(0.0) as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut state = initial.clone();
    samples.push(record(0.0, &state).map_err(at(0.0))?);
    let mut t = 0.0;
    for k in 0..steps {
        let next_t = if k + 1 == steps { t_end } else { (k + 1) as f64 * step };
        let h = next_t - t;
        let y = stack(&state.q, &state.u);
        let k1 = rhs(&y).map_err(at(t))?;
        let k2 = rhs(&(&y + &k1 * (0.5 * h))).map_err(at(t))?;
        let k3 = rhs(&(&y + &k2 * (0.5 * h))).map_err(at(t))?;
        let k4 = rhs(&(&y + &k3 * h)).map_err(at(t))?;
        let y_next = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        state = split(&y_next).map_err(at(next_t))?;
        if project_drift {
            let local = system.local(&state).map_err(at(next_t))?;
            state.u = local.basis() * local.v_distribution();
        }
        t = next_t;
        samples.push(record(t, &state).map_err(at(t))?);
    }
    Ok(Trajectory {
        n: system.n(),
        m: system.m(),
        monitor_names: monitors.iter().map(|m| m.name.clone()).collect(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, SymbolTable};
    use crate::geometry::Distribution;
    use crate::lagrangian::Lagrangian;

    fn table() -> SymbolTable {
        SymbolTable::for_coordinates(&["x", "y", "z"]).unwrap()
    }

    fn p(s: &str) -> crate::Expr {
        parse(s, &table()).unwrap()
    }

    fn mech(diag: [&str; 3], potential: &str) -> Lagrangian {
        let metric = (0..3)
            .map(|i| (0..3).map(|j| if i == j { p(diag[i]) } else { p("0") }).collect())
            .collect();
        Lagrangian::mechanical(metric, p(potential), 3).unwrap()
    }

    fn particle(potential: &str) -> ConstrainedSystem {
        let d = Distribution::new(vec![
            VectorField::new(vec![p("1"), p("0"), p("y")]).unwrap(),
            VectorField::new(vec![p("0"), p("1"), p("0")]).unwrap(),
        ])
        .unwrap();
        ConstrainedSystem::new(mech(["1", "1", "1"], potential), d).unwrap()
    }

    fn st(q: [f64; 3], u: [f64; 3]) -> TangentState {
        TangentState::from_slices(&q, &u).unwrap()
    }

    #[test]
    fn unconstrained_accelerations() {
        let free = ConstrainedSystem::unconstrained(mech(["1", "1", "1"], "0"));
        assert_eq!(
            gamma0(&free, &st([0.1, 0.2, 0.3], [1.0, -2.0, 0.5])).unwrap(),
            DVector::zeros(3)
        );
        let fall = ConstrainedSystem::unconstrained(mech(["1", "1", "1"], "z"));
        assert_eq!(
            gamma0(&fall, &st([0.1, 0.2, 0.3], [1.0, -2.0, 0.5])).unwrap(),
            DVector::from_column_slice(&[0.0, 0.0, -1.0])
        );
        let polar = ConstrainedSystem::unconstrained(mech(["1", "x^2", "1"], "0"));
        let a0 = gamma0(&polar, &st([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])).unwrap();
        assert!((a0 - DVector::from_column_slice(&[1.0, 0.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn particle_closed_form() {
        let s = particle("0");
        let sample = gamma_constrained(&s, &st([0.0, 1.0, 0.0], [1.0, 1.0, 1.0])).unwrap();
        let expected = DVector::from_column_slice(&[-0.5, 0.0, 0.5]);
        assert!((&sample.a - &expected).amax() < 1e-15);
        let b = gamma_frame_solve(&s, &st([0.0, 1.0, 0.0], [1.0, 1.0, 1.0])).unwrap();
        assert!((b - expected).amax() < 1e-15);
        let straight = gamma_constrained(&s, &st([0.3, 0.7, 0.1], [1.0, 0.0, 0.7])).unwrap();
        assert!(straight.a.amax() < 1e-15);
    }

    #[test]
    fn reaction_examples() {
        let s = particle("0");
        let state = st([0.0, 1.0, 0.0], [1.0, 1.0, 1.0]);
        let x3 = VectorField::new(vec![p("-y"), p("0"), p("1")]).unwrap();
        assert!((reaction_form(&s, &x3, &state).unwrap() - 1.0).abs() < 1e-15);
        for x in s.distribution().basis() {
            assert!(reaction_form(&s, x, &state).unwrap().abs() < 1e-15);
        }
        let free = ConstrainedSystem::unconstrained(mech(["1", "1", "1"], "x*y"));
        assert_eq!(reaction_form(&free, &x3, &state).unwrap(), 0.0);
    }

    #[test]
    fn mechanical_reaction_examples() {
        let s = particle("0");
        let state = st([0.0, 1.0, 0.0], [1.0, 1.0, 1.0]);
        let y = DVector::from_column_slice(&[-1.0, 0.0, 1.0]);
        let (eps, rhs) = mechanical_reaction_check(&s, &y, &state).unwrap();
        assert!((eps - 1.0).abs() < 1e-15 && (rhs - 1.0).abs() < 1e-15);

        let heavy = particle("z");
        let rest = st([0.0, 1.0, 0.0], [0.0; 3]);
        let (eps, rhs) = mechanical_reaction_check(&heavy, &y, &rest).unwrap();
        assert!((eps - 1.0).abs() < 1e-15 && (rhs - 1.0).abs() < 1e-15);

        let inside = DVector::from_column_slice(&[1.0, 0.0, 1.0]);
        assert!(matches!(
            mechanical_reaction_check(&s, &inside, &state),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn straight_line_integration() {
        let s = particle("0");
        let opts = IntegrateOptions::new(1.0, 0.01);
        let traj = integrate(&s, &st([0.0; 3], [1.0, 0.0, 0.0]), &opts).unwrap();
        let last = traj.samples.last().unwrap();
        assert_eq!(last.t, 1.0);
        assert!((last.q.clone() - DVector::from_column_slice(&[1.0, 0.0, 0.0])).amax() < 1e-14);
        assert!(traj.samples.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn integration_preconditions() {
        let s = particle("0");
        let start = st([0.0; 3], [1.0, 0.0, 0.0]);
        assert!(matches!(
            integrate(&s, &start, &IntegrateOptions::new(1.0, 0.0)),
            Err(Error::Precondition(_))
        ));
        let off = st([0.0, 1.0, 0.0], [1.0, 0.0, 0.0]);
        assert!(matches!(
            integrate(&s, &off, &IntegrateOptions::new(1.0, 0.1)),
            Err(Error::OffConstraint { .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let s = particle("0");
        let mut opts = IntegrateOptions::new(0.02, 0.01);
        opts.monitors
            .push(Monitor::new("u_y", |_, st: &TangentState| Ok(st.u[1])));
        let traj = integrate(&s, &st([0.0, 1.0, 0.0], [1.0, 1.0, 1.0]), &opts).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,q_1,q_2,q_3,u_1,u_2,u_3,v_1,v_2,v_3,E,lambda_1,u_y"
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 13);
        assert_eq!(first[0], "0.0000000000000000e0");
        assert_eq!(text.lines().count(), 4);
    }
}
