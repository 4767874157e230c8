//! Lagrangians, their lifts, the fibre metric, energy, Cartan forms and,
//! for mechanical Lagrangians, the Levi-Civita connection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{Expr, Scalar};
use crate::geometry::{point_values, FrameQ, TangentState, VectorField};
use crate::linalg;

/// Derivatives of `L` at one state.
#[derive(Debug, Clone)]
pub struct Jet {
    pub value: f64,
    /// `∂L/∂q^i`
    pub dq: DVector<f64>,
    /// `∂L/∂u^i`
    pub du: DVector<f64>,
    /// Fibre metric `g_ij = ∂²L/∂u^i∂u^j`.
    pub g: DMatrix<f64>,
    /// `duq[(i, j)] = ∂²L/∂u^i∂q^j`
    pub duq: DMatrix<f64>,
}

impl Jet {
    pub fn energy(&self, u: &DVector<f64>) -> f64 {
        u.dot(&self.du) - self.value
    }

    /// `dE` as a covector on `TQ`, ordered `(q, u)`.
    pub fn energy_gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        let n = u.len();
        let dq = self.duq.transpose() * u - &self.dq;
        let du = &self.g * u;
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&dq);
        out.rows_mut(n, n).copy_from(&du);
        out
    }

    /// `X^V(L) = X^i ∂L/∂u^i` for the value of `X` at the state.
    pub fn vertical_lift(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.du)
    }

    /// `X^C(L) = X^i ∂L/∂q^i + u^j ∂_j X^i ∂L/∂u^i`.
    pub fn complete_lift(&self, x: &DVector<f64>, jac_x: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
        x.dot(&self.dq) + (jac_x * u).dot(&self.du)
    }

    /// Matrix `Ω` of the Cartan 2-form: `ω(V, W) = Vᵀ Ω W` in `(q, u)`
    /// coordinates, with `ω = d(∂L/∂u^i) ∧ dq^i`.
    pub fn omega(&self) -> DMatrix<f64> {
        let n = self.g.nrows();
        let mut o = DMatrix::zeros(2 * n, 2 * n);
        let m = &self.duq;
        o.view_mut((0, 0), (n, n)).copy_from(&(m.transpose() - m));
        o.view_mut((0, n), (n, n)).copy_from(&(-&self.g));
        o.view_mut((n, 0), (n, n)).copy_from(&self.g);
        o
    }
}

/// Levi-Civita connection coefficients `Γ^i_jk` at a point.
#[derive(Debug, Clone)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    /// `Γ^i_jk x^j y^k`
    pub fn contract(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |i, _| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += self.get(i, j, k) * x[j] * y[k];
                }
            }
            s
        })
    }

    /// `∇_v Y = J_Y v + Γ(v, Y)` from the value and Jacobian of `Y`.
    pub fn covariant(&self, v: &DVector<f64>, y: &DVector<f64>, jac_y: &DMatrix<f64>) -> DVector<f64> {
        jac_y * v + self.contract(v, y)
    }
}

/// `L = ½ g_q(u, u) − φ(q)`.
#[derive(Debug, Clone)]
pub struct MechanicalLagrangian {
    n: usize,
    metric: Vec<Vec<Expr>>,
    // dmetric[k][i][j] = ∂_k g_ij
    dmetric: Vec<Vec<Vec<Expr>>>,
    potential: Scalar,
}

impl MechanicalLagrangian {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn metric_at(&self, vals: &[f64]) -> Result<DMatrix<f64>> {
        symmetric_from(&self.metric, vals)
    }

    /// `∂_k g` for every coordinate `k`.
    pub fn metric_derivatives(&self, vals: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.dmetric.iter().map(|d| symmetric_from(d, vals)).collect()
    }

    pub fn potential(&self, vals: &[f64]) -> Result<f64> {
        self.potential.eval(vals)
    }

    /// `dφ` as a coordinate covector.
    pub fn potential_differential(&self, vals: &[f64]) -> Result<DVector<f64>> {
        let g = self.potential.gradient(vals)?;
        Ok(DVector::from_column_slice(&g[..self.n]))
    }

    /// `grad φ = g⁻¹ dφ`.
    pub fn grad_potential(&self, vals: &[f64]) -> Result<DVector<f64>> {
        linalg::solve(&self.metric_at(vals)?, &self.potential_differential(vals)?, "metric")
    }

    pub fn christoffels(&self, vals: &[f64]) -> Result<Christoffel> {
        let n = self.n;
        let ginv = linalg::inverse(&self.metric_at(vals)?, "metric")?;
        let dg = self.metric_derivatives(vals)?;
        // first kind: [l; j k] = ½(∂_j g_lk + ∂_k g_lj − ∂_l g_jk)
        let mut first = vec![0.0; n * n * n];
        for l in 0..n {
            for j in 0..n {
                for k in 0..n {
                    first[(l * n + j) * n + k] = 0.5 * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)]);
                }
            }
        }
        let mut data = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    data[(i * n + j) * n + k] = (0..n).map(|l| ginv[(i, l)] * first[(l * n + j) * n + k]).sum();
                }
            }
        }
        Ok(Christoffel { n, data })
    }

    /// `∇_X Y` at a point.
    pub fn covariant_derivative(&self, x: &VectorField, y: &VectorField, vals: &[f64]) -> Result<DVector<f64>> {
        let chr = self.christoffels(vals)?;
        Ok(chr.covariant(&x.eval(vals)?, &y.eval(vals)?, &y.jacobian_at(vals)?))
    }

    /// Checks entrywise symmetry (to 1e-12) and positive definiteness at the
    /// given points.
    pub fn validate_at(&self, points: &[DVector<f64>]) -> Result<()> {
        for q in points {
            let vals = point_values(q);
            for i in 0..self.n {
                for j in (i + 1)..self.n {
                    let a = self.metric[i][j].eval(&vals)?;
                    let b = self.metric[j][i].eval(&vals)?;
                    if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                        return Err(Error::Regularity(format!(
                            "metric entries ({}, {}) and ({}, {}) differ at q = {:?}",
                            i + 1,
                            j + 1,
                            j + 1,
                            i + 1,
                            q.as_slice()
                        )));
                    }
                }
            }
            let g = self.metric_at(&vals)?;
            if g.clone().cholesky().is_none() {
                return Err(Error::Regularity(format!(
                    "metric is not positive definite at q = {:?}",
                    q.as_slice()
                )));
            }
        }
        Ok(())
    }

    fn jet(&self, state: &TangentState, vals: &[f64]) -> Result<Jet> {
        let n = self.n;
        let u = &state.u;
        let g = self.metric_at(vals)?;
        let dg = self.metric_derivatives(vals)?;
        let dphi = self.potential_differential(vals)?;
        let value = 0.5 * u.dot(&(&g * u)) - self.potential.eval(vals)?;
        let dq = DVector::from_fn(n, |k, _| 0.5 * u.dot(&(&dg[k] * u)) - dphi[k]);
        let du = &g * u;
        let mut duq = DMatrix::zeros(n, n);
        for (j, d) in dg.iter().enumerate() {
            duq.set_column(j, &(d * u));
        }
        Ok(Jet { value, dq, du, g, duq })
    }
}

/// A Lagrangian given by an arbitrary expression in `(q, u)`.
#[derive(Debug, Clone)]
pub struct GeneralLagrangian {
    n: usize,
    source: Expr,
    dq: Vec<Expr>,
    du: Vec<Expr>,
    // upper triangle, duu[i][j - i]
    duu: Vec<Vec<Expr>>,
    duq: Vec<Vec<Expr>>,
}

impl GeneralLagrangian {
    fn jet(&self, vals: &[f64]) -> Result<Jet> {
        let n = self.n;
        let ev = |e: &Expr| if e.is_zero() { Ok(0.0) } else { e.eval(vals) };
        let value = self.source.eval(vals)?;
        let dq = DVector::from_vec(self.dq.iter().map(ev).collect::<Result<_>>()?);
        let du = DVector::from_vec(self.du.iter().map(ev).collect::<Result<_>>()?);
        let mut g = DMatrix::zeros(n, n);
        let mut duq = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = ev(&self.duu[i][j - i])?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
            for j in 0..n {
                duq[(i, j)] = ev(&self.duq[i][j])?;
            }
        }
        Ok(Jet { value, dq, du, g, duq })
    }
}

#[derive(Debug, Clone)]
pub enum Lagrangian {
    General(GeneralLagrangian),
    Mechanical(MechanicalLagrangian),
}

/// Fibre metric at a state together with its blocks in a frame.
#[derive(Debug, Clone)]
pub struct FibreMetricSample {
    pub g: DMatrix<f64>,
    /// `g_αβ`
    pub distribution_block: DMatrix<f64>,
    /// `g_ab`
    pub complement_block: DMatrix<f64>,
    /// `g_aα`
    pub mixed_block: DMatrix<f64>,
}

/// Components of `θ_L` and `ω_L` at a state, in `(q, u)` coordinates.
#[derive(Debug, Clone)]
pub struct CartanSample {
    pub theta: DVector<f64>,
    pub omega: DMatrix<f64>,
}

impl Lagrangian {
    /// Regularity is not checked here; see [`crate::ConstrainedSystem`].
    pub fn general(source: Expr, n: usize) -> Result<Self> {
        check_slots(&source, n, "Lagrangian")?;
        let dq: Vec<Expr> = (0..n).map(|j| source.diff(j)).collect();
        let du: Vec<Expr> = (0..n).map(|i| source.diff(n + i)).collect();
        let duu = (0..n).map(|i| (i..n).map(|j| du[i].diff(n + j)).collect()).collect();
        let duq = (0..n).map(|i| (0..n).map(|j| du[i].diff(j)).collect()).collect();
        Ok(Lagrangian::General(GeneralLagrangian {
            n,
            source,
            dq,
            du,
            duu,
            duq,
        }))
    }

    /// `metric` is an `n×n` array of coordinate expressions.
    pub fn mechanical(metric: Vec<Vec<Expr>>, potential: Expr, n: usize) -> Result<Self> {
        if metric.len() != n || metric.iter().any(|r| r.len() != n) {
            return Err(Error::Precondition(format!("metric must be {n}x{n}")));
        }
        for e in metric.iter().flatten().chain(std::iter::once(&potential)) {
            check_slots(e, n, "metric or potential")?;
            if e.uses_any(n..2 * n) {
                return Err(Error::Precondition(
                    "metric and potential must not depend on velocities".into(),
                ));
            }
        }
        let dmetric = (0..n)
            .map(|k| metric.iter().map(|r| r.iter().map(|e| e.diff(k)).collect()).collect())
            .collect();
        Ok(Lagrangian::Mechanical(MechanicalLagrangian {
            n,
            metric,
            dmetric,
            potential: Scalar::new(potential, 2 * n),
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Lagrangian::General(l) => l.n,
            Lagrangian::Mechanical(l) => l.n,
        }
    }

    pub fn mechanical_part(&self) -> Option<&MechanicalLagrangian> {
        match self {
            Lagrangian::Mechanical(l) => Some(l),
            Lagrangian::General(_) => None,
        }
    }

    pub fn require_mechanical(&self) -> Result<&MechanicalLagrangian> {
        self.mechanical_part()
            .ok_or_else(|| Error::Unsupported("operation requires a mechanical Lagrangian".into()))
    }

    pub fn jet(&self, state: &TangentState) -> Result<Jet> {
        if state.dim() != self.dim() {
            return Err(Error::Precondition(
                "state dimension does not match the Lagrangian".into(),
            ));
        }
        let vals = state.values();
        match self {
            Lagrangian::General(l) => l.jet(&vals),
            Lagrangian::Mechanical(l) => l.jet(state, &vals),
        }
    }

    pub fn value(&self, state: &TangentState) -> Result<f64> {
        Ok(self.jet(state)?.value)
    }

    /// `E_L = u^i ∂L/∂u^i − L`.
    pub fn energy(&self, state: &TangentState) -> Result<f64> {
        Ok(self.jet(state)?.energy(&state.u))
    }

    pub fn vertical_lift(&self, x: &VectorField, state: &TangentState) -> Result<f64> {
        let xv = x.eval(&state.values())?;
        Ok(self.jet(state)?.vertical_lift(&xv))
    }

    pub fn complete_lift(&self, x: &VectorField, state: &TangentState) -> Result<f64> {
        let vals = state.values();
        Ok(self
            .jet(state)?
            .complete_lift(&x.eval(&vals)?, &x.jacobian_at(&vals)?, &state.u))
    }

    /// Hessian metric with its blocks in `frame`.
    pub fn hessian_metric(&self, state: &TangentState, frame: &FrameQ) -> Result<FibreMetricSample> {
        let g = self.jet(state)?.g;
        let f = frame.matrix();
        let full = f.transpose() * &g * f;
        let m = frame.m();
        let k = frame.n() - m;
        let distribution_block = full.view((0, 0), (m, m)).into_owned();
        if m > 0 && linalg::ill_conditioned(linalg::condition_number(&distribution_block)) {
            return Err(Error::Regularity("g restricted to D is singular".into()));
        }
        Ok(FibreMetricSample {
            complement_block: full.view((m, m), (k, k)).into_owned(),
            mixed_block: full.view((m, 0), (k, m)).into_owned(),
            distribution_block,
            g,
        })
    }

    pub fn cartan_forms(&self, state: &TangentState) -> Result<CartanSample> {
        let jet = self.jet(state)?;
        let n = self.dim();
        let mut theta = DVector::zeros(2 * n);
        theta.rows_mut(0, n).copy_from(&jet.du);
        Ok(CartanSample {
            theta,
            omega: jet.omega(),
        })
    }

    pub fn christoffels(&self, q: &DVector<f64>) -> Result<Christoffel> {
        self.require_mechanical()?.christoffels(&point_values(q))
    }

    pub fn covariant_derivative(&self, x: &VectorField, y: &VectorField, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_mechanical()?.covariant_derivative(x, y, &point_values(q))
    }

    pub fn grad_potential(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_mechanical()?.grad_potential(&point_values(q))
    }
}

fn check_slots(e: &Expr, n: usize, what: &str) -> Result<()> {
    if e.max_slot().is_some_and(|s| s >= 2 * n) {
        return Err(Error::Precondition(format!(
            "{what} reads a variable outside the chart"
        )));
    }
    Ok(())
}

fn symmetric_from(entries: &[Vec<Expr>], vals: &[f64]) -> Result<DMatrix<f64>> {
    let n = entries.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let e = &entries[i][j];
            let v = if e.is_zero() { 0.0 } else { e.eval(vals)? };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}
