//! The constraint submanifold `C`, g-orthogonal complements, the adapted
//! frame on `C`, the pulled-back Cartan 2-form and its characteristic kernel.
//!
//! Frames are computed pointwise. The complement `{X_a}` at `q` comes from
//! Gram-Schmidt of the coordinate directions against `D` in the fibre
//! metric; no derivatives of the complement are ever needed, since tangency
//! to `C` is expressed through the Jacobians of the `D` basis alone.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{Distribution, FrameQ, TangentState};
use crate::lagrangian::{Jet, Lagrangian};
use crate::linalg;

/// Default tolerance on `max |v^a|` for membership in `C`.
pub const ON_CONSTRAINT_TOL: f64 = 1e-9;

/// Coordinate directions whose g-component normal to the span so far is
/// below this fraction of their length are skipped.
const DEGENERATE_DIRECTION: f64 = 1e-6;

/// A Lagrangian together with a constraint distribution.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    lagrangian: Lagrangian,
    distribution: Distribution,
}

/// Everything evaluated at one state that the pointwise algorithms share.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub vals: Vec<f64>,
    pub jet: Jet,
    /// `[X_α | X_a]`, complement g-orthonormal and g-orthogonal to `D`.
    pub frame: FrameQ,
    /// Jacobians `∂X_α/∂q` of the distribution basis.
    pub jacobians: Vec<DMatrix<f64>>,
    /// Quasi-velocities `(v^α, v^a)`.
    pub v: DVector<f64>,
}

impl LocalFrame {
    pub fn basis(&self) -> DMatrix<f64> {
        self.frame.distribution_part()
    }

    pub fn complement(&self) -> DMatrix<f64> {
        self.frame.complement_part()
    }

    pub fn v_distribution(&self) -> DVector<f64> {
        self.v.rows(0, self.frame.m()).into_owned()
    }

    pub fn v_normal(&self) -> DVector<f64> {
        let m = self.frame.m();
        self.v.rows(m, self.frame.n() - m).into_owned()
    }

    /// `Σ_β v^β ∂X_β/∂q`; the tangency condition for `(δq, δu)` at a point
    /// of `C` reads `θ^a(δu − V δq) = 0` with this matrix `V`.
    pub fn transport(&self) -> DMatrix<f64> {
        let n = self.frame.n();
        let mut acc = DMatrix::zeros(n, n);
        for (beta, j) in self.jacobians.iter().enumerate() {
            acc += j * self.v[beta];
        }
        acc
    }

    /// `g_αβ`
    pub fn distribution_metric(&self) -> DMatrix<f64> {
        let b = self.basis();
        b.transpose() * &self.jet.g * b
    }
}

/// Result of a membership test.
#[derive(Debug, Clone)]
pub struct Membership {
    /// All quasi-velocities `(v^α, v^a)`.
    pub v: DVector<f64>,
    /// `max |v^a|`
    pub normal_residual: f64,
    pub on_constraint: bool,
}

/// The g-orthogonal complement of the columns of `basis`.
///
/// Coordinate directions are taken in index order, stripped of their
/// g-projection onto `D` and onto the complement vectors already accepted,
/// skipped when (nearly) degenerate, and normalized in `g`.
pub fn orthogonal_complement(g: &DMatrix<f64>, basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let m = basis.ncols();
    let gdd = basis.transpose() * g * basis;
    if m > 0 && linalg::ill_conditioned(linalg::condition_number(&gdd)) {
        return Err(Error::Regularity("g restricted to D is singular".into()));
    }
    let gdd_inv = linalg::inverse(&gdd, "g restricted to D")?;
    let project_out = |r: &DVector<f64>, comp: &[DVector<f64>]| -> DVector<f64> {
        let mut r = r.clone();
        if m > 0 {
            r -= basis * (&gdd_inv * (basis.transpose() * (g * &r)));
        }
        for c in comp {
            let gc = g * c;
            r -= c * (gc.dot(&r) / gc.dot(c));
        }
        r
    };
    let mut comp: Vec<DVector<f64>> = Vec::with_capacity(n - m);
    for k in 0..n {
        if comp.len() == n - m {
            break;
        }
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        let r = project_out(&project_out(&e, &comp), &comp);
        let norm2 = r.dot(&(g * &r));
        let reference = g[(k, k)].abs().max(f64::MIN_POSITIVE);
        if norm2.abs() > DEGENERATE_DIRECTION * DEGENERATE_DIRECTION * reference {
            comp.push(r / norm2.abs().sqrt());
        }
    }
    if comp.len() < n - m {
        return Err(Error::Regularity("could not complete D to a frame".into()));
    }
    Ok(if comp.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&comp)
    })
}

impl ConstrainedSystem {
    pub fn new(lagrangian: Lagrangian, distribution: Distribution) -> Result<Self> {
        if lagrangian.dim() != distribution.dim() {
            return Err(Error::Precondition(format!(
                "Lagrangian has dimension {}, distribution {}",
                lagrangian.dim(),
                distribution.dim()
            )));
        }
        Ok(ConstrainedSystem {
            lagrangian,
            distribution,
        })
    }

    /// No constraints: `D = TQ`.
    pub fn unconstrained(lagrangian: Lagrangian) -> Self {
        let d = Distribution::full(lagrangian.dim());
        ConstrainedSystem {
            lagrangian,
            distribution: d,
        }
    }

    pub fn n(&self) -> usize {
        self.distribution.dim()
    }

    pub fn m(&self) -> usize {
        self.distribution.rank()
    }

    pub fn lagrangian(&self) -> &Lagrangian {
        &self.lagrangian
    }

    pub fn distribution(&self) -> &Distribution {
        &self.distribution
    }

    pub fn local(&self, state: &TangentState) -> Result<LocalFrame> {
        if state.dim() != self.n() {
            return Err(Error::Precondition("state dimension does not match the system".into()));
        }
        let vals = state.values();
        let jet = self.lagrangian.jet(state)?;
        let b = self.distribution.matrix_at(&vals)?;
        let c = orthogonal_complement(&jet.g, &b)?;
        let mut cols: Vec<DVector<f64>> = b.column_iter().map(|c| c.into_owned()).collect();
        cols.extend(c.column_iter().map(|c| c.into_owned()));
        let frame = FrameQ::new(DMatrix::from_columns(&cols), self.m())?;
        let v = frame.quasi_velocities(&state.u);
        let jacobians = self.distribution.jacobians_at(&vals)?;
        Ok(LocalFrame {
            vals,
            jet,
            frame,
            jacobians,
            v,
        })
    }

    /// The pointwise complement `{X_a}` as columns.
    pub fn orthogonal_complement(&self, state: &TangentState) -> Result<DMatrix<f64>> {
        let jet = self.lagrangian.jet(state)?;
        orthogonal_complement(&jet.g, &self.distribution.matrix_at(&state.values())?)
    }

    pub fn membership(&self, state: &TangentState, tol: f64) -> Result<Membership> {
        let local = self.local(state)?;
        let normal_residual = linalg::max_abs_vec(&local.v_normal());
        Ok(Membership {
            v: local.v,
            normal_residual,
            on_constraint: normal_residual <= tol,
        })
    }

    /// Local data at a state required to lie on `C`.
    pub fn local_on_constraint(&self, state: &TangentState) -> Result<LocalFrame> {
        let local = self.local(state)?;
        let residual = linalg::max_abs_vec(&local.v_normal());
        if residual > ON_CONSTRAINT_TOL * (1.0 + linalg::max_abs_vec(&state.u)) {
            return Err(Error::OffConstraint { residual });
        }
        Ok(local)
    }

    pub fn adapted_frame(&self, state: &TangentState) -> Result<AdaptedFrame> {
        AdaptedFrame::build(&self.local_on_constraint(state)?, &state.u)
    }

    pub fn pullback_omega(&self, state: &TangentState) -> Result<PullbackBlocks> {
        Ok(self.adapted_frame(state)?.pullback_blocks())
    }

    pub fn characteristic_kernel(&self, state: &TangentState) -> Result<CharacteristicKernel> {
        Ok(self.adapted_frame(state)?.characteristic_kernel())
    }
}

/// Invariant residuals of an adapted frame, each divided by `1 +` the
/// largest entry of the quantity it is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResiduals {
    /// `ω(X_a, X_α)`
    pub omega_mixed: f64,
    /// `ω(X_α, X_β)`
    pub omega_distribution: f64,
    /// coframe applied to frame, minus the identity
    pub duality: f64,
    /// `g(Y_α, Y_a)`
    pub metric_cross: f64,
    /// `Y_i = S(X_i)`
    pub vertical_lift: f64,
    /// `X_α, X_a, Y_α` tangent to `C`
    pub tangency: f64,
    /// direct pullback of `ω` minus its block reconstruction
    pub pullback: f64,
    /// condition number of `ω` on `{X_α, Y_α}`
    pub dtilde_condition: f64,
}

impl FrameResiduals {
    /// Largest of the zero-residuals (excludes the condition number).
    pub fn max_residual(&self) -> f64 {
        [
            self.omega_mixed,
            self.omega_distribution,
            self.duality,
            self.metric_cross,
            self.vertical_lift,
            self.tangency,
            self.pullback,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// The frame `{X_α, X_a, Y_α, Y_a}` of `T(TQ)` at a point of `C`, with its
/// coframe `{θ^α, θ^a, φ^α, φ^a}`.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    n: usize,
    m: usize,
    /// Columns `[X_α, X_a, Y_α, Y_a]` in `(q, u)` coordinates.
    pub vectors: DMatrix<f64>,
    /// Rows dual to `vectors`.
    pub coframe: DMatrix<f64>,
    /// `g_αβ`
    pub g_distribution: DMatrix<f64>,
    /// `g_ab`
    pub g_complement: DMatrix<f64>,
    /// `ω_ab = ω(X_a, X_b)`
    pub omega_complement: DMatrix<f64>,
    /// Coordinate matrix of `ω_L` at the state.
    pub omega: DMatrix<f64>,
    pub residuals: FrameResiduals,
}

/// Blocks of the pulled-back 2-form.
#[derive(Debug, Clone)]
pub struct PullbackBlocks {
    pub g_distribution: DMatrix<f64>,
    pub omega_complement: DMatrix<f64>,
    /// `2m + rank(ω_ab)`
    pub rank: usize,
}

/// Null space of `ω_ab`.
#[derive(Debug, Clone)]
pub struct CharacteristicKernel {
    /// Orthonormal columns `ξ` with `ω_ab ξ^b = 0`.
    pub basis: DMatrix<f64>,
    pub rank_omega: usize,
    pub dimension: usize,
    /// The kernel as vectors `ξ^a X_a` in `(q, u)` coordinates.
    pub vectors: DMatrix<f64>,
}

impl AdaptedFrame {
    fn build(local: &LocalFrame, u: &DVector<f64>) -> Result<Self> {
        let n = local.frame.n();
        let m = local.frame.m();
        let k = n - m;
        let g = &local.jet.g;
        let omega = local.jet.omega();
        let b = local.basis();
        let c = local.complement();
        let theta_a = local.frame.coframe().rows(m, k).into_owned();
        let transport = local.transport();
        let gdd = local.distribution_metric();
        let gdd_inv = linalg::inverse(&gdd, "g restricted to D")?;

        let stack = |q: DVector<f64>, v: DVector<f64>| {
            let mut out = DVector::zeros(2 * n);
            out.rows_mut(0, n).copy_from(&q);
            out.rows_mut(n, n).copy_from(&v);
            out
        };
        // complete lifts of X_α, pushed along Y_a until tangent to C
        let mut xd: Vec<DVector<f64>> = (0..m)
            .map(|alpha| {
                let xq = b.column(alpha).into_owned();
                let raw = &local.jacobians[alpha] * u;
                let defect = &theta_a * (&raw - &transport * &xq);
                stack(xq, raw - &c * defect)
            })
            .collect();
        let mut xc: Vec<DVector<f64>> = (0..k)
            .map(|a| {
                let xq = c.column(a).into_owned();
                let xu = &transport * &xq;
                stack(xq, xu)
            })
            .collect();
        let yd: Vec<DVector<f64>> = (0..m)
            .map(|alpha| stack(DVector::zeros(n), b.column(alpha).into_owned()))
            .collect();
        let yc: Vec<DVector<f64>> = (0..k)
            .map(|a| stack(DVector::zeros(n), c.column(a).into_owned()))
            .collect();

        let w = |x: &DVector<f64>, y: &DVector<f64>| x.dot(&(&omega * y));
        // X̄_a = X_a − g^{αβ} ω(X_a, X_β) Y_α
        let corr_c: Vec<DVector<f64>> = xc
            .iter()
            .map(|xa| {
                let wa = DVector::from_fn(m, |beta, _| w(xa, &xd[beta]));
                let coeff = &gdd_inv * wa;
                let mut shift = DVector::zeros(2 * n);
                for alpha in 0..m {
                    shift += &yd[alpha] * coeff[alpha];
                }
                shift
            })
            .collect();
        // X̄_α = X_α − ½ g^{βγ} ω(X_α, X_γ) Y_β, from the uncorrected X_α
        let corr_d: Vec<DVector<f64>> = xd
            .iter()
            .map(|xa| {
                let wa = DVector::from_fn(m, |gamma, _| w(xa, &xd[gamma]));
                let coeff = &gdd_inv * wa * 0.5;
                let mut shift = DVector::zeros(2 * n);
                for beta in 0..m {
                    shift += &yd[beta] * coeff[beta];
                }
                shift
            })
            .collect();
        for (x, s) in xc.iter_mut().zip(&corr_c) {
            *x -= s;
        }
        for (x, s) in xd.iter_mut().zip(&corr_d) {
            *x -= s;
        }

        let mut cols = xd.clone();
        cols.extend(xc.iter().cloned());
        cols.extend(yd.iter().cloned());
        cols.extend(yc.iter().cloned());
        let vectors = DMatrix::from_columns(&cols);
        let cond = linalg::condition_number(&vectors);
        let coframe = linalg::inverse(&vectors, "adapted frame").map_err(|_| Error::SingularFrame { cond })?;

        let tangent = vectors.columns(0, n + m).into_owned();
        let direct = tangent.transpose() * &omega * &tangent;
        let wc = direct.view((m, m), (k, k)).into_owned();
        let omega_complement = (&wc - wc.transpose()) * 0.5;
        let g_complement = c.transpose() * g * &c;

        let mut frame = AdaptedFrame {
            n,
            m,
            vectors,
            coframe,
            g_distribution: gdd,
            g_complement,
            omega_complement,
            omega,
            residuals: FrameResiduals {
                omega_mixed: 0.0,
                omega_distribution: 0.0,
                duality: 0.0,
                metric_cross: 0.0,
                vertical_lift: 0.0,
                tangency: 0.0,
                pullback: 0.0,
                dtilde_condition: 0.0,
            },
        };
        frame.residuals = frame.compute_residuals(local, &direct);
        Ok(frame)
    }

    fn compute_residuals(&self, local: &LocalFrame, direct: &DMatrix<f64>) -> FrameResiduals {
        let (n, m) = (self.n, self.m);
        let k = n - m;
        let scale_w = 1.0 + linalg::max_abs(direct);
        let omega_mixed = linalg::max_abs(&direct.view((m, 0), (k, m)).into_owned()) / scale_w;
        let omega_distribution = linalg::max_abs(&direct.view((0, 0), (m, m)).into_owned()) / scale_w;

        let dual = &self.coframe * &self.vectors - DMatrix::<f64>::identity(2 * n, 2 * n);
        let duality = linalg::max_abs(&dual) / (1.0 + linalg::max_abs(&self.vectors) * linalg::max_abs(&self.coframe));

        let g = &local.jet.g;
        let yd_u = self.vectors.view((n, n), (n, m)).into_owned();
        let yc_u = self.vectors.view((n, n + m), (n, k)).into_owned();
        let cross = yd_u.transpose() * g * &yc_u;
        let metric_cross = linalg::max_abs(&cross) / (1.0 + linalg::max_abs(g));

        let xq = self.vectors.view((0, 0), (n, n)).into_owned();
        let yu = self.vectors.view((n, n), (n, n)).into_owned();
        let yq = self.vectors.view((0, n), (n, n)).into_owned();
        let vertical_lift = (linalg::max_abs(&(&yu - &xq)) + linalg::max_abs(&yq)) / (1.0 + linalg::max_abs(&xq));

        let theta_a = local.frame.coframe().rows(m, k).into_owned();
        let transport = local.transport();
        let tangent = self.vectors.columns(0, n + m).into_owned();
        let dq = tangent.rows(0, n).into_owned();
        let du = tangent.rows(n, n).into_owned();
        let t = theta_a * (du - transport * dq);
        let tangency = linalg::max_abs(&t) / (1.0 + linalg::max_abs(&tangent));

        let blocks = self.pullback_reconstruction();
        let pullback = linalg::max_abs(&(direct - blocks)) / scale_w;

        FrameResiduals {
            omega_mixed,
            omega_distribution,
            duality,
            metric_cross,
            vertical_lift,
            tangency,
            pullback,
            dtilde_condition: linalg::condition_number(&self.dtilde_block()),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `X_α` (corrected), column `alpha`.
    pub fn x_distribution(&self, alpha: usize) -> DVector<f64> {
        self.vectors.column(alpha).into_owned()
    }

    /// `X_a` (corrected), column `a` of the complement.
    pub fn x_complement(&self, a: usize) -> DVector<f64> {
        self.vectors.column(self.m + a).into_owned()
    }

    pub fn y_distribution(&self, alpha: usize) -> DVector<f64> {
        self.vectors.column(self.n + alpha).into_owned()
    }

    pub fn y_complement(&self, a: usize) -> DVector<f64> {
        self.vectors.column(self.n + self.m + a).into_owned()
    }

    /// `ω(V, W)`
    pub fn omega_of(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        v.dot(&(&self.omega * w))
    }

    /// Frame components of a vector of `T(TQ)`.
    pub fn components(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.coframe * v
    }

    /// The tangent basis `[X_α, X_a, Y_α]` of `T_uC`.
    pub fn tangent_basis(&self) -> DMatrix<f64> {
        self.vectors.columns(0, self.n + self.m).into_owned()
    }

    /// `ι*ω_L` in the tangent basis, by direct contraction.
    pub fn pullback_direct(&self) -> DMatrix<f64> {
        let t = self.tangent_basis();
        t.transpose() * &self.omega * t
    }

    /// `ι*ω_L = g_αβ φ^α∧θ^β + ½ ω_ab θ^a∧θ^b` in the tangent basis.
    pub fn pullback_reconstruction(&self) -> DMatrix<f64> {
        let (n, m) = (self.n, self.m);
        let k = n - m;
        let mut p = DMatrix::zeros(n + m, n + m);
        for gamma in 0..m {
            for delta in 0..m {
                let v = self.g_distribution[(gamma, delta)];
                p[(n + gamma, delta)] = v;
                p[(delta, n + gamma)] = -v;
            }
        }
        p.view_mut((m, m), (k, k)).copy_from(&self.omega_complement);
        p
    }

    /// `ω` restricted to `D̃ = ⟨X_α, Y_α⟩`.
    pub fn dtilde_block(&self) -> DMatrix<f64> {
        let m = self.m;
        let mut cols: Vec<DVector<f64>> = (0..m).map(|a| self.x_distribution(a)).collect();
        cols.extend((0..m).map(|a| self.y_distribution(a)));
        if cols.is_empty() {
            return DMatrix::zeros(0, 0);
        }
        let t = DMatrix::from_columns(&cols);
        t.transpose() * &self.omega * t
    }

    pub fn pullback_blocks(&self) -> PullbackBlocks {
        let kernel = self.characteristic_kernel();
        PullbackBlocks {
            g_distribution: self.g_distribution.clone(),
            omega_complement: self.omega_complement.clone(),
            rank: 2 * self.m + kernel.rank_omega,
        }
    }

    /// Singular values of `ω_ab` at or below `1e-9` times the larger of its
    /// largest singular value and the overall scale of `ι*ω_L` count as zero.
    pub fn characteristic_kernel(&self) -> CharacteristicKernel {
        let k = self.n - self.m;
        let floor = linalg::max_abs(&self.pullback_direct());
        let basis = linalg::null_space(&self.omega_complement, crate::geometry::RANK_TOLERANCE, floor);
        let rank_omega = linalg::numerical_rank(&self.omega_complement, crate::geometry::RANK_TOLERANCE, floor);
        let xc = self.vectors.columns(self.m, k).into_owned();
        let vectors = if basis.ncols() == 0 {
            DMatrix::zeros(2 * self.n, 0)
        } else {
            xc * &basis
        };
        CharacteristicKernel {
            dimension: basis.ncols(),
            basis,
            rank_omega,
            vectors,
        }
    }
}
