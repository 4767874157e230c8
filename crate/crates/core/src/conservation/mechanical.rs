//! Mechanical systems: Killing conditions on `D`, the generalized second
//! fundamental form `Π`, the induced connection `∇̄` on `D`, and conditions
//! for polynomial integrals `A_{αβ…} v^α v^β… + f`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::report::{measure_drift, ConservationReport, DriftRun};
use crate::constraint::{orthogonal_complement, ConstrainedSystem};
use crate::error::{Error, Result};
use crate::expr::{Expr, Scalar};
use crate::geometry::sampling::SampleSet;
use crate::geometry::{point_values, FrameQ, TangentState, VectorField};
use crate::lagrangian::Christoffel;
use crate::linalg;

/// Pointwise data shared by the mechanical checks.
struct PointData {
    vals: Vec<f64>,
    g: DMatrix<f64>,
    basis: DMatrix<f64>,
    frame: FrameQ,
    jacobians: Vec<DMatrix<f64>>,
    chr: Christoffel,
    dphi: DVector<f64>,
    /// Inverse of `g_αβ`.
    gdd_inv: DMatrix<f64>,
}

impl PointData {
    fn new(system: &ConstrainedSystem, q: &DVector<f64>) -> Result<Self> {
        let mech = system.lagrangian().require_mechanical()?;
        let vals = point_values(q);
        let g = mech.metric_at(&vals)?;
        let basis = system.distribution().matrix_at(&vals)?;
        let c = orthogonal_complement(&g, &basis)?;
        let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
        cols.extend(c.column_iter().map(|c| c.into_owned()));
        let frame = FrameQ::new(DMatrix::from_columns(&cols), basis.ncols())?;
        let gdd_inv = linalg::inverse(&(basis.transpose() * &g * &basis), "g restricted to D")?;
        Ok(PointData {
            jacobians: system.distribution().jacobians_at(&vals)?,
            chr: mech.christoffels(&vals)?,
            dphi: mech.potential_differential(&vals)?,
            vals,
            g,
            basis,
            frame,
            gdd_inv,
        })
    }

    fn n(&self) -> usize {
        self.frame.n()
    }

    fn m(&self) -> usize {
        self.frame.m()
    }

    fn frame_vector(&self, i: usize) -> DVector<f64> {
        self.frame.matrix().column(i).into_owned()
    }

    /// `∇_{X_i} X_α` for a frame vector `X_i` and a basis field `X_α`.
    fn nabla(&self, i: usize, alpha: usize) -> DVector<f64> {
        let xi = self.frame_vector(i);
        self.chr
            .covariant(&xi, &self.basis.column(alpha).into_owned(), &self.jacobians[alpha])
    }

    fn theta(&self, j: usize, v: &DVector<f64>) -> f64 {
        self.frame.coframe().row(j).dot(&v.transpose())
    }

    /// `(grad φ)^α = g^{αβ} X_β(φ)`
    fn grad_phi_distribution(&self) -> DVector<f64> {
        &self.gdd_inv * (self.basis.transpose() * &self.dphi)
    }
}

/// `K_sym[α][β] = g(∇_{X_α}Z, X_β) + g(∇_{X_β}Z, X_α)` at `q`.
pub fn killing_restricted(system: &ConstrainedSystem, z: &VectorField, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let mech = system.lagrangian().require_mechanical()?;
    let vals = point_values(q);
    let g = mech.metric_at(&vals)?;
    let chr = mech.christoffels(&vals)?;
    let b = system.distribution().matrix_at(&vals)?;
    let zv = z.eval(&vals)?;
    let jz = z.jacobian_at(&vals)?;
    let m = b.ncols();
    let nz: Vec<DVector<f64>> = (0..m)
        .map(|a| chr.covariant(&b.column(a).into_owned(), &zv, &jz))
        .collect();
    let k = DMatrix::from_fn(m, m, |a, c| {
        let xa = b.column(a);
        let xc = b.column(c);
        nz[a].dot(&(&g * xc)) + nz[c].dot(&(&g * xa))
    });
    Ok(k)
}

/// `Π^a_{αβ}` at a point, with the complement it refers to.
#[derive(Debug, Clone)]
pub struct SecondFundamentalForm {
    /// One symmetric `m×m` matrix per complement direction `X_a`.
    pub pi: Vec<DMatrix<f64>>,
    /// The complement `{X_a}` as columns.
    pub complement: DMatrix<f64>,
}

impl SecondFundamentalForm {
    /// `Π(u, u) = Π^a_{αβ} v^α v^β X_a` for `u = v^α X_α`.
    pub fn evaluate(&self, v: &DVector<f64>) -> DVector<f64> {
        let coeffs = DVector::from_fn(self.pi.len(), |a, _| v.dot(&(&self.pi[a] * v)));
        &self.complement * coeffs
    }

    /// `Π(X_α, X_β)` as a coordinate vector.
    pub fn vector(&self, alpha: usize, beta: usize) -> DVector<f64> {
        let coeffs = DVector::from_fn(self.pi.len(), |a, _| self.pi[a][(alpha, beta)]);
        &self.complement * coeffs
    }
}

/// `Π(X, Y) = ½(∇_X Y + ∇_Y X)^⊥` on the basis of `D`.
pub fn second_fundamental_form(system: &ConstrainedSystem, q: &DVector<f64>) -> Result<SecondFundamentalForm> {
    let pd = PointData::new(system, q)?;
    Ok(pi_from(&pd))
}

fn pi_from(pd: &PointData) -> SecondFundamentalForm {
    let (n, m) = (pd.n(), pd.m());
    let mut pi = vec![DMatrix::zeros(m, m); n - m];
    for alpha in 0..m {
        for beta in alpha..m {
            let s = (pd.nabla(alpha, beta) + pd.nabla(beta, alpha)) * 0.5;
            for (a, p) in pi.iter_mut().enumerate() {
                let v = pd.theta(m + a, &s);
                p[(alpha, beta)] = v;
                p[(beta, alpha)] = v;
            }
        }
    }
    SecondFundamentalForm {
        pi,
        complement: pd.frame.complement_part(),
    }
}

/// `Γ̄^β_{iα} = θ^β(∇_{X_i} X_α)` for every frame vector `X_i`.
#[derive(Debug, Clone)]
pub struct InducedConnection {
    /// `coeffs[i][(β, α)]`
    pub coeffs: Vec<DMatrix<f64>>,
}

impl InducedConnection {
    pub fn get(&self, beta: usize, i: usize, alpha: usize) -> f64 {
        self.coeffs[i][(beta, alpha)]
    }
}

pub fn induced_connection(system: &ConstrainedSystem, q: &DVector<f64>) -> Result<InducedConnection> {
    Ok(connection_from(&PointData::new(system, q)?))
}

fn connection_from(pd: &PointData) -> InducedConnection {
    let (n, m) = (pd.n(), pd.m());
    let coeffs = (0..n)
        .map(|i| {
            let cols: Vec<DVector<f64>> = (0..m).map(|alpha| pd.nabla(i, alpha)).collect();
            DMatrix::from_fn(m, m, |beta, alpha| pd.theta(beta, &cols[alpha]))
        })
        .collect();
    InducedConnection { coeffs }
}

/// `max |X_i(g_αβ) − g_γβ Γ̄^γ_{iα} − g_αγ Γ̄^γ_{iβ}|`, with the left side
/// differentiated exactly.
pub fn metric_compatibility(system: &ConstrainedSystem, q: &DVector<f64>) -> Result<f64> {
    let mech = system.lagrangian().require_mechanical()?;
    let pd = PointData::new(system, q)?;
    let conn = connection_from(&pd);
    let dg = mech.metric_derivatives(&pd.vals)?;
    let (n, m) = (pd.n(), pd.m());
    let gdd = pd.basis.transpose() * &pd.g * &pd.basis;
    let mut worst = 0.0f64;
    for i in 0..n {
        let xi = pd.frame_vector(i);
        let mut dgi = DMatrix::zeros(n, n);
        for (k, d) in dg.iter().enumerate() {
            dgi += d * xi[k];
        }
        let moved: Vec<DVector<f64>> = (0..m).map(|a| &pd.jacobians[a] * &xi).collect();
        for a in 0..m {
            for b in 0..m {
                let xa = pd.basis.column(a);
                let xb = pd.basis.column(b);
                let lhs = moved[a].dot(&(&pd.g * xb)) + xa.dot(&(&dgi * xb)) + xa.dot(&(&pd.g * &moved[b]));
                let rhs: f64 = (0..m)
                    .map(|c| gdd[(c, b)] * conn.get(c, i, a) + gdd[(a, c)] * conn.get(c, i, b))
                    .sum();
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    Ok(worst)
}

/// Whether tensor indices run over the basis of `D` or over coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Constrained,
    Ambient,
}

/// A symmetric tensor with coordinate-dependent components and an optional
/// companion function `f(q)`.
#[derive(Debug, Clone)]
pub struct CTensor {
    pub name: String,
    pub degree: usize,
    pub kind: TensorKind,
    /// Range of each index: `m` or `n`.
    pub index_dim: usize,
    slots: usize,
    /// Entries as given, keyed by their index tuple.
    given: BTreeMap<Vec<usize>, Scalar>,
    /// Sorted index tuple → the key of the entry that defines it.
    canonical: BTreeMap<Vec<usize>, Vec<usize>>,
    f: Option<Scalar>,
}

impl CTensor {
    /// `entries` use zero-based indices; absent entries are zero and each
    /// entry also defines all of its index permutations.
    pub fn new(
        name: impl Into<String>,
        kind: TensorKind,
        degree: usize,
        index_dim: usize,
        n: usize,
        entries: Vec<(Vec<usize>, Expr)>,
        f: Option<Expr>,
    ) -> Result<Self> {
        if degree < 2 {
            return Err(Error::Precondition("tensor degree must be at least 2".into()));
        }
        let check = |e: &Expr| -> Result<()> {
            if e.uses_any(n..2 * n) || e.max_slot().is_some_and(|s| s >= 2 * n) {
                return Err(Error::Precondition(
                    "tensor components must depend on coordinates only".into(),
                ));
            }
            Ok(())
        };
        let mut given = BTreeMap::new();
        let mut canonical = BTreeMap::new();
        for (idx, e) in entries {
            if idx.len() != degree || idx.iter().any(|&i| i >= index_dim) {
                return Err(Error::Precondition(format!("tensor index {idx:?} out of range")));
            }
            check(&e)?;
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            canonical.entry(sorted).or_insert_with(|| idx.clone());
            if given.insert(idx.clone(), Scalar::new(e, 2 * n)).is_some() {
                return Err(Error::Precondition(format!("tensor entry {idx:?} given twice")));
            }
        }
        if let Some(e) = &f {
            check(e)?;
        }
        Ok(CTensor {
            name: name.into(),
            degree,
            kind,
            index_dim,
            slots: 2 * n,
            given,
            canonical,
            f: f.map(|e| Scalar::new(e, 2 * n)),
        })
    }

    fn entry(&self, idx: &[usize]) -> Option<&Scalar> {
        if let Some(s) = self.given.get(idx) {
            return Some(s);
        }
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        self.canonical.get(&sorted).map(|k| &self.given[k])
    }

    fn flat_len(&self) -> usize {
        self.index_dim.pow(self.degree as u32)
    }

    fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.degree];
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.index_dim;
            flat /= self.index_dim;
        }
        idx
    }

    /// All components at a point, flattened row-major.
    pub fn values(&self, vals: &[f64]) -> Result<Vec<f64>> {
        (0..self.flat_len())
            .map(|k| match self.entry(&self.unflatten(k)) {
                Some(s) => s.eval(vals),
                None => Ok(0.0),
            })
            .collect()
    }

    /// Derivatives of all components along a coordinate direction.
    pub fn directional(&self, vals: &[f64], dir: &DVector<f64>) -> Result<Vec<f64>> {
        (0..self.flat_len())
            .map(|k| match self.entry(&self.unflatten(k)) {
                Some(s) => Ok(s.gradient(vals)?.iter().zip(dir.iter()).map(|(a, b)| a * b).sum()),
                None => Ok(0.0),
            })
            .collect()
    }

    pub fn f_value(&self, vals: &[f64]) -> Result<f64> {
        self.f.as_ref().map_or(Ok(0.0), |f| f.eval(vals))
    }

    pub fn f_gradient(&self, vals: &[f64]) -> Result<DVector<f64>> {
        let n = self.slots / 2;
        match &self.f {
            Some(f) => Ok(DVector::from_column_slice(&f.gradient(vals)?[..n])),
            None => Ok(DVector::zeros(n)),
        }
    }

    /// Maximum asymmetry between entries given for permuted indices.
    pub fn asymmetry(&self, points: &[DVector<f64>]) -> Result<f64> {
        let mut worst = 0.0f64;
        for q in points {
            let vals = point_values(q);
            for (idx, s) in &self.given {
                let mut sorted = idx.clone();
                sorted.sort_unstable();
                let reference = &self.given[&self.canonical[&sorted]];
                worst = worst.max((s.eval(&vals)? - reference.eval(&vals)?).abs());
            }
        }
        Ok(worst)
    }

    /// `ψ = A(w, …, w) + f` with `w` the quasi-velocities `v^α` or `u`.
    pub fn psi(&self, system: &ConstrainedSystem, state: &TangentState) -> Result<f64> {
        let vals = state.values();
        let w = match self.kind {
            TensorKind::Constrained => system.local(state)?.v_distribution(),
            TensorKind::Ambient => state.u.clone(),
        };
        let a = self.values(&vals)?;
        let mut total = 0.0;
        for (k, value) in a.iter().enumerate() {
            if *value != 0.0 {
                total += value * self.unflatten(k).iter().map(|&i| w[i]).product::<f64>();
            }
        }
        Ok(total + self.f_value(&vals)?)
    }
}

/// Index tuples of length `order` over `0..dim`, row-major.
fn tuples(dim: usize, order: usize) -> Vec<Vec<usize>> {
    let total = dim.pow(order as u32);
    (0..total)
        .map(|mut flat| {
            let mut idx = vec![0; order];
            for slot in idx.iter_mut().rev() {
                *slot = flat % dim;
                flat /= dim;
            }
            idx
        })
        .collect()
}

fn flat_index(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

/// Average over all permutations of the indices of a flattened tensor.
fn symmetrize(t: &[f64], dim: usize, order: usize) -> Vec<f64> {
    let perms = permutations(order);
    let scale = 1.0 / perms.len() as f64;
    tuples(dim, order)
        .iter()
        .map(|idx| {
            perms
                .iter()
                .map(|p| {
                    let permuted: Vec<usize> = p.iter().map(|&j| idx[j]).collect();
                    t[flat_index(&permuted, dim)]
                })
                .sum::<f64>()
                * scale
        })
        .collect()
}

/// `∇̄_α A_{β…}` flattened with `α` first.
fn nabla_bar(tensor: &CTensor, pd: &PointData, conn: &InducedConnection) -> Result<Vec<f64>> {
    let a = tensor.values(&pd.vals)?;
    let da = (0..pd.m())
        .map(|alpha| tensor.directional(&pd.vals, &pd.basis.column(alpha).into_owned()))
        .collect::<Result<Vec<_>>>()?;
    Ok(nabla_bar_from(&a, &da, pd.m(), tensor.degree, conn))
}

/// `∇̄_α A_{β…} = X_α(A_{β…}) − Σ_j A_{…δ…} Γ̄^δ_{αβ_j}` from the components
/// `a` and their derivatives `da[α]` along `X_α`.
fn nabla_bar_from(a: &[f64], da: &[Vec<f64>], m: usize, k: usize, conn: &InducedConnection) -> Vec<f64> {
    let mut out = vec![0.0; m.pow(k as u32 + 1)];
    for (alpha, d) in da.iter().enumerate() {
        for idx in tuples(m, k) {
            let mut v = d[flat_index(&idx, m)];
            for j in 0..k {
                for delta in 0..m {
                    let mut swapped = idx.clone();
                    swapped[j] = delta;
                    v -= a[flat_index(&swapped, m)] * conn.get(delta, alpha, idx[j]);
                }
            }
            let mut full = vec![alpha];
            full.extend(&idx);
            out[flat_index(&full, m)] = v;
        }
    }
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

fn require_kind(tensor: &CTensor, kind: TensorKind, system: &ConstrainedSystem) -> Result<()> {
    system.lagrangian().require_mechanical()?;
    let expected = match kind {
        TensorKind::Constrained => system.m(),
        TensorKind::Ambient => system.n(),
    };
    if tensor.kind != kind || tensor.index_dim != expected {
        return Err(Error::Precondition(format!(
            "tensor `{}` has the wrong kind or index range for this check",
            tensor.name
        )));
    }
    Ok(())
}

/// Conditions for `ψ = A_{βγ} v^β v^γ + f` to be a first integral:
/// `∇̄_{(α}A_{βγ)} = 0` and `X_α(f) = 2 A_{αβ} (grad φ)^β`.
pub fn quadratic_integral_check(
    system: &ConstrainedSystem,
    tensor: &CTensor,
    samples: &SampleSet,
    tol: f64,
    run: Option<&DriftRun>,
) -> Result<ConservationReport> {
    require_kind(tensor, TensorKind::Constrained, system)?;
    if tensor.degree != 2 {
        return Err(Error::Precondition("quadratic check needs a degree-2 tensor".into()));
    }
    let m = system.m();
    let mut parallel = Vec::with_capacity(samples.len());
    let mut gradient = Vec::with_capacity(samples.len());
    for state in &samples.states {
        let pd = PointData::new(system, &state.q)?;
        let conn = connection_from(&pd);
        parallel.push(max_abs(&symmetrize(&nabla_bar(tensor, &pd, &conn)?, m, 3)));
        let a = DMatrix::from_row_slice(m, m, &tensor.values(&pd.vals)?);
        let xf = pd.basis.transpose() * tensor.f_gradient(&pd.vals)?;
        let res = xf - a * pd.grad_phi_distribution() * 2.0;
        gradient.push(linalg::max_abs_vec(&res));
    }
    let mut report = ConservationReport::new("quadratic_integral", &tensor.name, samples.seed, samples.len());
    report.condition("parallel", &parallel, tol);
    report.condition("gradient", &gradient, tol);
    if let Some(run) = run {
        report.add_drift("psi", measure_drift(system, run, |s, st| tensor.psi(s, st))?);
    }
    Ok(report)
}

/// Conditions for `ψ = A_{α…} v^α… + f` of degree `k`:
/// `∇̄_{(α}A_{β…)} = 0`, `X_α(f) = 0` and `A_{α…δ}(grad φ)^δ = 0`.
pub fn higher_degree_check(
    system: &ConstrainedSystem,
    tensor: &CTensor,
    samples: &SampleSet,
    tol: f64,
    run: Option<&DriftRun>,
) -> Result<ConservationReport> {
    require_kind(tensor, TensorKind::Constrained, system)?;
    let m = system.m();
    let k = tensor.degree;
    let mut parallel = Vec::with_capacity(samples.len());
    let mut f_grad = Vec::with_capacity(samples.len());
    let mut potential = Vec::with_capacity(samples.len());
    for state in &samples.states {
        let pd = PointData::new(system, &state.q)?;
        let conn = connection_from(&pd);
        parallel.push(max_abs(&symmetrize(&nabla_bar(tensor, &pd, &conn)?, m, k + 1)));
        f_grad.push(linalg::max_abs_vec(
            &(pd.basis.transpose() * tensor.f_gradient(&pd.vals)?),
        ));
        let a = tensor.values(&pd.vals)?;
        let gp = pd.grad_phi_distribution();
        let mut worst = 0.0f64;
        for idx in tuples(m, k - 1) {
            let mut s = 0.0;
            for delta in 0..m {
                let mut full = idx.clone();
                full.push(delta);
                s += a[flat_index(&full, m)] * gp[delta];
            }
            worst = worst.max(s.abs());
        }
        potential.push(worst);
    }
    let mut report = ConservationReport::new("higher_degree_integral", &tensor.name, samples.seed, samples.len());
    report.condition("parallel", &parallel, tol);
    report.condition("f_gradient", &f_grad, tol);
    report.condition("potential", &potential, tol);
    if let Some(run) = run {
        report.add_drift("psi", measure_drift(system, run, |s, st| tensor.psi(s, st))?);
    }
    Ok(report)
}

/// Conditions for `ψ = A(u, u) + f` with `A` a symmetric tensor on `Q`:
/// `∇_{(α}A_{βγ)} + 2 A_{a(α}Π^a_{βγ)} = 0` and the gradient condition,
/// with the coupling terms and the ambient condition reported separately.
pub fn restricted_tensor_check(
    system: &ConstrainedSystem,
    tensor: &CTensor,
    samples: &SampleSet,
    tol: f64,
    run: Option<&DriftRun>,
) -> Result<ConservationReport> {
    require_kind(tensor, TensorKind::Ambient, system)?;
    if tensor.degree != 2 {
        return Err(Error::Precondition("restricted check needs a degree-2 tensor".into()));
    }
    let n = system.n();
    let m = system.m();
    let k = n - m;
    let mut restricted = Vec::new();
    let mut gradient = Vec::new();
    let mut pi_coupling = Vec::new();
    let mut potential_normal = Vec::new();
    let mut ambient = Vec::new();
    let mut consistency = Vec::new();
    for state in &samples.states {
        let pd = PointData::new(system, &state.q)?;
        let conn = connection_from(&pd);
        let pi = pi_from(&pd);
        let a = DMatrix::from_row_slice(n, n, &tensor.values(&pd.vals)?);
        let da: Vec<DMatrix<f64>> = (0..n)
            .map(|c| {
                let mut e = DVector::zeros(n);
                e[c] = 1.0;
                tensor
                    .directional(&pd.vals, &e)
                    .map(|v| DMatrix::from_row_slice(n, n, &v))
            })
            .collect::<Result<_>>()?;
        // coordinate ∇_c A_ij
        let mut nabla_a = vec![0.0; n * n * n];
        for c in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = da[c][(i, j)];
                    for l in 0..n {
                        v -= pd.chr.get(l, c, i) * a[(l, j)] + pd.chr.get(l, c, j) * a[(i, l)];
                    }
                    nabla_a[(c * n + i) * n + j] = v;
                }
            }
        }
        ambient.push(max_abs(&symmetrize(&nabla_a, n, 3)));

        let f = pd.frame.matrix();
        let af = f.transpose() * &a * f;
        let mut contracted = vec![0.0; m * m * m];
        let mut coupling = vec![0.0; m * m * m];
        for al in 0..m {
            for be in 0..m {
                for ga in 0..m {
                    let mut v = 0.0;
                    for c in 0..n {
                        for i in 0..n {
                            for j in 0..n {
                                v += nabla_a[(c * n + i) * n + j] * f[(c, al)] * f[(i, be)] * f[(j, ga)];
                            }
                        }
                    }
                    contracted[(al * m + be) * m + ga] = v;
                    coupling[(al * m + be) * m + ga] = (0..k).map(|a_| af[(m + a_, al)] * pi.pi[a_][(be, ga)]).sum();
                }
            }
        }
        let sym_nabla = symmetrize(&contracted, m, 3);
        let sym_coupling = symmetrize(&coupling, m, 3);
        let channel: Vec<f64> = sym_nabla.iter().zip(&sym_coupling).map(|(x, y)| x + 2.0 * y).collect();
        restricted.push(max_abs(&channel));
        pi_coupling.push(max_abs(&sym_coupling));

        let block = af.view((0, 0), (m, m)).into_owned();
        let xf = pd.basis.transpose() * tensor.f_gradient(&pd.vals)?;
        gradient.push(linalg::max_abs_vec(&(xf - &block * pd.grad_phi_distribution() * 2.0)));

        let grad_phi = linalg::solve(&pd.g, &pd.dphi, "metric")?;
        let normal = pd.frame.normal_components(&grad_phi);
        let mixed = af.view((0, m), (m, k)).into_owned();
        potential_normal.push(linalg::max_abs_vec(&(mixed * normal)));

        let (block_values, block_derivatives) = distribution_block(tensor, &pd, &a)?;
        let bar = symmetrize(&nabla_bar_from(&block_values, &block_derivatives, m, 2, &conn), m, 3);
        consistency.push(max_abs(
            &channel.iter().zip(&bar).map(|(x, y)| x - y).collect::<Vec<_>>(),
        ));
    }
    let mut report = ConservationReport::new("restricted_tensor", &tensor.name, samples.seed, samples.len());
    report.condition("restricted", &restricted, tol);
    report.condition("gradient", &gradient, tol);
    report.diagnostic("pi_coupling", &pi_coupling, tol);
    report.diagnostic("potential_normal", &potential_normal, tol);
    report.diagnostic("ambient_parallel", &ambient, tol);
    report.diagnostic("restricted_consistency", &consistency, 1e-10);
    if let Some(run) = run {
        report.add_drift("psi", measure_drift(system, run, |s, st| tensor.psi(s, st))?);
    }
    Ok(report)
}

/// `A(X_α, X_β)` of an ambient tensor and its derivatives along each
/// `X_γ`: `(J_α X_γ)ᵀ A X_β + X_αᵀ (∂_{X_γ} A) X_β + X_αᵀ A J_β X_γ`.
fn distribution_block(ambient: &CTensor, pd: &PointData, a: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = pd.n();
    let m = pd.m();
    let b = &pd.basis;
    let values = (b.transpose() * a * b).transpose().as_slice().to_vec();
    let mut derivatives = Vec::with_capacity(m);
    for ga in 0..m {
        let xg = b.column(ga).into_owned();
        let dir = DMatrix::from_row_slice(n, n, &ambient.directional(&pd.vals, &xg)?);
        let moved = DMatrix::from_columns(&(0..m).map(|al| &pd.jacobians[al] * &xg).collect::<Vec<_>>());
        let d = moved.transpose() * a * b + b.transpose() * dir * b + b.transpose() * a * moved;
        derivatives.push(d.transpose().as_slice().to_vec());
    }
    Ok((values, derivatives))
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

    fn mech(potential: &str) -> Lagrangian {
        let metric = (0..3)
            .map(|i| (0..3).map(|j| if i == j { p("1") } else { p("0") }).collect())
            .collect();
        Lagrangian::mechanical(metric, p(potential), 3).unwrap()
    }

    fn particle(potential: &str) -> ConstrainedSystem {
        let d = Distribution::new(vec![
            VectorField::new(vec![p("1"), p("0"), p("y")]).unwrap(),
            VectorField::new(vec![p("0"), p("1"), p("0")]).unwrap(),
        ])
        .unwrap();
        ConstrainedSystem::new(mech(potential), d).unwrap()
    }

    fn plane(potential: &str) -> ConstrainedSystem {
        let d = Distribution::new(vec![
            VectorField::constant(&[1.0, 0.0, 0.0]),
            VectorField::constant(&[0.0, 1.0, 0.0]),
        ])
        .unwrap();
        ConstrainedSystem::new(mech(potential), d).unwrap()
    }

    fn q(v: [f64; 3]) -> DVector<f64> {
        DVector::from_column_slice(&v)
    }

    fn samples(s: &ConstrainedSystem, count: usize) -> SampleSet {
        on_constraint(s.distribution(), &DomainBox::cube(3, -1.5, 1.5), count, 11).unwrap()
    }

    #[test]
    fn killing_examples() {
        let s = particle("0");
        let at = q([0.3, 0.8, -0.2]);
        let k = killing_restricted(&s, &VectorField::constant(&[1.0, 2.0, 3.0]), &at).unwrap();
        assert_eq!(k.amax(), 0.0);
        let rot = VectorField::new(vec![p("-y"), p("x"), p("0")]).unwrap();
        assert!(killing_restricted(&s, &rot, &at).unwrap().amax() < 1e-15);
        let dil = VectorField::new(vec![p("x"), p("0"), p("0")]).unwrap();
        let k = killing_restricted(&s, &dil, &at).unwrap();
        // X_1 = (1, 0, y) has ∂_1-component 1, X_2 has 0
        assert_eq!(k[(0, 0)], 2.0);
        assert_eq!(k[(1, 1)], 0.0);
    }

    #[test]
    fn pi_examples() {
        let pi = second_fundamental_form(&plane("0"), &q([0.1, 0.2, 0.3])).unwrap();
        assert!(pi.pi.iter().all(|p| p.amax() == 0.0));
        let s = particle("0");
        for y in [0.0, 0.7, -1.3] {
            let pi = second_fundamental_form(&s, &q([0.2, y, 0.4])).unwrap();
            assert!(pi.vector(0, 0).amax() < 1e-15 && pi.vector(1, 1).amax() < 1e-15);
            let expected = DVector::from_column_slice(&[-y, 0.0, 1.0]) * (0.5 / (1.0 + y * y));
            assert!((pi.vector(0, 1) - &expected).amax() < 1e-15);
            assert!((pi.vector(1, 0) - expected).amax() < 1e-15);
        }
    }

    #[test]
    fn induced_connection_examples() {
        let c = induced_connection(&plane("0"), &q([0.1, 0.2, 0.3])).unwrap();
        assert!(c.coeffs.iter().all(|m| m.amax() == 0.0));
        let s = particle("0");
        let y = 0.6;
        let c = induced_connection(&s, &q([0.0, y, 0.0])).unwrap();
        assert!((c.get(0, 1, 0) - y / (1.0 + y * y)).abs() < 1e-15);
        assert!(c.get(1, 1, 0).abs() < 1e-15);
        assert!(metric_compatibility(&s, &q([0.4, y, 1.0])).unwrap() < 1e-14);
    }

    fn particle_tensor(entry: &str, f: Option<&str>) -> CTensor {
        CTensor::new(
            "A",
            TensorKind::Constrained,
            2,
            2,
            3,
            vec![(vec![0, 0], p(entry))],
            f.map(p),
        )
        .unwrap()
    }

    #[test]
    fn particle_quadratic_integral() {
        let s = particle("0");
        let set = samples(&s, 32);
        let r = quadratic_integral_check(&s, &particle_tensor("1 + y^2", None), &set, 1e-10, None).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = quadratic_integral_check(&s, &particle_tensor("1 + x*y", None), &set, 1e-10, None).unwrap();
        assert!(!r.passed());
        assert!(r.max_of("parallel").unwrap() > 1e-3);
    }

    #[test]
    fn metric_as_tensor_is_energy() {
        let s = particle("0.5*x^2 + z");
        let set = samples(&s, 16);
        let entries = vec![(vec![0, 0], p("1 + y^2")), (vec![1, 1], p("1"))];
        let t = CTensor::new(
            "g",
            TensorKind::Constrained,
            2,
            2,
            3,
            entries,
            Some(p("2*(0.5*x^2 + z)")),
        )
        .unwrap();
        let r = quadratic_integral_check(&s, &t, &set, 1e-10, None).unwrap();
        assert!(r.passed(), "{r:?}");
        let st = &set.states[3];
        let e = s.lagrangian().energy(st).unwrap();
        assert!((t.psi(&s, st).unwrap() - 2.0 * e).abs() < 1e-12);
    }

    #[test]
    fn ambient_metric_restricts_cleanly() {
        let s = particle("0.5*x^2 + z");
        let set = samples(&s, 16);
        let entries = (0..3).map(|i| (vec![i, i], p("1"))).collect();
        let t = CTensor::new("g", TensorKind::Ambient, 2, 3, 3, entries, Some(p("x^2 + 2*z"))).unwrap();
        let r = restricted_tensor_check(&s, &t, &set, 1e-10, None).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.max_of("pi_coupling").unwrap() < 1e-12);
        assert!(r.max_of("restricted_consistency").unwrap() < 1e-10);
    }

    #[test]
    fn ambient_killing_tensor_fails_through_pi() {
        // u_x² comes from the parallel tensor dx⊗dx, but A(X_3, X_1) ≠ 0
        let s = particle("0");
        let set = samples(&s, 16);
        let t = CTensor::new("dxdx", TensorKind::Ambient, 2, 3, 3, vec![(vec![0, 0], p("1"))], None).unwrap();
        let r = restricted_tensor_check(&s, &t, &set, 1e-10, None).unwrap();
        assert!(r.max_of("ambient_parallel").unwrap() < 1e-15);
        assert!(!r.passed());
        assert!(r.max_of("pi_coupling").unwrap() > 1e-3);
        assert!(r.max_of("restricted_consistency").unwrap() < 1e-10);
    }

    #[test]
    fn symmetrization_and_degree_three() {
        let t = vec![1.0, 2.0, 0.0, 0.0];
        assert_eq!(symmetrize(&t, 2, 2), vec![1.0, 1.0, 1.0, 0.0]);
        assert_eq!(permutations(4).len(), 24);
        let s = plane("0");
        let set = samples(&s, 8);
        // sym(g ⊗ w) with w = (1, 2) constant and parallel on the flat plane
        let w = [1.0, 2.0];
        let mut entries = Vec::new();
        for idx in tuples(2, 3) {
            let v = (0..3)
                .map(|j| {
                    let rest: Vec<usize> = (0..3).filter(|&i| i != j).map(|i| idx[i]).collect();
                    if rest[0] == rest[1] {
                        w[idx[j]]
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                / 3.0;
            entries.push((idx, Expr::constant(v)));
        }
        let t = CTensor::new("gw", TensorKind::Constrained, 3, 2, 3, entries, None).unwrap();
        let r = higher_degree_check(&s, &t, &set, 1e-8, None).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.max_of("potential"), Some(0.0));
    }

    #[test]
    fn non_mechanical_is_unsupported() {
        let table = SymbolTable::for_coordinates(&["x", "y", "z"]).unwrap();
        let l = Lagrangian::general(parse("0.5*(u_x^2+u_y^2+u_z^2)", &table).unwrap(), 3).unwrap();
        let s = ConstrainedSystem::unconstrained(l);
        assert!(matches!(
            second_fundamental_form(&s, &q([0.0; 3])),
            Err(Error::Unsupported(_))
        ));
    }
}
