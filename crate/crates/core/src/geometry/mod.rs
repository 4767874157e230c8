//! Points and tangent states of a single chart, vector fields on `Q`,
//! pointwise frames and distribution rank diagnostics.

mod field;
pub mod sampling;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub use field::{lie_bracket, Distribution, VectorField};

/// A coordinate point `q` of the chart.
pub type ChartPoint = DVector<f64>;

/// A point `(q, u)` of the tangent bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentState {
    pub q: DVector<f64>,
    pub u: DVector<f64>,
}

impl TangentState {
    pub fn new(q: DVector<f64>, u: DVector<f64>) -> Result<Self> {
        if q.len() != u.len() {
            return Err(Error::Precondition(format!(
                "state has {} coordinates but {} velocities",
                q.len(),
                u.len()
            )));
        }
        if q.iter().chain(u.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Precondition("state has non-finite entries".into()));
        }
        Ok(TangentState { q, u })
    }

    pub fn from_slices(q: &[f64], u: &[f64]) -> Result<Self> {
        TangentState::new(DVector::from_column_slice(q), DVector::from_column_slice(u))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Evaluation slots: coordinates followed by velocities.
    pub fn values(&self) -> Vec<f64> {
        self.q.iter().chain(self.u.iter()).copied().collect()
    }
}

/// Evaluation slots for a bare point, with all velocities zero.
pub fn point_values(q: &DVector<f64>) -> Vec<f64> {
    let mut v = vec![0.0; 2 * q.len()];
    v[..q.len()].copy_from_slice(q.as_slice());
    v
}

/// Axis-aligned sampling box in coordinate space.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl DomainBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::Precondition("domain bounds differ in length".into()));
        }
        for (i, (a, b)) in min.iter().zip(&max).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Precondition(format!(
                    "domain interval {i} is empty or unbounded"
                )));
            }
        }
        Ok(DomainBox { min, max })
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        DomainBox {
            min: vec![lo; n],
            max: vec![hi; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps a point of the unit cube into the box.
    pub fn scale(&self, unit: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.min
                .iter()
                .zip(&self.max)
                .zip(unit)
                .map(|((a, b), t)| a + t * (b - a)),
        )
    }
}

/// Condition numbers above this are treated as singular frames.
pub const MAX_FRAME_CONDITION: f64 = 1e12;

/// A frame `{X_α, X_a}` of `T_qQ` at one point: columns of `matrix`, the
/// first `m` spanning the distribution.
#[derive(Debug, Clone)]
pub struct FrameQ {
    matrix: DMatrix<f64>,
    coframe: DMatrix<f64>,
    m: usize,
}

impl FrameQ {
    pub fn new(matrix: DMatrix<f64>, m: usize) -> Result<Self> {
        if !matrix.is_square() || m > matrix.ncols() {
            return Err(Error::Precondition("frame must be square with m <= n".into()));
        }
        let cond = linalg::condition_number(&matrix);
        if cond.is_nan() || cond > MAX_FRAME_CONDITION {
            return Err(Error::SingularFrame { cond });
        }
        let coframe = linalg::inverse(&matrix, "frame").map_err(|_| Error::SingularFrame { cond })?;
        Ok(FrameQ { matrix, coframe, m })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        FrameQ {
            matrix: DMatrix::identity(n, n),
            coframe: DMatrix::identity(n, n),
            m,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Frame vectors as columns.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Dual covectors as rows.
    pub fn coframe(&self) -> &DMatrix<f64> {
        &self.coframe
    }

    pub fn distribution_part(&self) -> DMatrix<f64> {
        self.matrix.columns(0, self.m).into_owned()
    }

    pub fn complement_part(&self) -> DMatrix<f64> {
        self.matrix.columns(self.m, self.n() - self.m).into_owned()
    }

    /// Normal coframe rows `θ^a` applied to a vector.
    pub fn normal_components(&self, v: &DVector<f64>) -> DVector<f64> {
        self.coframe.rows(self.m, self.n() - self.m) * v
    }

    /// Components `v^i` with `u = v^i X_i`.
    pub fn quasi_velocities(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.coframe * u
    }

    pub fn reconstruct(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}

/// Solves `u = v^i X_i(q)` for the quasi-velocities.
pub fn quasi_velocities(frame: &FrameQ, state: &TangentState) -> DVector<f64> {
    frame.quasi_velocities(&state.u)
}

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Ranks of the derived flag `D ⊂ D¹ ⊂ D² ⊂ …` at `q`, where
/// `D^{k+1} = D^k + [D^k, D^k]`.
///
/// Generators that are dependent at `q` are dropped before bracketing; under
/// the constant-rank hypothesis this does not change the spans. The list
/// stops at rank `n`, when the rank repeats, or after `max_depth` brackets.
pub fn derived_flag(d: &Distribution, q: &DVector<f64>, max_depth: usize) -> Result<Vec<usize>> {
    if max_depth == 0 {
        return Err(Error::Precondition("max_depth must be at least 1".into()));
    }
    let n = d.dim();
    let vals = point_values(q);
    let mut gens: Vec<VectorField> = Vec::new();
    let mut columns: Vec<DVector<f64>> = Vec::new();
    for x in d.basis() {
        push_if_independent(x.clone(), &vals, &mut gens, &mut columns)?;
    }
    let mut ranks = vec![columns.len()];
    for _ in 0..max_depth {
        if columns.len() == n {
            break;
        }
        let before = gens.len();
        for i in 0..before {
            for j in (i + 1)..before {
                let b = gens[i].bracket(&gens[j]);
                push_if_independent(b, &vals, &mut gens, &mut columns)?;
                if columns.len() == n {
                    break;
                }
            }
        }
        let rank = columns.len();
        ranks.push(rank);
        if rank == before {
            break;
        }
    }
    Ok(ranks)
}

fn push_if_independent(
    field: VectorField,
    vals: &[f64],
    gens: &mut Vec<VectorField>,
    columns: &mut Vec<DVector<f64>>,
) -> Result<()> {
    let v = field.eval(vals)?;
    let mut trial = columns.clone();
    trial.push(v);
    let m = DMatrix::from_columns(&trial);
    if linalg::numerical_rank(&m, RANK_TOLERANCE, 0.0) == trial.len() {
        *columns = trial;
        gens.push(field);
    }
    Ok(())
}
