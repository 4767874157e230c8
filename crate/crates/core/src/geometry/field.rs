use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{self, Expr};

/// A vector field on `Q` with symbolic components in the coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Expr>,
    // jacobian[i][j] = ∂X^i/∂q^j
    jacobian: Vec<Vec<Expr>>,
}

impl VectorField {
    /// Components must not read velocity slots (`n..2n`).
    pub fn new(components: Vec<Expr>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::Precondition("vector field has no components".into()));
        }
        if let Some(i) = components.iter().position(|c| c.uses_any(n..2 * n)) {
            return Err(Error::Precondition(format!(
                "component {} of a vector field on Q depends on velocities",
                i + 1
            )));
        }
        if components.iter().any(|c| c.max_slot().is_some_and(|s| s >= 2 * n)) {
            return Err(Error::Precondition("vector field reads an unknown slot".into()));
        }
        let jacobian = components.iter().map(|c| (0..n).map(|j| c.diff(j)).collect()).collect();
        Ok(VectorField { components, jacobian })
    }

    pub fn constant(values: &[f64]) -> Self {
        VectorField::new(values.iter().map(|&v| Expr::constant(v)).collect()).expect("constant fields are valid")
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval(&self, vals: &[f64]) -> Result<DVector<f64>> {
        let v: Result<Vec<f64>> = self.components.iter().map(|c| c.eval(vals)).collect();
        Ok(DVector::from_vec(v?))
    }

    /// `J[i][j] = ∂X^i/∂q^j` at the point.
    pub fn jacobian_at(&self, vals: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let e = &self.jacobian[i][j];
                if !e.is_zero() {
                    m[(i, j)] = e.eval(vals)?;
                }
            }
        }
        Ok(m)
    }

    /// Symbolic bracket `[X, Y]^i = X^j ∂_j Y^i − Y^j ∂_j X^i`.
    pub fn bracket(&self, other: &VectorField) -> VectorField {
        let n = self.dim();
        let components = (0..n)
            .map(|i| {
                let mut acc = Expr::constant(0.0);
                for j in 0..n {
                    acc = expr::add(acc, expr::mul(self.components[j].clone(), other.jacobian[i][j].clone()));
                    acc = expr::sub(acc, expr::mul(other.components[j].clone(), self.jacobian[i][j].clone()));
                }
                acc
            })
            .collect();
        VectorField::new(components).expect("bracket of fields on Q is a field on Q")
    }
}

/// Numeric bracket `[X, Y] = J_Y X − J_X Y` at a point.
pub fn lie_bracket(x: &VectorField, y: &VectorField, vals: &[f64]) -> Result<DVector<f64>> {
    if x.dim() != y.dim() {
        return Err(Error::Precondition("bracket of fields of different dimension".into()));
    }
    let xv = x.eval(vals)?;
    let yv = y.eval(vals)?;
    Ok(y.jacobian_at(vals)? * xv - x.jacobian_at(vals)? * yv)
}

/// A distribution `D ⊂ TQ` given by `m` basis fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    basis: Vec<VectorField>,
}

impl Distribution {
    pub fn new(basis: Vec<VectorField>) -> Result<Self> {
        let Some(first) = basis.first() else {
            return Err(Error::Precondition("distribution basis is empty".into()));
        };
        let n = first.dim();
        if basis.iter().any(|x| x.dim() != n) {
            return Err(Error::Precondition(
                "distribution basis fields differ in dimension".into(),
            ));
        }
        if basis.len() > n {
            return Err(Error::Precondition(format!(
                "distribution has {} basis fields in dimension {n}",
                basis.len()
            )));
        }
        Ok(Distribution { basis })
    }

    /// The whole tangent bundle, spanned by the coordinate fields.
    pub fn full(n: usize) -> Self {
        let basis = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                VectorField::constant(&e)
            })
            .collect();
        Distribution { basis }
    }

    pub fn dim(&self) -> usize {
        self.basis[0].dim()
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[VectorField] {
        &self.basis
    }

    /// Basis vectors as the columns of an `n×m` matrix.
    pub fn matrix_at(&self, vals: &[f64]) -> Result<DMatrix<f64>> {
        let cols: Result<Vec<DVector<f64>>> = self.basis.iter().map(|x| x.eval(vals)).collect();
        Ok(DMatrix::from_columns(&cols?))
    }

    pub fn jacobians_at(&self, vals: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.basis.iter().map(|x| x.jacobian_at(vals)).collect()
    }
}
