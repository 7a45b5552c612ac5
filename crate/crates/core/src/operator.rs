//! Matrix-free linear maps between field spaces.

use serde::{Deserialize, Serialize};

use crate::dyadic::{DiscreteField, GridAxis};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;

/// Largest total dimension for which dense assembly is allowed.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldShape {
    pub axes: Vec<GridAxis>,
    pub lattice: LatticeSpec,
}

impl FieldShape {
    pub fn new(axes: Vec<GridAxis>, lattice: LatticeSpec) -> Self {
        FieldShape { axes, lattice }
    }

    pub fn of(f: &DiscreteField) -> Self {
        FieldShape {
            axes: f.axes().to_vec(),
            lattice: f.lattice().clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.cells()).product::<usize>() * self.lattice.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn field(&self, values: Vec<f64>) -> Result<DiscreteField> {
        DiscreteField::from_values(self.axes.clone(), self.lattice.clone(), values)
    }

    pub fn zeros(&self) -> Result<DiscreteField> {
        DiscreteField::zeros(self.axes.clone(), self.lattice.clone())
    }
}

/// A linear map acting on flat field values. `apply_adjoint` is the Euclidean
/// transpose; for maps between equally shaped spaces it is also the adjoint
/// for the integral pairing.
pub trait LinearOp: Sync {
    fn domain(&self) -> &FieldShape;
    fn codomain(&self) -> &FieldShape;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_adjoint(&self, _y: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Dense row-major matrix with `codomain.len()` rows.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    domain: FieldShape,
    codomain: FieldShape,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    pub fn new(domain: FieldShape, codomain: FieldShape, data: Vec<f64>) -> Result<Self> {
        let (rows, cols) = (codomain.len(), domain.len());
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(DenseOperator {
            domain,
            codomain,
            rows,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl LinearOp for DenseOperator {
    fn domain(&self) -> &FieldShape {
        &self.domain
    }

    fn codomain(&self) -> &FieldShape {
        &self.codomain
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn apply_adjoint(&self, y: &[f64]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.data.chunks(self.cols).zip(y) {
            if yi != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * yi;
                }
            }
        }
        Some(out)
    }
}

type VecMap = Box<dyn Fn(&[f64]) -> Vec<f64> + Sync + Send>;

/// A linear map given by closures.
pub struct FnOperator {
    domain: FieldShape,
    codomain: FieldShape,
    forward: VecMap,
    adjoint: Option<VecMap>,
}

impl FnOperator {
    pub fn new(
        domain: FieldShape,
        codomain: FieldShape,
        forward: impl Fn(&[f64]) -> Vec<f64> + Sync + Send + 'static,
    ) -> Self {
        FnOperator {
            domain,
            codomain,
            forward: Box::new(forward),
            adjoint: None,
        }
    }

    pub fn with_adjoint(mut self, adjoint: impl Fn(&[f64]) -> Vec<f64> + Sync + Send + 'static) -> Self {
        self.adjoint = Some(Box::new(adjoint));
        self
    }

    /// The identity on `shape`.
    pub fn identity(shape: FieldShape) -> Self {
        FnOperator::new(shape.clone(), shape, |x| x.to_vec()).with_adjoint(|y| y.to_vec())
    }
}

impl LinearOp for FnOperator {
    fn domain(&self) -> &FieldShape {
        &self.domain
    }

    fn codomain(&self) -> &FieldShape {
        &self.codomain
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.forward)(x)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Option<Vec<f64>> {
        self.adjoint.as_ref().map(|a| a(y))
    }
}

/// Dense matrix of `op` by applying it to the standard basis.
pub fn assemble(op: &dyn LinearOp) -> Result<DenseOperator> {
    let (rows, cols) = (op.codomain().len(), op.domain().len());
    if rows.max(cols) > DENSE_LIMIT {
        return Err(Error::DimensionMismatch {
            expected: DENSE_LIMIT,
            actual: rows.max(cols),
        });
    }
    let mut data = vec![0.0; rows * cols];
    let mut e = vec![0.0; cols];
    for j in 0..cols {
        e[j] = 1.0;
        let col = op.apply(&e);
        e[j] = 0.0;
        for (i, v) in col.iter().enumerate() {
            data[i * cols + j] = *v;
        }
    }
    DenseOperator::new(op.domain().clone(), op.codomain().clone(), data)
}
