//! Model operators `sum_K sum h_{I_2} B_{K,I_1,I_2}(<f, h_{I_1}>)` and their
//! conversion to one-parameter shifts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dyadic::{haar_value, haar_weights, AxisId, DiscreteField, DyadicCube, GridAxis, HaarIndex};
use crate::error::{Error, Result};
use crate::layout::{separable_add, separable_pair};
use crate::matrix::Matrix;
use crate::paraproduct::{
    apply_partial_2p, apply_pi, apply_pi_full, apply_pi_mixed, check_model_indices, entry_scale, PartialSymbol2P,
    Symbol1P, Symbol2P,
};
use crate::shift::{AveragingKernel, KernelFamily1P, KernelPiece1P, ShiftSpec1P};

/// The operator `B_{K,I_1,I_2}` applied to the Haar coefficient field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InnerOperator {
    Matrix(Matrix),
    Paraproduct(Symbol1P),
    PiFull(Symbol2P),
    PiMixed(Symbol2P),
    PartialParaproduct(PartialSymbol2P),
    Model(Box<ModelOperatorSpec>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub cube: DyadicCube,
    /// `(I_1, eta_1)`, with `I_1^{(i1)} = K`.
    pub input: HaarIndex,
    /// `(I_2, eta_2)`, with `I_2^{(i2)} = K`.
    pub output: HaarIndex,
    pub operator: InnerOperator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOperatorSpec {
    pub axis: AxisId,
    pub i1: u32,
    pub i2: u32,
    pub entries: Vec<ModelEntry>,
}

impl ModelOperatorSpec {
    pub fn validate(&self, axis: &GridAxis) -> Result<()> {
        if axis.id != self.axis {
            return Err(Error::AxisMismatch("model lives on another axis".into()));
        }
        for e in &self.entries {
            check_model_indices(axis, &e.cube, &e.input, &e.output, self.i1, self.i2)?;
        }
        Ok(())
    }

    /// The normalization budget `|K| / (|I_1|^{1/2} |I_2|^{1/2})` of each entry.
    pub fn budgets(&self, axis: &GridAxis) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| entry_scale(axis, &e.cube, &e.input, &e.output))
            .collect()
    }
}

fn incompatible(e: Error) -> Error {
    match e {
        Error::IncompatibleOperator(_) => e,
        other => Error::IncompatibleOperator(other.to_string()),
    }
}

/// `B(c)` for a coefficient field `c` over the remaining axes.
pub fn apply_inner(op: &InnerOperator, c: &DiscreteField) -> Result<DiscreteField> {
    match op {
        InnerOperator::Matrix(m) => {
            if m.dim != c.lattice_dim() {
                return Err(Error::IncompatibleOperator(format!(
                    "{}x{} matrix on a {}-dimensional lattice",
                    m.dim,
                    m.dim,
                    c.lattice_dim()
                )));
            }
            Ok(c.with_values(m.apply_chunks(c.values())))
        }
        InnerOperator::Paraproduct(b) => apply_pi(b, c).map_err(incompatible),
        InnerOperator::PiFull(l) => apply_pi_full(l, c).map_err(incompatible),
        InnerOperator::PiMixed(l) => apply_pi_mixed(l, c).map_err(incompatible),
        InnerOperator::PartialParaproduct(p) => apply_partial_2p(p, c).map_err(incompatible),
        InnerOperator::Model(m) => apply_model(m, c).map_err(incompatible),
    }
}

/// Direct summation of the model operator.
pub fn apply_model(m: &ModelOperatorSpec, f: &DiscreteField) -> Result<DiscreteField> {
    let pos = f.axis_position(m.axis)?;
    let axis = f.axes()[pos];
    m.validate(&axis)?;
    let rest: Vec<GridAxis> = f.axes().iter().filter(|a| a.id != m.axis).copied().collect();
    let data = f.front(&[pos]);
    let cells = [axis.cells()];
    let row_len = data.len() / axis.cells();
    let mut out = vec![0.0; data.len()];
    for e in &m.entries {
        let coef = separable_pair(&data, &cells, row_len, &[haar_weights(&axis, &e.input, axis.cell_measure())]);
        let c = DiscreteField::from_values(rest.clone(), f.lattice().clone(), coef)?;
        let b = apply_inner(&e.operator, &c)?;
        if b.values().len() != row_len {
            return Err(Error::IncompatibleOperator("inner operator changed the value shape".into()));
        }
        separable_add(&mut out, &cells, row_len, &[haar_weights(&axis, &e.output, 1.0)], b.values());
    }
    Ok(f.from_front(&[pos], &out))
}

/// The kernel family `a_K(x, y) = |K| sum h_{I_2}(x) h_{I_1}(y) B` whose shift
/// reproduces a matrix-valued model operator.
pub fn model_to_shift(m: &ModelOperatorSpec, axis: &GridAxis) -> Result<ShiftSpec1P> {
    m.validate(axis)?;
    let mut by_cube: BTreeMap<DyadicCube, Vec<(&ModelEntry, &Matrix)>> = BTreeMap::new();
    let mut dim = None;
    for e in &m.entries {
        let InnerOperator::Matrix(b) = &e.operator else {
            return Err(Error::NonMatrixEntry(format!("entry at {:?}", e.cube)));
        };
        if *dim.get_or_insert(b.dim) != b.dim {
            return Err(Error::NonMatrixEntry("entries have different dimensions".into()));
        }
        by_cube.entry(e.cube).or_default().push((e, b));
    }
    let mut kernels = Vec::new();
    let mut claimed: f64 = 0.0;
    for (cube, entries) in by_cube {
        let d = entries[0].1.dim;
        let k = axis.measure(&cube);
        let mut pieces = Vec::new();
        for x in axis.descendants(&cube, m.i2 + 1) {
            let xc = axis.cell_range(&x).start;
            for y in axis.descendants(&cube, m.i1 + 1) {
                let yc = axis.cell_range(&y).start;
                let mut value = Matrix::zeros(d);
                for (e, b) in &entries {
                    let w = haar_value(axis, &e.output, xc) * haar_value(axis, &e.input, yc);
                    if w != 0.0 {
                        value.add_scaled(b, k * w);
                    }
                }
                claimed = claimed.max(value.max_abs());
                pieces.push(KernelPiece1P { x, y, value });
            }
        }
        kernels.push(AveragingKernel { cube, pieces });
    }
    Ok(ShiftSpec1P {
        i1: m.i1,
        i2: m.i2,
        kernels: KernelFamily1P { axis: m.axis, kernels },
        claimed_ca: claimed,
    })
}
