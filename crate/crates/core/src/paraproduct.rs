//! One-parameter, full bi-parameter, partial, and tri-parameter paraproducts,
//! plus normalized random symbols.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dyadic::{flat_weights, haar_function, haar_weights, DiscreteField, DyadicCube, GridAxis, HaarIndex};
use crate::error::{Error, Result};
use crate::layout::{separable_add, separable_pair};
use crate::model::{apply_model, InnerOperator, ModelEntry, ModelOperatorSpec};
use crate::norms::{bmo_norm, default_omega_family, product_bmo_estimate};
use crate::rng::{normal, rng_for, Rng};
use crate::shift::max_cube_level;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolTerm1P {
    pub haar: HaarIndex,
    pub value: f64,
}

/// `b = sum c_{J,eta} h_J^eta` on one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Symbol1P {
    pub axis: GridAxis,
    pub terms: Vec<SymbolTerm1P>,
}

fn check_cancellative(axis: &GridAxis, h: &HaarIndex) -> Result<()> {
    axis.check_cube(&h.cube)?;
    if h.eta == 0 || h.eta >= 1 << axis.dim {
        return Err(Error::InvalidAxis(format!("sign pattern {} is not cancellative", h.eta)));
    }
    if h.cube.level >= axis.levels {
        return Err(Error::FinestCube);
    }
    Ok(())
}

fn nonzero_patterns(axis: &GridAxis) -> impl Iterator<Item = u32> {
    1..(1u32 << axis.dim)
}

impl Symbol1P {
    pub fn new(axis: GridAxis, terms: Vec<SymbolTerm1P>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in &terms {
            check_cancellative(&axis, &t.haar)?;
            if !seen.insert(t.haar) {
                return Err(Error::InvalidAxis(format!("term {:?} listed twice", t.haar)));
            }
        }
        Ok(Symbol1P { axis, terms })
    }

    pub fn zero(axis: GridAxis) -> Self {
        Symbol1P {
            axis,
            terms: Vec::new(),
        }
    }

    /// The field `b`.
    pub fn field(&self) -> DiscreteField {
        let mut values = vec![0.0; self.axis.cells()];
        for t in &self.terms {
            for (c, w) in haar_weights(&self.axis, &t.haar, t.value) {
                values[c] += w;
            }
        }
        DiscreteField::scalar(self.axis, values).expect("axis is valid")
    }

    pub fn scaled(&self, c: f64) -> Self {
        Symbol1P {
            axis: self.axis,
            terms: self
                .terms
                .iter()
                .map(|t| SymbolTerm1P {
                    haar: t.haar,
                    value: c * t.value,
                })
                .collect(),
        }
    }

    pub fn bmo(&self) -> f64 {
        bmo_norm(&self.field(), self.axis.id).expect("scalar field on its own axis")
    }

    /// Draws i.i.d. normal coefficients on every cancellative Haar function of
    /// levels `0..L` and rescales to `bmo_norm = budget`.
    pub fn random(axis: GridAxis, budget: f64, rng: &mut Rng) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::InvalidBudget(budget));
        }
        loop {
            let mut terms = Vec::new();
            for q in axis.cubes_up_to(axis.levels - 1) {
                for eta in nonzero_patterns(&axis) {
                    terms.push(SymbolTerm1P {
                        haar: HaarIndex::new(q, eta),
                        value: normal(rng),
                    });
                }
            }
            let s = Symbol1P { axis, terms };
            let m = s.bmo();
            if m > 0.0 {
                return Ok(s.scaled(budget / m));
            }
        }
    }
}

fn locate(f: &DiscreteField, axes: &[GridAxis]) -> Result<Vec<usize>> {
    axes.iter()
        .map(|a| {
            let p = f.axis_position(a.id)?;
            if f.axes()[p] != *a {
                return Err(Error::AxisMismatch(format!("axis {:?} has a different grid", a.id)));
            }
            Ok(p)
        })
        .collect()
}

/// Runs `body(data, cells, row_len, out)` on `f` with `axes` moved to the front.
fn with_front(
    f: &DiscreteField,
    axes: &[GridAxis],
    body: impl FnOnce(&[f64], &[usize], usize, &mut [f64]),
) -> Result<DiscreteField> {
    let pos = locate(f, axes)?;
    let data = f.front(&pos);
    let cells: Vec<usize> = axes.iter().map(|a| a.cells()).collect();
    let row_len = data.len() / cells.iter().product::<usize>();
    let mut out = vec![0.0; data.len()];
    body(&data, &cells, row_len, &mut out);
    Ok(f.from_front(&pos, &out))
}

fn average_weights(axis: &GridAxis, q: &DyadicCube) -> Vec<(usize, f64)> {
    flat_weights(axis, q, 1.0 / axis.cells_in(q) as f64)
}

/// `pi_b f = sum_I <f>_I Delta_I b`.
pub fn apply_pi(b: &Symbol1P, f: &DiscreteField) -> Result<DiscreteField> {
    let axis = b.axis;
    with_front(f, &[axis], |data, cells, row_len, out| {
        for t in &b.terms {
            let avg = separable_pair(data, cells, row_len, &[average_weights(&axis, &t.haar.cube)]);
            separable_add(out, cells, row_len, &[haar_weights(&axis, &t.haar, t.value)], &avg);
        }
    })
}

/// `pi_b^* g = sum_I <g, Delta_I b> 1_I / |I|`.
pub fn apply_pi_adjoint(b: &Symbol1P, g: &DiscreteField) -> Result<DiscreteField> {
    let axis = b.axis;
    with_front(g, &[axis], |data, cells, row_len, out| {
        for t in &b.terms {
            let q = &t.haar.cube;
            let coef = separable_pair(data, cells, row_len, &[haar_weights(&axis, &t.haar, t.value * axis.cell_measure())]);
            separable_add(out, cells, row_len, &[flat_weights(&axis, q, 1.0 / axis.measure(q))], &coef);
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolTerm2P {
    pub first: HaarIndex,
    pub second: HaarIndex,
    pub value: f64,
}

/// Coefficients `lambda_{I,J}` of `h_I (x) h_J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Symbol2P {
    pub axes: [GridAxis; 2],
    pub terms: Vec<SymbolTerm2P>,
}

impl Symbol2P {
    pub fn new(axes: [GridAxis; 2], terms: Vec<SymbolTerm2P>) -> Result<Self> {
        if axes[0].id == axes[1].id {
            return Err(Error::AxisMismatch("a bi-parameter symbol needs two axes".into()));
        }
        let mut seen = BTreeSet::new();
        for t in &terms {
            check_cancellative(&axes[0], &t.first)?;
            check_cancellative(&axes[1], &t.second)?;
            if !seen.insert((t.first, t.second)) {
                return Err(Error::InvalidAxis("coefficient listed twice".into()));
            }
        }
        Ok(Symbol2P { axes, terms })
    }

    pub fn zero(axes: [GridAxis; 2]) -> Self {
        Symbol2P {
            axes,
            terms: Vec::new(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Symbol2P {
            axes: self.axes,
            terms: self
                .terms
                .iter()
                .map(|t| SymbolTerm2P {
                    value: c * t.value,
                    ..t.clone()
                })
                .collect(),
        }
    }

    /// Coefficients with the roles of the two axes exchanged.
    pub fn swapped(&self) -> Self {
        Symbol2P {
            axes: [self.axes[1], self.axes[0]],
            terms: self
                .terms
                .iter()
                .map(|t| SymbolTerm2P {
                    first: t.second,
                    second: t.first,
                    value: t.value,
                })
                .collect(),
        }
    }

    /// The field `b = sum lambda h_I (x) h_J` over both axes.
    pub fn field(&self) -> DiscreteField {
        let mut out = DiscreteField::zeros(self.axes.to_vec(), crate::lattice::LatticeSpec::scalar())
            .expect("axes are valid");
        for t in &self.terms {
            let h = haar_function(&self.axes[0], &t.first)
                .and_then(|a| a.tensor(&haar_function(&self.axes[1], &t.second)?))
                .expect("validated terms");
            for (o, v) in out.values_mut().iter_mut().zip(h.values()) {
                *o += t.value * v;
            }
        }
        out
    }

    /// Product-BMO estimate over the default candidate family.
    pub fn product_bmo(&self) -> f64 {
        product_bmo_estimate(self, &default_omega_family(self)).expect("default family is admissible")
    }

    /// `terms` coefficients on distinct random rectangles, rescaled to a product-BMO
    /// estimate equal to `budget`.
    pub fn random(axes: [GridAxis; 2], terms: usize, budget: f64, rng: &mut Rng) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::InvalidBudget(budget));
        }
        let mut pool = Vec::new();
        for i in axes[0].cubes_up_to(axes[0].levels - 1) {
            for eta in nonzero_patterns(&axes[0]) {
                for j in axes[1].cubes_up_to(axes[1].levels - 1) {
                    for theta in nonzero_patterns(&axes[1]) {
                        pool.push((HaarIndex::new(i, eta), HaarIndex::new(j, theta)));
                    }
                }
            }
        }
        loop {
            pool.shuffle(rng);
            let chosen: Vec<SymbolTerm2P> = pool
                .iter()
                .take(terms.max(1))
                .map(|&(first, second)| SymbolTerm2P {
                    first,
                    second,
                    value: normal(rng),
                })
                .collect();
            let s = Symbol2P { axes, terms: chosen };
            let m = s.product_bmo();
            if m > 0.0 {
                return Ok(s.scaled(budget / m));
            }
        }
    }
}

/// `Pi f = sum lambda_{I,J} <f>_{I x J} h_I (x) h_J`.
pub fn apply_pi_full(lambda: &Symbol2P, f: &DiscreteField) -> Result<DiscreteField> {
    let [a, b] = lambda.axes;
    with_front(f, &lambda.axes, |data, cells, row_len, out| {
        for t in &lambda.terms {
            let avg = separable_pair(
                data,
                cells,
                row_len,
                &[average_weights(&a, &t.first.cube), average_weights(&b, &t.second.cube)],
            );
            separable_add(
                out,
                cells,
                row_len,
                &[haar_weights(&a, &t.first, t.value), haar_weights(&b, &t.second, 1.0)],
                &avg,
            );
        }
    })
}

/// `Pi^* g = sum lambda_{I,J} <g, h_I (x) h_J> 1_{I x J} / |I x J|`.
pub fn apply_pi_full_adjoint(lambda: &Symbol2P, g: &DiscreteField) -> Result<DiscreteField> {
    let [a, b] = lambda.axes;
    with_front(g, &lambda.axes, |data, cells, row_len, out| {
        for t in &lambda.terms {
            let (i, j) = (&t.first.cube, &t.second.cube);
            let coef = separable_pair(
                data,
                cells,
                row_len,
                &[haar_weights(&a, &t.first, a.cell_measure()), haar_weights(&b, &t.second, b.cell_measure())],
            );
            separable_add(
                out,
                cells,
                row_len,
                &[flat_weights(&a, i, t.value / a.measure(i)), flat_weights(&b, j, 1.0 / b.measure(j))],
                &coef,
            );
        }
    })
}

/// `Pi^mixed f = sum lambda_{I,J} <f, h_I (x) 1_J/|J|> (1_I/|I|) (x) h_J`.
pub fn apply_pi_mixed(lambda: &Symbol2P, f: &DiscreteField) -> Result<DiscreteField> {
    let [a, b] = lambda.axes;
    with_front(f, &lambda.axes, |data, cells, row_len, out| {
        for t in &lambda.terms {
            let (i, j) = (&t.first.cube, &t.second.cube);
            let coef = separable_pair(
                data,
                cells,
                row_len,
                &[haar_weights(&a, &t.first, a.cell_measure()), average_weights(&b, j)],
            );
            separable_add(
                out,
                cells,
                row_len,
                &[flat_weights(&a, i, t.value / a.measure(i)), haar_weights(&b, &t.second, 1.0)],
                &coef,
            );
        }
    })
}

/// The adjoint of `Pi^mixed`: the mixed paraproduct of the transposed symbol.
pub fn apply_pi_mixed_adjoint(lambda: &Symbol2P, g: &DiscreteField) -> Result<DiscreteField> {
    apply_pi_mixed(&lambda.swapped(), g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PiFlavor {
    Standard,
    Mixed,
}

pub fn apply_pi_flavor(flavor: PiFlavor, lambda: &Symbol2P, f: &DiscreteField) -> Result<DiscreteField> {
    match flavor {
        PiFlavor::Standard => apply_pi_full(lambda, f),
        PiFlavor::Mixed => apply_pi_mixed(lambda, f),
    }
}

fn check_pair(axis: &GridAxis, cube: &DyadicCube, h: &HaarIndex, depth: u32) -> Result<()> {
    check_cancellative(axis, h)?;
    if axis.ancestor(&h.cube, depth) != Some(*cube) || h.cube.level != cube.level + depth {
        return Err(Error::InvalidAxis(format!(
            "{:?} is not a depth-{depth} descendant of {cube:?}",
            h.cube
        )));
    }
    Ok(())
}

pub(crate) fn check_model_indices(
    axis: &GridAxis,
    cube: &DyadicCube,
    input: &HaarIndex,
    output: &HaarIndex,
    i1: u32,
    i2: u32,
) -> Result<()> {
    let top = max_cube_level(axis, i1.max(i2))?;
    axis.check_cube(cube)?;
    if cube.level > top {
        return Err(Error::DepthOverflow {
            level: cube.level,
            depth: i1.max(i2),
            finest: axis.levels,
        });
    }
    check_pair(axis, cube, input, i1)?;
    check_pair(axis, cube, output, i2)
}

/// `|K| / (|I_1|^{1/2} |I_2|^{1/2})`.
pub fn entry_scale(axis: &GridAxis, cube: &DyadicCube, input: &HaarIndex, output: &HaarIndex) -> f64 {
    axis.measure(cube) / (axis.measure(&input.cube) * axis.measure(&output.cube)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialEntry {
    pub cube: DyadicCube,
    pub input: HaarIndex,
    pub output: HaarIndex,
    pub symbol: Symbol1P,
}

/// `P f = sum h_{I_2} (x) pi_{b_{K,I_1,I_2}}(<f, h_{I_1}>_1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSymbol2P {
    pub outer: GridAxis,
    pub inner: GridAxis,
    pub i1: u32,
    pub i2: u32,
    pub entries: Vec<PartialEntry>,
}

impl PartialSymbol2P {
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            check_model_indices(&self.outer, &e.cube, &e.input, &e.output, self.i1, self.i2)?;
            if e.symbol.axis != self.inner {
                return Err(Error::AxisMismatch("entry symbol not on the inner axis".into()));
            }
        }
        Ok(())
    }

    /// Largest ratio `bmo(b) / (|I_1|^{1/2}|I_2|^{1/2}/|K|)` over the entries.
    pub fn normalization(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.symbol.bmo() * entry_scale(&self.outer, &e.cube, &e.input, &e.output))
            .fold(0.0, f64::max)
    }

    pub fn to_model(&self) -> ModelOperatorSpec {
        ModelOperatorSpec {
            axis: self.outer.id,
            i1: self.i1,
            i2: self.i2,
            entries: self
                .entries
                .iter()
                .map(|e| ModelEntry {
                    cube: e.cube,
                    input: e.input,
                    output: e.output,
                    operator: InnerOperator::Paraproduct(e.symbol.clone()),
                })
                .collect(),
        }
    }

    /// Entries on every `K` with level `<= band` and all admissible `I_1, I_2`;
    /// each symbol has `bmo = budget |I_1|^{1/2}|I_2|^{1/2}/|K|`.
    pub fn random(outer: GridAxis, inner: GridAxis, i1: u32, i2: u32, band: u32, budget: f64, rng: &mut Rng) -> Result<Self> {
        let top = max_cube_level(&outer, i1.max(i2))?.min(band);
        let mut entries = Vec::new();
        for (cube, input, output) in model_index_set(&outer, top, i1, i2) {
            let b = budget / entry_scale(&outer, &cube, &input, &output);
            entries.push(PartialEntry {
                cube,
                input,
                output,
                symbol: Symbol1P::random(inner, b, rng)?,
            });
        }
        Ok(PartialSymbol2P {
            outer,
            inner,
            i1,
            i2,
            entries,
        })
    }
}

/// All `(K, (I_1, eta_1), (I_2, eta_2))` with `I_1^{(i1)} = I_2^{(i2)} = K`, `level(K) <= top`.
pub fn model_index_set(axis: &GridAxis, top: u32, i1: u32, i2: u32) -> Vec<(DyadicCube, HaarIndex, HaarIndex)> {
    let mut out = Vec::new();
    for cube in axis.cubes_up_to(top) {
        for a in axis.descendants(&cube, i1) {
            for eta in nonzero_patterns(axis) {
                for b in axis.descendants(&cube, i2) {
                    for theta in nonzero_patterns(axis) {
                        out.push((cube, HaarIndex::new(a, eta), HaarIndex::new(b, theta)));
                    }
                }
            }
        }
    }
    out
}

/// Direct evaluation: `sum c_J <f, h_{I_1} (x) 1_J/|J|> h_{I_2} (x) h_J`.
pub fn apply_partial_2p(p: &PartialSymbol2P, f: &DiscreteField) -> Result<DiscreteField> {
    p.validate()?;
    let (o, i) = (p.outer, p.inner);
    with_front(f, &[o, i], |data, cells, row_len, out| {
        for e in &p.entries {
            let hin = haar_weights(&o, &e.input, o.cell_measure());
            let hout = haar_weights(&o, &e.output, 1.0);
            for t in &e.symbol.terms {
                let coef = separable_pair(data, cells, row_len, &[hin.clone(), average_weights(&i, &t.haar.cube)]);
                separable_add(out, cells, row_len, &[hout.clone(), haar_weights(&i, &t.haar, t.value)], &coef);
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriEntryT1 {
    pub cube: DyadicCube,
    pub input: HaarIndex,
    pub output: HaarIndex,
    pub symbol: Symbol2P,
}

/// `sum h_{I_2} (x) Pi_{K,I_1,I_2}(<f, h_{I_1}>_1)` with full bi-parameter inner paraproducts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriSymbolT1 {
    pub outer: GridAxis,
    pub inner: [GridAxis; 2],
    pub i1: u32,
    pub i2: u32,
    pub flavor: PiFlavor,
    pub entries: Vec<TriEntryT1>,
}

impl TriSymbolT1 {
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            check_model_indices(&self.outer, &e.cube, &e.input, &e.output, self.i1, self.i2)?;
            if e.symbol.axes != self.inner {
                return Err(Error::AxisMismatch("entry symbol not on the inner axes".into()));
            }
        }
        Ok(())
    }

    pub fn normalization(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.symbol.product_bmo() * entry_scale(&self.outer, &e.cube, &e.input, &e.output))
            .fold(0.0, f64::max)
    }

    pub fn to_model(&self) -> ModelOperatorSpec {
        ModelOperatorSpec {
            axis: self.outer.id,
            i1: self.i1,
            i2: self.i2,
            entries: self
                .entries
                .iter()
                .map(|e| ModelEntry {
                    cube: e.cube,
                    input: e.input,
                    output: e.output,
                    operator: match self.flavor {
                        PiFlavor::Standard => InnerOperator::PiFull(e.symbol.clone()),
                        PiFlavor::Mixed => InnerOperator::PiMixed(e.symbol.clone()),
                    },
                })
                .collect(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn random(
        outer: GridAxis,
        inner: [GridAxis; 2],
        i1: u32,
        i2: u32,
        flavor: PiFlavor,
        band: u32,
        terms: usize,
        budget: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let top = max_cube_level(&outer, i1.max(i2))?.min(band);
        let mut entries = Vec::new();
        for (cube, input, output) in model_index_set(&outer, top, i1, i2) {
            let b = budget / entry_scale(&outer, &cube, &input, &output);
            entries.push(TriEntryT1 {
                cube,
                input,
                output,
                symbol: Symbol2P::random(inner, terms, b, rng)?,
            });
        }
        Ok(TriSymbolT1 {
            outer,
            inner,
            i1,
            i2,
            flavor,
            entries,
        })
    }
}

pub fn apply_tri_type1(t: &TriSymbolT1, f: &DiscreteField) -> Result<DiscreteField> {
    t.validate()?;
    apply_model(&t.to_model(), f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriEntryT2 {
    /// `K` on the first outer axis, `V` on the second.
    pub cubes: [DyadicCube; 2],
    /// `I_1` and `J_1`.
    pub inputs: [HaarIndex; 2],
    /// `I_2` and `J_2`.
    pub outputs: [HaarIndex; 2],
    pub symbol: Symbol1P,
}

/// `sum h_{I_2} (x) h_{J_2} (x) pi_b(<f, h_{I_1} (x) h_{J_1}>_{1,2})`; `i` depths act
/// on the first outer axis and `j` depths on the second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriSymbolT2 {
    pub outer: [GridAxis; 2],
    pub inner: GridAxis,
    pub i1: u32,
    pub i2: u32,
    pub j1: u32,
    pub j2: u32,
    pub entries: Vec<TriEntryT2>,
}

fn entry_scale_t2(t: &TriSymbolT2, e: &TriEntryT2) -> f64 {
    entry_scale(&t.outer[0], &e.cubes[0], &e.inputs[0], &e.outputs[0])
        * entry_scale(&t.outer[1], &e.cubes[1], &e.inputs[1], &e.outputs[1])
}

impl TriSymbolT2 {
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            check_model_indices(&self.outer[0], &e.cubes[0], &e.inputs[0], &e.outputs[0], self.i1, self.i2)?;
            check_model_indices(&self.outer[1], &e.cubes[1], &e.inputs[1], &e.outputs[1], self.j1, self.j2)?;
            if e.symbol.axis != self.inner {
                return Err(Error::AxisMismatch("entry symbol not on the inner axis".into()));
            }
        }
        Ok(())
    }

    pub fn normalization(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.symbol.bmo() * entry_scale_t2(self, e))
            .fold(0.0, f64::max)
    }

    /// The two-level nesting: a model operator on the first outer axis whose
    /// entries are partial paraproducts on the remaining two axes.
    pub fn to_nested_model(&self) -> ModelOperatorSpec {
        let mut groups: std::collections::BTreeMap<(DyadicCube, HaarIndex, HaarIndex), Vec<PartialEntry>> =
            std::collections::BTreeMap::new();
        for e in &self.entries {
            groups
                .entry((e.cubes[0], e.inputs[0], e.outputs[0]))
                .or_default()
                .push(PartialEntry {
                    cube: e.cubes[1],
                    input: e.inputs[1],
                    output: e.outputs[1],
                    symbol: e.symbol.clone(),
                });
        }
        ModelOperatorSpec {
            axis: self.outer[0].id,
            i1: self.i1,
            i2: self.i2,
            entries: groups
                .into_iter()
                .map(|((cube, input, output), entries)| ModelEntry {
                    cube,
                    input,
                    output,
                    operator: InnerOperator::PartialParaproduct(PartialSymbol2P {
                        outer: self.outer[1],
                        inner: self.inner,
                        i1: self.j1,
                        i2: self.j2,
                        entries,
                    }),
                })
                .collect(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn random(
        outer: [GridAxis; 2],
        inner: GridAxis,
        i: [u32; 2],
        j: [u32; 2],
        band: [u32; 2],
        budget: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let top0 = max_cube_level(&outer[0], i[0].max(i[1]))?.min(band[0]);
        let top1 = max_cube_level(&outer[1], j[0].max(j[1]))?.min(band[1]);
        let first = model_index_set(&outer[0], top0, i[0], i[1]);
        let second = model_index_set(&outer[1], top1, j[0], j[1]);
        let mut t = TriSymbolT2 {
            outer,
            inner,
            i1: i[0],
            i2: i[1],
            j1: j[0],
            j2: j[1],
            entries: Vec::new(),
        };
        for (k, i1, i2) in &first {
            for (v, j1, j2) in &second {
                let mut e = TriEntryT2 {
                    cubes: [*k, *v],
                    inputs: [*i1, *j1],
                    outputs: [*i2, *j2],
                    symbol: Symbol1P::zero(inner),
                };
                e.symbol = Symbol1P::random(inner, budget / entry_scale_t2(&t, &e), rng)?;
                t.entries.push(e);
            }
        }
        Ok(t)
    }
}

/// Direct evaluation over the three axes.
pub fn apply_tri_type2(t: &TriSymbolT2, f: &DiscreteField) -> Result<DiscreteField> {
    t.validate()?;
    let [a, b] = t.outer;
    let c = t.inner;
    with_front(f, &[a, b, c], |data, cells, row_len, out| {
        for e in &t.entries {
            let ha = haar_weights(&a, &e.inputs[0], a.cell_measure());
            let hb = haar_weights(&b, &e.inputs[1], b.cell_measure());
            let oa = haar_weights(&a, &e.outputs[0], 1.0);
            let ob = haar_weights(&b, &e.outputs[1], 1.0);
            for term in &e.symbol.terms {
                let coef = separable_pair(
                    data,
                    cells,
                    row_len,
                    &[ha.clone(), hb.clone(), average_weights(&c, &term.haar.cube)],
                );
                separable_add(
                    out,
                    cells,
                    row_len,
                    &[oa.clone(), ob.clone(), haar_weights(&c, &term.haar, term.value)],
                    &coef,
                );
            }
        }
    })
}

/// What [`random_symbol`] should draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SymbolKind {
    OneParameter {
        axis: GridAxis,
    },
    TwoParameter {
        axes: [GridAxis; 2],
        terms: usize,
    },
    Partial {
        outer: GridAxis,
        inner: GridAxis,
        i1: u32,
        i2: u32,
        band: u32,
    },
    TriType1 {
        outer: GridAxis,
        inner: [GridAxis; 2],
        i1: u32,
        i2: u32,
        flavor: PiFlavor,
        band: u32,
        terms: usize,
    },
    TriType2 {
        outer: [GridAxis; 2],
        inner: GridAxis,
        i: [u32; 2],
        j: [u32; 2],
        band: [u32; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Symbol {
    OneParameter(Symbol1P),
    TwoParameter(Symbol2P),
    Partial(PartialSymbol2P),
    TriType1(TriSymbolT1),
    TriType2(TriSymbolT2),
}

impl Symbol {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Draws a symbol and rescales it so its measured norm meets `budget` exactly:
/// `bmo` for one-parameter symbols, the product-BMO estimate for bi-parameter
/// ones, and the per-entry normalizations for partial and tri-parameter kinds.
pub fn random_symbol(kind: &SymbolKind, budget: f64, seed: u64) -> Result<Symbol> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::InvalidBudget(budget));
    }
    let mut rng = rng_for(seed, &[]);
    Ok(match kind {
        SymbolKind::OneParameter { axis } => Symbol::OneParameter(Symbol1P::random(*axis, budget, &mut rng)?),
        SymbolKind::TwoParameter { axes, terms } => {
            Symbol::TwoParameter(Symbol2P::random(*axes, *terms, budget, &mut rng)?)
        }
        SymbolKind::Partial {
            outer,
            inner,
            i1,
            i2,
            band,
        } => Symbol::Partial(PartialSymbol2P::random(*outer, *inner, *i1, *i2, *band, budget, &mut rng)?),
        SymbolKind::TriType1 {
            outer,
            inner,
            i1,
            i2,
            flavor,
            band,
            terms,
        } => Symbol::TriType1(TriSymbolT1::random(
            *outer, *inner, *i1, *i2, *flavor, *band, *terms, budget, &mut rng,
        )?),
        SymbolKind::TriType2 {
            outer,
            inner,
            i,
            j,
            band,
        } => Symbol::TriType2(TriSymbolT2::random(*outer, *inner, *i, *j, *band, budget, &mut rng)?),
    })
}

/// A uniformly random cancellative Haar index of the given level.
pub fn random_haar(axis: &GridAxis, level: u32, rng: &mut Rng) -> HaarIndex {
    let index = rng.random_range(0..axis.cubes_per_level(level));
    let eta = rng.random_range(1..(1u32 << axis.dim));
    HaarIndex::new(
        DyadicCube {
            axis: axis.id,
            level,
            index,
        },
        eta,
    )
}
