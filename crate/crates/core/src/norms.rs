//! BMO and product-BMO functionals, square functions, maximal functions, and
//! operator norms.

use std::collections::{BTreeMap, HashMap, HashSet};

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{AxisId, DiscreteField, DyadicCube, GridAxis};
use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, MixedNormSpec};
use crate::layout::sum_rows;
use crate::norm_tree::NormTree;
use crate::operator::{assemble, LinearOp, DENSE_LIMIT};
use crate::paraproduct::Symbol2P;
use crate::rng::{normals, rng_for};

fn scalar_on_axis(b: &DiscreteField, axis: AxisId) -> Result<GridAxis> {
    if b.lattice_dim() != 1 {
        return Err(Error::AxisMismatch("expected a scalar field".into()));
    }
    if b.axes().len() != 1 || b.axes()[0].id != axis {
        return Err(Error::AxisMismatch(format!(
            "expected a field on axis {axis:?} only"
        )));
    }
    Ok(b.axes()[0])
}

/// `sup_I |I|^{-1} int_I |b - <b>_I|` over every truncated dyadic cube.
pub fn bmo_norm(b: &DiscreteField, axis: AxisId) -> Result<f64> {
    let ax = scalar_on_axis(b, axis)?;
    let v = b.values();
    let mut best: f64 = 0.0;
    for q in ax.cubes_up_to(ax.levels - 1) {
        let r = ax.cell_range(&q);
        let n = r.len() as f64;
        let avg = v[r.clone()].iter().sum::<f64>() / n;
        let dev = v[r].iter().map(|x| (x - avg).abs()).sum::<f64>() / n;
        best = best.max(dev);
    }
    Ok(best)
}

/// Squared coefficient mass per support rectangle.
fn rectangle_squares(lambda: &Symbol2P) -> BTreeMap<(DyadicCube, DyadicCube), f64> {
    let mut out = BTreeMap::new();
    for t in &lambda.terms {
        *out.entry((t.first.cube, t.second.cube)).or_insert(0.0) += t.value * t.value;
    }
    out
}

/// `S(A) = (sum |A_{I,J}|^2 1_{I x J} / |I x J|)^{1/2}`, a scalar field on the symbol's axes.
pub fn square_function(a: &Symbol2P) -> DiscreteField {
    let [x, y] = a.axes;
    let cb = y.cells();
    let mut sq = vec![0.0; x.cells() * cb];
    for ((i, j), s) in rectangle_squares(a) {
        let w = s / (x.measure(&i) * y.measure(&j));
        for xa in x.cell_range(&i) {
            for xb in y.cell_range(&j) {
                sq[xa * cb + xb] += w;
            }
        }
    }
    DiscreteField::from_values(
        a.axes.to_vec(),
        LatticeSpec::scalar(),
        sq.into_iter().map(f64::sqrt).collect(),
    )
    .expect("symbol axes are valid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OmegaOrigin {
    Rectangle,
    Superlevel(f64),
    Union(usize, usize),
    Supplied,
}

/// A finite union of finest-cell rectangles in the product of two axes; every
/// point lies in a finest cell contained in the set, which is the admissibility
/// witness.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaSet {
    pub cells: FixedBitSet,
    pub measure: f64,
    pub origin: OmegaOrigin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OmegaCandidateFamily {
    pub axes: [GridAxis; 2],
    pub members: Vec<OmegaSet>,
}

/// Cell bitset of `I x J`, cells indexed `x * cells_b + y`.
pub fn rectangle_mask(axes: &[GridAxis; 2], i: &DyadicCube, j: &DyadicCube) -> FixedBitSet {
    let cb = axes[1].cells();
    let mut m = FixedBitSet::with_capacity(axes[0].cells() * cb);
    for xa in axes[0].cell_range(i) {
        let r = axes[1].cell_range(j);
        m.insert_range(xa * cb + r.start..xa * cb + r.end);
    }
    m
}

impl OmegaCandidateFamily {
    pub fn new(axes: [GridAxis; 2], sets: Vec<FixedBitSet>) -> Result<Self> {
        let mu = axes[0].cell_measure() * axes[1].cell_measure();
        let members = sets
            .into_iter()
            .map(|cells| OmegaSet {
                measure: cells.count_ones(..) as f64 * mu,
                cells,
                origin: OmegaOrigin::Supplied,
            })
            .collect();
        let fam = OmegaCandidateFamily { axes, members };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.axes[0].cells() * self.axes[1].cells();
        for (k, m) in self.members.iter().enumerate() {
            if m.cells.len() != n {
                return Err(Error::InadmissibleSet(format!("member {k} has the wrong cell count")));
            }
            if m.cells.is_clear() {
                return Err(Error::InadmissibleSet(format!("member {k} is empty")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Adds a set unless an identical one is present.
    pub fn push(&mut self, cells: FixedBitSet, origin: OmegaOrigin) {
        if cells.is_clear() || self.members.iter().any(|m| m.cells == cells) {
            return;
        }
        let mu = self.axes[0].cell_measure() * self.axes[1].cell_measure();
        self.members.push(OmegaSet {
            measure: cells.count_ones(..) as f64 * mu,
            cells,
            origin,
        });
    }
}

/// `sup_Omega (|Omega|^{-1} sum_{I x J in Omega} |lambda_{I,J}|^2)^{1/2}` over the
/// supplied family: a lower bound for the product-BMO norm.
pub fn product_bmo_estimate(lambda: &Symbol2P, fam: &OmegaCandidateFamily) -> Result<f64> {
    if fam.axes != lambda.axes {
        return Err(Error::AxisMismatch("family and symbol live on different axes".into()));
    }
    fam.validate()?;
    let rects: Vec<(FixedBitSet, f64)> = rectangle_squares(lambda)
        .into_iter()
        .map(|((i, j), s)| (rectangle_mask(&lambda.axes, &i, &j), s))
        .collect();
    let mut best: f64 = 0.0;
    for m in &fam.members {
        let s: f64 = rects
            .iter()
            .filter(|(mask, _)| mask.is_subset(&m.cells))
            .map(|(_, s)| s)
            .sum();
        best = best.max((s / m.measure).sqrt());
    }
    Ok(best)
}

/// Support rectangles, superlevel sets `{S > t}` of the square function over
/// its attained values, and pairwise unions of all of these.
pub fn default_omega_family(lambda: &Symbol2P) -> OmegaCandidateFamily {
    let axes = lambda.axes;
    let mut fam = OmegaCandidateFamily {
        axes,
        members: Vec::new(),
    };
    for (i, j) in rectangle_squares(lambda).keys() {
        fam.push(rectangle_mask(&axes, i, j), OmegaOrigin::Rectangle);
    }
    let s = square_function(lambda);
    let mut levels: Vec<f64> = s.values().to_vec();
    levels.push(0.0);
    levels.sort_by(|a, b| a.total_cmp(b));
    levels.dedup();
    for &t in &levels {
        let mut m = FixedBitSet::with_capacity(s.values().len());
        for (c, &v) in s.values().iter().enumerate() {
            if v > t {
                m.insert(c);
            }
        }
        fam.push(m, OmegaOrigin::Superlevel(t));
    }
    let base = fam.members.len();
    let mut seen: HashSet<FixedBitSet> = fam.members.iter().map(|m| m.cells.clone()).collect();
    for a in 0..base {
        for b in a + 1..base {
            let mut u = fam.members[a].cells.clone();
            u.union_with(&fam.members[b].cells);
            if seen.insert(u.clone()) {
                let mu = axes[0].cell_measure() * axes[1].cell_measure();
                fam.members.push(OmegaSet {
                    measure: u.count_ones(..) as f64 * mu,
                    cells: u,
                    origin: OmegaOrigin::Union(a, b),
                });
            }
        }
    }
    fam
}

/// `sum |lambda_{I,J}| |A_{I,J}| / (||lambda||_{BMO,est} ||S(A)||_{L^1})`.
pub fn key_estimate_ratio(lambda: &Symbol2P, a: &Symbol2P) -> Result<f64> {
    if lambda.axes != a.axes {
        return Err(Error::AxisMismatch("coefficient maps live on different axes".into()));
    }
    let index: HashMap<_, f64> = a.terms.iter().map(|t| ((t.first, t.second), t.value)).collect();
    let lhs: f64 = lambda
        .terms
        .iter()
        .filter_map(|t| index.get(&(t.first, t.second)).map(|v| (t.value * v).abs()))
        .sum();
    if lhs == 0.0 {
        return Ok(0.0);
    }
    let bmo = product_bmo_estimate(lambda, &default_omega_family(lambda))?;
    let s = square_function(a);
    let l1 = NormTree::l1_scalar(&a.axes).evaluate(s.values());
    let denom = bmo * l1;
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(lhs / denom)
}

/// `M f(x) = sup_{Q containing x} <|f|>_Q` along one axis, componentwise in the lattice.
pub fn maximal_1p(f: &DiscreteField, axis: AxisId) -> Result<DiscreteField> {
    let pos = f.axis_position(axis)?;
    let ax = f.axes()[pos];
    let data: Vec<f64> = f.front(&[pos]).iter().map(|v| v.abs()).collect();
    let row_len = data.len() / ax.cells();
    let mut out = data.clone();
    for q in ax.cubes_up_to(ax.levels) {
        let r = ax.cell_range(&q);
        let n = r.len() as f64;
        let avg: Vec<f64> = sum_rows(&data, row_len, r.clone()).iter().map(|s| s / n).collect();
        for c in r {
            for (o, a) in out[c * row_len..(c + 1) * row_len].iter_mut().zip(&avg) {
                *o = o.max(*a);
            }
        }
    }
    Ok(f.from_front(&[pos], &out))
}

/// Strong maximal function: sup of `<|f|>_{I x J}` over dyadic rectangles containing the point.
pub fn strong_maximal(f: &DiscreteField, axes: [AxisId; 2]) -> Result<DiscreteField> {
    let pos = [f.axis_position(axes[0])?, f.axis_position(axes[1])?];
    let (a, b) = (f.axes()[pos[0]], f.axes()[pos[1]]);
    let data: Vec<f64> = f.front(&pos).iter().map(|v| v.abs()).collect();
    let cb = b.cells();
    let row_len = data.len() / (a.cells() * cb);
    let mut out = data.clone();
    for i in a.cubes_up_to(a.levels) {
        let ra = a.cell_range(&i);
        for j in b.cubes_up_to(b.levels) {
            let rb = b.cell_range(&j);
            let mut acc = vec![0.0; row_len];
            for xa in ra.clone() {
                let s = sum_rows(&data, row_len, xa * cb + rb.start..xa * cb + rb.end);
                for (x, v) in acc.iter_mut().zip(&s) {
                    *x += v;
                }
            }
            let n = (ra.len() * rb.len()) as f64;
            for xa in ra.clone() {
                for c in xa * cb + rb.start..xa * cb + rb.end {
                    for (o, v) in out[c * row_len..(c + 1) * row_len].iter_mut().zip(&acc) {
                        *o = o.max(v / n);
                    }
                }
            }
        }
    }
    Ok(f.from_front(&pos, &out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaximalKind {
    OneParameter(AxisId),
    Strong([AxisId; 2]),
}

pub fn apply_maximal(kind: MaximalKind, f: &DiscreteField) -> Result<DiscreteField> {
    match kind {
        MaximalKind::OneParameter(a) => maximal_1p(f, a),
        MaximalKind::Strong(ab) => strong_maximal(f, ab),
    }
}

/// Values of a family of equally shaped fields interleaved as `[cells..., d, j]`.
pub(crate) fn stack_family(fields: &[DiscreteField]) -> Result<Vec<f64>> {
    let first = fields.first().ok_or_else(|| Error::Empty("field family".into()))?;
    for f in fields {
        first.check_same(f)?;
    }
    let m = fields.len();
    let mut out = vec![0.0; first.values().len() * m];
    for (j, f) in fields.iter().enumerate() {
        for (k, v) in f.values().iter().enumerate() {
            out[k * m + j] = *v;
        }
    }
    Ok(out)
}

/// `||(sum_j (M f_j)^r)^{1/r}|| / ||(sum_j |f_j|^r)^{1/r}||` in the given mixed norm.
pub fn fefferman_stein_ratio(fields: &[DiscreteField], r: f64, spec: &MixedNormSpec, kind: MaximalKind) -> Result<f64> {
    let first = fields.first().ok_or_else(|| Error::Empty("field family".into()))?;
    crate::lattice::check_exponent(r)?;
    if spec.lattice.dim() != first.lattice_dim() {
        return Err(Error::DimensionMismatch {
            expected: first.lattice_dim(),
            actual: spec.lattice.dim(),
        });
    }
    let tree = NormTree::for_family(first.axes(), spec, Some((fields.len(), r)))?;
    let maximal = fields
        .iter()
        .map(|f| apply_maximal(kind, f))
        .collect::<Result<Vec<_>>>()?;
    let num = tree.evaluate(&stack_family(&maximal)?);
    let den = tree.evaluate(&stack_family(fields)?);
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Relative improvement below which one restart stops early.
    pub tolerance: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            restarts: 20,
            iterations: 60,
            seed: 0,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NormMode {
    ExactSvd,
    AscentSearch(SearchOptions),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMethod {
    ExactSvd,
    AscentSearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub estimate: f64,
    pub method: NormMethod,
    pub restarts: usize,
    pub iterations: usize,
    /// True for search-based estimates, which are certified lower bounds.
    pub lower_bound: bool,
    pub seeds: Vec<u64>,
    /// Unit-norm input attaining the estimate (search mode only).
    #[serde(skip)]
    pub witness: Vec<f64>,
}

fn transpose_op<'a>(op: &'a dyn LinearOp, dense: &'a Option<crate::operator::DenseOperator>) -> impl Fn(&[f64]) -> Vec<f64> + Sync + 'a {
    move |y: &[f64]| match dense {
        Some(m) => m.apply_adjoint(y).expect("dense adjoint"),
        None => op.apply_adjoint(y).expect("adjoint available"),
    }
}

/// One run of the nonlinear power method `x <- grad N_in^*(T^t grad N_out(T x))`;
/// `N_out(T x) / N_in(x)` is nondecreasing along the iteration.
pub(crate) fn power_search(
    forward: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    backward: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    n_in: &NormTree,
    n_out: &NormTree,
    x0: Vec<f64>,
    iterations: usize,
    tolerance: f64,
) -> (f64, Vec<f64>) {
    let dual_in = n_in.dual();
    let s = n_in.evaluate(&x0);
    if s == 0.0 {
        return (0.0, x0);
    }
    let mut x: Vec<f64> = x0.iter().map(|v| v / s).collect();
    let mut best = 0.0;
    let mut witness = x.clone();
    for _ in 0..iterations.max(1) {
        let y = forward(&x);
        let (v, g) = n_out.value_and_gradient(&y);
        let improved = v > best * (1.0 + tolerance);
        if v > best {
            best = v;
            witness = x.clone();
        }
        if !improved || v == 0.0 {
            break;
        }
        let z = backward(&g);
        let (zn, next) = dual_in.value_and_gradient(&z);
        if zn == 0.0 {
            break;
        }
        x = next;
    }
    (best, witness)
}

/// `||T||` from `input` to `output`: exact largest singular value when both norms
/// are Hilbertian, otherwise the best of several seeded ascent runs.
pub fn operator_norm(op: &dyn LinearOp, input: &MixedNormSpec, output: &MixedNormSpec, mode: &NormMode) -> Result<NormReport> {
    let n_in = NormTree::for_field(&op.domain().axes, input)?;
    let n_out = NormTree::for_field(&op.codomain().axes, output)?;
    if input.lattice.dim() != op.domain().lattice.dim() || output.lattice.dim() != op.codomain().lattice.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.domain().lattice.dim(),
            actual: input.lattice.dim(),
        });
    }
    match mode {
        NormMode::ExactSvd => {
            let (Some(w_in), Some(w_out)) = (n_in.hilbert_weights(), n_out.hilbert_weights()) else {
                return Err(Error::ExactModeUnavailable { max_dim: DENSE_LIMIT });
            };
            if op.domain().len().max(op.codomain().len()) > DENSE_LIMIT {
                return Err(Error::ExactModeUnavailable { max_dim: DENSE_LIMIT });
            }
            let dense = assemble(op)?;
            let mut m = dense.to_nalgebra();
            for (i, mut row) in m.row_iter_mut().enumerate() {
                row *= w_out[i].sqrt();
            }
            for (j, mut col) in m.column_iter_mut().enumerate() {
                col /= w_in[j].sqrt();
            }
            let sv = m.singular_values();
            Ok(NormReport {
                estimate: sv.iter().fold(0.0f64, |a, &b| a.max(b)),
                method: NormMethod::ExactSvd,
                restarts: 0,
                iterations: 0,
                lower_bound: false,
                seeds: Vec::new(),
                witness: Vec::new(),
            })
        }
        NormMode::AscentSearch(opts) => {
            let dense = if op.apply_adjoint(&vec![0.0; op.codomain().len()]).is_some() {
                None
            } else {
                Some(assemble(op)?)
            };
            let backward = transpose_op(op, &dense);
            let forward = |x: &[f64]| op.apply(x);
            let seeds: Vec<u64> = (0..opts.restarts.max(1) as u64)
                .map(|r| crate::rng::derive_seed(opts.seed, &[r]))
                .collect();
            let runs: Vec<(f64, Vec<f64>)> = seeds
                .par_iter()
                .map(|&s| {
                    let mut rng = rng_for(s, &[]);
                    let x0 = normals(&mut rng, op.domain().len());
                    power_search(&forward, &backward, &n_in, &n_out, x0, opts.iterations, opts.tolerance)
                })
                .collect();
            let (estimate, witness) = runs
                .into_iter()
                .fold((f64::NEG_INFINITY, Vec::new()), |acc, r| if r.0 > acc.0 { r } else { acc });
            Ok(NormReport {
                estimate,
                method: NormMethod::AscentSearch,
                restarts: seeds.len(),
                iterations: opts.iterations,
                lower_bound: true,
                seeds,
                witness,
            })
        }
    }
}
