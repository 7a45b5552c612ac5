//! Truncated dyadic grids, Haar systems, martingale differences and blocks.
//!
//! Cells of an axis with dimension `n` and finest level `L` are stored in
//! Morton (bit-interleaved) order, so every dyadic cube is a contiguous range
//! of finest cells and the children of cube `m` are `m * 2^n + c`. In a child
//! code `c` the most significant of the `n` bits belongs to coordinate 0, and
//! a set bit means the right half along that coordinate.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::layout;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AxisId(pub u8);

/// Upper bound on `n * L` for a single axis.
pub const MAX_AXIS_BITS: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridAxis {
    pub id: AxisId,
    /// Spatial dimension `n` of the axis.
    pub dim: u32,
    /// Finest level `L`.
    pub levels: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub axis: AxisId,
    pub level: u32,
    /// Morton index among the `2^{level * n}` cubes of this level.
    pub index: usize,
}

/// A cube plus a sign pattern; bit `n - 1 - t` of `eta` selects coordinate `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HaarIndex {
    pub cube: DyadicCube,
    pub eta: u32,
}

impl HaarIndex {
    pub fn new(cube: DyadicCube, eta: u32) -> Self {
        HaarIndex { cube, eta }
    }

    /// The cancellative one-dimensional Haar function of `cube`.
    pub fn cancellative(cube: DyadicCube) -> Self {
        HaarIndex { cube, eta: 1 }
    }

    pub fn from_pattern(cube: DyadicCube, pattern: &[bool]) -> Self {
        let eta = pattern.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        HaarIndex { cube, eta }
    }

    pub fn is_cancellative(&self) -> bool {
        self.eta != 0
    }
}

/// Sign of `h^eta` on child `child` of its cube.
pub fn haar_sign(eta: u32, child: usize) -> f64 {
    if (eta & child as u32).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn morton_encode(coords: &[usize], level: u32) -> usize {
    let mut index = 0usize;
    for s in (0..level).rev() {
        for &k in coords {
            index = (index << 1) | ((k >> s) & 1);
        }
    }
    index
}

pub fn morton_decode(index: usize, level: u32, dim: u32) -> Vec<usize> {
    let n = dim as usize;
    let mut coords = vec![0usize; n];
    for s in 0..level as usize {
        for (t, c) in coords.iter_mut().enumerate() {
            let bit = (index >> (s * n + (n - 1 - t))) & 1;
            *c |= bit << s;
        }
    }
    coords
}

impl GridAxis {
    pub fn new(id: AxisId, dim: u32, levels: u32) -> Result<Self> {
        if levels < 1 {
            return Err(Error::InvalidAxis("finest level must be at least 1".into()));
        }
        if dim < 1 || dim * levels > MAX_AXIS_BITS {
            return Err(Error::InvalidAxis(format!(
                "dimension {dim} with {levels} levels is out of range"
            )));
        }
        Ok(GridAxis { id, dim, levels })
    }

    /// One-dimensional axis; panics on `levels == 0`.
    pub fn interval(id: u8, levels: u32) -> Self {
        Self::new(AxisId(id), 1, levels).expect("valid interval axis")
    }

    pub fn cells(&self) -> usize {
        1usize << (self.dim * self.levels)
    }

    pub fn cell_measure(&self) -> f64 {
        (-((self.dim * self.levels) as f64)).exp2()
    }

    pub fn branch(&self) -> usize {
        1usize << self.dim
    }

    pub fn cubes_per_level(&self, level: u32) -> usize {
        1usize << (self.dim * level)
    }

    pub fn root(&self) -> DyadicCube {
        DyadicCube {
            axis: self.id,
            level: 0,
            index: 0,
        }
    }

    pub fn cube(&self, level: u32, index: usize) -> Result<DyadicCube> {
        let q = DyadicCube {
            axis: self.id,
            level,
            index,
        };
        self.check_cube(&q)?;
        Ok(q)
    }

    pub fn cube_at(&self, level: u32, coords: &[usize]) -> Result<DyadicCube> {
        if coords.len() != self.dim as usize {
            return Err(Error::DimensionMismatch {
                expected: self.dim as usize,
                actual: coords.len(),
            });
        }
        if level > self.levels {
            return Err(Error::LevelOutOfRange {
                level,
                max: self.levels,
            });
        }
        if coords.iter().any(|&k| k >= 1usize << level) {
            return Err(Error::CubeOutOfRange { level, index: 0 });
        }
        self.cube(level, morton_encode(coords, level))
    }

    pub fn check_cube(&self, q: &DyadicCube) -> Result<()> {
        if q.axis != self.id {
            return Err(Error::AxisMismatch(format!(
                "cube on {:?} used with axis {:?}",
                q.axis, self.id
            )));
        }
        if q.level > self.levels {
            return Err(Error::LevelOutOfRange {
                level: q.level,
                max: self.levels,
            });
        }
        if q.index >= self.cubes_per_level(q.level) {
            return Err(Error::CubeOutOfRange {
                level: q.level,
                index: q.index,
            });
        }
        Ok(())
    }

    pub fn coords(&self, q: &DyadicCube) -> Vec<usize> {
        morton_decode(q.index, q.level, self.dim)
    }

    pub fn cubes_at(&self, level: u32) -> impl Iterator<Item = DyadicCube> + '_ {
        (0..self.cubes_per_level(level)).map(move |index| DyadicCube {
            axis: self.id,
            level,
            index,
        })
    }

    /// Every cube of levels `0..=max_level`, coarse to fine.
    pub fn cubes_up_to(&self, max_level: u32) -> impl Iterator<Item = DyadicCube> + '_ {
        (0..=max_level.min(self.levels)).flat_map(move |l| self.cubes_at(l))
    }

    pub fn cell_range(&self, q: &DyadicCube) -> Range<usize> {
        let w = 1usize << (self.dim * (self.levels - q.level));
        q.index * w..(q.index + 1) * w
    }

    pub fn cells_in(&self, q: &DyadicCube) -> usize {
        1usize << (self.dim * (self.levels - q.level))
    }

    pub fn measure(&self, q: &DyadicCube) -> f64 {
        (-((self.dim * q.level) as f64)).exp2()
    }

    pub fn children(&self, q: &DyadicCube) -> impl Iterator<Item = DyadicCube> + '_ {
        self.descendants(q, 1)
    }

    pub fn descendants(&self, q: &DyadicCube, depth: u32) -> impl Iterator<Item = DyadicCube> + '_ {
        let k = 1usize << (self.dim * depth);
        let (axis, level, base) = (q.axis, q.level + depth, q.index * k);
        (0..k).map(move |c| DyadicCube {
            axis,
            level,
            index: base + c,
        })
    }

    pub fn parent(&self, q: &DyadicCube) -> Option<DyadicCube> {
        self.ancestor(q, 1)
    }

    /// `Q^{(k)}`, the ancestor `k` generations up.
    pub fn ancestor(&self, q: &DyadicCube, k: u32) -> Option<DyadicCube> {
        (q.level >= k).then(|| DyadicCube {
            axis: q.axis,
            level: q.level - k,
            index: q.index >> (self.dim * k),
        })
    }

    pub fn contains(&self, outer: &DyadicCube, inner: &DyadicCube) -> bool {
        inner.level >= outer.level && self.ancestor(inner, inner.level - outer.level) == Some(*outer)
    }

    /// The cube of level `level` containing finest cell `cell`.
    pub fn cube_of_cell(&self, cell: usize, level: u32) -> DyadicCube {
        DyadicCube {
            axis: self.id,
            level,
            index: cell >> (self.dim * (self.levels - level)),
        }
    }

    /// Child code of finest cell `cell` inside its level-`level` cube.
    pub fn child_code(&self, cell: usize, level: u32) -> usize {
        (cell >> (self.dim * (self.levels - level - 1))) & (self.branch() - 1)
    }
}

/// A lattice-valued function on a product of truncated grids, constant on finest cells.
/// Values are row-major over the cells of each axis (in axis order) followed by the
/// lattice component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteField {
    axes: Vec<GridAxis>,
    lattice: LatticeSpec,
    values: Vec<f64>,
}

fn check_axes(axes: &[GridAxis]) -> Result<()> {
    for (k, a) in axes.iter().enumerate() {
        GridAxis::new(a.id, a.dim, a.levels)?;
        if axes[..k].iter().any(|b| b.id == a.id) {
            return Err(Error::AxisMismatch(format!("axis {:?} listed twice", a.id)));
        }
    }
    Ok(())
}

impl DiscreteField {
    pub fn zeros(axes: Vec<GridAxis>, lattice: LatticeSpec) -> Result<Self> {
        check_axes(&axes)?;
        lattice.validate()?;
        let len = axes.iter().map(|a| a.cells()).product::<usize>() * lattice.dim();
        Ok(DiscreteField {
            axes,
            lattice,
            values: vec![0.0; len],
        })
    }

    pub fn from_values(axes: Vec<GridAxis>, lattice: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        let mut f = Self::zeros(axes, lattice)?;
        if values.len() != f.values.len() {
            return Err(Error::DimensionMismatch {
                expected: f.values.len(),
                actual: values.len(),
            });
        }
        f.values = values;
        Ok(f)
    }

    /// Builds a field cell by cell; `fill(cells, out)` receives one cell index
    /// per axis and writes the `d` lattice components.
    pub fn from_fn(
        axes: Vec<GridAxis>,
        lattice: LatticeSpec,
        mut fill: impl FnMut(&[usize], &mut [f64]),
    ) -> Result<Self> {
        let mut f = Self::zeros(axes, lattice)?;
        let d = f.lattice.dim();
        let shape: Vec<usize> = f.axes.iter().map(|a| a.cells()).collect();
        let mut cells = vec![0usize; shape.len()];
        for chunk in f.values.chunks_mut(d) {
            fill(&cells, chunk);
            for k in (0..cells.len()).rev() {
                cells[k] += 1;
                if cells[k] < shape[k] {
                    break;
                }
                cells[k] = 0;
            }
        }
        Ok(f)
    }

    /// A scalar field on one axis.
    pub fn scalar(axis: GridAxis, values: Vec<f64>) -> Result<Self> {
        Self::from_values(vec![axis], LatticeSpec::scalar(), values)
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn lattice_dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.cells()).product()
    }

    /// Measure of one finest cell of the product grid.
    pub fn cell_measure(&self) -> f64 {
        self.axes.iter().map(|a| a.cell_measure()).product()
    }

    /// Cells per axis followed by the lattice dimension.
    pub fn shape(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.axes.iter().map(|a| a.cells()).collect();
        s.push(self.lattice.dim());
        s
    }

    pub fn axis_position(&self, id: AxisId) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.id == id)
            .ok_or(Error::AxisAbsent(id))
    }

    pub fn axis(&self, id: AxisId) -> Result<&GridAxis> {
        Ok(&self.axes[self.axis_position(id)?])
    }

    pub fn same_shape(&self, other: &DiscreteField) -> bool {
        self.axes == other.axes && self.lattice == other.lattice
    }

    pub fn with_values(&self, values: Vec<f64>) -> DiscreteField {
        assert_eq!(values.len(), self.values.len());
        DiscreteField {
            axes: self.axes.clone(),
            lattice: self.lattice.clone(),
            values,
        }
    }

    pub fn zeros_like(&self) -> DiscreteField {
        self.with_values(vec![0.0; self.values.len()])
    }

    /// Lattice value at one cell per axis.
    pub fn value_at(&self, cells: &[usize]) -> &[f64] {
        let d = self.lattice.dim();
        let mut off = 0usize;
        for (a, &c) in self.axes.iter().zip(cells) {
            off = off * a.cells() + c;
        }
        &self.values[off * d..(off + 1) * d]
    }

    pub fn scale(&self, c: f64) -> DiscreteField {
        self.with_values(self.values.iter().map(|v| c * v).collect())
    }

    pub fn add(&self, other: &DiscreteField) -> Result<DiscreteField> {
        self.check_same(other)?;
        Ok(self.with_values(
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &DiscreteField) -> Result<DiscreteField> {
        self.check_same(other)?;
        Ok(self.with_values(
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn check_same(&self, other: &DiscreteField) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::AxisMismatch("fields have different shapes".into()));
        }
        Ok(())
    }

    /// `int <f, g>` with the counting pairing on lattice components.
    pub fn inner(&self, other: &DiscreteField) -> Result<f64> {
        self.check_same(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.cell_measure())
    }

    /// Integral over the whole domain, per lattice component.
    pub fn integral(&self) -> Vec<f64> {
        let d = self.lattice.dim();
        let mut acc = vec![0.0; d];
        for chunk in self.values.chunks(d) {
            for (a, v) in acc.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        let m = self.cell_measure();
        acc.iter().map(|a| a * m).collect()
    }

    pub fn max_abs_diff(&self, other: &DiscreteField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }

    /// Pointwise product of fields on disjoint axes; at most one may be lattice-valued.
    pub fn tensor(&self, other: &DiscreteField) -> Result<DiscreteField> {
        if self.axes.iter().any(|a| other.axes.iter().any(|b| b.id == a.id)) {
            return Err(Error::AxisMismatch("tensor factors share an axis".into()));
        }
        let (d1, d2) = (self.lattice.dim(), other.lattice.dim());
        let lattice = match (d1, d2) {
            (1, _) => other.lattice.clone(),
            (_, 1) => self.lattice.clone(),
            _ => {
                return Err(Error::AxisMismatch(
                    "tensor of two lattice-valued fields".into(),
                ))
            }
        };
        let mut axes = self.axes.clone();
        axes.extend(other.axes.iter().copied());
        let (n1, n2) = (self.cell_count(), other.cell_count());
        let d = lattice.dim();
        let mut values = Vec::with_capacity(n1 * n2 * d);
        for c1 in 0..n1 {
            for c2 in 0..n2 {
                for k in 0..d {
                    let a = self.values[c1 * d1 + if d1 == 1 { 0 } else { k }];
                    let b = other.values[c2 * d2 + if d2 == 1 { 0 } else { k }];
                    values.push(a * b);
                }
            }
        }
        DiscreteField::from_values(axes, lattice, values)
    }

    /// Product of a scalar field with a lattice vector.
    pub fn times_vector(&self, e: &[f64], lattice: LatticeSpec) -> Result<DiscreteField> {
        if self.lattice.dim() != 1 {
            return Err(Error::AxisMismatch("expected a scalar field".into()));
        }
        if e.len() != lattice.dim() {
            return Err(Error::DimensionMismatch {
                expected: lattice.dim(),
                actual: e.len(),
            });
        }
        let values = self
            .values
            .iter()
            .flat_map(|v| e.iter().map(move |x| v * x))
            .collect();
        DiscreteField::from_values(self.axes.clone(), lattice, values)
    }

    /// Values permuted so that the axes at `positions` lead, in that order.
    pub(crate) fn front(&self, positions: &[usize]) -> Vec<f64> {
        let shape = self.shape();
        let perm = layout::front_perm(shape.len(), positions);
        layout::permute(&self.values, &shape, &perm)
    }

    /// Inverse of [`DiscreteField::front`], producing a field shaped like `self`.
    #[allow(clippy::wrong_self_convention)]
    pub(crate) fn from_front(&self, positions: &[usize], data: &[f64]) -> DiscreteField {
        let shape = self.shape();
        let perm = layout::front_perm(shape.len(), positions);
        self.with_values(layout::unpermute(data, &shape, &perm))
    }

    /// The same values with the axes reordered to `order`.
    pub fn reorder_axes(&self, order: &[AxisId]) -> Result<DiscreteField> {
        if order.len() != self.axes.len() {
            return Err(Error::AxisMismatch("reorder needs every axis once".into()));
        }
        let positions = order
            .iter()
            .map(|&id| self.axis_position(id))
            .collect::<Result<Vec<_>>>()?;
        let data = self.front(&positions);
        let axes = positions.iter().map(|&p| self.axes[p]).collect();
        DiscreteField::from_values(axes, self.lattice.clone(), data)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: DiscreteField =
            serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        DiscreteField::from_values(f.axes, f.lattice, f.values)
    }

    /// Binary form: magic, header length, JSON header, little-endian values.
    pub fn to_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Header<'a> {
            axes: &'a [GridAxis],
            lattice: &'a LatticeSpec,
        }
        let header = serde_json::to_vec(&Header {
            axes: &self.axes,
            lattice: &self.lattice,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + 8 * self.values.len());
        out.extend_from_slice(FIELD_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            axes: Vec<GridAxis>,
            lattice: LatticeSpec,
        }
        let bad = |m: &str| Error::Serialization(m.to_string());
        if bytes.len() < 8 || &bytes[..4] != FIELD_MAGIC {
            return Err(bad("missing field header"));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| Error::Serialization(e.to_string()))?;
        let rest = &bytes[8 + hlen..];
        if !rest.len().is_multiple_of(8) {
            return Err(bad("truncated values"));
        }
        let values = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        DiscreteField::from_values(header.axes, header.lattice, values)
    }
}

const FIELD_MAGIC: &[u8; 4] = b"DYF1";

/// `h_I^eta` evaluated on finest cell `cell` of `axis`.
pub fn haar_value(axis: &GridAxis, h: &HaarIndex, cell: usize) -> f64 {
    let q = &h.cube;
    if !axis.cell_range(q).contains(&cell) {
        return 0.0;
    }
    let amp = axis.measure(q).powf(-0.5);
    if h.eta == 0 {
        amp
    } else {
        amp * haar_sign(h.eta, axis.child_code(cell, q.level))
    }
}

/// Sparse per-cell weights `(cell, h(cell) * scale)` over the support of `h`.
pub(crate) fn haar_weights(axis: &GridAxis, h: &HaarIndex, scale: f64) -> Vec<(usize, f64)> {
    axis.cell_range(&h.cube)
        .map(|c| (c, scale * haar_value(axis, h, c)))
        .collect()
}

/// Constant weights `(cell, w)` over a cube.
pub(crate) fn flat_weights(axis: &GridAxis, q: &DyadicCube, w: f64) -> Vec<(usize, f64)> {
    axis.cell_range(q).map(|c| (c, w)).collect()
}

/// The `L^2`-normalized Haar function `h_I^eta` as a scalar field on `axis`.
pub fn haar_function(axis: &GridAxis, h: &HaarIndex) -> Result<DiscreteField> {
    axis.check_cube(&h.cube)?;
    if h.eta >= 1 << axis.dim {
        return Err(Error::InvalidAxis(format!("sign pattern {} too wide", h.eta)));
    }
    let mut values = vec![0.0; axis.cells()];
    let amp = axis.measure(&h.cube).powf(-0.5);
    if h.eta == 0 {
        for v in &mut values[axis.cell_range(&h.cube)] {
            *v = amp;
        }
    } else {
        if h.cube.level >= axis.levels {
            return Err(Error::FinestCube);
        }
        for (c, child) in axis.children(&h.cube).enumerate() {
            let s = haar_sign(h.eta, c) * amp;
            for v in &mut values[axis.cell_range(&child)] {
                *v = s;
            }
        }
    }
    DiscreteField::scalar(*axis, values)
}

/// `<f, h>` along `target`, a field over the remaining axes.
pub fn haar_pairing(f: &DiscreteField, h: &HaarIndex, target: AxisId) -> Result<DiscreteField> {
    let pos = f.axis_position(target)?;
    let axis = f.axes[pos];
    if h.cube.axis != target {
        return Err(Error::AxisMismatch("Haar index lives on another axis".into()));
    }
    let hv = haar_function(&axis, h)?;
    let front = f.front(&[pos]);
    let row_len = front.len() / axis.cells();
    let mut out = vec![0.0; row_len];
    let m = axis.cell_measure();
    for r in axis.cell_range(&h.cube) {
        let w = hv.values[r] * m;
        for (o, v) in out.iter_mut().zip(&front[r * row_len..(r + 1) * row_len]) {
            *o += w * v;
        }
    }
    let axes: Vec<GridAxis> = f.axes.iter().filter(|a| a.id != target).copied().collect();
    DiscreteField::from_values(axes, f.lattice.clone(), out)
}

/// Average of `f` over `cube` along its axis, a field over the remaining axes.
pub fn cube_average(f: &DiscreteField, cube: &DyadicCube) -> Result<DiscreteField> {
    let pos = f.axis_position(cube.axis)?;
    let axis = f.axes[pos];
    axis.check_cube(cube)?;
    let front = f.front(&[pos]);
    let row_len = front.len() / axis.cells();
    let s = layout::sum_rows(&front, row_len, axis.cell_range(cube));
    let n = axis.cells_in(cube) as f64;
    let axes: Vec<GridAxis> = f.axes.iter().filter(|a| a.id != cube.axis).copied().collect();
    DiscreteField::from_values(axes, f.lattice.clone(), s.iter().map(|v| v / n).collect())
}

/// Conditional expectation `E_level f` along one axis.
pub fn conditional_expectation(f: &DiscreteField, level: u32, axis_id: AxisId) -> Result<DiscreteField> {
    let pos = f.axis_position(axis_id)?;
    let axis = f.axes[pos];
    if level > axis.levels {
        return Err(Error::LevelOutOfRange {
            level,
            max: axis.levels,
        });
    }
    let front = f.front(&[pos]);
    let row_len = front.len() / axis.cells();
    let mut out = vec![0.0; front.len()];
    for q in axis.cubes_at(level) {
        let r = axis.cell_range(&q);
        let s = layout::sum_rows(&front, row_len, r.clone());
        let n = r.len() as f64;
        layout::add_to_rows(&mut out, row_len, r, &s, 1.0 / n);
    }
    Ok(f.from_front(&[pos], &out))
}

pub(crate) fn check_block_depth(axis: &GridAxis, cube: &DyadicCube, depth: u32) -> Result<()> {
    axis.check_cube(cube)?;
    if cube.level + depth + 1 > axis.levels {
        return Err(Error::DepthOverflow {
            level: cube.level,
            depth,
            finest: axis.levels,
        });
    }
    Ok(())
}

/// `Delta_I f` along `axis`.
pub fn martingale_difference(f: &DiscreteField, cube: &DyadicCube, axis: AxisId) -> Result<DiscreteField> {
    let ax = *f.axis(axis)?;
    ax.check_cube(cube)?;
    if cube.level >= ax.levels {
        return Err(Error::FinestCube);
    }
    martingale_block(f, cube, 0, axis)
}

/// `Delta_K^i f = sum over I with I^{(i)} = K of Delta_I f`, along `axis`.
pub fn martingale_block(f: &DiscreteField, cube: &DyadicCube, depth: u32, axis: AxisId) -> Result<DiscreteField> {
    let pos = f.axis_position(axis)?;
    let ax = f.axes[pos];
    if cube.axis != axis {
        return Err(Error::AxisMismatch("cube lives on another axis".into()));
    }
    check_block_depth(&ax, cube, depth)?;
    let front = f.front(&[pos]);
    let row_len = front.len() / ax.cells();
    let range = ax.cell_range(cube);
    let local = layout::block_rows(
        &front[range.start * row_len..range.end * row_len],
        row_len,
        ax.branch(),
        depth,
    );
    let mut out = vec![0.0; front.len()];
    out[range.start * row_len..range.end * row_len].copy_from_slice(&local);
    Ok(f.from_front(&[pos], &out))
}

/// `Delta_{K x V}^{i,j} f`.
pub fn biparam_block(
    f: &DiscreteField,
    k: &DyadicCube,
    v: &DyadicCube,
    i: u32,
    j: u32,
) -> Result<DiscreteField> {
    if k.axis == v.axis {
        return Err(Error::AxisMismatch("bi-parameter block needs two axes".into()));
    }
    let g = martingale_block(f, v, j, v.axis)?;
    martingale_block(&g, k, i, k.axis)
}

/// Cubes whose level `l` satisfies `l = -j (mod i + 1)`, levels `0..=L`.
pub fn decoupling_subgrid(axis: &GridAxis, i: u32, j: u32) -> Result<Vec<DyadicCube>> {
    if j > i {
        return Err(Error::InvalidSubgrid { i, j });
    }
    Ok((0..=axis.levels)
        .filter(|l| (l + j).is_multiple_of(i + 1))
        .flat_map(|l| axis.cubes_at(l).collect::<Vec<_>>())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn morton_roundtrip() {
        for level in 0..4 {
            for index in 0..(1usize << (2 * level)) {
                let c = morton_decode(index, level, 2);
                assert_eq!(morton_encode(&c, level), index);
            }
        }
    }

    #[test]
    fn child_code_matches_children() {
        let ax = GridAxis::new(AxisId(0), 2, 3).unwrap();
        let q = ax.cube(1, 2).unwrap();
        for (c, ch) in ax.children(&q).enumerate() {
            for cell in ax.cell_range(&ch) {
                assert_eq!(ax.child_code(cell, 1), c);
            }
        }
    }

    #[test]
    fn child_bits_follow_coordinates() {
        let ax = GridAxis::new(AxisId(0), 2, 1).unwrap();
        // right half along coordinate 0, left along coordinate 1
        let q = ax.cube_at(1, &[1, 0]).unwrap();
        assert_eq!(q.index, 0b10);
    }
}
