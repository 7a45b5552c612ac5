//! Operator-valued averaging operators and dyadic shifts in one and two parameters.
//!
//! Kernels are piecewise constant on products of dyadic subcubes; the
//! pieces of `a_K` partition `K x K`.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dyadic::{AxisId, DiscreteField, DyadicCube, GridAxis};
use crate::error::{Error, Result};
use crate::layout::{add_to_rows, block_rows, sum_rows};
use crate::matrix::Matrix;
use crate::operator::{FieldShape, LinearOp};
use crate::rng::{normal, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelPiece1P {
    pub x: DyadicCube,
    pub y: DyadicCube,
    pub value: Matrix,
}

/// The kernel `a_K` of one averaging operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingKernel {
    pub cube: DyadicCube,
    pub pieces: Vec<KernelPiece1P>,
}

/// How random kernel values are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelValues {
    /// `c * Id` with `c` uniform in `[-1, 1]`, so `sup |a| <= 1`.
    ScalarIdentity,
    /// Independent standard normal matrix entries.
    GaussianMatrix,
}

fn draw_value(rng: &mut Rng, d: usize, values: KernelValues) -> Matrix {
    match values {
        KernelValues::ScalarIdentity => Matrix::scalar(d, rng.random_range(-1.0..=1.0)),
        KernelValues::GaussianMatrix => Matrix {
            dim: d,
            entries: (0..d * d).map(|_| normal(rng)).collect(),
        },
    }
}

fn local_range(axis: &GridAxis, outer: &DyadicCube, q: &DyadicCube) -> Result<std::ops::Range<usize>> {
    axis.check_cube(q)?;
    if !axis.contains(outer, q) {
        return Err(Error::KernelMismatch(format!(
            "piece cube {q:?} not inside {outer:?}"
        )));
    }
    let base = axis.cell_range(outer).start;
    let r = axis.cell_range(q);
    Ok(r.start - base..r.end - base)
}

impl AveragingKernel {
    /// `a_K` constant on `K x K`.
    pub fn constant(cube: DyadicCube, value: Matrix) -> Self {
        AveragingKernel {
            cube,
            pieces: vec![KernelPiece1P {
                x: cube,
                y: cube,
                value,
            }],
        }
    }

    /// Pieces on the product of descendants at the given depths, values drawn at random.
    pub fn random(
        axis: &GridAxis,
        cube: DyadicCube,
        x_depth: u32,
        y_depth: u32,
        d: usize,
        values: KernelValues,
        rng: &mut Rng,
    ) -> Result<Self> {
        axis.check_cube(&cube)?;
        let room = axis.levels - cube.level;
        let (xd, yd) = (x_depth.min(room), y_depth.min(room));
        let mut pieces = Vec::new();
        for x in axis.descendants(&cube, xd) {
            for y in axis.descendants(&cube, yd) {
                pieces.push(KernelPiece1P {
                    x,
                    y,
                    value: draw_value(rng, d, values),
                });
            }
        }
        Ok(AveragingKernel { cube, pieces })
    }

    /// Checks that the pieces partition `K x K` and carry `d x d` matrices.
    pub fn validate(&self, axis: &GridAxis, d: usize) -> Result<()> {
        axis.check_cube(&self.cube)?;
        let n = axis.cells_in(&self.cube);
        let mut paint = vec![0u8; n * n];
        for p in &self.pieces {
            if p.value.dim != d || p.value.entries.len() != d * d {
                return Err(Error::KernelMismatch(format!(
                    "piece matrix is {}x{}, lattice dimension is {d}",
                    p.value.dim, p.value.dim
                )));
            }
            let xr = local_range(axis, &self.cube, &p.x)?;
            let yr = local_range(axis, &self.cube, &p.y)?;
            for x in xr {
                for y in yr.clone() {
                    paint[x * n + y] += 1;
                }
            }
        }
        if paint.iter().any(|&c| c != 1) {
            return Err(Error::KernelMismatch(format!(
                "pieces of the kernel on {:?} do not partition K x K",
                self.cube
            )));
        }
        Ok(())
    }

    /// `a*(y, x) = a(x, y)^T`.
    pub fn transpose(&self) -> Self {
        AveragingKernel {
            cube: self.cube,
            pieces: self
                .pieces
                .iter()
                .map(|p| KernelPiece1P {
                    x: p.y,
                    y: p.x,
                    value: p.value.transpose(),
                })
                .collect(),
        }
    }

    /// `A_K g` on the rows of `K` only; `g` holds those rows.
    fn average_local(&self, axis: &GridAxis, g: &[f64], row_len: usize) -> Vec<f64> {
        LocalKernel::one(axis, self).apply(g, row_len)
    }
}

type LocalBox = [Range<usize>; 2];

/// A kernel whose pieces point into deduplicated local boxes, so applying it
/// does no cube lookups. One-parameter kernels use boxes of width one along
/// the second direction.
#[derive(Clone, Debug)]
pub(crate) struct LocalKernel {
    nb: usize,
    scale: f64,
    ys: Vec<LocalBox>,
    xs: Vec<LocalBox>,
    /// `(x box, y box, c when the value is c * Id, value)`.
    pieces: Vec<(usize, usize, Option<f64>, Matrix)>,
}

impl LocalKernel {
    fn build<'a>(nb: usize, scale: f64, pieces: impl Iterator<Item = (LocalBox, LocalBox, &'a Matrix)>) -> Self {
        fn slot(boxes: &mut Vec<LocalBox>, index: &mut HashMap<[usize; 4], usize>, b: LocalBox) -> usize {
            *index.entry([b[0].start, b[0].end, b[1].start, b[1].end]).or_insert_with(|| {
                boxes.push(b);
                boxes.len() - 1
            })
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        let (mut xi, mut yi) = (HashMap::new(), HashMap::new());
        let pieces = pieces
            .filter(|(_, _, m)| !m.is_zero())
            .map(|(x, y, m)| (slot(&mut xs, &mut xi, x), slot(&mut ys, &mut yi, y), m.as_scalar(), m.clone()))
            .collect();
        LocalKernel {
            nb,
            scale,
            ys,
            xs,
            pieces,
        }
    }

    fn one(axis: &GridAxis, k: &AveragingKernel) -> Self {
        let base = axis.cell_range(&k.cube).start;
        let local = |q: &DyadicCube| {
            let r = axis.cell_range(q);
            [r.start - base..r.end - base, 0..1]
        };
        let n = axis.cells_in(&k.cube) as f64;
        LocalKernel::build(1, 1.0 / n, k.pieces.iter().map(|p| (local(&p.x), local(&p.y), &p.value)))
    }

    fn two(axes: [&GridAxis; 2], k: &RectangleKernel) -> Self {
        let base = [axes[0].cell_range(&k.rect[0]).start, axes[1].cell_range(&k.rect[1]).start];
        let local = |q: &[DyadicCube; 2]| {
            let (ra, rb) = (axes[0].cell_range(&q[0]), axes[1].cell_range(&q[1]));
            [ra.start - base[0]..ra.end - base[0], rb.start - base[1]..rb.end - base[1]]
        };
        let na = axes[0].cells_in(&k.rect[0]);
        let nb = axes[1].cells_in(&k.rect[1]);
        LocalKernel::build(nb, 1.0 / (na * nb) as f64, k.pieces.iter().map(|p| (local(&p.x), local(&p.y), &p.value)))
    }

    fn apply(&self, g: &[f64], row_len: usize) -> Vec<f64> {
        let nb = self.nb;
        let mut sums = vec![0.0; self.ys.len() * row_len];
        for (acc, [ra, rb]) in sums.chunks_mut(row_len).zip(&self.ys) {
            for a in ra.clone() {
                for (s, v) in acc.iter_mut().zip(&sum_rows(g, row_len, a * nb + rb.start..a * nb + rb.end)) {
                    *s += v;
                }
            }
        }
        let mut xacc = vec![0.0; self.xs.len() * row_len];
        for (x, y, scalar, m) in &self.pieces {
            let src = &sums[y * row_len..(y + 1) * row_len];
            let dst = &mut xacc[x * row_len..(x + 1) * row_len];
            if let Some(c) = *scalar {
                for (o, v) in dst.iter_mut().zip(src) {
                    *o += c * v;
                }
            } else {
                for (sv, dv) in src.chunks(m.dim).zip(dst.chunks_mut(m.dim)) {
                    m.apply_add(sv, dv, 1.0);
                }
            }
        }
        let mut h = vec![0.0; g.len()];
        for (v, [ra, rb]) in xacc.chunks(row_len).zip(&self.xs) {
            for a in ra.clone() {
                add_to_rows(&mut h, row_len, a * nb + rb.start..a * nb + rb.end, v, self.scale);
            }
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelFamily1P {
    pub axis: AxisId,
    pub kernels: Vec<AveragingKernel>,
}

impl KernelFamily1P {
    pub fn new(axis: &GridAxis, kernels: Vec<AveragingKernel>, d: usize) -> Result<Self> {
        let fam = KernelFamily1P {
            axis: axis.id,
            kernels,
        };
        fam.validate(axis, d)?;
        Ok(fam)
    }

    pub fn empty(axis: AxisId) -> Self {
        KernelFamily1P {
            axis,
            kernels: Vec::new(),
        }
    }

    /// `a_K = Id` for every cube of level `<= max_level`.
    pub fn identity(axis: &GridAxis, d: usize, max_level: u32) -> Self {
        KernelFamily1P {
            axis: axis.id,
            kernels: axis
                .cubes_up_to(max_level)
                .map(|k| AveragingKernel::constant(k, Matrix::identity(d)))
                .collect(),
        }
    }

    /// Random kernels on every cube of level `<= max_level`, resolved to depth
    /// `x_depth` in the output variable and `y_depth` in the input variable.
    #[allow(clippy::too_many_arguments)]
    pub fn random(
        axis: &GridAxis,
        max_level: u32,
        x_depth: u32,
        y_depth: u32,
        d: usize,
        values: KernelValues,
        rng: &mut Rng,
    ) -> Result<Self> {
        let kernels = axis
            .cubes_up_to(max_level)
            .map(|k| AveragingKernel::random(axis, k, x_depth, y_depth, d, values, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelFamily1P {
            axis: axis.id,
            kernels,
        })
    }

    pub fn validate(&self, axis: &GridAxis, d: usize) -> Result<()> {
        if axis.id != self.axis {
            return Err(Error::AxisMismatch("kernel family on another axis".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for k in &self.kernels {
            if !seen.insert(k.cube) {
                return Err(Error::KernelMismatch(format!("cube {:?} listed twice", k.cube)));
            }
            k.validate(axis, d)?;
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        KernelFamily1P {
            axis: self.axis,
            kernels: self.kernels.iter().map(|k| k.transpose()).collect(),
        }
    }

    /// Every kernel value, in storage order.
    pub fn values(&self) -> Vec<Matrix> {
        self.kernels
            .iter()
            .flat_map(|k| k.pieces.iter().map(|p| p.value.clone()))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec1P {
    pub i1: u32,
    pub i2: u32,
    pub kernels: KernelFamily1P,
    pub claimed_ca: f64,
}

impl ShiftSpec1P {
    pub fn new(i1: u32, i2: u32, kernels: KernelFamily1P, claimed_ca: f64) -> Self {
        ShiftSpec1P {
            i1,
            i2,
            kernels,
            claimed_ca,
        }
    }

    /// Deepest admissible kernel level `L - 1 - max(i1, i2)`.
    pub fn max_level(&self, axis: &GridAxis) -> Result<u32> {
        max_cube_level(axis, self.i1.max(self.i2))
    }

    pub fn check(&self, axis: &GridAxis, d: usize) -> Result<()> {
        let top = self.max_level(axis)?;
        for k in &self.kernels.kernels {
            if k.cube.level > top {
                return Err(Error::DepthOverflow {
                    level: k.cube.level,
                    depth: self.i1.max(self.i2),
                    finest: axis.levels,
                });
            }
        }
        self.kernels.validate(axis, d)
    }
}

pub(crate) fn max_cube_level(axis: &GridAxis, depth: u32) -> Result<u32> {
    if depth + 1 > axis.levels {
        return Err(Error::DepthOverflow {
            level: 0,
            depth,
            finest: axis.levels,
        });
    }
    Ok(axis.levels - 1 - depth)
}

/// `A_K f` along the kernel's axis.
pub fn apply_averaging(kernel: &AveragingKernel, f: &DiscreteField) -> Result<DiscreteField> {
    let pos = f.axis_position(kernel.cube.axis)?;
    let axis = f.axes()[pos];
    kernel.validate(&axis, f.lattice_dim())?;
    let data = f.front(&[pos]);
    let row_len = data.len() / axis.cells();
    let r = axis.cell_range(&kernel.cube);
    let h = kernel.average_local(&axis, &data[r.start * row_len..r.end * row_len], row_len);
    let mut out = vec![0.0; data.len()];
    out[r.start * row_len..r.end * row_len].copy_from_slice(&h);
    Ok(f.from_front(&[pos], &out))
}

/// `sum_K Delta_K^{i2} A_K Delta_K^{i1}` on row-major data whose leading
/// dimension is the cells of `axis`.
pub(crate) fn compile_1p(kernels: &[AveragingKernel], axis: &GridAxis) -> Vec<(Range<usize>, LocalKernel)> {
    kernels.iter().map(|k| (axis.cell_range(&k.cube), LocalKernel::one(axis, k))).collect()
}

pub(crate) fn shift_1p_rows(
    kernels: &[(Range<usize>, LocalKernel)],
    i1: u32,
    i2: u32,
    data: &[f64],
    row_len: usize,
    axis: &GridAxis,
) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (r, k) in kernels {
        let span = r.start * row_len..r.end * row_len;
        let g = block_rows(&data[span.clone()], row_len, axis.branch(), i1);
        let h = k.apply(&g, row_len);
        let o = block_rows(&h, row_len, axis.branch(), i2);
        for (a, b) in out[span].iter_mut().zip(&o) {
            *a += b;
        }
    }
    out
}

pub fn apply_shift_1p(spec: &ShiftSpec1P, f: &DiscreteField) -> Result<DiscreteField> {
    let pos = f.axis_position(spec.kernels.axis)?;
    let axis = f.axes()[pos];
    spec.check(&axis, f.lattice_dim())?;
    let data = f.front(&[pos]);
    let row_len = data.len() / axis.cells();
    let out = shift_1p_rows(&compile_1p(&spec.kernels.kernels, &axis), spec.i1, spec.i2, &data, row_len, &axis);
    Ok(f.from_front(&[pos], &out))
}

/// `S*`: depths swapped, kernels transposed with arguments swapped.
pub fn adjoint_shift(spec: &ShiftSpec1P) -> ShiftSpec1P {
    ShiftSpec1P {
        i1: spec.i2,
        i2: spec.i1,
        kernels: spec.kernels.transpose(),
        claimed_ca: spec.claimed_ca,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelPiece2P {
    /// Output-variable cubes, one per axis.
    pub x: [DyadicCube; 2],
    /// Input-variable cubes, one per axis.
    pub y: [DyadicCube; 2],
    pub value: Matrix,
}

/// The kernel `a_{K,V}` on `(K x V) x (K x V)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangleKernel {
    pub rect: [DyadicCube; 2],
    pub pieces: Vec<KernelPiece2P>,
}

impl RectangleKernel {
    pub fn constant(rect: [DyadicCube; 2], value: Matrix) -> Self {
        RectangleKernel {
            rect,
            pieces: vec![KernelPiece2P {
                x: rect,
                y: rect,
                value,
            }],
        }
    }

    /// Pieces on products of descendants: `x_depth` / `y_depth` per axis.
    pub fn random(
        axes: [&GridAxis; 2],
        rect: [DyadicCube; 2],
        x_depth: [u32; 2],
        y_depth: [u32; 2],
        d: usize,
        values: KernelValues,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for t in 0..2 {
            axes[t].check_cube(&rect[t])?;
            let room = axes[t].levels - rect[t].level;
            xs.push(axes[t].descendants(&rect[t], x_depth[t].min(room)).collect::<Vec<_>>());
            ys.push(axes[t].descendants(&rect[t], y_depth[t].min(room)).collect::<Vec<_>>());
        }
        let mut pieces = Vec::new();
        for &xa in &xs[0] {
            for &xb in &xs[1] {
                for &ya in &ys[0] {
                    for &yb in &ys[1] {
                        pieces.push(KernelPiece2P {
                            x: [xa, xb],
                            y: [ya, yb],
                            value: draw_value(rng, d, values),
                        });
                    }
                }
            }
        }
        Ok(RectangleKernel { rect, pieces })
    }

    /// `a_{K,V}((x1, x2), (y1, y2)) = a_K(x1, y1) b_V(x2, y2)` for scalar-valued `b_V`.
    pub fn tensor(first: &AveragingKernel, second: &AveragingKernel) -> Result<Self> {
        let mut pieces = Vec::new();
        for p in &first.pieces {
            for q in &second.pieces {
                if q.value.dim != 1 {
                    return Err(Error::KernelMismatch(
                        "second tensor factor must be scalar".into(),
                    ));
                }
                pieces.push(KernelPiece2P {
                    x: [p.x, q.x],
                    y: [p.y, q.y],
                    value: p.value.scaled(q.value.entries[0]),
                });
            }
        }
        Ok(RectangleKernel {
            rect: [first.cube, second.cube],
            pieces,
        })
    }

    pub fn validate(&self, axes: [&GridAxis; 2], d: usize) -> Result<()> {
        let na = axes[0].cells_in(&self.rect[0]);
        let nb = axes[1].cells_in(&self.rect[1]);
        let side = na * nb;
        let mut paint = vec![0u8; side * side];
        for p in &self.pieces {
            if p.value.dim != d || p.value.entries.len() != d * d {
                return Err(Error::KernelMismatch(format!(
                    "piece matrix is {}x{}, lattice dimension is {d}",
                    p.value.dim, p.value.dim
                )));
            }
            let xa = local_range(axes[0], &self.rect[0], &p.x[0])?;
            let xb = local_range(axes[1], &self.rect[1], &p.x[1])?;
            let ya = local_range(axes[0], &self.rect[0], &p.y[0])?;
            let yb = local_range(axes[1], &self.rect[1], &p.y[1])?;
            for a in xa {
                for b in xb.clone() {
                    let xi = a * nb + b;
                    for c in ya.clone() {
                        for e in yb.clone() {
                            paint[xi * side + c * nb + e] += 1;
                        }
                    }
                }
            }
        }
        if paint.iter().any(|&c| c != 1) {
            return Err(Error::KernelMismatch(format!(
                "pieces of the kernel on {:?} do not partition the rectangle product",
                self.rect
            )));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        RectangleKernel {
            rect: self.rect,
            pieces: self
                .pieces
                .iter()
                .map(|p| KernelPiece2P {
                    x: p.y,
                    y: p.x,
                    value: p.value.transpose(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelFamily2P {
    pub axes: [AxisId; 2],
    pub kernels: Vec<RectangleKernel>,
}

impl KernelFamily2P {
    pub fn empty(axes: [AxisId; 2]) -> Self {
        KernelFamily2P {
            axes,
            kernels: Vec::new(),
        }
    }

    /// `a_{K,V} = Id` on every rectangle with levels up to the given maxima.
    pub fn identity(axes: [&GridAxis; 2], d: usize, max_levels: [u32; 2]) -> Self {
        let mut kernels = Vec::new();
        for k in axes[0].cubes_up_to(max_levels[0]) {
            for v in axes[1].cubes_up_to(max_levels[1]) {
                kernels.push(RectangleKernel::constant([k, v], Matrix::identity(d)));
            }
        }
        KernelFamily2P {
            axes: [axes[0].id, axes[1].id],
            kernels,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn random(
        axes: [&GridAxis; 2],
        max_levels: [u32; 2],
        x_depth: [u32; 2],
        y_depth: [u32; 2],
        d: usize,
        values: KernelValues,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut kernels = Vec::new();
        for k in axes[0].cubes_up_to(max_levels[0]) {
            for v in axes[1].cubes_up_to(max_levels[1]) {
                kernels.push(RectangleKernel::random(axes, [k, v], x_depth, y_depth, d, values, rng)?);
            }
        }
        Ok(KernelFamily2P {
            axes: [axes[0].id, axes[1].id],
            kernels,
        })
    }

    pub fn validate(&self, axes: [&GridAxis; 2], d: usize) -> Result<()> {
        if axes[0].id != self.axes[0] || axes[1].id != self.axes[1] {
            return Err(Error::AxisMismatch("kernel family on other axes".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for k in &self.kernels {
            if !seen.insert(k.rect) {
                return Err(Error::KernelMismatch(format!("rectangle {:?} listed twice", k.rect)));
            }
            axes[0].check_cube(&k.rect[0])?;
            axes[1].check_cube(&k.rect[1])?;
            k.validate(axes, d)?;
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        KernelFamily2P {
            axes: self.axes,
            kernels: self.kernels.iter().map(|k| k.transpose()).collect(),
        }
    }

    pub fn values(&self) -> Vec<Matrix> {
        self.kernels
            .iter()
            .flat_map(|k| k.pieces.iter().map(|p| p.value.clone()))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// `i1, i2` act on the first axis of the family, `j1, j2` on the second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec2P {
    pub i1: u32,
    pub i2: u32,
    pub j1: u32,
    pub j2: u32,
    pub kernels: KernelFamily2P,
    pub claimed_ca: f64,
}

impl ShiftSpec2P {
    pub fn max_levels(&self, axes: [&GridAxis; 2]) -> Result<[u32; 2]> {
        Ok([
            max_cube_level(axes[0], self.i1.max(self.i2))?,
            max_cube_level(axes[1], self.j1.max(self.j2))?,
        ])
    }

    pub fn check(&self, axes: [&GridAxis; 2], d: usize) -> Result<()> {
        let top = self.max_levels(axes)?;
        for k in &self.kernels.kernels {
            for t in 0..2 {
                if k.rect[t].level > top[t] {
                    return Err(Error::DepthOverflow {
                        level: k.rect[t].level,
                        depth: if t == 0 {
                            self.i1.max(self.i2)
                        } else {
                            self.j1.max(self.j2)
                        },
                        finest: axes[t].levels,
                    });
                }
            }
        }
        self.kernels.validate(axes, d)
    }
}

pub fn adjoint_shift_2p(spec: &ShiftSpec2P) -> ShiftSpec2P {
    ShiftSpec2P {
        i1: spec.i2,
        i2: spec.i1,
        j1: spec.j2,
        j2: spec.j1,
        kernels: spec.kernels.transpose(),
        claimed_ca: spec.claimed_ca,
    }
}

fn locate_2p(spec: &ShiftSpec2P, f: &DiscreteField) -> Result<([usize; 2], [GridAxis; 2])> {
    let pa = f.axis_position(spec.kernels.axes[0])?;
    let pb = f.axis_position(spec.kernels.axes[1])?;
    let axes = [f.axes()[pa], f.axes()[pb]];
    spec.check([&axes[0], &axes[1]], f.lattice_dim())?;
    Ok(([pa, pb], axes))
}

/// Blocks along both axes of a local `na x nb` buffer.
fn block_2d(buf: &[f64], nb: usize, row_len: usize, axes: [&GridAxis; 2], depth: [u32; 2]) -> Vec<f64> {
    let g = block_rows(buf, nb * row_len, axes[0].branch(), depth[0]);
    let mut out = Vec::with_capacity(g.len());
    for slab in g.chunks(nb * row_len) {
        out.extend(block_rows(slab, row_len, axes[1].branch(), depth[1]));
    }
    out
}

pub(crate) struct CompiledShift2P {
    depths: [u32; 4],
    kernels: Vec<([Range<usize>; 2], LocalKernel)>,
}

pub(crate) fn compile_2p(spec: &ShiftSpec2P, axes: [&GridAxis; 2]) -> CompiledShift2P {
    CompiledShift2P {
        depths: [spec.i1, spec.i2, spec.j1, spec.j2],
        kernels: spec
            .kernels
            .kernels
            .iter()
            .map(|k| ([axes[0].cell_range(&k.rect[0]), axes[1].cell_range(&k.rect[1])], LocalKernel::two(axes, k)))
            .collect(),
    }
}

pub(crate) fn shift_2p_rows(c: &CompiledShift2P, data: &[f64], row_len: usize, axes: [&GridAxis; 2]) -> Vec<f64> {
    let [i1, i2, j1, j2] = c.depths;
    let cb = axes[1].cells();
    let mut out = vec![0.0; data.len()];
    for ([ra, rb], k) in &c.kernels {
        let nb = rb.len();
        let mut buf = Vec::with_capacity(ra.len() * nb * row_len);
        for a in ra.clone() {
            buf.extend_from_slice(&data[(a * cb + rb.start) * row_len..(a * cb + rb.end) * row_len]);
        }
        let g = block_2d(&buf, nb, row_len, axes, [i1, j1]);
        let h = k.apply(&g, row_len);
        let o = block_2d(&h, nb, row_len, axes, [i2, j2]);
        for (t, a) in ra.clone().enumerate() {
            let dst = &mut out[(a * cb + rb.start) * row_len..(a * cb + rb.end) * row_len];
            for (x, v) in dst.iter_mut().zip(&o[t * nb * row_len..(t + 1) * nb * row_len]) {
                *x += v;
            }
        }
    }
    out
}

pub fn apply_shift_2p(spec: &ShiftSpec2P, f: &DiscreteField) -> Result<DiscreteField> {
    let (pos, axes) = locate_2p(spec, f)?;
    let data = f.front(&pos);
    let row_len = data.len() / (axes[0].cells() * axes[1].cells());
    let out = shift_2p_rows(&compile_2p(spec, [&axes[0], &axes[1]]), &data, row_len, [&axes[0], &axes[1]]);
    Ok(f.from_front(&pos, &out))
}

fn breakpoints(ranges: impl Iterator<Item = std::ops::Range<usize>>, n: usize) -> Vec<usize> {
    let mut pts: Vec<usize> = vec![0, n];
    for r in ranges {
        pts.push(r.start);
        pts.push(r.end);
    }
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// The bi-parameter shift evaluated as a one-parameter shift on the first axis
/// whose kernel values are one-parameter shifts on the second axis.
pub fn nest_biparameter(spec: &ShiftSpec2P, f: &DiscreteField) -> Result<DiscreteField> {
    let (pos, axes) = locate_2p(spec, f)?;
    let (ax, bx) = (&axes[0], &axes[1]);
    let data = f.front(&pos);
    let slab = data.len() / ax.cells();
    let row_len = slab / bx.cells();
    let mut by_cube: BTreeMap<DyadicCube, Vec<&RectangleKernel>> = BTreeMap::new();
    for k in &spec.kernels.kernels {
        by_cube.entry(k.rect[0]).or_default().push(k);
    }
    let mut out = vec![0.0; data.len()];
    for (cube, rects) in by_cube {
        let r = ax.cell_range(&cube);
        let (base, n) = (r.start, r.len());
        let g = block_rows(&data[r.start * slab..r.end * slab], slab, ax.branch(), spec.i1);
        let local = |q: &DyadicCube| {
            let q = ax.cell_range(q);
            q.start - base..q.end - base
        };
        let pieces = || rects.iter().flat_map(|k| k.pieces.iter());
        let xs = breakpoints(pieces().map(|p| local(&p.x[0])), n);
        let ys = breakpoints(pieces().map(|p| local(&p.y[0])), n);
        let mut h = vec![0.0; g.len()];
        for yw in ys.windows(2) {
            let psi: Vec<f64> = sum_rows(&g, slab, yw[0]..yw[1])
                .iter()
                .map(|v| v / n as f64)
                .collect();
            for xw in xs.windows(2) {
                let inner: Vec<AveragingKernel> = rects
                    .iter()
                    .map(|k| AveragingKernel {
                        cube: k.rect[1],
                        pieces: k
                            .pieces
                            .iter()
                            .filter(|p| {
                                let (px, py) = (local(&p.x[0]), local(&p.y[0]));
                                px.start <= xw[0] && xw[1] <= px.end && py.start <= yw[0] && yw[1] <= py.end
                            })
                            .map(|p| KernelPiece1P {
                                x: p.x[1],
                                y: p.y[1],
                                value: p.value.clone(),
                            })
                            .collect(),
                    })
                    .collect();
                let v = shift_1p_rows(&compile_1p(&inner, bx), spec.j1, spec.j2, &psi, row_len, bx);
                add_to_rows(&mut h, slab, xw[0]..xw[1], &v, 1.0);
            }
        }
        let o = block_rows(&h, slab, ax.branch(), spec.i2);
        for (x, v) in out[r.start * slab..r.end * slab].iter_mut().zip(&o) {
            *x += v;
        }
    }
    Ok(f.from_front(&pos, &out))
}

/// A one-parameter shift as a [`LinearOp`] on fields of a fixed shape.
pub struct ShiftOperator1P {
    shape: FieldShape,
    depths: [u32; 2],
    forward: Vec<(Range<usize>, LocalKernel)>,
    backward: Vec<(Range<usize>, LocalKernel)>,
    pos: usize,
}

impl ShiftOperator1P {
    pub fn new(spec: ShiftSpec1P, shape: FieldShape) -> Result<Self> {
        let pos = shape
            .axes
            .iter()
            .position(|a| a.id == spec.kernels.axis)
            .ok_or(Error::AxisAbsent(spec.kernels.axis))?;
        let axis = shape.axes[pos];
        spec.check(&axis, shape.lattice.dim())?;
        let backward = compile_1p(&spec.kernels.transpose().kernels, &axis);
        Ok(ShiftOperator1P {
            depths: [spec.i1, spec.i2],
            forward: compile_1p(&spec.kernels.kernels, &axis),
            backward,
            shape,
            pos,
        })
    }

    fn run(&self, kernels: &[(Range<usize>, LocalKernel)], depths: [u32; 2], x: &[f64]) -> Vec<f64> {
        let f = self.shape.field(x.to_vec()).expect("input length matches the domain");
        let axis = self.shape.axes[self.pos];
        let data = f.front(&[self.pos]);
        let row_len = data.len() / axis.cells();
        let out = shift_1p_rows(kernels, depths[0], depths[1], &data, row_len, &axis);
        f.from_front(&[self.pos], &out).into_values()
    }
}

impl LinearOp for ShiftOperator1P {
    fn domain(&self) -> &FieldShape {
        &self.shape
    }

    fn codomain(&self) -> &FieldShape {
        &self.shape
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.run(&self.forward, self.depths, x)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Option<Vec<f64>> {
        Some(self.run(&self.backward, [self.depths[1], self.depths[0]], y))
    }
}

/// A bi-parameter shift as a [`LinearOp`].
pub struct ShiftOperator2P {
    shape: FieldShape,
    forward: CompiledShift2P,
    backward: CompiledShift2P,
    pos: [usize; 2],
}

impl ShiftOperator2P {
    pub fn new(spec: ShiftSpec2P, shape: FieldShape) -> Result<Self> {
        let find = |id: AxisId| {
            shape
                .axes
                .iter()
                .position(|a| a.id == id)
                .ok_or(Error::AxisAbsent(id))
        };
        let pos = [find(spec.kernels.axes[0])?, find(spec.kernels.axes[1])?];
        let axes = [&shape.axes[pos[0]], &shape.axes[pos[1]]];
        spec.check(axes, shape.lattice.dim())?;
        let forward = compile_2p(&spec, axes);
        let backward = compile_2p(&adjoint_shift_2p(&spec), axes);
        Ok(ShiftOperator2P {
            shape,
            forward,
            backward,
            pos,
        })
    }

    fn run(&self, c: &CompiledShift2P, x: &[f64]) -> Vec<f64> {
        let f = self.shape.field(x.to_vec()).expect("input length matches the domain");
        let axes = [self.shape.axes[self.pos[0]], self.shape.axes[self.pos[1]]];
        let data = f.front(&self.pos);
        let row_len = data.len() / (axes[0].cells() * axes[1].cells());
        let out = shift_2p_rows(c, &data, row_len, [&axes[0], &axes[1]]);
        f.from_front(&self.pos, &out).into_values()
    }
}

impl LinearOp for ShiftOperator2P {
    fn domain(&self) -> &FieldShape {
        &self.shape
    }

    fn codomain(&self) -> &FieldShape {
        &self.shape
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.run(&self.forward, x)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Option<Vec<f64>> {
        Some(self.run(&self.backward, y))
    }
}
