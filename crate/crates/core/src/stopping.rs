//! Stopping-time families, sparseness certificates, martingale-block sums, and
//! the Carleson embedding ratio.

use serde::{Deserialize, Serialize};

use crate::dyadic::{DiscreteField, DyadicCube, GridAxis};
use crate::error::{Error, Result};
use crate::lattice::check_exponent;
use crate::norm_tree::{NormLevel, NormTree};
use crate::norms::bmo_norm;

/// Default selection constant for both stopping rules.
pub const STOPPING_THRESHOLD: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingFamily {
    pub axis: GridAxis,
    pub root: DyadicCube,
    /// `generations[0] == [root]`; later generations in DFS order.
    pub generations: Vec<Vec<DyadicCube>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Prefix sums over the cells of a scalar one-axis field.
struct Averages {
    axis: GridAxis,
    prefix: Vec<f64>,
}

impl Averages {
    fn new(f: &DiscreteField, abs: bool) -> Result<Self> {
        if f.axes().len() != 1 || f.lattice_dim() != 1 {
            return Err(Error::AxisMismatch("expected a scalar one-axis field".into()));
        }
        let mut prefix = Vec::with_capacity(f.values().len() + 1);
        prefix.push(0.0);
        let mut s = 0.0;
        for &v in f.values() {
            s += if abs { v.abs() } else { v };
            prefix.push(s);
        }
        Ok(Averages {
            axis: f.axes()[0],
            prefix,
        })
    }

    fn avg(&self, q: &DyadicCube) -> f64 {
        let r = self.axis.cell_range(q);
        (self.prefix[r.end] - self.prefix[r.start]) / r.len() as f64
    }
}

impl StoppingFamily {
    pub fn trivial(axis: GridAxis, root: DyadicCube) -> Self {
        StoppingFamily {
            axis,
            root,
            generations: vec![vec![root]],
            warnings: Vec::new(),
        }
    }

    /// Iterated maximal selection: `stop(J, Q)` decides whether `Q` strictly
    /// inside the current member `J` is selected.
    fn build(axis: GridAxis, root: DyadicCube, stop: impl Fn(&DyadicCube, &DyadicCube) -> bool) -> Result<Self> {
        axis.check_cube(&root)?;
        let mut fam = StoppingFamily::trivial(axis, root);
        loop {
            let mut next = Vec::new();
            for j in fam.generations.last().expect("nonempty") {
                let mut stack: Vec<DyadicCube> = axis.children(j).collect::<Vec<_>>();
                if j.level == axis.levels {
                    stack.clear();
                }
                stack.reverse();
                while let Some(q) = stack.pop() {
                    if stop(j, &q) {
                        next.push(q);
                    } else if q.level < axis.levels {
                        let mut ch: Vec<DyadicCube> = axis.children(&q).collect();
                        ch.reverse();
                        stack.extend(ch);
                    }
                }
            }
            if next.is_empty() {
                return Ok(fam);
            }
            fam.generations.push(next);
        }
    }

    pub fn members(&self) -> impl Iterator<Item = (usize, &DyadicCube)> {
        self.generations
            .iter()
            .enumerate()
            .flat_map(|(g, v)| v.iter().map(move |q| (g, q)))
    }

    pub fn generation_of(&self, q: &DyadicCube) -> Option<usize> {
        self.members().find(|(_, m)| *m == q).map(|(g, _)| g)
    }

    pub fn contains(&self, q: &DyadicCube) -> bool {
        self.generation_of(q).is_some()
    }

    /// Members of the generation after `j`'s that lie inside `j`.
    pub fn children_of(&self, j: &DyadicCube) -> Vec<DyadicCube> {
        match self.generation_of(j) {
            Some(g) if g + 1 < self.generations.len() => self.generations[g + 1]
                .iter()
                .filter(|q| self.axis.contains(j, q))
                .copied()
                .collect(),
            _ => Vec::new(),
        }
    }

    /// `pi_F Q`: the smallest member containing `q`.
    pub fn parent(&self, q: &DyadicCube) -> Option<DyadicCube> {
        self.members()
            .filter(|(_, m)| self.axis.contains(m, q))
            .max_by_key(|(_, m)| m.level)
            .map(|(_, m)| *m)
    }

    /// `max_J sum_{J' child of J} |J'| / |J|` over all members.
    pub fn packing_ratio(&self) -> f64 {
        self.members()
            .map(|(_, j)| {
                let s: f64 = self.children_of(j).iter().map(|q| self.axis.measure(q)).sum();
                s / self.axis.measure(j)
            })
            .fold(0.0, f64::max)
    }

    /// Structural checks: rooted, nested, disjoint within generations.
    pub fn validate(&self) -> Result<()> {
        if self.generations.first().map(|g| g.as_slice()) != Some(&[self.root][..]) {
            return Err(Error::Empty("stopping family must start at its root".into()));
        }
        for w in self.generations.windows(2) {
            for q in &w[1] {
                if !w[0].iter().any(|j| j != q && self.axis.contains(j, q)) {
                    return Err(Error::NotInFamily);
                }
            }
            for (a, q) in w[1].iter().enumerate() {
                if w[1][..a].iter().any(|p| self.axis.contains(p, q) || self.axis.contains(q, p)) {
                    return Err(Error::NotInFamily);
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))
    }
}

fn check_root(f: &DiscreteField, root: &DyadicCube) -> Result<GridAxis> {
    let axis = *f.axis(root.axis)?;
    axis.check_cube(root)?;
    Ok(axis)
}

/// Maximal cubes with `|<b>_Q - <b>_J| > threshold`, iterated.
pub fn stopping_cubes_b_with(b: &DiscreteField, root: &DyadicCube, threshold: f64) -> Result<StoppingFamily> {
    let axis = check_root(b, root)?;
    let av = Averages::new(b, false)?;
    let mut fam = StoppingFamily::build(axis, *root, |j, q| (av.avg(q) - av.avg(j)).abs() > threshold)?;
    let bmo = bmo_norm(b, axis.id)?;
    if bmo > 1.0 + 1e-12 {
        fam.warnings.push(format!("bmo norm {bmo} exceeds 1"));
    }
    Ok(fam)
}

pub fn stopping_cubes_b(b: &DiscreteField, root: &DyadicCube) -> Result<StoppingFamily> {
    stopping_cubes_b_with(b, root, STOPPING_THRESHOLD)
}

/// Maximal cubes with `<|f|>_Q > threshold * <|f|>_J`, iterated.
pub fn principal_cubes_with(f: &DiscreteField, root: &DyadicCube, threshold: f64) -> Result<StoppingFamily> {
    let axis = check_root(f, root)?;
    let av = Averages::new(f, true)?;
    StoppingFamily::build(axis, *root, |j, q| av.avg(q) > threshold * av.avg(j))
}

pub fn principal_cubes(f: &DiscreteField, root: &DyadicCube) -> Result<StoppingFamily> {
    principal_cubes_with(f, root, STOPPING_THRESHOLD)
}

/// Maximal cubes meeting either stopping rule, iterated.
pub fn combined_stopping(b: &DiscreteField, f: &DiscreteField, root: &DyadicCube) -> Result<StoppingFamily> {
    let axis = check_root(b, root)?;
    if check_root(f, root)? != axis {
        return Err(Error::AxisMismatch("b and f live on different grids".into()));
    }
    let ab = Averages::new(b, false)?;
    let af = Averages::new(f, true)?;
    let t = STOPPING_THRESHOLD;
    StoppingFamily::build(axis, *root, |j, q| {
        (ab.avg(q) - ab.avg(j)).abs() > t || af.avg(q) > t * af.avg(j)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseCertificate {
    pub sparse: bool,
    /// `min_Q |E_Q| / |Q|`.
    pub min_ratio: f64,
    pub disjoint: bool,
    /// `(Q, cells of E_Q)` per member.
    pub witnesses: Vec<(DyadicCube, Vec<usize>)>,
}

/// `E_Q = Q \ (next-generation members inside Q)`; sparse iff every
/// `|E_Q| >= |Q| / 2` and the `E_Q` are pairwise disjoint.
pub fn verify_sparse(fam: &StoppingFamily) -> SparseCertificate {
    let ax = fam.axis;
    let mut owner = vec![0usize; ax.cells()];
    let mut disjoint = true;
    let mut min_ratio: f64 = 1.0;
    let mut witnesses = Vec::new();
    for (_, q) in fam.members() {
        let kids = fam.children_of(q);
        let cells: Vec<usize> = ax
            .cell_range(q)
            .filter(|&c| !kids.iter().any(|k| ax.cell_range(k).contains(&c)))
            .collect();
        for &c in &cells {
            owner[c] += 1;
            disjoint &= owner[c] == 1;
        }
        min_ratio = min_ratio.min(cells.len() as f64 / ax.cells_in(q) as f64);
        witnesses.push((*q, cells));
    }
    SparseCertificate {
        sparse: disjoint && min_ratio >= 0.5,
        min_ratio,
        disjoint,
        witnesses,
    }
}

/// `sum_{Q : pi_F Q = J} Delta_Q b` on the cells of the axis (zero outside `J`).
pub fn block_sum(b: &DiscreteField, fam: &StoppingFamily, j: &DyadicCube) -> Result<Vec<f64>> {
    if !fam.contains(j) {
        return Err(Error::NotInFamily);
    }
    let ax = fam.axis;
    if b.axes() != [ax] {
        return Err(Error::AxisMismatch("b lives on another grid".into()));
    }
    let av = Averages::new(b, false)?;
    let kids = fam.children_of(j);
    let mut out = vec![0.0; ax.cells()];
    let mut stack = vec![*j];
    while let Some(q) = stack.pop() {
        if q.level == ax.levels {
            continue;
        }
        let aq = av.avg(&q);
        for c in ax.children(&q) {
            let d = av.avg(&c) - aq;
            for x in ax.cell_range(&c) {
                out[x] += d;
            }
            if !kids.contains(&c) {
                stack.push(c);
            }
        }
    }
    Ok(out)
}

/// `||sum_{pi_F Q = J} Delta_Q b||_infty`.
pub fn block_sup(b: &DiscreteField, fam: &StoppingFamily, j: &DyadicCube) -> Result<f64> {
    Ok(block_sum(b, fam, j)?.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// `||(sum_j sum_{J in F_j} <|f_j|>_J^2 1_J)^{1/2}||_p / ||(sum_j |f_j|^2)^{1/2}||_p`.
pub fn carleson_embedding_ratio(fields: &[DiscreteField], fams: &[StoppingFamily], p: f64) -> Result<f64> {
    check_exponent(p)?;
    if fields.len() != fams.len() {
        return Err(Error::DimensionMismatch {
            expected: fields.len(),
            actual: fams.len(),
        });
    }
    let first = fields.first().ok_or_else(|| Error::Empty("field family".into()))?;
    let ax = *first.axes().first().ok_or_else(|| Error::Empty("axes".into()))?;
    let mut lhs = vec![0.0; ax.cells()];
    let mut rhs = vec![0.0; ax.cells()];
    for (f, fam) in fields.iter().zip(fams) {
        if f.axes() != [ax] || fam.axis != ax {
            return Err(Error::AxisMismatch("fields and families must share one axis".into()));
        }
        let av = Averages::new(f, true)?;
        for (_, q) in fam.members() {
            let a = av.avg(q);
            for x in ax.cell_range(q) {
                lhs[x] += a * a;
            }
        }
        for (r, v) in rhs.iter_mut().zip(f.values()) {
            *r += v * v;
        }
    }
    let tree = NormTree::new(vec![NormLevel {
        extent: ax.cells(),
        exponent: p,
        weight: ax.cell_measure(),
    }]);
    let root = |v: Vec<f64>| v.into_iter().map(f64::sqrt).collect::<Vec<_>>();
    let num = tree.evaluate(&root(lhs));
    if num == 0.0 {
        return Ok(0.0);
    }
    let den = tree.evaluate(&root(rhs));
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}
