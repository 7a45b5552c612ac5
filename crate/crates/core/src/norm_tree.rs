//! Iterated weighted `l^s` norms over a multi-index, with gradients.
//!
//! Mixed norms `L^q(L^p(E))`, lattice norms, and the extra `l^r` / `l^2`
//! levels of vector-valued maximal and square functions are all instances.

use crate::dyadic::{AxisId, GridAxis};
use crate::error::{Error, Result};
use crate::lattice::{conjugate, MixedNormSpec};
use crate::layout;

#[derive(Clone, Debug, PartialEq)]
pub struct NormLevel {
    pub extent: usize,
    pub exponent: f64,
    pub weight: f64,
}

/// `levels[0]` is the outermost sum; leaves are visited in `order`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormTree {
    levels: Vec<NormLevel>,
    order: Option<Vec<usize>>,
}

fn level_norm(vals: &[f64], s: f64, w: f64) -> f64 {
    level_forward(vals, s, w, None).0
}

/// The weighted `l^s` norm of one chunk and its largest entry; stores
/// `(v / max)^s` per entry in `powers` when given.
fn level_forward(vals: &[f64], s: f64, w: f64, powers: Option<&mut [f64]>) -> (f64, f64) {
    let m = vals.iter().fold(0.0f64, |m, v| m.max(*v));
    if m == 0.0 {
        return (0.0, 0.0);
    }
    if s == 1.0 {
        return (w * vals.iter().sum::<f64>(), m);
    }
    if s == 2.0 {
        let t: f64 = vals.iter().map(|v| (v / m) * (v / m)).sum();
        return (m * (w * t).sqrt(), m);
    }
    let t: f64 = match powers {
        Some(out) => vals
            .iter()
            .zip(out.iter_mut())
            .map(|(v, o)| {
                *o = (v / m).powf(s);
                *o
            })
            .sum(),
        None => vals.iter().map(|v| (v / m).powf(s)).sum(),
    };
    (m * (w * t).powf(1.0 / s), m)
}

impl NormTree {
    pub fn new(levels: Vec<NormLevel>) -> Self {
        NormTree {
            levels,
            order: None,
        }
    }

    /// Leaves visited through `order[k]`, the memory offset of the `k`-th leaf.
    pub fn with_order(mut self, order: Vec<usize>) -> Self {
        assert_eq!(order.len(), self.len());
        self.order = Some(order);
        self
    }

    /// Plain `l^s` on `n` entries.
    pub fn flat(n: usize, s: f64) -> Self {
        Self::new(vec![NormLevel {
            extent: n,
            exponent: s,
            weight: 1.0,
        }])
    }

    /// The mixed norm of a field shaped by `axes` (in memory order) under `spec`.
    pub fn for_field(axes: &[GridAxis], spec: &MixedNormSpec) -> Result<Self> {
        Self::for_family(axes, spec, None)
    }

    /// As [`NormTree::for_field`] with an extra innermost `l^r` level over a family
    /// index stored after the lattice component.
    pub fn for_family(axes: &[GridAxis], spec: &MixedNormSpec, family: Option<(usize, f64)>) -> Result<Self> {
        spec.validate()?;
        if spec.axis_order.len() != axes.len() {
            return Err(Error::AxisMismatch(format!(
                "norm has {} axes, field has {}",
                spec.axis_order.len(),
                axes.len()
            )));
        }
        let positions = spec
            .axis_order
            .iter()
            .map(|id| {
                axes.iter()
                    .position(|a| a.id == *id)
                    .ok_or(Error::AxisAbsent(*id))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut levels: Vec<NormLevel> = positions
            .iter()
            .zip(&spec.axis_exponents)
            .map(|(&p, &q)| NormLevel {
                extent: axes[p].cells(),
                exponent: q,
                weight: axes[p].cell_measure(),
            })
            .collect();
        levels.extend(spec.lattice.levels().into_iter().map(|(extent, r)| NormLevel {
            extent,
            exponent: r,
            weight: 1.0,
        }));
        let mut shape: Vec<usize> = axes.iter().map(|a| a.cells()).collect();
        shape.push(spec.lattice.dim());
        let mut front = positions.clone();
        front.push(axes.len());
        if let Some((count, r)) = family {
            levels.push(NormLevel {
                extent: count,
                exponent: r,
                weight: 1.0,
            });
            shape.push(count);
            front.push(axes.len() + 1);
        }
        let tree = NormTree::new(levels);
        if front.iter().enumerate().all(|(k, &p)| k == p) {
            Ok(tree)
        } else {
            Ok(tree.with_order(layout::permutation_index(&shape, &front)))
        }
    }

    /// The L^1 norm over `axes` of a scalar field.
    pub fn l1_scalar(axes: &[GridAxis]) -> Self {
        let levels = axes
            .iter()
            .map(|a| NormLevel {
                extent: a.cells(),
                exponent: 1.0,
                weight: a.cell_measure(),
            })
            .collect();
        NormTree::new(levels)
    }

    pub fn levels(&self) -> &[NormLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(|l| l.extent).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_hilbert(&self) -> bool {
        self.levels.iter().all(|l| l.exponent == 2.0)
    }

    fn leaves(&self, x: &[f64]) -> Vec<f64> {
        match &self.order {
            None => x.iter().map(|v| v.abs()).collect(),
            Some(o) => o.iter().map(|&i| x[i].abs()).collect(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.len(), "norm tree length mismatch");
        let mut cur = self.leaves(x);
        for l in self.levels.iter().rev() {
            cur = cur
                .chunks(l.extent)
                .map(|c| level_norm(c, l.exponent, l.weight))
                .collect();
        }
        cur[0]
    }

    /// The norm and its gradient with respect to `x`.
    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(x.len(), self.len(), "norm tree length mismatch");
        // stack[k] holds the entries entering level `levels.len() - 1 - k`
        let mut stack = vec![self.leaves(x)];
        let mut powers = Vec::with_capacity(self.levels.len());
        let mut maxima = Vec::with_capacity(self.levels.len());
        for l in self.levels.iter().rev() {
            let cur = stack.last().expect("nonempty");
            let mut pw = vec![0.0; cur.len()];
            let mut next = Vec::with_capacity(cur.len() / l.extent);
            let mut ms = Vec::with_capacity(cur.len() / l.extent);
            for (c, p) in cur.chunks(l.extent).zip(pw.chunks_mut(l.extent)) {
                let (v, m) = level_forward(c, l.exponent, l.weight, Some(p));
                next.push(v);
                ms.push(m);
            }
            powers.push(pw);
            maxima.push(ms);
            stack.push(next);
        }
        let value = stack.last().expect("nonempty")[0];
        let depth = self.levels.len();
        let mut grad = vec![1.0];
        for (k, l) in self.levels.iter().enumerate() {
            let parent = &stack[depth - k];
            let child = &stack[depth - k - 1];
            let pw = &powers[depth - k - 1];
            let ms = &maxima[depth - k - 1];
            let mut g = vec![0.0; child.len()];
            for (p, chunk) in g.chunks_mut(l.extent).enumerate() {
                let (pv, gp) = (parent[p], grad[p]);
                if pv <= 0.0 || gp == 0.0 {
                    continue;
                }
                let base = p * l.extent;
                let scale = if l.exponent == 1.0 || l.exponent == 2.0 {
                    0.0
                } else {
                    (ms[p] / pv).powf(l.exponent - 1.0)
                };
                for (c, gc) in chunk.iter_mut().enumerate() {
                    let v = child[base + c];
                    let factor = if l.exponent == 1.0 {
                        1.0
                    } else if l.exponent == 2.0 {
                        v / pv
                    } else if v == 0.0 {
                        0.0
                    } else {
                        pw[base + c] / (v / ms[p]) * scale
                    };
                    *gc = gp * l.weight * factor;
                }
            }
            grad = g;
        }
        let mut out = vec![0.0; x.len()];
        match &self.order {
            None => {
                for (i, g) in grad.iter().enumerate() {
                    out[i] = g * x[i].signum() * (x[i] != 0.0) as u8 as f64;
                }
            }
            Some(o) => {
                for (k, &i) in o.iter().enumerate() {
                    out[i] = grad[k] * x[i].signum() * (x[i] != 0.0) as u8 as f64;
                }
            }
        }
        (value, out)
    }

    /// The dual norm under the Euclidean pairing `sum x_i y_i`.
    pub fn dual(&self) -> NormTree {
        NormTree {
            levels: self
                .levels
                .iter()
                .map(|l| {
                    let s = conjugate(l.exponent);
                    NormLevel {
                        extent: l.extent,
                        exponent: s,
                        weight: l.weight.powf(1.0 - s),
                    }
                })
                .collect(),
            order: self.order.clone(),
        }
    }

    /// For a tree with every exponent equal to 2: per-leaf weights `w` in memory
    /// order such that `N(x)^2 = sum w_i x_i^2`.
    pub fn hilbert_weights(&self) -> Option<Vec<f64>> {
        if !self.is_hilbert() {
            return None;
        }
        let mut w = vec![1.0];
        for l in &self.levels {
            w = w
                .iter()
                .flat_map(|&p| std::iter::repeat_n(p * l.weight, l.extent))
                .collect();
        }
        match &self.order {
            None => Some(w),
            Some(o) => {
                let mut out = vec![0.0; w.len()];
                for (k, &i) in o.iter().enumerate() {
                    out[i] = w[k];
                }
                Some(out)
            }
        }
    }
}

/// Axis ids in memory order, as a convenience for building specs.
pub fn axis_ids(axes: &[GridAxis]) -> Vec<AxisId> {
    axes.iter().map(|a| a.id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let t = NormTree::new(vec![
            NormLevel {
                extent: 3,
                exponent: 3.0,
                weight: 0.5,
            },
            NormLevel {
                extent: 2,
                exponent: 1.5,
                weight: 1.0,
            },
        ]);
        let x = [0.3, -1.2, 0.7, 2.0, -0.4, 0.9];
        let (v, g) = t.value_and_gradient(&x);
        for i in 0..x.len() {
            let mut y = x;
            y[i] += 1e-6;
            let fd = (t.evaluate(&y) - v) / 1e-6;
            assert!((fd - g[i]).abs() < 1e-4, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn gradient_has_unit_dual_norm() {
        let t = NormTree::new(vec![
            NormLevel {
                extent: 2,
                exponent: 3.0,
                weight: 0.25,
            },
            NormLevel {
                extent: 3,
                exponent: 1.5,
                weight: 1.0,
            },
        ]);
        let x = [0.3, -1.2, 0.7, 2.0, -0.4, 0.9];
        let (v, g) = t.value_and_gradient(&x);
        assert!((t.dual().evaluate(&g) - 1.0).abs() < 1e-12);
        let pairing: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
        assert!((pairing - v).abs() < 1e-12);
    }
}
