//! Finite-dimensional function lattices `E = l^r_d` (possibly nested) and the
//! mixed-norm specifications built over grid axes.

use serde::{Deserialize, Serialize};

use crate::dyadic::AxisId;
use crate::error::{Error, Result};

/// Smallest admissible exponent. Chosen so that the admissible range is closed
/// under conjugation: `conjugate(100) = 100/99`.
pub const MIN_EXPONENT: f64 = 100.0 / 99.0;
pub const MAX_EXPONENT: f64 = 100.0;

pub fn check_exponent(p: f64) -> Result<f64> {
    if p.is_finite() && (MIN_EXPONENT - 1e-12..=MAX_EXPONENT + 1e-12).contains(&p) {
        Ok(p)
    } else {
        Err(Error::ExponentOutOfRange(p))
    }
}

/// Conjugate exponent `p / (p - 1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// Plain `l^r` norm for any `r >= 1`, including the endpoint `r = 1` that
/// lattice specs exclude.
pub fn lp_norm(values: &[f64], r: f64) -> f64 {
    let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    if r == 1.0 {
        return values.iter().map(|v| v.abs()).sum();
    }
    let s: f64 = values.iter().map(|v| (v.abs() / m).powf(r)).sum();
    m * s.powf(1.0 / r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeSpec {
    /// `l^r` on `dim` points.
    Flat { dim: usize, exponent: f64 },
    /// `l^r_{outer_dim}(inner)`, stored outer-major.
    Nested {
        outer_dim: usize,
        exponent: f64,
        inner: Box<LatticeSpec>,
    },
}

impl LatticeSpec {
    pub fn flat(dim: usize, exponent: f64) -> Result<Self> {
        let spec = LatticeSpec::Flat { dim, exponent };
        spec.validate()?;
        Ok(spec)
    }

    pub fn nested(outer_dim: usize, exponent: f64, inner: LatticeSpec) -> Result<Self> {
        let spec = LatticeSpec::Nested {
            outer_dim,
            exponent,
            inner: Box::new(inner),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Scalar-valued fields: `E = l^2_1 = R`.
    pub fn scalar() -> Self {
        LatticeSpec::Flat {
            dim: 1,
            exponent: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LatticeSpec::Flat { dim, exponent } => {
                if *dim == 0 {
                    return Err(Error::InvalidLattice("dimension must be positive".into()));
                }
                check_exponent(*exponent)?;
            }
            LatticeSpec::Nested {
                outer_dim,
                exponent,
                inner,
            } => {
                if *outer_dim == 0 {
                    return Err(Error::InvalidLattice("dimension must be positive".into()));
                }
                check_exponent(*exponent)?;
                inner.validate()?;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            LatticeSpec::Flat { dim, .. } => *dim,
            LatticeSpec::Nested {
                outer_dim, inner, ..
            } => outer_dim * inner.dim(),
        }
    }

    /// `(extent, exponent)` per nesting level, outermost first.
    pub fn levels(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                LatticeSpec::Flat { dim, exponent } => {
                    out.push((*dim, *exponent));
                    return out;
                }
                LatticeSpec::Nested {
                    outer_dim,
                    exponent,
                    inner,
                } => {
                    out.push((*outer_dim, *exponent));
                    cur = inner;
                }
            }
        }
    }

    pub fn is_hilbert(&self) -> bool {
        self.levels().iter().all(|&(_, r)| r == 2.0)
    }

    /// Norm of a raw value slice, checking its length.
    pub fn norm_of(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: values.len(),
            });
        }
        Ok(self.norm_unchecked(values))
    }

    pub(crate) fn norm_unchecked(&self, values: &[f64]) -> f64 {
        match self {
            LatticeSpec::Flat { exponent, .. } => lp_norm(values, *exponent),
            LatticeSpec::Nested {
                exponent, inner, ..
            } => {
                let parts: Vec<f64> = values
                    .chunks(inner.dim())
                    .map(|c| inner.norm_unchecked(c))
                    .collect();
                lp_norm(&parts, *exponent)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeVector {
    values: Vec<f64>,
    spec: LatticeSpec,
}

impl LatticeVector {
    pub fn new(values: Vec<f64>, spec: LatticeSpec) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                actual: values.len(),
            });
        }
        Ok(LatticeVector { values, spec })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    /// Pointwise `|v|^alpha`.
    pub fn abs_pow(&self, alpha: f64) -> LatticeVector {
        LatticeVector {
            values: self.values.iter().map(|v| v.abs().powf(alpha)).collect(),
            spec: self.spec.clone(),
        }
    }

    pub fn scaled(&self, c: f64) -> LatticeVector {
        LatticeVector {
            values: self.values.iter().map(|v| c * v).collect(),
            spec: self.spec.clone(),
        }
    }
}

pub fn lattice_norm(v: &LatticeVector) -> f64 {
    v.spec.norm_unchecked(&v.values)
}

pub fn koethe_dual(spec: &LatticeSpec) -> LatticeSpec {
    match spec {
        LatticeSpec::Flat { dim, exponent } => LatticeSpec::Flat {
            dim: *dim,
            exponent: conjugate(*exponent),
        },
        LatticeSpec::Nested {
            outer_dim,
            exponent,
            inner,
        } => LatticeSpec::Nested {
            outer_dim: *outer_dim,
            exponent: conjugate(*exponent),
            inner: Box::new(koethe_dual(inner)),
        },
    }
}

/// Counting-measure pairing `sum v_i w_i`.
pub fn dual_pairing(v: &LatticeVector, w: &LatticeVector) -> Result<f64> {
    if v.values.len() != w.values.len() {
        return Err(Error::DimensionMismatch {
            expected: v.values.len(),
            actual: w.values.len(),
        });
    }
    Ok(v.values.iter().zip(&w.values).map(|(a, b)| a * b).sum())
}

/// `L^{q_1}(L^{q_2}(...(E)))` with the outermost axis first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedNormSpec {
    pub axis_order: Vec<AxisId>,
    pub axis_exponents: Vec<f64>,
    pub lattice: LatticeSpec,
}

impl MixedNormSpec {
    pub fn new(axis_order: Vec<AxisId>, axis_exponents: Vec<f64>, lattice: LatticeSpec) -> Result<Self> {
        let spec = MixedNormSpec {
            axis_order,
            axis_exponents,
            lattice,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same exponent on every axis.
    pub fn uniform(axes: &[AxisId], exponent: f64, lattice: LatticeSpec) -> Result<Self> {
        Self::new(axes.to_vec(), vec![exponent; axes.len()], lattice)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axis_order.len() != self.axis_exponents.len() {
            return Err(Error::AxisMismatch(
                "one exponent per axis is required".into(),
            ));
        }
        for (k, a) in self.axis_order.iter().enumerate() {
            if self.axis_order[..k].contains(a) {
                return Err(Error::AxisMismatch(format!("axis {a:?} listed twice")));
            }
        }
        for &p in &self.axis_exponents {
            check_exponent(p)?;
        }
        self.lattice.validate()
    }

    pub fn is_hilbert(&self) -> bool {
        self.axis_exponents.iter().all(|&p| p == 2.0) && self.lattice.is_hilbert()
    }

    /// Conjugate exponents everywhere.
    pub fn dual(&self) -> MixedNormSpec {
        MixedNormSpec {
            axis_order: self.axis_order.clone(),
            axis_exponents: self.axis_exponents.iter().map(|&p| conjugate(p)).collect(),
            lattice: koethe_dual(&self.lattice),
        }
    }
}

/// Iterated `L^{q_1}(L^{q_2}(...(E)))` norm of `f` with cell-measure weights.
pub fn mixed_norm(f: &crate::dyadic::DiscreteField, spec: &MixedNormSpec) -> Result<f64> {
    if spec.lattice.dim() != f.lattice_dim() {
        return Err(Error::DimensionMismatch {
            expected: f.lattice_dim(),
            actual: spec.lattice.dim(),
        });
    }
    let tree = crate::norm_tree::NormTree::for_field(f.axes(), spec)?;
    Ok(tree.evaluate(f.values()))
}
