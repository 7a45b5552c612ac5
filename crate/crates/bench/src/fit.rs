//! Least-squares fits of norm estimates against depth growth models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("no rows to fit")]
    Empty,
    #[error("a growth fit needs at least {MIN_POINTS} parameter points, got {0}")]
    TooFewPoints(usize),
    #[error("estimate {0} is not finite")]
    NonFinite(f64),
}

pub const MIN_POINTS: usize = 4;

/// Shift depths `(i1, i2)` and, for bi-parameter objects, `(j1, j2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DepthKey {
    pub i: [u32; 2],
    pub j: Option<[u32; 2]>,
}

impl DepthKey {
    pub fn one(i1: u32, i2: u32) -> Self {
        DepthKey { i: [i1, i2], j: None }
    }

    pub fn two(i1: u32, i2: u32, j1: u32, j2: u32) -> Self {
        DepthKey {
            i: [i1, i2],
            j: Some([j1, j2]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthModel {
    /// `(min(i1, i2) + 1)`, times `(min(j1, j2) + 1)` when `j` is present.
    MinDepth,
    /// No growth.
    Constant,
}

impl GrowthModel {
    pub fn value(self, key: &DepthKey) -> f64 {
        match self {
            GrowthModel::Constant => 1.0,
            GrowthModel::MinDepth => {
                let f = |d: [u32; 2]| (d[0].min(d[1]) + 1) as f64;
                f(key.i) * key.j.map_or(1.0, f)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    /// `sum e m / sum m^2`.
    pub c: f64,
    /// `max e / m`, the smallest `C` with `e <= C m` at every point.
    pub max_ratio: f64,
    pub argmax: DepthKey,
    pub points: usize,
}

pub fn fit_growth(rows: &[(DepthKey, f64)], model: GrowthModel) -> Result<GrowthFit, FitError> {
    if rows.is_empty() {
        return Err(FitError::Empty);
    }
    if rows.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints(rows.len()));
    }
    if let Some((_, e)) = rows.iter().find(|(_, e)| !e.is_finite()) {
        return Err(FitError::NonFinite(*e));
    }
    let (mut em, mut mm) = (0.0, 0.0);
    let (mut max_ratio, mut argmax) = (f64::NEG_INFINITY, rows[0].0);
    for (key, e) in rows {
        let m = model.value(key);
        em += e * m;
        mm += m * m;
        let r = e / m;
        if r > max_ratio {
            max_ratio = r;
            argmax = *key;
        }
    }
    Ok(GrowthFit {
        c: em / mm,
        max_ratio,
        argmax,
        points: rows.len(),
    })
}

/// `max(a / b, b / a)` for positive constants, 1 when both vanish.
pub fn spread(a: f64, b: f64) -> f64 {
    if a == b {
        return 1.0;
    }
    if a <= 0.0 || b <= 0.0 {
        return f64::INFINITY;
    }
    (a / b).max(b / a)
}
