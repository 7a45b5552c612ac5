#![allow(dead_code)]

use dyadshift::dyadic::{AxisId, DiscreteField, GridAxis};
use dyadshift::lattice::LatticeSpec;
use dyadshift::rng::{normals, rng_for};

pub fn interval(id: u8, levels: u32) -> GridAxis {
    GridAxis::interval(id, levels)
}

pub fn flat(d: usize, r: f64) -> LatticeSpec {
    LatticeSpec::flat(d, r).unwrap()
}

pub fn random_field(axes: &[GridAxis], lattice: &LatticeSpec, seed: u64) -> DiscreteField {
    let n: usize = axes.iter().map(|a| a.cells()).product::<usize>() * lattice.dim();
    let mut rng = rng_for(seed, &[0xF1E1D]);
    DiscreteField::from_values(axes.to_vec(), lattice.clone(), normals(&mut rng, n)).unwrap()
}

pub fn scalar_field(axis: GridAxis, values: Vec<f64>) -> DiscreteField {
    DiscreteField::scalar(axis, values).unwrap()
}

/// `h_{[k 2^-l, (k+1) 2^-l)}^1` on an interval axis, from coordinates alone.
pub fn interval_haar(levels: u32, level: u32, k: usize, cell: usize) -> f64 {
    let width = 1usize << (levels - level);
    if cell / width != k {
        return 0.0;
    }
    let amp = 2f64.powf(level as f64 / 2.0);
    if (cell % width) < width / 2 {
        amp
    } else {
        -amp
    }
}

/// Average of `v` over the interval cube `(level, k)`.
pub fn interval_avg(levels: u32, level: u32, k: usize, v: &[f64]) -> f64 {
    let width = 1usize << (levels - level);
    v[k * width..(k + 1) * width].iter().sum::<f64>() / width as f64
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn ids(axes: &[GridAxis]) -> Vec<AxisId> {
    axes.iter().map(|a| a.id).collect()
}
