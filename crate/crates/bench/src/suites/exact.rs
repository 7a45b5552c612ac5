//! Suites checking exact identities: Haar calculus, the two shift evaluation
//! paths, the model reduction and the scalar `L^2` contraction.

use dyadshift::dyadic::{
    conditional_expectation, haar_function, haar_pairing, martingale_block, martingale_difference, AxisId,
    DiscreteField, DyadicCube, GridAxis, HaarIndex,
};
use dyadshift::lattice::{LatticeSpec, MixedNormSpec};
use dyadshift::matrix::Matrix;
use dyadshift::model::{apply_model, model_to_shift, InnerOperator, ModelEntry, ModelOperatorSpec};
use dyadshift::norms::{operator_norm, NormMode};
use dyadshift::operator::FieldShape;
use dyadshift::paraproduct::model_index_set;
use dyadshift::rng::{normals, rng_for};
use dyadshift::shift::{
    apply_shift_1p, apply_shift_2p, nest_biparameter, KernelFamily1P, KernelFamily2P, KernelValues, ShiftOperator1P,
    ShiftSpec1P, ShiftSpec2P,
};
use rayon::prelude::*;

use super::{random_field, scaled_deviation, Outcome, SuiteError, SuiteResult};
use crate::config::Resolved;
use crate::report::{Criterion, Table};

/// Zero outside `cube` along the axis at `pos`.
fn restrict(f: &DiscreteField, pos: usize, cube: &DyadicCube) -> DiscreteField {
    let axes = f.axes();
    let cells = axes[pos].cells();
    let stride: usize = axes[pos + 1..].iter().map(|a| a.cells()).product::<usize>() * f.lattice_dim();
    let range = axes[pos].cell_range(cube);
    let values = f
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| if range.contains(&((k / stride) % cells)) { *v } else { 0.0 })
        .collect();
    f.with_values(values)
}

/// Constant function plus every cancellative Haar function of one axis.
fn axis_basis(axis: &GridAxis) -> Result<Vec<DiscreteField>, dyadshift::Error> {
    let mut out = vec![haar_function(axis, &HaarIndex::new(axis.root(), 0))?];
    for q in axis.cubes_up_to(axis.levels - 1) {
        for eta in 1..(1u32 << axis.dim) {
            out.push(haar_function(axis, &HaarIndex::new(q, eta))?);
        }
    }
    Ok(out)
}

fn tensor_basis(axes: &[GridAxis]) -> Result<Vec<DiscreteField>, dyadshift::Error> {
    let mut basis = axis_basis(&axes[0])?;
    for axis in &axes[1..] {
        let next = axis_basis(axis)?;
        let mut joined = Vec::with_capacity(basis.len() * next.len());
        for b in &basis {
            for n in &next {
                joined.push(b.tensor(n)?);
            }
        }
        basis = joined;
    }
    Ok(basis)
}

fn orthonormality_deviation(basis: &[DiscreteField]) -> Result<f64, dyadshift::Error> {
    let mut dev: f64 = 0.0;
    for (a, x) in basis.iter().enumerate() {
        for (b, y) in basis.iter().enumerate().skip(a) {
            let want = if a == b { 1.0 } else { 0.0 };
            dev = dev.max((x.inner(y)? - want).abs());
        }
    }
    Ok(dev)
}

/// `f = sum_b <f, b> b`, componentwise in the lattice.
fn reconstruction_deviation(f: &DiscreteField, basis: &[DiscreteField]) -> f64 {
    let d = f.lattice_dim();
    let mu = f.cell_measure();
    let mut recon = vec![0.0; f.values().len()];
    for b in basis {
        let mut c = vec![0.0; d];
        for (chunk, w) in f.values().chunks(d).zip(b.values()) {
            for (ck, v) in c.iter_mut().zip(chunk) {
                *ck += v * w * mu;
            }
        }
        for (chunk, w) in recon.chunks_mut(d).zip(b.values()) {
            for (r, ck) in chunk.iter_mut().zip(&c) {
                *r += ck * w;
            }
        }
    }
    f.max_abs_diff(&f.with_values(recon))
}

struct HaarDeviations {
    difference: f64,
    block: f64,
    telescoping: f64,
}

/// Martingale differences against Haar projections, blocks and their
/// telescoping sums against conditional expectations, on every axis.
fn block_deviations(f: &DiscreteField) -> Result<HaarDeviations, dyadshift::Error> {
    let mut dev = HaarDeviations {
        difference: 0.0,
        block: 0.0,
        telescoping: 0.0,
    };
    let order: Vec<AxisId> = f.axes().iter().map(|a| a.id).collect();
    for (pos, axis) in f.axes().iter().enumerate() {
        let id = axis.id;
        let e: Vec<DiscreteField> = (0..=axis.levels)
            .map(|l| conditional_expectation(f, l, id))
            .collect::<Result<_, _>>()?;
        for k in axis.cubes_up_to(axis.levels - 1) {
            let mut projection = f.zeros_like();
            for eta in 1..(1u32 << axis.dim) {
                let h = HaarIndex::new(k, eta);
                let c = haar_pairing(f, &h, id)?;
                let term = haar_function(axis, &h)?.tensor(&c)?.reorder_axes(&order)?;
                projection = projection.add(&term)?;
            }
            dev.difference = dev.difference.max(martingale_difference(f, &k, id)?.max_abs_diff(&projection));

            let l = k.level as usize;
            let mut sum = f.zeros_like();
            for i in 0..axis.levels - k.level {
                let block = martingale_block(f, &k, i, id)?;
                let want = restrict(&e[l + i as usize + 1].sub(&e[l + i as usize])?, pos, &k);
                dev.block = dev.block.max(block.max_abs_diff(&want));
                sum = sum.add(&block)?;
                let tele = restrict(&e[l + i as usize + 1].sub(&e[l])?, pos, &k);
                dev.telescoping = dev.telescoping.max(sum.max_abs_diff(&tele));
            }
        }
    }
    Ok(dev)
}

pub fn haar_calculus(cfg: &Resolved) -> SuiteResult {
    let mut jobs = Vec::new();
    for (g, grid) in cfg.grids.iter().enumerate() {
        for &d in &cfg.lattice_dims {
            jobs.push((g, *grid, d));
        }
    }
    let results: Vec<Result<[f64; 5], SuiteError>> = jobs
        .par_iter()
        .map(|&(g, grid, d)| {
            let axes: Vec<GridAxis> = (0..grid.axes)
                .map(|k| GridAxis::new(AxisId(k as u8), grid.dim, grid.levels))
                .collect::<Result<_, _>>()?;
            let basis = tensor_basis(&axes)?;
            let lattice = LatticeSpec::flat(d, 2.0)?;
            let mut dev = [orthonormality_deviation(&basis)?, 0.0, 0.0, 0.0, 0.0];
            for t in 0..cfg.trials {
                let mut rng = rng_for(cfg.seed, &[g as u64, d as u64, t as u64]);
                let f = random_field(&axes, &lattice, &mut rng);
                let b = block_deviations(&f)?;
                dev[1] = dev[1].max(reconstruction_deviation(&f, &basis));
                dev[2] = dev[2].max(b.difference);
                dev[3] = dev[3].max(b.block);
                dev[4] = dev[4].max(b.telescoping);
            }
            Ok(dev)
        })
        .collect();

    let mut table = Table::new(&["axes", "dim", "levels", "d", "check", "max_abs_dev", "pass"]);
    let checks = ["orthonormality", "reconstruction", "difference", "block", "telescoping"];
    let mut worst = [0.0f64; 5];
    for ((_, grid, d), dev) in jobs.iter().zip(results) {
        let dev = dev?;
        for (k, name) in checks.iter().enumerate() {
            worst[k] = worst[k].max(dev[k]);
            table.push(vec![
                grid.axes.into(),
                grid.dim.into(),
                grid.levels.into(),
                (*d).into(),
                (*name).into(),
                dev[k].into(),
                (dev[k] <= cfg.tolerance).into(),
            ]);
        }
    }
    let criteria = checks
        .iter()
        .zip(worst)
        .map(|(name, w)| Criterion::at_most(format!("haar {name}"), w, cfg.tolerance, "largest deviation over all grids"))
        .collect();
    Ok(Outcome {
        table,
        fits: Vec::new(),
        criteria,
    })
}

pub fn identity_318(cfg: &Resolved) -> SuiteResult {
    let mut jobs = Vec::new();
    for (n, dp) in cfg.depths.iter().enumerate() {
        for &l in &cfg.levels {
            jobs.push((n, [dp[0], dp[1], dp[2], dp[3]], l));
        }
    }
    let results: Vec<Result<f64, SuiteError>> = jobs
        .par_iter()
        .map(|&(n, [i1, i2, j1, j2], l)| {
            let a = GridAxis::interval(0, l);
            let b = GridAxis::interval(1, l);
            let top = [l - 1 - i1.max(i2), l - 1 - j1.max(j2)];
            let mut dev: f64 = 0.0;
            for &d in &cfg.lattice_dims {
                let lattice = LatticeSpec::flat(d, 2.0)?;
                for t in 0..cfg.trials {
                    let mut rng = rng_for(cfg.seed, &[n as u64, l as u64, d as u64, t as u64]);
                    let kernels = KernelFamily2P::random(
                        [&a, &b],
                        top,
                        [i2 + 1, j2 + 1],
                        [i1 + 1, j1 + 1],
                        d,
                        KernelValues::GaussianMatrix,
                        &mut rng,
                    )?;
                    let spec = ShiftSpec2P {
                        i1,
                        i2,
                        j1,
                        j2,
                        kernels,
                        claimed_ca: 1.0,
                    };
                    let f = random_field(&[a, b], &lattice, &mut rng);
                    let x = apply_shift_2p(&spec, &f)?;
                    let y = nest_biparameter(&spec, &f)?;
                    dev = dev.max(scaled_deviation(&x, &y));
                }
            }
            Ok(dev)
        })
        .collect();

    let mut table = Table::new(&["i1", "i2", "j1", "j2", "L", "seed", "max_abs_dev", "pass"]);
    let mut worst: f64 = 0.0;
    for ((_, [i1, i2, j1, j2], l), dev) in jobs.iter().zip(results) {
        let dev = dev?;
        worst = worst.max(dev);
        table.push(vec![
            (*i1).into(),
            (*i2).into(),
            (*j1).into(),
            (*j2).into(),
            (*l).into(),
            cfg.seed.into(),
            dev.into(),
            (dev <= cfg.tolerance).into(),
        ]);
    }
    let pairs = cfg.trials * cfg.lattice_dims.len();
    Ok(Outcome {
        table,
        fits: Vec::new(),
        criteria: vec![Criterion::at_most(
            "bi-parameter shift paths agree",
            worst,
            cfg.tolerance,
            format!("{} depth points, {pairs} kernel/input pairs each", jobs.len()),
        )],
    })
}

fn random_model(axis: &GridAxis, i1: u32, i2: u32, d: usize, rng: &mut dyadshift::rng::Rng) -> ModelOperatorSpec {
    let top = axis.levels - 1 - i1.max(i2);
    let entries = model_index_set(axis, top, i1, i2)
        .into_iter()
        .map(|(cube, input, output)| ModelEntry {
            cube,
            input,
            output,
            operator: InnerOperator::Matrix(Matrix {
                dim: d,
                entries: normals(rng, d * d),
            }),
        })
        .collect();
    ModelOperatorSpec {
        axis: axis.id,
        i1,
        i2,
        entries,
    }
}

pub fn model_41(cfg: &Resolved) -> SuiteResult {
    let mut jobs = Vec::new();
    for (n, dp) in cfg.depths.iter().enumerate() {
        for &l in &cfg.levels {
            for &d in &cfg.lattice_dims {
                jobs.push((n, dp[0], dp[1], l, d));
            }
        }
    }
    let results: Vec<Result<f64, SuiteError>> = jobs
        .par_iter()
        .map(|&(n, i1, i2, l, d)| {
            let axis = GridAxis::interval(0, l);
            let lattice = LatticeSpec::flat(d, 2.0)?;
            let mut dev: f64 = 0.0;
            for t in 0..cfg.trials {
                let mut rng = rng_for(cfg.seed, &[n as u64, l as u64, d as u64, t as u64]);
                let m = random_model(&axis, i1, i2, d, &mut rng);
                let s = model_to_shift(&m, &axis)?;
                let f = random_field(&[axis, GridAxis::interval(1, 1)], &lattice, &mut rng);
                dev = dev.max(scaled_deviation(&apply_model(&m, &f)?, &apply_shift_1p(&s, &f)?));
            }
            Ok(dev)
        })
        .collect();

    let mut table = Table::new(&["i1", "i2", "L", "d", "specs", "max_abs_dev", "pass"]);
    let mut worst: f64 = 0.0;
    for ((_, i1, i2, l, d), dev) in jobs.iter().zip(results) {
        let dev = dev?;
        worst = worst.max(dev);
        table.push(vec![
            (*i1).into(),
            (*i2).into(),
            (*l).into(),
            (*d).into(),
            cfg.trials.into(),
            dev.into(),
            (dev <= cfg.tolerance).into(),
        ]);
    }
    Ok(Outcome {
        table,
        fits: Vec::new(),
        criteria: vec![Criterion::at_most(
            "model operators match their shifts",
            worst,
            cfg.tolerance,
            format!("{} random model specs", jobs.len() * cfg.trials),
        )],
    })
}

pub fn l2_contraction(cfg: &Resolved) -> SuiteResult {
    let bound = cfg.bound.unwrap_or(1.0);
    let mut jobs = Vec::new();
    for (n, dp) in cfg.depths.iter().enumerate() {
        for &l in &cfg.levels {
            for &d in &cfg.lattice_dims {
                jobs.push((n, dp[0], dp[1], l, d));
            }
        }
    }
    let results: Vec<Result<f64, SuiteError>> = jobs
        .par_iter()
        .map(|&(n, i1, i2, l, d)| {
            let axis = GridAxis::interval(0, l);
            let lattice = LatticeSpec::flat(d, 2.0)?;
            let spec = MixedNormSpec::uniform(&[axis.id], 2.0, lattice.clone())?;
            let shape = FieldShape::new(vec![axis], lattice);
            let mut max_norm: f64 = 0.0;
            for t in 0..cfg.trials {
                let mut rng = rng_for(cfg.seed, &[n as u64, l as u64, d as u64, t as u64]);
                let top = l - 1 - i1.max(i2);
                let kernels = KernelFamily1P::random(&axis, top, i2 + 1, i1 + 1, d, KernelValues::ScalarIdentity, &mut rng)?;
                let op = ShiftOperator1P::new(ShiftSpec1P::new(i1, i2, kernels, 1.0), shape.clone())?;
                max_norm = max_norm.max(operator_norm(&op, &spec, &spec, &NormMode::ExactSvd)?.estimate);
            }
            Ok(max_norm)
        })
        .collect();

    let mut table = Table::new(&["i1", "i2", "L", "d", "draws", "max_norm", "pass"]);
    let mut worst: f64 = 0.0;
    for ((_, i1, i2, l, d), norm) in jobs.iter().zip(results) {
        let norm = norm?;
        worst = worst.max(norm);
        table.push(vec![
            (*i1).into(),
            (*i2).into(),
            (*l).into(),
            (*d).into(),
            cfg.trials.into(),
            norm.into(),
            (norm <= bound + cfg.tolerance).into(),
        ]);
    }
    Ok(Outcome {
        table,
        fits: Vec::new(),
        criteria: vec![Criterion::at_most(
            "scalar shifts are L2 contractions",
            worst,
            bound + cfg.tolerance,
            format!("largest exact norm over {} draws", jobs.len() * cfg.trials),
        )],
    })
}
