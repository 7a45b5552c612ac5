//! Stopping families with sparseness certificates, and the product-BMO key
//! estimate.

use dyadshift::dyadic::{DiscreteField, GridAxis};
use dyadshift::norms::key_estimate_ratio;
use dyadshift::paraproduct::{random_haar, Symbol1P, Symbol2P, SymbolTerm2P};
use dyadshift::rng::{normal, normals, rng_for};
use dyadshift::stopping::{block_sum, block_sup, combined_stopping, principal_cubes, stopping_cubes_b, verify_sparse, StoppingFamily};
use rayon::prelude::*;

use super::{Outcome, SuiteError, SuiteResult};
use crate::config::Resolved;
use crate::fit::spread;
use crate::report::{Criterion, Table};

/// Largest generation packing allowed by the stopping threshold.
const PACKING: f64 = 0.25;
/// Smallest `|E_Q| / |Q|` of a sparse family.
const SPARSE_RATIO: f64 = 0.5;

#[derive(Clone, Copy, Default)]
struct StoppingStats {
    packing: f64,
    sparse_failures: usize,
    min_sparse_ratio: f64,
    block_sup: f64,
    telescoping: f64,
    members: usize,
}

/// `<b>_{K(x)} - <b>_J` for `x` in a child `K`, `b(x) - <b>_J` elsewhere in `J`.
fn telescoping_deviation(b: &DiscreteField, fam: &StoppingFamily, j: &dyadshift::DyadicCube) -> Result<f64, dyadshift::Error> {
    let ax = fam.axis;
    let vals = b.values();
    let avg = |q: &dyadshift::DyadicCube| {
        let r = ax.cell_range(q);
        vals[r.clone()].iter().sum::<f64>() / r.len() as f64
    };
    let mut want = vec![0.0; ax.cells()];
    let base = avg(j);
    for x in ax.cell_range(j) {
        want[x] = vals[x] - base;
    }
    for k in fam.children_of(j) {
        let a = avg(&k) - base;
        for x in ax.cell_range(&k) {
            want[x] = a;
        }
    }
    let got = block_sum(b, fam, j)?;
    Ok(got.iter().zip(&want).fold(0.0, |m, (g, w)| m.max((g - w).abs())))
}

fn stopping_trial(axis: GridAxis, master: u64, t: usize) -> Result<StoppingStats, SuiteError> {
    let mut rng = rng_for(master, &[axis.levels as u64, t as u64]);
    let b = Symbol1P::random(axis, 1.0, &mut rng)?.field();
    let f = DiscreteField::scalar(axis, normals(&mut rng, axis.cells()).into_iter().map(|g| (2.0 * g).exp()).collect())?;
    let root = axis.root();
    let fb = stopping_cubes_b(&b, &root)?;
    let ff = principal_cubes(&f, &root)?;
    let fc = combined_stopping(&b, &f, &root)?;
    let mut s = StoppingStats {
        packing: fb.packing_ratio().max(ff.packing_ratio()),
        min_sparse_ratio: 1.0,
        ..StoppingStats::default()
    };
    for fam in [&fb, &ff, &fc] {
        let cert = verify_sparse(fam);
        s.sparse_failures += usize::from(!cert.sparse);
        s.min_sparse_ratio = s.min_sparse_ratio.min(cert.min_ratio);
    }
    for (_, j) in fb.members() {
        s.block_sup = s.block_sup.max(block_sup(&b, &fb, j)?);
        s.telescoping = s.telescoping.max(telescoping_deviation(&b, &fb, j)?);
    }
    for (_, j) in fc.members() {
        s.telescoping = s.telescoping.max(telescoping_deviation(&b, &fc, j)?);
    }
    s.members = fc.members().count();
    Ok(s)
}

pub fn stopping(cfg: &Resolved) -> SuiteResult {
    let bound = cfg.bound.unwrap_or(6.0);
    let mut jobs = Vec::new();
    for &l in &cfg.levels {
        for t in 0..cfg.trials {
            jobs.push((l, t));
        }
    }
    let results: Vec<Result<StoppingStats, SuiteError>> = jobs
        .par_iter()
        .map(|&(l, t)| stopping_trial(GridAxis::interval(0, l), cfg.seed, t))
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut table = Table::new(&["check", "L", "draws", "value", "threshold", "pass"]);
    let mut worst = StoppingStats {
        min_sparse_ratio: 1.0,
        ..StoppingStats::default()
    };
    let mut criteria = Vec::new();
    for &l in &cfg.levels {
        let mut agg = StoppingStats {
            min_sparse_ratio: 1.0,
            ..StoppingStats::default()
        };
        for ((jl, _), res) in jobs.iter().zip(&results) {
            if *jl != l {
                continue;
            }
            let s = *res;
            agg.packing = agg.packing.max(s.packing);
            agg.sparse_failures += s.sparse_failures;
            agg.min_sparse_ratio = agg.min_sparse_ratio.min(s.min_sparse_ratio);
            agg.block_sup = agg.block_sup.max(s.block_sup);
            agg.telescoping = agg.telescoping.max(s.telescoping);
            agg.members += s.members;
        }
        let rows: [(&str, f64, f64, bool); 5] = [
            ("packing", agg.packing, PACKING, agg.packing <= PACKING),
            ("sparse-failures", agg.sparse_failures as f64, 0.0, agg.sparse_failures == 0),
            ("sparse-ratio", agg.min_sparse_ratio, SPARSE_RATIO, agg.min_sparse_ratio >= SPARSE_RATIO),
            ("block-sup", agg.block_sup, bound, agg.block_sup <= bound),
            ("telescoping", agg.telescoping, cfg.tolerance, agg.telescoping <= cfg.tolerance),
        ];
        for (name, value, threshold, pass) in rows {
            table.push(vec![name.into(), l.into(), cfg.trials.into(), value.into(), threshold.into(), pass.into()]);
        }
        worst.packing = worst.packing.max(agg.packing);
        worst.sparse_failures += agg.sparse_failures;
        worst.min_sparse_ratio = worst.min_sparse_ratio.min(agg.min_sparse_ratio);
        worst.block_sup = worst.block_sup.max(agg.block_sup);
        worst.telescoping = worst.telescoping.max(agg.telescoping);
    }
    let n = jobs.len();
    criteria.push(Criterion::at_most("generation packing", worst.packing, PACKING, format!("largest child measure share over {n} draws")));
    criteria.push(Criterion::at_most(
        "stopping families are sparse",
        worst.sparse_failures as f64,
        0.0,
        format!("families failing the certificate, smallest |E_Q|/|Q| {}", worst.min_sparse_ratio),
    ));
    criteria.push(Criterion::at_most("block sums bounded", worst.block_sup, bound, format!("largest block sup over {n} symbols with bmo at most 1")));
    criteria.push(Criterion::at_most("block sums telescope", worst.telescoping, cfg.tolerance, "largest pointwise deviation"));
    Ok(Outcome {
        table,
        fits: Vec::new(),
        criteria,
    })
}

/// A symbol on the support of `lambda` with independent normal coefficients.
fn companion(lambda: &Symbol2P, rng: &mut dyadshift::rng::Rng) -> Result<Symbol2P, dyadshift::Error> {
    let terms = lambda
        .terms
        .iter()
        .map(|t| SymbolTerm2P {
            value: normal(rng),
            ..t.clone()
        })
        .collect();
    Symbol2P::new(lambda.axes, terms)
}

pub fn key_estimate(cfg: &Resolved) -> SuiteResult {
    let terms = cfg.sizes.first().copied().unwrap_or(8);
    let mut jobs = Vec::new();
    for &l in &cfg.levels {
        for t in 0..cfg.trials {
            jobs.push((l, t));
        }
    }
    // Per job: single-coefficient deviation from one, random-sweep ratio.
    let results: Vec<Result<(f64, f64), SuiteError>> = jobs
        .par_iter()
        .map(|&(l, t)| {
            let axes = [GridAxis::interval(0, l), GridAxis::interval(1, l)];
            let mut rng = rng_for(cfg.seed, &[l as u64, t as u64]);
            let level = |k: u32| k % l;
            let first = random_haar(&axes[0], level(t as u32), &mut rng);
            let second = random_haar(&axes[1], level(t as u32 / l), &mut rng);
            let one = |value: f64| {
                Symbol2P::new(
                    axes,
                    vec![SymbolTerm2P {
                        first,
                        second,
                        value,
                    }],
                )
            };
            let (v, w) = (normal(&mut rng), normal(&mut rng));
            let single = (key_estimate_ratio(&one(v)?, &one(w)?)? - 1.0).abs();
            let lambda = Symbol2P::random(axes, terms, 1.0, &mut rng)?;
            let a = companion(&lambda, &mut rng)?;
            Ok((single, key_estimate_ratio(&lambda, &a)?))
        })
        .collect();

    let mut table = Table::new(&["kind", "L", "draws", "max_value", "pass"]);
    let mut worst_single: f64 = 0.0;
    let mut max_ratio = std::collections::BTreeMap::new();
    for ((l, _), res) in jobs.iter().zip(results) {
        let (single, ratio) = res?;
        worst_single = worst_single.max(single);
        let slot = max_ratio.entry(*l).or_insert((0.0f64, 0.0f64));
        slot.0 = slot.0.max(single);
        slot.1 = slot.1.max(ratio);
    }
    for (l, (single, ratio)) in &max_ratio {
        table.push(vec!["single-deviation".into(), (*l).into(), cfg.trials.into(), (*single).into(), (*single <= cfg.tolerance).into()]);
        table.push(vec!["random-ratio".into(), (*l).into(), cfg.trials.into(), (*ratio).into(), ratio.is_finite().into()]);
    }
    let lo = *cfg.levels.iter().min().expect("levels validated non-empty");
    let hi = *cfg.levels.iter().max().expect("levels validated non-empty");
    let (a, b) = (max_ratio[&lo].1, max_ratio[&hi].1);
    Ok(Outcome {
        table,
        fits: Vec::new(),
        criteria: vec![
            Criterion::at_most("single coefficient key ratio is one", worst_single, cfg.tolerance, "largest |ratio - 1|"),
            Criterion::at_most(
                "key estimate ratio stable",
                spread(a, b),
                cfg.stability,
                format!("max ratio {a} at L={lo}, {b} at L={hi}"),
            ),
        ],
    })
}
