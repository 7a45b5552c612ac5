//! Suites fitting norm estimates against depth growth models: bi-parameter
//! shifts, partial paraproducts and tri-parameter partial paraproducts.

use std::collections::BTreeMap;

use dyadshift::dyadic::{AxisId, GridAxis};
use dyadshift::lattice::LatticeSpec;
use dyadshift::norms::operator_norm;
use dyadshift::operator::{assemble, DenseOperator, FieldShape, FnOperator};
use dyadshift::paraproduct::{apply_partial_2p, apply_tri_type1, apply_tri_type2, PartialSymbol2P, PiFlavor, TriSymbolT1, TriSymbolT2};
use dyadshift::rng::{rng_for, Rng};
use dyadshift::shift::{KernelFamily2P, KernelValues, ShiftOperator2P, ShiftSpec2P};
use rayon::prelude::*;

use super::{exps_label, mixed, search, seed, stability_criterion, Outcome, SuiteError, SuiteResult};
use crate::config::Resolved;
use crate::fit::{fit_growth, DepthKey, GrowthFit, GrowthModel};
use crate::report::{Criterion, FitRecord, Table};

/// A fit label and its `(depth, estimate)` rows.
type Group = (String, Vec<(DepthKey, f64)>);

/// Fits each group and records it under its label.
fn fit_groups<K: Ord + Clone>(
    groups: &BTreeMap<K, Group>,
    fits: &mut Vec<FitRecord>,
) -> Result<BTreeMap<K, GrowthFit>, SuiteError> {
    let mut out = BTreeMap::new();
    for (k, (label, rows)) in groups {
        let fit = fit_growth(rows, GrowthModel::MinDepth)?;
        fits.push(FitRecord {
            group: label.clone(),
            fit: fit.clone(),
        });
        out.insert(k.clone(), fit);
    }
    Ok(out)
}

fn first_last(levels: &[u32]) -> (u32, u32) {
    let lo = *levels.iter().min().expect("levels validated non-empty");
    let hi = *levels.iter().max().expect("levels validated non-empty");
    (lo, hi)
}

pub fn shift_growth(cfg: &Resolved) -> SuiteResult {
    let mut jobs = Vec::new();
    for (e, _) in cfg.exponents.iter().enumerate() {
        for &d in &cfg.lattice_dims {
            for &l in &cfg.levels {
                for (n, dp) in cfg.depths.iter().enumerate() {
                    jobs.push((e, d, l, n, DepthKey::two(dp[0], dp[1], dp[2], dp[3])));
                }
            }
        }
    }
    let results: Vec<Result<f64, SuiteError>> = jobs
        .par_iter()
        .map(|&(e, d, l, n, key)| {
            let [p, q, r] = [cfg.exponents[e][0], cfg.exponents[e][1], cfg.exponents[e][2]];
            let ([i1, i2], [j1, j2]) = (key.i, key.j.expect("bi-parameter key"));
            let a = GridAxis::interval(0, l);
            let b = GridAxis::interval(1, l);
            let lattice = LatticeSpec::flat(d, r)?;
            let spec = mixed(&[a.id, b.id], &[p, q], lattice.clone())?;
            let shape = FieldShape::new(vec![a, b], lattice);
            let top = [l - 1 - i1.max(i2), l - 1 - j1.max(j2)];
            let mut best: f64 = 0.0;
            for t in 0..cfg.trials {
                let path = [e as u64, d as u64, l as u64, n as u64, t as u64];
                let mut rng = rng_for(cfg.seed, &path);
                let kernels = KernelFamily2P::random(
                    [&a, &b],
                    top,
                    [i2 + 1, j2 + 1],
                    [i1 + 1, j1 + 1],
                    d,
                    KernelValues::ScalarIdentity,
                    &mut rng,
                )?;
                let s = ShiftSpec2P {
                    i1,
                    i2,
                    j1,
                    j2,
                    kernels,
                    claimed_ca: 1.0,
                };
                let op = ShiftOperator2P::new(s, shape.clone())?;
                let mode = search(cfg, seed(cfg, &path));
                best = best.max(operator_norm(&op, &spec, &spec, &mode)?.estimate);
            }
            Ok(best)
        })
        .collect();

    let mut table = Table::new(&[
        "p", "q", "r", "d", "L", "i1", "i2", "j1", "j2", "model", "estimate", "ratio",
    ]);
    let mut groups: BTreeMap<(usize, usize, u32), Group> = BTreeMap::new();
    for ((e, d, l, _, key), est) in jobs.iter().zip(results) {
        let est = est?;
        let ex = &cfg.exponents[*e];
        let m = GrowthModel::MinDepth.value(key);
        let j = key.j.expect("bi-parameter key");
        table.push(vec![
            ex[0].into(),
            ex[1].into(),
            ex[2].into(),
            (*d).into(),
            (*l).into(),
            key.i[0].into(),
            key.i[1].into(),
            j[0].into(),
            j[1].into(),
            m.into(),
            est.into(),
            (est / m).into(),
        ]);
        groups
            .entry((*e, *d, *l))
            .or_insert_with(|| (format!("p/q/r={} d={d} L={l}", exps_label(ex)), Vec::new()))
            .1
            .push((*key, est));
    }
    let mut fits = Vec::new();
    let fitted = fit_groups(&groups, &mut fits)?;
    let (lo, hi) = first_last(&cfg.levels);
    let mut criteria = Vec::new();
    for (e, ex) in cfg.exponents.iter().enumerate() {
        for &d in &cfg.lattice_dims {
            criteria.push(stability_criterion(
                cfg,
                format!("shift growth constant stable, p/q/r={} d={d}", exps_label(ex)),
                (&format!("L={lo}"), &fitted[&(e, d, lo)]),
                (&format!("L={hi}"), &fitted[&(e, d, hi)]),
            ));
        }
    }
    Ok(Outcome { table, fits, criteria })
}

const ORDERS: [&str; 2] = ["shift-outer", "paraproduct-outer"];

pub fn partial_paraproduct(cfg: &Resolved) -> SuiteResult {
    let draws = *cfg.sizes.iter().max().expect("sizes validated non-empty");
    let mut jobs = Vec::new();
    for (e, _) in cfg.exponents.iter().enumerate() {
        for &d in &cfg.lattice_dims {
            for &l in &cfg.levels {
                for (n, dp) in cfg.depths.iter().enumerate() {
                    jobs.push((e, d, l, n, DepthKey::one(dp[0], dp[1])));
                }
            }
        }
    }
    // Per job: estimates per order, one per draw.
    let results: Vec<Result<[Vec<f64>; 2], SuiteError>> = jobs
        .par_iter()
        .map(|&(e, d, l, n, key)| {
            let [p, q, r] = [cfg.exponents[e][0], cfg.exponents[e][1], cfg.exponents[e][2]];
            let a = GridAxis::interval(0, l);
            let b = GridAxis::interval(1, l);
            let lattice = LatticeSpec::flat(d, r)?;
            let specs = [
                mixed(&[a.id, b.id], &[p, q], lattice.clone())?,
                mixed(&[b.id, a.id], &[q, p], lattice.clone())?,
            ];
            let shape = FieldShape::new(vec![a, b], lattice);
            let mut out = [Vec::with_capacity(draws), Vec::with_capacity(draws)];
            for t in 0..draws {
                let path = [d as u64, l as u64, n as u64, t as u64];
                let mut rng = rng_for(cfg.seed, &path);
                let sym = PartialSymbol2P::random(a, b, key.i[0], key.i[1], l - 1, 1.0, &mut rng)?;
                let sh = shape.clone();
                let op = FnOperator::new(shape.clone(), shape.clone(), move |x| {
                    let f = sh.field(x.to_vec()).expect("input matches the domain");
                    apply_partial_2p(&sym, &f).expect("symbol matches the grid").into_values()
                });
                let dense = assemble(&op)?;
                for (o, spec) in specs.iter().enumerate() {
                    let mode = search(cfg, seed(cfg, &[e as u64, d as u64, l as u64, n as u64, t as u64, o as u64]));
                    out[o].push(operator_norm(&dense, spec, spec, &mode)?.estimate);
                }
            }
            Ok(out)
        })
        .collect();

    let mut table = Table::new(&[
        "order", "p", "q", "r", "d", "L", "i1", "i2", "symbols", "model", "estimate", "ratio",
    ]);
    type Key = (usize, usize, usize, u32, usize);
    let mut groups: BTreeMap<Key, Group> = BTreeMap::new();
    for ((e, d, l, _, key), est) in jobs.iter().zip(results) {
        let est = est?;
        let ex = &cfg.exponents[*e];
        let m = GrowthModel::MinDepth.value(key);
        for (o, per_draw) in est.iter().enumerate() {
            for &s in &cfg.sizes {
                let v = per_draw[..s].iter().fold(0.0f64, |a, b| a.max(*b));
                table.push(vec![
                    ORDERS[o].into(),
                    ex[0].into(),
                    ex[1].into(),
                    ex[2].into(),
                    (*d).into(),
                    (*l).into(),
                    key.i[0].into(),
                    key.i[1].into(),
                    s.into(),
                    m.into(),
                    v.into(),
                    (v / m).into(),
                ]);
                groups
                    .entry((*e, o, *d, *l, s))
                    .or_insert_with(|| {
                        let label = format!("{} p/q/r={} d={d} L={l} symbols={s}", ORDERS[o], exps_label(ex));
                        (label, Vec::new())
                    })
                    .1
                    .push((*key, v));
            }
        }
    }
    let mut fits = Vec::new();
    let fitted = fit_groups(&groups, &mut fits)?;
    let small = *cfg.sizes.iter().min().expect("sizes validated non-empty");
    let mut criteria = Vec::new();
    for (e, ex) in cfg.exponents.iter().enumerate() {
        for (o, order) in ORDERS.iter().enumerate() {
            for &d in &cfg.lattice_dims {
                for &l in &cfg.levels {
                    criteria.push(stability_criterion(
                        cfg,
                        format!("partial paraproduct constant stable, {order} p/q/r={} d={d} L={l}", exps_label(ex)),
                        (&format!("{small} symbols"), &fitted[&(e, o, d, l, small)]),
                        (&format!("{draws} symbols"), &fitted[&(e, o, d, l, draws)]),
                    ));
                }
            }
        }
    }
    Ok(Outcome { table, fits, criteria })
}

/// The six orders of three axes, outermost first.
fn permutations(ids: [AxisId; 3]) -> Vec<[AxisId; 3]> {
    const P: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    P.iter().map(|p| [ids[p[0]], ids[p[1]], ids[p[2]]]).collect()
}

fn order_label(order: &[AxisId; 3]) -> String {
    order.iter().map(|a| a.0.to_string()).collect()
}

type Builder = dyn Fn(usize, &[u32], [GridAxis; 3], &FieldShape, &mut Rng) -> Result<DenseOperator, dyadshift::Error> + Sync;

/// Shared driver of both tri-parameter suites: two independent seed batches,
/// each reporting the largest estimate over `trials` draws, in every order.
fn tri_partial(cfg: &Resolved, flavors: &[&str], depth_columns: &[&str], build: &Builder) -> SuiteResult {
    const BATCHES: usize = 2;
    let mut jobs = Vec::new();
    for (f, _) in flavors.iter().enumerate() {
        for (e, _) in cfg.exponents.iter().enumerate() {
            for &d in &cfg.lattice_dims {
                for &l in &cfg.levels {
                    for (n, _) in cfg.depths.iter().enumerate() {
                        for batch in 0..BATCHES {
                            jobs.push((f, e, d, l, n, batch));
                        }
                    }
                }
            }
        }
    }
    let results: Vec<Result<Vec<f64>, SuiteError>> = jobs
        .par_iter()
        .map(|&(f, e, d, l, n, batch)| {
            let ex = &cfg.exponents[e];
            let axes = [GridAxis::interval(0, l), GridAxis::interval(1, l), GridAxis::interval(2, l)];
            let lattice = LatticeSpec::flat(d, ex[3])?;
            let orders = permutations([axes[0].id, axes[1].id, axes[2].id]);
            let specs = orders
                .iter()
                .map(|o| mixed(o, &ex[..3], lattice.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            let shape = FieldShape::new(axes.to_vec(), lattice);
            let mut best = vec![0.0f64; specs.len()];
            for t in 0..cfg.trials {
                let path = [f as u64, d as u64, l as u64, n as u64, batch as u64, t as u64];
                let mut rng = rng_for(cfg.seed, &path);
                let dense = build(f, &cfg.depths[n], axes, &shape, &mut rng)?;
                for (k, spec) in specs.iter().enumerate() {
                    let mut p = path.to_vec();
                    p.extend([e as u64, k as u64]);
                    let mode = search(cfg, seed(cfg, &p));
                    best[k] = best[k].max(operator_norm(&dense, spec, spec, &mode)?.estimate);
                }
            }
            Ok(best)
        })
        .collect();

    let mut columns = vec!["flavor", "order", "s0", "s1", "s2", "r", "d", "L"];
    columns.extend_from_slice(depth_columns);
    columns.extend(["batch", "model", "estimate", "ratio"]);
    let mut table = Table::new(&columns);
    type Key = (usize, usize, usize, u32, usize, usize);
    let mut groups: BTreeMap<Key, Group> = BTreeMap::new();
    let ids = [AxisId(0), AxisId(1), AxisId(2)];
    let orders = permutations(ids);
    for ((f, e, d, l, n, batch), est) in jobs.iter().zip(results) {
        let est = est?;
        let ex = &cfg.exponents[*e];
        let dp = &cfg.depths[*n];
        let key = if dp.len() == 2 {
            DepthKey::one(dp[0], dp[1])
        } else {
            DepthKey::two(dp[0], dp[1], dp[2], dp[3])
        };
        let m = GrowthModel::MinDepth.value(&key);
        for (k, v) in est.iter().enumerate() {
            let mut row = vec![
                flavors[*f].into(),
                order_label(&orders[k]).into(),
                ex[0].into(),
                ex[1].into(),
                ex[2].into(),
                ex[3].into(),
                (*d).into(),
                (*l).into(),
            ];
            row.extend(dp.iter().map(|&x| x.into()));
            row.extend([(*batch).into(), m.into(), (*v).into(), (v / m).into()]);
            table.push(row);
            groups
                .entry((*f, *e, *d, *l, k, *batch))
                .or_insert_with(|| {
                    let label = format!(
                        "{} order={} s/r={} d={d} L={l} batch={batch}",
                        flavors[*f],
                        order_label(&orders[k]),
                        exps_label(ex)
                    );
                    (label, Vec::new())
                })
                .1
                .push((key, *v));
        }
    }
    let mut fits = Vec::new();
    let fitted = fit_groups(&groups, &mut fits)?;
    let mut criteria = Vec::new();
    for (f, flavor) in flavors.iter().enumerate() {
        for (e, ex) in cfg.exponents.iter().enumerate() {
            for &d in &cfg.lattice_dims {
                for &l in &cfg.levels {
                    let worst = (0..orders.len())
                        .map(|k| {
                            let c = stability_criterion(
                                cfg,
                                String::new(),
                                ("batch 0", &fitted[&(f, e, d, l, k, 0)]),
                                ("batch 1", &fitted[&(f, e, d, l, k, 1)]),
                            );
                            (c, k)
                        })
                        .max_by(|a, b| a.0.value.total_cmp(&b.0.value))
                        .expect("six orders");
                    let (c, k) = worst;
                    criteria.push(Criterion {
                        name: format!("tri-parameter constant stable, {flavor} s/r={} d={d} L={l}", exps_label(ex)),
                        detail: format!("worst order {}: {}", order_label(&orders[k]), c.detail),
                        ..c
                    });
                }
            }
        }
    }
    Ok(Outcome { table, fits, criteria })
}

fn dense_of(shape: &FieldShape, apply: impl Fn(&dyadshift::DiscreteField) -> dyadshift::DiscreteField + Send + Sync + 'static) -> Result<DenseOperator, dyadshift::Error> {
    let sh = shape.clone();
    let op = FnOperator::new(shape.clone(), shape.clone(), move |x| {
        apply(&sh.field(x.to_vec()).expect("input matches the domain")).into_values()
    });
    assemble(&op)
}

pub fn tri_partial_81(cfg: &Resolved) -> SuiteResult {
    let terms = cfg.sizes.first().copied().unwrap_or(4);
    let build = move |f: usize, dp: &[u32], axes: [GridAxis; 3], shape: &FieldShape, rng: &mut Rng| {
        let flavor = if f == 0 { PiFlavor::Standard } else { PiFlavor::Mixed };
        let l = axes[0].levels;
        let t = TriSymbolT1::random(axes[0], [axes[1], axes[2]], dp[0], dp[1], flavor, l - 1, terms, 1.0, rng)?;
        dense_of(shape, move |g| apply_tri_type1(&t, g).expect("symbol matches the grid"))
    };
    tri_partial(cfg, &["pi", "pi-mixed"], &["i1", "i2"], &build)
}

pub fn tri_partial_82(cfg: &Resolved) -> SuiteResult {
    let build = |_: usize, dp: &[u32], axes: [GridAxis; 3], shape: &FieldShape, rng: &mut Rng| {
        let l = axes[0].levels;
        let t = TriSymbolT2::random([axes[0], axes[1]], axes[2], [dp[0], dp[1]], [dp[2], dp[3]], [l - 1, l - 1], 1.0, rng)?;
        dense_of(shape, move |g| apply_tri_type2(&t, g).expect("symbol matches the grid"))
    };
    tri_partial(cfg, &["partial"], &["i1", "i2", "j1", "j2"], &build)
}
