//! R-bounds of normalized paraproduct families along a ladder of family sizes.

use dyadshift::dyadic::{DiscreteField, GridAxis};
use dyadshift::lattice::LatticeSpec;
use dyadshift::norms::SearchOptions;
use dyadshift::operator::{FieldShape, FnOperator, LinearOp};
use dyadshift::paraproduct::{
    apply_pi, apply_pi_adjoint, apply_pi_full, apply_pi_full_adjoint, apply_pi_mixed, apply_pi_mixed_adjoint,
    Symbol1P, Symbol2P,
};
use dyadshift::randomized::{r_bound_estimate, RBoundBudget};
use dyadshift::rng::rng_for;
use rayon::prelude::*;

use super::{mixed, seed, Outcome, SuiteError, SuiteResult};
use crate::config::{Resolved, Suite};
use crate::report::{Criterion, Table};

/// Terms per bi-parameter symbol.
const SYMBOL_TERMS: usize = 8;

/// Tuple sizes, starts, alternations and steps of the randomized search. The
/// single-operator norms use the configured restarts and iterations.
const TUPLE_SIZES: [usize; 2] = [2, 4];
const TUPLE_RESTARTS: usize = 2;
const ROUNDS: usize = 2;
const STEPS: usize = 4;

#[derive(Clone, Copy)]
enum Flavor {
    Pi,
    PiFull,
    PiMixed,
}

impl Flavor {
    fn of(suite: Suite) -> Self {
        match suite {
            Suite::ParaproductRbound54 => Flavor::Pi,
            Suite::ParaproductRbound55 => Flavor::PiFull,
            _ => Flavor::PiMixed,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Flavor::Pi => "pi",
            Flavor::PiFull => "pi-full",
            Flavor::PiMixed => "pi-mixed",
        }
    }
}

fn field_map(
    shape: &FieldShape,
    f: impl Fn(&DiscreteField) -> dyadshift::Result<DiscreteField> + Send + Sync + 'static,
) -> impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static {
    let sh = shape.clone();
    move |x| f(&sh.field(x.to_vec()).expect("input matches the shape")).expect("symbol matches the grid").into_values()
}

/// The first `n` operators of one seeded family.
fn family(flavor: Flavor, axes: [GridAxis; 2], shape: &FieldShape, n: usize, master: u64) -> dyadshift::Result<Vec<FnOperator>> {
    (0..n)
        .map(|k| {
            let mut rng = rng_for(master, &[k as u64]);
            let op = match flavor {
                Flavor::Pi => {
                    let b = Symbol1P::random(axes[0], 1.0, &mut rng)?;
                    let c = b.clone();
                    FnOperator::new(shape.clone(), shape.clone(), field_map(shape, move |f| apply_pi(&b, f)))
                        .with_adjoint(field_map(shape, move |g| apply_pi_adjoint(&c, g)))
                }
                Flavor::PiFull | Flavor::PiMixed => {
                    let s = Symbol2P::random(axes, SYMBOL_TERMS, 1.0, &mut rng)?;
                    let t = s.clone();
                    if matches!(flavor, Flavor::PiFull) {
                        FnOperator::new(shape.clone(), shape.clone(), field_map(shape, move |f| apply_pi_full(&s, f)))
                            .with_adjoint(field_map(shape, move |g| apply_pi_full_adjoint(&t, g)))
                    } else {
                        FnOperator::new(shape.clone(), shape.clone(), field_map(shape, move |f| apply_pi_mixed(&s, f)))
                            .with_adjoint(field_map(shape, move |g| apply_pi_mixed_adjoint(&t, g)))
                    }
                }
            };
            Ok(op)
        })
        .collect()
}

pub fn paraproduct_rbound(cfg: &Resolved) -> SuiteResult {
    let flavor = Flavor::of(cfg.suite);
    let largest = *cfg.sizes.iter().max().expect("sizes validated non-empty");
    let mut jobs = Vec::new();
    for (e, _) in cfg.exponents.iter().enumerate() {
        for &d in &cfg.lattice_dims {
            for &l in &cfg.levels {
                for &n in &cfg.sizes {
                    jobs.push((e, d, l, n));
                }
            }
        }
    }
    let results: Vec<Result<(f64, f64), SuiteError>> = jobs
        .par_iter()
        .map(|&(e, d, l, n)| {
            let [p, r] = [cfg.exponents[e][0], cfg.exponents[e][1]];
            let axes = [GridAxis::interval(0, l), GridAxis::interval(1, l)];
            let lattice = LatticeSpec::flat(d, r)?;
            let (grid, spec) = match flavor {
                Flavor::Pi => (vec![axes[0]], mixed(&[axes[0].id], &[p], lattice.clone())?),
                _ => (axes.to_vec(), mixed(&[axes[0].id, axes[1].id], &[p, r], lattice.clone())?),
            };
            let shape = FieldShape::new(grid, lattice);
            // Families are nested prefixes of one seeded sequence.
            let ops = family(flavor, axes, &shape, n, seed(cfg, &[d as u64, l as u64]))?;
            let refs: Vec<&dyn LinearOp> = ops.iter().map(|o| o as &dyn LinearOp).collect();
            let s = seed(cfg, &[e as u64, d as u64, l as u64, n as u64]);
            let budget = RBoundBudget {
                sizes: TUPLE_SIZES.to_vec(),
                restarts: TUPLE_RESTARTS,
                rounds: ROUNDS,
                steps: STEPS,
                seed: s,
                single: SearchOptions {
                    restarts: cfg.restarts,
                    iterations: cfg.iterations,
                    seed: s,
                    ..SearchOptions::default()
                },
            };
            let report = r_bound_estimate(&refs, &spec, &budget)?;
            Ok((report.estimate, report.single_max))
        })
        .collect();

    let mut table = Table::new(&[
        "flavor", "p", "r", "d", "L", "family_size", "estimate", "single_max", "growth", "pass",
    ]);
    let mut criteria = Vec::new();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    for (chunk, res) in jobs.chunks(cfg.sizes.len()).zip(results.chunks(cfg.sizes.len())) {
        let (e, d, l, _) = chunk[0];
        let ex = &cfg.exponents[e];
        let small = chunk
            .iter()
            .zip(res)
            .min_by_key(|(j, _)| j.3)
            .map(|(_, r)| r.0)
            .expect("non-empty ladder");
        let mut top = (0usize, 1.0);
        for (job, (est, single)) in chunk.iter().zip(res) {
            let growth = est / small;
            if job.3 >= top.0 {
                top = (job.3, growth);
            }
            table.push(vec![
                flavor.name().into(),
                ex[0].into(),
                ex[1].into(),
                d.into(),
                l.into(),
                job.3.into(),
                (*est).into(),
                (*single).into(),
                growth.into(),
                (growth <= cfg.stability).into(),
            ]);
        }
        criteria.push(Criterion::at_most(
            format!("{} R-bound stable, p={} r={} d={d} L={l}", flavor.name(), ex[0], ex[1]),
            top.1,
            cfg.stability,
            format!("estimate growth from the smallest family to {largest} operators"),
        ));
    }
    Ok(Outcome {
        table,
        fits: Vec::new(),
        criteria,
    })
}
