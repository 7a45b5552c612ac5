//! The verification suites. Every random draw comes from a stream derived from
//! the master seed and the draw's coordinates, so results do not depend on
//! scheduling.

mod bmo;
mod exact;
mod growth;
mod rbound;
pub mod sampling;

use dyadshift::dyadic::{AxisId, DiscreteField, GridAxis};
use dyadshift::lattice::{LatticeSpec, MixedNormSpec};
use dyadshift::norms::{NormMode, SearchOptions};
use dyadshift::rng::{derive_seed, normals, Rng};
use thiserror::Error;

use crate::config::{Resolved, Suite};
use crate::fit::{spread, FitError, GrowthFit};
use crate::report::{Criterion, FitRecord, Table};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Core(#[from] dyadshift::Error),
    #[error(transparent)]
    Fit(#[from] FitError),
}

pub type SuiteResult = std::result::Result<Outcome, SuiteError>;

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub table: Table,
    pub fits: Vec<FitRecord>,
    pub criteria: Vec<Criterion>,
}

pub fn run(cfg: &Resolved) -> SuiteResult {
    match cfg.suite {
        Suite::HaarCalculus => exact::haar_calculus(cfg),
        Suite::Identity318 => exact::identity_318(cfg),
        Suite::Model41 => exact::model_41(cfg),
        Suite::L2Contraction => exact::l2_contraction(cfg),
        Suite::ShiftGrowth => growth::shift_growth(cfg),
        Suite::PartialParaproduct61 => growth::partial_paraproduct(cfg),
        Suite::TriPartial81 => growth::tri_partial_81(cfg),
        Suite::TriPartial82 => growth::tri_partial_82(cfg),
        Suite::ParaproductRbound54 | Suite::ParaproductRbound55 | Suite::ParaproductRbound56 => rbound::paraproduct_rbound(cfg),
        Suite::Decoupling32 => sampling::decoupling(cfg),
        Suite::KhintchineMaurey => sampling::khintchine_maurey(cfg),
        Suite::FeffermanStein => sampling::fefferman_stein(cfg),
        Suite::Stopping51 => bmo::stopping(cfg),
        Suite::KeyEstimate => bmo::key_estimate(cfg),
    }
}

fn seed(cfg: &Resolved, path: &[u64]) -> u64 {
    derive_seed(cfg.seed, path)
}

fn random_field(axes: &[GridAxis], lattice: &LatticeSpec, rng: &mut Rng) -> DiscreteField {
    let n = axes.iter().map(|a| a.cells()).product::<usize>() * lattice.dim();
    DiscreteField::from_values(axes.to_vec(), lattice.clone(), normals(rng, n)).expect("shape matches")
}

fn search(cfg: &Resolved, seed: u64) -> NormMode {
    NormMode::AscentSearch(SearchOptions {
        restarts: cfg.restarts,
        iterations: cfg.iterations,
        seed,
        ..SearchOptions::default()
    })
}

fn mixed(order: &[AxisId], exponents: &[f64], lattice: LatticeSpec) -> Result<MixedNormSpec, dyadshift::Error> {
    MixedNormSpec::new(order.to_vec(), exponents.to_vec(), lattice)
}

/// `max |x - y| / max(1, max |x|)`.
fn scaled_deviation(x: &DiscreteField, y: &DiscreteField) -> f64 {
    x.max_abs_diff(y) / x.max_abs().max(1.0)
}

fn exps_label(e: &[f64]) -> String {
    e.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("/")
}

/// Stability of two fits: the larger spread of the least-squares and the
/// bounding constants.
fn fit_spread(a: &GrowthFit, b: &GrowthFit) -> f64 {
    spread(a.c, b.c).max(spread(a.max_ratio, b.max_ratio))
}

fn stability_criterion(cfg: &Resolved, name: String, a: (&str, &GrowthFit), b: (&str, &GrowthFit)) -> Criterion {
    let s = fit_spread(a.1, b.1);
    Criterion::at_most(
        name,
        s,
        cfg.stability,
        format!(
            "C {} -> {} at {}/{}, bounding C {} -> {}",
            a.1.c, b.1.c, a.0, b.0, a.1.max_ratio, b.1.max_ratio
        ),
    )
}
