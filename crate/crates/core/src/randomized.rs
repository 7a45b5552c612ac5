//! Rademacher averages, Khintchine-Maurey and square-function equivalences,
//! R-bound estimation, and the decoupling estimate.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{conditional_expectation, AxisId, DiscreteField, DyadicCube, GridAxis};
use crate::error::{Error, Result};
use crate::lattice::{check_exponent, LatticeSpec, MixedNormSpec};
use crate::layout::block_rows;
use crate::norm_tree::NormTree;
use crate::norms::{operator_norm, NormMode, SearchOptions};
use crate::operator::{assemble, DenseOperator, LinearOp};
use crate::rng::{derive_seed, normals, rng_for, sign, Rng};

/// Largest family size whose sign patterns are enumerated exhaustively.
pub const EXACT_SIGN_LIMIT: usize = 16;
/// Monte-Carlo sample count beyond the exhaustive range.
pub const SIGN_SAMPLES: usize = 10_000;

/// A choice of signs `eps_k` indexed by position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignAssignment {
    pub signs: Vec<i8>,
}

impl SignAssignment {
    /// Bit `k` of `bits` set means `eps_k = -1`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        SignAssignment {
            signs: (0..n).map(|k| if bits >> k & 1 == 1 { -1 } else { 1 }).collect(),
        }
    }

    pub fn random(n: usize, rng: &mut Rng) -> Self {
        SignAssignment {
            signs: (0..n).map(|_| sign(rng) as i8).collect(),
        }
    }

    pub fn get(&self, k: usize) -> f64 {
        self.signs[k] as f64
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SignMode {
    /// Exhaustive up to [`EXACT_SIGN_LIMIT`] vectors, sampled beyond.
    Auto { seed: u64 },
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub value: f64,
    pub stderr: f64,
    pub exact: bool,
    pub samples: usize,
}

fn signed_sum(vectors: &[&[f64]], signs: &SignAssignment, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (k, e) in vectors.iter().enumerate() {
        let s = signs.get(k);
        for (o, x) in out.iter_mut().zip(e.iter()) {
            *o += s * x;
        }
    }
}

/// `(E ||sum eps_k e_k||^2)^{1/2}` in the norm `tree`.
pub fn rademacher_with(vectors: &[&[f64]], tree: &NormTree, mode: &SignMode) -> RademacherEstimate {
    let n = vectors.len();
    if n == 0 {
        return RademacherEstimate {
            value: 0.0,
            stderr: 0.0,
            exact: true,
            samples: 0,
        };
    }
    let dim = vectors[0].len();
    let exact = match mode {
        SignMode::Exact => true,
        SignMode::Auto { .. } => n <= EXACT_SIGN_LIMIT,
        SignMode::MonteCarlo { .. } => false,
    };
    let mut buf = vec![0.0; dim];
    if exact {
        // eps_0 = +1 by the symmetry eps -> -eps
        let patterns = 1u64 << (n - 1);
        let mut acc = 0.0;
        for bits in 0..patterns {
            signed_sum(vectors, &SignAssignment::from_bits(n, bits << 1), &mut buf);
            let v = tree.evaluate(&buf);
            acc += v * v;
        }
        return RademacherEstimate {
            value: (acc / patterns as f64).sqrt(),
            stderr: 0.0,
            exact: true,
            samples: patterns as usize,
        };
    }
    let (samples, seed) = match mode {
        SignMode::MonteCarlo { samples, seed } => (*samples, *seed),
        SignMode::Auto { seed } => (SIGN_SAMPLES, *seed),
        SignMode::Exact => unreachable!(),
    };
    let mut rng = rng_for(seed, &[n as u64]);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        signed_sum(vectors, &SignAssignment::random(n, &mut rng), &mut buf);
        let v = tree.evaluate(&buf);
        s1 += v * v;
        s2 += v * v * v * v;
    }
    let m = samples.max(1) as f64;
    let mean = s1 / m;
    let var = (s2 / m - mean * mean).max(0.0);
    let value = mean.sqrt();
    let stderr = if value > 0.0 {
        (var / m).sqrt() / (2.0 * value)
    } else {
        0.0
    };
    RademacherEstimate {
        value,
        stderr,
        exact: false,
        samples,
    }
}

/// `(E ||sum eps_k e_k||^2)^{1/2}` for equally shaped fields in a mixed norm.
pub fn rademacher_norm(vectors: &[DiscreteField], spec: &MixedNormSpec, mode: &SignMode) -> Result<RademacherEstimate> {
    let Some(first) = vectors.first() else {
        return Ok(rademacher_with(&[], &NormTree::flat(0, 2.0), mode));
    };
    for v in vectors {
        first.check_same(v)?;
    }
    if spec.lattice.dim() != first.lattice_dim() {
        return Err(Error::DimensionMismatch {
            expected: first.lattice_dim(),
            actual: spec.lattice.dim(),
        });
    }
    let tree = NormTree::for_field(first.axes(), spec)?;
    let views: Vec<&[f64]> = vectors.iter().map(|v| v.values()).collect();
    Ok(rademacher_with(&views, &tree, mode))
}

fn lattice_tree(lattice: &LatticeSpec) -> NormTree {
    NormTree::new(
        lattice
            .levels()
            .into_iter()
            .map(|(extent, exponent)| crate::norm_tree::NormLevel {
                extent,
                exponent,
                weight: 1.0,
            })
            .collect(),
    )
}

/// `(E |sum eps_j e_j|_E^2)^{1/2} / |(sum |e_j|^2)^{1/2}|_E`, exact for up to
/// [`EXACT_SIGN_LIMIT`] vectors. A `0/0` quotient is reported as 1.
pub fn khintchine_maurey_ratio(vectors: &[Vec<f64>], lattice: &LatticeSpec) -> Result<f64> {
    lattice.validate()?;
    let d = lattice.dim();
    for v in vectors {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.len(),
            });
        }
    }
    let tree = lattice_tree(lattice);
    let views: Vec<&[f64]> = vectors.iter().map(|v| v.as_slice()).collect();
    let lhs = rademacher_with(&views, &tree, &SignMode::Auto { seed: 0 }).value;
    let sq: Vec<f64> = (0..d)
        .map(|c| vectors.iter().map(|v| v[c] * v[c]).sum::<f64>().sqrt())
        .collect();
    let rhs = tree.evaluate(&sq);
    match (lhs == 0.0, rhs == 0.0) {
        (true, true) => Ok(1.0),
        (false, true) => Err(Error::ZeroDenominator),
        _ => Ok(lhs / rhs),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SquareFlavor {
    /// Multi-parameter differences over every axis of the fields.
    Full,
    /// Differences along one axis only.
    Axis(AxisId),
}

/// `E_{l+1} g - E_l g` along `axis` for `l < L`.
fn level_differences(g: &DiscreteField, axis: AxisId) -> Result<Vec<DiscreteField>> {
    let levels = g.axis(axis)?.levels;
    let mut prev = conditional_expectation(g, 0, axis)?;
    let mut out = Vec::with_capacity(levels as usize);
    for l in 1..=levels {
        let next = conditional_expectation(g, l, axis)?;
        out.push(next.sub(&prev)?);
        prev = next;
    }
    Ok(out)
}

fn add_squares(acc: &mut [f64], g: &DiscreteField, axes: &[AxisId]) -> Result<()> {
    match axes.split_first() {
        None => {
            for (a, v) in acc.iter_mut().zip(g.values()) {
                *a += v * v;
            }
            Ok(())
        }
        Some((&a, rest)) => {
            for d in level_differences(g, a)? {
                add_squares(acc, &d, rest)?;
            }
            Ok(())
        }
    }
}

/// `||(sum_j sum_blocks |Delta f_j|^2)^{1/2}|| / ||(sum_j |f_j|^2)^{1/2}||`, the
/// block sum running over martingale differences of the chosen flavor.
pub fn square_equivalence_ratio(fields: &[DiscreteField], spec: &MixedNormSpec, flavor: SquareFlavor) -> Result<f64> {
    let first = fields.first().ok_or_else(|| Error::Empty("field family".into()))?;
    for f in fields {
        first.check_same(f)?;
    }
    let axes: Vec<AxisId> = match flavor {
        SquareFlavor::Full => first.axes().iter().map(|a| a.id).collect(),
        SquareFlavor::Axis(a) => {
            first.axis(a)?;
            vec![a]
        }
    };
    let mut num = vec![0.0; first.values().len()];
    let mut den = vec![0.0; first.values().len()];
    for f in fields {
        add_squares(&mut num, f, &axes)?;
        add_squares(&mut den, f, &[])?;
    }
    let tree = NormTree::for_field(first.axes(), spec)?;
    let root = |v: Vec<f64>| v.into_iter().map(f64::sqrt).collect::<Vec<_>>();
    let d = tree.evaluate(&root(den));
    if d == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(tree.evaluate(&root(num)) / d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RBoundBudget {
    /// Family sizes tried beyond the single-operator witnesses.
    pub sizes: Vec<usize>,
    /// Random starts per family size.
    pub restarts: usize,
    /// Alternations between selection and input updates.
    pub rounds: usize,
    /// Gradient steps per alternation.
    pub steps: usize,
    pub seed: u64,
    /// Search options for the single-operator norms.
    pub single: SearchOptions,
}

impl Default for RBoundBudget {
    fn default() -> Self {
        RBoundBudget {
            sizes: vec![2, 4, 8],
            restarts: 3,
            rounds: 4,
            steps: 8,
            seed: 0,
            single: SearchOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RBoundReport {
    pub estimate: f64,
    /// Largest family size tried.
    pub n_max: usize,
    /// Family size of the best witness.
    pub best_n: usize,
    /// Largest single-operator norm found.
    pub single_max: f64,
    /// Sign patterns per Rademacher evaluation at `n_max`.
    pub sign_patterns: usize,
    /// Objective evaluations performed by the ascent.
    pub evaluations: usize,
    /// Whether a dual witness reproduced the estimate within 5%.
    pub duality_certified: bool,
    pub dual_value: f64,
}

struct Family<'a> {
    ops: &'a [&'a dyn LinearOp],
    dense: Vec<Option<DenseOperator>>,
}

impl Family<'_> {
    fn apply(&self, k: usize, x: &[f64]) -> Vec<f64> {
        self.ops[k].apply(x)
    }

    fn adjoint(&self, k: usize, y: &[f64]) -> Vec<f64> {
        match &self.dense[k] {
            Some(m) => m.apply_adjoint(y).expect("dense adjoint"),
            None => self.ops[k].apply_adjoint(y).expect("adjoint available"),
        }
    }
}

/// `E[eps_k |S_eps| grad|S_eps|]` for each `k`, with `S_eps = sum eps_k u_k`,
/// together with `E |S_eps|^2`.
fn sign_gradients(u: &[Vec<f64>], tree: &NormTree) -> (f64, Vec<Vec<f64>>) {
    let n = u.len();
    let dim = u[0].len();
    let views: Vec<&[f64]> = u.iter().map(|v| v.as_slice()).collect();
    let patterns = 1u64 << (n - 1);
    let mut grads = vec![vec![0.0; dim]; n];
    let mut buf = vec![0.0; dim];
    let mut acc = 0.0;
    for bits in 0..patterns {
        let s = SignAssignment::from_bits(n, bits << 1);
        signed_sum(&views, &s, &mut buf);
        let (v, g) = tree.value_and_gradient(&buf);
        acc += v * v;
        for (k, gk) in grads.iter_mut().enumerate() {
            let e = s.get(k) * v;
            for (a, b) in gk.iter_mut().zip(&g) {
                *a += e * b;
            }
        }
    }
    let m = patterns as f64;
    grads.iter_mut().flatten().for_each(|x| *x /= m);
    (acc / m, grads)
}

fn mean_square(u: &[Vec<f64>], tree: &NormTree) -> f64 {
    let views: Vec<&[f64]> = u.iter().map(|v| v.as_slice()).collect();
    let r = rademacher_with(&views, tree, &SignMode::Exact);
    r.value * r.value
}

struct Candidate {
    value: f64,
    sel: Vec<usize>,
    inputs: Vec<Vec<f64>>,
}

fn objective(fam: &Family, sel: &[usize], e: &[Vec<f64>], n_in: &NormTree, n_out: &NormTree) -> f64 {
    let den = mean_square(e, n_in);
    if den == 0.0 {
        return 0.0;
    }
    let u: Vec<Vec<f64>> = sel.iter().zip(e).map(|(&k, x)| fam.apply(k, x)).collect();
    (mean_square(&u, n_out) / den).sqrt()
}

/// Alternating ascent for one family size from one random start.
#[allow(clippy::too_many_arguments)]
fn ascend(
    fam: &Family,
    n: usize,
    start: (Vec<usize>, Vec<Vec<f64>>),
    rounds: usize,
    steps: usize,
    n_in: &NormTree,
    n_out: &NormTree,
    evals: &mut usize,
) -> Candidate {
    let (mut sel, mut e) = start;
    let mut best = objective(fam, &sel, &e, n_in, n_out);
    *evals += 1;
    let mut step = 0.5;
    for _ in 0..rounds {
        // selection: best operator per slot with the others fixed
        for i in 0..n {
            for k in 0..fam.ops.len() {
                if k == sel[i] {
                    continue;
                }
                let old = sel[i];
                sel[i] = k;
                let v = objective(fam, &sel, &e, n_in, n_out);
                *evals += 1;
                if v > best {
                    best = v;
                } else {
                    sel[i] = old;
                }
            }
        }
        // inputs: gradient ascent on log(num) - log(den) with backtracking
        for _ in 0..steps {
            let u: Vec<Vec<f64>> = sel.iter().zip(&e).map(|(&k, x)| fam.apply(k, x)).collect();
            let (num2, gu) = sign_gradients(&u, n_out);
            let (den2, ge) = sign_gradients(&e, n_in);
            if num2 == 0.0 || den2 == 0.0 {
                break;
            }
            let grad: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let back = fam.adjoint(sel[i], &gu[i]);
                    back.iter().zip(&ge[i]).map(|(a, b)| a / num2 - b / den2).collect()
                })
                .collect();
            let gnorm = grad.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            let enorm = e.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            if gnorm == 0.0 || enorm == 0.0 {
                break;
            }
            let mut improved = false;
            for _ in 0..12 {
                let t = step * enorm / gnorm;
                let trial: Vec<Vec<f64>> = e
                    .iter()
                    .zip(&grad)
                    .map(|(x, g)| x.iter().zip(g).map(|(a, b)| a + t * b).collect())
                    .collect();
                let v = objective(fam, &sel, &trial, n_in, n_out);
                *evals += 1;
                if v > best {
                    best = v;
                    e = trial;
                    step *= 1.5;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
    }
    Candidate {
        value: best,
        sel,
        inputs: e,
    }
}

/// Dual witness `e*_k = E[eps_k phi_eps]` built from the output gradients,
/// scaled into the unit ball of the dual Rademacher norm; returns the pairing
/// `sum <T_k e_k, e*_k>` divided by the input Rademacher norm.
fn dual_certificate(fam: &Family, c: &Candidate, n_in: &NormTree, n_out: &NormTree) -> f64 {
    let u: Vec<Vec<f64>> = c.sel.iter().zip(&c.inputs).map(|(&k, x)| fam.apply(k, x)).collect();
    let (num2, g) = sign_gradients(&u, n_out);
    if num2 == 0.0 {
        return 0.0;
    }
    let dual = n_out.dual();
    let gv: Vec<&[f64]> = g.iter().map(|v| v.as_slice()).collect();
    let scale = rademacher_with(&gv, &dual, &SignMode::Exact).value;
    if scale == 0.0 {
        return 0.0;
    }
    let pairing: f64 = u.iter().zip(&g).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).sum();
    let den = mean_square(&c.inputs, n_in).sqrt();
    if den == 0.0 {
        return 0.0;
    }
    pairing / scale / den
}

/// Lower-bound estimate of the R-bound of `family` acting on the mixed-norm space `spec`.
pub fn r_bound_estimate(family: &[&dyn LinearOp], spec: &MixedNormSpec, budget: &RBoundBudget) -> Result<RBoundReport> {
    let first = family.first().ok_or_else(|| Error::Empty("operator family".into()))?;
    let (dom, cod) = (first.domain().clone(), first.codomain().clone());
    for op in family {
        if *op.domain() != dom || *op.codomain() != cod {
            return Err(Error::IncompatibleOperator("family members act between different spaces".into()));
        }
    }
    let n_in = NormTree::for_field(&dom.axes, spec)?;
    let n_out = NormTree::for_field(&cod.axes, spec)?;
    let zero = vec![0.0; cod.len()];
    let dense = family
        .iter()
        .map(|op| match op.apply_adjoint(&zero) {
            Some(_) => Ok(None),
            None => assemble(*op).map(Some),
        })
        .collect::<Result<Vec<_>>>()?;
    let fam = Family { ops: family, dense };

    let mut singles = Vec::with_capacity(family.len());
    for (k, op) in family.iter().enumerate() {
        let opts = SearchOptions {
            seed: derive_seed(budget.seed, &[0, k as u64]),
            ..budget.single.clone()
        };
        singles.push(operator_norm(*op, spec, spec, &NormMode::AscentSearch(opts))?);
    }
    let (k_best, single) = singles
        .iter()
        .enumerate()
        .fold((0, &singles[0]), |acc, (k, r)| if r.estimate > acc.1.estimate { (k, r) } else { acc });
    let single_max = single.estimate;
    let mut best = Candidate {
        value: single_max,
        sel: vec![k_best],
        inputs: vec![single.witness.clone()],
    };
    let mut best_n = 1;

    let jobs: Vec<(usize, usize)> = budget
        .sizes
        .iter()
        .filter(|&&n| (2..=EXACT_SIGN_LIMIT).contains(&n))
        .flat_map(|&n| (0..budget.restarts).map(move |r| (n, r)))
        .collect();
    let results: Vec<(usize, Candidate, usize)> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let mut rng = rng_for(budget.seed, &[n as u64, r as u64 + 1]);
            let sel: Vec<usize> = (0..n).map(|_| rng.random_range(0..family.len())).collect();
            let e: Vec<Vec<f64>> = sel
                .iter()
                .map(|&k| {
                    let w = &singles[k].witness;
                    let noise = normals(&mut rng, dom.len());
                    if w.len() == dom.len() && r == 0 {
                        w.iter().zip(&noise).map(|(a, b)| a + 0.1 * b * a.abs().max(1e-3)).collect()
                    } else {
                        noise
                    }
                })
                .collect();
            let mut evals = 0;
            let c = ascend(&fam, n, (sel, e), budget.rounds, budget.steps, &n_in, &n_out, &mut evals);
            (n, c, evals)
        })
        .collect();
    let mut evaluations = 0;
    for (n, c, ev) in results {
        evaluations += ev;
        if c.value > best.value {
            best = c;
            best_n = n;
        }
    }
    let n_max = budget.sizes.iter().copied().filter(|&n| n <= EXACT_SIGN_LIMIT).max().unwrap_or(1).max(1);
    let dual_value = if best.inputs[0].len() == dom.len() {
        dual_certificate(&fam, &best, &n_in, &n_out)
    } else {
        0.0
    };
    Ok(RBoundReport {
        estimate: best.value,
        n_max,
        best_n,
        single_max,
        sign_patterns: 1 << (n_max - 1),
        evaluations,
        duality_certified: dual_value >= 0.95 * best.value,
        dual_value,
    })
}

/// One point `y_V` in every dyadic cube of an axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingSample {
    pub axis: AxisId,
    /// `(V, finest cell of y_V)` for every cube, in level-then-index order.
    pub points: Vec<(DyadicCube, usize)>,
}

impl DecouplingSample {
    pub fn point(&self, axis: &GridAxis, v: &DyadicCube) -> Option<usize> {
        let offset: usize = (0..v.level).map(|l| axis.cubes_per_level(l)).sum();
        self.points.get(offset + v.index).filter(|(q, _)| q == v).map(|(_, c)| *c)
    }
}

pub fn decoupling_sample(axis: &GridAxis, seed: u64) -> DecouplingSample {
    let mut rng = rng_for(seed, &[axis.id.0 as u64]);
    let points = axis
        .cubes_up_to(axis.levels)
        .map(|v| {
            let r = axis.cell_range(&v);
            let c = rng.random_range(r);
            (v, c)
        })
        .collect();
    DecouplingSample {
        axis: axis.id,
        points,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    /// `(original / decoupled)^{1/p}`.
    pub ratio: f64,
    /// `int |sum_V Delta_V^i f|^p`.
    pub original: f64,
    /// `E int_Y int |sum_V eps_V 1_V(x) Delta_V^i f(y_V)|^p`.
    pub decoupled: f64,
    pub stderr: f64,
    pub exact: bool,
    /// Both sides vanish; the ratio is set to 1.
    pub degenerate: bool,
    pub active_cubes: usize,
}

/// Largest per-point enumeration of `(eps_V, y_V)` choices done exactly.
pub const DECOUPLING_EXACT_LIMIT: usize = 1 << 16;

struct ActiveBlock {
    cube: DyadicCube,
    /// Block values on the `branch^{i+1}` sub-cubes, `row_len` values each.
    values: Vec<Vec<f64>>,
}

/// Compares both sides of the decoupling estimate for a one-axis field, summing
/// over subgrid cubes at levels `<= L - 1 - i`. The decoupled side is exact
/// when the per-point enumeration fits [`DECOUPLING_EXACT_LIMIT`], otherwise
/// averaged over `trials` samples of `(eps, y)`.
pub fn decoupling_ratio(f: &DiscreteField, i: u32, j: u32, p: f64, trials: usize, seed: u64) -> Result<DecouplingReport> {
    check_exponent(p)?;
    if f.axes().len() != 1 {
        return Err(Error::AxisMismatch("decoupling acts on one-axis fields".into()));
    }
    let axis = f.axes()[0];
    let subgrid = crate::dyadic::decoupling_subgrid(&axis, i, j)?;
    let d = f.lattice_dim();
    let lattice = f.lattice().clone();
    let mu = axis.cell_measure();
    let branch = axis.branch();
    let parts = branch.pow(i + 1);

    let mut total = vec![0.0; f.values().len()];
    let mut blocks = Vec::new();
    for v in subgrid.into_iter().filter(|v| v.level + i < axis.levels) {
        let r = axis.cell_range(&v);
        let local = block_rows(&f.values()[r.start * d..r.end * d], d, branch, i);
        for (t, x) in total[r.start * d..r.end * d].iter_mut().zip(&local) {
            *t += x;
        }
        let sub = r.len() / parts;
        let values = (0..parts).map(|k| local[k * sub * d..k * sub * d + d].to_vec()).collect();
        blocks.push(ActiveBlock { cube: v, values });
    }
    let original: f64 = total.chunks(d).map(|x| lattice.norm_unchecked(x).powf(p) * mu).sum();

    let chain = |cell: usize| -> Vec<&ActiveBlock> {
        blocks.iter().filter(|b| axis.cell_range(&b.cube).contains(&cell)).collect()
    };
    let per_point = |c: &[&ActiveBlock]| -> usize {
        c.iter().try_fold(1usize, |acc, _| acc.checked_mul(2 * parts)).unwrap_or(usize::MAX)
    };
    let worst = (0..axis.cells()).map(|c| per_point(&chain(c))).max().unwrap_or(1);
    let exact = worst <= DECOUPLING_EXACT_LIMIT;

    let (decoupled, stderr) = if exact {
        let mut acc = 0.0;
        for cell in 0..axis.cells() {
            let c = chain(cell);
            if c.is_empty() {
                continue;
            }
            acc += mu * chain_expectation(&c, parts, d, &lattice, p);
        }
        (acc, 0.0)
    } else {
        let samples: Vec<f64> = (0..trials.max(1))
            .into_par_iter()
            .map(|t| {
                let y = decoupling_sample(&axis, derive_seed(seed, &[t as u64]));
                let mut rng = rng_for(seed, &[t as u64, 1]);
                let eps: Vec<f64> = blocks.iter().map(|_| sign(&mut rng)).collect();
                let mut acc = 0.0;
                let mut buf = vec![0.0; d];
                for cell in 0..axis.cells() {
                    buf.iter_mut().for_each(|x| *x = 0.0);
                    for (b, s) in blocks.iter().zip(&eps) {
                        let r = axis.cell_range(&b.cube);
                        if !r.contains(&cell) {
                            continue;
                        }
                        let yc = y.point(&axis, &b.cube).expect("sample covers every cube");
                        let k = (yc - r.start) / (r.len() / parts);
                        for (o, x) in buf.iter_mut().zip(&b.values[k]) {
                            *o += s * x;
                        }
                    }
                    acc += mu * lattice.norm_unchecked(&buf).powf(p);
                }
                acc
            })
            .collect();
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        (mean, (var / m).sqrt())
    };

    let (ratio, degenerate) = match (original == 0.0, decoupled == 0.0) {
        (true, true) => (1.0, true),
        (false, true) => return Err(Error::ZeroDenominator),
        _ => ((original / decoupled).powf(1.0 / p), false),
    };
    Ok(DecouplingReport {
        ratio,
        original,
        decoupled,
        stderr,
        exact,
        degenerate,
        active_cubes: blocks.len(),
    })
}

/// `E |sum_V eps_V g_V(y_V)|^p` over independent signs and uniform sub-cube choices.
fn chain_expectation(chain: &[&ActiveBlock], parts: usize, d: usize, lattice: &LatticeSpec, p: f64) -> f64 {
    fn rec(k: usize, chain: &[&ActiveBlock], parts: usize, acc: &mut Vec<f64>, lattice: &LatticeSpec, p: f64, first: bool) -> f64 {
        if k == chain.len() {
            return lattice.norm_unchecked(acc).powf(p);
        }
        let signs: &[f64] = if first { &[1.0] } else { &[1.0, -1.0] };
        let mut s = 0.0;
        for &e in signs {
            for part in &chain[k].values {
                for (a, x) in acc.iter_mut().zip(part) {
                    *a += e * x;
                }
                s += rec(k + 1, chain, parts, acc, lattice, p, false);
                for (a, x) in acc.iter_mut().zip(part) {
                    *a -= e * x;
                }
            }
        }
        s / (signs.len() * parts) as f64
    }
    let mut acc = vec![0.0; d];
    rec(0, chain, parts, &mut acc, lattice, p, true)
}
