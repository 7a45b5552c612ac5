mod common;

use common::*;
use dyadshift::dyadic::*;
use dyadshift::lattice::{LatticeSpec, MixedNormSpec};
use dyadshift::matrix::Matrix;
use dyadshift::model::*;
use dyadshift::norms::{operator_norm, NormMode};
use dyadshift::operator::{FieldShape, LinearOp};
use dyadshift::rng::rng_for;
use dyadshift::shift::*;
use proptest::prelude::*;

/// `a(x, y)` of a one-parameter kernel, looked up by cell.
fn kernel_at(axis: &GridAxis, k: &AveragingKernel, x: usize, y: usize) -> Matrix {
    for p in &k.pieces {
        if axis.cell_range(&p.x).contains(&x) && axis.cell_range(&p.y).contains(&y) {
            return p.value.clone();
        }
    }
    panic!("kernel does not cover ({x}, {y})");
}

/// `A_K f(x) = 1_K(x) / |K| int_K a(x, y) f(y) dy` by a double sum over cells.
fn brute_average(axis: &GridAxis, k: &AveragingKernel, f: &DiscreteField) -> Vec<f64> {
    let d = f.lattice_dim();
    let r = axis.cell_range(&k.cube);
    let mut out = vec![0.0; f.values().len()];
    for x in r.clone() {
        for y in r.clone() {
            let a = kernel_at(axis, k, x, y);
            for i in 0..d {
                for j in 0..d {
                    out[x * d + i] += a.get(i, j) * f.values()[y * d + j] / r.len() as f64;
                }
            }
        }
    }
    out
}

fn brute_shift_1p(spec: &ShiftSpec1P, axis: &GridAxis, f: &DiscreteField) -> DiscreteField {
    let mut out = f.zeros_like();
    for k in &spec.kernels.kernels {
        let inner = martingale_block(f, &k.cube, spec.i1, axis.id).unwrap();
        let avg = f.with_values(brute_average(axis, k, &inner));
        out = out.add(&martingale_block(&avg, &k.cube, spec.i2, axis.id).unwrap()).unwrap();
    }
    out
}

fn random_spec_1p(axis: &GridAxis, i1: u32, i2: u32, d: usize, values: KernelValues, seed: u64) -> ShiftSpec1P {
    let mut rng = rng_for(seed, &[1]);
    let top = axis.levels - 1 - i1.max(i2);
    let kernels = KernelFamily1P::random(axis, top, i2 + 1, i1 + 1, d, values, &mut rng).unwrap();
    ShiftSpec1P::new(i1, i2, kernels, 1.0)
}

#[test]
fn averaging_examples_and_oracle() {
    let ax = interval(0, 3);
    let lat = flat(2, 2.0);
    let f = random_field(&[ax], &lat, 1);
    let k = ax.cube(1, 1).unwrap();
    let id = AveragingKernel::constant(k, Matrix::identity(2));
    let out = apply_averaging(&id, &f).unwrap();
    let avg = cube_average(&f, &k).unwrap();
    for c in 0..8 {
        let want = if ax.cell_range(&k).contains(&c) { avg.values().to_vec() } else { vec![0.0; 2] };
        assert!(max_diff(out.value_at(&[c]), &want) < 1e-14);
    }
    let z = martingale_difference(&f, &k, ax.id).unwrap();
    assert!(apply_averaging(&id, &z).unwrap().max_abs() < 1e-14);

    let mut rng = rng_for(2, &[]);
    let rk = AveragingKernel::random(&ax, ax.root(), 2, 1, 2, KernelValues::GaussianMatrix, &mut rng).unwrap();
    rk.validate(&ax, 2).unwrap();
    let got = apply_averaging(&rk, &f).unwrap();
    assert!(max_diff(got.values(), &brute_average(&ax, &rk, &f)) < 1e-12);
}

#[test]
fn kernels_must_partition() {
    let ax = interval(0, 2);
    let k = ax.root();
    let half = ax.cube(1, 0).unwrap();
    let bad = AveragingKernel {
        cube: k,
        pieces: vec![KernelPiece1P { x: half, y: k, value: Matrix::identity(1) }],
    };
    assert!(bad.validate(&ax, 1).is_err());
    let good = AveragingKernel::constant(k, Matrix::identity(1));
    assert!(good.validate(&ax, 2).is_err());
}

#[test]
fn identity_kernels_annihilate_cancellative_blocks() {
    let ax = interval(0, 4);
    let kernels = KernelFamily1P::identity(&ax, 2, 3);
    let spec = ShiftSpec1P::new(0, 0, kernels, 1.0);
    let f = random_field(&[ax], &flat(2, 2.0), 3);
    assert!(apply_shift_1p(&spec, &f).unwrap().max_abs() < 1e-13);
}

#[test]
fn single_kernel_maps_one_haar_to_another() {
    let ax = interval(0, 3);
    let k = ax.root();
    let i1 = HaarIndex::cancellative(ax.cube(1, 0).unwrap());
    let i2 = HaarIndex::cancellative(ax.cube(1, 1).unwrap());
    let mut pieces = Vec::new();
    for x in ax.cubes_at(2) {
        for y in ax.cubes_at(2) {
            let (xc, yc) = (ax.cell_range(&x).start, ax.cell_range(&y).start);
            let v = interval_haar(3, 1, 0, yc) * interval_haar(3, 1, 1, xc);
            pieces.push(KernelPiece1P { x, y, value: Matrix::scalar(1, v) });
        }
    }
    let kernels = KernelFamily1P::new(&ax, vec![AveragingKernel { cube: k, pieces }], 1).unwrap();
    let spec = ShiftSpec1P::new(1, 1, kernels, 1.0);
    let out = apply_shift_1p(&spec, &haar_function(&ax, &i1).unwrap()).unwrap();
    assert!(out.max_abs_diff(&haar_function(&ax, &i2).unwrap()) < 1e-14);
}

#[test]
fn shift_1p_matches_brute_force() {
    let ax = interval(0, 4);
    let b = interval(1, 1);
    for (i1, i2) in [(0, 0), (0, 2), (1, 1), (2, 1), (3, 0)] {
        for d in [1, 2] {
            let spec = random_spec_1p(&ax, i1, i2, d, KernelValues::GaussianMatrix, 10 * i1 as u64 + i2 as u64);
            spec.check(&ax, d).unwrap();
            let f = random_field(&[ax], &flat(d, 2.0), 4);
            let got = apply_shift_1p(&spec, &f).unwrap();
            assert!(got.max_abs_diff(&brute_shift_1p(&spec, &ax, &f)) < 1e-12, "({i1},{i2}) d={d}");
            // acting on one axis of a two-axis field works row by row
            let g = random_field(&[b, ax], &flat(d, 2.0), 5);
            let out = apply_shift_1p(&spec, &g).unwrap();
            for y in 0..2 {
                let row = DiscreteField::from_fn(vec![ax], flat(d, 2.0), |c, o| o.copy_from_slice(g.value_at(&[y, c[0]]))).unwrap();
                let want = apply_shift_1p(&spec, &row).unwrap();
                for x in 0..ax.cells() {
                    assert!(max_diff(out.value_at(&[y, x]), want.value_at(&[x])) < 1e-12);
                }
            }
        }
    }
}

#[test]
fn depth_overflow_is_rejected() {
    let ax = interval(0, 3);
    let kernels = KernelFamily1P::identity(&ax, 1, 1);
    let spec = ShiftSpec1P::new(2, 0, kernels, 1.0);
    let f = random_field(&[ax], &LatticeSpec::scalar(), 1);
    assert!(matches!(apply_shift_1p(&spec, &f), Err(dyadshift::Error::DepthOverflow { .. })));
}

#[test]
fn shift_support_and_cancellation() {
    let ax = interval(0, 5);
    let mut rng = rng_for(6, &[]);
    let k = ax.cube(2, 1).unwrap();
    let kern = AveragingKernel::random(&ax, k, 2, 2, 1, KernelValues::GaussianMatrix, &mut rng).unwrap();
    let spec = ShiftSpec1P::new(1, 1, KernelFamily1P::new(&ax, vec![kern], 1).unwrap(), 1.0);
    let f = random_field(&[ax], &LatticeSpec::scalar(), 7);
    let out = apply_shift_1p(&spec, &f).unwrap();
    let r = ax.cell_range(&k);
    assert!((0..ax.cells()).filter(|c| !r.contains(c)).all(|c| out.values()[c] == 0.0));
    assert!(out.integral()[0].abs() < 1e-13);
}

#[test]
fn adjoint_pairing_and_involution() {
    let ax = interval(0, 4);
    let lat = flat(3, 2.0);
    for (i1, i2) in [(0, 1), (2, 0), (1, 1)] {
        let spec = random_spec_1p(&ax, i1, i2, 3, KernelValues::GaussianMatrix, 40 + i1 as u64);
        let adj = adjoint_shift(&spec);
        assert_eq!((adj.i1, adj.i2), (i2, i1));
        assert_eq!(adjoint_shift(&adj), spec);
        let f = random_field(&[ax], &lat, 8);
        let g = random_field(&[ax], &lat, 9);
        let lhs = apply_shift_1p(&spec, &f).unwrap().inner(&g).unwrap();
        let rhs = f.inner(&apply_shift_1p(&adj, &g).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }
    // symmetric kernels with equal depths are self-adjoint specs
    let sym = ShiftSpec1P::new(1, 1, KernelFamily1P::identity(&ax, 2, 2), 1.0);
    assert_eq!(adjoint_shift(&sym), sym);
}

#[test]
fn shift_operator_adjoint_is_transpose() {
    let ax = interval(0, 3);
    let lat = flat(2, 2.0);
    let spec = random_spec_1p(&ax, 1, 0, 2, KernelValues::GaussianMatrix, 11);
    let op = ShiftOperator1P::new(spec, FieldShape::new(vec![ax], lat.clone())).unwrap();
    let f = random_field(&[ax], &lat, 12);
    let g = random_field(&[ax], &lat, 13);
    let lhs = dot(&op.apply(f.values()), g.values());
    let rhs = dot(f.values(), &op.apply_adjoint(g.values()).unwrap());
    assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
}

#[test]
fn scalar_shifts_contract_l2() {
    let ax = interval(0, 5);
    let spec_l2 = MixedNormSpec::uniform(&[ax.id], 2.0, LatticeSpec::scalar()).unwrap();
    for (i1, i2) in [(0, 0), (1, 3), (2, 2)] {
        for seed in 0..3 {
            let spec = random_spec_1p(&ax, i1, i2, 1, KernelValues::ScalarIdentity, seed);
            let op = ShiftOperator1P::new(spec, FieldShape::new(vec![ax], LatticeSpec::scalar())).unwrap();
            let n = operator_norm(&op, &spec_l2, &spec_l2, &NormMode::ExactSvd).unwrap();
            assert!(n.estimate <= 1.0 + 1e-9, "({i1},{i2}): {}", n.estimate);
        }
    }
}

fn kernel_at_2p(axes: [&GridAxis; 2], k: &RectangleKernel, x: [usize; 2], y: [usize; 2]) -> Matrix {
    for p in &k.pieces {
        let inside = (0..2).all(|t| axes[t].cell_range(&p.x[t]).contains(&x[t]) && axes[t].cell_range(&p.y[t]).contains(&y[t]));
        if inside {
            return p.value.clone();
        }
    }
    panic!("kernel does not cover the point");
}

/// `<A_{K,V} u, v>` for scalar fields on two axes by a quadruple sum.
fn kernel_form(axes: [&GridAxis; 2], k: &RectangleKernel, u: &DiscreteField, v: &DiscreteField) -> f64 {
    let (ra, rb) = (axes[0].cell_range(&k.rect[0]), axes[1].cell_range(&k.rect[1]));
    let n = (ra.len() * rb.len()) as f64;
    let mu = axes[0].cell_measure() * axes[1].cell_measure();
    let mut s = 0.0;
    for xa in ra.clone() {
        for xb in rb.clone() {
            let vx = v.value_at(&[xa, xb])[0];
            if vx == 0.0 {
                continue;
            }
            for ya in ra.clone() {
                for yb in rb.clone() {
                    let a = kernel_at_2p(axes, k, [xa, xb], [ya, yb]).get(0, 0);
                    s += vx * a * u.value_at(&[ya, yb])[0] / n * mu;
                }
            }
        }
    }
    s
}

#[test]
fn shift_2p_matches_haar_expansion() {
    let a = interval(0, 3);
    let b = interval(1, 3);
    let axes = [&a, &b];
    for (i1, i2, j1, j2) in [(0, 0, 0, 0), (1, 0, 0, 2), (0, 1, 1, 1)] {
        let mut rng = rng_for(20 + i1 as u64, &[j2 as u64]);
        let top = [a.levels - 1 - i1.max(i2), b.levels - 1 - j1.max(j2)];
        let kernels = KernelFamily2P::random(axes, top, [i2 + 1, j2 + 1], [i1 + 1, j1 + 1], 1, KernelValues::GaussianMatrix, &mut rng).unwrap();
        let spec = ShiftSpec2P { i1, i2, j1, j2, kernels, claimed_ca: 1.0 };
        let f = random_field(&[a, b], &LatticeSpec::scalar(), 14);
        let g = random_field(&[a, b], &LatticeSpec::scalar(), 15);
        let lhs = apply_shift_2p(&spec, &f).unwrap().inner(&g).unwrap();
        let mut rhs = 0.0;
        for k in &spec.kernels.kernels {
            for ia in a.descendants(&k.rect[0], i1) {
                for ja in b.descendants(&k.rect[1], j1) {
                    let hin = haar_function(&a, &HaarIndex::cancellative(ia)).unwrap().tensor(&haar_function(&b, &HaarIndex::cancellative(ja)).unwrap()).unwrap();
                    let c1 = f.inner(&hin).unwrap();
                    for ib in a.descendants(&k.rect[0], i2) {
                        for jb in b.descendants(&k.rect[1], j2) {
                            let hout = haar_function(&a, &HaarIndex::cancellative(ib)).unwrap().tensor(&haar_function(&b, &HaarIndex::cancellative(jb)).unwrap()).unwrap();
                            rhs += c1 * kernel_form(axes, k, &hin, &hout) * g.inner(&hout).unwrap();
                        }
                    }
                }
            }
        }
        assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn shift_2p_identity_kernels_vanish() {
    let a = interval(0, 3);
    let b = interval(1, 2);
    let kernels = KernelFamily2P::identity([&a, &b], 2, [2, 1]);
    let spec = ShiftSpec2P { i1: 0, i2: 0, j1: 0, j2: 0, kernels, claimed_ca: 1.0 };
    let f = random_field(&[a, b], &flat(2, 2.0), 16);
    assert!(apply_shift_2p(&spec, &f).unwrap().max_abs() < 1e-13);
    assert!(nest_biparameter(&spec, &f).unwrap().max_abs() < 1e-13);
}

#[test]
fn tensor_kernels_give_tensor_outputs() {
    let a = interval(0, 3);
    let b = interval(1, 3);
    let (i1, i2, j1, j2) = (1, 0, 0, 1);
    let sa = random_spec_1p(&a, i1, i2, 2, KernelValues::GaussianMatrix, 17);
    let sb = random_spec_1p(&b, j1, j2, 1, KernelValues::GaussianMatrix, 18);
    let mut kernels = Vec::new();
    for ka in &sa.kernels.kernels {
        for kb in &sb.kernels.kernels {
            kernels.push(RectangleKernel::tensor(ka, kb).unwrap());
        }
    }
    let spec = ShiftSpec2P { i1, i2, j1, j2, kernels: KernelFamily2P { axes: [a.id, b.id], kernels }, claimed_ca: 1.0 };
    spec.check([&a, &b], 2).unwrap();
    let g = random_field(&[a], &flat(2, 2.0), 19);
    let h = random_field(&[b], &LatticeSpec::scalar(), 20);
    // g (x) h with the lattice value carried by g
    let t = DiscreteField::from_fn(vec![a, b], flat(2, 2.0), |c, o| {
        let s = h.values()[c[1]];
        for (k, v) in o.iter_mut().enumerate() {
            *v = g.value_at(&[c[0]])[k] * s;
        }
    })
    .unwrap();
    let ga = apply_shift_1p(&sa, &g).unwrap();
    let hb = apply_shift_1p(&sb, &h).unwrap();
    let want = DiscreteField::from_fn(vec![a, b], flat(2, 2.0), |c, o| {
        let s = hb.values()[c[1]];
        for (k, v) in o.iter_mut().enumerate() {
            *v = ga.value_at(&[c[0]])[k] * s;
        }
    })
    .unwrap();
    assert!(apply_shift_2p(&spec, &t).unwrap().max_abs_diff(&want) < 1e-12);
    assert!(nest_biparameter(&spec, &t).unwrap().max_abs_diff(&want) < 1e-12);
}

#[test]
fn nested_path_matches_on_a_sample() {
    let a = interval(0, 3);
    let b = interval(1, 3);
    for (n, (i1, i2, j1, j2)) in [(0, 0, 0, 0), (2, 1, 0, 2), (1, 2, 2, 1), (2, 2, 1, 0)].into_iter().enumerate() {
        let mut rng = rng_for(30 + n as u64, &[]);
        let top = [a.levels - 1 - i1.max(i2), b.levels - 1 - j1.max(j2)];
        let kernels = KernelFamily2P::random([&a, &b], top, [i2 + 1, j2 + 1], [i1 + 1, j1 + 1], 2, KernelValues::GaussianMatrix, &mut rng).unwrap();
        let spec = ShiftSpec2P { i1, i2, j1, j2, kernels, claimed_ca: 1.0 };
        let f = random_field(&[a, b], &flat(2, 2.0), 21 + n as u64);
        let x = apply_shift_2p(&spec, &f).unwrap();
        let y = nest_biparameter(&spec, &f).unwrap();
        assert!(x.max_abs_diff(&y) <= 1e-11 * (1.0 + x.max_abs()));
    }
}

#[test]
fn shift_2p_adjoint_pairing() {
    let a = interval(0, 3);
    let b = interval(1, 2);
    let mut rng = rng_for(40, &[]);
    let kernels = KernelFamily2P::random([&a, &b], [1, 0], [2, 1], [1, 2], 2, KernelValues::GaussianMatrix, &mut rng).unwrap();
    let spec = ShiftSpec2P { i1: 0, i2: 1, j1: 1, j2: 0, kernels, claimed_ca: 1.0 };
    let adj = adjoint_shift_2p(&spec);
    let f = random_field(&[a, b], &flat(2, 2.0), 41);
    let g = random_field(&[a, b], &flat(2, 2.0), 42);
    let lhs = apply_shift_2p(&spec, &f).unwrap().inner(&g).unwrap();
    let rhs = f.inner(&apply_shift_2p(&adj, &g).unwrap()).unwrap();
    assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
}

#[test]
fn kernel_fixtures_roundtrip() {
    let ax = interval(0, 3);
    let spec = random_spec_1p(&ax, 1, 0, 2, KernelValues::GaussianMatrix, 50);
    let json = spec.kernels.to_json().unwrap();
    assert_eq!(KernelFamily1P::from_json(&json).unwrap(), spec.kernels);
}

fn single_entry(ax: &GridAxis, i1: u32, i2: u32, input: HaarIndex, output: HaarIndex, op: InnerOperator) -> ModelOperatorSpec {
    ModelOperatorSpec {
        axis: ax.id,
        i1,
        i2,
        entries: vec![ModelEntry { cube: ax.ancestor(&input.cube, i1).unwrap(), input, output, operator: op }],
    }
}

#[test]
fn model_examples() {
    let ax = interval(0, 3);
    let b = interval(1, 2);
    let input = HaarIndex::cancellative(ax.cube(2, 0).unwrap());
    let output = HaarIndex::cancellative(ax.cube(1, 0).unwrap());
    let m = single_entry(&ax, 2, 1, input, output, InnerOperator::Matrix(Matrix::identity(2)));
    let g = random_field(&[b], &flat(2, 2.0), 60);
    let f = haar_function(&ax, &input).unwrap().tensor(&g).unwrap();
    let want = haar_function(&ax, &output).unwrap().tensor(&g).unwrap();
    assert!(apply_model(&m, &f).unwrap().max_abs_diff(&want) < 1e-14);
    // orthogonal input
    let other = haar_function(&ax, &HaarIndex::cancellative(ax.cube(2, 3).unwrap())).unwrap().tensor(&g).unwrap();
    assert!(apply_model(&m, &other).unwrap().max_abs() < 1e-14);

    // kernel magnitudes |K| / sqrt(|I_1| |I_2|) on the sign cells
    let s = model_to_shift(&m, &ax).unwrap();
    let scale = ax.measure(&ax.root()) / (ax.measure(&input.cube) * ax.measure(&output.cube)).sqrt();
    for p in &s.kernels.kernels[0].pieces {
        let v = p.value.get(0, 0).abs();
        let on_support = ax.contains(&input.cube, &p.y) && ax.contains(&output.cube, &p.x);
        assert!((v - if on_support { scale } else { 0.0 }).abs() < 1e-14);
    }
    let empty = ModelOperatorSpec { axis: ax.id, i1: 0, i2: 0, entries: vec![] };
    assert!(model_to_shift(&empty, &ax).unwrap().kernels.kernels.is_empty());
}

#[test]
fn model_to_shift_rejects_non_matrix_entries() {
    let ax = interval(0, 3);
    let input = HaarIndex::cancellative(ax.cube(1, 0).unwrap());
    let sym = dyadshift::paraproduct::Symbol1P::zero(interval(1, 2));
    let m = single_entry(&ax, 1, 1, input, input, InnerOperator::Paraproduct(sym));
    assert!(matches!(model_to_shift(&m, &ax), Err(dyadshift::Error::NonMatrixEntry(_))));
}

fn random_model(ax: &GridAxis, i1: u32, i2: u32, d: usize, seed: u64) -> ModelOperatorSpec {
    let mut rng = rng_for(seed, &[]);
    let top = ax.levels - 1 - i1.max(i2);
    let entries = dyadshift::paraproduct::model_index_set(ax, top, i1, i2)
        .into_iter()
        .map(|(cube, input, output)| ModelEntry {
            cube,
            input,
            output,
            operator: InnerOperator::Matrix(Matrix { dim: d, entries: dyadshift::rng::normals(&mut rng, d * d) }),
        })
        .collect();
    ModelOperatorSpec { axis: ax.id, i1, i2, entries }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn model_and_shift_paths_agree(i1 in 0u32..3, i2 in 0u32..3, d in 1usize..3, seed in 0u64..1000) {
        let ax = interval(0, 4);
        let m = random_model(&ax, i1, i2, d, seed);
        let s = model_to_shift(&m, &ax).unwrap();
        let f = random_field(&[ax, interval(1, 1)], &flat(d, 2.0), seed + 1);
        let x = apply_model(&m, &f).unwrap();
        let y = apply_shift_1p(&s, &f).unwrap();
        prop_assert!(x.max_abs_diff(&y) < 1e-12 * (1.0 + x.max_abs()));
    }

    #[test]
    fn shifts_are_linear(seed in 0u64..1000, c in -3.0f64..3.0) {
        let ax = interval(0, 4);
        let spec = random_spec_1p(&ax, 1, 2, 2, KernelValues::GaussianMatrix, seed);
        let f = random_field(&[ax], &flat(2, 2.0), seed + 1);
        let g = random_field(&[ax], &flat(2, 2.0), seed + 2);
        let lhs = apply_shift_1p(&spec, &f.scale(c).add(&g).unwrap()).unwrap();
        let rhs = apply_shift_1p(&spec, &f).unwrap().scale(c).add(&apply_shift_1p(&spec, &g).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12 * (1.0 + lhs.max_abs()));
    }
}
