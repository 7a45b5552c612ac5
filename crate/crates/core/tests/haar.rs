mod common;

use common::*;
use dyadshift::dyadic::*;
use dyadshift::lattice::LatticeSpec;
use proptest::prelude::*;

fn cube(axis: &GridAxis, level: u32, index: usize) -> DyadicCube {
    axis.cube(level, index).unwrap()
}

#[test]
fn haar_examples() {
    let ax = interval(0, 3);
    let h = haar_function(&ax, &HaarIndex::new(ax.root(), 1)).unwrap();
    assert_eq!(h.values(), &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
    let h0 = haar_function(&ax, &HaarIndex::new(cube(&ax, 1, 0), 0)).unwrap();
    let s = 2f64.sqrt();
    assert_eq!(h0.values(), &[s, s, s, s, 0.0, 0.0, 0.0, 0.0]);
    assert!(h.integral()[0].abs() < 1e-15);
}

#[test]
fn haar_matches_coordinate_oracle() {
    let l = 4;
    let ax = interval(0, l);
    for level in 0..l {
        for k in 0..1 << level {
            let h = haar_function(&ax, &HaarIndex::cancellative(cube(&ax, level, k))).unwrap();
            for c in 0..ax.cells() {
                assert!((h.values()[c] - interval_haar(l, level, k, c)).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn haar_errors() {
    let ax = interval(0, 2);
    assert!(ax.cube(3, 0).is_err());
    assert!(haar_function(&ax, &HaarIndex::cancellative(cube(&ax, 2, 1))).is_err());
    assert!(haar_function(&ax, &HaarIndex::new(ax.root(), 2)).is_err());
}

fn all_haar(ax: &GridAxis) -> Vec<HaarIndex> {
    let mut out = Vec::new();
    for q in ax.cubes_up_to(ax.levels - 1) {
        for eta in 1..1u32 << ax.dim {
            out.push(HaarIndex::new(q, eta));
        }
    }
    out
}

#[test]
fn orthonormality() {
    for (dim, levels) in [(1, 5), (2, 3)] {
        let ax = GridAxis::new(AxisId(0), dim, levels).unwrap();
        let hs: Vec<DiscreteField> = all_haar(&ax).iter().map(|h| haar_function(&ax, h).unwrap()).collect();
        for (a, ha) in hs.iter().enumerate() {
            for (b, hb) in hs.iter().enumerate() {
                let ip = ha.inner(hb).unwrap();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-13, "dim {dim}: <{a},{b}> = {ip}");
            }
        }
    }
}

#[test]
fn reconstruction() {
    for (dim, levels, d) in [(1, 5, 3), (2, 2, 2)] {
        let ax = GridAxis::new(AxisId(0), dim, levels).unwrap();
        let lat = flat(d, 2.0);
        let f = random_field(&[ax], &lat, 11);
        let mean = f.integral();
        let mut rec = DiscreteField::from_fn(vec![ax], lat.clone(), |_, out| out.copy_from_slice(&mean)).unwrap();
        for h in all_haar(&ax) {
            let c = haar_pairing(&f, &h, ax.id).unwrap();
            let hf = haar_function(&ax, &h).unwrap();
            rec = rec.add(&hf.tensor_lattice(&c)).unwrap();
        }
        assert!(rec.max_abs_diff(&f) < 1e-12);
    }
}

trait TensorLattice {
    fn tensor_lattice(&self, c: &DiscreteField) -> DiscreteField;
}

impl TensorLattice for DiscreteField {
    /// Scalar one-axis field times a constant lattice vector.
    fn tensor_lattice(&self, c: &DiscreteField) -> DiscreteField {
        self.times_vector(c.values(), c.lattice().clone()).unwrap()
    }
}

#[test]
fn pairing_examples_and_oracle() {
    let a = interval(0, 3);
    let b = interval(1, 2);
    let h = HaarIndex::cancellative(cube(&a, 1, 1));
    let g = random_field(&[b], &flat(2, 2.0), 3);
    let hf = haar_function(&a, &h).unwrap();
    let f = hf.tensor(&g).unwrap();
    assert!(haar_pairing(&f, &h, a.id).unwrap().max_abs_diff(&g) < 1e-14);
    let other = HaarIndex::cancellative(cube(&a, 1, 0));
    assert!(haar_pairing(&f, &other, a.id).unwrap().max_abs() < 1e-15);
    assert!(haar_pairing(&f, &h, AxisId(7)).is_err());

    // brute-force cellwise quadrature along the first axis
    let f = random_field(&[a, b], &flat(2, 2.0), 4);
    let p = haar_pairing(&f, &h, a.id).unwrap();
    for y in 0..b.cells() {
        for k in 0..2 {
            let mut s = 0.0;
            for x in 0..a.cells() {
                s += f.value_at(&[x, y])[k] * interval_haar(3, 1, 1, x) / 8.0;
            }
            assert!((p.value_at(&[y])[k] - s).abs() < 1e-13);
        }
    }
}

#[test]
fn martingale_difference_examples() {
    let ax = interval(0, 2);
    let f = scalar_field(ax, vec![1.0, 1.0, 0.0, 0.0]);
    let d = martingale_difference(&f, &ax.root(), ax.id).unwrap();
    assert_eq!(d.values(), &[0.5, 0.5, -0.5, -0.5]);
    let c = scalar_field(ax, vec![2.0; 4]);
    assert_eq!(martingale_difference(&c, &ax.root(), ax.id).unwrap().max_abs(), 0.0);
    assert!(matches!(
        martingale_difference(&f, &cube(&ax, 2, 0), ax.id),
        Err(dyadshift::Error::FinestCube)
    ));
}

#[test]
fn martingale_difference_is_haar_projection() {
    let ax = GridAxis::new(AxisId(0), 2, 3).unwrap();
    let f = random_field(&[ax], &flat(3, 2.0), 5);
    for q in ax.cubes_up_to(2) {
        let d = martingale_difference(&f, &q, ax.id).unwrap();
        let mut e = f.zeros_like();
        for eta in 1..4 {
            let h = HaarIndex::new(q, eta);
            let c = haar_pairing(&f, &h, ax.id).unwrap();
            e = e.add(&haar_function(&ax, &h).unwrap().tensor_lattice(&c)).unwrap();
        }
        assert!(d.max_abs_diff(&e) < 1e-13);
        // projection identities
        let dd = martingale_difference(&d, &q, ax.id).unwrap();
        assert!(dd.max_abs_diff(&d) < 1e-13);
        for other in ax.cubes_at(q.level).filter(|o| *o != q) {
            assert!(martingale_difference(&d, &other, ax.id).unwrap().max_abs() < 1e-13);
        }
    }
}

#[test]
fn block_examples() {
    let ax = interval(0, 4);
    let f = random_field(&[ax], &LatticeSpec::scalar(), 6);
    let q = cube(&ax, 1, 1);
    let b0 = martingale_block(&f, &q, 0, ax.id).unwrap();
    assert!(b0.max_abs_diff(&martingale_difference(&f, &q, ax.id).unwrap()) < 1e-15);
    // a Haar function whose depth-1 ancestor is not K
    let h = haar_function(&ax, &HaarIndex::cancellative(cube(&ax, 2, 0))).unwrap();
    assert!(martingale_block(&h, &q, 1, ax.id).unwrap().max_abs() < 1e-15);
    assert!(matches!(
        martingale_block(&f, &q, 3, ax.id),
        Err(dyadshift::Error::DepthOverflow { .. })
    ));
}

#[test]
fn block_is_conditional_expectation_difference() {
    let ax = interval(0, 5);
    let b = interval(1, 2);
    let f = random_field(&[ax, b], &flat(2, 2.0), 7);
    for k in ax.cubes_up_to(3) {
        for i in 0..(4 - k.level) {
            let blk = martingale_block(&f, &k, i, ax.id).unwrap();
            let hi = conditional_expectation(&f, k.level + i + 1, ax.id).unwrap();
            let lo = conditional_expectation(&f, k.level + i, ax.id).unwrap();
            let diff = hi.sub(&lo).unwrap();
            let r = ax.cell_range(&k);
            for x in 0..ax.cells() {
                for y in 0..b.cells() {
                    let want = if r.contains(&x) { diff.value_at(&[x, y]).to_vec() } else { vec![0.0; 2] };
                    assert!(max_diff(blk.value_at(&[x, y]), &want) < 1e-13);
                }
            }
            assert!(blk.integral().iter().all(|v| v.abs() < 1e-13));
        }
    }
}

#[test]
fn biparameter_blocks_commute_and_factor() {
    let a = interval(0, 3);
    let b = GridAxis::new(AxisId(1), 2, 2).unwrap();
    let f = random_field(&[a, b], &flat(2, 3.0), 8);
    for k in a.cubes_up_to(1) {
        for v in b.cubes_up_to(0) {
            for i in 0..=(2 - k.level) {
                let x = biparam_block(&f, &k, &v, i, 1).unwrap();
                let y = martingale_block(&martingale_block(&f, &k, i, a.id).unwrap(), &v, 1, b.id).unwrap();
                assert!(x.max_abs_diff(&y) < 1e-13);
            }
        }
    }
    let g = random_field(&[a], &LatticeSpec::scalar(), 9);
    let h = random_field(&[b], &LatticeSpec::scalar(), 10);
    let t = g.tensor(&h).unwrap();
    let (k, v) = (cube(&a, 1, 0), b.root());
    let lhs = biparam_block(&t, &k, &v, 1, 0).unwrap();
    let rhs = martingale_block(&g, &k, 1, a.id)
        .unwrap()
        .tensor(&martingale_block(&h, &v, 0, b.id).unwrap())
        .unwrap();
    assert!(lhs.max_abs_diff(&rhs) < 1e-13);
    // K x V itself is an eigenvector of its own block
    let hk = haar_function(&a, &HaarIndex::cancellative(k)).unwrap();
    let hv = haar_function(&b, &HaarIndex::new(v, 2)).unwrap();
    let kv = hk.tensor(&hv).unwrap();
    assert!(biparam_block(&kv, &k, &v, 0, 0).unwrap().max_abs_diff(&kv) < 1e-13);
}

#[test]
fn decoupling_subgrid_examples() {
    let ax = interval(0, 3);
    let all = decoupling_subgrid(&ax, 0, 0).unwrap();
    assert_eq!(all.len(), 1 + 2 + 4 + 8);
    let levels: std::collections::BTreeSet<u32> = decoupling_subgrid(&ax, 1, 0).unwrap().iter().map(|q| q.level).collect();
    assert_eq!(levels.into_iter().collect::<Vec<_>>(), vec![0, 2]);
    assert!(decoupling_subgrid(&ax, 1, 2).is_err());
    for i in 0..3 {
        let mut count = 0;
        for j in 0..=i {
            count += decoupling_subgrid(&ax, i, j).unwrap().len();
        }
        assert_eq!(count, all.len());
    }
}

#[test]
fn blocks_are_constant_on_smaller_subgrid_cubes() {
    let ax = interval(0, 5);
    let f = random_field(&[ax], &LatticeSpec::scalar(), 12);
    for i in 0..3 {
        for j in 0..=i {
            let grid = decoupling_subgrid(&ax, i, j).unwrap();
            for v in grid.iter().filter(|v| v.level + i < ax.levels) {
                let blk = martingale_block(&f, v, i, ax.id).unwrap();
                for w in grid.iter().filter(|w| w.level > v.level && ax.contains(v, w)) {
                    let vals: Vec<f64> = ax.cell_range(w).map(|c| blk.values()[c]).collect();
                    assert!(vals.iter().all(|x| (x - vals[0]).abs() < 1e-13));
                }
            }
        }
    }
}

#[test]
fn field_serialization_roundtrips() {
    let f = random_field(&[interval(0, 2), GridAxis::new(AxisId(3), 2, 1).unwrap()], &flat(2, 3.0), 13);
    assert_eq!(DiscreteField::from_json(&f.to_json().unwrap()).unwrap(), f);
    assert_eq!(DiscreteField::from_bytes(&f.to_bytes()).unwrap(), f);
    let mut bad = f.to_bytes();
    bad.truncate(bad.len() - 3);
    assert!(DiscreteField::from_bytes(&bad).is_err());
}

proptest! {
    #[test]
    fn morton_cubes_are_contiguous(level in 0u32..4, index in 0usize..64) {
        let ax = GridAxis::new(AxisId(0), 2, 4).unwrap();
        let index = index % ax.cubes_per_level(level);
        let q = ax.cube(level, index).unwrap();
        let coords = ax.coords(&q);
        for c in ax.cell_range(&q) {
            let fine = morton_decode(c, 4, 2);
            for t in 0..2 {
                prop_assert_eq!(fine[t] >> (4 - level), coords[t]);
            }
        }
    }

    #[test]
    fn ancestors_contain(level in 1u32..5, index in 0usize..16, k in 0u32..5) {
        let ax = interval(0, 4);
        let index = index % ax.cubes_per_level(level);
        let q = ax.cube(level, index).unwrap();
        match ax.ancestor(&q, k) {
            Some(a) => {
                prop_assert!(k <= level);
                prop_assert!(ax.contains(&a, &q));
                prop_assert_eq!(a.level, level - k);
            }
            None => prop_assert!(k > level),
        }
    }

    #[test]
    fn blocks_are_supported_and_mean_zero(seed in 0u64..1000, level in 0u32..3, depth in 0u32..2) {
        let ax = interval(0, 4);
        let f = random_field(&[ax], &flat(2, 2.0), seed);
        let k = ax.cube(level, 0).unwrap();
        let blk = martingale_block(&f, &k, depth, ax.id).unwrap();
        let r = ax.cell_range(&k);
        for c in 0..ax.cells() {
            if !r.contains(&c) {
                prop_assert!(blk.value_at(&[c]).iter().all(|v| *v == 0.0));
            }
        }
        prop_assert!(blk.integral().iter().all(|v| v.abs() < 1e-13));
    }
}
