mod common;

use common::*;
use dyadshift::dyadic::*;
use dyadshift::paraproduct::Symbol1P;
use dyadshift::rng::{normals, rng_for};
use dyadshift::stopping::*;
use dyadshift::Error;
use proptest::prelude::*;

fn indicator_prefix(ax: GridAxis, n: usize) -> DiscreteField {
    scalar_field(ax, (0..ax.cells()).map(|c| if c < n { 1.0 } else { 0.0 }).collect())
}

fn bmo_one(ax: GridAxis, seed: u64) -> DiscreteField {
    Symbol1P::random(ax, 1.0, &mut rng_for(seed, &[])).unwrap().field()
}

fn positive(ax: GridAxis, seed: u64) -> DiscreteField {
    // heavy-tailed so that principal cubes appear
    let v = normals(&mut rng_for(seed, &[5]), ax.cells());
    scalar_field(ax, v.iter().map(|x| (2.0 * x).exp()).collect())
}

#[test]
fn stopping_b_examples() {
    let ax = interval(0, 3);
    let root = ax.root();
    let h = haar_function(&ax, &HaarIndex::cancellative(root)).unwrap();
    let fam = stopping_cubes_b(&h, &root).unwrap();
    assert_eq!(fam.generations, vec![vec![root]]);
    assert!(fam.warnings.is_empty());
    assert_eq!(stopping_cubes_b(&h.zeros_like(), &root).unwrap().generations.len(), 1);

    let big = h.scale(5.0);
    let fam = stopping_cubes_b(&big, &root).unwrap();
    assert_eq!(fam.generations[1], vec![ax.cube(1, 0).unwrap(), ax.cube(1, 1).unwrap()]);
    assert!(!fam.warnings.is_empty());
}

#[test]
fn principal_cube_examples() {
    let ax = interval(0, 3);
    let root = ax.root();
    let one = scalar_field(ax, vec![1.0; 8]);
    assert_eq!(principal_cubes(&one, &root).unwrap().generations.len(), 1);
    let fam = principal_cubes(&indicator_prefix(ax, 1), &root).unwrap();
    assert_eq!(fam.generations, vec![vec![root], vec![ax.cube(3, 0).unwrap()]]);
    assert_eq!(principal_cubes(&indicator_prefix(ax, 2), &root).unwrap().generations.len(), 1);
    // a custom threshold selects more
    assert!(principal_cubes_with(&indicator_prefix(ax, 2), &root, 2.0).unwrap().generations.len() > 1);
}

#[test]
fn combined_examples() {
    let ax = interval(0, 5);
    let root = ax.root();
    let f = positive(ax, 1);
    let zero = f.zeros_like();
    assert_eq!(combined_stopping(&zero, &f, &root).unwrap().generations, principal_cubes(&f, &root).unwrap().generations);
    let b = bmo_one(ax, 2).scale(6.0);
    let c = scalar_field(ax, vec![2.0; ax.cells()]);
    assert_eq!(combined_stopping(&b, &c, &root).unwrap().generations, stopping_cubes_b(&b, &root).unwrap().generations);

    for s in 0..20 {
        let b = bmo_one(ax, 10 + s).scale(5.0);
        let f = positive(ax, 20 + s);
        let comb = combined_stopping(&b, &f, &root).unwrap();
        comb.validate().unwrap();
        for single in [stopping_cubes_b(&b, &root).unwrap(), principal_cubes(&f, &root).unwrap()] {
            for (g, q) in single.members() {
                let covered = comb.members().any(|(h, m)| h <= g && ax.contains(m, q));
                assert!(covered, "{q:?} in generation {g}");
            }
        }
        let normalized = combined_stopping(&bmo_one(ax, 10 + s), &f, &root).unwrap();
        let cert = verify_sparse(&normalized);
        assert!(cert.sparse && cert.min_ratio >= 0.5, "{}", cert.min_ratio);
    }
}

#[test]
fn sparse_certificates() {
    let ax = interval(0, 4);
    let trivial = StoppingFamily::trivial(ax, ax.root());
    let cert = verify_sparse(&trivial);
    assert!(cert.sparse && cert.min_ratio == 1.0);
    assert_eq!(cert.witnesses, vec![(ax.root(), (0..16).collect())]);
}

#[test]
fn block_sup_examples() {
    let ax = interval(0, 3);
    let root = ax.root();
    let h = haar_function(&ax, &HaarIndex::cancellative(root)).unwrap();
    let fam = StoppingFamily::trivial(ax, root);
    assert!((block_sup(&h, &fam, &root).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(block_sup(&scalar_field(ax, vec![7.0; 8]), &fam, &root).unwrap(), 0.0);
    assert!(matches!(block_sup(&h, &fam, &ax.cube(1, 0).unwrap()), Err(Error::NotInFamily)));
}

#[test]
fn block_sums_telescope() {
    let ax = interval(0, 6);
    let root = ax.root();
    for s in 0..30 {
        let b = bmo_one(ax, s).scale(3.0);
        let fam = stopping_cubes_b(&b, &root).unwrap();
        for (_, j) in fam.members() {
            let sum = block_sum(&b, &fam, j).unwrap();
            let avg_j = interval_avg(6, j.level, j.index, b.values());
            let kids = fam.children_of(j);
            for x in ax.cell_range(j) {
                let want = match kids.iter().find(|k| ax.cell_range(k).contains(&x)) {
                    Some(k) => interval_avg(6, k.level, k.index, b.values()) - avg_j,
                    None => b.values()[x] - avg_j,
                };
                assert!((sum[x] - want).abs() < 1e-12);
            }
            assert!((0..ax.cells()).filter(|x| !ax.cell_range(j).contains(x)).all(|x| sum[x] == 0.0));
        }
    }
}

#[test]
fn block_sup_sweep_respects_the_certificate() {
    let ax = interval(0, 5);
    let root = ax.root();
    let bound = 4.0 + 2.0;
    for s in 0..500 {
        let b = bmo_one(ax, 1000 + s);
        let fam = stopping_cubes_b(&b, &root).unwrap();
        for (_, j) in fam.members() {
            assert!(block_sup(&b, &fam, j).unwrap() <= bound + 1e-12);
        }
    }
}

#[test]
fn carleson_examples() {
    let ax = interval(0, 5);
    let root = ax.root();
    let one = scalar_field(ax, vec![1.0; 32]);
    for p in [1.5, 2.0, 3.0] {
        let q = carleson_embedding_ratio(std::slice::from_ref(&one), &[StoppingFamily::trivial(ax, root)], p).unwrap();
        assert!((q - 1.0).abs() < 1e-12);
    }
    assert_eq!(carleson_embedding_ratio(&[one.zeros_like()], &[StoppingFamily::trivial(ax, root)], 2.0).unwrap(), 0.0);
    assert!(carleson_embedding_ratio(std::slice::from_ref(&one), &[], 2.0).is_err());

    let mut worst: f64 = 0.0;
    for s in 0..30 {
        let fs: Vec<DiscreteField> = (0..3).map(|j| positive(ax, 100 * s + j)).collect();
        let fams: Vec<StoppingFamily> = fs.iter().map(|f| principal_cubes(f, &root).unwrap()).collect();
        for p in [1.5, 2.0, 3.0] {
            worst = worst.max(carleson_embedding_ratio(&fs, &fams, p).unwrap());
        }
    }
    assert!(worst.is_finite() && worst < 8.0, "{worst}");
}

#[test]
fn families_roundtrip_through_json() {
    let ax = interval(0, 5);
    let fam = principal_cubes(&positive(ax, 3), &ax.root()).unwrap();
    assert_eq!(StoppingFamily::from_json(&fam.to_json().unwrap()).unwrap(), fam);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn single_constructors_pack(seed in 0u64..100_000, scale in 0.0f64..1.0, sub in 0usize..4) {
        let ax = interval(0, 6);
        let root = ax.cube(sub.min(2) as u32, 0).unwrap();
        let b = bmo_one(ax, seed).scale(scale);
        let f = positive(ax, seed);
        for fam in [stopping_cubes_b(&b, &root).unwrap(), principal_cubes(&f, &root).unwrap()] {
            fam.validate().unwrap();
            prop_assert!(fam.packing_ratio() <= 0.25 + 1e-15);
            let cert = verify_sparse(&fam);
            prop_assert!(cert.sparse && cert.min_ratio >= 0.75);
            for (_, q) in fam.members() {
                prop_assert!(ax.contains(&root, q));
            }
        }
    }

    #[test]
    fn stopping_parent_is_monotone(seed in 0u64..100_000) {
        let ax = interval(0, 5);
        let fam = principal_cubes(&positive(ax, seed), &ax.root()).unwrap();
        for q in ax.cubes_up_to(5) {
            let p = fam.parent(&q).unwrap();
            prop_assert!(ax.contains(&p, &q));
            if let Some(up) = ax.parent(&q) {
                let pu = fam.parent(&up).unwrap();
                prop_assert!(ax.contains(&pu, &p));
            }
        }
    }
}
