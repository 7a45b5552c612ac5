mod common;

use common::*;
use dyadshift::dyadic::{AxisId, DiscreteField};
use dyadshift::lattice::*;
use dyadshift::norm_tree::NormTree;
use proptest::prelude::*;

fn vector(values: Vec<f64>, spec: &LatticeSpec) -> LatticeVector {
    LatticeVector::new(values, spec.clone()).unwrap()
}

#[test]
fn flat_norm_examples() {
    assert!((lattice_norm(&vector(vec![3.0, 4.0], &flat(2, 2.0))) - 5.0).abs() < 1e-15);
    assert!((lattice_norm(&vector(vec![1.0, 1.0], &flat(2, 3.0))) - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
    // the r = 1 endpoint is outside the lattice range but available as a plain sum
    assert_eq!(lp_norm(&[1.0, 1.0], 1.0), 2.0);
    assert!(LatticeSpec::flat(2, 1.0).is_err());
}

#[test]
fn nested_norm_iterates() {
    let spec = LatticeSpec::nested(2, 3.0, flat(2, 2.0)).unwrap();
    let v = vector(vec![3.0, 4.0, 0.0, 1.0], &spec);
    let expected = (125.0f64 + 1.0).powf(1.0 / 3.0);
    assert!((lattice_norm(&v) - expected).abs() < 1e-13);
    assert_eq!(spec.dim(), 4);
}

#[test]
fn dimension_mismatch_is_rejected() {
    assert!(LatticeVector::new(vec![1.0; 3], flat(2, 2.0)).is_err());
    assert!(flat(2, 2.0).norm_of(&[1.0]).is_err());
}

#[test]
fn koethe_dual_conjugates_every_level() {
    assert_eq!(koethe_dual(&flat(3, 2.0)), flat(3, 2.0));
    assert_eq!(koethe_dual(&flat(3, 3.0)), flat(3, 1.5));
    let nested = LatticeSpec::nested(2, 3.0, flat(2, 2.0)).unwrap();
    let expected = LatticeSpec::nested(2, 1.5, flat(2, 2.0)).unwrap();
    assert_eq!(koethe_dual(&nested), expected);
}

#[test]
fn dual_pairing_examples() {
    let s = flat(2, 2.0);
    assert_eq!(dual_pairing(&vector(vec![1.0, 0.0], &s), &vector(vec![0.0, 1.0], &s)).unwrap(), 0.0);
    assert_eq!(dual_pairing(&vector(vec![1.0, 2.0], &s), &vector(vec![3.0, 4.0], &s)).unwrap(), 11.0);
    let t = flat(3, 2.0);
    assert!(dual_pairing(&vector(vec![1.0, 2.0], &s), &vector(vec![3.0, 4.0, 5.0], &t)).is_err());
}

#[test]
fn exponent_range_is_closed_under_conjugation() {
    assert!(check_exponent(MAX_EXPONENT).is_ok());
    assert!(check_exponent(conjugate(MAX_EXPONENT)).is_ok());
    assert!(check_exponent(1.0).is_err());
    assert!(check_exponent(f64::INFINITY).is_err());
}

fn spec_strategy() -> impl Strategy<Value = LatticeSpec> {
    let r = prop::sample::select(vec![1.5, 2.0, 3.0, 4.0]);
    prop_oneof![
        (1usize..=4, r.clone()).prop_map(|(d, r)| flat(d, r)),
        (1usize..=2, r.clone(), 1usize..=2, r).prop_map(|(o, r1, d, r2)| LatticeSpec::nested(o, r1, flat(d, r2)).unwrap()),
    ]
}

fn spec_and_vectors() -> impl Strategy<Value = (LatticeSpec, Vec<f64>, Vec<f64>)> {
    spec_strategy().prop_flat_map(|s| {
        let d = s.dim();
        (
            Just(s),
            prop::collection::vec(-5.0f64..5.0, d),
            prop::collection::vec(-5.0f64..5.0, d),
        )
    })
}

proptest! {
    #[test]
    fn homogeneity((s, v, _) in spec_and_vectors(), c in -4.0f64..4.0) {
        let a = lattice_norm(&vector(v.clone(), &s).scaled(c));
        let b = c.abs() * lattice_norm(&vector(v, &s));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn triangle_inequality((s, v, w) in spec_and_vectors()) {
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        let lhs = lattice_norm(&vector(sum, &s));
        let rhs = lattice_norm(&vector(v, &s)) + lattice_norm(&vector(w, &s));
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn lattice_monotonicity((s, v, w) in spec_and_vectors()) {
        let small: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a.abs().min(b.abs())).collect();
        let big: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a.abs().max(b.abs())).collect();
        prop_assert!(lattice_norm(&vector(small, &s)) <= lattice_norm(&vector(big, &s)) * (1.0 + 1e-12));
    }

    #[test]
    fn holder_inequality((s, v, w) in spec_and_vectors()) {
        let ds = koethe_dual(&s);
        let p = dual_pairing(&vector(v.clone(), &s), &vector(w.clone(), &ds)).unwrap();
        let bound = lattice_norm(&vector(v, &s)) * lattice_norm(&vector(w, &ds));
        prop_assert!(p.abs() <= bound * (1.0 + 1e-12) + 1e-12);
    }

    /// The norm is attained by a unit vector of the dual: the normalized gradient.
    #[test]
    fn norm_equals_dual_maximum((s, v, _) in spec_and_vectors()) {
        let levels: Vec<_> = s.levels().into_iter().map(|(e, r)| dyadshift::norm_tree::NormLevel { extent: e, exponent: r, weight: 1.0 }).collect();
        let tree = NormTree::new(levels);
        let (n, g) = tree.value_and_gradient(&v);
        prop_assume!(n > 1e-6);
        let ds = koethe_dual(&s);
        let gv = vector(g, &ds);
        prop_assert!((lattice_norm(&gv) - 1.0).abs() < 1e-6);
        prop_assert!((dual_pairing(&vector(v.clone(), &s), &gv).unwrap() - lattice_norm(&vector(v, &s))).abs() < 1e-6);
    }
}

#[test]
fn mixed_norm_of_constant_is_lattice_norm() {
    let axes = [interval(0, 2), interval(1, 3)];
    let e = [3.0, 4.0];
    let spec = MixedNormSpec::new(vec![AxisId(0), AxisId(1)], vec![3.0, 1.5], flat(2, 2.0)).unwrap();
    let f = DiscreteField::from_fn(axes.to_vec(), flat(2, 2.0), |_, out| out.copy_from_slice(&e)).unwrap();
    assert!((mixed_norm(&f, &spec).unwrap() - 5.0).abs() < 1e-13);
}

#[test]
fn mixed_norm_of_single_cell() {
    let axes = [interval(0, 1), interval(1, 1)];
    let mut v = vec![0.0; 4];
    v[0] = 1.0;
    let f = DiscreteField::from_values(axes.to_vec(), LatticeSpec::scalar(), v).unwrap();
    let spec = MixedNormSpec::uniform(&ids(&axes), 2.0, LatticeSpec::scalar()).unwrap();
    assert!((mixed_norm(&f, &spec).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn mixed_norm_axis_order() {
    let axes = [interval(0, 2), interval(1, 2)];
    let spec_ab = MixedNormSpec::new(vec![AxisId(0), AxisId(1)], vec![3.0, 1.5], LatticeSpec::scalar()).unwrap();
    let spec_ba = MixedNormSpec::new(vec![AxisId(1), AxisId(0)], vec![1.5, 3.0], LatticeSpec::scalar()).unwrap();
    // a rank-one field factors into per-axis norms in both orders
    let g = scalar_field(axes[0], vec![1.0, -2.0, 0.5, 3.0]);
    let h = scalar_field(axes[1], vec![0.0, 1.0, 4.0, -1.0]);
    let t = g.tensor(&h).unwrap();
    let ng = mixed_norm(&g, &MixedNormSpec::uniform(&[AxisId(0)], 3.0, LatticeSpec::scalar()).unwrap()).unwrap();
    let nh = mixed_norm(&h, &MixedNormSpec::uniform(&[AxisId(1)], 1.5, LatticeSpec::scalar()).unwrap()).unwrap();
    let a = mixed_norm(&t, &spec_ab).unwrap();
    let b = mixed_norm(&t, &spec_ba).unwrap();
    assert!((a - ng * nh).abs() < 1e-12 && (b - ng * nh).abs() < 1e-12);
    // a field concentrated on a diagonal separates the two orders
    let mut v = vec![0.0; 16];
    v[0] = 1.0;
    v[5] = 1.0;
    v[1] = 1.0;
    let d = DiscreteField::from_values(axes.to_vec(), LatticeSpec::scalar(), v).unwrap();
    let a = mixed_norm(&d, &spec_ab).unwrap();
    let b = mixed_norm(&d, &spec_ba).unwrap();
    assert!((a - b).abs() > 1e-3, "{a} vs {b}");
}

#[test]
fn mixed_norm_rejects_wrong_axes() {
    let f = random_field(&[interval(0, 2)], &LatticeSpec::scalar(), 1);
    let spec = MixedNormSpec::uniform(&[AxisId(3)], 2.0, LatticeSpec::scalar()).unwrap();
    assert!(mixed_norm(&f, &spec).is_err());
    assert!(MixedNormSpec::new(vec![AxisId(0), AxisId(0)], vec![2.0, 2.0], LatticeSpec::scalar()).is_err());
}

#[test]
fn spec_serialization_roundtrips() {
    let spec = LatticeSpec::nested(2, 3.0, flat(2, 1.5)).unwrap();
    let s = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<LatticeSpec>(&s).unwrap(), spec);
}
