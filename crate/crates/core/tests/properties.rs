//! Property tests for the structural invariants: the weight-function ratio
//! bound, submultiplicativity of the map constants, the observable
//! envelope, Hilbert-metric axioms, cocycle additivity, and the 1D
//! transport distance.

use iterlip::linalg::Mat;
use iterlip::model::{MapDistribution, StatePoint};
use iterlip::models::{
    cocycle, hilbert_distance, make_affine, make_matrix_model, AffineSpec, ObservableKind,
    PositiveMatrixSpec,
};
use iterlip::stats;
use proptest::prelude::*;

fn simplex2() -> impl Strategy<Value = StatePoint> {
    (0.01f64..0.99).prop_map(|y| StatePoint::new(vec![y, 1.0 - y]))
}

fn positive_2x2() -> impl Strategy<Value = Mat> {
    [0.1f64..5.0, 0.1f64..5.0, 0.1f64..5.0, 0.1f64..5.0]
        .prop_map(|e| Mat::new(2, 2, e.to_vec()))
}

fn scalar_affine_pair() -> impl Strategy<Value = (f64, f64)> {
    (-1.5f64..1.5, -2.0f64..2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ratio_bound_p_lambda(
        (a, b) in scalar_affine_pair(),
        x in -20.0f64..20.0,
        lambda in 0.01f64..1.0,
    ) {
        // p_lambda(gx)/p_lambda(x) <= delta_lambda(g) for affine maps
        let spec = AffineSpec::scalar_atoms(&[(a, b)], &[1.0]);
        let model = make_affine(&spec, &ObservableKind::Coordinate { index: 0 }).unwrap();
        let g = match &model.pi {
            MapDistribution::Finite { atoms, .. } => atoms[0].clone(),
            _ => unreachable!(),
        };
        let xp = StatePoint::scalar(x);
        let gx = g.apply(&xp).unwrap();
        let ratio = model.p_lambda(&gx, lambda).unwrap() / model.p_lambda(&xp, lambda).unwrap();
        prop_assert!(ratio <= g.delta_lambda(lambda).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn scalar_constants_submultiplicative(
        (a1, b1) in scalar_affine_pair(),
        (a2, b2) in scalar_affine_pair(),
    ) {
        let spec = AffineSpec::scalar_atoms(&[(a1, b1), (a2, b2)], &[0.5, 0.5]);
        let model = make_affine(&spec, &ObservableKind::Coordinate { index: 0 }).unwrap();
        let atoms = match &model.pi {
            MapDistribution::Finite { atoms, .. } => atoms.clone(),
            _ => unreachable!(),
        };
        let mut rng = iterlip::rng::stream(1);
        let comp = model.compose(&[atoms[0].clone(), atoms[1].clone()], &mut rng).unwrap();
        // c multiplicative exactly for scalars, delta_tilde submultiplicative
        prop_assert!((comp.lip - (a1 * a2).abs()).abs() <= 1e-12);
        prop_assert!(
            comp.delta_tilde() <= atoms[0].delta_tilde() * atoms[1].delta_tilde() * (1.0 + 1e-12)
        );
    }

    #[test]
    fn rs_envelope_spot_check(
        (a, b) in scalar_affine_pair(),
        seed in 0u64..1000,
    ) {
        let spec = AffineSpec::scalar_atoms(&[(a, b)], &[1.0]);
        let model = make_affine(&spec, &ObservableKind::Coordinate { index: 0 }).unwrap();
        let report = iterlip::model::validate_model(&model, 64, seed).unwrap();
        prop_assert!(report.ok, "{report:?}");
    }

    #[test]
    fn hilbert_metric_axioms(x in simplex2(), y in simplex2(), z in simplex2()) {
        let dxy = hilbert_distance(&x, &y).unwrap();
        let dyx = hilbert_distance(&y, &x).unwrap();
        prop_assert!((dxy - dyx).abs() <= 1e-12);
        prop_assert!(dxy >= 0.0);
        if (x.coords[0] - y.coords[0]).abs() > 1e-12 {
            prop_assert!(dxy > 0.0);
        }
        let dxz = hilbert_distance(&x, &z).unwrap();
        let dzy = hilbert_distance(&z, &y).unwrap();
        prop_assert!(dxy <= dxz + dzy + 1e-10);
    }

    #[test]
    fn positive_matrices_weakly_contract(m in positive_2x2(), x in simplex2(), y in simplex2()) {
        let spec = PositiveMatrixSpec::finite(2, vec![m], vec![1.0]);
        let built = make_matrix_model(&spec, Some(0.0)).unwrap();
        let g = match &built.model.pi {
            MapDistribution::Finite { atoms, .. } => atoms[0].clone(),
            _ => unreachable!(),
        };
        let dxy = hilbert_distance(&x, &y).unwrap();
        let dgxy = hilbert_distance(&g.apply(&x).unwrap(), &g.apply(&y).unwrap()).unwrap();
        prop_assert!(dgxy <= dxy * (1.0 + 1e-10));
    }

    #[test]
    fn cocycle_additivity(g1 in positive_2x2(), g2 in positive_2x2(), y in simplex2()) {
        let spec = PositiveMatrixSpec::finite(2, vec![g1.clone(), g2.clone()], vec![0.5, 0.5]);
        let built = make_matrix_model(&spec, Some(0.0)).unwrap();
        let atoms = match &built.model.pi {
            MapDistribution::Finite { atoms, .. } => atoms.clone(),
            _ => unreachable!(),
        };
        let mut rng = iterlip::rng::stream(7);
        // product g1 g2 acts as g2 first
        let comp = built.model.compose(&[atoms[1].clone(), atoms[0].clone()], &mut rng).unwrap();
        let lhs = cocycle(&comp, &y).unwrap();
        let rhs = cocycle(&atoms[0], &atoms[1].apply(&y).unwrap()).unwrap()
            + cocycle(&atoms[1], &y).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn wasserstein_is_a_metric_on_point_sets(
        xs in proptest::collection::vec(-5.0f64..5.0, 1..6),
        ys in proptest::collection::vec(-5.0f64..5.0, 1..6),
        zs in proptest::collection::vec(-5.0f64..5.0, 1..6),
    ) {
        let to_weighted = |v: &[f64]| -> Vec<(f64, f64)> {
            v.iter().map(|&x| (x, 1.0 / v.len() as f64)).collect()
        };
        let a = to_weighted(&xs);
        let b = to_weighted(&ys);
        let c = to_weighted(&zs);
        let dab = stats::wasserstein1_weighted(&a, &b);
        let dba = stats::wasserstein1_weighted(&b, &a);
        prop_assert!((dab - dba).abs() <= 1e-10);
        prop_assert!(dab >= 0.0);
        let dac = stats::wasserstein1_weighted(&a, &c);
        let dcb = stats::wasserstein1_weighted(&c, &b);
        prop_assert!(dab <= dac + dcb + 1e-10);
    }

    #[test]
    fn ks_distance_in_unit_interval(
        xs in proptest::collection::vec(-4.0f64..4.0, 1..64),
    ) {
        let d = stats::ks_distance(&xs, stats::std_normal_cdf);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn chain_partial_sums_match_increments(seed in 0u64..500, n in 2usize..40) {
        let model = iterlip::models::doubling_ifs(ObservableKind::Coordinate { index: 0 });
        let path = iterlip::simulate::run_chain(
            &model,
            &StatePoint::scalar(0.25),
            n,
            seed,
        ).unwrap();
        prop_assert!(iterlip::simulate::verify_increments(&model, &path).unwrap());
        prop_assert_eq!(path.sums.len(), n + 1);
        prop_assert_eq!(path.states.len(), n + 1);
    }
}
