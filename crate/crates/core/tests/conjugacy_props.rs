use circdyn::conjugacy::build_conjugacy;
use circdyn::{CirclePoint, CoveringMap, MarkovPartition};
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::OnceLock;

const EVAL_TOL: f64 = 1e-7;

fn pts(xs: &[f64]) -> Vec<CirclePoint> {
    xs.iter().map(|&x| CirclePoint::new(x)).collect()
}

fn doubling() -> MarkovPartition {
    MarkovPartition::new(CoveringMap::power(2).unwrap(), &pts(&[0.0, 0.5])).unwrap()
}

fn b2() -> MarkovPartition {
    let zeros = vec![Complex64::new(0.0, 0.0), Complex64::new(-0.5, 0.0)];
    let map = CoveringMap::blaschke(zeros, Complex64::new(1.0, 0.0)).unwrap();
    MarkovPartition::new(map, &pts(&[0.0, 0.5])).unwrap()
}

fn pair() -> &'static (circdyn::conjugacy::Conjugacy, circdyn::conjugacy::Conjugacy) {
    static PAIR: OnceLock<(circdyn::conjugacy::Conjugacy, circdyn::conjugacy::Conjugacy)> = OnceLock::new();
    PAIR.get_or_init(|| {
        let h = build_conjugacy(&doubling(), &b2(), &[0, 1]).unwrap();
        let inv = h.inverse().unwrap();
        (h, inv)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inverse_undoes_the_conjugacy(x in 0.0f64..1.0) {
        let (h, inv) = pair();
        let (y, dy) = h.eval_h(CirclePoint::new(x), EVAL_TOL).unwrap();
        let (back, db) = inv.eval_h(y, EVAL_TOL).unwrap();
        // h⁻¹ is uniformly continuous; the error in y moves back by a bounded factor.
        prop_assert!(back.dist(CirclePoint::new(x)) < 1e-4 + 10.0 * (dy + db));
    }

    #[test]
    fn conjugacy_preserves_cyclic_order(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let (x, y, z) = (CirclePoint::new(a), CirclePoint::new(b), CirclePoint::new(c));
        prop_assume!(x.dist(y) > 1e-3 && y.dist(z) > 1e-3 && x.dist(z) > 1e-3);
        let (h, _) = pair();
        let img = |p| h.eval_h(p, EVAL_TOL).unwrap().0;
        let ccw = |p: CirclePoint, q: CirclePoint, r: CirclePoint| p.ccw_to(q) < p.ccw_to(r);
        prop_assert_eq!(ccw(x, y, z), ccw(img(x), img(y), img(z)));
    }
}

#[test]
fn partition_points_are_matched_exactly() {
    let (h, _) = pair();
    for n in 1..=8 {
        let check = h.verify_level(n).unwrap();
        assert!(check.order_preserving && check.anchored);
        assert!(check.equivariance_defect < 1e-9, "level {n}: {}", check.equivariance_defect);
    }
}

#[test]
fn equivariance_and_monotonicity_on_a_grid() {
    let (h, _) = pair();
    let eq = h.equivariance_residual(256, EVAL_TOL).unwrap();
    assert!(eq.pass, "{eq:?}");
    let mono = h.monotonicity(256, EVAL_TOL).unwrap();
    assert_eq!(mono.violations, 0);
}

#[test]
fn mismatched_combinatorics_are_rejected() {
    let sixths: Vec<f64> = (0..6).map(|k| k as f64 / 6.0).collect();
    let tripling = MarkovPartition::new(CoveringMap::power(3).unwrap(), &pts(&sixths)).unwrap();
    let thirds = MarkovPartition::new(CoveringMap::power(2).unwrap(), &pts(&[0.0, 1.0 / 3.0, 2.0 / 3.0])).unwrap();
    assert!(build_conjugacy(&doubling(), &tripling, &[0, 1]).is_err());
    assert!(build_conjugacy(&thirds, &doubling(), &[0, 1, 2]).is_err());
}
