use circdyn::geometry::{disk_moebius_from_constraints, moebius_from_triples, orthogonal_disk, Arc, CirclePoint, Extended};
use circdyn::MoebiusTransform;
use num_complex::Complex64;
use proptest::prelude::*;

fn finite(e: Extended) -> Complex64 {
    e.finite().expect("finite image")
}

fn separated(a: f64, b: f64, gap: f64) -> bool {
    CirclePoint::new(a).dist(CirclePoint::new(b)) > gap
}

proptest! {
    #[test]
    fn turns_are_normalised(x in -50.0f64..50.0) {
        let t = CirclePoint::new(x).turns();
        prop_assert!((0.0..1.0).contains(&t));
        let back = CirclePoint::from_complex(CirclePoint::new(x).to_complex());
        prop_assert!(back.dist(CirclePoint::new(x)) < 1e-14);
    }

    #[test]
    fn ccw_offsets_are_complementary(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!(separated(a, b, 1e-9));
        let (p, q) = (CirclePoint::new(a), CirclePoint::new(b));
        prop_assert!((p.ccw_to(q) + q.ccw_to(p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn arc_split_preserves_length(a in 0.0f64..1.0, len in 0.01f64..0.99, s in 0.05f64..0.95) {
        let arc = Arc::from_start_len(CirclePoint::new(a), len).unwrap();
        let (l, r) = arc.split_at(arc.start().rotate(s * len)).unwrap();
        prop_assert!((l.length() + r.length() - len).abs() < 1e-12);
        prop_assert!(arc.contains_arc(&l, 1e-12) && arc.contains_arc(&r, 1e-12));
    }

    #[test]
    fn triples_are_matched(xs in prop::array::uniform6(-3.0f64..3.0)) {
        let from = [Complex64::new(xs[0], 0.1), Complex64::new(xs[1], 1.3), Complex64::new(-0.7, xs[2])];
        let to = [Complex64::new(xs[3], -0.4), Complex64::new(0.2, xs[4]), Complex64::new(xs[5], 2.1)];
        let spread = |t: &[Complex64; 3]| (t[0] - t[1]).norm().min((t[1] - t[2]).norm()).min((t[0] - t[2]).norm());
        prop_assume!(spread(&from) > 0.1 && spread(&to) > 0.1);
        let m = moebius_from_triples(from, to).unwrap();
        for i in 0..3 {
            prop_assert!((finite(m.apply(from[i])) - to[i]).norm() < 1e-8 * (1.0 + to[i].norm()));
        }
        let id = m.inverse().compose(&m);
        let z = Complex64::new(0.3, -0.2);
        prop_assert!((finite(id.apply(z)) - z).norm() < 1e-9);
    }

    #[test]
    fn constrained_disk_maps(p in 0.0f64..1.0, lp in 0.02f64..0.6, big_p in 0.0f64..1.0, lq in 0.02f64..0.9, s in 0.1f64..10.0) {
        let (a, b) = (CirclePoint::new(p), CirclePoint::new(p + lp));
        let (big_a, big_b) = (CirclePoint::new(big_p), CirclePoint::new(big_p + lq));
        let m = disk_moebius_from_constraints(a, b, big_a, big_b, Some(s)).unwrap();
        prop_assert!(m.is_disk_preserving(1e-9));
        prop_assert!(m.apply_circle(a).dist(big_a) < 1e-10);
        prop_assert!(m.apply_circle(b).dist(big_b) < 1e-10);
        prop_assert!((m.derivative_modulus(a.to_complex()) - s).abs() < 1e-8 * s);
        // Orientation: the interior of [a, b] lands inside [A, B].
        let mid = Arc::new(a, b).midpoint();
        prop_assert!(Arc::new(big_a, big_b).contains(m.apply_circle(mid), 1e-12));
    }

    #[test]
    fn orthogonal_disks(a in 0.0f64..1.0, len in 0.01f64..0.98) {
        prop_assume!((len - 0.5).abs() > 1e-3);
        let (p, q) = (CirclePoint::new(a), CirclePoint::new(a + len));
        let d = orthogonal_disk(p, q).unwrap();
        prop_assert!(d.orthogonality_defect().abs() < 1e-8 * (1.0 + d.radius * d.radius));
        for x in [p, q] {
            prop_assert!(((x.to_complex() - d.center).norm() - d.radius).abs() < 1e-8 * (1.0 + d.radius));
        }
    }

    #[test]
    fn disk_automorphisms_preserve_the_circle(re in -0.9f64..0.9, im in -0.4f64..0.4, rot in 0.0f64..1.0, x in 0.0f64..1.0) {
        let alpha = Complex64::new(re, im);
        prop_assume!(alpha.norm() < 0.95);
        let e = Complex64::from_polar(1.0, std::f64::consts::TAU * rot);
        let m = MoebiusTransform::new(e, -e * alpha, -alpha.conj(), Complex64::new(1.0, 0.0)).unwrap();
        prop_assert!(m.is_disk_preserving(1e-10));
        let w = finite(m.apply(CirclePoint::new(x).to_complex()));
        prop_assert!((w.norm() - 1.0).abs() < 1e-12);
        let lifted = m.disk_lift(x);
        prop_assert!(CirclePoint::new(lifted).dist(CirclePoint::from_complex(w)) < 1e-10);
    }
}

#[test]
fn antipodal_points_have_no_orthogonal_disk() {
    assert!(orthogonal_disk(CirclePoint::new(0.1), CirclePoint::new(0.6)).is_err());
}
