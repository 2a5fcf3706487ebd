use circdyn::markov::{is_covering_realizable, primitive_by_powers, primitive_by_subdivision};
use circdyn::{Arc, CirclePoint, CoveringMap, MarkovPartition};
use proptest::prelude::*;

fn pts(xs: &[f64]) -> Vec<CirclePoint> {
    xs.iter().map(|&x| CirclePoint::new(x)).collect()
}

fn partitions() -> Vec<MarkovPartition> {
    let power = |d, xs: &[f64]| MarkovPartition::new(CoveringMap::power(d).unwrap(), &pts(xs)).unwrap();
    vec![
        power(2, &[0.0, 0.5]),
        power(2, &[0.0, 1.0 / 3.0, 2.0 / 3.0]),
        power(3, &[0.0, 1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 4.0 / 6.0, 5.0 / 6.0]),
    ]
}

fn word(p: &MarkovPartition, seeds: &[usize]) -> Vec<usize> {
    // Builds an admissible word by choosing among allowed successors.
    let b = p.transition();
    let mut w = vec![seeds[0] % p.points().len()];
    for &s in &seeds[1..] {
        let last = *w.last().unwrap();
        let next: Vec<usize> = (0..p.points().len()).filter(|&j| b[last][j] == 1).collect();
        w.push(next[s % next.len()]);
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn word_arcs_are_nested(which in 0usize..3, seeds in prop::collection::vec(0usize..64, 1..9)) {
        let p = &partitions()[which];
        let w = word(p, &seeds);
        prop_assert!(p.is_admissible(&w));
        let arc = p.arc_of_word(&w).unwrap().unwrap();
        let parent = p.arc_of_word(&w[..w.len() - 1]).unwrap().unwrap();
        prop_assert!(parent.contains_arc(&arc, 1e-12));
        // Children tile the parent.
        let total: f64 = p.children(&w).unwrap().iter().map(|(_, a)| a.length()).sum();
        prop_assert!((total - arc.length()).abs() < 1e-12);
        // The arc's word is recovered from any subarc strictly inside it.
        let inner = Arc::from_start_len(arc.start().rotate(0.25 * arc.length()), 0.5 * arc.length()).unwrap();
        let found = p.word_associated_to_arc(&inner).unwrap();
        prop_assert!(found.admissible);
        prop_assert!(found.letters.len() >= w.len());
        prop_assert_eq!(&found.letters[..w.len()], &w[..]);
    }

    #[test]
    fn pull_back_inverts_the_branch(which in 0usize..3, k in 0usize..6, s in 0.01f64..0.99) {
        let p = &partitions()[which];
        let k = k % p.points().len();
        let x = p.arc(k).start().rotate(s * p.arc(k).length());
        let y = p.map().eval(x);
        prop_assert!(p.pull_back_point(k, y).unwrap().dist(x) < 1e-12);
    }

    #[test]
    fn primitivity_tests_agree(n in 2usize..6, lens in prop::collection::vec(1usize..6, 5), s0 in 0usize..5) {
        // Rows are consecutive cyclic intervals, as for an orientation-preserving covering.
        let lens: Vec<usize> = lens[..n].iter().map(|&l| l.min(n)).collect();
        prop_assume!(lens.iter().sum::<usize>() % n == 0 && lens.iter().sum::<usize>() >= 2 * n);
        let mut start = s0 % n;
        let b: Vec<Vec<u8>> = lens
            .iter()
            .map(|&l| {
                let row = (0..n).map(|j| ((j + n - start) % n < l) as u8).collect();
                start = (start + l) % n;
                row
            })
            .collect();
        prop_assert!(is_covering_realizable(&b));
        let by_powers = primitive_by_powers(&b).is_some();
        let by_subdivision = primitive_by_subdivision(&b, (n + 1) * (n + 1)).is_ok();
        prop_assert_eq!(by_powers, by_subdivision);
    }
}

#[test]
fn refinements_grow_by_the_transition_matrix() {
    for p in partitions() {
        let b = p.transition();
        let mut counts = vec![1u64; p.points().len()];
        for n in 1..=6 {
            let level = p.refine(n).unwrap();
            assert_eq!(level.len() as u64, counts.iter().sum::<u64>());
            assert_eq!(p.refinement_size(n).unwrap(), level.len() as u64);
            counts = (0..p.points().len()).map(|i| (0..p.points().len()).map(|j| b[i][j] as u64 * counts[j]).sum()).collect();
        }
    }
}

#[test]
fn non_invariant_points_are_rejected() {
    let f = CoveringMap::power(2).unwrap();
    assert!(MarkovPartition::new(f, &pts(&[0.0, 0.3])).is_err());
}
