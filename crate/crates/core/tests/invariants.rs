//! Property-based invariants over randomized inputs.

use proptest::prelude::*;

use d2md_core::matching::{
    is_stable, match_many_to_many_profile, match_many_to_one_profile, PreferenceLists,
};
use d2md_core::power::sca_params;
use d2md_core::scenario::{cluster_dl, cluster_knn, generate_ppp, Point};

fn perm(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut rng);
    v
}

fn arb_prefs() -> impl Strategy<Value = (PreferenceLists, usize, usize)> {
    (1usize..=8, 1usize..=8, 1usize..=3, 1usize..=3, any::<u64>()).prop_map(
        |(k, m, r, s, seed)| {
            let d2md_pl = (0..k).map(|i| perm(m, seed.wrapping_add(i as u64))).collect();
            let cue_pl = (0..m)
                .map(|i| perm(k, seed.wrapping_add(1000 + i as u64)))
                .collect();
            (PreferenceLists { d2md_pl, cue_pl }, r, s)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matcher_outputs_respect_capacities_and_stability((prefs, r, s) in arb_prefs()) {
        let one = match_many_to_one_profile(&prefs, r);
        prop_assert!(one.assignment.capacity_ok(1, r));
        prop_assert!(is_stable(&one.assignment, &prefs, r, 1));

        let many = match_many_to_many_profile(&prefs, s, r);
        prop_assert!(many.assignment.capacity_ok(s, r));
        prop_assert!(is_stable(&many.assignment, &prefs, r, s));
    }

    #[test]
    fn minorant_never_exceeds_true_rate(anchor in 1e-7f64..1e7, gamma in 1e-7f64..1e7) {
        let (a, b) = sca_params(anchor).unwrap();
        prop_assert!(a * gamma.log2() + b <= (1.0 + gamma).log2() + 1e-9);
    }

    #[test]
    fn ppp_points_stay_inside_the_disc(seed in any::<u64>(), radius in 10f64..1000.0) {
        let density = 60.0 / (std::f64::consts::PI * radius * radius);
        let points: Vec<Point<f64>> = generate_ppp(density, radius, seed);
        for p in &points {
            prop_assert!(p.norm() <= radius * (1.0 + 1e-12));
        }
    }

    #[test]
    fn clustering_groups_are_well_formed(seed in any::<u64>()) {
        let density = 220.0 / (std::f64::consts::PI * 500.0 * 500.0);
        let points: Vec<Point<f64>> = generate_ppp(density, 500.0, seed);
        if let Ok(groups) = cluster_knn(&points, 4, 3, seed) {
            prop_assert_eq!(groups.len(), 4);
            for g in &groups {
                prop_assert_eq!(g.receivers.len(), 2);
            }
        }
        if let Ok(groups) = cluster_dl(&points, 4, 0.125, 500.0, seed) {
            prop_assert_eq!(groups.len(), 4);
            for g in &groups {
                prop_assert!(!g.receivers.is_empty());
                for r in &g.receivers {
                    prop_assert!(g.head.distance(r) <= 0.125 * 500.0 + 1e-9);
                }
            }
        }
    }
}

/// The generic scalar core runs in single precision as well; results agree
/// with the double-precision path to float accuracy.
#[test]
fn single_precision_instantiation_matches_f64() {
    use d2md_core::model::{self, Assignment, PowerAllocation};
    use d2md_core::scenario::{compute_gains, Group, Scenario};

    fn scenario<T: d2md_core::num::Real>() -> Scenario<T> {
        let c = |x: f64| d2md_core::num::real::<T>(x);
        Scenario {
            cell_radius: c(500.0),
            groups: vec![Group {
                head: Point::new(c(30.0), c(0.0)),
                receivers: vec![Point::new(c(42.0), c(0.0)), Point::new(c(30.0), c(14.0))],
            }],
            cue_positions: vec![Point::new(c(-120.0), c(75.0))],
            noise_power: c(1e-9),
            circuit_power_cue: vec![c(0.01)],
            circuit_power_group: vec![c(0.01)],
            max_power_cue: vec![c(0.01)],
            max_power_group: vec![c(0.01)],
            min_rate_cue: vec![c(0.1)],
            min_rate_group: vec![c(0.1)],
            min_rate_per_channel: vec![vec![c(0.0)]],
            split_factor: 1,
            reuse_factor: 1,
            weight_cue: vec![c(1.0)],
            weight_group: vec![c(1.0)],
        }
    }

    let s64 = scenario::<f64>();
    let s32 = scenario::<f32>();
    let g64 = compute_gains(&s64, 2.5, 5);
    let g32 = compute_gains(&s32, 2.5, 5);
    let mut a = Assignment::empty(1, 1);
    a.set(0, 0, true);
    let mut p64 = PowerAllocation::<f64>::zeros(1, 1);
    p64.cue[0] = 0.005;
    p64.group[0][0] = 0.005;
    let mut p32 = PowerAllocation::<f32>::zeros(1, 1);
    p32.cue[0] = 0.005;
    p32.group[0][0] = 0.005;

    let m64 = model::metrics(&a, &p64, &g64, &s64);
    let m32 = model::metrics(&a, &p32, &g32, &s32);
    let rel = (m64.gee - m32.gee as f64).abs() / m64.gee.abs().max(1.0);
    assert!(rel < 1e-3, "f32 GEE {} vs f64 GEE {}", m32.gee, m64.gee);
}
