use proptest::prelude::*;

use sna_core::bounding::{phi_n, pinched_lower_bound};
use sna_core::constants::{desk_constants, recipe_constants};
use sna_core::dimension::{cover_cost, cover_cost_converges, occupied_cells, Ladder, MeasureSample, NeighborCounts};
use sna_core::dynamics::{fiber_derivative, fiber_map, SystemParams};
use sna_core::partition::{classify, radius, PartitionIndex, PeakTable};
use sna_core::torus::{rotate, torus_distance, Angle, TorusPoint};

fn angle() -> impl Strategy<Value = Angle> {
    any::<u128>().prop_map(Angle::from_bits)
}

fn point(dim: usize) -> impl Strategy<Value = TorusPoint> {
    proptest::collection::vec(angle(), dim).prop_map(|v| TorusPoint::new(v).unwrap())
}

fn golden() -> SystemParams {
    SystemParams::golden(3.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distance_is_a_metric(p in point(3), q in point(3), r in point(3)) {
        let pq = torus_distance(&p, &q).unwrap();
        let qp = torus_distance(&q, &p).unwrap();
        let pr = torus_distance(&p, &r).unwrap();
        let rq = torus_distance(&r, &q).unwrap();
        prop_assert_eq!(pq, qp);
        prop_assert!(pq <= 0.5);
        prop_assert!(pq <= pr + rq + 1e-15);
        prop_assert_eq!(torus_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn coordinates_stay_in_unit_interval(p in point(2), k in -10_000_000i64..10_000_000) {
        let rho = SystemParams::standard(3.0, 2).unwrap().rho().clone();
        let r = rotate(&p, k, &rho).unwrap();
        for x in r.to_f64s() {
            prop_assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn rotation_is_exactly_reversible(p in point(2), k in any::<i64>()) {
        let rho = SystemParams::standard(3.0, 2).unwrap().rho().clone();
        let there = rotate(&p, k, &rho).unwrap();
        prop_assert_eq!(rotate(&there, k.wrapping_neg(), &rho).unwrap(), p);
    }

    #[test]
    fn rotation_composes(p in point(1), j in -1000i64..1000, k in -1000i64..1000) {
        let rho = golden().rho().clone();
        let a = rotate(&rotate(&p, j, &rho).unwrap(), k, &rho).unwrap();
        prop_assert_eq!(a, rotate(&p, j + k, &rho).unwrap());
    }

    #[test]
    fn fiber_map_monotone_and_bounded(t in point(1), x in 0.0f64..=1.0, y in 0.0f64..=1.0, kappa in 0.5f64..50.0) {
        let p = SystemParams::golden(kappa).unwrap();
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let a = fiber_map(&p, &t, lo).unwrap();
        let b = fiber_map(&p, &t, hi).unwrap();
        prop_assert!(a <= b);
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(fiber_derivative(&p, &t, x).unwrap() >= 0.0);
        prop_assert_eq!(fiber_map(&p, &t, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn pinching_at_theta_star(x in 0.0f64..=1.0, dim in 1usize..4) {
        let p = SystemParams::standard(3.0, dim).unwrap();
        prop_assert_eq!(fiber_map(&p, p.theta_star(), x).unwrap(), 0.0);
    }

    #[test]
    fn bounding_lines_decrease(t in point(1), n in 0u64..300) {
        let p = golden();
        let a = phi_n(&p, &t, n).unwrap();
        let b = phi_n(&p, &t, n + 1).unwrap();
        prop_assert!(b <= a);
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn pinching_orbit_hits_zero(k in 1i64..400, extra in 0u64..50) {
        let p = golden();
        let tau = rotate(p.theta_star(), k, p.rho()).unwrap();
        prop_assert_eq!(phi_n(&p, &tau, k as u64 + extra).unwrap(), 0.0);
        if k > 1 {
            prop_assert!(phi_n(&p, &tau, k as u64 - 1).unwrap() > 0.0);
        }
    }

    #[test]
    fn partition_cells_are_exclusive(t in point(1)) {
        let p = golden();
        let c = desk_constants(&p);
        let horizon = 200;
        let class = classify(&p, &c, &t, horizon).unwrap();
        let j0 = c.j0.unwrap();
        let table = PeakTable::new(&p, &c, horizon);
        let deepest = table.deepest_containing(t.coords(), j0, horizon);
        match class {
            PartitionIndex::Omega0 => prop_assert!(deepest.is_none()),
            PartitionIndex::OmegaJ { j } => {
                prop_assert_eq!(deepest, Some(j + j0 - 1));
            }
            PartitionIndex::OmegaInfinityCandidate { .. } => {}
        }
    }

    #[test]
    fn radii_decrease(j in 1u64..10_000) {
        let c = desk_constants(&golden());
        prop_assert!(radius(&c, j + 1) < radius(&c, j));
    }

    #[test]
    fn lower_bound_holds_off_peak(t in point(1)) {
        let p = golden();
        let c = desk_constants(&p);
        if let Ok(eps) = pinched_lower_bound(&p, &c, &t, 1, 67) {
            prop_assert!(eps > 0.0);
            prop_assert!(phi_n(&p, &t, 670).unwrap() >= eps);
        }
    }

    #[test]
    fn cover_cost_flag_matches_ratio_test(
        log_kappa in 0.3f64..10.0,
        dim in 1usize..100_000,
        c in 0.01f64..0.5,
        d in 1.01f64..3.0,
        s in 0.1f64..200_000.0,
    ) {
        let consts = recipe_constants(10f64.powf(log_kappa), dim, c, d);
        let cc = cover_cost(&consts, s, 40, dim).unwrap();
        prop_assert_eq!(cc.convergent, cover_cost_converges(&consts, s));
        for w in cc.log_partial_sums.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn ladders_are_strictly_decreasing(coarse in 0.01f64..0.5, steps in 1i32..20, ratio in 0.1f64..0.9) {
        let fine = coarse * ratio.powi(steps);
        let l = Ladder::geometric(coarse, fine, ratio).unwrap();
        prop_assert!(l.eps().windows(2).all(|w| w[1] < w[0]));
        prop_assert!(l.len() >= steps as usize);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn neighbor_counts_monotone_in_eps(seed in any::<u64>()) {
        let p = golden();
        let s = MeasureSample::uniform(&p, 4000, sna_core::dimension::Depth::Fixed(20), seed).unwrap();
        let l = Ladder::geometric(0.25, 1.0 / 256.0, 0.5).unwrap();
        let nc = NeighborCounts::at_random_anchors(&s, &l, 20, seed).unwrap();
        for row in &nc.counts {
            prop_assert!(row.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(row[0] < s.len() as u64);
        }
    }

    #[test]
    fn occupied_cells_bounded(seed in any::<u64>(), k in 2i32..10) {
        let p = golden();
        let s = MeasureSample::uniform(&p, 2000, sna_core::dimension::Depth::Fixed(15), seed).unwrap();
        let eps = 2f64.powi(-k);
        let cells = occupied_cells(&s, eps).unwrap();
        let grid = ((1.0 / eps) as u64 + 1).pow(2);
        prop_assert!(cells >= 1 && cells <= (s.len() as u64).min(grid));
    }
}
