use gridguide::feasibility::check_compression;
use gridguide::geometry::{involute, max_deviation, point_segment_distance, PlanarArcCurve, TimedPath, Vec3};
use gridguide::io;
use gridguide::reparam::{eval_e_ass, eval_e_dev, linearize, optimize_synchronized, GaConfig, ParamVector};
use gridguide::samples::semicircle_wrap;
use nalgebra::{Rotation3, Unit};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn times(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

/// Random smooth space curve sampled on a uniform time grid.
fn wiggly_path() -> impl Strategy<Value = TimedPath> {
    (
        prop::array::uniform3(-2.0..2.0f64),
        prop::array::uniform3(-2.0..2.0f64),
        0.5..4.0f64,
    )
        .prop_map(|(a, b, w)| {
            let t = times(301);
            let v = t
                .iter()
                .map(|&t| {
                    Vec3::new(
                        t + a[0] * (w * t).sin(),
                        a[1] * t * t + b[0] * (w * t).cos(),
                        a[2] * t + b[1] * (2.0 * w * t).sin() + b[2],
                    )
                })
                .collect();
            TimedPath::new(v, t).unwrap()
        })
}

fn genome(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![-1.0..2.0f64, Just(0.0), Just(1.0), Just(0.5)], 1..max_len)
}

fn rigid() -> impl Strategy<Value = (Rotation3<f64>, Vec3)> {
    (vec3(), -3.0..3.0f64, vec3()).prop_filter_map("nonzero axis", |(axis, angle, shift)| {
        Unit::try_new(axis, 1e-3).map(|u| (Rotation3::from_axis_angle(&u, angle), shift))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn point_segment_distance_is_symmetric(p in vec3(), a in vec3(), b in vec3()) {
        prop_assume!(a != b);
        let d = point_segment_distance(&p, &a, &b).unwrap();
        prop_assert_eq!(d, point_segment_distance(&p, &b, &a).unwrap());
        prop_assert!(d >= 0.0);
        prop_assert!(d <= (p - a).norm().min((p - b).norm()) + 1e-12);
    }

    #[test]
    fn points_on_the_segment_have_zero_distance(a in vec3(), b in vec3(), s in 0.0..=1.0f64) {
        prop_assume!((a - b).norm() > 1e-3);
        let p = a + (b - a) * s;
        prop_assert!(point_segment_distance(&p, &a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn straight_paths_have_zero_deviation(a in vec3(), b in vec3(), g in genome(12)) {
        prop_assume!((a - b).norm() > 1e-3);
        let t = times(201);
        let path = TimedPath::new(t.iter().map(|&s| a + (b - a) * (s * s)).collect(), t).unwrap();
        let knots = ParamVector::repaired(&g).unwrap();
        prop_assert!(max_deviation(&path, knots.knots()).unwrap().max < 1e-12);
    }

    #[test]
    fn refining_knots_on_an_arc_never_hurts(
        radius in 0.1..10.0f64,
        span in 0.1..3.1f64,
        coarse in prop::collection::btree_set(1usize..200, 1..6),
        extra in prop::collection::btree_set(1usize..200, 1..6),
    ) {
        let t = times(201);
        let path = TimedPath::new(
            t.iter().map(|&s| Vec3::new(radius * (span * s).cos(), radius * (span * s).sin(), 0.0)).collect(),
            t.clone(),
        ).unwrap();
        let fine: Vec<f64> = coarse.union(&extra).map(|&i| t[i]).collect();
        let coarse: Vec<f64> = coarse.iter().map(|&i| t[i]).collect();
        let d = max_deviation(&path, &coarse).unwrap().max;
        let d_fine = max_deviation(&path, &fine).unwrap().max;
        prop_assert!(d_fine <= d * (1.0 + 1e-12) + 1e-15, "{d_fine} > {d}");
    }

    #[test]
    fn involute_unwinds_without_stretching(radius in 0.2..5.0f64, frac in 0.05..1.0f64) {
        let curve = PlanarArcCurve::from_fn(|u| Vec3::new(radius * u.cos(), radius * u.sin(), 0.0), 0.0, 2.0, 2000).unwrap();
        let s0 = frac * curve.length();
        let path = involute(&curve, s0, 101).unwrap();
        let mut last = f64::INFINITY;
        for (c, &t) in path.vertices().iter().zip(path.times()) {
            let u = s0 * t;
            prop_assert!(((c - curve.point(u)).norm() - (s0 - u)).abs() < 1e-9 * radius.max(1.0));
            let r = c.norm();
            prop_assert!(r < last + 1e-12);
            last = r;
        }
    }

    #[test]
    fn reversed_paths_keep_increasing_times(p in wiggly_path()) {
        let r = p.reversed();
        prop_assert!(r.times().windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(r.times()[0], 0.0);
        prop_assert_eq!(*r.times().last().unwrap(), 1.0);
    }

    #[test]
    fn repaired_knots_are_feasible(g in genome(40)) {
        let k = ParamVector::repaired(&g).unwrap();
        prop_assert_eq!(k.n(), g.len());
        let full = k.full();
        prop_assert!(full.windows(2).all(|w| w[1] - w[0] >= 1e-3 - 1e-12));
        prop_assert!(ParamVector::new(k.knots().to_vec()).is_ok());
    }

    #[test]
    fn single_path_assembly_energy_is_the_deviation_energy(p in wiggly_path(), g in genome(10)) {
        let k = ParamVector::repaired(&g).unwrap();
        let (e_ass, _) = eval_e_ass(std::slice::from_ref(&p), &k).unwrap();
        let (e_dev, _) = eval_e_dev(&p, &k).unwrap();
        prop_assert_eq!(e_ass, e_dev);
    }

    #[test]
    fn path_order_does_not_matter(a in wiggly_path(), b in wiggly_path(), c in wiggly_path(), g in genome(8)) {
        let k = ParamVector::repaired(&g).unwrap();
        let (e, _) = eval_e_ass(&[a.clone(), b.clone(), c.clone()], &k).unwrap();
        let (e_perm, _) = eval_e_ass(&[c, a, b], &k).unwrap();
        prop_assert!((e - e_perm).abs() <= 1e-14 * e.abs());
    }

    #[test]
    fn assembly_energy_scales_quadratically(a in wiggly_path(), b in wiggly_path(), s in 0.01..100.0f64, g in genome(8)) {
        let k = ParamVector::repaired(&g).unwrap();
        let (e, _) = eval_e_ass(&[a.clone(), b.clone()], &k).unwrap();
        let scaled: Vec<TimedPath> = [a, b].iter().map(|p| p.map_positions(|v| v * s)).collect();
        let (e_s, _) = eval_e_ass(&scaled, &k).unwrap();
        prop_assert!((e_s - s * s * e).abs() <= 1e-9 * s * s * e.max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimal_knots_do_not_depend_on_scale(a in wiggly_path(), b in wiggly_path(), exp in -3i32..4, seed in 0u64..100) {
        // powers of two scale the objective exactly
        let s = 2f64.powi(exp);
        let config = GaConfig { population: 20, generations: 30, restarts: 1, seed, ..GaConfig::default() };
        let paths = [a, b];
        let scaled: Vec<TimedPath> = paths.iter().map(|p| p.map_positions(|v| v * s)).collect();
        let base = optimize_synchronized(&paths, 3, &config).unwrap();
        let other = optimize_synchronized(&scaled, 3, &config).unwrap();
        prop_assert_eq!(base.knots, other.knots);
        prop_assert_eq!(other.energy, base.energy * s * s);
    }

    #[test]
    fn optimal_knots_do_not_depend_on_path_order(a in wiggly_path(), b in wiggly_path(), c in wiggly_path()) {
        let config = GaConfig { population: 20, generations: 30, restarts: 1, seed: 5, ..GaConfig::default() };
        let base = optimize_synchronized(&[a.clone(), b.clone(), c.clone()], 2, &config).unwrap();
        let perm = optimize_synchronized(&[b, c, a], 2, &config).unwrap();
        prop_assert_eq!(base.knots, perm.knots);
    }

    #[test]
    fn compression_report_is_rigid_invariant((rot, shift) in rigid(), g in genome(6)) {
        let (grid, trace) = semicircle_wrap(41, 801).unwrap();
        let k = ParamVector::repaired(&g).unwrap();
        let lin = linearize(&trace, &k, None).unwrap();
        let mut moved = lin.clone();
        let f = |v: &Vec3| rot * v + shift;
        moved.positions = lin.positions.iter().map(|p| p.iter().map(f).collect()).collect();
        moved.source.paths = lin.source.paths.iter().map(|p| p.map_positions(f)).collect();
        let a = check_compression(&lin, &grid, 20, 0.02).unwrap();
        let b = check_compression(&moved, &grid, 20, 0.02).unwrap();
        prop_assert!((a.worst_ratio - b.worst_ratio).abs() < 1e-9);
        prop_assert_eq!(a.flagged_segments, b.flagged_segments);
    }

    #[test]
    fn csv_export_reads_back(g in genome(10)) {
        let (_, trace) = semicircle_wrap(21, 401).unwrap();
        let k = ParamVector::repaired(&g).unwrap();
        let lin = linearize(&trace, &k, None).unwrap();
        let table = io::parse_schedule_csv(&io::schedule_csv(&lin), "schedule.csv").unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * a.abs().max(b.abs()) + 1e-300;
        prop_assert_eq!(table.knots.len(), lin.knots.len());
        for (t, k) in table.knots.iter().zip(&lin.knots) {
            prop_assert!(close(*t, *k));
        }
        for ((id, p), (node, q)) in table.nodes.iter().zip(lin.nodes.iter().zip(&lin.positions)) {
            prop_assert_eq!(id, &node.to_string());
            for (a, b) in p.iter().zip(q) {
                prop_assert!((0..3).all(|i| close(a[i], b[i])));
            }
        }
    }
}
