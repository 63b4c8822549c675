use std::sync::Arc;

use gff_core::conditioner::{Avoid, AvoidanceSpec, BoundaryCondition, ChainOptions, Conditioned};
use gff_core::gaussian::{sample_field, BoxHarmonic, FieldParams, FieldState};
use gff_core::lattice::{LatticeDomain, MesoGrid, Shape};
use gff_core::observables::{
    box_counters, grid_sign_and_interface, hole_scan, norm_profile, positive_box_fraction,
    spin_correlation, CounterThresholds,
};
use gff_core::rng::Stream;
use proptest::prelude::*;

fn draws(p: FieldParams, dom: &Arc<LatticeDomain>, count: u64, seed: u64) -> Vec<FieldState> {
    (0..count)
        .map(|k| sample_field(p, dom, Stream::new(seed).split(k)))
        .collect()
}

fn centre_only(side: usize, p: FieldParams) -> BoxHarmonic {
    BoxHarmonic::new(2, side, p, &[[0; 3]]).unwrap()
}

#[test]
fn free_field_profile_stays_below_one() {
    let dom = Arc::new(LatticeDomain::full_box(2, 64).unwrap());
    let states = draws(FieldParams::massless(1), &dom, 200, 40);
    let probes = [dom.origin(), dom.index(&[10, -7]).unwrap()];
    for e in norm_profile(&states, &probes, 0.5).unwrap() {
        assert!(e.estimate.mean < 1.0, "{e:?}");
        assert!(e.q10 <= e.q50 && e.q50 <= e.q90);
        assert!(e.outside_window);
    }
}

#[test]
fn half_line_conditioning_raises_the_profile() {
    let p = FieldParams::massless(1);
    let mut means = Vec::new();
    for n in [16usize, 32, 64] {
        let dom = Arc::new(LatticeDomain::build(2, n, Shape::Disc { radius: 0.25 }).unwrap());
        let m = Conditioned::new(
            p,
            dom.clone(),
            &AvoidanceSpec::on_region(Avoid::HalfLine { b: 0.0 }),
            BoundaryCondition::DirichletZero,
            ChainOptions::default(),
        )
        .unwrap();
        let (states, _) = m.run(4_500, 500, 2, Stream::new(41)).unwrap();
        let prof = norm_profile(&states, &[dom.origin()], 0.5).unwrap();
        means.push(prof[0].estimate);
    }
    for w in means.windows(2) {
        assert!(w[1].mean > w[0].mean, "{means:?}");
    }
}

#[test]
fn window_around_zero_is_hit() {
    let dom = Arc::new(LatticeDomain::full_box(2, 64).unwrap());
    let p = FieldParams::massless(1);
    let grid = MesoGrid::build(&dom, 0.5, &[0, 0]).unwrap();
    let bh = centre_only(grid.box_side, p);
    let th = CounterThresholds {
        beta: 0.5,
        eta: 0.5,
        window_center: vec![0.0],
        window_delta: 0.25,
    };
    let hits = draws(p, &dom, 200, 42)
        .iter()
        .filter(|s| box_counters(s, &grid, &bh, &th).unwrap().window >= 1)
        .count();
    assert!(hits >= 190, "{hits}/200");
}

#[test]
fn single_coordinate_positive_fraction_is_one_half() {
    let dom = Arc::new(LatticeDomain::full_box(2, 32).unwrap());
    let p = FieldParams::massless(1);
    let grid = MesoGrid::with_side(&dom, 4, &[0, 0]).unwrap();
    let bh = centre_only(4, p);
    let f = positive_box_fraction(&draws(p, &dom, 2_000, 43), &grid, &bh).unwrap();
    assert!((f.fraction.mean - 0.5).abs() < 4.0 * f.fraction.se, "{f:?}");
    assert!(f.second_moment_ratio >= 1.0);
}

#[test]
fn distant_spins_are_weakly_correlated() {
    let n = 64;
    let dom = Arc::new(LatticeDomain::full_box(2, n).unwrap());
    let states = draws(FieldParams::massless(2), &dom, 400, 44);
    let q = n as i64 / 8;
    let (x, y) = (dom.index(&[-q, 0]).unwrap(), dom.index(&[q, 0]).unwrap());
    let r = spin_correlation(&states, &[(x, y), (x, x)]).unwrap();
    assert!(r[0].estimate.mean.abs() < 0.3, "{:?}", r[0]);
    assert!((r[1].estimate.mean - 1.0).abs() < 1e-12);
    assert_eq!(r[0].skipped, 0);
}

fn nested_pair() -> impl Strategy<Value = (usize, Avoid, Avoid)> {
    prop_oneof![
        (0.05f64..2.0, 0.0f64..2.0).prop_map(|(r, extra)| (
            2,
            Avoid::Ball { radius: r },
            Avoid::Ball { radius: r + extra }
        )),
        (-2.0f64..1.0, 0.01f64..2.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, w, l, r)| {
            (
                1,
                Avoid::Interval { a, b: a + w },
                Avoid::Interval {
                    a: a - l,
                    b: a + w + r,
                },
            )
        }),
        (-2.0f64..2.0, 0.0f64..2.0).prop_map(|(b, extra)| (
            1,
            Avoid::Interval { a: b - 1.0, b },
            Avoid::HalfLine { b: b + extra }
        )),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hole_in_larger_set_implies_hole_in_smaller(
        (spin, small, large) in nested_pair(),
        t0 in -3.0f64..3.0,
        radius in 0.0f64..4.0,
        extra_radius in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let dom = Arc::new(LatticeDomain::full_box(2, 16).unwrap());
        let s = sample_field(FieldParams::massless(spin), &dom, Stream::new(seed));
        let t = vec![t0; spin];
        let o = dom.origin();
        if hole_scan(&s, o, &t, radius, large).unwrap() {
            prop_assert!(hole_scan(&s, o, &t, radius, small).unwrap());
        }
        if hole_scan(&s, o, &t, radius + extra_radius, small).unwrap() {
            prop_assert!(hole_scan(&s, o, &t, radius, small).unwrap());
        }
    }

    #[test]
    fn low_field_boxes_are_low_extensions_or_rough(
        beta in 0.05f64..1.95,
        eta_frac in 0.0f64..=1.0,
        spin in 1usize..3,
        seed in any::<u64>(),
    ) {
        let eta = eta_frac * beta / 2.0;
        let dom = Arc::new(LatticeDomain::build(2, 48, Shape::Square { side: 0.7 }).unwrap());
        let p = FieldParams::massless(spin);
        let s = sample_field(p, &dom, Stream::new(seed));
        let grid = MesoGrid::with_side(&dom, 6, &[1, -2]).unwrap();
        let bh = BoxHarmonic::new(2, 6, p, &[[0; 3], [1, 0, 0], [-1, 2, 0], [3, 3, 0]]).unwrap();
        let strict = CounterThresholds { beta, eta, window_center: vec![0.0; spin], window_delta: 0.1 };
        let half = CounterThresholds { beta: beta / 2.0, ..strict.clone() };
        let a = box_counters(&s, &grid, &bh, &strict).unwrap();
        let b = box_counters(&s, &grid, &bh, &half).unwrap();
        prop_assert!(a.field_low <= b.low + a.high_fluct, "{a:?} {b:?}");
        prop_assert_eq!(a.positive + a.negative + a.mixed + a.zero, a.boxes);
        prop_assert_eq!(a.field_positive + a.field_negative + a.field_mixed + a.field_zero, a.boxes);
    }

    #[test]
    fn interface_edges_separate_opposite_signs(seed in any::<u64>(), side in 2usize..5, x0 in -3i64..3) {
        let dom = Arc::new(LatticeDomain::build(2, 40, Shape::Disc { radius: 0.4 }).unwrap());
        let p = FieldParams::massless(1);
        let s = sample_field(p, &dom, Stream::new(seed));
        let side = 2 * side;
        let grid = MesoGrid::with_side(&dom, side, &[x0, 0]).unwrap();
        prop_assume!(!grid.is_empty());
        let bh = centre_only(side, p);
        let rep = grid_sign_and_interface(&s, &grid, &bh).unwrap();
        let h: Vec<f64> = gff_core::gaussian::center_values(&s, &grid, &bh).into_iter().map(|v| v[0]).collect();
        for &(a, b) in &grid.adjacency {
            prop_assert_eq!(rep.interface.contains(&(a, b)), h[a] * h[b] < 0.0);
        }
        // Around each plaquette of four boxes the interface is crossed an even number of times.
        let at = |c: [i64; 3]| grid.centers.iter().position(|x| *x == c);
        let s64 = side as i64;
        for (i, c) in grid.centers.iter().enumerate() {
            let right = at([c[0] + s64, c[1], 0]);
            let up = at([c[0], c[1] + s64, 0]);
            let diag = at([c[0] + s64, c[1] + s64, 0]);
            if let (Some(r), Some(u), Some(g)) = (right, up, diag) {
                let crosses = [(i, r), (i, u), (r, g), (u, g)]
                    .iter()
                    .filter(|&&(a, b)| rep.interface.contains(&(a.min(b), a.max(b))) || rep.interface.contains(&(a.max(b), a.min(b))))
                    .count();
                prop_assert_eq!(crosses % 2, 0);
            }
        }
        prop_assert!((0.0..=1.0).contains(&rep.minority_fraction));
    }

    #[test]
    fn spin_correlation_is_a_cosine(seed in any::<u64>(), spin in 1usize..4, x in 0usize..100, y in 0usize..100) {
        let dom = Arc::new(LatticeDomain::full_box(2, 10).unwrap());
        let states = draws(FieldParams::massless(spin), &dom, 5, seed);
        let r = spin_correlation(&states, &[(x % dom.len(), y % dom.len())]).unwrap();
        prop_assert!(r[0].estimate.mean.abs() <= 1.0);
    }
}
