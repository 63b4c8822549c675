use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use gff_core::conditioner::{
    estimate_log_avoid_probability, run_conditioned, AisOptions, Avoid, AvoidanceSpec,
    BoundaryCondition, ChainOptions, Conditioned, SweepOrder,
};
use gff_core::gaussian::{sample_field, FieldParams, GreenOperator};
use gff_core::lattice::{LatticeDomain, Shape};
use gff_core::quad::integrate;
use gff_core::rng::Stream;
use gff_core::stats::{correlated_estimate, iid_estimate, Estimate};
use proptest::prelude::*;

fn model(
    p: FieldParams,
    dom: &Arc<LatticeDomain>,
    avoid: Avoid,
    options: ChainOptions,
) -> Conditioned {
    Conditioned::new(
        p,
        dom.clone(),
        &AvoidanceSpec::on_region(avoid),
        BoundaryCondition::DirichletZero,
        options,
    )
    .unwrap()
}

#[test]
fn unconstrained_chain_has_the_free_covariance() {
    let dom = Arc::new(LatticeDomain::full_box(2, 8).unwrap());
    let p = FieldParams::massless(1);
    let spec = AvoidanceSpec::nowhere(Avoid::Ball { radius: 1.0 }, dom.len());
    let m = Conditioned::new(
        p,
        dom.clone(),
        &spec,
        BoundaryCondition::DirichletZero,
        ChainOptions::default(),
    )
    .unwrap();
    let green = GreenOperator::new(dom.clone(), p);
    let probe: Vec<usize> = [[0, 0], [1, 0], [2, 3], [-3, 1]]
        .iter()
        .map(|c| dom.index(c).unwrap())
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    m.run_with(100_000, 500, 1, Stream::new(21), |_, s| {
        rows.push(probe.iter().map(|&i| s.at(i)[0]).collect())
    })
    .unwrap();
    for a in 0..probe.len() {
        for b in a..probe.len() {
            let prods: Vec<f64> = rows.iter().map(|r| r[a] * r[b]).collect();
            let (e, _) = correlated_estimate(&prods);
            let g = green.value(probe[a], probe[b]);
            assert!((e.mean - g).abs() < 4.0 * e.se, "({a},{b}) {e:?} vs {g}");
        }
    }
}

#[test]
fn single_site_stationary_mean() {
    let dom = Arc::new(LatticeDomain::with_side(2, 1).unwrap());
    let p = FieldParams::massless(1);
    let r = 0.5;
    let m = model(p, &dom, Avoid::HalfLine { b: r }, ChainOptions::plain());
    let summary = m
        .run_with(200_000, 10, 1, Stream::new(22), |_, _| {})
        .unwrap();
    // Law N(0, 1/(4g)) restricted to [r, inf).
    let var = 1.0 / (4.0 * p.g);
    let dens = |x: f64| (-x * x / (2.0 * var)).exp();
    let z = integrate(dens, r, r + 40.0 * var.sqrt(), 1e-14, 1e-12).value;
    let first = integrate(|x| x * dens(x), r, r + 40.0 * var.sqrt(), 1e-14, 1e-12).value;
    let expected = first / z;
    let e = summary.origin_norm;
    assert!(
        (e.mean - expected).abs() < 4.0 * e.se,
        "{e:?} vs {expected}"
    );
}

/// Index of `v` among five bins with the given inner edges.
fn bin(v: f64, edges: &[f64; 4]) -> usize {
    edges.iter().filter(|&&e| v >= e).count()
}

#[test]
fn palindromic_sweep_is_reversible_on_two_by_two() {
    let dom = Arc::new(LatticeDomain::with_side(2, 2).unwrap());
    let p = FieldParams::massless(1);
    let opts = ChainOptions {
        order: SweepOrder::Palindrome,
        ..ChainOptions::plain()
    };
    let m = model(p, &dom, Avoid::Interval { a: -1.0, b: 1.0 }, opts);
    let mut chain = m.initial_state(Stream::new(23));
    for _ in 0..1000 {
        m.sweep(&mut chain).unwrap();
    }
    // Five bins per site from pilot quintiles.
    let mut pilot: Vec<f64> = Vec::new();
    for _ in 0..20_000 {
        m.sweep(&mut chain).unwrap();
        pilot.push(chain.state.at(0)[0]);
    }
    pilot.sort_by(f64::total_cmp);
    let q = |f: f64| pilot[(f * pilot.len() as f64) as usize];
    let edges = [q(0.2), q(0.4), q(0.6), q(0.8)];
    let cell = |s: &gff_core::gaussian::FieldState| {
        (0..4).fold(0usize, |acc, i| acc * 5 + bin(s.at(i)[0], &edges))
    };
    let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
    for t in 0..2_000_000u64 {
        let from = cell(&chain.state);
        m.sweep(&mut chain).unwrap();
        // Pairs taken every fifth step are close to independent.
        if t % 5 == 0 {
            *counts.entry((from, cell(&chain.state))).or_default() += 1;
        }
    }
    let (mut chi2, mut df) = (0.0, 0usize);
    for (&(a, b), &c_ab) in &counts {
        if a < b {
            let c_ba = counts.get(&(b, a)).copied().unwrap_or(0);
            let total = (c_ab + c_ba) as f64;
            if total >= 20.0 {
                chi2 += (c_ab as f64 - c_ba as f64).powi(2) / total;
                df += 1;
            }
        }
    }
    assert!(df > 100, "{df}");
    let bound = df as f64 + 4.0 * (2.0 * df as f64).sqrt();
    assert!(chi2 < bound, "chi2 {chi2} over {df} cells");
}

#[test]
fn massive_origin_norm_is_flat() {
    let p = FieldParams::massive(1, 1.0);
    let mut means = Vec::new();
    for n in [8usize, 16, 32] {
        let dom = Arc::new(LatticeDomain::full_box(2, n).unwrap());
        let m = model(
            p,
            &dom,
            Avoid::Interval { a: -1.0, b: 1.0 },
            ChainOptions::default(),
        );
        means.push(
            m.run_with(20_000, 200, 1, Stream::new(24), |_, _| {})
                .unwrap()
                .origin_norm
                .mean,
        );
    }
    let (lo, hi) = (
        means.iter().cloned().fold(f64::MAX, f64::min),
        means.iter().cloned().fold(0.0, f64::max),
    );
    assert!(hi / lo < 1.1, "{means:?}");
}

#[test]
fn equal_seeds_give_identical_streams() {
    let dom = Arc::new(LatticeDomain::build(2, 12, Shape::Disc { radius: 0.3 }).unwrap());
    let p = FieldParams::massless(2);
    let spec = AvoidanceSpec::on_region(Avoid::Ball { radius: 0.7 });
    let run = || {
        run_conditioned(
            p,
            dom.clone(),
            &spec,
            BoundaryCondition::DirichletZero,
            60,
            10,
            5,
            99,
        )
        .unwrap()
        .0
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), 10);
    for (x, y) in a.iter().zip(&b) {
        assert!(x
            .values
            .iter()
            .zip(&y.values)
            .all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn avoid_probability_of_three_sites() {
    let base = LatticeDomain::full_box(2, 6).unwrap();
    let sites: Vec<usize> = [[0, 0], [1, 0], [0, 2]]
        .iter()
        .map(|c| base.index(c).unwrap())
        .collect();
    let mut mask = vec![false; base.len()];
    sites.iter().for_each(|&i| mask[i] = true);
    let dom = Arc::new(base.with_region(mask).unwrap());
    let p = FieldParams::massless(1);
    let green = GreenOperator::new(dom.clone(), p);
    let rho = |a: usize, b: usize| {
        let (x, y) = (sites[a], sites[b]);
        green.value(x, y) / (green.value(x, x) * green.value(y, y)).sqrt()
    };
    // Orthant probability of a trivariate normal.
    let exact = 0.125 + (rho(0, 1).asin() + rho(0, 2).asin() + rho(1, 2).asin()) / (4.0 * PI);
    let hits: Vec<f64> = (0..400_000u64)
        .map(|k| {
            let s = sample_field(p, &dom, Stream::new(25).split(k));
            sites.iter().all(|&i| s.at(i)[0] >= 0.0) as u8 as f64
        })
        .collect();
    let brute = iid_estimate(&hits);
    assert!(
        (brute.mean - exact).abs() < 4.0 * brute.se,
        "{brute:?} vs {exact}"
    );
    let spec = AvoidanceSpec::on_region(Avoid::HalfLine { b: 0.0 });
    let est =
        estimate_log_avoid_probability(p, dom.clone(), &spec, AisOptions::default(), 26).unwrap();
    assert!(est.log_p >= 3.0 * 0.5f64.ln(), "{est:?}");
    let brute_log = brute.mean.ln();
    let brute_log_se = brute.se / brute.mean;
    let se = (est.se * est.se + brute_log_se * brute_log_se).sqrt();
    assert!(
        (est.log_p - brute_log).abs() < 3.0 * se,
        "{} ± {} vs {brute_log}",
        est.log_p,
        est.se
    );
    assert!(
        (est.log_p - exact.ln()).abs() < 3.0 * est.se,
        "{} vs {}",
        est.log_p,
        exact.ln()
    );
}

#[test]
fn vanishing_constraint_has_probability_one() {
    let dom = Arc::new(LatticeDomain::build(2, 16, Shape::Disc { radius: 0.25 }).unwrap());
    let p = FieldParams::massless(1);
    let spec = AvoidanceSpec::on_region(Avoid::Interval { a: -1e-7, b: 1e-7 });
    let est = estimate_log_avoid_probability(p, dom, &spec, AisOptions::default(), 27).unwrap();
    assert!(est.log_p <= 0.0 && est.log_p > -1e-3, "{est:?}");
}

#[test]
fn positive_part_grows_with_the_box() {
    // Conditioning on φ >= 0 everywhere: E[φ(0)₊] is monotone in the volume.
    let p = FieldParams::massless(1);
    let mut prev: Option<Estimate> = None;
    for n in [4usize, 8, 16] {
        let dom = Arc::new(LatticeDomain::full_box(2, n).unwrap());
        let m = model(p, &dom, Avoid::HalfLine { b: 0.0 }, ChainOptions::default());
        let mut xs = Vec::new();
        m.run_with(40_000, 500, 1, Stream::new(28), |_, s| {
            xs.push(s.at(dom.origin())[0].max(0.0))
        })
        .unwrap();
        let (e, _) = correlated_estimate(&xs);
        if let Some(q) = prev {
            assert!(
                e.mean + 4.0 * (e.se * e.se + q.se * q.se).sqrt() >= q.mean,
                "n={n}: {e:?} after {q:?}"
            );
        }
        prev = Some(e);
    }
}

#[test]
fn vector_tail_is_dominated_by_scalar_tail() {
    // |φ| >= t forces one of four unit directions at angle <= π/4 to carry at
    // least t cos(π/4); each directional coordinate is dominated by the
    // scalar field conditioned to stay above the same level.
    let dom = Arc::new(LatticeDomain::build(2, 16, Shape::Disc { radius: 0.3 }).unwrap());
    let r = 1.0;
    let vec_model = model(
        FieldParams::massless(2),
        &dom,
        Avoid::Ball { radius: r },
        ChainOptions::default(),
    );
    let (states, _) = vec_model.run(20_500, 500, 5, Stream::new(29)).unwrap();
    let norms: Vec<f64> = states.iter().map(|s| s.norm_at(dom.origin())).collect();
    let sd = iid_estimate(&norms.iter().map(|v| v * v).collect::<Vec<_>>())
        .mean
        .sqrt();
    let t = 2.0 * sd;
    let vec_tail = norms.iter().filter(|&&v| v >= t).count() as f64 / norms.len() as f64;
    let scalar = model(
        FieldParams::massless(1),
        &dom,
        Avoid::HalfLine { b: r },
        ChainOptions::default(),
    );
    let (sstates, _) = scalar.run(20_500, 500, 5, Stream::new(30)).unwrap();
    let cut = t * (PI / 4.0).cos();
    let scalar_tail = sstates
        .iter()
        .filter(|s| s.at(dom.origin())[0] >= cut)
        .count() as f64
        / sstates.len() as f64;
    assert!(vec_tail > 0.0);
    assert!(
        vec_tail <= 4.0 * scalar_tail,
        "{vec_tail} vs 4 x {scalar_tail}"
    );
}

#[test]
fn mixing_diagnostics_are_reported() {
    let dom = Arc::new(LatticeDomain::full_box(2, 8).unwrap());
    // A stiff mass makes the ball nearly unreachable for exact rejection.
    let m = model(
        FieldParams::massive(3, 100.0),
        &dom,
        Avoid::Ball { radius: 1.0 },
        ChainOptions::default(),
    );
    let s = m.run_with(300, 50, 1, Stream::new(31), |_, _| {}).unwrap();
    let acc = s.mh_acceptance.expect("metropolis sites expected");
    assert_eq!(s.flagged, acc < 0.1);
    assert!(s.tau_origin >= 1.0 && s.tau_origin.is_finite());
}

fn avoid_strategy() -> impl Strategy<Value = (usize, Avoid)> {
    prop_oneof![
        (1usize..4, 0.1f64..3.0).prop_map(|(n, r)| (n, Avoid::Ball { radius: r })),
        (-2.0f64..1.0, 0.01f64..3.0).prop_map(|(a, w)| (1, Avoid::Interval { a, b: a + w })),
        (-1.0f64..3.0).prop_map(|b| (1, Avoid::HalfLine { b })),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_emitted_state_avoids_the_set(
        n in 3usize..10,
        (spin, avoid) in avoid_strategy(),
        m2 in prop_oneof![Just(0.0), 0.1f64..4.0],
        annulus in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let p = FieldParams::with_default_coupling(spin, m2).unwrap();
        let dom = Arc::new(LatticeDomain::full_box(2, n).unwrap());
        let bc = if annulus && spin == 1 { BoundaryCondition::ClampAnnulus { level: 1.5 } } else { BoundaryCondition::DirichletZero };
        let m = Conditioned::new(p, dom.clone(), &AvoidanceSpec::on_region(avoid), bc, ChainOptions::default()).unwrap();
        let (states, _) = m.run(25, 5, 2, Stream::new(seed)).unwrap();
        for s in &states {
            prop_assert!(m.violation(s).is_none());
            let work = m.work_domain();
            for i in 0..work.len() {
                if let Some(c) = m.constraint_at(i) {
                    prop_assert!(c.admits(s.at(i)));
                }
            }
            prop_assert!(s.is_finite());
        }
    }
}
