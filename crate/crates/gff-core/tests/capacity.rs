use gff_core::capacity::{
    annulus_capacity, dual_ratio, equilibrium_capacity, equilibrium_capacity_on, primal_capacity,
};
use gff_core::lattice::{LatticeDomain, Shape};
use proptest::prelude::*;

fn single_site(n: usize) -> LatticeDomain {
    let dom = LatticeDomain::full_box(2, n).unwrap();
    let mut mask = vec![false; dom.len()];
    mask[dom.origin()] = true;
    dom.with_region(mask).unwrap()
}

#[test]
fn single_site_capacity_decreases_with_the_box() {
    let caps: Vec<f64> = [64usize, 128, 256]
        .iter()
        .map(|&n| {
            equilibrium_capacity_on(&single_site(n), 1e-13)
                .unwrap()
                .value
        })
        .collect();
    assert!(caps[0] > caps[1] && caps[1] > caps[2], "{caps:?}");
    // A point has vanishing capacity: the decay follows 1/log n.
    for (k, &n) in [64.0f64, 128.0, 256.0].iter().enumerate() {
        let scaled = caps[k] * n.ln();
        assert!(scaled > 0.5 && scaled < 5.0, "{scaled}");
    }
}

#[test]
fn capacity_is_monotone_in_the_region() {
    let small = equilibrium_capacity(Shape::Disc { radius: 0.125 }, 64)
        .unwrap()
        .value;
    let large = equilibrium_capacity(Shape::Disc { radius: 0.25 }, 64)
        .unwrap()
        .value;
    let square = equilibrium_capacity(Shape::Square { side: 0.5 }, 64)
        .unwrap()
        .value;
    assert!(small < large && large < square, "{small} {large} {square}");
}

#[test]
fn primal_and_equilibrium_agree() {
    let s = Shape::Square { side: 0.5 };
    let pr = primal_capacity(s, 64, 1e-10).unwrap();
    let eq = equilibrium_capacity(s, 64).unwrap();
    assert!(
        (pr.energy - eq.value).abs() / eq.value < 1e-6,
        "{} {}",
        pr.energy,
        eq.value
    );
    assert!(pr.residual < 1e-6);
    assert!(!eq.ill_conditioned);
}

#[test]
fn disc_capacity_converges() {
    let caps: Vec<f64> = [64usize, 128, 256, 512]
        .iter()
        .map(|&n| {
            equilibrium_capacity(Shape::Disc { radius: 0.25 }, n)
                .unwrap()
                .value
        })
        .collect();
    let diffs: Vec<f64> = caps.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in diffs.windows(2) {
        assert!(w[0] >= 1.5 * w[1], "{caps:?}");
    }
    // Continuum bracket: the box lies between the inscribed and circumscribed discs.
    let (lo, hi) = (
        annulus_capacity(0.25, 0.5f64.sqrt()),
        annulus_capacity(0.25, 0.5),
    );
    let last = caps[3];
    assert!(last > 0.97 * lo && last < 1.03 * hi, "{lo} < {last} < {hi}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_test_charge_bounds_capacity_from_below(
        weights in prop::collection::vec(-1.0f64..3.0, 64),
        radius in 0.1f64..0.35,
    ) {
        let dom = LatticeDomain::build(2, 20, Shape::Disc { radius }).unwrap();
        let eq = equilibrium_capacity_on(&dom, 1e-13).unwrap();
        let f: Vec<f64> = (0..dom.len()).map(|i| weights[i % weights.len()]).collect();
        prop_assume!(dom.region_sites().iter().any(|&i| f[i] != 0.0));
        let r = dual_ratio(&dom, &f).unwrap();
        prop_assert!(r <= eq.value * (1.0 + 1e-9), "{} > {}", r, eq.value);
    }
}
