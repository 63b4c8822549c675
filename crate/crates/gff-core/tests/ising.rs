use std::collections::HashMap;
use std::sync::Arc;

use gff_core::gaussian::{sample_field, FieldParams, FieldState};
use gff_core::ising::{
    from_field, glauber_magnetization, monotone_coupling_check, IsingBoundary, IsingInstance,
};
use gff_core::lattice::LatticeDomain;
use gff_core::rng::Stream;
use proptest::prelude::*;

#[test]
fn free_spins_without_coupling_are_unbiased() {
    let dom = Arc::new(LatticeDomain::full_box(2, 8).unwrap());
    let inst = IsingInstance::homogeneous(dom, 0.0, IsingBoundary::Free).unwrap();
    let m = glauber_magnetization(&inst, 20_000, 10, 50).unwrap();
    assert!(m.mean.abs() < 4.0 * m.se, "{m:?}");
}

#[test]
fn strong_plus_boundary_orders_the_box() {
    let dom = Arc::new(LatticeDomain::full_box(2, 32).unwrap());
    let inst = IsingInstance::homogeneous(dom, 9.0, IsingBoundary::Plus).unwrap();
    let m = glauber_magnetization(&inst, 500, 50, 51).unwrap();
    assert!(m.mean >= 0.99, "{m:?}");
}

#[test]
fn magnetization_is_monotone_in_couplings() {
    let dom = Arc::new(LatticeDomain::full_box(2, 12).unwrap());
    let weak = IsingInstance::homogeneous(dom.clone(), 0.1, IsingBoundary::Plus).unwrap();
    let strong = IsingInstance::homogeneous(dom.clone(), 9.0, IsingBoundary::Plus).unwrap();
    let rep = monotone_coupling_check(&weak, &strong, 20_000, 200, 52).unwrap();
    assert!(rep.holds && rep.weaker.mean < rep.stronger.mean, "{rep:?}");
    let same = monotone_coupling_check(&weak, &weak, 20_000, 200, 53).unwrap();
    assert!(same.holds);
    // Couplings built from a field held at least at 3 dominate J = 9 edgewise.
    let p = FieldParams::massive(1, 1.0);
    let mut s = sample_field(p, &dom, Stream::new(54));
    for v in s.values.iter_mut() {
        *v = v.signum() * (3.0 + v.abs());
    }
    let field = from_field(&s, None, 3.0, 3.0).unwrap();
    let nine = IsingInstance::homogeneous(dom.clone(), 9.0, IsingBoundary::Plus).unwrap();
    let rep = monotone_coupling_check(&nine, &field, 2_000, 100, 55).unwrap();
    assert!(rep.holds, "{rep:?}");
    assert!(monotone_coupling_check(&field, &nine, 100, 10, 56).is_err());
}

#[test]
fn heat_bath_balances_on_two_by_two() {
    let dom = Arc::new(LatticeDomain::with_side(2, 2).unwrap());
    let couplings: Vec<f64> = (0..dom.len() * 4)
        .map(|k| 0.2 + 0.1 * (k % 3) as f64)
        .collect();
    // Symmetrize the interior slots.
    let mut c = couplings.clone();
    for i in 0..dom.len() {
        for (slot, &j) in dom.neighbors(i).iter().enumerate() {
            if j != gff_core::lattice::OUTSIDE && (j as usize) < i {
                c[i * 4 + slot] = c[j as usize * 4 + (slot ^ 1)];
            }
        }
    }
    let mut inst = IsingInstance::with_couplings(dom.clone(), c, IsingBoundary::Plus).unwrap();
    // Exact Gibbs weights over the 16 configurations.
    let mut exact = [0.0; 16];
    for (cfg, w) in exact.iter_mut().enumerate() {
        for i in 0..4 {
            inst.spins[i] = if cfg >> i & 1 == 1 { 1 } else { -1 };
        }
        *w = inst.log_weight().exp();
    }
    let z: f64 = exact.iter().sum();
    let mut counts: HashMap<usize, u64> = HashMap::new();
    let stream = Stream::new(57);
    let sweeps = 400_000u64;
    for t in 0..sweeps {
        inst.sweep(stream, t);
        let cfg = (0..4).fold(0, |acc, i| acc | ((inst.spins[i] == 1) as usize) << i);
        *counts.entry(cfg).or_default() += 1;
    }
    for (cfg, &w) in exact.iter().enumerate() {
        let p = w / z;
        let f = counts.get(&cfg).copied().unwrap_or(0) as f64 / sweeps as f64;
        let se = (p * (1.0 - p) / sweeps as f64).sqrt();
        // Sweeps are correlated; allow a generous factor on the iid error.
        assert!((f - p).abs() < 8.0 * se + 1e-4, "cfg {cfg}: {f} vs {p}");
    }
}

#[test]
fn field_couplings_use_products_of_norms() {
    let dom = Arc::new(LatticeDomain::full_box(2, 6).unwrap());
    let p = FieldParams::massive(1, 1.0);
    let mut s = FieldState::constant(p, dom.clone(), &[4.0]);
    let o = dom.origin();
    s.values[o] = -5.0;
    let inst = from_field(&s, None, 2.0, 1.0).unwrap();
    assert_eq!(inst.spins[o], -1);
    let deg = 4;
    for (slot, &j) in dom.neighbors(o).iter().enumerate() {
        assert_ne!(j, gff_core::lattice::OUTSIDE);
        assert_eq!(inst.couplings[o * deg + slot], 20.0);
    }
    // Edges to the missing boundary carry the boundary norm.
    let corner = dom.index(&[dom.lo(), dom.lo()]).unwrap();
    let outside = dom
        .neighbors(corner)
        .iter()
        .position(|&j| j == gff_core::lattice::OUTSIDE)
        .unwrap();
    assert_eq!(inst.couplings[corner * deg + outside], 8.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn plus_boundary_magnetization_is_nonnegative(j in 0.05f64..2.0, n in 2usize..10, seed in any::<u64>()) {
        let dom = Arc::new(LatticeDomain::full_box(2, n).unwrap());
        let inst = IsingInstance::homogeneous(dom, j, IsingBoundary::Plus).unwrap();
        let m = glauber_magnetization(&inst, 3_000, 100, seed).unwrap();
        prop_assert!(m.mean >= -4.0 * m.se.max(1e-3), "{m:?}");
    }

    #[test]
    fn glauber_is_deterministic(j in 0.0f64..2.0, seed in any::<u64>()) {
        let dom = Arc::new(LatticeDomain::full_box(2, 6).unwrap());
        let inst = IsingInstance::homogeneous(dom, j, IsingBoundary::Plus).unwrap();
        let a = glauber_magnetization(&inst, 200, 10, seed).unwrap();
        let b = glauber_magnetization(&inst, 200, 10, seed).unwrap();
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }
}
