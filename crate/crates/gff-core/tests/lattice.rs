use std::collections::{HashSet, VecDeque};

use gff_core::lattice::{box_side_for, LatticeDomain, MesoGrid, Shape, OUTSIDE};
use proptest::prelude::*;

fn boxes_of(dom: &LatticeDomain, grid: &MesoGrid) -> Vec<Vec<(usize, bool)>> {
    (0..grid.len()).map(|b| grid.box_sites(dom, b)).collect()
}

#[test]
fn translated_grids_differ_only_at_the_edge() {
    let dom = LatticeDomain::build(2, 64, Shape::Disc { radius: 0.4 }).unwrap();
    let a = MesoGrid::with_side(&dom, 8, &[0, 0]).unwrap();
    let b = MesoGrid::with_side(&dom, 8, &[8, 0]).unwrap();
    assert_eq!(a.len(), b.len());
    let c = MesoGrid::with_side(&dom, 8, &[4, 0]).unwrap();
    // Boxes whose centre lies within one box side of the rim.
    let r = 0.4 * 64.0;
    let rim = a
        .centers
        .iter()
        .filter(|x| ((x[0] * x[0] + x[1] * x[1]) as f64).sqrt() > r - 8.0 * 2f64.sqrt())
        .count();
    assert!(
        a.len().abs_diff(c.len()) <= rim,
        "{} {} rim {rim}",
        a.len(),
        c.len()
    );
}

#[test]
fn empty_grid_is_flagged() {
    let dom = LatticeDomain::build(2, 16, Shape::Disc { radius: 0.1 }).unwrap();
    let g = MesoGrid::with_side(&dom, 8, &[0, 0]).unwrap();
    assert!(g.empty && g.is_empty());
}

#[test]
fn offsets_give_disjoint_centres_covering_the_bulk() {
    let n = 64;
    let s = 8i64;
    let rho = 0.4;
    let dom = LatticeDomain::build(2, n, Shape::Disc { radius: rho }).unwrap();
    let mut seen = HashSet::new();
    for a in -(s / 2) + 1..s / 2 {
        for b in -(s / 2) + 1..s / 2 {
            let g = MesoGrid::with_side(&dom, s as usize, &[a, b]).unwrap();
            for &c in &g.center_sites {
                assert!(seen.insert(c), "centre {c} appears for two offsets");
            }
        }
    }
    // Offsets on the box ring are excluded, so a strip per axis residue is never a centre.
    let ring_fraction = 1.0 - ((s - 1) as f64 / s as f64).powi(2);
    let r = rho * n as f64;
    let perimeter_loss = 2.0 * std::f64::consts::PI * r * (s as f64 * 2f64.sqrt() + 1.0);
    let lower = dom.region_len() as f64 * (1.0 - ring_fraction) - perimeter_loss;
    assert!(seen.len() as f64 >= lower, "{} < {lower}", seen.len());
}

#[test]
fn box_side_rounds_to_even() {
    assert_eq!(box_side_for(64, 0.5), 8);
    assert_eq!(box_side_for(100, 0.5), 10);
    // 3^1 = 3 sits halfway between 2 and 4: ties go up.
    assert_eq!(box_side_for(3, 1.0 - 1e-15), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn region_stays_away_from_boundary(n in 8usize..80, radius in 0.05f64..0.45) {
        let dom = LatticeDomain::build(2, n, Shape::Disc { radius }).unwrap();
        let gap = ((dom.iota() * n as f64) / 2.0).floor() as i64;
        for i in dom.region_sites() {
            prop_assert!(dom.distance_to_outside(i) >= gap);
        }
        prop_assert!(dom.in_region(dom.origin()));
    }

    #[test]
    fn grid_structure_is_consistent(
        n in 24usize..72,
        half in 1usize..5,
        x0 in (-6i64..6, -6i64..6),
        square in any::<bool>(),
    ) {
        let shape = if square { Shape::Square { side: 0.7 } } else { Shape::Disc { radius: 0.4 } };
        let dom = LatticeDomain::build(2, n, shape).unwrap();
        let s = 2 * half;
        let g = MesoGrid::with_side(&dom, s, &[x0.0, x0.1]).unwrap();
        let boxes = boxes_of(&dom, &g);
        // Every box inside the region.
        for b in &boxes {
            prop_assert!(b.iter().all(|&(i, _)| dom.in_region(i)));
        }
        // Adjacent centres differ by one box side along one axis.
        for &(i, j) in &g.adjacency {
            let (a, b) = (g.centers[i], g.centers[j]);
            let diff: Vec<i64> = (0..2).map(|k| (a[k] - b[k]).abs()).collect();
            prop_assert!(diff.iter().filter(|&&v| v == s as i64).count() == 1 && diff.iter().filter(|&&v| v == 0).count() == 1);
        }
        // Skeleton is exactly the union of the box rings.
        let mut ring: Vec<usize> = boxes.iter().flatten().filter(|p| p.1).map(|p| p.0).collect();
        ring.sort_unstable();
        ring.dedup();
        prop_assert_eq!(&ring, &g.skeleton);
        // Removing the skeleton leaves each box interior as its own component.
        let skel: HashSet<usize> = g.skeleton.iter().copied().collect();
        for b in &boxes {
            let interior: HashSet<usize> = b.iter().filter(|p| !p.1).map(|p| p.0).collect();
            let Some(&start) = interior.iter().next() else { continue };
            let mut seen = HashSet::from([start]);
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &w in dom.neighbors(v) {
                    if w != OUTSIDE && !skel.contains(&(w as usize)) && seen.insert(w as usize) {
                        queue.push_back(w as usize);
                    }
                }
            }
            prop_assert_eq!(seen, interior);
        }
    }
}
