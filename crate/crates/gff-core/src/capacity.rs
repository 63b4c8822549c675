//! Discrete relative capacity of a region inside the box, with unit coupling
//! and the `½ Σ_edges (∇f)²` normalization.
//!
//! Three routes: the obstacle problem (projected SOR), the equilibrium
//! charge `G|_{D×D} w = 1` (conjugate gradients with spectral Green
//! mat-vecs) and the dual ratio `(Σ_D f)² / (2 fᵀ G f)` for a test charge.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked in
use num_traits::Float;

use crate::error::{config, Error, Result};
use crate::lattice::{LatticeDomain, Shape, OUTSIDE};
use crate::linalg::{conjugate_gradient, SineBasis};

/// Minimizer of the obstacle problem.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObstacleSolution {
    pub n: usize,
    /// Values on the full box, site order of the domain.
    pub values: Vec<f64>,
    /// `½ Σ_edges (f(x) - f(y))²`, edges to the zero boundary included.
    pub energy: f64,
    pub iterations: usize,
    pub max_update: f64,
    pub omega: f64,
    /// Largest violation of complementarity: `|Δf|` off the contact set.
    pub residual: f64,
}

impl ObstacleSolution {
    /// Charge `-Δf` on the region (zero elsewhere up to the residual).
    pub fn charge(&self, domain: &LatticeDomain) -> Vec<f64> {
        (0..domain.len())
            .map(|i| {
                if domain.in_region(i) {
                    neg_laplacian(domain, &self.values, i)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn neg_laplacian(domain: &LatticeDomain, f: &[f64], i: usize) -> f64 {
    let mut s = 2.0 * domain.d() as f64 * f[i];
    for &j in domain.neighbors(i) {
        if j != OUTSIDE {
            s -= f[j as usize];
        }
    }
    s
}

/// Dirichlet energy of `f` with zero values outside the box.
pub fn dirichlet_energy(domain: &LatticeDomain, f: &[f64]) -> f64 {
    let mut e = 0.0;
    for i in 0..domain.len() {
        for &j in domain.neighbors(i) {
            if j == OUTSIDE {
                e += f[i] * f[i];
            } else if (j as usize) > i {
                let d = f[i] - f[j as usize];
                e += d * d;
            }
        }
    }
    0.5 * e
}

/// Optimal SOR factor for the Laplacian on a box of the given side.
pub fn optimal_omega(side: usize) -> f64 {
    2.0 / (1.0 + (core::f64::consts::PI / (side as f64 + 1.0)).sin())
}

fn checked_domain(shape: Shape, n: usize) -> Result<LatticeDomain> {
    if shape.iota() <= 0.0 {
        return Err(config("region must stay away from the box boundary"));
    }
    LatticeDomain::build(2, n, shape)
}

/// Obstacle problem on `Λ_n` for `shape` with the optimal relaxation factor.
pub fn primal_capacity(shape: Shape, n: usize, tol: f64) -> Result<ObstacleSolution> {
    let dom = checked_domain(shape, n)?;
    primal_capacity_on(&dom, tol, None, 1_000_000)
}

/// Projected SOR on an arbitrary region: minimize the Dirichlet energy over
/// `f >= 1` on the region, `f = 0` outside the box, until the largest update
/// of a sweep drops below `tol`.
pub fn primal_capacity_on(
    domain: &LatticeDomain,
    tol: f64,
    omega: Option<f64>,
    max_iter: usize,
) -> Result<ObstacleSolution> {
    if domain.region_len() == 0 {
        return Err(config("empty region"));
    }
    let omega = omega.unwrap_or_else(|| optimal_omega(domain.side()));
    if !(0.0 < omega && omega < 2.0) {
        return Err(config("relaxation factor must lie in (0, 2)"));
    }
    let deg = 2.0 * domain.d() as f64;
    let region = domain.region();
    let mut f: Vec<f64> = region.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
    let mut iterations = 0;
    let mut max_update;
    loop {
        max_update = 0.0f64;
        for i in 0..domain.len() {
            let mut s = 0.0;
            for &j in domain.neighbors(i) {
                if j != OUTSIDE {
                    s += f[j as usize];
                }
            }
            let mut v = (1.0 - omega) * f[i] + omega * s / deg;
            if region[i] {
                v = v.max(1.0);
            }
            max_update = max_update.max((v - f[i]).abs());
            f[i] = v;
        }
        iterations += 1;
        if max_update < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Numeric {
                what: "projected SOR did not converge".into(),
                residual: max_update,
            });
        }
    }
    let residual = (0..domain.len())
        .filter(|&i| !region[i] || f[i] > 1.0 + tol)
        .map(|i| neg_laplacian(domain, &f, i).abs())
        .fold(0.0, f64::max);
    Ok(ObstacleSolution {
        n: domain.n(),
        energy: dirichlet_energy(domain, &f),
        values: f,
        iterations,
        max_update,
        omega,
        residual,
    })
}

/// Equilibrium charge and capacity `½ 1ᵀ w`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquilibriumSolution {
    pub value: f64,
    /// Charge on the region sites, in region order.
    pub charge: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    /// CG stalled above the target residual.
    pub ill_conditioned: bool,
}

/// Unit-coupling Green operator restricted to the region.
struct RegionGreen<'a> {
    domain: &'a LatticeDomain,
    basis: SineBasis,
    sites: Vec<usize>,
}

impl<'a> RegionGreen<'a> {
    fn new(domain: &'a LatticeDomain) -> Self {
        RegionGreen {
            domain,
            basis: SineBasis::new(domain.d(), domain.side(), 1.0, 0.0),
            sites: domain.region_sites(),
        }
    }

    fn apply(&self, w: &[f64], out: &mut [f64], full: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        full.clear();
        full.resize(self.domain.len(), 0.0);
        for (k, &s) in self.sites.iter().enumerate() {
            full[s] = w[k];
        }
        self.basis.apply_inverse_power(full, 1.0, scratch);
        for (k, &s) in self.sites.iter().enumerate() {
            out[k] = full[s];
        }
    }
}

pub fn equilibrium_capacity(shape: Shape, n: usize) -> Result<EquilibriumSolution> {
    let dom = checked_domain(shape, n)?;
    equilibrium_capacity_on(&dom, 1e-12)
}

/// Solve `G|_{D×D} w = 1` by conjugate gradients preconditioned with the
/// Laplacian restricted to the region.
pub fn equilibrium_capacity_on(
    domain: &LatticeDomain,
    rel_tol: f64,
) -> Result<EquilibriumSolution> {
    let op = RegionGreen::new(domain);
    let m = op.sites.len();
    if m == 0 {
        return Err(config("empty region"));
    }
    let pos: Vec<Option<usize>> = {
        let mut p = vec![None; domain.len()];
        for (k, &s) in op.sites.iter().enumerate() {
            p[s] = Some(k);
        }
        p
    };
    let deg = 2.0 * domain.d() as f64;
    let mut full = Vec::new();
    let mut scratch = Vec::new();
    let mut w = vec![0.0; m];
    let ones = vec![1.0; m];
    let result = conjugate_gradient(
        |x: &[f64], y: &mut [f64]| op.apply(x, y, &mut full, &mut scratch),
        |r: &[f64], z: &mut [f64]| {
            for (k, &s) in op.sites.iter().enumerate() {
                let mut v = deg * r[k];
                for &j in domain.neighbors(s) {
                    if j != OUTSIDE {
                        if let Some(q) = pos[j as usize] {
                            v -= r[q];
                        }
                    }
                }
                z[k] = v;
            }
        },
        &ones,
        &mut w,
        rel_tol,
        10 * m + 100,
    );
    let (iterations, relative_residual, ill) = match result {
        Ok((it, rel)) => (it, rel, false),
        Err(Error::Numeric { residual, .. }) => (10 * m + 100, residual, true),
        Err(e) => return Err(e),
    };
    Ok(EquilibriumSolution {
        value: 0.5 * w.iter().sum::<f64>(),
        charge: w,
        iterations,
        relative_residual,
        ill_conditioned: ill,
    })
}

/// `(Σ_D f)² / (2 fᵀ G f)` for `f` given on the full box (only its values on
/// the region are used).
pub fn dual_ratio(domain: &LatticeDomain, f: &[f64]) -> Result<f64> {
    if f.len() != domain.len() {
        return Err(config("test function has wrong length"));
    }
    let op = RegionGreen::new(domain);
    let fd: Vec<f64> = op.sites.iter().map(|&s| f[s]).collect();
    if fd.iter().all(|&v| v == 0.0) {
        return Err(config("test function vanishes on the region"));
    }
    let mut gf = vec![0.0; fd.len()];
    op.apply(&fd, &mut gf, &mut Vec::new(), &mut Vec::new());
    let quad: f64 = fd.iter().zip(&gf).map(|(a, b)| a * b).sum();
    if !(quad > 0.0) {
        return Err(Error::Numeric {
            what: "Green quadratic form is not positive".into(),
            residual: quad,
        });
    }
    let total: f64 = fd.iter().sum();
    Ok(total * total / (2.0 * quad))
}

/// Closed form for concentric circles, `π / log(outer / inner)`.
pub fn annulus_capacity(inner: f64, outer: f64) -> f64 {
    core::f64::consts::PI / (outer / inner).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_matches_scalar_inverse() {
        let dom = LatticeDomain::full_box(2, 16).unwrap();
        let mut mask = vec![false; dom.len()];
        mask[dom.origin()] = true;
        let dom = dom.with_region(mask).unwrap();
        let eq = equilibrium_capacity_on(&dom, 1e-14).unwrap();
        let g00 = SineBasis::new(2, dom.side(), 1.0, 0.0).green(dom.origin(), dom.origin());
        assert!((eq.value - 0.5 / g00).abs() < 1e-13);
        let pr = primal_capacity_on(&dom, 1e-13, None, 100_000).unwrap();
        assert!((pr.energy - eq.value).abs() / eq.value < 1e-8);
    }

    #[test]
    fn touching_region_rejected() {
        assert!(primal_capacity(Shape::Square { side: 1.0 }, 16, 1e-8).is_err());
    }

    #[test]
    fn primal_and_equilibrium_agree_small() {
        let s = Shape::Disc { radius: 0.25 };
        let pr = primal_capacity(s, 32, 1e-12).unwrap();
        let eq = equilibrium_capacity(s, 32).unwrap();
        assert!(
            (pr.energy - eq.value).abs() / eq.value < 1e-8,
            "{} {}",
            pr.energy,
            eq.value
        );
        let dom = LatticeDomain::build(2, 32, s).unwrap();
        let q = pr.charge(&dom);
        let r = dual_ratio(&dom, &q).unwrap();
        assert!((r - eq.value).abs() / eq.value < 1e-6);
    }

    #[test]
    fn dual_ratio_is_scale_invariant() {
        let dom = LatticeDomain::build(2, 24, Shape::Disc { radius: 0.25 }).unwrap();
        let f: Vec<f64> = (0..dom.len()).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let a = dual_ratio(&dom, &f).unwrap();
        let b = dual_ratio(&dom, &f.iter().map(|v| 7.0 * v).collect::<Vec<_>>()).unwrap();
        assert!((a - b).abs() <= 1e-14 * a);
    }
}
