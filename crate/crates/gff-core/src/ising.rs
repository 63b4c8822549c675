//! Ising models with inhomogeneous ferromagnetic couplings, used to sample
//! the signs of a scalar field given its absolute values.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked in
use num_traits::Float;

use crate::error::{config, Error, Result};
use crate::gaussian::FieldState;
use crate::lattice::{LatticeDomain, OUTSIDE};
use crate::rng::Stream;
use crate::stats::{correlated_estimate, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum IsingBoundary {
    /// Boundary spins fixed to +1.
    Plus,
    /// Boundary edges ignored.
    Free,
}

/// Couplings are stored per neighbour slot (`2d` per site, same order as
/// [`LatticeDomain::neighbors`]); slots pointing outside the box hold the
/// coupling to the fixed boundary spin.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingInstance {
    pub domain: Arc<LatticeDomain>,
    pub couplings: Vec<f64>,
    pub boundary: IsingBoundary,
    pub spins: Vec<i8>,
}

impl IsingInstance {
    pub fn homogeneous(
        domain: Arc<LatticeDomain>,
        j: f64,
        boundary: IsingBoundary,
    ) -> Result<Self> {
        if !(j >= 0.0) {
            return Err(config("couplings must be non-negative"));
        }
        let len = domain.len();
        Ok(IsingInstance {
            couplings: vec![j; len * 2 * domain.d()],
            domain,
            boundary,
            spins: vec![1; len],
        })
    }

    /// Instance from explicit per-slot couplings; checks symmetry and signs.
    pub fn with_couplings(
        domain: Arc<LatticeDomain>,
        couplings: Vec<f64>,
        boundary: IsingBoundary,
    ) -> Result<Self> {
        let deg = 2 * domain.d();
        if couplings.len() != domain.len() * deg {
            return Err(config("coupling table has wrong length"));
        }
        if couplings.iter().any(|&j| !(j >= 0.0) || !j.is_finite()) {
            return Err(config("couplings must be finite and non-negative"));
        }
        for i in 0..domain.len() {
            for (slot, &j) in domain.neighbors(i).iter().enumerate() {
                if j != OUTSIDE
                    && couplings[i * deg + slot] != couplings[j as usize * deg + (slot ^ 1)]
                {
                    return Err(config("coupling table is not symmetric"));
                }
            }
        }
        let len = domain.len();
        Ok(IsingInstance {
            domain,
            couplings,
            boundary,
            spins: vec![1; len],
        })
    }

    #[inline]
    fn local_field(&self, i: usize) -> f64 {
        let deg = 2 * self.domain.d();
        let mut h = 0.0;
        for (slot, &j) in self.domain.neighbors(i).iter().enumerate() {
            let c = self.couplings[i * deg + slot];
            if j == OUTSIDE {
                if self.boundary == IsingBoundary::Plus {
                    h += c;
                }
            } else {
                h += c * self.spins[j as usize] as f64;
            }
        }
        h
    }

    /// Heat-bath probability that site `i` is +1 given the others.
    pub fn plus_probability(&self, i: usize) -> f64 {
        1.0 / (1.0 + (-2.0 * self.local_field(i)).exp())
    }

    /// Heat-bath update of one site with a uniform draw `u` in (0,1).
    pub fn heat_bath_site(&mut self, i: usize, u: f64) {
        self.spins[i] = if u < self.plus_probability(i) { 1 } else { -1 };
    }

    /// Update every site of one colour.
    pub fn half_sweep(&mut self, color: usize, stream: Stream, sweep: u64) {
        let s = stream.split(color as u64);
        for i in 0..self.domain.len() {
            if self.domain.parity(i) == color {
                let u = s.rng(i as u32, sweep as u32).open01();
                self.heat_bath_site(i, u);
            }
        }
    }

    pub fn sweep(&mut self, stream: Stream, sweep: u64) {
        self.half_sweep(0, stream, sweep);
        self.half_sweep(1, stream, sweep);
    }

    /// Unnormalized log-weight `Σ_edges J σσ` (+ boundary terms) of the current spins.
    pub fn log_weight(&self) -> f64 {
        let deg = 2 * self.domain.d();
        let mut w = 0.0;
        for i in 0..self.domain.len() {
            for (slot, &j) in self.domain.neighbors(i).iter().enumerate() {
                let c = self.couplings[i * deg + slot];
                let si = self.spins[i] as f64;
                if j == OUTSIDE {
                    if self.boundary == IsingBoundary::Plus {
                        w += c * si;
                    }
                } else if (j as usize) > i {
                    w += c * si * self.spins[j as usize] as f64;
                }
            }
        }
        w
    }

    pub fn min_coupling(&self) -> f64 {
        self.couplings.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Ising instance for the signs of a scalar field on `inner` (or the state's
/// own domain), with couplings `|ψ(x)||ψ(y)|` and plus boundary spins.
/// Boundary sites missing from the state's domain carry `boundary_norm`.
/// Starts from the field's signs.
pub fn from_field(
    state: &FieldState,
    inner: Option<Arc<LatticeDomain>>,
    boundary_norm: f64,
    r_min: f64,
) -> Result<IsingInstance> {
    if state.params.spin != 1 {
        return Err(config("sign model needs a scalar field"));
    }
    let dom = inner.unwrap_or_else(|| state.domain.clone());
    let deg = 2 * dom.d();
    let big = &state.domain;
    let norm_at = |c: &[i64]| -> f64 {
        big.index(c)
            .map(|j| state.at(j)[0].abs())
            .unwrap_or(boundary_norm)
    };
    let mut couplings = vec![0.0; dom.len() * deg];
    let mut spins = vec![1i8; dom.len()];
    for i in 0..dom.len() {
        let c = dom.coord(i);
        let j = big
            .index(&c)
            .ok_or_else(|| config("inner domain not contained in the field's domain"))?;
        let v = state.at(j)[0];
        if v.abs() < r_min {
            return Err(Error::Constraint {
                site: i,
                detail: "field norm below the conditioning radius".into(),
            });
        }
        spins[i] = if v >= 0.0 { 1 } else { -1 };
        for k in 0..dom.d() {
            for (s, delta) in [-1i64, 1].into_iter().enumerate() {
                let mut y = c;
                y[k] += delta;
                couplings[i * deg + 2 * k + s] = v.abs() * norm_at(&y);
            }
        }
    }
    let mut inst = IsingInstance::with_couplings(dom, couplings, IsingBoundary::Plus)?;
    inst.spins = spins;
    Ok(inst)
}

/// Origin magnetization from heat-bath Glauber dynamics in checkerboard
/// order, starting from the instance's spins.
pub fn glauber_magnetization(
    instance: &IsingInstance,
    sweeps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<Estimate> {
    if sweeps <= burn_in {
        return Err(config("sweeps must exceed burn-in"));
    }
    let mut inst = instance.clone();
    let stream = Stream::new(seed);
    let origin = inst.domain.origin();
    let mut trace = Vec::with_capacity((sweeps - burn_in) as usize);
    for t in 0..sweeps {
        inst.sweep(stream, t);
        if t >= burn_in {
            trace.push(inst.spins[origin] as f64);
        }
    }
    Ok(correlated_estimate(&trace).0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonotoneReport {
    pub weaker: Estimate,
    pub stronger: Estimate,
    /// `weaker <= stronger` up to 4 combined standard errors.
    pub holds: bool,
}

/// Compare origin magnetizations of two plus-boundary instances with
/// edgewise ordered couplings.
pub fn monotone_coupling_check(
    weaker: &IsingInstance,
    stronger: &IsingInstance,
    sweeps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<MonotoneReport> {
    if weaker.domain.len() != stronger.domain.len() || weaker.domain.d() != stronger.domain.d() {
        return Err(config("instances live on different domains"));
    }
    if weaker.boundary != IsingBoundary::Plus || stronger.boundary != IsingBoundary::Plus {
        return Err(config("monotonicity needs plus boundary conditions"));
    }
    if weaker
        .couplings
        .iter()
        .zip(&stronger.couplings)
        .any(|(a, b)| a > b)
    {
        return Err(config("couplings are not edgewise ordered"));
    }
    let a = glauber_magnetization(weaker, sweeps, burn_in, seed)?;
    let b = glauber_magnetization(stronger, sweeps, burn_in, seed ^ 0x5bd1_e995)?;
    let slack = 4.0 * (a.se * a.se + b.se * b.se).sqrt();
    Ok(MonotoneReport {
        weaker: a,
        stronger: b,
        holds: a.mean <= b.mean + slack,
    })
}
