//! Markov chain sampling of the field conditioned to avoid a set at every
//! site of a region.
//!
//! The base kernel is a checkerboard heat-bath sweep using the exact
//! single-site conditional law. On top of it, each sweep may apply
//! exact line moves along low Laplacian eigenmodes (Gibbs updates of the
//! amplitude, restricted to the feasible segment through the current state)
//! and, when the conditioned law is symmetric, a global sign flip. Both
//! leave the conditioned law invariant and cure the critical slowing down of
//! the long-wavelength height.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked in
use num_traits::Float;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{config, Error, Result};
use crate::gaussian::{sample_with_basis, FieldParams, FieldState, GreenOperator};
use crate::lattice::{LatticeDomain, OUTSIDE};
use crate::linalg::SineBasis;
use crate::math::{log_norm_cdf, log_norm_sf, norm_cdf, norm_isf, norm_sf};
use crate::rng::{CounterRng, Stream};
use crate::stats::{correlated_estimate, integrated_autocorr_time, Estimate};

pub const MAX_SPIN: usize = 8;

/// Forbidden set at a site.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum Avoid {
    /// Open ball of the given radius around the origin of R^N.
    Ball { radius: f64 },
    /// Open interval `(a, b)` (scalar fields only).
    Interval { a: f64, b: f64 },
    /// Half-line `(-inf, b)` (scalar fields only).
    HalfLine { b: f64 },
}

impl Avoid {
    pub fn validate(&self, spin: usize) -> Result<()> {
        match *self {
            Avoid::Ball { radius } if radius > 0.0 && radius.is_finite() => Ok(()),
            Avoid::Ball { .. } => Err(config("ball radius must be positive")),
            Avoid::Interval { a, b } if spin == 1 && a < b => Ok(()),
            Avoid::Interval { .. } => Err(config("interval needs a < b and a scalar field")),
            Avoid::HalfLine { b } if spin == 1 && b.is_finite() => Ok(()),
            Avoid::HalfLine { .. } => {
                Err(config("half-line needs a finite end and a scalar field"))
            }
        }
    }

    /// Scalar cut points `(a, b)`; a ball of radius R is `(-R, R)`.
    pub fn scalar_cuts(&self) -> (f64, f64) {
        match *self {
            Avoid::Ball { radius } => (-radius, radius),
            Avoid::Interval { a, b } => (a, b),
            Avoid::HalfLine { b } => (f64::NEG_INFINITY, b),
        }
    }

    /// Whether `v` lies outside the forbidden set.
    pub fn admits(&self, v: &[f64]) -> bool {
        match *self {
            Avoid::Ball { radius } => v.iter().map(|x| x * x).sum::<f64>() >= radius * radius,
            _ => {
                let (a, b) = self.scalar_cuts();
                b - a < DEGENERATE_WIDTH || v[0] <= a || v[0] >= b
            }
        }
    }

    /// Invariant under `v -> -v`.
    pub fn is_symmetric(&self) -> bool {
        match *self {
            Avoid::Ball { .. } => true,
            Avoid::Interval { a, b } => a == -b,
            Avoid::HalfLine { .. } => false,
        }
    }

    /// A point admitted by the constraint on the first axis.
    pub fn feasible_level(&self) -> f64 {
        match *self {
            Avoid::Ball { radius } => radius + 1.0,
            Avoid::Interval { b, .. } | Avoid::HalfLine { b } => b + 1.0,
        }
    }

    /// Member of the shrinking family used for probability estimates:
    /// `s = 1` is the constraint itself, `s -> 0` vanishes (balls and
    /// intervals shrink about their centre, half-lines recede to `floor`).
    pub fn scaled(&self, s: f64, floor: f64) -> Avoid {
        match *self {
            Avoid::Ball { radius } => Avoid::Ball { radius: s * radius },
            Avoid::Interval { a, b } => {
                let c = 0.5 * (a + b);
                let h = 0.5 * (b - a) * s;
                Avoid::Interval { a: c - h, b: c + h }
            }
            Avoid::HalfLine { b } => Avoid::HalfLine {
                b: floor + s * (b - floor),
            },
        }
    }
}

/// Intervals narrower than this are treated as no constraint.
pub const DEGENERATE_WIDTH: f64 = 1e-14;

/// Forbidden set and the region where it applies.
#[derive(Debug, Clone, PartialEq)]
pub struct AvoidanceSpec {
    pub avoid: Avoid,
    /// `None` applies the constraint on the domain's region.
    pub region: Option<Vec<bool>>,
}

impl AvoidanceSpec {
    pub fn on_region(avoid: Avoid) -> Self {
        AvoidanceSpec {
            avoid,
            region: None,
        }
    }

    pub fn nowhere(avoid: Avoid, len: usize) -> Self {
        AvoidanceSpec {
            avoid,
            region: Some(vec![false; len]),
        }
    }
}

/// Boundary treatment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "snake_case"))]
pub enum BoundaryCondition {
    #[default]
    DirichletZero,
    /// Simulate on `Λ_{2n}` with the field forced to be `>= level` on
    /// `Λ_{2n} \ Λ_n`.
    ClampAnnulus { level: f64 },
    /// Boundary values equal to `level` on the outer boundary of `Λ_n`.
    ClampExact { level: f64 },
}

/// Which scalar kernel produced a site update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Gaussian,
    Exact,
    Rejection,
    Metropolis,
}

/// Law of one site given its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteConditional {
    /// Unconstrained mean `g s / (2dg + m²)`.
    pub mean: Vec<f64>,
    /// Unconstrained variance per coordinate `1 / (2dg + m²)`.
    pub var: f64,
    pub avoid: Option<Avoid>,
}

/// Conditional law of a site whose neighbours sum to `neighbor_sum`.
pub fn site_conditional(
    params: FieldParams,
    d: usize,
    neighbor_sum: &[f64],
    avoid: Option<Avoid>,
) -> SiteConditional {
    let diag = params.diag(d);
    SiteConditional {
        mean: neighbor_sum.iter().map(|s| params.g * s / diag).collect(),
        var: 1.0 / diag,
        avoid,
    }
}

/// Draw from a site conditional. `current` is the present value (used as the
/// starting point of the Metropolis kernel for hard vector constraints).
pub fn sample_site(
    desc: &SiteConditional,
    current: Option<&[f64]>,
    rng: &mut CounterRng,
) -> Result<(Vec<f64>, Kernel)> {
    let n = desc.mean.len();
    let mut out = vec![0.0; n];
    match current {
        Some(c) => out.copy_from_slice(c),
        None => {
            if let Some(a) = desc.avoid {
                out[0] = a.feasible_level();
            }
        }
    }
    let mut mh = MhCounter::default();
    let k = draw_site(
        &desc.mean,
        desc.var.sqrt(),
        desc.avoid,
        &mut out,
        rng,
        &mut mh,
    )?;
    Ok((out, k))
}

/// `E|X|` under a scalar site conditional, used as a lower-variance
/// estimator of `E|φ(x)|` (its expectation under the chain's law is the same).
pub fn conditional_abs_mean(desc: &SiteConditional) -> Option<f64> {
    if desc.mean.len() != 1 {
        return None;
    }
    let (mu, sd) = (desc.mean[0], desc.var.sqrt());
    let allowed: Vec<(f64, f64)> = match desc.avoid {
        Some(av) => {
            let (a, b) = av.scalar_cuts();
            if b - a < DEGENERATE_WIDTH {
                vec![(f64::NEG_INFINITY, f64::INFINITY)]
            } else {
                vec![(f64::NEG_INFINITY, a), (b, f64::INFINITY)]
            }
        }
        None => vec![(f64::NEG_INFINITY, f64::INFINITY)],
    };
    let pdf = |z: f64| {
        if z.is_finite() {
            crate::math::norm_pdf(z)
        } else {
            0.0
        }
    };
    let (mut num, mut den) = (0.0, 0.0);
    for (l, u) in allowed {
        let parts = if l < 0.0 && u > 0.0 {
            vec![(l, 0.0), (0.0, u)]
        } else {
            vec![(l, u)]
        };
        for (l, u) in parts {
            let sign = if u <= 0.0 { -1.0 } else { 1.0 };
            let (al, bu) = ((l - mu) / sd, (u - mu) / sd);
            let p = if al > 0.0 {
                norm_sf(al) - norm_sf(bu)
            } else {
                norm_cdf(bu) - norm_cdf(al)
            };
            num += sign * (mu * p + sd * (pdf(al) - pdf(bu)));
            den += p;
        }
    }
    (den > 0.0).then(|| num / den)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MhCounter {
    pub proposals: u64,
    pub accepts: u64,
}

const MH_STEPS: usize = 4;

fn draw_site(
    mean: &[f64],
    sd: f64,
    avoid: Option<Avoid>,
    out: &mut [f64],
    rng: &mut CounterRng,
    mh: &mut MhCounter,
) -> Result<Kernel> {
    let n = mean.len();
    let Some(avoid) = avoid else {
        for k in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            out[k] = mean[k] + sd * z;
        }
        return Ok(Kernel::Gaussian);
    };
    if n == 1 || !matches!(avoid, Avoid::Ball { .. }) {
        let (a, b) = avoid.scalar_cuts();
        let (x, k) = sample_avoiding_interval(mean[0], sd, a, b, rng)?;
        out[0] = x;
        return Ok(k);
    }
    let Avoid::Ball { radius } = avoid else {
        unreachable!()
    };
    let mnorm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    // Lower bound on the acceptance probability via the projection on the mean direction.
    let acc_lb = norm_sf((radius - mnorm) / sd) + norm_cdf((-radius - mnorm) / sd);
    if acc_lb >= 1e-3 {
        loop {
            let mut r2 = 0.0;
            for k in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                out[k] = mean[k] + sd * z;
                r2 += out[k] * out[k];
            }
            if r2 >= radius * radius {
                return Ok(Kernel::Rejection);
            }
        }
    }
    // Random-walk Metropolis on {|γ| >= R}, started from the current value.
    let mut e_cur: f64 = (0..n).map(|k| (out[k] - mean[k]).powi(2)).sum();
    let mut prop = [0.0; MAX_SPIN];
    for _ in 0..MH_STEPS {
        mh.proposals += 1;
        let mut r2 = 0.0;
        let mut e_new = 0.0;
        for k in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            prop[k] = out[k] + sd * z;
            r2 += prop[k] * prop[k];
            e_new += (prop[k] - mean[k]).powi(2);
        }
        let u = rng.open01();
        if r2 >= radius * radius && u.ln() < -(e_new - e_cur) / (2.0 * sd * sd) {
            out.copy_from_slice(&prop[..n]);
            e_cur = e_new;
            mh.accepts += 1;
        }
    }
    Ok(Kernel::Metropolis)
}

/// Standard normal conditioned on `[c, inf)`.
pub fn sample_upper_tail(c: f64, rng: &mut CounterRng) -> f64 {
    if c > 6.0 {
        // Exponential proposal with optimal rate.
        let rate = 0.5 * (c + (c * c + 4.0).sqrt());
        loop {
            let e: f64 = rng.sample(Exp1);
            let z = c + e / rate;
            let u = rng.open01();
            if u.ln() <= -0.5 * (z - rate) * (z - rate) {
                return z;
            }
        }
    }
    let p = norm_sf(c);
    if p > 0.3 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z >= c {
                return z;
            }
        }
    }
    let u = rng.open01();
    norm_isf(u * p).max(c)
}

/// Standard normal conditioned on `[lo, hi]`.
pub fn sample_standard_interval(lo: f64, hi: f64, rng: &mut CounterRng) -> f64 {
    if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
        return rng.sample(StandardNormal);
    }
    if hi == f64::INFINITY {
        return sample_upper_tail(lo, rng);
    }
    if lo == f64::NEG_INFINITY {
        return -sample_upper_tail(-hi, rng);
    }
    if hi <= lo {
        return lo;
    }
    let span = lo.abs().max(hi.abs()).max(1.0);
    let w = hi - lo;
    if w <= 0.5 / span {
        // Uniform proposal; the density varies by at most a factor e^{1/2}.
        let peak = if lo > 0.0 {
            lo
        } else if hi < 0.0 {
            hi
        } else {
            0.0
        };
        loop {
            let z = lo + w * rng.open01();
            if rng.open01().ln() <= 0.5 * (peak * peak - z * z) {
                return z;
            }
        }
    }
    if lo >= 0.0 {
        if lo > 6.0 {
            loop {
                let z = sample_upper_tail(lo, rng);
                if z <= hi {
                    return z;
                }
            }
        }
        let (pl, ph) = (norm_sf(lo), norm_sf(hi));
        let z = norm_isf(ph + rng.open01() * (pl - ph));
        return z.clamp(lo, hi);
    }
    if hi <= 0.0 {
        return -sample_standard_interval(-hi, -lo, rng);
    }
    // lo < 0 < hi with width above the uniform threshold.
    let mass = norm_cdf(hi) - norm_cdf(lo);
    if mass >= 0.2 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z >= lo && z <= hi {
                return z;
            }
        }
    }
    loop {
        let z = lo + w * rng.open01();
        if rng.open01().ln() <= -0.5 * z * z {
            return z;
        }
    }
}

/// Scalar normal `N(mean, sd²)` conditioned to avoid `(a, b)`.
pub fn sample_avoiding_interval(
    mean: f64,
    sd: f64,
    a: f64,
    b: f64,
    rng: &mut CounterRng,
) -> Result<(f64, Kernel)> {
    if b - a < DEGENERATE_WIDTH {
        let z: f64 = rng.sample(StandardNormal);
        return Ok((mean + sd * z, Kernel::Gaussian));
    }
    let alpha = (a - mean) / sd;
    let beta = (b - mean) / sd;
    // Mass of the forbidden set small: plain rejection is exact and cheap.
    let forbidden = if alpha == f64::NEG_INFINITY {
        norm_cdf(beta)
    } else {
        norm_cdf(beta) - norm_cdf(alpha)
    };
    if forbidden < 0.5 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z <= alpha || z >= beta {
                return Ok((mean + sd * z, Kernel::Rejection));
            }
        }
    }
    let lw_left = if alpha == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        log_norm_cdf(alpha)
    };
    let lw_right = log_norm_sf(beta);
    if lw_left == f64::NEG_INFINITY && lw_right == f64::NEG_INFINITY {
        return Err(Error::Impossible);
    }
    let p_left = 1.0 / (1.0 + (lw_right - lw_left).exp());
    let z = if rng.open01() < p_left {
        -sample_upper_tail(-alpha, rng)
    } else {
        sample_upper_tail(beta, rng)
    };
    Ok((mean + sd * z, Kernel::Exact))
}

/// Order of colour classes within one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SweepOrder {
    /// Even sites, then odd sites.
    #[default]
    Checkerboard,
    /// Even, odd, even: a reversible kernel.
    Palindrome,
}

/// Optional moves added to each sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainOptions {
    /// Line moves along eigenmodes with every per-axis index `<= mode_cutoff`
    /// (0 disables them).
    pub mode_cutoff: usize,
    /// Random global sign flip when the conditioned law is symmetric.
    pub flips: bool,
    pub order: SweepOrder,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            mode_cutoff: 3,
            flips: true,
            order: SweepOrder::Checkerboard,
        }
    }
}

impl ChainOptions {
    /// The bare heat-bath sweep.
    pub fn plain() -> Self {
        ChainOptions {
            mode_cutoff: 0,
            flips: false,
            order: SweepOrder::Checkerboard,
        }
    }
}

/// Move counts accumulated by a chain.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainStats {
    pub gaussian: u64,
    pub exact: u64,
    pub rejection: u64,
    pub metropolis_sites: u64,
    pub mh: MhCounter,
    pub mode_moves: u64,
    pub flips: u64,
}

impl ChainStats {
    pub fn mh_acceptance(&self) -> Option<f64> {
        (self.mh.proposals > 0).then(|| self.mh.accepts as f64 / self.mh.proposals as f64)
    }
}

/// State of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub state: FieldState,
    pub sweep: u64,
    pub stream: Stream,
    pub stats: ChainStats,
}

struct Mode {
    values: Vec<f64>,
    eigen: f64,
    boundary_overlap: f64,
}

/// A conditioned model ready to run chains.
pub struct Conditioned {
    params: FieldParams,
    domain: Arc<LatticeDomain>,
    inner_n: Option<usize>,
    constraint: Vec<u8>,
    specs: Vec<Avoid>,
    boundary_value: f64,
    colors: [Vec<u32>; 2],
    modes: Vec<Mode>,
    options: ChainOptions,
    symmetric: bool,
    diag: f64,
}

impl Conditioned {
    /// `domain` is `Λ_n`; for the annulus clamp the chain runs on `Λ_{2n}`
    /// with `Λ_n` sitting in the middle.
    pub fn new(
        params: FieldParams,
        domain: Arc<LatticeDomain>,
        spec: &AvoidanceSpec,
        bc: BoundaryCondition,
        options: ChainOptions,
    ) -> Result<Self> {
        if params.spin > MAX_SPIN {
            return Err(config("spin dimension above 8 is not supported"));
        }
        spec.avoid.validate(params.spin)?;
        let region = spec
            .region
            .clone()
            .unwrap_or_else(|| domain.region().to_vec());
        if region.len() != domain.len() {
            return Err(config("avoidance region has wrong length"));
        }
        if !matches!(bc, BoundaryCondition::DirichletZero) && params.spin != 1 {
            return Err(config("clamp boundary modes need a scalar field"));
        }
        let mut specs = vec![spec.avoid];
        let (work, inner_n, constraint, boundary_value) = match bc {
            BoundaryCondition::DirichletZero => (
                domain.clone(),
                None,
                region.iter().map(|&r| r as u8).collect::<Vec<u8>>(),
                0.0,
            ),
            BoundaryCondition::ClampExact { level } => (
                domain.clone(),
                None,
                region.iter().map(|&r| r as u8).collect(),
                level,
            ),
            BoundaryCondition::ClampAnnulus { level } => {
                let big = Arc::new(LatticeDomain::full_box(domain.d(), 2 * domain.n())?);
                specs.push(Avoid::HalfLine { b: level });
                let mut c = vec![2u8; big.len()];
                for i in 0..domain.len() {
                    let j = big.index(&domain.coord(i)).unwrap();
                    c[j] = region[i] as u8;
                }
                (big, Some(domain.n()), c, 0.0)
            }
        };
        let mut colors = [Vec::new(), Vec::new()];
        for i in 0..work.len() {
            colors[work.parity(i)].push(i as u32);
        }
        let symmetric = matches!(bc, BoundaryCondition::DirichletZero) && spec.avoid.is_symmetric();
        let mut me = Conditioned {
            params,
            diag: params.diag(work.d()),
            domain: work,
            inner_n,
            constraint,
            specs,
            boundary_value,
            colors,
            modes: Vec::new(),
            options,
            symmetric,
        };
        me.build_modes();
        Ok(me)
    }

    fn build_modes(&mut self) {
        let cut = self.options.mode_cutoff.min(self.domain.side());
        if cut == 0 {
            return;
        }
        let d = self.domain.d();
        let side = self.domain.side();
        let basis = SineBasis::new(d, side, self.params.g, self.params.m2);
        let bsrc: Vec<f64> = (0..self.domain.len())
            .map(|i| self.params.g * self.boundary_value * self.domain.outer_degree(i) as f64)
            .collect();
        for t in 0..cut.pow(d as u32) {
            let mut flat = 0;
            let mut r = t;
            for _ in 0..d {
                flat = flat * side + r % cut;
                r /= cut;
            }
            let values: Vec<f64> = (0..self.domain.len())
                .map(|i| basis.mode_value(flat, i))
                .collect();
            let boundary_overlap = values.iter().zip(&bsrc).map(|(a, b)| a * b).sum();
            self.modes.push(Mode {
                values,
                eigen: basis.eigenvalue(flat),
                boundary_overlap,
            });
        }
    }

    /// Domain the chain runs on.
    pub fn work_domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    /// `n` of the inner box when running with the annulus clamp.
    pub fn inner_n(&self) -> Option<usize> {
        self.inner_n
    }

    pub fn params(&self) -> FieldParams {
        self.params
    }

    /// Constraint in force at site `i` of the working domain.
    pub fn constraint_at(&self, i: usize) -> Option<Avoid> {
        match self.constraint[i] {
            0 => None,
            c => Some(self.specs[c as usize - 1]),
        }
    }

    /// Feasible constant start `(R + 1) e_1`.
    pub fn initial_state(&self, stream: Stream) -> ChainState {
        let level = self
            .specs
            .iter()
            .map(|a| a.feasible_level())
            .fold(f64::NEG_INFINITY, f64::max)
            .max(1.0);
        let mut v = [0.0; MAX_SPIN];
        v[0] = level;
        ChainState {
            state: FieldState::constant(self.params, self.domain.clone(), &v[..self.params.spin]),
            sweep: 0,
            stream,
            stats: ChainStats::default(),
        }
    }

    /// Chain started from a given configuration on the working domain.
    pub fn chain_from(&self, state: FieldState, stream: Stream) -> Result<ChainState> {
        if state.domain.len() != self.domain.len() || state.params.spin != self.params.spin {
            return Err(config("state does not match the working domain"));
        }
        self.check(&state)?;
        Ok(ChainState {
            state,
            sweep: 0,
            stream,
            stats: ChainStats::default(),
        })
    }

    /// First site violating the constraint, if any.
    pub fn violation(&self, state: &FieldState) -> Option<usize> {
        (0..self.domain.len()).find(|&i| match self.constraint_at(i) {
            Some(a) => !a.admits(state.at(i)),
            None => false,
        })
    }

    fn check(&self, state: &FieldState) -> Result<()> {
        if let Some(i) = self.violation(state) {
            return Err(Error::Constraint {
                site: i,
                detail: "value inside the forbidden set".into(),
            });
        }
        if !state.is_finite() {
            return Err(Error::Constraint {
                site: 0,
                detail: "non-finite value".into(),
            });
        }
        Ok(())
    }

    /// Conditional law of site `i` given the rest of `state`.
    pub fn site_descriptor(&self, state: &FieldState, i: usize) -> SiteConditional {
        let mut s = [0.0; MAX_SPIN];
        self.neighbor_sum(state, i, &mut s);
        site_conditional(
            self.params,
            self.domain.d(),
            &s[..self.params.spin],
            self.constraint_at(i),
        )
    }

    #[inline]
    fn neighbor_sum(&self, st: &FieldState, i: usize, s: &mut [f64; MAX_SPIN]) {
        let n = self.params.spin;
        s[..n].iter_mut().for_each(|v| *v = 0.0);
        for &j in self.domain.neighbors(i) {
            if j == OUTSIDE {
                s[0] += self.boundary_value;
            } else {
                let base = j as usize * n;
                for k in 0..n {
                    s[k] += st.values[base + k];
                }
            }
        }
    }

    fn update_color(&self, chain: &mut ChainState, color: usize, pass: u32) -> Result<()> {
        let n = self.params.spin;
        let sd = 1.0 / self.diag.sqrt();
        let scale = self.params.g / self.diag;
        let mut s = [0.0; MAX_SPIN];
        let mut mean = [0.0; MAX_SPIN];
        let stream = chain.stream.split(pass as u64);
        let sweep = chain.sweep as u32;
        for &site in &self.colors[color] {
            let i = site as usize;
            self.neighbor_sum(&chain.state, i, &mut s);
            for k in 0..n {
                mean[k] = scale * s[k];
            }
            let mut rng = stream.rng(site, sweep);
            let avoid = self.constraint_at(i);
            let out = &mut chain.state.values[i * n..(i + 1) * n];
            let kernel = draw_site(&mean[..n], sd, avoid, out, &mut rng, &mut chain.stats.mh)?;
            match kernel {
                Kernel::Gaussian => chain.stats.gaussian += 1,
                Kernel::Exact => chain.stats.exact += 1,
                Kernel::Rejection => chain.stats.rejection += 1,
                Kernel::Metropolis => chain.stats.metropolis_sites += 1,
            }
        }
        Ok(())
    }

    /// Update only the sites of one colour (a reversible block heat-bath kernel).
    pub fn half_sweep(&self, chain: &mut ChainState, color: usize) -> Result<()> {
        self.check(&chain.state)?;
        self.update_color(chain, color, 0)?;
        chain.sweep += 1;
        Ok(())
    }

    /// One full sweep plus the configured global moves.
    pub fn sweep(&self, chain: &mut ChainState) -> Result<()> {
        self.check(&chain.state)?;
        self.update_color(chain, 0, 0)?;
        self.update_color(chain, 1, 1)?;
        if self.options.order == SweepOrder::Palindrome {
            self.update_color(chain, 0, 2)?;
        }
        if !self.modes.is_empty() {
            self.mode_moves(chain);
        }
        if self.options.flips && self.symmetric {
            let mut rng = chain.stream.split(3).rng(u32::MAX, chain.sweep as u32);
            if rng.open01() < 0.5 {
                chain.state.values.iter_mut().for_each(|v| *v = -*v);
                chain.stats.flips += 1;
            }
        }
        chain.sweep += 1;
        self.check(&chain.state).map_err(|e| match e {
            Error::Constraint { site, .. } => Error::Constraint {
                site,
                detail: "violated after sweep".into(),
            },
            other => other,
        })
    }

    fn mode_moves(&self, chain: &mut ChainState) {
        let n = self.params.spin;
        let len = self.domain.len();
        let stream = chain.stream.split(4);
        let radial = n == 1 && self.symmetric;
        for (m, mode) in self.modes.iter().enumerate() {
            for k in 0..n {
                let key = (m * MAX_SPIN + k) as u32;
                let mut rng = stream.rng(key, chain.sweep as u32);
                let st = &mut chain.state;
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                if radial {
                    // Direction v(x)·sign(φ(x)); the sign pattern is frozen along the segment.
                    let mut dir = vec![0.0; len];
                    for i in 0..len {
                        let x = st.values[i];
                        let v = mode.values[i];
                        if v == 0.0 {
                            continue;
                        }
                        let sg = if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        dir[i] = v * sg;
                        let r = x.abs();
                        let rmin = match self.constraint_at(i) {
                            Some(a) => {
                                let (ca, cb) = a.scalar_cuts();
                                if cb - ca < DEGENERATE_WIDTH {
                                    0.0
                                } else if x > 0.0 {
                                    cb.max(0.0)
                                } else {
                                    (-ca).max(0.0)
                                }
                            }
                            None => 0.0,
                        };
                        if sg == 0.0 {
                            lo = 0.0;
                            hi = 0.0;
                            continue;
                        }
                        let c = (rmin - r) / v;
                        if v > 0.0 {
                            lo = lo.max(c);
                        } else {
                            hi = hi.min(c);
                        }
                    }
                    let (qa, qb) = self.quadratic_along(&st.values, &dir);
                    chain.stats.mode_moves += 1;
                    let c = sample_segment(qa, qb, lo, hi, &mut rng);
                    for i in 0..len {
                        st.values[i] += c * dir[i];
                    }
                } else {
                    for i in 0..len {
                        let v = mode.values[i];
                        if v == 0.0 {
                            continue;
                        }
                        let Some(a) = self.constraint_at(i) else {
                            continue;
                        };
                        let x = st.values[i * n + k];
                        let (ea, eb) = match a {
                            Avoid::Ball { radius } if n > 1 => {
                                let perp: f64 = (0..n)
                                    .filter(|&j| j != k)
                                    .map(|j| st.values[i * n + j].powi(2))
                                    .sum();
                                let rho2 = radius * radius - perp;
                                if rho2 <= 0.0 {
                                    continue;
                                }
                                let rho = rho2.sqrt();
                                (-rho, rho)
                            }
                            _ => a.scalar_cuts(),
                        };
                        if eb - ea < DEGENERATE_WIDTH {
                            continue;
                        }
                        // Excluded amplitudes: x + c v in (ea, eb).
                        let (c1, c2) = ((ea - x) / v, (eb - x) / v);
                        let (el, eh) = if c1 < c2 { (c1, c2) } else { (c2, c1) };
                        if eh <= 0.0 {
                            lo = lo.max(eh);
                        } else if el >= 0.0 {
                            hi = hi.min(el);
                        } else {
                            // Current point sits on the boundary of an excluded
                            // interval up to rounding; freeze the move.
                            lo = 0.0;
                            hi = 0.0;
                        }
                    }
                    let dot: f64 = (0..len)
                        .map(|i| mode.values[i] * st.values[i * n + k])
                        .sum();
                    let bover = if k == 0 { mode.boundary_overlap } else { 0.0 };
                    chain.stats.mode_moves += 1;
                    let c = sample_segment(mode.eigen, mode.eigen * dot - bover, lo, hi, &mut rng);
                    for i in 0..len {
                        st.values[i * n + k] += c * mode.values[i];
                    }
                }
            }
        }
    }

    /// Coefficients `(A, B)` of the energy `A c²/2 + B c` along `dir` (scalar fields).
    fn quadratic_along(&self, phi: &[f64], dir: &[f64]) -> (f64, f64) {
        let g = self.params.g;
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..self.domain.len() {
            let mut pw = self.diag * dir[i];
            for &j in self.domain.neighbors(i) {
                if j != OUTSIDE {
                    pw -= g * dir[j as usize];
                }
            }
            a += dir[i] * pw;
            b += phi[i] * pw;
            b -= g * self.boundary_value * self.domain.outer_degree(i) as f64 * dir[i];
        }
        (a, b)
    }

    /// Run a chain and hand every retained state to `sink`.
    pub fn run_with<F: FnMut(u64, &FieldState)>(
        &self,
        sweeps: u64,
        burn_in: u64,
        thin: u64,
        stream: Stream,
        mut sink: F,
    ) -> Result<RunSummary> {
        if sweeps <= burn_in {
            return Err(config("sweeps must exceed burn-in"));
        }
        let thin = thin.max(1);
        let mut chain = self.initial_state(stream);
        let origin = self.domain.origin();
        let mut trace = Vec::new();
        let mut rb_trace = Vec::new();
        let mut emitted = 0;
        for t in 0..sweeps {
            self.sweep(&mut chain)?;
            if t >= burn_in && (t - burn_in).is_multiple_of(thin) {
                trace.push(chain.state.norm_at(origin));
                if let Some(v) = conditional_abs_mean(&self.site_descriptor(&chain.state, origin)) {
                    rb_trace.push(v);
                }
                sink(t, &chain.state);
                emitted += 1;
            }
        }
        let (origin_norm, tau) = correlated_estimate(&trace);
        let acc = chain.stats.mh_acceptance();
        Ok(RunSummary {
            emitted,
            stats: chain.stats,
            origin_norm,
            tau_origin: tau,
            origin_norm_smoothed: (!rb_trace.is_empty()).then(|| correlated_estimate(&rb_trace).0),
            mh_acceptance: acc,
            flagged: acc.is_some_and(|a| a < 0.1),
        })
    }

    /// Run a chain and collect the retained states.
    pub fn run(
        &self,
        sweeps: u64,
        burn_in: u64,
        thin: u64,
        stream: Stream,
    ) -> Result<(Vec<FieldState>, RunSummary)> {
        let mut out = Vec::new();
        let summary = self.run_with(sweeps, burn_in, thin, stream, |_, s| out.push(s.clone()))?;
        Ok((out, summary))
    }
}

/// Sample `c` from `exp(-A c²/2 - B c)` restricted to `[lo, hi]`.
fn sample_segment(a: f64, b: f64, lo: f64, hi: f64, rng: &mut CounterRng) -> f64 {
    if !(a > 0.0) || hi <= lo {
        return 0.0_f64.clamp(lo.min(0.0), hi.max(0.0));
    }
    let sd = 1.0 / a.sqrt();
    let mu = -b / a;
    let z = sample_standard_interval((lo - mu) / sd, (hi - mu) / sd, rng);
    (mu + sd * z).clamp(lo, hi)
}

/// Diagnostics of a finished run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSummary {
    pub emitted: usize,
    pub stats: ChainStats,
    /// Mean of `|φ(0)|` over retained states, with autocorrelation-aware error.
    pub origin_norm: Estimate,
    pub tau_origin: f64,
    /// Same expectation estimated through `E[|φ(0)| | neighbours]` (scalar fields).
    pub origin_norm_smoothed: Option<Estimate>,
    pub mh_acceptance: Option<f64>,
    /// Metropolis acceptance below 0.1.
    pub flagged: bool,
}

/// Conditioned run with all retained states.
#[allow(clippy::too_many_arguments)]
pub fn run_conditioned(
    params: FieldParams,
    domain: Arc<LatticeDomain>,
    spec: &AvoidanceSpec,
    bc: BoundaryCondition,
    sweeps: u64,
    burn_in: u64,
    thin: u64,
    seed: u64,
) -> Result<(Vec<FieldState>, RunSummary)> {
    Conditioned::new(params, domain, spec, bc, ChainOptions::default())?.run(
        sweeps,
        burn_in,
        thin,
        Stream::new(seed),
    )
}

/// Spacing of the constraint family in probability estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Schedule {
    /// `K` bridges. Balls and intervals grow geometrically from
    /// `min_fraction` of their size; half-lines approach their end with
    /// geometrically shrinking gaps down to `min_fraction` of the initial gap.
    Geometric { bridges: usize, min_fraction: f64 },
    /// Each new level is the `target`-quantile of the current chain's
    /// hardest site, so every bridge ratio is close to `target`.
    Adaptive { target: f64, max_bridges: usize },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Geometric {
            bridges: 32,
            min_fraction: 1.0 / 256.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AisOptions {
    pub schedule: Schedule,
    /// Retained states per bridge.
    pub samples: usize,
    pub thin: u64,
    pub burn_in: u64,
    pub chain: ChainOptions,
}

impl Default for AisOptions {
    fn default() -> Self {
        AisOptions {
            schedule: Schedule::default(),
            samples: 400,
            thin: 2,
            burn_in: 50,
            chain: ChainOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BridgeRecord {
    /// Family parameter of the constraint reached by this bridge.
    pub fraction: f64,
    pub ratio: f64,
    pub ess: f64,
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AisEstimate {
    pub log_p: f64,
    pub se: f64,
    pub bridges: Vec<BridgeRecord>,
}

/// `log P[φ(x) ∉ I for all x in the region]` as a product of bridge ratios
/// along a family of growing constraints. The first bridge uses exact
/// independent draws; later ones use the conditioned chain of the previous
/// level, warm-started from a state that satisfies the next constraint.
pub fn estimate_log_avoid_probability(
    params: FieldParams,
    domain: Arc<LatticeDomain>,
    spec: &AvoidanceSpec,
    options: AisOptions,
    seed: u64,
) -> Result<AisEstimate> {
    spec.avoid.validate(params.spin)?;
    let region = spec
        .region
        .clone()
        .unwrap_or_else(|| domain.region().to_vec());
    let sites: Vec<usize> = (0..domain.len()).filter(|&i| region[i]).collect();
    let green = GreenOperator::new(domain.clone(), params);
    let max_var = sites.iter().map(|&i| green.value(i, i)).fold(0.0, f64::max);
    let floor = match spec.avoid {
        Avoid::HalfLine { b } => b - 8.0 * max_var.sqrt() - 1.0,
        _ => 0.0,
    };
    let stream = Stream::new(seed);
    // Family parameter of the hardest site in a state: the largest s with the
    // state admitted by every constraint in the family up to s.
    let reach = |st: &FieldState| -> f64 {
        let mut s_max = f64::INFINITY;
        for &i in &sites {
            let v = st.at(i);
            let s = match spec.avoid {
                Avoid::Ball { radius } => v.iter().map(|x| x * x).sum::<f64>().sqrt() / radius,
                Avoid::Interval { a, b } => {
                    let c = 0.5 * (a + b);
                    (v[0] - c).abs() / (0.5 * (b - a))
                }
                Avoid::HalfLine { b } => (v[0] - floor) / (b - floor),
            };
            s_max = s_max.min(s);
        }
        s_max
    };
    let fractions: Vec<f64> = match options.schedule {
        Schedule::Geometric {
            bridges,
            min_fraction,
        } => {
            let k = bridges.max(1);
            if k == 1 {
                vec![1.0]
            } else {
                match spec.avoid {
                    Avoid::HalfLine { .. } => (0..k)
                        .map(|j| {
                            if j + 1 == k {
                                1.0
                            } else {
                                1.0 - min_fraction.powf(j as f64 / (k - 2).max(1) as f64)
                            }
                        })
                        .collect(),
                    _ => (0..k)
                        .map(|j| min_fraction.powf((k - 1 - j) as f64 / (k - 1) as f64))
                        .collect(),
                }
            }
        }
        Schedule::Adaptive { .. } => Vec::new(),
    };
    let mut records = Vec::new();
    let mut log_p = 0.0;
    let mut var = 0.0;
    let push = |records: &mut Vec<BridgeRecord>,
                fraction: f64,
                hits: usize,
                ess: f64,
                total: usize,
                log_p: &mut f64,
                var: &mut f64|
     -> Result<()> {
        let ratio = hits as f64 / total as f64;
        records.push(BridgeRecord {
            fraction,
            ratio,
            ess,
            hits,
        });
        if ess < 10.0 || hits == 0 {
            return Err(Error::Unreliable {
                bridge: records.len() - 1,
                ess,
                partial: *log_p,
            });
        }
        *log_p += ratio.ln();
        *var += (1.0 - ratio) / (ratio * ess);
        Ok(())
    };
    // Bridge 0: exact draws.
    let basis = SineBasis::new(domain.d(), domain.side(), params.g, params.m2);
    let m = options.samples.max(10);
    let draws: Vec<FieldState> = (0..m)
        .map(|t| sample_with_basis(params, &domain, &basis, stream.split(0).split(t as u64)))
        .collect();
    let reaches: Vec<f64> = draws.iter().map(&reach).collect();
    let adaptive = |rs: &[f64], target: f64| -> f64 {
        let mut v = rs.to_vec();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let idx = ((target * v.len() as f64) as usize).min(v.len() - 1);
        v[idx].min(1.0)
    };
    let first = match options.schedule {
        Schedule::Geometric { .. } => fractions[0],
        Schedule::Adaptive { target, .. } => adaptive(&reaches, target),
    };
    let hits = reaches.iter().filter(|&&r| r >= first).count();
    push(&mut records, first, hits, m as f64, m, &mut log_p, &mut var)?;
    let mut warm = draws
        .into_iter()
        .zip(reaches)
        .rfind(|(_, r)| *r >= first)
        .map(|(s, _)| s)
        .unwrap();
    let mut current = first;
    let mut k = 1;
    loop {
        if current >= 1.0 {
            break;
        }
        let max_bridges = match options.schedule {
            Schedule::Geometric { bridges, .. } => bridges,
            Schedule::Adaptive { max_bridges, .. } => max_bridges,
        };
        if k >= max_bridges {
            return Err(Error::Unreliable {
                bridge: k,
                ess: 0.0,
                partial: log_p,
            });
        }
        let level_spec = AvoidanceSpec {
            avoid: spec.avoid.scaled(current, floor),
            region: Some(region.clone()),
        };
        let model = Conditioned::new(
            params,
            domain.clone(),
            &level_spec,
            BoundaryCondition::DirichletZero,
            options.chain,
        )?;
        let bstream = stream.split(k as u64 + 1);
        let mut chain = model.chain_from(warm.clone(), bstream)?;
        for _ in 0..options.burn_in {
            model.sweep(&mut chain)?;
        }
        let mut rs = Vec::with_capacity(m);
        let mut kept: Vec<FieldState> = Vec::new();
        for _ in 0..m {
            for _ in 0..options.thin.max(1) {
                model.sweep(&mut chain)?;
            }
            rs.push(reach(&chain.state));
            kept.push(chain.state.clone());
            if kept.len() > 8 {
                kept.remove(0);
            }
        }
        let next = match options.schedule {
            Schedule::Geometric { .. } => fractions[k],
            Schedule::Adaptive { target, .. } => adaptive(&rs, target).max(current),
        };
        let ind: Vec<f64> = rs.iter().map(|&r| (r >= next) as u8 as f64).collect();
        let hits = ind.iter().filter(|&&v| v > 0.0).count();
        let tau = integrated_autocorr_time(&ind);
        let ess = m as f64 / tau;
        push(&mut records, next, hits, ess, m, &mut log_p, &mut var)?;
        // Warm start for the next level: the latest retained state admitted by it.
        warm = match kept.iter().rev().find(|s| reach(s) >= next) {
            Some(s) => s.clone(),
            None => {
                let mut s = chain.state.clone();
                let mut extra = 0;
                while reach(&s) < next {
                    model.sweep(&mut chain)?;
                    s = chain.state.clone();
                    extra += 1;
                    if extra > 100 * m {
                        return Err(Error::Unreliable {
                            bridge: k,
                            ess,
                            partial: log_p,
                        });
                    }
                }
                s
            }
        };
        current = next;
        k += 1;
    }
    Ok(AisEstimate {
        log_p,
        se: var.sqrt(),
        bridges: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use std::vec::Vec;

    #[test]
    fn conditional_mean_and_variance() {
        let p = FieldParams::new(1, 0.0, 1.0).unwrap();
        let c = site_conditional(p, 2, &[4.0], None);
        assert!((c.mean[0] - 1.0).abs() < 1e-15);
        assert!((c.var - 0.25).abs() < 1e-15);
    }

    #[test]
    fn degenerate_interval_is_unconstrained() {
        let mut rng = Stream::new(1).rng(0, 0);
        let (_, k) = sample_avoiding_interval(0.0, 1.0, 0.0, 1e-15, &mut rng).unwrap();
        assert_eq!(k, Kernel::Gaussian);
    }

    #[test]
    fn impossible_constraint_errors() {
        // Both pieces are astronomically far: the mass of each is zero in log space only at infinity.
        let mut rng = Stream::new(1).rng(0, 0);
        let r = sample_avoiding_interval(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY, &mut rng);
        assert_eq!(r, Err(Error::Impossible));
    }

    #[test]
    fn halfline_mean_matches_quadrature() {
        // I = (-inf, b) with the unconstrained mean at b.
        let p = FieldParams::new(1, 0.0, 1.0).unwrap();
        let desc = site_conditional(p, 2, &[8.0], Some(Avoid::HalfLine { b: 2.0 }));
        let kappa = 1.0 / desc.var;
        let num = integrate(
            |x| x * (-kappa * (x - 2.0) * (x - 2.0) / 2.0).exp(),
            2.0,
            12.0,
            1e-13,
            0.0,
        )
        .value;
        let den = integrate(
            |x| (-kappa * (x - 2.0) * (x - 2.0) / 2.0).exp(),
            2.0,
            12.0,
            1e-13,
            0.0,
        )
        .value;
        let oracle = num / den;
        assert!((oracle - (2.0 + (2.0 / (core::f64::consts::PI * kappa)).sqrt())).abs() < 1e-10);
        let stream = Stream::new(9);
        let xs: Vec<f64> = (0..200_000u32)
            .map(|t| sample_site(&desc, None, &mut stream.rng(t, 0)).unwrap().0[0])
            .collect();
        let e = crate::stats::iid_estimate(&xs);
        assert!(
            (e.mean - oracle).abs() < 4.0 * e.se,
            "{} vs {}",
            e.mean,
            oracle
        );
    }

    #[test]
    fn deep_tail_sampler_stays_in_tail() {
        let stream = Stream::new(4);
        let xs: Vec<f64> = (0..50_000u32)
            .map(|t| sample_upper_tail(9.0, &mut stream.rng(t, 0)))
            .collect();
        assert!(xs.iter().all(|&x| x >= 9.0));
        let (m, _) = crate::math::upper_tail_moments(9.0);
        let e = crate::stats::iid_estimate(&xs);
        assert!((e.mean - m).abs() < 4.0 * e.se);
    }

    #[test]
    fn interval_sampler_matches_moments() {
        let stream = Stream::new(8);
        for &(lo, hi) in &[
            (-0.3, 0.2),
            (0.5, 3.0),
            (7.0, 7.5),
            (-9.0, -8.99),
            (-1.0, 4.0),
            (2.0, 2.001),
        ] {
            let xs: Vec<f64> = (0..40_000u32)
                .map(|t| sample_standard_interval(lo, hi, &mut stream.rng(t, 1)))
                .collect();
            assert!(xs.iter().all(|&x| x >= lo && x <= hi));
            let num = integrate(|x| x * (-0.5 * x * x).exp(), lo, hi, 1e-300, 1e-13).value;
            let den = integrate(|x| (-0.5 * x * x).exp(), lo, hi, 1e-300, 1e-13).value;
            let e = crate::stats::iid_estimate(&xs);
            assert!(
                (e.mean - num / den).abs() < 4.0 * e.se + 1e-12,
                "[{lo},{hi}]"
            );
        }
    }

    #[test]
    fn symmetric_interval_draws_are_centred() {
        let stream = Stream::new(10);
        let xs: Vec<f64> = (0..1_000_000u32)
            .map(|t| {
                sample_avoiding_interval(0.0, 0.5, -1.0, 1.0, &mut stream.rng(t, 0))
                    .unwrap()
                    .0
            })
            .collect();
        let e = crate::stats::iid_estimate(&xs);
        assert!(e.mean.abs() < 4.0 * e.se);
        assert!(xs.iter().all(|&x| x.abs() >= 1.0));
    }

    #[test]
    fn planar_ball_radius_mean_matches_radial_quadrature() {
        let p = FieldParams::new(2, 0.0, 1.0).unwrap();
        let desc = site_conditional(p, 2, &[0.0, 0.0], Some(Avoid::Ball { radius: 1.0 }));
        let num = integrate(|r| r * r * (-2.0 * r * r).exp(), 1.0, 12.0, 1e-14, 0.0).value;
        let den = integrate(|r| r * (-2.0 * r * r).exp(), 1.0, 12.0, 1e-14, 0.0).value;
        let stream = Stream::new(12);
        let xs: Vec<f64> = (0..200_000u32)
            .map(|t| {
                let v = sample_site(&desc, None, &mut stream.rng(t, 0)).unwrap().0;
                (v[0] * v[0] + v[1] * v[1]).sqrt()
            })
            .collect();
        let e = crate::stats::iid_estimate(&xs);
        assert!((e.mean - num / den).abs() < 4.0 * e.se);
    }

    #[test]
    fn metropolis_kernel_preserves_law() {
        // Far-out ball: acceptance of plain rejection is negligible.
        let p = FieldParams::new(2, 0.0, 1.0).unwrap();
        let desc = site_conditional(p, 2, &[0.0, 0.0], Some(Avoid::Ball { radius: 2.5 }));
        let num = integrate(|r| r * r * (-2.0 * r * r).exp(), 2.5, 14.0, 1e-300, 1e-13).value;
        let den = integrate(|r| r * (-2.0 * r * r).exp(), 2.5, 14.0, 1e-300, 1e-13).value;
        let stream = Stream::new(13);
        let mut cur = vec![2.6, 0.0];
        let mut xs = Vec::new();
        for t in 0..200_000u32 {
            let (v, k) = sample_site(&desc, Some(&cur), &mut stream.rng(t, 0)).unwrap();
            assert_eq!(k, Kernel::Metropolis);
            cur = v;
            xs.push((cur[0] * cur[0] + cur[1] * cur[1]).sqrt());
        }
        let (e, _) = correlated_estimate(&xs);
        assert!(
            (e.mean - num / den).abs() < 4.0 * e.se,
            "{} vs {}",
            e.mean,
            num / den
        );
    }

    #[test]
    fn runs_are_deterministic() {
        let dom = Arc::new(
            LatticeDomain::build(2, 8, crate::lattice::Shape::Disc { radius: 0.3 }).unwrap(),
        );
        let spec = AvoidanceSpec::on_region(Avoid::Interval { a: -1.0, b: 1.0 });
        let p = FieldParams::massless(1);
        let (a, _) = run_conditioned(
            p,
            dom.clone(),
            &spec,
            BoundaryCondition::DirichletZero,
            30,
            10,
            5,
            77,
        )
        .unwrap();
        let (b, _) = run_conditioned(
            p,
            dom,
            &spec,
            BoundaryCondition::DirichletZero,
            30,
            10,
            5,
            77,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn constraint_holds_and_corruption_is_detected() {
        let dom = Arc::new(
            LatticeDomain::build(2, 10, crate::lattice::Shape::Disc { radius: 0.3 }).unwrap(),
        );
        let spec = AvoidanceSpec::on_region(Avoid::Ball { radius: 1.0 });
        let p = FieldParams::massless(2);
        let model = Conditioned::new(
            p,
            dom.clone(),
            &spec,
            BoundaryCondition::DirichletZero,
            ChainOptions::default(),
        )
        .unwrap();
        let mut chain = model.initial_state(Stream::new(3));
        for _ in 0..50 {
            model.sweep(&mut chain).unwrap();
            assert!(model.violation(&chain.state).is_none());
        }
        chain
            .state
            .at_mut(dom.origin())
            .iter_mut()
            .for_each(|v| *v = 0.0);
        assert!(matches!(
            model.sweep(&mut chain),
            Err(Error::Constraint { .. })
        ));
    }

    #[test]
    fn annulus_clamp_runs_on_double_box() {
        let dom = Arc::new(LatticeDomain::full_box(2, 6).unwrap());
        let spec = AvoidanceSpec::on_region(Avoid::Interval { a: -3.0, b: 3.0 });
        let p = FieldParams::massive(1, 1.0);
        let model = Conditioned::new(
            p,
            dom,
            &spec,
            BoundaryCondition::ClampAnnulus { level: 3.0 },
            ChainOptions::default(),
        )
        .unwrap();
        assert_eq!(model.work_domain().side(), 13);
        let (states, _) = model.run(40, 10, 10, Stream::new(1)).unwrap();
        for s in &states {
            for i in 0..s.domain.len() {
                let c = s.domain.coord(i);
                if c[0].abs() > 3 || c[1].abs() > 3 {
                    assert!(s.at(i)[0] >= 3.0);
                } else {
                    assert!(s.at(i)[0].abs() >= 3.0);
                }
            }
        }
    }
}
