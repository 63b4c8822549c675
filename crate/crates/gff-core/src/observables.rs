//! Statistics of sampled fields: norm profiles, range holes, mesoscopic box
//! counters, popular-vote signs and spin correlations.
//!
//! Heights are normalized by the natural log of the domain's `n`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked in
use num_traits::Float;

use crate::conditioner::Avoid;
use crate::error::{config, Error, Result};
use crate::gaussian::{BoxHarmonic, FieldState, GreenOperator};
use crate::lattice::MesoGrid;
use crate::stats::{correlated_estimate, iid_estimate, Estimate};

fn log_n(state: &FieldState) -> f64 {
    (state.domain.n() as f64).ln()
}

/// Profile of `|φ(x)| / log n` at one probe site.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProfileEntry {
    pub site: usize,
    pub estimate: Estimate,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    /// The 4-SE interval misses the window `(2 - beta, 2 + beta)`.
    pub outside_window: bool,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and quantiles of `|φ(x)| / log n` over a stream of states. Errors
/// account for autocorrelation along the stream.
pub fn norm_profile(
    states: &[FieldState],
    probes: &[usize],
    beta: f64,
) -> Result<Vec<ProfileEntry>> {
    let first = states
        .first()
        .ok_or_else(|| Error::Empty("norm profile of an empty stream".into()))?;
    let ln = log_n(first);
    probes
        .iter()
        .map(|&x| {
            if x >= first.domain.len() {
                return Err(config("probe site outside the domain"));
            }
            let mut xs: Vec<f64> = states.iter().map(|s| s.norm_at(x) / ln).collect();
            let (estimate, _) = correlated_estimate(&xs);
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let lo = estimate.mean - 4.0 * estimate.se;
            let hi = estimate.mean + 4.0 * estimate.se;
            Ok(ProfileEntry {
                site: x,
                estimate,
                q10: quantile(&xs, 0.1),
                q50: quantile(&xs, 0.5),
                q90: quantile(&xs, 0.9),
                outside_window: hi < 2.0 - beta || lo > 2.0 + beta,
            })
        })
        .collect()
}

/// True iff `φ(x) + t` avoids `target` for every site within Euclidean
/// distance `radius` of `center`, i.e. `-t` is not hit by the range there.
pub fn hole_scan(
    state: &FieldState,
    center: usize,
    t: &[f64],
    radius: f64,
    target: Avoid,
) -> Result<bool> {
    let dom = &state.domain;
    let n = state.params.spin;
    if t.len() != n {
        return Err(config("shift has the wrong dimension"));
    }
    let c = dom.coord(center);
    let r = radius.floor() as i64;
    let d = dom.d();
    let lo = dom.lo();
    let hi = lo + dom.side() as i64 - 1;
    if (0..d).any(|k| c[k] - r < lo || c[k] + r > hi) {
        return Err(config("scan ball leaves the domain"));
    }
    let mut shifted = vec![0.0; n];
    for i in 0..dom.len() {
        let x = dom.coord(i);
        let dist2: i64 = (0..d).map(|k| (x[k] - c[k]).pow(2)).sum();
        if dist2 as f64 > radius * radius {
            continue;
        }
        for k in 0..n {
            shifted[k] = state.at(i)[k] + t[k];
        }
        if !target.admits(&shifted) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Thresholds for the box counters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CounterThresholds {
    /// Low boxes: `|h_B| < (2 - beta) log n`.
    pub beta: f64,
    /// High fluctuations: `sup_T |φ^B| > eta log n`.
    pub eta: f64,
    /// Window centre `s` for `h_B / log n`.
    pub window_center: Vec<f64>,
    /// Window half-width (Euclidean).
    pub window_delta: f64,
}

/// Integer counters over one grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoxCounters {
    pub boxes: usize,
    /// Low extension values at centres.
    pub low: usize,
    /// Boxes whose remainder exceeds `eta log n` somewhere in `T`.
    pub high_fluct: usize,
    /// Sign classes of `h_B`: all coordinates positive / all negative /
    /// mixed signs / some coordinate exactly zero.
    pub positive: usize,
    pub negative: usize,
    pub mixed: usize,
    pub zero: usize,
    /// Same classes for the field values `φ(x_B)`.
    pub field_positive: usize,
    pub field_negative: usize,
    pub field_mixed: usize,
    pub field_zero: usize,
    /// Low field values at centres: `|φ(x_B)| < (2 - beta) log n`.
    pub field_low: usize,
    /// `h_B / log n` within the window.
    pub window: usize,
}

#[derive(Clone, Copy)]
enum SignClass {
    Positive,
    Negative,
    Mixed,
    Zero,
}

fn sign_class(v: &[f64]) -> SignClass {
    if v.contains(&0.0) {
        SignClass::Zero
    } else if v.iter().all(|&x| x > 0.0) {
        SignClass::Positive
    } else if v.iter().all(|&x| x < 0.0) {
        SignClass::Negative
    } else {
        SignClass::Mixed
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Counters for one state and grid. `bh` fixes the offset set `T` (it must
/// contain the centre).
pub fn box_counters(
    state: &FieldState,
    grid: &MesoGrid,
    bh: &BoxHarmonic,
    th: &CounterThresholds,
) -> Result<BoxCounters> {
    if grid.is_empty() {
        return Err(Error::Empty("grid has no boxes".into()));
    }
    let n = state.params.spin;
    if th.window_center.len() != n {
        return Err(config("window centre has the wrong dimension"));
    }
    let zero = bh
        .points
        .iter()
        .position(|(o, _)| o.iter().all(|&c| c == 0))
        .ok_or_else(|| config("offset set must contain the centre"))?;
    let ln = log_n(state);
    let dom = &state.domain;
    let mut c = BoxCounters {
        boxes: grid.len(),
        ..Default::default()
    };
    for b in 0..grid.len() {
        let ext = bh.evaluate(state, grid, b);
        let hb = &ext[zero];
        let phib = state.at(grid.center_sites[b]);
        if norm(hb) < (2.0 - th.beta) * ln {
            c.low += 1;
        }
        if norm(phib) < (2.0 - th.beta) * ln {
            c.field_low += 1;
        }
        let mut sup = 0.0f64;
        for ((off, _), h) in bh.points.iter().zip(&ext) {
            let mut y = grid.centers[b];
            for k in 0..dom.d() {
                y[k] += off[k];
            }
            let phi = state.at(dom.index(&y).expect("box inside domain"));
            let r: f64 = phi
                .iter()
                .zip(h)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            sup = sup.max(r);
        }
        if sup > th.eta * ln {
            c.high_fluct += 1;
        }
        match sign_class(hb) {
            SignClass::Positive => c.positive += 1,
            SignClass::Negative => c.negative += 1,
            SignClass::Mixed => c.mixed += 1,
            SignClass::Zero => c.zero += 1,
        }
        match sign_class(phib) {
            SignClass::Positive => c.field_positive += 1,
            SignClass::Negative => c.field_negative += 1,
            SignClass::Mixed => c.field_mixed += 1,
            SignClass::Zero => c.field_zero += 1,
        }
        let dist: f64 = hb
            .iter()
            .zip(&th.window_center)
            .map(|(h, s)| (h / ln - s).powi(2))
            .sum::<f64>()
            .sqrt();
        if dist < th.window_delta {
            c.window += 1;
        }
    }
    Ok(c)
}

/// Fraction of boxes with all coordinates of `h_B` positive, over draws.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PositiveFraction {
    /// `N_+ / box count`.
    pub fraction: Estimate,
    /// `E[N_+²] / E[N_+]²`.
    pub second_moment_ratio: f64,
}

pub fn positive_box_fraction(
    draws: &[FieldState],
    grid: &MesoGrid,
    bh: &BoxHarmonic,
) -> Result<PositiveFraction> {
    if draws.is_empty() {
        return Err(Error::Empty("no draws".into()));
    }
    if grid.is_empty() {
        return Err(Error::Empty("grid has no boxes".into()));
    }
    let counts: Vec<f64> = draws
        .iter()
        .map(|s| {
            crate::gaussian::center_values(s, grid, bh)
                .iter()
                .filter(|h| matches!(sign_class(h), SignClass::Positive))
                .count() as f64
        })
        .collect();
    let m = grid.len() as f64;
    let fracs: Vec<f64> = counts.iter().map(|c| c / m).collect();
    let first = crate::stats::mean(&counts);
    let second = crate::stats::mean(&counts.iter().map(|c| c * c).collect::<Vec<_>>());
    Ok(PositiveFraction {
        fraction: iid_estimate(&fracs),
        second_moment_ratio: second / (first * first),
    })
}

/// Empirical `P[(h_B)_1 > 0, (h_B')_1 > 0]`.
pub fn pair_positivity(
    draws: &[FieldState],
    grid: &MesoGrid,
    bh: &BoxHarmonic,
    b1: usize,
    b2: usize,
) -> Result<Estimate> {
    if draws.is_empty() {
        return Err(Error::Empty("no draws".into()));
    }
    if b1 >= grid.len() || b2 >= grid.len() {
        return Err(config("box index out of range"));
    }
    let zero = bh
        .points
        .iter()
        .position(|(o, _)| o.iter().all(|&c| c == 0))
        .ok_or_else(|| config("offset set must contain the centre"))?;
    let hits: Vec<f64> = draws
        .iter()
        .map(|s| {
            let h1 = bh.evaluate(s, grid, b1)[zero][0];
            let h2 = bh.evaluate(s, grid, b2)[zero][0];
            (h1 > 0.0 && h2 > 0.0) as u8 as f64
        })
        .collect();
    Ok(iid_estimate(&hits))
}

/// Correlation of the centre values of two distinct boxes:
/// `Cov = G(x_B, x_B')`, `Var = G(x_B, x_B) - G_B(centre)`.
pub fn center_correlation(
    green: &GreenOperator,
    grid: &MesoGrid,
    bh: &BoxHarmonic,
    b1: usize,
    b2: usize,
) -> f64 {
    let (x, y) = (grid.center_sites[b1], grid.center_sites[b2]);
    let vx = green.value(x, x) - bh.center_green;
    let vy = green.value(y, y) - bh.center_green;
    green.value(x, y) / (vx * vy).sqrt()
}

/// Probability that both coordinates of a centred normal pair with
/// correlation `rho` are positive.
pub fn orthant_probability(rho: f64) -> f64 {
    0.25 + rho.asin() / (2.0 * core::f64::consts::PI)
}

/// Popular-vote sign of a grid and the interface between signed boxes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SignReport {
    /// Majority sign of the field at the centres; 0 on a tie.
    pub sign: i8,
    pub tie: bool,
    /// Adjacent box pairs where `h_B` changes sign.
    pub interface: Vec<(usize, usize)>,
    /// Boxes whose centre value carries the majority sign.
    pub good_centers: Vec<usize>,
    /// Fraction of boxes whose centre value opposes the majority.
    pub minority_fraction: f64,
    /// Fraction of boxes whose `h_B` opposes the majority.
    pub extension_minority_fraction: f64,
}

pub fn grid_sign_and_interface(
    state: &FieldState,
    grid: &MesoGrid,
    bh: &BoxHarmonic,
) -> Result<SignReport> {
    if state.params.spin != 1 {
        return Err(config("sign report needs a scalar field"));
    }
    if grid.is_empty() {
        return Err(Error::Empty("grid has no boxes".into()));
    }
    let h: Vec<f64> = crate::gaussian::center_values(state, grid, bh)
        .into_iter()
        .map(|v| v[0])
        .collect();
    let phi: Vec<f64> = grid.center_sites.iter().map(|&s| state.at(s)[0]).collect();
    let sign_from = |values: &[f64]| -> i8 {
        let plus = values.iter().filter(|&&v| v > 0.0).count();
        let minus = values.iter().filter(|&&v| v < 0.0).count();
        (plus as i64 - minus as i64).signum() as i8
    };
    let sign = sign_from(&phi);
    let interface = grid
        .adjacency
        .iter()
        .copied()
        .filter(|&(a, b)| h[a] * h[b] < 0.0)
        .collect();
    let s = sign as f64;
    let good_centers = (0..grid.len())
        .filter(|&b| phi[b] * s > 0.0)
        .collect::<Vec<_>>();
    let m = grid.len() as f64;
    let (minority_fraction, extension_minority_fraction) = if sign == 0 {
        (0.5, 0.5)
    } else {
        (
            phi.iter().filter(|&&v| v * s < 0.0).count() as f64 / m,
            h.iter().filter(|&&v| v * s < 0.0).count() as f64 / m,
        )
    };
    Ok(SignReport {
        sign,
        tie: sign == 0,
        interface,
        good_centers,
        minority_fraction,
        extension_minority_fraction,
    })
}

/// Two-point spin function for one pair of sites.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpinCorrelation {
    pub x: usize,
    pub y: usize,
    pub estimate: Estimate,
    /// States skipped because the field vanished at `x` or `y`.
    pub skipped: usize,
}

/// `E[σ(x)·σ(y)]` with `σ = φ/|φ|`, errors corrected for autocorrelation.
pub fn spin_correlation(
    states: &[FieldState],
    pairs: &[(usize, usize)],
) -> Result<Vec<SpinCorrelation>> {
    if states.is_empty() {
        return Err(Error::Empty("spin correlation of an empty stream".into()));
    }
    let len = states[0].domain.len();
    pairs
        .iter()
        .map(|&(x, y)| {
            if x >= len || y >= len {
                return Err(config("pair site outside the domain"));
            }
            let mut vals = Vec::with_capacity(states.len());
            let mut skipped = 0;
            for s in states {
                let (nx, ny) = (s.norm_at(x), s.norm_at(y));
                if nx == 0.0 || ny == 0.0 {
                    skipped += 1;
                    continue;
                }
                let dot: f64 = s.at(x).iter().zip(s.at(y)).map(|(a, b)| a * b).sum();
                vals.push((dot / (nx * ny)).clamp(-1.0, 1.0));
            }
            let estimate = if vals.is_empty() {
                Estimate::default()
            } else {
                correlated_estimate(&vals).0
            };
            Ok(SpinCorrelation {
                x,
                y,
                estimate,
                skipped,
            })
        })
        .collect()
}
