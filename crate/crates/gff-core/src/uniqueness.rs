//! Dobrushin-type uniqueness check for the massive conditioned field.
//!
//! The single-site law given the neighbours is a Gaussian with precision
//! `κ = 2d + m²` (unit coupling) and mean `ũ`, restricted to the complement
//! of the forbidden interval. The influence coefficients are bounded by its
//! variance, so the criterion reads `K = 2d · sup_ũ Var < 1`.

use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked in
use num_traits::Float;

use crate::error::{config, Result};
use crate::math::{log_norm_cdf, log_norm_sf, norm_cdf, norm_pdf, norm_sf, upper_tail_moments};

/// Gaussian `N(ũ, 1/κ)` restricted to `(-inf, a] ∪ [b, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruncatedGaussianSpec {
    /// Lower cut; `-inf` for a half-line.
    pub a: f64,
    pub b: f64,
    pub u_tilde: f64,
    pub kappa: f64,
}

impl TruncatedGaussianSpec {
    pub fn new(a: f64, b: f64, u_tilde: f64, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(config("precision must be positive"));
        }
        if !(a <= b) || b.is_nan() || !b.is_finite() || !u_tilde.is_finite() || a == f64::INFINITY {
            return Err(config("cuts must satisfy a <= b with b finite"));
        }
        Ok(TruncatedGaussianSpec {
            a,
            b,
            u_tilde,
            kappa,
        })
    }

    /// `M(q) = exp(-κ q²/2) / ∫_{I^c - ũ} exp(-κ η²/2) dη`.
    pub fn m(&self, q: f64) -> f64 {
        let s = self.kappa.sqrt();
        let mass = self.allowed_mass();
        s * norm_pdf(s * q) / mass
    }

    /// Standard-normal mass of the allowed set after standardizing.
    fn allowed_mass(&self) -> f64 {
        let s = self.kappa.sqrt();
        let left = if self.a == f64::NEG_INFINITY {
            0.0
        } else {
            norm_cdf(s * (self.a - self.u_tilde))
        };
        left + norm_sf(s * (self.b - self.u_tilde))
    }
}

/// Beyond this many standard deviations the closed form cancels badly.
const TAIL_GUARD: f64 = 8.0;

/// Variance of the restricted Gaussian.
///
/// Uses the closed form `(1/κ)(1 + βM(β) - αM(α) - (M(β) - M(α))²/κ)` with
/// `α = a - ũ`, `β = b - ũ`, or, when a cut lies more than 8 standard
/// deviations from the mean, the equivalent mixture of two one-sided tails
/// whose moments come from asymptotic series.
pub fn truncated_variance(spec: &TruncatedGaussianSpec) -> f64 {
    let s = spec.kappa.sqrt();
    if spec.b - spec.a < crate::conditioner::DEGENERATE_WIDTH {
        return 1.0 / spec.kappa;
    }
    let alpha = s * (spec.a - spec.u_tilde);
    let beta = s * (spec.b - spec.u_tilde);
    let half_line = spec.a == f64::NEG_INFINITY;
    let guarded = beta.abs() > TAIL_GUARD || (!half_line && alpha.abs() > TAIL_GUARD);
    if !guarded {
        let mass = if half_line {
            norm_sf(beta)
        } else {
            norm_cdf(alpha) + norm_sf(beta)
        };
        let mb = norm_pdf(beta) / mass;
        let ma = if half_line {
            0.0
        } else {
            norm_pdf(alpha) / mass
        };
        let aterm = if half_line { 0.0 } else { alpha * ma };
        let v = 1.0 + beta * mb - aterm - (mb - ma) * (mb - ma);
        return v / spec.kappa;
    }
    // Mixture of the upper tail [β, ∞) and the lower tail (-∞, α].
    let (mr, vr) = upper_tail_moments(beta);
    let lw_r = log_norm_sf(beta);
    let (ml, vl, lw_l) = if half_line {
        (0.0, 0.0, f64::NEG_INFINITY)
    } else {
        let (m, v) = upper_tail_moments(-alpha);
        (-m, v, log_norm_cdf(alpha))
    };
    let top = lw_r.max(lw_l);
    let (wr, wl) = ((lw_r - top).exp(), (lw_l - top).exp());
    let (pr, pl) = (wr / (wr + wl), wl / (wr + wl));
    let mean = pr * mr + pl * ml;
    let within = pr * vr + pl * vl;
    let between = pr * (mr - mean).powi(2) + pl * (ml - mean).powi(2);
    (within + between) / spec.kappa
}

/// Result of the criterion evaluation for an interval family.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DobrushinReport {
    pub d: usize,
    pub m2: f64,
    pub a: f64,
    pub b: f64,
    pub sup_var: f64,
    pub argmax: f64,
    /// `2d · sup_var`.
    pub k: f64,
    pub verdict: bool,
    /// Half-width of the searched `ũ` range.
    pub search_range: f64,
    pub grid_points: usize,
    /// Several separated grid maxima within 1e-6 of the supremum.
    pub multimodal: bool,
    pub refinement_steps: usize,
}

/// `sup_ũ Var` on a grid of 1000 points over `|ũ| <= 10R + 10/√κ`
/// (`R` the largest finite cut magnitude) plus the interval midpoint,
/// refined by golden sections around the best candidate.
pub fn dobrushin_k(d: usize, m2: f64, a: f64, b: f64) -> Result<DobrushinReport> {
    if d == 0 || !(m2 >= 0.0) {
        return Err(config("need d >= 1 and m2 >= 0"));
    }
    let kappa = 2.0 * d as f64 + m2;
    if m2 == 0.0 && a == f64::NEG_INFINITY {
        return Err(config("massless half-line family is not covered"));
    }
    TruncatedGaussianSpec::new(a, b, 0.0, kappa)?;
    let r = if a == f64::NEG_INFINITY {
        b.abs()
    } else {
        a.abs().max(b.abs())
    };
    let range = 10.0 * r + 10.0 / kappa.sqrt();
    let var_at = |u: f64| {
        truncated_variance(&TruncatedGaussianSpec {
            a,
            b,
            u_tilde: u,
            kappa,
        })
    };
    let points = 1000;
    let grid: Vec<f64> = (0..points)
        .map(|i| -range + 2.0 * range * i as f64 / (points - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&u| var_at(u)).collect();
    let (best, &vbest) = vals
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .unwrap();
    // Separated local maxima close to the top.
    let peaks: Vec<usize> = (0..points)
        .filter(|&i| {
            let l = if i == 0 {
                f64::NEG_INFINITY
            } else {
                vals[i - 1]
            };
            let r = if i + 1 == points {
                f64::NEG_INFINITY
            } else {
                vals[i + 1]
            };
            vals[i] >= l && vals[i] >= r && vals[i] >= vbest - 1e-6
        })
        .collect();
    let multimodal = peaks.windows(2).any(|w| w[1] > w[0] + 1);
    let step = grid[1] - grid[0];
    // For an interval the tails balance at the midpoint, where the peak can be
    // far narrower than the grid spacing.
    let mid = if a == f64::NEG_INFINITY {
        f64::NAN
    } else {
        0.5 * (a + b)
    };
    let (centre, vbest) = if mid.is_finite() && var_at(mid) > vbest {
        (mid, var_at(mid))
    } else {
        (grid[best], vbest)
    };
    let (argmax, sup_ref, steps) = golden_max(&var_at, centre - step, centre + step, 1e-12);
    let (argmax, sup_var) = if sup_ref >= vbest {
        (argmax, sup_ref)
    } else {
        (centre, vbest)
    };
    let k = 2.0 * d as f64 * sup_var;
    Ok(DobrushinReport {
        d,
        m2,
        a,
        b,
        sup_var,
        argmax,
        k,
        verdict: k < 1.0,
        search_range: range,
        grid_points: points,
        multimodal,
        refinement_steps: steps,
    })
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64, usize) {
    let r = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut steps = 0;
    while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) && steps < 200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
        steps += 1;
    }
    let x = 0.5 * (lo + hi);
    (x, f(x), steps)
}

/// Outcome of the threshold search for symmetric intervals `(-R, R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdReport {
    /// Largest radius (to the tolerance) with `sup Var < 1/(2d)`.
    pub r0: f64,
    /// The bracket did not contain a sign change; `r0` is an end point.
    pub at_bracket_end: bool,
    /// `2R / ∫_{(-R,R)^c} exp(-κη²/2) dη` at `r0`.
    pub sufficient_bound: f64,
    /// Largest radius for which `(1 + sufficient_bound(R)) / κ < 1/(2d)`.
    pub sufficient_threshold: f64,
}

/// The crude bound `2R / ∫_{(-R,R)^c} exp(-κη²/2) dη` on `L/κ`.
pub fn sufficient_bound(r: f64, kappa: f64) -> f64 {
    let s = kappa.sqrt();
    let mass = 2.0 * norm_sf(s * r) * (2.0 * core::f64::consts::PI / kappa).sqrt();
    2.0 * r / mass
}

fn bisect<F: Fn(f64) -> bool>(ok: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, bool) {
    if !ok(lo) {
        return (lo, true);
    }
    if ok(hi) {
        return (hi, true);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, false)
}

/// Bisection on `[1e-6, 10]` with tolerance `1e-4`.
pub fn find_r0(d: usize, m2: f64) -> Result<ThresholdReport> {
    let kappa = 2.0 * d as f64 + m2;
    let target = 1.0 / (2.0 * d as f64);
    let exact = |r: f64| {
        dobrushin_k(d, m2, -r, r)
            .map(|rep| rep.sup_var < target)
            .unwrap_or(false)
    };
    let (r0, at_end) = bisect(exact, 1e-6, 10.0, 1e-4);
    let (suff, _) = bisect(
        |r| (1.0 + sufficient_bound(r, kappa)) / kappa < target,
        1e-6,
        10.0,
        1e-6,
    );
    Ok(ThresholdReport {
        r0,
        at_bracket_end: at_end,
        sufficient_bound: sufficient_bound(r0, kappa),
        sufficient_threshold: suff,
    })
}

/// Second-moment bound for `N >= 2` and a centred ball.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VectorBound {
    /// `None` when the correction factor is not positive.
    pub bound: Option<f64>,
    pub criterion_holds: bool,
    /// `m² > 2d(N - 1)`, needed for the bound to drop below `1/(2d)` at small R.
    pub mass_precondition: bool,
}

/// `V <= N/κ · (1 - (R² e κ / N)^{N/2} / √(πN))^{-1}`.
pub fn vector_variance_bound(spin: usize, r: f64, m2: f64, d: usize) -> Result<VectorBound> {
    if spin < 2 {
        return Err(config("vector bound needs N >= 2"));
    }
    if !(r >= 0.0) || !(m2 >= 0.0) {
        return Err(config("need R >= 0 and m2 >= 0"));
    }
    let n = spin as f64;
    let kappa = 2.0 * d as f64 + m2;
    let corr = 1.0
        - (r * r * core::f64::consts::E * kappa / n).powf(n / 2.0)
            / (core::f64::consts::PI * n).sqrt();
    let bound = (corr > 0.0).then(|| n / kappa / corr);
    Ok(VectorBound {
        bound,
        criterion_holds: bound.is_some_and(|v| v < 1.0 / (2.0 * d as f64)),
        mass_precondition: m2 > 2.0 * d as f64 * (n - 1.0),
    })
}
