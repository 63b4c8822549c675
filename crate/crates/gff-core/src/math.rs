//! Scalar special functions: the standard normal distribution, its tails and
//! inverse, and truncated-normal moments.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked in
use num_traits::Float;

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// P[Z <= x].
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// P[Z > x].
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// Mills ratio P[Z > x] / pdf(x), stable for large positive x.
pub fn mills_ratio(x: f64) -> f64 {
    if x < 3.0 {
        return norm_sf(x) / norm_pdf(x);
    }
    // Continued fraction 1/(x + 1/(x + 2/(x + 3/(x + ...)))), modified Lentz.
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// log P[Z > x], finite for every finite x.
pub fn log_norm_sf(x: f64) -> f64 {
    if x == f64::INFINITY {
        f64::NEG_INFINITY
    } else if x < 3.0 {
        norm_sf(x).ln()
    } else {
        mills_ratio(x).ln() - 0.5 * x * x - LN_SQRT_2PI
    }
}

/// log P[Z <= x].
#[inline]
pub fn log_norm_cdf(x: f64) -> f64 {
    log_norm_sf(-x)
}

/// Inverse of the standard normal CDF (Wichura's AS241, PPND16).
#[allow(clippy::inconsistent_digit_grouping, clippy::excessive_precision)]
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33_430.575_583_588_13) * r
                + 67265.770_927_008_7)
                * r
                + 45921.953_931_549_87)
                * r
                + 13_731.693_765_509_46)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r
                + 39307.895_800_092_71)
                * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    quantile_tail(tail, q < 0.0)
}

/// Upper-tail quantile: x with P[Z > x] = p, accurate for tiny p.
pub fn norm_isf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    if p >= 1.0 {
        return f64::NEG_INFINITY;
    }
    if p > 0.075 {
        return -norm_quantile(p);
    }
    quantile_tail(p, false)
}

fn quantile_tail(tail: f64, lower: bool) -> f64 {
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if lower {
        -val
    } else {
        val
    }
}

/// Mean and variance of a standard normal restricted to [c, inf).
pub fn upper_tail_moments(c: f64) -> (f64, f64) {
    if c < -40.0 {
        return (0.0, 1.0);
    }
    let lambda = 1.0 / mills_ratio(c);
    let var = if c > 8.0 {
        // 1 + c*lambda - lambda^2 cancels badly; integrate the shifted tail
        // directly: with u = z - c the weight is exp(-c u - u²/2).
        let w = |k: i32| move |u: f64| u.powi(k) * (-c * u - 0.5 * u * u).exp();
        let top = 60.0 / c;
        let i0 = crate::quad::integrate(w(0), 0.0, top, 0.0, 1e-14).value;
        let i1 = crate::quad::integrate(w(1), 0.0, top, 0.0, 1e-14).value;
        let i2 = crate::quad::integrate(w(2), 0.0, top, 0.0, 1e-14).value;
        let m1 = i1 / i0;
        i2 / i0 - m1 * m1
    } else {
        1.0 + c * lambda - lambda * lambda
    };
    (lambda, var)
}

/// log(e^a + e^b) without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
