//! Small Monte Carlo summaries: running moments, autocorrelation times and
//! standard errors for correlated sequences.

use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked in
use num_traits::Float;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }
    pub fn count(&self) -> usize {
        self.n
    }
    pub fn mean(&self) -> f64 {
        self.mean
    }
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
    /// Standard error assuming independent samples.
    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean,
            se: (self.variance() / self.n.max(1) as f64).sqrt(),
            count: self.n,
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Estimate for independent samples.
pub fn iid_estimate(xs: &[f64]) -> Estimate {
    let mut r = Running::default();
    xs.iter().for_each(|&x| r.push(x));
    r.estimate()
}

/// Integrated autocorrelation time with Sokal's self-consistent window (c = 6).
pub fn integrated_autocorr_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(xs);
    let c0: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = (0..n - lag)
            .map(|i| (xs[i] - m) * (xs[i + lag] - m))
            .sum::<f64>()
            / n as f64;
        tau += 2.0 * c / c0;
        if (lag as f64) >= 6.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Estimate for a correlated sequence, inflating the variance by the
/// integrated autocorrelation time.
pub fn correlated_estimate(xs: &[f64]) -> (Estimate, f64) {
    let base = iid_estimate(xs);
    let tau = integrated_autocorr_time(xs);
    (
        Estimate {
            se: base.se * tau.sqrt(),
            ..base
        },
        tau,
    )
}

/// Least-squares slope of y against x.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Sample covariance of two equally long sequences.
pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (x.len() as f64 - 1.0)
}

/// Standard error of a sample covariance estimate (delta method on the
/// product of centred values).
pub fn covariance_estimate(x: &[f64], y: &[f64]) -> Estimate {
    let mx = mean(x);
    let my = mean(y);
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    iid_estimate(&prods)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let e = iid_estimate(&xs);
        let m = mean(&xs);
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
        assert!((e.mean - m).abs() < 1e-15);
        assert!((e.se - (v / 5.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn ar1_autocorrelation_time() {
        // AR(1) with coefficient r has tau = (1 + r) / (1 - r).
        let r = 0.8;
        let mut rng = crate::rng::Stream::new(3).rng(0, 0);
        let mut x = 0.0;
        let mut xs = Vec::new();
        for _ in 0..200_000 {
            let z: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
            x = r * x + z;
            xs.push(x);
        }
        let tau = integrated_autocorr_time(&xs);
        assert!((tau - 9.0).abs() < 1.0, "tau={tau}");
    }

    #[test]
    fn slope_of_line() {
        assert!((fitted_slope(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-15);
    }
}
