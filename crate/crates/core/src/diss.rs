//! Density-inclusive study size: the number of observations (sample `m`) or
//! expected observations (population `m_bar(n)`) within one Silverman
//! rule-of-thumb bandwidth of the cutoff.

use serde::{Deserialize, Serialize};

use crate::bandwidth::{rot_from_spread, silverman_rot};
use crate::error::{RdError, Result};
use crate::sample::RdSample;
use crate::special::{beta_inc, beta_inc_inv};

/// Beta(alpha, beta) variable `Z` mapped to `X = scale * Z + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSpec {
    pub alpha: f64,
    pub beta: f64,
    pub scale: f64,
    pub shift: f64,
}

impl BetaSpec {
    pub fn new(alpha: f64, beta: f64, scale: f64, shift: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(RdError::InvalidArgument(format!(
                "beta shape parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        if !(scale.is_finite() && shift.is_finite()) || scale == 0.0 {
            return Err(RdError::ZeroScale);
        }
        Ok(Self {
            alpha,
            beta,
            scale,
            shift,
        })
    }

    /// Beta on its natural `[0, 1]` scale.
    pub fn standard(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, 1.0, 0.0)
    }

    /// The same distribution mapped to `[-1, 1]` by `X = 2Z - 1`.
    pub fn on_unit_interval(self) -> Self {
        Self {
            scale: 2.0 * self.scale,
            shift: 2.0 * self.shift - 1.0,
            ..self
        }
    }

    /// Uniform running variable, Beta(1, 1).
    pub fn rv1() -> Self {
        Self::standard(1.0, 1.0).expect("valid shape")
    }

    /// Right-skewed running variable, Beta(2, 4).
    pub fn rv2() -> Self {
        Self::standard(2.0, 4.0).expect("valid shape")
    }

    /// Left-skewed, concentrated running variable, Beta(14, 7).
    pub fn rv3() -> Self {
        Self::standard(14.0, 7.0).expect("valid shape")
    }

    fn to_z(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = self.to_z(x);
        let p = beta_inc(self.alpha, self.beta, z.clamp(0.0, 1.0));
        if self.scale > 0.0 {
            p
        } else {
            1.0 - p
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = if self.scale > 0.0 { p } else { 1.0 - p };
        self.scale * beta_inc_inv(self.alpha, self.beta, p) + self.shift
    }

    pub fn mean(&self) -> f64 {
        self.scale * self.alpha / (self.alpha + self.beta) + self.shift
    }

    pub fn sd(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        self.scale.abs() * (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt()
    }

    pub fn iqr(&self) -> f64 {
        (self.quantile(0.75) - self.quantile(0.25)).abs()
    }

    /// Population spread `min(IQR / 1.34, sd)`.
    pub fn sigma_star(&self) -> f64 {
        crate::bandwidth::robust_spread(self.iqr(), self.sd())
    }
}

/// Regularized incomplete beta CDF of a (possibly transformed) Beta.
pub fn beta_cdf(spec: &BetaSpec, x: f64) -> f64 {
    spec.cdf(x)
}

/// Sample DISS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diss {
    pub m: usize,
    pub h_rot: f64,
}

/// `m = #{i : c - h_rot <= x_i <= c + h_rot}` with the sample
/// rule-of-thumb bandwidth. Points exactly at distance `h_rot` count.
pub fn diss_m(sample: &RdSample) -> Result<Diss> {
    let h_rot = silverman_rot(sample.x())?;
    let c = sample.cutoff();
    let m = sample
        .x()
        .iter()
        .filter(|&&x| x >= c - h_rot && x <= c + h_rot)
        .count();
    Ok(Diss { m, h_rot })
}

/// Population rule-of-thumb bandwidth `0.9 sigma* n^{-1/5}`.
pub fn population_h_rot(sigma_star: f64, n: usize) -> f64 {
    rot_from_spread(sigma_star, n)
}

/// `m_bar(n) = n (F(c + h) - F(c - h))`, unrounded.
pub fn population_diss(spec: &BetaSpec, cutoff: f64, n: usize, sigma_star: f64) -> f64 {
    let h = population_h_rot(sigma_star, n);
    n as f64 * (spec.cdf(cutoff + h) - spec.cdf(cutoff - h))
}

/// Smallest `n` with `m_bar(n) >= target - 0.5`.
///
/// `m_bar` grows like `n^{4/5}`, so an exponential bracket followed by
/// bisection finds the boundary.
pub fn n_for_target_diss(spec: &BetaSpec, cutoff: f64, sigma_star: f64, target: f64) -> Result<usize> {
    if !(target >= 1.0 && target.is_finite()) {
        return Err(RdError::InvalidArgument(format!("target DISS must be >= 1, got {target}")));
    }
    if !(sigma_star > 0.0) {
        return Err(RdError::DegenerateSample);
    }
    let goal = target - 0.5;
    let reached = |n: usize| population_diss(spec, cutoff, n, sigma_star) >= goal;
    let mut hi = 1usize;
    while !reached(hi) {
        if hi > 1 << 40 {
            return Err(RdError::InvalidArgument(format!(
                "target DISS {target} unreachable: no probability mass near the cutoff"
            )));
        }
        hi *= 2;
    }
    if hi == 1 {
        return Ok(1);
    }
    // invariant: !reached(lo), reached(hi)
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reached(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// One row of the study-size calibration table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub target: f64,
    pub n: usize,
    pub h_rot: f64,
    pub m_bar: f64,
}

/// Calibrate `n` and the population bandwidth for each target DISS on the
/// natural Beta scale with cutoff `Z = 0.5`.
pub fn calibration_table(spec: &BetaSpec, targets: &[f64]) -> Result<Vec<CalibrationRow>> {
    let sigma_star = spec.sigma_star();
    let cutoff = 0.5 * spec.scale + spec.shift;
    targets
        .iter()
        .map(|&target| {
            let n = n_for_target_diss(spec, cutoff, sigma_star, target)?;
            Ok(CalibrationRow {
                target,
                n,
                h_rot: population_h_rot(sigma_star, n),
                m_bar: population_diss(spec, cutoff, n, sigma_star),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diss_hand_example() {
        let s = RdSample::new(vec![-2.0, -1.0, 0.0, 1.0, 2.0], vec![0.0; 5], 0.0).unwrap();
        let d = diss_m(&s).unwrap();
        assert_eq!(d.m, 1);
        assert!((d.h_rot - 0.9736).abs() < 1e-4);
    }

    #[test]
    fn counts_only_the_central_cluster() {
        let s = RdSample::new(vec![-10.0, -0.01, -0.005, 0.0, 0.005, 0.01, 10.0], vec![0.0; 7], 0.0).unwrap();
        let d = diss_m(&s).unwrap();
        // IQR 0.015 -> h = 0.9 * 0.015 / 1.34 * 7^(-1/5) ~ 0.0068
        assert!((d.h_rot - 0.9 * 0.015 / 1.34 * 7f64.powf(-0.2)).abs() < 1e-15);
        assert_eq!(d.m, 3);
    }

    #[test]
    fn uniform_cdf_symmetry_and_support() {
        let u = BetaSpec::rv1().on_unit_interval();
        assert!((u.cdf(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(BetaSpec::rv2().cdf(1.0), 1.0);
        assert_eq!(BetaSpec::rv2().cdf(-3.0), 0.0);
    }

    #[test]
    fn sigma_star_values() {
        assert!((BetaSpec::rv1().sigma_star() - 0.288675).abs() < 1e-6);
        assert!((BetaSpec::rv2().sigma_star() - 0.178174).abs() < 1e-6);
        assert!((BetaSpec::rv3().sigma_star() - 0.100504).abs() < 1e-6);
        // mapping to [-1, 1] doubles the spread
        let x = BetaSpec::rv2().on_unit_interval();
        assert!((x.sigma_star() - 2.0 * 0.178174).abs() < 2e-6);
    }

    #[test]
    fn rv1_small_target() {
        let spec = BetaSpec::rv1();
        let m = population_diss(&spec, 0.5, 40, spec.sigma_star());
        assert!((m - 9.93).abs() < 0.01, "{m}");
        assert_eq!(m.round(), 10.0);
    }

    #[test]
    fn rv3_bandwidth() {
        let spec = BetaSpec::rv3();
        let s = spec.sigma_star();
        assert_eq!(population_diss(&spec, 0.5, 140, s).round(), 10.0);
        assert!((population_h_rot(s, 140) - 0.034).abs() < 5e-4);
    }

    #[test]
    fn search_returns_boundary() {
        let spec = BetaSpec::rv2();
        let s = spec.sigma_star();
        for target in [1.0, 10.0, 27.0, 44.0] {
            let n = n_for_target_diss(&spec, 0.5, s, target).unwrap();
            assert!(population_diss(&spec, 0.5, n, s) >= target - 0.5);
            if n > 1 {
                assert!(population_diss(&spec, 0.5, n - 1, s) < target - 0.5);
            }
        }
    }

    #[test]
    fn m_bar_growth_rate() {
        let spec = BetaSpec::rv2();
        let s = spec.sigma_star();
        let ratio = |n: usize| population_diss(&spec, 0.5, n, s) / (n as f64).powf(0.8);
        let (a, b) = (ratio(1_000_000), ratio(100_000_000));
        assert!((a / b - 1.0).abs() < 1e-3);
    }
}
