//! Mean functions, running-variable distributions and dataset generation for
//! the Monte Carlo study.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diss::BetaSpec;
use crate::error::{RdError, Result};
use crate::sample::RdSample;
use crate::special::beta_inc_inv;

/// Jump of every mean function at the cutoff.
pub const TRUE_TAU: f64 = 0.1;
/// Standard deviation of the additive normal noise.
pub const NOISE_SD: f64 = 0.1295;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanFunction {
    Mu1,
    Mu2,
    Mu3,
}

/// Squared plus function `max(x, 0)^2`.
fn splus(x: f64) -> f64 {
    let p = x.max(0.0);
    p * p
}

fn jump(x: f64) -> f64 {
    if x >= 0.0 {
        TRUE_TAU
    } else {
        0.0
    }
}

fn horner(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

// mu2 without its jump, and its second derivative
const MU2: [f64; 6] = [0.42, 0.84, -3.0, 7.99, -9.01, 3.56];
const MU2_D2: [f64; 4] = [-6.0, 47.94, -108.12, 71.2];
// mu3 pieces (below includes the 0.05 intercept, above the 0.15 one)
const MU3_BELOW: [f64; 4] = [0.05, 1.5, 3.2, 2.7];
const MU3_ABOVE: [f64; 4] = [0.15, -0.15, 2.5, -1.5];
const MU1_KNOTS: [(f64, f64); 4] = [(-0.2, -2.0), (0.2, 2.0), (0.4, -2.0), (0.7, 2.0)];

impl MeanFunction {
    pub const ALL: [MeanFunction; 3] = [MeanFunction::Mu1, MeanFunction::Mu2, MeanFunction::Mu3];

    pub fn label(self) -> &'static str {
        match self {
            MeanFunction::Mu1 => "mu1",
            MeanFunction::Mu2 => "mu2",
            MeanFunction::Mu3 => "mu3",
        }
    }

    /// Evaluate on `[-1, 1]`.
    pub fn eval(self, x: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(RdError::OutOfSupport(x));
        }
        Ok(self.eval_unchecked(x))
    }

    pub fn eval_unchecked(self, x: f64) -> f64 {
        match self {
            MeanFunction::Mu1 => {
                let smooth = (x + 1.0) * (x + 1.0)
                    + MU1_KNOTS.iter().map(|&(k, a)| a * splus(x - k)).sum::<f64>();
                smooth - 0.92 + jump(x)
            }
            MeanFunction::Mu2 => horner(&MU2, x) + jump(x),
            MeanFunction::Mu3 => {
                if x < 0.0 {
                    horner(&MU3_BELOW, x)
                } else {
                    horner(&MU3_ABOVE, x)
                }
            }
        }
    }

    /// Analytic `mu''(x)`; at knots and at the cutoff the right-hand value.
    pub fn second_derivative(self, x: f64) -> f64 {
        self.second_derivative_limit(x, false)
    }

    /// One-sided value of `mu''` at `x`: the limit from the left when
    /// `from_left`, otherwise from the right.
    pub fn second_derivative_limit(self, x: f64, from_left: bool) -> f64 {
        let past = |k: f64| if from_left { x > k } else { x >= k };
        match self {
            MeanFunction::Mu1 => {
                2.0 + MU1_KNOTS
                    .iter()
                    .map(|&(k, a)| if past(k) { 2.0 * a } else { 0.0 })
                    .sum::<f64>()
            }
            MeanFunction::Mu2 => horner(&MU2_D2, x),
            MeanFunction::Mu3 => {
                if past(0.0) {
                    2.0 * MU3_ABOVE[2] + 6.0 * MU3_ABOVE[3] * x
                } else {
                    2.0 * MU3_BELOW[2] + 6.0 * MU3_BELOW[3] * x
                }
            }
        }
    }

    /// Knots and cutoff where `mu''` may jump.
    pub fn breakpoints(self) -> Vec<f64> {
        match self {
            MeanFunction::Mu1 => {
                let mut k: Vec<f64> = MU1_KNOTS.iter().map(|p| p.0).collect();
                k.insert(1, 0.0);
                k
            }
            MeanFunction::Mu2 | MeanFunction::Mu3 => vec![0.0],
        }
    }

    /// `max |mu''|` over `[-1, 1]`, from the one-sided limits at piece ends
    /// and the interior stationary points of each piece's `mu''`.
    pub fn max_abs_second_derivative(self) -> f64 {
        let mut ends = vec![-1.0];
        ends.extend(self.breakpoints());
        ends.push(1.0);
        let mut best: f64 = 0.0;
        for piece in ends.windows(2) {
            let (lo, hi) = (piece[0], piece[1]);
            best = best
                .max(self.second_derivative_limit(lo, false).abs())
                .max(self.second_derivative_limit(hi, true).abs());
            if self == MeanFunction::Mu2 {
                // (mu2'')' = 47.94 - 216.24 x + 213.6 x^2
                let (a, b, c) = (3.0 * MU2_D2[3], 2.0 * MU2_D2[2], MU2_D2[1]);
                let disc = b * b - 4.0 * a * c;
                if disc >= 0.0 {
                    for r in [(-b + disc.sqrt()) / (2.0 * a), (-b - disc.sqrt()) / (2.0 * a)] {
                        if r > lo && r < hi {
                            best = best.max(self.second_derivative(r).abs());
                        }
                    }
                }
            }
        }
        best
    }

    /// Second-derivative bound quoted with the study design (2, 233.26, 16.2).
    pub fn curvature_bound_paper(self) -> f64 {
        match self {
            MeanFunction::Mu1 => 2.0,
            MeanFunction::Mu2 => 233.26,
            MeanFunction::Mu3 => 16.2,
        }
    }
}

impl std::fmt::Display for MeanFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunningVariable {
    Rv1,
    Rv2,
    Rv3,
}

impl RunningVariable {
    pub const ALL: [RunningVariable; 3] = [RunningVariable::Rv1, RunningVariable::Rv2, RunningVariable::Rv3];

    /// Distribution of `Z` on `[0, 1]`.
    pub fn beta(self) -> BetaSpec {
        match self {
            RunningVariable::Rv1 => BetaSpec::rv1(),
            RunningVariable::Rv2 => BetaSpec::rv2(),
            RunningVariable::Rv3 => BetaSpec::rv3(),
        }
    }

    /// Distribution of `X = 2Z - 1`.
    pub fn spec(self) -> BetaSpec {
        self.beta().on_unit_interval()
    }

    pub fn label(self) -> &'static str {
        match self {
            RunningVariable::Rv1 => "RV1",
            RunningVariable::Rv2 => "RV2",
            RunningVariable::Rv3 => "RV3",
        }
    }
}

impl std::fmt::Display for RunningVariable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// `Y = mu(X) + N(0, noise_sd^2)` with `X = 2Z - 1`, cutoff 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dgp {
    pub rv: RunningVariable,
    pub mu: MeanFunction,
    pub noise_sd: f64,
    pub cutoff: f64,
}

impl Dgp {
    pub fn new(rv: RunningVariable, mu: MeanFunction) -> Self {
        Self {
            rv,
            mu,
            noise_sd: NOISE_SD,
            cutoff: 0.0,
        }
    }

    /// Identifier such as `RV2mu2`.
    pub fn id(&self) -> String {
        format!("{}{}", self.rv, self.mu)
    }
}

/// Draw a dataset; the running variable comes from inverting the Beta CDF
/// at uniform draws.
pub fn generate_dataset<R: Rng + ?Sized>(dgp: &Dgp, n: usize, rng: &mut R) -> Result<RdSample> {
    if n == 0 {
        return Err(RdError::EmptySample);
    }
    let beta = dgp.rv.beta();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let z = beta_inc_inv(beta.alpha, beta.beta, u);
        let xi = 2.0 * z - 1.0;
        let e: f64 = rng.sample(StandardNormal);
        x.push(xi);
        y.push(dgp.mu.eval_unchecked(xi) + dgp.noise_sd * e);
    }
    RdSample::new(x, y, dgp.cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn intercepts_at_cutoff() {
        let below = |m: MeanFunction| m.eval(-1e-15).unwrap();
        assert!(below(MeanFunction::Mu1).abs() < 1e-12);
        assert!((MeanFunction::Mu1.eval(0.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((MeanFunction::Mu2.eval(0.0).unwrap() - 0.52).abs() < 1e-15);
        assert!((below(MeanFunction::Mu2) - 0.42).abs() < 1e-12);
        assert!((MeanFunction::Mu3.eval(0.0).unwrap() - 0.15).abs() < 1e-15);
        assert!((below(MeanFunction::Mu3) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn support_is_enforced() {
        assert_eq!(MeanFunction::Mu2.eval(1.5), Err(RdError::OutOfSupport(1.5)));
    }

    #[test]
    fn curvature_maxima() {
        assert_eq!(MeanFunction::Mu1.max_abs_second_derivative(), 2.0);
        assert!((MeanFunction::Mu2.max_abs_second_derivative() - 233.26).abs() < 1e-9);
        assert!((MeanFunction::Mu3.max_abs_second_derivative() - 9.8).abs() < 1e-9);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let dgp = Dgp::new(RunningVariable::Rv2, MeanFunction::Mu2);
        let a = generate_dataset(&dgp, 50, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = generate_dataset(&dgp, 50, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.x().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
