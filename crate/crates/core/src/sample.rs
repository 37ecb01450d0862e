//! Domain types shared by every estimator: the RD sample, its partition at
//! the cutoff, and the effect estimate returned by interval procedures.
//!
//! Ties at the cutoff follow the sharp design `D = 1[x >= c]`: an observation
//! with `x == c` is treated (above). Score data often has such ties.

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result, Side};

/// Paired running-variable / response observations with a cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct RdSample {
    x: Vec<f64>,
    y: Vec<f64>,
    cutoff: f64,
}

impl RdSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>, cutoff: f64) -> Result<Self> {
        check_inputs(&x, &y, cutoff)?;
        Ok(Self { x, y, cutoff })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Treatment indicator for observation `i`.
    pub fn treated(&self, i: usize) -> bool {
        self.x[i] >= self.cutoff
    }

    pub fn side_of(&self, i: usize) -> Side {
        if self.treated(i) {
            Side::Above
        } else {
            Side::Below
        }
    }

    pub fn split(&self) -> SideSplit {
        let mut below = Vec::new();
        let mut above = Vec::new();
        for (i, &xi) in self.x.iter().enumerate() {
            if xi >= self.cutoff {
                above.push(i);
            } else {
                below.push(i);
            }
        }
        SideSplit { below, above }
    }

    /// Returns a copy with every response shifted by `delta`.
    pub fn with_shifted_y(&self, delta: f64) -> Result<Self> {
        Self::new(
            self.x.clone(),
            self.y.iter().map(|v| v + delta).collect(),
            self.cutoff,
        )
    }

    /// Returns a sample with the same running variable and new responses.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y, self.cutoff)
    }

    /// Sub-sample restricted to the given indices (order preserved).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| self.x[i]).collect(),
            indices.iter().map(|&i| self.y[i]).collect(),
            self.cutoff,
        )
    }
}

fn check_inputs(x: &[f64], y: &[f64], cutoff: f64) -> Result<()> {
    if x.len() != y.len() {
        return Err(RdError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(RdError::EmptySample);
    }
    for (i, (a, b)) in x.iter().zip(y).enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(RdError::NonFinite { index: i });
        }
    }
    if !cutoff.is_finite() {
        return Err(RdError::InvalidArgument(format!("cutoff {cutoff} is not finite")));
    }
    Ok(())
}

/// Partition of observation indices at the cutoff.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideSplit {
    pub below: Vec<usize>,
    pub above: Vec<usize>,
}

impl SideSplit {
    pub fn side(&self, side: Side) -> &[usize] {
        match side {
            Side::Below => &self.below,
            Side::Above => &self.above,
        }
    }

    pub fn count(&self, side: Side) -> usize {
        self.side(side).len()
    }

    /// The first side found to be empty, if any. This is a warning-level
    /// condition: estimators turn it into `RdError::EmptySide`.
    pub fn empty_side(&self) -> Option<Side> {
        if self.below.is_empty() {
            Some(Side::Below)
        } else if self.above.is_empty() {
            Some(Side::Above)
        } else {
            None
        }
    }

    pub fn require_both_sides(&self) -> Result<()> {
        match self.empty_side() {
            Some(side) => Err(RdError::EmptySide(side)),
            None => Ok(()),
        }
    }
}

/// Validate raw vectors and partition them at the cutoff.
///
/// Errors on non-finite values or mismatched lengths. An empty side is not an
/// error here; inspect [`SideSplit::empty_side`].
pub fn validate(x: &[f64], y: &[f64], cutoff: f64) -> Result<SideSplit> {
    check_inputs(x, y, cutoff)?;
    let sample = RdSample {
        x: x.to_vec(),
        y: y.to_vec(),
        cutoff,
    };
    Ok(sample.split())
}

/// Map the running variable through `x' = a x + b` (cutoff mapped the same
/// way, responses untouched).
pub fn affine_transform(sample: &RdSample, a: f64, b: f64) -> Result<RdSample> {
    if a == 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(RdError::ZeroScale);
    }
    RdSample::new(
        sample.x.iter().map(|v| a * v + b).collect(),
        sample.y.clone(),
        a * sample.cutoff + b,
    )
}

/// Inference technique that produced an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InferenceMethod {
    #[serde(rename = "CV")]
    Cv,
    #[serde(rename = "RBC")]
    Rbc,
    #[serde(rename = "FLCI")]
    Flci,
    #[serde(rename = "LR")]
    Lr,
}

impl std::fmt::Display for InferenceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            InferenceMethod::Cv => "CV",
            InferenceMethod::Rbc => "RBC",
            InferenceMethod::Flci => "FLCI",
            InferenceMethod::Lr => "LR",
        };
        f.write_str(s)
    }
}

/// Point estimate and confidence interval for the jump at the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    /// Reported point estimate: the conventional estimate for CV/FLCI, the
    /// bias-corrected estimate for RBC, the difference in means for LR.
    pub tau_hat: f64,
    /// Conventional (uncorrected) estimate, kept for RBC diagnostics.
    pub tau_conventional: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    /// Bandwidth for continuity methods, window half-width for LR.
    pub bandwidth: f64,
    pub selector: String,
    pub inference: InferenceMethod,
}

impl EffectEstimate {
    pub fn width(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.ci_lower + self.ci_upper)
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }

    pub fn with_selector(mut self, selector: impl Into<String>) -> Self {
        self.selector = selector.into();
        self
    }

    /// Label in the `SELECTOR/INFERENCE` form used in reports.
    pub fn label(&self) -> String {
        format!("{}/{}", self.selector, self.inference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_treats_ties_as_above() {
        let s = RdSample::new(vec![-1.0, 0.0, 1.0], vec![0.0; 3], 0.0).unwrap();
        let split = s.split();
        assert_eq!(split.below, vec![0]);
        assert_eq!(split.above, vec![1, 2]);
        assert_eq!(split.empty_side(), None);
    }

    #[test]
    fn validate_rejects_nan() {
        let err = validate(&[-1.0, f64::NAN], &[0.0, 0.0], 0.0).unwrap_err();
        assert_eq!(err, RdError::NonFinite { index: 1 });
        let err = validate(&[-1.0, 0.0], &[0.0], 0.0).unwrap_err();
        assert!(matches!(err, RdError::LengthMismatch { .. }));
    }

    #[test]
    fn validate_flags_empty_side() {
        let split = validate(&[1.0, 2.0, 3.0], &[0.0; 3], 0.0).unwrap();
        assert!(split.below.is_empty());
        assert_eq!(split.above, vec![0, 1, 2]);
        assert_eq!(split.empty_side(), Some(Side::Below));
        assert_eq!(split.require_both_sides(), Err(RdError::EmptySide(Side::Below)));
    }

    #[test]
    fn affine_maps_beta_scale_to_symmetric_support() {
        let s = RdSample::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 3.0], 0.5).unwrap();
        let t = affine_transform(&s, 2.0, -1.0).unwrap();
        assert_eq!(t.x(), &[-1.0, 0.0, 1.0]);
        assert_eq!(t.cutoff(), 0.0);
        assert_eq!(t.y(), s.y());
        assert_eq!(affine_transform(&s, 1.0, 0.0).unwrap(), s);
        assert_eq!(affine_transform(&s, 0.0, 1.0), Err(RdError::ZeroScale));
    }
}
