//! Estimation methods as `SELECTOR/INFERENCE` pairs plus local
//! randomization, and an analyzer that evaluates several of them on one
//! dataset while sharing bandwidths and fits.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bandwidth::{
    ak_bandwidth, estimate_m_hat, ik_bandwidth, BandwidthResult, BoundSource, CurvatureBound,
};
use crate::error::{RdError, Result};
use crate::inference::{cv_from_fit, flci_from_fit, rbc_from_fit, ContinuityFit};
use crate::local_randomization::{lr_analysis, GridSpec, PermutationConfig, WindowRule};
use crate::regression::Kernel;
use crate::sample::{EffectEstimate, InferenceMethod, RdSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Selector {
    Ik,
    /// AK with the data-driven bound.
    Ak,
    /// AK with a user-supplied bound.
    Akm,
}

impl Selector {
    pub fn label(self) -> &'static str {
        match self {
            Selector::Ik => "IK",
            Selector::Ak => "AK",
            Selector::Akm => "AKM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodId {
    Continuity { selector: Selector, inference: InferenceMethod },
    Lr { min_per_side: usize },
}

impl MethodId {
    pub const fn continuity(selector: Selector, inference: InferenceMethod) -> Self {
        MethodId::Continuity { selector, inference }
    }

    /// IK and AK(data-driven M) with each continuity interval, plus LR5.
    pub fn default_set() -> Vec<MethodId> {
        let mut out = Vec::new();
        for inference in [InferenceMethod::Cv, InferenceMethod::Rbc, InferenceMethod::Flci] {
            for selector in [Selector::Ik, Selector::Ak] {
                out.push(MethodId::continuity(selector, inference));
            }
        }
        out.push(MethodId::Lr { min_per_side: 5 });
        out
    }

    pub fn selector(&self) -> Option<Selector> {
        match self {
            MethodId::Continuity { selector, .. } => Some(*selector),
            MethodId::Lr { .. } => None,
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodId::Continuity { selector, inference } => write!(f, "{}/{}", selector.label(), inference),
            MethodId::Lr { min_per_side } => write!(f, "LR{min_per_side}"),
        }
    }
}

impl FromStr for MethodId {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let bad = || RdError::InvalidArgument(format!("unknown method '{s}'"));
        if let Some(rest) = t.strip_prefix("LR") {
            let min_per_side: usize = rest.parse().map_err(|_| bad())?;
            if min_per_side == 0 {
                return Err(bad());
            }
            return Ok(MethodId::Lr { min_per_side });
        }
        let (sel, inf) = t.split_once('/').ok_or_else(bad)?;
        let selector = match sel {
            "IK" => Selector::Ik,
            "AK" => Selector::Ak,
            "AKM" => Selector::Akm,
            _ => return Err(bad()),
        };
        let inference = match inf {
            "CV" => InferenceMethod::Cv,
            "RBC" => InferenceMethod::Rbc,
            "FLCI" => InferenceMethod::Flci,
            _ => return Err(bad()),
        };
        Ok(MethodId::Continuity { selector, inference })
    }
}

impl Serialize for MethodId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodOptions {
    pub kernel: Kernel,
    pub alpha: f64,
    /// Bound used by `AKM` selectors and the FLCI paired with them.
    pub m_bound: Option<f64>,
    pub grid: GridSpec,
    pub permutation: PermutationConfig,
    pub lr_window: WindowRule,
}

impl Default for MethodOptions {
    fn default() -> Self {
        Self {
            kernel: Kernel::Triangular,
            alpha: 0.05,
            m_bound: None,
            grid: GridSpec::default(),
            permutation: PermutationConfig::default(),
            lr_window: WindowRule::Strict,
        }
    }
}

/// Result of one method on one dataset. Failures are ordinary outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: MethodId,
    /// Bandwidth or LR window, when selection succeeded.
    pub bandwidth: Option<f64>,
    pub estimate: std::result::Result<EffectEstimate, String>,
}

/// Evaluates methods on one sample, computing each bandwidth, curvature
/// bound and local-linear fit at most once.
pub struct Analyzer<'a> {
    sample: &'a RdSample,
    options: MethodOptions,
    bandwidths: HashMap<Selector, BandwidthResult>,
    m_hat: Option<std::result::Result<CurvatureBound, String>>,
    fits: HashMap<Selector, std::result::Result<ContinuityFit, String>>,
}

impl<'a> Analyzer<'a> {
    pub fn new(sample: &'a RdSample, options: MethodOptions) -> Self {
        Self {
            sample,
            options,
            bandwidths: HashMap::new(),
            m_hat: None,
            fits: HashMap::new(),
        }
    }

    pub fn m_hat(&mut self) -> std::result::Result<CurvatureBound, String> {
        if self.m_hat.is_none() {
            self.m_hat = Some(estimate_m_hat(self.sample).map_err(|e| e.to_string()));
        }
        self.m_hat.clone().expect("set above")
    }

    fn user_bound(&self) -> std::result::Result<CurvatureBound, String> {
        let m = self
            .options
            .m_bound
            .ok_or_else(|| "AKM requires a user-supplied curvature bound".to_string())?;
        CurvatureBound::new(m, BoundSource::UserSupplied).map_err(|e| e.to_string())
    }

    /// Bandwidth selection result for a selector.
    pub fn bandwidth(&mut self, selector: Selector) -> &BandwidthResult {
        if !self.bandwidths.contains_key(&selector) {
            let kernel = self.options.kernel;
            let result = match selector {
                Selector::Ik => ik_bandwidth(self.sample, kernel),
                Selector::Ak | Selector::Akm => {
                    let algo = if selector == Selector::Ak {
                        crate::bandwidth::BandwidthAlgorithm::Ak
                    } else {
                        crate::bandwidth::BandwidthAlgorithm::Akm
                    };
                    let bound = if selector == Selector::Ak { self.m_hat() } else { self.user_bound() };
                    let fail = |reason: String| BandwidthResult {
                        algorithm: algo,
                        h: Err(reason),
                        diagnostics: Default::default(),
                    };
                    match bound {
                        Ok(b) => ak_bandwidth(self.sample, kernel, b).unwrap_or_else(|e| fail(e.to_string())),
                        Err(reason) => fail(reason),
                    }
                }
            };
            self.bandwidths.insert(selector, result);
        }
        &self.bandwidths[&selector]
    }

    fn fit(&mut self, selector: Selector) -> std::result::Result<ContinuityFit, String> {
        if !self.fits.contains_key(&selector) {
            let h = self.bandwidth(selector).h.clone();
            let fit = h.and_then(|h| ContinuityFit::new(self.sample, h, self.options.kernel).map_err(|e| e.to_string()));
            self.fits.insert(selector, fit);
        }
        self.fits[&selector].clone()
    }

    pub fn run(&mut self, method: MethodId) -> MethodOutcome {
        match method {
            MethodId::Lr { min_per_side } => {
                let o = &self.options;
                match lr_analysis(self.sample, min_per_side, o.lr_window, o.alpha, o.grid, &o.permutation) {
                    Ok(lr) => MethodOutcome {
                        method,
                        bandwidth: Some(lr.estimate.bandwidth),
                        estimate: Ok(lr.estimate),
                    },
                    Err(e) => MethodOutcome {
                        method,
                        bandwidth: None,
                        estimate: Err(e.to_string()),
                    },
                }
            }
            MethodId::Continuity { selector, inference } => {
                let bandwidth = self.bandwidth(selector).value();
                let estimate = self.continuity(selector, inference).map(|e| e.with_selector(selector.label()));
                MethodOutcome {
                    method,
                    bandwidth,
                    estimate,
                }
            }
        }
    }

    fn continuity(&mut self, selector: Selector, inference: InferenceMethod) -> std::result::Result<EffectEstimate, String> {
        let fit = self.fit(selector)?;
        let alpha = self.options.alpha;
        let out = match inference {
            InferenceMethod::Cv => cv_from_fit(&fit, alpha),
            InferenceMethod::Rbc => rbc_from_fit(self.sample, &fit, alpha),
            InferenceMethod::Flci => {
                let bound = if selector == Selector::Akm { self.user_bound() } else { self.m_hat() }?;
                flci_from_fit(self.sample, &fit, alpha, bound)
            }
            InferenceMethod::Lr => Err(RdError::InvalidArgument("LR is not a continuity interval".into())),
        };
        out.map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for s in ["IK/CV", "AK/RBC", "AKM/FLCI", "LR5", "LR10"] {
            let m: MethodId = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("CCT/CV".parse::<MethodId>().is_err());
        assert!("LR0".parse::<MethodId>().is_err());
        assert!("IK".parse::<MethodId>().is_err());
    }

    #[test]
    fn akm_without_bound_fails_softly() {
        let x: Vec<f64> = (0..60).map(|i| -1.0 + i as f64 / 30.0 + 0.001).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let s = RdSample::new(x, y, 0.0).unwrap();
        let mut a = Analyzer::new(&s, MethodOptions::default());
        let out = a.run("AKM/CV".parse().unwrap());
        assert!(out.estimate.is_err());
        assert!(a.run("IK/CV".parse().unwrap()).estimate.is_ok());
    }
}
