//! Regression discontinuity estimation for small studies.
//!
//! The crate computes the density-inclusive study size (DISS) of a sharp
//! RD design, local-linear estimates of the jump at the cutoff with IK and
//! AK bandwidths and CV, RBC and FLCI intervals, local-randomization
//! inference in a small window, and a Monte Carlo harness that evaluates
//! all of them on synthetic designs.
//!
//! Treatment is `x >= cutoff`; ties at the cutoff are treated.

pub mod bandwidth;
pub mod diss;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod local_randomization;
pub mod methods;
pub mod regression;
pub mod sample;
pub mod simulation;
pub mod special;
pub mod stats;

pub use bandwidth::{BandwidthAlgorithm, BandwidthResult, BoundSource, CurvatureBound};
pub use diss::{BetaSpec, Diss};
pub use error::{RdError, Result, Side};
pub use methods::{Analyzer, MethodId, MethodOptions, MethodOutcome, Selector};
pub use regression::{FitPair, Kernel, LinearFit};
pub use sample::{affine_transform, validate, EffectEstimate, InferenceMethod, RdSample, SideSplit};
