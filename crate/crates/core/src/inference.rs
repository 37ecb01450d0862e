//! Continuity-framework confidence intervals: conventional (CV), robust
//! bias-corrected (RBC) and fixed-length (FLCI). All three are built from the
//! weight vectors of boundary local-polynomial fits.

use serde::{Deserialize, Serialize};

use crate::bandwidth::CurvatureBound;
use crate::error::{RdError, Result, Side};
use crate::regression::{
    local_poly_smoother, nn_variance_side, FitPair, Kernel, LocalPolySmoother, DEFAULT_NN,
};
use crate::sample::{EffectEstimate, InferenceMethod, RdSample};
use crate::stats;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(RdError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Nearest-neighbour variances computed from the in-window observations of
/// each side. Sides with fewer than `DEFAULT_NN + 1` window points use all
/// their other points as neighbours. Entries outside the windows are zero.
pub fn window_nn_variance(sample: &RdSample, below: &[usize], above: &[usize]) -> Result<Vec<f64>> {
    let mut sigma2 = vec![0.0; sample.len()];
    for idx in [below, above] {
        if idx.len() < 2 {
            return Err(RdError::InsufficientData(format!(
                "{} in-window observations; variance estimation needs 2",
                idx.len()
            )));
        }
        let j = DEFAULT_NN.min(idx.len() - 1);
        for (i, s) in nn_variance_side(sample.x(), sample.y(), idx, j)? {
            sigma2[i] = s;
        }
    }
    Ok(sigma2)
}

/// Local-linear fits on both sides with their in-window variance estimates:
/// the shared input of the CV and FLCI intervals.
#[derive(Debug, Clone)]
pub struct ContinuityFit {
    pub fits: FitPair,
    pub sigma2: Vec<f64>,
    pub bandwidth: f64,
    pub kernel: Kernel,
    below_idx: Vec<usize>,
    above_idx: Vec<usize>,
}

impl ContinuityFit {
    pub fn new(sample: &RdSample, h: f64, kernel: Kernel) -> Result<Self> {
        let below = local_poly_smoother(sample, Side::Below, 1, h, kernel)?;
        let above = local_poly_smoother(sample, Side::Above, 1, h, kernel)?;
        let sigma2 = window_nn_variance(sample, below.indices(), above.indices())?;
        Ok(Self {
            fits: FitPair {
                below: below.intercept_fit(sample.y()),
                above: above.intercept_fit(sample.y()),
            },
            sigma2,
            bandwidth: h,
            kernel,
            below_idx: below.indices().to_vec(),
            above_idx: above.indices().to_vec(),
        })
    }

    pub fn tau_hat(&self) -> f64 {
        self.fits.tau_hat()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.fits.combined_weights()
    }

    pub fn se(&self) -> f64 {
        stats::sum(self.weights().iter().zip(&self.sigma2).map(|(w, s)| w * w * s)).sqrt()
    }

    pub fn window(&self, side: Side) -> &[usize] {
        match side {
            Side::Below => &self.below_idx,
            Side::Above => &self.above_idx,
        }
    }
}

fn estimate(
    tau_hat: f64,
    tau_conventional: f64,
    se: f64,
    half: f64,
    alpha: f64,
    h: f64,
    inference: InferenceMethod,
) -> EffectEstimate {
    EffectEstimate {
        tau_hat,
        tau_conventional,
        se,
        ci_lower: tau_hat - half,
        ci_upper: tau_hat + half,
        alpha,
        bandwidth: h,
        selector: String::new(),
        inference,
    }
}

/// `tau_hat +/- z_{alpha/2} SE` from a precomputed fit.
pub fn cv_from_fit(fit: &ContinuityFit, alpha: f64) -> Result<EffectEstimate> {
    check_alpha(alpha)?;
    let tau = fit.tau_hat();
    let se = fit.se();
    let half = stats::z_two_sided(alpha) * se;
    Ok(estimate(tau, tau, se, half, alpha, fit.bandwidth, InferenceMethod::Cv))
}

/// Conventional Wald interval at bandwidth `h`.
pub fn cv_interval(sample: &RdSample, h: f64, kernel: Kernel, alpha: f64) -> Result<EffectEstimate> {
    check_alpha(alpha)?;
    cv_from_fit(&ContinuityFit::new(sample, h, kernel)?, alpha)
}

/// Bias estimate of the local-linear jump estimator and the weights of the
/// bias-corrected estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCorrection {
    pub b_hat: f64,
    pub combined_weights: Vec<f64>,
    /// `SE_RBC^2 - SE_CV^2`, obtained by expanding the squared corrected
    /// weights. Can be negative when the correction is negatively
    /// correlated with the conventional estimator.
    pub c_term: f64,
    pub se_conventional: f64,
    pub se_corrected: f64,
}

/// Curvature-based bias correction with the bias bandwidth equal to `h`.
///
/// With `kappa_s = sum_i w_i (x_i - c)^2` from the local-linear fit on side
/// `s` and `mu''_s` from a local quadratic on the same window,
/// `B = (mu''_+ kappa_+ - mu''_- kappa_-) / 2`. Because `mu''_s` is linear in
/// `y`, the corrected estimator is itself a linear functional.
pub fn bias_correction(sample: &RdSample, fit: &ContinuityFit) -> Result<BiasCorrection> {
    let h = fit.bandwidth;
    let c = sample.cutoff();
    let quad = |side| -> Result<LocalPolySmoother> { local_poly_smoother(sample, side, 2, h, fit.kernel) };
    let (qb, qa) = (quad(Side::Below)?, quad(Side::Above)?);
    let kappa = |w: &[f64]| stats::sum(w.iter().zip(sample.x()).map(|(w, x)| w * (x - c) * (x - c)));
    let kappa_below = kappa(&fit.fits.below.weights);
    let kappa_above = kappa(&fit.fits.above.weights);
    let d2_below = qb.derivative_weights(2);
    let d2_above = qa.derivative_weights(2);
    // weights of B_hat
    let correction: Vec<f64> = d2_above
        .iter()
        .zip(&d2_below)
        .map(|(a, b)| 0.5 * (kappa_above * a - kappa_below * b))
        .collect();
    let b_hat = stats::sum(correction.iter().zip(sample.y()).map(|(w, y)| w * y));
    let w_cv = fit.weights();
    let combined: Vec<f64> = w_cv.iter().zip(&correction).map(|(w, d)| w - d).collect();
    let s2 = &fit.sigma2;
    let se_conventional = fit.se();
    let c_term = stats::sum(
        correction
            .iter()
            .zip(&w_cv)
            .zip(s2)
            .map(|((d, w), s)| (d * d - 2.0 * w * d) * s),
    );
    let se_corrected = stats::sum(combined.iter().zip(s2).map(|(w, s)| w * w * s)).sqrt();
    Ok(BiasCorrection {
        b_hat,
        combined_weights: combined,
        c_term,
        se_conventional,
        se_corrected,
    })
}

/// `(tau_hat - B) +/- z_{alpha/2} sqrt(SE^2 + C)` from a precomputed fit.
pub fn rbc_from_fit(sample: &RdSample, fit: &ContinuityFit, alpha: f64) -> Result<EffectEstimate> {
    check_alpha(alpha)?;
    let bc = bias_correction(sample, fit)?;
    let tau = fit.tau_hat();
    let center = tau - bc.b_hat;
    let half = stats::z_two_sided(alpha) * bc.se_corrected;
    Ok(estimate(center, tau, bc.se_corrected, half, alpha, fit.bandwidth, InferenceMethod::Rbc))
}

/// Robust bias-corrected interval at bandwidth `h`.
pub fn rbc_interval(sample: &RdSample, h: f64, kernel: Kernel, alpha: f64) -> Result<EffectEstimate> {
    check_alpha(alpha)?;
    rbc_from_fit(sample, &ContinuityFit::new(sample, h, kernel)?, alpha)
}

/// `(M / 2) sum_i |w_i| (x_i - c)^2` over both sides: the largest bias of
/// the jump estimator when `|mu''| <= M`. Exact when `w_i (x_i - c)^2` keeps
/// one sign per side, an upper bound otherwise.
pub fn worst_case_bias(fits: &FitPair, sample: &RdSample, m: f64) -> f64 {
    let c = sample.cutoff();
    let side = |w: &[f64]| stats::sum(w.iter().zip(sample.x()).map(|(w, x)| w.abs() * (x - c) * (x - c)));
    0.5 * m * (side(&fits.below.weights) + side(&fits.above.weights))
}

/// Whether the absolute-weight bound is attained: every side's weights keep
/// one sign wherever `x != c`.
pub fn worst_case_bias_is_exact(fits: &FitPair, sample: &RdSample) -> bool {
    let c = sample.cutoff();
    [&fits.below.weights, &fits.above.weights].iter().all(|w| {
        let mut pos = false;
        let mut neg = false;
        for (wi, x) in w.iter().zip(sample.x()) {
            if *x != c {
                pos |= *wi > 0.0;
                neg |= *wi < 0.0;
            }
        }
        !(pos && neg)
    })
}

/// Critical value of `|N(t, 1)|` at level `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldedNormalCv {
    pub t: f64,
    pub alpha: f64,
    pub cv: f64,
}

/// Solve `Phi(cv - t) - Phi(-cv - t) = 1 - alpha` for `cv` by bisection on
/// the bracket `[0, t + z_{alpha/2}]`.
pub fn folded_normal_cv(t: f64, alpha: f64) -> Result<FoldedNormalCv> {
    check_alpha(alpha)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(RdError::InvalidArgument(format!("shape t must be finite and >= 0, got {t}")));
    }
    let target = 1.0 - alpha;
    let coverage = |cv: f64| stats::normal_cdf(cv - t) - stats::normal_cdf(-cv - t);
    let mut lo = 0.0;
    let mut hi = t + stats::z_two_sided(alpha);
    while coverage(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if coverage(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.max(1.0) {
            break;
        }
    }
    Ok(FoldedNormalCv {
        t,
        alpha,
        cv: 0.5 * (lo + hi),
    })
}

/// `tau_hat +/- cv(B / SE) SE` from a precomputed fit.
pub fn flci_from_fit(sample: &RdSample, fit: &ContinuityFit, alpha: f64, bound: CurvatureBound) -> Result<EffectEstimate> {
    check_alpha(alpha)?;
    let se = fit.se();
    if !(se > 0.0) {
        return Err(RdError::ZeroSe);
    }
    let bias = worst_case_bias(&fit.fits, sample, bound.value);
    let cv = folded_normal_cv(bias / se, alpha)?.cv;
    let tau = fit.tau_hat();
    Ok(estimate(tau, tau, se, cv * se, alpha, fit.bandwidth, InferenceMethod::Flci))
}

/// Fixed-length interval at bandwidth `h` under `|mu''| <= M`.
pub fn flci_interval(
    sample: &RdSample,
    h: f64,
    kernel: Kernel,
    alpha: f64,
    bound: CurvatureBound,
) -> Result<EffectEstimate> {
    check_alpha(alpha)?;
    flci_from_fit(sample, &ContinuityFit::new(sample, h, kernel)?, alpha, bound)
}
