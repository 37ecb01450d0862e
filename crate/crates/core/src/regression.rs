//! Boundary local-polynomial regression expressed as weights on the
//! responses, plus nearest-neighbour residual variances.
//!
//! Every continuity estimator in this crate is a linear functional
//! `sum_i w_i y_i`; the fits here produce those weight vectors (indexed over
//! the full sample, zero off-side and off-window).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result, Side};
use crate::linalg::{poly_design, wls_smoother};
use crate::sample::{RdSample, SideSplit};
use crate::stats;

/// Default number of nearest neighbours for residual variances.
pub const DEFAULT_NN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Triangular,
    Uniform,
    Epanechnikov,
}

impl Kernel {
    pub fn weight(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Triangular => 1.0 - a,
            Kernel::Uniform => 0.5,
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
        }
    }
}

/// A boundary fit on one side of the cutoff, as a weight vector over the
/// full sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub weights: Vec<f64>,
    pub fitted_at_cutoff: f64,
    pub side: Side,
    pub degree: usize,
    pub bandwidth: f64,
    pub n_effective: usize,
}

impl LinearFit {
    /// `sum_i w_i (x_i - c)^power`, the fit's loading on a centred monomial.
    pub fn moment(&self, sample: &RdSample, power: i32) -> f64 {
        let c = sample.cutoff();
        stats::sum(
            self.weights
                .iter()
                .zip(sample.x())
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, x)| w * (x - c).powi(power)),
        )
    }
}

/// Full local-polynomial smoother on one side: keeps every coefficient's
/// weights, not just the intercept.
#[derive(Debug, Clone)]
pub struct LocalPolySmoother {
    pub side: Side,
    pub degree: usize,
    pub bandwidth: f64,
    n: usize,
    indices: Vec<usize>,
    /// (degree + 1) x indices.len(); row j gives the coefficient on `u^j`
    /// with `u = (x - c) / h`.
    smoother: DMatrix<f64>,
}

impl LocalPolySmoother {
    /// Indices of observations with positive kernel weight.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Weights (over the full sample) of the coefficient on `(x - c)^j`.
    pub fn coefficient_weights(&self, j: usize) -> Vec<f64> {
        let scale = self.bandwidth.powi(j as i32);
        let mut w = vec![0.0; self.n];
        for (k, &i) in self.indices.iter().enumerate() {
            w[i] = self.smoother[(j, k)] / scale;
        }
        w
    }

    /// Weights of the `order`-th derivative estimate at the cutoff.
    pub fn derivative_weights(&self, order: usize) -> Vec<f64> {
        let fact: f64 = (1..=order).map(|k| k as f64).product();
        self.coefficient_weights(order)
            .into_iter()
            .map(|w| w * fact)
            .collect()
    }

    pub fn intercept_fit(&self, y: &[f64]) -> LinearFit {
        let weights = self.coefficient_weights(0);
        let fitted = stats::sum(weights.iter().zip(y).map(|(w, v)| w * v));
        LinearFit {
            n_effective: self.indices.len(),
            weights,
            fitted_at_cutoff: fitted,
            side: self.side,
            degree: self.degree,
            bandwidth: self.bandwidth,
        }
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(RdError::BadBandwidth(h))
    }
}

/// Kernel-weighted polynomial regression of degree `degree` on one side,
/// centred at the cutoff.
pub fn local_poly_smoother(
    sample: &RdSample,
    side: Side,
    degree: usize,
    h: f64,
    kernel: Kernel,
) -> Result<LocalPolySmoother> {
    check_bandwidth(h)?;
    if degree == 0 {
        return Err(RdError::InvalidArgument("degree must be at least 1".into()));
    }
    let c = sample.cutoff();
    let mut indices = Vec::new();
    let mut u = Vec::new();
    let mut kw = Vec::new();
    for (i, &x) in sample.x().iter().enumerate() {
        if sample.side_of(i) != side {
            continue;
        }
        let ui = (x - c) / h;
        let k = kernel.weight(ui);
        if k > 0.0 {
            indices.push(i);
            u.push(ui);
            kw.push(k);
        }
    }
    if indices.len() <= degree {
        return Err(RdError::InsufficientData(format!(
            "{} in-window observations {side} the cutoff for a degree-{degree} fit",
            indices.len()
        )));
    }
    let smoother = wls_smoother(&poly_design(&u, degree), &kw)?;
    Ok(LocalPolySmoother {
        side,
        degree,
        bandwidth: h,
        n: sample.len(),
        indices,
        smoother,
    })
}

/// Local polynomial fit at the cutoff on one side.
pub fn local_poly_fit(
    sample: &RdSample,
    side: Side,
    degree: usize,
    h: f64,
    kernel: Kernel,
) -> Result<LinearFit> {
    Ok(local_poly_smoother(sample, side, degree, h, kernel)?.intercept_fit(sample.y()))
}

/// Fits on both sides of the cutoff, below first.
#[derive(Debug, Clone, PartialEq)]
pub struct FitPair {
    pub below: LinearFit,
    pub above: LinearFit,
}

impl FitPair {
    pub fn tau_hat(&self) -> f64 {
        self.above.fitted_at_cutoff - self.below.fitted_at_cutoff
    }

    /// Weights of the jump estimator: `w_above - w_below`.
    pub fn combined_weights(&self) -> Vec<f64> {
        self.above
            .weights
            .iter()
            .zip(&self.below.weights)
            .map(|(a, b)| a - b)
            .collect()
    }
}

pub fn late_point_estimate(
    sample: &RdSample,
    degree: usize,
    h: f64,
    kernel: Kernel,
) -> Result<(f64, FitPair)> {
    let below = local_poly_fit(sample, Side::Below, degree, h, kernel)?;
    let above = local_poly_fit(sample, Side::Above, degree, h, kernel)?;
    let fits = FitPair { below, above };
    Ok((fits.tau_hat(), fits))
}

/// Nearest-neighbour residual variances for the given observations of one
/// side, using `j` neighbours. Returns `(index, sigma2)` pairs.
///
/// Neighbours are ranked by `|x_k - x_i|`; equal distances go to the lower
/// observation index.
pub(crate) fn nn_variance_side(
    x: &[f64],
    y: &[f64],
    indices: &[usize],
    j: usize,
) -> Result<Vec<(usize, f64)>> {
    if j == 0 || indices.len() <= j {
        return Err(RdError::InsufficientData(format!(
            "{} observations on a side for {j} nearest neighbours",
            indices.len()
        )));
    }
    let mut order = indices.to_vec();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let factor = j as f64 / (j as f64 + 1.0);
    let mut out = Vec::with_capacity(order.len());
    let mut picked: Vec<(f64, usize)> = Vec::new();
    for pos in 0..order.len() {
        let i = order[pos];
        let dist = |k: usize| (x[k] - x[i]).abs();
        // walk outward in x order, then keep every candidate tied with the
        // j-th distance so the index tie-break sees all of them
        let mut left = pos as isize - 1;
        let mut right = pos + 1;
        picked.clear();
        loop {
            let next_left = (left >= 0).then(|| dist(order[left as usize]));
            let next_right = (right < order.len()).then(|| dist(order[right]));
            let take_left = match (next_left, next_right) {
                (Some(dl), Some(dr)) => dl <= dr,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            let d = if take_left { next_left } else { next_right }.expect("candidate exists");
            if picked.len() >= j && d > picked[j - 1].0 {
                break;
            }
            if take_left {
                picked.push((d, order[left as usize]));
                left -= 1;
            } else {
                picked.push((d, order[right]));
                right += 1;
            }
        }
        picked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let acc: f64 = picked[..j].iter().map(|&(_, k)| y[k]).sum();
        let resid = y[i] - acc / j as f64;
        out.push((i, factor * resid * resid));
    }
    out.sort_by_key(|p| p.0);
    Ok(out)
}

/// Per-observation nearest-neighbour variance estimates
/// `J/(J+1) (y_i - mean of J nearest same-side neighbours)^2`.
pub fn nn_variance(sample: &RdSample, split: &SideSplit, j: usize) -> Result<Vec<f64>> {
    let mut sigma2 = vec![0.0; sample.len()];
    for side in [Side::Below, Side::Above] {
        for (i, s) in nn_variance_side(sample.x(), sample.y(), split.side(side), j)? {
            sigma2[i] = s;
        }
    }
    Ok(sigma2)
}

/// Standard error of a linear estimator `sum w_i y_i`: `sqrt(sum w_i^2 sigma_i^2)`.
pub fn se_of_linear_functional(weights: &[f64], sigma2: &[f64]) -> Result<f64> {
    if weights.len() != sigma2.len() {
        return Err(RdError::LengthMismatch {
            left: weights.len(),
            right: sigma2.len(),
        });
    }
    Ok(stats::sum(weights.iter().zip(sigma2).map(|(w, s)| w * w * s)).sqrt())
}
