//! Bandwidth selectors: Silverman's rule of thumb, the Imbens–Kalyanaraman
//! plug-in with regularisation, and the Armstrong–Kolesár selector that
//! minimises worst-case finite-sample MSE under a second-derivative bound.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result, Side};
use crate::inference::worst_case_bias;
use crate::linalg::{poly_design, poly_ols, wls_smoother};
use crate::regression::{local_poly_fit, nn_variance_side, FitPair, Kernel, DEFAULT_NN};
use crate::sample::RdSample;
use crate::stats;

/// Silverman's rule-of-thumb multiplier.
pub const ROT_FACTOR: f64 = 0.9;
/// IQR divisor in the robust spread `min(IQR / 1.34, sd)`.
pub const IQR_DIVISOR: f64 = 1.34;
/// First-stage pilot multiplier for the IK density and variance window.
pub const IK_PILOT_FACTOR: f64 = 1.84;
/// Second-stage pilot constant for the IK curvature windows.
pub const IK_CURVATURE_PILOT: f64 = 3.56;
/// IK regularisation constant for local-linear estimation.
pub const IK_REGULARISATION: f64 = 2160.0;
/// Number of log-spaced candidates searched by the AK selector.
pub const AK_GRID_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandwidthAlgorithm {
    #[serde(rename = "ROT")]
    Rot,
    #[serde(rename = "IK")]
    Ik,
    /// AK selector with a data-driven curvature bound.
    #[serde(rename = "AK")]
    Ak,
    /// AK selector with a user-supplied (true) curvature bound.
    #[serde(rename = "AKM")]
    Akm,
}

impl std::fmt::Display for BandwidthAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BandwidthAlgorithm::Rot => "ROT",
            BandwidthAlgorithm::Ik => "IK",
            BandwidthAlgorithm::Ak => "AK",
            BandwidthAlgorithm::Akm => "AKM",
        })
    }
}

/// Outcome of a bandwidth algorithm. A failed pilot stage is an ordinary
/// outcome (`h` is `Err(reason)`), counted as a non-success by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthResult {
    pub algorithm: BandwidthAlgorithm,
    pub h: std::result::Result<f64, String>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl BandwidthResult {
    fn failure(algorithm: BandwidthAlgorithm, reason: impl Into<String>, diagnostics: BTreeMap<String, f64>) -> Self {
        Self {
            algorithm,
            h: Err(reason.into()),
            diagnostics,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.h.as_ref().ok().copied()
    }

    pub fn into_result(self) -> Result<f64> {
        self.h.map_err(RdError::BandwidthFailure)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundSource {
    UserSupplied,
    DataDriven,
}

/// Global bound `M` on `|mu''|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBound {
    pub value: f64,
    pub source: BoundSource,
}

impl CurvatureBound {
    pub fn user(value: f64) -> Result<Self> {
        Self::new(value, BoundSource::UserSupplied)
    }

    pub fn new(value: f64, source: BoundSource) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(RdError::InvalidCurvatureBound(value));
        }
        Ok(Self { value, source })
    }
}

/// `min(IQR / 1.34, sd)`.
pub fn robust_spread(iqr: f64, sd: f64) -> f64 {
    (iqr / IQR_DIVISOR).min(sd)
}

/// Robust spread of a sample, with type-7 quartiles and the `n - 1` sd.
pub fn sample_spread(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(RdError::DegenerateSample);
    }
    let sorted = stats::sorted_copy(x);
    let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
    let s = robust_spread(iqr, stats::std_dev(x));
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(RdError::DegenerateSample)
    }
}

/// `0.9 * s * n^{-1/5}`.
pub fn rot_from_spread(spread: f64, n: usize) -> f64 {
    ROT_FACTOR * spread * (n as f64).powf(-0.2)
}

/// Silverman's rule-of-thumb bandwidth computed from the sample.
pub fn silverman_rot(x: &[f64]) -> Result<f64> {
    Ok(rot_from_spread(sample_spread(x)?, x.len()))
}

/// Population version: `sigma* = min(population IQR / 1.34, population sd)`.
pub fn silverman_rot_population(iqr: f64, sd: f64, n: usize) -> Result<f64> {
    let spread = robust_spread(iqr, sd);
    if !(spread > 0.0 && spread.is_finite()) || n == 0 {
        return Err(RdError::DegenerateSample);
    }
    Ok(rot_from_spread(spread, n))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let step = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * step);
    }
    acc * step / 3.0
}

/// Boundary local-linear AMSE constant `C_K`.
///
/// With one-sided moments `m_j = int_0^1 u^j K(u) du`, the equivalent
/// kernel has bias constant `B = (m2^2 - m1 m3) / (m0 m2 - m1^2)` and
/// variance constant `V = int (m2 - m1 u)^2 K(u)^2 du / (m0 m2 - m1^2)^2`.
/// The MSE-optimal bandwidth is `(V / B^2)^{1/5} (S / (n f D^2))^{1/5}`,
/// and `C_K = (V / B^2)^{1/5}` (3.4375 for the triangular kernel).
pub fn kernel_constant(kernel: Kernel) -> f64 {
    let (v, b) = kernel_boundary_moments(kernel);
    (v / (b * b)).powf(0.2)
}

/// `(V, B)` of the boundary local-linear equivalent kernel.
pub fn kernel_boundary_moments(kernel: Kernel) -> (f64, f64) {
    const STEPS: usize = 4000;
    let m = |j: i32| simpson(|u| u.powi(j) * kernel.weight(u), 0.0, 1.0, STEPS);
    let (m0, m1, m2, m3) = (m(0), m(1), m(2), m(3));
    let det = m0 * m2 - m1 * m1;
    let b = (m2 * m2 - m1 * m3) / det;
    let v = simpson(
        |u| {
            let e = (m2 - m1 * u) * kernel.weight(u);
            e * e
        },
        0.0,
        1.0,
        STEPS,
    ) / (det * det);
    (v, b)
}

/// Plug-in bandwidth `C_K [S / (n D)]^{1/5}` where `S` is the summed
/// conditional variance and `D` the curvature denominator.
pub fn plug_in_bandwidth(c_k: f64, variance_sum: f64, denominator: f64, n: usize) -> f64 {
    c_k * (variance_sum / (n as f64 * denominator)).powf(0.2)
}

/// Infeasible AK bandwidth: the IK plug-in with `(mu''_+ - mu''_-)^2`
/// replaced by `4 M^2`.
pub fn ak_plug_in(c_k: f64, sigma2_above: f64, sigma2_below: f64, density: f64, m: f64, n: usize) -> f64 {
    plug_in_bandwidth(c_k, sigma2_above + sigma2_below, 4.0 * density * m * m, n)
}

fn side_window(sample: &RdSample, side: Side, h: f64) -> Vec<usize> {
    let c = sample.cutoff();
    (0..sample.len())
        .filter(|&i| {
            let d = sample.x()[i] - c;
            match side {
                Side::Below => d < 0.0 && -d <= h,
                Side::Above => d >= 0.0 && d <= h,
            }
        })
        .collect()
}

fn values(sample: &RdSample, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    (
        idx.iter().map(|&i| sample.x()[i]).collect(),
        idx.iter().map(|&i| sample.y()[i]).collect(),
    )
}

/// Imbens–Kalyanaraman plug-in bandwidth.
///
/// Pilot stages: (1) window `1.84 s* n^{-1/5}` gives the density `f` and
/// the one-sided variances; (2) a global cubic with a jump, fit between the
/// side medians, sizes one-sided local-quadratic windows whose fits give
/// `mu''_+` and `mu''_-`; (3) the regularisation
/// `r = f (r_+ + r_-)`, `r_s = 2160 sigma2_s / (N2_s h2_s^4)`.
/// Then `h = C_K [ (sigma2_+ + sigma2_-) / (n (f (mu''_+ - mu''_-)^2 + r)) ]^{1/5}`.
pub fn ik_bandwidth(sample: &RdSample, kernel: Kernel) -> BandwidthResult {
    let algo = BandwidthAlgorithm::Ik;
    let mut diag = BTreeMap::new();
    let c_k = kernel_constant(kernel);
    diag.insert("c_k".into(), c_k);
    let split = sample.split();
    if let Some(side) = split.empty_side() {
        return BandwidthResult::failure(algo, format!("no observations {side} the cutoff"), diag);
    }
    let n = sample.len();
    let spread = match sample_spread(sample.x()) {
        Ok(s) => s,
        Err(_) => return BandwidthResult::failure(algo, "degenerate running variable", diag),
    };
    let h1 = IK_PILOT_FACTOR * spread * (n as f64).powf(-0.2);
    diag.insert("h_pilot".into(), h1);

    let w_below = side_window(sample, Side::Below, h1);
    let w_above = side_window(sample, Side::Above, h1);
    let f_hat = (w_below.len() + w_above.len()) as f64 / (2.0 * n as f64 * h1);
    diag.insert("f_hat".into(), f_hat);
    if f_hat <= 0.0 {
        return BandwidthResult::failure(algo, "pilot density is zero", diag);
    }
    let mut sigma2 = [0.0; 2];
    for (k, (side, idx)) in [(Side::Below, &w_below), (Side::Above, &w_above)].into_iter().enumerate() {
        if idx.len() < 2 {
            return BandwidthResult::failure(algo, format!("pilot variance infeasible {side} the cutoff"), diag);
        }
        let (_, y) = values(sample, idx);
        sigma2[k] = stats::variance(&y);
    }
    let [s2_below, s2_above] = sigma2;
    diag.insert("sigma2_below".into(), s2_below);
    diag.insert("sigma2_above".into(), s2_above);

    // stage 2: third derivative from a global cubic with a jump
    let c = sample.cutoff();
    let (xb, _) = values(sample, &split.below);
    let (xa, _) = values(sample, &split.above);
    let med_below = stats::median(&xb);
    let med_above = stats::median(&xa);
    let mid: Vec<usize> = (0..n)
        .filter(|&i| sample.x()[i] >= med_below && sample.x()[i] <= med_above)
        .collect();
    let third = match cubic_with_jump_third_derivative(sample, &mid) {
        Some(v) => v,
        None => return BandwidthResult::failure(algo, "pilot cubic fit is rank-deficient", diag),
    };
    diag.insert("mu3_hat".into(), third);
    let third_sq = (third * third).max(0.01);

    let mut curvature = [0.0; 2];
    let mut reg = [0.0; 2];
    for (k, (side, side_idx, s2)) in [
        (Side::Below, &split.below, s2_below),
        (Side::Above, &split.above, s2_above),
    ]
    .into_iter()
    .enumerate()
    {
        let n_side = side_idx.len() as f64;
        let h2 = IK_CURVATURE_PILOT * (s2 / (f_hat * third_sq)).powf(1.0 / 7.0) * n_side.powf(-1.0 / 7.0);
        let idx = side_window(sample, side, h2);
        let (x, y) = values(sample, &idx);
        let u: Vec<f64> = x.iter().map(|v| v - c).collect();
        let coef = match poly_ols(&u, &y, 2) {
            Ok(b) => b,
            Err(_) => {
                return BandwidthResult::failure(algo, format!("pilot curvature fit infeasible {side} the cutoff"), diag)
            }
        };
        curvature[k] = 2.0 * coef[2];
        reg[k] = IK_REGULARISATION * s2 / (idx.len() as f64 * h2.powi(4));
        diag.insert(format!("h2_{side}"), h2);
        diag.insert(format!("n2_{side}"), idx.len() as f64);
    }
    let [mu2_below, mu2_above] = curvature;
    let r_hat = f_hat * (reg[0] + reg[1]);
    diag.insert("mu2_below".into(), mu2_below);
    diag.insert("mu2_above".into(), mu2_above);
    diag.insert("r_hat".into(), r_hat);

    let diff = mu2_above - mu2_below;
    let denom = f_hat * diff * diff + r_hat;
    let h = plug_in_bandwidth(c_k, s2_above + s2_below, denom, n);
    if !(h > 0.0 && h.is_finite()) {
        return BandwidthResult::failure(algo, "non-finite bandwidth", diag);
    }
    BandwidthResult {
        algorithm: algo,
        h: Ok(h),
        diagnostics: diag,
    }
}

fn cubic_with_jump_third_derivative(sample: &RdSample, idx: &[usize]) -> Option<f64> {
    if idx.len() < 5 {
        return None;
    }
    let c = sample.cutoff();
    let (x, y) = values(sample, idx);
    // scale for conditioning; the cubic coefficient is rescaled afterwards
    let scale = x.iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
    if scale <= 0.0 {
        return None;
    }
    let u: Vec<f64> = x.iter().map(|v| (v - c) / scale).collect();
    let base = poly_design(&u, 3);
    let design = nalgebra::DMatrix::from_fn(u.len(), 5, |i, j| match j {
        0 => 1.0,
        1 => {
            if x[i] >= c {
                1.0
            } else {
                0.0
            }
        }
        _ => base[(i, j - 1)],
    });
    let smoother = wls_smoother(&design, &vec![1.0; u.len()]).ok()?;
    let b3: f64 = smoother.row(4).iter().zip(&y).map(|(l, v)| l * v).sum();
    Some(6.0 * b3 / scale.powi(3))
}

/// Homoskedastic one-sided variances used by the AK selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideVariances {
    pub below: f64,
    pub above: f64,
}

/// Side-wise mean of nearest-neighbour variance estimates (up to
/// `DEFAULT_NN` neighbours, fewer on very small sides).
pub fn side_variances(sample: &RdSample) -> Result<SideVariances> {
    let split = sample.split();
    let mut out = [0.0; 2];
    for (k, side) in [Side::Below, Side::Above].into_iter().enumerate() {
        let idx = split.side(side);
        if idx.len() < 2 {
            return Err(RdError::InsufficientData(format!(
                "{} observations {side} the cutoff",
                idx.len()
            )));
        }
        let j = DEFAULT_NN.min(idx.len() - 1);
        let v = nn_variance_side(sample.x(), sample.y(), idx, j)?;
        out[k] = stats::mean(&v.iter().map(|p| p.1).collect::<Vec<_>>());
    }
    Ok(SideVariances {
        below: out[0],
        above: out[1],
    })
}

/// Candidate bandwidths for the AK search: log-spaced from the larger of the
/// two per-side second-smallest distances to the cutoff up to the data range.
pub fn ak_grid(sample: &RdSample) -> Result<Vec<f64>> {
    let split = sample.split();
    split.require_both_sides()?;
    let c = sample.cutoff();
    let mut lower: f64 = 0.0;
    for side in [Side::Below, Side::Above] {
        let mut d: Vec<f64> = split.side(side).iter().map(|&i| (sample.x()[i] - c).abs()).collect();
        if d.len() < 2 {
            return Err(RdError::InsufficientData(format!("fewer than two observations {side} the cutoff")));
        }
        d.sort_by(f64::total_cmp);
        lower = lower.max(d[1]);
    }
    let (lo_x, hi_x) = sample
        .x()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let upper = hi_x - lo_x;
    let lower = lower.max(upper * 1e-6);
    if !(upper > 0.0) {
        return Err(RdError::DegenerateSample);
    }
    if lower >= upper {
        return Ok(vec![upper]);
    }
    let ratio = (upper / lower).ln();
    Ok((0..AK_GRID_SIZE)
        .map(|k| lower * (ratio * k as f64 / (AK_GRID_SIZE - 1) as f64).exp())
        .collect())
}

/// AK bandwidth: minimise `worst_case_bias(h)^2 + variance(h)` over the
/// candidate grid, with smaller `h` winning ties.
pub fn ak_bandwidth(sample: &RdSample, kernel: Kernel, bound: CurvatureBound) -> Result<BandwidthResult> {
    let algo = match bound.source {
        BoundSource::DataDriven => BandwidthAlgorithm::Ak,
        BoundSource::UserSupplied => BandwidthAlgorithm::Akm,
    };
    if bound.value <= 0.0 {
        return Err(RdError::ZeroCurvatureBound);
    }
    match side_variances(sample) {
        Ok(v) => ak_bandwidth_with_variances(sample, kernel, bound, v),
        Err(e) => Ok(BandwidthResult::failure(algo, e.to_string(), BTreeMap::new())),
    }
}

/// AK search with frozen one-sided variances.
pub fn ak_bandwidth_with_variances(
    sample: &RdSample,
    kernel: Kernel,
    bound: CurvatureBound,
    variances: SideVariances,
) -> Result<BandwidthResult> {
    let algo = match bound.source {
        BoundSource::DataDriven => BandwidthAlgorithm::Ak,
        BoundSource::UserSupplied => BandwidthAlgorithm::Akm,
    };
    if bound.value <= 0.0 {
        return Err(RdError::ZeroCurvatureBound);
    }
    let m = bound.value;
    let c_k = kernel_constant(kernel);
    let mut diag = BTreeMap::new();
    diag.insert("m".into(), m);
    diag.insert("c_k".into(), c_k);
    diag.insert("sigma2_below".into(), variances.below);
    diag.insert("sigma2_above".into(), variances.above);
    if let Ok(spread) = sample_spread(sample.x()) {
        let n = sample.len();
        let h1 = IK_PILOT_FACTOR * spread * (n as f64).powf(-0.2);
        let count = sample.x().iter().filter(|&&v| (v - sample.cutoff()).abs() <= h1).count();
        let f_hat = count as f64 / (2.0 * n as f64 * h1);
        diag.insert("f_hat".into(), f_hat);
        diag.insert(
            "h_plug_in".into(),
            ak_plug_in(c_k, variances.above, variances.below, f_hat, m, n),
        );
    }
    let grid = match ak_grid(sample) {
        Ok(g) => g,
        Err(e) => return Ok(BandwidthResult::failure(algo, e.to_string(), diag)),
    };
    let split = sample.split();
    let sigma2: Vec<f64> = (0..sample.len())
        .map(|i| if sample.treated(i) { variances.above } else { variances.below })
        .collect();
    let _ = split;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for &h in &grid {
        let below = local_poly_fit(sample, Side::Below, 1, h, kernel);
        let above = local_poly_fit(sample, Side::Above, 1, h, kernel);
        let (Ok(below), Ok(above)) = (below, above) else { continue };
        let fits = FitPair { below, above };
        let bias = worst_case_bias(&fits, sample, m);
        let w = fits.combined_weights();
        let var = stats::sum(w.iter().zip(&sigma2).map(|(a, s)| a * a * s));
        let mse = bias * bias + var;
        if best.map_or(true, |b| mse < b.1) {
            best = Some((h, mse, bias, var.sqrt()));
        }
    }
    match best {
        Some((h, mse, bias, sd)) => {
            diag.insert("mse".into(), mse);
            diag.insert("worst_case_bias".into(), bias);
            diag.insert("sd".into(), sd);
            Ok(BandwidthResult {
                algorithm: algo,
                h: Ok(h),
                diagnostics: diag,
            })
        }
        None => Ok(BandwidthResult::failure(algo, "no feasible candidate bandwidth", diag)),
    }
}

/// Data-driven curvature bound: on each side fit a global quartic by OLS and
/// take the largest `|q''(x)|` over that side's observed range; `M` is the
/// larger of the two.
pub fn estimate_m_hat(sample: &RdSample) -> Result<CurvatureBound> {
    let split = sample.split();
    let c = sample.cutoff();
    let mut m_hat: f64 = 0.0;
    for side in [Side::Below, Side::Above] {
        let (x, y) = values(sample, split.side(side));
        let mut distinct = x.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 5 {
            return Err(RdError::InsufficientData(format!(
                "{} distinct running-variable values {side} the cutoff; quartic needs 5",
                distinct.len()
            )));
        }
        let scale = x.iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
        let u: Vec<f64> = x.iter().map(|v| (v - c) / scale).collect();
        let b = poly_ols(&u, &y, 4)?;
        // q''(u) in u units: 2 b2 + 6 b3 u + 12 b4 u^2
        let second = |t: f64| (2.0 * b[2] + 6.0 * b[3] * t + 12.0 * b[4] * t * t) / (scale * scale);
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut cands = vec![lo, hi];
        if b[4] != 0.0 {
            let vertex = -b[3] / (4.0 * b[4]);
            if vertex > lo && vertex < hi {
                cands.push(vertex);
            }
        }
        for t in cands {
            m_hat = m_hat.max(second(t).abs());
        }
    }
    CurvatureBound::new(m_hat, BoundSource::DataDriven)
}
