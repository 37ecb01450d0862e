//! Per-replication records and their aggregation into operating
//! characteristics with Monte Carlo standard errors.

use serde::{Deserialize, Serialize};

use crate::stats;

/// Outcome of one method on one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: String,
    /// Bandwidth or window half-width; `None` when selection failed.
    pub bw: Option<f64>,
    /// Finite interval produced.
    pub success: bool,
    pub tau_hat: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub width: Option<f64>,
    pub covered: Option<bool>,
    /// Failure reason, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl RepRecord {
    pub fn failure(rep: usize, method: impl Into<String>, bw: Option<f64>, reason: impl Into<String>) -> Self {
        Self {
            rep,
            method: method.into(),
            bw,
            success: false,
            tau_hat: None,
            ci_lo: None,
            ci_hi: None,
            width: None,
            covered: None,
            reason: Some(reason.into()),
        }
    }

    pub fn interval(rep: usize, method: impl Into<String>, bw: f64, tau_hat: f64, lo: f64, hi: f64, truth: f64) -> Self {
        let finite = tau_hat.is_finite() && lo.is_finite() && hi.is_finite();
        if !finite {
            return Self::failure(rep, method, Some(bw), "non-finite interval");
        }
        Self {
            rep,
            method: method.into(),
            bw: Some(bw),
            success: true,
            tau_hat: Some(tau_hat),
            ci_lo: Some(lo),
            ci_hi: Some(hi),
            width: Some(hi - lo),
            covered: Some(lo <= truth && truth <= hi),
            reason: None,
        }
    }
}

/// Monte Carlo standard errors of the headline metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mcse {
    /// `EmpSE / sqrt(R)`.
    pub bias: f64,
    /// `sqrt(p (1 - p) / R)`.
    pub coverage: f64,
    /// `sd((tau_hat - tau)^2) / sqrt(R)`.
    pub mse: f64,
}

/// Operating characteristics of one method in one simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCellResult {
    pub dgp: String,
    pub m_bar: f64,
    pub n: usize,
    pub method: String,
    pub r_total: usize,
    pub r_common: usize,
    pub bw_success_rate: f64,
    pub interval_success_rate: f64,
    pub bias: f64,
    pub emp_se: f64,
    pub mse: f64,
    pub coverage: f64,
    pub median_width: f64,
    /// Median bandwidth (or window) over replications where selection succeeded.
    pub median_bw: f64,
    pub mcse: Mcse,
}

/// Summary statistics of point estimates against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub bias: f64,
    pub emp_se: f64,
    pub mse: f64,
    pub mcse_bias: f64,
    pub mcse_mse: f64,
}

/// Bias, empirical SE (`n - 1` denominator) and MSE with their MCSEs.
pub fn point_summary(estimates: &[f64], truth: f64) -> PointSummary {
    let r = estimates.len();
    if r == 0 {
        return PointSummary {
            bias: f64::NAN,
            emp_se: f64::NAN,
            mse: f64::NAN,
            mcse_bias: f64::NAN,
            mcse_mse: f64::NAN,
        };
    }
    let rf = r as f64;
    let bias = stats::mean(estimates) - truth;
    let emp_se = if r > 1 { stats::std_dev(estimates) } else { 0.0 };
    let sq: Vec<f64> = estimates.iter().map(|t| (t - truth) * (t - truth)).collect();
    let mse = stats::mean(&sq);
    let sd_sq = if r > 1 { stats::std_dev(&sq) } else { 0.0 };
    PointSummary {
        bias,
        emp_se,
        mse,
        mcse_bias: emp_se / rf.sqrt(),
        mcse_mse: sd_sq / rf.sqrt(),
    }
}

/// `sqrt(p (1 - p) / R)`.
pub fn proportion_mcse(p: f64, r: usize) -> f64 {
    if r == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / r as f64).sqrt()
}

fn median_of(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    stats::median(&v)
}

/// Aggregate one method's records. `common` marks the replications where
/// every method in the cell produced a finite interval; point and interval
/// metrics use only those.
pub fn aggregate(
    dgp: &str,
    m_bar: f64,
    n: usize,
    method: &str,
    records: &[&RepRecord],
    common: &[bool],
    truth: f64,
) -> SimCellResult {
    let r_total = records.len();
    let rf = r_total.max(1) as f64;
    let bw_success = records.iter().filter(|r| r.bw.is_some()).count() as f64 / rf;
    let interval_success = records.iter().filter(|r| r.success).count() as f64 / rf;
    let kept: Vec<&RepRecord> = records
        .iter()
        .copied()
        .filter(|r| r.success && common[r.rep])
        .collect();
    let estimates: Vec<f64> = kept.iter().filter_map(|r| r.tau_hat).collect();
    let point = point_summary(&estimates, truth);
    let r_common = kept.len();
    let coverage = if r_common > 0 {
        kept.iter().filter(|r| r.covered == Some(true)).count() as f64 / r_common as f64
    } else {
        f64::NAN
    };
    SimCellResult {
        dgp: dgp.to_string(),
        m_bar,
        n,
        method: method.to_string(),
        r_total,
        r_common,
        bw_success_rate: bw_success,
        interval_success_rate: interval_success,
        bias: point.bias,
        emp_se: point.emp_se,
        mse: point.mse,
        coverage,
        median_width: median_of(kept.iter().filter_map(|r| r.width)),
        median_bw: median_of(records.iter().filter_map(|r| r.bw)),
        mcse: Mcse {
            bias: point.mcse_bias,
            coverage: proportion_mcse(coverage, r_common),
            mse: point.mcse_mse,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_decomposition() {
        let est = [0.08, 0.12, 0.15, 0.05, 0.11, 0.09];
        let s = point_summary(&est, 0.1);
        let r = est.len() as f64;
        let rhs = s.bias * s.bias + s.emp_se * s.emp_se * (r - 1.0) / r;
        assert!((s.mse - rhs).abs() < 1e-15);
    }

    #[test]
    fn proportion_mcse_closed_form() {
        assert!((proportion_mcse(0.95, 2000) - (0.95f64 * 0.05 / 2000.0).sqrt()).abs() < 1e-15);
        assert_eq!(proportion_mcse(1.0, 10), 0.0);
    }

    #[test]
    fn aggregation_uses_common_subset() {
        let recs = vec![
            RepRecord::interval(0, "A", 0.2, 0.1, 0.0, 0.2, 0.1),
            RepRecord::interval(1, "A", 0.2, 0.3, 0.25, 0.35, 0.1),
            RepRecord::failure(2, "A", None, "no bandwidth"),
        ];
        let refs: Vec<&RepRecord> = recs.iter().collect();
        let common = [true, false, false];
        let out = aggregate("D", 10.0, 40, "A", &refs, &common, 0.1);
        assert_eq!(out.r_common, 1);
        assert_eq!(out.coverage, 1.0);
        assert!((out.interval_success_rate - 2.0 / 3.0).abs() < 1e-15);
        assert!((out.bw_success_rate - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(out.median_bw, 0.2);
    }

    #[test]
    fn non_finite_interval_is_failure() {
        let r = RepRecord::interval(0, "A", 0.1, f64::NAN, 0.0, 1.0, 0.1);
        assert!(!r.success);
    }
}
