//! Fisherian inference in a small window around the cutoff: window
//! selection by a per-side minimum count, the sharp-null permutation test
//! with a difference-in-means statistic, and confidence sets for a constant
//! effect by test inversion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result, Side};
use crate::sample::{EffectEstimate, InferenceMethod, RdSample};
use crate::stats;

pub const DEFAULT_MIN_PER_SIDE: usize = 5;
pub const DEFAULT_MAX_EXACT: u64 = 20_000;
pub const DEFAULT_N_MC: usize = 999;

/// Symmetric window `|x - c| <= half_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrWindow {
    pub half_width: f64,
    pub below: Vec<usize>,
    pub above: Vec<usize>,
}

/// How the per-side minimum is applied when a side has fewer observations
/// than the minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowRule {
    /// Fail with `InsufficientData`.
    #[default]
    Strict,
    /// Use every observation of the short side; fail only if a side is empty.
    ClampToAvailable,
}

/// Smallest symmetric window holding at least `min_per_side` observations
/// on each side: the larger of the two per-side `min_per_side`-th smallest
/// distances to the cutoff.
pub fn select_window(sample: &RdSample, min_per_side: usize) -> Result<LrWindow> {
    select_window_with_rule(sample, min_per_side, WindowRule::Strict)
}

pub fn select_window_with_rule(sample: &RdSample, min_per_side: usize, rule: WindowRule) -> Result<LrWindow> {
    if min_per_side == 0 {
        return Err(RdError::InvalidArgument("min_per_side must be at least 1".into()));
    }
    let c = sample.cutoff();
    let split = sample.split();
    let mut w: f64 = 0.0;
    for side in [Side::Below, Side::Above] {
        let idx = split.side(side);
        let k = match rule {
            WindowRule::Strict if idx.len() < min_per_side => {
                return Err(RdError::InsufficientData(format!(
                    "{} observations {side} the cutoff, window needs {min_per_side}",
                    idx.len()
                )))
            }
            WindowRule::ClampToAvailable if idx.is_empty() => return Err(RdError::EmptySide(side)),
            _ => min_per_side.min(idx.len()),
        };
        let mut d: Vec<f64> = idx.iter().map(|&i| (sample.x()[i] - c).abs()).collect();
        d.select_nth_unstable_by(k - 1, f64::total_cmp);
        w = w.max(d[k - 1]);
    }
    let inside = |i: &&usize| (sample.x()[**i] - c).abs() <= w;
    Ok(LrWindow {
        half_width: w,
        below: split.below.iter().filter(inside).copied().collect(),
        above: split.above.iter().filter(inside).copied().collect(),
    })
}

/// Responses in a window, split by observed treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowData {
    pub control: Vec<f64>,
    pub treated: Vec<f64>,
}

impl WindowData {
    pub fn new(control: Vec<f64>, treated: Vec<f64>) -> Result<Self> {
        if control.is_empty() {
            return Err(RdError::EmptyWindowSide(Side::Below));
        }
        if treated.is_empty() {
            return Err(RdError::EmptyWindowSide(Side::Above));
        }
        Ok(Self { control, treated })
    }

    pub fn from_window(sample: &RdSample, window: &LrWindow) -> Result<Self> {
        let pick = |idx: &[usize]| idx.iter().map(|&i| sample.y()[i]).collect();
        Self::new(pick(&window.below), pick(&window.above))
    }

    pub fn len(&self) -> usize {
        self.control.len() + self.treated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn difference_in_means(&self) -> f64 {
        stats::mean(&self.treated) - stats::mean(&self.control)
    }

    /// Within-group pooled standard deviation.
    pub fn pooled_sd(&self) -> f64 {
        let (nc, nt) = (self.control.len(), self.treated.len());
        let ss = |v: &[f64]| {
            let m = stats::mean(v);
            stats::sum(v.iter().map(|x| (x - m) * (x - m)))
        };
        if nc + nt > 2 {
            ((ss(&self.control) + ss(&self.treated)) / (nc + nt - 2) as f64).sqrt()
        } else {
            0.0
        }
    }

    /// Unequal-variance standard error of the difference in means.
    pub fn neyman_se(&self) -> f64 {
        let part = |v: &[f64]| {
            if v.len() > 1 {
                stats::variance(v) / v.len() as f64
            } else {
                0.0
            }
        };
        (part(&self.control) + part(&self.treated)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    /// Enumerate every assignment when there are at most this many.
    pub max_exact: u64,
    /// Random assignments drawn otherwise (the observed one is added).
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            max_exact: DEFAULT_MAX_EXACT,
            n_mc: DEFAULT_N_MC,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermutationMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed_stat: f64,
    pub p_value: f64,
    pub n_assignments_evaluated: usize,
    pub mode: PermutationMode,
}

/// `C(n, k)` as a float (exact for the sizes that matter here).
pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Each assignment's statistic under `H0: tau = tau0` is `a - tau0 * b`,
/// with `a` the raw difference in means and `b` the treated-share contrast.
#[derive(Debug, Clone)]
struct AssignmentStats {
    a: Vec<f64>,
    b: Vec<f64>,
    observed_a: f64,
    mode: PermutationMode,
}

fn assignment_stats(data: &WindowData, config: &PermutationConfig) -> AssignmentStats {
    let nc = data.control.len();
    let nt = data.treated.len();
    let n = nc + nt;
    // pooled: treated first so index < nt means originally treated
    let pooled: Vec<f64> = data.treated.iter().chain(&data.control).copied().collect();
    let total = stats::sum(pooled.iter().copied());
    let (ntf, ncf) = (nt as f64, nc as f64);
    let stat = |members: &[usize]| {
        let s: f64 = members.iter().map(|&i| pooled[i]).sum();
        let k = members.iter().filter(|&&i| i < nt).count() as f64;
        (s / ntf - (total - s) / ncf, k / ntf - (ntf - k) / ncf)
    };
    let observed_a = data.difference_in_means();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mode = if binomial(n, nt) <= config.max_exact as f64 {
        let mut comb: Vec<usize> = (0..nt).collect();
        loop {
            let (sa, sb) = stat(&comb);
            a.push(sa);
            b.push(sb);
            // next combination in lexicographic order
            let mut i = nt;
            loop {
                if i == 0 {
                    return AssignmentStats {
                        a,
                        b,
                        observed_a,
                        mode: PermutationMode::Exact,
                    };
                }
                i -= 1;
                if comb[i] < n - nt + i {
                    break;
                }
            }
            comb[i] += 1;
            for j in i + 1..nt {
                comb[j] = comb[j - 1] + 1;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        a.push(observed_a);
        b.push(1.0);
        for _ in 0..config.n_mc {
            let members = rand::seq::index::sample(&mut rng, n, nt).into_vec();
            let (sa, sb) = stat(&members);
            a.push(sa);
            b.push(sb);
        }
        PermutationMode::MonteCarlo
    };
    AssignmentStats { a, b, observed_a, mode }
}

fn tie_tolerance(observed: f64) -> f64 {
    1e-9 * (1.0 + observed.abs())
}

/// Sharp-null test of `H0: y_i(1) - y_i(0) = tau0` for every unit in the
/// window. Two-sided: assignments with `|stat| >= |observed|` (up to a
/// rounding tolerance) count as at least as extreme.
pub fn permutation_test(data: &WindowData, tau0: f64, config: &PermutationConfig) -> Result<PermutationResult> {
    if data.control.is_empty() {
        return Err(RdError::EmptyWindowSide(Side::Below));
    }
    if data.treated.is_empty() {
        return Err(RdError::EmptyWindowSide(Side::Above));
    }
    let st = assignment_stats(data, config);
    let observed = st.observed_a - tau0;
    let threshold = observed.abs() - tie_tolerance(observed);
    let extreme = st
        .a
        .iter()
        .zip(&st.b)
        .filter(|(a, b)| (*a - tau0 * *b).abs() >= threshold)
        .count();
    Ok(PermutationResult {
        observed_stat: observed,
        p_value: extreme as f64 / st.a.len() as f64,
        n_assignments_evaluated: st.a.len(),
        mode: st.mode,
    })
}

/// Hypothesised-effect grid: `points` values spanning the point estimate
/// plus or minus `half_width_sds` pooled standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width_sds: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width_sds: 6.0,
            points: 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrEstimate {
    pub estimate: EffectEstimate,
    /// The non-rejected grid points do not form one contiguous run; the
    /// reported interval is their hull.
    pub disconnected: bool,
    /// The acceptance region reaches an end of the grid.
    pub touches_grid_edge: bool,
    pub mode: PermutationMode,
    pub n_assignments: usize,
    pub grid_step: f64,
    pub n_control: usize,
    pub n_treated: usize,
}

/// p-values of the sharp-null test at each grid point.
///
/// For assignment `(a, b)` with `|b| < 1` the set of `tau0` where it is at
/// least as extreme as the observed one, `|a - tau0 b| >= |a_obs - tau0|`,
/// is a closed interval (the region where a concave quadratic is
/// non-negative), so all p-values follow from one pass with a difference
/// array.
pub fn p_value_curve(data: &WindowData, grid: &[f64], config: &PermutationConfig) -> (Vec<f64>, PermutationMode, usize) {
    let st = assignment_stats(data, config);
    let g = grid.len();
    let mut diff = vec![0i64; g + 1];
    let first_at_or_above = |t: f64| grid.partition_point(|&v| v < t);
    let last_at_or_below = |t: f64| grid.partition_point(|&v| v <= t);
    let mut add = |lo: f64, hi: f64| {
        let (i, j) = (first_at_or_above(lo), last_at_or_below(hi));
        if i < j {
            diff[i] += 1;
            diff[j] -= 1;
        }
    };
    let ao = st.observed_a;
    let scale = 1.0 + ao.abs() + grid.first().map_or(0.0, |v| v.abs()) + grid.last().map_or(0.0, |v| v.abs());
    for (&a, &b) in st.a.iter().zip(&st.b) {
        // f(t) = (b^2 - 1) t^2 - 2 (a b - ao) t + (a^2 - ao^2) >= 0
        let qa = b * b - 1.0;
        let qb = -2.0 * (a * b - ao);
        let qc = a * a - ao * ao;
        let tol = 1e-9 * scale;
        if qa.abs() < 1e-12 {
            if qb.abs() < 1e-12 * scale {
                if qc >= -tol * scale {
                    add(f64::NEG_INFINITY, f64::INFINITY);
                }
            } else {
                let root = -qc / qb;
                if qb > 0.0 {
                    add(root - tol, f64::INFINITY);
                } else {
                    add(f64::NEG_INFINITY, root + tol);
                }
            }
            continue;
        }
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let r1 = (-qb + sq) / (2.0 * qa);
        let r2 = (-qb - sq) / (2.0 * qa);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        add(lo - tol, hi + tol);
    }
    let total = st.a.len() as f64;
    let mut run = 0i64;
    let p = (0..g)
        .map(|k| {
            run += diff[k];
            run as f64 / total
        })
        .collect();
    (p, st.mode, st.a.len())
}

/// Difference-in-means estimate with the confidence set obtained by
/// inverting the sharp-null test over a grid of constant effects.
pub fn lr_interval(data: &WindowData, alpha: f64, grid: GridSpec, config: &PermutationConfig) -> Result<LrEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RdError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if grid.points < 3 {
        return Err(RdError::InvalidArgument("grid needs at least 3 points".into()));
    }
    if data.control.is_empty() {
        return Err(RdError::EmptyWindowSide(Side::Below));
    }
    if data.treated.is_empty() {
        return Err(RdError::EmptyWindowSide(Side::Above));
    }
    let tau = data.difference_in_means();
    let half = grid.half_width_sds * data.pooled_sd();
    let step = 2.0 * half / (grid.points - 1) as f64;
    let mid = (grid.points - 1) / 2;
    let values: Vec<f64> = (0..grid.points)
        .map(|k| if k == mid { tau } else { tau - half + k as f64 * step })
        .collect();
    let (p, mode, n_assignments) = p_value_curve(data, &values, config);
    let accepted: Vec<usize> = (0..values.len()).filter(|&k| p[k] > alpha).collect();
    let (lower, upper, disconnected, edge) = match (accepted.first(), accepted.last()) {
        (Some(&i), Some(&j)) => (
            values[i],
            values[j],
            j - i + 1 != accepted.len(),
            i == 0 || j == values.len() - 1,
        ),
        // nothing survives: collapse to the point estimate
        _ => (tau, tau, false, false),
    };
    Ok(LrEstimate {
        estimate: EffectEstimate {
            tau_hat: tau,
            tau_conventional: tau,
            se: data.neyman_se(),
            ci_lower: lower,
            ci_upper: upper,
            alpha,
            bandwidth: f64::NAN,
            selector: String::new(),
            inference: InferenceMethod::Lr,
        },
        disconnected,
        touches_grid_edge: edge,
        mode,
        n_assignments,
        grid_step: step,
        n_control: data.control.len(),
        n_treated: data.treated.len(),
    })
}

/// Window selection followed by [`lr_interval`]; the reported bandwidth is
/// the window half-width.
pub fn lr_analysis(
    sample: &RdSample,
    min_per_side: usize,
    rule: WindowRule,
    alpha: f64,
    grid: GridSpec,
    config: &PermutationConfig,
) -> Result<LrEstimate> {
    let window = select_window_with_rule(sample, min_per_side, rule)?;
    let data = WindowData::from_window(sample, &window)?;
    let mut out = lr_interval(&data, alpha, grid, config)?;
    out.estimate.bandwidth = window.half_width;
    out.estimate.selector = format!("LR{min_per_side}");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_order_statistic() {
        let s = RdSample::new(vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0], vec![0.0; 6], 0.0).unwrap();
        let w = select_window(&s, 2).unwrap();
        assert_eq!(w.half_width, 2.0);
        assert_eq!(w.below, vec![1, 2]);
        assert_eq!(w.above, vec![3, 4]);
        assert!(matches!(select_window(&s, 4), Err(RdError::InsufficientData(_))));
        let clamped = select_window_with_rule(&s, 4, WindowRule::ClampToAvailable).unwrap();
        assert_eq!(clamped.half_width, 3.0);
        assert_eq!(clamped.below.len() + clamped.above.len(), 6);
        let one_sided = RdSample::new(vec![1.0, 2.0], vec![0.0; 2], 0.0).unwrap();
        assert_eq!(
            select_window_with_rule(&one_sided, 1, WindowRule::ClampToAvailable),
            Err(RdError::EmptySide(Side::Below))
        );
    }

    #[test]
    fn hand_enumeration() {
        let d = WindowData::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let r = permutation_test(&d, 0.0, &PermutationConfig::default()).unwrap();
        assert_eq!(r.observed_stat, 2.0);
        assert_eq!(r.n_assignments_evaluated, 6);
        assert_eq!(r.mode, PermutationMode::Exact);
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn constant_responses_never_reject() {
        let d = WindowData::new(vec![1.0; 3], vec![1.0; 4]).unwrap();
        assert_eq!(permutation_test(&d, 0.0, &PermutationConfig::default()).unwrap().p_value, 1.0);
    }

    #[test]
    fn observed_effect_has_unit_p_value() {
        let d = WindowData::new(vec![0.3, 1.7, 0.2], vec![2.9, 4.1, 3.3, 2.2]).unwrap();
        let tau = d.difference_in_means();
        assert_eq!(permutation_test(&d, tau, &PermutationConfig::default()).unwrap().p_value, 1.0);
    }

    #[test]
    fn empty_side_is_rejected() {
        assert_eq!(WindowData::new(vec![], vec![1.0]), Err(RdError::EmptyWindowSide(Side::Below)));
    }

    #[test]
    fn curve_matches_direct_tests() {
        let d = WindowData::new(vec![0.1, 0.5, -0.2, 0.4, 0.05], vec![0.9, 0.3, 1.1, 0.6]).unwrap();
        let cfg = PermutationConfig::default();
        let grid: Vec<f64> = (0..81).map(|k| -1.0 + k as f64 * 0.0375).collect();
        let (p, mode, _) = p_value_curve(&d, &grid, &cfg);
        assert_eq!(mode, PermutationMode::Exact);
        for (t, pc) in grid.iter().zip(&p) {
            let direct = permutation_test(&d, *t, &cfg).unwrap().p_value;
            assert!((direct - pc).abs() < 1e-12, "tau0={t}: {direct} vs {pc}");
        }
    }

    #[test]
    fn zero_noise_constant_effect() {
        let d = WindowData::new(vec![1.0; 6], vec![1.25; 5]).unwrap();
        let r = lr_interval(&d, 0.05, GridSpec::default(), &PermutationConfig::default()).unwrap();
        assert_eq!(r.estimate.tau_hat, 0.25);
        assert!(r.estimate.covers(0.25));
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let control: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        let treated: Vec<f64> = (0..15).map(|i| 0.5 + (i as f64 * 0.91).cos()).collect();
        let d = WindowData::new(control, treated).unwrap();
        let cfg = PermutationConfig {
            seed: 11,
            ..Default::default()
        };
        let a = permutation_test(&d, 0.0, &cfg).unwrap();
        let b = permutation_test(&d, 0.0, &cfg).unwrap();
        assert_eq!(a.mode, PermutationMode::MonteCarlo);
        assert_eq!(a.n_assignments_evaluated, 1000);
        assert_eq!(a, b);
    }
}
