//! Replication loop for one simulation cell.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate_dataset, Dgp, MeanFunction, RunningVariable, TRUE_TAU};
use super::metrics::{aggregate, RepRecord, SimCellResult};
use crate::diss::{n_for_target_diss, population_diss, population_h_rot};
use crate::error::{RdError, Result};
use crate::local_randomization::{GridSpec, PermutationConfig, WindowRule};
use crate::methods::{Analyzer, MethodId, MethodOptions, Selector};
use crate::regression::Kernel;
use crate::stats;

fn default_methods() -> Vec<MethodId> {
    MethodId::default_set()
}

fn default_alpha() -> f64 {
    0.05
}

fn default_lr_window() -> WindowRule {
    WindowRule::ClampToAvailable
}

/// One (DGP, study size) cell of the Monte Carlo design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub rv: RunningVariable,
    pub mu: MeanFunction,
    /// Target population DISS; `n` is calibrated from it.
    pub m_bar: f64,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodId>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub kernel: Kernel,
    /// Overrides the calibrated sample size.
    #[serde(default)]
    pub n: Option<usize>,
    /// Bound for `AKM` methods; defaults to the analytic `max |mu''|`.
    #[serde(default)]
    pub m_bound: Option<f64>,
    /// LR window rule when a side is short of the minimum count.
    #[serde(default = "default_lr_window")]
    pub lr_window: WindowRule,
}

impl CellSpec {
    pub fn new(rv: RunningVariable, mu: MeanFunction, m_bar: f64, replications: usize, seed: u64) -> Self {
        Self {
            rv,
            mu,
            m_bar,
            replications,
            seed,
            methods: default_methods(),
            alpha: default_alpha(),
            kernel: Kernel::Triangular,
            n: None,
            m_bound: None,
            lr_window: default_lr_window(),
        }
    }

    pub fn with_methods(mut self, methods: Vec<MethodId>) -> Self {
        self.methods = methods;
        self
    }

    pub fn dgp(&self) -> Dgp {
        Dgp::new(self.rv, self.mu)
    }

    /// Checks the spec, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(RdError::InvalidArgument(format!("{field}: {msg}")));
        if !(self.m_bar >= 1.0 && self.m_bar.is_finite()) {
            return bad("m_bar", format!("must be a finite number >= 1, got {}", self.m_bar));
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("must lie in (0, 1), got {}", self.alpha));
        }
        if self.methods.is_empty() {
            return bad("methods", "must list at least one method".into());
        }
        if self.n == Some(0) {
            return bad("n", "must be positive".into());
        }
        if let Some(m) = self.m_bound {
            if !(m > 0.0 && m.is_finite()) {
                return bad("m_bound", format!("must be positive and finite, got {m}"));
            }
        }
        Ok(())
    }

    /// Sample size: the override, or the smallest `n` reaching the target
    /// DISS under the population rule-of-thumb bandwidth.
    pub fn resolve_n(&self) -> Result<usize> {
        match self.n {
            Some(n) => Ok(n),
            None => {
                let beta = self.rv.beta();
                n_for_target_diss(&beta, 0.5, beta.sigma_star(), self.m_bar)
            }
        }
    }

    /// Stable identifier used to derive the cell's random stream.
    pub fn cell_id(&self) -> String {
        format!("{}-{}", self.dgp().id(), self.m_bar)
    }
}

/// Everything produced by running a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutput {
    pub version: String,
    pub spec: CellSpec,
    pub dgp: String,
    pub n: usize,
    /// Population DISS and rule-of-thumb bandwidth at `n` (natural Beta scale).
    pub m_bar_population: f64,
    pub h_rot_population: f64,
    /// Median data-driven curvature bound across replications where it exists.
    pub median_m_hat: Option<f64>,
    /// Replications where every method produced a finite interval.
    pub r_common: usize,
    pub results: Vec<SimCellResult>,
    #[serde(skip)]
    pub records: Vec<RepRecord>,
}

impl CellOutput {
    pub fn result(&self, method: &str) -> Option<&SimCellResult> {
        self.results.iter().find(|r| r.method == method)
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Random stream of replication `rep`: ChaCha8 keyed by master seed and
/// cell, one stream per replication, so results do not depend on scheduling.
pub fn replication_rng(master_seed: u64, cell_id: &str, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ fnv1a(cell_id).rotate_left(17));
    rng.set_stream(rep as u64);
    rng
}

struct RepOutput {
    records: Vec<RepRecord>,
    m_hat: Option<f64>,
}

fn run_replication(spec: &CellSpec, n: usize, m_bound: f64, rep: usize) -> RepOutput {
    let dgp = spec.dgp();
    let mut rng = replication_rng(spec.seed, &spec.cell_id(), rep);
    let sample = match generate_dataset(&dgp, n, &mut rng) {
        Ok(s) => s,
        Err(e) => {
            return RepOutput {
                records: spec
                    .methods
                    .iter()
                    .map(|m| RepRecord::failure(rep, m.to_string(), None, e.to_string()))
                    .collect(),
                m_hat: None,
            }
        }
    };
    let options = MethodOptions {
        kernel: spec.kernel,
        alpha: spec.alpha,
        m_bound: Some(m_bound),
        grid: GridSpec::default(),
        permutation: PermutationConfig {
            seed: rng.next_u64(),
            ..PermutationConfig::default()
        },
        lr_window: spec.lr_window,
    };
    let mut analyzer = Analyzer::new(&sample, options);
    let needs_m_hat = spec
        .methods
        .iter()
        .any(|m| matches!(m.selector(), Some(Selector::Ik | Selector::Ak)));
    let m_hat = if needs_m_hat { analyzer.m_hat().ok().map(|b| b.value) } else { None };
    let records = spec
        .methods
        .iter()
        .map(|&method| {
            let out = analyzer.run(method);
            let label = method.to_string();
            match out.estimate {
                Ok(e) => RepRecord::interval(
                    rep,
                    label,
                    out.bandwidth.unwrap_or(e.bandwidth),
                    e.tau_hat,
                    e.ci_lower,
                    e.ci_upper,
                    TRUE_TAU,
                ),
                Err(reason) => RepRecord::failure(rep, label, out.bandwidth, reason),
            }
        })
        .collect();
    RepOutput { records, m_hat }
}

/// Run all replications of a cell on the global thread pool.
pub fn run_cell(spec: &CellSpec) -> Result<CellOutput> {
    run_cell_with_threads(spec, None)
}

/// Run a cell on a dedicated pool of `threads` workers (`None`: global
/// pool). Output is identical for any thread count.
pub fn run_cell_with_threads(spec: &CellSpec, threads: Option<usize>) -> Result<CellOutput> {
    spec.validate()?;
    let n = spec.resolve_n()?;
    let m_bound = spec.m_bound.unwrap_or_else(|| spec.mu.max_abs_second_derivative());
    let work = || -> Vec<RepOutput> {
        (0..spec.replications)
            .into_par_iter()
            .map(|rep| run_replication(spec, n, m_bound, rep))
            .collect()
    };
    let reps = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| RdError::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let r = spec.replications;
    let mut common = vec![true; r];
    for (rep, out) in reps.iter().enumerate() {
        common[rep] = out.records.iter().all(|rec| rec.success);
    }
    let m_hats: Vec<f64> = reps.iter().filter_map(|o| o.m_hat).collect();
    let records: Vec<RepRecord> = reps.into_iter().flat_map(|o| o.records).collect();
    let dgp_id = spec.dgp().id();
    let results = spec
        .methods
        .iter()
        .map(|m| {
            let label = m.to_string();
            let mine: Vec<&RepRecord> = records.iter().filter(|rec| rec.method == label).collect();
            aggregate(&dgp_id, spec.m_bar, n, &label, &mine, &common, TRUE_TAU)
        })
        .collect();
    let beta = spec.rv.beta();
    let sigma_star = beta.sigma_star();
    Ok(CellOutput {
        version: env!("CARGO_PKG_VERSION").to_string(),
        spec: spec.clone(),
        dgp: dgp_id,
        n,
        m_bar_population: population_diss(&beta, 0.5, n, sigma_star),
        h_rot_population: population_h_rot(sigma_star, n),
        median_m_hat: if m_hats.is_empty() { None } else { Some(stats::median(&m_hats)) },
        r_common: common.iter().filter(|&&c| c).count(),
        results,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation_names_field() {
        let mut s = CellSpec::new(RunningVariable::Rv2, MeanFunction::Mu2, 27.0, 10, 1);
        s.alpha = 1.5;
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("alpha"), "{err}");
        s.alpha = 0.05;
        s.methods.clear();
        assert!(s.validate().unwrap_err().to_string().contains("methods"));
    }

    #[test]
    fn unknown_method_rejected_in_json() {
        let json = r#"{"rv":"rv2","mu":"mu2","m_bar":27,"replications":5,"seed":7,"methods":["IK/CV","CCT/CV"]}"#;
        assert!(serde_json::from_str::<CellSpec>(json).is_err());
    }

    #[test]
    fn streams_differ_by_replication() {
        let mut a = replication_rng(1, "x", 0);
        let mut b = replication_rng(1, "x", 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn small_cell_runs() {
        let spec = CellSpec::new(RunningVariable::Rv1, MeanFunction::Mu1, 21.0, 6, 3);
        let out = run_cell(&spec).unwrap();
        assert_eq!(out.n, spec.resolve_n().unwrap());
        assert_eq!(out.results.len(), spec.methods.len());
        assert_eq!(out.records.len(), 6 * spec.methods.len());
        for r in &out.results {
            assert!((0.0..=1.0).contains(&r.interval_success_rate));
        }
    }
}
