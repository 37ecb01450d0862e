//! The three subcommands and their reports.

use std::fs;
use std::path::{Path, PathBuf};

use rdss_core::diss::{calibration_table, diss_m};
use rdss_core::local_randomization::PermutationConfig;
use rdss_core::simulation::{run_cell_with_threads, CellOutput, CellSpec, RunningVariable, M_BAR_TARGETS};
use rdss_core::{Analyzer, MethodId, MethodOptions, RdError, RdSample};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::input::{read_columns, Columns};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Where and how a report is written.
pub struct Sink {
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl Sink {
    fn write_text(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }

    /// JSON renders `report`; CSV renders `rows`, one observation per row.
    pub fn emit<R: Serialize, T: Serialize>(&self, report: &R, rows: &[T]) -> Result<()> {
        match self.format {
            Format::Json => self.write_text(&(to_json(report)? + "\n")),
            Format::Csv => self.write_text(&to_csv(rows)?),
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.into()))
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn warn_dropped(cols: &Columns) {
    if cols.dropped > 0 {
        eprintln!("warning: dropped {} rows with missing or non-numeric values", cols.dropped);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataConfig {
    pub input: PathBuf,
    pub x_col: String,
    pub y_col: String,
    pub cutoff: f64,
    pub strict: bool,
}

impl DataConfig {
    fn load(&self) -> Result<(RdSample, Columns)> {
        if !self.cutoff.is_finite() {
            return Err(CliError::Config(format!("cutoff must be finite, got {}", self.cutoff)));
        }
        let cols = read_columns(&self.input, &self.x_col, &self.y_col, self.strict)?;
        warn_dropped(&cols);
        let sample = RdSample::new(cols.x.clone(), cols.y.clone(), self.cutoff)?;
        Ok((sample, cols))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DissRow {
    pub n: usize,
    pub n_below: usize,
    pub h_rot: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DissReport {
    pub version: &'static str,
    pub config: DataConfig,
    pub dropped_rows: usize,
    #[serde(flatten)]
    pub row: DissRow,
}

pub fn diss(config: DataConfig) -> Result<DissReport> {
    let (sample, cols) = config.load()?;
    let d = diss_m(&sample)?;
    Ok(DissReport {
        version: VERSION,
        dropped_rows: cols.dropped,
        row: DissRow {
            n: sample.len(),
            n_below: sample.split().below.len(),
            h_rot: d.h_rot,
            m: d.m,
        },
        config,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisConfig {
    #[serde(flatten)]
    pub data: DataConfig,
    pub alpha: f64,
    pub methods: Vec<MethodId>,
    pub lr_min: usize,
    pub m_bound: Option<f64>,
    pub seed: u64,
}

impl AnalysisConfig {
    /// Methods from a comma-separated list; a bare `LR` takes `lr_min`.
    /// Without a list: IK and AK with every continuity interval, LR, and
    /// the AKM intervals when a bound is supplied.
    pub fn resolve_methods(list: Option<&str>, lr_min: usize, m_bound: Option<f64>) -> Result<Vec<MethodId>> {
        let methods = match list {
            Some(list) => list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    if s.eq_ignore_ascii_case("LR") {
                        Ok(MethodId::Lr { min_per_side: lr_min })
                    } else {
                        s.parse::<MethodId>().map_err(|e| CliError::Config(e.to_string()))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            None => {
                let mut m: Vec<MethodId> = MethodId::default_set()
                    .into_iter()
                    .map(|id| match id {
                        MethodId::Lr { .. } => MethodId::Lr { min_per_side: lr_min },
                        other => other,
                    })
                    .collect();
                if m_bound.is_some() {
                    for inf in ["AKM/CV", "AKM/RBC", "AKM/FLCI"] {
                        m.push(inf.parse().expect("known method"));
                    }
                }
                m
            }
        };
        if methods.is_empty() {
            return Err(CliError::Config("at least one method must be selected".into()));
        }
        Ok(methods)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.lr_min == 0 {
            return Err(CliError::Config("lr-min must be at least 1".into()));
        }
        if let Some(m) = self.m_bound {
            if !(m > 0.0 && m.is_finite()) {
                return Err(CliError::Config(format!("m-bound must be positive, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodRow {
    pub method: String,
    pub success: bool,
    pub bandwidth: Option<f64>,
    pub tau_hat: Option<f64>,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub version: &'static str,
    pub config: AnalysisConfig,
    pub dropped_rows: usize,
    pub diss: DissRow,
    /// Data-driven curvature bound used by IK/FLCI and AK.
    pub m_hat: Option<f64>,
    pub results: Vec<MethodRow>,
}

pub fn analyze(config: AnalysisConfig) -> Result<AnalyzeReport> {
    config.validate()?;
    let (sample, cols) = config.data.load()?;
    let d = diss_m(&sample)?;
    let options = MethodOptions {
        alpha: config.alpha,
        m_bound: config.m_bound,
        permutation: PermutationConfig {
            seed: config.seed,
            ..PermutationConfig::default()
        },
        ..MethodOptions::default()
    };
    let mut analyzer = Analyzer::new(&sample, options);
    let results = config
        .methods
        .iter()
        .map(|&method| {
            let out = analyzer.run(method);
            match out.estimate {
                Ok(e) => MethodRow {
                    method: method.to_string(),
                    success: true,
                    bandwidth: Some(e.bandwidth),
                    tau_hat: Some(e.tau_hat),
                    se: Some(e.se),
                    ci_lower: Some(e.ci_lower),
                    ci_upper: Some(e.ci_upper),
                    reason: None,
                },
                Err(reason) => MethodRow {
                    method: method.to_string(),
                    success: false,
                    bandwidth: out.bandwidth,
                    tau_hat: None,
                    se: None,
                    ci_lower: None,
                    ci_upper: None,
                    reason: Some(reason),
                },
            }
        })
        .collect();
    let m_hat = analyzer.m_hat().ok().map(|b| b.value);
    Ok(AnalyzeReport {
        version: VERSION,
        dropped_rows: cols.dropped,
        diss: DissRow {
            n: sample.len(),
            n_below: sample.split().below.len(),
            h_rot: d.h_rot,
            m: d.m,
        },
        m_hat,
        results,
        config,
    })
}

/// Reads and validates a cell spec, reporting the offending field.
pub fn load_spec(path: &Path) -> Result<CellSpec> {
    if !path.is_file() {
        return Err(CliError::FileNotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let spec: CellSpec = serde_path_to_error::deserialize(de).map_err(|e| CliError::SpecValidation {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    validate_spec(&spec)?;
    Ok(spec)
}

fn validate_spec(spec: &CellSpec) -> Result<()> {
    spec.validate().map_err(|e| match e {
        RdError::InvalidArgument(msg) => {
            let (field, message) = msg.split_once(": ").unwrap_or(("spec", msg.as_str()));
            CliError::SpecValidation {
                field: field.to_string(),
                message: message.to_string(),
            }
        }
        other => CliError::Core(other),
    })
}

/// One line of the per-replication dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub rep: usize,
    pub method: String,
    pub bw: Option<f64>,
    pub success: bool,
    pub tau_hat: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub width: Option<f64>,
    pub covered: Option<bool>,
}

pub fn rep_rows(out: &CellOutput) -> Vec<RepRow> {
    out.records
        .iter()
        .map(|r| RepRow {
            rep: r.rep,
            method: r.method.clone(),
            bw: r.bw,
            success: r.success,
            tau_hat: r.tau_hat,
            ci_lo: r.ci_lo,
            ci_hi: r.ci_hi,
            width: r.width,
            covered: r.covered,
        })
        .collect()
}

pub fn simulate(mut spec: CellSpec, seed: Option<u64>, threads: Option<usize>) -> Result<CellOutput> {
    if let Some(s) = seed {
        spec.seed = s;
    }
    validate_spec(&spec)?;
    Ok(run_cell_with_threads(&spec, threads)?)
}

/// Writes `result.json` and `replications.csv` into `dir`.
pub fn write_simulation(out: &CellOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("result.json"), to_json(out)? + "\n")?;
    fs::write(dir.join("replications.csv"), to_csv(&rep_rows(out))?)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationLine {
    pub rv: String,
    pub m_bar_target: f64,
    pub n: usize,
    pub h_rot: f64,
    pub m_bar: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub version: &'static str,
    pub scale: &'static str,
    pub rows: Vec<CalibrationLine>,
}

/// Sample size and population rule-of-thumb bandwidth for each running
/// variable at each target DISS.
pub fn calibration() -> Result<CalibrationReport> {
    let mut rows = Vec::new();
    for rv in [RunningVariable::Rv1, RunningVariable::Rv2, RunningVariable::Rv3] {
        let beta = rv.beta();
        for row in calibration_table(&beta, &M_BAR_TARGETS)? {
            rows.push(CalibrationLine {
                rv: rv.label().to_string(),
                m_bar_target: row.target,
                n: row.n,
                h_rot: row.h_rot,
                m_bar: row.m_bar,
            });
        }
    }
    Ok(CalibrationReport {
        version: VERSION,
        scale: "Beta scale on [0, 1], cutoff 0.5",
        rows,
    })
}
