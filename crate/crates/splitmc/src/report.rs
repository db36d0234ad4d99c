//! Machine-readable outputs: versioned JSON reports and RFC-4180-style
//! CSV files, written atomically (temp file + rename).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;

/// Version stamp embedded in every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// Reproducibility header shared by all reports.
#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub schema_version: u32,
    pub seed: u64,
    pub config: RunConfig,
}

impl Meta {
    pub fn new(config: &RunConfig) -> Self {
        Meta { schema_version: SCHEMA_VERSION, seed: config.run.seed, config: config.clone() }
    }
}

/// Output of `analyze-chain`.
#[derive(Clone, Debug, Serialize)]
pub struct AnalyzeReport {
    #[serde(flatten)]
    pub meta: Meta,
    pub scheme: String,
    pub n_states: usize,
    pub stationary_exact: Vec<f64>,
    pub stationary_scheme: Vec<f64>,
    /// (dt, normalized RER) on the grid.
    pub rer_grid: Vec<(f64, f64)>,
    pub fitted_slope: f64,
    pub fitted_rsq: f64,
    /// Expansion coefficients of H/dt^round(slope) in increasing
    /// powers of dt.
    pub fitted_coeffs: Vec<f64>,
    pub diameter: u32,
    pub k_hat: u32,
    pub predicted_order: Option<u32>,
    pub predicted_order_note: Option<String>,
    pub commutator_p: u32,
    pub commutator_max_entry: f64,
    pub commutator_residual: f64,
    pub lie_cross_check: Option<f64>,
    pub uq: Vec<UqRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct UqRow {
    pub observable: usize,
    pub dt: f64,
    pub xi_minus: f64,
    pub xi_plus: f64,
    pub linearized_bound: f64,
    pub stationary_gap: f64,
}

/// Output of `simulate`.
#[derive(Clone, Debug, Serialize)]
pub struct SimulateReport {
    #[serde(flatten)]
    pub meta: Meta,
    pub scheme: String,
    pub n_sites: usize,
    pub dt: f64,
    pub steps: u64,
    pub sampled_steps: u64,
    pub coefficient_estimate: f64,
    pub coefficient_stderr: f64,
    pub coefficient_order: u32,
    pub excluded_samples: u64,
    pub pp_rer: f64,
    pub mean_coverage: f64,
    pub sync_events: u64,
    pub boundary_rate_evals: u64,
    /// Table-style per-step bound for reference.
    pub comm_bound_per_step: f64,
}

/// Hardware-dependent timing sidecar, kept out of the deterministic
/// outputs.
#[derive(Clone, Debug, Serialize)]
pub struct TimingSidecar {
    pub schema_version: u32,
    pub wall_seconds: f64,
    pub wall_fraction_comm: f64,
}

/// Output of `compare`.
#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    #[serde(flatten)]
    pub meta: Meta,
    pub a1: f64,
    pub p1: u32,
    pub a2: f64,
    pub p2: u32,
    /// (dt, A1 dt^p1 - A2 dt^p2) on the grid.
    pub criterion: Vec<(f64, f64)>,
    /// dt where the criterion changes sign, when p2 > p1.
    pub crossover_dt: Option<f64>,
    pub comm_bound_scheme1: Option<f64>,
    pub comm_bound_scheme2: Option<f64>,
}

/// Serializes to pretty JSON and writes atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    write_atomic(path, text.as_bytes())
}

/// Writes a header and rows as CSV, atomically. Fields containing
/// commas or quotes are quoted.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let encoded: Vec<String> = row
            .iter()
            .map(|f| {
                if f.contains(',') || f.contains('"') || f.contains('\n') {
                    format!("\"{}\"", f.replace('"', "\"\""))
                } else {
                    f.clone()
                }
            })
            .collect();
        out.push_str(&encoded.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes to `<path>.tmp` in the same directory, then renames into
/// place, so failures never leave partial files behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp: PathBuf = {
        let mut os = path.as_os_str().to_owned();
        os.push(".tmp");
        os.into()
    };
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Deterministic decimal formatting for CSV numbers.
pub fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v:.12e}")
    }
}
