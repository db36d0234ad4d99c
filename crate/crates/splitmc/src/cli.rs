//! Command-line entry point: `analyze-chain`, `simulate`, `sweep`,
//! and `compare`, all driven by a TOML config and writing versioned
//! JSON/CSV outputs atomically.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::{
    self, commutator, connectivity, exact_matrix, fit_order, goal_oriented_bounds,
    linearized_bound, predict_order, rer, scheme_matrix, stationary, AnalysisError,
};
use crate::config::{ConfigError, RunConfig, SystemConfig};
use crate::estimator::{
    dt_for_tolerance, info_criterion, pp_rer, EstimatorError, RerAccumulator, TupleSet,
};
use crate::kmc::{checkerboard, comm_bound, simulate, CoverageHook, Decomposition, KmcError, SampleHook};
use crate::model::{
    complement_pairs, lattice_generator, restrict, ArrheniusRates, DenseGenerator, Group,
    LatticeDims, ModelError, SchemeKind, SchemeSpec, SpinConfiguration,
};
use crate::report::{
    fmt_f64, write_csv, write_json, AnalyzeReport, CompareReport, Meta, SimulateReport,
    TimingSidecar, UqRow,
};

/// Operator-splitting simulator and RER analysis toolkit for
/// continuous-time Markov chains.
#[derive(Parser, Debug)]
#[command(name = "splitmc", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dense ground-truth analysis of a small chain: RER expansion,
    /// connectivity, commutator, predicted order, UQ bounds.
    AnalyzeChain(CommonArgs),
    /// Lattice KMC run with online RER coefficient estimation.
    Simulate(CommonArgs),
    /// RER vs dt sweep for both schemes, with fitted slopes and the
    /// tolerance inversion table.
    Sweep(CommonArgs),
    /// RER information criterion between Lie and Strang.
    Compare(CommonArgs),
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: SPLITMC_THREADS env var, then all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Kmc(#[from] KmcError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    /// 2 for analysis/oracle errors, 3 for config/validation errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Model(_) | CliError::Kmc(_) | CliError::Invalid(_) => 3,
            CliError::Analysis(_) | CliError::Estimator(_) | CliError::Io(_) => 2,
        }
    }
}

/// Parses argv, runs the command, and returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command) -> Result<(), CliError> {
    let args = match cmd {
        Command::AnalyzeChain(a) | Command::Simulate(a) | Command::Sweep(a) | Command::Compare(a) => a,
    };
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    let threads = args
        .threads
        .or_else(|| std::env::var("SPLITMC_THREADS").ok().and_then(|v| v.parse().ok()));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot build thread pool: {e}")))?;
    pool.install(|| match cmd {
        Command::AnalyzeChain(_) => cmd_analyze_chain(&config, &args.out),
        Command::Simulate(_) => cmd_simulate(&config, &args.out),
        Command::Sweep(_) => cmd_sweep(&config, &args.out),
        Command::Compare(_) => cmd_compare(&config, &args.out),
    })
}

/// Dense view of the configured system: full generator plus the two
/// restrictions.
struct DenseSystem {
    l: DenseGenerator,
    l1: DenseGenerator,
    l2: DenseGenerator,
    n_sites: usize,
}

fn dense_system(config: &RunConfig) -> Result<DenseSystem, CliError> {
    match &config.system {
        SystemConfig::Dense { .. } => {
            let l = config.dense_generator()?;
            let mask = config.split_mask().expect("dense system has a mask");
            let l1 = restrict(&l, &mask);
            let l2 = restrict(&l, &complement_pairs(l.n_states(), &mask));
            let n = l.n_states();
            if n > analysis::DENSE_STATE_CAP {
                return Err(AnalysisError::TooLarge(n, analysis::DENSE_STATE_CAP).into());
            }
            Ok(DenseSystem { l, l1, l2, n_sites: 1 })
        }
        SystemConfig::Lattice { .. } => {
            let dims = config.lattice_dims().expect("lattice system");
            let params = config.arrhenius().expect("lattice system");
            let n_sites = dims.n_sites();
            if n_sites > 12 {
                return Err(CliError::Invalid(format!(
                    "lattice with {n_sites} sites exceeds the dense-engine cap; use simulate"
                )));
            }
            let decomp = checkerboard(dims, config.decomposition.m)?;
            let l1 = lattice_generator(dims, &params, Some((&decomp.site_group, Group::G1)))?;
            let l2 = lattice_generator(dims, &params, Some((&decomp.site_group, Group::G2)))?;
            let l = l1.add(&l2)?;
            Ok(DenseSystem { l, l1, l2, n_sites })
        }
    }
}

/// Normalized RER of the scheme chain against the exact skeleton at
/// one dt, sampled from the scheme's stationary measure.
fn dense_rer_at(sys: &DenseSystem, scheme: &SchemeSpec, dt: f64) -> Result<f64, AnalysisError> {
    let po = exact_matrix(&sys.l1, &sys.l2, dt)?;
    let pb = scheme_matrix(&sys.l1, &sys.l2, scheme, dt)?;
    let mu = stationary(&pb)?;
    rer(&pb, &po, &mu)
}

fn default_observables(n: usize) -> Vec<Vec<f64>> {
    let count = if n <= 8 { n } else { 3 };
    (0..count)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn cmd_analyze_chain(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let sys = dense_system(config)?;
    let scheme = SchemeSpec::new(config.scheme.kind);
    let grid = config.grid();

    let mut samples = Vec::new();
    for &dt in &grid {
        samples.push((dt, dense_rer_at(&sys, &scheme, dt)?));
    }
    // Degenerate splits (e.g. an empty mask) make the scheme exact and
    // the RER identically zero; report zeros instead of fitting.
    let zero_rer = samples.iter().all(|&(_, h)| h.abs() < 1e-14);
    let (slope, coeffs, rsq) = if zero_rer {
        (0.0, vec![0.0], 1.0)
    } else {
        let fit = fit_order(&samples)?;
        (fit.slope, fit.coeffs, fit.rsq)
    };

    let conn = connectivity(&sys.l, scheme.p);
    let comm = commutator(&sys.l, &sys.l1, &sys.l2, &scheme)?;
    let (predicted, note) = match predict_order(&conn, &comm) {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let dt = config.run.dt;
    let po = exact_matrix(&sys.l1, &sys.l2, dt)?;
    let pb = scheme_matrix(&sys.l1, &sys.l2, &scheme, dt)?;
    let mu_exact = stationary(&po)?;
    let mu_scheme = stationary(&pb)?;

    let observables = config
        .run
        .observables
        .clone()
        .unwrap_or_else(|| default_observables(sys.l.n_states()));
    let mut uq = Vec::new();
    for (oi, f) in observables.iter().enumerate() {
        if f.len() != sys.l.n_states() {
            return Err(CliError::Invalid(format!(
                "observable {oi} has {} entries for {} states",
                f.len(),
                sys.l.n_states()
            )));
        }
        if zero_rer {
            // Identical chains: every bound degenerates to zero.
            uq.push(UqRow {
                observable: oi,
                dt,
                xi_minus: 0.0,
                xi_plus: 0.0,
                linearized_bound: 0.0,
                stationary_gap: 0.0,
            });
            continue;
        }
        let (xi_minus, xi_plus) = goal_oriented_bounds(&pb, &po, f)?;
        let lin = linearized_bound(&pb, &po, f, 1_000_000)?;
        let gap: f64 = mu_scheme
            .iter()
            .zip(&mu_exact)
            .zip(f)
            .map(|((a, b), v)| (a - b) * v)
            .sum();
        uq.push(UqRow {
            observable: oi,
            dt,
            xi_minus,
            xi_plus,
            linearized_bound: lin,
            stationary_gap: gap,
        });
    }

    let report = AnalyzeReport {
        meta: Meta::new(config),
        scheme: scheme_name(config.scheme.kind).into(),
        n_states: sys.l.n_states(),
        stationary_exact: mu_exact,
        stationary_scheme: mu_scheme,
        rer_grid: samples,
        fitted_slope: slope,
        fitted_rsq: rsq,
        fitted_coeffs: coeffs,
        diameter: conn.diameter,
        k_hat: conn.k_hat,
        predicted_order: predicted,
        predicted_order_note: note,
        commutator_p: comm.p,
        commutator_max_entry: comm.c.max_norm(),
        commutator_residual: comm.residual,
        lie_cross_check: comm.lie_cross_check,
        uq,
    };
    write_json(&out.join("analyze.json"), &report)?;
    Ok(())
}

/// Records the coverage time series for the observables CSV.
#[derive(Default)]
struct SeriesHook {
    rows: Vec<(u64, f64)>,
}

impl SampleHook for SeriesHook {
    fn on_sample(&mut self, sigma: &SpinConfiguration) {
        self.rows.push((self.rows.len() as u64, sigma.coverage()));
    }
}

/// Accumulator wired up as a simulation hook.
pub struct EstimatorHook {
    pub acc: RerAccumulator,
    tuples: TupleSet,
    decomp: Decomposition,
    params: ArrheniusRates,
}

impl EstimatorHook {
    pub fn new(scheme: SchemeKind, conservative: bool, decomp: &Decomposition, params: ArrheniusRates) -> Self {
        EstimatorHook {
            acc: RerAccumulator::new(scheme, conservative),
            tuples: TupleSet::new(decomp),
            decomp: decomp.clone(),
            params,
        }
    }
}

impl SampleHook for EstimatorHook {
    fn on_sample(&mut self, sigma: &SpinConfiguration) {
        self.acc.accumulate(sigma, &self.tuples, &self.decomp, &self.params);
    }
}

fn lattice_setup(config: &RunConfig) -> Result<(LatticeDims, ArrheniusRates, Decomposition), CliError> {
    let dims = config
        .lattice_dims()
        .ok_or_else(|| CliError::Invalid("this command needs a lattice system".into()))?;
    let params = config.arrhenius().expect("lattice system");
    let decomp = checkerboard(dims, config.decomposition.m)?;
    Ok((dims, params, decomp))
}

fn scheme_name(kind: SchemeKind) -> &'static str {
    match kind {
        SchemeKind::Lie => "lie",
        SchemeKind::Strang => "strang",
    }
}

pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let start = std::time::Instant::now();
    let (dims, params, decomp) = lattice_setup(config)?;
    let scheme = SchemeSpec::new(config.scheme.kind);
    let dt = config.run.dt;

    let initial = SpinConfiguration::empty(dims);
    let mut est = EstimatorHook::new(config.scheme.kind, config.scheme.conservative, &decomp, params);
    let mut cov = CoverageHook::default();
    let mut series = SeriesHook::default();
    let mut events = if config.run.emit_events { Some(Vec::new()) } else { None };
    let summary = simulate(
        &initial,
        &decomp,
        &params,
        &scheme,
        dt,
        config.run.t_end,
        config.run.burn_in,
        config.run.seed,
        &mut [&mut est, &mut cov, &mut series],
        events.as_mut(),
    )?;

    let (estimate, stderr) = if summary.sampled_steps > 0 {
        (est.acc.estimate()?, est.acc.stderr()?)
    } else {
        (0.0, 0.0)
    };
    let pp = if summary.sampled_steps > 0 {
        pp_rer(&est.acc, dims.n_sites(), dt)?
    } else {
        0.0
    };

    let report = SimulateReport {
        meta: Meta::new(config),
        scheme: scheme_name(config.scheme.kind).into(),
        n_sites: dims.n_sites(),
        dt,
        steps: summary.steps,
        sampled_steps: summary.sampled_steps,
        coefficient_estimate: estimate,
        coefficient_stderr: stderr,
        coefficient_order: est.acc.order,
        excluded_samples: est.acc.excluded,
        pp_rer: pp,
        mean_coverage: if cov.count > 0 { cov.mean() } else { 0.0 },
        sync_events: summary.comm.sync_events,
        boundary_rate_evals: summary.comm.boundary_rate_evals,
        comm_bound_per_step: comm_bound(decomp.m, dims.side(), &scheme),
    };
    write_json(&out.join("simulate.json"), &report)?;

    // Coverage series, thinned to at most ~10k rows.
    let stride = (series.rows.len() / 10_000).max(1);
    let rows: Vec<Vec<String>> = series
        .rows
        .iter()
        .step_by(stride)
        .map(|&(i, c)| {
            let step = summary.steps - summary.sampled_steps + i;
            vec![step.to_string(), fmt_f64((step + 1) as f64 * dt), fmt_f64(c)]
        })
        .collect();
    write_csv(&out.join("observables.csv"), &["step", "time", "coverage"], &rows)?;

    if let Some(events) = events {
        let rows: Vec<Vec<String>> = events
            .iter()
            .map(|e| {
                vec![
                    e.step.to_string(),
                    e.sublattice.to_string(),
                    e.site.to_string(),
                    e.new_spin.to_string(),
                    fmt_f64(e.time),
                ]
            })
            .collect();
        write_csv(
            &out.join("events.csv"),
            &["step", "sublattice", "site", "new_spin", "time"],
            &rows,
        )?;
    }

    // Hardware-dependent timing goes to a sidecar so the main outputs
    // stay byte-identical across thread counts.
    let timing = TimingSidecar {
        schema_version: crate::report::SCHEMA_VERSION,
        wall_seconds: start.elapsed().as_secs_f64(),
        wall_fraction_comm: summary.comm.wall_fraction_comm,
    };
    write_json(&out.join("timing.json"), &timing)?;
    Ok(())
}

pub fn cmd_sweep(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid = config.grid();
    if grid.len() < 4 {
        return Err(CliError::Invalid(format!(
            "sweep needs at least 4 grid points, got {}",
            grid.len()
        )));
    }
    let tol = config.run.tolerance;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut summary = serde_json::Map::new();
    summary.insert("schema_version".into(), crate::report::SCHEMA_VERSION.into());
    summary.insert("seed".into(), config.run.seed.into());
    summary.insert(
        "config".into(),
        serde_json::to_value(config).map_err(std::io::Error::other)?,
    );

    for kind in [SchemeKind::Lie, SchemeKind::Strang] {
        let scheme = SchemeSpec::new(kind);
        let (points, stderrs, n_sites) = sweep_points(config, &scheme, &grid)?;
        let fit = fit_order(&points)?;
        let order = fit.rounded_slope().max(1) as u32;
        let admissible = dt_for_tolerance(fit.coeffs[0].max(f64::MIN_POSITIVE), order, tol)?;
        for (i, &(dt, h)) in points.iter().enumerate() {
            rows.push(vec![
                scheme_name(kind).into(),
                fmt_f64(dt),
                fmt_f64(h / n_sites as f64),
                fmt_f64(stderrs[i] / n_sites as f64),
                fmt_f64(fit.slope),
                fmt_f64(fit.coeffs[0]),
                fmt_f64(admissible),
            ]);
        }
        summary.insert(
            format!("{}_fit", scheme_name(kind)),
            serde_json::json!({
                "slope": fit.slope,
                "coeff": fit.coeffs[0],
                "rsq": fit.rsq,
                "dt_for_tolerance": admissible,
                "tolerance": tol,
            }),
        );
    }
    write_csv(
        &out.join("sweep.csv"),
        &["scheme", "dt", "pp_rer", "stderr", "fitted_slope", "fitted_coeff", "dt_for_tolerance"],
        &rows,
    )?;
    write_json(&out.join("sweep.json"), &serde_json::Value::Object(summary))?;
    Ok(())
}

/// Normalized RER samples over the grid: exact (dense) when the state
/// space is enumerable, estimator-based simulation otherwise.
fn sweep_points(
    config: &RunConfig,
    scheme: &SchemeSpec,
    grid: &[f64],
) -> Result<(Vec<(f64, f64)>, Vec<f64>, usize), CliError> {
    let dense_ok = match &config.system {
        SystemConfig::Dense { .. } => true,
        SystemConfig::Lattice { .. } => {
            config.lattice_dims().map(|d| d.n_sites() <= 12).unwrap_or(false)
        }
    };
    if dense_ok {
        let sys = dense_system(config)?;
        let mut pts = Vec::new();
        for &dt in grid {
            pts.push((dt, dense_rer_at(&sys, scheme, dt)?));
        }
        let zeros = vec![0.0; pts.len()];
        Ok((pts, zeros, sys.n_sites))
    } else {
        let (dims, params, decomp) = lattice_setup(config)?;
        let mut pts = Vec::new();
        let mut errs = Vec::new();
        for &dt in grid {
            let initial = SpinConfiguration::empty(dims);
            let mut est =
                EstimatorHook::new(scheme.kind, config.scheme.conservative, &decomp, params);
            simulate(
                &initial,
                &decomp,
                &params,
                scheme,
                dt,
                config.run.t_end,
                config.run.burn_in,
                config.run.seed,
                &mut [&mut est],
                None,
            )?;
            let h = est.acc.estimate()? * dt.powi(est.acc.order as i32);
            let se = est.acc.stderr()? * dt.powi(est.acc.order as i32);
            pts.push((dt, h));
            errs.push(se);
        }
        Ok((pts, errs, dims.n_sites()))
    }
}

pub fn cmd_compare(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid = config.grid();
    let mut fits = Vec::new();
    for kind in [SchemeKind::Lie, SchemeKind::Strang] {
        let scheme = SchemeSpec::new(kind);
        let (points, _, _) = sweep_points(config, &scheme, &grid)?;
        if points.iter().all(|&(_, h)| h.abs() < 1e-14) {
            fits.push((0.0, 0));
            continue;
        }
        let fit = fit_order(&points)?;
        fits.push((fit.coeffs[0], fit.rounded_slope().max(0) as u32));
    }
    let (a1, p1) = fits[0];
    let (a2, p2) = fits[1];
    let criterion: Vec<(f64, f64)> =
        grid.iter().map(|&dt| (dt, info_criterion(dt, (a1, p1), (a2, p2)))).collect();
    let crossover = if p2 > p1 && a1 > 0.0 && a2 > 0.0 {
        let dt = (a1 / a2).powf(1.0 / (p2 - p1) as f64);
        if dt.is_finite() {
            Some(dt)
        } else {
            None
        }
    } else {
        None
    };
    let (b1, b2) = match config.lattice_dims() {
        Some(dims) => (
            Some(comm_bound(config.decomposition.m, dims.side(), &SchemeSpec::lie())),
            Some(comm_bound(config.decomposition.m, dims.side(), &SchemeSpec::strang())),
        ),
        None => (None, None),
    };
    let report = CompareReport {
        meta: Meta::new(config),
        a1,
        p1,
        a2,
        p2,
        criterion,
        crossover_dt: crossover,
        comm_bound_scheme1: b1,
        comm_bound_scheme2: b2,
    };
    write_json(&out.join("compare.json"), &report)?;
    Ok(())
}
