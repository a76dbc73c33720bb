//! Command-line front end: modulator design, response sweeps, BER
//! campaigns and analysis tables, all emitted as plot-ready data files with
//! a checksummed run manifest.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.

mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use config::{parse_toml, toml_echo, DesignConfig, SimulateConfig, DESK_SCALE, PAPER_SCALE};
use output::{csv_header, OutputSet};
use sdmimo::analysis;
use sdmimo::designs;
use sdmimo::modulator::{DesignFile, FilterDesign};
use sdmimo::sim;
use sdmimo::socp::{self, FilterOrder, TargetFreq};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or usage: exit 2.
    Config(String),
    /// Numerical failure (solver breakdown, non-convergence): exit 3.
    Numerical(String),
}

impl From<sdmimo::Error> for CliError {
    fn from(e: sdmimo::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sdmimo",
    version,
    about = "Spatial sigma-delta precoding toolkit"
)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a max-min SQNR modulator design and write coefficients + report.
    Design {
        /// TOML design configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutDir,
        /// Overrides the config seed (echoed into the manifest).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep the relative noise-shaping response of a saved design.
    Response {
        /// Design JSON produced by `design` (or written by hand).
        #[arg(long)]
        design: PathBuf,
        #[command(flatten)]
        out: OutDir,
        #[arg(long, default_value_t = -89.0)]
        theta_start: f64,
        #[arg(long, default_value_t = 89.0)]
        theta_end: f64,
        #[arg(long, default_value_t = 721)]
        points: usize,
        /// Antenna spacing d/lambda used to map angles to frequencies.
        #[arg(long, default_value_t = 0.25)]
        spacing_ratio: f64,
        /// Second-axis spacing for 2D designs (defaults to --spacing-ratio).
        #[arg(long)]
        spacing_ratio_2: Option<f64>,
        #[arg(long, default_value_t = -89.0)]
        phi_start: f64,
        #[arg(long, default_value_t = 89.0)]
        phi_end: f64,
        /// Grid points per axis for 2D designs.
        #[arg(long, default_value_t = 61)]
        phi_points: usize,
    },
    /// Run a Monte-Carlo BER campaign.
    Simulate {
        /// TOML scenario configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutDir,
        /// Overrides the config master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Published scale (N = 1024, 1000 trials) instead of desk scale.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Reproduce analysis tables and noise-model validation data.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeWhat,
    },
}

#[derive(Subcommand)]
enum AnalyzeWhat {
    /// Norm statistics of the zero-noise design over random angle draws.
    Table1 {
        #[command(flatten)]
        out: OutDir,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Band-stop coefficient norms against their order bounds.
    Bounds {
        #[command(flatten)]
        out: OutDir,
        #[arg(long, default_value_t = 8)]
        l_max: usize,
        /// Band-stop center frequency (radians).
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
        omega_c: f64,
    },
    /// Empirical vs predicted quantization noise power over a frequency grid.
    NoiseModel {
        #[command(flatten)]
        out: OutDir,
        /// Design JSON; defaults to the first-order one-bit modulator.
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        omega_start: f64,
        #[arg(long, default_value_t = 2.0)]
        omega_end: f64,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 1024)]
        antennas: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // Ignore the error when a pool already exists (tests reuse the process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Design { config, out, seed } => run_design(&config, &out.out_dir, seed),
        Command::Response {
            design,
            out,
            theta_start,
            theta_end,
            points,
            spacing_ratio,
            spacing_ratio_2,
            phi_start,
            phi_end,
            phi_points,
        } => run_response(
            &design,
            &out.out_dir,
            (theta_start, theta_end, points),
            (phi_start, phi_end, phi_points),
            spacing_ratio,
            spacing_ratio_2,
        ),
        Command::Simulate {
            config,
            out,
            seed,
            paper_scale,
        } => run_simulate(&config, &out.out_dir, seed, paper_scale),
        Command::Analyze { what } => run_analyze(what),
    }
}

fn db_or_floor(linear: f64) -> f64 {
    if linear <= 0.0 {
        analysis::RNSR_FLOOR_DB
    } else {
        (10.0 * linear.log10()).max(analysis::RNSR_FLOOR_DB)
    }
}

#[derive(Serialize)]
struct SolverReport {
    status: String,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    relative_gap: f64,
}

#[derive(Serialize)]
struct TargetLine {
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega2: Option<f64>,
    sqnr_db: Option<f64>,
    rnsr_db: f64,
}

#[derive(Serialize)]
struct DesignReport {
    mode: String,
    m_levels: usize,
    order: serde_json::Value,
    amplitude: f64,
    iq_norm1: f64,
    overload_safe: bool,
    objective: f64,
    min_sqnr_db: Option<f64>,
    worst_rnsr_db: f64,
    solver: SolverReport,
    targets: Vec<TargetLine>,
}

fn run_design(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let cfg: DesignConfig = parse_toml(config_path)?;
    let spec = cfg.to_spec()?;
    let outcome = socp::design(&spec, cfg.solver_tol())?;

    let mut out = OutputSet::create(out_dir)?;
    let file = outcome.design.to_file();
    out.write(
        "design.json",
        serde_json::to_string_pretty(&file)
            .map_err(|e| CliError::Config(e.to_string()))?
            .as_bytes(),
    )?;

    let order = match spec.order {
        FilterOrder::OneD(l) => json!(l),
        FilterOrder::TwoD(l1, l2) => json!([l1, l2]),
    };
    let targets = outcome
        .per_target
        .iter()
        .map(|t| {
            let (omega, omega1, omega2) = match t.freq {
                TargetFreq::One(w) => (Some(w), None, None),
                TargetFreq::Two(w1, w2) => (None, Some(w1), Some(w2)),
            };
            TargetLine {
                omega,
                omega1,
                omega2,
                sqnr_db: t.sqnr.to_db(),
                rnsr_db: db_or_floor(t.rnsr),
            }
        })
        .collect();
    let report = DesignReport {
        mode: cfg.mode.clone(),
        m_levels: cfg.m_levels,
        order,
        amplitude: outcome.design.amplitude(),
        iq_norm1: outcome.design.iq_norm1(),
        overload_safe: outcome.design.is_overload_safe(),
        objective: outcome.solution.objective,
        min_sqnr_db: outcome.min_sqnr.to_db(),
        worst_rnsr_db: db_or_floor(outcome.worst_rnsr),
        solver: SolverReport {
            status: format!("{:?}", outcome.solution.status),
            iterations: outcome.solution.iterations,
            primal_residual: outcome.solution.kkt.primal,
            dual_residual: outcome.solution.kkt.dual,
            relative_gap: outcome.solution.kkt.relative_gap,
        },
        targets,
    };
    out.write(
        "design_report.json",
        serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Config(e.to_string()))?
            .as_bytes(),
    )?;
    out.finish("design", toml_echo(config_path)?, seed.or(cfg.seed))
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn load_design(path: &Path) -> Result<FilterDesign<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: DesignFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))?;
    Ok(FilterDesign::from_file(&file)?)
}

fn run_response(
    design_path: &Path,
    out_dir: &Path,
    theta: (f64, f64, usize),
    phi: (f64, f64, usize),
    spacing_ratio: f64,
    spacing_ratio_2: Option<f64>,
) -> Result<(), CliError> {
    let (theta_start, theta_end, points) = theta;
    if points == 0 {
        return Err(CliError::Config("sweep needs at least one point".into()));
    }
    let design = load_design(design_path)?;
    let mut csv = csv_header();
    if design.is_one_d() {
        csv.push_str("theta_deg,rnsr_db\n");
        let thetas: Vec<f64> = linspace(theta_start, theta_end, points)
            .into_iter()
            .map(f64::to_radians)
            .collect();
        for (t, db) in analysis::rnsr_sweep(&design, &thetas, spacing_ratio)? {
            csv.push_str(&format!("{},{}\n", t.to_degrees(), db));
        }
    } else {
        let (phi_start, phi_end, phi_points) = phi;
        if phi_points == 0 {
            return Err(CliError::Config(
                "sweep needs at least one phi point".into(),
            ));
        }
        let geometry = sdmimo::array::UpaGeometry::new(
            1,
            1,
            spacing_ratio,
            spacing_ratio_2.unwrap_or(spacing_ratio),
        )?;
        csv.push_str("theta_deg,phi_deg,rnsr_db\n");
        for t_deg in linspace(theta_start, theta_end, points) {
            for p_deg in linspace(phi_start, phi_end, phi_points) {
                let linear =
                    designs::rnsr_2d(&design, t_deg.to_radians(), p_deg.to_radians(), &geometry)?;
                csv.push_str(&format!("{},{},{}\n", t_deg, p_deg, db_or_floor(linear)));
            }
        }
    }
    let mut out = OutputSet::create(out_dir)?;
    out.write("response.csv", csv.as_bytes())?;
    let echo = json!({
        "design": design_path.display().to_string(),
        "theta_start": theta_start,
        "theta_end": theta_end,
        "points": points,
        "spacing_ratio": spacing_ratio,
    });
    out.finish("response", echo, None)
}

fn run_simulate(
    config_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    paper_scale: bool,
) -> Result<(), CliError> {
    let raw: SimulateConfig = parse_toml(config_path)?;
    let scale = if paper_scale {
        &PAPER_SCALE
    } else {
        &DESK_SCALE
    };
    let cfg = raw.resolve(scale, seed)?;
    let report = sim::run_ber(&cfg)?;

    let mut out = OutputSet::create(out_dir)?;
    out.write(
        "ber.csv",
        report.to_csv(env!("CARGO_PKG_VERSION")).as_bytes(),
    )?;
    out.write(
        "ber_summary.json",
        serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Config(e.to_string()))?
            .as_bytes(),
    )?;
    out.finish("simulate", toml_echo(config_path)?, Some(cfg.master_seed))
}

fn run_analyze(what: AnalyzeWhat) -> Result<(), CliError> {
    match what {
        AnalyzeWhat::Table1 {
            out,
            k_min,
            k_max,
            samples,
            seed,
        } => {
            if k_min == 0 || k_min > k_max {
                return Err(CliError::Config("need 1 <= k_min <= k_max".into()));
            }
            let mut csv = csv_header();
            csv.push_str("k,min,mean,rms,max,n_samples\n");
            for k in k_min..=k_max {
                let s = analysis::norm_stats(k, samples, seed)?;
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    s.k, s.min, s.mean, s.rms, s.max, s.n_samples
                ));
            }
            let mut set = OutputSet::create(&out.out_dir)?;
            set.write("table1.csv", csv.as_bytes())?;
            set.finish(
                "analyze table1",
                json!({"k_min": k_min, "k_max": k_max, "samples": samples, "seed": seed}),
                Some(seed),
            )
        }
        AnalyzeWhat::Bounds {
            out,
            l_max,
            omega_c,
        } => {
            if l_max == 0 {
                return Err(CliError::Config("l_max must be at least 1".into()));
            }
            let mut csv = csv_header();
            csv.push_str("l,lower_bound,iq_norm,upper_bound\n");
            for l in 1..=l_max {
                let g = designs::band_stop_coeffs::<f64>(l, omega_c)?;
                let norm = designs::iq_norm1(&g);
                let (lo, hi) = designs::band_stop_norm_bounds::<f64>(l);
                csv.push_str(&format!("{l},{lo},{norm},{hi}\n"));
            }
            let mut set = OutputSet::create(&out.out_dir)?;
            set.write("bounds.csv", csv.as_bytes())?;
            set.finish(
                "analyze bounds",
                json!({"l_max": l_max, "omega_c": omega_c}),
                None,
            )
        }
        AnalyzeWhat::NoiseModel {
            out,
            design,
            omega_start,
            omega_end,
            points,
            antennas,
            trials,
            seed,
        } => {
            if points == 0 {
                return Err(CliError::Config("points must be at least 1".into()));
            }
            let d = match &design {
                Some(path) => load_design(path)?,
                None => designs::first_order::<f64>(2)?,
            };
            let omegas = linspace(omega_start, omega_end, points);
            let rows = analysis::validate_noise_model(&d, &omegas, antennas, trials, seed)?;
            let mut csv = csv_header();
            csv.push_str("omega,empirical,predicted,ratio_db,overloads\n");
            for r in rows {
                let ratio = r.ratio_db.map(|v| v.to_string()).unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.omega, r.empirical, r.predicted, ratio, r.overload_events
                ));
            }
            let mut set = OutputSet::create(&out.out_dir)?;
            set.write("noise_model.csv", csv.as_bytes())?;
            set.finish(
                "analyze noise-model",
                json!({
                    "design": design.map(|p| p.display().to_string()),
                    "omega_start": omega_start,
                    "omega_end": omega_end,
                    "points": points,
                    "antennas": antennas,
                    "trials": trials,
                    "seed": seed,
                }),
                Some(seed),
            )
        }
    }
}
