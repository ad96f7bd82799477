//! Batch command-line front end for the `excursor` library: simulate paths,
//! compute predictions, evaluate excursion-set errors, run replicated
//! studies, and query the joint exceedance probability.
//!
//! All outputs are plain CSV (17-significant-digit numbers, LF endings) plus
//! a JSON manifest that echoes the fully resolved configuration, so any run
//! can be reproduced bit-exactly. On failure nothing is written; exit codes:
//! 2 invalid arguments or configuration, 3 numerical failure, 4 duplicate
//! observation locations, 5 grid mismatch, 1 I/O trouble.

use clap::{Parser, Subcommand};
use excursor::covariance::{CovarianceModel, CovarianceSystem, ObservationSet, Window};
use excursor::excursion::ExcursionLevels;
use excursor::io::{
    fmt_f64, parse_path_csv, render_path_csv, render_study_csvs, ParsedPath,
};
use excursor::predictors::{mse, predict, weights_for, Degeneracy, Method};
use excursor::simulate::{check_marginal_consistency, simulate_path, GridSpec};
use excursor::spd::b_quantities;
use excursor::special::{joint_exceedance, GaussianMarginal};
use excursor::study::{run_study, StudyConfig};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "excursor",
    version,
    about = "Excursion-set faithful extrapolation of Gaussian random fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one Gaussian field path on a grid and write it as CSV.
    Simulate {
        /// JSON config: {model, marginal, window, mesh, seed}.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path; a manifest is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Override the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict on an evaluation grid from an observations CSV.
    Predict {
        /// Observations CSV (t_1,...,t_d,value), e.g. a simulated path
        /// restricted to the observation sites.
        observations: PathBuf,
        /// JSON config: {model, marginal, window, eval_mesh, methods}.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path; a manifest is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated method list overriding the config.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// Compare the excursion sets of a true and a predicted path.
    Evaluate {
        /// CSV with the true path.
        truth: PathBuf,
        /// CSV with the predicted path (same grid, same column layout).
        predicted: PathBuf,
        /// Comma-separated excursion levels, e.g. "-2,-1,0,1,2".
        #[arg(long, allow_hyphen_values = true)]
        levels: String,
        /// Output CSV path for the per-level volumes.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a replicated simulation study into a directory.
    Study {
        /// JSON config: {model, marginal, window, obs_mesh, eval_mesh,
        /// levels, methods, replications, master_seed}.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for raw/summary/variance/mse CSVs + manifest.
        #[arg(long)]
        out: PathBuf,
        /// Override master_seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the method list from the config file.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Override the level list from the config file.
        #[arg(long, allow_hyphen_values = true)]
        levels: Option<String>,
        /// Worker threads for the replication loop (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print P(X > u, Xhat > u) for a bivariate normal pair.
    Orthant {
        /// Common threshold.
        u: f64,
        /// Correlation between the pair, in [-1, 1].
        rho: f64,
        /// Common mean.
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        /// Common standard deviation.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
}

/// A failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<excursor::Error> for Failure {
    fn from(err: excursor::Error) -> Self {
        Failure::new(err.exit_code() as u8, err.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate { config, out, seed } => cmd_simulate(&config, &out, seed),
        Command::Predict {
            observations,
            config,
            out,
            methods,
        } => cmd_predict(&config, &observations, &out, &methods),
        Command::Evaluate {
            truth,
            predicted,
            levels,
            out,
        } => cmd_evaluate(&truth, &predicted, &levels, &out),
        Command::Study {
            config,
            out,
            seed,
            methods,
            levels,
            threads,
        } => cmd_study(&config, &out, seed, &methods, levels.as_deref(), threads),
        Command::Orthant { u, rho, mu, sigma } => cmd_orthant(u, rho, mu, sigma),
    }
}

// ---------------------------------------------------------------------------
// config plumbing

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    model: CovarianceModel,
    marginal: GaussianMarginal,
    window: Window,
    mesh: f64,
    seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictConfig {
    model: CovarianceModel,
    marginal: GaussianMarginal,
    window: Window,
    eval_mesh: f64,
    methods: Vec<Method>,
}

/// Everything needed to reproduce a run bit-exactly with the same build.
#[derive(Serialize)]
struct RunManifest<C: Serialize> {
    tool: &'static str,
    tool_version: &'static str,
    command: &'static str,
    created_unix: u64,
    master_seed: u64,
    config: C,
}

fn manifest_json<C: Serialize>(
    command: &'static str,
    master_seed: u64,
    config: &C,
) -> CliResult<String> {
    let created_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = RunManifest {
        tool: "excursor",
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        created_unix,
        master_seed,
        config,
    };
    serde_json::to_string_pretty(&manifest)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Failure::new(1, format!("cannot serialize manifest: {e}")))
}

fn read_config<C: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<C> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(1, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::new(2, format!("config {} is invalid: {e}", path.display())))
}

fn read_path_file(path: &Path) -> CliResult<ParsedPath> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(1, format!("cannot read {}: {e}", path.display())))?;
    parse_path_csv(&text).map_err(|e| Failure::new(2, format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    std::fs::write(path, content)
        .map_err(|e| Failure::new(1, format!("cannot write {}: {e}", path.display())))
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn parse_method_names(names: &[String]) -> CliResult<Vec<Method>> {
    names
        .iter()
        .map(|n| Method::parse(n.trim()).map_err(Failure::from))
        .collect()
}

fn parse_levels(list: &str) -> CliResult<ExcursionLevels> {
    let mut levels = Vec::new();
    for part in list.split(',') {
        let level: f64 = part.trim().parse().map_err(|_| {
            Failure::new(2, format!("cannot parse level \"{part}\" as a number"))
        })?;
        levels.push(level);
    }
    ExcursionLevels::new(levels).map_err(Failure::from)
}

// ---------------------------------------------------------------------------
// commands

fn cmd_simulate(config_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut config: SimulateConfig = read_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let grid = GridSpec::new(config.window.clone(), config.mesh)?;
    let path = simulate_path(&config.model, &config.marginal, &grid, config.seed)?;
    let csv = render_path_csv(&path);
    let manifest = manifest_json("simulate", config.seed, &config)?;
    write_file(out, &csv)?;
    write_file(&manifest_path_for(out), &manifest)?;
    Ok(())
}

fn cmd_predict(
    config_path: &Path,
    observations: &Path,
    out: &Path,
    method_override: &[String],
) -> CliResult<()> {
    let mut config: PredictConfig = read_config(config_path)?;
    if !method_override.is_empty() {
        config.methods = parse_method_names(method_override)?;
    }
    if config.methods.is_empty() {
        return Err(Failure::new(2, "no methods selected"));
    }
    check_marginal_consistency(&config.model, &config.marginal)?;
    let parsed = read_path_file(observations)?;
    if parsed.dim != config.window.dim() {
        return Err(Failure::new(
            2,
            format!(
                "observations are {}-dimensional but the window is {}-dimensional",
                parsed.dim,
                config.window.dim()
            ),
        ));
    }
    let obs = ObservationSet::new(parsed.coordinates, parsed.values)?;
    let system = CovarianceSystem::build_sigma(&config.model, &obs)?;
    let grid = GridSpec::new(config.window.clone(), config.eval_mesh)?;
    let sigma2 = config.model.sigma2();

    let mut csv = String::new();
    for i in 1..=parsed.dim {
        let _ = write!(csv, "t_{i},");
    }
    csv.push_str("method,prediction,objective,mse,degenerate\n");
    for t in grid.points() {
        let ct = excursor::covariance::build_ct(&config.model, &obs, t)?;
        let bq = b_quantities(&system, &ct)?;
        let nearest = obs.nearest_to(t);
        for &method in &config.methods {
            let weights = weights_for(method, &system, &ct, sigma2, nearest)?;
            let value = predict(&weights, &obs, &config.marginal)?;
            let error = mse(method, &bq, sigma2)?;
            for x in t {
                csv.push_str(&fmt_f64(*x));
                csv.push(',');
            }
            let degenerate = match weights.degeneracy() {
                None => "none",
                Some(Degeneracy::CollinearWithOnes) => "collinear_with_ones",
                Some(Degeneracy::ZeroCrossCovariance) => "zero_cross_covariance",
            };
            let _ = writeln!(
                csv,
                "{method},{},{},{},{degenerate}",
                fmt_f64(value),
                fmt_f64(weights.objective()),
                fmt_f64(error)
            );
        }
    }
    let manifest = manifest_json("predict", 0, &config)?;
    write_file(out, &csv)?;
    write_file(&manifest_path_for(out), &manifest)?;
    Ok(())
}

fn cmd_evaluate(
    truth_path: &Path,
    predicted_path: &Path,
    levels: &str,
    out: &Path,
) -> CliResult<()> {
    let levels = parse_levels(levels)?;
    let truth = read_path_file(truth_path)?;
    let predicted = read_path_file(predicted_path)?;
    if truth.dim != predicted.dim
        || truth.coordinates.len() != predicted.coordinates.len()
        || truth.coordinates != predicted.coordinates
    {
        return Err(Failure::new(
            5,
            "the two paths do not share a grid (coordinate columns differ)",
        ));
    }
    if truth.coordinates.len() < 2 {
        return Err(Failure::new(
            2,
            "cannot infer the cell volume from fewer than two rows",
        ));
    }
    // Consecutive rows of a grid-ordered path differ by the mesh in exactly
    // one coordinate.
    let mesh = truth.coordinates[0]
        .iter()
        .zip(&truth.coordinates[1])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let cell = mesh.powi(truth.dim as i32);

    let mut csv = String::from("level,sym_diff\n");
    let mut total = 0.0;
    for &level in levels.levels() {
        let volume = excursor::excursion::symmetric_difference_from_values(
            &truth.values,
            &predicted.values,
            level,
            cell,
        )?;
        let _ = writeln!(csv, "{},{}", fmt_f64(level), fmt_f64(volume));
        total += volume;
    }
    write_file(out, &csv)?;
    println!("{}", fmt_f64(total));
    Ok(())
}

fn cmd_study(
    config_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    method_override: &[String],
    level_override: Option<&str>,
    threads: Option<usize>,
) -> CliResult<()> {
    let mut config: StudyConfig = read_config(config_path)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if !method_override.is_empty() {
        config.methods = parse_method_names(method_override)?;
    }
    if let Some(levels) = level_override {
        config.levels = parse_levels(levels)?;
    }
    let report = match threads {
        None => run_study(&config)?,
        Some(n) => {
            if n == 0 {
                return Err(Failure::new(2, "--threads must be at least 1"));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::new(1, format!("cannot build thread pool: {e}")))?;
            pool.install(|| run_study(&config))?
        }
    };
    let tables = render_study_csvs(&report);
    let manifest = manifest_json("study", config.master_seed, &config)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Failure::new(1, format!("cannot create {}: {e}", out_dir.display())))?;
    for (name, content) in &tables {
        write_file(&out_dir.join(name), content)?;
    }
    write_file(&out_dir.join("manifest.json"), &manifest)?;
    Ok(())
}

fn cmd_orthant(u: f64, rho: f64, mu: f64, sigma: f64) -> CliResult<()> {
    let marginal = GaussianMarginal::new(mu, sigma)?;
    let p = joint_exceedance(u, rho, &marginal)?;
    println!("{p:.14e}");
    Ok(())
}
