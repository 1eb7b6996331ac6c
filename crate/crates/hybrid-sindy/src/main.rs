//! Command-line front end: `simulate`, `identify`, and `sweep` subcommands
//! driven by a TOML experiment config, writing deterministic artifacts plus a
//! run manifest under the output directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybrid_sindy::config::{config_hash, ConfigFile};
use hybrid_sindy::dynamics::{add_noise, derive_seed};
use hybrid_sindy::error::{Error, Result};
use hybrid_sindy::pipeline;
use hybrid_sindy::report::{
    write_catalog_json, write_regime_map_csv, write_scoreboard_csv, write_sweep_csv,
    write_trajectory_csv, RunManifest,
};
use hybrid_sindy::{diagnostics, Error as HsError};

#[derive(Parser)]
#[command(name = "hybrid-sindy", version, about = "Regime-switching system identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap worker parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured training/validation trajectories to CSV.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the full identification and write catalog, regime map, scoreboard.
    Identify {
        #[command(flatten)]
        common: CommonArgs,
        /// How many top-frequency models to print.
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Run the cluster-size / noise-level sweep.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common } => with_common(&common, cmd_simulate),
        Command::Identify { common, top } => with_common(&common, |c, f, o| cmd_identify(c, f, o, top)),
        Command::Sweep { common } => with_common(&common, cmd_sweep),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn with_common(
    common: &CommonArgs,
    body: impl FnOnce(&CommonArgs, &ConfigFile, &Path) -> Result<()>,
) -> Result<()> {
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(Error::config("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| HsError::config(format!("cannot configure --jobs: {e}")))?;
    }
    let file = ConfigFile::load(&common.config)?;
    std::fs::create_dir_all(&common.out)?;
    body(common, &file, &common.out)
}

fn cmd_simulate(common: &CommonArgs, file: &ConfigFile, out: &Path) -> Result<()> {
    let config = file.pipeline_config(common.seed)?;
    let (train_clean, validation_clean) = pipeline::split(&config)?;
    // Apply the same measurement noise the identification consumes, with the
    // same sub-seeds, so these CSVs are exactly the pipeline's input data.
    let training = add_noise(
        &train_clean,
        config.noise_std,
        derive_seed(config.seed, "pipeline-train", 0),
    );
    let validation = add_noise(
        &validation_clean,
        config.noise_std,
        derive_seed(config.seed, "pipeline-validation", 0),
    );

    let mut manifest = RunManifest::new("simulate", config_hash(&config, config.seed), config.seed);
    let train_path = out.join("training.csv");
    write_trajectory_csv(&train_path, &training)?;
    manifest.record(&train_path);
    let validation_path = out.join("validation.csv");
    write_trajectory_csv(&validation_path, &validation)?;
    manifest.record(&validation_path);
    manifest.write(out)?;
    println!(
        "wrote {} training samples and {} validation samples to {}",
        training.n_samples(),
        validation.n_samples(),
        out.display()
    );
    Ok(())
}

fn cmd_identify(common: &CommonArgs, file: &ConfigFile, out: &Path, top: usize) -> Result<()> {
    let config = file.pipeline_config(common.seed)?;
    let output = pipeline::run(&config)?;

    let mut manifest = RunManifest::new("identify", config_hash(&config, config.seed), config.seed);
    let catalog_path = out.join("catalog.json");
    write_catalog_json(&catalog_path, &output)?;
    manifest.record(&catalog_path);
    let map_path = out.join("regime_map.csv");
    write_regime_map_csv(&map_path, &output.regime_map)?;
    manifest.record(&map_path);
    let scoreboard_path = out.join("scoreboard.csv");
    write_scoreboard_csv(&scoreboard_path, &output.scoreboard)?;
    manifest.record(&scoreboard_path);
    manifest.write(out)?;

    let resolved = output.regime_map.iter().filter(|r| r.best.is_some()).count();
    println!(
        "{} clusters, {} resolved, {} distinct supported models",
        output.regime_map.len(),
        resolved,
        output.catalog.len()
    );
    println!("top models by cross-cluster frequency:");
    println!("{:<6} {:<10} {:<12} model", "rank", "frequency", "mean aicc");
    for (rank, (sig, entry)) in output.catalog.rank_by_frequency(top).iter().enumerate() {
        let equations = match entry.representative_coefficients() {
            Some(rep) => render_equations(&rep, &output.library),
            None => sig.to_string(),
        };
        println!(
            "{:<6} {:<10} {:<12.3e} {}",
            rank + 1,
            entry.frequency(),
            entry.mean_aicc(),
            equations
        );
    }
    Ok(())
}

fn render_equations(
    coefficients: &nalgebra::DMatrix<f64>,
    library: &hybrid_sindy::features::FeatureLibrary,
) -> String {
    let mut parts = Vec::new();
    for j in 0..coefficients.ncols() {
        let mut terms = Vec::new();
        for l in 0..coefficients.nrows() {
            let c = coefficients[(l, j)];
            if c != 0.0 {
                terms.push(format!("{:+.4}*{}", c, library.names()[l]));
            }
        }
        let rhs = if terms.is_empty() { "0".to_string() } else { terms.join(" ") };
        parts.push(format!("d(x{})/dt = {}", j + 1, rhs));
    }
    parts.join(";  ")
}

fn cmd_sweep(common: &CommonArgs, file: &ConfigFile, out: &Path) -> Result<()> {
    let (config, seed) = file.sweep_config(common.seed)?;
    let cells = diagnostics::noise_sweep(&config, seed)?;

    let mut manifest = RunManifest::new("sweep", config_hash(&config, seed), seed);
    let sweep_path = out.join("sweep.csv");
    write_sweep_csv(&sweep_path, &cells)?;
    manifest.record(&sweep_path);
    manifest.write(out)?;

    let usable = cells.iter().filter(|c| !c.skipped).count();
    println!(
        "swept {} cells ({} usable) over {} cluster sizes and {} noise levels",
        cells.len(),
        usable,
        config.cluster_sizes.len(),
        config.noise_levels.len()
    );
    Ok(())
}
