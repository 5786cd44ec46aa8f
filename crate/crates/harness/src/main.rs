use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use diffsmooth_core::classify::train_augmented_classifier;
use diffsmooth_core::MixtureWorld64;
use diffsmooth_harness::report::{report_from_manifest, to_csv};
use diffsmooth_harness::{
    compare_methods, run_certification_experiment, run_theorem_suite, ExperimentConfig, HarnessError, Result,
};

/// Certified robustness experiments: diffusion purification with local smoothing.
#[derive(Debug, Parser)]
#[command(name = "diffsmooth", version)]
struct Cli {
    /// TOML config file; every key can also be set with --set.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sigma=[0.25,0.5]`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WorldKind {
    Canonical,
    TwoClass,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a world file.
    GenWorld {
        #[arg(long, value_enum, default_value = "canonical")]
        kind: WorldKind,
        /// Half the distance between the two-class means.
        #[arg(long, default_value_t = 2.0)]
        offset: f64,
        /// Component scale of the two-class world.
        #[arg(long, default_value_t = 0.5)]
        scale: f64,
        /// Defaults to `<out>/world.txt`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train a Gaussian-augmented classifier and write its parameter file.
    Train {
        /// Defaults to `<out>/model.txt`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Certify the evaluation points over the sigma / sigma_local / m sweep.
    Certify,
    /// Compare plain smoothing, denoised smoothing, local smoothing and the ablation.
    Compare,
    /// Monte-Carlo checks of the purification guarantees.
    ValidateTheorems,
    /// Rebuild a CSV report from a manifest of record files.
    Report {
        /// Defaults to `<out>/manifest.tsv`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(w) = cli.workers {
        overrides.push(format!("workers={w}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("out_dir={}", toml::Value::String(out.display().to_string())));
    }
    ExperimentConfig::load(cli.config.as_deref(), &overrides)
}

fn write(path: &PathBuf, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.clone(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::GenWorld {
            kind,
            offset,
            scale,
            output,
        } => {
            let world = match kind {
                WorldKind::Canonical => MixtureWorld64::canonical(),
                WorldKind::TwoClass => MixtureWorld64::two_class(offset, scale)?,
            };
            let path = output.unwrap_or_else(|| cfg.out_dir.join("world.txt"));
            write(&path, &world.to_text())?;
            println!("wrote {}", path.display());
        }
        Command::Train { output } => {
            let world = cfg.world()?;
            let sigma_train = cfg.sigma_train.unwrap_or(cfg.sigma[0]);
            let train = cfg.training_set(&world);
            let model = train_augmented_classifier(&train, &cfg.train_config(sigma_train))?;
            let path = output.unwrap_or_else(|| cfg.out_dir.join("model.txt"));
            write(&path, &model.to_text())?;
            println!("wrote {} (sigma_train = {sigma_train})", path.display());
        }
        Command::Certify => {
            let out = run_certification_experiment(&cfg)?;
            println!(
                "wrote {} and {}",
                out.report_path.display(),
                out.manifest_path.display()
            );
        }
        Command::Compare => {
            let out = compare_methods(&cfg)?;
            println!(
                "wrote {} and {}",
                out.report_path.display(),
                out.manifest_path.display()
            );
        }
        Command::ValidateTheorems => {
            let entries = run_theorem_suite(&cfg)?;
            for e in &entries {
                println!(
                    "{}\t{}\tviolation_rate={}\tthreshold={}\tmean_slack={}",
                    if e.passed { "PASS" } else { "FAIL" },
                    e.name,
                    e.report.empirical_violation_rate,
                    e.threshold,
                    e.report.mean_slack
                );
            }
            let failed: Vec<&str> = entries.iter().filter(|e| !e.passed).map(|e| e.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(HarnessError::Acceptance(failed.join(", ")));
            }
        }
        Command::Report { manifest, output } => {
            let manifest = manifest.unwrap_or_else(|| cfg.out_dir.join("manifest.tsv"));
            let csv = to_csv(&report_from_manifest(&manifest, &cfg.radius_grid)?);
            match output {
                Some(path) => write(&path, &csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
