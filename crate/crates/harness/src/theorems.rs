//! Drives the purification guarantee checks over a grid of failure budgets.

use std::fmt::Write as _;
use std::path::Path;

use diffsmooth_core::denoise::{exact_noise_predictor, PerturbedNoisePredictor};
use diffsmooth_core::theory::{validate_theorem1, validate_theorem2, Theorem1Config, Theorem2Check, Theorem2Config};
use diffsmooth_core::TheoremReport64;

use crate::config::{streams, ExperimentConfig};
use crate::error::{HarnessError, Result};

/// Probability that a normal estimate exceeds its mean by three standard errors.
const THREE_SIGMA_TAIL: f64 = 0.001_349_898_031_630_094_6;

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub passed: bool,
    /// Largest violation rate that still passes.
    pub threshold: f64,
    pub report: TheoremReport64,
}

/// `p + 4√(p(1−p)/n)`.
pub fn four_se_threshold(p: f64, trials: u64) -> f64 {
    p + 4.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// The reverse-SDE proximity check for each `eta` and the one-shot denoising check once; writes one key-value report
/// and one per-trial CSV per check plus `theorem_summary.tsv`.
pub fn run_theorem_suite(cfg: &ExperimentConfig) -> Result<Vec<SuiteEntry>> {
    cfg.validate()?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let world = cfg.world()?;
    let schedule = cfg.schedule()?;
    let sde = schedule.continuous();
    let t_star = sde.time_for_alpha_bar(cfg.alpha_bar_star)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::config(format!("workers: {e}")))?;

    let mut entries = Vec::new();
    for (i, &eta) in cfg.eta.iter().enumerate() {
        let t1 = Theorem1Config {
            eta,
            t_star,
            delta_norm: cfg.delta_norm,
            trials: cfg.theorem1_trials,
            sde_steps: cfg.sde_steps,
            seed: cfg.base_seed().fork(streams::THEOREM1).fork(i as u64),
        };
        let report = pool.install(|| validate_theorem1(&world, &sde, &t1))?;
        let threshold = four_se_threshold(eta, report.trials);
        let passed = report.empirical_violation_rate <= threshold && report.mean_slack > 0.0;
        entries.push(SuiteEntry {
            name: format!("theorem1_eta{eta}"),
            passed,
            threshold,
            report,
        });
    }

    let exact = exact_noise_predictor(&world, &schedule);
    let lambda = cfg.lambda_predictor_noise;
    let t2 = Theorem2Config {
        conditional_draws: cfg.conditional_draws,
        sigma_range: (cfg.theorem2_sigma_min, cfg.theorem2_sigma_max),
        ..Theorem2Config::for_lambda(lambda, cfg.theorem2_trials, cfg.base_seed().fork(streams::THEOREM2))
    };
    let report = if lambda > 0.0 {
        let p = PerturbedNoisePredictor::new(exact, lambda, cfg.base_seed().fork(streams::PREDICTOR))?;
        pool.install(|| validate_theorem2(&world, &schedule, &p, &t2))?
    } else {
        pool.install(|| validate_theorem2(&world, &schedule, &exact, &t2))?
    };
    let threshold = match t2.check {
        Theorem2Check::Exact(_) => 0.0,
        Theorem2Check::Bound => four_se_threshold(THREE_SIGMA_TAIL, report.trials),
    };
    let passed = report.empirical_violation_rate <= threshold;
    entries.push(SuiteEntry {
        name: format!("theorem2_lambda{lambda}"),
        passed,
        threshold,
        report,
    });

    let mut summary = String::from("check\tpassed\tviolation_rate\tthreshold\tmean_slack\n");
    for e in &entries {
        write_file(&dir.join(format!("{}.txt", e.name)), &e.report.to_key_value())?;
        write_file(&dir.join(format!("{}.csv", e.name)), &e.report.to_csv())?;
        let _ = writeln!(
            summary,
            "{}\t{}\t{}\t{}\t{}",
            e.name, e.passed, e.report.empirical_violation_rate, e.threshold, e.report.mean_slack
        );
    }
    write_file(&dir.join("theorem_summary.tsv"), &summary)?;
    Ok(entries)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
