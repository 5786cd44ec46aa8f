//! Certification sweeps and method comparisons with resumable record files.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use diffsmooth_core::certify::{
    parse_audit_row, CertificationRecord, DiffSmooth, DiffSmoothConfig, AUDIT_HEADER, RECORD_HEADER,
};
use diffsmooth_core::classify::{train_augmented_classifier, BayesSmoothedClassifier, SoftClassifierHandle};
use diffsmooth_core::denoise::{exact_noise_predictor, NoisePredictor, PerturbedNoisePredictor};
use diffsmooth_core::{DiffusionSchedule64, LabeledSample64, MixtureWorld64, Mlp64};
use rayon::prelude::*;

use crate::config::{streams, ClassifierKind, ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::report::{rows_for, to_csv, Manifest, ReportRow, RunKey};

/// One certification pass over the evaluation points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub method: Method,
    pub sigma: f64,
    pub sigma_local: f64,
    pub m: usize,
    pub purify: bool,
    /// Augmentation level of the classifier used for this run.
    pub sigma_train: f64,
}

impl RunSpec {
    pub fn key(&self) -> RunKey {
        RunKey {
            method: self.method.name().to_string(),
            sigma: self.sigma,
            sigma_local: self.sigma_local,
            m: self.m,
        }
    }

    pub fn file_stem(&self) -> String {
        format!(
            "{}_sigma{}_local{}_m{}",
            self.method.name(),
            self.sigma,
            self.sigma_local,
            self.m
        )
    }

    /// The four compared methods at smoothing level `sigma`.
    pub fn for_method(cfg: &ExperimentConfig, method: Method, sigma: f64) -> Vec<RunSpec> {
        let train = |default: f64| cfg.sigma_train.unwrap_or(default);
        match method {
            Method::Plain => vec![RunSpec {
                method,
                sigma,
                sigma_local: 0.0,
                m: 1,
                purify: false,
                sigma_train: train(sigma),
            }],
            Method::Dds => vec![RunSpec {
                method,
                sigma,
                sigma_local: 0.0,
                m: 1,
                purify: true,
                sigma_train: train(0.0),
            }],
            Method::Diffsmooth => {
                let mut out = Vec::new();
                for &sigma_local in &cfg.sigma_local {
                    for &m in &cfg.m {
                        out.push(RunSpec {
                            method,
                            sigma,
                            sigma_local,
                            m,
                            purify: true,
                            sigma_train: train(sigma_local),
                        });
                    }
                }
                out
            }
            Method::Ablation => {
                let sigma_local = cfg.ablation_sigma_local.unwrap_or(sigma);
                vec![RunSpec {
                    method,
                    sigma,
                    sigma_local,
                    m: cfg.ablation_m,
                    purify: false,
                    sigma_train: train(sigma_local),
                }]
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub spec: RunSpec,
    pub records: Vec<CertificationRecord<f64>>,
    pub records_path: PathBuf,
    pub audit_path: PathBuf,
}

/// World, schedule, predictor, evaluation points and a worker pool shared by
/// every run of one command.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub world: MixtureWorld64,
    pub schedule: DiffusionSchedule64,
    pub predictor: Box<dyn NoisePredictor<f64>>,
    pub points: Vec<LabeledSample64>,
    pool: rayon::ThreadPool,
    loaded_model: Option<Arc<Mlp64>>,
    classifiers: Mutex<HashMap<u64, SoftClassifierHandle<f64>>>,
}

impl Context {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let world = cfg.world()?;
        let schedule = cfg.schedule()?;
        let exact = exact_noise_predictor(&world, &schedule);
        let predictor: Box<dyn NoisePredictor<f64>> = if cfg.lambda_predictor_noise > 0.0 {
            let seed = cfg.base_seed().fork(streams::PREDICTOR);
            Box::new(PerturbedNoisePredictor::new(exact, cfg.lambda_predictor_noise, seed)?)
        } else {
            Box::new(exact)
        };
        let points = world.sample(&cfg.base_seed().fork(streams::EVAL), cfg.eval_count);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| HarnessError::config(format!("workers: {e}")))?;
        let loaded_model = match (&cfg.classifier, &cfg.model) {
            (ClassifierKind::Trained, Some(path)) => {
                Some(Arc::new(Mlp64::load(path).map_err(|e| {
                    HarnessError::config(format!("model {}: {e}", path.display()))
                })?))
            }
            _ => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            world,
            schedule,
            predictor,
            points,
            pool,
            loaded_model,
            classifiers: Mutex::new(HashMap::new()),
        })
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// The configured classifier for augmentation level `sigma_train`.
    pub fn classifier(&self, sigma_train: f64) -> Result<SoftClassifierHandle<f64>> {
        if let Some(model) = &self.loaded_model {
            return Ok(model.clone());
        }
        let mut cache = self.classifiers.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(c) = cache.get(&sigma_train.to_bits()) {
            return Ok(c.clone());
        }
        let handle: SoftClassifierHandle<f64> = match self.cfg.classifier {
            ClassifierKind::BayesSmoothed => Arc::new(BayesSmoothedClassifier::new(self.world.clone(), sigma_train)?),
            ClassifierKind::Trained => {
                let train = self.cfg.training_set(&self.world);
                Arc::new(train_augmented_classifier(&train, &self.cfg.train_config(sigma_train))?)
            }
        };
        cache.insert(sigma_train.to_bits(), handle.clone());
        Ok(handle)
    }

    /// Certifies every evaluation point under `spec`, appending to
    /// `<dir>/<stem>.tsv` and skipping indices already on disk.
    pub fn run(&self, spec: &RunSpec, dir: &Path) -> Result<RunOutput> {
        let classifier = self.classifier(spec.sigma_train)?;
        let local_shift = if spec.sigma_local > 0.0 {
            self.cfg.sigma_local_shift
        } else {
            0.0
        };
        let cert_cfg = DiffSmoothConfig {
            sigma: spec.sigma,
            sigma_local: spec.sigma_local,
            sigma_local_shift: local_shift,
            m: spec.m,
            purify: spec.purify,
            data_convention: self.cfg.data_convention()?,
            conf: self.cfg.confidence()?,
            seed: self.cfg.base_seed().fork(streams::CERTIFY),
        };
        let pipeline = DiffSmooth::new(cert_cfg, classifier.as_ref(), self.predictor.as_ref(), &self.schedule)?;

        let records_path = dir.join(format!("{}.tsv", spec.file_stem()));
        let audit_path = dir.join(format!("{}.audit.tsv", spec.file_stem()));
        let mut records = resume(&records_path, &audit_path, self.points.len())?;
        let mut rec_file = append(&records_path)?;
        let mut audit_file = append(&audit_path)?;

        let todo: Vec<usize> = (records.len()..self.points.len()).collect();
        for chunk in todo.chunks(self.cfg.chunk_size) {
            let batch: Vec<Result<CertificationRecord<f64>>> = self.install(|| {
                chunk
                    .par_iter()
                    .map(|&i| {
                        let point = &self.points[i];
                        let start = Instant::now();
                        let cert = pipeline.certify_with_seed(&point.x, cert_cfg.seed.fork(i as u64))?;
                        let elapsed = if self.cfg.record_wall_time {
                            start.elapsed().as_secs_f64()
                        } else {
                            0.0
                        };
                        Ok(CertificationRecord::new(i as u64, point.y, cert, elapsed))
                    })
                    .collect()
            });
            let mut rows = String::new();
            let mut audits = String::new();
            for r in batch {
                let r = r?;
                rows.push_str(&r.to_row());
                rows.push('\n');
                if let Some(a) = r.audit_row() {
                    audits.push_str(&a);
                    audits.push('\n');
                }
                records.push(r);
            }
            // Audit first: a record row is only trusted once its audit row exists.
            write_flush(&mut audit_file, &audit_path, &audits)?;
            write_flush(&mut rec_file, &records_path, &rows)?;
        }
        Ok(RunOutput {
            spec: *spec,
            records,
            records_path,
            audit_path,
        })
    }
}

fn append(path: &Path) -> Result<File> {
    OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| HarnessError::io(path, e))
}

fn write_flush(file: &mut File, path: &Path, text: &str) -> Result<()> {
    file.write_all(text.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| HarnessError::io(path, e))
}

/// Complete leading rows `0..k` of a file, as raw lines. Stops at the first
/// row that is unterminated, unparsable or out of sequence.
fn complete_rows<'a, R>(
    text: &'a str,
    header: &str,
    parse: impl Fn(&str, usize) -> Option<(u64, R)>,
) -> Option<Vec<(&'a str, R)>> {
    let mut lines = text.split_inclusive('\n');
    if lines.next()?.trim_end() != header {
        return None;
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let Some(body) = line.strip_suffix('\n') else { break };
        match parse(body, i + 2) {
            Some((idx, v)) if idx == out.len() as u64 => out.push((body, v)),
            _ => break,
        }
    }
    Some(out)
}

/// Truncates a record file and its audit file to the rows both completed and
/// returns those records. Creates both files when absent.
pub fn resume(records_path: &Path, audit_path: &Path, limit: usize) -> Result<Vec<CertificationRecord<f64>>> {
    let read = |p: &Path| match std::fs::read_to_string(p) {
        Ok(t) => Ok(Some(t)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(HarnessError::io(p, e)),
    };
    let rec_text = read(records_path)?.unwrap_or_default();
    let audit_text = read(audit_path)?.unwrap_or_default();
    let recs = complete_rows(&rec_text, RECORD_HEADER, |l, n| {
        CertificationRecord::<f64>::parse_row(l, n).ok().map(|r| (r.index, r))
    })
    .unwrap_or_default();
    let audits = complete_rows(&audit_text, AUDIT_HEADER, |l, n| parse_audit_row::<f64>(l, n).ok()).unwrap_or_default();
    let keep = recs.len().min(audits.len()).min(limit);

    let mut rec_out = format!("{RECORD_HEADER}\n");
    let mut audit_out = format!("{AUDIT_HEADER}\n");
    let mut records = Vec::with_capacity(keep);
    for ((line, mut rec), (aline, audit)) in recs.into_iter().zip(audits).take(keep) {
        rec_out.push_str(line);
        rec_out.push('\n');
        audit_out.push_str(aline);
        audit_out.push('\n');
        rec.audit = Some(audit);
        records.push(rec);
    }
    if rec_out != rec_text {
        std::fs::write(records_path, rec_out).map_err(|e| HarnessError::io(records_path, e))?;
    }
    if audit_out != audit_text {
        std::fs::write(audit_path, audit_out).map_err(|e| HarnessError::io(audit_path, e))?;
    }
    Ok(records)
}

/// Files produced by a sweep or comparison.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<RunOutput>,
    pub rows: Vec<ReportRow>,
    pub manifest_path: PathBuf,
    pub report_path: PathBuf,
}

fn run_all(
    cfg: &ExperimentConfig,
    specs: &[RunSpec],
    manifest_name: &str,
    report_name: &str,
) -> Result<ExperimentOutput> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let ctx = Context::new(cfg)?;
    let mut runs = Vec::with_capacity(specs.len());
    let mut rows = Vec::new();
    let mut manifest = Manifest::default();
    for spec in specs {
        let out = ctx.run(spec, dir)?;
        rows.extend(rows_for(&spec.key(), &out.records, &cfg.radius_grid));
        manifest
            .entries
            .push((spec.key(), PathBuf::from(format!("{}.tsv", spec.file_stem()))));
        runs.push(out);
    }
    let manifest_path = dir.join(manifest_name);
    let report_path = dir.join(report_name);
    std::fs::write(&manifest_path, manifest.to_tsv()).map_err(|e| HarnessError::io(&manifest_path, e))?;
    std::fs::write(&report_path, to_csv(&rows)).map_err(|e| HarnessError::io(&report_path, e))?;
    Ok(ExperimentOutput {
        runs,
        rows,
        manifest_path,
        report_path,
    })
}

/// Certifies the evaluation points for every (σ, σ′, m) in the sweep lists.
pub fn run_certification_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let specs: Vec<RunSpec> = cfg
        .sigma
        .iter()
        .flat_map(|&s| RunSpec::for_method(cfg, Method::Diffsmooth, s))
        .collect();
    run_all(cfg, &specs, "manifest.tsv", "report.csv")
}

/// Runs the configured methods on identical points and seeds.
pub fn compare_methods(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let specs: Vec<RunSpec> = cfg
        .sigma
        .iter()
        .flat_map(|&s| cfg.methods.iter().flat_map(move |&m| RunSpec::for_method(cfg, m, s)))
        .collect();
    run_all(cfg, &specs, "compare_manifest.tsv", "comparison.csv")
}
