//! Purify-then-classify base model, Monte-Carlo vote counting, certification
//! with a Clopper-Pearson lower bound, and the tab-separated record format.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::classify::{argmax, SoftClassifier};
use crate::denoise::{denoise_at, NoisePredictor};
use crate::schedule::{DiffusionSchedule, Timestep};
use crate::stats::{
    binomial_test_half, fill_normal, lower_conf_bound, normal_quantile, ConfidenceParams, DrawRng, SeedSpec,
};
use crate::{Error, Real, Result};

/// How inputs map onto the diffusion model's data range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataConvention {
    /// Inputs already live where the model was trained; noise level `σ`.
    #[default]
    Raw,
    /// Inputs in `[0,1]`, model trained on `[-1,1]`; noise level `2σ`.
    UnitInterval,
}

impl std::str::FromStr for DataConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "unit_interval" => Ok(Self::UnitInterval),
            other => Err(Error::config(format!(
                "unknown data_convention `{other}` (raw | unit_interval)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffSmoothConfig<T> {
    /// Smoothing noise level.
    pub sigma: T,
    /// Local smoothing noise level applied after purification.
    pub sigma_local: T,
    /// Added to `sigma_local` when drawing local noise.
    pub sigma_local_shift: T,
    /// Local smoothing draws per purified sample.
    pub m: usize,
    /// When false the base classifier sees the noisy input directly.
    pub purify: bool,
    pub data_convention: DataConvention,
    pub conf: ConfidenceParams<T>,
    pub seed: SeedSpec,
}

impl<T: Real> DiffSmoothConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(Error::config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.sigma_local >= T::zero() && self.sigma_local <= self.sigma) {
            return Err(Error::config(format!(
                "sigma_local must be in [0, sigma = {}], got {}",
                self.sigma, self.sigma_local
            )));
        }
        if !(self.sigma_local_shift >= T::zero()) || !self.sigma_local_shift.is_finite() {
            return Err(Error::config(format!(
                "sigma_local_shift must be >= 0, got {}",
                self.sigma_local_shift
            )));
        }
        if self.m == 0 {
            return Err(Error::config("m must be >= 1"));
        }
        self.conf.validate()
    }

    pub fn local_scale(&self) -> T {
        self.sigma_local + self.sigma_local_shift
    }
}

impl Default for DiffSmoothConfig<f64> {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            sigma_local: 0.25,
            sigma_local_shift: 0.0,
            m: 5,
            purify: true,
            data_convention: DataConvention::Raw,
            conf: ConfidenceParams::default(),
            seed: SeedSpec::new(0, 0),
        }
    }
}

/// `n` evaluations of `f(x + δ)` with `δ ~ N(0, σ² I)`, tallied per class.
///
/// Draw `i` takes generator `i` of `seed`: first the smoothing noise, then
/// whatever `f` consumes. The counts do not depend on how rayon splits the
/// range.
pub fn sample_under_noise<T, F>(f: &F, x: &[T], n: u64, sigma: T, num_classes: usize, seed: &SeedSpec) -> Vec<u64>
where
    T: Real,
    F: Fn(&[T], &mut DrawRng) -> usize + Sync + ?Sized,
{
    (0..n)
        .into_par_iter()
        .fold(
            || (vec![0u64; num_classes], vec![T::zero(); x.len()]),
            |(mut counts, mut probe), i| {
                let mut rng = seed.rng(i);
                fill_normal(&mut rng, sigma, &mut probe);
                probe.iter_mut().zip(x).for_each(|(p, &v)| *p = *p + v);
                let c = f(&probe, &mut rng);
                assert!(c < num_classes, "base classifier returned label {c} of {num_classes}");
                counts[c] += 1;
                (counts, probe)
            },
        )
        .map(|(counts, _)| counts)
        .reduce(
            || vec![0u64; num_classes],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        )
}

/// Index of the largest count, ties to the smallest index.
pub fn top_class(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Recorded inputs of a certification decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Audit<T> {
    pub c_hat: usize,
    pub counts0: Vec<u64>,
    pub counts: Vec<u64>,
    pub p_lower: T,
    pub sigma: T,
    pub alpha: T,
    pub seed: SeedSpec,
}

impl<T: Real> Audit<T> {
    /// Recomputes `(p_lower, radius)` from the stored counts; radius is
    /// `None` for an abstention.
    pub fn recompute(&self) -> Result<(T, Option<T>)> {
        let n: u64 = self.counts.iter().sum();
        let k = *self
            .counts
            .get(self.c_hat)
            .ok_or_else(|| Error::domain(format!("c_hat {} outside the counts", self.c_hat)))?;
        let p_lower = lower_conf_bound(k, n, T::one() - self.alpha)?;
        let radius = decide(p_lower, self.sigma)?;
        Ok((p_lower, radius))
    }
}

/// `σ Φ⁻¹(p_lower)` when `p_lower > ½`, otherwise `None`.
fn decide<T: Real>(p_lower: T, sigma: T) -> Result<Option<T>> {
    if p_lower > T::lit(0.5) {
        Ok(Some(sigma * normal_quantile(p_lower)?))
    } else {
        Ok(None)
    }
}

/// Outcome of certifying one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate<T> {
    /// `None` means ABSTAIN.
    pub prediction: Option<usize>,
    pub radius: T,
    pub audit: Audit<T>,
}

/// `σ/2 (Φ⁻¹(p_A) − Φ⁻¹(p_B))` for a lower bound on the top class and an
/// upper bound on the runner-up.
pub fn radius_two_sided<T: Real>(sigma: T, p_a_lower: T, p_b_upper: T) -> Result<T> {
    Ok(sigma * T::lit(0.5) * (normal_quantile(p_a_lower)? - normal_quantile(p_b_upper)?))
}

/// A configured purify-then-classify pipeline.
pub struct DiffSmooth<'a, T, F: ?Sized, P: ?Sized> {
    cfg: DiffSmoothConfig<T>,
    classifier: &'a F,
    predictor: &'a P,
    timestep: Option<Timestep<T>>,
}

impl<'a, T, F, P> DiffSmooth<'a, T, F, P>
where
    T: Real,
    F: SoftClassifier<T> + ?Sized,
    P: NoisePredictor<T> + ?Sized,
{
    pub fn new(
        cfg: DiffSmoothConfig<T>,
        classifier: &'a F,
        predictor: &'a P,
        schedule: &DiffusionSchedule<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        let timestep = if cfg.purify {
            let level = match cfg.data_convention {
                DataConvention::Raw => cfg.sigma,
                DataConvention::UnitInterval => T::lit(2.0) * cfg.sigma,
            };
            Some(schedule.compute_timestep(level)?)
        } else {
            None
        };
        Ok(Self {
            cfg,
            classifier,
            predictor,
            timestep,
        })
    }

    pub fn config(&self) -> &DiffSmoothConfig<T> {
        &self.cfg
    }

    /// Diffusion step matched to the smoothing noise, if purifying.
    pub fn timestep(&self) -> Option<Timestep<T>> {
        self.timestep
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.num_classes()
    }

    /// One-shot denoising of a noisy input at the matched step.
    pub fn purify(&self, x_rs: &[T]) -> Vec<T> {
        let Some(ts) = self.timestep else {
            return x_rs.to_vec();
        };
        let root = ts.alpha_bar.sqrt();
        match self.cfg.data_convention {
            DataConvention::Raw => {
                let x_t: Vec<T> = x_rs.iter().map(|&v| root * v).collect();
                denoise_at(self.predictor, &x_t, ts.t, ts.alpha_bar)
            }
            DataConvention::UnitInterval => {
                let two = T::lit(2.0);
                let x_t: Vec<T> = x_rs.iter().map(|&v| root * (two * v - T::one())).collect();
                let mut out = denoise_at(self.predictor, &x_t, ts.t, ts.alpha_bar);
                out.iter_mut().for_each(|v| *v = (*v + T::one()) / two);
                out
            }
        }
    }

    /// `argmax_c Σ_i F(x̂ + δ'_i)_c` over `m` local draws.
    pub fn classify_purified(&self, x_hat: &[T], rng: &mut DrawRng) -> usize {
        let k = self.classifier.num_classes();
        let scale = self.cfg.local_scale();
        let mut total = vec![T::zero(); k];
        let mut conf = vec![T::zero(); k];
        let mut probe = x_hat.to_vec();
        for _ in 0..self.cfg.m {
            if scale > T::zero() {
                fill_normal(rng, scale, &mut probe);
                probe.iter_mut().zip(x_hat).for_each(|(p, &v)| *p = *p + v);
            }
            self.classifier.confidences_into(&probe, &mut conf);
            total.iter_mut().zip(&conf).for_each(|(t, &c)| *t = *t + c);
        }
        argmax(&total)
    }

    pub fn purify_classify(&self, x_rs: &[T], rng: &mut DrawRng) -> usize {
        self.classify_purified(&self.purify(x_rs), rng)
    }

    /// Vote counts of the purified base classifier under smoothing noise.
    pub fn sample_counts(&self, x: &[T], n: u64, seed: &SeedSpec) -> Vec<u64> {
        let f = |z: &[T], rng: &mut DrawRng| self.purify_classify(z, rng);
        sample_under_noise(&f, x, n, self.cfg.sigma, self.num_classes(), seed)
    }

    pub fn certify(&self, x: &[T]) -> Result<Certificate<T>> {
        self.certify_with_seed(x, self.cfg.seed)
    }

    /// Selection draws use `seed.fork(0)`, estimation draws `seed.fork(1)`.
    pub fn certify_with_seed(&self, x: &[T], seed: SeedSpec) -> Result<Certificate<T>> {
        let conf = self.cfg.conf;
        let counts0 = self.sample_counts(x, conf.n0, &seed.fork(0));
        let c_hat = top_class(&counts0);
        let counts = self.sample_counts(x, conf.n, &seed.fork(1));
        let p_lower = lower_conf_bound(counts[c_hat], conf.n, conf.confidence())?;
        let radius = decide(p_lower, self.cfg.sigma)?;
        Ok(Certificate {
            prediction: radius.map(|_| c_hat),
            radius: radius.unwrap_or_else(T::zero),
            audit: Audit {
                c_hat,
                counts0,
                counts,
                p_lower,
                sigma: self.cfg.sigma,
                alpha: conf.alpha,
                seed,
            },
        })
    }

    /// Two-sided binomial test between the top two classes over `n_pred`
    /// draws from `seed.fork(2)`; `None` when not significant at `alpha_pred`.
    pub fn predict_with_seed(&self, x: &[T], n_pred: u64, alpha_pred: T, seed: SeedSpec) -> Result<Option<usize>> {
        if n_pred == 0 {
            return Err(Error::config("n_pred must be >= 1"));
        }
        let counts = self.sample_counts(x, n_pred, &seed.fork(2));
        predict_from_counts(&counts, alpha_pred)
    }

    pub fn predict(&self, x: &[T], n_pred: u64, alpha_pred: T) -> Result<Option<usize>> {
        self.predict_with_seed(x, n_pred, alpha_pred, self.cfg.seed)
    }
}

/// Top class if it beats the runner-up in a two-sided binomial test.
pub fn predict_from_counts<T: Real>(counts: &[u64], alpha_pred: T) -> Result<Option<usize>> {
    let top = top_class(counts);
    let runner_up = counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &c)| c)
        .max()
        .unwrap_or(0);
    let n_a = counts.get(top).copied().unwrap_or(0);
    if n_a == 0 {
        return Ok(None);
    }
    let p_value: T = binomial_test_half(n_a, n_a + runner_up)?;
    Ok((p_value <= alpha_pred).then_some(top))
}

/// Single-call form of [`DiffSmooth::purify_classify`].
pub fn purify_classify<T, F, P>(
    x_rs: &[T],
    cfg: &DiffSmoothConfig<T>,
    classifier: &F,
    predictor: &P,
    schedule: &DiffusionSchedule<T>,
    rng: &mut DrawRng,
) -> Result<usize>
where
    T: Real,
    F: SoftClassifier<T> + ?Sized,
    P: NoisePredictor<T> + ?Sized,
{
    Ok(DiffSmooth::new(*cfg, classifier, predictor, schedule)?.purify_classify(x_rs, rng))
}

/// Single-call form of [`DiffSmooth::certify`].
pub fn certify<T, F, P>(
    x: &[T],
    cfg: &DiffSmoothConfig<T>,
    classifier: &F,
    predictor: &P,
    schedule: &DiffusionSchedule<T>,
) -> Result<Certificate<T>>
where
    T: Real,
    F: SoftClassifier<T> + ?Sized,
    P: NoisePredictor<T> + ?Sized,
{
    DiffSmooth::new(*cfg, classifier, predictor, schedule)?.certify(x)
}

/// Denoised smoothing: one-shot denoise at the matched step, then `argmax F`.
pub fn denoised_smoothing_classify<T, F, P>(
    x_rs: &[T],
    sigma: T,
    convention: DataConvention,
    classifier: &F,
    predictor: &P,
    schedule: &DiffusionSchedule<T>,
) -> Result<usize>
where
    T: Real,
    F: SoftClassifier<T> + ?Sized,
    P: NoisePredictor<T> + ?Sized,
{
    let two = T::lit(2.0);
    let (level, centred): (T, Vec<T>) = match convention {
        DataConvention::Raw => (sigma, x_rs.to_vec()),
        DataConvention::UnitInterval => (two * sigma, x_rs.iter().map(|&v| two * v - T::one()).collect()),
    };
    let ts = schedule.compute_timestep(level)?;
    let root = ts.alpha_bar.sqrt();
    let x_t: Vec<T> = centred.iter().map(|&v| root * v).collect();
    let mut x_hat = crate::denoise::one_shot_denoise(predictor, &x_t, ts.t, schedule)?;
    if convention == DataConvention::UnitInterval {
        x_hat.iter_mut().for_each(|v| *v = (*v + T::one()) / two);
    }
    Ok(crate::classify::hard_predict(classifier, &x_hat))
}

pub const RECORD_HEADER: &str = "idx\tlabel\tpredict\tradius\tcorrect\ttime";
pub const AUDIT_HEADER: &str = "idx\tc_hat\tcounts0\tcounts\tp_lower\tsigma\talpha\tbase_seed\tstream_id";

/// One row of the certification record file.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationRecord<T> {
    pub index: u64,
    pub true_label: usize,
    /// `None` means ABSTAIN.
    pub prediction: Option<usize>,
    pub radius: T,
    pub correct: bool,
    /// Seconds.
    pub wall_time: f64,
    /// Absent for records read back from a record file.
    pub audit: Option<Audit<T>>,
}

impl<T: Real> CertificationRecord<T> {
    pub fn new(index: u64, true_label: usize, cert: Certificate<T>, wall_time: f64) -> Self {
        Self {
            index,
            true_label,
            prediction: cert.prediction,
            radius: cert.radius,
            correct: cert.prediction == Some(true_label),
            wall_time,
            audit: Some(cert.audit),
        }
    }

    pub fn to_row(&self) -> String {
        let predict = self.prediction.map_or(-1, |p| p as i64);
        format!(
            "{}\t{}\t{}\t{:?}\t{}\t{:.6}",
            self.index,
            self.true_label,
            predict,
            self.radius.to_f64().unwrap_or(f64::NAN),
            u8::from(self.correct),
            self.wall_time
        )
    }

    pub fn audit_row(&self) -> Option<String> {
        let a = self.audit.as_ref()?;
        let join = |c: &[u64]| c.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        Some(format!(
            "{}\t{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{}\t{}",
            self.index,
            a.c_hat,
            join(&a.counts0),
            join(&a.counts),
            a.p_lower.to_f64().unwrap_or(f64::NAN),
            a.sigma.to_f64().unwrap_or(f64::NAN),
            a.alpha.to_f64().unwrap_or(f64::NAN),
            a.seed.base_seed,
            a.seed.stream_id
        ))
    }

    /// Parses a data row of the record file (`line` is for error messages).
    pub fn parse_row(row: &str, line: usize) -> Result<Self> {
        let err = |message: String| Error::Parse { line, message };
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 tab-separated fields, got {}", fields.len())));
        }
        let index = fields[0].parse::<u64>().map_err(|e| err(format!("idx: {e}")))?;
        let true_label = fields[1].parse::<usize>().map_err(|e| err(format!("label: {e}")))?;
        let predict = fields[2].parse::<i64>().map_err(|e| err(format!("predict: {e}")))?;
        let prediction = match predict {
            -1 => None,
            p if p >= 0 => Some(p as usize),
            p => return Err(err(format!("predict must be -1 or a label, got {p}"))),
        };
        let radius = fields[3].parse::<f64>().map_err(|e| err(format!("radius: {e}")))?;
        let correct = match fields[4] {
            "1" | "True" | "true" => true,
            "0" | "False" | "false" => false,
            other => return Err(err(format!("correct: expected 0 or 1, got `{other}`"))),
        };
        let wall_time = fields[5].parse::<f64>().map_err(|e| err(format!("time: {e}")))?;
        if !(radius >= 0.0) {
            return Err(err(format!("radius must be >= 0, got {radius}")));
        }
        if prediction.is_none() && (radius > 0.0 || correct) {
            return Err(err("abstained row with a radius or marked correct".into()));
        }
        if correct != (prediction == Some(true_label)) {
            return Err(err("correct flag disagrees with predict and label".into()));
        }
        Ok(Self {
            index,
            true_label,
            prediction,
            radius: T::lit(radius),
            correct,
            wall_time,
            audit: None,
        })
    }
}

/// Header plus one line per record.
pub fn records_to_tsv<T: Real>(records: &[CertificationRecord<T>]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.to_row());
    }
    out
}

/// Parses a whole record file; the header line is required.
pub fn parse_records<T: Real>(text: &str) -> Result<Vec<CertificationRecord<T>>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == RECORD_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{RECORD_HEADER}`"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| CertificationRecord::parse_row(l.trim_end_matches('\r'), i + 1))
        .collect()
}

/// Parses one data row of the audit file into `(idx, audit)`.
pub fn parse_audit_row<T: Real>(row: &str, line: usize) -> Result<(u64, Audit<T>)> {
    let err = |message: String| Error::Parse { line, message };
    let f: Vec<&str> = row.split('\t').collect();
    if f.len() != 9 {
        return Err(err(format!("expected 9 tab-separated fields, got {}", f.len())));
    }
    let int = |s: &str, what: &str| s.parse::<u64>().map_err(|e| err(format!("{what}: {e}")));
    let real = |s: &str, what: &str| s.parse::<f64>().map(T::lit).map_err(|e| err(format!("{what}: {e}")));
    let counts = |s: &str, what: &str| -> Result<Vec<u64>> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|c| int(c, what)).collect()
    };
    let idx = int(f[0], "idx")?;
    Ok((
        idx,
        Audit {
            c_hat: int(f[1], "c_hat")? as usize,
            counts0: counts(f[2], "counts0")?,
            counts: counts(f[3], "counts")?,
            p_lower: real(f[4], "p_lower")?,
            sigma: real(f[5], "sigma")?,
            alpha: real(f[6], "alpha")?,
            seed: SeedSpec::new(int(f[7], "base_seed")?, int(f[8], "stream_id")?),
        },
    ))
}
