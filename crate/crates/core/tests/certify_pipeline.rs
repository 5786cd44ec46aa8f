use diffsmooth_core::certify::{denoised_smoothing_classify, DataConvention, DiffSmooth, DiffSmoothConfig};
use diffsmooth_core::classify::{hard_predict, BayesSmoothedClassifier, SoftClassifier};
use diffsmooth_core::denoise::exact_noise_predictor;
use diffsmooth_core::stats::{fill_normal, standard_normal, ConfidenceParams, DrawRng, SeedSpec};
use diffsmooth_core::{DiffusionSchedule64, MixtureWorld64};

fn noisy_mean(world: &MixtureWorld64, k: usize, sigma: f64, seed: &SeedSpec, i: u64) -> Vec<f64> {
    let mut z = vec![0.0; world.dim()];
    fill_normal(&mut seed.rng(i), sigma, &mut z);
    world.components()[k].mean.iter().zip(&z).map(|(m, d)| m + d).collect()
}

/// Straight-line purification and local smoothing with the mixture score.
#[allow(clippy::too_many_arguments)]
fn transcribed_purify_classify(
    world: &MixtureWorld64,
    schedule: &DiffusionSchedule64,
    f: &dyn SoftClassifier<f64>,
    x_rs: &[f64],
    sigma: f64,
    sigma_local: f64,
    m: usize,
    rng: &mut DrawRng,
) -> usize {
    let mut t = 1;
    while (1.0 - schedule.alpha_bar(t)) / schedule.alpha_bar(t) < sigma * sigma {
        t += 1;
    }
    let ab = schedule.alpha_bar(t);
    let x_t: Vec<f64> = x_rs.iter().map(|v| ab.sqrt() * v).collect();
    let score = world.score_t(&x_t, ab).unwrap();
    let eps: Vec<f64> = score.iter().map(|s| -(1.0 - ab).sqrt() * s).collect();
    let x_hat: Vec<f64> = x_t
        .iter()
        .zip(&eps)
        .map(|(x, e)| (x - (1.0 - ab).sqrt() * e) / ab.sqrt())
        .collect();
    let mut total = vec![0.0; f.num_classes()];
    for _ in 0..m {
        let probe: Vec<f64> = x_hat
            .iter()
            .map(|v| sigma_local * standard_normal::<f64, _>(rng) + v)
            .collect();
        for (t, c) in total.iter_mut().zip(f.confidences(&probe)) {
            *t += c;
        }
    }
    let mut best = 0;
    for c in 1..total.len() {
        if total[c] > total[best] {
            best = c;
        }
    }
    best
}

#[test]
fn matches_a_transcription_of_the_algorithm() {
    let world = MixtureWorld64::canonical();
    let schedule = DiffusionSchedule64::default_linear();
    let predictor = exact_noise_predictor(&world, &schedule);
    let f = BayesSmoothedClassifier::new(world.clone(), 0.25).unwrap();
    let cfg = DiffSmoothConfig {
        sigma: 0.5,
        sigma_local: 0.25,
        m: 21,
        ..DiffSmoothConfig::default()
    };
    let pipeline = DiffSmooth::new(cfg, &f, &predictor, &schedule).unwrap();
    let inputs = SeedSpec::new(21, 0);
    let draws = SeedSpec::new(21, 1);
    for trial in 0..100u64 {
        let x_rs = noisy_mean(&world, (trial % 4) as usize, 0.5, &inputs, trial);
        let ours = pipeline.purify_classify(&x_rs, &mut draws.rng(trial));
        let theirs = transcribed_purify_classify(&world, &schedule, &f, &x_rs, 0.5, 0.25, 21, &mut draws.rng(trial));
        assert_eq!(ours, theirs, "trial {trial}");
    }
}

#[test]
fn degenerate_local_smoothing_is_denoised_smoothing() {
    let world = MixtureWorld64::canonical();
    let schedule = DiffusionSchedule64::default_linear();
    let predictor = exact_noise_predictor(&world, &schedule);
    let f = BayesSmoothedClassifier::new(world.clone(), 0.0).unwrap();
    for convention in [DataConvention::Raw, DataConvention::UnitInterval] {
        let cfg = DiffSmoothConfig {
            sigma: 0.5,
            sigma_local: 0.0,
            m: 1,
            data_convention: convention,
            ..DiffSmoothConfig::default()
        };
        let pipeline = DiffSmooth::new(cfg, &f, &predictor, &schedule).unwrap();
        let inputs = SeedSpec::new(22, 0);
        for trial in 0..100u64 {
            let x_rs = noisy_mean(&world, (trial % 4) as usize, 0.5, &inputs, trial);
            let a = pipeline.purify_classify(&x_rs, &mut inputs.fork(1).rng(trial));
            let b = denoised_smoothing_classify(&x_rs, 0.5, convention, &f, &predictor, &schedule).unwrap();
            assert_eq!(a, b);
            if convention == DataConvention::Raw {
                let ab = pipeline.timestep().unwrap().alpha_bar;
                let x_t: Vec<f64> = x_rs.iter().map(|v| ab.sqrt() * v).collect();
                let mean = world.posterior_mean(&x_t, ab).unwrap();
                assert_eq!(a, hard_predict(&f, &mean));
            }
        }
    }
}

#[test]
fn small_noise_at_a_component_mean_keeps_its_label() {
    let world = MixtureWorld64::canonical();
    let schedule = DiffusionSchedule64::default_linear();
    let predictor = exact_noise_predictor(&world, &schedule);
    let f = BayesSmoothedClassifier::new(world.clone(), 0.05).unwrap();
    let cfg = DiffSmoothConfig {
        sigma: 0.1,
        sigma_local: 0.05,
        m: 5,
        ..DiffSmoothConfig::default()
    };
    let pipeline = DiffSmooth::new(cfg, &f, &predictor, &schedule).unwrap();
    let seed = SeedSpec::new(23, 0);
    for c in world.components() {
        let hits = (0..100u64)
            .filter(|&i| pipeline.purify_classify(&c.mean, &mut seed.rng(i)) == c.label)
            .count();
        assert!(hits >= 99, "label {}: {hits}/100", c.label);
    }
}

#[test]
fn prediction_agrees_with_certification() {
    let world = MixtureWorld64::canonical();
    let schedule = DiffusionSchedule64::default_linear();
    let predictor = exact_noise_predictor(&world, &schedule);
    let f = BayesSmoothedClassifier::new(world.clone(), 0.25).unwrap();
    let pipeline = DiffSmooth::new(DiffSmoothConfig::default(), &f, &predictor, &schedule).unwrap();
    let points = world.sample(&SeedSpec::new(24, 0), 200);
    let mut checked = 0;
    for (i, p) in points.iter().enumerate() {
        let seed = SeedSpec::new(24, 1).fork(i as u64);
        let cert = pipeline.certify_with_seed(&p.x, seed).unwrap();
        if let Some(c_hat) = cert.prediction {
            let pred = pipeline.predict_with_seed(&p.x, 1000, 0.001, seed).unwrap();
            assert_eq!(pred, Some(c_hat), "point {i}");
            checked += 1;
        }
    }
    assert!(checked >= 150);
}

#[test]
fn looser_confidence_never_adds_abstentions() {
    let world = MixtureWorld64::canonical();
    let schedule = DiffusionSchedule64::default_linear();
    let predictor = exact_noise_predictor(&world, &schedule);
    let f = BayesSmoothedClassifier::new(world.clone(), 0.5).unwrap();
    // Large noise so that a fair share of points abstain at some level.
    let points = world.sample(&SeedSpec::new(25, 0), 50);
    let mut previous: Option<Vec<bool>> = None;
    for alpha in [0.0001, 0.001, 0.01, 0.1, 0.3] {
        let cfg = DiffSmoothConfig {
            sigma: 1.5,
            sigma_local: 0.5,
            conf: ConfidenceParams::new(alpha, 100, 500).unwrap(),
            ..DiffSmoothConfig::default()
        };
        let pipeline = DiffSmooth::new(cfg, &f, &predictor, &schedule).unwrap();
        let certified: Vec<bool> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                pipeline
                    .certify_with_seed(&p.x, SeedSpec::new(25, 1).fork(i as u64))
                    .unwrap()
                    .prediction
                    .is_some()
            })
            .collect();
        if let Some(prev) = &previous {
            for (i, (&before, &now)) in prev.iter().zip(&certified).enumerate() {
                assert!(!before || now, "point {i} abstains at alpha {alpha}");
            }
        }
        previous = Some(certified);
    }
}
