//! One-hidden-layer ReLU network with a softmax head, trained by mini-batch
//! SGD on cross-entropy with per-epoch Gaussian input augmentation.
//!
//! Parameter file (UTF-8 text, one record per line):
//!
//! ```text
//! diffsmooth-mlp 1
//! dims <input> <hidden> <classes>
//! sigma_train <value>
//! w1 <hidden*input values, row-major>
//! b1 <hidden values>
//! w2 <classes*hidden values, row-major>
//! b2 <classes values>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use super::SoftClassifier;
use crate::mixture::LabeledSample;
use crate::num::softmax_in_place;
use crate::stats::{fill_normal, SeedSpec};
use crate::{Error, Real, Result};

const MAGIC: &str = "diffsmooth-mlp";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig<T> {
    pub sigma_train: T,
    pub epochs: usize,
    pub learning_rate: T,
    pub hidden_width: usize,
    pub batch_size: usize,
    pub seed: SeedSpec,
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_train >= T::zero()) || !self.sigma_train.is_finite() {
            return Err(Error::config(format!(
                "sigma_train must be >= 0, got {}",
                self.sigma_train
            )));
        }
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.hidden_width == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs, hidden_width and batch_size must be positive"));
        }
        Ok(())
    }
}

impl Default for TrainConfig<f64> {
    fn default() -> Self {
        Self {
            sigma_train: 0.5,
            epochs: 30,
            learning_rate: 0.05,
            hidden_width: 64,
            batch_size: 32,
            seed: SeedSpec::new(0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    input: usize,
    hidden: usize,
    classes: usize,
    sigma_train: T,
    w1: Vec<T>,
    b1: Vec<T>,
    w2: Vec<T>,
    b2: Vec<T>,
}

impl<T: Real> Mlp<T> {
    fn init(input: usize, hidden: usize, classes: usize, sigma_train: T, seed: &SeedSpec) -> Self {
        let mut rng = seed.rng(0);
        let mut w1 = vec![T::zero(); hidden * input];
        let mut w2 = vec![T::zero(); classes * hidden];
        fill_normal(&mut rng, (T::lit(2.0) / T::of_usize(input)).sqrt(), &mut w1);
        fill_normal(&mut rng, (T::one() / T::of_usize(hidden)).sqrt(), &mut w2);
        Self {
            input,
            hidden,
            classes,
            sigma_train,
            w1,
            b1: vec![T::zero(); hidden],
            w2,
            b2: vec![T::zero(); classes],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    /// Hidden activations and output logits.
    fn forward(&self, x: &[T], h: &mut [T], logits: &mut [T]) {
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.w1[j * self.input..(j + 1) * self.input];
            let a = row.iter().zip(x).fold(self.b1[j], |acc, (&w, &v)| acc + w * v);
            *hj = a.max(T::zero());
        }
        for (c, lc) in logits.iter_mut().enumerate() {
            let row = &self.w2[c * self.hidden..(c + 1) * self.hidden];
            *lc = row.iter().zip(h.iter()).fold(self.b2[c], |acc, (&w, &v)| acc + w * v);
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{MAGIC} {VERSION}\ndims {} {} {}\n",
            self.input, self.hidden, self.classes
        );
        let _ = writeln!(s, "sigma_train {:?}", self.sigma_train.to_f64().unwrap_or(f64::NAN));
        for (name, values) in [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)] {
            s.push_str(name);
            for v in values.iter() {
                let _ = write!(s, " {:?}", v.to_f64().unwrap_or(f64::NAN));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing {what} record"),
            })
        };
        let (line, header) = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(Error::Parse {
                line,
                message: "not a diffsmooth-mlp file".into(),
            });
        }
        match parts.next().map(str::parse::<u32>) {
            Some(Ok(VERSION)) => {}
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unsupported version {other:?}"),
                })
            }
        }

        let (line, dims) = next("dims")?;
        let dims = record(line, dims, "dims")?;
        let [input, hidden, classes] = dims[..] else {
            return Err(Error::Parse {
                line,
                message: "dims needs three values".into(),
            });
        };
        let as_size = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Parse {
                    line,
                    message: format!("bad dimension {v}"),
                })
            }
        };
        let (input, hidden, classes) = (as_size(input)?, as_size(hidden)?, as_size(classes)?);

        let (line, s) = next("sigma_train")?;
        let sigma = record(line, s, "sigma_train")?;
        if sigma.len() != 1 {
            return Err(Error::Parse {
                line,
                message: "sigma_train needs one value".into(),
            });
        }

        let mut tensor = |name: &str, len: usize| -> Result<Vec<T>> {
            let (line, text) = next(name)?;
            let values = record(line, text, name)?;
            if values.len() != len {
                return Err(Error::Parse {
                    line,
                    message: format!("{name} has {} values, expected {len}", values.len()),
                });
            }
            Ok(values.into_iter().map(T::lit).collect())
        };
        Ok(Self {
            input,
            hidden,
            classes,
            sigma_train: T::lit(sigma[0]),
            w1: tensor("w1", hidden * input)?,
            b1: tensor("b1", hidden)?,
            w2: tensor("w2", classes * hidden)?,
            b2: tensor("b2", classes)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read model file {}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

fn record(line: usize, text: &str, name: &str) -> Result<Vec<f64>> {
    let mut parts = text.split_whitespace();
    if parts.next() != Some(name) {
        return Err(Error::Parse {
            line,
            message: format!("expected `{name}` record"),
        });
    }
    parts
        .map(|p| {
            p.parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("{p}: {e}"),
            })
        })
        .collect()
}

impl<T: Real> SoftClassifier<T> for Mlp<T> {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn name(&self) -> &str {
        "mlp"
    }

    fn sigma_train(&self) -> Option<T> {
        Some(self.sigma_train)
    }

    fn confidences_into(&self, x: &[T], out: &mut [T]) {
        let mut h = vec![T::zero(); self.hidden];
        self.forward(x, &mut h, out);
        softmax_in_place(out);
    }
}

/// Trains an [`Mlp`] on `train_set`, presenting `x + δ` with a fresh
/// `δ ~ N(0, sigma_train² I)` every epoch.
pub fn train_augmented_classifier<T: Real>(train_set: &[LabeledSample<T>], cfg: &TrainConfig<T>) -> Result<Mlp<T>> {
    cfg.validate()?;
    let first = train_set
        .first()
        .ok_or_else(|| Error::config("training set is empty"))?;
    let dim = first.x.len();
    if dim == 0 || train_set.iter().any(|s| s.x.len() != dim) {
        return Err(Error::config("training points must share a positive dimension"));
    }
    let classes = train_set.iter().map(|s| s.y).max().unwrap_or(0) + 1;
    if train_set.iter().all(|s| s.y == first.y) {
        return Err(Error::config("training set needs at least two labels"));
    }

    let mut model = Mlp::init(dim, cfg.hidden_width, classes, cfg.sigma_train, &cfg.seed.fork(0));
    let (h_n, c_n) = (model.hidden, model.classes);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut x = vec![T::zero(); dim];
    let mut h = vec![T::zero(); h_n];
    let mut p = vec![T::zero(); c_n];
    let mut dh = vec![T::zero(); h_n];
    let mut g_w1 = vec![T::zero(); model.w1.len()];
    let mut g_b1 = vec![T::zero(); h_n];
    let mut g_w2 = vec![T::zero(); model.w2.len()];
    let mut g_b2 = vec![T::zero(); c_n];

    for epoch in 0..cfg.epochs as u64 {
        order.shuffle(&mut cfg.seed.fork(1).rng(epoch));
        let mut noise = cfg.seed.fork(2).rng(epoch);
        for batch in order.chunks(cfg.batch_size) {
            for g in [&mut g_w1, &mut g_b1, &mut g_w2, &mut g_b2] {
                g.iter_mut().for_each(|v| *v = T::zero());
            }
            for &i in batch {
                let sample = &train_set[i];
                fill_normal(&mut noise, cfg.sigma_train, &mut x);
                x.iter_mut().zip(&sample.x).for_each(|(a, &b)| *a = *a + b);
                model.forward(&x, &mut h, &mut p);
                softmax_in_place(&mut p);
                // dL/dlogits = p - onehot(y)
                p[sample.y] = p[sample.y] - T::one();
                dh.iter_mut().for_each(|v| *v = T::zero());
                for c in 0..c_n {
                    g_b2[c] = g_b2[c] + p[c];
                    let row = c * h_n;
                    for j in 0..h_n {
                        g_w2[row + j] = g_w2[row + j] + p[c] * h[j];
                        dh[j] = dh[j] + p[c] * model.w2[row + j];
                    }
                }
                for j in 0..h_n {
                    if h[j] <= T::zero() {
                        continue;
                    }
                    g_b1[j] = g_b1[j] + dh[j];
                    let row = j * dim;
                    for k in 0..dim {
                        g_w1[row + k] = g_w1[row + k] + dh[j] * x[k];
                    }
                }
            }
            let step = cfg.learning_rate / T::of_usize(batch.len());
            for (w, g) in [
                (&mut model.w1, &g_w1),
                (&mut model.b1, &g_b1),
                (&mut model.w2, &g_w2),
                (&mut model.b2, &g_b2),
            ] {
                w.iter_mut().zip(g.iter()).for_each(|(w, &g)| *w = *w - step * g);
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::hard_predict;
    use crate::mixture::MixtureWorld;
    use rand::Rng;

    fn accuracy(model: &Mlp<f64>, test: &[LabeledSample<f64>]) -> f64 {
        test.iter().filter(|s| hard_predict(model, &s.x) == s.y).count() as f64 / test.len() as f64
    }

    #[test]
    fn learns_the_canonical_world() {
        let world = MixtureWorld::canonical();
        let train = world.sample(&SeedSpec::new(1, 0), 4000);
        let test = world.sample(&SeedSpec::new(1, 1), 2000);
        let model = train_augmented_classifier(&train, &TrainConfig::default()).unwrap();
        assert!(accuracy(&model, &test) >= 0.95);
    }

    #[test]
    fn separable_two_class_world_without_augmentation() {
        let world = MixtureWorld::two_class(2.0, 0.5).unwrap();
        let train = world.sample(&SeedSpec::new(2, 0), 2000);
        let test = world.sample(&SeedSpec::new(2, 1), 2000);
        let cfg = TrainConfig {
            sigma_train: 0.0,
            ..TrainConfig::default()
        };
        let model = train_augmented_classifier(&train, &cfg).unwrap();
        assert!(accuracy(&model, &test) >= 0.99);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let world = MixtureWorld::canonical();
        let train = world.sample(&SeedSpec::new(3, 0), 500);
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let a = train_augmented_classifier(&train, &cfg).unwrap();
        let b = train_augmented_classifier(&train, &cfg).unwrap();
        assert_eq!(a, b);
        let other = TrainConfig {
            seed: SeedSpec::new(0, 1),
            ..cfg
        };
        assert_ne!(a, train_augmented_classifier(&train, &other).unwrap());
    }

    #[test]
    fn rejects_bad_training_input() {
        let cfg = TrainConfig::default();
        let one_label = vec![
            LabeledSample {
                x: vec![0.0, 1.0],
                y: 1,
            },
            LabeledSample {
                x: vec![1.0, 0.0],
                y: 1,
            },
        ];
        assert!(matches!(
            train_augmented_classifier(&one_label, &cfg),
            Err(Error::Config(_))
        ));
        assert!(train_augmented_classifier::<f64>(&[], &cfg).is_err());
        let bad = TrainConfig { hidden_width: 0, ..cfg };
        let two = vec![
            LabeledSample { x: vec![0.0], y: 0 },
            LabeledSample { x: vec![1.0], y: 1 },
        ];
        assert!(train_augmented_classifier(&two, &bad).is_err());
        let bad = TrainConfig {
            sigma_train: -1.0,
            ..cfg
        };
        assert!(train_augmented_classifier(&two, &bad).is_err());
    }

    #[test]
    fn outputs_lie_on_the_simplex() {
        let world = MixtureWorld::canonical();
        let train = world.sample(&SeedSpec::new(4, 0), 500);
        let model = train_augmented_classifier(
            &train,
            &TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let mut rng = SeedSpec::new(4, 1).rng(0);
        for _ in 0..1000 {
            let x = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
            let p = model.confidences(&x);
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn parameter_file_round_trip() {
        let world = MixtureWorld::canonical();
        let train = world.sample(&SeedSpec::new(5, 0), 200);
        let model = train_augmented_classifier(
            &train,
            &TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let back = Mlp::<f64>::from_text(&model.to_text()).unwrap();
        assert_eq!(back, model);

        let single: Mlp<f32> = Mlp::from_text(&model.to_text()).unwrap();
        assert_eq!(single.hidden_width(), 64);
        assert_eq!(single.input_dim(), 2);
    }

    #[test]
    fn parameter_file_errors() {
        assert!(Mlp::<f64>::from_text("something else 1").is_err());
        assert!(Mlp::<f64>::from_text("diffsmooth-mlp 2\n").is_err());
        let text = "diffsmooth-mlp 1\ndims 1 1 2\nsigma_train 0.0\nw1 1.0\nb1 0.0\nw2 1.0\nb2 0.0 0.0\n";
        match Mlp::<f64>::from_text(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        let fixed = text.replace("w2 1.0", "w2 1.0 -1.0");
        let m = Mlp::<f64>::from_text(&fixed).unwrap();
        assert_eq!(hard_predict(&m, &[2.0]), 0);
        assert_eq!(hard_predict(&m, &[-2.0]), 0);
        assert!(m.confidences(&[2.0])[0] > 0.8);
    }
}
