//! Soft classifiers `F: ℝ^d → Δ^K` and the hard rule `f = argmax F`.

mod mlp;

use std::sync::Arc;

use crate::mixture::MixtureWorld;
use crate::{Error, Real, Result};

pub use mlp::{train_augmented_classifier, Mlp, TrainConfig};

pub trait SoftClassifier<T>: Send + Sync {
    fn num_classes(&self) -> usize;

    fn name(&self) -> &str;

    /// Gaussian augmentation level the model was built for, if any.
    fn sigma_train(&self) -> Option<T> {
        None
    }

    /// Writes a probability vector of length `num_classes()` into `out`.
    fn confidences_into(&self, x: &[T], out: &mut [T]);

    fn confidences(&self, x: &[T]) -> Vec<T>
    where
        T: Real,
    {
        let mut out = vec![T::zero(); self.num_classes()];
        self.confidences_into(x, &mut out);
        out
    }
}

pub type SoftClassifierHandle<T> = Arc<dyn SoftClassifier<T>>;

/// First index of the maximum; NaN entries never win.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

/// `argmax_c F(x)_c` with ties going to the smallest label.
pub fn hard_predict<T: Real, F: SoftClassifier<T> + ?Sized>(classifier: &F, x: &[T]) -> usize {
    argmax(&classifier.confidences(x))
}

/// Bayes posterior over labels for the world convolved with `N(0, sigma_train² I)`.
#[derive(Debug, Clone)]
pub struct BayesSmoothedClassifier<T> {
    world: MixtureWorld<T>,
    sigma_train: T,
    name: String,
}

impl<T: Real> BayesSmoothedClassifier<T> {
    pub fn new(world: MixtureWorld<T>, sigma_train: T) -> Result<Self> {
        if !(sigma_train >= T::zero()) || !sigma_train.is_finite() {
            return Err(Error::config(format!(
                "sigma_train must be finite and >= 0, got {sigma_train}"
            )));
        }
        let name = format!("bayes_smoothed(sigma_train={sigma_train})");
        Ok(Self {
            world,
            sigma_train,
            name,
        })
    }

    pub fn world(&self) -> &MixtureWorld<T> {
        &self.world
    }
}

impl<T: Real> SoftClassifier<T> for BayesSmoothedClassifier<T> {
    fn num_classes(&self) -> usize {
        self.world.num_labels()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn sigma_train(&self) -> Option<T> {
        Some(self.sigma_train)
    }

    fn confidences_into(&self, x: &[T], out: &mut [T]) {
        self.world.bayes_smoothed_into(x, self.sigma_train, out);
    }
}

/// Puts all mass on one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantClassifier {
    pub label: usize,
    pub num_classes: usize,
}

impl ConstantClassifier {
    pub fn new(label: usize, num_classes: usize) -> Result<Self> {
        if label >= num_classes {
            return Err(Error::config(format!("label {label} outside 0..{num_classes}")));
        }
        Ok(Self { label, num_classes })
    }
}

impl<T: Real> SoftClassifier<T> for ConstantClassifier {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn name(&self) -> &str {
        "constant"
    }

    fn confidences_into(&self, _x: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        out[self.label] = T::one();
    }
}
