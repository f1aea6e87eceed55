//! Model-agnostic Shapley attribution.
//!
//! Feature absence is simulated by substituting values from a background
//! set. `exact_shap` enumerates every coalition (feasible up to 20 features)
//! and serves as the oracle for `sampling_shap`, the Monte Carlo permutation
//! estimator used on real instances. Attributions explain the probability of
//! failure: positive values push toward failure.

mod sampling;
mod store;

pub use sampling::{batch_explain, exact_shap, mask_with_background, sampling_shap};
pub use store::{read_saliency_store, write_saliency_store};

use ndarray::{Array2, Array3, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::TimeSeriesDataset;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{features} features exceed the exact enumeration limit of {max}")]
    TooLarge { features: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("store error: {0}")]
    Store(String),
}

pub type Result<T> = std::result::Result<T, ExplainError>;

/// A prediction function over one C x T instance. Must be pure and safe to
/// call concurrently.
pub trait PredictFn: Sync {
    fn predict(&self, x: &Array2<f64>) -> f64;
}

impl<F: Fn(&Array2<f64>) -> f64 + Sync> PredictFn for F {
    fn predict(&self, x: &Array2<f64>) -> f64 {
        self(x)
    }
}

/// Reference instances standing in for "feature absent".
#[derive(Debug, Clone)]
pub struct BackgroundSet {
    instances: Array3<f64>,
}

impl BackgroundSet {
    pub fn new(instances: Array3<f64>) -> Result<Self> {
        if instances.dim().0 == 0 {
            return Err(ExplainError::InvalidArgument("background set is empty".into()));
        }
        Ok(BackgroundSet { instances })
    }

    /// Uniform sample without replacement from the given instance indices
    /// (typically the training split). Takes everything if `size` exceeds
    /// the pool.
    pub fn sample(
        dataset: &TimeSeriesDataset,
        pool: &[usize],
        size: usize,
        seed: u64,
    ) -> Result<Self> {
        if pool.is_empty() {
            return Err(ExplainError::InvalidArgument("background pool is empty".into()));
        }
        let mut order: Vec<usize> = pool.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        order.truncate(size.max(1));
        let (c, t) = (dataset.n_channels(), dataset.t_len());
        let mut instances = Array3::zeros((order.len(), c, t));
        for (b, &n) in order.iter().enumerate() {
            instances.index_axis_mut(ndarray::Axis(0), b).assign(&dataset.instance(n));
        }
        BackgroundSet::new(instances)
    }

    pub fn len(&self) -> usize {
        self.instances.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        let (_, c, t) = self.instances.dim();
        (c, t)
    }

    pub fn instance(&self, b: usize) -> ArrayView2<'_, f64> {
        self.instances.index_axis(ndarray::Axis(0), b)
    }

    /// Mean model output over the background set: the base value phi_0.
    pub fn mean_prediction(&self, f: &dyn PredictFn) -> f64 {
        let total: f64 =
            (0..self.len()).map(|b| f.predict(&self.instance(b).to_owned())).sum();
        total / self.len() as f64
    }

    /// Per-cell mean over the background instances: the masking values used
    /// by the fidelity tests. Masking per cell keeps channels that are
    /// constant across instances (like the positional ramp) intact, matching
    /// the explainer's cell-level substitution semantics.
    pub fn cell_means(&self) -> Array2<f64> {
        let (b, c, t) = self.instances.dim();
        let mut means = Array2::zeros((c, t));
        for bi in 0..b {
            for ci in 0..c {
                for ti in 0..t {
                    means[[ci, ti]] += self.instances[[bi, ci, ti]];
                }
            }
        }
        means.mapv_inplace(|v| v / b as f64);
        means
    }
}

/// Boolean C x T mask: `true` keeps the explained instance's value, `false`
/// substitutes the background value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoalitionMask {
    included: Array2<bool>,
}

impl CoalitionMask {
    pub fn new(included: Array2<bool>) -> Self {
        CoalitionMask { included }
    }

    pub fn all(c: usize, t: usize, value: bool) -> Self {
        CoalitionMask { included: Array2::from_elem((c, t), value) }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.included.dim()
    }

    pub fn included(&self) -> &Array2<bool> {
        &self.included
    }

    pub fn set(&mut self, c: usize, t: usize, value: bool) {
        self.included[[c, t]] = value;
    }
}

/// Per-instance attribution matrix with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    /// C x T attributions in units of model probability mass.
    pub phi: Array2<f64>,
    /// Expected model output over the background set.
    pub base_value: f64,
    /// Model output on the unmasked instance.
    pub model_output: f64,
    pub instance_id: String,
    /// Permutation samples used (0 for the exact oracle).
    pub p_used: usize,
    pub seed: u64,
}

impl SaliencyMap {
    pub fn additivity_residual(&self) -> f64 {
        self.model_output - self.base_value - self.phi.sum()
    }
}
