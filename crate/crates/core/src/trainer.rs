//! Mini-batch Adam on mean cross-entropy, fully determined by a seed.

use crate::dataset::{shuffled_rows, LabeledDataset};
use crate::error::{Error, Result};
use crate::network::{argmax, batch_loss_gradient, forward_unchecked, MlpParams};
use crate::rng::seeded;
use crate::scalar::Real;

/// Stabilized softmax cross-entropy: returns `-ln p[label]` and `p`.
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut probs: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = probs.iter().copied().sum();
    for p in &mut probs {
        *p = *p / total;
    }
    let loss = total.ln() - (logits[label] - max);
    (loss, probs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Initial weights have standard deviation `init_scale / sqrt(fan_in)`.
    pub init_scale: T,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::lit(0.001),
            batch_size: 128,
            epochs: 100,
            seed: 0,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            init_scale: T::one(),
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        let unit = |v: T| v >= T::zero() && v < T::one();
        if !unit(self.beta1) || !unit(self.beta2) || !(self.eps > T::zero()) {
            return Err(Error::arg(
                "Adam betas must lie in [0, 1) and eps must be positive",
            ));
        }
        if !(self.init_scale >= T::zero()) {
            return Err(Error::arg("init scale must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(p: usize) -> Self {
        Self {
            m: vec![T::zero(); p],
            v: vec![T::zero(); p],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of the flat parameters `theta`, in place.
pub fn adam_step<T: Real>(
    theta: &mut [T],
    grad: &[T],
    state: &mut AdamState<T>,
    config: &TrainConfig<T>,
) -> Result<()> {
    if grad.len() != theta.len() || state.m.len() != theta.len() {
        return Err(Error::arg("gradient, state and parameter lengths differ"));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { step: state.t + 1 });
    }
    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = T::one() - b1.powi(state.t.min(i32::MAX as u64) as i32);
    let c2 = T::one() - b2.powi(state.t.min(i32::MAX as u64) as i32);
    for j in 0..theta.len() {
        let g = grad[j];
        state.m[j] = b1 * state.m[j] + (T::one() - b1) * g;
        state.v[j] = b2 * state.v[j] + (T::one() - b2) * g * g;
        let m_hat = state.m[j] / c1;
        let v_hat = state.v[j] / c2;
        theta[j] = theta[j] - config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory<T> {
    pub epoch_loss: Vec<T>,
    pub epoch_error: Vec<T>,
}

/// Where the starting weights come from.
#[derive(Debug, Clone)]
pub enum Init<T> {
    Given(MlpParams<T>),
    /// Gaussian initialization drawn from the training seed.
    Random {
        widths: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: MlpParams<T>,
    /// Starting point of the run (the default prior mean for the bound).
    pub initial: MlpParams<T>,
    pub history: TrainHistory<T>,
}

/// Fraction of rows whose argmax prediction differs from the label.
pub fn zero_one_error<T: Real>(params: &MlpParams<T>, ds: &LabeledDataset<T>) -> T {
    let wrong = (0..ds.len())
        .filter(|&i| {
            let (x, y) = ds.sample(i);
            argmax(forward_unchecked(params, x).logits()) != y
        })
        .count();
    T::from_usize_lossy(wrong) / T::from_usize_lossy(ds.len())
}

/// Runs `epochs × ⌈n / batch⌉` Adam steps over seeded per-epoch shuffles.
/// The trailing partial batch of each epoch is used as is.
pub fn train<T: Real>(
    init: Init<T>,
    dataset: &LabeledDataset<T>,
    config: &TrainConfig<T>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let mut rng = seeded(config.seed);
    let initial = match init {
        Init::Given(p) => p,
        Init::Random { widths } => MlpParams::gaussian(&widths, config.init_scale, &mut rng)?,
    };
    if initial.input_dim() != dataset.dim() {
        return Err(Error::arg(format!(
            "network input {} does not match data dimension {}",
            initial.input_dim(),
            dataset.dim()
        )));
    }
    if initial.output_dim() < dataset.num_classes() {
        return Err(Error::arg("network has fewer outputs than classes"));
    }

    let mut params = initial.clone();
    let mut theta = params.flatten();
    let mut state = AdamState::new(theta.len());
    let mut history = TrainHistory::default();
    let n = dataset.len();

    for _epoch in 0..config.epochs {
        let order = shuffled_rows(n, &mut rng);
        let mut loss_sum = T::zero();
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) =
                batch_loss_gradient(&params, dataset.features(), dataset.labels(), batch);
            loss_sum = loss_sum + loss * T::from_usize_lossy(batch.len());
            adam_step(&mut theta, &grad, &mut state, config)?;
            params.set_flat(&theta);
        }
        history.epoch_loss.push(loss_sum / T::from_usize_lossy(n));
        history.epoch_error.push(zero_one_error(&params, dataset));
    }

    Ok(TrainOutcome {
        params,
        initial,
        history,
    })
}
