//! MSE loss, AdamW with decoupled weight decay, and the mini-batch training
//! loop with gradient accumulation.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exam::{Dataset, PartId};
use crate::net::{
    backward_accumulate, mean_pool, Activation, ArchKind, Gradients, HeadArchitecture, Mode,
    RegressionHead, HIDDEN_WIDTH, PENULT_WIDTH,
};

/// Hyperparameters for one training run. The five canonical per-part
/// recipes come from [`canonical_config`]; everything else defaults to the
/// optimizer's published values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub part: PartId,
    pub architecture: ArchKind,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
    #[serde(default = "default_penult_width")]
    pub penult_width: usize,
    #[serde(default)]
    pub activation: Activation,
}

fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}

fn default_epsilon() -> f64 {
    1e-8
}

fn default_weight_decay() -> f64 {
    0.01
}

fn default_hidden_width() -> usize {
    HIDDEN_WIDTH
}

fn default_penult_width() -> usize {
    PENULT_WIDTH
}

impl TrainConfig {
    /// Effective batch size seen by each optimizer step.
    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.grad_accum_steps
    }

    pub fn architecture_for(&self, input_dim: usize) -> HeadArchitecture {
        HeadArchitecture::of_kind(self.architecture, input_dim)
            .with_widths(self.hidden_width, self.penult_width)
            .with_activation(self.activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.epochs == 0 {
            return Err(Error::shape(
                "batch_size, grad_accum_steps and epochs must be positive".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::shape("dropout_rate must lie in [0, 1)".to_string()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::shape(
                "learning_rate must be finite and >= 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// The per-part training recipes: (architecture, batch size, gradient
/// accumulation steps, dropout rate, learning rate, epochs).
pub fn canonical_config(part: PartId) -> TrainConfig {
    let (architecture, batch_size, grad_accum_steps, dropout_rate, learning_rate, epochs) =
        match part {
            PartId::P1 => (ArchKind::Shallow, 16, 2, 0.1, 5e-5, 2),
            PartId::P2 => (ArchKind::Deep, 16, 2, 0.5, 1e-6, 3),
            PartId::P3 => (ArchKind::Deep, 8, 4, 0.5, 1e-5, 2),
            PartId::P4 => (ArchKind::Deep, 8, 4, 0.5, 1e-5, 2),
            PartId::P5 => (ArchKind::Shallow, 8, 2, 0.1, 5e-5, 1),
        };
    TrainConfig {
        part,
        architecture,
        batch_size,
        grad_accum_steps,
        dropout_rate,
        learning_rate,
        epochs,
        betas: default_betas(),
        epsilon: default_epsilon(),
        weight_decay: default_weight_decay(),
        seed: 0,
        hidden_width: HIDDEN_WIDTH,
        penult_width: PENULT_WIDTH,
        activation: Activation::Relu,
    }
}

/// Squared-error loss for one sample and its derivative w.r.t. the
/// prediction. Batch loss is the mean of per-sample losses.
pub fn mse_loss(pred: f64, target: f64) -> (f64, f64) {
    let r = pred - target;
    (r * r, 2.0 * r)
}

/// First/second moment estimates for every head parameter plus the shared
/// step counter.
#[derive(Debug, Clone)]
pub struct AdamWState {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl AdamWState {
    pub fn new(head: &RegressionHead) -> Self {
        AdamWState {
            m: Gradients::zeros_like(head),
            v: Gradients::zeros_like(head),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One AdamW update on a flat parameter slice:
/// `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g^2`, then
/// `p <- p - lr*(mhat/(sqrt(vhat)+eps) + wd*p)` with bias-corrected
/// `mhat = m/(1-b1^t)` and `vhat = v/(1-b2^t)`. Weight decay is decoupled:
/// it never touches the moment estimates.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    betas: (f64, f64),
    epsilon: f64,
    weight_decay: f64,
) {
    let (b1, b2) = betas;
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        params[i] -= lr * (mhat / (vhat.sqrt() + epsilon) + weight_decay * params[i]);
    }
}

/// Applies one AdamW step to every head parameter.
pub fn adamw_step(
    head: &mut RegressionHead,
    grads: &Gradients,
    state: &mut AdamWState,
    cfg: &TrainConfig,
) -> Result<()> {
    let shapes_match = |a: &Gradients| {
        a.layers.len() == head.layers().len()
            && a.layers
                .iter()
                .zip(head.layers())
                .all(|(g, l)| g.weight.len() == l.weight.len() && g.bias.len() == l.bias.len())
    };
    if !shapes_match(grads) || !shapes_match(&state.m) || !shapes_match(&state.v) {
        return Err(Error::shape(
            "gradient/state shapes do not match head parameters".to_string(),
        ));
    }
    state.t += 1;
    for (idx, layer) in head.layers_mut().iter_mut().enumerate() {
        adamw_update(
            &mut layer.weight,
            &grads.layers[idx].weight,
            &mut state.m.layers[idx].weight,
            &mut state.v.layers[idx].weight,
            state.t,
            cfg.learning_rate,
            cfg.betas,
            cfg.epsilon,
            cfg.weight_decay,
        );
        adamw_update(
            &mut layer.bias,
            &grads.layers[idx].bias,
            &mut state.m.layers[idx].bias,
            &mut state.v.layers[idx].bias,
            state.t,
            cfg.learning_rate,
            cfg.betas,
            cfg.epsilon,
            cfg.weight_decay,
        );
    }
    Ok(())
}

/// Pools every response of `cfg.part` into (feature, target) pairs.
fn pooled_samples(dataset: &Dataset, part: PartId) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for sub in &dataset.submissions {
        let (Some(responses), Some(&grade)) =
            (sub.responses.get(&part), sub.ref_part_grades.get(&part))
        else {
            continue;
        };
        for seq in responses {
            xs.push(mean_pool(seq));
            ys.push(grade);
        }
    }
    if xs.is_empty() {
        return Err(Error::EmptyDataset(part));
    }
    let dim = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::shape(format!(
            "pooled feature width {} differs from {dim}",
            bad.len()
        )));
    }
    Ok((xs, ys))
}

/// Sum (not mean) of per-sample loss gradients over `indices`, plus the sum
/// of losses. Training mode samples one dropout mask per example.
fn grad_sum_over(
    head: &RegressionHead,
    xs: &[Vec<f64>],
    ys: &[f64],
    indices: &[usize],
    rng: Option<&mut dyn RngCore>,
    acc: &mut Gradients,
) -> Result<f64> {
    let mut loss_sum = 0.0;
    let mut rng = rng;
    for &i in indices {
        let (pred, cache) = match rng.as_deref_mut() {
            Some(r) => head.forward(&xs[i], Mode::Train(r))?,
            None => head.forward(&xs[i], Mode::Eval)?,
        };
        let (loss, dloss) = mse_loss(pred, ys[i]);
        loss_sum += loss;
        backward_accumulate(head, &cache, dloss, acc)?;
    }
    Ok(loss_sum)
}

/// Trains one regression head on the pooled responses of `cfg.part`.
///
/// Each epoch shuffles the samples with a seeded generator and walks them
/// in micro-batches of `batch_size`; gradients accumulate over
/// `grad_accum_steps` micro-batches (mean reduction over the examples seen)
/// before each optimizer step, and the trailing incomplete group still
/// steps. Returns the head and the per-epoch mean training loss. Fully
/// deterministic in `cfg.seed`.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<(RegressionHead, Vec<f64>)> {
    cfg.validate()?;
    let (xs, ys) = pooled_samples(dataset, cfg.part)?;
    let arch = cfg.architecture_for(xs[0].len());

    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_seed = seeder.next_u64();
    let mut train_rng = ChaCha8Rng::seed_from_u64(seeder.next_u64());

    let mut head = RegressionHead::init(&arch, cfg.dropout_rate, init_seed);
    let mut state = AdamWState::new(&head);
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..xs.len()).collect();
    let mut acc = Gradients::zeros_like(&head);

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut train_rng);
        let mut epoch_loss = 0.0;
        let mut group_count = 0usize;
        let mut micro_in_group = 0usize;
        acc.scale(0.0);

        for chunk in indices.chunks(cfg.batch_size) {
            let loss_sum = grad_sum_over(&head, &xs, &ys, chunk, Some(&mut train_rng), &mut acc)?;
            if !loss_sum.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: state.step_count() as usize,
                });
            }
            epoch_loss += loss_sum;
            group_count += chunk.len();
            micro_in_group += 1;
            if micro_in_group == cfg.grad_accum_steps {
                acc.scale(1.0 / group_count as f64);
                adamw_step(&mut head, &acc, &mut state, cfg)?;
                acc.scale(0.0);
                group_count = 0;
                micro_in_group = 0;
            }
        }
        // Trailing group shorter than grad_accum_steps micro-batches.
        if group_count > 0 {
            acc.scale(1.0 / group_count as f64);
            adamw_step(&mut head, &acc, &mut state, cfg)?;
            acc.scale(0.0);
        }
        loss_history.push(epoch_loss / xs.len() as f64);
    }
    Ok((head, loss_history))
}
