//! Identity-balanced sampling and the adapter optimization loop.
//!
//! Each step draws its batch from a random stream derived from
//! `(seed, iteration)` alone, so a run resumed from a checkpoint replays the
//! same batches as an uninterrupted one. Parameters are updated with AdamW
//! (decoupled weight decay) over the flattened adapters followed by the class
//! weights.

mod data;
mod log;
mod sampler;

use std::ops::ControlFlow;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::TrainingData;
pub use log::{format_loss_log, moving_average, parse_loss_log, write_loss_log, LossLogRow, LOSS_LOG_HEADER};
pub use sampler::{sample_minibatch, sample_slots, BatchSlot};

use crate::encoder::{AdapterState, Checkpoint, ClassHead, Encoder, OptimizerState};
use crate::error::{Error, Result};
use crate::losses::{normalize_rows, normalize_rows_backward, total_loss, LossBreakdown, TotalLoss};
use crate::model::{Hyperparams, ZERO_NORM};

/// Decay of the exponential moving average kept in [`RunningStats`].
pub const LOSS_EMA_DECAY: f64 = 0.98;

/// The random stream for one step.
pub fn step_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// Loss summary since the state was created or resumed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub steps: u64,
    pub last: Option<LossBreakdown>,
    pub ema_total: Option<f64>,
}

impl RunningStats {
    fn record(&mut self, b: LossBreakdown) {
        self.steps += 1;
        self.last = Some(b);
        self.ema_total = Some(match self.ema_total {
            Some(e) => LOSS_EMA_DECAY * e + (1.0 - LOSS_EMA_DECAY) * b.total,
            None => b.total,
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Completed steps; the next step uses `step_rng(seed, iteration)`.
    pub iteration: u64,
    pub adapters: AdapterState,
    pub head: ClassHead,
    pub optimizer: OptimizerState,
    /// Identity ids in class-index order.
    pub classes: Vec<String>,
    pub stats: RunningStats,
}

impl TrainState {
    /// Fresh adapters (seeded by `hp.seed`) and class centers set to each
    /// identity's mean reference embedding.
    pub fn init(encoder: &Encoder, data: &TrainingData, hp: &Hyperparams) -> Result<Self> {
        let adapters = encoder.init_adapters(hp.adapter_rank, hp.effective_adapter_scale(), hp.seed)?;
        let head = imprint_head(encoder, data, hp.seed)?;
        let n = adapters.num_parameters() + head.flatten().len();
        Ok(TrainState {
            iteration: 0,
            adapters,
            head,
            optimizer: OptimizerState::new(n),
            classes: data.classes().to_vec(),
            stats: RunningStats::default(),
        })
    }

    pub fn to_checkpoint(&self, encoder: &Encoder, hp: &Hyperparams) -> Checkpoint {
        Checkpoint::new(
            encoder,
            hp.clone(),
            self.iteration,
            self.classes.clone(),
            self.adapters.clone(),
            self.head.clone(),
            Some(self.optimizer.clone()),
        )
    }

    /// Restores a state for resumption. Running statistics start over.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let optimizer = ckpt
            .optimizer
            .clone()
            .ok_or_else(|| Error::Checkpoint("no optimizer state; cannot resume".into()))?;
        Ok(TrainState {
            iteration: ckpt.iteration,
            adapters: ckpt.adapters.clone(),
            head: ckpt.head.clone(),
            optimizer,
            classes: ckpt.classes.clone(),
            stats: RunningStats::default(),
        })
    }

    fn num_parameters(&self) -> usize {
        self.adapters.num_parameters() + self.head.num_classes() * self.head.dim()
    }
}

fn imprint_head(encoder: &Encoder, data: &TrainingData, seed: u64) -> Result<ClassHead> {
    let reference = encoder.embed_reference_batch(data.inputs())?;
    let fallback = ClassHead::random(data.num_classes(), reference.ncols(), seed ^ 0x5eed)?;
    let mut weights = Array2::zeros((data.num_classes(), reference.ncols()));
    for c in 0..data.num_classes() {
        let rows = reference.select(Axis(0), data.members(c));
        let mean = rows.mean_axis(Axis(0)).expect("identities are nonempty");
        let n = mean.dot(&mean).sqrt();
        if n < ZERO_NORM {
            weights.row_mut(c).assign(&fallback.weights().row(c));
        } else {
            weights.row_mut(c).assign(&(mean / n));
        }
    }
    ClassHead::from_weights(weights)
}

/// Produces the loss value and gradients for a batch of unit embeddings.
pub trait Objective: Send + Sync {
    fn evaluate(
        &self,
        z_hat: ArrayView2<'_, f64>,
        z_hat_ref: ArrayView2<'_, f64>,
        labels: &[usize],
        head: &ClassHead,
        hp: &Hyperparams,
    ) -> Result<TotalLoss>;
}

/// Angular margin + supervised contrastive + embedding regularization.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompositeObjective;

impl Objective for CompositeObjective {
    fn evaluate(
        &self,
        z_hat: ArrayView2<'_, f64>,
        z_hat_ref: ArrayView2<'_, f64>,
        labels: &[usize],
        head: &ClassHead,
        hp: &Hyperparams,
    ) -> Result<TotalLoss> {
        total_loss(z_hat, z_hat_ref, labels, head, hp)
    }
}

/// One AdamW update in place. `step` is incremented before bias correction.
pub fn adamw_update(params: &mut [f64], grads: &[f64], opt: &mut OptimizerState, hp: &Hyperparams) -> Result<()> {
    let n = params.len();
    if grads.len() != n || opt.first_moment.len() != n || opt.second_moment.len() != n {
        return Err(Error::Shape(format!(
            "optimizer over {} moments, {} grads, {} params",
            opt.first_moment.len(),
            grads.len(),
            n
        )));
    }
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let decay = 1.0 - hp.learning_rate * hp.weight_decay;
    for i in 0..n {
        let g = grads[i];
        let m = &mut opt.first_moment[i];
        let v = &mut opt.second_moment[i];
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        params[i] = params[i] * decay - hp.learning_rate * m_hat / (v_hat.sqrt() + hp.adam_eps);
    }
    Ok(())
}

/// Forward, backward and one optimizer update on `batch`. Increments
/// `state.iteration` and returns the loss before the update.
pub fn train_step(
    encoder: &Encoder,
    data: &TrainingData,
    state: &mut TrainState,
    batch: &[BatchSlot],
    hp: &Hyperparams,
    objective: &dyn Objective,
) -> Result<LossBreakdown> {
    let rows: Vec<usize> = batch.iter().map(|s| data.members(s.class)[s.member]).collect();
    let labels: Vec<usize> = batch.iter().map(|s| s.class).collect();
    let inputs = data.inputs().select(Axis(0), &rows);

    let raw = encoder.forward_batch(inputs.view(), Some(&state.adapters))?;
    let (z_hat, norms) = normalize_rows(raw.view())?;
    let z_ref = encoder.embed_reference_batch(inputs.view())?;
    let loss = objective
        .evaluate(z_hat.view(), z_ref.view(), &labels, &state.head, hp)
        .map_err(|e| diagnose(e, state))?;
    if !loss.breakdown.is_finite() {
        return Err(diagnose(Error::NonFinite(format!("loss {:?}", loss.breakdown)), state));
    }

    let g_raw = normalize_rows_backward(z_hat.view(), &norms, loss.grad_embeddings.view());
    let per_sample: Vec<Vec<f64>> = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let mut g = state.adapters.zeros_like();
            encoder
                .backbone()
                .backward(inputs.row(i), &state.adapters, g_raw.row(i), &mut g)?;
            Ok(g.flatten())
        })
        .collect::<Result<_>>()?;

    let n_adapter = state.adapters.num_parameters();
    let mut grads = vec![0.0; state.num_parameters()];
    for g in &per_sample {
        grads[..n_adapter].iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    grads[n_adapter..]
        .iter_mut()
        .zip(loss.grad_class_weights.iter())
        .for_each(|(a, b)| *a = *b);
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(diagnose(Error::NonFinite(format!("gradient entry {i}")), state));
    }

    let mut params = state.adapters.flatten();
    params.extend(state.head.flatten());
    adamw_update(&mut params, &grads, &mut state.optimizer, hp)?;
    state.adapters.assign(&params[..n_adapter])?;
    state.head.assign(&params[n_adapter..])?;
    state.iteration += 1;
    state.stats.record(loss.breakdown);
    Ok(loss.breakdown)
}

fn diagnose(err: Error, state: &TrainState) -> Error {
    match err {
        Error::NonFinite(msg) => {
            let max_abs = |v: Vec<f64>| v.into_iter().fold(0.0f64, |m, x| m.max(x.abs()));
            Error::NonFinite(format!(
                "{msg} at iteration {} (max |adapter| {}, max |class weight| {}, last loss {:?})",
                state.iteration,
                max_abs(state.adapters.flatten()),
                max_abs(state.head.flatten()),
                state.stats.last
            ))
        }
        other => other,
    }
}

/// Hooks called by [`Trainer::run`].
pub trait TrainCallbacks {
    /// After every step. `Break` stops the run after this step.
    fn on_step(&mut self, _row: &LossLogRow, _state: &TrainState) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }

    /// Every `checkpoint_every` iterations, after `on_step`.
    fn on_checkpoint(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

impl TrainCallbacks for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<LossLogRow>,
    /// True when a callback stopped the run before `total_iterations`.
    pub interrupted: bool,
}

pub struct Trainer<'a> {
    encoder: &'a Encoder,
    data: &'a TrainingData,
    hp: Hyperparams,
    objective: Box<dyn Objective + 'a>,
    deterministic: bool,
}

impl<'a> Trainer<'a> {
    pub fn new(encoder: &'a Encoder, data: &'a TrainingData, hp: Hyperparams) -> Result<Self> {
        hp.validate()?;
        if data.input_dim() != encoder.config().input_dim {
            return Err(Error::Shape(format!(
                "features have {} columns, backbone expects {}",
                data.input_dim(),
                encoder.config().input_dim
            )));
        }
        Ok(Trainer {
            encoder,
            data,
            hp,
            objective: Box::new(CompositeObjective),
            deterministic: false,
        })
    }

    pub fn with_objective(mut self, objective: impl Objective + 'a) -> Self {
        self.objective = Box::new(objective);
        self
    }

    /// Deterministic mode records `wall_ms = 0` so logs compare byte for byte.
    pub fn deterministic(mut self, on: bool) -> Self {
        self.deterministic = on;
        self
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn init_state(&self) -> Result<TrainState> {
        TrainState::init(self.encoder, self.data, &self.hp)
    }

    /// Samples the batch for `state.iteration` and applies one step.
    pub fn step(&self, state: &mut TrainState) -> Result<LossLogRow> {
        let start = Instant::now();
        let mut rng = step_rng(self.hp.seed, state.iteration);
        let batch = sample_slots(&self.data.class_sizes(), &self.hp, &mut rng)?;
        let breakdown = train_step(self.encoder, self.data, state, &batch, &self.hp, self.objective.as_ref())?;
        let wall_ms = if self.deterministic {
            0
        } else {
            start.elapsed().as_millis() as u64
        };
        Ok(LossLogRow {
            iteration: state.iteration,
            breakdown,
            wall_ms,
        })
    }

    /// Runs until `total_iterations`, starting from `resume` or a fresh state.
    pub fn run(&self, resume: Option<TrainState>, callbacks: &mut dyn TrainCallbacks) -> Result<TrainOutcome> {
        let mut state = match resume {
            Some(s) => {
                self.check_resume(&s)?;
                s
            }
            None => self.init_state()?,
        };
        let total = self.hp.total_iterations;
        let every = self.hp.checkpoint_every;
        let mut log = Vec::with_capacity(total.saturating_sub(state.iteration) as usize);
        let mut interrupted = false;
        while state.iteration < total {
            let row = self.step(&mut state)?;
            log.push(row);
            let flow = callbacks.on_step(&row, &state);
            if every > 0 && state.iteration % every == 0 {
                callbacks.on_checkpoint(&state)?;
            }
            if flow.is_break() {
                interrupted = state.iteration < total;
                break;
            }
        }
        Ok(TrainOutcome {
            state,
            log,
            interrupted,
        })
    }

    fn check_resume(&self, state: &TrainState) -> Result<()> {
        if state.classes != self.data.classes() {
            return Err(Error::Checkpoint(
                "checkpoint classes differ from the training identities".into(),
            ));
        }
        if state.iteration > self.hp.total_iterations {
            return Err(Error::Precondition(format!(
                "state is at iteration {}, beyond total_iterations {}",
                state.iteration, self.hp.total_iterations
            )));
        }
        state.adapters.check_layers(&self.encoder.adapted_layers())?;
        if state.optimizer.first_moment.len() != state.num_parameters() {
            return Err(Error::Checkpoint("optimizer moments do not match parameters".into()));
        }
        Ok(())
    }
}
