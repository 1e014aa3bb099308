use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::accumulate_mean_loss;
use super::optim::{clip_and_adam_step, AdamState, LrSchedule, StepConfig};
use super::tape::{Tape, Var};
use super::tensor::ParamStore;
use super::derive_seed;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub weight_decay: f64,
    /// Gradient components are clipped into `[-grad_clip, grad_clip]`.
    pub grad_clip: f64,
    pub seed: u64,
    /// Stop as soon as the evaluation loss drops below this.
    pub target_loss: Option<f64>,
    /// Evaluation interval in steps; 0 evaluates only at the end.
    pub eval_every: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: u64,
    /// Mean training-mode loss of each step's batch.
    pub batch_losses: Vec<f64>,
    /// `(step, loss)` for every evaluation.
    pub eval_losses: Vec<(u64, f64)>,
    /// Evaluation loss after the last step.
    pub final_loss: f64,
}

/// Mini-batch training loop shared by the models.
///
/// Batches are drawn from a seeded reshuffle of `data` each epoch. For each
/// step the gradient of the mean batch loss is accumulated, then one clipped
/// Adam update is applied at the scheduled learning rate. `loss` receives a
/// per-example seed for dropout masks; `eval` measures the loss reported in
/// the log and used for early stopping.
pub fn fit<T, L, E>(store: &mut ParamStore, data: &[T], cfg: &TrainConfig, loss: L, eval: E) -> Result<TrainLog>
where
    T: Sync,
    L: Fn(&mut Tape, &ParamStore, u64, &T) -> Result<Var> + Sync,
    E: Fn(&ParamStore) -> Result<f64>,
{
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if !(cfg.grad_clip > 0.0) {
        return Err(Error::Config(format!("gradient clip {} must be positive", cfg.grad_clip)));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut adam = AdamState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut log = TrainLog::default();
    let batch_len = cfg.batch_size.min(data.len());

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(batch_len);
        while batch.len() < batch_len {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&data[order[cursor]]);
            cursor += 1;
        }
        store.zero_grad();
        let mean = accumulate_mean_loss(store, &batch, |tape, params, i, item| {
            loss(tape, params, derive_seed(cfg.seed, &[step, i as u64]), item)
        })?;
        let lr = cfg.schedule.at(step);
        let step_cfg = StepConfig { lr, clip_lo: -cfg.grad_clip, clip_hi: cfg.grad_clip, weight_decay: cfg.weight_decay };
        clip_and_adam_step(store, &mut adam, step_cfg)?;
        log.batch_losses.push(mean);
        log.steps = step + 1;

        if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 {
            let value = eval(store)?;
            log.eval_losses.push((step + 1, value));
            if cfg.target_loss.is_some_and(|t| value < t) {
                break;
            }
        }
    }
    store.zero_grad();
    log.final_loss = eval(store)?;
    Ok(log)
}
