//! Dense `f64` tensors with reverse-mode differentiation, Adam, gradient
//! checking and binary checkpoints.

mod batch;
mod checkpoint;
mod fit;
mod gradcheck;
mod optim;
mod tape;
mod tensor;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use batch::accumulate_mean_loss;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use fit::{fit, TrainConfig, TrainLog};
pub use gradcheck::{grad_check, grad_check_params};
pub use optim::{clip_and_adam_step, AdamState, LrSchedule, StepConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ParamStore, Tensor};


/// Inverted dropout: in training mode each entry is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
/// Evaluation mode is the identity.
pub struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn eval() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, seed: u64) -> Self {
        Dropout { rate, rng: Some(ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some() && self.rate > 0.0
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> crate::Result<Var> {
        let rate = self.rate;
        let Some(rng) = self.rng.as_mut() else { return Ok(x) };
        if rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(crate::Error::Config(format!("dropout rate {rate} must be below 1")));
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..tape.value(x).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        tape.mask(x, mask)
    }
}

/// Derives an independent seed from a base seed and a path of counters
/// (step, example index, ...), so parallel work gets stable random streams.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    path.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}
