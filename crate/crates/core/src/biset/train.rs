use rayon::prelude::*;

use super::model::{teacher_forced_nll, BisetConfig};
use super::Biset;
use crate::error::{Error, Result};
use crate::ndtensor::{fit, Dropout, LrSchedule, ParamStore, Tape, TrainConfig, TrainLog};
use crate::vocab::{Vocab, BOS, EOS};

/// One (article, template, gold summary) training item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BisetExample {
    pub article: Vec<String>,
    pub template: Vec<String>,
    pub summary: Vec<String>,
}

/// Batch 64, lr 0.001 for 50K steps then halved every 10K, no weight decay.
pub fn default_train_config() -> TrainConfig {
    TrainConfig {
        steps: 100_000,
        batch_size: 64,
        schedule: LrSchedule { base: 0.001, decay_start: 50_000, decay_every: 10_000, factor: 0.5 },
        weight_decay: 0.0,
        seed: 0,
        grad_clip: 5.0,
        target_loss: None,
        eval_every: 100,
    }
}

pub(crate) struct Encoded {
    pub(crate) article: Vec<usize>,
    pub(crate) template: Vec<usize>,
    pub(crate) inputs: Vec<usize>,
    pub(crate) targets: Vec<usize>,
}

pub(crate) fn encode_example(vocab: &Vocab, ex: &BisetExample) -> Result<Encoded> {
    if ex.article.is_empty() || ex.template.is_empty() {
        return Err(Error::Data("training item with an empty article or template".into()));
    }
    let summary = vocab.encode(&ex.summary);
    let inputs = std::iter::once(BOS).chain(summary.iter().copied()).collect();
    let targets = summary.into_iter().chain(std::iter::once(EOS)).collect();
    Ok(Encoded { article: vocab.encode(&ex.article), template: vocab.encode(&ex.template), inputs, targets })
}

fn eval_nll(params: &ParamStore, cfg: &BisetConfig, data: &[Encoded]) -> Result<f64> {
    let losses: Vec<f64> = data
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new();
            let loss = teacher_forced_nll(
                &mut tape,
                params,
                cfg,
                &ex.article,
                &ex.template,
                &ex.inputs,
                &ex.targets,
                &mut Dropout::eval(),
            )?;
            Ok(tape.scalar_value(loss))
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Mean per-summary NLL (summed over tokens, end token included) in
/// evaluation mode.
pub fn dataset_nll(model: &Biset, data: &[BisetExample]) -> Result<f64> {
    let encoded = data.iter().map(|ex| encode_example(&model.vocab, ex)).collect::<Result<Vec<_>>>()?;
    eval_nll(&model.params, &model.config, &encoded)
}

/// Teacher-forced NLL training. The log's evaluation losses are
/// [`dataset_nll`] over the training items.
pub fn train_biset(model: &mut Biset, data: &[BisetExample], cfg: &TrainConfig) -> Result<TrainLog> {
    let encoded = data.iter().map(|ex| encode_example(&model.vocab, ex)).collect::<Result<Vec<_>>>()?;
    let config = model.config.clone();
    fit(
        &mut model.params,
        &encoded,
        cfg,
        |tape, params, seed, ex| {
            let mut dropout = Dropout::train(config.dropout, seed);
            teacher_forced_nll(tape, params, &config, &ex.article, &ex.template, &ex.inputs, &ex.targets, &mut dropout)
        },
        |params| eval_nll(params, &config, &encoded),
    )
}
