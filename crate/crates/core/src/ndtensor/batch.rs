use std::collections::BTreeMap;

use rayon::prelude::*;

use super::tape::{Tape, Var};
use super::tensor::ParamStore;
use crate::error::Result;

/// Examples per work unit. Fixed so the reduction order, and therefore the
/// floating-point result, does not depend on the thread count.
const CHUNK: usize = 4;

/// Evaluates `loss_fn` on every item (in parallel), adds the gradient of the
/// mean loss into `store`, and returns the mean loss.
pub fn accumulate_mean_loss<T, F>(store: &mut ParamStore, items: &[T], loss_fn: F) -> Result<f64>
where
    T: Sync,
    F: Fn(&mut Tape, &ParamStore, usize, &T) -> Result<Var> + Sync,
{
    if items.is_empty() {
        return Ok(0.0);
    }
    let frozen: &ParamStore = store;
    let partials: Vec<(f64, BTreeMap<String, Vec<f64>>)> = items
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut loss_sum = 0.0;
            let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (j, item) in chunk.iter().enumerate() {
                let mut tape = Tape::new();
                let loss = loss_fn(&mut tape, frozen, c * CHUNK + j, item)?;
                loss_sum += tape.scalar_value(loss);
                let grads = tape.backward(loss)?;
                for (name, g) in grads.param_grads() {
                    match acc.get_mut(name) {
                        Some(dst) => dst.iter_mut().zip(g).for_each(|(d, s)| *d += s),
                        None => {
                            acc.insert(name.to_string(), g.to_vec());
                        }
                    }
                }
            }
            Ok((loss_sum, acc))
        })
        .collect::<Result<_>>()?;

    let scale = 1.0 / items.len() as f64;
    let mut total = 0.0;
    for (loss_sum, acc) in partials {
        total += loss_sum;
        for (name, g) in acc {
            let t = store.get_mut(&name)?;
            if t.requires_grad {
                t.grad_mut().iter_mut().zip(&g).for_each(|(d, s)| *d += s * scale);
            }
        }
    }
    Ok(total * scale)
}
