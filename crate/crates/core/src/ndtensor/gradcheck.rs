//! Central-difference gradient verification.

use super::tape::{Tape, Var};
use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// Below this magnitude the central difference is dominated by rounding
/// (roughly `ulp(f) / eps`), so small components are compared absolutely.
const ERROR_FLOOR: f64 = 1e-6;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(ERROR_FLOOR, analytic.abs() + numeric.abs())
}

fn finite(value: f64, location: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical { location: location(), message: format!("non-finite value {value}") })
    }
}

/// Maximum relative error between the tape gradient of `f` and a central
/// difference with step `eps`, over every coordinate of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("grad_check step must be positive, got {eps}")));
    }
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.scalar_value(out))
    };

    let leaves: Vec<Tensor> = inputs.iter().cloned().map(Tensor::with_grad).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t)).collect();
    let loss = f(&mut tape, &vars)?;
    finite(tape.scalar_value(loss), || "loss".into())?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut probe = leaves.clone();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; leaves[k].len()]);
        for i in 0..leaves[k].len() {
            let a = finite(analytic[i], || format!("input {k}[{i}] (analytic)"))?;
            let orig = leaves[k].values()[i];
            probe[k].values_mut()[i] = orig + eps;
            let plus = eval(&probe)?;
            probe[k].values_mut()[i] = orig - eps;
            let minus = eval(&probe)?;
            probe[k].values_mut()[i] = orig;
            let numeric = finite((plus - minus) / (2.0 * eps), || format!("input {k}[{i}] (numeric)"))?;
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}

/// [`grad_check`] over every value of every tensor in a parameter store.
pub fn grad_check_params<F>(f: F, store: &ParamStore, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("grad_check step must be positive, got {eps}")));
    }
    let mut grads_store = store.clone();
    grads_store.zero_grad();
    let mut tape = Tape::new();
    let loss = f(&mut tape, &grads_store)?;
    finite(tape.scalar_value(loss), || "loss".into())?;
    tape.backward_into(loss, &mut grads_store)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = f(&mut tape, s)?;
        Ok(tape.scalar_value(out))
    };
    let names: Vec<String> = store.names().cloned().collect();
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for name in &names {
        let analytic = grads_store.get(name)?.grad().to_vec();
        for (i, &a) in analytic.iter().enumerate() {
            finite(a, || format!("{name}[{i}] (analytic)"))?;
            let orig = store.get(name)?.values()[i];
            probe.get_mut(name)?.values_mut()[i] = orig + eps;
            let plus = eval(&probe)?;
            probe.get_mut(name)?.values_mut()[i] = orig - eps;
            let minus = eval(&probe)?;
            probe.get_mut(name)?.values_mut()[i] = orig;
            let numeric = finite((plus - minus) / (2.0 * eps), || format!("{name}[{i}] (numeric)"))?;
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}
