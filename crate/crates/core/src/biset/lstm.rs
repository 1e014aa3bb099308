use rand::Rng;

use crate::error::{Error, Result};
use crate::ndtensor::{Dropout, ParamStore, Tape, Tensor, Var};

/// Registers one LSTM cell: `W [4H x (in + H)]` acting on `[x; h]` and a
/// bias `b [4H]`. Gate order in the rows is input, forget, candidate, output.
pub(crate) fn insert_cell<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, scale: f64, rng: &mut R) {
    store.insert(format!("{prefix}.w"), Tensor::uniform(vec![4 * hidden, input + hidden], scale, rng));
    store.insert(format!("{prefix}.b"), Tensor::zeros(vec![4 * hidden]));
}

pub(crate) struct Cell {
    /// `[4H x in]` input weights, already sliced off the packed matrix.
    w_x: Var,
    w_h: Var,
    b: Var,
    hidden: usize,
}

impl Cell {
    pub(crate) fn load(tape: &mut Tape, params: &ParamStore, prefix: &str) -> Result<Cell> {
        let w = tape.param(params, &format!("{prefix}.w"))?;
        let b = tape.param(params, &format!("{prefix}.b"))?;
        let (rows, cols) = tape.dims(w);
        let hidden = rows / 4;
        if rows % 4 != 0 || cols <= hidden {
            return Err(Error::shape(format!("{prefix}.w has shape {rows}x{cols}")));
        }
        let w_x = tape.slice_cols(w, 0, cols - hidden)?;
        let w_h = tape.slice_cols(w, cols - hidden, hidden)?;
        Ok(Cell { w_x, w_h, b, hidden })
    }

    pub(crate) fn hidden(&self) -> usize {
        self.hidden
    }

    /// Input projections `W_x x_t` for a whole sequence `[L x in]` at once.
    pub(crate) fn project_inputs(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let wt = tape.transpose(self.w_x)?;
        tape.matmul(x, wt)
    }

    /// One step given the precomputed input projection `xw` (length 4H).
    pub(crate) fn step(&self, tape: &mut Tape, xw: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hw = tape.matmul(self.w_h, h)?;
        let pre = tape.add(xw, hw)?;
        let pre = tape.add(pre, self.b)?;
        let n = self.hidden;
        let i = tape.slice_cols(pre, 0, n)?;
        let f = tape.slice_cols(pre, n, n)?;
        let g = tape.slice_cols(pre, 2 * n, n)?;
        let o = tape.slice_cols(pre, 3 * n, n)?;
        let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }

    /// Single step from a raw input vector.
    pub(crate) fn step_input(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let xw = tape.matmul(self.w_x, x)?;
        self.step(tape, xw, h, c)
    }
}

/// Runs a cell over `[L x in]`, forwards or backwards, from zero state.
/// Returns per-position hidden states in original position order.
fn run_direction(tape: &mut Tape, cell: &Cell, x: Var, reverse: bool) -> Result<Vec<Var>> {
    let len = tape.dims(x).0;
    let xw = cell.project_inputs(tape, x)?;
    let zeros = vec![0.0; cell.hidden()];
    let mut h = tape.constant(vec![cell.hidden()], zeros.clone())?;
    let mut c = tape.constant(vec![cell.hidden()], zeros)?;
    let mut out = vec![h; len];
    let order: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
    for t in order {
        let xt = tape.row(xw, t)?;
        (h, c) = cell.step(tape, xt, h, c)?;
        out[t] = h;
    }
    Ok(out)
}

/// Output of a stacked bidirectional encoder.
#[derive(Clone, Copy, Debug)]
pub struct EncodedSequence {
    /// `[L x 2H]`, forward state then backward state per position.
    pub states: Var,
    /// `[2H]`: last forward state and first backward state of the top layer.
    pub summary: Var,
}

/// Stacked BiLSTM over embedded inputs `[L x E]`; dropout is applied to the
/// outputs of every layer except the last.
pub(crate) fn bilstm(
    tape: &mut Tape,
    params: &ParamStore,
    prefix: &str,
    layers: usize,
    x: Var,
    dropout: &mut Dropout,
) -> Result<EncodedSequence> {
    let len = tape.dims(x).0;
    let mut input = x;
    let mut last = None;
    for l in 0..layers {
        let fwd = Cell::load(tape, params, &format!("{prefix}.l{l}.fwd"))?;
        let bwd = Cell::load(tape, params, &format!("{prefix}.l{l}.bwd"))?;
        let hf = run_direction(tape, &fwd, input, false)?;
        let hb = run_direction(tape, &bwd, input, true)?;
        let f = tape.concat_rows(&hf)?;
        let b = tape.concat_rows(&hb)?;
        let states = tape.concat_cols(&[f, b])?;
        last = Some((states, hf[len - 1], hb[0]));
        input = if l + 1 < layers { dropout.apply(tape, states)? } else { states };
    }
    let (states, f_last, b_first) = last.ok_or_else(|| Error::Config("encoder needs at least one layer".into()))?;
    let summary = tape.concat_cols(&[f_last, b_first])?;
    Ok(EncodedSequence { states, summary })
}
