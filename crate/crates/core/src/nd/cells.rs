//! Recurrent cells built from tape primitives.

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, where `fan_in` is the
/// number of rows of the weight matrix.
pub fn init_weight<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (rows.max(1) as f64).sqrt();
    Tensor::uniform(rows, cols, bound, rng)
}

/// One LSTM layer. Gate blocks are laid out as `[input, forget, cell, output]`.
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_x = store.add(format!("{prefix}.w_x"), init_weight(input, 4 * hidden, rng))?;
        let w_h = store.add(format!("{prefix}.w_h"), init_weight(hidden, 4 * hidden, rng))?;
        let mut b = Tensor::zeros(1, 4 * hidden);
        b.data_mut()[hidden..2 * hidden].fill(1.0);
        let bias = store.add(format!("{prefix}.bias"), b)?;
        Ok(Self {
            w_x,
            w_h,
            bias,
            input,
            hidden,
        })
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |s: &str| {
            store
                .id(&format!("{prefix}.{s}"))
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {prefix}.{s}")))
        };
        let w_x = get("w_x")?;
        let (input, four_h) = (store.get(w_x).rows(), store.get(w_x).cols());
        Ok(Self {
            w_x,
            w_h: get("w_h")?,
            bias: get("bias")?,
            input,
            hidden: four_h / 4,
        })
    }
}

/// One LSTM step: returns `(h, c)`.
///
/// `i, f, o = σ(·)`, `g = tanh(·)`, `c = f∘c_prev + i∘g`, `h = o∘tanh(c)`.
pub fn lstm_cell(tape: &mut Tape<'_>, x: Var, h_prev: Var, c_prev: Var, layer: &LstmLayer) -> Result<(Var, Var)> {
    let hd = layer.hidden;
    let [_, xc] = tape.shape(x);
    if xc != layer.input || tape.shape(h_prev) != [1, hd] || tape.shape(c_prev) != [1, hd] {
        return Err(Error::shape(
            "lstm_cell",
            format!(
                "x {:?}, h {:?}, c {:?} for input {} hidden {hd}",
                tape.shape(x),
                tape.shape(h_prev),
                tape.shape(c_prev),
                layer.input
            ),
        ));
    }
    let wx = tape.param(layer.w_x);
    let wh = tape.param(layer.w_h);
    let b = tape.param(layer.bias);
    let xw = tape.matmul(x, wx)?;
    let hw = tape.matmul(h_prev, wh)?;
    let pre = tape.add(xw, hw)?;
    let pre = tape.add(pre, b)?;
    let ifo_i = tape.slice_cols(pre, 0, 2 * hd)?;
    let if_gates = tape.sigmoid(ifo_i);
    let i = tape.slice_cols(if_gates, 0, hd)?;
    let f = tape.slice_cols(if_gates, hd, hd)?;
    let g_pre = tape.slice_cols(pre, 2 * hd, hd)?;
    let g = tape.tanh(g_pre);
    let o_pre = tape.slice_cols(pre, 3 * hd, hd)?;
    let o = tape.sigmoid(o_pre);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Hidden and cell states of every layer of a stacked LSTM.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
}

impl LstmState {
    /// Output of the top layer.
    pub fn top(&self) -> Var {
        *self.h.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone)]
pub struct StackedLstm {
    pub layers: Vec<LstmLayer>,
}

impl StackedLstm {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let inp = if l == 0 { input } else { hidden };
            layers.push(LstmLayer::init(store, &format!("{prefix}.l{l}"), inp, hidden, rng)?);
        }
        Ok(Self { layers })
    }

    pub fn from_store(store: &ParamStore, prefix: &str, num_layers: usize) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|l| LstmLayer::from_store(store, &format!("{prefix}.l{l}")))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn zero_state(&self, tape: &mut Tape<'_>) -> LstmState {
        let n = self.layers.len();
        let z = tape.constant(Tensor::zeros(1, self.hidden()));
        LstmState {
            h: vec![z; n],
            c: vec![z; n],
        }
    }

    /// One step through all layers, feeding each layer's `h` upward.
    pub fn step(&self, tape: &mut Tape<'_>, x: Var, prev: &LstmState) -> Result<LstmState> {
        let mut input = x;
        let mut next = LstmState {
            h: Vec::with_capacity(self.layers.len()),
            c: Vec::with_capacity(self.layers.len()),
        };
        for (l, layer) in self.layers.iter().enumerate() {
            let (h, c) = lstm_cell(tape, input, prev.h[l], prev.c[l], layer)?;
            next.h.push(h);
            next.c.push(c);
            input = h;
        }
        Ok(next)
    }
}

/// GRU cell:
/// `z = σ(x W_z + h U_z + b_z)`, `r = σ(x W_r + h U_r + b_r)`,
/// `h̃ = tanh(x W_h + (r∘h) U_h + b_h)`, `h' = (1 − z)∘h + z∘h̃`.
///
/// With this convention `z = 0` keeps the previous state unchanged.
#[derive(Debug, Clone)]
pub struct GruCell {
    /// `input × 3H`, blocks `[z, r, candidate]`.
    pub w_x: ParamId,
    /// `H × 2H`, blocks `[z, r]`.
    pub u_zr: ParamId,
    /// `H × H`.
    pub u_h: ParamId,
    /// `1 × 3H`.
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            w_x: store.add(format!("{prefix}.w_x"), init_weight(input, 3 * hidden, rng))?,
            u_zr: store.add(format!("{prefix}.u_zr"), init_weight(hidden, 2 * hidden, rng))?,
            u_h: store.add(format!("{prefix}.u_h"), init_weight(hidden, hidden, rng))?,
            bias: store.add(format!("{prefix}.bias"), Tensor::zeros(1, 3 * hidden))?,
            input,
            hidden,
        })
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |s: &str| {
            store
                .id(&format!("{prefix}.{s}"))
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {prefix}.{s}")))
        };
        let w_x = get("w_x")?;
        let u_h = get("u_h")?;
        Ok(Self {
            w_x,
            u_zr: get("u_zr")?,
            u_h,
            bias: get("bias")?,
            input: store.get(w_x).rows(),
            hidden: store.get(u_h).rows(),
        })
    }
}

pub fn gru_cell(tape: &mut Tape<'_>, x: Var, h_prev: Var, cell: &GruCell) -> Result<Var> {
    let hd = cell.hidden;
    let [_, xc] = tape.shape(x);
    if xc != cell.input || tape.shape(h_prev) != [1, hd] {
        return Err(Error::shape(
            "gru_cell",
            format!(
                "x {:?}, h {:?} for input {} hidden {hd}",
                tape.shape(x),
                tape.shape(h_prev),
                cell.input
            ),
        ));
    }
    let wx = tape.param(cell.w_x);
    let uzr = tape.param(cell.u_zr);
    let uh = tape.param(cell.u_h);
    let b = tape.param(cell.bias);
    let xw = tape.matmul(x, wx)?;
    let xw = tape.add(xw, b)?;
    let hu = tape.matmul(h_prev, uzr)?;
    let zr_x = tape.slice_cols(xw, 0, 2 * hd)?;
    let zr_pre = tape.add(zr_x, hu)?;
    let zr = tape.sigmoid(zr_pre);
    let z = tape.slice_cols(zr, 0, hd)?;
    let r = tape.slice_cols(zr, hd, hd)?;
    let rh = tape.mul(r, h_prev)?;
    let rhu = tape.matmul(rh, uh)?;
    let cand_x = tape.slice_cols(xw, 2 * hd, hd)?;
    let cand_pre = tape.add(cand_x, rhu)?;
    let cand = tape.tanh(cand_pre);
    let keep_gate = tape.one_minus(z);
    let keep = tape.mul(keep_gate, h_prev)?;
    let write = tape.mul(z, cand)?;
    tape.add(keep, write)
}
