//! Single-layer bi-directional LSTM over valid token positions. Forward and
//! backward per-step states (each width D/2) are concatenated into rows of
//! width D.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::error::Result;
use crate::nn;

/// One direction's weights with the four gates (i, f, g, o) packed along the
/// output axis: `w_x [D, 4H]`, `w_h [H, 4H]`, `b [4H]`.
#[derive(Debug, Clone)]
pub struct LstmDirection {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b: Tensor,
}

impl LstmDirection {
    fn init(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> LstmDirection {
        let limit = 1.0 / (hidden as f64).sqrt();
        LstmDirection {
            w_x: nn::uniform(&[input_dim, 4 * hidden], limit, rng),
            w_h: nn::uniform(&[hidden, 4 * hidden], limit, rng),
            b: nn::zeros(&[4 * hidden]),
        }
    }

    /// One cell step: returns (hidden, cell).
    fn step(
        &self,
        tape: &Tape,
        x: &Tensor,
        hidden: &Tensor,
        cell: &Tensor,
        h_dim: usize,
    ) -> Result<(Tensor, Tensor)> {
        let pre = tape.add(
            &tape.add(&tape.matmul(x, &self.w_x)?, &tape.matmul(hidden, &self.w_h)?)?,
            &self.b,
        )?;
        let i = tape.sigmoid(&tape.slice(&pre, 0, 0, h_dim)?)?;
        let f = tape.sigmoid(&tape.slice(&pre, 0, h_dim, h_dim)?)?;
        let g = tape.tanh(&tape.slice(&pre, 0, 2 * h_dim, h_dim)?)?;
        let o = tape.sigmoid(&tape.slice(&pre, 0, 3 * h_dim, h_dim)?)?;
        let cell_next = tape.add(&tape.mul(&f, cell)?, &tape.mul(&i, &g)?)?;
        let hidden_next = tape.mul(&o, &tape.tanh(&cell_next)?)?;
        Ok((hidden_next, cell_next))
    }

    /// States over the whole sequence in *processing* order.
    fn run(&self, tape: &Tape, steps: &[Tensor], h_dim: usize) -> Result<Vec<Tensor>> {
        let mut hidden = Tensor::zeros(&[h_dim])?;
        let mut cell = Tensor::zeros(&[h_dim])?;
        let mut states = Vec::with_capacity(steps.len());
        for x in steps {
            let (h, c) = self.step(tape, x, &hidden, &cell, h_dim)?;
            states.push(h.clone());
            hidden = h;
            cell = c;
        }
        Ok(states)
    }
}

#[derive(Debug, Clone)]
pub struct BiLstm {
    pub fwd: LstmDirection,
    pub bwd: LstmDirection,
    pub hidden: usize,
}

impl BiLstm {
    /// Hidden size is `d / 2` per direction so the concatenation has width d.
    pub fn init(d: usize, rng: &mut ChaCha8Rng) -> BiLstm {
        let hidden = d / 2;
        BiLstm {
            fwd: LstmDirection::init(d, hidden, rng),
            bwd: LstmDirection::init(d, hidden, rng),
            hidden,
        }
    }

    /// Encode `[T, D]` inputs (valid positions only) into `[T, D]` contextual
    /// rows: forward state at t concatenated with backward state at t.
    pub fn run(&self, tape: &Tape, inputs: &Tensor) -> Result<Tensor> {
        let t_len = inputs.shape()[0];
        let steps: Vec<Tensor> = (0..t_len)
            .map(|t| tape.row(inputs, t))
            .collect::<Result<_>>()?;
        let fwd_states = self.fwd.run(tape, &steps, self.hidden)?;
        let rev_steps: Vec<Tensor> = steps.iter().rev().cloned().collect();
        let mut bwd_states = self.bwd.run(tape, &rev_steps, self.hidden)?;
        bwd_states.reverse();

        let rows: Vec<Tensor> = fwd_states
            .iter()
            .zip(&bwd_states)
            .map(|(f, b)| tape.concat(0, &[f, b]))
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = rows.iter().collect();
        tape.stack_rows(&refs)
    }
}
