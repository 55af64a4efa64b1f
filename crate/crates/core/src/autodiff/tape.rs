//! Define-by-run tape for reverse-mode differentiation.
//!
//! Operations append their backward step as they execute, so the tape order
//! is the execution order and a single reverse sweep visits every node once.
//! Tapes are single-use: one forward pass, one `backward`, then build a new
//! tape for the next step.

use std::cell::{Cell, RefCell};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

type BackwardStep = Box<dyn FnMut()>;

pub struct Tape {
    steps: RefCell<Vec<BackwardStep>>,
    active: bool,
    done: Cell<bool>,
}

impl Tape {
    /// Recording tape for a training forward pass.
    pub fn new() -> Tape {
        Tape {
            steps: RefCell::new(Vec::new()),
            active: true,
            done: Cell::new(false),
        }
    }

    /// Non-recording tape: same operations, forward values only.
    pub fn inactive() -> Tape {
        Tape {
            steps: RefCell::new(Vec::new()),
            active: false,
            done: Cell::new(false),
        }
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn num_steps(&self) -> usize {
        self.steps.borrow().len()
    }

    /// Append a backward step. Call only when the output requires grad.
    pub(crate) fn record(&self, step: impl FnMut() + 'static) {
        debug_assert!(self.active);
        self.steps.borrow_mut().push(Box::new(step));
    }

    /// Should an op with these inputs record a backward step?
    pub(crate) fn tracks(&self, inputs: &[&Tensor]) -> bool {
        self.active && inputs.iter().any(|t| t.requires_grad())
    }

    /// Build an op output: marks it differentiable when the tape will track it.
    pub(crate) fn output(&self, shape: &[usize], values: Vec<f64>, tracked: bool) -> Result<Tensor> {
        let t = Tensor::new(shape, values)?;
        if tracked {
            t.mark_requires_grad();
        }
        Ok(t)
    }

    /// Run the reverse sweep from a scalar loss, accumulating gradients into
    /// every reachable tensor that requires grad. Consumes the recorded steps.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if !self.active {
            return Err(Error::config("backward on a non-recording tape"));
        }
        if self.done.get() {
            return Err(Error::config(
                "backward called twice without a new forward pass",
            ));
        }
        if loss.numel() != 1 {
            return Err(Error::shape(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        self.done.set(true);
        loss.seed_grad();
        let mut steps = self.steps.take();
        for step in steps.iter_mut().rev() {
            step();
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}
