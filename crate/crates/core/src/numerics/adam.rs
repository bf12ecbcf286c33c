//! Adam with bias correction and classic (coupled) L2 weight decay: the
//! decay term is added to the gradient before the moment updates.

use super::{Tape, Var};

#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64, weight_decay: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected update of `values` in place.
    pub fn update(&mut self, values: &mut [f64], grad: &[f64]) {
        assert_eq!(
            values.len(),
            self.m.len(),
            "adam: parameter length {} does not match state length {}",
            values.len(),
            self.m.len()
        );
        assert_eq!(
            grad.len(),
            self.m.len(),
            "adam: gradient length {} does not match state length {}",
            grad.len(),
            self.m.len()
        );
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..values.len() {
            let g = grad[i] + self.weight_decay * values[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Optimizer over every parameter registered on a tape, one slot per
/// parameter in registration order.
pub struct Adam {
    slots: Vec<(Var, AdamState)>,
}

impl Adam {
    pub fn new(tape: &Tape, lr: f64, weight_decay: f64) -> Self {
        let slots = tape
            .params()
            .into_iter()
            .map(|v| (v, AdamState::new(tape.values(v).len(), lr, weight_decay)))
            .collect();
        Adam { slots }
    }

    /// Apply one update from the gradients accumulated on the tape.
    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, tape: &mut Tape) {
        for (var, state) in &mut self.slots {
            let Some(grad) = tape.grad(*var).map(|g| g.to_vec()) else { continue };
            state.update(tape.values_mut(*var), &grad);
        }
    }
}
