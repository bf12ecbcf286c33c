//! Parameterized layers shared by the generative model and the detectors.
//!
//! Every layer registers its tensors on the tape at construction time and
//! afterwards only holds `Var` handles, so layer structs stay `Copy`-light
//! and a model is fully described by its tape registry.

use crate::numerics::{Mode, Rng, Tape, Var};

/// Glorot-normal initialized dense layer.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: Var,
    pub b: Var,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(tape: &mut Tape, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let std = (2.0 / (in_dim + out_dim) as f64).sqrt();
        let w = tape.param(&format!("{name}.w"), rng.normal_vec(in_dim * out_dim, std), vec![in_dim, out_dim]);
        let b = tape.param(&format!("{name}.b"), vec![0.0; out_dim], vec![out_dim]);
        Linear { w, b, in_dim, out_dim }
    }

    /// `x [m, in] -> [m, out]`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = tape.matmul(x, self.w);
        tape.add_bias(h, self.b)
    }
}

/// Batch normalization over the row axis with running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Var,
    pub beta: Var,
    pub running_mean: Var,
    pub running_var: Var,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(tape: &mut Tape, name: &str, dim: usize) -> Self {
        BatchNorm {
            gamma: tape.param(&format!("{name}.gamma"), vec![1.0; dim], vec![dim]),
            beta: tape.param(&format!("{name}.beta"), vec![0.0; dim], vec![dim]),
            running_mean: tape.buffer(&format!("{name}.running_mean"), vec![0.0; dim], vec![dim]),
            running_var: tape.buffer(&format!("{name}.running_var"), vec![1.0; dim], vec![dim]),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        tape.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, self.momentum, self.eps)
    }
}

/// Layer normalization over the column axis of each row.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Var,
    pub beta: Var,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(tape: &mut Tape, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: tape.param(&format!("{name}.gamma"), vec![1.0; dim], vec![dim]),
            beta: tape.param(&format!("{name}.beta"), vec![0.0; dim], vec![dim]),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        tape.layer_norm(x, self.gamma, self.beta, self.eps)
    }
}

/// One multi-layer perceptron stage: linear, batch norm, relu, dropout.
#[derive(Clone, Debug)]
pub struct MlpBlock {
    pub linear: Linear,
    pub bn: BatchNorm,
    pub dropout: f64,
}

impl MlpBlock {
    pub fn new(tape: &mut Tape, name: &str, in_dim: usize, out_dim: usize, dropout: f64, rng: &mut Rng) -> Self {
        MlpBlock {
            linear: Linear::new(tape, name, in_dim, out_dim, rng),
            bn: BatchNorm::new(tape, &format!("{name}.bn"), out_dim),
            dropout,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, rng: &mut Rng) -> Var {
        let h = self.linear.forward(tape, x);
        let h = self.bn.forward(tape, h);
        let h = tape.relu(h);
        tape.dropout(h, self.dropout, rng)
    }
}

/// Gated recurrent unit cell: `h' = (1 − z) ⊙ h + z ⊙ n`.
#[derive(Clone, Debug)]
pub struct GruCell {
    w_z: Linear,
    u_z: Var,
    w_r: Linear,
    u_r: Var,
    w_n: Linear,
    u_n: Var,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(tape: &mut Tape, name: &str, in_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let std = (1.0 / hidden as f64).sqrt();
        let mut rec = |tape: &mut Tape, gate: &str| {
            tape.param(&format!("{name}.u_{gate}"), rng.normal_vec(hidden * hidden, std), vec![hidden, hidden])
        };
        let u_z = rec(tape, "z");
        let u_r = rec(tape, "r");
        let u_n = rec(tape, "n");
        GruCell {
            w_z: Linear::new(tape, &format!("{name}.w_z"), in_dim, hidden, rng),
            u_z,
            w_r: Linear::new(tape, &format!("{name}.w_r"), in_dim, hidden, rng),
            u_r,
            w_n: Linear::new(tape, &format!("{name}.w_n"), in_dim, hidden, rng),
            u_n,
            hidden,
        }
    }

    /// One step: `x [b, in]`, `h [b, hidden]` -> `[b, hidden]`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Var {
        let zx = self.w_z.forward(tape, x);
        let zh = tape.matmul(h, self.u_z);
        let z_pre = tape.add(zx, zh);
        let z = tape.sigmoid(z_pre);

        let rx = self.w_r.forward(tape, x);
        let rh = tape.matmul(h, self.u_r);
        let r_pre = tape.add(rx, rh);
        let r = tape.sigmoid(r_pre);

        let nx = self.w_n.forward(tape, x);
        let rh_gated = tape.mul(r, h);
        let nh = tape.matmul(rh_gated, self.u_n);
        let n_pre = tape.add(nx, nh);
        let n = tape.tanh(n_pre);

        let z_neg = tape.scale(z, -1.0);
        let one_minus_z = tape.add_scalar(z_neg, 1.0);
        let keep = tape.mul(one_minus_z, h);
        let write = tape.mul(z, n);
        tape.add(keep, write)
    }

    pub fn zero_state(&self, tape: &mut Tape, batch: usize) -> Var {
        tape.constant(vec![0.0; batch * self.hidden], vec![batch, self.hidden])
    }
}

/// LSTM cell with forget/input/output gates and a cell state.
#[derive(Clone, Debug)]
pub struct LstmCell {
    w_i: Linear,
    u_i: Var,
    w_f: Linear,
    u_f: Var,
    w_g: Linear,
    u_g: Var,
    w_o: Linear,
    u_o: Var,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(tape: &mut Tape, name: &str, in_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let std = (1.0 / hidden as f64).sqrt();
        let mut rec = |tape: &mut Tape, gate: &str| {
            tape.param(&format!("{name}.u_{gate}"), rng.normal_vec(hidden * hidden, std), vec![hidden, hidden])
        };
        let u_i = rec(tape, "i");
        let u_f = rec(tape, "f");
        let u_g = rec(tape, "g");
        let u_o = rec(tape, "o");
        LstmCell {
            w_i: Linear::new(tape, &format!("{name}.w_i"), in_dim, hidden, rng),
            u_i,
            w_f: Linear::new(tape, &format!("{name}.w_f"), in_dim, hidden, rng),
            u_f,
            w_g: Linear::new(tape, &format!("{name}.w_g"), in_dim, hidden, rng),
            u_g,
            w_o: Linear::new(tape, &format!("{name}.w_o"), in_dim, hidden, rng),
            u_o,
            hidden,
        }
    }

    /// One step returning the new `(h, c)` pair.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> (Var, Var) {
        let gate = |tape: &mut Tape, w: &Linear, u: Var| {
            let gx = w.forward(tape, x);
            let gh = tape.matmul(h, u);
            tape.add(gx, gh)
        };
        let i_pre = gate(tape, &self.w_i, self.u_i);
        let i = tape.sigmoid(i_pre);
        let f_pre = gate(tape, &self.w_f, self.u_f);
        let f = tape.sigmoid(f_pre);
        let g_pre = gate(tape, &self.w_g, self.u_g);
        let g = tape.tanh(g_pre);
        let o_pre = gate(tape, &self.w_o, self.u_o);
        let o = tape.sigmoid(o_pre);

        let keep = tape.mul(f, c);
        let write = tape.mul(i, g);
        let c_new = tape.add(keep, write);
        let c_act = tape.tanh(c_new);
        let h_new = tape.mul(o, c_act);
        (h_new, c_new)
    }

    pub fn zero_state(&self, tape: &mut Tape, batch: usize) -> (Var, Var) {
        let h = tape.constant(vec![0.0; batch * self.hidden], vec![batch, self.hidden]);
        let c = tape.constant(vec![0.0; batch * self.hidden], vec![batch, self.hidden]);
        (h, c)
    }
}

/// Bidirectional multi-head self-attention over one window.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    pub heads: usize,
    pub width: usize,
}

impl MultiHeadAttention {
    pub fn new(tape: &mut Tape, name: &str, width: usize, heads: usize, rng: &mut Rng) -> Self {
        assert!(width % heads == 0, "attention: {} heads do not divide width {}", heads, width);
        MultiHeadAttention {
            wq: Linear::new(tape, &format!("{name}.wq"), width, width, rng),
            wk: Linear::new(tape, &format!("{name}.wk"), width, width, rng),
            wv: Linear::new(tape, &format!("{name}.wv"), width, width, rng),
            wo: Linear::new(tape, &format!("{name}.wo"), width, width, rng),
            heads,
            width,
        }
    }

    /// `x [t, width] -> [t, width]` attending across all positions.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let dh = self.width / self.heads;
        let q = self.wq.forward(tape, x);
        let k = self.wk.forward(tape, x);
        let v = self.wv.forward(tape, x);
        let mut outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt);
            let scaled = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let attn = tape.softmax(scaled);
            outputs.push(tape.matmul(attn, vh));
        }
        let merged = tape.concat_cols(&outputs);
        self.wo.forward(tape, merged)
    }
}

/// Post-norm transformer encoder block with a relu feed-forward of width
/// `4 * width`.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub attention: MultiHeadAttention,
    ff1: Linear,
    ff2: Linear,
    norm1: LayerNorm,
    norm2: LayerNorm,
}

impl EncoderBlock {
    pub fn new(tape: &mut Tape, name: &str, width: usize, heads: usize, rng: &mut Rng) -> Self {
        EncoderBlock {
            attention: MultiHeadAttention::new(tape, &format!("{name}.attn"), width, heads, rng),
            ff1: Linear::new(tape, &format!("{name}.ff1"), width, 4 * width, rng),
            ff2: Linear::new(tape, &format!("{name}.ff2"), 4 * width, width, rng),
            norm1: LayerNorm::new(tape, &format!("{name}.norm1"), width),
            norm2: LayerNorm::new(tape, &format!("{name}.norm2"), width),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let attended = self.attention.forward(tape, x);
        let res1 = tape.add(x, attended);
        let h = self.norm1.forward(tape, res1);
        let ff = self.ff1.forward(tape, h);
        let ff = tape.relu(ff);
        let ff = self.ff2.forward(tape, ff);
        let res2 = tape.add(h, ff);
        self.norm2.forward(tape, res2)
    }
}

/// Convenience: run a closure with the tape in the given mode, restoring
/// the previous mode afterwards.
pub fn with_mode<R>(tape: &mut Tape, mode: Mode, f: impl FnOnce(&mut Tape) -> R) -> R {
    let prev = tape.mode();
    tape.set_mode(mode);
    let out = f(tape);
    tape.set_mode(prev);
    out
}
