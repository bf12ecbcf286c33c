//! Dense tensors, a replayable operation tape for reverse-mode gradients,
//! a deterministic seeded RNG, and the Adam optimizer.
//!
//! Everything is 64-bit floats, row-major, CPU only. The tape is
//! define-by-run: each step records forward ops, runs one backward pass,
//! and `reset` drops the transient nodes while parameters and buffers
//! (registered once, up front) stay alive across steps.
//!
//! Shape mismatches are programming errors and panic with the op name and
//! both shapes.

pub mod adam;
pub mod gradcheck;
pub mod rng;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use rng::Rng;

/// Floor applied inside `log` so exact zeros stay finite.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`]. Cheap to copy, only valid for the tape
/// that produced it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(usize);

/// A dense row-major tensor of 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(values: Vec<f64>, shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            values.len(),
            numel,
            "tensor: values length {} does not match shape {:?}",
            values.len(),
            shape
        );
        Tensor { shape, values, requires_grad: false, grad: None }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::new(vec![0.0; numel], shape)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![v], vec![1])
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }
}

/// Whether stochastic/statistics-bearing ops run in training or inference
/// behavior. Dropout is identity and batch norm uses frozen running
/// statistics under `Infer`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    Train,
    Infer,
}

/// Persistent registry entry kind: parameters receive gradients and
/// optimizer updates, buffers (e.g. batch-norm running statistics) are
/// checkpointed but never optimized.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PersistKind {
    Param,
    Buffer,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Transpose { a: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    AddBias { a: Var, bias: Var },
    Scale { a: Var, c: f64 },
    AddScalar { a: Var },
    Sigmoid { a: Var },
    Tanh { a: Var },
    Relu { a: Var },
    Exp { a: Var },
    Log { a: Var },
    SoftmaxLast { a: Var },
    SumAll { a: Var },
    MeanAll { a: Var },
    SliceRows { a: Var, start: usize },
    SliceCols { a: Var, start: usize },
    GatherCols { a: Var, idx: Vec<usize> },
    ConcatCols { parts: Vec<Var> },
    MaxScalar { a: Var, c: f64 },
    HuberNormSq { a: Var, delta: f64 },
    LayerNorm { a: Var, gamma: Var, beta: Var, mean: Vec<f64>, inv_std: Vec<f64> },
    BatchNorm {
        a: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Dropout { a: Var, mask: Vec<f64> },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

struct RegistryEntry {
    name: String,
    var: Var,
    kind: PersistKind,
}

/// Define-by-run gradient tape. Parameters and buffers occupy a persistent
/// prefix of the node arena; everything recorded after them is transient
/// and discarded by [`Tape::reset`].
pub struct Tape {
    nodes: Vec<Node>,
    persistent: usize,
    registry: Vec<RegistryEntry>,
    mode: Mode,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), persistent: 0, registry: Vec::new(), mode: Mode::Train }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn push(&mut self, tensor: Tensor, op: Op) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node { tensor, op });
        Var(id)
    }

    /// Register a named trainable parameter. Must happen before any
    /// transient op is recorded so the persistent prefix stays contiguous.
    pub fn param(&mut self, name: &str, values: Vec<f64>, shape: Vec<usize>) -> Var {
        self.persist(name, values, shape, PersistKind::Param)
    }

    /// Register a named non-trainable persistent buffer (running statistics).
    pub fn buffer(&mut self, name: &str, values: Vec<f64>, shape: Vec<usize>) -> Var {
        self.persist(name, values, shape, PersistKind::Buffer)
    }

    fn persist(&mut self, name: &str, values: Vec<f64>, shape: Vec<usize>, kind: PersistKind) -> Var {
        assert_eq!(
            self.nodes.len(),
            self.persistent,
            "persistent node {:?} registered after transient ops; register all parameters first",
            name
        );
        assert!(
            self.registry.iter().all(|e| e.name != name),
            "duplicate persistent node name {:?}",
            name
        );
        let mut tensor = Tensor::new(values, shape);
        tensor.requires_grad = matches!(kind, PersistKind::Param);
        let var = self.push(tensor, Op::Leaf);
        self.registry.push(RegistryEntry { name: name.to_string(), var, kind });
        self.persistent = self.nodes.len();
        var
    }

    /// A transient constant leaf (inputs, targets, noise draws).
    pub fn constant(&mut self, values: Vec<f64>, shape: Vec<usize>) -> Var {
        self.push(Tensor::new(values, shape), Op::Leaf)
    }

    /// A transient leaf that participates in gradient computation. Used by
    /// loss-level gradient checks that differentiate w.r.t. plain inputs.
    pub fn leaf_grad(&mut self, values: Vec<f64>, shape: Vec<usize>) -> Var {
        let mut tensor = Tensor::new(values, shape);
        tensor.requires_grad = true;
        self.push(tensor, Op::Leaf)
    }

    /// Drop all transient nodes and clear every gradient.
    pub fn reset(&mut self) {
        self.nodes.truncate(self.persistent);
        for node in &mut self.nodes {
            node.tensor.grad = None;
        }
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.tensor.grad = None;
        }
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].tensor.values
    }

    /// Mutable access to a leaf's values (optimizer updates, running-stat
    /// updates, finite-difference perturbations).
    pub fn values_mut(&mut self, v: Var) -> &mut [f64] {
        &mut self.nodes[v.0].tensor.values
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].tensor.shape
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].tensor.grad.as_deref()
    }

    /// Value of a single-element tensor.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = &self.nodes[v.0].tensor;
        assert_eq!(t.numel(), 1, "scalar: tensor has shape {:?}", t.shape);
        t.values[0]
    }

    pub fn num_transient(&self) -> usize {
        self.nodes.len() - self.persistent
    }

    /// Registered persistent entries in registration order.
    pub fn registry(&self) -> impl Iterator<Item = (&str, Var, PersistKind)> {
        self.registry.iter().map(|e| (e.name.as_str(), e.var, e.kind))
    }

    pub fn params(&self) -> Vec<Var> {
        self.registry
            .iter()
            .filter(|e| e.kind == PersistKind::Param)
            .map(|e| e.var)
            .collect()
    }

    pub fn lookup(&self, name: &str) -> Option<Var> {
        self.registry.iter().find(|e| e.name == name).map(|e| e.var)
    }

    // ── shape helpers ────────────────────────────────────────────────

    fn dims2(&self, v: Var, op: &str) -> (usize, usize) {
        let s = self.shape(v);
        assert_eq!(s.len(), 2, "{}: expected a 2-d tensor, got shape {:?}", op, s);
        (s[0], s[1])
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].tensor.requires_grad
    }

    fn out(&mut self, values: Vec<f64>, shape: Vec<usize>, requires: bool, op: Op) -> Var {
        let mut tensor = Tensor::new(values, shape);
        tensor.requires_grad = requires;
        self.push(tensor, op)
    }

    // ── forward ops ──────────────────────────────────────────────────

    /// Matrix product of two 2-d tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims2(a, "matmul");
        let (k2, n) = self.dims2(b, "matmul");
        assert_eq!(
            k,
            k2,
            "matmul: inner dimensions do not match: lhs {:?}, rhs {:?}",
            self.shape(a),
            self.shape(b)
        );
        let mut c = vec![0.0; m * n];
        matmul_raw(self.values(a), self.values(b), &mut c, m, k, n);
        let req = self.requires(a) || self.requires(b);
        self.out(c, vec![m, n], req, Op::MatMul { a, b })
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.dims2(a, "transpose");
        let x = self.values(a);
        let mut y = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                y[j * m + i] = x[i * n + j];
            }
        }
        let req = self.requires(a);
        self.out(y, vec![n, m], req, Op::Transpose { a })
    }

    fn binary_same_shape(&self, a: Var, b: Var, op: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{}: operand shapes differ: lhs {:?}, rhs {:?}",
            op,
            self.shape(a),
            self.shape(b)
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "add");
        let values = zip_map(self.values(a), self.values(b), |x, y| x + y);
        let shape = self.shape(a).to_vec();
        let req = self.requires(a) || self.requires(b);
        self.out(values, shape, req, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "sub");
        let values = zip_map(self.values(a), self.values(b), |x, y| x - y);
        let shape = self.shape(a).to_vec();
        let req = self.requires(a) || self.requires(b);
        self.out(values, shape, req, Op::Sub { a, b })
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, "mul");
        let values = zip_map(self.values(a), self.values(b), |x, y| x * y);
        let shape = self.shape(a).to_vec();
        let req = self.requires(a) || self.requires(b);
        self.out(values, shape, req, Op::Mul { a, b })
    }

    /// Add a `[n]` bias row to every row of a `[m, n]` tensor.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (m, n) = self.dims2(a, "add_bias");
        assert_eq!(
            self.shape(bias),
            &[n],
            "add_bias: bias shape does not match row width: lhs {:?}, bias {:?}",
            self.shape(a),
            self.shape(bias)
        );
        let x = self.values(a);
        let b = self.values(bias);
        let mut y = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                y[i * n + j] = x[i * n + j] + b[j];
            }
        }
        let req = self.requires(a) || self.requires(bias);
        self.out(y, vec![m, n], req, Op::AddBias { a, bias })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let values = self.values(a).iter().map(|&x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let req = self.requires(a);
        self.out(values, shape, req, Op::Scale { a, c })
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let values = self.values(a).iter().map(|&x| x + c).collect();
        let shape = self.shape(a).to_vec();
        let req = self.requires(a);
        self.out(values, shape, req, Op::AddScalar { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let values = self.values(a).iter().map(|&x| sigmoid_raw(x)).collect();
        let shape = self.shape(a).to_vec();
        let req = self.requires(a);
        self.out(values, shape, req, Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let values = self.values(a).iter().map(|&x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        let req = self.requires(a);
        self.out(values, shape, req, Op::Tanh { a })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let values = self.values(a).iter().map(|&x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        let req = self.requires(a);
        self.out(values, shape, req, Op::Relu { a })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let values = self.values(a).iter().map(|&x| x.exp()).collect();
        let shape = self.shape(a).to_vec();
        let req = self.requires(a);
        self.out(values, shape, req, Op::Exp { a })
    }

    /// Natural log with the input floored at [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Var {
        let values = self.values(a).iter().map(|&x| x.max(LOG_FLOOR).ln()).collect();
        let shape = self.shape(a).to_vec();
        let req = self.requires(a);
        self.out(values, shape, req, Op::Log { a })
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let width = *shape.last().expect("softmax: zero-rank tensor");
        assert!(width > 0, "softmax: empty last axis, shape {:?}", shape);
        let x = self.values(a);
        let mut y = vec![0.0; x.len()];
        for row in 0..x.len() / width {
            softmax_row(&x[row * width..(row + 1) * width], &mut y[row * width..(row + 1) * width]);
        }
        let req = self.requires(a);
        self.out(y, shape, req, Op::SoftmaxLast { a })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.values(a).iter().sum();
        let req = self.requires(a);
        self.out(vec![s], vec![1], req, Op::SumAll { a })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.values(a).len();
        assert!(n > 0, "mean: empty tensor");
        let s: f64 = self.values(a).iter().sum();
        let req = self.requires(a);
        self.out(vec![s / n as f64], vec![1], req, Op::MeanAll { a })
    }

    /// Contiguous row slice `[start, start+len)` of a 2-d tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.dims2(a, "slice_rows");
        assert!(
            start + len <= m,
            "slice_rows: range {}..{} out of bounds for shape {:?}",
            start,
            start + len,
            self.shape(a)
        );
        let values = self.values(a)[start * n..(start + len) * n].to_vec();
        let req = self.requires(a);
        self.out(values, vec![len, n], req, Op::SliceRows { a, start })
    }

    /// Contiguous column slice `[start, start+len)` of a 2-d tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.dims2(a, "slice_cols");
        assert!(
            start + len <= n,
            "slice_cols: range {}..{} out of bounds for shape {:?}",
            start,
            start + len,
            self.shape(a)
        );
        let x = self.values(a);
        let mut y = vec![0.0; m * len];
        for i in 0..m {
            y[i * len..(i + 1) * len].copy_from_slice(&x[i * n + start..i * n + start + len]);
        }
        let req = self.requires(a);
        self.out(y, vec![m, len], req, Op::SliceCols { a, start })
    }

    /// Column gather: `out[i, j] = a[i, idx[j]]`. Indices may repeat.
    pub fn gather_cols(&mut self, a: Var, idx: &[usize]) -> Var {
        let (m, n) = self.dims2(a, "gather_cols");
        assert!(
            idx.iter().all(|&j| j < n),
            "gather_cols: index out of bounds for shape {:?}: {:?}",
            self.shape(a),
            idx
        );
        let x = self.values(a);
        let w = idx.len();
        let mut y = vec![0.0; m * w];
        for i in 0..m {
            for (j, &src) in idx.iter().enumerate() {
                y[i * w + j] = x[i * n + src];
            }
        }
        let req = self.requires(a);
        self.out(y, vec![m, w], req, Op::GatherCols { a, idx: idx.to_vec() })
    }

    /// Concatenate 2-d tensors with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let (m, _) = self.dims2(parts[0], "concat_cols");
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (mp, np) = self.dims2(p, "concat_cols");
            assert_eq!(
                mp,
                m,
                "concat_cols: row counts differ: first {:?}, other {:?}",
                self.shape(parts[0]),
                self.shape(p)
            );
            widths.push(np);
        }
        let n: usize = widths.iter().sum();
        let mut y = vec![0.0; m * n];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let x = self.values(p);
            for i in 0..m {
                y[i * n + offset..i * n + offset + w].copy_from_slice(&x[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let req = parts.iter().any(|&p| self.requires(p));
        self.out(y, vec![m, n], req, Op::ConcatCols { parts: parts.to_vec() })
    }

    /// Elementwise `max(x, c)`; gradient passes only where `x > c`.
    pub fn max_scalar(&mut self, a: Var, c: f64) -> Var {
        let values = self.values(a).iter().map(|&x| x.max(c)).collect();
        let shape = self.shape(a).to_vec();
        let req = self.requires(a);
        self.out(values, shape, req, Op::MaxScalar { a, c })
    }

    /// Huber value from a squared residual norm: for `s = ||r||²`,
    /// `s/(2δ)` when `s ≤ δ²`, else `sqrt(s) − δ/2`. C¹ at the branch point.
    pub fn huber_normsq(&mut self, a: Var, delta: f64) -> Var {
        assert!(delta > 0.0, "huber_normsq: delta must be positive, got {}", delta);
        let values = self
            .values(a)
            .iter()
            .map(|&s| {
                if s <= delta * delta {
                    s / (2.0 * delta)
                } else {
                    s.sqrt() - delta / 2.0
                }
            })
            .collect();
        let shape = self.shape(a).to_vec();
        let req = self.requires(a);
        self.out(values, shape, req, Op::HuberNormSq { a, delta })
    }

    /// Per-row layer normalization with learned per-column gain and shift.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let (m, n) = self.dims2(a, "layer_norm");
        assert_eq!(
            self.shape(gamma),
            &[n],
            "layer_norm: gamma shape does not match row width: input {:?}, gamma {:?}",
            self.shape(a),
            self.shape(gamma)
        );
        assert_eq!(
            self.shape(beta),
            &[n],
            "layer_norm: beta shape does not match row width: input {:?}, beta {:?}",
            self.shape(a),
            self.shape(beta)
        );
        let x = self.values(a);
        let g = self.values(gamma);
        let b = self.values(beta);
        let mut y = vec![0.0; m * n];
        let mut means = vec![0.0; m];
        let mut inv_stds = vec![0.0; m];
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            means[i] = mean;
            inv_stds[i] = inv_std;
            for j in 0..n {
                y[i * n + j] = g[j] * (row[j] - mean) * inv_std + b[j];
            }
        }
        let req = self.requires(a) || self.requires(gamma) || self.requires(beta);
        self.out(y, vec![m, n], req, Op::LayerNorm { a, gamma, beta, mean: means, inv_std: inv_stds })
    }

    /// Per-column batch normalization. In `Train` mode statistics come from
    /// the batch and `running_mean` / `running_var` buffers are updated in
    /// place with the given momentum; in `Infer` mode the frozen running
    /// statistics are used and nothing is mutated.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        a: Var,
        gamma: Var,
        beta: Var,
        running_mean: Var,
        running_var: Var,
        momentum: f64,
        eps: f64,
    ) -> Var {
        let (m, n) = self.dims2(a, "batch_norm");
        for (v, label) in [(gamma, "gamma"), (beta, "beta"), (running_mean, "running_mean"), (running_var, "running_var")] {
            assert_eq!(
                self.shape(v),
                &[n],
                "batch_norm: {} shape does not match feature width: input {:?}, {} {:?}",
                label,
                self.shape(a),
                label,
                self.shape(v)
            );
        }
        let batch_stats = self.mode == Mode::Train;
        let (mean, var) = if batch_stats {
            assert!(m >= 2, "batch_norm: training mode needs at least 2 rows, got shape {:?}", self.shape(a));
            let x = self.values(a);
            let mut mean = vec![0.0; n];
            let mut var = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    mean[j] += x[i * n + j];
                }
            }
            for mj in mean.iter_mut() {
                *mj /= m as f64;
            }
            for i in 0..m {
                for j in 0..n {
                    let d = x[i * n + j] - mean[j];
                    var[j] += d * d;
                }
            }
            for vj in var.iter_mut() {
                *vj /= m as f64;
            }
            // Unbiased variance feeds the running estimate, biased feeds
            // the normalization itself.
            let unbias = m as f64 / (m as f64 - 1.0);
            {
                let rm = self.values_mut(running_mean);
                for j in 0..n {
                    rm[j] = (1.0 - momentum) * rm[j] + momentum * mean[j];
                }
            }
            {
                let rv = self.values_mut(running_var);
                for j in 0..n {
                    rv[j] = (1.0 - momentum) * rv[j] + momentum * var[j] * unbias;
                }
            }
            (mean, var)
        } else {
            (self.values(running_mean).to_vec(), self.values(running_var).to_vec())
        };
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let x = self.values(a);
        let g = self.values(gamma);
        let b = self.values(beta);
        let mut y = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                y[i * n + j] = g[j] * (x[i * n + j] - mean[j]) * inv_std[j] + b[j];
            }
        }
        let req = self.requires(a) || self.requires(gamma) || self.requires(beta);
        self.out(
            y,
            vec![m, n],
            req,
            Op::BatchNorm { a, gamma, beta, mean, inv_std, batch_stats },
        )
    }

    /// Dropout with an explicit Bernoulli mask and inverted scaling. Identity
    /// in `Infer` mode.
    pub fn dropout(&mut self, a: Var, rate: f64, rng: &mut Rng) -> Var {
        assert!((0.0..1.0).contains(&rate), "dropout: rate must be in [0, 1), got {}", rate);
        if self.mode == Mode::Infer || rate == 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> =
            (0..self.values(a).len()).map(|_| if rng.uniform() < keep { 1.0 / keep } else { 0.0 }).collect();
        let values = zip_map(self.values(a), &mask, |x, m| x * m);
        let shape = self.shape(a).to_vec();
        let req = self.requires(a);
        self.out(values, shape, req, Op::Dropout { a, mask })
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar loss. Gradients land on the leaf
    /// tensors that require them; intermediates live in per-call scratch so
    /// a second backward without a reset adds another full contribution.
    pub fn backward(&mut self, loss: Var) {
        let t = &self.nodes[loss.0].tensor;
        assert_eq!(t.numel(), 1, "backward: loss must be scalar, got shape {:?}", t.shape);
        let mut local: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(vec![1.0]);
        let mut sink: Vec<(Var, Vec<f64>)> = Vec::new();
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tensor.requires_grad {
                continue;
            }
            let Some(grad_out) = local[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.accum(Var(i), grad_out);
                continue;
            }
            sink.clear();
            self.backward_node(i, &grad_out, &mut sink);
            for (v, g) in sink.drain(..) {
                match &mut local[v.0] {
                    Some(existing) => {
                        for (e, x) in existing.iter_mut().zip(&g) {
                            *e += x;
                        }
                    }
                    slot => *slot = Some(g),
                }
            }
        }
    }

    fn accum(&mut self, v: Var, g: Vec<f64>) {
        let t = &mut self.nodes[v.0].tensor;
        match &mut t.grad {
            Some(existing) => {
                for (e, x) in existing.iter_mut().zip(&g) {
                    *e += x;
                }
            }
            None => t.grad = Some(g),
        }
    }

    fn backward_node(&self, i: usize, dy: &[f64], sink: &mut Vec<(Var, Vec<f64>)>) {
        let mut emit = |tape: &Tape, v: Var, g: Vec<f64>| {
            if tape.requires(v) {
                sink.push((v, g));
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.requires(*a) {
                    // dA = dY · Bᵀ
                    let bv = self.values(*b);
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let d = dy[i * n + j];
                            if d != 0.0 {
                                for p in 0..k {
                                    da[i * k + p] += d * bv[p * n + j];
                                }
                            }
                        }
                    }
                    emit(self, *a, da);
                }
                if self.requires(*b) {
                    // dB = Aᵀ · dY
                    let av = self.values(*a);
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x != 0.0 {
                                for j in 0..n {
                                    db[p * n + j] += x * dy[i * n + j];
                                }
                            }
                        }
                    }
                    emit(self, *b, db);
                }
            }
            Op::Transpose { a } => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                let mut da = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = dy[j * m + i];
                    }
                }
                emit(self, *a, da);
            }
            Op::Add { a, b } => {
                emit(self, *a, dy.to_vec());
                emit(self, *b, dy.to_vec());
            }
            Op::Sub { a, b } => {
                emit(self, *a, dy.to_vec());
                emit(self, *b, dy.iter().map(|&d| -d).collect());
            }
            Op::Mul { a, b } => {
                if self.requires(*a) {
                    emit(self, *a, zip_map(dy, self.values(*b), |d, y| d * y));
                }
                if self.requires(*b) {
                    emit(self, *b, zip_map(dy, self.values(*a), |d, x| d * x));
                }
            }
            Op::AddBias { a, bias } => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                emit(self, *a, dy.to_vec());
                if self.requires(*bias) {
                    let mut db = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += dy[i * n + j];
                        }
                    }
                    emit(self, *bias, db);
                }
            }
            Op::Scale { a, c } => {
                emit(self, *a, dy.iter().map(|&d| d * c).collect());
            }
            Op::AddScalar { a } => {
                emit(self, *a, dy.to_vec());
            }
            Op::Sigmoid { a } => {
                let y = &self.nodes[i].tensor.values;
                emit(self, *a, zip_map(dy, y, |d, s| d * s * (1.0 - s)));
            }
            Op::Tanh { a } => {
                let y = &self.nodes[i].tensor.values;
                emit(self, *a, zip_map(dy, y, |d, t| d * (1.0 - t * t)));
            }
            Op::Relu { a } => {
                emit(self, *a, zip_map(dy, self.values(*a), |d, x| if x > 0.0 { d } else { 0.0 }));
            }
            Op::Exp { a } => {
                let y = &self.nodes[i].tensor.values;
                emit(self, *a, zip_map(dy, y, |d, e| d * e));
            }
            Op::Log { a } => {
                emit(self, *a, zip_map(dy, self.values(*a), |d, x| {
                    if x >= LOG_FLOOR {
                        d / x
                    } else {
                        0.0
                    }
                }));
            }
            Op::SoftmaxLast { a } => {
                let y = &self.nodes[i].tensor.values;
                let shape = &self.nodes[i].tensor.shape;
                let width = *shape.last().unwrap();
                let mut da = vec![0.0; y.len()];
                for row in 0..y.len() / width {
                    let ys = &y[row * width..(row + 1) * width];
                    let ds = &dy[row * width..(row + 1) * width];
                    let dot: f64 = ys.iter().zip(ds).map(|(&v, &d)| v * d).sum();
                    for j in 0..width {
                        da[row * width + j] = ys[j] * (ds[j] - dot);
                    }
                }
                emit(self, *a, da);
            }
            Op::SumAll { a } => {
                let n = self.values(*a).len();
                emit(self, *a, vec![dy[0]; n]);
            }
            Op::MeanAll { a } => {
                let n = self.values(*a).len();
                emit(self, *a, vec![dy[0] / n as f64; n]);
            }
            Op::SliceRows { a, start } => {
                let (_, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                let len = self.nodes[i].tensor.shape[0];
                let mut da = vec![0.0; self.values(*a).len()];
                da[start * n..(start + len) * n].copy_from_slice(dy);
                emit(self, *a, da);
            }
            Op::SliceCols { a, start } => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                let len = self.nodes[i].tensor.shape[1];
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    da[r * n + start..r * n + start + len].copy_from_slice(&dy[r * len..(r + 1) * len]);
                }
                emit(self, *a, da);
            }
            Op::GatherCols { a, idx } => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                let w = idx.len();
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    for (j, &src) in idx.iter().enumerate() {
                        da[r * n + src] += dy[r * w + j];
                    }
                }
                emit(self, *a, da);
            }
            Op::ConcatCols { parts } => {
                let m = self.nodes[i].tensor.shape[0];
                let n = self.nodes[i].tensor.shape[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.requires(p) {
                        let mut dp = vec![0.0; m * w];
                        for r in 0..m {
                            dp[r * w..(r + 1) * w].copy_from_slice(&dy[r * n + offset..r * n + offset + w]);
                        }
                        emit(self, p, dp);
                    }
                    offset += w;
                }
            }
            Op::MaxScalar { a, c } => {
                emit(self, *a, zip_map(dy, self.values(*a), |d, x| if x > *c { d } else { 0.0 }));
            }
            Op::HuberNormSq { a, delta } => {
                let dd = *delta;
                emit(self, *a, zip_map(dy, self.values(*a), |d, s| {
                    if s <= dd * dd {
                        d / (2.0 * dd)
                    } else {
                        d / (2.0 * s.sqrt())
                    }
                }));
            }
            Op::LayerNorm { a, gamma, beta, mean, inv_std, .. } => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                let x = self.values(*a);
                let g = self.values(*gamma);
                if self.requires(*a) {
                    let mut da = vec![0.0; m * n];
                    for r in 0..m {
                        let is = inv_std[r];
                        let mu = mean[r];
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for j in 0..n {
                            let xhat = (x[r * n + j] - mu) * is;
                            let dxhat = dy[r * n + j] * g[j];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                        }
                        for j in 0..n {
                            let xhat = (x[r * n + j] - mu) * is;
                            let dxhat = dy[r * n + j] * g[j];
                            da[r * n + j] =
                                is / n as f64 * (n as f64 * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
                        }
                    }
                    emit(self, *a, da);
                }
                if self.requires(*gamma) {
                    let mut dg = vec![0.0; n];
                    for r in 0..m {
                        for j in 0..n {
                            let xhat = (x[r * n + j] - mean[r]) * inv_std[r];
                            dg[j] += dy[r * n + j] * xhat;
                        }
                    }
                    emit(self, *gamma, dg);
                }
                if self.requires(*beta) {
                    let mut db = vec![0.0; n];
                    for r in 0..m {
                        for j in 0..n {
                            db[j] += dy[r * n + j];
                        }
                    }
                    emit(self, *beta, db);
                }
            }
            Op::BatchNorm { a, gamma, beta, mean, inv_std, batch_stats, .. } => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                let x = self.values(*a);
                let g = self.values(*gamma);
                if self.requires(*a) {
                    let mut da = vec![0.0; m * n];
                    if *batch_stats {
                        for j in 0..n {
                            let is = inv_std[j];
                            let mu = mean[j];
                            let mut sum_dxhat = 0.0;
                            let mut sum_dxhat_xhat = 0.0;
                            for r in 0..m {
                                let xhat = (x[r * n + j] - mu) * is;
                                let dxhat = dy[r * n + j] * g[j];
                                sum_dxhat += dxhat;
                                sum_dxhat_xhat += dxhat * xhat;
                            }
                            for r in 0..m {
                                let xhat = (x[r * n + j] - mu) * is;
                                let dxhat = dy[r * n + j] * g[j];
                                da[r * n + j] =
                                    is / m as f64 * (m as f64 * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
                            }
                        }
                    } else {
                        for r in 0..m {
                            for j in 0..n {
                                da[r * n + j] = dy[r * n + j] * g[j] * inv_std[j];
                            }
                        }
                    }
                    emit(self, *a, da);
                }
                if self.requires(*gamma) {
                    let mut dg = vec![0.0; n];
                    for r in 0..m {
                        for j in 0..n {
                            let xhat = (x[r * n + j] - mean[j]) * inv_std[j];
                            dg[j] += dy[r * n + j] * xhat;
                        }
                    }
                    emit(self, *gamma, dg);
                }
                if self.requires(*beta) {
                    let mut db = vec![0.0; n];
                    for r in 0..m {
                        for j in 0..n {
                            db[j] += dy[r * n + j];
                        }
                    }
                    emit(self, *beta, db);
                }
            }
            Op::Dropout { a, mask } => {
                emit(self, *a, zip_map(dy, mask, |d, m| d * m));
            }
        }
    }
}

// ── raw kernels ──────────────────────────────────────────────────────

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn matmul_raw(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip != 0.0 {
                let brow = &b[p * n..(p + 1) * n];
                for j in 0..n {
                    crow[j] += aip * brow[j];
                }
            }
        }
    }
}

pub(crate) fn sigmoid_raw(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(x: &[f64], y: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = (xi - max).exp().max(1e-300);
        sum += *yi;
    }
    for yi in y.iter_mut() {
        *yi /= sum;
    }
}
