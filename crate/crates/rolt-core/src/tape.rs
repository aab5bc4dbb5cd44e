//! Reverse-mode autodiff on a Wengert tape.
//!
//! The op set is closed: matmul (plain and B-transposed), add (same-shape and
//! row-broadcast), elementwise mul, scale/add-const, concat/slice over rows
//! and columns, reshape, layer_norm, softmax_rows, activations, masked
//! dropout, sum, elementwise min and clamp. The policy network is a static
//! composition of these, so nothing more general is needed.
//!
//! Parameters live outside the tape in a [`ParamStore`]; registering one as a
//! leaf stores only its id, never a copy. A tape is single-writer and confined
//! to one thread; parameter snapshots may be shared read-only across any
//! number of concurrent forward passes.

use crate::tensor::{matmul_into, matmul_ta_accum, matmul_tb_into, BitMask, Tensor};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Index of a parameter within a [`ParamStore`].
pub type ParamId = usize;

/// Named parameter tensors in a fixed registration order. The order defines
/// the flat serialization manifest used by checkpoints.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.entries.iter().any(|(n, _)| n == name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name.to_string(), value));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id].1
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id].0
    }

    /// (name, shape) pairs in registration order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.entries
            .iter()
            .map(|(n, t)| (n.clone(), t.shape.clone()))
            .collect()
    }

    pub fn total_elems(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// All parameter values flattened in manifest order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_elems());
        for (_, t) in &self.entries {
            out.extend_from_slice(&t.data);
        }
        out
    }

    /// Overwrite all values from a flat buffer in manifest order.
    pub fn load_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.total_elems(), "flat parameter size mismatch");
        let mut off = 0;
        for (_, t) in &mut self.entries {
            let n = t.numel();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
}

/// Per-parameter gradient accumulator aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GradBuffer {
    pub grads: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn zeros_like(params: &ParamStore) -> Self {
        GradBuffer {
            grads: params
                .entries
                .iter()
                .map(|(_, t)| vec![0.0; t.numel()])
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn add_from(&mut self, other: &GradBuffer) {
        for (a, b) in self.grads.iter_mut().zip(other.grads.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in &mut self.grads {
            for x in g.iter_mut() {
                *x *= c;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Scale gradients so the global norm does not exceed `max_norm`.
    /// Returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Elu,
    Gelu,
    Exp,
}

fn act_forward(kind: Act, x: f64) -> f64 {
    match kind {
        Act::Elu => {
            if x > 0.0 {
                x
            } else {
                x.exp() - 1.0
            }
        }
        Act::Gelu => {
            // tanh approximation; the backward below differentiates this
            // exact expression, so gradient checks see a consistent function.
            const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
            0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
        }
        Act::Exp => x.exp(),
    }
}

fn act_backward(kind: Act, x: f64, y: f64) -> f64 {
    match kind {
        Act::Elu => {
            if x > 0.0 {
                1.0
            } else {
                y + 1.0 // e^x
            }
        }
        Act::Gelu => {
            const C: f64 = 0.797_884_560_802_865_4;
            let u = C * (x + 0.044715 * x * x * x);
            let t = u.tanh();
            0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
        }
        Act::Exp => y,
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    ParamLeaf(ParamId),
    Matmul { a: Var, b: Var },
    MatmulTb { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddRow { a: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, c: f64 },
    AddConst { a: Var, c: f64 },
    ConcatRows { parts: Vec<Var> },
    ConcatCols { parts: Vec<Var> },
    SliceRows { a: Var, start: usize },
    SliceCols { a: Var, start: usize },
    Reshape { a: Var },
    LayerNorm { a: Var, gain: Var, bias: Var, eps: f64 },
    SoftmaxRows { a: Var },
    Activation { a: Var, kind: Act },
    MaskedDropout { a: Var, mask: BitMask, p: f64 },
    Sum { a: Var },
    MinElem { a: Var, b: Var },
    Clamp { a: Var, lo: f64, hi: f64 },
}

enum NodeData {
    Owned(Vec<f64>),
    Param(ParamId),
}

struct Node {
    rows: usize,
    cols: usize,
    data: NodeData,
    op: Op,
}

/// The computation tape. Record order is the topological order of the graph;
/// the backward sweep visits each node exactly once, in reverse.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, nodes: Vec::with_capacity(256) }
    }

    /// Drop all recorded nodes, keeping the allocation for reuse.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].data {
            NodeData::Owned(d) => d,
            NodeData::Param(id) => &self.params.value(*id).data,
        }
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(data.len(), rows * cols);
        self.nodes.push(Node { rows, cols, data: NodeData::Owned(data), op });
        Var(self.nodes.len() - 1)
    }

    /// Register a constant input (no gradient reported).
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(
            data.len(),
            rows * cols,
            "constant data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        self.push(rows, cols, data, Op::Leaf)
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.constant(1, n, data)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(1, 1, vec![v])
    }

    /// Register a parameter leaf. Data is read from the store, not copied.
    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.params.value(id);
        let (rows, cols) = (t.rows(), t.cols());
        self.nodes.push(Node { rows, cols, data: NodeData::Param(id), op: Op::ParamLeaf(id) });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        assert_eq!(
            k, k2,
            "matmul shape mismatch: {}x{} vs {}x{}",
            m, k, k2, n
        );
        let mut out = vec![0.0; m * n];
        matmul_into(&mut out, self.data(a), self.data(b), m, k, n);
        self.push(m, n, out, Op::Matmul { a, b })
    }

    /// a · bᵀ with b given as n×k.
    pub fn matmul_tb(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        assert_eq!(
            k, k2,
            "matmul_tb shape mismatch: {}x{} vs ({}x{})ᵀ",
            m, k, n, k2
        );
        let mut out = vec![0.0; m * n];
        matmul_tb_into(&mut out, self.data(a), self.data(b), m, k, n);
        self.push(m, n, out, Op::MatmulTb { a, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.dims(a);
        assert_eq!(
            (m, n),
            self.dims(b),
            "add shape mismatch: {:?} vs {:?}",
            self.dims(a),
            self.dims(b)
        );
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b).iter())
            .map(|(x, y)| x + y)
            .collect();
        self.push(m, n, out, Op::Add { a, b })
    }

    /// Add a 1×n bias row to every row of a.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (m, n) = self.dims(a);
        let (bm, bn) = self.dims(bias);
        assert_eq!(
            (bm, bn),
            (1, n),
            "add_row bias must be 1x{}, got {}x{}",
            n, bm, bn
        );
        let bd = self.data(bias);
        let mut out = Vec::with_capacity(m * n);
        for row in self.data(a).chunks(n) {
            for (x, b) in row.iter().zip(bd.iter()) {
                out.push(x + b);
            }
        }
        self.push(m, n, out, Op::AddRow { a, bias })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.dims(a);
        assert_eq!(
            (m, n),
            self.dims(b),
            "mul shape mismatch: {:?} vs {:?}",
            self.dims(a),
            self.dims(b)
        );
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b).iter())
            .map(|(x, y)| x * y)
            .collect();
        self.push(m, n, out, Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let (m, n) = self.dims(a);
        let out: Vec<f64> = self.data(a).iter().map(|x| x * c).collect();
        self.push(m, n, out, Op::Scale { a, c })
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let (m, n) = self.dims(a);
        let out: Vec<f64> = self.data(a).iter().map(|x| x + c).collect();
        self.push(m, n, out, Op::AddConst { a, c })
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows needs at least one part");
        let cols = self.dims(parts[0]).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = self.dims(p);
            assert_eq!(pc, cols, "concat_rows column mismatch: {} vs {}", pc, cols);
            rows += pr;
            out.extend_from_slice(self.data(p));
        }
        self.push(rows, cols, out, Op::ConcatRows { parts: parts.to_vec() })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let rows = self.dims(parts[0]).0;
        let mut cols = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            assert_eq!(pr, rows, "concat_cols row mismatch: {} vs {}", pr, rows);
            cols += pc;
        }
        let mut out = vec![0.0; rows * cols];
        let mut off = 0;
        for &p in parts {
            let (_, pc) = self.dims(p);
            let pd = self.data(p);
            for r in 0..rows {
                out[r * cols + off..r * cols + off + pc]
                    .copy_from_slice(&pd[r * pc..(r + 1) * pc]);
            }
            off += pc;
        }
        self.push(rows, cols, out, Op::ConcatCols { parts: parts.to_vec() })
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.dims(a);
        assert!(
            start + len <= m,
            "slice_rows {}..{} out of {} rows",
            start,
            start + len,
            m
        );
        let out = self.data(a)[start * n..(start + len) * n].to_vec();
        self.push(len, n, out, Op::SliceRows { a, start })
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.dims(a);
        assert!(
            start + len <= n,
            "slice_cols {}..{} out of {} cols",
            start,
            start + len,
            n
        );
        let ad = self.data(a);
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&ad[r * n + start..r * n + start + len]);
        }
        self.push(m, len, out, Op::SliceCols { a, start })
    }

    /// Reinterpret as rows×cols; element order unchanged.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let (m, n) = self.dims(a);
        assert_eq!(
            m * n,
            rows * cols,
            "reshape count mismatch: {}x{} -> {}x{}",
            m, n, rows, cols
        );
        let out = self.data(a).to_vec();
        self.push(rows, cols, out, Op::Reshape { a })
    }

    /// Per-row normalization over the last axis, then affine with gain/bias
    /// (both 1×n).
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var, eps: f64) -> Var {
        assert!(eps > 0.0, "layer_norm eps must be positive, got {eps}");
        let (m, n) = self.dims(a);
        assert_eq!(self.dims(gain), (1, n), "layer_norm gain must be 1x{n}");
        assert_eq!(self.dims(bias), (1, n), "layer_norm bias must be 1x{n}");
        let g = self.data(gain);
        let b = self.data(bias);
        let mut out = Vec::with_capacity(m * n);
        for row in self.data(a).chunks(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (j, x) in row.iter().enumerate() {
                out.push((x - mean) * inv * g[j] + b[j]);
            }
        }
        self.push(m, n, out, Op::LayerNorm { a, gain, bias, eps })
    }

    /// Row-wise softmax, stabilized by subtracting the row max.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        assert!(n >= 1, "softmax_rows on empty rows");
        let mut out = Vec::with_capacity(m * n);
        for row in self.data(a).chunks(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(max.is_finite(), "softmax_rows on non-finite input");
            let mut sum = 0.0;
            let base = out.len();
            for x in row {
                let e = (x - max).exp();
                out.push(e);
                sum += e;
            }
            for v in &mut out[base..] {
                *v /= sum;
            }
        }
        self.push(m, n, out, Op::SoftmaxRows { a })
    }

    pub fn activation(&mut self, a: Var, kind: Act) -> Var {
        let (m, n) = self.dims(a);
        let out: Vec<f64> = self.data(a).iter().map(|&x| act_forward(kind, x)).collect();
        self.push(m, n, out, Op::Activation { a, kind })
    }

    /// Inverted dropout with an externally supplied mask: out = a ⊙ mask / (1−p).
    /// The mask is never sampled here; supplying it is what makes the
    /// rollout/update consistency testable.
    pub fn masked_dropout(&mut self, a: Var, mask: &BitMask, p: f64) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout rate p={p} outside [0,1)");
        let (m, n) = self.dims(a);
        assert_eq!(
            mask.len(),
            m * n,
            "dropout mask length {} does not match tensor {}x{}",
            mask.len(),
            m,
            n
        );
        let inv = 1.0 / (1.0 - p);
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| if mask.get(i) { x * inv } else { 0.0 })
            .collect();
        self.push(m, n, out, Op::MaskedDropout { a, mask: mask.clone(), p })
    }

    /// Sum of all elements, as a 1×1 scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.data(a).iter().sum();
        self.push(1, 1, vec![s], Op::Sum { a })
    }

    /// Elementwise minimum; gradient follows the selected branch (ties go to a).
    pub fn min_elem(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.dims(a);
        assert_eq!((m, n), self.dims(b), "min_elem shape mismatch");
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b).iter())
            .map(|(x, y)| x.min(*y))
            .collect();
        self.push(m, n, out, Op::MinElem { a, b })
    }

    /// Clamp to [lo, hi]; gradient passes where lo ≤ x ≤ hi.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        assert!(lo <= hi, "clamp bounds inverted: {lo} > {hi}");
        let (m, n) = self.dims(a);
        let out: Vec<f64> = self.data(a).iter().map(|x| x.clamp(lo, hi)).collect();
        self.push(m, n, out, Op::Clamp { a, lo, hi })
    }

    /// Convenience: mean over rows as matmul with a constant 1/m row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (m, _) = self.dims(a);
        let w = self.constant(1, m, vec![1.0 / m as f64; m]);
        self.matmul(w, a)
    }

    /// Reverse sweep from a scalar loss; parameter gradients accumulate into
    /// `out`. Each node is visited exactly once.
    pub fn backward(&mut self, loss: Var, out: &mut GradBuffer) {
        let (m, n) = self.dims(loss);
        assert_eq!((m, n), (1, 1), "backward requires a scalar loss, got {m}x{n}");
        assert_eq!(out.grads.len(), self.params.len(), "grad buffer misaligned");

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            // Helper to accumulate into an input's gradient.
            macro_rules! accum {
                ($var:expr, $contrib:expr) => {{
                    let v: Var = $var;
                    let (r, c) = self.dims(v);
                    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; r * c]);
                    let contrib: &[f64] = $contrib;
                    debug_assert_eq!(slot.len(), contrib.len());
                    for (s, x) in slot.iter_mut().zip(contrib.iter()) {
                        *s += x;
                    }
                }};
            }

            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::ParamLeaf(id) => {
                    let slot = &mut out.grads[id];
                    debug_assert_eq!(slot.len(), g.len());
                    for (s, x) in slot.iter_mut().zip(g.iter()) {
                        *s += x;
                    }
                }
                Op::Matmul { a, b } => {
                    let (m, k) = self.dims(a);
                    let (_, n) = self.dims(b);
                    let mut da = vec![0.0; m * k];
                    matmul_tb_into(&mut da, &g, self.data(b), m, n, k);
                    accum!(a, &da);
                    let mut db = vec![0.0; k * n];
                    matmul_ta_accum(&mut db, self.data(a), &g, m, k, n);
                    accum!(b, &db);
                }
                Op::MatmulTb { a, b } => {
                    // out = a · bᵀ, a: m×k, b: n×k, g: m×n
                    let (m, k) = self.dims(a);
                    let (n, _) = self.dims(b);
                    let mut da = vec![0.0; m * k];
                    matmul_into(&mut da, &g, self.data(b), m, n, k);
                    accum!(a, &da);
                    let mut db = vec![0.0; n * k];
                    matmul_ta_accum(&mut db, &g, self.data(a), m, n, k);
                    accum!(b, &db);
                }
                Op::Add { a, b } => {
                    accum!(a, &g);
                    accum!(b, &g);
                }
                Op::AddRow { a, bias } => {
                    accum!(a, &g);
                    let (_, n) = self.dims(a);
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        for (d, x) in db.iter_mut().zip(row.iter()) {
                            *d += x;
                        }
                    }
                    accum!(bias, &db);
                }
                Op::Mul { a, b } => {
                    let da: Vec<f64> = g.iter().zip(self.data(b).iter()).map(|(x, y)| x * y).collect();
                    accum!(a, &da);
                    let db: Vec<f64> = g.iter().zip(self.data(a).iter()).map(|(x, y)| x * y).collect();
                    accum!(b, &db);
                }
                Op::Scale { a, c } => {
                    let da: Vec<f64> = g.iter().map(|x| x * c).collect();
                    accum!(a, &da);
                }
                Op::AddConst { a, c } => {
                    let _ = c;
                    accum!(a, &g);
                }
                Op::ConcatRows { parts } => {
                    let mut off = 0;
                    for p in parts {
                        let (pr, pc) = self.dims(p);
                        accum!(p, &g[off..off + pr * pc]);
                        off += pr * pc;
                    }
                }
                Op::ConcatCols { parts } => {
                    let (rows, cols) = (self.nodes[i].rows, self.nodes[i].cols);
                    let mut off = 0;
                    for p in parts {
                        let (_, pc) = self.dims(p);
                        let mut dp = vec![0.0; rows * pc];
                        for r in 0..rows {
                            dp[r * pc..(r + 1) * pc]
                                .copy_from_slice(&g[r * cols + off..r * cols + off + pc]);
                        }
                        accum!(p, &dp);
                        off += pc;
                    }
                }
                Op::SliceRows { a, start } => {
                    let (m, n) = self.dims(a);
                    let mut da = vec![0.0; m * n];
                    da[start * n..start * n + g.len()].copy_from_slice(&g);
                    accum!(a, &da);
                }
                Op::SliceCols { a, start } => {
                    let (m, n) = self.dims(a);
                    let len = self.nodes[i].cols;
                    let mut da = vec![0.0; m * n];
                    for r in 0..m {
                        da[r * n + start..r * n + start + len]
                            .copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    accum!(a, &da);
                }
                Op::Reshape { a } => {
                    accum!(a, &g);
                }
                Op::LayerNorm { a, gain, bias, eps } => {
                    let (m, n) = self.dims(a);
                    let ad = self.data(a);
                    let gd = self.data(gain);
                    let mut da = vec![0.0; m * n];
                    let mut dgain = vec![0.0; n];
                    let mut dbias = vec![0.0; n];
                    for r in 0..m {
                        let row = &ad[r * n..(r + 1) * n];
                        let grow = &g[r * n..(r + 1) * n];
                        let mean = row.iter().sum::<f64>() / n as f64;
                        let var =
                            row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        // xhat, dxhat, and the two row means of the fused formula
                        let mut mean_dxhat = 0.0;
                        let mut mean_dxhat_xhat = 0.0;
                        let mut xhat = vec![0.0; n];
                        let mut dxhat = vec![0.0; n];
                        for j in 0..n {
                            xhat[j] = (row[j] - mean) * inv;
                            dxhat[j] = grow[j] * gd[j];
                            mean_dxhat += dxhat[j];
                            mean_dxhat_xhat += dxhat[j] * xhat[j];
                            dgain[j] += grow[j] * xhat[j];
                            dbias[j] += grow[j];
                        }
                        mean_dxhat /= n as f64;
                        mean_dxhat_xhat /= n as f64;
                        for j in 0..n {
                            da[r * n + j] =
                                inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                        }
                    }
                    accum!(a, &da);
                    accum!(gain, &dgain);
                    accum!(bias, &dbias);
                }
                Op::SoftmaxRows { a } => {
                    let (m, n) = self.dims(a);
                    let yd = match &self.nodes[i].data {
                        NodeData::Owned(d) => d.clone(),
                        NodeData::Param(_) => unreachable!("softmax output is never a leaf"),
                    };
                    let mut da = vec![0.0; m * n];
                    for r in 0..m {
                        let y = &yd[r * n..(r + 1) * n];
                        let grow = &g[r * n..(r + 1) * n];
                        let dot: f64 = y.iter().zip(grow.iter()).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            da[r * n + j] = y[j] * (grow[j] - dot);
                        }
                    }
                    accum!(a, &da);
                }
                Op::Activation { a, kind } => {
                    let ad = self.data(a);
                    let yd = match &self.nodes[i].data {
                        NodeData::Owned(d) => d,
                        NodeData::Param(_) => unreachable!(),
                    };
                    let da: Vec<f64> = g
                        .iter()
                        .zip(ad.iter().zip(yd.iter()))
                        .map(|(gv, (&x, &y))| gv * act_backward(kind, x, y))
                        .collect();
                    accum!(a, &da);
                }
                Op::MaskedDropout { a, mask, p } => {
                    let inv = 1.0 / (1.0 - p);
                    let da: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(j, gv)| if mask.get(j) { gv * inv } else { 0.0 })
                        .collect();
                    accum!(a, &da);
                }
                Op::Sum { a } => {
                    let (m, n) = self.dims(a);
                    let da = vec![g[0]; m * n];
                    accum!(a, &da);
                }
                Op::MinElem { a, b } => {
                    let ad = self.data(a);
                    let bd = self.data(b);
                    let mut da = vec![0.0; ad.len()];
                    let mut db = vec![0.0; bd.len()];
                    for j in 0..ad.len() {
                        if ad[j] <= bd[j] {
                            da[j] = g[j];
                        } else {
                            db[j] = g[j];
                        }
                    }
                    accum!(a, &da);
                    accum!(b, &db);
                }
                Op::Clamp { a, lo, hi } => {
                    let ad = self.data(a);
                    let da: Vec<f64> = g
                        .iter()
                        .zip(ad.iter())
                        .map(|(gv, &x)| if (lo..=hi).contains(&x) { *gv } else { 0.0 })
                        .collect();
                    accum!(a, &da);
                }
            }
        }
    }
}
