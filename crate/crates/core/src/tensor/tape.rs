use rand::Rng;

use super::ops::{self, ConvGeom};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct MatmulGeom {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a_stride: usize,
    b_stride: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul { a: Var, b: Var, geom: MatmulGeom },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, s: f64 },
    Relu { a: Var },
    Dropout { a: Var, mask: Vec<f64> },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { a: Var, axis: usize, start: usize },
    Reshape { a: Var },
    Permute { a: Var, axes: Vec<usize> },
    Flip { a: Var, axis: usize },
    SoftmaxRows { a: Var },
    MaskedFill { a: Var, keep: Vec<bool> },
    Conv1d { x: Var, w: Var, bias: Var, geom: ConvGeom },
    MaeLoss { pred: Var, target: Tensor },
    Sum { a: Var },
    Mean { a: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Define-by-run computation record.
///
/// Every op validates shapes, computes its value eagerly, checks the result
/// for NaN/±Inf, and appends a node. [`Tape::backward`] walks the nodes in
/// exact reverse recording order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    kink_hash: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            kink_hash: FNV_OFFSET,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Untracked input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, false)
    }

    /// Tracked leaf; gradients accumulate on it during [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a tracked leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Fingerprint of every piecewise branch taken so far: relu gates, abs
    /// signs, and any selection recorded through [`Tape::note_branches`].
    /// Two evaluations with equal fingerprints lie on the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        self.kink_hash
    }

    pub fn note_branches(&mut self, bits: impl IntoIterator<Item = bool>) {
        let mut h = self.kink_hash;
        for b in bits {
            h ^= u64::from(b) + 1;
            h = h.wrapping_mul(FNV_PRIME);
        }
        self.kink_hash = h;
    }

    fn push_node(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric {
                context: name.to_string(),
            });
        }
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_node(value, op, rg))
    }

    /// Batched matrix product over the last two axes. Leading (batch) axes
    /// must match, or one operand must be a plain matrix that is broadcast.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let err = || Error::shape("matmul", format!("{sa:?} x {sb:?}"));
        if sa.len() < 2 || sb.len() < 2 {
            return Err(err());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(err());
        }
        let ba = &sa[..sa.len() - 2];
        let bb = &sb[..sb.len() - 2];
        let batch_shape = if ba == bb || bb.is_empty() {
            ba.to_vec()
        } else if ba.is_empty() {
            bb.to_vec()
        } else {
            return Err(err());
        };
        let batch: usize = batch_shape.iter().product();
        let geom = MatmulGeom {
            batch,
            m,
            k,
            n,
            a_stride: if ba.is_empty() { 0 } else { m * k },
            b_stride: if bb.is_empty() { 0 } else { k * n },
        };
        let mut out = vec![0.0; batch * m * n];
        {
            let ad = self.value(a).data();
            let bd = self.value(b).data();
            for i in 0..batch {
                ops::gemm_nn(
                    &ad[i * geom.a_stride..i * geom.a_stride + m * k],
                    &bd[i * geom.b_stride..i * geom.b_stride + k * n],
                    &mut out[i * m * n..(i + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
        }
        let mut shape = batch_shape;
        shape.extend([m, n]);
        let value = Tensor::new(&shape, out)?;
        self.push("matmul", value, Op::Matmul { a, b, geom }, &[a, b])
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let r = self.shape(a).len();
        if r < 2 {
            return Err(Error::shape("transpose", format!("{:?}", self.shape(a))));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(a, &axes)
    }

    fn check_suffix(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::shape(op, format!("{sa:?} with {sb:?}")));
        }
        Ok(())
    }

    /// `a + b`, where `b`'s shape is a suffix of `a`'s (broadcast over the
    /// leading axes).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_suffix("add", a, b)?;
        let bd = self.value(b).data();
        let mut out = self.value(a).clone();
        for chunk in out.data_mut().chunks_mut(bd.len()) {
            for (o, v) in chunk.iter_mut().zip(bd) {
                *o += v;
            }
        }
        self.push("add", out, Op::Add { a, b }, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("sub", format!("{:?} - {:?}", self.shape(a), self.shape(b))));
        }
        let bd = self.value(b).data().to_vec();
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(&bd) {
            *o -= v;
        }
        self.push("sub", out, Op::Sub { a, b }, &[a, b])
    }

    /// Elementwise product with suffix broadcasting of `b`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_suffix("mul", a, b)?;
        let bd = self.value(b).data();
        let mut out = self.value(a).clone();
        for chunk in out.data_mut().chunks_mut(bd.len()) {
            for (o, v) in chunk.iter_mut().zip(bd) {
                *o *= v;
            }
        }
        self.push("mul", out, Op::Mul { a, b }, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        self.push("scale", out, Op::Scale { a, s }, &[a])
    }

    /// max(x, 0), with derivative 0 at x = 0.
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(0.0));
        let gates: Vec<bool> = self.value(a).data().iter().map(|&v| v > 0.0).collect();
        self.note_branches(gates);
        self.push("relu", out, Op::Relu { a }, &[a])
    }

    /// Inverted dropout: during training each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mut out = self.value(a).clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push("dropout", out, Op::Dropout { a, mask }, &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} for {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let ok = s.len() == base.len()
                && s.iter().enumerate().all(|(i, &d)| i == axis || d == base[i]);
            if !ok {
                return Err(Error::shape("concat", format!("{base:?} with {s:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = ops::split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = self.value(*p);
                let len = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(&shape, data)?;
        self.push("concat", value, Op::Concat { parts: parts.to_vec(), axis }, parts)
    }

    /// Sub-range `[start, start+len)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::shape("slice", format!("{start}..{} on axis {axis} of {s:?}", start + len)));
        }
        let (outer, n, inner) = ops::split_axis(&s, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let off = (o * n + start) * inner;
            data.extend_from_slice(&src[off..off + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let value = Tensor::new(&shape, data)?;
        self.push("slice", value, Op::Slice { a, axis, start }, &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        self.push("reshape", value, Op::Reshape { a }, &[a])
    }

    /// Output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let mut seen = vec![false; s.len()];
        let valid = axes.len() == s.len()
            && axes.iter().all(|&x| x < s.len() && !std::mem::replace(&mut seen[x], true));
        if !valid {
            return Err(Error::shape("permute", format!("axes {axes:?} for {s:?}")));
        }
        let (shape, data) = ops::permute(self.value(a).data(), &s, axes);
        let value = Tensor::new(&shape, data)?;
        self.push("permute", value, Op::Permute { a, axes: axes.to_vec() }, &[a])
    }

    /// Reverses index order along `axis`.
    pub fn flip(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() {
            return Err(Error::shape("flip", format!("axis {axis} of {s:?}")));
        }
        let (outer, n, inner) = ops::split_axis(&s, axis);
        let data = ops::flip(self.value(a).data(), outer, n, inner);
        let value = Tensor::new(&s, data)?;
        self.push("flip", value, Op::Flip { a, axis }, &[a])
    }

    /// Replaces entries whose `keep` flag is false with −∞.
    pub fn masked_fill(&mut self, a: Var, keep: Vec<bool>) -> Result<Var> {
        if keep.len() != self.value(a).len() {
            return Err(Error::shape(
                "masked_fill",
                format!("mask of {} for {:?}", keep.len(), self.shape(a)),
            ));
        }
        let mut out = self.value(a).clone();
        for (o, &k) in out.data_mut().iter_mut().zip(&keep) {
            if !k {
                *o = f64::NEG_INFINITY;
            }
        }
        if out.data().iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Numeric {
                context: "masked_fill".into(),
            });
        }
        let rg = self.requires_grad(a);
        Ok(self.push_node(out, Op::MaskedFill { a, keep }, rg))
    }

    /// Softmax over the last axis with max subtraction. −∞ entries map to
    /// exactly 0; a row that is entirely −∞ is an error.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let n = *s.last().ok_or_else(|| Error::shape("softmax_rows", "scalar input"))?;
        let src = self.value(a).data();
        if src.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Numeric {
                context: "softmax_rows input".into(),
            });
        }
        let mut data = vec![0.0; src.len()];
        for (r, (row, out)) in src.chunks(n).zip(data.chunks_mut(n)).enumerate() {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return Err(Error::DegenerateRow { row: r });
            }
            let mut z = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - m).exp();
                z += *o;
            }
            for o in out.iter_mut() {
                *o /= z;
            }
        }
        let value = Tensor::new(&s, data)?;
        self.push("softmax_rows", value, Op::SoftmaxRows { a }, &[a])
    }

    /// Dilated 1-D convolution of `x: [B, C_in, T]` with `w: [C_out, C_in, K]`
    /// and `bias: [C_out]`. With `causal_pad` the time axis is left-padded by
    /// `(K−1)·dilation` zeros so the output keeps length `T` and step `t`
    /// reads only inputs at steps `≤ t`; otherwise the convolution is "valid".
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Var, dilation: usize, causal_pad: bool) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let sbias = self.shape(bias).to_vec();
        let err = || Error::shape("conv1d", format!("x {sx:?}, w {sw:?}, bias {sbias:?}, dilation {dilation}"));
        if sx.len() != 3 || sw.len() != 3 || sbias != [sw[0]] || sw[1] != sx[1] || dilation == 0 {
            return Err(err());
        }
        let (kernel, t_in) = (sw[2], sx[2]);
        let reach = (kernel - 1) * dilation;
        let (pad, t_out) = if causal_pad {
            if reach >= t_in {
                log::warn!("conv1d: receptive reach {reach} >= sequence length {t_in}; some taps read only padding");
            }
            (reach, t_in)
        } else {
            if reach >= t_in {
                return Err(err());
            }
            (0, t_in - reach)
        };
        let geom = ConvGeom {
            batch: sx[0],
            c_in: sx[1],
            c_out: sw[0],
            kernel,
            dilation,
            t_in,
            t_out,
            pad,
        };
        let y = ops::conv1d_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(bias).data(),
            &geom,
        );
        let value = Tensor::new(&[geom.batch, geom.c_out, t_out], y)?;
        self.push("conv1d", value, Op::Conv1d { x, w, bias, geom }, &[x, w, bias])
    }

    /// Mean absolute error against a constant target; the subgradient at
    /// equality is 0.
    pub fn mae_loss(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        if self.shape(pred) != target.shape() {
            return Err(Error::shape(
                "mae_loss",
                format!("{:?} vs {:?}", self.shape(pred), target.shape()),
            ));
        }
        let p = self.value(pred).data();
        let n = p.len() as f64;
        let total: f64 = p.iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum();
        let signs: Vec<bool> = p.iter().zip(target.data()).map(|(a, b)| a > b).collect();
        self.note_branches(signs);
        let value = Tensor::scalar(total / n);
        self.push(
            "mae_loss",
            value,
            Op::MaeLoss {
                pred,
                target: target.clone(),
            },
            &[pred],
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push("sum", value, Op::Sum { a }, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let value = Tensor::scalar(v.sum() / v.len() as f64);
        self.push("mean", value, Op::Mean { a }, &[a])
    }

    /// Reverse pass from a scalar `loss`. Gradients accumulate on tracked
    /// leaves; call [`Tape::zero_grad`] to reset them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => {
                        for (a, v) in acc.data_mut().iter_mut().zip(&g) {
                            *a += v;
                        }
                    }
                    None => node.grad = Some(Tensor::new(node.value.shape(), g)?),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let tracked = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !tracked(v) {
                return;
            }
            let len = nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Matmul { a, b, geom } => {
                let MatmulGeom { batch, m, k, n, a_stride, b_stride } = *geom;
                let ad = nodes[a.0].value.data();
                let bd = nodes[b.0].value.data();
                acc(*a, &mut |ga| {
                    for bi in 0..batch {
                        ops::gemm_nt(
                            &g[bi * m * n..(bi + 1) * m * n],
                            &bd[bi * b_stride..bi * b_stride + k * n],
                            &mut ga[bi * a_stride..bi * a_stride + m * k],
                            m,
                            n,
                            k,
                        );
                    }
                });
                acc(*b, &mut |gb| {
                    for bi in 0..batch {
                        ops::gemm_tn(
                            &ad[bi * a_stride..bi * a_stride + m * k],
                            &g[bi * m * n..(bi + 1) * m * n],
                            &mut gb[bi * b_stride..bi * b_stride + k * n],
                            k,
                            m,
                            n,
                        );
                    }
                });
            }
            Op::Add { a, b } => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| {
                    for chunk in g.chunks(gb.len()) {
                        add_into(gb, chunk);
                    }
                });
            }
            Op::Sub { a, b } => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| {
                    for (x, v) in gb.iter_mut().zip(g) {
                        *x -= v;
                    }
                });
            }
            Op::Mul { a, b } => {
                let ad = nodes[a.0].value.data();
                let bd = nodes[b.0].value.data();
                acc(*a, &mut |ga| {
                    for (j, (x, v)) in ga.iter_mut().zip(g).enumerate() {
                        *x += v * bd[j % bd.len()];
                    }
                });
                acc(*b, &mut |gb| {
                    let n = gb.len();
                    for (j, (v, av)) in g.iter().zip(ad).enumerate() {
                        gb[j % n] += v * av;
                    }
                });
            }
            Op::Scale { a, s } => acc(*a, &mut |ga| {
                for (x, v) in ga.iter_mut().zip(g) {
                    *x += s * v;
                }
            }),
            Op::Relu { a } => {
                let ad = nodes[a.0].value.data();
                acc(*a, &mut |ga| {
                    for ((x, v), &z) in ga.iter_mut().zip(g).zip(ad) {
                        if z > 0.0 {
                            *x += v;
                        }
                    }
                });
            }
            Op::Dropout { a, mask } => acc(*a, &mut |ga| {
                for ((x, v), m) in ga.iter_mut().zip(g).zip(mask) {
                    *x += v * m;
                }
            }),
            Op::Concat { parts, axis } => {
                let s = nodes[i].value.shape();
                let (outer, total, inner) = ops::split_axis(s, *axis);
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.shape()[*axis];
                    acc(*p, &mut |gp| {
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            add_into(&mut gp[o * len * inner..(o + 1) * len * inner], &g[src..src + len * inner]);
                        }
                    });
                    offset += len;
                }
            }
            Op::Slice { a, axis, start } => {
                let s_in = nodes[a.0].value.shape();
                let (outer, n, inner) = ops::split_axis(s_in, *axis);
                let len = nodes[i].value.shape()[*axis];
                acc(*a, &mut |ga| {
                    for o in 0..outer {
                        let dst = (o * n + start) * inner;
                        add_into(&mut ga[dst..dst + len * inner], &g[o * len * inner..(o + 1) * len * inner]);
                    }
                });
            }
            Op::Reshape { a } => acc(*a, &mut |ga| add_into(ga, g)),
            Op::Permute { a, axes } => {
                let (_, back) = ops::permute(g, nodes[i].value.shape(), &ops::inverse_axes(axes));
                acc(*a, &mut |ga| add_into(ga, &back));
            }
            Op::Flip { a, axis } => {
                let (outer, n, inner) = ops::split_axis(nodes[i].value.shape(), *axis);
                let back = ops::flip(g, outer, n, inner);
                acc(*a, &mut |ga| add_into(ga, &back));
            }
            Op::MaskedFill { a, keep } => acc(*a, &mut |ga| {
                for ((x, v), &k) in ga.iter_mut().zip(g).zip(keep) {
                    if k {
                        *x += v;
                    }
                }
            }),
            Op::SoftmaxRows { a } => {
                let y = nodes[i].value.data();
                let n = *nodes[i].value.shape().last().unwrap_or(&1);
                acc(*a, &mut |ga| {
                    for ((gr, yr), xr) in g.chunks(n).zip(y.chunks(n)).zip(ga.chunks_mut(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((x, gv), yv) in xr.iter_mut().zip(gr).zip(yr) {
                            *x += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::Conv1d { x, w, bias, geom } => {
                let xd = nodes[x.0].value.data();
                let wd = nodes[w.0].value.data();
                acc(*x, &mut |gx| ops::conv1d_backward(xd, wd, g, geom, Some(gx), None, None));
                acc(*w, &mut |gw| ops::conv1d_backward(xd, wd, g, geom, None, Some(gw), None));
                acc(*bias, &mut |gb| ops::conv1d_backward(xd, wd, g, geom, None, None, Some(gb)));
            }
            Op::MaeLoss { pred, target } => {
                let p = nodes[pred.0].value.data();
                let scale = g[0] / p.len() as f64;
                acc(*pred, &mut |gp| {
                    for ((x, pv), tv) in gp.iter_mut().zip(p).zip(target.data()) {
                        if pv > tv {
                            *x += scale;
                        } else if pv < tv {
                            *x -= scale;
                        }
                    }
                });
            }
            Op::Sum { a } => acc(*a, &mut |ga| {
                for x in ga.iter_mut() {
                    *x += g[0];
                }
            }),
            Op::Mean { a } => acc(*a, &mut |ga| {
                let s = g[0] / ga.len() as f64;
                for x in ga.iter_mut() {
                    *x += s;
                }
            }),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
