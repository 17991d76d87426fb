//! Graph sparse attention over the joint node axis.
//!
//! Per sample, node features `X: [N, D_in]` are projected to queries, keys and
//! values; `A = QKᵀ/√D_h` scores every node pair. The local branch softmaxes
//! `A` restricted to graph neighbours (the block-diagonal joint graph keeps it
//! within one modality) and runs a two-layer GCN with those weights. The
//! global branch keeps the Top-U scores of each row, softmaxes them and
//! aggregates values, which is the only spatial path between modalities.

use serde::{Deserialize, Serialize};

use crate::data::{Adjacency, MultimodalGraph};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// How the joint graph combines with the attention scores in the local
/// branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphAttentionVariant {
    /// Softmax over graph neighbours only (non-edges set to −∞).
    #[default]
    MaskedSoftmax,
    /// Softmax of the elementwise product of the 0/1 graph and the scores.
    LiteralProduct,
}

/// Learnable weights of one spatial block. `T` is [`Tensor`] for stored
/// values and [`Var`] once registered on a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialParams<T> {
    pub w_q: T,
    pub b_q: T,
    pub w_k: T,
    pub b_k: T,
    pub w_v: T,
    pub b_v: T,
    pub w_0: T,
    pub w_1: T,
}

impl<T> SpatialParams<T> {
    pub const NAMES: [&'static str; 8] = ["w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_0", "w_1"];

    /// Fields in census order.
    pub fn fields(&self) -> [&T; 8] {
        [
            &self.w_q, &self.b_q, &self.w_k, &self.b_k, &self.w_v, &self.b_v, &self.w_0, &self.w_1,
        ]
    }

    pub fn fields_mut(&mut self) -> [&mut T; 8] {
        [
            &mut self.w_q,
            &mut self.b_q,
            &mut self.w_k,
            &mut self.b_k,
            &mut self.w_v,
            &mut self.b_v,
            &mut self.w_0,
            &mut self.w_1,
        ]
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(&T) -> Result<U>) -> Result<SpatialParams<U>> {
        Ok(SpatialParams {
            w_q: f(&self.w_q)?,
            b_q: f(&self.b_q)?,
            w_k: f(&self.w_k)?,
            b_k: f(&self.b_k)?,
            w_v: f(&self.w_v)?,
            b_v: f(&self.b_v)?,
            w_0: f(&self.w_0)?,
            w_1: f(&self.w_1)?,
        })
    }
}

impl SpatialParams<Tensor> {
    /// Parameter shapes for node width `d_in` and attention width `d_h`.
    /// Values keep the node width so both branches can be summed.
    pub fn shapes(d_in: usize, d_h: usize) -> [Vec<usize>; 8] {
        [
            vec![d_in, d_h],
            vec![d_h],
            vec![d_in, d_h],
            vec![d_h],
            vec![d_in, d_in],
            vec![d_in],
            vec![d_in, d_h],
            vec![d_h, d_in],
        ]
    }

    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        let [a, b, c, d, e, f, g, h] = Self::shapes(d_in, d_h).map(|s| Tensor::zeros(&s));
        Self {
            w_q: a,
            b_q: b,
            w_k: c,
            b_k: d,
            w_v: e,
            b_v: f,
            w_0: g,
            w_1: h,
        }
    }

    pub fn register(&self, tape: &mut Tape) -> SpatialParams<Var> {
        self.try_map(|t| Ok(tape.param(t.clone()))).expect("infallible")
    }
}

/// Switches for one spatial block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialConfig {
    /// Attention width `D_h`; scores are divided by `√D_h`.
    pub d_h: usize,
    pub top_u: usize,
    pub variant: GraphAttentionVariant,
    /// Drop the sparse global branch: output is the GCN alone.
    pub no_sa: bool,
    /// Drop the GCN branch: output is the sparse global branch alone.
    pub no_agcn: bool,
    /// Replace learned neighbour weights with the row-normalised graph.
    pub no_astar: bool,
}

impl SpatialConfig {
    pub fn new(d_h: usize, top_u: usize) -> Self {
        Self {
            d_h,
            top_u,
            variant: GraphAttentionVariant::MaskedSoftmax,
            no_sa: false,
            no_agcn: false,
            no_astar: false,
        }
    }
}

/// Intermediate attention quantities of one forward pass.
#[derive(Clone, Debug)]
pub struct AttentionState {
    /// Raw scores `[B, N, N]`.
    pub scores: Tensor,
    /// Local neighbour weights `[B, N, N]` (or `[N, N]` when fixed).
    pub local_weights: Tensor,
    /// Top-U survivors, `[B, N, N]` row-major; empty when the sparse branch
    /// is disabled.
    pub survivors: Vec<bool>,
}

/// `Q = XW_Q + b_Q`, `K = XW_K + b_K`, `V = XW_V + b_V`, applied per node.
pub fn project_qkv(tape: &mut Tape, x: Var, p: &SpatialParams<Var>) -> Result<(Var, Var, Var)> {
    let affine = |tape: &mut Tape, w: Var, b: Var| -> Result<Var> {
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    };
    let q = affine(tape, p.w_q, p.b_q)?;
    let k = affine(tape, p.w_k, p.b_k)?;
    let v = affine(tape, p.w_v, p.b_v)?;
    Ok((q, k, v))
}

/// `A = QKᵀ / √D_h`.
pub fn attention_scores(tape: &mut Tape, q: Var, k: Var, d_h: usize) -> Result<Var> {
    if tape.shape(q) != tape.shape(k) {
        return Err(Error::shape(
            "attention_scores",
            format!("Q {:?} vs K {:?}", tape.shape(q), tape.shape(k)),
        ));
    }
    let kt = tape.transpose(k)?;
    let a = tape.matmul(q, kt)?;
    tape.scale(a, 1.0 / (d_h as f64).sqrt())
}

fn batch_rows(tape: &Tape, scores: Var) -> Result<(usize, usize)> {
    let s = tape.shape(scores);
    let n = *s.last().unwrap_or(&0);
    if s.len() < 2 || s[s.len() - 2] != n {
        return Err(Error::shape("attention", format!("scores must be [..., N, N], got {s:?}")));
    }
    Ok((s.iter().product::<usize>() / (n * n), n))
}

/// Local neighbour weights from the graph and the scores.
pub fn graph_attention(
    tape: &mut Tape,
    graph: &Adjacency,
    scores: Var,
    variant: GraphAttentionVariant,
) -> Result<Var> {
    let (batch, n) = batch_rows(tape, scores)?;
    if graph.node_count() != n {
        return Err(Error::shape(
            "graph_attention",
            format!("graph of {} nodes vs scores of {n}", graph.node_count()),
        ));
    }
    match variant {
        GraphAttentionVariant::MaskedSoftmax => {
            let mask = graph.mask();
            let keep: Vec<bool> = (0..batch).flat_map(|_| mask.iter().copied()).collect();
            let masked = tape.masked_fill(scores, keep)?;
            tape.softmax_rows(masked)
        }
        GraphAttentionVariant::LiteralProduct => {
            let g = tape.constant(graph.to_tensor());
            let prod = tape.mul(scores, g)?;
            tape.softmax_rows(prod)
        }
    }
}

/// `ReLU(G_A · ReLU(G_A · X · W_0) · W_1)`.
pub fn gcn_local(tape: &mut Tape, g_a: Var, x: Var, w_0: Var, w_1: Var) -> Result<Var> {
    let h = tape.matmul(g_a, x)?;
    let h = tape.matmul(h, w_0)?;
    let h = tape.relu(h)?;
    let h = tape.matmul(g_a, h)?;
    let h = tape.matmul(h, w_1)?;
    tape.relu(h)
}

/// Per-row Top-U selection over the last axis of `scores`.
///
/// Keeps the `min(u, N)` largest entries of each row; among equal values the
/// lower column index wins.
pub fn top_u_mask(scores: &Tensor, u: usize) -> Result<Vec<bool>> {
    if u == 0 {
        return Err(Error::Config("top_u must be at least 1".into()));
    }
    let n = *scores
        .shape()
        .last()
        .ok_or_else(|| Error::shape("top_u", "scalar scores"))?;
    let keep_n = u.min(n);
    let mut keep = vec![false; scores.len()];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for (row, out) in scores.data().chunks(n).zip(keep.chunks_mut(n)) {
        order.clear();
        order.extend(0..n);
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for &j in &order[..keep_n] {
            out[j] = true;
        }
    }
    Ok(keep)
}

/// `S`: the Top-U scores of each row kept, every other entry −∞.
///
/// Selection is a constant index set for differentiation; it is also noted on
/// the tape's branch fingerprint.
pub fn top_u_sparsify(tape: &mut Tape, scores: Var, u: usize) -> Result<(Var, Vec<bool>)> {
    let keep = top_u_mask(tape.value(scores), u)?;
    tape.note_branches(keep.iter().copied());
    let s = tape.masked_fill(scores, keep.clone())?;
    Ok((s, keep))
}

/// `Softmax(S) · V`.
pub fn sparse_global(tape: &mut Tape, sparse_scores: Var, v: Var) -> Result<Var> {
    let w = tape.softmax_rows(sparse_scores)?;
    tape.matmul(w, v)
}

/// `O_S = O_G + O_SA`.
pub fn spatial_out(tape: &mut Tape, o_g: Var, o_sa: Var) -> Result<Var> {
    tape.add(o_g, o_sa)
}

/// One spatial block on `x: [B, N, D_in]`, honouring the ablation switches.
pub fn gsa_forward(
    tape: &mut Tape,
    x: Var,
    p: &SpatialParams<Var>,
    graph: &MultimodalGraph,
    cfg: &SpatialConfig,
) -> Result<(Var, AttentionState)> {
    if cfg.no_sa && cfg.no_agcn {
        return Err(Error::Config("no_sa and no_agcn together remove the whole spatial block".into()));
    }
    let (q, k, v) = project_qkv(tape, x, p)?;
    let scores = attention_scores(tape, q, k, cfg.d_h)?;

    let local = if cfg.no_agcn {
        None
    } else {
        let g_a = if cfg.no_astar {
            tape.constant(graph.adjacency.row_normalized())
        } else {
            graph_attention(tape, &graph.adjacency, scores, cfg.variant)?
        };
        Some((g_a, gcn_local(tape, g_a, x, p.w_0, p.w_1)?))
    };
    let global = if cfg.no_sa {
        None
    } else {
        let (s, keep) = top_u_sparsify(tape, scores, cfg.top_u)?;
        Some((keep, sparse_global(tape, s, v)?))
    };

    let state = AttentionState {
        scores: tape.value(scores).clone(),
        local_weights: local
            .map(|(g, _)| tape.value(g).clone())
            .unwrap_or_else(|| Tensor::zeros(&[1])),
        survivors: global.as_ref().map(|(k, _)| k.clone()).unwrap_or_default(),
    };
    let out = match (local, global) {
        (Some((_, o_g)), Some((_, o_sa))) => spatial_out(tape, o_g, o_sa)?,
        (Some((_, o_g)), None) => o_g,
        (None, Some((_, o_sa))) => o_sa,
        (None, None) => unreachable!("rejected above"),
    };
    Ok((out, state))
}

/// Top-U survivor counts by (target modality, source modality): row `i`
/// of the attention matrix is the target node, column `j` the source.
pub fn survivor_counts(survivors: &[bool], graph: &MultimodalGraph) -> Vec<Vec<u64>> {
    let n = graph.node_count();
    let m = graph.modality_count();
    let owner: Vec<usize> = (0..n).map(|i| graph.modality_of(i)).collect();
    let mut counts = vec![vec![0u64; m]; m];
    for (idx, &s) in survivors.iter().enumerate() {
        if s {
            let i = (idx / n) % n;
            let j = idx % n;
            counts[owner[i]][owner[j]] += 1;
        }
    }
    counts
}
