use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::MultimodalGraph;
use crate::error::{Error, Result};
use crate::spatial::{gsa_forward, AttentionState};
use crate::temporal::shared_unique_forward;
use crate::tensor::{Tape, Tensor, Var};

use super::config::{apply_ablation, ModelConfig, StageOrder};
use super::params::ModelParams;

/// A configured model with its parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams<Tensor>,
}

/// Result of one recorded forward pass.
pub struct ForwardOutput {
    /// Predictions `[B, Q, N, F]` in normalised units.
    pub pred: Var,
    /// Tape handles of every parameter, for reading gradients.
    pub params: ModelParams<Var>,
    /// Attention state of each ST-layer's spatial block.
    pub attention: Vec<AttentionState>,
}

fn in_layer(layer: usize, stage: &str) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::Numeric { context } => Error::Numeric {
            context: format!("st-layer {layer} {stage}: {context}"),
        },
        other => other,
    }
}

impl Model {
    /// Validates `config` and draws initial parameters from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::glorot(&config, &mut rng);
        Ok(Self { config, params })
    }

    /// Wraps existing parameters, checking every shape against `config`.
    pub fn from_params(config: ModelConfig, params: ModelParams<Tensor>) -> Result<Self> {
        config.validate()?;
        let want = ModelParams::zeros(&config).census();
        let have = params.census();
        if want != have {
            let detail = want
                .iter()
                .zip(&have)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("{} expects {:?}, got {} {:?}", a.0, a.1, b.0, b.1))
                .unwrap_or_else(|| format!("{} tensors expected, got {}", want.len(), have.len()));
            return Err(Error::shape("Model::from_params", detail));
        }
        Ok(Self { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Channel slices of each modality in the `[B, N·D_f, P]` temporal layout.
    fn channel_slices(&self) -> Vec<Range<usize>> {
        let d_f = self.config.d_f();
        let mut start = 0;
        self.config
            .modalities
            .iter()
            .map(|m| {
                let r = start..start + m.nodes * d_f;
                start = r.end;
                r
            })
            .collect()
    }

    /// Records a forward pass of `x: [B, P, N, F]` on `tape`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        graph: &MultimodalGraph,
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let params = self.params.register(tape);
        let x = tape.constant(x.clone());
        let (pred, attention) = self.forward_vars(tape, x, &params, graph, training, rng)?;
        Ok(ForwardOutput { pred, params, attention })
    }

    /// Forward pass over caller-registered parameter handles.
    pub fn forward_vars<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: Var,
        p: &ModelParams<Var>,
        graph: &MultimodalGraph,
        training: bool,
        rng: &mut R,
    ) -> Result<(Var, Vec<AttentionState>)> {
        let cfg = &self.config;
        cfg.check_graph(graph)?;
        let eff = apply_ablation(cfg, training)?;
        let (pp, n, f, d_f) = (cfg.input_len, cfg.node_count(), cfg.features, cfg.d_f());
        let xs = tape.shape(x).to_vec();
        if xs.len() != 4 || xs[1..] != [pp, n, f] {
            return Err(Error::shape(
                "Model::forward",
                format!("input must be [B, {pp}, {n}, {f}], got {xs:?}"),
            ));
        }
        let b = xs[0];
        let slices = self.channel_slices();

        // [B, P, N, F] -> [B, N, P, D_f]
        let h = tape.permute(x, &[0, 2, 1, 3])?;
        let h = tape.matmul(h, p.embed_w)?;
        let mut h = tape.add(h, p.embed_b).map_err(in_layer(0, "embedding"))?;

        let mut attention = Vec::with_capacity(cfg.st_layers);
        for (l, lp) in p.layers.iter().enumerate() {
            let spatial = |tape: &mut Tape, h: Var| -> Result<(Var, AttentionState)> {
                let flat = tape.reshape(h, &[b, n, pp * d_f])?;
                let (o, state) =
                    gsa_forward(tape, flat, &lp.spatial, graph, &eff.spatial).map_err(in_layer(l, "spatial"))?;
                Ok((tape.reshape(o, &[b, n, pp, d_f])?, state))
            };
            let mut temporal = |tape: &mut Tape, h: Var| -> Result<Var> {
                let t = tape.permute(h, &[0, 1, 3, 2])?;
                let t = tape.reshape(t, &[b, n * d_f, pp])?;
                let t = shared_unique_forward(tape, t, &lp.temporal, &slices, &eff.temporal, rng)
                    .map_err(in_layer(l, "temporal"))?;
                let t = tape.reshape(t, &[b, n, d_f, pp])?;
                tape.permute(t, &[0, 1, 3, 2])
            };
            let (out, state) = match eff.stage_order {
                StageOrder::SpatialFirst => {
                    let (s, state) = spatial(tape, h)?;
                    (temporal(tape, s)?, state)
                }
                StageOrder::TemporalFirst => {
                    let t = temporal(tape, h)?;
                    spatial(tape, t)?
                }
            };
            h = tape.add(out, h).map_err(in_layer(l, "residual"))?;
            attention.push(state);
        }

        let head = |e: Error| in_layer(cfg.st_layers, "head")(e);
        let z = tape.reshape(h, &[b, n, pp * d_f])?;
        let z = tape.matmul(z, p.head.w1).map_err(head)?;
        let z = tape.add(z, p.head.b1).map_err(head)?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, p.head.w2).map_err(head)?;
        let z = tape.add(z, p.head.b2).map_err(head)?;
        let z = tape.reshape(z, &[b, n, cfg.horizon, f])?;
        Ok((tape.permute(z, &[0, 2, 1, 3])?, attention))
    }

    /// Evaluation-mode prediction `[B, Q, N, F]`.
    pub fn predict(&self, x: &Tensor, graph: &MultimodalGraph) -> Result<Tensor> {
        Ok(self.predict_with_attention(x, graph)?.0)
    }

    /// Evaluation-mode prediction together with per-layer attention state.
    pub fn predict_with_attention(
        &self,
        x: &Tensor,
        graph: &MultimodalGraph,
    ) -> Result<(Tensor, Vec<AttentionState>)> {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, x, graph, false, &mut rng)?;
        Ok((tape.value(out.pred).clone(), out.attention))
    }
}
