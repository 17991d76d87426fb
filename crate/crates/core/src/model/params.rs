use rand::Rng;

use crate::error::Result;
use crate::spatial::SpatialParams;
use crate::temporal::{TemporalStackParams, DILATIONS, KERNEL};
use crate::tensor::{Tape, Tensor, Var};

use super::config::ModelConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub spatial: SpatialParams<T>,
    pub temporal: TemporalStackParams<T>,
}

/// Per-node two-layer MLP shared across nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T> {
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

/// Every trainable tensor of the model. Generic so the same layout carries
/// values, tape handles, gradients and optimiser moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub embed_w: T,
    pub embed_b: T,
    pub layers: Vec<LayerParams<T>>,
    pub head: HeadParams<T>,
}

impl<T> ModelParams<T> {
    /// Visits parameters in census order with their dotted names.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(String, &'a T)) {
        f("embed.w".into(), &self.embed_w);
        f("embed.b".into(), &self.embed_b);
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in SpatialParams::<T>::NAMES.iter().zip(layer.spatial.fields()) {
                f(format!("layer{l}.spatial.{name}"), t);
            }
            layer.temporal.visit(&format!("layer{l}.temporal"), &mut f);
        }
        f("head.w1".into(), &self.head.w1);
        f("head.b1".into(), &self.head.b1);
        f("head.w2".into(), &self.head.w2);
        f("head.b2".into(), &self.head.b2);
    }

    pub fn visit_mut<'a>(&'a mut self, mut f: impl FnMut(String, &'a mut T)) {
        f("embed.w".into(), &mut self.embed_w);
        f("embed.b".into(), &mut self.embed_b);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (name, t) in SpatialParams::<T>::NAMES.iter().zip(layer.spatial.fields_mut()) {
                f(format!("layer{l}.spatial.{name}"), t);
            }
            layer.temporal.visit_mut(&format!("layer{l}.temporal"), &mut f);
        }
        f("head.w1".into(), &mut self.head.w1);
        f("head.b1".into(), &mut self.head.b1);
        f("head.w2".into(), &mut self.head.w2);
        f("head.b2".into(), &mut self.head.b2);
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(&T) -> Result<U>) -> Result<ModelParams<U>> {
        Ok(ModelParams {
            embed_w: f(&self.embed_w)?,
            embed_b: f(&self.embed_b)?,
            layers: self
                .layers
                .iter()
                .map(|l| {
                    Ok(LayerParams {
                        spatial: l.spatial.try_map(&mut f)?,
                        temporal: l.temporal.try_map(&mut f)?,
                    })
                })
                .collect::<Result<_>>()?,
            head: HeadParams {
                w1: f(&self.head.w1)?,
                b1: f(&self.head.b1)?,
                w2: f(&self.head.w2)?,
                b2: f(&self.head.b2)?,
            },
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelParams<U> {
        self.try_map(|t| Ok(f(t))).expect("infallible")
    }
}

impl ModelParams<Tensor> {
    /// All-zero parameters with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d_f = cfg.d_f();
        let d_in = cfg.node_width();
        let widths: Vec<usize> = cfg.modalities.iter().map(|m| m.nodes * d_f).collect();
        let channels = cfg.node_count() * d_f;
        let hidden = cfg.head_hidden();
        let out = cfg.horizon * cfg.features;
        Self {
            embed_w: Tensor::zeros(&[cfg.features, d_f]),
            embed_b: Tensor::zeros(&[d_f]),
            layers: (0..cfg.st_layers)
                .map(|_| LayerParams {
                    spatial: SpatialParams::zeros(d_in, cfg.d_h),
                    temporal: TemporalStackParams::zeros(channels, &widths),
                })
                .collect(),
            head: HeadParams {
                w1: Tensor::zeros(&[d_in, hidden]),
                b1: Tensor::zeros(&[hidden]),
                w2: Tensor::zeros(&[hidden, out]),
                b2: Tensor::zeros(&[out]),
            },
        }
    }

    /// Glorot-uniform weights and zero biases, drawn in census order.
    /// Values are rounded to `f32` so checkpoints reproduce them exactly.
    pub fn glorot<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg);
        p.visit_mut(|_, t| {
            let (fan_in, fan_out) = match t.shape() {
                [_] => return,
                [i, o] => (*i, *o),
                [o, i, k] => (i * k, o * k),
                s => unreachable!("unexpected parameter rank {s:?}"),
            };
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.random_range(-a..a) as f32 as f64;
            }
        });
        p
    }

    pub fn register(&self, tape: &mut Tape) -> ModelParams<Var> {
        self.map(|t| tape.param(t.clone()))
    }

    /// Names and shapes in census order.
    pub fn census(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(|name, t| out.push((name, t.shape().to_vec())));
        out
    }

    pub fn count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.len());
        n
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, t| ok &= t.is_finite());
        ok
    }

    /// Global L2 norm over every tensor.
    pub fn global_norm(&self) -> f64 {
        let mut s = 0.0;
        self.visit(|_, t| s += t.data().iter().map(|v| v * v).sum::<f64>());
        s.sqrt()
    }
}

/// Closed-form parameter count for `cfg`.
pub fn expected_param_count(cfg: &ModelConfig) -> usize {
    let d_f = cfg.d_f();
    let d_h = cfg.d_h;
    let d_in = cfg.node_width();
    let hidden = cfg.head_hidden();
    let out = cfg.horizon * cfg.features;
    let stcn = |c: usize| DILATIONS.len() * (c * c * KERNEL + c);
    let bitcn = |c: usize| 2 * stcn(c);
    let spatial = 2 * (d_in * d_h + d_h) + d_in * d_in + d_in + d_in * d_h + d_h * d_in;
    let temporal = bitcn(cfg.node_count() * d_f)
        + cfg.modalities.iter().map(|m| bitcn(m.nodes * d_f)).sum::<usize>();
    cfg.features * d_f + d_f + cfg.st_layers * (spatial + temporal) + d_in * hidden + hidden + hidden * out + out
}

impl ModelParams<Tensor> {
    /// Every value in census order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        self.visit(|_, t| out.extend_from_slice(t.data()));
        out
    }

    /// Overwrites every value from a census-ordered buffer.
    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.count() {
            return Err(crate::Error::shape(
                "ModelParams::assign_flat",
                format!("{} values for {} parameters", values.len(), self.count()),
            ));
        }
        let mut pos = 0;
        self.visit_mut(|_, t| {
            let d = t.data_mut();
            d.copy_from_slice(&values[pos..pos + d.len()]);
            pos += d.len();
        });
        Ok(())
    }
}
