use serde::{Deserialize, Serialize};

use crate::data::MultimodalGraph;
use crate::error::{Error, Result};
use crate::spatial::{GraphAttentionVariant, SpatialConfig};
use crate::temporal::TemporalConfig;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityShape {
    pub name: String,
    pub nodes: usize,
}

impl ModalityShape {
    /// Shapes of every modality of `graph`, in joint order.
    pub fn from_graph(graph: &MultimodalGraph) -> Vec<Self> {
        graph
            .names
            .iter()
            .zip(&graph.sizes)
            .map(|(name, &nodes)| Self { name: name.clone(), nodes })
            .collect()
    }
}

/// Module removals for ablation studies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Remove Top-U sparse attention.
    pub no_sa: bool,
    /// Remove the graph-attention GCN.
    pub no_agcn: bool,
    /// Keep the GCN but use fixed row-normalised graph weights.
    pub no_astar: bool,
    /// Remove the forward STCN of every BiTCN.
    pub no_fstcn: bool,
    /// Remove the backward STCN of every BiTCN.
    pub no_bstcn: bool,
}

impl Ablation {
    /// The five single-module variants, labelled, after the full model.
    pub fn variants() -> [(&'static str, Ablation); 6] {
        let none = Ablation::default();
        [
            ("full", none),
            ("no_sa", Ablation { no_sa: true, ..none }),
            ("no_agcn", Ablation { no_agcn: true, ..none }),
            ("no_astar", Ablation { no_astar: true, ..none }),
            ("no_fstcn", Ablation { no_fstcn: true, ..none }),
            ("no_bstcn", Ablation { no_bstcn: true, ..none }),
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    #[default]
    SpatialFirst,
    TemporalFirst,
}

/// Architecture hyperparameters. Serialised into every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Input steps P.
    #[serde(default = "defaults::twelve")]
    pub input_len: usize,
    /// Predicted steps Q.
    #[serde(default = "defaults::twelve")]
    pub horizon: usize,
    /// Features per node F.
    #[serde(default = "defaults::one")]
    pub features: usize,
    /// Modalities in joint-node order.
    #[serde(default)]
    pub modalities: Vec<ModalityShape>,
    /// Attention width.
    #[serde(default = "defaults::d_h")]
    pub d_h: usize,
    /// Per-node, per-step channel width; defaults to `d_h`.
    #[serde(default)]
    pub d_f: Option<usize>,
    /// Hidden width of the head; defaults to `4 · d_h`.
    #[serde(default)]
    pub head_hidden: Option<usize>,
    #[serde(default = "defaults::st_layers")]
    pub st_layers: usize,
    /// Survivors per attention row; values ≥ the joint node count mean dense.
    #[serde(default = "defaults::top_u")]
    pub top_u: usize,
    #[serde(default = "defaults::dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub graph_attention: GraphAttentionVariant,
    #[serde(default)]
    pub stage_order: StageOrder,
    /// Seed for parameter initialisation.
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn twelve() -> usize {
        12
    }
    pub fn one() -> usize {
        1
    }
    pub fn d_h() -> usize {
        64
    }
    pub fn st_layers() -> usize {
        2
    }
    pub fn top_u() -> usize {
        16
    }
    pub fn dropout() -> f64 {
        0.1
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_len: 12,
            horizon: 12,
            features: 1,
            modalities: Vec::new(),
            d_h: 64,
            d_f: None,
            head_hidden: None,
            st_layers: 2,
            top_u: 16,
            dropout: 0.1,
            ablation: Ablation::default(),
            graph_attention: GraphAttentionVariant::MaskedSoftmax,
            stage_order: StageOrder::SpatialFirst,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn d_f(&self) -> usize {
        self.d_f.unwrap_or(self.d_h)
    }

    pub fn head_hidden(&self) -> usize {
        self.head_hidden.unwrap_or(4 * self.d_h)
    }

    /// Flattened node width `P · D_f` seen by the spatial block and head.
    pub fn node_width(&self) -> usize {
        self.input_len * self.d_f()
    }

    pub fn node_count(&self) -> usize {
        self.modalities.iter().map(|m| m.nodes).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_len", self.input_len),
            ("horizon", self.horizon),
            ("features", self.features),
            ("d_h", self.d_h),
            ("d_f", self.d_f()),
            ("head_hidden", self.head_hidden()),
            ("st_layers", self.st_layers),
            ("top_u", self.top_u),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{k} must be positive")));
        }
        if self.modalities.is_empty() {
            return Err(Error::Config("model.modalities is empty".into()));
        }
        if let Some(m) = self.modalities.iter().find(|m| m.nodes == 0) {
            return Err(Error::Config(format!("modality `{}` has no nodes", m.name)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("model.dropout {} outside [0, 1)", self.dropout)));
        }
        apply_ablation(self, false).map(|_| ())
    }

    /// Checks that `graph` has this configuration's modality layout.
    pub fn check_graph(&self, graph: &MultimodalGraph) -> Result<()> {
        let ok = graph.modality_count() == self.modalities.len()
            && self
                .modalities
                .iter()
                .zip(graph.names.iter().zip(&graph.sizes))
                .all(|(m, (name, &size))| &m.name == name && m.nodes == size);
        if !ok {
            let have: Vec<String> = graph
                .names
                .iter()
                .zip(&graph.sizes)
                .map(|(n, s)| format!("{n}:{s}"))
                .collect();
            let want: Vec<String> = self.modalities.iter().map(|m| format!("{}:{}", m.name, m.nodes)).collect();
            return Err(Error::Config(format!(
                "modality mismatch: model expects [{}], data provides [{}]",
                want.join(", "),
                have.join(", ")
            )));
        }
        if !graph.is_block_diagonal() {
            return Err(Error::Config("joint graph is not block-diagonal".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model config serialises")
    }
}

/// Block configurations after applying the ablation switches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveGraph {
    pub spatial: SpatialConfig,
    pub temporal: TemporalConfig,
    pub stage_order: StageOrder,
}

/// Resolves the ablation switches into block configurations. Removing both
/// spatial branches or both temporal directions is rejected.
pub fn apply_ablation(cfg: &ModelConfig, training: bool) -> Result<EffectiveGraph> {
    let a = cfg.ablation;
    if a.no_sa && a.no_agcn {
        return Err(Error::Config(
            "ablation: no_sa with no_agcn removes the whole spatial block".into(),
        ));
    }
    if a.no_fstcn && a.no_bstcn {
        return Err(Error::Config(
            "ablation: no_fstcn with no_bstcn removes the whole temporal block".into(),
        ));
    }
    if a.no_agcn && a.no_astar {
        return Err(Error::Config("ablation: no_astar has no effect once no_agcn removes the GCN".into()));
    }
    Ok(EffectiveGraph {
        spatial: SpatialConfig {
            d_h: cfg.d_h,
            top_u: cfg.top_u,
            variant: cfg.graph_attention,
            no_sa: a.no_sa,
            no_agcn: a.no_agcn,
            no_astar: a.no_astar,
        },
        temporal: TemporalConfig {
            dropout: cfg.dropout,
            training,
            no_fstcn: a.no_fstcn,
            no_bstcn: a.no_bstcn,
        },
        stage_order: cfg.stage_order,
    })
}
