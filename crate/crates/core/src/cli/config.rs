use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{NormKind, Split, SplitBounds, SynthModality, STEPS_PER_DAY};
use crate::error::{Error, Result};
use crate::model::{ModalityShape, ModelConfig};
use crate::train::{SweepParam, TrainConfig};

/// Every setting of one command invocation. Unknown keys are errors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds data generation, parameter initialisation, shuffling and dropout.
    pub seed: u64,
    pub data: DataConfig,
    pub generate: GenerateConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub gradcheck: GradcheckConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Modality manifest written by `generate`.
    pub manifest: PathBuf,
    /// Restrict to these modalities, in this order; empty means all.
    pub modalities: Vec<String>,
    pub train_weeks: usize,
    pub val_weeks: usize,
    pub test_weeks: usize,
    pub steps_per_day: usize,
    pub norm: NormKind,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("data/manifest.toml"),
            modalities: Vec::new(),
            train_weeks: 9,
            val_weeks: 2,
            test_weeks: 2,
            steps_per_day: STEPS_PER_DAY,
            norm: NormKind::MinMax,
        }
    }
}

impl DataConfig {
    pub fn bounds(&self) -> SplitBounds {
        SplitBounds::weeks(self.train_weeks, self.val_weeks, self.test_weeks, self.steps_per_day)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub days: usize,
    pub modality: Vec<SynthModality>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let m = |name: &str, rows, cols, scale, coupling| SynthModality {
            name: name.into(),
            rows,
            cols,
            features: 1,
            scale,
            base: 1.0,
            daily_amp: 0.5,
            half_day_amp: 0.2,
            coupling,
            noise: 0.1,
        };
        Self {
            days: 91,
            modality: vec![m("taxi", 4, 6, 100.0, 0.4), m("bike", 4, 4, 20.0, 0.4)],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    #[default]
    Test,
}

impl From<SplitName> for Split {
    fn from(s: SplitName) -> Split {
        match s {
            SplitName::Train => Split::Train,
            SplitName::Val => Split::Val,
            SplitName::Test => Split::Test,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Checkpoint read by `eval` and `census`.
    pub checkpoint: Option<PathBuf>,
    pub split: SplitName,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub param: SweepParam,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { param: SweepParam::TopU }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    /// Nodes per modality of the micro-instance.
    pub nodes: Vec<usize>,
    pub input_len: usize,
    pub horizon: usize,
    pub d_h: usize,
    pub st_layers: usize,
    pub top_u: usize,
    pub step: f64,
    pub tol: f64,
    /// Further seeds tried when kinks leave a check inconclusive.
    pub resamples: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            nodes: vec![3, 2],
            input_len: 4,
            horizon: 4,
            d_h: 4,
            st_layers: 1,
            top_u: 3,
            step: 1e-5,
            tol: 1e-4,
            resamples: 10,
        }
    }
}

/// Documentation of every configuration key, shown by `--help`.
pub const CONFIG_KEYS: &str = "\
CONFIGURATION KEYS (TOML file via --config, or --override KEY=VALUE)
  seed                      master seed for generation, init, shuffling, dropout [0]
  data.manifest             modality manifest path [data/manifest.toml]
  data.modalities           subset of modality names to use, in order [all]
  data.train_weeks          leading weeks used for training [9]
  data.val_weeks            following weeks used for validation [2]
  data.test_weeks           following weeks used for testing [2]
  data.steps_per_day        steps per day of the series [48]
  data.norm                 min_max | z_score, fitted on the training span [min_max]
  generate.days             days of synthetic data [91]
  generate.modality         array of tables, one per modality, with keys
                            name, rows, cols, features, scale, base, daily_amp,
                            half_day_amp, coupling, noise
  model.input_len           input steps P [12]
  model.horizon             predicted steps Q [12]
  model.features            features per node F (taken from the data)
  model.modalities          modality names and node counts (taken from the data)
  model.d_h                 attention width [64]
  model.d_f                 per-node channel width [d_h]
  model.head_hidden         hidden width of the prediction head [4 * d_h]
  model.st_layers           stacked ST-layers [2]
  model.top_u               attention entries kept per row [16]
  model.dropout             dropout after each temporal convolution [0.1]
  model.ablation.no_sa      remove sparse attention [false]
  model.ablation.no_agcn    remove the graph-attention GCN [false]
  model.ablation.no_astar   fixed row-normalised graph weights [false]
  model.ablation.no_fstcn   remove forward temporal convolutions [false]
  model.ablation.no_bstcn   remove backward temporal convolutions [false]
  model.graph_attention     masked_softmax | literal_product [masked_softmax]
  model.stage_order         spatial_first | temporal_first [spatial_first]
  model.seed                initialisation seed (set from seed)
  train.batch_size          minibatch size [64]
  train.epochs              epochs [100]
  train.learning_rate       step size [0.0005]
  train.optimizer           adam | sgd [adam]
  train.beta1               Adam first-moment decay [0.9]
  train.beta2               Adam second-moment decay [0.999]
  train.eps                 Adam denominator offset [1e-8]
  train.seed                shuffling and dropout seed (set from seed)
  train.patience            stop after this many epochs without improvement [off]
  train.clip_norm           global gradient-norm ceiling [5.0]
  train.window_stride       use every n-th training window [1]
  train.val_stride          use every n-th validation window [1]
  eval.checkpoint           checkpoint for eval and census
  eval.split                train | val | test [test]
  sweep.param               st_layers | top_u [top_u]
  gradcheck.nodes           nodes per micro-instance modality [[3, 2]]
  gradcheck.input_len       micro-instance P [4]
  gradcheck.horizon         micro-instance Q [4]
  gradcheck.d_h             micro-instance width [4]
  gradcheck.st_layers       micro-instance layers [1]
  gradcheck.top_u           micro-instance attention entries kept per row [3]
  gradcheck.step            central-difference step [1e-5]
  gradcheck.tol             maximum relative error [1e-4]
  gradcheck.resamples       extra seeds tried after inconclusive checks [10]
";

/// Reads a configuration file, accepting either a plain configuration or a
/// run manifest (whose `config` table is used).
pub fn read_config_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| Error::format(path, "config", e.to_string()))?;
    if table.contains_key("command") {
        return match table.remove("config") {
            Some(toml::Value::Table(t)) => Ok(t),
            _ => Err(Error::format(path, "config", "run manifest without a [config] table")),
        };
    }
    Ok(table)
}

/// Sets `key` (dotted path) to `value`, parsed as a TOML value when possible
/// and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.resolve()
    }

    /// Propagates the master seed and checks every section.
    fn resolve(mut self) -> Result<Self> {
        for (k, v) in [("model.seed", self.model.seed), ("train.seed", self.train.seed)] {
            if v != 0 && v != self.seed {
                return Err(Error::Config(format!("{k} = {v} conflicts with seed = {}; set `seed` only", self.seed)));
            }
        }
        self.model.seed = self.seed;
        self.train.seed = self.seed;
        self.train.validate()?;
        if self.gradcheck.nodes.is_empty() || self.gradcheck.nodes.contains(&0) {
            return Err(Error::Config("gradcheck.nodes must list positive node counts".into()));
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    /// The model section completed with the data's modality layout. Keys
    /// that were set explicitly must agree with the data.
    pub fn model_for(&self, shapes: Vec<ModalityShape>, features: usize) -> Result<ModelConfig> {
        if !self.model.modalities.is_empty() && self.model.modalities != shapes {
            return Err(Error::Config(format!(
                "model.modalities {:?} does not match the data {:?}",
                self.model.modalities, shapes
            )));
        }
        Ok(ModelConfig {
            modalities: shapes,
            features,
            ..self.model.clone()
        })
    }
}
