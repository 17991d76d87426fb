use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::metrics::{fmt_pcc, MetricsReport};
use super::run::{evaluate, train, TrainOutcome};
use crate::data::{Dataset, ModalitySpec, NormKind, Series, Split, SplitBounds};
use crate::error::{Error, Result};
use crate::model::{Ablation, ModalityShape, Model, ModelConfig};
use crate::spatial::survivor_counts;

/// One trained and evaluated configuration.
#[derive(Clone, Debug)]
pub struct VariantRun {
    pub label: String,
    pub config: ModelConfig,
    pub outcome: TrainOutcome,
    pub report: MetricsReport,
}

/// Builds a model for `data` from `base`, trains it, and evaluates the best
/// checkpoint on `split`.
pub fn train_and_evaluate(
    label: &str,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &Dataset,
    split: Split,
) -> Result<VariantRun> {
    let config = ModelConfig {
        modalities: ModalityShape::from_graph(&data.graph),
        features: data.features(),
        ..base.clone()
    };
    let model = Model::new(config.clone())?;
    log::info!("training `{label}` ({} parameters)", model.param_count());
    let outcome = train(model, data, train_cfg)?;
    let report = evaluate(&outcome.best, data, split)?;
    Ok(VariantRun {
        label: label.to_string(),
        config,
        outcome,
        report,
    })
}

/// Trains the full model and each single-module ablation with the same seed
/// and budget; rows in the order full, no_sa, no_agcn, no_astar, no_fstcn,
/// no_bstcn.
pub fn run_ablation_suite(base: &ModelConfig, train_cfg: &TrainConfig, data: &Dataset) -> Result<Vec<VariantRun>> {
    Ablation::variants()
        .iter()
        .map(|(label, a)| {
            let cfg = ModelConfig { ablation: *a, ..base.clone() };
            train_and_evaluate(label, &cfg, train_cfg, data, Split::Test)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    StLayers,
    TopU,
}

/// Value of one sweep row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepValue {
    Count(usize),
    /// Dense attention: `U = N_M`.
    Full,
}

impl SweepParam {
    pub fn values(self) -> Vec<SweepValue> {
        match self {
            SweepParam::StLayers => (1..=5).map(SweepValue::Count).collect(),
            SweepParam::TopU => [8, 16, 32, 64, 128]
                .map(SweepValue::Count)
                .into_iter()
                .chain([SweepValue::Full])
                .collect(),
        }
    }

    /// Best setting at full scale: two layers, U = 16.
    pub fn reference_optimum(self) -> SweepValue {
        match self {
            SweepParam::StLayers => SweepValue::Count(2),
            SweepParam::TopU => SweepValue::Count(16),
        }
    }

    /// Row label of one sweep value, e.g. `top_u=full`.
    pub fn label(self, v: SweepValue) -> String {
        match v {
            SweepValue::Count(n) => format!("{}={n}", self.name()),
            SweepValue::Full => format!("{}=full", self.name()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::StLayers => "st_layers",
            SweepParam::TopU => "top_u",
        }
    }
}

/// Trains one model per sweep value.
pub fn run_sweep(
    param: SweepParam,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &Dataset,
) -> Result<Vec<VariantRun>> {
    param
        .values()
        .into_iter()
        .map(|v| {
            let mut cfg = base.clone();
            match (param, v) {
                (SweepParam::StLayers, SweepValue::Count(n)) => cfg.st_layers = n,
                (SweepParam::StLayers, SweepValue::Full) => unreachable!("layer sweep is numeric"),
                (SweepParam::TopU, SweepValue::Count(u)) => cfg.top_u = u,
                (SweepParam::TopU, SweepValue::Full) => cfg.top_u = data.graph.node_count(),
            }
            let label = param.label(v);
            train_and_evaluate(&label, &cfg, train_cfg, data, Split::Test)
        })
        .collect()
}

/// Writes one row per variant: the label, then `mae, rmse, pcc` for each
/// modality.
pub fn write_variant_table<W: Write>(runs: &[VariantRun], w: W) -> Result<()> {
    write_table(runs, None, w)
}

/// The variant table plus a `reference_optimum` column marking the setting
/// that led most metrics in the published full-scale experiments.
pub fn write_sweep_table<W: Write>(runs: &[VariantRun], param: SweepParam, w: W) -> Result<()> {
    write_table(runs, Some(&param.label(param.reference_optimum())), w)
}

fn write_table<W: Write>(runs: &[VariantRun], optimum: Option<&str>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Config(format!("writing table: {e}"));
    let Some(first) = runs.first() else {
        return Ok(());
    };
    let mut header = vec!["variant".to_string()];
    for (name, _) in first.report.modalities() {
        for metric in ["mae", "rmse", "pcc"] {
            header.push(format!("{name}_{metric}"));
        }
    }
    if optimum.is_some() {
        header.push("reference_optimum".into());
    }
    out.write_record(&header).map_err(err)?;
    for run in runs {
        let mut row = vec![run.label.clone()];
        for (_, m) in run.report.modalities() {
            row.extend([m.mae.to_string(), m.rmse.to_string(), fmt_pcc(m.pcc)]);
        }
        if let Some(o) = optimum {
            row.push((run.label == o).to_string());
        }
        out.write_record(&row).map_err(err)?;
    }
    out.flush().map_err(|e| Error::Config(format!("writing table: {e}")))
}

/// Joint versus per-modality training on the same data, budget and seed.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub joint: VariantRun,
    pub single: Vec<VariantRun>,
}

impl Comparison {
    /// Rows of `(modality, setting, metrics)`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Config(format!("writing comparison: {e}"));
        out.write_record(["modality", "setting", "mae", "rmse", "pcc", "n"]).map_err(err)?;
        let mut emit = |name: &str, setting: &str, m: &super::Metrics| {
            out.write_record([
                name.to_string(),
                setting.to_string(),
                m.mae.to_string(),
                m.rmse.to_string(),
                fmt_pcc(m.pcc),
                m.n.to_string(),
            ])
        };
        for (name, m) in self.joint.report.modalities() {
            emit(name, "joint", m).map_err(err)?;
            let single = self
                .single
                .iter()
                .find_map(|r| r.report.get(name))
                .ok_or_else(|| Error::Config(format!("no single-modality run for `{name}`")))?;
            emit(name, "single", single).map_err(err)?;
        }
        out.flush().map_err(|e| Error::Config(format!("writing comparison: {e}")))
    }

    /// Modalities where joint training has the lower test MAE.
    pub fn joint_wins(&self) -> Vec<String> {
        self.joint
            .report
            .modalities()
            .filter(|(name, m)| self.single.iter().any(|r| r.report.get(name).is_some_and(|s| m.mae < s.mae)))
            .map(|(n, _)| n.clone())
            .collect()
    }
}

/// Trains on all modalities jointly and on each modality alone.
pub fn run_joint_vs_single(
    modalities: &[(ModalitySpec, Series)],
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    bounds: SplitBounds,
    norm: NormKind,
) -> Result<Comparison> {
    let prep = |parts: &[(ModalitySpec, Series)]| {
        Dataset::prepare(parts, base.input_len, base.horizon, bounds.clone(), norm)
    };
    let joint = train_and_evaluate("joint", base, train_cfg, &prep(modalities)?, Split::Test)?;
    let single = modalities
        .iter()
        .map(|part| {
            let data = prep(std::slice::from_ref(part))?;
            let cfg = ModelConfig {
                top_u: base.top_u.min(part.0.node_count()),
                ..base.clone()
            };
            train_and_evaluate(&part.0.name, &cfg, train_cfg, &data, Split::Test)
        })
        .collect::<Result<_>>()?;
    Ok(Comparison { joint, single })
}

/// Top-U survivors by (target, source) modality, summed over ST-layers and
/// samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CensusReport {
    pub names: Vec<String>,
    /// `counts[target][source]`.
    pub counts: Vec<Vec<u64>>,
    pub samples: usize,
    pub layers: usize,
}

impl CensusReport {
    /// Percentage of each source modality among a target's survivors.
    pub fn proportions(&self, target: usize) -> Vec<f64> {
        let total: u64 = self.counts[target].iter().sum();
        self.counts[target]
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
            .collect()
    }

    pub fn intra(&self) -> u64 {
        (0..self.names.len()).map(|m| self.counts[m][m]).sum()
    }

    pub fn cross(&self) -> u64 {
        let total: u64 = self.counts.iter().flatten().sum();
        total - self.intra()
    }

    /// CSV with columns `target, source, count, percent`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Config(format!("writing census: {e}"));
        out.write_record(["target", "source", "count", "percent"]).map_err(err)?;
        for (t, target) in self.names.iter().enumerate() {
            let pct = self.proportions(t);
            for (s, source) in self.names.iter().enumerate() {
                out.write_record([
                    target.clone(),
                    source.clone(),
                    self.counts[t][s].to_string(),
                    format!("{:.4}", pct[s]),
                ])
                .map_err(err)?;
            }
        }
        out.flush().map_err(|e| Error::Config(format!("writing census: {e}")))
    }
}

/// Counts which modality each retained attention entry draws from, over
/// every window of `split`.
pub fn attention_census(model: &Model, data: &Dataset, split: Split) -> Result<CensusReport> {
    super::run::check_compatible(model, data)?;
    if model.config.ablation.no_sa {
        return Err(Error::Config("attention census needs the sparse attention branch".into()));
    }
    let m = data.graph.modality_count();
    let mut counts = vec![vec![0u64; m]; m];
    let samples: Vec<usize> = (0..data.windows.len(split)).collect();
    for chunk in samples.chunks(64) {
        let (x, _) = data.windows.batch(split, chunk)?;
        let (_, states) = model.predict_with_attention(&x, &data.graph)?;
        for st in &states {
            let c = survivor_counts(&st.survivors, &data.graph);
            for (row, add) in counts.iter_mut().zip(c) {
                for (a, b) in row.iter_mut().zip(add) {
                    *a += b;
                }
            }
        }
    }
    Ok(CensusReport {
        names: data.graph.names.clone(),
        counts,
        samples: samples.len(),
        layers: model.config.st_layers,
    })
}
