use super::{
    extend_graphs, make_windows, ModalitySpec, MultimodalGraph, NormKind, Normalizer, Series, SplitBounds,
    WindowedDataset,
};
use crate::error::{Error, Result};

/// Everything the model consumes: the joint graph, the normaliser fitted on
/// the training span, and normalised sliding windows.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: MultimodalGraph,
    pub normalizer: Normalizer,
    pub windows: WindowedDataset,
}

impl Dataset {
    /// Joins the modalities in the given order, fits one scaling per modality
    /// on `bounds.train`, and windows the normalised joint series.
    pub fn prepare(
        modalities: &[(ModalitySpec, Series)],
        input_len: usize,
        horizon: usize,
        bounds: SplitBounds,
        norm: NormKind,
    ) -> Result<Self> {
        if modalities.is_empty() {
            return Err(Error::Config("no modalities to prepare".into()));
        }
        let steps = modalities[0].1.steps();
        if let Some((spec, s)) = modalities.iter().find(|(_, s)| s.steps() != steps) {
            return Err(Error::Config(format!(
                "modality `{}` has {} steps, expected {steps}",
                spec.name,
                s.steps()
            )));
        }
        for (spec, s) in modalities {
            if s.nodes() != spec.node_count() || s.features() != spec.feature_count {
                return Err(Error::Config(format!(
                    "modality `{}`: series is {}×{} (nodes×features) but graph/spec say {}×{}",
                    spec.name,
                    s.nodes(),
                    s.features(),
                    spec.node_count(),
                    spec.feature_count
                )));
            }
        }
        if bounds.end() > steps {
            return Err(Error::InsufficientData(format!(
                "split bounds reach step {} but the series has {steps}",
                bounds.end()
            )));
        }
        let specs: Vec<ModalitySpec> = modalities.iter().map(|(m, _)| m.clone()).collect();
        let graph = extend_graphs(&specs)?;
        let train: Vec<Series> = modalities
            .iter()
            .map(|(_, s)| s.time_slice(bounds.train.clone()))
            .collect::<Result<_>>()?;
        let normalizer = Normalizer::fit(norm, &train.iter().collect::<Vec<_>>())?;
        let series: Vec<Series> = modalities.iter().map(|(_, s)| s.clone()).collect();
        let joint = Series::concat_nodes(&series)?;
        let values = normalizer.normalize_joint(&joint, &graph);
        let windows = make_windows(values, joint.dims(), input_len, horizon, bounds)?;
        Ok(Self {
            graph,
            normalizer,
            windows,
        })
    }

    pub fn features(&self) -> usize {
        self.windows.features()
    }
}
