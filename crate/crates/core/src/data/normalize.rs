use serde::{Deserialize, Serialize};

use super::{MultimodalGraph, Series};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `(x − min) / (max − min)`, mapping training data into `[0, 1]`.
    #[default]
    MinMax,
    /// `(x − mean) / std`.
    ZScore,
}

/// Affine map `x' = (x − shift) / scale` for one modality. A zero `scale`
/// marks a constant training series: everything maps to 0 and the inverse
/// returns `shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub shift: f64,
    pub scale: f64,
}

impl Scaling {
    pub fn forward(&self, x: f64) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            (x - self.shift) / self.scale
        }
    }

    pub fn inverse(&self, x: f64) -> f64 {
        if self.scale == 0.0 {
            self.shift
        } else {
            x * self.scale + self.shift
        }
    }
}

/// Per-modality scaling fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub kind: NormKind,
    pub scalings: Vec<Scaling>,
}

impl Normalizer {
    /// Fits one scaling per modality series. Pass training-split series only.
    pub fn fit(kind: NormKind, train: &[&Series]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("normalizer needs at least one modality".into()));
        }
        let scalings = train
            .iter()
            .enumerate()
            .map(|(m, s)| {
                let sc = match kind {
                    NormKind::MinMax => {
                        let (lo, hi) = s
                            .values()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                        Scaling {
                            shift: lo,
                            scale: hi - lo,
                        }
                    }
                    NormKind::ZScore => {
                        let n = s.data().len() as f64;
                        let mean = s.values().sum::<f64>() / n;
                        let var = s.values().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        Scaling {
                            shift: mean,
                            scale: var.sqrt(),
                        }
                    }
                };
                if sc.scale == 0.0 {
                    log::warn!("modality {m}: constant training series, normalising to 0");
                }
                sc
            })
            .collect();
        Ok(Self { kind, scalings })
    }

    pub fn normalize(&self, x: f64, modality: usize) -> f64 {
        self.scalings[modality].forward(x)
    }

    pub fn denormalize(&self, x: f64, modality: usize) -> f64 {
        self.scalings[modality].inverse(x)
    }

    /// Normalises a joint `[T, N_M, F]` series, modality by node block.
    pub fn normalize_joint(&self, series: &Series, graph: &MultimodalGraph) -> Vec<f64> {
        self.map_joint(series.values(), series.nodes(), series.features(), graph, Scaling::forward)
    }

    /// Inverse of [`Normalizer::normalize_joint`] for any flat buffer whose
    /// trailing axes are `[N_M, F]`.
    pub fn denormalize_joint(&self, values: &[f64], features: usize, graph: &MultimodalGraph) -> Vec<f64> {
        self.map_joint(values.iter().copied(), graph.node_count(), features, graph, Scaling::inverse)
    }

    fn map_joint(
        &self,
        values: impl Iterator<Item = f64>,
        nodes: usize,
        features: usize,
        graph: &MultimodalGraph,
        f: fn(&Scaling, f64) -> f64,
    ) -> Vec<f64> {
        let node_mod: Vec<usize> = (0..nodes).map(|n| graph.modality_of(n)).collect();
        values
            .enumerate()
            .map(|(i, v)| f(&self.scalings[node_mod[(i / features) % nodes]], v))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{extend_graphs, Adjacency, ModalitySpec};

    fn series(vals: &[f32]) -> Series {
        Series::new(vals.len(), 1, 1, vals.to_vec()).unwrap()
    }

    #[test]
    fn min_max_midpoint() {
        let s = series(&[0.0, 10.0]);
        let n = Normalizer::fit(NormKind::MinMax, &[&s]).unwrap();
        assert_eq!(n.normalize(5.0, 0), 0.5);
        assert_eq!(n.denormalize(0.5, 0), 5.0);
    }

    #[test]
    fn constant_series_maps_to_zero_and_back_to_constant() {
        let s = series(&[3.0, 3.0, 3.0]);
        let n = Normalizer::fit(NormKind::MinMax, &[&s]).unwrap();
        assert_eq!(n.normalize(3.0, 0), 0.0);
        assert_eq!(n.denormalize(0.0, 0), 3.0);
    }

    #[test]
    fn round_trip_is_exact_per_modality() {
        let a = series(&[0.0, 400.0, 123.0, 77.5]);
        let b = series(&[0.0, 12.0, 3.25, 9.0]);
        for kind in [NormKind::MinMax, NormKind::ZScore] {
            let n = Normalizer::fit(kind, &[&a, &b]).unwrap();
            for (m, s) in [&a, &b].iter().enumerate() {
                for x in s.values() {
                    let back = n.denormalize(n.normalize(x, m), m);
                    assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn joint_normalisation_uses_each_block_statistics() {
        let specs = [
            ModalitySpec::new("a", 1, Adjacency::identity(2)).unwrap(),
            ModalitySpec::new("b", 1, Adjacency::identity(1)).unwrap(),
        ];
        let g = extend_graphs(&specs).unwrap();
        let a = Series::new(2, 2, 1, vec![0.0, 400.0, 200.0, 100.0]).unwrap();
        let b = Series::new(2, 1, 1, vec![0.0, 12.0]).unwrap();
        let joint = Series::concat_nodes(&[a.clone(), b.clone()]).unwrap();
        let n = Normalizer::fit(NormKind::MinMax, &[&a, &b]).unwrap();
        let z = n.normalize_joint(&joint, &g);
        assert_eq!(z, vec![0.0, 1.0, 0.0, 0.5, 0.25, 1.0]);
        let back = n.denormalize_joint(&z, 1, &g);
        let orig: Vec<f64> = joint.values().collect();
        assert_eq!(back, orig);
    }
}
