use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Time-major `[steps, nodes, features]` series of one or more modalities.
///
/// Values are stored at `f32`, the precision of the series file format, so a
/// save/load round trip is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    steps: usize,
    nodes: usize,
    features: usize,
    data: Vec<f32>,
}

impl Series {
    pub fn new(steps: usize, nodes: usize, features: usize, data: Vec<f32>) -> Result<Self> {
        if steps == 0 || nodes == 0 || features == 0 {
            return Err(Error::Config(format!(
                "series dims must be positive, got [{steps}, {nodes}, {features}]"
            )));
        }
        if data.len() != steps * nodes * features {
            return Err(Error::shape(
                "series",
                format!("[{steps}, {nodes}, {features}] vs {} values", data.len()),
            ));
        }
        Ok(Self {
            steps,
            nodes,
            features,
            data,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.steps, self.nodes, self.features]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, t: usize, n: usize, f: usize) -> f32 {
        self.data[(t * self.nodes + n) * self.features + f]
    }

    /// Values of every node and feature of one modality's series, for
    /// statistics.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().map(|&v| f64::from(v))
    }

    /// Restriction to time steps `range`.
    pub fn time_slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.steps {
            return Err(Error::shape("series time slice", format!("{range:?} of {}", self.steps)));
        }
        let w = self.nodes * self.features;
        Self::new(
            range.len(),
            self.nodes,
            self.features,
            self.data[range.start * w..range.end * w].to_vec(),
        )
    }

    /// Restriction to nodes `range`.
    pub fn node_slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.nodes {
            return Err(Error::shape("series node slice", format!("{range:?} of {}", self.nodes)));
        }
        let mut data = Vec::with_capacity(self.steps * range.len() * self.features);
        for t in 0..self.steps {
            let row = (t * self.nodes) * self.features;
            data.extend_from_slice(
                &self.data[row + range.start * self.features..row + range.end * self.features],
            );
        }
        Self::new(self.steps, range.len(), self.features, data)
    }

    /// Joins modality series along the node axis.
    pub fn concat_nodes(parts: &[Series]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("no series to join".into()))?;
        if let Some(p) = parts
            .iter()
            .find(|p| p.steps != first.steps || p.features != first.features)
        {
            return Err(Error::shape(
                "concat_nodes",
                format!("{:?} does not share steps/features with {:?}", p.dims(), first.dims()),
            ));
        }
        let nodes: usize = parts.iter().map(|p| p.nodes).sum();
        let mut data = Vec::with_capacity(first.steps * nodes * first.features);
        for t in 0..first.steps {
            for p in parts {
                let w = p.nodes * p.features;
                data.extend_from_slice(&p.data[t * w..(t + 1) * w]);
            }
        }
        Self::new(first.steps, nodes, first.features, data)
    }

    /// SHA-256 of the dims and little-endian payload, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for d in self.dims() {
            h.update((d as u64).to_le_bytes());
        }
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
