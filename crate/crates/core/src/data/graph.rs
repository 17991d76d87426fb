use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Square 0/1 adjacency matrix with self-loops on the diagonal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    data: Vec<u8>,
}

impl Adjacency {
    /// Validates a row-major `n × n` 0/1 matrix and sets every diagonal
    /// entry to 1.
    pub fn new(n: usize, mut data: Vec<u8>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("adjacency with zero nodes".into()));
        }
        if data.len() != n * n {
            return Err(Error::Config(format!(
                "adjacency is not square: {} entries for {n} nodes",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::Config(format!(
                "adjacency entry ({}, {}) = {} is not binary",
                pos / n,
                pos % n,
                data[pos]
            )));
        }
        for i in 0..n {
            data[i * n + i] = 1;
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Config("adjacency rows are not square".into()));
        }
        Self::new(n, rows.concat())
    }

    /// Self-loops only.
    pub fn identity(n: usize) -> Self {
        Self::new(n, vec![0; n * n]).expect("valid identity")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n + j] == 1
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    /// Nonzero entries off the diagonal (directed count).
    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.get(i, j))
            .count()
    }

    /// Row mask as `bool`s, row-major.
    pub fn mask(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v == 1).collect()
    }

    /// 0/1 matrix as a tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.n, self.n], self.data.iter().map(|&v| f64::from(v)).collect())
            .expect("square")
    }

    /// Each row divided by its degree (self-loop included).
    pub fn row_normalized(&self) -> Tensor {
        let mut t = self.to_tensor();
        for row in t.data_mut().chunks_mut(self.n) {
            let deg: f64 = row.iter().sum();
            for v in row {
                *v /= deg;
            }
        }
        t
    }
}

/// 4-neighbourhood adjacency over a `rows × cols` grid, node index
/// `r * cols + c`, with self-loops.
pub fn grid_adjacency(rows: usize, cols: usize) -> Adjacency {
    assert!(rows >= 1 && cols >= 1, "grid must be at least 1x1");
    let n = rows * cols;
    let mut data = vec![0u8; n * n];
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if r + 1 < rows {
                let j = i + cols;
                data[i * n + j] = 1;
                data[j * n + i] = 1;
            }
            if c + 1 < cols {
                let j = i + 1;
                data[i * n + j] = 1;
                data[j * n + i] = 1;
            }
        }
    }
    Adjacency::new(n, data).expect("grid adjacency is valid")
}

/// One transport mode: its node set, adjacency and feature count.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalitySpec {
    pub name: String,
    pub feature_count: usize,
    pub adjacency: Adjacency,
}

impl ModalitySpec {
    pub fn new(name: impl Into<String>, feature_count: usize, adjacency: Adjacency) -> Result<Self> {
        if feature_count == 0 {
            return Err(Error::Config("feature_count must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            feature_count,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.node_count()
    }
}

/// Block-diagonal joint graph over every modality's nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalGraph {
    pub adjacency: Adjacency,
    pub names: Vec<String>,
    /// First joint node index of each modality.
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl MultimodalGraph {
    pub fn node_count(&self) -> usize {
        self.adjacency.node_count()
    }

    pub fn modality_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn range(&self, m: usize) -> std::ops::Range<usize> {
        self.offsets[m]..self.offsets[m] + self.sizes[m]
    }

    pub fn modality_of(&self, node: usize) -> usize {
        self.offsets
            .iter()
            .rposition(|&o| o <= node)
            .expect("node index within graph")
    }

    /// True when no edge joins nodes of different modalities.
    pub fn is_block_diagonal(&self) -> bool {
        let n = self.node_count();
        (0..n).all(|i| {
            let mi = self.modality_of(i);
            (0..n).all(|j| !self.adjacency.get(i, j) || self.modality_of(j) == mi)
        })
    }
}

/// Places each modality's adjacency on the diagonal of one joint matrix and
/// leaves every cross-modality entry at 0.
pub fn extend_graphs(specs: &[ModalitySpec]) -> Result<MultimodalGraph> {
    if specs.is_empty() {
        return Err(Error::Config("at least one modality is required".into()));
    }
    let f = specs[0].feature_count;
    if let Some(s) = specs.iter().find(|s| s.feature_count != f) {
        return Err(Error::Config(format!(
            "modality `{}` has {} features, expected {f}",
            s.name, s.feature_count
        )));
    }
    let sizes: Vec<usize> = specs.iter().map(ModalitySpec::node_count).collect();
    let total: usize = sizes.iter().sum();
    let mut offsets = Vec::with_capacity(specs.len());
    let mut data = vec![0u8; total * total];
    let mut off = 0;
    for s in specs {
        offsets.push(off);
        let n = s.node_count();
        for i in 0..n {
            let src = &s.adjacency.as_bytes()[i * n..(i + 1) * n];
            data[(off + i) * total + off..(off + i) * total + off + n].copy_from_slice(src);
        }
        off += n;
    }
    Ok(MultimodalGraph {
        adjacency: Adjacency::new(total, data)?,
        names: specs.iter().map(|s| s.name.clone()).collect(),
        offsets,
        sizes,
    })
}
