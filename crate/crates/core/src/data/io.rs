//! Binary series and graph files, and the modality manifest.
//!
//! Series (`GSTD`): magic, `u32` version, `u32` rank, `rank × u64` dims, then
//! the `f32` payload, row-major with time outermost. All integers and floats
//! are little-endian.
//!
//! Graph (`GADJ`): magic, `u64` node count `N`, then `N²` bytes of 0/1.
//!
//! Manifest: TOML with one `[[modality]]` table per modality naming its node
//! count, feature names, and series and graph files (relative paths resolve
//! against the manifest's directory).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Adjacency, ModalitySpec, Series};
use crate::error::{Error, Result};

pub const SERIES_MAGIC: &[u8; 4] = b"GSTD";
pub const GRAPH_MAGIC: &[u8; 4] = b"GADJ";
pub const SERIES_VERSION: u32 = 1;

pub(crate) struct Reader<'a> {
    pub(crate) path: &'a Path,
    pub(crate) buf: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.path,
                field,
                format!("truncated: need {n} bytes at offset {}, {} left", self.pos, self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, field: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != want {
            return Err(Error::format(
                self.path,
                "magic",
                format!("expected {:?}, found {:?}", String::from_utf8_lossy(want), String::from_utf8_lossy(got)),
            ));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.path,
                "payload",
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_series(series: &Series) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 + 4 + 24 + series.data().len() * 4);
    out.extend_from_slice(SERIES_MAGIC);
    out.extend_from_slice(&SERIES_VERSION.to_le_bytes());
    out.extend_from_slice(&3u32.to_le_bytes());
    for d in series.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in series.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_series(path: &Path, bytes: &[u8]) -> Result<Series> {
    let mut r = Reader { path, buf: bytes, pos: 0 };
    r.magic(SERIES_MAGIC)?;
    let version = r.u32("version")?;
    if version != SERIES_VERSION {
        return Err(Error::format(path, "version", format!("unsupported version {version}")));
    }
    let rank = r.u32("rank")?;
    if rank != 3 {
        return Err(Error::format(path, "rank", format!("expected 3 (steps, nodes, features), got {rank}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = usize::try_from(r.u64("dims")?).map_err(|_| Error::format(path, "dims", "dimension overflows usize"))?;
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(path, "dims", "dimension product overflows"))?;
    let payload_len = bytes.len().saturating_sub(r.pos);
    if payload_len != count * 4 {
        return Err(Error::format(
            path,
            "payload",
            format!("dims {dims:?} need {} bytes, found {payload_len}", count * 4),
        ));
    }
    let payload = r.take(count * 4, "payload")?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    r.finish()?;
    Series::new(dims[0], dims[1], dims[2], data).map_err(|e| Error::format(path, "dims", e.to_string()))
}

pub fn save_series(series: &Series, path: &Path) -> Result<()> {
    write_file(path, &encode_series(series))
}

pub fn load_series(path: &Path) -> Result<Series> {
    decode_series(path, &read_file(path)?)
}

pub fn encode_graph(adj: &Adjacency) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + adj.as_bytes().len());
    out.extend_from_slice(GRAPH_MAGIC);
    out.extend_from_slice(&(adj.node_count() as u64).to_le_bytes());
    out.extend_from_slice(adj.as_bytes());
    out
}

pub fn decode_graph(path: &Path, bytes: &[u8]) -> Result<Adjacency> {
    let mut r = Reader { path, buf: bytes, pos: 0 };
    r.magic(GRAPH_MAGIC)?;
    let n = usize::try_from(r.u64("node_count")?).map_err(|_| Error::format(path, "node_count", "overflow"))?;
    let nn = n
        .checked_mul(n)
        .ok_or_else(|| Error::format(path, "node_count", "overflow"))?;
    let entries = r.take(nn, "entries")?.to_vec();
    r.finish()?;
    Adjacency::new(n, entries).map_err(|e| Error::format(path, "entries", e.to_string()))
}

pub fn save_graph(adj: &Adjacency, path: &Path) -> Result<()> {
    write_file(path, &encode_graph(adj))
}

pub fn load_graph(path: &Path) -> Result<Adjacency> {
    decode_graph(path, &read_file(path)?)
}

/// One `[[modality]]` entry of a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub node_count: usize,
    pub features: Vec<String>,
    pub series: PathBuf,
    pub graph: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(rename = "modality")]
    pub modalities: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, "manifest", e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::format(path, "manifest", e.to_string()))?;
        write_file(path, text.as_bytes())
    }

    /// Loads and validates every modality. Relative file paths resolve
    /// against `base`.
    pub fn load(&self, base: &Path) -> Result<Vec<(ModalitySpec, Series)>> {
        if self.modalities.is_empty() {
            return Err(Error::Config("manifest lists no modalities".into()));
        }
        self.modalities
            .iter()
            .map(|m| {
                let series_path = base.join(&m.series);
                let graph_path = base.join(&m.graph);
                let series = load_series(&series_path)?;
                let adj = load_graph(&graph_path)?;
                if adj.node_count() != m.node_count || series.nodes() != m.node_count {
                    return Err(Error::format(
                        &series_path,
                        "node_count",
                        format!(
                            "manifest says {} nodes, series has {}, graph has {}",
                            m.node_count,
                            series.nodes(),
                            adj.node_count()
                        ),
                    ));
                }
                if series.features() != m.features.len() {
                    return Err(Error::format(
                        &series_path,
                        "features",
                        format!("manifest lists {} features, series has {}", m.features.len(), series.features()),
                    ));
                }
                Ok((ModalitySpec::new(m.name.clone(), m.features.len(), adj)?, series))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::grid_adjacency;

    fn sample() -> Series {
        Series::new(3, 2, 2, (0..12).map(|i| i as f32 * 0.37 - 1.0).collect()).unwrap()
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.gstd");
        let s = sample();
        save_series(&s, &p).unwrap();
        assert_eq!(load_series(&p).unwrap(), s);
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"GSTD");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 3 * 8 + 12 * 4);
    }

    #[test]
    fn dims_payload_mismatch_is_reported() {
        let mut bytes = encode_series(&sample());
        // claim 4 steps instead of 3
        bytes[12..20].copy_from_slice(&4u64.to_le_bytes());
        let err = decode_series(Path::new("x"), &bytes).unwrap_err();
        assert!(matches!(err, Error::Format { field: "payload", .. }), "{err}");

        let bytes = encode_series(&sample());
        let err = decode_series(Path::new("x"), &bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { field: "payload", .. }), "{err}");
    }

    #[test]
    fn bad_magic_is_reported() {
        let mut bytes = encode_series(&sample());
        bytes[0] = b'X';
        let err = decode_series(Path::new("x"), &bytes).unwrap_err();
        assert!(matches!(err, Error::Format { field: "magic", .. }));
        let err = decode_series(Path::new("x"), b"GS").unwrap_err();
        assert!(matches!(err, Error::Format { field: "magic", .. }));
    }

    #[test]
    fn graph_round_trip_and_truncation() {
        let a = grid_adjacency(3, 2);
        let bytes = encode_graph(&a);
        assert_eq!(bytes.len(), 12 + 36);
        assert_eq!(decode_graph(Path::new("g"), &bytes).unwrap(), a);
        let err = decode_graph(Path::new("g"), &bytes[..20]).unwrap_err();
        assert!(matches!(err, Error::Format { field: "entries", .. }));
    }

    #[test]
    fn manifest_round_trip_and_unknown_keys() {
        let m = Manifest {
            modalities: vec![ManifestEntry {
                name: "taxi".into(),
                node_count: 4,
                features: vec!["flow".into()],
                series: "taxi.gstd".into(),
                graph: "taxi.gadj".into(),
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.toml");
        m.write(&p).unwrap();
        assert_eq!(Manifest::read(&p).unwrap(), m);
        fs::write(&p, "[[modality]]\nname='a'\nnode_count=1\nfeatures=[]\nseries='a'\ngraph='b'\ncolour=1\n").unwrap();
        assert!(Manifest::read(&p).is_err());
    }
}
