//! Checkpoint files (`GSAB`): magic, `u32` version, `u64` length of the
//! model configuration as TOML text, the text itself, `u64` total parameter
//! count, then every parameter as `f32` little-endian in census order.

use std::path::Path;

use crate::data::io::{read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::config::ModelConfig;
use super::forward::Model;
use super::params::ModelParams;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GSAB";
const VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let text = model.config.to_toml();
    let count = model.param_count();
    let mut out = Vec::with_capacity(24 + text.len() + 4 * count);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    model.params.visit(|_, t| {
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    });
    out
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { path, buf: bytes, pos: 0 };
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(path, "version", format!("unsupported version {version}")));
    }
    let len = r.u64("config")? as usize;
    let text = std::str::from_utf8(r.take(len, "config")?)
        .map_err(|e| Error::format(path, "config", e.to_string()))?;
    let config: ModelConfig = toml::from_str(text).map_err(|e| Error::format(path, "config", e.to_string()))?;
    config
        .validate()
        .map_err(|e| Error::format(path, "config", e.to_string()))?;
    let mut params = ModelParams::zeros(&config);
    let count = r.u64("param_count")? as usize;
    if count != params.count() {
        return Err(Error::format(
            path,
            "param_count",
            format!("configuration implies {} parameters, file declares {count}", params.count()),
        ));
    }
    let payload = r.take(4 * count, "payload")?;
    r.finish()?;
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    let mut bad = None;
    params.visit_mut(|name, t: &mut Tensor| {
        for v in t.data_mut() {
            *v = values.next().expect("count checked");
            if !v.is_finite() && bad.is_none() {
                bad = Some(name.clone());
            }
        }
    });
    if let Some(name) = bad {
        return Err(Error::format(path, "payload", format!("non-finite value in {name}")));
    }
    Model::from_params(config, params)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    write_file(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    decode_checkpoint(path, &read_file(path)?)
}
