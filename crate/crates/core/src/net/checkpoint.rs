//! Binary checkpoint files.
//!
//! Byte layout, all integers little-endian:
//!
//! | offset | size | content |
//! |--------|------|---------|
//! | 0      | 4    | magic `PFCK` |
//! | 4      | 4    | format version (`u32`, currently 1) |
//! | 8      | 8    | header length `H` in bytes (`u64`) |
//! | 16     | H    | UTF-8 JSON header ([`CheckpointHeader`]) |
//! | 16 + H | 8 n  | `n = header.n_values` IEEE-754 `f64` values |
//!
//! For models the values are the flat parameter view: per layer the
//! row-major weight matrix then the bias, then the `(a1, a2)` pairs. For
//! analytic solves they are the decision vector `x`.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::{Layer, Model, ModelSpec, ParamStore, Role, Stack};
use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PFCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Model,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerInfo {
    pub name: String,
    pub stack: Stack,
    pub role: Role,
    pub growl: bool,
    pub rows: usize,
    pub cols: usize,
    /// Index of the first weight in the value block.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub kind: CheckpointKind,
    pub n_values: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    /// Row clusters of tied layers, keyed by layer name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub clusters: BTreeMap<String, ClusterAssignment>,
}

pub fn encode(header: &CheckpointHeader, values: &[f64]) -> Result<Vec<u8>> {
    if header.n_values != values.len() {
        return Err(Error::Format(format!(
            "header announces {} values, got {}",
            header.n_values,
            values.len()
        )));
    }
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<f64>)> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16usize.saturating_add(hlen)).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let data = &bytes[16 + hlen..];
    if data.len() != 8 * header.n_values {
        return Err(bad(&format!(
            "expected {} value bytes, found {}",
            8 * header.n_values,
            data.len()
        )));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, values: &[f64]) -> Result<()> {
    std::fs::write(path, encode(header, values)?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<f64>)> {
    decode(&std::fs::read(path)?)
}

/// Header describing `model`, with empty metrics and clusters.
pub fn model_header(model: &Model) -> CheckpointHeader {
    let mut offset = 0;
    let layers = model
        .params
        .layers
        .iter()
        .map(|l| {
            let info = LayerInfo {
                name: l.name.clone(),
                stack: l.stack,
                role: l.role,
                growl: l.growl,
                rows: l.weight.nrows(),
                cols: l.weight.ncols(),
                offset,
            };
            offset += l.n_params();
            info
        })
        .collect();
    CheckpointHeader {
        kind: CheckpointKind::Model,
        n_values: model.params.flat_len(),
        spec: Some(model.spec.clone()),
        layers,
        problem: None,
        t: None,
        metrics: BTreeMap::new(),
        clusters: BTreeMap::new(),
    }
}

/// Rebuilds a model from a decoded checkpoint.
pub fn model_from_checkpoint(header: &CheckpointHeader, values: &[f64]) -> Result<Model> {
    let spec = match (&header.kind, &header.spec) {
        (CheckpointKind::Model, Some(s)) => s,
        _ => return Err(Error::Format("checkpoint does not hold a model".into())),
    };
    let mut model = Model::zeros(spec)?;
    if header.layers.len() != model.params.layers.len() {
        return Err(Error::Format("layer table does not match the spec".into()));
    }
    let layers: Vec<Layer> = model
        .params
        .layers
        .iter()
        .zip(&header.layers)
        .map(|(l, info)| Layer {
            name: info.name.clone(),
            stack: info.stack,
            role: info.role,
            growl: info.growl,
            weight: Array2::zeros((info.rows, info.cols)),
            bias: Array1::zeros(l.bias.len()),
        })
        .collect();
    let mut params = ParamStore {
        layers,
        alphas: model.params.alphas.clone(),
    };
    params.set_flat(values)?;
    model = Model::from_params(spec, params)?;
    Ok(model)
}

pub fn save_model(
    path: &Path,
    model: &Model,
    metrics: BTreeMap<String, f64>,
    clusters: BTreeMap<String, ClusterAssignment>,
) -> Result<()> {
    let mut header = model_header(model);
    header.metrics = metrics;
    header.clusters = clusters;
    write_checkpoint(path, &header, &model.params.to_flat())
}

pub fn load_model(path: &Path) -> Result<(Model, CheckpointHeader)> {
    let (header, values) = read_checkpoint(path)?;
    let model = model_from_checkpoint(&header, &values)?;
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trip() {
        let spec = ModelSpec::mdmtn(5, vec![2, 3]);
        let mut m = Model::random(&spec, 4).unwrap();
        m.params.alphas[1] = [0.25, -1.5];
        let mut metrics = BTreeMap::new();
        metrics.insert("SR".into(), 0.125);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pfck");
        save_model(&p, &m, metrics.clone(), BTreeMap::new()).unwrap();
        let (back, header) = load_model(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(header.metrics, metrics);
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"PFCK");
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 16 + hlen + 8 * m.params.flat_len());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        assert!(decode(b"nope").is_err());
        let h = CheckpointHeader {
            kind: CheckpointKind::Analytic,
            n_values: 2,
            spec: None,
            layers: vec![],
            problem: Some("convex2".into()),
            t: Some(0.5),
            metrics: BTreeMap::new(),
            clusters: BTreeMap::new(),
        };
        let mut bytes = encode(&h, &[1.0, 2.0]).unwrap();
        assert_eq!(decode(&bytes).unwrap().1, vec![1.0, 2.0]);
        bytes.pop();
        assert!(decode(&bytes).is_err());
        assert!(encode(&h, &[1.0]).is_err());
    }
}
