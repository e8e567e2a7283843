//! Model checkpoints: a magic line, a one-line JSON header, then the
//! parameters as little-endian `f64`.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use bnsurrogate_core::dataset::EncodingLayout;
use bnsurrogate_core::nn::{Model, TrainingMetadata};
use bnsurrogate_core::Network;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8] = b"BNSURROGATE-CHECKPOINT 1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub network: String,
    pub cardinalities: Vec<usize>,
    pub layer_sizes: Vec<usize>,
    pub use_bias: bool,
    pub parameter_count: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    #[serde(default)]
    pub config_fingerprint: String,
}

pub fn to_bytes(model: &Model, config_fingerprint: &str) -> Vec<u8> {
    let layout = model.layout();
    let header = Header {
        network: layout.network_name().to_string(),
        cardinalities: layout.cardinalities().to_vec(),
        layer_sizes: model.layer_sizes().to_vec(),
        use_bias: model.use_bias(),
        parameter_count: model.params().len(),
        epochs_run: model.metadata.epochs_run,
        best_epoch: model.metadata.best_epoch,
        best_validation_loss: model.metadata.best_validation_loss,
        config_fingerprint: config_fingerprint.to_string(),
    };
    let mut out = MAGIC.to_vec();
    serde_json::to_writer(&mut out, &header).expect("header serializes");
    out.push(b'\n');
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Model, Header)> {
    let rest = bytes.strip_prefix(MAGIC).context("not a checkpoint file")?;
    let newline = rest
        .iter()
        .position(|&b| b == b'\n')
        .context("truncated checkpoint header")?;
    let header: Header = serde_json::from_slice(&rest[..newline]).context("bad checkpoint header")?;
    let body = &rest[newline + 1..];
    ensure!(
        body.len() == header.parameter_count * 8,
        "checkpoint holds {} bytes of parameters, header expects {}",
        body.len(),
        header.parameter_count * 8
    );
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let layout = EncodingLayout::new(header.network.clone(), header.cardinalities.clone());
    let metadata = TrainingMetadata {
        epochs_run: header.epochs_run,
        best_epoch: header.best_epoch,
        best_validation_loss: header.best_validation_loss,
    };
    let model = Model::from_parts(layout, header.layer_sizes.clone(), header.use_bias, params, metadata)?;
    Ok((model, header))
}

pub fn save(path: &Path, model: &Model, config_fingerprint: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_bytes(model, config_fingerprint)).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> Result<(Model, Header)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))
}

/// Loads a checkpoint and checks it was trained for `net`.
pub fn load_for(path: &Path, net: &Network) -> Result<Model> {
    let (model, _) = load(path)?;
    if !model.layout().matches(net) {
        bail!(
            "checkpoint was trained for network `{}` with a different layout than `{}`",
            model.layout().network_name(),
            net.name()
        );
    }
    Ok(model)
}
