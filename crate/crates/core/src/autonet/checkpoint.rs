//! On-disk checkpoints: a JSON manifest next to a raw tensor blob.
//!
//! The blob is a concatenation of little-endian IEEE-754 doubles; the manifest records
//! each tensor's name, shape and byte offset. Boolean masks are stored as `0.0`/`1.0`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::lora::{LoraNet, LoraSvdAdapter};
use super::mlp::{Activation, MlpParams};
use crate::error::{Error, Result};

pub const FORMAT: &str = "sublora-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub adapted_layers: Vec<usize>,
    pub ranks: Vec<usize>,
    pub seed: u64,
    /// Free-form training record (losses, epochs, problem).
    #[serde(default)]
    pub metadata: serde_json::Value,
    /// Blob file name, relative to the manifest's directory.
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: LoraNet,
    pub seed: u64,
    pub metadata: serde_json::Value,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

struct BlobWriter {
    bytes: Vec<u8>,
    entries: Vec<TensorEntry>,
}

impl BlobWriter {
    fn push<'a>(&mut self, name: String, shape: Vec<usize>, data: impl Iterator<Item = &'a f64>) {
        self.entries.push(TensorEntry { name, shape, offset: self.bytes.len() as u64 });
        for v in data {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
}

impl Checkpoint {
    /// Writes `path` (manifest) and its sibling `.bin` blob.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BlobWriter { bytes: Vec::new(), entries: Vec::new() };
        let base = &self.net.base;
        for (l, (wt, b)) in base.weights.iter().zip(&base.biases).enumerate() {
            w.push(format!("layer{l}.weight"), wt.shape().to_vec(), wt.iter());
            w.push(format!("layer{l}.bias"), vec![b.len()], b.iter());
        }
        for a in &self.net.adapters {
            let l = a.layer;
            w.push(format!("adapter{l}.u"), a.u.shape().to_vec(), a.u.iter());
            w.push(format!("adapter{l}.v"), a.v.shape().to_vec(), a.v.iter());
            w.push(format!("adapter{l}.sigma"), vec![a.rank()], a.sigma.iter());
            let mask: Vec<f64> = a.active.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
            w.push(format!("adapter{l}.active"), vec![a.rank()], mask.iter());
        }
        let blob = blob_path(path);
        let manifest = Manifest {
            format: FORMAT.into(),
            version: VERSION,
            widths: base.widths.clone(),
            activation: base.activation,
            adapted_layers: self.net.adapters.iter().map(|a| a.layer).collect(),
            ranks: self.net.adapters.iter().map(|a| a.rank()).collect(),
            seed: self.seed,
            metadata: self.metadata.clone(),
            blob: blob.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string(),
            tensors: w.entries,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&blob, &w.bytes).map_err(|e| Error::io(&blob, e))?;
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != FORMAT || manifest.version != VERSION {
            return Err(Error::Usage(format!(
                "{}: unsupported checkpoint format {} v{}",
                path.display(),
                manifest.format,
                manifest.version
            )));
        }
        let blob = path.with_file_name(&manifest.blob);
        let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
        let tensor = |name: &str| -> Result<(Vec<usize>, Vec<f64>)> {
            let entry = manifest
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Usage(format!("checkpoint is missing tensor {name}")))?;
            let len: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start + 8 * len;
            let raw = bytes
                .get(start..end)
                .ok_or_else(|| Error::Usage(format!("tensor {name} runs past the end of the blob")))?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            Ok((entry.shape.clone(), data))
        };
        let matrix = |name: &str| -> Result<Array2<f64>> {
            let (shape, data) = tensor(name)?;
            match shape[..] {
                [r, c] => Array2::from_shape_vec((r, c), data).map_err(|e| Error::Usage(e.to_string())),
                _ => Err(Error::Usage(format!("tensor {name} is not a matrix"))),
            }
        };
        let vector = |name: &str| -> Result<Array1<f64>> { Ok(Array1::from(tensor(name)?.1)) };

        let layers = manifest.widths.len().saturating_sub(1);
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            weights.push(matrix(&format!("layer{l}.weight"))?);
            biases.push(vector(&format!("layer{l}.bias"))?);
        }
        let mut base = MlpParams::from_layers(weights, biases)?;
        base.activation = manifest.activation;
        if base.widths != manifest.widths {
            return Err(Error::Usage("checkpoint widths disagree with its tensors".into()));
        }
        let mut adapters = Vec::new();
        for &l in &manifest.adapted_layers {
            adapters.push(LoraSvdAdapter {
                layer: l,
                u: matrix(&format!("adapter{l}.u"))?,
                v: matrix(&format!("adapter{l}.v"))?,
                sigma: vector(&format!("adapter{l}.sigma"))?,
                active: vector(&format!("adapter{l}.active"))?.iter().map(|&m| m != 0.0).collect(),
            });
        }
        Ok(Self { net: LoraNet::new(base, adapters)?, seed: manifest.seed, metadata: manifest.metadata })
    }
}
