use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::net::{ChordModel, ModelConfig};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CHECKPOINT_FORMAT: &str = "chordalign-checkpoint/1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Epoch whose weights were kept.
    pub epoch: usize,
    pub stop_epoch: usize,
    pub seed: u64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
    pub meta: TrainingMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    /// Byte offset into the blob.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    config: ModelConfig,
    blob: String,
    blob_sha256: String,
    tensors: Vec<TensorEntry>,
    meta: TrainingMeta,
}

/// Blob file stored next to a manifest: `model.json` -> `model.bin`.
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn from_model(model: &ChordModel, meta: TrainingMeta) -> Self {
        let tensors = model
            .params
            .names
            .iter()
            .zip(&model.params.values)
            .map(|(name, v)| NamedTensor {
                name: name.clone(),
                shape: [v.nrows(), v.ncols()],
                data: v.iter().map(|&x| x as f32).collect(),
            })
            .collect();
        Checkpoint {
            config: model.config.clone(),
            tensors,
            meta,
        }
    }

    pub fn to_model(&self) -> Result<ChordModel> {
        let mut model = ChordModel::new(self.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        if model.params.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model needs {}",
                self.tensors.len(),
                model.params.len()
            )));
        }
        for t in &self.tensors {
            let idx = model
                .params
                .index_of(&t.name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {:?}", t.name)))?;
            let want = model.params.values[idx].dim();
            if (t.shape[0], t.shape[1]) != want || t.data.len() != want.0 * want.1 {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?} has shape {:?}, expected {:?}",
                    t.name, t.shape, want
                )));
            }
            model.params.values[idx] =
                Array2::from_shape_vec(want, t.data.iter().map(|&v| f64::from(v)).collect())
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(model)
    }

    fn blob_bytes(&self) -> (Vec<u8>, Vec<TensorEntry>) {
        let mut blob = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            entries.push(TensorEntry {
                name: t.name.clone(),
                shape: t.shape,
                offset: blob.len(),
            });
            for v in &t.data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        (blob, entries)
    }

    /// Write the manifest to `path` and the tensor blob beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (blob, tensors) = self.blob_bytes();
        let blob_file = blob_path(path);
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            blob: blob_file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            blob_sha256: hex(&Sha256::digest(&blob)),
            tensors,
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::json(path, e))?;
        write_atomic(&blob_file, &blob)?;
        write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| Error::json(path, e))?;
        if manifest.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format tag {:?}", manifest.format)));
        }
        let blob_file = path.with_file_name(&manifest.blob);
        let blob = std::fs::read(&blob_file).map_err(|e| Error::io(&blob_file, e))?;
        if hex(&Sha256::digest(&blob)) != manifest.blob_sha256 {
            return Err(Error::Checkpoint(format!("{} does not match its checksum", blob_file.display())));
        }
        let tensors = manifest
            .tensors
            .into_iter()
            .map(|e| {
                let n = e.shape[0] * e.shape[1];
                let bytes = blob
                    .get(e.offset..e.offset + 4 * n)
                    .ok_or_else(|| Error::Checkpoint(format!("tensor {:?} runs past the blob", e.name)))?;
                let data = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                Ok(NamedTensor {
                    name: e.name,
                    shape: e.shape,
                    data,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ckpt = Checkpoint {
            config: manifest.config,
            tensors,
            meta: manifest.meta,
        };
        ckpt.to_model()?;
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = ChordModel::new(ModelConfig::toy(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let ck = Checkpoint::from_model(
            &model,
            TrainingMeta {
                epoch: 3,
                stop_epoch: 23,
                seed: 4,
                train_loss: vec![2.0, 1.0],
                val_loss: vec![2.5, 1.5],
            },
        );
        ck.save(&path).unwrap();
        assert!(blob_path(&path).exists());
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn corrupt_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = ChordModel::new(ModelConfig::toy(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        Checkpoint::from_model(&model, TrainingMeta::default()).save(&path).unwrap();
        let mut blob = std::fs::read(blob_path(&path)).unwrap();
        blob[10] ^= 0xff;
        std::fs::write(blob_path(&path), blob).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::load(&dir.path().join("missing.json")).is_err());
    }
}
