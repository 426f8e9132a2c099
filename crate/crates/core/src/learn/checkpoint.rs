//! Checkpoint = JSON manifest plus a little-endian f32 blob holding
//! Q, Q target, V and V target, in that order.

use super::{Checkpoint, Networks, TrainConfig, TrainError};
use crate::mdp::RewardMode;
use crate::model::{ModelShape, ValueModel};
use crate::state::NormStats;
use crate::tiles::CodingConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: u32,
    pub step: usize,
    pub config: TrainConfig,
    pub coding: CodingConfig,
    pub norm: NormStats,
    pub reward_mode: RewardMode,
    pub q_shape: ModelShape,
    pub v_shape: ModelShape,
    /// File name of the parameter blob, relative to the manifest.
    pub blob: String,
    pub blob_bytes: usize,
    pub blob_sha256: String,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn encode(nets: &Networks) -> Vec<u8> {
    [&nets.q, &nets.q_target, &nets.v, &nets.v_target]
        .into_iter()
        .flat_map(|m| m.params())
        .flat_map(f32::to_le_bytes)
        .collect()
}

/// Writes `<path>` (JSON) and `<path>` with a `.bin` extension.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<CheckpointManifest, TrainError> {
    let bytes = encode(&ck.nets);
    let blob = blob_path(path);
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT,
        step: ck.step,
        config: ck.config.clone(),
        coding: ck.coding.clone(),
        norm: ck.norm,
        reward_mode: ck.reward_mode,
        q_shape: ck.nets.q.shape.clone(),
        v_shape: ck.nets.v.shape.clone(),
        blob: blob.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(),
        blob_bytes: bytes.len(),
        blob_sha256: crate::sha256_hex(&bytes),
    };
    std::fs::write(&blob, &bytes)?;
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bad = |m: String| TrainError::Checkpoint(m);
    let manifest: CheckpointManifest = serde_json::from_slice(&std::fs::read(path)?)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unsupported format {}", manifest.format)));
    }
    let blob = path.with_file_name(&manifest.blob);
    let bytes = std::fs::read(&blob)?;
    if bytes.len() != manifest.blob_bytes {
        return Err(bad(format!("blob has {} bytes, manifest says {}", bytes.len(), manifest.blob_bytes)));
    }
    if crate::sha256_hex(&bytes) != manifest.blob_sha256 {
        return Err(bad(format!("checksum mismatch for {}", blob.display())));
    }
    let need = 8 * (manifest.q_shape.num_params() + manifest.v_shape.num_params());
    if bytes.len() != need {
        return Err(bad(format!("blob has {} bytes, shapes need {need}", bytes.len())));
    }
    let floats: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("chunk"))).collect();
    let mut rest = floats.as_slice();
    let mut take = |shape: &ModelShape| -> Result<ValueModel, TrainError> {
        let (head, tail) = rest.split_at(shape.num_params());
        rest = tail;
        let mut m = ValueModel::zeros(shape.clone());
        m.set_params(head)?;
        m.validate()?;
        Ok(m)
    };
    let nets = Networks {
        q: take(&manifest.q_shape)?,
        q_target: take(&manifest.q_shape)?,
        v: take(&manifest.v_shape)?,
        v_target: take(&manifest.v_shape)?,
    };
    Ok(Checkpoint {
        config: manifest.config,
        step: manifest.step,
        coding: manifest.coding,
        norm: manifest.norm,
        reward_mode: manifest.reward_mode,
        nets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::BoundingBox;

    fn checkpoint() -> Checkpoint {
        let bbox = BoundingBox { min_lat: 30.55, max_lat: 30.75, min_lon: 104.0, max_lon: 104.2 };
        let coding = CodingConfig { hash_table_size: 32, embedding_dim: 3, ..CodingConfig::standard(bbox) };
        let mut nets = Networks::init(&coding, [5, 4], 11);
        nets.q.b3[2] = 0.25;
        Checkpoint {
            config: TrainConfig { hidden: [5, 4], ..TrainConfig::default() },
            step: 42,
            coding,
            norm: NormStats { mean: [1.0, 2.0, 3.0, 4.0], std: [2.0; 4] },
            reward_mode: RewardMode::Penalized { alpha: 0.3 },
            nets,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let ck = checkpoint();
        save_checkpoint(&path, &ck).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
    }

    #[test]
    fn detects_tampered_blob() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&path, &checkpoint()).unwrap();
        let blob = path.with_extension("bin");
        let mut bytes = std::fs::read(&blob).unwrap();
        bytes[7] ^= 1;
        std::fs::write(&blob, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(TrainError::Checkpoint(_))));
        bytes.pop();
        std::fs::write(&blob, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
