//! Checkpoint file format.
//!
//! ```text
//! magic   b"RFIDLAB1"
//! u32 LE  header length
//! header  UTF-8 JSON: format version, kind, architecture descriptor,
//!         provenance (training kind, κ, epochs, seed, recorded metrics)
//! payload raw little-endian f32 in descriptor order
//! ```
//! Round trips are byte-identical: the header is re-serialized from the same
//! structs with a stable field order.

use super::{MiniEmbedder, MiniStyleGen};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RFIDLAB1";
const FORMAT_VERSION: u32 = 1;

/// How the checkpointed model was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingKind {
    Nominal,
    Adversarial,
    Gan,
}

/// Training provenance carried by every checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub training: TrainingKind,
    /// L2 adversarial budget used in training; 0 for nominal models.
    pub kappa: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub clean_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub robust_accuracy: Option<f64>,
    /// FID of 4096 generated vs 4096 real images, recorded after GAN training.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fid_vs_real: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mode_collapse_warning: Option<bool>,
}

impl Provenance {
    pub fn untrained(seed: u64) -> Self {
        Provenance {
            training: TrainingKind::Nominal,
            kappa: 0.0,
            epochs: 0,
            seed,
            clean_accuracy: None,
            robust_accuracy: None,
            fid_vs_real: None,
            mode_collapse_warning: None,
        }
    }

    pub fn is_robust(&self) -> bool {
        self.training == TrainingKind::Adversarial && self.kappa > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Embedder,
    Generator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorDescriptor {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: ModelKind,
    architecture: Vec<TensorDescriptor>,
    provenance: Provenance,
}

/// Parsed checkpoint: descriptor + parameter tensors in descriptor order.
#[derive(Debug, Clone)]
pub struct ModelCheckpoint {
    pub kind: ModelKind,
    pub provenance: Provenance,
    pub entries: Vec<(String, Tensor)>,
}

impl ModelCheckpoint {
    pub fn from_embedder(model: &MiniEmbedder) -> Self {
        ModelCheckpoint {
            kind: ModelKind::Embedder,
            provenance: model.provenance.clone(),
            entries: model
                .named_params()
                .into_iter()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        }
    }

    pub fn from_generator(model: &MiniStyleGen) -> Self {
        ModelCheckpoint {
            kind: ModelKind::Generator,
            provenance: model.provenance.clone(),
            entries: model
                .named_params()
                .into_iter()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        }
    }

    fn restore_into(&self, expected: &[(String, Vec<usize>)], slots: Vec<&mut Tensor>) -> Result<()> {
        if self.entries.len() != expected.len() {
            return Err(Error::CheckpointHeader(format!(
                "expected {} tensors, checkpoint has {}",
                expected.len(),
                self.entries.len()
            )));
        }
        for (((name, shape), (got_name, got)), slot) in expected.iter().zip(&self.entries).zip(slots) {
            if name != got_name {
                return Err(Error::CheckpointHeader(format!(
                    "descriptor entry `{got_name}` where `{name}` was expected"
                )));
            }
            if shape != got.shape() {
                return Err(Error::CheckpointHeader(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    shape
                )));
            }
            *slot = got.clone();
        }
        Ok(())
    }

    pub fn to_embedder(&self) -> Result<MiniEmbedder> {
        if self.kind != ModelKind::Embedder {
            return Err(Error::CheckpointHeader("checkpoint does not hold an embedder".into()));
        }
        let mut model = MiniEmbedder::zeros();
        let expected: Vec<(String, Vec<usize>)> = model
            .named_params()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect();
        self.restore_into(&expected, model.params_mut())?;
        model.provenance = self.provenance.clone();
        Ok(model)
    }

    pub fn to_generator(&self) -> Result<MiniStyleGen> {
        if self.kind != ModelKind::Generator {
            return Err(Error::CheckpointHeader("checkpoint does not hold a generator".into()));
        }
        let mut model = MiniStyleGen::init(0);
        let expected: Vec<(String, Vec<usize>)> = model
            .named_params()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect();
        self.restore_into(&expected, model.params_mut())?;
        model.provenance = self.provenance.clone();
        Ok(model)
    }

    fn encode(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            architecture: self
                .entries
                .iter()
                .map(|(n, t)| TensorDescriptor { name: n.clone(), shape: t.shape().to_vec() })
                .collect(),
            provenance: self.provenance.clone(),
        };
        let header_json = serde_json::to_vec(&header)
            .map_err(|e| Error::CheckpointHeader(e.to_string()))?;
        let payload_len: usize = self.entries.iter().map(|(_, t)| t.numel()).sum();
        let mut out = Vec::with_capacity(12 + header_json.len() + 4 * payload_len);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        for (_, t) in &self.entries {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::decode(&bytes)
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::CheckpointTruncated);
        }
        if &bytes[0..8] != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointBadMagic);
        }
        if bytes.len() < 12 {
            return Err(Error::CheckpointTruncated);
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12 + header_len;
        if bytes.len() < header_end {
            return Err(Error::CheckpointTruncated);
        }
        let header: Header = serde_json::from_slice(&bytes[12..header_end])
            .map_err(|e| Error::CheckpointHeader(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::CheckpointBadVersion(header.format_version));
        }
        let declared: usize = header.architecture.iter().map(|d| d.shape.iter().product::<usize>()).sum();
        let payload = &bytes[header_end..];
        if payload.len() % 4 != 0 {
            return Err(Error::CheckpointTruncated);
        }
        let got = payload.len() / 4;
        if got != declared {
            // distinguish a short file from a wrong descriptor
            if got < declared {
                return Err(Error::CheckpointTruncated);
            }
            return Err(Error::CheckpointPayloadMismatch { expected: declared, got });
        }
        let mut entries = Vec::with_capacity(header.architecture.len());
        let mut offset = 0usize;
        for d in &header.architecture {
            let numel: usize = d.shape.iter().product();
            let data: Vec<f32> = payload[offset * 4..(offset + numel) * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            entries.push((d.name.clone(), Tensor::new(d.shape.clone(), data)?));
            offset += numel;
        }
        Ok(ModelCheckpoint { kind: header.kind, provenance: header.provenance, entries })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> Result<String> {
        let bytes = self.encode()?;
        let hash = Sha256::digest(&bytes);
        Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn embedder_round_trip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut model = MiniEmbedder::init(42);
        model.provenance.epochs = 3;
        model.provenance.clean_accuracy = Some(0.91);
        ModelCheckpoint::from_embedder(&model).save(&path).unwrap();
        let bytes1 = fs::read(&path).unwrap();

        let loaded = ModelCheckpoint::load(&path).unwrap();
        let back = loaded.to_embedder().unwrap();
        for ((_, a), (_, b)) in model.named_params().iter().zip(back.named_params().iter()) {
            assert_eq!(a.data(), b.data());
        }
        assert_eq!(back.provenance, model.provenance);

        // save → load → save is byte-identical
        let path2 = dir.path().join("m2.ckpt");
        loaded.save(&path2).unwrap();
        assert_eq!(fs::read(&path2).unwrap(), bytes1);
    }

    #[test]
    fn generator_checkpoint_declares_w_bar() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.ckpt");
        let mut g = MiniStyleGen::init(3);
        g.compute_w_bar(16, 5).unwrap();
        ModelCheckpoint::from_generator(&g).save(&path).unwrap();
        let loaded = ModelCheckpoint::load(&path).unwrap();
        let entry = loaded.entries.iter().find(|(n, _)| n == "w_bar").expect("w_bar entry");
        assert_eq!(entry.1.shape(), &[super::super::W_DIM]);
        assert_eq!(entry.1, g.w_bar);
    }

    #[test]
    fn robust_checkpoint_exposes_kappa() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("r.ckpt");
        let mut model = MiniEmbedder::init(1);
        model.provenance.training = TrainingKind::Adversarial;
        model.provenance.kappa = 128.0 / 7.0;
        ModelCheckpoint::from_embedder(&model).save(&path).unwrap();
        let loaded = ModelCheckpoint::load(&path).unwrap();
        assert!(loaded.provenance.is_robust());
        assert!((loaded.provenance.kappa - 128.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        let model = MiniEmbedder::init(1);
        ModelCheckpoint::from_embedder(&model).save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(ModelCheckpoint::load(&path).unwrap_err(), Error::CheckpointBadMagic));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        let model = MiniEmbedder::init(1);
        ModelCheckpoint::from_embedder(&model).save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(ModelCheckpoint::load(&path).unwrap_err(), Error::CheckpointTruncated));
    }

    #[test]
    fn payload_descriptor_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        let model = MiniEmbedder::init(1);
        ModelCheckpoint::from_embedder(&model).save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.extend_from_slice(&[0u8; 8]); // two extra floats beyond the descriptor
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            ModelCheckpoint::load(&path).unwrap_err(),
            Error::CheckpointPayloadMismatch { .. }
        ));
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let model = MiniEmbedder::init(5);
        let c = ModelCheckpoint::from_embedder(&model);
        assert_eq!(c.digest().unwrap(), c.digest().unwrap());
        let other = ModelCheckpoint::from_embedder(&MiniEmbedder::init(6));
        assert_ne!(c.digest().unwrap(), other.digest().unwrap());
    }
}
