//! Binary checkpoint format.
//!
//! ```text
//! "BFCK" | u32 version | u32 manifest_len | manifest (JSON)
//! u32 param_count
//! per parameter: u16 name_len | name | u8 rank | u32 dims[rank] | f32 values (all LE)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::midi::EventVocab;
use crate::model::{Model, ModelSpec};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model: ModelSpec,
    pub step: u64,
    pub best_val: Option<f64>,
    pub vocab_fingerprint: u64,
    #[serde(default)]
    pub parameter_names: Vec<String>,
}

impl Manifest {
    pub fn new(model: &Model<f32>, step: u64, best_val: Option<f64>) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            model: model.spec(),
            step,
            best_val: best_val.filter(|v| v.is_finite()),
            vocab_fingerprint: EventVocab.fingerprint(),
            parameter_names: model.params().iter().map(|p| p.name.clone()).collect(),
        }
    }
}

pub fn encode_checkpoint(model: &Model<f32>, manifest: &Manifest) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(manifest).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * model.num_parameters());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params().iter() {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.tensor.rank() as u8);
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(TrainError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model<f32>, Manifest)> {
    let bad = |m: String| TrainError::Checkpoint(m);
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint (missing BFCK magic)".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let len = c.u32()? as usize;
    let manifest: Manifest = serde_json::from_slice(c.take(len)?).map_err(|e| bad(format!("manifest: {e}")))?;
    if manifest.vocab_fingerprint != EventVocab.fingerprint() {
        return Err(bad("checkpoint was trained with a different vocabulary layout".into()));
    }
    let mut model = Model::<f32>::new(&manifest.model).map_err(|e| bad(e.to_string()))?;
    let count = c.u32()? as usize;
    if count != model.params().len() {
        return Err(bad(format!("{count} parameters stored, model has {}", model.params().len())));
    }
    for p in model.params_mut().iter_mut() {
        let name_len = usize::from(c.u16()?);
        let name = std::str::from_utf8(c.take(name_len)?).map_err(|e| bad(e.to_string()))?;
        if name != p.name {
            return Err(bad(format!("expected parameter {}, found {name}", p.name)));
        }
        let rank = usize::from(c.take(1)?[0]);
        let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if shape != p.tensor.shape() {
            return Err(bad(format!("{name}: stored shape {shape:?}, expected {:?}", p.tensor.shape())));
        }
        let values = c
            .take(4 * p.tensor.numel())?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        p.tensor = Tensor::parameter(values, &shape)?;
    }
    if c.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok((model, manifest))
}

pub fn save_checkpoint(path: &Path, model: &Model<f32>, manifest: &Manifest) -> Result<()> {
    let bytes = encode_checkpoint(model, manifest)?;
    std::fs::write(path, bytes).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, Manifest)> {
    let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionMode;
    use crate::model::{LstmConfig, ModelConfig};
    use crate::training::{init_parameters, InitScheme};

    #[test]
    fn round_trip_is_bit_exact_on_forward() {
        let specs = [
            ModelSpec::Transformer(ModelConfig::new(40, 2, 2, 4, 16, 32, AttentionMode::Relative)),
            ModelSpec::Transformer(ModelConfig::new(40, 1, 2, 4, 16, 32, AttentionMode::SlidingWindow).with_window(4)),
            ModelSpec::Lstm(LstmConfig {
                vocab_size: 40,
                embed_dim: 8,
                hidden_dim: 6,
                num_layers: 2,
                dropout_p: 0.0,
            }),
        ];
        let tokens: Vec<usize> = (0..20).map(|i| (i * 7) % 40).collect();
        for spec in specs {
            let mut m = Model::<f32>::new(&spec).unwrap();
            init_parameters(&mut m, InitScheme::XavierSplit, 5);
            let bytes = encode_checkpoint(&m, &Manifest::new(&m, 12, Some(3.5))).unwrap();
            let (back, manifest) = decode_checkpoint(&bytes).unwrap();
            assert_eq!(manifest.step, 12);
            assert_eq!(manifest.model, spec);
            let a = m.forward(&tokens, None).unwrap();
            let b = back.forward(&tokens, None).unwrap();
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let spec = ModelSpec::Transformer(ModelConfig::new(10, 1, 1, 2, 4, 4, AttentionMode::DenseCausal));
        let m = Model::<f32>::new(&spec).unwrap();
        let bytes = encode_checkpoint(&m, &Manifest::new(&m, 0, None)).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_checkpoint(b"XXXX").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
