//! JSON parameter checkpoints: named flat arrays with shapes, a format
//! version and an echo of the configuration that produced them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::Trainable;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Model family, e.g. `"cpac"` or `"vaegan"`.
    pub kind: String,
    pub config: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(kind: &str, config: serde_json::Value) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            config,
            tensors: Vec::new(),
        }
    }

    /// Appends every parameter and buffer of `model` under `prefix`.
    pub fn push_model<M: Trainable + ?Sized>(&mut self, prefix: &str, model: &mut M) -> Result<()> {
        for p in model.params_mut() {
            if p.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{prefix}.{}", p.name)));
            }
            self.tensors.push(Tensor {
                name: format!("{prefix}.{}", p.name),
                shape: p.shape,
                data: p.value.to_vec(),
            });
        }
        for (name, buf) in model.buffers_mut() {
            self.tensors.push(Tensor {
                name: format!("{prefix}.{name}"),
                shape: vec![buf.len()],
                data: buf.clone(),
            });
        }
        Ok(())
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        self.tensors.push(Tensor {
            name: name.to_string(),
            shape,
            data,
        });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    /// Restores every parameter and buffer of `model` from tensors under `prefix`.
    pub fn load_model<M: Trainable + ?Sized>(&self, prefix: &str, model: &mut M) -> Result<()> {
        for p in model.params_mut() {
            let t = self.get(&format!("{prefix}.{}", p.name))?;
            if t.shape != p.shape || t.data.len() != p.value.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, model expects {:?}",
                    t.name, t.shape, p.shape
                )));
            }
            p.value.copy_from_slice(&t.data);
        }
        for (name, buf) in model.buffers_mut() {
            let t = self.get(&format!("{prefix}.{name}"))?;
            if t.data.len() != buf.len() {
                return Err(Error::Checkpoint(format!("buffer `{}` has wrong length", t.name)));
            }
            buf.copy_from_slice(&t.data);
        }
        Ok(())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a `{kind}` checkpoint, found `{}`",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION,
                found: header.format_version,
            });
        }
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Dense;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut layer = Dense::new(5, 3, &mut rng);
        let mut ck = Checkpoint::new("dense", serde_json::json!({"in": 5}));
        ck.push_model("layer", &mut layer).unwrap();
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        let mut other = Dense::zeros(5, 3);
        back.load_model("layer", &mut other).unwrap();
        assert_eq!(other.weight, layer.weight);
        assert_eq!(other.bias, layer.bias);
    }

    #[test]
    fn wrong_version_is_explicit() {
        let text = r#"{"format_version": 99, "kind": "x", "config": null, "tensors": []}"#;
        assert!(matches!(
            Checkpoint::from_json(text),
            Err(Error::VersionMismatch { found: 99, .. })
        ));
        assert!(matches!(
            Checkpoint::from_json("{not json"),
            Err(Error::Checkpoint(_))
        ));
    }
}
