use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GradError, Tensor};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.values_mut()
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            parameters: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), StoredTensor { shape: t.shape().to_vec(), values: t.values().to_vec() }))
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, GradError> {
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(GradError::Checkpoint(format!("unsupported format_version {}", ckpt.format_version)));
        }
        let mut out = Self::new();
        for (name, stored) in ckpt.parameters {
            let t = Tensor::new(stored.shape, stored.values)
                .map_err(|e| GradError::Checkpoint(format!("parameter `{name}`: {e}")))?;
            out.insert(name, t);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// On-disk parameter snapshot: `{"format_version": 1, "parameters": {name: {shape, values}}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub parameters: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GradError> {
        serde_json::from_str(text).map_err(|e| GradError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, GradError> {
        let text = std::fs::read_to_string(path).map_err(|e| GradError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut p = ParamSet::new();
        p.insert("b", Tensor::vector(vec![0.1, -1.0 / 3.0, 1e-300]));
        p.insert("a", Tensor::from_rows(&[vec![std::f64::consts::PI, 2.0], vec![-0.0, 5e-17]]));
        let json = p.to_checkpoint().to_json();
        assert!(json.contains("\"format_version\":1"));
        let back = ParamSet::from_checkpoint(Checkpoint::from_json(&json).unwrap()).unwrap();
        for ((_, x), (_, y)) in p.iter().zip(back.iter()) {
            let xb: Vec<u64> = x.values().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let json = r#"{"format_version":2,"parameters":{}}"#;
        let ckpt = Checkpoint::from_json(json).unwrap();
        assert!(ParamSet::from_checkpoint(ckpt).is_err());
    }
}
