//! Model file layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size        field
//! 0       8           magic "AISRLMLP"
//! 8       4   u32     format version (1)
//! 12      8   u64     feature schema fingerprint
//! 20      4   f32     temperature
//! 24      4   u32     number of widths n (layers + 1)
//! 28      4n  u32     widths [input, hidden.., output]
//! ..      per layer:  outputs*inputs f32 weights (row-major), outputs f32 biases
//! ..      4   u32     schema text length s
//! ..      s           schema text (UTF-8, same format as the .schema file)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::mlp::{Dense, MlpModel};
use super::Classifier;
use crate::error::{Error, Result};
use crate::features::FeatureSchema;

const MAGIC: &[u8; 8] = b"AISRLMLP";
const VERSION: u32 = 1;

impl Classifier {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut out = Vec::with_capacity(64 + 4 * m.n_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&m.fingerprint.to_le_bytes());
        out.extend_from_slice(&m.temperature.to_le_bytes());
        let widths = m.widths();
        out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
        for w in &widths {
            out.extend_from_slice(&(*w as u32).to_le_bytes());
        }
        for layer in &m.layers {
            for v in layer.weights.iter().chain(&layer.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let schema = self.schema.to_text();
        out.extend_from_slice(&(schema.len() as u32).to_le_bytes());
        out.extend_from_slice(schema.as_bytes());
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            if bytes.len() < n {
                return Err("truncated".to_string());
            }
            let (head, tail) = bytes.split_at(n);
            bytes = tail;
            Ok(head)
        };
        if take(8)? != MAGIC {
            return Err("bad magic".into());
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let fingerprint = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let temperature = f32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        let n = u32_at(take(4)?) as usize;
        if !(2..=64).contains(&n) {
            return Err(format!("implausible layer count {n}"));
        }
        let widths: Vec<usize> = (0..n).map(|_| take(4).map(|b| u32_at(b) as usize)).collect::<std::result::Result<_, _>>()?;
        let mut layers = Vec::with_capacity(n - 1);
        for w in widths.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let raw = take(4 * outputs * (inputs + 1))?;
            let vals: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            let (weights, bias) = vals.split_at(inputs * outputs);
            layers.push(Dense { inputs, outputs, weights: weights.to_vec(), bias: bias.to_vec() });
        }
        let s = u32_at(take(4)?) as usize;
        let text = std::str::from_utf8(take(s)?).map_err(|e| e.to_string())?;
        let schema = FeatureSchema::from_text(text).map_err(|e| e.to_string())?;
        if !bytes.is_empty() {
            return Err("trailing bytes".into());
        }
        let model = MlpModel { layers, temperature, fingerprint };
        Classifier::new(model, schema).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|msg| Error::ModelFormat { path: path.to_path_buf(), msg })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSchema;

    #[test]
    fn reload_reproduces_forward_bitwise() {
        let schema = FeatureSchema::identity(3);
        let mut model = MlpModel::new(&[schema.input_width(), 8, 8, 4], 11);
        model.fingerprint = schema.fingerprint();
        model.temperature = 1.7;
        let clf = Classifier::new(model, schema).unwrap();
        let back = Classifier::from_bytes(&clf.to_bytes()).unwrap();
        assert_eq!(back, clf);
        let x: Vec<f32> = (0..clf.schema.input_width()).map(|i| (i as f32 * 0.37).sin()).collect();
        let a = clf.model.forward(&x).unwrap();
        let b = back.model.forward(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_corrupt_files() {
        let schema = FeatureSchema::identity(1);
        let mut model = MlpModel::new(&[schema.input_width(), 4, 2], 1);
        model.fingerprint = schema.fingerprint();
        let bytes = Classifier::new(model, schema).unwrap().to_bytes();
        assert!(Classifier::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Classifier::from_bytes(&bad).is_err());
        let mut fp = bytes;
        fp[12] ^= 1;
        assert!(Classifier::from_bytes(&fp).is_err());
    }
}
